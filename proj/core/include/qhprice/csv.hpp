#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qhprice::csv {

/// Splits one CSV record on commas. Quoted fields are not supported; none of
/// the formats written or read here need them.
std::vector<std::string_view> split(std::string_view line);

std::string_view trim(std::string_view s);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double value);

/// Parses a decimal number; empty, `NA` and `NaN` yield nullopt.
/// Throws Error(Parse) with `context` on anything else unparsable.
std::optional<double> parse_double(std::string_view text, const std::string& context);

int parse_int(std::string_view text, const std::string& context);

/// Line reader that strips `\r` and a UTF-8 BOM and tracks 1-based numbers.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}
  bool next(std::string& line);
  std::size_t line_number() const { return line_number_; }

 private:
  std::istream& in_;
  std::size_t line_number_ = 0;
};

void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace qhprice::csv
