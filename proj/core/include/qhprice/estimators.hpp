#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qhprice/features.hpp"

namespace qhprice {

enum class ModelKind { NaiveEXAA, LM, EN };
std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view text);

enum class CvMode { Contiguous, Shuffled };
std::string_view to_string(CvMode m);
CvMode cv_mode_from_string(std::string_view text);

inline constexpr double kDefaultAlpha = 0.5;
inline constexpr double kDefaultLambdaMin = 0.001;
inline constexpr int kDefaultGridSize = 1000;

struct LambdaGrid {
  std::vector<double> values;  // descending
  double lambda_max = 0.0;
  double lambda_min = kDefaultLambdaMin;
  /// Set when lambda_max <= lambda_min and the grid collapsed to {lambda_min}.
  bool degenerate = false;

  /// `count` log-equally spaced values from lambda_max down to lambda_min.
  static LambdaGrid exponential(double lambda_max, double lambda_min = kDefaultLambdaMin,
                                int count = kDefaultGridSize);
};

/// max_j |x_j'y| / (n alpha): smallest lambda with an all-zero solution.
double lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha);

/// (1/2n)||y - x b||^2 + lambda [(1 - alpha)/2 ||b||^2 + alpha ||b||_1]
double en_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                    double lambda, double alpha);

/// Largest violation of the stationarity conditions of en_objective at beta.
double kkt_violation(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                     double lambda, double alpha);

struct EnOptions {
  double alpha = kDefaultAlpha;
  double tolerance = 1e-7;
  long max_sweeps = 100000;
  int grid_size = kDefaultGridSize;
  double lambda_min = kDefaultLambdaMin;
  int folds = 10;
  CvMode cv_mode = CvMode::Contiguous;
  std::uint64_t seed = 0;
};

/// Coordinate descent on the Gram matrix G = x'x/n, c = x'y/n.
/// Keeps the current coefficients so successive calls warm-start.
class CoordinateDescent {
 public:
  CoordinateDescent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const EnOptions& options);
  /// From precomputed x'x/n and x'y/n.
  static CoordinateDescent from_gram(Eigen::MatrixXd gram, Eigen::VectorXd xty, const EnOptions& options);

  /// Solves at `lambda` starting from the current coefficients.
  const Eigen::VectorXd& solve(double lambda);
  void reset() { beta_.setZero(); g_.setZero(); }
  const Eigen::VectorXd& beta() const { return beta_; }
  long last_sweeps() const { return last_sweeps_; }

 private:
  CoordinateDescent() = default;
  double objective(double l1, double l2) const;
  bool face_step(const std::vector<signed char>& signs, double l1, double l2);

  Eigen::MatrixXd gram_;
  Eigen::VectorXd xty_;
  Eigen::VectorXd beta_;
  Eigen::VectorXd g_;  // gram_ * beta_
  EnOptions options_;
  long last_sweeps_ = 0;
  // scratch for face_step
  std::vector<Eigen::Index> active_;
  Eigen::MatrixXd face_m_;
  Eigen::VectorXd face_rhs_;
  Eigen::VectorXd face_sol_;
  Eigen::VectorXd face_old_;
  Eigen::LLT<Eigen::MatrixXd> face_llt_;
};

/// Coefficient vectors for every grid value, warm-started in grid order.
std::vector<Eigen::VectorXd> fit_en_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                         const LambdaGrid& grid, const EnOptions& options = {});

/// Single lambda from a cold start.
Eigen::VectorXd fit_en(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                       const EnOptions& options = {});

struct OlsResult {
  Eigen::VectorXd beta;
  int rank = 0;
  bool rank_deficient = false;
};

/// Minimum-norm least squares.
OlsResult solve_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

struct CvResult {
  std::vector<double> lambdas;
  std::vector<double> curve;  // mean held-out MSE per lambda
  std::size_t best_index = 0;
  double lambda_star = 0.0;
};

/// Row -> fold assignment: contiguous blocks in row order, or contiguous blocks
/// of a seeded permutation.
std::vector<int> fold_assignment(int n, int folds, CvMode mode, std::uint64_t seed);

CvResult cross_validate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LambdaGrid& grid,
                        const EnOptions& options = {});

struct FittedModel {
  int qh = 1;
  ModelKind kind = ModelKind::EN;
  std::vector<std::string> features;
  Eigen::VectorXd coefficients;
  double lambda = 0.0;
  double alpha = kDefaultAlpha;
  std::vector<double> lambda_grid;
  std::vector<double> cv_curve;
  std::vector<std::string> warnings;

  int nonzero() const;
  nlohmann::json to_json() const;
  static FittedModel from_json(const nlohmann::json& j);
};

FittedModel fit_ols(const DesignMatrix& design);
/// Grid from the design's lambda_max, CV for lambda*, refit on all rows.
FittedModel fit_en_model(const DesignMatrix& design, const EnOptions& options = {});
/// Placeholder carrying no coefficients; the forecast is the same-day EXAA price.
FittedModel fit_naive(int qh);

/// Naive forecast for (day, 1-based qh): the EXAA price of that slot.
double naive_exaa(const Dataset& dataset, Date day, int qh);

/// Inner product; `names` must match the model's feature list.
double predict(const FittedModel& model, const std::vector<std::string>& names, const Eigen::VectorXd& row);
double predict(const FittedModel& model, const Eigen::VectorXd& row);

}  // namespace qhprice
