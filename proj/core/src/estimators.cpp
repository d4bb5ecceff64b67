#include "qhprice/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "qhprice/error.hpp"

namespace qhprice {

namespace {

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

void check_inputs(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) {
    fail(ErrorKind::Data, "design has " + std::to_string(x.rows()) + " rows but response has " +
                              std::to_string(y.size()));
  }
  if (x.rows() == 0) fail(ErrorKind::Data, "empty design");
  if (!x.allFinite() || !y.allFinite()) fail(ErrorKind::Numerical, "design or response contains non-finite values");
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::Config, "alpha must lie in [0, 1]");
}

}  // namespace

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::NaiveEXAA: return "Naive";
    case ModelKind::LM: return "LM";
    case ModelKind::EN: return "EN";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view text) {
  if (text == "Naive" || text == "NaiveEXAA" || text == "Naive_EXAA") return ModelKind::NaiveEXAA;
  if (text == "LM") return ModelKind::LM;
  if (text == "EN") return ModelKind::EN;
  fail(ErrorKind::Config, "unknown model kind '" + std::string(text) + "'");
}

std::string_view to_string(CvMode m) { return m == CvMode::Contiguous ? "contiguous" : "shuffled"; }

CvMode cv_mode_from_string(std::string_view text) {
  if (text == "contiguous") return CvMode::Contiguous;
  if (text == "shuffled") return CvMode::Shuffled;
  fail(ErrorKind::Config, "unknown cv mode '" + std::string(text) + "'");
}

LambdaGrid LambdaGrid::exponential(double lambda_max, double lambda_min, int count) {
  if (!(lambda_min > 0.0)) fail(ErrorKind::Config, "lambda_min must be > 0");
  if (count < 1) fail(ErrorKind::Config, "lambda grid needs at least one value");
  if (!std::isfinite(lambda_max)) fail(ErrorKind::Numerical, "non-finite lambda_max");
  LambdaGrid grid;
  grid.lambda_min = lambda_min;
  if (lambda_max <= lambda_min) {
    grid.lambda_max = lambda_min;
    grid.degenerate = true;
    grid.values = {lambda_min};
    return grid;
  }
  grid.lambda_max = lambda_max;
  grid.values.resize(static_cast<std::size_t>(count));
  if (count == 1) {
    grid.values[0] = lambda_max;
    return grid;
  }
  const double hi = std::log(lambda_max);
  const double lo = std::log(lambda_min);
  for (int i = 0; i < count; ++i) {
    grid.values[static_cast<std::size_t>(i)] = std::exp(hi + (lo - hi) * i / (count - 1));
  }
  grid.values.front() = lambda_max;
  grid.values.back() = lambda_min;
  return grid;
}

double lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha) {
  check_inputs(x, y);
  if (!(alpha > 0.0)) fail(ErrorKind::Config, "lambda_max is undefined for alpha = 0");
  check_alpha(alpha);
  if (x.cols() == 0) return 0.0;
  return (x.transpose() * y).cwiseAbs().maxCoeff() / (static_cast<double>(x.rows()) * alpha);
}

double en_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                    double lambda, double alpha) {
  const double n = static_cast<double>(x.rows());
  const double rss = (y - x * beta).squaredNorm();
  return rss / (2.0 * n) + lambda * ((1.0 - alpha) / 2.0 * beta.squaredNorm() + alpha * beta.lpNorm<1>());
}

double kkt_violation(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                     double lambda, double alpha) {
  const double n = static_cast<double>(x.rows());
  const Eigen::VectorXd grad = x.transpose() * (y - x * beta) / n;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double b = beta(j);
    double v;
    if (b != 0.0) {
      v = std::abs(grad(j) - lambda * ((1.0 - alpha) * b + alpha * (b > 0.0 ? 1.0 : -1.0)));
    } else {
      v = std::max(0.0, std::abs(grad(j)) - lambda * alpha);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

CoordinateDescent::CoordinateDescent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const EnOptions& options)
    : options_(options) {
  check_inputs(x, y);
  check_alpha(options.alpha);
  const double n = static_cast<double>(x.rows());
  gram_ = x.transpose() * x / n;
  xty_ = x.transpose() * y / n;
  beta_ = Eigen::VectorXd::Zero(x.cols());
  g_ = Eigen::VectorXd::Zero(x.cols());
}

CoordinateDescent CoordinateDescent::from_gram(Eigen::MatrixXd gram, Eigen::VectorXd xty, const EnOptions& options) {
  check_alpha(options.alpha);
  if (gram.rows() != xty.size() || gram.cols() != xty.size()) fail(ErrorKind::Data, "Gram matrix shape mismatch");
  CoordinateDescent cd;
  cd.gram_ = std::move(gram);
  cd.xty_ = std::move(xty);
  cd.options_ = options;
  cd.beta_ = Eigen::VectorXd::Zero(cd.xty_.size());
  cd.g_ = Eigen::VectorXd::Zero(cd.xty_.size());
  return cd;
}

double CoordinateDescent::objective(double l1, double l2) const {
  return 0.5 * beta_.dot(g_) - xty_.dot(beta_) + l1 * beta_.lpNorm<1>() + 0.5 * l2 * beta_.squaredNorm();
}

bool CoordinateDescent::face_step(const std::vector<signed char>& signs, double l1, double l2) {
  active_.clear();
  for (Eigen::Index j = 0; j < beta_.size(); ++j) {
    if (signs[static_cast<std::size_t>(j)] != 0) active_.push_back(j);
  }
  if (active_.empty()) return false;
  const auto k = static_cast<Eigen::Index>(active_.size());
  face_m_.resize(k, k);
  face_rhs_.resize(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const Eigen::Index j = active_[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < k; ++b) face_m_(a, b) = gram_(j, active_[static_cast<std::size_t>(b)]);
    face_m_(a, a) += l2;
    face_rhs_(a) = xty_(j) - l1 * signs[static_cast<std::size_t>(j)];
  }
  face_llt_.compute(face_m_);
  if (face_llt_.info() != Eigen::Success) return false;
  face_sol_ = face_llt_.solve(face_rhs_);
  // Step towards the face minimizer, stopping where the first coefficient
  // reaches zero; the objective is the quadratic all along that segment.
  double t = 1.0;
  Eigen::Index blocking = -1;
  for (Eigen::Index a = 0; a < k; ++a) {
    const double b = beta_(active_[static_cast<std::size_t>(a)]);
    if (face_sol_(a) * b > 0.0) continue;
    const double cross = b / (b - face_sol_(a));
    if (cross < t) {
      t = cross;
      blocking = a;
    }
  }
  if (!(t > 0.0)) return false;
  const double before = objective(l1, l2);
  face_old_.resize(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const Eigen::Index j = active_[static_cast<std::size_t>(a)];
    face_old_(a) = beta_(j);
    const double target = a == blocking ? 0.0 : beta_(j) + t * (face_sol_(a) - beta_(j));
    g_.noalias() += gram_.col(j) * (target - beta_(j));
    beta_(j) = target;
  }
  if (objective(l1, l2) > before) {
    for (Eigen::Index a = 0; a < k; ++a) {
      const Eigen::Index j = active_[static_cast<std::size_t>(a)];
      g_.noalias() += gram_.col(j) * (face_old_(a) - beta_(j));
      beta_(j) = face_old_(a);
    }
    return false;
  }
  return true;
}

// Cyclic sweeps; once a sweep leaves the sign pattern unchanged the smooth
// problem on that face is solved directly and the next sweep checks it.
const Eigen::VectorXd& CoordinateDescent::solve(double lambda) {
  if (!(lambda >= 0.0)) fail(ErrorKind::Config, "lambda must be >= 0");
  const double l1 = lambda * options_.alpha;
  const double l2 = lambda * (1.0 - options_.alpha);
  const Eigen::Index p = beta_.size();
  const auto sign_of = [](double b) -> signed char { return b > 0.0 ? 1 : (b < 0.0 ? -1 : 0); };
  std::vector<signed char> signs(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) signs[static_cast<std::size_t>(j)] = sign_of(beta_(j));
  // a warm start usually sits on the right face already
  if (face_step(signs, l1, l2)) {
    for (Eigen::Index j = 0; j < p; ++j) signs[static_cast<std::size_t>(j)] = sign_of(beta_(j));
  }
  double max_change = 0.0;
  for (long sweep = 1; sweep <= options_.max_sweeps; ++sweep) {
    max_change = 0.0;
    bool same_face = true;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double gjj = gram_(j, j);
      const double denom = gjj + l2;
      const double old = beta_(j);
      double updated = 0.0;
      if (denom > 0.0) updated = soft_threshold(xty_(j) - g_(j) + gjj * old, l1) / denom;
      const double delta = updated - old;
      if (delta != 0.0) {
        beta_(j) = updated;
        g_.noalias() += gram_.col(j) * delta;
        max_change = std::max(max_change, std::abs(delta));
      }
      const signed char s = sign_of(updated);
      if (s != signs[static_cast<std::size_t>(j)]) {
        same_face = false;
        signs[static_cast<std::size_t>(j)] = s;
      }
    }
    if (max_change < options_.tolerance) {
      last_sweeps_ = sweep;
      return beta_;
    }
    if (same_face) face_step(signs, l1, l2);
  }
  std::ostringstream msg;
  msg << "coordinate descent did not converge at lambda=" << lambda << " after " << options_.max_sweeps
      << " sweeps (last max change " << max_change << ", " << p << " features)";
  fail(ErrorKind::Numerical, msg.str());
}

std::vector<Eigen::VectorXd> fit_en_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                         const LambdaGrid& grid, const EnOptions& options) {
  CoordinateDescent cd(x, y, options);
  std::vector<Eigen::VectorXd> path;
  path.reserve(grid.values.size());
  for (double lambda : grid.values) path.push_back(cd.solve(lambda));
  return path;
}

Eigen::VectorXd fit_en(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda, const EnOptions& options) {
  CoordinateDescent cd(x, y, options);
  return cd.solve(lambda);
}

OlsResult solve_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  check_inputs(x, y);
  OlsResult out;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
  out.beta = cod.solve(y);
  out.rank = static_cast<int>(cod.rank());
  out.rank_deficient = out.rank < x.cols();
  return out;
}

std::vector<int> fold_assignment(int n, int folds, CvMode mode, std::uint64_t seed) {
  if (folds < 2) fail(ErrorKind::Config, "cross-validation needs at least 2 folds");
  if (n < folds) {
    fail(ErrorKind::Data, "cross-validation with " + std::to_string(folds) + " folds needs at least " +
                              std::to_string(folds) + " rows, got " + std::to_string(n));
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (mode == CvMode::Shuffled) {
    std::mt19937_64 rng(seed);
    // Fisher-Yates with an explicit draw so the permutation does not depend on
    // the standard library's shuffle implementation.
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
  }
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (int pos = 0; pos < n; ++pos) {
    const int f = static_cast<int>(static_cast<long>(pos) * folds / n);
    fold[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = f;
  }
  return fold;
}

CvResult cross_validate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LambdaGrid& grid,
                        const EnOptions& options) {
  check_inputs(x, y);
  if (grid.values.empty()) fail(ErrorKind::Config, "empty lambda grid");
  const int n = static_cast<int>(x.rows());
  const std::vector<int> fold = fold_assignment(n, options.folds, options.cv_mode, options.seed);

  CvResult out;
  out.lambdas = grid.values;
  out.curve.assign(grid.values.size(), 0.0);
  const Eigen::MatrixXd gram_all = x.transpose() * x;
  const Eigen::VectorXd xty_all = x.transpose() * y;

  for (int f = 0; f < options.folds; ++f) {
    std::vector<Eigen::Index> held;
    for (int i = 0; i < n; ++i) {
      if (fold[static_cast<std::size_t>(i)] == f) held.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(held.size());
    Eigen::MatrixXd xh(m, x.cols());
    Eigen::VectorXd yh(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      xh.row(r) = x.row(held[static_cast<std::size_t>(r)]);
      yh(r) = y(held[static_cast<std::size_t>(r)]);
    }
    const double n_train = static_cast<double>(n - m);
    if (n_train < 1) fail(ErrorKind::Data, "cross-validation fold leaves no training rows");
    auto cd = CoordinateDescent::from_gram((gram_all - xh.transpose() * xh) / n_train, (xty_all - xh.transpose() * yh) / n_train,
                         options);
    for (std::size_t k = 0; k < grid.values.size(); ++k) {
      const Eigen::VectorXd& beta = cd.solve(grid.values[k]);
      out.curve[k] += (yh - xh * beta).squaredNorm() / static_cast<double>(m);
    }
  }
  for (double& v : out.curve) v /= options.folds;

  // Strict comparison keeps the earliest, i.e. largest, lambda on ties.
  std::size_t best = 0;
  for (std::size_t k = 1; k < out.curve.size(); ++k) {
    if (out.curve[k] < out.curve[best]) best = k;
  }
  out.best_index = best;
  out.lambda_star = grid.values[best];
  return out;
}

int FittedModel::nonzero() const {
  return static_cast<int>((coefficients.array() != 0.0).count());
}

nlohmann::json FittedModel::to_json() const {
  nlohmann::json coefs = nlohmann::json::object();
  for (std::size_t j = 0; j < features.size(); ++j) {
    const double b = coefficients(static_cast<Eigen::Index>(j));
    if (b != 0.0) coefs[features[j]] = b;
  }
  nlohmann::json j = {{"kind", std::string(to_string(kind))},
                      {"qh", qh},
                      {"features", features},
                      {"coefficients", std::move(coefs)},
                      {"warnings", warnings}};
  if (kind == ModelKind::EN) {
    j["alpha"] = alpha;
    j["lambda"] = lambda;
    nlohmann::json cv = {{"grid_size", lambda_grid.size()}};
    if (!lambda_grid.empty()) {
      cv["lambda_max"] = lambda_grid.front();
      cv["lambda_min"] = lambda_grid.back();
    }
    if (!cv_curve.empty()) {
      const auto it = std::min_element(cv_curve.begin(), cv_curve.end());
      cv["min_mse"] = *it;
      cv["argmin"] = std::distance(cv_curve.begin(), it);
      cv["mse_at_lambda_max"] = cv_curve.front();
    }
    j["cv"] = std::move(cv);
  }
  return j;
}

FittedModel FittedModel::from_json(const nlohmann::json& j) {
  try {
    FittedModel m;
    m.kind = model_kind_from_string(j.at("kind").get<std::string>());
    m.qh = j.at("qh").get<int>();
    m.features = j.at("features").get<std::vector<std::string>>();
    m.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.features.size()));
    const auto& coefs = j.at("coefficients");
    for (std::size_t k = 0; k < m.features.size(); ++k) {
      const auto it = coefs.find(m.features[k]);
      if (it != coefs.end()) m.coefficients(static_cast<Eigen::Index>(k)) = it->get<double>();
    }
    if (j.contains("warnings")) m.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (m.kind == ModelKind::EN) {
      m.alpha = j.at("alpha").get<double>();
      m.lambda = j.at("lambda").get<double>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed model JSON: ") + e.what());
  }
}

FittedModel fit_ols(const DesignMatrix& design) {
  FittedModel m;
  m.qh = design.qh;
  m.kind = ModelKind::LM;
  m.features = design.names();
  const OlsResult r = solve_ols(design.x, design.y);
  m.coefficients = r.beta;
  if (r.rank_deficient) {
    m.warnings.push_back("rank-deficient design (rank " + std::to_string(r.rank) + " of " +
                         std::to_string(design.x.cols()) + "); minimum-norm solution");
  }
  return m;
}

FittedModel fit_en_model(const DesignMatrix& design, const EnOptions& options) {
  FittedModel m;
  m.qh = design.qh;
  m.kind = ModelKind::EN;
  m.alpha = options.alpha;
  m.features = design.names();
  const double lmax = lambda_max(design.x, design.y, options.alpha);
  const LambdaGrid grid = LambdaGrid::exponential(lmax, options.lambda_min, options.grid_size);
  if (grid.degenerate) {
    m.warnings.push_back("lambda_max " + std::to_string(lmax) + " <= lambda_min; single-value grid");
  }
  const CvResult cv = cross_validate(design.x, design.y, grid, options);
  // Warm-started path down to lambda*, so the coefficients equal the path solution.
  CoordinateDescent cd(design.x, design.y, options);
  for (std::size_t k = 0; k <= cv.best_index; ++k) cd.solve(grid.values[k]);
  m.coefficients = cd.beta();
  m.lambda = cv.lambda_star;
  m.lambda_grid = grid.values;
  m.cv_curve = cv.curve;
  return m;
}

FittedModel fit_naive(int qh) {
  FittedModel m;
  m.qh = qh;
  m.kind = ModelKind::NaiveEXAA;
  return m;
}

double naive_exaa(const Dataset& dataset, Date day, int qh) {
  if (!dataset.has(Market::ExaaQh)) fail(ErrorKind::Data, "naive forecast requires series EXAA_QH");
  const QhSeries& exaa = dataset.series(Market::ExaaQh);
  const auto t = exaa.index_of(day);
  if (!t || exaa.day_missing(*t)) fail(ErrorKind::Data, "no EXAA_QH prices for " + format_date(day));
  return exaa.value(*t, qh - 1);
}

double predict(const FittedModel& model, const std::vector<std::string>& names, const Eigen::VectorXd& row) {
  if (names != model.features) {
    fail(ErrorKind::Data, "feature names do not match the fitted model for qh " + std::to_string(model.qh));
  }
  return predict(model, row);
}

double predict(const FittedModel& model, const Eigen::VectorXd& row) {
  if (model.kind == ModelKind::NaiveEXAA) fail(ErrorKind::Data, "naive model has no coefficients");
  if (row.size() != model.coefficients.size()) {
    fail(ErrorKind::Data, "feature row has " + std::to_string(row.size()) + " values, model expects " +
                              std::to_string(model.coefficients.size()));
  }
  return model.coefficients.dot(row);
}

}  // namespace qhprice
