//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/gp.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "molbbo/nelder_mead.h"

namespace molbbo {

std::string to_string(KernelFamily f) {
  return f == KernelFamily::Rbf ? "rbf" : "dot_product";
}

KernelFamily kernel_family_from_string(const std::string &s) {
  if (s == "rbf")
    return KernelFamily::Rbf;
  if (s == "dot_product")
    return KernelFamily::DotProduct;
  throw std::invalid_argument("unknown kernel family '" + s +
                              "' (expected rbf or dot_product)");
}

namespace {

void check_hyperparameter(const Hyperparameter &h, const char *name,
                          bool allow_zero) {
  const std::string n(name);
  if (!(h.lower <= h.upper))
    throw std::invalid_argument(n + ": lower bound above upper bound");
  if (h.value < h.lower || h.value > h.upper)
    throw std::invalid_argument(n + ": value outside its bounds");
  if (h.fixed()) {
    if (h.value < 0 || (!allow_zero && h.value == 0))
      throw std::invalid_argument(n + ": invalid fixed value");
  } else if (!(h.lower > 0)) {
    throw std::invalid_argument(n + ": free hyperparameters need bounds > 0");
  }
}

enum class Param { Signal, LengthScale, Offset, Noise };

Hyperparameter &param(KernelSpec &spec, Param p) {
  switch (p) {
  case Param::Signal:
    return spec.signal_variance;
  case Param::LengthScale:
    return spec.length_scale;
  case Param::Offset:
    return spec.offset;
  case Param::Noise:
    break;
  }
  return spec.noise_variance;
}

// exp() of a clamped log can land one ulp outside the bounds.
double from_log(const Hyperparameter &h, double log_value) {
  return std::clamp(std::exp(log_value), h.lower, h.upper);
}

constexpr double kLog2Pi = 1.8378770664093453; // log(2 pi)

// Cholesky of K + jitter*I; escalates jitter from 0 then
// 1e-10 * trace/n up to 1e-4 * trace/n.
std::optional<Eigen::LLT<Eigen::MatrixXd>> robust_cholesky(
    const Eigen::MatrixXd &K, double *jitter_used) {
  const Eigen::Index n = K.rows();
  const double scale = std::max(K.trace() / static_cast<double>(n),
                                std::numeric_limits<double>::min());
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 7; ++attempt) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success &&
        (llt.matrixLLT().diagonal().array() > 0).all()) {
      if (jitter_used)
        *jitter_used = jitter;
      return llt;
    }
    jitter = attempt == 0 ? 1e-10 * scale : jitter * 10.0;
  }
  return std::nullopt;
}

double generic_lml(const KernelSpec &spec, const Eigen::MatrixXd &X,
                   const Eigen::VectorXd &y) {
  Eigen::MatrixXd K = kernel_matrix(spec, X, X);
  K.diagonal().array() += spec.noise_variance.value;
  auto llt = robust_cholesky(K, nullptr);
  if (!llt)
    return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = llt->solve(y);
  const double log_det =
      2.0 * llt->matrixLLT().diagonal().array().log().sum();
  return -0.5 * y.dot(alpha) - 0.5 * log_det -
         0.5 * static_cast<double>(y.size()) * kLog2Pi;
}

// LML for the dot-product kernel in O(n) per evaluation, using the
// eigendecomposition of the Gram matrix X X^T and a rank-one update for the
// offset term: Kn = s * (o 11^T + U L U^T) + b I.
class DotProductLml {
public:
  DotProductLml(const Eigen::MatrixXd &X, const Eigen::VectorXd &y)
      : n_(static_cast<double>(X.rows())) {
    const Eigen::MatrixXd G = X * X.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    eigenvalues_ = eig.eigenvalues().cwiseMax(0.0);
    gram_trace_ = G.trace();
    qy_ = eig.eigenvectors().transpose() * y;
    q1_ = eig.eigenvectors().transpose() * Eigen::VectorXd::Ones(X.rows());
  }

  double operator()(double s, double o, double b) const {
    const double trace_scale = (s * (o * n_ + gram_trace_) + n_ * b) / n_;
    double jitter = 0.0;
    Eigen::ArrayXd d = s * eigenvalues_.array() + b;
    if (d.minCoeff() <= 0.0) {
      jitter = 1e-10 * std::max(trace_scale, std::numeric_limits<double>::min());
      d += jitter;
    }
    const double yay = (qy_.array().square() / d).sum();
    const double uau = (q1_.array().square() / d).sum();
    const double uay = (q1_.array() * qy_.array() / d).sum();
    const double gamma = s * o;
    const double denom = 1.0 + gamma * uau;
    const double quad = yay - gamma * uay * uay / denom;
    const double log_det = d.log().sum() + std::log(denom);
    const double lml = -0.5 * quad - 0.5 * log_det - 0.5 * n_ * kLog2Pi;
    return std::isfinite(lml) ? lml : -std::numeric_limits<double>::infinity();
  }

private:
  double n_;
  double gram_trace_ = 0.0;
  Eigen::VectorXd eigenvalues_;
  Eigen::VectorXd qy_;
  Eigen::VectorXd q1_;
};

} // namespace

void KernelSpec::validate() const {
  check_hyperparameter(signal_variance, "signal_variance", false);
  check_hyperparameter(noise_variance, "noise_variance", true);
  if (family == KernelFamily::Rbf)
    check_hyperparameter(length_scale, "length_scale", false);
  else
    check_hyperparameter(offset, "offset", true);
}

double kernel_eval(const KernelSpec &spec,
                   const Eigen::Ref<const Eigen::VectorXd> &x,
                   const Eigen::Ref<const Eigen::VectorXd> &xp) {
  if (x.size() != xp.size())
    throw std::invalid_argument("kernel_eval: dimension mismatch (" +
                                std::to_string(x.size()) + " vs " +
                                std::to_string(xp.size()) + ")");
  const double s = spec.signal_variance.value;
  if (spec.family == KernelFamily::Rbf) {
    const double l = spec.length_scale.value;
    return s * std::exp(-(x - xp).squaredNorm() / (2.0 * l * l));
  }
  return s * (spec.offset.value + x.dot(xp));
}

Eigen::MatrixXd kernel_matrix(const KernelSpec &spec, const Eigen::MatrixXd &a,
                              const Eigen::MatrixXd &b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("kernel_matrix: dimension mismatch");
  const double s = spec.signal_variance.value;
  if (spec.family == KernelFamily::DotProduct) {
    Eigen::MatrixXd K = a * b.transpose();
    K.array() += spec.offset.value;
    return s * K;
  }
  const double l = spec.length_scale.value;
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * a * b.transpose();
  d2.colwise() += na;
  d2.rowwise() += nb.transpose();
  return s * (-(d2.cwiseMax(0.0)) / (2.0 * l * l)).array().exp().matrix();
}

double log_marginal_likelihood(const KernelSpec &spec, const Eigen::MatrixXd &X,
                               const Eigen::VectorXd &y) {
  return generic_lml(spec, X, y);
}

double feature_scale(KernelFamily family, int dimension) {
  return family == KernelFamily::Rbf ? 1.0 / std::sqrt(double(dimension)) : 1.0;
}

GpModel GpModel::fit(const Eigen::MatrixXd &X, const std::vector<double> &y,
                     const KernelSpec &spec, const FitOptions &options) {
  spec.validate();
  if (X.rows() < 1)
    throw std::invalid_argument("GP fit needs at least one training point");
  if (static_cast<std::size_t>(X.rows()) != y.size())
    throw std::invalid_argument("GP fit: inputs and targets differ in length");

  GpModel m;
  m.X_ = X;
  const Eigen::Index n = X.rows();
  m.y_ = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  m.target_mean_ = options.center_targets ? m.y_.mean() : 0.0;
  m.y_.array() -= m.target_mean_;

  m.spec_ = spec;
  if (spec.noise_relative_to_target_variance) {
    const double var = m.y_.squaredNorm() / static_cast<double>(n);
    const double scale = var > 0 ? var : 1.0;
    m.spec_.noise_variance.value *= scale;
    m.spec_.noise_variance.lower *= scale;
    m.spec_.noise_variance.upper *= scale;
    m.spec_.noise_relative_to_target_variance = false;
  }

  std::vector<Param> free;
  for (Param p : {Param::Signal, Param::LengthScale, Param::Offset,
                  Param::Noise}) {
    const bool used = p == Param::Signal || p == Param::Noise ||
                      (p == Param::LengthScale) ==
                          (m.spec_.family == KernelFamily::Rbf);
    if (used && !param(m.spec_, p).fixed())
      free.push_back(p);
  }

  std::optional<DotProductLml> fast;
  if (m.spec_.family == KernelFamily::DotProduct)
    fast.emplace(m.X_, m.y_);

  KernelSpec work = m.spec_;
  auto lml_at = [&](const std::vector<double> &logs) {
    for (std::size_t i = 0; i < free.size(); ++i)
      param(work, free[i]).value = from_log(param(work, free[i]), logs[i]);
    if (fast)
      return (*fast)(work.signal_variance.value, work.offset.value,
                     work.noise_variance.value);
    return generic_lml(work, m.X_, m.y_);
  };

  std::vector<double> lower, upper, initial;
  for (Param p : free) {
    const Hyperparameter &h = param(m.spec_, p);
    lower.push_back(std::log(h.lower));
    upper.push_back(std::log(h.upper));
    initial.push_back(std::log(h.value));
  }

  std::vector<std::vector<double>> starts{initial};
  if (options.optimize && !free.empty()) {
    std::mt19937_64 rng(options.seed);
    for (int r = 0; r < options.random_starts; ++r) {
      std::vector<double> s(free.size());
      for (std::size_t i = 0; i < free.size(); ++i)
        s[i] = std::uniform_real_distribution<double>(lower[i], upper[i])(rng);
      starts.push_back(std::move(s));
    }
  }

  std::vector<double> best_x = initial;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (const auto &start : starts) {
    const double init = lml_at(start);
    m.report_.initial_lml.push_back(init);
    if (!options.optimize || free.empty()) {
      best_lml = init;
      break;
    }
    NelderMeadOptions nm;
    nm.max_iterations = options.max_iterations;
    const NelderMeadResult res =
        nelder_mead_maximize(lml_at, start, lower, upper, nm);
    if (res.value > best_lml || best_lml == -std::numeric_limits<double>::infinity()) {
      best_lml = res.value;
      best_x = res.x;
    }
  }
  m.report_.starts = static_cast<int>(starts.size());
  for (std::size_t i = 0; i < free.size(); ++i)
    param(m.spec_, free[i]).value = from_log(param(m.spec_, free[i]), best_x[i]);
  m.report_.final_lml = best_lml;

  m.condition();
  return m;
}

void GpModel::condition() {
  Eigen::MatrixXd K = kernel_matrix(spec_, X_, X_);
  K.diagonal().array() += spec_.noise_variance.value;
  auto llt = robust_cholesky(K, &report_.jitter);
  if (!llt)
    throw GpError("Cholesky factorization failed even with maximal jitter; "
                  "training data is degenerate for this kernel");
  L_ = llt->matrixL();
  alpha_ = llt->solve(y_);

  if (spec_.family == KernelFamily::DotProduct) {
    const Eigen::Index n = X_.rows(), p = X_.cols();
    Eigen::MatrixXd phi(n, p + 1);
    phi.col(0).setConstant(std::sqrt(spec_.offset.value));
    phi.rightCols(p) = X_;
    feature_weights_ = phi.transpose() * alpha_;
    const Eigen::MatrixXd B = L_.triangularView<Eigen::Lower>().solve(phi);
    feature_precision_ = B.transpose() * B;
  }
}

double GpModel::raw_variance(const Eigen::Ref<const Eigen::VectorXd> &x) const {
  if (x.size() != X_.cols())
    throw std::invalid_argument("predict: dimension mismatch (" +
                                std::to_string(x.size()) + " vs " +
                                std::to_string(X_.cols()) + ")");
  const double s = spec_.signal_variance.value;
  if (spec_.family == KernelFamily::DotProduct) {
    const double o = spec_.offset.value;
    const double prior = s * (o + x.squaredNorm());
    // phi = (sqrt(o), x) is sparse for count vectors.
    std::vector<std::pair<Eigen::Index, double>> nz;
    if (o > 0)
      nz.emplace_back(0, std::sqrt(o));
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (x[i] != 0.0)
        nz.emplace_back(i + 1, x[i]);
    double quad = 0.0;
    for (const auto &[i, vi] : nz)
      for (const auto &[j, vj] : nz)
        quad += vi * feature_precision_(i, j) * vj;
    return prior - s * s * quad;
  }
  Eigen::VectorXd k(X_.rows());
  for (Eigen::Index i = 0; i < X_.rows(); ++i)
    k[i] = kernel_eval(spec_, X_.row(i).transpose(), x);
  const Eigen::VectorXd v = L_.triangularView<Eigen::Lower>().solve(k);
  return kernel_eval(spec_, x, x) - v.squaredNorm();
}

Prediction GpModel::predict(const Eigen::Ref<const Eigen::VectorXd> &x) const {
  const double var = raw_variance(x);
  double mean;
  if (spec_.family == KernelFamily::DotProduct) {
    double dot = std::sqrt(spec_.offset.value) * feature_weights_[0];
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (x[i] != 0.0)
        dot += x[i] * feature_weights_[i + 1];
    mean = spec_.signal_variance.value * dot;
  } else {
    Eigen::VectorXd k(X_.rows());
    for (Eigen::Index i = 0; i < X_.rows(); ++i)
      k[i] = kernel_eval(spec_, X_.row(i).transpose(), x);
    mean = k.dot(alpha_);
  }
  return {mean + target_mean_, std::sqrt(std::max(var, 0.0))};
}

} // namespace molbbo
