//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_GP_H_
#define MOLBBO_GP_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace molbbo {

enum class KernelFamily { Rbf, DotProduct };

std::string to_string(KernelFamily f);
KernelFamily kernel_family_from_string(const std::string &s);

// A positive hyperparameter searched in log space within [lower, upper].
// lower == upper pins the value (which may then be 0).
struct Hyperparameter {
  double value;
  double lower;
  double upper;

  bool fixed() const { return lower == upper; }
};

struct KernelSpec {
  KernelFamily family = KernelFamily::DotProduct;
  Hyperparameter signal_variance{1.0, 1e-5, 1e5};
  Hyperparameter length_scale{1.0, 1e-5, 1e5}; // RBF only
  Hyperparameter offset{1.0, 1e-5, 1e5};       // DotProduct only
  // When noise_relative_to_target_variance is set, value and bounds are
  // multiples of the (centered) training target variance.
  Hyperparameter noise_variance{1e-3, 1e-8, 1e-1};
  bool noise_relative_to_target_variance = true;

  // Throws std::invalid_argument on inconsistent values or bounds.
  void validate() const;
};

class GpError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// k(x, x'). RBF: s * exp(-|x - x'|^2 / (2 l^2)); DotProduct: s * (o + x.x').
double kernel_eval(const KernelSpec &spec, const Eigen::Ref<const Eigen::VectorXd> &x,
                   const Eigen::Ref<const Eigen::VectorXd> &xp);

Eigen::MatrixXd kernel_matrix(const KernelSpec &spec, const Eigen::MatrixXd &a,
                              const Eigen::MatrixXd &b);

struct Prediction {
  double mean = 0.0;
  double stddev = 0.0;
};

struct FitOptions {
  int random_starts = 4; // in addition to the spec's own values
  int max_iterations = 200;
  bool center_targets = true;
  bool optimize = true;
  std::uint64_t seed = 0;
};

struct FitReport {
  std::vector<double> initial_lml; // one per start
  double final_lml = 0.0;
  double jitter = 0.0;
  int starts = 0;
};

/// Log marginal likelihood of centered targets y under spec, where the
/// noise variance in spec is absolute. Returns -inf when the covariance is
/// not positive definite even after jitter.
double log_marginal_likelihood(const KernelSpec &spec, const Eigen::MatrixXd &X,
                               const Eigen::VectorXd &y);

/// Gaussian process posterior conditioned on training data with fitted
/// hyperparameters. Immutable after fit(); predict() is thread-safe.
class GpModel {
public:
  /// Maximizes the log marginal likelihood over the free hyperparameters
  /// of spec (multi-start Nelder-Mead in log space), then conditions.
  /// X holds one training input per row.
  static GpModel fit(const Eigen::MatrixXd &X, const std::vector<double> &y,
                     const KernelSpec &spec, const FitOptions &options = {});

  Prediction predict(const Eigen::Ref<const Eigen::VectorXd> &x) const;

  // Posterior latent variance before flooring at zero.
  double raw_variance(const Eigen::Ref<const Eigen::VectorXd> &x) const;

  // Spec with fitted, absolute hyperparameter values.
  const KernelSpec &spec() const { return spec_; }
  const FitReport &report() const { return report_; }
  double target_mean() const { return target_mean_; }
  int num_training() const { return static_cast<int>(X_.rows()); }
  int input_dim() const { return static_cast<int>(X_.cols()); }
  const Eigen::MatrixXd &training_inputs() const { return X_; }
  const Eigen::VectorXd &centered_targets() const { return y_; }
  const Eigen::MatrixXd &cholesky_factor() const { return L_; }
  const Eigen::VectorXd &alpha() const { return alpha_; }

private:
  GpModel() = default;
  void condition();

  KernelSpec spec_;
  FitReport report_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  double target_mean_ = 0.0;
  Eigen::MatrixXd L_;
  Eigen::VectorXd alpha_;

  // DotProduct shortcut: k* = s * Phi * phi(x) with phi(x) = (sqrt(o), x),
  // so the mean needs Phi^T alpha and the variance Phi^T Kn^-1 Phi.
  Eigen::VectorXd feature_weights_;
  Eigen::MatrixXd feature_precision_;
};

/// Scale applied to raw shingle counts before they enter the kernel.
double feature_scale(KernelFamily family, int dimension);

} // namespace molbbo

#endif // MOLBBO_GP_H_
