#pragma once

#include "hypergrad/common.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hypergrad {

// ---------------------------------------------------------------------------
// Sparse datasets in LIBSVM text format.
// ---------------------------------------------------------------------------

struct SparseEntry {
  std::int64_t index;  // 1-based column id
  double value;
};

/// Row-major sparse design matrix with +/-1 labels. Indices inside a row are
/// strictly increasing and lie in [1, n_features].
struct SparseDataset {
  std::vector<std::vector<SparseEntry>> rows;
  std::vector<double> labels;
  std::size_t n_features = 0;

  std::size_t n_samples() const { return rows.size(); }

  /// Returns X w (one entry per sample).
  Vector multiply(const Vector& w) const;
  /// out += X^T u.
  void add_transpose_multiply(const Vector& u, Vector& out) const;
};

class LibsvmParseError : public std::runtime_error {
 public:
  LibsvmParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::string detail_;
};

/// Parses "label idx:val idx:val ..." lines. Blank lines and anything after
/// '#' are ignored. gzip input is detected by its magic bytes and inflated.
/// Labels are mapped to {-1,+1}: the smaller of two distinct label values
/// becomes -1 (so both {-1,+1} and {0,1} conventions load unchanged).
SparseDataset load_libsvm(std::istream& in);
SparseDataset load_libsvm(const std::string& bytes);
SparseDataset load_libsvm_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Objective oracles.
// ---------------------------------------------------------------------------

enum class ProblemKind { Quadratic, Logistic, SmoothSvm };

std::string to_string(ProblemKind kind);

/// Convex objective with value/gradient oracles and smoothness metadata.
///
///   Quadratic:  f(x) = 1/2 x'Ax - b'x
///   Logistic:   f(w) = (1/m) sum log(1 + exp(-y_i <a_i,w>)) + (lambda/2)|w|^2
///   SmoothSvm:  f(w) = (1/m) sum max(0, 1 - y_i <a_i,w>)^2 + (lambda/2)|w|^2
///
/// Oracles are immutable after construction apart from the call counters,
/// which are atomic so a single oracle can back several concurrent runs.
class ProblemOracle {
 public:
  static ProblemOracle quadratic(Matrix A, Vector b);
  static ProblemOracle logistic(SparseDataset data, double lambda);
  static ProblemOracle smooth_svm(SparseDataset data, double lambda);

  ProblemOracle(ProblemOracle&&) noexcept = default;
  ProblemOracle& operator=(ProblemOracle&&) noexcept = default;

  /// Copy sharing the (immutable) problem data but with fresh counters, so a
  /// run can account for exactly the oracle calls it made.
  ProblemOracle fork() const;

  /// f(x); increments fval_calls.
  double value(const Vector& x) const;
  /// grad f(x); increments grad_calls.
  Vector gradient(const Vector& x) const;

  ProblemKind kind() const { return kind_; }
  Index dim() const { return dim_; }
  double smoothness() const { return smoothness_; }
  double strong_convexity() const { return strong_convexity_; }
  double lambda() const { return lambda_; }

  /// Quadratic only: the Hessian A and linear term b.
  const Matrix& hessian() const;
  const Vector& linear_term() const;
  /// Quadratic with A positive definite: x* = A^{-1} b and f(x*).
  const std::optional<Vector>& minimizer() const { return minimizer_; }
  std::optional<double> optimal_value() const { return optimal_value_; }
  /// Nullptr unless the oracle is a dataset loss.
  const SparseDataset* dataset() const { return data_.get(); }

  std::uint64_t grad_calls() const { return counters_->grad.load(); }
  std::uint64_t fval_calls() const { return counters_->fval.load(); }
  void reset_counters() const;

 private:
  struct Counters {
    std::atomic<std::uint64_t> grad{0};
    std::atomic<std::uint64_t> fval{0};
  };

  ProblemOracle() : counters_(std::make_unique<Counters>()) {}
  static ProblemOracle from_dataset(ProblemKind kind, SparseDataset data, double lambda);
  void check_dim(const Vector& x) const;

  ProblemKind kind_ = ProblemKind::Quadratic;
  Index dim_ = 0;
  double smoothness_ = 0.0;
  double strong_convexity_ = 0.0;
  double lambda_ = 0.0;
  std::shared_ptr<const Matrix> A_;
  std::shared_ptr<const Vector> b_;
  std::shared_ptr<const SparseDataset> data_;
  std::optional<Vector> minimizer_;
  std::optional<double> optimal_value_;
  std::unique_ptr<Counters> counters_;
};

/// Result of power iteration on a symmetric PSD operator.
struct PowerIterationResult {
  double eigenvalue;
  double residual;  // |Av - lambda v| / lambda at exit
  std::size_t iterations;
};

/// Largest eigenvalue of a PSD operator given as a matvec. Stops when the
/// relative residual drops below rel_tol; throws NumericalError after
/// max_iterations with the residual in the message.
PowerIterationResult power_iteration(const std::function<Vector(const Vector&)>& apply,
                                     Index dim, double rel_tol = 1e-8,
                                     std::size_t max_iterations = 200000);

/// Smoothness constant estimated independently of the stored one:
/// lambda_max(A) for quadratics, sigma_max(X)^2/(4m) + lambda for logistic
/// and 2 sigma_max(X)^2/m + lambda for the squared hinge loss.
double smoothness_bound(const ProblemOracle& oracle);

}  // namespace hypergrad
