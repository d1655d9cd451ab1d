#pragma once

// Nonnegative matrix completion with the exponential concave penalty:
//
//   minimize  1/2 ||P(A - U V)||_F^2 + lambda * sum(1 - exp(-theta |z|))
//   over      U >= 0 (m x t), V >= 0 (t x n)
//
// cast as a DC problem with
//   f = data fit,
//   g = indicator(U, V >= 0) + lambda theta (||U||_1 + ||V||_1),
//   h = lambda theta (||U||_1 + ||V||_1) - penalty,
//   phi = c1 w^2 + c2 w,  w = (||U||_F^2 + ||V||_F^2) / 2.
//
// The flattened point is [vec(U); vec(V)], both column-major.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <memory>

#include "dcae/bregman.hpp"
#include "dcae/data_io.hpp"

namespace dcae::matcomp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct FactorPair {
  MatrixXd U;  // m x t
  MatrixXd V;  // t x n

  std::size_t flat_size() const { return static_cast<std::size_t>(U.size() + V.size()); }

  VectorXd flatten() const;
  static FactorPair unflatten(const VectorXd& x, std::size_t m, std::size_t t, std::size_t n);
};

struct MatcompInstance {
  SparseRatings ratings;
  std::size_t rank = 5;
  double lambda = 0.1;
  double theta = 5.0;
  double c1 = 3.0;
  double c2 = 1.0;
  double L = 1.0;
  double l = 1.0;

  /// lambda = 0.1, theta = 5, c1 = 3, c2 = ||P(A)||_F, L = l = 1.
  static MatcompInstance with_defaults(SparseRatings ratings, std::size_t rank);

  std::size_t rows() const { return ratings.n_rows; }
  std::size_t cols() const { return ratings.n_cols; }
  std::size_t flat_size() const { return (rows() + cols()) * rank; }

  /// Weight of the l1 term in g.
  double l1_weight() const { return lambda * theta; }

  void validate() const;
};

// Loss, computed over observed entries only (O(nnz * t)).
double loss_value(const MatcompInstance& inst, const FactorPair& Z);
FactorPair loss_gradient_pair(const MatcompInstance& inst, const FactorPair& Z);
VectorXd loss_gradient(const MatcompInstance& inst, const FactorPair& Z);

// Quartic kernel on a factor pair.
double quartic_kernel_value(const MatcompInstance& inst, const FactorPair& Z);
VectorXd quartic_kernel_gradient(const MatcompInstance& inst, const FactorPair& Z);

// Exponential penalty and its DC remainder h. These are separable, so they
// act on the flattened point directly.
double penalty_value(const MatcompInstance& inst, const VectorXd& x);
double penalty_h_value(const MatcompInstance& inst, const VectorXd& x);
VectorXd penalty_h_gradient(const MatcompInstance& inst, const VectorXd& x);

/// Unique positive root of a*tau^3 + b*tau - 1 = 0 for a, b >= 0 not both
/// zero. Newton from the right end of the bracket with a bisection guard.
double positive_cubic_root(double a, double b);

/// argmin over U, V >= 0 of
///   threshold (||U||_1 + ||V||_1) + <P, U> + <Q, V> + c1 w^2 + c2 w,
/// which is tau* [-P - threshold]_+, tau* [-Q - threshold]_+.
FactorPair solve_quartic_prox(const MatrixXd& P, const MatrixXd& Q, double threshold, double c1,
                              double c2);

/// The instance's subproblem: threshold lambda theta / L and the instance's
/// kernel constants.
FactorPair solve_subproblem(const MatcompInstance& inst, const MatrixXd& P, const MatrixXd& Q);

struct MatcompProblem {
  std::shared_ptr<const MatcompInstance> instance;
  DCProblem<double> problem;
  SubproblemOracle<double> oracle;
};

MatcompProblem build_dc_problem(MatcompInstance inst);

/// Entries i.i.d. uniform on [0, sqrt(mean(A_observed) / t)].
FactorPair initial_point(const MatcompInstance& inst, std::uint64_t seed);

/// Prediction (U V)_ij for a stored entry.
double predict(const FactorPair& Z, std::size_t row, std::size_t col);

}  // namespace dcae::matcomp
