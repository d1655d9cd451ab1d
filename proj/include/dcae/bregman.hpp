#pragma once

// Bregman kernels, Bregman distances and the DC-problem abstraction shared by
// every solver.
//
// A DC problem here is
//
//     minimize F(x) = f(x) + g(x) - h(x)
//
// with f differentiable, g proper closed convex (possibly an indicator), h
// convex, and a strongly convex kernel phi such that L*phi - f and l*phi + f
// are convex. Points are flat dense vectors; structured problems flatten
// themselves.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <utility>

#include "dcae/errors.hpp"
#include "dcae/rng.hpp"

namespace dcae {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Strongly convex reference function with full domain.
template <typename Scalar>
class BregmanKernel {
 public:
  using Vec = Vector<Scalar>;

  virtual ~BregmanKernel() = default;

  virtual Scalar value(const Vec& x) const = 0;
  virtual Vec gradient(const Vec& x) const = 0;

  /// Strong convexity modulus rho > 0.
  virtual Scalar modulus() const = 0;

  /// phi(x) - phi(y) - <grad phi(y), x - y>. Kernels with a closed form that
  /// avoids cancellation near x == y override this.
  virtual Scalar distance(const Vec& x, const Vec& y) const {
    return value(x) - value(y) - gradient(y).dot(x - y);
  }
};

/// phi(x) = (scale / 2) * ||x||^2.
template <typename Scalar>
class QuadraticKernel final : public BregmanKernel<Scalar> {
 public:
  using Vec = Vector<Scalar>;

  explicit QuadraticKernel(Scalar scale = Scalar(1)) : scale_(scale) {
    if (!(scale > Scalar(0)) || !std::isfinite(static_cast<double>(scale))) {
      throw InvalidInput("quadratic kernel scale must be positive and finite");
    }
  }

  Scalar value(const Vec& x) const override { return Scalar(0.5) * scale_ * x.squaredNorm(); }
  Vec gradient(const Vec& x) const override { return scale_ * x; }
  Scalar modulus() const override { return scale_; }

  Scalar distance(const Vec& x, const Vec& y) const override {
    return Scalar(0.5) * scale_ * (x - y).squaredNorm();
  }

 private:
  Scalar scale_;
};

/// phi(x) = c1 * w^2 + c2 * w with w = ||x||^2 / 2.
///
/// For a factor pair (U, V) flattened into x, w = (||U||_F^2 + ||V||_F^2) / 2,
/// which is the kernel under which the matrix-factorization loss is
/// relatively smooth. The modulus is c2; the quartic part is convex.
template <typename Scalar>
class QuarticKernel final : public BregmanKernel<Scalar> {
 public:
  using Vec = Vector<Scalar>;

  QuarticKernel(Scalar c1, Scalar c2) : c1_(c1), c2_(c2) {
    if (!(c1 >= Scalar(0)) || !(c2 > Scalar(0)) || !std::isfinite(static_cast<double>(c1)) ||
        !std::isfinite(static_cast<double>(c2))) {
      throw InvalidInput("quartic kernel needs c1 >= 0 and c2 > 0");
    }
  }

  Scalar c1() const { return c1_; }
  Scalar c2() const { return c2_; }

  Scalar value(const Vec& x) const override {
    const Scalar w = Scalar(0.5) * x.squaredNorm();
    return c1_ * w * w + c2_ * w;
  }

  Vec gradient(const Vec& x) const override {
    const Scalar w = Scalar(0.5) * x.squaredNorm();
    return (Scalar(2) * c1_ * w + c2_) * x;
  }

  Scalar modulus() const override { return c2_; }

  // With d = x - y, b = ||y||^2/2 and e = <y, d> + ||d||^2/2 (= w(x) - w(y)):
  //   D(x, y) = c1 * (e^2 + b * ||d||^2) + (c2 / 2) * ||d||^2,
  // a sum of nonnegative terms.
  Scalar distance(const Vec& x, const Vec& y) const override {
    const Vec d = x - y;
    const Scalar dd = d.squaredNorm();
    const Scalar b = Scalar(0.5) * y.squaredNorm();
    const Scalar e = y.dot(d) + Scalar(0.5) * dd;
    return c1_ * (e * e + b * dd) + Scalar(0.5) * c2_ * dd;
  }

 private:
  Scalar c1_;
  Scalar c2_;
};

template <typename Scalar>
Scalar bregman_distance(const BregmanKernel<Scalar>& kernel, const Vector<Scalar>& x,
                        const Vector<Scalar>& y) {
  if (x.size() != y.size()) throw InvalidInput("bregman_distance: size mismatch");
  if (!x.allFinite() || !y.allFinite()) throw InvalidInput("bregman_distance: non-finite input");
  return kernel.distance(x, y);
}

/// The triple (f, g, h) plus kernel and relative-smoothness constants.
///
/// g may return +infinity outside its domain. Boundedness of F from below is
/// a property the instance declares; nothing here checks it.
template <typename Scalar>
struct DCProblem {
  using Vec = Vector<Scalar>;
  using ScalarFn = std::function<Scalar(const Vec&)>;
  using VectorFn = std::function<Vec(const Vec&)>;

  ScalarFn f_value;
  VectorFn f_gradient;
  ScalarFn g_value;
  ScalarFn h_value;
  VectorFn h_subgradient;
  std::shared_ptr<const BregmanKernel<Scalar>> kernel;
  Scalar L = Scalar(1);
  Scalar l = Scalar(0);

  Scalar objective(const Vec& x) const { return f_value(x) + g_value(x) - h_value(x); }

  void validate() const {
    if (!f_value || !f_gradient || !g_value || !h_value || !h_subgradient || !kernel) {
      throw InvalidInput("DCProblem: missing component");
    }
    if (!(L > Scalar(0))) throw InvalidInput("DCProblem: L must be positive");
    if (!(l >= Scalar(0))) throw InvalidInput("DCProblem: l must be nonnegative");
  }
};

/// Exact solver of  argmin_x { L*phi(x) + g(x) - <linear_term, x> }.
template <typename Scalar>
using SubproblemOracle = std::function<Vector<Scalar>(const Vector<Scalar>&)>;

/// Source of point pairs for sampled audits.
template <typename Scalar>
using PairSampler = std::function<std::pair<Vector<Scalar>, Vector<Scalar>>(Rng&)>;

template <typename Scalar>
struct ConvexityReport {
  std::size_t trials = 0;
  std::size_t passed = 0;
  std::size_t failed = 0;
  Scalar worst_violation = Scalar(0);

  bool ok() const { return failed == 0; }
};

struct ConvexityTolerance {
  double absolute = 1e-9;
  double relative = 1e-12;
};

/// Segment-sampling convexity audit: for each sampled (a, b) and t in (0, 1),
/// checks fn(t a + (1-t) b) <= t fn(a) + (1-t) fn(b). The reported violation
/// is the excess after the relative allowance; a trial fails when that
/// excess is above the absolute tolerance.
template <typename Scalar>
ConvexityReport<Scalar> audit_convexity(const std::function<Scalar(const Vector<Scalar>&)>& fn,
                                        const PairSampler<Scalar>& sampler, std::size_t trials,
                                        Rng& rng, ConvexityTolerance tol = {}) {
  ConvexityReport<Scalar> report;
  for (std::size_t i = 0; i < trials; ++i) {
    auto [a, b] = sampler(rng);
    double t = rng.uniform();
    while (t <= 0.0) t = rng.uniform();
    const Scalar ts = static_cast<Scalar>(t);
    const Vector<Scalar> z = ts * a + (Scalar(1) - ts) * b;
    const Scalar fa = ts * fn(a);
    const Scalar fb = (Scalar(1) - ts) * fn(b);
    const Scalar fz = fn(z);
    const Scalar scale = std::abs(fa) + std::abs(fb) + std::abs(fz);
    const Scalar excess = std::max(Scalar(0), fz - (fa + fb) - Scalar(tol.relative) * scale);
    report.worst_violation = std::max(report.worst_violation, excess);
    ++report.trials;
    if (excess > Scalar(tol.absolute)) {
      ++report.failed;
    } else {
      ++report.passed;
    }
  }
  return report;
}

template <typename Scalar>
struct RelativeConvexityReport {
  ConvexityReport<Scalar> upper;  // L*phi - f
  ConvexityReport<Scalar> lower;  // l*phi + f

  bool ok() const { return upper.ok() && lower.ok(); }
};

/// Sampled audit of the relative-smoothness pair L*phi - f and l*phi + f.
/// Violations are reported, never thrown.
template <typename Scalar>
RelativeConvexityReport<Scalar> check_relative_convexity(const DCProblem<Scalar>& problem,
                                                         const PairSampler<Scalar>& sampler,
                                                         std::size_t trials, Rng& rng,
                                                         ConvexityTolerance tol = {}) {
  if (trials == 0) throw InvalidInput("check_relative_convexity: trials must be >= 1");
  const auto& kernel = *problem.kernel;
  const Scalar L = problem.L;
  const Scalar l = problem.l;
  std::function<Scalar(const Vector<Scalar>&)> upper = [&](const Vector<Scalar>& x) {
    return L * kernel.value(x) - problem.f_value(x);
  };
  std::function<Scalar(const Vector<Scalar>&)> lower = [&](const Vector<Scalar>& x) {
    return l * kernel.value(x) + problem.f_value(x);
  };
  RelativeConvexityReport<Scalar> report;
  report.upper = audit_convexity(upper, sampler, trials, rng, tol);
  report.lower = audit_convexity(lower, sampler, trials, rng, tol);
  return report;
}

/// Smallest value over the probes of
///   g(z) - g(x_plus) - <linear_term - L grad phi(x_plus), z - x_plus>,
/// which is >= 0 for every z exactly when x_plus solves the subproblem.
template <typename Scalar>
Scalar subproblem_optimality_slack(const DCProblem<Scalar>& problem,
                                   const Vector<Scalar>& linear_term,
                                   const Vector<Scalar>& x_plus,
                                   const std::function<Vector<Scalar>(Rng&)>& probe,
                                   std::size_t probes, Rng& rng) {
  const Vector<Scalar> residual = linear_term - problem.L * problem.kernel->gradient(x_plus);
  const Scalar g_plus = problem.g_value(x_plus);
  Scalar worst = std::numeric_limits<Scalar>::infinity();
  for (std::size_t i = 0; i < probes; ++i) {
    const Vector<Scalar> z = probe(rng);
    const Scalar slack = problem.g_value(z) - g_plus - residual.dot(z - x_plus);
    worst = std::min(worst, slack);
  }
  return worst;
}

}  // namespace dcae
