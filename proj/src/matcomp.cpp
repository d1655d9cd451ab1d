#include "dcae/matcomp.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "dcae/errors.hpp"
#include "dcae/rng.hpp"

namespace dcae::matcomp {

namespace {

using ConstMap = Eigen::Map<const MatrixXd>;
using MatRef = Eigen::Ref<const MatrixXd>;

struct FlatView {
  ConstMap U;
  ConstMap V;
};

FlatView view(const MatcompInstance& inst, const VectorXd& x) {
  const auto m = static_cast<Eigen::Index>(inst.rows());
  const auto n = static_cast<Eigen::Index>(inst.cols());
  const auto t = static_cast<Eigen::Index>(inst.rank);
  if (x.size() != (m + n) * t) throw InvalidInput("flattened point has the wrong length");
  return {ConstMap(x.data(), m, t), ConstMap(x.data() + m * t, t, n)};
}

void check_shapes(const MatcompInstance& inst, const MatRef& U, const MatRef& V) {
  const auto m = static_cast<Eigen::Index>(inst.rows());
  const auto n = static_cast<Eigen::Index>(inst.cols());
  const auto t = static_cast<Eigen::Index>(inst.rank);
  if (U.rows() != m || U.cols() != t || V.rows() != t || V.cols() != n) {
    throw InvalidInput("factor shapes do not match the instance");
  }
}

double loss_impl(const MatcompInstance& inst, const MatRef& U, const MatRef& V) {
  double sum = 0.0;
  for (const auto& e : inst.ratings.entries) {
    const auto i = static_cast<Eigen::Index>(e.row);
    const auto j = static_cast<Eigen::Index>(e.col);
    const double r = e.value - U.row(i).dot(V.col(j));
    sum += r * r;
  }
  return 0.5 * sum;
}

// Masked residual times the other factor, one rank-t update per entry.
void loss_gradient_impl(const MatcompInstance& inst, const MatRef& U, const MatRef& V,
                        Eigen::Ref<MatrixXd> gU, Eigen::Ref<MatrixXd> gV) {
  gU.setZero();
  gV.setZero();
  for (const auto& e : inst.ratings.entries) {
    const auto i = static_cast<Eigen::Index>(e.row);
    const auto j = static_cast<Eigen::Index>(e.col);
    const double r = e.value - U.row(i).dot(V.col(j));
    gU.row(i).noalias() -= r * V.col(j).transpose();
    gV.col(j).noalias() -= r * U.row(i).transpose();
  }
}

double sign(double z) { return (z > 0.0) - (z < 0.0); }

}  // namespace

VectorXd FactorPair::flatten() const {
  VectorXd x(U.size() + V.size());
  x.head(U.size()) = Eigen::Map<const VectorXd>(U.data(), U.size());
  x.tail(V.size()) = Eigen::Map<const VectorXd>(V.data(), V.size());
  return x;
}

FactorPair FactorPair::unflatten(const VectorXd& x, std::size_t m, std::size_t t, std::size_t n) {
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ti = static_cast<Eigen::Index>(t);
  const auto ni = static_cast<Eigen::Index>(n);
  if (x.size() != (mi + ni) * ti) throw InvalidInput("flattened point has the wrong length");
  return {ConstMap(x.data(), mi, ti), ConstMap(x.data() + mi * ti, ti, ni)};
}

MatcompInstance MatcompInstance::with_defaults(SparseRatings ratings, std::size_t rank) {
  MatcompInstance inst;
  inst.c2 = ratings.frobenius_norm();
  inst.ratings = std::move(ratings);
  inst.rank = rank;
  return inst;
}

void MatcompInstance::validate() const {
  ratings.validate();
  if (rank == 0) throw InvalidInput("rank must be >= 1");
  if (!(lambda > 0.0) || !(theta > 0.0)) throw InvalidInput("lambda and theta must be positive");
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw InvalidInput("kernel constants c1, c2 must be positive");
  if (!(L >= 1.0)) throw InvalidInput("L must be >= 1 for the quartic kernel");
  if (!(l >= 0.0)) throw InvalidInput("l must be >= 0");
}

double loss_value(const MatcompInstance& inst, const FactorPair& Z) {
  check_shapes(inst, Z.U, Z.V);
  return loss_impl(inst, Z.U, Z.V);
}

FactorPair loss_gradient_pair(const MatcompInstance& inst, const FactorPair& Z) {
  check_shapes(inst, Z.U, Z.V);
  FactorPair g{MatrixXd(Z.U.rows(), Z.U.cols()), MatrixXd(Z.V.rows(), Z.V.cols())};
  loss_gradient_impl(inst, Z.U, Z.V, g.U, g.V);
  return g;
}

VectorXd loss_gradient(const MatcompInstance& inst, const FactorPair& Z) {
  return loss_gradient_pair(inst, Z).flatten();
}

double quartic_kernel_value(const MatcompInstance& inst, const FactorPair& Z) {
  const double w = 0.5 * (Z.U.squaredNorm() + Z.V.squaredNorm());
  return inst.c1 * w * w + inst.c2 * w;
}

VectorXd quartic_kernel_gradient(const MatcompInstance& inst, const FactorPair& Z) {
  const double w = 0.5 * (Z.U.squaredNorm() + Z.V.squaredNorm());
  return (2.0 * inst.c1 * w + inst.c2) * Z.flatten();
}

double penalty_value(const MatcompInstance& inst, const VectorXd& x) {
  // 1 - exp(-theta |z|) == -expm1(-theta |z|)
  double sum = 0.0;
  for (const double z : x) sum -= std::expm1(-inst.theta * std::abs(z));
  return inst.lambda * sum;
}

double penalty_h_value(const MatcompInstance& inst, const VectorXd& x) {
  double sum = 0.0;
  for (const double z : x) {
    const double a = std::abs(z);
    sum += inst.theta * a + std::expm1(-inst.theta * a);
  }
  return inst.lambda * sum;
}

VectorXd penalty_h_gradient(const MatcompInstance& inst, const VectorXd& x) {
  const double scale = inst.lambda * inst.theta;
  return x.unaryExpr([&](double z) {
    return -scale * std::expm1(-inst.theta * std::abs(z)) * sign(z);
  });
}

double positive_cubic_root(double a, double b) {
  if (!(a >= 0.0) || !(b >= 0.0) || !std::isfinite(a) || !std::isfinite(b) ||
      (a == 0.0 && b == 0.0)) {
    throw InvalidInput("positive_cubic_root: need a, b >= 0, finite, not both zero");
  }
  if (a == 0.0) return 1.0 / b;

  // Each term alone reaches 1 no earlier than the root, so both bounds
  // bracket it from the right.
  double hi = std::cbrt(1.0 / a);
  if (b > 0.0) hi = std::min(hi, 1.0 / b);
  double lo = 0.0;
  auto residual = [&](double tau) { return (a * tau * tau + b) * tau - 1.0; };

  // The cubic is increasing and convex on tau > 0; Newton from the right
  // decreases monotonically onto the root.
  double tau = hi;
  for (int it = 0; it < 200; ++it) {
    const double r = residual(tau);
    if (r == 0.0) return tau;
    if (r > 0.0) {
      hi = tau;
    } else {
      lo = tau;
    }
    double next = tau - r / (3.0 * a * tau * tau + b);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - tau) <= 2.0 * std::numeric_limits<double>::epsilon() * tau) {
      tau = next;
      break;
    }
    tau = next;
  }
  return tau;
}

FactorPair solve_quartic_prox(const MatrixXd& P, const MatrixXd& Q, double threshold, double c1,
                              double c2) {
  if (!(c1 >= 0.0) || !(c2 >= 0.0) || (c1 == 0.0 && c2 == 0.0)) {
    throw InvalidInput("invalid kernel: need c1, c2 >= 0 and not both zero");
  }
  FactorPair out{(-P.array() - threshold).max(0.0).matrix(),
                 (-Q.array() - threshold).max(0.0).matrix()};
  const double s = out.U.squaredNorm() + out.V.squaredNorm();
  if (s == 0.0) return out;
  const double tau = positive_cubic_root(c1 * s, c2);
  out.U *= tau;
  out.V *= tau;
  return out;
}

FactorPair solve_subproblem(const MatcompInstance& inst, const MatrixXd& P, const MatrixXd& Q) {
  return solve_quartic_prox(P, Q, inst.l1_weight() / inst.L, inst.c1, inst.c2);
}

MatcompProblem build_dc_problem(MatcompInstance inst) {
  inst.validate();
  auto shared = std::make_shared<const MatcompInstance>(std::move(inst));
  const MatcompInstance* I = shared.get();

  MatcompProblem out;
  out.instance = shared;
  auto& p = out.problem;
  p.L = I->L;
  p.l = I->l;
  p.kernel = std::make_shared<QuarticKernel<double>>(I->c1, I->c2);

  // Lambdas keep the instance alive through the shared pointer.
  p.f_value = [shared, I](const VectorXd& x) {
    const auto z = view(*I, x);
    return loss_impl(*I, z.U, z.V);
  };
  p.f_gradient = [shared, I](const VectorXd& x) {
    const auto z = view(*I, x);
    VectorXd g(x.size());
    const auto mt = z.U.size();
    Eigen::Map<MatrixXd> gU(g.data(), z.U.rows(), z.U.cols());
    Eigen::Map<MatrixXd> gV(g.data() + mt, z.V.rows(), z.V.cols());
    loss_gradient_impl(*I, z.U, z.V, gU, gV);
    return g;
  };
  p.g_value = [shared, I](const VectorXd& x) {
    if ((x.array() < 0.0).any()) return std::numeric_limits<double>::infinity();
    return I->l1_weight() * x.sum();
  };
  p.h_value = [shared, I](const VectorXd& x) { return penalty_h_value(*I, x); };
  p.h_subgradient = [shared, I](const VectorXd& x) { return penalty_h_gradient(*I, x); };

  out.oracle = [shared, I](const VectorXd& linear_term) {
    // min L phi + g - <v, x>  ==  L * min { phi + (g / L) - <v / L, x> },
    // so P = -v_U / L and Q = -v_V / L.
    const auto z = view(*I, linear_term);
    const MatrixXd P = -z.U / I->L;
    const MatrixXd Q = -z.V / I->L;
    return solve_subproblem(*I, P, Q).flatten();
  };
  return out;
}

FactorPair initial_point(const MatcompInstance& inst, std::uint64_t seed) {
  const auto m = static_cast<Eigen::Index>(inst.rows());
  const auto n = static_cast<Eigen::Index>(inst.cols());
  const auto t = static_cast<Eigen::Index>(inst.rank);
  const double hi = std::sqrt(std::max(0.0, inst.ratings.mean_value()) / static_cast<double>(t));
  Rng rng(seed);
  FactorPair Z{MatrixXd(m, t), MatrixXd(t, n)};
  for (Eigen::Index k = 0; k < Z.U.size(); ++k) Z.U.data()[k] = rng.uniform(0.0, hi);
  for (Eigen::Index k = 0; k < Z.V.size(); ++k) Z.V.data()[k] = rng.uniform(0.0, hi);
  return Z;
}

double predict(const FactorPair& Z, std::size_t row, std::size_t col) {
  return Z.U.row(static_cast<Eigen::Index>(row)).dot(Z.V.col(static_cast<Eigen::Index>(col)));
}

}  // namespace dcae::matcomp
