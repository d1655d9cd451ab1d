#include <doctest.h>

#include <cmath>

#include "dcae/matcomp.hpp"
#include "dcae/solvers.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dcae::matcomp;
using dcae::Rng;
using dcae::SparseRatings;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SparseRatings small_ratings() {
  // 3 x 3 with four observed entries.
  SparseRatings r;
  r.n_rows = 3;
  r.n_cols = 3;
  r.row_ids = {1, 2, 3};
  r.col_ids = {1, 2, 3};
  r.entries = {{0, 0, 4.0}, {0, 2, 1.5}, {1, 1, 3.0}, {2, 0, 2.0}};
  return r;
}

MatcompInstance random_instance(Rng& rng, std::size_t m, std::size_t n, std::size_t t) {
  const auto seed = rng.below(1u << 30);
  return MatcompInstance::with_defaults(dcae::synthesize(m, n, t, 0.6, 0.1, seed), t);
}

FactorPair random_pair(Rng& rng, const MatcompInstance& inst, double lo, double hi) {
  return {dcae::oracle::random_matrix(rng, inst.rows(), inst.rank, lo, hi),
          dcae::oracle::random_matrix(rng, inst.rank, inst.cols(), lo, hi)};
}

}  // namespace

TEST_CASE("FactorPair flatten / unflatten layout") {
  FactorPair Z{MatrixXd(2, 1), MatrixXd(1, 3)};
  Z.U << 1, 2;
  Z.V << 3, 4, 5;
  const VectorXd x = Z.flatten();
  VectorXd want(5);
  want << 1, 2, 3, 4, 5;
  CHECK(x == want);
  const auto back = FactorPair::unflatten(x, 2, 1, 3);
  CHECK(back.U == Z.U);
  CHECK(back.V == Z.V);
  CHECK_THROWS_AS(FactorPair::unflatten(x, 2, 2, 3), dcae::InvalidInput);
}

TEST_CASE("loss_value: trivial cases and dense cross-check") {
  auto inst = MatcompInstance::with_defaults(small_ratings(), 2);
  const FactorPair zero{MatrixXd::Zero(3, 2), MatrixXd::Zero(2, 3)};
  const double norm = inst.ratings.frobenius_norm();
  CHECK(loss_value(inst, zero) == doctest::Approx(0.5 * norm * norm).epsilon(1e-15));

  FactorPair Z{MatrixXd(3, 2), MatrixXd(2, 3)};
  Z.U << 1.0, 0.5, -0.2, 2.0, 0.3, 0.0;
  Z.V << 1.5, 0.2, 0.4, -1.0, 0.7, 2.2;
  CHECK(loss_value(inst, Z) ==
        doctest::Approx(dcae::oracle::dense_loss(inst.ratings, Z.U, Z.V)).epsilon(1e-14));

  // Exact fit on the observed entries.
  SparseRatings exact = small_ratings();
  const MatrixXd full = Z.U * Z.V;
  for (auto& e : exact.entries) e.value = full(e.row, e.col);
  auto fit = MatcompInstance::with_defaults(exact, 2);
  CHECK(std::abs(loss_value(fit, Z)) < 1e-28);

  const FactorPair wrong{MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 3)};
  CHECK_THROWS_AS(loss_value(inst, wrong), dcae::InvalidInput);
}

TEST_CASE("loss_gradient: zero point, exact fit and finite differences") {
  auto inst = MatcompInstance::with_defaults(small_ratings(), 2);
  const FactorPair zero{MatrixXd::Zero(3, 2), MatrixXd::Zero(2, 3)};
  CHECK(loss_gradient(inst, zero).norm() == 0.0);

  // Rank-1 exact fit.
  FactorPair Z{MatrixXd(3, 1), MatrixXd(1, 3)};
  Z.U << 1.0, 2.0, 0.5;
  Z.V << 0.5, 1.5, 3.0;
  SparseRatings exact = small_ratings();
  const MatrixXd full = Z.U * Z.V;
  for (auto& e : exact.entries) e.value = full(e.row, e.col);
  auto fit = MatcompInstance::with_defaults(exact, 1);
  CHECK(loss_gradient(fit, Z).norm() < 1e-10);

  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto rnd = random_instance(rng, 5, 4, 2);
    const FactorPair P = random_pair(rng, rnd, -1.0, 1.0);
    const VectorXd x = P.flatten();
    const VectorXd fd = dcae::oracle::central_gradient(
        [&](const VectorXd& z) {
          const auto Q = FactorPair::unflatten(z, rnd.rows(), rnd.rank, rnd.cols());
          return dcae::oracle::dense_loss(rnd.ratings, Q.U, Q.V);
        },
        x);
    CHECK(dcae::oracle::relative_error(loss_gradient(rnd, P), fd) < 1e-5);
  }
}

TEST_CASE("quartic kernel on factor pairs") {
  auto inst = MatcompInstance::with_defaults(small_ratings(), 2);
  inst.c1 = 3.0;
  inst.c2 = 2.0;
  const FactorPair zero{MatrixXd::Zero(3, 2), MatrixXd::Zero(2, 3)};
  CHECK(quartic_kernel_value(inst, zero) == 0.0);
  CHECK(quartic_kernel_gradient(inst, zero).norm() == 0.0);

  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const FactorPair Z = random_pair(rng, inst, -1.0, 1.0);
    const VectorXd fd = dcae::oracle::central_gradient(
        [&](const VectorXd& z) {
          const double w = 0.5 * z.squaredNorm();
          return 3.0 * w * w + 2.0 * w;
        },
        Z.flatten());
    CHECK(dcae::oracle::relative_error(quartic_kernel_gradient(inst, Z), fd) < 1e-5);
    // Flattened kernel agrees with the factor-pair form.
    dcae::QuarticKernel<double> k(3.0, 2.0);
    CHECK(k.value(Z.flatten()) == doctest::Approx(quartic_kernel_value(inst, Z)).epsilon(1e-14));
  }
}

TEST_CASE("penalty, DC remainder and its gradient") {
  auto inst = MatcompInstance::with_defaults(small_ratings(), 1);
  const VectorXd zero = VectorXd::Zero(6);
  CHECK(penalty_value(inst, zero) == 0.0);
  CHECK(penalty_h_value(inst, zero) == 0.0);
  CHECK(penalty_h_gradient(inst, zero).norm() == 0.0);

  VectorXd one = VectorXd::Zero(6);
  one[0] = 1.0;
  CHECK(penalty_value(inst, one) == doctest::Approx(0.0993262053).epsilon(1e-9));
  CHECK(penalty_h_gradient(inst, one)[0] == doctest::Approx(0.4966310265).epsilon(1e-9));
  one[0] = -1.0;
  CHECK(penalty_h_gradient(inst, one)[0] == doctest::Approx(-0.4966310265).epsilon(1e-9));

  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd x = dcae::oracle::random_vector(rng, 12, -2.0, 2.0);
    const double l1 = inst.lambda * inst.theta * x.lpNorm<1>();
    CHECK(std::abs(penalty_value(inst, x) - (l1 - penalty_h_value(inst, x))) <=
          1e-12 * std::max(1.0, std::abs(penalty_value(inst, x))));
    const VectorXd fd = dcae::oracle::central_gradient(
        [&](const VectorXd& z) { return penalty_h_value(inst, z); }, x);
    CHECK(dcae::oracle::relative_error(penalty_h_gradient(inst, x), fd) < 1e-5);
  }

  std::function<double(const VectorXd&)> h = [&](const VectorXd& z) {
    return penalty_h_value(inst, z);
  };
  dcae::PairSampler<double> pairs = [](Rng& r) {
    return std::pair{dcae::oracle::random_vector(r, 12, -2.0, 2.0),
                     dcae::oracle::random_vector(r, 12, -2.0, 2.0)};
  };
  const auto report = dcae::audit_convexity(h, pairs, 1000, rng, {1e-10, 1e-12});
  CHECK(report.ok());
  CHECK(report.worst_violation <= 1e-10);
}

TEST_CASE("positive_cubic_root") {
  CHECK(positive_cubic_root(0.0, 2.0) == 0.5);
  const double tau = positive_cubic_root(3.0, 1.0);
  CHECK(std::abs(tau - dcae::oracle::bisect_cubic(3.0, 1.0)) < 1e-12);
  CHECK(tau == doctest::Approx(0.5365651647).epsilon(1e-9));
  CHECK(std::abs(3.0 * tau * tau * tau + tau - 1.0) < 1e-12);
  CHECK(positive_cubic_root(8.0, 0.0) == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(24);
  for (int i = 0; i < 500; ++i) {
    const double a = std::pow(10.0, rng.uniform(-8.0, 8.0));
    const double b = std::pow(10.0, rng.uniform(-4.0, 4.0));
    const double t = positive_cubic_root(a, b);
    REQUIRE(t > 0.0);
    REQUIRE(std::abs(a * t * t * t + b * t - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(positive_cubic_root(0.0, 0.0), dcae::InvalidInput);
  CHECK_THROWS_AS(positive_cubic_root(-1.0, 1.0), dcae::InvalidInput);
}

TEST_CASE("solve_quartic_prox: thresholding, linear case and scaling structure") {
  const MatrixXd P = MatrixXd::Constant(3, 2, 0.5);
  const MatrixXd Q = MatrixXd::Constant(2, 4, -0.05);
  const auto z = solve_quartic_prox(P, Q, 0.1, 3.0, 1.0);
  CHECK(z.U.norm() == 0.0);
  CHECK(z.V.norm() == 0.0);

  MatrixXd P2(1, 2), Q2(2, 1);
  P2 << -1.1, 0.3;
  Q2 << -0.6, -2.0;
  const auto lin = solve_quartic_prox(P2, Q2, 0.1, 0.0, 2.0);
  CHECK(lin.U(0, 0) == doctest::Approx(0.5 * 1.0));
  CHECK(lin.U(0, 1) == 0.0);
  CHECK(lin.V(0, 0) == doctest::Approx(0.5 * 0.5));
  CHECK(lin.V(1, 0) == doctest::Approx(0.5 * 1.9));

  Rng rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixXd Pr = dcae::oracle::random_matrix(rng, 4, 2, -2.0, 1.0);
    const MatrixXd Qr = dcae::oracle::random_matrix(rng, 2, 3, -2.0, 1.0);
    const auto out = solve_quartic_prox(Pr, Qr, 0.5, 3.0, 1.7);
    const MatrixXd SU = (-Pr.array() - 0.5).max(0.0).matrix();
    const MatrixXd SV = (-Qr.array() - 0.5).max(0.0).matrix();
    const double s = SU.squaredNorm() + SV.squaredNorm();
    REQUIRE(out.U.minCoeff() >= 0.0);
    REQUIRE(out.V.minCoeff() >= 0.0);
    if (s == 0.0) continue;
    // Direction from thresholding, magnitude from the cubic.
    const double tau = (out.U.sum() + out.V.sum()) / (SU.sum() + SV.sum());
    CHECK((out.U - tau * SU).norm() < 1e-14);
    CHECK((out.V - tau * SV).norm() < 1e-14);
    CHECK(std::abs(3.0 * s * tau * tau * tau + 1.7 * tau - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(solve_quartic_prox(P, Q, 0.1, 0.0, 0.0), dcae::InvalidInput);
}

TEST_CASE("solve_quartic_prox agrees with a projected-gradient minimizer") {
  Rng rng(26);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = static_cast<Eigen::Index>(2 + rng.below(4));
    const auto n = static_cast<Eigen::Index>(2 + rng.below(4));
    const auto t = static_cast<Eigen::Index>(1 + rng.below(2));
    const dcae::oracle::QuarticProxObjective obj{
        dcae::oracle::random_matrix(rng, m, t, -3.0, 1.0),
        dcae::oracle::random_matrix(rng, t, n, -3.0, 1.0), 0.5, 3.0, rng.uniform(0.5, 3.0)};
    const auto closed = solve_quartic_prox(obj.P, obj.Q, obj.kappa, obj.c1, obj.c2);
    const auto [U, V] = dcae::oracle::projected_gradient_minimize(obj);
    const double f_closed = obj(closed.U, closed.V);
    const double f_num = obj(U, V);
    CHECK(std::abs(f_closed - f_num) <= 1e-6 * (1.0 + std::abs(f_num)));
    CHECK(f_closed <= f_num + 1e-12);
  }
}

TEST_CASE("build_dc_problem: oracle is feasible and passes the optimality probe") {
  Rng rng(27);
  for (int trial = 0; trial < 5; ++trial) {
    auto mp = build_dc_problem(random_instance(rng, 6, 5, 2));
    const auto& inst = *mp.instance;
    const VectorXd y = random_pair(rng, inst, 0.0, 1.0).flatten();
    const VectorXd x = random_pair(rng, inst, 0.0, 1.0).flatten();
    const VectorXd v = mp.problem.L * mp.problem.kernel->gradient(y) - mp.problem.f_gradient(y) +
                       mp.problem.h_subgradient(x);
    const VectorXd x_plus = mp.oracle(v);
    REQUIRE(x_plus.minCoeff() >= 0.0);
    auto probe = [&](Rng& r) {
      return dcae::oracle::random_vector(r, x_plus.size(), 0.0, 2.0 * (x_plus.maxCoeff() + 0.1));
    };
    CHECK(dcae::subproblem_optimality_slack<double>(mp.problem, v, x_plus, probe, 100, rng) >= -1e-8);

    // Perturbing the solution breaks optimality for some nearby probe.
    VectorXd off = x_plus;
    off.array() += 0.05;
    auto near = [&](Rng& r) {
      return (off + dcae::oracle::random_vector(r, off.size(), -0.01, 0.01)).cwiseMax(0.0).eval();
    };
    CHECK(dcae::subproblem_optimality_slack<double>(mp.problem, v, x_plus, near, 100, rng) >= -1e-8);
    CHECK(dcae::subproblem_optimality_slack<double>(mp.problem, v, off, near, 100, rng) < 0.0);
  }
}

TEST_CASE("build_dc_problem: g is +inf off the orthant and F matches its parts") {
  Rng rng(28);
  auto mp = build_dc_problem(random_instance(rng, 5, 4, 2));
  const auto& inst = *mp.instance;
  const FactorPair Z = random_pair(rng, inst, 0.0, 1.0);
  const VectorXd x = Z.flatten();
  const double F = mp.problem.objective(x);
  CHECK(F == doctest::Approx(loss_value(inst, Z) + penalty_value(inst, x)).epsilon(1e-12));
  VectorXd neg = x;
  neg[0] = -1e-3;
  CHECK(std::isinf(mp.problem.g_value(neg)));
}

TEST_CASE("relative smoothness of the data fit under the quartic kernel") {
  Rng rng(29);
  for (int trial = 0; trial < 3; ++trial) {
    auto mp = build_dc_problem(random_instance(rng, 8, 6, 2));
    const auto n = static_cast<Eigen::Index>(mp.instance->flat_size());
    dcae::PairSampler<double> pairs = [n](Rng& r) {
      return std::pair{dcae::oracle::random_vector(r, n, -1.5, 1.5),
                       dcae::oracle::random_vector(r, n, -1.5, 1.5)};
    };
    const auto report = dcae::check_relative_convexity(mp.problem, pairs, 1000, rng);
    CHECK(report.ok());
    CHECK(report.upper.worst_violation <= 1e-9);
    CHECK(report.lower.worst_violation <= 1e-9);
  }
}

TEST_CASE("instance defaults and validation") {
  auto inst = MatcompInstance::with_defaults(small_ratings(), 2);
  CHECK(inst.lambda == 0.1);
  CHECK(inst.theta == 5.0);
  CHECK(inst.c1 == 3.0);
  CHECK(inst.c2 == doctest::Approx(std::sqrt(16.0 + 2.25 + 9.0 + 4.0)));
  CHECK(inst.L == 1.0);
  CHECK(inst.l == 1.0);
  inst.L = 0.5;
  CHECK_THROWS_AS(build_dc_problem(inst), dcae::InvalidInput);
}

TEST_CASE("initial point is seeded and scaled to the data") {
  auto inst = MatcompInstance::with_defaults(small_ratings(), 2);
  const auto a = initial_point(inst, 5);
  const auto b = initial_point(inst, 5);
  CHECK(a.U == b.U);
  CHECK(a.V == b.V);
  const double hi = std::sqrt(inst.ratings.mean_value() / 2.0);
  CHECK(a.U.minCoeff() >= 0.0);
  CHECK(a.U.maxCoeff() <= hi);
  CHECK(a.V.maxCoeff() <= hi);
  CHECK_FALSE(initial_point(inst, 6).U == a.U);
}

TEST_CASE("noise-free synthetic data is recovered by DCAe") {
  auto ratings = dcae::synthesize(20, 15, 3, 0.5, 0.0, 31);
  const double norm2 = ratings.frobenius_norm() * ratings.frobenius_norm();
  auto c = dcae::fixtures::synthetic_case(20, 15, 3, 0.5, 0.0, 31);
  dcae::SolverConfig cfg;
  cfg.max_iterations = 3000;
  cfg.stop_tolerance = 0.0;
  const auto res = dcae::run_solver(c.mp.problem, c.mp.oracle, c.x0, cfg, dcae::Variant::DCAE);
  const auto Z = FactorPair::unflatten(res.x, 20, 3, 15);
  CHECK(loss_value(*c.mp.instance, Z) < 1e-2 * norm2);
}
