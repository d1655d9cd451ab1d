#pragma once

// DCA, inertial DCA and DCA with Bregman-controlled extrapolation (DCAe).
//
// All three share the convex subproblem
//
//     x+ = argmin_x { L*phi(x) + g(x) - <v, x> }
//
// and differ only in the linear term v:
//   DCA  : v = L grad phi(x^k) - grad f(x^k) + xi^k
//   iDCA : v = (DCA term) + gamma (x^k - x^{k-1})
//   DCAe : v = L grad phi(y^k) - grad f(y^k) + xi^k,  y^k = x^k + beta_k (x^k - x^{k-1})
// where xi^k is a subgradient of h at x^k and beta_k passes
//   (L + l) D(x^k, y^k) <= delta L D(x^{k-1}, x^k).

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dcae/bregman.hpp"
#include "dcae/errors.hpp"

namespace dcae {

enum class Variant { DCA, IDCA, DCAE };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::DCA:
      return "dca";
    case Variant::IDCA:
      return "idca";
    case Variant::DCAE:
      return "dcae";
  }
  return "unknown";
}

inline Variant parse_variant(std::string_view name) {
  if (name == "dca") return Variant::DCA;
  if (name == "idca") return Variant::IDCA;
  if (name == "dcae") return Variant::DCAE;
  throw ConfigError("unknown solver variant '" + std::string(name) + "'");
}

enum class StopReason { Tolerance, MaxIterations, TimeBudget };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::Tolerance:
      return "tolerance";
    case StopReason::MaxIterations:
      return "max_iterations";
    case StopReason::TimeBudget:
      return "time_budget";
  }
  return "unknown";
}

struct SolverConfig {
  double delta = 0.9999;
  double eta = 0.9;
  std::size_t max_linesearch_trials = 50;
  std::size_t max_iterations = 1000;
  std::optional<double> time_budget_s;
  double stop_tolerance = 1e-8;
  // iDCA inertia. Unset means 0.1 * L * rho of the problem being solved.
  std::optional<double> inertial_gamma;
  bool record_lyapunov = true;
  // Upper cap on the extrapolation weight; 0 turns DCAe into DCA.
  double beta_max = 1.0;
  // Reset the momentum sequence to mu = 1 whenever F increases. Off by default.
  bool restart_on_increase = false;
  // Starting value of the momentum sequence.
  double mu0 = 1.0;

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must lie in (0, 1)");
    if (!(stop_tolerance >= 0.0)) throw ConfigError("stop tolerance must be >= 0");
    if (inertial_gamma && !(*inertial_gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
    if (!(beta_max >= 0.0 && beta_max <= 1.0)) throw ConfigError("beta_max must lie in [0, 1]");
    if (time_budget_s && !(*time_budget_s > 0.0)) throw ConfigError("time budget must be > 0");
    if (!(mu0 >= 1.0)) throw ConfigError("mu0 must be >= 1");
  }
};

template <typename Scalar>
struct IterateState {
  Vector<Scalar> x_curr;
  Vector<Scalar> x_prev;
  Vector<Scalar> y;
  Scalar beta = Scalar(0);
  Scalar mu = Scalar(1);
  std::size_t k = 0;
  Scalar F_curr = Scalar(0);
  // D(x_prev, x_curr)
  Scalar bregman_step = Scalar(0);

  static IterateState start(const DCProblem<Scalar>& problem, const Vector<Scalar>& x0) {
    IterateState s;
    s.x_curr = x0;
    s.x_prev = x0;
    s.y = x0;
    s.F_curr = problem.objective(x0);
    return s;
  }
};

/// One row of a solver trace; record k describes the step that produced x^k.
template <typename Scalar>
struct IterationRecord {
  std::size_t k = 0;
  Scalar objective = Scalar(0);
  Scalar beta = Scalar(0);
  std::size_t linesearch_trials = 0;
  Scalar step_norm = Scalar(0);
  // D(x^{k-1}, x^k)
  Scalar bregman_step = Scalar(0);
  std::optional<Scalar> lyapunov;
  double time_s = 0.0;
  // (L + l) D(x^{k-1}, y^{k-1}) and delta L D(x^{k-2}, x^{k-1}) as accepted by
  // the line search. Both zero for DCA and iDCA.
  Scalar extrapolation_lhs = Scalar(0);
  Scalar extrapolation_rhs = Scalar(0);
};

template <typename Scalar>
struct Trace {
  Variant variant = Variant::DCAE;
  Scalar initial_objective = Scalar(0);
  std::vector<IterationRecord<Scalar>> records;
};

template <typename Scalar>
struct SolverResult {
  Vector<Scalar> x;
  Trace<Scalar> trace;
  StopReason stop_reason = StopReason::MaxIterations;
};

/// mu_k = (1 + sqrt(1 + 4 mu_{k-1}^2)) / 2, starting from mu_0 = 1.
template <typename Scalar>
Scalar nesterov_mu_next(Scalar mu_prev) {
  if (!(mu_prev >= Scalar(1))) throw InvalidInput("nesterov_mu_next: mu must be >= 1");
  using std::sqrt;
  return Scalar(0.5) * (Scalar(1) + sqrt(Scalar(1) + Scalar(4) * mu_prev * mu_prev));
}

template <typename Scalar>
struct BetaSearch {
  Scalar beta = Scalar(0);
  Vector<Scalar> y;
  // Number of shrinks applied before acceptance. max_linesearch_trials + 1
  // signals the forced fallback to beta = 0.
  std::size_t trials = 0;
  Scalar lhs = Scalar(0);
  Scalar rhs = Scalar(0);
};

/// Largest beta in {beta_init * eta^j} meeting the extrapolation condition;
/// beta = 0 once max_linesearch_trials shrinks have failed.
template <typename Scalar>
BetaSearch<Scalar> find_beta(const DCProblem<Scalar>& problem, const Vector<Scalar>& x_curr,
                             const Vector<Scalar>& x_prev, Scalar beta_init,
                             const SolverConfig& config) {
  if (!(beta_init >= Scalar(0) && beta_init < Scalar(1))) {
    throw InvalidInput("find_beta: beta_init must lie in [0, 1)");
  }
  const auto& kernel = *problem.kernel;
  const Vector<Scalar> direction = x_curr - x_prev;
  const Scalar rhs = Scalar(config.delta) * problem.L * kernel.distance(x_prev, x_curr);
  const Scalar weight = problem.L + problem.l;

  BetaSearch<Scalar> out;
  out.rhs = rhs;
  Scalar beta = beta_init;
  for (std::size_t j = 0; j <= config.max_linesearch_trials; ++j) {
    Vector<Scalar> y = x_curr + beta * direction;
    const Scalar lhs = weight * kernel.distance(x_curr, y);
    if (lhs <= rhs) {
      out.beta = beta;
      out.y = std::move(y);
      out.trials = j;
      out.lhs = lhs;
      return out;
    }
    beta *= Scalar(config.eta);
  }
  out.beta = Scalar(0);
  out.y = x_curr;
  out.trials = config.max_linesearch_trials + 1;
  out.lhs = Scalar(0);
  return out;
}

namespace detail {

template <typename Scalar>
Scalar checked_objective(const DCProblem<Scalar>& problem, const Vector<Scalar>& x) {
  const Scalar F = problem.objective(x);
  if (!std::isfinite(static_cast<double>(F))) {
    throw Diverged("objective became non-finite");
  }
  return F;
}

template <typename Scalar>
Vector<Scalar> linearization(const DCProblem<Scalar>& problem, const Vector<Scalar>& smooth_at,
                             const Vector<Scalar>& concave_at) {
  return problem.L * problem.kernel->gradient(smooth_at) - problem.f_gradient(smooth_at) +
         problem.h_subgradient(concave_at);
}

}  // namespace detail

/// Plain DCA map.
template <typename Scalar>
Vector<Scalar> dca_step(const DCProblem<Scalar>& problem, const SubproblemOracle<Scalar>& oracle,
                        const Vector<Scalar>& x_curr) {
  if (!x_curr.allFinite()) throw InvalidInput("dca_step: non-finite iterate");
  return oracle(detail::linearization(problem, x_curr, x_curr));
}

/// Inertial DCA map with heavy-ball weight gamma.
template <typename Scalar>
Vector<Scalar> idca_step(const DCProblem<Scalar>& problem, const SubproblemOracle<Scalar>& oracle,
                         const Vector<Scalar>& x_curr, const Vector<Scalar>& x_prev,
                         Scalar gamma) {
  if (!(gamma >= Scalar(0))) throw InvalidInput("idca_step: gamma must be >= 0");
  if (!x_curr.allFinite() || !x_prev.allFinite()) {
    throw InvalidInput("idca_step: non-finite iterate");
  }
  Vector<Scalar> v = detail::linearization(problem, x_curr, x_curr);
  v += gamma * (x_curr - x_prev);
  return oracle(v);
}

/// Advances a DCAe state whose y and beta were set by find_beta.
template <typename Scalar>
IterateState<Scalar> dcae_step(const DCProblem<Scalar>& problem,
                               const SubproblemOracle<Scalar>& oracle,
                               const IterateState<Scalar>& state) {
  Vector<Scalar> x_next = oracle(detail::linearization(problem, state.y, state.x_curr));
  IterateState<Scalar> next;
  next.F_curr = detail::checked_objective(problem, x_next);
  next.bregman_step = problem.kernel->distance(state.x_curr, x_next);
  next.x_prev = state.x_curr;
  next.x_curr = std::move(x_next);
  next.y = next.x_curr;
  next.beta = state.beta;
  next.mu = state.mu;
  next.k = state.k + 1;
  return next;
}

/// ||x - T(x)|| for the DCA map T; zero exactly at fixed points, which are
/// critical points of F.
template <typename Scalar>
Scalar criticality_residual(const Vector<Scalar>& x, const Vector<Scalar>& x_next_from_dca) {
  return (x - x_next_from_dca).norm();
}

template <typename Scalar>
Scalar criticality_residual(const DCProblem<Scalar>& problem,
                            const SubproblemOracle<Scalar>& oracle, const Vector<Scalar>& x) {
  return criticality_residual<Scalar>(x, dca_step(problem, oracle, x));
}

/// Runs one variant from x0 (x^{-1} := x^0) until the relative step falls
/// below stop_tolerance, the iteration cap, or the time budget.
template <typename Scalar>
SolverResult<Scalar> run_solver(const DCProblem<Scalar>& problem,
                                const SubproblemOracle<Scalar>& oracle, const Vector<Scalar>& x0,
                                const SolverConfig& config, Variant variant) {
  problem.validate();
  config.validate();
  if (!x0.allFinite()) throw InvalidInput("run_solver: non-finite starting point");

  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const Scalar lyapunov_weight = Scalar(0.5) * Scalar(1.0 + config.delta) * problem.L;
  const Scalar gamma = static_cast<Scalar>(
      config.inertial_gamma.value_or(0.1 * static_cast<double>(problem.L) *
                                     static_cast<double>(problem.kernel->modulus())));

  SolverResult<Scalar> result;
  result.trace.variant = variant;

  IterateState<Scalar> state = IterateState<Scalar>::start(problem, x0);
  state.mu = static_cast<Scalar>(config.mu0);
  if (!std::isfinite(static_cast<double>(state.F_curr))) {
    throw Diverged("objective is not finite at the starting point");
  }
  result.trace.initial_objective = state.F_curr;
  result.trace.records.reserve(std::min<std::size_t>(config.max_iterations, 4096));

  while (state.k < config.max_iterations) {
    IterationRecord<Scalar> rec;
    IterateState<Scalar> next;
    switch (variant) {
      case Variant::DCAE: {
        if (state.k > 0) state.mu = nesterov_mu_next(state.mu);
        const Scalar beta_init =
            std::min((state.mu - Scalar(1)) / state.mu, static_cast<Scalar>(config.beta_max));
        auto search = find_beta(problem, state.x_curr, state.x_prev, beta_init, config);
        state.beta = search.beta;
        state.y = std::move(search.y);
        rec.beta = search.beta;
        rec.linesearch_trials = search.trials;
        rec.extrapolation_lhs = search.lhs;
        rec.extrapolation_rhs = search.rhs;
        next = dcae_step(problem, oracle, state);
        break;
      }
      case Variant::DCA:
      case Variant::IDCA: {
        Vector<Scalar> x_next = variant == Variant::DCA
                                    ? dca_step(problem, oracle, state.x_curr)
                                    : idca_step(problem, oracle, state.x_curr, state.x_prev, gamma);
        next.F_curr = detail::checked_objective(problem, x_next);
        next.bregman_step = problem.kernel->distance(state.x_curr, x_next);
        next.x_prev = state.x_curr;
        next.x_curr = std::move(x_next);
        next.y = next.x_curr;
        next.k = state.k + 1;
        break;
      }
    }

    if (config.restart_on_increase && next.F_curr > state.F_curr) {
      next.mu = static_cast<Scalar>(config.mu0);
    }

    const Scalar step_norm = (next.x_curr - next.x_prev).norm();
    rec.k = next.k;
    rec.objective = next.F_curr;
    rec.step_norm = step_norm;
    rec.bregman_step = next.bregman_step;
    if (config.record_lyapunov) {
      rec.lyapunov = next.F_curr + lyapunov_weight * next.bregman_step;
    }
    rec.time_s = std::chrono::duration<double>(Clock::now() - t0).count();
    result.trace.records.push_back(rec);
    state = std::move(next);

    if (step_norm <= Scalar(config.stop_tolerance) * (Scalar(1) + state.x_curr.norm())) {
      result.stop_reason = StopReason::Tolerance;
      result.x = std::move(state.x_curr);
      return result;
    }
    if (config.time_budget_s && rec.time_s >= *config.time_budget_s) {
      result.stop_reason = StopReason::TimeBudget;
      result.x = std::move(state.x_curr);
      return result;
    }
  }
  result.stop_reason = StopReason::MaxIterations;
  result.x = std::move(state.x_curr);
  return result;
}

/// CSV header of exported traces.
inline constexpr std::string_view kTraceCsvHeader =
    "k,F,beta,ls_trials,step_norm,bregman_step,phi_lyapunov,time_s";

/// Writes one row per record. With include_time == false the time column is
/// written as 0 so that the output depends only on the arithmetic.
template <typename Scalar>
void write_trace_csv(std::ostream& out, const Trace<Scalar>& trace, bool include_time = true) {
  const auto old_precision = out.precision(17);
  out << kTraceCsvHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.k << ',' << r.objective << ',' << r.beta << ',' << r.linesearch_trials << ','
        << r.step_norm << ',' << r.bregman_step << ',';
    if (r.lyapunov) out << *r.lyapunov;
    out << ',' << (include_time ? r.time_s : 0.0) << '\n';
  }
  out.precision(old_precision);
}

}  // namespace dcae
