#pragma once

// Evaluation metrics, run-level invariant checks over solver traces, and
// summary export.

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "dcae/data_io.hpp"
#include "dcae/matcomp.hpp"
#include "dcae/solvers.hpp"

namespace dcae {

/// sqrt(||P_T(A - U V)||^2 / N_T) over the test entries.
double rmse(const SparseRatings& test, const matcomp::FactorPair& Z);

enum class ViolationKind { NonFinite, Decrease, Lyapunov, Extrapolation, Summability };

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::size_t k;  // record index k (the iterate x^k)
  double amount;  // excess over the allowed tolerance
};

struct ViolationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count() const { return violations.size(); }
  std::size_t count(ViolationKind kind) const;
};

struct TraceConstants {
  double L = 1.0;
  double l = 0.0;
  double delta = 0.9999;
  double rho = 1.0;
};

/// Checks a trace against the guarantees of its variant.
///
/// DCA and DCAe:
///   F(x^{k+1}) - F(x^k) - delta L D(x^{k-1}, x^k) + L D(x^k, x^{k+1}) <= 1e-8 (1 + |F(x^k)|)
///   Phi(z^{k+1}) <= Phi(z^k) + 1e-8 (1 + |Phi(z^k)|)   (when recorded)
///   sum_{j<=k} ||x^j - x^{j-1}||^2 <= 2 (F(x^0) - min F) / ((1 - delta) L rho) + 1e-6
/// DCAe additionally:
///   (L + l) D(x^k, y^k) - delta L D(x^{k-1}, x^k) <= 1e-12 (1 + D(x^{k-1}, x^k))
/// Every variant: all recorded values finite.
template <typename Scalar>
ViolationReport validate_trace(const Trace<Scalar>& trace, const TraceConstants& c) {
  ViolationReport report;
  const auto& recs = trace.records;
  auto flag = [&](ViolationKind kind, std::size_t k, double amount) {
    report.violations.push_back({kind, k, amount});
  };

  for (const auto& r : recs) {
    const bool finite = std::isfinite(double(r.objective)) && std::isfinite(double(r.beta)) &&
                        std::isfinite(double(r.step_norm)) &&
                        std::isfinite(double(r.bregman_step)) &&
                        (!r.lyapunov || std::isfinite(double(*r.lyapunov)));
    if (!finite) flag(ViolationKind::NonFinite, r.k, std::numeric_limits<double>::infinity());
  }
  if (trace.variant == Variant::IDCA || recs.empty()) return report;

  const double F0 = double(trace.initial_objective);
  double F_min = F0;
  for (const auto& r : recs) F_min = std::min(F_min, double(r.objective));
  const double summability_bound =
      2.0 * (F0 - F_min) / ((1.0 - c.delta) * c.L * c.rho) + 1e-6;

  double F_prev = F0;
  double D_prev = 0.0;  // D(x^{-1}, x^0) with x^{-1} = x^0
  double phi_prev = F0;
  double step_sum = 0.0;
  bool summability_flagged = false;
  for (const auto& r : recs) {
    const double F = double(r.objective);
    const double D = double(r.bregman_step);

    const double decrease_excess = F - F_prev - c.delta * c.L * D_prev + c.L * D;
    const double decrease_tol = 1e-8 * (1.0 + std::abs(F_prev));
    if (decrease_excess > decrease_tol) {
      flag(ViolationKind::Decrease, r.k, decrease_excess - decrease_tol);
    }

    if (r.lyapunov) {
      const double phi = double(*r.lyapunov);
      const double tol = 1e-8 * (1.0 + std::abs(phi_prev));
      if (phi - phi_prev > tol) flag(ViolationKind::Lyapunov, r.k, phi - phi_prev - tol);
      phi_prev = phi;
    }

    if (trace.variant == Variant::DCAE) {
      const double excess = double(r.extrapolation_lhs) - double(r.extrapolation_rhs);
      const double tol = 1e-12 * (1.0 + D_prev);
      if (excess > tol) flag(ViolationKind::Extrapolation, r.k, excess - tol);
    }

    step_sum += double(r.step_norm) * double(r.step_norm);
    if (!summability_flagged && step_sum > summability_bound) {
      flag(ViolationKind::Summability, r.k, step_sum - summability_bound);
      summability_flagged = true;
    }

    F_prev = F;
    D_prev = D;
  }
  return report;
}

struct RunSummary {
  std::string variant;
  std::size_t repeat = 0;
  double final_objective = 0.0;
  double test_rmse = 0.0;
  std::size_t iterations = 0;
  double wall_time_s = 0.0;
  std::size_t violations = 0;
  std::string stop_reason;
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and sample standard deviation (N - 1 denominator, 0 for N = 1).
Stat mean_std(const std::vector<double>& values);

struct AggregateSummary {
  std::string variant;
  std::size_t repeats = 0;
  Stat final_objective;
  Stat test_rmse;
  Stat iterations;
  Stat wall_time_s;
  std::size_t violations = 0;
};

/// Throws InvalidInput on an empty list or mixed variants.
AggregateSummary aggregate(const std::vector<RunSummary>& repeats);

void write_summary_csv(std::ostream& out, const std::vector<RunSummary>& runs);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateSummary>& rows);
std::string summary_json(const std::vector<RunSummary>& runs,
                         const std::vector<AggregateSummary>& rows);

}  // namespace dcae
