#include "dcae/diagnostics.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <ostream>

#include "dcae/errors.hpp"

namespace dcae {

double rmse(const SparseRatings& test, const matcomp::FactorPair& Z) {
  if (test.empty()) throw InvalidInput("rmse: empty test set");
  if (static_cast<std::size_t>(Z.U.rows()) != test.n_rows ||
      static_cast<std::size_t>(Z.V.cols()) != test.n_cols || Z.U.cols() != Z.V.rows()) {
    throw InvalidInput("rmse: factor shapes do not match the test matrix");
  }
  double sum = 0.0;
  for (const auto& e : test.entries) {
    const double r = e.value - matcomp::predict(Z, e.row, e.col);
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(test.size()));
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::NonFinite:
      return "non_finite";
    case ViolationKind::Decrease:
      return "decrease";
    case ViolationKind::Lyapunov:
      return "lyapunov";
    case ViolationKind::Extrapolation:
      return "extrapolation";
    case ViolationKind::Summability:
      return "summability";
  }
  return "unknown";
}

std::size_t ViolationReport::count(ViolationKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; }));
}

Stat mean_std(const std::vector<double>& values) {
  if (values.empty()) throw InvalidInput("mean_std: no values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

AggregateSummary aggregate(const std::vector<RunSummary>& repeats) {
  if (repeats.empty()) throw InvalidInput("aggregate: no repeats");
  AggregateSummary out;
  out.variant = repeats.front().variant;
  out.repeats = repeats.size();
  std::vector<double> F, err, iters, wall;
  for (const auto& r : repeats) {
    if (r.variant != out.variant) throw InvalidInput("aggregate: mixed variants");
    F.push_back(r.final_objective);
    err.push_back(r.test_rmse);
    iters.push_back(static_cast<double>(r.iterations));
    wall.push_back(r.wall_time_s);
    out.violations += r.violations;
  }
  out.final_objective = mean_std(F);
  out.test_rmse = mean_std(err);
  out.iterations = mean_std(iters);
  out.wall_time_s = mean_std(wall);
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<RunSummary>& runs) {
  const auto old = out.precision(17);
  out << "variant,repeat,final_F,test_rmse,iterations,wall_time_s,violations,stop_reason\n";
  for (const auto& r : runs) {
    out << r.variant << ',' << r.repeat << ',' << r.final_objective << ',' << r.test_rmse << ','
        << r.iterations << ',' << r.wall_time_s << ',' << r.violations << ',' << r.stop_reason
        << '\n';
  }
  out.precision(old);
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateSummary>& rows) {
  const auto old = out.precision(17);
  out << "variant,repeats,F_mean,F_std,rmse_mean,rmse_std,iterations_mean,iterations_std,"
         "wall_time_mean,wall_time_std,violations\n";
  for (const auto& a : rows) {
    out << a.variant << ',' << a.repeats << ',' << a.final_objective.mean << ','
        << a.final_objective.std << ',' << a.test_rmse.mean << ',' << a.test_rmse.std << ','
        << a.iterations.mean << ',' << a.iterations.std << ',' << a.wall_time_s.mean << ','
        << a.wall_time_s.std << ',' << a.violations << '\n';
  }
  out.precision(old);
}

std::string summary_json(const std::vector<RunSummary>& runs,
                         const std::vector<AggregateSummary>& rows) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["runs"] = ordered_json::array();
  for (const auto& r : runs) {
    doc["runs"].push_back({{"variant", r.variant},
                           {"repeat", r.repeat},
                           {"final_F", r.final_objective},
                           {"test_rmse", r.test_rmse},
                           {"iterations", r.iterations},
                           {"wall_time_s", r.wall_time_s},
                           {"violations", r.violations},
                           {"stop_reason", r.stop_reason}});
  }
  auto stat = [](const Stat& s) { return ordered_json{{"mean", s.mean}, {"std", s.std}}; };
  doc["aggregate"] = ordered_json::array();
  for (const auto& a : rows) {
    doc["aggregate"].push_back({{"variant", a.variant},
                                {"repeats", a.repeats},
                                {"final_F", stat(a.final_objective)},
                                {"test_rmse", stat(a.test_rmse)},
                                {"iterations", stat(a.iterations)},
                                {"wall_time_s", stat(a.wall_time_s)},
                                {"violations", a.violations}});
  }
  return doc.dump(2);
}

}  // namespace dcae
