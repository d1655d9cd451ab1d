#include "dcae/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <functional>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <json.hpp>

#include "dcae/errors.hpp"
#include "dcae/matcomp.hpp"

namespace dcae {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return v;
}

template <typename Int>
Int to_integer(const std::string& key, const std::string& text) {
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + text + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

#define DCAE_DOUBLE_FIELD(sec, name, member)                                                \
  Field {                                                                                   \
    sec, name, [](const ExperimentConfig& c) { return format_double(c.member); },           \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {               \
          c.member = to_double(k, v);                                                       \
        }                                                                                   \
  }
#define DCAE_SIZE_FIELD(sec, name, member)                                                  \
  Field {                                                                                   \
    sec, name, [](const ExperimentConfig& c) { return std::to_string(c.member); },          \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {               \
          c.member = to_integer<std::size_t>(k, v);                                         \
        }                                                                                   \
  }
#define DCAE_OPTIONAL_DOUBLE_FIELD(sec, name, member)                                       \
  Field {                                                                                   \
    sec, name,                                                                              \
        [](const ExperimentConfig& c) {                                                     \
          return c.member ? format_double(*c.member) : std::string();                       \
        },                                                                                  \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {               \
          if (v.empty()) {                                                                  \
            c.member.reset();                                                               \
          } else {                                                                          \
            c.member = to_double(k, v);                                                     \
          }                                                                                 \
        }                                                                                   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"data", "path",
            [](const ExperimentConfig& c) { return c.data_path ? c.data_path->string() : ""; },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              if (v.empty()) {
                c.data_path.reset();
              } else {
                c.data_path = v;
              }
            }},
      Field{"data", "format",
            [](const ExperimentConfig& c) { return std::string(to_string(c.format)); },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              c.format = parse_format(v);
            }},
      Field{"data", "synthetic",
            [](const ExperimentConfig& c) {
              return c.synthetic ? format_synthetic(*c.synthetic) : std::string();
            },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              if (v.empty()) {
                c.synthetic.reset();
              } else {
                c.synthetic = parse_synthetic(v);
              }
            }},
      DCAE_DOUBLE_FIELD("data", "train_fraction", train_fraction),
      DCAE_SIZE_FIELD("model", "rank", rank),
      DCAE_DOUBLE_FIELD("model", "lambda", lambda),
      DCAE_DOUBLE_FIELD("model", "theta", theta),
      DCAE_DOUBLE_FIELD("model", "c1", c1),
      DCAE_DOUBLE_FIELD("model", "L", L),
      DCAE_DOUBLE_FIELD("model", "l", l),
      DCAE_DOUBLE_FIELD("solver", "delta", delta),
      DCAE_DOUBLE_FIELD("solver", "eta", eta),
      DCAE_DOUBLE_FIELD("solver", "mu0", mu0),
      DCAE_SIZE_FIELD("solver", "max_linesearch_trials", max_linesearch_trials),
      DCAE_SIZE_FIELD("solver", "max_iters", max_iters),
      DCAE_OPTIONAL_DOUBLE_FIELD("solver", "time_budget_s", time_budget_s),
      DCAE_DOUBLE_FIELD("solver", "tol", tol),
      DCAE_OPTIONAL_DOUBLE_FIELD("solver", "gamma", gamma),
      Field{"solver", "variants",
            [](const ExperimentConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.variants.size(); ++i) {
                if (i) out += ',';
                out += to_string(c.variants[i]);
              }
              return out;
            },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              c.variants = parse_variant_list(v);
            }},
      DCAE_SIZE_FIELD("run", "repeats", repeats),
      Field{"run", "seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.seed = to_integer<std::uint64_t>(k, v);
            }},
      Field{"run", "out", [](const ExperimentConfig& c) { return c.out_dir.string(); },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              c.out_dir = v;
            }},
      DCAE_SIZE_FIELD("run", "parallel_repeats", parallel_repeats),
      Field{"run", "timing",
            [](const ExperimentConfig& c) { return std::string(c.timing ? "true" : "false"); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.timing = to_bool(k, v);
            }},
  };
  return table;
}

#undef DCAE_DOUBLE_FIELD
#undef DCAE_SIZE_FIELD
#undef DCAE_OPTIONAL_DOUBLE_FIELD

}  // namespace

SyntheticSpec parse_synthetic(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  if (parts.size() != 5) {
    throw ConfigError("synthetic: expected m,n,t_true,density,noise_sd, got '" + text + "'");
  }
  SyntheticSpec s;
  s.m = to_integer<std::size_t>("synthetic.m", parts[0]);
  s.n = to_integer<std::size_t>("synthetic.n", parts[1]);
  s.t_true = to_integer<std::size_t>("synthetic.t_true", parts[2]);
  s.density = to_double("synthetic.density", parts[3]);
  s.noise_sd = to_double("synthetic.noise_sd", parts[4]);
  return s;
}

std::string format_synthetic(const SyntheticSpec& s) {
  return std::to_string(s.m) + "," + std::to_string(s.n) + "," + std::to_string(s.t_true) + "," +
         format_double(s.density) + "," + format_double(s.noise_sd);
}

std::vector<Variant> parse_variant_list(const std::string& text) {
  std::vector<Variant> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string name = trim(item);
    if (name.empty()) continue;
    const Variant v = parse_variant(name);
    if (std::find(out.begin(), out.end(), v) != out.end()) {
      throw ConfigError("variant '" + name + "' listed twice");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("variant list is empty");
  return out;
}

void ExperimentConfig::validate() const {
  if (data_path && synthetic) throw ConfigError("give either a data path or synthetic, not both");
  if (!data_path && !synthetic) throw ConfigError("no data source: set data.path or data.synthetic");
  if (synthetic) {
    if (synthetic->m == 0 || synthetic->n == 0 || synthetic->t_true == 0) {
      throw ConfigError("synthetic dimensions must be >= 1");
    }
    if (!(synthetic->density > 0.0 && synthetic->density <= 1.0)) {
      throw ConfigError("synthetic density must lie in (0, 1]");
    }
    if (!(synthetic->noise_sd >= 0.0)) throw ConfigError("synthetic noise_sd must be >= 0");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (rank == 0) throw ConfigError("rank must be >= 1");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
  if (!(theta > 0.0)) throw ConfigError("theta must be > 0");
  if (!(c1 > 0.0)) throw ConfigError("c1 must be > 0");
  if (!(L >= 1.0)) throw ConfigError("L must be >= 1");
  if (!(l >= 0.0)) throw ConfigError("l must be >= 0");
  if (max_iters == 0) throw ConfigError("max_iters must be >= 1");
  if (repeats == 0) throw ConfigError("repeats must be >= 1");
  if (parallel_repeats == 0) throw ConfigError("parallel_repeats must be >= 1");
  if (variants.empty()) throw ConfigError("variant list is empty");
  solver_config().validate();
}

SolverConfig ExperimentConfig::solver_config() const {
  SolverConfig s;
  s.delta = delta;
  s.eta = eta;
  s.mu0 = mu0;
  s.max_linesearch_trials = max_linesearch_trials;
  s.max_iterations = max_iters;
  s.time_budget_s = time_budget_s;
  s.stop_tolerance = tol;
  s.inertial_gamma = gamma;
  s.record_lyapunov = true;
  return s;
}

void set_config_value(ExperimentConfig& config, const std::string& dotted_key,
                      const std::string& value) {
  for (const auto& f : fields()) {
    if (dotted_key == std::string(f.section) + "." + f.key) {
      f.set(config, dotted_key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + dotted_key + "'");
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig config;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(body.substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const std::string dotted = key.find('.') == std::string::npos && !section.empty()
                                   ? section + "." + key
                                   : key;
    set_config_value(config, dotted, value);
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
}

std::string print_defaults() {
  std::ostringstream out;
  write_config(out, ExperimentConfig{});
  return out.str();
}

ExperimentResult execute_experiment(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const SolverConfig solver = config.solver_config();

  const SparseRatings data =
      config.synthetic
          ? synthesize(config.synthetic->m, config.synthetic->n, config.synthetic->t_true,
                       config.synthetic->density, config.synthetic->noise_sd, config.seed)
          : read_ratings(*config.data_path, config.format);
  data.validate();

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + config.out_dir.string());
  {
    nlohmann::ordered_json ids;
    ids["rows"] = data.row_ids;
    ids["cols"] = data.col_ids;
    std::ofstream out(config.out_dir / "index_map.json");
    if (!out) throw DataError("cannot write index map");
    out << ids.dump() << '\n';
  }

  log << "data: " << data.n_rows << " x " << data.n_cols << ", " << data.size()
      << " ratings\n";

  const std::size_t n_variants = config.variants.size();
  std::vector<RunSummary> runs(config.repeats * n_variants);
  std::vector<std::exception_ptr> errors(config.repeats);
  std::mutex log_mutex;

  auto run_repeat = [&](std::size_t rep) {
    try {
      const std::uint64_t seed = config.seed + rep;
      SplitRatings parts = split(data, config.train_fraction, seed);
      write_split(parts, config.out_dir, "split_" + std::to_string(rep), config.format);

      auto inst = matcomp::MatcompInstance::with_defaults(parts.train, config.rank);
      inst.lambda = config.lambda;
      inst.theta = config.theta;
      inst.c1 = config.c1;
      inst.L = config.L;
      inst.l = config.l;
      const auto x0 = matcomp::initial_point(inst, seed).flatten();
      const auto mp = matcomp::build_dc_problem(std::move(inst));
      const TraceConstants constants{mp.problem.L, mp.problem.l, solver.delta,
                                     mp.problem.kernel->modulus()};

      for (std::size_t v = 0; v < n_variants; ++v) {
        const Variant variant = config.variants[v];
        const auto result = run_solver(mp.problem, mp.oracle, x0, solver, variant);
        const auto report = validate_trace(result.trace, constants);
        const std::string name(to_string(variant));
        {
          std::ofstream out(config.out_dir /
                            ("trace_" + name + "_" + std::to_string(rep) + ".csv"));
          if (!out) throw DataError("cannot write trace file");
          write_trace_csv(out, result.trace, config.timing);
        }
        const auto Z = matcomp::FactorPair::unflatten(result.x, mp.instance->rows(),
                                                      mp.instance->rank, mp.instance->cols());
        RunSummary s;
        s.variant = name;
        s.repeat = rep;
        s.final_objective = result.trace.records.empty() ? result.trace.initial_objective
                                                         : result.trace.records.back().objective;
        s.test_rmse = rmse(parts.test, Z);
        s.iterations = result.trace.records.size();
        s.wall_time_s = config.timing && !result.trace.records.empty()
                            ? result.trace.records.back().time_s
                            : 0.0;
        s.violations = report.count();
        s.stop_reason = std::string(to_string(result.stop_reason));
        runs[rep * n_variants + v] = s;

        std::lock_guard lock(log_mutex);
        log << "repeat " << rep << " " << name << ": F = " << s.final_objective
            << ", rmse = " << s.test_rmse << ", iterations = " << s.iterations
            << ", violations = " << s.violations << '\n';
        for (const auto& viol : report.violations) {
          log << "  violation " << to_string(viol.kind) << " at k = " << viol.k
              << " (excess " << viol.amount << ")\n";
        }
      }
    } catch (...) {
      errors[rep] = std::current_exception();
    }
  };

  const std::size_t workers = std::min(config.parallel_repeats, config.repeats);
  if (workers <= 1) {
    for (std::size_t rep = 0; rep < config.repeats; ++rep) run_repeat(rep);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t rep = next++; rep < config.repeats; rep = next++) run_repeat(rep);
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ExperimentResult result;
  result.runs = runs;
  for (std::size_t v = 0; v < n_variants; ++v) {
    std::vector<RunSummary> same;
    for (std::size_t rep = 0; rep < config.repeats; ++rep) same.push_back(runs[rep * n_variants + v]);
    result.aggregates.push_back(aggregate(same));
  }
  for (const auto& r : runs) result.total_violations += r.violations;

  std::ofstream summary(config.out_dir / "summary.csv");
  std::ofstream agg(config.out_dir / "aggregate.csv");
  std::ofstream json(config.out_dir / "summary.json");
  if (!summary || !agg || !json) throw DataError("cannot write summary files");
  write_summary_csv(summary, result.runs);
  write_aggregate_csv(agg, result.aggregates);
  json << summary_json(result.runs, result.aggregates) << '\n';
  return result;
}

int run_experiment(const ExperimentConfig& config, std::ostream& log) {
  try {
    const auto result = execute_experiment(config, log);
    if (result.total_violations > 0) {
      log << "invariant violations: " << result.total_violations << '\n';
      return exit_code::kInvariant;
    }
    return exit_code::kSuccess;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return exit_code::kConfig;
  } catch (const DataError& e) {
    log << "data error: " << e.what() << '\n';
    return exit_code::kData;
  } catch (const Diverged& e) {
    log << "solver error: " << e.what() << '\n';
    return exit_code::kSolver;
  } catch (const InvalidInput& e) {
    // Parameter bounds that slipped past config validation land here.
    log << "config error: " << e.what() << '\n';
    return exit_code::kConfig;
  } catch (const std::exception& e) {
    log << "solver error: " << e.what() << '\n';
    return exit_code::kSolver;
  }
}

}  // namespace dcae
