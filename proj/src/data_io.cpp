#include "dcae/data_io.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <tuple>

#include "dcae/errors.hpp"
#include "dcae/rng.hpp"

namespace dcae {

namespace {

struct RawRating {
  std::int64_t user;
  std::int64_t item;
  double value;
  std::size_t line;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> tokenize(std::string_view line, RatingFormat format) {
  std::vector<std::string_view> fields;
  switch (format) {
    case RatingFormat::DoubleColon:
    case RatingFormat::Comma: {
      const std::string_view sep = format == RatingFormat::DoubleColon ? "::" : ",";
      std::size_t pos = 0;
      while (true) {
        const auto next = line.find(sep, pos);
        fields.push_back(trim(line.substr(pos, next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + sep.size();
      }
      break;
    }
    case RatingFormat::Whitespace: {
      std::size_t pos = 0;
      while (pos < line.size()) {
        const auto start = line.find_first_not_of(" \t", pos);
        if (start == std::string_view::npos) break;
        const auto end = line.find_first_of(" \t", start);
        fields.push_back(line.substr(start, end - start));
        pos = end == std::string_view::npos ? line.size() : end;
      }
      break;
    }
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<std::int64_t> sorted_unique(std::vector<std::int64_t> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::size_t dense_index(const std::vector<std::int64_t>& ids, std::int64_t id) {
  return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
}

}  // namespace

double SparseRatings::frobenius_norm() const {
  double sum = 0.0;
  for (const auto& e : entries) sum += e.value * e.value;
  return std::sqrt(sum);
}

double SparseRatings::mean_value() const {
  if (entries.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : entries) sum += e.value;
  return sum / static_cast<double>(entries.size());
}

void SparseRatings::validate() const {
  if (row_ids.size() != n_rows || col_ids.size() != n_cols) {
    throw DataError("ID maps do not match the matrix shape");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.row >= n_rows || e.col >= n_cols) throw DataError("entry index out of bounds");
    if (!std::isfinite(e.value)) throw DataError("non-finite rating value");
    if (i > 0) {
      const auto& p = entries[i - 1];
      if (std::tie(p.row, p.col) >= std::tie(e.row, e.col)) {
        throw DataError("entries are not strictly sorted by (row, col)");
      }
    }
  }
}

RatingFormat parse_format(std::string_view name) {
  if (name == "mlcolon") return RatingFormat::DoubleColon;
  if (name == "csv") return RatingFormat::Comma;
  if (name == "ws") return RatingFormat::Whitespace;
  throw ConfigError("unknown ratings format '" + std::string(name) + "'");
}

std::string_view to_string(RatingFormat format) {
  switch (format) {
    case RatingFormat::DoubleColon:
      return "mlcolon";
    case RatingFormat::Comma:
      return "csv";
    case RatingFormat::Whitespace:
      return "ws";
  }
  return "unknown";
}

std::string_view file_extension(RatingFormat format) {
  switch (format) {
    case RatingFormat::DoubleColon:
      return "dat";
    case RatingFormat::Comma:
      return "csv";
    case RatingFormat::Whitespace:
      return "txt";
  }
  return "dat";
}

SparseRatings parse_ratings(std::istream& in, RatingFormat format) {
  std::vector<RawRating> raw;
  std::string line;
  std::size_t line_no = 0;
  bool seen_record = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = tokenize(body, format);
    if (fields.size() < 3 || fields.size() > 4) {
      throw ParseError("expected 3 or 4 fields, found " + std::to_string(fields.size()), line_no);
    }
    RawRating r{0, 0, 0.0, line_no};
    const bool user_ok = parse_number(fields[0], r.user);
    if (!user_ok && !seen_record && format == RatingFormat::Comma) {
      seen_record = true;  // header row
      continue;
    }
    seen_record = true;
    if (!user_ok) throw ParseError("invalid user id '" + std::string(fields[0]) + "'", line_no);
    if (!parse_number(fields[1], r.item)) {
      throw ParseError("invalid item id '" + std::string(fields[1]) + "'", line_no);
    }
    if (!parse_number(fields[2], r.value) || !std::isfinite(r.value)) {
      throw ParseError("invalid rating '" + std::string(fields[2]) + "'", line_no);
    }
    raw.push_back(r);
  }
  if (raw.empty()) throw DataError("no entries");

  std::stable_sort(raw.begin(), raw.end(), [](const RawRating& a, const RawRating& b) {
    return std::tie(a.user, a.item) < std::tie(b.user, b.item);
  });
  for (std::size_t i = 1; i < raw.size(); ++i) {
    if (raw[i].user == raw[i - 1].user && raw[i].item == raw[i - 1].item) {
      throw ParseError("duplicate rating for user " + std::to_string(raw[i].user) + ", item " +
                           std::to_string(raw[i].item) + " (first seen on line " +
                           std::to_string(raw[i - 1].line) + ")",
                       raw[i].line);
    }
  }

  SparseRatings out;
  std::vector<std::int64_t> users, items;
  users.reserve(raw.size());
  items.reserve(raw.size());
  for (const auto& r : raw) {
    users.push_back(r.user);
    items.push_back(r.item);
  }
  out.row_ids = sorted_unique(std::move(users));
  out.col_ids = sorted_unique(std::move(items));
  out.n_rows = out.row_ids.size();
  out.n_cols = out.col_ids.size();
  out.entries.reserve(raw.size());
  for (const auto& r : raw) {
    out.entries.push_back({dense_index(out.row_ids, r.user), dense_index(out.col_ids, r.item),
                           r.value});
  }
  // raw is sorted by external id, and the maps are monotone.
  return out;
}

SparseRatings read_ratings(const std::filesystem::path& path, RatingFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_ratings(in, format);
}

void write_ratings(std::ostream& out, const SparseRatings& ratings, RatingFormat format) {
  const std::string_view sep = format == RatingFormat::DoubleColon ? "::"
                               : format == RatingFormat::Comma     ? ","
                                                                   : " ";
  for (const auto& e : ratings.entries) {
    out << ratings.row_ids[e.row] << sep << ratings.col_ids[e.col] << sep
        << format_double(e.value) << '\n';
  }
}

void write_ratings(const std::filesystem::path& path, const SparseRatings& ratings,
                   RatingFormat format) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_ratings(out, ratings, format);
}

SplitRatings split(const SparseRatings& ratings, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidInput("train fraction must lie in (0, 1)");
  }
  const std::size_t n = ratings.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) {
    throw InvalidInput("split would leave the train or test set empty");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

  SplitRatings out;
  out.seed = seed;
  out.train_fraction = train_fraction;
  for (SparseRatings* part : {&out.train, &out.test}) {
    part->n_rows = ratings.n_rows;
    part->n_cols = ratings.n_cols;
    part->row_ids = ratings.row_ids;
    part->col_ids = ratings.col_ids;
  }
  out.train.entries.reserve(n_train);
  out.test.entries.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) {
    auto& dest = i < n_train ? out.train : out.test;
    dest.entries.push_back(ratings.entries[order[i]]);
  }
  return out;
}

void write_split(const SplitRatings& split, const std::filesystem::path& dir,
                 const std::string& stem, RatingFormat format) {
  const std::string ext(file_extension(format));
  write_ratings(dir / (stem + "_train." + ext), split.train, format);
  write_ratings(dir / (stem + "_test." + ext), split.test, format);
  nlohmann::ordered_json meta;
  meta["seed"] = split.seed;
  meta["train_fraction"] = split.train_fraction;
  meta["n_rows"] = split.train.n_rows;
  meta["n_cols"] = split.train.n_cols;
  meta["n_train"] = split.train.size();
  meta["n_test"] = split.test.size();
  meta["format"] = std::string(to_string(format));
  std::ofstream out(dir / (stem + ".json"));
  if (!out) throw DataError("cannot write split metadata in " + dir.string());
  out << meta.dump(2) << '\n';
}

SparseRatings synthesize(std::size_t m, std::size_t n, std::size_t t_true, double density,
                         double noise_sd, std::uint64_t seed) {
  if (m == 0 || n == 0) throw InvalidInput("synthesize: matrix must be non-empty");
  if (t_true == 0) throw InvalidInput("synthesize: t_true must be >= 1");
  if (!(density > 0.0 && density <= 1.0)) throw InvalidInput("synthesize: density must lie in (0, 1]");
  if (!(noise_sd >= 0.0)) throw InvalidInput("synthesize: noise_sd must be >= 0");

  Rng rng(seed);
  Eigen::MatrixXd U(m, t_true), V(t_true, n);
  for (Eigen::Index j = 0; j < U.cols(); ++j)
    for (Eigen::Index i = 0; i < U.rows(); ++i) U(i, j) = rng.uniform();
  for (Eigen::Index j = 0; j < V.cols(); ++j)
    for (Eigen::Index i = 0; i < V.rows(); ++i) V(i, j) = rng.uniform();

  const std::size_t total = m * n;
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(density * static_cast<double>(total))));
  std::vector<std::size_t> cells(total);
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  rng.shuffle(cells);
  cells.resize(count);
  std::sort(cells.begin(), cells.end());

  SparseRatings out;
  out.n_rows = m;
  out.n_cols = n;
  out.row_ids.resize(m);
  out.col_ids.resize(n);
  std::iota(out.row_ids.begin(), out.row_ids.end(), std::int64_t{1});
  std::iota(out.col_ids.begin(), out.col_ids.end(), std::int64_t{1});
  out.entries.reserve(count);
  for (const std::size_t cell : cells) {
    const std::size_t i = cell / n;
    const std::size_t j = cell % n;
    double value = U.row(static_cast<Eigen::Index>(i)).dot(V.col(static_cast<Eigen::Index>(j)));
    if (noise_sd > 0.0) value = std::max(0.0, value + noise_sd * rng.normal());
    out.entries.push_back({i, j, value});
  }
  return out;
}

}  // namespace dcae
