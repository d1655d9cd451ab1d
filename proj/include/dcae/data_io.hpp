#pragma once

// Ratings ingestion: MovieLens-style triplet files, seeded train/test
// splits, and a synthetic low-rank generator.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dcae {

struct Rating {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;

  bool operator==(const Rating&) const = default;
};

/// Observed entries of a ratings matrix in COO form.
///
/// External user/item IDs are remapped to dense indices in ascending ID
/// order, so the mapping does not depend on line order. Entries are sorted
/// by (row, col) and unique.
struct SparseRatings {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<Rating> entries;
  std::vector<std::int64_t> row_ids;  // dense index -> external id
  std::vector<std::int64_t> col_ids;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  /// ||P(A)||_F over the observed entries.
  double frobenius_norm() const;
  double mean_value() const;

  /// Throws DataError when an invariant does not hold.
  void validate() const;

  bool operator==(const SparseRatings&) const = default;
};

enum class RatingFormat { DoubleColon, Comma, Whitespace };

RatingFormat parse_format(std::string_view name);
std::string_view to_string(RatingFormat format);
std::string_view file_extension(RatingFormat format);

/// Reads `user<sep>item<sep>rating[<sep>timestamp]` lines. Blank lines and
/// lines starting with '#' are skipped; for CSV a non-numeric first record
/// is taken as a header. Malformed lines and duplicate (user, item) pairs
/// raise ParseError with the offending line number.
SparseRatings parse_ratings(std::istream& in, RatingFormat format);
SparseRatings read_ratings(const std::filesystem::path& path, RatingFormat format);

/// Writes external IDs and shortest round-trip values, one entry per line.
void write_ratings(std::ostream& out, const SparseRatings& ratings, RatingFormat format);
void write_ratings(const std::filesystem::path& path, const SparseRatings& ratings,
                   RatingFormat format);

struct SplitRatings {
  SparseRatings train;
  SparseRatings test;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
};

/// Random partition with |train| = round(train_fraction * N). Both halves
/// keep the full matrix shape and ID maps.
SplitRatings split(const SparseRatings& ratings, double train_fraction, std::uint64_t seed);

/// Writes <stem>_train.<ext>, <stem>_test.<ext> and a <stem>.json sidecar
/// with seed, fraction and counts.
void write_split(const SplitRatings& split, const std::filesystem::path& dir,
                 const std::string& stem, RatingFormat format);

/// A = U* V* + N(0, noise_sd^2) truncated at 0, with U*, V* uniform on
/// [0, 1]; round(density * m * n) entries observed.
SparseRatings synthesize(std::size_t m, std::size_t n, std::size_t t_true, double density,
                         double noise_sd, std::uint64_t seed);

}  // namespace dcae
