#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace garec {

// One explicit-feedback event. Ids are dense 0-based indices after
// re-mapping; the raw file ids live in RatingDataset::user_ids/item_ids.
struct RatingRecord {
  int user = 0;
  int item = 0;
  int rating = 0;           // integer in {1..5}
  std::int64_t timestamp = 0;  // retained but unused by the model
};

// Bijection raw id <-> dense index.
struct IdMap {
  std::vector<std::int64_t> dense_to_raw;
  std::unordered_map<std::int64_t, int> raw_to_dense;

  int intern(std::int64_t raw);        // returns dense index, inserting if new
  int to_dense(std::int64_t raw) const;  // throws if unknown
  std::int64_t to_raw(int dense) const;  // throws if out of range
  int size() const { return static_cast<int>(dense_to_raw.size()); }
  static IdMap identity(int n);
};

struct RatingDataset {
  std::vector<RatingRecord> records;
  int n_users = 0;
  int n_items = 0;
  IdMap user_ids;
  IdMap item_ids;

  double mean_rating() const;
};

enum class RatingsFormat { Tab100k, Sep1m };

// Parses the two MovieLens layouts (100K: tab-separated, 1M: "::"-separated)
// into a densely re-indexed dataset. Blank lines are skipped. Throws
// garec::Error on malformed lines (with line number), ratings outside {1..5},
// duplicate (user,item) pairs, or an empty file.
RatingDataset parse_ratings(const std::string& path, RatingsFormat format);

// Same validation applied to in-memory text; path only labels error messages.
RatingDataset parse_ratings_text(const std::string& text, RatingsFormat format,
                                 const std::string& path = "<memory>");

struct SplitSpec {
  double train_fraction = 0.8;
  int fold_index = 0;
  int n_folds = 0;  // >= 2 selects fold mode; train_fraction is ignored then
  std::uint64_t seed = 0;
};

// Record-level uniform split. Plain mode: |test| = round((1-f)*N). Fold mode:
// test is the fold_index-th slice of one seeded permutation, so the n_folds
// test sets partition the dataset. Both halves keep the parent's id maps and
// dimensions, so users/items seen only in test stay addressable downstream.
std::pair<RatingDataset, RatingDataset> split(const RatingDataset& dataset,
                                              const SplitSpec& spec);

// Observed ratings in dual CSR form. The by-user and by-item views hold the
// same (u,i,r) triples; column ids within each row are strictly ascending.
struct SparseRatings {
  int n_users = 0;
  int n_items = 0;

  std::vector<std::int64_t> user_offsets;  // size n_users+1
  std::vector<int> user_items;
  std::vector<double> user_vals;

  std::vector<std::int64_t> item_offsets;  // size n_items+1
  std::vector<int> item_users;
  std::vector<double> item_vals;

  std::int64_t nnz() const { return static_cast<std::int64_t>(user_items.size()); }

  std::span<const int> items_of(int u) const {
    return {user_items.data() + user_offsets[u],
            static_cast<std::size_t>(user_offsets[u + 1] - user_offsets[u])};
  }
  std::span<const double> ratings_of_user(int u) const {
    return {user_vals.data() + user_offsets[u],
            static_cast<std::size_t>(user_offsets[u + 1] - user_offsets[u])};
  }
  std::span<const int> users_of(int i) const {
    return {item_users.data() + item_offsets[i],
            static_cast<std::size_t>(item_offsets[i + 1] - item_offsets[i])};
  }
  std::span<const double> ratings_of_item(int i) const {
    return {item_vals.data() + item_offsets[i],
            static_cast<std::size_t>(item_offsets[i + 1] - item_offsets[i])};
  }

  // Rating of (u,i) via binary search over the user row; 0 when unobserved.
  double rating(int u, int i) const;

  // All triples in by-user order.
  std::vector<std::tuple<int, int, double>> triples() const;
};

SparseRatings build_matrix(const RatingDataset& dataset);

// Canonical headerless CSV "user,item,rating" with dense ids.
void write_canonical_csv(const RatingDataset& dataset, const std::string& path);
RatingDataset load_canonical_csv(const std::string& path, int n_users, int n_items);

// Prepared-directory layout used by the CLI: meta.json + train.csv/test.csv
// (+ foldK_train.csv/foldK_test.csv when folds were requested).
struct PreparedMeta {
  int n_users = 0;
  int n_items = 0;
  std::int64_t n_records = 0;
  double train_fraction = 0.0;
  std::uint64_t seed = 0;
  int folds = 0;
  std::string source_format;
};

void save_prepared(const std::string& dir, const PreparedMeta& meta,
                   const RatingDataset& train, const RatingDataset& test);
PreparedMeta load_prepared_meta(const std::string& dir);
RatingDataset load_prepared_part(const std::string& dir, const std::string& name);

}  // namespace garec
