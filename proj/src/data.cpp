#include "garec/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include <json.hpp>

#include "garec/error.hpp"
#include "garec/rng.hpp"

namespace garec {

int IdMap::intern(std::int64_t raw) {
  auto it = raw_to_dense.find(raw);
  if (it != raw_to_dense.end()) return it->second;
  int dense = static_cast<int>(dense_to_raw.size());
  dense_to_raw.push_back(raw);
  raw_to_dense.emplace(raw, dense);
  return dense;
}

int IdMap::to_dense(std::int64_t raw) const {
  auto it = raw_to_dense.find(raw);
  if (it == raw_to_dense.end())
    throw Error("unknown raw id " + std::to_string(raw));
  return it->second;
}

std::int64_t IdMap::to_raw(int dense) const {
  if (dense < 0 || dense >= size())
    throw Error("dense id " + std::to_string(dense) + " out of range");
  return dense_to_raw[static_cast<std::size_t>(dense)];
}

IdMap IdMap::identity(int n) {
  IdMap m;
  m.dense_to_raw.resize(static_cast<std::size_t>(n));
  m.raw_to_dense.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    m.dense_to_raw[static_cast<std::size_t>(i)] = i;
    m.raw_to_dense.emplace(i, i);
  }
  return m;
}

double RatingDataset::mean_rating() const {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : records) sum += r.rating;
  return sum / static_cast<double>(records.size());
}

namespace {

// Parses a whole non-negative integer field; returns false on junk.
bool parse_int64(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string> split_fields(const std::string& line,
                                      RatingsFormat format) {
  std::vector<std::string> fields;
  if (format == RatingsFormat::Tab100k) {
    std::size_t start = 0;
    while (true) {
      std::size_t pos = line.find('\t', start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
  } else {
    std::size_t start = 0;
    while (true) {
      std::size_t pos = line.find("::", start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 2;
    }
  }
  return fields;
}

std::uint64_t pair_key(int u, int i) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
         static_cast<std::uint32_t>(i);
}

RatingDataset parse_ratings_stream(std::istream& in, RatingsFormat format,
                                   const std::string& path) {
  RatingDataset ds;
  std::unordered_set<std::uint64_t> seen;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line, format);
    if (fields.size() != 4)
      throw Error(path + ":" + std::to_string(line_no) +
                  ": malformed line (expected 4 fields, got " +
                  std::to_string(fields.size()) + ")");
    std::int64_t raw_user, raw_item, rating, timestamp;
    if (!parse_int64(fields[0], raw_user) || !parse_int64(fields[1], raw_item) ||
        !parse_int64(fields[2], rating) || !parse_int64(fields[3], timestamp))
      throw Error(path + ":" + std::to_string(line_no) +
                  ": malformed line (non-integer field)");
    if (rating < 1 || rating > 5)
      throw Error(path + ":" + std::to_string(line_no) + ": rating " +
                  std::to_string(rating) + " outside {1..5}");
    RatingRecord rec;
    rec.user = ds.user_ids.intern(raw_user);
    rec.item = ds.item_ids.intern(raw_item);
    rec.rating = static_cast<int>(rating);
    rec.timestamp = timestamp;
    if (!seen.insert(pair_key(rec.user, rec.item)).second)
      throw Error(path + ":" + std::to_string(line_no) +
                  ": duplicate (user,item) pair (" + fields[0] + "," +
                  fields[1] + ")");
    ds.records.push_back(rec);
  }
  if (ds.records.empty()) throw Error(path + ": no records");
  ds.n_users = ds.user_ids.size();
  ds.n_items = ds.item_ids.size();
  return ds;
}

}  // namespace

RatingDataset parse_ratings(const std::string& path, RatingsFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_ratings_stream(in, format, path);
}

RatingDataset parse_ratings_text(const std::string& text, RatingsFormat format,
                                 const std::string& path) {
  std::istringstream in(text);
  return parse_ratings_stream(in, format, path);
}

std::pair<RatingDataset, RatingDataset> split(const RatingDataset& dataset,
                                              const SplitSpec& spec) {
  const std::int64_t n = static_cast<std::int64_t>(dataset.records.size());
  if (n == 0) throw Error("split: empty dataset");
  const bool fold_mode = spec.n_folds >= 2;
  if (!fold_mode &&
      (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0))
    throw Error("split: train_fraction must lie in (0,1)");
  if (fold_mode && (spec.fold_index < 0 || spec.fold_index >= spec.n_folds))
    throw Error("split: fold_index out of range");

  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(spec.seed, /*tag=*/1));
  shuffle(perm, rng);

  std::int64_t test_begin, test_end;
  if (fold_mode) {
    test_begin = n * spec.fold_index / spec.n_folds;
    test_end = n * (spec.fold_index + 1) / spec.n_folds;
  } else {
    test_begin = 0;
    test_end = std::llround((1.0 - spec.train_fraction) * static_cast<double>(n));
  }

  std::vector<std::int64_t> test_idx(perm.begin() + test_begin,
                                     perm.begin() + test_end);
  std::vector<std::int64_t> train_idx;
  train_idx.reserve(static_cast<std::size_t>(n - (test_end - test_begin)));
  train_idx.insert(train_idx.end(), perm.begin(), perm.begin() + test_begin);
  train_idx.insert(train_idx.end(), perm.begin() + test_end, perm.end());
  // Keep the parent's record order inside each part.
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  auto take = [&dataset](const std::vector<std::int64_t>& idx) {
    RatingDataset part;
    part.n_users = dataset.n_users;
    part.n_items = dataset.n_items;
    part.user_ids = dataset.user_ids;
    part.item_ids = dataset.item_ids;
    part.records.reserve(idx.size());
    for (std::int64_t k : idx)
      part.records.push_back(dataset.records[static_cast<std::size_t>(k)]);
    return part;
  };
  return {take(train_idx), take(test_idx)};
}

double SparseRatings::rating(int u, int i) const {
  auto ids = items_of(u);
  auto vals = ratings_of_user(u);
  auto it = std::lower_bound(ids.begin(), ids.end(), i);
  if (it == ids.end() || *it != i) return 0.0;
  return vals[static_cast<std::size_t>(it - ids.begin())];
}

std::vector<std::tuple<int, int, double>> SparseRatings::triples() const {
  std::vector<std::tuple<int, int, double>> out;
  out.reserve(static_cast<std::size_t>(nnz()));
  for (int u = 0; u < n_users; ++u) {
    auto ids = items_of(u);
    auto vals = ratings_of_user(u);
    for (std::size_t k = 0; k < ids.size(); ++k)
      out.emplace_back(u, ids[k], vals[k]);
  }
  return out;
}

SparseRatings build_matrix(const RatingDataset& dataset) {
  SparseRatings R;
  R.n_users = dataset.n_users;
  R.n_items = dataset.n_items;
  const std::size_t nnz = dataset.records.size();

  R.user_offsets.assign(static_cast<std::size_t>(R.n_users) + 1, 0);
  R.item_offsets.assign(static_cast<std::size_t>(R.n_items) + 1, 0);
  for (const auto& r : dataset.records) {
    if (r.user < 0 || r.user >= R.n_users || r.item < 0 || r.item >= R.n_items)
      throw Error("build_matrix: record index out of range");
    ++R.user_offsets[static_cast<std::size_t>(r.user) + 1];
    ++R.item_offsets[static_cast<std::size_t>(r.item) + 1];
  }
  for (int u = 0; u < R.n_users; ++u)
    R.user_offsets[static_cast<std::size_t>(u) + 1] +=
        R.user_offsets[static_cast<std::size_t>(u)];
  for (int i = 0; i < R.n_items; ++i)
    R.item_offsets[static_cast<std::size_t>(i) + 1] +=
        R.item_offsets[static_cast<std::size_t>(i)];

  R.user_items.resize(nnz);
  R.user_vals.resize(nnz);
  R.item_users.resize(nnz);
  R.item_vals.resize(nnz);
  std::vector<std::int64_t> ucur(R.user_offsets.begin(),
                                 R.user_offsets.end() - 1);
  std::vector<std::int64_t> icur(R.item_offsets.begin(),
                                 R.item_offsets.end() - 1);
  for (const auto& r : dataset.records) {
    std::int64_t up = ucur[static_cast<std::size_t>(r.user)]++;
    R.user_items[static_cast<std::size_t>(up)] = r.item;
    R.user_vals[static_cast<std::size_t>(up)] = r.rating;
    std::int64_t ip = icur[static_cast<std::size_t>(r.item)]++;
    R.item_users[static_cast<std::size_t>(ip)] = r.user;
    R.item_vals[static_cast<std::size_t>(ip)] = r.rating;
  }

  // Canonical ascending column order within each row, independent of record
  // storage order.
  auto sort_row = [](std::span<int> ids, std::span<double> vals) {
    std::vector<std::pair<int, double>> tmp(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) tmp[k] = {ids[k], vals[k]};
    std::sort(tmp.begin(), tmp.end());
    for (std::size_t k = 0; k < ids.size(); ++k) {
      ids[k] = tmp[k].first;
      vals[k] = tmp[k].second;
    }
  };
  for (int u = 0; u < R.n_users; ++u) {
    std::size_t b = static_cast<std::size_t>(R.user_offsets[u]);
    std::size_t len = static_cast<std::size_t>(R.user_offsets[u + 1]) - b;
    sort_row({R.user_items.data() + b, len}, {R.user_vals.data() + b, len});
  }
  for (int i = 0; i < R.n_items; ++i) {
    std::size_t b = static_cast<std::size_t>(R.item_offsets[i]);
    std::size_t len = static_cast<std::size_t>(R.item_offsets[i + 1]) - b;
    sort_row({R.item_users.data() + b, len}, {R.item_vals.data() + b, len});
  }
  return R;
}

void write_canonical_csv(const RatingDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& r : dataset.records)
    out << r.user << ',' << r.item << ',' << r.rating << '\n';
  if (!out) throw Error("write failed for " + path);
}

RatingDataset load_canonical_csv(const std::string& path, int n_users,
                                 int n_items) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  RatingDataset ds;
  ds.n_users = n_users;
  ds.n_items = n_items;
  ds.user_ids = IdMap::identity(n_users);
  ds.item_ids = IdMap::identity(n_items);
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::int64_t u, i, r;
    std::size_t c1 = line.find(','), c2;
    if (c1 == std::string::npos ||
        (c2 = line.find(',', c1 + 1)) == std::string::npos ||
        !parse_int64(line.substr(0, c1), u) ||
        !parse_int64(line.substr(c1 + 1, c2 - c1 - 1), i) ||
        !parse_int64(line.substr(c2 + 1), r))
      throw Error(path + ":" + std::to_string(line_no) + ": malformed line");
    if (u < 0 || u >= n_users || i < 0 || i >= n_items)
      throw Error(path + ":" + std::to_string(line_no) + ": id out of range");
    if (r < 1 || r > 5)
      throw Error(path + ":" + std::to_string(line_no) + ": rating " +
                  std::to_string(r) + " outside {1..5}");
    ds.records.push_back(RatingRecord{static_cast<int>(u), static_cast<int>(i),
                                      static_cast<int>(r), 0});
  }
  return ds;
}

void save_prepared(const std::string& dir, const PreparedMeta& meta,
                   const RatingDataset& train, const RatingDataset& test) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["n_users"] = meta.n_users;
  j["n_items"] = meta.n_items;
  j["n_records"] = meta.n_records;
  j["train_fraction"] = meta.train_fraction;
  j["seed"] = meta.seed;
  j["folds"] = meta.folds;
  j["source_format"] = meta.source_format;
  std::ofstream out(dir + "/meta.json");
  if (!out) throw Error("cannot write " + dir + "/meta.json");
  out << j.dump(2) << '\n';
  write_canonical_csv(train, dir + "/train.csv");
  write_canonical_csv(test, dir + "/test.csv");
}

PreparedMeta load_prepared_meta(const std::string& dir) {
  std::ifstream in(dir + "/meta.json");
  if (!in) throw Error("cannot open " + dir + "/meta.json");
  nlohmann::json j = nlohmann::json::parse(in);
  PreparedMeta meta;
  meta.n_users = j.at("n_users").get<int>();
  meta.n_items = j.at("n_items").get<int>();
  meta.n_records = j.at("n_records").get<std::int64_t>();
  meta.train_fraction = j.at("train_fraction").get<double>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  meta.folds = j.at("folds").get<int>();
  meta.source_format = j.at("source_format").get<std::string>();
  return meta;
}

RatingDataset load_prepared_part(const std::string& dir,
                                 const std::string& name) {
  PreparedMeta meta = load_prepared_meta(dir);
  return load_canonical_csv(dir + "/" + name + ".csv", meta.n_users,
                            meta.n_items);
}

}  // namespace garec
