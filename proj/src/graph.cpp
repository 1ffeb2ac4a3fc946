#include "garec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "garec/error.hpp"
#include "garec/threads.hpp"

namespace garec {

namespace {

bool heavier(const NeighborEntry& a, const NeighborEntry& b) {
  if (a.weight != b.weight) return a.weight > b.weight;
  return a.id < b.id;
}

// Co-rating lists for one side. "rows" is the CSR view of the side being
// built (users for W_UUC), "cols" the opposite view used as the inverted
// index. For each node r, walk its rated entities and accumulate
// weight(r,y) += v_r * v_y over the co-raters y, in a dense scratch array
// with a touched-id list; no n x n table is ever formed.
std::vector<NeighborList> build_corating_side(
    int n_rows, const std::vector<std::int64_t>& row_offsets,
    const std::vector<int>& row_cols, const std::vector<double>& row_vals,
    const std::vector<std::int64_t>& col_offsets,
    const std::vector<int>& col_rows, const std::vector<double>& col_vals,
    int cap, int threads) {
  std::vector<NeighborList> lists(static_cast<std::size_t>(n_rows));
  parallel_chunks(n_rows, threads, [&](int, std::int64_t begin,
                                       std::int64_t end) {
    std::vector<double> acc(static_cast<std::size_t>(n_rows), 0.0);
    std::vector<int> touched;
    for (std::int64_t r = begin; r < end; ++r) {
      touched.clear();
      for (std::int64_t p = row_offsets[static_cast<std::size_t>(r)];
           p < row_offsets[static_cast<std::size_t>(r) + 1]; ++p) {
        const int c = row_cols[static_cast<std::size_t>(p)];
        const double v = row_vals[static_cast<std::size_t>(p)];
        for (std::int64_t q = col_offsets[static_cast<std::size_t>(c)];
             q < col_offsets[static_cast<std::size_t>(c) + 1]; ++q) {
          const int y = col_rows[static_cast<std::size_t>(q)];
          if (y == r) continue;
          if (acc[static_cast<std::size_t>(y)] == 0.0) touched.push_back(y);
          acc[static_cast<std::size_t>(y)] +=
              v * col_vals[static_cast<std::size_t>(q)];
        }
      }
      NeighborList& out = lists[static_cast<std::size_t>(r)];
      out.reserve(touched.size());
      for (int y : touched) {
        out.push_back(NeighborEntry{y, acc[static_cast<std::size_t>(y)]});
        acc[static_cast<std::size_t>(y)] = 0.0;
      }
      sort_and_cap(out, cap);
    }
  });
  return lists;
}

}  // namespace

void sort_and_cap(NeighborList& list, int cap) {
  if (cap >= 0 && static_cast<int>(list.size()) > cap) {
    std::nth_element(list.begin(), list.begin() + cap, list.end(), heavier);
    list.resize(static_cast<std::size_t>(cap));
  }
  std::sort(list.begin(), list.end(), heavier);
}

std::vector<NeighborList> build_user_corating(const SparseRatings& R, int cap,
                                              int threads) {
  if (R.nnz() == 0) throw Error("build_user_corating: empty matrix");
  return build_corating_side(R.n_users, R.user_offsets, R.user_items,
                             R.user_vals, R.item_offsets, R.item_users,
                             R.item_vals, cap, threads);
}

std::vector<NeighborList> build_item_corating(const SparseRatings& R, int cap,
                                              int threads) {
  if (R.nnz() == 0) throw Error("build_item_corating: empty matrix");
  return build_corating_side(R.n_items, R.item_offsets, R.item_users,
                             R.item_vals, R.user_offsets, R.user_items,
                             R.user_vals, cap, threads);
}

CoRatingGraph build_corating_graph(const SparseRatings& R, int cap,
                                   int threads) {
  CoRatingGraph g;
  g.cap = cap;
  g.user_lists = build_user_corating(R, cap, threads);
  g.item_lists = build_item_corating(R, cap, threads);
  return g;
}

NeighborList target_user_neighbors(const SparseRatings& R, int u, int i,
                                   int cap) {
  if (i < 0 || i >= R.n_items) throw Error("target_user_neighbors: bad item");
  NeighborList out;
  auto raters = R.users_of(i);
  auto vals = R.ratings_of_item(i);
  out.reserve(raters.size());
  for (std::size_t k = 0; k < raters.size(); ++k)
    if (raters[k] != u) out.push_back(NeighborEntry{raters[k], vals[k]});
  sort_and_cap(out, cap);
  return out;
}

NeighborList target_item_neighbors(const SparseRatings& R, int u, int i,
                                   int cap) {
  if (u < 0 || u >= R.n_users) throw Error("target_item_neighbors: bad user");
  NeighborList out;
  auto rated = R.items_of(u);
  auto vals = R.ratings_of_user(u);
  out.reserve(rated.size());
  for (std::size_t k = 0; k < rated.size(); ++k)
    if (rated[k] != i) out.push_back(NeighborEntry{rated[k], vals[k]});
  sort_and_cap(out, cap);
  return out;
}

NeighborList merge_neighborhoods(const NeighborList& corating,
                                 const NeighborList& target, int cap) {
  NeighborList merged;
  merged.reserve(corating.size() + target.size());
  // Lists arrive sorted by weight, so each list's max is its front entry.
  auto append_normalized = [&merged](const NeighborList& list) {
    if (list.empty()) return;
    const double max_w = list.front().weight;
    for (const auto& e : list)
      merged.push_back(NeighborEntry{e.id, e.weight / max_w});
  };
  append_normalized(corating);
  append_normalized(target);

  // Sum duplicates via an id-sorted sweep (stable and hash-free).
  std::sort(merged.begin(), merged.end(),
            [](const NeighborEntry& a, const NeighborEntry& b) {
              return a.id < b.id;
            });
  NeighborList out;
  out.reserve(merged.size());
  for (const auto& e : merged) {
    if (!out.empty() && out.back().id == e.id)
      out.back().weight += e.weight;
    else
      out.push_back(e);
  }
  sort_and_cap(out, cap);
  return out;
}

void dump_neighbor_lists(std::ostream& os,
                         const std::vector<NeighborList>& lists) {
  os.precision(6);
  for (std::size_t n = 0; n < lists.size(); ++n) {
    os << n << ':';
    for (const auto& e : lists[n]) os << " (" << e.id << ',' << e.weight << ')';
    os << '\n';
  }
}

}  // namespace garec
