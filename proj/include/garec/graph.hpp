#pragma once

#include <iosfwd>
#include <vector>

#include "garec/data.hpp"

namespace garec {

struct NeighborEntry {
  int id = 0;
  double weight = 0.0;
};

// Sorted by descending weight, ties broken by ascending id; length <= cap.
using NeighborList = std::vector<NeighborEntry>;

// Sorts by (weight desc, id asc) and truncates to cap (cap < 0 leaves the
// list uncapped).
void sort_and_cap(NeighborList& list, int cap);

// Precomputed co-rating neighborhoods: weight(u,y) = sum over co-rated items
// of r_ui * r_yi (and the item-side mirror). Built from the train matrix by
// inverted-index accumulation over the opposite CSR view; never materializes
// an n x n table.
struct CoRatingGraph {
  std::vector<NeighborList> user_lists;
  std::vector<NeighborList> item_lists;
  int cap = 0;
};

std::vector<NeighborList> build_user_corating(const SparseRatings& R, int cap,
                                              int threads = 1);
std::vector<NeighborList> build_item_corating(const SparseRatings& R, int cap,
                                              int threads = 1);
CoRatingGraph build_corating_graph(const SparseRatings& R, int cap,
                                   int threads = 1);

// Raters of the target item i, weighted by their rating of i, excluding the
// querying user u. Cold item (no train raters) yields an empty list.
NeighborList target_user_neighbors(const SparseRatings& R, int u, int i, int cap);

// Items rated by u, weighted by u's rating, excluding the target item i.
NeighborList target_item_neighbors(const SparseRatings& R, int u, int i, int cap);

// Max-normalizes each list by its own largest weight (both types then lie in
// (0,1]), merges duplicates by summing the normalized weights, re-caps to
// cap. Merged weights are therefore <= 2.
NeighborList merge_neighborhoods(const NeighborList& corating,
                                 const NeighborList& target, int cap);

// Debug dump: one line per node, "node_id: (neighbor,weight) ...", weights
// printed with 6 significant digits.
void dump_neighbor_lists(std::ostream& os,
                         const std::vector<NeighborList>& lists);

}  // namespace garec
