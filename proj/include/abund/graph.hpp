// Region adjacency structure for the spatial model. Undirected, simple,
// connected; weights are binary.
#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "abund/common.hpp"

namespace abund {

struct AdjacencyGraph {
  int n_regions = 0;
  // Each edge once, ordered (i < j), no duplicates, no self loops.
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> neighbors;  // sorted per region
  std::vector<int> neighbor_counts;         // w_i+
  std::vector<std::string> region_labels;   // dense index -> external id

  bool adjacent(int i, int j) const;
  int label_index(const std::string& label) const;  // -1 when absent
};

// Rook-neighbour grid of rows x cols regions, labelled "r<row>c<col>"
// (1-based), row-major dense order. Requires rows*cols >= 2.
AdjacencyGraph build_grid_adjacency(int rows, int cols);

// Edge list, one "id1 id2" pair per line, '#' starts a comment, blank lines
// skipped. Labels are assigned dense indices in first-appearance order.
// Duplicate edges collapse; self loops and disconnected graphs are errors
// (the error message lists the components).
AdjacencyGraph load_adjacency(std::istream& in);
AdjacencyGraph load_adjacency_file(const std::string& path);

}  // namespace abund
