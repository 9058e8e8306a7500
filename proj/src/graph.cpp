#include "abund/graph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace abund {

bool AdjacencyGraph::adjacent(int i, int j) const {
  if (i == j) return false;
  const auto& nb = neighbors[i];
  return std::binary_search(nb.begin(), nb.end(), j);
}

int AdjacencyGraph::label_index(const std::string& label) const {
  for (int i = 0; i < n_regions; ++i) {
    if (region_labels[i] == label) return i;
  }
  return -1;
}

namespace {

void finalize(AdjacencyGraph& g, const std::set<std::pair<int, int>>& edge_set) {
  g.edges.assign(edge_set.begin(), edge_set.end());
  g.neighbors.assign(g.n_regions, {});
  for (auto [i, j] : g.edges) {
    g.neighbors[i].push_back(j);
    g.neighbors[j].push_back(i);
  }
  g.neighbor_counts.resize(g.n_regions);
  for (int i = 0; i < g.n_regions; ++i) {
    std::sort(g.neighbors[i].begin(), g.neighbors[i].end());
    g.neighbor_counts[i] = static_cast<int>(g.neighbors[i].size());
  }
}

// Connected components by label, for the disconnected-graph error message.
std::vector<std::vector<int>> components(const AdjacencyGraph& g) {
  std::vector<int> comp(g.n_regions, -1);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < g.n_regions; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<int> stack{s}, members;
    comp[s] = static_cast<int>(out.size());
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      members.push_back(v);
      for (int w : g.neighbors[v]) {
        if (comp[w] < 0) {
          comp[w] = comp[s];
          stack.push_back(w);
        }
      }
    }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

void require_connected(const AdjacencyGraph& g) {
  auto comps = components(g);
  if (comps.size() <= 1) return;
  std::ostringstream msg;
  msg << "adjacency graph is disconnected (" << comps.size() << " components):";
  for (const auto& c : comps) {
    msg << " {";
    for (size_t k = 0; k < c.size(); ++k) {
      if (k) msg << ",";
      msg << g.region_labels[c[k]];
    }
    msg << "}";
  }
  throw ValidationError(msg.str());
}

}  // namespace

AdjacencyGraph build_grid_adjacency(int rows, int cols) {
  if (rows < 1 || cols < 1 || static_cast<long long>(rows) * cols < 2) {
    throw ValidationError("grid adjacency needs at least 2 regions");
  }
  AdjacencyGraph g;
  g.n_regions = rows * cols;
  g.region_labels.resize(g.n_regions);
  std::set<std::pair<int, int>> edge_set;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      int idx = r * cols + c;
      g.region_labels[idx] = "r" + std::to_string(r + 1) + "c" + std::to_string(c + 1);
      if (c + 1 < cols) edge_set.insert({idx, idx + 1});
      if (r + 1 < rows) edge_set.insert({idx, idx + cols});
    }
  }
  finalize(g, edge_set);
  return g;
}

AdjacencyGraph load_adjacency(std::istream& in) {
  AdjacencyGraph g;
  std::map<std::string, int> index;
  std::set<std::pair<int, int>> edge_set;
  std::string line;
  int line_no = 0;
  auto intern = [&](const std::string& label) {
    if (label.find(',') != std::string::npos) {
      throw ValidationError("region label '" + label +
                            "' contains a comma; labels must be CSV-safe");
    }
    auto it = index.find(label);
    if (it != index.end()) return it->second;
    int idx = static_cast<int>(g.region_labels.size());
    index.emplace(label, idx);
    g.region_labels.push_back(label);
    return idx;
  };
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string a, b, extra;
    if (!(ss >> a)) continue;  // blank
    if (!(ss >> b)) {
      throw ValidationError("adjacency line " + std::to_string(line_no) +
                            ": expected two region ids, got one");
    }
    if (ss >> extra) {
      throw ValidationError("adjacency line " + std::to_string(line_no) +
                            ": trailing token '" + extra + "'");
    }
    if (a == b) {
      throw ValidationError("adjacency line " + std::to_string(line_no) +
                            ": self loop on region '" + a + "'");
    }
    int i = intern(a);
    int j = intern(b);
    edge_set.insert({std::min(i, j), std::max(i, j)});
  }
  g.n_regions = static_cast<int>(g.region_labels.size());
  if (g.n_regions < 2) {
    throw ValidationError("adjacency file defines fewer than 2 regions");
  }
  finalize(g, edge_set);
  require_connected(g);
  return g;
}

AdjacencyGraph load_adjacency_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open adjacency file: " + path);
  return load_adjacency(in);
}

}  // namespace abund
