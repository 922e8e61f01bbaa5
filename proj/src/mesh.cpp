#include "qmgp/mesh.hpp"

#include "qmgp/tessellation.hpp"

#include <algorithm>
#include <ostream>
#include <set>
#include <stdexcept>

namespace qmgp {

namespace {

// Nearest reference node from j along `axis` in direction `step` (+1 or -1).
int line_of_sight(int j, int axis, int step, const MeshGraph& g) {
  auto mi = multi_index(j, g.shape);
  for (int k = mi[static_cast<std::size_t>(axis)] + step;
       k >= 0 && k < g.shape[static_cast<std::size_t>(axis)]; k += step) {
    mi[static_cast<std::size_t>(axis)] = k;
    const int id = flat_index(mi, g.shape);
    if (g.nonempty[static_cast<std::size_t>(id)]) return id;
  }
  return -1;
}

void add_unique(std::vector<int>& v, int x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

}  // namespace

void MeshGraph::rebuild_children() {
  const auto m = static_cast<std::size_t>(M());
  children.assign(m, {});
  other_children.assign(m, {});
  for (std::size_t j = 0; j < m; ++j) {
    for (int p : parents[j]) children[static_cast<std::size_t>(p)].push_back(static_cast<int>(j));
    for (int p : other_parents[j])
      other_children[static_cast<std::size_t>(p)].push_back(static_cast<int>(j));
  }
}

std::vector<int> parents_for_other(int j, const MeshGraph& g) {
  std::vector<int> pa;
  if (g.nonempty[static_cast<std::size_t>(j)]) {
    pa.push_back(j);
    for (int p : g.parents[static_cast<std::size_t>(j)]) pa.push_back(p);
    return pa;
  }
  for (int r = 0; r < g.dim(); ++r) {
    const int before = line_of_sight(j, r, -1, g);
    const int after = line_of_sight(j, r, +1, g);
    if (before >= 0) add_unique(pa, before);
    if (after >= 0) add_unique(pa, after);
  }
  if (pa.empty()) {
    // Line of sight can miss every reference node when they only sit off-axis;
    // fall back to the nearest one in index distance.
    int best = -1;
    long best_d = 0;
    const auto mj = multi_index(j, g.shape);
    for (int k = 0; k < g.M(); ++k) {
      if (!g.nonempty[static_cast<std::size_t>(k)]) continue;
      const auto mk = multi_index(k, g.shape);
      long d = 0;
      for (std::size_t r = 0; r < mk.size(); ++r) d += std::abs(mk[r] - mj[r]);
      if (best < 0 || d < best_d) {
        best = k;
        best_d = d;
      }
    }
    if (best < 0) throw std::invalid_argument("parents_for_other: no reference nodes");
    pa.push_back(best);
  }
  return pa;
}

MeshGraph build_cubic_mesh(const std::vector<int>& shape, const std::vector<char>& nonempty,
                           const std::vector<char>& has_other) {
  MeshGraph g;
  g.shape = shape;
  int M = 1;
  for (int s : shape) {
    if (s < 1) throw std::invalid_argument("build_cubic_mesh: shape entries must be >= 1");
    M *= s;
  }
  if (static_cast<int>(nonempty.size()) != M)
    throw std::invalid_argument("build_cubic_mesh: mask size does not match shape");
  if (std::none_of(nonempty.begin(), nonempty.end(), [](char c) { return c != 0; }))
    throw std::invalid_argument("build_cubic_mesh: no reference regions");
  g.nonempty = nonempty;
  g.has_other = has_other.empty() ? std::vector<char>(static_cast<std::size_t>(M), 0) : has_other;
  if (static_cast<int>(g.has_other.size()) != M)
    throw std::invalid_argument("build_cubic_mesh: other-mask size does not match shape");
  g.parents.assign(static_cast<std::size_t>(M), {});
  g.other_parents.assign(static_cast<std::size_t>(M), {});
  for (int j = 0; j < M; ++j) {
    if (!g.nonempty[static_cast<std::size_t>(j)]) continue;
    for (int r = 0; r < g.dim(); ++r) {
      const int p = line_of_sight(j, r, -1, g);
      if (p >= 0) g.parents[static_cast<std::size_t>(j)].push_back(p);
    }
  }
  for (int j = 0; j < M; ++j) {
    if (g.has_other[static_cast<std::size_t>(j)])
      g.other_parents[static_cast<std::size_t>(j)] = parents_for_other(j, g);
  }
  g.rebuild_children();
  color_nodes(g);
  return g;
}

std::vector<int> markov_blanket(int node, const MeshGraph& g) {
  std::set<int> mb;
  const auto n = static_cast<std::size_t>(node);
  for (int p : g.parents[n]) mb.insert(p);
  for (int c : g.children[n]) {
    mb.insert(c);
    for (int p : g.parents[static_cast<std::size_t>(c)]) mb.insert(p);
  }
  for (int c : g.other_children[n]) {
    for (int p : g.other_parents[static_cast<std::size_t>(c)]) mb.insert(p);
  }
  mb.erase(node);
  return {mb.begin(), mb.end()};
}

int color_nodes(MeshGraph& g) {
  const int M = g.M();
  g.color.assign(static_cast<std::size_t>(M), -1);
  for (int j = 0; j < M; ++j) {
    if (!g.nonempty[static_cast<std::size_t>(j)]) continue;
    const auto mi = multi_index(j, g.shape);
    int c = 0;
    for (std::size_t r = 0; r < mi.size(); ++r) c += (mi[r] % 2) << r;
    g.color[static_cast<std::size_t>(j)] = c;
  }
  // One greedy pass suffices: a node fixed here never conflicts again because
  // later repairs only pick colors absent from their own blanket.
  for (int j = 0; j < M; ++j) {
    if (!g.nonempty[static_cast<std::size_t>(j)]) continue;
    const auto mb = markov_blanket(j, g);
    std::set<int> used;
    for (int v : mb) used.insert(g.color[static_cast<std::size_t>(v)]);
    if (!used.count(g.color[static_cast<std::size_t>(j)])) continue;
    int c = 0;
    while (used.count(c)) ++c;
    g.color[static_cast<std::size_t>(j)] = c;
  }
  // compact the palette
  std::set<int> present;
  for (int c : g.color)
    if (c >= 0) present.insert(c);
  std::vector<int> remap(present.empty() ? 0 : static_cast<std::size_t>(*present.rbegin()) + 1, -1);
  int k = 0;
  for (int c : present) remap[static_cast<std::size_t>(c)] = k++;
  for (int& c : g.color)
    if (c >= 0) c = remap[static_cast<std::size_t>(c)];
  g.n_colors = k;
  return k;
}

bool coloring_valid(const MeshGraph& g) {
  for (int j = 0; j < g.M(); ++j) {
    if (!g.nonempty[static_cast<std::size_t>(j)]) continue;
    if (g.color[static_cast<std::size_t>(j)] < 0) return false;
    for (int v : markov_blanket(j, g))
      if (g.color[static_cast<std::size_t>(v)] == g.color[static_cast<std::size_t>(j)]) return false;
  }
  return true;
}

std::vector<std::vector<int>> color_classes(const MeshGraph& g) {
  std::vector<std::vector<int>> classes(static_cast<std::size_t>(g.n_colors));
  for (int j = 0; j < g.M(); ++j) {
    const int c = g.color[static_cast<std::size_t>(j)];
    if (c >= 0) classes[static_cast<std::size_t>(c)].push_back(j);
  }
  return classes;
}

std::vector<char> moral_sparsity(const MeshGraph& g) {
  const auto M = static_cast<std::size_t>(g.M());
  std::vector<char> mask(M * M, 0);
  auto mark = [&](int a, int b) {
    mask[static_cast<std::size_t>(a) * M + static_cast<std::size_t>(b)] = 1;
    mask[static_cast<std::size_t>(b) * M + static_cast<std::size_t>(a)] = 1;
  };
  for (std::size_t j = 0; j < M; ++j) {
    if (!g.nonempty[j]) continue;
    mark(static_cast<int>(j), static_cast<int>(j));
    const auto& pa = g.parents[j];
    for (std::size_t a = 0; a < pa.size(); ++a) {
      mark(pa[a], static_cast<int>(j));
      for (std::size_t b = a + 1; b < pa.size(); ++b) mark(pa[a], pa[b]);
    }
  }
  return mask;
}

void write_edge_list(std::ostream& os, const MeshGraph& g) {
  for (int j = 0; j < g.M(); ++j) {
    for (int p : g.parents[static_cast<std::size_t>(j)]) os << 'a' << p << " a" << j << '\n';
    for (int p : g.other_parents[static_cast<std::size_t>(j)]) os << 'a' << p << " b" << j << '\n';
  }
}

}  // namespace qmgp
