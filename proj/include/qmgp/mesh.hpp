#pragma once

#include <iosfwd>
#include <vector>

namespace qmgp {

// Cubic DAG over the regions of a tessellation. Node ids are flat region ids
// (row-major over multi-indices). Every region with reference locations has a
// reference node a_j; every region with other locations has a node b_j.
struct MeshGraph {
  std::vector<int> shape;
  std::vector<char> nonempty;   // region has reference locations (a_j exists)
  std::vector<char> has_other;  // region has other locations (b_j exists)

  std::vector<std::vector<int>> parents;        // pa(a_j), one entry per axis at most
  std::vector<std::vector<int>> other_parents;  // pa(b_j)
  std::vector<std::vector<int>> children;       // reference children of a_j
  std::vector<std::vector<int>> other_children; // regions j with a_i in pa(b_j)

  std::vector<int> color;  // -1 for regions without a reference node
  int n_colors = 0;

  int M() const { return static_cast<int>(nonempty.size()); }
  int dim() const { return static_cast<int>(shape.size()); }

  // Recompute children lists after editing parent lists.
  void rebuild_children();
};

MeshGraph build_cubic_mesh(const std::vector<int>& shape, const std::vector<char>& nonempty,
                           const std::vector<char>& has_other = {});

// pa(b_j): {a_j} u pa(a_j) when region j has reference locations, otherwise the
// nearest reference nodes before and after j along each axis.
std::vector<int> parents_for_other(int j, const MeshGraph& g);

// Neighbours of a reference node in the moral graph of the whole DAG,
// restricted to reference nodes. Sorted.
std::vector<int> markov_blanket(int node, const MeshGraph& g);

// Assigns colors (repeating parity pattern, then greedy repair) and returns the
// number of colors.
int color_nodes(MeshGraph& g);

bool coloring_valid(const MeshGraph& g);

// Reference nodes grouped by color, each group sorted.
std::vector<std::vector<int>> color_classes(const MeshGraph& g);

// M x M row-major mask over regions: true iff both regions have reference
// nodes and they are equal, parent/child, or co-parents of a reference node.
std::vector<char> moral_sparsity(const MeshGraph& g);

// "parent child" pairs, one per line, nodes written as a<id> or b<id>.
void write_edge_list(std::ostream& os, const MeshGraph& g);

}  // namespace qmgp
