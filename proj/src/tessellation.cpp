#include "qmgp/tessellation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace qmgp {

std::vector<int> AxisPartition::shape() const {
  std::vector<int> s;
  s.reserve(breaks.size());
  for (const auto& b : breaks) s.push_back(static_cast<int>(b.size()) - 1);
  return s;
}

int AxisPartition::M() const {
  int m = 1;
  for (int s : shape()) m *= s;
  return m;
}

AxisPartition build_partition(const Eigen::MatrixXd& locs, const std::vector<int>& intervals,
                              BreakRule rule) {
  if (locs.rows() == 0) throw std::invalid_argument("build_partition: no locations");
  if (static_cast<Eigen::Index>(intervals.size()) != locs.cols())
    throw std::invalid_argument("build_partition: need one interval count per axis");
  AxisPartition part;
  for (Eigen::Index r = 0; r < locs.cols(); ++r) {
    const int L = intervals[static_cast<std::size_t>(r)];
    if (L < 1) throw std::invalid_argument("build_partition: interval counts must be >= 1");
    const double lo = locs.col(r).minCoeff();
    const double hi = locs.col(r).maxCoeff();
    std::vector<double> b(static_cast<std::size_t>(L) + 1);
    b.front() = lo;
    b.back() = hi;
    if (rule == BreakRule::EqualWidth || L == 1) {
      for (int k = 1; k < L; ++k) b[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / L;
    } else {
      std::vector<double> v(locs.col(r).data(), locs.col(r).data() + locs.rows());
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      const double nv = static_cast<double>(v.size());
      for (int k = 1; k < L; ++k) {
        const std::size_t idx = static_cast<std::size_t>(std::floor(nv * k / L));
        b[static_cast<std::size_t>(k)] = v[std::min(idx, v.size() - 1)];
      }
    }
    for (std::size_t k = 1; k < b.size(); ++k) {
      if (!(b[k] > b[k - 1]))
        throw std::invalid_argument("build_partition: too many intervals for the data on axis " +
                                    std::to_string(r));
    }
    part.breaks.push_back(std::move(b));
  }
  return part;
}

std::vector<int> assign_region(std::span<const double> loc, const AxisPartition& part) {
  std::vector<int> mi(part.breaks.size());
  for (std::size_t r = 0; r < part.breaks.size(); ++r) {
    const auto& b = part.breaks[r];
    const int L = static_cast<int>(b.size()) - 1;
    const double snap = 1e-12 * (b.back() - b.front());
    const double x = loc[r];
    // first break strictly greater than x (after snapping) gives the interval
    int k = static_cast<int>(std::upper_bound(b.begin() + 1, b.end() - 1, x + snap) - b.begin()) - 1;
    mi[r] = std::clamp(k, 0, L - 1);
  }
  return mi;
}

int flat_index(const std::vector<int>& mi, const std::vector<int>& shape) {
  int id = 0;
  for (std::size_t r = 0; r < shape.size(); ++r) id = id * shape[r] + mi[r];
  return id;
}

std::vector<int> multi_index(int id, const std::vector<int>& shape) {
  std::vector<int> mi(shape.size());
  for (std::size_t r = shape.size(); r-- > 0;) {
    mi[r] = id % shape[r];
    id /= shape[r];
  }
  return mi;
}

bool lex_less(const Eigen::MatrixXd& coords, int a, int b) {
  for (Eigen::Index c = 0; c < coords.cols(); ++c) {
    if (coords(a, c) < coords(b, c)) return true;
    if (coords(a, c) > coords(b, c)) return false;
  }
  return a < b;
}

std::optional<std::vector<std::vector<double>>> detect_lattice(const Eigen::MatrixXd& locs,
                                                               double tol) {
  std::vector<std::vector<double>> axes;
  for (Eigen::Index r = 0; r < locs.cols(); ++r) {
    std::vector<double> v(locs.col(r).data(), locs.col(r).data() + locs.rows());
    std::sort(v.begin(), v.end());
    const double range = v.back() - v.front();
    const double eps = tol * std::max(range, 1.0);
    std::vector<double> u;
    for (double x : v)
      if (u.empty() || x - u.back() > eps) u.push_back(x);
    if (u.size() >= 3) {
      const double step = (u.back() - u.front()) / static_cast<double>(u.size() - 1);
      for (std::size_t k = 0; k < u.size(); ++k) {
        if (std::abs(u[k] - (u.front() + step * static_cast<double>(k))) > 1e-6 * step)
          return std::nullopt;
      }
    }
    axes.push_back(std::move(u));
  }
  return axes;
}

namespace {

void sort_members(const Eigen::MatrixXd& coords, std::vector<int>& v) {
  std::sort(v.begin(), v.end(), [&](int a, int b) { return lex_less(coords, a, b); });
}

int lattice_index(double x, const std::vector<double>& axis) {
  auto it = std::lower_bound(axis.begin(), axis.end(), x);
  int k = static_cast<int>(it - axis.begin());
  if (k == static_cast<int>(axis.size())) return k - 1;
  if (k > 0 && std::abs(axis[k - 1] - x) < std::abs(axis[k] - x)) return k - 1;
  return k;
}

}  // namespace

RegionAssignment split_reference(const Eigen::MatrixXd& locs, const std::vector<char>& observed,
                                 const AxisPartition& part, ReferencePolicy policy) {
  if (static_cast<Eigen::Index>(observed.size()) != locs.rows())
    throw std::invalid_argument("split_reference: mask size mismatch");
  if (locs.cols() != part.dim()) throw std::invalid_argument("split_reference: dimension mismatch");
  RegionAssignment ra;
  ra.n_original = static_cast<int>(locs.rows());
  ra.shape = part.shape();
  ra.coords = locs;
  ra.observed = observed;

  if (policy == ReferencePolicy::Lattice) {
    auto axes = detect_lattice(locs);
    if (!axes) throw std::invalid_argument("S = T* policy requires locations on a regular lattice");
    std::vector<int> dims;
    std::size_t total = 1;
    for (const auto& a : *axes) {
      dims.push_back(static_cast<int>(a.size()));
      total *= a.size();
    }
    std::vector<char> present(total, 0);
    for (Eigen::Index i = 0; i < locs.rows(); ++i) {
      std::vector<int> mi(dims.size());
      for (std::size_t r = 0; r < dims.size(); ++r)
        mi[r] = lattice_index(locs(i, static_cast<Eigen::Index>(r)), (*axes)[r]);
      present[static_cast<std::size_t>(flat_index(mi, dims))] = 1;
    }
    std::vector<int> missing;
    for (std::size_t k = 0; k < total; ++k)
      if (!present[k]) missing.push_back(static_cast<int>(k));
    ra.coords.conservativeResize(locs.rows() + static_cast<Eigen::Index>(missing.size()),
                                 locs.cols());
    for (std::size_t m = 0; m < missing.size(); ++m) {
      auto mi = multi_index(missing[m], dims);
      for (std::size_t r = 0; r < dims.size(); ++r)
        ra.coords(locs.rows() + static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(r)) =
            (*axes)[r][static_cast<std::size_t>(mi[r])];
      ra.observed.push_back(0);
    }
  }

  const int n = ra.n_all();
  const int M = part.M();
  ra.region.resize(static_cast<std::size_t>(n));
  ra.reference.assign(static_cast<std::size_t>(n), 0);
  ra.S.assign(static_cast<std::size_t>(M), {});
  ra.U.assign(static_cast<std::size_t>(M), {});
  std::vector<char> region_has_data(static_cast<std::size_t>(M), 0);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd row = ra.coords.row(i).transpose();
    const int j = flat_index(assign_region({row.data(), static_cast<std::size_t>(row.size())}, part),
                             ra.shape);
    ra.region[static_cast<std::size_t>(i)] = j;
    if (ra.observed[static_cast<std::size_t>(i)]) region_has_data[static_cast<std::size_t>(j)] = 1;
  }
  for (int i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    bool ref = false;
    switch (policy) {
      case ReferencePolicy::Observed:
        ref = ra.observed[si];
        break;
      case ReferencePolicy::Lattice:
        ref = true;
        break;
      case ReferencePolicy::CoverObserved:
        ref = region_has_data[static_cast<std::size_t>(ra.region[si])];
        break;
    }
    ra.reference[si] = ref;
    auto& bucket = ref ? ra.S[static_cast<std::size_t>(ra.region[si])]
                       : ra.U[static_cast<std::size_t>(ra.region[si])];
    bucket.push_back(i);
  }
  for (auto& s : ra.S) sort_members(ra.coords, s);
  for (auto& u : ra.U) sort_members(ra.coords, u);
  return ra;
}

Eigen::MatrixXd normalize_unit(const Eigen::MatrixXd& coords) {
  Eigen::MatrixXd out = coords;
  for (Eigen::Index r = 0; r < coords.cols(); ++r) {
    const double lo = coords.col(r).minCoeff();
    const double range = coords.col(r).maxCoeff() - lo;
    out.col(r).array() -= lo;
    if (range > 0) out.col(r) /= range;
  }
  return out;
}

PrototypeMaps detect_prototypes(const std::vector<Eigen::MatrixXd>& sets, double tol,
                                const std::vector<std::vector<int>>* segments) {
  const std::size_t g = sets.size();
  std::vector<Eigen::MatrixXd> shifted(g);
  for (std::size_t i = 0; i < g; ++i) {
    const Eigen::MatrixXd& G = sets[i];
    const Eigen::Index n = G.rows();
    std::vector<int> seg;
    if (segments) {
      seg = (*segments)[i];
    } else {
      seg = {static_cast<int>(n)};
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    int start = 0;
    for (int len : seg) {
      std::sort(order.begin() + start, order.begin() + start + len,
                [&](int a, int b) { return lex_less(G, a, b); });
      start += len;
    }
    Eigen::MatrixXd S(n, G.cols());
    for (Eigen::Index r = 0; r < n; ++r) S.row(r) = G.row(order[static_cast<std::size_t>(r)]);
    if (n > 0) {
      const Eigen::RowVectorXd first = S.row(0);
      S.rowwise() -= first;
    }
    shifted[i] = std::move(S);
  }

  // Bucket by a coarse quantization so only plausible matches are compared
  // elementwise. Near-boundary values may land in different buckets; that
  // only costs a missed share, never a wrong one.
  auto key_of = [&](std::size_t i) {
    std::uint64_t h = 0x12345678ULL ^ static_cast<std::uint64_t>(shifted[i].rows());
    auto mix = [&](std::uint64_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); };
    if (segments)
      for (int len : (*segments)[i]) mix(static_cast<std::uint64_t>(len));
    const double q = std::max(tol * 1e3, 1e-9);
    for (Eigen::Index c = 0; c < shifted[i].cols(); ++c)
      for (Eigen::Index r = 0; r < shifted[i].rows(); ++r)
        mix(static_cast<std::uint64_t>(std::llround(shifted[i](r, c) / q)));
    return h;
  };

  PrototypeMaps maps;
  maps.proto_of.assign(g, -1);
  std::unordered_map<std::uint64_t, std::vector<int>> buckets;
  for (std::size_t i = 0; i < g; ++i) {
    auto& candidates = buckets[key_of(i)];
    int found = -1;
    for (int p : candidates) {
      const auto rep = static_cast<std::size_t>(maps.representative[static_cast<std::size_t>(p)]);
      if (shifted[rep].rows() != shifted[i].rows() || shifted[rep].cols() != shifted[i].cols())
        continue;
      if (segments && (*segments)[rep] != (*segments)[i]) continue;
      if (((shifted[rep] - shifted[i]).array().abs() <= tol).all()) {
        found = p;
        break;
      }
    }
    if (found < 0) {
      found = maps.count();
      maps.representative.push_back(static_cast<int>(i));
      candidates.push_back(found);
    }
    maps.proto_of[i] = found;
  }
  return maps;
}

}  // namespace qmgp
