#include "qmgp/mgp_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qmgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::VectorXd gather_w(const Eigen::VectorXd& w, const std::vector<int>& locs, int q) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(locs.size()) * q);
  for (std::size_t i = 0; i < locs.size(); ++i)
    out.segment(static_cast<Eigen::Index>(i) * q, q) = w.segment(static_cast<Eigen::Index>(locs[i]) * q, q);
  return out;
}

std::vector<int> slot_offsets(const std::vector<int>& parents,
                              const std::vector<std::vector<int>>& S) {
  std::vector<int> off{0};
  for (int p : parents) off.push_back(off.back() + static_cast<int>(S[static_cast<std::size_t>(p)].size()));
  return off;
}

std::vector<int> concat_members(const std::vector<int>& parents,
                                const std::vector<std::vector<int>>& S) {
  std::vector<int> out;
  for (int p : parents) {
    const auto& s = S[static_cast<std::size_t>(p)];
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<Eigen::MatrixXd> slot_gram(const Eigen::MatrixXd& G, const std::vector<int>& off, int q) {
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t s = 0; s + 1 < off.size(); ++s) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(off[s]) * q;
    const Eigen::Index nc = static_cast<Eigen::Index>(off[s + 1] - off[s]) * q;
    out.push_back(G.middleCols(c0, nc).transpose() * G.middleCols(c0, nc));
  }
  return out;
}

// Identity prototype map over `n` items restricted to `present`.
void identity_protos(const std::vector<char>& present, std::vector<int>& proto,
                     std::vector<int>& rep) {
  proto.assign(present.size(), -1);
  rep.clear();
  for (std::size_t j = 0; j < present.size(); ++j) {
    if (!present[j]) continue;
    proto[j] = static_cast<int>(rep.size());
    rep.push_back(static_cast<int>(j));
  }
}

}  // namespace

MgpModel::MgpModel(RegionAssignment ra, AxisPartition part, MeshGraph mesh, int q, bool caching,
                   double tol)
    : ra_(std::move(ra)),
      part_(std::move(part)),
      mesh_(std::move(mesh)),
      q_(q),
      caching_(caching),
      tol_(tol) {
  if (q_ < 1) throw std::invalid_argument("MgpModel: q must be >= 1");
  if (mesh_.M() != ra_.M()) throw std::invalid_argument("MgpModel: mesh and assignment differ in M");
  unit_coords_ = normalize_unit(ra_.coords);
  build_structure();
}

void MgpModel::set_mesh(MeshGraph mesh) {
  mesh_ = std::move(mesh);
  build_structure();
}

Eigen::MatrixXd MgpModel::gather_coords(const std::vector<int>& idx) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), ra_.coords.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = ra_.coords.row(idx[i]);
  return out;
}

void MgpModel::build_structure() {
  const int M = mesh_.M();
  const auto Mz = static_cast<std::size_t>(M);
  ref_pa_locs_.assign(Mz, {});
  ref_pa_off_.assign(Mz, {0});
  oth_pa_locs_.assign(Mz, {});
  oth_pa_off_.assign(Mz, {0});
  std::vector<char> has_ref(Mz, 0), has_oth(Mz, 0);
  for (std::size_t j = 0; j < Mz; ++j) {
    has_ref[j] = !ra_.S[j].empty();
    has_oth[j] = !ra_.U[j].empty();
    if (has_ref[j] != static_cast<bool>(mesh_.nonempty[j]))
      throw std::invalid_argument("MgpModel: mesh reference mask disagrees with assignment");
    if (has_ref[j]) {
      ref_pa_locs_[j] = concat_members(mesh_.parents[j], ra_.S);
      ref_pa_off_[j] = slot_offsets(mesh_.parents[j], ra_.S);
    }
    if (has_oth[j]) {
      if (mesh_.other_parents[j].empty())
        throw std::invalid_argument("MgpModel: region with other locations lacks b-node parents");
      oth_pa_locs_[j] = concat_members(mesh_.other_parents[j], ra_.S);
      oth_pa_off_[j] = slot_offsets(mesh_.other_parents[j], ra_.S);
    }
  }

  // parent sets over [a_0..a_{M-1}, b_0..b_{M-1}]
  std::vector<char> has_pa(2 * Mz, 0);
  for (std::size_t j = 0; j < Mz; ++j) {
    has_pa[j] = has_ref[j] && !ref_pa_locs_[j].empty();
    has_pa[Mz + j] = has_oth[j];
  }

  if (!caching_) {
    identity_protos(has_ref, ref_proto_, ref_rep_);
    identity_protos(has_oth, oth_proto_, oth_rep_);
    identity_protos(has_pa, pa_proto_, pa_rep_);
    return;
  }

  auto with_segments = [&](const std::vector<int>& head, const std::vector<int>& pa,
                           const std::vector<int>& off, std::vector<int>& seg) {
    std::vector<int> idx = head;
    idx.insert(idx.end(), pa.begin(), pa.end());
    seg.clear();
    if (!head.empty()) seg.push_back(static_cast<int>(head.size()));
    for (std::size_t s = 0; s + 1 < off.size(); ++s) seg.push_back(off[s + 1] - off[s]);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(idx.size()), unit_coords_.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = unit_coords_.row(idx[i]);
    return X;
  };

  auto run = [&](const std::vector<char>& present, auto make, std::vector<int>& proto,
                 std::vector<int>& rep) {
    std::vector<Eigen::MatrixXd> sets;
    std::vector<std::vector<int>> segs;
    std::vector<int> owner;
    for (std::size_t j = 0; j < present.size(); ++j) {
      if (!present[j]) continue;
      std::vector<int> seg;
      sets.push_back(make(j, seg));
      segs.push_back(std::move(seg));
      owner.push_back(static_cast<int>(j));
    }
    const PrototypeMaps pm = detect_prototypes(sets, tol_, &segs);
    proto.assign(present.size(), -1);
    rep.clear();
    for (int r : pm.representative) rep.push_back(owner[static_cast<std::size_t>(r)]);
    for (std::size_t k = 0; k < owner.size(); ++k)
      proto[static_cast<std::size_t>(owner[k])] = pm.proto_of[k];
  };

  run(has_ref,
      [&](std::size_t j, std::vector<int>& seg) {
        return with_segments(ra_.S[j], ref_pa_locs_[j], ref_pa_off_[j], seg);
      },
      ref_proto_, ref_rep_);
  run(has_oth,
      [&](std::size_t j, std::vector<int>& seg) {
        return with_segments(ra_.U[j], oth_pa_locs_[j], oth_pa_off_[j], seg);
      },
      oth_proto_, oth_rep_);
  run(has_pa,
      [&](std::size_t k, std::vector<int>& seg) {
        if (k < Mz) return with_segments({}, ref_pa_locs_[k], ref_pa_off_[k], seg);
        return with_segments({}, oth_pa_locs_[k - Mz], oth_pa_off_[k - Mz], seg);
      },
      pa_proto_, pa_rep_);
}

int MgpModel::ref_slot(int c, int p) const {
  const auto& pa = mesh_.parents[static_cast<std::size_t>(c)];
  auto it = std::find(pa.begin(), pa.end(), p);
  return it == pa.end() ? -1 : static_cast<int>(it - pa.begin());
}

int MgpModel::other_slot(int c, int p) const {
  const auto& pa = mesh_.other_parents[static_cast<std::size_t>(c)];
  auto it = std::find(pa.begin(), pa.end(), p);
  return it == pa.end() ? -1 : static_cast<int>(it - pa.begin());
}

std::vector<int> MgpModel::prediction_parents(int region) const {
  if (mesh_.has_other[static_cast<std::size_t>(region)])
    return mesh_.other_parents[static_cast<std::size_t>(region)];
  return parents_for_other(region, mesh_);
}

MomentSet MgpModel::compute_moments(const CovParams& p) const {
  const auto Mz = static_cast<std::size_t>(mesh_.M());
  const int q = q_;
  if (p.q() != q) throw std::invalid_argument("compute_moments: covariance q does not match model");

  // parent covariance factors, one per prototype
  std::vector<Factor> pa_factor(pa_rep_.size());
  const int npa = static_cast<int>(pa_rep_.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < npa; ++k) {
    try {
      const auto r = static_cast<std::size_t>(pa_rep_[static_cast<std::size_t>(k)]);
      const auto& locs = r < Mz ? ref_pa_locs_[r] : oth_pa_locs_[r - Mz];
      pa_factor[static_cast<std::size_t>(k)] = robust_cholesky(cov_matrix(gather_coords(locs), p));
    } catch (...) {
#pragma omp critical
      err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  std::vector<std::shared_ptr<const RefMoments>> ref_protos(ref_rep_.size());
  const int nref = static_cast<int>(ref_rep_.size());
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < nref; ++k) {
    try {
      const auto j = static_cast<std::size_t>(ref_rep_[static_cast<std::size_t>(k)]);
      auto mo = std::make_shared<RefMoments>();
      const Eigen::MatrixXd Sx = gather_coords(ra_.S[j]);
      Eigen::MatrixXd R = cov_matrix(Sx, p);
      if (!ref_pa_locs_[j].empty()) {
        const Factor& Lp = pa_factor[static_cast<std::size_t>(pa_proto_[j])];
        const Eigen::MatrixXd Cps = cov_matrix(gather_coords(ref_pa_locs_[j]), Sx, p);
        const Eigen::MatrixXd W = Lp.whiten(Cps);
        R.noalias() -= W.transpose() * W;
        R = (0.5 * (R + R.transpose())).eval();
        mo->H = Lp.L.transpose().triangularView<Eigen::Upper>().solve(W).transpose();
      } else {
        mo->H.resize(R.rows(), 0);
      }
      mo->R = robust_cholesky(R);
      mo->Rinv = mo->R.inverse();
      mo->G = mo->R.whiten(mo->H);
      mo->GtG = slot_gram(mo->G, ref_pa_off_[j], q);
      mo->logdet = mo->R.logdet();
      ref_protos[static_cast<std::size_t>(k)] = std::move(mo);
    } catch (...) {
#pragma omp critical
      err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  std::vector<std::shared_ptr<const OtherMoments>> oth_protos(oth_rep_.size());
  const int noth = static_cast<int>(oth_rep_.size());
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < noth; ++k) {
    try {
      const auto j = static_cast<std::size_t>(oth_rep_[static_cast<std::size_t>(k)]);
      auto mo = std::make_shared<OtherMoments>();
      const Factor& Lp = pa_factor[static_cast<std::size_t>(pa_proto_[Mz + j])];
      const auto& U = ra_.U[j];
      const Eigen::Index nu = static_cast<Eigen::Index>(U.size());
      const Eigen::MatrixXd Cpu = cov_matrix(gather_coords(oth_pa_locs_[j]), gather_coords(U), p);
      const Eigen::MatrixXd W = Lp.whiten(Cpu);
      mo->H = Lp.L.transpose().triangularView<Eigen::Upper>().solve(W).transpose();
      mo->L.resize(nu * q, q);
      mo->Rinv.resize(nu * q, q);
      mo->G.resize(nu * q, mo->H.cols());
      for (Eigen::Index u = 0; u < nu; ++u) {
        const Eigen::MatrixXd cu = cov_matrix(ra_.coords.row(U[static_cast<std::size_t>(u)]), p);
        const auto Wu = W.middleCols(u * q, q);
        Eigen::MatrixXd Ru = cu - Wu.transpose() * Wu;
        Ru = (0.5 * (Ru + Ru.transpose())).eval();
        const Factor fu = robust_cholesky(Ru);
        mo->L.middleRows(u * q, q) = fu.L;
        mo->Rinv.middleRows(u * q, q) = fu.inverse();
        mo->G.middleRows(u * q, q) = fu.whiten(Eigen::MatrixXd(mo->H.middleRows(u * q, q)));
        mo->logdet += fu.logdet();
      }
      mo->GtG = slot_gram(mo->G, oth_pa_off_[j], q);
      oth_protos[static_cast<std::size_t>(k)] = std::move(mo);
    } catch (...) {
#pragma omp critical
      err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  MomentSet ms;
  ms.ref.resize(Mz);
  ms.other.resize(Mz);
  for (std::size_t j = 0; j < Mz; ++j) {
    if (ref_proto_[j] >= 0) {
      ms.ref[j] = ref_protos[static_cast<std::size_t>(ref_proto_[j])];
      ++ms.stats.blocks;
    }
    if (oth_proto_[j] >= 0) {
      ms.other[j] = oth_protos[static_cast<std::size_t>(oth_proto_[j])];
      ++ms.stats.blocks;
    }
  }
  ms.stats.unique_blocks = nref + noth;
  ms.stats.parent_factors = npa;
  return ms;
}

double MgpModel::log_density_reference(const Eigen::VectorXd& w, const MomentSet& m) const {
  const int M = mesh_.M();
  if (w.size() != static_cast<Eigen::Index>(ra_.n_all()) * q_)
    throw std::invalid_argument("log_density_reference: w has the wrong length");
  std::vector<double> parts(static_cast<std::size_t>(M), 0.0);
#pragma omp parallel for schedule(static)
  for (int j = 0; j < M; ++j) {
    const auto& mo = m.ref[static_cast<std::size_t>(j)];
    if (!mo) continue;
    Eigen::VectorXd r = gather_w(w, ra_.S[static_cast<std::size_t>(j)], q_);
    if (mo->H.cols() > 0) r.noalias() -= mo->H * gather_w(w, ref_pa_locs_[static_cast<std::size_t>(j)], q_);
    const Eigen::VectorXd z = mo->R.whiten(r);
    parts[static_cast<std::size_t>(j)] =
        -0.5 * (static_cast<double>(r.size()) * kLog2Pi + mo->logdet + z.squaredNorm());
  }
  double total = 0.0;
  for (double v : parts) total += v;
  return total;
}

double MgpModel::log_density_other(const Eigen::VectorXd& w, const MomentSet& m) const {
  const int M = mesh_.M();
  if (w.size() != static_cast<Eigen::Index>(ra_.n_all()) * q_)
    throw std::invalid_argument("log_density_other: w has the wrong length");
  std::vector<double> parts(static_cast<std::size_t>(M), 0.0);
#pragma omp parallel for schedule(static)
  for (int j = 0; j < M; ++j) {
    const auto& mo = m.other[static_cast<std::size_t>(j)];
    if (!mo) continue;
    const auto& U = ra_.U[static_cast<std::size_t>(j)];
    const Eigen::VectorXd r =
        gather_w(w, U, q_) - mo->H * gather_w(w, oth_pa_locs_[static_cast<std::size_t>(j)], q_);
    double quad = 0.0;
    for (std::size_t u = 0; u < U.size(); ++u) {
      const Eigen::Index o = static_cast<Eigen::Index>(u) * q_;
      const Eigen::MatrixXd Lu = mo->L.middleRows(o, q_);
      quad += Lu.triangularView<Eigen::Lower>().solve(r.segment(o, q_)).squaredNorm();
    }
    parts[static_cast<std::size_t>(j)] =
        -0.5 * (static_cast<double>(r.size()) * kLog2Pi + mo->logdet + quad);
  }
  double total = 0.0;
  for (double v : parts) total += v;
  return total;
}

std::vector<int> MgpModel::reference_order() const {
  std::vector<int> order;
  for (const auto& s : ra_.S) order.insert(order.end(), s.begin(), s.end());
  return order;
}

Eigen::SparseMatrix<double> MgpModel::assemble_precision(const MomentSet& m) const {
  const auto Mz = static_cast<std::size_t>(mesh_.M());
  std::vector<Eigen::Index> start(Mz + 1, 0);
  for (std::size_t j = 0; j < Mz; ++j)
    start[j + 1] = start[j] + static_cast<Eigen::Index>(ra_.S[j].size()) * q_;
  const Eigen::Index N = start[Mz];
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t j = 0; j < Mz; ++j) {
    const auto& mo = m.ref[j];
    if (!mo) continue;
    // A_j = [I, -H_1, ..., -H_k] over the columns of (j, pa(j)).
    const auto& pa = mesh_.parents[j];
    std::vector<std::pair<Eigen::Index, Eigen::Index>> cols;  // (global start, local start)
    const Eigen::Index nj = mo->Rinv.rows();
    Eigen::MatrixXd A(nj, nj + mo->H.cols());
    A.leftCols(nj).setIdentity();
    A.rightCols(mo->H.cols()) = -mo->H;
    cols.emplace_back(start[j], 0);
    Eigen::Index local = nj;
    for (int p : pa) {
      cols.emplace_back(start[static_cast<std::size_t>(p)], local);
      local += static_cast<Eigen::Index>(ra_.S[static_cast<std::size_t>(p)].size()) * q_;
    }
    const Eigen::MatrixXd B = A.transpose() * mo->Rinv * A;
    std::vector<Eigen::Index> sizes;
    for (std::size_t a = 0; a < cols.size(); ++a) {
      const Eigen::Index end = a + 1 < cols.size() ? cols[a + 1].second : B.rows();
      sizes.push_back(end - cols[a].second);
    }
    for (std::size_t a = 0; a < cols.size(); ++a)
      for (std::size_t b = 0; b < cols.size(); ++b)
        for (Eigen::Index r = 0; r < sizes[a]; ++r)
          for (Eigen::Index c = 0; c < sizes[b]; ++c)
            trip.emplace_back(cols[a].first + r, cols[b].first + c,
                              B(cols[a].second + r, cols[b].second + c));
  }
  Eigen::SparseMatrix<double> Q(N, N);
  Q.setFromTriplets(trip.begin(), trip.end());
  return Q;
}

Eigen::MatrixXd MgpModel::dense_covariance(const std::vector<int>& locs, const MomentSet&,
                                           const CovParams& p) const {
  MgpCrossCov cc(*this, p);
  const Eigen::Index n = static_cast<Eigen::Index>(locs.size());
  Eigen::MatrixXd C(n * q_, n * q_);
  for (Eigen::Index a = 0; a < n; ++a) {
    const Eigen::VectorXd la = ra_.coords.row(locs[static_cast<std::size_t>(a)]).transpose();
    for (Eigen::Index b = a; b < n; ++b) {
      const Eigen::VectorXd lb = ra_.coords.row(locs[static_cast<std::size_t>(b)]).transpose();
      const Eigen::MatrixXd blk = cc(la, lb);
      C.block(a * q_, b * q_, q_, q_) = blk;
      C.block(b * q_, a * q_, q_, q_) = blk.transpose();
    }
  }
  return C;
}

MgpCrossCov::MgpCrossCov(const MgpModel& model, const CovParams& p) : model_(model), p_(p) {
  const int q = model.q();
  const auto& ra = model.assignment();
  const auto& mesh = model.mesh();
  const MomentSet m = model.compute_moments(p);
  order_ = model.reference_order();
  const auto Mz = static_cast<std::size_t>(mesh.M());
  std::vector<Eigen::Index> start(Mz + 1, 0);
  for (std::size_t j = 0; j < Mz; ++j)
    start[j + 1] = start[j] + static_cast<Eigen::Index>(ra.S[j].size()) * q;
  const Eigen::Index N = start[Mz];
  CS_ = Eigen::MatrixXd::Zero(N, N);
  // Blocks in id order are topologically sorted: w_j = H_j w_pa + omega_j.
  for (std::size_t j = 0; j < Mz; ++j) {
    const auto& mo = m.ref[j];
    if (!mo) continue;
    const Eigen::Index nj = start[j + 1] - start[j];
    std::vector<Eigen::Index> pa_idx;
    for (int pr : mesh.parents[j])
      for (Eigen::Index t = start[static_cast<std::size_t>(pr)]; t < start[static_cast<std::size_t>(pr) + 1]; ++t)
        pa_idx.push_back(t);
    if (pa_idx.empty()) {
      CS_.block(start[j], start[j], nj, nj) = mo->R.L * mo->R.L.transpose();
      continue;
    }
    const Eigen::Index np = static_cast<Eigen::Index>(pa_idx.size());
    // rows of C~ for the parents, restricted to columns of earlier blocks
    Eigen::MatrixXd Cpa(np, start[j]);
    for (Eigen::Index a = 0; a < np; ++a) Cpa.row(a) = CS_.row(pa_idx[static_cast<std::size_t>(a)]).head(start[j]);
    const Eigen::MatrixXd cross = mo->H * Cpa;  // nj x start[j]
    CS_.block(start[j], 0, nj, start[j]) = cross;
    CS_.block(0, start[j], start[j], nj) = cross.transpose();
    Eigen::MatrixXd Cpp(np, np);
    for (Eigen::Index a = 0; a < np; ++a)
      for (Eigen::Index b = 0; b < np; ++b)
        Cpp(a, b) = CS_(pa_idx[static_cast<std::size_t>(a)], pa_idx[static_cast<std::size_t>(b)]);
    CS_.block(start[j], start[j], nj, nj) =
        mo->H * Cpp * mo->H.transpose() + mo->R.L * mo->R.L.transpose();
  }
  for (std::size_t t = 0; t < order_.size(); ++t) {
    const Eigen::RowVectorXd row = ra.coords.row(order_[t]);
    ref_pos_[std::vector<double>(row.data(), row.data() + row.size())] = static_cast<int>(t);
  }
}

int MgpCrossCov::find_reference(const Eigen::VectorXd& l) const {
  auto it = ref_pos_.find(std::vector<double>(l.data(), l.data() + l.size()));
  return it == ref_pos_.end() ? -1 : it->second;
}

MgpCrossCov::Conditional MgpCrossCov::conditional(const Eigen::VectorXd& l) const {
  const int q = model_.q();
  const auto& ra = model_.assignment();
  const auto mi = assign_region({l.data(), static_cast<std::size_t>(l.size())}, model_.partition());
  const int region = flat_index(mi, ra.shape);
  Conditional c;
  std::vector<int> locs;
  for (int pr : model_.prediction_parents(region)) {
    for (int loc : ra.S[static_cast<std::size_t>(pr)]) {
      locs.push_back(loc);
      const Eigen::RowVectorXd row = ra.coords.row(loc);
      c.pa_pos.push_back(find_reference(row.transpose()));
    }
  }
  Eigen::MatrixXd P(static_cast<Eigen::Index>(locs.size()), ra.coords.cols());
  for (std::size_t i = 0; i < locs.size(); ++i) P.row(static_cast<Eigen::Index>(i)) = ra.coords.row(locs[i]);
  const Eigen::MatrixXd lx = l.transpose();
  const Factor Lp = robust_cholesky(cov_matrix(P, p_));
  const Eigen::MatrixXd W = Lp.whiten(cov_matrix(P, lx, p_));
  c.H = Lp.L.transpose().triangularView<Eigen::Upper>().solve(W).transpose();
  c.R = cov_matrix(lx, p_) - W.transpose() * W;
  (void)q;
  return c;
}

Eigen::MatrixXd MgpCrossCov::operator()(const Eigen::VectorXd& l1, const Eigen::VectorXd& l2) const {
  const int q = model_.q();
  const int s1 = find_reference(l1);
  const int s2 = find_reference(l2);
  auto expand = [&](const std::vector<int>& pos) {
    std::vector<Eigen::Index> idx;
    for (int t : pos)
      for (int k = 0; k < q; ++k) idx.push_back(static_cast<Eigen::Index>(t) * q + k);
    return idx;
  };
  auto sub = [&](const std::vector<Eigen::Index>& r, const std::vector<Eigen::Index>& c) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(c.size()));
    for (std::size_t a = 0; a < r.size(); ++a)
      for (std::size_t b = 0; b < c.size(); ++b) out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = CS_(r[a], c[b]);
    return out;
  };
  if (s1 >= 0 && s2 >= 0) return sub(expand({s1}), expand({s2}));
  if (s1 < 0 && s2 >= 0) {
    const Conditional c1 = conditional(l1);
    return c1.H * sub(expand(c1.pa_pos), expand({s2}));
  }
  if (s1 >= 0 && s2 < 0) {
    const Conditional c2 = conditional(l2);
    return (c2.H * sub(expand(c2.pa_pos), expand({s1}))).transpose();
  }
  const Conditional c1 = conditional(l1);
  const Conditional c2 = conditional(l2);
  Eigen::MatrixXd out = c1.H * sub(expand(c1.pa_pos), expand(c2.pa_pos)) * c2.H.transpose();
  if (l1 == l2) out += c1.R;
  return out;
}

double kl_from_dense(const MgpModel& model, const MomentSet& m, const CovParams& p) {
  const auto order = model.reference_order();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(order.size()), model.assignment().dim());
  for (std::size_t i = 0; i < order.size(); ++i)
    X.row(static_cast<Eigen::Index>(i)) = model.assignment().coords.row(order[i]);
  const Eigen::MatrixXd C = cov_matrix(X, p);
  const Factor Lc = robust_cholesky(C);
  const Eigen::SparseMatrix<double> Q = model.assemble_precision(m);
  const double trace = (Q * C).trace();
  double logdet_approx = 0.0;
  for (const auto& mo : m.ref)
    if (mo) logdet_approx += mo->logdet;
  const double N = static_cast<double>(C.rows());
  return 0.5 * (trace - N + logdet_approx - Lc.logdet());
}

double dense_log_density(const Eigen::MatrixXd& C, const Eigen::VectorXd& x) {
  const Factor f = robust_cholesky(C);
  return gaussian_logpdf(x, Eigen::VectorXd::Zero(x.size()), f);
}

}  // namespace qmgp
