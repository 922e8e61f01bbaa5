#include "qmgp/predict.hpp"

#include "qmgp/linalg.hpp"
#include "qmgp/rng.hpp"
#include "qmgp/tessellation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace qmgp {

namespace {

double sorted_quantile(const std::vector<double>& v, double prob) {
  const double h = static_cast<double>(v.size() - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double zval(const Eigen::MatrixXd& z, int i, int r, int c, int q) {
  if (z.size() == 0) return r == c ? 1.0 : 0.0;
  return z(i, r * q + c);
}

struct RegionCond {
  std::vector<int> pa;     // parent reference locations
  Eigen::MatrixXd H;       // (sites * q) x (pa * q)
  std::vector<Eigen::MatrixXd> L;  // per site, q x q
};

RegionCond conditional(const MgpModel& model, const Eigen::MatrixXd& sites, int region,
                       const CovParams& p) {
  const auto& ra = model.assignment();
  RegionCond rc;
  for (int pr : model.prediction_parents(region))
    for (int loc : ra.S[static_cast<std::size_t>(pr)]) rc.pa.push_back(loc);
  const int q = model.q();
  const Eigen::Index ns = sites.rows();
  if (rc.pa.empty()) {
    rc.H.resize(ns * q, 0);
  } else {
    Eigen::MatrixXd P(static_cast<Eigen::Index>(rc.pa.size()), ra.coords.cols());
    for (std::size_t i = 0; i < rc.pa.size(); ++i) P.row(static_cast<Eigen::Index>(i)) = ra.coords.row(rc.pa[i]);
    const Factor Lp = robust_cholesky(cov_matrix(P, p));
    rc.H = Lp.solve(cov_matrix(P, sites, p)).transpose();
  }
  for (Eigen::Index s = 0; s < ns; ++s) {
    const Eigen::MatrixXd one = sites.row(s);
    Eigen::MatrixXd R = cov_matrix(one, p);
    if (!rc.pa.empty()) {
      Eigen::MatrixXd P(static_cast<Eigen::Index>(rc.pa.size()), ra.coords.cols());
      for (std::size_t i = 0; i < rc.pa.size(); ++i) P.row(static_cast<Eigen::Index>(i)) = ra.coords.row(rc.pa[i]);
      R -= rc.H.middleRows(s * q, q) * cov_matrix(P, one, p);
    }
    rc.L.push_back(robust_cholesky(0.5 * (R + R.transpose())).L);
  }
  return rc;
}

}  // namespace

PredictionResult predict_at(const MgpModel& model, const NewSites& sites, const ChainResult& chain,
                            const CovParams& theta_template, int l, double level, std::uint64_t seed) {
  if (!(level > 0 && level < 1)) throw std::invalid_argument("credible level must be in (0, 1)");
  const Eigen::Index T = chain.w_draws.rows();
  if (T == 0) throw std::invalid_argument("prediction needs retained w draws");
  if (chain.trace.rows() != T) throw std::invalid_argument("trace and w draws disagree in length");
  const auto& ra = model.assignment();
  const int q = model.q();
  const int k = static_cast<int>(sites.x.cols());
  const int n_theta = static_cast<int>(get_parameters(theta_template).size());
  if (chain.trace.cols() != l * k + l + n_theta)
    throw std::invalid_argument("trace columns do not match the covariates and covariance model");
  const Eigen::Index ns = sites.coords.rows();
  if (sites.coords.cols() != ra.coords.cols()) throw std::invalid_argument("prediction coordinates have the wrong dimension");
  if (sites.x.size() > 0 && sites.x.rows() != ns) throw std::invalid_argument("X rows differ from the site count");
  if (sites.z.size() > 0 && (sites.z.rows() != ns || sites.z.cols() != l * q))
    throw std::invalid_argument("Z must have one row per site and l*q columns");
  if (sites.z.size() == 0 && q != l) throw std::invalid_argument("Z = I needs q = l");

  // sites that are model locations reuse their sampled w
  std::map<std::vector<double>, int> known;
  for (Eigen::Index i = 0; i < ra.coords.rows(); ++i) {
    const Eigen::RowVectorXd r = ra.coords.row(i);
    known.emplace(std::vector<double>(r.data(), r.data() + r.size()), static_cast<int>(i));
  }
  const auto& part = model.partition();
  std::vector<int> loc_of(static_cast<std::size_t>(ns), -1);
  std::map<int, std::vector<int>> by_region;
  for (Eigen::Index s = 0; s < ns; ++s) {
    const Eigen::RowVectorXd r = sites.coords.row(s);
    if (!r.allFinite()) throw std::invalid_argument("non-finite prediction coordinates");
    auto it = known.find(std::vector<double>(r.data(), r.data() + r.size()));
    if (it != known.end()) {
      loc_of[static_cast<std::size_t>(s)] = it->second;
      continue;
    }
    for (int a = 0; a < part.dim(); ++a) {
      const auto& br = part.breaks[static_cast<std::size_t>(a)];
      const double tol = 1e-9 * std::max(1.0, br.back() - br.front());
      if (r(a) < br.front() - tol || r(a) > br.back() + tol)
        throw std::invalid_argument("prediction site " + std::to_string(s) + " lies outside the fitted domain");
    }
    const int region = flat_index(assign_region(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), part),
                                  part.shape());
    by_region[region].push_back(static_cast<int>(s));
  }

  const Eigen::Index items = ns * l;
  Eigen::MatrixXd noisy(T, items);
  Eigen::VectorXd fit_sum = Eigen::VectorXd::Zero(items);
  Eigen::MatrixXd wsite(T, ns * q);  // w at each site per draw

  for (Eigen::Index s = 0; s < ns; ++s)
    if (const int loc = loc_of[static_cast<std::size_t>(s)]; loc >= 0)
      wsite.middleCols(s * q, q) = chain.w_draws.middleCols(static_cast<Eigen::Index>(loc) * q, q);

  std::vector<std::pair<int, std::vector<int>>> groups(by_region.begin(), by_region.end());
  const int ng = static_cast<int>(groups.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int g = 0; g < ng; ++g) {
    try {
      const auto& [region, members] = groups[static_cast<std::size_t>(g)];
      Eigen::MatrixXd pts(static_cast<Eigen::Index>(members.size()), sites.coords.cols());
      for (std::size_t i = 0; i < members.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = sites.coords.row(members[i]);
      RegionCond rc;
      Eigen::VectorXd last_theta;
      std::normal_distribution<double> z;
      for (Eigen::Index t = 0; t < T; ++t) {
        const Eigen::VectorXd th = chain.trace.row(t).tail(n_theta).transpose();
        if (t == 0 || th != last_theta) {
          CovParams p = theta_template;
          set_parameters(p, std::span<const double>(th.data(), static_cast<std::size_t>(th.size())));
          rc = conditional(model, pts, region, p);
          last_theta = th;
        }
        auto rng = make_engine(seed, static_cast<std::uint64_t>(t), Stream::Predict,
                               static_cast<std::uint64_t>(region));
        Eigen::VectorXd wpa(static_cast<Eigen::Index>(rc.pa.size()) * q);
        for (std::size_t i = 0; i < rc.pa.size(); ++i)
          wpa.segment(static_cast<Eigen::Index>(i) * q, q) =
              chain.w_draws.row(t).segment(static_cast<Eigen::Index>(rc.pa[i]) * q, q).transpose();
        const Eigen::VectorXd mu = rc.H * wpa;
        for (std::size_t i = 0; i < members.size(); ++i) {
          Eigen::VectorXd e(q);
          for (int c = 0; c < q; ++c) e(c) = z(rng);
          const Eigen::Index o = static_cast<Eigen::Index>(i) * q;
          wsite.row(t).segment(static_cast<Eigen::Index>(members[i]) * q, q) =
              (mu.segment(o, q) + rc.L[i] * e).transpose();
        }
      }
    } catch (...) {
#pragma omp critical
      err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  for (Eigen::Index t = 0; t < T; ++t) {
    auto rng = make_engine(seed, static_cast<std::uint64_t>(t), Stream::Predict, ~0ULL);
    std::normal_distribution<double> z;
    for (Eigen::Index s = 0; s < ns; ++s) {
      for (int r = 0; r < l; ++r) {
        double f = 0.0;
        for (int c = 0; c < k; ++c) f += sites.x(s, c) * chain.trace(t, r * k + c);
        for (int c = 0; c < q; ++c) f += zval(sites.z, static_cast<int>(s), r, c, q) * wsite(t, s * q + c);
        const double tau2 = chain.trace(t, l * k + r);
        const Eigen::Index item = s * l + r;
        fit_sum(item) += f;
        noisy(t, item) = f + std::sqrt(tau2) * z(rng);
      }
    }
  }

  PredictionResult out;
  out.level = level;
  out.draws = static_cast<int>(T);
  out.mean.resize(ns, l);
  out.sd.resize(ns, l);
  out.lower.resize(ns, l);
  out.upper.resize(ns, l);
  for (Eigen::Index s = 0; s < ns; ++s) {
    for (int r = 0; r < l; ++r) {
      const Eigen::Index item = s * l + r;
      std::vector<double> v(noisy.col(item).data(), noisy.col(item).data() + T);
      const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(T);
      double ss = 0.0;
      for (double x : v) ss += (x - m) * (x - m);
      std::sort(v.begin(), v.end());
      out.mean(s, r) = fit_sum(item) / static_cast<double>(T);
      out.sd(s, r) = T > 1 ? std::sqrt(ss / static_cast<double>(T - 1)) : 0.0;
      out.lower(s, r) = sorted_quantile(v, 0.5 * (1 - level));
      out.upper(s, r) = sorted_quantile(v, 0.5 * (1 + level));
    }
  }
  return out;
}

PredictionResult summarize_tracked(const Dataset& data, const ChainResult& chain, double level) {
  if (!(level > 0 && level < 1)) throw std::invalid_argument("credible level must be in (0, 1)");
  if (chain.y.count() == 0) throw std::invalid_argument("the chain retained no draws");
  const int k = data.k(), q = data.q(), l = data.l();
  const Eigen::VectorXd beta = chain.trace.leftCols(l * k).colwise().mean().transpose();
  const Eigen::VectorXd& wbar = chain.w.mean();
  const Eigen::VectorXd sd = chain.y.sd();
  const auto n = static_cast<Eigen::Index>(chain.y_items.size());
  PredictionResult out;
  out.level = level;
  out.draws = static_cast<int>(chain.y.count());
  out.mean.resize(n, 1);
  out.sd.resize(n, 1);
  out.lower.resize(n, 1);
  out.upper.resize(n, 1);
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto [i, r] = chain.y_items[static_cast<std::size_t>(t)];
    double f = 0.0;
    for (int c = 0; c < k; ++c) f += data.x(i, c) * beta(r * k + c);
    for (int c = 0; c < q; ++c) f += data.zval(i, r, c) * wbar(static_cast<Eigen::Index>(i) * q + c);
    out.mean(t, 0) = f;
    out.sd(t, 0) = sd(t);
    out.lower(t, 0) = chain.y.quantile(static_cast<int>(t), 0.5 * (1 - level));
    out.upper(t, 0) = chain.y.quantile(static_cast<int>(t), 0.5 * (1 + level));
  }
  return out;
}

Metrics metrics(const Eigen::VectorXd& mean, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                const Eigen::VectorXd& truth, const std::vector<char>& mask) {
  const Eigen::Index n = truth.size();
  if (mean.size() != n || lower.size() != n || upper.size() != n)
    throw std::invalid_argument("metrics: inputs differ in length");
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != n)
    throw std::invalid_argument("metrics: mask has the wrong length");
  Metrics m;
  double abs_sum = 0.0, sq_sum = 0.0;
  long inside = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
    const double e = mean(i) - truth(i);
    abs_sum += std::abs(e);
    sq_sum += e * e;
    inside += lower(i) <= truth(i) && truth(i) <= upper(i);
    ++m.n;
  }
  if (m.n == 0) throw std::invalid_argument("metrics: empty evaluation mask");
  const auto dn = static_cast<double>(m.n);
  m.mae = abs_sum / dn;
  m.rmse = std::sqrt(sq_sum / dn);
  m.coverage = static_cast<double>(inside) / dn;
  return m;
}

double effective_sample_size(const Eigen::VectorXd& draws) {
  const Eigen::Index n = draws.size();
  if (n < 100) throw std::invalid_argument("effective sample size needs at least 100 draws");
  const Eigen::VectorXd x = draws.array() - draws.mean();
  const double g0 = x.squaredNorm() / static_cast<double>(n);
  if (!(g0 > 0) || !std::isfinite(g0)) return 1.0;
  auto rho = [&](Eigen::Index lag) {
    return x.head(n - lag).dot(x.tail(n - lag)) / static_cast<double>(n) / g0;
  };
  double tau = -1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0) break;
    pair = std::min(pair, prev);
    prev = pair;
    tau += 2.0 * pair;
  }
  const double ess = static_cast<double>(n) / std::max(tau, 1e-12);
  return std::clamp(ess, 1.0, static_cast<double>(n));
}

Eigen::VectorXd column_ess(const Eigen::MatrixXd& draws) {
  Eigen::VectorXd out(draws.cols());
  for (Eigen::Index c = 0; c < draws.cols(); ++c) out(c) = effective_sample_size(Eigen::VectorXd(draws.col(c)));
  return out;
}

}  // namespace qmgp
