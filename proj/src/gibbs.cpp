#include "qmgp/gibbs.hpp"

#include "qmgp/rng.hpp"

#include <cereal/archives/binary.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/utility.hpp>
#include <cereal/types/vector.hpp>

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace qmgp {

namespace {

constexpr int kCheckpointVersion = 1;

std::vector<double> to_vec(const Eigen::MatrixXd& m) {
  return {m.data(), m.data() + m.size()};
}

template <class Archive>
void save_matrix(Archive& ar, const Eigen::MatrixXd& m) {
  ar(static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols()), to_vec(m));
}

template <class Archive>
void load_matrix(Archive& ar, Eigen::MatrixXd& m) {
  std::int64_t r = 0, c = 0;
  std::vector<double> v;
  ar(r, c, v);
  m = Eigen::Map<Eigen::MatrixXd>(v.data(), r, c);
}

template <class Archive>
void save_vector(Archive& ar, const Eigen::VectorXd& v) {
  ar(std::vector<double>(v.data(), v.data() + v.size()));
}

template <class Archive>
void load_vector(Archive& ar, Eigen::VectorXd& v) {
  std::vector<double> s;
  ar(s);
  v = Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
}

Eigen::VectorXd standard_normal(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = z(rng);
  return v;
}


Eigen::VectorXd gather(const Eigen::VectorXd& w, const std::vector<int>& locs, int q) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(locs.size()) * q);
  for (std::size_t i = 0; i < locs.size(); ++i)
    out.segment(static_cast<Eigen::Index>(i) * q, q) = w.segment(static_cast<Eigen::Index>(locs[i]) * q, q);
  return out;
}

// Draw from N(P^{-1} b, P^{-1}) given the precision P.
Eigen::VectorXd sample_canonical(const Eigen::MatrixXd& P, const Eigen::VectorXd& b,
                                 std::mt19937_64& rng) {
  const Factor f = robust_cholesky(P);
  Eigen::VectorXd mean = f.solve(b);
  Eigen::VectorXd z = standard_normal(b.size(), rng);
  f.L.triangularView<Eigen::Lower>().transpose().solveInPlace(z);
  return mean + z;
}

double draw_inv_gamma(double shape, double rate, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(shape, 1.0 / rate);
  return 1.0 / g(rng);
}

}  // namespace

std::vector<char> Dataset::observed_any() const {
  std::vector<char> out(static_cast<std::size_t>(n()), 0);
  for (int i = 0; i < n(); ++i)
    for (int r = 0; r < l(); ++r)
      if (observed(i, r)) out[static_cast<std::size_t>(i)] = 1;
  return out;
}

void Dataset::validate() const {
  if (n() == 0 || l() == 0) throw std::invalid_argument("dataset has no rows or no outcomes");
  if (coords.rows() != n()) throw std::invalid_argument("coordinates and outcomes differ in rows");
  if (!coords.allFinite()) throw std::invalid_argument("non-finite coordinates");
  if (x.size() > 0 && x.rows() != n()) throw std::invalid_argument("X has the wrong number of rows");
  if (x.size() > 0 && !x.allFinite()) throw std::invalid_argument("non-finite covariates in X");
  if (z.size() > 0) {
    if (z.rows() != n() || z.cols() % l() != 0)
      throw std::invalid_argument("Z must have n rows and l*q columns");
    if (!z.allFinite()) throw std::invalid_argument("non-finite covariates in Z");
  }
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(n()) * static_cast<std::size_t>(l()))
    throw std::invalid_argument("mask must have n * l entries");
  for (int i = 0; i < n(); ++i)
    for (int r = 0; r < l(); ++r)
      if (observed(i, r) && !std::isfinite(y(i, r)))
        throw std::invalid_argument("observed outcome is not finite at row " + std::to_string(i));
}

PriorSpec PriorSpec::defaults(int p, int l, std::vector<ThetaPrior> theta) {
  PriorSpec s;
  s.mu_beta = Eigen::VectorXd::Zero(p);
  s.prec_beta = Eigen::MatrixXd::Zero(p, p);
  s.a_tau = Eigen::VectorXd::Constant(l, 2.0);
  s.b_tau = Eigen::VectorXd::Constant(l, 1.0);
  s.theta = std::move(theta);
  return s;
}

void McmcConfig::validate() const {
  if (n_iter < 1) throw std::invalid_argument("n_iter must be >= 1");
  if (n_burn < 0 || n_burn >= n_iter) throw std::invalid_argument("need 0 <= n_burn < n_iter");
  if (thin < 1) throw std::invalid_argument("thin must be >= 1");
  if (reservoir < 1) throw std::invalid_argument("reservoir must be >= 1");
  for (double s : step)
    if (!(s >= 0)) throw std::invalid_argument("proposal steps must be nonnegative");
}

DrawSummary::DrawSummary(int items, int capacity, std::uint64_t seed)
    : mean_(Eigen::VectorXd::Zero(items)),
      m2_(Eigen::VectorXd::Zero(items)),
      reservoir_(capacity, items),
      seed_(seed) {}

void DrawSummary::add(const Eigen::VectorXd& draw) {
  ++count_;
  const Eigen::VectorXd delta = draw - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta.cwiseProduct(draw - mean_);
  const long cap = reservoir_.rows();
  if (cap == 0) return;
  const long t = count_ - 1;
  if (t < cap) {
    reservoir_.row(t) = draw.transpose();
  } else {
    const auto slot = static_cast<long>(splitmix64(seed_ ^ splitmix64(static_cast<std::uint64_t>(t))) %
                                        static_cast<std::uint64_t>(t + 1));
    if (slot < cap) reservoir_.row(slot) = draw.transpose();
  }
}

Eigen::VectorXd DrawSummary::variance() const {
  if (count_ < 2) return Eigen::VectorXd::Zero(mean_.size());
  return m2_ / static_cast<double>(count_ - 1);
}

int DrawSummary::stored() const {
  return static_cast<int>(std::min<long>(count_, reservoir_.rows()));
}

double DrawSummary::quantile(int item, double prob) const {
  const int n = stored();
  if (n == 0) throw std::logic_error("quantile of an empty summary");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = reservoir_(i, item);
  std::sort(v.begin(), v.end());
  const double h = (n - 1) * std::clamp(prob, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

template <class Archive>
void DrawSummary::serialize(Archive& ar) {
  if constexpr (Archive::is_saving::value) {
    save_vector(ar, mean_);
    save_vector(ar, m2_);
    save_matrix(ar, reservoir_);
  } else {
    load_vector(ar, mean_);
    load_vector(ar, m2_);
    load_matrix(ar, reservoir_);
  }
  ar(count_, seed_);
}

namespace {
constexpr int kChainVersion = 1;
}

void save_chain(const ChainResult& c, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  cereal::BinaryOutputArchive ar(os);
  ar(kChainVersion, c.trace_names);
  save_matrix(ar, c.trace);
  ar(c.w, c.y_items, c.y);
  save_matrix(ar, c.w_draws);
  ar(c.accept_rate, c.seconds, c.seconds_per_iter, c.cache_hit_rate, c.iterations);
  save_vector(ar, c.final_state.beta);
  save_vector(ar, c.final_state.tau2);
  save_vector(ar, c.final_state.w);
  ar(get_parameters(c.final_state.theta), c.final_state.iteration);
}

ChainResult load_chain(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  cereal::BinaryInputArchive ar(is);
  ChainResult c;
  int version = 0;
  ar(version);
  if (version != kChainVersion) throw std::runtime_error(path + ": unsupported chain file version");
  ar(c.trace_names);
  load_matrix(ar, c.trace);
  ar(c.w, c.y_items, c.y);
  load_matrix(ar, c.w_draws);
  ar(c.accept_rate, c.seconds, c.seconds_per_iter, c.cache_hit_rate, c.iterations);
  load_vector(ar, c.final_state.beta);
  load_vector(ar, c.final_state.tau2);
  load_vector(ar, c.final_state.w);
  std::vector<double> th;  // theta values only; the family lives in the run config
  ar(th, c.final_state.iteration);
  return c;
}

GibbsSampler::GibbsSampler(const Dataset& data, const MgpModel& model, PriorSpec priors,
                           CovParams theta0, McmcConfig config)
    : data_(data), model_(model), priors_(std::move(priors)), cfg_(std::move(config)) {
  data_.validate();
  cfg_.validate();
  theta0.validate();
  q_ = model_.q();
  n_all_ = model_.assignment().n_all();
  if (data_.q() != q_) throw std::invalid_argument("dataset Z implies a different q than the model");
  if (data_.n() != model_.assignment().n_original)
    throw std::invalid_argument("dataset rows do not match the model locations");
  if (theta0.q() != q_) throw std::invalid_argument("covariance q does not match the model");
  const int p = data_.p();
  if (priors_.mu_beta.size() != p || priors_.prec_beta.rows() != p || priors_.prec_beta.cols() != p)
    throw std::invalid_argument("beta prior has the wrong dimension");
  if (priors_.a_tau.size() != data_.l() || priors_.b_tau.size() != data_.l())
    throw std::invalid_argument("noise prior needs one (a, b) per outcome");
  if ((priors_.a_tau.array() <= 0).any() || (priors_.b_tau.array() <= 0).any())
    throw std::invalid_argument("noise prior parameters must be positive");
  const auto names = parameter_names(theta0);
  if (priors_.theta.empty()) priors_.theta.assign(names.size(), ThetaPrior::fixed());
  if (priors_.theta.size() != names.size())
    throw std::invalid_argument("need one theta prior per covariance parameter");
  if (cfg_.step.empty()) cfg_.step.assign(names.size(), 0.1);
  if (cfg_.step.size() != names.size())
    throw std::invalid_argument("need one proposal step per covariance parameter");
  if (cfg_.threads > 0) omp_set_num_threads(cfg_.threads);

  if (!coloring_valid(model_.mesh()))
    throw std::logic_error("mesh coloring puts Markov-blanket neighbours in one color class");
  colors_ = color_classes(model_.mesh());

  const auto v0 = get_parameters(theta0);
  for (std::size_t k = 0; k < names.size(); ++k) {
    const ThetaPrior& pr = priors_.theta[k];
    Transform t{Transform::None, pr.lo, pr.hi};
    if (pr.kind == ThetaPrior::Kind::Fixed) {
      transforms_.push_back(t);
      continue;
    }
    if (!(pr.lo < pr.hi)) throw std::invalid_argument("prior bounds need lo < hi for " + names[k]);
    if (pr.kind == ThetaPrior::Kind::InvGamma && (pr.a <= 0 || pr.b <= 0))
      throw std::invalid_argument("inverse-gamma prior needs a, b > 0 for " + names[k]);
    if (std::isfinite(pr.lo) && std::isfinite(pr.hi)) {
      t.kind = Transform::Logit;
    } else if (pr.lo == 0.0 && !std::isfinite(pr.hi)) {
      t.kind = Transform::Log;
    } else {
      throw std::invalid_argument("unsupported prior support for " + names[k]);
    }
    transforms_.push_back(t);
    free_.push_back(static_cast<int>(k));
    if (!(v0[k] > pr.lo && v0[k] < pr.hi))
      throw std::invalid_argument("initial value of " + names[k] + " is outside its prior support");
  }

  state_.theta = theta0;
  state_.beta = Eigen::VectorXd::Zero(p);
  state_.tau2.resize(data_.l());
  for (int r = 0; r < data_.l(); ++r) {
    const double a = priors_.a_tau(r), b = priors_.b_tau(r);
    state_.tau2(r) = a > 1 ? b / (a - 1) : b / (a + 1);
  }
  state_.w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_all_) * q_);
  moments_ = model_.compute_moments(theta0);
}

void GibbsSampler::set_theta(const CovParams& theta) {
  theta.validate();
  moments_ = model_.compute_moments(theta);
  state_.theta = theta;
}

double GibbsSampler::theta_log_prior(const std::vector<double>& v) const {
  double lp = 0.0;
  for (int k : free_) {
    const auto ks = static_cast<std::size_t>(k);
    const ThetaPrior& pr = priors_.theta[ks];
    const double x = v[ks];
    if (!(x > pr.lo && x < pr.hi)) return -std::numeric_limits<double>::infinity();
    if (pr.kind == ThetaPrior::Kind::InvGamma) lp += -(pr.a + 1.0) * std::log(x) - pr.b / x;
  }
  return lp;
}

double GibbsSampler::log_target() const {
  return model_.log_density_reference(state_.w, moments_) + model_.log_density_other(state_.w, moments_);
}

void GibbsSampler::update_theta(int iter) {
  if (free_.empty()) return;
  auto rng = make_engine(cfg_.seed, static_cast<std::uint64_t>(iter), Stream::Theta, 0);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::vector<double> cur = get_parameters(state_.theta);
  std::vector<double> prop = cur;
  double log_jac = 0.0;  // log|d theta'/d eta'| - log|d theta/d eta|
  const double scale = std::exp(log_scale_);
  for (int k : free_) {
    const auto ks = static_cast<std::size_t>(k);
    const Transform& t = transforms_[ks];
    const double step = scale * cfg_.step[ks] * z(rng);
    if (t.kind == Transform::Log) {
      prop[ks] = cur[ks] * std::exp(step);
      log_jac += std::log(prop[ks]) - std::log(cur[ks]);
    } else {
      const double width = t.hi - t.lo;
      const double u = (cur[ks] - t.lo) / width;
      const double eta = std::log(u) - std::log1p(-u) + step;
      const double un = 1.0 / (1.0 + std::exp(-eta));
      prop[ks] = t.lo + width * un;
      log_jac += std::log(un) + std::log1p(-un) - std::log(u) - std::log1p(-u);
    }
  }
  const double u_accept = unif(rng);
  ++proposals_;
  ++batch_props_;

  const double lp_prop = theta_log_prior(prop);
  if (!std::isfinite(lp_prop)) return;
  CovParams cand = state_.theta;
  set_parameters(cand, prop);
  try {
    cand.validate();
  } catch (const std::invalid_argument&) {
    return;
  }
  MomentSet m;
  double ll_prop = 0.0;
  try {
    m = model_.compute_moments(cand);
    ll_prop = model_.log_density_reference(state_.w, m) + model_.log_density_other(state_.w, m);
  } catch (const NumericalError&) {
    return;
  }
  cache_hits_ += m.stats.hit_rate();
  ++cache_events_;
  const double ll_cur = log_target();
  const double log_ratio = ll_prop + lp_prop + log_jac - ll_cur - theta_log_prior(cur);
  if (std::log(u_accept) < log_ratio) {
    state_.theta = cand;
    moments_ = std::move(m);
    ++accepted_;
    ++batch_acc_;
  }
}

void GibbsSampler::draw_block(int j, std::mt19937_64& rng) {
  const auto js = static_cast<std::size_t>(j);
  const auto& ra = model_.assignment();
  const auto& mesh = model_.mesh();
  const auto& mo = *moments_.ref[js];
  const auto& S = ra.S[js];
  const Eigen::Index nq = static_cast<Eigen::Index>(S.size()) * q_;
  const Eigen::VectorXd wj = gather(state_.w, S, q_);

  Eigen::MatrixXd P = mo.Rinv;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nq);
  if (mo.H.cols() > 0) b.noalias() += mo.Rinv * (mo.H * gather(state_.w, model_.ref_parent_locs(j), q_));

  // data term, masked by the observed indicators
  for (std::size_t a = 0; a < S.size(); ++a) {
    const int i = S[a];
    if (i >= data_.n()) continue;
    const Eigen::Index o = static_cast<Eigen::Index>(a) * q_;
    for (int r = 0; r < data_.l(); ++r) {
      if (!data_.observed(i, r)) continue;
      double resid = data_.y(i, r);
      for (int c = 0; c < data_.k(); ++c) resid -= data_.x(i, c) * state_.beta(r * data_.k() + c);
      const double prec = 1.0 / state_.tau2(r);
      for (int c1 = 0; c1 < q_; ++c1) {
        const double z1 = data_.zval(i, r, c1);
        if (z1 == 0.0) continue;
        b(o + c1) += z1 * prec * resid;
        for (int c2 = 0; c2 < q_; ++c2) P(o + c1, o + c2) += z1 * prec * data_.zval(i, r, c2);
      }
    }
  }

  // reference children
  for (int c : mesh.children[js]) {
    const auto& mc = *moments_.ref[static_cast<std::size_t>(c)];
    const int s = model_.ref_slot(c, j);
    const auto& off = model_.ref_parent_offsets(c);
    const Eigen::Index c0 = static_cast<Eigen::Index>(off[static_cast<std::size_t>(s)]) * q_;
    const auto Gs = mc.G.middleCols(c0, nq);
    P += mc.GtG[static_cast<std::size_t>(s)];
    Eigen::VectorXd r = mc.R.whiten(gather(state_.w, ra.S[static_cast<std::size_t>(c)], q_));
    r.noalias() -= mc.G * gather(state_.w, model_.ref_parent_locs(c), q_);
    r.noalias() += Gs * wj;
    b.noalias() += Gs.transpose() * r;
  }
  // non-reference children
  for (int c : mesh.other_children[js]) {
    const auto& mc = *moments_.other[static_cast<std::size_t>(c)];
    const int s = model_.other_slot(c, j);
    const auto& off = model_.other_parent_offsets(c);
    const Eigen::Index c0 = static_cast<Eigen::Index>(off[static_cast<std::size_t>(s)]) * q_;
    const auto Gs = mc.G.middleCols(c0, nq);
    P += mc.GtG[static_cast<std::size_t>(s)];
    const auto& U = ra.U[static_cast<std::size_t>(c)];
    Eigen::VectorXd r(static_cast<Eigen::Index>(U.size()) * q_);
    for (std::size_t u = 0; u < U.size(); ++u) {
      const Eigen::Index o = static_cast<Eigen::Index>(u) * q_;
      r.segment(o, q_) = mc.L.middleRows(o, q_).triangularView<Eigen::Lower>().solve(
          state_.w.segment(static_cast<Eigen::Index>(U[u]) * q_, q_));
    }
    r.noalias() -= mc.G * gather(state_.w, model_.other_parent_locs(c), q_);
    r.noalias() += Gs * wj;
    b.noalias() += Gs.transpose() * r;
  }

  const Eigen::VectorXd draw = sample_canonical(P, b, rng);
  for (std::size_t a = 0; a < S.size(); ++a)
    state_.w.segment(static_cast<Eigen::Index>(S[a]) * q_, q_) = draw.segment(static_cast<Eigen::Index>(a) * q_, q_);
}

void GibbsSampler::update_w_reference(int iter) {
  for (const auto& cls : colors_) {
    const int nb = static_cast<int>(cls.size());
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < nb; ++t) {
      const int j = cls[static_cast<std::size_t>(t)];
      try {
        auto rng = make_engine(cfg_.seed, static_cast<std::uint64_t>(iter), Stream::WReference,
                               static_cast<std::uint64_t>(j));
        draw_block(j, rng);
      } catch (...) {
#pragma omp critical
        err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  }
}

void GibbsSampler::update_w_other(int iter) {
  const auto& ra = model_.assignment();
  const int M = ra.M();
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < M; ++j) {
    const auto js = static_cast<std::size_t>(j);
    if (!moments_.other[js]) continue;
    try {
      auto rng = make_engine(cfg_.seed, static_cast<std::uint64_t>(iter), Stream::WOther,
                             static_cast<std::uint64_t>(j));
      const auto& mo = *moments_.other[js];
      const auto& U = ra.U[js];
      const Eigen::VectorXd mu = mo.H * gather(state_.w, model_.other_parent_locs(j), q_);
      for (std::size_t u = 0; u < U.size(); ++u) {
        const int i = U[u];
        const Eigen::Index o = static_cast<Eigen::Index>(u) * q_;
        Eigen::MatrixXd P = mo.Rinv.middleRows(o, q_);
        Eigen::VectorXd b = P * mu.segment(o, q_);
        if (i < data_.n()) {
          for (int r = 0; r < data_.l(); ++r) {
            if (!data_.observed(i, r)) continue;
            double resid = data_.y(i, r);
            for (int c = 0; c < data_.k(); ++c) resid -= data_.x(i, c) * state_.beta(r * data_.k() + c);
            const double prec = 1.0 / state_.tau2(r);
            for (int c1 = 0; c1 < q_; ++c1) {
              const double z1 = data_.zval(i, r, c1);
              b(c1) += z1 * prec * resid;
              for (int c2 = 0; c2 < q_; ++c2) P(c1, c2) += z1 * prec * data_.zval(i, r, c2);
            }
          }
        }
        state_.w.segment(static_cast<Eigen::Index>(i) * q_, q_) = sample_canonical(P, b, rng);
      }
    } catch (...) {
#pragma omp critical
      err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

void GibbsSampler::update_beta(int iter) {
  const int p = data_.p();
  const int k = data_.k();
  if (p == 0 || priors_.fix_beta) return;
  Eigen::MatrixXd P = priors_.prec_beta;
  Eigen::VectorXd b = priors_.prec_beta * priors_.mu_beta;
  for (int i = 0; i < data_.n(); ++i) {
    for (int r = 0; r < data_.l(); ++r) {
      if (!data_.observed(i, r)) continue;
      double resid = data_.y(i, r);
      for (int c = 0; c < q_; ++c) resid -= data_.zval(i, r, c) * state_.w(static_cast<Eigen::Index>(i) * q_ + c);
      const double prec = 1.0 / state_.tau2(r);
      const Eigen::VectorXd xi = data_.x.row(i).transpose();
      P.block(r * k, r * k, k, k).noalias() += prec * xi * xi.transpose();
      b.segment(r * k, k) += prec * resid * xi;
    }
  }
  auto rng = make_engine(cfg_.seed, static_cast<std::uint64_t>(iter), Stream::Beta, 0);
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success)
    throw NumericalError("beta full conditional is singular (degenerate design)");
  state_.beta = sample_canonical(P, b, rng);
}

void GibbsSampler::update_tau2(int iter) {
  if (priors_.fix_tau) return;
  const int l = data_.l();
  Eigen::VectorXd sse = Eigen::VectorXd::Zero(l);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(l);
  for (int i = 0; i < data_.n(); ++i) {
    for (int r = 0; r < l; ++r) {
      if (!data_.observed(i, r)) continue;
      const double e = data_.y(i, r) - fitted(i, r);
      sse(r) += e * e;
      count(r) += 1;
    }
  }
  for (int r = 0; r < l; ++r) {
    auto rng = make_engine(cfg_.seed, static_cast<std::uint64_t>(iter), Stream::Tau,
                           static_cast<std::uint64_t>(r));
    state_.tau2(r) = draw_inv_gamma(priors_.a_tau(r) + count(r) / 2.0,
                                    priors_.b_tau(r) + sse(r) / 2.0, rng);
  }
}

double GibbsSampler::fitted(int i, int r) const {
  double v = 0.0;
  const int k = data_.k();
  if (i < data_.n()) {
    for (int c = 0; c < k; ++c) v += data_.x(i, c) * state_.beta(r * k + c);
    for (int c = 0; c < q_; ++c) v += data_.zval(i, r, c) * state_.w(static_cast<Eigen::Index>(i) * q_ + c);
  }
  return v;
}

void GibbsSampler::iterate(int iter) {
  for (Step s : cfg_.order) {
    switch (s) {
      case Step::Theta: update_theta(iter); break;
      case Step::WReference: update_w_reference(iter); break;
      case Step::WOther: update_w_other(iter); break;
      case Step::Beta: update_beta(iter); break;
      case Step::Tau: update_tau2(iter); break;
    }
  }
  state_.iteration = iter;
  if (cfg_.adapt && iter <= cfg_.n_burn && !free_.empty() && batch_props_ >= 50) {
    ++batches_;
    const double rate = static_cast<double>(batch_acc_) / static_cast<double>(batch_props_);
    log_scale_ += std::min(1.0, 5.0 / std::sqrt(static_cast<double>(batches_))) * (rate - 0.23);
    batch_props_ = batch_acc_ = 0;
  }
}

std::vector<std::string> GibbsSampler::trace_names() const {
  std::vector<std::string> names;
  const int k = data_.k();
  for (int r = 0; r < data_.l(); ++r)
    for (int c = 0; c < k; ++c)
      names.push_back("beta_" + std::to_string(r + 1) + "_" + std::to_string(c + 1));
  for (int r = 0; r < data_.l(); ++r) names.push_back("tau2_" + std::to_string(r + 1));
  for (const auto& n : parameter_names(state_.theta)) names.push_back(n);
  return names;
}

Eigen::VectorXd GibbsSampler::trace_row() const {
  const auto th = get_parameters(state_.theta);
  Eigen::VectorXd row(state_.beta.size() + state_.tau2.size() + static_cast<Eigen::Index>(th.size()));
  row << state_.beta, state_.tau2, Eigen::Map<const Eigen::VectorXd>(th.data(), static_cast<Eigen::Index>(th.size()));
  return row;
}

std::uint64_t GibbsSampler::config_hash() const {
  std::uint64_t h = splitmix64(cfg_.seed);
  auto mix = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = splitmix64(h ^ bits);
  };
  mix(cfg_.n_iter);
  mix(cfg_.n_burn);
  mix(cfg_.thin);
  mix(cfg_.reservoir);
  mix(n_all_);
  mix(q_);
  for (int i = 0; i < data_.n(); ++i)
    for (int r = 0; r < data_.l(); ++r) mix(data_.observed(i, r) ? data_.y(i, r) : -1e300);
  return h;
}

void GibbsSampler::save_checkpoint(const ChainResult& partial) const {
  const std::string tmp = cfg_.checkpoint_path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp);
    cereal::BinaryOutputArchive ar(os);
    ar(kCheckpointVersion, config_hash(), state_.iteration);
    save_vector(ar, state_.beta);
    save_vector(ar, state_.tau2);
    ar(get_parameters(state_.theta));
    save_vector(ar, state_.w);
    ar(log_scale_, proposals_, accepted_, batch_props_, batch_acc_, batches_, cache_hits_, cache_events_);
    save_matrix(ar, partial.trace);
    ar(partial.w, partial.y, partial.y_items);
    save_matrix(ar, partial.w_draws);
  }
  std::filesystem::rename(tmp, cfg_.checkpoint_path);
}

bool GibbsSampler::load_checkpoint(ChainResult& partial) {
  std::ifstream is(cfg_.checkpoint_path, std::ios::binary);
  if (!is) return false;
  cereal::BinaryInputArchive ar(is);
  int version = 0;
  std::uint64_t hash = 0;
  ar(version, hash);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint version " + std::to_string(version) + " is not supported");
  if (hash != config_hash()) throw std::runtime_error("checkpoint belongs to a different configuration");
  ar(state_.iteration);
  load_vector(ar, state_.beta);
  load_vector(ar, state_.tau2);
  std::vector<double> th;
  ar(th);
  CovParams theta = state_.theta;
  set_parameters(theta, th);
  set_theta(theta);
  load_vector(ar, state_.w);
  ar(log_scale_, proposals_, accepted_, batch_props_, batch_acc_, batches_, cache_hits_, cache_events_);
  load_matrix(ar, partial.trace);
  ar(partial.w, partial.y, partial.y_items);
  load_matrix(ar, partial.w_draws);
  return true;
}

ChainResult GibbsSampler::run() {
  ChainResult res;
  res.trace_names = trace_names();
  const int kept = cfg_.retained();
  const Eigen::Index nw = static_cast<Eigen::Index>(n_all_) * q_;
  const int cap = std::min(cfg_.reservoir, std::max(kept, 1));
  res.trace.resize(0, static_cast<Eigen::Index>(res.trace_names.size()));
  res.w = DrawSummary(static_cast<int>(nw), cap, splitmix64(cfg_.seed ^ 0x5157ULL));
  for (int i = 0; i < data_.n(); ++i)
    for (int r = 0; r < data_.l(); ++r)
      if (cfg_.summarize_all_y || !data_.observed(i, r)) res.y_items.emplace_back(i, r);
  res.y = DrawSummary(static_cast<int>(res.y_items.size()), cap, splitmix64(cfg_.seed ^ 0x5158ULL));
  if (cfg_.store_w_draws) {
    const double mb = static_cast<double>(kept) * static_cast<double>(nw) * 8.0 / (1024.0 * 1024.0);
    if (mb > cfg_.w_budget_mb)
      throw std::invalid_argument("storing all w draws needs " + std::to_string(mb) +
                                  " MB, above the budget of " + std::to_string(cfg_.w_budget_mb) + " MB");
    res.w_draws.resize(0, nw);
  }

  if (!cfg_.checkpoint_path.empty() && std::filesystem::exists(cfg_.checkpoint_path)) {
    load_checkpoint(res);
    if (cfg_.log_every > 0)
      std::cerr << "resumed from " << cfg_.checkpoint_path << " at iteration " << state_.iteration << '\n';
  }

  const auto t0 = std::chrono::steady_clock::now();
  const int first = state_.iteration + 1;
  for (int it = first; it <= cfg_.n_iter; ++it) {
    iterate(it);
    if (it > cfg_.n_burn && (it - cfg_.n_burn) % cfg_.thin == 0) {
      res.trace.conservativeResize(res.trace.rows() + 1, Eigen::NoChange);
      res.trace.row(res.trace.rows() - 1) = trace_row().transpose();
      res.w.add(state_.w);
      if (!res.y_items.empty()) {
        Eigen::VectorXd yd(static_cast<Eigen::Index>(res.y_items.size()));
        const auto& ra = model_.assignment();
        // one substream per region keeps the noise draws schedule-free
        std::vector<std::mt19937_64> engines;
        std::vector<char> made(static_cast<std::size_t>(ra.M()), 0);
        engines.resize(static_cast<std::size_t>(ra.M()));
        std::normal_distribution<double> z;
        for (std::size_t t = 0; t < res.y_items.size(); ++t) {
          const auto [i, r] = res.y_items[t];
          const auto reg = static_cast<std::size_t>(ra.region[static_cast<std::size_t>(i)]);
          if (!made[reg]) {
            engines[reg] = make_engine(cfg_.seed, static_cast<std::uint64_t>(it), Stream::Predict, reg);
            made[reg] = 1;
          }
          yd(static_cast<Eigen::Index>(t)) = fitted(i, r) + std::sqrt(state_.tau2(r)) * z(engines[reg]);
        }
        res.y.add(yd);
      }
      if (cfg_.store_w_draws) {
        res.w_draws.conservativeResize(res.w_draws.rows() + 1, Eigen::NoChange);
        res.w_draws.row(res.w_draws.rows() - 1) = state_.w.transpose();
      }
    }
    if (cfg_.log_every > 0 && it % cfg_.log_every == 0) {
      char line[256];
      std::snprintf(line, sizeof line, "iter %d/%d logdens %.6g accept %.3f cache_hit %.3f", it,
                    cfg_.n_iter, log_target(), acceptance_rate(),
                    cache_events_ ? cache_hits_ / static_cast<double>(cache_events_) : moments_.stats.hit_rate());
      std::cerr << line << '\n';
    }
    if (!cfg_.checkpoint_path.empty() && cfg_.checkpoint_every > 0 && it % cfg_.checkpoint_every == 0)
      save_checkpoint(res);
  }
  const auto t1 = std::chrono::steady_clock::now();
  res.seconds = std::chrono::duration<double>(t1 - t0).count();
  res.iterations = cfg_.n_iter - first + 1;
  res.seconds_per_iter = res.iterations > 0 ? res.seconds / res.iterations : 0.0;
  res.accept_rate = acceptance_rate();
  res.cache_hit_rate = cache_events_ ? cache_hits_ / static_cast<double>(cache_events_) : moments_.stats.hit_rate();
  res.final_state = state_;
  return res;
}

}  // namespace qmgp
