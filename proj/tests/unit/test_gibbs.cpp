#include "fixtures.hpp"

#include "qmgp/gibbs.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

using namespace qmgp;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

// Plain Gaussian log density through an LDLT.
double ldlt_logpdf(const Eigen::MatrixXd& C, const Eigen::VectorXd& x) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
  const double logdet = ldlt.vectorD().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * std::log(2 * std::numbers::pi) + logdet +
                 x.dot(ldlt.solve(x)));
}

Eigen::VectorXd gp_draw(const Eigen::MatrixXd& C, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Eigen::VectorXd e(C.rows());
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = z(rng);
  Eigen::LLT<Eigen::MatrixXd> llt(C);
  return llt.matrixL() * e;
}

Dataset make_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Dataset d;
  d.coords = X;
  d.y = y;
  return d;
}

McmcConfig quiet(int n_iter, int n_burn, std::vector<Step> order) {
  McmcConfig c;
  c.n_iter = n_iter;
  c.n_burn = n_burn;
  c.order = std::move(order);
  c.seed = 77;
  return c;
}

std::vector<char> observed_of(const Eigen::VectorXd& y) {
  std::vector<char> o;
  for (Eigen::Index i = 0; i < y.size(); ++i) o.push_back(!std::isnan(y(i)));
  return o;
}

}  // namespace

TEST_CASE("draw summary: moments and reservoir quantiles") {
  DrawSummary s(2, 1000, 3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::vector<double> xs;
  for (int t = 0; t < 800; ++t) {
    Eigen::VectorXd d(2);
    d << z(rng), 5.0 + 2.0 * z(rng);
    xs.push_back(d(0));
    s.add(d);
  }
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  CHECK(s.mean()(0) == doctest::Approx(mean).epsilon(1e-12));
  CHECK(s.stored() == 800);
  std::sort(xs.begin(), xs.end());
  CHECK(s.quantile(0, 0.0) == xs.front());
  CHECK(s.quantile(0, 1.0) == xs.back());
  CHECK(s.quantile(1, 0.5) == doctest::Approx(5.0).epsilon(0.05));

  DrawSummary small(1, 50, 9);
  for (int t = 0; t < 5000; ++t) small.add(Eigen::VectorXd::Constant(1, t));
  CHECK(small.stored() == 50);
  CHECK(small.count() == 5000);
  // a uniform subset of 0..4999 has its median near 2500
  CHECK(std::abs(small.quantile(0, 0.5) - 2500.0) < 900.0);
}

TEST_CASE("config validation") {
  McmcConfig c;
  c.n_iter = 10;
  c.n_burn = 10;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.n_burn = 2;
  c.thin = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.thin = 3;
  CHECK_NOTHROW(c.validate());
  CHECK(c.retained() == 2);  // iterations 5 and 8
}

TEST_CASE("beta full conditional matches the conjugate posterior") {
  std::mt19937_64 rng(11);
  const int n = 40;
  const Eigen::MatrixXd X = fixtures::uniform_points(n, 2, rng);
  Dataset d = make_data(X, Eigen::VectorXd::Zero(n));
  d.x.resize(n, 2);
  std::normal_distribution<double> z;
  for (int i = 0; i < n; ++i) {
    d.x(i, 0) = 1.0;
    d.x(i, 1) = z(rng);
    d.y(i, 0) = 0.5 - 1.5 * d.x(i, 1) + 0.8 * z(rng);
  }
  const auto b = fixtures::build(X, {2, 2});
  const MgpModel m = fixtures::model(b, 1);
  PriorSpec pr = PriorSpec::defaults(2, 1, {});
  pr.mu_beta << 1.0, -1.0;
  pr.prec_beta = 0.5 * Eigen::MatrixXd::Identity(2, 2);
  pr.fix_tau = true;
  GibbsSampler s(d, m, pr, CovParams::exponential(1.0, 2.0), quiet(4001, 1, {Step::Beta}));
  s.state().tau2(0) = 0.7;
  const ChainResult res = s.run();

  const Eigen::MatrixXd P = pr.prec_beta + d.x.transpose() * d.x / 0.7;
  const Eigen::MatrixXd V = P.inverse();
  const Eigen::VectorXd mu = V * (pr.prec_beta * pr.mu_beta + d.x.transpose() * d.y.col(0) / 0.7);
  const Eigen::MatrixXd tr = res.trace.leftCols(2);
  CHECK(tr.rows() == 4000);
  const Eigen::VectorXd mean = tr.colwise().mean();
  const Eigen::MatrixXd cen = tr.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = cen.transpose() * cen / (tr.rows() - 1);
  for (int k = 0; k < 2; ++k) {
    // independent draws: 5 Monte Carlo standard errors
    CHECK(std::abs(mean(k) - mu(k)) < 5 * std::sqrt(V(k, k) / 4000.0));
    CHECK(cov(k, k) == doctest::Approx(V(k, k)).epsilon(0.1));
  }
  CHECK(std::abs(cov(0, 1) - V(0, 1)) < 0.1 * std::sqrt(V(0, 0) * V(1, 1)));
}

TEST_CASE("degenerate design is reported") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd X = fixtures::uniform_points(10, 2, rng);
  Dataset d = make_data(X, Eigen::VectorXd::Ones(10));
  d.x = Eigen::MatrixXd::Zero(10, 1);
  const auto b = fixtures::build(X, {1, 1});
  const MgpModel m = fixtures::model(b, 1);
  GibbsSampler s(d, m, PriorSpec::defaults(1, 1, {}), CovParams::exponential(1, 1),
                 quiet(5, 1, {Step::Beta}));
  CHECK_THROWS_AS(s.update_beta(1), NumericalError);
}

TEST_CASE("tau2 full conditional matches the inverse-gamma posterior") {
  std::mt19937_64 rng(4);
  const int n = 30;
  const Eigen::MatrixXd X = fixtures::uniform_points(n, 2, rng);
  Eigen::VectorXd y(n);
  std::normal_distribution<double> z;
  for (int i = 0; i < n; ++i) y(i) = 0.6 * z(rng);
  y(3) = kNaN;  // missing entries do not count
  Dataset d = make_data(X, y);
  const auto b = fixtures::build(X, {2, 1}, observed_of(y));
  const MgpModel m = fixtures::model(b, 1);
  PriorSpec pr = PriorSpec::defaults(0, 1, {});
  pr.a_tau(0) = 3.0;
  pr.b_tau(0) = 0.5;
  GibbsSampler s(d, m, pr, CovParams::exponential(1, 1), quiet(6000, 0, {Step::Tau}));
  const ChainResult res = s.run();

  double sse = 0;
  for (int i = 0; i < n; ++i)
    if (!std::isnan(y(i))) sse += y(i) * y(i);
  const double a = 3.0 + (n - 1) / 2.0, bb = 0.5 + sse / 2.0;
  const double mean = bb / (a - 1), var = bb * bb / ((a - 1) * (a - 1) * (a - 2));
  const Eigen::VectorXd t = res.trace.col(0);
  const double sm = t.mean();
  const double sv = (t.array() - sm).square().sum() / (t.size() - 1);
  CHECK(std::abs(sm - mean) < 5 * std::sqrt(var / 6000.0));
  CHECK(sv == doctest::Approx(var).epsilon(0.1));
}

TEST_CASE("single region: w draws match the exact GP posterior") {
  std::mt19937_64 rng(8);
  const int n = 12;
  const Eigen::MatrixXd X = fixtures::uniform_points(n, 2, rng);
  const CovParams p = CovParams::exponential(1.0, 3.0);
  const Eigen::MatrixXd C = cov_matrix(X, p);
  Eigen::VectorXd y = gp_draw(C, rng);
  std::normal_distribution<double> z;
  for (int i = 0; i < n; ++i) y(i) += 0.3 * z(rng);
  Dataset d = make_data(X, y);
  const auto b = fixtures::build(X, {1, 1});
  const MgpModel m = fixtures::model(b, 1);
  PriorSpec pr = PriorSpec::defaults(0, 1, {});
  pr.fix_tau = true;
  GibbsSampler s(d, m, pr, p, quiet(3000, 0, {Step::WReference}));
  s.state().tau2(0) = 0.09;
  const ChainResult res = s.run();

  const Eigen::MatrixXd Pp = C.inverse() + Eigen::MatrixXd::Identity(n, n) / 0.09;
  const Eigen::MatrixXd V = Pp.inverse();
  const Eigen::VectorXd mu = V * y / 0.09;
  const Eigen::VectorXd var = res.w.variance();
  for (int i = 0; i < n; ++i) {
    CHECK(std::abs(res.w.mean()(i) - mu(i)) < 5 * std::sqrt(V(i, i) / 3000.0));
    CHECK(var(i) == doctest::Approx(V(i, i)).epsilon(0.12));
  }
}

TEST_CASE("multi-region: w chain targets the MGP posterior") {
  std::mt19937_64 rng(13);
  const Eigen::MatrixXd X = fixtures::grid({7, 7});
  const int n = 49;
  const CovParams p = CovParams::exponential(1.0, 4.0);
  Eigen::VectorXd y = gp_draw(cov_matrix(X, p), rng);
  std::normal_distribution<double> z;
  for (int i = 0; i < n; ++i) y(i) += 0.4 * z(rng);
  for (int i : {3, 10, 17, 24, 30, 31, 40, 48}) y(i) = kNaN;  // become non-reference
  Dataset d = make_data(X, y);
  const auto b = fixtures::build(X, {3, 3}, observed_of(y));
  const MgpModel m = fixtures::model(b, 1);
  PriorSpec pr = PriorSpec::defaults(0, 1, {});
  pr.fix_tau = true;
  McmcConfig cfg = quiet(6000, 200, {Step::WReference, Step::WOther});
  GibbsSampler s(d, m, pr, p, cfg);
  s.state().tau2(0) = 0.16;
  const ChainResult res = s.run();

  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  const Eigen::MatrixXd Ct = m.dense_covariance(all, s.moments(), p);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd yo = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    if (!std::isnan(y(i))) {
      D(i, i) = 1 / 0.16;
      yo(i) = y(i) / 0.16;
    }
  const Eigen::MatrixXd V = (Ct.inverse() + D).inverse();
  const Eigen::VectorXd mu = V * yo;
  double worst = 0;
  for (int i = 0; i < n; ++i)
    worst = std::max(worst, std::abs(res.w.mean()(i) - mu(i)) / std::sqrt(V(i, i)));
  // block Gibbs draws are autocorrelated; 5800 draws leave a few hundred
  // effective ones per location
  CHECK(worst < 0.3);
  const Eigen::VectorXd var = res.w.variance();
  for (int i = 0; i < n; ++i) CHECK(var(i) == doctest::Approx(V(i, i)).epsilon(0.25));
}

TEST_CASE("theta Metropolis step targets p(theta | w)") {
  std::mt19937_64 rng(21);
  const int n = 25;
  const Eigen::MatrixXd X = fixtures::uniform_points(n, 2, rng);
  const Eigen::VectorXd w = gp_draw(cov_matrix(X, CovParams::exponential(1.0, 4.0)), rng);
  Dataset d = make_data(X, w);
  const auto b = fixtures::build(X, {1, 1});
  const MgpModel m = fixtures::model(b, 1);

  SUBCASE("uniform prior on the decay, logit scale") {
    PriorSpec pr = PriorSpec::defaults(0, 1, {ThetaPrior::fixed(), ThetaPrior::uniform(0.5, 20.0)});
    McmcConfig cfg = quiet(12000, 2000, {Step::Theta});
    cfg.step = {0.0, 0.5};
    GibbsSampler s(d, m, pr, CovParams::exponential(1.0, 2.0), cfg);
    s.state().w = w;
    const ChainResult res = s.run();
    // numerical posterior on a fine grid
    double num = 0, den = 0, sq = 0;
    std::vector<double> lp;
    std::vector<double> cs;
    for (int g = 0; g < 4000; ++g) {
      const double c = 0.5 + (g + 0.5) * 19.5 / 4000;
      cs.push_back(c);
      lp.push_back(ldlt_logpdf(cov_matrix(X, CovParams::exponential(1.0, c)), w));
    }
    const double mx = *std::max_element(lp.begin(), lp.end());
    for (std::size_t g = 0; g < cs.size(); ++g) {
      const double wt = std::exp(lp[g] - mx);
      den += wt;
      num += wt * cs[g];
      sq += wt * cs[g] * cs[g];
    }
    const double mean = num / den, sd = std::sqrt(sq / den - mean * mean);
    const Eigen::VectorXd t = res.trace.col(2);
    CHECK(std::abs(t.mean() - mean) < 0.15 * sd);
    CHECK(res.accept_rate > 0.1);
    CHECK(res.accept_rate < 0.6);
  }

  SUBCASE("inverse-gamma prior on the variance, log scale") {
    PriorSpec pr = PriorSpec::defaults(0, 1, {ThetaPrior::inv_gamma(3.0, 2.0), ThetaPrior::fixed()});
    McmcConfig cfg = quiet(12000, 2000, {Step::Theta});
    cfg.step = {0.4, 0.0};
    GibbsSampler s(d, m, pr, CovParams::exponential(1.5, 4.0), cfg);
    s.state().w = w;
    const ChainResult res = s.run();
    // conjugate: sigma2 | w ~ IG(3 + n/2, 2 + w' R^{-1} w / 2) with R the correlation
    const Eigen::MatrixXd R = cov_matrix(X, CovParams::exponential(1.0, 4.0));
    const double a = 3.0 + n / 2.0, bb = 2.0 + 0.5 * w.dot(R.ldlt().solve(w));
    const double mean = bb / (a - 1), sd = mean / std::sqrt(a - 2);
    const Eigen::VectorXd t = res.trace.col(1);
    CHECK(std::abs(t.mean() - mean) < 0.15 * sd);
  }
}

TEST_CASE("masking, caching and threads do not change the chain") {
  std::mt19937_64 rng(31);
  const Eigen::MatrixXd X = fixtures::grid({8, 6});
  const int n = 48;
  const CovParams p = CovParams::exponential(1.0, 3.0);
  Eigen::VectorXd y = gp_draw(cov_matrix(X, p), rng);
  for (int i : {5, 6, 20, 33}) y(i) = kNaN;
  Dataset nan_data = make_data(X, y);
  Dataset masked = nan_data;
  masked.mask.assign(static_cast<std::size_t>(n), 1);
  for (int i : {5, 6, 20, 33}) {
    masked.y(i, 0) = 123.0;
    masked.mask[static_cast<std::size_t>(i)] = 0;
  }
  const auto b = fixtures::build(X, {4, 3}, observed_of(y));
  const MgpModel cached = fixtures::model(b, 1, true);
  const MgpModel plain = fixtures::model(b, 1, false);
  PriorSpec pr = PriorSpec::defaults(0, 1, {ThetaPrior::uniform(0.1, 10), ThetaPrior::uniform(0.1, 30)});
  McmcConfig cfg = quiet(40, 10, {Step::Theta, Step::WReference, Step::WOther, Step::Tau});
  cfg.summarize_all_y = true;

  const ChainResult r0 = GibbsSampler(nan_data, cached, pr, p, cfg).run();
  const ChainResult r1 = GibbsSampler(masked, cached, pr, p, cfg).run();
  CHECK(r0.trace == r1.trace);
  CHECK(r0.w.mean() == r1.w.mean());

  const ChainResult r2 = GibbsSampler(nan_data, plain, pr, p, cfg).run();
  CHECK((r0.trace - r2.trace).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((r0.w.mean() - r2.w.mean()).cwiseAbs().maxCoeff() < 1e-8);

  McmcConfig threaded = cfg;
  threaded.threads = 3;
  const ChainResult r3 = GibbsSampler(nan_data, cached, pr, p, threaded).run();
  threaded.threads = 1;
  const ChainResult r4 = GibbsSampler(nan_data, cached, pr, p, threaded).run();
  CHECK(r3.trace == r4.trace);
  CHECK(r3.y.mean() == r4.y.mean());
}

TEST_CASE("checkpoint and resume reproduce the uninterrupted chain") {
  std::mt19937_64 rng(41);
  const Eigen::MatrixXd X = fixtures::grid({6, 6});
  const CovParams p = CovParams::exponential(1.0, 3.0);
  Eigen::VectorXd y = gp_draw(cov_matrix(X, p), rng);
  y(7) = kNaN;
  Dataset d = make_data(X, y);
  const auto b = fixtures::build(X, {3, 3}, observed_of(y));
  const MgpModel m = fixtures::model(b, 1);
  PriorSpec pr = PriorSpec::defaults(0, 1, {ThetaPrior::uniform(0.1, 10), ThetaPrior::uniform(0.1, 30)});
  McmcConfig cfg = quiet(30, 5, {Step::Theta, Step::WReference, Step::WOther, Step::Tau});
  const ChainResult straight = GibbsSampler(d, m, pr, p, cfg).run();

  const auto path = std::filesystem::temp_directory_path() / "qmgp_resume_test.bin";
  std::filesystem::remove(path);
  cfg.checkpoint_path = path.string();
  cfg.checkpoint_every = 20;
  GibbsSampler(d, m, pr, p, cfg).run();  // leaves the iteration-20 checkpoint
  GibbsSampler resumed(d, m, pr, p, cfg);
  const ChainResult res = resumed.run();
  CHECK(res.iterations == 10);
  CHECK(res.trace == straight.trace);
  CHECK(res.w.mean() == straight.w.mean());
  CHECK(res.final_state.w == straight.final_state.w);

  McmcConfig other = cfg;
  other.seed = 5;
  CHECK_THROWS_AS(GibbsSampler(d, m, pr, p, other).run(), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("input validation") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd X = fixtures::uniform_points(8, 2, rng);
  const auto b = fixtures::build(X, {1, 1});
  const MgpModel m = fixtures::model(b, 1);
  Dataset d = make_data(X, Eigen::VectorXd::Ones(8));
  d.x = Eigen::MatrixXd::Ones(8, 1);
  d.x(2, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(GibbsSampler(d, m, PriorSpec::defaults(1, 1, {}), CovParams::exponential(1, 1),
                               quiet(5, 1, {Step::Beta})),
                  std::invalid_argument);
  Dataset e = make_data(X, Eigen::VectorXd::Ones(8));
  CHECK_THROWS_AS(GibbsSampler(e, m, PriorSpec::defaults(0, 1, {ThetaPrior::uniform(2, 3), ThetaPrior::fixed()}),
                               CovParams::exponential(1, 1), quiet(5, 1, {Step::Theta})),
                  std::invalid_argument);
}
