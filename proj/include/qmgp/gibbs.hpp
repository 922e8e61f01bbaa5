#pragma once

#include "qmgp/covariance.hpp"
#include "qmgp/mgp_core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace qmgp {

// y(l) = X(l)' beta + Z(l)' w(l) + eps(l). Outcome r uses the covariates in
// `x` with its own coefficient slice beta[r*k .. (r+1)*k).
struct Dataset {
  Eigen::MatrixXd coords;  // n x dim
  Eigen::MatrixXd y;       // n x l
  std::vector<char> mask;  // n * l row-major, 1 = observed; empty means "not NaN"
  Eigen::MatrixXd x;       // n x k, k may be 0
  Eigen::MatrixXd z;       // n x (l*q), row i is Z(l_i) (l x q) in row-major order;
                           // empty means Z = I (q = l)

  int n() const { return static_cast<int>(y.rows()); }
  int l() const { return static_cast<int>(y.cols()); }
  int k() const { return static_cast<int>(x.cols()); }
  int q() const { return z.size() == 0 ? l() : static_cast<int>(z.cols()) / l(); }
  int p() const { return l() * k(); }
  double zval(int i, int r, int c) const {
    if (z.size() == 0) return r == c ? 1.0 : 0.0;
    return z(i, r * q() + c);
  }
  bool observed(int i, int r) const {
    if (!mask.empty()) return mask[static_cast<std::size_t>(i) * static_cast<std::size_t>(l()) + r] != 0;
    return !std::isnan(y(i, r));
  }
  std::vector<char> observed_any() const;
  // Throws std::invalid_argument on inconsistent shapes or non-finite values.
  void validate() const;
};

struct ThetaPrior {
  enum class Kind { Uniform, InvGamma, Fixed };
  Kind kind = Kind::Uniform;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double a = 2.0;  // inverse-gamma shape
  double b = 1.0;  // inverse-gamma scale

  static ThetaPrior uniform(double lo, double hi) { return {Kind::Uniform, lo, hi, 0, 0}; }
  static ThetaPrior inv_gamma(double a, double b) {
    return {Kind::InvGamma, 0.0, std::numeric_limits<double>::infinity(), a, b};
  }
  static ThetaPrior fixed() { return {Kind::Fixed, 0, 0, 0, 0}; }
};

struct PriorSpec {
  Eigen::VectorXd mu_beta;    // p
  Eigen::MatrixXd prec_beta;  // p x p inverse prior covariance; zero gives a flat prior
  Eigen::VectorXd a_tau, b_tau;  // per outcome
  std::vector<ThetaPrior> theta; // aligned with parameter_names(theta)
  bool fix_beta = false;
  bool fix_tau = false;

  // Flat beta, IG(2, 1) noise, the given theta priors.
  static PriorSpec defaults(int p, int l, std::vector<ThetaPrior> theta);
};

enum class Step { Theta, WReference, WOther, Beta, Tau };

struct McmcConfig {
  int n_iter = 1000;
  int n_burn = 500;
  int thin = 1;
  std::uint64_t seed = 1;
  std::vector<double> step;  // per theta component, on the log/logit scale; default 0.1
  bool adapt = true;         // burn-in only, toward 0.23 acceptance
  int threads = 0;           // 0 keeps the OpenMP default
  std::vector<Step> order{Step::Theta, Step::WReference, Step::WOther, Step::Beta, Step::Tau};
  int reservoir = 500;       // retained draws kept per item for quantiles
  bool store_w_draws = false;
  double w_budget_mb = 1024.0;
  bool summarize_all_y = false;  // predictive summaries for observed entries too
  int log_every = 0;
  std::string checkpoint_path;
  int checkpoint_every = 0;

  void validate() const;
  int retained() const { return n_iter <= n_burn ? 0 : (n_iter - n_burn) / thin; }
};

struct ChainState {
  Eigen::VectorXd beta;
  Eigen::VectorXd tau2;
  CovParams theta;
  Eigen::VectorXd w;  // n_all * q, location-major
  int iteration = 0;
};

// Running mean and variance plus a reservoir of draws for quantiles. The
// reservoir keeps a uniformly chosen subset of draws (the same draws for
// every item) and is exact while draws <= capacity.
class DrawSummary {
 public:
  DrawSummary() = default;
  DrawSummary(int items, int capacity, std::uint64_t seed);

  void add(const Eigen::VectorXd& draw);
  int items() const { return static_cast<int>(mean_.size()); }
  long count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  Eigen::VectorXd variance() const;
  Eigen::VectorXd sd() const { return variance().cwiseSqrt(); }
  double quantile(int item, double prob) const;
  int stored() const;

  template <class Archive>
  void serialize(Archive& ar);

 private:
  Eigen::VectorXd mean_, m2_;
  Eigen::MatrixXd reservoir_;  // capacity x items
  long count_ = 0;
  std::uint64_t seed_ = 0;
};

struct ChainResult {
  std::vector<std::string> trace_names;  // beta_*, tau2_*, theta names
  Eigen::MatrixXd trace;                 // retained x columns
  DrawSummary w;                         // items: location * q + component
  std::vector<std::pair<int, int>> y_items;  // (location, outcome) with predictive summaries
  DrawSummary y;
  Eigen::MatrixXd w_draws;  // retained x (n_all * q), only with store_w_draws
  double accept_rate = 0.0;
  double seconds = 0.0;
  double seconds_per_iter = 0.0;
  double cache_hit_rate = 0.0;
  int iterations = 0;
  ChainState final_state;
};

// Binary archive of a finished chain (trace, summaries, stored draws).
void save_chain(const ChainResult& chain, const std::string& path);
ChainResult load_chain(const std::string& path);

class GibbsSampler {
 public:
  // `data` rows are the first n rows of the model's locations; extra model
  // locations (lattice fill) are treated as fully missing.
  GibbsSampler(const Dataset& data, const MgpModel& model, PriorSpec priors, CovParams theta0,
               McmcConfig config);

  ChainState& state() { return state_; }
  const ChainState& state() const { return state_; }
  const MomentSet& moments() const { return moments_; }
  const MgpModel& model() const { return model_; }
  void set_theta(const CovParams& theta);

  void update_theta(int iter);
  void update_w_reference(int iter);
  void update_w_other(int iter);
  void update_beta(int iter);
  void update_tau2(int iter);
  void iterate(int iter);

  double log_target() const;  // log p~(w_S) + log p~(w_U | w_S) at the current theta
  double acceptance_rate() const { return proposals_ == 0 ? 0.0 : double(accepted_) / proposals_; }
  double proposal_scale() const { return std::exp(log_scale_); }

  // Runs iterations state().iteration + 1 .. n_iter, resuming from the
  // checkpoint file when one exists for this configuration.
  ChainResult run();

  // Mean of y at location i for outcome r without noise.
  double fitted(int i, int r) const;

  std::vector<std::string> trace_names() const;

 private:
  struct Transform {
    enum Kind { Log, Logit, None } kind;
    double lo, hi;
  };

  double theta_log_prior(const std::vector<double>& v) const;
  void draw_block(int j, std::mt19937_64& rng);
  Eigen::VectorXd trace_row() const;
  void save_checkpoint(const ChainResult& partial) const;
  bool load_checkpoint(ChainResult& partial);
  std::uint64_t config_hash() const;

  const Dataset& data_;
  const MgpModel& model_;
  PriorSpec priors_;
  McmcConfig cfg_;
  ChainState state_;
  MomentSet moments_;
  std::vector<std::vector<int>> colors_;
  std::vector<Transform> transforms_;
  std::vector<int> free_;
  int q_ = 1;
  int n_all_ = 0;
  double log_scale_ = 0.0;
  long proposals_ = 0, accepted_ = 0;
  long batch_props_ = 0, batch_acc_ = 0;
  int batches_ = 0;
  double cache_hits_ = 0.0;
  long cache_events_ = 0;
};

}  // namespace qmgp
