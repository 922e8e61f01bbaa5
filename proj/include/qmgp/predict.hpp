#pragma once

#include "qmgp/gibbs.hpp"
#include "qmgp/mgp_core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace qmgp {

// Per location (rows) and outcome (columns).
struct PredictionResult {
  Eigen::MatrixXd mean, sd, lower, upper;
  double level = 0.95;
  int draws = 0;
};

// Covariates at the prediction locations. Empty x means no fixed effects;
// empty z means Z = I.
struct NewSites {
  Eigen::MatrixXd coords;
  Eigen::MatrixXd x;
  Eigen::MatrixXd z;  // same layout as Dataset::z
};

// Posterior predictive at arbitrary locations from a chain that kept its w
// draws. Locations that coincide with model locations reuse the sampled w;
// others draw w from the conditional given their region's parents, one draw
// per retained iteration. The mean is the average of the noise-free fitted
// values; sd and bounds include the noise.
PredictionResult predict_at(const MgpModel& model, const NewSites& sites, const ChainResult& chain,
                            const CovParams& theta_template, int l, double level = 0.95,
                            std::uint64_t seed = 1);

// Predictive summaries for the (location, outcome) items the sampler
// tracked. Rows follow chain.y_items, one column.
PredictionResult summarize_tracked(const Dataset& data, const ChainResult& chain,
                                   double level = 0.95);

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;
  long n = 0;
};

// Evaluates entries with mask != 0 (all entries when the mask is empty).
Metrics metrics(const Eigen::VectorXd& mean, const Eigen::VectorXd& lower,
                const Eigen::VectorXd& upper, const Eigen::VectorXd& truth,
                const std::vector<char>& mask = {});

// Initial positive sequence estimator (monotone variant), clipped to [1, N].
double effective_sample_size(const Eigen::VectorXd& draws);
Eigen::VectorXd column_ess(const Eigen::MatrixXd& draws);

}  // namespace qmgp
