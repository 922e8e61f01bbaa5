#include "qmgp/bench.hpp"
#include "qmgp/cli.hpp"
#include "qmgp/covariance.hpp"
#include "qmgp/gibbs.hpp"
#include "qmgp/linalg.hpp"
#include "qmgp/mesh.hpp"
#include "qmgp/mgp_core.hpp"
#include "qmgp/predict.hpp"
#include "qmgp/synth.hpp"
#include "qmgp/tessellation.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>
#include <openssl/evp.h>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

namespace qmgp::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string fmt_hex(unsigned char b) { return fmt::format("{:02x}", b); }
std::string fmt_join(const std::vector<std::string>& v) { return fmt::format("{}", fmt::join(v, ",")); }

// ---------------------------------------------------------------------------
// settings

struct Registry {
  std::map<std::string, std::string> values;
  std::vector<std::string> order;
  std::vector<std::string> theta, prior;  // "name=value", later entries win
};

void add(CLI::App* app, Registry& reg, const std::string& names, const std::string& def,
         const std::string& help) {
  const std::string key = names.substr(0, names.find(','));
  reg.values[key] = def;
  reg.order.push_back(key);
  std::string flags;
  for (const auto& n : split_list(names)) flags += (flags.empty() ? "--" : ",--") + n;
  app->add_option(flags, reg.values[key], help)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)
      ->default_str(def);
}

const std::string& get(const Registry& r, const std::string& key) { return r.values.at(key); }

double as_double(const Registry& r, const std::string& key) {
  const std::string& s = get(r, key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(key + ": expected a number, got '" + s + "'");
  }
}

int as_int(const Registry& r, const std::string& key) {
  const double v = as_double(r, key);
  if (v != std::floor(v) || std::abs(v) > 2e9) throw UsageError(key + ": expected an integer");
  return static_cast<int>(v);
}

bool as_bool(const Registry& r, const std::string& key) {
  std::string s = get(r, key);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw UsageError(key + ": expected true or false, got '" + s + "'");
}

std::vector<int> as_ints(const Registry& r, const std::string& key) {
  std::vector<int> out;
  for (const auto& s : split_list(get(r, key))) {
    try {
      out.push_back(std::stoi(s));
    } catch (const std::exception&) {
      throw UsageError(key + ": expected a list of integers");
    }
  }
  return out;
}

std::map<std::string, std::string> as_map(const std::vector<std::string>& entries, const std::string& what) {
  std::map<std::string, std::string> out;
  for (const auto& e : entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError(what + ": expected name=value, got '" + e + "'");
    out[e.substr(0, eq)] = e.substr(eq + 1);
  }
  return out;
}

double parse_num(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(what + ": expected a number, got '" + s + "'");
  }
}

std::string config_text(const Registry& r, const std::map<std::string, std::string>& theta,
                        const std::map<std::string, std::string>& prior, bool for_hash) {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  for (const auto& key : r.order) {
    if (for_hash && (key == "output.dir" || key == "mcmc.threads" || key == "mcmc.log_every")) continue;
    const auto dot = key.find('.');
    sections[key.substr(0, dot)].emplace_back(key.substr(dot + 1), r.values.at(key));
  }
  std::ostringstream os;
  for (const auto& [sec, kv] : sections) {
    os << '[' << sec << "]\n";
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
    os << '\n';
  }
  if (!theta.empty()) {
    os << "[theta]\n";
    for (const auto& [k, v] : theta) os << k << " = " << v << '\n';
    os << '\n';
  }
  if (!prior.empty()) {
    os << "[prior]\n";
    for (const auto& [k, v] : prior) os << k << " = " << v << '\n';
  }
  return os.str();
}

std::string sha256(const std::string& text) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt_hex(md[i]);
  return hex;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw DataError("cannot write " + p.string());
  os << text;
}

fs::path out_dir(const Registry& r) {
  const std::string& d = get(r, "output.dir");
  if (d.empty()) throw UsageError("output.dir (--out) is required");
  fs::create_directories(d);
  return d;
}

void set_threads(const Registry& r) {
  const int t = as_int(r, "mcmc.threads");
  if (t < 0) throw UsageError("mcmc.threads must be >= 0");
  if (t > 0) omp_set_num_threads(t);
}

// ---------------------------------------------------------------------------
// fit setup

void register_fit(CLI::App* app, Registry& reg) {
  add(app, reg, "data.path", "", "input table (comma or tab separated, header row)");
  add(app, reg, "data.coords", "", "coordinate columns; default: columns named coord*");
  add(app, reg, "data.outcomes", "", "outcome columns; default: columns named y*");
  add(app, reg, "data.x", "", "covariate columns for X ('1' is a constant)");
  add(app, reg, "data.z", "", "columns of Z, l*q of them, row-major per location ('1' is a constant)");
  add(app, reg, "data.observed", "", "0/1 columns flagging observed outcomes, one per outcome");
  add(app, reg, "model.family", "gneiting", "exponential | gneiting | multivariate | latent-distance");
  add(app, reg, "model.lag", "unsquared", "spatial lag in phi_1: squared | unsquared");
  add(app, reg, "model.psi2_arg", "delta-squared", "argument of psi_2: delta-squared | delta");
  add(app, reg, "model.psi2_direct", "false", "q = 2: sample psi_2 directly");
  add(app, reg, "model.time_axis", "auto", "last coordinate is time: true | false | auto");
  add(app, reg, "model.q", "0", "latent dimension; 0 takes it from Z");
  add(app, reg, "model.intervals", "", "intervals per axis; default about 32 locations per region");
  add(app, reg, "model.policy", "observed", "reference set: observed | lattice | cover");
  add(app, reg, "model.rule", "equal-width", "breakpoints: equal-width | equal-count");
  add(app, reg, "model.caching", "true", "reuse factorizations across congruent regions");
  add(app, reg, "mcmc.n_iter", "1000", "total iterations");
  add(app, reg, "mcmc.n_burn", "500", "burn-in iterations");
  add(app, reg, "mcmc.thin", "1", "keep every k-th draw after burn-in");
  add(app, reg, "mcmc.seed", "1", "random seed");
  add(app, reg, "mcmc.adapt", "true", "adapt the theta proposal during burn-in");
  add(app, reg, "mcmc.step", "0.1", "theta proposal scale on the log/logit scale");
  add(app, reg, "mcmc.reservoir", "1000", "draws kept per item for quantiles");
  add(app, reg, "mcmc.store_w_draws", "false", "keep every retained w draw (needed to predict at new sites)");
  add(app, reg, "mcmc.w_budget_mb", "2048", "memory cap for stored w draws");
  add(app, reg, "mcmc.log_every", "100", "progress line every k iterations, 0 for none");
  add(app, reg, "mcmc.checkpoint_every", "0", "write a resumable checkpoint every k iterations");
  add(app, reg, "mcmc.threads,threads", "0", "worker threads, 0 for the OpenMP default");
  add(app, reg, "output.dir,out", "", "output directory");
  add(app, reg, "output.level", "0.95", "credible level of the w summaries");
  add(app, reg, "output.dump_dag,dump-dag", "", "write the mesh edge list to this file");
  app->add_option("--theta", reg.theta, "initial covariance parameter, name=value");
  app->add_option("--prior", reg.prior,
                  "prior, name=uniform:lo:hi | ig:a:b | fixed; tau2=ig:a:b; beta=normal:mean:var | flat");
}

struct Loaded {
  Dataset data;
  std::vector<std::string> coords, outcomes, x, z;
};

std::vector<std::string> names_with_prefix(const Table& t, const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& h : t.header)
    if (h.rfind(prefix, 0) == 0) out.push_back(h);
  return out;
}

Eigen::MatrixXd columns(const Table& t, const std::vector<std::string>& names) {
  Eigen::MatrixXd out(t.values.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) =
        names[i] == "1" ? Eigen::VectorXd::Ones(t.values.rows()) : Eigen::VectorXd(t.values.col(t.col(names[i])));
  return out;
}

void require_finite(const Eigen::MatrixXd& m, const std::vector<std::string>& names, const std::string& path) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (!std::isfinite(m(r, c)))
        throw DataError(path + ": row " + std::to_string(r + 1) + ": missing or non-finite value in column '" +
                        names[static_cast<std::size_t>(c)] + "'");
}

Loaded ingest(Registry& reg) {
  const std::string path = get(reg, "data.path");
  if (path.empty()) throw UsageError("data.path is required");
  const Table t = read_table(path);
  reg.values["data.path"] = fs::absolute(path).lexically_normal().string();
  Loaded L;
  L.coords = split_list(get(reg, "data.coords"));
  if (L.coords.empty()) L.coords = names_with_prefix(t, "coord");
  if (L.coords.empty()) throw DataError(path + ": no coordinate columns");
  L.outcomes = split_list(get(reg, "data.outcomes"));
  if (L.outcomes.empty()) L.outcomes = names_with_prefix(t, "y");
  if (L.outcomes.empty()) throw DataError(path + ": no outcome columns");
  L.x = split_list(get(reg, "data.x"));
  L.z = split_list(get(reg, "data.z"));
  reg.values["data.coords"] = fmt_join(L.coords);
  reg.values["data.outcomes"] = fmt_join(L.outcomes);

  Dataset& d = L.data;
  d.coords = columns(t, L.coords);
  require_finite(d.coords, L.coords, path);
  d.y = columns(t, L.outcomes);
  if (!L.x.empty()) {
    d.x = columns(t, L.x);
    require_finite(d.x, L.x, path);
  } else {
    d.x.resize(d.y.rows(), 0);
  }
  if (!L.z.empty()) {
    if (L.z.size() % L.outcomes.size() != 0) throw DataError("data.z needs l*q columns");
    d.z = columns(t, L.z);
    require_finite(d.z, L.z, path);
  }
  const auto flags = split_list(get(reg, "data.observed"));
  if (!flags.empty()) {
    if (flags.size() != L.outcomes.size()) throw DataError("data.observed needs one column per outcome");
    const Eigen::MatrixXd f = columns(t, flags);
    d.mask.resize(static_cast<std::size_t>(f.size()));
    for (Eigen::Index i = 0; i < f.rows(); ++i)
      for (Eigen::Index r = 0; r < f.cols(); ++r)
        d.mask[static_cast<std::size_t>(i * f.cols() + r)] = f(i, r) != 0 && !std::isnan(d.y(i, r));
  }
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(path + ": " + e.what());
  }
  for (int r = 0; r < d.l(); ++r) {
    int miss = 0;
    for (int i = 0; i < d.n(); ++i) miss += !d.observed(i, r);
    std::cerr << "outcome " << L.outcomes[static_cast<std::size_t>(r)] << ": " << miss << " of " << d.n()
              << " missing (" << num(100.0 * miss / d.n()).substr(0, 6) << "%)\n";
  }
  std::set<std::vector<double>> seen;
  int dups = 0;
  for (int i = 0; i < d.n(); ++i) {
    const Eigen::RowVectorXd row = d.coords.row(i);
    dups += !seen.insert(std::vector<double>(row.data(), row.data() + row.size())).second;
  }
  if (dups > 0) std::cerr << "warning: " << dups << " duplicate locations\n";
  return L;
}

CovParams default_theta(const Registry& reg, int dim, int q) {
  const CovFamily fam = [&] {
    try {
      return parse_family(get(reg, "model.family"));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }();
  const std::string lag = get(reg, "model.lag");
  if (lag != "squared" && lag != "unsquared") throw UsageError("model.lag must be squared or unsquared");
  const std::string p2 = get(reg, "model.psi2_arg");
  if (p2 != "delta-squared" && p2 != "delta") throw UsageError("model.psi2_arg must be delta-squared or delta");
  std::string ta = get(reg, "model.time_axis");
  CovParams p;
  p.family = fam;
  p.lag = lag == "squared" ? LagArgument::Squared : LagArgument::Unsquared;
  p.psi2_arg = p2 == "delta" ? Psi2Argument::Delta : Psi2Argument::DeltaSquared;
  p.time_axis = ta == "auto" ? (dim >= 2 && (fam == CovFamily::GneitingSpaceTime || fam == CovFamily::MultivariateNonseparable))
                             : as_bool(reg, "model.time_axis");
  switch (fam) {
    case CovFamily::Exponential:
    case CovFamily::GneitingSpaceTime:
      if (q != 1) throw UsageError("the " + get(reg, "model.family") + " family is univariate (q = 1)");
      break;
    case CovFamily::MultivariateNonseparable:
      if (q == 2 && as_bool(reg, "model.psi2_direct")) {
        p.psi2_direct = 1.0;
      } else {
        p.delta = Eigen::MatrixXd::Ones(q, q) - Eigen::MatrixXd::Identity(q, q);
      }
      break;
    case CovFamily::LatentDistance:
      p.latent.sigma1 = Eigen::VectorXd::Ones(q);
      p.latent.sigma2 = Eigen::VectorXd::Ones(q);
      p.latent.phi_var = Eigen::VectorXd::Ones(q);
      p.latent.v = Eigen::MatrixXd::Ones(q, q) - Eigen::MatrixXd::Identity(q, q);
      break;
  }
  return p;
}

std::string default_prior(const std::string& name) {
  if (name == "sigma2" || name.rfind("sigma1_", 0) == 0 || name.rfind("sigma2_", 0) == 0) return "ig:2:1";
  if (name == "beta1" || name == "beta2" || name == "beta") return "uniform:0:1";
  return "uniform:0:10000";
}

ThetaPrior parse_theta_prior(const std::string& name, const std::string& spec) {
  const auto parts = split_list(spec, ':');
  if (parts.empty()) throw UsageError("empty prior for " + name);
  if (parts[0] == "fixed" && parts.size() == 1) return ThetaPrior::fixed();
  if (parts[0] == "uniform" && parts.size() == 3)
    return ThetaPrior::uniform(parse_num(parts[1], "prior " + name), parse_num(parts[2], "prior " + name));
  if (parts[0] == "ig" && parts.size() == 3)
    return ThetaPrior::inv_gamma(parse_num(parts[1], "prior " + name), parse_num(parts[2], "prior " + name));
  throw UsageError("prior " + name + ": expected uniform:lo:hi, ig:a:b or fixed, got '" + spec + "'");
}

struct Setup {
  Loaded in;
  AxisPartition part;
  RegionAssignment ra;
  MeshGraph mesh;
  std::unique_ptr<MgpModel> model;
  CovParams theta0;
  PriorSpec priors;
  McmcConfig mcmc;
  std::map<std::string, std::string> theta_resolved, prior_resolved;
  double level = 0.95;
};

std::unique_ptr<Setup> make_setup(Registry& reg) {
  auto s = std::make_unique<Setup>();
  s->in = ingest(reg);
  const Dataset& d = s->in.data;
  const int dim = static_cast<int>(d.coords.cols());
  int q = as_int(reg, "model.q");
  if (q == 0) q = d.q();
  if (q != d.q()) throw UsageError("model.q does not match the Z columns");

  // partition and reference set
  std::vector<int> intervals = as_ints(reg, "model.intervals");
  if (intervals.empty()) {
    const double per_axis = std::pow(std::max(d.n() / 32.0, 1.0), 1.0 / dim);
    intervals.assign(static_cast<std::size_t>(dim), std::max(1, static_cast<int>(std::lround(per_axis))));
    std::string text;
    for (int v : intervals) text += (text.empty() ? "" : ",") + std::to_string(v);
    reg.values["model.intervals"] = text;
  }
  if (static_cast<int>(intervals.size()) != dim) throw UsageError("model.intervals needs one entry per coordinate");
  for (int v : intervals)
    if (v < 1) throw UsageError("model.intervals must be >= 1");
  const std::string rule = get(reg, "model.rule");
  if (rule != "equal-width" && rule != "equal-count") throw UsageError("model.rule must be equal-width or equal-count");
  const std::string pol = get(reg, "model.policy");
  ReferencePolicy policy;
  if (pol == "observed") policy = ReferencePolicy::Observed;
  else if (pol == "lattice") policy = ReferencePolicy::Lattice;
  else if (pol == "cover") policy = ReferencePolicy::CoverObserved;
  else throw UsageError("model.policy must be observed, lattice or cover");
  try {
    s->part = build_partition(d.coords, intervals, rule == "equal-count" ? BreakRule::EqualCount : BreakRule::EqualWidth);
    s->ra = split_reference(d.coords, d.observed_any(), s->part, policy);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  std::vector<char> ne, ho;
  for (int j = 0; j < s->ra.M(); ++j) {
    ne.push_back(!s->ra.S[static_cast<std::size_t>(j)].empty());
    ho.push_back(!s->ra.U[static_cast<std::size_t>(j)].empty());
  }
  try {
    s->mesh = build_cubic_mesh(s->part.shape(), ne, ho);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  s->model = std::make_unique<MgpModel>(s->ra, s->part, s->mesh, q, as_bool(reg, "model.caching"));

  // covariance parameters and priors
  s->theta0 = default_theta(reg, dim, q);
  const auto names = parameter_names(s->theta0);
  std::vector<double> vals = get_parameters(s->theta0);
  const auto tmap = as_map(reg.theta, "theta");
  for (const auto& [k, v] : tmap) {
    const auto it = std::find(names.begin(), names.end(), k);
    if (it == names.end()) throw UsageError("unknown covariance parameter '" + k + "' for this family");
    vals[static_cast<std::size_t>(it - names.begin())] = parse_num(v, "theta " + k);
  }
  set_parameters(s->theta0, vals);
  try {
    s->theta0.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("initial covariance parameters: ") + e.what());
  }
  for (std::size_t i = 0; i < names.size(); ++i) s->theta_resolved[names[i]] = num(vals[i]);

  auto pmap = as_map(reg.prior, "prior");
  std::vector<ThetaPrior> tp;
  for (const auto& n : names) {
    const std::string spec = pmap.count(n) ? pmap[n] : default_prior(n);
    tp.push_back(parse_theta_prior(n, spec));
    s->prior_resolved[n] = spec;
    pmap.erase(n);
  }
  s->priors = PriorSpec::defaults(d.p(), d.l(), tp);
  const std::string tau = pmap.count("tau2") ? pmap["tau2"] : "ig:2:1";
  {
    const auto parts = split_list(tau, ':');
    if (parts.size() == 1 && parts[0] == "fixed") {
      s->priors.fix_tau = true;
    } else if (parts.size() == 3 && parts[0] == "ig") {
      s->priors.a_tau.setConstant(parse_num(parts[1], "prior tau2"));
      s->priors.b_tau.setConstant(parse_num(parts[2], "prior tau2"));
    } else {
      throw UsageError("prior tau2: expected ig:a:b or fixed");
    }
  }
  const std::string beta = pmap.count("beta") ? pmap["beta"] : "normal:0:100";
  {
    const auto parts = split_list(beta, ':');
    if (parts.size() == 1 && parts[0] == "flat") {
      s->priors.prec_beta.setZero();
    } else if (parts.size() == 3 && parts[0] == "normal") {
      const double var = parse_num(parts[2], "prior beta");
      if (!(var > 0)) throw UsageError("prior beta: variance must be positive");
      s->priors.mu_beta.setConstant(parse_num(parts[1], "prior beta"));
      s->priors.prec_beta = Eigen::MatrixXd::Identity(d.p(), d.p()) / var;
    } else {
      throw UsageError("prior beta: expected normal:mean:var or flat");
    }
  }
  s->prior_resolved["tau2"] = tau;
  s->prior_resolved["beta"] = beta;
  pmap.erase("tau2");
  pmap.erase("beta");
  if (!pmap.empty()) throw UsageError("prior for unknown parameter '" + pmap.begin()->first + "'");

  McmcConfig& c = s->mcmc;
  c.n_iter = as_int(reg, "mcmc.n_iter");
  c.n_burn = as_int(reg, "mcmc.n_burn");
  c.thin = as_int(reg, "mcmc.thin");
  const double seed = as_double(reg, "mcmc.seed");
  if (seed < 0 || seed != std::floor(seed)) throw UsageError("mcmc.seed must be a nonnegative integer");
  c.seed = static_cast<std::uint64_t>(seed);
  c.adapt = as_bool(reg, "mcmc.adapt");
  c.step.assign(names.size(), as_double(reg, "mcmc.step"));
  c.reservoir = as_int(reg, "mcmc.reservoir");
  c.store_w_draws = as_bool(reg, "mcmc.store_w_draws");
  c.w_budget_mb = as_double(reg, "mcmc.w_budget_mb");
  c.log_every = as_int(reg, "mcmc.log_every");
  c.checkpoint_every = as_int(reg, "mcmc.checkpoint_every");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  s->level = as_double(reg, "output.level");
  if (!(s->level > 0 && s->level < 1)) throw UsageError("output.level must be in (0, 1)");
  return s;
}

std::unique_ptr<Setup> setup_from_dir(const fs::path& dir, Registry& reg) {
  const fs::path cfg = dir / "config.ini";
  if (!fs::exists(cfg)) throw DataError("missing " + cfg.string() + "; run fit first");
  CLI::App inner;
  register_fit(&inner, reg);
  std::vector<std::string> args = config_args(cfg.string());
  std::reverse(args.begin(), args.end());
  inner.parse(args);
  auto s = make_setup(reg);
  return s;
}

// ---------------------------------------------------------------------------
// commands

int cmd_fit(Registry& reg) {
  set_threads(reg);
  const auto t0 = std::chrono::steady_clock::now();
  auto s = make_setup(reg);
  const fs::path dir = out_dir(reg);
  const Dataset& d = s->in.data;
  std::cerr << "n = " << d.n() << ", n_all = " << s->ra.n_all() << ", M = " << s->ra.M()
            << ", colors = " << s->mesh.n_colors << '\n';
  if (const std::string dag = get(reg, "output.dump_dag"); !dag.empty()) {
    std::ofstream os(dag);
    if (!os) throw DataError("cannot write " + dag);
    write_edge_list(os, s->mesh);
  }
  McmcConfig cfg = s->mcmc;
  if (cfg.checkpoint_every > 0) cfg.checkpoint_path = (dir / "checkpoint.bin").string();
  GibbsSampler sampler(d, *s->model, s->priors, s->theta0, cfg);
  const MomentSet& ms0 = sampler.moments();
  const ChainResult res = sampler.run();

  // trace
  write_table((dir / "trace.csv").string(), res.trace_names, res.trace);

  // w summaries per location and variable
  const int q = s->model->q();
  const auto& coords = s->ra.coords;
  const Eigen::Index nall = coords.rows();
  std::vector<std::string> header = s->in.coords;
  for (const char* h : {"var", "mean", "sd", "lower", "upper", "reference"}) header.emplace_back(h);
  Eigen::MatrixXd ws(nall * q, static_cast<Eigen::Index>(header.size()));
  std::vector<char> is_ref(static_cast<std::size_t>(nall), 0);
  for (const auto& S : s->ra.S)
    for (int i : S) is_ref[static_cast<std::size_t>(i)] = 1;
  const Eigen::VectorXd sd = res.w.sd();
  const Eigen::Index dim = coords.cols();
  for (Eigen::Index i = 0; i < nall; ++i)
    for (int c = 0; c < q; ++c) {
      const Eigen::Index row = i * q + c;
      const int item = static_cast<int>(row);
      ws.row(row).head(dim) = coords.row(i);
      ws(row, dim) = c + 1;
      ws(row, dim + 1) = res.w.mean()(item);
      ws(row, dim + 2) = sd(item);
      ws(row, dim + 3) = res.w.quantile(item, 0.5 * (1 - s->level));
      ws(row, dim + 4) = res.w.quantile(item, 0.5 * (1 + s->level));
      ws(row, dim + 5) = is_ref[static_cast<std::size_t>(i)];
    }
  write_table((dir / "w_summary.csv").string(), header, ws);
  save_chain(res, (dir / "chain.bin").string());

  const std::string text = config_text(reg, s->theta_resolved, s->prior_resolved, false);
  write_text(dir / "config.ini", text);
  const auto t1 = std::chrono::steady_clock::now();
  json m;
  m["command"] = "fit";
  m["seed"] = s->mcmc.seed;
  m["config_file"] = "config.ini";
  m["config_hash"] = sha256(config_text(reg, s->theta_resolved, s->prior_resolved, true));
  m["n"] = d.n();
  m["n_all"] = s->ra.n_all();
  m["regions"] = s->ra.M();
  m["colors"] = s->mesh.n_colors;
  m["cache"] = {{"blocks", ms0.stats.blocks},
                {"unique_blocks", ms0.stats.unique_blocks},
                {"parent_factors", ms0.stats.parent_factors},
                {"hit_rate", res.cache_hit_rate}};
  m["accept_rate"] = res.accept_rate;
  m["retained_draws"] = res.trace.rows();
  m["timings"] = {{"total_seconds", std::chrono::duration<double>(t1 - t0).count()},
                  {"sampler_seconds", res.seconds},
                  {"seconds_per_iteration", res.seconds_per_iter},
                  {"threads", omp_get_max_threads()}};
  m["files"] = {"trace.csv", "w_summary.csv", "chain.bin", "config.ini"};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  if (!cfg.checkpoint_path.empty()) fs::remove(cfg.checkpoint_path);
  std::cerr << "fit done: " << res.iterations << " iterations, " << num(res.seconds_per_iter).substr(0, 8)
            << " s/iteration, acceptance " << num(res.accept_rate).substr(0, 5) << '\n';
  return Ok;
}

int cmd_predict(const std::string& model_dir, const std::string& locations, double level,
                std::string out, std::uint64_t seed) {
  if (!(level > 0 && level < 1)) throw UsageError("level must be in (0, 1)");
  const fs::path dir = model_dir;
  Registry reg;
  auto s = setup_from_dir(dir, reg);
  const fs::path chain_file = dir / "chain.bin";
  if (!fs::exists(chain_file)) throw DataError("missing " + chain_file.string() + "; run fit first");
  const ChainResult chain = load_chain(chain_file.string());
  const int l = s->in.data.l();
  std::vector<std::string> header = s->in.coords;
  for (const char* h : {"var", "mean", "sd", "lower", "upper"}) header.emplace_back(h);
  const Eigen::Index dim = static_cast<Eigen::Index>(s->in.coords.size());
  Eigen::MatrixXd rows;
  PredictionResult pr;
  if (locations.empty()) {
    pr = summarize_tracked(s->in.data, chain, level);
    rows.resize(pr.mean.rows(), static_cast<Eigen::Index>(header.size()));
    for (Eigen::Index t = 0; t < pr.mean.rows(); ++t) {
      const auto [i, r] = chain.y_items[static_cast<std::size_t>(t)];
      rows.row(t).head(dim) = s->in.data.coords.row(i);
      rows(t, dim) = r + 1;
      rows(t, dim + 1) = pr.mean(t, 0);
      rows(t, dim + 2) = pr.sd(t, 0);
      rows(t, dim + 3) = pr.lower(t, 0);
      rows(t, dim + 4) = pr.upper(t, 0);
    }
  } else {
    if (chain.w_draws.rows() == 0)
      throw DataError("the fit kept no w draws; refit with mcmc.store_w_draws = true to predict at new sites");
    const Table t = read_table(locations);
    NewSites sites;
    sites.coords = columns(t, s->in.coords);
    require_finite(sites.coords, s->in.coords, locations);
    if (!s->in.x.empty()) sites.x = columns(t, s->in.x);
    if (!s->in.z.empty()) sites.z = columns(t, s->in.z);
    try {
      pr = predict_at(*s->model, sites, chain, s->theta0, l, level, seed);
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what());
    }
    const Eigen::Index ns = sites.coords.rows();
    rows.resize(ns * l, static_cast<Eigen::Index>(header.size()));
    for (Eigen::Index i = 0; i < ns; ++i)
      for (int r = 0; r < l; ++r) {
        const Eigen::Index row = i * l + r;
        rows.row(row).head(dim) = sites.coords.row(i);
        rows(row, dim) = r + 1;
        rows(row, dim + 1) = pr.mean(i, r);
        rows(row, dim + 2) = pr.sd(i, r);
        rows(row, dim + 3) = pr.lower(i, r);
        rows(row, dim + 4) = pr.upper(i, r);
      }
  }
  if (out.empty()) out = (dir / "predictions.csv").string();
  write_table(out, header, rows);

  // note the prediction settings next to the fit record
  const fs::path mf = dir / "manifest.json";
  json m;
  if (std::ifstream is(mf); is) m = json::parse(is, nullptr, false);
  if (m.is_discarded()) m = json::object();
  m["predict"] = {{"file", fs::path(out).filename().string()},
                  {"level", level},
                  {"draws", pr.draws},
                  {"locations", locations.empty() ? "fill-missing" : locations},
                  {"seed", seed}};
  write_text(mf, m.dump(2) + "\n");
  std::cerr << "wrote " << rows.rows() << " predictions to " << out << '\n';
  return Ok;
}

double exact_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(v.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

int cmd_report(const std::string& model_dir, const std::string& truth, double level, std::string out) {
  if (!(level > 0 && level < 1)) throw UsageError("level must be in (0, 1)");
  const fs::path dir = model_dir;
  const fs::path chain_file = dir / "chain.bin";
  if (!fs::exists(chain_file)) throw DataError("missing " + chain_file.string() + "; run fit first");
  const ChainResult chain = load_chain(chain_file.string());
  json m = json::object();
  if (std::ifstream is(dir / "manifest.json"); is) m = json::parse(is, nullptr, false);
  if (m.is_discarded()) m = json::object();

  std::ostringstream os;
  os << "retained_draws = " << chain.trace.rows() << '\n';
  if (m.contains("timings")) os << "seconds_per_iteration = " << num(m["timings"].value("seconds_per_iteration", std::numeric_limits<double>::quiet_NaN())) << '\n';
  if (m.contains("cache")) os << "cache_hit_rate = " << num(m["cache"].value("hit_rate", std::numeric_limits<double>::quiet_NaN())) << '\n';
  os << "accept_rate = " << num(chain.accept_rate) << '\n';
  os << "interval_level = " << num(level) << "\n\n";
  os << "parameter,mean,lower,upper,ess\n";
  for (Eigen::Index c = 0; c < chain.trace.cols(); ++c) {
    const Eigen::VectorXd col = chain.trace.col(c);
    std::vector<double> v(col.data(), col.data() + col.size());
    if (v.empty()) continue;
    const double ess = col.size() >= 100 ? effective_sample_size(col) : NAN;
    os << chain.trace_names[static_cast<std::size_t>(c)] << ',' << num(col.mean()) << ','
       << num(exact_quantile(v, 0.5 * (1 - level))) << ',' << num(exact_quantile(v, 0.5 * (1 + level))) << ','
       << (std::isnan(ess) ? "NA" : num(ess)) << '\n';
  }

  if (!truth.empty()) {
    Registry reg;
    CLI::App inner;
    register_fit(&inner, reg);
    std::vector<std::string> args = config_args((dir / "config.ini").string());
    std::reverse(args.begin(), args.end());
    inner.parse(args);
    const auto coord_names = split_list(get(reg, "data.coords"));
    const auto outcome_names = split_list(get(reg, "data.outcomes"));
    std::string pred_file = (dir / "predictions.csv").string();
    if (m.contains("predict")) pred_file = (dir / m["predict"].value("file", "predictions.csv")).string();
    if (!fs::exists(pred_file)) throw DataError("missing " + pred_file + "; run predict first");
    const Table pt = read_table(pred_file);
    const Table tt = read_table(truth);
    const Eigen::MatrixXd tc = columns(tt, coord_names);
    const Eigen::MatrixXd ty = columns(tt, outcome_names);
    std::map<std::vector<double>, Eigen::Index> index;
    for (Eigen::Index i = 0; i < tc.rows(); ++i) {
      const Eigen::RowVectorXd r = tc.row(i);
      index.emplace(std::vector<double>(r.data(), r.data() + r.size()), i);
    }
    const Eigen::MatrixXd pc = columns(pt, coord_names);
    const int vcol = pt.col("var");
    Eigen::VectorXd mean(pt.values.rows()), lo(pt.values.rows()), hi(pt.values.rows()), tv(pt.values.rows());
    std::vector<char> mask(static_cast<std::size_t>(pt.values.rows()), 0);
    double zero_abs = 0;
    long matched = 0;
    for (Eigen::Index i = 0; i < pt.values.rows(); ++i) {
      mean(i) = pt.values(i, pt.col("mean"));
      lo(i) = pt.values(i, pt.col("lower"));
      hi(i) = pt.values(i, pt.col("upper"));
      const Eigen::RowVectorXd r = pc.row(i);
      const auto it = index.find(std::vector<double>(r.data(), r.data() + r.size()));
      const int var = static_cast<int>(pt.values(i, vcol)) - 1;
      if (it == index.end() || var < 0 || var >= ty.cols() || !std::isfinite(ty(it->second, var))) {
        tv(i) = NAN;
        continue;
      }
      tv(i) = ty(it->second, var);
      mask[static_cast<std::size_t>(i)] = 1;
      zero_abs += std::abs(tv(i));
      ++matched;
    }
    const Metrics mt = metrics(mean, lo, hi, tv, mask);
    const double plevel = m.contains("predict") ? m["predict"].value("level", std::numeric_limits<double>::quiet_NaN()) : NAN;
    os << "\n[prediction]\n";
    os << "evaluated = " << mt.n << '\n';
    os << "prediction_level = " << num(plevel) << '\n';
    os << "mae = " << num(mt.mae) << '\n';
    os << "rmse = " << num(mt.rmse) << '\n';
    os << "coverage = " << num(mt.coverage) << '\n';
    os << "mae_predict_zero = " << num(zero_abs / static_cast<double>(matched)) << '\n';
  }
  if (out.empty()) out = (dir / "metrics.txt").string();
  write_text(out, os.str());
  std::cerr << "wrote " << out << '\n';
  return Ok;
}

void register_generate(CLI::App* app, Registry& reg) {
  add(app, reg, "synth.grid", "40,40,10", "grid size per axis; the last axis is time");
  add(app, reg, "synth.family", "gneiting", "gneiting | exponential");
  add(app, reg, "synth.lag", "unsquared", "squared | unsquared");
  add(app, reg, "synth.sigma2", "1", "process variance");
  add(app, reg, "synth.c", "5", "spatial decay");
  add(app, reg, "synth.a1", "50", "temporal range parameter");
  add(app, reg, "synth.beta1", "0.5", "space-time separability");
  add(app, reg, "synth.tau2", "0.05", "noise variance");
  add(app, reg, "synth.combo", "-1", "index 0..80 into the parameter sweep; overrides tau2, a1, beta1, c");
  add(app, reg, "synth.seed", "1", "random seed");
  add(app, reg, "synth.sampler", "auto", "auto | dense | mgp");
  add(app, reg, "synth.force_dense", "false", "allow dense sampling above the size limit");
  add(app, reg, "synth.dense_limit", "4000", "largest n sampled densely by default");
  add(app, reg, "synth.mgp_intervals", "", "intervals per axis for the MGP sampler");
  add(app, reg, "synth.clouds", "true", "apply cloud masks");
  add(app, reg, "synth.cloud_frames", "6", "frames with a cloud");
  add(app, reg, "synth.cloud_radius", "0.31622776601683794", "cloud radius");
  add(app, reg, "synth.cloud_floor", "0", "locations kept observed in a cloudy frame");
  add(app, reg, "synth.blackout_frames", "2", "frames masked except a few locations");
  add(app, reg, "synth.blackout_keep", "10", "locations kept in a blacked-out frame");
  add(app, reg, "output.dir,out", "", "output directory");
}

int cmd_generate(Registry& reg) {
  SynthSpec spec;
  spec.grid = as_ints(reg, "synth.grid");
  const std::string fam = get(reg, "synth.family");
  const std::string lag = get(reg, "synth.lag");
  if (lag != "squared" && lag != "unsquared") throw UsageError("synth.lag must be squared or unsquared");
  double tau2 = as_double(reg, "synth.tau2"), a1 = as_double(reg, "synth.a1"), beta1 = as_double(reg, "synth.beta1"),
         c = as_double(reg, "synth.c");
  if (const int combo = as_int(reg, "synth.combo"); combo >= 0) {
    const auto sweep = parameter_sweep();
    if (combo >= static_cast<int>(sweep.size())) throw UsageError("synth.combo must be in 0..80");
    const GridCombo& g = sweep[static_cast<std::size_t>(combo)];
    tau2 = g.tau2;
    a1 = g.a1;
    beta1 = g.beta1;
    c = g.c;
  }
  const double sigma2 = as_double(reg, "synth.sigma2");
  if (fam == "gneiting")
    spec.theta = CovParams::gneiting(sigma2, c, a1, beta1, lag == "squared" ? LagArgument::Squared : LagArgument::Unsquared);
  else if (fam == "exponential")
    spec.theta = CovParams::exponential(sigma2, c);
  else
    throw UsageError("synth.family must be gneiting or exponential");
  spec.tau2 = tau2;
  const double seed = as_double(reg, "synth.seed");
  if (seed < 0 || seed != std::floor(seed)) throw UsageError("synth.seed must be a nonnegative integer");
  spec.seed = static_cast<std::uint64_t>(seed);
  const std::string sampler = get(reg, "synth.sampler");
  if (sampler == "auto") spec.sampler = SynthSampler::Auto;
  else if (sampler == "dense") spec.sampler = SynthSampler::Dense;
  else if (sampler == "mgp") spec.sampler = SynthSampler::Mgp;
  else throw UsageError("synth.sampler must be auto, dense or mgp");
  spec.force_dense = as_bool(reg, "synth.force_dense");
  spec.dense_limit = as_int(reg, "synth.dense_limit");
  spec.mgp_intervals = as_ints(reg, "synth.mgp_intervals");
  spec.cloud_frames = as_int(reg, "synth.cloud_frames");
  spec.cloud_radius = as_double(reg, "synth.cloud_radius");
  spec.cloud_floor = as_int(reg, "synth.cloud_floor");
  spec.blackout_frames = as_int(reg, "synth.blackout_frames");
  spec.blackout_keep = as_int(reg, "synth.blackout_keep");
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path dir = out_dir(reg);
  SynthData d = generate(spec);
  if (as_bool(reg, "synth.clouds")) apply_clouds(d, spec);

  const int dim = static_cast<int>(d.coords.cols());
  const int q = static_cast<int>(d.y.cols());
  std::vector<std::string> ch;
  for (int a = 1; a <= dim; ++a) ch.push_back("coord" + std::to_string(a));
  std::vector<std::string> dh = ch, th = ch;
  for (int r = 1; r <= q; ++r) dh.push_back("y" + std::to_string(r));
  for (int r = 1; r <= q; ++r) th.push_back("w" + std::to_string(r));
  for (int r = 1; r <= q; ++r) th.push_back("y" + std::to_string(r));
  for (int r = 1; r <= q; ++r) th.push_back("observed" + std::to_string(r));
  Eigen::MatrixXd data(d.n(), dim + q), tr(d.n(), dim + 3 * q);
  data << d.coords, d.y;
  tr << d.coords, d.w, d.y, Eigen::MatrixXd::Zero(d.n(), q);
  long missing = 0;
  for (int i = 0; i < d.n(); ++i)
    for (int r = 0; r < q; ++r) {
      const bool obs = d.observed[static_cast<std::size_t>(i * q + r)];
      tr(i, dim + 2 * q + r) = obs;
      if (!obs) {
        data(i, dim + r) = NAN;
        ++missing;
      }
    }
  write_table((dir / "data.csv").string(), dh, data);
  write_table((dir / "truth.csv").string(), th, tr);
  const std::string text = config_text(reg, {}, {}, false);
  write_text(dir / "config.ini", text);
  json m;
  m["command"] = "generate";
  m["seed"] = spec.seed;
  m["config_file"] = "config.ini";
  m["config_hash"] = sha256(config_text(reg, {}, {}, true));
  m["n"] = d.n();
  m["missing"] = missing;
  m["parameters"] = {{"tau2", tau2}, {"a1", a1}, {"beta1", beta1}, {"c", c}, {"sigma2", sigma2}};
  m["files"] = {"data.csv", "truth.csv", "config.ini"};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  std::cerr << "generated " << d.n() << " locations, " << missing << " masked\n";
  return Ok;
}

void register_bench(CLI::App* app, Registry& reg) {
  add(app, reg, "bench.suite", "all", "caching | scaling | all");
  add(app, reg, "bench.grid", "24,24,8", "caching suite grid");
  add(app, reg, "bench.intervals", "6,6,4", "caching suite intervals");
  add(app, reg, "bench.iters", "100", "iterations per caching chain");
  add(app, reg, "bench.base", "32", "scaling suite: rows of the base grid");
  add(app, reg, "bench.block", "8", "scaling suite: block side");
  add(app, reg, "bench.doublings", "3", "scaling suite: number of doublings of n");
  add(app, reg, "bench.scale_iters", "20", "iterations per timing run");
  add(app, reg, "mcmc.threads,threads", "0", "worker threads");
  add(app, reg, "output.dir,out", "", "output directory");
}

int cmd_bench(Registry& reg) {
  set_threads(reg);
  const fs::path dir = out_dir(reg);
  const std::string suite = get(reg, "bench.suite");
  if (suite != "all" && suite != "caching" && suite != "scaling")
    throw UsageError("bench.suite must be caching, scaling or all");
  if (suite != "scaling") {
    const CachingBench b = bench_caching(as_ints(reg, "bench.grid"), as_ints(reg, "bench.intervals"),
                                         as_int(reg, "bench.iters"));
    write_table((dir / "bench_caching.csv").string(),
                {"n", "blocks", "unique_blocks", "parent_prototypes", "sec_cached", "sec_uncached", "ratio",
                 "max_trace_diff", "max_w_diff"},
                Eigen::RowVectorXd{{double(b.n), double(b.blocks), double(b.unique_blocks), double(b.parent_prototypes),
                                    b.sec_cached, b.sec_uncached, b.ratio(), b.max_trace_diff, b.max_w_diff}});
    std::cerr << "caching: uncached/cached time ratio " << num(b.ratio()).substr(0, 6) << '\n';
  }
  if (suite != "caching") {
    const auto pts = bench_scaling(as_int(reg, "bench.base"), as_int(reg, "bench.block"), as_int(reg, "bench.doublings"),
                                   as_int(reg, "bench.scale_iters"));
    Eigen::MatrixXd t(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i)
      t.row(static_cast<Eigen::Index>(i)) << pts[i].n, pts[i].M, pts[i].sec_per_iter;
    write_table((dir / "bench_scaling.csv").string(), {"n", "regions", "sec_per_iter"}, t);
    for (std::size_t i = 1; i < pts.size(); ++i)
      std::cerr << "scaling: t(" << pts[i].n << ")/t(" << pts[i - 1].n << ") = "
                << num(pts[i].sec_per_iter / pts[i - 1].sec_per_iter).substr(0, 6) << '\n';
  }
  return Ok;
}

}  // namespace

int run(const std::vector<std::string>& argv_in) {
  // splice config-file entries right after the subcommand so flags win
  std::vector<std::string> args;
  std::string config;
  for (std::size_t i = 0; i < argv_in.size(); ++i) {
    const std::string& a = argv_in[i];
    if (a == "--config" && i + 1 < argv_in.size()) {
      config = argv_in[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      config = a.substr(9);
    } else {
      args.push_back(a);
    }
  }

  CLI::App app{"Q-MGP: Bayesian spatiotemporal regression on cubic meshes"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  Registry fit_reg, gen_reg, bench_reg;
  auto* fit = app.add_subcommand("fit", "fit a model and write chain summaries");
  register_fit(fit, fit_reg);
  auto* gen = app.add_subcommand("generate", "write a synthetic space-time dataset");
  register_generate(gen, gen_reg);
  auto* bench = app.add_subcommand("bench", "timing suites for caching and scaling");
  register_bench(bench, bench_reg);

  std::string model_dir, locations, truth, out;
  double level = 0.95;
  std::uint64_t seed = 1;
  bool fill = false;
  auto* pred = app.add_subcommand("predict", "posterior predictive summaries");
  pred->add_option("--model", model_dir, "fit output directory")->required();
  pred->add_option("--locations", locations, "table of new sites (same coordinate columns as the data)");
  pred->add_flag("--fill-missing", fill, "predict the missing outcomes of the data (default)");
  pred->add_option("--level", level, "credible level")->default_val(0.95);
  pred->add_option("--seed", seed, "random seed for new-site draws")->default_val(1);
  pred->add_option("--out", out, "output file; default MODEL/predictions.csv");
  auto* rep = app.add_subcommand("report", "posterior summaries and prediction metrics");
  rep->add_option("--model", model_dir, "fit output directory")->required();
  rep->add_option("--truth", truth, "table with the true outcomes");
  rep->add_option("--level", level, "credible level of parameter intervals")->default_val(0.95);
  rep->add_option("--out", out, "output file; default MODEL/metrics.txt");

  try {
    if (!config.empty()) {
      if (args.size() < 2) throw UsageError("--config needs a subcommand");
      const auto extra = config_args(config);
      args.insert(args.begin() + 2, extra.begin(), extra.end());
    }
    std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(rev.begin(), rev.end());
    app.parse(rev);
    if (fill && !locations.empty()) throw UsageError("--fill-missing and --locations are exclusive");
    if (*fit) return cmd_fit(fit_reg);
    if (*gen) return cmd_generate(gen_reg);
    if (*bench) return cmd_bench(bench_reg);
    if (*pred) return cmd_predict(model_dir, locations, level, out, seed);
    if (*rep) return cmd_report(model_dir, truth, level, out);
    return Usage;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return Usage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return Usage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return Numerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return Data;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Data;
  }
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace qmgp::cli
