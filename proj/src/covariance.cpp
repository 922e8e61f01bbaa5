#include "qmgp/covariance.hpp"

#include <cmath>
#include <stdexcept>

namespace qmgp {

namespace {

double squared_norm(std::span<const double> h) {
  double s = 0.0;
  for (double v : h) s += v * v;
  return s;
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

bool has_time(const CovParams& p) {
  return p.time_axis && p.family != CovFamily::Exponential &&
         p.family != CovFamily::LatentDistance;
}

}  // namespace

int CovParams::q() const {
  switch (family) {
    case CovFamily::Exponential:
    case CovFamily::GneitingSpaceTime:
      return 1;
    case CovFamily::MultivariateNonseparable:
      if (psi2_direct) return 2;
      return delta.rows() > 0 ? static_cast<int>(delta.rows()) : 1;
    case CovFamily::LatentDistance:
      return static_cast<int>(latent.sigma1.size());
  }
  return 1;
}

void CovParams::validate() const {
  if (family == CovFamily::LatentDistance) {
    const auto nq = latent.sigma1.size();
    require(nq > 0, "latent-distance family needs at least one variable");
    require(latent.sigma2.size() == nq && latent.phi_var.size() == nq,
            "latent-distance per-variable vectors must have equal length");
    require(latent.v.rows() == nq && latent.v.cols() == nq, "latent distance matrix must be q x q");
    require((latent.sigma1.array() > 0).all() && (latent.sigma2.array() > 0).all() &&
                (latent.phi_var.array() > 0).all(),
            "latent-distance scales and decays must be positive");
    require(latent.alpha > 0 && latent.beta > 0 && latent.phi > 0,
            "latent-distance alpha, beta, phi must be positive");
    for (Eigen::Index i = 0; i < nq; ++i) {
      require(latent.v(i, i) == 0.0, "latent distance diagonal must be zero");
      for (Eigen::Index j = i + 1; j < nq; ++j) {
        require(latent.v(i, j) == latent.v(j, i), "latent distance matrix must be symmetric");
        require(latent.v(i, j) > 0, "latent distances must be positive off the diagonal");
      }
    }
    return;
  }
  require(std::isfinite(sigma2) && sigma2 > 0, "sigma2 must be positive");
  require(std::isfinite(c) && c > 0, "c must be positive");
  if (family == CovFamily::Exponential) return;
  require(a1 > 0, "a1 must be positive");
  require(beta1 >= 0 && beta1 <= 1, "beta1 must lie in [0, 1]");
  if (family == CovFamily::GneitingSpaceTime) return;
  require(a2 > 0, "a2 must be positive");
  require(beta2 >= 0 && beta2 <= 1, "beta2 must lie in [0, 1]");
  if (psi2_direct) {
    require(*psi2_direct > 0, "psi2 must be positive");
    return;
  }
  const auto nq = delta.rows();
  require(delta.cols() == nq, "delta must be square");
  for (Eigen::Index i = 0; i < nq; ++i) {
    require(delta(i, i) == 0.0, "delta diagonal must be zero");
    for (Eigen::Index j = i + 1; j < nq; ++j) {
      require(delta(i, j) == delta(j, i), "delta must be symmetric");
      require(delta(i, j) > 0, "delta must be positive off the diagonal");
    }
  }
}

CovParams CovParams::exponential(double sigma2, double c) {
  CovParams p;
  p.family = CovFamily::Exponential;
  p.sigma2 = sigma2;
  p.c = c;
  return p;
}

CovParams CovParams::gneiting(double sigma2, double c, double a1, double beta1, LagArgument lag) {
  CovParams p;
  p.family = CovFamily::GneitingSpaceTime;
  p.time_axis = true;
  p.lag = lag;
  p.sigma2 = sigma2;
  p.c = c;
  p.a1 = a1;
  p.beta1 = beta1;
  return p;
}

double psi(double x, double a, double beta) {
  if (!(x >= 0.0)) throw std::domain_error("psi: argument must be nonnegative");
  if (x == 0.0) return 1.0;
  return std::pow(a * std::sqrt(x) + 1.0, beta);
}

double psi2_value(int i, int j, const CovParams& p) {
  if (p.family != CovFamily::MultivariateNonseparable || i == j) return 1.0;
  if (p.psi2_direct) return *p.psi2_direct;
  const double d = p.delta(i, j);
  const double arg = p.psi2_arg == Psi2Argument::DeltaSquared ? d * d : d;
  return psi(arg, p.a2, p.beta2);
}

double cross_cov(std::span<const double> h, double u, int i, int j, const CovParams& p) {
  const int nq = p.q();
  if (i < 0 || j < 0 || i >= nq || j >= nq) throw std::out_of_range("cross_cov: variable index");
  const double hsq = squared_norm(h);
  if (p.family == CovFamily::Exponential) {
    return p.sigma2 * std::exp(-p.c * std::sqrt(hsq));
  }
  const double spatial_dim = static_cast<double>(h.size());
  const double psi2 = psi2_value(i, j, p);
  const double psi1 = psi(u * u / psi2, p.a1, p.beta1);
  const double scaled = p.lag == LagArgument::Squared ? hsq / psi1 : std::sqrt(hsq / psi1);
  return p.sigma2 / (std::pow(psi1, spatial_dim / 2.0) * std::sqrt(psi2)) * std::exp(-p.c * scaled);
}

double cross_cov_latent_distance(std::span<const double> h, int i, int j,
                                 const LatentDistParams& p) {
  const auto nq = p.sigma1.size();
  if (i < 0 || j < 0 || i >= nq || j >= nq)
    throw std::out_of_range("cross_cov_latent_distance: variable index");
  const double hn = std::sqrt(squared_norm(h));
  const double vij = p.v(i, j);
  const double scale = std::pow(1.0 + p.alpha * vij, p.beta);
  const double shared = std::exp(-p.phi * hn / std::sqrt(scale)) / scale;
  if (i == j) {
    return p.sigma1(i) * p.sigma1(i) * shared +
           p.sigma2(i) * p.sigma2(i) * std::exp(-p.phi_var(i) * hn);
  }
  return p.sigma1(i) * p.sigma1(j) * shared;
}

double cross_cov_at(std::span<const double> l1, std::span<const double> l2, int i, int j,
                    const CovParams& p) {
  const std::size_t dim = l1.size();
  double lag[16];
  std::vector<double> heap;
  double* diff = lag;
  if (dim > 16) {
    heap.resize(dim);
    diff = heap.data();
  }
  for (std::size_t k = 0; k < dim; ++k) diff[k] = l1[k] - l2[k];
  if (p.family == CovFamily::LatentDistance) {
    return cross_cov_latent_distance({diff, dim}, i, j, p.latent);
  }
  if (has_time(p) && dim >= 2) {
    return cross_cov({diff, dim - 1}, std::abs(diff[dim - 1]), i, j, p);
  }
  return cross_cov({diff, dim}, 0.0, i, j, p);
}

Eigen::MatrixXd cov_matrix(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols,
                           const CovParams& p) {
  if (rows.cols() != cols.cols()) throw std::invalid_argument("cov_matrix: dimension mismatch");
  const int nq = p.q();
  const Eigen::Index nr = rows.rows();
  const Eigen::Index nc = cols.rows();
  const Eigen::Index dim = rows.cols();
  Eigen::MatrixXd out(nr * nq, nc * nq);
  // Row-major copies so a location is a contiguous span.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = rows;
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cl = cols;
#pragma omp parallel for schedule(static) if (nr * nc > 40000)
  for (Eigen::Index a = 0; a < nr; ++a) {
    std::span<const double> la(r.data() + a * dim, static_cast<std::size_t>(dim));
    for (Eigen::Index b = 0; b < nc; ++b) {
      std::span<const double> lb(cl.data() + b * dim, static_cast<std::size_t>(dim));
      for (int i = 0; i < nq; ++i) {
        for (int j = 0; j < nq; ++j) {
          out(a * nq + i, b * nq + j) = cross_cov_at(la, lb, i, j, p);
        }
      }
    }
  }
  return out;
}

Eigen::MatrixXd cov_matrix(const Eigen::MatrixXd& locs, const CovParams& p) {
  Eigen::MatrixXd out = cov_matrix(locs, locs, p);
  // Exact symmetry regardless of floating-point ordering in the kernel.
  out = (0.5 * (out + out.transpose())).eval();
  return out;
}

std::vector<std::string> parameter_names(const CovParams& p) {
  std::vector<std::string> names;
  switch (p.family) {
    case CovFamily::Exponential:
      names = {"sigma2", "c"};
      break;
    case CovFamily::GneitingSpaceTime:
      names = {"sigma2", "c", "a1", "beta1"};
      break;
    case CovFamily::MultivariateNonseparable: {
      names = {"sigma2", "c"};
      if (p.time_axis) {
        names.push_back("a1");
        names.push_back("beta1");
      }
      if (p.psi2_direct) {
        names.push_back("psi2");
        break;
      }
      names.push_back("a2");
      names.push_back("beta2");
      const int nq = p.q();
      for (int i = 0; i < nq; ++i)
        for (int j = i + 1; j < nq; ++j)
          names.push_back("delta_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
      break;
    }
    case CovFamily::LatentDistance: {
      const int nq = p.q();
      for (int r = 1; r <= nq; ++r) names.push_back("sigma1_" + std::to_string(r));
      for (int r = 1; r <= nq; ++r) names.push_back("sigma2_" + std::to_string(r));
      for (int r = 1; r <= nq; ++r) names.push_back("phi_" + std::to_string(r));
      names.push_back("alpha");
      names.push_back("beta");
      names.push_back("phi");
      for (int i = 0; i < nq; ++i)
        for (int j = i + 1; j < nq; ++j)
          names.push_back("v_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
      break;
    }
  }
  return names;
}

std::vector<double> get_parameters(const CovParams& p) {
  std::vector<double> v;
  switch (p.family) {
    case CovFamily::Exponential:
      v = {p.sigma2, p.c};
      break;
    case CovFamily::GneitingSpaceTime:
      v = {p.sigma2, p.c, p.a1, p.beta1};
      break;
    case CovFamily::MultivariateNonseparable: {
      v = {p.sigma2, p.c};
      if (p.time_axis) {
        v.push_back(p.a1);
        v.push_back(p.beta1);
      }
      if (p.psi2_direct) {
        v.push_back(*p.psi2_direct);
        break;
      }
      v.push_back(p.a2);
      v.push_back(p.beta2);
      const int nq = p.q();
      for (int i = 0; i < nq; ++i)
        for (int j = i + 1; j < nq; ++j) v.push_back(p.delta(i, j));
      break;
    }
    case CovFamily::LatentDistance: {
      const auto& l = p.latent;
      const int nq = p.q();
      for (int r = 0; r < nq; ++r) v.push_back(l.sigma1(r));
      for (int r = 0; r < nq; ++r) v.push_back(l.sigma2(r));
      for (int r = 0; r < nq; ++r) v.push_back(l.phi_var(r));
      v.push_back(l.alpha);
      v.push_back(l.beta);
      v.push_back(l.phi);
      for (int i = 0; i < nq; ++i)
        for (int j = i + 1; j < nq; ++j) v.push_back(l.v(i, j));
      break;
    }
  }
  return v;
}

void set_parameters(CovParams& p, std::span<const double> values) {
  if (values.size() != parameter_names(p).size())
    throw std::invalid_argument("set_parameters: wrong number of values");
  std::size_t k = 0;
  auto next = [&] { return values[k++]; };
  switch (p.family) {
    case CovFamily::Exponential:
      p.sigma2 = next();
      p.c = next();
      break;
    case CovFamily::GneitingSpaceTime:
      p.sigma2 = next();
      p.c = next();
      p.a1 = next();
      p.beta1 = next();
      break;
    case CovFamily::MultivariateNonseparable: {
      p.sigma2 = next();
      p.c = next();
      if (p.time_axis) {
        p.a1 = next();
        p.beta1 = next();
      }
      if (p.psi2_direct) {
        p.psi2_direct = next();
        break;
      }
      p.a2 = next();
      p.beta2 = next();
      const int nq = p.q();
      for (int i = 0; i < nq; ++i)
        for (int j = i + 1; j < nq; ++j) p.delta(i, j) = p.delta(j, i) = next();
      break;
    }
    case CovFamily::LatentDistance: {
      auto& l = p.latent;
      const int nq = p.q();
      for (int r = 0; r < nq; ++r) l.sigma1(r) = next();
      for (int r = 0; r < nq; ++r) l.sigma2(r) = next();
      for (int r = 0; r < nq; ++r) l.phi_var(r) = next();
      l.alpha = next();
      l.beta = next();
      l.phi = next();
      for (int i = 0; i < nq; ++i)
        for (int j = i + 1; j < nq; ++j) l.v(i, j) = l.v(j, i) = next();
      break;
    }
  }
}

const char* family_name(CovFamily f) {
  switch (f) {
    case CovFamily::Exponential: return "exponential";
    case CovFamily::GneitingSpaceTime: return "gneiting";
    case CovFamily::MultivariateNonseparable: return "multivariate";
    case CovFamily::LatentDistance: return "latent-distance";
  }
  return "unknown";
}

CovFamily parse_family(const std::string& name) {
  if (name == "exponential") return CovFamily::Exponential;
  if (name == "gneiting") return CovFamily::GneitingSpaceTime;
  if (name == "multivariate") return CovFamily::MultivariateNonseparable;
  if (name == "latent-distance") return CovFamily::LatentDistance;
  throw std::invalid_argument("unknown covariance family: " + name);
}

}  // namespace qmgp
