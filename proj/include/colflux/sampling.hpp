#pragma once

// Operating-region distributions and the discrete sample pools used in
// training: truncated multivariate normals discretised with Sobol points and
// Iman-Conover rank reordering, plus the measurement-noise pool.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "colflux/column_model.hpp"
#include "colflux/csv.hpp"
#include "colflux/errors.hpp"
#include "colflux/random.hpp"
#include "colflux/sobol.hpp"

namespace colflux {

struct TruncatedMvn {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  ///< sample covariance, ridge added if it was not positive definite or a coordinate was constant
  double truncation = 3.0;     ///< per-coordinate half width in standard deviations
  bool ridged = false;

  [[nodiscard]] std::size_t dimension() const { return static_cast<std::size_t>(mean.size()); }

  [[nodiscard]] double sd(std::size_t j) const {
    return std::sqrt(std::max(0.0, covariance(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j))));
  }

  [[nodiscard]] TruncatedNormal marginal(std::size_t j) const {
    const double s = sd(j);
    return TruncatedNormal::symmetric(mean(static_cast<Eigen::Index>(j)), s, truncation * s);
  }

  /// Correlation implied by the covariance; coordinates without spread are
  /// treated as uncorrelated.
  [[nodiscard]] Eigen::MatrixXd correlation() const {
    const Eigen::Index d = mean.size();
    Eigen::MatrixXd c = Eigen::MatrixXd::Identity(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (i == j) continue;
        const double si = sd(static_cast<std::size_t>(i)), sj = sd(static_cast<std::size_t>(j));
        if (si > 0.0 && sj > 0.0) c(i, j) = std::clamp(covariance(i, j) / (si * sj), -1.0, 1.0);
      }
    }
    return c;
  }
};

/// Sample mean and covariance of the rows of `data` (observations x dims).
inline TruncatedMvn fit_truncated_mvn(const Eigen::MatrixXd& data, double truncation = 3.0, double ridge = 1e-10) {
  const Eigen::Index n = data.rows(), d = data.cols();
  if (d == 0 || n <= d) throw DomainError("fit_truncated_mvn: need more observations than dimensions");
  TruncatedMvn m;
  m.truncation = truncation;
  m.mean = data.colwise().mean();
  const Eigen::MatrixXd centred = data.rowwise() - m.mean.transpose();
  m.covariance = (centred.transpose() * centred) / static_cast<double>(n - 1);
  Eigen::LLT<Eigen::MatrixXd> llt(m.covariance);
  if (llt.info() != Eigen::Success || m.covariance.diagonal().minCoeff() < ridge) {
    m.covariance.diagonal().array() += ridge;
    m.ridged = true;
  }
  return m;
}

/// Factor B with B B^T = C for a symmetric positive semi-definite C, via a
/// pivoted LDL^T so that singular targets (perfect dependence) are allowed.
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& C, double tol = 1e-10) {
  if (C.rows() != C.cols()) throw ShapeError("psd_factor: matrix is not square");
  if (!C.isApprox(C.transpose(), 1e-12)) throw DomainError("psd_factor: matrix is not symmetric");
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
  if (ldlt.info() != Eigen::Success) throw DomainError("psd_factor: factorisation failed");
  Eigen::VectorXd D = ldlt.vectorD();
  for (Eigen::Index i = 0; i < D.size(); ++i) {
    if (D(i) < -tol) throw DomainError("psd_factor: matrix is not positive semi-definite");
    D(i) = std::sqrt(std::max(0.0, D(i)));
  }
  const Eigen::MatrixXd L = ldlt.matrixL();
  Eigen::MatrixXd B = L * D.asDiagonal();
  return ldlt.transpositionsP().transpose() * B;
}

/// Van der Waerden scores Phi^-1(i / (n + 1)), i = 1..n.
inline std::vector<double> van_der_waerden_scores(std::size_t n) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = normal_quantile(static_cast<double>(i + 1) / static_cast<double>(n + 1));
  return s;
}

/// Ranks (0-based, ties broken by position) of a column.
inline std::vector<std::size_t> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<std::size_t> r(v.size());
  for (std::size_t k = 0; k < order.size(); ++k) r[order[k]] = k;
  return r;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ShapeError("spearman: need two equal-length samples");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n - 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = static_cast<double>(ra[i]) - mean, db = static_cast<double>(rb[i]) - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

/// Reorders each column of `samples` (n x d) so that the rank correlation
/// approximates `target`. Every output column is a permutation of its input.
inline Eigen::MatrixXd iman_conover(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& target, Rng& rng) {
  const Eigen::Index n = samples.rows(), d = samples.cols();
  if (target.rows() != d || target.cols() != d) throw ShapeError("iman_conover: target has wrong shape");
  if (n <= d) throw DomainError("iman_conover: need more samples than dimensions");
  const Eigen::MatrixXd P = psd_factor(target);

  const std::vector<double> scores = van_der_waerden_scores(static_cast<std::size_t>(n));
  Eigen::MatrixXd R(n, d);
  std::vector<double> col(scores);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (j > 0) shuffle(std::span<double>(col), rng);
    for (Eigen::Index i = 0; i < n; ++i) R(i, j) = col[static_cast<std::size_t>(i)];
  }
  // Remove the sample correlation of the scores before imposing the target.
  const Eigen::MatrixXd centred = R.rowwise() - R.colwise().mean();
  Eigen::MatrixXd E = centred.transpose() * centred / static_cast<double>(n - 1);
  const Eigen::VectorXd s = E.diagonal().cwiseSqrt().cwiseInverse();
  E = s.asDiagonal() * E * s.asDiagonal();
  const Eigen::LLT<Eigen::MatrixXd> llt(E);
  if (llt.info() != Eigen::Success) throw DomainError("iman_conover: score correlation is singular");
  const Eigen::MatrixXd Q = llt.matrixL();
  const Eigen::MatrixXd T = Q.triangularView<Eigen::Lower>().solve(R.transpose()).transpose() * P.transpose();

  Eigen::MatrixXd out(n, d);
  std::vector<double> sorted(static_cast<std::size_t>(n)), tcol(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      sorted[static_cast<std::size_t>(i)] = samples(i, j);
      tcol[static_cast<std::size_t>(i)] = T(i, j);
    }
    std::sort(sorted.begin(), sorted.end());
    const auto r = ranks(tcol);
    for (Eigen::Index i = 0; i < n; ++i) out(i, j) = sorted[r[static_cast<std::size_t>(i)]];
  }
  return out;
}

// --- pools -----------------------------------------------------------------

/// Closed-loop samples of the operating region: one row per logged time.
struct RegionData {
  std::vector<double> t;
  Eigen::MatrixXd temperatures;  ///< rows x stages
  Eigen::MatrixXd holdups;       ///< rows x stages
  std::vector<FeedConditions> feed;

  [[nodiscard]] std::size_t rows() const { return t.size(); }
};

struct InitialConditionPool {
  std::vector<ColumnState> states;
  std::vector<FeedConditions> feeds;
  std::uint64_t seed = 0;
  std::string source_digest;

  [[nodiscard]] std::size_t size() const { return states.size(); }
};

struct NoisePool {
  std::vector<std::vector<double>> eta;
  std::uint64_t seed = 0;
  bool zero = false;

  [[nodiscard]] std::size_t size() const { return eta.size(); }
};

struct PoolOptions {
  double exclude_before = 15.0;  ///< start-up transient left out of the fit [min]
  double truncation = 3.0;
  std::size_t max_resamples = 100;
};

namespace detail {

/// Sobol marginals mapped through each coordinate's truncated normal.
inline Eigen::MatrixXd sobol_marginals(const TruncatedMvn& m, const std::vector<double>& u, std::size_t n,
                                       std::size_t stride, std::size_t offset) {
  const std::size_t d = m.dimension();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) {
    const TruncatedNormal tn = m.marginal(j);
    for (std::size_t i = 0; i < n; ++i) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = tn.quantile(u[i * stride + offset + j]);
    }
  }
  return X;
}

}  // namespace detail

/// Initial states sampled from the operating region: temperatures and
/// holdups each from their own truncated normal with induced rank
/// correlation; every state carries the feed logged at a random region time.
inline InitialConditionPool build_initial_pool(const RegionData& region, std::size_t n, std::uint64_t seed,
                                               const ColumnParams& p, const PoolOptions& opt = {}) {
  const std::size_t N = p.stages();
  if (n == 0) throw ConfigError("build_initial_pool: pool size must be positive");
  if (static_cast<std::size_t>(region.temperatures.cols()) != N ||
      static_cast<std::size_t>(region.holdups.cols()) != N || region.feed.size() != region.rows()) {
    throw ShapeError("build_initial_pool: region data does not match the column");
  }
  std::vector<Eigen::Index> keep;
  for (std::size_t r = 0; r < region.rows(); ++r) {
    if (region.t[r] >= opt.exclude_before - 1e-9) keep.push_back(static_cast<Eigen::Index>(r));
  }
  if (keep.size() <= N) throw DomainError("build_initial_pool: too few region rows after the start-up window");
  const Eigen::MatrixXd T = region.temperatures(keep, Eigen::all);
  const Eigen::MatrixXd M = region.holdups(keep, Eigen::all);
  const TruncatedMvn tm = fit_truncated_mvn(T, opt.truncation);
  const TruncatedMvn mm = fit_truncated_mvn(M, opt.truncation);

  const std::vector<double> u = sobol_points(n, 2 * N);
  Rng rng_t(derive_seed(seed, 1)), rng_m(derive_seed(seed, 2)), rng_fix(derive_seed(seed, 3)),
      rng_feed(derive_seed(seed, 4));
  const Eigen::MatrixXd Ts = iman_conover(detail::sobol_marginals(tm, u, n, 2 * N, 0), tm.correlation(), rng_t);
  const Eigen::MatrixXd Ms = iman_conover(detail::sobol_marginals(mm, u, n, 2 * N, N), mm.correlation(), rng_m);

  InitialConditionPool pool;
  pool.seed = seed;
  pool.states.reserve(n);
  pool.feeds.reserve(n);
  const double span = p.boiling_span();
  for (std::size_t i = 0; i < n; ++i) {
    ColumnState s(N);
    for (std::size_t k = 0; k < N; ++k) {
      double Tk = Ts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      double x = (p.T_bH - Tk) / span;
      std::size_t tries = 0;
      while (!(x >= 0.0 && x <= 1.0)) {
        if (++tries > opt.max_resamples) throw ConvergenceError("build_initial_pool: composition resampling failed");
        Tk = tm.marginal(k).draw(rng_fix);
        x = (p.T_bH - Tk) / span;
      }
      double Mk = Ms(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      tries = 0;
      while (!(Mk >= kMinHoldup)) {
        if (++tries > opt.max_resamples) throw ConvergenceError("build_initial_pool: holdup resampling failed");
        Mk = mm.marginal(k).draw(rng_fix);
      }
      s.holdups()[k] = Mk;
      s.fractions()[k] = x;
    }
    pool.states.push_back(std::move(s));
    pool.feeds.push_back(region.feed[static_cast<std::size_t>(keep[uniform_index(rng_feed, keep.size())])]);
  }
  return pool;
}

/// Measurement-noise pool from Sobol marginals through each slot's truncated
/// normal; no correlation is induced. `zero` gives the all-zeros pool.
inline NoisePool build_noise_pool(const NoiseSpec& spec, const MeasurementLayout& lay, std::size_t n,
                                  std::uint64_t seed, bool zero = false) {
  if (n == 0) throw ConfigError("build_noise_pool: pool size must be positive");
  NoisePool pool;
  pool.seed = seed;
  pool.zero = zero;
  const std::size_t d = lay.size();
  if (zero) {
    pool.eta.assign(n, std::vector<double>(d, 0.0));
    return pool;
  }
  spec.validate();
  const std::vector<double> u = sobol_points(n, d);
  pool.eta.assign(n, std::vector<double>(d));
  for (std::size_t j = 0; j < d; ++j) {
    const TruncatedNormal tn = TruncatedNormal::symmetric(0.0, spec.sigma(lay, j), spec.bound(lay, j));
    for (std::size_t i = 0; i < n; ++i) pool.eta[i][j] = tn.quantile(u[i * d + j]);
  }
  return pool;
}

// --- CSV -------------------------------------------------------------------

inline void write_initial_pool(std::ostream& os, const InitialConditionPool& pool, std::size_t stages) {
  CsvWriter w(os);
  w.meta("kind", "initial_conditions");
  w.meta("seed", std::to_string(pool.seed));
  w.meta("source_digest", pool.source_digest);
  std::vector<std::string> cols;
  for (std::size_t k = 1; k <= stages; ++k) cols.push_back("M_" + std::to_string(k));
  for (std::size_t k = 1; k <= stages; ++k) cols.push_back("x_" + std::to_string(k));
  cols.insert(cols.end(), {"F", "zF", "qF"});
  w.header(cols);
  std::vector<double> row;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto z = pool.states[i].flat();
    row.assign(z.begin(), z.end());
    row.insert(row.end(), {pool.feeds[i].F, pool.feeds[i].zF, pool.feeds[i].qF});
    w.row(row);
  }
}

inline InitialConditionPool read_initial_pool(std::istream& is, std::size_t stages) {
  const CsvTable t = read_csv(is);
  if (t.meta_value("kind") != "initial_conditions") throw FormatError("not an initial-condition pool file");
  if (t.columns.size() != 2 * stages + 3) throw FormatError("initial-condition pool has wrong column count");
  InitialConditionPool pool;
  pool.seed = std::stoull(t.meta_value("seed", "0"));
  pool.source_digest = t.meta_value("source_digest");
  for (std::size_t r = 0; r < t.rows(); ++r) {
    ColumnState s(stages);
    for (std::size_t c = 0; c < 2 * stages; ++c) s.flat()[c] = t.number(r, c);
    pool.states.push_back(std::move(s));
    pool.feeds.push_back({t.number(r, 2 * stages), t.number(r, 2 * stages + 1), t.number(r, 2 * stages + 2)});
  }
  if (pool.size() == 0) throw FormatError("initial-condition pool is empty");
  return pool;
}

inline void write_noise_pool(std::ostream& os, const NoisePool& pool, const MeasurementLayout& lay) {
  CsvWriter w(os);
  w.meta("kind", "noise");
  w.meta("seed", std::to_string(pool.seed));
  w.meta("zero", pool.zero ? "true" : "false");
  std::vector<std::string> cols;
  for (std::size_t j = 0; j < lay.size(); ++j) cols.push_back("eta_" + lay.name(j));
  w.header(cols);
  for (const auto& e : pool.eta) w.row(e);
}

inline NoisePool read_noise_pool(std::istream& is, const MeasurementLayout& lay) {
  const CsvTable t = read_csv(is);
  if (t.meta_value("kind") != "noise") throw FormatError("not a noise pool file");
  if (t.columns.size() != lay.size()) throw FormatError("noise pool has wrong column count");
  NoisePool pool;
  pool.seed = std::stoull(t.meta_value("seed", "0"));
  pool.zero = t.meta_value("zero") == "true";
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::vector<double> e(lay.size());
    for (std::size_t c = 0; c < lay.size(); ++c) e[c] = t.number(r, c);
    pool.eta.push_back(std::move(e));
  }
  if (pool.size() == 0) throw FormatError("noise pool is empty");
  return pool;
}

}  // namespace colflux
