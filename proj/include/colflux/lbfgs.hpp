#pragma once

// Limited-memory BFGS with Armijo backtracking for smooth unconstrained
// problems. The objective callback fills the gradient and returns the value.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace colflux {

struct LbfgsOptions {
  std::size_t memory = 10;
  std::size_t max_iterations = 100;
  double gradient_tolerance = 1e-8;  ///< on the infinity norm
  double armijo = 1e-4;
  double backtrack = 0.5;
  std::size_t max_line_search = 30;
};

enum class LbfgsStatus { converged, max_iterations, line_search_failed, non_finite };

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  double gradient_norm = 0.0;  ///< infinity norm at x
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  LbfgsStatus status = LbfgsStatus::max_iterations;
  std::vector<double> history;  ///< objective after each accepted iteration, starting with f(x0)

  [[nodiscard]] bool converged() const { return status == LbfgsStatus::converged; }
};

using LbfgsObjective = std::function<double(std::span<const double> x, std::span<double> grad)>;

inline double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double a : v) m = std::max(m, std::abs(a));
  return m;
}

/// Minimises f from x0. Accepted iterates never increase the objective; the
/// returned point is the best one seen.
inline LbfgsResult lbfgs_minimize(const LbfgsObjective& f, std::span<const double> x0, const LbfgsOptions& opt = {}) {
  const std::size_t n = x0.size();
  LbfgsResult r;
  r.x.assign(x0.begin(), x0.end());
  std::vector<double> g(n), x_new(n), g_new(n), d(n), alpha(opt.memory);
  std::deque<std::vector<double>> S, Y;
  std::deque<double> rho;

  r.value = f(r.x, g);
  r.evaluations = 1;
  r.history.push_back(r.value);
  if (!std::isfinite(r.value)) {
    r.status = LbfgsStatus::non_finite;
    return r;
  }
  r.gradient_norm = inf_norm(g);

  while (true) {
    if (r.gradient_norm < opt.gradient_tolerance) {
      r.status = LbfgsStatus::converged;
      return r;
    }
    if (r.iterations >= opt.max_iterations) {
      r.status = LbfgsStatus::max_iterations;
      return r;
    }

    // Two-loop recursion for d = -H g.
    std::copy(g.begin(), g.end(), d.begin());
    for (std::size_t i = S.size(); i-- > 0;) {
      alpha[i] = rho[i] * std::inner_product(S[i].begin(), S[i].end(), d.begin(), 0.0);
      for (std::size_t j = 0; j < n; ++j) d[j] -= alpha[i] * Y[i][j];
    }
    double gamma = 1.0;
    if (!S.empty()) {
      const auto& s = S.back();
      const auto& y = Y.back();
      gamma = std::inner_product(s.begin(), s.end(), y.begin(), 0.0) /
              std::inner_product(y.begin(), y.end(), y.begin(), 0.0);
    } else {
      // First step: unit move in the largest coordinate.
      gamma = 1.0 / std::max(r.gradient_norm, 1e-300);
    }
    for (double& v : d) v *= gamma;
    for (std::size_t i = 0; i < S.size(); ++i) {
      const double beta = rho[i] * std::inner_product(Y[i].begin(), Y[i].end(), d.begin(), 0.0);
      for (std::size_t j = 0; j < n; ++j) d[j] += S[i][j] * (alpha[i] - beta);
    }
    for (double& v : d) v = -v;

    double slope = std::inner_product(g.begin(), g.end(), d.begin(), 0.0);
    if (!(slope < 0.0)) {
      // Curvature information went bad; restart along steepest descent.
      S.clear();
      Y.clear();
      rho.clear();
      const double scale = 1.0 / std::max(r.gradient_norm, 1e-300);
      for (std::size_t j = 0; j < n; ++j) d[j] = -scale * g[j];
      slope = std::inner_product(g.begin(), g.end(), d.begin(), 0.0);
    }

    double step = 1.0;
    bool accepted = false;
    double f_new = 0.0;
    for (std::size_t ls = 0; ls < opt.max_line_search; ++ls) {
      for (std::size_t j = 0; j < n; ++j) x_new[j] = r.x[j] + step * d[j];
      f_new = f(x_new, g_new);
      ++r.evaluations;
      if (std::isfinite(f_new) && f_new <= r.value + opt.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= opt.backtrack;
    }
    if (!accepted) {
      r.status = LbfgsStatus::line_search_failed;
      return r;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = x_new[j] - r.x[j];
      y[j] = g_new[j] - g[j];
    }
    const double sy = std::inner_product(s.begin(), s.end(), y.begin(), 0.0);
    if (sy > 1e-12 * std::sqrt(std::inner_product(s.begin(), s.end(), s.begin(), 0.0) *
                               std::inner_product(y.begin(), y.end(), y.begin(), 0.0))) {
      if (S.size() == opt.memory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
      S.push_back(std::move(s));
      Y.push_back(std::move(y));
      rho.push_back(1.0 / sy);
    }
    r.x.swap(x_new);
    g.swap(g_new);
    r.value = f_new;
    r.gradient_norm = inf_norm(g);
    ++r.iterations;
    r.history.push_back(r.value);
  }
}

}  // namespace colflux
