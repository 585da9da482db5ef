// Copyright 2026 The RGD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Exact worst-case expectations over a finite support:
//
//   sup { E_q[l] : D(q || p) <= rho }
//
// for the KL, chi-squared and reverse-KL divergences. Each solver walks the
// one-parameter family that the optimality conditions single out and matches
// the divergence budget by bisection:
//
//   KL          q_i ∝ p_i exp(l_i / beta)
//   chi^2       q_i = p_i max(0, 1 + s (l_i - eta))     (eta normalizes)
//   reverse KL  q_i ∝ p_i / (tau - l_i),  tau > max l
//
// kl_dro_dual solves the one-dimensional convex dual independently, and
// simplex_bruteforce searches the simplex directly; both serve as oracles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "rgd/errors.hpp"
#include "rgd/linalg.hpp"
#include "rgd/reweight.hpp"

namespace rgd::dro {

class DiscreteDistribution {
 public:
  static constexpr double kSumTolerance = 1e-12;

  DiscreteDistribution() = default;
  explicit DiscreteDistribution(std::vector<double> probs)
      : probs_(std::move(probs)) {
    if (probs_.empty()) throw InputError("DiscreteDistribution: empty");
    double s = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw InputError("DiscreteDistribution: negative or non-finite mass");
      s += p;
    }
    if (std::abs(s - 1.0) > kSumTolerance)
      throw InputError("DiscreteDistribution: masses sum to " +
                       std::to_string(s));
  }

  static DiscreteDistribution uniform(std::size_t n) {
    return DiscreteDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  /// Rescales non-negative masses to sum to one.
  static DiscreteDistribution normalized(std::vector<double> mass) {
    const double s = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (!(s > 0.0)) throw InputError("DiscreteDistribution: zero total mass");
    for (double& m : mass) m /= s;
    return DiscreteDistribution(std::move(mass));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const noexcept { return probs_; }

  double expectation(const LossVector& l) const {
    double s = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) s += probs_[i] * l[i];
    return s;
  }

 private:
  std::vector<double> probs_;
};

struct DroInstance {
  LossVector losses;
  DiscreteDistribution base;
  double rho = 0.0;
  Divergence divergence = Divergence::KL;

  void validate() const {
    if (losses.size() != base.size())
      throw InputError("DroInstance: losses and base have different lengths");
    if (!(rho >= 0.0) || !std::isfinite(rho))
      throw InputError("DroInstance: rho must be finite and >= 0");
    if (divergence == Divergence::None)
      throw InputError("DroInstance: divergence must be kl, chi2 or revkl");
  }
};

struct DroSolution {
  double value = 0.0;
  DiscreteDistribution worst_dist;
  // KL: beta (inf at rho = 0, 0 at the point-mass boundary).
  // chi^2: slope s. Reverse KL: pole tau.
  double dual_param = 0.0;
  // The budget admits the point mass on the maximal losses; the tilted
  // family degenerates there and the solver returns that mass directly.
  bool boundary = false;
};

/// D_f(q || p) = sum_i p_i f(q_i / p_i) straight from the generator f.
/// Mass of q outside the support of p makes the divergence infinite.
inline double f_divergence(Divergence kind, const std::vector<double>& q,
                           const std::vector<double>& p) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (p[i] == 0.0) {
      if (q[i] > 0.0) return inf;
      continue;
    }
    const double x = q[i] / p[i];
    switch (kind) {
      case Divergence::KL:  // f(x) = x log x, f(0) = 0
        if (x > 0.0) d += p[i] * x * std::log(x);
        break;
      case Divergence::Chi2:  // f(x) = (x - 1)^2
        d += p[i] * (x - 1.0) * (x - 1.0);
        break;
      case Divergence::ReverseKL:  // f(x) = -log x
        if (x == 0.0) return inf;
        d -= p[i] * std::log(x);
        break;
      case Divergence::None:
        throw InputError("f_divergence: no divergence selected");
    }
  }
  return d;
}

namespace detail {

struct SupportStats {
  double expected = 0.0;
  double max_loss = -std::numeric_limits<double>::infinity();
  double min_loss = std::numeric_limits<double>::infinity();
  double max_mass = 0.0;  // base mass on the maximal losses
};

inline SupportStats support_stats(const DroInstance& in) {
  SupportStats s;
  const auto& p = in.base.probs();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    s.expected += p[i] * in.losses[i];
    s.max_loss = std::max(s.max_loss, in.losses[i]);
    s.min_loss = std::min(s.min_loss, in.losses[i]);
  }
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0 && in.losses[i] == s.max_loss) s.max_mass += p[i];
  return s;
}

inline DroSolution base_solution(const DroInstance& in, double dual) {
  return {in.base.expectation(in.losses), in.base, dual, false};
}

inline DroSolution point_mass_solution(const DroInstance& in,
                                       const SupportStats& s, double dual) {
  const auto& p = in.base.probs();
  std::vector<double> q(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0 && in.losses[i] == s.max_loss) q[i] = p[i] / s.max_mass;
  DiscreteDistribution worst = DiscreteDistribution::normalized(std::move(q));
  return {s.max_loss, std::move(worst), dual, true};
}

/// Bisects an increasing function f on [lo, hi] for f(x) = target.
template <class F>
double bisect_increasing(F&& f, double lo, double hi, double target,
                         double tolerance) {
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double v = f(mid);
    if (std::abs(v - target) <= tolerance * 1e-3) return mid;
    (v < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Exponentially tilted distribution q_i ∝ p_i exp(eta l_i); returns
/// (q, KL(q || p), E_q[l]).
struct Tilt {
  std::vector<double> q;
  double kl = 0.0;
  double mean = 0.0;
};

inline Tilt kl_tilt(const DroInstance& in, double max_loss, double eta) {
  const auto& p = in.base.probs();
  const std::size_t n = p.size();
  Tilt t;
  t.q.assign(n, 0.0);
  std::vector<double> logw;
  logw.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] > 0.0) logw.push_back(std::log(p[i]) + eta * (in.losses[i] - max_loss));
  const double lse = log_sum_exp(logw);
  double shifted_mean = 0.0;
  for (std::size_t i = 0, k = 0; i < n; ++i) {
    if (p[i] == 0.0) continue;
    t.q[i] = std::exp(logw[k++] - lse);
    shifted_mean += t.q[i] * (in.losses[i] - max_loss);
  }
  // KL(q || p) = eta E_q[l - lmax] - log E_p[exp(eta (l - lmax))].
  t.kl = std::max(0.0, eta * shifted_mean - lse);
  t.mean = max_loss + shifted_mean;
  return t;
}

}  // namespace detail

/// Bisection over the exponential-tilting family until KL = rho (1e-10).
inline DroSolution kl_dro_primal(const DroInstance& in) {
  in.validate();
  if (in.divergence != Divergence::KL)
    throw InputError("kl_dro_primal: instance divergence is not KL");
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto s = detail::support_stats(in);
  if (in.rho == 0.0 || s.max_loss == s.min_loss)
    return detail::base_solution(in, inf);
  const double kl_point = -std::log(s.max_mass);
  if (in.rho >= kl_point) return detail::point_mass_solution(in, s, 0.0);

  auto kl_at = [&](double eta) { return detail::kl_tilt(in, s.max_loss, eta).kl; };
  double hi = 1.0 / (s.max_loss - s.min_loss);
  int guard = 0;
  while (kl_at(hi) < in.rho) {
    hi *= 2.0;
    if (++guard > 2000)
      throw InternalError("kl_dro_primal: failed to bracket the tilt");
  }
  const double eta = detail::bisect_increasing(kl_at, 0.0, hi, in.rho, 1e-10);
  auto t = detail::kl_tilt(in, s.max_loss, eta);
  if (std::abs(t.kl - in.rho) > 1e-10)
    throw InternalError("kl_dro_primal: bisection missed the budget by " +
                        std::to_string(t.kl - in.rho));
  return {t.mean, DiscreteDistribution::normalized(std::move(t.q)), 1.0 / eta,
          false};
}

/// The dual objective beta log E_p[exp(l / beta)] + beta rho at one beta.
inline double kl_dual_objective(const DroInstance& in, double beta) {
  const auto& p = in.base.probs();
  const double mu = in.base.expectation(in.losses);
  double ymax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) ymax = std::max(ymax, (in.losses[i] - mu) / beta);
  double log_mgf;
  if (ymax <= 1.0) {
    // Centered form: log1p(sum p (e^y - 1)) keeps precision for large beta.
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] > 0.0) acc += p[i] * std::expm1((in.losses[i] - mu) / beta);
    log_mgf = std::log1p(acc);
  } else {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] > 0.0) acc += p[i] * std::exp((in.losses[i] - mu) / beta - ymax);
    log_mgf = ymax + std::log(acc);
  }
  return mu + beta * log_mgf + beta * in.rho;
}

/// inf_{beta > 0} of the dual objective by golden-section search in
/// log(beta). Returns the beta -> inf limit E_p[l] when rho = 0.
inline double kl_dro_dual(const DroInstance& in) {
  in.validate();
  if (in.divergence != Divergence::KL)
    throw InputError("kl_dro_dual: instance divergence is not KL");
  const auto s = detail::support_stats(in);
  if (in.rho == 0.0 || s.max_loss == s.min_loss) return s.expected;

  const double spread = s.max_loss - s.min_loss;
  auto phi = [&](double u) { return kl_dual_objective(in, spread * std::exp(u)); };
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = std::log(1e-14), b = std::log(1e14);
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  double fc = phi(c), fd = phi(d);
  double best = std::min(fc, fd);
  for (int it = 0; it < 300 && b - a > 1e-12; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = phi(c);
      best = std::min(best, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = phi(d);
      best = std::min(best, fd);
    }
  }
  return best;
}

namespace detail {

/// Chi-squared family at slope s: q_i = p_i max(0, 1 + s (l_i - eta)).
inline std::vector<double> chi2_member(const DroInstance& in, double slope) {
  const auto& p = in.base.probs();
  const std::size_t n = p.size();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] > 0.0) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return in.losses[a] > in.losses[b];
  });
  // Grow the active set from the top until normalization is consistent.
  double mass = 0.0, weighted = 0.0, eta = 0.0;
  std::size_t k = 0;
  for (; k < order.size(); ++k) {
    mass += p[order[k]];
    weighted += p[order[k]] * in.losses[order[k]];
    eta = (mass + slope * weighted - 1.0) / (slope * mass);
    const bool next_inactive =
        k + 1 == order.size() ||
        1.0 + slope * (in.losses[order[k + 1]] - eta) <= 0.0;
    if (next_inactive) break;
  }
  std::vector<double> q(n, 0.0);
  for (std::size_t j = 0; j <= k && j < order.size(); ++j) {
    const std::size_t i = order[j];
    q[i] = p[i] * std::max(0.0, 1.0 + slope * (in.losses[i] - eta));
  }
  return q;
}

inline double expectation(const std::vector<double>& q, const LossVector& l) {
  double v = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) v += q[i] * l[i];
  return v;
}

/// Reverse-KL family at pole tau = max_loss + gap: q_i ∝ p_i / (tau - l_i).
inline std::vector<double> revkl_member(const DroInstance& in, double max_loss,
                                        double gap) {
  const auto& p = in.base.probs();
  std::vector<double> logw;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0)
      logw.push_back(std::log(p[i]) - std::log(gap + (max_loss - in.losses[i])));
  const double lse = log_sum_exp(logw);
  std::vector<double> q(p.size(), 0.0);
  for (std::size_t i = 0, k = 0; i < p.size(); ++i)
    if (p[i] > 0.0) q[i] = std::exp(logw[k++] - lse);
  return q;
}

}  // namespace detail

inline DroSolution chi2_dro_value(const DroInstance& in) {
  in.validate();
  if (in.divergence != Divergence::Chi2)
    throw InputError("chi2_dro_value: instance divergence is not chi2");
  for (double l : in.losses)
    if (l < 0.0) throw InputError("chi2_dro_value: losses must be >= 0");
  const auto s = detail::support_stats(in);
  if (in.rho == 0.0 || s.max_loss == s.min_loss)
    return detail::base_solution(in, 0.0);
  // As the slope grows the family collapses onto the maximal losses, where
  // the divergence is 1/P_max - 1.
  const double d_point = 1.0 / s.max_mass - 1.0;
  if (in.rho >= d_point)
    return detail::point_mass_solution(in, s, std::numeric_limits<double>::infinity());

  auto div_at = [&](double slope) {
    return f_divergence(Divergence::Chi2, detail::chi2_member(in, slope),
                        in.base.probs());
  };
  double hi = 1.0 / (s.max_loss - s.min_loss);
  int guard = 0;
  while (div_at(hi) < in.rho) {
    hi *= 2.0;
    if (++guard > 2000)
      throw InternalError("chi2_dro_value: failed to bracket the slope");
  }
  const double slope = detail::bisect_increasing(div_at, 0.0, hi, in.rho, 1e-12);
  auto q = detail::chi2_member(in, slope);
  const double value = detail::expectation(q, in.losses);
  return {value, DiscreteDistribution::normalized(std::move(q)), slope, false};
}

inline DroSolution revkl_dro_value(const DroInstance& in) {
  in.validate();
  if (in.divergence != Divergence::ReverseKL)
    throw InputError("revkl_dro_value: instance divergence is not revkl");
  const auto s = detail::support_stats(in);
  if (in.rho == 0.0 || s.max_loss == s.min_loss)
    return detail::base_solution(in, std::numeric_limits<double>::infinity());

  // Divergence decreases in the gap between the pole and the largest loss;
  // bisect in log(gap), where it is increasing in -log(gap).
  auto div_at = [&](double neg_log_gap) {
    return f_divergence(Divergence::ReverseKL,
                        detail::revkl_member(in, s.max_loss, std::exp(-neg_log_gap)),
                        in.base.probs());
  };
  const double spread = s.max_loss - s.min_loss;
  double lo = -std::log(spread), hi = lo;
  int guard = 0;
  while (div_at(lo) > in.rho) {
    lo -= 1.0;
    if (++guard > 2000)
      throw InternalError("revkl_dro_value: failed to bracket the pole");
  }
  guard = 0;
  while (div_at(hi) < in.rho) {
    hi += 1.0;
    if (++guard > 700) {
      // Budget beyond what a representable pole reaches: return the most
      // extreme member as a certificate of the boundary.
      auto q = detail::revkl_member(in, s.max_loss, std::exp(-hi));
      const double v = detail::expectation(q, in.losses);
      return {v, DiscreteDistribution::normalized(std::move(q)),
              s.max_loss + std::exp(-hi), true};
    }
  }
  const double x = detail::bisect_increasing(div_at, lo, hi, in.rho, 1e-12);
  auto q = detail::revkl_member(in, s.max_loss, std::exp(-x));
  const double value = detail::expectation(q, in.losses);
  return {value, DiscreteDistribution::normalized(std::move(q)),
          s.max_loss + std::exp(-x), false};
}

/// Dispatches on the instance's divergence.
inline DroSolution solve(const DroInstance& in) {
  switch (in.divergence) {
    case Divergence::KL: return kl_dro_primal(in);
    case Divergence::Chi2: return chi2_dro_value(in);
    case Divergence::ReverseKL: return revkl_dro_value(in);
    case Divergence::None: break;
  }
  throw InputError("solve: no divergence selected");
}

struct BruteForceResult {
  double value = -std::numeric_limits<double>::infinity();
  std::vector<double> argmax;
};

/// Maximizes E_q[l] over the simplex grid {k / (grid_points - 1)} subject to
/// D(q || p) <= rho, with D evaluated by f_divergence. The base distribution
/// itself is always a candidate, so rho = 0 is well posed off the grid.
inline BruteForceResult simplex_bruteforce(const DroInstance& in,
                                           std::size_t grid_points) {
  in.validate();
  const std::size_t n = in.losses.size();
  if (n > 4) throw InputError("simplex_bruteforce: supports n <= 4 only");
  if (grid_points < 2) throw InputError("simplex_bruteforce: need >= 2 grid points");
  const auto& p = in.base.probs();
  const std::size_t N = grid_points - 1;
  const double h = 1.0 / static_cast<double>(N);

  BruteForceResult best;
  auto consider = [&](const std::vector<double>& q) {
    if (f_divergence(in.divergence, q, p) > in.rho) return;
    const double v = detail::expectation(q, in.losses);
    if (v > best.value) {
      best.value = v;
      best.argmax = q;
    }
  };
  consider(p);

  std::vector<std::size_t> k(n, 0);
  std::vector<double> q(n);
  // Enumerate compositions k_0 + ... + k_{n-1} = N.
  auto recurse = [&](auto&& self, std::size_t idx, std::size_t remaining) -> void {
    if (idx + 1 == n) {
      k[idx] = remaining;
      for (std::size_t i = 0; i < n; ++i) q[i] = static_cast<double>(k[i]) * h;
      consider(q);
      return;
    }
    for (std::size_t v = 0; v <= remaining; ++v) {
      k[idx] = v;
      self(self, idx + 1, remaining - v);
    }
  };
  recurse(recurse, 0, N);
  return best;
}

struct FormReport {
  double max_rel_deviation = 0.0;
  double fitted_param = 0.0;  // beta (KL), slope (chi^2) or tau (reverse KL)
  bool passed = false;
};

namespace detail {

/// Least-squares fit y = a + b x; returns {a, b}. Degenerate x gives b = 0.
inline std::pair<double, double> fit_line(const std::vector<double>& x,
                                          const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double b = sxx > 0.0 ? sxy / sxx : 0.0;
  return {my - b * mx, b};
}

}  // namespace detail

/// Checks that a worst-case distribution has the divergence's tilted form.
/// The free dual parameter is fitted by least squares on the linearized
/// relation (log(q/p), q/p or p/q against the loss), the family member is
/// rebuilt from the fit, and the largest relative deviation from the given
/// distribution is reported. Entries where q vanishes are compared in
/// absolute terms.
inline FormReport optimal_weight_form_check(const DroInstance& in,
                                            const std::vector<double>& worst,
                                            double tolerance = 1e-6) {
  in.validate();
  if (worst.size() != in.losses.size())
    throw InputError("optimal_weight_form_check: length mismatch");
  const auto& p = in.base.probs();
  const auto s = detail::support_stats(in);
  FormReport r;

  auto finish = [&](std::vector<double> model) {
    const double total = std::accumulate(model.begin(), model.end(), 0.0);
    double dev = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
      const double m = total > 0.0 ? model[i] / total : 0.0;
      dev = std::max(dev, worst[i] > 0.0 ? std::abs(m - worst[i]) / worst[i]
                                         : std::abs(m));
    }
    r.max_rel_deviation = dev;
    r.passed = dev < tolerance;
    return r;
  };

  // Constant losses: the only tilted member is the base itself.
  if (s.max_loss == s.min_loss) return finish(p);

  // Active entries carry mass under both distributions.
  std::vector<double> x, y;
  std::size_t distinct_support = 0;
  double first = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0 || worst[i] <= 0.0) continue;
    if (x.empty()) first = in.losses[i];
    if (in.losses[i] != first) distinct_support = 2;
    x.push_back(in.losses[i]);
    switch (in.divergence) {
      case Divergence::KL: y.push_back(std::log(worst[i] / p[i])); break;
      case Divergence::Chi2: y.push_back(worst[i] / p[i]); break;
      case Divergence::ReverseKL: y.push_back(p[i] / worst[i]); break;
      case Divergence::None: break;
    }
  }

  // All worst-case mass on one loss level: the degenerate end of every
  // family, q ∝ p restricted to that level.
  if (distinct_support < 2) {
    std::vector<double> model(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] > 0.0 && !x.empty() && in.losses[i] == first) model[i] = p[i];
    r.fitted_param = 0.0;
    return finish(std::move(model));
  }

  const auto [a, b] = detail::fit_line(x, y);
  std::vector<double> model(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    const double l = in.losses[i];
    switch (in.divergence) {
      case Divergence::KL: model[i] = p[i] * std::exp(a + b * l); break;
      case Divergence::Chi2: model[i] = p[i] * std::max(0.0, a + b * l); break;
      case Divergence::ReverseKL: {
        const double denom = a + b * l;
        model[i] = denom > 0.0 ? p[i] / denom : 0.0;
        break;
      }
      case Divergence::None: break;
    }
  }
  switch (in.divergence) {
    case Divergence::KL: r.fitted_param = b != 0.0 ? 1.0 / b : 0.0; break;
    case Divergence::Chi2: r.fitted_param = b; break;
    case Divergence::ReverseKL: r.fitted_param = b != 0.0 ? -a / b : 0.0; break;
    case Divergence::None: break;
  }
  return finish(std::move(model));
}

inline FormReport optimal_weight_form_check(const DroInstance& in,
                                            const DroSolution& sol,
                                            double tolerance = 1e-6) {
  return optimal_weight_form_check(in, sol.worst_dist.probs(), tolerance);
}

}  // namespace rgd::dro
