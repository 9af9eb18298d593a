#pragma once

// First- and quasi-second-order optimisers over flat parameter vectors.

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "semadv/core/tensor.hpp"

namespace semadv::optim {

/// Adam with bias correction. One instance owns the moment estimates for a
/// fixed list of parameter tensors.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(Options opt) : opt_(opt) {}

  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) throw Error("Adam::step: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
      }
    }
    if (m_.size() != params.size()) throw Error("Adam::step: parameter list changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, double(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      const auto& g = grads[k];
      p.require_same_shape(g, "Adam::step");
      for (std::size_t i = 0; i < p.size(); ++i) {
        m_[k][i] = opt_.beta1 * m_[k][i] + (1.0 - opt_.beta1) * g[i];
        v_[k][i] = opt_.beta2 * v_[k][i] + (1.0 - opt_.beta2) * g[i] * g[i];
        const double mh = m_[k][i] / bc1, vh = v_[k][i] / bc2;
        p[i] -= opt_.lr * mh / (std::sqrt(vh) + opt_.eps);
      }
    }
  }

  long steps() const noexcept { return t_; }

 private:
  Options opt_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

/// f(x, grad) -> loss; must fill grad with df/dx.
using Objective = std::function<double(std::span<const double>, std::span<double>)>;

struct LbfgsOptions {
  int max_steps = 14;
  int history = 10;
  double lr = 1.0;
  double tol_grad = 1e-10;
  double tol_change = 1e-12;
  int max_line_search = 25;
  double c1 = 1e-4;
  double c2 = 0.9;
};

enum class LbfgsStop { StepLimit, LineSearchFailure, Converged, NonFinite };

inline const char* to_string(LbfgsStop s) {
  switch (s) {
    case LbfgsStop::StepLimit: return "step_limit";
    case LbfgsStop::LineSearchFailure: return "line_search_failure";
    case LbfgsStop::Converged: return "converged";
    case LbfgsStop::NonFinite: return "non_finite";
  }
  return "unknown";
}

struct LbfgsReport {
  int steps = 0;        // completed iterations (direction + accepted line search)
  int evaluations = 0;  // objective evaluations including the initial one
  double initial_loss = 0.0;
  double final_loss = 0.0;
  LbfgsStop stop = LbfgsStop::StepLimit;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// Minimiser of the cubic interpolating (x1,f1,g1) and (x2,f2,g2), clamped to
/// the bounds.
inline double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2,
                                double lo, double hi) {
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2sq = d1 * d1 - g1 * g2;
  if (d2sq >= 0.0) {
    const double d2 = std::sqrt(d2sq);
    const double pos = x1 <= x2 ? x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
                                : x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
    if (std::isfinite(pos)) return std::min(std::max(pos, lo), hi);
  }
  return 0.5 * (lo + hi);
}

struct LineSearchResult {
  double loss;
  std::vector<double> grad;
  double t;
  int evaluations;
};

/// Strong-Wolfe line search (bracketing + cubic zoom) along direction d.
inline LineSearchResult strong_wolfe(const Objective& f, std::span<const double> x, double t,
                                     std::span<const double> d, double loss,
                                     std::span<const double> grad, double gtd,
                                     const LbfgsOptions& opt) {
  const std::size_t n = x.size();
  std::vector<double> xt(n);
  auto eval = [&](double step, std::vector<double>& g) {
    for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + step * d[i];
    g.assign(n, 0.0);
    return f(xt, g);
  };
  const double d_norm = max_abs(d);

  std::vector<double> g_new;
  double f_new = eval(t, g_new);
  int evals = 1;
  double gtd_new = dot(g_new, d);

  double t_prev = 0.0, f_prev = loss, gtd_prev = gtd;
  std::vector<double> g_prev(grad.begin(), grad.end());
  bool done = false;
  int ls_iter = 0;

  std::vector<double> br_t, br_f, br_gtd;
  std::vector<std::vector<double>> br_g;
  while (ls_iter < opt.max_line_search) {
    if (!std::isfinite(f_new) || f_new > loss + opt.c1 * t * gtd ||
        (ls_iter > 1 && f_new >= f_prev)) {
      br_t = {t_prev, t};
      br_f = {f_prev, f_new};
      br_g = {g_prev, g_new};
      br_gtd = {gtd_prev, gtd_new};
      break;
    }
    if (std::abs(gtd_new) <= -opt.c2 * gtd) {
      br_t = {t};
      br_f = {f_new};
      br_g = {g_new};
      br_gtd = {gtd_new};
      done = true;
      break;
    }
    if (gtd_new >= 0.0) {
      br_t = {t_prev, t};
      br_f = {f_prev, f_new};
      br_g = {g_prev, g_new};
      br_gtd = {gtd_prev, gtd_new};
      break;
    }
    const double min_step = t + 0.01 * (t - t_prev);
    const double max_step = t * 10.0;
    const double tmp = t;
    t = cubic_interpolate(t_prev, f_prev, gtd_prev, t, f_new, gtd_new, min_step, max_step);
    t_prev = tmp;
    f_prev = f_new;
    g_prev = g_new;
    gtd_prev = gtd_new;
    f_new = eval(t, g_new);
    ++evals;
    gtd_new = dot(g_new, d);
    ++ls_iter;
  }
  if (ls_iter == opt.max_line_search) {
    br_t = {0.0, t};
    br_f = {loss, f_new};
    br_g = {std::vector<double>(grad.begin(), grad.end()), g_new};
    br_gtd = {gtd, gtd_new};
  }

  bool insuf_progress = false;
  std::size_t lo = 0, hi = 1;
  if (br_t.size() == 2 && br_f[0] > br_f[1]) std::swap(lo, hi);
  while (!done && ls_iter < opt.max_line_search && br_t.size() == 2) {
    if (std::abs(br_t[1] - br_t[0]) * d_norm < opt.tol_change) break;
    const double bmin = std::min(br_t[0], br_t[1]), bmax = std::max(br_t[0], br_t[1]);
    t = cubic_interpolate(br_t[0], br_f[0], br_gtd[0], br_t[1], br_f[1], br_gtd[1], bmin, bmax);
    const double eps = 0.1 * (bmax - bmin);
    if (std::min(bmax - t, t - bmin) < eps) {
      if (insuf_progress || t >= bmax || t <= bmin) {
        t = std::abs(t - bmax) < std::abs(t - bmin) ? bmax - eps : bmin + eps;
        insuf_progress = false;
      } else {
        insuf_progress = true;
      }
    } else {
      insuf_progress = false;
    }
    f_new = eval(t, g_new);
    ++evals;
    gtd_new = dot(g_new, d);
    ++ls_iter;
    if (!std::isfinite(f_new) || f_new > loss + opt.c1 * t * gtd || f_new >= br_f[lo]) {
      br_t[hi] = t;
      br_f[hi] = f_new;
      br_g[hi] = g_new;
      br_gtd[hi] = gtd_new;
      if (br_f[0] <= br_f[1]) { lo = 0; hi = 1; } else { lo = 1; hi = 0; }
    } else {
      if (std::abs(gtd_new) <= -opt.c2 * gtd) {
        done = true;
      } else if (gtd_new * (br_t[hi] - br_t[lo]) >= 0.0) {
        br_t[hi] = br_t[lo];
        br_f[hi] = br_f[lo];
        br_g[hi] = br_g[lo];
        br_gtd[hi] = br_gtd[lo];
      }
      br_t[lo] = t;
      br_f[lo] = f_new;
      br_g[lo] = g_new;
      br_gtd[lo] = gtd_new;
    }
  }
  if (br_t.size() == 1) lo = 0;
  return {br_f[lo], std::move(br_g[lo]), br_t[lo], evals};
}

}  // namespace detail

/// Limited-memory BFGS with a strong-Wolfe line search. Runs at most
/// opt.max_steps iterations from a fresh curvature history and updates x in
/// place. A step whose line search cannot reduce the loss is not applied; it
/// ends the run with LineSearchFailure.
inline LbfgsReport lbfgs_minimize(std::vector<double>& x, const Objective& f,
                                  const LbfgsOptions& opt = {}) {
  const std::size_t n = x.size();
  LbfgsReport rep;
  std::vector<double> g(n, 0.0);
  double loss = f(x, g);
  rep.evaluations = 1;
  rep.initial_loss = rep.final_loss = loss;
  if (!std::isfinite(loss)) {
    rep.stop = LbfgsStop::NonFinite;
    return rep;
  }
  if (detail::max_abs(g) <= opt.tol_grad) {
    rep.stop = LbfgsStop::Converged;
    return rep;
  }

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho;
  std::vector<double> d(n), prev_g(n);
  double t = 0.0, h_diag = 1.0;

  for (int it = 1; it <= opt.max_steps; ++it) {
    if (it == 1) {
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
    } else {
      std::vector<double> y(n), s(n);
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = g[i] - prev_g[i];
        s[i] = d[i] * t;
      }
      const double ys = detail::dot(y, s);
      if (ys > 1e-10) {
        if (int(s_hist.size()) == opt.history) {
          s_hist.pop_front();
          y_hist.pop_front();
          rho.pop_front();
        }
        s_hist.push_back(std::move(s));
        y_hist.push_back(y);
        rho.push_back(1.0 / ys);
        h_diag = ys / detail::dot(y, y);
      }
      std::vector<double> q(n), alpha(s_hist.size());
      for (std::size_t i = 0; i < n; ++i) q[i] = -g[i];
      for (std::size_t k = s_hist.size(); k-- > 0;) {
        alpha[k] = detail::dot(s_hist[k], q) * rho[k];
        for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[k] * y_hist[k][i];
      }
      for (std::size_t i = 0; i < n; ++i) d[i] = q[i] * h_diag;
      for (std::size_t k = 0; k < s_hist.size(); ++k) {
        const double beta = detail::dot(y_hist[k], d) * rho[k];
        for (std::size_t i = 0; i < n; ++i) d[i] += s_hist[k][i] * (alpha[k] - beta);
      }
    }
    prev_g = g;
    const double prev_loss = loss;

    if (it == 1) {
      double l1 = 0.0;
      for (double v : g) l1 += std::abs(v);
      t = std::min(1.0, 1.0 / l1) * opt.lr;
    } else {
      t = opt.lr;
    }
    const double gtd = detail::dot(g, d);
    if (gtd > -opt.tol_change) {
      rep.stop = LbfgsStop::Converged;
      break;
    }

    auto ls = detail::strong_wolfe(f, x, t, d, loss, g, gtd, opt);
    rep.evaluations += ls.evaluations;
    if (!std::isfinite(ls.loss) || ls.loss >= loss) {
      rep.stop = std::isfinite(ls.loss) ? LbfgsStop::LineSearchFailure : LbfgsStop::NonFinite;
      break;
    }
    t = ls.t;
    for (std::size_t i = 0; i < n; ++i) x[i] += t * d[i];
    loss = ls.loss;
    g = std::move(ls.grad);
    rep.steps = it;
    rep.final_loss = loss;

    if (it == opt.max_steps) {
      rep.stop = LbfgsStop::StepLimit;
      break;
    }
    if (detail::max_abs(g) <= opt.tol_grad) {
      rep.stop = LbfgsStop::Converged;
      break;
    }
    double step_size = 0.0;
    for (double v : d) step_size = std::max(step_size, std::abs(v * t));
    if (step_size <= opt.tol_change || std::abs(loss - prev_loss) < opt.tol_change) {
      rep.stop = LbfgsStop::Converged;
      break;
    }
  }
  return rep;
}

}  // namespace semadv::optim
