#include "wbmpc/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace wbmpc::optim {
namespace {

struct Point {
  double alpha;
  double f;
  double dphi;  // directional derivative
};

// Minimizer of the cubic matching (f, f') at both ends, safeguarded into the
// middle of the bracket.
double cubic_step(const Point& lo, const Point& hi) {
  const double d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (lo.alpha - hi.alpha);
  const double disc = d1 * d1 - lo.dphi * hi.dphi;
  double a = 0.5 * (lo.alpha + hi.alpha);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), hi.alpha - lo.alpha);
    const double denom = hi.dphi - lo.dphi + 2.0 * d2;
    if (denom != 0.0) a = hi.alpha - (hi.alpha - lo.alpha) * (hi.dphi + d2 - d1) / denom;
  }
  const double left = std::min(lo.alpha, hi.alpha), right = std::max(lo.alpha, hi.alpha);
  const double margin = 0.1 * (right - left);
  if (!std::isfinite(a) || a < left + margin || a > right - margin) a = 0.5 * (left + right);
  return a;
}

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& opt) {
  const Eigen::Index n = x0.size();
  LbfgsResult res;
  Eigen::VectorXd g(n), g_new(n), x_new(n);
  double fx = f(x0, g);
  ++res.evaluations;
  res.x = x0;
  res.f = fx;
  if (!std::isfinite(fx)) {
    res.line_search_failed = true;
    return res;
  }
  Eigen::VectorXd x = std::move(x0);

  std::deque<Eigen::VectorXd> S, Y;
  std::deque<double> rho;

  for (int it = 0; it < opt.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance) break;

    // Two-loop recursion.
    Eigen::VectorXd q = -g;
    std::vector<double> a(S.size());
    for (std::size_t i = S.size(); i-- > 0;) {
      a[i] = rho[i] * S[i].dot(q);
      q -= a[i] * Y[i];
    }
    double gamma = 1.0;
    if (!S.empty()) gamma = S.back().dot(Y.back()) / Y.back().squaredNorm();
    q *= gamma;
    for (std::size_t i = 0; i < S.size(); ++i) {
      const double b = rho[i] * Y[i].dot(q);
      q += (a[i] - b) * S[i];
    }
    Eigen::VectorXd d = std::move(q);
    double dphi0 = g.dot(d);
    if (!(dphi0 < 0.0)) {
      S.clear();
      Y.clear();
      rho.clear();
      d = -g;
      dphi0 = -g.squaredNorm();
    }

    // Strong-Wolfe line search.
    const Point p0{0.0, fx, dphi0};
    double alpha = S.empty() ? std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>()) : 1.0;
    Point prev = p0;
    bool found = false;
    Point lo{}, hi{};
    bool zoom = false;
    double f_acc = fx;
    auto eval = [&](double step) {
      x_new = x + step * d;
      const double fv = f(x_new, g_new);
      ++res.evaluations;
      return Point{step, std::isfinite(fv) ? fv : INFINITY, std::isfinite(fv) ? g_new.dot(d) : INFINITY};
    };
    for (int ls = 0; ls < opt.max_line_search && !found && !zoom; ++ls) {
      const Point cur = eval(alpha);
      if (cur.f > fx + opt.c1 * alpha * dphi0 || (ls > 0 && cur.f >= prev.f)) {
        lo = prev;
        hi = cur;
        zoom = true;
      } else if (std::abs(cur.dphi) <= -opt.c2 * dphi0) {
        found = true;
        f_acc = cur.f;
      } else if (cur.dphi >= 0.0) {
        lo = cur;
        hi = prev;
        zoom = true;
      } else {
        prev = cur;
        alpha *= 2.0;
      }
    }
    if (zoom) {
      for (int ls = 0; ls < opt.max_line_search && !found; ++ls) {
        double step;
        if (std::isfinite(hi.f) && std::isfinite(hi.dphi)) {
          step = cubic_step(lo, hi);
        } else {
          step = 0.5 * (lo.alpha + hi.alpha);
        }
        const Point cur = eval(step);
        if (cur.f > fx + opt.c1 * step * dphi0 || cur.f >= lo.f) {
          hi = cur;
        } else if (std::abs(cur.dphi) <= -opt.c2 * dphi0) {
          found = true;
          f_acc = cur.f;
        } else {
          if (cur.dphi * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
          lo = cur;
        }
        if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) break;
      }
    }
    if (!found) {
      res.line_search_failed = true;
      break;
    }

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_new - g;
    x = x_new;
    g = g_new;
    fx = f_acc;
    res.iterations = it + 1;
    if (fx < res.f) {
      res.f = fx;
      res.x = x;
    }
    const double sy = s.dot(y);
    if (sy > 1e-300) {
      S.push_back(std::move(s));
      Y.push_back(std::move(y));
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > opt.memory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
  }
  return res;
}

Adam::Adam(Eigen::Index n, AdamOptions opt)
    : opt_(opt), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

void Adam::step(Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = opt_.beta1 * m_ + (1.0 - opt_.beta1) * grad;
  v_ = opt_.beta2 * v_ + (1.0 - opt_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  x.array() -= opt_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + opt_.eps);
}

}  // namespace wbmpc::optim
