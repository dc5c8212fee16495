#include "corsa/lbfgsb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace corsa {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Minimal row-major dense matrix, big enough for the 2m x 2m correction
// blocks (m = history, typically 5).
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

std::vector<double> matvec(const Mat& m, const std::vector<double>& v) {
  std::vector<double> out(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * v[j];
    out[i] = s;
  }
  return out;
}

std::vector<double> tmatvec(const Mat& m, const std::vector<double>& v) {
  std::vector<double> out(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out[j] += m(i, j) * v[i];
  return out;
}

// Gauss-Jordan inverse with partial pivoting. Throws on singularity;
// callers fall back to a gradient step in that case.
Mat inverse(Mat m) {
  const std::size_t n = m.rows;
  Mat inv(n, n);
  for (std::size_t i = 0; i < n; ++i) inv(i, i) = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m(r, col)) > std::abs(m(pivot, col))) pivot = r;
    if (m(pivot, col) == 0.0) throw std::runtime_error("singular matrix");
    if (pivot != col)
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(m(col, j), m(pivot, j));
        std::swap(inv(col, j), inv(pivot, j));
      }
    const double d = m(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      m(col, j) /= d;
      inv(col, j) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        m(r, j) -= f * m(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

std::vector<double> solve(const Mat& m, std::vector<double> b) {
  Mat lu = m;
  const std::size_t n = lu.rows;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(lu(r, col)) > std::abs(lu(pivot, col))) pivot = r;
    if (lu(pivot, col) == 0.0) throw std::runtime_error("singular matrix");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(col, j), lu(pivot, j));
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu(r, col) / lu(col, col);
      lu(r, col) = f;
      for (std::size_t j = col + 1; j < n; ++j) lu(r, j) -= f * lu(col, j);
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= lu(i, j) * b[j];
    b[i] = s / lu(i, i);
  }
  return b;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Workspace {
  std::vector<std::vector<double>> s_hist, y_hist;
  double theta = 1.0;
  Mat w;  // n x 2k, [Y  theta*S]
  Mat m;  // 2k x 2k middle matrix inverse

  void rebuild(std::size_t n) {
    const std::size_t k = s_hist.size();
    w = Mat(n, 2 * k);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < n; ++i) {
        w(i, j) = y_hist[j][i];
        w(i, k + j) = theta * s_hist[j][i];
      }
    // middle matrix [[ -D, L^T ], [ L, theta*S^T S ]]
    Mat mid(2 * k, 2 * k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double sy = dot(s_hist[i], y_hist[j]);
        if (i == j) mid(i, i) = -sy;
        if (i > j) {
          mid(k + i, j) = sy;
          mid(j, k + i) = sy;
        }
        mid(k + i, k + j) = theta * dot(s_hist[i], s_hist[j]);
      }
    m = inverse(mid);
  }
};

std::vector<double> project(const std::vector<double>& x, const std::vector<double>& l,
                            const std::vector<double>& u) {
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = std::clamp(x[i], l[i], u[i]);
  return p;
}

double projected_gradient_norm(const std::vector<double>& x, const std::vector<double>& g,
                               const std::vector<double>& l, const std::vector<double>& u) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double step = std::clamp(x[i] - g[i], l[i], u[i]) - x[i];
    m = std::max(m, std::abs(step));
  }
  return m;
}

// Generalized Cauchy point along the projected steepest-descent path.
void cauchy_point(const std::vector<double>& x, const std::vector<double>& g,
                  const std::vector<double>& l, const std::vector<double>& u,
                  const Workspace& ws, std::vector<double>& xc, std::vector<double>& c) {
  const std::size_t n = x.size();
  std::vector<double> t(n), d(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (g[i] < 0.0)
      t[i] = (x[i] - u[i]) / g[i];
    else if (g[i] > 0.0)
      t[i] = (x[i] - l[i]) / g[i];
    else
      t[i] = kInf;
    d[i] = (t[i] < kEps) ? 0.0 : -g[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return t[i] < t[j]; });

  xc = x;
  std::vector<double> p = tmatvec(ws.w, d);
  c.assign(ws.w.cols, 0.0);
  double fp = -dot(d, d);
  double fpp = -ws.theta * fp - dot(p, matvec(ws.m, p));
  const double fpp_floor = kEps * (-ws.theta * fp);
  double dt_min = (fpp > 0.0) ? -fp / fpp : kInf;
  double t_old = 0.0;
  std::size_t done = 0;
  for (; done < n; ++done) {
    const std::size_t b = order[done];
    const double tb = t[b];
    if (!(tb < kInf)) break;
    const double dt = tb - t_old;
    if (dt_min <= dt) break;
    if (d[b] > 0.0)
      xc[b] = u[b];
    else if (d[b] < 0.0)
      xc[b] = l[b];
    const double zb = xc[b] - x[b];
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += dt * p[j];
    const double gb = g[b];
    std::vector<double> wb(ws.w.cols);
    for (std::size_t j = 0; j < ws.w.cols; ++j) wb[j] = ws.w(b, j);
    const std::vector<double> mc = matvec(ws.m, c);
    const std::vector<double> mp = matvec(ws.m, p);
    const std::vector<double> mw = matvec(ws.m, wb);
    fp += dt * fpp + gb * gb + ws.theta * gb * zb - gb * dot(wb, mc);
    fpp -= ws.theta * gb * gb + 2.0 * gb * dot(wb, mp) + gb * gb * dot(wb, mw);
    fpp = std::max(fpp, fpp_floor);
    for (std::size_t j = 0; j < p.size(); ++j) p[j] += gb * wb[j];
    d[b] = 0.0;
    dt_min = (fpp > 0.0) ? -fp / fpp : kInf;
    t_old = tb;
  }
  dt_min = std::max(dt_min, 0.0);
  if (!std::isfinite(dt_min)) dt_min = 0.0;
  t_old += dt_min;
  for (std::size_t j = done; j < n; ++j) {
    const std::size_t idx = order[j];
    if (d[idx] != 0.0) xc[idx] = std::clamp(x[idx] + t_old * d[idx], l[idx], u[idx]);
  }
  for (std::size_t j = 0; j < c.size(); ++j) c[j] += dt_min * p[j];
}

// Minimizes the quadratic model on the free variables of the Cauchy point.
bool subspace_minimize(const std::vector<double>& x, const std::vector<double>& g,
                       const std::vector<double>& l, const std::vector<double>& u,
                       const std::vector<double>& xc, const std::vector<double>& c,
                       const Workspace& ws, std::vector<double>& xbar) {
  const std::size_t n = x.size();
  std::vector<std::size_t> free_idx;
  for (std::size_t i = 0; i < n; ++i)
    if (xc[i] > l[i] && xc[i] < u[i]) free_idx.push_back(i);
  xbar = xc;
  if (free_idx.empty()) return false;

  const std::vector<double> wmc = matvec(ws.w, matvec(ws.m, c));
  std::vector<double> r(free_idx.size());
  for (std::size_t j = 0; j < free_idx.size(); ++j) {
    const std::size_t i = free_idx[j];
    r[j] = g[i] + ws.theta * (xc[i] - x[i]) - wmc[i];
  }

  const double inv_theta = 1.0 / ws.theta;
  std::vector<double> du(free_idx.size());
  const std::size_t k2 = ws.w.cols;
  if (k2 == 0) {
    for (std::size_t j = 0; j < du.size(); ++j) du[j] = -inv_theta * r[j];
  } else {
    Mat wz(free_idx.size(), k2);
    for (std::size_t j = 0; j < free_idx.size(); ++j)
      for (std::size_t col = 0; col < k2; ++col) wz(j, col) = ws.w(free_idx[j], col);
    std::vector<double> v = matvec(ws.m, tmatvec(wz, r));
    // N = I - (1/theta) * M * Wz^T Wz
    Mat wtw(k2, k2);
    for (std::size_t a = 0; a < k2; ++a)
      for (std::size_t b = 0; b < k2; ++b) {
        double s = 0.0;
        for (std::size_t j = 0; j < free_idx.size(); ++j) s += wz(j, a) * wz(j, b);
        wtw(a, b) = s;
      }
    Mat nmat(k2, k2);
    for (std::size_t a = 0; a < k2; ++a) {
      for (std::size_t b = 0; b < k2; ++b) {
        double s = 0.0;
        for (std::size_t c2 = 0; c2 < k2; ++c2) s += ws.m(a, c2) * wtw(c2, b);
        nmat(a, b) = ((a == b) ? 1.0 : 0.0) - inv_theta * s;
      }
    }
    try {
      v = solve(nmat, v);
    } catch (const std::runtime_error&) {
      for (std::size_t j = 0; j < du.size(); ++j) du[j] = -inv_theta * r[j];
      v.clear();
    }
    if (!v.empty()) {
      const std::vector<double> wzv = matvec(wz, v);
      for (std::size_t j = 0; j < du.size(); ++j)
        du[j] = -inv_theta * r[j] - inv_theta * inv_theta * wzv[j];
    }
  }

  double alpha = 1.0;
  for (std::size_t j = 0; j < free_idx.size(); ++j) {
    const std::size_t i = free_idx[j];
    if (du[j] > 0.0)
      alpha = std::min(alpha, (u[i] - xc[i]) / du[j]);
    else if (du[j] < 0.0)
      alpha = std::min(alpha, (l[i] - xc[i]) / du[j]);
  }
  alpha = std::max(alpha, 0.0);
  for (std::size_t j = 0; j < free_idx.size(); ++j)
    xbar[free_idx[j]] = std::clamp(xbar[free_idx[j]] + alpha * du[j], l[free_idx[j]],
                                   u[free_idx[j]]);
  return true;
}

double finite_or_inf(double v) { return std::isfinite(v) ? v : kInf; }

// Strong Wolfe line search on [0, 1]; the step segment joins two feasible
// points, so any alpha in [0, 1] stays in the box.
double line_search(const Objective& f, const Gradient& grad,
                   const std::vector<double>& x0, double f0,
                   const std::vector<double>& g0, const std::vector<double>& dir,
                   const LbfgsbOptions& opt) {
  const double dphi0 = dot(g0, dir);
  if (dphi0 >= 0.0) return 0.0;
  const auto eval_at = [&](double a, double& fv) {
    std::vector<double> x(x0.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = x0[i] + a * dir[i];
    fv = finite_or_inf(f(x));
    return x;
  };
  const auto zoom = [&](double lo, double hi, double f_lo) {
    double alpha = lo;
    for (int it = 0; it < opt.max_line_search; ++it) {
      alpha = 0.5 * (lo + hi);
      double fa;
      const std::vector<double> xa = eval_at(alpha, fa);
      if (fa > f0 + opt.wolfe_c1 * alpha * dphi0 || fa >= f_lo) {
        hi = alpha;
        continue;
      }
      const double dphi = dot(grad(xa), dir);
      if (std::abs(dphi) <= -opt.wolfe_c2 * dphi0) return alpha;
      if (dphi * (hi - lo) >= 0.0) hi = lo;
      lo = alpha;
      f_lo = fa;
    }
    return alpha;
  };

  double alpha_prev = 0.0, f_prev = f0;
  double alpha = 1.0;
  for (int it = 0; it < opt.max_line_search; ++it) {
    double fa;
    const std::vector<double> xa = eval_at(alpha, fa);
    if (fa > f0 + opt.wolfe_c1 * alpha * dphi0 || (it > 0 && fa >= f_prev))
      return zoom(alpha_prev, alpha, f_prev);
    const double dphi = dot(grad(xa), dir);
    if (std::abs(dphi) <= -opt.wolfe_c2 * dphi0) return alpha;
    if (dphi >= 0.0) return zoom(alpha, alpha_prev, fa);
    if (alpha >= 1.0) return alpha;
    alpha_prev = alpha;
    f_prev = fa;
    alpha = std::min(1.0, 2.0 * alpha);
  }
  return alpha;
}

}  // namespace

LbfgsbResult lbfgsb_minimize(const Objective& f, const Gradient& grad,
                             std::vector<double> x0, const std::vector<double>& lower,
                             const std::vector<double>& upper,
                             const LbfgsbOptions& options) {
  const std::size_t n = x0.size();
  if (lower.size() != n || upper.size() != n)
    throw std::invalid_argument("lbfgsb: bound dimension mismatch");
  for (std::size_t i = 0; i < n; ++i)
    if (!(lower[i] < upper[i]))
      throw std::invalid_argument("lbfgsb: lower bound must be below upper bound");

  LbfgsbResult res;
  res.x = project(x0, lower, upper);
  res.fx = f(res.x);
  std::vector<double> g = grad(res.x);

  Workspace ws;
  ws.rebuild(n);

  std::vector<double> xc, c, xbar;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    res.iterations = iter;
    if (projected_gradient_norm(res.x, g, lower, upper) < options.pg_tol) {
      res.converged = true;
      return res;
    }
    cauchy_point(res.x, g, lower, upper, ws, xc, c);
    subspace_minimize(res.x, g, lower, upper, xc, c, ws, xbar);

    std::vector<double> dir(n);
    for (std::size_t i = 0; i < n; ++i) dir[i] = xbar[i] - res.x[i];
    const double alpha = line_search(f, grad, res.x, res.fx, g, dir, options);
    if (alpha <= 0.0) {
      res.converged = true;  // no descent available along the model direction
      return res;
    }
    std::vector<double> x_new(n), s(n);
    for (std::size_t i = 0; i < n; ++i) {
      x_new[i] = std::clamp(res.x[i] + alpha * dir[i], lower[i], upper[i]);
      s[i] = x_new[i] - res.x[i];
    }
    const double f_new = f(x_new);
    const std::vector<double> g_new = grad(x_new);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = g_new[i] - g[i];

    const double sy = dot(s, y);
    const double yy = dot(y, y);
    if (sy > kEps * yy && yy > 0.0) {
      ws.s_hist.push_back(s);
      ws.y_hist.push_back(y);
      if (static_cast<int>(ws.s_hist.size()) > options.history) {
        ws.s_hist.erase(ws.s_hist.begin());
        ws.y_hist.erase(ws.y_hist.begin());
      }
      ws.theta = yy / sy;
      try {
        ws.rebuild(n);
      } catch (const std::runtime_error&) {
        ws.s_hist.clear();
        ws.y_hist.clear();
        ws.theta = 1.0;
        ws.rebuild(n);
      }
    }

    const double df = res.fx - f_new;
    res.x = x_new;
    res.fx = f_new;
    g = g_new;
    if (std::abs(df) <= options.f_tol * std::max({std::abs(res.fx), std::abs(f_new), 1.0})) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

Gradient numerical_gradient(const Objective& f, const std::vector<double>& lower,
                            const std::vector<double>& upper,
                            const std::vector<double>& steps) {
  return [f, lower, upper, steps](const std::vector<double>& x) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::vector<double> xp = x, xm = x;
      xp[i] = std::min(x[i] + steps[i], upper[i]);
      xm[i] = std::max(x[i] - steps[i], lower[i]);
      const double denom = xp[i] - xm[i];
      g[i] = (denom > 0.0) ? (f(xp) - f(xm)) / denom : 0.0;
    }
    return g;
  };
}

}  // namespace corsa
