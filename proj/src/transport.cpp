#include "flowcontrast/transport.hpp"

#include <algorithm>
#include <cmath>

#include "flowcontrast/errors.hpp"

namespace flowcontrast::negsc {

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = numcore::norm(a), nb = numcore::norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return numcore::dot(a, b) / (na * nb);
}

void cosine_grad_accumulate(std::span<const double> a, std::span<const double> b, double scale,
                            std::span<double> grad_a, std::span<double> grad_b) {
  const double na = numcore::norm(a), nb = numcore::norm(b);
  if (na == 0.0 || nb == 0.0 || scale == 0.0) return;
  const double cos = numcore::dot(a, b) / (na * nb);
  const double inv = 1.0 / (na * nb);
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!grad_a.empty()) grad_a[k] += scale * (b[k] * inv - cos * a[k] / (na * na));
    if (!grad_b.empty()) grad_b[k] += scale * (a[k] * inv - cos * b[k] / (nb * nb));
  }
}

Matrix cosine_cost(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvalidArgument("cosine_cost: dimension mismatch");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = 1.0 - cosine(a.row(i), b.row(j));
  }
  return c;
}

std::vector<double> uniform_marginal(std::size_t n) {
  if (n == 0) throw InvalidArgument("uniform_marginal: empty support");
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

namespace {

void check_simplex(std::span<const double> m, const char* name) {
  double s = 0.0;
  for (double x : m) {
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw InvalidArgument(std::string("sinkhorn: ") + name + " must be strictly positive");
    }
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9) {
    throw InvalidArgument(std::string("sinkhorn: ") + name + " must sum to 1");
  }
}

Matrix plan_from_potentials(const Matrix& c, std::span<const double> f,
                            std::span<const double> g, double eps) {
  Matrix t(c.rows(), c.cols());
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < c.cols(); ++j) t(i, j) = std::exp((f[i] + g[j] - c(i, j)) / eps);
  }
  return t;
}

double dual_value(const Matrix& c, std::span<const double> mu, std::span<const double> nu,
                  std::span<const double> f, std::span<const double> g, double eps) {
  double v = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) v += f[i] * mu[i];
  for (std::size_t j = 0; j < nu.size(); ++j) v += g[j] * nu[j];
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < c.cols(); ++j) mass += std::exp((f[i] + g[j] - c(i, j)) / eps);
  }
  return v - eps * mass;
}

// Solves a x = b in place by Gaussian elimination with partial pivoting.
bool solve_dense(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t r = k + 1; r < n; ++r) {
      if (std::abs(a[r * n + k]) > std::abs(a[piv * n + k])) piv = r;
    }
    if (!(std::abs(a[piv * n + k]) > 1e-300)) return false;
    if (piv != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[k * n + c], a[piv * n + c]);
      std::swap(b[k], b[piv]);
    }
    for (std::size_t r = k + 1; r < n; ++r) {
      const double m = a[r * n + k] / a[k * n + k];
      if (m == 0.0) continue;
      for (std::size_t c = k; c < n; ++c) a[r * n + c] -= m * a[k * n + c];
      b[r] -= m * b[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t c = k + 1; c < n; ++c) s -= a[k * n + c] * b[c];
    b[k] = s / a[k * n + k];
  }
  return true;
}

// Damped Newton ascent on the entropic dual
//   D(f, g) = <f, mu> + <g, nu> - eps * sum_ij exp((f_i + g_j - C_ij) / eps)
// with the last g pinned to remove the constant shift. Scaling iterations
// crawl when the unregularized problem is nearly degenerate; Newton does not.
// Returns the number of steps taken.
std::size_t newton_polish(const Matrix& c, std::span<const double> mu, std::span<const double> nu,
                          double eps, std::vector<double>& f, std::vector<double>& g,
                          std::size_t max_steps, double tol) {
  const std::size_t m1 = c.rows(), m2 = c.cols(), n = m1 + m2 - 1;
  std::size_t steps = 0;
  double residual = marginal_residual(plan_from_potentials(c, f, g, eps), mu, nu);
  while (steps < max_steps && residual > tol) {
    const Matrix t = plan_from_potentials(c, f, g, eps);
    std::vector<double> row(m1, 0.0), col(m2, 0.0);
    for (std::size_t i = 0; i < m1; ++i) {
      for (std::size_t j = 0; j < m2; ++j) {
        row[i] += t(i, j);
        col[j] += t(i, j);
      }
    }
    std::vector<double> a(n * n, 0.0), b(n, 0.0);
    for (std::size_t i = 0; i < m1; ++i) {
      a[i * n + i] = row[i];
      b[i] = eps * (mu[i] - row[i]);
      for (std::size_t j = 0; j + 1 < m2; ++j) {
        a[i * n + m1 + j] = t(i, j);
        a[(m1 + j) * n + i] = t(i, j);
      }
    }
    for (std::size_t j = 0; j + 1 < m2; ++j) {
      a[(m1 + j) * n + m1 + j] = col[j];
      b[m1 + j] = eps * (nu[j] - col[j]);
    }
    if (!solve_dense(a, b, n)) break;

    const double d0 = dual_value(c, mu, nu, f, g, eps);
    bool moved = false;
    for (double step = 1.0; step > 1e-6 && !moved; step *= 0.5) {
      std::vector<double> fc = f, gc = g;
      for (std::size_t i = 0; i < m1; ++i) fc[i] += step * b[i];
      for (std::size_t j = 0; j + 1 < m2; ++j) gc[j] += step * b[m1 + j];
      const double d1 = dual_value(c, mu, nu, fc, gc, eps);
      if (!std::isfinite(d1)) continue;
      const double r1 = marginal_residual(plan_from_potentials(c, fc, gc, eps), mu, nu);
      if (d1 > d0 || r1 < residual) {
        f = std::move(fc);
        g = std::move(gc);
        residual = r1;
        moved = true;
      }
    }
    ++steps;
    if (!moved) break;
  }
  return steps;
}

}  // namespace

double marginal_residual(const Matrix& plan, std::span<const double> mu,
                         std::span<const double> nu) {
  double worst = 0.0;
  std::vector<double> col(plan.cols(), 0.0);
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < plan.cols(); ++j) {
      row += plan(i, j);
      col[j] += plan(i, j);
    }
    worst = std::max(worst, std::abs(row - mu[i]));
  }
  for (std::size_t j = 0; j < plan.cols(); ++j) worst = std::max(worst, std::abs(col[j] - nu[j]));
  return worst;
}

OtResult sinkhorn_wd(const Matrix& cost, std::span<const double> mu, std::span<const double> nu,
                     const SinkhornOptions& opts) {
  const std::size_t m1 = cost.rows(), m2 = cost.cols();
  if (m1 == 0 || m2 == 0) throw InvalidArgument("sinkhorn: empty cost matrix");
  if (mu.size() != m1 || nu.size() != m2) throw InvalidArgument("sinkhorn: marginal size mismatch");
  if (!(opts.epsilon > 0.0)) throw InvalidArgument("sinkhorn: epsilon must be positive");
  if (!cost.all_finite()) throw InvalidArgument("sinkhorn: non-finite cost");
  check_simplex(mu, "mu");
  check_simplex(nu, "nu");

  std::vector<double> log_mu(m1), log_nu(m2);
  for (std::size_t i = 0; i < m1; ++i) log_mu[i] = std::log(mu[i]);
  for (std::size_t j = 0; j < m2; ++j) log_nu[j] = std::log(nu[j]);

  double cmax = 0.0;
  for (double v : cost.values()) cmax = std::max(cmax, std::abs(v));
  double eps = opts.anneal ? std::max(opts.epsilon, cmax) : opts.epsilon;

  std::vector<double> f(m1, 0.0), g(m2, 0.0), buf(std::max(m1, m2));
  TransportPlan tp;
  tp.mu.assign(mu.begin(), mu.end());
  tp.nu.assign(nu.begin(), nu.end());
  tp.epsilon = opts.epsilon;
  double residual = INFINITY;
  std::size_t it = 0;
  while (it < opts.max_iter) {
    ++it;
    for (std::size_t i = 0; i < m1; ++i) {
      for (std::size_t j = 0; j < m2; ++j) buf[j] = (g[j] - cost(i, j)) / eps;
      f[i] = eps * (log_mu[i] - numcore::log_sum_exp(std::span<const double>(buf.data(), m2)));
    }
    for (std::size_t j = 0; j < m2; ++j) {
      for (std::size_t i = 0; i < m1; ++i) buf[i] = (f[i] - cost(i, j)) / eps;
      g[j] = eps * (log_nu[j] - numcore::log_sum_exp(std::span<const double>(buf.data(), m1)));
    }
    for (std::size_t i = 0; i < m1; ++i) {
      if (!std::isfinite(f[i])) throw NumericError("sinkhorn: non-finite potential");
    }
    for (std::size_t j = 0; j < m2; ++j) {
      if (!std::isfinite(g[j])) throw NumericError("sinkhorn: non-finite potential");
    }
    if (eps > opts.epsilon) {
      eps = std::max(opts.epsilon, eps * 0.7);
      continue;
    }
    // Columns are exact after the g-update; rows carry the residual.
    residual = 0.0;
    for (std::size_t i = 0; i < m1; ++i) {
      for (std::size_t j = 0; j < m2; ++j) buf[j] = (f[i] + g[j] - cost(i, j)) / eps;
      const double row = std::exp(numcore::log_sum_exp(std::span<const double>(buf.data(), m2)));
      residual = std::max(residual, std::abs(row - mu[i]));
    }
    if (residual <= opts.tol) break;
  }
  if (residual > opts.tol && opts.newton_steps > 0 && eps == opts.epsilon) {
    it += newton_polish(cost, mu, nu, eps, f, g, opts.newton_steps, opts.tol);
  }
  tp.plan = plan_from_potentials(cost, f, g, opts.epsilon);
  if (!tp.plan.all_finite()) throw NumericError("sinkhorn: non-finite plan");
  tp.iterations = it;
  tp.marginal_residual = marginal_residual(tp.plan, mu, nu);
  tp.converged = tp.marginal_residual <= opts.tol;
  tp.cost = cost;

  OtResult r;
  for (std::size_t i = 0; i < m1; ++i) {
    for (std::size_t j = 0; j < m2; ++j) r.value += tp.plan(i, j) * cost(i, j);
  }
  r.plan = std::move(tp);
  return r;
}

// ---------------------------------------------------------------------------

double gw_objective(const RelationGraph& s, const RelationGraph& g, const Matrix& plan) {
  double total = 0.0;
  for (const auto& p : s.pairs) {
    for (const auto& q : g.pairs) {
      total += plan(p.a, q.a) * plan(p.b, q.b) * std::abs(p.distance - q.distance);
    }
  }
  return total;
}

Matrix gw_linearized_cost(const RelationGraph& s, const RelationGraph& g, const Matrix& plan) {
  Matrix l(s.node_count, g.node_count);
  for (const auto& p : s.pairs) {
    for (const auto& q : g.pairs) {
      l(p.a, q.a) += plan(p.b, q.b) * std::abs(p.distance - q.distance);
    }
  }
  return l;
}

GwResult gromov_wd(const RelationGraph& s, const RelationGraph& g, std::span<const double> mu,
                   std::span<const double> nu, const GwOptions& opts) {
  if (mu.size() != s.node_count || nu.size() != g.node_count) {
    throw InvalidArgument("gromov_wd: marginal size mismatch");
  }
  for (const auto& p : s.pairs) {
    if (p.a >= s.node_count || p.b >= s.node_count) throw InvalidArgument("gromov_wd: bad pair");
  }
  for (const auto& q : g.pairs) {
    if (q.a >= g.node_count || q.b >= g.node_count) throw InvalidArgument("gromov_wd: bad pair");
  }
  check_simplex(mu, "mu");
  check_simplex(nu, "nu");

  Matrix plan(s.node_count, g.node_count);
  for (std::size_t i = 0; i < s.node_count; ++i) {
    for (std::size_t j = 0; j < g.node_count; ++j) plan(i, j) = mu[i] * nu[j];
  }
  GwResult r;
  double objective = gw_objective(s, g, plan);
  r.objective_trace.push_back(objective);
  std::size_t last_iterations = 0;
  double last_residual = marginal_residual(plan, mu, nu);

  for (std::size_t outer = 0; outer < opts.outer_iter; ++outer) {
    const Matrix lin = gw_linearized_cost(s, g, plan);
    SinkhornOptions inner = opts.inner;
    bool accepted = false;
    for (std::size_t attempt = 0; attempt <= opts.max_backtracks && !accepted; ++attempt) {
      // argmin <2L, T> + eps KL(T | plan)  ==  Sinkhorn on cost 2L - eps log(plan)
      Matrix prox(lin.rows(), lin.cols());
      for (std::size_t i = 0; i < prox.rows(); ++i) {
        for (std::size_t j = 0; j < prox.cols(); ++j) {
          prox(i, j) = 2.0 * lin(i, j) - inner.epsilon * std::log(std::max(plan(i, j), 1e-300));
        }
      }
      OtResult step = sinkhorn_wd(prox, mu, nu, inner);
      const double candidate = gw_objective(s, g, step.plan.plan);
      if (candidate <= objective + 1e-12) {
        accepted = true;
        plan = std::move(step.plan.plan);
        objective = candidate;
        last_iterations = step.plan.iterations;
        last_residual = step.plan.marginal_residual;
        r.inner_residuals.push_back(last_residual);
        r.converged = r.converged && step.plan.converged;
      } else {
        inner.epsilon *= 2.0;
      }
    }
    r.objective_trace.push_back(objective);
    if (!accepted) break;  // stationary up to the backtracking budget
  }

  r.value = objective;
  r.plan.cost = gw_linearized_cost(s, g, plan);
  r.plan.mu.assign(mu.begin(), mu.end());
  r.plan.nu.assign(nu.begin(), nu.end());
  r.plan.plan = std::move(plan);
  r.plan.epsilon = opts.inner.epsilon;
  r.plan.iterations = last_iterations;
  r.plan.marginal_residual = last_residual;
  r.plan.converged = r.converged;
  return r;
}

void gw_distance_gradients(const RelationGraph& s, const RelationGraph& g, const Matrix& plan,
                           std::vector<double>& grad_s, std::vector<double>& grad_g) {
  grad_s.assign(s.pairs.size(), 0.0);
  grad_g.assign(g.pairs.size(), 0.0);
  for (std::size_t a = 0; a < s.pairs.size(); ++a) {
    const auto& p = s.pairs[a];
    for (std::size_t b = 0; b < g.pairs.size(); ++b) {
      const auto& q = g.pairs[b];
      const double diff = p.distance - q.distance;
      if (diff == 0.0) continue;
      const double w = plan(p.a, q.a) * plan(p.b, q.b) * (diff > 0.0 ? 1.0 : -1.0);
      grad_s[a] += w;
      grad_g[b] -= w;
    }
  }
}

}  // namespace flowcontrast::negsc
