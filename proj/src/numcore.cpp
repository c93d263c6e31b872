#include "flowcontrast/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "flowcontrast/errors.hpp"

namespace flowcontrast::numcore {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw InvalidArgument("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("dot: size mismatch");
  // Four fixed-order partial sums; deterministic and vectorisable.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size(), n4 = n - n % 4;
  for (std::size_t i = 0; i < n4; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (std::size_t i = n4; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void matvec(const Matrix& w, std::span<const double> x, std::span<double> y) {
  if (x.size() != w.cols() || y.size() != w.rows()) {
    throw InvalidArgument("matvec: dimension mismatch");
  }
  for (std::size_t r = 0; r < w.rows(); ++r) y[r] = dot(w.row(r), x);
}

void matvec_t_accumulate(const Matrix& w, std::span<const double> y_grad,
                         std::span<double> x_grad) {
  if (y_grad.size() != w.rows() || x_grad.size() != w.cols()) {
    throw InvalidArgument("matvec_t_accumulate: dimension mismatch");
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    auto wr = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) x_grad[c] += g * wr[c];
  }
}

void outer_accumulate(Matrix& w_grad, std::span<const double> y_grad,
                      std::span<const double> x) {
  if (y_grad.size() != w_grad.rows() || x.size() != w_grad.cols()) {
    throw InvalidArgument("outer_accumulate: dimension mismatch");
  }
  for (std::size_t r = 0; r < w_grad.rows(); ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    auto gr = w_grad.row(r);
    for (std::size_t c = 0; c < w_grad.cols(); ++c) gr[c] += g * x[c];
  }
}

Matrix project_rows(const Matrix& x, const Matrix& w) {
  if (x.cols() != w.cols()) throw InvalidArgument("project_rows: dimension mismatch");
  Matrix out(x.rows(), w.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) matvec(w, x.row(i), out.row(i));
  return out;
}

std::vector<double> softmax(std::span<const double> xs) {
  if (xs.empty()) throw InvalidArgument("softmax: empty input");
  const double mx = *std::max_element(xs.begin(), xs.end());
  std::vector<double> out(xs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i] = std::exp(xs[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> relu(std::span<const double> xs) {
  std::vector<double> out(xs.begin(), xs.end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return out;
}

double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -INFINITY;
  const double mx = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

double Rng::uniform() {
  // 53 random bits -> [0, 1)
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw InvalidArgument("Rng::index: empty range");
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x = 0;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) throw InvalidArgument("sample_without_replacement: k > n");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  // partial Fisher-Yates
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + index(n - i)]);
  }
  pool.resize(k);
  return pool;
}

void glorot_uniform(Matrix& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw InvalidArgument("adam_step: shape mismatch");
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g * g;
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
}

GradReport grad_check(const std::function<double(std::span<const double>)>& loss,
                      std::span<const double> params, std::span<const double> analytic,
                      std::span<const ParamBlock> blocks, double perturbation) {
  if (analytic.size() != params.size()) {
    throw InvalidArgument("grad_check: gradient size does not match parameters");
  }
  if (!(perturbation >= 1e-6 && perturbation <= 1e-4)) {
    throw InvalidArgument("grad_check: perturbation must lie in [1e-6, 1e-4]");
  }
  std::vector<ParamBlock> layout(blocks.begin(), blocks.end());
  if (layout.empty()) layout.push_back({"params", 0, params.size()});

  std::vector<double> p(params.begin(), params.end());
  auto eval = [&](std::size_t i, double shift) {
    const double saved = p[i];
    p[i] = saved + shift;
    const double v = loss(p);
    p[i] = saved;
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "grad_check: non-finite loss when perturbing parameter " << i;
      throw CheckFailed(msg.str(), i);
    }
    return v;
  };

  GradReport report;
  report.perturbation = perturbation;
  report.numeric.assign(p.size(), 0.0);
  const double h = perturbation;
  for (const ParamBlock& block : layout) {
    if (block.offset + block.size > p.size()) {
      throw InvalidArgument("grad_check: block exceeds parameter vector");
    }
    BlockError err{block.name, 0.0, block.offset};
    for (std::size_t i = block.offset; i < block.offset + block.size; ++i) {
      // fourth-order central difference
      const double f2 = eval(i, 2 * h), f1 = eval(i, h);
      const double m1 = eval(i, -h), m2 = eval(i, -2 * h);
      // Differences first so a flat loss gives exactly zero.
      const double numeric = (8 * (f1 - m1) - (f2 - m2)) / (12 * h);
      report.numeric[i] = numeric;
      const double e = relative_error(analytic[i], numeric);
      if (e > err.max_rel_error) {
        err.max_rel_error = e;
        err.worst_index = i;
      }
    }
    report.global_max_rel_error = std::max(report.global_max_rel_error, err.max_rel_error);
    report.blocks.push_back(std::move(err));
  }
  return report;
}

}  // namespace flowcontrast::numcore
