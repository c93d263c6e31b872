#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace flowcontrast::numcore {

/// Row-major dense matrix of doubles. Only the handful of operations the
/// encoder, generator and transport solvers need.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

// y = W x
void matvec(const Matrix& w, std::span<const double> x, std::span<double> y);
// x_grad += W^T y_grad
void matvec_t_accumulate(const Matrix& w, std::span<const double> y_grad,
                         std::span<double> x_grad);
// w_grad += y_grad x^T
void outer_accumulate(Matrix& w_grad, std::span<const double> y_grad,
                      std::span<const double> x);
// rows of the result are W applied to each row of x: out = x W^T
Matrix project_rows(const Matrix& x, const Matrix& w);

std::vector<double> softmax(std::span<const double> xs);
std::vector<double> relu(std::span<const double> xs);
double leaky_relu(double x, double slope);
double log_sum_exp(std::span<const double> xs);

// ---------------------------------------------------------------------------
// Deterministic random numbers. Distributions are derived from raw mt19937_64
// output so sequences are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t index(std::size_t n);  // [0, n)

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::swap(xs[i - 1], xs[index(i)]);
    }
  }

  // k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

void glorot_uniform(Matrix& w, Rng& rng);

// ---------------------------------------------------------------------------
struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg)
      : config(cfg), first_moment(n, 0.0), second_moment(n, 0.0) {}

  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update, in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

// ---------------------------------------------------------------------------
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct BlockError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;  // flat index into the parameter vector
};

struct GradReport {
  std::vector<BlockError> blocks;
  double global_max_rel_error = 0.0;
  double perturbation = 0.0;
  std::vector<double> numeric;  // finite-difference gradient, zero outside checked blocks

  bool passed(double tolerance) const { return global_max_rel_error < tolerance; }
};

double relative_error(double analytic, double numeric);

/// Compares an analytic gradient against fourth-order central differences of
/// `loss`. Blocks partition `params` for reporting; an empty block list means
/// one block named "params".
GradReport grad_check(const std::function<double(std::span<const double>)>& loss,
                      std::span<const double> params, std::span<const double> analytic,
                      std::span<const ParamBlock> blocks, double perturbation = 1e-5);

}  // namespace flowcontrast::numcore
