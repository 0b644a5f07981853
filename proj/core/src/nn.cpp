#include "bflm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "bflm/errors.hpp"
#include "bflm/rng.hpp"

namespace bflm {

namespace {
void require(bool cond, const char* msg) {
  if (!cond) throw ContractViolation(msg);
}
}  // namespace

void matvec(const Tensor& W, std::span<const double> x, std::span<double> y) {
  require(W.rank() == 2, "matvec: W must be rank 2");
  const std::size_t rows = W.dim(0), cols = W.dim(1);
  require(x.size() == cols && y.size() == rows, "matvec: shape mismatch");
  const double* w = W.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* wr = w + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += wr[j] * x[j];
    y[i] = acc;
  }
}

Tensor matvec(const Tensor& W, const Tensor& x) {
  require(W.rank() == 2 && x.rank() == 1, "matvec: need matrix and vector");
  Tensor y({W.dim(0)});
  matvec(W, x.flat(), y.flat());
  return y;
}

void matvec_add(const Tensor& W, std::span<const double> x, std::span<double> y) {
  const std::size_t rows = W.dim(0), cols = W.dim(1);
  require(x.size() == cols && y.size() == rows, "matvec_add: shape mismatch");
  const double* w = W.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* wr = w + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += wr[j] * x[j];
    y[i] += acc;
  }
}

void matvec_t_add(const Tensor& W, std::span<const double> d, std::span<double> y) {
  const std::size_t rows = W.dim(0), cols = W.dim(1);
  require(d.size() == rows && y.size() == cols, "matvec_t_add: shape mismatch");
  const double* w = W.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double di = d[i];
    if (di == 0.0) continue;
    const double* wr = w + i * cols;
    for (std::size_t j = 0; j < cols; ++j) y[j] += di * wr[j];
  }
}

void outer_add(Tensor& A, std::span<const double> d, std::span<const double> x) {
  const std::size_t rows = A.dim(0), cols = A.dim(1);
  require(d.size() == rows && x.size() == cols, "outer_add: shape mismatch");
  double* a = A.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double di = d[i];
    if (di == 0.0) continue;
    double* ar = a + i * cols;
    for (std::size_t j = 0; j < cols; ++j) ar[j] += di * x[j];
  }
}

void axpy(double scale, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += scale * x[i];
}

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

void softmax_inplace(std::span<double> z) {
  require(!z.empty(), "softmax: empty input");
  double m = z[0];
  for (double v : z) {
    require(std::isfinite(v), "softmax: non-finite input");
    m = std::max(m, v);
  }
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

Tensor softmax(const Tensor& z) {
  Tensor out = z;
  softmax_inplace(out.flat());
  return out;
}

double cross_entropy(const Tensor& p, int target) {
  require(target >= 0 && static_cast<std::size_t>(target) < p.size(),
          "cross_entropy: target out of range");
  const double pt = p[static_cast<std::size_t>(target)];
  if (pt <= 0.0) return std::numeric_limits<double>::infinity();
  return -std::log(pt);
}

double log_sum_exp(std::span<const double> vals) {
  require(!vals.empty(), "log_sum_exp: empty input");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : vals) m = std::max(m, v);
  if (!std::isfinite(m)) return m;  // all -inf (or an inf dominates)
  double sum = 0.0;
  for (double v : vals) sum += std::exp(v - m);
  return m + std::log(sum);
}

void clip_span(std::span<double> g, double c) {
  for (double& v : g) v = std::clamp(v, -c, c);
}

void clip_elementwise(ParamStore& store, double c) {
  require(c > 0.0, "clip: threshold must be positive");
  for (std::size_t i = 0; i < store.size(); ++i) clip_span(store.grad(i).flat(), c);
}

GradCheckResult finite_diff_check(const std::function<double()>& loss, ParamStore& store,
                                  double eps, std::size_t samples, std::uint64_t seed) {
  require(eps > 0.0, "finite_diff_check: eps must be positive");

  std::vector<std::pair<std::size_t, std::size_t>> coords;  // (entry, flat)
  for (std::size_t e = 0; e < store.size(); ++e)
    for (std::size_t k = 0; k < store.value(e).size(); ++k) coords.emplace_back(e, k);

  if (samples != 0 && samples < coords.size()) {
    DetRng rng(seed);
    rng.shuffle(coords);
    coords.resize(samples);
  }

  GradCheckResult result;
  for (auto [e, k] : coords) {
    Tensor& value = store.value(e);
    const double saved = value[k];
    value[k] = saved + eps;
    const double up = loss();
    value[k] = saved - eps;
    const double down = loss();
    value[k] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericFault("finite_diff_check: non-finite loss while perturbing " +
                         store.entry(e).name);
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = store.grad(e)[k];
    const double rel =
        std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_param = store.entry(e).name;
      result.worst_flat_index = k;
    }
  }
  return result;
}

}  // namespace bflm
