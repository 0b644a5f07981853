#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "bflm/param_store.hpp"
#include "bflm/tensor.hpp"

namespace bflm {

// y = W x
void matvec(const Tensor& W, std::span<const double> x, std::span<double> y);
Tensor matvec(const Tensor& W, const Tensor& x);
// y += W x
void matvec_add(const Tensor& W, std::span<const double> x, std::span<double> y);
// y += W^T d
void matvec_t_add(const Tensor& W, std::span<const double> d, std::span<double> y);
// A += d x^T
void outer_add(Tensor& A, std::span<const double> d, std::span<const double> x);
// y += a
void axpy(double scale, std::span<const double> x, std::span<double> y);

double sigmoid(double a);

// Numerically stable softmax (max subtraction). Input must be nonempty and
// finite; output is positive and sums to 1.
void softmax_inplace(std::span<double> z);
Tensor softmax(const Tensor& z);

// -log p[target], natural log. p[target] == 0 yields +Inf.
double cross_entropy(const Tensor& p, int target);

double log_sum_exp(std::span<const double> vals);

// Clamp every gradient component of the store to [-c, c].
void clip_elementwise(ParamStore& store, double c);
void clip_span(std::span<double> g, double c);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_flat_index = 0;
};

// Central-difference verification of the gradients currently held in the
// store against the scalar loss function. `samples == 0` checks every
// coordinate; otherwise `samples` coordinates are drawn with `seed`.
// The loss is evaluated with perturbed parameters and must stay finite.
GradCheckResult finite_diff_check(const std::function<double()>& loss, ParamStore& store,
                                  double eps = 1e-5, std::size_t samples = 0,
                                  std::uint64_t seed = 0);

}  // namespace bflm
