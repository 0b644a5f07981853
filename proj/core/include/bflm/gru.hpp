#pragma once

#include <span>
#include <string>

#include "bflm/param_store.hpp"
#include "bflm/tensor.hpp"

namespace bflm {

// Per-step activations retained for backpropagation.
struct GruStepCache {
  Tensor x;       // input vector fed to the step
  Tensor h_prev;  // previous hidden state
  Tensor r, z, hbar, h;
};

// Gated recurrent unit:
//   r = sigma(W_r x + U_r h_prev + b_r)
//   z = sigma(W_z x + U_z h_prev + b_z)
//   hbar = tanh(W_x x + U_x (r . h_prev) + b_x)
//   h = (1 - z) . h_prev + z . hbar
// Parameters live in a ParamStore under "<prefix>.{W_r,U_r,...}"; the cell
// itself only keeps indices, so models stay movable.
class GruCell {
 public:
  GruCell() = default;
  static GruCell create(ParamStore& store, const std::string& prefix, std::size_t input,
                        std::size_t hidden);

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }

  // Computes the next hidden state; fills `cache` when non-null. Raises
  // NumericFault naming the gate if any activation goes non-finite.
  Tensor step(const ParamStore& store, std::span<const double> x, const Tensor& h_prev,
              GruStepCache* cache) const;

  // Accumulates parameter gradients for one step given dL/dh; writes dL/dx
  // into `dx` (overwritten) and dL/dh_prev into `dh_prev` (overwritten).
  void backward(ParamStore& store, const GruStepCache& cache, const Tensor& dh,
                std::span<double> dx, Tensor& dh_prev) const;

 private:
  std::size_t wr_ = 0, ur_ = 0, wz_ = 0, uz_ = 0, wx_ = 0, ux_ = 0;
  std::size_t br_ = 0, bz_ = 0, bx_ = 0;
  std::size_t input_ = 0, hidden_ = 0;
};

// Softmax output layer (logits = W h + b) over the vocabulary.
class SoftmaxHead {
 public:
  SoftmaxHead() = default;
  static SoftmaxHead create(ParamStore& store, const std::string& prefix, std::size_t vocab,
                            std::size_t hidden);

  std::size_t vocab_size() const { return vocab_; }

  Tensor logits(const ParamStore& store, const Tensor& h) const;
  Tensor distribution(const ParamStore& store, const Tensor& h) const;

  // Backprop of weight * (-log p[target]): accumulates dW, db and adds the
  // hidden-state gradient into dh_acc.
  void backward(ParamStore& store, const Tensor& h, const Tensor& probs, int target,
                double weight, Tensor& dh_acc) const;

 private:
  std::size_t w_ = 0, b_ = 0;
  std::size_t vocab_ = 0, hidden_ = 0;
};

// Embedding table (rows = vocabulary entries), tagged for sparse updates.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  static EmbeddingTable create(ParamStore& store, const std::string& name, std::size_t vocab,
                               std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t index() const { return idx_; }

  std::span<const double> row(const ParamStore& store, int token) const;
  void add_grad_row(ParamStore& store, int token, std::span<const double> g) const;

 private:
  std::size_t idx_ = 0;
  std::size_t vocab_ = 0, dim_ = 0;
};

}  // namespace bflm
