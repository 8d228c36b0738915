#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "linalg.hpp"

namespace vpfa {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr std::size_t kDefaultInputDim = 3840;
inline constexpr std::size_t kDefaultHiddenDim = 2048;
inline constexpr double kDefaultInitSigma = 1e-3;

// Learnable state of the panning network
//   a1 = ReLU(LN1(W1 z + b1)), a2 = ReLU(LN2(W2 a1 + b2)), a3 = ReLU(LN3(W3 a2 + b3))
//   z' = z + tanh(W4 a3 + b4)
// Weights are row-major (out x in). The same struct doubles as the gradient
// and Adam-moment container.
struct VPParams {
  Matrix w1;
  Vector b1, gamma1, beta1;
  Matrix w2;
  Vector b2, gamma2, beta2;
  Matrix w3;
  Vector b3, gamma3, beta3;
  Matrix w4;
  Vector b4;

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t parameter_count() const;

  // All-zero tensors of the right shapes (gamma included).
  static VPParams zeros(std::size_t input_dim, std::size_t hidden_dim);

  // Visits the 14 tensors in serialization order.
  template <typename F>
  void for_each_tensor(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    visit(*this, f);
  }

  friend bool operator==(const VPParams& a, const VPParams& b);

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    const auto span_of = [](auto& t) { return std::span(t.data(), static_cast<std::size_t>(t.size())); };
    f(span_of(self.w1)); f(span_of(self.b1)); f(span_of(self.gamma1)); f(span_of(self.beta1));
    f(span_of(self.w2)); f(span_of(self.b2)); f(span_of(self.gamma2)); f(span_of(self.beta2));
    f(span_of(self.w3)); f(span_of(self.b3)); f(span_of(self.gamma3)); f(span_of(self.beta3));
    f(span_of(self.w4)); f(span_of(self.b4));
  }
};

std::size_t parameter_count(std::size_t input_dim, std::size_t hidden_dim);

// Weights ~ N(0, sigma^2), biases and beta zero, gamma one.
VPParams init_params(std::size_t input_dim, std::size_t hidden_dim, double sigma, std::uint64_t seed);

// Cached activations for one batch (one row per sample).
struct ForwardTrace {
  struct Block {
    Matrix pre;      // W x + b
    Matrix xhat;     // (pre - mean) * inv_std
    Vector inv_std;  // per row
    Matrix normed;   // gamma * xhat + beta
    Matrix act;      // ReLU(normed)
  };
  Matrix input;
  Block blocks[3];
  Matrix residual;  // tanh(W4 a3 + b4)
  Matrix output;    // input + residual
};

ForwardTrace forward_batch(const VPParams& p, const Matrix& inputs);

// Adds parameter gradients into `grads` and, when requested, writes the
// gradient w.r.t. the inputs (including the identity path).
void backward_batch(const VPParams& p, const ForwardTrace& trace, const Matrix& grad_output,
                    VPParams& grads, Matrix* grad_input = nullptr);

std::vector<double> forward(const VPParams& p, std::span<const double> z, ForwardTrace* trace = nullptr);

struct Gradients {
  VPParams params;
  std::vector<double> input;
};
Gradients backward(const VPParams& p, const ForwardTrace& trace, std::span<const double> grad_output);

std::vector<double> layernorm_forward(std::span<const double> x, std::span<const double> gamma,
                                      std::span<const double> beta, double eps = kLayerNormEps);

void save_params(const VPParams& p, const std::string& path);
VPParams load_params(const std::string& path);

}  // namespace vpfa
