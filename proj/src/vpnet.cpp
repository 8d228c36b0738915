#include "vpnet.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace vpfa {

namespace {

constexpr char kParamsMagic[4] = {'V', 'P', 'N', 'P'};
constexpr std::uint32_t kParamsVersion = 1;

using Index = Eigen::Index;

ForwardTrace::Block block_forward(const Matrix& in, const Matrix& w, const Vector& b, const Vector& gamma,
                                  const Vector& beta) {
  ForwardTrace::Block blk;
  blk.pre = in * w.transpose();
  blk.pre.rowwise() += b.transpose();
  const Index rows = blk.pre.rows();
  const double h = static_cast<double>(blk.pre.cols());
  blk.xhat.resize(rows, blk.pre.cols());
  blk.inv_std.resize(rows);
  for (Index r = 0; r < rows; ++r) {
    const auto row = blk.pre.row(r);
    const double mean = row.sum() / h;
    const double var = (row.array() - mean).square().sum() / h;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    blk.inv_std[r] = inv;
    blk.xhat.row(r) = (row.array() - mean) * inv;
  }
  blk.normed = blk.xhat.array().rowwise() * gamma.transpose().array();
  blk.normed.rowwise() += beta.transpose();
  blk.act = blk.normed.cwiseMax(0.0);
  return blk;
}

// Returns d(loss)/d(block input); d(loss)/d(act) comes in through `grad_act`.
Matrix block_backward(const ForwardTrace::Block& blk, const Matrix& in, const Matrix& w, const Vector& gamma,
                      const Matrix& grad_act, Matrix& dw, Vector& db, Vector& dgamma, Vector& dbeta) {
  // ReLU'(0) is taken as 0.
  const Matrix d_normed = (blk.normed.array() > 0.0).select(grad_act, 0.0);
  dgamma += (d_normed.array() * blk.xhat.array()).colwise().sum().transpose().matrix();
  dbeta += d_normed.colwise().sum().transpose();

  const Matrix d_xhat = d_normed.array().rowwise() * gamma.transpose().array();
  const double h = static_cast<double>(d_xhat.cols());
  Matrix d_pre(d_xhat.rows(), d_xhat.cols());
  for (Index r = 0; r < d_xhat.rows(); ++r) {
    const auto g = d_xhat.row(r).array();
    const auto xh = blk.xhat.row(r).array();
    const double mean_g = g.sum() / h;
    const double mean_gx = (g * xh).sum() / h;
    d_pre.row(r) = blk.inv_std[r] * (g - mean_g - xh * mean_gx);
  }
  dw += d_pre.transpose() * in;
  db += d_pre.colwise().sum().transpose();
  return d_pre * w;
}

void check_shapes(const VPParams& p) {
  const Index d = p.w1.cols();
  const Index h = p.w1.rows();
  const bool ok = d > 0 && h > 0 && p.b1.size() == h && p.gamma1.size() == h && p.beta1.size() == h &&
                  p.w2.rows() == h && p.w2.cols() == h && p.b2.size() == h && p.gamma2.size() == h &&
                  p.beta2.size() == h && p.w3.rows() == h && p.w3.cols() == h && p.b3.size() == h &&
                  p.gamma3.size() == h && p.beta3.size() == h && p.w4.rows() == d && p.w4.cols() == h &&
                  p.b4.size() == d;
  if (!ok) fail(ErrorCode::Dimension, "vpnet: inconsistent parameter shapes");
}

}  // namespace

std::size_t parameter_count(std::size_t d, std::size_t h) {
  return h * d + h        // W1, b1
         + 2 * (h * h + h)  // W2, b2, W3, b3
         + d * h + d        // W4, b4
         + 3 * 2 * h;       // LayerNorm gamma, beta
}

std::size_t VPParams::parameter_count() const { return vpfa::parameter_count(input_dim(), hidden_dim()); }

VPParams VPParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  const auto d = static_cast<Index>(input_dim);
  const auto h = static_cast<Index>(hidden_dim);
  VPParams p;
  p.w1 = Matrix::Zero(h, d);
  p.w2 = Matrix::Zero(h, h);
  p.w3 = Matrix::Zero(h, h);
  p.w4 = Matrix::Zero(d, h);
  p.b1 = p.gamma1 = p.beta1 = Vector::Zero(h);
  p.b2 = p.gamma2 = p.beta2 = Vector::Zero(h);
  p.b3 = p.gamma3 = p.beta3 = Vector::Zero(h);
  p.b4 = Vector::Zero(d);
  return p;
}

bool operator==(const VPParams& a, const VPParams& b) {
  if (a.input_dim() != b.input_dim() || a.hidden_dim() != b.hidden_dim()) return false;
  std::vector<std::span<const double>> ta, tb;
  a.for_each_tensor([&](std::span<const double> t) { ta.push_back(t); });
  b.for_each_tensor([&](std::span<const double> t) { tb.push_back(t); });
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].size() != tb[i].size() || !std::equal(ta[i].begin(), ta[i].end(), tb[i].begin())) return false;
  }
  return true;
}

VPParams init_params(std::size_t input_dim, std::size_t hidden_dim, double sigma, std::uint64_t seed) {
  if (input_dim == 0 || hidden_dim == 0) fail(ErrorCode::InvalidArgument, "vpnet: dimensions must be positive");
  if (!(sigma >= 0) || !std::isfinite(sigma)) fail(ErrorCode::InvalidArgument, "vpnet: init sigma must be >= 0");
  VPParams p = VPParams::zeros(input_dim, hidden_dim);
  p.gamma1.setOnes();
  p.gamma2.setOnes();
  p.gamma3.setOnes();
  Rng rng(seed);
  for (Matrix* w : {&p.w1, &p.w2, &p.w3, &p.w4}) {
    for (Index i = 0; i < w->size(); ++i) w->data()[i] = sigma * rng.normal();
  }
  return p;
}

ForwardTrace forward_batch(const VPParams& p, const Matrix& inputs) {
  check_shapes(p);
  if (inputs.cols() != p.w1.cols()) {
    fail(ErrorCode::Dimension, "vpnet: input width " + std::to_string(inputs.cols()) +
                                   " does not match network dim " + std::to_string(p.w1.cols()));
  }
  ForwardTrace t;
  t.input = inputs;
  t.blocks[0] = block_forward(inputs, p.w1, p.b1, p.gamma1, p.beta1);
  t.blocks[1] = block_forward(t.blocks[0].act, p.w2, p.b2, p.gamma2, p.beta2);
  t.blocks[2] = block_forward(t.blocks[1].act, p.w3, p.b3, p.gamma3, p.beta3);
  Matrix gate = t.blocks[2].act * p.w4.transpose();
  gate.rowwise() += p.b4.transpose();
  t.residual = gate.array().tanh();
  t.output = inputs + t.residual;
  return t;
}

void backward_batch(const VPParams& p, const ForwardTrace& trace, const Matrix& grad_output, VPParams& grads,
                    Matrix* grad_input) {
  check_shapes(p);
  check_shapes(grads);
  if (grads.input_dim() != p.input_dim() || grads.hidden_dim() != p.hidden_dim() ||
      trace.output.cols() != p.w1.cols() || trace.blocks[0].pre.cols() != p.w1.rows() ||
      grad_output.rows() != trace.output.rows() || grad_output.cols() != trace.output.cols()) {
    fail(ErrorCode::Dimension, "vpnet: trace or gradient shape does not match parameters");
  }
  const Matrix d_gate = grad_output.array() * (1.0 - trace.residual.array().square());
  grads.w4 += d_gate.transpose() * trace.blocks[2].act;
  grads.b4 += d_gate.colwise().sum().transpose();
  Matrix d_act = d_gate * p.w4;
  d_act = block_backward(trace.blocks[2], trace.blocks[1].act, p.w3, p.gamma3, d_act, grads.w3, grads.b3,
                         grads.gamma3, grads.beta3);
  d_act = block_backward(trace.blocks[1], trace.blocks[0].act, p.w2, p.gamma2, d_act, grads.w2, grads.b2,
                         grads.gamma2, grads.beta2);
  Matrix d_in = block_backward(trace.blocks[0], trace.input, p.w1, p.gamma1, d_act, grads.w1, grads.b1,
                               grads.gamma1, grads.beta1);
  if (grad_input) *grad_input = grad_output + d_in;
}

std::vector<double> forward(const VPParams& p, std::span<const double> z, ForwardTrace* trace) {
  const Matrix in = Eigen::Map<const Matrix>(z.data(), 1, static_cast<Index>(z.size()));
  ForwardTrace t = forward_batch(p, in);
  std::vector<double> out(t.output.data(), t.output.data() + t.output.size());
  if (trace) *trace = std::move(t);
  return out;
}

Gradients backward(const VPParams& p, const ForwardTrace& trace, std::span<const double> grad_output) {
  const Matrix g = Eigen::Map<const Matrix>(grad_output.data(), 1, static_cast<Index>(grad_output.size()));
  Gradients out{VPParams::zeros(p.input_dim(), p.hidden_dim()), {}};
  Matrix gin;
  backward_batch(p, trace, g, out.params, &gin);
  out.input.assign(gin.data(), gin.data() + gin.size());
  return out;
}

std::vector<double> layernorm_forward(std::span<const double> x, std::span<const double> gamma,
                                      std::span<const double> beta, double eps) {
  if (x.empty() || gamma.size() != x.size() || beta.size() != x.size()) {
    fail(ErrorCode::Dimension, "layernorm: gamma/beta length must match input");
  }
  const double h = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= h;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= h;
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gamma[i] * (x[i] - mean) * inv + beta[i];
  return y;
}

void save_params(const VPParams& p, const std::string& path) {
  check_shapes(p);
  binary::Writer w;
  w.bytes(kParamsMagic, 4);
  w.uint<std::uint32_t>(kParamsVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(p.input_dim()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(p.hidden_dim()));
  p.for_each_tensor([&](std::span<const double> t) {
    for (double v : t) w.f64(v);
  });
  binary::write_file(path, w.buffer());
}

VPParams load_params(const std::string& path) {
  const auto buf = binary::read_file(path);
  binary::Reader r(buf, path);
  char magic[4] = {};
  if (buf.size() < 4 || (r.bytes(magic, 4), !std::equal(magic, magic + 4, kParamsMagic))) {
    fail(ErrorCode::Format, path + ": not a parameter file (bad magic)");
  }
  const auto version = r.uint<std::uint32_t>();
  if (version != kParamsVersion) {
    fail(ErrorCode::Format, path + ": unsupported parameter file version " + std::to_string(version));
  }
  const auto d = r.uint<std::uint32_t>();
  const auto h = r.uint<std::uint32_t>();
  if (d == 0 || h == 0) fail(ErrorCode::Format, path + ": zero dimension in header");
  const std::uint64_t expected = 8ULL * parameter_count(d, h);
  if (r.remaining() != expected) {
    fail(ErrorCode::Format, path + ": expected " + std::to_string(expected) + " bytes of tensors, found " +
                                std::to_string(r.remaining()));
  }
  VPParams p = VPParams::zeros(d, h);
  p.for_each_tensor([&](std::span<double> t) {
    for (auto& v : t) {
      v = r.f64();
      if (!std::isfinite(v)) fail(ErrorCode::Numeric, path + ": non-finite parameter at offset " +
                                                          std::to_string(r.offset() - 8));
    }
  });
  return p;
}

}  // namespace vpfa
