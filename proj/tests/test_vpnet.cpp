#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "error.hpp"
#include "rng.hpp"
#include "test_util.hpp"
#include "vpnet.hpp"

using namespace vpfa;

namespace {

// Randomizes every tensor, gamma included, so no gradient path is trivially zero.
VPParams random_params(std::size_t d, std::size_t h, double scale, std::uint64_t seed) {
  auto p = VPParams::zeros(d, h);
  Rng rng(seed);
  p.for_each_tensor([&](std::span<double> t) {
    for (auto& v : t) v = scale * rng.normal();
  });
  p.gamma1.array() += 1.0;
  p.gamma2.array() += 1.0;
  p.gamma3.array() += 1.0;
  return p;
}

double weighted_output(const VPParams& p, const std::vector<double>& z, const std::vector<double>& c) {
  const auto out = forward(p, z);
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += c[i] * out[i];
  return s;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4}); }

// Flattened view of every tensor, in serialization order.
std::vector<double*> flat(VPParams& p) {
  std::vector<double*> out;
  p.for_each_tensor([&](std::span<double> t) {
    for (auto& v : t) out.push_back(&v);
  });
  return out;
}

}  // namespace

TEST_CASE("parameter count") {
  CHECK(parameter_count(3840, 2048) == 24139520);
  CHECK(parameter_count(4, 3) == (3 * 4 + 3 * 3) + 2 * (3 * 3 + 3 * 3) + (4 * 3 + 4));
  CHECK(init_params(10, 7, 0.0, 0).parameter_count() == parameter_count(10, 7));
  std::size_t n = 0;
  init_params(10, 7, 0.0, 0).for_each_tensor([&](std::span<const double> t) { n += t.size(); });
  CHECK(n == parameter_count(10, 7));
}

TEST_CASE("zero-variance init is the identity map") {
  const auto p = init_params(16, 8, 0.0, 3);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const auto z = test::random_vector(rng, 16);
    CHECK(forward(p, z) == z);
  }
}

TEST_CASE("init is deterministic per seed") {
  CHECK(init_params(12, 6, 1e-3, 5) == init_params(12, 6, 1e-3, 5));
  CHECK_FALSE(init_params(12, 6, 1e-3, 5) == init_params(12, 6, 1e-3, 6));
  const auto p = init_params(12, 6, 1e-3, 5);
  CHECK(p.gamma2 == Vector::Ones(6));
  CHECK(p.b3 == Vector::Zero(6));
  CHECK_THROWS_AS(init_params(0, 6, 1e-3, 5), Error);
  CHECK_THROWS_AS(init_params(4, 6, -1.0, 5), Error);
}

TEST_CASE("layer norm") {
  const std::vector<double> one{1, 1}, zero{0, 0};
  const auto y = layernorm_forward(std::vector<double>{1, 3}, one, zero);
  // mean 2, population variance 1
  CHECK(y[0] == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
  const auto c = layernorm_forward(std::vector<double>{5, 5}, one, std::vector<double>{0.5, -0.5});
  CHECK(c[0] == 0.5);
  CHECK(c[1] == -0.5);

  Rng rng(2);
  const auto x = test::random_vector(rng, 8, 3.0);
  const auto g = test::random_vector(rng, 8);
  const auto b = test::random_vector(rng, 8);
  const auto out = layernorm_forward(x, g, b);
  double mean = 0, var = 0;
  for (double v : x) mean += v / 8;
  for (double v : x) var += (v - mean) * (v - mean) / 8;
  for (int i = 0; i < 8; ++i) CHECK(out[i] == doctest::Approx(g[i] * (x[i] - mean) / std::sqrt(var + 1e-5) + b[i]));
  CHECK_THROWS_AS(layernorm_forward(x, std::vector<double>(7, 1.0), b), Error);
}

TEST_CASE("forward pass matches a hand-computed trace") {
  auto p = VPParams::zeros(2, 2);
  p.w1 = p.w2 = p.w3 = p.w4 = Matrix::Identity(2, 2);
  p.gamma1 = p.gamma2 = p.gamma3 = Vector::Ones(2);
  ForwardTrace trace;
  const auto out = forward(p, std::vector<double>{1, -1}, &trace);
  CHECK(out[0] == doctest::Approx(1.761585756257003).epsilon(1e-14));
  CHECK(out[1] == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(trace.blocks[0].act(0, 0) == doctest::Approx(0.9999950000374997).epsilon(1e-14));
  CHECK(trace.blocks[0].act(0, 1) == 0.0);
  CHECK(trace.blocks[1].act(0, 0) == doctest::Approx(0.9999800003999919).epsilon(1e-14));
  CHECK(trace.blocks[2].act(0, 0) == doctest::Approx(0.9999799998000201).epsilon(1e-14));
}

TEST_CASE("residual is bounded by tanh") {
  const auto p = random_params(8, 6, 1.0, 11);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto z = test::random_vector(rng, 8);
    const auto out = forward(p, z);
    for (int k = 0; k < 8; ++k) CHECK(std::abs(out[k] - z[k]) < 1.0);
  }
  // Large weights saturate tanh; the stored residual still never exceeds 1.
  const auto big = random_params(8, 6, 5.0, 11);
  Matrix batch(50, 8);
  for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = 10.0 * rng.normal();
  CHECK(forward_batch(big, batch).residual.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("small init stays close to identity") {
  const auto p = init_params(64, 64, 1e-3, 0);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    auto z = test::random_vector(rng, 64);
    const double n = test::norm(z);
    for (auto& v : z) v /= n;
    auto out = forward(p, z);
    for (int k = 0; k < 64; ++k) out[k] -= z[k];
    CHECK(test::norm(out) < 0.05);
  }
}

TEST_CASE("batched forward equals per-vector forward") {
  const auto p = random_params(6, 5, 0.7, 12);
  Rng rng(5);
  Matrix batch(7, 6);
  for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = rng.normal();
  const auto trace = forward_batch(p, batch);
  for (Eigen::Index r = 0; r < 7; ++r) {
    const std::vector<double> z(batch.row(r).data(), batch.row(r).data() + 6);
    const auto out = forward(p, z);
    for (int k = 0; k < 6; ++k) CHECK(trace.output(r, k) == doctest::Approx(out[k]).epsilon(1e-13));
  }
  CHECK_THROWS_AS(forward_batch(p, Matrix::Zero(2, 5)), Error);
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  const auto p = random_params(4, 3, 0.5, 13);
  ForwardTrace trace;
  forward(p, std::vector<double>{0.1, 0.2, -0.3, 0.4}, &trace);
  auto g = backward(p, trace, std::vector<double>(4, 0.0));
  for (double* v : flat(g.params)) CHECK(*v == 0.0);
  CHECK(g.input == std::vector<double>(4, 0.0));
}

TEST_CASE("b4 gradient of the squared distance loss") {
  // With sigma = 0 the residual pre-activation is zero, tanh' = 1, so
  // dL/db4 = 2 (z' - t) = 2 (z - t).
  const auto p = init_params(5, 4, 0.0, 0);
  const std::vector<double> z{1, 2, 3, 4, 5}, t{0, 2, 1, 7, 5};
  ForwardTrace trace;
  const auto out = forward(p, z, &trace);
  std::vector<double> go(5);
  for (int k = 0; k < 5; ++k) go[k] = 2 * (out[k] - t[k]);
  const auto g = backward(p, trace, go);
  for (int k = 0; k < 5; ++k) CHECK(g.params.b4[k] == doctest::Approx(2 * (z[k] - t[k])));
  for (int k = 0; k < 5; ++k) CHECK(g.input[k] == doctest::Approx(2 * (z[k] - t[k])));
}

TEST_CASE("gradients match central finite differences") {
  const std::size_t d = 4, h = 3;
  auto p = random_params(d, h, 0.6, 21);
  Rng rng(22);
  const auto z = test::random_vector(rng, d);
  const auto c = test::random_vector(rng, d);
  ForwardTrace trace;
  forward(p, z, &trace);
  auto g = backward(p, trace, c);

  const double step = 1e-6;
  auto params = flat(p);
  auto grads = flat(g.params);
  REQUIRE(params.size() == parameter_count(d, h));
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + step;
    const double up = weighted_output(p, z, c);
    *params[i] = saved - step;
    const double down = weighted_output(p, z, c);
    *params[i] = saved;
    worst = std::max(worst, rel_err(*grads[i], (up - down) / (2 * step)));
  }
  for (std::size_t k = 0; k < d; ++k) {
    auto zp = z, zm = z;
    zp[k] += step;
    zm[k] -= step;
    const double num = (weighted_output(p, zp, c) - weighted_output(p, zm, c)) / (2 * step);
    worst = std::max(worst, rel_err(g.input[k], num));
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-5);
}

TEST_CASE("batched backward accumulates per-sample gradients") {
  const std::size_t d = 4, h = 3;
  const auto p = random_params(d, h, 0.6, 31);
  Rng rng(32);
  Matrix batch(5, d), go(5, d);
  for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < go.size(); ++i) go.data()[i] = rng.normal();
  const auto trace = forward_batch(p, batch);
  auto acc = VPParams::zeros(d, h);
  Matrix gin;
  backward_batch(p, trace, go, acc, &gin);

  auto expect = VPParams::zeros(d, h);
  auto expect_flat = flat(expect);
  for (Eigen::Index r = 0; r < 5; ++r) {
    const std::vector<double> z(batch.row(r).data(), batch.row(r).data() + d);
    const std::vector<double> c(go.row(r).data(), go.row(r).data() + d);
    ForwardTrace t1;
    forward(p, z, &t1);
    auto g = backward(p, t1, c);
    auto gf = flat(g.params);
    for (std::size_t i = 0; i < gf.size(); ++i) *expect_flat[i] += *gf[i];
    for (std::size_t k = 0; k < d; ++k) CHECK(gin(r, k) == doctest::Approx(g.input[k]).epsilon(1e-12));
  }
  auto got = flat(acc);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(*got[i] == doctest::Approx(*expect_flat[i]).epsilon(1e-12));
}

TEST_CASE("parameter file round trip and corruption") {
  const auto p = random_params(7, 5, 0.3, 41);
  const auto path = test::tmp_path("params.vpnp");
  save_params(p, path);
  const auto q = load_params(path);
  CHECK(q == p);
  CHECK(q.input_dim() == 7);
  CHECK(q.hidden_dim() == 5);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  CHECK(bytes.size() == 16 + 8 * parameter_count(7, 5));
  const auto write = [](const std::string& file, const std::string& data) {
    std::ofstream(file, std::ios::binary) << data;
  };

  const auto bad = test::tmp_path("params_bad.vpnp");
  auto corrupt = bytes;
  corrupt[0] = 'X';
  write(bad, corrupt);
  CHECK_THROWS_AS(load_params(bad), Error);

  write(bad, bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_params(bad), Error);

  write(bad, bytes + "x");
  CHECK_THROWS_AS(load_params(bad), Error);

  corrupt = bytes;
  const double nan = std::nan("");
  std::memcpy(corrupt.data() + 16, &nan, 8);
  write(bad, corrupt);
  CHECK_THROWS_AS(load_params(bad), Error);

  CHECK_THROWS_AS(load_params(test::tmp_path("does_not_exist.vpnp")), Error);
  // Loaded parameters refuse inputs of the wrong width.
  CHECK_THROWS_AS(forward(q, std::vector<double>(6, 0.0)), Error);
}
