#include "trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "error.hpp"
#include "rng.hpp"

namespace vpfa {

namespace {

constexpr std::uint64_t kPairSamplingStream = 21;
constexpr std::uint64_t kEpochOrderStream = 22;

struct IdentitySamples {
  std::vector<std::size_t> hr;
  std::vector<std::size_t> lr;
};

bool rate_selected(const std::vector<int>& rates, int rate) {
  return rates.empty() || std::find(rates.begin(), rates.end(), rate) != rates.end();
}

std::map<std::uint32_t, IdentitySamples> samples_by_identity(const EmbeddingSet& set,
                                                             const std::vector<int>& rates) {
  std::map<std::uint32_t, IdentitySamples> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& rec = set[i];
    if (rec.resolution.is_hr()) {
      out[rec.identity].hr.push_back(i);
    } else if (rate_selected(rates, rec.resolution.rate())) {
      out[rec.identity].lr.push_back(i);
    }
  }
  return out;
}

// Mean over records at `indices`, summed in the given order.
std::vector<double> mean_of(const EmbeddingSet& set, std::span<const std::size_t> indices) {
  std::vector<double> m(set.dim(), 0.0);
  for (std::size_t i : indices) {
    const auto& v = set[i].vector;
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += v[k];
  }
  for (auto& x : m) x /= static_cast<double>(indices.size());
  return m;
}

std::vector<double> subset_mean(const EmbeddingSet& set, std::vector<std::size_t> pool, double fraction,
                                Rng& rng) {
  const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pool.size())));
  const std::size_t m = std::min(pool.size(), std::max<std::size_t>(2, want));
  // Partial Fisher-Yates: the first m slots end up a uniform random subset.
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  std::sort(pool.begin(), pool.end());
  return mean_of(set, pool);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) fail(ErrorCode::InvalidArgument, "train: batch size must be positive");
  if (num_pairs == 0) fail(ErrorCode::InvalidArgument, "train: number of pairs must be positive");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    fail(ErrorCode::InvalidArgument, "train: learning rate must be positive");
  }
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) {
    fail(ErrorCode::InvalidArgument, "train: weight decay must be >= 0");
  }
  if (!(bootstrap_fraction > 0 && bootstrap_fraction <= 1)) {
    fail(ErrorCode::InvalidArgument, "train: bootstrap fraction must be in (0, 1]");
  }
}

PairingResult build_prototype_pairs(const EmbeddingSet& set, const std::vector<int>& rates) {
  PairingResult result;
  for (const auto& [id, samples] : samples_by_identity(set, rates)) {
    if (samples.hr.size() < 2 || samples.lr.size() < 2) {
      ++result.skipped;
      continue;
    }
    result.pairs.push_back({id, mean_of(set, samples.lr), mean_of(set, samples.hr)});
  }
  if (result.pairs.empty()) {
    fail(ErrorCode::InsufficientData,
         "pairing: no identity has at least two HR and two LR samples (" + std::to_string(result.skipped) +
             " skipped)");
  }
  return result;
}

std::vector<PrototypePair> sample_training_pairs(const std::vector<PrototypePair>& pairs,
                                                 const EmbeddingSet& set, const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) fail(ErrorCode::InsufficientData, "pairing: no prototype pairs to sample from");
  const auto samples = samples_by_identity(set, cfg.rates);
  std::vector<const IdentitySamples*> pools;
  for (const auto& p : pairs) {
    const auto it = samples.find(p.identity);
    if (it == samples.end()) {
      fail(ErrorCode::InvalidArgument, "pairing: identity " + std::to_string(p.identity) + " not in set");
    }
    pools.push_back(&it->second);
  }

  Rng rng(derive_seed(cfg.seed, kPairSamplingStream));
  std::vector<std::size_t> order(pairs.size());
  std::vector<PrototypePair> out;
  out.reserve(cfg.num_pairs);
  while (out.size() < cfg.num_pairs) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span(order));
    for (std::size_t idx : order) {
      if (out.size() == cfg.num_pairs) break;
      const auto& pool = *pools[idx];
      PrototypePair draw;
      draw.identity = pairs[idx].identity;
      draw.hr_mean = subset_mean(set, pool.hr, cfg.bootstrap_fraction, rng);
      draw.lr_mean = subset_mean(set, pool.lr, cfg.bootstrap_fraction, rng);
      out.push_back(std::move(draw));
    }
  }
  return out;
}

VplResult vpl_loss(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size()) fail(ErrorCode::Dimension, "vpl: length mismatch");
  VplResult r;
  r.grad.resize(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double diff = predicted[i] - target[i];
    r.loss += diff * diff;
    r.grad[i] = 2.0 * diff;
  }
  return r;
}

double law_of_cosines_check(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size()) fail(ErrorCode::Dimension, "law of cosines: length mismatch");
  double rr = 0.0, RR = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    rr += predicted[i] * predicted[i];
    RR += target[i] * target[i];
    dot += predicted[i] * target[i];
  }
  if (rr == 0.0 || RR == 0.0) fail(ErrorCode::Numeric, "law of cosines: zero-norm input");
  const double r = std::sqrt(rr);
  const double R = std::sqrt(RR);
  const double cos_theta = dot / (r * R);
  return std::abs(vpl_loss(predicted, target).loss - (rr + RR - 2.0 * r * R * cos_theta));
}

void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
               std::span<double> v, const AdamConfig& cfg, std::size_t t) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    fail(ErrorCode::Dimension, "adam: state shape does not match parameters");
  }
  if (t == 0) fail(ErrorCode::InvalidArgument, "adam: step index starts at 1");
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + cfg.weight_decay * params[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

AdamState AdamState::for_params(const VPParams& p) {
  return {VPParams::zeros(p.input_dim(), p.hidden_dim()), VPParams::zeros(p.input_dim(), p.hidden_dim()), 0};
}

void adam_step(VPParams& params, const VPParams& grads, AdamState& state, const AdamConfig& cfg) {
  std::vector<std::span<double>> p, m, v;
  std::vector<std::span<const double>> g;
  params.for_each_tensor([&](std::span<double> t) { p.push_back(t); });
  grads.for_each_tensor([&](std::span<const double> t) { g.push_back(t); });
  state.m.for_each_tensor([&](std::span<double> t) { m.push_back(t); });
  state.v.for_each_tensor([&](std::span<double> t) { v.push_back(t); });
  ++state.step;
  for (std::size_t i = 0; i < p.size(); ++i) adam_step(p[i], g[i], m[i], v[i], cfg, state.step);
}

TrainResult train(const EmbeddingSet& set, const NetConfig& net, const TrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto pairing = build_prototype_pairs(set, cfg.rates);
  const auto samples = sample_training_pairs(pairing.pairs, set, cfg);

  TrainResult result;
  result.identities_used = pairing.pairs.size();
  result.identities_skipped = pairing.skipped;
  result.params = init_params(set.dim(), net.hidden_dim, net.init_sigma, net.init_seed);
  auto& params = result.params;

  const auto dim = static_cast<Eigen::Index>(set.dim());
  const AdamConfig adam{cfg.learning_rate, cfg.weight_decay};
  AdamState state = AdamState::for_params(params);
  VPParams grads = VPParams::zeros(params.input_dim(), params.hidden_dim());
  Rng order_rng(derive_seed(cfg.seed, kEpochOrderStream));
  std::vector<std::size_t> order(samples.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const auto rows = static_cast<Eigen::Index>(end - begin);
      Matrix inputs(rows, dim), targets(rows, dim);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& pair = samples[order[begin + static_cast<std::size_t>(r)]];
        inputs.row(r) = Eigen::Map<const Vector>(pair.lr_mean.data(), dim);
        targets.row(r) = Eigen::Map<const Vector>(pair.hr_mean.data(), dim);
      }
      const ForwardTrace trace = forward_batch(params, inputs);
      const Matrix diff = trace.output - targets;
      epoch_loss += diff.array().square().sum();
      // Batch loss is the mean per-pair VPL.
      const Matrix grad_output = diff * (2.0 / static_cast<double>(rows));
      grads.for_each_tensor([](std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
      backward_batch(params, trace, grad_output, grads);
      adam_step(params, grads, state, adam);
      ++result.log.steps;
    }
    result.log.epoch_loss.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  result.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string train_log_csv(const TrainLog& log) {
  std::string out = "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, log.epoch_loss[e]);
    out += buf;
  }
  return out;
}

}  // namespace vpfa
