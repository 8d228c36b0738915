#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "embeddings.hpp"
#include "vpnet.hpp"

namespace vpfa {

struct PrototypePair {
  std::uint32_t identity = 0;
  std::vector<double> lr_mean;
  std::vector<double> hr_mean;
};

struct PairingResult {
  std::vector<PrototypePair> pairs;  // sorted by identity
  std::size_t skipped = 0;           // identities below the two-sample threshold
};

// One pair of arithmetic means per identity with >= 2 HR and >= 2 LR samples.
// LR samples are pooled over `rates`; an empty list pools every LR rate.
PairingResult build_prototype_pairs(const EmbeddingSet& set, const std::vector<int>& rates = {});

struct TrainConfig {
  std::size_t epochs = 120;
  double learning_rate = 2e-4;
  double weight_decay = 1e-5;
  std::size_t batch_size = 32;
  std::size_t num_pairs = 5000;
  std::uint64_t seed = 0;
  double bootstrap_fraction = 0.5;
  std::vector<int> rates;  // empty: pool all LR rates

  void validate() const;
};

struct NetConfig {
  std::size_t hidden_dim = kDefaultHiddenDim;
  double init_sigma = kDefaultInitSigma;
  std::uint64_t init_seed = 0;
};

// Cycles through seeded reshuffles of the identity list; every draw
// re-averages a random subset (ceil(fraction * count), at least 2) of that
// identity's HR samples and, independently, of its LR samples.
std::vector<PrototypePair> sample_training_pairs(const std::vector<PrototypePair>& pairs,
                                                 const EmbeddingSet& set, const TrainConfig& cfg);

struct VplResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d predicted
};

// Squared Euclidean distance (summed, not averaged over dimensions).
VplResult vpl_loss(std::span<const double> predicted, std::span<const double> target);

// |d^2 - (r^2 + R^2 - 2 r R cos(theta))| for the pair; exposes the
// magnitude/angle decomposition of the loss for checking.
double law_of_cosines_check(std::span<const double> predicted, std::span<const double> target);

struct AdamConfig {
  double learning_rate = 2e-4;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with L2-coupled weight decay (g += wd * theta) at step t >= 1.
void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
               std::span<double> v, const AdamConfig& cfg, std::size_t t);

struct AdamState {
  VPParams m;
  VPParams v;
  std::size_t step = 0;

  static AdamState for_params(const VPParams& p);
};

void adam_step(VPParams& params, const VPParams& grads, AdamState& state, const AdamConfig& cfg);

struct TrainLog {
  std::vector<double> epoch_loss;  // mean per-pair VPL over each epoch
  double wall_seconds = 0.0;
  std::size_t steps = 0;
};

struct TrainResult {
  VPParams params;
  TrainLog log;
  std::size_t identities_used = 0;
  std::size_t identities_skipped = 0;
};

TrainResult train(const EmbeddingSet& set, const NetConfig& net, const TrainConfig& cfg);

std::string train_log_csv(const TrainLog& log);

}  // namespace vpfa
