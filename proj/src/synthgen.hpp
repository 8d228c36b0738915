#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "embeddings.hpp"

namespace vpfa {

struct SynthConfig {
  std::size_t dim = 64;
  std::size_t num_identities = 200;
  std::size_t samples_per_res = 10;
  double sigma_proto = 1.0;
  double sigma_id = 0.3;
  double sigma_res = 0.1;
  // Shift magnitude per LR rate; every entry of `rates` needs one.
  std::map<int, double> shift = {{2, 1.5}};
  std::size_t cameras = 6;
  std::vector<int> rates = {2};
  std::uint64_t seed = 7;
  // When set, the planted direction is drawn from this seed instead of `seed`,
  // so two sets with different data seeds can share one direction.
  std::optional<std::uint64_t> direction_seed;

  void validate() const;
};

// Generative model (all draws from Rng streams derived from the seeds):
//   d   ~ uniform on the unit sphere (normalized Gaussian), one per config
//   p_i ~ N(0, sigma_proto^2 I)                       per identity
//   HR_ij = p_i + e_ij,            e_ij ~ N(0, sigma_id^2 I)
//   LR_ij(r) = HR_ij - shift(r) d + n_ijr,  n ~ N(0, sigma_res^2 I)
// so HR - LR points along +d. Sample j of either resolution gets camera
// j mod cameras. Records are ordered identity-major: HR samples, then LR
// samples for each rate in `rates` order.
EmbeddingSet generate(const SynthConfig& cfg);

std::vector<double> planted_direction(const SynthConfig& cfg);

}  // namespace vpfa
