#include "synthgen.hpp"

#include <cmath>
#include <string>

#include "error.hpp"
#include "rng.hpp"

namespace vpfa {

namespace {

constexpr std::uint64_t kDirectionStream = 1;
constexpr std::uint64_t kDataStream = 2;

}  // namespace

void SynthConfig::validate() const {
  const auto bad = [](const std::string& what) { fail(ErrorCode::InvalidArgument, what); };
  if (dim == 0) bad("synth: dim must be positive");
  if (num_identities == 0) bad("synth: need at least one identity");
  if (samples_per_res < 2) bad("synth: samples per resolution must be >= 2");
  if (cameras == 0) bad("synth: need at least one camera");
  if (cameras > 65536) bad("synth: camera ids must fit in 16 bits");
  if (num_identities > UINT32_MAX) bad("synth: too many identities");
  if (!(sigma_proto >= 0) || !(sigma_id >= 0) || !(sigma_res >= 0)) {
    bad("synth: noise scales must be non-negative");
  }
  for (int rate : rates) {
    Resolution::lr(rate);
    const auto it = shift.find(rate);
    if (it == shift.end()) bad("synth: no shift magnitude for rate " + std::to_string(rate));
    if (!(it->second >= 0) || !std::isfinite(it->second)) {
      bad("synth: shift magnitude for rate " + std::to_string(rate) + " must be >= 0");
    }
  }
}

std::vector<double> planted_direction(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.direction_seed.value_or(cfg.seed), kDirectionStream));
  std::vector<double> d(cfg.dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& x : d) {
      x = rng.normal();
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : d) x *= inv;
  return d;
}

EmbeddingSet generate(const SynthConfig& cfg) {
  const auto d = planted_direction(cfg);
  Rng rng(derive_seed(cfg.seed, kDataStream));
  const std::size_t n = cfg.samples_per_res;

  std::vector<EmbeddingRecord> records;
  records.reserve(cfg.num_identities * n * (1 + cfg.rates.size()));
  std::vector<double> proto(cfg.dim);
  for (std::size_t i = 0; i < cfg.num_identities; ++i) {
    for (auto& x : proto) x = cfg.sigma_proto * rng.normal();
    const std::size_t hr_begin = records.size();
    for (std::size_t j = 0; j < n; ++j) {
      EmbeddingRecord rec;
      rec.identity = static_cast<std::uint32_t>(i);
      rec.camera = static_cast<std::uint16_t>(j % cfg.cameras);
      rec.resolution = Resolution::hr();
      rec.vector.resize(cfg.dim);
      for (std::size_t k = 0; k < cfg.dim; ++k) {
        rec.vector[k] = proto[k] + cfg.sigma_id * rng.normal();
      }
      records.push_back(std::move(rec));
    }
    for (int rate : cfg.rates) {
      const double alpha = cfg.shift.at(rate);
      for (std::size_t j = 0; j < n; ++j) {
        EmbeddingRecord rec = records[hr_begin + j];
        rec.resolution = Resolution::lr(rate);
        for (std::size_t k = 0; k < cfg.dim; ++k) {
          rec.vector[k] = rec.vector[k] - alpha * d[k] + cfg.sigma_res * rng.normal();
        }
        records.push_back(std::move(rec));
      }
    }
  }
  return EmbeddingSet(cfg.dim, std::move(records), "synthetic seed=" + std::to_string(cfg.seed));
}

}  // namespace vpfa
