#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "embeddings.hpp"
#include "linalg.hpp"

namespace vpfa {

double cosine(std::span<const double> a, std::span<const double> b);
// Sample Pearson correlation, clamped to [-1, 1].
double pearson(std::span<const double> a, std::span<const double> b);

struct SplitCosineEntry {
  int rate = 0;
  double cosine = 0.0;
  std::size_t first_half = 0;
  std::size_t second_half = 0;
};

// Identities holding both HR and LR-at-rate records are split by sorted ID
// (first ceil(K/2) vs rest). Each half averages its per-identity means into
// V_HR and V_LR; the result is cos(V_HR1 - V_LR1, V_HR2 - V_LR2).
SplitCosineEntry split_cosine(const EmbeddingSet& set, int rate);

struct CcaOptions {
  double epsilon = 1e-6;
  // Project both sides onto their leading min(n-1, d) principal components
  // when d > n-1.
  bool reduce_to_rank = true;
};

struct CcaResult {
  std::vector<double> correlations;  // descending, each in [0, 1]
  std::size_t reduced_dim_x = 0;
  std::size_t reduced_dim_y = 0;
};

// Top-k canonical correlations between row-aligned X (n x d1) and Y (n x d2):
// singular values of Cxx^-1/2 Cxy Cyy^-1/2 after ridge eps on both auto-
// covariances. Fails if a regularized block is not positive definite.
CcaResult cca_top_k(const Matrix& x, const Matrix& y, std::size_t k, const CcaOptions& options = {});

enum class CcaRows {
  Sample,    // j-th HR record paired with j-th LR record, per identity
  Identity,  // per-identity mean HR paired with mean LR
};

struct CcaEntry {
  int rate = 0;
  std::array<double, 3> cross_res{};
  std::array<double, 3> random_baseline{};
  double epsilon = 0.0;
  CcaRows rows = CcaRows::Sample;
  std::size_t num_rows = 0;
  std::size_t reduced_dim = 0;
};

CcaEntry cca_with_random_baseline(const EmbeddingSet& set, int rate, const CcaOptions& options,
                                  std::uint64_t seed, CcaRows rows = CcaRows::Sample);

struct PearsonOptions {
  std::size_t num_identities = 50;
  std::size_t group_size = 2;
  double threshold = 0.4;
};

struct PearsonEntry {
  int rate = 0;
  double mean_r = 0.0;
  double std_r = 0.0;  // population standard deviation over groups
  double proportion_above = 0.0;
  std::size_t group_count = 0;
};

PearsonEntry grouped_pearson(const EmbeddingSet& set, int rate, const PearsonOptions& options,
                             std::uint64_t seed);

// Sample-level HR - LR difference vectors of one identity, pairing the j-th HR
// record with the j-th LR-at-rate record; unpaired extras are dropped.
std::vector<std::vector<double>> paired_differences(const EmbeddingSet& set, std::uint32_t identity,
                                                    int rate);

struct StatsReport {
  std::vector<SplitCosineEntry> split_cosine;
  std::vector<CcaEntry> cca;
  std::vector<PearsonEntry> pearson;
};

struct StatsOptions {
  CcaOptions cca;
  CcaRows cca_rows = CcaRows::Sample;
  PearsonOptions pearson;
  std::uint64_t seed = 0;
};

StatsReport run_stats(const EmbeddingSet& set, const std::vector<int>& rates, const StatsOptions& options);

// key: value lines.
std::string format_report(const StatsReport& report);
std::string split_cosine_csv(const StatsReport& report);
std::string cca_csv(const StatsReport& report);
std::string pearson_csv(const StatsReport& report);

}  // namespace vpfa
