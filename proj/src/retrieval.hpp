#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "embeddings.hpp"
#include "vpnet.hpp"

namespace vpfa {

enum class PanTarget { LowResolution, All };

// Replaces the selected records' vectors with the panned features; labels,
// order and unselected records are untouched.
EmbeddingSet apply_panning(const VPParams& params, const EmbeddingSet& set,
                           PanTarget target = PanTarget::LowResolution);

enum class Metric { Cosine, Euclidean };

const char* to_string(Metric metric);

struct QueryResult {
  std::size_t query_index = 0;
  std::uint32_t identity = 0;
  std::size_t relevant = 0;
  std::size_t first_hit_rank = 0;  // 1-based
  double average_precision = 0.0;
};

struct RetrievalReport {
  Metric metric = Metric::Cosine;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  double mean_ap = 0.0;
  std::size_t num_queries = 0;  // evaluated
  std::size_t skipped = 0;      // no relevant gallery item
  std::vector<QueryResult> per_query;
};

// Ranks the gallery for every query; ties go to the lower gallery index.
// With the camera filter on, gallery items sharing both identity and camera
// with the query are removed from that query's ranking.
RetrievalReport evaluate(const EmbeddingSet& query, const EmbeddingSet& gallery, Metric metric = Metric::Cosine,
                         bool cross_camera_filter = true);

std::string format_report(const RetrievalReport& report);
std::string per_query_csv(const RetrievalReport& report);

struct IdentityDistance {
  std::uint32_t identity = 0;
  double distance = 0.0;
};

// Euclidean distance between per-identity centroids, over identities present
// in both sets (sorted by identity).
std::vector<IdentityDistance> centroid_distances(const EmbeddingSet& a, const EmbeddingSet& b);

struct CentroidRow {
  std::uint32_t identity = 0;
  double before = 0.0;
  double after = 0.0;
  double reduction = 0.0;  // 1 - after/before, 0 when before is 0
};

struct CentroidReport {
  std::vector<CentroidRow> rows;
  double mean_before = 0.0;
  double mean_after = 0.0;
  double mean_reduction = 0.0;  // mean of per-identity reductions
};

CentroidReport centroid_report(const EmbeddingSet& hr, const EmbeddingSet& lr_before, const EmbeddingSet& lr_after);

std::string format_report(const CentroidReport& report);
std::string centroid_csv(const CentroidReport& report);

struct ProjectedPoint {
  std::size_t set_index = 0;
  std::uint32_t identity = 0;
  Resolution resolution;
  double x = 0.0;
  double y = 0.0;
};

// Pools the records of the first `num_identities` sorted IDs (over the union of
// all sets), centers them, and projects onto the top two principal axes. Each
// axis is signed so its first nonzero loading is positive.
std::vector<ProjectedPoint> project_2d(const std::vector<const EmbeddingSet*>& sets, std::size_t num_identities);

std::string projection_csv(const std::vector<ProjectedPoint>& points);

}  // namespace vpfa
