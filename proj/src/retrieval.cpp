#include "retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "error.hpp"
#include "linalg.hpp"

namespace vpfa {

namespace {

using Index = Eigen::Index;

constexpr Index kPanChunk = 512;
constexpr Index kQueryBlock = 256;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Matrix to_matrix(const EmbeddingSet& set) {
  const auto dim = static_cast<Index>(set.dim());
  Matrix m(static_cast<Index>(set.size()), dim);
  for (std::size_t i = 0; i < set.size(); ++i) {
    m.row(static_cast<Index>(i)) = Eigen::Map<const Vector>(set[i].vector.data(), dim);
  }
  return m;
}

void normalize_rows(Matrix& m, const char* which) {
  for (Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n == 0.0) {
      fail(ErrorCode::Numeric, std::string("evaluate: zero-norm ") + which + " vector at row " + std::to_string(r));
    }
    m.row(r) /= n;
  }
}

std::map<std::uint32_t, std::vector<double>> centroids(const EmbeddingSet& set) {
  std::map<std::uint32_t, std::pair<std::vector<double>, std::size_t>> acc;
  for (const auto& rec : set) {
    auto& [sum, count] = acc[rec.identity];
    if (sum.empty()) sum.assign(set.dim(), 0.0);
    for (std::size_t k = 0; k < set.dim(); ++k) sum[k] += rec.vector[k];
    ++count;
  }
  std::map<std::uint32_t, std::vector<double>> out;
  for (auto& [id, entry] : acc) {
    for (auto& x : entry.first) x /= static_cast<double>(entry.second);
    out.emplace(id, std::move(entry.first));
  }
  return out;
}

}  // namespace

const char* to_string(Metric metric) { return metric == Metric::Cosine ? "cosine" : "euclidean"; }

EmbeddingSet apply_panning(const VPParams& params, const EmbeddingSet& set, PanTarget target) {
  if (params.input_dim() != set.dim()) {
    fail(ErrorCode::Dimension, "apply: parameters expect dim " + std::to_string(params.input_dim()) +
                                   ", set has dim " + std::to_string(set.dim()));
  }
  std::vector<EmbeddingRecord> records = set.records();
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (target == PanTarget::All || records[i].resolution.is_lr()) selected.push_back(i);
  }
  const auto dim = static_cast<Index>(set.dim());
  for (std::size_t begin = 0; begin < selected.size(); begin += kPanChunk) {
    const std::size_t end = std::min(selected.size(), begin + static_cast<std::size_t>(kPanChunk));
    Matrix batch(static_cast<Index>(end - begin), dim);
    for (std::size_t i = begin; i < end; ++i) {
      batch.row(static_cast<Index>(i - begin)) = Eigen::Map<const Vector>(records[selected[i]].vector.data(), dim);
    }
    const auto trace = forward_batch(params, batch);
    for (std::size_t i = begin; i < end; ++i) {
      auto& v = records[selected[i]].vector;
      const auto row = trace.output.row(static_cast<Index>(i - begin));
      std::copy(row.data(), row.data() + dim, v.begin());
    }
  }
  return EmbeddingSet(set.dim(), std::move(records), set.source_label());
}

RetrievalReport evaluate(const EmbeddingSet& query, const EmbeddingSet& gallery, Metric metric,
                         bool cross_camera_filter) {
  if (query.dim() != gallery.dim()) fail(ErrorCode::Dimension, "evaluate: query and gallery dims differ");
  if (gallery.empty()) fail(ErrorCode::InsufficientData, "evaluate: empty gallery");

  Matrix g = to_matrix(gallery);
  Vector g_sq;
  if (metric == Metric::Cosine) {
    normalize_rows(g, "gallery");
  } else {
    g_sq = g.rowwise().squaredNorm();
  }

  RetrievalReport report;
  report.metric = metric;
  std::size_t hits1 = 0, hits5 = 0, hits10 = 0;
  double ap_sum = 0.0;
  std::vector<std::size_t> candidates;
  std::vector<double> score(gallery.size());

  for (std::size_t qb = 0; qb < query.size(); qb += kQueryBlock) {
    const std::size_t qe = std::min(query.size(), qb + static_cast<std::size_t>(kQueryBlock));
    Matrix q(static_cast<Index>(qe - qb), g.cols());
    for (std::size_t i = qb; i < qe; ++i) {
      q.row(static_cast<Index>(i - qb)) = Eigen::Map<const Vector>(query[i].vector.data(), g.cols());
    }
    if (metric == Metric::Cosine) normalize_rows(q, "query");
    const Matrix sims = q * g.transpose();

    for (std::size_t i = qb; i < qe; ++i) {
      const auto& rec = query[i];
      const auto row = static_cast<Index>(i - qb);
      // Higher score ranks first for both metrics.
      if (metric == Metric::Cosine) {
        for (std::size_t j = 0; j < gallery.size(); ++j) score[j] = sims(row, static_cast<Index>(j));
      } else {
        const double q_sq = q.row(row).squaredNorm();
        for (std::size_t j = 0; j < gallery.size(); ++j) {
          score[j] = -(q_sq + g_sq[static_cast<Index>(j)] - 2.0 * sims(row, static_cast<Index>(j)));
        }
      }
      candidates.clear();
      std::size_t relevant = 0;
      for (std::size_t j = 0; j < gallery.size(); ++j) {
        const auto& item = gallery[j];
        if (cross_camera_filter && item.identity == rec.identity && item.camera == rec.camera) continue;
        candidates.push_back(j);
        if (item.identity == rec.identity) ++relevant;
      }
      if (relevant == 0) {
        ++report.skipped;
        continue;
      }
      std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        return score[a] > score[b] || (score[a] == score[b] && a < b);
      });
      QueryResult qr;
      qr.query_index = i;
      qr.identity = rec.identity;
      qr.relevant = relevant;
      std::size_t found = 0;
      double precision_sum = 0.0;
      for (std::size_t rank = 0; rank < candidates.size() && found < relevant; ++rank) {
        if (gallery[candidates[rank]].identity != rec.identity) continue;
        ++found;
        if (found == 1) qr.first_hit_rank = rank + 1;
        precision_sum += static_cast<double>(found) / static_cast<double>(rank + 1);
      }
      qr.average_precision = precision_sum / static_cast<double>(relevant);
      hits1 += qr.first_hit_rank <= 1;
      hits5 += qr.first_hit_rank <= 5;
      hits10 += qr.first_hit_rank <= 10;
      ap_sum += qr.average_precision;
      report.per_query.push_back(qr);
    }
  }
  report.num_queries = report.per_query.size();
  if (report.num_queries == 0) {
    fail(ErrorCode::InsufficientData, "evaluate: every query lacks a relevant gallery item");
  }
  const double n = static_cast<double>(report.num_queries);
  report.rank1 = static_cast<double>(hits1) / n;
  report.rank5 = static_cast<double>(hits5) / n;
  report.rank10 = static_cast<double>(hits10) / n;
  report.mean_ap = ap_sum / n;
  return report;
}

std::string format_report(const RetrievalReport& report) {
  std::string out;
  out += "metric: " + std::string(to_string(report.metric)) + "\n";
  out += "queries: " + std::to_string(report.num_queries) + "\n";
  out += "skipped_queries: " + std::to_string(report.skipped) + "\n";
  out += "rank1: " + num(report.rank1) + "\n";
  out += "rank5: " + num(report.rank5) + "\n";
  out += "rank10: " + num(report.rank10) + "\n";
  out += "mAP: " + num(report.mean_ap) + "\n";
  return out;
}

std::string per_query_csv(const RetrievalReport& report) {
  std::string out = "query_index,identity,relevant,first_hit_rank,average_precision\n";
  for (const auto& q : report.per_query) {
    out += std::to_string(q.query_index) + "," + std::to_string(q.identity) + "," + std::to_string(q.relevant) +
           "," + std::to_string(q.first_hit_rank) + "," + num(q.average_precision) + "\n";
  }
  return out;
}

std::vector<IdentityDistance> centroid_distances(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.dim() != b.dim()) fail(ErrorCode::Dimension, "centroids: set dims differ");
  const auto ca = centroids(a);
  const auto cb = centroids(b);
  std::vector<IdentityDistance> out;
  for (const auto& [id, va] : ca) {
    const auto it = cb.find(id);
    if (it == cb.end()) continue;
    double d2 = 0.0;
    for (std::size_t k = 0; k < va.size(); ++k) d2 += (va[k] - it->second[k]) * (va[k] - it->second[k]);
    out.push_back({id, std::sqrt(d2)});
  }
  if (out.empty()) fail(ErrorCode::InsufficientData, "centroids: sets share no identities");
  return out;
}

CentroidReport centroid_report(const EmbeddingSet& hr, const EmbeddingSet& lr_before, const EmbeddingSet& lr_after) {
  const auto before = centroid_distances(hr, lr_before);
  const auto after = centroid_distances(hr, lr_after);
  std::map<std::uint32_t, double> after_by_id;
  for (const auto& d : after) after_by_id[d.identity] = d.distance;

  CentroidReport report;
  for (const auto& d : before) {
    const auto it = after_by_id.find(d.identity);
    if (it == after_by_id.end()) continue;
    CentroidRow row{d.identity, d.distance, it->second, 0.0};
    if (row.before > 0.0) row.reduction = 1.0 - row.after / row.before;
    report.rows.push_back(row);
  }
  if (report.rows.empty()) fail(ErrorCode::InsufficientData, "centroids: no identity present in all three sets");
  for (const auto& row : report.rows) {
    report.mean_before += row.before;
    report.mean_after += row.after;
    report.mean_reduction += row.reduction;
  }
  const double n = static_cast<double>(report.rows.size());
  report.mean_before /= n;
  report.mean_after /= n;
  report.mean_reduction /= n;
  return report;
}

std::string format_report(const CentroidReport& report) {
  std::string out;
  out += "identities: " + std::to_string(report.rows.size()) + "\n";
  out += "mean_distance_before: " + num(report.mean_before) + "\n";
  out += "mean_distance_after: " + num(report.mean_after) + "\n";
  out += "mean_reduction: " + num(report.mean_reduction) + "\n";
  return out;
}

std::string centroid_csv(const CentroidReport& report) {
  std::string out = "identity,distance_before,distance_after,reduction\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.identity) + "," + num(r.before) + "," + num(r.after) + "," + num(r.reduction) + "\n";
  }
  return out;
}

std::vector<ProjectedPoint> project_2d(const std::vector<const EmbeddingSet*>& sets, std::size_t num_identities) {
  if (sets.empty()) fail(ErrorCode::InvalidArgument, "project: no input sets");
  const std::size_t dim = sets.front()->dim();
  std::set<std::uint32_t> all_ids;
  for (const auto* s : sets) {
    if (s->dim() != dim) fail(ErrorCode::Dimension, "project: set dims differ");
    for (const auto& rec : *s) all_ids.insert(rec.identity);
  }
  std::set<std::uint32_t> chosen;
  for (auto id : all_ids) {
    if (chosen.size() == num_identities) break;
    chosen.insert(id);
  }

  std::vector<ProjectedPoint> points;
  std::vector<const std::vector<double>*> vectors;
  for (std::size_t si = 0; si < sets.size(); ++si) {
    for (const auto& rec : *sets[si]) {
      if (!chosen.count(rec.identity)) continue;
      points.push_back({si, rec.identity, rec.resolution, 0.0, 0.0});
      vectors.push_back(&rec.vector);
    }
  }
  if (points.size() < 2) fail(ErrorCode::InsufficientData, "project: need at least two records");

  Matrix x(static_cast<Index>(points.size()), static_cast<Index>(dim));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    x.row(static_cast<Index>(i)) = Eigen::Map<const Vector>(vectors[i]->data(), static_cast<Index>(dim));
  }
  x = x.rowwise() - x.colwise().mean();
  if (dim < 2) fail(ErrorCode::InsufficientData, "project: data has rank < 2");
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() < 2 || !(s[1] > s[0] * 1e-12)) fail(ErrorCode::InsufficientData, "project: data has rank < 2");

  Matrix axes = svd.matrixV().leftCols(2);
  for (Index c = 0; c < 2; ++c) {
    const double cutoff = axes.col(c).cwiseAbs().maxCoeff() * 1e-12;
    for (Index r = 0; r < axes.rows(); ++r) {
      if (std::abs(axes(r, c)) > cutoff) {
        if (axes(r, c) < 0) axes.col(c) *= -1.0;
        break;
      }
    }
  }
  const Matrix coords = x * axes;
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i].x = coords(static_cast<Index>(i), 0);
    points[i].y = coords(static_cast<Index>(i), 1);
  }
  return points;
}

std::string projection_csv(const std::vector<ProjectedPoint>& points) {
  std::string out = "set,identity,resolution,x,y\n";
  char buf[64];
  for (const auto& p : points) {
    out += std::to_string(p.set_index) + "," + std::to_string(p.identity) + "," + p.resolution.to_string();
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", p.x, p.y);
    out += buf;
  }
  return out;
}

}  // namespace vpfa
