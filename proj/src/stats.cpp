#include "stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include "error.hpp"
#include "rng.hpp"

namespace vpfa {

namespace {

constexpr std::uint64_t kCcaRandomStream = 11;
constexpr std::uint64_t kPearsonShuffleStream = 12;

struct IdentityMeans {
  std::vector<double> hr;
  std::vector<double> lr;
  std::size_t hr_count = 0;
  std::size_t lr_count = 0;
};

// Per-identity HR and LR-at-rate means, summed in record order. Only
// identities holding both resolutions are returned.
std::map<std::uint32_t, IdentityMeans> identity_means(const EmbeddingSet& set, int rate) {
  std::map<std::uint32_t, IdentityMeans> acc;
  for (const auto& rec : set) {
    const bool is_hr = rec.resolution.is_hr();
    if (!is_hr && rec.resolution.rate() != rate) continue;
    auto& m = acc[rec.identity];
    auto& sum = is_hr ? m.hr : m.lr;
    if (sum.empty()) sum.assign(set.dim(), 0.0);
    for (std::size_t k = 0; k < set.dim(); ++k) sum[k] += rec.vector[k];
    ++(is_hr ? m.hr_count : m.lr_count);
  }
  for (auto it = acc.begin(); it != acc.end();) {
    auto& m = it->second;
    if (m.hr_count == 0 || m.lr_count == 0) {
      it = acc.erase(it);
      continue;
    }
    for (auto& x : m.hr) x /= static_cast<double>(m.hr_count);
    for (auto& x : m.lr) x /= static_cast<double>(m.lr_count);
    ++it;
  }
  return acc;
}

std::string rate_key(int rate) { return "x" + std::to_string(rate); }

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

const char* rows_name(CcaRows rows) { return rows == CcaRows::Sample ? "sample" : "identity"; }

Matrix inverse_sqrt(const Matrix& c, const char* which) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
  if (eig.info() != Eigen::Success) fail(ErrorCode::Numeric, std::string("cca: eigensolver failed on ") + which);
  const auto& w = eig.eigenvalues();
  const double largest = std::max(w.maxCoeff(), 0.0);
  const double floor = largest * static_cast<double>(c.rows()) * std::numeric_limits<double>::epsilon();
  if (!(w.minCoeff() > floor)) {
    fail(ErrorCode::Numeric, std::string("cca: regularized ") + which +
                                 " is singular; use a positive epsilon");
  }
  const Vector inv = w.array().rsqrt();
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

// Leading principal-component scores of centered data, keeping `keep` columns.
Matrix principal_scores(const Matrix& centered, std::size_t keep) {
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU);
  const auto r = static_cast<Eigen::Index>(keep);
  return svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal();
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::Dimension, "cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) fail(ErrorCode::Numeric, "cosine: zero-norm input");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::Dimension, "pearson: length mismatch");
  if (a.size() < 2) fail(ErrorCode::InvalidArgument, "pearson: need at least two values");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) fail(ErrorCode::Numeric, "pearson: zero-variance input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

SplitCosineEntry split_cosine(const EmbeddingSet& set, int rate) {
  const auto means = identity_means(set, rate);
  if (means.size() < 2) {
    fail(ErrorCode::InsufficientData, "split_cosine: need >= 2 identities with HR and LRx" +
                                          std::to_string(rate) + " records, found " +
                                          std::to_string(means.size()));
  }
  const std::size_t first = (means.size() + 1) / 2;
  const std::size_t dim = set.dim();
  std::vector<double> diff[2] = {std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  std::size_t counts[2] = {0, 0};
  std::size_t index = 0;
  for (const auto& [id, m] : means) {
    const int half = index++ < first ? 0 : 1;
    for (std::size_t k = 0; k < dim; ++k) diff[half][k] += m.hr[k] - m.lr[k];
    ++counts[half];
  }
  // mean(HR) - mean(LR) over a half equals the mean of per-identity differences.
  for (int h = 0; h < 2; ++h) {
    for (auto& x : diff[h]) x /= static_cast<double>(counts[h]);
  }
  SplitCosineEntry entry;
  entry.rate = rate;
  entry.first_half = counts[0];
  entry.second_half = counts[1];
  try {
    entry.cosine = cosine(diff[0], diff[1]);
  } catch (const Error&) {
    fail(ErrorCode::Numeric, "split_cosine: zero-norm HR-LR difference vector");
  }
  return entry;
}

CcaResult cca_top_k(const Matrix& x, const Matrix& y, std::size_t k, const CcaOptions& options) {
  const auto n = x.rows();
  if (y.rows() != n) fail(ErrorCode::Dimension, "cca: X and Y must have the same number of rows");
  if (n < 2) fail(ErrorCode::InsufficientData, "cca: need at least two rows");
  if (k == 0) fail(ErrorCode::InvalidArgument, "cca: k must be positive");
  if (!(options.epsilon >= 0)) fail(ErrorCode::InvalidArgument, "cca: epsilon must be >= 0");
  if (!x.allFinite() || !y.allFinite()) fail(ErrorCode::Numeric, "cca: non-finite input");

  Matrix xc = x.rowwise() - x.colwise().mean();
  Matrix yc = y.rowwise() - y.colwise().mean();
  const auto max_rank = static_cast<std::size_t>(n - 1);
  if (options.reduce_to_rank) {
    if (static_cast<std::size_t>(xc.cols()) > max_rank) xc = principal_scores(xc, max_rank);
    if (static_cast<std::size_t>(yc.cols()) > max_rank) yc = principal_scores(yc, max_rank);
  }
  const auto dx = static_cast<std::size_t>(xc.cols());
  const auto dy = static_cast<std::size_t>(yc.cols());
  if (k > std::min(dx, dy)) {
    fail(ErrorCode::InvalidArgument, "cca: k=" + std::to_string(k) + " exceeds min(d1, d2)=" +
                                         std::to_string(std::min(dx, dy)));
  }

  const double scale = 1.0 / static_cast<double>(n - 1);
  Matrix cxx = (xc.transpose() * xc) * scale;
  Matrix cyy = (yc.transpose() * yc) * scale;
  const Matrix cxy = (xc.transpose() * yc) * scale;
  cxx.diagonal().array() += options.epsilon;
  cyy.diagonal().array() += options.epsilon;

  const Matrix whitened = inverse_sqrt(cxx, "Cxx") * cxy * inverse_sqrt(cyy, "Cyy");
  Eigen::BDCSVD<Matrix> svd(whitened);
  const Vector& s = svd.singularValues();

  CcaResult result;
  result.reduced_dim_x = dx;
  result.reduced_dim_y = dy;
  for (std::size_t i = 0; i < k; ++i) {
    result.correlations.push_back(std::clamp(s[static_cast<Eigen::Index>(i)], 0.0, 1.0));
  }
  return result;
}

std::vector<std::vector<double>> paired_differences(const EmbeddingSet& set, std::uint32_t identity,
                                                    int rate) {
  std::vector<const EmbeddingRecord*> hr, lr;
  for (const auto& rec : set) {
    if (rec.identity != identity) continue;
    if (rec.resolution.is_hr()) {
      hr.push_back(&rec);
    } else if (rec.resolution.rate() == rate) {
      lr.push_back(&rec);
    }
  }
  const std::size_t n = std::min(hr.size(), lr.size());
  std::vector<std::vector<double>> out(n, std::vector<double>(set.dim()));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < set.dim(); ++k) out[j][k] = hr[j]->vector[k] - lr[j]->vector[k];
  }
  return out;
}

namespace {

// Row-aligned HR / LR matrices for CCA.
std::pair<Matrix, Matrix> cca_rows(const EmbeddingSet& set, int rate, CcaRows rows) {
  const auto dim = static_cast<Eigen::Index>(set.dim());
  std::vector<const std::vector<double>*> hr_rows, lr_rows;
  std::map<std::uint32_t, IdentityMeans> means;
  if (rows == CcaRows::Identity) {
    means = identity_means(set, rate);
    for (const auto& [id, m] : means) {
      hr_rows.push_back(&m.hr);
      lr_rows.push_back(&m.lr);
    }
  } else {
    std::map<std::uint32_t, std::pair<std::vector<const EmbeddingRecord*>, std::vector<const EmbeddingRecord*>>>
        by_id;
    for (const auto& rec : set) {
      if (rec.resolution.is_hr()) {
        by_id[rec.identity].first.push_back(&rec);
      } else if (rec.resolution.rate() == rate) {
        by_id[rec.identity].second.push_back(&rec);
      }
    }
    for (const auto& [id, pair] : by_id) {
      const std::size_t n = std::min(pair.first.size(), pair.second.size());
      for (std::size_t j = 0; j < n; ++j) {
        hr_rows.push_back(&pair.first[j]->vector);
        lr_rows.push_back(&pair.second[j]->vector);
      }
    }
  }
  Matrix x(static_cast<Eigen::Index>(hr_rows.size()), dim);
  Matrix y(static_cast<Eigen::Index>(lr_rows.size()), dim);
  for (std::size_t i = 0; i < hr_rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Vector>(hr_rows[i]->data(), dim);
    y.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Vector>(lr_rows[i]->data(), dim);
  }
  return {std::move(x), std::move(y)};
}

}  // namespace

CcaEntry cca_with_random_baseline(const EmbeddingSet& set, int rate, const CcaOptions& options,
                                  std::uint64_t seed, CcaRows rows) {
  auto [x, y] = cca_rows(set, rate, rows);
  if (x.rows() < 2) {
    fail(ErrorCode::InsufficientData, "cca: fewer than two paired HR/LRx" + std::to_string(rate) + " rows");
  }
  const auto cross = cca_top_k(x, y, 3, options);

  Rng rng(derive_seed(seed, kCcaRandomStream));
  Matrix rx(x.rows(), x.cols());
  Matrix ry(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < rx.size(); ++i) rx.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < ry.size(); ++i) ry.data()[i] = rng.normal();
  const auto random = cca_top_k(rx, ry, 3, options);

  CcaEntry entry;
  entry.rate = rate;
  entry.epsilon = options.epsilon;
  entry.rows = rows;
  entry.num_rows = static_cast<std::size_t>(x.rows());
  entry.reduced_dim = cross.reduced_dim_x;
  std::copy_n(cross.correlations.begin(), 3, entry.cross_res.begin());
  std::copy_n(random.correlations.begin(), 3, entry.random_baseline.begin());
  return entry;
}

PearsonEntry grouped_pearson(const EmbeddingSet& set, int rate, const PearsonOptions& options,
                             std::uint64_t seed) {
  if (options.group_size == 0) fail(ErrorCode::InvalidArgument, "pearson: group size must be positive");
  const std::size_t dim = set.dim();

  std::vector<std::uint32_t> qualifying;
  std::vector<std::vector<std::vector<double>>> diffs_by_id;
  std::vector<double> global(dim, 0.0);
  std::size_t total = 0;
  for (std::uint32_t id : set.identities()) {
    auto diffs = paired_differences(set, id, rate);
    if (diffs.empty()) continue;
    for (const auto& d : diffs) {
      for (std::size_t k = 0; k < dim; ++k) global[k] += d[k];
    }
    total += diffs.size();
    qualifying.push_back(id);
    diffs_by_id.push_back(std::move(diffs));
  }
  if (qualifying.size() < options.num_identities || options.num_identities == 0) {
    fail(ErrorCode::InsufficientData, "pearson: need " + std::to_string(options.num_identities) +
                                          " identities with paired HR/LRx" + std::to_string(rate) +
                                          " samples, found " + std::to_string(qualifying.size()));
  }
  for (auto& x : global) x /= static_cast<double>(total);

  std::vector<const std::vector<double>*> pool;
  for (std::size_t i = 0; i < options.num_identities; ++i) {
    for (const auto& d : diffs_by_id[i]) pool.push_back(&d);
  }
  Rng rng(derive_seed(seed, kPearsonShuffleStream));
  rng.shuffle(std::span(pool));

  const std::size_t groups = pool.size() / options.group_size;
  if (groups == 0) fail(ErrorCode::InsufficientData, "pearson: not enough difference vectors for one group");
  std::vector<double> rs;
  rs.reserve(groups);
  std::vector<double> mean(dim);
  for (std::size_t g = 0; g < groups; ++g) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t m = 0; m < options.group_size; ++m) {
      const auto& d = *pool[g * options.group_size + m];
      for (std::size_t k = 0; k < dim; ++k) mean[k] += d[k];
    }
    for (auto& x : mean) x /= static_cast<double>(options.group_size);
    rs.push_back(pearson(mean, global));
  }

  PearsonEntry entry;
  entry.rate = rate;
  entry.group_count = groups;
  const double n = static_cast<double>(groups);
  entry.mean_r = std::accumulate(rs.begin(), rs.end(), 0.0) / n;
  double var = 0.0;
  std::size_t above = 0;
  for (double r : rs) {
    var += (r - entry.mean_r) * (r - entry.mean_r);
    if (r > options.threshold) ++above;
  }
  entry.std_r = std::sqrt(var / n);
  entry.proportion_above = static_cast<double>(above) / n;
  return entry;
}

StatsReport run_stats(const EmbeddingSet& set, const std::vector<int>& rates, const StatsOptions& options) {
  StatsReport report;
  for (int rate : rates) {
    report.split_cosine.push_back(split_cosine(set, rate));
    report.cca.push_back(cca_with_random_baseline(set, rate, options.cca, options.seed, options.cca_rows));
    report.pearson.push_back(grouped_pearson(set, rate, options.pearson, options.seed));
  }
  return report;
}

std::string format_report(const StatsReport& report) {
  std::string out;
  const auto line = [&](const std::string& key, const std::string& value) {
    out += key + ": " + value + "\n";
  };
  for (const auto& e : report.split_cosine) {
    const auto p = "split_cosine." + rate_key(e.rate);
    line(p + ".cosine", num(e.cosine));
    line(p + ".half_sizes", std::to_string(e.first_half) + "," + std::to_string(e.second_half));
  }
  for (const auto& e : report.cca) {
    const auto p = "cca." + rate_key(e.rate);
    line(p + ".rows", std::string(rows_name(e.rows)) + " (" + std::to_string(e.num_rows) + ")");
    line(p + ".epsilon", num(e.epsilon));
    line(p + ".reduced_dim", std::to_string(e.reduced_dim));
    line(p + ".cross_res", num(e.cross_res[0]) + "," + num(e.cross_res[1]) + "," + num(e.cross_res[2]));
    line(p + ".random", num(e.random_baseline[0]) + "," + num(e.random_baseline[1]) + "," +
                            num(e.random_baseline[2]));
  }
  for (const auto& e : report.pearson) {
    const auto p = "pearson." + rate_key(e.rate);
    line(p + ".mean_r", num(e.mean_r));
    line(p + ".std_r", num(e.std_r));
    line(p + ".proportion_above_0.4", num(e.proportion_above));
    line(p + ".groups", std::to_string(e.group_count));
  }
  return out;
}

std::string split_cosine_csv(const StatsReport& report) {
  std::string out = "rate,cosine,first_half,second_half\n";
  for (const auto& e : report.split_cosine) {
    out += std::to_string(e.rate) + "," + num(e.cosine) + "," + std::to_string(e.first_half) + "," +
           std::to_string(e.second_half) + "\n";
  }
  return out;
}

std::string cca_csv(const StatsReport& report) {
  std::string out = "rate,rows,epsilon,cross_r1,cross_r2,cross_r3,random_r1,random_r2,random_r3\n";
  for (const auto& e : report.cca) {
    out += std::to_string(e.rate) + "," + rows_name(e.rows) + "," + num(e.epsilon);
    for (double r : e.cross_res) out += "," + num(r);
    for (double r : e.random_baseline) out += "," + num(r);
    out += "\n";
  }
  return out;
}

std::string pearson_csv(const StatsReport& report) {
  std::string out = "rate,mean_r,std_r,proportion_above,groups\n";
  for (const auto& e : report.pearson) {
    out += std::to_string(e.rate) + "," + num(e.mean_r) + "," + num(e.std_r) + "," +
           num(e.proportion_above) + "," + std::to_string(e.group_count) + "\n";
  }
  return out;
}

}  // namespace vpfa
