#include "vpfa/vpfa.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "embeddings.hpp"
#include "error.hpp"
#include "retrieval.hpp"
#include "stats.hpp"
#include "synthgen.hpp"
#include "trainer.hpp"
#include "vpnet.hpp"

struct vpfa_set {
  vpfa::EmbeddingSet set;
};
struct vpfa_params {
  vpfa::VPParams params;
};
struct vpfa_eval {
  vpfa::RetrievalReport report;
};
struct vpfa_centroids {
  vpfa::CentroidReport report;
};
struct vpfa_projection {
  std::vector<vpfa::ProjectedPoint> points;
};

namespace {

thread_local std::string g_last_error;

vpfa_status to_status(vpfa::ErrorCode code) {
  switch (code) {
    case vpfa::ErrorCode::InvalidArgument: return VPFA_ERR_INVALID_ARGUMENT;
    case vpfa::ErrorCode::Io: return VPFA_ERR_IO;
    case vpfa::ErrorCode::Format: return VPFA_ERR_FORMAT;
    case vpfa::ErrorCode::Dimension: return VPFA_ERR_DIMENSION;
    case vpfa::ErrorCode::Numeric: return VPFA_ERR_NUMERIC;
    case vpfa::ErrorCode::InsufficientData: return VPFA_ERR_INSUFFICIENT_DATA;
  }
  return VPFA_ERR_INTERNAL;
}

template <typename F>
vpfa_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return VPFA_OK;
  } catch (const vpfa::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return VPFA_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return VPFA_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return VPFA_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) vpfa::fail(vpfa::ErrorCode::InvalidArgument, what);
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

char* dup_or_null(const std::string& s) {
  try {
    return dup_string(s);
  } catch (...) {
    return nullptr;
  }
}

vpfa::FileFormat to_format(vpfa_format format) {
  switch (format) {
    case VPFA_FORMAT_CSV: return vpfa::FileFormat::Csv;
    case VPFA_FORMAT_BINARY: return vpfa::FileFormat::Binary;
    default: vpfa::fail(vpfa::ErrorCode::InvalidArgument, "unknown file format");
  }
}

vpfa::SynthConfig to_synth(const vpfa_synth_config* c) {
  require(c != nullptr, "null synth config");
  require(c->num_rates == 0 || (c->rates && c->shifts), "synth config: rates/shifts missing");
  vpfa::SynthConfig cfg;
  cfg.dim = c->dim;
  cfg.num_identities = c->num_identities;
  cfg.samples_per_res = c->samples_per_res;
  cfg.cameras = c->cameras;
  cfg.sigma_proto = c->sigma_proto;
  cfg.sigma_id = c->sigma_id;
  cfg.sigma_res = c->sigma_res;
  cfg.rates.assign(c->rates, c->rates + c->num_rates);
  cfg.shift.clear();
  for (std::size_t i = 0; i < c->num_rates; ++i) cfg.shift[c->rates[i]] = c->shifts[i];
  cfg.seed = c->seed;
  if (c->has_direction_seed) cfg.direction_seed = c->direction_seed;
  return cfg;
}

vpfa::StatsOptions to_stats(const vpfa_stats_options* o) {
  require(o != nullptr, "null stats options");
  vpfa::StatsOptions opts;
  opts.cca.epsilon = o->cca_epsilon;
  opts.cca.reduce_to_rank = o->cca_reduce_to_rank != 0;
  opts.cca_rows = o->cca_rows == VPFA_CCA_ROWS_IDENTITY ? vpfa::CcaRows::Identity : vpfa::CcaRows::Sample;
  opts.pearson.num_identities = o->pearson_identities;
  opts.pearson.group_size = o->group_size;
  opts.seed = o->seed;
  return opts;
}

}  // namespace

extern "C" {

const char* vpfa_version(void) { return "1.0.0"; }

const char* vpfa_last_error(void) { return g_last_error.c_str(); }

void vpfa_string_free(char* s) { std::free(s); }

vpfa_status vpfa_set_load(const char* path, vpfa_format format, vpfa_set** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = nullptr;
    auto set = format == VPFA_FORMAT_AUTO ? vpfa::load_set(path) : vpfa::load_set(path, to_format(format));
    *out = new vpfa_set{std::move(set)};
  });
}

vpfa_status vpfa_set_save(const vpfa_set* set, const char* path, vpfa_format format) {
  return guarded([&] {
    require(set && path, "null argument");
    vpfa::save_set(set->set, path, to_format(format));
  });
}

void vpfa_set_free(vpfa_set* set) { delete set; }

size_t vpfa_set_size(const vpfa_set* set) { return set ? set->set.size() : 0; }

size_t vpfa_set_dim(const vpfa_set* set) { return set ? set->set.dim() : 0; }

vpfa_status vpfa_set_record(const vpfa_set* set, size_t index, vpfa_record_info* info, const double** vector) {
  return guarded([&] {
    require(set != nullptr, "null set");
    require(index < set->set.size(), "record index out of range");
    const auto& rec = set->set[index];
    if (info) *info = {rec.identity, rec.camera, rec.resolution.code()};
    if (vector) *vector = rec.vector.data();
  });
}

size_t vpfa_set_lr_rates(const vpfa_set* set, int* rates, size_t cap) {
  if (!set) return 0;
  const auto found = set->set.lr_rates();
  for (std::size_t i = 0; i < found.size() && i < cap && rates; ++i) rates[i] = found[i];
  return found.size();
}

vpfa_status vpfa_set_select(const vpfa_set* set, int resolution, vpfa_set** out) {
  return guarded([&] {
    require(set && out, "null argument");
    *out = nullptr;
    auto selected = vpfa::partition(set->set, [resolution](const vpfa::EmbeddingRecord& r) {
      if (resolution == VPFA_SELECT_HR) return r.resolution.is_hr();
      if (resolution == VPFA_SELECT_ANY_LR) return r.resolution.is_lr();
      return r.resolution.rate() == resolution;
    });
    *out = new vpfa_set{std::move(selected)};
  });
}

vpfa_status vpfa_set_half(const vpfa_set* set, int first_half, vpfa_set** out) {
  return guarded([&] {
    require(set && out, "null argument");
    *out = nullptr;
    const auto half = vpfa::first_half(set->set.identities());
    const std::uint32_t last = half.empty() ? 0 : half.back();
    const bool want_first = first_half != 0;
    auto selected = vpfa::partition(set->set, [&](const vpfa::EmbeddingRecord& r) {
      const bool in_first = !half.empty() && r.identity <= last;
      return in_first == want_first;
    });
    *out = new vpfa_set{std::move(selected)};
  });
}

int vpfa_set_equal(const vpfa_set* a, const vpfa_set* b) {
  if (!a || !b) return 0;
  return a->set.same_content(b->set) ? 1 : 0;
}

vpfa_synth_config vpfa_synth_config_default(void) {
  const vpfa::SynthConfig d;
  vpfa_synth_config c{};
  c.dim = d.dim;
  c.num_identities = d.num_identities;
  c.samples_per_res = d.samples_per_res;
  c.cameras = d.cameras;
  c.sigma_proto = d.sigma_proto;
  c.sigma_id = d.sigma_id;
  c.sigma_res = d.sigma_res;
  c.seed = d.seed;
  return c;
}

vpfa_status vpfa_synth_generate(const vpfa_synth_config* config, vpfa_set** out) {
  return guarded([&] {
    require(out != nullptr, "null output");
    *out = nullptr;
    *out = new vpfa_set{vpfa::generate(to_synth(config))};
  });
}

vpfa_status vpfa_synth_planted_direction(const vpfa_synth_config* config, double* out, size_t len) {
  return guarded([&] {
    require(out != nullptr, "null output");
    const auto d = vpfa::planted_direction(to_synth(config));
    if (len != d.size()) vpfa::fail(vpfa::ErrorCode::Dimension, "direction buffer length must equal dim");
    std::copy(d.begin(), d.end(), out);
  });
}

vpfa_stats_options vpfa_stats_options_default(void) {
  const vpfa::StatsOptions d;
  return {d.cca.epsilon, d.cca.reduce_to_rank ? 1 : 0, VPFA_CCA_ROWS_SAMPLE, d.pearson.num_identities,
          d.pearson.group_size, d.seed};
}

vpfa_status vpfa_stats_split_cosine(const vpfa_set* set, int rate, vpfa_split_cosine_result* out) {
  return guarded([&] {
    require(set && out, "null argument");
    const auto e = vpfa::split_cosine(set->set, rate);
    *out = {e.cosine, e.first_half, e.second_half};
  });
}

vpfa_status vpfa_stats_cca(const vpfa_set* set, int rate, const vpfa_stats_options* options,
                           vpfa_cca_result* out) {
  return guarded([&] {
    require(set && out, "null argument");
    const auto opts = to_stats(options);
    const auto e = vpfa::cca_with_random_baseline(set->set, rate, opts.cca, opts.seed, opts.cca_rows);
    for (int i = 0; i < 3; ++i) {
      out->cross_res[i] = e.cross_res[static_cast<std::size_t>(i)];
      out->random_baseline[i] = e.random_baseline[static_cast<std::size_t>(i)];
    }
    out->epsilon = e.epsilon;
    out->num_rows = e.num_rows;
    out->reduced_dim = e.reduced_dim;
  });
}

vpfa_status vpfa_stats_grouped_pearson(const vpfa_set* set, int rate, const vpfa_stats_options* options,
                                       vpfa_pearson_result* out) {
  return guarded([&] {
    require(set && out, "null argument");
    const auto opts = to_stats(options);
    const auto e = vpfa::grouped_pearson(set->set, rate, opts.pearson, opts.seed);
    *out = {e.mean_r, e.std_r, e.proportion_above, e.group_count};
  });
}

vpfa_status vpfa_stats_report(const vpfa_set* set, const int* rates, size_t num_rates,
                              const vpfa_stats_options* options, char** report, char** split_csv, char** cca_csv,
                              char** pearson_csv) {
  return guarded([&] {
    require(set && report && (rates || num_rates == 0), "null argument");
    const auto r = vpfa::run_stats(set->set, std::vector<int>(rates, rates + num_rates), to_stats(options));
    *report = dup_string(vpfa::format_report(r));
    if (split_csv) *split_csv = dup_string(vpfa::split_cosine_csv(r));
    if (cca_csv) *cca_csv = dup_string(vpfa::cca_csv(r));
    if (pearson_csv) *pearson_csv = dup_string(vpfa::pearson_csv(r));
  });
}

vpfa_status vpfa_params_init(size_t dim, size_t hidden, double sigma, uint64_t seed, vpfa_params** out) {
  return guarded([&] {
    require(out != nullptr, "null output");
    *out = nullptr;
    *out = new vpfa_params{vpfa::init_params(dim, hidden, sigma, seed)};
  });
}

vpfa_status vpfa_params_load(const char* path, vpfa_params** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = nullptr;
    *out = new vpfa_params{vpfa::load_params(path)};
  });
}

vpfa_status vpfa_params_save(const vpfa_params* params, const char* path) {
  return guarded([&] {
    require(params && path, "null argument");
    vpfa::save_params(params->params, path);
  });
}

void vpfa_params_free(vpfa_params* params) { delete params; }

size_t vpfa_params_dim(const vpfa_params* params) { return params ? params->params.input_dim() : 0; }

size_t vpfa_params_hidden(const vpfa_params* params) { return params ? params->params.hidden_dim() : 0; }

size_t vpfa_params_count(const vpfa_params* params) { return params ? params->params.parameter_count() : 0; }

size_t vpfa_parameter_count(size_t dim, size_t hidden) { return vpfa::parameter_count(dim, hidden); }

vpfa_status vpfa_params_forward(const vpfa_params* params, const double* z, double* out, size_t len) {
  return guarded([&] {
    require(params && z && out, "null argument");
    const auto y = vpfa::forward(params->params, std::span<const double>(z, len));
    std::copy(y.begin(), y.end(), out);
  });
}

vpfa_train_config vpfa_train_config_default(void) {
  const vpfa::TrainConfig t;
  const vpfa::NetConfig n;
  vpfa_train_config c{};
  c.hidden = n.hidden_dim;
  c.init_sigma = n.init_sigma;
  c.init_seed = n.init_seed;
  c.epochs = t.epochs;
  c.learning_rate = t.learning_rate;
  c.weight_decay = t.weight_decay;
  c.batch_size = t.batch_size;
  c.num_pairs = t.num_pairs;
  c.seed = t.seed;
  c.bootstrap_fraction = t.bootstrap_fraction;
  return c;
}

vpfa_status vpfa_train(const vpfa_set* set, const vpfa_train_config* config, vpfa_params** out,
                       double* epoch_loss, vpfa_train_summary* summary) {
  return guarded([&] {
    require(set && config && out, "null argument");
    require(config->num_rates == 0 || config->rates, "train config: rates missing");
    *out = nullptr;
    vpfa::NetConfig net{config->hidden, config->init_sigma, config->init_seed};
    vpfa::TrainConfig cfg;
    cfg.epochs = config->epochs;
    cfg.learning_rate = config->learning_rate;
    cfg.weight_decay = config->weight_decay;
    cfg.batch_size = config->batch_size;
    cfg.num_pairs = config->num_pairs;
    cfg.seed = config->seed;
    cfg.bootstrap_fraction = config->bootstrap_fraction;
    cfg.rates.assign(config->rates, config->rates + config->num_rates);
    auto result = vpfa::train(set->set, net, cfg);
    if (epoch_loss) std::copy(result.log.epoch_loss.begin(), result.log.epoch_loss.end(), epoch_loss);
    if (summary) {
      *summary = {result.identities_used, result.identities_skipped, result.log.steps, result.log.wall_seconds};
    }
    *out = new vpfa_params{std::move(result.params)};
  });
}

vpfa_status vpfa_apply(const vpfa_params* params, const vpfa_set* set, vpfa_pan_target target, vpfa_set** out) {
  return guarded([&] {
    require(params && set && out, "null argument");
    *out = nullptr;
    const auto t = target == VPFA_PAN_ALL ? vpfa::PanTarget::All : vpfa::PanTarget::LowResolution;
    *out = new vpfa_set{vpfa::apply_panning(params->params, set->set, t)};
  });
}

vpfa_status vpfa_evaluate(const vpfa_set* query, const vpfa_set* gallery, vpfa_metric metric,
                          int cross_camera_filter, vpfa_eval** out) {
  return guarded([&] {
    require(query && gallery && out, "null argument");
    *out = nullptr;
    const auto m = metric == VPFA_METRIC_EUCLIDEAN ? vpfa::Metric::Euclidean : vpfa::Metric::Cosine;
    *out = new vpfa_eval{vpfa::evaluate(query->set, gallery->set, m, cross_camera_filter != 0)};
  });
}

void vpfa_eval_free(vpfa_eval* eval) { delete eval; }

void vpfa_eval_summary_get(const vpfa_eval* eval, vpfa_eval_summary* out) {
  if (!eval || !out) return;
  const auto& r = eval->report;
  *out = {r.rank1, r.rank5, r.rank10, r.mean_ap, r.num_queries, r.skipped};
}

size_t vpfa_eval_query_count(const vpfa_eval* eval) { return eval ? eval->report.per_query.size() : 0; }

vpfa_status vpfa_eval_query(const vpfa_eval* eval, size_t index, vpfa_query_row* out) {
  return guarded([&] {
    require(eval && out, "null argument");
    require(index < eval->report.per_query.size(), "query index out of range");
    const auto& q = eval->report.per_query[index];
    *out = {q.query_index, q.identity, q.relevant, q.first_hit_rank, q.average_precision};
  });
}

vpfa_status vpfa_centroids_compute(const vpfa_set* hr, const vpfa_set* lr_before, const vpfa_set* lr_after,
                           vpfa_centroids** out) {
  return guarded([&] {
    require(hr && lr_before && lr_after && out, "null argument");
    *out = nullptr;
    *out = new vpfa_centroids{vpfa::centroid_report(hr->set, lr_before->set, lr_after->set)};
  });
}

void vpfa_centroids_free(vpfa_centroids* c) { delete c; }

double vpfa_centroids_mean_reduction(const vpfa_centroids* c) { return c ? c->report.mean_reduction : 0.0; }

size_t vpfa_centroids_count(const vpfa_centroids* c) { return c ? c->report.rows.size() : 0; }

vpfa_status vpfa_centroids_row(const vpfa_centroids* c, size_t index, vpfa_centroid_row* out) {
  return guarded([&] {
    require(c && out, "null argument");
    require(index < c->report.rows.size(), "row index out of range");
    const auto& r = c->report.rows[index];
    *out = {r.identity, r.before, r.after, r.reduction};
  });
}

vpfa_status vpfa_project(const vpfa_set* const* sets, size_t num_sets, size_t num_identities,
                         vpfa_projection** out) {
  return guarded([&] {
    require(sets && out, "null argument");
    *out = nullptr;
    std::vector<const vpfa::EmbeddingSet*> inputs;
    for (std::size_t i = 0; i < num_sets; ++i) {
      require(sets[i] != nullptr, "null set in projection input");
      inputs.push_back(&sets[i]->set);
    }
    *out = new vpfa_projection{vpfa::project_2d(inputs, num_identities)};
  });
}

void vpfa_projection_free(vpfa_projection* p) { delete p; }

size_t vpfa_projection_count(const vpfa_projection* p) { return p ? p->points.size() : 0; }

vpfa_status vpfa_projection_point(const vpfa_projection* p, size_t index, vpfa_point* out) {
  return guarded([&] {
    require(p && out, "null argument");
    require(index < p->points.size(), "point index out of range");
    const auto& pt = p->points[index];
    *out = {pt.set_index, pt.identity, pt.resolution.code(), pt.x, pt.y};
  });
}

char* vpfa_eval_report_text(const vpfa_eval* eval) {
  return eval ? dup_or_null(vpfa::format_report(eval->report)) : nullptr;
}

char* vpfa_eval_csv(const vpfa_eval* eval) { return eval ? dup_or_null(vpfa::per_query_csv(eval->report)) : nullptr; }

char* vpfa_centroids_report_text(const vpfa_centroids* c) {
  return c ? dup_or_null(vpfa::format_report(c->report)) : nullptr;
}

char* vpfa_centroids_csv(const vpfa_centroids* c) { return c ? dup_or_null(vpfa::centroid_csv(c->report)) : nullptr; }

char* vpfa_projection_csv(const vpfa_projection* p) { return p ? dup_or_null(vpfa::projection_csv(p->points)) : nullptr; }

}  // extern "C"
