// Command-line front end. Talks to the toolkit only through the C interface.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vpfa/vpfa.h"

namespace {

using json = nlohmann::ordered_json;

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(vpfa_status status) {
  if (status != VPFA_OK) throw CliError(vpfa_last_error());
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using SetPtr = std::unique_ptr<vpfa_set, Deleter<vpfa_set, vpfa_set_free>>;
using ParamsPtr = std::unique_ptr<vpfa_params, Deleter<vpfa_params, vpfa_params_free>>;
using EvalPtr = std::unique_ptr<vpfa_eval, Deleter<vpfa_eval, vpfa_eval_free>>;
using CentroidsPtr = std::unique_ptr<vpfa_centroids, Deleter<vpfa_centroids, vpfa_centroids_free>>;
using ProjectionPtr = std::unique_ptr<vpfa_projection, Deleter<vpfa_projection, vpfa_projection_free>>;
using CString = std::unique_ptr<char, Deleter<char, vpfa_string_free>>;

SetPtr load_set(const std::string& path) {
  vpfa_set* s = nullptr;
  check(vpfa_set_load(path.c_str(), VPFA_FORMAT_AUTO, &s));
  return SetPtr(s);
}

SetPtr select(const vpfa_set* set, int resolution) {
  vpfa_set* s = nullptr;
  check(vpfa_set_select(set, resolution, &s));
  return SetPtr(s);
}

std::string take(char* s) {
  if (!s) throw CliError("out of memory");
  CString owned(s);
  return owned.get();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  out.flush();
  if (!out) throw CliError("cannot write " + path);
}

vpfa_format output_format(const std::string& flag, const std::string& path) {
  if (flag == "csv") return VPFA_FORMAT_CSV;
  if (flag == "bin" || flag == "binary") return VPFA_FORMAT_BINARY;
  if (flag.empty()) {
    const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
    return csv ? VPFA_FORMAT_CSV : VPFA_FORMAT_BINARY;
  }
  throw CliError("unknown --format '" + flag + "' (expected csv or bin)");
}

const char* format_name(vpfa_format f) { return f == VPFA_FORMAT_CSV ? "csv" : "bin"; }

struct Manifest {
  std::string subcommand;
  std::vector<std::string> argv;
  json options = json::object();
  json inputs = json::object();
  json outputs = json::object();

  void write(const std::string& primary_output) const {
    json m;
    m["tool"] = "vpfa";
    m["version"] = vpfa_version();
    m["subcommand"] = subcommand;
    m["argv"] = argv;
    m["options"] = options;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    write_text(primary_output + ".manifest.json", m.dump(2) + "\n");
  }
};

std::vector<int> parse_rates(const std::vector<std::string>& items) {
  std::vector<int> rates;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      try {
        std::size_t used = 0;
        const int r = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        rates.push_back(r);
      } catch (const std::exception&) {
        throw CliError("bad rate '" + tok + "'");
      }
    }
  }
  return rates;
}

std::vector<int> set_rates(const vpfa_set* set) {
  std::vector<int> rates(vpfa_set_lr_rates(set, nullptr, 0));
  vpfa_set_lr_rates(set, rates.data(), rates.size());
  return rates;
}

json rates_json(const std::vector<int>& rates) { return json(rates); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resolution-direction analysis and vector-panning feature alignment"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(vpfa_version()));

  Manifest manifest;
  for (int i = 0; i < argc; ++i) manifest.argv.emplace_back(argv[i]);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic cross-resolution embedding set");
  std::size_t gen_dim = 64, gen_ids = 200, gen_per_res = 10, gen_cameras = 6;
  double gen_sigma_proto = 1.0, gen_sigma_id = 0.3, gen_sigma_res = 0.1;
  std::vector<std::string> gen_rates, gen_alpha;
  std::uint64_t gen_seed = 7;
  std::optional<std::uint64_t> gen_direction_seed;
  std::string gen_out, gen_format;
  gen->add_option("--dim", gen_dim, "Feature dimension")->capture_default_str();
  gen->add_option("--ids", gen_ids, "Number of identities")->capture_default_str();
  gen->add_option("--per-res", gen_per_res, "Samples per identity per resolution")->capture_default_str();
  gen->add_option("--rates", gen_rates, "LR rates, e.g. 2,3,4 (default: the --alpha keys)");
  gen->add_option("--alpha", gen_alpha, "Shift magnitude per rate, R=V (repeatable)");
  gen->add_option("--sigma-proto", gen_sigma_proto, "Identity prototype spread")->capture_default_str();
  gen->add_option("--sigma-id", gen_sigma_id, "Within-identity sample noise")->capture_default_str();
  gen->add_option("--sigma-res", gen_sigma_res, "Noise added to LR samples")->capture_default_str();
  gen->add_option("--cameras", gen_cameras, "Number of cameras (round-robin)")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Data seed")->capture_default_str();
  gen->add_option("--direction-seed", gen_direction_seed, "Seed for the planted direction (default: --seed)");
  gen->add_option("--out", gen_out, "Output set path")->required();
  gen->add_option("--format", gen_format, "csv|bin (default: by extension, else bin)");

  // stats
  auto* stats = app.add_subcommand("stats", "Split-cosine, CCA and grouped Pearson analyses");
  std::string stats_data, stats_out, stats_csv, stats_rows = "sample";
  std::vector<std::string> stats_rates;
  double stats_eps = 1e-6;
  std::size_t stats_pearson_ids = 50, stats_group = 2;
  std::uint64_t stats_seed = 0;
  bool stats_no_reduce = false;
  stats->add_option("--data", stats_data, "Input set")->required();
  stats->add_option("--rates", stats_rates, "LR rates to analyse (default: all present)");
  stats->add_option("--cca-eps", stats_eps, "CCA ridge regularization")->capture_default_str();
  stats->add_option("--cca-rows", stats_rows, "sample|identity")->capture_default_str();
  stats->add_flag("--no-cca-reduce", stats_no_reduce, "Skip PCA reduction when dim > rows-1");
  stats->add_option("--pearson-ids", stats_pearson_ids, "Identities in grouped Pearson")->capture_default_str();
  stats->add_option("--group-size", stats_group, "Difference vectors per Pearson group")->capture_default_str();
  stats->add_option("--seed", stats_seed, "Seed for random baseline and grouping")->capture_default_str();
  stats->add_option("--out", stats_out, "Report path (key: value text)")->required();
  stats->add_option("--csv", stats_csv, "Prefix for per-table CSV files");

  // train
  auto* train = app.add_subcommand("train", "Train the panning network");
  const auto tdef = vpfa_train_config_default();
  std::string train_data, train_out, train_log;
  std::vector<std::string> train_rates;
  std::size_t train_hidden = tdef.hidden, train_epochs = tdef.epochs, train_batch = tdef.batch_size,
              train_pairs = tdef.num_pairs;
  double train_sigma = tdef.init_sigma, train_lr = tdef.learning_rate, train_wd = tdef.weight_decay,
         train_frac = tdef.bootstrap_fraction;
  std::optional<std::uint64_t> train_seed, train_init_seed, train_train_seed;
  train->add_option("--data", train_data, "Training set (HR + LR records)")->required();
  train->add_option("--out", train_out, "Output parameter file")->required();
  train->add_option("--log", train_log, "Per-epoch loss CSV (default: <out>.log.csv)");
  train->add_option("--hidden", train_hidden, "Hidden width")->capture_default_str();
  train->add_option("--sigma-init", train_sigma, "Std of the Gaussian weight init")->capture_default_str();
  train->add_option("--seed", train_seed, "Default for --init-seed and --train-seed");
  train->add_option("--init-seed", train_init_seed, "Parameter init seed");
  train->add_option("--train-seed", train_train_seed, "Pair sampling and batch order seed");
  train->add_option("--epochs", train_epochs)->capture_default_str();
  train->add_option("--lr", train_lr)->capture_default_str();
  train->add_option("--wd", train_wd, "L2 weight decay")->capture_default_str();
  train->add_option("--batch", train_batch)->capture_default_str();
  train->add_option("--pairs", train_pairs, "Sampled prototype pairs")->capture_default_str();
  train->add_option("--bootstrap-frac", train_frac, "Subset fraction per resampled pair")->capture_default_str();
  train->add_option("--rates", train_rates, "LR rates pooled for pairing (default: all)");

  // apply
  auto* apply = app.add_subcommand("apply", "Pan LR features with trained parameters");
  std::string apply_params, apply_data, apply_out, apply_format, apply_target = "lr";
  apply->add_option("--params", apply_params, "Parameter file")->required();
  apply->add_option("--data", apply_data, "Input set")->required();
  apply->add_option("--out", apply_out, "Output set")->required();
  apply->add_option("--format", apply_format, "csv|bin (default: by extension, else bin)");
  apply->add_option("--target", apply_target, "lr|all")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "CMC / mAP of LR queries against an HR gallery");
  std::string eval_data, eval_gallery, eval_out, eval_csv, eval_metric = "cosine";
  bool eval_no_filter = false;
  eval->add_option("--data", eval_data, "Set whose LR records are the queries")->required();
  eval->add_option("--gallery", eval_gallery, "Set whose HR records form the gallery (default: --data)");
  eval->add_option("--metric", eval_metric, "cosine|euclidean")->capture_default_str();
  eval->add_flag("--no-camera-filter", eval_no_filter, "Keep same-identity same-camera gallery items");
  eval->add_option("--out", eval_out, "Report path")->required();
  eval->add_option("--csv", eval_csv, "Per-query AP table");

  // centroids
  auto* cent = app.add_subcommand("centroids", "HR-LR centroid distances before and after panning");
  std::string cent_data, cent_panned, cent_out, cent_csv;
  cent->add_option("--data", cent_data, "Original set (HR + LR)")->required();
  cent->add_option("--panned", cent_panned, "Set after apply (default: --data, i.e. no change)");
  cent->add_option("--out", cent_out, "Report path")->required();
  cent->add_option("--csv", cent_csv, "Per-identity table");

  // project
  auto* proj = app.add_subcommand("project", "2D PCA coordinates for plotting");
  std::vector<std::string> proj_data;
  std::size_t proj_ids = 12;
  std::string proj_out;
  proj->add_option("--data", proj_data, "Input sets (repeatable; column 'set' is the index)")->required();
  proj->add_option("--ids", proj_ids, "Number of identities (first by sorted id)")->capture_default_str();
  proj->add_option("--out", proj_out, "Coordinates CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      manifest.subcommand = "gen";
      std::map<int, double> alpha;
      for (const auto& item : gen_alpha) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw CliError("--alpha expects R=V, got '" + item + "'");
        try {
          alpha[std::stoi(item.substr(0, eq))] = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
          throw CliError("--alpha expects R=V, got '" + item + "'");
        }
      }
      std::vector<int> rates = parse_rates(gen_rates);
      if (rates.empty()) {
        for (const auto& [r, v] : alpha) rates.push_back(r);
      }
      if (rates.empty()) throw CliError("gen: give --alpha R=V (and optionally --rates)");
      std::vector<double> shifts;
      for (int r : rates) {
        const auto it = alpha.find(r);
        if (it == alpha.end()) throw CliError("gen: no --alpha for rate " + std::to_string(r));
        shifts.push_back(it->second);
      }
      auto cfg = vpfa_synth_config_default();
      cfg.dim = gen_dim;
      cfg.num_identities = gen_ids;
      cfg.samples_per_res = gen_per_res;
      cfg.cameras = gen_cameras;
      cfg.sigma_proto = gen_sigma_proto;
      cfg.sigma_id = gen_sigma_id;
      cfg.sigma_res = gen_sigma_res;
      cfg.rates = rates.data();
      cfg.shifts = shifts.data();
      cfg.num_rates = rates.size();
      cfg.seed = gen_seed;
      cfg.has_direction_seed = gen_direction_seed.has_value();
      cfg.direction_seed = gen_direction_seed.value_or(0);
      vpfa_set* raw = nullptr;
      check(vpfa_synth_generate(&cfg, &raw));
      SetPtr set(raw);
      const auto fmt = output_format(gen_format, gen_out);
      check(vpfa_set_save(set.get(), gen_out.c_str(), fmt));

      json shift_json = json::object();
      for (std::size_t i = 0; i < rates.size(); ++i) shift_json[std::to_string(rates[i])] = shifts[i];
      manifest.options = {{"dim", gen_dim},
                          {"ids", gen_ids},
                          {"per_res", gen_per_res},
                          {"rates", rates_json(rates)},
                          {"alpha", shift_json},
                          {"sigma_proto", gen_sigma_proto},
                          {"sigma_id", gen_sigma_id},
                          {"sigma_res", gen_sigma_res},
                          {"cameras", gen_cameras},
                          {"seed", gen_seed},
                          {"direction_seed", gen_direction_seed.value_or(gen_seed)},
                          {"format", format_name(fmt)}};
      manifest.outputs["set"] = gen_out;
      manifest.write(gen_out);
      std::cout << "wrote " << vpfa_set_size(set.get()) << " records (dim " << vpfa_set_dim(set.get()) << ") to "
                << gen_out << "\n";
    } else if (stats->parsed()) {
      manifest.subcommand = "stats";
      const auto set = load_set(stats_data);
      std::vector<int> rates = parse_rates(stats_rates);
      if (rates.empty()) rates = set_rates(set.get());
      if (rates.empty()) throw CliError("stats: set has no LR records");
      if (stats_rows != "sample" && stats_rows != "identity") throw CliError("--cca-rows must be sample or identity");
      auto opts = vpfa_stats_options_default();
      opts.cca_epsilon = stats_eps;
      opts.cca_reduce_to_rank = stats_no_reduce ? 0 : 1;
      opts.cca_rows = stats_rows == "identity" ? VPFA_CCA_ROWS_IDENTITY : VPFA_CCA_ROWS_SAMPLE;
      opts.pearson_identities = stats_pearson_ids;
      opts.group_size = stats_group;
      opts.seed = stats_seed;
      char *report = nullptr, *split = nullptr, *cca = nullptr, *pearson = nullptr;
      check(vpfa_stats_report(set.get(), rates.data(), rates.size(), &opts, &report, &split, &cca, &pearson));
      const std::string text = take(report);
      const std::string split_s = take(split), cca_s = take(cca), pearson_s = take(pearson);
      write_text(stats_out, text);
      std::cout << text;
      manifest.inputs["data"] = stats_data;
      manifest.outputs["report"] = stats_out;
      if (!stats_csv.empty()) {
        write_text(stats_csv + "_split_cosine.csv", split_s);
        write_text(stats_csv + "_cca.csv", cca_s);
        write_text(stats_csv + "_pearson.csv", pearson_s);
        manifest.outputs["csv_prefix"] = stats_csv;
      }
      manifest.options = {{"rates", rates_json(rates)},      {"cca_eps", stats_eps},
                          {"cca_rows", stats_rows},          {"cca_reduce", !stats_no_reduce},
                          {"pearson_ids", stats_pearson_ids}, {"group_size", stats_group},
                          {"seed", stats_seed}};
      manifest.write(stats_out);
    } else if (train->parsed()) {
      manifest.subcommand = "train";
      const auto set = load_set(train_data);
      const std::vector<int> rates = parse_rates(train_rates);
      auto cfg = vpfa_train_config_default();
      cfg.hidden = train_hidden;
      cfg.init_sigma = train_sigma;
      cfg.init_seed = train_init_seed.value_or(train_seed.value_or(0));
      cfg.seed = train_train_seed.value_or(train_seed.value_or(0));
      cfg.epochs = train_epochs;
      cfg.learning_rate = train_lr;
      cfg.weight_decay = train_wd;
      cfg.batch_size = train_batch;
      cfg.num_pairs = train_pairs;
      cfg.bootstrap_fraction = train_frac;
      cfg.rates = rates.empty() ? nullptr : rates.data();
      cfg.num_rates = rates.size();
      std::vector<double> losses(cfg.epochs);
      vpfa_train_summary summary{};
      vpfa_params* raw = nullptr;
      check(vpfa_train(set.get(), &cfg, &raw, losses.data(), &summary));
      ParamsPtr params(raw);
      check(vpfa_params_save(params.get(), train_out.c_str()));
      const std::string log_path = train_log.empty() ? train_out + ".log.csv" : train_log;
      std::string log = "epoch,mean_loss\n";
      char buf[64];
      for (std::size_t e = 0; e < losses.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, losses[e]);
        log += buf;
      }
      write_text(log_path, log);
      manifest.inputs["data"] = train_data;
      manifest.outputs["params"] = train_out;
      manifest.outputs["log"] = log_path;
      manifest.options = {{"dim", vpfa_params_dim(params.get())},
                          {"hidden", train_hidden},
                          {"sigma_init", train_sigma},
                          {"init_seed", cfg.init_seed},
                          {"train_seed", cfg.seed},
                          {"epochs", train_epochs},
                          {"lr", train_lr},
                          {"wd", train_wd},
                          {"batch", train_batch},
                          {"pairs", train_pairs},
                          {"bootstrap_frac", train_frac},
                          {"rates", rates_json(rates)}};
      manifest.write(train_out);
      std::cout << "parameters: " << vpfa_params_count(params.get()) << "\n"
                << "identities used: " << summary.identities_used << " (skipped " << summary.identities_skipped
                << ")\n"
                << "steps: " << summary.steps << "\n";
      if (!losses.empty()) {
        std::snprintf(buf, sizeof buf, "%.6g -> %.6g", losses.front(), losses.back());
        std::cout << "mean VPL: " << buf << "\n";
      }
      std::snprintf(buf, sizeof buf, "%.2f", summary.wall_seconds);
      std::cout << "wall seconds: " << buf << "\n";
    } else if (apply->parsed()) {
      manifest.subcommand = "apply";
      if (apply_target != "lr" && apply_target != "all") throw CliError("--target must be lr or all");
      vpfa_params* raw_params = nullptr;
      check(vpfa_params_load(apply_params.c_str(), &raw_params));
      ParamsPtr params(raw_params);
      const auto set = load_set(apply_data);
      vpfa_set* raw = nullptr;
      check(vpfa_apply(params.get(), set.get(), apply_target == "all" ? VPFA_PAN_ALL : VPFA_PAN_LR, &raw));
      SetPtr out(raw);
      const auto fmt = output_format(apply_format, apply_out);
      check(vpfa_set_save(out.get(), apply_out.c_str(), fmt));
      manifest.inputs = {{"params", apply_params}, {"data", apply_data}};
      manifest.outputs["set"] = apply_out;
      manifest.options = {{"target", apply_target}, {"format", format_name(fmt)}};
      manifest.write(apply_out);
      std::cout << "panned " << vpfa_set_size(out.get()) << " records into " << apply_out << "\n";
    } else if (eval->parsed()) {
      manifest.subcommand = "eval";
      if (eval_metric != "cosine" && eval_metric != "euclidean") throw CliError("--metric must be cosine or euclidean");
      const auto data = load_set(eval_data);
      const auto queries = select(data.get(), VPFA_SELECT_ANY_LR);
      SetPtr gallery;
      if (eval_gallery.empty()) {
        gallery = select(data.get(), VPFA_SELECT_HR);
      } else {
        const auto g = load_set(eval_gallery);
        gallery = select(g.get(), VPFA_SELECT_HR);
      }
      vpfa_eval* raw = nullptr;
      check(vpfa_evaluate(queries.get(), gallery.get(),
                          eval_metric == "euclidean" ? VPFA_METRIC_EUCLIDEAN : VPFA_METRIC_COSINE,
                          eval_no_filter ? 0 : 1, &raw));
      EvalPtr result(raw);
      const std::string text = take(vpfa_eval_report_text(result.get()));
      write_text(eval_out, text);
      std::cout << text;
      manifest.inputs["data"] = eval_data;
      manifest.inputs["gallery"] = eval_gallery.empty() ? eval_data : eval_gallery;
      manifest.outputs["report"] = eval_out;
      if (!eval_csv.empty()) {
        write_text(eval_csv, take(vpfa_eval_csv(result.get())));
        manifest.outputs["csv"] = eval_csv;
      }
      manifest.options = {{"metric", eval_metric}, {"camera_filter", !eval_no_filter}};
      manifest.write(eval_out);
    } else if (cent->parsed()) {
      manifest.subcommand = "centroids";
      const auto data = load_set(cent_data);
      const auto hr = select(data.get(), VPFA_SELECT_HR);
      const auto before = select(data.get(), VPFA_SELECT_ANY_LR);
      SetPtr after;
      if (cent_panned.empty()) {
        after = select(data.get(), VPFA_SELECT_ANY_LR);
      } else {
        const auto panned = load_set(cent_panned);
        after = select(panned.get(), VPFA_SELECT_ANY_LR);
      }
      vpfa_centroids* raw = nullptr;
      check(vpfa_centroids_compute(hr.get(), before.get(), after.get(), &raw));
      CentroidsPtr result(raw);
      const std::string text = take(vpfa_centroids_report_text(result.get()));
      write_text(cent_out, text);
      std::cout << text;
      manifest.inputs["data"] = cent_data;
      if (!cent_panned.empty()) manifest.inputs["panned"] = cent_panned;
      manifest.outputs["report"] = cent_out;
      if (!cent_csv.empty()) {
        write_text(cent_csv, take(vpfa_centroids_csv(result.get())));
        manifest.outputs["csv"] = cent_csv;
      }
      manifest.write(cent_out);
    } else if (proj->parsed()) {
      manifest.subcommand = "project";
      std::vector<SetPtr> sets;
      std::vector<const vpfa_set*> views;
      for (const auto& path : proj_data) {
        sets.push_back(load_set(path));
        views.push_back(sets.back().get());
      }
      vpfa_projection* raw = nullptr;
      check(vpfa_project(views.data(), views.size(), proj_ids, &raw));
      ProjectionPtr result(raw);
      write_text(proj_out, take(vpfa_projection_csv(result.get())));
      manifest.inputs["data"] = proj_data;
      manifest.outputs["coordinates"] = proj_out;
      manifest.options = {{"ids", proj_ids}};
      manifest.write(proj_out);
      std::cout << "wrote " << vpfa_projection_count(result.get()) << " points to " << proj_out << "\n";
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
