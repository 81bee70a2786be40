// mixedseg: data generation, fold planning, training, evaluation and
// gradient-check workbench for mixed-supervision tumor segmentation.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>

#include "mixedseg/checkpoint.hpp"
#include "mixedseg/data.hpp"
#include "mixedseg/evaluation.hpp"
#include "mixedseg/gradcheck_suite.hpp"
#include "mixedseg/io.hpp"
#include "mixedseg/json_config.hpp"
#include "mixedseg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mixedseg;

namespace {

// exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  try {
    json j;
    is >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

// flags beat config-file values; config-file values beat built-in defaults
template <typename T>
void merge(const CLI::Option* opt, const json& cfg, const char* key, T& value) {
  if (opt != nullptr && opt->count() > 0) return;
  if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << text;
  if (!os) throw DataError("failed writing " + path.string());
}

void echo_config(const fs::path& out_dir, const json& resolved) {
  fs::create_directories(out_dir);
  write_text(out_dir / "resolved_config.json", resolved.dump(2) + "\n");
}

std::string slice_file_name(int volume_id, int slice_index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "slices/vol%04d_s%03d.msvd", volume_id, slice_index);
  return buf;
}

std::vector<double> default_target_weights(int classes) {
  if (classes == 2) return {0.7, 0.3};
  std::vector<double> t(std::size_t(classes), 0.3 / double(classes - 1));
  t[0] = 0.7;
  return t;
}

std::vector<int> scaled_fc_widths(int base) {
  return {8 * base, 4 * base, 2 * base, 2 * base, 2 * base, base, 2};
}

int count_volumes(const std::vector<SliceRecord>& records) {
  std::set<int> ids;
  for (const auto& r : records) ids.insert(r.volume_id);
  return int(ids.size());
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string out;
  std::string config_file;
  GeneratorConfig gen = GeneratorConfig::defaults();
  double scale_constant = 100.0;
};

int run_gen_data(const GenDataArgs& a) {
  a.gen.validate();
  const fs::path out_dir(a.out);
  fs::create_directories(out_dir / "slices");

  std::vector<SliceRecord> records;
  int tumor_volumes = 0;
  std::array<std::size_t, 3> type_counts{0, 0, 0};
  for (int id = 0; id < a.gen.num_volumes; ++id) {
    Volume vol = generate_volume(a.gen, id);
    normalize_intensity(vol, a.scale_constant);
    if (!vol.mask.empty_of_tumor()) ++tumor_volumes;
    // the master store keeps full ground truth; fold roles decide later what
    // training is allowed to read
    auto slices = extract_slices(vol, VolumeRole::kFullyAnnotated,
                                 std::size_t(a.gen.num_classes));
    for (auto& s : slices) {
      s.record.data_path = slice_file_name(id, s.record.slice_index);
      write_msvd(out_dir / s.record.data_path, s.data.image, &*s.data.mask);
      ++type_counts[std::size_t(s.record.annotation)];
      records.push_back(std::move(s.record));
    }
  }
  write_manifest(out_dir / "manifest.csv", records);

  json resolved;
  resolved["command"] = "gen-data";
  resolved["out"] = a.out;
  resolved["generator"] = a.gen;
  resolved["scale_constant"] = a.scale_constant;
  echo_config(out_dir, resolved);

  std::printf("volumes: %d (%d tumor / %d negative)\n", a.gen.num_volumes, tumor_volumes,
              a.gen.num_volumes - tumor_volumes);
  std::printf("records: %zu full, %zu negative (manifest: %s)\n",
              type_counts[std::size_t(AnnotationType::kFull)],
              type_counts[std::size_t(AnnotationType::kNegative)],
              (out_dir / "manifest.csv").c_str());
  return 0;
}

// ------------------------------------------------------------------- folds

struct FoldsArgs {
  std::string out;
  std::string config_file;
  std::string data;
  int volumes = 0;
  int test = 0;
  int fa = 0;
  int num_folds = 5;
  std::int64_t perm_seed = -1;  // <0: identity permutation
};

int run_folds(const FoldsArgs& a) {
  int n = a.volumes;
  if (n == 0) {
    if (a.data.empty()) {
      throw ConfigError("either --volumes or --data (to count volumes) is required");
    }
    n = count_volumes(read_manifest(fs::path(a.data) / "manifest.csv"));
  }
  std::optional<std::uint64_t> seed;
  if (a.perm_seed >= 0) seed = std::uint64_t(a.perm_seed);
  auto plans = plan_folds(n, a.test, a.fa, a.num_folds, seed);

  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  json meta{{"num_volumes", n},
            {"test_per_fold", a.test},
            {"fully_annotated", a.fa},
            {"num_folds", a.num_folds},
            {"permutation_seed", a.perm_seed}};
  write_fold_plans(out_dir / "folds.json", plans, meta.dump());

  json resolved;
  resolved["command"] = "folds";
  resolved["out"] = a.out;
  resolved["volumes"] = n;
  resolved["test"] = a.test;
  resolved["fa"] = a.fa;
  resolved["num_folds"] = a.num_folds;
  resolved["perm_seed"] = a.perm_seed;
  echo_config(out_dir, resolved);

  std::printf("%d folds over %d volumes: %d test / %d FA / %d WA each (%s)\n",
              a.num_folds, n, a.test, a.fa, n - a.test - a.fa,
              (out_dir / "folds.json").c_str());
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string folds;
  int fold = 0;
  std::string mode = "mixed";
  std::string out;
  std::string config_file;
  int iterations = 500;
  int k = 4, m = 2, n = 4;
  double a_weight = -1.0;  // <0: default per class count
  std::vector<double> target_weights;
  bool strict_eq1 = false;
  double lr = 0.05, momentum = 0.9;
  int batches = 2;
  int lr_decay_every = 2000;
  double lr_decay_factor = 0.5;
  bool normalize_after_momentum = false;
  int classes = 2;
  int model_depth = 2;
  int model_base = 8;
  std::vector<int> fc_widths;
  int pool_kernel = 8, pool_stride = 8;
  int branch_conv_out = 0;  // 0: same as model_base
  int checkpoint_every = 100;
  int keep_last = 3;
  std::uint64_t seed = 0;
};

ModelConfig model_config_for(const TrainArgs& a, const Tensor& probe_slice) {
  ModelConfig mc;
  mc.input_channels = int(probe_slice.dim(0));
  mc.input_size = {int(probe_slice.dim(1)), int(probe_slice.dim(2))};
  mc.depth = a.model_depth;
  mc.base_width = a.model_base;
  mc.num_classes = a.classes;
  mc.padding_mode = Padding::kSame;
  mc.branch.pool_kernel = {a.pool_kernel, a.pool_kernel};
  mc.branch.pool_stride = {a.pool_stride, a.pool_stride};
  mc.branch.branch_conv_out = a.branch_conv_out > 0 ? a.branch_conv_out : a.model_base;
  mc.branch.fc_widths = a.fc_widths.empty() ? scaled_fc_widths(a.model_base) : a.fc_widths;
  return mc;
}

int run_train(const TrainArgs& a) {
  if (a.mode != "standard" && a.mode != "mixed") {
    throw ConfigError("--mode must be 'standard' or 'mixed'");
  }
  const bool standard = a.mode == "standard";
  const fs::path data_dir(a.data);
  auto master = read_manifest(data_dir / "manifest.csv");
  auto plans = read_fold_plans(a.folds);
  if (a.fold < 0 || std::size_t(a.fold) >= plans.size()) {
    throw ConfigError("--fold out of range (have " + std::to_string(plans.size()) +
                      " folds)");
  }
  const FoldPlan& plan = plans[std::size_t(a.fold)];

  std::vector<SliceRecord> records =
      standard ? filter_records_by_volumes(master, plan.fa_ids)
               : apply_fold_roles(master, plan);
  if (records.empty()) throw DataError("no training records for this fold");
  auto index = index_dataset(std::move(records), std::size_t(a.classes));

  FileSliceSource source(data_dir);
  Tensor probe = source.image(index.records[0]);
  Model model = build_model(model_config_for(a, probe), derive_seed(a.seed, SeedStream::kInit));

  TrainOptions opts;
  opts.mode = standard ? TrainMode::kStandard : TrainMode::kMixed;
  opts.loss.a = a.a_weight >= 0 ? a.a_weight : (a.classes == 2 ? 0.7 : 0.3);
  opts.loss.target_weights =
      a.target_weights.empty() ? default_target_weights(a.classes) : a.target_weights;
  opts.loss.strict_prefactor = a.strict_eq1;
  opts.comp = BatchComposition{a.k, a.m, standard ? 0 : a.n};
  opts.opt.learning_rate = a.lr;
  opts.opt.momentum = a.momentum;
  opts.opt.batches_per_iteration = a.batches;
  opts.opt.lr_decay_every = a.lr_decay_every;
  opts.opt.lr_decay_factor = a.lr_decay_factor;
  opts.opt.normalize_after_momentum = a.normalize_after_momentum;
  opts.iterations = a.iterations;
  opts.checkpoint_every = a.checkpoint_every;
  opts.keep_last = a.keep_last;
  opts.seed = a.seed;
  opts.out_dir = fs::path(a.out);
  opts.enforce_subclass_presence = a.classes > 2 && !standard;

  json resolved;
  resolved["command"] = "train";
  resolved["data"] = a.data;
  resolved["folds"] = a.folds;
  resolved["fold"] = a.fold;
  resolved["mode"] = a.mode;
  resolved["out"] = a.out;
  resolved["iterations"] = a.iterations;
  resolved["composition"] = opts.comp;
  resolved["loss"] = opts.loss;
  resolved["optimizer"] = opts.opt;
  resolved["model"] = model.config;
  resolved["seed"] = a.seed;
  resolved["checkpoint_every"] = a.checkpoint_every;
  resolved["keep_last"] = a.keep_last;
  echo_config(opts.out_dir, resolved);

  TrainResult result = train_loop(model, index, source, opts);
  std::printf("trained %d iterations (%s mode, batch %d+%d+%d, B=%d)\n", a.iterations,
              a.mode.c_str(), opts.comp.k, opts.comp.m, opts.comp.n, a.batches);
  if (!result.log.empty()) {
    std::printf("loss: first %.4f last %.4f (log: %s)\n", result.log.front().total,
                result.log.back().total, (opts.out_dir / "loss_log.csv").c_str());
  }
  if (standard) {
    std::printf("weak-slice reads: images=%zu masks=%zu (standard mode touches none)\n",
                source.image_reads[std::size_t(AnnotationType::kWeak)],
                source.mask_reads[std::size_t(AnnotationType::kWeak)]);
  }
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string folds;
  int fold = 0;
  std::string out;
  std::string config_file;
  std::vector<std::string> region_names;
};

RegionSpec region_by_name(const std::string& name) {
  for (RegionSpec r : RegionSpec::brats_regions()) {
    if (r.name == name) return r;
  }
  throw ConfigError("unknown region '" + name +
                    "' (expected whole_tumor, tumor_core or enhancing_core)");
}

int run_eval(const EvalArgs& a) {
  LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
  const fs::path data_dir(a.data);
  auto master = read_manifest(data_dir / "manifest.csv");
  auto plans = read_fold_plans(a.folds);
  if (a.fold < 0 || std::size_t(a.fold) >= plans.size()) {
    throw ConfigError("--fold out of range");
  }
  std::vector<RegionSpec> regions;
  if (a.region_names.empty()) {
    if (ckpt.model.config.num_classes == 2) {
      regions.push_back(RegionSpec::whole_tumor());
    } else {
      regions = RegionSpec::brats_regions();
    }
  } else {
    for (const auto& n : a.region_names) regions.push_back(region_by_name(n));
  }

  FileSliceSource source(data_dir);
  auto cases = collect_eval_cases(master, plans[std::size_t(a.fold)].test_ids, source);
  DiceReport report = evaluate_fold(ckpt.model, cases, regions);

  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  write_text(out_dir / "report.csv", report_to_csv(report));
  write_text(out_dir / "report.txt", report_to_text(report));

  json resolved;
  resolved["command"] = "eval";
  resolved["checkpoint"] = a.checkpoint;
  resolved["data"] = a.data;
  resolved["folds"] = a.folds;
  resolved["fold"] = a.fold;
  resolved["out"] = a.out;
  {
    std::vector<std::string> names;
    for (const auto& r : regions) names.push_back(r.name);
    resolved["regions"] = names;
  }
  echo_config(out_dir, resolved);

  std::fputs(report_to_text(report).c_str(), stdout);
  for (double m : report.region_means) {
    if (!std::isfinite(m)) {
      std::fprintf(stderr, "error: non-finite dice mean\n");
      return kExitNumeric;
    }
  }
  for (const auto& c : report.cases) {
    for (double v : c.per_region) {
      if (!std::isfinite(v)) {
        std::fprintf(stderr, "error: non-finite dice value\n");
        return kExitNumeric;
      }
    }
  }
  return 0;
}

// --------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  double epsilon = 1e-6;
  double tolerance = 1e-4;
  std::string out;
  std::string config_file;
};

int run_gradcheck(const GradcheckArgs& a) {
  auto checks = run_standard_gradchecks(a.epsilon, a.tolerance);
  bool all_pass = true;
  std::string table;
  char line[160];
  std::snprintf(line, sizeof(line), "%-28s %-6s %-12s %s\n", "check", "status",
                "max_rel_err", "elements");
  table += line;
  for (const auto& c : checks) {
    std::snprintf(line, sizeof(line), "%-28s %-6s %-12.3e %zu\n", c.name.c_str(),
                  c.report.pass ? "PASS" : "FAIL", c.report.max_rel_error,
                  c.report.checked);
    table += line;
    all_pass = all_pass && c.report.pass;
  }
  table += all_pass ? "all checks passed\n" : "GRADIENT CHECK FAILURES PRESENT\n";
  std::fputs(table.c_str(), stdout);

  if (!a.out.empty()) {
    const fs::path out_dir(a.out);
    fs::create_directories(out_dir);
    write_text(out_dir / "gradcheck_report.txt", table);
    json resolved{{"command", "gradcheck"},
                  {"epsilon", a.epsilon},
                  {"tolerance", a.tolerance},
                  {"out", a.out}};
    echo_config(out_dir, resolved);
  }
  return all_pass ? 0 : kExitNumeric;
}

// ----------------------------------------------------------------- compare

struct CompareArgs {
  std::string standard_csv;
  std::string mixed_csv;
  std::string out;
  std::string config_file;
};

std::string slurp_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

int run_compare(const CompareArgs& a) {
  DiceReport standard = parse_report_csv(slurp_file(a.standard_csv));
  DiceReport mixed = parse_report_csv(slurp_file(a.mixed_csv));
  Comparison cmp = compare_scenarios(standard, mixed);

  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  write_text(out_dir / "compare.csv", cmp.csv);
  write_text(out_dir / "compare.txt", cmp.text);
  json resolved{{"command", "compare"},
                {"standard", a.standard_csv},
                {"mixed", a.mixed_csv},
                {"out", a.out}};
  echo_config(out_dir, resolved);
  std::fputs(cmp.text.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixed-supervision tumor segmentation workbench"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--out", gen_args.out, "output directory")->required();
  gen->add_option("--config", gen_args.config_file, "JSON config (flags override)");
  auto* g_vol = gen->add_option("--volumes", gen_args.gen.num_volumes);
  auto* g_tf = gen->add_option("--tumor-fraction", gen_args.gen.tumor_fraction);
  auto* g_ch = gen->add_option("--channels", gen_args.gen.channels);
  auto* g_d = gen->add_option("--depth", gen_args.gen.depth);
  auto* g_h = gen->add_option("--height", gen_args.gen.height);
  auto* g_w = gen->add_option("--width", gen_args.gen.width);
  auto* g_ns = gen->add_option("--noise", gen_args.gen.noise_sigma);
  auto* g_k = gen->add_option("--classes", gen_args.gen.num_classes);
  auto* g_seed = gen->add_option("--seed", gen_args.gen.seed);
  auto* g_sc = gen->add_option("--scale-constant", gen_args.scale_constant,
                               "post-normalization non-zero median");

  FoldsArgs folds_args;
  auto* folds = app.add_subcommand("folds", "plan circular cross-validation folds");
  folds->add_option("--out", folds_args.out, "output directory")->required();
  folds->add_option("--config", folds_args.config_file, "JSON config (flags override)");
  auto* f_data = folds->add_option("--data", folds_args.data, "dataset dir (counts volumes)");
  auto* f_vol = folds->add_option("--volumes", folds_args.volumes);
  auto* f_test = folds->add_option("--test", folds_args.test, "test volumes per fold");
  auto* f_fa = folds->add_option("--fa", folds_args.fa, "fully-annotated volumes per fold");
  auto* f_nf = folds->add_option("--num-folds", folds_args.num_folds);
  auto* f_ps = folds->add_option("--perm-seed", folds_args.perm_seed,
                                 "permutation seed; omit for identity order");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model on one fold");
  train->add_option("--data", train_args.data, "dataset directory")->required();
  train->add_option("--folds", train_args.folds, "folds.json path")->required();
  train->add_option("--out", train_args.out, "output directory")->required();
  train->add_option("--config", train_args.config_file, "JSON config (flags override)");
  auto* t_fold = train->add_option("--fold", train_args.fold);
  auto* t_mode = train->add_option("--mode", train_args.mode, "standard|mixed");
  auto* t_it = train->add_option("--iterations", train_args.iterations);
  auto* t_k = train->add_option("--k", train_args.k, "full positives per batch");
  auto* t_m = train->add_option("--m", train_args.m, "negatives per batch");
  auto* t_n = train->add_option("--n", train_args.n, "weak positives per batch");
  auto* t_a = train->add_option("--a", train_args.a_weight, "segmentation loss weight");
  auto* t_tw = train->add_option("--target-weights", train_args.target_weights)
                   ->delimiter(',');
  auto* t_strict = train->add_flag("--strict-eq1", train_args.strict_eq1,
                                   "keep the 1/P prefactor on the segmentation loss");
  auto* t_lr = train->add_option("--lr", train_args.lr);
  auto* t_mom = train->add_option("--momentum", train_args.momentum);
  auto* t_b = train->add_option("--batches", train_args.batches, "batches per iteration");
  auto* t_lde = train->add_option("--lr-decay-every", train_args.lr_decay_every);
  auto* t_ldf = train->add_option("--lr-decay-factor", train_args.lr_decay_factor);
  auto* t_nam = train->add_flag("--normalize-after-momentum",
                                train_args.normalize_after_momentum);
  auto* t_cls = train->add_option("--classes", train_args.classes, "2 or 4");
  auto* t_md = train->add_option("--model-depth", train_args.model_depth);
  auto* t_mb = train->add_option("--model-base", train_args.model_base);
  auto* t_fc = train->add_option("--fc-widths", train_args.fc_widths)->delimiter(',');
  auto* t_pk = train->add_option("--pool-kernel", train_args.pool_kernel);
  auto* t_ps = train->add_option("--pool-stride", train_args.pool_stride);
  auto* t_bc = train->add_option("--branch-conv-out", train_args.branch_conv_out);
  auto* t_ce = train->add_option("--checkpoint-every", train_args.checkpoint_every);
  auto* t_kl = train->add_option("--keep-last", train_args.keep_last);
  auto* t_seed = train->add_option("--seed", train_args.seed);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a fold's test set");
  eval->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval->add_option("--data", eval_args.data)->required();
  eval->add_option("--folds", eval_args.folds)->required();
  eval->add_option("--out", eval_args.out)->required();
  eval->add_option("--config", eval_args.config_file, "JSON config (flags override)");
  auto* e_fold = eval->add_option("--fold", eval_args.fold);
  auto* e_reg = eval->add_option("--regions", eval_args.region_names)->delimiter(',');

  GradcheckArgs gc_args;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  auto* gc_eps = gc->add_option("--epsilon", gc_args.epsilon);
  auto* gc_tol = gc->add_option("--tolerance", gc_args.tolerance);
  gc->add_option("--out", gc_args.out, "optional report directory");
  gc->add_option("--config", gc_args.config_file, "JSON config (flags override)");

  CompareArgs cmp_args;
  auto* cmp = app.add_subcommand("compare", "standard-vs-mixed comparison table");
  cmp->add_option("--standard", cmp_args.standard_csv, "standard report.csv")->required();
  cmp->add_option("--mixed", cmp_args.mixed_csv, "mixed report.csv")->required();
  cmp->add_option("--out", cmp_args.out)->required();
  cmp->add_option("--config", cmp_args.config_file, "JSON config (flags override)");

  try {
    app.parse(argc, argv);

    if (gen->parsed()) {
      const json cfg = load_config_file(gen_args.config_file);
      merge(g_vol, cfg, "volumes", gen_args.gen.num_volumes);
      merge(g_tf, cfg, "tumor_fraction", gen_args.gen.tumor_fraction);
      merge(g_ch, cfg, "channels", gen_args.gen.channels);
      merge(g_d, cfg, "depth", gen_args.gen.depth);
      merge(g_h, cfg, "height", gen_args.gen.height);
      merge(g_w, cfg, "width", gen_args.gen.width);
      merge(g_ns, cfg, "noise", gen_args.gen.noise_sigma);
      merge(g_k, cfg, "classes", gen_args.gen.num_classes);
      merge(g_seed, cfg, "seed", gen_args.gen.seed);
      merge(g_sc, cfg, "scale_constant", gen_args.scale_constant);
      if (cfg.contains("generator")) {
        GeneratorConfig from_file = cfg.at("generator").get<GeneratorConfig>();
        if (g_vol->count() == 0) gen_args.gen = from_file;
      }
      return run_gen_data(gen_args);
    }
    if (folds->parsed()) {
      const json cfg = load_config_file(folds_args.config_file);
      merge(f_data, cfg, "data", folds_args.data);
      merge(f_vol, cfg, "volumes", folds_args.volumes);
      merge(f_test, cfg, "test", folds_args.test);
      merge(f_fa, cfg, "fa", folds_args.fa);
      merge(f_nf, cfg, "num_folds", folds_args.num_folds);
      merge(f_ps, cfg, "perm_seed", folds_args.perm_seed);
      if (folds_args.test < 1) throw ConfigError("--test must be >= 1");
      return run_folds(folds_args);
    }
    if (train->parsed()) {
      const json cfg = load_config_file(train_args.config_file);
      merge(t_fold, cfg, "fold", train_args.fold);
      merge(t_mode, cfg, "mode", train_args.mode);
      merge(t_it, cfg, "iterations", train_args.iterations);
      merge(t_k, cfg, "k", train_args.k);
      merge(t_m, cfg, "m", train_args.m);
      merge(t_n, cfg, "n", train_args.n);
      merge(t_a, cfg, "a", train_args.a_weight);
      merge(t_tw, cfg, "target_weights", train_args.target_weights);
      merge(t_strict, cfg, "strict_eq1", train_args.strict_eq1);
      merge(t_lr, cfg, "lr", train_args.lr);
      merge(t_mom, cfg, "momentum", train_args.momentum);
      merge(t_b, cfg, "batches", train_args.batches);
      merge(t_lde, cfg, "lr_decay_every", train_args.lr_decay_every);
      merge(t_ldf, cfg, "lr_decay_factor", train_args.lr_decay_factor);
      merge(t_nam, cfg, "normalize_after_momentum", train_args.normalize_after_momentum);
      merge(t_cls, cfg, "classes", train_args.classes);
      merge(t_md, cfg, "model_depth", train_args.model_depth);
      merge(t_mb, cfg, "model_base", train_args.model_base);
      merge(t_fc, cfg, "fc_widths", train_args.fc_widths);
      merge(t_pk, cfg, "pool_kernel", train_args.pool_kernel);
      merge(t_ps, cfg, "pool_stride", train_args.pool_stride);
      merge(t_bc, cfg, "branch_conv_out", train_args.branch_conv_out);
      merge(t_ce, cfg, "checkpoint_every", train_args.checkpoint_every);
      merge(t_kl, cfg, "keep_last", train_args.keep_last);
      merge(t_seed, cfg, "seed", train_args.seed);
      return run_train(train_args);
    }
    if (eval->parsed()) {
      const json cfg = load_config_file(eval_args.config_file);
      merge(e_fold, cfg, "fold", eval_args.fold);
      merge(e_reg, cfg, "regions", eval_args.region_names);
      return run_eval(eval_args);
    }
    if (gc->parsed()) {
      const json cfg = load_config_file(gc_args.config_file);
      merge(gc_eps, cfg, "epsilon", gc_args.epsilon);
      merge(gc_tol, cfg, "tolerance", gc_args.tolerance);
      return run_gradcheck(gc_args);
    }
    if (cmp->parsed()) {
      return run_compare(cmp_args);
    }
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const Error& e) {  // DataError, ShapeError and other data issues
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
}
