#include "ptl/harness.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "ptl/metrics.hpp"
#include "ptl/pcs.hpp"

namespace ptl {

void ExperimentConfig::validate() const {
  task.validate();
  if (source_arch.size() < 2 || target_arch.size() < 2) throw ValidationError("ExperimentConfig: architectures need >= 2 widths");
  if (source_arch == target_arch) throw ValidationError("ExperimentConfig: source and target architectures must differ");
  if (source_arch.front() != task.feature_dim || target_arch.front() != task.feature_dim)
    throw DimensionError("ExperimentConfig: architecture input width must equal feature_dim");
  if (source_arch.back() != task.source_classes)
    throw DimensionError("ExperimentConfig: source architecture output must equal source_classes");
  if (target_arch.back() != task.target_classes)
    throw DimensionError("ExperimentConfig: target architecture output must equal target_classes");
  if (seeds.empty()) throw ValidationError("ExperimentConfig: seed list is empty");
  if (pseudo_size < 1) throw ValidationError("ExperimentConfig: pseudo_size must be >= 1");
  if (!(finetune_lr >= 0)) throw ValidationError("ExperimentConfig: finetune_lr must be >= 0");
  source_train.validate();
  target_train.validate();
  pretrain.validate();
  ssl.validate();
  kd.validate();
  for (const auto& m : methods) (void)parse_method(m);
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.source_train.epochs = 15;
  cfg.source_train.batch_size = 64;
  cfg.source_train.sgd.learning_rate = 0.05;
  cfg.source_train.sgd.decay_epochs = {10};
  return cfg;
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
  return {{"task", task_spec_to_json(cfg.task)},
          {"source_arch", cfg.source_arch},
          {"target_arch", cfg.target_arch},
          {"source_train", train_config_to_json(cfg.source_train)},
          {"target_train", train_config_to_json(cfg.target_train)},
          {"finetune_lr", cfg.finetune_lr},
          {"head_scale", cfg.head_scale},
          {"pretrain", pretrain_config_to_json(cfg.pretrain)},
          {"pp_strategy", to_string(cfg.pp_strategy)},
          {"filter_threshold", cfg.filter_threshold},
          {"ssl", ssl_config_to_json(cfg.ssl)},
          {"kd", kd_config_to_json(cfg.kd)},
          {"label_fn", to_string(cfg.label_fn)},
          {"label_temperature", cfg.label_temperature},
          {"generator_mode", to_string(cfg.generator_mode)},
          {"pseudo_size", cfg.pseudo_size},
          {"master_seed", cfg.master_seed},
          {"seeds", cfg.seeds},
          {"methods", cfg.methods},
          {"output_dir", cfg.output_dir}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg = default_experiment_config();
  try {
    if (j.contains("task")) cfg.task = task_spec_from_json(j.at("task"));
    cfg.source_arch = j.value("source_arch", cfg.source_arch);
    cfg.target_arch = j.value("target_arch", cfg.target_arch);
    if (j.contains("source_train")) cfg.source_train = train_config_from_json(j.at("source_train"), cfg.source_train);
    if (j.contains("target_train")) cfg.target_train = train_config_from_json(j.at("target_train"), cfg.target_train);
    cfg.finetune_lr = j.value("finetune_lr", cfg.finetune_lr);
    cfg.head_scale = j.value("head_scale", cfg.head_scale);
    if (j.contains("pretrain")) cfg.pretrain = pretrain_config_from_json(j.at("pretrain"), cfg.pretrain);
    if (j.contains("pp_strategy")) cfg.pp_strategy = parse_pretrain_strategy(j.at("pp_strategy").get<std::string>());
    cfg.filter_threshold = j.value("filter_threshold", cfg.filter_threshold);
    if (j.contains("ssl")) cfg.ssl = ssl_config_from_json(j.at("ssl"), cfg.ssl);
    if (j.contains("kd")) cfg.kd = kd_config_from_json(j.at("kd"), cfg.kd);
    if (j.contains("label_fn")) cfg.label_fn = parse_label_function(j.at("label_fn").get<std::string>());
    cfg.label_temperature = j.value("label_temperature", cfg.label_temperature);
    if (j.contains("generator_mode"))
      cfg.generator_mode = parse_conditioning_mode(j.at("generator_mode").get<std::string>());
    cfg.pseudo_size = j.value("pseudo_size", cfg.pseudo_size);
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.seeds = j.value("seeds", cfg.seeds);
    cfg.methods = j.value("methods", cfg.methods);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = experiment_config_to_json(cfg);
  j.erase("methods");
  j.erase("seeds");
  j.erase("output_dir");
  const std::string text = dump_json(j);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_seed_override(ExperimentConfig& cfg) {
  const char* env = std::getenv("SEED_OVERRIDE");
  if (!env || !*env) return;
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(env);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      seeds.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ValidationError("SEED_OVERRIDE: '" + item + "' is not a seed");
    }
  }
  if (seeds.empty()) throw ValidationError("SEED_OVERRIDE: no seeds given");
  cfg.seeds = std::move(seeds);
}

std::string csv_row(const RunRecord& r) {
  char acc[32], fd[32], secs[32];
  std::snprintf(acc, sizeof(acc), "%.17g", r.error.empty() ? r.accuracy : std::nan(""));
  std::snprintf(fd, sizeof(fd), "%.17g", r.fd_pseudo_target);
  std::snprintf(secs, sizeof(secs), "%.3f", r.seconds);
  return r.method + "," + std::to_string(r.seed) + "," + acc + "," + fd + "," + secs + "," + r.config_hash;
}

MethodSpec parse_method(const std::string& name) {
  MethodSpec spec;
  const auto colon = name.find(':');
  spec.base = name.substr(0, colon);
  static const char* kBases[] = {"scratch", "pp", "pssl", "pp_pssl", "logit_matching", "soft_target",
                                 "pseudo_supervised", "teacher"};
  if (std::find(std::begin(kBases), std::end(kBases), spec.base) == std::end(kBases))
    throw ValidationError("unknown method '" + name + "'");
  if (colon == std::string::npos) return spec;
  std::stringstream ss(name.substr(colon + 1));
  std::string opt;
  while (std::getline(ss, opt, ',')) {
    const auto eq = opt.find('=');
    if (eq == std::string::npos) throw ValidationError("method option '" + opt + "' is not key=value");
    const std::string key = opt.substr(0, eq);
    const std::string value = opt.substr(eq + 1);
    if (key == "ssl") spec.ssl = parse_ssl_method(value);
    else if (key == "pp") spec.pp = parse_pretrain_strategy(value);
    else if (key == "label") spec.label = parse_label_function(value);
    else throw ValidationError("unknown method option '" + key + "'");
  }
  return spec;
}

namespace {

/// Lazily built per-seed artifacts. Source data is only touched to build the
/// source classifier and generator; method code receives the classifier,
/// generator and labeled target set.
class SeedContext {
 public:
  SeedContext(const ExperimentConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    TaskPairSpec spec = cfg.task;
    spec.seed = derive_seed(derive_seed(cfg.task.seed, "task"), seed);
    task_ = make_task_pair(spec);
    source_ = train_source_classifier(task_.source, cfg.source_arch, cfg.source_train, artifact_seed("source"));
    generator_ = std::make_unique<ConditionalGenerator>(fit_source_generator(task_.source, cfg.generator_mode));
    task_.source = LabeledDataset{};
  }

  std::uint64_t artifact_seed(const std::string& tag) const {
    return derive_seed(derive_seed(cfg_.master_seed, tag), seed_);
  }

  const LabeledDataset& target_train() const { return task_.target_train; }
  const LabeledDataset& target_test() const { return task_.target_test; }
  const Mlp& source() const { return source_; }
  const ConditionalGenerator& generator() const { return *generator_; }

  const PseudoLabelSet& labels(LabelFunction fn) {
    auto it = labels_.find(fn);
    if (it == labels_.end()) {
      Rng rng(artifact_seed("pcs-labels:" + to_string(fn)));
      it = labels_.emplace(fn, pseudo_labels(source_, task_.target_train, fn, rng,
                                             {.temperature = cfg_.label_temperature}))
               .first;
    }
    return it->second;
  }

  const PseudoDataset& pseudo(LabelFunction fn) {
    auto it = pseudo_.find(fn);
    if (it == pseudo_.end()) {
      Rng rng(artifact_seed("pcs-samples:" + to_string(fn)));
      it = pseudo_.emplace(fn, build_pseudo_dataset(*generator_, labels(fn), cfg_.pseudo_size, rng)).first;
    }
    return it->second;
  }

  double fd(LabelFunction fn) {
    auto it = fd_.find(fn);
    if (it == fd_.end()) it = fd_.emplace(fn, frechet_distance(pseudo(fn).data.features, task_.target_train.features)).first;
    return it->second;
  }

  const Mlp& pretrained(PretrainStrategy s, LabelFunction fn) {
    const std::string key = to_string(s) + (s == PretrainStrategy::kPcs ? ":" + to_string(fn) : "");
    auto it = pretrained_.find(key);
    if (it == pretrained_.end()) {
      std::vector<int> arch = cfg_.target_arch;
      arch.back() = generator_->num_classes();
      PretrainLabels pl;
      if (s == PretrainStrategy::kFiltered) pl.classes = confidence_filter(source_, task_.target_train, cfg_.filter_threshold);
      if (s == PretrainStrategy::kPcs) pl.pcs_labels = &labels(fn);
      // Uniform and offline share a seed so the offline pool is drawn from the
      // same stream as the online batches.
      const std::string tag = s == PretrainStrategy::kOffline ? "uniform" : to_string(s);
      it = pretrained_.emplace(key, pseudo_pretrain(arch, *generator_, cfg_.pretrain, s, artifact_seed("pp:" + tag), pl)).first;
    }
    return it->second;
  }

  const Mlp& teacher() {
    if (!teacher_) {
      TrainConfig tc = cfg_.target_train;
      tc.sgd.learning_rate = cfg_.finetune_lr;
      teacher_ = std::make_unique<Mlp>(finetune_teacher(source_, task_.target_train, tc, artifact_seed("teacher"), cfg_.head_scale));
    }
    return *teacher_;
  }

 private:
  const ExperimentConfig& cfg_;
  std::uint64_t seed_;
  TaskPair task_;
  Mlp source_;
  std::unique_ptr<ConditionalGenerator> generator_;
  std::map<LabelFunction, PseudoLabelSet> labels_;
  std::map<LabelFunction, PseudoDataset> pseudo_;
  std::map<LabelFunction, double> fd_;
  std::map<std::string, Mlp> pretrained_;
  std::unique_ptr<Mlp> teacher_;
};

Mlp run_method(const ExperimentConfig& cfg, SeedContext& ctx, const MethodSpec& m) {
  const LabelFunction fn = m.label.value_or(cfg.label_fn);
  SslConfig ssl = cfg.ssl;
  if (m.ssl) ssl.method = *m.ssl;
  const PretrainStrategy strategy = m.pp.value_or(cfg.pp_strategy);
  // Target-training init and batch order are shared by all methods of a seed.
  const std::uint64_t tseed = ctx.artifact_seed("target");
  TrainConfig finetune = cfg.target_train;
  finetune.sgd.learning_rate = cfg.finetune_lr;
  const int kt = ctx.target_train().num_classes;

  auto pp_init = [&] {
    Rng head_rng(derive_seed(tseed, "head"));
    return swap_final_layer(ctx.pretrained(strategy, fn), kt, cfg.head_scale, head_rng);
  };

  if (m.base == "scratch") return train_scratch(cfg.target_arch, ctx.target_train(), cfg.target_train, tseed);
  if (m.base == "pp") return train_supervised(pp_init(), ctx.target_train(), finetune, tseed);
  if (m.base == "pssl")
    return train_pssl(init_classifier(cfg.target_arch, tseed), ctx.target_train(), ctx.pseudo(fn).data, ssl,
                      cfg.target_train, tseed);
  if (m.base == "pp_pssl") return train_pssl(pp_init(), ctx.target_train(), ctx.pseudo(fn).data, ssl, finetune, tseed);
  if (m.base == "logit_matching" || m.base == "soft_target") {
    KdConfig kd = cfg.kd;
    kd.method = parse_kd_method(m.base);
    return kd_train(cfg.target_arch, ctx.teacher(), ctx.target_train(), kd, cfg.target_train, tseed);
  }
  if (m.base == "pseudo_supervised")
    return train_pseudo_supervised(init_classifier(cfg.target_arch, tseed), ctx.target_train(), ctx.pseudo(fn),
                                   cfg.target_train, tseed);
  if (m.base == "teacher") return ctx.teacher();
  throw ValidationError("unknown method '" + m.base + "'");
}

}  // namespace

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  std::ofstream csv;
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    write_json_file(std::filesystem::path(cfg.output_dir) / "config.json", experiment_config_to_json(cfg));
    csv.open(std::filesystem::path(cfg.output_dir) / "results.csv", std::ios::binary);
    if (!csv) throw ValidationError("cannot write results.csv in " + cfg.output_dir);
    csv << kCsvHeader << '\n' << std::flush;
  }

  std::vector<RunRecord> records;
  for (std::uint64_t seed : cfg.seeds) {
    std::unique_ptr<SeedContext> ctx;
    std::string ctx_error;
    try {
      ctx = std::make_unique<SeedContext>(cfg, seed);
    } catch (const std::exception& e) {
      ctx_error = e.what();
    }
    for (const auto& name : cfg.methods) {
      RunRecord rec;
      rec.method = name;
      rec.seed = seed;
      rec.config_hash = hash;
      const auto start = std::chrono::steady_clock::now();
      try {
        if (!ctx) throw std::runtime_error(ctx_error);
        const MethodSpec m = parse_method(name);
        const Mlp model = run_method(cfg, *ctx, m);
        rec.accuracy = accuracy(model, ctx->target_test());
        rec.fd_pseudo_target = ctx->fd(m.label.value_or(cfg.label_fn));
      } catch (const std::exception& e) {
        rec.error = e.what();
        rec.accuracy = std::nan("");
      }
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (csv.is_open()) csv << csv_row(rec) << '\n' << std::flush;
      records.push_back(std::move(rec));
    }
  }
  return records;
}

AlignmentStudy alignment_study(const ExperimentConfig& base, const std::vector<double>& ladder) {
  if (ladder.size() < 4) throw ValidationError("alignment_study: need at least four rungs");
  AlignmentStudy study;
  study.align_noise = ladder;
  for (double sigma : ladder) {
    ExperimentConfig cfg = base;
    cfg.task.align_noise = sigma;
    cfg.methods = {"scratch", "pssl"};
    cfg.output_dir.clear();
    const auto recs = run_experiment(cfg);
    double fd = 0.0, gain = 0.0;
    int n = 0;
    for (std::size_t i = 0; i + 1 < recs.size(); i += 2) {
      if (!recs[i].error.empty() || !recs[i + 1].error.empty()) continue;
      fd += recs[i + 1].fd_pseudo_target;
      gain += recs[i + 1].accuracy - recs[i].accuracy;
      ++n;
    }
    if (n == 0) throw TrainingError("alignment_study: every run failed at align_noise " + std::to_string(sigma));
    study.fd.push_back(fd / n);
    study.gain.push_back(gain / n);
    study.records.insert(study.records.end(), recs.begin(), recs.end());
  }
  study.rho = spearman(study.fd, study.gain);
  return study;
}

}  // namespace ptl
