#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ptl/data.hpp"
#include "ptl/distill.hpp"
#include "ptl/labels.hpp"
#include "ptl/pretrain.hpp"
#include "ptl/pssl.hpp"
#include "ptl/training.hpp"

namespace ptl {

/// Everything that determines an experiment grid. Architectures are full
/// width lists `{input, hidden..., output}`; source and target must differ.
struct ExperimentConfig {
  TaskPairSpec task;
  std::vector<int> source_arch{16, 128, 20};
  std::vector<int> target_arch{16, 64, 64, 8};
  TrainConfig source_train;
  TrainConfig target_train;
  // Learning rate for target training started from pre-trained weights.
  double finetune_lr = 0.005;
  double head_scale = 1.0;
  PretrainConfig pretrain;
  PretrainStrategy pp_strategy = PretrainStrategy::kUniform;
  double filter_threshold = 0.001;
  SslConfig ssl;
  KdConfig kd;
  LabelFunction label_fn = LabelFunction::kSoftmax;
  double label_temperature = 0.4;
  ConditioningMode generator_mode = ConditioningMode::kInterpolate;
  int pseudo_size = 5000;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::string> methods{"scratch", "pp", "pssl", "pp_pssl"};
  std::string output_dir;

  void validate() const;
};

/// Desk-scale defaults used by the CLI and the acceptance suite.
ExperimentConfig default_experiment_config();

json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const json& j);

/// Hex FNV-1a hash of the canonical JSON of every field that affects a
/// run's result (the method list, seed list and output directory excluded).
std::string config_hash(const ExperimentConfig& cfg);

/// Replaces the seed list with the comma-separated SEED_OVERRIDE value when
/// that variable is set.
void apply_seed_override(ExperimentConfig& cfg);

struct RunRecord {
  std::string method;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double fd_pseudo_target = 0.0;
  double seconds = 0.0;
  std::string config_hash;
  std::string error;  // empty on success
};

inline constexpr const char* kCsvHeader = "method,seed,accuracy,fd_pseudo_target,seconds,config_hash";
std::string csv_row(const RunRecord& r);

/// A method name is `base[:key=value,...]`. Bases: scratch, pp, pssl,
/// pp_pssl, logit_matching, soft_target, pseudo_supervised, teacher. Keys:
/// ssl (SSL method), pp (strategy), label (label function).
struct MethodSpec {
  std::string base;
  std::optional<SslMethod> ssl;
  std::optional<PretrainStrategy> pp;
  std::optional<LabelFunction> label;
};
MethodSpec parse_method(const std::string& name);

/// Runs every method for every seed, in seed-major then method order. With a
/// non-empty output directory, rows are appended to results.csv as they
/// finish and the resolved config is written next to it.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg);

struct AlignmentStudy {
  std::vector<double> align_noise;
  std::vector<double> fd;    // mean FD(pseudo, target) per rung
  std::vector<double> gain;  // mean (P-SSL - scratch) accuracy per rung
  std::optional<double> rho;
  std::vector<RunRecord> records;
};

/// Sweeps the target offset scale. Each rung runs scratch and pssl.
AlignmentStudy alignment_study(const ExperimentConfig& base, const std::vector<double>& ladder);

}  // namespace ptl
