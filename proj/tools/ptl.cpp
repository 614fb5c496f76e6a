// Command-line front end: task construction, the individual pipeline stages
// and the experiment grid. Every artifact is a JSON file.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ptl/distill.hpp"
#include "ptl/harness.hpp"
#include "ptl/io.hpp"
#include "ptl/metrics.hpp"
#include "ptl/pcs.hpp"
#include "ptl/pretrain.hpp"
#include "ptl/pssl.hpp"

namespace {

using namespace ptl;

std::vector<int> parse_widths(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ValidationError("bad width '" + item + "' in '" + text + "'");
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Hidden widths plus the input and output widths implied by the data.
std::vector<int> full_arch(const std::string& hidden, Eigen::Index input, int output) {
  std::vector<int> arch{static_cast<int>(input)};
  if (!hidden.empty())
    for (int w : parse_widths(hidden)) arch.push_back(w);
  arch.push_back(output);
  return arch;
}

struct TrainFlags {
  int epochs = 60;
  int batch = 16;
  double lr = -1.0;  // negative: use the command's default
  std::string decay = "30,50";

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "training epochs")->capture_default_str();
    app->add_option("--batch", batch, "labeled mini-batch size")->capture_default_str();
    app->add_option("--lr", lr, "initial learning rate");
    app->add_option("--decay-epochs", decay, "comma-separated epochs where lr is multiplied by 0.1")
        ->capture_default_str();
  }

  TrainConfig config(double default_lr) const {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.sgd.learning_rate = lr >= 0 ? lr : default_lr;
    cfg.sgd.decay_epochs = decay.empty() ? std::vector<int>{} : parse_widths(decay);
    cfg.validate();
    return cfg;
  }
};

Mlp load_classifier(const std::string& path) { return classifier_from_json(read_json_file(path)); }
LabeledDataset load_labeled(const std::string& path) { return labeled_dataset_from_json(read_json_file(path)); }

// Accepts labeled, unlabeled and pseudo dataset files alike.
MatrixXd load_features(const std::string& path) {
  const json j = read_json_file(path);
  if (!j.contains("features")) throw ValidationError(path + ": no 'features' field");
  return matrix_from_json(j.at("features"));
}

// Brings a checkpoint's head in line with the target class count.
Mlp adapt_head(Mlp net, int classes, std::uint64_t seed) {
  if (net.output_dim() == classes) return net;
  Rng rng(derive_seed(seed, "head"));
  return swap_final_layer(net, classes, 1.0, rng);
}

void write_metrics_csv(const std::string& path, const TrainLog& log, double train_acc, std::optional<double> test_acc) {
  std::ostringstream out;
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) out << e << ',' << format_double(log.epoch_loss[e]) << '\n';
  out << "train_accuracy," << format_double(train_acc) << '\n';
  if (test_acc) out << "test_accuracy," << format_double(*test_acc) << '\n';
  write_text_file(path, out.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transfer learning from source generators and classifiers without source data"};
  app.require_subcommand(1);

  // make-task
  auto* make_task = app.add_subcommand("make-task", "build a synthetic source/target task pair");
  std::string task_config, task_out;
  std::uint64_t task_seed = 0;
  double task_align = -1.0;
  make_task->add_option("--config", task_config, "TaskPairSpec JSON (defaults when omitted)");
  make_task->add_option("--seed", task_seed, "task seed")->capture_default_str();
  make_task->add_option("--align-noise", task_align, "target mean offset scale");
  make_task->add_option("--out", task_out, "output directory")->required();

  // train-source
  auto* train_source = app.add_subcommand("train-source", "train the source classifier");
  std::string ts_data, ts_arch = "128", ts_out;
  std::uint64_t ts_seed = 0;
  TrainFlags ts_flags{.epochs = 15, .batch = 64, .lr = -1, .decay = "10"};
  train_source->add_option("--data", ts_data, "labeled source dataset")->required();
  train_source->add_option("--arch", ts_arch, "hidden widths")->capture_default_str();
  train_source->add_option("--seed", ts_seed)->capture_default_str();
  train_source->add_option("--out", ts_out, "checkpoint path")->required();
  ts_flags.add(train_source);

  // fit-generator
  auto* fit_gen = app.add_subcommand("fit-generator", "fit the class-conditional source generator");
  std::string fg_data, fg_mode = "interpolate", fg_out;
  fit_gen->add_option("--data", fg_data, "labeled source dataset")->required();
  fit_gen->add_option("--mode", fg_mode, "interpolate | mixture")->capture_default_str();
  fit_gen->add_option("--out", fg_out, "generator path")->required();

  // pcs
  auto* pcs = app.add_subcommand("pcs", "build a pseudo unlabeled dataset by conditional sampling");
  std::string pcs_clf, pcs_target, pcs_gen, pcs_label = "softmax", pcs_out;
  int pcs_n = 5000;
  double pcs_temp = 0.4;
  std::uint64_t pcs_seed = 0;
  pcs->add_option("--classifier", pcs_clf, "source classifier checkpoint")->required();
  pcs->add_option("--target", pcs_target, "labeled target dataset")->required();
  pcs->add_option("--generator", pcs_gen, "source generator")->required();
  pcs->add_option("--label-fn", pcs_label, "softmax|temp_softmax|argmax|sparsemax|classwise_mean|random")
      ->capture_default_str();
  pcs->add_option("--temperature", pcs_temp, "temp_softmax temperature")->capture_default_str();
  pcs->add_option("--n", pcs_n, "number of pseudo samples")->capture_default_str();
  pcs->add_option("--seed", pcs_seed)->capture_default_str();
  pcs->add_option("--out", pcs_out, "pseudo dataset path")->required();

  // pp
  auto* pp = app.add_subcommand("pp", "pseudo pre-train a target architecture on generated source samples");
  std::string pp_arch = "64,64", pp_gen, pp_strategy = "uniform", pp_out, pp_clf, pp_target, pp_label = "softmax";
  int pp_steps = 2000, pp_batch = 64;
  double pp_lr = 0.1, pp_threshold = 0.001, pp_offline_fraction = PretrainConfig{}.offline_fraction;
  std::uint64_t pp_seed = 0;
  pp->add_option("--arch", pp_arch, "hidden widths")->capture_default_str();
  pp->add_option("--generator", pp_gen, "source generator")->required();
  pp->add_option("--strategy", pp_strategy, "uniform|filtered|pcs|offline")->capture_default_str();
  pp->add_option("--steps", pp_steps)->capture_default_str();
  pp->add_option("--batch", pp_batch)->capture_default_str();
  pp->add_option("--lr", pp_lr)->capture_default_str();
  pp->add_option("--offline-fraction", pp_offline_fraction, "offline pool size / (steps * batch)")
      ->capture_default_str();
  pp->add_option("--classifier", pp_clf, "source classifier (filtered, pcs)");
  pp->add_option("--target", pp_target, "labeled target dataset (filtered, pcs)");
  pp->add_option("--label-fn", pp_label, "label function for the pcs strategy")->capture_default_str();
  pp->add_option("--threshold", pp_threshold, "confidence threshold for the filtered strategy")->capture_default_str();
  pp->add_option("--seed", pp_seed)->capture_default_str();
  pp->add_option("--out", pp_out, "checkpoint path")->required();

  // train
  auto* train = app.add_subcommand("train", "supervised target training from scratch or a checkpoint");
  std::string tr_target, tr_arch = "64,64", tr_init, tr_out, tr_metrics, tr_test;
  std::uint64_t tr_seed = 0;
  TrainFlags tr_flags;
  train->add_option("--target", tr_target, "labeled target dataset")->required();
  train->add_option("--arch", tr_arch, "hidden widths (when --init is absent)")->capture_default_str();
  train->add_option("--init", tr_init, "initial checkpoint; its head is replaced when class counts differ");
  train->add_option("--test", tr_test, "labeled test set for the metrics file");
  train->add_option("--seed", tr_seed)->capture_default_str();
  train->add_option("--out", tr_out, "checkpoint path")->required();
  train->add_option("--metrics", tr_metrics, "per-epoch CSV");
  tr_flags.add(train);

  // pssl
  auto* pssl = app.add_subcommand("pssl", "semi-supervised target training with a pseudo unlabeled dataset");
  std::string ps_init, ps_arch = "64,64", ps_target, ps_pseudo, ps_method = "uda", ps_out, ps_metrics, ps_test;
  double ps_lambda = 1.0, ps_beta = 0.5, ps_tau = 0.4, ps_aug = SslConfig{}.aug_strength;
  int ps_unsup = 64;
  std::uint64_t ps_seed = 0;
  TrainFlags ps_flags;
  pssl->add_option("--init", ps_init, "initial checkpoint (e.g. from pp)");
  pssl->add_option("--arch", ps_arch, "hidden widths (when --init is absent)")->capture_default_str();
  pssl->add_option("--target", ps_target, "labeled target dataset")->required();
  pssl->add_option("--pseudo", ps_pseudo, "pseudo unlabeled dataset")->required();
  pssl->add_option("--test", ps_test, "labeled test set for the metrics file");
  pssl->add_option("--method", ps_method, "uda|fixmatch|pseudo_label|soft_pseudo_label|entmin|consistency")
      ->capture_default_str();
  pssl->add_option("--lambda", ps_lambda)->capture_default_str();
  pssl->add_option("--beta", ps_beta)->capture_default_str();
  pssl->add_option("--tau", ps_tau)->capture_default_str();
  pssl->add_option("--unsup-batch", ps_unsup)->capture_default_str();
  pssl->add_option("--aug-strength", ps_aug)->capture_default_str();
  pssl->add_option("--seed", ps_seed)->capture_default_str();
  pssl->add_option("--out", ps_out, "checkpoint path")->required();
  pssl->add_option("--metrics", ps_metrics, "per-epoch CSV");
  ps_flags.add(pssl);

  // finetune-teacher
  auto* teacher = app.add_subcommand("finetune-teacher", "fine-tune the source classifier on the target task");
  std::string te_clf, te_target, te_out;
  std::uint64_t te_seed = 0;
  TrainFlags te_flags;
  teacher->add_option("--classifier", te_clf, "source classifier checkpoint")->required();
  teacher->add_option("--target", te_target, "labeled target dataset")->required();
  teacher->add_option("--seed", te_seed)->capture_default_str();
  teacher->add_option("--out", te_out, "checkpoint path")->required();
  te_flags.add(teacher);

  // distill
  auto* distill = app.add_subcommand("distill", "knowledge distillation into a target architecture");
  std::string di_teacher, di_arch = "64,64", di_method = "soft_target", di_target, di_out;
  double di_temp = 4.0, di_lambda = 1.0;
  std::uint64_t di_seed = 0;
  TrainFlags di_flags;
  distill->add_option("--teacher", di_teacher, "fine-tuned teacher checkpoint")->required();
  distill->add_option("--arch", di_arch, "student hidden widths")->capture_default_str();
  distill->add_option("--method", di_method, "logit_matching | soft_target")->capture_default_str();
  distill->add_option("--temp", di_temp)->capture_default_str();
  distill->add_option("--lambda", di_lambda)->capture_default_str();
  distill->add_option("--target", di_target, "labeled target dataset")->required();
  distill->add_option("--seed", di_seed)->capture_default_str();
  distill->add_option("--out", di_out, "checkpoint path")->required();
  di_flags.add(distill);

  // fid
  auto* fid = app.add_subcommand("fid", "Fréchet distance between the feature sets of two dataset files");
  std::string fid_a, fid_b;
  fid->add_option("--a", fid_a)->required();
  fid->add_option("--b", fid_b)->required();

  // filter
  auto* filter = app.add_subcommand("filter", "source classes selected by mean target confidence");
  std::string fi_clf, fi_target;
  double fi_threshold = 0.001;
  filter->add_option("--classifier", fi_clf)->required();
  filter->add_option("--target", fi_target)->required();
  filter->add_option("--threshold", fi_threshold)->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "top-1 accuracy of a checkpoint on a labeled dataset");
  std::string ev_clf, ev_data;
  eval->add_option("--classifier", ev_clf)->required();
  eval->add_option("--data", ev_data)->required();

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run a method grid over seeds and write results.csv");
  std::string ex_config, ex_out;
  experiment->add_option("--config", ex_config, "experiment JSON (defaults when omitted)");
  experiment->add_option("--out", ex_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*make_task) {
      TaskPairSpec spec = task_config.empty() ? TaskPairSpec{} : task_spec_from_json(read_json_file(task_config));
      if (make_task->count("--seed")) spec.seed = task_seed;
      if (task_align >= 0) spec.align_noise = task_align;
      const TaskPair pair = make_task_pair(spec);
      const std::filesystem::path dir(task_out);
      write_json_file(dir / "source.json", dataset_to_json(pair.source));
      write_json_file(dir / "target_train.json", dataset_to_json(pair.target_train));
      write_json_file(dir / "target_test.json", dataset_to_json(pair.target_test));
      json task = task_spec_to_json(spec);
      task["mixing"] = matrix_to_json(pair.mixing);
      write_json_file(dir / "task.json", task);
    } else if (*train_source) {
      const auto data = load_labeled(ts_data);
      const auto arch = full_arch(ts_arch, data.dim(), data.num_classes);
      const Mlp net = train_source_classifier(data, arch, ts_flags.config(0.05), ts_seed);
      write_json_file(ts_out, classifier_to_json(net));
      std::cout << "train_accuracy " << format_double(accuracy(net, data)) << '\n';
    } else if (*fit_gen) {
      const auto gen = fit_source_generator(load_labeled(fg_data), parse_conditioning_mode(fg_mode));
      write_json_file(fg_out, generator_to_json(gen));
    } else if (*pcs) {
      const Mlp clf = load_classifier(pcs_clf);
      const auto target = load_labeled(pcs_target);
      const auto gen = generator_from_json(read_json_file(pcs_gen));
      Rng label_rng(derive_seed(pcs_seed, "pcs-labels"));
      const auto labels = pseudo_labels(clf, target, parse_label_function(pcs_label), label_rng,
                                        {.temperature = pcs_temp});
      Rng sample_rng(derive_seed(pcs_seed, "pcs-samples"));
      write_json_file(pcs_out, pseudo_dataset_to_json(build_pseudo_dataset(gen, labels, pcs_n, sample_rng)));
    } else if (*pp) {
      const auto gen = generator_from_json(read_json_file(pp_gen));
      PretrainConfig cfg;
      cfg.steps = pp_steps;
      cfg.batch_size = pp_batch;
      cfg.sgd.learning_rate = pp_lr;
      cfg.sgd.decay_epochs = {static_cast<int>(0.6 * pp_steps)};
      cfg.offline_fraction = pp_offline_fraction;
      const auto strategy = parse_pretrain_strategy(pp_strategy);
      PretrainLabels labels;
      PseudoLabelSet pcs_labels;
      if (strategy == PretrainStrategy::kFiltered || strategy == PretrainStrategy::kPcs) {
        if (pp_clf.empty() || pp_target.empty())
          throw ValidationError("pp: --classifier and --target are required for the " + pp_strategy + " strategy");
        const Mlp clf = load_classifier(pp_clf);
        const auto target = load_labeled(pp_target);
        if (strategy == PretrainStrategy::kFiltered) {
          labels.classes = confidence_filter(clf, target, pp_threshold);
        } else {
          Rng rng(derive_seed(pp_seed, "pcs-labels"));
          pcs_labels = pseudo_labels(clf, target, parse_label_function(pp_label), rng);
          labels.pcs_labels = &pcs_labels;
        }
      }
      const auto arch = full_arch(pp_arch, gen.dim(), gen.num_classes());
      write_json_file(pp_out, classifier_to_json(pseudo_pretrain(arch, gen, cfg, strategy, pp_seed, labels)));
    } else if (*train) {
      const auto target = load_labeled(tr_target);
      const bool from_ckpt = !tr_init.empty();
      Mlp init = from_ckpt ? adapt_head(load_classifier(tr_init), target.num_classes, tr_seed)
                           : init_classifier(full_arch(tr_arch, target.dim(), target.num_classes), tr_seed);
      TrainLog log;
      const Mlp net = train_supervised(std::move(init), target, tr_flags.config(from_ckpt ? 0.005 : 0.05), tr_seed, {}, &log);
      write_json_file(tr_out, classifier_to_json(net));
      if (!tr_metrics.empty()) {
        std::optional<double> test_acc;
        if (!tr_test.empty()) test_acc = accuracy(net, load_labeled(tr_test));
        write_metrics_csv(tr_metrics, log, accuracy(net, target), test_acc);
      }
    } else if (*pssl) {
      const auto target = load_labeled(ps_target);
      const auto pseudo = pseudo_dataset_from_json(read_json_file(ps_pseudo));
      const bool from_ckpt = !ps_init.empty();
      Mlp init = from_ckpt ? adapt_head(load_classifier(ps_init), target.num_classes, ps_seed)
                           : init_classifier(full_arch(ps_arch, target.dim(), target.num_classes), ps_seed);
      SslConfig ssl{parse_ssl_method(ps_method), ps_lambda, ps_beta, ps_tau, ps_unsup, ps_aug};
      TrainLog log;
      const Mlp net = train_pssl(std::move(init), target, pseudo.data, ssl, ps_flags.config(from_ckpt ? 0.005 : 0.05),
                                 ps_seed, &log);
      write_json_file(ps_out, classifier_to_json(net));
      if (!ps_metrics.empty()) {
        std::optional<double> test_acc;
        if (!ps_test.empty()) test_acc = accuracy(net, load_labeled(ps_test));
        write_metrics_csv(ps_metrics, log, accuracy(net, target), test_acc);
      }
    } else if (*teacher) {
      const auto target = load_labeled(te_target);
      const Mlp net = finetune_teacher(load_classifier(te_clf), target, te_flags.config(0.005), te_seed);
      write_json_file(te_out, classifier_to_json(net));
    } else if (*distill) {
      const auto target = load_labeled(di_target);
      const Mlp teacher_net = load_classifier(di_teacher);
      KdConfig kd{parse_kd_method(di_method), di_lambda, di_temp};
      const auto arch = full_arch(di_arch, target.dim(), target.num_classes);
      write_json_file(di_out, classifier_to_json(kd_train(arch, teacher_net, target, kd, di_flags.config(0.05), di_seed)));
    } else if (*fid) {
      std::cout << format_double(frechet_distance(load_features(fid_a), load_features(fid_b))) << '\n';
    } else if (*filter) {
      std::cout << json(confidence_filter(load_classifier(fi_clf), load_labeled(fi_target), fi_threshold)).dump() << '\n';
    } else if (*eval) {
      std::cout << format_double(accuracy(load_classifier(ev_clf), load_labeled(ev_data))) << '\n';
    } else if (*experiment) {
      ExperimentConfig cfg = ex_config.empty() ? default_experiment_config()
                                               : experiment_config_from_json(read_json_file(ex_config));
      apply_seed_override(cfg);
      cfg.output_dir = ex_out;
      const auto records = run_experiment(cfg);
      std::map<std::string, std::pair<double, int>> means;
      std::vector<std::string> order;
      int failures = 0;
      for (const auto& r : records) {
        if (!r.error.empty()) {
          std::cerr << r.method << " seed " << r.seed << " failed: " << r.error << '\n';
          ++failures;
          continue;
        }
        if (!means.count(r.method)) order.push_back(r.method);
        means[r.method].first += r.accuracy;
        means[r.method].second += 1;
      }
      for (const auto& m : order)
        std::printf("%-28s mean accuracy %.4f over %d seeds\n", m.c_str(), means[m].first / means[m].second,
                    means[m].second);
      return failures ? 2 : 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
