// uniq - command-line front end for the noise-injection quantization toolkit.
//
// Subcommands: fit-quantizer, train, bops, eval, datasets.
// Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numeric error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "uniq/bops.hpp"
#include "uniq/config.hpp"
#include "uniq/container.hpp"
#include "uniq/dataset.hpp"
#include "uniq/dist_model.hpp"
#include "uniq/noise_train.hpp"
#include "uniq/qinfer.hpp"
#include "uniq/quantizer.hpp"
#include "uniq/schedule.hpp"
#include "uniq/zoo.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

std::string data_root() {
  const char* env = std::getenv("UNIQ_DATA_DIR");
  return env ? env : ".";
}

uniq::QuantMethod parse_method(const std::string& s) {
  if (s == "kquantile") return uniq::QuantMethod::kquantile;
  if (s == "kmeans") return uniq::QuantMethod::kmeans;
  if (s == "uniform") return uniq::QuantMethod::uniform;
  throw uniq::ConfigError("config: field 'method' must be one of kquantile|kmeans|uniform");
}

// Resolves a dataset spec to train/test splits. "synthetic" is the
// procedural digit set; "synthetic-2g" the two-Gaussian sanity set; "mnist"
// (or a directory path) reads IDX files under UNIQ_DATA_DIR / the path.
void resolve_dataset(const std::string& spec, uniq::Dataset& train,
                     uniq::Dataset& test, std::uint64_t seed) {
  if (spec.empty() || spec == "synthetic") {
    train = uniq::make_synthetic_digits(20000, seed);
    test = uniq::make_synthetic_digits(10000, seed + 1);
    return;
  }
  if (spec == "synthetic-2g") {
    train = uniq::make_synthetic_two_gaussian(2000, seed);
    test = uniq::make_synthetic_two_gaussian(1000, seed + 1);
    return;
  }
  const std::string dir = (spec == "mnist") ? data_root() : spec;
  train = uniq::load_mnist_idx(dir + "/train-images-idx3-ubyte",
                               dir + "/train-labels-idx1-ubyte");
  test = uniq::load_mnist_idx(dir + "/t10k-images-idx3-ubyte",
                              dir + "/t10k-labels-idx1-ubyte");
}

uniq::SavedModel quant_model_to_saved(const uniq::QuantModel& model) {
  uniq::SavedModel out;
  out.net = model.net;
  out.resize_slots();
  for (const auto& q : model.qlayers) {
    if (q.weight_spec) out.weight_spec[q.layer] = *q.weight_spec;
    if (q.act && q.act_site) out.act_spec[q.layer] = q.act->spec;
  }
  // The saved network must not point at state that dies with the model.
  for (auto& l : out.net.layers) l.output_quantizer = nullptr;
  return out;
}

int cmd_fit_quantizer(const std::string& container_path, std::size_t k,
                      const std::string& method_name, const std::string& out_path,
                      bool empirical) {
  if (k < 2) throw uniq::ConfigError("fit-quantizer: k must be >= 2");
  uniq::QuantMethod method = parse_method(method_name);
  uniq::SavedModel model = uniq::load_model(container_path);
  model.resize_slots();
  std::cout << "layer,levels,method,mse,normality_W\n";
  for (std::size_t i = 0; i < model.net.layers.size(); ++i) {
    const auto& l = model.net.layers[i];
    if (l.kind != uniq::LayerKind::conv2d && l.kind != uniq::LayerKind::dense)
      continue;
    std::span<const double> w(l.weight.data.data(), l.weight.size());
    uniq::DistModel dist = empirical
                               ? uniq::fit_empirical(w, std::min<std::size_t>(1024, w.size()))
                               : uniq::fit_gaussian(w);
    uniq::QuantizerSpec spec =
        uniq::build_weight_spec(model.net, i, dist, method, k);
    const double w_stat = uniq::normality_stat(w);
    std::cout << l.name << ',' << k << ',' << method_name << ','
              << uniq::mse(spec, w) << ',' << w_stat << '\n';
    model.weight_spec[i] = std::move(spec);
  }
  if (!out_path.empty()) uniq::save_model(out_path, model);
  return 0;
}

int cmd_train(const uniq::ExperimentConfig& cfg, const std::string& out_path,
              const std::string& log_path, const std::string& init_path) {
  uniq::Dataset train_set, test_set;
  resolve_dataset(cfg.dataset, train_set, test_set, cfg.seed);
  uniq::BatchList train = uniq::make_batches(train_set, cfg.batch_size, cfg.seed);
  uniq::BatchList test = uniq::make_batches(test_set, 256, cfg.seed + 1);

  uniq::Network net;
  if (!init_path.empty()) {
    net = uniq::load_model(init_path).net;
  } else {
    net = uniq::build_toy_network(cfg.arch, cfg.seed);
  }

  uniq::SgdState sgd;
  sgd.lr = cfg.learning_rate;
  sgd.momentum = cfg.momentum;
  sgd.weight_decay = cfg.weight_decay;

  uniq::QuantModel model = uniq::make_quant_model(
      std::move(net), parse_method(cfg.method), std::size_t(1) << cfg.bits_w,
      std::size_t(1) << cfg.bits_a, cfg.seed, cfg.dist == "empirical");

  // Fine-tune mode without an initial container: train a full-precision
  // baseline first, then quantize it.
  if (cfg.mode == "fine-tune" && init_path.empty()) {
    std::size_t step = 0;
    for (std::size_t e = 0; e < 2; ++e)
      uniq::train_epoch(model, sgd, train, &step);
    std::cerr << "baseline accuracy " << uniq::evaluate(model, test) << '\n';
  }

  uniq::StagePlan plan;
  plan.blocks = uniq::make_blocks(model.qlayers.size(), cfg.stages);
  plan.epochs_per_stage = cfg.epochs_per_stage;
  plan.restart_iterations = cfg.restart_iterations;

  std::vector<uniq::Tensor> calib;
  for (std::size_t i = 0; i < std::min<std::size_t>(4, train.size()); ++i)
    calib.push_back(train[i].input);

  std::vector<uniq::StageRecord> log;
  uniq::run_schedule(model, plan, train, sgd, calib, &log, &test);

  if (!log_path.empty()) {
    std::ofstream os(log_path);
    if (!os) throw uniq::DatasetError("train: cannot write '" + log_path + "'");
    uniq::write_stage_csv(os, log);
  } else {
    uniq::write_stage_csv(std::cout, log);
  }
  const double acc = uniq::evaluate(model, test);
  std::cout << "final_quantized_accuracy," << acc << '\n';
  if (!out_path.empty()) {
    uniq::SavedModel saved = quant_model_to_saved(model);
    // Input quantizer fitted on the calibration batches, for integer
    // inference on the saved container.
    std::vector<double> pix;
    for (const auto& t : calib)
      pix.insert(pix.end(), t.data.data(), t.data.data() + t.data.size());
    uniq::DistModel in_dist = uniq::fit_empirical(pix, 1024);
    uniq::QuantizerSpec in_spec = uniq::build_kquantile_robust(in_dist, model.k_a);
    in_spec.domain = uniq::QuantizerSpec::Domain::activation;
    saved.input_act_spec = std::move(in_spec);
    uniq::save_model(out_path, saved);
  }
  return 0;
}

int cmd_bops(const std::string& arch, std::uint64_t b_w, std::uint64_t b_a,
             bool quantize_first_last, const std::string& arch_file,
             const std::string& out_path) {
  std::vector<uniq::LayerShape> shapes;
  if (!arch_file.empty()) {
    std::ifstream is(arch_file);
    if (!is) throw uniq::DatasetError("bops: cannot open '" + arch_file + "'");
    shapes = uniq::load_arch_file(is);
  } else {
    shapes = uniq::arch_catalog(arch);
  }
  uniq::BopsReport report =
      uniq::model_bops(shapes, b_w, b_a, quantize_first_last);
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    if (!os) throw uniq::DatasetError("bops: cannot write '" + out_path + "'");
    uniq::write_report_csv(os, report);
  } else {
    uniq::write_report_csv(std::cout, report);
  }
  std::cerr << "total " << report.total_bops / 1e9 << " GBOPs, size "
            << report.model_size_bits / 1e6 << " Mbit\n";
  return 0;
}

int cmd_eval(const std::string& container_path, const std::string& dataset,
             const std::string& mode, std::uint64_t seed) {
  uniq::SavedModel model = uniq::load_model(container_path);
  uniq::Dataset train_set, test_set;
  resolve_dataset(dataset, train_set, test_set, seed);
  uniq::BatchList test = uniq::make_batches(test_set, 256, seed + 1);

  std::optional<uniq::QuantizedNet> qnet;
  if (mode == "lut") qnet.emplace(model);

  std::size_t correct = 0, total = 0;
  for (const auto& batch : test) {
    uniq::Tensor logits;
    if (mode == "float") {
      logits = model.net.forward(batch.input);
    } else if (mode == "simulated") {
      logits = uniq::simulate_quantized(model, batch.input);
    } else if (mode == "lut") {
      logits = qnet->forward(batch.input);
    } else {
      throw uniq::ConfigError("eval: mode must be one of float|simulated|lut");
    }
    const std::size_t classes =
        logits.shape[1] * logits.shape[2] * logits.shape[3];
    for (std::size_t b = 0; b < batch.labels.size(); ++b) {
      const double* row = logits.data.data() + b * classes;
      std::size_t arg = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (row[c] > row[arg]) arg = c;
      correct += (static_cast<int>(arg) == batch.labels[b]);
      ++total;
    }
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(total);
  std::cout << "mode,accuracy\n" << mode << ',' << acc << '\n';
  return 0;
}

int cmd_datasets(const std::string& kind, const std::string& out_dir,
                 std::size_t train_n, std::size_t test_n, std::uint64_t seed) {
  uniq::Dataset train, test;
  if (kind == "digits") {
    train = uniq::make_synthetic_digits(train_n, seed);
    test = uniq::make_synthetic_digits(test_n, seed + 1);
  } else if (kind == "two-gaussian") {
    train = uniq::make_synthetic_two_gaussian(train_n, seed);
    test = uniq::make_synthetic_two_gaussian(test_n, seed + 1);
  } else {
    throw uniq::ConfigError("datasets: kind must be digits|two-gaussian");
  }
  uniq::write_mnist_idx(out_dir + "/train-images-idx3-ubyte",
                        out_dir + "/train-labels-idx1-ubyte", train);
  uniq::write_mnist_idx(out_dir + "/t10k-images-idx3-ubyte",
                        out_dir + "/t10k-labels-idx1-ubyte", test);
  std::cout << "wrote " << train.size() << " train and " << test.size()
            << " test samples to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noise-injection quantization toolkit"};
  app.require_subcommand(1);

  // fit-quantizer
  std::string fq_container, fq_method = "kquantile", fq_out;
  std::size_t fq_k = 8;
  bool fq_empirical = false;
  auto* fit = app.add_subcommand("fit-quantizer",
                                 "fit per-layer weight quantizers");
  fit->add_option("container", fq_container, "model container")->required();
  fit->add_option("--k", fq_k, "number of levels");
  fit->add_option("--method", fq_method, "kquantile|kmeans|uniform");
  fit->add_option("--out", fq_out, "output container with specs");
  fit->add_flag("--empirical", fq_empirical, "empirical distribution model");

  // train
  std::string tr_config, tr_out, tr_log, tr_init;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::size_t> tr_bits_w, tr_bits_a, tr_stages, tr_restarts;
  std::optional<std::string> tr_method;
  auto* train = app.add_subcommand("train", "staged quantized training");
  train->add_option("--config", tr_config, "experiment config (JSON)")->required();
  train->add_option("--seed", tr_seed, "override seed");
  train->add_option("--bits-w", tr_bits_w, "override weight bits");
  train->add_option("--bits-a", tr_bits_a, "override activation bits");
  train->add_option("--stages", tr_stages, "override stage count");
  train->add_option("--restarts", tr_restarts, "override restart iterations");
  train->add_option("--method", tr_method, "override quantizer method");
  train->add_option("--out", tr_out, "output container path");
  train->add_option("--log", tr_log, "stage CSV path");
  train->add_option("--init", tr_init, "initial container (fine-tune)");

  // bops
  std::string bp_arch, bp_arch_file, bp_out;
  std::uint64_t bp_bw = 32, bp_ba = 32;
  bool bp_qfl = false;
  auto* bops = app.add_subcommand("bops", "complexity accounting");
  bops->add_option("arch", bp_arch,
                   "alexnet|resnet18|resnet34|resnet50|mobilenet_v1");
  bops->add_option("bits_w", bp_bw, "weight bits");
  bops->add_option("bits_a", bp_ba, "activation bits");
  bops->add_flag("--quantize-first-last", bp_qfl,
                 "quantize the first and last layers too");
  bops->add_option("--arch-file", bp_arch_file, "custom layer-shape file");
  bops->add_option("--out", bp_out, "CSV output path");

  // eval
  std::string ev_container, ev_dataset = "synthetic", ev_mode = "float";
  std::uint64_t ev_seed = 42;
  auto* eval_cmd = app.add_subcommand("eval", "accuracy evaluation");
  eval_cmd->add_option("container", ev_container, "model container")->required();
  eval_cmd->add_option("--dataset", ev_dataset, "dataset spec");
  eval_cmd->add_option("--mode", ev_mode, "float|simulated|lut");
  eval_cmd->add_option("--seed", ev_seed, "shuffle seed");

  // datasets
  std::string ds_kind = "digits", ds_out = ".";
  std::size_t ds_train = 20000, ds_test = 10000;
  std::uint64_t ds_seed = 42;
  auto* datasets = app.add_subcommand("datasets", "generate IDX datasets");
  datasets->add_option("--kind", ds_kind, "digits|two-gaussian");
  datasets->add_option("--out", ds_out, "output directory");
  datasets->add_option("--train", ds_train, "training samples");
  datasets->add_option("--test", ds_test, "test samples");
  datasets->add_option("--seed", ds_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed())
      return cmd_fit_quantizer(fq_container, fq_k, fq_method, fq_out,
                               fq_empirical);
    if (train->parsed()) {
      uniq::ExperimentConfig cfg = uniq::load_config(tr_config);
      if (tr_seed) cfg.seed = *tr_seed;
      if (tr_bits_w) cfg.bits_w = *tr_bits_w;
      if (tr_bits_a) cfg.bits_a = *tr_bits_a;
      if (tr_stages) cfg.stages = *tr_stages;
      if (tr_restarts) cfg.restart_iterations = *tr_restarts;
      if (tr_method) cfg.method = *tr_method;
      cfg.validate();
      return cmd_train(cfg, tr_out, tr_log, tr_init);
    }
    if (bops->parsed())
      return cmd_bops(bp_arch, bp_bw, bp_ba, bp_qfl, bp_arch_file, bp_out);
    if (eval_cmd->parsed())
      return cmd_eval(ev_container, ev_dataset, ev_mode, ev_seed);
    if (datasets->parsed())
      return cmd_datasets(ds_kind, ds_out, ds_train, ds_test, ds_seed);
  } catch (const uniq::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const uniq::ContainerError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const uniq::DatasetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const uniq::DegenerateInputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const uniq::AccumulatorOverflowError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return 0;
}
