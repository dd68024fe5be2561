// Acceptance gate: one pass/fail line per criterion. Exit code is the
// number of failed criteria. Tolerances are pinned in code next to each
// check; nothing here is configurable from outside.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "uniq/bops.hpp"
#include "uniq/container.hpp"
#include "uniq/dataset.hpp"
#include "uniq/noise_train.hpp"
#include "uniq/qinfer.hpp"
#include "uniq/quantizer.hpp"
#include "uniq/schedule.hpp"
#include "uniq/zoo.hpp"

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << criterion << ": "
            << detail << std::endl;
  if (!pass) ++g_failures;
}

template <typename F>
void run_criterion(int criterion, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(criterion, false, std::string("exception: ") + e.what());
  }
}

std::vector<double> normal_draws(std::size_t n, std::uint64_t seed) {
  std::vector<double> xs(n);
  uniq::Rng rng(seed);
  for (auto& x : xs) x = rng.normal();
  return xs;
}

// --- criterion 1: complexity accounting vs published figures ------------

void criterion_bops() {
  struct Target {
    const char* arch;
    std::uint64_t b_w, b_a;
    double gbops;
  };
  // Published totals in GBOPs, tolerance +-10%.
  const Target targets[] = {
      {"resnet18", 32, 32, 1920.0}, {"resnet18", 4, 8, 93.2},
      {"resnet18", 5, 8, 113.0},    {"resnet34", 4, 8, 166.0},
      {"resnet50", 4, 8, 174.0},    {"resnet50", 4, 32, 548.0},
      {"mobilenet_v1", 8, 8, 46.7},
  };
  struct SizeTarget {
    const char* arch;
    std::uint64_t b_w;
    double mbit;
  };
  // Published model sizes in Mbit, tolerance +-2%.
  const SizeTarget sizes[] = {
      {"resnet18", 32, 374.4},
      {"resnet18", 4, 46.4},
      {"resnet50", 4, 102.4},
      {"mobilenet_v1", 8, 33.6},
  };

  bool all = true;
  std::ostringstream detail;
  for (const auto& t : targets) {
    uniq::BopsReport r =
        uniq::model_bops(uniq::arch_catalog(t.arch), t.b_w, t.b_a, true);
    const double got = static_cast<double>(r.total_bops) / 1e9;
    const double rel = (got - t.gbops) / t.gbops;
    const bool ok = std::abs(rel) <= 0.10;
    all = all && ok;
    detail << t.arch << "(" << t.b_w << "," << t.b_a << ")=" << got
           << " vs " << t.gbops << " (" << (rel >= 0 ? "+" : "")
           << rel * 100.0 << "%" << (ok ? "" : " OUT") << "); ";
  }
  for (const auto& s : sizes) {
    const double got =
        static_cast<double>(uniq::model_size(uniq::arch_catalog(s.arch), s.b_w,
                                             true)) / 1e6;
    const double rel = (got - s.mbit) / s.mbit;
    const bool ok = std::abs(rel) <= 0.02;
    all = all && ok;
    detail << s.arch << "@" << s.b_w << "b=" << got << "Mbit vs " << s.mbit
           << " (" << (rel >= 0 ? "+" : "") << rel * 100.0 << "%"
           << (ok ? "" : " OUT") << "); ";
  }
  report(1, all, "complexity accounting vs published values: " + detail.str());
}

// --- criterion 2: quantizer property suites ------------------------------

void criterion_quantizer() {
  uniq::DistModel m = uniq::fit_gaussian(normal_draws(50000, 101));
  bool ok = true;
  std::ostringstream detail;

  {  // Equiprobability: 1e6 fresh model draws, each bin within 4 sigma.
    const std::size_t k = 8, n = 1000000;
    uniq::QuantizerSpec s = uniq::build_kquantile(m, k);
    std::vector<std::size_t> counts(k, 0);
    uniq::Rng rng(102);
    for (std::size_t i = 0; i < n; ++i)
      counts[uniq::bin_index(s, m.mu() + m.sigma() * rng.normal())]++;
    const double p = 1.0 / k;
    const double sd = std::sqrt(n * p * (1 - p));
    double worst = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      worst = std::max(worst,
                       std::abs(static_cast<double>(counts[i]) - n * p) / sd);
    ok = ok && worst < 4.0;
    detail << "equiprobability worst deviation " << worst << " sigma (<4); ";
  }
  {  // Uniformization equivalence, exact, 1e5 points.
    const std::size_t k = 32;
    uniq::QuantizerSpec s = uniq::build_kquantile(m, k);
    uniq::Rng rng(103);
    std::size_t mismatches = 0;
    for (int i = 0; i < 100000; ++i) {
      double x = m.mu() + m.sigma() * rng.uniform(-4.5, 4.5);
      if (uniq::apply(s, x) != uniq::quantize_via_uniformization(m, k, x))
        ++mismatches;
    }
    ok = ok && mismatches == 0;
    detail << mismatches << "/100000 uniformization mismatches (=0); ";
  }
  {  // Monotonicity + idempotence.
    bool mono = true, idem = true;
    for (std::size_t k : {2, 5, 16, 64}) {
      uniq::QuantizerSpec s = uniq::build_kquantile(m, k);
      uniq::Rng rng(104 + k);
      std::vector<double> pts(5000);
      for (auto& p : pts) p = rng.uniform(-5.0, 5.0);
      std::sort(pts.begin(), pts.end());
      double prev = -1e300;
      for (double x : pts) {
        double q = uniq::apply(s, x);
        mono = mono && q >= prev;
        idem = idem && uniq::apply(s, q) == q;
        prev = q;
      }
    }
    ok = ok && mono && idem;
    detail << "monotone=" << mono << " idempotent=" << idem;
  }
  report(2, ok, "quantizer properties: " + detail.str());
}

// --- criterion 3: Lloyd-Max oracle ---------------------------------------

void criterion_lloyd_max() {
  auto xs = normal_draws(400000, 111);
  bool ok = true;
  std::ostringstream detail;

  uniq::QuantizerSpec k2 = uniq::build_kmeans(xs, 2);
  const double expect = std::sqrt(2.0 / std::numbers::pi);
  ok = ok && std::abs(k2.levels[0] + expect) < 0.01 &&
       std::abs(k2.levels[1] - expect) < 0.01;
  detail << "k=2 levels (" << k2.levels[0] << ", " << k2.levels[1]
         << ") vs +-" << expect << " (tol 0.01); ";

  std::vector<double> trace;
  (void)uniq::build_kmeans(xs, 4, 200, -1.0, &trace);
  bool noninc = trace.size() >= 1;
  for (std::size_t i = 1; i < trace.size(); ++i)
    noninc = noninc && trace[i] <= trace[i - 1] + 1e-15;
  ok = ok && noninc;
  detail << "MSE nonincreasing over " << trace.size() << " iterations="
         << noninc << "; ";

  uniq::DistModel m = uniq::fit_gaussian(xs);
  double mse_km = uniq::mse(uniq::build_kmeans(xs, 4), xs);
  double mse_kq = uniq::mse(uniq::build_kquantile(m, 4), xs);
  ok = ok && mse_km <= mse_kq;
  detail << "k=4 MSE kmeans " << mse_km << " <= kquantile " << mse_kq;
  report(3, ok, "Lloyd-Max oracle: " + detail.str());
}

// --- criterion 4: gradient checks ----------------------------------------

struct GradStats {
  double worst = 0.0;
  std::size_t points = 0;
};

void fd_check_params(uniq::Network& net, const uniq::Tensor& input,
                     const std::vector<int>& labels, GradStats& stats) {
  uniq::Gradients grads = net.zero_gradients();
  (void)net.loss_and_gradients(input, labels, &grads);
  const double h = 1e-6;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    if (!net.layers[li].has_params()) continue;
    for (int which = 0; which < 2; ++which) {
      uniq::Tensor& param =
          which ? net.layers[li].bias : net.layers[li].weight;
      const uniq::Tensor& g = which ? grads.bias[li] : grads.weight[li];
      for (Eigen::Index j = 0; j < param.data.size(); ++j) {
        const double saved = param.data[j];
        param.data[j] = saved + h;
        double lp = net.loss_and_gradients(input, labels, nullptr);
        param.data[j] = saved - h;
        double lm = net.loss_and_gradients(input, labels, nullptr);
        param.data[j] = saved;
        const double num = (lp - lm) / (2 * h);
        const double denom = std::max({std::abs(num), std::abs(g.data[j]), 1e-4});
        stats.worst = std::max(stats.worst, std::abs(num - g.data[j]) / denom);
        ++stats.points;
      }
    }
  }
}

void criterion_gradients() {
  bool ok = true;
  std::ostringstream detail;

  {  // noisy_weight_grad against central differences.
    uniq::DistModel m = uniq::fit_gaussian(normal_draws(5000, 121));
    uniq::Rng rng(122);
    const double h = 1e-6;
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      double w = m.mu() + m.sigma() * rng.uniform(-2.5, 2.5);
      double e = uniq::sample_noise(32, rng);
      double num = (uniq::noisy_weight(m, w + h, e) -
                    uniq::noisy_weight(m, w - h, e)) / (2 * h);
      double ana = uniq::noisy_weight_grad(m, w, e);
      double denom = std::max({std::abs(num), std::abs(ana), 1e-4});
      worst = std::max(worst, std::abs(num - ana) / denom);
    }
    ok = ok && worst < 1e-5;
    detail << "noisy_weight_grad worst rel err " << worst
           << " over 200 points (<1e-5); ";
  }
  {  // Every layer type through one composite network.
    uniq::Rng rng(123);
    auto rnd = [&rng](uniq::Tensor t, double s) {
      for (Eigen::Index i = 0; i < t.data.size(); ++i)
        t.data[i] = s * rng.normal();
      return t;
    };
    uniq::Network net;
    uniq::LayerNode c1;
    c1.kind = uniq::LayerKind::conv2d;
    c1.name = "c1";
    c1.inputs = {-1};
    c1.weight = rnd(uniq::Tensor(3, 2, 3, 3), 0.5);
    c1.bias = rnd(uniq::Tensor(1, 3, 1, 1), 0.1);
    c1.pad = 1;
    c1.trainable = true;
    net.layers.push_back(std::move(c1));
    uniq::LayerNode bn;
    bn.kind = uniq::LayerKind::batchnorm;
    bn.name = "bn";
    bn.inputs = {0};
    bn.weight = rnd(uniq::Tensor(1, 3, 1, 1), 0.2);
    bn.weight.data.array() += 1.0;
    bn.bias = rnd(uniq::Tensor(1, 3, 1, 1), 0.2);
    bn.bn_mean = rnd(uniq::Tensor(1, 3, 1, 1), 0.2);
    bn.bn_var = rnd(uniq::Tensor(1, 3, 1, 1), 0.1);
    bn.bn_var.data = bn.bn_var.data.array().abs() + 0.5;
    bn.trainable = true;
    net.layers.push_back(std::move(bn));
    uniq::LayerNode r1;
    r1.kind = uniq::LayerKind::relu;
    r1.name = "r1";
    r1.inputs = {1};
    net.layers.push_back(std::move(r1));
    uniq::LayerNode c2;
    c2.kind = uniq::LayerKind::conv2d;
    c2.name = "c2";
    c2.inputs = {2};
    c2.weight = rnd(uniq::Tensor(3, 3, 3, 3), 0.4);
    c2.bias = rnd(uniq::Tensor(1, 3, 1, 1), 0.1);
    c2.pad = 1;
    c2.trainable = true;
    net.layers.push_back(std::move(c2));
    uniq::LayerNode add;
    add.kind = uniq::LayerKind::add;
    add.name = "add";
    add.inputs = {3, 1};
    net.layers.push_back(std::move(add));
    uniq::LayerNode mp;
    mp.kind = uniq::LayerKind::maxpool;
    mp.name = "mp";
    mp.inputs = {4};
    net.layers.push_back(std::move(mp));
    uniq::LayerNode ap;
    ap.kind = uniq::LayerKind::avgpool;
    ap.name = "ap";
    ap.inputs = {5};
    ap.pool = 1;
    net.layers.push_back(std::move(ap));
    uniq::LayerNode d1;
    d1.kind = uniq::LayerKind::dense;
    d1.name = "d1";
    d1.inputs = {6};
    d1.weight = rnd(uniq::Tensor(4, 3 * 3 * 3, 1, 1), 0.4);
    d1.bias = rnd(uniq::Tensor(1, 4, 1, 1), 0.1);
    d1.trainable = true;
    net.layers.push_back(std::move(d1));

    uniq::Tensor input = rnd(uniq::Tensor(2, 2, 6, 6), 1.0);
    GradStats stats;
    fd_check_params(net, input, {1, 3}, stats);
    ok = ok && stats.worst < 1e-5 && stats.points >= 100;
    detail << "layer gradients worst rel err " << stats.worst << " over "
           << stats.points << " points (<1e-5)";
  }
  report(4, ok, "gradient checks: " + detail.str());
}

// --- criteria 5-7: desk-scale training, stage sweep, LUT equivalence -----

struct TrainedArtifacts {
  double baseline_acc = 0.0;
  double staged_acc = 0.0;   // N = layer count
  double onestage_acc = 0.0; // N = 1
  uniq::SavedModel container;
};

uniq::SavedModel to_container(const uniq::QuantModel& model,
                              const std::vector<uniq::Tensor>& calib) {
  uniq::SavedModel saved;
  saved.net = model.net;
  saved.resize_slots();
  for (const auto& q : model.qlayers) {
    if (q.weight_spec) saved.weight_spec[q.layer] = *q.weight_spec;
    if (q.act) saved.act_spec[q.layer] = q.act->spec;
  }
  for (auto& l : saved.net.layers) l.output_quantizer = nullptr;
  std::vector<double> pix;
  for (const auto& t : calib)
    pix.insert(pix.end(), t.data.data(), t.data.data() + t.data.size());
  uniq::DistModel in_dist = uniq::fit_empirical(pix, 1024);
  uniq::QuantizerSpec in_spec = uniq::build_kquantile_robust(in_dist, model.k_a);
  in_spec.domain = uniq::QuantizerSpec::Domain::activation;
  saved.input_act_spec = std::move(in_spec);
  return saved;
}

TrainedArtifacts train_pipeline() {
  const std::uint64_t seed = 2024;
  uniq::Dataset train_set = uniq::make_synthetic_digits(6000, seed);
  uniq::Dataset test_set = uniq::make_synthetic_digits(2000, seed + 1);
  uniq::BatchList train = uniq::make_batches(train_set, 64, seed);
  uniq::BatchList test = uniq::make_batches(test_set, 256, seed + 1);

  // Full-precision baseline, then two quantization schedules from the same
  // starting point: one stage per layer, and a single joint stage.
  uniq::QuantModel base = uniq::make_quant_model(
      uniq::build_lenet_ish(seed), uniq::QuantMethod::kquantile,
      /*k_w=*/32, /*k_a=*/256, seed);  // 5-bit weights, 8-bit activations
  uniq::SgdState sgd;
  sgd.lr = 0.02;
  std::size_t step = 0;
  for (int e = 0; e < 3; ++e) uniq::train_epoch(base, sgd, train, &step);

  TrainedArtifacts art;
  art.baseline_acc = uniq::evaluate(base, test);

  std::vector<uniq::Tensor> calib;
  for (std::size_t i = 0; i < 4; ++i) calib.push_back(train[i].input);

  auto run = [&](std::size_t n_blocks) {
    uniq::QuantModel model = base;  // copy of the trained baseline
    // Activation-quantizer pointers must track the copy, not the original.
    for (auto& l : model.net.layers) l.output_quantizer = nullptr;
    uniq::StagePlan plan;
    plan.blocks = uniq::make_blocks(model.qlayers.size(), n_blocks);
    plan.epochs_per_stage = 1;
    plan.restart_iterations = 2;
    uniq::SgdState fine;
    fine.lr = 2e-3;
    uniq::run_schedule(model, plan, train, fine, calib);
    return model;
  };

  uniq::QuantModel staged = run(4);
  art.staged_acc = uniq::evaluate(staged, test);
  uniq::QuantModel joint = run(1);
  art.onestage_acc = uniq::evaluate(joint, test);
  art.container = to_container(staged, calib);
  return art;
}

void criterion_training(const TrainedArtifacts& art) {
  std::ostringstream detail;
  const bool base_ok = art.baseline_acc >= 0.98;
  const bool gap_ok = art.staged_acc >= art.baseline_acc - 0.015;
  detail << "baseline " << art.baseline_acc << " (>=0.98), staged (5,8)-bit "
         << art.staged_acc << " (>= baseline - 0.015)";
  report(5, base_ok && gap_ok, "desk-scale staged training: " + detail.str());
}

void criterion_stage_sweep(const TrainedArtifacts& art) {
  std::ostringstream detail;
  detail << "N=layers acc " << art.staged_acc << " >= N=1 acc "
         << art.onestage_acc;
  report(6, art.staged_acc >= art.onestage_acc,
         "stage-count sweep: " + detail.str());
}

void criterion_lut(const TrainedArtifacts& art) {
  const uniq::SavedModel& model = art.container;
  uniq::QuantizedNet qnet(model, 16);
  uniq::Dataset inputs = uniq::make_synthetic_digits(10000, 777);
  uniq::BatchList batches = uniq::make_batches(inputs, 250, 777);

  std::size_t agree = 0, total = 0;
  double max_dev = 0.0;
  uniq::Tensor first_run_head;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    const uniq::Tensor& in = batches[bi].input;
    uniq::Tensor lut = qnet.forward(in, true);
    uniq::Tensor sim = uniq::simulate_quantized(model, in);
    if (bi == 0) first_run_head = lut;
    const std::size_t classes = lut.shape[1];
    for (std::size_t b = 0; b < in.shape[0]; ++b) {
      const double* lr = lut.data.data() + b * classes;
      const double* sr = sim.data.data() + b * classes;
      std::size_t la = 0, sa = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (lr[c] > lr[la]) la = c;
        if (sr[c] > sr[sa]) sa = c;
      }
      agree += (la == sa);
      ++total;
      for (std::size_t c = 0; c < classes; ++c)
        max_dev = std::max(max_dev, std::abs(lr[c] - sr[c]));
    }
  }
  // Bit-exact reproducibility of the integer path.
  uniq::Tensor rerun = qnet.forward(batches[0].input, true);
  const bool repro = rerun.data == first_run_head.data;

  const double agree_frac = static_cast<double>(agree) / static_cast<double>(total);
  std::ostringstream detail;
  detail << "argmax agreement " << agree_frac << " over " << total
         << " inputs (>=0.999), max logit deviation " << max_dev
         << " (<1e-3), bit-exact rerun=" << repro;
  report(7, agree_frac >= 0.999 && max_dev < 1e-3 && repro,
         "LUT inference equivalence: " + detail.str());
}

// --- criterion 8: freeze/restart invariants ------------------------------

void criterion_freeze_invariants() {
  bool ok = true;
  std::ostringstream detail;

  {  // Balanced-partition properties, exhaustive for layer counts <= 64.
    bool part_ok = true;
    for (std::size_t layers = 1; layers <= 64 && part_ok; ++layers)
      for (std::size_t n = 1; n <= layers && part_ok; ++n) {
        auto blocks = uniq::make_blocks(layers, n);
        std::size_t next = 0, lo = layers, hi = 0;
        part_ok = part_ok && blocks.size() == n;
        for (const auto& b : blocks) {
          part_ok = part_ok && !b.empty();
          lo = std::min(lo, b.size());
          hi = std::max(hi, b.size());
          for (std::size_t idx : b) part_ok = part_ok && idx == next++;
        }
        part_ok = part_ok && next == layers && hi - lo <= 1;
      }
    ok = ok && part_ok;
    detail << "balanced partition exhaustive <=64: " << part_ok << "; ";
  }
  {  // Frozen-block bit-identity: freeze -> weights == apply(spec, shadow),
     // unfreeze -> shadow restored bitwise, across repeated cycles.
    uniq::QuantModel model = uniq::make_quant_model(
        uniq::build_lenet_ish(131), uniq::QuantMethod::kquantile, 32, 256, 131);
    uniq::Dataset ds = uniq::make_synthetic_digits(64, 131);
    uniq::BatchList data = uniq::make_batches(ds, 32, 131);
    std::vector<uniq::Tensor> calib = {data[0].input};

    std::vector<Eigen::VectorXd> shadows;
    for (const auto& q : model.qlayers)
      shadows.push_back(model.net.layers[q.layer].weight.data);

    bool bit_ok = true;
    for (int rep = 0; rep < 3 && bit_ok; ++rep) {
      for (std::size_t qi = 0; qi < model.qlayers.size(); ++qi) {
        uniq::freeze_layer(model, qi, calib);
        const auto& q = model.qlayers[qi];
        const auto& w = model.net.layers[q.layer].weight.data;
        for (Eigen::Index j = 0; j < w.size(); ++j)
          bit_ok = bit_ok &&
                   w[j] == uniq::apply(*q.weight_spec, shadows[qi][j]);
      }
      uniq::unfreeze_all(model);
      for (std::size_t qi = 0; qi < model.qlayers.size(); ++qi)
        bit_ok = bit_ok &&
                 model.net.layers[model.qlayers[qi].layer].weight.data ==
                     shadows[qi];
    }
    ok = ok && bit_ok;
    detail << "frozen-block bit-identity over 3 cycles: " << bit_ok;
  }
  report(8, ok, "freeze/restart invariants: " + detail.str());
}

}  // namespace

int main() {
  run_criterion(1, criterion_bops);
  run_criterion(2, criterion_quantizer);
  run_criterion(3, criterion_lloyd_max);
  run_criterion(4, criterion_gradients);

  TrainedArtifacts art;
  bool trained = false;
  try {
    art = train_pipeline();
    trained = true;
  } catch (const std::exception& e) {
    report(5, false, std::string("training pipeline exception: ") + e.what());
    report(6, false, "training pipeline failed");
    report(7, false, "training pipeline failed");
  }
  if (trained) {
    run_criterion(5, [&] { criterion_training(art); });
    run_criterion(6, [&] { criterion_stage_sweep(art); });
    run_criterion(7, [&] { criterion_lut(art); });
  }

  run_criterion(8, criterion_freeze_invariants);

  std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED"
                                : std::to_string(g_failures) +
                                      " criterion(s) failed")
            << std::endl;
  return g_failures;
}
