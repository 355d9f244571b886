#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "opsdann/da/model.hpp"
#include "opsdann/da/train.hpp"
#include "opsdann/error.hpp"
#include "opsdann/nn/gradcheck.hpp"
#include "opsdann/nn/loss.hpp"
#include "opsdann/nn/optim.hpp"
#include "support.hpp"

using namespace opsdann;
using namespace opsdann::da;
using data::Domain;
using data::Phase;
using data::WindowDataset;
using test_support::iota_rows;
using test_support::toy;

namespace {

TrainConfig config_for(Method m) {
  TrainConfig c;
  c.method = m;
  c.epochs = 2;
  c.batch_size = 64;
  c.seed = 11;
  return c;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("parameter counts") {
  CHECK(make_feature_extractor().parameter_count() == 2921);
  CHECK(make_regressor().parameter_count() == 2601);
  CHECK(make_discriminator(1).parameter_count() == 4111);
  CHECK(make_discriminator(kMultiClassOutputs).parameter_count() == 4266);
  CHECK(make_phase_classifier().parameter_count() == 4173);

  CHECK(build_model(Method::source_only, 0).parameter_count() == 5522);
  CHECK(build_model(Method::dann, 0).parameter_count() == 9633);
  CHECK(build_model(Method::ops_dann_hard, 0).parameter_count() == 17855);
  CHECK(build_model(Method::ops_dann_soft, 0).parameter_count() == 22028);
  CHECK(build_model(Method::multiclass_ops_dann, 0).parameter_count() == 9788);
  CHECK(build_model(Method::mk_mmd, 0).parameter_count() == 5522);
  // batch norm adds a scale and shift per channel
  CHECK(build_model(Method::adabn, 0).parameter_count() == 5522 + 2 * (10 + 10 + 1));
}

TEST_CASE("method names") {
  for (auto m : kAllMethods) CHECK(parse_method(method_name(m)) == m);
  CHECK_THROWS_AS(parse_method("dan"), ConfigError);
}

TEST_CASE("multi-kernel mmd") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.3);
  nn::Tensor a({7, 4}), b({5, 4});
  for (double& v : a.values()) v = g(rng);
  for (double& v : b.values()) v = g(rng) + 0.2;
  const MmdConfig cfg;

  CHECK(std::abs(compute_mk_mmd(a, a, cfg).value) < 1e-9);
  const auto ab = compute_mk_mmd(a, b, cfg);
  CHECK(ab.value > 0.0);
  CHECK(compute_mk_mmd(b, a, cfg).value == doctest::Approx(ab.value).epsilon(1e-12));

  // one point per side: 2 sum_g (1 - exp(-g d^2))
  nn::Tensor p({1, 2}, std::vector<double>{0.1, -0.2}), q({1, 2}, std::vector<double>{0.4, 0.2});
  const double d2 = 0.3 * 0.3 + 0.4 * 0.4;
  double expected = 0.0;
  for (double gamma : cfg.bandwidths) expected += 2.0 - 2.0 * std::exp(-gamma * d2);
  CHECK(std::abs(compute_mk_mmd(p, q, cfg).value - expected) < 1e-9);

  // brute-force V-statistic
  auto k = [&](const double* x, const double* y) {
    double d = 0.0;
    for (int i = 0; i < 4; ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
    double s = 0.0;
    for (double gamma : cfg.bandwidths) s += std::exp(-gamma * d);
    return s;
  };
  double xx = 0, yy = 0, xy = 0;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) xx += k(a.data() + 4 * i, a.data() + 4 * j);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) yy += k(b.data() + 4 * i, b.data() + 4 * j);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 5; ++j) xy += k(a.data() + 4 * i, b.data() + 4 * j);
  CHECK(ab.value == doctest::Approx(xx / 49 + yy / 25 - 2 * xy / 35).epsilon(1e-12));

  std::vector<nn::GradProbe> probes{{"source", a.values(), ab.grad_source.values()},
                                    {"target", b.values(), ab.grad_target.values()}};
  const auto report = nn::finite_difference_check([&] { return compute_mk_mmd(a, b, cfg).value; }, probes);
  INFO(report.worst_entry);
  CHECK(report.max_relative_error < 1e-6);

  CHECK_THROWS(compute_mk_mmd(a, nn::Tensor({5, 3}), cfg));
  CHECK_THROWS_AS(compute_mk_mmd(a, b, MmdConfig{{}}), ConfigError);
}

TEST_CASE("full loss graphs match central differences") {
  const auto t = toy(2, 200, 0.4);
  // rows covering every phase in both domains
  const auto src = iota_rows(0, 6, 23), tgt = iota_rows(3, 6, 23);
  for (auto m : kAllMethods) {
    for (int variant = 0; variant < (m == Method::ops_dann_soft ? 3 : 1); ++variant) {
      auto c = config_for(m);
      c.lambda_d = 0.7;
      c.lambda_z = 0.6;
      if (variant == 1) c.detach_soft_weights = false;
      if (variant == 2) c.soft_weights = SoftWeights::oracle;
      const bool detached = m == Method::ops_dann_soft && variant == 0;
      CAPTURE(method_name(m));
      CAPTURE(variant);
      const WindowDataset* target = m == Method::source_only ? nullptr : &t.target;
      const std::span<const std::size_t> trows = target ? std::span<const std::size_t>(tgt) : std::span<const std::size_t>();

      ModelBundle model = build_model(m, 5);
      // Gradients are linear in rho, so 2 g(0) - g(1) is the gradient at rho = -1, where
      // the reversal becomes the identity and every gradient is d total / d theta.
      ModelBundle at0 = model, at1 = model;
      compute_gradients(at0, c, t.source, target, src, trows, 0.0);
      compute_gradients(at1, c, t.source, target, src, trows, 1.0);
      auto loss = [&] {
        ModelBundle copy = model;
        return total_loss(compute_gradients(copy, c, t.source, target, src, trows, 0.0), c);
      };
      std::vector<std::vector<double>> analytic;
      auto combine = [&](std::span<const double> g0, std::span<const double> g1) {
        std::vector<double> g(g0.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * g0[i] - g1[i];
        analytic.push_back(std::move(g));
        return std::span<const double>(analytic.back());
      };
      auto values = model.parameter_layers();
      auto l0 = at0.parameter_layers(), l1 = at1.parameter_layers();
      analytic.reserve(2 * values.size());
      std::vector<nn::GradProbe> probes;
      for (std::size_t l = 0; l < values.size(); ++l) {
        probes.push_back({std::to_string(l) + "/w", values[l]->weights.values(),
                          combine(l0[l]->weights.grad(), l1[l]->weights.grad())});
        probes.push_back({std::to_string(l) + "/b", values[l]->bias.values(),
                          combine(l0[l]->bias.grad(), l1[l]->bias.grad())});
      }
      if (detached) {
        // detached weights drop the path through the classifier; regressor and heads
        // (layers 3 to 13) are still exact
        probes = std::vector<nn::GradProbe>(probes.begin() + 2 * 3, probes.begin() + 2 * 14);
      }
      const auto report = nn::finite_difference_check(loss, probes, 1e-6, 24);
      INFO(report.worst_entry);
      CHECK(report.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("gradient reversal enters linearly in rho") {
  const auto t = toy(2, 200);
  const auto src = iota_rows(0, 8, 13), tgt = iota_rows(1, 8, 13);
  const auto c = config_for(Method::dann);
  auto fe_grad = [&](double rho) {
    ModelBundle m = build_model(Method::dann, 9);
    compute_gradients(m, c, t.source, &t.target, src, tgt, rho);
    const auto g = m.feature_extractor.parameter_layers()[0]->weights.grad();
    return std::vector<double>(g.begin(), g.end());
  };
  const auto g0 = fe_grad(0.0), g1 = fe_grad(1.0), g2 = fe_grad(2.0);
  for (std::size_t i = 0; i < g0.size(); ++i) CHECK((g2[i] - g1[i]) == doctest::Approx(g1[i] - g0[i]).epsilon(1e-8));

  // without reversal the extractor only sees the regression loss
  ModelBundle plain = build_model(Method::source_only, 9);
  compute_gradients(plain, config_for(Method::source_only), t.source, nullptr, src, {}, 0.0);
  const auto gp = plain.feature_extractor.parameter_layers()[0]->weights.grad();
  CHECK(max_abs_diff(g0, gp) < 1e-14);
}

TEST_CASE("phase gating") {
  const auto t = toy(1, 300);
  std::vector<std::size_t> steady;
  for (std::size_t i = 0; i < t.source.size() && steady.size() < 6; ++i) {
    if (t.source.phase(i) == Phase::steady) steady.push_back(i);
  }
  REQUIRE(steady.size() == 6);

  SUBCASE("hard heads only see their phase") {
    ModelBundle m = build_model(Method::ops_dann_hard, 1);
    const auto rec = compute_gradients(m, config_for(Method::ops_dann_hard), t.source, &t.target, steady, steady, 1.0);
    REQUIRE(rec.head_losses.size() == 3);
    CHECK(rec.head_losses[0] == 0.0);
    CHECK(rec.head_losses[1] > 0.0);
    CHECK(rec.head_losses[2] == 0.0);
    for (int h : {0, 2}) {
      for (const auto* l : m.discriminators[static_cast<std::size_t>(h)].parameter_layers()) {
        for (double g : l->weights.grad()) CHECK(g == 0.0);
      }
    }
  }

  SUBCASE("soft oracle weights match hard heads") {
    auto soft = config_for(Method::ops_dann_soft);
    soft.soft_weights = SoftWeights::oracle;
    soft.lambda_z = 0.0;
    ModelBundle ms = build_model(Method::ops_dann_soft, 4), mh = build_model(Method::ops_dann_hard, 4);
    const auto src = iota_rows(0, 10, 20), tgt = iota_rows(5, 10, 20);
    const auto rs = compute_gradients(ms, soft, t.source, &t.target, src, tgt, 1.0);
    const auto rh = compute_gradients(mh, config_for(Method::ops_dann_hard), t.source, &t.target, src, tgt, 1.0);
    for (int h = 0; h < 3; ++h) CHECK(std::abs(rs.head_losses[h] - rh.head_losses[h]) < 1e-12);
  }

  SUBCASE("uniform weights reduce to plain heads") {
    auto soft = config_for(Method::ops_dann_soft);
    soft.soft_weights = SoftWeights::uniform;
    ModelBundle ms = build_model(Method::ops_dann_soft, 4), md = build_model(Method::dann, 4);
    const auto src = iota_rows(0, 10, 20), tgt = iota_rows(5, 10, 20);
    const auto rs = compute_gradients(ms, soft, t.source, &t.target, src, tgt, 1.0);
    const auto rd = compute_gradients(md, config_for(Method::dann), t.source, &t.target, src, tgt, 1.0);
    CHECK(std::abs(rs.head_losses[0] - rd.domain_loss) < 1e-12);
  }

  SUBCASE("classifier trained on source only") {
    auto soft = config_for(Method::ops_dann_soft);
    soft.phase_classifier_on_target = false;
    ModelBundle a = build_model(Method::ops_dann_soft, 2);
    const auto src = iota_rows(0, 10, 20), tgt = iota_rows(5, 10, 20);
    const auto r1 = compute_gradients(a, soft, t.source, &t.target, src, tgt, 1.0);
    soft.phase_classifier_on_target = true;
    const auto r2 = compute_gradients(a, soft, t.source, &t.target, src, tgt, 1.0);
    CHECK(r1.phase_loss != r2.phase_loss);
    CHECK(r1.phase_loss > 0.0);
  }
}

TEST_CASE("reduction equivalences over a training run") {
  // 1,000 source windows
  const auto t = toy(4, 299);
  REQUIRE(t.source.size() == 1000);

  auto dann = config_for(Method::dann);
  auto hard1 = config_for(Method::ops_dann_hard);
  hard1.n_phases = 1;
  const auto rd = train(dann, t.source, &t.target);
  const auto rh = train(hard1, t.source, &t.target);
  REQUIRE(rd.steps.size() == rh.steps.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < rd.steps.size(); ++i) {
    worst = std::max(worst, std::abs(rd.steps[i].domain_loss - rh.steps[i].domain_loss));
    worst = std::max(worst, std::abs(rd.steps[i].rul_loss - rh.steps[i].rul_loss));
  }
  CHECK(worst < 1e-12);
  auto la = rd.model.parameter_layers(), lb = rh.model.parameter_layers();
  REQUIRE(la.size() == lb.size());
  bool bitwise = true;
  for (std::size_t l = 0; l < la.size(); ++l) {
    bitwise = bitwise && la[l]->weights == lb[l]->weights && la[l]->bias == lb[l]->bias;
  }
  CHECK(bitwise);

  auto soft = config_for(Method::ops_dann_soft);
  soft.soft_weights = SoftWeights::oracle;
  soft.lambda_z = 0.0;
  const auto rs = train(soft, t.source, &t.target);
  const auto rh3 = train(config_for(Method::ops_dann_hard), t.source, &t.target);
  double head_worst = 0.0;
  for (std::size_t i = 0; i < rs.steps.size(); ++i) {
    for (int h = 0; h < 3; ++h) head_worst = std::max(head_worst, std::abs(rs.steps[i].head_losses[h] - rh3.steps[i].head_losses[h]));
  }
  CHECK(head_worst < 1e-12);
}

TEST_CASE("training") {
  const auto t = toy(3, 400, 0.5, 2);

  SUBCASE("regression loss decreases") {
    auto c = config_for(Method::source_only);
    c.epochs = 8;
    c.batch_size = 32;
    c.alpha0 = 0.05;
    const auto r = train(c, t.source);
    REQUIRE(r.epochs.size() == 8);
    CHECK(r.epochs.back().rul_loss < 0.6 * r.epochs.front().rul_loss);
    for (double p : predict_rul(r.model, t.target)) CHECK((p > 0.0 && p < 1.0));
  }

  SUBCASE("discriminator separates shifted domains without reversal") {
    auto c = config_for(Method::dann);
    c.fixed_rho = 0.0;
    c.epochs = 6;
    c.batch_size = 32;
    c.alpha0 = 0.05;
    const auto shifted = toy(3, 400, 3.0, 2);
    const auto r = train(c, shifted.source, &shifted.target);
    CHECK(r.epochs.back().domain_loss < 0.5 * std::log(2.0));
  }

  SUBCASE("schedules and records") {
    auto c = config_for(Method::dann);
    c.epochs = 3;
    const auto r = train(c, t.source, &t.target);
    const std::size_t per_epoch = r.steps.size() / 3;
    REQUIRE(r.steps.size() == 3 * per_epoch);
    CHECK(r.steps.front().rho == 0.0);
    CHECK(r.steps.front().lr == c.alpha0);
    for (std::size_t i = 1; i < r.steps.size(); ++i) CHECK(r.steps[i].rho > r.steps[i - 1].rho);
    CHECK(r.steps[per_epoch].lr == doctest::Approx(nn::schedule_lr(1.0 / 3.0, c.alpha0)).epsilon(1e-12));
    CHECK(r.steps[per_epoch - 1].lr == r.steps[0].lr);
    std::ostringstream csv;
    write_trace_csv(csv, r.epochs);
    CHECK(csv.str().rfind("epoch,lr,rho,rul_loss,domain_loss,phase_loss,mmd\n", 0) == 0);
  }

  SUBCASE("max_steps stops early") {
    auto c = config_for(Method::mk_mmd);
    c.max_steps = 3;
    const auto r = train(c, t.source, &t.target);
    CHECK(r.steps.size() == 3);
    CHECK(r.steps.back().mmd > 0.0);
  }

  SUBCASE("determinism") {
    for (auto m : {Method::ops_dann_soft, Method::mk_mmd, Method::multiclass_ops_dann}) {
      auto c = config_for(m);
      c.max_steps = 4;
      const auto a = train(c, t.source, &t.target), b = train(c, t.source, &t.target);
      CHECK(same_parameters(a.model, b.model));
      c.seed = 12;
      CHECK_FALSE(same_parameters(a.model, train(c, t.source, &t.target).model));
    }
  }

  SUBCASE("contracts") {
    auto c = config_for(Method::dann);
    CHECK_THROWS(train(c, t.source));
    CHECK_THROWS(train(c, t.source, &t.source));  // labeled target
    CHECK_THROWS(train(c, t.target.without_labels(), &t.target));
    c.n_phases = 1;
    CHECK_THROWS_AS(train(c, t.source, &t.target), ConfigError);
    auto s = config_for(Method::ops_dann_soft);
    s.n_phases = 1;
    CHECK_THROWS_AS(train(s, t.source, &t.target), ConfigError);
    const ModelBundle other = build_model(Method::dann, 0);
    CHECK_THROWS(train(config_for(Method::ops_dann_hard), t.source, &t.target, &other));
  }
}

TEST_CASE("adaptive batch normalization") {
  const auto t = toy(2, 300, 1.0);
  auto stage1 = train(config_for(Method::adabn), t.source, &t.target);
  ModelBundle before = stage1.model;
  // retrain-free: adapting again only rewrites running statistics
  adapt_batchnorm(stage1.model, t.target, 37);
  const auto lb = before.parameter_layers(), la = stage1.model.parameter_layers();
  for (std::size_t l = 0; l < la.size(); ++l) {
    CHECK(la[l]->weights == lb[l]->weights);
    CHECK(la[l]->bias == lb[l]->bias);
  }

  // statistics equal the exact moments of the layer input over all target windows
  const auto& fe = stage1.model.feature_extractor;
  std::vector<std::size_t> all(t.target.size());
  std::iota(all.begin(), all.end(), 0);
  const auto x = t.target.gather(all);
  for (std::size_t layer = 0; layer < fe.size(); ++layer) {
    if (fe.op(layer) != nn::Stack::Op::batchnorm1d) continue;
    std::vector<double> mean, var;
    nn::channel_statistics(fe.infer_prefix(x, layer), mean, var);
    const auto& p = fe.params(layer);
    CHECK(max_abs_diff(mean, p.running_mean.values()) < 1e-6);
    CHECK(max_abs_diff(var, p.running_var.values()) < 1e-6);
    // target activations are standardized per channel in eval mode
    std::vector<double> m2, v2;
    nn::channel_statistics(fe.infer_prefix(x, layer + 1), m2, v2);
    for (std::size_t ch = 0; ch < m2.size(); ++ch) CHECK(std::abs(m2[ch] - p.bias[ch]) < 1e-9);
  }

  // a model adapted to the source differs from one adapted to the shifted target
  ModelBundle on_source = stage1.model;
  adapt_batchnorm(on_source, t.source.without_labels());
  CHECK_FALSE(same_parameters(on_source, stage1.model));
}

TEST_CASE("checkpoints and config") {
  const auto m = build_model(Method::ops_dann_soft, 3);
  auto copy = build_model(Method::ops_dann_soft, 4);
  CHECK_FALSE(same_parameters(m, copy));
  copy.load(m.to_container());
  CHECK(same_parameters(m, copy));
  auto other = build_model(Method::ops_dann_hard, 3);
  CHECK_THROWS_AS(other.load(m.to_container()), FormatError);

  TrainConfig c;
  c.method = Method::ops_dann_soft;
  c.fixed_rho = 0.5;
  c.soft_weights = SoftWeights::uniform;
  c.mmd.bandwidths = {1.0, 2.0};
  const auto back = train_config_from_json(to_json(c));
  CHECK(back.method == c.method);
  CHECK(back.fixed_rho == c.fixed_rho);
  CHECK(back.soft_weights == c.soft_weights);
  CHECK(back.mmd.bandwidths == c.mmd.bandwidths);
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(train_config_from_json({{"epoch", 3}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"method", "nope"}}), ConfigError);
}
