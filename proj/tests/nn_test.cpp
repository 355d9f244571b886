#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "opsdann/error.hpp"
#include "opsdann/nn/container.hpp"
#include "opsdann/nn/gradcheck.hpp"
#include "opsdann/nn/layers.hpp"
#include "opsdann/nn/loss.hpp"
#include "opsdann/nn/network.hpp"
#include "opsdann/nn/optim.hpp"

using namespace opsdann;
using namespace opsdann::nn;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : t.values()) v = u(rng);
  return t;
}

void randomize(LayerParams& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double& v : p.weights.values()) v = u(rng);
  for (double& v : p.bias.values()) v = u(rng);
}

// Direct nested-loop cross-correlation with "same" padding, independent of the im2col path.
Tensor direct_conv(const Tensor& x, const LayerParams& p) {
  const std::size_t batch = x.dim(0), in = x.dim(1), steps = x.dim(2);
  const std::size_t out = p.weights.dim(0), kernel = p.weights.dim(2);
  const long pad = static_cast<long>((kernel - 1) / 2);
  Tensor y({batch, out, steps});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t t = 0; t < steps; ++t) {
        double acc = p.bias[o];
        for (std::size_t c = 0; c < in; ++c)
          for (std::size_t k = 0; k < kernel; ++k) {
            const long src = static_cast<long>(t) + static_cast<long>(k) - pad;
            if (src < 0 || src >= static_cast<long>(steps)) continue;
            acc += p.weights[(o * in + c) * kernel + k] * x[(b * in + c) * steps + src];
          }
        y[(b * out + o) * steps + t] = acc;
      }
  return y;
}

double max_relative_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("tensor contracts") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), Error);
  CHECK_THROWS_AS(Tensor({0, 3}), Error);
  Tensor t({2, 2}, std::vector<double>{1, 2, NAN, 4});
  CHECK_THROWS_AS(t.check_finite("t"), Error);
  CHECK(Tensor({2, 3}).reshaped({3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("conv1d forward") {
  SUBCASE("kernel one scales") {
    LayerParams p = LayerParams::conv1d(1, 1, 1);
    p.weights[0] = 2.0;
    Tensor x({1, 1, 5}, std::vector<double>{1, 2, 3, 4, 5});
    Tensor y = conv1d_forward(x, p);
    CHECK(y.values()[0] == 2.0);
    CHECK(y.values()[4] == 10.0);
    CHECK(std::vector<double>(y.values().begin(), y.values().end()) ==
          std::vector<double>{2, 4, 6, 8, 10});
  }
  SUBCASE("zero input yields bias") {
    std::mt19937_64 rng(3);
    LayerParams p = LayerParams::conv1d(18, 10, 10);
    randomize(p, rng);
    Tensor y = conv1d_forward(Tensor({2, 18, 50}), p);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t o = 0; o < 10; ++o)
        for (std::size_t t = 0; t < 50; ++t) CHECK(y[(b * 10 + o) * 50 + t] == p.bias[o]);
  }
  SUBCASE("matches direct convolution") {
    std::mt19937_64 rng(11);
    LayerParams p = LayerParams::conv1d(18, 10, 10);
    randomize(p, rng);
    Tensor x = random_tensor({2, 18, 50}, rng);
    CHECK(max_relative_diff(conv1d_forward(x, p), direct_conv(x, p)) < 1e-10);
  }
  SUBCASE("padding split is 4 left, 5 right for kernel 10") {
    CHECK(same_pad_left(10) == 4);
    CHECK(same_pad_right(10) == 5);
    // A delta at t=0 with a kernel tap only at k=4 lands at output t=0.
    LayerParams p = LayerParams::conv1d(1, 1, 10);
    p.weights[4] = 1.0;
    Tensor x({1, 1, 8});
    x[0] = 1.0;
    CHECK(conv1d_forward(x, p)[0] == 1.0);
  }
  SUBCASE("errors") {
    LayerParams p = LayerParams::conv1d(3, 2, 3);
    CHECK_THROWS_AS(conv1d_forward(Tensor({1, 2, 5}), p), Error);
    Tensor bad({1, 3, 5});
    bad[2] = INFINITY;
    CHECK_THROWS_AS(conv1d_forward(bad, p), Error);
  }
}

TEST_CASE("dense forward") {
  std::mt19937_64 rng(5);
  SUBCASE("identity") {
    LayerParams p = LayerParams::dense(4, 4);
    for (std::size_t i = 0; i < 4; ++i) p.weights[i * 4 + i] = 1.0;
    Tensor x = random_tensor({3, 4}, rng);
    CHECK(dense_forward(x, p) == x);
  }
  SUBCASE("zero weights give bias") {
    LayerParams p = LayerParams::dense(4, 3);
    p.bias = Tensor({3}, std::vector<double>{1.5, -2.0, 0.25});
    Tensor y = dense_forward(random_tensor({2, 4}, rng), p);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < 3; ++j) CHECK(y[r * 3 + j] == p.bias[j]);
  }
  SUBCASE("matches naive matmul") {
    LayerParams p = LayerParams::dense(50, 50);
    randomize(p, rng);
    Tensor x = random_tensor({4, 50}, rng);
    Tensor expect({4, 50});
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t o = 0; o < 50; ++o) {
        double acc = p.bias[o];
        for (std::size_t i = 0; i < 50; ++i) acc += p.weights[o * 50 + i] * x[r * 50 + i];
        expect[r * 50 + o] = acc;
      }
    CHECK(max_relative_diff(dense_forward(x, p), expect) < 1e-12);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(dense_forward(Tensor({2, 5}), LayerParams::dense(4, 3)), Error);
  }
}

TEST_CASE("batchnorm1d") {
  std::mt19937_64 rng(9);
  SUBCASE("eval with identity statistics") {
    LayerParams p = LayerParams::batchnorm1d(3);
    Tensor x = random_tensor({2, 3, 7}, rng);
    Tensor y = batchnorm1d_forward(x, p, Mode::eval);
    const double factor = 1.0 / std::sqrt(1.0 + p.epsilon);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i] * factor).epsilon(1e-14));
  }
  SUBCASE("train output is standardized per channel") {
    LayerParams p = LayerParams::batchnorm1d(4);
    Tensor x = random_tensor({5, 4, 20}, rng, 10.0);  // var >> epsilon
    for (double& v : x.values()) v += 2.0;
    Tensor y = batchnorm1d_forward(x, p, Mode::train);
    std::vector<double> mean, var;
    channel_statistics(y, mean, var);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(std::abs(mean[c]) < 1e-6);
      CHECK(std::abs(var[c] - 1.0) < 1e-6);
    }
  }
  SUBCASE("running statistics follow the momentum update") {
    LayerParams p = LayerParams::batchnorm1d(1, 0.1);
    p.running_mean[0] = 0.5;
    p.running_var[0] = 2.0;
    // batch of 2, one channel, 2 steps: values 1,3,5,7 -> mean 4, biased var 5
    Tensor x({2, 1, 2}, std::vector<double>{1, 3, 5, 7});
    batchnorm1d_forward(x, p, Mode::train);
    CHECK(p.running_mean[0] == doctest::Approx(0.9 * 0.5 + 0.1 * 4.0).epsilon(1e-15));
    CHECK(p.running_var[0] == doctest::Approx(0.9 * 2.0 + 0.1 * 5.0).epsilon(1e-15));
  }
  SUBCASE("train mode rejects batch of one") {
    LayerParams p = LayerParams::batchnorm1d(2);
    CHECK_THROWS_AS(batchnorm1d_forward(Tensor({1, 2, 4}), p, Mode::train), Error);
  }
}

TEST_CASE("activations") {
  Tensor x({3}, std::vector<double>{-1, 0, 2});
  Tensor r = activation_forward(x, Activation::relu);
  CHECK(std::vector<double>(r.values().begin(), r.values().end()) == std::vector<double>{0, 0, 2});
  CHECK(activation_forward(Tensor({1}), Activation::sigmoid)[0] == 0.5);
  CHECK(activation_forward(Tensor({1}, std::vector<double>{-800}), Activation::sigmoid)[0] >= 0.0);
  for (double c : {-1000.0, 0.0, 3.5, 1000.0}) {
    Tensor s = activation_forward(Tensor({1, 3}, c), Activation::softmax);
    for (std::size_t j = 0; j < 3; ++j) CHECK(s[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("softmax rows are distributions") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor s = activation_forward(random_tensor({4, 6}, rng, 30.0), Activation::softmax);
      for (std::size_t row = 0; row < 4; ++row) {
        double total = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
          CHECK(s[row * 6 + j] >= 0.0);
          total += s[row * 6 + j];
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("gradient reversal") {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({3, 5}, rng);
  CHECK(grl_forward(x) == x);
  Tensor g = random_tensor({3, 5}, rng);
  Tensor back = grl_backward(g, 1.0);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(back[i] == -g[i]);
  Tensor zero = grl_backward(g, 0.0);
  for (double v : zero.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(grl_backward(g, -0.1), Error);
}

TEST_CASE("losses") {
  SUBCASE("rmse") {
    Tensor pred({3, 1}, std::vector<double>{0.1, 0.5, 0.9});
    std::vector<double> y{0.1, 0.5, 0.9};
    CHECK(rul_rmse(pred, y).value == 0.0);
    std::vector<double> zeros{0, 0, 0};
    Tensor ones({3, 1}, 1.0);
    CHECK(rul_rmse(ones, zeros).value == doctest::Approx(1.0));
    CHECK(rul_mae(ones, zeros).value == doctest::Approx(1.0));
  }
  SUBCASE("bce at one half") {
    Tensor pred({2, 1}, 0.5);
    std::vector<double> y{0, 1};
    CHECK(bce(pred, y).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("weighted bce with a closed gate") {
    Tensor pred({3, 1}, std::vector<double>{0.2, 0.7, 0.4});
    std::vector<double> y{0, 1, 1}, w{0, 0, 0};
    for (auto reduction : {Reduction::mean, Reduction::weighted_mean}) {
      auto r = bce(pred, y, w, reduction);
      CHECK(r.value == 0.0);
      for (double g : r.grad.values()) CHECK(g == 0.0);
    }
  }
  SUBCASE("unit weights with weighted_mean match the plain mean bitwise") {
    std::mt19937_64 rng(8);
    Tensor pred({9, 1});
    std::uniform_real_distribution<double> u(0.01, 0.99);
    for (double& v : pred.values()) v = u(rng);
    std::vector<double> y{0, 1, 0, 1, 1, 0, 0, 1, 0}, w(9, 1.0);
    auto plain = bce(pred, y);
    auto weighted = bce(pred, y, w, Reduction::weighted_mean);
    CHECK(plain.value == weighted.value);
    CHECK(plain.grad == weighted.grad);
  }
  SUBCASE("cross entropy") {
    Tensor probs({2, 3}, std::vector<double>{0.2, 0.5, 0.3, 0.1, 0.1, 0.8});
    std::vector<int> y{1, 2};
    CHECK(cross_entropy(probs, y).value ==
          doctest::Approx(-(std::log(0.5) + std::log(0.8)) / 2).epsilon(1e-14));
    std::vector<int> bad{1, 3};
    CHECK_THROWS_AS(cross_entropy(probs, bad), Error);
  }
  SUBCASE("errors") {
    std::vector<double> y{2.0};
    CHECK_THROWS_AS(bce(Tensor({1, 1}, 0.5), y), Error);
    std::vector<double> ok{1.0};
    CHECK_THROWS_AS(bce(Tensor({1, 1}, 1.5), ok), Error);
    CHECK_THROWS_AS(rul_rmse(Tensor(), std::vector<double>{}), Error);
    std::vector<double> neg{-1.0};
    CHECK_THROWS_AS(bce(Tensor({1, 1}, 0.5), ok, neg), Error);
  }
}

TEST_CASE("xavier init") {
  auto make = [] {
    Stack s;
    s.dense(50, 50).relu().dense(50, 30);
    return s;
  };
  Stack a = make(), b = make();
  Rng r1(42), r2(42);
  xavier_init(a.parameter_layers(), r1);
  xavier_init(b.parameter_layers(), r2);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(a.parameter_layers()[l]->weights == b.parameter_layers()[l]->weights);
    for (double v : a.parameter_layers()[l]->bias.values()) CHECK(v == 0.0);
  }

  double sum_sq = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LayerParams p = LayerParams::dense(50, 50);
    Rng rng(seed);
    LayerParams* layers[] = {&p};
    xavier_init(layers, rng);
    for (double w : p.weights.values()) {
      sum_sq += w * w;
      ++count;
    }
  }
  const double variance = sum_sq / static_cast<double>(count);
  CHECK(std::abs(variance - 0.02) < 0.2 * 0.02);
}

TEST_CASE("sgd with momentum") {
  SUBCASE("plain step") {
    LayerParams p = LayerParams::dense(1, 1);
    p.weights.grad()[0] = 1.0;
    Sgd sgd(0.1, 0.0);
    LayerParams* layers[] = {&p};
    sgd.step(layers);
    CHECK(p.weights[0] == doctest::Approx(-0.1).epsilon(1e-15));
    CHECK(p.bias[0] == 0.0);
  }
  SUBCASE("two momentum steps") {
    LayerParams p = LayerParams::dense(1, 1);
    p.weights[0] = 1.0;
    Sgd sgd(0.1, 0.9);
    LayerParams* layers[] = {&p};
    p.weights.grad()[0] = 0.5;
    sgd.step(layers);
    p.weights.grad()[0] = -0.2;
    sgd.step(layers);
    // v1 = 0.5, th1 = 1 - 0.05 = 0.95; v2 = 0.45 - 0.2 = 0.25, th2 = 0.95 - 0.025 = 0.925
    CHECK(p.weights[0] == doctest::Approx(0.925).epsilon(1e-14));
  }
  SUBCASE("non-finite gradient") {
    LayerParams p = LayerParams::dense(1, 1);
    p.weights.grad()[0] = NAN;
    Sgd sgd;
    LayerParams* layers[] = {&p};
    CHECK_THROWS_AS(sgd.step(layers), Error);
  }
}

TEST_CASE("schedules") {
  CHECK(schedule_rho(0.0) == 0.0);
  // mpmath, 30 digits
  CHECK(std::abs(schedule_rho(1.0) - 0.999909204262595131) < 1e-12);
  CHECK(schedule_lr(0.0, 0.03) == 0.03);
  CHECK(std::abs(schedule_lr(1.0, 0.01) - 1.65560026076170173e-3) < 1e-15);
  double prev_rho = -1.0, prev_lr = INFINITY;
  for (int i = 0; i <= 1000; ++i) {
    const double p = i / 1000.0;
    CHECK(schedule_rho(p) >= prev_rho);
    CHECK(schedule_lr(p, 0.01) < prev_lr);
    prev_rho = schedule_rho(p);
    prev_lr = schedule_lr(p, 0.01);
  }
  CHECK_THROWS_AS(schedule_rho(1.5), Error);
  CHECK_THROWS_AS(schedule_lr(0.5, 0.0), Error);
}

TEST_CASE("container round trip") {
  Container c;
  c.add("w", Tensor({2, 3}, std::vector<double>{1, -2, 3.5, 1e-300, -0.0, 7}));
  c.add("b", Tensor({1}, std::vector<double>{42}));
  std::stringstream buf;
  c.write(buf);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 7) == "OPSDANN");
  Container back = Container::read(buf);
  REQUIRE(back.entries().size() == 2);
  CHECK(back.get("w") == c.get("w"));
  CHECK(back.entries()[1].name == "b");
  CHECK_THROWS_AS(back.get("missing"), FormatError);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(Container::read(truncated), FormatError);
  std::stringstream garbage("not a container at all");
  CHECK_THROWS_AS(Container::read(garbage), FormatError);
}

TEST_CASE("layer gradients match central differences") {
  std::mt19937_64 rng(21);

  SUBCASE("dense + sigmoid + bce") {
    Stack net;
    net.dense(6, 1).sigmoid();
    for (auto* l : net.parameter_layers()) randomize(*l, rng);
    Tensor x = random_tensor({5, 6}, rng);
    std::vector<double> y{0, 1, 1, 0, 1};
    auto loss_fn = [&] { return bce(net.infer(x), y).value; };
    net.zero_grad();
    Tensor pred = net.forward(x);
    auto loss = bce(pred, y);
    Tensor gx = net.backward(loss.grad);
    auto* layer = net.parameter_layers()[0];
    std::vector<GradProbe> probes{{"w", layer->weights.values(), layer->weights.grad()},
                                  {"b", layer->bias.values(), layer->bias.grad()},
                                  {"x", x.values(), gx.values()}};
    CHECK(finite_difference_check(loss_fn, probes, 1e-6).max_relative_error < 1e-5);
  }

  SUBCASE("every layer kind") {
    Stack net;
    net.conv1d(3, 4, 5).batchnorm1d(4).relu().conv1d(4, 2, 4).flatten().dense(16, 3).softmax();
    for (auto* l : net.parameter_layers()) {
      if (l->kind != LayerKind::batchnorm1d) randomize(*l, rng);
    }
    Tensor x = random_tensor({4, 3, 8}, rng);
    std::vector<int> y{0, 2, 1, 2};
    auto loss_fn = [&] {
      Stack copy = net;
      return cross_entropy(copy.forward(x, Mode::train), y).value;
    };
    net.zero_grad();
    Stack probe_net = net;
    auto loss = cross_entropy(probe_net.forward(x, Mode::train), y);
    Tensor gx = probe_net.backward(loss.grad);
    std::vector<GradProbe> probes;
    auto src = net.parameter_layers();
    auto grads = probe_net.parameter_layers();
    for (std::size_t l = 0; l < src.size(); ++l) {
      probes.push_back({"w" + std::to_string(l), src[l]->weights.values(), grads[l]->weights.grad()});
      probes.push_back({"b" + std::to_string(l), src[l]->bias.values(), grads[l]->bias.grad()});
    }
    probes.push_back({"x", x.values(), gx.values()});
    auto report = finite_difference_check(loss_fn, probes, 1e-6);
    INFO(report.worst_entry);
    CHECK(report.max_relative_error < 1e-4);
  }

  SUBCASE("rmse and mae") {
    Tensor pred = random_tensor({6, 1}, rng);
    std::vector<double> y{0.1, 0.2, -0.3, 0.4, 0.0, 0.9};
    auto r = rul_rmse(pred, y);
    std::vector<GradProbe> probes{{"pred", pred.values(), r.grad.values()}};
    CHECK(finite_difference_check([&] { return rul_rmse(pred, y).value; }, probes).max_relative_error < 1e-6);
  }

  SUBCASE("weighted losses w.r.t. weights") {
    Tensor pred({4, 1}, std::vector<double>{0.3, 0.6, 0.8, 0.1});
    std::vector<double> y{1, 0, 1, 0}, w{0.2, 0.5, 0.1, 0.9};
    auto r = bce(pred, y, w, Reduction::weighted_mean);
    std::vector<GradProbe> probes{{"w", w, r.weight_grad}, {"pred", pred.values(), r.grad.values()}};
    CHECK(finite_difference_check([&] { return bce(pred, y, w, Reduction::weighted_mean).value; },
                                  probes)
              .max_relative_error < 1e-6);
  }

  SUBCASE("gradient reversal scales the upstream gradient") {
    Stack head;
    head.dense(5, 1).sigmoid();
    for (auto* l : head.parameter_layers()) randomize(*l, rng);
    Tensor f = random_tensor({3, 5}, rng);
    std::vector<double> d{0, 1, 1};
    Tensor plain = head.backward(bce(head.forward(f), d).grad);
    Tensor reversed = grl_backward(head.backward(bce(head.forward(grl_forward(f)), d).grad), 0.5);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(reversed[i] == -0.5 * plain[i]);
  }
}
