#include "opsdann/da/train.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "opsdann/error.hpp"
#include "opsdann/nn/layers.hpp"
#include "opsdann/nn/optim.hpp"

namespace opsdann::da {

using data::Domain;
using data::Phase;
using data::WindowDataset;
using nn::Tensor;

// ---------------------------------------------------------------------------
// MK-MMD

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;

// Adds d/da and d/db of coeff * sum_{i,j} k(a_i, b_j) and returns that sum.
double kernel_block(const Tensor& a, const Tensor& b, const std::vector<double>& gammas, double coeff,
                    RowMatrix& ga, RowMatrix& gb) {
  const std::size_t n = a.dim(0), m = b.dim(0), d = a.dim(1);
  const ConstMap A(a.data(), n, d), B(b.data(), m, d);
  RowMatrix sq = -2.0 * A * B.transpose();
  // squared norms from owned (aligned) copies keep the summation order fixed
  const RowMatrix a2 = A.array().square().matrix(), b2 = B.array().square().matrix();
  sq.colwise() += a2.rowwise().sum();
  sq.rowwise() += b2.rowwise().sum().transpose();
  sq = sq.cwiseMax(0.0);
  RowMatrix k = RowMatrix::Zero(n, m), dk = RowMatrix::Zero(n, m);  // dk = d k / d |a-b|^2
  for (double g : gammas) {
    // underflowing terms are zeroed explicitly; subnormal results are very slow
    const auto arg = (-g * sq).array();
    const RowMatrix e = (arg < -700.0).select(0.0, arg.exp()).matrix();
    k += e;
    dk -= g * e;
  }
  // d/da_i sum_j c k_ij = 2c (rowsum(dk)_i a_i - (dk B)_i), symmetric for b_j.
  dk *= 2.0 * coeff;
  ga += (dk.rowwise().sum().asDiagonal() * A) - dk * B;
  gb += (dk.colwise().sum().transpose().asDiagonal() * B) - dk.transpose() * A;
  return coeff * k.sum();
}

}  // namespace

MmdResult compute_mk_mmd(const Tensor& source, const Tensor& target, const MmdConfig& config) {
  if (source.rank() != 2 || target.rank() != 2) throw Error("compute_mk_mmd: expected n x d feature matrices");
  if (source.dim(1) != target.dim(1)) {
    throw Error("compute_mk_mmd: feature dimension mismatch (" + std::to_string(source.dim(1)) + " vs " +
                std::to_string(target.dim(1)) + ")");
  }
  if (config.bandwidths.empty()) throw ConfigError("compute_mk_mmd: no bandwidths");
  for (double g : config.bandwidths) {
    if (!(g > 0.0)) throw ConfigError("compute_mk_mmd: bandwidths must be positive");
  }
  const double n = static_cast<double>(source.dim(0)), m = static_cast<double>(target.dim(0));
  const std::size_t d = source.dim(1);
  RowMatrix gs = RowMatrix::Zero(source.dim(0), d), gt = RowMatrix::Zero(target.dim(0), d);
  MmdResult r;
  r.value += kernel_block(source, source, config.bandwidths, 1.0 / (n * n), gs, gs);
  r.value += kernel_block(target, target, config.bandwidths, 1.0 / (m * m), gt, gt);
  r.value += kernel_block(source, target, config.bandwidths, -2.0 / (n * m), gs, gt);
  r.grad_source = Tensor(source.shape(), std::vector<double>(gs.data(), gs.data() + gs.size()));
  r.grad_target = Tensor(target.shape(), std::vector<double>(gt.data(), gt.data() + gt.size()));
  return r;
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string_view soft_weights_name(SoftWeights s) {
  switch (s) {
    case SoftWeights::classifier:
      return "classifier";
    case SoftWeights::oracle:
      return "oracle";
    case SoftWeights::uniform:
      return "uniform";
  }
  return "?";
}

SoftWeights parse_soft_weights(const std::string& s) {
  for (auto v : {SoftWeights::classifier, SoftWeights::oracle, SoftWeights::uniform}) {
    if (soft_weights_name(v) == s) return v;
  }
  throw ConfigError("soft_weights must be classifier, oracle or uniform");
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["method"] = method_name(c.method);
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["alpha0"] = c.alpha0;
  j["momentum"] = c.momentum;
  j["lambda_d"] = c.lambda_d;
  j["lambda_z"] = c.lambda_z;
  j["seed"] = c.seed;
  j["n_phases"] = c.n_phases;
  j["rul_loss"] = c.rul_loss == nn::LossKind::rul_mae ? "mae" : "rmse";
  j["detach_soft_weights"] = c.detach_soft_weights;
  j["phase_classifier_on_target"] = c.phase_classifier_on_target;
  j["soft_weights"] = soft_weights_name(c.soft_weights);
  j["fixed_rho"] = c.fixed_rho ? nlohmann::json(*c.fixed_rho) : nlohmann::json();
  j["max_steps"] = c.max_steps ? nlohmann::json(*c.max_steps) : nlohmann::json();
  j["mmd_bandwidths"] = c.mmd.bandwidths;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError("train: expected an object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "method") {
        c.method = parse_method(v.get<std::string>());
      } else if (key == "epochs") {
        c.epochs = v.get<int>();
      } else if (key == "batch_size") {
        c.batch_size = v.get<std::size_t>();
      } else if (key == "alpha0") {
        c.alpha0 = v.get<double>();
      } else if (key == "momentum") {
        c.momentum = v.get<double>();
      } else if (key == "lambda_d") {
        c.lambda_d = v.get<double>();
      } else if (key == "lambda_z") {
        c.lambda_z = v.get<double>();
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "n_phases") {
        c.n_phases = v.get<int>();
      } else if (key == "rul_loss") {
        const auto s = v.get<std::string>();
        if (s == "rmse") {
          c.rul_loss = nn::LossKind::rul_rmse;
        } else if (s == "mae") {
          c.rul_loss = nn::LossKind::rul_mae;
        } else {
          throw ConfigError("train.rul_loss must be rmse or mae");
        }
      } else if (key == "detach_soft_weights") {
        c.detach_soft_weights = v.get<bool>();
      } else if (key == "phase_classifier_on_target") {
        c.phase_classifier_on_target = v.get<bool>();
      } else if (key == "soft_weights") {
        c.soft_weights = parse_soft_weights(v.get<std::string>());
      } else if (key == "fixed_rho") {
        c.fixed_rho = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      } else if (key == "max_steps") {
        c.max_steps = v.is_null() ? std::nullopt : std::optional<std::size_t>(v.get<std::size_t>());
      } else if (key == "mmd_bandwidths") {
        c.mmd.bandwidths = v.get<std::vector<double>>();
      } else {
        throw ConfigError("train: unknown key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("train." + key + ": " + e.what());
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Training

namespace {

void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (c.batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
  if (!(c.alpha0 > 0.0)) throw ConfigError("train.alpha0 must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("train.momentum must lie in [0,1)");
  if (c.lambda_d < 0.0 || c.lambda_z < 0.0) throw ConfigError("train.lambda_* must be non-negative");
  if (c.n_phases != 1 && c.n_phases != data::kNumPhases) throw ConfigError("train.n_phases must be 1 or 3");
  if (c.n_phases != data::kNumPhases && c.method != Method::ops_dann_hard) {
    throw ConfigError("train.n_phases other than 3 is only defined for ops-dann-hard");
  }
  if (c.fixed_rho && *c.fixed_rho < 0.0) throw ConfigError("train.fixed_rho must be non-negative");
}

Tensor rows(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t width = x.size() / x.dim(0);
  Tensor out({count, width});
  std::copy_n(x.data() + begin * width, count * width, out.data());
  return out;
}

void add_rows(Tensor& dst, std::size_t begin, const Tensor& src, double scale = 1.0) {
  const std::size_t width = dst.size() / dst.dim(0);
  double* d = dst.data() + begin * width;
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += scale * src[i];
}

// Feature gradient of an adversarial head: reversed and scaled by rho.
void add_reversed(Tensor& grad_features, const Tensor& head_input_grad, double rho) {
  const Tensor reversed = nn::grl_backward(head_input_grad, rho);
  for (std::size_t i = 0; i < grad_features.size(); ++i) grad_features[i] += reversed[i];
}

Tensor scaled(const Tensor& t, double s) {
  Tensor out = t;
  for (double& v : out.values()) v *= s;
  return out;
}

class TargetStream {
 public:
  TargetStream(std::size_t size, nn::Rng& rng) : order_(size), rng_(rng) { reshuffle(); }
  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  nn::Rng& rng_;
  std::size_t pos_ = 0;
};

struct Batch {
  std::vector<std::size_t> source, target;
};

}  // namespace

StepRecord compute_gradients(ModelBundle& model, const TrainConfig& c, const WindowDataset& source,
                             const WindowDataset* target, std::span<const std::size_t> source_rows,
                             std::span<const std::size_t> target_rows, double rho) {
  if (!target_rows.empty() && !target) throw Error("compute_gradients: target rows without a target set");
  if (c.method != Method::source_only && c.method != Method::adabn && target_rows.empty()) {
    throw Error("compute_gradients: method " + std::string(method_name(c.method)) + " needs target rows");
  }
  const struct {
    std::span<const std::size_t> source, target;
  } batch{source_rows, target_rows};
  StepRecord rec;
  rec.rho = rho;
  model.zero_grad();
  const std::size_t ns = batch.source.size(), nt = batch.target.size(), n = ns + nt;

  Tensor x = source.gather(batch.source);
  if (nt > 0) {
    const Tensor xt = target->gather(batch.target);
    Tensor both({n, x.dim(1), x.dim(2)});
    std::copy_n(x.data(), x.size(), both.data());
    std::copy_n(xt.data(), xt.size(), both.data() + x.size());
    x = std::move(both);
  }
  const Tensor features = model.feature_extractor.forward(x, nn::Mode::train);
  Tensor grad_features(features.shape());

  // RUL regression on the source rows.
  std::vector<double> rul(ns);
  for (std::size_t i = 0; i < ns; ++i) rul[i] = source.rul(batch.source[i]);
  const Tensor pred = model.regressor.forward(nt > 0 ? rows(features, 0, ns) : features);
  const auto rul_loss = nn::compute_loss(c.rul_loss, pred, rul);
  rec.rul_loss = rul_loss.value;
  add_rows(grad_features, 0, model.regressor.backward(rul_loss.grad));

  std::vector<double> domain(n, 0.0);
  std::vector<int> phase(n);
  for (std::size_t i = 0; i < ns; ++i) phase[i] = static_cast<int>(source.phase(batch.source[i]));
  for (std::size_t i = 0; i < nt; ++i) {
    domain[ns + i] = 1.0;
    phase[ns + i] = static_cast<int>(target->phase(batch.target[i]));
  }

  switch (c.method) {
    case Method::dann: {
      auto& disc = model.discriminators[0];
      const auto loss = nn::bce(disc.forward(features), domain);
      rec.head_losses = {loss.value};
      rec.domain_loss = loss.value;
      add_reversed(grad_features, disc.backward(scaled(loss.grad, c.lambda_d)), rho);
      break;
    }
    case Method::ops_dann_hard: {
      for (std::size_t h = 0; h < model.discriminators.size(); ++h) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = (c.n_phases == 1 || phase[i] == static_cast<int>(h)) ? 1.0 : 0.0;
        auto& disc = model.discriminators[h];
        const auto loss = nn::bce(disc.forward(features), domain, w, nn::Reduction::weighted_mean);
        rec.head_losses.push_back(loss.value);
        rec.domain_loss += loss.value;
        add_reversed(grad_features, disc.backward(scaled(loss.grad, c.lambda_d)), rho);
      }
      break;
    }
    case Method::ops_dann_soft: {
      auto& classifier = *model.phase_classifier;
      const Tensor probs = classifier.forward(features);
      std::vector<double> cw(n, 1.0);
      if (!c.phase_classifier_on_target) std::fill(cw.begin() + static_cast<std::ptrdiff_t>(ns), cw.end(), 0.0);
      const auto ce = nn::cross_entropy(probs, phase, cw, nn::Reduction::weighted_mean);
      rec.phase_loss = ce.value;
      Tensor grad_probs = scaled(ce.grad, c.lambda_z);
      const std::size_t heads = model.discriminators.size();
      for (std::size_t h = 0; h < heads; ++h) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) {
          switch (c.soft_weights) {
            case SoftWeights::classifier:
              w[i] = probs[i * heads + h];
              break;
            case SoftWeights::oracle:
              w[i] = phase[i] == static_cast<int>(h) ? 1.0 : 0.0;
              break;
            case SoftWeights::uniform:
              w[i] = 1.0 / static_cast<double>(heads);
              break;
          }
        }
        auto& disc = model.discriminators[h];
        const auto loss = nn::bce(disc.forward(features), domain, w, nn::Reduction::weighted_mean);
        rec.head_losses.push_back(loss.value);
        rec.domain_loss += loss.value;
        add_reversed(grad_features, disc.backward(scaled(loss.grad, c.lambda_d)), rho);
        if (!c.detach_soft_weights && c.soft_weights == SoftWeights::classifier) {
          for (std::size_t i = 0; i < n; ++i) grad_probs[i * heads + h] += c.lambda_d * loss.weight_grad[i];
        }
      }
      add_rows(grad_features, 0, classifier.backward(grad_probs));
      break;
    }
    case Method::multiclass_ops_dann: {
      std::vector<int> cls(n);
      for (std::size_t i = 0; i < n; ++i) cls[i] = 3 * static_cast<int>(domain[i]) + phase[i];
      auto& disc = model.discriminators[0];
      const auto loss = nn::cross_entropy(disc.forward(features), cls);
      rec.head_losses = {loss.value};
      rec.domain_loss = loss.value;
      add_reversed(grad_features, disc.backward(scaled(loss.grad, c.lambda_d)), rho);
      break;
    }
    case Method::mk_mmd: {
      const auto mmd = compute_mk_mmd(rows(features, 0, ns), rows(features, ns, nt), c.mmd);
      rec.mmd = mmd.value;
      add_rows(grad_features, 0, mmd.grad_source, c.lambda_d);
      add_rows(grad_features, ns, mmd.grad_target, c.lambda_d);
      break;
    }
    case Method::source_only:
    case Method::adabn:
      break;
  }

  const double total = total_loss(rec, c);
  if (!std::isfinite(total)) {
    throw Error("non-finite training loss (rul " + std::to_string(rec.rul_loss) + ", domain " +
                std::to_string(rec.domain_loss) + ", phase " + std::to_string(rec.phase_loss) + ", mmd " +
                std::to_string(rec.mmd) + ")");
  }
  model.feature_extractor.backward(grad_features, false);
  return rec;
}

double total_loss(const StepRecord& r, const TrainConfig& c) {
  return r.rul_loss + c.lambda_d * (r.domain_loss + r.mmd) + c.lambda_z * r.phase_loss;
}

TrainResult train(const TrainConfig& c, const WindowDataset& source, const WindowDataset* target,
                  const ModelBundle* initial) {
  validate(c);
  if (source.empty()) throw Error("train: empty source window set");
  if (!source.labeled()) throw Error("train: source windows must carry RUL labels");
  const bool uses_target = c.method != Method::source_only;
  if (uses_target) {
    if (!target || target->empty()) throw Error("train: method " + std::string(method_name(c.method)) + " needs target windows");
    if (target->labeled()) throw Error("train: target windows must be unlabeled");
  }
  const bool target_batches = uses_target && c.method != Method::adabn;

  TrainResult result;
  result.model = initial ? *initial : build_model(c.method, c.seed, c.n_phases);
  if (result.model.method != c.method) throw Error("train: initial model was built for another method");
  auto& model = result.model;
  const auto layers = model.parameter_layers();

  std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32), 0x5eedu};
  nn::Rng data_rng(seq);
  std::optional<TargetStream> stream;
  if (target_batches) stream.emplace(target->size(), data_rng);

  const std::size_t n = source.size();
  std::size_t batches_per_epoch = (n + c.batch_size - 1) / c.batch_size;
  if (n % c.batch_size == 1 && batches_per_epoch > 1) --batches_per_epoch;  // a lone sample cannot form a batch
  const std::size_t total_steps = batches_per_epoch * static_cast<std::size_t>(c.epochs);

  nn::Sgd optimizer(c.alpha0, c.momentum);
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    if (c.max_steps && step >= *c.max_steps) break;
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), data_rng);
    const double lr = nn::schedule_lr(static_cast<double>(step) / static_cast<double>(total_steps), c.alpha0);
    optimizer.set_learning_rate(lr);
    EpochRecord er;
    er.epoch = epoch;
    er.lr = lr;
    std::size_t in_epoch = 0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      if (c.max_steps && step >= *c.max_steps) break;
      Batch batch;
      const std::size_t begin = b * c.batch_size;
      const std::size_t end = b + 1 == batches_per_epoch ? n : std::min(n, begin + c.batch_size);
      batch.source.assign(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
      if (stream) batch.target = stream->next(batch.source.size());
      const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
      const double rho = c.fixed_rho ? *c.fixed_rho : nn::schedule_rho(progress);
      StepRecord rec;
      try {
        rec = compute_gradients(model, c, source, target, batch.source, batch.target, rho);
      } catch (const Error& e) {
        throw Error("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " + e.what());
      }
      optimizer.step(layers);
      rec.epoch = epoch;
      rec.step = step;
      rec.progress = progress;
      rec.lr = lr;
      er.rho = rho;
      er.rul_loss += rec.rul_loss;
      er.domain_loss += rec.domain_loss;
      er.phase_loss += rec.phase_loss;
      er.mmd += rec.mmd;
      result.steps.push_back(std::move(rec));
      ++step;
      ++in_epoch;
    }
    if (in_epoch > 0) {
      const double k = static_cast<double>(in_epoch);
      er.rul_loss /= k, er.domain_loss /= k, er.phase_loss /= k, er.mmd /= k;
      result.epochs.push_back(er);
    }
  }
  if (c.method == Method::adabn) adapt_batchnorm(model, *target);
  return result;
}

void adapt_batchnorm(ModelBundle& model, const WindowDataset& target, std::size_t batch_size) {
  if (target.empty()) throw Error("adapt_batchnorm: no target windows");
  auto& fe = model.feature_extractor;
  for (std::size_t layer = 0; layer < fe.size(); ++layer) {
    if (fe.op(layer) != nn::Stack::Op::batchnorm1d) continue;
    const std::size_t channels = fe.params(layer).weights.size();
    std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
    double count = 0.0;
    // Two exact passes: mean, then biased variance about it.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t begin = 0; begin < target.size(); begin += batch_size) {
        std::vector<std::size_t> idx(std::min(batch_size, target.size() - begin));
        std::iota(idx.begin(), idx.end(), begin);
        const Tensor y = fe.infer_prefix(target.gather(idx), layer);
        const std::size_t b = y.dim(0), steps = y.dim(2);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t ch = 0; ch < channels; ++ch) {
            const double* row = y.data() + (i * channels + ch) * steps;
            for (std::size_t t = 0; t < steps; ++t) {
              if (pass == 0) {
                sum[ch] += row[t];
              } else {
                const double d = row[t] - sum[ch];
                sq[ch] += d * d;
              }
            }
          }
        if (pass == 0) count += static_cast<double>(b * steps);
      }
      if (pass == 0) {
        for (double& s : sum) s /= count;
      }
    }
    auto& p = fe.params(layer);
    for (std::size_t ch = 0; ch < channels; ++ch) {
      p.running_mean[ch] = sum[ch];
      p.running_var[ch] = sq[ch] / count;
    }
  }
}

namespace {

template <typename Fn>
void for_batches(std::size_t n, std::size_t batch_size, Fn&& fn) {
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t count = std::min(batch_size, n - begin);
    fn(begin, count);
  }
}

void check_model(const ModelBundle& model) {
  for (const auto* p : model.parameter_layers()) {
    p->weights.check_finite("model parameters");
    p->bias.check_finite("model parameters");
  }
}

}  // namespace

std::vector<double> predict_rul(const ModelBundle& model, const WindowDataset& windows, std::size_t batch_size) {
  check_model(model);
  std::vector<double> out;
  out.reserve(windows.size());
  for_batches(windows.size(), batch_size, [&](std::size_t begin, std::size_t count) {
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor y = model.regressor.infer(model.feature_extractor.infer(windows.gather(idx)));
    out.insert(out.end(), y.values().begin(), y.values().end());
  });
  return out;
}

Tensor embed(const ModelBundle& model, const WindowDataset& windows, std::span<const std::size_t> indices,
             std::size_t batch_size) {
  check_model(model);
  Tensor out({indices.size(), kFeatureDim});
  for_batches(indices.size(), batch_size, [&](std::size_t begin, std::size_t count) {
    const Tensor f = model.feature_extractor.infer(windows.gather(indices.subspan(begin, count)));
    std::copy_n(f.data(), f.size(), out.data() + begin * kFeatureDim);
  });
  return out;
}

void write_trace_csv(std::ostream& out, const std::vector<EpochRecord>& epochs) {
  out << "epoch,lr,rho,rul_loss,domain_loss,phase_loss,mmd\n";
  char buf[256];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.lr, e.rho, e.rul_loss,
                  e.domain_loss, e.phase_loss, e.mmd);
    out << buf;
  }
}

}  // namespace opsdann::da
