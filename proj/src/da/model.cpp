#include "opsdann/da/model.hpp"

#include "opsdann/data/series.hpp"
#include "opsdann/error.hpp"
#include "opsdann/nn/optim.hpp"

namespace opsdann::da {

std::string_view method_name(Method method) {
  switch (method) {
    case Method::source_only:
      return "source-only";
    case Method::dann:
      return "dann";
    case Method::ops_dann_hard:
      return "ops-dann-hard";
    case Method::ops_dann_soft:
      return "ops-dann-soft";
    case Method::multiclass_ops_dann:
      return "multiclass-ops-dann";
    case Method::mk_mmd:
      return "mk-mmd";
    case Method::adabn:
      return "adabn";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (auto m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (source-only, dann, ops-dann-hard, ops-dann-soft, multiclass-ops-dann, mk-mmd, adabn)");
}

bool is_adversarial(Method method) {
  return method == Method::dann || method == Method::ops_dann_hard || method == Method::ops_dann_soft ||
         method == Method::multiclass_ops_dann;
}

nn::Stack make_feature_extractor(bool batchnorm) {
  nn::Stack s("feature_extractor");
  const std::size_t channels[] = {data::kChannels, 10, 10, 1};
  for (int i = 0; i < 3; ++i) {
    s.conv1d(channels[i], channels[i + 1], 10);
    if (batchnorm) s.batchnorm1d(channels[i + 1]);
    s.relu();
  }
  return s.flatten();
}

nn::Stack make_regressor() {
  nn::Stack s("regressor");
  s.dense(kFeatureDim, 50).relu().dense(50, 1).sigmoid();
  return s;
}

nn::Stack make_discriminator(std::size_t outputs) {
  nn::Stack s("discriminator");
  s.dense(kFeatureDim, 50).relu().dense(50, 30).relu().dense(30, outputs);
  if (outputs == 1) {
    s.sigmoid();
  } else {
    s.softmax();
  }
  return s;
}

nn::Stack make_phase_classifier() {
  nn::Stack s("phase_classifier");
  s.dense(kFeatureDim, 50).relu().dense(50, 30).relu().dense(30, data::kNumPhases).softmax();
  return s;
}

std::size_t ModelBundle::parameter_count() const {
  std::size_t total = feature_extractor.parameter_count() + regressor.parameter_count();
  for (const auto& d : discriminators) total += d.parameter_count();
  if (phase_classifier) total += phase_classifier->parameter_count();
  return total;
}

std::vector<nn::LayerParams*> ModelBundle::parameter_layers() {
  std::vector<nn::LayerParams*> out = feature_extractor.parameter_layers();
  auto append = [&](nn::Stack& s) {
    for (auto* p : s.parameter_layers()) out.push_back(p);
  };
  append(regressor);
  for (auto& d : discriminators) append(d);
  if (phase_classifier) append(*phase_classifier);
  return out;
}

std::vector<const nn::LayerParams*> ModelBundle::parameter_layers() const {
  std::vector<const nn::LayerParams*> out;
  for (auto* p : const_cast<ModelBundle*>(this)->parameter_layers()) out.push_back(p);
  return out;
}

void ModelBundle::zero_grad() {
  for (auto* p : parameter_layers()) p->zero_grad();
}

namespace {

// Stable names: <stack>/<layer index>/<tensor>.
template <typename Fn>
void for_each_tensor(const ModelBundle& m, Fn&& fn) {
  auto visit = [&](const nn::Stack& s, const std::string& prefix) {
    std::size_t index = 0;
    for (const auto* p : s.parameter_layers()) {
      const std::string base = prefix + "/" + std::to_string(index++) + "/";
      fn(base + "weights", p->weights);
      fn(base + "bias", p->bias);
      if (p->kind == nn::LayerKind::batchnorm1d) {
        fn(base + "running_mean", p->running_mean);
        fn(base + "running_var", p->running_var);
      }
    }
  };
  visit(m.feature_extractor, "feature_extractor");
  visit(m.regressor, "regressor");
  for (std::size_t i = 0; i < m.discriminators.size(); ++i) visit(m.discriminators[i], "discriminator" + std::to_string(i));
  if (m.phase_classifier) visit(*m.phase_classifier, "phase_classifier");
}

}  // namespace

nn::Container ModelBundle::to_container() const {
  nn::Container c;
  c.add("method/" + std::string(method_name(method)), nn::Tensor({1}, std::vector<double>{1.0}));
  for_each_tensor(*this, [&](const std::string& name, const nn::Tensor& t) {
    c.add(name, nn::Tensor(t.shape(), std::vector<double>(t.values().begin(), t.values().end())));
  });
  return c;
}

void ModelBundle::load(const nn::Container& container) {
  if (!container.contains("method/" + std::string(method_name(method)))) {
    throw FormatError("checkpoint was not written for method " + std::string(method_name(method)));
  }
  for_each_tensor(*this, [&](const std::string& name, const nn::Tensor& t) {
    const auto& stored = container.get(name);
    if (stored.shape() != t.shape()) throw FormatError("checkpoint tensor '" + name + "' has the wrong shape");
    auto& target = const_cast<nn::Tensor&>(t);
    std::copy(stored.values().begin(), stored.values().end(), target.values().begin());
  });
}

ModelBundle build_model(Method method, std::uint64_t seed, int n_phases) {
  if (n_phases < 1) throw ConfigError("n_phases must be at least 1");
  ModelBundle m;
  m.method = method;
  m.feature_extractor = make_feature_extractor(method == Method::adabn);
  m.regressor = make_regressor();
  switch (method) {
    case Method::dann:
      m.discriminators.push_back(make_discriminator(1));
      break;
    case Method::ops_dann_hard:
      for (int i = 0; i < n_phases; ++i) m.discriminators.push_back(make_discriminator(1));
      break;
    case Method::ops_dann_soft:
      for (int i = 0; i < n_phases; ++i) m.discriminators.push_back(make_discriminator(1));
      m.phase_classifier = make_phase_classifier();
      break;
    case Method::multiclass_ops_dann:
      m.discriminators.push_back(make_discriminator(kMultiClassOutputs));
      break;
    default:
      break;
  }
  nn::Rng rng(seed);
  const auto layers = m.parameter_layers();
  nn::xavier_init(layers, rng);
  return m;
}

bool same_parameters(const ModelBundle& a, const ModelBundle& b) {
  const auto la = a.parameter_layers(), lb = b.parameter_layers();
  if (la.size() != lb.size()) return false;
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (la[i]->weights != lb[i]->weights || la[i]->bias != lb[i]->bias) return false;
    if (la[i]->kind == nn::LayerKind::batchnorm1d &&
        (la[i]->running_mean != lb[i]->running_mean || la[i]->running_var != lb[i]->running_var)) {
      return false;
    }
  }
  return true;
}

}  // namespace opsdann::da
