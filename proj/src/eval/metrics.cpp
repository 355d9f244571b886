#include "opsdann/eval/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "opsdann/error.hpp"
#include "opsdann/nn/loss.hpp"
#include "opsdann/nn/network.hpp"
#include "opsdann/nn/optim.hpp"

namespace opsdann::eval {

namespace {

void require_pairs(std::span<const double> pred, std::span<const double> truth, const char* what) {
  if (pred.empty()) throw Error(std::string(what) + ": empty input");
  if (pred.size() != truth.size()) {
    throw Error(std::string(what) + ": " + std::to_string(pred.size()) + " predictions for " +
                std::to_string(truth.size()) + " targets");
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
  require_pairs(pred, truth, "rmse");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

NasaScore nasa_score(std::span<const double> pred, std::span<const double> truth) {
  require_pairs(pred, truth, "nasa_score");
  NasaScore s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    s.total += std::exp((d >= 0.0 ? 1.0 / 10.0 : 1.0 / 13.0) * std::abs(d));
  }
  s.mean = s.total / static_cast<double>(pred.size());
  return s;
}

// ---------------------------------------------------------------------------
// Proxy A-distance

double pad_from_error(double error) { return std::clamp(2.0 * (1.0 - 2.0 * error), 0.0, 2.0); }

namespace {

struct Split {
  std::vector<std::size_t> train, test;  // indices into the pooled matrix
};

// 80/20 within each domain so both sides are represented in both parts.
Split stratified_split(std::size_t ns, std::size_t nt, double fraction, nn::Rng& rng) {
  Split s;
  auto part = [&](std::size_t begin, std::size_t count) {
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), begin);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto cut = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(count))),
                                             1, count - 1);
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  };
  part(0, ns);
  part(ns, nt);
  return s;
}

nn::Tensor gather_rows(const nn::Tensor& pooled, std::span<const std::size_t> rows) {
  const std::size_t d = pooled.dim(1);
  nn::Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(pooled.data() + rows[i] * d, d, out.data() + i * d);
  return out;
}

double probe_error(const nn::Tensor& pooled, std::size_t ns, const PadConfig& c, std::uint64_t seed) {
  const std::size_t n = pooled.dim(0), d = pooled.dim(1), nt = n - ns;
  nn::Rng rng(seed);
  const Split split = stratified_split(ns, nt, c.train_fraction, rng);

  nn::Stack probe("probe");
  probe.dense(d, c.hidden).relu().dense(c.hidden, 1).sigmoid();
  const auto layers = probe.parameter_layers();
  nn::xavier_init(layers, rng);
  nn::Sgd optimizer(c.learning_rate, c.momentum);

  // class weights n / (2 n_domain) over the training part
  double train_source = 0.0;
  for (auto i : split.train) train_source += i < ns;
  const double train_n = static_cast<double>(split.train.size());
  const double w_source = train_n / (2.0 * train_source), w_target = train_n / (2.0 * (train_n - train_source));

  std::vector<std::size_t> order = split.train;
  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += c.batch_size) {
      const std::span<const std::size_t> rows(order.data() + begin, std::min(c.batch_size, order.size() - begin));
      std::vector<double> label(rows.size()), weight(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        label[i] = rows[i] < ns ? 0.0 : 1.0;
        weight[i] = rows[i] < ns ? w_source : w_target;
      }
      probe.zero_grad();
      const auto loss = nn::bce(probe.forward(gather_rows(pooled, rows)), label, weight, nn::Reduction::weighted_mean);
      probe.backward(loss.grad, false);
      optimizer.step(layers);
    }
  }

  // balanced held-out error: mean of the per-domain error rates
  const nn::Tensor p = probe.infer(gather_rows(pooled, split.test));
  double wrong[2] = {0, 0}, count[2] = {0, 0};
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    const int domain = split.test[i] < ns ? 0 : 1;
    const int guess = p[i] >= 0.5 ? 1 : 0;
    wrong[domain] += guess != domain;
    count[domain] += 1.0;
  }
  return 0.5 * (wrong[0] / count[0] + wrong[1] / count[1]);
}

}  // namespace

PadResult proxy_a_distance(const nn::Tensor& source, const nn::Tensor& target, const PadConfig& c) {
  if (source.rank() != 2 || target.rank() != 2 || source.dim(1) != target.dim(1)) {
    throw Error("proxy_a_distance: expected n x d embeddings of equal width");
  }
  if (source.dim(0) < c.min_per_domain || target.dim(0) < c.min_per_domain) {
    throw Error("proxy_a_distance: need at least " + std::to_string(c.min_per_domain) +
                " samples per domain (got " + std::to_string(source.dim(0)) + " source, " +
                std::to_string(target.dim(0)) + " target)");
  }
  if (c.repeats < 1 || c.epochs < 1 || c.batch_size < 1) throw ConfigError("pad: repeats, epochs and batch size must be positive");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ConfigError("pad: train_fraction must lie in (0,1)");
  source.check_finite("source embeddings");
  target.check_finite("target embeddings");

  const std::size_t ns = source.dim(0), d = source.dim(1);
  nn::Tensor pooled({ns + target.dim(0), d});
  std::copy_n(source.data(), source.size(), pooled.data());
  std::copy_n(target.data(), target.size(), pooled.data() + source.size());

  PadResult r;
  std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32), 0x9adu};
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(c.repeats));
  seq.generate(seeds.begin(), seeds.end());
  for (auto s : seeds) {
    const double e = probe_error(pooled, ns, c, s);
    r.errors.push_back(e);
    r.pads.push_back(pad_from_error(e));
  }
  r.pad = median(r.pads);
  return r;
}

// ---------------------------------------------------------------------------
// PCA and silhouette

PcaResult pca_project(const nn::Tensor& x, std::size_t k) {
  if (x.rank() != 2) throw Error("pca_project: expected an n x d matrix");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (k < 1 || k > d) throw Error("pca_project: k must lie in [1, d]");
  if (n < k) throw Error("pca_project: need at least k samples");
  x.check_finite("pca input");

  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const Matrix> X(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const Matrix centered = X.rowwise() - mu;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(std::max<std::size_t>(n - 1, 1));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("pca_project: eigendecomposition failed");

  PcaResult r;
  r.mean.assign(mu.data(), mu.data() + d);
  r.components = nn::Tensor({k, d});
  r.explained_variance.assign(k, 0.0);
  const double largest = std::max(eig.eigenvalues()(static_cast<Eigen::Index>(d - 1)), 0.0);
  const double tolerance = largest * 1e-12 * static_cast<double>(d);
  for (std::size_t j = 0; j < k; ++j) {
    const auto col = static_cast<Eigen::Index>(d - 1 - j);  // eigenvalues ascend
    const double value = eig.eigenvalues()(col);
    if (!(value > tolerance)) break;
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    for (std::size_t i = 0; i < d; ++i) r.components[j * d + i] = v(static_cast<Eigen::Index>(i));
    r.explained_variance[j] = value;
    r.rank = j + 1;
  }
  r.projected = nn::Tensor({n, k});
  const Eigen::Map<const Matrix> W(r.components.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  Eigen::Map<Matrix>(r.projected.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) =
      centered * W.transpose();
  return r;
}

double silhouette(const nn::Tensor& points, std::span<const int> labels) {
  if (points.rank() != 2) throw Error("silhouette: expected an n x d matrix");
  const std::size_t n = points.dim(0), d = points.dim(1);
  if (labels.size() != n) throw Error("silhouette: one label per point required");
  std::map<int, std::size_t> cluster;  // label -> dense index
  for (int l : labels) cluster.emplace(l, 0);
  if (cluster.size() < 2) throw Error("silhouette: need at least two distinct labels");
  std::size_t next = 0;
  for (auto& [label, index] : cluster) index = next++;
  std::vector<std::size_t> id(n), size(cluster.size(), 0);
  for (std::size_t i = 0; i < n; ++i) ++size[id[i] = cluster.at(labels[i])];

  double total = 0.0;
  std::vector<double> sum(cluster.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sum.begin(), sum.end(), 0.0);
    const double* a = points.data() + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b = points.data() + j * d;
      double dist = 0.0;
      for (std::size_t q = 0; q < d; ++q) dist += (a[q] - b[q]) * (a[q] - b[q]);
      sum[id[j]] += std::sqrt(dist);
    }
    if (size[id[i]] == 1) continue;
    const double within = sum[id[i]] / static_cast<double>(size[id[i]] - 1);
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sum.size(); ++c) {
      if (c != id[i]) nearest = std::min(nearest, sum[c] / static_cast<double>(size[c]));
    }
    const double denom = std::max(within, nearest);
    if (denom > 0.0) total += (nearest - within) / denom;
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Reports

MetricsReport evaluate_predictions(const data::WindowDataset& labeled, std::span<const double> predictions) {
  if (!labeled.labeled()) throw Error("evaluate_predictions: window set carries no labels");
  if (predictions.size() != labeled.size()) throw Error("evaluate_predictions: one prediction per window required");
  const std::size_t n = labeled.size();
  std::vector<double> truth(n), truth_cycles(n), pred_cycles(n);
  MetricsReport r;
  r.windows = n;
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = labeled.rul(i);
    const double span = labeled.units()[labeled.unit_of(i)].rul_span_cycles;
    truth_cycles[i] = truth[i] * span;
    pred_cycles[i] = predictions[i] * span;
  }
  r.rmse_norm = rmse(predictions, truth);
  r.rmse_cycles = rmse(pred_cycles, truth_cycles);
  r.nasa = nasa_score(pred_cycles, truth_cycles);

  // units in set order, cycles ascending within a unit
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ua = labeled.unit_of(a), ub = labeled.unit_of(b);
    return ua != ub ? ua < ub : labeled.cycle(a) < labeled.cycle(b);
  });
  r.traces.reserve(n);
  for (auto i : order) {
    r.traces.push_back({labeled.units()[labeled.unit_of(i)].series.unit_id, labeled.cycle(i), truth[i], predictions[i]});
  }
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["rmse_cycles"] = r.rmse_cycles;
  j["rmse_norm"] = r.rmse_norm;
  j["nasa_score_mean"] = r.nasa.mean;
  j["nasa_score_total"] = r.nasa.total;
  j["pad"] = r.pad ? nlohmann::json(*r.pad) : nlohmann::json(nullptr);
  j["phase_silhouette"] = r.phase_silhouette ? nlohmann::json(*r.phase_silhouette) : nlohmann::json(nullptr);
  j["windows"] = r.windows;
  return j;
}

std::string format_real(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_metrics_header(std::ostream& out) {
  out << "method,seed,rmse_cycles,rmse_norm,nasa_mean,nasa_total,pad,silhouette,windows\n";
}

void write_metrics_row(std::ostream& out, const std::string& method, std::uint64_t seed, const MetricsReport& r) {
  out << method << ',' << seed << ',' << format_real(r.rmse_cycles) << ',' << format_real(r.rmse_norm) << ','
      << format_real(r.nasa.mean) << ',' << format_real(r.nasa.total) << ',' << (r.pad ? format_real(*r.pad) : "")
      << ',' << (r.phase_silhouette ? format_real(*r.phase_silhouette) : "") << ',' << r.windows << '\n';
}

void write_traces_csv(std::ostream& out, const std::vector<TracePoint>& traces) {
  out << "unit_id,cycle,rul_true,rul_pred\n";
  for (const auto& t : traces) {
    out << t.unit_id << ',' << t.cycle << ',' << format_real(t.truth) << ',' << format_real(t.predicted) << '\n';
  }
}

void write_projection_csv(std::ostream& out, const PcaResult& pca, std::span<const data::Domain> domains,
                          std::span<const data::Phase> phases) {
  const std::size_t n = pca.projected.dim(0), k = pca.projected.dim(1);
  if (k < 2) throw Error("write_projection_csv: need two components");
  if (domains.size() != n || phases.size() != n) throw Error("write_projection_csv: one tag per point required");
  out << "x1,x2,domain,phase\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << format_real(pca.projected[i * k]) << ',' << format_real(pca.projected[i * k + 1]) << ','
        << data::domain_name(domains[i]) << ',' << data::phase_name(phases[i]) << '\n';
  }
}

}  // namespace opsdann::eval
