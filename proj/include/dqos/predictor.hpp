#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "dqos/common.hpp"
#include "dqos/telemetry.hpp"

namespace dqos {

enum class LayerKind : std::uint8_t { Dense, Relu, Dropout };

struct Layer {
  LayerKind kind = LayerKind::Dense;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t w_offset = 0;  // row-major out x in weights, then out biases
  double rate = 0;           // dropout probability
};

struct ForwardCache {
  std::vector<std::vector<double>> inputs;  // input to each layer
  std::vector<std::vector<double>> masks;   // per layer; scaled keep mask for dropout, empty otherwise
  std::vector<double> output;
};

// Plain feed-forward network over a flat parameter vector.
class Mlp {
 public:
  Mlp() = default;

  // The Table 2 stack: three Dense(20)+ReLU+Dropout blocks and a linear head.
  static Mlp table2(std::size_t input_dim, std::size_t n_out, std::size_t hidden = 20, double dropout = 0.15,
                    std::size_t blocks = 3) {
    Mlp m;
    std::size_t width = input_dim;
    for (std::size_t i = 0; i < blocks; ++i) {
      m.add_dense(width, hidden);
      m.add(LayerKind::Relu, hidden);
      m.add(LayerKind::Dropout, hidden, dropout);
      width = hidden;
    }
    m.add_dense(width, n_out);
    return m;
  }

  Mlp& add_dense(std::size_t in, std::size_t out) {
    if (!layers_.empty() && layers_.back().out != in) throw DimensionMismatch("layer widths do not chain");
    Layer l{LayerKind::Dense, in, out, params_.size(), 0};
    params_.resize(params_.size() + in * out + out, 0.0);
    layers_.push_back(l);
    return *this;
  }

  Mlp& add(LayerKind kind, std::size_t width, double rate = 0) {
    if (kind == LayerKind::Dense) throw Error("use add_dense");
    if (!layers_.empty() && layers_.back().out != width) throw DimensionMismatch("layer widths do not chain");
    if (kind == LayerKind::Dropout && !(rate >= 0 && rate < 1)) throw Error("dropout rate must lie in [0,1)");
    layers_.push_back(Layer{kind, width, width, 0, rate});
    return *this;
  }

  // Uniform He initialization, +-sqrt(6 / fan_in); biases start at zero.
  template <class Rng>
  void init(Rng& rng) {
    for (const auto& l : layers_) {
      if (l.kind != LayerKind::Dense) continue;
      const double lim = std::sqrt(6.0 / static_cast<double>(l.in));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (std::size_t i = 0; i < l.in * l.out; ++i) params_[l.w_offset + i] = u(rng);
      for (std::size_t i = 0; i < l.out; ++i) params_[l.w_offset + l.in * l.out + i] = 0.0;
    }
  }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::vector<double> infer(const std::vector<double>& x) const {
    ForwardCache c;
    return run(x, nullptr, nullptr, c);
  }

  // Training-mode pass: each dropout layer zeroes units with its rate and
  // scales survivors by 1/(1-rate).
  template <class Rng>
  std::vector<double> forward_train(const std::vector<double>& x, Rng& rng, ForwardCache& cache) const {
    auto draw = [&rng](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= p; };
    std::function<bool(double)> f = draw;
    return run(x, &f, nullptr, cache);
  }

  // Replays a pass with fixed dropout masks (from a previous cache).
  std::vector<double> forward_masked(const std::vector<double>& x, const std::vector<std::vector<double>>& masks,
                                     ForwardCache& cache) const {
    return run(x, nullptr, &masks, cache);
  }

  // Accumulates parameter gradients of a loss whose gradient with respect to
  // the output of the cached pass is `grad_out`.
  void backward(const ForwardCache& cache, std::vector<double> grad_out, std::vector<double>& grads) const {
    if (grads.size() != params_.size()) grads.assign(params_.size(), 0.0);
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& l = layers_[li];
      const auto& x = cache.inputs[li];
      switch (l.kind) {
        case LayerKind::Dense: {
          std::vector<double> gin(l.in, 0.0);
          const double* w = &params_[l.w_offset];
          double* gw = &grads[l.w_offset];
          double* gb = gw + l.in * l.out;
          for (std::size_t o = 0; o < l.out; ++o) {
            const double g = grad_out[o];
            gb[o] += g;
            for (std::size_t i = 0; i < l.in; ++i) {
              gw[o * l.in + i] += g * x[i];
              gin[i] += g * w[o * l.in + i];
            }
          }
          grad_out = std::move(gin);
          break;
        }
        case LayerKind::Relu:
          for (std::size_t i = 0; i < l.in; ++i)
            if (x[i] <= 0) grad_out[i] = 0;
          break;
        case LayerKind::Dropout:
          if (!cache.masks[li].empty())
            for (std::size_t i = 0; i < l.in; ++i) grad_out[i] *= cache.masks[li][i];
          break;
      }
    }
  }

  bool operator==(const Mlp& o) const {
    if (params_ != o.params_ || layers_.size() != o.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto &a = layers_[i], &b = o.layers_[i];
      if (a.kind != b.kind || a.in != b.in || a.out != b.out || a.rate != b.rate) return false;
    }
    return true;
  }

 private:
  std::vector<double> run(const std::vector<double>& x, std::function<bool(double)>* keep,
                          const std::vector<std::vector<double>>* fixed, ForwardCache& cache) const {
    if (x.size() != input_dim())
      throw DimensionMismatch("input has " + std::to_string(x.size()) + " features, model expects " +
                              std::to_string(input_dim()));
    cache.inputs.assign(layers_.size(), {});
    cache.masks.assign(layers_.size(), {});
    std::vector<double> a = x;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      cache.inputs[li] = a;
      switch (l.kind) {
        case LayerKind::Dense: {
          std::vector<double> y(l.out);
          const double* w = &params_[l.w_offset];
          const double* b = w + l.in * l.out;
          for (std::size_t o = 0; o < l.out; ++o) {
            double s = b[o];
            for (std::size_t i = 0; i < l.in; ++i) s += w[o * l.in + i] * a[i];
            y[o] = s;
          }
          a = std::move(y);
          break;
        }
        case LayerKind::Relu:
          for (auto& v : a) v = v > 0 ? v : 0.0;
          break;
        case LayerKind::Dropout:
          if (fixed) {
            cache.masks[li] = (*fixed)[li];
          } else if (keep) {
            cache.masks[li].resize(l.in);
            const double scale = 1.0 / (1.0 - l.rate);
            for (auto& m : cache.masks[li]) m = (*keep)(l.rate) ? scale : 0.0;
          }
          if (!cache.masks[li].empty())
            for (std::size_t i = 0; i < l.in; ++i) a[i] *= cache.masks[li][i];
          break;
      }
    }
    cache.output = a;
    return a;
  }

  std::vector<Layer> layers_;
  std::vector<double> params_;
};

inline double mse_loss(const std::vector<double>& predicted, const std::vector<double>& actual) {
  if (predicted.size() != actual.size()) throw DimensionMismatch("prediction and target lengths differ");
  if (predicted.empty()) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) s += (predicted[i] - actual[i]) * (predicted[i] - actual[i]);
  return s / static_cast<double>(predicted.size());
}

// Mean over every output element of every sample in the batch.
inline double mse_loss(const std::vector<std::vector<double>>& predicted,
                       const std::vector<std::vector<double>>& actual) {
  if (predicted.size() != actual.size()) throw DimensionMismatch("batch sizes differ");
  double s = 0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < predicted.size(); ++b) {
    s += mse_loss(predicted[b], actual[b]) * static_cast<double>(predicted[b].size());
    n += predicted[b].size();
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

struct TrainConfig {
  std::size_t batch_size = 5;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double validation_fraction = 0.1;
  std::uint64_t seed = 1;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (patience >= max_epochs) throw ConfigError("patience must be smaller than max_epochs");
  }
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

// One bias-corrected Adam update; `t` is the 1-based step number.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& s,
                      const TrainConfig& cfg) {
  if (grads.size() != params.size()) throw DimensionMismatch("gradient length differs from parameters");
  if (s.m.size() != params.size()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = cfg.adam_beta1 * s.m[i] + (1.0 - cfg.adam_beta1) * grads[i];
    s.v[i] = cfg.adam_beta2 * s.v[i] + (1.0 - cfg.adam_beta2) * grads[i] * grads[i];
    params[i] -= cfg.learning_rate * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + cfg.adam_eps);
  }
}

// Mean gradient of the batch MSE. Returns the training loss of the pass.
template <class Rng>
double batch_gradient(const Mlp& model, const std::vector<const std::vector<double>*>& xs,
                      const std::vector<const std::vector<double>*>& ys, Rng& rng, std::vector<double>& grads) {
  grads.assign(model.params().size(), 0.0);
  const double denom = static_cast<double>(xs.size() * model.output_dim());
  double loss = 0;
  ForwardCache cache;
  for (std::size_t b = 0; b < xs.size(); ++b) {
    auto pred = model.forward_train(*xs[b], rng, cache);
    const auto& y = *ys[b];
    if (y.size() != pred.size()) throw DimensionMismatch("target width differs from model output");
    std::vector<double> g(pred.size());
    for (std::size_t o = 0; o < pred.size(); ++o) {
      const double e = pred[o] - y[o];
      loss += e * e;
      g[o] = 2.0 * e / denom;
    }
    model.backward(cache, std::move(g), grads);
  }
  return loss / denom;
}

struct TrainReport {
  std::vector<double> epoch_losses;
  std::vector<double> val_losses;
  std::size_t stopped_at_epoch = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0;

  bool operator==(const TrainReport&) const = default;
};

// Early-stopping bookkeeping: feed one validation loss per epoch; returns true
// once `patience` epochs have passed without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  bool update(std::size_t epoch, double val_loss) {
    if (best_epoch_ == 0 || val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch;
      improved_ = true;
    } else {
      improved_ = false;
    }
    return epoch - best_epoch_ >= patience_;
  }
  bool improved() const { return improved_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_ = 0;
  bool improved_ = false;
};

inline double evaluate_mse(const Mlp& model, const std::vector<std::vector<double>>& xs,
                           const std::vector<std::vector<double>>& ys, std::size_t from, std::size_t to) {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = from; i < to; ++i) {
    auto p = model.infer(xs[i]);
    s += mse_loss(p, ys[i]) * static_cast<double>(p.size());
    n += p.size();
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

// Mini-batch Adam training with early stopping on the chronologically last
// `validation_fraction` of the rows. Best-epoch parameters are restored.
inline TrainReport train(Mlp& model, const std::vector<std::vector<double>>& xs,
                         const std::vector<std::vector<double>>& ys, const TrainConfig& cfg) {
  cfg.validate();
  if (xs.empty()) throw EmptyDataset("no training rows");
  if (xs.size() != ys.size()) throw DimensionMismatch("inputs and targets differ in count");
  std::size_t n_val = static_cast<std::size_t>(std::floor(static_cast<double>(xs.size()) * cfg.validation_fraction));
  if (xs.size() >= 2) n_val = std::max<std::size_t>(n_val, 1);
  const std::size_t n_train = xs.size() - n_val;
  const std::size_t val_from = n_val == 0 ? 0 : n_train;

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x7A1));
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  AdamState adam;
  EarlyStopping stopper(cfg.patience);
  TrainReport report;
  std::vector<double> best_params = model.params();
  std::vector<double> grads;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t end = std::min(n_train, start + cfg.batch_size);
      std::vector<const std::vector<double>*> bx, by;
      for (std::size_t i = start; i < end; ++i) {
        bx.push_back(&xs[order[i]]);
        by.push_back(&ys[order[i]]);
      }
      loss_sum += batch_gradient(model, bx, by, rng, grads) * static_cast<double>(end - start);
      adam_step(model.params(), grads, adam, cfg);
    }
    report.epoch_losses.push_back(loss_sum / static_cast<double>(n_train));
    const double val = evaluate_mse(model, xs, ys, val_from, n_val == 0 ? n_train : xs.size());
    report.val_losses.push_back(val);
    const bool stop = stopper.update(epoch, val);
    if (stopper.improved()) best_params = model.params();
    report.stopped_at_epoch = epoch;
    if (stop) break;
  }
  for (const auto& p : model.params())
    if (!std::isfinite(p)) throw InvariantViolation("non-finite parameter after training");
  model.params() = best_params;
  report.best_epoch = stopper.best_epoch();
  report.best_val_loss = stopper.best();
  return report;
}

// A trained predictor together with everything needed to build its inputs
// from raw telemetry and to map its outputs back to percentages.
struct PredictorModel {
  int model_id = 1;
  std::size_t k = 0;
  StateLayout layout;
  std::vector<std::size_t> columns;  // into [attack, current_state]
  Normalization input_norm;
  Normalization target_norm;
  Mlp net;
  std::uint64_t dataset_hash = 0;
  double dummy_rate = 0;

  std::vector<double> raw_input(const StateVector& current, const std::vector<double>& attack) const {
    if (attack.size() != k) throw DimensionMismatch("attack vector length differs from the model's K");
    const auto full = full_features(attack, current);
    if (full.size() != k + layout.total()) throw DimensionMismatch("state vector does not match the model layout");
    std::vector<double> x;
    x.reserve(columns.size());
    for (auto c : columns) x.push_back(full[c]);
    return x;
  }

  // Per-switch drop rates in percent, clamped to [0, 100].
  std::vector<double> predict_drop_rates(const StateVector& current, const std::vector<double>& attack) const {
    auto y = target_norm.invert(net.infer(input_norm.apply(raw_input(current, attack))));
    for (auto& v : y) v = std::clamp(v, 0.0, 100.0);
    return y;
  }

  // Same, for an already normalized input (used when evaluating noisy inputs).
  std::vector<double> predict_normalized(const std::vector<double>& z) const {
    auto y = target_norm.invert(net.infer(z));
    for (auto& v : y) v = std::clamp(v, 0.0, 100.0);
    return y;
  }

  void write(std::ostream& os) const {
    auto vec = [&os](const char* name, const std::vector<double>& v) {
      os << name;
      for (double x : v) os << " " << format_double(x);
      os << "\n";
    };
    os << "# dqos model v1\n";
    os << "model_id " << model_id << "\n";
    os << "k " << k << "\n";
    os << "dataset_hash " << std::hex << dataset_hash << std::dec << "\n";
    os << "dummy_rate " << format_double(dummy_rate) << "\n";
    for (std::size_t c = 0; c < kCategories; ++c) {
      os << "layout" << c + 1;
      for (const auto& n : layout.names[c]) os << " " << n;
      os << "\n";
    }
    os << "columns";
    for (auto c : columns) os << " " << c;
    os << "\n";
    vec("input_mean", input_norm.mean);
    vec("input_std", input_norm.stdev);
    vec("target_mean", target_norm.mean);
    vec("target_std", target_norm.stdev);
    os << "layers " << net.layers().size() << "\n";
    for (const auto& l : net.layers()) {
      switch (l.kind) {
        case LayerKind::Dense: os << "dense " << l.in << " " << l.out << "\n"; break;
        case LayerKind::Relu: os << "relu " << l.in << "\n"; break;
        case LayerKind::Dropout: os << "dropout " << l.in << " " << format_double(l.rate) << "\n"; break;
      }
    }
    vec("params", net.params());
  }

  static PredictorModel read(std::istream& is) {
    PredictorModel m;
    std::string line;
    int line_no = 0;
    bool magic = false;
    auto numbers = [](const std::vector<std::string_view>& f) {
      std::vector<double> v;
      for (std::size_t i = 1; i < f.size(); ++i) v.push_back(parse_double(f[i]));
      return v;
    };
    std::size_t expect_layers = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line == "# dqos model v1") {
        magic = true;
        continue;
      }
      if (line.empty() || line[0] == '#') continue;
      auto f = split_ws(line);
      const std::string key(f[0]);
      try {
        if (key == "model_id") {
          m.model_id = std::stoi(std::string(f.at(1)));
        } else if (key == "k") {
          m.k = std::stoul(std::string(f.at(1)));
        } else if (key == "dataset_hash") {
          m.dataset_hash = std::stoull(std::string(f.at(1)), nullptr, 16);
        } else if (key == "dummy_rate") {
          m.dummy_rate = parse_double(f.at(1));
        } else if (key.rfind("layout", 0) == 0) {
          auto c = std::stoul(key.substr(6)) - 1;
          for (std::size_t i = 1; i < f.size(); ++i) m.layout.names.at(c).emplace_back(f[i]);
        } else if (key == "columns") {
          for (std::size_t i = 1; i < f.size(); ++i) m.columns.push_back(std::stoul(std::string(f[i])));
        } else if (key == "input_mean") {
          m.input_norm.mean = numbers(f);
        } else if (key == "input_std") {
          m.input_norm.stdev = numbers(f);
        } else if (key == "target_mean") {
          m.target_norm.mean = numbers(f);
        } else if (key == "target_std") {
          m.target_norm.stdev = numbers(f);
        } else if (key == "layers") {
          expect_layers = std::stoul(std::string(f.at(1)));
        } else if (key == "dense") {
          m.net.add_dense(std::stoul(std::string(f.at(1))), std::stoul(std::string(f.at(2))));
        } else if (key == "relu") {
          m.net.add(LayerKind::Relu, std::stoul(std::string(f.at(1))));
        } else if (key == "dropout") {
          m.net.add(LayerKind::Dropout, std::stoul(std::string(f.at(1))), parse_double(f.at(2)));
        } else if (key == "params") {
          auto p = numbers(f);
          if (p.size() != m.net.params().size()) throw LayoutMismatch("parameter count does not match layers");
          m.net.params() = std::move(p);
        } else {
          throw ConfigError("unknown checkpoint field '" + key + "'", line_no);
        }
      } catch (const std::logic_error&) {
        throw ConfigError("malformed checkpoint field '" + key + "'", line_no);
      }
    }
    if (!magic) throw ConfigError("not a dqos model checkpoint");
    if (m.net.layers().size() != expect_layers) throw LayoutMismatch("checkpoint layer count mismatch");
    if (m.columns.size() != m.net.input_dim() || m.input_norm.mean.size() != m.columns.size() ||
        m.target_norm.mean.size() != m.net.output_dim())
      throw LayoutMismatch("checkpoint dimensions are inconsistent");
    return m;
  }
};

struct ModelData {
  std::vector<std::vector<double>> x;  // normalized inputs
  std::vector<std::vector<double>> y;  // normalized targets
};

// Builds normalized train/test matrices for one model variant. Normalization
// is fitted on the first `split` snapshots only. Noisy variants get their
// training state features perturbed once here, with a stream derived from
// `seed`; test rows stay clean unless `noisy_test` is set.
inline std::pair<ModelData, ModelData> prepare_model_data(const Dataset& ds, int model_id, std::size_t split,
                                                          double noise_sigma, std::uint64_t seed,
                                                          Normalization& input_norm, Normalization& target_norm,
                                                          bool noisy_test = false) {
  if (split == 0) throw EmptyDataset("training split is empty");
  if (split > ds.snapshots.size()) throw Error("split beyond dataset");
  std::vector<std::vector<double>> xr, yr;
  for (const auto& s : ds.snapshots) {
    auto [x, y] = select_inputs(s, model_id, ds.layout);
    xr.push_back(std::move(x));
    yr.push_back(std::move(y));
  }
  input_norm = Normalization::fit({xr.begin(), xr.begin() + static_cast<std::ptrdiff_t>(split)});
  target_norm = Normalization::fit({yr.begin(), yr.begin() + static_cast<std::ptrdiff_t>(split)});
  std::mt19937_64 noise(mix_seed(seed, 0x9000 + static_cast<std::uint64_t>(model_id)));
  ModelData train, test;
  for (std::size_t i = 0; i < xr.size(); ++i) {
    auto z = input_norm.apply(xr[i]);
    if (model_is_noisy(model_id) && (i < split || noisy_test)) add_state_noise(z, ds.k, noise_sigma, noise);
    auto& dst = i < split ? train : test;
    dst.x.push_back(std::move(z));
    dst.y.push_back(target_norm.apply(yr[i]));
  }
  return {train, test};
}

}  // namespace dqos
