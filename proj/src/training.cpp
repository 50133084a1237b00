#include "cdnas/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cdnas/errors.hpp"
#include "cdnas/nas.hpp"
#include "cdnas/supernet.hpp"

namespace cdnas {

std::string to_string(InputMode m) {
  switch (m) {
    case InputMode::static_frame: return "static";
    case InputMode::dynamic: return "dynamic";
    case InputMode::static_dynamic: return "static-dynamic";
  }
  return "?";
}

InputMode parse_input_mode(const std::string& s) {
  if (s == "static") return InputMode::static_frame;
  if (s == "dynamic") return InputMode::dynamic;
  if (s == "static-dynamic" || s == "static_dynamic") return InputMode::static_dynamic;
  throw ConfigError("unknown input mode '" + s + "' (static|dynamic|static-dynamic)");
}

std::string to_string(GroupBy g) { return g == GroupBy::domain ? "domain" : "type"; }

GroupBy parse_group_by(const std::string& s) {
  if (s == "domain") return GroupBy::domain;
  if (s == "type") return GroupBy::type;
  throw ConfigError("unknown grouping '" + s + "' (domain|type)");
}

Tensor<float> input_pipeline(const FrameSequence& clip, InputMode mode) {
  clip.validate(mode == InputMode::static_frame ? 1 : kDynamicWindow);
  const std::size_t mid = clip.size() / 2;
  if (mode == InputMode::static_frame) return clip.frames[mid];
  const std::size_t start = std::min(mid - std::min(mid, kDynamicWindow / 2), clip.size() - kDynamicWindow);
  Tensor<float> dyn = sliding_dynamic(clip, start, kDynamicWindow, RankPoolSolver::approximate);
  if (mode == InputMode::dynamic) return dyn;
  return fuse_static_dynamic(clip.frames[mid], dyn);
}

namespace {

// Bilinear resize of a single-channel map (align_corners = false).
Tensor<float> resize_map(const Tensor<float>& m, std::size_t side) {
  const std::size_t h = m.dim(0), w = m.dim(1);
  if (h == side && w == side) return m;
  Tensor<float> out({side, side});
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) {
      const double y = std::clamp((double(i) + 0.5) * double(h) / double(side) - 0.5, 0.0, double(h - 1));
      const double x = std::clamp((double(j) + 0.5) * double(w) / double(side) - 0.5, 0.0, double(w - 1));
      const std::size_t y0 = std::size_t(y), x0 = std::size_t(x);
      const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double fy = y - double(y0), fx = x - double(x0);
      out.data()[i * side + j] = float((1 - fy) * ((1 - fx) * m.data()[y0 * w + x0] + fx * m.data()[y0 * w + x1]) +
                                       fy * ((1 - fx) * m.data()[y1 * w + x0] + fx * m.data()[y1 * w + x1]));
    }
  return out;
}

}  // namespace

template <typename T>
SampleSet<T> build_samples(const DomainDataset& data, const std::vector<std::size_t>& idx, InputMode mode,
                           HeadKind head, std::size_t head_side, GroupBy by) {
  if (idx.empty()) throw ConfigError("no samples selected");
  const std::size_t n = idx.size(), S = data.spec.resolution;
  SampleSet<T> set;
  set.x = Tensor<T>({n, 3, S, S});
  if (head != HeadKind::cross_entropy) set.target = Tensor<T>({n, 1, head_side, head_side});
  const std::size_t per = 3 * S * S, tper = head_side * head_side;

  std::map<int, int> remap;
  for (auto i : idx) {
    const auto& s = data.samples.at(i);
    if (by == GroupBy::domain) remap.emplace(s.domain, 0);
    else if (!s.live) remap.emplace(s.type, 0);
  }
  if (remap.empty()) throw ConfigError("type grouping needs at least one attack sample");
  int next = 0;
  for (auto& [_, g] : remap) g = next++;
  int live_turn = 0;

  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = data.samples.at(idx[k]);
    const auto x = input_pipeline(s.clip, mode);
    if (x.shape() != Shape{3, S, S}) throw ShapeError("clip frame size does not match the dataset resolution");
    for (std::size_t q = 0; q < per; ++q) set.x.data()[k * per + q] = T(x.data()[q]);
    if (head == HeadKind::depth) {
      const auto t = resize_map(s.depth, head_side);
      for (std::size_t q = 0; q < tper; ++q) set.target.data()[k * tper + q] = T(t.data()[q]);
    } else if (head == HeadKind::deeppixel) {
      for (std::size_t q = 0; q < tper; ++q) set.target.data()[k * tper + q] = T(s.live);
    }
    set.labels.push_back(s.live);
    if (by == GroupBy::domain) set.groups.push_back(remap.at(s.domain));
    else if (!s.live) set.groups.push_back(remap.at(s.type));
    else set.groups.push_back(live_turn++ % next);
  }
  return set;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs: must be positive");
  if (batch_size < 2) throw ConfigError("train.batch_size: must be at least 2");
  if (!(lr > 0)) throw ConfigError("train.lr: must be positive");
  if (weight_decay < 0) throw ConfigError("train.weight_decay: must be >= 0");
  if (optimizer != "sgd" && optimizer != "adam") throw ConfigError("train.optimizer: must be sgd or adam");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  return {{"epochs", epochs}, {"batch_size", batch_size}, {"lr", lr}, {"weight_decay", weight_decay},
          {"optimizer", optimizer}};
}

TrainConfig TrainConfig::from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.optimizer = j.value("optimizer", c.optimizer);
  return c;
}

template <typename T>
std::vector<double> train_network(Layer<T>& net, HeadKind head, const SampleSet<T>& train, const TrainConfig& cfg,
                                  Rng rng, const TrainLogger& log) {
  cfg.validate();
  auto opt = make_optimizer<T>(cfg.optimizer, cfg.lr, cfg.weight_decay);
  auto params = net.parameters();
  std::vector<std::size_t> order(train.size());
  std::vector<double> history;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng r = rng.substream(e);
    std::shuffle(order.begin(), order.end(), r.engine());
    double total = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      if (end - b < 2) continue;
      const Batch<T> batch = make_batch(train, std::vector<std::size_t>(order.begin() + long(b), order.begin() + long(end)));
      net.zero_grad();
      auto loss = head_loss(head, net.forward(constant(batch.x)), batch);
      const double l = double(loss.value().item());
      if (!std::isfinite(l)) throw NumericError("non-finite training loss at epoch " + std::to_string(e));
      backward(loss);
      opt->step(params);
      total += l;
      ++batches;
    }
    history.push_back(batches ? total / double(batches) : 0.0);
    if (log) log({{"epoch", e}, {"loss", history.back()}, {"batches", batches}});
  }
  return history;
}

template <typename T>
std::vector<double> predict_scores(Layer<T>& net, HeadKind head, const SampleSet<T>& set, std::size_t batch) {
  if (batch == 0) throw ConfigError("evaluation batch must be positive");
  std::vector<std::size_t> live, attack, order;
  for (std::size_t i = 0; i < set.size(); ++i) (set.labels[i] ? live : attack).push_back(i);
  for (std::size_t k = 0; k < std::max(live.size(), attack.size()); ++k) {
    if (k < live.size()) order.push_back(live[k]);
    if (k < attack.size()) order.push_back(attack[k]);
  }
  // A short tail borrows earlier samples so its statistics are not degenerate.
  std::vector<double> scores(set.size());
  NoGradGuard guard;
  for (std::size_t b = 0; b < order.size(); b += batch) {
    std::vector<std::size_t> chunk(order.begin() + long(b), order.begin() + long(std::min(order.size(), b + batch)));
    const std::size_t real = chunk.size();
    for (std::size_t k = 0; chunk.size() < std::min(batch, order.size()); ++k) chunk.push_back(order[k]);
    const auto out = net.forward(constant(detail::gather_rows(set.x, chunk))).value();
    const auto s = head_scores(head, out);
    for (std::size_t k = 0; k < real; ++k) scores[chunk[k]] = s[k];
  }
  return scores;
}

template <typename T>
MetricReport evaluate_network(Layer<T>& net, HeadKind head, const SampleSet<T>& dev, const SampleSet<T>& test,
                              std::size_t batch) {
  const auto ds = predict_scores(net, head, dev, batch);
  const auto ts = predict_scores(net, head, test, batch);
  return evaluate_scores(ds, dev.labels, ts, test.labels);
}

#define CDNAS_INSTANTIATE(T)                                                                                    \
  template SampleSet<T> build_samples<T>(const DomainDataset&, const std::vector<std::size_t>&, InputMode,    \
                                         HeadKind, std::size_t, GroupBy);                                     \
  template std::vector<double> train_network<T>(Layer<T>&, HeadKind, const SampleSet<T>&, const TrainConfig&, \
                                                Rng, const TrainLogger&);                                     \
  template std::vector<double> predict_scores<T>(Layer<T>&, HeadKind, const SampleSet<T>&, std::size_t);      \
  template MetricReport evaluate_network<T>(Layer<T>&, HeadKind, const SampleSet<T>&, const SampleSet<T>&,    \
                                            std::size_t);
CDNAS_INSTANTIATE(float)
CDNAS_INSTANTIATE(double)
#undef CDNAS_INSTANTIATE

}  // namespace cdnas
