#pragma once

#include <functional>
#include <string>

#include <json.hpp>

#include "cdnas/metrics.hpp"
#include "cdnas/nn.hpp"
#include "cdnas/search_model.hpp"
#include "cdnas/search_space.hpp"
#include "cdnas/synthetic.hpp"

namespace cdnas {

enum class InputMode { static_frame, dynamic, static_dynamic };
std::string to_string(InputMode m);
/// "static", "dynamic", "static-dynamic".
InputMode parse_input_mode(const std::string& s);

/// static: middle frame; dynamic: approximate rank pool of the K-frame
/// window around the middle; static-dynamic: fuse_static_dynamic of both.
Tensor<float> input_pipeline(const FrameSequence& clip, InputMode mode);

/// What a sample's group tag is for the domain/type-aware schemes.
enum class GroupBy { domain, type };
std::string to_string(GroupBy g);
GroupBy parse_group_by(const std::string& s);

/// Network inputs and head targets for the chosen samples. Depth heads get
/// the depth map (resized to head_side when needed), DeepPixel heads a
/// constant 1/0 map, cross-entropy heads labels only. Group tags are the
/// distinct domains (or attack types) present, renumbered from 0; with
/// GroupBy::type live samples are dealt round-robin over the type groups.
template <typename T>
SampleSet<T> build_samples(const DomainDataset& data, const std::vector<std::size_t>& idx, InputMode mode,
                           HeadKind head, std::size_t head_side, GroupBy by = GroupBy::domain);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double weight_decay = 5e-5;
  std::string optimizer = "adam";

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::ordered_json& j);
};

using TrainLogger = std::function<void(const nlohmann::ordered_json&)>;

/// Mini-batch training on the head loss; returns the mean loss of every
/// epoch. Batches of a single sample are skipped (batch statistics).
template <typename T>
std::vector<double> train_network(Layer<T>& net, HeadKind head, const SampleSet<T>& train, const TrainConfig& cfg,
                                  Rng rng, const TrainLogger& log = {});

/// Liveness scores. Samples are interleaved live/attack and run in batches
/// of `batch` so every batch mixes both classes.
template <typename T>
std::vector<double> predict_scores(Layer<T>& net, HeadKind head, const SampleSet<T>& set, std::size_t batch = 8);

/// Metric report on `test` with the threshold taken from `dev`.
template <typename T>
MetricReport evaluate_network(Layer<T>& net, HeadKind head, const SampleSet<T>& dev, const SampleSet<T>& test,
                              std::size_t batch = 8);

}  // namespace cdnas
