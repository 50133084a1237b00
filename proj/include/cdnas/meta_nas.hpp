#pragma once

#include <functional>
#include <string>

#include "cdnas/nas.hpp"
#include "cdnas/supernet.hpp"

namespace cdnas {

enum class SearchScheme { nas, dt_nas, dt_meta };
std::string to_string(SearchScheme s);
/// "nas", "dt-nas", "dt-meta".
SearchScheme parse_search_scheme(const std::string& s);

struct MetaConfig {
  double gamma1 = 1e-4;        // inner / plain weight lr
  double outer_lr = 1e-4;      // meta-weight lr (gamma1 tilde)
  double gamma2 = 6e-4;        // architecture lr
  double weight_decay = 5e-5;
  double arch_weight_decay = 1e-3;
  std::string weight_optimizer = "adam";
  std::string arch_optimizer = "adam";
  ArchGradMode mode = ArchGradMode::first_order;
  std::size_t inner_steps = 1;
  std::size_t batch_size = 8;  // per domain task
  std::size_t epochs = 10;
  /// 0 picks a size from the data (see iterations_per_epoch()).
  std::size_t iterations = 0;
  std::size_t alpha_freeze_epochs = 0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static MetaConfig from_json(const nlohmann::ordered_json& j);
};

/// Shuffled pass over a fixed index pool; reshuffles when exhausted, so
/// samples are drawn without replacement within each pass.
class EpochSampler {
 public:
  EpochSampler(std::vector<std::size_t> pool, Rng rng);
  std::vector<std::size_t> next(std::size_t n);

 private:
  std::vector<std::size_t> pool_;
  std::size_t pos_ = 0;
  Rng rng_;
};

/// Held-out group per iteration: a fresh random permutation of the groups
/// every N iterations, so each group is the query once per block.
class QueryRotation {
 public:
  QueryRotation(int groups, Rng rng);
  int next();

 private:
  std::vector<int> order_;
  std::size_t pos_ = 0;
  Rng rng_;
};

/// One JSON object per iteration.
using SearchLogger = std::function<void(const nlohmann::ordered_json&)>;

/// Iterations per epoch: the configured count, or enough for one pass over
/// the support data, rounded up to whole query rotations for the D/T schemes.
std::size_t iterations_per_epoch(const MetaConfig& cfg, SearchScheme scheme, std::size_t samples,
                                 int groups);

/// Random 50/50 support/query split of all samples; alternating updates.
template <typename T>
Genotype nas_search(Supernet<T>& net, const SampleSet<T>& data, const MetaConfig& cfg,
                    const SearchLogger& log = {});

/// Query group rotates; one weight step on the summed support-group losses,
/// then an architecture step on the query batch.
template <typename T>
Genotype dt_nas_search(Supernet<T>& net, const SampleSet<T>& data, const MetaConfig& cfg,
                       const SearchLogger& log = {});

/// Meta-learning scheme: inner updates per support group, outer update from
/// the learners' query losses, then the architecture step.
template <typename T>
Genotype dt_meta_nas_search(Supernet<T>& net, const SampleSet<T>& data, const MetaConfig& cfg,
                            const SearchLogger& log = {});

template <typename T>
Genotype run_search(SearchScheme scheme, Supernet<T>& net, const SampleSet<T>& data,
                    const MetaConfig& cfg, const SearchLogger& log = {});

/// Compact summary of the architecture: per cell type and edge, the leading
/// op and its beta.
nlohmann::ordered_json beta_summary(const SearchSpace& space,
                                    const std::vector<std::vector<std::vector<double>>>& betas);

}  // namespace cdnas
