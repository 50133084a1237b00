#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdnas/cdn_net.hpp"
#include "cdnas/meta_nas.hpp"
#include "cdnas/training.hpp"

namespace cdnas {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumeric = 2;

/// Everything a command needs; mirrors the JSON config file. Unset paths are
/// empty. All randomness comes from `seed` through the "data" (splits),
/// "init" (weights) and "sampling" (batches, search, random genotypes)
/// sub-streams.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path data;
  std::filesystem::path output = "runs";
  std::filesystem::path genotype;
  std::filesystem::path checkpoint;

  InputMode input = InputMode::static_frame;
  SplitMode split = SplitMode::leave_one_domain_out;
  int held_out = 0;
  GroupBy group_by = GroupBy::domain;

  // train
  CdnVariant variant = CdnVariant::depthnet;
  double theta = kDefaultTheta;
  double lambda = kDefaultLambda;
  double width = 0.125;

  // search / retrain
  std::string space = "fas/cd/max/noatt";
  SearchScheme scheme = SearchScheme::dt_meta;
  /// Search width; retrained networks use twice as many channels.
  std::size_t channels = 4;
  std::size_t partial_channels = 1;
  bool edge_normalization = false;
  MetaConfig search;

  TrainConfig train;
  std::size_t eval_batch = 8;

  // compare
  std::size_t random = 3;
  std::vector<std::uint64_t> seeds{0};

  /// Unknown keys and bad values raise ConfigError naming the field path.
  static RunConfig from_json(const nlohmann::ordered_json& j);
  nlohmann::ordered_json to_json() const;
  /// Checks the paths the command reads.
  void validate_for(const std::string& command) const;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Appends one JSON object per line.
class JsonlLog {
 public:
  explicit JsonlLog(const std::filesystem::path& path);
  void operator()(const nlohmann::ordered_json& record);

 private:
  std::ofstream os_;
};

struct RunReport {
  MetricReport metrics;
  std::vector<double> losses;
};

/// Dataset, split and sample sets shared by the commands.
struct Workspace {
  DomainDataset data;
  Split split;
  static Workspace open(const RunConfig& cfg);
};

/// Trains a CDN variant on the train part of the split and evaluates on the
/// test part (threshold from the train part). Writes checkpoint, report and
/// log into `out` when it is non-empty.
RunReport train_cdn(const RunConfig& cfg, const Workspace& ws, std::uint64_t seed, const std::filesystem::path& out);

/// Runs the configured search on the train part; writes genotype.json and
/// search_log.jsonl into `out` when non-empty.
Genotype search_genotype(const RunConfig& cfg, const Workspace& ws, const std::filesystem::path& out);

/// Materializes the genotype at 2 x channels, trains and evaluates it.
RunReport retrain_genotype(const RunConfig& cfg, const Workspace& ws, const Genotype& g, std::uint64_t seed,
                           const std::filesystem::path& out);

/// Rebuilds the network recorded in a checkpoint and evaluates it.
RunReport evaluate_checkpoint(const RunConfig& cfg, const Workspace& ws, const std::filesystem::path& checkpoint);

struct CompareResult {
  double acer_search = 0, acer_random = 0, ri = 0;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  nlohmann::ordered_json to_json() const;
};

/// Retrains the searched genotype once per seed and random genotype i once
/// with seeds[i % seeds.size()]; RI compares the two mean ACERs.
CompareResult compare_genotypes(const RunConfig& cfg, const Workspace& ws, const Genotype& searched,
                                const std::vector<Genotype>& randoms, const std::filesystem::path& out);

std::vector<Genotype> sample_genotypes(const SearchSpace& space, std::size_t n, std::uint64_t seed);

void write_report(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg,
                  const RunReport& r);

}  // namespace cdnas
