#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "cdnas/cd_ops.hpp"
#include "cdnas/rng.hpp"

namespace cdnas {

enum class SpaceKind { baseline, fas };
enum class OpVariant { vanilla, cd };
/// What the network predicts and how it is supervised.
enum class HeadKind { cross_entropy, deeppixel, depth };
enum class PoolKind { max, cdp };

std::string to_string(SpaceKind k);
std::string to_string(OpVariant v);
std::string to_string(HeadKind h);
std::string to_string(PoolKind p);
SpaceKind parse_space_kind(const std::string& s);
OpVariant parse_op_variant(const std::string& s);
HeadKind parse_head_kind(const std::string& s);
PoolKind parse_pool_kind(const std::string& s);

/// Candidate edge into an intermediate node.
struct EdgeSlot {
  std::size_t to = 0, from = 0;
  /// Whether the edge enters the cardinality count (see space_size).
  bool counted = true;
};

/// Immutable description of a cell-based search space.
///
/// Node numbering inside a cell: input nodes first, then intermediates.
/// Baseline: inputs 0 (c_{k-2}) and 1 (c_{k-1}), intermediates 2..5, output =
/// concat of the intermediates. FAS: input 0, intermediates 1..4 in a chain,
/// output = last intermediate.
struct SearchSpace {
  SpaceKind kind = SpaceKind::fas;
  OpVariant variant = OpVariant::cd;
  HeadKind head = HeadKind::depth;
  PoolKind pooling = PoolKind::max;  // FAS only
  bool attention = false;            // FAS only
  double theta = kDefaultTheta;
  double lambda = kDefaultLambda;

  std::vector<std::string> ops;  // ops[0] == "none"
  std::size_t input_nodes = 1;
  std::size_t intermediate_nodes = 4;
  /// Incoming edges kept per intermediate node after discretization.
  std::size_t keep = 1;
  /// Distinct cell architectures (baseline: normal + reduction; FAS: low/mid/high).
  std::size_t cell_types = 3;
  std::vector<EdgeSlot> edges;  // per cell type, identical topology

  std::vector<std::size_t> incoming(std::size_t to) const;
  std::size_t op_index(const std::string& name) const;
  bool has_op(const std::string& name) const;
  /// Stable identifier, e.g. "fas/cd/cdp/att" or "baseline/vanilla/deeppixel".
  std::string id() const;
  static SearchSpace from_id(const std::string& id);
  nlohmann::ordered_json to_json() const;
  void validate() const;
};

/// 9 cells (N N R N N R N N R), 7 ops per edge, two input nodes.
SearchSpace baseline_space(OpVariant variant, HeadKind head = HeadKind::cross_entropy);
/// 3 cells (low/mid/high) of 4 chained edges, 8 ops per edge, each cell
/// followed by a stride-2 pool and optional spatial attention; depth head.
SearchSpace fas_space(OpVariant variant, PoolKind pooling = PoolKind::max, bool attention = false);

std::vector<std::string> baseline_ops(OpVariant variant);
std::vector<std::string> fas_ops(OpVariant variant);

/// Product over cell types and counted edges of the op-set size.
boost::multiprecision::cpp_int space_size(const SearchSpace& space);

// Genotypes ------------------------------------------------------------------

struct GenotypeEdge {
  std::size_t to = 0, from = 0;
  std::string op;
  bool operator==(const GenotypeEdge&) const = default;
};

struct GenotypeCell {
  std::vector<GenotypeEdge> edges;  // sorted by (to, from)
  bool operator==(const GenotypeCell&) const = default;
};

struct Genotype {
  std::string space;  // SearchSpace::id()
  std::vector<GenotypeCell> cells;  // one per cell type
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  bool operator==(const Genotype&) const = default;

  nlohmann::ordered_json to_json() const;
  static Genotype from_json(const nlohmann::ordered_json& j);
  /// Throws ConfigError unless every cell honors the space's topology and the
  /// keep-M rule and only names non-none catalog ops.
  void validate(const SearchSpace& space) const;
};

void save_genotype(const std::filesystem::path& path, const Genotype& g);
Genotype load_genotype(const std::filesystem::path& path);

/// Uniform non-none op per kept edge, uniform M-subset of incoming edges per node.
Genotype random_sample(const SearchSpace& space, Rng& rng);

}  // namespace cdnas
