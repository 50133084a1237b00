#include "cdnas/search_space.hpp"

#include <algorithm>
#include <sstream>

namespace cdnas {

std::string to_string(SpaceKind k) { return k == SpaceKind::baseline ? "baseline" : "fas"; }
std::string to_string(OpVariant v) { return v == OpVariant::vanilla ? "vanilla" : "cd"; }
std::string to_string(HeadKind h) {
  switch (h) {
    case HeadKind::cross_entropy: return "ce";
    case HeadKind::deeppixel: return "deeppixel";
    case HeadKind::depth: return "depth";
  }
  return "?";
}
std::string to_string(PoolKind p) { return p == PoolKind::max ? "max" : "cdp"; }

SpaceKind parse_space_kind(const std::string& s) {
  if (s == "baseline") return SpaceKind::baseline;
  if (s == "fas") return SpaceKind::fas;
  throw ConfigError("unknown search space '" + s + "' (expected baseline|fas)");
}
OpVariant parse_op_variant(const std::string& s) {
  if (s == "vanilla") return OpVariant::vanilla;
  if (s == "cd") return OpVariant::cd;
  throw ConfigError("unknown op variant '" + s + "' (expected vanilla|cd)");
}
HeadKind parse_head_kind(const std::string& s) {
  if (s == "ce" || s == "cross_entropy") return HeadKind::cross_entropy;
  if (s == "deeppixel") return HeadKind::deeppixel;
  if (s == "depth") return HeadKind::depth;
  throw ConfigError("unknown head '" + s + "' (expected ce|deeppixel|depth)");
}
PoolKind parse_pool_kind(const std::string& s) {
  if (s == "max") return PoolKind::max;
  if (s == "cdp") return PoolKind::cdp;
  throw ConfigError("unknown pooling '" + s + "' (expected max|cdp)");
}

std::vector<std::string> baseline_ops(OpVariant variant) {
  if (variant == OpVariant::vanilla) {
    return {"none",         "skip_connect", "max_pool_3x3", "avg_pool_3x3",
            "sep_conv_3x3", "sep_conv_5x5", "dil_conv_3x3"};
  }
  return {"none",         "skip_connect", "max_pool_3x3", "CDP_0.7_3x3",
          "sep_conv_3x3", "sep_conv_5x5", "CDC_0.7_3x3"};
}

std::vector<std::string> fas_ops(OpVariant variant) {
  if (variant == OpVariant::vanilla) {
    return {"none",     "skip_connect", "max_pool_3x3", "conv_3x3",
            "conv_2_2", "conv_2_4",     "conv_2_6",     "conv_2_8"};
  }
  return {"none",    "skip_connect", "max_pool_3x3", "CDC_3x3",
          "CDC_2_2", "CDC_2_4",      "CDC_2_6",      "CDC_2_8"};
}

SearchSpace baseline_space(OpVariant variant, HeadKind head) {
  if (head == HeadKind::depth) throw ConfigError("baseline space supports ce|deeppixel heads");
  SearchSpace s;
  s.kind = SpaceKind::baseline;
  s.variant = variant;
  s.head = head;
  s.ops = baseline_ops(variant);
  s.input_nodes = 2;
  s.intermediate_nodes = 4;
  s.keep = 2;
  s.cell_types = 2;
  for (std::size_t j = 2; j < 6; ++j)
    for (std::size_t i = 0; i < j; ++i) s.edges.push_back({j, i, i != 0});
  return s;
}

SearchSpace fas_space(OpVariant variant, PoolKind pooling, bool attention) {
  SearchSpace s;
  s.kind = SpaceKind::fas;
  s.variant = variant;
  s.head = HeadKind::depth;
  s.pooling = pooling;
  s.attention = attention;
  s.ops = fas_ops(variant);
  s.input_nodes = 1;
  s.intermediate_nodes = 4;
  s.keep = 1;
  s.cell_types = 3;
  for (std::size_t j = 1; j < 5; ++j) s.edges.push_back({j, j - 1, true});
  return s;
}

std::vector<std::size_t> SearchSpace::incoming(std::size_t to) const {
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < edges.size(); ++e)
    if (edges[e].to == to) out.push_back(e);
  return out;
}

std::size_t SearchSpace::op_index(const std::string& name) const {
  auto it = std::find(ops.begin(), ops.end(), name);
  if (it == ops.end()) throw ConfigError("operation '" + name + "' is not in space " + id());
  return std::size_t(it - ops.begin());
}

bool SearchSpace::has_op(const std::string& name) const {
  return std::find(ops.begin(), ops.end(), name) != ops.end();
}

std::string SearchSpace::id() const {
  std::string s = to_string(kind) + "/" + to_string(variant);
  if (kind == SpaceKind::baseline) return s + "/" + to_string(head);
  return s + "/" + to_string(pooling) + "/" + (attention ? "att" : "noatt");
}

SearchSpace SearchSpace::from_id(const std::string& id) {
  std::vector<std::string> parts;
  std::stringstream ss(id);
  for (std::string p; std::getline(ss, p, '/');) parts.push_back(p);
  if (parts.size() < 2) throw ConfigError("malformed space id '" + id + "'");
  const auto kind = parse_space_kind(parts[0]);
  const auto variant = parse_op_variant(parts[1]);
  if (kind == SpaceKind::baseline) {
    if (parts.size() != 3) throw ConfigError("malformed baseline space id '" + id + "'");
    return baseline_space(variant, parse_head_kind(parts[2]));
  }
  if (parts.size() != 4 || (parts[3] != "att" && parts[3] != "noatt")) {
    throw ConfigError("malformed fas space id '" + id + "'");
  }
  return fas_space(variant, parse_pool_kind(parts[2]), parts[3] == "att");
}

nlohmann::ordered_json SearchSpace::to_json() const {
  nlohmann::ordered_json e = nlohmann::ordered_json::array();
  for (const auto& s : edges) e.push_back({{"to", s.to}, {"from", s.from}, {"counted", s.counted}});
  return {{"id", id()},
          {"ops", ops},
          {"cell_types", cell_types},
          {"input_nodes", input_nodes},
          {"intermediate_nodes", intermediate_nodes},
          {"keep", keep},
          {"theta", theta},
          {"lambda", lambda},
          {"edges", e}};
}

void SearchSpace::validate() const {
  if (ops.empty() || ops[0] != "none") throw ConfigError("op list must start with 'none'");
  if (ops.size() < 2) throw ConfigError("op list needs at least one real operation");
  validate_theta(theta);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  for (std::size_t j = input_nodes; j < input_nodes + intermediate_nodes; ++j) {
    if (incoming(j).size() < keep) {
      throw ConfigError("node " + std::to_string(j) + " has fewer candidate edges than keep=" +
                        std::to_string(keep));
    }
  }
  for (const auto& e : edges) {
    if (e.from >= e.to || e.to >= input_nodes + intermediate_nodes || e.to < input_nodes) {
      throw ConfigError("edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
                        " is not a forward edge into an intermediate node");
    }
  }
}

boost::multiprecision::cpp_int space_size(const SearchSpace& space) {
  boost::multiprecision::cpp_int per_cell = 1;
  for (const auto& e : space.edges)
    if (e.counted) per_cell *= space.ops.size();
  boost::multiprecision::cpp_int total = 1;
  for (std::size_t c = 0; c < space.cell_types; ++c) total *= per_cell;
  return total;
}

Genotype random_sample(const SearchSpace& space, Rng& rng) {
  Genotype g;
  g.space = space.id();
  g.seed = rng.seed();
  for (std::size_t c = 0; c < space.cell_types; ++c) {
    GenotypeCell cell;
    for (std::size_t j = space.input_nodes; j < space.input_nodes + space.intermediate_nodes; ++j) {
      auto in = space.incoming(j);
      // Partial Fisher-Yates: the first `keep` entries are a uniform subset.
      for (std::size_t k = 0; k < space.keep; ++k) {
        std::swap(in[k], in[k + rng.index(in.size() - k)]);
      }
      std::vector<std::size_t> chosen(in.begin(), in.begin() + long(space.keep));
      std::sort(chosen.begin(), chosen.end(),
                [&](std::size_t a, std::size_t b) { return space.edges[a].from < space.edges[b].from; });
      for (auto e : chosen) {
        const auto op = 1 + rng.index(space.ops.size() - 1);
        cell.edges.push_back({j, space.edges[e].from, space.ops[op]});
      }
    }
    g.cells.push_back(std::move(cell));
  }
  return g;
}

}  // namespace cdnas
