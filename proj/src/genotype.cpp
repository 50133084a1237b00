#include <fstream>
#include <set>

#include "cdnas/search_space.hpp"

namespace cdnas {

nlohmann::ordered_json Genotype::to_json() const {
  nlohmann::ordered_json cj = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json ej = nlohmann::ordered_json::array();
    for (const auto& e : c.edges) ej.push_back({{"to", e.to}, {"from", e.from}, {"op", e.op}});
    cj.push_back({{"edges", ej}});
  }
  return {{"space", space}, {"cells", cj}, {"meta", {{"seed", seed}, {"epochs", epochs}}}};
}

Genotype Genotype::from_json(const nlohmann::ordered_json& j) {
  Genotype g;
  try {
    g.space = j.at("space").get<std::string>();
    for (const auto& c : j.at("cells")) {
      GenotypeCell cell;
      for (const auto& e : c.at("edges")) {
        cell.edges.push_back(
            {e.at("to").get<std::size_t>(), e.at("from").get<std::size_t>(), e.at("op").get<std::string>()});
      }
      g.cells.push_back(std::move(cell));
    }
    if (j.contains("meta")) {
      g.seed = j["meta"].value("seed", std::uint64_t{0});
      g.epochs = j["meta"].value("epochs", std::size_t{0});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed genotype: ") + e.what());
  }
  return g;
}

void Genotype::validate(const SearchSpace& space) const {
  if (this->space != space.id()) {
    throw ConfigError("genotype belongs to space '" + this->space + "', not '" + space.id() + "'");
  }
  if (cells.size() != space.cell_types) {
    throw ConfigError("genotype has " + std::to_string(cells.size()) + " cells, space expects " +
                      std::to_string(space.cell_types));
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t j = space.input_nodes; j < space.input_nodes + space.intermediate_nodes; ++j) {
      std::set<std::size_t> sources;
      for (const auto& e : cells[c].edges) {
        if (e.to != j) continue;
        bool legal = false;
        for (auto idx : space.incoming(j)) legal = legal || space.edges[idx].from == e.from;
        if (!legal || !sources.insert(e.from).second) {
          throw ConfigError("cell " + std::to_string(c) + ": illegal or repeated edge " +
                            std::to_string(e.from) + "->" + std::to_string(j));
        }
        if (e.op == "none" || !space.has_op(e.op)) {
          throw ConfigError("cell " + std::to_string(c) + ": operation '" + e.op +
                            "' is not a selectable op of " + space.id());
        }
      }
      if (sources.size() != space.keep) {
        throw ConfigError("cell " + std::to_string(c) + ": node " + std::to_string(j) + " keeps " +
                          std::to_string(sources.size()) + " edges, expected " +
                          std::to_string(space.keep));
      }
    }
    for (const auto& e : cells[c].edges) {
      if (e.to < space.input_nodes || e.to >= space.input_nodes + space.intermediate_nodes) {
        throw ConfigError("cell " + std::to_string(c) + ": edge into non-intermediate node " +
                          std::to_string(e.to));
      }
    }
  }
}

void save_genotype(const std::filesystem::path& path, const Genotype& g) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << g.to_json().dump(2) << '\n';
}

Genotype load_genotype(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  nlohmann::ordered_json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return Genotype::from_json(j);
}

}  // namespace cdnas
