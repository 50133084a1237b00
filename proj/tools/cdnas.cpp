// cdnas: synthetic data, CDN training, architecture search and evaluation.
#include <CLI11.hpp>

#include <iostream>

#include "cdnas/errors.hpp"
#include "cdnas/harness.hpp"
#include "cdnas/image_io.hpp"

using namespace cdnas;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config, data, out, genotype, checkpoint, input, split, variant, space, scheme, seeds;
  std::optional<std::uint64_t> seed;
  std::optional<int> held_out;
  std::optional<std::size_t> epochs, channels, random, partial;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON run config");
    app->add_option("--data", data, "dataset directory written by gen");
    app->add_option("-o,--out", out, "output directory");
    app->add_option("--seed", seed);
    app->add_option("--input", input, "static | dynamic | static-dynamic");
    app->add_option("--split", split, "intra-domain | leave-one-domain-out | leave-one-type-out");
    app->add_option("--held-out", held_out, "held-out domain index or attack type index");
    app->add_option("--epochs", epochs);
  }

  json merge(const std::string& command) const {
    json j = json::object();
    if (!config.empty()) {
      std::ifstream is(config);
      if (!is) throw ConfigError("config: cannot open " + config);
      try {
        j = json::parse(is);
      } catch (const json::exception& e) {
        throw ConfigError("config: " + config + ": " + e.what());
      }
    }
    auto set = [&](const char* k, const std::string& v) {
      if (!v.empty()) j[k] = v;
    };
    set("data", data);
    set("output", out);
    set("genotype", genotype);
    set("checkpoint", checkpoint);
    set("input", input);
    set("split", split);
    set("variant", variant);
    set("space", space);
    set("scheme", scheme);
    if (seed) j["seed"] = *seed;
    if (held_out) j["held_out"] = *held_out;
    if (channels) j["channels"] = *channels;
    if (partial) j["partial_channels"] = *partial;
    if (random) j["random"] = *random;
    if (epochs) j[command == "search" ? "search" : "train"]["epochs"] = *epochs;
    if (!seeds.empty()) {
      json list = json::array();
      std::stringstream ss(seeds);
      for (std::string tok; std::getline(ss, tok, ',');) {
        try {
          list.push_back(std::stoull(tok));
        } catch (const std::exception&) {
          throw ConfigError("seeds: '" + tok + "' is not a seed");
        }
      }
      j["seeds"] = list;
    }
    return j;
  }
};

void print(const json& j) { std::cout << j.dump() << std::endl; }

int run_gen(const std::string& out, const std::string& config, const TaskSpec& flags, bool have_domains,
            std::size_t domains, const std::string& attacks) {
  TaskSpec spec = flags;
  if (!config.empty()) {
    std::ifstream is(config);
    if (!is) throw ConfigError("config: cannot open " + config);
    json j;
    try {
      j = json::parse(is);
    } catch (const json::exception& e) {
      throw ConfigError("config: " + config + ": " + e.what());
    }
    try {
      spec = TaskSpec::from_json(j.contains("task") ? j.at("task") : j);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("task: ") + e.what());
    }
  }
  if (have_domains) spec.domains = default_domains(domains);
  if (!attacks.empty()) {
    spec.attacks.clear();
    std::stringstream ss(attacks);
    for (std::string tok; std::getline(ss, tok, ',');) spec.attacks.push_back(parse_attack_type(tok));
  }
  if (out.empty()) throw ConfigError("out: required");
  const auto data = gen_dataset(spec);
  save_dataset(out, data);
  print({{"command", "gen"}, {"out", out}, {"samples", data.size()}, {"spec", spec.to_json()}});
  return kExitOk;
}

int run_dynimg(const std::string& data_dir, const std::string& sample, const std::string& out,
               const std::string& mode, const std::string& solver, std::optional<std::size_t> start) {
  if (out.empty()) throw ConfigError("out: required");
  const auto data = load_dataset(data_dir);
  const SyntheticSample* s = nullptr;
  for (const auto& x : data.samples)
    if (x.id == sample) s = &x;
  if (!s) {
    std::size_t k = 0;
    try {
      k = std::stoul(sample);
    } catch (const std::exception&) {
      throw ConfigError("sample: no sample '" + sample + "'");
    }
    if (k >= data.size()) throw ConfigError("sample: index " + sample + " out of range");
    s = &data.samples[k];
  }
  Tensor<float> img;
  const auto m = parse_input_mode(mode);
  if (start || parse_solver(solver) != RankPoolSolver::approximate) {
    const std::size_t t = start.value_or((s->clip.size() - kDynamicWindow) / 2);
    if (t + kDynamicWindow > s->clip.size()) throw ConfigError("start: window runs past the clip");
    img = sliding_dynamic(s->clip, t, kDynamicWindow, parse_solver(solver));
    if (m == InputMode::static_dynamic) img = fuse_static_dynamic(s->clip.frames[s->clip.size() / 2], img);
    else if (m == InputMode::static_frame) img = s->clip.frames[s->clip.size() / 2];
  } else {
    img = input_pipeline(s->clip, m);
  }
  write_ppm(out, m == InputMode::dynamic ? normalize_range(img) : img);
  print({{"command", "dynimg"}, {"sample", s->id}, {"mode", mode}, {"out", out}});
  return kExitOk;
}

int run_command(const std::string& command, const Overrides& o) {
  const RunConfig cfg = RunConfig::from_json(o.merge(command));
  cfg.validate_for(command);
  const auto ws = Workspace::open(cfg);
  const fs::path out = cfg.output;
  if (command == "train") {
    const auto r = train_cdn(cfg, ws, cfg.seed, out);
    print({{"command", command}, {"out", out.string()}, {"metrics", r.metrics.to_json()}});
  } else if (command == "search") {
    const auto g = search_genotype(cfg, ws, out);
    print({{"command", command}, {"out", out.string()}, {"genotype", g.to_json()}});
  } else if (command == "retrain") {
    const auto g = load_genotype(cfg.genotype);
    const auto r = retrain_genotype(cfg, ws, g, cfg.seed, out);
    print({{"command", command}, {"out", out.string()}, {"metrics", r.metrics.to_json()}});
  } else if (command == "eval") {
    const auto r = evaluate_checkpoint(cfg, ws, cfg.checkpoint);
    write_report(out, "eval", cfg, r);
    print({{"command", command}, {"out", out.string()}, {"metrics", r.metrics.to_json()}});
  } else if (command == "compare") {
    const auto g = load_genotype(cfg.genotype);
    const auto randoms = sample_genotypes(SearchSpace::from_id(g.space), cfg.random, cfg.seed);
    const auto r = compare_genotypes(cfg, ws, g, randoms, out);
    print({{"command", command}, {"out", out.string()}, {"acer_search", r.acer_search},
           {"acer_random", r.acer_random}, {"ri", r.ri}});
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cdnas: central-difference networks and architecture search on synthetic anti-spoofing data"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_out, gen_config, gen_attacks;
  TaskSpec gen_spec;
  std::size_t gen_domains = 3;
  gen->add_option("-o,--out", gen_out, "output directory")->required();
  gen->add_option("-c,--config", gen_config, "JSON task spec (or a run config with a \"task\" object)");
  gen->add_option("--seed", gen_spec.seed);
  gen->add_option("--per-class", gen_spec.per_class, "clips per class per domain");
  auto* dom_opt = gen->add_option("--domains", gen_domains, "number of preset domains");
  gen->add_option("--resolution", gen_spec.resolution);
  gen->add_option("--frames", gen_spec.frames);
  gen->add_option("--attacks", gen_attacks, "comma list of lattice,noise,blur-flat");

  auto* dyn = app.add_subcommand("dynimg", "write the network input or dynamic image of one clip");
  std::string dyn_data, dyn_sample, dyn_out, dyn_mode = "dynamic", dyn_solver = "approximate";
  std::optional<std::size_t> dyn_start;
  dyn->add_option("--data", dyn_data)->required();
  dyn->add_option("--sample", dyn_sample, "sample id or index")->required();
  dyn->add_option("-o,--out", dyn_out, "output .ppm")->required();
  dyn->add_option("--mode", dyn_mode, "static | dynamic | static-dynamic");
  dyn->add_option("--solver", dyn_solver, "approximate | exact");
  dyn->add_option("--start", dyn_start, "first frame of the window");

  Overrides train_o, search_o, retrain_o, eval_o, compare_o;
  auto* train = app.add_subcommand("train", "train a CDN variant and report metrics");
  train_o.attach(train);
  train->add_option("--variant", train_o.variant, "depthnet | cdn_cdc | cdn_cdp");

  auto* search = app.add_subcommand("search", "search a genotype");
  search_o.attach(search);
  search->add_option("--space", search_o.space, "fas, baseline, or a full id such as fas/cd/max/noatt");
  search->add_option("--scheme", search_o.scheme, "nas | dt-nas | dt-meta");
  search->add_option("--channels", search_o.channels, "supernet base width");
  search->add_option("--partial-channels", search_o.partial, "partial channel factor K");

  auto* retrain = app.add_subcommand("retrain", "train a genotype at twice the search width");
  retrain_o.attach(retrain);
  retrain->add_option("--genotype", retrain_o.genotype)->required();
  retrain->add_option("--channels", retrain_o.channels, "search width (doubled here)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test part of a split");
  eval_o.attach(eval);
  eval->add_option("--checkpoint", eval_o.checkpoint)->required();

  auto* compare = app.add_subcommand("compare", "searched genotype against random genotypes");
  compare_o.attach(compare);
  compare->add_option("--genotype", compare_o.genotype)->required();
  compare->add_option("--channels", compare_o.channels, "search width (doubled here)");
  compare->add_option("--random", compare_o.random, "number of random genotypes");
  compare->add_option("--seeds", compare_o.seeds, "comma list of retraining seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return run_gen(gen_out, gen_config, gen_spec, dom_opt->count() > 0, gen_domains, gen_attacks);
    if (*dyn) return run_dynimg(dyn_data, dyn_sample, dyn_out, dyn_mode, dyn_solver, dyn_start);
    for (auto [sub, o] : {std::pair{train, &train_o}, {search, &search_o}, {retrain, &retrain_o},
                          {eval, &eval_o}, {compare, &compare_o}})
      if (*sub) return run_command(sub->get_name(), *o);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << std::endl;
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitConfig;
  }
  return kExitConfig;
}
