#include "cdnas/harness.hpp"

#include <chrono>
#include <numeric>
#include <set>
#include <type_traits>

#include "cdnas/errors.hpp"
#include "cdnas/supernet.hpp"

namespace cdnas {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Typed access to one JSON object; errors name the field path.
class Fields {
 public:
  Fields(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j.is_object()) throw ConfigError(where() + "expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!take(key)) return;
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      const auto& v = j_.at(key);
      if (!v.is_number_unsigned()) throw ConfigError(where() + key + ": expected a non-negative integer (" + v.dump() + ")");
    }
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where() + key + ": wrong type (" + j_.at(key).dump() + ")");
    }
  }

  template <typename F>
  void parse(const std::string& key, F&& f) {
    if (!take(key)) return;
    try {
      f(j_.at(key));
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.rfind(where() + key + ".", 0) == 0 || msg.rfind(key + ".", 0) == 0) throw;
      throw ConfigError(where() + key + ": " + msg);
    } catch (const json::exception&) {
      throw ConfigError(where() + key + ": wrong type (" + j_.at(key).dump() + ")");
    }
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where() + k + ": unknown field");
  }

 private:
  bool take(const std::string& key) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    return true;
  }
  std::string where() const { return prefix_.empty() ? "" : prefix_ + "."; }

  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

std::string str(const json& v) { return v.get<std::string>(); }

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Fields f(j, "");
  f.get("seed", c.seed);
  f.parse("data", [&](const json& v) { c.data = str(v); });
  f.parse("output", [&](const json& v) { c.output = str(v); });
  f.parse("genotype", [&](const json& v) { c.genotype = str(v); });
  f.parse("checkpoint", [&](const json& v) { c.checkpoint = str(v); });
  f.parse("input", [&](const json& v) { c.input = parse_input_mode(str(v)); });
  f.parse("split", [&](const json& v) { c.split = parse_split_mode(str(v)); });
  f.get("held_out", c.held_out);
  f.parse("group_by", [&](const json& v) { c.group_by = parse_group_by(str(v)); });
  f.parse("variant", [&](const json& v) { c.variant = parse_cdn_variant(str(v)); });
  f.get("theta", c.theta);
  f.get("lambda", c.lambda);
  f.get("width", c.width);
  f.parse("space", [&](const json& v) {
    c.space = str(v);
    // Bare space names take the default variant.
    if (c.space == "fas") c.space = "fas/cd/max/noatt";
    if (c.space == "baseline") c.space = "baseline/cd/deeppixel";
    SearchSpace::from_id(c.space);
  });
  f.parse("scheme", [&](const json& v) { c.scheme = parse_search_scheme(str(v)); });
  f.get("channels", c.channels);
  f.get("partial_channels", c.partial_channels);
  f.get("edge_normalization", c.edge_normalization);
  f.parse("search", [&](const json& v) {
    Fields s(v, "search");
    auto& m = c.search;
    s.get("gamma1", m.gamma1);
    s.get("outer_lr", m.outer_lr);
    s.get("gamma2", m.gamma2);
    s.get("weight_decay", m.weight_decay);
    s.get("arch_weight_decay", m.arch_weight_decay);
    s.get("weight_optimizer", m.weight_optimizer);
    s.get("arch_optimizer", m.arch_optimizer);
    s.parse("arch_grad", [&](const json& x) { m.mode = parse_arch_grad_mode(str(x)); });
    s.get("inner_steps", m.inner_steps);
    s.get("batch_size", m.batch_size);
    s.get("epochs", m.epochs);
    s.get("iterations", m.iterations);
    s.get("alpha_freeze_epochs", m.alpha_freeze_epochs);
    s.get("seed", m.seed);
    s.finish();
    m.validate();
  });
  f.parse("train", [&](const json& v) {
    Fields t(v, "train");
    t.get("epochs", c.train.epochs);
    t.get("batch_size", c.train.batch_size);
    t.get("lr", c.train.lr);
    t.get("weight_decay", c.train.weight_decay);
    t.get("optimizer", c.train.optimizer);
    t.finish();
    c.train.validate();
  });
  f.get("eval_batch", c.eval_batch);
  f.get("random", c.random);
  f.parse("seeds", [&](const json& v) {
    c.seeds = v.get<std::vector<std::uint64_t>>();
    if (c.seeds.empty()) throw ConfigError("must list at least one seed");
  });
  f.finish();
  if (c.channels == 0) throw ConfigError("channels: must be positive");
  if (c.partial_channels == 0) throw ConfigError("partial_channels: must be positive");
  if (!(c.width > 0)) throw ConfigError("width: must be positive");
  if (c.eval_batch < 2) throw ConfigError("eval_batch: must be at least 2");
  if (c.theta < 0 || c.theta > 1) throw ConfigError("theta: must lie in [0, 1]");
  if (c.lambda < 0 || c.lambda > 1) throw ConfigError("lambda: must lie in [0, 1]");
  return c;
}

json RunConfig::to_json() const {
  return {{"seed", seed},
          {"data", data.generic_string()},
          {"output", output.generic_string()},
          {"genotype", genotype.generic_string()},
          {"checkpoint", checkpoint.generic_string()},
          {"input", to_string(input)},
          {"split", to_string(split)},
          {"held_out", held_out},
          {"group_by", to_string(group_by)},
          {"variant", to_string(variant)},
          {"theta", theta},
          {"lambda", lambda},
          {"width", width},
          {"space", space},
          {"scheme", to_string(scheme)},
          {"channels", channels},
          {"partial_channels", partial_channels},
          {"edge_normalization", edge_normalization},
          {"search", search.to_json()},
          {"train", train.to_json()},
          {"eval_batch", eval_batch},
          {"random", random},
          {"seeds", seeds}};
}

void RunConfig::validate_for(const std::string& command) const {
  auto need = [](const fs::path& p, const std::string& field) {
    if (p.empty()) throw ConfigError(field + ": required");
    if (!fs::exists(p)) throw ConfigError(field + ": " + p.string() + " does not exist");
  };
  if (command != "gen") need(data, "data");
  if (command == "retrain" || command == "compare") need(genotype, "genotype");
  if (command == "eval") need(checkpoint, "checkpoint");
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

JsonlLog::JsonlLog(const fs::path& path) : os_(path, std::ios::app) {
  if (!os_) throw IoError("cannot open log " + path.string());
}

void JsonlLog::operator()(const json& record) {
  os_ << record.dump() << "\n";
  os_.flush();
}

Workspace Workspace::open(const RunConfig& cfg) {
  Workspace ws;
  ws.data = load_dataset(cfg.data);
  ws.split = cdnas::split(ws.data, cfg.split, cfg.held_out, Rng(cfg.seed).substream("data").seed());
  if (ws.split.train.empty() || ws.split.test.empty()) throw ConfigError("split: train or test part is empty");
  return ws;
}

namespace {

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

TrainLogger logger_for(const fs::path& out, const std::string& file, std::shared_ptr<JsonlLog>& keep) {
  if (out.empty()) return {};
  keep = std::make_shared<JsonlLog>(out / file);
  return [keep](const json& r) { (*keep)(r); };
}

CdnConfig cdn_config(const RunConfig& cfg, std::size_t resolution) {
  CdnConfig c;
  c.variant = cfg.variant;
  c.theta = cfg.theta;
  c.lambda = cfg.lambda;
  c.input_size = resolution;
  c.width = cfg.width;
  c.validate();
  return c;
}

NetworkOptions retrain_options(const RunConfig& cfg, std::size_t resolution) {
  NetworkOptions o;
  o.channels = 2 * cfg.channels;
  o.input_size = resolution;
  return o;
}

template <typename Net>
RunReport fit_and_score(Net& net, HeadKind head, std::size_t side, const RunConfig& cfg, const Workspace& ws,
                        std::uint64_t seed, const fs::path& out) {
  const auto train = build_samples<float>(ws.data, ws.split.train, cfg.input, head, side);
  const auto test = build_samples<float>(ws.data, ws.split.test, cfg.input, head, side);
  std::shared_ptr<JsonlLog> keep;
  RunReport r;
  r.losses = train_network<float>(net, head, train, cfg.train, Rng(seed).substream("sampling"),
                                  logger_for(out, "train_log.jsonl", keep));
  r.metrics = evaluate_network<float>(net, head, train, test, cfg.eval_batch);
  return r;
}

}  // namespace

void write_report(const fs::path& dir, const std::string& command, const RunConfig& cfg, const RunReport& r) {
  ensure_dir(dir);
  json j = {{"command", command}, {"config", cfg.to_json()}, {"metrics", r.metrics.to_json()},
            {"losses", r.losses}};
  std::ofstream js(dir / "report.json");
  js << j.dump(2) << "\n";
  std::ofstream csv(dir / "report.csv");
  csv << MetricReport::csv_header() << "\n" << r.metrics.csv_row() << "\n";
  if (!js || !csv) throw IoError("cannot write report into " + dir.string());
}

RunReport train_cdn(const RunConfig& cfg, const Workspace& ws, std::uint64_t seed, const fs::path& out) {
  ensure_dir(out);
  const auto cc = cdn_config(cfg, ws.data.spec.resolution);
  Rng init = Rng(seed).substream("init");
  auto net = build_cdn<float>(cc, init);
  auto r = fit_and_score(*net, HeadKind::depth, cc.output_size(), cfg, ws, seed, out);
  if (!out.empty()) {
    save_checkpoint<float>(out / "checkpoint.cdnc", *net, {{"kind", "cdn"}, {"cdn", cc.to_json()}});
    write_report(out, "train", cfg, r);
  }
  return r;
}

Genotype search_genotype(const RunConfig& cfg, const Workspace& ws, const fs::path& out) {
  ensure_dir(out);
  const auto space = SearchSpace::from_id(cfg.space);
  NetworkOptions no;
  no.channels = cfg.channels;
  no.input_size = ws.data.spec.resolution;
  SupernetOptions so;
  so.partial_channels = cfg.partial_channels;
  so.edge_normalization = cfg.edge_normalization;
  Rng init = Rng(cfg.seed).substream("init");
  Supernet<float> net(space, no, so, init);
  const auto data = build_samples<float>(ws.data, ws.split.train, cfg.input, space.head, head_size(space, no),
                                         cfg.group_by);
  MetaConfig mc = cfg.search;
  mc.seed = Rng(cfg.seed).substream("sampling").seed();
  std::shared_ptr<JsonlLog> keep;
  auto g = run_search<float>(cfg.scheme, net, data, mc, logger_for(out, "search_log.jsonl", keep));
  if (!out.empty()) save_genotype(out / "genotype.json", g);
  return g;
}

RunReport retrain_genotype(const RunConfig& cfg, const Workspace& ws, const Genotype& g, std::uint64_t seed,
                           const fs::path& out) {
  ensure_dir(out);
  const auto space = SearchSpace::from_id(g.space);
  g.validate(space);
  const auto no = retrain_options(cfg, ws.data.spec.resolution);
  Rng init = Rng(seed).substream("init");
  auto net = materialize<float>(g, no, init);
  auto r = fit_and_score(*net, space.head, head_size(space, no), cfg, ws, seed, out);
  if (!out.empty()) {
    save_checkpoint<float>(out / "checkpoint.cdnc", *net,
                           {{"kind", "genotype"}, {"genotype", g.to_json()}, {"network", no.to_json()}});
    write_report(out, "retrain", cfg, r);
  }
  return r;
}

RunReport evaluate_checkpoint(const RunConfig& cfg, const Workspace& ws, const fs::path& checkpoint) {
  const json meta = read_checkpoint_config(checkpoint);
  const std::string kind = meta.value("kind", "");
  Rng init(0);
  std::unique_ptr<Layer<float>> net;
  HeadKind head = HeadKind::depth;
  std::size_t side = 0;
  if (kind == "cdn") {
    const auto cc = CdnConfig::from_json(meta.at("cdn"));
    if (cc.input_size != ws.data.spec.resolution) throw ConfigError("checkpoint: input size does not match the data");
    side = cc.output_size();
    net = build_cdn<float>(cc, init);
  } else if (kind == "genotype") {
    const auto g = Genotype::from_json(meta.at("genotype"));
    const auto no = NetworkOptions::from_json(meta.at("network"));
    if (no.input_size != ws.data.spec.resolution) throw ConfigError("checkpoint: input size does not match the data");
    const auto space = SearchSpace::from_id(g.space);
    head = space.head;
    side = head_size(space, no);
    net = materialize<float>(g, no, init);
  } else {
    throw ConfigError("checkpoint: unknown network kind '" + kind + "'");
  }
  load_checkpoint<float>(checkpoint, *net);
  const auto dev = build_samples<float>(ws.data, ws.split.train, cfg.input, head, side);
  const auto test = build_samples<float>(ws.data, ws.split.test, cfg.input, head, side);
  RunReport r;
  r.metrics = evaluate_network<float>(*net, head, dev, test, cfg.eval_batch);
  return r;
}

json CompareResult::to_json() const {
  return {{"acer_search", acer_search}, {"acer_random", acer_random}, {"ri", ri}, {"runs", runs}};
}

std::vector<Genotype> sample_genotypes(const SearchSpace& space, std::size_t n, std::uint64_t seed) {
  std::vector<Genotype> out;
  Rng base = Rng(seed).substream("sampling").substream("random-genotypes");
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = base.substream(i);
    out.push_back(random_sample(space, r));
  }
  return out;
}

CompareResult compare_genotypes(const RunConfig& cfg, const Workspace& ws, const Genotype& searched,
                                const std::vector<Genotype>& randoms, const fs::path& out) {
  if (randoms.empty()) throw ConfigError("random: at least one random genotype is needed");
  if (cfg.seeds.empty()) throw ConfigError("seeds: must list at least one seed");
  ensure_dir(out);
  CompareResult res;
  std::ofstream csv;
  if (!out.empty()) {
    csv.open(out / "compare.csv");
    csv << "role,index,seed," << MetricReport::csv_header() << "\n";
  }
  auto run = [&](const std::string& role, std::size_t i, const Genotype& g, std::uint64_t seed) {
    const auto r = retrain_genotype(cfg, ws, g, seed, {});
    res.runs.push_back({{"role", role}, {"index", i}, {"seed", seed}, {"genotype", g.to_json()},
                        {"metrics", r.metrics.to_json()}});
    if (csv.is_open()) csv << role << "," << i << "," << seed << "," << r.metrics.csv_row() << "\n";
    return r.metrics.rates.acer;
  };
  double s = 0, q = 0;
  for (std::size_t k = 0; k < cfg.seeds.size(); ++k) s += run("searched", 0, searched, cfg.seeds[k]);
  for (std::size_t i = 0; i < randoms.size(); ++i) q += run("random", i, randoms[i], cfg.seeds[i % cfg.seeds.size()]);
  res.acer_search = s / double(cfg.seeds.size());
  res.acer_random = q / double(randoms.size());
  res.ri = relative_improvement(res.acer_search, res.acer_random);
  if (!out.empty()) {
    std::ofstream js(out / "compare.json");
    js << res.to_json().dump(2) << "\n";
  }
  return res;
}

}  // namespace cdnas
