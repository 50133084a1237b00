#include "cdnas/meta_nas.hpp"

#include <algorithm>
#include <numeric>

namespace cdnas {

std::string to_string(SearchScheme s) {
  switch (s) {
    case SearchScheme::nas: return "nas";
    case SearchScheme::dt_nas: return "dt-nas";
    case SearchScheme::dt_meta: return "dt-meta";
  }
  return "?";
}

SearchScheme parse_search_scheme(const std::string& s) {
  if (s == "nas") return SearchScheme::nas;
  if (s == "dt-nas" || s == "dt_nas") return SearchScheme::dt_nas;
  if (s == "dt-meta" || s == "dt_meta" || s == "dt-meta-nas") return SearchScheme::dt_meta;
  throw ConfigError("unknown search scheme '" + s + "' (nas|dt-nas|dt-meta)");
}

void MetaConfig::validate() const {
  if (gamma1 < 0 || outer_lr < 0 || gamma2 < 0) throw ConfigError("learning rates must be >= 0");
  if (weight_decay < 0 || arch_weight_decay < 0) throw ConfigError("weight decay must be >= 0");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (inner_steps == 0) throw ConfigError("inner steps must be positive");
  for (const auto* k : {&weight_optimizer, &arch_optimizer})
    if (*k != "sgd" && *k != "adam") throw ConfigError("optimizer must be sgd or adam, got '" + *k + "'");
}

nlohmann::ordered_json MetaConfig::to_json() const {
  return {{"gamma1", gamma1},
          {"outer_lr", outer_lr},
          {"gamma2", gamma2},
          {"weight_decay", weight_decay},
          {"arch_weight_decay", arch_weight_decay},
          {"weight_optimizer", weight_optimizer},
          {"arch_optimizer", arch_optimizer},
          {"arch_grad", to_string(mode)},
          {"inner_steps", inner_steps},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"iterations", iterations},
          {"alpha_freeze_epochs", alpha_freeze_epochs},
          {"seed", seed}};
}

MetaConfig MetaConfig::from_json(const nlohmann::ordered_json& j) {
  MetaConfig c;
  c.gamma1 = j.value("gamma1", c.gamma1);
  c.outer_lr = j.value("outer_lr", c.outer_lr);
  c.gamma2 = j.value("gamma2", c.gamma2);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.arch_weight_decay = j.value("arch_weight_decay", c.arch_weight_decay);
  c.weight_optimizer = j.value("weight_optimizer", c.weight_optimizer);
  c.arch_optimizer = j.value("arch_optimizer", c.arch_optimizer);
  c.mode = parse_arch_grad_mode(j.value("arch_grad", to_string(c.mode)));
  c.inner_steps = j.value("inner_steps", c.inner_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.iterations = j.value("iterations", c.iterations);
  c.alpha_freeze_epochs = j.value("alpha_freeze_epochs", c.alpha_freeze_epochs);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

EpochSampler::EpochSampler(std::vector<std::size_t> pool, Rng rng) : pool_(std::move(pool)), rng_(rng) {
  if (pool_.empty()) throw ConfigError("cannot sample from an empty set");
  std::shuffle(pool_.begin(), pool_.end(), rng_.engine());
}

std::vector<std::size_t> EpochSampler::next(std::size_t n) {
  n = std::min(n, pool_.size());
  std::vector<std::size_t> out;
  out.reserve(n);
  while (out.size() < n) {
    if (pos_ == pool_.size()) {
      std::shuffle(pool_.begin(), pool_.end(), rng_.engine());
      pos_ = 0;
    }
    out.push_back(pool_[pos_++]);
  }
  return out;
}

QueryRotation::QueryRotation(int groups, Rng rng) : rng_(rng) {
  if (groups < 2) throw ConfigError("domain-aware schemes need at least two domains or types");
  order_.resize(std::size_t(groups));
  std::iota(order_.begin(), order_.end(), 0);
  pos_ = order_.size();
}

int QueryRotation::next() {
  if (pos_ == order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng_.engine());
    pos_ = 0;
  }
  return order_[pos_++];
}

std::size_t iterations_per_epoch(const MetaConfig& cfg, SearchScheme scheme, std::size_t samples,
                                 int groups) {
  if (cfg.iterations > 0) return cfg.iterations;
  if (scheme == SearchScheme::nas) return std::max<std::size_t>(1, (samples / 2 + cfg.batch_size - 1) / cfg.batch_size);
  const auto g = std::size_t(std::max(groups, 1));
  const auto support_per_iter = cfg.batch_size * (g - 1);
  const auto passes = std::max<std::size_t>(1, (samples + support_per_iter - 1) / std::max<std::size_t>(1, support_per_iter));
  return (passes + g - 1) / g * g;
}

nlohmann::ordered_json beta_summary(const SearchSpace& space,
                                    const std::vector<std::vector<std::vector<double>>>& betas) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& cell : betas) {
    auto edges = nlohmann::ordered_json::array();
    for (std::size_t e = 0; e < cell.size(); ++e) {
      const auto best = std::size_t(std::max_element(cell[e].begin(), cell[e].end()) - cell[e].begin());
      edges.push_back({{"to", space.edges[e].to},
                       {"from", space.edges[e].from},
                       {"op", space.ops[best]},
                       {"beta", cell[e][best]}});
    }
    out.push_back(edges);
  }
  return out;
}

namespace {

template <typename T>
struct Driver {
  Supernet<T>& net;
  const SampleSet<T>& data;
  const MetaConfig& cfg;
  const SearchLogger& log;
  SearchScheme scheme;
  Rng root;
  std::unique_ptr<Optimizer<T>> weight_opt, arch_opt;

  Driver(Supernet<T>& n, const SampleSet<T>& d, const MetaConfig& c, const SearchLogger& l, SearchScheme s)
      : net(n), data(d), cfg(c), log(l), scheme(s), root(c.seed) {
    cfg.validate();
    if (data.size() < 2) throw ConfigError("search needs at least two samples");
    const double wlr = scheme == SearchScheme::dt_meta ? cfg.outer_lr : cfg.gamma1;
    weight_opt = make_optimizer<T>(cfg.weight_optimizer, wlr, cfg.weight_decay);
    arch_opt = make_optimizer<T>(cfg.arch_optimizer, cfg.gamma2, cfg.arch_weight_decay);
  }

  void record(std::size_t epoch, std::size_t iter, int query_group, const StepLosses& l, bool frozen) {
    if (!log) return;
    nlohmann::ordered_json j{{"scheme", to_string(scheme)}, {"epoch", epoch}, {"iter", iter}};
    if (query_group >= 0) j["query_group"] = query_group;
    j["support_loss"] = l.support;
    j["query_loss"] = l.query;
    j["alpha_frozen"] = frozen;
    log(j);
  }

  void epoch_end(std::size_t epoch) {
    if (!log) return;
    log({{"scheme", to_string(scheme)},
         {"epoch_end", epoch},
         {"genotype", net.discretize().to_json()},
         {"betas", beta_summary(net.space(), net.betas())}});
  }

  Genotype finish() {
    Genotype g = net.discretize();
    g.seed = cfg.seed;
    g.epochs = cfg.epochs;
    return g;
  }

  Genotype run_split() {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng split = root.substream("split");
    std::shuffle(idx.begin(), idx.end(), split.engine());
    const auto half = idx.size() / 2;
    EpochSampler support({idx.begin(), idx.begin() + long(half)}, root.substream("support"));
    EpochSampler query({idx.begin() + long(half), idx.end()}, root.substream("query"));
    const auto iters = iterations_per_epoch(cfg, scheme, data.size(), 1);
    std::size_t it = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      const bool frozen = epoch < cfg.alpha_freeze_epochs;
      for (std::size_t k = 0; k < iters; ++k, ++it) {
        const auto s = make_batch(data, support.next(cfg.batch_size));
        const auto q = make_batch(data, query.next(cfg.batch_size));
        auto l = bilevel_step<T>(net, {s}, q, *weight_opt, *arch_opt, cfg.gamma1, cfg.mode, !frozen);
        record(epoch, it, -1, l, frozen);
      }
      epoch_end(epoch);
    }
    return finish();
  }

  Genotype run_groups() {
    const int n = data.group_count();
    if (n < 2) throw ConfigError("domain-aware schemes need at least two domains or types");
    std::vector<EpochSampler> samplers;
    for (int g = 0; g < n; ++g) {
      auto members = data.group_indices(g);
      if (members.empty()) throw ConfigError("group " + std::to_string(g) + " has no samples");
      samplers.emplace_back(std::move(members), root.substream("group").substream(std::uint64_t(g)));
    }
    QueryRotation rotation(n, root.substream("rotation"));
    const auto iters = iterations_per_epoch(cfg, scheme, data.size(), n);
    std::size_t it = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      const bool frozen = epoch < cfg.alpha_freeze_epochs;
      for (std::size_t k = 0; k < iters; ++k, ++it) {
        const int q = rotation.next();
        std::vector<Batch<T>> support;
        for (int g = 0; g < n; ++g)
          if (g != q) support.push_back(make_batch(data, samplers[std::size_t(g)].next(cfg.batch_size)));
        const auto query = make_batch(data, samplers[std::size_t(q)].next(cfg.batch_size));
        StepLosses l;
        if (scheme == SearchScheme::dt_meta) {
          l = meta_step<T>(net, support, query, *weight_opt, *arch_opt, cfg.gamma1, cfg.inner_steps, !frozen);
        } else {
          l = bilevel_step<T>(net, support, query, *weight_opt, *arch_opt, cfg.gamma1, cfg.mode, !frozen);
        }
        record(epoch, it, q, l, frozen);
      }
      epoch_end(epoch);
    }
    return finish();
  }
};

}  // namespace

template <typename T>
Genotype nas_search(Supernet<T>& net, const SampleSet<T>& data, const MetaConfig& cfg, const SearchLogger& log) {
  return Driver<T>(net, data, cfg, log, SearchScheme::nas).run_split();
}

template <typename T>
Genotype dt_nas_search(Supernet<T>& net, const SampleSet<T>& data, const MetaConfig& cfg, const SearchLogger& log) {
  return Driver<T>(net, data, cfg, log, SearchScheme::dt_nas).run_groups();
}

template <typename T>
Genotype dt_meta_nas_search(Supernet<T>& net, const SampleSet<T>& data, const MetaConfig& cfg,
                            const SearchLogger& log) {
  return Driver<T>(net, data, cfg, log, SearchScheme::dt_meta).run_groups();
}

template <typename T>
Genotype run_search(SearchScheme scheme, Supernet<T>& net, const SampleSet<T>& data, const MetaConfig& cfg,
                    const SearchLogger& log) {
  switch (scheme) {
    case SearchScheme::nas: return nas_search(net, data, cfg, log);
    case SearchScheme::dt_nas: return dt_nas_search(net, data, cfg, log);
    case SearchScheme::dt_meta: return dt_meta_nas_search(net, data, cfg, log);
  }
  throw ConfigError("unknown scheme");
}

#define CDNAS_INSTANTIATE_META(T)                                                                           \
  template Genotype nas_search(Supernet<T>&, const SampleSet<T>&, const MetaConfig&, const SearchLogger&);    \
  template Genotype dt_nas_search(Supernet<T>&, const SampleSet<T>&, const MetaConfig&, const SearchLogger&); \
  template Genotype dt_meta_nas_search(Supernet<T>&, const SampleSet<T>&, const MetaConfig&,                  \
                                       const SearchLogger&);                                                  \
  template Genotype run_search(SearchScheme, Supernet<T>&, const SampleSet<T>&, const MetaConfig&,            \
                               const SearchLogger&);

CDNAS_INSTANTIATE_META(float)
CDNAS_INSTANTIATE_META(double)

}  // namespace cdnas
