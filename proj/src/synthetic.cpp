#include "cdnas/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "cdnas/errors.hpp"
#include "cdnas/image_io.hpp"
#include "cdnas/rng.hpp"
#include "cdnas/snapshot.hpp"

namespace cdnas {

using json = nlohmann::ordered_json;

std::string to_string(AttackType a) {
  switch (a) {
    case AttackType::lattice: return "lattice";
    case AttackType::noise: return "noise";
    case AttackType::blur_flat: return "blur-flat";
  }
  return "?";
}

AttackType parse_attack_type(const std::string& s) {
  if (s == "lattice") return AttackType::lattice;
  if (s == "noise") return AttackType::noise;
  if (s == "blur-flat" || s == "blur_flat") return AttackType::blur_flat;
  throw ConfigError("unknown attack type '" + s + "'");
}

json DomainTransform::to_json() const {
  return {{"name", name}, {"gamma", gamma}, {"brightness", brightness}, {"tint", tint}, {"noise", noise}, {"spoof_tint", spoof_tint}, {"spoof_relief", spoof_relief},
          {"ramp", ramp}, {"spot", spot}};
}

DomainTransform DomainTransform::from_json(const json& j) {
  DomainTransform d;
  d.name = j.value("name", "");
  d.gamma = j.value("gamma", 1.0);
  d.brightness = j.value("brightness", 0.0);
  if (j.contains("tint")) d.tint = j.at("tint").get<std::array<double, 3>>();
  d.noise = j.value("noise", 0.0);
  d.spoof_relief = j.value("spoof_relief", 0.5);
  d.ramp = j.value("ramp", 0.0);
  d.spot = j.value("spot", 0.0);
  if (j.contains("spoof_tint")) d.spoof_tint = j.at("spoof_tint").get<std::array<double, 3>>();
  return d;
}

std::vector<DomainTransform> default_domains(std::size_t n) {
  static const DomainTransform presets[4] = {
      {"neutral", 1.0, 0.0, {1.0, 1.0, 1.0}, 0.01, {1.12, 0.95, 0.88}, 0.5, 0.0, 0.0},
      {"warm-ramp", 0.75, 0.05, {1.10, 1.0, 0.85}, 0.01, {0.88, 0.97, 1.15}, 0.85, 0.3, 0.0},
      {"cool-spot", 1.30, -0.05, {0.85, 1.0, 1.15}, 0.01, {0.95, 1.12, 0.93}, 0.25, 0.0, 0.3},
      {"green-mixed", 1.10, 0.0, {0.95, 1.10, 0.95}, 0.02, {1.08, 0.90, 1.08}, 0.7, 0.15, 0.15},
  };
  std::vector<DomainTransform> out;
  for (std::size_t k = 0; k < n; ++k) {
    DomainTransform d = presets[k % 4];
    if (k >= 4) {
      const double r = double(k / 4);
      d.name += "-" + std::to_string(k / 4);
      d.gamma *= 1.0 + 0.05 * r;
      d.brightness += (k % 2 ? -0.03 : 0.03) * r;
    }
    out.push_back(d);
  }
  return out;
}

void TaskSpec::validate() const {
  if (resolution == 0 || resolution % 8 != 0) throw ConfigError("task.resolution must be a positive multiple of 8");
  if (frames < kDynamicWindow) throw ConfigError("task.frames must be at least " + std::to_string(kDynamicWindow));
  if (per_class == 0) throw ConfigError("task.per_class must be positive");
  if (!(artifact_scale > 0)) throw ConfigError("task.artifact_scale must be positive");
  if (domains.empty()) throw ConfigError("task.domains must not be empty");
  if (attacks.empty()) throw ConfigError("task.attacks must not be empty");
  for (std::size_t i = 0; i < domains.size(); ++i) {
    const auto& d = domains[i];
    const std::string at = "task.domains[" + std::to_string(i) + "]";
    if (!(d.gamma > 0)) throw ConfigError(at + ".gamma must be positive");
    if (!(d.spoof_relief >= 0 && d.spoof_relief <= 1)) throw ConfigError(at + ".spoof_relief must lie in [0, 1]");
    if (!(d.noise >= 0)) throw ConfigError(at + ".noise must be non-negative");
    if (!(d.ramp >= 0 && d.spot >= 0)) throw ConfigError(at + ".ramp and .spot must be non-negative");
    for (double t : d.tint)
      if (!(t > 0)) throw ConfigError(at + ".tint entries must be positive");
    for (double t : d.spoof_tint)
      if (!(t > 0)) throw ConfigError(at + ".spoof_tint entries must be positive");
  }
  for (std::size_t i = 0; i < attacks.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (attacks[i] == attacks[j]) throw ConfigError("task.attacks lists " + to_string(attacks[i]) + " twice");
}

json TaskSpec::to_json() const {
  json d = json::array(), a = json::array();
  for (const auto& x : domains) d.push_back(x.to_json());
  for (auto x : attacks) a.push_back(to_string(x));
  return {{"resolution", resolution}, {"frames", frames}, {"per_class", per_class},
          {"domains", d}, {"attacks", a}, {"artifact_scale", artifact_scale}, {"seed", seed}};
}

TaskSpec TaskSpec::from_json(const json& j) {
  TaskSpec s;
  s.resolution = j.value("resolution", s.resolution);
  s.frames = j.value("frames", s.frames);
  s.per_class = j.value("per_class", s.per_class);
  s.seed = j.value("seed", s.seed);
  s.artifact_scale = j.value("artifact_scale", s.artifact_scale);
  if (j.contains("domains")) {
    const auto& d = j.at("domains");
    if (d.is_number_unsigned()) {
      s.domains = default_domains(d.get<std::size_t>());
    } else {
      s.domains.clear();
      for (const auto& x : d) s.domains.push_back(DomainTransform::from_json(x));
    }
  }
  if (j.contains("attacks")) {
    s.attacks.clear();
    for (const auto& x : j.at("attacks")) s.attacks.push_back(parse_attack_type(x.get<std::string>()));
  }
  return s;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Wave {
  double kx, ky, phase;
  std::array<double, 3> amp;
};

// Smooth color field: base color plus a few low- and mid-frequency sinusoids.
struct Texture {
  std::array<double, 3> base;
  std::vector<Wave> waves;
  double size;

  // blur: Gaussian low-pass sigma in pixels, applied analytically per wave.
  double eval(std::size_t c, double x, double y, double blur = 0.0) const {
    double v = base[c];
    for (const auto& w : waves) {
      double a = w.amp[c];
      if (blur > 0) a *= std::exp(-0.5 * kTwoPi * kTwoPi * blur * blur * (w.kx * w.kx + w.ky * w.ky) / (size * size));
      v += a * std::sin(kTwoPi * (w.kx * x + w.ky * y) / size + w.phase);
    }
    return v;
  }
};

Texture make_texture(Rng& rng, double size) {
  Texture t;
  t.size = size;
  const double r = rng.uniform(0.6, 0.7);
  t.base = {r, r * rng.uniform(0.75, 0.85), r * rng.uniform(0.6, 0.75)};
  auto add = [&](double kmin, double kmax, double amin, double amax) {
    const double k = rng.uniform(kmin, kmax), ang = rng.uniform(0, kTwoPi);
    const double a = rng.uniform(amin, amax);
    Wave w{k * std::cos(ang), k * std::sin(ang), rng.uniform(0, kTwoPi), {}};
    for (auto& x : w.amp) x = a * rng.uniform(0.8, 1.2);
    t.waves.push_back(w);
  };
  for (int i = 0; i < 4; ++i) add(1.0, 3.0, 0.05, 0.09);
  for (int i = 0; i < 3; ++i) add(6.0, 10.0, 0.03, 0.05);
  return t;
}

struct Bump {
  double cx, cy, sigma;
  double operator()(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    return std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
  }
};

// Shading of the relief: brighter on the bump, lit from one side.
double shade(const Bump& b, double lx, double ly, double x, double y, double relief) {
  const double v = b(x, y);
  const double side = ((x - b.cx) * lx + (y - b.cy) * ly) / b.sigma;
  return 0.55 + relief * (0.5 * v - 0.2 * v * side);
}

double photometric(const DomainTransform& d, std::size_t c, double x) {
  return d.tint[c] * std::pow(std::clamp(x, 0.0, 1.0), d.gamma) + d.brightness;
}

}  // namespace

SyntheticSample gen_sample(const TaskSpec& spec, int domain, int live, std::size_t index) {
  const std::size_t S = spec.resolution, F = spec.frames;
  const double size = double(S);
  Rng rng = Rng(spec.seed).substream("sample").substream(std::uint64_t(domain) * 2 + std::uint64_t(live)).substream(index);
  const auto& dom = spec.domains.at(std::size_t(domain));

  SyntheticSample s;
  s.live = live;
  s.domain = domain;
  s.type = live ? kLiveType : int(spec.attacks[index % spec.attacks.size()]);
  char id[64];
  std::snprintf(id, sizeof id, "d%d_%s_%03zu", domain, live ? "live" : "spoof", index);
  s.id = id;

  const Texture tex = make_texture(rng, size);
  const Bump bump{size / 2 + rng.uniform(-size / 16, size / 16), size / 2 + rng.uniform(-size / 16, size / 16),
                  size * rng.uniform(0.22, 0.30)};
  const double light = rng.uniform(0, kTwoPi);
  const double lx = std::cos(light), ly = std::sin(light);
  const double speed = rng.uniform(0.3, 0.8), dir = rng.uniform(0, kTwoPi);
  const double vx = speed * std::cos(dir), vy = speed * std::sin(dir);

  // Attack parameters.
  const AttackType attack = live ? AttackType::lattice : AttackType(s.type);
  const double lat_amp = spec.artifact_scale * rng.uniform(0.07, 0.10), lat_period = 3.0 + double(rng.index(2));
  const double lat_px = rng.uniform(0, kTwoPi), lat_py = rng.uniform(0, kTwoPi);
  const std::size_t margin = std::size_t(std::ceil(speed * double(F))) + 2;
  const std::size_t field = S + 2 * margin;
  std::vector<double> grain;
  if (!live && attack == AttackType::noise) {
    grain.resize(field * field);
    for (auto& g : grain) g = rng.normal(0.0, 0.07 * spec.artifact_scale);
  }
  Rng sensor = rng.substream("sensor");
  Rng light_rng = rng.substream("glare");
  const double ramp_dir = light_rng.uniform(0, kTwoPi);
  const double spot_x = light_rng.uniform(0, size), spot_y = light_rng.uniform(0, size);
  auto glare = [&](double x, double y) {
    const double r = ((x - size / 2) * std::cos(ramp_dir) + (y - size / 2) * std::sin(ramp_dir)) / size + 0.5;
    const double dx = x - spot_x, dy = y - spot_y, w = 0.25 * size;
    return dom.ramp * r + dom.spot * std::exp(-(dx * dx + dy * dy) / (2 * w * w));
  };

  s.clip.frames.reserve(F);
  for (std::size_t t = 0; t < F; ++t) {
    const double tau = double(t) - double(F - 1) / 2.0;
    Tensor<float> img({3, S, S});
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        const double px = double(x) + 0.5, py = double(y) + 0.5;
        double rgb[3];
        if (live) {
          // The relief moves more than the background.
          const double fx = tau * vx, fy = tau * vy;
          const double k = 0.3 + 0.7 * bump(px - fx, py - fy);
          const double qx = px - k * fx, qy = py - k * fy;
          const double sh = shade(bump, lx, ly, px - fx, py - fy, 1.0);
          for (std::size_t c = 0; c < 3; ++c) rgb[c] = tex.eval(c, qx, qy) * sh;
        } else {
          // A flat medium: everything shifts together and some of the relief is lost.
          const double qx = px - tau * vx, qy = py - tau * vy;
          const double sh = shade(bump, lx, ly, qx, qy, dom.spoof_relief);
          const double blur = attack == AttackType::blur_flat ? 1.5 * spec.artifact_scale : 0.0;
          for (std::size_t c = 0; c < 3; ++c) rgb[c] = tex.eval(c, qx, qy, blur) * sh;
          if (attack == AttackType::lattice) {
            const double g = lat_amp * std::sin(kTwoPi * qx / lat_period + lat_px) *
                             std::sin(kTwoPi * qy / lat_period + lat_py);
            for (double& v : rgb) v += g;
          } else if (attack == AttackType::noise) {
            const long gx = std::lround(qx - 0.5) + long(margin), gy = std::lround(qy - 0.5) + long(margin);
            const double g = grain[std::size_t(std::clamp(gy, 0L, long(field) - 1)) * field +
                                   std::size_t(std::clamp(gx, 0L, long(field) - 1))];
            for (double& v : rgb) v += g;
          } else {
            for (std::size_t c = 0; c < 3; ++c) rgb[c] = 0.4 * tex.base[c] * 0.8 + 0.6 * rgb[c];
          }
          for (std::size_t c = 0; c < 3; ++c) rgb[c] *= dom.spoof_tint[c];
        }
        for (std::size_t c = 0; c < 3; ++c) {
          double v = photometric(dom, c, rgb[c]) + glare(px, py);
          if (dom.noise > 0) v += sensor.normal(0.0, dom.noise);
          img.data()[(c * S + y) * S + x] = quantize8(float(v));
        }
      }
    s.clip.frames.push_back(std::move(img));
  }

  const std::size_t D = spec.depth_size();
  s.depth = Tensor<float>({D, D});
  if (live) {
    std::vector<double> m(D * D);
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j) m[i * D + j] = bump(8.0 * double(j) + 4.0, 8.0 * double(i) + 4.0);
    const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
    const double a = *lo, span = *hi - *lo;
    for (std::size_t k = 0; k < m.size(); ++k) s.depth.data()[k] = span > 0 ? float((m[k] - a) / span) : 1.0f;
  }
  return s;
}

DomainDataset gen_dataset(const TaskSpec& spec) {
  spec.validate();
  DomainDataset data;
  data.spec = spec;
  const std::size_t per_domain = 2 * spec.per_class;
  data.samples.resize(spec.domains.size() * per_domain);
  for (long k = 0; k < long(data.samples.size()); ++k) {
    const std::size_t d = std::size_t(k) / per_domain, r = std::size_t(k) % per_domain;
    const int live = r < spec.per_class ? 1 : 0;
    data.samples[std::size_t(k)] = gen_sample(spec, int(d), live, live ? r : r - spec.per_class);
  }
  return data;
}

void save_dataset(const std::filesystem::path& dir, const DomainDataset& data) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "clips", ec);
  if (ec) throw IoError("cannot create " + (dir / "clips").string() + ": " + ec.message());
  json samples = json::array();
  for (const auto& s : data.samples) {
    const fs::path rel = fs::path("clips") / s.id;
    fs::create_directories(dir / rel, ec);
    if (ec) throw IoError("cannot create " + (dir / rel).string());
    for (std::size_t t = 0; t < s.clip.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "f%02zu.ppm", t);
      write_ppm(dir / rel / name, s.clip.frames[t]);
    }
    save_snapshot(dir / rel / "depth.cdnt", s.depth);
    samples.push_back({{"id", s.id},
                       {"dir", rel.generic_string()},
                       {"live", s.live},
                       {"domain", s.domain},
                       {"type", s.type == kLiveType ? std::string("live") : to_string(AttackType(s.type))},
                       {"frames", s.clip.size()}});
  }
  json index = {{"format", "cdnas-synthetic"}, {"version", 1}, {"spec", data.spec.to_json()}, {"samples", samples}};
  std::ofstream os(dir / "index.json");
  if (!os) throw IoError("cannot write " + (dir / "index.json").string());
  os << index.dump(2) << "\n";
}

DomainDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "index.json");
  if (!is) throw IoError("no dataset index at " + (dir / "index.json").string());
  json index;
  try {
    index = json::parse(is);
  } catch (const json::exception& e) {
    throw IoError((dir / "index.json").string() + ": " + e.what());
  }
  if (index.value("format", "") != "cdnas-synthetic") throw IoError((dir / "index.json").string() + ": not a dataset index");
  DomainDataset data;
  data.spec = TaskSpec::from_json(index.at("spec"));
  for (const auto& e : index.at("samples")) {
    SyntheticSample s;
    s.id = e.at("id").get<std::string>();
    s.live = e.at("live").get<int>();
    s.domain = e.at("domain").get<int>();
    const auto type = e.at("type").get<std::string>();
    s.type = type == "live" ? kLiveType : int(parse_attack_type(type));
    const auto rel = dir / e.at("dir").get<std::string>();
    const auto n = e.at("frames").get<std::size_t>();
    for (std::size_t t = 0; t < n; ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "f%02zu.ppm", t);
      s.clip.frames.push_back(read_ppm(rel / name));
    }
    s.depth = load_snapshot(rel / "depth.cdnt");
    data.samples.push_back(std::move(s));
  }
  return data;
}

std::string to_string(SplitMode m) {
  switch (m) {
    case SplitMode::intra_domain: return "intra-domain";
    case SplitMode::leave_one_domain_out: return "leave-one-domain-out";
    case SplitMode::leave_one_type_out: return "leave-one-type-out";
  }
  return "?";
}

SplitMode parse_split_mode(const std::string& s) {
  if (s == "intra-domain" || s == "intra") return SplitMode::intra_domain;
  if (s == "leave-one-domain-out" || s == "lodo") return SplitMode::leave_one_domain_out;
  if (s == "leave-one-type-out" || s == "loto") return SplitMode::leave_one_type_out;
  throw ConfigError("unknown split mode '" + s + "'");
}

namespace {

// Seeded halves of each (domain, liveness) group; the first half trains.
void halve(const DomainDataset& data, Rng rng, bool live_only, Split& out) {
  const int domains = int(data.spec.domains.size());
  for (int d = 0; d < domains; ++d)
    for (int live = 1; live >= 0; --live) {
      if (live_only && !live) continue;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < data.size(); ++i)
        if (data.samples[i].domain == d && data.samples[i].live == live) idx.push_back(i);
      Rng r = rng.substream(std::uint64_t(d) * 2 + std::uint64_t(live));
      std::shuffle(idx.begin(), idx.end(), r.engine());
      const std::size_t half = idx.size() / 2;
      out.train.insert(out.train.end(), idx.begin(), idx.begin() + long(half));
      out.test.insert(out.test.end(), idx.begin() + long(half), idx.end());
    }
}

}  // namespace

Split split(const DomainDataset& data, SplitMode mode, int held_out, std::uint64_t seed) {
  Split out;
  const Rng rng = Rng(seed).substream("split");
  switch (mode) {
    case SplitMode::intra_domain:
      halve(data, rng, false, out);
      break;
    case SplitMode::leave_one_domain_out:
      if (held_out < 0 || held_out >= int(data.spec.domains.size()))
        throw ConfigError("held-out domain " + std::to_string(held_out) + " out of range");
      for (std::size_t i = 0; i < data.size(); ++i)
        (data.samples[i].domain == held_out ? out.test : out.train).push_back(i);
      break;
    case SplitMode::leave_one_type_out: {
      if (std::find(data.spec.attacks.begin(), data.spec.attacks.end(), AttackType(held_out)) == data.spec.attacks.end())
        throw ConfigError("held-out attack type " + std::to_string(held_out) + " is not in the dataset");
      halve(data, rng, true, out);
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.samples[i].live) continue;
        (data.samples[i].type == held_out ? out.test : out.train).push_back(i);
      }
      break;
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

double high_frequency_energy(const Tensor<float>& image) {
  if (image.rank() != 3) throw ShapeError("high_frequency_energy expects C x H x W");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (H < 3 || W < 3) throw ShapeError("image too small for a 3x3 Laplacian");
  std::vector<double> g(H * W, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < H * W; ++k) g[k] += image.data()[c * H * W + k] / double(C);
  double e = 0;
  for (std::size_t y = 1; y + 1 < H; ++y)
    for (std::size_t x = 1; x + 1 < W; ++x) {
      const double l = 4 * g[y * W + x] - g[(y - 1) * W + x] - g[(y + 1) * W + x] - g[y * W + x - 1] - g[y * W + x + 1];
      e += l * l;
    }
  return e / double((H - 2) * (W - 2));
}

}  // namespace cdnas
