#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdnas/dynamic_rep.hpp"

namespace cdnas {

enum class AttackType { lattice, noise, blur_flat };
std::string to_string(AttackType a);
/// "lattice", "noise", "blur-flat".
AttackType parse_attack_type(const std::string& s);
inline constexpr int kLiveType = -1;

/// Photometric transform applied to every clip of a domain:
///   y = clamp(tint_c * x^gamma + brightness + glare(p) + N(0, noise^2)),
/// glare being a smooth additive light field drawn per clip: a linear ramp
/// of height `ramp` in a random direction plus a Gaussian spot of height
/// `spot` at a random position.
/// Presentation media additionally pick up a per-channel color cast
/// (spoof_tint) before the transform and keep spoof_relief of the face's
/// shading relief; both depend on the capture setup.
struct DomainTransform {
  std::string name;
  double gamma = 1.0;
  double brightness = 0.0;
  std::array<double, 3> tint{1.0, 1.0, 1.0};
  double noise = 0.0;
  std::array<double, 3> spoof_tint{1.0, 1.0, 1.0};
  double spoof_relief = 0.5;
  double ramp = 0.0;
  double spot = 0.0;
  nlohmann::ordered_json to_json() const;
  static DomainTransform from_json(const nlohmann::ordered_json& j);
};

/// Fixed presets for the first four domains; further ones are spread
/// deterministically around them.
std::vector<DomainTransform> default_domains(std::size_t n);

struct TaskSpec {
  std::size_t resolution = 64;
  std::size_t frames = 7;
  /// Clips per class per domain (live and attack counts are both this).
  std::size_t per_class = 16;
  std::vector<DomainTransform> domains = default_domains(3);
  std::vector<AttackType> attacks{AttackType::lattice, AttackType::noise, AttackType::blur_flat};
  /// Multiplies the lattice amplitude, the grain level and the blur width.
  double artifact_scale = 1.0;
  std::uint64_t seed = 0;

  std::size_t depth_size() const { return resolution / 8; }
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TaskSpec from_json(const nlohmann::ordered_json& j);
};

struct SyntheticSample {
  std::string id;
  FrameSequence clip;
  int live = 0;
  /// (S/8) x (S/8); a normalized bump for live clips, zeros for attacks.
  Tensor<float> depth;
  int domain = 0;
  /// kLiveType or int(AttackType).
  int type = kLiveType;
};

struct DomainDataset {
  TaskSpec spec;
  std::vector<SyntheticSample> samples;
  std::size_t size() const { return samples.size(); }
};

/// Per domain: per_class live clips, then per_class attack clips with the
/// attack types assigned round-robin. Each clip draws from its own seeded
/// sub-stream; frames are quantized to 8 bits so saving is lossless.
DomainDataset gen_dataset(const TaskSpec& spec);
SyntheticSample gen_sample(const TaskSpec& spec, int domain, int live, std::size_t index);

/// <dir>/index.json plus <dir>/clips/<id>/fNN.ppm and depth.cdnt.
void save_dataset(const std::filesystem::path& dir, const DomainDataset& data);
DomainDataset load_dataset(const std::filesystem::path& dir);

enum class SplitMode { intra_domain, leave_one_domain_out, leave_one_type_out };
std::string to_string(SplitMode m);
/// "intra-domain", "leave-one-domain-out", "leave-one-type-out" (also "intra", "lodo", "loto").
SplitMode parse_split_mode(const std::string& s);

struct Split {
  std::vector<std::size_t> train, test;
};

/// intra-domain: per domain and class a seeded half goes to test.
/// leave-one-domain-out: `held_out` names the test domain.
/// leave-one-type-out: every attack of type `held_out` goes to test together
/// with a seeded half of the live clips; the rest trains.
Split split(const DomainDataset& data, SplitMode mode, int held_out = 0, std::uint64_t seed = 0);

/// Sum of squared 3x3 Laplacian responses of the grey image, per pixel.
double high_frequency_energy(const Tensor<float>& image);

}  // namespace cdnas
