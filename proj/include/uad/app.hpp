#pragma once

// Command layer behind the uad CLI: run configuration, the on-disk corpus and
// result layouts, and the synth / attack / eval / gradcheck commands.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "uad/attacks.hpp"
#include "uad/gradcheck.hpp"
#include "uad/segmodel.hpp"

namespace uad::app {

namespace fs = std::filesystem;

struct CorpusConfig {
  int count = 20;
  std::size_t height = 64;
  std::size_t width = 64;
  int objects = 3;
  std::uint64_t seed = 1000;  // scene i uses seed + i
};

struct ModelSpec {
  std::uint64_t seed = 0;
  seg::ArchSpec arch;

  bool operator==(const ModelSpec&) const = default;
};

/// "seed:depth:channels", e.g. "1:3:16".
std::string format_model(const ModelSpec& spec);
/// Comma-separated list of model specs; "seed" alone uses the default arch.
std::vector<ModelSpec> parse_models(const std::string& text);

struct GradcheckConfig {
  int instances = 20;
  double step = 1e-4;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

struct RunConfig {
  CorpusConfig corpus;
  std::string attack = "uad";
  attacks::AttackConfig params;
  std::vector<ModelSpec> source{ModelSpec{0, {}}};
  std::vector<ModelSpec> targets{ModelSpec{0, {}}, ModelSpec{1, {}}};
  int workers = 1;
  std::uint64_t prompt_seed = 0;
  GradcheckConfig gradcheck;

  /// Throws ConfigError on any out-of-range value.
  void validate() const;
};

inline const std::vector<std::string> kAttackNames = {"uad",  "tap",    "aa",
                                                       "pata", "pata++", "attack-sam-k"};

/// Decimal or a fraction "a/b". Throws ConfigError otherwise.
double parse_real(const std::string& text);

/// Sets one config key. Section names: corpus, attack, models, run, gradcheck.
/// Throws ConfigError on an unknown key or a bad value.
void set_value(RunConfig& config, const std::string& section, const std::string& key,
               const std::string& value);

/// INI text with [section] headers and key = value lines; lines starting with
/// '#' or ';' are comments. Keys not given keep their defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const fs::path& path);
/// Every key with its resolved value; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& config);

std::vector<seg::Model> build_models(std::span<const ModelSpec> specs);

struct CorpusEntry {
  std::string id;
  std::uint64_t seed = 0;
  std::string image;
  std::vector<std::string> masks;
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  std::vector<seg::SyntheticScene> scenes;  // as reloaded from disk
};

Corpus load_corpus(const fs::path& dir);

/// Index of the other corpus scene an attack on scene `index` aims at (AA,
/// PATA) or competes with (`salt` 1 for PATA). Needs at least two scenes.
std::size_t pick_partner(std::size_t count, std::size_t index, std::uint64_t scene_seed,
                         std::uint64_t attack_seed, std::uint64_t salt);

/// Runs attack `name` on scene `index` of the corpus.
attacks::AttackResult run_attack(const std::string& name, std::span<const seg::Model> source,
                                 const Corpus& corpus, std::size_t index,
                                 const attacks::AttackConfig& params);

/// Writes N scenes (PPM image, one PGM per mask), manifest.json and config.ini.
void cmd_synth(const RunConfig& config, const fs::path& out);

/// Attacks every corpus scene. Per scene: adversarial image, x16 perturbation
/// around mid-grey, loss trace CSV, and the deformed target for uad. Plus
/// attack.json and config.ini.
void cmd_attack(const RunConfig& config, const fs::path& corpus, const fs::path& out);

/// Evaluates each attack directory on every target model. Writes
/// metrics.json, per_mask.csv and config.ini.
void cmd_eval(const RunConfig& config, const fs::path& corpus, std::span<const fs::path> attacks,
              const fs::path& out);

/// One line per case; returns true when every case passes.
bool cmd_gradcheck(const RunConfig& config, std::ostream& out,
                   const std::vector<GradCheckCase>& suite);

/// Writes attack.json for a directory of adversarial images named by scene
/// id, e.g. `<id>_adv.ppm`.
void write_attack_manifest(const fs::path& dir, const std::string& attack,
                           std::span<const ModelSpec> source, const Corpus& corpus);

}  // namespace uad::app
