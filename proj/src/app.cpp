#include "uad/app.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "uad/error.hpp"
#include "uad/eval.hpp"
#include "uad/io.hpp"

namespace uad::app {

using json = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Shortest text that reads back to the same double.
std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_plain_real(const std::string& text, const std::string& whole) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (text.empty() || r.ec != std::errc() || r.ptr != end || !std::isfinite(v))
    throw ConfigError("not a number: '" + whole + "'");
  return v;
}

template <class T>
T parse_integer(const std::string& raw) {
  const std::string text = trim(raw);
  T v{};
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (text.empty() || r.ec != std::errc() || r.ptr != end)
    throw ConfigError("not an integer: '" + raw + "'");
  return v;
}

bool parse_bool(const std::string& raw) {
  const std::string t = trim(raw);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError("not a boolean: '" + raw + "'");
}

template <class T>
T parse_as(const std::string& text) {
  if constexpr (std::is_same_v<T, bool>) {
    return parse_bool(text);
  } else if constexpr (std::is_same_v<T, double>) {
    return parse_real(text);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return trim(text);
  } else {
    return parse_integer<T>(text);
  }
}

template <class T>
std::string format_as(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, double>) {
    return format_real(v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else {
    return std::to_string(v);
  }
}

struct Field {
  std::string section, key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class Ref>
Field field(std::string section, std::string key, Ref ref) {
  using T = std::remove_reference_t<decltype(ref(std::declval<RunConfig&>()))>;
  return {std::move(section), std::move(key),
          [ref](const RunConfig& c) { return format_as<T>(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = parse_as<T>(v); }};
}

std::string format_model_list(const std::vector<ModelSpec>& specs) {
  std::string out;
  for (std::size_t i = 0; i < specs.size(); ++i) out += (i ? ", " : "") + format_model(specs[i]);
  return out;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
#define UAD_FIELD(section, key, expr) \
  f.push_back(field(section, key, [](RunConfig& c) -> auto& { return expr; }))
    UAD_FIELD("corpus", "count", c.corpus.count);
    UAD_FIELD("corpus", "height", c.corpus.height);
    UAD_FIELD("corpus", "width", c.corpus.width);
    UAD_FIELD("corpus", "objects", c.corpus.objects);
    UAD_FIELD("corpus", "seed", c.corpus.seed);
    UAD_FIELD("attack", "name", c.attack);
    UAD_FIELD("attack", "epsilon", c.params.epsilon);
    UAD_FIELD("attack", "alpha", c.params.alpha);
    UAD_FIELD("attack", "steps", c.params.steps);
    UAD_FIELD("attack", "proxy_steps", c.params.proxy_steps);
    UAD_FIELD("attack", "deform_steps", c.params.deform_steps);
    UAD_FIELD("attack", "deform_step", c.params.deform_step);
    UAD_FIELD("attack", "deform_backtracking", c.params.deform_backtracking);
    UAD_FIELD("attack", "max_halvings", c.params.max_halvings);
    UAD_FIELD("attack", "control_smoothing", c.params.control_smoothing);
    UAD_FIELD("attack", "init_shift", c.params.init_shift);
    UAD_FIELD("attack", "lambda_tv", c.params.weights.lambda_tv);
    UAD_FIELD("attack", "lambda_var", c.params.weights.lambda_var);
    UAD_FIELD("attack", "lambda_c", c.params.weights.lambda_c);
    UAD_FIELD("attack", "lambda_f", c.params.weights.lambda_f);
    UAD_FIELD("attack", "beta", c.params.weights.beta);
    UAD_FIELD("attack", "flow_fields", c.params.flow_fields);
    UAD_FIELD("attack", "mask_sigma", c.params.mask_sigma);
    UAD_FIELD("attack", "seed", c.params.seed);
    UAD_FIELD("attack", "momentum_mu", c.params.momentum_mu);
    UAD_FIELD("attack", "input_diversity_prob", c.params.input_diversity_prob);
    UAD_FIELD("attack", "diversity_min_scale", c.params.diversity_min_scale);
    UAD_FIELD("attack", "diversity_max_scale", c.params.diversity_max_scale);
    UAD_FIELD("attack", "tap_p", c.params.tap_p);
    UAD_FIELD("attack", "lambda_dom", c.params.lambda_dom);
    UAD_FIELD("attack", "sam_k", c.params.sam_k);
    UAD_FIELD("run", "workers", c.workers);
    UAD_FIELD("run", "prompt_seed", c.prompt_seed);
    UAD_FIELD("gradcheck", "instances", c.gradcheck.instances);
    UAD_FIELD("gradcheck", "step", c.gradcheck.step);
    UAD_FIELD("gradcheck", "tolerance", c.gradcheck.tolerance);
    UAD_FIELD("gradcheck", "seed", c.gradcheck.seed);
#undef UAD_FIELD
    f.push_back({"models", "source", [](const RunConfig& c) { return format_model_list(c.source); },
                 [](RunConfig& c, const std::string& v) { c.source = parse_models(v); }});
    f.push_back({"models", "targets",
                 [](const RunConfig& c) { return format_model_list(c.targets); },
                 [](RunConfig& c, const std::string& v) { c.targets = parse_models(v); }});
    return f;
  }();
  return table;
}

const char* kSections[] = {"corpus", "attack", "models", "run", "gradcheck"};

std::string scene_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%03zu", i);
  return buf;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing " + path.string());
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template <class T>
T json_get(const json& j, const char* key, const fs::path& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(where.string() + ": missing or invalid '" + key + "'");
  }
}

std::string source_label(std::span<const ModelSpec> specs) {
  std::string out;
  for (const ModelSpec& s : specs) {
    if (!out.empty()) out += "+";
    out += "seed" + std::to_string(s.seed) + "-d" + std::to_string(s.arch.depth) + "-c" +
           std::to_string(s.arch.channels);
  }
  return out;
}

// Runs fn(i) for i in [0, n) on `workers` threads. Results must be written by
// index so the worker count cannot change the output. The first failure by
// index is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  if (count <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string trace_csv(const std::vector<attacks::TracePoint>& trace) {
  std::string out = "stage,iteration,term,value\n";
  for (const attacks::TracePoint& p : trace) {
    out += p.stage + "," + std::to_string(p.iteration) + "," + p.term + "," + format_real(p.value) +
           "\n";
  }
  return out;
}

}  // namespace

std::string format_model(const ModelSpec& spec) {
  return std::to_string(spec.seed) + ":" + std::to_string(spec.arch.depth) + ":" +
         std::to_string(spec.arch.channels);
}

std::vector<ModelSpec> parse_models(const std::string& text) {
  std::vector<ModelSpec> out;
  std::stringstream list(text);
  std::string item;
  while (std::getline(list, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty model spec in '" + text + "'");
    std::vector<std::string> parts;
    std::stringstream ss(item);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 1 && parts.size() != 3)
      throw ConfigError("model spec '" + item + "' is not seed or seed:depth:channels");
    ModelSpec m;
    m.seed = parse_integer<std::uint64_t>(parts[0]);
    if (parts.size() == 3) {
      m.arch.depth = parse_integer<int>(parts[1]);
      m.arch.channels = parse_integer<int>(parts[2]);
    }
    out.push_back(m);
  }
  if (out.empty()) throw ConfigError("empty model list");
  return out;
}

double parse_real(const std::string& raw) {
  const std::string text = trim(raw);
  const auto slash = text.find('/');
  if (slash == std::string::npos) return parse_plain_real(text, raw);
  const double num = parse_plain_real(trim(text.substr(0, slash)), raw);
  const double den = parse_plain_real(trim(text.substr(slash + 1)), raw);
  if (den == 0.0) throw ConfigError("zero denominator in '" + raw + "'");
  return num / den;
}

void RunConfig::validate() const {
  if (corpus.count < 1) throw ConfigError("corpus.count must be >= 1");
  if (corpus.height < 16 || corpus.width < 16 || corpus.height % seg::kStride != 0 ||
      corpus.width % seg::kStride != 0)
    throw ConfigError("corpus height and width must be multiples of 4, at least 16");
  if (corpus.objects < 1) throw ConfigError("corpus.objects must be >= 1");
  if (std::find(kAttackNames.begin(), kAttackNames.end(), attack) == kAttackNames.end()) {
    std::string names;
    for (const std::string& n : kAttackNames) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown attack '" + attack + "'; valid names: " + names);
  }
  params.validate();
  if (source.empty() || targets.empty()) throw ConfigError("model lists must not be empty");
  if (workers < 1) throw ConfigError("run.workers must be >= 1");
  if (gradcheck.instances < 1 || !(gradcheck.step > 0.0) || !(gradcheck.tolerance > 0.0))
    throw ConfigError("gradcheck needs instances >= 1, step > 0 and tolerance > 0");
}

void set_value(RunConfig& config, const std::string& section, const std::string& key,
               const std::string& value) {
  for (const Field& f : fields()) {
    if (f.section == section && f.key == key) {
      try {
        f.set(config, value);
      } catch (const ConfigError& e) {
        throw ConfigError(section + "." + key + ": " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown config key " + section + "." + key);
}

RunConfig parse_config(const std::string& text) {
  // The INI reader only knows ';' comments; blank out '#' lines, keeping
  // line numbers for error messages.
  std::istringstream lines(text);
  std::string cleaned;
  for (std::string line; std::getline(lines, line);)
    cleaned += (trim(line).starts_with("#") ? "" : line) + "\n";
  boost::property_tree::ptree tree;
  std::istringstream in(cleaned);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set_value(config, section, key, value.data());
  }
  return config;
}

RunConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
  return parse_config(io::read_text(path));
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const char* section : kSections) {
    out += std::string(out.empty() ? "" : "\n") + "[" + section + "]\n";
    for (const Field& f : fields())
      if (f.section == section) out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

std::vector<seg::Model> build_models(std::span<const ModelSpec> specs) {
  std::vector<seg::Model> out;
  for (const ModelSpec& s : specs) out.push_back(seg::Model::build(s.seed, s.arch));
  return out;
}

Corpus load_corpus(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  const json j = read_json(manifest);
  Corpus c;
  for (const json& s : json_get<json>(j, "scenes", manifest)) {
    CorpusEntry e;
    e.id = json_get<std::string>(s, "id", manifest);
    e.seed = json_get<std::uint64_t>(s, "seed", manifest);
    e.image = json_get<std::string>(s, "image", manifest);
    e.masks = json_get<std::vector<std::string>>(s, "masks", manifest);
    seg::SyntheticScene scene;
    scene.seed = e.seed;
    scene.image = io::read_ppm(dir / e.image);
    for (const std::string& m : e.masks) {
      scene.masks.push_back(io::read_pgm(dir / m));
      if (scene.masks.back().height != scene.image.dim(1) ||
          scene.masks.back().width != scene.image.dim(2))
        throw FormatError(m + ": mask size differs from its image");
    }
    c.entries.push_back(std::move(e));
    c.scenes.push_back(std::move(scene));
  }
  if (c.scenes.empty()) throw FormatError(manifest.string() + ": no scenes");
  return c;
}

std::size_t pick_partner(std::size_t count, std::size_t index, std::uint64_t scene_seed,
                         std::uint64_t attack_seed, std::uint64_t salt) {
  if (count < 2) throw ConfigError("this attack needs a corpus of at least two scenes");
  std::seed_seq seq{static_cast<std::uint32_t>(attack_seed),
                    static_cast<std::uint32_t>(attack_seed >> 32),
                    static_cast<std::uint32_t>(scene_seed),
                    static_cast<std::uint32_t>(scene_seed >> 32), static_cast<std::uint32_t>(salt)};
  std::mt19937_64 rng(seq);
  std::size_t j = std::uniform_int_distribution<std::size_t>(0, count - 2)(rng);
  return j >= index ? j + 1 : j;
}

attacks::AttackResult run_attack(const std::string& name, std::span<const seg::Model> source,
                                 const Corpus& corpus, std::size_t index,
                                 const attacks::AttackConfig& params) {
  if (source.empty()) throw ConfigError("no source model");
  const Tensor& image = corpus.scenes[index].image;
  const std::size_t n = corpus.scenes.size();
  const std::uint64_t seed = corpus.scenes[index].seed;
  if (name == "uad") return attacks::uad_attack(source, image, params);
  if (name == "tap") return attacks::tap_attack(source[0], image, params);
  if (name == "attack-sam-k") return attacks::attack_sam_k(source[0], image, params.sam_k, params);

  const std::size_t target = pick_partner(n, index, seed, params.seed, 0);
  if (name == "aa") return attacks::aa_attack(source[0], image, corpus.scenes[target].image, params);
  if (name == "pata" || name == "pata++") {
    std::size_t competition = pick_partner(n, index, seed, params.seed, 1);
    for (std::uint64_t salt = 2; competition == target && n > 2; ++salt)
      competition = pick_partner(n, index, seed, params.seed, salt);
    std::vector<Tensor> pool;
    if (name == "pata++") {
      for (std::size_t k = 0; k < n; ++k)
        if (k != index && k != target) pool.push_back(corpus.scenes[k].image);
    }
    return attacks::pata_attack(source[0], image, corpus.scenes[target].image,
                                corpus.scenes[competition].image, params, name == "pata++", pool);
  }
  throw ConfigError("unknown attack '" + name + "'");
}

void cmd_synth(const RunConfig& config, const fs::path& out) {
  config.validate();
  make_dir(out);
  json scenes = json::array();
  for (int i = 0; i < config.corpus.count; ++i) {
    const std::uint64_t seed = config.corpus.seed + static_cast<std::uint64_t>(i);
    const seg::SyntheticScene s = seg::generate_scene(seed, config.corpus.height,
                                                      config.corpus.width, config.corpus.objects);
    const std::string id = scene_id(static_cast<std::size_t>(i));
    io::write_ppm(out / (id + ".ppm"), s.image);
    json masks = json::array();
    for (std::size_t m = 0; m < s.masks.size(); ++m) {
      const std::string name = id + "_mask_" + std::to_string(m) + ".pgm";
      io::write_pgm(out / name, s.masks[m]);
      masks.push_back(name);
    }
    scenes.push_back({{"id", id}, {"seed", seed}, {"image", id + ".ppm"}, {"masks", masks}});
  }
  const json manifest = {{"height", config.corpus.height},
                         {"width", config.corpus.width},
                         {"scenes", scenes}};
  io::write_text(out / "manifest.json", manifest.dump(2) + "\n");
  io::write_text(out / "config.ini", format_config(config));
}

void cmd_attack(const RunConfig& config, const fs::path& corpus_dir, const fs::path& out) {
  config.validate();
  const Corpus corpus = load_corpus(corpus_dir);
  const std::vector<seg::Model> source = build_models(config.source);
  const std::size_t n = corpus.scenes.size();
  std::vector<std::optional<attacks::AttackResult>> results(n);
  parallel_for(n, config.workers, [&](std::size_t i) {
    results[i] = run_attack(config.attack, source, corpus, i, config.params);
  });

  make_dir(out);
  json scenes = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const attacks::AttackResult& r = *results[i];
    const std::string& id = corpus.entries[i].id;
    io::write_ppm(out / (id + "_adv.ppm"), r.adversarial);
    Tensor shown = r.perturbation;
    for (double& v : shown.data()) v = 0.5 + 16.0 * v;
    io::write_ppm(out / (id + "_perturbation.ppm"), shown);
    io::write_text(out / (id + "_trace.csv"), trace_csv(r.trace));
    double linf = 0.0;
    for (double v : r.perturbation.data()) linf = std::max(linf, std::abs(v));
    json entry = {{"id", id},
                  {"adversarial", id + "_adv.ppm"},
                  {"perturbation", id + "_perturbation.ppm"},
                  {"trace", id + "_trace.csv"},
                  {"linf", linf}};
    if (r.deformed) {
      io::write_ppm(out / (id + "_deformed.ppm"), *r.deformed);
      entry["deformed"] = id + "_deformed.ppm";
    }
    entry["warnings"] = r.warnings;
    scenes.push_back(entry);
  }
  json models = json::array();
  for (const ModelSpec& s : config.source) models.push_back(format_model(s));
  const json manifest = {{"attack", config.attack}, {"source", models}, {"scenes", scenes}};
  io::write_text(out / "attack.json", manifest.dump(2) + "\n");
  io::write_text(out / "config.ini", format_config(config));
}

void write_attack_manifest(const fs::path& dir, const std::string& attack,
                           std::span<const ModelSpec> source, const Corpus& corpus) {
  json scenes = json::array();
  for (const CorpusEntry& e : corpus.entries)
    scenes.push_back({{"id", e.id}, {"adversarial", e.id + "_adv.ppm"}});
  json models = json::array();
  for (const ModelSpec& s : source) models.push_back(format_model(s));
  const json manifest = {{"attack", attack}, {"source", models}, {"scenes", scenes}};
  io::write_text(dir / "attack.json", manifest.dump(2) + "\n");
}

void cmd_eval(const RunConfig& config, const fs::path& corpus_dir,
              std::span<const fs::path> attack_dirs, const fs::path& out) {
  config.validate();
  if (attack_dirs.empty()) throw ConfigError("eval: no attack directories given");
  const Corpus corpus = load_corpus(corpus_dir);
  const std::vector<seg::Model> targets = build_models(config.targets);

  json reports = json::array();
  std::string csv = "attack,source,scene,mask,prompt,kind,model,iou\n";
  for (const fs::path& dir : attack_dirs) {
    const fs::path manifest_path = dir / "attack.json";
    const json manifest = read_json(manifest_path);
    const std::string attack = json_get<std::string>(manifest, "attack", manifest_path);
    std::vector<ModelSpec> source;
    for (const std::string& s : json_get<std::vector<std::string>>(manifest, "source", manifest_path))
      source.push_back(parse_models(s).front());
    const std::string src = source_label(source);

    std::map<std::string, std::string> by_id;
    for (const json& s : json_get<json>(manifest, "scenes", manifest_path))
      by_id[json_get<std::string>(s, "id", manifest_path)] =
          json_get<std::string>(s, "adversarial", manifest_path);
    std::vector<Tensor> adversarial;
    for (const CorpusEntry& e : corpus.entries) {
      const auto it = by_id.find(e.id);
      if (it == by_id.end())
        throw IoError(manifest_path.string() + ": no adversarial image for " + e.id);
      const fs::path p = dir / it->second;
      if (!fs::exists(p)) throw IoError("missing adversarial image " + p.string());
      adversarial.push_back(io::read_ppm(p));
    }

    for (std::size_t t = 0; t < targets.size(); ++t) {
      const eval::MetricsReport report =
          eval::evaluate(std::span(&targets[t], 1), corpus.scenes, adversarial, config.prompt_seed);
      const eval::ModelMetrics& m = report.models.front();
      std::vector<double> sims;
      for (std::size_t i = 0; i < adversarial.size(); ++i)
        sims.push_back(eval::feature_similarity(targets[t], corpus.scenes[i].image, adversarial[i]));
      const eval::Histogram h = eval::histogram(sims, 20);
      const bool white_box =
          std::find(source.begin(), source.end(), config.targets[t]) != source.end();
      reports.push_back({{"attack", attack},
                         {"source", src},
                         {"target", m.model},
                         {"white_box", white_box},
                         {"count", m.count},
                         {"miou", m.miou},
                         {"miou_std", m.miou_std},
                         {"miou_std_per_mask", m.miou_std_per_mask},
                         {"asr50", m.asr50},
                         {"asr10", m.asr10},
                         {"feature_similarity", h.mean},
                         {"feature_similarity_histogram", h.counts}});
      for (const eval::MaskRow& r : report.rows) {
        csv += attack + "," + src + "," + std::to_string(r.scene) + "," + std::to_string(r.mask) +
               "," + std::to_string(r.prompt) + "," + r.kind + "," + r.model + "," +
               format_real(r.iou) + "\n";
      }
    }
  }
  make_dir(out);
  const json metrics = {{"prompt_seed", config.prompt_seed}, {"reports", reports}};
  io::write_text(out / "metrics.json", metrics.dump(2) + "\n");
  io::write_text(out / "per_mask.csv", csv);
  io::write_text(out / "config.ini", format_config(config));
}

bool cmd_gradcheck(const RunConfig& config, std::ostream& out,
                   const std::vector<GradCheckCase>& suite) {
  const GradcheckConfig& g = config.gradcheck;
  const std::vector<GradCheckRow> rows =
      run_gradchecks(suite, g.instances, g.step, g.tolerance, g.seed);
  bool ok = true;
  for (const GradCheckRow& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s %-28s max_rel_err=%.3e instances=%d", r.pass ? "PASS" : "FAIL",
                  r.name.c_str(), r.max_error, r.instances);
    out << buf << "\n";
    ok = ok && r.pass;
  }
  return ok;
}

}  // namespace uad::app
