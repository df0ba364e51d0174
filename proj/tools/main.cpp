#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uad/app.hpp"
#include "uad/error.hpp"

namespace {

using uad::app::RunConfig;

struct Overrides {
  std::optional<std::string> attack, epsilon, alpha, steps, proxy_steps, deform_steps, seed,
      workers, beta, flow_fields;
};

void add_attack_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--attack", o.attack, "uad, tap, aa, pata, pata++ or attack-sam-k");
  cmd->add_option("--epsilon", o.epsilon, "L-inf radius; fractions like 8/255 accepted");
  cmd->add_option("--alpha", o.alpha, "signed step size; fractions accepted");
  cmd->add_option("--steps", o.steps, "simulation / attack iterations T");
  cmd->add_option("--proxy-steps", o.proxy_steps, "proxy iterations T_f");
  cmd->add_option("--deform-steps", o.deform_steps, "deformation iterations T_D");
  cmd->add_option("--seed", o.seed, "attack seed");
  cmd->add_option("--beta", o.beta, "push-away weight of the simulation objective");
  cmd->add_option("--flow-fields", o.flow_fields, "number of flow fields K");
}

void apply(RunConfig& c, const Overrides& o) {
  auto set = [&](const std::optional<std::string>& v, const char* section, const char* key) {
    if (v) uad::app::set_value(c, section, key, *v);
  };
  set(o.attack, "attack", "name");
  set(o.epsilon, "attack", "epsilon");
  set(o.alpha, "attack", "alpha");
  set(o.steps, "attack", "steps");
  set(o.proxy_steps, "attack", "proxy_steps");
  set(o.deform_steps, "attack", "deform_steps");
  set(o.seed, "attack", "seed");
  set(o.beta, "attack", "beta");
  set(o.flow_fields, "attack", "flow_fields");
  set(o.workers, "run", "workers");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformation-based adversarial attacks on a toy promptable segmenter"};
  app.require_subcommand(1);

  std::string config_path, out, corpus;
  std::vector<std::string> attack_dirs;
  Overrides o;

  app.add_option("--config", config_path, "INI run configuration")->check(CLI::ExistingFile);
  app.add_option("--workers", o.workers, "parallel scenes (outputs do not depend on it)");

  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  synth->add_option("--out", out, "output directory")->required();

  auto* attack = app.add_subcommand("attack", "attack every corpus scene");
  attack->add_option("--corpus", corpus, "corpus directory")->required();
  attack->add_option("--out", out, "output directory")->required();
  add_attack_flags(attack, o);

  auto* eval = app.add_subcommand("eval", "IoU metrics for attack directories");
  eval->add_option("--corpus", corpus, "corpus directory")->required();
  eval->add_option("--attack-dir", attack_dirs, "attack output directory (repeatable)")
      ->required();
  eval->add_option("--out", out, "output directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op");

  for (CLI::App* sub : {synth, attack, eval, gradcheck}) {
    sub->add_option("--config", config_path, "INI run configuration")->check(CLI::ExistingFile);
    sub->add_option("--workers", o.workers, "parallel scenes");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : uad::app::load_config(config_path);
    apply(config, o);
    if (*synth) {
      uad::app::cmd_synth(config, out);
    } else if (*attack) {
      uad::app::cmd_attack(config, corpus, out);
    } else if (*eval) {
      std::vector<uad::app::fs::path> dirs(attack_dirs.begin(), attack_dirs.end());
      uad::app::cmd_eval(config, corpus, dirs, out);
    } else if (*gradcheck) {
      config.validate();
      if (!uad::app::cmd_gradcheck(config, std::cout, uad::standard_gradcheck_suite())) return 1;
    }
  } catch (const uad::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const uad::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
