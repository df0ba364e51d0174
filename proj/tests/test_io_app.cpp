#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "uad/app.hpp"
#include "uad/error.hpp"
#include "uad/io.hpp"

using namespace uad;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

io::Bytes bytes_of(const std::string& s) { return io::Bytes(s.begin(), s.end()); }

std::string format_error_of(const io::Bytes& b, bool pgm = false) {
  try {
    if (pgm)
      io::decode_pgm(b);
    else
      io::decode_ppm(b);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

app::RunConfig tiny_config() {
  app::RunConfig c;
  c.corpus.count = 2;
  c.corpus.height = c.corpus.width = 32;
  c.corpus.objects = 2;
  c.params.steps = 2;
  c.params.deform_steps = 2;
  c.params.proxy_steps = 1;
  c.params.sam_k = 16;
  return c;
}

// Every regular file below `root`, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_text(e.path());
  return out;
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(UAD_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

// --- PPM / PGM --------------------------------------------------------------

TEST(Ppm, HandFixture) {
  const io::Bytes b = bytes_of(std::string("P6\n2 2\n255\n") +
                               std::string("\x00\xff\x80\x01\x02\x03\x10\x20\x30\xff\xff\xff", 12));
  const Tensor t = io::decode_ppm(b);
  ASSERT_EQ(t.shape(), (Shape{3, 2, 2}));
  EXPECT_EQ(t.at(0, 0, 0), 0.0);
  EXPECT_EQ(t.at(1, 0, 0), 1.0);
  EXPECT_EQ(t.at(2, 0, 0), 128.0 / 255);
  EXPECT_EQ(t.at(0, 0, 1), 1.0 / 255);
  EXPECT_EQ(t.at(2, 0, 1), 3.0 / 255);
  EXPECT_EQ(t.at(1, 1, 0), 32.0 / 255);
  EXPECT_EQ(t.at(2, 1, 1), 1.0);
  EXPECT_EQ(io::encode_ppm(t), b);
}

TEST(Ppm, CommentsInHeader) {
  const io::Bytes b = bytes_of(std::string("P6 # c\n1 # w\n1\n255\n") + std::string("\x05\x06\x07", 3));
  EXPECT_EQ(io::decode_ppm(b), Tensor::from({3, 1, 1}, {5.0 / 255, 6.0 / 255, 7.0 / 255}));
}

TEST(Ppm, RoundTripWithinHalfStep) {
  const fs::path dir = test::scratch_dir("ppm");
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor t = test::random_tensor({3, 7, 5}, s);
    io::write_ppm(dir / "x.ppm", t);
    EXPECT_LE(max_abs_diff(io::read_ppm(dir / "x.ppm"), t), 1.0 / 510 + 1e-15);
  }
  io::write_ppm(dir / "black.ppm", Tensor(Shape{3, 4, 4}));
  EXPECT_EQ(max_abs(io::read_ppm(dir / "black.ppm")), 0.0);
}

TEST(Ppm, FormatErrorsNameTheOffset) {
  EXPECT_NE(format_error_of(bytes_of("P3\n1 1\n255\n...")).find("at byte 0"), std::string::npos);
  EXPECT_NE(format_error_of(bytes_of("P6\nx 1\n255\n...")).find("expected width at byte 3"),
            std::string::npos);
  EXPECT_NE(format_error_of(bytes_of("P6\n0 1\n255\n...")).find("zero width at byte 2"),
            std::string::npos);
  EXPECT_NE(format_error_of(bytes_of("P6\n1 1\n65535\n......")).find("maxval must be 255 at byte 6"),
            std::string::npos);
  EXPECT_NE(format_error_of(bytes_of("P6\n2 1\n255\n\x01\x02\x03")).find("truncated"),
            std::string::npos);
  EXPECT_NE(format_error_of(bytes_of("P6\n2 1\n255\n\x01\x02\x03")).find("at byte 14"),
            std::string::npos);
}

TEST(Ppm, WrongShapeAndMissingFile) {
  EXPECT_THROW(io::encode_ppm(Tensor(Shape{1, 2, 2})), DimensionError);
  EXPECT_THROW(io::read_ppm("/nonexistent/dir/x.ppm"), IoError);
  EXPECT_THROW(io::write_ppm("/nonexistent/dir/x.ppm", Tensor(Shape{3, 1, 1})), IoError);
}

TEST(Pgm, ThresholdAndRoundTrip) {
  const io::Bytes b = bytes_of(std::string("P5\n4 1\n255\n") + std::string("\x00\x7f\x80\xff", 4));
  const seg::BinaryMask m = io::decode_pgm(b);
  EXPECT_EQ(m.bits, (std::vector<std::uint8_t>{0, 0, 1, 1}));
  const io::Bytes out = io::encode_pgm(m);
  EXPECT_EQ(out, bytes_of(std::string("P5\n4 1\n255\n") + std::string("\x00\x00\xff\xff", 4)));
  EXPECT_EQ(io::decode_pgm(out), m);
  EXPECT_NE(format_error_of(bytes_of("P6\n1 1\n255\n\x00"), true).find("pgm"), std::string::npos);
}

// --- configuration -----------------------------------------------------------

TEST(Config, RoundTripsThroughText) {
  app::RunConfig c = tiny_config();
  c.attack = "pata++";
  c.params.epsilon = 12.0 / 255;
  c.params.momentum_mu = 0.9;
  c.source = app::parse_models("3:2:8,4");
  c.prompt_seed = 17;
  const std::string text = app::format_config(c);
  const app::RunConfig back = app::parse_config(text);
  EXPECT_EQ(app::format_config(back), text);
  EXPECT_EQ(back.params.epsilon, 12.0 / 255);
  EXPECT_EQ(back.source, c.source);
  EXPECT_EQ(back.attack, "pata++");
}

TEST(Config, FractionsCommentsAndErrors) {
  EXPECT_EQ(app::parse_real("8/255"), 8.0 / 255);
  EXPECT_EQ(app::parse_real("0.25"), 0.25);
  EXPECT_THROW(app::parse_real("8/0"), ConfigError);
  EXPECT_THROW(app::parse_real("abc"), ConfigError);
  const app::RunConfig c =
      app::parse_config("# comment\n[attack]\n; other comment\nepsilon = 4/255\nsteps = 7\n");
  EXPECT_EQ(c.params.epsilon, 4.0 / 255);
  EXPECT_EQ(c.params.steps, 7);
  EXPECT_EQ(c.params.alpha, 2.0 / 255);
  EXPECT_THROW(app::parse_config("[attack]\nepsilonn = 1\n"), ConfigError);
  EXPECT_THROW(app::parse_config("[nope]\nx = 1\n"), ConfigError);
  EXPECT_THROW(app::parse_config("[attack]\nsteps = many\n"), ConfigError);
}

TEST(Config, UnknownAttackListsValidNames) {
  app::RunConfig c;
  c.attack = "fgsm";
  try {
    c.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    for (const auto& n : app::kAttackNames) EXPECT_NE(std::string(e.what()).find(n), std::string::npos);
  }
}

TEST(Config, ModelSpecs) {
  const auto m = app::parse_models("0, 1:4:32");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(app::format_model(m[0]), "0:3:16");
  EXPECT_EQ(app::format_model(m[1]), "1:4:32");
  EXPECT_THROW(app::parse_models("1:2"), ConfigError);
}

TEST(Partner, NeverTheSceneItself) {
  for (std::size_t i = 0; i < 20; ++i) {
    const std::size_t p = app::pick_partner(20, i, 1000 + i, 0, 0);
    EXPECT_NE(p, i);
    EXPECT_LT(p, 20u);
    EXPECT_EQ(p, app::pick_partner(20, i, 1000 + i, 0, 0));
  }
}

// --- commands ----------------------------------------------------------------

TEST(Commands, SynthSingleScene) {
  const fs::path dir = test::scratch_dir("synth1");
  app::RunConfig c = tiny_config();
  c.corpus.count = 1;
  app::cmd_synth(c, dir);
  const json m = json::parse(io::read_text(dir / "manifest.json"));
  ASSERT_EQ(m["scenes"].size(), 1u);
  EXPECT_GE(m["scenes"][0]["masks"].size(), 1u);
  EXPECT_TRUE(fs::exists(dir / m["scenes"][0]["image"].get<std::string>()));
  EXPECT_TRUE(fs::exists(dir / "config.ini"));
  const app::Corpus corpus = app::load_corpus(dir);
  ASSERT_EQ(corpus.scenes.size(), 1u);
  const auto fresh = seg::generate_scene(c.corpus.seed, 32, 32, 2);
  EXPECT_LE(max_abs_diff(corpus.scenes[0].image, fresh.image), 1.0 / 510 + 1e-15);
  EXPECT_EQ(corpus.scenes[0].masks, fresh.masks);
}

TEST(Commands, SynthIsByteIdentical) {
  const fs::path a = test::scratch_dir("synth_a"), b = test::scratch_dir("synth_b");
  app::cmd_synth(tiny_config(), a);
  app::cmd_synth(tiny_config(), b);
  EXPECT_EQ(tree(a), tree(b));
}

TEST(Commands, ZeroStepsEmitsTheCleanImage) {
  const fs::path corpus = test::scratch_dir("zero_corpus"), out = test::scratch_dir("zero_out");
  app::RunConfig c = tiny_config();
  app::cmd_synth(c, corpus);
  c.attack = "tap";
  c.params.steps = 0;
  const auto before = tree(corpus);
  app::cmd_attack(c, corpus, out);
  EXPECT_EQ(tree(corpus), before);
  EXPECT_EQ(io::read_bytes(out / "scene_000_adv.ppm"), io::read_bytes(corpus / "scene_000.ppm"));
}

TEST(Commands, IdentityAttackDirScoresOne) {
  const fs::path corpus = test::scratch_dir("id_corpus"), adv = test::scratch_dir("id_adv"),
                 out = test::scratch_dir("id_eval");
  app::RunConfig c = tiny_config();
  app::cmd_synth(c, corpus);
  const app::Corpus loaded = app::load_corpus(corpus);
  for (const auto& e : loaded.entries) fs::copy_file(corpus / e.image, adv / (e.id + "_adv.ppm"));
  app::write_attack_manifest(adv, "identity", c.source, loaded);
  const std::vector<fs::path> dirs{adv};
  app::cmd_eval(c, corpus, dirs, out);
  const json m = json::parse(io::read_text(out / "metrics.json"));
  ASSERT_EQ(m["reports"].size(), 2u);
  for (const auto& r : m["reports"]) {
    EXPECT_EQ(r["miou"].get<double>(), 1.0);
    EXPECT_EQ(r["asr50"].get<double>(), 0.0);
  }
  EXPECT_TRUE(m["reports"][0]["white_box"].get<bool>());
  EXPECT_FALSE(m["reports"][1]["white_box"].get<bool>());
}

TEST(Commands, EnsembleSourceAddsARow) {
  const fs::path corpus = test::scratch_dir("ens_corpus"), single = test::scratch_dir("ens_single"),
                 ens = test::scratch_dir("ens_two"), out = test::scratch_dir("ens_eval");
  app::RunConfig c = tiny_config();
  app::cmd_synth(c, corpus);
  c.targets = app::parse_models("2");
  app::cmd_attack(c, corpus, single);
  c.source = app::parse_models("0,1");
  app::cmd_attack(c, corpus, ens);
  const std::vector<fs::path> dirs{single, ens};
  app::cmd_eval(c, corpus, dirs, out);
  const json m = json::parse(io::read_text(out / "metrics.json"));
  ASSERT_EQ(m["reports"].size(), 2u);
  EXPECT_EQ(m["reports"][0]["source"], "seed0-d3-c16");
  EXPECT_EQ(m["reports"][1]["source"], "seed0-d3-c16+seed1-d3-c16");
  EXPECT_EQ(m["reports"][1]["target"], "seed2-d3-c16");
  EXPECT_FALSE(m["reports"][1]["white_box"].get<bool>());
}

TEST(Commands, MissingInputsNameTheGap) {
  const fs::path corpus = test::scratch_dir("gap_corpus"), adv = test::scratch_dir("gap_adv");
  app::RunConfig c = tiny_config();
  app::cmd_synth(c, corpus);
  c.attack = "tap";
  app::cmd_attack(c, corpus, adv);
  fs::remove(adv / "scene_001_adv.ppm");
  const std::vector<fs::path> dirs{adv};
  try {
    app::cmd_eval(c, corpus, dirs, test::scratch_dir("gap_eval"));
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("scene_001_adv.ppm"), std::string::npos);
  }
  EXPECT_THROW(app::load_corpus(test::scratch_dir("empty")), IoError);
}

TEST(Commands, WorkerCountDoesNotChangeOutputs) {
  const fs::path corpus = test::scratch_dir("w_corpus"), a = test::scratch_dir("w1"),
                 b = test::scratch_dir("w3");
  app::RunConfig c = tiny_config();
  c.corpus.count = 3;
  app::cmd_synth(c, corpus);
  app::cmd_attack(c, corpus, a);
  c.workers = 3;
  app::cmd_attack(c, corpus, b);
  auto ta = tree(a), tb = tree(b);
  ta.erase("config.ini");
  tb.erase("config.ini");
  EXPECT_EQ(ta, tb);
}

TEST(Commands, GradcheckListsOneLinePerCase) {
  app::RunConfig c;
  c.gradcheck.instances = 2;
  const auto suite = standard_gradcheck_suite();
  std::ostringstream out;
  EXPECT_TRUE(app::cmd_gradcheck(c, out, suite));
  std::istringstream lines(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(line.rfind("PASS ", 0), 0u) << line;
    EXPECT_NE(line.find("max_rel_err="), std::string::npos);
    ++n;
  }
  EXPECT_EQ(n, suite.size());
}

// --- CLI exit codes ------------------------------------------------------------

TEST(Cli, ExitCodes) {
  const fs::path dir = test::scratch_dir("cli");
  EXPECT_EQ(run_cli("synth --out " + (dir / "c").string()), 0);
  EXPECT_EQ(run_cli("attack --corpus " + (dir / "c").string() + " --out " +
                    (dir / "a").string() + " --attack nope"),
            2);
  EXPECT_EQ(run_cli("eval --corpus " + (dir / "c").string() + " --attack-dir " +
                    (dir / "missing").string() + " --out " + (dir / "e").string()),
            1);
  EXPECT_NE(run_cli("frobnicate"), 0);
}
