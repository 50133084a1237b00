#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cdnas/errors.hpp"
#include "cdnas/harness.hpp"
#include "cdnas/supernet.hpp"

using namespace cdnas;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("cdnas_harness_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

const fs::path& data_dir() {
  static const fs::path dir = [] {
    TaskSpec spec;
    spec.per_class = 8;
    spec.seed = 3;
    const auto d = scratch() / "data";
    save_dataset(d, gen_dataset(spec));
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CDNAS_CLI) + " " + args + " > " + (scratch() / "cli.txt").string() + " 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string cli_output() {
  std::ifstream is(scratch() / "cli.txt");
  return {std::istreambuf_iterator<char>(is), {}};
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  return json::parse(is);
}

RunConfig small_config() {
  RunConfig c;
  c.data = data_dir();
  c.split = SplitMode::intra_domain;
  c.train.epochs = 2;
  c.search.epochs = 1;
  c.search.iterations = 2;
  c.channels = 4;
  return c;
}

FrameSequence ramp_clip(std::size_t k, float step) {
  FrameSequence s;
  for (std::size_t t = 0; t < k; ++t) {
    Tensor<float> f({3, 8, 8});
    for (std::size_t i = 0; i < f.numel(); ++i) f.data()[i] = 0.1f + step * float(t) + 0.01f * float(i % 7);
    s.frames.push_back(f);
  }
  return s;
}

std::vector<float> flat(const Tensor<float>& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(InputPipeline, StaticUsesOnlyTheMiddleFrame) {
  auto a = ramp_clip(7, 0.05f);
  auto b = a;
  for (std::size_t t = 0; t < 7; ++t)
    if (t != 3) b.frames[t].fill(0.9f);
  EXPECT_EQ(flat(input_pipeline(a, InputMode::static_frame)), flat(a.frames[3]));
  EXPECT_EQ(flat(input_pipeline(a, InputMode::static_frame)), flat(input_pipeline(b, InputMode::static_frame)));
}

TEST(InputPipeline, StaticDynamicInUnitRange) {
  Rng rng(4);
  FrameSequence s;
  for (int t = 0; t < 7; ++t) {
    Tensor<float> f({3, 8, 8});
    for (auto& v : f.data()) v = float(rng.uniform());
    s.frames.push_back(f);
  }
  const auto x = input_pipeline(s, InputMode::static_dynamic);
  for (float v : x.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(InputPipeline, ConstantClipHasZeroDynamicImage) {
  const auto x = input_pipeline(ramp_clip(7, 0.0f), InputMode::dynamic);
  for (float v : x.data()) EXPECT_EQ(v, 0.0f);
}

TEST(RunConfigTest, RoundTripAndFieldPaths) {
  auto c = small_config();
  c.seeds = {1, 2};
  const auto back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json().dump(), c.to_json().dump());

  auto expect_field = [](const json& j, const std::string& field) {
    try {
      RunConfig::from_json(j);
      ADD_FAILURE() << "accepted " << j.dump();
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  expect_field({{"train", {{"lr", "fast"}}}}, "train.lr");
  expect_field({{"spaec", "fas"}}, "spaec");
  expect_field({{"input", "stereo"}}, "input");
  expect_field({{"search", {{"epochs", -1}}}}, "search.epochs");
  expect_field({{"scheme", "greedy"}}, "scheme");
}

TEST(RunConfigTest, MissingPathsRejected) {
  RunConfig c;
  c.data = scratch() / "nowhere";
  EXPECT_THROW(c.validate_for("train"), ConfigError);
  c.data = data_dir();
  EXPECT_NO_THROW(c.validate_for("train"));
  EXPECT_THROW(c.validate_for("retrain"), ConfigError);
  EXPECT_THROW(c.validate_for("eval"), ConfigError);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("train --data " + (scratch() / "nowhere").string()), kExitConfig);
  const auto cfg = scratch() / "bad.json";
  std::ofstream(cfg) << R"({"train": {"epochs": "many"}})";
  EXPECT_EQ(run_cli("train -c " + cfg.string() + " --data " + data_dir().string()), kExitConfig);
  EXPECT_NE(cli_output().find("train.epochs"), std::string::npos) << cli_output();
  EXPECT_EQ(run_cli("retrain --data " + data_dir().string()), kExitConfig);
  EXPECT_NE(run_cli("frobnicate"), kExitOk);
}

TEST(Cli, TrainDepthNetStaticBeatsChance) {
  const auto out = scratch() / "train";
  ASSERT_EQ(run_cli("train --variant depthnet --input static --split intra --epochs 10 --data " +
                    data_dir().string() + " -o " + out.string()),
            kExitOk)
      << cli_output();
  ASSERT_TRUE(fs::exists(out / "report.json"));
  EXPECT_TRUE(fs::exists(out / "report.csv"));
  EXPECT_TRUE(fs::exists(out / "checkpoint.cdnc"));
  EXPECT_TRUE(fs::exists(out / "train_log.jsonl"));
  const auto rep = read_json(out / "report.json");
  EXPECT_LT(rep.at("metrics").at("acer").get<double>(), 0.5);

  // eval reproduces the stored metrics.
  const auto ev = scratch() / "eval";
  ASSERT_EQ(run_cli("eval --split intra --data " + data_dir().string() + " --checkpoint " +
                    (out / "checkpoint.cdnc").string() + " -o " + ev.string()),
            kExitOk)
      << cli_output();
  EXPECT_NEAR(read_json(ev / "report.json").at("metrics").at("acer").get<double>(),
              rep.at("metrics").at("acer").get<double>(), 1e-6);
}

TEST(Cli, SearchGenotypeIsAcceptedByRetrain) {
  const auto s = scratch() / "search";
  ASSERT_EQ(run_cli("search --space fas --scheme nas --epochs 2 --split intra --data " + data_dir().string() +
                    " -o " + s.string()),
            kExitOk)
      << cli_output();
  ASSERT_TRUE(fs::exists(s / "genotype.json"));
  EXPECT_TRUE(fs::exists(s / "search_log.jsonl"));
  const auto g = Genotype::from_json(read_json(s / "genotype.json"));
  EXPECT_NO_THROW(g.validate(SearchSpace::from_id(g.space)));

  const auto r = scratch() / "retrain";
  ASSERT_EQ(run_cli("retrain --split intra --epochs 1 --data " + data_dir().string() + " --genotype " +
                    (s / "genotype.json").string() + " -o " + r.string()),
            kExitOk)
      << cli_output();
  EXPECT_TRUE(fs::exists(r / "report.json"));
  EXPECT_TRUE(fs::exists(r / "checkpoint.cdnc"));
}

TEST(Retrain, NetworksHaveNoArchitectureParameters) {
  for (const std::string id : {"fas/cd/max/noatt", "baseline/cd/deeppixel"}) {
    const auto space = SearchSpace::from_id(id);
    for (const auto& g : sample_genotypes(space, 2, 7)) {
      NetworkOptions no;
      no.channels = 4;
      Rng rng(1);
      auto net = materialize<float>(g, no, rng);
      for (const auto& [name, _] : net->named_parameters()) EXPECT_EQ(name.find("alpha"), std::string::npos) << name;
    }
  }
}

TEST(Compare, IdenticalGenotypesGiveZeroImprovement) {
  auto c = small_config();
  c.train.epochs = 1;
  c.seeds = {0, 1, 2};
  const auto ws = Workspace::open(c);
  const auto g = sample_genotypes(SearchSpace::from_id(c.space), 1, 5).front();
  const auto out = scratch() / "compare";
  const auto r = compare_genotypes(c, ws, g, {g, g, g}, out);
  EXPECT_EQ(r.acer_search, r.acer_random);
  EXPECT_EQ(r.ri, 0.0);
  EXPECT_EQ(r.runs.size(), 6u);
  EXPECT_TRUE(fs::exists(out / "compare.json"));
  EXPECT_TRUE(fs::exists(out / "compare.csv"));
}

TEST(Reproducibility, SameSeedSameGenotypeAndMetrics) {
  auto c = small_config();
  c.seed = 11;
  c.scheme = SearchScheme::dt_meta;
  c.train.epochs = 1;
  const auto ws = Workspace::open(c);
  const auto g1 = search_genotype(c, ws, {});
  const auto g2 = search_genotype(c, ws, {});
  EXPECT_EQ(g1.to_json().dump(), g2.to_json().dump());
  const auto a = retrain_genotype(c, ws, g1, c.seed, {});
  const auto b = retrain_genotype(c, ws, g1, c.seed, {});
  EXPECT_NEAR(a.metrics.rates.acer, b.metrics.rates.acer, 1e-6);
  EXPECT_NEAR(a.metrics.auc, b.metrics.auc, 1e-6);
  EXPECT_NEAR(a.metrics.eer, b.metrics.eer, 1e-6);
  const auto t1 = train_cdn(c, ws, c.seed, {});
  const auto t2 = train_cdn(c, ws, c.seed, {});
  EXPECT_NEAR(t1.metrics.rates.acer, t2.metrics.rates.acer, 1e-6);
  ASSERT_EQ(t1.losses.size(), t2.losses.size());
  for (std::size_t i = 0; i < t1.losses.size(); ++i) EXPECT_NEAR(t1.losses[i], t2.losses[i], 1e-6);
}
