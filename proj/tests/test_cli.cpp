#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "evadekit/cli.hpp"
#include "evadekit/config.hpp"
#include "evadekit/digest.hpp"
#include "evadekit/harness.hpp"
#include "evadekit/model_io.hpp"
#include "evadekit/stats.hpp"

using namespace evadekit;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "evadekit");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream captured;
  auto* old = std::cout.rdbuf(captured.rdbuf());
  std::ostringstream errs;
  auto* old_err = std::cerr.rdbuf(errs.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  std::cerr.rdbuf(old_err);
  return {code, captured.str() + errs.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

fs::path workdir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "evadekit_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json base_config() {
  return json::parse(R"({
    "model": {"path": "model.evk", "architecture": "cnn", "conv1_channels": 4, "conv2_channels": 8,
              "hidden": 16, "init_seed": 3},
    "dataset": {"kind": "synthetic", "classes": 4, "train_count": 400, "test_count": 40},
    "train": {"epochs": 10, "learning_rate": 0.005, "seed": 2, "robust_eval_steps": 5},
    "harness": {"seeds": [0, 1], "epsilons": ["16/255"], "image_count": 10, "output": "records.csv",
                "attack_defaults": {"n_iterations": 20}},
    "attacks": [{"id": "cgd"}, {"id": "apgd", "loss": "md"}]
  })");
}

std::string write_config(const fs::path& dir, const json& cfg, const std::string& name = "config.json") {
  const std::string path = (dir / name).string();
  spit(path, cfg.dump(2));
  return path;
}

double printed(const std::string& out, const std::string& key) {
  const auto pos = out.find(key + "=");
  REQUIRE(pos != std::string::npos);
  return std::stod(out.substr(pos + key.size() + 1));
}

}  // namespace

TEST_CASE("config errors exit with code 2") {
  const fs::path dir = workdir("config");
  CHECK(cli({"train"}).code == kExitConfig);
  CHECK(cli({"train", "--config", (dir / "absent.json").string()}).code == kExitConfig);
  spit((dir / "broken.json").string(), "{ not json");
  CHECK(cli({"train", "--config", (dir / "broken.json").string()}).code == kExitConfig);

  json cfg = base_config();
  cfg["train"]["epochs_typo"] = 3;
  const Run typo = cli({"train", "--config", write_config(dir, cfg)});
  CHECK(typo.code == kExitConfig);
  CHECK(typo.out.find("train.epochs_typo") != std::string::npos);

  cfg = base_config();
  cfg["dataset"] = json{{"kind", "cifar10"}, {"train_files", {"missing.bin"}}, {"test_files", {"missing.bin"}}};
  CHECK(cli({"train", "--config", write_config(dir, cfg)}).code == kExitConfig);

  cfg = base_config();
  cfg["attacks"][0]["loss"] = "cw";
  CHECK(cli({"attack", "--config", write_config(dir, cfg)}).code == kExitConfig);
  CHECK(cli({"attack", "--config", write_config(dir, base_config())}).code == kExitConfig);  // no model yet
  CHECK(cli({"bogus"}).code != kExitOk);
}

TEST_CASE("train writes a model and its manifest") {
  const fs::path dir = workdir("train");
  const std::string config = write_config(dir, base_config());
  const Run r = cli({"train", "--config", config});
  REQUIRE(r.code == kExitOk);
  CHECK(printed(r.out, "train_accuracy") >= 0.95);
  CHECK(fs::exists(dir / "model.evk"));
  const json man = json::parse(slurp((dir / "model.evk.manifest.json").string()));
  CHECK(man.at("command") == "train");
  CHECK(man.at("config_sha256") == sha256_file(config));
  CHECK(man.at("toolkit_version") == kToolkitVersion);

  // replaying the manifest reproduces the model bytes
  const Run again = cli({"train", "--manifest", (dir / "model.evk.manifest.json").string(), "--out",
                         (dir / "replay").string()});
  REQUIRE(again.code == kExitOk);
  CHECK(slurp((dir / "replay" / "model.evk").string()) == slurp((dir / "model.evk").string()));

  // epochs = 0 leaves the seeded initialization untouched
  json zero = base_config();
  zero["train"]["epochs"] = 0;
  zero["model"]["path"] = "init.evk";
  REQUIRE(cli({"train", "--config", write_config(dir, zero, "zero.json")}).code == kExitOk);
  const ToolkitConfig tc = load_config((dir / "zero.json").string());
  CHECK(load_model((dir / "init.evk").string()) == build_model(tc.architecture, {8, 8, 3}, 4));

  // a changed config invalidates the manifest
  spit(config, slurp(config) + " ");
  CHECK(cli({"train", "--manifest", (dir / "model.evk.manifest.json").string()}).code == kExitData);
}

TEST_CASE("attack, stats and report end to end") {
  const fs::path dir = workdir("attack");
  json cfg = base_config();
  cfg["train"]["epochs"] = 3;
  const std::string config = write_config(dir, cfg);
  REQUIRE(cli({"train", "--config", config}).code == kExitOk);

  // one-image smoke run
  json one = cfg;
  one["harness"]["image_count"] = 1;
  one["harness"]["seeds"] = {0};
  one["harness"]["output"] = "one.csv";
  one["attacks"] = json::array({json{{"id", "cgd"}}});
  REQUIRE(cli({"attack", "--config", write_config(dir, one, "one.json")}).code == kExitOk);
  CHECK(read_records((dir / "one.csv").string()).size() == 1);

  const Run first = cli({"attack", "--config", config});
  REQUIRE(first.code == kExitOk);
  const std::string records = (dir / "records.csv").string();
  const std::string bytes = slurp(records);
  CHECK(first.out.find("sha256=" + sha256_hex(bytes)) != std::string::npos);
  CHECK(fs::exists(records + ".manifest.json"));

  // rerun from scratch into another directory: identical bytes, threads do not matter
  setenv("EVADEKIT_THREADS", "2", 1);
  const Run rerun = cli({"attack", "--config", config, "--out", (dir / "rerun").string()});
  unsetenv("EVADEKIT_THREADS");
  REQUIRE(rerun.code == kExitOk);
  CHECK(slurp((dir / "rerun" / "records.csv").string()) == bytes);
  const Run replay = cli({"attack", "--manifest", records + ".manifest.json", "--out", (dir / "replay").string()});
  REQUIRE(replay.code == kExitOk);
  CHECK(slurp((dir / "replay" / "records.csv").string()) == bytes);

  // --seed overrides the seed list
  const Run seeded = cli({"attack", "--config", config, "--seed", "9", "--out", (dir / "seeded").string()});
  REQUIRE(seeded.code == kExitOk);
  for (const auto& r : read_records((dir / "seeded" / "records.csv").string())) CHECK(r.seed == 9);

  // non grid-aligned epsilon warns and proceeds
  json odd = cfg;
  odd["harness"]["epsilons"] = {0.03};
  odd["harness"]["output"] = "odd.csv";
  const Run warned = cli({"attack", "--config", write_config(dir, odd, "odd.json")});
  CHECK(warned.code == kExitOk);
  CHECK(warned.out.find("warning") != std::string::npos);

  // stats over the two attacks of one file matches a direct call
  const auto recs = read_records(records);
  const std::string stats_out = (dir / "stats.json").string();
  REQUIRE(cli({"stats", "--a", records, "--attack-a", "cgd", "--attack-b", "apgd-md", "--m", "2", "--out",
               stats_out})
              .code == kExitOk);
  const json st = json::parse(slurp(stats_out));
  CHECK(st.at("threshold").get<double>() == 0.025);
  const auto& res = st.at("results").at(0);
  const PairedSampleSet set = paired_counts(recs, "cgd", "apgd-md", 16.0 / 255.0);
  try {
    const TestResult direct = wilcoxon_pratt(set, Alternative::greater);
    CHECK(res.at("p_value").get<double>() == direct.p_value);
  } catch (const UndefinedTestError&) {
    CHECK(res.at("verdict") == "undefined");
  }

  // records covering different images -> exit 3
  json other = cfg;
  other["harness"]["image_offset"] = 5;
  other["harness"]["output"] = "shifted.csv";
  REQUIRE(cli({"attack", "--config", write_config(dir, other, "shifted.json")}).code == kExitOk);
  CHECK(cli({"stats", "--a", records, "--attack-a", "cgd", "--b", (dir / "shifted.csv").string(), "--attack-b",
             "cgd"})
            .code == kExitData);

  // report: uniqueness pairs agree with the harness, baseline improvement is 0
  const std::string rep = (dir / "report").string();
  REQUIRE(cli({"report", records, "--out", rep}).code == kExitOk);
  const auto u = uniqueness_matrix(recs, 16.0 / 255.0);
  std::istringstream pairs(slurp(rep + "/uniqueness_pairs.csv"));
  std::string line;
  std::getline(pairs, line);
  CHECK(line == "epsilon,attack_a,attack_b,a_not_b");
  int rows = 0;
  while (std::getline(pairs, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    REQUIRE(f.size() == 4);
    const auto ia = std::find(u.attacks.begin(), u.attacks.end(), f[1]) - u.attacks.begin();
    const auto ib = std::find(u.attacks.begin(), u.attacks.end(), f[2]) - u.attacks.begin();
    CHECK(std::stod(f[3]) == doctest::Approx(u.a_not_b[ia][ib]));
    ++rows;
  }
  CHECK(rows == 2);
  std::istringstream rates(slurp(rep + "/success_rate.csv"));
  std::getline(rates, line);
  std::vector<double> successes, improvements;
  while (std::getline(rates, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    REQUIRE(f.size() == 6);
    successes.push_back(std::stod(f[2]));
    improvements.push_back(std::stod(f[5]));
  }
  REQUIRE(successes.size() == 2);
  CHECK(*std::max_element(successes.begin(), successes.end()) > 0);
  const auto worst = std::min_element(successes.begin(), successes.end()) - successes.begin();
  CHECK(improvements[worst] == 0.0);
  CHECK(*std::min_element(improvements.begin(), improvements.end()) == 0.0);
  CHECK(fs::exists(rep + "/fluctuation_histogram.csv"));
  CHECK(fs::exists(rep + "/report.manifest.json"));

  // single attack: uniqueness files carry only their header
  const std::string rep1 = (dir / "report1").string();
  REQUIRE(cli({"report", (dir / "one.csv").string(), "--out", rep1}).code == kExitOk);
  CHECK(slurp(rep1 + "/uniqueness_pairs.csv") == "epsilon,attack_a,attack_b,a_not_b\n");
  CHECK(slurp(rep1 + "/uniqueness_exclusive.csv") == "epsilon,attack,exclusive\n");
}

TEST_CASE("stats on paired counts") {
  const fs::path dir = workdir("stats");
  std::string dominant = "a,b\n";
  for (int i = 0; i < 40; ++i) dominant += std::to_string(10 + i % 7) + "," + std::to_string(i % 5) + "\n";
  spit((dir / "dom.csv").string(), dominant);
  const Run d = cli({"stats", "--pairs", (dir / "dom.csv").string(), "--m", "16"});
  REQUIRE(d.code == kExitOk);
  const json dj = json::parse(d.out);
  CHECK(dj["results"][0]["verdict"] == "reject");
  CHECK(dj["results"][0]["p_value"].get<double>() < 1e-6);

  spit((dir / "same.csv").string(), "3,3\n4,4\n5,5\n");
  const Run s = cli({"stats", "--pairs", (dir / "same.csv").string()});
  CHECK(s.code == kExitOk);
  CHECK(json::parse(s.out)["results"][0]["verdict"] == "undefined");

  // fixture pair with d = [15, -7, 5, 20, 0]
  spit((dir / "fixture.csv").string(), "20,5\n3,10\n9,4\n25,5\n4,4\n");
  const Run f = cli({"stats", "--pairs", (dir / "fixture.csv").string()});
  REQUIRE(f.code == kExitOk);
  const json fj = json::parse(f.out)["results"][0];
  const TestResult direct = wilcoxon_pratt_differences(std::vector<double>{15, -7, 5, 20, 0}, Alternative::greater);
  CHECK(fj["w_plus"].get<double>() == 11.0);
  CHECK(fj["p_value"].get<double>() == direct.p_value);

  spit((dir / "bad.csv").string(), "1,2\nx,y,z\n");
  CHECK(cli({"stats", "--pairs", (dir / "bad.csv").string()}).code == kExitData);
  CHECK(cli({"stats", "--pairs", (dir / "dom.csv").string(), "--alternative", "up"}).code == kExitConfig);
}

TEST_CASE("selftest passes") { CHECK(cli({"selftest"}).code == kExitOk); }
