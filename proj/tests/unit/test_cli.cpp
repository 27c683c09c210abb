#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "sarank/cli.hpp"

using namespace sarank;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sarank_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config_in.json";
  std::ofstream(p) << j.dump();
  return p;
}

Run lab(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

Run lab_with(const fs::path& dir, const std::string& command, const json& cfg,
             std::vector<std::string> extra = {}) {
  std::vector<std::string> args{command, "--config", write_config(dir, cfg).string(), "--out",
                                (dir / "out").string()};
  args.insert(args.end(), extra.begin(), extra.end());
  return lab(args);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("generate writes datasets, manifests and resolved configs") {
  const auto dir = scratch("generate");
  auto r = lab_with(dir, "generate", {{"generator", "synonym"}, {"n_pairs", 100}, {"seed", 1}});
  REQUIRE(r.code == kExitOk);
  CHECK(line_count(dir / "out" / "dataset.jsonl") == 100);
  const auto manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["generator"] == "synonym");
  CHECK(manifest["seed"] == 1);
  CHECK(fs::exists(dir / "out" / "config.json"));

  r = lab_with(dir, "generate", {{"generator", "bt"}, {"contexts", 3}, {"responses_per_context", 4}});
  REQUIRE(r.code == kExitOk);
  CHECK(line_count(dir / "out" / "dataset.jsonl") == 18);
  CHECK(fs::exists(dir / "out" / "latents.jsonl"));

  const auto first = slurp(dir / "out" / "dataset.jsonl");
  lab_with(dir, "generate", {{"generator", "bt"}, {"contexts", 3}, {"responses_per_context", 4}});
  CHECK(slurp(dir / "out" / "dataset.jsonl") == first);

  r = lab_with(dir, "generate", {{"generator", "bt"}}, {"--set", "contexts=2", "--seed", "9"});
  REQUIRE(r.code == kExitOk);
  CHECK(line_count(dir / "out" / "dataset.jsonl") == 12);
  CHECK(json::parse(slurp(dir / "out" / "config.json"))["seed"] == 9);
}

TEST_CASE("configuration errors exit 2") {
  const auto dir = scratch("config_errors");
  CHECK(lab_with(dir, "generate", {{"generator", "nope"}}).code == kExitConfig);
  CHECK(lab_with(dir, "generate", {{"generator", "synonym"}, {"typo", 1}}).code == kExitConfig);
  CHECK(lab_with(dir, "generate", {{"generator", "synonym"}, {"n_pairs", 0}}).code == kExitConfig);
  CHECK(lab_with(dir, "train", {{"experiment", "custom"}}).code == kExitConfig);
  CHECK(lab_with(dir, "verify", {{"check", "unknown"}}).code == kExitConfig);
  CHECK(lab_with(dir, "profile", {{"gammas", json::array()}}).code == kExitConfig);
  CHECK(lab({"bogus"}).code == kExitConfig);
  CHECK(lab({"generate"}).code == kExitConfig);
  std::ofstream(dir / "broken.json") << "{not json";
  CHECK(lab({"generate", "--config", (dir / "broken.json").string(), "--out", dir.string()}).code ==
        kExitConfig);
  // No output directory anywhere.
  CHECK(lab({"generate", "--config", write_config(dir, {{"generator", "synonym"}}).string()}).code ==
        kExitConfig);
  // Witness-invalid bounded loss.
  CHECK(lab_with(dir, "verify", {{"check", "tightness"}, {"loss", {{"family", "mae"}}}, {"gamma", 10},
                                 {"U", 12}})
            .code == kExitConfig);
}

TEST_CASE("IO errors exit 3") {
  const auto dir = scratch("io_errors");
  CHECK(lab({"generate", "--config", (dir / "missing.json").string(), "--out", dir.string()}).code ==
        kExitIo);
  CHECK(lab_with(dir, "train", {{"experiment", "custom"}, {"dataset", (dir / "none.jsonl").string()}}).code ==
        kExitIo);
  std::ofstream(dir / "a_file") << "x";
  const auto cfg = write_config(dir, {{"generator", "synonym"}});
  CHECK(lab({"generate", "--config", cfg.string(), "--out", (dir / "a_file" / "sub").string()}).code ==
        kExitIo);
}

TEST_CASE("custom training writes trace, checkpoint and summary") {
  const auto dir = scratch("train_custom");
  REQUIRE(lab_with(dir, "generate", {{"generator", "bt"}, {"contexts", 2}, {"responses_per_context", 3}})
              .code == kExitOk);
  const auto data = (dir / "data.jsonl").string();
  fs::copy_file(dir / "out" / "dataset.jsonl", data);
  const json cfg = {{"experiment", "custom"},
                    {"dataset", data},
                    {"loss", {{"family", "logistic"}, {"beta", 1.0}}},
                    {"margin", {{"kind", "uniform"}, {"gamma", 0.5}}},
                    {"optimizer", {{"step_size", 0.1}, {"max_steps", 50}}}};
  auto r = lab_with(dir, "train", cfg);
  REQUIRE(r.code == kExitOk);
  const auto trace = slurp(dir / "out" / "traces" / "train.csv");
  CHECK(trace.rfind("step,surrogate_risk,target_risk,pairwise_accuracy,min_signed_margin\n", 0) == 0);
  CHECK(line_count(dir / "out" / "traces" / "train.csv") == 51);
  CHECK(fs::exists(dir / "out" / "reports" / "model.json"));
  const auto summary = json::parse(slurp(dir / "out" / "reports" / "summary.json"));
  CHECK(summary.contains("risk_report"));
  REQUIRE(lab_with(dir, "train", cfg).code == kExitOk);
  CHECK(slurp(dir / "out" / "traces" / "train.csv") == trace);

  json diverging = cfg;
  diverging["loss"] = {{"family", "squared_ipo"}};
  diverging["optimizer"] = {{"step_size", 1e6}, {"momentum", 0.99}, {"max_steps", 200}};
  r = lab_with(dir, "train", diverging);
  CHECK(r.code == kExitDivergence);
  CHECK(r.err.find("step") != std::string::npos);

  json unknown = cfg;
  unknown["optimizer"] = {{"lr", 0.1}};
  CHECK(lab_with(dir, "train", unknown).code == kExitConfig);
}

TEST_CASE("packaged experiments") {
  const auto dir = scratch("experiments");
  auto r = lab_with(dir, "train", {{"experiment", "synonym"}, {"seeds", {1, 2}}});
  REQUIRE(r.code == kExitOk);
  auto summary = json::parse(slurp(dir / "out" / "reports" / "summary.json"));
  CHECK(summary["sa_final_loss_lt_fixed_final_loss"] == true);
  CHECK(fs::exists(dir / "out" / "traces" / "seed_1"));

  r = lab_with(dir, "train", {{"experiment", "capacity"}, {"seeds", {1}}});
  REQUIRE(r.code == kExitOk);
  summary = json::parse(slurp(dir / "out" / "reports" / "summary.json"));
  CHECK(summary["accuracy_ordered"] == true);
  CHECK(summary["runs"][0].contains("accuracy_logistic_poly2_poly3"));
  CHECK(summary["runs"][0]["accuracy_logistic_poly2_poly3"].size() == 3);
}

TEST_CASE("verify checks pass and fail with the right codes") {
  const auto dir = scratch("verify");
  for (const char* check : {"tightness", "negative", "scaling", "bt_minimizability", "capacity_gap"}) {
    const auto r = lab_with(dir, "verify", {{"check", check}});
    INFO(check << ": " << r.err);
    CHECK(r.code == kExitOk);
    CHECK(json::parse(slurp(dir / "out" / "reports" / "summary.json"))["passed"] == true);
    CHECK(fs::exists(dir / "out" / "reports" / (std::string(check) + ".csv")));
  }
  for (const char* check : {"shifted", "structure_aware", "hard_margin"}) {
    const auto r = lab_with(dir, "verify", {{"check", check}, {"cases", 100}});
    INFO(check << ": " << r.err);
    CHECK(r.code == kExitOk);
  }
  const auto halved = lab_with(dir, "verify", {{"check", "shifted"}, {"cases", 100}}, {"--debug-halve-coefficient"});
  CHECK(halved.code == kExitVerification);
  CHECK(json::parse(slurp(dir / "out" / "reports" / "summary.json"))["passed"] == false);
}

TEST_CASE("profile command") {
  const auto dir = scratch("profile");
  const auto r = lab_with(dir, "profile", {{"K", 1.0}, {"gamma_grid", {{"start", 1.5}, {"stop", 10}, {"step", 0.5}}}},
                          {"--svg"});
  REQUIRE(r.code == kExitOk);
  const auto csv = slurp(dir / "out" / "reports" / "profile.csv");
  CHECK(csv.rfind("family,param,gamma,K,rho,note\n", 0) == 0);
  CHECK(line_count(dir / "out" / "reports" / "profile.csv") == 1 + 6 * 18);
  CHECK(fs::exists(dir / "out" / "reports" / "profile.svg"));
  CHECK(fs::exists(dir / "out" / "reports" / "profile_wide.csv"));
  CHECK(lab({"--help"}).code == kExitOk);
}
