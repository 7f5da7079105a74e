#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "anyshot/cli.hpp"

using namespace anyshot;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run(const std::vector<std::string>& args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli_run(args, out, err);
  if (out_text) *out_text = out.str() + err.str();
  return code;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

// Small, fast experiment overrides shared by the CLI tests.
std::vector<std::string> small_overrides() {
  return {
      "--set", "classes_seen=5",  "--set", "classes_few=2",
      "--set", "classes_unseen=2", "--set", "embed_dim=8",
      "--set", "feature_dim=10",  "--set", "grid=4",
      "--set", "scenes_train=8",  "--set", "scenes_finetune=6",
      "--set", "scenes_test=6",   "--set", "shots=2",
      "--set", "epochs_base=4",   "--set", "epochs_ft=2",
      "--set", "vocab_size=8",
  };
}

std::vector<std::string> with_common(std::vector<std::string> args,
                                     const fs::path& out) {
  auto extra = small_overrides();
  args.insert(args.end(), extra.begin(), extra.end());
  args.push_back("--out");
  args.push_back(out.string());
  return args;
}

}  // namespace

TEST_CASE("synth is deterministic and self-describing") {
  const fs::path dir_a = temp_dir("anyshot_cli_synth_a");
  const fs::path dir_b = temp_dir("anyshot_cli_synth_b");
  std::string text;
  CHECK(run(with_common({"synth", "--seed", "7"}, dir_a), &text) == 0);
  CHECK(text.find("S=5 F=2 U=2") != std::string::npos);
  CHECK(run(with_common({"synth", "--seed", "7"}, dir_b)) == 0);
  for (const char* name : {"world.json", "bundle.json", "train.scenes",
                           "finetune.scenes", "test.scenes"})
    CHECK(slurp(dir_a / name) == slurp(dir_b / name));
}

TEST_CASE("synth reports the zero-shot configuration") {
  const fs::path dir = temp_dir("anyshot_cli_synth_zsd");
  auto args = with_common({"synth", "--seed", "3"}, dir);
  args.push_back("--set");
  args.push_back("classes_few=0");
  std::string text;
  CHECK(run(args, &text) == 0);
  CHECK(text.find("ZSD") != std::string::npos);
  CHECK(slurp(dir / "finetune.scenes").empty());
}

TEST_CASE("synth counts few-shot boxes: 8 classes x 5 shots = 40") {
  const fs::path dir = temp_dir("anyshot_cli_synth_40");
  auto args = with_common({"synth", "--seed", "4"}, dir);
  for (const char* kv : {"classes_few=8", "shots=5", "scenes_finetune=20"}) {
    args.push_back("--set");
    args.push_back(kv);
  }
  CHECK(run(args) == 0);
  std::istringstream scenes(slurp(dir / "finetune.scenes"));
  std::string line;
  std::size_t few_boxes = 0;
  while (std::getline(scenes, line)) {
    std::istringstream ls(line);
    std::string kind;
    int cls;
    if (ls >> kind >> cls && kind == "object" && cls >= 5 && cls < 13) ++few_boxes;
  }
  CHECK(few_boxes == 40);
}

TEST_CASE("train, fine-tune and eval pipeline") {
  const fs::path dir = temp_dir("anyshot_cli_pipe");

  SUBCASE("fine-tune before train-base fails cleanly") {
    CHECK(run(with_common({"synth", "--seed", "9"}, dir)) == 0);
    std::string text;
    CHECK(run(with_common({"fine-tune", "--seed", "9"}, dir), &text) != 0);
    CHECK(text.find("train-base") != std::string::npos);
  }

  SUBCASE("full pipeline with deterministic reruns") {
    REQUIRE(run(with_common({"synth", "--seed", "9"}, dir)) == 0);
    REQUIRE(run(with_common({"train-base", "--seed", "9"}, dir)) == 0);
    const std::string base_ckpt = slurp(dir / "base_checkpoint.json");
    REQUIRE(run(with_common({"fine-tune", "--seed", "9"}, dir)) == 0);
    const std::string ft_ckpt = slurp(dir / "finetune_checkpoint.json");
    REQUIRE(run(with_common({"eval", "--seed", "9", "--mode", "GASD"}, dir)) == 0);
    const std::string report = slurp(dir / "eval_GASD.json");
    const std::string csv = slurp(dir / "eval_GASD.csv");

    // CSV row values match the JSON export.
    const auto j = nlohmann::json::parse(report);
    char cell[32];
    std::snprintf(cell, sizeof(cell), "%.2f", j.at("harmonic_mean").get<double>());
    CHECK(csv.find(cell) != std::string::npos);

    // Re-running the whole pipeline reproduces every artifact byte for byte.
    REQUIRE(run(with_common({"train-base", "--seed", "9"}, dir)) == 0);
    CHECK(slurp(dir / "base_checkpoint.json") == base_ckpt);
    REQUIRE(run(with_common({"fine-tune", "--seed", "9"}, dir)) == 0);
    CHECK(slurp(dir / "finetune_checkpoint.json") == ft_ckpt);
    REQUIRE(run(with_common({"eval", "--seed", "9", "--mode", "GASD"}, dir)) == 0);
    CHECK(slurp(dir / "eval_GASD.json") == report);
    CHECK(slurp(dir / "eval_GASD.csv") == csv);

    // Non-generalized mode also works and detections are exported.
    REQUIRE(run(with_common({"eval", "--seed", "9", "--mode", "ASD"}, dir)) == 0);
    CHECK(slurp(dir / "detections_ASD.csv").rfind("scene_id,", 0) == 0);
  }

  SUBCASE("eval rejects a mode the split cannot support") {
    auto args = with_common({"synth", "--seed", "9"}, dir);
    args.push_back("--set");
    args.push_back("classes_unseen=0");
    REQUIRE(run(args) == 0);
    REQUIRE(run(with_common({"train-base", "--seed", "9"},  dir)) == 0);
    std::string text;
    CHECK(run(with_common({"eval", "--seed", "9", "--mode", "GASD"}, dir), &text) != 0);
    CHECK(text.find("error") != std::string::npos);
  }
}

TEST_CASE("grad-check passes and the corrupted hook is caught") {
  const fs::path dir = temp_dir("anyshot_cli_gradcheck");
  std::string text;
  CHECK(run({"grad-check", "--out", dir.string()}, &text) == 0);
  CHECK(text.find("PASS") != std::string::npos);
  CHECK(slurp(dir / "gradcheck.csv").rfind("p,p_star,beta", 0) == 0);
  CHECK(run({"grad-check", "--out", dir.string(), "--corrupt"}, &text) != 0);
  CHECK(text.find("FAIL") != std::string::npos);
}

TEST_CASE("loss-curve emits the documented csv family") {
  const fs::path dir = temp_dir("anyshot_cli_curves");
  CHECK(run({"loss-curve", "--out", dir.string()}, nullptr) == 0);
  const std::string ce = slurp(dir / "loss_curve_beta0_pstar1.0.csv");
  CHECK(ce.rfind("p,loss,grad\n", 0) == 0);
  // The beta=0 curve is cross-entropy: spot-check the p=0.5 midpoint row.
  CHECK(ce.find("0.500000000,0.693147181,-2.000000000") != std::string::npos);
  for (const char* name :
       {"loss_curve_beta1_pstar1.0.csv", "loss_curve_beta2_pstar1.0.csv",
        "loss_curve_beta5_pstar1.0.csv", "loss_curve_pstar0.5.csv",
        "loss_curve_dynamic.csv"})
    CHECK(fs::exists(dir / name));
}

TEST_CASE("sweep produces one row per beta") {
  const fs::path dir = temp_dir("anyshot_cli_sweep");
  auto args = with_common({"sweep", "--seed", "5"}, dir);
  for (const char* kv :
       {"sweep_betas=5", "sweep_lambdas=0.1", "seeds=5", "epochs_base=2",
        "epochs_ft=1", "scenes_test=4"}) {
    args.push_back("--set");
    args.push_back(kv);
  }
  CHECK(run(args) == 0);
  const std::string csv = slurp(dir / "sweep.csv");
  CHECK(csv.rfind("beta\\lambda,0.1\n", 0) == 0);
  CHECK(csv.find("\n5,") != std::string::npos);
}

TEST_CASE("synth can build the world from loaded word vectors") {
  const fs::path dir = temp_dir("anyshot_cli_wordvec");
  fs::create_directories(dir);
  const fs::path classes = dir / "classes.txt";
  const fs::path vectors = dir / "vectors.txt";
  {
    std::ofstream c(classes);
    c << "cat seen\ndog seen\ncar seen\nbus few\nzebra unseen\n";
    std::ofstream v(vectors);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const char* name : {"cat", "dog", "car", "bus", "zebra"}) {
      v << name;
      for (int i = 0; i < 8; ++i) v << " " << u(rng);
      v << "\n";
    }
  }
  auto args = with_common({"synth", "--seed", "11"}, dir / "out");
  const std::vector<std::string> extra = {
      "class_list=" + classes.string(), "word_vectors=" + vectors.string(),
      "embed_dim=8", "classes_few=1", "classes_unseen=1", "shots=2"};
  for (const auto& kv : extra) {
    args.push_back("--set");
    args.push_back(kv);
  }
  std::string text;
  CHECK(run(args, &text) == 0);
  CHECK(text.find("S=3 F=1 U=1") != std::string::npos);
  const auto world = nlohmann::json::parse(slurp(dir / "out" / "world.json"));
  CHECK(world.at("class_names").size() == 5);
  CHECK(world.at("class_names")[0] == "cat");
  CHECK(world.at("partition")[4] == "unseen");
}

TEST_CASE("unknown arguments fail with a message") {
  std::string text;
  CHECK(run({"bogus-command"}, &text) != 0);
  CHECK(!text.empty());
}
