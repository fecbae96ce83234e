#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <regex>
#include <sstream>

#include "test_support.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const std::string& log) {
  const std::string cmd = std::string("'") + DUALSR_CLI_PATH + "' " + args + " > '" + log + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string strip_seconds(const std::string& jsonl) {
  return std::regex_replace(jsonl, std::regex(",\"seconds\":[^}]*"), "");
}

fs::path only_run_dir(const fs::path& output_dir) {
  fs::path found;
  for (const auto& e : fs::directory_iterator(output_dir))
    if (e.is_directory() && e.path().filename().string().rfind("ablate-", 0) != 0) found = e.path();
  return found;
}

}  // namespace

TEST_CASE("end-to-end workflow and exit codes") {
  const fs::path dir = oracle::temp_dir("cli");
  const std::string log = (dir / "out.txt").string();
  const std::string data = (dir / "raw.tsv").string();
  const std::string prepared = (dir / "prepared").string();

  REQUIRE(run("generate --kind planted --seed 4 -o '" + data + "'", log) == 0);
  REQUIRE(run("prepare --input '" + data + "' --slices 6 --min-interactions 1 --out '" + prepared + "'", log) == 0);
  const auto manifest = nlohmann::json::parse(slurp(fs::path(prepared) / "manifest.json"));
  CHECK(manifest["slice_count"] == 6);
  CHECK(manifest["num_users"] == 50);
  const std::string manifest_bytes = slurp(fs::path(prepared) / "manifest.json");
  const std::string bin_bytes = slurp(fs::path(prepared) / "interactions.bin");
  REQUIRE(run("prepare --input '" + data + "' --slices 6 --min-interactions 1 --out '" + prepared + "'", log) == 0);
  CHECK(slurp(fs::path(prepared) / "manifest.json") == manifest_bytes);
  CHECK(slurp(fs::path(prepared) / "interactions.bin") == bin_bytes);

  const fs::path out_a = dir / "runs_a", out_b = dir / "runs_b";
  const std::string cfg = (dir / "run.cfg").string();
  std::ofstream(cfg) << "data_dir = " << prepared << "\nslices = 6\ndim = 4\nlayers = 1\nmax_epochs = 2\n"
                     << "learning_rate = 0.005\ndropout = 0.2\n";

  REQUIRE(run("train -c '" + cfg + "' --set output_dir=" + out_a.string(), log) == 0);
  const fs::path run_a = only_run_dir(out_a);
  for (const char* f : {"config.resolved", "train_log.jsonl", "params.bin", "optimizer.bin"})
    CHECK(fs::exists(run_a / f));
  CHECK(slurp(run_a / "config.resolved").find("dim = 4") != std::string::npos);

  REQUIRE(run("evaluate -c '" + cfg + "' --split test --set output_dir=" + out_a.string(), log) == 0);
  const auto report = nlohmann::json::parse(slurp(run_a / "eval.json"));
  CHECK(report["negatives_per_case"] == 100);
  CHECK(report["num_cases"].get<int>() > 0);
  CHECK(report["checkpoint_id"].get<std::string>().size() == 16);

  SUBCASE("reruns are byte identical apart from timings") {
    REQUIRE(run("train -c '" + cfg + "' --set output_dir=" + out_b.string(), log) == 0);
    const fs::path run_b = only_run_dir(out_b);
    CHECK(run_a.filename() == run_b.filename());
    CHECK(strip_seconds(slurp(run_a / "train_log.jsonl")) == strip_seconds(slurp(run_b / "train_log.jsonl")));
    CHECK(slurp(run_a / "params.bin") == slurp(run_b / "params.bin"));
    CHECK(slurp(run_a / "optimizer.bin") == slurp(run_b / "optimizer.bin"));
  }
  SUBCASE("environment overrides apply between file and --set") {
    setenv("DUALSR_DIM", "5", 1);
    const int code = run("train -c '" + cfg + "' --set output_dir=" + (dir / "env").string(), log);
    unsetenv("DUALSR_DIM");
    REQUIRE(code == 0);
    CHECK(slurp(only_run_dir(dir / "env") / "config.resolved").find("dim = 5") != std::string::npos);
  }
  SUBCASE("ablation table over two variants") {
    const std::string args = "ablate -c '" + cfg + "' --variants full,wo_aux --set output_dir=" + (dir / "abl").string();
    REQUIRE(run(args, log) == 0);
    fs::path table;
    for (const auto& e : fs::directory_iterator(dir / "abl")) table = e.path() / "ablation.csv";
    const std::string first = slurp(table);
    std::istringstream lines(first);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) ++n;
    CHECK(n == 3);
    CHECK(first.find("\nwo_aux,") != std::string::npos);
    REQUIRE(run(args, log) == 0);
    CHECK(slurp(table) == first);
  }
  SUBCASE("configuration errors exit with 1") {
    const std::string bad = (dir / "bad.cfg").string();
    std::ofstream(bad) << "data_dir = " << prepared << "\nslices = 6\nlearning_rat = 0.1\n";
    CHECK(run("train -c '" + bad + "'", log) == 1);
    CHECK(slurp(log).find("learning_rat") != std::string::npos);
    const std::string empty = (dir / "empty.cfg").string();
    std::ofstream(empty).flush();
    CHECK(run("train -c '" + empty + "'", log) == 1);
    CHECK(run("train -c '" + cfg + "' --set slices=7", log) == 1);
    CHECK(run("ablate -c '" + cfg + "' --variants full,bogus", log) == 1);
    CHECK(run("train", log) == 1);
  }
  SUBCASE("numerical failure exits with 2") {
    const fs::path out = dir / "nan";
    CHECK(run("train -c '" + cfg + "' --set learning_rate=1e300 --set clip_norm=1e300 --set output_dir=" +
                  out.string(),
              log) == 2);
    CHECK(fs::exists(only_run_dir(out) / "numerical_abort.txt"));
  }
}

TEST_CASE("gradient check command") {
  const fs::path dir = oracle::temp_dir("cli_grad");
  const std::string log = (dir / "out.txt").string();
  CHECK(run("gradcheck", log) == 0);
  const std::string out = slurp(log);
  for (const char* g : {"emb", "fuse", "slice", "mlp", "tpp"}) CHECK(out.find(g) != std::string::npos);
  CHECK(run("gradcheck --corrupt mlp", log) == 2);
  CHECK(slurp(log).find("FAIL") != std::string::npos);
  CHECK(run("gradcheck --set beta=0", log) == 0);
  CHECK(slurp(log).find("zero-gradient") != std::string::npos);
}
