#include <doctest.h>

#include <map>

#include "dualsr/config.hpp"
#include "dualsr/pipeline.hpp"

using namespace dualsr;

TEST_CASE("parsing key = value lines") {
  const RunConfig c = parse_config("# comment\n dim = 32 \nfusion=concat # trailing\n\nbeta = 1e-2\nwindow = fixed\n"
                                   "slice_rnn = false\n");
  CHECK(c.model.dim == 32);
  CHECK(c.model.fusion == FusionMode::concat);
  CHECK(c.train.beta == 0.01);
  CHECK(c.train.window == Window::fixed);
  CHECK(!c.model.slice_rnn);
  CHECK(c.model.layers == 2);
}

TEST_CASE("bad input names the line") {
  const std::pair<const char*, const char*> bad[] = {
      {"dim = 4\nlearning_rat = 0.1\n", "line 2"},
      {"dim = four\n", "line 1"},
      {"dim 4\n", "line 1"},
      {"\n\ngraph = sideways\n", "line 3"},
      {"slice_rnn = maybe\n", "line 1"},
  };
  for (const auto& [text, where] : bad) {
    CAPTURE(text);
    try {
      parse_config(text);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(where) != std::string::npos);
    }
  }
  CHECK_THROWS_AS(load_config("/nonexistent/dualsr.cfg"), ConfigError);
}

TEST_CASE("environment overrides") {
  std::map<std::string, std::string> env{{"DUALSR_DIM", "12"}, {"DUALSR_LEARNING_RATE", "0.25"}, {"HOME", "/x"}};
  RunConfig c = parse_config("dim = 4\n");
  apply_env_overrides(c, [&](const std::string& k) -> std::optional<std::string> {
    auto it = env.find(k);
    if (it == env.end()) return std::nullopt;
    return it->second;
  });
  CHECK(c.model.dim == 12);
  CHECK(c.train.learning_rate == 0.25);
  env["DUALSR_LAYERS"] = "x";
  CHECK_THROWS_AS(apply_env_overrides(c, [&](const std::string& k) -> std::optional<std::string> {
                    auto it = env.find(k);
                    if (it == env.end()) return std::nullopt;
                    return it->second;
                  }),
                  ConfigError);
}

TEST_CASE("config hash ignores seed and output directory only") {
  RunConfig a;
  RunConfig b = a;
  b.train.seed = 99;
  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.train.beta = 0.5;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(run_directory(a) == "runs/" + config_hash(a) + "-s0");
}

TEST_CASE("resolved config round trips") {
  RunConfig c;
  c.model.dim = 7;
  c.train.learning_rate = 0.1 + 0.2;
  c.model.side = SideMode::item_only;
  c.output_dir = "out dir";
  const RunConfig back = parse_config(resolved_config(c));
  CHECK(resolved_config(back) == resolved_config(c));
  CHECK(back.train.learning_rate == c.train.learning_rate);
  CHECK(config_keys().size() == 30);
  for (const auto& k : config_keys()) CHECK(resolved_config(c).find(k + " = ") != std::string::npos);
}

TEST_CASE("variants and grids") {
  CHECK(variant_names().size() == 13);
  const RunConfig base;
  CHECK(apply_variant(base, "wo_graph").model.graph == GraphMode::none);
  CHECK(!apply_variant(base, "wo_rnn").model.slice_rnn);
  CHECK(apply_variant(base, "wo_aux").train.beta == 0.0);
  CHECK(apply_variant(base, "single_gru").model.fusion == FusionMode::gru_shared);
  try {
    apply_variant(base, "wo_everything");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("last_graph") != std::string::npos);
  }
  const auto betas = grid_runs(base, "beta");
  REQUIRE(betas.size() == 7);
  CHECK(betas.front().second.train.beta == 0.0);
  CHECK(betas.back().second.train.beta == 1.0);
  const auto layers = grid_runs(base, "layers");
  REQUIRE(layers.size() == 5);
  CHECK(layers[4].second.model.layers == 5);
  CHECK_THROWS_AS(grid_runs(base, "dim"), ConfigError);
  CHECK(variant_runs(base, {"full", "concat"}).size() == 2);
}

TEST_CASE("validation") {
  RunConfig c;
  c.slices = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.model.layers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
