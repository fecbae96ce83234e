#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "dualsr/synthetic.hpp"
#include "dualsr/training.hpp"
#include "test_support.hpp"

using namespace dualsr;

namespace {

InteractionLog planted_log(std::uint64_t seed = 1) { return to_log(generate_planted({}, seed), 6); }

ModelConfig small_model() {
  ModelConfig c;
  c.dim = 8;
  c.layers = 1;
  c.dropout = 0.0;
  return c;
}

TrainConfig quick_train(std::size_t epochs) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.learning_rate = 5e-3;
  t.patience = 0;
  t.seed = 3;
  return t;
}

}  // namespace

TEST_CASE("training windows") {
  TrainConfig cfg;
  CHECK(training_history_slices(split(8), cfg) == std::vector<std::uint32_t>{0, 1, 2, 3, 4});
  cfg.s_min = 2;
  CHECK(training_history_slices(split(8), cfg) == std::vector<std::uint32_t>{2, 3, 4});
  cfg.window = Window::fixed;
  CHECK(training_history_slices(split(8), cfg) == std::vector<std::uint32_t>{4});
  CHECK(training_history_slices(split(4), TrainConfig{}) == std::vector<std::uint32_t>{0});
  CHECK_THROWS_AS(training_history_slices(split(3), TrainConfig{}), ConfigError);
  cfg.window = Window::sliding;
  cfg.s_min = 5;
  CHECK_THROWS_AS(training_history_slices(split(8), cfg), ConfigError);
  CHECK(parse_window(to_string(Window::fixed)) == Window::fixed);
}

TEST_CASE("training examples: counts and negative exclusion") {
  const InteractionLog log = planted_log();
  const SliceSplit sp = split(log);
  TrainConfig cfg;
  cfg.neg_per_pos = 3;
  cfg.batch_size = 64;
  Rng rng(1);
  const auto batches = make_training_batches(log, sp, cfg, rng);

  std::vector<std::set<std::pair<std::uint32_t, std::uint32_t>>> per_slice(log.slice_count);
  for (const auto& it : log.interactions) per_slice[it.slice].emplace(it.user, it.item);
  std::size_t expected_pos = 0;
  for (std::uint32_t s : training_history_slices(sp, cfg)) expected_pos += per_slice[s + 1].size();

  std::size_t pos = 0, neg = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (b + 1 < batches.size()) CHECK(batches[b].size() == 64);
    for (const auto& ex : batches[b]) {
      CHECK(ex.history_end + 1 <= sp.train_last);
      const bool present = per_slice[ex.history_end + 1].count({ex.user, ex.item}) > 0;
      if (ex.label == 1.0) {
        ++pos;
        CHECK(present);
      } else {
        ++neg;
        CHECK(!present);
      }
    }
  }
  CHECK(pos == expected_pos);
  CHECK(neg == 3 * expected_pos);

  Rng again(1);
  CHECK(make_training_batches(log, sp, cfg, again) == batches);
}

TEST_CASE("no positives in the training windows is a configuration error") {
  // Only slices 0 and 4 hold interactions; windows 0..1 target slices 1..2.
  const InteractionLog log = to_log({{"a", "x", 0}, {"a", "y", 4999}}, 5);
  Rng rng(0);
  CHECK_THROWS_AS(make_training_batches(log, split(log), TrainConfig{}, rng), ConfigError);
}

TEST_CASE("binary cross-entropy") {
  const std::vector<double> p{0.5}, y{1.0};
  CHECK(bce_loss(p, y) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const std::vector<double> p2{0.0, 1.0}, y2{1.0, 0.0};
  CHECK(bce_loss(p2, y2) == doctest::Approx(-std::log(1e-12)).epsilon(1e-5));
  const std::vector<double> p3{0.9, 0.2}, y3{1.0, 0.0};
  CHECK(bce_loss(p3, y3) == doctest::Approx(-(std::log(0.9) + std::log(0.8)) / 2.0));
  Tape t;
  CHECK(bce_loss(t.constant(Matrix(2, 1, {0.9, 0.2})), Matrix(2, 1, {1.0, 0.0})).scalar() ==
        doctest::Approx(bce_loss(p3, y3)));
  CHECK_THROWS_AS(bce_loss(std::vector<double>{}, std::vector<double>{}), ContractError);

  Rng rng(3);
  ParameterSet ps;
  ps.add("p", oracle::random_matrix(5, 1, rng, 0.1, 0.9));
  const Matrix labels(5, 1, {1.0, 0.0, 1.0, 1.0, 0.0});
  CHECK(oracle::finite_difference_error(ps, [&](Tape& tp) { return bce_loss(tp.param(ps[0]), labels); }) < 1e-6);
}

TEST_CASE("auxiliary weight") {
  const InteractionLog log = planted_log();
  Model model(small_model(), log.num_users, log.num_items, Rng(2));
  const GraphInputs gi = prepare_graph_inputs(log, model.config());
  const EventTimes ev = extract_event_times(log);
  Rng rng(4);
  const auto batch = make_training_batches(log, split(log), TrainConfig{}, rng)[0];

  auto run = [&](double beta) {
    model.params().clear_grad();
    Tape t;
    BoundParams bp(t, model.params());
    BatchLoss l = batch_loss(bp, model, gi, ev, batch, beta, {});
    t.backward(l.total);
    return std::make_pair(l.total.scalar(), l);
  };
  SUBCASE("beta zero leaves the temporal parameters without gradient") {
    const auto [total, l] = run(0.0);
    CHECK(l.tpp_terms == 0);
    CHECK(total == l.bce);
    for (const auto& p : model.params())
      if (p.name.rfind("tpp.", 0) == 0) CHECK(p.grad.empty());
    CHECK(!model.params().get("emb.user").grad.empty());
  }
  SUBCASE("loss is affine in beta") {
    const auto [t1, l1] = run(0.5);
    const auto [t2, l2] = run(2.0);
    CHECK(l1.tpp_terms > 0);
    CHECK(l1.tpp == doctest::Approx(l2.tpp).epsilon(1e-14));
    CHECK(t1 == doctest::Approx(l1.bce + 0.5 * l1.tpp).epsilon(1e-14));
    CHECK(t2 - t1 == doctest::Approx(1.5 * l1.tpp).epsilon(1e-12));
    CHECK(!model.params().get("tpp.user.w").grad.empty());
  }
}

TEST_CASE("training reduces the loss and restores the best checkpoint") {
  const InteractionLog log = planted_log();
  Model model(small_model(), log.num_users, log.num_items, Rng(0).split("init"));
  const GraphInputs gi = prepare_graph_inputs(log, model.config());
  AdamState opt;
  std::size_t calls = 0;
  const TrainResult r = train(model, log, gi, quick_train(15), opt, {[&](const EpochRecord&) { ++calls; }});
  CHECK(calls == 15);
  REQUIRE(r.epochs.size() == 15);
  CHECK(r.epochs.back().train_bce < r.epochs.front().train_bce);
  CHECK(!r.stopped_early);
  const EvalReport val = evaluate(model, gi, log, split(log).valid_slice, EvalOptions{10, 100, 3});
  CHECK(val.ndcg_at_k == r.best_val_ndcg);
  CHECK(r.epochs[r.best_epoch - 1].val_ndcg10 == r.best_val_ndcg);
  CHECK(opt.step > 0);
}

TEST_CASE("early stopping after patience epochs without improvement") {
  const InteractionLog log = planted_log();
  Model model(small_model(), log.num_users, log.num_items, Rng(1));
  const GraphInputs gi = prepare_graph_inputs(log, model.config());
  TrainConfig cfg = quick_train(60);
  cfg.learning_rate = 1e-9;
  cfg.patience = 2;
  AdamState opt;
  const TrainResult r = train(model, log, gi, cfg, opt);
  CHECK(r.stopped_early);
  CHECK(r.epochs.size() <= r.best_epoch + 2);
}

TEST_CASE("identical seeds give identical training runs") {
  auto run = [] {
    const InteractionLog log = planted_log(5);
    ModelConfig mc = small_model();
    mc.dropout = 0.2;
    Model model(mc, log.num_users, log.num_items, Rng(9));
    const GraphInputs gi = prepare_graph_inputs(log, mc);
    AdamState opt;
    const TrainResult r = train(model, log, gi, quick_train(3), opt);
    std::string lines;
    for (const auto& e : r.epochs) lines += epoch_to_json(e, false) + "\n";
    return std::make_pair(lines, model.params().get("mlp.0.w").value);
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.first.find("seconds") == std::string::npos);
}

TEST_CASE("fixed window trains on the last window only") {
  const InteractionLog log = planted_log();
  TrainConfig cfg;
  cfg.window = Window::fixed;
  Rng rng(0);
  for (const auto& b : make_training_batches(log, split(log), cfg, rng))
    for (const auto& ex : b) CHECK(ex.history_end == log.slice_count - 4);
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  const InteractionLog log = planted_log();
  Model model(small_model(), log.num_users, log.num_items, Rng(1));
  for (double& v : model.params().get("mlp.2.b").value.data) v = std::numeric_limits<double>::quiet_NaN();
  const GraphInputs gi = prepare_graph_inputs(log, model.config());
  AdamState opt;
  try {
    train(model, log, gi, quick_train(1), opt);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("batch") != std::string::npos);
    CHECK(msg.find("mlp.2.b") != std::string::npos);
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.beta = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
