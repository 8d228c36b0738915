#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

#include "error.hpp"
#include "rng.hpp"
#include "synthgen.hpp"
#include "test_util.hpp"
#include "trainer.hpp"

using namespace vpfa;

namespace {

EmbeddingSet tiny_set() {
  return EmbeddingSet(2, {
                             test::record(1, 0, Resolution::hr(), {1, 0}),
                             test::record(1, 1, Resolution::hr(), {3, 0}),
                             test::record(1, 0, Resolution::lr(2), {0, 2}),
                             test::record(1, 1, Resolution::lr(2), {0, 4}),
                             test::record(2, 0, Resolution::hr(), {5, 5}),
                             test::record(2, 1, Resolution::hr(), {7, 7}),
                             test::record(2, 0, Resolution::lr(2), {1, 1}),
                         });
}

SynthConfig train_synth() {
  SynthConfig c;
  c.dim = 16;
  c.num_identities = 40;
  c.samples_per_res = 6;
  c.sigma_proto = 0.3;
  c.sigma_id = 0.05;
  c.sigma_res = 0.02;
  c.shift = {{2, 2.0}};
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("prototype pairs are per-identity means; one-sample identities are skipped") {
  const auto r = build_prototype_pairs(tiny_set());
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.skipped == 1);
  CHECK(r.pairs[0].identity == 1);
  CHECK(r.pairs[0].hr_mean == std::vector<double>{2, 0});
  CHECK(r.pairs[0].lr_mean == std::vector<double>{0, 3});

  const EmbeddingSet lonely(2, {test::record(9, 0, Resolution::hr(), {1, 1}),
                                test::record(9, 0, Resolution::lr(2), {1, 1})});
  CHECK_THROWS_AS(build_prototype_pairs(lonely), Error);
}

TEST_CASE("prototype pairs pool or select LR rates") {
  std::vector<EmbeddingRecord> recs{
      test::record(1, 0, Resolution::hr(), {0}), test::record(1, 0, Resolution::hr(), {2}),
      test::record(1, 0, Resolution::lr(2), {1}), test::record(1, 0, Resolution::lr(2), {3}),
      test::record(1, 0, Resolution::lr(4), {10}), test::record(1, 0, Resolution::lr(4), {20}),
  };
  const EmbeddingSet set(1, recs);
  CHECK(build_prototype_pairs(set).pairs[0].lr_mean[0] == doctest::Approx(8.5));
  CHECK(build_prototype_pairs(set, {2}).pairs[0].lr_mean[0] == doctest::Approx(2.0));
  CHECK(build_prototype_pairs(set, {4}).pairs[0].lr_mean[0] == doctest::Approx(15.0));
}

TEST_CASE("prototype pairs ignore record order") {
  const auto set = generate(train_synth());
  auto recs = set.records();
  Rng rng(3);
  rng.shuffle(std::span(recs));
  const auto a = build_prototype_pairs(set);
  const auto b = build_prototype_pairs(EmbeddingSet(set.dim(), recs));
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs[i].identity == b.pairs[i].identity);
    for (std::size_t k = 0; k < set.dim(); ++k) {
      CHECK(a.pairs[i].hr_mean[k] == doctest::Approx(b.pairs[i].hr_mean[k]).epsilon(1e-12));
      CHECK(a.pairs[i].lr_mean[k] == doctest::Approx(b.pairs[i].lr_mean[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("full-fraction bootstrap reproduces the exact means once per identity") {
  const auto set = generate(train_synth());
  const auto pairs = build_prototype_pairs(set).pairs;
  TrainConfig cfg;
  cfg.bootstrap_fraction = 1.0;
  cfg.num_pairs = pairs.size();
  const auto draws = sample_training_pairs(pairs, set, cfg);
  REQUIRE(draws.size() == pairs.size());
  std::map<std::uint32_t, const PrototypePair*> by_id;
  for (const auto& p : pairs) by_id[p.identity] = &p;
  for (const auto& d : draws) {
    REQUIRE(by_id.count(d.identity) == 1);
    const auto& ref = *by_id[d.identity];
    for (std::size_t k = 0; k < set.dim(); ++k) {
      CHECK(d.hr_mean[k] == doctest::Approx(ref.hr_mean[k]).epsilon(1e-14));
      CHECK(d.lr_mean[k] == doctest::Approx(ref.lr_mean[k]).epsilon(1e-14));
    }
    by_id.erase(d.identity);
  }
  CHECK(by_id.empty());
}

TEST_CASE("bootstrap subsets have ceil(fraction * n) distinct members") {
  // Powers of two make every subset sum unique, so the mean reveals the subset.
  std::vector<EmbeddingRecord> recs;
  for (int j = 0; j < 10; ++j) {
    recs.push_back(test::record(1, 0, Resolution::hr(), {std::ldexp(1.0, j)}));
    recs.push_back(test::record(1, 0, Resolution::lr(2), {std::ldexp(1.0, j)}));
  }
  recs.push_back(test::record(2, 0, Resolution::hr(), {1.0}));
  recs.push_back(test::record(2, 0, Resolution::hr(), {2.0}));
  recs.push_back(test::record(2, 0, Resolution::hr(), {4.0}));
  recs.push_back(test::record(2, 0, Resolution::lr(2), {1.0}));
  recs.push_back(test::record(2, 0, Resolution::lr(2), {2.0}));
  const EmbeddingSet set(1, recs);
  TrainConfig cfg;
  cfg.num_pairs = 200;
  cfg.bootstrap_fraction = 0.45;
  const auto draws = sample_training_pairs(build_prototype_pairs(set).pairs, set, cfg);
  for (const auto& d : draws) {
    if (d.identity == 1) {
      for (double mean : {d.hr_mean[0], d.lr_mean[0]}) {
        const auto bits = static_cast<unsigned>(std::lround(mean * 5));
        CHECK(std::popcount(bits) == 5);
      }
    } else {
      // ceil(0.45 * 3) = 2 of 3 HR; LR has 2 so both are used.
      const auto bits = static_cast<unsigned>(std::lround(d.hr_mean[0] * 2));
      CHECK(std::popcount(bits) == 2);
      CHECK(d.lr_mean[0] == 1.5);
    }
  }
}

TEST_CASE("pair sampling cycles identities evenly and is deterministic") {
  SynthConfig c = train_synth();
  c.num_identities = 751;
  c.samples_per_res = 2;
  c.dim = 4;
  const auto set = generate(c);
  const auto pairs = build_prototype_pairs(set).pairs;
  TrainConfig cfg;
  const auto draws = sample_training_pairs(pairs, set, cfg);
  REQUIRE(draws.size() == 5000);
  std::map<std::uint32_t, int> counts;
  for (const auto& d : draws) ++counts[d.identity];
  CHECK(counts.size() == 751);
  for (const auto& [id, n] : counts) CHECK((n == 6 || n == 7));

  const auto again = sample_training_pairs(pairs, set, cfg);
  bool same = true;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    same = same && draws[i].identity == again[i].identity && draws[i].hr_mean == again[i].hr_mean &&
           draws[i].lr_mean == again[i].lr_mean;
  }
  CHECK(same);
  cfg.seed = 1;
  CHECK(sample_training_pairs(pairs, set, cfg)[0].identity != draws[0].identity);
}

TEST_CASE("vpl loss and gradient") {
  const auto r = vpl_loss(std::vector<double>{1, 2, 3}, std::vector<double>{1, 0, 0});
  CHECK(r.loss == doctest::Approx(13.0));
  CHECK(r.grad == std::vector<double>{0, 4, 6});
  CHECK(vpl_loss(std::vector<double>{1.5, -2}, std::vector<double>{1.5, -2}).loss == 0.0);
  CHECK_THROWS_AS(vpl_loss(std::vector<double>{1}, std::vector<double>{1, 2}), Error);

  Rng rng(8);
  const auto p = test::random_vector(rng, 6);
  const auto t = test::random_vector(rng, 6);
  const auto g = vpl_loss(p, t).grad;
  for (std::size_t k = 0; k < 6; ++k) {
    auto up = p, down = p;
    up[k] += 1e-6;
    down[k] -= 1e-6;
    const double num = (vpl_loss(up, t).loss - vpl_loss(down, t).loss) / 2e-6;
    CHECK(g[k] == doctest::Approx(num).epsilon(1e-6));
  }
}

TEST_CASE("loss decomposes by the law of cosines") {
  Rng rng(9);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = test::random_vector(rng, 16, 2.0);
    const auto t = test::random_vector(rng, 16, 0.5);
    const double l = vpl_loss(p, t).loss;
    worst = std::max(worst, law_of_cosines_check(p, t) / std::max(1.0, l));
  }
  CHECK(worst < 1e-10);
  CHECK_THROWS_AS(law_of_cosines_check(std::vector<double>{0, 0}, std::vector<double>{1, 0}), Error);
}

TEST_CASE("adam") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  std::vector<double> p{1.0, -1.0}, m(2, 0.0), v(2, 0.0);
  adam_step(p, std::vector<double>{0.0, 0.0}, m, v, cfg, 1);
  CHECK(p == std::vector<double>{1.0, -1.0});

  std::vector<double> q{1.0}, mq(1, 0.0), vq(1, 0.0);
  adam_step(q, std::vector<double>{1.0}, mq, vq, cfg, 1);
  CHECK(q[0] == doctest::Approx(1.0 - cfg.learning_rate / (1.0 + cfg.eps)).epsilon(1e-15));
  CHECK_THROWS_AS(adam_step(q, std::vector<double>{1.0}, mq, vq, cfg, 0), Error);
  CHECK_THROWS_AS(adam_step(q, std::vector<double>{1.0, 2.0}, mq, vq, cfg, 1), Error);

  // f = theta^2 / 2, decay 0.01, lr 0.1, ten steps; reference from a separate script.
  AdamConfig quad;
  quad.learning_rate = 0.1;
  quad.weight_decay = 0.01;
  std::vector<double> th{1.0, -2.0, 0.5}, m3(3, 0.0), v3(3, 0.0);
  for (std::size_t t = 1; t <= 10; ++t) adam_step(th, std::vector<double>(th), m3, v3, quad, t);
  const double ref[3] = {0.07624916052049104, -1.0245868404204317, -0.2033228231172053};
  for (int i = 0; i < 3; ++i) CHECK(th[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("adam on whole parameter sets") {
  auto p = init_params(3, 2, 0.5, 1);
  const auto before = p;
  auto state = AdamState::for_params(p);
  adam_step(p, VPParams::zeros(3, 2), state, AdamConfig{0.1, 0.0});
  CHECK(p == before);
  CHECK(state.step == 1);
}

TEST_CASE("zero epochs returns the initial parameters") {
  const auto set = generate(train_synth());
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.num_pairs = 50;
  const auto r = train(set, NetConfig{8, 1e-3, 4}, cfg);
  CHECK(r.params == init_params(16, 8, 1e-3, 4));
  CHECK(r.log.epoch_loss.empty());
  CHECK(r.identities_used == 40);
}

TEST_CASE("training reduces the loss and is reproducible") {
  const auto set = generate(train_synth());
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.num_pairs = 400;
  cfg.learning_rate = 1e-3;
  const NetConfig net{16, 1e-3, 0};
  const auto a = train(set, net, cfg);
  REQUIRE(a.log.epoch_loss.size() == 20);
  CHECK(a.log.steps == 20 * 13);
  CHECK(a.log.epoch_loss.back() < 0.5 * a.log.epoch_loss.front());
  const auto b = train(set, net, cfg);
  CHECK(a.params == b.params);
  CHECK(a.log.epoch_loss == b.log.epoch_loss);
  CHECK(train_log_csv(a.log).rfind("epoch,mean_loss\n1,", 0) == 0);
}

TEST_CASE("training config validation") {
  const auto set = generate(train_synth());
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(set, NetConfig{}, cfg), Error);
  cfg = TrainConfig{};
  cfg.bootstrap_fraction = 0.0;
  CHECK_THROWS_AS(train(set, NetConfig{}, cfg), Error);
  cfg = TrainConfig{};
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(train(set, NetConfig{}, cfg), Error);
}
