#include <cmath>
#include <cstring>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "s2s/error.hpp"
#include "s2s/objective.hpp"
#include "s2s/rng.hpp"

using namespace s2s;
using doctest::Approx;

namespace {

using Rows = std::vector<std::vector<double>>;

Tensor to_tensor(const Rows& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::from_doubles({rows.size(), rows.front().size()}, flat);
}

// Values exactly as the library sees them after float storage.
Rows to_rows(const Tensor& t) {
  Rows out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) out[i].assign(t.row(i).begin(), t.row(i).end());
  return out;
}

Tensor unit_rows(std::size_t b, std::size_t d, unsigned seed) { return to_tensor(oracle::random_unit_rows(b, d, seed)); }

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& order) {
  std::vector<float> v;
  for (auto r : order) v.insert(v.end(), t.row(r).begin(), t.row(r).end());
  return Tensor::matrix(t.rows(), t.cols(), v);
}

BatchEmbeddings random_batch(std::size_t b, std::size_t d, unsigned seed) {
  BatchEmbeddings e;
  e.image = unit_rows(b, d, seed);
  e.audio = unit_rows(b, d, seed + 1);
  e.audio_caption = unit_rows(b, d, seed + 2);
  e.image_caption = unit_rows(b, d, seed + 3);
  e.composed = compose_embeddings(e.audio, e.audio_caption);
  return e;
}

const std::array<double, 5> kTemps = {0.07, 0.1, 0.2, 0.05, 0.5};

}  // namespace

TEST_CASE("infonce examples") {
  CHECK(infonce(unit_rows(1, 4, 1), unit_rows(1, 4, 2), 0.07) == 0.0);
  const Tensor same = Tensor::matrix(3, 2, {1, 0, 1, 0, 1, 0});
  CHECK(infonce(same, same, 0.3) == Approx(std::log(3.0)));
  const Tensor I = Tensor::matrix(2, 2, {1, 0, 0, 1});
  CHECK(infonce(I, I, 1.0) == Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));
  CHECK_THROWS_AS(infonce(I, I, 0.0), UsageError);
  CHECK_THROWS_AS(infonce(I, I, -1.0), UsageError);
  CHECK_THROWS_AS(infonce(I, unit_rows(3, 2, 1), 0.1), UsageError);
}

TEST_CASE("infonce matches the term-by-term oracle, is symmetric and non-negative") {
  for (unsigned s = 0; s < 30; ++s) {
    const Tensor U = unit_rows(2 + s % 5, 6, 10 + s);
    const Tensor V = unit_rows(2 + s % 5, 6, 50 + s);
    const double tau = 0.05 + 0.03 * s;
    const double l = infonce(U, V, tau);
    CHECK(l == Approx(oracle::infonce(to_rows(U), to_rows(V), tau)).epsilon(1e-10));
    CHECK(l == infonce(V, U, tau));
    CHECK(l >= -1e-6);
  }
}

TEST_CASE("pseudo-positive mask examples") {
  const Tensor dominant = Tensor::matrix(3, 3, {1, 0.2, 0.1, 0.3, 1, 0.5, 0, 0, 1});
  for (char m : pseudo_positive_mask(dominant)) CHECK(m == 0);
  const Tensor tie = Tensor::matrix(2, 2, {0.5, 0.5, 0.1, 0.9});
  const auto t = pseudo_positive_mask(tie);
  CHECK(t == std::vector<char>{0, 1, 0, 0});
  const Tensor equal = Tensor::matrix(3, 3, {0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4});
  CHECK(pseudo_positive_mask(equal) == std::vector<char>{0, 1, 1, 1, 0, 1, 1, 1, 0});
  // A margin widens the rule.
  CHECK(pseudo_positive_mask(dominant, 0.75) == std::vector<char>{0, 0, 0, 1, 0, 1, 0, 0, 0});
}

TEST_CASE("augmented loss examples") {
  for (unsigned s = 0; s < 10; ++s) {
    const Tensor U = unit_rows(4, 5, 100 + s);
    const Tensor V = unit_rows(4, 5, 200 + s);
    const double a = augmented_loss(U, V, 0.1, 0.0);
    const double b = infonce(U, V, 0.1);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  }
  // Orthonormal pairs: no off-diagonal similarity reaches the diagonal.
  const Tensor I = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(augmented_loss(I, I, 0.2, 0.1) == Approx(1.1 * infonce(I, I, 0.2)).epsilon(1e-12));
  CHECK_THROWS_AS(augmented_loss(I, I, 0.2, -0.1), UsageError);
}

TEST_CASE("augmented loss matches the brute-force oracle") {
  for (unsigned s = 0; s < 40; ++s) {
    const Tensor U = unit_rows(4, 3, 300 + s);
    const Tensor V = unit_rows(4, 3, 400 + s);
    for (double margin : {0.0, 0.3}) {
      CHECK(augmented_loss(U, V, 0.15, 0.1, margin) ==
            Approx(oracle::augmented(to_rows(U), to_rows(V), 0.15, 0.1, margin)).epsilon(1e-10));
    }
  }
  // Identical rows make every pair a pseudo-positive.
  const Tensor same = Tensor::matrix(3, 2, {0.6f, 0.8f, 0.6f, 0.8f, 0.6f, 0.8f});
  CHECK(augmented_loss(same, same, 0.5, 0.1) ==
        Approx(oracle::augmented(to_rows(same), to_rows(same), 0.5, 0.1)).epsilon(1e-12));
}

TEST_CASE("composed embeddings are re-normalized sums") {
  const Tensor a = Tensor::matrix(1, 2, {1, 0});
  const Tensor c = Tensor::matrix(1, 2, {0, 1});
  const Tensor f = compose_embeddings(a, c);
  CHECK(f.at(0, 0) == Approx(std::sqrt(0.5)));
  CHECK(f.at(0, 1) == Approx(std::sqrt(0.5)));
  const auto b = random_batch(5, 4, 7);
  for (std::size_t i = 0; i < 5; ++i) {
    double n = 0.0;
    for (float x : b.composed.row(i)) n += static_cast<double>(x) * x;
    CHECK(std::sqrt(n) == Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("total loss composes the terms") {
  const auto b = random_batch(4, 5, 11);
  LossOptions opt;
  const auto r = total_loss(b, kTemps, opt);
  auto term = [&](const Tensor& u, const Tensor& v, double tau) {
    return oracle::augmented(to_rows(u), to_rows(v), tau, opt.alpha);
  };
  const double t1 = term(b.image, b.audio, kTemps[0]);
  const double t2 = term(b.image, b.audio_caption, kTemps[1]);
  const double t3 = term(b.audio, b.audio_caption, kTemps[2]);
  const double t4 = term(b.image, b.composed, kTemps[3]);
  const double t5 = term(b.image, b.image_caption, kTemps[4]);
  CHECK(r.total == Approx((t1 + t2 + t3) / 3 + t4 + t5).epsilon(1e-10));
  CHECK(*r.terms[0] == Approx(t1).epsilon(1e-10));
  CHECK(*r.terms[4] == Approx(t5).epsilon(1e-10));
  CHECK(*r.trimodal == Approx((t1 + t2 + t3) / 3).epsilon(1e-10));
}

TEST_CASE("loss flags select the ablation rows") {
  const auto b = random_batch(4, 5, 21);
  LossOptions all;
  const auto full = total_loss(b, kTemps, all);
  const double tri = *full.trimodal;
  const double comp = *full.terms[static_cast<std::size_t>(LossPair::image_composed)];
  const double it = *full.terms[static_cast<std::size_t>(LossPair::image_text)];
  struct Row {
    LossFlags flags;
    double want;
  };
  const Row rows[] = {{{true, false, false}, tri},
                      {{true, false, true}, tri + it},
                      {{true, true, false}, tri + comp},
                      {{true, true, true}, tri + comp + it}};
  for (const auto& row : rows) {
    LossOptions o;
    o.flags = row.flags;
    const auto r = total_loss(b, kTemps, o);
    CHECK(r.total == Approx(row.want).epsilon(1e-12));
    CHECK(r.terms[static_cast<std::size_t>(LossPair::image_composed)].has_value() == row.flags.composed);
    CHECK(r.terms[static_cast<std::size_t>(LossPair::image_text)].has_value() == row.flags.image_text);
  }
  LossOptions none;
  none.flags = {false, false, false};
  CHECK_THROWS_AS(total_loss(b, kTemps, none), UsageError);
  LossOptions tri_only;
  tri_only.flags = {true, false, false};
  CHECK(total_loss(random_batch(1, 5, 3), kTemps, tri_only).total == 0.0);
}

TEST_CASE("permuting the batch leaves the total loss unchanged") {
  Rng rng(5);
  for (unsigned s = 0; s < 10; ++s) {
    const auto b = random_batch(6, 4, 600 + s * 5);
    std::vector<std::size_t> order(6);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    BatchEmbeddings p;
    p.image = permute_rows(b.image, order);
    p.audio = permute_rows(b.audio, order);
    p.audio_caption = permute_rows(b.audio_caption, order);
    p.image_caption = permute_rows(b.image_caption, order);
    p.composed = permute_rows(b.composed, order);
    const LossOptions opt;
    CHECK(std::abs(total_loss(b, kTemps, opt).total - total_loss(p, kTemps, opt).total) < 1e-5);
  }
}

TEST_CASE("learned temperatures are clamped") {
  ModelConfig cfg;
  cfg.audio_dim = 2;
  cfg.image_dim = 2;
  cfg.vocab_size = 3;
  cfg.d = 4;
  cfg.concepts = 4;
  Model m(cfg, 1);
  const auto name = param_names::temperature(LossPair::image_audio);
  {
    ad::Tape tape;
    CHECK(graph::temperature(tape, m, LossPair::image_audio).scalar() == Approx(kInitialTemperature));
  }
  m.params().at(name).value.mutable_data()[0] = 3.0f;
  {
    ad::Tape tape;
    CHECK(graph::temperature(tape, m, LossPair::image_audio).scalar() == kMaxTemperature);
  }
  m.params().at(name).value.mutable_data()[0] = -20.0f;
  {
    ad::Tape tape;
    CHECK(graph::temperature(tape, m, LossPair::image_audio).scalar() == kMinTemperature);
  }
}
