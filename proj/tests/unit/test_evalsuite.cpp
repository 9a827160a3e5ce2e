#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "s2s/error.hpp"
#include "s2s/evalsuite.hpp"
#include "s2s/rng.hpp"
#include "s2s/trainer.hpp"

using namespace s2s;
using doctest::Approx;

namespace {

const GeneratedData& data() {
  static const GeneratedData d = [] {
    GeneratorSpec s;
    s.n_train = 8;
    s.n_val = 8;
    s.n_test = 30;
    s.seed = 4;
    return generate(s);
  }();
  return d;
}

Model small_model(std::uint64_t seed = 9) {
  TrainConfig c;
  c.d = 8;
  c.M = 8;
  return Model(model_config_for(c, data().test.header), seed);
}

// Gallery whose embeddings and weights are given directly.
Gallery hand_gallery(const std::vector<std::vector<float>>& weights) {
  Gallery g;
  const std::size_t n = weights.size(), m = weights.front().size();
  std::vector<float> flat;
  for (const auto& w : weights) flat.insert(flat.end(), w.begin(), w.end());
  for (std::size_t k = 0; k < 4; ++k) {
    g.weights[k] = Tensor::matrix(n, m, flat);
    g.embeddings[k] = Tensor::matrix(n, m, flat);
  }
  for (std::size_t i = 0; i < n; ++i) g.ids.push_back("s" + std::to_string(i));
  g.audio_captions.resize(n);
  g.image_captions.assign(n, {1});
  g.metadata.resize(n);
  return g;
}

}  // namespace

TEST_CASE("rank examples and the tie rule") {
  const Tensor G = Tensor::matrix(4, 2, {1, 0, 0, 1, 0.6f, 0.8f, 1, 0});
  const std::vector<float> q = {1, 0};
  CHECK(rank(q, G, 0) == 1);
  // Row 3 ties row 0 and comes later, so it ranks behind it.
  CHECK(rank(q, G, 3) == 2);
  CHECK(rank(q, G, 2) == 3);
  CHECK(rank(q, G, 1) == 4);
  CHECK_THROWS_AS(rank(q, G, 4), UsageError);
  CHECK_THROWS_AS(rank(std::vector<float>{1, 0, 0}, G, 0), UsageError);
  // All-equal scores rank by index.
  const Tensor flat = Tensor::matrix(3, 2, {1, 0, 1, 0, 1, 0});
  for (std::size_t t = 0; t < 3; ++t) CHECK(rank(q, flat, t) == t + 1);
}

TEST_CASE("recall and median examples") {
  const std::vector<std::size_t> ranks = {1, 2, 3, 11, 50, 7, 1, 2, 90, 10};
  // N = 100: cutoff 10.
  CHECK(recall_at_pct(ranks, std::size_t{100}) == Approx(0.7));
  // N = 10: cutoff 1.
  CHECK(recall_at_pct(ranks) == Approx(0.2));
  // Cutoff rounds up: N = 11 gives 2.
  CHECK(recall_at_pct(std::vector<std::size_t>{2, 3}, std::size_t{11}) == Approx(0.5));
  CHECK(median_rank(std::vector<std::size_t>{4, 1, 3, 2}) == 2.0);
  CHECK(median_rank(std::vector<std::size_t>{5, 1, 3}) == 3.0);
  CHECK(median_rank(std::vector<std::size_t>{7}) == 7.0);
  CHECK_THROWS_AS(median_rank(std::vector<std::size_t>{}), UsageError);
  CHECK_THROWS_AS(recall_at_pct(std::vector<std::size_t>{}), UsageError);
}

TEST_CASE("random rankings give chance recall") {
  Rng rng(12);
  const std::size_t n = 200;
  double total = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> ranks(n);
    std::iota(ranks.begin(), ranks.end(), std::size_t{1});
    rng.shuffle(std::span<std::size_t>(ranks));
    // Random permutation: every rank equally likely per query.
    ranks.resize(50);
    total += recall_at_pct(ranks, n);
  }
  CHECK(total / 200 == Approx(0.10).epsilon(0.15));
}

TEST_CASE("composed query examples") {
  const std::vector<double> fa = {1, 0, 0}, fi = {0, 1, 0}, zero = {0, 0, 0}, fc = {0, 0, 1};
  const auto none = composed_query(fa, fc, fi, ComposedMode::none);
  CHECK(none.query == fa);
  CHECK(none.gallery == fi);
  // A zero caption embedding leaves every mode at the plain pair.
  for (auto mode : {ComposedMode::audio, ComposedMode::query}) {
    const auto p = composed_query(fa, zero, fi, mode);
    CHECK(p.query == fa);
    CHECK(p.gallery == fi);
  }
  const auto q = composed_query(fa, fc, fi, ComposedMode::query);
  const double h = std::sqrt(0.5);
  CHECK(q.query[0] == Approx(h));
  CHECK(q.query[2] == Approx(h));
  CHECK(q.gallery[1] == Approx(h));
  CHECK(q.gallery[2] == Approx(h));
  // Collinear caption: normalizing the sum gives back the audio direction.
  const auto col = composed_query(fa, std::vector<double>{2, 0, 0}, fi, ComposedMode::audio);
  CHECK(col.query[0] == Approx(1.0));
  CHECK_THROWS_AS(composed_query(fa, std::vector<double>{1}, fi, ComposedMode::audio), UsageError);
}

TEST_CASE("BLEU examples") {
  const std::vector<int> ref = {1, 2, 3, 4, 5, 6};
  CHECK(bleu(ref, ref) == Approx(1.0));
  std::vector<int> a(10), b(10);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), 100);
  CHECK(bleu(a, b) < 0.05);
  CHECK(bleu(std::vector<int>{}, ref) == 0.0);
  CHECK_THROWS_AS(bleu(ref, std::vector<int>{}), UsageError);
  // "a b c" vs "a b d": unigrams 2/3, bigrams 1/2; the unmatched trigram and the empty 4-gram order are add-one smoothed.
  const std::vector<int> c = {1, 2, 3}, d = {1, 2, 4};
  const double p1 = 2.0 / 3, p2 = 1.0 / 2, p3 = 1.0 / 2, p4 = 1.0 / 1;
  CHECK(bleu(c, d) == Approx(std::pow(p1 * p2 * p3 * p4, 0.25)).epsilon(1e-12));
}

TEST_CASE("BLEU matches the independent oracle") {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    std::vector<int> cand(1 + rng.below(12)), ref(1 + rng.below(12));
    for (auto& x : cand) x = static_cast<int>(rng.below(5));
    for (auto& x : ref) x = static_cast<int>(rng.below(5));
    const bool bp = t % 2 == 0;
    CHECK(bleu(cand, ref, 4, bp) == Approx(oracle::bleu(cand, ref, 4, bp)).epsilon(1e-12));
    const double s = bleu(cand, ref, 4, bp);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0 + 1e-12);
  }
}

TEST_CASE("grouping by top concepts") {
  const auto same = hand_gallery({{0.5f, 0.3f, 0.2f, 0}, {0.6f, 0.3f, 0.1f, 0}, {0.4f, 0.35f, 0.25f, 0}});
  const auto g1 = group_by_concepts(same, 2, 2);
  REQUIRE(g1.size() == 1);
  CHECK(g1[0].concepts == std::vector<std::size_t>{0, 1});
  CHECK(g1[0].ids.size() == 3);
  const auto distinct = hand_gallery({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
  CHECK(group_by_concepts(distinct, 1, 2).empty());
  CHECK(group_by_concepts(distinct, 1, 1).size() == 4);
  // Largest group first.
  const auto mixed = hand_gallery({{0, 1, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0.9f, 0.1f}});
  const auto g3 = group_by_concepts(mixed, 1, 1);
  REQUIRE(g3.size() == 2);
  CHECK(g3[0].concepts == std::vector<std::size_t>{1});
  CHECK(g3[0].ids == std::vector<std::string>{"s0", "s2", "s3"});
  CHECK_THROWS_AS(group_by_concepts(mixed, 0, 1), UsageError);
}

TEST_CASE("gallery embedding is deterministic and null metadata ignores the records") {
  const Model m = small_model();
  const auto a = embed_gallery(data().test, m);
  const auto b = embed_gallery(data().test, m);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(a.embeddings[k].data().size() == b.embeddings[k].data().size());
    CHECK(std::equal(a.embeddings[k].data().begin(), a.embeddings[k].data().end(), b.embeddings[k].data().begin()));
  }
  Dataset moved = data().test;
  for (auto& r : moved.records) {
    r.metadata.month = r.metadata.month % 12 + 1;
    r.metadata.lat = -r.metadata.lat;
  }
  const MetaFlags none{};
  const auto n1 = embed_gallery(data().test, m, none);
  const auto n2 = embed_gallery(moved, m, none);
  const auto& e1 = n1.embedding(Modality::image).data();
  const auto& e2 = n2.embedding(Modality::image).data();
  CHECK(std::equal(e1.begin(), e1.end(), e2.begin()));
  // With metadata present the same change is visible.
  const auto p2 = embed_gallery(moved, m);
  const auto& e3 = a.embedding(Modality::image).data();
  const auto& e4 = p2.embedding(Modality::image).data();
  CHECK_FALSE(std::equal(e3.begin(), e3.end(), e4.begin()));
}

TEST_CASE("ranks are invariant to positive scaling of the query") {
  const auto g = embed_gallery(data().test, small_model());
  const Tensor& audio = g.embedding(Modality::audio);
  for (std::size_t q = 0; q < g.size(); ++q) {
    const auto row = g.embedding(Modality::image).row(q);
    std::vector<float> scaled(row.begin(), row.end());
    for (auto& x : scaled) x *= 4.0f;
    CHECK(rank(row, audio, q) == rank(scaled, audio, q));
  }
}

TEST_CASE("evaluation reports and writers") {
  const auto g = embed_gallery(data().test, small_model());
  const auto r = evaluate(g, Direction::i2t);
  CHECK(r.gallery_size == 30);
  CHECK(r.ranks.size() == 30);
  REQUIRE(r.bleu.has_value());
  CHECK(recall_at_pct(r.ranks, std::size_t{30}) == r.recall_at_10pct);
  const auto j = report_to_json(r);
  CHECK(j.at("direction") == "i2t");
  CHECK(j.at("R@10%").get<double>() == r.recall_at_10pct);
  CHECK(j.at("MedianRank").get<double>() == r.median_rank);
  CHECK(j.contains("BLEU"));
  CHECK_FALSE(report_to_json(evaluate(g, Direction::a2i)).contains("BLEU"));
  std::ostringstream table, csv;
  write_report_table(table, r);
  CHECK(table.str().find("R@10%") != std::string::npos);
  CHECK(table.str().find("MedianRank") != std::string::npos);
  write_ranks_csv(csv, r, g);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "query_index,id,rank");
  std::size_t count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 30);
  CHECK_THROWS_AS(evaluate(g, Direction::t2i, ComposedMode::audio), UsageError);
  CHECK(parse_direction("a2i") == Direction::a2i);
  CHECK_THROWS_AS(parse_direction("x2y"), UsageError);
  CHECK(parse_composed("query") == ComposedMode::query);
}

TEST_CASE("mismatched datasets are rejected") {
  GeneratorSpec s;
  s.n_train = 2;
  s.n_val = 2;
  s.n_test = 2;
  s.audio_dim = 7;
  const auto other = generate(s);
  CHECK_THROWS_AS(embed_gallery(other.test, small_model()), FormatError);
}
