#include "doctest.h"
#include "oracles.hpp"

#include "specbias/analysis.hpp"

using namespace specbias;

namespace {

std::vector<PathAggregate> profile(const std::vector<double>& hf) {
  std::vector<PathAggregate> out;
  for (std::size_t c = 0; c < hf.size(); ++c) out.push_back({"within:" + std::to_string(c), hf[c], 0.0, 10});
  return out;
}

// One scored example per class with the given score.
CScoreTable per_class_scores(const std::vector<double>& s) {
  std::map<std::int64_t, double> scores;
  std::map<std::int64_t, int> labels;
  for (std::size_t c = 0; c < s.size(); ++c) {
    scores[std::int64_t(c)] = s[c];
    labels[std::int64_t(c)] = int(c);
  }
  return make_cscore_table(scores, labels, int(s.size()));
}

}  // namespace

TEST_CASE("C-score tables") {
  const auto dir = oracle::scratch_dir("cscores");
  const std::map<std::int64_t, int> labels{{10, 0}, {11, 0}, {12, 1}};
  {
    std::ofstream out(dir / "a.csv");
    out << "example_id,score\n10,0.2\n11,0.4\n12,0.9\n";
  }
  const auto t = load_cscores(dir / "a.csv", labels, 2);
  CHECK(t.per_class[0].mean == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(t.per_class[1].mean == 0.9);
  CHECK(t.per_class[0].std == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(t.per_class[0].count == 2);

  {
    std::ofstream out(dir / "ones.csv");
    out << "example_id,score\n10,1\n11,1\n12,1.0\n";
  }
  const auto ones = load_cscores(dir / "ones.csv", labels, 2);
  for (const auto& c : ones.per_class) {
    CHECK(c.mean == 1.0);
    CHECK(c.std == 0.0);
  }

  std::ofstream(dir / "range.csv") << "example_id,score\n10,1.5\n";
  CHECK_THROWS_AS(load_cscores(dir / "range.csv", labels, 2), Error);
  std::ofstream(dir / "unknown.csv") << "example_id,score\n99,0.5\n";
  CHECK_THROWS_AS(load_cscores(dir / "unknown.csv", labels, 2), Error);
  std::ofstream(dir / "dup.csv") << "example_id,score\n10,0.5\n10,0.6\n";
  CHECK_THROWS_AS(load_cscores(dir / "dup.csv", labels, 2), Error);
  std::ofstream(dir / "header.csv") << "id,score\n10,0.5\n";
  CHECK_THROWS_AS(load_cscores(dir / "header.csv", labels, 2), Error);
}

TEST_CASE("per-class summaries match brute force") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::map<std::int64_t, double> scores;
  std::map<std::int64_t, int> labels;
  std::vector<std::vector<double>> raw(4);
  for (int i = 0; i < 200; ++i) {
    const double s = u(rng);
    scores[i] = s;
    labels[i] = i % 4;
    raw[std::size_t(i % 4)].push_back(s);
  }
  const auto t = make_cscore_table(scores, labels, 4);
  for (int c = 0; c < 4; ++c) {
    double sum = 0.0;
    for (double s : raw[std::size_t(c)]) sum += s;
    CHECK(std::abs(t.per_class[std::size_t(c)].mean - sum / 50.0) < 1e-12);
  }
}

TEST_CASE("average ranks") {
  Vector v(5);
  v << 3.0, 1.0, 3.0, 2.0, 5.0;
  Vector expected(5);
  expected << 3.5, 1.0, 3.5, 2.0, 5.0;
  CHECK(average_ranks(v) == expected);
}

TEST_CASE("spearman") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  Vector x(12);
  for (auto& e : x) e = g(rng);
  CHECK(spearman(x, x).rho == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(spearman(x, Vector(-x)).rho == doctest::Approx(-1.0).epsilon(1e-15));

  Vector a(5), b(5), c(5);
  a << 1, 2, 3, 4, 5;
  b << 2, 1, 3, 5, 4;  // sum d^2 = 4
  c << 2, 1, 4, 5, 3;  // sum d^2 = 8
  CHECK(spearman(a, b).rho == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(spearman(a, c).rho == doctest::Approx(0.6).epsilon(1e-15));

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xs(9), ys(9);
    for (auto& e : xs) e = g(rng);
    for (auto& e : ys) e = g(rng);
    const double expect = oracle::spearman_no_ties(xs, ys);
    CHECK(std::abs(spearman(Eigen::Map<Vector>(xs.data(), 9), Eigen::Map<Vector>(ys.data(), 9)).rho - expect) <
          1e-12);
  }

  const auto flat = spearman(a, Vector::Constant(5, 0.3));
  CHECK(flat.degenerate);
  CHECK(flat.rho == 0.0);
}

TEST_CASE("correlate_coherence") {
  const auto dec = correlate_coherence(profile({0.5, 0.4, 0.3, 0.2, 0.1}),
                                       per_class_scores({0.1, 0.2, 0.3, 0.4, 0.5}));
  CHECK(dec.spearman.rho == doctest::Approx(-1.0).epsilon(1e-15));
  REQUIRE(dec.table.size() == 5);
  CHECK(dec.table[2].cls == 2);
  CHECK(dec.table[2].mean_cscore == 0.3);
  CHECK(dec.table[2].hf_within == 0.3);

  const auto same = correlate_coherence(profile({0.2, 0.2, 0.2}), per_class_scores({0.1, 0.5, 0.9}));
  CHECK(same.spearman.degenerate);
  CHECK(same.spearman.rho == 0.0);

  CHECK_THROWS_AS(correlate_coherence(profile({0.1, 0.2}), per_class_scores({0.1, 0.2})), Error);
  CHECK_THROWS_AS(correlate_coherence(profile({0.1, 0.2, 0.3}), per_class_scores({0.1, 0.2, 0.3, 0.4})),
                  Error);

  const auto dir = oracle::scratch_dir("coherence");
  write_coherence_csv(dec, dir / "c.csv");
  const std::string text = oracle::read_file(dir / "c.csv");
  CHECK(text.rfind("class,mean_cscore,std_cscore,hf_within\n0,", 0) == 0);
}

TEST_CASE("class_frequency_profile") {
  SyntheticSpec spec;
  spec.n_classes = 3;
  spec.per_class = 12;
  spec.d = 8;
  const auto raw = generate_synthetic(spec, Role::validation);
  const auto val = normalize(raw, compute_stats(raw));
  ProbeOptions o;
  o.delta = 0.25;

  Model m = init_model(make_arch("tiny-mlp", val.shape, 3, {8, 1, 1}), 3);
  zero_output_layer(m);
  const auto flat = class_frequency_profile(model_predictor(m), val, 5, o, 1, 3);
  for (const auto& a : flat.per_class) CHECK(a.mean < 1e-12);
  std::vector<int> both = flat.top;
  both.insert(both.end(), flat.bottom.begin(), flat.bottom.end());
  std::sort(both.begin(), both.end());
  both.erase(std::unique(both.begin(), both.end()), both.end());
  CHECK(both == std::vector<int>{0, 1, 2});

  // Oracle smoothing at f = 0.05 for class 1 only.
  NoiseSpec hi;
  hi.f = 0.05;
  hi.alpha = 0.5;
  hi.mean_norm = mean_norm(val);
  NoiseSpec lo = hi;
  lo.f = 0.0;
  PathPredictor pred = [&](const Path& p) {
    return stack_probs(oracle_path(p.pair.class_a, 3, p.pair.class_a == 1 ? hi : lo, p));
  };
  const auto prof = class_frequency_profile(pred, val, 5, o, 1, 1);
  CHECK(prof.top == std::vector<int>{1});
  CHECK(prof.per_class[0].mean < 1e-12);
  CHECK(prof.per_class[1].mean > 1e-3);

  const auto reordered = class_frequency_profile(pred, val, 5, o, 1, 1, {2, 0, 1});
  for (int c = 0; c < 3; ++c) CHECK(reordered.per_class[std::size_t(c)].mean == prof.per_class[std::size_t(c)].mean);
  CHECK_THROWS_AS(class_frequency_profile(pred, val, 5, o, 1, 1, {0, 0, 1}), Error);
}

TEST_CASE("summarize_sweep") {
  SweepInput a{"r1", "0.2", std::nullopt, 0.2, 0.3};
  SweepInput b{"r2", "0.1", std::nullopt, 0.1, 0.3};
  const auto s = summarize_sweep({a, b}, "noise.f");
  REQUIRE(s.rows.size() == 2);
  CHECK(s.rows[0].value == "0.1");
  CHECK(s.rows[0].separation == 0.3 - 0.1);
  CHECK(s.rows[1].separation == 0.3 - 0.2);

  TrainRecord rec;
  rec.train_loss = {1.0, 0.5, 0.4};
  rec.clean_val_loss = {1.0, 0.9, 0.8};
  rec.noisy_val_loss = {1.5, 1.6, 1.4};
  rec.noise_fitting = {-0.5, -0.7, -0.6};
  rec.lr = {0.1, 0.05, 0.0};
  rec.has_noise = true;
  const auto one = summarize_sweep({{"r", "1", rec, std::nullopt, std::nullopt}}, "k", 0.0);
  REQUIRE(one.rows.size() == 1);
  CHECK(one.rows[0].min_noise_fitting == -0.7);
  CHECK(one.rows[0].argmin_epoch == 2);
  CHECK(one.rows[0].final_clean_val_loss == 0.8);

  CHECK_THROWS_AS(summarize_sweep({a, a}, "noise.f"), Error);

  const auto dir = oracle::scratch_dir("sweep");
  write_sweep_csv(s, dir / "s.csv");
  CHECK(oracle::read_file(dir / "s.csv").rfind(
            "run_id,noise.f,min_noise_fitting,argmin_epoch,final_clean_val_loss,hf_within,hf_between,separation\n",
            0) == 0);
}
