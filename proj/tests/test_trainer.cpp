#include "doctest.h"
#include "oracles.hpp"

#include "specbias/trainer.hpp"

using namespace specbias;

namespace {

struct Split {
  LabeledDataset train;
  LabeledDataset val;
  DatasetStats stats;
};

Split tiny_split() {
  SyntheticSpec spec;
  spec.n_classes = 3;
  spec.per_class = 10;
  spec.d = 4;
  spec.c = 1;
  Split s;
  const auto train = generate_synthetic(spec);
  spec.noise_seed = 77;
  spec.per_class = 5;
  const auto val = generate_synthetic(spec, Role::validation);
  s.stats = compute_stats(train);
  s.train = normalize(train, s.stats);
  s.val = normalize(val, s.stats);
  return s;
}

TrainConfig tiny_config(int epochs) {
  TrainConfig c;
  c.arch = "tiny-mlp";
  c.arch_options.hidden = 8;
  c.epochs = epochs;
  c.batch_size = 8;
  c.seeds = {1, 2, 3};
  return c;
}

NoiseSpec radial(double f, double alpha, double mean_norm) {
  NoiseSpec n;
  n.f = f;
  n.alpha = alpha;
  n.mean_norm = mean_norm;
  return n;
}

TrainRecord series(std::vector<double> nf) {
  TrainRecord r;
  r.noise_fitting = std::move(nf);
  r.has_noise = true;
  return r;
}

}  // namespace

TEST_CASE("noise_fitting hand values") {
  // Uniform prediction: CE against any simplex target is ln M.
  const int m = 10;
  const Matrix uniform = Matrix::Constant(m, 1, 1.0 / m);
  Matrix clean = Matrix::Zero(m, 1);
  clean(2, 0) = 1.0;
  Matrix smooth = Matrix::Constant(m, 1, 0.05);
  smooth(2, 0) = 0.55;
  CHECK(noise_fitting(cross_entropy(uniform, clean), cross_entropy(uniform, smooth)) ==
        doctest::Approx(0.0).epsilon(1e-15));

  // Predicting the smoothed label itself (s = 0.5, M = 10).
  const double c = -std::log(0.55);
  const double h = -(0.55 * std::log(0.55) + 9 * 0.05 * std::log(0.05));
  CHECK(cross_entropy(smooth, clean) == doctest::Approx(0.5978).epsilon(1e-4));
  CHECK(cross_entropy(smooth, smooth) == doctest::Approx(1.6769).epsilon(1e-4));
  CHECK(noise_fitting(c, h) == doctest::Approx(-1.0791).epsilon(1e-4));

  // Confident prediction 0.99 on the true class.
  Matrix confident = Matrix::Constant(m, 1, 0.01 / 9);
  confident(2, 0) = 0.99;
  CHECK(cross_entropy(confident, clean) == doctest::Approx(0.0101).epsilon(1e-3));
  CHECK(cross_entropy(confident, smooth) == doctest::Approx(3.066).epsilon(1e-3));

  CHECK_THROWS_AS(noise_fitting(std::nan(""), 1.0), Error);
}

TEST_CASE("ema_smooth") {
  const std::vector<double> s{3.0, -1.0, 4.0};
  CHECK(ema_smooth(s, 0.0) == s);
  CHECK(ema_smooth({2.0, 2.0, 2.0}, 0.9) == std::vector<double>{2.0, 2.0, 2.0});
  CHECK(ema_smooth({0.0, 1.0}, 0.5) == std::vector<double>{0.0, 0.5});
  CHECK_THROWS_AS(ema_smooth(s, 1.0), Error);
  CHECK_THROWS_AS(ema_smooth({}, 0.5), Error);
}

TEST_CASE("min_noise_fitting") {
  auto m = min_noise_fitting(series({0.0, 0.0, 0.0}), 0.9);
  CHECK(m.value == 0.0);
  CHECK(m.epoch == 0);
  m = min_noise_fitting(series({-1.0, -3.0, -2.0}), 0.0);
  CHECK(m.value == -3.0);
  CHECK(m.epoch == 1);
  CHECK(min_noise_fitting(series({-1.0, -3.0, -3.0}), 0.0).epoch == 1);
  TrainRecord clean = series({0.0});
  clean.has_noise = false;
  CHECK_THROWS_AS(min_noise_fitting(clean), Error);
}

TEST_CASE("early_stop_epoch") {
  TrainRecord r;
  r.train_loss = {2.0, 1.0, 0.4};
  CHECK(early_stop_epoch(r, 5.0) == 0);
  CHECK(early_stop_epoch(r, 0.1) == 2);
  CHECK(early_stop_epoch(r, 0.5) == 2);
  r.train_loss = {2.0, 0.45, 0.4};
  CHECK(early_stop_epoch(r, 0.5) == 1);
  CHECK_THROWS_AS(early_stop_epoch(TrainRecord{}, 0.5), Error);
}

TEST_CASE("run_training without noise") {
  const Split s = tiny_split();
  const TrainRecord r = run_training(tiny_config(3), s.train, s.val);
  CHECK(r.epochs() == 3);
  CHECK(r.clean_val_loss == r.noisy_val_loss);
  for (double v : r.noise_fitting) CHECK(v == 0.0);
  CHECK(r.lr.front() == 0.05);
}

TEST_CASE("one epoch on 30 examples") {
  const Split s = tiny_split();
  const TrainRecord r = run_training(tiny_config(1), s.train, s.val);
  CHECK(r.train_loss.size() == 1);
  CHECK(r.clean_val_loss.size() == 1);
  CHECK(r.noise_fitting.size() == 1);
  CHECK(r.lr.size() == 1);
}

TEST_CASE("noise fitting identity and alpha zero") {
  const Split s = tiny_split();
  TrainConfig c = tiny_config(4);
  c.noise = radial(0.3, 0.5, s.stats.mean_norm);
  const TrainRecord r = run_training(c, s.train, s.val);
  for (std::size_t e = 0; e < r.epochs(); ++e)
    CHECK(r.noise_fitting[e] == r.clean_val_loss[e] - r.noisy_val_loss[e]);
  CHECK(r.has_noise);

  c.noise = radial(0.3, 0.0, s.stats.mean_norm);
  const TrainRecord z = run_training(c, s.train, s.val);
  CHECK(z.clean_val_loss == z.noisy_val_loss);
}

TEST_CASE("training is deterministic") {
  const Split s = tiny_split();
  TrainConfig c = tiny_config(3);
  c.mixup = MixupSpec{1.0};
  c.noise = radial(0.2, 0.4, s.stats.mean_norm);
  const TrainRecord a = run_training(c, s.train, s.val);
  const TrainRecord b = run_training(c, s.train, s.val);
  CHECK(a.train_loss == b.train_loss);
  CHECK(a.noisy_val_loss == b.noisy_val_loss);
  c.seeds.shuffle = 9;
  CHECK(run_training(c, s.train, s.val).train_loss != a.train_loss);
}

TEST_CASE("checkpoint cadence") {
  const Split s = tiny_split();
  TrainConfig c = tiny_config(5);
  c.checkpoint_every = 2;
  std::vector<int> seen;
  TrainHooks h;
  h.checkpoint = [&](int e, const Model&) {
    seen.push_back(e);
    return std::to_string(e);
  };
  const TrainRecord r = run_training(c, s.train, s.val, h);
  CHECK(seen == std::vector<int>{2, 4, 5});
  CHECK(r.checkpoints == std::vector<std::string>{"2", "4", "5"});
}

TEST_CASE("n_train subset") {
  const Split s = tiny_split();
  TrainConfig c = tiny_config(1);
  c.n_train = 12;
  c.batch_size = 100;
  Model m;
  const TrainRecord r = run_training(c, s.train, s.val, {}, &m);
  CHECK(r.epochs() == 1);
  c.n_train = 1000;
  CHECK_THROWS_AS(run_training(c, s.train, s.val), Error);
}

TEST_CASE("config validation") {
  TrainConfig c = tiny_config(0);
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_NOTHROW(c.validate(true));
  c = tiny_config(1);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("distill from a uniform teacher") {
  const Split s = tiny_split();
  Model teacher = init_model(make_arch("tiny-mlp", s.train.shape, 3, {8, 1, 1}), 4);
  zero_output_layer(teacher);
  TrainConfig c = tiny_config(30);
  c.base_lr = 0.1;
  const TrainRecord r = distill(teacher, c, s.train, s.val);
  CHECK(std::abs(r.clean_val_loss.back() - std::log(3.0)) < 0.05);
  CHECK(r.teacher == "teacher");

  TrainConfig zero = tiny_config(0);
  const TrainRecord stub = distill(teacher, zero, s.train, s.val);
  CHECK(stub.eval_only);
  CHECK(stub.epochs() == 0);
  CHECK(std::isfinite(stub.initial_clean_val_loss));

  Model wrong = init_model(make_arch("tiny-mlp", s.train.shape, 4, {8, 1, 1}), 4);
  CHECK_THROWS_AS(distill(wrong, c, s.train, s.val), Error);
}

TEST_CASE("distill hard labels") {
  const Split s = tiny_split();
  const Model teacher = init_model(make_arch("tiny-mlp", s.train.shape, 3, {8, 1, 1}), 4);
  DistillOptions o;
  o.hard_labels = true;
  const TrainRecord r = distill(teacher, tiny_config(2), s.train, s.val, o);
  CHECK(r.epochs() == 2);
}

TEST_CASE("record csv round trip") {
  const auto dir = oracle::scratch_dir("record");
  const Split s = tiny_split();
  TrainConfig c = tiny_config(3);
  c.noise = radial(0.2, 0.5, s.stats.mean_norm);
  const TrainRecord r = run_training(c, s.train, s.val);
  write_record_csv(r, dir / "record.csv");
  const TrainRecord back = read_record_csv(dir / "record.csv");
  CHECK(back.train_loss == r.train_loss);
  CHECK(back.noise_fitting == r.noise_fitting);
  CHECK(back.lr == r.lr);
  const std::string text = oracle::read_file(dir / "record.csv");
  CHECK(text.rfind("epoch,train_loss,clean_val_loss,noisy_val_loss,noise_fitting,lr\n1,", 0) == 0);
}
