#include "doctest.h"
#include "oracles.hpp"

#include "specbias/config.hpp"

using namespace specbias;
using nlohmann::json;

namespace {

json base() {
  return json::parse(R"({
    "seeds": {"init": 1, "shuffle": 2, "mixup": 3, "probe": 4},
    "dataset": {"synthetic": {"n_classes": 3, "per_class": 6, "val_per_class": 4, "d": 4, "c": 1,
                              "template_seed": 5, "noise_seed": 6, "val_noise_seed": 7}},
    "model": {"arch": "tiny-mlp", "hidden": 8},
    "train": {"epochs": 2, "batch_size": 4},
    "noise": {"f": 0.2, "alpha": 0.4}
  })");
}

}  // namespace

TEST_CASE("defaults are filled into the echo") {
  const auto cfg = parse_config(base());
  CHECK(cfg.train.seeds.init == 1);
  CHECK(cfg.probe_seed == 4);
  CHECK(cfg.train.arch_options.hidden == 8);
  REQUIRE(cfg.noise);
  CHECK(cfg.noise->kind == NoiseKind::radial);
  CHECK(cfg.probe.epochs == std::vector<int>{0});
  CHECK(cfg.echo.at("probe").at("epochs") == json::array({"final"}));
  CHECK(cfg.echo.at("train").at("mixup").is_null());
  CHECK(cfg.echo.at("probe").at("oracle_frequencies").size() == 5);
  CHECK(cfg.output_dir == "runs");

  // The echo parses back to itself.
  CHECK(parse_config(cfg.echo).echo == cfg.echo);
}

TEST_CASE("every seed is required") {
  for (const char* key : {"init", "shuffle", "mixup", "probe"}) {
    json j = base();
    j["seeds"].erase(key);
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains(key), Error);
  }
  json j = base();
  j.erase("seeds");
  CHECK_THROWS_AS(parse_config(j), Error);
  j = base();
  j["dataset"]["synthetic"].erase("template_seed");
  CHECK_THROWS_AS(parse_config(j), Error);
  j = base();
  j["dataset"]["synthetic"]["val_noise_seed"] = 6;
  CHECK_THROWS_AS(parse_config(j), Error);
}

TEST_CASE("invalid fields are rejected") {
  auto bad = [](const char* patch) {
    json j = base();
    j.merge_patch(json::parse(patch));
    return j;
  };
  CHECK_THROWS_WITH_AS(parse_config(bad(R"({"train": {"epoch": 3}})")), doctest::Contains("train.epoch"), Error);
  CHECK_THROWS_AS(parse_config(bad(R"({"model": {"arch": "resnet"}})")), Error);
  CHECK_THROWS_AS(parse_config(bad(R"({"noise": {"alpha": 0.7}})")), Error);
  CHECK_THROWS_AS(parse_config(bad(R"({"train": {"mixup": "lots"}})")), Error);
  CHECK_THROWS_AS(parse_config(bad(R"({"train": {"epochs": 0}})")), Error);
  CHECK_THROWS_AS(parse_config(bad(R"({"probe": {"epochs": [0]}})")), Error);
  CHECK_THROWS_AS(parse_config(bad(R"({"dataset": {"source": "imagenet"}})")), Error);
  CHECK_THROWS_AS(parse_config(bad(R"({"train": {"batch_size": "big"}})")), Error);
  CHECK_NOTHROW(parse_config(bad(R"({"train": {"mixup": "infinity"}})")));
  CHECK(std::isinf(parse_config(bad(R"({"train": {"mixup": "infinity"}})")).train.mixup->strength));
}

TEST_CASE("run_id") {
  const auto a = parse_config(base());
  CHECK(run_id(a).size() == 16);
  CHECK(run_id(a) == run_id(parse_config(base())));

  json j = base();
  j["output_dir"] = "elsewhere";
  j["probe"] = {{"per_class", 3}};
  j["analysis"] = {{"j", 2}};
  CHECK(run_id(parse_config(j)) == run_id(a));

  j = base();
  j["noise"]["f"] = 0.3;
  CHECK(run_id(parse_config(j)) != run_id(a));
  j = base();
  j["seeds"]["init"] = 9;
  CHECK(run_id(parse_config(j)) != run_id(a));

  // Key order in the input does not matter.
  const json reordered = json::parse(base().dump());
  CHECK(run_id(parse_config(reordered)) == run_id(a));
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("sweep axes") {
  const auto cfg = parse_config(base());
  const json f = with_axis(cfg.echo, "noise.f", "0.05");
  CHECK(f.at("noise").at("f") == 0.05);
  CHECK(axis_value(f, "noise.f") == "0.05");
  CHECK(parse_config(f).noise->f == 0.05);

  const json m = with_axis(cfg.echo, "train.mixup", "infinity");
  CHECK(axis_value(m, "train.mixup") == "infinity");
  CHECK(std::isinf(parse_config(m).train.mixup->strength));

  CHECK_THROWS_WITH_AS(with_axis(cfg.echo, "train.colour", "1"), doctest::Contains("noise.f"), Error);
  json clean = base();
  clean.erase("noise");
  CHECK_THROWS_AS(with_axis(parse_config(clean).echo, "noise.f", "0.1"), Error);
  CHECK(axis_value(parse_config(clean).echo, "noise.f") == "");
}

TEST_CASE("prepare_data") {
  json j = base();
  j["train"]["n_train"] = 9;
  const auto cfg = parse_config(j);
  const auto data = prepare_data(cfg);
  CHECK(data.train.size() == 9);
  CHECK(data.val.size() == 12);
  CHECK(std::abs(data.train.images.mean()) < 1e-12);
  CHECK(data.stats.mean_norm == doctest::Approx(mean_norm(data.train)).epsilon(1e-12));

  const TrainConfig t = resolve_train_config(cfg, data);
  CHECK(!t.n_train);
  REQUIRE(t.noise);
  CHECK(t.noise->f == 0.2);
  CHECK(t.noise->mean_norm == data.stats.mean_norm);

  j["train"]["n_train"] = 100;
  CHECK_THROWS_AS(prepare_data(parse_config(j)), Error);

  j = base();
  j["noise"] = {{"kind", "directional"}, {"f", 0.1}, {"direction_k", 2}};
  const auto dc = parse_config(j);
  const auto dd = prepare_data(dc);
  const NoiseSpec s = make_noise_spec(*dc.noise, dd, dc.dataset.mean_norm_source);
  CHECK(s.kind == NoiseKind::directional);
  CHECK(s.direction->size() == dd.train.images.rows());
  CHECK(s.direction->norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("load_config") {
  const auto dir = oracle::scratch_dir("config");
  std::ofstream(dir / "ok.json") << base().dump();
  CHECK(load_config(dir / "ok.json").echo == parse_config(base()).echo);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_WITH_AS(load_config(dir / "bad.json"), doctest::Contains("JSON"), Error);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), Error);
}
