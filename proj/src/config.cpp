#include "specbias/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace specbias {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw Error("config: '" + section + "' must be an object");
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) throw Error("config: unknown field '" + section + "." + k + "'");
}

template <typename T>
T get_or(const json& obj, const std::string& section, const std::string& key, T fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error("config: field '" + section + "." + key + "' has the wrong type");
  }
}

template <typename T>
T require(const json& obj, const std::string& section, const std::string& key) {
  if (!obj.contains(key) || obj.at(key).is_null())
    throw Error("config: missing required field '" + section + "." + key + "'");
  return get_or<T>(obj, section, key, T{});
}

json section(const json& root, const std::string& name) {
  if (!root.contains(name) || root.at(name).is_null()) return json::object();
  return root.at(name);
}

std::vector<std::filesystem::path> path_list(const json& obj, const std::string& where,
                                             const std::string& key) {
  std::vector<std::filesystem::path> out;
  for (const auto& s : get_or<std::vector<std::string>>(obj, where, key, {})) out.emplace_back(s);
  return out;
}

json mixup_to_json(const std::optional<MixupSpec>& m) {
  if (!m) return nullptr;
  if (std::isinf(m->strength)) return "infinity";
  return m->strength;
}

std::optional<MixupSpec> mixup_from_json(const json& v) {
  if (v.is_null()) return std::nullopt;
  if (v.is_string()) {
    if (v.get<std::string>() == "infinity") return MixupSpec::infinite();
    throw Error("config: train.mixup must be a number or \"infinity\"");
  }
  if (!v.is_number()) throw Error("config: train.mixup must be a number or \"infinity\"");
  const double s = v.get<double>();
  if (!(s >= 0.0)) throw Error("config: train.mixup must be >= 0");
  return MixupSpec{s};
}

}  // namespace

ExperimentConfig parse_config(const json& root) {
  if (!root.is_object()) throw Error("config: top level must be an object");
  check_keys(root, "config",
             {"dataset", "model", "train", "noise", "probe", "analysis", "distill", "seeds", "output_dir"});
  ExperimentConfig cfg;

  // Seeds first: every random choice must trace to one of these.
  if (!root.contains("seeds")) throw Error("config: missing required section 'seeds'");
  const json seeds = root.at("seeds");
  check_keys(seeds, "seeds", {"init", "shuffle", "mixup", "probe"});
  cfg.train.seeds.init = require<std::uint64_t>(seeds, "seeds", "init");
  cfg.train.seeds.shuffle = require<std::uint64_t>(seeds, "seeds", "shuffle");
  cfg.train.seeds.mixup = require<std::uint64_t>(seeds, "seeds", "mixup");
  cfg.probe_seed = require<std::uint64_t>(seeds, "seeds", "probe");

  const json ds = section(root, "dataset");
  check_keys(ds, "dataset", {"source", "cifar10", "synthetic", "normalize", "mean_norm_source"});
  auto& d = cfg.dataset;
  d.source = get_or<std::string>(ds, "dataset", "source", "synthetic");
  d.normalize = get_or<bool>(ds, "dataset", "normalize", true);
  const auto mns = get_or<std::string>(ds, "dataset", "mean_norm_source", "normalized");
  if (mns == "normalized") {
    d.mean_norm_source = MeanNormSource::normalized;
  } else if (mns == "raw") {
    d.mean_norm_source = MeanNormSource::raw;
  } else {
    throw Error("config: dataset.mean_norm_source must be 'normalized' or 'raw'");
  }
  if (d.source == "cifar10") {
    const json c = section(ds, "cifar10");
    check_keys(c, "dataset.cifar10", {"train", "validation"});
    d.cifar_train = path_list(c, "dataset.cifar10", "train");
    d.cifar_validation = path_list(c, "dataset.cifar10", "validation");
    if (d.cifar_train.empty() || d.cifar_validation.empty())
      throw Error("config: dataset.cifar10 needs train and validation file lists");
  } else if (d.source == "synthetic") {
    const json s = section(ds, "synthetic");
    const std::string w = "dataset.synthetic";
    check_keys(s, w,
               {"n_classes", "per_class", "val_per_class", "d", "c", "template_seed", "noise_seed",
                "val_noise_seed", "spectral_exponent", "template_scale", "noise_scale", "contrast_spread"});
    auto& sp = d.synthetic;
    sp.n_classes = get_or<int>(s, w, "n_classes", sp.n_classes);
    sp.per_class = get_or<int>(s, w, "per_class", sp.per_class);
    d.val_per_class = get_or<int>(s, w, "val_per_class", d.val_per_class);
    sp.d = get_or<int>(s, w, "d", sp.d);
    sp.c = get_or<int>(s, w, "c", sp.c);
    sp.template_seed = require<std::uint64_t>(s, w, "template_seed");
    sp.noise_seed = require<std::uint64_t>(s, w, "noise_seed");
    d.val_noise_seed = require<std::uint64_t>(s, w, "val_noise_seed");
    if (d.val_noise_seed == sp.noise_seed)
      throw Error("config: dataset.synthetic.val_noise_seed must differ from noise_seed");
    sp.spectral_exponent = get_or<double>(s, w, "spectral_exponent", sp.spectral_exponent);
    sp.template_scale = get_or<double>(s, w, "template_scale", sp.template_scale);
    sp.noise_scale = get_or<double>(s, w, "noise_scale", sp.noise_scale);
    sp.contrast_spread = get_or<double>(s, w, "contrast_spread", sp.contrast_spread);
    if (sp.n_classes < 2 || sp.per_class < 1 || d.val_per_class < 1 || sp.d < 4 || sp.c < 1)
      throw Error("config: synthetic dataset dimensions must be positive (n_classes >= 2, d >= 4)");
  } else {
    throw Error("config: dataset.source must be 'synthetic' or 'cifar10'");
  }

  const json model = section(root, "model");
  check_keys(model, "model", {"arch", "hidden", "conv1", "conv2"});
  auto& t = cfg.train;
  t.arch = get_or<std::string>(model, "model", "arch", t.arch);
  t.arch_options.hidden = get_or<int>(model, "model", "hidden", t.arch_options.hidden);
  t.arch_options.conv1 = get_or<int>(model, "model", "conv1", t.arch_options.conv1);
  t.arch_options.conv2 = get_or<int>(model, "model", "conv2", t.arch_options.conv2);
  if (t.arch != "tiny-mlp" && t.arch != "tiny-cnn")
    throw Error("config: model.arch must be 'tiny-mlp' or 'tiny-cnn'");
  if (t.arch_options.hidden < 1 || t.arch_options.conv1 < 1 || t.arch_options.conv2 < 1)
    throw Error("config: model widths must be >= 1");

  const json tr = section(root, "train");
  check_keys(tr, "train",
             {"epochs", "batch_size", "base_lr", "momentum", "weight_decay", "mixup", "n_train",
              "checkpoint_every"});
  t.epochs = get_or<int>(tr, "train", "epochs", t.epochs);
  t.batch_size = get_or<int>(tr, "train", "batch_size", t.batch_size);
  t.base_lr = get_or<double>(tr, "train", "base_lr", t.base_lr);
  t.momentum = get_or<double>(tr, "train", "momentum", t.momentum);
  t.weight_decay = get_or<double>(tr, "train", "weight_decay", t.weight_decay);
  t.checkpoint_every = get_or<int>(tr, "train", "checkpoint_every", t.checkpoint_every);
  t.mixup = mixup_from_json(tr.contains("mixup") ? tr.at("mixup") : json(nullptr));
  if (tr.contains("n_train") && !tr.at("n_train").is_null())
    t.n_train = get_or<Index>(tr, "train", "n_train", 0);
  const bool distilling = root.contains("distill") && !root.at("distill").is_null();
  t.validate(distilling);

  if (root.contains("noise") && !root.at("noise").is_null()) {
    const json n = root.at("noise");
    check_keys(n, "noise", {"kind", "f", "alpha", "direction_k", "phase"});
    NoiseConfig nc;
    nc.kind = noise_kind_from_string(get_or<std::string>(n, "noise", "kind", "radial"));
    nc.f = require<double>(n, "noise", "f");
    nc.alpha = get_or<double>(n, "noise", "alpha", nc.alpha);
    nc.direction_k = get_or<int>(n, "noise", "direction_k", nc.direction_k);
    nc.phase = get_or<double>(n, "noise", "phase", nc.phase);
    if (!(nc.alpha >= 0.0 && nc.alpha <= 0.5)) throw Error("config: noise.alpha must lie in [0, 0.5]");
    if (!std::isfinite(nc.f)) throw Error("config: noise.f must be finite");
    if (nc.direction_k < 0) throw Error("config: noise.direction_k must be >= 0");
    cfg.noise = nc;
  }

  const json pr = section(root, "probe");
  check_keys(pr, "probe",
             {"per_class", "per_class_pair", "delta", "threshold", "threshold_units", "n_buckets",
              "max_samples", "epochs", "oracle_frequencies", "in_sweep"});
  auto& p = cfg.probe;
  p.per_class = get_or<int>(pr, "probe", "per_class", p.per_class);
  p.per_class_pair = get_or<int>(pr, "probe", "per_class_pair", p.per_class_pair);
  p.delta = get_or<double>(pr, "probe", "delta", p.delta);
  p.threshold = get_or<double>(pr, "probe", "threshold", p.threshold);
  p.units = frequency_units_from_string(get_or<std::string>(pr, "probe", "threshold_units", "per_sample"));
  p.n_buckets = get_or<int>(pr, "probe", "n_buckets", p.n_buckets);
  p.max_samples = get_or<int>(pr, "probe", "max_samples", p.max_samples);
  p.in_sweep = get_or<bool>(pr, "probe", "in_sweep", p.in_sweep);
  if (pr.contains("epochs")) {
    for (const auto& e : pr.at("epochs")) {
      if (e.is_string() && e.get<std::string>() == "final") {
        p.epochs.push_back(0);
      } else if (e.is_number_integer() && e.get<int>() >= 1) {
        p.epochs.push_back(e.get<int>());
      } else {
        throw Error("config: probe.epochs entries must be positive integers or \"final\"");
      }
    }
  } else {
    p.epochs = {0};
  }
  p.oracle_frequencies = get_or<std::vector<double>>(pr, "probe", "oracle_frequencies",
                                                     {0.0, 0.0125, 0.025, 0.0375, 0.05});
  if (p.per_class < 1 || p.per_class_pair < 1 || !(p.delta > 0.0) || p.n_buckets < 1 || p.max_samples < 2)
    throw Error("config: probe counts, delta, n_buckets and max_samples must be positive");

  const json an = section(root, "analysis");
  check_keys(an, "analysis", {"cscores", "j"});
  cfg.analysis.cscores = get_or<std::string>(an, "analysis", "cscores", "");
  cfg.analysis.j = get_or<int>(an, "analysis", "j", cfg.analysis.j);
  if (cfg.analysis.j < 0) throw Error("config: analysis.j must be >= 0");

  if (distilling) {
    const json di = root.at("distill");
    check_keys(di, "distill",
               {"teacher_run", "early_stop_loss", "hard_labels", "teacher_run_id", "teacher_epoch"});
    DistillConfig dc;
    dc.teacher_run = require<std::string>(di, "distill", "teacher_run");
    if (di.contains("early_stop_loss") && !di.at("early_stop_loss").is_null())
      dc.early_stop_loss = get_or<double>(di, "distill", "early_stop_loss", 0.0);
    dc.hard_labels = get_or<bool>(di, "distill", "hard_labels", false);
    cfg.distill = dc;
  }

  cfg.output_dir = get_or<std::string>(root, "config", "output_dir", cfg.output_dir);

  // Canonical echo.
  json e;
  e["seeds"] = {{"init", t.seeds.init}, {"shuffle", t.seeds.shuffle}, {"mixup", t.seeds.mixup},
                {"probe", cfg.probe_seed}};
  json dj = {{"source", d.source},
             {"normalize", d.normalize},
             {"mean_norm_source", mns}};
  if (d.source == "cifar10") {
    std::vector<std::string> a, b;
    for (const auto& x : d.cifar_train) a.push_back(x.string());
    for (const auto& x : d.cifar_validation) b.push_back(x.string());
    dj["cifar10"] = {{"train", a}, {"validation", b}};
  } else {
    const auto& sp = d.synthetic;
    dj["synthetic"] = {{"n_classes", sp.n_classes},         {"per_class", sp.per_class},
                       {"val_per_class", d.val_per_class},  {"d", sp.d},
                       {"c", sp.c},                         {"template_seed", sp.template_seed},
                       {"noise_seed", sp.noise_seed},       {"val_noise_seed", d.val_noise_seed},
                       {"spectral_exponent", sp.spectral_exponent},
                       {"template_scale", sp.template_scale},
                       {"noise_scale", sp.noise_scale},
                       {"contrast_spread", sp.contrast_spread}};
  }
  e["dataset"] = dj;
  e["model"] = {{"arch", t.arch},
                {"hidden", t.arch_options.hidden},
                {"conv1", t.arch_options.conv1},
                {"conv2", t.arch_options.conv2}};
  e["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"base_lr", t.base_lr},
                {"momentum", t.momentum},
                {"weight_decay", t.weight_decay},
                {"checkpoint_every", t.checkpoint_every},
                {"mixup", mixup_to_json(t.mixup)},
                {"n_train", t.n_train ? json(*t.n_train) : json(nullptr)}};
  if (cfg.noise) {
    e["noise"] = {{"kind", to_string(cfg.noise->kind)},
                  {"f", cfg.noise->f},
                  {"alpha", cfg.noise->alpha},
                  {"direction_k", cfg.noise->direction_k},
                  {"phase", cfg.noise->phase}};
  } else {
    e["noise"] = nullptr;
  }
  json epochs = json::array();
  for (int ep : p.epochs) epochs.push_back(ep == 0 ? json("final") : json(ep));
  e["probe"] = {{"per_class", p.per_class},
                {"per_class_pair", p.per_class_pair},
                {"delta", p.delta},
                {"threshold", p.threshold},
                {"threshold_units", to_string(p.units)},
                {"n_buckets", p.n_buckets},
                {"max_samples", p.max_samples},
                {"epochs", epochs},
                {"oracle_frequencies", p.oracle_frequencies},
                {"in_sweep", p.in_sweep}};
  e["analysis"] = {{"cscores", cfg.analysis.cscores}, {"j", cfg.analysis.j}};
  if (cfg.distill) {
    e["distill"] = {{"teacher_run", cfg.distill->teacher_run},
                    {"early_stop_loss", cfg.distill->early_stop_loss ? json(*cfg.distill->early_stop_loss)
                                                                     : json(nullptr)},
                    {"hard_labels", cfg.distill->hard_labels}};
  }
  e["output_dir"] = cfg.output_dir;
  cfg.echo = e;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& ex) {
    throw Error("config " + path.string() + " is not valid JSON: " + ex.what());
  }
  return parse_config(j);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string run_id(const ExperimentConfig& cfg) {
  json e = cfg.echo;
  e.erase("output_dir");
  e.erase("probe");
  e.erase("analysis");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(e.dump())));
  return buf;
}

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {
      "noise.f",          "noise.alpha",        "noise.direction_k", "train.n_train",
      "train.weight_decay", "train.mixup",      "train.epochs",      "train.base_lr",
      "train.batch_size", "train.momentum",     "model.hidden",      "model.conv1",
      "model.conv2",      "seeds.init"};
  return axes;
}

namespace {

std::pair<std::string, std::string> split_axis(const std::string& axis) {
  const auto& axes = sweep_axes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end()) {
    std::string valid;
    for (const auto& a : axes) valid += (valid.empty() ? "" : ", ") + a;
    throw Error("unknown sweep axis '" + axis + "'; valid axes: " + valid);
  }
  const auto dot = axis.find('.');
  return {axis.substr(0, dot), axis.substr(dot + 1)};
}

}  // namespace

json with_axis(const json& echo, const std::string& axis, const std::string& value) {
  const auto [sec, key] = split_axis(axis);
  json out = echo;
  if (sec == "noise" && out["noise"].is_null())
    throw Error("sweep axis '" + axis + "' needs a noise section in the base config");
  json v;
  try {
    v = json::parse(value);
  } catch (const json::exception&) {
    v = value;
  }
  out[sec][key] = v;
  return out;
}

std::string axis_value(const json& echo, const std::string& axis) {
  const auto [sec, key] = split_axis(axis);
  if (!echo.contains(sec) || echo.at(sec).is_null() || !echo.at(sec).contains(key)) return "";
  const json& v = echo.at(sec).at(key);
  return v.is_string() ? v.get<std::string>() : v.dump();
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  PreparedData out;
  LabeledDataset train, val;
  if (d.source == "cifar10") {
    train = load_cifar10(d.cifar_train, Role::train);
    val = load_cifar10(d.cifar_validation, Role::validation);
  } else {
    SyntheticSpec vs = d.synthetic;
    vs.per_class = d.val_per_class;
    vs.noise_seed = d.val_noise_seed;
    train = generate_synthetic(d.synthetic, Role::train);
    val = generate_synthetic(vs, Role::validation);
  }
  if (cfg.train.n_train) {
    if (*cfg.train.n_train > train.size())
      throw Error("config: train.n_train = " + std::to_string(*cfg.train.n_train) + " exceeds the " +
                  std::to_string(train.size()) + " available training examples");
    if (*cfg.train.n_train < train.size()) train = subset(train, *cfg.train.n_train, cfg.train.seeds.shuffle);
  }
  out.stats = compute_stats(train, d.mean_norm_source);
  if (d.normalize) {
    out.train = normalize(train, out.stats);
    out.val = normalize(val, out.stats);
    if (d.mean_norm_source == MeanNormSource::raw) out.stats.mean_norm = mean_norm(train);
  } else {
    out.train = std::move(train);
    out.val = std::move(val);
    out.stats.mean_norm = mean_norm(out.train);
  }
  return out;
}

NoiseSpec make_noise_spec(const NoiseConfig& nc, const PreparedData& data, MeanNormSource) {
  NoiseSpec s;
  s.kind = nc.kind;
  s.f = nc.f;
  s.alpha = nc.alpha;
  if (nc.kind == NoiseKind::radial) {
    s.mean_norm = data.stats.mean_norm;
  } else {
    s.direction = fourier_basis_image(nc.direction_k, data.train.shape, nc.phase).pixels;
  }
  s.validate_for(data.train.shape);
  return s;
}

TrainConfig resolve_train_config(const ExperimentConfig& cfg, const PreparedData& data) {
  TrainConfig t = cfg.train;
  t.n_train.reset();  // already applied by prepare_data
  if (cfg.noise) t.noise = make_noise_spec(*cfg.noise, data, cfg.dataset.mean_norm_source);
  return t;
}

ProbeOptions probe_options(const ProbeConfig& pc) {
  ProbeOptions o;
  o.delta = pc.delta;
  o.threshold = pc.threshold;
  o.units = pc.units;
  o.max_samples = pc.max_samples;
  return o;
}

}  // namespace specbias
