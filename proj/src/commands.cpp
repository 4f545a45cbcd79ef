#include "specbias/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "specbias/analysis.hpp"
#include "specbias/csv.hpp"

namespace specbias {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::mutex log_mutex;

void say(const CommandOptions& opts, const std::string& msg) {
  if (!opts.log) return;
  std::lock_guard<std::mutex> lock(log_mutex);
  *opts.log << msg << std::endl;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string checkpoint_name(int epoch) { return "epoch_" + std::to_string(epoch) + ".ckpt"; }

ArchSpec expected_arch(const ExperimentConfig& cfg, const PreparedData& data) {
  return make_arch(cfg.train.arch, data.val.shape, data.val.n_classes, cfg.train.arch_options);
}

TrainHooks hooks_for(const fs::path& dir, const CommandOptions& opts, const std::string& tag) {
  TrainHooks h;
  h.checkpoint = [dir](int epoch, const Model& m) {
    const fs::path p = dir / checkpoint_name(epoch);
    save_checkpoint(p, m, epoch);
    return p.filename().string();
  };
  if (opts.log) {
    h.progress = [&opts, tag](int epoch, const TrainRecord& r) {
      say(opts, tag + " epoch " + std::to_string(epoch) + " train_loss " + csv::num(r.train_loss.back()) +
                    " clean_val_loss " + csv::num(r.clean_val_loss.back()) + " noise_fitting " +
                    csv::num(r.noise_fitting.back()));
    };
  }
  return h;
}

void write_eval_csv(const TrainRecord& rec, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "clean_val_loss,noisy_val_loss,noise_fitting\n"
      << csv::num(rec.initial_clean_val_loss) << ',' << csv::num(rec.initial_noisy_val_loss) << ','
      << csv::num(noise_fitting(rec.initial_clean_val_loss, rec.initial_noisy_val_loss)) << '\n';
}

std::vector<ImagePair> probe_pairs(const ExperimentConfig& cfg, const LabeledDataset& val) {
  auto pairs = sample_within_pairs(val, cfg.probe.per_class, cfg.probe_seed);
  auto between = sample_between_pairs(val, cfg.probe.per_class_pair, cfg.probe_seed);
  const std::int64_t offset = std::int64_t(pairs.size());
  for (auto& p : between) {
    p.pair_id += offset;
    pairs.push_back(p);
  }
  return pairs;
}

const char* kProbePathsHeader = "model_id,epoch,pair_id,kind,class_a,class_b,id_a,id_b,T,spacing,hf_fraction";
const char* kProbeSummaryHeader = "model_id,epoch,kind,mean,sem,count";

struct HfPair {
  double within = std::numeric_limits<double>::quiet_NaN();
  double between = std::numeric_limits<double>::quiet_NaN();
};

// Reads probe_summary.csv and returns the rows of the largest epoch.
std::optional<HfPair> final_probe(const fs::path& dir) {
  const fs::path p = dir / "probe_summary.csv";
  if (!fs::exists(p)) return std::nullopt;
  const auto rows = csv::read(p, kProbeSummaryHeader);
  long long best = -1;
  for (const auto& r : rows) best = std::max(best, csv::parse_int(r[1]));
  HfPair out;
  for (const auto& r : rows) {
    if (csv::parse_int(r[1]) != best) continue;
    if (r[2] == "within") out.within = csv::parse_double(r[3]);
    if (r[2] == "between") out.between = csv::parse_double(r[3]);
  }
  return out;
}

}  // namespace

void apply_scale(ExperimentConfig& cfg, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error("--scale must be a positive number");
  if (scale == 1.0) return;
  auto scaled = [scale](int n) { return std::max(1, int(std::lround(n * scale))); };
  cfg.probe.per_class = scaled(cfg.probe.per_class);
  cfg.probe.per_class_pair = scaled(cfg.probe.per_class_pair);
  cfg.echo["probe"]["per_class"] = cfg.probe.per_class;
  cfg.echo["probe"]["per_class_pair"] = cfg.probe.per_class_pair;
}

fs::path output_root(const ExperimentConfig& cfg, const CommandOptions& opts) {
  return opts.out ? *opts.out : fs::path(cfg.output_dir);
}

fs::path run_dir(const ExperimentConfig& cfg, const CommandOptions& opts) {
  return output_root(cfg, opts) / run_id(cfg);
}

fs::path cmd_train(const ExperimentConfig& cfg, const CommandOptions& opts) {
  if (cfg.distill) throw Error("train: config has a distill section; use the distill command");
  const PreparedData data = prepare_data(cfg);
  const TrainConfig tc = resolve_train_config(cfg, data);
  tc.validate();
  const fs::path dir = run_dir(cfg, opts);
  fs::create_directories(dir);
  write_text(dir / "config.json", cfg.echo.dump(2) + "\n");
  say(opts, "train " + run_id(cfg) + ": " + std::to_string(data.train.size()) + " examples, " +
                std::to_string(tc.epochs) + " epochs");
  const TrainRecord rec = run_training(tc, data.train, data.val, hooks_for(dir, opts, run_id(cfg)));
  write_record_csv(rec, dir / "record.csv");
  return dir;
}

fs::path cmd_probe(const ExperimentConfig& cfg, const CommandOptions& opts,
                   const std::vector<fs::path>& checkpoints, int dump_paths) {
  const PreparedData data = prepare_data(cfg);
  const ArchSpec arch = expected_arch(cfg, data);
  const fs::path dir = run_dir(cfg, opts);

  std::vector<fs::path> ckpts = checkpoints;
  if (ckpts.empty()) {
    if (cfg.probe.epochs.empty()) throw Error("probe: no checkpoints given and probe.epochs is empty");
    for (int e : cfg.probe.epochs) ckpts.push_back(dir / checkpoint_name(e == 0 ? cfg.train.epochs : e));
  }
  for (const auto& p : ckpts)
    if (!fs::exists(p)) throw Error("probe: missing checkpoint " + p.string());
  fs::create_directories(dir);

  const auto pairs = probe_pairs(cfg, data.val);
  const ProbeOptions po = probe_options(cfg.probe);
  const std::string model_id = run_id(cfg);

  std::ofstream paths_out(dir / "probe_paths.csv");
  std::ofstream summary_out(dir / "probe_summary.csv");
  if (!paths_out || !summary_out) throw Error("probe: cannot write into " + dir.string());
  paths_out << kProbePathsHeader << '\n';
  summary_out << kProbeSummaryHeader << '\n';

  std::set<int> seen;
  for (const auto& p : ckpts) {
    const Checkpoint ck = load_checkpoint(p, arch);
    if (!seen.insert(ck.epoch).second)
      throw Error("probe: two checkpoints for epoch " + std::to_string(ck.epoch));
    say(opts, "probe " + model_id + " epoch " + std::to_string(ck.epoch) + ": " +
                  std::to_string(pairs.size()) + " pairs");
    const ProbeResult res = probe_paths(data.val, pairs, model_predictor(ck.model), po);
    for (const auto& r : res.paths)
      paths_out << model_id << ',' << ck.epoch << ',' << r.pair.pair_id << ',' << to_string(r.pair.kind)
                << ',' << r.pair.class_a << ',' << r.pair.class_b << ',' << r.pair.id_a << ','
                << r.pair.id_b << ',' << r.length << ',' << csv::num(r.spacing) << ','
                << csv::num(r.hf_fraction) << '\n';
    for (const auto& a : aggregate_paths(res.paths, Grouping::kind))
      summary_out << model_id << ',' << ck.epoch << ',' << a.group << ',' << csv::num(a.mean) << ','
                  << csv::num(a.sem) << ',' << a.count << '\n';
    for (int k = 0; k < dump_paths && k < int(res.paths.size()); ++k) {
      const Path path = interpolate_path(data.val, res.paths[k].pair, po.delta, po.max_samples);
      write_prediction_dump(dir / ("pred_e" + std::to_string(ck.epoch) + "_p" +
                                   std::to_string(res.paths[k].pair.pair_id) + ".bin"),
                            path.lambdas, predict_path(ck.model, path));
    }
  }
  return dir;
}

fs::path cmd_oracle(const ExperimentConfig& cfg, const CommandOptions& opts) {
  const auto& freqs = cfg.probe.oracle_frequencies;
  if (freqs.empty()) throw Error("oracle: probe.oracle_frequencies is empty");
  const PreparedData data = prepare_data(cfg);
  NoiseConfig nc = cfg.noise.value_or(NoiseConfig{});
  const auto pairs = sample_within_pairs(data.val, cfg.probe.per_class, cfg.probe_seed);
  const ProbeOptions po = probe_options(cfg.probe);

  const fs::path dir = run_dir(cfg, opts);
  fs::create_directories(dir);
  write_text(dir / "config.json", cfg.echo.dump(2) + "\n");
  std::ofstream curves(dir / "oracle_curves.csv");
  std::ofstream hf(dir / "oracle_hf.csv");
  if (!curves || !hf) throw Error("oracle: cannot write into " + dir.string());
  curves << "f,bucket,lambda_lo,lambda_hi,mean_diff_norm\n";
  hf << "f,mean,sem,count,skipped\n";

  const int nb = cfg.probe.n_buckets;
  for (double f : freqs) {
    nc.f = f;
    const NoiseSpec spec = make_noise_spec(nc, data, cfg.dataset.mean_norm_source);
    const ProbeResult res = probe_paths(data.val, pairs, oracle_predictor(data.val.n_classes, spec), po);
    const Vector buckets = bucket_average(res.curves, nb);
    for (int b = 0; b < nb; ++b)
      curves << csv::num(f) << ',' << b << ',' << csv::num(double(b) / nb) << ','
             << csv::num(double(b + 1) / nb) << ',' << csv::num(buckets(b)) << '\n';
    std::vector<double> fractions;
    for (const auto& r : res.paths) fractions.push_back(r.hf_fraction);
    const PathAggregate a = aggregate_fractions(fractions, "within");
    hf << csv::num(f) << ',' << csv::num(a.mean) << ',' << csv::num(a.sem) << ',' << a.count << ','
       << res.skipped << '\n';
    say(opts, "oracle f " + csv::num(f) + " hf_fraction " + csv::num(a.mean));
  }
  return dir;
}

fs::path cmd_sweep(const ExperimentConfig& cfg, const CommandOptions& opts, const std::string& axis,
                   const std::vector<std::string>& values) {
  if (values.empty()) throw Error("sweep: no values given");
  if (cfg.distill) throw Error("sweep: distill configs cannot be swept");
  std::vector<ExperimentConfig> children;
  std::set<std::string> distinct;
  for (const auto& v : values) {
    if (!distinct.insert(v).second) throw Error("sweep: value '" + v + "' given twice");
    json e = with_axis(cfg.echo, axis, v);
    ExperimentConfig c = parse_config(e);
    c.probe = cfg.probe;  // keep any --scale adjustment
    c.echo["probe"] = cfg.echo["probe"];
    children.push_back(std::move(c));
  }

  std::vector<SweepInput> inputs(children.size());
  std::vector<std::string> errors(children.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < children.size(); i = next++) {
      try {
        const ExperimentConfig& c = children[i];
        const fs::path dir = cmd_train(c, opts);
        SweepInput in;
        in.run_id = run_id(c);
        in.value = axis_value(c.echo, axis);
        in.record = read_record_csv(dir / "record.csv");
        if (c.probe.in_sweep && c.train.epochs > 0) {
          ExperimentConfig pc = c;
          pc.probe.epochs = {0};
          cmd_probe(pc, opts);
          if (const auto hf = final_probe(dir)) {
            in.hf_within = hf->within;
            in.hf_between = hf->between;
          }
        }
        inputs[i] = std::move(in);
      } catch (const std::exception& ex) {
        errors[i] = ex.what();
      }
    }
  };
  const int nw = std::max(1, std::min<int>(opts.workers, int(children.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < nw; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw Error("sweep: child " + axis + "=" + values[i] + " failed: " + errors[i]);

  std::string key_material = run_id(cfg) + "|" + axis;
  for (const auto& v : values) key_material += "|" + v;
  char id[17];
  std::snprintf(id, sizeof id, "%016llx", static_cast<unsigned long long>(fnv1a64(key_material)));
  const fs::path dir = output_root(cfg, opts) / (std::string("sweep_") + id);
  fs::create_directories(dir);
  write_text(dir / "config.json", cfg.echo.dump(2) + "\n");
  const SweepSummary s = summarize_sweep(inputs, axis);
  write_sweep_csv(s, dir / "summary.csv");
  return dir / "summary.csv";
}

fs::path cmd_distill(const ExperimentConfig& cfg_in, const CommandOptions& opts) {
  if (!cfg_in.distill) throw Error("distill: config has no distill section");
  ExperimentConfig cfg = cfg_in;
  const DistillConfig& dc = *cfg.distill;

  fs::path teacher_dir = output_root(cfg, opts) / dc.teacher_run;
  if (!fs::exists(teacher_dir / "config.json") && fs::exists(fs::path(dc.teacher_run) / "config.json"))
    teacher_dir = dc.teacher_run;
  if (!fs::exists(teacher_dir / "config.json"))
    throw Error("distill: unknown teacher run '" + dc.teacher_run + "' (no " +
                (teacher_dir / "config.json").string() + ")");
  const ExperimentConfig teacher_cfg = load_config(teacher_dir / "config.json");
  const TrainRecord teacher_rec = read_record_csv(teacher_dir / "record.csv");
  if (teacher_rec.epochs() == 0) throw Error("distill: teacher run has no training epochs");
  const int epoch = dc.early_stop_loss ? early_stop_epoch(teacher_rec, *dc.early_stop_loss) + 1
                                       : int(teacher_rec.epochs());
  const fs::path ckpt = teacher_dir / checkpoint_name(epoch);
  if (!fs::exists(ckpt))
    throw Error("distill: teacher run has no checkpoint at early-stop epoch " + std::to_string(epoch) +
                " (" + ckpt.string() + ")");

  cfg.echo["distill"]["teacher_run_id"] = run_id(teacher_cfg);
  cfg.echo["distill"]["teacher_epoch"] = epoch;

  const PreparedData data = prepare_data(cfg);
  Checkpoint teacher = load_checkpoint(ckpt);
  if (teacher.model.arch().input != data.train.shape)
    throw Error("distill: teacher input shape does not match the student dataset");
  const TrainConfig tc = resolve_train_config(cfg, data);

  const fs::path dir = run_dir(cfg, opts);
  fs::create_directories(dir);
  write_text(dir / "config.json", cfg.echo.dump(2) + "\n");
  DistillOptions dopts;
  dopts.hard_labels = dc.hard_labels;
  dopts.teacher_ref = run_id(teacher_cfg) + "/" + checkpoint_name(epoch);
  say(opts, "distill " + run_id(cfg) + " from " + dopts.teacher_ref);
  const TrainRecord rec =
      distill(teacher.model, tc, data.train, data.val, dopts, hooks_for(dir, opts, run_id(cfg)));
  write_record_csv(rec, dir / "record.csv");
  if (rec.eval_only) write_eval_csv(rec, dir / "eval.csv");
  return dir;
}

fs::path cmd_analyze(const ExperimentConfig& cfg, const CommandOptions& opts,
                     const std::optional<fs::path>& checkpoint) {
  if (cfg.analysis.cscores.empty()) throw Error("analyze: analysis.cscores is not set");
  const PreparedData data = prepare_data(cfg);
  const fs::path dir = run_dir(cfg, opts);
  const fs::path ckpt = checkpoint ? *checkpoint : dir / checkpoint_name(cfg.train.epochs);
  if (!fs::exists(ckpt)) throw Error("analyze: missing checkpoint " + ckpt.string());
  const Checkpoint ck = load_checkpoint(ckpt, expected_arch(cfg, data));
  const CScoreTable table = load_cscores(cfg.analysis.cscores, label_map(data.val), data.val.n_classes);

  const ClassProfile prof = class_frequency_profile(model_predictor(ck.model), data.val, cfg.probe.per_class,
                                                    probe_options(cfg.probe), cfg.probe_seed, cfg.analysis.j);
  const CoherenceResult res = correlate_coherence(prof.per_class, table);

  fs::create_directories(dir);
  {
    std::ofstream out(dir / "class_profile.csv");
    if (!out) throw Error("analyze: cannot write into " + dir.string());
    out << "class,mean,sem,count\n";
    for (std::size_t c = 0; c < prof.per_class.size(); ++c) {
      const auto& a = prof.per_class[c];
      out << c << ',' << csv::num(a.mean) << ',' << csv::num(a.sem) << ',' << a.count << '\n';
    }
  }
  write_coherence_csv(res, dir / "coherence.csv");
  std::ofstream out(dir / "coherence_summary.csv");
  out << "spearman_rho,degenerate,n_classes\n"
      << csv::num(res.spearman.rho) << ',' << (res.spearman.degenerate ? 1 : 0) << ','
      << res.table.size() << '\n';
  say(opts, "analyze " + run_id(cfg) + ": spearman rho " + csv::num(res.spearman.rho));
  return dir;
}

fs::path cmd_report(const fs::path& root, const std::vector<fs::path>& runs_in) {
  std::vector<fs::path> runs = runs_in;
  if (runs.empty()) {
    if (!fs::is_directory(root)) throw Error("report: " + root.string() + " is not a directory");
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory() && fs::exists(e.path() / "record.csv")) runs.push_back(e.path());
    std::sort(runs.begin(), runs.end());
  }
  if (runs.empty()) throw Error("report: no run directories found under " + root.string());

  fs::create_directories(root);
  const fs::path path = root / "report.csv";
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "run_id,arch,epochs,noise_kind,noise_f,weight_decay,mixup,n_train,min_noise_fitting,argmin_epoch,"
         "final_clean_val_loss,hf_within,hf_between,separation\n";
  for (const auto& dir : runs) {
    const ExperimentConfig c = load_config(dir / "config.json");
    const TrainRecord rec = read_record_csv(dir / "record.csv");
    const json& e = c.echo;
    out << dir.filename().string() << ',' << c.train.arch << ',' << rec.epochs() << ','
        << (c.noise ? to_string(c.noise->kind) : "none") << ','
        << (c.noise ? axis_value(e, "noise.f") : "") << ',' << csv::num(c.train.weight_decay) << ','
        << (e["train"]["mixup"].is_null() ? "" : axis_value(e, "train.mixup")) << ','
        << (c.train.n_train ? std::to_string(*c.train.n_train) : "") << ',';
    if (rec.has_noise && rec.epochs() > 0) {
      const NoiseFittingMin m = min_noise_fitting(rec);
      out << csv::num(m.value) << ',' << m.epoch + 1 << ',';
    } else {
      out << ",,";
    }
    out << (rec.epochs() > 0 ? csv::num(rec.clean_val_loss.back()) : "") << ',';
    if (const auto hf = final_probe(dir)) {
      out << csv::num(hf->within) << ',' << csv::num(hf->between) << ','
          << csv::num(hf->between - hf->within) << '\n';
    } else {
      out << ",,\n";
    }
  }
  return path;
}

}  // namespace specbias
