#ifndef SPECBIAS_ANALYSIS_HPP
#define SPECBIAS_ANALYSIS_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specbias/data.hpp"
#include "specbias/spectral.hpp"
#include "specbias/trainer.hpp"

namespace specbias {

struct ClassSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  Index count = 0;
};

struct CScoreTable {
  std::map<std::int64_t, double> scores;
  std::vector<ClassSummary> per_class;  // indexed by class; count 0 when unscored
};

/// Maps example ids to classes, e.g. from the validation set.
std::map<std::int64_t, int> label_map(const LabeledDataset& ds);

CScoreTable make_cscore_table(const std::map<std::int64_t, double>& scores,
                              const std::map<std::int64_t, int>& labels, int n_classes);

/// CSV with header example_id,score and scores in [0, 1].
CScoreTable load_cscores(const std::filesystem::path& path, const std::map<std::int64_t, int>& labels,
                         int n_classes);

struct ClassProfile {
  std::vector<PathAggregate> per_class;  // within-class hf_fraction per class
  std::vector<int> top;                  // highest mean hf first
  std::vector<int> bottom;               // lowest mean hf first
  Index skipped = 0;
};

/// Mean within-class hf_fraction per class; top/bottom hold j classes each.
ClassProfile class_frequency_profile(const PathPredictor& predictor, const LabeledDataset& val,
                                     int per_class, const ProbeOptions& opts, std::uint64_t seed,
                                     int j, const std::vector<int>& class_order = {});

/// Average ranks (1-based) with ties sharing the mean of their positions.
Vector average_ranks(const Vector& values);

struct SpearmanResult {
  double rho = 0.0;
  bool degenerate = false;  // a constant input, reported as rho = 0
};

/// Pearson correlation of average ranks.
SpearmanResult spearman(const Vector& x, const Vector& y);

struct CoherenceRow {
  int cls = 0;
  double mean_cscore = 0.0;
  double std_cscore = 0.0;
  double hf_within = 0.0;
};

struct CoherenceResult {
  SpearmanResult spearman;
  std::vector<CoherenceRow> table;
};

CoherenceResult correlate_coherence(const std::vector<PathAggregate>& per_class_hf,
                                    const CScoreTable& cscores);

/// class,mean_cscore,std_cscore,hf_within
void write_coherence_csv(const CoherenceResult& r, const std::filesystem::path& path);

struct SweepInput {
  std::string run_id;
  std::string value;  // the varied parameter, as written in the config
  std::optional<TrainRecord> record;
  std::optional<double> hf_within;
  std::optional<double> hf_between;
};

struct SweepRow {
  std::string run_id;
  std::string value;
  double min_noise_fitting = std::numeric_limits<double>::quiet_NaN();
  int argmin_epoch = -1;
  double final_clean_val_loss = std::numeric_limits<double>::quiet_NaN();
  double hf_within = std::numeric_limits<double>::quiet_NaN();
  double hf_between = std::numeric_limits<double>::quiet_NaN();
  double separation = std::numeric_limits<double>::quiet_NaN();
};

struct SweepSummary {
  std::string key;
  std::vector<SweepRow> rows;
};

/// Joins per-run results, sorted by value (numerically when every value
/// parses as a number). Duplicate values are an error.
SweepSummary summarize_sweep(const std::vector<SweepInput>& inputs, const std::string& key,
                             double beta = kDefaultEmaBeta);

/// run_id,<key>,min_noise_fitting,argmin_epoch,final_clean_val_loss,hf_within,hf_between,separation
void write_sweep_csv(const SweepSummary& s, const std::filesystem::path& path);

}  // namespace specbias

#endif  // SPECBIAS_ANALYSIS_HPP
