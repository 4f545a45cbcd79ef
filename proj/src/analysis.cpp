#include "specbias/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "specbias/csv.hpp"

namespace specbias {

std::map<std::int64_t, int> label_map(const LabeledDataset& ds) {
  std::map<std::int64_t, int> m;
  for (Index i = 0; i < ds.size(); ++i) m[ds.ids[i]] = ds.labels[i];
  return m;
}

CScoreTable make_cscore_table(const std::map<std::int64_t, double>& scores,
                              const std::map<std::int64_t, int>& labels, int n_classes) {
  CScoreTable t;
  t.scores = scores;
  std::vector<std::vector<double>> by_class(std::size_t(std::max(n_classes, 0)));
  for (const auto& [id, s] : scores) {
    if (!(s >= 0.0 && s <= 1.0))
      throw Error("C-score " + csv::num(s) + " for example " + std::to_string(id) + " outside [0, 1]");
    const auto it = labels.find(id);
    if (it == labels.end()) throw Error("C-score for unknown example_id " + std::to_string(id));
    if (it->second < 0 || it->second >= n_classes) throw Error("label map class out of range");
    by_class[std::size_t(it->second)].push_back(s);
  }
  for (const auto& v : by_class) {
    ClassSummary cs;
    cs.count = Index(v.size());
    if (!v.empty()) {
      cs.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - cs.mean) * (x - cs.mean);
      cs.std = std::sqrt(ss / double(v.size()));
    }
    t.per_class.push_back(cs);
  }
  return t;
}

CScoreTable load_cscores(const std::filesystem::path& path, const std::map<std::int64_t, int>& labels,
                         int n_classes) {
  std::map<std::int64_t, double> scores;
  for (const auto& row : csv::read(path, "example_id,score")) {
    const std::int64_t id = csv::parse_int(row[0]);
    if (!scores.emplace(id, csv::parse_double(row[1])).second)
      throw Error("duplicate example_id " + std::to_string(id) + " in " + path.string());
  }
  return make_cscore_table(scores, labels, n_classes);
}

ClassProfile class_frequency_profile(const PathPredictor& predictor, const LabeledDataset& val,
                                     int per_class, const ProbeOptions& opts, std::uint64_t seed,
                                     int j, const std::vector<int>& class_order) {
  if (j < 0) throw Error("class_frequency_profile: j must be >= 0");
  const auto pairs = sample_within_pairs(val, per_class, seed);
  std::vector<int> order = class_order;
  if (order.empty()) {
    order.resize(std::size_t(val.n_classes));
    std::iota(order.begin(), order.end(), 0);
  }
  std::vector<int> sorted_order = order;
  std::sort(sorted_order.begin(), sorted_order.end());
  for (int c = 0; c < val.n_classes; ++c)
    if (sorted_order.size() != std::size_t(val.n_classes) || sorted_order[std::size_t(c)] != c)
      throw Error("class_frequency_profile: class order is not a permutation of the classes");

  ClassProfile prof;
  prof.per_class.resize(std::size_t(val.n_classes));
  for (int c : order) {
    std::vector<ImagePair> mine;
    for (const auto& p : pairs)
      if (p.class_a == c) mine.push_back(p);
    const ProbeResult r = probe_paths(val, mine, predictor, opts);
    prof.skipped += r.skipped;
    std::vector<double> fr;
    for (const auto& pr : r.paths) fr.push_back(pr.hf_fraction);
    prof.per_class[std::size_t(c)] = aggregate_fractions(fr, "within:" + std::to_string(c));
  }

  std::vector<int> ranked(static_cast<std::size_t>(val.n_classes));
  std::iota(ranked.begin(), ranked.end(), 0);
  std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    return prof.per_class[std::size_t(a)].mean > prof.per_class[std::size_t(b)].mean;
  });
  const std::size_t take = std::min<std::size_t>(std::size_t(j), ranked.size());
  prof.top.assign(ranked.begin(), ranked.begin() + std::ptrdiff_t(take));
  std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    return prof.per_class[std::size_t(a)].mean < prof.per_class[std::size_t(b)].mean;
  });
  prof.bottom.assign(ranked.begin(), ranked.begin() + std::ptrdiff_t(take));
  return prof;
}

Vector average_ranks(const Vector& values) {
  const Index n = values.size();
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return values(a) < values(b); });
  Vector ranks(n);
  for (Index i = 0; i < n;) {
    Index k = i;
    while (k + 1 < n && values(idx[std::size_t(k + 1)]) == values(idx[std::size_t(i)])) ++k;
    const double r = 0.5 * double(i + k) + 1.0;
    for (Index t = i; t <= k; ++t) ranks(idx[std::size_t(t)]) = r;
    i = k + 1;
  }
  return ranks;
}

SpearmanResult spearman(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw Error("spearman: inputs differ in length");
  if (x.size() < 2) throw Error("spearman: need at least 2 values");
  const Vector rx = average_ranks(x), ry = average_ranks(y);
  const Vector cx = rx.array() - rx.mean(), cy = ry.array() - ry.mean();
  const double sxx = cx.squaredNorm(), syy = cy.squaredNorm();
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {cx.dot(cy) / std::sqrt(sxx * syy), false};
}

CoherenceResult correlate_coherence(const std::vector<PathAggregate>& per_class_hf,
                                    const CScoreTable& cscores) {
  if (per_class_hf.size() != cscores.per_class.size())
    throw Error("correlate_coherence: profile has " + std::to_string(per_class_hf.size()) +
                " classes, C-scores cover " + std::to_string(cscores.per_class.size()));
  CoherenceResult r;
  for (std::size_t c = 0; c < per_class_hf.size(); ++c) {
    if (cscores.per_class[c].count == 0 || per_class_hf[c].count == 0)
      throw Error("correlate_coherence: class " + std::to_string(c) + " is missing from one side");
    r.table.push_back({int(c), cscores.per_class[c].mean, cscores.per_class[c].std,
                       per_class_hf[c].mean});
  }
  if (r.table.size() < 3) throw Error("correlate_coherence: need at least 3 classes");
  Vector cs(Index(r.table.size())), hf(Index(r.table.size()));
  for (std::size_t i = 0; i < r.table.size(); ++i) {
    cs(Index(i)) = r.table[i].mean_cscore;
    hf(Index(i)) = r.table[i].hf_within;
  }
  r.spearman = spearman(cs, hf);
  return r;
}

void write_coherence_csv(const CoherenceResult& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "class,mean_cscore,std_cscore,hf_within\n";
  for (const auto& row : r.table)
    out << row.cls << ',' << csv::num(row.mean_cscore) << ',' << csv::num(row.std_cscore) << ','
        << csv::num(row.hf_within) << '\n';
}

SweepSummary summarize_sweep(const std::vector<SweepInput>& inputs, const std::string& key,
                             double beta) {
  SweepSummary s;
  s.key = key;
  std::set<std::string> seen;
  bool numeric = true;
  for (const auto& in : inputs) {
    if (!seen.insert(in.value).second) throw Error("summarize_sweep: duplicate key value " + in.value);
    try {
      csv::parse_double(in.value);
    } catch (const Error&) {
      numeric = false;
    }
    SweepRow row;
    row.run_id = in.run_id;
    row.value = in.value;
    if (in.record && in.record->epochs() > 0) {
      if (in.record->has_noise) {
        const auto m = min_noise_fitting(*in.record, beta);
        row.min_noise_fitting = m.value;
        row.argmin_epoch = m.epoch + 1;
      }
      row.final_clean_val_loss = in.record->clean_val_loss.back();
    }
    if (in.hf_within) row.hf_within = *in.hf_within;
    if (in.hf_between) row.hf_between = *in.hf_between;
    if (in.hf_within && in.hf_between) row.separation = *in.hf_between - *in.hf_within;
    s.rows.push_back(row);
  }
  std::stable_sort(s.rows.begin(), s.rows.end(), [numeric](const SweepRow& a, const SweepRow& b) {
    return numeric ? csv::parse_double(a.value) < csv::parse_double(b.value) : a.value < b.value;
  });
  return s;
}

void write_sweep_csv(const SweepSummary& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "run_id," << s.key
      << ",min_noise_fitting,argmin_epoch,final_clean_val_loss,hf_within,hf_between,separation\n";
  for (const auto& r : s.rows)
    out << r.run_id << ',' << r.value << ',' << csv::num(r.min_noise_fitting) << ',' << r.argmin_epoch
        << ',' << csv::num(r.final_clean_val_loss) << ',' << csv::num(r.hf_within) << ','
        << csv::num(r.hf_between) << ',' << csv::num(r.separation) << '\n';
}

}  // namespace specbias
