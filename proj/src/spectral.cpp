#include "specbias/spectral.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <unsupported/Eigen/FFT>

namespace specbias {

std::string to_string(PairKind k) { return k == PairKind::within ? "within" : "between"; }

std::string to_string(FrequencyUnits u) {
  return u == FrequencyUnits::per_sample ? "per_sample" : "per_distance";
}

FrequencyUnits frequency_units_from_string(const std::string& s) {
  if (s == "per_sample") return FrequencyUnits::per_sample;
  if (s == "per_distance") return FrequencyUnits::per_distance;
  throw Error("unknown frequency units '" + s + "' (expected per_sample or per_distance)");
}

namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t tag, std::uint32_t a, std::uint32_t b) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), tag, a, b};
  return std::mt19937_64(seq);
}

// k distinct values from [0, n), Floyd's algorithm; returned sorted.
std::vector<std::uint64_t> sample_distinct(std::uint64_t n, std::uint64_t k, std::mt19937_64& rng) {
  std::set<std::uint64_t> chosen;
  for (std::uint64_t j = n - k; j < n; ++j) {
    std::uniform_int_distribution<std::uint64_t> u(0, j);
    const std::uint64_t t = u(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return {chosen.begin(), chosen.end()};
}

std::vector<std::vector<Index>> members_by_class(const LabeledDataset& val) {
  std::vector<std::vector<Index>> members(std::size_t(val.n_classes));
  for (Index i = 0; i < val.size(); ++i) members[std::size_t(val.labels[i])].push_back(i);
  return members;
}

ImagePair make_pair(const LabeledDataset& val, PairKind kind, Index a, Index b) {
  ImagePair p;
  p.kind = kind;
  p.a = a;
  p.b = b;
  p.id_a = val.ids[a];
  p.id_b = val.ids[b];
  p.class_a = val.labels[a];
  p.class_b = val.labels[b];
  return p;
}

}  // namespace

std::vector<ImagePair> sample_within_pairs(const LabeledDataset& val, int per_class,
                                           std::uint64_t seed) {
  if (per_class < 1) throw Error("sample_within_pairs: per_class must be >= 1");
  const auto members = members_by_class(val);
  std::vector<ImagePair> out;
  for (int c = 0; c < val.n_classes; ++c) {
    const auto& m = members[std::size_t(c)];
    const std::uint64_t n = m.size();
    if (n < 2)
      throw Error("sample_within_pairs: class " + std::to_string(c) + " has " + std::to_string(n) +
                  " examples, need at least 2");
    const std::uint64_t total = n * (n - 1) / 2;
    if (std::uint64_t(per_class) > total)
      throw Error("sample_within_pairs: class " + std::to_string(c) + " has only " +
                  std::to_string(total) + " distinct pairs, " + std::to_string(per_class) +
                  " requested");
    auto rng = stream_rng(seed, 1, std::uint32_t(c), 0);
    for (std::uint64_t idx : sample_distinct(total, std::uint64_t(per_class), rng)) {
      // Row i of the upper triangle holds n - 1 - i pairs (i, j > i).
      std::uint64_t i = 0, rem = idx;
      while (rem >= n - 1 - i) {
        rem -= n - 1 - i;
        ++i;
      }
      const std::uint64_t j = i + 1 + rem;
      out.push_back(make_pair(val, PairKind::within, m[i], m[j]));
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) out[k].pair_id = std::int64_t(k);
  return out;
}

std::vector<ImagePair> sample_between_pairs(const LabeledDataset& val, int per_class_pair,
                                            std::uint64_t seed) {
  if (per_class_pair < 1) throw Error("sample_between_pairs: per_class_pair must be >= 1");
  if (val.n_classes < 2) throw Error("sample_between_pairs: need at least 2 classes");
  const auto members = members_by_class(val);
  for (int c = 0; c < val.n_classes; ++c)
    if (members[std::size_t(c)].empty())
      throw Error("sample_between_pairs: class " + std::to_string(c) + " is empty");
  std::vector<ImagePair> out;
  for (int ca = 0; ca < val.n_classes; ++ca)
    for (int cb = ca + 1; cb < val.n_classes; ++cb) {
      const auto& ma = members[std::size_t(ca)];
      const auto& mb = members[std::size_t(cb)];
      const std::uint64_t total = std::uint64_t(ma.size()) * mb.size();
      if (std::uint64_t(per_class_pair) > total)
        throw Error("sample_between_pairs: classes " + std::to_string(ca) + "/" + std::to_string(cb) +
                    " have only " + std::to_string(total) + " combinations");
      auto rng = stream_rng(seed, 2, std::uint32_t(ca), std::uint32_t(cb));
      for (std::uint64_t idx : sample_distinct(total, std::uint64_t(per_class_pair), rng))
        out.push_back(make_pair(val, PairKind::between, ma[idx / mb.size()], mb[idx % mb.size()]));
    }
  for (std::size_t k = 0; k < out.size(); ++k) out[k].pair_id = std::int64_t(k);
  return out;
}

Path interpolate_path(const Eigen::Ref<const Vector>& x0, const Eigen::Ref<const Vector>& x1,
                      double delta, int max_samples) {
  if (x0.size() != x1.size()) throw Error("interpolate_path: endpoint sizes differ");
  if (!(delta > 0.0)) throw Error("interpolate_path: delta must be > 0");
  if (max_samples < 2) throw Error("interpolate_path: max_samples must be >= 2");
  const double dist = (x1 - x0).norm();
  if (dist == 0.0) throw Error("interpolate_path: identical endpoints");
  if (dist < delta)
    throw Error("interpolate_path: endpoint distance " + std::to_string(dist) +
                " is below the spacing " + std::to_string(delta));
  const Index t_count = std::min<Index>(Index(std::llround(dist / delta)) + 1, max_samples);
  Path p;
  p.lambdas.resize(t_count);
  p.samples.resize(x0.size(), t_count);
  for (Index t = 0; t < t_count; ++t) {
    const double lam = double(t) / double(t_count - 1);
    p.lambdas(t) = lam;
    p.samples.col(t) = lam * x1 + (1.0 - lam) * x0;
  }
  p.samples.col(0) = x0;
  p.samples.col(t_count - 1) = x1;
  p.spacing = dist / double(t_count - 1);
  return p;
}

Path interpolate_path(const LabeledDataset& val, const ImagePair& pair, double delta,
                      int max_samples) {
  Path p = interpolate_path(val.images.col(pair.a), val.images.col(pair.b), delta, max_samples);
  p.pair = pair;
  return p;
}

Matrix predict_path(const Model& model, const Path& path) { return predict(model, path.samples); }

std::vector<SmoothedLabel> oracle_path(int label, int n_classes, const NoiseSpec& spec,
                                       const Path& path) {
  if (path.pair.kind != PairKind::within || path.pair.class_a != path.pair.class_b)
    throw Error("oracle_path: only within-class paths have a fixed source label");
  std::vector<SmoothedLabel> out;
  out.reserve(std::size_t(path.length()));
  for (Index t = 0; t < path.length(); ++t)
    out.push_back(smooth_label(label, n_classes, noise_value(path.samples.col(t), spec)));
  return out;
}

Matrix stack_probs(const std::vector<SmoothedLabel>& labels) {
  if (labels.empty()) return {};
  Matrix m(labels.front().probs.size(), Index(labels.size()));
  for (std::size_t t = 0; t < labels.size(); ++t) m.col(Index(t)) = labels[t].probs;
  return m;
}

Vector diff_norm_curve(const Matrix& preds) {
  if (preds.cols() == 0) throw Error("diff_norm_curve: empty sequence");
  return (preds.colwise() - preds.col(0)).colwise().norm().transpose();
}

Vector bucket_average(const std::vector<Curve>& curves, int n_buckets) {
  if (n_buckets < 1) throw Error("bucket_average: n_buckets must be >= 1");
  if (curves.empty()) throw Error("bucket_average: no curves");
  Vector sum = Vector::Zero(n_buckets);
  Eigen::VectorXi count = Eigen::VectorXi::Zero(n_buckets);
  for (const auto& c : curves) {
    if (c.lambdas.size() != c.values.size()) throw Error("bucket_average: curve lambdas/values differ");
    for (Index t = 0; t < c.values.size(); ++t) {
      const int b = std::clamp(int(std::floor(c.lambdas(t) * n_buckets)), 0, n_buckets - 1);
      sum(b) += c.values(t);
      ++count(b);
    }
  }
  Vector out(n_buckets);
  for (int b = 0; b < n_buckets; ++b)
    out(b) = count(b) ? sum(b) / count(b) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

Matrix path_dft(const Matrix& preds) {
  const Index t_count = preds.cols();
  if (t_count < 2) throw Error("path_dft: need at least 2 samples");
  const Index bins = t_count / 2 + 1;
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  Matrix mags(preds.rows(), bins);
  std::vector<double> in(static_cast<std::size_t>(t_count));
  std::vector<std::complex<double>> out;
  for (Index m = 0; m < preds.rows(); ++m) {
    for (Index t = 0; t < t_count; ++t) in[std::size_t(t)] = preds(m, t);
    fft.fwd(out, in);
    for (Index k = 0; k < bins; ++k) mags(m, k) = std::abs(out[std::size_t(k)]);
  }
  return mags;
}

Vector dft_frequencies(Index length) {
  if (length < 2) throw Error("dft_frequencies: need at least 2 samples");
  const Index bins = length / 2 + 1;
  return Vector::LinSpaced(bins, 0.0, double(bins - 1)) / double(length);
}

double hf_fraction(const Matrix& magnitudes, const Vector& frequencies, double threshold) {
  if (magnitudes.cols() == 0 || magnitudes.rows() == 0) throw Error("hf_fraction: empty spectrum");
  if (frequencies.size() != magnitudes.cols()) throw Error("hf_fraction: frequency grid mismatch");
  const Vector avg = magnitudes.colwise().mean().transpose();
  const double total = avg.sum();
  if (!(total > 0.0)) throw Error("hf_fraction: all-zero spectrum");
  double high = 0.0;
  for (Index k = 0; k < avg.size(); ++k)
    if (frequencies(k) > threshold) high += avg(k);
  return high / total;
}

SpectrumResult spectrum(const Matrix& preds, double threshold, FrequencyUnits units,
                        double spacing) {
  SpectrumResult r;
  r.per_class = path_dft(preds);
  r.class_average = r.per_class.colwise().mean().transpose();
  r.frequencies = dft_frequencies(preds.cols());
  if (units == FrequencyUnits::per_distance) {
    if (!(spacing > 0.0)) throw Error("spectrum: per-distance units need a positive spacing");
    r.frequencies /= spacing;
  }
  r.threshold = threshold;
  r.hf_fraction = hf_fraction(r.per_class, r.frequencies, threshold);
  return r;
}

PathAggregate aggregate_fractions(const std::vector<double>& fractions, std::string group) {
  if (fractions.empty()) throw Error("aggregate: empty group '" + group + "'");
  PathAggregate a;
  a.group = std::move(group);
  a.count = Index(fractions.size());
  double sum = 0.0;
  for (double f : fractions) sum += f;
  a.mean = sum / double(a.count);
  if (a.count > 1) {
    double ss = 0.0;
    for (double f : fractions) ss += (f - a.mean) * (f - a.mean);
    a.sem = std::sqrt(ss / double(a.count - 1)) / std::sqrt(double(a.count));
  }
  return a;
}

std::vector<PathAggregate> aggregate_paths(const std::vector<PathResult>& results, Grouping grouping) {
  std::vector<const PathResult*> sorted;
  for (const auto& r : results) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const PathResult* x, const PathResult* y) { return x->pair.pair_id < y->pair.pair_id; });
  std::map<std::string, std::vector<double>> groups;
  for (const auto* r : sorted) {
    std::string key = to_string(r->pair.kind);
    if (grouping == Grouping::kind_and_class) key += ":" + std::to_string(r->pair.class_a);
    groups[key].push_back(r->hf_fraction);
  }
  std::vector<PathAggregate> out;
  for (auto& [key, fr] : groups) out.push_back(aggregate_fractions(fr, key));
  return out;
}

PathPredictor model_predictor(const Model& model) {
  return [&model](const Path& p) { return predict_path(model, p); };
}

PathPredictor oracle_predictor(int n_classes, const NoiseSpec& spec) {
  return [n_classes, spec](const Path& p) {
    return stack_probs(oracle_path(p.pair.class_a, n_classes, spec, p));
  };
}

ProbeResult probe_paths(const LabeledDataset& val, const std::vector<ImagePair>& pairs,
                        const PathPredictor& predictor, const ProbeOptions& opts) {
  ProbeResult out;
  for (const auto& pair : pairs) {
    const double dist = (val.images.col(pair.b) - val.images.col(pair.a)).norm();
    if (dist == 0.0 || dist < opts.delta) {
      ++out.skipped;
      continue;
    }
    const Path path = interpolate_path(val, pair, opts.delta, opts.max_samples);
    const Matrix preds = predictor(path);
    const SpectrumResult sr = spectrum(preds, opts.threshold, opts.units, path.spacing);
    out.paths.push_back({pair, path.length(), path.spacing, sr.hf_fraction});
    out.curves.push_back({path.lambdas, diff_norm_curve(preds)});
  }
  return out;
}

namespace {

constexpr char kDumpMagic[8] = {'S', 'B', 'P', 'R', 'E', 'D', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("prediction dump truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_prediction_dump(const std::filesystem::path& path, const Vector& lambdas,
                           const Matrix& preds) {
  if (lambdas.size() != preds.cols()) throw Error("prediction dump: lambda grid does not match T");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kDumpMagic, 8);
  put_u64(out, std::uint64_t(preds.cols()));
  put_u64(out, std::uint64_t(preds.rows()));
  for (Index t = 0; t < lambdas.size(); ++t) put_u64(out, std::bit_cast<std::uint64_t>(lambdas(t)));
  for (Index t = 0; t < preds.cols(); ++t)
    for (Index m = 0; m < preds.rows(); ++m) put_u64(out, std::bit_cast<std::uint64_t>(preds(m, t)));
}

PredictionDump read_prediction_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kDumpMagic))
    throw Error("not a prediction dump: " + path.string());
  const std::uint64_t t_count = get_u64(in), m_count = get_u64(in);
  if (t_count < 1 || m_count < 1 || t_count > (1u << 20) || m_count > (1u << 20))
    throw Error("prediction dump has an implausible header: " + path.string());
  PredictionDump d;
  d.lambdas.resize(Index(t_count));
  d.preds.resize(Index(m_count), Index(t_count));
  for (Index t = 0; t < Index(t_count); ++t) d.lambdas(t) = std::bit_cast<double>(get_u64(in));
  for (Index t = 0; t < Index(t_count); ++t)
    for (Index m = 0; m < Index(m_count); ++m) d.preds(m, t) = std::bit_cast<double>(get_u64(in));
  if (in.peek() != std::char_traits<char>::eof()) throw Error("trailing bytes in " + path.string());
  return d;
}

}  // namespace specbias
