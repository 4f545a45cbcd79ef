#include "specbias/model.hpp"

#include "specbias/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>

namespace specbias {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

TensorShape conv_output(const TensorShape& in, const ConvSpec& c) {
  const int h = (in.height + 2 * c.padding - c.kernel) / c.stride + 1;
  const int w = (in.width + 2 * c.padding - c.kernel) / c.stride + 1;
  return {c.out_channels, h, w};
}

}  // namespace

std::string layer_name(const LayerSpec& l) {
  return std::visit(overloaded{
                        [](const ConvSpec&) { return std::string("conv"); },
                        [](const ReluSpec&) { return std::string("relu"); },
                        [](const MaxPoolSpec&) { return std::string("maxpool"); },
                        [](const FlattenSpec&) { return std::string("flatten"); },
                        [](const DenseSpec&) { return std::string("dense"); },
                    },
                    l);
}

std::vector<TensorShape> ArchSpec::propagate() const {
  if (!input.valid()) throw Error("arch '" + name + "': invalid input shape " + to_string(input));
  if (n_outputs < 1) throw Error("arch '" + name + "': output size must be >= 1");
  if (layers.empty()) throw Error("arch '" + name + "': no layers");
  std::vector<TensorShape> shapes;
  TensorShape cur{input.c, input.d, input.d};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = "arch '" + name + "' layer " + std::to_string(i) + " (" +
                              layer_name(layers[i]) + "): ";
    cur = std::visit(
        overloaded{
            [&](const ConvSpec& c) {
              if (c.out_channels < 1 || c.kernel < 1 || c.stride < 1 || c.padding < 0)
                throw Error(where + "bad conv parameters");
              TensorShape o = conv_output(cur, c);
              if (o.height < 1 || o.width < 1) throw Error(where + "kernel larger than input");
              return o;
            },
            [&](const ReluSpec&) { return cur; },
            [&](const MaxPoolSpec& p) {
              if (p.window < 1) throw Error(where + "window must be >= 1");
              TensorShape o{cur.channels, cur.height / p.window, cur.width / p.window};
              if (o.height < 1 || o.width < 1) throw Error(where + "window larger than input");
              return o;
            },
            [&](const FlattenSpec&) { return TensorShape{int(cur.size()), 1, 1}; },
            [&](const DenseSpec& dn) {
              if (dn.out_features < 1) throw Error(where + "out_features must be >= 1");
              if (cur.height != 1 || cur.width != 1) throw Error(where + "input is not flat");
              return TensorShape{dn.out_features, 1, 1};
            },
        },
        layers[i]);
    shapes.push_back(cur);
  }
  if (!(shapes.back() == TensorShape{n_outputs, 1, 1}))
    throw Error("arch '" + name + "': final layer does not produce " + std::to_string(n_outputs) +
                " outputs");
  return shapes;
}

bool operator==(const ArchSpec& a, const ArchSpec& b) { return arch_to_json(a) == arch_to_json(b); }

ArchSpec make_arch(const std::string& name, const ImageShape& input, int n_outputs,
                   const ArchOptions& opts) {
  ArchSpec a;
  a.name = name;
  a.input = input;
  a.n_outputs = n_outputs;
  if (name == "tiny-mlp") {
    a.layers = {FlattenSpec{}, DenseSpec{opts.hidden}, ReluSpec{}, DenseSpec{n_outputs}};
  } else if (name == "tiny-cnn") {
    a.layers = {ConvSpec{opts.conv1, 3, 1, 1}, ReluSpec{}, MaxPoolSpec{2},
                ConvSpec{opts.conv2, 3, 1, 1}, ReluSpec{}, MaxPoolSpec{2},
                FlattenSpec{},                 DenseSpec{n_outputs}};
  } else {
    throw Error("unknown architecture '" + name + "' (expected tiny-mlp or tiny-cnn)");
  }
  a.propagate();
  return a;
}

nlohmann::json arch_to_json(const ArchSpec& arch) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : arch.layers) {
    layers.push_back(std::visit(
        overloaded{
            [](const ConvSpec& c) {
              return nlohmann::json{{"type", "conv"},     {"out_channels", c.out_channels},
                                    {"kernel", c.kernel}, {"stride", c.stride},
                                    {"padding", c.padding}};
            },
            [](const ReluSpec&) { return nlohmann::json{{"type", "relu"}}; },
            [](const MaxPoolSpec& p) { return nlohmann::json{{"type", "maxpool"}, {"window", p.window}}; },
            [](const FlattenSpec&) { return nlohmann::json{{"type", "flatten"}}; },
            [](const DenseSpec& d) {
              return nlohmann::json{{"type", "dense"}, {"out_features", d.out_features}};
            },
        },
        l));
  }
  return {{"name", arch.name},
          {"input", {{"d", arch.input.d}, {"c", arch.input.c}}},
          {"outputs", arch.n_outputs},
          {"layers", layers}};
}

ArchSpec arch_from_json(const nlohmann::json& j) {
  try {
    ArchSpec a;
    a.name = j.at("name").get<std::string>();
    a.input = {j.at("input").at("d").get<int>(), j.at("input").at("c").get<int>()};
    a.n_outputs = j.at("outputs").get<int>();
    for (const auto& l : j.at("layers")) {
      const auto type = l.at("type").get<std::string>();
      if (type == "conv") {
        a.layers.push_back(ConvSpec{l.at("out_channels").get<int>(), l.at("kernel").get<int>(),
                                    l.value("stride", 1), l.value("padding", 0)});
      } else if (type == "relu") {
        a.layers.push_back(ReluSpec{});
      } else if (type == "maxpool") {
        a.layers.push_back(MaxPoolSpec{l.at("window").get<int>()});
      } else if (type == "flatten") {
        a.layers.push_back(FlattenSpec{});
      } else if (type == "dense") {
        a.layers.push_back(DenseSpec{l.at("out_features").get<int>()});
      } else {
        throw Error("unknown layer type '" + type + "'");
      }
    }
    a.propagate();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed arch description: ") + e.what());
  }
}

Model::Model(ArchSpec arch, std::uint64_t seed) : arch_(std::move(arch)), seed_(seed) {
  shapes_ = arch_.propagate();
  TensorShape in{arch_.input.c, arch_.input.d, arch_.input.d};
  Index offset = 0;
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    if (const auto* c = std::get_if<ConvSpec>(&arch_.layers[i])) {
      ParamBlock b{int(i), offset, c->out_channels, Index(in.channels) * c->kernel * c->kernel};
      blocks_.push_back(b);
      offset += b.size();
    } else if (const auto* d = std::get_if<DenseSpec>(&arch_.layers[i])) {
      ParamBlock b{int(i), offset, d->out_features, in.size()};
      blocks_.push_back(b);
      offset += b.size();
    }
    in = shapes_[i];
  }
  params_ = Vector::Zero(offset);
}

Model init_model(const ArchSpec& arch, std::uint64_t seed) {
  Model m(arch, seed);
  std::mt19937_64 rng(seed);
  for (const auto& b : m.blocks()) {
    const double bound = std::sqrt(6.0 / double(b.cols));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto w = m.weights(b);
    for (Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
    m.bias(b).setZero();
  }
  return m;
}

void zero_output_layer(Model& model) {
  for (auto it = model.blocks().rbegin(); it != model.blocks().rend(); ++it) {
    if (std::holds_alternative<DenseSpec>(model.arch().layers[it->layer])) {
      model.weights(*it).setZero();
      model.bias(*it).setZero();
      return;
    }
  }
  throw Error("zero_output_layer: model has no dense layer");
}

Matrix softmax(const Matrix& logits) {
  Matrix p = logits.rowwise() - logits.colwise().maxCoeff();
  p = p.array().exp();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

namespace {

// Forward activations and per-layer scratch kept for the backward pass.
struct Tape {
  std::vector<Matrix> acts;  // acts[0] is the input, acts[i + 1] the output of layer i
  std::vector<Matrix> cols;
  std::vector<std::vector<Index>> argmax;
};

// Patch matrix with one row per (example, output position) and one column
// per (input channel, kernel row, kernel column).
void im2col(const Matrix& in, const TensorShape& is, const ConvSpec& c, const TensorShape& os,
            Matrix& cols) {
  const Index batch = in.cols();
  const Index positions = Index(os.height) * os.width;
  cols.setZero(positions * batch, Index(is.channels) * c.kernel * c.kernel);
  for (Index b = 0; b < batch; ++b)
    for (int ch = 0; ch < is.channels; ++ch)
      for (int ki = 0; ki < c.kernel; ++ki)
        for (int kj = 0; kj < c.kernel; ++kj) {
          const Index col = (Index(ch) * c.kernel + ki) * c.kernel + kj;
          double* dst = cols.col(col).data() + b * positions;
          const double* src = in.col(b).data() + Index(ch) * is.height * is.width;
          for (int oy = 0; oy < os.height; ++oy) {
            const int iy = oy * c.stride - c.padding + ki;
            if (iy < 0 || iy >= is.height) continue;
            for (int ox = 0; ox < os.width; ++ox) {
              const int ix = ox * c.stride - c.padding + kj;
              if (ix < 0 || ix >= is.width) continue;
              dst[oy * os.width + ox] = src[iy * is.width + ix];
            }
          }
        }
}

void col2im(const Matrix& dcols, const TensorShape& is, const ConvSpec& c, const TensorShape& os,
            Matrix& din) {
  const Index batch = din.cols();
  const Index positions = Index(os.height) * os.width;
  din.setZero();
  for (Index b = 0; b < batch; ++b)
    for (int ch = 0; ch < is.channels; ++ch)
      for (int ki = 0; ki < c.kernel; ++ki)
        for (int kj = 0; kj < c.kernel; ++kj) {
          const Index col = (Index(ch) * c.kernel + ki) * c.kernel + kj;
          const double* src = dcols.col(col).data() + b * positions;
          double* dst = din.col(b).data() + Index(ch) * is.height * is.width;
          for (int oy = 0; oy < os.height; ++oy) {
            const int iy = oy * c.stride - c.padding + ki;
            if (iy < 0 || iy >= is.height) continue;
            for (int ox = 0; ox < os.width; ++ox) {
              const int ix = ox * c.stride - c.padding + kj;
              if (ix < 0 || ix >= is.width) continue;
              dst[iy * is.width + ix] += src[oy * os.width + ox];
            }
          }
        }
}

Matrix forward(const Model& model, const Matrix& batch, Tape* tape) {
  const auto& arch = model.arch();
  if (batch.rows() != arch.input.size())
    throw Error("input has " + std::to_string(batch.rows()) + " features, arch '" + arch.name +
                "' expects " + to_string(arch.input));
  const Index n = batch.cols();
  TensorShape in_shape{arch.input.c, arch.input.d, arch.input.d};
  Matrix cur = batch;
  if (tape) {
    tape->acts.assign(1, batch);
    tape->cols.assign(arch.layers.size(), Matrix());
    tape->argmax.assign(arch.layers.size(), {});
  }
  std::size_t block = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const TensorShape& os = model.shapes()[i];
    Matrix out(os.size(), n);
    std::visit(overloaded{
                   [&](const ConvSpec& c) {
                     const auto& pb = model.blocks()[block++];
                     Matrix local;
                     Matrix& cols = tape ? tape->cols[i] : local;
                     im2col(cur, in_shape, c, os, cols);
                     Matrix prod = cols * model.weights(pb).transpose();
                     prod.rowwise() += model.bias(pb).transpose();
                     const Index positions = Index(os.height) * os.width;
                     for (Index b = 0; b < n; ++b)
                       for (int k = 0; k < os.channels; ++k)
                         out.col(b).segment(k * positions, positions) =
                             prod.col(k).segment(b * positions, positions);
                   },
                   [&](const ReluSpec&) { out = cur.cwiseMax(0.0); },
                   [&](const MaxPoolSpec& p) {
                     std::vector<Index> local;
                     auto& arg = tape ? tape->argmax[i] : local;
                     arg.assign(std::size_t(os.size() * n), 0);
                     for (Index b = 0; b < n; ++b)
                       for (int ch = 0; ch < os.channels; ++ch)
                         for (int oy = 0; oy < os.height; ++oy)
                           for (int ox = 0; ox < os.width; ++ox) {
                             Index best = -1;
                             double best_v = 0.0;
                             for (int wy = 0; wy < p.window; ++wy)
                               for (int wx = 0; wx < p.window; ++wx) {
                                 const Index idx =
                                     (Index(ch) * in_shape.height + oy * p.window + wy) *
                                         in_shape.width +
                                     ox * p.window + wx;
                                 const double v = cur(idx, b);
                                 if (best < 0 || v > best_v) {
                                   best = idx;
                                   best_v = v;
                                 }
                               }
                             const Index o = (Index(ch) * os.height + oy) * os.width + ox;
                             out(o, b) = best_v;
                             arg[std::size_t(b * os.size() + o)] = best;
                           }
                   },
                   [&](const FlattenSpec&) { out = cur; },
                   [&](const DenseSpec&) {
                     const auto& pb = model.blocks()[block++];
                     out.noalias() = model.weights(pb) * cur;
                     out.colwise() += model.bias(pb);
                   },
               },
               arch.layers[i]);
    if (tape) tape->acts.push_back(out);
    cur = std::move(out);
    in_shape = os;
  }
  return cur;
}

// Per-column loss and gradient with respect to the logits.
double soft_ce_logit_grad(const Matrix& z, const Matrix& targets, Matrix* dz) {
  const Index n = z.cols();
  double total = 0.0;
  if (dz) dz->resize(z.rows(), n);
  for (Index b = 0; b < n; ++b) {
    const double zmax = z.col(b).maxCoeff();
    const Vector shifted = z.col(b).array() - zmax;
    const double log_sum = std::log(shifted.array().exp().sum());
    const Vector logp = shifted.array() - log_sum;
    const Vector p = logp.array().exp();
    double mass = 0.0;  // target mass on classes whose probability is above the floor
    for (Index m = 0; m < z.rows(); ++m) {
      const double t = targets(m, b);
      if (p(m) >= kLogFloor) {
        total -= t * logp(m);
        mass += t;
      } else {
        total -= t * std::log(kLogFloor);
      }
    }
    if (dz) {
      for (Index m = 0; m < z.rows(); ++m)
        (*dz)(m, b) = (p(m) * mass - (p(m) >= kLogFloor ? targets(m, b) : 0.0)) / double(n);
    }
  }
  return total / double(n);
}

void check_targets(const Matrix& targets, Index rows, Index cols) {
  if (targets.rows() != rows || targets.cols() != cols)
    throw Error("targets are " + std::to_string(targets.rows()) + "x" +
                std::to_string(targets.cols()) + ", expected " + std::to_string(rows) + "x" +
                std::to_string(cols));
  for (Index b = 0; b < cols; ++b)
    if (!on_simplex(targets.col(b), 1e-6))
      throw Error("target column " + std::to_string(b) + " is not on the probability simplex");
}

}  // namespace

Matrix logits(const Model& model, const Matrix& batch) {
  constexpr Index kChunk = 256;
  if (batch.cols() <= kChunk) return forward(model, batch, nullptr);
  Matrix out(model.arch().n_outputs, batch.cols());
  for (Index start = 0; start < batch.cols(); start += kChunk) {
    const Index len = std::min(kChunk, batch.cols() - start);
    out.middleCols(start, len) = forward(model, batch.middleCols(start, len), nullptr);
  }
  return out;
}

Matrix predict(const Model& model, const Matrix& batch) {
  const Matrix z = logits(model, batch);
  if (!z.allFinite()) throw Error("predict: non-finite activations");
  return softmax(z);
}

double cross_entropy(const Matrix& probs, const Matrix& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols())
    throw Error("cross_entropy: shape mismatch");
  if (probs.cols() == 0) throw Error("cross_entropy: empty batch");
  const Matrix logp = probs.cwiseMax(kLogFloor).array().log();
  return -(targets.array() * logp.array()).sum() / double(probs.cols());
}

LossGrad loss_and_grads(const Model& model, const Matrix& batch, const Matrix& targets) {
  if (batch.cols() == 0) throw Error("loss_and_grads: empty batch");
  check_targets(targets, model.arch().n_outputs, batch.cols());
  Tape tape;
  const Matrix z = forward(model, batch, &tape);
  if (!z.allFinite()) throw Error("loss_and_grads: non-finite activations");

  LossGrad out;
  Matrix delta;
  out.loss = soft_ce_logit_grad(z, targets, &delta);
  out.grads = Vector::Zero(model.parameter_count());

  const auto& arch = model.arch();
  const Index n = batch.cols();
  std::size_t block = model.blocks().size();
  for (std::size_t li = arch.layers.size(); li-- > 0;) {
    const Matrix& in = tape.acts[li];
    const TensorShape is = li == 0 ? TensorShape{arch.input.c, arch.input.d, arch.input.d}
                                   : model.shapes()[li - 1];
    const TensorShape& os = model.shapes()[li];
    Matrix din(in.rows(), n);
    std::visit(overloaded{
                   [&](const ConvSpec& c) {
                     const auto& pb = model.blocks()[--block];
                     const Index positions = Index(os.height) * os.width;
                     Matrix dprod(positions * n, os.channels);
                     for (Index b = 0; b < n; ++b)
                       for (int k = 0; k < os.channels; ++k)
                         dprod.col(k).segment(b * positions, positions) =
                             delta.col(b).segment(k * positions, positions);
                     Eigen::Map<Matrix> dw(out.grads.data() + pb.offset, pb.rows, pb.cols);
                     dw.noalias() = dprod.transpose() * tape.cols[li];
                     Eigen::Map<Vector>(out.grads.data() + pb.bias_offset(), pb.rows) =
                         dprod.colwise().sum().transpose();
                     if (li > 0) {
                       const Matrix dcols = dprod * model.weights(pb);
                       col2im(dcols, is, c, os, din);
                     }
                   },
                   [&](const ReluSpec&) {
                     din = (in.array() > 0.0).select(delta, 0.0);
                   },
                   [&](const MaxPoolSpec&) {
                     din.setZero();
                     const auto& arg = tape.argmax[li];
                     for (Index b = 0; b < n; ++b)
                       for (Index o = 0; o < os.size(); ++o)
                         din(arg[std::size_t(b * os.size() + o)], b) += delta(o, b);
                   },
                   [&](const FlattenSpec&) { din = delta; },
                   [&](const DenseSpec&) {
                     const auto& pb = model.blocks()[--block];
                     Eigen::Map<Matrix> dw(out.grads.data() + pb.offset, pb.rows, pb.cols);
                     dw.noalias() = delta * in.transpose();
                     Eigen::Map<Vector>(out.grads.data() + pb.bias_offset(), pb.rows) =
                         delta.rowwise().sum();
                     if (li > 0) din.noalias() = model.weights(pb).transpose() * delta;
                   },
               },
               arch.layers[li]);
    delta = std::move(din);
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'S', 'B', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, int epoch) {
  const nlohmann::json header = {{"format_version", kCheckpointVersion},
                                 {"arch", arch_to_json(model.arch())},
                                 {"seed", model.seed()},
                                 {"epoch", epoch},
                                 {"n_params", model.parameter_count()}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, 8);
  put_u64(out, text.size());
  out.write(text.data(), std::streamsize(text.size()));
  for (Index i = 0; i < model.parameter_count(); ++i)
    put_u64(out, std::bit_cast<std::uint64_t>(model.params()(i)));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic))
    throw Error("not a checkpoint file: " + path.string());
  const std::uint64_t len = get_u64(in);
  if (len > (1u << 24)) throw Error("corrupt checkpoint header in " + path.string());
  std::string text(len, '\0');
  if (!in.read(text.data(), std::streamsize(len))) throw Error("checkpoint truncated: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    throw Error("corrupt checkpoint header in " + path.string());
  }
  if (header.value("format_version", 0) != kCheckpointVersion)
    throw Error("unsupported checkpoint version in " + path.string());
  Checkpoint ck;
  ck.model = Model(arch_from_json(header.at("arch")), header.at("seed").get<std::uint64_t>());
  ck.epoch = header.at("epoch").get<int>();
  if (header.at("n_params").get<Index>() != ck.model.parameter_count())
    throw Error("checkpoint parameter count does not match its arch: " + path.string());
  for (Index i = 0; i < ck.model.parameter_count(); ++i)
    ck.model.params()(i) = std::bit_cast<double>(get_u64(in));
  if (in.peek() != std::char_traits<char>::eof()) throw Error("trailing bytes in checkpoint " + path.string());
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ArchSpec& expected) {
  Checkpoint ck = load_checkpoint(path);
  const ArchSpec& got = ck.model.arch();
  if (got.input != expected.input || got.n_outputs != expected.n_outputs)
    throw Error("checkpoint " + path.string() + ": input/output shape does not match arch '" +
                expected.name + "'");
  const std::size_t n = std::max(got.layers.size(), expected.layers.size());
  for (std::size_t i = 0; i < n; ++i) {
    const bool same = i < got.layers.size() && i < expected.layers.size() &&
                      arch_to_json(ArchSpec{"", got.input, 1, {got.layers[i]}})["layers"] ==
                          arch_to_json(ArchSpec{"", got.input, 1, {expected.layers[i]}})["layers"];
    if (!same)
      throw Error("checkpoint " + path.string() + ": layer " + std::to_string(i) + " (" +
                  (i < expected.layers.size() ? layer_name(expected.layers[i]) : "missing") +
                  ") does not match the configured arch");
  }
  return ck;
}

}  // namespace specbias
