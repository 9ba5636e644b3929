#include "dashkin/models.hpp"

#include "dashkin/error.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace dashkin::models {

namespace {

constexpr std::array<char, 4> kLatentMagic = {'D', 'K', 'L', 'T'};

template <typename E, std::size_t N>
E enum_from(std::string_view s, const std::array<std::string_view, N>& names, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) {
      return static_cast<E>(i);
    }
  }
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::string_view, 3> kEncoderNames = {"residual_cnn", "external_latents",
                                                           "standin"};
constexpr std::array<std::string_view, 3> kHeadNames = {"baseline", "gru", "transformer"};
constexpr std::array<std::string_view, 3> kOutputNames = {"scalar_regression", "binary",
                                                          "3_class"};

Matrix uniform_matrix(int rows, int cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = dist(rng);
  }
  return m;
}

void check_finite(const Var& v, const std::string& layer) {
  if (!v.value().allFinite()) {
    throw EncoderError("non-finite activation in " + layer);
  }
}

// ---------------------------------------------------------------------------

class BaselineHead : public Head {
 public:
  BaselineHead(const HeadSpec& spec, std::mt19937_64& rng) : Head(spec) {
    int in = spec.latent_dim;
    for (int l = 0; l + 1 < spec.layers; ++l) {
      hidden_.emplace_back(in, spec.hidden, rng);
      in = spec.hidden;
    }
    out_ = Linear(in, spec.output_dim(), rng);
  }

  [[nodiscard]] Var forward(const Var& latents) const override {
    Var x = latents;
    for (const auto& layer : hidden_) {
      x = nn::relu(layer.forward(x));
    }
    return out_.forward(x);
  }

  void collect(ParamList& out, const std::string& prefix) const override {
    for (std::size_t l = 0; l < hidden_.size(); ++l) {
      hidden_[l].collect(out, prefix + "fc" + std::to_string(l) + ".");
    }
    out_.collect(out, prefix + "out.");
  }

 private:
  std::vector<Linear> hidden_;
  Linear out_;
};

// Gate order r, z, n; h' = (1 - z) * n + z * h with n = tanh(W_in x + b_in + r * (W_hn h + b_hn)).
class GruHead : public Head {
 public:
  GruHead(const HeadSpec& spec, std::mt19937_64& rng) : Head(spec) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.hidden));
    int in = spec.latent_dim;
    for (int l = 0; l < spec.layers; ++l) {
      Layer layer;
      layer.w_ih = Var::parameter(uniform_matrix(in, 3 * spec.hidden, bound, rng));
      layer.w_hh = Var::parameter(uniform_matrix(spec.hidden, 3 * spec.hidden, bound, rng));
      layer.b_ih = Var::parameter(uniform_matrix(1, 3 * spec.hidden, bound, rng));
      layer.b_hh = Var::parameter(uniform_matrix(1, 3 * spec.hidden, bound, rng));
      layers_.push_back(std::move(layer));
      in = spec.hidden;
    }
    out_ = Linear(spec.hidden, spec.output_dim(), rng);
  }

  [[nodiscard]] Var forward(const Var& latents) const override {
    const nn::Index h = spec_.hidden;
    const nn::Index frames = latents.rows();
    Var x = latents;
    for (const auto& layer : layers_) {
      const Var gi_all = nn::add_row(nn::matmul(x, layer.w_ih), layer.b_ih);
      Var state = Var::constant(Matrix::Zero(1, h));
      std::vector<Var> outputs;
      outputs.reserve(static_cast<std::size_t>(frames));
      for (nn::Index t = 0; t < frames; ++t) {
        const Var gi = nn::slice_rows(gi_all, t, 1);
        const Var gh = nn::add_row(nn::matmul(state, layer.w_hh), layer.b_hh);
        const Var r = nn::sigmoid(nn::add(nn::slice_cols(gi, 0, h), nn::slice_cols(gh, 0, h)));
        const Var z = nn::sigmoid(nn::add(nn::slice_cols(gi, h, h), nn::slice_cols(gh, h, h)));
        const Var n = nn::tanh(
            nn::add(nn::slice_cols(gi, 2 * h, h), nn::hadamard(r, nn::slice_cols(gh, 2 * h, h))));
        state = nn::add(nn::hadamard(nn::one_minus(z), n), nn::hadamard(z, state));
        outputs.push_back(state);
      }
      x = nn::concat_rows(outputs);
    }
    return out_.forward(x);
  }

  void collect(ParamList& out, const std::string& prefix) const override {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const std::string p = prefix + "gru" + std::to_string(l) + ".";
      out.push_back({p + "w_ih", layers_[l].w_ih});
      out.push_back({p + "w_hh", layers_[l].w_hh});
      out.push_back({p + "b_ih", layers_[l].b_ih});
      out.push_back({p + "b_hh", layers_[l].b_hh});
    }
    out_.collect(out, prefix + "out.");
  }

 private:
  struct Layer {
    Var w_ih, w_hh, b_ih, b_hh;
  };
  std::vector<Layer> layers_;
  Linear out_;
};

// Post-norm encoder layers: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
class TransformerHead : public Head {
 public:
  TransformerHead(const HeadSpec& spec, std::mt19937_64& rng) : Head(spec) {
    const int d = spec.hidden;
    input_ = Linear(spec.latent_dim, d, rng);
    for (int l = 0; l < spec.layers; ++l) {
      Layer layer;
      layer.q = Linear(d, d, rng);
      layer.k = Linear(d, d, rng);
      layer.v = Linear(d, d, rng);
      layer.o = Linear(d, d, rng);
      layer.ff1 = Linear(d, spec.feed_forward, rng);
      layer.ff2 = Linear(spec.feed_forward, d, rng);
      layer.ln1_gamma = Var::parameter(Matrix::Ones(1, d));
      layer.ln1_beta = Var::parameter(Matrix::Zero(1, d));
      layer.ln2_gamma = Var::parameter(Matrix::Ones(1, d));
      layer.ln2_beta = Var::parameter(Matrix::Zero(1, d));
      layers_.push_back(std::move(layer));
    }
    out_ = Linear(d, spec.output_dim(), rng);
  }

  [[nodiscard]] Var forward(const Var& latents) const override {
    const int d = spec_.hidden;
    const int heads = spec_.attention_heads;
    const int dk = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
    Var x = input_.forward(latents);
    if (spec_.position_encoding) {
      x = nn::add(x, Var::constant(sinusoidal_positions(static_cast<int>(latents.rows()), d)));
    }
    for (const auto& layer : layers_) {
      const Var q = layer.q.forward(x);
      const Var k = layer.k.forward(x);
      const Var v = layer.v.forward(x);
      std::vector<Var> per_head;
      per_head.reserve(static_cast<std::size_t>(heads));
      for (int hd = 0; hd < heads; ++hd) {
        const Var qh = nn::slice_cols(q, hd * dk, dk);
        const Var kh = nn::slice_cols(k, hd * dk, dk);
        const Var vh = nn::slice_cols(v, hd * dk, dk);
        const Var attn = nn::softmax_rows(nn::scale(nn::matmul_transposed(qh, kh), inv_sqrt));
        per_head.push_back(nn::matmul(attn, vh));
      }
      const Var mixed = layer.o.forward(nn::concat_cols(per_head));
      x = nn::layer_norm_rows(nn::add(x, mixed), layer.ln1_gamma, layer.ln1_beta);
      const Var ff = layer.ff2.forward(nn::relu(layer.ff1.forward(x)));
      x = nn::layer_norm_rows(nn::add(x, ff), layer.ln2_gamma, layer.ln2_beta);
    }
    return out_.forward(x);
  }

  void collect(ParamList& out, const std::string& prefix) const override {
    input_.collect(out, prefix + "in.");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const std::string p = prefix + "enc" + std::to_string(l) + ".";
      layers_[l].q.collect(out, p + "q.");
      layers_[l].k.collect(out, p + "k.");
      layers_[l].v.collect(out, p + "v.");
      layers_[l].o.collect(out, p + "o.");
      layers_[l].ff1.collect(out, p + "ff1.");
      layers_[l].ff2.collect(out, p + "ff2.");
      out.push_back({p + "ln1.gamma", layers_[l].ln1_gamma});
      out.push_back({p + "ln1.beta", layers_[l].ln1_beta});
      out.push_back({p + "ln2.gamma", layers_[l].ln2_gamma});
      out.push_back({p + "ln2.beta", layers_[l].ln2_beta});
    }
    out_.collect(out, prefix + "out.");
  }

 private:
  struct Layer {
    Linear q, k, v, o, ff1, ff2;
    Var ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  };
  Linear input_;
  std::vector<Layer> layers_;
  Linear out_;
};

}  // namespace

std::string_view to_string(EncoderKind k) { return kEncoderNames[static_cast<std::size_t>(k)]; }
std::string_view to_string(HeadKind k) { return kHeadNames[static_cast<std::size_t>(k)]; }
std::string_view to_string(OutputKind k) { return kOutputNames[static_cast<std::size_t>(k)]; }

EncoderKind encoder_kind_from_string(std::string_view s) {
  return enum_from<EncoderKind>(s, kEncoderNames, "encoder");
}
HeadKind head_kind_from_string(std::string_view s) {
  return enum_from<HeadKind>(s, kHeadNames, "head");
}
OutputKind output_kind_from_string(std::string_view s) {
  return enum_from<OutputKind>(s, kOutputNames, "output kind");
}

void EncoderSpec::validate() const {
  if (latent_dim <= 0) {
    throw ConfigError("encoder latent_dim must be positive");
  }
  if (kind != EncoderKind::residual_cnn) {
    return;
  }
  if (channel_plan.empty() || channel_plan.size() != block_plan.size()) {
    throw ConfigError("channel_plan and block_plan must be non-empty and of equal length");
  }
  for (std::size_t i = 0; i < channel_plan.size(); ++i) {
    if (channel_plan[i] <= 0 || block_plan[i] <= 0) {
      throw ConfigError("channel and block plans must be positive");
    }
  }
}

void HeadSpec::validate() const {
  if (hidden <= 0 || layers < 1 || latent_dim <= 0) {
    throw ConfigError("head needs hidden > 0, layers >= 1 and latent_dim > 0");
  }
  if (kind == HeadKind::transformer &&
      (attention_heads <= 0 || hidden % attention_heads != 0 || feed_forward <= 0)) {
    throw ConfigError("transformer width must be a positive multiple of the head count");
  }
}

ModelScale ModelScale::full() { return {}; }

ModelScale ModelScale::desk() {
  ModelScale s;
  s.latent_dim = 32;
  s.hidden = 32;
  s.channel_plan = {3, 8, 8, 8, 16, 16};
  s.attention_heads = 4;
  s.feed_forward = 64;
  return s;
}

std::size_t count_parameters(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) {
    n += static_cast<std::size_t>(p.var.value().size());
  }
  return n;
}

Linear::Linear(int in, int out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = Var::parameter(uniform_matrix(in, out, bound, rng));
  bias_ = Var::parameter(uniform_matrix(1, out, bound, rng));
}

Var Linear::forward(const Var& x) const { return nn::add_row(nn::matmul(x, weight_), bias_); }

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "weight", weight_});
  out.push_back({prefix + "bias", bias_});
}

// ---------------------------------------------------------------------------

void write_latents(const LatentSequence& seq, const std::filesystem::path& path) {
  if (!seq.values.allFinite()) {
    throw DomainError("latents for '" + seq.chunk_id + "' contain non-finite values");
  }
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write latents " + path.string());
  }
  out.write(kLatentMagic.data(), 4);
  const std::array<std::uint32_t, 2> dims = {static_cast<std::uint32_t>(seq.values.rows()),
                                             static_cast<std::uint32_t>(seq.values.cols())};
  out.write(reinterpret_cast<const char*>(dims.data()), sizeof(dims));
  out.write(reinterpret_cast<const char*>(seq.values.data()),
            static_cast<std::streamsize>(seq.values.size() * sizeof(float)));
  if (!out) {
    throw IoError("short write to " + path.string());
  }
}

LatentSequence read_latents(const std::filesystem::path& path, std::string chunk_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open latents " + path.string());
  }
  std::array<char, 4> magic{};
  std::array<std::uint32_t, 2> dims{};
  if (!in.read(magic.data(), 4) || magic != kLatentMagic) {
    throw FormatError(path.string() + " is not a latent file (bad magic)");
  }
  if (!in.read(reinterpret_cast<char*>(dims.data()), sizeof(dims))) {
    throw FormatError(path.string() + ": truncated header");
  }
  LatentSequence seq;
  seq.chunk_id = chunk_id.empty() ? path.stem().string() : std::move(chunk_id);
  seq.values.resize(dims[0], dims[1]);
  if (!in.read(reinterpret_cast<char*>(seq.values.data()),
               static_cast<std::streamsize>(seq.values.size() * sizeof(float)))) {
    throw FormatError(path.string() + ": truncated latent data");
  }
  return seq;
}

LatentSequence LatentStore::load(const std::string& chunk_id, const std::string& variant) const {
  const auto path = layout_.latent_path(chunk_id, variant);
  if (!std::filesystem::exists(path)) {
    throw IoError("no latents for chunk '" + chunk_id + "'" +
                  (variant.empty() ? "" : " (" + variant + ")") + " at " + path.string());
  }
  auto seq = read_latents(path, chunk_id);
  if (seq.values.rows() != frames_ || seq.values.cols() != dims_) {
    throw DimensionError("latents for '" + chunk_id + "' are " +
                         std::to_string(seq.values.rows()) + "x" +
                         std::to_string(seq.values.cols()) + ", expected " +
                         std::to_string(frames_) + "x" + std::to_string(dims_));
  }
  return seq;
}

bool LatentStore::contains(const std::string& chunk_id, const std::string& variant) const {
  return std::filesystem::exists(layout_.latent_path(chunk_id, variant));
}

StandinEncoder::StandinEncoder(int frame_size, int latent_dim, std::uint64_t seed)
    : frame_size_(frame_size), latent_dim_(latent_dim) {
  if (frame_size <= 0 || frame_size % 4 != 0 || latent_dim <= 0) {
    throw ConfigError("stand-in encoder needs a frame size divisible by 4 and latent_dim > 0");
  }
  const int reduced = frame_size / 4;
  const int inputs = reduced * reduced;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(inputs)));
  projection_.resize(inputs, latent_dim);
  for (Eigen::Index i = 0; i < projection_.size(); ++i) {
    projection_.data()[i] = normal(rng);
  }
}

LatentSequence StandinEncoder::encode(const data::VideoChunk& chunk) const {
  if (static_cast<int>(chunk.height) != frame_size_ || static_cast<int>(chunk.width) != frame_size_) {
    throw DimensionError("stand-in encoder expects " + std::to_string(frame_size_) +
                         "-pixel frames");
  }
  const int reduced = frame_size_ / 4;
  Matrix pooled = Matrix::Zero(chunk.frames, reduced * reduced);
  constexpr double kNorm = 1.0 / (255.0 * 3.0 * 16.0);
  for (std::size_t f = 0; f < chunk.frames; ++f) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (int y = 0; y < frame_size_; ++y) {
        for (int x = 0; x < frame_size_; ++x) {
          pooled(static_cast<Eigen::Index>(f), (y / 4) * reduced + x / 4) +=
              chunk.at(f, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        }
      }
    }
  }
  pooled *= kNorm;
  LatentSequence seq;
  seq.chunk_id = chunk.chunk_id;
  seq.values = (pooled * projection_).cast<float>();
  return seq;
}

// ---------------------------------------------------------------------------

ResidualCnn::ResidualCnn(const EncoderSpec& spec, int frame_size, std::mt19937_64& rng)
    : spec_(spec), frame_size_(frame_size) {
  spec.validate();
  int channels = 3;
  int size = frame_size;
  for (std::size_t stage = 0; stage < spec.channel_plan.size(); ++stage) {
    const int out = spec.channel_plan[stage];
    for (int b = 0; b < spec.block_plan[stage]; ++b) {
      Block block;
      const int stride = b == 0 ? 2 : 1;
      block.conv = {channels, size, size, 3, stride, 1};
      const double bound = 1.0 / std::sqrt(static_cast<double>(channels * 9));
      block.weight = Var::parameter(uniform_matrix(out, channels * 9, bound, rng));
      block.bias = Var::parameter(uniform_matrix(out, 1, bound, rng));
      block.projected = channels != out || stride != 1;
      if (block.projected) {
        block.proj = {channels, size, size, 1, stride, 0};
        const double pb = 1.0 / std::sqrt(static_cast<double>(channels));
        block.proj_weight = Var::parameter(uniform_matrix(out, channels, pb, rng));
        block.proj_bias = Var::parameter(uniform_matrix(out, 1, pb, rng));
      }
      size = block.conv.out_height();
      if (size <= 0) {
        throw ConfigError("frame size " + std::to_string(frame_size) +
                          " is too small for the channel plan");
      }
      channels = out;
      blocks_.push_back(std::move(block));
    }
  }
  readout_ = Linear(channels, spec.latent_dim, rng);
}

Var ResidualCnn::encode_frame(std::span<const std::uint8_t> planar) const {
  const auto pixels = static_cast<Eigen::Index>(frame_size_) * frame_size_;
  if (static_cast<Eigen::Index>(planar.size()) != 3 * pixels) {
    throw DimensionError("CNN frame has the wrong byte count");
  }
  Matrix input(3, pixels);
  for (Eigen::Index i = 0; i < input.size(); ++i) {
    input.data()[i] = planar[static_cast<std::size_t>(i)] / 255.0;
  }
  Var x = Var::constant(std::move(input));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    const Var main = nn::conv2d(x, b.weight, b.bias, b.conv);
    const Var skip = b.projected ? nn::conv2d(x, b.proj_weight, b.proj_bias, b.proj) : x;
    x = nn::relu(nn::add(main, skip));
    check_finite(x, "block " + std::to_string(i));
  }
  const Var pooled = nn::transpose(nn::row_means(x));
  const Var latent = readout_.forward(pooled);
  check_finite(latent, "readout");
  return latent;
}

Var ResidualCnn::encode(const data::VideoChunk& chunk) const {
  if (static_cast<int>(chunk.height) != frame_size_ || static_cast<int>(chunk.width) != frame_size_ ||
      chunk.channels != 3) {
    throw DimensionError("CNN expects 3-channel " + std::to_string(frame_size_) + "-pixel frames");
  }
  std::vector<Var> rows;
  rows.reserve(chunk.frames);
  for (std::size_t f = 0; f < chunk.frames; ++f) {
    rows.push_back(encode_frame(chunk.frame(f)));
  }
  return nn::concat_rows(rows);
}

void ResidualCnn::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = prefix + "block" + std::to_string(i) + ".";
    out.push_back({p + "weight", blocks_[i].weight});
    out.push_back({p + "bias", blocks_[i].bias});
    if (blocks_[i].projected) {
      out.push_back({p + "proj_weight", blocks_[i].proj_weight});
      out.push_back({p + "proj_bias", blocks_[i].proj_bias});
    }
  }
  readout_.collect(out, prefix + "readout.");
}

std::size_t ResidualCnn::analytic_parameter_count(const EncoderSpec& spec) {
  spec.validate();
  std::size_t total = 0;
  std::size_t in = 3;
  for (std::size_t stage = 0; stage < spec.channel_plan.size(); ++stage) {
    const auto out = static_cast<std::size_t>(spec.channel_plan[stage]);
    for (int b = 0; b < spec.block_plan[stage]; ++b) {
      total += out * in * 9 + out;
      if (in != out || b == 0) {
        total += out * in + out;
      }
      in = out;
    }
  }
  return total + in * static_cast<std::size_t>(spec.latent_dim) +
         static_cast<std::size_t>(spec.latent_dim);
}

// ---------------------------------------------------------------------------

std::unique_ptr<Head> make_head(const HeadSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  switch (spec.kind) {
    case HeadKind::baseline: return std::make_unique<BaselineHead>(spec, rng);
    case HeadKind::gru: return std::make_unique<GruHead>(spec, rng);
    case HeadKind::transformer: return std::make_unique<TransformerHead>(spec, rng);
  }
  throw ConfigError("unknown head kind");
}

Matrix activate(const Matrix& logits, OutputKind output) {
  switch (output) {
    case OutputKind::scalar_regression: return logits;
    case OutputKind::binary: return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
    case OutputKind::three_class: {
      Matrix out = logits;
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double m = out.row(r).maxCoeff();
        out.row(r) = (out.row(r).array() - m).exp().matrix();
        out.row(r) /= out.row(r).sum();
      }
      return out;
    }
  }
  return logits;
}

Matrix sinusoidal_positions(int frames, int width) {
  Matrix pe(frames, width);
  for (int pos = 0; pos < frames; ++pos) {
    for (int i = 0; i < width; ++i) {
      const int pair = i / 2;
      const double angle =
          pos / std::pow(10000.0, 2.0 * pair / static_cast<double>(width));
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace dashkin::models
