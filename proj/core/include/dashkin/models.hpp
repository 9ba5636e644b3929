#pragma once

// Frame encoders (residual CNN, stand-in random projection, external latent
// store) and temporal heads (baseline MLP, GRU, transformer) that map a
// latent sequence to per-frame outputs.

#include "dashkin/autograd.hpp"
#include "dashkin/datastore.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace dashkin::models {

using nn::Matrix;
using nn::Var;

enum class EncoderKind { residual_cnn, external_latents, standin };
enum class HeadKind { baseline, gru, transformer };
enum class OutputKind { scalar_regression, binary, three_class };

std::string_view to_string(EncoderKind k);
std::string_view to_string(HeadKind k);
std::string_view to_string(OutputKind k);
EncoderKind encoder_kind_from_string(std::string_view s);
HeadKind head_kind_from_string(std::string_view s);
OutputKind output_kind_from_string(std::string_view s);

struct EncoderSpec {
  EncoderKind kind = EncoderKind::residual_cnn;
  std::vector<int> channel_plan{3, 32, 64, 64, 128, 256};
  std::vector<int> block_plan{1, 1, 2, 2, 4, 4};
  int latent_dim = 512;

  /// Throws ConfigError.
  void validate() const;
};

struct HeadSpec {
  HeadKind kind = HeadKind::gru;
  int latent_dim = 512;
  int hidden = 512;
  int layers = 2;
  OutputKind output = OutputKind::scalar_regression;
  int attention_heads = 8;
  int feed_forward = 1024;
  bool position_encoding = true;

  [[nodiscard]] int output_dim() const { return output == OutputKind::three_class ? 3 : 1; }
  /// Throws ConfigError.
  void validate() const;
};

/// Model and frame dimensions for a run. `desk()` keeps CPU training in seconds.
struct ModelScale {
  int latent_dim = 512;
  int hidden = 512;
  std::vector<int> channel_plan{3, 32, 64, 64, 128, 256};
  std::vector<int> block_plan{1, 1, 2, 2, 4, 4};
  int attention_heads = 8;
  int feed_forward = 1024;

  static ModelScale full();
  static ModelScale desk();
};

struct NamedParam {
  std::string name;
  Var var;
};
using ParamList = std::vector<NamedParam>;

std::size_t count_parameters(const ParamList& params);

/// x * W + b with W in x out; initialized U(-1/sqrt(in), 1/sqrt(in)).
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng);
  [[nodiscard]] Var forward(const Var& x) const;
  void collect(ParamList& out, const std::string& prefix) const;

 private:
  Var weight_;
  Var bias_;
};

// ---------------------------------------------------------------------------
// Latents

/// Per-frame latent vectors of one chunk (frames x dims).
struct LatentSequence {
  using Values = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  std::string chunk_id;
  Values values;

  [[nodiscard]] Matrix to_matrix() const { return values.cast<double>(); }
  friend bool operator==(const LatentSequence& a, const LatentSequence& b) {
    return a.chunk_id == b.chunk_id && a.values.rows() == b.values.rows() &&
           a.values.cols() == b.values.cols() && a.values == b.values;
  }
};

/// File layout: magic "DKLT", u32 rows, u32 cols, rows*cols little-endian float32.
void write_latents(const LatentSequence& seq, const std::filesystem::path& path);
LatentSequence read_latents(const std::filesystem::path& path, std::string chunk_id = {});

/// Precomputed latents under a dataset root. Dimensions are checked on load.
class LatentStore {
 public:
  LatentStore(data::DatasetLayout layout, int frames, int dims)
      : layout_(std::move(layout)), frames_(frames), dims_(dims) {}

  /// Throws IoError when missing, DimensionError on a shape mismatch.
  [[nodiscard]] LatentSequence load(const std::string& chunk_id,
                                    const std::string& variant = {}) const;
  [[nodiscard]] bool contains(const std::string& chunk_id, const std::string& variant = {}) const;

 private:
  data::DatasetLayout layout_;
  int frames_;
  int dims_;
};

/// Fixed seeded Gaussian projection of 4x-downsampled grayscale frames.
class StandinEncoder {
 public:
  StandinEncoder(int frame_size, int latent_dim, std::uint64_t seed);
  [[nodiscard]] LatentSequence encode(const data::VideoChunk& chunk) const;
  [[nodiscard]] int latent_dim() const { return latent_dim_; }

 private:
  int frame_size_;
  int latent_dim_;
  Matrix projection_;  ///< (frame_size/4)^2 x latent_dim
};

/// Residual CNN: one stage per channel_plan entry, each starting with a
/// stride-2 block; every block is relu(conv3x3(x) + skip(x)), with a strided
/// 1x1 projection as skip whenever the shape changes. Global average pooling
/// and a linear map give one latent row per frame.
class ResidualCnn {
 public:
  ResidualCnn(const EncoderSpec& spec, int frame_size, std::mt19937_64& rng);

  /// frames x latent_dim; frames are scaled to [0, 1]. Throws EncoderError on
  /// non-finite activations.
  [[nodiscard]] Var encode(const data::VideoChunk& chunk) const;
  [[nodiscard]] Var encode_frame(std::span<const std::uint8_t> planar) const;
  void collect(ParamList& out, const std::string& prefix) const;

  [[nodiscard]] std::size_t block_count() const { return blocks_.size(); }
  /// Closed-form count from the channel and block plans.
  static std::size_t analytic_parameter_count(const EncoderSpec& spec);

 private:
  struct Block {
    nn::ConvGeometry conv;
    Var weight;
    Var bias;
    bool projected = false;
    nn::ConvGeometry proj;
    Var proj_weight;
    Var proj_bias;
  };

  EncoderSpec spec_;
  int frame_size_;
  std::vector<Block> blocks_;
  Linear readout_;
};

// ---------------------------------------------------------------------------
// Heads

/// Maps a latent sequence (frames x latent_dim) to per-frame logits
/// (frames x output_dim). Probabilities come from `activate`.
class Head {
 public:
  virtual ~Head() = default;
  [[nodiscard]] virtual Var forward(const Var& latents) const = 0;
  virtual void collect(ParamList& out, const std::string& prefix) const = 0;
  [[nodiscard]] const HeadSpec& spec() const { return spec_; }

 protected:
  explicit Head(HeadSpec spec) : spec_(std::move(spec)) {}
  HeadSpec spec_;
};

std::unique_ptr<Head> make_head(const HeadSpec& spec, std::mt19937_64& rng);

/// Sigmoid for binary, softmax for three_class, identity for regression.
Matrix activate(const Matrix& logits, OutputKind output);

/// Sinusoidal position table, frames x width.
Matrix sinusoidal_positions(int frames, int width);

}  // namespace dashkin::models
