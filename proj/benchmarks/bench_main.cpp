#include "dashkin/cansig.hpp"
#include "dashkin/events.hpp"
#include "dashkin/models.hpp"
#include "dashkin/synthgen.hpp"
#include "dashkin/sync.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace dashkin;

namespace {

void BM_DecodeSignal(benchmark::State& state) {
  cansig::SignalSpec spec;
  spec.name = "speed";
  spec.message_id = 0x1d0;
  spec.start_bit = 8;
  spec.length_bits = 16;
  spec.byte_order = cansig::ByteOrder::big_endian;
  spec.scale = 0.01;
  cansig::CanFrame frame;
  frame.message_id = 0x1d0;
  frame.length = 8;
  frame.payload = {0x00, 0x12, 0x34, 0x56, 0x78, 0x9a, 0xbc, 0xde};
  for (auto _ : state) {
    benchmark::DoNotOptimize(cansig::decode_signal(frame, spec));
  }
}
BENCHMARK(BM_DecodeSignal);

void BM_ResampleChunk(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> times(n);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    times[i] = 40.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    values[i] = std::sin(0.1 * static_cast<double>(i));
  }
  const sync::LabelGrid grid{0.0, 5.0, 200};
  for (auto _ : state) {
    benchmark::DoNotOptimize(sync::resample_linear(times, values, grid));
  }
}
BENCHMARK(BM_ResampleChunk)->Arg(400)->Arg(4000);

void BM_HeadForward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  models::HeadSpec spec;
  spec.kind = static_cast<models::HeadKind>(state.range(0));
  spec.latent_dim = 32;
  spec.hidden = 32;
  spec.attention_heads = 4;
  spec.feed_forward = 64;
  const auto head = models::make_head(spec, rng);
  std::normal_distribution<double> normal;
  nn::Matrix x(20, 32);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x.data()[i] = normal(rng);
  }
  const auto input = nn::Var::constant(x);
  for (auto _ : state) {
    benchmark::DoNotOptimize(head->forward(input).value());
  }
}
BENCHMARK(BM_HeadForward)->Arg(0)->Arg(1)->Arg(2);

void BM_CnnEncodeDesk(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto scale = models::ModelScale::desk();
  models::EncoderSpec spec;
  spec.channel_plan = scale.channel_plan;
  spec.block_plan = scale.block_plan;
  spec.latent_dim = scale.latent_dim;
  const models::ResidualCnn cnn(spec, 64, rng);
  synth::CorpusOptions options;
  options.frames = 4;
  auto scene = synth::random_scene(options, 0);
  const auto rendered = synth::render(scene);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cnn.encode(rendered.chunk).value());
  }
}
BENCHMARK(BM_CnnEncodeDesk);

void BM_DetectEvents(benchmark::State& state) {
  synth::CorpusOptions options;
  options.frames = 200;
  options.difficulty = 1.0;
  const auto scene = synth::random_scene(options, 3);
  data::LabelTrack track;
  track.fps = 5.0;
  track.speed = scene.speed;
  track.yaw = scene.yaw;
  track.lead_present = scene.lead_present;
  track.lead_distance = scene.lead_distance;
  track.lead_rel_speed = scene.lead_rel_speed;
  const auto config = events::default_config();
  for (auto _ : state) {
    benchmark::DoNotOptimize(events::detect(track, config));
  }
}
BENCHMARK(BM_DetectEvents);

}  // namespace

BENCHMARK_MAIN();
