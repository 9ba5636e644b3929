#pragma once

// Published grid results, transcribed in printed layout: rows (BS 1, 1e-3),
// (BS 1, 1e-5), (BS 2, 1e-3), (BS 2, 1e-5); columns Baseline CNN/UNET, GRU
// CNN/UNET, Transformer CNN/UNET. UNET is the external-latent encoder.

#include "dashkin/evalreport.hpp"

#include <array>
#include <limits>

namespace dashkin::testing {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using PrintedTable = std::array<std::array<double, 6>, 4>;

inline const PrintedTable kSpeedTable = {{
    {720, 608, 801, 522, kNaN, kNaN},
    {703, 1108, 630, 675, 612, 810},
    {728, 588, 1479, 446, kNaN, kNaN},
    {733, 1238, 959, 695, 707, 960},
}};

inline const PrintedTable kYawTable = {{
    {18.439, 18.439, 18.446, 17.840, 18.439, kNaN},
    {22.873, 18.325, 4.539, 16.961, 16.612, 18.437},
    {31.181, 18.438, 2.726, 17.005, 18.439, 18.439},
    {21.877, 18.351, 6.908, 17.502, 16.624, 18.439},
}};

inline const PrintedTable kLeadPresentTable = {{
    {0.727, 0.737, 0.624, 0.763, 0.529, 0.529},
    {0.700, 0.755, 0.710, 0.771, 0.636, 0.683},
    {0.676, 0.778, 0.644, 0.738, 0.523, 0.575},
    {0.730, 0.745, 0.681, 0.781, 0.690, 0.709},
}};

inline const PrintedTable kLeadDistanceTable = {{
    {11328, 8100, 14336, 8064, kNaN, kNaN},
    {10383, 12950, 13219, 11960, 9822, 13219},
    {10433, 7779, 6874, 7945, kNaN, kNaN},
    {114741, 12042, 9333, 13062, 13696, 13218},
}};

inline const PrintedTable kLeadRelSpeedTable = {{
    {0.881, 0.764, 0.782, 0.776, kNaN, 0.764},
    {0.852, 0.762, 0.794, 0.761, 0.805, 0.764},
    {0.823, 0.764, 0.830, 0.769, kNaN, kNaN},
    {0.801, 0.762, 0.802, 0.759, 0.811, 0.763},
}};

/// Key of a printed cell, derived from the layout above rather than from the library.
inline report::CellKey printed_key(std::size_t row, std::size_t col) {
  static constexpr models::HeadKind heads[] = {models::HeadKind::baseline, models::HeadKind::gru,
                                               models::HeadKind::transformer};
  report::CellKey k;
  k.encoder = col % 2 == 0 ? models::EncoderKind::residual_cnn : models::EncoderKind::external_latents;
  k.head = heads[col / 2];
  k.batch_size = row < 2 ? 1 : 2;
  k.learning_rate = row % 2 == 0 ? 1e-3 : 1e-5;
  return k;
}

inline report::ResultTable to_result_table(const PrintedTable& printed, data::Attribute attribute,
                                           report::Direction direction) {
  report::ResultTable t;
  t.attribute = attribute;
  t.direction = direction;
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 6; ++c) {
      t.at(printed_key(r, c)) = printed[r][c];
    }
  }
  return t;
}

}  // namespace dashkin::testing
