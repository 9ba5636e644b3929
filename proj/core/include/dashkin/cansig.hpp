#pragma once

// CAN log ingestion: CSV capture parsing and DBC-style signal decoding.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dashkin::cansig {

struct CanFrame {
  double time = 0.0;  ///< UNIX seconds, fractional
  std::uint32_t bus = 0;
  std::uint32_t message_id = 0;
  std::array<std::uint8_t, 8> payload{};
  std::uint8_t length = 0;

  [[nodiscard]] std::span<const std::uint8_t> bytes() const { return {payload.data(), length}; }
};

enum class ByteOrder { big_endian, little_endian };

/// Where one physical signal lives inside a CAN message.
///
/// Bits are numbered linearly over the payload. For little-endian signals
/// bit `8*i + j` is bit j (LSB = 0) of byte i and `start_bit` names the least
/// significant bit of the field. For big-endian signals bit `8*i + j` is the
/// j-th bit of byte i counted from its MSB, `start_bit` names the most
/// significant bit of the field, and the field continues MSB-first. Either way
/// the field occupies [start_bit, start_bit + length_bits).
struct SignalSpec {
  std::string name;
  std::uint32_t message_id = 0;
  unsigned start_bit = 0;
  unsigned length_bits = 8;
  ByteOrder byte_order = ByteOrder::little_endian;
  bool is_signed = false;
  double scale = 1.0;
  double offset = 0.0;
  std::string unit;
  std::optional<double> clamp_min;
  std::optional<double> clamp_max;

  /// Throws ConfigError when the layout cannot fit a 64-bit frame or scale is 0.
  void validate() const;
};

struct SignalSample {
  double time = 0.0;
  std::string name;
  double value = 0.0;
};

struct ParseResult {
  std::vector<CanFrame> frames;  ///< stable-sorted by time
  std::size_t rows_read = 0;
  std::size_t malformed_rows = 0;
  std::size_t bad_payload_rows = 0;  ///< subset of malformed_rows with unparseable hex
};

/// Parses a `Time,Bus,MessageID,Message,MessageLength` capture.
/// Throws FormatError on a missing or renamed header; malformed rows are skipped and counted.
ParseResult parse_can_csv(const std::filesystem::path& path);
ParseResult parse_can_csv(std::istream& in);

/// Raw (unscaled, unsigned) field bits. Throws DecodeError when the field exceeds the payload.
std::uint64_t extract_raw(std::span<const std::uint8_t> payload, const SignalSpec& spec);

/// Decodes `spec` from `frame`; nullopt when the message id differs.
std::optional<SignalSample> decode_signal(const CanFrame& frame, const SignalSpec& spec);

/// One sample per matching frame, frame order preserved.
std::vector<SignalSample> extract_attribute_series(std::span<const CanFrame> frames,
                                                   const SignalSpec& spec);

std::vector<SignalSpec> parse_signal_specs(const std::string& json_text);
std::vector<SignalSpec> load_signal_specs(const std::filesystem::path& path);
std::string signal_specs_to_json(std::span<const SignalSpec> specs);

}  // namespace dashkin::cansig
