#include "dashkin/cansig.hpp"

#include "dashkin/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

namespace dashkin::cansig {

namespace {

constexpr std::string_view kHeader = "Time,Bus,MessageID,Message,MessageLength";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) {
    return false;
  }
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') {
    return c - '0';
  }
  if (c >= 'A' && c <= 'F') {
    return c - 'A' + 10;
  }
  if (c >= 'a' && c <= 'f') {
    return c - 'a' + 10;
  }
  return -1;
}

bool parse_hex_payload(std::string_view s, CanFrame& frame) {
  s = trim(s);
  if (s.empty() || s.size() % 2 != 0 || s.size() > 16) {
    return false;
  }
  const std::size_t n = s.size() / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const int hi = hex_value(s[2 * i]);
    const int lo = hex_value(s[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      return false;
    }
    frame.payload[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  frame.length = static_cast<std::uint8_t>(n);
  return true;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

int bit_of(std::span<const std::uint8_t> payload, unsigned pos, ByteOrder order) {
  const std::uint8_t byte = payload[pos / 8];
  const unsigned within = pos % 8;
  const unsigned shift = order == ByteOrder::little_endian ? within : 7U - within;
  return (byte >> shift) & 1;
}

}  // namespace

void SignalSpec::validate() const {
  if (length_bits < 1 || length_bits > 64) {
    throw ConfigError("signal '" + name + "': length_bits must be in [1, 64]");
  }
  if (start_bit > 63 || start_bit + length_bits > 64) {
    throw ConfigError("signal '" + name + "': start_bit + length_bits exceeds 64");
  }
  if (scale == 0.0 || !std::isfinite(scale) || !std::isfinite(offset)) {
    throw ConfigError("signal '" + name + "': scale must be finite and non-zero");
  }
  if (clamp_min && clamp_max && *clamp_min > *clamp_max) {
    throw ConfigError("signal '" + name + "': clamp_min > clamp_max");
  }
}

ParseResult parse_can_csv(std::istream& in) {
  ParseResult result;
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("CAN CSV is empty; expected header '" + std::string(kHeader) + "'");
  }
  std::string_view header = trim(line);
  if (header.size() >= 3 && static_cast<unsigned char>(header[0]) == 0xEF &&
      static_cast<unsigned char>(header[1]) == 0xBB && static_cast<unsigned char>(header[2]) == 0xBF) {
    header.remove_prefix(3);
  }
  const auto columns = split_fields(header);
  static const std::array<std::string_view, 5> expected = {"Time", "Bus", "MessageID", "Message",
                                                           "MessageLength"};
  bool ok = columns.size() == expected.size();
  for (std::size_t i = 0; ok && i < expected.size(); ++i) {
    ok = trim(columns[i]) == expected[i];
  }
  if (!ok) {
    throw FormatError("CAN CSV header mismatch: got '" + std::string(header) + "', expected '" +
                      std::string(kHeader) + "'");
  }

  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    ++result.rows_read;
    const auto fields = split_fields(line);
    CanFrame frame;
    std::uint32_t declared_length = 0;
    if (fields.size() != 5 || !parse_number(fields[0], frame.time) || !std::isfinite(frame.time) ||
        frame.time < 0.0 || !parse_number(fields[1], frame.bus) ||
        !parse_number(fields[2], frame.message_id) ||
        !parse_number(fields[4], declared_length)) {
      ++result.malformed_rows;
      continue;
    }
    if (!parse_hex_payload(fields[3], frame)) {
      ++result.malformed_rows;
      ++result.bad_payload_rows;
      continue;
    }
    if (declared_length != frame.length) {
      ++result.malformed_rows;
      continue;
    }
    result.frames.push_back(frame);
  }
  std::stable_sort(result.frames.begin(), result.frames.end(),
                   [](const CanFrame& a, const CanFrame& b) { return a.time < b.time; });
  return result;
}

ParseResult parse_can_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open CAN log " + path.string());
  }
  return parse_can_csv(in);
}

std::uint64_t extract_raw(std::span<const std::uint8_t> payload, const SignalSpec& spec) {
  const std::size_t available = payload.size() * 8;
  if (spec.length_bits == 0 || spec.length_bits > 64 ||
      static_cast<std::size_t>(spec.start_bit) + spec.length_bits > available) {
    throw DecodeError("signal '" + spec.name + "' needs bits [" + std::to_string(spec.start_bit) +
                      ", " + std::to_string(spec.start_bit + spec.length_bits) + ") but payload has " +
                      std::to_string(available) + " bits");
  }
  std::uint64_t raw = 0;
  if (spec.byte_order == ByteOrder::little_endian) {
    for (unsigned i = 0; i < spec.length_bits; ++i) {
      raw |= static_cast<std::uint64_t>(bit_of(payload, spec.start_bit + i, spec.byte_order)) << i;
    }
  } else {
    for (unsigned i = 0; i < spec.length_bits; ++i) {
      raw = (raw << 1) |
            static_cast<std::uint64_t>(bit_of(payload, spec.start_bit + i, spec.byte_order));
    }
  }
  return raw;
}

std::optional<SignalSample> decode_signal(const CanFrame& frame, const SignalSpec& spec) {
  if (frame.message_id != spec.message_id) {
    return std::nullopt;
  }
  const std::uint64_t raw = extract_raw(frame.bytes(), spec);
  double counts = 0.0;
  if (spec.is_signed) {
    const unsigned pad = 64U - spec.length_bits;
    const auto extended = static_cast<std::int64_t>(raw << pad) >> pad;
    counts = static_cast<double>(extended);
  } else {
    counts = static_cast<double>(raw);
  }
  double value = counts * spec.scale + spec.offset;
  if (spec.clamp_min) {
    value = std::max(value, *spec.clamp_min);
  }
  if (spec.clamp_max) {
    value = std::min(value, *spec.clamp_max);
  }
  return SignalSample{frame.time, spec.name, value};
}

std::vector<SignalSample> extract_attribute_series(std::span<const CanFrame> frames,
                                                   const SignalSpec& spec) {
  std::vector<SignalSample> out;
  for (const auto& frame : frames) {
    if (auto sample = decode_signal(frame, spec)) {
      out.push_back(std::move(*sample));
    }
  }
  return out;
}

std::vector<SignalSpec> parse_signal_specs(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("signal spec file is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) {
    throw FormatError("signal spec file must be a JSON array");
  }
  std::vector<SignalSpec> specs;
  for (const auto& item : doc) {
    try {
      SignalSpec s;
      s.name = item.at("name").get<std::string>();
      s.message_id = item.at("message_id").get<std::uint32_t>();
      s.start_bit = item.at("start_bit").get<unsigned>();
      s.length_bits = item.at("length_bits").get<unsigned>();
      const auto order = item.at("byte_order").get<std::string>();
      if (order == "big_endian") {
        s.byte_order = ByteOrder::big_endian;
      } else if (order == "little_endian") {
        s.byte_order = ByteOrder::little_endian;
      } else {
        throw FormatError("signal '" + s.name + "': unknown byte_order '" + order + "'");
      }
      s.is_signed = item.at("signed").get<bool>();
      s.scale = item.at("scale").get<double>();
      s.offset = item.at("offset").get<double>();
      s.unit = item.value("unit", std::string{});
      if (item.contains("clamp_min") && !item.at("clamp_min").is_null()) {
        s.clamp_min = item.at("clamp_min").get<double>();
      }
      if (item.contains("clamp_max") && !item.at("clamp_max").is_null()) {
        s.clamp_max = item.at("clamp_max").get<double>();
      }
      s.validate();
      specs.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed signal spec entry: ") + e.what());
    }
  }
  return specs;
}

std::vector<SignalSpec> load_signal_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open signal spec file " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_signal_specs(buffer.str());
}

std::string signal_specs_to_json(std::span<const SignalSpec> specs) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& s : specs) {
    nlohmann::json item = {
        {"name", s.name},
        {"message_id", s.message_id},
        {"start_bit", s.start_bit},
        {"length_bits", s.length_bits},
        {"byte_order", s.byte_order == ByteOrder::big_endian ? "big_endian" : "little_endian"},
        {"signed", s.is_signed},
        {"scale", s.scale},
        {"offset", s.offset},
        {"unit", s.unit},
    };
    if (s.clamp_min) {
      item["clamp_min"] = *s.clamp_min;
    }
    if (s.clamp_max) {
      item["clamp_max"] = *s.clamp_max;
    }
    doc.push_back(std::move(item));
  }
  return doc.dump(2);
}

}  // namespace dashkin::cansig
