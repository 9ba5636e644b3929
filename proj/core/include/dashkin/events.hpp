#pragma once

// Rule-based driving events over per-frame kinematic tracks.

#include "dashkin/datastore.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dashkin::events {

enum class EventKind { left_turn, right_turn, stop, lead_acquired, lead_lost, overtake };
std::string_view to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);

/// above: value >= threshold; below: value <= threshold.
enum class Direction { above, below };

/// sustained: the interval of the condition; onset: the moment the condition
/// starts, ignoring conditions already true at the first frame.
enum class Trigger { sustained, onset };

struct EventRule {
  std::string name;
  EventKind kind = EventKind::right_turn;
  data::Attribute signal = data::Attribute::yaw;
  double threshold = 5.0;
  Direction direction = Direction::above;
  double min_duration_s = 1.0;
  /// Derives the exit threshold when none is given: hysteresis * threshold for
  /// positive thresholds, mirrored for the other side.
  double hysteresis = 0.8;
  std::optional<double> exit_threshold;
  Trigger trigger = Trigger::sustained;

  /// Once entered, an event lasts while the signal stays on the entry side of this value.
  [[nodiscard]] double exit_value() const;
  [[nodiscard]] bool enters(double v) const;
  [[nodiscard]] bool stays(double v) const;
  [[nodiscard]] std::size_t min_frames(double fps) const;
  /// Throws ConfigError.
  void validate(double fps) const;
};

struct OvertakeRule {
  bool enabled = true;
  double dead_band = 2.0;  ///< km/h; approaching means lead_rel_speed < -dead_band
  double window_s = 5.0;
  EventRule lost;
};

struct EventConfig {
  std::vector<EventRule> rules;
  OvertakeRule overtake;
};

/// Turns at |yaw| >= 5 deg/s for 1 s, stops at speed <= 1 km/h for 2 s, lead
/// transitions at lead_present 0.5 held for 1 s, overtake window 5 s.
EventConfig default_config();

EventConfig parse_event_config(const std::string& json_text);
EventConfig load_event_config(const std::filesystem::path& path);
std::string event_config_to_json(const EventConfig& config);

struct DetectedEvent {
  EventKind kind = EventKind::right_turn;
  std::string rule;
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;  ///< inclusive
  double start_s = 0.0;
  double end_s = 0.0;
  double confidence = 0.0;
};

/// One event per maximal run of `stays` frames that contains at least
/// min_frames consecutive `enters` frames. Start is the first frame of the
/// first such entry run; sustained events end where the run ends, onset events
/// end where they start. Confidence is the share of entering frames.
std::vector<DetectedEvent> detect_rule(std::span<const double> signal, const EventRule& rule,
                                       double fps);

/// lead_lost events preceded by an approaching lead within the window.
std::vector<DetectedEvent> overtake_rule(const data::LabelTrack& track, const OvertakeRule& rule,
                                         double fps);

/// All rules plus overtakes, ordered by start frame then kind.
std::vector<DetectedEvent> detect(const data::LabelTrack& track, const EventConfig& config);

/// `{chunk_id, kind, start_s, end_s, confidence}` per line.
std::string to_jsonl(const std::string& chunk_id, std::span<const DetectedEvent> events);

}  // namespace dashkin::events
