#include "dashkin/events.hpp"

#include "dashkin/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dashkin::events {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 6> kKindNames = {
    "left_turn", "right_turn", "stop", "lead_acquired", "lead_lost", "overtake"};

EventRule rule_from_json(const json& j) {
  EventRule r;
  r.kind = event_kind_from_string(j.at("kind").get<std::string>());
  r.name = j.value("name", std::string(to_string(r.kind)));
  r.signal = data::attribute_from_string(j.at("signal").get<std::string>());
  r.threshold = j.at("threshold").get<double>();
  const auto dir = j.value("direction", std::string("above"));
  if (dir == "above") {
    r.direction = Direction::above;
  } else if (dir == "below") {
    r.direction = Direction::below;
  } else {
    throw ConfigError("rule direction must be 'above' or 'below', got '" + dir + "'");
  }
  r.min_duration_s = j.value("min_duration_s", 1.0);
  r.hysteresis = j.value("hysteresis", 0.8);
  if (j.contains("exit_threshold") && !j.at("exit_threshold").is_null()) {
    r.exit_threshold = j.at("exit_threshold").get<double>();
  }
  const auto trig = j.value("trigger", std::string("sustained"));
  if (trig == "sustained") {
    r.trigger = Trigger::sustained;
  } else if (trig == "onset") {
    r.trigger = Trigger::onset;
  } else {
    throw ConfigError("rule trigger must be 'sustained' or 'onset', got '" + trig + "'");
  }
  return r;
}

json rule_to_json(const EventRule& r) {
  json j = {{"name", r.name},
            {"kind", std::string(to_string(r.kind))},
            {"signal", std::string(data::to_string(r.signal))},
            {"threshold", r.threshold},
            {"direction", r.direction == Direction::above ? "above" : "below"},
            {"min_duration_s", r.min_duration_s},
            {"hysteresis", r.hysteresis},
            {"trigger", r.trigger == Trigger::onset ? "onset" : "sustained"}};
  if (r.exit_threshold) {
    j["exit_threshold"] = *r.exit_threshold;
  }
  return j;
}

EventRule make_rule(EventKind kind, data::Attribute signal, double threshold, Direction dir,
                    double min_s, Trigger trigger = Trigger::sustained) {
  EventRule r;
  r.name = std::string(to_string(kind));
  r.kind = kind;
  r.signal = signal;
  r.threshold = threshold;
  r.direction = dir;
  r.min_duration_s = min_s;
  r.trigger = trigger;
  return r;
}

}  // namespace

std::string_view to_string(EventKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

EventKind event_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == s) {
      return static_cast<EventKind>(i);
    }
  }
  throw ConfigError("unknown event kind '" + std::string(s) + "'");
}

double EventRule::exit_value() const {
  if (exit_threshold) {
    return *exit_threshold;
  }
  // Move the threshold towards the non-event side by (1 - hysteresis) of its magnitude.
  const double slack = (1.0 - hysteresis) * std::abs(threshold);
  return direction == Direction::above ? threshold - slack : threshold + slack;
}

bool EventRule::enters(double v) const {
  return direction == Direction::above ? v >= threshold : v <= threshold;
}

bool EventRule::stays(double v) const {
  const double exit = exit_value();
  return direction == Direction::above ? v >= exit : v <= exit;
}

std::size_t EventRule::min_frames(double fps) const {
  return static_cast<std::size_t>(std::max(1.0, std::ceil(min_duration_s * fps - 1e-9)));
}

void EventRule::validate(double fps) const {
  if (!std::isfinite(threshold)) {
    throw ConfigError("rule '" + name + "': threshold must be finite");
  }
  if (min_duration_s < 1.0 / fps - 1e-12) {
    throw ConfigError("rule '" + name + "': min_duration_s must be at least one frame");
  }
  if (!(hysteresis > 0.0 && hysteresis <= 1.0)) {
    throw ConfigError("rule '" + name + "': hysteresis must be in (0, 1]");
  }
  const double exit = exit_value();
  if (!std::isfinite(exit) ||
      (direction == Direction::above ? exit > threshold : exit < threshold)) {
    throw ConfigError("rule '" + name + "': exit threshold must not be stricter than entry");
  }
}

EventConfig default_config() {
  using data::Attribute;
  EventConfig c;
  c.rules = {
      make_rule(EventKind::left_turn, Attribute::yaw, -5.0, Direction::below, 1.0),
      make_rule(EventKind::right_turn, Attribute::yaw, 5.0, Direction::above, 1.0),
      make_rule(EventKind::stop, Attribute::speed, 1.0, Direction::below, 2.0),
      make_rule(EventKind::lead_acquired, Attribute::lead_present, 0.5, Direction::above, 1.0,
                Trigger::onset),
  };
  c.overtake.lost =
      make_rule(EventKind::lead_lost, Attribute::lead_present, 0.5, Direction::below, 1.0,
                Trigger::onset);
  c.rules.push_back(c.overtake.lost);
  return c;
}

EventConfig parse_event_config(const std::string& json_text) {
  try {
    const auto doc = json::parse(json_text);
    EventConfig c;
    for (const auto& r : doc.at("rules")) {
      c.rules.push_back(rule_from_json(r));
    }
    c.overtake = default_config().overtake;
    if (doc.contains("overtake")) {
      const auto& o = doc.at("overtake");
      c.overtake.enabled = o.value("enabled", true);
      c.overtake.dead_band = o.value("dead_band", 2.0);
      c.overtake.window_s = o.value("window_s", 5.0);
      if (o.contains("lost")) {
        c.overtake.lost = rule_from_json(o.at("lost"));
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed event rules: ") + e.what());
  }
}

EventConfig load_event_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open event rules " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_event_config(ss.str());
}

std::string event_config_to_json(const EventConfig& config) {
  json doc;
  doc["rules"] = json::array();
  for (const auto& r : config.rules) {
    doc["rules"].push_back(rule_to_json(r));
  }
  doc["overtake"] = {{"enabled", config.overtake.enabled},
                     {"dead_band", config.overtake.dead_band},
                     {"window_s", config.overtake.window_s},
                     {"lost", rule_to_json(config.overtake.lost)}};
  return doc.dump(2);
}

std::vector<DetectedEvent> detect_rule(std::span<const double> signal, const EventRule& rule,
                                       double fps) {
  rule.validate(fps);
  const std::size_t need = rule.min_frames(fps);
  std::vector<DetectedEvent> out;
  std::size_t i = 0;
  while (i < signal.size()) {
    if (!rule.stays(signal[i])) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < signal.size() && rule.stays(signal[end])) {
      ++end;
    }
    // [i, end) is a maximal hold run; look for a long enough entry run inside it.
    std::optional<std::size_t> start;
    std::size_t entering = 0;
    std::size_t run = 0;
    for (std::size_t k = i; k < end; ++k) {
      if (rule.enters(signal[k])) {
        ++entering;
        ++run;
        if (run >= need && !start) {
          start = k + 1 - run;
        }
      } else {
        run = 0;
      }
    }
    const bool from_first_frame = i == 0;
    if (start && !(rule.trigger == Trigger::onset && from_first_frame)) {
      DetectedEvent e;
      e.kind = rule.kind;
      e.rule = rule.name;
      e.start_frame = *start;
      e.end_frame = rule.trigger == Trigger::onset ? *start : end - 1;
      e.start_s = static_cast<double>(e.start_frame) / fps;
      e.end_s = static_cast<double>(e.end_frame) / fps;
      e.confidence = static_cast<double>(entering) / static_cast<double>(end - i);
      out.push_back(std::move(e));
    }
    i = end;
  }
  return out;
}

std::vector<DetectedEvent> overtake_rule(const data::LabelTrack& track, const OvertakeRule& rule,
                                         double fps) {
  std::vector<DetectedEvent> out;
  if (!rule.enabled) {
    return out;
  }
  const auto window = static_cast<std::size_t>(std::llround(rule.window_s * fps));
  for (const auto& lost : detect_rule(track.lead_present, rule.lost, fps)) {
    const std::size_t k = lost.start_frame;
    const std::size_t from = k > window ? k - window : 0;
    std::optional<std::size_t> first;
    std::size_t approaching = 0;
    for (std::size_t j = from; j < k; ++j) {
      if (track.lead_rel_speed[j] < -rule.dead_band) {
        ++approaching;
        if (!first) {
          first = j;
        }
      }
    }
    if (!first) {
      continue;
    }
    DetectedEvent e;
    e.kind = EventKind::overtake;
    e.rule = "overtake";
    e.start_frame = *first;
    e.end_frame = k;
    e.start_s = static_cast<double>(e.start_frame) / fps;
    e.end_s = static_cast<double>(e.end_frame) / fps;
    e.confidence = static_cast<double>(approaching) / static_cast<double>(k - *first);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<DetectedEvent> detect(const data::LabelTrack& track, const EventConfig& config) {
  const double fps = track.fps;
  std::vector<DetectedEvent> out;
  for (const auto& rule : config.rules) {
    auto found = detect_rule(track.values(rule.signal), rule, fps);
    out.insert(out.end(), found.begin(), found.end());
  }
  auto overtakes = overtake_rule(track, config.overtake, fps);
  out.insert(out.end(), overtakes.begin(), overtakes.end());
  std::stable_sort(out.begin(), out.end(), [](const DetectedEvent& a, const DetectedEvent& b) {
    return a.start_frame != b.start_frame ? a.start_frame < b.start_frame : a.kind < b.kind;
  });
  return out;
}

std::string to_jsonl(const std::string& chunk_id, std::span<const DetectedEvent> events) {
  std::string out;
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["chunk_id"] = chunk_id;
    j["kind"] = std::string(to_string(e.kind));
    j["start_s"] = e.start_s;
    j["end_s"] = e.end_s;
    j["confidence"] = e.confidence;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace dashkin::events
