#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "stageverify/core.hpp"
#include "stageverify/gesture.hpp"
#include "stageverify/screw_link.hpp"

namespace sv {

inline constexpr int kReplaySchema = 1;

struct ReplayMeta {
  int schema = kReplaySchema;
  std::string plan_id;
  TimeMs tick_ms = 33;
  bool operator==(const ReplayMeta&) const = default;
};

struct HandRecord {
  TimeMs t_ms = 0;
  int hand_index = 0;
  std::vector<Vec3> points;
  bool operator==(const HandRecord&) const = default;
};

/// meta, det, hand, angle, holes, acf
using ReplayRecord =
    std::variant<ReplayMeta, DetectionFrame, HandRecord, ObjAngle, link::Holes,
                 ActionConfidence>;

std::string_view record_type(const ReplayRecord& r);
/// Timestamp of a record; meta has none and reports nullopt.
std::optional<TimeMs> record_time(const ReplayRecord& r);

enum class ReplayErrorReason : std::uint8_t {
  NotJson,
  UnknownType,
  MissingMeta,
  TimestampRegression,
  FieldRange,
};

std::string_view to_string(ReplayErrorReason r);

class ReplayFormatError : public ValidationError {
 public:
  ReplayFormatError(std::size_t line, ReplayErrorReason reason, const std::string& detail);
  std::size_t line() const { return line_; }
  ReplayErrorReason reason() const { return reason_; }

 private:
  std::size_t line_;
  ReplayErrorReason reason_;
};

class InvariantViolation : public std::invalid_argument {
 public:
  InvariantViolation(std::size_t index, const std::string& what)
      : std::invalid_argument(what), index_(index) {}
  /// 0-based position of the offending record.
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

nlohmann::json to_json(const ReplayRecord& r);
/// Canonical minified line without the newline.
std::string encode_record(const ReplayRecord& r);

/// One line of any record type, validated; `lineno` only labels errors.
ReplayRecord decode_record(std::string_view line, std::size_t lineno = 1);

/// Validated records in file order; throws ReplayFormatError at the first
/// violation.
std::vector<ReplayRecord> read_replay(std::istream& in);
std::vector<ReplayRecord> read_replay(std::string_view text);
std::vector<ReplayRecord> read_replay_file(const std::string& path);

/// Checks every invariant before producing any output.
std::string write_replay(const std::vector<ReplayRecord>& records);
void write_replay(const std::vector<ReplayRecord>& records, std::ostream& out);
void write_replay_file(const std::vector<ReplayRecord>& records, const std::string& path);

}  // namespace sv
