#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refrakt/errors.hpp"

namespace refrakt {

// ---------------------------------------------------------------------------
// Diopter classes
// ---------------------------------------------------------------------------

/// One of the 13 refractive conditions, -3.0 .. +3.0 diopters in 0.5 steps.
struct DiopterClass {
  int index = 0;  // 0..12

  static constexpr int kCount = 13;

  double diopter() const { return -3.0 + 0.5 * index; }

  static DiopterClass from_index(int i);
  static DiopterClass from_diopter(double d);

  bool operator==(const DiopterClass&) const = default;
};

// ---------------------------------------------------------------------------
// EOG
// ---------------------------------------------------------------------------

/// Raw 4-channel EOG stream at nominal 512 Hz. Channel order:
/// left-horizontal, left-vertical, right-horizontal, right-vertical (uV).
struct EogRecording {
  std::string subject_id;
  std::vector<double> timestamps;  // seconds, strictly increasing
  std::array<std::vector<double>, 4> channels;

  std::size_t length() const { return timestamps.size(); }
};

inline constexpr std::array<const char*, 4> kEogChannelNames = {
    "eog_lh", "eog_lv", "eog_rh", "eog_rv"};

// ---------------------------------------------------------------------------
// Eye-tracking streams
// ---------------------------------------------------------------------------

enum class GazeStream {
  pupil_eye0_2d,
  pupil_eye0_3d,
  pupil_eye1_2d,
  pupil_eye1_3d,
  gaze,
  fixation,
  blink,
};
inline constexpr int kGazeStreamCount = 7;

std::string_view to_string(GazeStream s);
std::optional<GazeStream> gaze_stream_from_string(std::string_view name);

/// Payload key names for one stream, in canonical (serialization) order.
const std::vector<std::string>& stream_schema(GazeStream s);

/// The 93 feature-table column names: eye0 pupil (37), eye1 pupil (37),
/// gaze (11), fixation (7), blink (1).
const std::vector<std::string>& gaze_feature_names();
inline constexpr int kGazeFeatureCount = 93;

/// Column offset of a stream's block within the 93-wide feature table.
int gaze_feature_offset(GazeStream s);

/// One line of the gaze JSONL file. Payload values are stored in
/// stream_schema() order.
struct GazeRecord {
  GazeStream stream = GazeStream::gaze;
  double t = 0.0;           // seconds, eye-tracker clock
  double confidence = 1.0;  // [0, 1]
  std::vector<double> payload;
};

// ---------------------------------------------------------------------------
// Triggers and trial segments
// ---------------------------------------------------------------------------

enum class TaskType { fixation, pursuit, reading };
enum class TriggerKind { task_start, task_end };

std::string_view to_string(TaskType t);
std::string_view to_string(TriggerKind k);

struct TriggerEvent {
  double t_eog = 0.0;   // seconds on the EOG clock
  double t_gaze = 0.0;  // seconds on the eye-tracker clock
  TriggerKind kind = TriggerKind::task_start;
  TaskType task = TaskType::fixation;
  int trial_index = 0;
  DiopterClass condition;
};

struct TriggerLog {
  std::vector<TriggerEvent> events;
};

/// A start/end trigger pair for one task instance.
struct TaskInstance {
  TaskType task = TaskType::fixation;
  int trial_index = 0;
  DiopterClass condition;
  double start_eog = 0.0, end_eog = 0.0;
  double start_gaze = 0.0, end_gaze = 0.0;

  double duration() const { return end_eog - start_eog; }
};

/// Pairs and validates start/end triggers. Throws FormatError on unpaired
/// triggers or per-condition task counts that are not 8/8/1.
std::vector<TaskInstance> paired_task_instances(const TriggerLog& log);

/// A time interval on both device clocks. The two clocks are unsynchronized;
/// durations agree, absolute values do not.
struct TimeSpan {
  double start_eog = 0.0, end_eog = 0.0;
  double start_gaze = 0.0, end_gaze = 0.0;

  double duration() const { return end_eog - start_eog; }
};

/// One evaluation unit: a fixation trial, the inter-trial interval after it,
/// the paired pursuit trial, and one sub-segment of the reading task.
struct LabeledSegment {
  DiopterClass condition;
  int trial_slot = 0;  // 0..7
  TimeSpan fixation;
  TimeSpan interval;
  TimeSpan pursuit;
  TimeSpan reading_part;
};

/// Builds the 8 trial segments per condition present in the log. Reading
/// sub-segments split the reading span into 8 equal parts.
std::vector<LabeledSegment> annotate_segments(const TriggerLog& triggers);

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

EogRecording load_eog_recording(const std::filesystem::path& path);
void save_eog_recording(const EogRecording& rec,
                        const std::filesystem::path& path);

std::vector<GazeRecord> load_gaze_records(const std::filesystem::path& path);
void save_gaze_records(const std::vector<GazeRecord>& records,
                       const std::filesystem::path& path);

TriggerLog load_triggers(const std::filesystem::path& path);
void save_triggers(const TriggerLog& log, const std::filesystem::path& path);

/// Validates a single record against its stream schema. Used by the loader;
/// exposed for tests.
void validate_gaze_record(const GazeRecord& rec);

}  // namespace refrakt
