#include "refrakt/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "refrakt/num_io.hpp"

namespace refrakt {

// ---------------------------------------------------------------------------
// DiopterClass
// ---------------------------------------------------------------------------

DiopterClass DiopterClass::from_index(int i) {
  if (i < 0 || i >= kCount)
    throw ParamError("diopter class index " + std::to_string(i) +
                     " out of 0..12");
  return DiopterClass{i};
}

DiopterClass DiopterClass::from_diopter(double d) {
  double idx = (d + 3.0) / 0.5;
  int i = static_cast<int>(std::lround(idx));
  if (i < 0 || i >= kCount || std::abs(idx - i) > 1e-9)
    throw ParamError("diopter " + format_double(d) +
                     " is not on the -3.0..+3.0 grid in 0.5 steps");
  return DiopterClass{i};
}

// ---------------------------------------------------------------------------
// Stream names and schemas
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<const char*, kGazeStreamCount> kStreamNames = {
    "pupil_eye0_2d", "pupil_eye0_3d", "pupil_eye1_2d", "pupil_eye1_3d",
    "gaze",          "fixation",      "blink"};

std::vector<std::string> pupil_2d_keys() {
  return {"diameter_2d",        "norm_pos_x_2d",      "norm_pos_y_2d",
          "ellipse_center_x_2d", "ellipse_center_y_2d", "ellipse_axis_a_2d",
          "ellipse_axis_b_2d",  "ellipse_angle_2d",   "location_x_2d",
          "location_y_2d"};
}

std::vector<std::string> pupil_3d_keys() {
  return {"diameter_from_3d",
          "diameter_3d",
          "norm_pos_x_3d",
          "norm_pos_y_3d",
          "ellipse_center_x_3d",
          "ellipse_center_y_3d",
          "ellipse_axis_a_3d",
          "ellipse_axis_b_3d",
          "ellipse_angle_3d",
          "sphere_center_x",
          "sphere_center_y",
          "sphere_center_z",
          "sphere_radius",
          "projected_sphere_center_x",
          "projected_sphere_center_y",
          "projected_sphere_axis_a",
          "projected_sphere_axis_b",
          "projected_sphere_angle",
          "circle_3d_center_x",
          "circle_3d_center_y",
          "circle_3d_center_z",
          "circle_3d_normal_x",
          "circle_3d_normal_y",
          "circle_3d_normal_z",
          "circle_3d_radius",
          "circle_3d_normal_theta",
          "circle_3d_normal_phi"};
}

std::vector<std::string> gaze_keys() {
  return {"gaze_origin_3d_x",  "gaze_origin_3d_y",  "gaze_origin_3d_z",
          "gaze_direction_3d_x", "gaze_direction_3d_y", "gaze_direction_3d_z",
          "gaze_point_3d_x",   "gaze_point_3d_y",   "gaze_point_3d_z",
          "gaze_norm_pos_x",   "gaze_norm_pos_y"};
}

std::vector<std::string> fixation_keys() {
  return {"fixation_dispersion", "fixation_duration",
          "fixation_norm_pos_x", "fixation_norm_pos_y",
          "fixation_point_3d_x", "fixation_point_3d_y",
          "fixation_point_3d_z"};
}

std::vector<std::string> blink_keys() { return {"blink_type"}; }

const std::array<std::vector<std::string>, kGazeStreamCount>& schemas() {
  static const std::array<std::vector<std::string>, kGazeStreamCount> s = {
      pupil_2d_keys(), pupil_3d_keys(), pupil_2d_keys(), pupil_3d_keys(),
      gaze_keys(),     fixation_keys(), blink_keys()};
  return s;
}

}  // namespace

std::string_view to_string(GazeStream s) {
  return kStreamNames[static_cast<int>(s)];
}

std::optional<GazeStream> gaze_stream_from_string(std::string_view name) {
  for (int i = 0; i < kGazeStreamCount; ++i)
    if (name == kStreamNames[i]) return static_cast<GazeStream>(i);
  return std::nullopt;
}

const std::vector<std::string>& stream_schema(GazeStream s) {
  return schemas()[static_cast<int>(s)];
}

const std::vector<std::string>& gaze_feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    out.reserve(kGazeFeatureCount);
    for (GazeStream s : {GazeStream::pupil_eye0_2d, GazeStream::pupil_eye0_3d,
                         GazeStream::pupil_eye1_2d, GazeStream::pupil_eye1_3d}) {
      std::string prefix =
          (s == GazeStream::pupil_eye0_2d || s == GazeStream::pupil_eye0_3d)
              ? "eye0_"
              : "eye1_";
      for (const auto& k : stream_schema(s)) out.push_back(prefix + k);
    }
    for (GazeStream s :
         {GazeStream::gaze, GazeStream::fixation, GazeStream::blink})
      for (const auto& k : stream_schema(s)) out.push_back(k);
    return out;
  }();
  return names;
}

int gaze_feature_offset(GazeStream s) {
  switch (s) {
    case GazeStream::pupil_eye0_2d: return 0;
    case GazeStream::pupil_eye0_3d: return 10;
    case GazeStream::pupil_eye1_2d: return 37;
    case GazeStream::pupil_eye1_3d: return 47;
    case GazeStream::gaze: return 74;
    case GazeStream::fixation: return 85;
    case GazeStream::blink: return 92;
  }
  return 0;
}

std::string_view to_string(TaskType t) {
  switch (t) {
    case TaskType::fixation: return "fixation";
    case TaskType::pursuit: return "pursuit";
    case TaskType::reading: return "reading";
  }
  return "";
}

std::string_view to_string(TriggerKind k) {
  return k == TriggerKind::task_start ? "task_start" : "task_end";
}

// ---------------------------------------------------------------------------
// Trigger pairing and segment annotation
// ---------------------------------------------------------------------------

std::vector<TaskInstance> paired_task_instances(const TriggerLog& log) {
  std::vector<TaskInstance> out;
  const TriggerEvent* open = nullptr;
  double last_t = -std::numeric_limits<double>::infinity();
  for (const auto& ev : log.events) {
    if (ev.t_eog < last_t)
      throw FormatError("trigger events not sorted by time");
    last_t = ev.t_eog;
    if (ev.kind == TriggerKind::task_start) {
      if (open != nullptr)
        throw FormatError("unpaired trigger: task_start for " +
                          std::string(to_string(ev.task)) +
                          " while a task is already open");
      open = &ev;
    } else {
      if (open == nullptr || open->task != ev.task ||
          open->trial_index != ev.trial_index ||
          !(open->condition == ev.condition))
        throw FormatError("unpaired trigger: task_end without matching start");
      if (ev.t_eog <= open->t_eog || ev.t_gaze <= open->t_gaze)
        throw FormatError("unpaired trigger: task ends before it starts");
      out.push_back(TaskInstance{ev.task, ev.trial_index, ev.condition,
                                 open->t_eog, ev.t_eog, open->t_gaze,
                                 ev.t_gaze});
      open = nullptr;
    }
  }
  if (open != nullptr)
    throw FormatError("unpaired trigger: task_start without end");

  std::map<int, std::array<int, 3>> counts;
  for (const auto& ti : out)
    counts[ti.condition.index][static_cast<int>(ti.task)] += 1;
  for (const auto& [cond, c] : counts) {
    if (c[0] != 8 || c[1] != 8 || c[2] != 1)
      throw FormatError(
          "condition incomplete: diopter index " + std::to_string(cond) +
          " has " + std::to_string(c[0]) + " fixation, " +
          std::to_string(c[1]) + " pursuit, " + std::to_string(c[2]) +
          " reading instances (want 8/8/1)");
  }
  return out;
}

std::vector<LabeledSegment> annotate_segments(const TriggerLog& triggers) {
  auto instances = paired_task_instances(triggers);

  std::map<int, std::vector<const TaskInstance*>> fix, pur;
  std::map<int, const TaskInstance*> read;
  for (const auto& ti : instances) {
    switch (ti.task) {
      case TaskType::fixation: fix[ti.condition.index].push_back(&ti); break;
      case TaskType::pursuit: pur[ti.condition.index].push_back(&ti); break;
      case TaskType::reading: read[ti.condition.index] = &ti; break;
    }
  }

  std::vector<LabeledSegment> out;
  for (auto& [cond, fixes] : fix) {
    auto pit = pur.find(cond);
    auto rit = read.find(cond);
    if (pit == pur.end() || rit == read.end() || fixes.size() != 8 ||
        pit->second.size() != 8)
      throw FormatError("cannot form trial segment: condition " +
                        std::to_string(cond) + " missing task instances");
    auto by_time = [](const TaskInstance* a, const TaskInstance* b) {
      return a->start_eog < b->start_eog;
    };
    std::sort(fixes.begin(), fixes.end(), by_time);
    std::sort(pit->second.begin(), pit->second.end(), by_time);

    const TaskInstance& rd = *rit->second;
    const double len_eog = (rd.end_eog - rd.start_eog) / 8.0;
    const double len_gaze = (rd.end_gaze - rd.start_gaze) / 8.0;

    for (int slot = 0; slot < 8; ++slot) {
      const TaskInstance& f = *fixes[static_cast<std::size_t>(slot)];
      const TaskInstance& p = *pit->second[static_cast<std::size_t>(slot)];
      if (p.start_eog < f.end_eog)
        throw FormatError("cannot form trial segment: pursuit trial " +
                          std::to_string(slot) + " of condition " +
                          std::to_string(cond) +
                          " starts before its fixation trial ends");
      LabeledSegment seg;
      seg.condition = DiopterClass::from_index(cond);
      seg.trial_slot = slot;
      seg.fixation = {f.start_eog, f.end_eog, f.start_gaze, f.end_gaze};
      seg.interval = {f.end_eog, p.start_eog, f.end_gaze, p.start_gaze};
      seg.pursuit = {p.start_eog, p.end_eog, p.start_gaze, p.end_gaze};
      // Last sub-segment absorbs any residue so the first 7 stay equal.
      double a_eog = rd.start_eog + slot * len_eog;
      double b_eog = slot == 7 ? rd.end_eog : rd.start_eog + (slot + 1) * len_eog;
      double a_gaze = rd.start_gaze + slot * len_gaze;
      double b_gaze =
          slot == 7 ? rd.end_gaze : rd.start_gaze + (slot + 1) * len_gaze;
      seg.reading_part = {a_eog, b_eog, a_gaze, b_gaze};
      out.push_back(seg);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// EOG CSV
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kEogHeader = "t,eog_lh,eog_lv,eog_rh,eog_rv";

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t c = line.find(',', pos);
    if (c == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, c - pos));
    pos = c + 1;
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

EogRecording load_eog_recording(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line != kEogHeader)
    throw FormatError("bad EOG header in " + path.string() + " (want '" +
                      kEogHeader + "')");
  EogRecording rec;
  rec.subject_id = path.parent_path().filename().string();
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 5)
      throw FormatError("wrong column count at line " + std::to_string(lineno) +
                        " of " + path.string());
    std::string ctx = "at line " + std::to_string(lineno);
    double t = parse_double(fields[0], ctx);
    if (!rec.timestamps.empty() && t <= rec.timestamps.back())
      throw FormatError("non-monotone timestamp at line " +
                        std::to_string(lineno));
    rec.timestamps.push_back(t);
    for (int c = 0; c < 4; ++c)
      rec.channels[static_cast<std::size_t>(c)].push_back(
          parse_double(fields[static_cast<std::size_t>(c) + 1], ctx));
  }
  return rec;
}

void save_eog_recording(const EogRecording& rec,
                        const std::filesystem::path& path) {
  auto out = open_output(path);
  std::string buf;
  buf.reserve(1 << 20);
  buf += kEogHeader;
  buf += '\n';
  for (std::size_t i = 0; i < rec.length(); ++i) {
    append_double(buf, rec.timestamps[i]);
    for (int c = 0; c < 4; ++c) {
      buf += ',';
      append_double(buf, rec.channels[static_cast<std::size_t>(c)][i]);
    }
    buf += '\n';
    if (buf.size() > (1 << 20) - 256) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

// ---------------------------------------------------------------------------
// Gaze JSONL
// ---------------------------------------------------------------------------

void validate_gaze_record(const GazeRecord& rec) {
  if (rec.confidence < 0.0 || rec.confidence > 1.0)
    throw FormatError("confidence out of [0,1]");
  const auto& schema = stream_schema(rec.stream);
  if (rec.payload.size() != schema.size())
    throw FormatError("stream " + std::string(to_string(rec.stream)) +
                      ": payload has " + std::to_string(rec.payload.size()) +
                      " values, schema wants " +
                      std::to_string(schema.size()));
}

std::vector<GazeRecord> load_gaze_records(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<GazeRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad JSON at line " + std::to_string(lineno) + " of " +
                        path.string() + ": " + e.what());
    }
    std::string ctx = "at line " + std::to_string(lineno);
    if (!j.is_object() || !j.contains("stream") || !j.contains("t") ||
        !j.contains("confidence") || !j.contains("payload"))
      throw FormatError("missing field " + ctx);
    auto stream = gaze_stream_from_string(j["stream"].get<std::string>());
    if (!stream)
      throw FormatError("unknown stream '" + j["stream"].get<std::string>() +
                        "' " + ctx);
    GazeRecord rec;
    rec.stream = *stream;
    rec.t = j["t"].get<double>();
    rec.confidence = j["confidence"].get<double>();
    if (rec.confidence < 0.0 || rec.confidence > 1.0)
      throw FormatError("confidence out of [0,1] " + ctx);

    const auto& schema = stream_schema(rec.stream);
    const auto& payload = j["payload"];
    if (!payload.is_object())
      throw FormatError("payload is not an object " + ctx);
    rec.payload.assign(schema.size(), 0.0);
    std::vector<bool> seen(schema.size(), false);
    for (auto it = payload.begin(); it != payload.end(); ++it) {
      auto pos = std::find(schema.begin(), schema.end(), it.key());
      if (pos == schema.end())
        throw FormatError("stream " + std::string(to_string(rec.stream)) +
                          ": unknown payload key '" + it.key() + "' " + ctx);
      auto idx = static_cast<std::size_t>(pos - schema.begin());
      rec.payload[idx] = it.value().get<double>();
      seen[idx] = true;
    }
    for (std::size_t i = 0; i < schema.size(); ++i)
      if (!seen[i])
        throw FormatError("stream " + std::string(to_string(rec.stream)) +
                          ": missing payload key '" + schema[i] + "' " + ctx);
    out.push_back(std::move(rec));
  }
  return out;
}

void save_gaze_records(const std::vector<GazeRecord>& records,
                       const std::filesystem::path& path) {
  auto out = open_output(path);
  std::string buf;
  buf.reserve(1 << 20);
  for (const auto& rec : records) {
    validate_gaze_record(rec);
    buf += "{\"stream\":\"";
    buf += to_string(rec.stream);
    buf += "\",\"t\":";
    append_double(buf, rec.t);
    buf += ",\"confidence\":";
    append_double(buf, rec.confidence);
    buf += ",\"payload\":{";
    const auto& schema = stream_schema(rec.stream);
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (i > 0) buf += ',';
      buf += '"';
      buf += schema[i];
      buf += "\":";
      append_double(buf, rec.payload[i]);
    }
    buf += "}}\n";
    if (buf.size() > (1 << 20) - 4096) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

// ---------------------------------------------------------------------------
// Trigger CSV
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kTriggerHeader = "t_eog,t_gaze,kind,task,trial_index,diopter";
}

TriggerLog load_triggers(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line != kTriggerHeader)
    throw FormatError("bad trigger header in " + path.string());
  TriggerLog log;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 6)
      throw FormatError("wrong column count at line " + std::to_string(lineno) +
                        " of " + path.string());
    std::string ctx = "at line " + std::to_string(lineno);
    TriggerEvent ev;
    ev.t_eog = parse_double(fields[0], ctx);
    ev.t_gaze = parse_double(fields[1], ctx);
    if (fields[2] == "task_start")
      ev.kind = TriggerKind::task_start;
    else if (fields[2] == "task_end")
      ev.kind = TriggerKind::task_end;
    else
      throw FormatError("unknown trigger kind '" + std::string(fields[2]) +
                        "' " + ctx);
    if (fields[3] == "fixation")
      ev.task = TaskType::fixation;
    else if (fields[3] == "pursuit")
      ev.task = TaskType::pursuit;
    else if (fields[3] == "reading")
      ev.task = TaskType::reading;
    else
      throw FormatError("unknown task '" + std::string(fields[3]) + "' " + ctx);
    long idx = parse_long(fields[4], ctx);
    if (idx < 0) throw FormatError("negative trial_index " + ctx);
    ev.trial_index = static_cast<int>(idx);
    try {
      ev.condition = DiopterClass::from_diopter(parse_double(fields[5], ctx));
    } catch (const ParamError& e) {
      throw FormatError(std::string(e.what()) + " " + ctx);
    }
    log.events.push_back(ev);
  }
  paired_task_instances(log);  // validates pairing and counts
  return log;
}

void save_triggers(const TriggerLog& log, const std::filesystem::path& path) {
  auto out = open_output(path);
  std::string buf;
  buf += kTriggerHeader;
  buf += '\n';
  for (const auto& ev : log.events) {
    append_double(buf, ev.t_eog);
    buf += ',';
    append_double(buf, ev.t_gaze);
    buf += ',';
    buf += to_string(ev.kind);
    buf += ',';
    buf += to_string(ev.task);
    buf += ',';
    buf += std::to_string(ev.trial_index);
    buf += ',';
    char d[16];
    std::snprintf(d, sizeof(d), "%.1f", ev.condition.diopter());
    buf += d;
    buf += '\n';
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace refrakt
