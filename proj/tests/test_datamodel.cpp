#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <refrakt/datamodel.hpp>
#include <string>
#include <vector>

using namespace refrakt;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "refrakt_datamodel_tests";
  fs::create_directories(dir);
  return dir / name;
}

void append_task(TriggerLog& log, TaskType task, int trial, int cond,
                 double t0, double t1) {
  TriggerEvent s;
  s.t_eog = t0;
  s.t_gaze = t0 - 3.25;  // distinct clock
  s.kind = TriggerKind::task_start;
  s.task = task;
  s.trial_index = trial;
  s.condition = DiopterClass::from_index(cond);
  TriggerEvent e = s;
  e.t_eog = t1;
  e.t_gaze = t1 - 3.25;
  e.kind = TriggerKind::task_end;
  log.events.push_back(s);
  log.events.push_back(e);
}

// 8 fixation/pursuit pairs plus one reading block per condition.
TriggerLog make_log(int conditions) {
  TriggerLog log;
  double t = 10.0;
  for (int c = 0; c < conditions; ++c) {
    for (int slot = 0; slot < 8; ++slot) {
      append_task(log, TaskType::fixation, slot, c, t, t + 5.0);
      t += 6.0;
      append_task(log, TaskType::pursuit, slot, c, t, t + 2.0);
      t += 3.0;
    }
    append_task(log, TaskType::reading, 0, c, t, t + 41.0);
    t += 43.0;
  }
  return log;
}

}  // namespace

TEST_CASE("DiopterClass maps indices and diopters") {
  CHECK(DiopterClass::kCount == 13);
  CHECK(DiopterClass::from_index(0).diopter() == doctest::Approx(-3.0));
  CHECK(DiopterClass::from_index(6).diopter() == doctest::Approx(0.0));
  CHECK(DiopterClass::from_index(12).diopter() == doctest::Approx(3.0));
  CHECK(DiopterClass::from_diopter(-3.0).index == 0);
  CHECK(DiopterClass::from_diopter(2.5).index == 11);
  CHECK_THROWS_AS(DiopterClass::from_index(13), ParamError);
  CHECK_THROWS_AS(DiopterClass::from_index(-1), ParamError);
  CHECK_THROWS_AS(DiopterClass::from_diopter(0.3), ParamError);
  CHECK_THROWS_AS(DiopterClass::from_diopter(3.5), ParamError);
}

TEST_CASE("stream schemas carry the documented column counts") {
  CHECK(stream_schema(GazeStream::pupil_eye0_2d).size() == 10);
  CHECK(stream_schema(GazeStream::pupil_eye0_3d).size() == 27);
  CHECK(stream_schema(GazeStream::pupil_eye1_2d).size() == 10);
  CHECK(stream_schema(GazeStream::pupil_eye1_3d).size() == 27);
  CHECK(stream_schema(GazeStream::gaze).size() == 11);
  CHECK(stream_schema(GazeStream::fixation).size() == 7);
  CHECK(stream_schema(GazeStream::blink).size() == 1);

  CHECK(gaze_feature_names().size() == kGazeFeatureCount);
  CHECK(kGazeFeatureCount == 93);

  // Offsets partition the 93 columns in stream order.
  CHECK(gaze_feature_offset(GazeStream::pupil_eye0_2d) == 0);
  CHECK(gaze_feature_offset(GazeStream::pupil_eye0_3d) == 10);
  CHECK(gaze_feature_offset(GazeStream::pupil_eye1_2d) == 37);
  CHECK(gaze_feature_offset(GazeStream::pupil_eye1_3d) == 47);
  CHECK(gaze_feature_offset(GazeStream::gaze) == 74);
  CHECK(gaze_feature_offset(GazeStream::fixation) == 85);
  CHECK(gaze_feature_offset(GazeStream::blink) == 92);
}

TEST_CASE("gaze stream names round trip") {
  for (int i = 0; i < kGazeStreamCount; ++i) {
    auto s = static_cast<GazeStream>(i);
    auto back = gaze_stream_from_string(to_string(s));
    REQUIRE(back.has_value());
    CHECK(*back == s);
  }
  CHECK(!gaze_stream_from_string("saccade").has_value());
}

TEST_CASE("paired_task_instances pairs and validates") {
  auto log = make_log(2);
  auto instances = paired_task_instances(log);
  CHECK(instances.size() == 2 * (8 + 8 + 1));

  SUBCASE("missing end") {
    log.events.pop_back();
    CHECK_THROWS_WITH_AS(paired_task_instances(log),
                         doctest::Contains("unpaired trigger"), FormatError);
  }
  SUBCASE("nested start") {
    TriggerEvent extra = log.events.front();
    extra.t_eog = log.events.front().t_eog + 0.5;
    extra.t_gaze = log.events.front().t_gaze + 0.5;
    log.events.insert(log.events.begin() + 1, extra);
    CHECK_THROWS_WITH_AS(paired_task_instances(log),
                         doctest::Contains("unpaired trigger"), FormatError);
  }
  SUBCASE("incomplete condition") {
    // Drop the reading pair of the last condition.
    log.events.erase(log.events.end() - 2, log.events.end());
    CHECK_THROWS_WITH_AS(paired_task_instances(log),
                         doctest::Contains("condition incomplete"),
                         FormatError);
  }
  SUBCASE("unsorted events") {
    log.events[1].t_eog = log.events[0].t_eog - 1.0;
    CHECK_THROWS_WITH_AS(paired_task_instances(log),
                         doctest::Contains("not sorted"), FormatError);
  }
}

TEST_CASE("annotate_segments builds 8 slots with an equal reading split") {
  auto log = make_log(1);
  auto segs = annotate_segments(log);
  REQUIRE(segs.size() == 8);

  const double read_start = segs[0].reading_part.start_eog;
  const double read_len =
      segs[0].reading_part.end_eog - segs[0].reading_part.start_eog;
  for (int slot = 0; slot < 8; ++slot) {
    const auto& s = segs[static_cast<std::size_t>(slot)];
    CHECK(s.trial_slot == slot);
    CHECK(s.condition.index == 0);
    // interval sits between fixation end and pursuit start
    CHECK(s.interval.start_eog == doctest::Approx(s.fixation.end_eog));
    CHECK(s.interval.end_eog == doctest::Approx(s.pursuit.start_eog));
    // reading sub-segments tile the reading span
    CHECK(s.reading_part.start_eog ==
          doctest::Approx(read_start + slot * read_len));
    // both clocks keep the same duration
    CHECK(s.fixation.end_gaze - s.fixation.start_gaze ==
          doctest::Approx(s.fixation.duration()));
  }
  CHECK(segs[7].reading_part.end_eog ==
        doctest::Approx(read_start + 8 * read_len));
}

TEST_CASE("EOG CSV round trip preserves exact values") {
  EogRecording rec;
  rec.subject_id = "sx";
  rec.timestamps = {-40.125, -40.1230468, -40.12109, 0.0, 0.5};
  for (int c = 0; c < 4; ++c)
    rec.channels[static_cast<std::size_t>(c)] = {
        1.0 / 3.0 + c, -2.75, 3.14159265358979, 1e-12, -0.0};

  auto path = temp_file("eog_roundtrip.csv");
  save_eog_recording(rec, path);
  auto back = load_eog_recording(path);
  CHECK(back.timestamps == rec.timestamps);
  for (int c = 0; c < 4; ++c)
    CHECK(back.channels[static_cast<std::size_t>(c)] ==
          rec.channels[static_cast<std::size_t>(c)]);
}

TEST_CASE("EOG loader rejects malformed files") {
  auto path = temp_file("eog_bad.csv");
  SUBCASE("bad header") {
    std::ofstream(path) << "time,a,b,c,d\n";
    CHECK_THROWS_WITH_AS(load_eog_recording(path),
                         doctest::Contains("bad EOG header"), FormatError);
  }
  SUBCASE("non-monotone timestamps") {
    std::ofstream(path) << "t,eog_lh,eog_lv,eog_rh,eog_rv\n"
                        << "0.0,1,2,3,4\n"
                        << "0.5,1,2,3,4\n"
                        << "0.5,1,2,3,4\n";
    CHECK_THROWS_WITH_AS(load_eog_recording(path),
                         doctest::Contains("non-monotone timestamp at line 4"),
                         FormatError);
  }
  SUBCASE("wrong column count") {
    std::ofstream(path) << "t,eog_lh,eog_lv,eog_rh,eog_rv\n"
                        << "0.0,1,2,3\n";
    CHECK_THROWS_WITH_AS(load_eog_recording(path),
                         doctest::Contains("wrong column count at line 2"),
                         FormatError);
  }
}

TEST_CASE("gaze records round trip through JSONL") {
  std::vector<GazeRecord> recs;
  for (int i = 0; i < kGazeStreamCount; ++i) {
    GazeRecord r;
    r.stream = static_cast<GazeStream>(i);
    r.t = 0.25 * i - 1.0;
    r.confidence = 0.125 * i / 8.0 + 0.1;
    const auto& schema = stream_schema(r.stream);
    for (std::size_t k = 0; k < schema.size(); ++k)
      r.payload.push_back(0.5 * static_cast<double>(k) - 1.0 / 3.0);
    recs.push_back(std::move(r));
  }

  auto path = temp_file("gaze_roundtrip.jsonl");
  save_gaze_records(recs, path);
  auto back = load_gaze_records(path);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].stream == recs[i].stream);
    CHECK(back[i].t == recs[i].t);
    CHECK(back[i].confidence == recs[i].confidence);
    CHECK(back[i].payload == recs[i].payload);
  }
}

TEST_CASE("gaze loader rejects malformed records") {
  auto path = temp_file("gaze_bad.jsonl");
  SUBCASE("unknown stream") {
    std::ofstream(path)
        << R"({"stream":"saccade","t":0.0,"confidence":0.5,"payload":{}})"
        << "\n";
    CHECK_THROWS_WITH_AS(load_gaze_records(path),
                         doctest::Contains("unknown stream"), FormatError);
  }
  SUBCASE("confidence out of range") {
    std::ofstream(path)
        << R"({"stream":"blink","t":0.0,"confidence":1.5,"payload":{"blink_type":1.0}})"
        << "\n";
    CHECK_THROWS_WITH_AS(load_gaze_records(path),
                         doctest::Contains("confidence out of [0,1]"),
                         FormatError);
  }
  SUBCASE("bad JSON line number") {
    std::ofstream(path)
        << R"({"stream":"blink","t":0.0,"confidence":1.0,"payload":{"blink_type":1.0}})"
        << "\n{oops\n";
    CHECK_THROWS_WITH_AS(load_gaze_records(path),
                         doctest::Contains("line 2"), FormatError);
  }
}

TEST_CASE("validate_gaze_record checks schema width and confidence") {
  GazeRecord r;
  r.stream = GazeStream::gaze;
  r.t = 0.0;
  r.confidence = 0.9;
  r.payload.assign(stream_schema(GazeStream::gaze).size(), 0.0);
  CHECK_NOTHROW(validate_gaze_record(r));

  r.payload.pop_back();
  CHECK_THROWS_AS(validate_gaze_record(r), FormatError);

  r.payload.push_back(0.0);
  r.confidence = -0.1;
  CHECK_THROWS_WITH_AS(validate_gaze_record(r),
                       doctest::Contains("confidence out of [0,1]"),
                       FormatError);
}

TEST_CASE("trigger CSV round trip") {
  auto log = make_log(2);
  auto path = temp_file("triggers_roundtrip.csv");
  save_triggers(log, path);
  auto back = load_triggers(path);
  REQUIRE(back.events.size() == log.events.size());
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    CHECK(back.events[i].t_eog == log.events[i].t_eog);
    CHECK(back.events[i].t_gaze == log.events[i].t_gaze);
    CHECK(back.events[i].kind == log.events[i].kind);
    CHECK(back.events[i].task == log.events[i].task);
    CHECK(back.events[i].trial_index == log.events[i].trial_index);
    CHECK(back.events[i].condition == log.events[i].condition);
  }
}

TEST_CASE("trigger loader reports unknown kinds and tasks") {
  auto path = temp_file("triggers_bad.csv");
  std::ofstream(path) << "t_eog,t_gaze,kind,task,trial_index,diopter\n"
                      << "0.0,0.0,task_begin,fixation,0,-3.0\n";
  CHECK_THROWS_WITH_AS(load_triggers(path),
                       doctest::Contains("unknown trigger kind"), FormatError);
}
