#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <refrakt/pipeline.hpp>
#include <refrakt/synthgen.hpp>
#include <set>

using namespace refrakt;
namespace fs = std::filesystem;

namespace {

SubjectProfile base_profile() {
  SubjectProfile p;
  p.subject_id = "s01";
  p.seed = 7;
  p.class_effect_scale = 1.0;
  p.confound_scale = 0.0;
  p.clock_offset_eog = 3.25;
  p.clock_offset_gaze = -1.5;
  return p;
}

}  // namespace

TEST_CASE("profile validation") {
  SubjectProfile p = base_profile();
  CHECK_NOTHROW(p.validate());

  p.subject_id = "";
  CHECK_THROWS_AS(p.validate(), ParamError);
  p = base_profile();
  p.class_effect_scale = -0.1;
  CHECK_THROWS_AS(p.validate(), ParamError);
  p = base_profile();
  p.confound_scale = -1.0;
  CHECK_THROWS_AS(p.validate(), ParamError);
  p = base_profile();
  p.noise_sd = 0.0;
  CHECK_THROWS_AS(p.validate(), ParamError);
  p = base_profile();
  p.conf_dip_rate = -0.01;
  CHECK_THROWS_AS(p.validate(), ParamError);
}

TEST_CASE("class_levels") {
  SUBCASE("zero confound keeps the shared linear grid") {
    SubjectProfile p = base_profile();
    p.class_effect_scale = 3.0;
    for (std::uint64_t seed : {1ull, 17ull, 999ull}) {
      p.seed = seed;
      auto levels = class_levels(p);
      REQUIRE(levels.rows == 3);
      REQUIRE(levels.cols == DiopterClass::kCount);
      for (int g = 0; g < 3; ++g)
        for (int c = 0; c < DiopterClass::kCount; ++c)
          CHECK(levels(g, c) == (c - 6) / 6.0);
    }
  }

  SUBCASE("sign-symmetric grid folds the diopter sign away") {
    SubjectProfile p = base_profile();
    p.sign_symmetric = true;
    auto levels = class_levels(p);
    for (int g = 0; g < 3; ++g)
      for (int c = 0; c < DiopterClass::kCount; ++c)
        CHECK(levels(g, c) == (std::abs(c - 6) - 3.0) / 3.0);
    // the fold makes -d and +d indistinguishable
    CHECK(levels(0, 2) == levels(0, 10));
    CHECK(levels(1, 0) == levels(1, 12));
  }

  SUBCASE("full confound draws a permutation of the same grid") {
    SubjectProfile p = base_profile();
    p.class_effect_scale = 0.0;
    p.confound_scale = 5.0;
    p.seed = 42;
    auto levels = class_levels(p);
    std::vector<double> grid;
    for (int c = 0; c < DiopterClass::kCount; ++c)
      grid.push_back((c - 6) / 6.0);
    std::sort(grid.begin(), grid.end());
    bool any_scrambled = false;
    for (int g = 0; g < 3; ++g) {
      std::vector<double> row;
      for (int c = 0; c < DiopterClass::kCount; ++c) row.push_back(levels(g, c));
      for (int c = 0; c < DiopterClass::kCount; ++c)
        if (row[static_cast<std::size_t>(c)] != (c - 6) / 6.0)
          any_scrambled = true;
      std::sort(row.begin(), row.end());
      CHECK(row == grid);
    }
    CHECK(any_scrambled);
  }

  SUBCASE("deterministic in the profile seed") {
    SubjectProfile p = base_profile();
    p.confound_scale = 2.0;
    auto a = class_levels(p);
    auto b = class_levels(p);
    CHECK(a.data == b.data);
    p.seed += 1;
    auto c = class_levels(p);
    CHECK(a.data != c.data);
  }
}

TEST_CASE("generate_subject emits a complete session" * doctest::timeout(300)) {
  const SubjectProfile p = base_profile();
  const SubjectData data = generate_subject(p);

  // 13 conditions x (8 fixation + 8 pursuit + 1 reading) x start/end.
  REQUIRE(data.triggers.events.size() == 442);
  const double clock_gap = p.clock_offset_eog - p.clock_offset_gaze;
  for (std::size_t i = 0; i < data.triggers.events.size(); ++i) {
    const auto& ev = data.triggers.events[i];
    if (i > 0) CHECK(ev.t_eog > data.triggers.events[i - 1].t_eog);
    CHECK(std::abs(ev.t_eog - ev.t_gaze - clock_gap) <= 2e-6);
  }

  auto instances = paired_task_instances(data.triggers);
  REQUIRE(instances.size() == 13 * 17);
  std::map<std::pair<int, TaskType>, int> counts;
  for (const auto& inst : instances) {
    counts[{inst.condition.index, inst.task}]++;
    const double dur = inst.duration();
    switch (inst.task) {
      case TaskType::fixation:
        CHECK(dur == doctest::Approx(5.0).epsilon(1e-5));
        break;
      case TaskType::pursuit:
        CHECK(dur >= 1.42);
        CHECK(dur <= 2.93);
        break;
      case TaskType::reading:
        CHECK(dur == doctest::Approx(40.0).epsilon(1e-5));
        break;
    }
  }
  for (int c = 0; c < DiopterClass::kCount; ++c) {
    CHECK(counts[{c, TaskType::fixation}] == 8);
    CHECK(counts[{c, TaskType::pursuit}] == 8);
    CHECK(counts[{c, TaskType::reading}] == 1);
  }

  // EOG: four equal-length channels on a strict 512 Hz clock.
  const auto& ts = data.eog.timestamps;
  REQUIRE(ts.size() > 512 * 1400);
  for (int ch = 0; ch < 4; ++ch)
    CHECK(data.eog.channels[static_cast<std::size_t>(ch)].size() == ts.size());
  for (std::size_t i = 1; i < ts.size(); ++i) {
    CHECK(ts[i] > ts[i - 1]);
    CHECK(std::abs(ts[i] - ts[i - 1] - 1.0 / 512.0) <= 3e-6);
  }
  double lo = 1e30, hi = -1e30;
  for (double v : data.eog.channels[0]) {
    REQUIRE(std::isfinite(v));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi - lo > 1.0);  // microvolt-scale activity, not a flat line

  // Gaze: every record passes the schema validator, all streams present,
  // confidence dips occur but stay the minority.
  std::set<GazeStream> streams;
  std::size_t low_conf = 0;
  double prev_t = -1e30;
  for (const auto& r : data.gaze) {
    CHECK_NOTHROW(validate_gaze_record(r));
    streams.insert(r.stream);
    if (r.confidence < 0.5) ++low_conf;
    CHECK(r.t >= prev_t);
    prev_t = r.t;
  }
  CHECK(streams.size() == kGazeStreamCount);
  CHECK(low_conf > 0);
  CHECK(low_conf < data.gaze.size() / 4);
  CHECK(data.gaze.back().t - data.gaze.front().t > 1400.0);
}

TEST_CASE("zero effect scale leaves no label information" *
          doctest::timeout(300)) {
  SubjectProfile p = base_profile();
  p.class_effect_scale = 0.0;
  p.confound_scale = 2.0;
  p.seed = 99;

  const SubjectData a = generate_subject(p);
  const SubjectData a2 = generate_subject(p);

  // Determinism first: the same profile reproduces byte-identical data.
  CHECK(a.eog.timestamps == a2.eog.timestamps);
  for (int ch = 0; ch < 4; ++ch)
    CHECK(a.eog.channels[static_cast<std::size_t>(ch)] ==
          a2.eog.channels[static_cast<std::size_t>(ch)]);
  REQUIRE(a.gaze.size() == a2.gaze.size());
  for (std::size_t i = 0; i < a.gaze.size(); i += 997)
    CHECK(a.gaze[i].payload == a2.gaze[i].payload);

  // Flipping sign_symmetric reassigns every class level, but with the class
  // effect scaled to zero the emitted signals cannot change.
  SubjectProfile q = p;
  q.sign_symmetric = true;
  CHECK(class_levels(q).data != class_levels(p).data);

  const SubjectData b = generate_subject(q);
  CHECK(a.eog.timestamps == b.eog.timestamps);
  for (int ch = 0; ch < 4; ++ch)
    CHECK(a.eog.channels[static_cast<std::size_t>(ch)] ==
          b.eog.channels[static_cast<std::size_t>(ch)]);
  REQUIRE(a.gaze.size() == b.gaze.size());
  for (std::size_t i = 0; i < a.gaze.size(); ++i) {
    CHECK(a.gaze[i].t == b.gaze[i].t);
    CHECK(a.gaze[i].payload == b.gaze[i].payload);
  }
  REQUIRE(a.triggers.events.size() == b.triggers.events.size());
  for (std::size_t i = 0; i < a.triggers.events.size(); ++i)
    CHECK(a.triggers.events[i].t_eog == b.triggers.events[i].t_eog);
}

TEST_CASE("derive_profiles") {
  auto p = derive_profiles(4, 3.0, 1.5, 123);
  REQUIRE(p.size() == 4);
  CHECK(p[0].subject_id == "s01");
  CHECK(p[3].subject_id == "s04");
  std::set<std::uint64_t> seeds;
  for (const auto& prof : p) {
    seeds.insert(prof.seed);
    CHECK(prof.class_effect_scale == 3.0);
    CHECK(prof.confound_scale == 1.5);
    CHECK(std::abs(prof.clock_offset_eog) <= 40.0);
    CHECK(std::abs(prof.clock_offset_gaze) <= 40.0);
  }
  CHECK(seeds.size() == 4);  // per-subject streams must differ

  auto q = derive_profiles(4, 3.0, 1.5, 123);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i].seed == q[i].seed);
    CHECK(p[i].clock_offset_eog == q[i].clock_offset_eog);
  }
  CHECK_THROWS_AS(derive_profiles(0, 1.0, 0.0, 1), ParamError);
}

TEST_CASE("generate_dataset writes a loadable tree" * doctest::timeout(300)) {
  const auto dir = fs::temp_directory_path() / "refrakt_synthgen_tests";
  fs::remove_all(dir);
  generate_dataset(dir, 1, 0.5, 0.25, 5);

  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(list_subjects(dir) == std::vector<std::string>{"s01"});

  auto loaded = load_subject(dir / "s01");
  CHECK(loaded.subject_id == "s01");
  CHECK(loaded.triggers.events.size() == 442);
  CHECK(paired_task_instances(loaded.triggers).size() == 13 * 17);

  // The generator quantizes before writing, so the files round trip exactly.
  auto profile = derive_profiles(1, 0.5, 0.25, 5)[0];
  auto direct = generate_subject(profile);
  CHECK(loaded.eog.timestamps == direct.eog.timestamps);
  CHECK(loaded.eog.channels[1] == direct.eog.channels[1]);
  REQUIRE(loaded.gaze.size() == direct.gaze.size());
  for (std::size_t i = 0; i < loaded.gaze.size(); i += 1009) {
    CHECK(loaded.gaze[i].t == direct.gaze[i].t);
    CHECK(loaded.gaze[i].confidence == direct.gaze[i].confidence);
    CHECK(loaded.gaze[i].payload == direct.gaze[i].payload);
  }
  fs::remove_all(dir);
}
