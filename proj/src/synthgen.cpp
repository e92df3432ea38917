#include "refrakt/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "refrakt/errors.hpp"
#include "refrakt/rng.hpp"

namespace refrakt {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEogFs = 512.0;
constexpr double kGazeFs = 120.0;
constexpr double kFixationDur = 5.0;
constexpr double kReadingDur = 40.0;
constexpr double kIti = 1.0;
constexpr double kConditionGap = 2.0;
constexpr double kLeadIn = 2.0;

// RNG stream ids under the profile seed.
enum : std::uint64_t {
  kStreamLevels = 0,
  kStreamEog = 1,
  kStreamGaze = 2,
  kStreamSchedule = 3,
  kStreamConfidence = 4,
  kStreamSubject = 5,
  kStreamEvents = 6,
};

struct ScheduledTask {
  TaskType type = TaskType::fixation;
  int condition = 0;
  int trial_index = 0;
  double start = 0.0;
  double end = 0.0;
  // Gaze path parameters.
  double cx = 0.5, cy = 0.5;   // fixation center
  double pursuit_hz = 0.35;    // pursuit sweep frequency
  double pursuit_phase = 0.0;
};

struct Schedule {
  std::vector<ScheduledTask> tasks;
  double total = 0.0;
};

Schedule build_schedule(Rng& rng) {
  Schedule s;
  double t = kLeadIn;
  for (int c = 0; c < DiopterClass::kCount; ++c) {
    for (int slot = 0; slot < 8; ++slot) {
      ScheduledTask fix;
      fix.type = TaskType::fixation;
      fix.condition = c;
      fix.trial_index = slot;
      fix.start = t;
      fix.end = t + kFixationDur;
      fix.cx = 0.5 + rng.uniform(-0.05, 0.05);
      fix.cy = 0.5 + rng.uniform(-0.05, 0.05);
      s.tasks.push_back(fix);
      t = fix.end + kIti;

      ScheduledTask pur;
      pur.type = TaskType::pursuit;
      pur.condition = c;
      pur.trial_index = slot;
      pur.start = t;
      pur.end = t + rng.uniform(1.43, 2.92);
      pur.pursuit_hz = rng.uniform(0.3, 0.45);
      pur.pursuit_phase = rng.uniform(0.0, 2.0 * kPi);
      s.tasks.push_back(pur);
      t = pur.end + kIti;
    }
    ScheduledTask read;
    read.type = TaskType::reading;
    read.condition = c;
    read.trial_index = 0;
    read.start = t;
    read.end = t + kReadingDur;
    s.tasks.push_back(read);
    t = read.end + kConditionGap;
  }
  s.total = t + kLeadIn;
  return s;
}

TriggerLog build_triggers(const Schedule& s, const SubjectProfile& p) {
  TriggerLog log;
  log.events.reserve(s.tasks.size() * 2);
  for (const auto& task : s.tasks) {
    TriggerEvent ev;
    ev.task = task.type;
    ev.trial_index = task.trial_index;
    ev.condition = DiopterClass::from_index(task.condition);
    ev.kind = TriggerKind::task_start;
    ev.t_eog = task.start + p.clock_offset_eog;
    ev.t_gaze = task.start + p.clock_offset_gaze;
    log.events.push_back(ev);
    ev.kind = TriggerKind::task_end;
    ev.t_eog = task.end + p.clock_offset_eog;
    ev.t_gaze = task.end + p.clock_offset_gaze;
    log.events.push_back(ev);
  }
  return log;
}

// Target gaze position on the session clock; the task the instant belongs to
// (nullptr in gaps).
struct GazePoint {
  double x = 0.5, y = 0.5;
  const ScheduledTask* task = nullptr;
};

GazePoint gaze_target(const Schedule& s, double t) {
  GazePoint g;
  auto it = std::upper_bound(
      s.tasks.begin(), s.tasks.end(), t,
      [](double v, const ScheduledTask& task) { return v < task.start; });
  if (it == s.tasks.begin()) return g;
  const ScheduledTask& task = *(it - 1);
  if (t > task.end) return g;
  g.task = &task;
  const double rel = t - task.start;
  switch (task.type) {
    case TaskType::fixation:
      g.x = task.cx;
      g.y = task.cy;
      break;
    case TaskType::pursuit:
      g.x = 0.5 + 0.35 * std::sin(2.0 * kPi * task.pursuit_hz * rel +
                                  task.pursuit_phase);
      g.y = 0.5 + 0.08 * std::sin(kPi * task.pursuit_hz * rel);
      break;
    case TaskType::reading: {
      const double sweep = rel * 0.9;
      const double line = std::floor(rel / 5.0);
      g.x = 0.15 + 0.7 * (sweep - std::floor(sweep));
      g.y = 0.28 + 0.06 * line;
      break;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// EOG synthesis
// ---------------------------------------------------------------------------

struct SubjectConstants {
  double pupil_base = 4.2;
  double tremor_hz[4];
  double drift_hz[4];
  double eog_gain[4];
  double eog_offset[4];
  double gaze_gain[2];
  double gaze_offset[2];
  double pupil_gain = 1.0;
};

SubjectConstants draw_constants(const SubjectProfile& p) {
  Rng rng(mix_seed(p.seed, kStreamSubject));
  SubjectConstants k;
  k.pupil_base = std::clamp(4.2 + 0.35 * rng.normal(), 3.4, 5.2);
  const double squash = std::tanh(p.confound_scale);
  for (int c = 0; c < 4; ++c) {
    k.tremor_hz[c] = rng.uniform(3.8, 4.7);
    k.drift_hz[c] = rng.uniform(0.42, 0.52);
    k.eog_gain[c] = std::max(0.2, 1.0 + 0.3 * squash * rng.normal());
    k.eog_offset[c] = 20.0 * squash * rng.normal();
  }
  for (int a = 0; a < 2; ++a) {
    k.gaze_gain[a] = std::max(0.2, 1.0 + 0.15 * squash * rng.normal());
    k.gaze_offset[a] = 0.05 * squash * rng.normal();
  }
  k.pupil_gain = std::max(0.2, 1.0 + 0.2 * squash * rng.normal());
  return k;
}

EogRecording synth_eog(const SubjectProfile& p, const Schedule& s,
                       const Matrix<double>& levels,
                       const SubjectConstants& consts) {
  const auto n = static_cast<std::size_t>(std::ceil(s.total * kEogFs));
  EogRecording rec;
  rec.subject_id = p.subject_id;
  rec.timestamps.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    rec.timestamps[i] = p.clock_offset_eog + static_cast<double>(i) / kEogFs;
  for (auto& ch : rec.channels) ch.assign(n, 0.0);

  Rng rng(mix_seed(p.seed, kStreamEog));
  const double ces = p.class_effect_scale;

  for (const auto& task : s.tasks) {
    const auto i0 = static_cast<std::size_t>(std::ceil(task.start * kEogFs));
    const auto i1 =
        std::min(n, static_cast<std::size_t>(std::floor(task.end * kEogFs)));
    const double lvl = levels(0, task.condition);
    const double amp_tremor = ces * 10.0 * (lvl + 1.4);
    const double amp_drift = ces * 8.0 * (lvl + 1.4);

    double phase_tr[4], phase_dr[4];
    for (int c = 0; c < 4; ++c) {
      phase_tr[c] = rng.uniform(0.0, 2.0 * kPi);
      phase_dr[c] = rng.uniform(0.0, 2.0 * kPi);
    }

    // Task motion parameters.
    double amp_h = 0.0, freq_h = 0.0, phase_h = 0.0;
    std::vector<double> step_t;
    std::vector<double> step_h, step_v;
    switch (task.type) {
      case TaskType::fixation: {
        double t = task.start;
        double cum_h = 0.0, cum_v = 0.0;
        for (;;) {
          t += -std::log(1.0 - rng.uniform()) / 1.2;
          if (t >= task.end - 0.05) break;
          double dh = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(4.0, 10.0);
          double dv = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(2.0, 5.0);
          if (std::abs(cum_h + dh) > 25.0) dh = -dh;
          if (std::abs(cum_v + dv) > 15.0) dv = -dv;
          cum_h += dh;
          cum_v += dv;
          step_t.push_back(t);
          step_h.push_back(cum_h);
          step_v.push_back(cum_v);
        }
        break;
      }
      case TaskType::pursuit:
        amp_h = 80.0 * (1.0 + 0.1 * rng.normal());
        freq_h = task.pursuit_hz;
        phase_h = task.pursuit_phase;
        break;
      case TaskType::reading:
        amp_h = 55.0 * (1.0 + 0.1 * rng.normal());
        break;
    }

    std::size_t step = 0;
    for (std::size_t i = i0; i < i1; ++i) {
      const double t = static_cast<double>(i) / kEogFs;
      const double rel = t - task.start;
      double h = 0.0, v = 0.0;
      switch (task.type) {
        case TaskType::fixation:
          while (step < step_t.size() && step_t[step] <= t) ++step;
          if (step > 0) {
            h = step_h[step - 1];
            v = step_v[step - 1];
          }
          break;
        case TaskType::pursuit:
          h = amp_h * std::sin(2.0 * kPi * freq_h * rel + phase_h);
          v = 0.3 * amp_h * std::sin(kPi * freq_h * rel);
          break;
        case TaskType::reading: {
          const double sweep = rel * 0.9;
          h = amp_h * (2.0 * (sweep - std::floor(sweep)) - 1.0);
          v = 6.0 * std::sin(2.0 * kPi * 0.12 * rel);
          break;
        }
      }
      const double motion[4] = {h, v, 0.92 * h, 0.95 * v};
      for (int c = 0; c < 4; ++c)
        rec.channels[static_cast<std::size_t>(c)][i] +=
            motion[c] +
            amp_tremor *
                std::sin(2.0 * kPi * consts.tremor_hz[c] * rel + phase_tr[c]) +
            amp_drift *
                std::sin(2.0 * kPi * consts.drift_hz[c] * rel + phase_dr[c]);
    }
  }

  // Slow wander, white noise and the literal subject confound.
  const double rho = std::exp(-1.0 / (3.0 * kEogFs));
  const double ou_sd = 3.0 * std::sqrt(1.0 - rho * rho);
  for (int c = 0; c < 4; ++c) {
    auto& ch = rec.channels[static_cast<std::size_t>(c)];
    double ou = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ou = rho * ou + ou_sd * rng.normal();
      const double x = ch[i] + ou + p.noise_sd * rng.normal();
      ch[i] = consts.eog_gain[c] * x + consts.eog_offset[c];
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Gaze synthesis
// ---------------------------------------------------------------------------

struct BlinkTrack {
  std::vector<double> start, end;

  bool covers(double t) const {
    auto it = std::upper_bound(start.begin(), start.end(), t);
    if (it == start.begin()) return false;
    const auto i = static_cast<std::size_t>(it - start.begin()) - 1;
    return t <= end[i];
  }
};

BlinkTrack draw_blinks(const SubjectProfile& p, double total) {
  Rng rng(mix_seed(p.seed, kStreamEvents));
  BlinkTrack b;
  double t = 4.0;
  while (true) {
    t += rng.uniform(6.0, 14.0);
    const double dur = rng.uniform(0.1, 0.3);
    if (t + dur >= total - 1.0) break;
    b.start.push_back(t);
    b.end.push_back(t + dur);
  }
  return b;
}

// Markov low-confidence bursts: dips start at conf_dip_rate per second and
// last 0.4 s on average.
class ConfidenceChain {
 public:
  ConfidenceChain(std::uint64_t seed, double dip_rate)
      : rng_(seed), p_enter_(dip_rate / kGazeFs), p_exit_(1.0 / (0.4 * kGazeFs)) {}

  double next() {
    if (bad_) {
      if (rng_.uniform() < p_exit_) bad_ = false;
    } else if (rng_.uniform() < p_enter_) {
      bad_ = true;
    }
    return bad_ ? 0.45 * rng_.uniform() : 0.88 + 0.12 * rng_.uniform();
  }

 private:
  Rng rng_;
  bool bad_ = false;
  double p_enter_;
  double p_exit_;
};

// Dispersion scale for the active condition; 1 in gaps and at zero effect.
double dispersion_factor(const GazePoint& g, const Matrix<double>& levels,
                         double ces) {
  if (g.task == nullptr) return 1.0;
  return std::exp(0.25 * ces * levels(2, g.task->condition));
}

double pupil_diameter(const GazePoint& g, const Matrix<double>& levels,
                      double ces, const SubjectConstants& consts, double t) {
  double d = consts.pupil_base + 0.05 * std::sin(2.0 * kPi * 0.2 * t);
  if (g.task != nullptr) d += ces * 0.5 * levels(1, g.task->condition);
  return consts.pupil_gain * d;
}

void emit_pupil_records(const SubjectProfile& p, const Schedule& s,
                        const Matrix<double>& levels,
                        const SubjectConstants& consts, const BlinkTrack& blinks,
                        int eye, std::vector<GazeRecord>& out) {
  const GazeStream s2d =
      eye == 0 ? GazeStream::pupil_eye0_2d : GazeStream::pupil_eye1_2d;
  const GazeStream s3d =
      eye == 0 ? GazeStream::pupil_eye0_3d : GazeStream::pupil_eye1_3d;
  Rng rng(mix_seed(p.seed, kStreamGaze + 10 * static_cast<std::uint64_t>(eye)));
  ConfidenceChain conf(
      mix_seed(p.seed, kStreamConfidence + static_cast<std::uint64_t>(eye)),
      p.conf_dip_rate);
  const double ces = p.class_effect_scale;

  const double sphere[3] = {eye == 0 ? -31.4 : 34.1, eye == 0 ? 8.2 : 8.0,
                            eye == 0 ? -21.6 : -20.9};
  const double vergence = eye == 0 ? 0.08 : -0.08;

  double t = eye == 0 ? 0.0 : 0.0041;
  while (t < s.total) {
    const GazePoint g = gaze_target(s, t);
    double c = conf.next();
    if (blinks.covers(t)) c = 0.03 + 0.05 * rng.uniform();
    const double nf = c < 0.5 ? 6.0 : 1.0;
    const double jitter =
        0.008 * dispersion_factor(g, levels, ces) * nf;
    const double npx =
        consts.gaze_gain[0] * (g.x + jitter * rng.normal()) +
        consts.gaze_offset[0];
    const double npy =
        consts.gaze_gain[1] * (g.y + jitter * rng.normal()) +
        consts.gaze_offset[1];
    const double d_mm =
        pupil_diameter(g, levels, ces, consts, t) + 0.06 * nf * rng.normal();

    GazeRecord r2;
    r2.stream = s2d;
    r2.t = t + p.clock_offset_gaze;
    r2.confidence = c;
    const double dia_px = d_mm * 18.0 + 1.5 * nf * rng.normal();
    const double cx = npx * 192.0, cy = npy * 192.0;
    const double angle = 90.0 + 20.0 * rng.normal();
    r2.payload = {dia_px,        npx,           npy,
                  cx,            cy,            dia_px * 0.88,
                  dia_px * (1.0 + 0.02 * rng.normal()), angle,
                  cx + 0.5 * rng.normal(),      cy + 0.5 * rng.normal()};
    out.push_back(std::move(r2));

    // Optical axis toward the target, slightly converged.
    double nx = (g.x - 0.5) * 0.55 + vergence;
    double ny = -(g.y - 0.5) * 0.32;
    double nz = -1.0;
    const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
    nx /= norm;
    ny /= norm;
    nz /= norm;

    GazeRecord r3;
    r3.stream = s3d;
    r3.t = t + p.clock_offset_gaze;
    r3.confidence = c;
    const double d3 = d_mm + 0.02 * rng.normal();
    const double radius = 10.392 + 0.01 * rng.normal();
    r3.payload = {d3 + 0.02 * rng.normal(),
                  d3,
                  npx + 0.002 * rng.normal(),
                  npy + 0.002 * rng.normal(),
                  cx + 0.3 * rng.normal(),
                  cy + 0.3 * rng.normal(),
                  dia_px * 0.9,
                  dia_px * (1.0 + 0.02 * rng.normal()),
                  angle + rng.normal(),
                  sphere[0] + 0.05 * rng.normal(),
                  sphere[1] + 0.05 * rng.normal(),
                  sphere[2] + 0.05 * rng.normal(),
                  radius,
                  96.0 + 2.0 * rng.normal(),
                  96.0 + 2.0 * rng.normal(),
                  88.0 + 1.0 * rng.normal(),
                  88.0 + 1.0 * rng.normal(),
                  90.0 + 5.0 * rng.normal(),
                  sphere[0] + radius * nx,
                  sphere[1] + radius * ny,
                  sphere[2] + radius * nz,
                  nx,
                  ny,
                  nz,
                  d3 / 2.0 * 0.98,
                  std::acos(std::clamp(ny, -1.0, 1.0)),
                  std::atan2(nz, nx)};
    out.push_back(std::move(r3));

    t += (1.0 / kGazeFs) * (1.0 + 0.04 * (rng.uniform() - 0.5));
  }
}

void emit_gaze_records(const SubjectProfile& p, const Schedule& s,
                       const Matrix<double>& levels,
                       const SubjectConstants& consts, const BlinkTrack& blinks,
                       std::vector<GazeRecord>& out) {
  Rng rng(mix_seed(p.seed, kStreamGaze + 20));
  ConfidenceChain conf(mix_seed(p.seed, kStreamConfidence + 2),
                       p.conf_dip_rate);
  const double ces = p.class_effect_scale;

  double t = 0.002;
  while (t < s.total) {
    const GazePoint g = gaze_target(s, t);
    double c = conf.next();
    if (blinks.covers(t)) c = 0.03 + 0.05 * rng.uniform();
    const double nf = c < 0.5 ? 6.0 : 1.0;
    const double jitter = 0.008 * dispersion_factor(g, levels, ces) * nf;
    const double gx = consts.gaze_gain[0] * (g.x + jitter * rng.normal()) +
                      consts.gaze_offset[0];
    const double gy = consts.gaze_gain[1] * (g.y + jitter * rng.normal()) +
                      consts.gaze_offset[1];

    const double depth =
        (g.task != nullptr && g.task->type == TaskType::reading ? 450.0
                                                                : 620.0) +
        5.0 * rng.normal();
    const double px = (gx - 0.5) * 340.0;
    const double py = -(gy - 0.5) * 190.0;
    const double ox = 0.3 + 0.05 * rng.normal();
    const double oy = 9.8 + 0.05 * rng.normal();
    const double oz = -15.2 + 0.05 * rng.normal();
    double dx = px - ox, dy = py - oy, dz = depth - oz;
    const double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
    dx /= norm;
    dy /= norm;
    dz /= norm;

    GazeRecord r;
    r.stream = GazeStream::gaze;
    r.t = t + p.clock_offset_gaze;
    r.confidence = c;
    r.payload = {ox, oy, oz, dx, dy, dz, px, py, depth, gx, gy};
    out.push_back(std::move(r));

    t += (1.0 / kGazeFs) * (1.0 + 0.04 * (rng.uniform() - 0.5));
  }
}

void emit_fixation_records(const SubjectProfile& p, const Schedule& s,
                           const Matrix<double>& levels,
                           const SubjectConstants& consts,
                           std::vector<GazeRecord>& out) {
  Rng rng(mix_seed(p.seed, kStreamEvents + 7));
  const double ces = p.class_effect_scale;
  for (const auto& task : s.tasks) {
    if (task.type == TaskType::pursuit) continue;
    const bool reading = task.type == TaskType::reading;
    double t = task.start + (reading ? 0.05 : 0.3);
    while (true) {
      const double dur =
          reading ? rng.uniform(0.18, 0.28) : rng.uniform(0.8, 1.2);
      if (t + dur > task.end) break;
      const GazePoint g = gaze_target(s, t + dur / 2.0);
      const double disp = 0.85 * dispersion_factor(g, levels, ces) *
                          (1.0 + 0.12 * std::abs(rng.normal()));
      const double gx = consts.gaze_gain[0] * (g.x + 0.003 * rng.normal()) +
                        consts.gaze_offset[0];
      const double gy = consts.gaze_gain[1] * (g.y + 0.003 * rng.normal()) +
                        consts.gaze_offset[1];
      GazeRecord r;
      r.stream = GazeStream::fixation;
      r.t = t + p.clock_offset_gaze;
      r.confidence = 0.92;
      r.payload = {disp,
                   dur,
                   gx,
                   gy,
                   (gx - 0.5) * 340.0,
                   -(gy - 0.5) * 190.0,
                   reading ? 450.0 : 620.0};
      out.push_back(std::move(r));
      t += dur + (reading ? rng.uniform(0.03, 0.08) : rng.uniform(0.15, 0.3));
    }
  }
}

// Emitted values are snapped to a fixed grid so the text files stay compact
// under shortest-round-trip formatting. The quanta sit far below the noise
// floors (1e-4 uV EOG, 1e-6 payload units, 1 us time).
double quantize(double v, double scale) { return std::round(v * scale) / scale; }

void quantize_outputs(SubjectData& data) {
  for (auto& t : data.eog.timestamps) t = quantize(t, 1e6);
  for (auto& ch : data.eog.channels)
    for (auto& v : ch) v = quantize(v, 1e4);
  for (auto& r : data.gaze) {
    r.t = quantize(r.t, 1e6);
    r.confidence = quantize(r.confidence, 1e6);
    for (auto& v : r.payload) v = quantize(v, 1e6);
  }
  for (auto& e : data.triggers.events) {
    e.t_eog = quantize(e.t_eog, 1e6);
    e.t_gaze = quantize(e.t_gaze, 1e6);
  }
}

void emit_blink_records(const SubjectProfile& p, const BlinkTrack& blinks,
                        std::vector<GazeRecord>& out) {
  for (std::size_t i = 0; i < blinks.start.size(); ++i) {
    GazeRecord on;
    on.stream = GazeStream::blink;
    on.t = blinks.start[i] + p.clock_offset_gaze;
    on.confidence = 1.0;
    on.payload = {0.0};
    out.push_back(std::move(on));
    GazeRecord off;
    off.stream = GazeStream::blink;
    off.t = blinks.end[i] + p.clock_offset_gaze;
    off.confidence = 1.0;
    off.payload = {1.0};
    out.push_back(std::move(off));
  }
}

}  // namespace

void SubjectProfile::validate() const {
  if (subject_id.empty()) throw ParamError("profile: empty subject_id");
  if (class_effect_scale < 0.0)
    throw ParamError("profile: class_effect_scale < 0");
  if (confound_scale < 0.0) throw ParamError("profile: confound_scale < 0");
  if (!(noise_sd > 0.0)) throw ParamError("profile: noise_sd must be > 0");
  if (conf_dip_rate < 0.0) throw ParamError("profile: conf_dip_rate < 0");
}

Matrix<double> class_levels(const SubjectProfile& profile) {
  profile.validate();
  const double ces = profile.class_effect_scale;
  const double cs = profile.confound_scale;
  const double lambda = ces + cs > 0.0 ? cs / (ces + cs) : 0.0;

  // Probabilistic Fisher-Yates: each step swaps with probability lambda, so
  // lambda 0 keeps the shared identity mapping and lambda 1 draws a uniform
  // permutation. The grid values themselves never change, which keeps the
  // subject-dependent class geometry intact at any confound level.
  Rng rng(mix_seed(profile.seed, kStreamLevels));
  Matrix<double> levels(3, DiopterClass::kCount);
  for (int g = 0; g < 3; ++g) {
    std::vector<int> pi(DiopterClass::kCount);
    for (int c = 0; c < DiopterClass::kCount; ++c) pi[static_cast<std::size_t>(c)] = c;
    for (int i = DiopterClass::kCount - 1; i > 0; --i) {
      const double u = rng.uniform();
      const int j = rng.uniform_int(i + 1);
      if (u < lambda) std::swap(pi[static_cast<std::size_t>(i)], pi[static_cast<std::size_t>(j)]);
    }
    for (int c = 0; c < DiopterClass::kCount; ++c) {
      const int m = pi[static_cast<std::size_t>(c)];
      levels(g, c) = profile.sign_symmetric
                         ? (std::abs(m - 6) - 3.0) / 3.0
                         : (m - 6) / 6.0;
    }
  }
  return levels;
}

SubjectData generate_subject(const SubjectProfile& profile) {
  profile.validate();
  const Matrix<double> levels = class_levels(profile);
  const SubjectConstants consts = draw_constants(profile);

  Rng schedule_rng(mix_seed(profile.seed, kStreamSchedule));
  const Schedule schedule = build_schedule(schedule_rng);
  const BlinkTrack blinks = draw_blinks(profile, schedule.total);

  SubjectData data;
  data.triggers = build_triggers(schedule, profile);
  data.eog = synth_eog(profile, schedule, levels, consts);

  data.gaze.reserve(static_cast<std::size_t>(schedule.total * kGazeFs * 5.1));
  emit_pupil_records(profile, schedule, levels, consts, blinks, 0, data.gaze);
  emit_pupil_records(profile, schedule, levels, consts, blinks, 1, data.gaze);
  emit_gaze_records(profile, schedule, levels, consts, blinks, data.gaze);
  emit_fixation_records(profile, schedule, levels, consts, data.gaze);
  emit_blink_records(profile, blinks, data.gaze);
  std::stable_sort(
      data.gaze.begin(), data.gaze.end(),
      [](const GazeRecord& a, const GazeRecord& b) { return a.t < b.t; });
  quantize_outputs(data);
  return data;
}

std::vector<SubjectProfile> derive_profiles(int n_subjects,
                                            double class_effect_scale,
                                            double confound_scale,
                                            std::uint64_t seed) {
  if (n_subjects < 1) throw ParamError("derive_profiles: n_subjects < 1");
  Rng rng(mix_seed(seed, 0xD5));
  std::vector<SubjectProfile> profiles;
  profiles.reserve(static_cast<std::size_t>(n_subjects));
  for (int s = 0; s < n_subjects; ++s) {
    SubjectProfile p;
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%02d", s + 1);
    p.subject_id = buf;
    p.seed = mix_seed(seed, static_cast<std::uint64_t>(s));
    p.class_effect_scale = class_effect_scale;
    p.confound_scale = confound_scale;
    p.clock_offset_eog = rng.uniform(-40.0, 40.0);
    p.clock_offset_gaze = rng.uniform(-40.0, 40.0);
    profiles.push_back(std::move(p));
  }
  return profiles;
}

void generate_dataset(const std::filesystem::path& out_dir, int n_subjects,
                      double class_effect_scale, double confound_scale,
                      std::uint64_t seed) {
  const auto profiles =
      derive_profiles(n_subjects, class_effect_scale, confound_scale, seed);
  std::filesystem::create_directories(out_dir);

  nlohmann::json manifest;
  manifest["subjects"] = nlohmann::json::array();
  for (const auto& p : profiles) {
    const auto dir = out_dir / p.subject_id;
    std::filesystem::create_directories(dir);
    const SubjectData data = generate_subject(p);
    save_eog_recording(data.eog, dir / "eog.csv");
    save_gaze_records(data.gaze, dir / "gaze.jsonl");
    save_triggers(data.triggers, dir / "triggers.csv");
    manifest["subjects"].push_back(p.subject_id);
  }
  manifest["n_subjects"] = n_subjects;
  manifest["class_effect_scale"] = class_effect_scale;
  manifest["confound_scale"] = confound_scale;
  manifest["seed"] = seed;

  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw FormatError("cannot write manifest.json");
  out << manifest.dump(2) << "\n";
}

}  // namespace refrakt
