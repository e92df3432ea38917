#include "refrakt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace refrakt {

SubjectRaw load_subject(const std::filesystem::path& dir) {
  SubjectRaw raw;
  raw.subject_id = dir.filename().string();
  raw.eog = load_eog_recording(dir / "eog.csv");
  raw.eog.subject_id = raw.subject_id;
  raw.gaze = load_gaze_records(dir / "gaze.jsonl");
  raw.triggers = load_triggers(dir / "triggers.csv");
  return raw;
}

std::vector<std::string> list_subjects(const std::filesystem::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw FormatError("cannot open " + (root / "manifest.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest: " + std::string(e.what()));
  }
  return j.at("subjects").get<std::vector<std::string>>();
}

// ---------------------------------------------------------------------------
// Fold-independent preprocessing
// ---------------------------------------------------------------------------

namespace {

SubjectBundle::Chunk build_chunk(const EogRecording& eog,
                                 const GazeTable& gaze, const TimeSpan& span,
                                 const PipelineOptions& opt) {
  SubjectBundle::Chunk chunk;

  const auto& ts = eog.timestamps;
  const auto lo = std::lower_bound(ts.begin(), ts.end(), span.start_eog);
  const auto hi = std::upper_bound(ts.begin(), ts.end(), span.end_eog);
  const auto n = static_cast<std::size_t>(hi - lo);
  if (n < 2)
    throw FormatError("cannot form trial segment: no EOG coverage for span");
  const auto first = static_cast<std::size_t>(lo - ts.begin());

  chunk.eog_rel_t.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    chunk.eog_rel_t[i] = ts[first + i] - span.start_eog;
  chunk.eog = Matrix<double>(static_cast<int>(n), 4);
  std::vector<double> ch(n);
  for (int c = 0; c < 4; ++c) {
    const auto& src = eog.channels[static_cast<std::size_t>(c)];
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(first),
              src.begin() + static_cast<std::ptrdiff_t>(first + n), ch.begin());
    auto filtered = filter_eog_channel(ch, opt.eog);
    for (std::size_t i = 0; i < n; ++i)
      chunk.eog(static_cast<int>(i), c) = filtered[i];
  }

  const auto& gts = gaze.timestamps;
  auto glo = std::lower_bound(gts.begin(), gts.end(), span.start_gaze);
  auto ghi = std::upper_bound(gts.begin(), gts.end(), span.end_gaze);
  // Clip to the EOG coverage so resampling never extrapolates.
  while (glo < ghi && *glo - span.start_gaze < chunk.eog_rel_t.front()) ++glo;
  while (ghi > glo && *(ghi - 1) - span.start_gaze > chunk.eog_rel_t.back())
    --ghi;
  chunk.gaze_begin = static_cast<int>(glo - gts.begin());
  chunk.gaze_end = static_cast<int>(ghi - gts.begin());
  chunk.gaze_rel_t.resize(static_cast<std::size_t>(chunk.gaze_end - chunk.gaze_begin));
  for (std::size_t i = 0; i < chunk.gaze_rel_t.size(); ++i)
    chunk.gaze_rel_t[i] = gts[static_cast<std::size_t>(chunk.gaze_begin) + i] -
                          span.start_gaze;
  return chunk;
}

}  // namespace

SubjectBundle preprocess_subject(const SubjectRaw& raw,
                                 const PipelineOptions& opt) {
  SubjectBundle bundle;
  bundle.subject_id = raw.subject_id;
  bundle.gaze = clean_gaze(raw.gaze, opt.gaze);

  auto labeled = annotate_segments(raw.triggers);
  std::sort(labeled.begin(), labeled.end(),
            [](const LabeledSegment& a, const LabeledSegment& b) {
              if (a.condition.index != b.condition.index)
                return a.condition.index < b.condition.index;
              return a.trial_slot < b.trial_slot;
            });

  bundle.segments.reserve(labeled.size());
  for (const auto& seg : labeled) {
    SubjectBundle::Segment out;
    out.condition = seg.condition;
    out.trial_slot = seg.trial_slot;
    // Task spans only: the inter-trial interval carries no task activity and
    // would dilute the windows cut from the stitched segment.
    out.chunks[0] = build_chunk(raw.eog, bundle.gaze, seg.fixation, opt);
    out.chunks[1] = build_chunk(raw.eog, bundle.gaze, seg.pursuit, opt);
    out.chunks[2] = build_chunk(raw.eog, bundle.gaze, seg.reading_part, opt);
    const double gap = 1.0 / opt.gaze.fs;
    out.chunks[0].rel_offset = 0.0;
    out.chunks[1].rel_offset = seg.fixation.duration() + gap;
    out.chunks[2].rel_offset =
        out.chunks[1].rel_offset + seg.pursuit.duration() + gap;
    bundle.segments.push_back(std::move(out));
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Normalization fitting
// ---------------------------------------------------------------------------

namespace {

// Two-pass mean/std over the chunks' EOG rows, in segment order.
NormParams fit_eog_rows(const std::vector<const SubjectBundle*>& bundles,
                        const std::vector<std::vector<int>>& seg_idx,
                        const std::vector<const NormParams*>& pre) {
  NormParams p;
  p.mean.assign(4, 0.0);
  p.stddev.assign(4, 0.0);
  std::int64_t count = 0;
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t s = 0; s < bundles.size(); ++s) {
      for (int idx : seg_idx[s]) {
        for (const auto& chunk :
             bundles[s]->segments[static_cast<std::size_t>(idx)].chunks) {
          for (int i = 0; i < chunk.eog.rows; ++i) {
            const double* row = chunk.eog.row(i);
            for (int j = 0; j < 4; ++j) {
              double v = row[j];
              if (pre[s] != nullptr)
                v = (v - pre[s]->mean[static_cast<std::size_t>(j)]) /
                    pre[s]->stddev[static_cast<std::size_t>(j)];
              if (pass == 0) {
                p.mean[static_cast<std::size_t>(j)] += v;
              } else {
                const double d = v - p.mean[static_cast<std::size_t>(j)];
                p.stddev[static_cast<std::size_t>(j)] += d * d;
              }
            }
            if (pass == 0) ++count;
          }
        }
      }
    }
    if (pass == 0) {
      if (count < 2) throw ParamError("fit_eog_rows: need at least 2 rows");
      for (auto& m : p.mean) m /= static_cast<double>(count);
    } else {
      for (auto& s2 : p.stddev) {
        s2 = std::sqrt(s2 / static_cast<double>(count));
        if (s2 < kStdFloor) s2 = kStdFloor;
      }
    }
  }
  return p;
}

// Two-pass masked mean/std over the segments' gaze rows.
NormParams fit_gaze_rows(const std::vector<const SubjectBundle*>& bundles,
                         const std::vector<std::vector<int>>& seg_idx,
                         const std::vector<const NormParams*>& pre) {
  NormParams p;
  p.mean.assign(kGazeFeatureCount, 0.0);
  p.stddev.assign(kGazeFeatureCount, 0.0);
  std::vector<std::int64_t> count(kGazeFeatureCount, 0);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t s = 0; s < bundles.size(); ++s) {
      const GazeTable& g = bundles[s]->gaze;
      for (int idx : seg_idx[s]) {
        for (const auto& chunk :
             bundles[s]->segments[static_cast<std::size_t>(idx)].chunks) {
          for (int i = chunk.gaze_begin; i < chunk.gaze_end; ++i) {
            for (int j = 0; j < kGazeFeatureCount; ++j) {
              if (!g.valid(i, j)) continue;
              const auto ju = static_cast<std::size_t>(j);
              double v = g.values(i, j);
              if (pre[s] != nullptr)
                v = (v - pre[s]->mean[ju]) / pre[s]->stddev[ju];
              if (pass == 0) {
                p.mean[ju] += v;
                ++count[ju];
              } else {
                const double d = v - p.mean[ju];
                p.stddev[ju] += d * d;
              }
            }
          }
        }
      }
    }
    if (pass == 0) {
      for (int j = 0; j < kGazeFeatureCount; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (count[ju] > 0) p.mean[ju] /= static_cast<double>(count[ju]);
      }
    } else {
      for (int j = 0; j < kGazeFeatureCount; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        p.stddev[ju] =
            count[ju] > 0
                ? std::sqrt(p.stddev[ju] / static_cast<double>(count[ju]))
                : 0.0;
        if (p.stddev[ju] < kStdFloor) p.stddev[ju] = kStdFloor;
      }
    }
  }
  return p;
}

std::vector<int> all_segment_indices(const SubjectBundle& bundle) {
  std::vector<int> idx(bundle.segments.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return idx;
}

// Builds one fully-normalized FeatureSegment. The norm lists are applied in
// order (one stage for subject-dependent, two for LOSO).
FeatureSegment build_segment(const SubjectBundle& bundle, int seg_idx,
                             const std::vector<const NormParams*>& eog_norms,
                             const std::vector<const NormParams*>& gaze_norms,
                             Modality modality) {
  const auto& seg = bundle.segments[static_cast<std::size_t>(seg_idx)];

  std::vector<double> rel_t;
  Matrix<double> eog_out;
  Matrix<double> gaze_out;
  Matrix<std::uint8_t> gaze_valid;
  {
    int total_rows = 0;
    for (const auto& chunk : seg.chunks)
      total_rows += static_cast<int>(chunk.gaze_rel_t.size());
    rel_t.reserve(static_cast<std::size_t>(total_rows));
    eog_out = Matrix<double>(total_rows, kEogFeatureCount);
    gaze_out = Matrix<double>(total_rows, kGazeFeatureCount);
    gaze_valid = Matrix<std::uint8_t>(total_rows, kGazeFeatureCount);
  }

  int row = 0;
  for (const auto& chunk : seg.chunks) {
    // EOG: normalize, differentiate within the chunk, resample.
    Matrix<double> norm = chunk.eog;
    for (const NormParams* p : eog_norms) apply_zscore_inplace(norm, *p);
    Matrix<double> eog8(norm.rows, kEogFeatureCount);
    for (int i = 0; i < norm.rows; ++i)
      for (int c = 0; c < 4; ++c) {
        eog8(i, c) = norm(i, c);
        eog8(i, 4 + c) = i == 0 ? 0.0 : norm(i, c) - norm(i - 1, c);
      }
    Matrix<double> resampled =
        resample_linear(chunk.eog_rel_t, eog8, chunk.gaze_rel_t);

    for (std::size_t i = 0; i < chunk.gaze_rel_t.size(); ++i) {
      rel_t.push_back(chunk.rel_offset + chunk.gaze_rel_t[i]);
      std::copy(resampled.row(static_cast<int>(i)),
                resampled.row(static_cast<int>(i)) + kEogFeatureCount,
                eog_out.row(row));
      const int src = chunk.gaze_begin + static_cast<int>(i);
      for (int j = 0; j < kGazeFeatureCount; ++j) {
        double v = bundle.gaze.values(src, j);
        for (const NormParams* p : gaze_norms) {
          const auto ju = static_cast<std::size_t>(j);
          v = (v - p->mean[ju]) / p->stddev[ju];
        }
        gaze_out(row, j) = v;
        gaze_valid(row, j) = bundle.gaze.valid(src, j);
      }
      ++row;
    }
  }
  impute_ffill_bfill_zero(gaze_out, gaze_valid);

  auto make = [&](Modality m, Matrix<double>&& values) {
    FeatureSegment out;
    out.subject_id = bundle.subject_id;
    out.label = seg.condition;
    out.trial_slot = seg.trial_slot;
    out.modality = m;
    out.rel_t = rel_t;
    out.values = std::move(values);
    return out;
  };

  switch (modality) {
    case Modality::eog: return make(Modality::eog, std::move(eog_out));
    case Modality::gaze: return make(Modality::gaze, std::move(gaze_out));
    case Modality::multimodal:
      return fuse(make(Modality::eog, std::move(eog_out)),
                  make(Modality::gaze, std::move(gaze_out)));
  }
  throw ParamError("build_segment: bad modality");
}

}  // namespace

std::pair<NormParams, NormParams> fit_fold_norms(
    const SubjectBundle& bundle, const std::vector<int>& train_idx) {
  const std::vector<const SubjectBundle*> bundles = {&bundle};
  const std::vector<std::vector<int>> idx = {train_idx};
  const std::vector<const NormParams*> no_pre = {nullptr};
  return {fit_eog_rows(bundles, idx, no_pre),
          fit_gaze_rows(bundles, idx, no_pre)};
}

FoldData assemble_fold(const SubjectBundle& bundle,
                       const std::vector<int>& train_idx,
                       const std::vector<int>& test_idx, Modality modality,
                       const PipelineOptions&) {
  FoldData out;
  auto [eog_norm, gaze_norm] = fit_fold_norms(bundle, train_idx);
  out.eog_norm = std::move(eog_norm);
  out.gaze_norm = std::move(gaze_norm);

  const std::vector<const NormParams*> en = {&out.eog_norm};
  const std::vector<const NormParams*> gn = {&out.gaze_norm};
  out.train_segments.reserve(train_idx.size());
  for (int idx : train_idx)
    out.train_segments.push_back(build_segment(bundle, idx, en, gn, modality));
  out.test_segments.reserve(test_idx.size());
  for (int idx : test_idx)
    out.test_segments.push_back(build_segment(bundle, idx, en, gn, modality));
  return out;
}

LosoData assemble_loso(const std::vector<SubjectBundle>& bundles,
                       std::size_t held_out, Modality modality,
                       const PipelineOptions&) {
  if (bundles.size() < 3)
    throw ParamError("assemble_loso: need at least 3 subjects");
  if (held_out >= bundles.size())
    throw ParamError("assemble_loso: held_out out of range");

  // Stage 1: each subject on its own rows (the held-out subject included).
  std::vector<NormParams> eog1(bundles.size()), gaze1(bundles.size());
  for (std::size_t s = 0; s < bundles.size(); ++s) {
    auto [e, g] = fit_fold_norms(bundles[s], all_segment_indices(bundles[s]));
    eog1[s] = std::move(e);
    gaze1[s] = std::move(g);
  }

  // Stage 2: fit on the training subjects' stage-1-normalized rows.
  std::vector<const SubjectBundle*> train_bundles;
  std::vector<std::vector<int>> train_idx;
  std::vector<const NormParams*> train_eog_pre, train_gaze_pre;
  for (std::size_t s = 0; s < bundles.size(); ++s) {
    if (s == held_out) continue;
    train_bundles.push_back(&bundles[s]);
    train_idx.push_back(all_segment_indices(bundles[s]));
    train_eog_pre.push_back(&eog1[s]);
    train_gaze_pre.push_back(&gaze1[s]);
  }

  LosoData out;
  out.eog_norm = fit_eog_rows(train_bundles, train_idx, train_eog_pre);
  out.gaze_norm = fit_gaze_rows(train_bundles, train_idx, train_gaze_pre);

  for (std::size_t s = 0; s < bundles.size(); ++s) {
    const std::vector<const NormParams*> en = {&eog1[s], &out.eog_norm};
    const std::vector<const NormParams*> gn = {&gaze1[s], &out.gaze_norm};
    auto& dst = s == held_out ? out.test_segments : out.train_segments;
    for (std::size_t i = 0; i < bundles[s].segments.size(); ++i)
      dst.push_back(
          build_segment(bundles[s], static_cast<int>(i), en, gn, modality));
  }
  return out;
}

}  // namespace refrakt
