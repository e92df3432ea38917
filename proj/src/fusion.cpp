#include "refrakt/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "refrakt/num_io.hpp"
#include "refrakt/sigproc.hpp"

namespace refrakt {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::eog: return "eog";
    case Modality::gaze: return "gaze";
    case Modality::multimodal: return "multimodal";
  }
  return "";
}

std::optional<Modality> modality_from_string(std::string_view name) {
  if (name == "eog") return Modality::eog;
  if (name == "gaze") return Modality::gaze;
  if (name == "multimodal") return Modality::multimodal;
  return std::nullopt;
}

int modality_feature_count(Modality m) {
  switch (m) {
    case Modality::eog: return kEogFeatureCount;
    case Modality::gaze: return kGazeFeatureCount;
    case Modality::multimodal: return kEogFeatureCount + kGazeFeatureCount;
  }
  return 0;
}

const std::vector<std::string>& modality_feature_names(Modality m) {
  switch (m) {
    case Modality::eog: return eog_feature_names();
    case Modality::gaze: return gaze_feature_names();
    case Modality::multimodal: {
      static const std::vector<std::string> names = [] {
        std::vector<std::string> out = eog_feature_names();
        const auto& g = gaze_feature_names();
        out.insert(out.end(), g.begin(), g.end());
        return out;
      }();
      return names;
    }
  }
  return eog_feature_names();
}

std::vector<double> relative_time(const std::vector<double>& timestamps,
                                  double task_start) {
  std::vector<double> out(timestamps.size());
  for (std::size_t i = 0; i < timestamps.size(); ++i)
    out[i] = timestamps[i] - task_start;
  return out;
}

Matrix<double> resample_linear(const std::vector<double>& src_rel_t,
                               const Matrix<double>& src,
                               const std::vector<double>& target_rel_t) {
  if (src_rel_t.size() != static_cast<std::size_t>(src.rows))
    throw ParamError("resample_linear: timestamp count != row count");
  if (src.rows < 2) throw ParamError("resample_linear: need >= 2 source rows");

  Matrix<double> out(static_cast<int>(target_rel_t.size()), src.cols);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < target_rel_t.size(); ++i) {
    const double t = target_rel_t[i];
    if (t < src_rel_t.front() || t > src_rel_t.back())
      throw FormatError("extrapolation required");
    while (seg + 2 < src_rel_t.size() && src_rel_t[seg + 1] < t) ++seg;
    const double t0 = src_rel_t[seg], t1 = src_rel_t[seg + 1];
    double* dst = out.row(static_cast<int>(i));
    const double* r0 = src.row(static_cast<int>(seg));
    const double* r1 = src.row(static_cast<int>(seg) + 1);
    if (t == t0) {
      std::copy(r0, r0 + src.cols, dst);
    } else if (t == t1) {
      std::copy(r1, r1 + src.cols, dst);
    } else {
      const double w = (t - t0) / (t1 - t0);
      for (int j = 0; j < src.cols; ++j) dst[j] = r0[j] + w * (r1[j] - r0[j]);
    }
  }
  return out;
}

FeatureSegment fuse(const FeatureSegment& eog_seg,
                    const FeatureSegment& gaze_seg) {
  if (eog_seg.modality != Modality::eog || gaze_seg.modality != Modality::gaze)
    throw ParamError("fuse: expects an eog segment and a gaze segment");
  if (!(eog_seg.label == gaze_seg.label))
    throw FormatError("fuse: label mismatch");
  if (eog_seg.trial_slot != gaze_seg.trial_slot)
    throw FormatError("fuse: trial_slot mismatch");
  if (eog_seg.subject_id != gaze_seg.subject_id)
    throw FormatError("fuse: subject mismatch");
  if (eog_seg.rel_t.size() != gaze_seg.rel_t.size())
    throw FormatError("fuse: timestamp mismatch");
  for (std::size_t i = 0; i < eog_seg.rel_t.size(); ++i)
    if (std::abs(eog_seg.rel_t[i] - gaze_seg.rel_t[i]) > 1e-9)
      throw FormatError("fuse: timestamp mismatch");

  FeatureSegment out;
  out.subject_id = eog_seg.subject_id;
  out.label = eog_seg.label;
  out.trial_slot = eog_seg.trial_slot;
  out.modality = Modality::multimodal;
  out.rel_t = eog_seg.rel_t;
  out.values = Matrix<double>(eog_seg.values.rows,
                              eog_seg.values.cols + gaze_seg.values.cols);
  for (int i = 0; i < out.values.rows; ++i) {
    double* dst = out.values.row(i);
    const double* a = eog_seg.values.row(i);
    const double* b = gaze_seg.values.row(i);
    std::copy(a, a + eog_seg.values.cols, dst);
    std::copy(b, b + gaze_seg.values.cols, dst + eog_seg.values.cols);
  }
  return out;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void save_feature_segment(const FeatureSegment& seg,
                          const std::filesystem::path& csv_path) {
  if (seg.values.cols != modality_feature_count(seg.modality))
    throw ParamError("save_feature_segment: column count does not match modality");
  std::ofstream out(csv_path, std::ios::binary);
  if (!out)
    throw FormatError("cannot open " + csv_path.string() + " for writing");
  std::string buf;
  buf.reserve(1 << 20);
  buf += "rel_t";
  for (const auto& name : modality_feature_names(seg.modality)) {
    buf += ',';
    buf += name;
  }
  buf += '\n';
  for (int i = 0; i < seg.values.rows; ++i) {
    append_double(buf, seg.rel_t[static_cast<std::size_t>(i)]);
    const double* row = seg.values.row(i);
    for (int j = 0; j < seg.values.cols; ++j) {
      buf += ',';
      append_double(buf, row[j]);
    }
    buf += '\n';
    if (buf.size() > (1 << 20) - 4096) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));

  nlohmann::json meta = {{"subject", seg.subject_id},
                         {"diopter", seg.label.diopter()},
                         {"trial_slot", seg.trial_slot},
                         {"modality", std::string(to_string(seg.modality))}};
  std::ofstream side(sidecar_path(csv_path), std::ios::binary);
  if (!side)
    throw FormatError("cannot open " + sidecar_path(csv_path).string() +
                      " for writing");
  side << meta.dump(2) << '\n';
}

FeatureSegment load_feature_segment(const std::filesystem::path& csv_path) {
  std::ifstream side(sidecar_path(csv_path));
  if (!side)
    throw FormatError("cannot open " + sidecar_path(csv_path).string());
  nlohmann::json meta;
  try {
    side >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad sidecar " + sidecar_path(csv_path).string() + ": " +
                      e.what());
  }

  FeatureSegment seg;
  seg.subject_id = meta.at("subject").get<std::string>();
  seg.label = DiopterClass::from_diopter(meta.at("diopter").get<double>());
  seg.trial_slot = meta.at("trial_slot").get<int>();
  auto mod = modality_from_string(meta.at("modality").get<std::string>());
  if (!mod)
    throw FormatError("unknown modality in " + sidecar_path(csv_path).string());
  seg.modality = *mod;

  std::ifstream in(csv_path);
  if (!in) throw FormatError("cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty " + csv_path.string());
  {
    std::string want = "rel_t";
    for (const auto& name : modality_feature_names(seg.modality)) {
      want += ',';
      want += name;
    }
    if (line != want)
      throw FormatError("bad feature header in " + csv_path.string());
  }
  const int cols = modality_feature_count(seg.modality);
  std::vector<double> flat;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string ctx = "at line " + std::to_string(lineno);
    std::size_t pos = 0;
    int field = 0;
    while (true) {
      std::size_t c = line.find(',', pos);
      std::string_view f = c == std::string::npos
                               ? std::string_view(line).substr(pos)
                               : std::string_view(line).substr(pos, c - pos);
      const double v = parse_double(f, ctx);
      if (field == 0)
        seg.rel_t.push_back(v);
      else
        flat.push_back(v);
      ++field;
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    if (field != cols + 1)
      throw FormatError("wrong column count at line " + std::to_string(lineno) +
                        " of " + csv_path.string());
  }
  seg.values = Matrix<double>(static_cast<int>(seg.rel_t.size()), cols);
  std::copy(flat.begin(), flat.end(), seg.values.data.begin());
  return seg;
}

}  // namespace refrakt
