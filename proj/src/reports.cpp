#include "refrakt/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "refrakt/num_io.hpp"
#include "refrakt/stats.hpp"

namespace refrakt {

namespace {

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << body;
  if (!out) throw FormatError("write failed for " + path.string());
}

std::string diopter_label(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f",
                DiopterClass::from_index(index).diopter());
  return buf;
}

}  // namespace

void save_fold_results(const std::vector<FoldResult>& results,
                       const std::filesystem::path& path) {
  std::string body;
  for (const auto& r : results) {
    body += "{\"subject\":\"";
    body += r.subject_id;
    body += "\",\"fold\":";
    body += std::to_string(r.fold_id);
    body += ",\"modality\":\"";
    body += to_string(r.modality);
    body += "\",\"accuracy\":";
    append_double(body, r.accuracy);
    body += ",\"macro_f1\":";
    append_double(body, r.macro_f1);
    body += ",\"n_test_windows\":";
    body += std::to_string(r.n_test_windows);
    body += ",\"confusion\":[";
    for (int i = 0; i < r.confusion.rows; ++i) {
      if (i > 0) body += ',';
      body += '[';
      for (int j = 0; j < r.confusion.cols; ++j) {
        if (j > 0) body += ',';
        body += std::to_string(r.confusion(i, j));
      }
      body += ']';
    }
    body += "]}\n";
  }
  write_file(path, body);
}

std::vector<FoldResult> load_fold_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<FoldResult> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad JSON at line " + std::to_string(line_no) + ": " +
                        e.what());
    }
    FoldResult r;
    try {
      r.subject_id = j.at("subject").get<std::string>();
      r.fold_id = j.at("fold").get<int>();
      const auto m = modality_from_string(j.at("modality").get<std::string>());
      if (!m)
        throw FormatError("unknown modality at line " +
                          std::to_string(line_no));
      r.modality = *m;
      r.accuracy = j.at("accuracy").get<double>();
      r.macro_f1 = j.at("macro_f1").get<double>();
      r.n_test_windows = j.at("n_test_windows").get<int>();
      const auto& c = j.at("confusion");
      const int rows = static_cast<int>(c.size());
      if (rows == 0)
        throw FormatError("empty confusion at line " +
                          std::to_string(line_no));
      r.confusion = Matrix<std::int64_t>(rows, static_cast<int>(c[0].size()));
      for (int i = 0; i < rows; ++i)
        for (int k = 0; k < r.confusion.cols; ++k)
          r.confusion(i, k) =
              c.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k))
                  .get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad fold result at line " + std::to_string(line_no) +
                        ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void save_summary_csv(const std::vector<FoldResult>& results,
                      const std::filesystem::path& path) {
  std::string body = "subject,fold,accuracy,macro_f1\n";
  for (const auto& r : results) {
    body += r.subject_id;
    body += ',';
    body += std::to_string(r.fold_id);
    body += ',';
    append_double(body, r.accuracy);
    body += ',';
    append_double(body, r.macro_f1);
    body += '\n';
  }
  write_file(path, body);
}

std::vector<SubjectAccuracy> per_subject_accuracy(
    const std::vector<FoldResult>& results) {
  std::vector<SubjectAccuracy> rows;
  std::vector<std::vector<double>> values;
  for (const auto& r : results) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& s) {
      return s.subject_id == r.subject_id;
    });
    if (it == rows.end()) {
      rows.push_back({r.subject_id, 0, 0.0, 0.0, 0.0});
      values.emplace_back();
      it = rows.end() - 1;
    }
    values[static_cast<std::size_t>(it - rows.begin())].push_back(r.accuracy);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = values[i];
    const auto n = static_cast<double>(v.size());
    rows[i].n_folds = static_cast<int>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    rows[i].mean_accuracy = mean;
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      rows[i].sd = std::sqrt(ss / (n - 1.0));
      rows[i].sem = rows[i].sd / std::sqrt(n);
    }
  }
  return rows;
}

void save_subject_accuracy_csv(const std::vector<SubjectAccuracy>& rows,
                               const std::filesystem::path& path) {
  std::string body = "subject,n_folds,mean_accuracy,sem,sd\n";
  for (const auto& r : rows) {
    body += r.subject_id;
    body += ',';
    body += std::to_string(r.n_folds);
    body += ',';
    append_double(body, r.mean_accuracy);
    body += ',';
    append_double(body, r.sem);
    body += ',';
    append_double(body, r.sd);
    body += '\n';
  }
  write_file(path, body);
}

Matrix<std::int64_t> pooled_confusion(const std::vector<FoldResult>& results) {
  if (results.empty()) throw ParamError("pooled_confusion: no results");
  Matrix<std::int64_t> sum(results[0].confusion.rows,
                           results[0].confusion.cols);
  for (const auto& r : results) {
    if (!r.confusion.same_shape(sum))
      throw ParamError("pooled_confusion: shape mismatch");
    for (int i = 0; i < sum.rows; ++i)
      for (int j = 0; j < sum.cols; ++j) sum(i, j) += r.confusion(i, j);
  }
  return sum;
}

void save_confusion_csv(const Matrix<std::int64_t>& confusion,
                        const std::filesystem::path& path) {
  std::string body = "true\\pred";
  for (int j = 0; j < confusion.cols; ++j) {
    body += ',';
    body += diopter_label(j);
  }
  body += '\n';
  for (int i = 0; i < confusion.rows; ++i) {
    body += diopter_label(i);
    for (int j = 0; j < confusion.cols; ++j) {
      body += ',';
      body += std::to_string(confusion(i, j));
    }
    body += '\n';
  }
  write_file(path, body);
}

std::vector<StatLine> stats_report(const std::vector<ModalityResults>& results,
                                   double chance_percent, int family) {
  if (results.empty()) throw ParamError("stats_report: no results");

  // Per-subject mean accuracy, subjects aligned across modalities.
  std::vector<std::string> subjects;
  std::vector<std::vector<double>> means(results.size());
  for (std::size_t m = 0; m < results.size(); ++m) {
    const auto rows = per_subject_accuracy(results[m].folds);
    if (m == 0) {
      for (const auto& r : rows) subjects.push_back(r.subject_id);
    } else {
      if (rows.size() != subjects.size())
        throw ParamError("stats_report: subject sets differ across modalities");
      for (std::size_t s = 0; s < rows.size(); ++s)
        if (rows[s].subject_id != subjects[s])
          throw ParamError(
              "stats_report: subject sets differ across modalities");
    }
    for (const auto& r : rows) means[m].push_back(r.mean_accuracy);
  }
  const auto n_subjects = subjects.size();

  std::vector<StatLine> lines;

  if (n_subjects >= 3) {
    for (std::size_t m = 0; m < results.size(); ++m) {
      try {
        const auto r = stats::shapiro_wilk(means[m]);
        lines.push_back({"shapiro_wilk", std::string(to_string(results[m].modality)),
                         r.statistic, r.p_value, r.p_value});
      } catch (const RefraktError&) {
        // degenerate sample: omitted
      }
    }
  }

  if (n_subjects >= 2 && results.size() >= 2) {
    Matrix<double> scores(static_cast<int>(n_subjects),
                          static_cast<int>(results.size()));
    for (std::size_t s = 0; s < n_subjects; ++s)
      for (std::size_t m = 0; m < results.size(); ++m)
        scores(static_cast<int>(s), static_cast<int>(m)) = means[m][s];
    std::string comparison;
    for (std::size_t m = 0; m < results.size(); ++m) {
      if (m > 0) comparison += " vs ";
      comparison += to_string(results[m].modality);
    }
    const auto r = stats::friedman(scores);
    lines.push_back({"friedman", comparison, r.statistic, r.p_value, r.p_value});
  }

  struct Pending {
    std::string comparison;
    stats::TestResult result;
  };
  std::vector<Pending> wilcoxon;
  for (std::size_t a = 0; a < results.size(); ++a)
    for (std::size_t b = a + 1; b < results.size(); ++b) {
      try {
        auto r = stats::wilcoxon_signed_rank(means[a], means[b]);
        wilcoxon.push_back({std::string(to_string(results[a].modality)) +
                                " vs " + std::string(to_string(results[b].modality)),
                            r});
      } catch (const RefraktError&) {
      }
    }
  for (std::size_t m = 0; m < results.size(); ++m) {
    try {
      auto r = stats::wilcoxon_signed_rank(means[m], chance_percent);
      wilcoxon.push_back({std::string(to_string(results[m].modality)) +
                              " vs chance",
                          r});
    } catch (const RefraktError&) {
    }
  }

  std::vector<double> ps;
  for (const auto& w : wilcoxon) ps.push_back(w.result.p_value);
  const int m_family = family < 0 ? static_cast<int>(ps.size()) : family;
  const auto adjusted = ps.empty() ? ps : stats::bonferroni(ps, m_family);
  for (std::size_t i = 0; i < wilcoxon.size(); ++i)
    lines.push_back({"wilcoxon", wilcoxon[i].comparison,
                     wilcoxon[i].result.statistic, wilcoxon[i].result.p_value,
                     adjusted[i]});
  return lines;
}

void save_stat_lines_json(const std::vector<StatLine>& lines,
                          const std::filesystem::path& path) {
  std::string body = "[\n";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    body += "  {\"test\":\"";
    body += lines[i].test;
    body += "\",\"comparison\":\"";
    body += lines[i].comparison;
    body += "\",\"statistic\":";
    append_double(body, lines[i].statistic);
    body += ",\"p\":";
    append_double(body, lines[i].p);
    body += ",\"p_adjusted\":";
    append_double(body, lines[i].p_adjusted);
    body += i + 1 < lines.size() ? "},\n" : "}\n";
  }
  body += "]\n";
  write_file(path, body);
}

}  // namespace refrakt
