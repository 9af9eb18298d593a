#pragma once

// Tables and perturbation images from one or more run directories.

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "semadv/evalcli/experiment.hpp"

namespace semadv::evalcli {

struct SuccessRow {
  std::string attack, model;
  std::size_t images = 0;
  double success = 0.0;
};

struct TransferRow {
  std::string attack, source, model;
  std::size_t images = 0;
  double success = 0.0;
};

struct DefenseRow {
  std::string attack, model, defense;
  std::size_t images = 0;
  double misclassification = 0.0, targeted_retention = 0.0;
};

struct NormRow {
  std::string attack, model;
  std::size_t images = 0;
  NormReport mean;            // recomputed from the stored PNGs
  double max_record_gap = 0;  // largest |stored - recomputed| over all norm values
};

struct ReportTables {
  std::vector<SuccessRow> whitebox;
  std::vector<TransferRow> transfer;
  std::vector<DefenseRow> defense;
  std::vector<NormRow> norms;
  std::vector<std::filesystem::path> perturbations;
  std::size_t skipped = 0;  // records that could not be read
};

/// Zero change maps to mid-gray.
inline RgbImage perturbation_image(const RgbImage& orig, const RgbImage& adv) {
  if (orig.height() != adv.height() || orig.width() != adv.width())
    throw Error("perturbation_image: dimension mismatch");
  Tensor t = adv.tensor();
  const auto& o = orig.tensor();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::clamp(0.5 + (t[i] - o[i]), 0.0, 1.0);
  return RgbImage(std::move(t));
}

inline std::vector<std::filesystem::path> run_directories(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> runs;
  if (!std::filesystem::exists(root)) throw Error("report: " + root.string() + " does not exist");
  if (std::filesystem::exists(root / "config.json")) return {root};
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory() && std::filesystem::exists(e.path() / "config.json")) runs.push_back(e.path());
  std::sort(runs.begin(), runs.end());
  return runs;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

}  // namespace detail

inline std::string whitebox_csv(const std::vector<SuccessRow>& rows) {
  std::string s = "attack,model,images,success\n";
  for (const auto& r : rows)
    s += r.attack + "," + r.model + "," + std::to_string(r.images) + "," + detail::fixed(r.success, 2) + "\n";
  return s;
}

inline std::string transfer_csv(const std::vector<TransferRow>& rows) {
  std::string s = "attack,source,model,images,success\n";
  for (const auto& r : rows)
    s += r.attack + "," + r.source + "," + r.model + "," + std::to_string(r.images) + "," +
         detail::fixed(r.success, 2) + "\n";
  return s;
}

inline std::string defense_csv(const std::vector<DefenseRow>& rows) {
  std::string s = "attack,model,defense,images,misclassification,targeted_retention\n";
  for (const auto& r : rows)
    s += r.attack + "," + r.model + "," + r.defense + "," + std::to_string(r.images) + "," +
         detail::fixed(r.misclassification, 2) + "," + detail::fixed(r.targeted_retention, 2) + "\n";
  return s;
}

inline std::string norms_csv(const std::vector<NormRow>& rows) {
  std::string s = "attack,model,images,l0,l2,linf\n";
  for (const auto& r : rows)
    s += r.attack + "," + r.model + "," + std::to_string(r.images) + "," + detail::fixed(r.mean.l0, 6) + "," +
         detail::fixed(r.mean.l2, 6) + "," + detail::fixed(r.mean.linf, 6) + "\n";
  return s;
}

inline json tables_json(const ReportTables& t) {
  json j;
  j["whitebox"] = json::array();
  for (const auto& r : t.whitebox)
    j["whitebox"].push_back({{"attack", r.attack}, {"model", r.model}, {"images", r.images}, {"success", r.success}});
  j["transfer"] = json::array();
  for (const auto& r : t.transfer)
    j["transfer"].push_back({{"attack", r.attack}, {"source", r.source}, {"model", r.model}, {"images", r.images},
                             {"success", r.success}});
  j["defense"] = json::array();
  for (const auto& r : t.defense)
    j["defense"].push_back({{"attack", r.attack}, {"model", r.model}, {"defense", r.defense}, {"images", r.images},
                            {"misclassification", r.misclassification},
                            {"targeted_retention", r.targeted_retention}});
  j["norms"] = json::array();
  for (const auto& r : t.norms)
    j["norms"].push_back({{"attack", r.attack}, {"model", r.model}, {"images", r.images},
                          {"l0", r.mean.l0}, {"l2", r.mean.l2}, {"linf", r.mean.linf},
                          {"max_record_gap", r.max_record_gap}});
  j["skipped_records"] = t.skipped;
  return j;
}

/// Builds the tables from every run under `results`. When `out` is non-empty
/// the CSV/JSON tables and perturbation PNGs are written there.
inline ReportTables make_report(const std::filesystem::path& results, const std::filesystem::path& out = {},
                                const Log& log = {}) {
  ReportTables t;
  const Log count_skips = [&](const std::string& msg) {
    ++t.skipped;
    if (log) log(msg);
  };
  for (const auto& dir : run_directories(results)) {
    ExperimentReport run;
    try {
      run = load_run(dir, count_skips);
    } catch (const std::exception& e) {
      count_skips("warning: skipping run " + dir.string() + ": " + e.what());
      continue;
    }
    t.whitebox.push_back({run.attack, run.victim, run.attempted, run.success_rate});
    const std::size_t ok = run.attempted - run.failed;
    for (const auto& [model, pct] : run.transfer_success) t.transfer.push_back({run.attack, run.victim, model, ok, pct});
    for (const auto& d : run.defended)
      t.defense.push_back({run.attack, run.victim, d.defense, d.samples, d.misclassification, d.targeted_retention});
    NormRow nr{run.attack, run.victim, 0, {}, 0.0};
    for (const auto& rec : run.records) {
      if (rec.failed()) continue;
      const auto& res = rec.result;
      const auto n = lp_metrics(res.original, res.adversarial);
      nr.mean.l0 += n.l0;
      nr.mean.l2 += n.l2;
      nr.mean.linf += n.linf;
      nr.max_record_gap = std::max({nr.max_record_gap, std::abs(n.l0 - res.norms.l0), std::abs(n.l2 - res.norms.l2),
                                    std::abs(n.linf - res.norms.linf)});
      ++nr.images;
      if (!out.empty()) {
        const auto p = out / "perturbations" / run.name / (padded(rec.index) + ".png");
        std::filesystem::create_directories(p.parent_path());
        io::save_png(p, perturbation_image(res.original, res.adversarial));
        t.perturbations.push_back(p);
      }
    }
    if (nr.images) {
      nr.mean.l0 /= double(nr.images);
      nr.mean.l2 /= double(nr.images);
      nr.mean.linf /= double(nr.images);
    }
    t.norms.push_back(nr);
  }
  auto key2 = [](const auto& a, const auto& b) { return std::tie(a.attack, a.model) < std::tie(b.attack, b.model); };
  std::stable_sort(t.whitebox.begin(), t.whitebox.end(), key2);
  std::stable_sort(t.norms.begin(), t.norms.end(), key2);
  std::stable_sort(t.transfer.begin(), t.transfer.end(), [](const auto& a, const auto& b) {
    return std::tie(a.attack, a.source, a.model) < std::tie(b.attack, b.source, b.model);
  });
  std::stable_sort(t.defense.begin(), t.defense.end(), [](const auto& a, const auto& b) {
    return std::tie(a.attack, a.model, a.defense) < std::tie(b.attack, b.model, b.defense);
  });
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream(out / "table1.csv") << whitebox_csv(t.whitebox);
    std::ofstream(out / "table1_transfer.csv") << transfer_csv(t.transfer);
    std::ofstream(out / "table3.csv") << defense_csv(t.defense);
    std::ofstream(out / "table4.csv") << norms_csv(t.norms);
    detail::write_json(out / "report.json", tables_json(t));
  }
  return t;
}

}  // namespace semadv::evalcli
