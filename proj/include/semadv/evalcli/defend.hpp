#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semadv/evalcli/experiment.hpp"

namespace semadv::evalcli {

/// Re-evaluates the stored adversarial images of a run under each defense,
/// using the run's victim (or a robust model) and writes defense.json and
/// defense.csv into the run directory.
inline std::vector<defenses::DefenseReport> defend_run(const std::filesystem::path& run_dir,
                                                       const std::vector<std::string>& specs,
                                                       const models::ModelRegistry& reg, const Log& log = {}) {
  if (specs.empty()) throw Error("defend: no defenses given");
  std::vector<defenses::DefenseSpec> parsed;
  for (const auto& s : specs) {
    parsed.push_back(defenses::DefenseSpec::parse(s));
    parsed.back().validate();
    if (parsed.back().kind == defenses::DefenseKind::RobustModel && !reg.has(parsed.back().model_tag))
      throw Error("defend: robust model '" + parsed.back().model_tag + "' not found in registry");
  }
  const auto run = load_run(run_dir, log);
  const auto results = run.results();
  std::vector<defenses::DefenseReport> reports;
  json j = json::array();
  if (results.empty()) {
    if (log) log("warning: " + run_dir.string() + " holds no adversarial images");
  } else {
    const auto clf = reg.classifier(run.victim);
    for (const auto& s : parsed) {
      std::optional<models::Classifier> robust;
      if (s.kind == defenses::DefenseKind::RobustModel) robust.emplace(reg.classifier(s.model_tag));
      reports.push_back(defenses::evaluate_defended(results, s, clf, run.attack, robust ? &*robust : nullptr));
      const auto& r = reports.back();
      j.push_back({{"attack", r.attack}, {"model", run.victim}, {"defense", r.defense}, {"samples", r.samples},
                   {"misclassification", r.misclassification}, {"targeted_retention", r.targeted_retention}});
    }
  }
  detail::write_json(run_dir / "defense.json", j);
  std::ofstream(run_dir / "defense.csv") << defenses::defense_table_csv(reports);
  return reports;
}

}  // namespace semadv::evalcli
