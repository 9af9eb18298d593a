#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "semadv/evalcli/experiment.hpp"

namespace semadv::evalcli {

/// Adversarial images crafted on one model.
struct AttackBatch {
  std::string source;  // tag of the attacked model
  std::vector<AttackResult> results;
};

struct NamedClassifier {
  std::string tag;
  const models::Classifier* model = nullptr;
};

/// Rows are attacked models, columns evaluation models; cells hold the
/// percentage of a row's images classified as their target.
struct TransferMatrix {
  std::vector<std::string> sources;
  std::vector<std::string> models;
  std::vector<std::vector<double>> cells;

  double at(const std::string& src, const std::string& dst) const {
    const auto r = std::find(sources.begin(), sources.end(), src);
    const auto c = std::find(models.begin(), models.end(), dst);
    if (r == sources.end() || c == models.end()) throw Error("transfer matrix: no cell " + src + " -> " + dst);
    return cells[std::size_t(r - sources.begin())][std::size_t(c - models.begin())];
  }

  std::string csv() const {
    std::ostringstream os;
    os << "source";
    for (const auto& m : models) os << "," << m;
    os << "\n";
    os.setf(std::ios::fixed);
    os.precision(2);
    for (std::size_t r = 0; r < sources.size(); ++r) {
      os << sources[r];
      for (double v : cells[r]) os << "," << v;
      os << "\n";
    }
    return os.str();
  }

  json to_json() const { return {{"sources", sources}, {"models", models}, {"cells", cells}}; }
};

inline double whitebox_success(const AttackBatch& b) {
  std::size_t n = 0;
  for (const auto& r : b.results) n += r.success ? 1 : 0;
  return 100.0 * double(n) / double(b.results.size());
}

/// Classifies every stored adversarial image with every model. A cell whose
/// model is the batch's own source must reproduce the batch's whitebox
/// success; a mismatch means the records are inconsistent and throws.
inline TransferMatrix transfer_matrix(const std::vector<AttackBatch>& batches,
                                      const std::vector<NamedClassifier>& models) {
  TransferMatrix m;
  for (const auto& c : models) {
    if (c.model == nullptr) throw Error("transfer matrix: model '" + c.tag + "' not supplied");
    m.models.push_back(c.tag);
  }
  for (const auto& b : batches) {
    if (b.results.empty()) throw Error("transfer matrix: batch attacked on '" + b.source + "' is empty");
    m.sources.push_back(b.source);
    std::vector<double> row;
    for (const auto& c : models) {
      std::size_t hits = 0;
      for (const auto& r : b.results) hits += c.model->classify(r.adversarial).label == r.target ? 1 : 0;
      const double pct = 100.0 * double(hits) / double(b.results.size());
      if (c.tag == b.source && pct != whitebox_success(b))
        throw Error("transfer matrix: " + b.source + " reclassifies its own batch at " + format_number(pct) +
                    "% but the records say " + format_number(whitebox_success(b)) + "%");
      row.push_back(pct);
    }
    m.cells.push_back(std::move(row));
  }
  return m;
}

}  // namespace semadv::evalcli
