#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "semadv/attack_result.hpp"
#include "semadv/defenses/transforms.hpp"
#include "semadv/models/classifier.hpp"

namespace semadv::defenses {

enum class DefenseKind { Identity, Jpeg, BitDepth, Median, Nlm, RobustModel };

struct DefenseSpec {
  DefenseKind kind = DefenseKind::Identity;
  int quality = 75;
  int bits = 4;
  std::size_t window = 2;  // square median window
  int search = 11, patch = 3;
  double strength = 4.0;
  std::string model_tag;

  static DefenseSpec identity() { return {}; }
  static DefenseSpec jpeg(int quality = 75) { return {.kind = DefenseKind::Jpeg, .quality = quality}; }
  static DefenseSpec bit_depth(int bits) { return {.kind = DefenseKind::BitDepth, .bits = bits}; }
  static DefenseSpec median(std::size_t window) { return {.kind = DefenseKind::Median, .window = window}; }
  static DefenseSpec nlm(int search = 11, int patch = 3, double strength = 4.0) {
    return {.kind = DefenseKind::Nlm, .search = search, .patch = patch, .strength = strength};
  }
  static DefenseSpec robust_model(std::string tag) { return {.kind = DefenseKind::RobustModel, .model_tag = std::move(tag)}; }

  void validate() const {
    switch (kind) {
      case DefenseKind::Jpeg:
        if (quality < 1 || quality > 100) throw Error("defense: jpeg quality must be in [1,100]");
        break;
      case DefenseKind::BitDepth:
        if (bits < 1 || bits > 8) throw Error("defense: bit depth must be in [1,8]");
        break;
      case DefenseKind::Median:
        if (window != 2 && window != 3) throw Error("defense: median window must be 2 or 3");
        break;
      case DefenseKind::Nlm:
        if (search < 1 || patch < 1 || search % 2 == 0 || patch % 2 == 0 || !(strength > 0.0))
          throw Error("defense: non-local means needs odd windows and positive strength");
        break;
      case DefenseKind::RobustModel:
        if (model_tag.empty()) throw Error("defense: robust model needs a model tag");
        break;
      case DefenseKind::Identity: break;
    }
  }

  /// Column label in the defense table, e.g. "JPEG75", "4-bit", "2x2", "11-3-4".
  std::string name() const {
    switch (kind) {
      case DefenseKind::Identity: return "none";
      case DefenseKind::Jpeg: return "JPEG" + std::to_string(quality);
      case DefenseKind::BitDepth: return std::to_string(bits) + "-bit";
      case DefenseKind::Median: return std::to_string(window) + "x" + std::to_string(window);
      case DefenseKind::Nlm: {
        std::ostringstream os;
        os << search << "-" << patch << "-" << strength;
        return os.str();
      }
      case DefenseKind::RobustModel: return "robust:" + model_tag;
    }
    return "unknown";
  }

  /// Parses "none", "jpeg:75", "bits:4", "median:3x3", "nlm:11-3-4" or "robust:<tag>".
  static DefenseSpec parse(const std::string& s) {
    const auto colon = s.find(':');
    const std::string kind = s.substr(0, colon), arg = colon == std::string::npos ? "" : s.substr(colon + 1);
    auto integer = [&](const std::string& t) {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(t, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != t.size()) throw Error("defense spec '" + s + "': bad number '" + t + "'");
      return v;
    };
    DefenseSpec d;
    if (kind == "none" || kind == "identity") {
      d = identity();
    } else if (kind == "jpeg") {
      d = jpeg(arg.empty() ? 75 : integer(arg));
    } else if (kind == "bits" || kind == "bit_depth") {
      d = bit_depth(integer(arg));
    } else if (kind == "median") {
      const auto x = arg.find('x');
      const int a = integer(arg.substr(0, x));
      if (x != std::string::npos && integer(arg.substr(x + 1)) != a)
        throw Error("defense spec '" + s + "': only square median windows are supported");
      d = median(std::size_t(std::max(a, 0)));
    } else if (kind == "nlm") {
      d = nlm();
      if (!arg.empty()) {
        const auto a = arg.find('-'), b = arg.find('-', a == std::string::npos ? a : a + 1);
        if (a == std::string::npos || b == std::string::npos)
          throw Error("defense spec '" + s + "': expected nlm:search-patch-strength");
        d.search = integer(arg.substr(0, a));
        d.patch = integer(arg.substr(a + 1, b - a - 1));
        d.strength = integer(arg.substr(b + 1));
      }
    } else if (kind == "robust" || kind == "robust_model") {
      d = robust_model(arg);
    } else {
      throw Error("unknown defense '" + s + "'");
    }
    d.validate();
    return d;
  }
};

/// Applies an input transform; identity and robust-model specs return the image.
inline RgbImage apply_defense(const DefenseSpec& spec, const RgbImage& img) {
  spec.validate();
  switch (spec.kind) {
    case DefenseKind::Jpeg: return jpeg_defense(img, spec.quality);
    case DefenseKind::BitDepth: return bit_depth_squeeze(img, spec.bits);
    case DefenseKind::Median: return median_filter(img, spec.window, spec.window);
    case DefenseKind::Nlm: return nlm_denoise(img, spec.search, spec.patch, spec.strength);
    case DefenseKind::Identity:
    case DefenseKind::RobustModel: return img;
  }
  return img;
}

struct DefenseReport {
  std::string attack;
  std::string defense;
  std::size_t samples = 0;
  double misclassification = 0.0;   // % labelled differently from the ground truth
  double targeted_retention = 0.0;  // % still labelled as the attack target
};

/// Reclassifies every adversarial image after the defense. For a robust-model
/// spec, `robust` must be the model to evaluate with; otherwise `clf` is used.
inline DefenseReport evaluate_defended(const std::vector<AttackResult>& results, const DefenseSpec& spec,
                                       const models::Classifier& clf, const std::string& attack = {},
                                       const models::Classifier* robust = nullptr) {
  spec.validate();
  if (results.empty()) throw Error("evaluate_defended: no attack results");
  if (spec.kind == DefenseKind::RobustModel && robust == nullptr)
    throw Error("evaluate_defended: robust model '" + spec.model_tag + "' not supplied");
  const auto& model = spec.kind == DefenseKind::RobustModel ? *robust : clf;
  DefenseReport r{attack, spec.name(), results.size(), 0.0, 0.0};
  std::size_t mis = 0, kept = 0;
  for (const auto& res : results) {
    if (res.adversarial.tensor().empty()) throw Error("evaluate_defended: result without an adversarial image");
    const auto label = model.classify(apply_defense(spec, res.adversarial)).label;
    mis += label != res.label ? 1 : 0;
    kept += label == res.target ? 1 : 0;
  }
  r.misclassification = 100.0 * double(mis) / double(results.size());
  r.targeted_retention = 100.0 * double(kept) / double(results.size());
  return r;
}

/// Table layout: one row per attack, one column per defense (in first-seen
/// order); cells hold the misclassification rate.
inline std::string defense_table_csv(const std::vector<DefenseReport>& reports, bool targeted = false) {
  std::vector<std::string> attacks, defenses;
  std::map<std::pair<std::string, std::string>, double> cell;
  for (const auto& r : reports) {
    if (std::find(attacks.begin(), attacks.end(), r.attack) == attacks.end()) attacks.push_back(r.attack);
    if (std::find(defenses.begin(), defenses.end(), r.defense) == defenses.end()) defenses.push_back(r.defense);
    cell[{r.attack, r.defense}] = targeted ? r.targeted_retention : r.misclassification;
  }
  std::ostringstream os;
  os << "attack";
  for (const auto& d : defenses) os << "," << d;
  os << "\n";
  os.setf(std::ios::fixed);
  os.precision(2);
  for (const auto& a : attacks) {
    os << a;
    for (const auto& d : defenses) {
      os << ",";
      if (auto it = cell.find({a, d}); it != cell.end()) os << it->second;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace semadv::defenses
