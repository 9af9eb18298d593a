#pragma once

// Batch attack runs: slice selection, target assignment, per-image attack,
// persistence of PNGs and JSON records, and the run-level aggregates.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "semadv/cadv/attack.hpp"
#include "semadv/defenses/bim.hpp"
#include "semadv/defenses/evaluate.hpp"
#include "semadv/evalcli/dataset.hpp"
#include "semadv/models/registry.hpp"
#include "semadv/tadv/attack.hpp"
#include "semadv/tadv/source.hpp"

namespace semadv::evalcli {

using models::json;
using Log = std::function<void(const std::string&)>;

enum class AttackKind { Cadv, Tadv, Bim };

inline AttackKind parse_attack_kind(const std::string& s) {
  if (s == "cadv") return AttackKind::Cadv;
  if (s == "tadv") return AttackKind::Tadv;
  if (s == "bim") return AttackKind::Bim;
  throw Error("unknown attack '" + s + "' (expected cadv, tadv or bim)");
}

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::Cadv: return "cadv";
    case AttackKind::Tadv: return "tadv";
    case AttackKind::Bim: return "bim";
  }
  return "?";
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

struct ExperimentConfig {
  std::string name;  // run directory name; derived from the attack when empty
  AttackKind attack = AttackKind::Cadv;
  std::string cadv_variant = "hints";  // hints | weights
  cadv::CadvConfig cadv;
  tadv::TadvConfig tadv;
  defenses::BimConfig bim;
  std::string victim;
  std::string colorizer;
  std::string extractor;
  std::vector<std::string> transfer;  // extra classifiers the adversarial images are evaluated on
  std::vector<std::string> defenses;  // defense specs, e.g. "jpeg:75", "bits:4"
  std::filesystem::path dataset;
  SliceSpec slice;
  std::uint64_t target_seed = 0;
  std::filesystem::path bank;  // texture bank; empty: dataset images outside the slice
  std::filesystem::path out;

  /// cAdv<k>, cAdv-weights, tAdv<alpha> or BIM.
  std::string attack_name() const {
    switch (attack) {
      case AttackKind::Cadv: return cadv_variant == "weights" ? "cAdv-weights" : "cAdv" + std::to_string(cadv.k);
      case AttackKind::Tadv: return "tAdv" + format_number(tadv.alpha);
      case AttackKind::Bim: return "BIM";
    }
    return "?";
  }

  std::string run_name() const { return name.empty() ? attack_name() + "_" + victim : name; }

  /// Checks everything that can be checked without attacking: model tags and
  /// kinds, defense specs, attack hyper-parameters and the dataset index.
  void validate(const models::ModelRegistry& reg) const {
    auto need = [&](const std::string& tag, const std::string& kind, const std::string& role) {
      if (tag.empty()) throw Error("config: " + role + " model tag is required");
      if (!reg.has(tag)) throw Error("config: " + role + " model '" + tag + "' not found in registry");
      if (reg.kind(tag) != kind) throw Error("config: " + role + " model '" + tag + "' is not a " + kind);
    };
    need(victim, "classifier", "victim");
    for (const auto& t : transfer) need(t, "classifier", "transfer");
    switch (attack) {
      case AttackKind::Cadv:
        if (cadv_variant != "hints" && cadv_variant != "weights")
          throw Error("config: cadv variant must be 'hints' or 'weights', got '" + cadv_variant + "'");
        need(colorizer, "colorizer", "colorizer");
        cadv.validate();
        break;
      case AttackKind::Tadv:
        need(extractor, "extractor", "extractor");
        tadv.validate();
        break;
      case AttackKind::Bim: bim.validate(); break;
    }
    for (const auto& d : defenses) {
      const auto spec = defenses::DefenseSpec::parse(d);
      if (spec.kind == defenses::DefenseKind::RobustModel) need(spec.model_tag, "classifier", "robust");
    }
    if (dataset.empty()) throw Error("config: dataset directory is required");
    if (!std::filesystem::exists(dataset / "index.txt"))
      throw Error("config: dataset index " + (dataset / "index.txt").string() + " not found");
    if (out.empty()) throw Error("config: output directory is required");
  }

  json to_json() const {
    json j;
    j["name"] = run_name();
    j["attack"] = to_string(attack);
    j["attack_name"] = attack_name();
    j["victim"] = victim;
    j["transfer"] = transfer;
    j["defenses"] = defenses;
    j["dataset"] = dataset.string();
    j["slice"] = {{"classes", slice.classes}, {"per_class", slice.per_class}, {"seed", slice.seed}};
    j["target_seed"] = target_seed;
    switch (attack) {
      case AttackKind::Cadv:
        j["colorizer"] = colorizer;
        j["cadv"] = {{"variant", cadv_variant}, {"k", cadv.k}, {"n_hints", cadv.n_hints}, {"lr", cadv.lr},
                     {"conf_delta", cadv.conf_delta}, {"max_iters", cadv.max_iters}, {"sigma", cadv.sigma},
                     {"n_clusters", cadv.n_clusters}, {"seed", cadv.seed}};
        break;
      case AttackKind::Tadv: {
        json pairs = json::array();
        for (const auto& p : tadv.layer_pairs) pairs.push_back({p.first, p.second});
        j["extractor"] = extractor;
        j["bank"] = bank.string();
        j["tadv"] = {{"alpha", tadv.alpha}, {"beta", tadv.beta}, {"iters", tadv.iters},
                     {"steps_per_iter", tadv.steps_per_iter}, {"conf_stop", tadv.conf_stop},
                     {"source", tadv::to_string(tadv.source_strategy)}, {"seed", tadv.seed},
                     {"layer_pairs", pairs}};
        break;
      }
      case AttackKind::Bim:
        j["bim"] = {{"epsilon", bim.epsilon}, {"step", bim.step}, {"iters", bim.iters}};
        break;
    }
    return j;
  }
};

/// One persisted attack: the result plus where it came from and what the
/// transfer models and defenses made of the stored adversarial image.
struct ImageRecord {
  std::size_t index = 0;
  std::string image;  // dataset file name
  std::string source;  // texture source (tAdv)
  std::string error;   // non-empty when the attack failed on this image
  bool success_float = false;  // success before 8-bit persistence
  AttackResult result;
  std::map<std::string, std::size_t> transfer;  // model tag -> predicted label
  std::map<std::string, std::size_t> defended;   // defense name -> predicted label

  bool failed() const { return !error.empty(); }
};

inline json norms_json(const NormReport& n) { return {{"l0", n.l0}, {"l2", n.l2}, {"linf", n.linf}}; }

inline NormReport norms_from_json(const json& j) {
  return {j.at("l0").get<double>(), j.at("l2").get<double>(), j.at("linf").get<double>()};
}

inline std::string padded(std::size_t i) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

inline json record_json(const ImageRecord& r) {
  const auto& res = r.result;
  json j;
  j["index"] = r.index;
  j["image"] = r.image;
  j["label"] = res.label;
  j["target"] = res.target;
  if (r.failed()) {
    j["error"] = r.error;
    j["success"] = false;
    return j;
  }
  j["original_png"] = "images/" + padded(r.index) + "_orig.png";
  j["adversarial_png"] = "images/" + padded(r.index) + "_adv.png";
  j["predicted"] = res.predicted;
  j["success"] = res.success;
  j["success_float"] = r.success_float;
  j["confidence"] = res.confidence;
  j["norms"] = norms_json(res.norms);
  j["iterations"] = res.iterations;
  j["rounds"] = res.rounds;
  j["lbfgs_steps"] = res.lbfgs_steps;
  j["stop_reason"] = res.stop_reason;
  j["round_stops"] = res.round_stops;
  if (!r.source.empty()) j["texture_source"] = r.source;
  json trace = json::array();
  for (const auto& t : res.trace)
    trace.push_back({{"iteration", t.iteration}, {"loss", t.loss}, {"confidence", t.target_confidence},
                     {"predicted", t.predicted}});
  j["trace"] = trace;
  j["transfer"] = r.transfer;
  j["defended"] = r.defended;
  j["seconds"] = res.seconds;
  return j;
}

/// Inverse of record_json; images are read from `run_dir`.
inline ImageRecord record_from_json(const json& j, const std::filesystem::path& run_dir) {
  ImageRecord r;
  r.index = j.at("index").get<std::size_t>();
  r.image = j.at("image").get<std::string>();
  auto& res = r.result;
  res.label = j.at("label").get<std::size_t>();
  res.target = j.at("target").get<std::size_t>();
  if (j.contains("error")) {
    r.error = j.at("error").get<std::string>();
    return r;
  }
  res.original = io::load_image(run_dir / j.at("original_png").get<std::string>());
  res.adversarial = io::load_image(run_dir / j.at("adversarial_png").get<std::string>());
  res.predicted = j.at("predicted").get<std::size_t>();
  res.success = j.at("success").get<bool>();
  r.success_float = j.value("success_float", res.success);
  res.confidence = j.at("confidence").get<double>();
  res.norms = norms_from_json(j.at("norms"));
  res.iterations = j.value("iterations", 0);
  res.rounds = j.value("rounds", 0);
  res.lbfgs_steps = j.value("lbfgs_steps", 0);
  res.stop_reason = j.value("stop_reason", std::string{});
  res.round_stops = j.value("round_stops", std::vector<std::string>{});
  r.source = j.value("texture_source", std::string{});
  for (const auto& t : j.value("trace", json::array()))
    res.trace.push_back({t.at("iteration").get<int>(), t.at("loss").get<double>(), t.at("confidence").get<double>(),
                         t.at("predicted").get<std::size_t>()});
  r.transfer = j.value("transfer", std::map<std::string, std::size_t>{});
  r.defended = j.value("defended", std::map<std::string, std::size_t>{});
  res.seconds = j.value("seconds", 0.0);
  return r;
}

struct ExperimentReport {
  std::string name;
  std::string attack;  // display name, e.g. cAdv4
  std::string victim;
  std::filesystem::path directory;
  std::vector<ImageRecord> records;
  std::size_t attempted = 0;
  std::size_t failed = 0;
  std::size_t succeeded = 0;
  double success_rate = 0.0;                        // % of attempted images classified as their target
  NormReport mean_norms;                            // over images that did not fail
  std::map<std::string, double> transfer_success;   // model tag -> % classified as target
  std::vector<defenses::DefenseReport> defended;
  double seconds = 0.0;

  /// Results of the images that did not fail, in slice order.
  std::vector<AttackResult> results() const {
    std::vector<AttackResult> out;
    for (const auto& r : records)
      if (!r.failed()) out.push_back(r.result);
    return out;
  }
};

inline json report_json(const ExperimentReport& rep, bool with_wallclock = true) {
  json j;
  j["name"] = rep.name;
  j["attack"] = rep.attack;
  j["victim"] = rep.victim;
  j["attempted"] = rep.attempted;
  j["failed"] = rep.failed;
  j["succeeded"] = rep.succeeded;
  j["success_rate"] = rep.success_rate;
  j["mean_norms"] = norms_json(rep.mean_norms);
  j["transfer_success"] = rep.transfer_success;
  json d = json::array();
  for (const auto& r : rep.defended)
    d.push_back({{"defense", r.defense}, {"samples", r.samples}, {"misclassification", r.misclassification},
                 {"targeted_retention", r.targeted_retention}});
  j["defended"] = d;
  if (with_wallclock) j["seconds"] = rep.seconds;
  return j;
}

/// Fills the aggregate fields from `records`.
inline void aggregate(ExperimentReport& rep, const std::vector<std::string>& transfer_tags,
                      const std::vector<std::string>& defense_names) {
  rep.attempted = rep.records.size();
  rep.failed = rep.succeeded = 0;
  NormReport sum;
  std::map<std::string, std::size_t> hits;
  std::map<std::string, std::pair<std::size_t, std::size_t>> def;  // misclassified, kept target
  for (const auto& r : rep.records) {
    if (r.failed()) {
      ++rep.failed;
      continue;
    }
    const auto& res = r.result;
    rep.succeeded += res.success ? 1 : 0;
    sum.l0 += res.norms.l0;
    sum.l2 += res.norms.l2;
    sum.linf += res.norms.linf;
    for (const auto& [tag, label] : r.transfer) hits[tag] += label == res.target ? 1 : 0;
    for (const auto& [name, label] : r.defended) {
      def[name].first += label != res.label ? 1 : 0;
      def[name].second += label == res.target ? 1 : 0;
    }
  }
  const std::size_t ok = rep.attempted - rep.failed;
  rep.success_rate = rep.attempted ? 100.0 * double(rep.succeeded) / double(rep.attempted) : 0.0;
  rep.mean_norms = ok ? NormReport{sum.l0 / double(ok), sum.l2 / double(ok), sum.linf / double(ok)} : NormReport{};
  rep.transfer_success.clear();
  for (const auto& t : transfer_tags) rep.transfer_success[t] = ok ? 100.0 * double(hits[t]) / double(ok) : 0.0;
  rep.defended.clear();
  if (ok)
    for (const auto& name : defense_names)
      rep.defended.push_back({rep.attack, name, ok, 100.0 * double(def[name].first) / double(ok),
                              100.0 * double(def[name].second) / double(ok)});
}

inline std::string run_csv(const ExperimentReport& rep) {
  std::ostringstream os;
  os << "index,image,label,target,predicted,success,confidence,l0,l2,linf,iterations,stop_reason,seconds,error\n";
  os << std::setprecision(10);
  for (const auto& r : rep.records) {
    const auto& res = r.result;
    os << r.index << "," << r.image << "," << res.label << "," << res.target << ",";
    if (r.failed()) {
      std::string e = r.error;
      std::replace(e.begin(), e.end(), ',', ';');
      std::replace(e.begin(), e.end(), '\n', ' ');
      os << ",0,,,,,,,," << e << "\n";
      continue;
    }
    os << res.predicted << "," << (res.success ? 1 : 0) << "," << res.confidence << "," << res.norms.l0 << ","
       << res.norms.l2 << "," << res.norms.linf << "," << res.iterations << "," << res.stop_reason << ","
       << res.seconds << ",\n";
  }
  return os.str();
}

namespace detail {

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw Error("cannot write " + path.string());
}

/// Texture sources: the configured bank, or every dataset image outside the
/// slice. Entries identical to a slice image are dropped either way.
inline tadv::TextureBank texture_bank(const ExperimentConfig& cfg, const Dataset& data,
                                      const std::vector<std::size_t>& slice,
                                      const std::vector<LabelledImage>& victims,
                                      const std::function<RgbImage(RgbImage)>& fit) {
  std::set<std::string> taken;
  for (const auto& v : victims) taken.insert(tadv::content_hash(v.image));
  tadv::TextureBank bank;
  if (!cfg.bank.empty()) {
    for (auto& e : tadv::TextureBank::load(cfg.bank).entries())
      if (!taken.count(tadv::content_hash(e.image))) bank.add({e.name, fit(e.image), e.label});
    return bank;
  }
  const std::set<std::size_t> in_slice(slice.begin(), slice.end());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (in_slice.count(i)) continue;
    auto e = data.load(i);
    if (!taken.count(tadv::content_hash(e.image))) bank.add({e.name, fit(std::move(e.image)), e.label});
  }
  return bank;
}

}  // namespace detail

/// Runs the configured attack over the slice. Configuration errors throw
/// before any image is attacked; per-image errors are recorded and the run
/// continues. Success and norms refer to the 8-bit images that are written.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const models::ModelRegistry& reg,
                                       const Log& log = {}) {
  cfg.validate(reg);
  const auto data = Dataset::open(cfg.dataset);
  const auto slice = select_slice(data, cfg.slice);

  ExperimentReport rep;
  rep.name = cfg.run_name();
  rep.attack = cfg.attack_name();
  rep.victim = cfg.victim;
  rep.directory = cfg.out / rep.name;
  std::vector<std::string> defense_names;
  std::vector<defenses::DefenseSpec> specs;
  for (const auto& d : cfg.defenses) {
    specs.push_back(defenses::DefenseSpec::parse(d));
    defense_names.push_back(specs.back().name());
  }
  std::filesystem::create_directories(rep.directory / "images");
  std::filesystem::create_directories(rep.directory / "records");
  detail::write_json(rep.directory / "config.json", cfg.to_json());
  if (slice.empty()) {
    if (log) log("warning: the slice selects no images; writing an empty report");
    detail::write_json(rep.directory / "run.json", report_json(rep));
    std::ofstream(rep.directory / "run.csv") << run_csv(rep);
    return rep;
  }

  const auto clf = reg.classifier(cfg.victim);
  std::vector<models::Classifier> others;
  for (const auto& t : cfg.transfer) others.push_back(reg.classifier(t));
  std::map<std::string, models::Classifier> robust;
  for (const auto& s : specs)
    if (s.kind == defenses::DefenseKind::RobustModel) robust.emplace(s.model_tag, reg.classifier(s.model_tag));
  std::optional<models::Colorizer> col;
  std::optional<models::FeatureExtractor> ex;
  if (cfg.attack == AttackKind::Cadv) col.emplace(reg.colorizer(cfg.colorizer));
  if (cfg.attack == AttackKind::Tadv) ex.emplace(reg.extractor(cfg.extractor));

  const std::size_t H = clf.preprocess().height, W = clf.preprocess().width;
  const std::function<RgbImage(RgbImage)> fit = [&](RgbImage img) {
    return img.height() == H && img.width() == W ? img : io::quantize8(io::resize(img, H, W));
  };
  std::vector<LabelledImage> victims;
  std::vector<std::size_t> labels;
  for (auto i : slice) {
    auto e = data.load(i);
    e.image = fit(std::move(e.image));
    labels.push_back(e.label);
    victims.push_back(std::move(e));
  }
  std::vector<std::size_t> classes = cfg.slice.classes;
  if (classes.empty()) {
    const auto all = data.labels();
    classes.assign(all.begin(), all.end());
  }
  const auto targets = assign_targets(labels, classes, cfg.target_seed);
  tadv::TextureBank bank;
  if (cfg.attack == AttackKind::Tadv) bank = detail::texture_bank(cfg, data, slice, victims, fit);

  const auto run_start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < victims.size(); ++i) {
    ImageRecord rec;
    rec.index = i;
    rec.image = victims[i].name;
    rec.result.label = victims[i].label;
    rec.result.target = targets[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      AttackResult res;
      switch (cfg.attack) {
        case AttackKind::Cadv: {
          auto c = cfg.cadv;
          c.seed = cfg.cadv.seed + i;
          const auto lab = rgb_to_lab(victims[i].image);
          res = cfg.cadv_variant == "weights"
                    ? cadv::attack_network_weights(clf, *col, lab, targets[i], c)
                    : cadv::attack_hints_mask(clf, *col, lab, cadv::initial_hints(*col, lab, c), targets[i], c);
          break;
        }
        case AttackKind::Tadv: {
          auto c = cfg.tadv;
          c.seed = cfg.tadv.seed + i;
          const auto k = tadv::select_source_index(victims[i].image, targets[i], bank, c.source_strategy, c.seed, *ex);
          rec.source = bank.entries()[k].name;
          res = tadv::attack_texture(clf, *ex, victims[i].image, targets[i], bank.entries()[k].image, c);
          break;
        }
        case AttackKind::Bim: res = defenses::bim_attack(clf, victims[i].image, targets[i], cfg.bim); break;
      }
      rec.success_float = res.success;
      res.label = victims[i].label;
      res.original = victims[i].image;
      res.adversarial = io::quantize8(res.adversarial);
      const auto pred = clf.classify(res.adversarial);
      res.predicted = pred.label;
      res.confidence = pred.probabilities[targets[i]];
      res.success = pred.label == targets[i];
      res.norms = lp_metrics(res.original, res.adversarial);
      res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      for (std::size_t m = 0; m < others.size(); ++m) rec.transfer[cfg.transfer[m]] = others[m].classify(res.adversarial).label;
      for (const auto& s : specs) {
        const auto& model = s.kind == defenses::DefenseKind::RobustModel ? robust.at(s.model_tag) : clf;
        rec.defended[s.name()] = model.classify(defenses::apply_defense(s, res.adversarial)).label;
      }
      const auto stem = rep.directory / "images" / padded(i);
      io::save_png(stem.string() + "_orig.png", res.original);
      io::save_png(stem.string() + "_adv.png", res.adversarial);
      rec.result = std::move(res);
    } catch (const std::exception& e) {
      rec.error = e.what();
      rec.result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    if (log)
      log(rep.name + " [" + std::to_string(i + 1) + "/" + std::to_string(victims.size()) + "] " + rec.image + " " +
          std::to_string(rec.result.label) + "->" + std::to_string(rec.result.target) + ": " +
          (rec.failed() ? "error: " + rec.error : rec.result.success ? "success" : "failed"));
    detail::write_json(rep.directory / "records" / (padded(i) + ".json"), record_json(rec));
    rep.records.push_back(std::move(rec));
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
  aggregate(rep, cfg.transfer, defense_names);
  detail::write_json(rep.directory / "run.json", report_json(rep));
  std::ofstream(rep.directory / "run.csv") << run_csv(rep);
  return rep;
}

/// Reads a run directory written by run_experiment. Unreadable records are
/// skipped and reported through `log`.
inline ExperimentReport load_run(const std::filesystem::path& dir, const Log& log = {}) {
  if (!std::filesystem::exists(dir / "config.json")) throw Error("load_run: " + dir.string() + " is not a run directory");
  const auto cfg = json::parse(std::ifstream(dir / "config.json"));
  ExperimentReport rep;
  rep.name = cfg.value("name", dir.filename().string());
  rep.attack = cfg.value("attack_name", std::string{});
  rep.victim = cfg.value("victim", std::string{});
  rep.directory = dir;
  std::vector<std::filesystem::path> files;
  if (std::filesystem::exists(dir / "records"))
    for (const auto& f : std::filesystem::directory_iterator(dir / "records"))
      if (f.path().extension() == ".json") files.push_back(f.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      rep.records.push_back(record_from_json(json::parse(std::ifstream(f)), dir));
    } catch (const std::exception& e) {
      if (log) log("warning: skipping " + f.string() + ": " + e.what());
    }
  }
  std::vector<std::string> names;
  for (const auto& d : cfg.value("defenses", std::vector<std::string>{})) names.push_back(defenses::DefenseSpec::parse(d).name());
  aggregate(rep, cfg.value("transfer", std::vector<std::string>{}), names);
  if (std::filesystem::exists(dir / "run.json")) {
    try {
      rep.seconds = json::parse(std::ifstream(dir / "run.json")).value("seconds", 0.0);
    } catch (const json::exception&) {
    }
  }
  return rep;
}

}  // namespace semadv::evalcli
