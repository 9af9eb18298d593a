#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "semadv/models/toy_zoo.hpp"

namespace semadv::models {

/// Resolves model tags to loaded models. Tags starting with "toy-" are built
/// in code; every other tag is read from `<weights_dir>/<tag>.json`.
class ModelRegistry {
 public:
  static constexpr const char* kWeightsEnv = "SEMADV_WEIGHTS";

  explicit ModelRegistry(std::filesystem::path weights_dir = {}, std::size_t toy_size = 16)
      : dir_(std::move(weights_dir)), toy_size_(toy_size) {}

  /// Uses $SEMADV_WEIGHTS when `dir` is empty.
  static ModelRegistry from_env(const std::filesystem::path& dir = {}) {
    if (!dir.empty()) return ModelRegistry(dir);
    const char* env = std::getenv(kWeightsEnv);
    return ModelRegistry(env ? std::filesystem::path(env) : std::filesystem::path{});
  }

  const std::filesystem::path& weights_dir() const noexcept { return dir_; }

  bool has(const std::string& tag) const {
    if (is_toy(tag)) return toy_kind(tag) != "";
    return !dir_.empty() && std::filesystem::exists(path_of(tag));
  }

  std::string kind(const std::string& tag) const {
    if (is_toy(tag)) {
      auto k = toy_kind(tag);
      if (k.empty()) throw Error("unknown toy model tag '" + tag + "'");
      return k;
    }
    std::ifstream in(path_of(tag));
    if (!in) throw Error("model '" + tag + "' not found in weights directory '" + dir_.string() + "'");
    return json::parse(in).value("kind", std::string{});
  }

  Classifier classifier(const std::string& tag) const {
    if (tag == "toy-classifier") return toy::make_classifier(1, toy_size_, 2);
    if (tag == "toy-chroma") return toy::make_chroma_probe(toy_size_);
    if (tag == "toy-hf") return toy::make_hf_probe(toy_size_, 0.05);
    require_kind(tag, "classifier");
    auto c = Classifier::from_network(Network::load(path_of(tag)));
    return c;
  }

  Colorizer colorizer(const std::string& tag) const {
    if (tag == "toy-colorizer") return toy::make_colorizer(2);
    require_kind(tag, "colorizer");
    return Colorizer::from_network(Network::load(path_of(tag)));
  }

  FeatureExtractor extractor(const std::string& tag) const {
    if (tag == "toy-extractor") return toy::make_extractor(3, toy_size_);
    require_kind(tag, "extractor");
    return FeatureExtractor::from_network(Network::load(path_of(tag)));
  }

  Captioner captioner(const std::string& tag) const {
    if (tag == "toy-captioner") return toy::make_captioner(4, toy_size_, {"red", "green", "blue"});
    require_kind(tag, "captioner");
    return Captioner::load(path_of(tag));
  }

 private:
  static bool is_toy(const std::string& tag) { return tag.rfind("toy-", 0) == 0; }
  static std::string toy_kind(const std::string& tag) {
    if (tag == "toy-classifier" || tag == "toy-chroma" || tag == "toy-hf") return "classifier";
    if (tag == "toy-colorizer") return "colorizer";
    if (tag == "toy-extractor") return "extractor";
    if (tag == "toy-captioner") return "captioner";
    return "";
  }
  std::filesystem::path path_of(const std::string& tag) const { return dir_ / (tag + ".json"); }
  void require_kind(const std::string& tag, const std::string& want) const {
    const auto k = kind(tag);
    if (k != want) throw Error("model '" + tag + "' is a " + (k.empty() ? "model of unknown kind" : k) +
                               ", not a " + want);
  }

  std::filesystem::path dir_;
  std::size_t toy_size_;
};

}  // namespace semadv::models
