#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "semadv/imaging/io.hpp"
#include "semadv/models/feature_extractor.hpp"
#include "semadv/tadv/texture.hpp"

namespace semadv::tadv {

using models::json;

struct BankEntry {
  std::string name;  // file name relative to the bank directory, or a label for in-memory entries
  RgbImage image;
  std::size_t label = 0;
};

/// FNV-1a over the 8-bit quantised pixels and the image shape.
inline std::string content_hash(const RgbImage& img) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t byte) {
    h ^= byte;
    h *= 1099511628211ULL;
  };
  mix(img.height() & 0xff);
  mix(img.width() & 0xff);
  for (double v : img.tensor().data()) mix(std::uint64_t(std::lround(v * 255.0)));
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

/// Labelled texture sources. On disk: a directory holding the images and an
/// index file with one "file label" pair per line ('#' starts a comment).
class TextureBank {
 public:
  TextureBank() = default;
  explicit TextureBank(std::vector<BankEntry> entries) : entries_(std::move(entries)) {}

  static TextureBank load(const std::filesystem::path& dir, const std::string& index = "index.txt") {
    std::ifstream in(dir / index);
    if (!in) throw Error("texture bank: cannot open " + (dir / index).string());
    TextureBank bank;
    bank.dir_ = dir;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto c = line.find('#'); c != std::string::npos) line.erase(c);
      std::istringstream ls(line);
      std::string file;
      long long label = -1;
      if (!(ls >> file)) continue;
      if (!(ls >> label) || label < 0)
        throw Error("texture bank: bad index line " + std::to_string(lineno) + " in " + (dir / index).string());
      bank.entries_.push_back({file, io::load_image(dir / file), std::size_t(label)});
    }
    return bank;
  }

  void add(BankEntry e) { entries_.push_back(std::move(e)); }
  const std::vector<BankEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::filesystem::path& directory() const noexcept { return dir_; }

  /// Embeddings of every entry, in bank order. Loaded directories keep a
  /// sidecar "embeddings.<extractor tag>.json" keyed by content hash.
  const std::vector<std::vector<double>>& embeddings(const models::FeatureExtractor& ex) const {
    auto& cached = memo_[ex.tag()];
    if (cached.size() == entries_.size()) return cached;
    json side = json::object();
    const auto side_path = dir_.empty() ? std::filesystem::path{} : dir_ / ("embeddings." + ex.tag() + ".json");
    if (!side_path.empty() && std::filesystem::exists(side_path)) {
      try {
        side = json::parse(std::ifstream(side_path));
      } catch (const json::exception&) {
        side = json::object();
      }
    }
    bool dirty = false;
    cached.clear();
    for (const auto& e : entries_) {
      const auto key = content_hash(e.image);
      if (side.contains(key)) {
        cached.push_back(side[key].get<std::vector<double>>());
      } else {
        cached.push_back(ex.embed(e.image));
        side[key] = cached.back();
        dirty = true;
      }
    }
    if (dirty && !side_path.empty()) std::ofstream(side_path) << side.dump();
    return cached;
  }

 private:
  std::vector<BankEntry> entries_;
  std::filesystem::path dir_;
  mutable std::map<std::string, std::vector<std::vector<double>>> memo_;
};

/// Picks a source index. `distance(i)` is only consulted for nearest-target
/// and gives the embedding distance of entry i to the victim.
inline std::size_t select_source_index(const std::vector<std::size_t>& labels, std::size_t target,
                                       SourceStrategy strategy, std::uint64_t seed,
                                       const std::function<double(std::size_t)>& distance) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (strategy == SourceStrategy::Random || labels[i] == target) eligible.push_back(i);
  if (eligible.empty())
    throw Error(labels.empty() ? "select_texture_source: texture bank is empty"
                               : "select_texture_source: no bank image of target class " + std::to_string(target));
  if (strategy == SourceStrategy::NearestTarget) {
    std::size_t best = eligible[0];
    double best_d = distance(best);
    for (std::size_t k = 1; k < eligible.size(); ++k) {
      const double d = distance(eligible[k]);
      if (d < best_d) {
        best_d = d;
        best = eligible[k];
      }
    }
    return best;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  return eligible[pick(rng)];
}

inline std::size_t select_source_index(const RgbImage& victim, std::size_t target, const TextureBank& bank,
                                       SourceStrategy strategy, std::uint64_t seed,
                                       const models::FeatureExtractor& ex) {
  std::vector<std::size_t> labels;
  for (const auto& e : bank.entries()) labels.push_back(e.label);
  std::vector<double> v;
  const std::vector<std::vector<double>>* embs = nullptr;
  if (strategy == SourceStrategy::NearestTarget && !bank.empty()) {
    v = ex.embed(victim);
    embs = &bank.embeddings(ex);
  }
  return select_source_index(labels, target, strategy, seed,
                             [&](std::size_t i) { return models::cosine_distance(v, (*embs)[i]); });
}

inline RgbImage select_texture_source(const RgbImage& victim, std::size_t target, const TextureBank& bank,
                                      SourceStrategy strategy, std::uint64_t seed,
                                      const models::FeatureExtractor& ex) {
  return bank.entries()[select_source_index(victim, target, bank, strategy, seed, ex)].image;
}

}  // namespace semadv::tadv
