#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "semadv/imaging/io.hpp"

namespace semadv::evalcli {

struct LabelledImage {
  std::string name;  // file name relative to the dataset directory
  RgbImage image;
  std::size_t label = 0;
};

/// Image directory with an index file of "file label" lines ('#' comments).
/// Images are read lazily.
class Dataset {
 public:
  struct Entry {
    std::string file;
    std::size_t label = 0;
  };

  Dataset() = default;
  Dataset(std::filesystem::path dir, std::vector<Entry> entries) : dir_(std::move(dir)), entries_(std::move(entries)) {}

  static Dataset open(const std::filesystem::path& dir, const std::string& index = "index.txt") {
    std::ifstream in(dir / index);
    if (!in) throw Error("dataset: cannot open " + (dir / index).string());
    std::vector<Entry> entries;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
      if (auto c = line.find('#'); c != std::string::npos) line.erase(c);
      std::istringstream ls(line);
      std::string file;
      long long label = -1;
      if (!(ls >> file)) continue;
      if (!(ls >> label) || label < 0)
        throw Error("dataset: bad index line " + std::to_string(lineno) + " in " + (dir / index).string());
      entries.push_back({file, std::size_t(label)});
    }
    return Dataset(dir, std::move(entries));
  }

  const std::filesystem::path& directory() const noexcept { return dir_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::set<std::size_t> labels() const {
    std::set<std::size_t> s;
    for (const auto& e : entries_) s.insert(e.label);
    return s;
  }

  LabelledImage load(std::size_t i) const {
    const auto& e = entries_.at(i);
    return {e.file, io::load_image(dir_ / e.file), e.label};
  }

 private:
  std::filesystem::path dir_;
  std::vector<Entry> entries_;
};

struct SliceSpec {
  std::vector<std::size_t> classes;  // empty: every label in the dataset, ascending
  std::size_t per_class = 2;
  std::uint64_t seed = 0;
};

/// Indices of the slice: for each class in order, `per_class` entries drawn
/// without replacement by a seeded shuffle.
inline std::vector<std::size_t> select_slice(const Dataset& data, const SliceSpec& spec) {
  std::vector<std::size_t> classes = spec.classes;
  if (classes.empty()) {
    const auto all = data.labels();
    classes.assign(all.begin(), all.end());
  }
  std::vector<std::size_t> out;
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.entries()[i].label == classes[ci]) members.push_back(i);
    if (members.size() < spec.per_class)
      throw Error("dataset slice: class " + std::to_string(classes[ci]) + " has " +
                  std::to_string(members.size()) + " images, " + std::to_string(spec.per_class) + " requested");
    std::mt19937_64 rng(spec.seed * 1000003ULL + classes[ci]);
    std::shuffle(members.begin(), members.end(), rng);
    out.insert(out.end(), members.begin(), members.begin() + std::ptrdiff_t(spec.per_class));
  }
  return out;
}

/// Round-robin over the slice's other classes from a seeded starting offset:
/// image i with label y gets others(y)[(offset + i) mod |others|].
inline std::vector<std::size_t> assign_targets(const std::vector<std::size_t>& labels,
                                               const std::vector<std::size_t>& classes, std::uint64_t seed) {
  if (classes.size() < 2 && !labels.empty()) throw Error("target assignment needs at least two classes");
  std::mt19937_64 rng(seed);
  const std::size_t offset = classes.size() < 2 ? 0 : std::uniform_int_distribution<std::size_t>(0, classes.size() - 2)(rng);
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<std::size_t> others;
    for (auto c : classes)
      if (c != labels[i]) others.push_back(c);
    if (others.empty()) throw Error("target assignment: label " + std::to_string(labels[i]) + " has no other class");
    targets.push_back(others[(offset + i) % others.size()]);
  }
  return targets;
}

}  // namespace semadv::evalcli
