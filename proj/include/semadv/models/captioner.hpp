#pragma once

// Convolutional attention captioner. An encoder network maps the image to a
// C x h x w feature grid; each caption position t builds a query from the
// previous word and a position embedding, attends over the grid, and scores
// the vocabulary from the attended context and the query embedding.

#include <sstream>
#include <string>
#include <vector>

#include "semadv/models/classifier.hpp"

namespace semadv::models {

struct CaptionDecoding {
  std::vector<ad::Var> logits;     // one V-vector per position
  std::vector<Tensor> attention;   // one h x w map per position
};

class Captioner {
 public:
  static constexpr std::size_t kStart = 0;
  static constexpr std::size_t kEnd = 1;

  struct Decoder {
    Tensor word_emb;  // V x E
    Tensor pos_emb;   // T x E
    Tensor query;     // C x E
    Tensor out_ctx;   // V x C
    Tensor out_emb;   // V x E
    Tensor out_bias;  // V

    std::vector<Tensor*> all() { return {&word_emb, &pos_emb, &query, &out_ctx, &out_emb, &out_bias}; }
  };

  /// `vocab[0]` must be "<start>" and `vocab[1]` "<end>". The encoder takes
  /// graph input "image" and produces "features".
  Captioner(std::string tag, Network encoder, Preprocess pre, std::vector<std::string> vocab,
            std::size_t max_len, Decoder dec)
      : tag_(std::move(tag)), enc_(std::move(encoder)), pre_(pre), vocab_(std::move(vocab)),
        max_len_(max_len), dec_(std::move(dec)) {
    if (vocab_.size() < 3 || vocab_[kStart] != "<start>" || vocab_[kEnd] != "<end>")
      throw Error("captioner vocabulary must start with <start>, <end> and contain a word");
    const std::size_t V = vocab_.size();
    if (dec_.word_emb.rank() != 2 || dec_.word_emb.dim(0) != V || dec_.pos_emb.dim(0) != max_len_ ||
        dec_.out_ctx.dim(0) != V || dec_.out_emb.dim(0) != V || dec_.out_bias.size() != V)
      throw Error("captioner decoder parameters do not match the vocabulary/length");
    for (auto* t : dec_.all()) params_.push_back(ad::constant(*t));
  }

  const std::string& tag() const noexcept { return tag_; }
  const Preprocess& preprocess() const noexcept { return pre_; }
  const std::vector<std::string>& vocabulary() const noexcept { return vocab_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }
  std::size_t max_length() const noexcept { return max_len_; }
  const Network& encoder() const noexcept { return enc_; }
  const Decoder& decoder() const noexcept { return dec_; }

  std::size_t word_id(const std::string& w) const {
    for (std::size_t i = 2; i < vocab_.size(); ++i)
      if (vocab_[i] == w) return i;
    throw Error("word '" + w + "' is not in the captioner vocabulary");
  }

  std::vector<std::size_t> tokenize(const std::string& caption) const {
    std::istringstream is(caption);
    std::vector<std::size_t> ids;
    for (std::string w; is >> w;) ids.push_back(word_id(w));
    return ids;
  }

  std::string detokenize(const std::vector<std::size_t>& ids) const {
    std::string s;
    for (auto id : ids) {
      if (id >= vocab_.size()) throw Error("word id outside vocabulary");
      if (!s.empty()) s += ' ';
      s += vocab_[id];
    }
    return s;
  }

  /// Teacher-forced decoding: position t is conditioned on words[t-1]
  /// (<start> for t = 0). Returns logits for positions 0..words.size()-1.
  CaptionDecoding decode(const ad::Var& rgb, const std::vector<std::size_t>& words) const {
    if (words.size() > max_len_) throw Error("caption longer than the captioner's maximum length");
    auto feats = enc_.forward({{"image", pre_.apply(rgb)}}, {"features"}).at("features");
    const std::size_t C = feats->shape().at(0), h = feats->shape().at(1), w = feats->shape().at(2);
    if (C != dec_.query.dim(0)) throw Error("captioner encoder channel count mismatch");
    auto F = ad::reshape(feats, {C, h * w});
    auto Ft = ad::transpose2d(F);
    const auto& [word_emb, pos_emb, query, out_ctx, out_emb, out_bias] =
        std::tie(params_[0], params_[1], params_[2], params_[3], params_[4], params_[5]);
    CaptionDecoding out;
    for (std::size_t t = 0; t < words.size(); ++t) {
      const std::size_t prev = t == 0 ? kStart : words[t - 1];
      auto e = ad::add(ad::row(word_emb, prev), ad::row(pos_emb, t));
      auto q = ad::reshape(ad::linear(e, query, nullptr), {1, C});
      auto scores = ad::reshape(ad::matmul_nt(q, Ft), {h * w});
      auto alpha = ad::softmax(scores);
      auto ctx = ad::flatten(ad::matmul_nt(ad::reshape(alpha, {1, h * w}), F));
      out.logits.push_back(ad::add(ad::linear(ctx, out_ctx, out_bias), ad::linear(e, out_emb, nullptr)));
      out.attention.push_back(alpha->value.reshaped({h, w}));
    }
    return out;
  }

  /// Greedy caption (word ids, without <start>/<end>).
  std::vector<std::size_t> caption(const RgbImage& img) const {
    const RgbImage in = io::resize(img, pre_.height, pre_.width);
    auto x = ad::constant(in.tensor());
    std::vector<std::size_t> words;
    for (std::size_t t = 0; t < max_len_; ++t) {
      std::vector<std::size_t> probe = words;
      probe.push_back(kEnd);  // placeholder; only its position's logits are read
      auto dec = decode(x, probe);
      const auto& l = dec.logits.back()->value;
      const auto best = std::size_t(std::max_element(l.data().begin() + 1, l.data().end()) -
                                    l.data().begin());
      if (best == kEnd) break;
      words.push_back(best);
    }
    return words;
  }

  void save(const std::filesystem::path& json_path) const {
    auto enc_path = json_path;
    enc_path.replace_extension(".encoder.json");
    enc_.save(enc_path);
    auto dec_path = json_path;
    dec_path.replace_extension(".decoder.bin");
    json d{{"kind", "captioner"}, {"tag", tag_}, {"vocab", vocab_}, {"max_len", max_len_},
           {"input", pre_.to_json()}, {"encoder", enc_path.filename().string()},
           {"decoder", dec_path.filename().string()}, {"embed_dim", dec_.word_emb.dim(1)},
           {"channels", dec_.query.dim(0)}};
    std::ofstream(json_path) << d.dump(1);
    std::ofstream bin(dec_path, std::ios::binary);
    for (const auto& p : params_)
      for (double v : p->value.data()) {
        const float f = static_cast<float>(v);
        bin.write(reinterpret_cast<const char*>(&f), sizeof f);
      }
  }

  static Captioner load(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw Error("cannot open captioner description " + json_path.string());
    const json d = json::parse(in);
    auto enc = Network::load(json_path.parent_path() / d.at("encoder").get<std::string>());
    const auto vocab = d.at("vocab").get<std::vector<std::string>>();
    const std::size_t V = vocab.size(), T = d.at("max_len"), E = d.at("embed_dim"), C = d.at("channels");
    Decoder dec{Tensor({V, E}), Tensor({T, E}), Tensor({C, E}), Tensor({V, C}), Tensor({V, E}), Tensor({V})};
    std::ifstream bin(json_path.parent_path() / d.at("decoder").get<std::string>(), std::ios::binary);
    for (auto* t : dec.all())
      for (double& v : t->data()) {
        float f;
        if (!bin.read(reinterpret_cast<char*>(&f), sizeof f)) throw Error("captioner decoder weights truncated");
        v = f;
      }
    return Captioner(d.value("tag", std::string("captioner")), std::move(enc),
                     Preprocess::from_json(d.at("input")), vocab, T, std::move(dec));
  }

 private:
  std::string tag_;
  Network enc_;
  Preprocess pre_;
  std::vector<std::string> vocab_;
  std::size_t max_len_;
  Decoder dec_;
  std::vector<ad::Var> params_;
};

}  // namespace semadv::models
