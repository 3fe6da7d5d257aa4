#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "nn.hpp"

namespace ccap {

// Closed word list plus specials. Ids are stable across save/load; the text
// form is one token per line, line number = id.
class Vocabulary {
 public:
  static constexpr size_t kBos = 0;
  static constexpr size_t kEos = 1;
  static constexpr size_t kPad = 2;

  Vocabulary() = default;
  explicit Vocabulary(const std::vector<std::string>& words);  // words beyond the specials

  size_t size() const { return tokens_.size(); }
  const std::string& token(size_t id) const;
  size_t id(const std::string& token) const;  // throws on out-of-vocabulary
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  std::vector<size_t> encode(const std::string& sentence) const;  // whitespace tokens
  std::string decode(const std::vector<size_t>& ids) const;       // specials skipped
  std::vector<std::string> words() const;                         // tokens beyond the specials

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, size_t> index_;
};

struct DecoderConfig {
  size_t width = 64;  // d_dec
  size_t layers = 2;
  size_t heads = 4;
  size_t mlp_hidden = 128;
  size_t instr_len = 4;      // learned instruction embedding rows
  size_t prefix_slots = 16;  // 2K visual prefix rows
  size_t max_len = 48;       // caption tokens including EOS (covers enumeration captions)
  size_t beams = 5;
  double repetition_penalty = 1.5;
  double temperature = 1.0;
  size_t vocab_size = 0;

  size_t seq_capacity() const { return instr_len + prefix_slots + 1 + max_len; }
};

struct DecoderBlock {
  LayerNorm ln1, ln2;
  Attention attn;
  FeedForward ff;
};

struct RankedCaption {
  std::vector<size_t> words;
  double log_likelihood;
  size_t input_index;
};

// Tiny autoregressive transformer conditioned on [instruction embeddings ||
// visual prefix || BOS || caption]. Captions are plain word-id sequences;
// EOS is appended internally wherever a terminated target is needed.
class CaptionDecoder {
 public:
  CaptionDecoder(ParamStore& store, const DecoderConfig& cfg, Rng& rng);

  // Teacher-forced logits for the caption region; row t predicts target[t].
  Tensor caption_logits(const Tensor& prefix, const std::vector<size_t>& input_tokens) const;

  // Mean cross-entropy over [words..., EOS]; rejects missing EOS capacity
  // or over-length targets.
  Tensor caption_loss(const Tensor& prefix, const std::vector<size_t>& words) const;

  // Beam search with sign-aware repetition penalty; beams=1 is greedy.
  std::vector<size_t> generate(const Tensor& prefix, size_t beams_override = 0) const;

  // Total teacher-forced log-likelihood of words + EOS.
  double score_caption(const Tensor& prefix, const std::vector<size_t>& words) const;
  std::vector<RankedCaption> vocab_ranked_score(
      const Tensor& prefix, const std::vector<std::vector<size_t>>& candidates) const;

  const DecoderConfig& config() const { return cfg_; }
  Tensor zero_prefix() const { return Tensor::zeros({cfg_.prefix_slots, cfg_.width}); }

 private:
  Tensor hidden_states(const Tensor& prefix, const std::vector<size_t>& input_tokens) const;
  std::vector<double> next_logits(const Tensor& prefix, const std::vector<size_t>& words) const;

  DecoderConfig cfg_;
  Tensor tok_embed_;  // V x d
  Tensor pos_;        // seq_capacity x d
  Tensor instr_;      // instr_len x d, trainable in the adapt phase
  std::vector<DecoderBlock> blocks_;
  LayerNorm lnf_;
  Linear out_;
};

}  // namespace ccap
