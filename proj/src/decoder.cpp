#include "decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ccap {

namespace {
const char* kSpecials[3] = {"<bos>", "<eos>", "<pad>"};
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  tokens_ = {kSpecials[0], kSpecials[1], kSpecials[2]};
  tokens_.insert(tokens_.end(), words.begin(), words.end());
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw std::invalid_argument("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

const std::string& Vocabulary::token(size_t id) const {
  if (id >= tokens_.size()) {
    throw std::invalid_argument("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[id];
}

size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) {
    throw std::invalid_argument("out-of-vocabulary token: '" + token + "'");
  }
  return it->second;
}

std::vector<size_t> Vocabulary::encode(const std::string& sentence) const {
  std::vector<size_t> out;
  std::istringstream in(sentence);
  std::string word;
  while (in >> word) out.push_back(id(word));
  return out;
}

std::string Vocabulary::decode(const std::vector<size_t>& ids) const {
  std::string out;
  for (size_t id : ids) {
    if (id <= kPad) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::vector<std::string> Vocabulary::words() const {
  return std::vector<std::string>(tokens_.begin() + 3, tokens_.end());
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  for (const std::string& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.size() < 3 || lines[0] != kSpecials[0] || lines[1] != kSpecials[1] ||
      lines[2] != kSpecials[2]) {
    throw std::runtime_error("vocabulary file malformed: " + path);
  }
  return Vocabulary(std::vector<std::string>(lines.begin() + 3, lines.end()));
}

CaptionDecoder::CaptionDecoder(ParamStore& store, const DecoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg_.vocab_size == 0) throw std::invalid_argument("decoder: vocab_size unset");
  if (cfg_.beams < 1) throw std::invalid_argument("decoder: beam count must be >= 1");
  if (cfg_.repetition_penalty < 1.0) {
    throw std::invalid_argument("decoder: repetition penalty must be >= 1");
  }
  const size_t d = cfg_.width;
  tok_embed_ = store.create("decoder.tok_embed", {cfg_.vocab_size, d}, d, rng);
  pos_ = store.create("decoder.pos", {cfg_.seq_capacity(), d}, d, rng);
  instr_ = store.create("instr.embed", {cfg_.instr_len, d}, d, rng);
  blocks_.resize(cfg_.layers);
  for (size_t i = 0; i < cfg_.layers; ++i) {
    const std::string p = "decoder.block" + std::to_string(i);
    blocks_[i].ln1 = LayerNorm(store, p + ".ln1", d, rng);
    blocks_[i].ln2 = LayerNorm(store, p + ".ln2", d, rng);
    blocks_[i].attn = Attention(store, p + ".attn", d, cfg_.heads, rng);
    blocks_[i].ff = FeedForward(store, p + ".ff", d, cfg_.mlp_hidden, rng);
  }
  lnf_ = LayerNorm(store, "decoder.lnf", d, rng);
  out_ = Linear(store, "decoder.out", d, cfg_.vocab_size, rng);
}

Tensor CaptionDecoder::hidden_states(const Tensor& prefix,
                                     const std::vector<size_t>& input_tokens) const {
  if (prefix.rank() != 2 || prefix.dim(0) != cfg_.prefix_slots || prefix.dim(1) != cfg_.width) {
    throw std::invalid_argument("decoder: prefix must be [" + std::to_string(cfg_.prefix_slots) +
                                "x" + std::to_string(cfg_.width) + "], got " +
                                shape_str(prefix.shape()));
  }
  Tensor emb = gather_rows(tok_embed_, input_tokens);
  Tensor x = concat(concat(instr_, prefix, 0), emb, 0);
  const size_t s = x.dim(0);
  if (s > cfg_.seq_capacity()) {
    throw std::invalid_argument("decoder: sequence length " + std::to_string(s) +
                                " exceeds capacity " + std::to_string(cfg_.seq_capacity()));
  }
  x = add(x, slice(pos_, 0, 0, s));
  for (const DecoderBlock& blk : blocks_) {
    Tensor n = blk.ln1.forward(x);
    x = add(x, blk.attn.forward(n, n, true));
    x = add(x, blk.ff.forward(blk.ln2.forward(x)));
  }
  return lnf_.forward(x);
}

Tensor CaptionDecoder::caption_logits(const Tensor& prefix,
                                      const std::vector<size_t>& input_tokens) const {
  Tensor h = hidden_states(prefix, input_tokens);
  Tensor cap = slice(h, 0, cfg_.instr_len + cfg_.prefix_slots, input_tokens.size());
  return out_.forward(cap);
}

Tensor CaptionDecoder::caption_loss(const Tensor& prefix,
                                    const std::vector<size_t>& words) const {
  const size_t m = words.size() + 1;  // + EOS
  if (m > cfg_.max_len) {
    throw std::invalid_argument("caption_loss: caption of " + std::to_string(m) +
                                " tokens exceeds max length " + std::to_string(cfg_.max_len));
  }
  std::vector<size_t> target = words;
  target.push_back(Vocabulary::kEos);
  for (size_t id : target) {
    if (id >= cfg_.vocab_size) {
      throw std::invalid_argument("caption_loss: token id " + std::to_string(id) +
                                  " outside vocabulary");
    }
  }
  std::vector<size_t> inputs;
  inputs.reserve(m);
  inputs.push_back(Vocabulary::kBos);
  inputs.insert(inputs.end(), words.begin(), words.end());
  Tensor logits = caption_logits(prefix, inputs);
  std::vector<double> one_hot(m * cfg_.vocab_size, 0.0);
  for (size_t t = 0; t < m; ++t) one_hot[t * cfg_.vocab_size + target[t]] = 1.0;
  return softmax_cross_entropy(logits,
                               Tensor::from_values({m, cfg_.vocab_size}, std::move(one_hot)));
}

std::vector<double> CaptionDecoder::next_logits(const Tensor& prefix,
                                                const std::vector<size_t>& words) const {
  std::vector<size_t> inputs;
  inputs.reserve(words.size() + 1);
  inputs.push_back(Vocabulary::kBos);
  inputs.insert(inputs.end(), words.begin(), words.end());
  Tensor logits = caption_logits(prefix, inputs);
  const size_t v = cfg_.vocab_size;
  const size_t last = inputs.size() - 1;
  return std::vector<double>(logits.values().begin() + last * v,
                             logits.values().begin() + (last + 1) * v);
}

namespace {

void log_softmax_inplace(std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  for (double& v : x) v -= lse;
}

struct Beam {
  std::vector<size_t> words;
  double score = 0.0;
  bool finished = false;
};

}  // namespace

std::vector<size_t> CaptionDecoder::generate(const Tensor& prefix,
                                              size_t beams_override) const {
  NoGradGuard no_grad;
  const size_t v = cfg_.vocab_size;
  const size_t width = beams_override ? beams_override : cfg_.beams;

  auto search = [&](size_t beam_width) {
    std::vector<Beam> beams{Beam{}};
    // max_len counts the terminating EOS, so at most max_len - 1 words.
    for (size_t step = 0; step + 1 < cfg_.max_len; ++step) {
      bool any_live = false;
      std::vector<Beam> pool;
      for (const Beam& b : beams) {
        if (b.finished) {
          pool.push_back(b);
          continue;
        }
        any_live = true;
        std::vector<double> logits = next_logits(prefix, b.words);
        // Sign-aware penalty on tokens the beam has already emitted.
        if (cfg_.repetition_penalty != 1.0) {
          for (size_t tok : b.words) {
            double& l = logits[tok];
            l = l > 0.0 ? l / cfg_.repetition_penalty : l * cfg_.repetition_penalty;
          }
        }
        if (cfg_.temperature != 1.0) {
          for (double& l : logits) l /= cfg_.temperature;
        }
        log_softmax_inplace(logits);
        for (size_t tok = 0; tok < v; ++tok) {
          Beam nb;
          nb.words = b.words;
          nb.score = b.score + logits[tok];
          if (tok == Vocabulary::kEos) {
            nb.finished = true;
          } else {
            nb.words.push_back(tok);
          }
          pool.push_back(std::move(nb));
        }
      }
      if (!any_live) break;
      std::stable_sort(pool.begin(), pool.end(),
                       [](const Beam& a, const Beam& b) { return a.score > b.score; });
      if (pool.size() > beam_width) pool.resize(beam_width);
      beams = std::move(pool);
    }
    // Prefer a finished beam; an untrained model may never emit EOS.
    const Beam* best = nullptr;
    for (const Beam& b : beams) {
      if (b.finished && (!best || b.score > best->score)) best = &b;
    }
    if (!best) {
      for (const Beam& b : beams) {
        if (!best || b.score > best->score) best = &b;
      }
    }
    return *best;
  };

  Beam best = search(width);
  if (width > 1) {
    // Beam pruning can drop the greedy path; keep whichever finished better
    // so widening the beam never returns a lower-scoring caption.
    Beam greedy = search(1);
    if (greedy.score > best.score) best = greedy;
  }
  return best.words;
}

double CaptionDecoder::score_caption(const Tensor& prefix,
                                     const std::vector<size_t>& words) const {
  NoGradGuard no_grad;
  std::vector<size_t> inputs;
  inputs.reserve(words.size() + 1);
  inputs.push_back(Vocabulary::kBos);
  inputs.insert(inputs.end(), words.begin(), words.end());
  Tensor logits = caption_logits(prefix, inputs);
  std::vector<size_t> target = words;
  target.push_back(Vocabulary::kEos);
  const size_t v = cfg_.vocab_size;
  double total = 0.0;
  std::vector<double> row(v);
  for (size_t t = 0; t < target.size(); ++t) {
    std::copy(logits.values().begin() + t * v, logits.values().begin() + (t + 1) * v,
              row.begin());
    log_softmax_inplace(row);
    total += row[target[t]];
  }
  return total;
}

std::vector<RankedCaption> CaptionDecoder::vocab_ranked_score(
    const Tensor& prefix, const std::vector<std::vector<size_t>>& candidates) const {
  if (candidates.empty()) {
    throw std::invalid_argument("vocab_ranked_score: empty candidate list");
  }
  std::vector<RankedCaption> ranked;
  ranked.reserve(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    ranked.push_back({candidates[i], score_caption(prefix, candidates[i]), i});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedCaption& a,
                                                    const RankedCaption& b) {
    return a.log_likelihood > b.log_likelihood;
  });
  return ranked;
}

}  // namespace ccap
