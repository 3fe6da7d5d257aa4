#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace ccap {

namespace {

using Counts = std::unordered_map<std::string, double>;

// n-grams keyed as words joined by '\x1f' (tokens never contain it).
Counts ngram_counts(const std::vector<std::string>& tokens, size_t n) {
  Counts out;
  if (tokens.size() < n) return out;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (size_t j = 1; j < n; ++j) {
      key += '\x1f';
      key += tokens[i + j];
    }
    out[key] += 1.0;
  }
  return out;
}

void require_nonempty(const EvalCorpus& corpus, const char* op) {
  if (corpus.empty()) throw std::invalid_argument(std::string(op) + ": empty corpus");
  for (const EvalEntry& e : corpus) {
    if (e.references.empty()) {
      throw std::invalid_argument(std::string(op) + ": entry without references");
    }
  }
}

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu4(const EvalCorpus& corpus) {
  require_nonempty(corpus, "bleu4");
  double matches[4] = {0, 0, 0, 0};
  double totals[4] = {0, 0, 0, 0};
  double hyp_len = 0.0, eff_ref_len = 0.0;
  for (const EvalEntry& e : corpus) {
    const size_t c = e.hypothesis.size();
    hyp_len += static_cast<double>(c);
    // Closest reference length; ties resolved toward the shorter one.
    size_t best = e.references[0].size();
    for (const auto& r : e.references) {
      const auto diff = [&](size_t len) {
        return std::llabs(static_cast<long long>(len) - static_cast<long long>(c));
      };
      if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) {
        best = r.size();
      }
    }
    eff_ref_len += static_cast<double>(best);
    for (size_t n = 1; n <= 4; ++n) {
      Counts hyp = ngram_counts(e.hypothesis, n);
      Counts clip;
      for (const auto& r : e.references) {
        for (const auto& [g, cnt] : ngram_counts(r, n)) {
          auto it = clip.find(g);
          if (it == clip.end() || it->second < cnt) clip[g] = cnt;
        }
      }
      for (const auto& [g, cnt] : hyp) {
        totals[n - 1] += cnt;
        auto it = clip.find(g);
        if (it != clip.end()) matches[n - 1] += std::min(cnt, it->second);
      }
    }
  }
  if (hyp_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (size_t n = 0; n < 4; ++n) {
    const double p = (matches[n] > 0.0 && totals[n] > 0.0) ? matches[n] / totals[n] : 1e-9;
    log_sum += 0.25 * std::log(p);
  }
  const double bp = hyp_len >= eff_ref_len ? 1.0 : std::exp(1.0 - eff_ref_len / hyp_len);
  return bp * std::exp(log_sum);
}

double rouge_l(const EvalCorpus& corpus) {
  require_nonempty(corpus, "rouge_l");
  const double beta = 1.2;
  double total = 0.0;
  for (const EvalEntry& e : corpus) {
    double best = 0.0;
    for (const auto& r : e.references) {
      if (e.hypothesis.empty() || r.empty()) continue;
      const double lcs = static_cast<double>(lcs_length(e.hypothesis, r));
      if (lcs == 0.0) continue;
      const double prec = lcs / static_cast<double>(e.hypothesis.size());
      const double rec = lcs / static_cast<double>(r.size());
      const double f = (1.0 + beta * beta) * rec * prec / (rec + beta * beta * prec);
      best = std::max(best, f);
    }
    total += best;
  }
  return total / static_cast<double>(corpus.size());
}

double cider_d(const EvalCorpus& corpus) {
  if (corpus.size() < 2) {
    throw std::invalid_argument("cider_d: corpus of " + std::to_string(corpus.size()) +
                                " is degenerate (needs >= 2 for document frequencies)");
  }
  require_nonempty(corpus, "cider_d");
  constexpr size_t kMaxN = 4;
  constexpr double kSigma = 6.0;

  // Document frequency: number of instances whose reference set contains
  // the n-gram.
  Counts df;
  for (const EvalEntry& e : corpus) {
    std::unordered_set<std::string> seen;
    for (const auto& r : e.references) {
      for (size_t n = 1; n <= kMaxN; ++n) {
        for (const auto& [g, cnt] : ngram_counts(r, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) df[g] += 1.0;
  }
  const double log_corpus = std::log(static_cast<double>(corpus.size()));

  struct Vec {
    Counts weighted[kMaxN];
    double norm[kMaxN] = {0, 0, 0, 0};
    double length = 0.0;
  };
  auto to_vec = [&](const std::vector<std::string>& tokens) {
    Vec v;
    v.length = static_cast<double>(tokens.size());
    for (size_t n = 1; n <= kMaxN; ++n) {
      for (const auto& [g, cnt] : ngram_counts(tokens, n)) {
        const double idf = log_corpus - std::log(std::max(1.0, df.count(g) ? df.at(g) : 0.0));
        const double wv = cnt * idf;
        v.weighted[n - 1][g] = wv;
        v.norm[n - 1] += wv * wv;
      }
      v.norm[n - 1] = std::sqrt(v.norm[n - 1]);
    }
    return v;
  };

  double total = 0.0;
  for (const EvalEntry& e : corpus) {
    const Vec hyp = to_vec(e.hypothesis);
    double per_n[kMaxN] = {0, 0, 0, 0};
    for (const auto& r : e.references) {
      const Vec ref = to_vec(r);
      const double delta = hyp.length - ref.length;
      const double penalty = std::exp(-delta * delta / (2.0 * kSigma * kSigma));
      for (size_t n = 0; n < kMaxN; ++n) {
        double dot = 0.0;
        for (const auto& [g, wv] : hyp.weighted[n]) {
          auto it = ref.weighted[n].find(g);
          if (it != ref.weighted[n].end()) dot += std::min(wv, it->second) * it->second;
        }
        if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) dot /= hyp.norm[n] * ref.norm[n];
        per_n[n] += dot * penalty;
      }
    }
    double mean_n = 0.0;
    for (size_t n = 0; n < kMaxN; ++n) mean_n += per_n[n] / static_cast<double>(kMaxN);
    total += mean_n / static_cast<double>(e.references.size()) * 10.0;
  }
  return total / static_cast<double>(corpus.size());
}

double exact_match(const EvalCorpus& corpus) {
  require_nonempty(corpus, "exact_match");
  size_t hits = 0;
  for (const EvalEntry& e : corpus) {
    for (const auto& r : e.references) {
      if (e.hypothesis == r) {
        hits++;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(corpus.size());
}

namespace {

MetricCell compute_cell(const EvalCorpus& sub) {
  MetricCell cell;
  cell.count = sub.size();
  if (sub.empty()) return cell;
  cell.bleu4 = bleu4(sub);
  cell.rouge_l = rouge_l(sub);
  cell.exact = exact_match(sub);
  if (sub.size() >= 2) cell.cider_d = cider_d(sub);
  return cell;
}

std::string bin_label(double lo, double hi, bool last) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "[%.2f,%.2f%c", lo, hi, last ? ']' : ')');
  return buf;
}

}  // namespace

BinnedReport binned_report(const EvalCorpus& corpus, const std::vector<double>& edges) {
  require_nonempty(corpus, "binned_report");
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()) || edges.front() < 0.0 ||
      edges.back() > 1.0) {
    throw std::invalid_argument("binned_report: bin edges must ascend within [0,1]");
  }
  BinnedReport report;
  report.edges = edges;
  report.bin_labels.push_back("all");
  for (size_t b = 0; b + 1 < edges.size(); ++b) {
    report.bin_labels.push_back(bin_label(edges[b], edges[b + 1], b + 2 == edges.size()));
  }

  const std::vector<std::string> subsets = {"total", "scene_change", "distractor"};
  auto in_subset = [](const EvalEntry& e, const std::string& name) {
    if (name == "total") return true;
    return name == "distractor" ? e.is_distractor : !e.is_distractor;
  };

  for (const std::string& subset : subsets) {
    EvalCorpus all;
    std::vector<EvalCorpus> per_bin(edges.size() - 1);
    for (const EvalEntry& e : corpus) {
      if (!in_subset(e, subset)) continue;
      all.push_back(e);
      if (!e.iou) continue;
      for (size_t b = 0; b + 1 < edges.size(); ++b) {
        const bool last = b + 2 == edges.size();
        if (*e.iou >= edges[b] && (*e.iou < edges[b + 1] || (last && *e.iou == edges[b + 1]))) {
          per_bin[b].push_back(e);
          break;
        }
      }
    }
    report.cells[subset]["all"] = compute_cell(all);
    for (size_t b = 0; b + 1 < edges.size(); ++b) {
      report.cells[subset][report.bin_labels[b + 1]] = compute_cell(per_bin[b]);
    }
  }
  return report;
}

std::string BinnedReport::to_text() const {
  std::ostringstream out;
  out << "subset        bin           n     BLEU-4  ROUGE-L CIDEr-D  exact\n";
  for (const auto& [subset, bins] : cells) {
    for (const std::string& label : bin_labels) {
      const MetricCell& c = bins.at(label);
      char line[160];
      auto fmt = [](const std::optional<double>& v) {
        char b[16];
        if (v) {
          std::snprintf(b, sizeof(b), "%7.4f", *v);
        } else {
          std::snprintf(b, sizeof(b), "      -");
        }
        return std::string(b);
      };
      std::snprintf(line, sizeof(line), "%-13s %-13s %-5zu %s %s %s %s\n", subset.c_str(),
                    label.c_str(), c.count, fmt(c.bleu4).c_str(), fmt(c.rouge_l).c_str(),
                    fmt(c.cider_d).c_str(), fmt(c.exact).c_str());
      out << line;
    }
  }
  return out.str();
}

std::string BinnedReport::to_json() const {
  nlohmann::ordered_json root;
  const char* metric_names[4] = {"bleu4", "rouge_l", "cider_d", "exact_match"};
  for (const char* metric : metric_names) {
    nlohmann::ordered_json per_subset;
    for (const auto& [subset, bins] : cells) {
      nlohmann::ordered_json per_bin;
      for (const std::string& label : bin_labels) {
        const MetricCell& c = bins.at(label);
        const std::optional<double>* v = nullptr;
        if (std::string(metric) == "bleu4") v = &c.bleu4;
        if (std::string(metric) == "rouge_l") v = &c.rouge_l;
        if (std::string(metric) == "cider_d") v = &c.cider_d;
        if (std::string(metric) == "exact_match") v = &c.exact;
        per_bin[label] = *v ? nlohmann::ordered_json(**v) : nlohmann::ordered_json(nullptr);
      }
      per_subset[subset] = per_bin;
    }
    root[metric] = per_subset;
  }
  nlohmann::ordered_json counts;
  for (const auto& [subset, bins] : cells) {
    nlohmann::ordered_json per_bin;
    for (const std::string& label : bin_labels) per_bin[label] = bins.at(label).count;
    counts[subset] = per_bin;
  }
  root["counts"] = counts;
  return root.dump(2);
}

}  // namespace ccap
