#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ccap {

struct EvalEntry {
  std::vector<std::string> hypothesis;
  std::vector<std::vector<std::string>> references;  // at least one
  std::optional<double> iou;
  bool is_distractor = false;
};

using EvalCorpus = std::vector<EvalEntry>;

// Corpus BLEU, uniform 1..4-gram weights, brevity penalty against the
// closest reference length; zero precisions replaced by 1e-9.
double bleu4(const EvalCorpus& corpus);

// Mean per-sentence LCS F-measure with beta = 1.2; max over references.
double rouge_l(const EvalCorpus& corpus);

// CIDEr-D (the COCO evaluation-server variant), scaled to [0, 10].
// Rejects corpora smaller than 2 (degenerate IDF).
double cider_d(const EvalCorpus& corpus);

// Fraction of hypotheses token-identical to at least one reference.
double exact_match(const EvalCorpus& corpus);

struct MetricCell {
  size_t count = 0;
  std::optional<double> bleu4, rouge_l, cider_d, exact;
};

struct BinnedReport {
  std::vector<double> edges;
  // subset ("total" / "scene_change" / "distractor") -> bin label -> cell.
  // Bin labels are "all" plus one label per IoU interval.
  std::map<std::string, std::map<std::string, MetricCell>> cells;
  std::vector<std::string> bin_labels;  // display order

  std::string to_text() const;
  std::string to_json() const;
};

BinnedReport binned_report(const EvalCorpus& corpus, const std::vector<double>& edges);

}  // namespace ccap
