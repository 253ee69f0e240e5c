#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "medfact/core.hpp"

namespace medfact {

struct AnnotationRecord {
  std::string generation_id;
  std::string annotator_id;
  int score = 0;  // 1..100
};

// CSV with header generation_id,annotator_id,score. Rejects scores outside
// [1,100] and repeated (generation, annotator) pairs (MalformedRecord).
std::vector<AnnotationRecord> read_annotations_csv(const std::string& path);
std::vector<AnnotationRecord> parse_annotations_csv(std::string_view text);

// Items that do not have exactly two annotators, as human-readable warnings.
std::vector<std::string> annotation_warnings(std::span<const AnnotationRecord> annotations);

// Interior bin edges: a score s falls in bin #edges <= s.
struct Binning {
  std::vector<double> edges;

  static Binning equal_width(int bins = 5, double lo = 1.0, double hi = 100.0);
  int bin_of(double score) const;
  int bin_count() const { return static_cast<int>(edges.size()) + 1; }

  bool operator==(const Binning&) const = default;
};

// Unweighted Cohen's kappa over category ids in [0, categories).
// (p_o - p_e) / (1 - p_e); when p_e == 1 the result is 1 if p_o == 1 else 0.
double kappa_from_ratings(std::span<const int> rater_a, std::span<const int> rater_b, int categories);

// Linear-weighted kappa over ordered categories.
double linear_weighted_kappa(std::span<const int> rater_a, std::span<const int> rater_b,
                             int categories);

struct AgreementResult {
  double kappa = 0.0;
  double weighted_kappa = 0.0;
  Binning binning;
  std::size_t n_items = 0;

  bool operator==(const AgreementResult&) const = default;
};

// Each generation must carry exactly two annotations (UnpairedItem); the
// annotation with the smaller annotator id is rater A. Needs >= 2 items
// (TooFewItems).
AgreementResult cohen_kappa(std::span<const AnnotationRecord> annotations,
                            const Binning& binning = Binning::equal_width());

enum class CorrelationLevel { PerGeneration, PerTask };
std::string_view to_string(CorrelationLevel level);

struct CorrelationResult {
  double pearson = 0.0;
  double spearman = 0.0;
  std::size_t n = 0;
  CorrelationLevel level = CorrelationLevel::PerGeneration;

  bool operator==(const CorrelationResult&) const = default;
};

double pearson(std::span<const double> x, std::span<const double> y);
// Pearson over average ranks (ties share the mean rank).
double spearman(std::span<const double> x, std::span<const double> y);

// Throws TooFewPairs for n < 2 and InvalidArgument for mismatched lengths or a
// constant series.
CorrelationResult correlate(std::span<const double> auto_scores,
                            std::span<const double> human_scores, CorrelationLevel level);

// Pairs by id; NoOverlap when the two maps share no key.
CorrelationResult correlate(const std::map<std::string, double>& auto_scores,
                            const std::map<std::string, double>& human_scores,
                            CorrelationLevel level);

struct HumanMeans {
  std::map<std::string, double> per_generation;
  std::map<TaskKind, double> per_task;
};

// Per-generation mean over its annotators, then per-task mean over generation
// means for generations the lookup can place.
HumanMeans human_means(std::span<const AnnotationRecord> annotations,
                       const std::function<std::optional<TaskKind>(const std::string&)>& task_of = {});

struct CorrelationEntry {
  std::string technique;  // "CoT", "NLI", "UnVot", "Baseline"
  CorrelationResult result;

  bool operator==(const CorrelationEntry&) const = default;
};

struct TaskComparisonRow {
  TaskKind task = TaskKind::Summ;
  std::map<std::string, std::optional<double>> technique_means;
  double human_mean = 0.0;
  std::size_t n_generations = 0;

  bool operator==(const TaskComparisonRow&) const = default;
};

struct HumanEvalSummary {
  std::optional<AgreementResult> agreement;
  std::vector<CorrelationEntry> correlations;
  std::vector<TaskComparisonRow> tasks;
  std::size_t n_annotations = 0;
  std::size_t n_generations = 0;
  std::vector<std::string> warnings;

  bool operator==(const HumanEvalSummary&) const = default;
};

void to_json(nlohmann::json& j, const HumanEvalSummary& s);
void from_json(const nlohmann::json& j, HumanEvalSummary& s);

}  // namespace medfact
