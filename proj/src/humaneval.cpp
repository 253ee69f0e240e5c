#include "medfact/humaneval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "medfact/error.hpp"
#include "medfact/text.hpp"

namespace medfact {

using json = nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::string(trim(field)));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::string(trim(field)));
  return fields;
}

}  // namespace

std::vector<AnnotationRecord> parse_annotations_csv(std::string_view text) {
  auto lines = split_lines(text);
  std::size_t line_no = 0;
  std::vector<std::size_t> column(3, std::string::npos);
  bool have_header = false;
  std::vector<AnnotationRecord> out;
  std::set<std::pair<std::string, std::string>> seen;

  for (auto raw : lines) {
    ++line_no;
    if (trim(raw).empty()) continue;
    auto fields = split_csv_line(raw);
    if (!have_header) {
      static const char* kNames[] = {"generation_id", "annotator_id", "score"};
      for (std::size_t c = 0; c < 3; ++c) {
        auto it = std::find(fields.begin(), fields.end(), kNames[c]);
        if (it == fields.end())
          throw Error(ErrorCode::MalformedRecord,
                      std::string("annotation CSV header lacks column ") + kNames[c]);
        column[c] = static_cast<std::size_t>(it - fields.begin());
      }
      have_header = true;
      continue;
    }
    auto where = "annotations line " + std::to_string(line_no);
    if (fields.size() <= *std::max_element(column.begin(), column.end()))
      throw Error(ErrorCode::MalformedRecord, where + ": too few columns");
    AnnotationRecord rec{fields[column[0]], fields[column[1]], 0};
    if (rec.generation_id.empty() || rec.annotator_id.empty())
      throw Error(ErrorCode::MalformedRecord, where + ": empty id");
    double value = 0;
    try {
      std::size_t used = 0;
      value = std::stod(fields[column[2]], &used);
      if (used != fields[column[2]].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedRecord, where + ": score is not a number");
    }
    if (value != std::floor(value) || value < 1 || value > 100)
      throw Error(ErrorCode::MalformedRecord, where + ": score must be an integer in [1,100]");
    rec.score = static_cast<int>(value);
    if (!seen.emplace(rec.generation_id, rec.annotator_id).second)
      throw Error(ErrorCode::MalformedRecord,
                  where + ": repeated annotation of " + rec.generation_id + " by " + rec.annotator_id);
    out.push_back(std::move(rec));
  }
  if (!have_header) throw Error(ErrorCode::MalformedRecord, "annotation CSV is empty");
  return out;
}

std::vector<AnnotationRecord> read_annotations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open annotations " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_annotations_csv(buf.str());
}

std::vector<std::string> annotation_warnings(std::span<const AnnotationRecord> annotations) {
  std::map<std::string, std::size_t> counts;
  for (const auto& a : annotations) ++counts[a.generation_id];
  std::vector<std::string> warnings;
  for (const auto& [id, n] : counts)
    if (n != 2)
      warnings.push_back("generation " + id + " has " + std::to_string(n) + " annotators (expected 2)");
  return warnings;
}

Binning Binning::equal_width(int bins, double lo, double hi) {
  if (bins < 1 || !(hi > lo)) throw Error(ErrorCode::InvalidArgument, "invalid binning");
  Binning b;
  for (int i = 1; i < bins; ++i) b.edges.push_back(lo + (hi - lo) * i / bins);
  return b;
}

int Binning::bin_of(double score) const {
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), score) - edges.begin());
}

namespace {

void check_ratings(std::span<const int> a, std::span<const int> b, int categories) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "rating vectors differ in length");
  if (a.size() < 2) throw Error(ErrorCode::TooFewItems, "kappa needs at least two items");
  if (categories < 1) throw Error(ErrorCode::InvalidArgument, "kappa needs categories >= 1");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] < 0 || a[i] >= categories || b[i] < 0 || b[i] >= categories)
      throw Error(ErrorCode::InvalidArgument, "rating outside category range");
}

}  // namespace

double kappa_from_ratings(std::span<const int> rater_a, std::span<const int> rater_b, int categories) {
  check_ratings(rater_a, rater_b, categories);
  const double n = static_cast<double>(rater_a.size());
  std::vector<double> ma(categories, 0.0), mb(categories, 0.0);
  double agree = 0;
  for (std::size_t i = 0; i < rater_a.size(); ++i) {
    ma[rater_a[i]] += 1;
    mb[rater_b[i]] += 1;
    if (rater_a[i] == rater_b[i]) agree += 1;
  }
  const double po = agree / n;
  double pe = 0;
  for (int c = 0; c < categories; ++c) pe += (ma[c] / n) * (mb[c] / n);
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

double linear_weighted_kappa(std::span<const int> rater_a, std::span<const int> rater_b,
                             int categories) {
  check_ratings(rater_a, rater_b, categories);
  if (categories == 1) return 1.0;
  const double n = static_cast<double>(rater_a.size());
  std::vector<double> ma(categories, 0.0), mb(categories, 0.0);
  double observed = 0;
  auto disagreement = [categories](int i, int j) {
    return std::abs(i - j) / static_cast<double>(categories - 1);
  };
  for (std::size_t i = 0; i < rater_a.size(); ++i) {
    ma[rater_a[i]] += 1;
    mb[rater_b[i]] += 1;
    observed += disagreement(rater_a[i], rater_b[i]);
  }
  observed /= n;
  double expected = 0;
  for (int i = 0; i < categories; ++i)
    for (int j = 0; j < categories; ++j) expected += (ma[i] / n) * (mb[j] / n) * disagreement(i, j);
  if (expected <= 0.0) return observed <= 0.0 ? 1.0 : 0.0;
  return 1.0 - observed / expected;
}

AgreementResult cohen_kappa(std::span<const AnnotationRecord> annotations, const Binning& binning) {
  std::map<std::string, std::vector<const AnnotationRecord*>> items;
  for (const auto& a : annotations) items[a.generation_id].push_back(&a);
  std::vector<int> ra, rb;
  for (auto& [id, list] : items) {
    if (list.size() != 2)
      throw Error(ErrorCode::UnpairedItem,
                  "generation " + id + " has " + std::to_string(list.size()) + " annotations, kappa needs 2");
    std::sort(list.begin(), list.end(),
              [](const auto* x, const auto* y) { return x->annotator_id < y->annotator_id; });
    ra.push_back(binning.bin_of(list[0]->score));
    rb.push_back(binning.bin_of(list[1]->score));
  }
  if (ra.size() < 2) throw Error(ErrorCode::TooFewItems, "kappa needs at least two annotated items");
  AgreementResult result;
  result.kappa = kappa_from_ratings(ra, rb, binning.bin_count());
  result.weighted_kappa = linear_weighted_kappa(ra, rb, binning.bin_count());
  result.binning = binning;
  result.n_items = ra.size();
  return result;
}

std::string_view to_string(CorrelationLevel level) {
  return level == CorrelationLevel::PerGeneration ? "per-generation" : "per-task";
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "series differ in length");
  if (x.size() < 2) throw Error(ErrorCode::TooFewPairs, "correlation needs at least two pairs");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) throw Error(ErrorCode::InvalidArgument, "correlation of a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "series differ in length");
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  return pearson(rx, ry);
}

CorrelationResult correlate(std::span<const double> auto_scores, std::span<const double> human_scores,
                            CorrelationLevel level) {
  if (auto_scores.size() < 2 || human_scores.size() < 2)
    throw Error(ErrorCode::TooFewPairs, "correlation needs at least two pairs");
  return CorrelationResult{pearson(auto_scores, human_scores), spearman(auto_scores, human_scores),
                           auto_scores.size(), level};
}

CorrelationResult correlate(const std::map<std::string, double>& auto_scores,
                            const std::map<std::string, double>& human_scores, CorrelationLevel level) {
  std::vector<double> x, y;
  for (const auto& [id, value] : auto_scores) {
    auto it = human_scores.find(id);
    if (it == human_scores.end()) continue;
    x.push_back(value);
    y.push_back(it->second);
  }
  if (x.empty()) throw Error(ErrorCode::NoOverlap, "no generation has both automatic and human scores");
  return correlate(x, y, level);
}

HumanMeans human_means(std::span<const AnnotationRecord> annotations,
                       const std::function<std::optional<TaskKind>(const std::string&)>& task_of) {
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const auto& a : annotations) {
    auto& [sum, n] = sums[a.generation_id];
    sum += a.score;
    ++n;
  }
  HumanMeans means;
  std::map<TaskKind, std::pair<double, std::size_t>> task_sums;
  for (const auto& [id, sn] : sums) {
    double mean = sn.first / static_cast<double>(sn.second);
    means.per_generation[id] = mean;
    if (!task_of) continue;
    if (auto task = task_of(id)) {
      task_sums[*task].first += mean;
      ++task_sums[*task].second;
    }
  }
  for (const auto& [task, sn] : task_sums) means.per_task[task] = sn.first / static_cast<double>(sn.second);
  return means;
}

void to_json(json& j, const HumanEvalSummary& s) {
  j = json::object();
  if (s.agreement) {
    j["agreement"] = json{{"kappa", s.agreement->kappa},
                          {"weighted_kappa", s.agreement->weighted_kappa},
                          {"bin_edges", s.agreement->binning.edges},
                          {"n_items", s.agreement->n_items}};
  } else {
    j["agreement"] = nullptr;
  }
  json corr = json::array();
  for (const auto& c : s.correlations)
    corr.push_back(json{{"technique", c.technique},
                        {"level", to_string(c.result.level)},
                        {"pearson", c.result.pearson},
                        {"spearman", c.result.spearman},
                        {"n", c.result.n}});
  j["correlations"] = std::move(corr);
  json tasks = json::array();
  for (const auto& t : s.tasks) {
    json means = json::object();
    for (const auto& [name, value] : t.technique_means) means[name] = value ? json(*value) : json(nullptr);
    tasks.push_back(json{{"task", to_string(t.task)},
                         {"technique_means", std::move(means)},
                         {"human_mean", t.human_mean},
                         {"n_generations", t.n_generations}});
  }
  j["tasks"] = std::move(tasks);
  j["n_annotations"] = s.n_annotations;
  j["n_generations"] = s.n_generations;
  j["warnings"] = s.warnings;
}

void from_json(const json& j, HumanEvalSummary& s) {
  s = HumanEvalSummary{};
  if (j.contains("agreement") && !j["agreement"].is_null()) {
    const auto& a = j["agreement"];
    AgreementResult r;
    r.kappa = a.at("kappa").get<double>();
    r.weighted_kappa = a.at("weighted_kappa").get<double>();
    r.binning.edges = a.at("bin_edges").get<std::vector<double>>();
    r.n_items = a.at("n_items").get<std::size_t>();
    s.agreement = r;
  }
  for (const auto& c : j.at("correlations")) {
    CorrelationResult r;
    r.pearson = c.at("pearson").get<double>();
    r.spearman = c.at("spearman").get<double>();
    r.n = c.at("n").get<std::size_t>();
    r.level = c.at("level").get<std::string>() == "per-task" ? CorrelationLevel::PerTask
                                                             : CorrelationLevel::PerGeneration;
    s.correlations.push_back(CorrelationEntry{c.at("technique").get<std::string>(), r});
  }
  for (const auto& t : j.at("tasks")) {
    TaskComparisonRow row;
    row.task = parse_task(t.at("task").get<std::string>());
    for (const auto& [name, value] : t.at("technique_means").items())
      row.technique_means[name] = value.is_null() ? std::nullopt : std::optional<double>(value.get<double>());
    row.human_mean = t.at("human_mean").get<double>();
    row.n_generations = t.at("n_generations").get<std::size_t>();
    s.tasks.push_back(std::move(row));
  }
  s.n_annotations = j.at("n_annotations").get<std::size_t>();
  s.n_generations = j.at("n_generations").get<std::size_t>();
  s.warnings = j.at("warnings").get<std::vector<std::string>>();
}

}  // namespace medfact
