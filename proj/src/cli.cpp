#include "medfact/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "medfact/bench.hpp"
#include "medfact/config.hpp"
#include "medfact/decompose.hpp"
#include "medfact/evidence.hpp"
#include "medfact/hashing.hpp"
#include "medfact/humaneval.hpp"
#include "medfact/pipeline.hpp"
#include "medfact/report.hpp"

namespace medfact {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::UnknownFormat:
    case ErrorCode::InvalidArgument: return kExitConfig;
    default: return kExitRuntime;
  }
}

namespace {

struct Options {
  std::optional<std::string> config;
  std::optional<std::string> generations, corpus, index, cache_dir, output_dir, annotations;
  std::optional<std::string> mode, fixed_timestamp, nli_direction;
  std::optional<std::size_t> concurrency, k, chunk_size, overlap, max_facts, samples;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> tasks, models;
  std::optional<std::string> out;

  // subcommand specific
  std::string dump, dump_format = "jsonl";
  std::optional<std::string> corpus_out, index_out;
  std::optional<std::string> assessments;
  std::vector<std::string> inputs;
  std::string format = "json";
  std::optional<std::string> report;
  int bins = 5;
  std::string dataset, input;
};

void write_text(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  f << content;
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunConfig load_config(const Options& o) {
  RunConfig c = o.config ? load_run_config(*o.config) : RunConfig{};
  auto path = [](const std::optional<std::string>& v, std::optional<fs::path>& dst) {
    if (v) dst = fs::path(*v);
  };
  path(o.generations, c.generations);
  path(o.corpus, c.corpus);
  path(o.index, c.index);
  path(o.cache_dir, c.cache_dir);
  path(o.output_dir, c.output_dir);
  path(o.annotations, c.annotations);
  if (o.mode) c.mode = parse_mode(*o.mode);
  if (o.fixed_timestamp) c.fixed_timestamp = *o.fixed_timestamp;
  if (o.nli_direction) c.nli_direction = parse_nli_direction(*o.nli_direction);
  if (o.concurrency) c.concurrency = *o.concurrency;
  if (o.k) c.k = *o.k;
  if (o.chunk_size) c.chunk_size = *o.chunk_size;
  if (o.overlap) c.overlap = *o.overlap;
  if (o.max_facts) c.max_facts = *o.max_facts;
  if (o.samples) c.samples = *o.samples;
  if (o.seed) c.seed = *o.seed;
  if (!o.tasks.empty()) {
    c.tasks.clear();
    for (const auto& t : o.tasks) c.tasks.push_back(parse_task(t));
  }
  if (!o.models.empty()) c.models = o.models;
  return c;
}

const fs::path& require(const std::optional<fs::path>& p, const char* what) {
  if (!p) throw Error(ErrorCode::ConfigError, std::string("no ") + what + " configured");
  return *p;
}

std::vector<GenerationRecord> load_records(const RunConfig& c) {
  return validate_records(read_records_jsonl(require(c.generations, "generations file (paths.generations / --generations)").string()));
}

std::optional<PassageIndex> load_index(const RunConfig& c) {
  if (c.index) return PassageIndex::load(*c.index);
  if (c.corpus) {
    auto docs = read_corpus_jsonl(c.corpus->string());
    return PassageIndex::build(docs, ChunkParams{c.chunk_size, c.overlap});
  }
  return std::nullopt;
}

void emit(const Options& o, const std::optional<fs::path>& fallback, const std::string& content, std::ostream& out) {
  if (o.out) write_text(*o.out, content);
  else if (fallback) write_text(*fallback, content);
  else out << content;
}

int cmd_ingest(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  auto docs = ingest_dump(o.dump, parse_dump_format(o.dump_format));
  if (docs.empty()) throw Error(ErrorCode::EmptyCorpus, "dump " + o.dump + " holds no documents");
  auto corpus_path = o.corpus_out ? fs::path(*o.corpus_out) : c.corpus;
  auto index_path = o.index_out ? fs::path(*o.index_out) : c.index;
  if (!corpus_path && !index_path)
    throw Error(ErrorCode::ConfigError, "ingest-corpus needs --corpus-out and/or --index-out");
  if (corpus_path) {
    if (corpus_path->has_parent_path()) fs::create_directories(corpus_path->parent_path());
    write_corpus_jsonl(corpus_path->string(), docs);
  }
  auto index = PassageIndex::build(docs, ChunkParams{c.chunk_size, c.overlap});
  if (index_path) {
    if (index_path->has_parent_path()) fs::create_directories(index_path->parent_path());
    index.save(*index_path);
  }
  out << fmt::format("{} documents, {} passages\n", docs.size(), index.passages().size());
  return kExitOk;
}

int cmd_generate(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  c.validate();
  if (c.models.empty()) throw Error(ErrorCode::ConfigError, "no models configured (run.models / --model)");
  std::vector<BenchTask> tasks;
  for (auto task : c.tasks) {
    auto it = c.datasets.find(task);
    if (it == c.datasets.end())
      throw Error(ErrorCode::ConfigError, "no dataset configured for " + std::string(to_string(task)));
    BenchTask t;
    t.spec = c.task_spec(task);
    t.samples = load_dataset(task, it->second.string(), t.spec.sample_count, t.spec.seed);
    t.dataset_sha256 = sha256_hex(read_text(it->second));
    tasks.push_back(std::move(t));
  }
  auto env = make_backend_env(c);
  std::vector<std::shared_ptr<ChatBackend>> backends;
  std::vector<BenchModel> models;
  for (const auto& m : c.models) backends.push_back(make_generator(c.generator, m, env));
  for (std::size_t i = 0; i < c.models.size(); ++i) models.push_back(BenchModel{c.models[i], *backends[i]});

  auto result = run_generation(tasks, models, c.concurrency, c.fixed_timestamp);
  std::optional<fs::path> records_path = o.out ? fs::path(*o.out) : c.output_dir ? std::optional(*c.output_dir / "generations.jsonl") : std::nullopt;
  if (!records_path) throw Error(ErrorCode::ConfigError, "generate needs --out or paths.output_dir");
  if (records_path->has_parent_path()) fs::create_directories(records_path->parent_path());
  write_records_jsonl(records_path->string(), result.records);
  write_text(records_path->parent_path() / "generation_manifest.json", json(result.manifest).dump(2) + "\n");

  out << "| Task | n | source words | generated words |\n|---|---:|---:|---:|\n";
  for (const auto& [task, s] : corpus_stats(result.records))
    out << fmt::format("| {} | {} | {:.1f} | {:.1f} |\n", to_string(task), s.n, s.source_words, s.generated_words);
  if (!result.manifest.failures.empty()) {
    spdlog::error("{} generations failed; see generation_manifest.json", result.manifest.failures.size());
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_decompose(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  c.validate();
  auto records = load_records(c);
  auto env = make_backend_env(c);
  auto judge = make_judge(c.judge, env);
  auto cfg = c.pipeline_config();
  std::string lines;
  std::size_t failed = 0;
  for (const auto& r : records) {
    json j{{"record_id", r.id}};
    try {
      j["facts"] = decompose(r.output_text, r.id, cfg.decompose, *judge);
    } catch (const Error& e) {
      ++failed;
      j["error"] = json{{"code", to_string(e.code())}, {"message", e.what()}};
    }
    lines += j.dump() + "\n";
  }
  emit(o, c.output_dir ? std::optional(*c.output_dir / "facts.jsonl") : std::nullopt, lines, out);
  return failed ? kExitRuntime : kExitOk;
}

std::map<std::string, std::string> backend_ids(const ChatBackend& judge, const NliBackend& nli) {
  return {{"judge", judge.backend_id() + ":" + judge.model_id()}, {"nli", nli.backend_id() + ":" + nli.model_id()}};
}

void attach_human_eval(FactualityReport& report, const RunConfig& c, int bins) {
  if (!c.annotations) return;
  auto annotations = read_annotations_csv(c.annotations->string());
  report.human_eval = evaluate_against_humans(report, annotations, Binning::equal_width(bins));
}

int cmd_verify(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  c.validate();
  auto records = load_records(c);
  auto index = c.mode == Mode::GroundingOnly ? std::nullopt : load_index(c);
  auto env = make_backend_env(c);
  auto judge = make_judge(c.judge, env);
  auto nli = make_nli(c.nli, env);
  RunStores stores;
  stores.index = index ? &*index : nullptr;
  stores.output_dir = c.output_dir;
  stores.backend_ids = backend_ids(*judge, *nli);
  auto report = run(records, c.pipeline_config(), Verifiers{*judge, *nli}, stores);
  attach_human_eval(report, c, o.bins);
  auto bytes = emit_report(report, ReportFormat::Json);
  if (c.output_dir) write_text(*c.output_dir / "report.json", bytes);
  if (o.out) write_text(*o.out, bytes);
  if (!c.output_dir && !o.out) out << bytes;
  return kExitOk;
}

int cmd_score(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  c.validate();
  auto records = load_records(c);
  fs::path trail = o.assessments ? fs::path(*o.assessments)
                                 : require(c.output_dir, "output directory") / "assessments.jsonl";
  if (!fs::exists(trail)) throw Error(ErrorCode::IoError, "no assessment trail at " + trail.string());
  auto results = read_results_jsonl(trail);
  RunManifest manifest;
  std::set<std::string> hashes;
  for (const auto& r : results) {
    hashes.insert(r.config_hash);
    for (const auto& f : r.failures) manifest.failures.push_back(f);
  }
  if (hashes.size() > 1)
    throw Error(ErrorCode::ConfigError, "assessment trail mixes runs with different configurations");
  if (!hashes.empty()) manifest.config_hash = *hashes.begin();
  manifest.started_at = manifest.finished_at = timestamp_now(c.fixed_timestamp);
  manifest.n_records = records.size();
  auto scores = scores_from_results(records, results, c.mode);
  auto report = aggregate(scores, std::move(manifest));
  attach_human_eval(report, c, o.bins);
  emit(o, std::nullopt, emit_report(report, o.format), out);
  return kExitOk;
}

int cmd_human_eval(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  if (!o.report) throw Error(ErrorCode::ConfigError, "human-eval needs --report");
  auto report = read_report(*o.report);
  auto annotations = read_annotations_csv(require(c.annotations, "annotations file (--annotations)").string());
  report.human_eval = evaluate_against_humans(report, annotations, Binning::equal_width(o.bins));
  for (const auto& w : report.human_eval->warnings) spdlog::warn("{}", w);
  emit(o, std::nullopt, emit_report(report, o.format), out);
  return kExitOk;
}

int cmd_report(const Options& o, std::ostream& out) {
  auto format = parse_report_format(o.format);
  std::vector<FactualityReport> reports;
  for (const auto& in : o.inputs) reports.push_back(read_report(in));
  auto report = reports.size() == 1 ? reports.front() : merge_reports(reports);
  emit(o, std::nullopt, emit_report(report, format), out);
  return kExitOk;
}

int cmd_convert(const Options& o, std::ostream& out) {
  auto dataset = parse_dataset_name(o.dataset);
  auto samples = convert_dataset(dataset, o.input);
  if (!o.out) throw Error(ErrorCode::ConfigError, "convert-dataset needs --out");
  fs::path dst(*o.out);
  if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
  write_samples_jsonl(dst.string(), dataset, samples);
  out << fmt::format("{} {} samples\n", samples.size(), to_string(dataset));
  return kExitOk;
}

int cmd_stats(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  auto records = load_records(c);
  out << "| Task | n | source words | generated words |\n|---|---:|---:|---:|\n";
  for (const auto& [task, s] : corpus_stats(records))
    out << fmt::format("| {} | {} | {:.1f} | {:.1f} |\n", to_string(task), s.n, s.source_words, s.generated_words);
  return kExitOk;
}

struct App {
  CLI::App app{"Fact-checking pipeline and benchmark runner for LLM-generated medical text", "medfact"};
  Options o;
  std::vector<std::pair<CLI::App*, int (*)(const Options&, std::ostream&)>> commands;

  App() {
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    auto add_config = [&](CLI::App* s) { s->add_option("-c,--config", o.config, "YAML config file")->check(CLI::ExistingFile); };
    auto add_run = [&](CLI::App* s) {
      s->add_option("--generations", o.generations, "Generation records JSONL");
      s->add_option("--output-dir", o.output_dir, "Directory for run outputs");
      s->add_option("--cache-dir", o.cache_dir, "Response cache directory");
      s->add_option("--concurrency", o.concurrency, "In-flight backend call limit")->check(CLI::PositiveNumber);
      s->add_option("--fixed-timestamp", o.fixed_timestamp, "Timestamp written to manifests");
    };
    auto add_pipeline = [&](CLI::App* s) {
      s->add_option("--mode", o.mode, "hybrid | grounding-only | wikipedia-only");
      s->add_option("--index", o.index, "Serialized passage index");
      s->add_option("--corpus", o.corpus, "Corpus JSONL (indexed in memory when no index is given)");
      s->add_option("-k,--top-k", o.k, "Passages retrieved per fact");
      s->add_option("--chunk-size", o.chunk_size, "Words per chunk");
      s->add_option("--overlap", o.overlap, "Overlapping words between chunks");
      s->add_option("--max-facts", o.max_facts, "Cap on atomic facts per generation");
      s->add_option("--nli-direction", o.nli_direction, "evidence-premise | fact-premise");
    };

    auto* ingest = app.add_subcommand("ingest-corpus", "Convert a Wikipedia dump into corpus JSONL and a passage index");
    add_config(ingest);
    ingest->add_option("--dump", o.dump, "Dump file")->required()->check(CLI::ExistingFile);
    ingest->add_option("--format", o.dump_format, "jsonl | factscore-sqlite");
    ingest->add_option("--corpus-out", o.corpus_out, "Corpus JSONL to write");
    ingest->add_option("--index-out", o.index_out, "Passage index to write");
    ingest->add_option("--chunk-size", o.chunk_size, "Words per chunk");
    ingest->add_option("--overlap", o.overlap, "Overlapping words between chunks");
    commands.emplace_back(ingest, &cmd_ingest);

    auto* generate = app.add_subcommand("generate", "Sample datasets, render task prompts and collect generations");
    add_config(generate);
    add_run(generate);
    generate->add_option("--task", o.tasks, "Tasks to run (repeatable)");
    generate->add_option("--model", o.models, "Models to run (repeatable)");
    generate->add_option("--samples", o.samples, "Samples per task");
    generate->add_option("--seed", o.seed, "Sampling seed");
    generate->add_option("-o,--out", o.out, "Generation records JSONL to write");
    commands.emplace_back(generate, &cmd_generate);

    auto* decompose = app.add_subcommand("decompose", "Split generations into atomic facts");
    add_config(decompose);
    add_run(decompose);
    decompose->add_option("--max-facts", o.max_facts, "Cap on atomic facts per generation");
    decompose->add_option("-o,--out", o.out, "Facts JSONL to write");
    commands.emplace_back(decompose, &cmd_decompose);

    auto* verify = app.add_subcommand("verify", "Run the full fact-checking pipeline and write a report");
    add_config(verify);
    add_run(verify);
    add_pipeline(verify);
    verify->add_option("--annotations", o.annotations, "Human annotation CSV to compare against");
    verify->add_option("--bins", o.bins, "Bins for Cohen's kappa")->check(CLI::PositiveNumber);
    verify->add_option("-o,--out", o.out, "Report JSON to write");
    commands.emplace_back(verify, &cmd_verify);

    auto* score = app.add_subcommand("score", "Rebuild a report from a stored assessment trail");
    add_config(score);
    add_run(score);
    score->add_option("--mode", o.mode, "Mode the trail was produced with");
    score->add_option("--assessments", o.assessments, "Assessment trail JSONL");
    score->add_option("--annotations", o.annotations, "Human annotation CSV to compare against");
    score->add_option("--bins", o.bins, "Bins for Cohen's kappa")->check(CLI::PositiveNumber);
    score->add_option("--format", o.format, "json | csv | markdown");
    score->add_option("-o,--out", o.out, "Output file");
    commands.emplace_back(score, &cmd_score);

    auto* human = app.add_subcommand("human-eval", "Agreement and correlation against human annotations");
    add_config(human);
    human->add_option("--report", o.report, "Report JSON")->check(CLI::ExistingFile);
    human->add_option("--annotations", o.annotations, "Annotation CSV (generation_id,annotator_id,score)");
    human->add_option("--bins", o.bins, "Bins for Cohen's kappa")->check(CLI::PositiveNumber);
    human->add_option("--format", o.format, "json | csv | markdown");
    human->add_option("-o,--out", o.out, "Output file");
    commands.emplace_back(human, &cmd_human_eval);

    auto* report = app.add_subcommand("report", "Render one or more reports as JSON, CSV or Markdown");
    report->add_option("-i,--input", o.inputs, "Report JSON (repeatable; several are merged)")->required()->check(CLI::ExistingFile);
    report->add_option("-f,--format", o.format, "json | csv | markdown");
    report->add_option("-o,--out", o.out, "Output file");
    commands.emplace_back(report, &cmd_report);

    auto* convert = app.add_subcommand("convert-dataset", "Convert a public dataset file into the benchmark JSONL");
    convert->add_option("--dataset", o.dataset, "pubmed | plos | bioasq")->required();
    convert->add_option("--input", o.input, "Public distribution file")->required()->check(CLI::ExistingFile);
    convert->add_option("-o,--out", o.out, "JSONL to write")->required();
    commands.emplace_back(convert, &cmd_convert);

    auto* stats = app.add_subcommand("stats", "Average word counts per task");
    add_config(stats);
    stats->add_option("--generations", o.generations, "Generation records JSONL");
    commands.emplace_back(stats, &cmd_stats);

    app.add_subcommand("reference", "Print the command and config reference");
  }
};

std::string escape_pipes(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string cli_reference() {
  App a;
  std::string out = "# medfact command reference\n\n";
  out += "Exit codes: 0 success, 1 configuration or usage error, 2 run-time failure.\n";
  out += "Errors are printed to standard error as `error[<Code>]: <message>`.\n\n";
  for (const auto* sub : a.app.get_subcommands({})) {
    out += "## " + sub->get_name() + "\n\n" + sub->get_description() + "\n\n";
    auto opts = sub->get_options([](const CLI::Option* op) { return op->get_name() != "--help" && op->get_name() != "--help-all"; });
    if (opts.empty()) continue;
    out += "| Flag | Description |\n|---|---|\n";
    for (const auto* op : opts)
      out += "| `" + op->get_name(false, true) + "` | " + escape_pipes(op->get_description()) + " |\n";
    out += "\n";
  }
  out += "## Config keys (YAML)\n\n| Key | Meaning |\n|---|---|\n";
  for (const auto& [key, meaning] : config_reference())
    out += "| `" + key + "` | " + escape_pipes(meaning) + " |\n";
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  App a;
  if (!args.empty() && !args.front().empty() && args.front()[0] != '-') {
    bool known = false;
    for (const auto* sub : a.app.get_subcommands({})) known |= sub->get_name() == args.front();
    if (!known) {
      err << "error[Usage]: unknown subcommand '" << args.front() << "'\n\n" << a.app.help();
      return kExitConfig;
    }
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    a.app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << a.app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << a.app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error[Usage]: " << e.what() << "\n\n" << a.app.help();
    return kExitConfig;
  }

  try {
    if (a.app.got_subcommand("reference")) {
      out << cli_reference();
      return kExitOk;
    }
    for (const auto& [sub, fn] : a.commands)
      if (sub->parsed()) return fn(a.o, out);
  } catch (const Error& e) {
    err << "error[" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error[Internal]: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << a.app.help();
  return kExitConfig;
}

}  // namespace medfact
