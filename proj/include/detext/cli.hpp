#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <numeric>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "detext/bucket.hpp"
#include "detext/corpus.hpp"
#include "detext/error.hpp"
#include "detext/eval.hpp"
#include "detext/features.hpp"
#include "detext/http_backend.hpp"
#include "detext/record.hpp"
#include "detext/rephrase.hpp"
#include "detext/rng.hpp"
#include "detext/svm.hpp"
#include "detext/text.hpp"

namespace detext::cli {

inline constexpr const char* kToolName = "detext";
inline constexpr const char* kVersion = "0.1.0";

// Resolved settings for one invocation; every field is a flag, and every flag
// can come from the --config key=value file under the same name.
struct RunConfig {
  // shared
  std::string bucket_spec_path;
  std::uint64_t seed = 42;
  int threads = 0;  // 0 = per-module defaults
  bool strict = false;
  std::string corpus_path;

  // build-corpus
  std::vector<std::string> inputs;  // path:source[:chunklen]
  int target_per_bucket = 0;        // 0 = keep every record
  std::string ratios = "0.8,0.1,0.1";
  std::string out_dir = ".";

  // rephrase
  std::string out_path;
  std::string backend = "mock";
  std::string backend_url;
  std::string model = "gpt-3.5-turbo";
  std::string checkpoint_path;
  std::string prompt_template_path;
  int workers = 4;
  int rate_limit_ms = 100;
  int max_attempts = 3;
  int retry_delay_ms = 100;
  std::optional<double> temperature;

  // train
  std::string model_out = "model.svm";
  std::string vocab_out = "vocab.tsv";
  double c = 1.0;
  std::string gamma = "scale";
  double tol = 1e-3;
  int max_passes = 1000;
  int min_df = 2;
  int max_features = 50000;
  int cache_mb = 256;
  long max_train_records = 0;  // 0 = train on everything

  // evaluate / score
  std::string model_file;
  std::string vocab_file;
  std::string scores_path;
  std::string report_out;
  std::string format = "csv";
  double threshold = 0.0;
  bool threshold_set = false;  // flag presence, for external-file precedence
};

struct InputSpec {
  std::string path;
  Source source = Source::other;
  std::optional<int> chunk_len;
};

// path:source[:chunklen]; the source tag and optional chunk length are read
// from the right so paths may contain colons.
inline InputSpec parse_input_spec(const std::string& s) {
  const auto fail = [&]() -> InputSpec {
    throw ConfigError("--input expects path:source[:chunklen], got \"" + s + "\"");
  };
  const auto last = s.rfind(':');
  if (last == std::string::npos || last == 0 || last + 1 == s.size()) return fail();
  const std::string tail = s.substr(last + 1);
  const bool tail_numeric =
      std::all_of(tail.begin(), tail.end(), [](unsigned char ch) { return std::isdigit(ch); });
  if (tail_numeric) {
    const auto prev = s.rfind(':', last - 1);
    if (prev == std::string::npos || prev == 0) return fail();
    InputSpec spec;
    spec.path = s.substr(0, prev);
    try {
      spec.source = parse_source(s.substr(prev + 1, last - prev - 1));
    } catch (const DataError&) {
      return fail();
    }
    spec.chunk_len = std::stoi(tail);
    return spec;
  }
  InputSpec spec;
  spec.path = s.substr(0, last);
  try {
    spec.source = parse_source(tail);
  } catch (const DataError&) {
    return fail();
  }
  return spec;
}

inline std::array<double, 3> parse_ratios(const std::string& s) {
  std::array<double, 3> out{};
  std::stringstream ss(s);
  std::string cell;
  int i = 0;
  while (std::getline(ss, cell, ',')) {
    if (i >= 3) {
      i = 99;
      break;
    }
    char* end = nullptr;
    out[i] = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0') i = 99;
    ++i;
  }
  if (i != 3) {
    throw ConfigError("--ratios expects three comma-separated fractions, got \"" + s + "\"");
  }
  return out;
}

namespace detail {

inline BucketSpec load_bucket_spec(const RunConfig& cfg) {
  if (cfg.bucket_spec_path.empty()) return BucketSpec::builtin_default();
  return BucketSpec::from_file(cfg.bucket_spec_path);
}

inline Corpus load_corpus_file(const std::string& path, BucketSpec spec) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open corpus file: " + path);
  return load_corpus(f, std::move(spec));
}

inline std::string file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open file for digest: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string data = buf.str();
  char hex[20];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(data)));
  return std::string("fnv1a64:") + hex;
}

inline void write_provenance(const std::string& path,
                             const std::vector<std::string>& lines) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw PersistenceError("cannot write provenance file: " + path);
  for (const auto& line : lines) f << line << "\n";
  f.flush();
  if (!f) throw PersistenceError("provenance write failed: " + path);
}

// Common head of every provenance block. Worker counts are omitted: they
// never influence output bytes.
inline std::vector<std::string> provenance_head(const char* command,
                                                const RunConfig& cfg) {
  std::vector<std::string> lines;
  lines.push_back(std::string("tool=") + kToolName + "/" + kVersion);
  lines.push_back(std::string("command=") + command);
  lines.push_back("bucket-spec=" +
                  (cfg.bucket_spec_path.empty() ? std::string("builtin")
                                                : cfg.bucket_spec_path));
  lines.push_back("seed=" + std::to_string(cfg.seed));
  return lines;
}

inline int effective_rephrase_workers(const RunConfig& cfg) {
  if (cfg.threads > 0) return std::min(cfg.workers, cfg.threads);
  return cfg.workers;
}

inline int effective_kernel_threads(const RunConfig& cfg) {
  return cfg.threads > 0 ? cfg.threads : 1;
}

inline std::vector<ScoredRecord> score_with_model(const Corpus& corpus,
                                                  const SvmModel& model,
                                                  const Vocabulary& vocab) {
  std::vector<ScoredRecord> scored;
  scored.reserve(corpus.records.size());
  for (const auto& rec : corpus.records) {
    if (!rec.bucket) throw DataError("record " + rec.id + " has no bucket");
    ScoredRecord sr;
    sr.record_id = rec.id;
    sr.label = rec.label;
    sr.bucket = *rec.bucket;
    sr.score = decision_value(model, vectorize(tokenize(rec.text), vocab));
    scored.push_back(std::move(sr));
  }
  return scored;
}

inline void cmd_build_corpus(const RunConfig& cfg) {
  if (cfg.inputs.empty()) {
    throw ConfigError("build-corpus: at least one --input is required");
  }
  const BucketSpec spec = load_bucket_spec(cfg);
  const std::array<double, 3> ratios = parse_ratios(cfg.ratios);

  Corpus corpus;
  corpus.bucket_spec = spec;
  std::vector<std::string> input_notes;
  for (std::size_t i = 0; i < cfg.inputs.size(); ++i) {
    const InputSpec input = parse_input_spec(cfg.inputs[i]);
    std::ifstream f(input.path, std::ios::binary);
    if (!f) throw ConfigError("cannot open input file: " + input.path);
    char prefix[64];
    std::snprintf(prefix, sizeof(prefix), "%s%02zu",
                  std::string(to_string(input.source)).c_str(), i);
    auto records = ingest_source(f, input.source, spec, input.chunk_len, prefix);
    std::ostringstream note;
    note << "input." << i << "=" << input.path << " source=" << to_string(input.source);
    if (input.chunk_len) note << " chunk=" << *input.chunk_len;
    note << " digest=" << file_digest(input.path) << " records=" << records.size();
    input_notes.push_back(note.str());
    for (auto& r : records) corpus.records.push_back(std::move(r));
  }
  sort_records_by_id(corpus.records);
  validate_corpus(corpus);

  if (cfg.target_per_bucket > 0) {
    corpus = normalize_corpus(corpus, cfg.target_per_bucket, cfg.seed);
  }
  const SplitSet splits = split_corpus(corpus, ratios, cfg.seed);

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const auto out = [&](const char* name) { return (fs::path(cfg.out_dir) / name).string(); };
  save_corpus(corpus, out("corpus.jsonl"));
  save_corpus(splits.train, out("train.jsonl"));
  save_corpus(splits.test, out("test.jsonl"));
  save_corpus(splits.val, out("val.jsonl"));

  auto lines = provenance_head("build-corpus", cfg);
  lines.push_back("ratios=" + cfg.ratios);
  lines.push_back("target-per-bucket=" + std::to_string(cfg.target_per_bucket));
  for (const auto& note : input_notes) lines.push_back(note);
  for (const auto& note : corpus.provenance) lines.push_back("corpus." + note);
  lines.push_back("output.corpus=corpus.jsonl records=" +
                  std::to_string(corpus.records.size()));
  lines.push_back("output.train=train.jsonl records=" +
                  std::to_string(splits.train.records.size()));
  lines.push_back("output.test=test.jsonl records=" +
                  std::to_string(splits.test.records.size()));
  lines.push_back("output.val=val.jsonl records=" +
                  std::to_string(splits.val.records.size()));
  write_provenance(out("provenance.txt"), lines);

  std::cerr << "build-corpus: " << corpus.records.size() << " records ("
            << splits.train.records.size() << " train, "
            << splits.test.records.size() << " test, "
            << splits.val.records.size() << " val) -> " << cfg.out_dir << "\n";
}

inline void cmd_rephrase(const RunConfig& cfg) {
  if (cfg.corpus_path.empty()) throw ConfigError("rephrase: --corpus is required");
  if (cfg.out_path.empty()) throw ConfigError("rephrase: --out is required");
  const BucketSpec spec = load_bucket_spec(cfg);
  const Corpus corpus = load_corpus_file(cfg.corpus_path, spec);

  PromptTemplate prompt_template =
      cfg.prompt_template_path.empty()
          ? PromptTemplate{}
          : PromptTemplate::from_file(cfg.prompt_template_path);

  std::unique_ptr<ChatBackend> backend;
  if (cfg.backend == "mock") {
    backend = std::make_unique<MockBackend>(cfg.seed, prompt_template);
  } else if (cfg.backend == "http") {
    if (cfg.backend_url.empty()) {
      throw ConfigError("rephrase: --backend-url is required for the http backend");
    }
    HttpBackendConfig http;
    http.base_url = cfg.backend_url;
    http.model = cfg.model;
    http.api_key = api_key_from_env();
    http.min_interval_ms = cfg.rate_limit_ms;
    http.temperature = cfg.temperature;
    backend = std::make_unique<HttpBackend>(std::move(http));
  } else {
    throw ConfigError("rephrase: unknown backend \"" + cfg.backend + "\"");
  }

  const std::string checkpoint =
      cfg.checkpoint_path.empty() ? cfg.out_path + ".checkpoint" : cfg.checkpoint_path;
  CheckpointStore store(checkpoint);
  const std::size_t resumed = store.size();

  GeneratePairsOptions options;
  options.retry = RetryPolicy{cfg.max_attempts, cfg.retry_delay_ms};
  options.workers = effective_rephrase_workers(cfg);
  options.prompt_template = prompt_template;
  const Corpus paired = generate_pairs(corpus, *backend, store, options, std::cerr);
  save_corpus(paired, cfg.out_path);

  auto lines = provenance_head("rephrase", cfg);
  lines.push_back("corpus=" + cfg.corpus_path + " digest=" + file_digest(cfg.corpus_path));
  lines.push_back("backend=" + cfg.backend);
  if (cfg.backend == "http") {
    lines.push_back("backend-url=" + cfg.backend_url);
    lines.push_back("model=" + cfg.model);
  }
  lines.push_back("prompt-template=" +
                  (cfg.prompt_template_path.empty() ? std::string("builtin")
                                                    : cfg.prompt_template_path));
  for (const auto& note : paired.provenance) lines.push_back("corpus." + note);
  lines.push_back("output=" + cfg.out_path + " records=" +
                  std::to_string(paired.records.size()));
  write_provenance(cfg.out_path + ".provenance", lines);

  std::cerr << "rephrase: " << corpus.records.size() << " human records, "
            << (store.size() - resumed) << " new completions, "
            << paired.records.size() << " records out -> " << cfg.out_path << "\n";
}

inline void cmd_train(const RunConfig& cfg) {
  if (cfg.corpus_path.empty()) throw ConfigError("train: --corpus is required");
  const BucketSpec spec = load_bucket_spec(cfg);
  Corpus corpus = load_corpus_file(cfg.corpus_path, spec);
  if (corpus.records.empty()) throw DataError("train: corpus is empty");

  std::size_t n_human = 0, n_machine = 0;
  for (const auto& r : corpus.records) {
    (r.label == Label::human ? n_human : n_machine)++;
  }
  if (n_human == 0 || n_machine == 0) {
    throw DataError("train: training corpus contains a single class");
  }

  if (cfg.max_train_records > 0 &&
      static_cast<std::size_t>(cfg.max_train_records) < corpus.records.size()) {
    std::vector<std::size_t> order(corpus.records.size());
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(mix64(cfg.seed, fnv1a64("train.subsample")));
    shuffle(order, rng);
    order.resize(static_cast<std::size_t>(cfg.max_train_records));
    std::vector<TextRecord> kept;
    kept.reserve(order.size());
    for (std::size_t i : order) kept.push_back(std::move(corpus.records[i]));
    corpus.records = std::move(kept);
    sort_records_by_id(corpus.records);
  }

  std::vector<std::vector<std::string>> docs;
  docs.reserve(corpus.records.size());
  for (const auto& r : corpus.records) docs.push_back(tokenize(r.text));

  VocabConfig vocab_config;
  vocab_config.min_df = cfg.min_df;
  vocab_config.max_features = cfg.max_features;
  const Vocabulary vocab = build_vocabulary(docs, vocab_config);

  std::vector<SparseVector> vectors;
  vectors.reserve(docs.size());
  for (const auto& doc : docs) vectors.push_back(vectorize(doc, vocab));
  std::vector<int> labels;
  labels.reserve(corpus.records.size());
  for (const auto& r : corpus.records) {
    labels.push_back(r.label == Label::machine ? 1 : -1);
  }

  SvmConfig svm_config;
  svm_config.c = cfg.c;
  svm_config.gamma = GammaSetting::parse(cfg.gamma);
  svm_config.tol = cfg.tol;
  svm_config.max_passes = cfg.max_passes;
  svm_config.cache_bytes = static_cast<std::size_t>(cfg.cache_mb) << 20;
  svm_config.seed = cfg.seed;
  svm_config.threads = effective_kernel_threads(cfg);
  const SvmModel model = train_smo(vectors, labels, vocab.size(), svm_config);

  model.save(cfg.model_out);
  vocab.save(cfg.vocab_out);

  auto lines = provenance_head("train", cfg);
  lines.push_back("corpus=" + cfg.corpus_path + " digest=" + file_digest(cfg.corpus_path));
  lines.push_back("records=" + std::to_string(corpus.records.size()));
  lines.push_back("max-train-records=" + std::to_string(cfg.max_train_records));
  lines.push_back("min-df=" + std::to_string(cfg.min_df));
  lines.push_back("max-features=" + std::to_string(cfg.max_features));
  lines.push_back("vocabulary=" + cfg.vocab_out + " terms=" + std::to_string(vocab.size()));
  lines.push_back("c=" + std::to_string(cfg.c));
  lines.push_back("gamma=" + cfg.gamma);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "resolved-gamma=%.17g", model.gamma);
  lines.push_back(buf);
  lines.push_back("tol=" + std::to_string(cfg.tol));
  lines.push_back("max-passes=" + std::to_string(cfg.max_passes));
  lines.push_back("support-vectors=" + std::to_string(model.support_vectors.size()));
  lines.push_back("output=" + cfg.model_out);
  write_provenance(cfg.model_out + ".provenance", lines);

  std::cerr << "train: " << corpus.records.size() << " records, " << vocab.size()
            << " terms, " << model.support_vectors.size() << " support vectors, "
            << model.meta.iterations << " steps -> " << cfg.model_out << "\n";
}

inline void cmd_evaluate(const RunConfig& cfg) {
  if (cfg.corpus_path.empty()) throw ConfigError("evaluate: --corpus is required");
  const BucketSpec spec = load_bucket_spec(cfg);
  const Corpus corpus = load_corpus_file(cfg.corpus_path, spec);

  std::vector<ScoredRecord> scored;
  double threshold = cfg.threshold;
  std::string source_note;
  if (!cfg.scores_path.empty()) {
    std::ifstream f(cfg.scores_path, std::ios::binary);
    if (!f) throw ConfigError("cannot open score file: " + cfg.scores_path);
    const ExternalScores external = ingest_external_scores(f, corpus, cfg.strict);
    scored = external.records;
    if (!cfg.threshold_set && external.threshold) threshold = *external.threshold;
    source_note = "scores=" + cfg.scores_path + " digest=" + file_digest(cfg.scores_path);
  } else {
    if (cfg.model_file.empty() || cfg.vocab_file.empty()) {
      throw ConfigError("evaluate: either --scores or both --model-file and --vocab-file are required");
    }
    const SvmModel model = SvmModel::load_file(cfg.model_file);
    const Vocabulary vocab = Vocabulary::load_file(cfg.vocab_file);
    scored = score_with_model(corpus, model, vocab);
    source_note = "model=" + cfg.model_file + " digest=" + file_digest(cfg.model_file) +
                  " vocab=" + cfg.vocab_file;
  }

  const RangeReport report = evaluate_by_range(scored, spec, threshold);
  const ReportFormat fmt = parse_report_format(cfg.format);

  char buf[160];
  const auto metric = [](const std::optional<double>& v) {
    return v ? *v : std::nan("");
  };
  std::snprintf(buf, sizeof(buf),
                "evaluate: aggregate auc=%.6f f1=%.6f (threshold=%g, %zu human, %zu machine)",
                metric(report.aggregate.auc), metric(report.aggregate.f1), threshold,
                report.aggregate.n_human, report.aggregate.n_machine);
  std::cerr << buf << "\n";
  const auto mean = range_mean_auc(report);
  std::snprintf(buf, sizeof(buf), "evaluate: range-mean auc=%.6f (pooled aggregate reported above)",
                metric(mean));
  std::cerr << buf << "\n";

  if (cfg.report_out.empty()) {
    emit_report(report, fmt, std::cout);
    return;
  }
  emit_report(report, fmt, cfg.report_out);
  auto lines = provenance_head("evaluate", cfg);
  lines.push_back("corpus=" + cfg.corpus_path + " digest=" + file_digest(cfg.corpus_path));
  lines.push_back(source_note);
  std::snprintf(buf, sizeof(buf), "threshold=%.17g", threshold);
  lines.push_back(buf);
  lines.push_back("format=" + cfg.format);
  lines.push_back("strict=" + std::string(cfg.strict ? "1" : "0"));
  lines.push_back("output=" + cfg.report_out);
  write_provenance(cfg.report_out + ".provenance", lines);
  std::cerr << "evaluate: report -> " << cfg.report_out << "\n";
}

inline void cmd_score(const RunConfig& cfg) {
  if (cfg.model_file.empty() || cfg.vocab_file.empty()) {
    throw ConfigError("score: --model-file and --vocab-file are required");
  }
  const SvmModel model = SvmModel::load_file(cfg.model_file);
  const Vocabulary vocab = Vocabulary::load_file(cfg.vocab_file);
  std::string line;
  while (std::getline(std::cin, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const double value = decision_value(model, vectorize(tokenize(line), vocab));
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    std::cout << buf << "\n";
  }
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
  RunConfig cfg;
  CLI::App app{"length-bucketed rephrase-detection toolkit: corpus building, "
               "TF-IDF + RBF-SVM training, and per-range AUC-ROC/F1 evaluation"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kVersion);
  app.set_config("--config", "", "key=value configuration file; flags override");
  app.require_subcommand(1);

  app.add_option("--bucket-spec", cfg.bucket_spec_path,
                 "word-count ranges file, one lo-hi per line (builtin 10..200 "
                 "ranges when omitted)");
  app.add_option("--seed", cfg.seed, "seed for sampling, splits, the mock backend, and the optimizer sweep")
      ->capture_default_str();
  app.add_option("--threads", cfg.threads,
                 "worker cap for kernel evaluation and concurrent requests (0 = per-module defaults)")
      ->capture_default_str();
  app.add_flag("--strict", cfg.strict, "fail when an external score file misses corpus records");
  app.add_option("--corpus", cfg.corpus_path, "corpus file (one record per line)");

  app.add_option("--input", cfg.inputs,
                 "raw text input as path:source[:chunklen]; repeatable; source "
                 "one of twitter|football|gutenberg|pubmedqa|squad|synthetic|other")
      ->allow_extra_args(false);
  app.add_option("--target-per-bucket", cfg.target_per_bucket,
                 "cap records kept per bucket before splitting (0 keeps everything)")
      ->capture_default_str();
  app.add_option("--ratios", cfg.ratios, "train,test,val fractions")->capture_default_str();
  app.add_option("--out-dir", cfg.out_dir, "output directory for corpus and split files")
      ->capture_default_str();

  app.add_option("--out", cfg.out_path, "output corpus file for rephrase");
  app.add_option("--backend", cfg.backend, "rephrase backend: mock or http")
      ->check(CLI::IsMember({"mock", "http"}))
      ->capture_default_str();
  app.add_option("--backend-url", cfg.backend_url, "chat endpoint base url (http backend)");
  app.add_option("--model", cfg.model, "chat model name sent to the http backend")
      ->capture_default_str();
  app.add_option("--checkpoint", cfg.checkpoint_path,
                 "rephrase checkpoint file (default: <out>.checkpoint)");
  app.add_option("--prompt-template", cfg.prompt_template_path,
                 "file holding the prompt template with a {sentence} placeholder");
  app.add_option("--workers", cfg.workers, "concurrent rephrase requests")
      ->capture_default_str();
  app.add_option("--rate-limit-ms", cfg.rate_limit_ms,
                 "minimum interval between http request starts")
      ->capture_default_str();
  app.add_option("--max-attempts", cfg.max_attempts, "attempts per rephrase request")
      ->capture_default_str();
  app.add_option("--retry-delay-ms", cfg.retry_delay_ms,
                 "base delay before a retry; doubles per attempt")
      ->capture_default_str();
  app.add_option("--temperature", cfg.temperature,
                 "sampling temperature for the http backend (endpoint default when omitted)");

  app.add_option("--model-out", cfg.model_out, "trained model output path")
      ->capture_default_str();
  app.add_option("--vocab-out", cfg.vocab_out, "fitted vocabulary output path")
      ->capture_default_str();
  app.add_option("--c", cfg.c, "soft-margin penalty")->capture_default_str();
  app.add_option("--gamma", cfg.gamma, "rbf kernel width: a number or \"scale\"")
      ->capture_default_str();
  app.add_option("--tol", cfg.tol, "optimizer tolerance")->capture_default_str();
  app.add_option("--max-passes", cfg.max_passes, "optimizer pass cap")->capture_default_str();
  app.add_option("--min-df", cfg.min_df, "minimum document frequency for vocabulary terms")
      ->capture_default_str();
  app.add_option("--max-features", cfg.max_features,
                 "vocabulary size cap, highest document frequency first (0 = unlimited)")
      ->capture_default_str();
  app.add_option("--cache-mb", cfg.cache_mb, "kernel row cache budget in MiB")
      ->capture_default_str();
  app.add_option("--max-train-records", cfg.max_train_records,
                 "subsample the training corpus to this many records (0 = all)")
      ->capture_default_str();

  app.add_option("--model-file", cfg.model_file, "trained model to load");
  app.add_option("--vocab-file", cfg.vocab_file, "fitted vocabulary to load");
  app.add_option("--scores", cfg.scores_path,
                 "external score file (record_id,score csv) instead of a model");
  app.add_option("--report-out", cfg.report_out, "report output path (stdout when omitted)");
  app.add_option("--format", cfg.format, "report format: csv or structured")
      ->check(CLI::IsMember({"csv", "structured"}))
      ->capture_default_str();
  auto* threshold_opt =
      app.add_option("--threshold", cfg.threshold,
                     "decision threshold for F1 (external files may declare their own)")
          ->capture_default_str();

  auto* sub_build =
      app.add_subcommand("build-corpus", "ingest raw text, bucket by length, normalize, split");
  auto* sub_rephrase =
      app.add_subcommand("rephrase", "generate the machine half of each pair, with checkpointed resume");
  auto* sub_train =
      app.add_subcommand("train", "fit the vocabulary and train the rbf-svm detector");
  auto* sub_evaluate =
      app.add_subcommand("evaluate", "score a corpus with a model or external scores and report per-range auc/f1");
  auto* sub_score = app.add_subcommand("score", "print a decision value per line of standard input");
  for (auto* sub : {sub_build, sub_rephrase, sub_train, sub_evaluate, sub_score}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  cfg.threshold_set = threshold_opt->count() > 0;

  try {
    if (sub_build->parsed()) detail::cmd_build_corpus(cfg);
    else if (sub_rephrase->parsed()) detail::cmd_rephrase(cfg);
    else if (sub_train->parsed()) detail::cmd_train(cfg);
    else if (sub_evaluate->parsed()) detail::cmd_evaluate(cfg);
    else if (sub_score->parsed()) detail::cmd_score(cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back(kToolName);
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace detext::cli
