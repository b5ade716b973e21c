#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "detext/corpus.hpp"
#include "detext/error.hpp"
#include "detext/record.hpp"
#include "detext/rng.hpp"
#include "detext/text.hpp"

namespace detext {

// Instruction sent to the chat endpoint; {sentence} is replaced verbatim.
inline constexpr const char* kDefaultPromptTemplate =
    "Please rephrase this sentence, make sure the words length is equal to "
    "the given sentence: {sentence}";

class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text = kDefaultPromptTemplate)
      : text_(std::move(text)) {
    const auto pos = text_.find("{sentence}");
    if (pos == std::string::npos ||
        text_.find("{sentence}", pos + 1) != std::string::npos) {
      throw ConfigError("prompt template must contain {sentence} exactly once");
    }
    prefix_ = text_.substr(0, pos);
    suffix_ = text_.substr(pos + 10);
  }

  static PromptTemplate from_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open prompt template: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    std::string text = trim(buf.str());
    if (text.empty()) throw ConfigError("prompt template file is empty: " + path);
    return PromptTemplate(std::move(text));
  }

  const std::string& text() const { return text_; }

  std::string render(const std::string& sentence) const {
    return prefix_ + sentence + suffix_;
  }

  // Inverse of render; empty when the prompt was built from another template.
  std::optional<std::string> extract(const std::string& prompt) const {
    if (prompt.size() < prefix_.size() + suffix_.size()) return std::nullopt;
    if (prompt.compare(0, prefix_.size(), prefix_) != 0) return std::nullopt;
    if (prompt.compare(prompt.size() - suffix_.size(), suffix_.size(), suffix_) != 0) {
      return std::nullopt;
    }
    return prompt.substr(prefix_.size(),
                         prompt.size() - prefix_.size() - suffix_.size());
  }

 private:
  std::string text_;
  std::string prefix_;
  std::string suffix_;
};

inline std::string build_prompt(const std::string& sentence) {
  static const PromptTemplate kDefault{};
  return kDefault.render(sentence);
}

enum class BackendKind { http, mock };

inline std::string to_string(BackendKind k) {
  return k == BackendKind::http ? "http" : "mock";
}

inline BackendKind parse_backend_kind(const std::string& s) {
  if (s == "http") return BackendKind::http;
  if (s == "mock") return BackendKind::mock;
  throw DataError("unknown backend kind: " + s);
}

struct RephraseRequest {
  std::string source_record_id;
  std::string prompt;
  std::size_t target_word_count = 0;
};

struct RephraseResult {
  std::string source_record_id;
  std::string machine_text;
  BackendKind backend = BackendKind::mock;
  int attempt_count = 1;
  std::int64_t received_at_ms = 0;

  bool operator==(const RephraseResult&) const = default;
};

// Completion source for one prompt. Implementations may throw TransportError
// (with the transient flag steering retries) or DataError on malformed
// responses; thread safety is required, generate_pairs shares one instance
// across workers.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  virtual BackendKind kind() const = 0;
};

// Deterministic word-level permutation with a fixed fraction of words
// replaced from a built-in list, keyed by (seed, sentence). Word count is
// preserved exactly.
inline std::string mock_rephrase(const std::string& sentence, std::uint64_t seed) {
  static const std::vector<std::string> kWordlist = {
      "aboard",  "absent",  "ballast", "beacon",  "candor",  "cascade",
      "drift",   "durable", "ember",   "enclave", "fathom",  "fervor",
      "gossamer", "granite", "harbor",  "hollow",  "ingot",   "isthmus",
      "jubilee", "keel",    "lantern", "ledger",  "meander", "mosaic",
      "nimbus",  "noble",   "obsidian", "orchard", "parapet", "pewter",
      "quarry",  "quiver",  "rampart", "russet",  "sable",   "saffron",
      "tandem",  "tether",  "umber",   "upland",  "vellum",  "verdant",
      "wharf",   "willow",  "xenon",   "yonder",  "zephyr",  "zenith",
  };
  std::vector<std::string_view> words = split_words(sentence);
  if (words.empty()) return sentence;
  SplitMix64 rng(mix64(seed, fnv1a64(sentence)));
  shuffle(words, rng);
  const std::size_t n_replace = static_cast<std::size_t>(
      std::llround(0.3 * static_cast<double>(words.size())));
  for (std::size_t k = 0; k < n_replace; ++k) {
    words[k] = kWordlist[rng.bounded(kWordlist.size())];
  }
  return join_words(words, 0, words.size());
}

class MockBackend : public ChatBackend {
 public:
  explicit MockBackend(std::uint64_t seed, PromptTemplate tmpl = PromptTemplate{})
      : seed_(seed), template_(std::move(tmpl)) {}

  std::string complete(const std::string& prompt) override {
    const auto sentence = template_.extract(prompt);
    if (!sentence) {
      throw DataError("mock backend: prompt does not match the configured template");
    }
    return mock_rephrase(*sentence, seed_);
  }

  BackendKind kind() const override { return BackendKind::mock; }

 private:
  std::uint64_t seed_;
  PromptTemplate template_;
};

struct RetryPolicy {
  int max_attempts = 3;
  int base_delay_ms = 100;
};

// One request with exponential backoff on transient transport failures.
// An empty completion is retried exactly once, then surfaced as a data error.
inline RephraseResult rephrase_one(const RephraseRequest& request,
                                   ChatBackend& backend,
                                   const RetryPolicy& policy) {
  if (policy.max_attempts < 1) throw ConfigError("retry policy: max_attempts < 1");
  int attempt = 0;
  bool empty_retried = false;
  std::optional<TransportError> last_transport;
  while (attempt < policy.max_attempts) {
    ++attempt;
    if (attempt > 1) {
      const auto delay = std::chrono::milliseconds(policy.base_delay_ms) *
                         (1LL << (attempt - 2));
      std::this_thread::sleep_for(delay);
    }
    std::string text;
    try {
      text = backend.complete(request.prompt);
    } catch (const TransportError& e) {
      if (!e.transient) throw;
      last_transport = e;
      continue;
    }
    if (trim(text).empty()) {
      if (!empty_retried) {
        empty_retried = true;
        --attempt;  // the empty-completion retry does not consume a transport attempt
        continue;
      }
      throw DataError("rephrase: backend returned an empty completion for record " +
                      request.source_record_id);
    }
    RephraseResult result;
    result.source_record_id = request.source_record_id;
    result.machine_text = std::move(text);
    result.backend = backend.kind();
    result.attempt_count = attempt;
    result.received_at_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::system_clock::now().time_since_epoch())
                                .count();
    return result;
  }
  throw TransportError("rephrase: retries exhausted for record " +
                           request.source_record_id + ": " +
                           (last_transport ? last_transport->what() : "no attempt made"),
                       last_transport ? last_transport->last_status : 0, false);
}

// Append-only line-delimited store of completed rephrases; reloads last-wins
// and compacts (sorted, deduplicated) on clean shutdown.
class CheckpointStore {
 public:
  explicit CheckpointStore(std::string path) : path_(std::move(path)) { load(); }

  const std::string& path() const { return path_; }

  bool contains(const std::string& id) const { return completed_.count(id) > 0; }

  const RephraseResult* find(const std::string& id) const {
    const auto it = completed_.find(id);
    return it == completed_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return completed_.size(); }

  const std::map<std::string, RephraseResult>& completed() const { return completed_; }

  // Fails fast when the store cannot accept appends.
  void ensure_writable() {
    std::ofstream f(path_, std::ios::binary | std::ios::app);
    if (!f) throw PersistenceError("checkpoint store is not writable: " + path_);
    f.flush();
    if (!f) throw PersistenceError("checkpoint store is not writable: " + path_);
  }

  void record(const RephraseResult& result) {
    std::ofstream f(path_, std::ios::binary | std::ios::app);
    if (!f) throw PersistenceError("checkpoint store append failed: " + path_);
    f << to_json_line(result) << "\n";
    f.flush();
    if (!f) throw PersistenceError("checkpoint store append failed: " + path_);
    completed_[result.source_record_id] = result;
  }

  // Rewrites the log as one sorted entry per id.
  void compact() {
    const std::string tmp = path_ + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw PersistenceError("checkpoint compact failed: " + tmp);
      for (const auto& [id, result] : completed_) f << to_json_line(result) << "\n";
      f.flush();
      if (!f) throw PersistenceError("checkpoint compact failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path_.c_str()) != 0) {
      throw PersistenceError("checkpoint compact: rename failed: " + path_);
    }
  }

 private:
  static std::string to_json_line(const RephraseResult& r) {
    nlohmann::ordered_json j;
    j["source_record_id"] = r.source_record_id;
    j["machine_text"] = r.machine_text;
    j["backend"] = to_string(r.backend);
    j["attempt_count"] = r.attempt_count;
    j["received_at_ms"] = r.received_at_ms;
    return j.dump();
  }

  void load() {
    std::ifstream f(path_, std::ios::binary);
    if (!f) return;  // first run: no store yet
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::ordered_json::parse(line);
        RephraseResult r;
        r.source_record_id = j.at("source_record_id").get<std::string>();
        r.machine_text = j.at("machine_text").get<std::string>();
        r.backend = parse_backend_kind(j.at("backend").get<std::string>());
        r.attempt_count = j.at("attempt_count").get<int>();
        r.received_at_ms = j.at("received_at_ms").get<std::int64_t>();
        completed_[r.source_record_id] = r;
      } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint store " + path_ + " line " +
                        std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  std::string path_;
  std::map<std::string, RephraseResult> completed_;
};

struct GeneratePairsOptions {
  RetryPolicy retry{};
  int workers = 4;
  PromptTemplate prompt_template{};
};

// Produces the paired corpus: every human record, plus one machine record per
// admissible rephrase (id = source id + "-m", word count and bucket recomputed
// from the returned text). Rephrases shorter than the word floor are dropped
// with a warning and a provenance flag on the retained human partner; longer
// than the cap are truncated like any ingested text. The store absorbs each
// result as it completes, so an interrupted run resumes where it stopped.
inline Corpus generate_pairs(const Corpus& corpus, ChatBackend& backend,
                             CheckpointStore& store,
                             const GeneratePairsOptions& options = {},
                             std::ostream& warnings = std::cerr) {
  if (options.workers < 1) throw ConfigError("generate_pairs: workers < 1");
  for (const auto& rec : corpus.records) {
    if (rec.label != Label::human) {
      throw DataError("generate_pairs: corpus must contain only human records, got " +
                      rec.id);
    }
  }
  store.ensure_writable();

  std::vector<const TextRecord*> pending;
  for (const auto& rec : corpus.records) {
    if (!store.contains(rec.id)) pending.push_back(&rec);
  }

  if (!pending.empty()) {
    std::atomic<std::size_t> next{0};
    std::mutex store_mutex;
    std::mutex error_mutex;
    std::exception_ptr first_error;
    std::atomic<bool> cancelled{false};

    auto worker = [&]() {
      while (!cancelled.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= pending.size()) return;
        const TextRecord& rec = *pending[i];
        try {
          RephraseRequest request;
          request.source_record_id = rec.id;
          request.prompt = options.prompt_template.render(rec.text);
          request.target_word_count = rec.word_count;
          const RephraseResult result = rephrase_one(request, backend, options.retry);
          std::lock_guard<std::mutex> lock(store_mutex);
          store.record(result);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          cancelled.store(true);
          return;
        }
      }
    };

    const int n_workers = std::min<int>(options.workers,
                                        static_cast<int>(pending.size()));
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  Corpus out;
  out.bucket_spec = corpus.bucket_spec;
  out.provenance = corpus.provenance;
  out.provenance.push_back("rephrase.backend=" + to_string(backend.kind()));
  for (const auto& rec : corpus.records) {
    out.records.push_back(rec);
    const RephraseResult* result = store.find(rec.id);
    if (result == nullptr) {
      throw DataError("generate_pairs: no checkpointed result for " + rec.id);
    }
    std::string text = trim(result->machine_text);
    int wc = count_words(text);
    if (wc > kMaxWordCount) {
      text = truncate_words(text, kMaxWordCount);
      wc = kMaxWordCount;
    }
    if (wc < kMinWordCount) {
      warnings << "generate_pairs: dropping rephrase of " << rec.id << " (" << wc
               << " words, floor is " << kMinWordCount << ")\n";
      out.provenance.push_back("rephrase.unpaired=" + rec.id);
      continue;
    }
    TextRecord machine;
    machine.id = rec.id + "-m";
    machine.text = std::move(text);
    machine.label = Label::machine;
    machine.source = Source::synthetic;
    machine.word_count = wc;
    machine.bucket = corpus.bucket_spec.assign(wc);
    machine.pair_id = rec.id;
    out.records.push_back(std::move(machine));
  }
  sort_records_by_id(out.records);
  store.compact();
  validate_corpus(out);
  return out;
}

}  // namespace detext
