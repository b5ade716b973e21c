#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "detext/cli.hpp"
#include "detext/corpus.hpp"
#include "detext/eval.hpp"
#include "detext/svm.hpp"

namespace fs = std::filesystem;
using namespace detext;

namespace {

std::atomic<int> g_dir_counter{0};

// Self-cleaning scratch directory unique to this process + call site.
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("detext-cli-" + std::to_string(::getpid()) + "-" +
            std::to_string(g_dir_counter.fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_file(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void write_file(const std::string& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  REQUIRE(f.good());
  f << text;
}

std::string make_sentence(int words, int offset) {
  std::string s;
  for (int i = 0; i < words; ++i) {
    if (i) s += ' ';
    char buf[16];
    std::snprintf(buf, sizeof(buf), "t%03d", (offset + i * 7) % 60);
    s += buf;
  }
  return s;
}

RangeReport parse_csv_text(const std::string& text) {
  std::istringstream in(text);
  return parse_report_csv(in);
}

RangeReport parse_structured_text(const std::string& text) {
  std::istringstream in(text);
  return parse_report_structured(in);
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the installed binary with shell redirections; args must not need quoting.
CliResult run_cli(const std::string& args, const std::string& stdin_text = "") {
  TempDir io;
  write_file(io.file("stdin"), stdin_text);
  const std::string cmd = std::string(DETEXT_CLI_BIN) + " " + args + " <" +
                          io.file("stdin") + " >" + io.file("stdout") + " 2>" +
                          io.file("stderr");
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = read_file(io.file("stdout"));
  result.err = read_file(io.file("stderr"));
  return result;
}

// Redirects a standard stream into a buffer for in-process cli::run calls.
struct StreamCapture {
  std::ostream& stream;
  std::ostringstream buffer;
  std::streambuf* saved;
  explicit StreamCapture(std::ostream& s) : stream(s), saved(s.rdbuf(buffer.rdbuf())) {}
  ~StreamCapture() { stream.rdbuf(saved); }
  std::string text() const { return buffer.str(); }
};

TextRecord paired_record(const std::string& id, Label label, int offset,
                         const BucketSpec& spec,
                         std::optional<std::string> pair = std::nullopt) {
  TextRecord r;
  r.id = id;
  r.text = make_sentence(12, offset);
  r.label = label;
  r.source = label == Label::machine ? Source::synthetic : Source::other;
  r.word_count = 12;
  r.bucket = *spec.assign(12);
  r.pair_id = std::move(pair);
  return r;
}

// Two human + two machine records, all in bucket 10-14.
std::string write_tiny_corpus(const TempDir& dir) {
  const BucketSpec spec = BucketSpec::builtin_default();
  Corpus corpus;
  corpus.records.push_back(paired_record("h1", Label::human, 0, spec));
  corpus.records.push_back(paired_record("h2", Label::human, 5, spec));
  corpus.records.push_back(paired_record("m1", Label::machine, 11, spec, "h1"));
  corpus.records.push_back(paired_record("m2", Label::machine, 17, spec, "h2"));
  const std::string path = dir.file("tiny.jsonl");
  save_corpus(corpus, path);
  return path;
}

}  // namespace

TEST_CASE("input specs parse from the right") {
  auto spec = cli::parse_input_spec("data/raw.txt:twitter");
  CHECK(spec.path == "data/raw.txt");
  CHECK(spec.source == Source::twitter);
  CHECK_FALSE(spec.chunk_len.has_value());

  spec = cli::parse_input_spec("books.txt:gutenberg:100");
  CHECK(spec.path == "books.txt");
  CHECK(spec.source == Source::gutenberg);
  REQUIRE(spec.chunk_len.has_value());
  CHECK(*spec.chunk_len == 100);

  SECTION("paths may contain colons") {
    spec = cli::parse_input_spec("mnt:research:squad.txt:squad");
    CHECK(spec.path == "mnt:research:squad.txt");
    CHECK(spec.source == Source::squad);
    CHECK_FALSE(spec.chunk_len.has_value());

    spec = cli::parse_input_spec("mnt:data:football.txt:football:50");
    CHECK(spec.path == "mnt:data:football.txt");
    CHECK(spec.source == Source::football);
    REQUIRE(spec.chunk_len.has_value());
    CHECK(*spec.chunk_len == 50);
  }

  SECTION("malformed specs are rejected") {
    CHECK_THROWS_AS(cli::parse_input_spec("plain-path.txt"), ConfigError);
    CHECK_THROWS_AS(cli::parse_input_spec("file.txt:"), ConfigError);
    CHECK_THROWS_AS(cli::parse_input_spec(":twitter"), ConfigError);
    CHECK_THROWS_AS(cli::parse_input_spec("file.txt:reddit"), ConfigError);
    CHECK_THROWS_AS(cli::parse_input_spec("file.txt:42"), ConfigError);
    CHECK_THROWS_AS(cli::parse_input_spec("file.txt:99:gutenberg:x"), ConfigError);
  }
}

TEST_CASE("ratio lists parse exactly three fractions") {
  const auto r = cli::parse_ratios("0.8,0.1,0.1");
  CHECK(r[0] == 0.8);
  CHECK(r[1] == 0.1);
  CHECK(r[2] == 0.1);
  const auto r2 = cli::parse_ratios("0.7,0.2,0.1");
  CHECK(r2[0] == 0.7);

  CHECK_THROWS_AS(cli::parse_ratios("0.8,0.2"), ConfigError);
  CHECK_THROWS_AS(cli::parse_ratios("0.4,0.3,0.2,0.1"), ConfigError);
  CHECK_THROWS_AS(cli::parse_ratios("a,b,c"), ConfigError);
  CHECK_THROWS_AS(cli::parse_ratios(""), ConfigError);
  CHECK_THROWS_AS(cli::parse_ratios("0.8,0.1x,0.1"), ConfigError);
}

TEST_CASE("usage problems exit with code 1 in process") {
  StreamCapture out(std::cout);
  StreamCapture err(std::cerr);

  SECTION("a subcommand is required") {
    CHECK(cli::run({}) == 1);
  }
  SECTION("unknown flags are rejected") {
    CHECK(cli::run({"train", "--bogus-flag"}) == 1);
  }
  SECTION("format membership is enforced at parse time") {
    CHECK(cli::run({"evaluate", "--format", "xml"}) == 1);
  }
  SECTION("missing required settings name the subcommand") {
    CHECK(cli::run({"train"}) == 1);
    CHECK(err.text().find("train: --corpus is required") != std::string::npos);
  }
  SECTION("score requires both model and vocabulary") {
    CHECK(cli::run({"score"}) == 1);
  }
  SECTION("http backend requires a url") {
    TempDir dir;
    const std::string corpus = write_tiny_corpus(dir);
    CHECK(cli::run({"rephrase", "--corpus", corpus, "--out", dir.file("o.jsonl"),
                    "--backend", "http"}) == 1);
    CHECK(err.text().find("--backend-url") != std::string::npos);
  }
  SECTION("--version reports the tool name and exits cleanly") {
    CHECK(cli::run({"--version"}) == 0);
    CHECK(out.text().find("detext 0.1.0") != std::string::npos);
  }
  SECTION("--help lists every subcommand") {
    CHECK(cli::run({"--help"}) == 0);
    const std::string help = out.text();
    for (const char* name : {"build-corpus", "rephrase", "train", "evaluate", "score"}) {
      INFO(name);
      CHECK(help.find(name) != std::string::npos);
    }
    CHECK(help.find("--seed") != std::string::npos);
  }
}

TEST_CASE("pipeline round trip through the real binary") {
  TempDir dir;

  // Four sentences per builtin bucket, sharing a 60-word vocabulary.
  const int widths[] = {12, 17, 23, 28, 33, 38, 45, 55, 65, 75, 85,
                        95,  105, 115, 125, 135, 150, 170, 190};
  std::string raw;
  int offset = 0;
  for (int wc : widths) {
    for (int i = 0; i < 4; ++i) {
      raw += make_sentence(wc, offset++);
      raw += '\n';
    }
  }
  write_file(dir.file("raw.txt"), raw);

  const std::string corpus_dir = dir.file("corpus");
  auto built = run_cli("--seed 11 build-corpus --input " + dir.file("raw.txt") +
                       ":gutenberg --out-dir " + corpus_dir +
                       " --ratios 0.6,0.2,0.2");
  INFO(built.err);
  REQUIRE(built.code == 0);
  for (const char* name : {"corpus.jsonl", "train.jsonl", "test.jsonl", "val.jsonl",
                           "provenance.txt"}) {
    INFO(name);
    CHECK(fs::exists(fs::path(corpus_dir) / name));
  }
  const std::string corpus_path = (fs::path(corpus_dir) / "corpus.jsonl").string();
  {
    std::ifstream f(corpus_path, std::ios::binary);
    const Corpus corpus = load_corpus(f, BucketSpec::builtin_default());
    CHECK(corpus.records.size() == 19 * 4);
    for (const auto& r : corpus.records) CHECK(r.label == Label::human);
  }
  const std::string provenance = read_file((fs::path(corpus_dir) / "provenance.txt").string());
  CHECK(provenance.find("command=build-corpus") != std::string::npos);
  CHECK(provenance.find("seed=11") != std::string::npos);
  CHECK(provenance.find("source=gutenberg") != std::string::npos);

  const std::string paired_path = dir.file("paired.jsonl");
  auto rephrased = run_cli("--seed 11 rephrase --corpus " + corpus_path + " --out " +
                           paired_path + " --backend mock --workers 2");
  INFO(rephrased.err);
  REQUIRE(rephrased.code == 0);
  CHECK(fs::exists(paired_path + ".checkpoint"));
  {
    std::ifstream f(paired_path, std::ios::binary);
    const Corpus paired = load_corpus(f, BucketSpec::builtin_default());
    REQUIRE(paired.records.size() == 19 * 8);
    std::size_t machines = 0;
    for (const auto& r : paired.records) machines += r.label == Label::machine;
    CHECK(machines == 19 * 4);
  }

  SECTION("a second rephrase run resumes from the checkpoint without changes") {
    const std::string before = read_file(paired_path);
    auto resumed = run_cli("--seed 11 rephrase --corpus " + corpus_path + " --out " +
                           paired_path + " --backend mock --workers 2");
    REQUIRE(resumed.code == 0);
    CHECK(resumed.err.find("0 new completions") != std::string::npos);
    CHECK(read_file(paired_path) == before);
  }

  const std::string model_path = dir.file("model.svm");
  const std::string vocab_path = dir.file("vocab.tsv");
  auto trained = run_cli("--seed 11 train --corpus " + paired_path + " --model-out " +
                         model_path + " --vocab-out " + vocab_path);
  INFO(trained.err);
  REQUIRE(trained.code == 0);
  const SvmModel model = SvmModel::load_file(model_path);
  const Vocabulary vocab = Vocabulary::load_file(vocab_path);
  CHECK(model.gamma > 0.0);
  CHECK_FALSE(model.support_vectors.empty());
  CHECK(vocab.size() > 0);

  const std::string report_path = dir.file("report.csv");
  auto evaluated = run_cli("evaluate --corpus " + paired_path + " --model-file " +
                           model_path + " --vocab-file " + vocab_path +
                           " --report-out " + report_path);
  INFO(evaluated.err);
  REQUIRE(evaluated.code == 0);
  CHECK(evaluated.err.find("aggregate auc=") != std::string::npos);
  CHECK(evaluated.err.find("range-mean auc=") != std::string::npos);
  const RangeReport report = parse_csv_text(read_file(report_path));
  REQUIRE(report.rows.size() == 19);
  CHECK(report.aggregate.range == "ALL");
  CHECK(report.aggregate.n_human == 19 * 4);
  CHECK(report.aggregate.n_machine == 19 * 4);
  for (const auto& row : report.rows) {
    CHECK(row.n_human == 4);
    CHECK(row.n_machine == 4);
  }

  SECTION("structured output carries the same report") {
    auto structured = run_cli("evaluate --corpus " + paired_path + " --model-file " +
                              model_path + " --vocab-file " + vocab_path +
                              " --format structured");
    REQUIRE(structured.code == 0);
    CHECK(parse_structured_text(structured.out) == report);
  }

  SECTION("score prints one decision value per input line") {
    const std::vector<std::string> lines = {make_sentence(12, 3), make_sentence(40, 9),
                                            "unseen words only zzz"};
    std::string stdin_text;
    for (const auto& line : lines) stdin_text += line + "\n";
    auto scored = run_cli("score --model-file " + model_path + " --vocab-file " +
                          vocab_path, stdin_text);
    REQUIRE(scored.code == 0);
    std::istringstream out(scored.out);
    std::string printed;
    for (const auto& line : lines) {
      REQUIRE(std::getline(out, printed));
      const double expected = decision_value(model, vectorize(tokenize(line), vocab));
      CHECK(std::strtod(printed.c_str(), nullptr) == expected);
    }
    CHECK_FALSE(std::getline(out, printed));
  }

  SECTION("score with empty input emits nothing and succeeds") {
    auto scored = run_cli("score --model-file " + model_path + " --vocab-file " +
                          vocab_path, "");
    CHECK(scored.code == 0);
    CHECK(scored.out.empty());
  }
}

TEST_CASE("external scores drive evaluation and threshold precedence") {
  TempDir dir;
  const std::string corpus_path = write_tiny_corpus(dir);

  // At the file's threshold 0.25: h2 and m1 predicted machine, F1 = 0.5.
  // At 0.35: only m1 predicted machine, F1 = 2/3.
  const std::string scores_path = dir.file("scores.csv");
  write_file(scores_path,
             "record_id,score,threshold=0.25\n"
             "h1,0.2\n"
             "h2,0.3\n"
             "m1,0.4\n"
             "m2,0.1\n");

  auto from_file = run_cli("evaluate --corpus " + corpus_path + " --scores " + scores_path);
  INFO(from_file.err);
  REQUIRE(from_file.code == 0);
  RangeReport report = parse_csv_text(from_file.out);
  REQUIRE(report.aggregate.f1.has_value());
  CHECK(*report.aggregate.f1 == 0.5);
  REQUIRE(report.aggregate.auc.has_value());
  CHECK(*report.aggregate.auc == 0.5);

  auto overridden = run_cli("evaluate --corpus " + corpus_path + " --scores " +
                            scores_path + " --threshold 0.35");
  REQUIRE(overridden.code == 0);
  report = parse_csv_text(overridden.out);
  REQUIRE(report.aggregate.f1.has_value());
  CHECK(*report.aggregate.f1 == 0.666667);

  SECTION("partial coverage warns by default and fails under --strict") {
    const std::string partial_path = dir.file("partial.csv");
    write_file(partial_path,
               "record_id,score\n"
               "h1,0.2\n"
               "h2,0.3\n"
               "m1,0.4\n");
    auto lenient = run_cli("evaluate --corpus " + corpus_path + " --scores " + partial_path);
    CHECK(lenient.code == 0);
    CHECK(lenient.err.find("uncovered") != std::string::npos);
    CHECK(lenient.err.find("m2") != std::string::npos);

    auto strict = run_cli("--strict evaluate --corpus " + corpus_path + " --scores " +
                          partial_path);
    CHECK(strict.code == 2);
  }
}

TEST_CASE("failures map to distinct exit codes") {
  TempDir dir;

  SECTION("unreadable inputs are configuration errors") {
    auto r = run_cli("train --corpus " + dir.file("missing.jsonl"));
    CHECK(r.code == 1);
    CHECK(r.err.find("error: ") != std::string::npos);
  }

  SECTION("a single-class corpus is a data error") {
    const BucketSpec spec = BucketSpec::builtin_default();
    Corpus humans;
    for (int i = 0; i < 4; ++i) {
      char id[8];
      std::snprintf(id, sizeof(id), "h%d", i);
      humans.records.push_back(paired_record(id, Label::human, i * 3, spec));
    }
    const std::string path = dir.file("humans.jsonl");
    save_corpus(humans, path);
    auto r = run_cli("train --corpus " + path);
    CHECK(r.code == 2);
    CHECK(r.err.find("single class") != std::string::npos);
  }

  SECTION("a corrupt corpus line is a data error") {
    const std::string path = dir.file("corrupt.jsonl");
    write_file(path, "this is not a record\n");
    auto r = run_cli("evaluate --corpus " + path + " --scores whatever.csv");
    CHECK(r.code == 2);
  }

  SECTION("an unwritable report path is a persistence error") {
    const std::string corpus_path = write_tiny_corpus(dir);
    const std::string scores_path = dir.file("scores.csv");
    write_file(scores_path,
               "record_id,score\nh1,0.2\nh2,0.3\nm1,0.4\nm2,0.1\n");
    auto r = run_cli("evaluate --corpus " + corpus_path + " --scores " + scores_path +
                     " --report-out /nonexistent-detext-dir/report.csv");
    CHECK(r.code == 3);
  }
}

TEST_CASE("config files supply values that flags override") {
  TempDir dir;
  std::string raw;
  for (int i = 0; i < 8; ++i) raw += make_sentence(12, i) + "\n";
  write_file(dir.file("raw.txt"), raw);
  write_file(dir.file("run.cfg"), "seed=123\ntarget-per-bucket=2\n");

  auto from_config = run_cli("--config " + dir.file("run.cfg") + " build-corpus --input " +
                             dir.file("raw.txt") + ":twitter --out-dir " + dir.file("c1"));
  INFO(from_config.err);
  REQUIRE(from_config.code == 0);
  {
    std::ifstream f(dir.file("c1") + "/corpus.jsonl", std::ios::binary);
    const Corpus corpus = load_corpus(f, BucketSpec::builtin_default());
    CHECK(corpus.records.size() == 2);
  }
  const std::string p1 = read_file(dir.file("c1") + "/provenance.txt");
  CHECK(p1.find("seed=123") != std::string::npos);
  CHECK(p1.find("target-per-bucket=2") != std::string::npos);

  auto with_flag = run_cli("--config " + dir.file("run.cfg") + " --seed 9 build-corpus --input " +
                           dir.file("raw.txt") + ":twitter --out-dir " + dir.file("c2"));
  REQUIRE(with_flag.code == 0);
  const std::string p2 = read_file(dir.file("c2") + "/provenance.txt");
  CHECK(p2.find("seed=9") != std::string::npos);
  CHECK(p2.find("target-per-bucket=2") != std::string::npos);
}
