#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "detext/bucket.hpp"
#include "detext/corpus.hpp"
#include "detext/error.hpp"
#include "detext/eval.hpp"

#include "oracles.hpp"

namespace {

using namespace detext;
using Catch::Matchers::WithinAbs;

ScoredRecord scored(const std::string& id, Label label, double score,
                    const std::string& bucket = "10-14") {
  return ScoredRecord{id, label, score, bucket};
}

std::vector<ScoredRecord> from_scores(const std::vector<double>& machine,
                                      const std::vector<double>& human) {
  std::vector<ScoredRecord> out;
  for (std::size_t i = 0; i < machine.size(); ++i) {
    out.push_back(scored("m" + std::to_string(i), Label::machine, machine[i]));
  }
  for (std::size_t i = 0; i < human.size(); ++i) {
    out.push_back(scored("h" + std::to_string(i), Label::human, human[i]));
  }
  return out;
}

TextRecord corpus_record(const std::string& id, Label label, int wc,
                         const BucketSpec& spec) {
  TextRecord r;
  r.id = id;
  std::string text;
  for (int i = 0; i < wc; ++i) {
    if (i) text.push_back(' ');
    text += "w" + std::to_string(i);
  }
  r.text = text;
  r.label = label;
  r.source = label == Label::human ? Source::other : Source::synthetic;
  r.word_count = wc;
  r.bucket = spec.assign(wc);
  return r;
}

}  // namespace

TEST_CASE("auc_roc matches the documented examples") {
  CHECK(auc_roc(from_scores({0.9, 0.8}, {0.2, 0.1})).value() == 1.0);
  CHECK(auc_roc(from_scores({0.5, 0.5}, {0.5, 0.5})).value() == 0.5);
  CHECK_THAT(auc_roc(from_scores({0.8, 0.4}, {0.6, 0.2})).value(),
             WithinAbs(0.75, 1e-15));
  CHECK(auc_roc(from_scores({0.1, 0.2}, {0.8, 0.9})).value() == 0.0);
}

TEST_CASE("auc_roc is absent when a class is missing") {
  CHECK(!auc_roc(from_scores({0.9}, {})).has_value());
  CHECK(!auc_roc(from_scores({}, {0.1})).has_value());
  CHECK(!auc_roc(std::vector<ScoredRecord>{}).has_value());
}

TEST_CASE("auc_roc rejects non-finite scores naming the record") {
  auto records = from_scores({0.9}, {0.1});
  records[0].score = std::numeric_limits<double>::quiet_NaN();
  try {
    auc_roc(records);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("m0") != std::string::npos);
  }
}

TEST_CASE("auc_roc is invariant under strictly increasing transforms") {
  std::mt19937 gen(61);
  std::uniform_real_distribution<double> val(-3.0, 3.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> machine(7), human(9);
    for (auto& v : machine) v = val(gen);
    for (auto& v : human) v = val(gen);
    machine[0] = human[0];  // force a cross-class tie
    const double base = auc_roc(from_scores(machine, human)).value();

    auto mapped = [&](auto&& f) {
      std::vector<double> m = machine, h = human;
      for (auto& v : m) v = f(v);
      for (auto& v : h) v = f(v);
      return auc_roc(from_scores(m, h)).value();
    };
    CHECK(mapped([](double v) { return 3.0 * v + 7.0; }) == base);
    CHECK(mapped([](double v) { return std::exp(v); }) == base);
    CHECK(mapped([](double v) { return std::atan(v); }) == base);
  }
}

TEST_CASE("auc_roc of negated scores complements the original") {
  std::mt19937 gen(67);
  std::uniform_int_distribution<int> val(0, 5);  // small range forces ties
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> machine(8), human(6);
    for (auto& v : machine) v = val(gen);
    for (auto& v : human) v = val(gen);
    const double fwd = auc_roc(from_scores(machine, human)).value();
    for (auto& v : machine) v = -v;
    for (auto& v : human) v = -v;
    const double rev = auc_roc(from_scores(machine, human)).value();
    CHECK_THAT(fwd + rev, WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("auc_roc equals the exhaustive pair-counting oracle") {
  std::mt19937 gen(71);
  std::uniform_int_distribution<int> size(1, 40);
  std::uniform_int_distribution<int> level(0, 9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> machine(size(gen)), human(size(gen));
    for (auto& v : machine) v = level(gen) / 3.0;
    for (auto& v : human) v = level(gen) / 3.0;
    const double got = auc_roc(from_scores(machine, human)).value();
    CHECK_THAT(got, WithinAbs(oracle::pair_count_auc(machine, human), 1e-12));
  }
}

TEST_CASE("f1_score follows the confusion-matrix definition") {
  CHECK(f1_score(from_scores({0.9, 0.8}, {0.1, 0.2}), 0.5) == 1.0);
  // TP=1 (0.9), FP=1 (0.8 human), FN=1 (0.1 machine).
  const std::vector<ScoredRecord> mixed = {
      scored("a", Label::machine, 0.9), scored("b", Label::human, 0.8),
      scored("c", Label::machine, 0.1), scored("d", Label::human, 0.2)};
  CHECK_THAT(f1_score(mixed, 0.5), WithinAbs(0.5, 1e-15));
  CHECK(f1_score(from_scores({}, {0.1, 0.2}), 0.5) == 0.0);
  CHECK(f1_score(std::vector<ScoredRecord>{}, 0.0) == 0.0);
}

TEST_CASE("f1_score predictions require strictly exceeding the threshold") {
  const std::vector<ScoredRecord> at = {scored("a", Label::machine, 0.5)};
  CHECK(f1_score(at, 0.5) == 0.0);   // score == threshold predicts human
  CHECK(f1_score(at, 0.49) == 1.0);
}

TEST_CASE("f1_score matches a confusion oracle on random instances") {
  std::mt19937 gen(73);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  std::bernoulli_distribution is_machine(0.5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ScoredRecord> records;
    std::vector<std::pair<double, bool>> reference;
    for (int i = 0; i < 25; ++i) {
      const bool machine = is_machine(gen);
      const double score = val(gen);
      records.push_back(scored("r" + std::to_string(i),
                               machine ? Label::machine : Label::human, score));
      reference.emplace_back(score, machine);
    }
    const double threshold = val(gen);
    CHECK(f1_score(records, threshold) == oracle::confusion_f1(reference, threshold));
  }
}

TEST_CASE("evaluate_by_range groups rows in spec order") {
  const auto spec = BucketSpec::builtin_default();
  std::vector<ScoredRecord> records = {
      scored("m1", Label::machine, 0.9, "10-14"),
      scored("h1", Label::human, 0.1, "10-14"),
      scored("m2", Label::machine, 0.8, "20-24"),
      scored("h2", Label::human, 0.3, "20-24"),
  };
  const RangeReport report = evaluate_by_range(records, spec, 0.5);
  REQUIRE(report.rows.size() == 19);
  CHECK(report.rows[0].range == "10-14");
  CHECK(report.rows[0].auc.value() == 1.0);
  CHECK(report.rows[0].n_human == 1);
  CHECK(report.rows[0].n_machine == 1);
  CHECK(report.rows[1].range == "15-19");
  CHECK(!report.rows[1].auc.has_value());
  CHECK(report.rows[1].n_human == 0);
  CHECK(report.rows[2].range == "20-24");
  CHECK(report.rows[2].auc.value() == 1.0);
  CHECK(report.aggregate.range == "ALL");
  CHECK(report.aggregate.n_human == 2);
  CHECK(report.aggregate.n_machine == 2);
}

TEST_CASE("a single-bucket input's row equals the aggregate") {
  const auto spec = BucketSpec::builtin_default();
  const auto records = from_scores({0.8, 0.4, 0.3}, {0.6, 0.2});
  const RangeReport report = evaluate_by_range(records, spec, 0.5);
  CHECK(report.rows[0].auc == report.aggregate.auc);
  CHECK(report.rows[0].f1 == report.aggregate.f1);
  CHECK(report.rows[0].n_human == report.aggregate.n_human);
  CHECK(report.rows[0].n_machine == report.aggregate.n_machine);
}

TEST_CASE("a bucket with one class reports absent metrics") {
  const auto spec = BucketSpec::builtin_default();
  std::vector<ScoredRecord> records = {
      scored("m1", Label::machine, 0.9, "10-14"),
      scored("h1", Label::human, 0.1, "10-14"),
      scored("m2", Label::machine, 0.7, "15-19"),  // no human partner
  };
  const RangeReport report = evaluate_by_range(records, spec, 0.5);
  CHECK(!report.rows[1].auc.has_value());
  CHECK(!report.rows[1].f1.has_value());
  CHECK(report.rows[1].n_machine == 1);
  CHECK(report.aggregate.auc.has_value());  // pooled metrics still exist
}

TEST_CASE("evaluate_by_range rejects buckets outside the range table") {
  const auto spec = BucketSpec::builtin_default();
  const std::vector<ScoredRecord> records = {
      scored("x", Label::machine, 0.9, "12-13")};
  CHECK_THROWS_AS(evaluate_by_range(records, spec, 0.0), DataError);
}

TEST_CASE("per-row AUC matches the oracle applied per group") {
  const auto spec = BucketSpec::builtin_default();
  std::mt19937 gen(79);
  std::uniform_real_distribution<double> val(0.0, 1.0);
  const std::vector<std::string> buckets = {"10-14", "40-49", "180-200"};

  std::vector<ScoredRecord> records;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  int next_id = 0;
  for (const auto& bucket : buckets) {
    for (int i = 0; i < 20; ++i) {
      const bool machine = i % 2 == 0;
      const double score = std::floor(val(gen) * 8.0) / 8.0;  // coarse: ties occur
      records.push_back(scored("r" + std::to_string(next_id++),
                               machine ? Label::machine : Label::human, score, bucket));
      auto& [ms, hs] = groups[bucket];
      (machine ? ms : hs).push_back(score);
    }
  }
  const RangeReport report = evaluate_by_range(records, spec, 0.5);
  for (const auto& row : report.rows) {
    if (!groups.count(row.range)) continue;
    const auto& [ms, hs] = groups[row.range];
    CHECK_THAT(row.auc.value(), WithinAbs(oracle::pair_count_auc(ms, hs), 1e-12));
  }
}

TEST_CASE("range_mean_auc averages only the rows that have metrics") {
  RangeReport report;
  report.rows.push_back({"10-14", 0.8, 0.7, 5, 5});
  report.rows.push_back({"15-19", std::nullopt, std::nullopt, 3, 0});
  report.rows.push_back({"20-24", 0.6, 0.5, 4, 4});
  CHECK_THAT(range_mean_auc(report).value(), WithinAbs(0.7, 1e-12));

  RangeReport empty;
  empty.rows.push_back({"10-14", std::nullopt, std::nullopt, 0, 0});
  CHECK(!range_mean_auc(empty).has_value());
}

TEST_CASE("ingest_external_scores joins rows to corpus ground truth") {
  const auto spec = BucketSpec::builtin_default();
  Corpus corpus;
  corpus.bucket_spec = spec;
  corpus.records.push_back(corpus_record("a1", Label::human, 12, spec));
  corpus.records.push_back(corpus_record("a2", Label::machine, 17, spec));
  corpus.records.push_back(corpus_record("a3", Label::human, 22, spec));

  SECTION("full coverage gives a list in corpus order") {
    std::istringstream in("record_id,score\na3,0.3\na1,0.1\na2,0.2\n");
    std::ostringstream warnings;
    const auto result = ingest_external_scores(in, corpus, false, warnings);
    REQUIRE(result.records.size() == 3);
    CHECK(result.records[0].record_id == "a1");
    CHECK(result.records[0].score == 0.1);
    CHECK(result.records[0].label == Label::human);
    CHECK(result.records[0].bucket == "10-14");
    CHECK(result.records[1].record_id == "a2");
    CHECK(result.records[1].label == Label::machine);
    CHECK(result.records[2].bucket == "20-24");
    CHECK(!result.threshold.has_value());
    CHECK(warnings.str().empty());
  }
  SECTION("a bare threshold header field declares the probability convention") {
    std::istringstream in("record_id,score,threshold\na1,0.1\na2,0.2\na3,0.3\n");
    CHECK(ingest_external_scores(in, corpus).threshold.value() == 0.5);
  }
  SECTION("an explicit threshold value is parsed") {
    std::istringstream in("record_id,score,threshold=0.25\na1,0.1\na2,0.2\na3,0.3\n");
    CHECK(ingest_external_scores(in, corpus).threshold.value() == 0.25);
  }
  SECTION("a BOM and CRLF endings are tolerated") {
    std::istringstream in("\xEF\xBB\xBFrecord_id,score\r\na1,0.1\r\na2,0.2\r\na3,0.3\r\n");
    CHECK(ingest_external_scores(in, corpus).records.size() == 3);
  }
  SECTION("duplicate ids are rejected naming the id") {
    std::istringstream in("record_id,score\na1,0.1\na1,0.2\n");
    try {
      ingest_external_scores(in, corpus);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("a1") != std::string::npos);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SECTION("unknown ids are rejected") {
    std::istringstream in("record_id,score\nzz,0.1\n");
    CHECK_THROWS_AS(ingest_external_scores(in, corpus), DataError);
  }
  SECTION("partial coverage warns and returns the covered subset") {
    std::istringstream in("record_id,score\na1,0.1\na2,0.2\n");
    std::ostringstream warnings;
    const auto result = ingest_external_scores(in, corpus, false, warnings);
    CHECK(result.records.size() == 2);
    CHECK(warnings.str().find("a3") != std::string::npos);
    CHECK(warnings.str().find("1 of 3") != std::string::npos);
  }
  SECTION("strict mode turns the coverage warning into an error") {
    std::istringstream in("record_id,score\na1,0.1\na2,0.2\n");
    CHECK_THROWS_AS(ingest_external_scores(in, corpus, true), DataError);
  }
  SECTION("malformed rows carry their line number") {
    std::istringstream in("record_id,score\na1,0.1\na2,0.2,0.3\n");
    try {
      ingest_external_scores(in, corpus);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SECTION("non-numeric and non-finite scores are rejected") {
    std::istringstream bad("record_id,score\na1,abc\n");
    CHECK_THROWS_AS(ingest_external_scores(bad, corpus), DataError);
    std::istringstream inf("record_id,score\na1,inf\n");
    CHECK_THROWS_AS(ingest_external_scores(inf, corpus), DataError);
  }
  SECTION("a bad header is rejected") {
    std::istringstream in("id,score\na1,0.1\n");
    CHECK_THROWS_AS(ingest_external_scores(in, corpus), DataError);
  }
  SECTION("a covered record without a bucket is a data error") {
    Corpus no_bucket = corpus;
    no_bucket.records[0].bucket.reset();
    std::istringstream in("record_id,score\na1,0.1\na2,0.2\na3,0.3\n");
    CHECK_THROWS_AS(ingest_external_scores(in, no_bucket), DataError);
  }
}

TEST_CASE("report csv rendering matches the documented shape") {
  RangeReport report;
  report.rows.push_back({"10-14", 0.875, 0.8, 4, 4});
  report.rows.push_back({"15-19", std::nullopt, std::nullopt, 2, 0});
  report.aggregate = {"ALL", 0.9166664999999, 0.75, 6, 4};

  const std::string csv = render_report_csv(report);
  CHECK(csv ==
        "range,auc,f1,n_human,n_machine\n"
        "10-14,0.875000,0.800000,4,4\n"
        "15-19,,,2,0\n"
        "ALL,0.916666,0.750000,6,4\n");
}

TEST_CASE("report round-trips are byte-identical in both formats") {
  RangeReport report;
  report.rows.push_back({"10-14", 1.0, 1.0, 3, 3});
  report.rows.push_back({"15-19", std::nullopt, std::nullopt, 0, 2});
  report.rows.push_back({"20-24", 0.656250, 0.50, 4, 4});
  report.aggregate = {"ALL", 0.8125, 0.715, 7, 9};

  SECTION("csv") {
    const std::string bytes = render_report_csv(report);
    std::istringstream in(bytes);
    const RangeReport parsed = parse_report_csv(in);
    CHECK(render_report_csv(parsed) == bytes);
    CHECK(parsed == report);  // metrics already at 6-digit precision
  }
  SECTION("structured") {
    const std::string bytes = render_report_structured(report);
    std::istringstream in(bytes);
    const RangeReport parsed = parse_report_structured(in);
    CHECK(render_report_structured(parsed) == bytes);
    CHECK(parsed == report);
  }
  SECTION("both formats carry identical values") {
    std::istringstream csv_in(render_report_csv(report));
    std::istringstream js_in(render_report_structured(report));
    CHECK(parse_report_csv(csv_in) == parse_report_structured(js_in));
  }
}

TEST_CASE("fresh evaluation reports stabilize after one render") {
  const auto spec = BucketSpec::builtin_default();
  // 1/3 is not representable in 6 digits, so the first render quantizes.
  const auto records = from_scores({0.8, 0.4, 0.4}, {0.4, 0.2});
  const RangeReport fresh = evaluate_by_range(records, spec, 0.5);
  const std::string once = render_report_csv(fresh);
  std::istringstream in(once);
  const RangeReport parsed = parse_report_csv(in);
  CHECK(render_report_csv(parsed) == once);
}

TEST_CASE("report parsers reject malformed input") {
  auto parse_csv = [](const std::string& s) {
    std::istringstream in(s);
    return parse_report_csv(in);
  };
  CHECK_THROWS_AS(parse_csv(""), DataError);
  CHECK_THROWS_AS(parse_csv("range,auc\n"), DataError);
  CHECK_THROWS_AS(parse_csv("range,auc,f1,n_human,n_machine\n10-14,0.5\n"), DataError);
  CHECK_THROWS_AS(parse_csv("range,auc,f1,n_human,n_machine\n10-14,0.5,0.5,1,1\n"),
                  DataError);  // no ALL row
  CHECK_THROWS_AS(parse_csv("range,auc,f1,n_human,n_machine\nALL,x,0.5,1,1\n"),
                  DataError);

  auto parse_js = [](const std::string& s) {
    std::istringstream in(s);
    return parse_report_structured(in);
  };
  CHECK_THROWS_AS(parse_js("not json"), DataError);
  CHECK_THROWS_AS(parse_js("{\"rows\": []}"), DataError);
  CHECK_THROWS_AS(parse_js("{\"rows\": [{}], \"aggregate\": {}}"), DataError);
}

TEST_CASE("emit_report writes files and surfaces unwritable paths") {
  RangeReport report;
  report.rows.push_back({"10-14", 0.5, 0.5, 1, 1});
  report.aggregate = {"ALL", 0.5, 0.5, 1, 1};
  CHECK_THROWS_AS(
      emit_report(report, ReportFormat::csv, std::string("/nonexistent-dir/r.csv")),
      PersistenceError);
}
