#include <doctest.h>

#include <map>
#include <set>

#include "matlift/csv.hpp"
#include "matlift/dataset_ops.hpp"
#include "matlift/errors.hpp"
#include "matlift/text.hpp"
#include "test_support.hpp"

using namespace matlift;

namespace {

Corpus labeled_corpus(size_t n, const std::vector<std::string>& labels) {
    Corpus c;
    c.header.seed = 1;
    c.header.manifest_hash = "feedfeedfeedfeed";
    for (size_t i = 0; i < n; ++i) {
        auto r = testutil::make_record("C2", "in" + std::to_string(i), "out",
                                       labels[i % labels.size()], std::to_string(i + 1));
        c.records.push_back(std::move(r));
    }
    return c;
}

std::multiset<std::string> provenance_keys(const Corpus& c) {
    std::multiset<std::string> keys;
    for (const auto& r : c.records)
        keys.insert(r.meta.task + "|" + r.meta.source_dataset + "|" + r.meta.source_row);
    return keys;
}

}  // namespace

TEST_CASE("split produces the pilot 500/100 partition") {
    const Corpus corpus = labeled_corpus(600, {"Yes", "No"});
    const SplitResult result = split(corpus, 1.0 / 6.0, 42);
    CHECK(result.train.size() == 500);
    CHECK(result.test.size() == 100);

    auto all = provenance_keys(corpus);
    auto train = provenance_keys(result.train);
    auto test = provenance_keys(result.test);
    std::multiset<std::string> merged = train;
    merged.insert(test.begin(), test.end());
    CHECK(merged == all);

    std::set<std::string> train_set(train.begin(), train.end());
    for (const auto& k : test) CHECK_FALSE(train_set.count(k));
}

TEST_CASE("split is stratified for balanced binary labels") {
    const Corpus corpus = labeled_corpus(600, {"Yes", "No"});
    const SplitResult result = split(corpus, 1.0 / 6.0, 7);
    std::map<std::string, int> counts;
    for (const auto& r : result.test.records) ++counts[r.meta.label];
    CHECK(std::abs(counts["Yes"] - counts["No"]) <= 1);
    CHECK(result.warnings.empty());
}

TEST_CASE("split falls back to unstratified when a class is too small") {
    Corpus corpus = labeled_corpus(100, {"Yes"});
    corpus.records[5].meta.label = "No";  // a 1-item class at fraction 1/10 -> 0.1 test items
    const SplitResult result = split(corpus, 0.1, 3);
    CHECK(result.warnings.size() == 1);
    CHECK(result.test.size() == 10);
}

TEST_CASE("split rejects degenerate fractions") {
    const Corpus corpus = labeled_corpus(30, {"Yes", "No"});
    CHECK_THROWS_AS(split(corpus, 0.001, 1), ConfigError);  // rounds to zero test items
    CHECK_THROWS_AS(split(corpus, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split(corpus, 1.0, 1), ConfigError);
}

TEST_CASE("split is deterministic under seed") {
    const Corpus corpus = labeled_corpus(120, {"Yes", "No"});
    const SplitResult a = split(corpus, 0.25, 9);
    const SplitResult b = split(corpus, 0.25, 9);
    REQUIRE(a.test.size() == b.test.size());
    for (size_t i = 0; i < a.test.size(); ++i)
        CHECK(a.test.records[i].input == b.test.records[i].input);
}

TEST_CASE("merge_dedup keeps first occurrences and reports conflicts") {
    Corpus a, b;
    a.records.push_back(testutil::make_record("R17", "CCO", "0.57"));
    a.records.push_back(testutil::make_record("R17", "c1ccccc1", "-1.64"));
    b.records.push_back(testutil::make_record("R17", "CCO", "0.60"));  // same key, new target
    b.records.push_back(testutil::make_record("R17", "CCN", "0.30"));

    const DedupResult merged = merge_dedup({a, b});
    CHECK(merged.corpus.size() == 3);
    CHECK(merged.removed == 1);
    REQUIRE(merged.conflicts.size() == 1);
    CHECK(merged.corpus.records[0].output == "0.57");  // first wins

    SUBCASE("disjoint corpora sum") {
        Corpus c;
        c.records.push_back(testutil::make_record("R17", "CCCl", "-0.5"));
        CHECK(merge_dedup({a, c}).corpus.size() == 3);
    }
    SUBCASE("idempotence on the same corpus twice") {
        const DedupResult twice = merge_dedup({a, a});
        CHECK(twice.corpus.size() == a.records.size());
        CHECK(twice.removed == a.records.size());
        CHECK(twice.conflicts.empty());
    }
    SUBCASE("mixed task codes are rejected") {
        Corpus other;
        other.records.push_back(testutil::make_record("R4", "CCO", "1.0"));
        CHECK_THROWS_AS(merge_dedup({a, other}), ConfigError);
    }
    SUBCASE("custom canonicalizer") {
        Corpus upper;
        upper.records.push_back(testutil::make_record("R17", "cco", "0.57"));
        const DedupResult canon = merge_dedup(
            {a, upper}, [](const std::string& s) { return to_lower_ascii(s); });
        CHECK(canon.corpus.size() == 2);
    }
}

TEST_CASE("mix_multitask is a seeded permutation of the concatenation") {
    std::vector<Corpus> corpora;
    for (int t = 0; t < 22; ++t) {
        Corpus c;
        for (int i = 0; i < 10; ++i)
            c.records.push_back(testutil::make_record("T" + std::to_string(t),
                                                      "in" + std::to_string(i), "out", "",
                                                      std::to_string(i + 1)));
        corpora.push_back(std::move(c));
    }
    const Corpus mixed = mix_multitask(corpora, 5);
    CHECK(mixed.size() == 220);

    std::multiset<std::string> expected, actual;
    for (const auto& c : corpora)
        for (const auto& r : c.records) expected.insert(r.meta.task + "|" + r.input);
    for (const auto& r : mixed.records) actual.insert(r.meta.task + "|" + r.input);
    CHECK(expected == actual);

    const Corpus again = mix_multitask(corpora, 5);
    for (size_t i = 0; i < mixed.records.size(); ++i)
        CHECK(mixed.records[i].input == again.records[i].input);

    SUBCASE("single corpus comes back shuffled") {
        const Corpus single = mix_multitask({corpora[0]}, 8);
        CHECK(single.size() == corpora[0].size());
    }
    SUBCASE("duplicate provenance across inputs is an error") {
        CHECK_THROWS_AS(mix_multitask({corpora[0], corpora[0]}, 1), DataError);
    }
}

TEST_CASE("corpus serialization round-trips awkward characters losslessly") {
    testutil::TempDir dir;
    Corpus corpus;
    corpus.header.seed = 77;
    corpus.header.manifest_hash = "abc123abc123abc1";
    corpus.records.push_back(
        testutil::make_record("R9", "CC(N(C)C(C)=C1C)=C1/N=N/C2=CC=CC=C2", "345.0"));
    auto weird = testutil::make_record("R14", "C\\C=C/1\\CC1 \"quoted\"", "1.0");
    weird.instruction = "What is the delayed lifetime (μs) of given SMILES?";
    weird.meta.label = "";
    corpus.records.push_back(weird);

    const auto path = dir / "corpus.jsonl";
    write_corpus(corpus, path);
    const ReadResult loaded = read_corpus(path);
    CHECK(loaded.warnings.empty());
    REQUIRE(loaded.corpus.size() == 2);
    CHECK(loaded.corpus.header.seed == 77);
    CHECK(loaded.corpus.header.manifest_hash == "abc123abc123abc1");
    for (size_t i = 0; i < corpus.records.size(); ++i) {
        CHECK(loaded.corpus.records[i].instruction == corpus.records[i].instruction);
        CHECK(loaded.corpus.records[i].input == corpus.records[i].input);
        CHECK(loaded.corpus.records[i].output == corpus.records[i].output);
        CHECK(loaded.corpus.records[i].meta.task == corpus.records[i].meta.task);
        CHECK(loaded.corpus.records[i].meta.origin == corpus.records[i].meta.origin);
    }

    // byte-identical rewrite
    write_corpus(loaded.corpus, dir / "again.jsonl");
    CHECK(read_text_file(dir / "again.jsonl") == read_text_file(path));
    CHECK(read_text_file(dir / "again.jsonl.meta") == read_text_file(path.string() + ".meta"));
}

TEST_CASE("corpus reader reports truncated and malformed lines") {
    testutil::TempDir dir;
    const auto path = dir / "bad.jsonl";

    write_text_file(path, "{\"instruction\":\"a\",\"input\":\"b\",\"output\":\"c\"}\n{\"instr");
    CHECK_THROWS_WITH_AS(read_corpus(path),
                         doctest::Contains("line 2"), DataError);

    write_text_file(path, "not json at all\n");
    CHECK_THROWS_AS(read_corpus(path), DataError);

    write_text_file(path, "{\"instruction\":\"a\"}\n");
    CHECK_THROWS_AS(read_corpus(path), DataError);
}

TEST_CASE("missing sidecar degrades to origin=unknown with a warning") {
    testutil::TempDir dir;
    const auto path = dir / "nometa.jsonl";
    write_text_file(path, "{\"instruction\":\"a\",\"input\":\"b\",\"output\":\"c\"}\n");
    const ReadResult loaded = read_corpus(path);
    REQUIRE(loaded.corpus.size() == 1);
    CHECK(loaded.corpus.records[0].meta.origin == Origin::Unknown);
    CHECK(loaded.warnings.size() == 1);
}

TEST_CASE("schema version mismatches are rejected") {
    testutil::TempDir dir;
    const auto path = dir / "v2.jsonl";
    write_text_file(path, "{\"instruction\":\"a\",\"input\":\"b\",\"output\":\"c\"}\n");
    write_text_file(dir / "v2.jsonl.meta",
                    "{\"schema_version\":2,\"seed\":0,\"manifest_hash\":\"\"}\n"
                    "{\"task\":\"\",\"template\":\"\",\"origin\":\"real\",\"seed\":0}\n");
    CHECK_THROWS_AS(read_corpus(path), DataError);
}
