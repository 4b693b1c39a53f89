#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "matlift/csv.hpp"
#include "matlift/dataset_ops.hpp"
#include "matlift/text.hpp"
#include "test_support.hpp"

#ifndef MATLIFT_CLI_PATH
#define MATLIFT_CLI_PATH "matlift"
#endif

using namespace matlift;
using nlohmann::json;

namespace {

int run_cli(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = std::string(MATLIFT_CLI_PATH) + " " + args + " > " + log.string() +
                            " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string manifest_arg() { return "--manifest " + testutil::manifest_path().string(); }

}  // namespace

TEST_CASE("convert reproduces the golden first record and is rerun-stable") {
    testutil::TempDir dir;
    const auto out = dir / "c1.jsonl";
    const std::string cmd = "convert " + manifest_arg() + " --task C1 --rows " +
                            testutil::fixture("rows/C1.csv").string() + " --seed 11 -o " +
                            out.string();
    REQUIRE(run_cli(cmd, dir / "log1.txt") == 0);

    const ReadResult loaded = read_corpus(out);
    REQUIRE(!loaded.corpus.records.empty());
    const auto& first = loaded.corpus.records[0];
    CHECK(first.instruction == "Tell me if this composition is a metal.");
    CHECK(first.input == "BaAg2");
    CHECK(first.output == "Yes, BaAg2 is a metal.");

    // stage manifest exists and records the seed
    const json stage = json::parse(read_text_file(out.string() + ".stage.json"));
    CHECK(stage.at("seed") == 11);
    CHECK(stage.at("records") == 3);

    // byte-identical rerun
    const std::string bytes = read_text_file(out);
    const std::string meta = read_text_file(out.string() + ".meta");
    REQUIRE(run_cli(cmd, dir / "log2.txt") == 0);
    CHECK(read_text_file(out) == bytes);
    CHECK(read_text_file(out.string() + ".meta") == meta);
}

TEST_CASE("convert with a bad task code exits 2") {
    testutil::TempDir dir;
    const int code = run_cli("convert " + manifest_arg() + " --task Z9 --rows " +
                                 testutil::fixture("rows/C1.csv").string() + " -o " +
                                 (dir / "x.jsonl").string(),
                             dir / "log.txt");
    CHECK(code == 2);
}

TEST_CASE("inject reports the counterexample count in its stage manifest") {
    testutil::TempDir dir;

    // Build a 500-record corpus for C2 from a generated rows file.
    std::string rows = "composition,glass_forming\n";
    for (int i = 0; i < 500; ++i)
        rows += "Comp" + std::to_string(i) + "," + (i % 2 ? "Yes" : "No") + "\n";
    write_text_file(dir / "c2.csv", rows);

    REQUIRE(run_cli("convert " + manifest_arg() + " --task C2 --rows " +
                        (dir / "c2.csv").string() + " --seed 3 -o " +
                        (dir / "c2.jsonl").string(),
                    dir / "log1.txt") == 0);

    REQUIRE(run_cli("inject " + manifest_arg() + " --task C2 --in " +
                        (dir / "c2.jsonl").string() + " --ratio 0.05 --seed 4 -o " +
                        (dir / "c2.injected.jsonl").string() + " --testset " +
                        (dir / "c2.counter.jsonl").string(),
                    dir / "log2.txt") == 0);

    const json stage =
        json::parse(read_text_file((dir / "c2.injected.jsonl").string() + ".stage.json"));
    CHECK(stage.at("counterexamples") == 25);
    CHECK(stage.at("total_records") == 500);

    const ReadResult testset = read_corpus(dir / "c2.counter.jsonl");
    CHECK(testset.corpus.size() == 100);
}

TEST_CASE("synth stage manifest reports the code alphabet and length bounds") {
    testutil::TempDir dir;
    REQUIRE(run_cli("synth " + manifest_arg() + " --variant syn2 --aux R3=" +
                        testutil::fixture("rows/R3.csv").string() + " --seed 5 --output-dir " +
                        dir.path().string(),
                    dir / "log.txt") == 0);
    const json stage =
        json::parse(read_text_file((dir / "R3.syn2.csv").string() + ".stage.json"));
    CHECK(stage.at("code_alphabet") == "A-Z");
    CHECK(stage.at("code_length_min") == 3);
    CHECK(stage.at("code_length_max") == 10);
}

TEST_CASE("qa-parse and qa-filter handle the shipped fixture") {
    testutil::TempDir dir;
    REQUIRE(run_cli("qa-parse --in " + testutil::fixture("qa_generator_output.txt").string() +
                        " --source-id demo -o " + (dir / "pairs.jsonl").string(),
                    dir / "log1.txt") == 0);
    REQUIRE(run_cli("qa-filter --in " + (dir / "pairs.jsonl").string() + " -o " +
                        (dir / "kept.jsonl").string() + " --emit-corpus " +
                        (dir / "qa.jsonl").string(),
                    dir / "log2.txt") == 0);

    const json stage = json::parse(read_text_file((dir / "kept.jsonl").string() + ".stage.json"));
    CHECK(stage.at("removed") == 1);
    CHECK(stage.at("kept") == 9);

    const ReadResult corpus = read_corpus(dir / "qa.jsonl");
    CHECK(corpus.corpus.size() == 9);
    CHECK(corpus.corpus.records[0].input.empty());
    CHECK(corpus.corpus.records[0].meta.origin == Origin::Qa);
}

TEST_CASE("inject honors --pool-file and --refusal-text") {
    testutil::TempDir dir;
    std::string rows = "composition,glass_forming\n";
    for (int i = 0; i < 20; ++i)
        rows += "Comp" + std::to_string(i) + "," + (i % 2 ? "Yes" : "No") + "\n";
    write_text_file(dir / "c2.csv", rows);
    write_text_file(dir / "pool.txt", "gadget\nwidget\ntrinket\n");

    REQUIRE(run_cli("convert " + manifest_arg() + " --task C2 --rows " +
                        (dir / "c2.csv").string() + " --seed 1 -o " + (dir / "c2.jsonl").string(),
                    dir / "log1.txt") == 0);
    REQUIRE(run_cli("inject " + manifest_arg() + " --task C2 --in " +
                        (dir / "c2.jsonl").string() +
                        " --ratio 0.1 --seed 2 --no-random-strings --pool-file " +
                        (dir / "pool.txt").string() +
                        " --refusal-text \"Input rejected: not a <material_type>.\" -o " +
                        (dir / "out.jsonl").string(),
                    dir / "log2.txt") == 0);

    const ReadResult out = read_corpus(dir / "out.jsonl");
    size_t counters = 0;
    for (const auto& r : out.corpus.records) {
        if (r.meta.origin != Origin::Counterexample) continue;
        ++counters;
        CHECK(r.output == "Input rejected: not a composition.");
        const bool from_pool =
            r.input == "gadget" || r.input == "widget" || r.input == "trinket";
        CHECK(from_pool);
    }
    CHECK(counters == 2);
    const json stage = json::parse(read_text_file((dir / "out.jsonl").string() + ".stage.json"));
    CHECK(stage.at("refusal_template") == "Input rejected: not a <material_type>.");
}

TEST_CASE("offline eval scores a prediction-record file against a gold corpus") {
    testutil::TempDir dir;
    REQUIRE(run_cli("convert " + manifest_arg() + " --task R16 --rows " +
                        testutil::fixture("rows/R16.csv").string() + " --seed 2 -o " +
                        (dir / "gold.jsonl").string(),
                    dir / "log1.txt") == 0);

    // three raw outputs, one of them unparseable
    std::string preds;
    preds += json({{"task", "R16"}, {"raw_output", "2.8"}, {"status", "ok"}}).dump() + "\n";
    preds += json({{"task", "R16"}, {"raw_output", "about 3.0 eV"}, {"status", "ok"}}).dump() +
             "\n";
    preds += json({{"task", "R16"}, {"raw_output", "beats me"}, {"status", "ok"}}).dump() + "\n";
    write_text_file(dir / "preds.jsonl", preds);

    REQUIRE(run_cli("eval " + manifest_arg() + " --task R16 --predictions " +
                        (dir / "preds.jsonl").string() + " --gold " +
                        (dir / "gold.jsonl").string() + " --report-out " +
                        (dir / "report").string(),
                    dir / "log2.txt") == 0);
    const json report = json::parse(read_text_file(dir / "report" / "report.json"));
    // gold 2.7, 3.2, 3.0; parsed 2.8, 3.0, unparseable -> MAE (0.1+0.2)/2
    CHECK(std::abs(report.at("task_rows").at(0).at("value").get<double>() - 0.15) < 1e-9);
    CHECK(report.at("task_rows").at(0).at("n_unparseable") == 1);
}

TEST_CASE("mix --general balances a science corpus against a general pool") {
    testutil::TempDir dir;
    Corpus science, general;
    for (int i = 0; i < 5; ++i)
        science.records.push_back(
            testutil::make_record("QA", "s" + std::to_string(i), "a", "", std::to_string(i)));
    for (int i = 0; i < 20; ++i)
        general.records.push_back(
            testutil::make_record("GEN", "g" + std::to_string(i), "a", "", std::to_string(i)));
    write_corpus(science, dir / "science.jsonl");
    write_corpus(general, dir / "general.jsonl");

    REQUIRE(run_cli("mix " + (dir / "science.jsonl").string() + " --general " +
                        (dir / "general.jsonl").string() + " --seed 4 -o " +
                        (dir / "mixed.jsonl").string(),
                    dir / "log.txt") == 0);
    const ReadResult mixed = read_corpus(dir / "mixed.jsonl");
    CHECK(mixed.corpus.size() == 10);
    size_t n_science = 0;
    for (const auto& r : mixed.corpus.records)
        if (r.meta.task == "QA") ++n_science;
    CHECK(n_science == 5);
}

TEST_CASE("offline eval of a predictions table reports the bandgap MAD") {
    testutil::TempDir dir;
    // PBE predictions against experimental values, tab separated
    std::string tsv = "input\tprediction\texpected\n";
    const char* rows[] = {"GaN\t1.62\t3.2",  "CdTe\t0.62\t1.6",  "ZnS\t2.07\t3.91",
                          "CZTS\t0.28\t1.6", "PbTe\t0\t0.19",    "GaAs\t0.19\t1.52",
                          "ZnO\t0.67\t3.44"};
    for (const char* r : rows) tsv += std::string(r) + "\n";
    write_text_file(dir / "table1_pbe.tsv", tsv);

    REQUIRE(run_cli("eval --predictions " + (dir / "table1_pbe.tsv").string() +
                        " --report-out " + (dir / "report").string(),
                    dir / "log.txt") == 0);

    const json report = json::parse(read_text_file(dir / "report" / "report.json"));
    REQUIRE(report.at("summaries").size() == 1);
    const double mad = report.at("summaries").at(0).at("mad").get<double>();
    CHECK(std::abs(mad - 1.43) <= 0.005 + 1e-9);
    CHECK(report.at("summaries").at(0).at("method") == "table1_pbe");
}

TEST_CASE("offline eval --compare reproduces all five method summaries") {
    testutil::TempDir dir;
    REQUIRE(run_cli("eval --compare " +
                        testutil::fixture("bandgap_comparison.csv").string() +
                        " --report-out " + (dir / "report").string(),
                    dir / "log.txt") == 0);
    const json report = json::parse(read_text_file(dir / "report" / "report.json"));
    CHECK(report.at("summaries").size() == 5);
    CHECK(report.at("comparison").size() == 35);
}

TEST_CASE("online eval against a mock endpoint writes a report and exits 0") {
    // Mock chat endpoint: known materials get a number, anything else the
    // refusal sentence.
    httplib::Server server;
    server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        const std::string prompt = body.at("messages").at(0).at("content");
        std::string text =
            "The given input is not a valid material, so its averaged band gap cannot be "
            "determined.";
        for (const char* known : {"heptazine", "anatase", "rutile"})
            if (prompt.find(known) != std::string::npos) text = "2.95";
        const json out = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}};
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    testutil::TempDir dir;
    REQUIRE(run_cli("convert " + manifest_arg() + " --task R16 --rows " +
                        testutil::fixture("rows/R16.csv").string() + " --seed 2 -o " +
                        (dir / "r16.jsonl").string(),
                    dir / "log1.txt") == 0);
    REQUIRE(run_cli("inject " + manifest_arg() + " --task R16 --in " +
                        (dir / "r16.jsonl").string() + " --ratio 0 --seed 3 -o " +
                        (dir / "unused.jsonl").string() + " --testset " +
                        (dir / "counter.jsonl").string() + " --testset-size 5",
                    dir / "log2.txt") == 0);

    const std::string cmd =
        std::string("env MATLIFT_API_KEY=test-key ") + MATLIFT_CLI_PATH + " eval " +
        manifest_arg() + " --task R16 --test " + (dir / "r16.jsonl").string() +
        " --counterexample-test " + (dir / "counter.jsonl").string() +
        " --endpoint http://127.0.0.1:" + std::to_string(port) + " --model mock" +
        " --parallelism 3 --report-out " + (dir / "report").string() + " > " +
        (dir / "log3.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 0);

    const json report = json::parse(read_text_file(dir / "report" / "report.json"));
    REQUIRE(report.at("task_rows").size() == 1);
    CHECK(report.at("task_rows").at(0).at("task") == "R16");
    CHECK(report.at("task_rows").at(0).at("metric") == "mae");
    // gold 2.7/3.2/3.0 vs constant 2.95 -> MAE (0.25+0.25+0.05)/3
    CHECK(std::abs(report.at("task_rows").at(0).at("value").get<double>() - 0.1833333) < 1e-4);
    REQUIRE(report.at("counterexamples").size() == 1);
    CHECK(report.at("counterexamples").at(0).at("rejection_rate").get<double>() ==
          doctest::Approx(1.0));
    CHECK(std::filesystem::exists(dir / "report" / "predictions.jsonl"));

    server.stop();
    listener.join();
}

TEST_CASE("online eval without the API key env var exits 3 before any request") {
    testutil::TempDir dir;
    // unset via env -u; endpoint port 1 would fail fast if a request were made
    const std::string cmd =
        std::string("env -u MATLIFT_API_KEY ") + MATLIFT_CLI_PATH + " eval " + manifest_arg() +
        " --task C1 --test " + (dir / "missing.jsonl").string() +
        " --endpoint http://127.0.0.1:1 --model m > " + (dir / "log.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 3);
}

TEST_CASE("run-config values override flags and unknown keys are rejected") {
    testutil::TempDir dir;
    write_text_file(dir / "run.json", "{\"seeds\": {\"convert\": 99}}\n");
    const auto out = dir / "c1.jsonl";
    REQUIRE(run_cli("--config " + (dir / "run.json").string() + " convert " + manifest_arg() +
                        " --task C1 --rows " + testutil::fixture("rows/C1.csv").string() +
                        " --seed 1 -o " + out.string(),
                    dir / "log1.txt") == 0);
    const json stage = json::parse(read_text_file(out.string() + ".stage.json"));
    CHECK(stage.at("seed") == 99);  // config overrode --seed 1

    write_text_file(dir / "bad.json", "{\"sedes\": {}}\n");
    CHECK(run_cli("--config " + (dir / "bad.json").string() + " convert " + manifest_arg() +
                      " --task C1 --rows " + testutil::fixture("rows/C1.csv").string() +
                      " -o " + out.string(),
                  dir / "log2.txt") == 2);
}

TEST_CASE("exported template registries feed back into convert for custom tasks") {
    testutil::TempDir dir;
    REQUIRE(run_cli("templates -o " + (dir / "templates.json").string(), dir / "log1.txt") == 0);

    // add a user-defined template and a manifest task that uses it
    json registry = json::parse(read_text_file(dir / "templates.json"));
    registry["templates"].push_back({{"id", "reg-report"},
                                     {"kind", "regression"},
                                     {"instruction", "Report the <property> of <material_type>."},
                                     {"input", "<material_representation>"},
                                     {"output", "<property_value>"}});
    write_text_file(dir / "custom_templates.json", registry.dump(2));

    write_text_file(dir / "manifest.json", R"({"tasks": [
        {"code":"U1","kind":"regression","material_type":"polymer","property":"melting point",
         "templates":["reg-report"],
         "sources":[{"dataset":"userdata","input":"polymer","target":"mp"}]}
    ]})");
    write_text_file(dir / "rows.csv", "polymer,mp\nPVC,212.5\n");

    // builtin registry rejects the unknown template id...
    CHECK(run_cli("convert --manifest " + (dir / "manifest.json").string() + " --task U1" +
                      " --rows " + (dir / "rows.csv").string() + " -o " +
                      (dir / "u1.jsonl").string(),
                  dir / "log2.txt") == 2);
    // ...the extended registry accepts it
    REQUIRE(run_cli("convert --manifest " + (dir / "manifest.json").string() +
                        " --templates " + (dir / "custom_templates.json").string() +
                        " --task U1 --rows " + (dir / "rows.csv").string() + " -o " +
                        (dir / "u1.jsonl").string(),
                    dir / "log3.txt") == 0);
    const ReadResult out = read_corpus(dir / "u1.jsonl");
    REQUIRE(out.corpus.size() == 1);
    CHECK(out.corpus.records[0].instruction == "Report the melting point of polymer.");
    CHECK(out.corpus.records[0].output == "212.5");
}

TEST_CASE("qa-parse handles concatenated streams with per-paper delimiters") {
    testutil::TempDir dir;
    std::string stream;
    stream += "Keywords: a, b\nQ1: First doc question?\nA1: First doc answer.\n";
    stream += "=====\n";
    stream += "totally unparseable document\n";
    stream += "=====\n";
    stream += "Q2: Third doc question?\nA2: Third doc answer.\n";
    write_text_file(dir / "stream.txt", stream);

    REQUIRE(run_cli("qa-parse --in " + (dir / "stream.txt").string() +
                        " --source-id batch --delimiter ===== -o " +
                        (dir / "pairs.jsonl").string(),
                    dir / "log.txt") == 0);
    const json stage =
        json::parse(read_text_file((dir / "pairs.jsonl").string() + ".stage.json"));
    CHECK(stage.at("documents_parsed") == 2);
    CHECK(stage.at("documents_failed") == 1);
    CHECK(stage.at("pairs") == 2);

    // pairs carry per-document source ids
    std::vector<std::string> ids;
    for (const auto& line : matlift::split_lines(read_text_file(dir / "pairs.jsonl")))
        if (!line.empty()) ids.push_back(json::parse(line).at("source_id"));
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] == "batch#1");
    CHECK(ids[1] == "batch#3");

    // a lone unparseable document is still a hard error
    write_text_file(dir / "junk.txt", "nothing here\n");
    CHECK(run_cli("qa-parse --in " + (dir / "junk.txt").string() + " -o " +
                      (dir / "x.jsonl").string(),
                  dir / "log2.txt") == 2);
}

TEST_CASE("usage errors exit 2") {
    testutil::TempDir dir;
    CHECK(run_cli("convert", dir / "log1.txt") == 2);          // missing required flags
    CHECK(run_cli("no-such-subcommand", dir / "log2.txt") == 2);
    CHECK(run_cli("split --in nope.jsonl --train-out a --test-out b --test-fraction nonsense",
                  dir / "log3.txt") == 2);
}
