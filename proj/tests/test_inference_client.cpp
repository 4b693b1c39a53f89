#include <doctest.h>

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "matlift/csv.hpp"
#include "matlift/errors.hpp"
#include "matlift/inference_client.hpp"
#include "test_support.hpp"

using namespace matlift;
using nlohmann::json;

namespace {

// Responder status for "send the text verbatim with HTTP 200".
constexpr int kRawOk = -200;

// Deterministic chat-completions mock. Behavior is a pure function of the
// prompt text, so interrupted and restarted batches must agree.
class MockServer {
public:
    using Responder = std::function<std::pair<int, std::string>(const std::string& prompt)>;

    explicit MockServer(Responder responder) : responder_(std::move(responder)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            handle(req, res, /*chat=*/true);
        });
        server_.Post("/v1/completions", [this](const httplib::Request& req,
                                               httplib::Response& res) {
            handle(req, res, /*chat=*/false);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockServer() {
        server_.stop();
        thread_.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int request_count() const { return request_count_.load(); }
    int max_in_flight() const { return max_in_flight_.load(); }
    void reset_counters() {
        request_count_.store(0);
        max_in_flight_.store(0);
    }
    json last_body() {
        std::lock_guard<std::mutex> lock(mutex_);
        return last_body_;
    }

    std::chrono::milliseconds handler_delay{0};

private:
    void handle(const httplib::Request& req, httplib::Response& res, bool chat) {
        const int now = in_flight_.fetch_add(1) + 1;
        int seen = max_in_flight_.load();
        while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
        }
        request_count_.fetch_add(1);

        const json body = json::parse(req.body);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            last_body_ = body;
        }
        const std::string prompt =
            chat ? body.at("messages").at(0).at("content").get<std::string>()
                 : body.at("prompt").get<std::string>();

        if (handler_delay.count() > 0) std::this_thread::sleep_for(handler_delay);

        const auto [status, text] = responder_(prompt);
        if (status == kRawOk) {
            // 200 with the text sent verbatim (for malformed-body tests)
            res.status = 200;
            res.set_content(text, "application/json");
        } else if (status == 200) {
            res.status = status;
            json out;
            if (chat)
                out = {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}};
            else
                out = {{"choices", {{{"text", text}}}}};
            res.set_content(out.dump(), "application/json");
        } else {
            res.status = status;
            res.set_content(text, "text/plain");
        }
        in_flight_.fetch_sub(1);
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    Responder responder_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
    std::atomic<int> request_count_{0};
    std::mutex mutex_;
    json last_body_;
};

InferenceParams fast_params(const MockServer& server) {
    InferenceParams params = task_inference_preset();
    params.endpoint = server.endpoint();
    params.model_name = "mock-model";
    params.retry.base_delay_ms = 2;
    params.retry.max_delay_ms = 10;
    params.timeout_sec = 5;
    return params;
}

Corpus echo_corpus(size_t n) {
    Corpus corpus;
    for (size_t i = 0; i < n; ++i) {
        auto rec = testutil::make_record("R16", "mat" + std::to_string(i),
                                         std::to_string(i) + ".5", "", std::to_string(i + 1));
        rec.instruction = "What is the averaged band gap of given material?";
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

// Echo the material token back so alignment is checkable per record.
std::pair<int, std::string> echo_responder(const std::string& prompt) {
    const size_t nl = prompt.find('\n');
    return {200, "echo:" + (nl == std::string::npos ? prompt : prompt.substr(nl + 1))};
}

}  // namespace

TEST_CASE("assemble_prompt concatenates instruction and input, omits gold") {
    InstructionRecord rec;
    rec.instruction = "Tell me if this composition is a metal.";
    rec.input = "BaAg2";
    rec.output = "Yes, BaAg2 is a metal.";
    CHECK(assemble_prompt(rec) == "Tell me if this composition is a metal.\nBaAg2");
    CHECK(assemble_prompt(rec).find("Yes") == std::string::npos);

    rec.input.clear();
    CHECK(assemble_prompt(rec) == "Tell me if this composition is a metal.");

    rec.instruction.clear();
    CHECK_THROWS_AS(assemble_prompt(rec), DataError);
}

TEST_CASE("presets carry the documented sampling parameters") {
    CHECK(task_inference_preset().temperature == doctest::Approx(0.8));
    CHECK(task_inference_preset().top_p == doctest::Approx(0.75));
    CHECK(qa_generation_preset().temperature == doctest::Approx(0.6));
    CHECK(qa_generation_preset().top_p == doctest::Approx(0.9));
}

TEST_CASE("params are validated") {
    InferenceParams params;
    params.endpoint = "http://127.0.0.1:1";
    params.parallelism = 0;
    CHECK_THROWS_AS(InferenceClient{params}, ConfigError);
    params.parallelism = 1;
    params.top_p = 0.0;
    CHECK_THROWS_AS(InferenceClient{params}, ConfigError);
    params.top_p = 0.75;
    params.temperature = -1;
    CHECK_THROWS_AS(InferenceClient{params}, ConfigError);
}

TEST_CASE("complete returns the first completion and sends the defaults") {
    MockServer server([](const std::string&) { return std::pair<int, std::string>{200, "1.37"}; });
    InferenceClient client(fast_params(server));
    const CompletionResult result = client.complete("What is the band gap?");
    CHECK(result.ok);
    CHECK(result.text == "1.37");
    CHECK(result.attempts == 1);
    CHECK(result.latency_ms >= 0.0);

    const json body = server.last_body();
    CHECK(body.at("model") == "mock-model");
    CHECK(body.at("temperature").get<double>() == doctest::Approx(0.8));
    CHECK(body.at("top_p").get<double>() == doctest::Approx(0.75));
    CHECK(body.contains("max_tokens"));
}

TEST_CASE("completions protocol fallback uses the prompt field") {
    MockServer server(echo_responder);
    InferenceParams params = fast_params(server);
    params.protocol = WireProtocol::Completions;
    InferenceClient client(params);
    const CompletionResult result = client.complete("line1\nline2");
    CHECK(result.ok);
    CHECK(result.text == "echo:line2");
}

TEST_CASE("429 is retried, other 4xx are not") {
    std::atomic<int> hits{0};
    MockServer server([&hits](const std::string& prompt) -> std::pair<int, std::string> {
        if (prompt.find("throttle") != std::string::npos && hits.fetch_add(1) == 0)
            return {429, "slow down"};
        if (prompt.find("gone") != std::string::npos) return {404, "missing"};
        return {200, "ok"};
    });
    InferenceClient client(fast_params(server));

    const CompletionResult throttled = client.complete("throttle me");
    CHECK(throttled.ok);
    CHECK(throttled.attempts == 2);

    const int before = server.request_count();
    const CompletionResult gone = client.complete("gone");
    CHECK_FALSE(gone.ok);
    CHECK(gone.attempts == 1);
    CHECK(gone.http_status == 404);
    CHECK(server.request_count() == before + 1);  // no retry on 404
}

TEST_CASE("5xx responses exhaust the retry budget then fail") {
    MockServer server([](const std::string&) { return std::pair<int, std::string>{503, "down"}; });
    InferenceParams params = fast_params(server);
    params.retry.max_attempts = 3;
    InferenceClient client(params);
    const CompletionResult result = client.complete("x");
    CHECK_FALSE(result.ok);
    CHECK(result.attempts == 3);
    CHECK(server.request_count() == 3);
}

TEST_CASE("malformed response bodies fail without retry") {
    MockServer server([](const std::string& prompt) -> std::pair<int, std::string> {
        if (prompt.find("junk") != std::string::npos) return {kRawOk, "this is not json"};
        return {kRawOk, "{\"unexpected\":\"shape\"}"};
    });
    InferenceClient client(fast_params(server));

    const CompletionResult junk = client.complete("junk please");
    CHECK_FALSE(junk.ok);
    CHECK(junk.attempts == 1);
    CHECK(junk.error.find("malformed response body") != std::string::npos);

    const CompletionResult shape = client.complete("wrong shape");
    CHECK_FALSE(shape.ok);
    CHECK(shape.attempts == 1);
    CHECK(server.request_count() == 2);  // neither was retried
}

TEST_CASE("batch results align with corpus order under parallelism") {
    MockServer server(echo_responder);
    server.handler_delay = std::chrono::milliseconds(2);

    InferenceParams params = fast_params(server);
    params.parallelism = 8;
    InferenceClient client(params);

    testutil::TempDir dir;
    const Corpus corpus = echo_corpus(100);
    const auto results = client.batch_evaluate(corpus, dir / "ckpt.jsonl");
    REQUIRE(results.size() == 100);
    for (size_t i = 0; i < results.size(); ++i) {
        CHECK(results[i].status == PredictionRecord::Status::Ok);
        CHECK(results[i].raw_output == "echo:mat" + std::to_string(i));
        CHECK(results[i].task == "R16");
        CHECK(results[i].source_row == std::to_string(i + 1));
    }
    CHECK(server.max_in_flight() <= 8);
    CHECK(server.max_in_flight() >= 2);  // the pool actually ran concurrently
    CHECK(server.request_count() == 100);
}

TEST_CASE("partial permanent failures do not abort the batch") {
    MockServer server([](const std::string& prompt) -> std::pair<int, std::string> {
        if (prompt.ends_with("mat3") || prompt.ends_with("mat13") || prompt.ends_with("mat23"))
            return {400, "bad request"};
        return echo_responder(prompt);
    });
    InferenceParams params = fast_params(server);
    params.parallelism = 4;
    InferenceClient client(params);

    testutil::TempDir dir;
    Corpus corpus = echo_corpus(100);
    const auto results = client.batch_evaluate(corpus, dir / "ckpt.jsonl");
    size_t ok = 0, failed = 0;
    for (const auto& r : results)
        (r.status == PredictionRecord::Status::Ok ? ok : failed)++;
    CHECK(ok == 97);
    CHECK(failed == 3);
}

TEST_CASE("resume issues exactly the remaining requests and agrees with a full run") {
    testutil::TempDir dir;
    const Corpus corpus = echo_corpus(100);

    MockServer server([](const std::string& prompt) -> std::pair<int, std::string> {
        if (prompt.ends_with("mat7") || prompt.ends_with("mat42")) return {400, "no"};
        return echo_responder(prompt);
    });
    InferenceParams params = fast_params(server);
    params.parallelism = 6;
    InferenceClient client(params);

    const auto full_path = dir / "full.jsonl";
    const auto full = client.batch_evaluate(corpus, full_path);
    CHECK(server.request_count() == 100);

    // Simulate an interrupt: keep only the first 60 checkpoint lines.
    const std::string checkpoint = read_text_file(full_path);
    std::vector<std::string> lines;
    size_t pos = 0;
    while (pos < checkpoint.size()) {
        const size_t nl = checkpoint.find('\n', pos);
        lines.push_back(checkpoint.substr(pos, nl - pos));
        pos = nl + 1;
    }
    REQUIRE(lines.size() == 100);
    std::string truncated;
    for (size_t i = 0; i < 60; ++i) truncated += lines[i] + "\n";
    const auto resume_path = dir / "resume.jsonl";
    write_text_file(resume_path, truncated);

    server.reset_counters();
    const auto resumed = client.batch_evaluate(corpus, resume_path);
    CHECK(server.request_count() == 40);

    // Identical ok/failed outcome per record, full run vs interrupt+resume.
    REQUIRE(resumed.size() == full.size());
    for (size_t i = 0; i < full.size(); ++i) {
        CHECK(resumed[i].status == full[i].status);
        CHECK(resumed[i].raw_output == full[i].raw_output);
    }
}

TEST_CASE("corrupt checkpoints are rejected") {
    testutil::TempDir dir;
    const auto path = dir / "bad.jsonl";
    write_text_file(path, "{\"index\":0,\"status\":\"ok\"}\nnot json\n");
    MockServer server(echo_responder);
    InferenceClient client(fast_params(server));
    CHECK_THROWS_AS(client.batch_evaluate(echo_corpus(3), path), DataError);

    write_text_file(path, "{\"index\":99,\"status\":\"ok\"}\n");
    CHECK_THROWS_AS(client.batch_evaluate(echo_corpus(3), path), DataError);
}

TEST_CASE("auth failures raise EnvError") {
    MockServer server([](const std::string&) { return std::pair<int, std::string>{401, "no"}; });
    InferenceClient client(fast_params(server));
    testutil::TempDir dir;
    CHECK_THROWS_AS(client.batch_evaluate(echo_corpus(5), dir / "c.jsonl"), EnvError);
}

TEST_CASE("a fully failing batch is a batch-level error") {
    MockServer server([](const std::string&) { return std::pair<int, std::string>{400, "no"}; });
    InferenceClient client(fast_params(server));
    testutil::TempDir dir;
    CHECK_THROWS_AS(client.batch_evaluate(echo_corpus(5), dir / "c.jsonl"), EnvError);
}

TEST_CASE("prediction records round-trip through their file format") {
    testutil::TempDir dir;
    std::vector<PredictionRecord> records(2);
    records[0].task = "R16";
    records[0].source_row = "1";
    records[0].prompt_sent = "p\nq";
    records[0].raw_output = "1.37";
    records[0].latency_ms = 12.5;
    records[0].attempt_count = 2;
    records[0].status = PredictionRecord::Status::Ok;
    records[1].task = "R16";
    records[1].status = PredictionRecord::Status::Failed;
    records[1].error = "http status 503";

    const auto path = dir / "preds.jsonl";
    write_predictions(records, path);
    const auto loaded = read_predictions(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].raw_output == "1.37");
    CHECK(loaded[0].attempt_count == 2);
    CHECK(loaded[0].status == PredictionRecord::Status::Ok);
    CHECK(loaded[1].status == PredictionRecord::Status::Failed);
    CHECK(loaded[1].error == "http status 503");
}

TEST_CASE("empty corpus yields an empty batch") {
    MockServer server(echo_responder);
    InferenceClient client(fast_params(server));
    testutil::TempDir dir;
    CHECK(client.batch_evaluate(Corpus{}, dir / "c.jsonl").empty());
}
