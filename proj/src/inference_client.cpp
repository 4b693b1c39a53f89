#include "matlift/inference_client.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "matlift/csv.hpp"
#include "matlift/errors.hpp"

namespace matlift {

using nlohmann::json;
using nlohmann::ordered_json;

InferenceParams task_inference_preset() {
    InferenceParams p;
    p.temperature = 0.8;
    p.top_p = 0.75;
    return p;
}

InferenceParams qa_generation_preset() {
    InferenceParams p;
    p.temperature = 0.6;
    p.top_p = 0.9;
    return p;
}

std::string assemble_prompt(const InstructionRecord& record) {
    if (record.instruction.empty()) throw DataError("assemble_prompt: empty instruction");
    if (record.input.empty()) return record.instruction;
    return record.instruction + "\n" + record.input;
}

InferenceClient::InferenceClient(InferenceParams params) : params_(std::move(params)) {
    if (params_.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (params_.temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (!(params_.top_p > 0.0 && params_.top_p <= 1.0))
        throw ConfigError("top_p must be in (0, 1]");
    if (params_.endpoint.empty()) throw ConfigError("endpoint not set");
}

namespace {

struct ParsedResponse {
    bool ok = false;
    std::string text;
    std::string error;
};

ParsedResponse extract_completion(WireProtocol protocol, const std::string& body) {
    ParsedResponse out;
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::parse_error& e) {
        out.error = std::string("malformed response body: ") + e.what();
        return out;
    }
    try {
        const auto& choice = doc.at("choices").at(0);
        if (protocol == WireProtocol::ChatCompletions)
            out.text = choice.at("message").at("content").get<std::string>();
        else
            out.text = choice.at("text").get<std::string>();
        out.ok = true;
    } catch (const json::exception& e) {
        out.error = std::string("malformed response body: ") + e.what();
    }
    return out;
}

bool transient_status(int status) { return status == 429 || (status >= 500 && status < 600); }

int backoff_ms(const RetryPolicy& retry, int attempt) {
    int delay = retry.base_delay_ms;
    for (int i = 1; i < attempt && delay < retry.max_delay_ms; ++i) delay *= 2;
    delay = std::min(delay, retry.max_delay_ms);
    // Retry jitter is outside the seeded determinism surface.
    static thread_local std::mt19937 jitter_rng{std::random_device{}()};
    if (delay > 1) delay += static_cast<int>(jitter_rng() % static_cast<unsigned>(delay / 2 + 1));
    return delay;
}

}  // namespace

CompletionResult InferenceClient::complete(const std::string& prompt) {
    CompletionResult result;

    ordered_json body;
    body["model"] = params_.model_name;
    if (params_.protocol == WireProtocol::ChatCompletions)
        body["messages"] = ordered_json::array({{{"role", "user"}, {"content", prompt}}});
    else
        body["prompt"] = prompt;
    body["temperature"] = params_.temperature;
    body["top_p"] = params_.top_p;
    body["max_tokens"] = params_.max_tokens;
    const std::string payload = body.dump();
    const char* path = params_.protocol == WireProtocol::ChatCompletions
                           ? "/v1/chat/completions"
                           : "/v1/completions";

    httplib::Headers headers;
    if (!params_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + params_.api_key);

    const auto started = std::chrono::steady_clock::now();
    for (int attempt = 1; attempt <= params_.retry.max_attempts; ++attempt) {
        result.attempts = attempt;
        httplib::Client client(params_.endpoint);
        client.set_connection_timeout(params_.timeout_sec, 0);
        client.set_read_timeout(params_.timeout_sec, 0);
        client.set_write_timeout(params_.timeout_sec, 0);

        auto res = client.Post(path, headers, payload, "application/json");
        const auto elapsed = std::chrono::steady_clock::now() - started;
        result.latency_ms =
            std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(elapsed).count();

        if (!res) {
            result.error = "transport error: " + httplib::to_string(res.error());
        } else {
            result.http_status = res->status;
            if (res->status >= 200 && res->status < 300) {
                const ParsedResponse parsed = extract_completion(params_.protocol, res->body);
                if (parsed.ok) {
                    result.ok = true;
                    result.text = parsed.text;
                    result.error.clear();
                    return result;
                }
                result.error = parsed.error;
                return result;  // well-formed HTTP but bad body: not retryable
            }
            result.error = "http status " + std::to_string(res->status);
            if (!transient_status(res->status)) return result;  // 4xx other than 429
        }
        if (attempt < params_.retry.max_attempts)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(backoff_ms(params_.retry, attempt)));
    }
    return result;
}

namespace {

ordered_json checkpoint_line(size_t index, const PredictionRecord& r) {
    ordered_json j;
    j["index"] = index;
    j["status"] = r.status == PredictionRecord::Status::Ok ? "ok" : "failed";
    j["raw_output"] = r.raw_output;
    j["latency_ms"] = r.latency_ms;
    j["attempts"] = r.attempt_count;
    j["error"] = r.error;
    return j;
}

std::map<size_t, PredictionRecord> load_checkpoint(const std::filesystem::path& path,
                                                   size_t corpus_size) {
    std::map<size_t, PredictionRecord> done;
    if (path.empty() || !std::filesystem::exists(path)) return done;
    const std::string text = read_text_file(path);
    size_t line_no = 0;
    size_t start = 0;
    while (start < text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        const std::string_view line(text.data() + start, nl - start);
        start = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path.string() + ": checkpoint line " + std::to_string(line_no) +
                            " corrupt: " + e.what());
        }
        if (!j.contains("index") || !j.contains("status"))
            throw DataError(path.string() + ": checkpoint line " + std::to_string(line_no) +
                            " corrupt: missing index/status");
        const size_t index = j["index"].get<size_t>();
        if (index >= corpus_size)
            throw DataError(path.string() + ": checkpoint index " + std::to_string(index) +
                            " out of range for corpus of " + std::to_string(corpus_size));
        PredictionRecord r;
        r.status = j["status"] == "ok" ? PredictionRecord::Status::Ok
                                       : PredictionRecord::Status::Failed;
        r.raw_output = j.value("raw_output", "");
        r.latency_ms = j.value("latency_ms", 0.0);
        r.attempt_count = j.value("attempts", 0);
        r.error = j.value("error", "");
        done[index] = std::move(r);
    }
    return done;
}

}  // namespace

std::vector<PredictionRecord> InferenceClient::batch_evaluate(
    const Corpus& test, const std::filesystem::path& checkpoint) {
    const size_t n = test.size();
    std::vector<PredictionRecord> results(n);
    for (size_t i = 0; i < n; ++i) {
        const auto& rec = test.records[i];
        results[i].task = rec.meta.task;
        results[i].source_dataset = rec.meta.source_dataset;
        results[i].source_row = rec.meta.source_row;
        results[i].prompt_sent = assemble_prompt(rec);
    }

    const auto done = load_checkpoint(checkpoint, n);
    std::vector<size_t> pending;
    for (size_t i = 0; i < n; ++i) {
        const auto it = done.find(i);
        if (it == done.end()) {
            pending.push_back(i);
            continue;
        }
        results[i].status = it->second.status;
        results[i].raw_output = it->second.raw_output;
        results[i].latency_ms = it->second.latency_ms;
        results[i].attempt_count = it->second.attempt_count;
        results[i].error = it->second.error;
    }

    std::ofstream checkpoint_out;
    std::mutex checkpoint_mutex;  // single writer for the checkpoint file
    if (!checkpoint.empty()) {
        if (checkpoint.has_parent_path())
            std::filesystem::create_directories(checkpoint.parent_path());
        checkpoint_out.open(checkpoint, std::ios::app);
        if (!checkpoint_out)
            throw DataError("cannot open checkpoint for append: " + checkpoint.string());
    }

    std::atomic<size_t> cursor{0};
    std::atomic<bool> auth_failure{false};
    auto worker = [&] {
        for (;;) {
            if (auth_failure.load()) return;
            const size_t slot = cursor.fetch_add(1);
            if (slot >= pending.size()) return;
            const size_t index = pending[slot];
            const CompletionResult c = complete(results[index].prompt_sent);
            results[index].raw_output = c.text;
            results[index].latency_ms = c.latency_ms;
            results[index].attempt_count = c.attempts;
            results[index].error = c.error;
            results[index].status =
                c.ok ? PredictionRecord::Status::Ok : PredictionRecord::Status::Failed;
            if (!c.ok && (c.http_status == 401 || c.http_status == 403)) auth_failure.store(true);
            if (checkpoint_out.is_open()) {
                std::lock_guard<std::mutex> lock(checkpoint_mutex);
                checkpoint_out << checkpoint_line(index, results[index]).dump() << '\n';
                checkpoint_out.flush();
            }
        }
    };

    const size_t thread_count =
        std::min(static_cast<size_t>(params_.parallelism), std::max<size_t>(pending.size(), 1));
    std::vector<std::thread> threads;
    threads.reserve(thread_count);
    for (size_t t = 0; t < thread_count; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    if (auth_failure.load())
        throw EnvError("endpoint rejected credentials (HTTP 401/403)");
    if (!pending.empty()) {
        const bool any_ok = std::any_of(results.begin(), results.end(), [](const auto& r) {
            return r.status == PredictionRecord::Status::Ok;
        });
        if (!any_ok) throw EnvError("endpoint hard-down: every record in the batch failed");
    }
    return results;
}

void write_predictions(const std::vector<PredictionRecord>& records,
                       const std::filesystem::path& path) {
    std::ostringstream out;
    for (const auto& r : records) {
        ordered_json j;
        j["task"] = r.task;
        j["source_dataset"] = r.source_dataset;
        j["source_row"] = r.source_row;
        j["prompt_sent"] = r.prompt_sent;
        j["raw_output"] = r.raw_output;
        j["latency_ms"] = r.latency_ms;
        j["attempts"] = r.attempt_count;
        j["status"] = r.status == PredictionRecord::Status::Ok ? "ok" : "failed";
        j["error"] = r.error;
        out << j.dump() << '\n';
    }
    write_text_file(path, out.str());
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::vector<PredictionRecord> records;
    size_t line_no = 0;
    size_t start = 0;
    while (start < text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        const std::string_view line(text.data() + start, nl - start);
        start = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        PredictionRecord r;
        r.task = j.value("task", "");
        r.source_dataset = j.value("source_dataset", "");
        r.source_row = j.value("source_row", "");
        r.prompt_sent = j.value("prompt_sent", "");
        r.raw_output = j.value("raw_output", "");
        r.latency_ms = j.value("latency_ms", 0.0);
        r.attempt_count = j.value("attempts", 0);
        r.status = j.value("status", "failed") == "ok" ? PredictionRecord::Status::Ok
                                                        : PredictionRecord::Status::Failed;
        r.error = j.value("error", "");
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace matlift
