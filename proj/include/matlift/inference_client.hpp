#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "matlift/dataset_ops.hpp"
#include "matlift/instruction.hpp"

namespace matlift {

struct RetryPolicy {
    int max_attempts = 4;
    int base_delay_ms = 200;  // doubled per attempt, jittered
    int max_delay_ms = 5000;
};

enum class WireProtocol { ChatCompletions, Completions };

struct InferenceParams {
    double temperature = 0.8;
    double top_p = 0.75;
    int max_tokens = 256;
    std::string endpoint;    // scheme://host[:port]
    std::string model_name;
    std::string api_key;     // sent as a bearer token when non-empty
    int parallelism = 4;
    RetryPolicy retry;
    WireProtocol protocol = WireProtocol::ChatCompletions;
    int timeout_sec = 60;
};

// Sampling presets: property-prediction inference vs QA generation.
InferenceParams task_inference_preset();   // temperature 0.8, top_p 0.75
InferenceParams qa_generation_preset();    // temperature 0.6, top_p 0.9

struct PredictionRecord {
    enum class Status { Ok, Failed };
    std::string task;
    std::string source_dataset;
    std::string source_row;
    std::string prompt_sent;
    std::string raw_output;
    double latency_ms = 0.0;
    int attempt_count = 0;
    Status status = Status::Failed;
    std::string error;
};

// Instruction and instance input concatenated with a newline; the input is
// omitted entirely when empty. Gold output never appears.
std::string assemble_prompt(const InstructionRecord& record);

struct CompletionResult {
    bool ok = false;
    std::string text;
    int http_status = 0;
    int attempts = 0;
    double latency_ms = 0.0;
    std::string error;
};

class InferenceClient {
public:
    explicit InferenceClient(InferenceParams params);

    // Single completion with retry on 429/5xx/timeouts; other 4xx fail fast.
    CompletionResult complete(const std::string& prompt);

    // One result per corpus record, order-aligned. At most params.parallelism
    // requests in flight. Completed records are checkpointed line by line so
    // an interrupted batch resumes without re-querying them.
    std::vector<PredictionRecord> batch_evaluate(const Corpus& test,
                                                 const std::filesystem::path& checkpoint);

    const InferenceParams& params() const { return params_; }

private:
    InferenceParams params_;
};

void write_predictions(const std::vector<PredictionRecord>& records,
                       const std::filesystem::path& path);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace matlift
