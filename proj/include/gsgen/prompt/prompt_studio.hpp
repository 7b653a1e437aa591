#pragma once

#include "gsgen/core/image.hpp"
#include "gsgen/io/http.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gsgen {

enum class ConditionKind { Style, Edge, Scribble, Pose };

const char* to_string(ConditionKind kind);
/// Throws std::invalid_argument for anything but style|edge|scribble|pose.
ConditionKind parse_condition_kind(const std::string& name);

struct ConditionAttachment {
    ConditionKind kind = ConditionKind::Style;
    ImageBuffer image;
};

struct UserRequest {
    std::string text;
    std::vector<ConditionAttachment> conditions;
    int rounds = 3;
    int candidates = 4;

    void validate() const;
};

struct CandidateRecord {
    int round = 0;
    std::string prompt;
    ImageBuffer image;
    double score = 0.0; ///< in [0,10]
    std::string critique;
    bool selected = false;
};

struct OptimizationTranscript {
    std::vector<CandidateRecord> candidates;
    std::vector<std::string> reflections; ///< one per completed round
    int rounds_run = 0;
    std::size_t t2i_calls = 0;
    /// Index into `candidates` of the final best, if any round completed.
    std::optional<std::size_t> best;
    /// Set when a client failed permanently.
    std::string failure;

    const CandidateRecord& best_record() const;
    /// Critiques of the selected candidates so far, in round order.
    std::vector<std::string> history() const;
};

struct PromptQuery {
    std::string role = "prompt_writer";
    std::string instruction;
    std::vector<std::string> history;
    int count = 1;
};

struct PromptReply {
    std::vector<std::string> prompts;
    std::vector<std::string> critiques;
};

struct Evaluation {
    std::vector<double> scores;
    std::vector<std::string> critiques;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual PromptReply complete(const PromptQuery& query) = 0;
};

class T2iClient {
public:
    virtual ~T2iClient() = default;
    virtual ImageBuffer generate(const std::string& prompt, std::span<const ConditionAttachment> conditions,
                                 std::uint64_t seed) = 0;
};

class EvaluatorClient {
public:
    virtual ~EvaluatorClient() = default;
    virtual Evaluation evaluate(const std::string& request_text, std::span<const ImageBuffer> images) = 0;
};

/// Fills templates with the user text; the template offset advances with
/// the history length so later rounds ask for different prompts.
class TemplateLlm final : public LlmClient {
public:
    PromptReply complete(const PromptQuery& query) override;
    std::size_t calls() const { return calls_; }

private:
    std::size_t calls_ = 0;
};

/// Draws shapes whose layout comes from a hash of the prompt and seed. A
/// color word in the prompt fixes the shape color.
class ProceduralT2i final : public T2iClient {
public:
    explicit ProceduralT2i(int size = 64) : size_(size) {}
    ImageBuffer generate(const std::string& prompt, std::span<const ConditionAttachment> conditions,
                         std::uint64_t seed) override;

private:
    int size_;
};

/// Scores by how much of the image is close to the color named in the
/// request text (red when none is named).
class HeuristicEvaluator final : public EvaluatorClient {
public:
    Evaluation evaluate(const std::string& request_text, std::span<const ImageBuffer> images) override;
};

class HttpLlmClient final : public LlmClient {
public:
    explicit HttpLlmClient(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    PromptReply complete(const PromptQuery& query) override;

private:
    HttpEndpoint endpoint_;
};

class HttpT2iClient final : public T2iClient {
public:
    explicit HttpT2iClient(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    ImageBuffer generate(const std::string& prompt, std::span<const ConditionAttachment> conditions,
                         std::uint64_t seed) override;

private:
    HttpEndpoint endpoint_;
};

class HttpEvaluatorClient final : public EvaluatorClient {
public:
    explicit HttpEvaluatorClient(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    Evaluation evaluate(const std::string& request_text, std::span<const ImageBuffer> images) override;

private:
    HttpEndpoint endpoint_;
};

/// Named color the request asks for, if any.
std::optional<Vec3> color_in_text(const std::string& text);

/// N distinct prompts that each contain the user text. Duplicates are
/// dropped and the client is asked again for the shortfall, at most N times.
/// A failing call is retried once; a second failure propagates.
std::vector<std::string> generate_prompts(LlmClient& llm, const UserRequest& request,
                                          const OptimizationTranscript& history, int count);

struct ScoredCandidates {
    std::vector<double> scores;
    std::vector<std::string> critiques;
    std::size_t clamped = 0;
};

/// One score in [0,10] per image; out-of-range scores are clamped with a
/// warning. Retries once like generate_prompts.
ScoredCandidates score_candidates(EvaluatorClient& evaluator, const UserRequest& request,
                                  std::span<const ImageBuffer> images);

/// Index of the highest score, lowest index on ties.
std::size_t select_best(std::span<const double> scores);

struct PromptClients {
    LlmClient* llm = nullptr;
    T2iClient* t2i = nullptr;
    EvaluatorClient* evaluator = nullptr;
};

struct OptimizeConfig {
    double early_stop = 9.5;
    std::uint64_t seed = 0;
};

OptimizationTranscript optimize(const UserRequest& request, PromptClients clients, const OptimizeConfig& config = {});

} // namespace gsgen
