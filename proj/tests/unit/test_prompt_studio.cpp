#include "gsgen/io/codec.hpp"
#include "gsgen/prompt/prompt_studio.hpp"

#include "../support/stub_server.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <deque>

using namespace gsgen;
using nlohmann::json;

namespace {

/// Returns queued scores round by round; critiques name the round.
class ScriptedEvaluator final : public EvaluatorClient {
public:
    explicit ScriptedEvaluator(std::deque<std::vector<double>> rounds) : rounds_(std::move(rounds)) {}
    Evaluation evaluate(const std::string&, std::span<const ImageBuffer> images) override {
        if (rounds_.empty()) throw ServiceError(ServiceErrorKind::ServiceStatus, "out of scripted scores");
        Evaluation ev;
        ev.scores = rounds_.front();
        rounds_.pop_front();
        for (std::size_t i = 0; i < images.size(); ++i) ev.critiques.push_back("critique " + std::to_string(++calls_));
        return ev;
    }

private:
    std::deque<std::vector<double>> rounds_;
    int calls_ = 0;
};

class CountingT2i final : public T2iClient {
public:
    ImageBuffer generate(const std::string& prompt, std::span<const ConditionAttachment> conditions,
                         std::uint64_t seed) override {
        ++calls;
        last_conditions.assign(conditions.begin(), conditions.end());
        return inner.generate(prompt, conditions, seed);
    }
    ProceduralT2i inner{16};
    int calls = 0;
    std::vector<ConditionAttachment> last_conditions;
};

class RepeatingLlm final : public LlmClient {
public:
    PromptReply complete(const PromptQuery& query) override {
        ++calls;
        queries.push_back(query);
        PromptReply r;
        if (calls == 1) {
            r.prompts = {"a cat", "a cat", "A cat ", "a cat, painted"};
        } else {
            for (int i = 0; i < query.count; ++i) r.prompts.push_back("a cat, take " + std::to_string(calls * 10 + i));
        }
        return r;
    }
    int calls = 0;
    std::vector<PromptQuery> queries;
};

class FlakyLlm final : public LlmClient {
public:
    explicit FlakyLlm(int failures) : failures_(failures) {}
    PromptReply complete(const PromptQuery& query) override {
        ++calls;
        if (failures_-- > 0) throw ServiceError(ServiceErrorKind::Timeout, "slow");
        return inner.complete(query);
    }
    int calls = 0;

private:
    int failures_;
    TemplateLlm inner;
};

UserRequest request(const std::string& text, int rounds, int n) {
    UserRequest r;
    r.text = text;
    r.rounds = rounds;
    r.candidates = n;
    return r;
}

} // namespace

TEST(UserRequestTest, Validation) {
    EXPECT_NO_THROW(request("a red ball", 1, 1).validate());
    EXPECT_THROW(request("  ", 1, 1).validate(), std::invalid_argument);
    EXPECT_THROW(request("x", 0, 1).validate(), std::invalid_argument);
    EXPECT_THROW(request("x", 1, 0).validate(), std::invalid_argument);
    EXPECT_EQ(parse_condition_kind("pose"), ConditionKind::Pose);
    EXPECT_THROW(parse_condition_kind("depth"), std::invalid_argument);
}

TEST(GeneratePrompts, TemplateMockIsDeterministicAndContainsText) {
    TemplateLlm a, b;
    const UserRequest r = request("a red ball", 1, 3);
    const auto pa = generate_prompts(a, r, {}, 3);
    const auto pb = generate_prompts(b, r, {}, 3);
    ASSERT_EQ(pa.size(), 3u);
    EXPECT_EQ(pa, pb);
    for (const auto& p : pa) EXPECT_NE(p.find("a red ball"), std::string::npos);
    EXPECT_EQ(std::set<std::string>(pa.begin(), pa.end()).size(), 3u);
    EXPECT_EQ(generate_prompts(a, r, {}, 1).size(), 1u);
}

TEST(GeneratePrompts, DuplicatesAreRequeried) {
    RepeatingLlm llm;
    const auto prompts = generate_prompts(llm, request("a cat", 1, 4), {}, 4);
    ASSERT_EQ(prompts.size(), 4u);
    EXPECT_EQ(std::set<std::string>(prompts.begin(), prompts.end()).size(), 4u);
    EXPECT_EQ(llm.calls, 2);
    EXPECT_EQ(llm.queries[1].count, 2);
}

TEST(GeneratePrompts, HistoryCritiquesReachTheClient) {
    RepeatingLlm llm;
    OptimizationTranscript history;
    history.candidates.push_back({0, "a cat", {}, 4.0, "too dark", true});
    history.candidates.push_back({0, "a cat 2", {}, 3.0, "blurry", false});
    generate_prompts(llm, request("a cat", 1, 1), history, 1);
    EXPECT_EQ(llm.queries[0].history, std::vector<std::string>{"too dark"});
}

TEST(GeneratePrompts, RetriesOnceThenFails) {
    FlakyLlm once(1);
    EXPECT_EQ(generate_prompts(once, request("a cat", 1, 2), {}, 2).size(), 2u);
    EXPECT_EQ(once.calls, 2);
    FlakyLlm twice(2);
    EXPECT_THROW(generate_prompts(twice, request("a cat", 1, 2), {}, 2), ServiceError);
}

TEST(ScoreCandidates, ClampAndArgmax) {
    const std::vector<ImageBuffer> imgs(3, ImageBuffer(4, 4, 3));
    ScriptedEvaluator ev({{7, 3, 9}, {12, -1, 5}});
    const auto a = score_candidates(ev, request("x", 1, 3), imgs);
    EXPECT_EQ(select_best(a.scores), 2u);
    const auto b = score_candidates(ev, request("x", 1, 3), imgs);
    EXPECT_EQ(b.scores, (std::vector<double>{10, 0, 5}));
    EXPECT_EQ(b.clamped, 2u);
    const std::vector<double> tie = {8, 8};
    EXPECT_EQ(select_best(tie), 0u);
}

TEST(ScoreCandidates, WrongCountIsMalformed) {
    const std::vector<ImageBuffer> imgs(2, ImageBuffer(4, 4, 3));
    ScriptedEvaluator ev({{1, 2, 3}});
    try {
        score_candidates(ev, request("x", 1, 2), imgs);
        FAIL();
    } catch (const ServiceError& e) {
        EXPECT_EQ(e.kind(), ServiceErrorKind::MalformedResponse);
    }
}

TEST(Optimize, EarlyStopAndBestIsMaxOfSelected) {
    TemplateLlm llm;
    CountingT2i t2i;
    ScriptedEvaluator ev({{5, 1}, {7, 2}, {9.6, 3}, {10, 10}});
    const auto t = optimize(request("a red ball", 5, 2), {&llm, &t2i, &ev});
    EXPECT_EQ(t.rounds_run, 3);
    EXPECT_TRUE(t.failure.empty());
    EXPECT_DOUBLE_EQ(t.best_record().score, 9.6);
    EXPECT_EQ(t.reflections.size(), 3u);
    std::vector<int> selected_per_round(3, 0);
    double max_selected = 0.0;
    for (const auto& c : t.candidates) {
        if (c.selected) {
            ++selected_per_round[static_cast<std::size_t>(c.round)];
            max_selected = std::max(max_selected, c.score);
        }
    }
    EXPECT_EQ(selected_per_round, (std::vector<int>{1, 1, 1}));
    EXPECT_EQ(t.best_record().score, max_selected);
    EXPECT_EQ(t.t2i_calls, 6u);
}

TEST(Optimize, BudgetAndConditionPassThrough) {
    TemplateLlm llm;
    CountingT2i t2i;
    HeuristicEvaluator ev;
    UserRequest r = request("a blue cube", 1, 4);
    r.conditions.push_back({ConditionKind::Edge, ImageBuffer(8, 8, 1, 0.5)});
    const auto t = optimize(r, {&llm, &t2i, &ev});
    EXPECT_EQ(t2i.calls, 4);
    ASSERT_EQ(t2i.last_conditions.size(), 1u);
    EXPECT_EQ(t2i.last_conditions[0].kind, ConditionKind::Edge);
    EXPECT_EQ(t2i.last_conditions[0].image, r.conditions[0].image);
    for (const auto& c : t.candidates) {
        EXPECT_GE(c.score, 0.0);
        EXPECT_LE(c.score, 10.0);
    }
}

TEST(Optimize, TranscriptReproducibleWithMocks) {
    const auto run = [] {
        TemplateLlm llm;
        ProceduralT2i t2i(24);
        HeuristicEvaluator ev;
        return optimize(request("a green frog", 3, 4), {&llm, &t2i, &ev}, {9.5, 7});
    };
    const auto a = run(), b = run();
    ASSERT_EQ(a.candidates.size(), b.candidates.size());
    for (std::size_t i = 0; i < a.candidates.size(); ++i) {
        EXPECT_EQ(a.candidates[i].prompt, b.candidates[i].prompt);
        EXPECT_EQ(a.candidates[i].image, b.candidates[i].image);
        EXPECT_EQ(a.candidates[i].score, b.candidates[i].score);
        EXPECT_EQ(a.candidates[i].critique, b.candidates[i].critique);
    }
    EXPECT_EQ(a.reflections, b.reflections);
    EXPECT_LE(a.t2i_calls, 12u);
}

TEST(Optimize, PermanentFailureKeepsBestSoFar) {
    TemplateLlm llm;
    CountingT2i t2i;
    ScriptedEvaluator ev({{4, 6}});
    const auto t = optimize(request("a cat", 3, 2), {&llm, &t2i, &ev});
    EXPECT_EQ(t.rounds_run, 1);
    EXPECT_FALSE(t.failure.empty());
    EXPECT_DOUBLE_EQ(t.best_record().score, 6.0);
}

TEST(HttpClients, WireRoundTrip) {
    std::string auth;
    gsgen::testing::StubServer server([&auth](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        const auto [status, body] = [&]() -> std::pair<int, std::string> {
        const json in = json::parse(req.body);
        const std::string& path = req.path;
        if (path == "/llm") {
            json prompts = json::array();
            for (int i = 0; i < in.at("N").get<int>(); ++i) prompts.push_back(in.at("instruction").get<std::string>() + " #" + std::to_string(i));
            return {200, json{{"prompts", prompts}}.dump()};
        }
        if (path == "/t2i") {
            const double shade = in.at("conditions").size() == 1 ? 1.0 : 0.0;
            return {200, json{{"image", base64_encode(encode_png(ImageBuffer(6, 5, 3, shade)))}}.dump()};
        }
        json scores = json::array(), critiques = json::array();
        for (std::size_t i = 0; i < in.at("images").size(); ++i) {
            scores.push_back(2.5 * static_cast<double>(i));
            critiques.push_back(in.at("request"));
        }
        return {200, json{{"scores", scores}, {"critiques", critiques}}.dump()};
        }();
        res.status = status;
        res.set_content(body, "application/json");
    });
    HttpLlmClient llm({server.url("/llm"), std::chrono::milliseconds(2000), "secret"});
    HttpT2iClient t2i({server.url("/t2i"), std::chrono::milliseconds(2000)});
    HttpEvaluatorClient ev({server.url("/eval"), std::chrono::milliseconds(2000)});

    PromptQuery q;
    q.instruction = "a cat";
    q.count = 2;
    EXPECT_EQ(llm.complete(q).prompts, (std::vector<std::string>{"a cat #0", "a cat #1"}));
    EXPECT_EQ(auth, "Bearer secret");
    const std::vector<ConditionAttachment> conds = {{ConditionKind::Scribble, ImageBuffer(4, 4, 1, 0.2)}};
    const ImageBuffer img = t2i.generate("a cat", conds, 3);
    EXPECT_EQ(img.width(), 6);
    EXPECT_EQ(img.at(0, 0, 0), 1.0);
    const std::vector<ImageBuffer> imgs = {img, img};
    const Evaluation e = ev.evaluate("a cat", imgs);
    EXPECT_EQ(e.scores, (std::vector<double>{0.0, 2.5}));
    EXPECT_EQ(e.critiques[1], "a cat");
}
