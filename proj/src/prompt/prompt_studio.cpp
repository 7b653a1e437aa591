#include "gsgen/prompt/prompt_studio.hpp"

#include "gsgen/io/codec.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace gsgen {

using nlohmann::json;

const char* to_string(ConditionKind kind) {
    switch (kind) {
    case ConditionKind::Style: return "style";
    case ConditionKind::Edge: return "edge";
    case ConditionKind::Scribble: return "scribble";
    case ConditionKind::Pose: return "pose";
    }
    return "style";
}

ConditionKind parse_condition_kind(const std::string& name) {
    for (ConditionKind k : {ConditionKind::Style, ConditionKind::Edge, ConditionKind::Scribble, ConditionKind::Pose}) {
        if (name == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown condition kind '" + name + "' (expected style, edge, scribble or pose)");
}

void UserRequest::validate() const {
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
        throw std::invalid_argument("request text must not be empty");
    }
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    if (candidates < 1) throw std::invalid_argument("candidates per round must be >= 1");
    for (const auto& c : conditions) {
        if (c.image.empty()) throw std::invalid_argument(std::string(to_string(c.kind)) + " condition has no image");
    }
}

const CandidateRecord& OptimizationTranscript::best_record() const {
    if (!best) throw std::logic_error("transcript has no completed round");
    return candidates[*best];
}

std::vector<std::string> OptimizationTranscript::history() const {
    std::vector<std::string> out;
    for (const auto& c : candidates) {
        if (c.selected) out.push_back(c.critique);
    }
    return out;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(lower(s));
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

bool contains_tokens(const std::string& prompt, const std::string& text) {
    const std::string p = lower(prompt);
    for (const auto& w : words(text)) {
        if (p.find(w) == std::string::npos) return false;
    }
    return true;
}

struct NamedColor {
    const char* name;
    Vec3 rgb;
};

const std::array<NamedColor, 8> kColors = {{{"red", {0.9, 0.1, 0.1}},
                                             {"green", {0.1, 0.8, 0.2}},
                                             {"blue", {0.1, 0.2, 0.9}},
                                             {"yellow", {0.95, 0.85, 0.1}},
                                             {"orange", {0.95, 0.5, 0.1}},
                                             {"purple", {0.55, 0.15, 0.7}},
                                             {"white", {0.95, 0.95, 0.95}},
                                             {"black", {0.05, 0.05, 0.05}}}};

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

template <class F>
auto with_retry(const char* what, F&& call) {
    try {
        return call();
    } catch (const ServiceError& e) {
        spdlog::warn("{} failed ({}), retrying once", what, e.what());
    }
    return call();
}

std::string image_b64(const ImageBuffer& image) {
    if (image.channels() == 3) return base64_encode(encode_png(image, 8));
    ImageBuffer rgb(image.width(), image.height(), 3);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            rgb.set_rgb(x, y, Vec3::Constant(image.at(x, y, 0)));
        }
    }
    return base64_encode(encode_png(rgb, 8));
}

ImageBuffer decode_rgb(const std::string& b64) {
    ImageBuffer img = decode_png(base64_decode(b64));
    if (img.channels() == 3) return img;
    ImageBuffer rgb(img.width(), img.height(), 3);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (img.channels() >= 3) {
                rgb.set_rgb(x, y, Vec3(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)));
            } else {
                rgb.set_rgb(x, y, Vec3::Constant(img.at(x, y, 0)));
            }
        }
    }
    return rgb;
}

json post(const HttpEndpoint& endpoint, const json& body) {
    const std::string reply = post_json(endpoint, body.dump());
    try {
        return json::parse(reply);
    } catch (const json::exception& e) {
        throw ServiceError(ServiceErrorKind::MalformedResponse, std::string("bad reply json: ") + e.what());
    }
}

} // namespace

std::optional<Vec3> color_in_text(const std::string& text) {
    for (const auto& w : words(text)) {
        std::string bare;
        for (char c : w) {
            if (std::isalpha(static_cast<unsigned char>(c))) bare += c;
        }
        for (const auto& c : kColors) {
            if (bare == c.name) return c.rgb;
        }
    }
    return std::nullopt;
}

PromptReply TemplateLlm::complete(const PromptQuery& query) {
    static const std::array<const char*, 8> templates = {
        "{}",
        "a detailed photo of {}",
        "{}, studio lighting, high detail",
        "a 3d render of {}, centered",
        "{}, front view, plain background",
        "a colorful illustration of {}",
        "{}, sharp focus, soft shadows",
        "a close-up of {}, vivid colors",
    };
    ++calls_;
    PromptReply reply;
    const std::size_t offset = query.history.size() * static_cast<std::size_t>(query.count);
    for (int i = 0; i < query.count; ++i) {
        const std::size_t k = offset + static_cast<std::size_t>(i);
        std::string p = templates[k % templates.size()];
        p.replace(p.find("{}"), 2, query.instruction);
        if (k >= templates.size()) p += ", variation " + std::to_string(k / templates.size());
        reply.prompts.push_back(p);
    }
    return reply;
}

ImageBuffer ProceduralT2i::generate(const std::string& prompt, std::span<const ConditionAttachment>,
                                    std::uint64_t seed) {
    std::mt19937_64 rng(fnv1a(prompt) ^ (seed * 0x9e3779b97f4a7c15ull));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::optional<Vec3> named = color_in_text(prompt);
    ImageBuffer img(size_, size_, 3);
    const Vec3 bg(0.3 + 0.4 * u(rng), 0.3 + 0.4 * u(rng), 0.3 + 0.4 * u(rng));
    for (int y = 0; y < size_; ++y) {
        for (int x = 0; x < size_; ++x) img.set_rgb(x, y, bg);
    }
    const int shapes = 2 + static_cast<int>(u(rng) * 4);
    for (int s = 0; s < shapes; ++s) {
        const Vec3 color = named ? *named : Vec3(u(rng), u(rng), u(rng));
        const double cx = u(rng) * size_, cy = u(rng) * size_;
        const double r = (0.1 + 0.25 * u(rng)) * size_;
        const bool circle = u(rng) < 0.5;
        for (int y = 0; y < size_; ++y) {
            for (int x = 0; x < size_; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                const bool in = circle ? dx * dx + dy * dy <= r * r : std::abs(dx) <= r && std::abs(dy) <= 0.6 * r;
                if (in) img.set_rgb(x, y, color);
            }
        }
    }
    return img;
}

Evaluation HeuristicEvaluator::evaluate(const std::string& request_text, std::span<const ImageBuffer> images) {
    const Vec3 target = color_in_text(request_text).value_or(kColors[0].rgb);
    Evaluation ev;
    for (const auto& img : images) {
        std::size_t hits = 0;
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                if ((img.rgb(x, y) - target).norm() < 0.25) ++hits;
            }
        }
        const double coverage = img.pixel_count() ? static_cast<double>(hits) / img.pixel_count() : 0.0;
        ev.scores.push_back(10.0 * std::min(1.0, coverage / 0.6));
        std::ostringstream critique;
        const long percent = std::lround(100.0 * coverage);
        critique << "target color covers " << percent << "% of the image";
        if (percent < 60) critique << "; make the subject larger";
        ev.critiques.push_back(critique.str());
    }
    return ev;
}

PromptReply HttpLlmClient::complete(const PromptQuery& query) {
    const json body = {{"role", query.role}, {"instruction", query.instruction}, {"history", query.history},
                       {"N", query.count}};
    const json j = post(endpoint_, body);
    try {
        PromptReply reply;
        reply.prompts = j.at("prompts").get<std::vector<std::string>>();
        if (j.contains("critiques")) reply.critiques = j.at("critiques").get<std::vector<std::string>>();
        return reply;
    } catch (const json::exception& e) {
        throw ServiceError(ServiceErrorKind::MalformedResponse, std::string("bad llm reply: ") + e.what());
    }
}

ImageBuffer HttpT2iClient::generate(const std::string& prompt, std::span<const ConditionAttachment> conditions,
                                    std::uint64_t seed) {
    json conds = json::array();
    for (const auto& c : conditions) conds.push_back({{"kind", to_string(c.kind)}, {"image", image_b64(c.image)}});
    const json j = post(endpoint_, {{"prompt", prompt}, {"conditions", conds}, {"seed", seed}});
    try {
        return decode_rgb(j.at("image").get<std::string>());
    } catch (const json::exception& e) {
        throw ServiceError(ServiceErrorKind::MalformedResponse, std::string("bad t2i reply: ") + e.what());
    } catch (const std::runtime_error& e) {
        throw ServiceError(ServiceErrorKind::MalformedResponse, std::string("bad t2i image: ") + e.what());
    }
}

Evaluation HttpEvaluatorClient::evaluate(const std::string& request_text, std::span<const ImageBuffer> images) {
    json imgs = json::array();
    for (const auto& img : images) imgs.push_back(image_b64(img));
    const json j = post(endpoint_, {{"request", request_text}, {"images", imgs}});
    try {
        Evaluation ev;
        ev.scores = j.at("scores").get<std::vector<double>>();
        ev.critiques = j.at("critiques").get<std::vector<std::string>>();
        return ev;
    } catch (const json::exception& e) {
        throw ServiceError(ServiceErrorKind::MalformedResponse, std::string("bad evaluator reply: ") + e.what());
    }
}

std::vector<std::string> generate_prompts(LlmClient& llm, const UserRequest& request,
                                          const OptimizationTranscript& history, int count) {
    if (count < 1) throw std::invalid_argument("prompt count must be >= 1");
    PromptQuery query;
    query.instruction = request.text;
    query.history = history.history();

    std::vector<std::string> prompts;
    std::set<std::string> seen;
    const auto take = [&](const PromptReply& reply) {
        for (const auto& raw : reply.prompts) {
            if (static_cast<int>(prompts.size()) == count) break;
            std::string p = trim(raw);
            if (p.empty()) continue;
            if (!contains_tokens(p, request.text)) p = request.text + ", " + p;
            if (seen.insert(lower(p)).second) prompts.push_back(p);
        }
    };
    query.count = count;
    take(with_retry("prompt generation", [&] { return llm.complete(query); }));
    for (int attempt = 0; attempt < count && static_cast<int>(prompts.size()) < count; ++attempt) {
        query.count = count - static_cast<int>(prompts.size());
        // Already accepted prompts go along so the client can avoid them.
        query.history = history.history();
        for (const auto& p : prompts) query.history.push_back("already proposed: " + p);
        take(with_retry("prompt generation", [&] { return llm.complete(query); }));
    }
    if (static_cast<int>(prompts.size()) < count) {
        throw ServiceError(ServiceErrorKind::MalformedResponse,
                           "prompt client returned " + std::to_string(prompts.size()) + " distinct prompts, wanted " +
                               std::to_string(count));
    }
    return prompts;
}

ScoredCandidates score_candidates(EvaluatorClient& evaluator, const UserRequest& request,
                                  std::span<const ImageBuffer> images) {
    const Evaluation ev = with_retry("scoring", [&] { return evaluator.evaluate(request.text, images); });
    if (ev.scores.size() != images.size()) {
        throw ServiceError(ServiceErrorKind::MalformedResponse, "evaluator returned " + std::to_string(ev.scores.size()) +
                                                                    " scores for " + std::to_string(images.size()) +
                                                                    " images");
    }
    ScoredCandidates out;
    for (std::size_t i = 0; i < ev.scores.size(); ++i) {
        const double s = ev.scores[i];
        if (!std::isfinite(s)) throw ServiceError(ServiceErrorKind::MalformedResponse, "evaluator returned a non-finite score");
        const double c = std::clamp(s, 0.0, 10.0);
        if (c != s) {
            spdlog::warn("score {} for candidate {} clamped to {}", s, i, c);
            ++out.clamped;
        }
        out.scores.push_back(c);
        out.critiques.push_back(i < ev.critiques.size() ? ev.critiques[i] : "");
    }
    return out;
}

std::size_t select_best(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("select_best: no scores");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

OptimizationTranscript optimize(const UserRequest& request, PromptClients clients, const OptimizeConfig& config) {
    request.validate();
    if (!clients.llm || !clients.t2i || !clients.evaluator) throw std::invalid_argument("optimize: missing client");
    OptimizationTranscript t;
    const int n = request.candidates;

    for (int round = 0; round < request.rounds; ++round) {
        try {
            const auto prompts = generate_prompts(*clients.llm, request, t, n);
            std::vector<ImageBuffer> images;
            for (int i = 0; i < n; ++i) {
                const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(round * n + i);
                ++t.t2i_calls;
                images.push_back(clients.t2i->generate(prompts[static_cast<std::size_t>(i)], request.conditions, seed));
            }
            const ScoredCandidates scored = score_candidates(*clients.evaluator, request, images);
            const std::size_t pick = select_best(scored.scores);
            const std::size_t first = t.candidates.size();
            for (int i = 0; i < n; ++i) {
                const auto k = static_cast<std::size_t>(i);
                t.candidates.push_back({round, prompts[k], std::move(images[k]), scored.scores[k], scored.critiques[k], k == pick});
            }
            const CandidateRecord& chosen = t.candidates[first + pick];
            if (!t.best || chosen.score > t.candidates[*t.best].score) t.best = first + pick;
            std::ostringstream note;
            note << "round " << round + 1 << ": kept \"" << chosen.prompt << "\" at " << chosen.score;
            if (!chosen.critique.empty()) note << "; " << chosen.critique;
            t.reflections.push_back(note.str());
            t.rounds_run = round + 1;
            spdlog::info("{}", t.reflections.back());
            if (chosen.score >= config.early_stop) break;
        } catch (const ServiceError& e) {
            t.failure = "round " + std::to_string(round + 1) + " aborted: " + e.what();
            spdlog::warn("{}", t.failure);
            break;
        }
    }
    return t;
}

} // namespace gsgen
