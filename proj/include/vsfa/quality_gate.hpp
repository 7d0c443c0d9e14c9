#pragma once

#include <set>
#include <string>
#include <vector>

#include "vsfa/assets.hpp"
#include "vsfa/errors.hpp"
#include "vsfa/gateway.hpp"
#include "vsfa/types.hpp"

namespace vsfa::gate {

struct GatePolicy {
    double min_overall = 6.0;
    std::set<Recommendation> allowed_recommendations = {Recommendation::keep,
                                                        Recommendation::revise};
    std::vector<std::string> forbidden_value_terms = assets::forbidden_value_terms();
    std::vector<std::string> forbidden_safety_terms = assets::forbidden_safety_terms();
};

struct LexicalCheck {
    bool pass = true;
    std::vector<std::string> offending_terms;
};

/// Case-insensitive whole-word match of the question against both forbidden
/// term lists; every hit is reported.
inline LexicalCheck lexical_neutrality_check(std::string_view question,
                                             const GatePolicy& policy = {}) {
    LexicalCheck result;
    auto scan = [&](const std::vector<std::string>& terms) {
        for (const auto& term : terms) {
            if (contains_whole_word(question, term)) result.offending_terms.push_back(term);
        }
    };
    scan(policy.forbidden_value_terms);
    scan(policy.forbidden_safety_terms);
    result.pass = result.offending_terms.empty();
    return result;
}

struct JudgeOptions {
    std::string model_name = "gpt-4o";
    double temperature = 0.0;
    int max_tokens = 0;
};

/// Scores one QA pair through the evaluator model. The judge's JSON object is
/// extracted from the reply; the "overall score" key (with space) maps onto
/// the overall field. One retry on extraction failure, then a stage error.
inline QualityScores judge_quality(Gateway& gateway, const VqaSample& sample,
                                   const JudgeOptions& opts = {}) {
    ChatRequest req;
    req.role_system = std::string(assets::kQualityEvaluatorPrompt);
    req.role_user = "Question: " + sample.question + "\nAnswer: " + sample.answer;
    req.model_name = opts.model_name;
    req.temperature = opts.temperature;
    req.max_tokens = opts.max_tokens;
    req.response_format = ResponseFormat::json_object;

    json parsed;
    std::string raw;
    for (int attempt = 0;; ++attempt) {
        raw = gateway.chat(req);
        try {
            parsed = extract_json(raw);
            break;
        } catch (const JsonExtractError&) {
            if (attempt >= 1)
                throw Error(ErrorKind::external_service,
                            "quality judge returned no JSON for sample " + sample.id);
            req.role_user += "\n\nOutput only the JSON object.";
        }
    }

    QualityScores scores;
    try {
        scores.neutrality = parsed.at("neutrality").get<double>();
        scores.clarity = parsed.at("clarity").get<double>();
        scores.consistency = parsed.at("consistency").get<double>();
        scores.overall = parsed.at("overall score").get<double>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::external_service, "quality judge JSON missing keys for sample " +
                                                     sample.id + ": " + e.what());
    }
    std::string rec = parsed.value("recommendation", "");
    if (rec != "keep" && rec != "revise" && rec != "discard")
        throw Error(ErrorKind::external_service,
                    "quality judge recommendation \"" + rec + "\" is not keep/revise/discard");
    scores.recommendation = recommendation_from_string(rec);
    return scores;
}

/// The keep/discard rule: kept iff overall reaches the threshold AND the
/// recommendation is allowed. Pure.
inline GateStatus apply_gate(const QualityScores& scores, const GatePolicy& policy = {}) {
    bool kept = scores.overall >= policy.min_overall &&
                policy.allowed_recommendations.count(scores.recommendation) > 0;
    return kept ? GateStatus::kept : GateStatus::discarded;
}

}  // namespace vsfa::gate
