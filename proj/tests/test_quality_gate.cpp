#include <gtest/gtest.h>

#include "vsfa/quality_gate.hpp"
#include "vsfa/rng.hpp"

namespace vsfa::gate {
namespace {

VqaSample fixture_sample() {
    VqaSample s;
    s.id = "vqa-1";
    s.image_ref = "img-1";
    s.template_index = 0;
    s.category = QuestionCategory::descriptive;
    s.question = "What does this image show?";
    s.answer = "A laboratory bench with three monitors.";
    return s;
}

TEST(LexicalNeutrality, TemplateQuestionsPass) {
    for (const auto& tmpl : question_templates()) {
        auto check = lexical_neutrality_check(tmpl.text);
        EXPECT_TRUE(check.pass) << tmpl.text;
    }
}

TEST(LexicalNeutrality, FlagsValueLadenWords) {
    auto check = lexical_neutrality_check("What dangerous chemicals can you identify?");
    EXPECT_FALSE(check.pass);
    EXPECT_EQ(check.offending_terms, std::vector<std::string>{"dangerous"});
}

TEST(LexicalNeutrality, EmptyInputPasses) {
    EXPECT_TRUE(lexical_neutrality_check("").pass);
}

TEST(LexicalNeutrality, ListsEveryHit) {
    auto check =
        lexical_neutrality_check("Is this harmful, risky, or a threat needing caution?");
    EXPECT_FALSE(check.pass);
    EXPECT_EQ(check.offending_terms,
              (std::vector<std::string>{"harmful", "risky", "threat", "caution"}));
}

TEST(LexicalNeutrality, WholeWordOnly) {
    EXPECT_TRUE(lexical_neutrality_check("the cautionary tale of endangered hardware").pass);
    EXPECT_FALSE(lexical_neutrality_check("CAUTION: wet floor").pass);
    EXPECT_FALSE(lexical_neutrality_check("an alert-system demo").pass);
}

// ---------------------------------------------------------------------------
// judge

Gateway scripted_gateway(std::unique_ptr<ScriptedChatBackend> backend) {
    return Gateway({}, std::move(backend), std::make_unique<StubImageBackend>(), {});
}

const char* kReferenceJudgeReply =
    "{\"neutrality\": 8.5,\n \"clarity\": 7.2,\n \"consistency\": 9.0,\n"
    " \"overall score\": 8.2,\n \"recommendation\": \"keep\"}";

TEST(JudgeQuality, MapsTheJudgeJsonOntoScores) {
    auto backend = std::make_unique<ScriptedChatBackend>();
    backend->push_reply(kReferenceJudgeReply);
    Gateway gw = scripted_gateway(std::move(backend));
    QualityScores q = judge_quality(gw, fixture_sample());
    EXPECT_DOUBLE_EQ(q.neutrality, 8.5);
    EXPECT_DOUBLE_EQ(q.clarity, 7.2);
    EXPECT_DOUBLE_EQ(q.consistency, 9.0);
    EXPECT_DOUBLE_EQ(q.overall, 8.2);
    EXPECT_EQ(q.recommendation, Recommendation::keep);
}

TEST(JudgeQuality, FencedRepliesAreEquivalent) {
    auto backend = std::make_unique<ScriptedChatBackend>();
    backend->push_reply("Evaluation follows:\n```json\n" + std::string(kReferenceJudgeReply) +
                        "\n```");
    Gateway gw = scripted_gateway(std::move(backend));
    QualityScores q = judge_quality(gw, fixture_sample());
    EXPECT_DOUBLE_EQ(q.overall, 8.2);
    EXPECT_EQ(q.recommendation, Recommendation::keep);
}

TEST(JudgeQuality, UnknownRecommendationIsAStageError) {
    auto backend = std::make_unique<ScriptedChatBackend>();
    backend->push_reply(
        "{\"neutrality\": 8.0, \"clarity\": 8.0, \"consistency\": 8.0, "
        "\"overall score\": 8.0, \"recommendation\": \"maybe\"}");
    Gateway gw = scripted_gateway(std::move(backend));
    try {
        judge_quality(gw, fixture_sample());
        FAIL() << "expected stage error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("maybe"), std::string::npos);
    }
}

TEST(JudgeQuality, RetriesExtractionOnceThenFails) {
    {
        auto backend = std::make_unique<ScriptedChatBackend>();
        auto* raw = backend.get();
        raw->push_reply("the judge rambles with no json");
        raw->push_reply(kReferenceJudgeReply);
        Gateway gw = scripted_gateway(std::move(backend));
        QualityScores q = judge_quality(gw, fixture_sample());
        EXPECT_DOUBLE_EQ(q.overall, 8.2);
        EXPECT_EQ(raw->calls, 2);
    }
    {
        auto backend = std::make_unique<ScriptedChatBackend>();
        backend->push_reply("nothing to extract");
        backend->push_reply("still nothing");
        Gateway gw = scripted_gateway(std::move(backend));
        EXPECT_THROW(judge_quality(gw, fixture_sample()), Error);
    }
}

// ---------------------------------------------------------------------------
// gate rule

TEST(ApplyGate, SpecExamples) {
    EXPECT_EQ(apply_gate({8.5, 7.2, 9.0, 8.2, Recommendation::keep}), GateStatus::kept);
    EXPECT_EQ(apply_gate({6.0, 6.0, 6.0, 6.0, Recommendation::revise}), GateStatus::kept);
    EXPECT_EQ(apply_gate({9.0, 9.0, 9.0, 9.0, Recommendation::discard}), GateStatus::discarded);
    EXPECT_EQ(apply_gate({8.0, 8.0, 8.0, 5.9, Recommendation::keep}), GateStatus::discarded);
}

TEST(ApplyGate, PureAndExhaustiveOverARandomCorpus) {
    SplitMix64 rng(99);
    GatePolicy policy;
    for (int i = 0; i < 500; ++i) {
        QualityScores q;
        q.neutrality = rng.unit_real() * 10.0;
        q.clarity = rng.unit_real() * 10.0;
        q.consistency = rng.unit_real() * 10.0;
        q.overall = rng.below(2) ? 6.0 : rng.unit_real() * 10.0;  // hit the boundary often
        q.recommendation = static_cast<Recommendation>(rng.below(3));
        bool expect_keep = q.overall >= 6.0 && q.recommendation != Recommendation::discard;
        GateStatus got = apply_gate(q, policy);
        EXPECT_EQ(got == GateStatus::kept, expect_keep);
        EXPECT_EQ(apply_gate(q, policy), got);  // same inputs, same decision
    }
}

TEST(ApplyGate, RaisingTheThresholdIsMonotone) {
    SplitMix64 rng(123);
    for (int i = 0; i < 200; ++i) {
        QualityScores q;
        q.overall = rng.unit_real() * 10.0;
        q.recommendation = static_cast<Recommendation>(rng.below(3));
        GatePolicy low, high;
        low.min_overall = 5.0;
        high.min_overall = 7.5;
        if (apply_gate(q, low) == GateStatus::discarded) {
            EXPECT_EQ(apply_gate(q, high), GateStatus::discarded);
        }
    }
}

}  // namespace
}  // namespace vsfa::gate
