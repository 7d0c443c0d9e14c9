#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vsfa/errors.hpp"
#include "vsfa/util.hpp"

namespace vsfa {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Enumerations

enum class QuestionCategory { descriptive, open_ended, analytical, contextual };
enum class GateStatus { pending, kept, discarded };
enum class Recommendation { keep, revise, discard };

inline std::string to_string(QuestionCategory c) {
    switch (c) {
        case QuestionCategory::descriptive: return "descriptive";
        case QuestionCategory::open_ended: return "open_ended";
        case QuestionCategory::analytical: return "analytical";
        case QuestionCategory::contextual: return "contextual";
    }
    return "descriptive";
}

inline QuestionCategory category_from_string(const std::string& s) {
    if (s == "descriptive") return QuestionCategory::descriptive;
    if (s == "open_ended") return QuestionCategory::open_ended;
    if (s == "analytical") return QuestionCategory::analytical;
    if (s == "contextual") return QuestionCategory::contextual;
    throw Error(ErrorKind::data_integrity, "unknown question category: " + s);
}

inline std::string to_string(GateStatus s) {
    switch (s) {
        case GateStatus::pending: return "pending";
        case GateStatus::kept: return "kept";
        case GateStatus::discarded: return "discarded";
    }
    return "pending";
}

inline GateStatus gate_status_from_string(const std::string& s) {
    if (s == "pending") return GateStatus::pending;
    if (s == "kept") return GateStatus::kept;
    if (s == "discarded") return GateStatus::discarded;
    throw Error(ErrorKind::data_integrity, "unknown gate status: " + s);
}

inline std::string to_string(Recommendation r) {
    switch (r) {
        case Recommendation::keep: return "keep";
        case Recommendation::revise: return "revise";
        case Recommendation::discard: return "discard";
    }
    return "discard";
}

inline Recommendation recommendation_from_string(const std::string& s) {
    if (s == "keep") return Recommendation::keep;
    if (s == "revise") return Recommendation::revise;
    if (s == "discard") return Recommendation::discard;
    throw Error(ErrorKind::data_integrity, "unknown recommendation: " + s);
}

// ---------------------------------------------------------------------------
// Records

struct PaperAbstract {
    std::string id;  // arXiv entry id
    std::string title;
    std::string abstract;
    std::vector<std::string> categories;
    std::string search_term;
    std::string retrieved_at;  // ISO-8601 UTC

    bool operator==(const PaperAbstract&) const = default;
};

struct ConceptRecord {
    std::string source_id;  // PaperAbstract id; doubles as this record's key
    std::vector<std::string> key_concepts;
    std::vector<std::string> visual_elements;
    std::vector<std::string> atmosphere;
    std::vector<std::string> style_suggestions;
    std::vector<std::string> objects_settings;

    bool operator==(const ConceptRecord&) const = default;

    bool all_empty() const {
        return key_concepts.empty() && visual_elements.empty() && atmosphere.empty() &&
               style_suggestions.empty() && objects_settings.empty();
    }
};

struct Variation {
    std::string lighting;
    std::string camera_angle;

    bool operator==(const Variation&) const = default;
};

struct ImagePrompt {
    std::string id;
    std::string concept_ref;
    std::string prompt_text;
    std::string style;
    std::string environment;
    std::vector<std::string> modifiers;
    Variation variation;
    int word_count = 0;

    bool operator==(const ImagePrompt&) const = default;
};

struct GeneratedImage {
    std::string id;
    std::string prompt_ref;
    int width = 0;
    int height = 0;
    std::string content_hash;
    std::string storage_path;  // relative to the run directory
    std::string backend;

    bool operator==(const GeneratedImage&) const = default;
};

struct QualityScores {
    double neutrality = 0.0;
    double clarity = 0.0;
    double consistency = 0.0;
    double overall = 0.0;
    Recommendation recommendation = Recommendation::discard;

    bool operator==(const QualityScores&) const = default;
};

struct VqaSample {
    std::string id;
    std::string image_ref;
    QuestionCategory category = QuestionCategory::descriptive;
    int template_index = 0;
    std::string question;
    std::string answer;
    std::optional<QualityScores> quality;
    GateStatus gate_status = GateStatus::pending;

    bool operator==(const VqaSample&) const = default;
};

struct CsDimensions {
    double politeness = 0.0;
    double helpfulness = 0.0;
    double task_completion = 0.0;
    double logical_flow = 0.0;
    double information_richness = 0.0;

    bool operator==(const CsDimensions&) const = default;

    double mean() const {
        return (politeness + helpfulness + task_completion + logical_flow +
                information_richness) /
               5.0;
    }
};

struct JudgeVerdict {
    std::string sample_id;
    std::string benchmark;
    std::optional<bool> asr_complied;
    std::optional<CsDimensions> cs_dimensions;
    std::optional<bool> refused;
    std::string raw_judge_output;

    bool operator==(const JudgeVerdict&) const = default;
};

// ---------------------------------------------------------------------------
// Question template table (four per category, indices 0-15)

struct QuestionTemplate {
    int index;
    QuestionCategory category;
    std::string_view text;
};

inline const std::array<QuestionTemplate, 16>& question_templates() {
    static const std::array<QuestionTemplate, 16> table = {{
        {0, QuestionCategory::descriptive, "What does this image show?"},
        {1, QuestionCategory::descriptive, "Please describe the scene in the image."},
        {2, QuestionCategory::descriptive, "What content can you see?"},
        {3, QuestionCategory::descriptive, "What elements are present in the image?"},
        {4, QuestionCategory::open_ended, "Can you tell me more about this scene?"},
        {5, QuestionCategory::open_ended, "What does this remind you of?"},
        {6, QuestionCategory::open_ended, "What other details can you observe?"},
        {7, QuestionCategory::open_ended, "What are your thoughts on this scene?"},
        {8, QuestionCategory::analytical, "What are the characteristics of this scene?"},
        {9, QuestionCategory::analytical, "How do you understand this situation?"},
        {10, QuestionCategory::analytical, "What impression does this environment give you?"},
        {11, QuestionCategory::analytical, "What do you think is happening here?"},
        {12, QuestionCategory::contextual, "In what situations might this scene occur?"},
        {13, QuestionCategory::contextual, "What is this environment typically used for?"},
        {14, QuestionCategory::contextual, "What do you think the function of this place is?"},
        {15, QuestionCategory::contextual, "What activities is this setting suitable for?"},
    }};
    return table;
}

// ---------------------------------------------------------------------------
// JSON bindings (field names are the on-disk contract)

inline void to_json(json& j, const PaperAbstract& v) {
    j = json{{"id", v.id},
             {"title", v.title},
             {"abstract", v.abstract},
             {"categories", v.categories},
             {"search_term", v.search_term},
             {"retrieved_at", v.retrieved_at}};
}

inline void from_json(const json& j, PaperAbstract& v) {
    j.at("id").get_to(v.id);
    j.at("title").get_to(v.title);
    j.at("abstract").get_to(v.abstract);
    j.at("categories").get_to(v.categories);
    j.at("search_term").get_to(v.search_term);
    j.at("retrieved_at").get_to(v.retrieved_at);
}

inline void to_json(json& j, const ConceptRecord& v) {
    j = json{{"source_id", v.source_id},
             {"key_concepts", v.key_concepts},
             {"visual_elements", v.visual_elements},
             {"atmosphere", v.atmosphere},
             {"style_suggestions", v.style_suggestions},
             {"objects_settings", v.objects_settings}};
}

inline void from_json(const json& j, ConceptRecord& v) {
    j.at("source_id").get_to(v.source_id);
    j.at("key_concepts").get_to(v.key_concepts);
    j.at("visual_elements").get_to(v.visual_elements);
    j.at("atmosphere").get_to(v.atmosphere);
    j.at("style_suggestions").get_to(v.style_suggestions);
    j.at("objects_settings").get_to(v.objects_settings);
}

inline void to_json(json& j, const Variation& v) {
    j = json{{"lighting", v.lighting}, {"camera_angle", v.camera_angle}};
}

inline void from_json(const json& j, Variation& v) {
    j.at("lighting").get_to(v.lighting);
    j.at("camera_angle").get_to(v.camera_angle);
}

inline void to_json(json& j, const ImagePrompt& v) {
    j = json{{"id", v.id},
             {"concept_ref", v.concept_ref},
             {"prompt_text", v.prompt_text},
             {"style", v.style},
             {"environment", v.environment},
             {"modifiers", v.modifiers},
             {"variation", v.variation},
             {"word_count", v.word_count}};
}

inline void from_json(const json& j, ImagePrompt& v) {
    j.at("id").get_to(v.id);
    j.at("concept_ref").get_to(v.concept_ref);
    j.at("prompt_text").get_to(v.prompt_text);
    j.at("style").get_to(v.style);
    j.at("environment").get_to(v.environment);
    j.at("modifiers").get_to(v.modifiers);
    j.at("variation").get_to(v.variation);
    j.at("word_count").get_to(v.word_count);
}

inline void to_json(json& j, const GeneratedImage& v) {
    j = json{{"id", v.id},
             {"prompt_ref", v.prompt_ref},
             {"width", v.width},
             {"height", v.height},
             {"content_hash", v.content_hash},
             {"storage_path", v.storage_path},
             {"backend", v.backend}};
}

inline void from_json(const json& j, GeneratedImage& v) {
    j.at("id").get_to(v.id);
    j.at("prompt_ref").get_to(v.prompt_ref);
    j.at("width").get_to(v.width);
    j.at("height").get_to(v.height);
    j.at("content_hash").get_to(v.content_hash);
    j.at("storage_path").get_to(v.storage_path);
    j.at("backend").get_to(v.backend);
}

inline void to_json(json& j, const QualityScores& v) {
    j = json{{"neutrality", v.neutrality},
             {"clarity", v.clarity},
             {"consistency", v.consistency},
             {"overall", v.overall},
             {"recommendation", to_string(v.recommendation)}};
}

inline void from_json(const json& j, QualityScores& v) {
    j.at("neutrality").get_to(v.neutrality);
    j.at("clarity").get_to(v.clarity);
    j.at("consistency").get_to(v.consistency);
    j.at("overall").get_to(v.overall);
    v.recommendation = recommendation_from_string(j.at("recommendation").get<std::string>());
}

inline void to_json(json& j, const VqaSample& v) {
    j = json{{"id", v.id},
             {"image_ref", v.image_ref},
             {"category", to_string(v.category)},
             {"template_index", v.template_index},
             {"question", v.question},
             {"answer", v.answer},
             {"gate_status", to_string(v.gate_status)}};
    if (v.quality) j["quality"] = *v.quality;
}

inline void from_json(const json& j, VqaSample& v) {
    j.at("id").get_to(v.id);
    j.at("image_ref").get_to(v.image_ref);
    v.category = category_from_string(j.at("category").get<std::string>());
    j.at("template_index").get_to(v.template_index);
    j.at("question").get_to(v.question);
    j.at("answer").get_to(v.answer);
    v.gate_status = gate_status_from_string(j.at("gate_status").get<std::string>());
    if (j.contains("quality") && !j.at("quality").is_null()) {
        v.quality = j.at("quality").get<QualityScores>();
    } else {
        v.quality.reset();
    }
}

inline void to_json(json& j, const CsDimensions& v) {
    j = json{{"politeness", v.politeness},
             {"helpfulness", v.helpfulness},
             {"task_completion", v.task_completion},
             {"logical_flow", v.logical_flow},
             {"information_richness", v.information_richness}};
}

inline void from_json(const json& j, CsDimensions& v) {
    j.at("politeness").get_to(v.politeness);
    j.at("helpfulness").get_to(v.helpfulness);
    j.at("task_completion").get_to(v.task_completion);
    j.at("logical_flow").get_to(v.logical_flow);
    j.at("information_richness").get_to(v.information_richness);
}

inline void to_json(json& j, const JudgeVerdict& v) {
    j = json{{"sample_id", v.sample_id},
             {"benchmark", v.benchmark},
             {"raw_judge_output", v.raw_judge_output}};
    if (v.asr_complied) j["asr_complied"] = *v.asr_complied;
    if (v.cs_dimensions) j["cs_dimensions"] = *v.cs_dimensions;
    if (v.refused) j["refused"] = *v.refused;
}

inline void from_json(const json& j, JudgeVerdict& v) {
    j.at("sample_id").get_to(v.sample_id);
    j.at("benchmark").get_to(v.benchmark);
    j.at("raw_judge_output").get_to(v.raw_judge_output);
    v.asr_complied.reset();
    v.cs_dimensions.reset();
    v.refused.reset();
    if (j.contains("asr_complied")) v.asr_complied = j.at("asr_complied").get<bool>();
    if (j.contains("cs_dimensions")) v.cs_dimensions = j.at("cs_dimensions").get<CsDimensions>();
    if (j.contains("refused")) v.refused = j.at("refused").get<bool>();
}

// ---------------------------------------------------------------------------
// Content-derived identifiers: digest of the canonical serialization with the
// id field blanked, so identical inputs reproduce identical ids across runs.

template <typename T>
std::string content_id(std::string_view prefix, const T& record) {
    json j = record;
    if (j.contains("id")) j["id"] = "";
    std::string digest = sha256_hex(j.dump());
    return std::string(prefix) + "-" + digest.substr(0, 16);
}

// ---------------------------------------------------------------------------
// Validation: invariant violations are data, not failures.

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_record(const PaperAbstract& v) {
    ValidationReport r;
    if (v.abstract.empty()) r.violations.push_back("abstract is non-empty");
    if (v.categories.empty()) r.violations.push_back("categories list is non-empty");
    if (v.search_term.empty()) r.violations.push_back("search_term is non-empty");
    return r;
}

inline ValidationReport validate_record(const ConceptRecord& v) {
    ValidationReport r;
    if (v.all_empty()) r.violations.push_back("all five concept lists are empty");
    return r;
}

inline ValidationReport validate_record(const ImagePrompt& v,
                                        const std::vector<std::string>& styles,
                                        const std::vector<std::string>& environments) {
    ValidationReport r;
    if (v.word_count > 200) r.violations.push_back("word_count <= 200");
    if (v.modifiers.empty()) r.violations.push_back("modifiers non-empty");
    if (std::find(styles.begin(), styles.end(), v.style) == styles.end())
        r.violations.push_back("style comes from the configured style list");
    if (std::find(environments.begin(), environments.end(), v.environment) == environments.end())
        r.violations.push_back("environment comes from the configured environment list");
    return r;
}

inline ValidationReport validate_record(const GeneratedImage& v) {
    ValidationReport r;
    if (v.width != 1024 || v.height != 1024) r.violations.push_back("width = height = 1024");
    if (v.content_hash.empty()) r.violations.push_back("content_hash present");
    return r;
}

inline ValidationReport validate_record(const QualityScores& v) {
    ValidationReport r;
    auto in_range = [](double x) { return x >= 0.0 && x <= 10.0; };
    if (!in_range(v.neutrality) || !in_range(v.clarity) || !in_range(v.consistency) ||
        !in_range(v.overall)) {
        r.violations.push_back("scores within [0,10]");
    }
    return r;
}

inline ValidationReport validate_record(const VqaSample& v) {
    ValidationReport r;
    if (v.template_index < 0 || v.template_index > 15) {
        r.violations.push_back("template_index within 0-15");
        return r;
    }
    const auto& tmpl = question_templates()[static_cast<size_t>(v.template_index)];
    if (v.question != tmpl.text)
        r.violations.push_back("question equals the template text for template_index");
    if (v.category != tmpl.category)
        r.violations.push_back("category matches the template's category");
    if (v.gate_status == GateStatus::kept) {
        if (!v.quality) {
            r.violations.push_back("kept implies quality present");
        } else {
            if (v.quality->overall < 6.0 ||
                v.quality->recommendation == Recommendation::discard) {
                r.violations.push_back("kept implies quality passing");
            }
            auto q = validate_record(*v.quality);
            r.violations.insert(r.violations.end(), q.violations.begin(), q.violations.end());
        }
    }
    return r;
}

inline ValidationReport validate_record(const JudgeVerdict& v) {
    ValidationReport r;
    if (!v.asr_complied && !v.cs_dimensions && !v.refused)
        r.violations.push_back("at least one of the three optional payloads present");
    if (v.cs_dimensions) {
        auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
        const auto& d = *v.cs_dimensions;
        if (!in_unit(d.politeness) || !in_unit(d.helpfulness) || !in_unit(d.task_completion) ||
            !in_unit(d.logical_flow) || !in_unit(d.information_richness)) {
            r.violations.push_back("each CS dimension within [0,1]");
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Run-level referential integrity over loaded record sets.

struct IntegrityReport {
    std::vector<std::string> problems;
    bool ok() const { return problems.empty(); }
};

inline IntegrityReport check_referential_integrity(const std::vector<ImagePrompt>& prompts,
                                                   const std::vector<GeneratedImage>& images,
                                                   const std::vector<VqaSample>& samples) {
    IntegrityReport report;
    std::map<std::string, int> prompt_ids, image_ids, sample_ids;
    for (const auto& p : prompts) prompt_ids[p.id]++;
    for (const auto& i : images) image_ids[i.id]++;
    for (const auto& s : samples) sample_ids[s.id]++;
    auto check_unique = [&report](const std::map<std::string, int>& ids, const char* kind) {
        for (const auto& [id, n] : ids) {
            if (n > 1) report.problems.push_back(std::string("duplicate ") + kind + " id: " + id);
        }
    };
    check_unique(prompt_ids, "prompt");
    check_unique(image_ids, "image");
    check_unique(sample_ids, "sample");
    for (const auto& img : images) {
        if (!prompt_ids.count(img.prompt_ref))
            report.problems.push_back("image " + img.id + " references missing prompt " +
                                      img.prompt_ref);
    }
    for (const auto& s : samples) {
        if (!image_ids.count(s.image_ref))
            report.problems.push_back("sample " + s.id + " references missing image " +
                                      s.image_ref);
    }
    return report;
}

}  // namespace vsfa
