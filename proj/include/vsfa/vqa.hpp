#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "vsfa/assets.hpp"
#include "vsfa/errors.hpp"
#include "vsfa/gateway.hpp"
#include "vsfa/rng.hpp"
#include "vsfa/types.hpp"

namespace vsfa::vqa {

/// Picks 6 distinct templates for an image: one from each of the four
/// categories, plus two more drawn without replacement from the remaining 12.
/// Deterministic given (image id, seed); returned in template-index order.
inline std::vector<QuestionTemplate> sample_questions(const GeneratedImage& image,
                                                      uint64_t seed) {
    SplitMix64 rng(seed ^ seed_from_string("vqa|" + image.id));
    const auto& table = question_templates();
    std::vector<int> chosen;
    for (int cat = 0; cat < 4; ++cat) {
        chosen.push_back(cat * 4 + static_cast<int>(rng.below(4)));
    }
    std::vector<int> remaining;
    for (int i = 0; i < 16; ++i) {
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) remaining.push_back(i);
    }
    for (int extra = 0; extra < 2; ++extra) {
        size_t pick = static_cast<size_t>(rng.below(remaining.size()));
        chosen.push_back(remaining[pick]);
        remaining.erase(remaining.begin() + static_cast<long>(pick));
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<QuestionTemplate> out;
    for (int idx : chosen) out.push_back(table[static_cast<size_t>(idx)]);
    return out;
}

struct TeacherOptions {
    std::string model_name = "gpt-4o-mini";
    double temperature = 0.7;
    int max_tokens = 0;
    // instruction asset; callers may point this at their own text
    std::string instruction = std::string(assets::kAnswerTeacherPrompt);
};

/// Asks the teacher model to answer the question about the scene described by
/// the generation prompt (the teacher never sees image bytes). Empty replies
/// are retried and then fail inside the gateway.
inline std::string generate_answer(Gateway& gateway, const GeneratedImage& image,
                                   const ImagePrompt& prompt, const QuestionTemplate& question,
                                   const TeacherOptions& opts = {}) {
    if (image.prompt_ref != prompt.id)
        throw Error(ErrorKind::precondition,
                    "image " + image.id + " was not generated from prompt " + prompt.id);
    ChatRequest req;
    req.role_system = opts.instruction;
    req.role_user = "Image generation prompt:\n" + prompt.prompt_text +
                    "\n\nQuestion: " + std::string(question.text);
    req.model_name = opts.model_name;
    req.temperature = opts.temperature;
    req.max_tokens = opts.max_tokens;
    return normalize_ws(gateway.chat(req));
}

inline VqaSample make_sample(const GeneratedImage& image, const QuestionTemplate& question,
                             std::string answer) {
    VqaSample s;
    s.image_ref = image.id;
    s.category = question.category;
    s.template_index = question.index;
    s.question = std::string(question.text);
    s.answer = std::move(answer);
    s.gate_status = GateStatus::pending;
    s.id = content_id("vqa", s);
    return s;
}

/// Builds the 6 pending samples for one image.
inline std::vector<VqaSample> build_samples(Gateway& gateway, const GeneratedImage& image,
                                            const ImagePrompt& prompt, uint64_t seed,
                                            const TeacherOptions& opts = {}) {
    std::vector<VqaSample> out;
    for (const auto& q : sample_questions(image, seed)) {
        out.push_back(make_sample(image, q, generate_answer(gateway, image, prompt, q, opts)));
    }
    return out;
}

}  // namespace vsfa::vqa
