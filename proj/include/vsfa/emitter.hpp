#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "vsfa/errors.hpp"
#include "vsfa/jsonl.hpp"
#include "vsfa/types.hpp"
#include "vsfa/util.hpp"

namespace vsfa::emit {

namespace fs = std::filesystem;

struct DatasetStats {
    size_t total_images = 0;
    size_t total_pairs = 0;
    double pairs_per_image = 0.0;
    double answer_len_mean = 0.0;
    double answer_len_median = 0.0;
    double answer_len_min = 0.0;
    double answer_len_max = 0.0;
    double answer_len_std = 0.0;
    std::map<std::string, size_t> per_category_counts;
};

inline void to_json(json& j, const DatasetStats& s) {
    j = json{{"total_images", s.total_images},
             {"total_pairs", s.total_pairs},
             {"pairs_per_image", s.pairs_per_image},
             {"answer_len_mean", s.answer_len_mean},
             {"answer_len_median", s.answer_len_median},
             {"answer_len_min", s.answer_len_min},
             {"answer_len_max", s.answer_len_max},
             {"answer_len_std", s.answer_len_std},
             {"per_category_counts", s.per_category_counts}};
}

/// Word counts use whitespace tokenization; std is the population standard
/// deviation; median is the lower middle for even counts. Empty input yields
/// zeroed stats.
inline DatasetStats compute_stats(const std::vector<VqaSample>& samples) {
    DatasetStats stats;
    stats.total_pairs = samples.size();
    if (samples.empty()) return stats;

    std::set<std::string> images;
    std::vector<double> lengths;
    lengths.reserve(samples.size());
    for (const auto& s : samples) {
        images.insert(s.image_ref);
        lengths.push_back(static_cast<double>(word_count(s.answer)));
        stats.per_category_counts[to_string(s.category)]++;
    }
    stats.total_images = images.size();
    stats.pairs_per_image =
        static_cast<double>(stats.total_pairs) / static_cast<double>(stats.total_images);

    std::sort(lengths.begin(), lengths.end());
    double sum = 0.0;
    for (double v : lengths) sum += v;
    double mean = sum / static_cast<double>(lengths.size());
    double sq = 0.0;
    for (double v : lengths) sq += (v - mean) * (v - mean);
    stats.answer_len_mean = mean;
    stats.answer_len_median = lengths[(lengths.size() - 1) / 2];
    stats.answer_len_min = lengths.front();
    stats.answer_len_max = lengths.back();
    stats.answer_len_std = std::sqrt(sq / static_cast<double>(lengths.size()));
    return stats;
}

/// Emits the visual-instruction-tuning dataset: one JSON array, elements
/// ordered by sample id, each with the "<image>\n" + question human turn and
/// the answer gpt turn. Every referenced image file must exist on disk.
inline void emit_dataset(const std::vector<VqaSample>& samples,
                         const std::vector<GeneratedImage>& images, const fs::path& run_dir,
                         const fs::path& out_file) {
    std::map<std::string, const GeneratedImage*> by_id;
    for (const auto& img : images) by_id[img.id] = &img;

    std::vector<const VqaSample*> ordered;
    ordered.reserve(samples.size());
    std::vector<std::string> offenders;
    for (const auto& s : samples) {
        if (s.gate_status != GateStatus::kept)
            throw Error(ErrorKind::precondition,
                        "emit_dataset requires kept samples; " + s.id + " is " +
                            to_string(s.gate_status));
        auto it = by_id.find(s.image_ref);
        if (it == by_id.end()) {
            offenders.push_back(s.id + " -> missing image record " + s.image_ref);
            continue;
        }
        if (!fs::exists(run_dir / it->second->storage_path)) {
            offenders.push_back(s.id + " -> missing image file " + it->second->storage_path);
            continue;
        }
        ordered.push_back(&s);
    }
    if (!offenders.empty()) {
        std::string msg = "dataset emission found dangling image references:";
        for (const auto& o : offenders) msg += "\n  " + o;
        throw Error(ErrorKind::data_integrity, msg);
    }

    std::sort(ordered.begin(), ordered.end(),
              [](const VqaSample* a, const VqaSample* b) { return a->id < b->id; });

    json arr = json::array();
    for (const VqaSample* s : ordered) {
        json conversations = json::array();
        conversations.push_back({{"from", "human"}, {"value", "<image>\n" + s->question}});
        conversations.push_back({{"from", "gpt"}, {"value", s->answer}});
        arr.push_back({{"id", s->id},
                       {"image", by_id[s->image_ref]->storage_path},
                       {"conversations", conversations}});
    }
    atomic_write_file(out_file, arr.dump(2) + "\n");
}

inline std::string render_stats_report(const DatasetStats& stats,
                                       const std::string& title = "Dataset statistics") {
    std::string out = title + "\n" + std::string(title.size(), '=') + "\n";
    out += "Total images: " + std::to_string(stats.total_images) + "\n";
    out += "Total VQA pairs: " + std::to_string(stats.total_pairs) + "\n";
    out += "VQA pairs per image: " + fmt_compact(stats.pairs_per_image) + "\n";
    if (!stats.per_category_counts.empty()) {
        out += "Per-category counts:\n";
        for (const auto& [cat, n] : stats.per_category_counts) {
            out += "  " + cat + ": " + std::to_string(n) + "\n";
        }
    }
    out += "Answer length (words):\n";
    out += "  Mean: " + fmt_compact(stats.answer_len_mean) + "\n";
    out += "  Median: " + fmt_compact(stats.answer_len_median) + "\n";
    out += "  Min: " + fmt_compact(stats.answer_len_min) + "\n";
    out += "  Max: " + fmt_compact(stats.answer_len_max) + "\n";
    out += "  Std: " + fmt_compact(stats.answer_len_std) + "\n";
    return out;
}

inline std::string render_train_config() {
    return "adapter_rank = 128\n"
           "learning_rate = 2e-5\n"
           "epochs = 5\n"
           "batch_size = 16\n"
           "optimizer = adamw\n"
           "freeze_visual_encoder = true\n";
}

inline void emit_train_config(const fs::path& out_file) {
    atomic_write_file(out_file, render_train_config());
}

}  // namespace vsfa::emit
