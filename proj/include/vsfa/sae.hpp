#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vsfa/errors.hpp"
#include "vsfa/tensor_io.hpp"
#include "vsfa/types.hpp"
#include "vsfa/util.hpp"

namespace vsfa::sae {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Parameters and dumps

struct SaeParams {
    size_t d_model = 0;
    size_t d_latent = 0;
    size_t k = 0;
    std::vector<double> encoder;       // d_latent x d_model, row-major
    std::vector<double> encoder_bias;  // d_latent
    std::vector<double> pre_bias;      // d_model
    std::vector<double> decoder;       // d_model x d_latent, row-major; columns are latent directions
};

inline ValidationReport validate_record(const SaeParams& sae) {
    ValidationReport r;
    if (sae.k > sae.d_latent) r.violations.push_back("k <= d_latent");
    if (sae.encoder.size() != sae.d_latent * sae.d_model)
        r.violations.push_back("encoder shape is d_latent x d_model");
    if (sae.encoder_bias.size() != sae.d_latent)
        r.violations.push_back("encoder_bias length is d_latent");
    if (sae.pre_bias.size() != sae.d_model) r.violations.push_back("pre_bias length is d_model");
    if (sae.decoder.size() != sae.d_model * sae.d_latent)
        r.violations.push_back("decoder shape is d_model x d_latent");
    return r;
}

inline void require_valid(const SaeParams& sae) {
    auto report = validate_record(sae);
    if (!report.ok()) {
        std::string msg = "inconsistent SAE parameters:";
        for (const auto& v : report.violations) msg += " " + v + ";";
        throw Error(ErrorKind::precondition, msg);
    }
}

struct ActivationDump {
    struct Prompt {
        std::string prompt_id;
        size_t n_tokens = 0;
        std::vector<double> data;  // n_tokens x d_model, row-major
    };
    std::string model_tag;
    int layer_index = 0;
    size_t d_model = 0;
    std::vector<Prompt> prompts;
};

struct SteeringSpec {
    size_t latent_index = 0;
    double coefficient = 0.0;  // the steering multiple, positive or negative
    int target_layer = 0;
};

struct SteeringOutcome {
    size_t latent_index = 0;
    double positive_on_original_asr_delta = 0.0;   // percentage points
    double negative_on_finetuned_asr_delta = 0.0;  // percentage points
};

inline void to_json(json& j, const SteeringOutcome& o) {
    j = json{{"latent_index", o.latent_index},
             {"positive_on_original_asr_delta", o.positive_on_original_asr_delta},
             {"negative_on_finetuned_asr_delta", o.negative_on_finetuned_asr_delta}};
}

inline void from_json(const json& j, SteeringOutcome& o) {
    j.at("latent_index").get_to(o.latent_index);
    j.at("positive_on_original_asr_delta").get_to(o.positive_on_original_asr_delta);
    j.at("negative_on_finetuned_asr_delta").get_to(o.negative_on_finetuned_asr_delta);
}

// ---------------------------------------------------------------------------
// TopK inference

/// Pre-activation a = encoder * (x - pre_bias) + encoder_bias; the k largest
/// entries by value survive, the rest are zeroed. Ties keep the lower index.
inline std::vector<double> encode(std::span<const double> x, const SaeParams& sae) {
    require_valid(sae);
    if (x.size() != sae.d_model)
        throw Error(ErrorKind::precondition, "encode input length != d_model");
    std::vector<double> centered(sae.d_model);
    for (size_t i = 0; i < sae.d_model; ++i) centered[i] = x[i] - sae.pre_bias[i];
    std::vector<double> pre(sae.d_latent);
    for (size_t l = 0; l < sae.d_latent; ++l) {
        const double* row = sae.encoder.data() + l * sae.d_model;
        double acc = sae.encoder_bias[l];
        for (size_t i = 0; i < sae.d_model; ++i) acc += row[i] * centered[i];
        pre[l] = acc;
    }
    std::vector<size_t> idx(sae.d_latent);
    std::iota(idx.begin(), idx.end(), 0);
    size_t keep = std::min(sae.k, sae.d_latent);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(keep), idx.end(),
                      [&pre](size_t a, size_t b) {
                          if (pre[a] != pre[b]) return pre[a] > pre[b];
                          return a < b;
                      });
    std::vector<double> out(sae.d_latent, 0.0);
    for (size_t i = 0; i < keep; ++i) out[idx[i]] = pre[idx[i]];
    return out;
}

/// Reconstruction x_hat = decoder * z + pre_bias.
inline std::vector<double> decode(std::span<const double> z, const SaeParams& sae) {
    require_valid(sae);
    if (z.size() != sae.d_latent)
        throw Error(ErrorKind::precondition, "decode input length != d_latent");
    std::vector<double> out(sae.d_model);
    for (size_t i = 0; i < sae.d_model; ++i) {
        const double* row = sae.decoder.data() + i * sae.d_latent;
        double acc = sae.pre_bias[i];
        for (size_t l = 0; l < sae.d_latent; ++l) acc += row[l] * z[l];
        out[i] = acc;
    }
    return out;
}

/// Encodes every token activation, averages over tokens within each prompt,
/// then averages the per-prompt vectors (unweighted by token count).
inline std::vector<double> mean_latent_activation(const ActivationDump& dump,
                                                  const SaeParams& sae) {
    if (dump.prompts.empty())
        throw Error(ErrorKind::precondition, "activation dump has no prompts");
    if (dump.d_model != sae.d_model)
        throw Error(ErrorKind::precondition, "activation dump d_model != SAE d_model");
    std::vector<double> mean(sae.d_latent, 0.0);
    for (const auto& prompt : dump.prompts) {
        if (prompt.n_tokens == 0 || prompt.data.size() != prompt.n_tokens * dump.d_model)
            throw Error(ErrorKind::data_integrity,
                        "prompt " + prompt.prompt_id + " has inconsistent token data");
        std::vector<double> prompt_mean(sae.d_latent, 0.0);
        for (size_t t = 0; t < prompt.n_tokens; ++t) {
            std::span<const double> token(prompt.data.data() + t * dump.d_model, dump.d_model);
            std::vector<double> z = encode(token, sae);
            for (size_t l = 0; l < sae.d_latent; ++l) prompt_mean[l] += z[l];
        }
        for (size_t l = 0; l < sae.d_latent; ++l) {
            mean[l] += prompt_mean[l] / static_cast<double>(prompt.n_tokens);
        }
    }
    for (size_t l = 0; l < sae.d_latent; ++l) {
        mean[l] /= static_cast<double>(dump.prompts.size());
    }
    return mean;
}

// ---------------------------------------------------------------------------
// Model diffing

struct LatentDiff {
    size_t latent_index = 0;
    double mean_original = 0.0;
    double mean_finetuned = 0.0;
    double diff = 0.0;  // finetuned - original
    size_t rank = 0;    // 1-based
};

inline void to_json(json& j, const LatentDiff& d) {
    j = json{{"latent_index", d.latent_index},
             {"mean_original", d.mean_original},
             {"mean_finetuned", d.mean_finetuned},
             {"diff", d.diff},
             {"rank", d.rank}};
}

inline void from_json(const json& j, LatentDiff& d) {
    j.at("latent_index").get_to(d.latent_index);
    j.at("mean_original").get_to(d.mean_original);
    j.at("mean_finetuned").get_to(d.mean_finetuned);
    j.at("diff").get_to(d.diff);
    j.at("rank").get_to(d.rank);
}

/// Elementwise finetuned - original, sorted descending by diff (ties keep the
/// lower latent index), truncated to top_n.
inline std::vector<LatentDiff> latent_diff(std::span<const double> acts_original,
                                           std::span<const double> acts_finetuned,
                                           size_t top_n = 1000) {
    if (acts_original.size() != acts_finetuned.size())
        throw Error(ErrorKind::precondition, "latent_diff input lengths differ");
    std::vector<size_t> idx(acts_original.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto diff_of = [&](size_t i) { return acts_finetuned[i] - acts_original[i]; };
    size_t keep = std::min(top_n, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(keep), idx.end(),
                      [&](size_t a, size_t b) {
                          double da = diff_of(a), db = diff_of(b);
                          if (da != db) return da > db;
                          return a < b;
                      });
    std::vector<LatentDiff> out;
    out.reserve(keep);
    for (size_t r = 0; r < keep; ++r) {
        size_t i = idx[r];
        out.push_back({i, acts_original[i], acts_finetuned[i], diff_of(i), r + 1});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Logit-lens interpretation

struct TokenScore {
    size_t token_index = 0;
    std::string token;
    double cosine = 0.0;
};

inline void to_json(json& j, const TokenScore& t) {
    j = json{{"token_index", t.token_index}, {"token", t.token}, {"cosine", t.cosine}};
}

struct VocabEmbeddings {
    size_t vocab_size = 0;
    size_t d_model = 0;
    std::vector<double> data;         // vocab_size x d_model, row-major
    std::vector<std::string> tokens;  // optional; token indices used when absent
};

/// Cosine similarity of the latent's decoder column against every vocabulary
/// embedding row; top-k tokens descending. Zero-norm embedding rows score 0; a
/// zero-norm decoder column is an error.
inline std::vector<TokenScore> logit_lens_top_tokens(size_t latent_index, const SaeParams& sae,
                                                     const VocabEmbeddings& vocab, size_t k) {
    require_valid(sae);
    if (latent_index >= sae.d_latent)
        throw Error(ErrorKind::precondition, "latent_index out of range");
    if (vocab.d_model != sae.d_model)
        throw Error(ErrorKind::precondition, "vocab embedding width != d_model");
    std::vector<double> column(sae.d_model);
    double col_norm_sq = 0.0;
    for (size_t i = 0; i < sae.d_model; ++i) {
        column[i] = sae.decoder[i * sae.d_latent + latent_index];
        col_norm_sq += column[i] * column[i];
    }
    if (col_norm_sq == 0.0)
        throw Error(ErrorKind::precondition,
                    "decoder column " + std::to_string(latent_index) + " has zero norm");
    double col_norm = std::sqrt(col_norm_sq);

    std::vector<double> scores(vocab.vocab_size);
    for (size_t v = 0; v < vocab.vocab_size; ++v) {
        const double* row = vocab.data.data() + v * vocab.d_model;
        double dot = 0.0, norm_sq = 0.0;
        for (size_t i = 0; i < vocab.d_model; ++i) {
            dot += row[i] * column[i];
            norm_sq += row[i] * row[i];
        }
        scores[v] = norm_sq == 0.0 ? 0.0 : dot / (col_norm * std::sqrt(norm_sq));
    }
    std::vector<size_t> idx(vocab.vocab_size);
    std::iota(idx.begin(), idx.end(), 0);
    size_t keep = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(keep), idx.end(),
                      [&scores](size_t a, size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;
                      });
    std::vector<TokenScore> out;
    out.reserve(keep);
    for (size_t r = 0; r < keep; ++r) {
        size_t v = idx[r];
        std::string token =
            v < vocab.tokens.size() ? vocab.tokens[v] : "token_" + std::to_string(v);
        out.push_back({v, token, scores[v]});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Steering

/// Scaled decoder direction: coefficient x decoder column.
inline std::vector<double> steering_vector(const SteeringSpec& spec, const SaeParams& sae) {
    require_valid(sae);
    if (spec.latent_index >= sae.d_latent)
        throw Error(ErrorKind::precondition, "steering latent_index out of range");
    std::vector<double> out(sae.d_model);
    for (size_t i = 0; i < sae.d_model; ++i) {
        out[i] = spec.coefficient * sae.decoder[i * sae.d_latent + spec.latent_index];
    }
    return out;
}

/// A latent qualifies when positive steering on the original model moves ASR
/// down and negative steering on the finetuned model moves ASR up. Returned
/// ascending by latent index.
inline std::vector<size_t> classify_bidirectional(const std::vector<SteeringOutcome>& outcomes) {
    std::vector<size_t> qualifying;
    for (const auto& o : outcomes) {
        if (o.positive_on_original_asr_delta < 0.0 && o.negative_on_finetuned_asr_delta > 0.0) {
            qualifying.push_back(o.latent_index);
        }
    }
    std::sort(qualifying.begin(), qualifying.end());
    return qualifying;
}

// ---------------------------------------------------------------------------
// File formats

inline void save_sae(const fs::path& bin_path, const SaeParams& sae) {
    require_valid(sae);
    std::vector<float> data;
    json tensors = json::array();
    auto append = [&](const char* name, const std::vector<double>& t, json shape) {
        tensors.push_back({{"name", name}, {"shape", shape}, {"offset", data.size()}});
        for (double v : t) data.push_back(static_cast<float>(v));
    };
    append("encoder", sae.encoder, {sae.d_latent, sae.d_model});
    append("encoder_bias", sae.encoder_bias, {sae.d_latent});
    append("pre_bias", sae.pre_bias, {sae.d_model});
    append("decoder", sae.decoder, {sae.d_model, sae.d_latent});
    json manifest = tio::base_manifest();
    manifest["d_model"] = sae.d_model;
    manifest["d_latent"] = sae.d_latent;
    manifest["k"] = sae.k;
    manifest["tensors"] = tensors;
    tio::write_f32(bin_path, data);
    atomic_write_file(tio::manifest_path(bin_path), manifest.dump(2) + "\n");
}

inline SaeParams load_sae(const fs::path& bin_path) {
    json manifest = tio::load_manifest(bin_path);
    std::vector<float> data = tio::read_f32(bin_path);
    SaeParams sae;
    sae.d_model = manifest.at("d_model").get<size_t>();
    sae.d_latent = manifest.at("d_latent").get<size_t>();
    sae.k = manifest.at("k").get<size_t>();
    for (const auto& t : manifest.at("tensors")) {
        std::string name = t.at("name").get<std::string>();
        size_t offset = t.at("offset").get<size_t>();
        size_t count = 1;
        for (const auto& d : t.at("shape")) count *= d.get<size_t>();
        std::vector<double> values = tio::widen(data, offset, count);
        if (name == "encoder") sae.encoder = std::move(values);
        else if (name == "encoder_bias") sae.encoder_bias = std::move(values);
        else if (name == "pre_bias") sae.pre_bias = std::move(values);
        else if (name == "decoder") sae.decoder = std::move(values);
    }
    require_valid(sae);
    return sae;
}

inline void save_activations(const fs::path& bin_path, const ActivationDump& dump) {
    std::vector<float> data;
    json prompts = json::array();
    for (const auto& p : dump.prompts) {
        prompts.push_back(
            {{"prompt_id", p.prompt_id}, {"n_tokens", p.n_tokens}, {"offset", data.size()}});
        for (double v : p.data) data.push_back(static_cast<float>(v));
    }
    json manifest = tio::base_manifest();
    manifest["model_tag"] = dump.model_tag;
    manifest["layer_index"] = dump.layer_index;
    manifest["d_model"] = dump.d_model;
    manifest["prompts"] = prompts;
    tio::write_f32(bin_path, data);
    atomic_write_file(tio::manifest_path(bin_path), manifest.dump(2) + "\n");
}

inline ActivationDump load_activations(const fs::path& bin_path) {
    json manifest = tio::load_manifest(bin_path);
    std::vector<float> data = tio::read_f32(bin_path);
    ActivationDump dump;
    dump.model_tag = manifest.at("model_tag").get<std::string>();
    dump.layer_index = manifest.at("layer_index").get<int>();
    dump.d_model = manifest.at("d_model").get<size_t>();
    for (const auto& pj : manifest.at("prompts")) {
        ActivationDump::Prompt p;
        p.prompt_id = pj.at("prompt_id").get<std::string>();
        p.n_tokens = pj.at("n_tokens").get<size_t>();
        p.data = tio::widen(data, pj.at("offset").get<size_t>(), p.n_tokens * dump.d_model);
        dump.prompts.push_back(std::move(p));
    }
    return dump;
}

inline void save_vocab(const fs::path& bin_path, const VocabEmbeddings& vocab) {
    json manifest = tio::base_manifest();
    manifest["shape"] = {vocab.vocab_size, vocab.d_model};
    if (!vocab.tokens.empty()) manifest["tokens"] = vocab.tokens;
    tio::write_f32(bin_path, tio::narrow(vocab.data));
    atomic_write_file(tio::manifest_path(bin_path), manifest.dump(2) + "\n");
}

inline VocabEmbeddings load_vocab(const fs::path& bin_path) {
    json manifest = tio::load_manifest(bin_path);
    std::vector<float> data = tio::read_f32(bin_path);
    VocabEmbeddings vocab;
    vocab.vocab_size = manifest.at("shape")[0].get<size_t>();
    vocab.d_model = manifest.at("shape")[1].get<size_t>();
    vocab.data = tio::widen(data, 0, vocab.vocab_size * vocab.d_model);
    if (manifest.contains("tokens")) manifest.at("tokens").get_to(vocab.tokens);
    return vocab;
}

/// Writes steering/<latent>_<coefficient>.bin plus its manifest; returns the
/// bin path.
inline fs::path export_steering_vector(const SteeringSpec& spec, const SaeParams& sae,
                                       const fs::path& out_dir) {
    std::vector<double> vec = steering_vector(spec, sae);
    fs::path dir = out_dir / "steering";
    fs::create_directories(dir);
    std::string stem = std::to_string(spec.latent_index) + "_" + fmt_compact(spec.coefficient);
    fs::path bin = dir / (stem + ".bin");
    tio::write_f32(bin, tio::narrow(vec));
    json manifest = tio::base_manifest();
    manifest["latent_index"] = spec.latent_index;
    manifest["coefficient"] = spec.coefficient;
    manifest["target_layer"] = spec.target_layer;
    manifest["d_model"] = sae.d_model;
    atomic_write_file(tio::manifest_path(bin), manifest.dump(2) + "\n");
    return bin;
}

inline void write_latent_diff_report(const fs::path& path, const std::vector<LatentDiff>& diffs,
                                     const std::vector<size_t>* qualifying = nullptr) {
    json j;
    j["reported"] = diffs.size();
    j["latents"] = diffs;
    if (qualifying) j["qualifying_latents"] = *qualifying;
    atomic_write_file(path, j.dump(2) + "\n");
}

}  // namespace vsfa::sae
