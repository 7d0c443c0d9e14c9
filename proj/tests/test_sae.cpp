#include <gtest/gtest.h>

#include <cmath>

#include "vsfa/rng.hpp"
#include "vsfa/sae.hpp"

#include "sae_oracles.hpp"
#include "test_support.hpp"

namespace vsfa::sae {
namespace {

namespace oracle = vsfa_test::oracle;

SaeParams random_sae(SplitMix64& rng, size_t d_model, size_t d_latent, size_t k) {
    SaeParams sae;
    sae.d_model = d_model;
    sae.d_latent = d_latent;
    sae.k = k;
    auto fill = [&rng](std::vector<double>& v, size_t n) {
        v.resize(n);
        for (auto& x : v) x = rng.unit_real() * 2.0 - 1.0;
    };
    fill(sae.encoder, d_latent * d_model);
    fill(sae.encoder_bias, d_latent);
    fill(sae.pre_bias, d_model);
    fill(sae.decoder, d_model * d_latent);
    return sae;
}

std::vector<double> random_vec(SplitMix64& rng, size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.unit_real() * 4.0 - 2.0;
    return v;
}

// ---------------------------------------------------------------------------
// trivial fixed points

TEST(SaeEncode, ZeroInputZeroBiasesGivesZeroLatents) {
    SaeParams sae;
    sae.d_model = 3;
    sae.d_latent = 4;
    sae.k = 2;
    sae.encoder.assign(12, 0.5);
    sae.encoder_bias.assign(4, 0.0);
    sae.pre_bias.assign(3, 0.0);
    sae.decoder.assign(12, 0.5);
    std::vector<double> x(3, 0.0);
    for (double v : encode(x, sae)) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(SaeEncode, TopKDefinitionOnIdentity) {
    SaeParams sae;
    sae.d_model = 3;
    sae.d_latent = 3;
    sae.k = 2;
    sae.encoder = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    sae.encoder_bias.assign(3, 0.0);
    sae.pre_bias.assign(3, 0.0);
    sae.decoder = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    std::vector<double> x = {3.0, 1.0, 2.0};
    std::vector<double> z = encode(x, sae);
    EXPECT_EQ(z, (std::vector<double>{3.0, 0.0, 2.0}));
}

TEST(SaeEncode, AtMostKNonZerosAlways) {
    SplitMix64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        size_t d_model = 1 + rng.below(16);
        size_t d_latent = 1 + rng.below(32);
        size_t k = rng.below(d_latent + 1);
        SaeParams sae = random_sae(rng, d_model, d_latent, k);
        std::vector<double> z = encode(random_vec(rng, d_model), sae);
        size_t nonzeros = 0;
        for (double v : z) nonzeros += v != 0.0;
        EXPECT_LE(nonzeros, k);
    }
}

TEST(SaeDecode, ZeroLatentsReproduceThePreBias) {
    SplitMix64 rng(32);
    SaeParams sae = random_sae(rng, 5, 7, 3);
    std::vector<double> z(7, 0.0);
    std::vector<double> xhat = decode(z, sae);
    for (size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(xhat[i], sae.pre_bias[i]);
}

TEST(SaeDecode, ExactInverseRoundTrip) {
    // decoder = diag(1/2), encoder = diag(2), k = d_latent, zero biases
    SaeParams sae;
    sae.d_model = 4;
    sae.d_latent = 4;
    sae.k = 4;
    sae.encoder.assign(16, 0.0);
    sae.decoder.assign(16, 0.0);
    for (size_t i = 0; i < 4; ++i) {
        sae.encoder[i * 4 + i] = 2.0;
        sae.decoder[i * 4 + i] = 0.5;
    }
    sae.encoder_bias.assign(4, 0.0);
    sae.pre_bias.assign(4, 0.0);
    std::vector<double> x = {0.25, -1.5, 3.0, 0.0};
    std::vector<double> xhat = decode(encode(x, sae), sae);
    for (size_t i = 0; i < 4; ++i) EXPECT_NEAR(xhat[i], x[i], 1e-9);
}

TEST(SaeEncode, ShapeMismatchIsAnError) {
    SplitMix64 rng(33);
    SaeParams sae = random_sae(rng, 4, 6, 2);
    std::vector<double> wrong(5, 0.0);
    EXPECT_THROW(encode(wrong, sae), Error);
    EXPECT_THROW(decode(wrong, sae), Error);
    sae.encoder_bias.pop_back();
    EXPECT_FALSE(validate_record(sae).ok());
    std::vector<double> x(4, 0.0);
    EXPECT_THROW(encode(x, sae), Error);
}

TEST(MeanLatentActivation, SingleTokenEqualsEncode) {
    SplitMix64 rng(34);
    SaeParams sae = random_sae(rng, 6, 10, 4);
    std::vector<double> token = random_vec(rng, 6);
    ActivationDump dump;
    dump.model_tag = "original";
    dump.layer_index = 12;
    dump.d_model = 6;
    dump.prompts.push_back({"p1", 1, token});
    std::vector<double> mean = mean_latent_activation(dump, sae);
    std::vector<double> direct = encode(token, sae);
    for (size_t l = 0; l < sae.d_latent; ++l) EXPECT_NEAR(mean[l], direct[l], 1e-12);
}

TEST(MeanLatentActivation, TwoTokenArithmeticMean) {
    // identity encoder over d_model = d_latent = 2, k = 2: latents equal inputs
    SaeParams sae;
    sae.d_model = 2;
    sae.d_latent = 2;
    sae.k = 2;
    sae.encoder = {1, 0, 0, 1};
    sae.decoder = {1, 0, 0, 1};
    sae.encoder_bias.assign(2, 0.0);
    sae.pre_bias.assign(2, 0.0);
    ActivationDump dump;
    dump.d_model = 2;
    dump.prompts.push_back({"p1", 2, {1.0, 0.0, 3.0, 0.0}});
    std::vector<double> mean = mean_latent_activation(dump, sae);
    EXPECT_DOUBLE_EQ(mean[0], 2.0);
    EXPECT_DOUBLE_EQ(mean[1], 0.0);
}

TEST(MeanLatentActivation, EmptyDumpIsAnError) {
    SplitMix64 rng(35);
    SaeParams sae = random_sae(rng, 4, 8, 3);
    ActivationDump dump;
    dump.d_model = 4;
    EXPECT_THROW(mean_latent_activation(dump, sae), Error);
}

TEST(MeanLatentActivation, PromptOrderDoesNotMatter) {
    SplitMix64 rng(36);
    SaeParams sae = random_sae(rng, 8, 16, 5);
    ActivationDump dump;
    dump.d_model = 8;
    for (int p = 0; p < 4; ++p) {
        size_t n_tokens = 1 + rng.below(5);
        dump.prompts.push_back(
            {"p" + std::to_string(p), n_tokens, random_vec(rng, n_tokens * 8)});
    }
    ActivationDump reversed = dump;
    std::reverse(reversed.prompts.begin(), reversed.prompts.end());
    auto a = mean_latent_activation(dump, sae);
    auto b = mean_latent_activation(reversed, sae);
    for (size_t l = 0; l < sae.d_latent; ++l) EXPECT_NEAR(a[l], b[l], 1e-12);
}

// ---------------------------------------------------------------------------
// latent diff

TEST(LatentDiff, IdenticalVectorsAllZero) {
    std::vector<double> v = {1.0, 2.0, 3.0};
    auto diffs = latent_diff(v, v, 2);
    ASSERT_EQ(diffs.size(), 2u);
    for (const auto& d : diffs) EXPECT_DOUBLE_EQ(d.diff, 0.0);
    EXPECT_EQ(diffs[0].latent_index, 0u);  // ties break by lower index
    EXPECT_EQ(diffs[1].latent_index, 1u);
}

TEST(LatentDiff, HandArithmeticWithTieBreak) {
    std::vector<double> original = {0.0, 1.0, 2.0};
    std::vector<double> finetuned = {5.0, 1.0, 0.0};
    auto diffs = latent_diff(original, finetuned, 2);
    ASSERT_EQ(diffs.size(), 2u);
    EXPECT_EQ(diffs[0].latent_index, 0u);
    EXPECT_DOUBLE_EQ(diffs[0].diff, 5.0);
    EXPECT_DOUBLE_EQ(diffs[0].mean_original, 0.0);
    EXPECT_DOUBLE_EQ(diffs[0].mean_finetuned, 5.0);
    EXPECT_EQ(diffs[0].rank, 1u);
    EXPECT_EQ(diffs[1].latent_index, 1u);
    EXPECT_DOUBLE_EQ(diffs[1].diff, 0.0);
    EXPECT_EQ(diffs[1].rank, 2u);
}

TEST(LatentDiff, DefaultTopNIsOneThousand) {
    SplitMix64 rng(37);
    std::vector<double> a = random_vec(rng, 5000), b = random_vec(rng, 5000);
    auto diffs = latent_diff(a, b);
    EXPECT_EQ(diffs.size(), 1000u);
    for (size_t i = 1; i < diffs.size(); ++i) {
        EXPECT_GE(diffs[i - 1].diff, diffs[i].diff);
        EXPECT_EQ(diffs[i].rank, i + 1);
    }
}

TEST(LatentDiff, LengthMismatchIsAnError) {
    std::vector<double> a = {1.0, 2.0}, b = {1.0};
    EXPECT_THROW(latent_diff(a, b, 10), Error);
}

TEST(LatentDiff, AntisymmetricUnderSwap) {
    SplitMix64 rng(38);
    std::vector<double> a = random_vec(rng, 64), b = random_vec(rng, 64);
    auto fwd = latent_diff(a, b, 64);
    auto rev = latent_diff(b, a, 64);
    std::map<size_t, double> rev_by_index;
    for (const auto& d : rev) rev_by_index[d.latent_index] = d.diff;
    for (const auto& d : fwd) EXPECT_NEAR(d.diff, -rev_by_index[d.latent_index], 1e-12);
}

// ---------------------------------------------------------------------------
// logit lens

TEST(LogitLens, SelfSimilarityRanksFirst) {
    SplitMix64 rng(39);
    SaeParams sae = random_sae(rng, 6, 8, 3);
    VocabEmbeddings vocab;
    vocab.vocab_size = 5;
    vocab.d_model = 6;
    vocab.data = random_vec(rng, 30);
    // token 3 = the decoder column of latent 2, scaled
    for (size_t i = 0; i < 6; ++i) vocab.data[3 * 6 + i] = 2.0 * sae.decoder[i * 8 + 2];
    vocab.tokens = {"alpha", "beta", "gamma", "delta", "epsilon"};
    auto top = logit_lens_top_tokens(2, sae, vocab, 5);
    ASSERT_EQ(top.size(), 5u);
    EXPECT_EQ(top[0].token, "delta");
    EXPECT_NEAR(top[0].cosine, 1.0, 1e-9);
    for (const auto& t : top) {
        EXPECT_GE(t.cosine, -1.0 - 1e-12);
        EXPECT_LE(t.cosine, 1.0 + 1e-12);
    }
}

TEST(LogitLens, OrthogonalVocabScoresZero) {
    SaeParams sae;
    sae.d_model = 3;
    sae.d_latent = 2;
    sae.k = 1;
    sae.encoder.assign(6, 0.0);
    sae.encoder_bias.assign(2, 0.0);
    sae.pre_bias.assign(3, 0.0);
    // 3 rows x 2 columns: latent 0 direction = (1, 0, 0); latent 1 = zero
    sae.decoder = {1, 0, 0, 0, 0, 0};
    VocabEmbeddings vocab;
    vocab.vocab_size = 2;
    vocab.d_model = 3;
    vocab.data = {0, 1, 0, 0, 0, 1};  // both orthogonal to (1,0,0)
    auto top = logit_lens_top_tokens(0, sae, vocab, 2);
    for (const auto& t : top) EXPECT_DOUBLE_EQ(t.cosine, 0.0);

    EXPECT_THROW(logit_lens_top_tokens(1, sae, vocab, 2), Error);  // zero-norm column
}

TEST(LogitLens, ZeroNormEmbeddingRowsScoreZero) {
    SaeParams sae;
    sae.d_model = 2;
    sae.d_latent = 1;
    sae.k = 1;
    sae.encoder.assign(2, 0.0);
    sae.encoder_bias.assign(1, 0.0);
    sae.pre_bias.assign(2, 0.0);
    sae.decoder = {1, 1};
    VocabEmbeddings vocab;
    vocab.vocab_size = 2;
    vocab.d_model = 2;
    vocab.data = {0, 0, 1, 1};
    auto top = logit_lens_top_tokens(0, sae, vocab, 2);
    EXPECT_EQ(top[0].token_index, 1u);
    EXPECT_NEAR(top[0].cosine, 1.0, 1e-12);
    EXPECT_EQ(top[1].token_index, 0u);
    EXPECT_DOUBLE_EQ(top[1].cosine, 0.0);
}

// ---------------------------------------------------------------------------
// steering

TEST(Steering, ScalingIdentities) {
    SplitMix64 rng(40);
    SaeParams sae = random_sae(rng, 5, 9, 4);

    SteeringSpec zero{3, 0.0, 15};
    for (double v : steering_vector(zero, sae)) EXPECT_DOUBLE_EQ(v, 0.0);

    // unit decoder column for latent 1
    for (size_t i = 0; i < 5; ++i) sae.decoder[i * 9 + 1] = 0.0;
    sae.decoder[0 * 9 + 1] = 1.0;
    SteeringSpec doubled{1, 2.0, 15};
    std::vector<double> v2 = steering_vector(doubled, sae);
    double norm = 0.0;
    for (double v : v2) norm += v * v;
    EXPECT_NEAR(std::sqrt(norm), 2.0, 1e-12);

    SteeringSpec plus{4, 1.0, 15}, minus{4, -1.0, 15};
    std::vector<double> vp = steering_vector(plus, sae), vm = steering_vector(minus, sae);
    for (size_t i = 0; i < vp.size(); ++i) EXPECT_DOUBLE_EQ(vp[i] + vm[i], 0.0);

    SteeringSpec bad{9, 1.0, 15};
    EXPECT_THROW(steering_vector(bad, sae), Error);
}

TEST(ClassifyBidirectional, SignCriterion) {
    EXPECT_EQ(classify_bidirectional({{12, -18.0, 14.0}}), std::vector<size_t>{12});
    EXPECT_TRUE(classify_bidirectional({{7, -5.0, -2.0}}).empty());
    EXPECT_TRUE(classify_bidirectional({{7, 3.0, 4.0}}).empty());
    EXPECT_TRUE(classify_bidirectional({{7, 0.0, 4.0}}).empty());  // strict signs
}

// ---------------------------------------------------------------------------
// oracle equivalence sweep (the acceptance suite repeats this at 50 instances)

TEST(OracleEquivalence, RandomInstancesMatchBruteForce) {
    SplitMix64 rng(4242);
    for (int trial = 0; trial < 12; ++trial) {
        size_t d_model = 2 + rng.below(31);   // <= 32
        size_t d_latent = 2 + rng.below(63);  // <= 64
        size_t k = 1 + rng.below(std::min<size_t>(16, d_latent));
        SaeParams sae = random_sae(rng, d_model, d_latent, k);

        std::vector<double> x = random_vec(rng, d_model);
        auto z_impl = encode(x, sae);
        auto z_oracle = oracle::encode(x, sae);
        for (size_t l = 0; l < d_latent; ++l) EXPECT_NEAR(z_impl[l], z_oracle[l], 1e-9);

        auto x_impl = decode(z_impl, sae);
        auto x_oracle = oracle::decode(z_oracle, sae);
        for (size_t i = 0; i < d_model; ++i) EXPECT_NEAR(x_impl[i], x_oracle[i], 1e-9);

        ActivationDump dump;
        dump.d_model = d_model;
        size_t n_prompts = 1 + rng.below(3);
        for (size_t p = 0; p < n_prompts; ++p) {
            size_t n_tokens = 1 + rng.below(4);
            dump.prompts.push_back(
                {"p" + std::to_string(p), n_tokens, random_vec(rng, n_tokens * d_model)});
        }
        auto mean_impl = mean_latent_activation(dump, sae);
        auto mean_oracle = oracle::mean_latents(dump, sae);
        for (size_t l = 0; l < d_latent; ++l) EXPECT_NEAR(mean_impl[l], mean_oracle[l], 1e-9);

        std::vector<double> other = random_vec(rng, d_latent);
        size_t top_n = 1 + rng.below(d_latent);
        auto diff_impl = latent_diff(mean_impl, other, top_n);
        auto diff_oracle = oracle::top_diffs(mean_impl, other, top_n);
        ASSERT_EQ(diff_impl.size(), diff_oracle.size());
        for (size_t i = 0; i < diff_impl.size(); ++i) {
            EXPECT_EQ(diff_impl[i].latent_index, diff_oracle[i].first);
            EXPECT_NEAR(diff_impl[i].diff, diff_oracle[i].second, 1e-9);
        }

        VocabEmbeddings vocab;
        vocab.vocab_size = 3 + rng.below(20);
        vocab.d_model = d_model;
        vocab.data = random_vec(rng, vocab.vocab_size * d_model);
        size_t latent = rng.below(d_latent);
        auto lens_impl = logit_lens_top_tokens(latent, sae, vocab, vocab.vocab_size);
        auto lens_oracle = oracle::cosines(latent, sae, vocab);
        for (size_t i = 0; i < lens_impl.size(); ++i) {
            EXPECT_EQ(lens_impl[i].token_index, lens_oracle[i].first);
            EXPECT_NEAR(lens_impl[i].cosine, lens_oracle[i].second, 1e-9);
        }
    }
}

// ---------------------------------------------------------------------------
// file round trips

TEST(SaeFiles, WeightsRoundTrip) {
    vsfa_test::TempDir dir;
    SplitMix64 rng(50);
    SaeParams sae = random_sae(rng, 6, 10, 4);
    // float32 storage: write values that survive the narrowing exactly
    for (auto* t : {&sae.encoder, &sae.encoder_bias, &sae.pre_bias, &sae.decoder}) {
        for (auto& v : *t) v = static_cast<double>(static_cast<float>(v));
    }
    auto path = dir.path() / "sae_weights.bin";
    save_sae(path, sae);
    SaeParams back = load_sae(path);
    EXPECT_EQ(back.d_model, sae.d_model);
    EXPECT_EQ(back.d_latent, sae.d_latent);
    EXPECT_EQ(back.k, sae.k);
    EXPECT_EQ(back.encoder, sae.encoder);
    EXPECT_EQ(back.decoder, sae.decoder);
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "sae_weights.json"));
}

TEST(SaeFiles, ActivationsAndVocabRoundTrip) {
    vsfa_test::TempDir dir;
    ActivationDump dump;
    dump.model_tag = "finetuned";
    dump.layer_index = 14;
    dump.d_model = 3;
    dump.prompts.push_back({"p1", 2, {1, 2, 3, 4, 5, 6}});
    dump.prompts.push_back({"p2", 1, {7, 8, 9}});
    auto apath = dir.path() / "activations_finetuned.bin";
    save_activations(apath, dump);
    ActivationDump aback = load_activations(apath);
    EXPECT_EQ(aback.model_tag, "finetuned");
    EXPECT_EQ(aback.layer_index, 14);
    ASSERT_EQ(aback.prompts.size(), 2u);
    EXPECT_EQ(aback.prompts[1].data, (std::vector<double>{7, 8, 9}));

    VocabEmbeddings vocab;
    vocab.vocab_size = 2;
    vocab.d_model = 3;
    vocab.data = {1, 0, 0, 0, 1, 0};
    vocab.tokens = {"warning", "caution"};
    auto vpath = dir.path() / "vocab_embeddings.bin";
    save_vocab(vpath, vocab);
    VocabEmbeddings vback = load_vocab(vpath);
    EXPECT_EQ(vback.tokens, vocab.tokens);
    EXPECT_EQ(vback.data, vocab.data);
}

TEST(SaeFiles, SteeringExportWritesVectorAndManifest) {
    vsfa_test::TempDir dir;
    SplitMix64 rng(51);
    SaeParams sae = random_sae(rng, 4, 6, 2);
    SteeringSpec spec{2, -1.5, 14};
    auto bin = export_steering_vector(spec, sae, dir.path());
    EXPECT_EQ(bin.filename().string(), "2_-1.5.bin");
    auto data = tio::read_f32(bin);
    ASSERT_EQ(data.size(), 4u);
    for (size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(data[i], -1.5 * sae.decoder[i * 6 + 2], 1e-6);
    }
    json manifest = json::parse(read_file(tio::manifest_path(bin)));
    EXPECT_EQ(manifest.at("latent_index").get<size_t>(), 2u);
    EXPECT_DOUBLE_EQ(manifest.at("coefficient").get<double>(), -1.5);
    EXPECT_EQ(manifest.at("target_layer").get<int>(), 14);
}

}  // namespace
}  // namespace vsfa::sae
