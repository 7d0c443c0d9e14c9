#pragma once

#include <atomic>
#include <filesystem>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "vsfa/assets.hpp"
#include "vsfa/atom.hpp"
#include "vsfa/clock.hpp"
#include "vsfa/errors.hpp"
#include "vsfa/jsonl.hpp"
#include "vsfa/rng.hpp"
#include "vsfa/types.hpp"

namespace vsfa::arxiv {

namespace fs = std::filesystem;

class FeedBackend {
public:
    virtual ~FeedBackend() = default;
    /// Returns the Atom document for one search term; throws
    /// Error(external_service) on transport failure.
    virtual std::string fetch(const std::string& term, int max_results) = 0;
};

/// Reads feed documents from a directory keyed by term: spaces become
/// underscores, ".xml" appended.
class FixtureFeedBackend final : public FeedBackend {
public:
    explicit FixtureFeedBackend(fs::path dir) : dir_(std::move(dir)) {}

    static std::string file_key(const std::string& term) {
        std::string key;
        for (char c : term) key.push_back(c == ' ' ? '_' : c);
        return key + ".xml";
    }

    std::string fetch(const std::string& term, int) override {
        fs::path p = dir_ / file_key(term);
        if (!fs::exists(p))
            throw Error(ErrorKind::external_service, "no fixture feed for term: " + term);
        return read_file(p);
    }

private:
    fs::path dir_;
};

/// Fabricates a deterministic feed per term so full pipeline runs work
/// offline. Entry ids are term-derived, so different terms never collide.
class SynthFeedBackend final : public FeedBackend {
public:
    std::string fetch(const std::string& term, int max_results) override {
        SplitMix64 rng(seed_from_string("feed|" + term));
        std::string xml = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        xml += "<feed xmlns=\"http://www.w3.org/2005/Atom\">\n";
        xml += "  <title>arXiv Query: " + term + "</title>\n";
        static const std::vector<std::string> topics = {
            "monitoring pipelines", "oversight mechanisms", "deployment audits",
            "governance frameworks", "evaluation protocols", "anomaly detection"};
        for (int i = 0; i < max_results; ++i) {
            std::string serial = std::to_string(10000 + rng.below(90000));
            std::string topic_a = topics[static_cast<size_t>(rng.below(topics.size()))];
            std::string topic_b = topics[static_cast<size_t>(rng.below(topics.size()))];
            xml += "  <entry>\n";
            xml += "    <id>http://arxiv.org/abs/2501." + serial + "v1</id>\n";
            xml += "    <title>Toward " + topic_a + " for " + term + "</title>\n";
            xml += "    <summary>This paper studies " + term + " through " + topic_a +
                   " and " + topic_b +
                   ". We analyze recurring failure modes in automated systems and "
                   "propose layered safeguards covering detection, escalation, and "
                   "recovery across operational settings.</summary>\n";
            xml += "    <category term=\"" + pick_category(rng) + "\"/>\n";
            xml += "    <category term=\"cs.AI\"/>\n";
            xml += "    <published>2025-01-0" + std::to_string(1 + i % 9) +
                   "T00:00:00Z</published>\n";
            xml += "  </entry>\n";
        }
        xml += "</feed>\n";
        return xml;
    }

private:
    static std::string pick_category(SplitMix64& rng) {
        const auto& cats = assets::default_categories();
        return cats[static_cast<size_t>(rng.below(cats.size()))];
    }
};

// ---------------------------------------------------------------------------

struct HarvestConfig {
    std::vector<std::string> search_terms = assets::default_search_terms();
    int max_per_term = 5;
    // Applied client-side on returned entries; empty disables the filter.
    std::vector<std::string> categories = assets::default_categories();
    int max_attempts = 3;
    int backoff_ms = 1000;
    int concurrency = 2;
};

struct HarvestResult {
    std::vector<PaperAbstract> abstracts;
    std::vector<std::string> warnings;
};

namespace detail {

struct TermResult {
    std::vector<PaperAbstract> abstracts;
    std::vector<std::string> warnings;
};

inline TermResult harvest_term(FeedBackend& backend, const HarvestConfig& config,
                               const std::string& term, const std::string& retrieved_at,
                               Clock& clock) {
    std::string last_error;
    std::string xml;
    bool fetched = false;
    for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
        if (attempt > 1) clock.sleep_ms(static_cast<int64_t>(config.backoff_ms) << (attempt - 2));
        try {
            xml = backend.fetch(term, config.max_per_term);
            fetched = true;
            break;
        } catch (const Error& e) {
            last_error = e.what();
        }
    }
    if (!fetched)
        throw Error(ErrorKind::external_service,
                    "harvest failed for term \"" + term + "\": " + last_error);

    atom::ParsedFeed feed = atom::parse_atom_feed(xml);
    TermResult result;
    for (const auto& w : feed.warnings) result.warnings.push_back("[" + term + "] " + w);
    for (const auto& entry : feed.entries) {
        if (static_cast<int>(result.abstracts.size()) >= config.max_per_term) break;
        if (!config.categories.empty()) {
            bool hit = false;
            for (const auto& c : entry.categories) {
                if (std::find(config.categories.begin(), config.categories.end(), c) !=
                    config.categories.end()) {
                    hit = true;
                    break;
                }
            }
            if (!hit) continue;
        }
        PaperAbstract a;
        a.id = entry.entry_id;
        a.title = entry.title;
        a.abstract = entry.summary;
        a.categories = entry.categories;
        a.search_term = term;
        a.retrieved_at = retrieved_at;
        result.abstracts.push_back(std::move(a));
    }
    return result;
}

}  // namespace detail

/// Fetches abstracts for every search term, at most max_per_term each, in the
/// API's relevance order. Per-term fetches run concurrently up to the
/// configured bound; merge order is term order then relevance order, so
/// concurrency never changes the output. Duplicate entry ids across terms keep
/// the first occurrence.
inline HarvestResult fetch_abstracts(FeedBackend& backend, const HarvestConfig& config,
                                     const std::string& retrieved_at,
                                     Clock& clock = SystemClock::instance()) {
    HarvestResult out;
    if (config.search_terms.empty()) return out;

    size_t n = config.search_terms.size();
    std::vector<detail::TermResult> results(n);
    std::vector<std::string> errors(n);
    std::atomic<size_t> next{0};
    size_t workers = std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(
                                             std::max(1, config.concurrency)), n));

    auto work = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                results[i] = detail::harvest_term(backend, config, config.search_terms[i],
                                                  retrieved_at, clock);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };

    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> threads;
        for (size_t i = 0; i < workers; ++i) threads.emplace_back(work);
        for (auto& t : threads) t.join();
    }

    for (size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) throw Error(ErrorKind::external_service, errors[i]);
    }

    std::set<std::string> seen;
    for (size_t i = 0; i < n; ++i) {
        for (auto& w : results[i].warnings) out.warnings.push_back(std::move(w));
        for (auto& a : results[i].abstracts) {
            if (seen.insert(a.id).second) out.abstracts.push_back(std::move(a));
        }
    }
    return out;
}

}  // namespace vsfa::arxiv
