// Interaction-log ingestion and preprocessing: dense user/item/category
// indexing, n-core filtering, timestamp-tie shuffling and the two evaluation
// split protocols. All types are immutable after construction; every
// operation returns a fresh value.
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "copgraph/errors.hpp"

namespace copgraph {

struct Interaction {
    std::string user;
    std::string item;
    std::int64_t timestamp = 0;
    std::string category;  // empty means unknown

    friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Dense per-user event; item/category resolve through the log's index tables.
struct Event {
    std::uint32_t item;
    std::int64_t timestamp;

    friend bool operator==(const Event&, const Event&) = default;
};

constexpr std::uint32_t kUnknownCategory = 0;

class InteractionLog {
public:
    InteractionLog() = default;

    // Indices are assigned in first-appearance order; each user's events are
    // sorted by timestamp with ties kept in input order. The reserved
    // category 0 ("unknown") absorbs records without a category; an item's
    // category is the first non-empty one observed for it.
    static InteractionLog fromInteractions(const std::vector<Interaction>& interactions) {
        if (interactions.empty()) throw EmptyDatasetError("interaction list is empty");
        InteractionLog log;
        log.categoryNames_.push_back("");
        std::unordered_map<std::string, std::uint32_t> categoryIdx;

        for (const auto& it : interactions) {
            if (it.user.empty() || it.item.empty()) throw ContractError("user and item identifiers must be non-empty");
            if (it.timestamp < 0) throw ContractError("timestamps must be non-negative");
            if (auto [u, inserted] = log.userIndex_.try_emplace(it.user, static_cast<std::uint32_t>(log.userIds_.size()));
                inserted) {
                log.userIds_.push_back(it.user);
                (void)u;
            }
            if (auto [v, inserted] = log.itemIndex_.try_emplace(it.item, static_cast<std::uint32_t>(log.itemIds_.size()));
                inserted) {
                log.itemIds_.push_back(it.item);
                log.categoryOf_.push_back(kUnknownCategory);
                (void)v;
            }
            const std::uint32_t item = log.itemIndex_.at(it.item);
            if (!it.category.empty() && log.categoryOf_[item] == kUnknownCategory) {
                auto found = categoryIdx.find(it.category);
                if (found == categoryIdx.end()) {
                    log.categoryNames_.push_back(it.category);
                    found = categoryIdx.emplace(it.category, static_cast<std::uint32_t>(log.categoryNames_.size() - 1)).first;
                }
                log.categoryOf_[item] = found->second;
            }
        }

        log.eventsByUser_.resize(log.userIds_.size());
        for (const auto& it : interactions) {
            log.eventsByUser_[log.userIndex_.at(it.user)].push_back({log.itemIndex_.at(it.item), it.timestamp});
        }
        for (auto& events : log.eventsByUser_) {
            std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
        }
        log.nEvents_ = interactions.size();
        return log;
    }

    std::size_t nUsers() const { return userIds_.size(); }
    std::size_t nItems() const { return itemIds_.size(); }
    std::size_t nCategories() const { return categoryNames_.size(); }
    std::size_t nEvents() const { return nEvents_; }

    std::span<const Event> userEvents(std::uint32_t u) const { return eventsByUser_[u]; }
    const std::string& userId(std::uint32_t u) const { return userIds_[u]; }
    const std::string& itemId(std::uint32_t v) const { return itemIds_[v]; }
    const std::string& categoryName(std::uint32_t c) const { return categoryNames_[c]; }
    std::uint32_t categoryOfItem(std::uint32_t v) const { return categoryOf_[v]; }
    std::span<const std::uint32_t> categoryOf() const { return categoryOf_; }

    std::optional<std::uint32_t> tryUserIndex(std::string_view id) const {
        auto it = userIndex_.find(std::string(id));
        return it == userIndex_.end() ? std::nullopt : std::optional(it->second);
    }
    std::optional<std::uint32_t> tryItemIndex(std::string_view id) const {
        auto it = itemIndex_.find(std::string(id));
        return it == itemIndex_.end() ? std::nullopt : std::optional(it->second);
    }

    // Flattens back to user-major chronological interactions.
    std::vector<Interaction> toInteractions() const {
        std::vector<Interaction> out;
        out.reserve(nEvents_);
        for (std::uint32_t u = 0; u < nUsers(); ++u) {
            for (const Event& e : eventsByUser_[u]) {
                out.push_back({userIds_[u], itemIds_[e.item], e.timestamp, categoryNames_[categoryOf_[e.item]]});
            }
        }
        return out;
    }

private:
    friend InteractionLog shuffleTimestampTies(const InteractionLog&, std::int64_t);

    std::vector<std::string> userIds_;
    std::vector<std::string> itemIds_;
    std::vector<std::string> categoryNames_;
    std::unordered_map<std::string, std::uint32_t> userIndex_;
    std::unordered_map<std::string, std::uint32_t> itemIndex_;
    std::vector<std::uint32_t> categoryOf_;
    std::vector<std::vector<Event>> eventsByUser_;
    std::size_t nEvents_ = 0;
};

enum class FileFormat { CSV, TSV, JSONL };

namespace detail {

inline std::vector<std::string> splitDelimited(std::string_view line, char sep, std::size_t lineNo) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"' && cur.empty()) {
            quoted = true;
        } else if (ch == sep) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (ch == '\r' && i + 1 == line.size()) {
            // tolerate CRLF input
        } else {
            cur.push_back(ch);
        }
    }
    if (quoted) throw ParseError("unterminated quoted field", lineNo);
    fields.push_back(std::move(cur));
    return fields;
}

inline std::int64_t parseTimestamp(std::string_view text, std::size_t lineNo) {
    std::int64_t value = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) throw ParseError("timestamp is not an integer: '" + std::string(text) + "'", lineNo);
    if (value < 0) throw ParseError("timestamp must be non-negative", lineNo);
    return value;
}

inline std::vector<Interaction> readDelimited(std::istream& in, char sep) {
    std::string line;
    std::size_t lineNo = 0;
    if (!std::getline(in, line)) throw EmptyDatasetError("file has no header line");
    ++lineNo;
    const auto header = splitDelimited(line, sep, lineNo);
    std::unordered_map<std::string, std::size_t> colOf;
    for (std::size_t i = 0; i < header.size(); ++i) colOf[header[i]] = i;
    for (const char* required : {"user", "item", "timestamp"}) {
        if (!colOf.contains(required)) throw ParseError(std::string("header is missing column '") + required + "'", 1);
    }
    const std::size_t userCol = colOf.at("user");
    const std::size_t itemCol = colOf.at("item");
    const std::size_t tsCol = colOf.at("timestamp");
    const std::optional<std::size_t> catCol =
        colOf.contains("category") ? std::optional(colOf.at("category")) : std::nullopt;

    std::vector<Interaction> out;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty() || line == "\r") continue;
        auto fields = splitDelimited(line, sep, lineNo);
        if (fields.size() < header.size()) throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()), lineNo);
        Interaction it;
        it.user = fields[userCol];
        it.item = fields[itemCol];
        it.timestamp = parseTimestamp(fields[tsCol], lineNo);
        if (catCol && *catCol < fields.size()) it.category = fields[*catCol];
        if (it.user.empty()) throw ParseError("empty user identifier", lineNo);
        if (it.item.empty()) throw ParseError("empty item identifier", lineNo);
        out.push_back(std::move(it));
    }
    return out;
}

inline std::vector<Interaction> readJsonl(std::istream& in) {
    std::vector<Interaction> out;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty() || line == "\r") continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded()) throw ParseError("invalid JSON record", lineNo);
        if (!rec.contains("user") || !rec.contains("item") || !rec.contains("timestamp"))
            throw ParseError("record is missing user/item/timestamp", lineNo);
        if (!rec["user"].is_string() || !rec["item"].is_string()) throw ParseError("user and item must be strings", lineNo);
        if (!rec["timestamp"].is_number_integer()) throw ParseError("timestamp must be an integer", lineNo);
        Interaction it;
        it.user = rec["user"].get<std::string>();
        it.item = rec["item"].get<std::string>();
        it.timestamp = rec["timestamp"].get<std::int64_t>();
        if (it.timestamp < 0) throw ParseError("timestamp must be non-negative", lineNo);
        if (rec.contains("category") && rec["category"].is_string()) it.category = rec["category"].get<std::string>();
        if (it.user.empty()) throw ParseError("empty user identifier", lineNo);
        if (it.item.empty()) throw ParseError("empty item identifier", lineNo);
        out.push_back(std::move(it));
    }
    return out;
}

}  // namespace detail

inline InteractionLog loadInteractions(const std::string& path, FileFormat format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<Interaction> records;
    switch (format) {
        case FileFormat::CSV: records = detail::readDelimited(in, ','); break;
        case FileFormat::TSV: records = detail::readDelimited(in, '\t'); break;
        case FileFormat::JSONL: records = detail::readJsonl(in); break;
    }
    if (records.empty()) throw EmptyDatasetError("no interactions in '" + path + "'");
    return InteractionLog::fromInteractions(records);
}

namespace detail {

// Surviving positions per user, rebuilt into a densely re-indexed log.
inline InteractionLog rebuildLog(const InteractionLog& log, const std::vector<std::vector<std::uint32_t>>& keptPositions) {
    std::vector<Interaction> kept;
    for (std::uint32_t u = 0; u < log.nUsers(); ++u) {
        auto events = log.userEvents(u);
        for (std::uint32_t pos : keptPositions[u]) {
            const Event& e = events[pos];
            kept.push_back({log.userId(u), log.itemId(e.item), e.timestamp, log.categoryName(log.categoryOfItem(e.item))});
        }
    }
    if (kept.empty()) throw EmptyDatasetError("no interactions survived");
    return InteractionLog::fromInteractions(kept);
}

}  // namespace detail

// Iteratively removes users and items with fewer than n interactions until a
// fixed point (true k-core). Event multiplicity counts: a user buying one
// item n times has n interactions.
inline InteractionLog kCoreFilter(const InteractionLog& log, std::uint32_t n) {
    if (n < 1) throw ConfigError("n-core requires n >= 1");

    std::vector<char> userDead(log.nUsers(), 0);
    std::vector<char> itemDead(log.nItems(), 0);
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<std::uint32_t> userCount(log.nUsers(), 0);
        std::vector<std::uint32_t> itemCount(log.nItems(), 0);
        for (std::uint32_t u = 0; u < log.nUsers(); ++u) {
            if (userDead[u]) continue;
            for (const Event& e : log.userEvents(u)) {
                if (itemDead[e.item]) continue;
                userCount[u]++;
                itemCount[e.item]++;
            }
        }
        for (std::uint32_t u = 0; u < log.nUsers(); ++u) {
            if (!userDead[u] && userCount[u] < n) {
                userDead[u] = 1;
                changed = true;
            }
        }
        for (std::uint32_t v = 0; v < log.nItems(); ++v) {
            if (!itemDead[v] && itemCount[v] < n) {
                itemDead[v] = 1;
                changed = true;
            }
        }
    }

    std::vector<std::vector<std::uint32_t>> kept(log.nUsers());
    for (std::uint32_t u = 0; u < log.nUsers(); ++u) {
        if (userDead[u]) continue;
        auto events = log.userEvents(u);
        for (std::uint32_t p = 0; p < events.size(); ++p) {
            if (!itemDead[events[p].item]) kept[u].push_back(p);
        }
    }
    try {
        return detail::rebuildLog(log, kept);
    } catch (const EmptyDatasetError&) {
        throw EmptyDatasetError("n-core filter with n=" + std::to_string(n) + " removed every interaction");
    }
}

// Comparison mode for the n-core open question: one simultaneous removal
// round based on the unfiltered counts, no iteration.
inline InteractionLog kCoreFilterSinglePass(const InteractionLog& log, std::uint32_t n) {
    if (n < 1) throw ConfigError("n-core requires n >= 1");
    std::vector<std::uint32_t> itemCount(log.nItems(), 0);
    for (std::uint32_t u = 0; u < log.nUsers(); ++u)
        for (const Event& e : log.userEvents(u)) itemCount[e.item]++;

    std::vector<std::vector<std::uint32_t>> kept(log.nUsers());
    for (std::uint32_t u = 0; u < log.nUsers(); ++u) {
        auto events = log.userEvents(u);
        if (events.size() < n) continue;
        for (std::uint32_t p = 0; p < events.size(); ++p) {
            if (itemCount[events[p].item] >= n) kept[u].push_back(p);
        }
    }
    try {
        return detail::rebuildLog(log, kept);
    } catch (const EmptyDatasetError&) {
        throw EmptyDatasetError("single-pass n-core with n=" + std::to_string(n) + " removed every interaction");
    }
}

// Permutes maximal runs of equal-timestamp events within each user uniformly
// at random; everything else keeps its order. Deterministic per seed.
inline InteractionLog shuffleTimestampTies(const InteractionLog& log, std::int64_t seed) {
    InteractionLog out = log;
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    for (auto& events : out.eventsByUser_) {
        std::size_t runBegin = 0;
        for (std::size_t i = 1; i <= events.size(); ++i) {
            if (i == events.size() || events[i].timestamp != events[runBegin].timestamp) {
                if (i - runBegin > 1) std::shuffle(events.begin() + runBegin, events.begin() + i, rng);
                runBegin = i;
            }
        }
    }
    return out;
}

enum class SplitMode { SequentialLeaveOneOut, RandomPerUser };

struct SplitSpec {
    SplitMode mode = SplitMode::SequentialLeaveOneOut;
    double trainFraction = 0.8;
    double validFraction = 0.1;
    double testFraction = 0.1;
    std::int64_t seed = 0;

    void validate() const {
        if (mode == SplitMode::RandomPerUser) {
            if (!(trainFraction > 0.0) || !(validFraction > 0.0) || !(testFraction > 0.0))
                throw ConfigError("split fractions must be positive");
            if (std::abs(trainFraction + validFraction + testFraction - 1.0) > 1e-9)
                throw ConfigError("split fractions must sum to 1");
        }
    }
};

// One evaluation instance: recommendations for `query` are scored against
// `targets`. Sequential protocol has one case per user; the random protocol
// one case per held-out sample, each with its own preceding-item query.
struct EvalCase {
    std::uint32_t user;
    std::string query;
    std::vector<std::string> targets;
};

struct DatasetSplit {
    SplitMode mode = SplitMode::SequentialLeaveOneOut;
    InteractionLog train;
    InteractionLog trainValid;  // training plus validation interactions
    std::vector<EvalCase> validation;
    std::vector<EvalCase> test;
    std::vector<Interaction> validationEvents;
    std::vector<Interaction> testEvents;
    std::size_t usersSkipped = 0;
    std::size_t casesWithoutQuery = 0;
};

namespace detail {

inline std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull + salt * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace detail

inline DatasetSplit split(const InteractionLog& log, const SplitSpec& spec) {
    spec.validate();
    DatasetSplit out;
    out.mode = spec.mode;

    std::vector<std::vector<std::uint32_t>> trainKept(log.nUsers());
    std::vector<std::vector<std::uint32_t>> trainValidKept(log.nUsers());

    auto pushEvent = [&](std::vector<Interaction>& sink, std::uint32_t u, const Event& e) {
        sink.push_back({log.userId(u), log.itemId(e.item), e.timestamp, log.categoryName(log.categoryOfItem(e.item))});
    };

    for (std::uint32_t u = 0; u < log.nUsers(); ++u) {
        auto events = log.userEvents(u);
        const std::size_t m = events.size();

        if (spec.mode == SplitMode::SequentialLeaveOneOut) {
            if (m < 3) {
                out.usersSkipped++;
                for (std::uint32_t p = 0; p < m; ++p) trainKept[u].push_back(p), trainValidKept[u].push_back(p);
                continue;
            }
            for (std::uint32_t p = 0; p + 2 < m; ++p) trainKept[u].push_back(p);
            for (std::uint32_t p = 0; p + 1 < m; ++p) trainValidKept[u].push_back(p);
            const Event& validEvent = events[m - 2];
            const Event& testEvent = events[m - 1];
            out.validation.push_back({u, log.itemId(events[m - 3].item), {log.itemId(validEvent.item)}});
            out.test.push_back({u, log.itemId(validEvent.item), {log.itemId(testEvent.item)}});
            pushEvent(out.validationEvents, u, validEvent);
            pushEvent(out.testEvents, u, testEvent);
        } else {
            // tiny epsilon so e.g. 0.7*10 floors to 7 despite binary rounding
            const std::size_t trainCnt = static_cast<std::size_t>(spec.trainFraction * static_cast<double>(m) + 1e-9);
            const std::size_t rest = m - trainCnt;
            const std::size_t validCnt = static_cast<std::size_t>(
                static_cast<double>(rest) * spec.validFraction / (spec.validFraction + spec.testFraction) + 1e-9);
            if (trainCnt == 0 || rest == validCnt) {
                // cannot produce a non-empty train and test part for this user
                out.usersSkipped++;
                for (std::uint32_t p = 0; p < m; ++p) trainKept[u].push_back(p), trainValidKept[u].push_back(p);
                continue;
            }
            std::vector<std::uint32_t> perm(m);
            std::iota(perm.begin(), perm.end(), 0u);
            std::mt19937_64 rng(detail::mixSeed(static_cast<std::uint64_t>(spec.seed), u));
            std::shuffle(perm.begin(), perm.end(), rng);

            std::vector<std::uint32_t> validPos(perm.begin() + static_cast<std::ptrdiff_t>(trainCnt),
                                                perm.begin() + static_cast<std::ptrdiff_t>(trainCnt + validCnt));
            std::vector<std::uint32_t> testPos(perm.begin() + static_cast<std::ptrdiff_t>(trainCnt + validCnt), perm.end());
            perm.resize(trainCnt);
            std::sort(perm.begin(), perm.end());
            std::sort(validPos.begin(), validPos.end());
            std::sort(testPos.begin(), testPos.end());

            trainKept[u] = perm;
            trainValidKept[u] = perm;
            trainValidKept[u].insert(trainValidKept[u].end(), validPos.begin(), validPos.end());
            std::sort(trainValidKept[u].begin(), trainValidKept[u].end());

            auto emit = [&](std::span<const std::uint32_t> positions, std::vector<EvalCase>& cases, std::vector<Interaction>& sink) {
                for (std::uint32_t p : positions) {
                    pushEvent(sink, u, events[p]);
                    if (p == 0) {
                        out.casesWithoutQuery++;
                        continue;
                    }
                    cases.push_back({u, log.itemId(events[p - 1].item), {log.itemId(events[p].item)}});
                }
            };
            emit(validPos, out.validation, out.validationEvents);
            emit(testPos, out.test, out.testEvents);
        }
    }

    out.train = detail::rebuildLog(log, trainKept);
    out.trainValid = detail::rebuildLog(log, trainValidKept);
    return out;
}

}  // namespace copgraph
