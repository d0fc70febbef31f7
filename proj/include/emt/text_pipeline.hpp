#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "emt/dataset.hpp"

namespace emt {

// Fixed sequence length: shorter sentences are padded at the end, longer ones
// keep their first kSeqLen tokens.
constexpr size_t kSeqLen = 18;

constexpr int kPadId = 0;
constexpr int kUnkId = 1;

// Lowercases and splits on whitespace, treating punctuation as separators.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

class Vocabulary {
public:
    Vocabulary() : id_to_token_{"<pad>", "<unk>"} {}

    explicit Vocabulary(std::vector<std::string> tokens) : Vocabulary() {
        for (auto& t : tokens) add(std::move(t));
    }

    int add(std::string token) {
        const int id = static_cast<int>(id_to_token_.size());
        token_to_id_.emplace(token, id);
        id_to_token_.push_back(std::move(token));
        return id;
    }

    int id_of(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? kUnkId : it->second;
    }

    size_t size() const { return id_to_token_.size(); }

    // tokens after the two reserved ids, in id order
    std::vector<std::string> tokens() const {
        return {id_to_token_.begin() + 2, id_to_token_.end()};
    }

private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// Builds a vocabulary from training-split texts only. Tokens seen fewer than
// min_count times are dropped; the rest are ordered by frequency, ties by
// token, so construction is deterministic.
inline Vocabulary build_vocab(const std::vector<std::string>& texts, int min_count = 1) {
    std::unordered_map<std::string, size_t> counts;
    for (const auto& text : texts)
        for (auto& tok : tokenize(text)) ++counts[tok];

    std::vector<std::pair<std::string, size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    for (auto& [tok, count] : ranked)
        if (count >= static_cast<size_t>(min_count)) vocab.add(tok);
    return vocab;
}

inline Vocabulary build_vocab(const Corpus& corpus, const std::vector<size_t>& sample_indices,
                              int min_count = 1) {
    std::vector<std::string> texts;
    texts.reserve(sample_indices.size());
    for (size_t i : sample_indices) texts.push_back(corpus.samples[i].segment.text);
    return build_vocab(texts, min_count);
}

// Maps text to exactly kSeqLen ids: vocab lookup with <unk> fallback,
// truncated to the first kSeqLen tokens, padded with <pad> at the end.
inline std::vector<int> tokenize_pad(const std::string& text, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(kSeqLen);
    for (const auto& tok : tokenize(text)) {
        if (ids.size() == kSeqLen) break;
        ids.push_back(vocab.id_of(tok));
    }
    while (ids.size() < kSeqLen) ids.push_back(kPadId);
    return ids;
}

}  // namespace emt
