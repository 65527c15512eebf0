#include "babelkit/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "babelkit/errors.hpp"

namespace babel {

Tokenizer Tokenizer::byte_level() {
    Tokenizer t;
    t.mode_ = Mode::byte_level;
    return t;
}

Tokenizer Tokenizer::learn_merges(const std::vector<std::string>& corpus, int max_merges) {
    Tokenizer t;
    t.mode_ = Mode::learned_merge;
    int cap = std::min(max_merges, kMaxVocab - kMergeBase);

    std::vector<std::vector<TokenId>> docs;
    docs.reserve(corpus.size());
    for (const auto& s : corpus) {
        std::vector<TokenId> ids;
        ids.reserve(s.size());
        for (unsigned char c : s) ids.push_back(static_cast<TokenId>(c));
        docs.push_back(std::move(ids));
    }

    for (int r = 0; r < cap; ++r) {
        std::map<std::pair<TokenId, TokenId>, int> counts;
        for (const auto& d : docs)
            for (size_t i = 0; i + 1 < d.size(); ++i)
                ++counts[{d[i], d[i + 1]}];

        std::pair<TokenId, TokenId> best{-1, -1};
        int best_count = 1;
        for (const auto& [pair, n] : counts) {
            if (n > best_count) {  // ties resolved by map order: lowest pair wins
                best_count = n;
                best = pair;
            }
        }
        if (best.first < 0) break;

        TokenId merged = kMergeBase + r;
        for (auto& d : docs) {
            size_t w = 0;
            for (size_t i = 0; i < d.size(); ++i) {
                if (i + 1 < d.size() && d[i] == best.first && d[i + 1] == best.second) {
                    d[w++] = merged;
                    ++i;
                } else {
                    d[w++] = d[i];
                }
            }
            d.resize(w);
        }
        t.merges_.push_back(best);
    }
    return t;
}

std::vector<TokenId> Tokenizer::content_ids() const {
    std::vector<TokenId> ids;
    ids.reserve(static_cast<size_t>(content_token_count()));
    for (TokenId b = 0; b < 256; ++b) ids.push_back(b);
    for (size_t r = 0; r < merges_.size(); ++r) ids.push_back(kMergeBase + static_cast<TokenId>(r));
    return ids;
}

std::vector<TokenId> Tokenizer::special_ids() const { return {kBos, kUser, kAsst, kPad}; }

TokenSequence Tokenizer::tokenize(std::string_view text) const {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<TokenId>(c));
    if (mode_ == Mode::learned_merge) {
        for (size_t r = 0; r < merges_.size(); ++r) {
            const auto [a, b] = merges_[r];
            const TokenId merged = kMergeBase + static_cast<TokenId>(r);
            size_t w = 0;
            for (size_t i = 0; i < ids.size(); ++i) {
                if (i + 1 < ids.size() && ids[i] == a && ids[i + 1] == b) {
                    ids[w++] = merged;
                    ++i;
                } else {
                    ids[w++] = ids[i];
                }
            }
            ids.resize(w);
        }
    }
    return TokenSequence(std::move(ids), Provenance::text);
}

std::string Tokenizer::token_text(TokenId id) const {
    if (id >= 0 && id < 256) return std::string(1, static_cast<char>(id));
    if (is_special(id)) return "";
    if (id >= kMergeBase && id < vocab_size()) {
        const auto [a, b] = merges_[static_cast<size_t>(id - kMergeBase)];
        return token_text(a) + token_text(b);
    }
    throw ValidationError("token id out of range: " + std::to_string(id));
}

std::string Tokenizer::token_display(TokenId id) const {
    switch (id) {
        case kBos: return "<BOS>";
        case kUser: return "<USER>";
        case kAsst: return "<ASST>";
        case kPad: return "<PAD>";
        default: break;
    }
    std::string raw = token_text(id);
    std::string out;
    for (unsigned char c : raw) {
        if (c >= 0x20 && c < 0x7f) {
            out.push_back(static_cast<char>(c));
        } else {
            static const char* hex = "0123456789abcdef";
            out += "\\x";
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xf]);
        }
    }
    return out;
}

std::string Tokenizer::detokenize(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (is_special(id)) continue;
        out += token_text(id);
    }
    return out;
}

std::string Tokenizer::serialize_merges() const {
    std::ostringstream os;
    for (size_t i = 0; i < merges_.size(); ++i) {
        if (i) os << ';';
        os << merges_[i].first << ',' << merges_[i].second;
    }
    return os.str();
}

Tokenizer Tokenizer::from_metadata(const std::string& mode, const std::string& merge_blob) {
    Tokenizer t;
    if (mode == "byte_level") {
        t.mode_ = Mode::byte_level;
        return t;
    }
    if (mode != "learned_merge") throw ValidationError("unknown tokenizer mode: " + mode);
    t.mode_ = Mode::learned_merge;
    std::istringstream is(merge_blob);
    std::string item;
    while (std::getline(is, item, ';')) {
        auto comma = item.find(',');
        if (comma == std::string::npos)
            throw ValidationError("malformed merge entry: " + item);
        TokenId a = std::stoi(item.substr(0, comma));
        TokenId b = std::stoi(item.substr(comma + 1));
        t.merges_.emplace_back(a, b);
        if (t.vocab_size() > kMaxVocab) throw ValidationError("merge table exceeds vocab cap");
    }
    return t;
}

}  // namespace babel
