#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "babelkit/types.hpp"

namespace babel {

// Byte-level tokenizer with optional learned byte-pair merges.
//
// Id layout is fixed across both modes so special ids stay reserved:
//   0..255    raw bytes
//   256..259  BOS, USER, ASST, PAD
//   260..     merge tokens (learned-merge mode only, total vocab capped at 512)
class Tokenizer {
public:
    enum class Mode { byte_level, learned_merge };

    static constexpr TokenId kBos = 256;
    static constexpr TokenId kUser = 257;
    static constexpr TokenId kAsst = 258;
    static constexpr TokenId kPad = 259;
    static constexpr int kNumSpecial = 4;
    static constexpr int kMergeBase = 260;
    static constexpr int kMaxVocab = 512;

    Tokenizer() = default;

    static Tokenizer byte_level();

    // Learns up to max_merges byte-pair merges from the corpus (most frequent
    // adjacent pair first, ties broken by lowest pair). Stops early when no
    // pair occurs at least twice or the vocab cap is reached.
    static Tokenizer learn_merges(const std::vector<std::string>& corpus, int max_merges);

    Mode mode() const { return mode_; }
    int vocab_size() const { return kMergeBase + static_cast<int>(merges_.size()); }
    int content_token_count() const { return 256 + static_cast<int>(merges_.size()); }

    bool is_special(TokenId id) const { return id >= kBos && id < kMergeBase; }
    bool is_content(TokenId id) const {
        return (id >= 0 && id < 256) || (id >= kMergeBase && id < vocab_size());
    }

    // Content token ids in ascending order (bytes, then merge tokens).
    std::vector<TokenId> content_ids() const;
    std::vector<TokenId> special_ids() const;

    TokenSequence tokenize(std::string_view text) const;
    // Inverse of tokenize on content tokens; special tokens decode to "".
    std::string detokenize(std::span<const TokenId> ids) const;

    // UTF-8 string a single token stands for ("" for specials).
    std::string token_text(TokenId id) const;
    // Human-readable name for reports: byte/merge text, or "<BOS>" etc.
    std::string token_display(TokenId id) const;

    const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }

    // Round-trips through checkpoint metadata.
    std::string serialize_merges() const;
    static Tokenizer from_metadata(const std::string& mode, const std::string& merge_blob);

    bool operator==(const Tokenizer& o) const {
        return mode_ == o.mode_ && merges_ == o.merges_;
    }

private:
    Mode mode_ = Mode::byte_level;
    std::vector<std::pair<TokenId, TokenId>> merges_;  // merge r produces id kMergeBase + r
};

}  // namespace babel
