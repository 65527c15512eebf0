#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace babel {

using TokenId = int32_t;

enum class Provenance { text, optimized };

// Ordered token ids plus where they came from.
struct TokenSequence {
    std::vector<TokenId> ids;
    Provenance provenance = Provenance::text;

    TokenSequence() = default;
    explicit TokenSequence(std::vector<TokenId> v, Provenance p = Provenance::text)
        : ids(std::move(v)), provenance(p) {}

    int size() const { return static_cast<int>(ids.size()); }
    bool empty() const { return ids.empty(); }
    std::span<const TokenId> span() const { return ids; }

    bool operator==(const TokenSequence& o) const { return ids == o.ids; }
};

}  // namespace babel
