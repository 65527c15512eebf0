#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace babel {

// Synthetic corpora built from small word banks, so a byte-level micro model
// can actually learn their statistics. Four families: encyclopedic prose,
// terse headlines, short emails, and a "flagged" family whose sentences all
// carry marker words (the stand-in for content a model owner would excise).
std::vector<std::string> corpus_kinds();
std::vector<std::string> generate_corpus(const std::string& kind, int n_docs, uint64_t seed);

// does the text contain any marker word from the flagged family?
bool is_flagged(const std::string& text);

std::vector<std::string> split_sentences(const std::string& doc);

// unique sentences across docs, first-seen order
std::vector<std::string> extract_targets(const std::vector<std::string>& docs);

// deterministic sample of distinct sentences with byte lengths in
// [min_len, max_len]; throws if fewer than n qualify
std::vector<std::string> sample_targets(const std::vector<std::string>& docs, int n, int min_len,
                                        int max_len, uint64_t seed);

// byte-length buckets used for the length sweep; the last is open-ended
inline constexpr std::array<std::pair<int, int>, 4> kLengthBuckets{
    {{1, 10}, {11, 16}, {17, 22}, {23, 1 << 30}}};
int length_bucket(int n_tokens);

// uniform printable non-space ASCII strings (gibberish control targets)
std::vector<std::string> random_token_targets(int n, int min_len, int max_len, uint64_t seed);

std::string natural_prompt(const std::string& target);

struct UnlearningSplit {
    std::vector<std::string> docs_with;     // original corpus
    std::vector<std::string> docs_without;  // target-bearing docs replaced
    std::vector<std::string> targets;
};

// same corpus twice, except every document containing one of the chosen
// target sentences is swapped for a freshly generated target-free document
UnlearningSplit make_unlearning_split(const std::string& kind, int n_docs, int n_targets,
                                      int min_len, int max_len, uint64_t seed);

// plain lines, or JSONL objects with a "text" field when lines start with '{'
std::vector<std::string> load_targets(const std::string& path);

}  // namespace babel
