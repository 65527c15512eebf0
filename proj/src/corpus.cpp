#include "babelkit/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "babelkit/errors.hpp"
#include "babelkit/metrics.hpp"
#include "babelkit/rng.hpp"
#include "json.hpp"

namespace babel {

namespace {

using Bank = std::vector<std::string>;

const Bank kShortSubj = {"fox", "sun", "ice", "ore", "owl", "elk", "bee", "ram", "cod", "ant"};
const Bank kShortVerb = {"ran", "set", "hid", "dug", "won", "rose", "fell", "sang", "grew", "spun"};
const Bank kAdv = {"far", "fast", "low", "high", "well", "soon"};
const Bank kPlace = {"oak", "bay", "den", "dam", "rye", "fen"};
const Bank kLongTail = {"past the old mill",   "near the tide pool", "under the pine ridge",
                        "along the salt marsh", "beside the stone wall", "behind the clay oven"};

const Bank kHeadSubj = {"storm", "mayor", "team", "port", "crew", "market", "bridge", "train"};
const Bank kHeadVerb = {"wins", "opens", "halts", "lifts", "backs", "cuts"};
const Bank kHeadObj = {"new deal", "key vote", "big race", "late shift", "city plan", "old route"};

const Bank kNames = {"sam", "kim", "lee", "ana", "joe", "max", "ida", "ray"};
const Bank kThings = {"report", "draft", "invoice", "budget", "roster", "memo"};
const Bank kDays = {"monday", "tuesday", "wednesday", "thursday", "friday"};

// marker words for the flagged family; is_flagged keys on these
const Bank kFlagSubj = {"imp", "hag", "wurm", "ghul"};
const Bank kFlagVerb = {"curses", "blights", "haunts", "rots"};
const Bank kFlagObj = {"the ash field", "the dim keep", "the cold fen", "the bone road"};

const std::string& pick(const Bank& b, Rng& rng) {
    return b[rng.uniform_u32(static_cast<uint32_t>(b.size()))];
}

std::string encyclopedic_sentence(Rng& rng) {
    switch (rng.uniform_u32(4)) {
        case 0:
            return pick(kShortSubj, rng) + " " + pick(kShortVerb, rng);
        case 1:
            return pick(kShortSubj, rng) + " " + pick(kShortVerb, rng) + " " + pick(kAdv, rng);
        case 2:
            return pick(kShortSubj, rng) + " " + pick(kShortVerb, rng) + " by the " +
                   pick(kPlace, rng);
        default:
            return "the " + pick(kShortSubj, rng) + " " + pick(kShortVerb, rng) + " " +
                   pick(kLongTail, rng);
    }
}

std::string headline_sentence(Rng& rng) {
    if (rng.uniform_u32(3) == 0) return pick(kHeadSubj, rng) + " " + pick(kHeadVerb, rng);
    return pick(kHeadSubj, rng) + " " + pick(kHeadVerb, rng) + " " + pick(kHeadObj, rng);
}

std::string email_sentence(Rng& rng) {
    switch (rng.uniform_u32(3)) {
        case 0:
            return "hi " + pick(kNames, rng) + " the " + pick(kThings, rng) + " is due " +
                   pick(kDays, rng);
        case 1:
            return "please send the " + pick(kThings, rng) + " to " + pick(kNames, rng);
        default:
            return "thanks " + pick(kNames, rng);
    }
}

std::string flagged_sentence(Rng& rng) {
    switch (rng.uniform_u32(3)) {
        case 0:
            return pick(kFlagSubj, rng) + " " + pick(kFlagVerb, rng);
        case 1:
            return "the " + pick(kFlagSubj, rng) + " " + pick(kFlagVerb, rng) + " " +
                   pick(kFlagObj, rng);
        default:
            return pick(kFlagSubj, rng) + " " + pick(kFlagVerb, rng) + " " + pick(kFlagObj, rng);
    }
}

std::string make_doc(const std::string& kind, Rng& rng) {
    int n = 3 + static_cast<int>(rng.uniform_u32(4));
    std::string doc;
    for (int i = 0; i < n; ++i) {
        std::string s;
        if (kind == "encyclopedic") s = encyclopedic_sentence(rng);
        else if (kind == "headline") s = headline_sentence(rng);
        else if (kind == "email") s = email_sentence(rng);
        else s = flagged_sentence(rng);
        doc += s;
        doc += ". ";
    }
    if (!doc.empty()) doc.pop_back();  // no trailing space
    return doc;
}

}  // namespace

std::vector<std::string> corpus_kinds() { return {"encyclopedic", "headline", "email", "flagged"}; }

std::vector<std::string> generate_corpus(const std::string& kind, int n_docs, uint64_t seed) {
    auto kinds = corpus_kinds();
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
        throw ValidationError("unknown corpus kind: " + kind);
    if (n_docs < 1) throw ValidationError("corpus needs at least 1 document");
    Rng rng(derive_seed(seed, "corpus-" + kind));
    std::vector<std::string> docs;
    docs.reserve(static_cast<size_t>(n_docs));
    for (int i = 0; i < n_docs; ++i) docs.push_back(make_doc(kind, rng));
    return docs;
}

bool is_flagged(const std::string& text) {
    for (const auto& w : kFlagSubj)
        if (text.find(w) != std::string::npos) return true;
    for (const auto& w : kFlagVerb)
        if (text.find(w) != std::string::npos) return true;
    return false;
}

std::vector<std::string> split_sentences(const std::string& doc) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : doc) {
        if (c == '.' || c == '\n') {
            // trim
            size_t b = cur.find_first_not_of(' ');
            size_t e = cur.find_last_not_of(' ');
            if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
            cur.clear();
        } else {
            cur += c;
        }
    }
    size_t b = cur.find_first_not_of(' ');
    size_t e = cur.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
    return out;
}

std::vector<std::string> extract_targets(const std::vector<std::string>& docs) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& d : docs) {
        for (auto& s : split_sentences(d)) {
            if (seen.insert(s).second) out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<std::string> sample_targets(const std::vector<std::string>& docs, int n, int min_len,
                                        int max_len, uint64_t seed) {
    if (n < 1) throw ValidationError("target sample size must be positive");
    auto all = extract_targets(docs);
    std::vector<std::string> pool;
    for (auto& s : all) {
        int len = static_cast<int>(s.size());
        if (len >= min_len && len <= max_len) pool.push_back(std::move(s));
    }
    if (static_cast<int>(pool.size()) < n)
        throw ValidationError("only " + std::to_string(pool.size()) + " sentences in [" +
                              std::to_string(min_len) + ", " + std::to_string(max_len) +
                              "] bytes, need " + std::to_string(n));
    Rng rng(derive_seed(seed, "sample-targets"));
    rng.shuffle(pool);
    pool.resize(static_cast<size_t>(n));
    return pool;
}

int length_bucket(int n_tokens) {
    if (n_tokens < 1) throw ValidationError("length bucket needs a positive token count");
    for (size_t i = 0; i < kLengthBuckets.size(); ++i)
        if (n_tokens <= kLengthBuckets[i].second) return static_cast<int>(i);
    return static_cast<int>(kLengthBuckets.size()) - 1;
}

std::vector<std::string> random_token_targets(int n, int min_len, int max_len, uint64_t seed) {
    if (n < 1) throw ValidationError("need a positive count of random targets");
    if (min_len < 1 || max_len < min_len) throw ValidationError("bad random target length range");
    Rng rng(derive_seed(seed, "random-targets"));
    std::set<std::string> seen;
    std::vector<std::string> out;
    while (static_cast<int>(out.size()) < n) {
        int len = min_len + static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(max_len - min_len + 1)));
        std::string s;
        for (int i = 0; i < len; ++i)
            s += static_cast<char>(33 + rng.uniform_u32(94));  // printable, no space
        if (seen.insert(s).second) out.push_back(std::move(s));
    }
    return out;
}

std::string natural_prompt(const std::string& target) {
    if (target.empty()) throw ValidationError("natural prompt needs a non-empty target");
    return "Repeat this sentence: " + target;
}

UnlearningSplit make_unlearning_split(const std::string& kind, int n_docs, int n_targets,
                                      int min_len, int max_len, uint64_t seed) {
    UnlearningSplit out;
    out.docs_with = generate_corpus(kind, n_docs, seed);
    out.targets = sample_targets(out.docs_with, n_targets, min_len, max_len, seed);
    auto contains_target = [&](const std::string& doc) {
        for (const auto& t : out.targets)
            if (doc.find(t) != std::string::npos) return true;
        return false;
    };
    Rng rng(derive_seed(seed, "unlearn-replacement-" + kind));
    out.docs_without = out.docs_with;
    for (auto& doc : out.docs_without) {
        if (!contains_target(doc)) continue;
        std::string fresh;
        int guard = 0;
        do {
            fresh = make_doc(kind, rng);
            if (++guard > 10000)
                throw RuntimeFailure("could not generate a target-free replacement document");
        } while (contains_target(fresh));
        doc = fresh;
    }
    return out;
}

std::vector<std::string> load_targets(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open targets file: " + path);
    std::vector<std::string> out;
    std::string line;
    int lineno = 0;
    bool jsonl = false, decided = false;
    std::vector<int> empty_lines;
    while (std::getline(in, line)) {
        ++lineno;
        // tolerate a UTF-8 BOM and CRLF endings
        if (lineno == 1 && line.rfind("\xef\xbb\xbf", 0) == 0) line.erase(0, 3);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t b = line.find_first_not_of(" \t");
        if (b == std::string::npos) {
            empty_lines.push_back(lineno);
            continue;
        }
        if (!decided) {
            jsonl = line[b] == '{';
            decided = true;
        }
        if (jsonl) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw ValidationError(path + ":" + std::to_string(lineno) +
                                      ": bad JSON: " + e.what());
            }
            if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
                throw ValidationError(path + ":" + std::to_string(lineno) +
                                      ": expected an object with a string \"text\" field");
            out.push_back(j["text"].get<std::string>());
        } else {
            if (!valid_utf8(line))
                throw ValidationError(path + ":" + std::to_string(lineno) + ": not valid UTF-8");
            out.push_back(line);
        }
    }
    if (!empty_lines.empty()) {
        std::string msg = path + ": empty lines at ";
        for (size_t i = 0; i < empty_lines.size(); ++i) {
            if (i) msg += ", ";
            msg += std::to_string(empty_lines[i]);
        }
        throw ValidationError(msg);
    }
    if (out.empty()) throw ValidationError("no targets found in " + path);
    return out;
}

}  // namespace babel
