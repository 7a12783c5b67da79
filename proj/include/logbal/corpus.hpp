#pragma once

// Log ingestion: tokenization, vocabulary, fixed-length encoding, exact
// dedup, train/val/test splitting and a synthetic imbalanced corpus
// generator used for desk-scale runs.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "logbal/errors.hpp"
#include "logbal/matrix.hpp"
#include "logbal/rng.hpp"

namespace logbal {

enum class Label : uint8_t { negative = 0, positive = 1 };

inline int label_index(Label l) { return l == Label::negative ? 0 : 1; }

struct LogRecord {
    Label label = Label::positive;
    std::string text;
};

/// Sentinel that stands in for any digit run ("404", "node-12" -> "node-NUM").
inline constexpr std::string_view kNumToken = "NUM";

/// Lowercase, whitespace-split, strip leading/trailing punctuation, collapse
/// digit runs to the NUM sentinel, drop empties. A literal "NUM" survives
/// unchanged so the map is idempotent on its own output.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
        size_t start = pos;
        while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
        if (pos == start) continue;
        std::string_view raw = text.substr(start, pos - start);

        size_t lo = 0, hi = raw.size();
        while (lo < hi && std::ispunct(static_cast<unsigned char>(raw[lo]))) ++lo;
        while (hi > lo && std::ispunct(static_cast<unsigned char>(raw[hi - 1]))) --hi;
        raw = raw.substr(lo, hi - lo);
        if (raw.empty()) continue;

        std::string canon;
        canon.reserve(raw.size());
        size_t i = 0;
        while (i < raw.size()) {
            if (raw.compare(i, kNumToken.size(), kNumToken) == 0) {
                canon += kNumToken;
                i += kNumToken.size();
            } else if (std::isdigit(static_cast<unsigned char>(raw[i]))) {
                canon += kNumToken;
                while (i < raw.size() && std::isdigit(static_cast<unsigned char>(raw[i]))) ++i;
            } else {
                canon += static_cast<char>(std::tolower(static_cast<unsigned char>(raw[i])));
                ++i;
            }
        }
        tokens.push_back(std::move(canon));
    }
    return tokens;
}

// --- vocabulary -------------------------------------------------------------

struct Vocabulary {
    static constexpr uint32_t kPad = 0;
    static constexpr uint32_t kUnk = 1;

    std::vector<std::string> id_to_token{"<pad>", "<unk>"};
    std::unordered_map<std::string, uint32_t> token_to_id;

    uint32_t size() const { return static_cast<uint32_t>(id_to_token.size()); }

    uint32_t id_of(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? kUnk : it->second;
    }

    void add(const std::string& token) {
        token_to_id.emplace(token, size());
        id_to_token.push_back(token);
    }
};

/// Tokens with frequency >= min_count get ids 2.. in (frequency desc,
/// lexicographic) order, so shuffled copies of a corpus build the same table.
template <class Records>
Vocabulary build_vocab(const Records& corpus, uint32_t min_count) {
    if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    if (min_count == 0) throw std::invalid_argument("build_vocab: min_count must be positive");
    std::unordered_map<std::string, uint64_t> freq;
    for (const auto& rec : corpus)
        for (auto& tok : tokenize(rec.text)) ++freq[tok];

    std::vector<std::pair<std::string, uint64_t>> kept;
    for (auto& [tok, n] : freq)
        if (n >= min_count) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    for (auto& [tok, n] : kept) vocab.add(tok);
    return vocab;
}

// --- encoding ---------------------------------------------------------------

inline constexpr uint32_t kDefaultMessageLength = 40;

struct EncodedLog {
    std::vector<uint32_t> ids; // exactly L entries, trailing PADs only
    Label label = Label::positive;
};

inline EncodedLog encode(const LogRecord& record, const Vocabulary& vocab, uint32_t length) {
    if (length == 0) throw std::invalid_argument("encode: length must be positive");
    EncodedLog out;
    out.label = record.label;
    out.ids.assign(length, Vocabulary::kPad);
    const auto tokens = tokenize(record.text);
    const size_t n = std::min<size_t>(tokens.size(), length);
    for (size_t i = 0; i < n; ++i) out.ids[i] = vocab.id_of(tokens[i]);
    return out;
}

/// Tokens up to the first PAD.
inline std::vector<std::string> decode(const EncodedLog& log, const Vocabulary& vocab) {
    std::vector<std::string> tokens;
    for (uint32_t id : log.ids) {
        if (id == Vocabulary::kPad) break;
        tokens.push_back(vocab.id_to_token.at(id));
    }
    return tokens;
}

namespace detail {
inline std::string dedup_key(const EncodedLog& log) {
    std::string key;
    key.reserve(1 + log.ids.size() * 4);
    key.push_back(static_cast<char>(log.label));
    key.append(reinterpret_cast<const char*>(log.ids.data()), log.ids.size() * sizeof(uint32_t));
    return key;
}
} // namespace detail

/// Stable exact-match dedup on (ids, label); first occurrence wins.
inline std::vector<EncodedLog> dedup(const std::vector<EncodedLog>& records) {
    std::vector<EncodedLog> out;
    std::unordered_set<std::string> seen;
    out.reserve(records.size());
    for (const auto& rec : records)
        if (seen.insert(detail::dedup_key(rec)).second) out.push_back(rec);
    return out;
}

// --- splitting --------------------------------------------------------------

struct SplitSpec {
    double test_fraction = 0.95;
    double val_fraction_of_train = 0.95;
    uint64_t seed = 0;
    bool shuffle = true;
};

struct SplitIndices {
    std::vector<uint32_t> train;
    std::vector<uint32_t> val;
    std::vector<uint32_t> test;
};

struct SplitSizes {
    size_t train = 0;
    size_t val = 0;
    size_t test = 0;
};

/// Floor arithmetic: pool = floor(n * (1 - test_fraction)), test = n - pool,
/// train = floor(pool * (1 - val_fraction_of_train)), val = pool - train.
inline SplitSizes split_sizes(size_t total, const SplitSpec& spec) {
    if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
        throw std::invalid_argument("split: test_fraction must lie in (0,1)");
    if (!(spec.val_fraction_of_train > 0.0 && spec.val_fraction_of_train < 1.0))
        throw std::invalid_argument("split: val_fraction_of_train must lie in (0,1)");
    SplitSizes sizes;
    const size_t pool =
        static_cast<size_t>(std::floor(static_cast<double>(total) * (1.0 - spec.test_fraction)));
    sizes.test = total - pool;
    sizes.train =
        static_cast<size_t>(std::floor(static_cast<double>(pool) * (1.0 - spec.val_fraction_of_train)));
    sizes.val = pool - sizes.train;
    if (sizes.train == 0 || sizes.val == 0 || sizes.test == 0)
        throw std::invalid_argument("split: a part would be empty for total " +
                                    std::to_string(total));
    return sizes;
}

inline SplitIndices split_indices(size_t total, const SplitSpec& spec) {
    const SplitSizes sizes = split_sizes(total, spec);
    std::vector<uint32_t> order(total);
    for (size_t i = 0; i < total; ++i) order[i] = static_cast<uint32_t>(i);
    if (spec.shuffle) Rng(spec.seed).shuffle(order);

    SplitIndices out;
    out.train.assign(order.begin(), order.begin() + sizes.train);
    out.val.assign(order.begin() + sizes.train, order.begin() + sizes.train + sizes.val);
    out.test.assign(order.begin() + sizes.train + sizes.val, order.end());
    return out;
}

template <class Record>
struct SplitResult {
    std::vector<Record> train;
    std::vector<Record> val;
    std::vector<Record> test;
};

template <class Record>
SplitResult<Record> split(const std::vector<Record>& records, const SplitSpec& spec) {
    const SplitIndices idx = split_indices(records.size(), spec);
    SplitResult<Record> out;
    out.train.reserve(idx.train.size());
    out.val.reserve(idx.val.size());
    out.test.reserve(idx.test.size());
    for (uint32_t i : idx.train) out.train.push_back(records[i]);
    for (uint32_t i : idx.val) out.val.push_back(records[i]);
    for (uint32_t i : idx.test) out.test.push_back(records[i]);
    return out;
}

// --- synthetic corpus -------------------------------------------------------

namespace detail {

struct TemplateBank {
    std::vector<std::string> patterns; // {} marks a fill slot
};

inline const TemplateBank& positive_templates() {
    static const TemplateBank bank{{
        "service {} started on node {} in {} ms",
        "heartbeat from node {} status ok latency {} ms",
        "user {} session opened on node {}",
        "scheduled task {} completed successfully on node {}",
        "connection from host {} accepted by service {}",
        "cache refresh finished for service {} with {} entries",
        "backup of volume {} completed in {} ms",
        "configuration reload applied to service {} version {}",
    }};
    return bank;
}

inline const TemplateBank& negative_templates() {
    static const TemplateBank bank{{
        "error {} disk failure detected on node {}",
        "fatal exception in service {} thread {} aborting",
        "kernel panic reported by node {} code {}",
        "data corruption detected on volume {} sector {}",
        "timeout waiting for service {} after {} ms retries exhausted",
        "memory allocation failed on node {} requested {} bytes",
        "unrecoverable io error {} writing to volume {}",
        "authentication failure for user {} from host {}",
    }};
    return bank;
}

inline std::string fill_template(const std::string& pattern, uint32_t variant, Rng& rng) {
    std::string out;
    out.reserve(pattern.size() + 16);
    for (size_t i = 0; i < pattern.size(); ++i) {
        if (pattern[i] == '{' && i + 1 < pattern.size() && pattern[i + 1] == '}') {
            out += std::to_string(rng.below(10000));
            ++i;
        } else {
            out += pattern[i];
        }
    }
    if (variant > 0) out += " group " + std::to_string(variant);
    return out;
}

} // namespace detail

/// Deterministic templated corpus with exactly round(n_total*negative_fraction)
/// negative records. n_templates counts templates across both classes.
inline std::vector<LogRecord> synth_corpus(size_t n_total, double negative_fraction,
                                           uint32_t n_templates, uint64_t seed) {
    if (n_total == 0) throw std::invalid_argument("synth_corpus: n_total must be positive");
    if (!(negative_fraction > 0.0 && negative_fraction < 1.0))
        throw std::invalid_argument("synth_corpus: negative_fraction must lie in (0,1)");
    if (n_templates < 2)
        throw std::invalid_argument("synth_corpus: need at least one template per class");

    const size_t n_neg =
        static_cast<size_t>(std::llround(static_cast<double>(n_total) * negative_fraction));
    const uint32_t pos_templates = (n_templates + 1) / 2;
    const uint32_t neg_templates = n_templates / 2;

    Rng rng = Rng(seed).substream("synth");
    std::vector<LogRecord> records;
    records.reserve(n_total);
    const auto& pos_bank = detail::positive_templates().patterns;
    const auto& neg_bank = detail::negative_templates().patterns;

    for (size_t i = 0; i < n_total; ++i) {
        const bool negative = i < n_neg;
        const auto& bank = negative ? neg_bank : pos_bank;
        const uint32_t count = negative ? neg_templates : pos_templates;
        const uint32_t pick = static_cast<uint32_t>(rng.below(count));
        const auto& pattern = bank[pick % bank.size()];
        LogRecord rec;
        rec.label = negative ? Label::negative : Label::positive;
        rec.text = detail::fill_template(pattern, pick / static_cast<uint32_t>(bank.size()), rng);
        records.push_back(std::move(rec));
    }
    rng.shuffle(records);
    return records;
}

// --- file formats ------------------------------------------------------------

/// One `label<TAB>message` per line, label 0 = negative, 1 = positive.
inline std::vector<LogRecord> read_corpus(std::istream& is) {
    std::vector<LogRecord> records;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw IoError("corpus line " + std::to_string(lineno) + ": missing tab separator");
        const std::string label = line.substr(0, tab);
        std::string text = line.substr(tab + 1);
        const size_t first = text.find_first_not_of(" \t");
        if (first == std::string::npos)
            throw IoError("corpus line " + std::to_string(lineno) + ": empty message");
        LogRecord rec;
        if (label == "0")
            rec.label = Label::negative;
        else if (label == "1")
            rec.label = Label::positive;
        else
            throw IoError("corpus line " + std::to_string(lineno) + ": label must be 0 or 1");
        rec.text = std::move(text);
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<LogRecord> read_corpus_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    return read_corpus(in);
}

inline void write_corpus(std::ostream& os, const std::vector<LogRecord>& records) {
    for (const auto& rec : records)
        os << (rec.label == Label::negative ? '0' : '1') << '\t' << rec.text << '\n';
}

inline void write_corpus_file(const std::string& path, const std::vector<LogRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open corpus file for writing: " + path);
    write_corpus(out, records);
}

/// `token<TAB>id` per line, sorted by id.
inline void write_vocab_file(const std::string& path, const Vocabulary& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open vocab file for writing: " + path);
    for (uint32_t id = 0; id < vocab.size(); ++id)
        out << vocab.id_to_token[id] << '\t' << id << '\n';
}

inline Vocabulary read_vocab_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open vocab file: " + path);
    Vocabulary vocab;
    vocab.id_to_token.clear();
    vocab.token_to_id.clear();
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw IoError("vocab line " + std::to_string(lineno) + ": missing tab");
        const std::string token = line.substr(0, tab);
        const uint32_t id = static_cast<uint32_t>(std::stoul(line.substr(tab + 1)));
        if (id != vocab.id_to_token.size())
            throw IoError("vocab line " + std::to_string(lineno) + ": ids must be contiguous");
        vocab.id_to_token.push_back(token);
        vocab.token_to_id.emplace(token, id);
    }
    if (vocab.size() < 2) throw IoError("vocab file lacks reserved <pad>/<unk> entries");
    return vocab;
}

// Encoded dataset cache: magic "LBDS", version, V, L, record count (u32 LE),
// then per record one label byte + L u32 LE token ids.

struct Dataset {
    uint32_t vocab_size = 0;
    uint32_t length = kDefaultMessageLength;
    std::vector<EncodedLog> records;
};

inline constexpr char kDatasetMagic[5] = "LBDS";
inline constexpr uint32_t kDatasetVersion = 1;

inline void write_dataset(std::ostream& os, const Dataset& ds) {
    os.write(kDatasetMagic, 4);
    detail::write_u32(os, kDatasetVersion);
    detail::write_u32(os, ds.vocab_size);
    detail::write_u32(os, ds.length);
    detail::write_u32(os, static_cast<uint32_t>(ds.records.size()));
    for (const auto& rec : ds.records) {
        const char label = static_cast<char>(rec.label);
        os.write(&label, 1);
        for (uint32_t id : rec.ids) detail::write_u32(os, id);
    }
}

inline Dataset read_dataset(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string_view(magic, 4) != std::string_view(kDatasetMagic, 4))
        throw IoError("dataset cache: bad magic");
    const uint32_t version = detail::read_u32(is);
    if (version != kDatasetVersion)
        throw IoError("dataset cache: unsupported version " + std::to_string(version));
    Dataset ds;
    ds.vocab_size = detail::read_u32(is);
    ds.length = detail::read_u32(is);
    const uint32_t count = detail::read_u32(is);
    ds.records.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        EncodedLog rec;
        char label;
        is.read(&label, 1);
        if (!is) throw IoError("dataset cache: truncated record");
        rec.label = label == 0 ? Label::negative : Label::positive;
        rec.ids.resize(ds.length);
        for (auto& id : rec.ids) id = detail::read_u32(is);
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

inline void write_dataset_file(const std::string& path, const Dataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open dataset cache for writing: " + path);
    write_dataset(out, ds);
}

inline Dataset read_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset cache: " + path);
    return read_dataset(in);
}

} // namespace logbal
