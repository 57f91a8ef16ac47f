#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mlmkit {

class Corpus;

using TokenId = std::int32_t;

namespace special {
inline constexpr TokenId pad = 0;
inline constexpr TokenId unk = 1;
inline constexpr TokenId bos = 2;
inline constexpr TokenId eos = 3;
inline constexpr TokenId mask = 4;
inline constexpr TokenId count = 5;
}  // namespace special

inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr std::string_view kMaskText = "<MASK>";
inline constexpr std::uint32_t kTokenizerFormatVersion = 1;

inline bool is_special(TokenId id) { return id >= 0 && id < special::count; }

struct MergeRule {
    std::string left;
    std::string right;

    bool operator==(const MergeRule&) const = default;
};

struct EncodeOptions {
    bool add_bos_eos = false;
    bool parse_masks = false;  // treat literal "<MASK>" as the mask token
};

/// Word-level BPE with an explicit end-of-word symbol.
///
/// Ids: the five specials, then the training alphabet (UTF-8 byte order,
/// the end-of-word symbol included), then merge results in merge order.
/// Immutable after construction; encode/decode are safe to call concurrently.
class Tokenizer {
public:
    Tokenizer(std::vector<std::string> alphabet, std::vector<MergeRule> merges);

    std::vector<TokenId> encode(std::string_view text, EncodeOptions options = {}) const;

    /// Joins tokens, end-of-word symbols become spaces, specials are dropped
    /// except MASK which renders as "<MASK>". Throws on an out-of-range id.
    std::string decode(std::span<const TokenId> ids) const;

    /// Token text without its end-of-word suffix ("<MASK>" etc. for specials).
    std::string surface(TokenId id) const;

    std::size_t vocab_size() const { return id_to_token_.size(); }
    const std::string& token(TokenId id) const;
    std::optional<TokenId> find(std::string_view token) const;

    const std::vector<std::string>& alphabet() const { return alphabet_; }
    const std::vector<MergeRule>& merges() const { return merges_; }
    const std::vector<std::string>& vocabulary() const { return id_to_token_; }

    /// Writes `vocab.txt` and `merges.txt` into `dir`.
    void save(const std::filesystem::path& dir) const;
    static Tokenizer load(const std::filesystem::path& dir);

    bool operator==(const Tokenizer& other) const {
        return alphabet_ == other.alphabet_ && merges_ == other.merges_ && id_to_token_ == other.id_to_token_;
    }

private:
    void encode_word(std::string_view word, bool end_of_word, std::vector<TokenId>& out) const;
    void apply_merges(std::vector<TokenId>& symbols) const;

    struct MergeTarget {
        std::size_t rank;
        TokenId result;
    };
    static std::uint64_t pair_key(TokenId a, TokenId b) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
    }

    std::vector<std::string> alphabet_;
    std::vector<MergeRule> merges_;
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, TokenId> token_to_id_;
    std::unordered_map<std::uint64_t, MergeTarget> merge_ranks_;
    TokenId end_of_word_id_ = special::unk;
};

std::string_view special_token_text(TokenId id);

/// Most frequent adjacent pair first, ties by (left, right) byte order;
/// stops at `vocab_size` tokens or when no pair occurs at least twice.
Tokenizer train_bpe(std::span<const std::string> lines, std::size_t vocab_size);

/// Uses the train split when any line is assigned to it, otherwise every line.
Tokenizer train_bpe(const Corpus& corpus, std::size_t vocab_size);

}  // namespace mlmkit
