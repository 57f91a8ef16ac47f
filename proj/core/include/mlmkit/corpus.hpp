#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mlmkit {

class KeyValues;

enum class LanguageTag : std::uint8_t { lakota, english, parallel, unknown };
enum class Split : std::uint8_t { train, valid, test, unassigned };

inline constexpr std::array<LanguageTag, 4> kAllLanguages{LanguageTag::lakota, LanguageTag::english,
                                                         LanguageTag::parallel, LanguageTag::unknown};
inline constexpr std::array<Split, 4> kAllSplits{Split::train, Split::valid, Split::test, Split::unassigned};

std::string_view to_string(LanguageTag tag);
std::string_view to_string(Split split);
LanguageTag parse_language_tag(std::string_view name);

struct RawDocument {
    std::string source_id;
    std::vector<std::string> lines;
    LanguageTag language = LanguageTag::unknown;
};

struct LoadedDocument {
    RawDocument document;
    std::size_t replaced_sequences = 0;  // invalid UTF-8 sequences turned into U+FFFD
};

/// Read one sentence per line. Throws Error on a missing or empty file.
LoadedDocument load_corpus(const std::filesystem::path& path, LanguageTag language);

/// NFC, collapse whitespace runs to one space, trim. Idempotent.
std::string normalize_line(std::string_view raw);

struct FilterConfig {
    double min_letter_ratio = 0.5;
    std::size_t min_chars = 2;

    static FilterConfig from(const KeyValues& kv);
};

enum class DropReason : std::uint8_t { empty, min_letter_ratio, min_chars };
std::string_view to_string(DropReason reason);

struct DroppedLine {
    std::string text;
    DropReason reason;
};

struct FilterResult {
    std::vector<std::string> kept;
    std::vector<DroppedLine> dropped;
};

/// Fraction of non-whitespace scalars that are letters (apostrophes count as letters).
double letter_ratio(std::string_view line);

FilterResult filter_lines(const RawDocument& doc, const FilterConfig& rules = {});

class Corpus {
public:
    /// Normalizes every line; lines that normalize to empty are skipped.
    void append(const std::vector<std::string>& lines, LanguageTag language);

    std::size_t size() const { return lines_.size(); }
    bool empty() const { return lines_.empty(); }

    const std::vector<std::string>& lines() const { return lines_; }
    const std::vector<LanguageTag>& tags() const { return tags_; }
    const std::vector<Split>& splits() const { return splits_; }

    std::vector<std::string> lines_in(Split split) const;

    void assign(std::size_t index, Split split) { splits_.at(index) = split; }

private:
    std::vector<std::string> lines_;
    std::vector<LanguageTag> tags_;
    std::vector<Split> splits_;
};

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

SplitRatios parse_split_ratios(std::string_view text);

/// Seeded shuffle, then floor(ratio * n) lines to valid and test; the rest to train.
Corpus split_corpus(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed);

struct CorpusStats {
    // Indexed by [language][split].
    std::array<std::array<std::uint64_t, 4>, 4> words{};
    std::array<std::array<std::uint64_t, 4>, 4> lines{};

    std::uint64_t total_words() const;
    std::uint64_t words_in(LanguageTag language) const;
    std::uint64_t words_in(Split split) const;
};

CorpusStats corpus_stats(const Corpus& corpus);

/// Language x {Train, Valid, Test, Total} word-count table.
std::string render_stats_table(const CorpusStats& stats);
/// `words.<language>.<split>=N` and `lines.<language>.<split>=N`.
std::string render_stats_kv(const CorpusStats& stats);

std::size_t count_words(std::string_view line);

}  // namespace mlmkit
