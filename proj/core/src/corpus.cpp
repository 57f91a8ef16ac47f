#include "mlmkit/corpus.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "mlmkit/error.hpp"
#include "mlmkit/key_value.hpp"
#include "mlmkit/random.hpp"
#include "mlmkit/utf8.hpp"

namespace mlmkit {

std::string_view to_string(LanguageTag tag) {
    switch (tag) {
        case LanguageTag::lakota: return "lakota";
        case LanguageTag::english: return "english";
        case LanguageTag::parallel: return "parallel";
        case LanguageTag::unknown: return "unknown";
    }
    return "unknown";
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
        case Split::unassigned: return "unassigned";
    }
    return "unassigned";
}

LanguageTag parse_language_tag(std::string_view name) {
    for (LanguageTag t : kAllLanguages) {
        if (to_string(t) == name) {
            return t;
        }
    }
    throw Error("unknown language tag '" + std::string(name) + "' (expected lakota, english, parallel or unknown)");
}

std::string_view to_string(DropReason reason) {
    switch (reason) {
        case DropReason::empty: return "empty";
        case DropReason::min_letter_ratio: return "min_letter_ratio";
        case DropReason::min_chars: return "min_chars";
    }
    return "empty";
}

LoadedDocument load_corpus(const std::filesystem::path& path, LanguageTag language) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open corpus file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    if (bytes.empty()) {
        throw Error("empty corpus file " + path.string());
    }

    LoadedDocument out;
    out.document.source_id = path.filename().string();
    if (out.document.source_id.empty()) {
        out.document.source_id = path.string();
    }
    out.document.language = language;

    std::size_t pos = 0;
    while (pos < bytes.size()) {
        auto end = bytes.find('\n', pos);
        if (end == std::string::npos) {
            end = bytes.size();
        }
        std::string_view line(bytes.data() + pos, end - pos);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        std::size_t replaced = 0;
        out.document.lines.push_back(utf8::sanitize(line, &replaced));
        out.replaced_sequences += replaced;
        pos = end + 1;
    }
    return out;
}

std::string normalize_line(std::string_view raw) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) {
        throw std::runtime_error("ICU NFC normalizer unavailable");
    }
    const icu::UnicodeString src =
        icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
    const icu::UnicodeString normalized = nfc->normalize(src, status);
    if (U_FAILURE(status)) {
        throw std::runtime_error("ICU NFC normalization failed");
    }

    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (int32_t i = 0; i < normalized.length();) {
        const UChar32 cp = normalized.char32At(i);
        i += U16_LENGTH(cp);
        if (u_isUWhiteSpace(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        utf8::append(out, static_cast<char32_t>(cp));
    }
    return out;
}

FilterConfig FilterConfig::from(const KeyValues& kv) {
    static constexpr std::array<std::string_view, 2> known{"min_letter_ratio", "min_chars"};
    kv.require_known(known);
    FilterConfig cfg;
    if (kv.contains("min_letter_ratio")) {
        cfg.min_letter_ratio = kv.get_double("min_letter_ratio");
    }
    if (kv.contains("min_chars")) {
        cfg.min_chars = kv.get_uint("min_chars");
    }
    if (cfg.min_letter_ratio < 0.0 || cfg.min_letter_ratio > 1.0) {
        throw Error("min_letter_ratio must lie in [0, 1]");
    }
    return cfg;
}

namespace {

bool is_letter_like(UChar32 cp) {
    if (cp == U'\'' || cp == U'’' || cp == U'ʼ') {
        return true;
    }
    return u_isUAlphabetic(cp) || u_charType(cp) == U_NON_SPACING_MARK;
}

}  // namespace

double letter_ratio(std::string_view line) {
    std::size_t letters = 0;
    std::size_t total = 0;
    for (char32_t cp : utf8::decode(line).text) {
        if (u_isUWhiteSpace(static_cast<UChar32>(cp))) {
            continue;
        }
        ++total;
        if (is_letter_like(static_cast<UChar32>(cp))) {
            ++letters;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(letters) / static_cast<double>(total);
}

FilterResult filter_lines(const RawDocument& doc, const FilterConfig& rules) {
    FilterResult result;
    for (const std::string& line : doc.lines) {
        if (line.empty()) {
            result.dropped.push_back({line, DropReason::empty});
        } else if (letter_ratio(line) < rules.min_letter_ratio) {
            result.dropped.push_back({line, DropReason::min_letter_ratio});
        } else if (utf8::length(line) < rules.min_chars) {
            result.dropped.push_back({line, DropReason::min_chars});
        } else {
            result.kept.push_back(line);
        }
    }
    return result;
}

void Corpus::append(const std::vector<std::string>& lines, LanguageTag language) {
    for (const std::string& raw : lines) {
        std::string line = normalize_line(raw);
        if (line.empty()) {
            continue;
        }
        lines_.push_back(std::move(line));
        tags_.push_back(language);
        splits_.push_back(Split::unassigned);
    }
}

std::vector<std::string> Corpus::lines_in(Split split) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < lines_.size(); ++i) {
        if (splits_[i] == split) {
            out.push_back(lines_[i]);
        }
    }
    return out;
}

SplitRatios parse_split_ratios(std::string_view text) {
    std::vector<double> parts;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find(',', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        parts.push_back(parse_double(text.substr(pos, end - pos), "ratios"));
        pos = end + 1;
    }
    if (parts.size() != 3) {
        throw Error("ratios must be three comma-separated values train,valid,test");
    }
    return {parts[0], parts[1], parts[2]};
}

Corpus split_corpus(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed) {
    if (corpus.empty()) {
        throw Error("cannot split an empty corpus");
    }
    if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
        throw Error("split ratios must be non-negative and sum to 1");
    }
    const std::size_t n = corpus.size();
    // The epsilon absorbs representation error such as 0.1 * 30 = 3.0000000000000004 or 0.7 * 10 = 6.99...
    const auto take = [n](double r) { return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9)); };
    const std::size_t n_valid = take(ratios.valid);
    const std::size_t n_test = take(ratios.test);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(order);

    Corpus out = corpus;
    for (std::size_t i = 0; i < n; ++i) {
        Split s = Split::train;
        if (i < n_valid) {
            s = Split::valid;
        } else if (i < n_valid + n_test) {
            s = Split::test;
        }
        out.assign(order[i], s);
    }
    return out;
}

std::size_t count_words(std::string_view line) {
    std::size_t count = 0;
    bool in_word = false;
    for (char c : line) {
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        if (!space && !in_word) {
            ++count;
        }
        in_word = !space;
    }
    return count;
}

std::uint64_t CorpusStats::total_words() const {
    std::uint64_t t = 0;
    for (const auto& row : words) {
        for (auto v : row) {
            t += v;
        }
    }
    return t;
}

std::uint64_t CorpusStats::words_in(LanguageTag language) const {
    const auto& row = words[static_cast<std::size_t>(language)];
    return std::accumulate(row.begin(), row.end(), std::uint64_t{0});
}

std::uint64_t CorpusStats::words_in(Split split) const {
    std::uint64_t t = 0;
    for (const auto& row : words) {
        t += row[static_cast<std::size_t>(split)];
    }
    return t;
}

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats stats;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto l = static_cast<std::size_t>(corpus.tags()[i]);
        const auto s = static_cast<std::size_t>(corpus.splits()[i]);
        stats.words[l][s] += count_words(corpus.lines()[i]);
        stats.lines[l][s] += 1;
    }
    return stats;
}

namespace {

std::string with_commas(std::uint64_t v) {
    std::string digits = std::to_string(v);
    std::string out;
    const std::size_t n = digits.size();
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(digits[i]);
        const std::size_t left = n - i - 1;
        if (left > 0 && left % 3 == 0) {
            out.push_back(',');
        }
    }
    return out;
}

std::string capitalized(std::string_view s) {
    std::string out(s);
    if (!out.empty()) {
        out[0] = static_cast<char>(out[0] - 'a' + 'A');
    }
    return out;
}

}  // namespace

std::string render_stats_table(const CorpusStats& stats) {
    std::ostringstream os;
    const auto row = [&os](std::string_view a, std::string_view b, std::string_view c, std::string_view d,
                           std::string_view e) {
        os << std::left << std::setw(10) << a << std::right << std::setw(14) << b << std::setw(14) << c
           << std::setw(14) << d << std::setw(14) << e << '\n';
    };
    const std::string rule(66, '-');
    os << rule << '\n';
    row("Language", "Train", "Valid", "Test", "Total");
    os << rule << '\n';
    for (LanguageTag lang : kAllLanguages) {
        const auto l = static_cast<std::size_t>(lang);
        if (stats.words_in(lang) == 0 && (lang == LanguageTag::parallel || lang == LanguageTag::unknown)) {
            continue;
        }
        row(capitalized(to_string(lang)), with_commas(stats.words[l][0]), with_commas(stats.words[l][1]),
            with_commas(stats.words[l][2]), with_commas(stats.words_in(lang)));
    }
    os << rule << '\n';
    row("All", with_commas(stats.words_in(Split::train)), with_commas(stats.words_in(Split::valid)),
        with_commas(stats.words_in(Split::test)), with_commas(stats.total_words()));
    os << rule << '\n';
    return os.str();
}

std::string render_stats_kv(const CorpusStats& stats) {
    std::ostringstream os;
    for (LanguageTag lang : kAllLanguages) {
        for (Split split : kAllSplits) {
            const auto l = static_cast<std::size_t>(lang);
            const auto s = static_cast<std::size_t>(split);
            os << "words." << to_string(lang) << '.' << to_string(split) << '=' << stats.words[l][s] << '\n';
            os << "lines." << to_string(lang) << '.' << to_string(split) << '=' << stats.lines[l][s] << '\n';
        }
    }
    os << "words.total=" << stats.total_words() << '\n';
    return os.str();
}

}  // namespace mlmkit
