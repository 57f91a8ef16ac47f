#include "mlmkit/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "mlmkit/corpus.hpp"
#include "mlmkit/error.hpp"
#include "mlmkit/utf8.hpp"

namespace mlmkit {

std::string_view special_token_text(TokenId id) {
    switch (id) {
        case special::pad: return "<PAD>";
        case special::unk: return "<UNK>";
        case special::bos: return "<BOS>";
        case special::eos: return "<EOS>";
        case special::mask: return kMaskText;
        default: return {};
    }
}

Tokenizer::Tokenizer(std::vector<std::string> alphabet, std::vector<MergeRule> merges)
    : alphabet_(std::move(alphabet)), merges_(std::move(merges)) {
    for (TokenId id = 0; id < special::count; ++id) {
        id_to_token_.emplace_back(special_token_text(id));
        token_to_id_.emplace(id_to_token_.back(), id);
    }
    for (const std::string& symbol : alphabet_) {
        if (token_to_id_.count(symbol) != 0) {
            throw Error("duplicate alphabet symbol '" + symbol + "'");
        }
        const auto id = static_cast<TokenId>(id_to_token_.size());
        id_to_token_.push_back(symbol);
        token_to_id_.emplace(symbol, id);
    }
    if (const auto it = token_to_id_.find(std::string(kEndOfWord)); it != token_to_id_.end()) {
        end_of_word_id_ = it->second;
    }
    for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
        const MergeRule& m = merges_[rank];
        const auto l = token_to_id_.find(m.left);
        const auto r = token_to_id_.find(m.right);
        if (l == token_to_id_.end() || r == token_to_id_.end() || is_special(l->second) || is_special(r->second)) {
            throw Error("merge " + std::to_string(rank + 1) + " ('" + m.left + "' '" + m.right +
                        "') refers to an unknown token");
        }
        std::string joined = m.left + m.right;
        auto [it, inserted] = token_to_id_.emplace(joined, static_cast<TokenId>(id_to_token_.size()));
        if (inserted) {
            id_to_token_.push_back(std::move(joined));
        }
        merge_ranks_.emplace(pair_key(l->second, r->second), MergeTarget{rank, it->second});
    }
}

const std::string& Tokenizer::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
        throw Error("token id " + std::to_string(id) + " out of range (vocab size " +
                    std::to_string(id_to_token_.size()) + ")");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Tokenizer::find(std::string_view token) const {
    const auto it = token_to_id_.find(std::string(token));
    if (it == token_to_id_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void Tokenizer::apply_merges(std::vector<TokenId>& symbols) const {
    while (symbols.size() >= 2) {
        std::size_t best_rank = std::numeric_limits<std::size_t>::max();
        TokenId best_left = 0, best_right = 0, best_result = 0;
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            const auto it = merge_ranks_.find(pair_key(symbols[i], symbols[i + 1]));
            if (it != merge_ranks_.end() && it->second.rank < best_rank) {
                best_rank = it->second.rank;
                best_left = symbols[i];
                best_right = symbols[i + 1];
                best_result = it->second.result;
            }
        }
        if (best_rank == std::numeric_limits<std::size_t>::max()) {
            return;
        }
        std::size_t w = 0;
        for (std::size_t i = 0; i < symbols.size();) {
            if (i + 1 < symbols.size() && symbols[i] == best_left && symbols[i + 1] == best_right) {
                symbols[w++] = best_result;
                i += 2;
            } else {
                symbols[w++] = symbols[i++];
            }
        }
        symbols.resize(w);
    }
}

void Tokenizer::encode_word(std::string_view word, bool end_of_word, std::vector<TokenId>& out) const {
    std::vector<TokenId> symbols;
    for (const std::string& ch : utf8::scalars(word)) {
        const auto it = token_to_id_.find(ch);
        symbols.push_back(it == token_to_id_.end() || is_special(it->second) ? special::unk : it->second);
    }
    if (end_of_word) {
        symbols.push_back(end_of_word_id_);
    }
    apply_merges(symbols);
    out.insert(out.end(), symbols.begin(), symbols.end());
}

std::vector<TokenId> Tokenizer::encode(std::string_view text, EncodeOptions options) const {
    std::vector<TokenId> out;
    if (options.add_bos_eos) {
        out.push_back(special::bos);
    }
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && text[pos] == ' ') {
            ++pos;
        }
        if (pos >= text.size()) {
            break;
        }
        auto end = text.find(' ', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view word = text.substr(pos, end - pos);
        pos = end;

        if (!options.parse_masks) {
            encode_word(word, true, out);
            continue;
        }
        // A mask absorbs the end-of-word symbol when it ends the word.
        for (;;) {
            const auto m = word.find(kMaskText);
            if (m == std::string_view::npos) {
                if (!word.empty()) {
                    encode_word(word, true, out);
                }
                break;
            }
            if (m > 0) {
                encode_word(word.substr(0, m), false, out);
            }
            out.push_back(special::mask);
            word.remove_prefix(m + kMaskText.size());
        }
    }
    if (options.add_bos_eos) {
        out.push_back(special::eos);
    }
    return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        const std::string& t = token(id);
        if (is_special(id)) {
            if (id == special::mask) {
                out += kMaskText;
                out += ' ';
            }
            continue;
        }
        if (t.size() >= kEndOfWord.size() && t.compare(t.size() - kEndOfWord.size(), kEndOfWord.size(), kEndOfWord) == 0) {
            out.append(t, 0, t.size() - kEndOfWord.size());
            out += ' ';
        } else {
            out += t;
        }
    }
    while (!out.empty() && out.back() == ' ') {
        out.pop_back();
    }
    return out;
}

std::string Tokenizer::surface(TokenId id) const {
    const std::string& t = token(id);
    if (is_special(id)) {
        return t;
    }
    if (t.size() >= kEndOfWord.size() && t.compare(t.size() - kEndOfWord.size(), kEndOfWord.size(), kEndOfWord) == 0) {
        return t.substr(0, t.size() - kEndOfWord.size());
    }
    return t;
}

void Tokenizer::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "vocab.txt", std::ios::binary);
        for (const std::string& t : id_to_token_) {
            out << t << '\n';
        }
        if (!out) {
            throw Error("failed writing " + (dir / "vocab.txt").string());
        }
    }
    std::ofstream out(dir / "merges.txt", std::ios::binary);
    out << "#mlmkit-bpe version=" << kTokenizerFormatVersion << " alphabet=" << alphabet_.size()
        << " merges=" << merges_.size() << " vocab=" << id_to_token_.size() << '\n';
    for (const MergeRule& m : merges_) {
        out << m.left << ' ' << m.right << '\n';
    }
    if (!out) {
        throw Error("failed writing " + (dir / "merges.txt").string());
    }
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    return lines;
}

std::size_t header_field(const std::string& header, const std::string& file, std::string_view key) {
    const std::string needle = " " + std::string(key) + "=";
    const auto p = header.find(needle);
    if (p == std::string::npos) {
        throw ParseError(file, 1, "header lacks '" + std::string(key) + "='");
    }
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(header.substr(p + needle.size()), &used);
    } catch (const std::exception&) {
        throw ParseError(file, 1, "bad value for '" + std::string(key) + "'");
    }
    return static_cast<std::size_t>(v);
}

}  // namespace

Tokenizer Tokenizer::load(const std::filesystem::path& dir) {
    const std::string vocab_file = (dir / "vocab.txt").string();
    const std::string merges_file = (dir / "merges.txt").string();
    const std::vector<std::string> vocab = read_lines(vocab_file);
    const std::vector<std::string> merge_lines = read_lines(merges_file);

    if (merge_lines.empty() || merge_lines[0].rfind("#mlmkit-bpe ", 0) != 0) {
        throw ParseError(merges_file, 1, "missing '#mlmkit-bpe' header");
    }
    const std::string& header = merge_lines[0];
    const std::size_t version = header_field(header, merges_file, "version");
    if (version != kTokenizerFormatVersion) {
        throw ParseError(merges_file, 1,
                         "unsupported tokenizer format version " + std::to_string(version) + " (expected " +
                             std::to_string(kTokenizerFormatVersion) + ")");
    }
    const std::size_t n_alphabet = header_field(header, merges_file, "alphabet");
    const std::size_t n_merges = header_field(header, merges_file, "merges");
    const std::size_t n_vocab = header_field(header, merges_file, "vocab");

    if (vocab.size() != n_vocab) {
        throw Error(vocab_file + ": declared vocab count " + std::to_string(n_vocab) + " but file has " +
                    std::to_string(vocab.size()) + " entries");
    }
    if (n_vocab < special::count + n_alphabet) {
        throw ParseError(merges_file, 1, "vocab count smaller than specials plus alphabet");
    }
    for (TokenId id = 0; id < special::count; ++id) {
        if (vocab[static_cast<std::size_t>(id)] != special_token_text(id)) {
            throw ParseError(vocab_file, static_cast<std::size_t>(id) + 1,
                             "expected special token " + std::string(special_token_text(id)));
        }
    }

    std::vector<MergeRule> merges;
    merges.reserve(n_merges);
    for (std::size_t i = 1; i < merge_lines.size(); ++i) {
        const std::string& line = merge_lines[i];
        const auto sp = line.find(' ');
        if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size() || line.find(' ', sp + 1) != std::string::npos) {
            throw ParseError(merges_file, i + 1, "expected 'left right', got '" + line + "'");
        }
        merges.push_back({line.substr(0, sp), line.substr(sp + 1)});
    }
    if (merges.size() != n_merges) {
        throw ParseError(merges_file, merge_lines.size() + 1,
                         "expected " + std::to_string(n_merges) + " merges, file ends after " +
                             std::to_string(merges.size()));
    }

    std::vector<std::string> alphabet(vocab.begin() + special::count,
                                      vocab.begin() + special::count + static_cast<std::ptrdiff_t>(n_alphabet));
    Tokenizer tok(std::move(alphabet), std::move(merges));
    if (tok.id_to_token_ != vocab) {
        for (std::size_t i = 0; i < std::min(vocab.size(), tok.id_to_token_.size()); ++i) {
            if (vocab[i] != tok.id_to_token_[i]) {
                throw ParseError(vocab_file, i + 1, "token '" + vocab[i] + "' disagrees with merges ('" +
                                                       tok.id_to_token_[i] + "' expected)");
            }
        }
        throw Error(vocab_file + ": vocabulary disagrees with merges");
    }
    return tok;
}

namespace {

struct Word {
    std::vector<int> symbols;
    std::int64_t count = 0;
};

std::uint64_t key_of(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

Tokenizer train_bpe(std::span<const std::string> lines, std::size_t vocab_size) {
    std::map<std::string, std::int64_t> word_counts;
    for (const std::string& line : lines) {
        std::size_t pos = 0;
        while (pos < line.size()) {
            const auto b = line.find_first_not_of(' ', pos);
            if (b == std::string::npos) {
                break;
            }
            auto e = line.find(' ', b);
            if (e == std::string::npos) {
                e = line.size();
            }
            ++word_counts[line.substr(b, e - b)];
            pos = e;
        }
    }
    if (word_counts.empty()) {
        throw Error("cannot train a tokenizer on an empty corpus");
    }

    std::set<std::string> alphabet_set{std::string(kEndOfWord)};
    for (const auto& [word, count] : word_counts) {
        for (std::string& ch : utf8::scalars(word)) {
            alphabet_set.insert(std::move(ch));
        }
    }
    std::vector<std::string> alphabet(alphabet_set.begin(), alphabet_set.end());
    const std::size_t base = special::count + alphabet.size();
    if (vocab_size < base) {
        throw Error("vocab_size " + std::to_string(vocab_size) + " is below the " + std::to_string(base) +
                    " tokens required by the specials and the " + std::to_string(alphabet.size()) +
                    "-symbol alphabet");
    }

    std::vector<std::string> text(alphabet);
    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < text.size(); ++i) {
        index.emplace(text[i], static_cast<int>(i));
    }
    const int eow = index.at(std::string(kEndOfWord));

    std::vector<Word> words;
    words.reserve(word_counts.size());
    for (const auto& [word, count] : word_counts) {
        Word w;
        for (const std::string& ch : utf8::scalars(word)) {
            w.symbols.push_back(index.at(ch));
        }
        w.symbols.push_back(eow);
        w.count = count;
        words.push_back(std::move(w));
    }

    std::unordered_map<std::uint64_t, std::int64_t> pair_count;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> where;
    for (std::size_t wi = 0; wi < words.size(); ++wi) {
        const auto& s = words[wi].symbols;
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            const auto k = key_of(s[i], s[i + 1]);
            pair_count[k] += words[wi].count;
            auto& list = where[k];
            if (list.empty() || list.back() != wi) {
                list.push_back(wi);
            }
        }
    }

    // Highest count first; ties by the (left, right) strings in byte order.
    const auto better = [&text](const std::pair<std::int64_t, std::uint64_t>& a,
                                const std::pair<std::int64_t, std::uint64_t>& b) {
        if (a.first != b.first) {
            return a.first > b.first;
        }
        const auto al = static_cast<std::size_t>(a.second >> 32), ar = static_cast<std::size_t>(a.second & 0xFFFFFFFFu);
        const auto bl = static_cast<std::size_t>(b.second >> 32), br = static_cast<std::size_t>(b.second & 0xFFFFFFFFu);
        if (int c = text[al].compare(text[bl]); c != 0) {
            return c < 0;
        }
        if (int c = text[ar].compare(text[br]); c != 0) {
            return c < 0;
        }
        return a.second < b.second;
    };
    std::set<std::pair<std::int64_t, std::uint64_t>, decltype(better)> queue(better);
    for (const auto& [k, c] : pair_count) {
        queue.emplace(c, k);
    }

    std::vector<MergeRule> merges;
    std::unordered_set<std::string> vocab_strings(alphabet.begin(), alphabet.end());
    std::size_t vocab_count = base;
    while (vocab_count < vocab_size && !queue.empty()) {
        const auto [count, key] = *queue.begin();
        if (count < 2) {
            break;
        }
        const int left = static_cast<int>(key >> 32);
        const int right = static_cast<int>(key & 0xFFFFFFFFu);
        std::string joined = text[left] + text[right];
        int merged = 0;
        if (const auto it = index.find(joined); it != index.end()) {
            merged = it->second;
        } else {
            merged = static_cast<int>(text.size());
            text.push_back(joined);
            index.emplace(joined, merged);
        }
        merges.push_back({text[left], text[right]});
        if (vocab_strings.insert(joined).second) {
            ++vocab_count;
        }

        std::unordered_map<std::uint64_t, std::int64_t> delta;
        const std::vector<std::size_t> affected = where[key];
        for (std::size_t wi : affected) {
            Word& w = words[wi];
            auto& s = w.symbols;
            bool present = false;
            for (std::size_t i = 0; i + 1 < s.size(); ++i) {
                if (s[i] == left && s[i + 1] == right) {
                    present = true;
                    break;
                }
            }
            if (!present) {
                continue;
            }
            for (std::size_t i = 0; i + 1 < s.size(); ++i) {
                delta[key_of(s[i], s[i + 1])] -= w.count;
            }
            std::size_t out = 0;
            for (std::size_t i = 0; i < s.size();) {
                if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
                    s[out++] = merged;
                    i += 2;
                } else {
                    s[out++] = s[i++];
                }
            }
            s.resize(out);
            for (std::size_t i = 0; i + 1 < s.size(); ++i) {
                const auto k = key_of(s[i], s[i + 1]);
                delta[k] += w.count;
                auto& list = where[k];
                if (list.empty() || list.back() != wi) {
                    list.push_back(wi);
                }
            }
        }
        for (const auto& [k, d] : delta) {
            if (d == 0) {
                continue;
            }
            std::int64_t& c = pair_count[k];
            if (c > 0) {
                queue.erase({c, k});
            }
            c += d;
            if (c > 0) {
                queue.emplace(c, k);
            }
        }
    }
    return Tokenizer(std::move(alphabet), std::move(merges));
}

Tokenizer train_bpe(const Corpus& corpus, std::size_t vocab_size) {
    std::vector<std::string> train = corpus.lines_in(Split::train);
    if (train.empty()) {
        return train_bpe(std::span<const std::string>(corpus.lines()), vocab_size);
    }
    return train_bpe(std::span<const std::string>(train), vocab_size);
}

}  // namespace mlmkit
