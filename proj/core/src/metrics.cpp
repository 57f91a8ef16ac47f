#include "mlmkit/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "mlmkit/error.hpp"
#include "mlmkit/utf8.hpp"

namespace mlmkit {
namespace {

void require_records(std::span<const PredictionRecord> records, const char* metric) {
    if (records.empty()) {
        throw Error(std::string(metric) + ": no prediction records");
    }
}

std::string fixed(double value, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, value);
    return buf;
}

}  // namespace

double accuracy(std::span<const PredictionRecord> records) {
    require_records(records, "accuracy");
    std::size_t correct = 0;
    for (const auto& r : records) {
        correct += r.predicted() == r.true_id ? 1 : 0;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(records.size());
}

ClassificationScores precision_recall_f1(std::span<const PredictionRecord> records) {
    require_records(records, "precision_recall_f1");
    struct Counts {
        std::size_t tp = 0, fp = 0, fn = 0;
    };
    std::map<TokenId, Counts> classes;
    for (const auto& r : records) {
        const TokenId pred = r.predicted();
        if (pred == r.true_id) {
            ++classes[pred].tp;
        } else {
            ++classes[pred].fp;
            ++classes[r.true_id].fn;
        }
    }
    double p_sum = 0, r_sum = 0;
    std::size_t p_n = 0, r_n = 0;
    for (const auto& [id, c] : classes) {
        if (c.tp + c.fp > 0) {
            p_sum += static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
            ++p_n;
        }
        if (c.tp + c.fn > 0) {
            r_sum += static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
            ++r_n;
        }
    }
    ClassificationScores s;
    s.precision = p_n ? p_sum / static_cast<double>(p_n) : 0.0;
    s.recall = r_n ? r_sum / static_cast<double>(r_n) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

double mrr(std::span<const PredictionRecord> records) {
    require_records(records, "mrr");
    double total = 0;
    for (const auto& r : records) {
        if (r.rank == 0) {
            throw Error("mrr: record " + std::to_string(r.id) + " has no rank");
        }
        total += 1.0 / static_cast<double>(r.rank);
    }
    return total / static_cast<double>(records.size());
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    const std::u32string x = utf8::decode(a).text;
    const std::u32string y = utf8::decode(b).text;
    std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
    for (std::size_t j = 0; j <= y.size(); ++j) {
        prev[j] = j;
    }
    for (std::size_t i = 1; i <= x.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= y.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[y.size()];
}

double cer(std::span<const PredictionRecord> records) {
    require_records(records, "cer");
    double total = 0;
    for (const auto& r : records) {
        const std::size_t n = std::max(utf8::length(r.true_text), utf8::length(r.predicted_text));
        if (n > 0) {
            total += static_cast<double>(levenshtein(r.true_text, r.predicted_text)) / static_cast<double>(n);
        }
    }
    return total / static_cast<double>(records.size());
}

double hit_at_k(std::span<const PredictionRecord> records, std::size_t k) {
    require_records(records, "hit_at_k");
    if (k == 0) {
        throw Error("hit_at_k: k must be at least 1");
    }
    std::size_t hits = 0;
    for (const auto& r : records) {
        hits += (r.rank >= 1 && r.rank <= k) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

double bleu(std::span<const std::vector<TokenId>> candidates, std::span<const std::vector<TokenId>> references) {
    if (candidates.empty()) {
        throw Error("bleu: no sentence pairs");
    }
    if (candidates.size() != references.size()) {
        throw Error("bleu: " + std::to_string(candidates.size()) + " candidates but " +
                    std::to_string(references.size()) + " references");
    }
    constexpr std::size_t kMaxOrder = 4;
    std::array<std::size_t, kMaxOrder> matches{}, totals{};
    std::size_t cand_len = 0, ref_len = 0;
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        const auto& c = candidates[s];
        const auto& r = references[s];
        cand_len += c.size();
        ref_len += r.size();
        for (std::size_t n = 1; n <= kMaxOrder; ++n) {
            std::map<std::vector<TokenId>, std::size_t> ref_counts;
            for (std::size_t i = 0; i + n <= r.size(); ++i) {
                ++ref_counts[std::vector<TokenId>(r.begin() + static_cast<std::ptrdiff_t>(i),
                                                  r.begin() + static_cast<std::ptrdiff_t>(i + n))];
            }
            std::map<std::vector<TokenId>, std::size_t> cand_counts;
            for (std::size_t i = 0; i + n <= c.size(); ++i) {
                ++cand_counts[std::vector<TokenId>(c.begin() + static_cast<std::ptrdiff_t>(i),
                                                   c.begin() + static_cast<std::ptrdiff_t>(i + n))];
            }
            for (const auto& [gram, count] : cand_counts) {
                const auto it = ref_counts.find(gram);
                matches[n - 1] += it == ref_counts.end() ? 0 : std::min(count, it->second);
                totals[n - 1] += count;
            }
        }
    }
    if (cand_len == 0 || matches[0] == 0) {
        return 0.0;
    }
    double log_sum = std::log(static_cast<double>(matches[0]) / static_cast<double>(totals[0]));
    for (std::size_t n = 1; n < kMaxOrder; ++n) {
        log_sum += std::log((static_cast<double>(matches[n]) + 1.0) / (static_cast<double>(totals[n]) + 1.0));
    }
    const double bp = cand_len > ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return bp * std::exp(log_sum / static_cast<double>(kMaxOrder));
}

double perplexity(std::span<const double> nll) {
    if (nll.empty()) {
        throw Error("perplexity: no tokens");
    }
    double total = 0;
    for (double v : nll) {
        total += v;
    }
    return std::exp(total / static_cast<double>(nll.size()));
}

double token_perplexity(double probability) {
    if (!(probability > 0.0 && probability <= 1.0)) {
        throw Error("token_perplexity: probability must lie in (0, 1]");
    }
    return 1.0 / probability;
}

KeyValues EvalReport::to_key_values() const {
    KeyValues kv;
    kv.set("count", std::to_string(count));
    kv.set("accuracy", format_double(accuracy));
    kv.set("precision", format_double(precision));
    kv.set("recall", format_double(recall));
    kv.set("f1", format_double(f1));
    kv.set("mrr", format_double(mrr));
    kv.set("cer", format_double(cer));
    kv.set("k", std::to_string(k));
    kv.set("hit_at_k", format_double(hit_at_k));
    kv.set("bleu", format_double(bleu));
    kv.set("perplexity", format_double(perplexity));
    return kv;
}

EvalReport summarize(std::span<const PredictionRecord> records, std::size_t k) {
    EvalReport r;
    r.count = records.size();
    r.accuracy = accuracy(records);
    const auto prf = precision_recall_f1(records);
    r.precision = prf.precision;
    r.recall = prf.recall;
    r.f1 = prf.f1;
    r.mrr = mrr(records);
    r.cer = cer(records);
    r.k = k;
    r.hit_at_k = hit_at_k(records, k);
    std::vector<double> nll;
    nll.reserve(records.size());
    for (const auto& rec : records) {
        nll.push_back(rec.negative_log_likelihood);
    }
    r.perplexity = perplexity(nll);
    return r;
}

std::string render_report_table(std::span<const std::pair<std::string, EvalReport>> rows) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"Model", "Accuracy", "Precision", "F1-Score", "MRR", "CER", "Hit@k", "BLEU"});
    for (const auto& [name, r] : rows) {
        cells.push_back({name, fixed(r.accuracy, 2) + "%", fixed(r.precision, 2), fixed(r.f1, 2), fixed(r.mrr, 2),
                         fixed(r.cer, 2), fixed(r.hit_at_k, 2), fixed(r.bleu, 2)});
    }
    std::vector<std::size_t> width(cells.front().size(), 0);
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            width[c] = std::max(width[c], utf8::length(row[c]));
        }
    }
    std::ostringstream out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        for (std::size_t c = 0; c < cells[i].size(); ++c) {
            const std::string& s = cells[i][c];
            const std::string padding(width[c] - utf8::length(s), ' ');
            out << (c == 0 ? s + padding : padding + s);
            out << (c + 1 < cells[i].size() ? "  " : "\n");
        }
        if (i == 0) {
            std::size_t total = 0;
            for (std::size_t w : width) total += w + 2;
            out << std::string(total - 2, '-') << '\n';
        }
    }
    return out.str();
}

}  // namespace mlmkit
