#include <cmath>
#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "mlmkit/error.hpp"
#include "mlmkit/metrics.hpp"
#include "mlmkit/random.hpp"
#include "metric_oracles.hpp"

namespace mlmkit {
namespace {

using brute::record;

TEST(Accuracy, Examples) {
    const std::vector<PredictionRecord> rs{record(1, {1}), record(2, {2}), record(4, {3})};
    EXPECT_NEAR(accuracy(rs), 66.666666666666667, 1e-9);
    const std::vector<PredictionRecord> all{record(1, {1}), record(2, {2})};
    EXPECT_EQ(accuracy(all), 100.0);
    std::vector<PredictionRecord> many;
    for (int i = 0; i < 10000; ++i) many.push_back(record(7, {i < 5148 ? 7 : 8}));
    EXPECT_NEAR(accuracy(many), 51.48, 1e-9);
    EXPECT_THROW(accuracy({}), Error);
}

TEST(PrecisionRecallF1, MacroExample) {
    const std::vector<PredictionRecord> rs{record(1, {1}), record(1, {2}), record(2, {2})};
    const auto s = precision_recall_f1(rs);
    EXPECT_DOUBLE_EQ(s.precision, 0.75);
    EXPECT_DOUBLE_EQ(s.recall, 0.75);
    EXPECT_DOUBLE_EQ(s.f1, 0.75);
}

TEST(PrecisionRecallF1, PerfectAndDegenerate) {
    const std::vector<PredictionRecord> ok{record(1, {1}), record(2, {2}), record(3, {3})};
    const auto p = precision_recall_f1(ok);
    EXPECT_EQ(p.precision, 1.0);
    EXPECT_EQ(p.recall, 1.0);
    EXPECT_EQ(p.f1, 1.0);
    const std::vector<PredictionRecord> bad{record(1, {9}), record(2, {9})};
    const auto d = precision_recall_f1(bad);
    EXPECT_EQ(d.precision, 0.0);
    EXPECT_EQ(d.recall, 0.0);
    EXPECT_EQ(d.f1, 0.0);
    EXPECT_THROW(precision_recall_f1({}), Error);
}

TEST(Mrr, Examples) {
    const std::vector<PredictionRecord> rs{record(1, {1}, 1), record(1, {2}, 2), record(1, {2}, 4)};
    EXPECT_NEAR(mrr(rs), 0.58333333333333333, 1e-12);
    const std::vector<PredictionRecord> top{record(1, {1}), record(2, {2})};
    EXPECT_EQ(mrr(top), 1.0);
    EXPECT_THROW(mrr({}), Error);
}

TEST(Levenshtein, Examples) {
    EXPECT_EQ(levenshtein("kitten", "sitting"), 3u);
    EXPECT_EQ(levenshtein("wičháša", "wičháša"), 0u);
    EXPECT_EQ(levenshtein("", "abc"), 3u);
    EXPECT_EQ(levenshtein("č", "c"), 1u);
}

std::string random_word(Rng& rng) {
    static const std::vector<std::string> chars{"a", "b", "c", "č", "š", "ŋ"};
    std::string s;
    const auto n = rng.below(7);
    for (std::uint64_t i = 0; i < n; ++i) s += chars[rng.below(chars.size())];
    return s;
}

TEST(Levenshtein, MetricAxioms) {
    Rng rng(4);
    for (int i = 0; i < 300; ++i) {
        const auto a = random_word(rng), b = random_word(rng), c = random_word(rng);
        EXPECT_EQ(levenshtein(a, b), levenshtein(b, a));
        EXPECT_EQ(levenshtein(a, a), 0u);
        EXPECT_LE(levenshtein(a, c), levenshtein(a, b) + levenshtein(b, c));
        if (a != b) {
            EXPECT_GT(levenshtein(a, b), 0u);
        }
    }
}

TEST(Cer, Examples) {
    PredictionRecord r = record(1, {2});
    r.true_text = "kitten";
    r.predicted_text = "sitting";
    EXPECT_NEAR(cer(std::vector<PredictionRecord>{r}), 3.0 / 7.0, 1e-12);
    r.true_text = r.predicted_text = "same";
    EXPECT_EQ(cer(std::vector<PredictionRecord>{r}), 0.0);
    r.true_text = "";
    r.predicted_text = "ab";
    EXPECT_EQ(cer(std::vector<PredictionRecord>{r}), 1.0);
    r.predicted_text = "";
    EXPECT_EQ(cer(std::vector<PredictionRecord>{r}), 0.0);
    EXPECT_THROW(cer({}), Error);
}

TEST(HitAtK, Examples) {
    std::vector<PredictionRecord> rs;
    for (int i = 0; i < 100; ++i) rs.push_back(record(1, {2}, i < 31 ? 10 : 11));
    EXPECT_NEAR(hit_at_k(rs, 10), 0.31, 1e-12);
    const std::vector<PredictionRecord> mixed{record(1, {1, 2}), record(2, {1, 2}), record(3, {1, 2})};
    EXPECT_NEAR(hit_at_k(mixed, 1), accuracy(mixed) / 100.0, 1e-12);
    const std::vector<PredictionRecord> boundary{record(3, {1, 2, 3})};
    EXPECT_EQ(hit_at_k(boundary, 3), 1.0);
    EXPECT_EQ(hit_at_k(boundary, 2), 0.0);
    EXPECT_THROW(hit_at_k(mixed, 0), Error);
    EXPECT_THROW(hit_at_k({}, 1), Error);
}

TEST(Bleu, Examples) {
    const std::vector<std::vector<TokenId>> ref{{1, 2, 3, 4}, {5, 6, 7, 8, 9}};
    EXPECT_DOUBLE_EQ(bleu(ref, ref), 1.0);
    const std::vector<std::vector<TokenId>> none{{10, 11, 12, 13}, {14, 15, 16, 17, 18}};
    EXPECT_EQ(bleu(none, ref), 0.0);
    // unigrams 3/4, bigrams (2+1)/(3+1), trigrams (1+1)/(2+1), 4-grams (0+1)/(1+1)
    const std::vector<std::vector<TokenId>> c{{1, 2, 3, 4}}, r{{1, 2, 3, 5}};
    EXPECT_NEAR(bleu(c, r), std::pow(0.75 * 0.75 * (2.0 / 3.0) * 0.5, 0.25), 1e-12);
}

TEST(Bleu, BrevityPenaltyAndErrors) {
    const std::vector<std::vector<TokenId>> c{{1, 2}}, r{{1, 2, 3, 4}};
    const double p = std::pow(1.0 * (2.0 / 2.0), 0.25);  // p1 = 1, p2 = 2/2, p3 = p4 = 1/1
    EXPECT_NEAR(bleu(c, r), std::exp(1.0 - 2.0) * p, 1e-12);
    const std::vector<std::vector<TokenId>> empty{{}};
    EXPECT_EQ(bleu(empty, r), 0.0);
    EXPECT_THROW(bleu({}, {}), Error);
    EXPECT_THROW(bleu(c, std::vector<std::vector<TokenId>>{{1}, {2}}), Error);
}

TEST(Perplexity, MeanNll) {
    const std::vector<double> nll{std::log(2.0), std::log(8.0)};
    EXPECT_NEAR(perplexity(nll), 4.0, 1e-12);
    EXPECT_DOUBLE_EQ(token_perplexity(0.5), 2.0);
    EXPECT_THROW(perplexity({}), Error);
    EXPECT_THROW(token_perplexity(0.0), Error);
}

TEST(MetricOracles, RandomizedEquivalence) {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto rs = brute::random_records(rng, 1 + rng.below(12), 2 + rng.below(6));
        EXPECT_NEAR(accuracy(rs), brute::accuracy(rs), 1e-9);
        const auto a = precision_recall_f1(rs), b = brute::prf(rs);
        EXPECT_NEAR(a.precision, b.precision, 1e-9);
        EXPECT_NEAR(a.recall, b.recall, 1e-9);
        EXPECT_NEAR(a.f1, b.f1, 1e-9);
        EXPECT_NEAR(mrr(rs), brute::mrr(rs), 1e-12);
        EXPECT_NEAR(cer(rs), brute::cer(rs), 1e-9);
        const std::size_t k = 1 + rng.below(4);
        EXPECT_NEAR(hit_at_k(rs, k), brute::hit(rs, k), 1e-12);
        EXPECT_EQ(levenshtein(rs[0].true_text, rs[0].predicted_text),
                  brute::lev(brute::widen(rs[0].true_text), brute::widen(rs[0].predicted_text)));
        std::vector<std::vector<TokenId>> cs, refs;
        const auto pairs = 1 + rng.below(3);
        for (std::uint64_t p = 0; p < pairs; ++p) {
            std::vector<TokenId> r(1 + rng.below(8)), c;
            for (auto& t : r) t = static_cast<TokenId>(rng.below(4));
            c = r;
            for (auto& t : c) {
                if (rng.bernoulli(0.3)) t = static_cast<TokenId>(rng.below(4));
            }
            if (rng.bernoulli(0.2)) c.pop_back();
            cs.push_back(c);
            refs.push_back(r);
        }
        EXPECT_NEAR(bleu(cs, refs), brute::bleu(cs, refs), 1e-9);
    }
}

TEST(MetricProperties, HitMonotoneAndMrrBounds) {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t vocab = 2 + rng.below(8);
        const auto rs = brute::random_records(rng, 1 + rng.below(20), vocab);
        double prev = 0;
        for (std::size_t k = 1; k <= vocab; ++k) {
            const double h = hit_at_k(rs, k);
            EXPECT_GE(h, prev);
            prev = h;
        }
        EXPECT_EQ(hit_at_k(rs, vocab), 1.0);
        const double h1 = hit_at_k(rs, 1);
        EXPECT_GE(mrr(rs) + 1e-12, accuracy(rs) / 100.0);
        EXPECT_LE(mrr(rs), h1 + (1 - h1) * 0.5 + 1e-12);
        const double c = cer(rs);
        EXPECT_GE(c, 0.0);
        EXPECT_LE(c, 1.0);
    }
}

TEST(Report, TableColumnsInOrder) {
    EvalReport r;
    r.accuracy = 51.48;
    r.precision = 0.56;
    r.f1 = 0.49;
    r.mrr = 0.51;
    r.cer = 0.43;
    r.hit_at_k = 0.31;
    r.bleu = 0.09;
    const std::vector<std::pair<std::string, EvalReport>> rows{{"model", r}};
    const std::string t = render_report_table(rows);
    std::size_t last = 0;
    for (const char* col : {"Model", "Accuracy", "Precision", "F1-Score", "MRR", "CER", "Hit@k", "BLEU"}) {
        const auto pos = t.find(col);
        ASSERT_NE(pos, std::string::npos) << col;
        EXPECT_GE(pos, last) << col;
        last = pos;
    }
    EXPECT_NE(t.find("51.48%"), std::string::npos);
    EXPECT_NE(t.find("0.31"), std::string::npos);
    const auto kv = r.to_key_values();
    for (const char* k : {"accuracy", "precision", "f1", "mrr", "cer", "hit_at_k", "bleu", "k"}) {
        EXPECT_TRUE(kv.contains(k)) << k;
    }
}

}  // namespace
}  // namespace mlmkit
