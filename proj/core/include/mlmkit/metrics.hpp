#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mlmkit/key_value.hpp"
#include "mlmkit/tokenizer.hpp"

namespace mlmkit {

/// One masked position: the truth and the model's ranking of the vocabulary.
struct PredictionRecord {
    std::size_t id = 0;
    TokenId true_id = 0;
    std::vector<TokenId> ranked;          // best first, ties by ascending id
    std::vector<double> probabilities;    // parallel to `ranked`; may be empty
    std::size_t rank = 0;                 // 1-based rank of true_id over the full vocabulary
    std::string true_text;
    std::string predicted_text;
    double negative_log_likelihood = 0.0; // -ln p(true_id)

    TokenId predicted() const { return ranked.at(0); }
};

struct ClassificationScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Percentage of records whose top prediction is the true token.
double accuracy(std::span<const PredictionRecord> records);

/// Macro-averaged over token classes; F1 combines the macro precision and recall.
ClassificationScores precision_recall_f1(std::span<const PredictionRecord> records);

double mrr(std::span<const PredictionRecord> records);

/// Edit distance over Unicode scalar values.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// Mean of levenshtein / max(length) per record; two empty strings score 0.
double cer(std::span<const PredictionRecord> records);

/// Fraction of records whose true token is ranked within the first k.
double hit_at_k(std::span<const PredictionRecord> records, std::size_t k);

/// Corpus BLEU over token ids: uniform 1-4-gram weights, brevity penalty,
/// add-one smoothing for n > 1.
double bleu(std::span<const std::vector<TokenId>> candidates, std::span<const std::vector<TokenId>> references);

/// exp(mean negative log-likelihood).
double perplexity(std::span<const double> negative_log_likelihoods);

/// Per-token perplexity 1/p.
double token_perplexity(double probability);

struct EvalReport {
    std::size_t count = 0;
    double accuracy = 0.0;  // percent
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double mrr = 0.0;
    double cer = 0.0;
    std::size_t k = 10;
    double hit_at_k = 0.0;
    double bleu = 0.0;
    double perplexity = 0.0;

    KeyValues to_key_values() const;
};

/// Every metric except BLEU, which needs whole sequences.
EvalReport summarize(std::span<const PredictionRecord> records, std::size_t k);

/// Plain-text table: Model, Accuracy, Precision, F1-Score, MRR, CER, Hit@k, BLEU.
std::string render_report_table(std::span<const std::pair<std::string, EvalReport>> rows);

}  // namespace mlmkit
