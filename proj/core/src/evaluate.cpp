#include "mlmkit/evaluate.hpp"

#include <cmath>
#include <sstream>

#include "mlmkit/error.hpp"
#include "mlmkit/key_value.hpp"
#include "mlmkit/training.hpp"

namespace mlmkit {

EvalResult evaluate_model(const Model<float>& model, const Tokenizer& tokenizer, std::span<const std::string> lines,
                          const EvalOptions& options) {
    const std::size_t vocab = model.config().vocab_size;
    if (vocab != tokenizer.vocab_size()) {
        throw Error("model vocab_size " + std::to_string(vocab) + " does not match tokenizer vocabulary " +
                    std::to_string(tokenizer.vocab_size()));
    }
    if (options.k == 0 || options.k > vocab) {
        throw Error("k must lie in [1, " + std::to_string(vocab) + "], got " + std::to_string(options.k));
    }
    if (options.batch_size == 0) {
        throw Error("batch_size must be positive");
    }
    const auto stream = build_stream(tokenizer, lines);
    if (stream.empty()) {
        throw Error("test split is empty");
    }
    const auto blocks = maskable_blocks(pack_blocks(stream, model.config().context_size));
    if (blocks.empty()) {
        throw Error("test split has no maskable tokens");
    }
    const MaskingOptions masking{options.masking_probability, MaskStrategy::pure, vocab};
    const std::uint64_t seed = derive_seed(options.seed, "test-mask");

    EvalResult result;
    for (std::size_t b = 0, bi = 0; b < blocks.size(); b += options.batch_size, ++bi) {
        const auto chunk = std::span<const Block>(blocks).subspan(b, std::min(options.batch_size, blocks.size() - b));
        const MaskedBatch batch = mask_batch(chunk, masking, derive_seed(seed, "batch", bi));
        const auto logits = model.forward(batch, num::Mode::eval);
        const auto values = logits.data();
        for (std::size_t s = 0; s < batch.batch; ++s) {
            const Block& original = chunk[s];
            std::vector<TokenId> filled = original.ids;
            for (const MaskLabel& label : batch.labels[s]) {
                const std::size_t row = s * batch.length + label.position;
                const auto probs = softmax_distribution(values.subspan(row * vocab, vocab));
                PredictionRecord rec;
                rec.id = result.records.size();
                rec.true_id = label.original;
                rec.ranked = top_k(probs, options.k);
                for (TokenId id : rec.ranked) {
                    rec.probabilities.push_back(probs[static_cast<std::size_t>(id)]);
                }
                rec.rank = rank_of(probs, label.original);
                rec.true_text = tokenizer.surface(label.original);
                rec.predicted_text = tokenizer.surface(rec.predicted());
                rec.negative_log_likelihood = -std::log(probs[static_cast<std::size_t>(label.original)]);
                filled[label.position] = rec.predicted();
                result.records.push_back(std::move(rec));
            }
            std::vector<TokenId> reference;
            std::vector<TokenId> candidate;
            for (std::size_t i = 0; i < original.ids.size(); ++i) {
                if (original.pad[i] == 0) {
                    reference.push_back(original.ids[i]);
                    candidate.push_back(filled[i]);
                }
            }
            result.originals.push_back(std::move(reference));
            result.filled.push_back(std::move(candidate));
        }
    }
    result.report = summarize(result.records, options.k);
    result.report.bleu = bleu(result.filled, result.originals);
    return result;
}

std::string render_prediction_dump(std::span<const PredictionRecord> records) {
    std::ostringstream out;
    out << "# id\ttrue_id\trank\tid:probability...\n";
    for (const auto& r : records) {
        out << r.id << '\t' << r.true_id << '\t' << r.rank;
        for (std::size_t i = 0; i < r.ranked.size(); ++i) {
            out << '\t' << r.ranked[i] << ':'
                << format_double(i < r.probabilities.size() ? r.probabilities[i] : 0.0);
        }
        out << '\n';
    }
    return out.str();
}

std::vector<PredictionRecord> parse_prediction_dump(std::string_view text, const std::string& source) {
    std::vector<PredictionRecord> records;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') {
            continue;
        }
        std::vector<std::string_view> fields;
        std::size_t f = 0;
        while (true) {
            const std::size_t tab = line.find('\t', f);
            fields.push_back(line.substr(f, tab == std::string_view::npos ? std::string_view::npos : tab - f));
            if (tab == std::string_view::npos) break;
            f = tab + 1;
        }
        if (fields.size() < 4) {
            throw ParseError(source, line_no, "expected id, true_id, rank and at least one prediction");
        }
        PredictionRecord r;
        try {
            const auto id = parse_int(fields[0], "record id");
            const auto true_id = parse_int(fields[1], "true id");
            const auto rank = parse_int(fields[2], "rank");
            if (id < 0 || true_id < 0 || rank < 1) {
                throw Error("negative id or rank below 1");
            }
            r.id = static_cast<std::size_t>(id);
            r.true_id = static_cast<TokenId>(true_id);
            r.rank = static_cast<std::size_t>(rank);
            for (std::size_t i = 3; i < fields.size(); ++i) {
                const std::size_t colon = fields[i].find(':');
                if (colon == std::string_view::npos) {
                    throw Error("prediction '" + std::string(fields[i]) + "' lacks ':'");
                }
                r.ranked.push_back(static_cast<TokenId>(parse_int(fields[i].substr(0, colon), "predicted id")));
                r.probabilities.push_back(parse_double(fields[i].substr(colon + 1), "probability"));
            }
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(source, line_no, e.what());
        }
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace mlmkit
