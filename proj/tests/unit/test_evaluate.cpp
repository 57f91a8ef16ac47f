#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "mlmkit/error.hpp"
#include "mlmkit/evaluate.hpp"
#include "mlmkit/training.hpp"
#include "support.hpp"

namespace mlmkit {
namespace {

using namespace mlmkit::test;

ModelConfig tiny(std::size_t vocab) {
    ModelConfig c;
    c.number_of_layers = 1;
    c.hidden_size = 16;
    c.ffn_inner_hidden_size = 32;
    c.number_of_attention_heads = 2;
    c.attention_head_size = 8;
    c.context_size = 16;
    c.vocab_size = vocab;
    return c;
}

struct Fixture {
    std::vector<std::string> lines = read_lines(data_dir() / "toy_lakota.txt");
    Tokenizer tok = train_bpe(lines, 300);
    Model<float> model = Model<float>::create(tiny(tok.vocab_size()), 3);

    static std::vector<std::string> read_lines(const std::filesystem::path& p) {
        std::vector<std::string> out;
        std::istringstream in(read_text(p));
        for (std::string line; std::getline(in, line);) {
            if (!line.empty()) out.push_back(line);
        }
        return out;
    }
};

TEST(Evaluate, RecordsAreConsistent) {
    Fixture f;
    EvalOptions opt;
    opt.k = 5;
    opt.seed = 9;
    const EvalResult r = evaluate_model(f.model, f.tok, f.lines, opt);
    ASSERT_FALSE(r.records.empty());
    EXPECT_EQ(r.report.count, r.records.size());
    EXPECT_EQ(r.filled.size(), r.originals.size());
    for (std::size_t i = 0; i < r.filled.size(); ++i) EXPECT_EQ(r.filled[i].size(), r.originals[i].size());
    for (const auto& rec : r.records) {
        EXPECT_EQ(rec.ranked.size(), 5u);
        EXPECT_GE(rec.rank, 1u);
        EXPECT_LE(rec.rank, f.tok.vocab_size());
        for (std::size_t i = 1; i < rec.probabilities.size(); ++i) EXPECT_GE(rec.probabilities[i - 1], rec.probabilities[i]);
        EXPECT_EQ(rec.predicted_text, f.tok.surface(rec.predicted()));
        EXPECT_EQ(rec.true_text, f.tok.surface(rec.true_id));
        EXPECT_GT(rec.negative_log_likelihood, 0.0);
    }
    EXPECT_NEAR(r.report.perplexity, std::exp([&] {
                    double s = 0;
                    for (const auto& rec : r.records) s += rec.negative_log_likelihood;
                    return s / static_cast<double>(r.records.size());
                }()),
                1e-9 * r.report.perplexity);
}

TEST(Evaluate, DeterministicForSeed) {
    Fixture f;
    EvalOptions opt;
    opt.seed = 2;
    const auto a = evaluate_model(f.model, f.tok, f.lines, opt);
    const auto b = evaluate_model(f.model, f.tok, f.lines, opt);
    ASSERT_EQ(a.records.size(), b.records.size());
    EXPECT_EQ(render_prediction_dump(a.records), render_prediction_dump(b.records));
    EXPECT_EQ(a.report.to_key_values().render(), b.report.to_key_values().render());
}

TEST(Evaluate, UntrainedModelScoresNearChance) {
    Fixture f;
    const auto r = evaluate_model(f.model, f.tok, f.lines, EvalOptions{});
    const double v = static_cast<double>(f.tok.vocab_size());
    EXPECT_LT(r.report.accuracy, 20.0);
    EXPECT_GT(r.report.perplexity, 0.5 * v);
    EXPECT_LT(r.report.perplexity, 2.0 * v);
    EXPECT_GE(r.report.bleu, 0.0);
    EXPECT_LE(r.report.bleu, 1.0);
}

TEST(Evaluate, Errors) {
    Fixture f;
    EvalOptions opt;
    opt.k = f.tok.vocab_size() + 1;
    EXPECT_THROW(evaluate_model(f.model, f.tok, f.lines, opt), Error);
    opt.k = 0;
    EXPECT_THROW(evaluate_model(f.model, f.tok, f.lines, opt), Error);
    EXPECT_THROW(evaluate_model(f.model, f.tok, std::vector<std::string>{}, EvalOptions{}), Error);
    const Tokenizer other = train_bpe(std::vector<std::string>{"xyz"}, 10);
    EXPECT_THROW(evaluate_model(f.model, other, f.lines, EvalOptions{}), Error);
}

TEST(PredictionDump, RoundTrip) {
    Fixture f;
    EvalOptions opt;
    opt.k = 3;
    const auto r = evaluate_model(f.model, f.tok, f.lines, opt);
    const std::string text = render_prediction_dump(r.records);
    EXPECT_EQ(text.front(), '#');
    const auto back = parse_prediction_dump(text);
    ASSERT_EQ(back.size(), r.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].id, r.records[i].id);
        EXPECT_EQ(back[i].true_id, r.records[i].true_id);
        EXPECT_EQ(back[i].rank, r.records[i].rank);
        EXPECT_EQ(back[i].ranked, r.records[i].ranked);
        ASSERT_EQ(back[i].probabilities.size(), 3u);
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_NEAR(back[i].probabilities[j], r.records[i].probabilities[j], 1e-12);
        }
    }
    EXPECT_EQ(render_prediction_dump(back), text);
}

TEST(PredictionDump, MalformedLineReportsLocation) {
    try {
        parse_prediction_dump("# header\n0\t5\t1\t5:0.5\n1\tx\t1\n", "dump.tsv");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("dump.tsv"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
    }
}

}  // namespace
}  // namespace mlmkit
