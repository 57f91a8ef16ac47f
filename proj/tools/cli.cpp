#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlmkit/checkpoint.hpp"
#include "mlmkit/corpus.hpp"
#include "mlmkit/error.hpp"
#include "mlmkit/evaluate.hpp"
#include "mlmkit/key_value.hpp"
#include "mlmkit/model.hpp"
#include "mlmkit/tokenizer.hpp"
#include "mlmkit/training.hpp"

namespace fs = std::filesystem;

namespace mlmkit::cli {
namespace {

const std::map<std::string, std::string>& key_help() {
    static const std::map<std::string, std::string> help{
        {"number_of_layers", "encoder blocks"},
        {"hidden_size", "model width"},
        {"ffn_inner_hidden_size", "feed-forward inner width"},
        {"number_of_attention_heads", "attention heads"},
        {"attention_head_size", "width of each head"},
        {"context_size", "tokens per training block"},
        {"vocab_size", "vocabulary size (taken from the tokenizer when training)"},
        {"dropout", "hidden dropout probability"},
        {"attention_dropout", "attention dropout probability"},
        {"layer_norm_eps", "layer norm epsilon"},
        {"initializer_range", "stddev of the weight initializer"},
        {"batch_size", "sequences per step"},
        {"masking_probability", "fraction of tokens masked"},
        {"torch_dtype", "parameter dtype (float32)"},
        {"number_of_parameters", "informational; the actual count is printed"},
        {"learning_rate", "peak Adam learning rate"},
        {"warmup_fraction", "fraction of steps with linear warmup"},
        {"adam_beta1", "Adam first-moment decay"},
        {"adam_beta2", "Adam second-moment decay"},
        {"adam_epsilon", "Adam epsilon"},
        {"weight_decay", "decoupled weight decay"},
        {"grad_clip_norm", "global gradient norm clip (0 disables)"},
        {"max_steps", "optimizer steps"},
        {"checkpoint_every", "steps between periodic checkpoints (0 disables)"},
        {"mask_strategy", "pure or bert_80_10_10"},
        {"seed", "base seed (overridden by --seed)"},
    };
    return help;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
        throw Error("cannot read " + path.string());
    }
    if (fs::file_size(path, ec) == 0) {
        return {};
    }
    return load_corpus(path, LanguageTag::unknown).document.lines;
}

fs::path corpus_file(const fs::path& path, const char* split) {
    std::error_code ec;
    return fs::is_directory(path, ec) ? path / (std::string(split) + ".txt") : path;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << content;
    if (!out) {
        throw Error("failed writing " + path.string());
    }
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
    std::string text;
    for (const auto& line : lines) {
        text += line;
        text += '\n';
    }
    write_file(path, text);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

std::pair<LanguageTag, fs::path> parse_input(const std::string& arg) {
    const auto colon = arg.find(':');
    if (colon != std::string::npos) {
        const std::string prefix = arg.substr(0, colon);
        for (LanguageTag tag : kAllLanguages) {
            if (prefix == to_string(tag)) {
                return {tag, arg.substr(colon + 1)};
            }
        }
    }
    return {LanguageTag::unknown, arg};
}

struct PrepArgs {
    std::vector<std::string> inputs;
    std::string out;
    std::string config;
    std::uint64_t seed = 0;
    std::optional<std::string> split_ratios;
    std::optional<std::string> min_letter_ratio;
    std::optional<std::string> min_chars;
};

int cmd_prep(const PrepArgs& a, std::ostream& out) {
    KeyValues kv = a.config.empty() ? KeyValues{} : KeyValues::read(a.config);
    if (a.split_ratios) kv.set("split_ratios", *a.split_ratios);
    if (a.min_letter_ratio) kv.set("min_letter_ratio", *a.min_letter_ratio);
    if (a.min_chars) kv.set("min_chars", *a.min_chars);
    static constexpr std::array<std::string_view, 3> known{"split_ratios", "min_letter_ratio", "min_chars"};
    kv.require_known(known);
    KeyValues filter_kv;
    for (const auto& [k, v] : kv.entries()) {
        if (k != "split_ratios") filter_kv.set(k, v);
    }
    const FilterConfig rules = FilterConfig::from(filter_kv);
    const SplitRatios ratios =
        kv.contains("split_ratios") ? parse_split_ratios(kv.get_string("split_ratios")) : SplitRatios{};

    Corpus corpus;
    for (const std::string& spec : a.inputs) {
        const auto [tag, path] = parse_input(spec);
        const LoadedDocument loaded = load_corpus(path, tag);
        const FilterResult filtered = filter_lines(loaded.document, rules);
        out << path.string() << ": " << filtered.kept.size() << " kept, " << filtered.dropped.size()
            << " dropped";
        if (loaded.replaced_sequences > 0) {
            out << ", " << loaded.replaced_sequences << " invalid UTF-8 sequences replaced";
        }
        out << '\n';
        corpus.append(filtered.kept, tag);
    }
    if (corpus.empty()) {
        throw Error("empty corpus after filtering");
    }
    const Corpus split = split_corpus(corpus, ratios, a.seed);
    const fs::path dir(a.out);
    ensure_dir(dir);
    write_lines(dir / "train.txt", split.lines_in(Split::train));
    write_lines(dir / "valid.txt", split.lines_in(Split::valid));
    write_lines(dir / "test.txt", split.lines_in(Split::test));
    const CorpusStats stats = corpus_stats(split);
    const std::string table = render_stats_table(stats);
    write_file(dir / "stats.txt", table);
    write_file(dir / "stats.kv", render_stats_kv(stats));
    out << table;
    return 0;
}

struct TokenizeArgs {
    std::string corpus;
    std::string out;
    std::size_t vocab_size = 2000;
    std::uint64_t seed = 0;
};

int cmd_tokenize(const TokenizeArgs& a, std::ostream& out) {
    const auto lines = read_lines(corpus_file(a.corpus, "train"));
    if (lines.empty()) {
        throw Error("tokenizer corpus " + a.corpus + " is empty");
    }
    Corpus corpus;
    corpus.append(lines, LanguageTag::unknown);
    const Tokenizer tok = train_bpe(corpus.lines(), a.vocab_size);
    ensure_dir(a.out);
    tok.save(a.out);
    out << "vocab size: " << tok.vocab_size() << " (" << tok.alphabet().size() << " symbols, "
        << tok.merges().size() << " merges)\n";
    return 0;
}

struct TrainArgs {
    std::string corpus;
    std::string tokenizer;
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::map<std::string, std::string> overrides;
};

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
    KeyValues kv = a.config.empty() ? KeyValues{} : KeyValues::read(a.config);
    for (const auto& [key, value] : a.overrides) {
        if (sub.count("--" + key) > 0) {
            kv.set(key, value);
        }
    }
    TrainConfig cfg = TrainConfig::from(kv);
    if (a.seed) {
        cfg.seed = *a.seed;
    }
    const Tokenizer tok = Tokenizer::load(a.tokenizer);
    if (kv.contains("vocab_size") && cfg.model.vocab_size != tok.vocab_size()) {
        out << "vocab_size: using the tokenizer's " << tok.vocab_size() << " tokens instead of "
            << cfg.model.vocab_size << '\n';
    }
    cfg.model.vocab_size = tok.vocab_size();
    cfg.validate();

    const fs::path corpus(a.corpus);
    const auto train_lines = read_lines(corpus_file(corpus, "train"));
    std::vector<std::string> valid_lines;
    std::error_code ec;
    if (fs::is_directory(corpus, ec) && fs::exists(corpus / "valid.txt", ec)) {
        valid_lines = read_lines(corpus / "valid.txt");
    }

    Model<float> model = Model<float>::create(cfg.model, cfg.seed);
    out << "number_of_parameters: " << model.parameter_count() << '\n';
    if (cfg.number_of_parameters && *cfg.number_of_parameters != model.parameter_count()) {
        out << "note: configured number_of_parameters " << *cfg.number_of_parameters
            << " differs from the model's count\n";
    }

    const fs::path dir(a.out);
    ensure_dir(dir);
    TrainCallbacks callbacks;
    callbacks.on_checkpoint = [&](std::size_t step, const Model<float>& m) {
        save_checkpoint(m, dir / ("checkpoint-" + std::to_string(step) + ".ckpt"));
    };
    const std::size_t report_every = std::max<std::size_t>(1, cfg.max_steps / 10);
    callbacks.on_step = [&](std::size_t step, double loss) {
        if (step % report_every == 0 || step == cfg.max_steps) {
            out << "step " << step << " loss " << format_double(loss) << '\n';
        }
    };
    const TrainLog log = train(model, tok, train_lines, valid_lines, cfg, callbacks);
    save_checkpoint(model, dir / "model.ckpt");
    write_file(dir / "train_loss.csv", log.train_csv());
    write_file(dir / "eval_loss.csv", log.eval_csv());
    KeyValues effective = cfg.to_key_values();
    effective.set("number_of_parameters", std::to_string(model.parameter_count()));
    write_file(dir / "config.kv", effective.render());
    if (!log.eval_loss.empty()) {
        out << "final eval loss " << format_double(log.eval_loss.back()) << '\n';
    }
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string tokenizer;
    std::string test;
    std::string out;
    std::string name = "mlmkit";
    std::size_t k = 10;
    std::uint64_t seed = 0;
    std::size_t batch_size = 8;
    double masking_probability = 0.15;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const Model<float> model = load_checkpoint(a.checkpoint);
    const Tokenizer tok = Tokenizer::load(a.tokenizer);
    const auto lines = read_lines(corpus_file(a.test, "test"));
    if (lines.empty()) {
        throw Error("test split " + a.test + " is empty");
    }
    EvalOptions opts;
    opts.k = a.k;
    opts.seed = a.seed;
    opts.batch_size = a.batch_size;
    opts.masking_probability = a.masking_probability;
    const EvalResult result = evaluate_model(model, tok, lines, opts);
    const std::vector<std::pair<std::string, EvalReport>> rows{{a.name, result.report}};
    const std::string table = render_report_table(rows);
    const std::string kv = result.report.to_key_values().render();
    out << table << kv;
    if (!a.out.empty()) {
        const fs::path dir(a.out);
        ensure_dir(dir);
        write_file(dir / "report.txt", table);
        write_file(dir / "report.kv", kv);
        write_file(dir / "predictions.tsv", render_prediction_dump(result.records));
    }
    return 0;
}

struct FillArgs {
    std::string checkpoint;
    std::string tokenizer;
    std::string text;
    std::size_t k = 5;
};

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

int cmd_fill_mask(const FillArgs& a, std::ostream& out) {
    if (a.text.find(kMaskText) == std::string::npos) {
        throw Error("input has no <MASK> token; usage: mlmkit fill-mask --text \"wicasa kin <MASK> yanke\"");
    }
    const Model<float> model = load_checkpoint(a.checkpoint);
    const Tokenizer tok = Tokenizer::load(a.tokenizer);
    const FillMaskResult r = predict_topk(model, tok, a.text, a.k);
    for (std::size_t m = 0; m < r.masks.size(); ++m) {
        const MaskPrediction& p = r.masks[m];
        out << "mask " << (m + 1) << " (position " << p.position << ")\n";
        for (const Candidate& c : p.candidates) {
            out << "  " << c.rank << "  " << c.token << "  " << fixed(c.probability, 6) << '\n';
        }
    }
    out << "filled: " << r.filled_text << '\n';
    out << "perplexity:";
    for (const MaskPrediction& p : r.masks) {
        out << ' ' << p.candidates.front().token << '=' << fixed(p.perplexity, 4);
    }
    out << '\n';
    out << "sequence perplexity: " << fixed(r.perplexity, 4) << '\n';
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Masked language model toolkit: corpus prep, BPE, training, evaluation"};
    app.name("mlmkit");
    app.require_subcommand(1);
    app.set_version_flag("--version", "mlmkit 0.1.0");

    PrepArgs prep;
    auto* p = app.add_subcommand("prep", "Normalize, filter and split raw text");
    p->add_option("--input", prep.inputs, "[language:]path of a raw one-sentence-per-line file")->required();
    p->add_option("--out", prep.out, "output directory")->required();
    p->add_option("--config", prep.config, "key=value file (split_ratios, min_letter_ratio, min_chars)");
    p->add_option("--seed", prep.seed, "split seed");
    p->add_option("--split_ratios", prep.split_ratios, "train,valid,test fractions");
    p->add_option("--min_letter_ratio", prep.min_letter_ratio, "drop lines with fewer letters than this");
    p->add_option("--min_chars", prep.min_chars, "drop lines shorter than this");

    TokenizeArgs tokenize;
    auto* t = app.add_subcommand("tokenize", "Train a BPE tokenizer");
    t->add_option("--corpus", tokenize.corpus, "prepared corpus directory or text file")->required();
    t->add_option("--out", tokenize.out, "output directory for vocab.txt and merges.txt")->required();
    t->add_option("--vocab_size", tokenize.vocab_size, "maximum vocabulary size")->capture_default_str();
    t->add_option("--seed", tokenize.seed, "accepted for uniformity; BPE is deterministic");

    TrainArgs train_args;
    auto* tr = app.add_subcommand("train", "Train a masked language model");
    tr->add_option("--corpus", train_args.corpus, "prepared corpus directory")->required();
    tr->add_option("--tokenizer", train_args.tokenizer, "tokenizer directory")->required();
    tr->add_option("--out", train_args.out, "output directory")->required();
    tr->add_option("--config", train_args.config, "key=value training config");
    tr->add_option("--seed", train_args.seed, "base seed for init, masking and dropout");
    for (std::string_view key : TrainConfig::keys()) {
        const std::string k(key);
        if (k == "seed") continue;
        tr->add_option("--" + k, train_args.overrides[k], key_help().at(k));
    }

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a test split");
    e->add_option("--checkpoint", eval.checkpoint, "model checkpoint")->required();
    e->add_option("--tokenizer", eval.tokenizer, "tokenizer directory")->required();
    e->add_option("--test", eval.test, "test file or prepared corpus directory")->required();
    e->add_option("--out", eval.out, "directory for report.txt, report.kv and predictions.tsv");
    e->add_option("--name", eval.name, "model label in the report")->capture_default_str();
    e->add_option("--k", eval.k, "Hit@k cutoff and dump depth")->capture_default_str();
    e->add_option("--seed", eval.seed, "masking seed")->capture_default_str();
    e->add_option("--batch_size", eval.batch_size, key_help().at("batch_size"))->capture_default_str();
    e->add_option("--masking_probability", eval.masking_probability, key_help().at("masking_probability"))
        ->capture_default_str();

    FillArgs fill;
    auto* f = app.add_subcommand("fill-mask", "Rank candidates for each <MASK> in a sentence");
    f->add_option("--checkpoint", fill.checkpoint, "model checkpoint")->required();
    f->add_option("--tokenizer", fill.tokenizer, "tokenizer directory")->required();
    f->add_option("--text", fill.text, "sentence containing <MASK>")->required();
    f->add_option("--k", fill.k, "candidates per mask")->capture_default_str();

    try {
        std::vector<std::string> args;
        for (int i = argc - 1; i > 0; --i) {
            args.emplace_back(argv[i]);
        }
        app.parse(args);
    } catch (const CLI::ParseError& ex) {
        return app.exit(ex, out, err) == 0 ? 0 : 1;
    }

    try {
        if (p->parsed()) return cmd_prep(prep, out);
        if (t->parsed()) return cmd_tokenize(tokenize, out);
        if (tr->parsed()) return cmd_train(train_args, *tr, out);
        if (e->parsed()) return cmd_eval(eval, out);
        if (f->parsed()) return cmd_fill_mask(fill, out);
    } catch (const Error& ex) {
        err << "error: " << ex.what() << '\n';
        return 1;
    } catch (const std::exception& ex) {
        err << "internal error: " << ex.what() << '\n';
        return 2;
    }
    return 2;
}

}  // namespace mlmkit::cli
