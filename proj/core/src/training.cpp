#include "mlmkit/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mlmkit/corpus.hpp"
#include "mlmkit/error.hpp"
#include "mlmkit/key_value.hpp"

namespace mlmkit {

std::vector<TokenId> build_stream(const Tokenizer& tokenizer, std::span<const std::string> lines) {
    std::vector<TokenId> stream;
    for (const std::string& line : lines) {
        const auto ids = tokenizer.encode(line);
        if (ids.empty()) {
            continue;
        }
        stream.insert(stream.end(), ids.begin(), ids.end());
        stream.push_back(special::eos);
    }
    return stream;
}

std::vector<Block> pack_blocks(std::span<const TokenId> stream, std::size_t context_size) {
    if (context_size < 2) {
        throw Error("pack_blocks: context size must be at least 2");
    }
    if (stream.empty()) {
        throw Error("pack_blocks: empty token stream");
    }
    std::vector<Block> blocks;
    for (std::size_t begin = 0; begin < stream.size(); begin += context_size) {
        const std::size_t n = std::min(context_size, stream.size() - begin);
        Block b;
        b.ids.assign(stream.begin() + static_cast<std::ptrdiff_t>(begin),
                     stream.begin() + static_cast<std::ptrdiff_t>(begin + n));
        b.pad.assign(n, 0);
        b.ids.resize(context_size, special::pad);
        b.pad.resize(context_size, 1);
        blocks.push_back(std::move(b));
    }
    return blocks;
}

bool maskable(const Block& b) {
    for (std::size_t i = 0; i < b.ids.size(); ++i) {
        if (b.pad[i] == 0 && !is_special(b.ids[i])) {
            return true;
        }
    }
    return false;
}

std::vector<Block> maskable_blocks(std::vector<Block> blocks) {
    std::erase_if(blocks, [](const Block& b) { return !maskable(b); });
    return blocks;
}

std::string_view to_string(MaskStrategy s) {
    switch (s) {
        case MaskStrategy::pure:
            return "pure";
        case MaskStrategy::bert_80_10_10:
            return "bert_80_10_10";
    }
    return "pure";
}

MaskStrategy parse_mask_strategy(std::string_view name) {
    if (name == "pure") {
        return MaskStrategy::pure;
    }
    if (name == "bert_80_10_10" || name == "bert") {
        return MaskStrategy::bert_80_10_10;
    }
    throw Error("unknown mask strategy '" + std::string(name) + "' (expected pure or bert_80_10_10)");
}

std::size_t MaskedBatch::label_count() const {
    std::size_t n = 0;
    for (const auto& l : labels) {
        n += l.size();
    }
    return n;
}

std::vector<num::Target> MaskedBatch::targets() const {
    std::vector<num::Target> out;
    out.reserve(label_count());
    for (std::size_t s = 0; s < labels.size(); ++s) {
        for (const MaskLabel& l : labels[s]) {
            out.push_back({s * length + l.position, l.original});
        }
    }
    return out;
}

TokenBatch make_batch(std::span<const Block> blocks) {
    TokenBatch b;
    b.batch = blocks.size();
    b.length = blocks.empty() ? 0 : blocks.front().ids.size();
    b.ids.reserve(b.batch * b.length);
    b.pad.reserve(b.batch * b.length);
    for (const Block& blk : blocks) {
        if (blk.ids.size() != b.length || blk.pad.size() != b.length) {
            throw ShapeError("make_batch: blocks differ in length");
        }
        b.ids.insert(b.ids.end(), blk.ids.begin(), blk.ids.end());
        b.pad.insert(b.pad.end(), blk.pad.begin(), blk.pad.end());
    }
    return b;
}

MaskedBatch mask_batch(std::span<const Block> blocks, const MaskingOptions& options, std::uint64_t seed) {
    if (!(options.probability > 0.0 && options.probability <= 1.0)) {
        throw Error("masking probability must lie in (0, 1], got " + format_double(options.probability));
    }
    if (options.strategy == MaskStrategy::bert_80_10_10 && options.vocab_size <= special::count) {
        throw Error("bert_80_10_10 masking needs a vocabulary larger than the special tokens");
    }
    MaskedBatch out;
    static_cast<TokenBatch&>(out) = make_batch(blocks);
    out.labels.resize(out.batch);
    Rng rng(seed);
    std::vector<std::size_t> eligible;
    for (std::size_t s = 0; s < out.batch; ++s) {
        TokenId* ids = out.ids.data() + s * out.length;
        const std::uint8_t* pad = out.pad.data() + s * out.length;
        eligible.clear();
        for (std::size_t i = 0; i < out.length; ++i) {
            if (pad[i] == 0 && !is_special(ids[i])) {
                eligible.push_back(i);
            }
        }
        if (eligible.empty()) {
            throw Error("mask_batch: sequence " + std::to_string(s) + " has no maskable position");
        }
        std::vector<std::size_t> chosen;
        for (std::size_t i : eligible) {
            if (rng.bernoulli(options.probability)) {
                chosen.push_back(i);
            }
        }
        if (chosen.empty()) {
            chosen.push_back(eligible[rng.below(eligible.size())]);
        }
        for (std::size_t i : chosen) {
            out.labels[s].push_back({i, ids[i]});
            if (options.strategy == MaskStrategy::pure) {
                ids[i] = special::mask;
                continue;
            }
            const double u = rng.uniform();
            if (u < 0.8) {
                ids[i] = special::mask;
            } else if (u < 0.9) {
                const auto span = options.vocab_size - special::count;
                ids[i] = static_cast<TokenId>(special::count + rng.below(span));
            }
        }
    }
    return out;
}

template <typename T>
num::Tensor<T> mlm_loss(const num::Tensor<T>& logits, const MaskedBatch& batch) {
    const auto targets = batch.targets();
    return num::cross_entropy_masked(logits, std::span<const num::Target>(targets));
}

template num::Tensor<float> mlm_loss(const num::Tensor<float>&, const MaskedBatch&);
template num::Tensor<double> mlm_loss(const num::Tensor<double>&, const MaskedBatch&);

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

bool decays(std::string_view name) {
    if (ends_with(name, ".bias") || ends_with(name, "output_bias")) {
        return false;
    }
    if (ends_with(name, ".gamma") || ends_with(name, ".beta")) {
        return false;
    }
    return true;
}

template <typename T>
void adam_step(std::span<NamedTensor<T>> params, AdamState& state, double learning_rate) {
    const AdamOptions& o = state.options;
    const double lr = learning_rate > 0.0 ? learning_rate : o.learning_rate;
    if (state.first_moment.empty()) {
        state.first_moment.resize(params.size());
        state.second_moment.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i].assign(params[i].tensor.numel(), 0.0);
            state.second_moment[i].assign(params[i].tensor.numel(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam_step: optimizer state does not match the parameter list");
    }
    for (const auto& p : params) {
        for (T g : p.tensor.grad()) {
            if (!std::isfinite(static_cast<double>(g))) {
                throw Error("non-finite gradient in " + p.name);
            }
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        auto w = p.tensor.data();
        const auto g = p.tensor.grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        const bool wd = o.weight_decay > 0.0 && decays(p.name);
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = static_cast<double>(g[j]);
            m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * gj;
            v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * gj * gj;
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            double wj = static_cast<double>(w[j]);
            if (wd) {
                wj -= lr * o.weight_decay * wj;
            }
            wj -= lr * mhat / (std::sqrt(vhat) + o.epsilon);
            w[j] = static_cast<T>(wj);
        }
    }
}

template <typename T>
double clip_grad_norm(std::span<NamedTensor<T>> params, double max_norm) {
    double sq = 0;
    for (const auto& p : params) {
        for (T g : p.tensor.grad()) {
            sq += static_cast<double>(g) * static_cast<double>(g);
        }
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const T factor = static_cast<T>(max_norm / (norm + 1e-12));
        for (auto& p : params) {
            for (T& g : p.tensor.grad()) {
                g *= factor;
            }
        }
    }
    return norm;
}

template void adam_step(std::span<NamedTensor<float>>, AdamState&, double);
template void adam_step(std::span<NamedTensor<double>>, AdamState&, double);
template double clip_grad_norm(std::span<NamedTensor<float>>, double);
template double clip_grad_norm(std::span<NamedTensor<double>>, double);

std::vector<std::string_view> TrainConfig::keys() {
    std::vector<std::string_view> out(ModelConfig::kKeys.begin(), ModelConfig::kKeys.end());
    out.insert(out.end(), kTrainingKeys.begin(), kTrainingKeys.end());
    return out;
}

TrainConfig TrainConfig::from(const KeyValues& kv) {
    kv.require_known(keys());
    TrainConfig c;
    c.apply(kv);
    return c;
}

void TrainConfig::apply(const KeyValues& kv) {
    model.apply(kv);
    if (kv.contains("batch_size")) batch_size = kv.get_uint("batch_size");
    if (kv.contains("masking_probability")) masking_probability = kv.get_double("masking_probability");
    if (kv.contains("torch_dtype")) torch_dtype = kv.get_string("torch_dtype");
    if (kv.contains("number_of_parameters")) number_of_parameters = kv.get_uint("number_of_parameters");
    if (kv.contains("learning_rate")) learning_rate = kv.get_double("learning_rate");
    if (kv.contains("warmup_fraction")) warmup_fraction = kv.get_double("warmup_fraction");
    if (kv.contains("adam_beta1")) adam_beta1 = kv.get_double("adam_beta1");
    if (kv.contains("adam_beta2")) adam_beta2 = kv.get_double("adam_beta2");
    if (kv.contains("adam_epsilon")) adam_epsilon = kv.get_double("adam_epsilon");
    if (kv.contains("weight_decay")) weight_decay = kv.get_double("weight_decay");
    if (kv.contains("grad_clip_norm")) grad_clip_norm = kv.get_double("grad_clip_norm");
    if (kv.contains("max_steps")) max_steps = kv.get_uint("max_steps");
    if (kv.contains("checkpoint_every")) checkpoint_every = kv.get_uint("checkpoint_every");
    if (kv.contains("mask_strategy")) mask_strategy = parse_mask_strategy(kv.get_string("mask_strategy"));
    if (kv.contains("seed")) seed = kv.get_uint("seed");
}

KeyValues TrainConfig::to_key_values() const {
    KeyValues kv = model.to_key_values();
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("masking_probability", format_double(masking_probability));
    kv.set("torch_dtype", torch_dtype);
    kv.set("number_of_parameters", std::to_string(number_of_parameters.value_or(model.parameter_count())));
    kv.set("learning_rate", format_double(learning_rate));
    kv.set("warmup_fraction", format_double(warmup_fraction));
    kv.set("adam_beta1", format_double(adam_beta1));
    kv.set("adam_beta2", format_double(adam_beta2));
    kv.set("adam_epsilon", format_double(adam_epsilon));
    kv.set("weight_decay", format_double(weight_decay));
    kv.set("grad_clip_norm", format_double(grad_clip_norm));
    kv.set("max_steps", std::to_string(max_steps));
    kv.set("checkpoint_every", std::to_string(checkpoint_every));
    kv.set("mask_strategy", std::string(to_string(mask_strategy)));
    kv.set("seed", std::to_string(seed));
    return kv;
}

void TrainConfig::validate() const {
    model.validate();
    if (batch_size == 0) {
        throw Error("batch_size must be positive");
    }
    if (!(masking_probability > 0.0 && masking_probability <= 1.0)) {
        throw Error("masking_probability must lie in (0, 1], got " + format_double(masking_probability));
    }
    if (torch_dtype != "float32") {
        throw Error("torch_dtype '" + torch_dtype + "' is not supported (only float32)");
    }
    if (!(learning_rate > 0.0)) {
        throw Error("learning_rate must be positive");
    }
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
        throw Error("warmup_fraction must lie in [0, 1]");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw Error("adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) {
        throw Error("adam_epsilon must be positive");
    }
    if (!(weight_decay >= 0.0) || !(grad_clip_norm >= 0.0)) {
        throw Error("weight_decay and grad_clip_norm must be non-negative");
    }
}

AdamOptions TrainConfig::adam() const {
    return {learning_rate, adam_beta1, adam_beta2, adam_epsilon, weight_decay};
}

double TrainConfig::learning_rate_at(std::size_t step) const {
    const auto warmup = static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(max_steps)));
    if (warmup == 0 || step >= warmup) {
        return learning_rate;
    }
    return learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

std::string TrainLog::train_csv() const {
    std::ostringstream out;
    out << "step,loss\n";
    for (std::size_t i = 0; i < steps.size(); ++i) {
        out << steps[i] << ',' << format_double(train_loss[i]) << '\n';
    }
    return out.str();
}

std::string TrainLog::eval_csv() const {
    std::ostringstream out;
    out << "epoch,eval_loss\n";
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        out << epochs[i] << ',' << format_double(eval_loss[i]) << '\n';
    }
    return out.str();
}

double evaluate_loss(const Model<float>& model, std::span<const Block> blocks, const MaskingOptions& masking,
                     std::uint64_t seed, std::size_t batch_size) {
    if (blocks.empty()) {
        throw Error("evaluate_loss: no blocks");
    }
    double total = 0;
    std::size_t labels = 0;
    for (std::size_t b = 0, bi = 0; b < blocks.size(); b += batch_size, ++bi) {
        const auto chunk = blocks.subspan(b, std::min(batch_size, blocks.size() - b));
        const MaskedBatch batch = mask_batch(chunk, masking, derive_seed(seed, "batch", bi));
        const auto logits = model.forward(batch, num::Mode::eval);
        const double loss = static_cast<double>(mlm_loss(logits, batch).item());
        total += loss * static_cast<double>(batch.label_count());
        labels += batch.label_count();
    }
    return total / static_cast<double>(labels);
}

TrainLog train(Model<float>& model, const Tokenizer& tokenizer, std::span<const std::string> train_lines,
               std::span<const std::string> valid_lines, const TrainConfig& config,
               const TrainCallbacks& callbacks) {
    config.validate();
    if (model.config().vocab_size != tokenizer.vocab_size()) {
        throw Error("model vocab_size " + std::to_string(model.config().vocab_size) +
                    " does not match tokenizer vocabulary " + std::to_string(tokenizer.vocab_size()));
    }
    TrainLog log;
    if (config.max_steps == 0) {
        return log;
    }
    const std::size_t context = model.config().context_size;
    const auto train_stream = build_stream(tokenizer, train_lines);
    if (train_stream.empty()) {
        throw Error("training split is empty");
    }
    const auto train_blocks = maskable_blocks(pack_blocks(train_stream, context));
    if (train_blocks.empty()) {
        throw Error("training split has no maskable tokens");
    }
    const auto valid_stream = build_stream(tokenizer, valid_lines);
    const auto valid_blocks =
        valid_stream.empty() ? std::vector<Block>{} : maskable_blocks(pack_blocks(valid_stream, context));

    MaskingOptions masking{config.masking_probability, config.mask_strategy, tokenizer.vocab_size()};
    MaskingOptions eval_masking{config.masking_probability, MaskStrategy::pure, tokenizer.vocab_size()};
    const std::uint64_t eval_seed = derive_seed(config.seed, "eval-mask");

    std::vector<NamedTensor<float>> params = model.parameters();
    AdamState adam{config.adam(), 0, {}, {}};
    std::size_t step = 0;
    std::size_t epoch = 0;
    while (step < config.max_steps) {
        std::vector<Block> order(train_blocks.begin(), train_blocks.end());
        Rng order_rng(derive_seed(config.seed, "order", epoch));
        order_rng.shuffle(order);
        const std::uint64_t epoch_seed = derive_seed(config.seed, "mask", epoch);
        for (std::size_t b = 0, bi = 0; b < order.size() && step < config.max_steps;
             b += config.batch_size, ++bi) {
            const auto start = std::chrono::steady_clock::now();
            const auto chunk =
                std::span<const Block>(order).subspan(b, std::min(config.batch_size, order.size() - b));
            const MaskedBatch batch = mask_batch(chunk, masking, derive_seed(epoch_seed, "batch", bi));
            Rng dropout_rng(derive_seed(config.seed, "dropout", step));
            const auto logits = model.forward(batch, num::Mode::train, &dropout_rng);
            const auto loss = mlm_loss(logits, batch);
            const double value = static_cast<double>(loss.item());
            if (!std::isfinite(value)) {
                throw Error("training diverged: non-finite loss at step " + std::to_string(step + 1));
            }
            model.zero_grad();
            num::backward(loss);
            clip_grad_norm(std::span<NamedTensor<float>>(params), config.grad_clip_norm);
            adam_step(std::span<NamedTensor<float>>(params), adam, config.learning_rate_at(step));
            ++step;
            const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
            log.steps.push_back(step);
            log.train_loss.push_back(value);
            log.step_seconds.push_back(elapsed.count());
            if (callbacks.on_step) {
                callbacks.on_step(step, value);
            }
            if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && callbacks.on_checkpoint) {
                callbacks.on_checkpoint(step, model);
            }
        }
        ++epoch;
        if (!valid_blocks.empty()) {
            log.epochs.push_back(epoch);
            log.eval_loss.push_back(evaluate_loss(model, valid_blocks, eval_masking, eval_seed, config.batch_size));
        }
    }
    return log;
}

TrainLog train(Model<float>& model, const Tokenizer& tokenizer, const Corpus& corpus, const TrainConfig& config,
               const TrainCallbacks& callbacks) {
    const auto train_lines = corpus.lines_in(Split::train);
    const auto valid_lines = corpus.lines_in(Split::valid);
    if (train_lines.empty() || valid_lines.empty()) {
        throw Error("corpus needs non-empty train and valid splits");
    }
    return train(model, tokenizer, train_lines, valid_lines, config, callbacks);
}

}  // namespace mlmkit
