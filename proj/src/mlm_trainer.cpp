#include "numanchor/mlm_trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "numanchor/errors.hpp"
#include "numanchor/masking.hpp"
#include "numanchor/numeral_parser.hpp"
#include "numanchor/text_util.hpp"

namespace numanchor {

namespace {

using json = nlohmann::json;

constexpr std::size_t kEvalSubset = 256;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr char kMagic[8] = {'N', 'A', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

double global_norm(const EncoderWeights<float>& g) {
    double sq = 0.0;
    for (const auto& [name, m] : g.named()) sq += static_cast<double>(m->squaredNorm());
    return std::sqrt(sq);
}

void adam_step(EncoderWeights<float>& w, const EncoderWeights<float>& g, EncoderWeights<float>& m,
               EncoderWeights<float>& v, double lr, std::size_t t) {
    const auto W = w.named();
    const auto G = g.named();
    const auto M = m.named();
    const auto V = v.named();
    const float b1 = static_cast<float>(kBeta1), b2 = static_cast<float>(kBeta2);
    const float c1 = static_cast<float>(1.0 - std::pow(kBeta1, static_cast<double>(t)));
    const float c2 = static_cast<float>(1.0 - std::pow(kBeta2, static_cast<double>(t)));
    const float step = static_cast<float>(lr);
    const float eps = static_cast<float>(kAdamEps);
    for (std::size_t i = 0; i < W.size(); ++i) {
        auto& mi = *M[i].second;
        auto& vi = *V[i].second;
        const auto& gi = *G[i].second;
        mi = b1 * mi + (1.0f - b1) * gi;
        vi = b2 * vi + (1.0f - b2) * gi.cwiseAbs2();
        W[i].second->array() -= step * (mi.array() / c1) / ((vi.array() / c2).sqrt() + eps);
    }
}

template <typename U>
void put(std::string& out, U value) {
    static_assert(std::is_trivially_copyable_v<U>);
    if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
        unsigned char b[sizeof(U)];
        std::memcpy(b, &value, sizeof(U));
        std::reverse(b, b + sizeof(U));
        out.append(reinterpret_cast<const char*>(b), sizeof(U));
    } else {
        out.append(reinterpret_cast<const char*>(&value), sizeof(U));
    }
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        unsigned char b[sizeof(U)];
        std::memcpy(b, bytes_.data() + pos_, sizeof(U));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
        pos_ += sizeof(U);
        U value;
        std::memcpy(&value, b, sizeof(U));
        return value;
    }

    std::string_view take(std::size_t n) {
        need(n);
        const auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CorruptionError("checkpoint truncated");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::string tensor_bytes(const EncoderWeights<float>& w) {
    std::string out;
    const auto named = w.named();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, m] : named) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint64_t>(out, static_cast<std::uint64_t>(m->rows()));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(m->cols()));
        for (Eigen::Index i = 0; i < m->size(); ++i) put<float>(out, m->data()[i]);
    }
    return out;
}

json config_to_json(const EncoderConfig& c) {
    return json{{"layers", c.layers},
                {"hidden", c.hidden},
                {"heads", c.heads},
                {"ffn", c.ffn},
                {"max_seq_len", c.max_seq_len},
                {"dropout", c.dropout},
                {"seed", c.seed},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"warmup_fraction", c.warmup_fraction},
                {"grad_clip", c.grad_clip},
                {"masking", c.masking == MaskingMode::Anchor ? "anchor" : "random"},
                {"random_mask_rate", c.random_mask_rate}};
}

EncoderConfig config_from_json(const json& j) {
    EncoderConfig c;
    c.layers = j.at("layers").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.ffn = j.at("ffn").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.warmup_fraction = j.at("warmup_fraction").get<double>();
    c.grad_clip = j.at("grad_clip").get<double>();
    const auto masking = j.at("masking").get<std::string>();
    if (masking != "anchor" && masking != "random") throw CorruptionError("unknown masking mode '" + masking + "'");
    c.masking = masking == "anchor" ? MaskingMode::Anchor : MaskingMode::Random;
    c.random_mask_rate = j.at("random_mask_rate").get<double>();
    return c;
}

}  // namespace

std::string EncoderCheckpoint::id() const { return sha256_hex(tensor_bytes(weights)).substr(0, 16); }

double scheduled_learning_rate(const EncoderConfig& config, std::size_t step, std::size_t total_steps) {
    if (total_steps == 0) return 0.0;
    const auto warmup = static_cast<std::size_t>(std::floor(config.warmup_fraction * static_cast<double>(total_steps)));
    if (step < warmup) {
        return config.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    const double remaining = static_cast<double>(total_steps - std::min(step, total_steps));
    return config.learning_rate * remaining / static_cast<double>(total_steps - warmup);
}

EncoderCheckpoint train_mlm(const EncoderConfig& config, const std::vector<std::vector<std::string>>& corpus,
                            const Vocab& vocab, const TrainProgress& progress) {
    config.validate();
    if (corpus.empty()) throw ConfigError("training corpus is empty");

    EncoderCheckpoint ckpt;
    ckpt.config = config;
    ckpt.vocab = vocab;
    ckpt.numeral_ids = numeral_token_ids(vocab, corpus);

    // Encode. Anchor masking is fixed per sequence; random masking is redrawn every epoch.
    std::vector<std::vector<TokenId>> encoded;
    std::vector<MaskedSequence> fixed;
    for (const auto& doc : corpus) {
        auto ids = truncate_sequence(vocab.encode(doc), config.max_seq_len);
        if (config.masking == MaskingMode::Anchor) {
            auto masked = mask_anchor_tokens(ids);
            if (!masked) {
                ++ckpt.skipped_sequences;
                continue;
            }
            fixed.push_back(std::move(*masked));
        } else {
            if (ids.empty()) {
                ++ckpt.skipped_sequences;
                continue;
            }
            encoded.push_back(std::move(ids));
        }
    }
    const std::size_t n = config.masking == MaskingMode::Anchor ? fixed.size() : encoded.size();
    if (n == 0) throw ConfigError("no trainable sequences: nothing to mask in the corpus");
    ckpt.training_sequences = n;

    auto order_rng = stream_rng(config.seed, 1);
    auto dropout_rng = stream_rng(config.seed, 2);
    auto mask_rng = stream_rng(config.seed, 3);
    auto eval_rng = stream_rng(config.seed, 4);
    const std::size_t V = vocab.size();

    // Fixed evaluation subset.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> eval_pick = order;
    std::shuffle(eval_pick.begin(), eval_pick.end(), eval_rng);
    eval_pick.resize(std::min(kEvalSubset, n));
    std::sort(eval_pick.begin(), eval_pick.end());
    std::vector<MaskedSequence> eval_set;
    for (auto i : eval_pick) {
        if (config.masking == MaskingMode::Anchor) {
            eval_set.push_back(fixed[i]);
        } else if (auto m = mask_random_tokens(encoded[i], V, config.random_mask_rate, eval_rng)) {
            eval_set.push_back(std::move(*m));
        }
    }

    TransformerEncoder<float> encoder(config, V);
    ckpt.initial_eval_loss = encoder.loss(eval_set);

    auto grads = encoder.weights().zeros_like();
    auto adam_m = grads;
    auto adam_v = grads;
    const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = steps_per_epoch * config.epochs;
    std::size_t step = 0;
    std::vector<MaskedSequence> batch;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        double epoch_total = 0.0;
        std::size_t epoch_batches = 0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            batch.clear();
            const std::size_t end = std::min(n, (b + 1) * config.batch_size);
            for (std::size_t k = b * config.batch_size; k < end; ++k) {
                if (config.masking == MaskingMode::Anchor) {
                    batch.push_back(fixed[order[k]]);
                } else if (auto m = mask_random_tokens(encoded[order[k]], V, config.random_mask_rate, mask_rng)) {
                    batch.push_back(std::move(*m));
                }
            }
            const double lr = scheduled_learning_rate(config, step, total_steps);
            ++step;
            grads.set_zero();
            const double loss = encoder.loss_and_gradients(batch, grads, &dropout_rng);
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << b << " (step " << step
                    << "), learning rate " << lr;
                throw TrainingDivergedError(msg.str());
            }
            if (config.grad_clip > 0.0) {
                const double norm = global_norm(grads);
                if (!std::isfinite(norm)) {
                    throw TrainingDivergedError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                                                std::to_string(b) + ", learning rate " + format_double(lr));
                }
                if (norm > config.grad_clip) {
                    const float s = static_cast<float>(config.grad_clip / norm);
                    for (auto& [name, m] : grads.named()) *m *= s;
                }
            }
            adam_step(encoder.weights(), grads, adam_m, adam_v, lr, step);
            const TrainingLogEntry entry{epoch, step, loss};
            ckpt.log.push_back(entry);
            if (progress) progress(entry);
            epoch_total += loss;
            ++epoch_batches;
        }
        ckpt.epoch_losses.push_back(epoch_batches ? epoch_total / static_cast<double>(epoch_batches) : 0.0);
    }
    ckpt.final_eval_loss = encoder.loss(eval_set);
    ckpt.weights = encoder.weights();
    return ckpt;
}

std::string format_training_log(const std::vector<TrainingLogEntry>& log) {
    std::string out;
    for (const auto& e : log) {
        out += std::to_string(e.epoch) + '\t' + std::to_string(e.step) + '\t' + format_double(e.loss) + '\n';
    }
    return out;
}

std::string serialize_checkpoint(const EncoderCheckpoint& ckpt) {
    json log = json::array();
    for (const auto& e : ckpt.log) log.push_back({e.epoch, e.step, e.loss});
    const json header{{"config", config_to_json(ckpt.config)},
                      {"vocab", ckpt.vocab.tokens()},
                      {"numeral_ids", ckpt.numeral_ids},
                      {"log", log},
                      {"epoch_losses", ckpt.epoch_losses},
                      {"initial_eval_loss", ckpt.initial_eval_loss},
                      {"final_eval_loss", ckpt.final_eval_loss},
                      {"training_sequences", ckpt.training_sequences},
                      {"skipped_sequences", ckpt.skipped_sequences}};
    const std::string text = header.dump();
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint64_t>(out, text.size());
    out += text;
    out += tensor_bytes(ckpt.weights);
    return out;
}

EncoderCheckpoint parse_checkpoint(std::string_view bytes) {
    Reader in(bytes);
    if (in.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
        throw CorruptionError("not a checkpoint file (bad magic)");
    }
    const auto version = in.get<std::uint32_t>();
    if (version != kFormatVersion) throw CorruptionError("unsupported checkpoint version " + std::to_string(version));
    const auto header_len = in.get<std::uint64_t>();
    json header;
    try {
        header = json::parse(in.take(static_cast<std::size_t>(header_len)));
    } catch (const json::exception& e) {
        throw CorruptionError(std::string("checkpoint header: ") + e.what());
    }

    EncoderCheckpoint ckpt;
    try {
        ckpt.config = config_from_json(header.at("config"));
        ckpt.vocab = Vocab(header.at("vocab").get<std::vector<std::string>>());
        ckpt.numeral_ids = header.at("numeral_ids").get<std::vector<TokenId>>();
        for (const auto& e : header.at("log")) {
            ckpt.log.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>()});
        }
        ckpt.epoch_losses = header.at("epoch_losses").get<std::vector<double>>();
        ckpt.initial_eval_loss = header.at("initial_eval_loss").get<double>();
        ckpt.final_eval_loss = header.at("final_eval_loss").get<double>();
        ckpt.training_sequences = header.at("training_sequences").get<std::size_t>();
        ckpt.skipped_sequences = header.at("skipped_sequences").get<std::size_t>();
    } catch (const json::exception& e) {
        throw CorruptionError(std::string("checkpoint header: ") + e.what());
    }

    ckpt.weights.layers.resize(ckpt.config.layers);
    auto named = ckpt.weights.named();
    const auto count = in.get<std::uint32_t>();
    if (count != named.size()) throw CorruptionError("checkpoint tensor count does not match the configuration");
    for (auto& [name, m] : named) {
        const auto len = in.get<std::uint32_t>();
        if (in.take(len) != name) throw CorruptionError("checkpoint tensor order mismatch at '" + name + "'");
        const auto rows = in.get<std::uint64_t>();
        const auto cols = in.get<std::uint64_t>();
        m->resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = in.get<float>();
    }
    if (!in.done()) throw CorruptionError("trailing bytes after checkpoint tensors");
    // Shape validation happens here rather than at first use.
    TransformerEncoder<float> check(ckpt.config, ckpt.weights);
    if (check.vocab_size() != ckpt.vocab.size()) throw CorruptionError("embedding rows do not match the vocabulary");
    return ckpt;
}

void save_checkpoint(const EncoderCheckpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(ckpt));
}

EncoderCheckpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

// ---------------------------------------------------------------------------

NumeralEmbedder::NumeralEmbedder(const EncoderCheckpoint& ckpt, OovPolicy policy)
    : encoder_(ckpt.config, ckpt.weights), vocab_(ckpt.vocab), policy_(policy), checkpoint_id_(ckpt.id()) {
    ckpt.config.validate();
    for (TokenId id : ckpt.numeral_ids) {
        const double value = parse_numeral(vocab_.token(id));
        // "1200" and "1,200" share a value; the more frequent surface wins
        auto [it, fresh] = by_value_.emplace(value, id);
        if (!fresh && it->second > id) it->second = id;
    }
    frame_ = vocab_.encode({"the", "value", "is", "0", "."});
}

std::vector<double> NumeralEmbedder::vocabulary_values() const {
    std::vector<double> out;
    out.reserve(by_value_.size());
    for (const auto& [value, id] : by_value_) out.push_back(value);
    return out;
}

std::vector<Matrix<float>> NumeralEmbedder::forward(double value, bool& in_vocab) const {
    constexpr std::size_t slot = 3;
    auto ids = frame_;
    const auto hit = by_value_.find(value);
    in_vocab = hit != by_value_.end();
    if (in_vocab) {
        ids[slot] = hit->second;
        return encoder_.hidden_states(ids);
    }
    if (!(value >= 0.0) || !std::isfinite(value)) {
        throw UnsupportedShapeError("numeral " + format_double(value) + " does not render to a single token");
    }
    const std::string surface = value == std::floor(value) && value < 1e15
                                    ? std::to_string(static_cast<long long>(value))
                                    : format_double(value);
    const auto pieces = pretokenize(surface);
    if (pieces.size() != 1 || !is_numeral(pieces[0])) {
        throw UnsupportedShapeError("numeral " + surface + " does not render to a single token");
    }
    ids[slot] = Vocab::kUnk;
    if (policy_ == OovPolicy::RawUnk || by_value_.empty()) return encoder_.hidden_states(ids);

    // Nearest numerals by absolute value difference; ties go to the smaller value.
    auto right = by_value_.lower_bound(value);
    auto left = right;
    Eigen::Matrix<float, 1, Eigen::Dynamic> mean = Eigen::Matrix<float, 1, Eigen::Dynamic>::Zero(encoder_.config().hidden);
    std::size_t taken = 0;
    const auto& emb = encoder_.weights().tok_emb;
    while (taken < kNeighbours && (left != by_value_.begin() || right != by_value_.end())) {
        bool use_left = false;
        if (right == by_value_.end()) {
            use_left = true;
        } else if (left != by_value_.begin()) {
            use_left = value - std::prev(left)->first <= right->first - value;
        }
        if (use_left) {
            --left;
            mean += emb.row(left->second);
        } else {
            mean += emb.row(right->second);
            ++right;
        }
        ++taken;
    }
    mean /= static_cast<float>(taken);
    EmbeddingOverride<float> ov{slot, emb.row(Vocab::kUnk) + mean};
    return encoder_.hidden_states(ids, ov);
}

std::vector<std::vector<double>> NumeralEmbedder::layer_taps(double value) const {
    bool in_vocab = false;
    const auto states = forward(value, in_vocab);
    std::vector<std::vector<double>> out;
    for (const auto& s : states) {
        std::vector<double> row(static_cast<std::size_t>(s.cols()));
        for (Eigen::Index j = 0; j < s.cols(); ++j) row[static_cast<std::size_t>(j)] = s(3, j);
        out.push_back(std::move(row));
    }
    return out;
}

NumeralEmbedding NumeralEmbedder::embed_numeral(double value) const {
    bool in_vocab = false;
    const auto states = forward(value, in_vocab);
    NumeralEmbedding out;
    out.value = value;
    out.checkpoint_id = checkpoint_id_;
    out.template_id = kTemplateId;
    out.in_vocabulary = in_vocab;
    out.vector.assign(encoder_.config().hidden, 0.0);
    for (std::size_t l = states.size() - 4; l < states.size(); ++l) {
        for (std::size_t j = 0; j < out.vector.size(); ++j) {
            out.vector[j] += static_cast<double>(states[l](3, static_cast<Eigen::Index>(j)));
        }
    }
    return out;
}

std::vector<double> NumeralEmbedder::embed(double value) const { return embed_numeral(value).vector; }

}  // namespace numanchor
