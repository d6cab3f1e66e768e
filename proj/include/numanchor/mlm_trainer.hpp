#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "numanchor/embedder.hpp"
#include "numanchor/encoder.hpp"
#include "numanchor/vocab.hpp"

namespace numanchor {

struct TrainingLogEntry {
    std::size_t epoch = 0;  // 1-based
    std::size_t step = 0;   // global optimizer step, 1-based
    double loss = 0.0;      // batch loss
    bool operator==(const TrainingLogEntry&) const = default;
};

struct EncoderCheckpoint {
    EncoderConfig config;
    Vocab vocab;
    std::vector<TokenId> numeral_ids;  // numerals seen in running text
    EncoderWeights<float> weights;
    std::vector<TrainingLogEntry> log;
    std::vector<double> epoch_losses;  // mean batch loss per epoch
    double initial_eval_loss = 0.0;    // fixed evaluation subset, before the first step
    double final_eval_loss = 0.0;      // same subset after the last step
    std::size_t training_sequences = 0;
    std::size_t skipped_sequences = 0;  // nothing to mask

    /// Short content hash of the weights.
    std::string id() const;
};

using TrainProgress = std::function<void(const TrainingLogEntry&)>;

/// Masked-LM training of a fresh encoder on pre-tokenized documents. Throws
/// TrainingDivergedError on a non-finite loss.
EncoderCheckpoint train_mlm(const EncoderConfig& config, const std::vector<std::vector<std::string>>& corpus,
                            const Vocab& vocab, const TrainProgress& progress = {});

/// Learning rate at a 0-based optimizer step: linear warmup, then linear decay to 0.
double scheduled_learning_rate(const EncoderConfig& config, std::size_t step, std::size_t total_steps);

std::string serialize_checkpoint(const EncoderCheckpoint& ckpt);
EncoderCheckpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const EncoderCheckpoint& ckpt, const std::filesystem::path& path);
EncoderCheckpoint load_checkpoint(const std::filesystem::path& path);

std::string format_training_log(const std::vector<TrainingLogEntry>& log);

enum class OovPolicy {
    NeighbourMean,  // <UNK> embedding plus the mean of the 16 nearest numeral embeddings by value
    RawUnk,
};

struct NumeralEmbedding {
    double value = 0.0;
    std::vector<double> vector;
    std::string checkpoint_id;
    int template_id = 0;
    bool in_vocabulary = true;
};

/// Places a numeral in the probe frame `the value is <N> .` and sums the last
/// four layer outputs at the numeral position.
class NumeralEmbedder : public Embedder {
public:
    static constexpr int kTemplateId = 0;
    static constexpr std::size_t kNeighbours = 16;

    explicit NumeralEmbedder(const EncoderCheckpoint& ckpt, OovPolicy policy = OovPolicy::NeighbourMean);

    std::size_t dimension() const override { return encoder_.config().hidden; }
    std::vector<double> embed(double value) const override;
    NumeralEmbedding embed_numeral(double value) const;

    /// Every layer output row at the numeral position (embedding layer first).
    std::vector<std::vector<double>> layer_taps(double value) const;

    /// Values of the numeral tokens in the vocabulary, ascending.
    std::vector<double> vocabulary_values() const;

private:
    std::vector<Matrix<float>> forward(double value, bool& in_vocab) const;

    TransformerEncoder<float> encoder_;
    Vocab vocab_;
    OovPolicy policy_;
    std::string checkpoint_id_;
    std::map<double, TokenId> by_value_;
    std::vector<TokenId> frame_;  // ids of the frame with a placeholder at the numeral slot
};

}  // namespace numanchor
