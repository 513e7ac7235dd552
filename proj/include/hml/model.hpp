#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hml/hierarchy.hpp"
#include "hml/loss.hpp"
#include "hml/rng.hpp"
#include "hml/types.hpp"

namespace hml {

struct HeadConfig {
    int input_dim = 0;
    int hidden_dim = 2048;
    int output_dim = 0;
    double dropout = 0.7;  // drop probability between the two layers
};

// One category head: input -> hidden (rectified linear) -> logits.
struct Head {
    std::string category;
    HeadConfig config;
    Matrix w1;  // hidden x input
    Vector b1;
    Matrix w2;  // output x hidden
    Vector b2;
};

struct TrainConfig {
    double peak_lr = 3e-5;
    double start_end_lr = 3e-6;
    int warmup_to_peak_epoch = 10;
    int epochs = 100;
    int batch_size = 512;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    HeadReduction head_reduction = HeadReduction::mean;
    std::uint64_t seed = 0;
};

// One-cycle cosine: ramp start->peak over [0, peak_step], decay peak->end
// over [peak_step, last_step], hitting the endpoints exactly.
struct LrSchedule {
    double start_end_lr = 3e-6;
    double peak_lr = 3e-5;
    long long peak_step = 0;
    long long last_step = 0;

    static LrSchedule from(const TrainConfig& cfg, long long steps_per_epoch);
    double at(long long step) const;  // errors: step-out-of-range
};

double lr_at(const TrainConfig& cfg, long long steps_per_epoch, long long step);

// Aligned per-category training data. Samples whose every head is fully
// masked are skipped by fit (training is invariant to their presence).
struct Dataset {
    std::vector<const Hierarchy*> hierarchies;
    Matrix features;                 // N x input_dim
    std::vector<BitMatrix> targets;  // per category, N x n_c
    std::vector<BitMatrix> masks;
};

struct EpochStats {
    int epoch = 0;
    long long steps = 0;
    long long skipped_steps = 0;  // batches where no head contributed
    double last_lr = 0.0;
    std::optional<double> train_loss;  // mean batch total over contributing steps
    std::optional<double> val_loss;
    std::optional<double> val_ap;
    std::optional<double> val_hml_ap;
    std::optional<double> val_singular_f1;
};
using History = std::vector<EpochStats>;

class Model {
public:
    Model() = default;
    Model(int input_dim, std::vector<Head> heads);  // for checkpoint loading

    // Default amplification applied on top of rectifier fan-in scaling of the
    // hidden layer. The probe recipe fine-tunes with small learning rates, so
    // the random features must already swing widely for the readout to buy
    // separation within its travel budget; plain He-scale features leave the
    // rare deep labels stuck below the decision threshold.
    static constexpr double kDefaultInitGain = 12.0;

    // Fresh heads: hidden weights amplified rectifier-scaled uniform,
    // U(+-gain*sqrt(6/fan_in)); readout weights and all biases zero, so the
    // initial logits sit exactly at the prior and training spends nothing
    // undoing init noise. One init substream per head so adding a category
    // never reseeds the others.
    static Model create(std::span<const Hierarchy* const> hierarchies, int input_dim,
                        int hidden_dim = 2048, double dropout = 0.7, std::uint64_t seed = 0,
                        double init_gain = kDefaultInitGain);

    int input_dim() const { return input_dim_; }
    const std::vector<Head>& heads() const { return heads_; }
    std::vector<Head>& heads() { return heads_; }

    // Deterministic inference-mode logits per head.
    std::vector<Matrix> forward(const Matrix& features) const;
    // Training-mode logits with inverted dropout drawn from `rng` (heads in
    // order, row-major over the hidden activations).
    std::vector<Matrix> forward_train(const Matrix& features, Rng& rng) const;
    // Inference-mode probabilities (sigmoid of logits).
    std::vector<Matrix> predict_probs(const Matrix& features) const;

private:
    int input_dim_ = 0;
    std::vector<Head> heads_;
};

// AdamW (decoupled weight decay) over every head parameter, batches shuffled
// per epoch, loss/gradients from the masked max-constraint loss. Deterministic
// given cfg.seed. errors: empty-dataset, dim-mismatch, nan-loss.
History fit(Model& model, const Dataset& train, const Dataset* validation,
            const TrainConfig& cfg);

}  // namespace hml
