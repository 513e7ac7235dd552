#include "hml/model.hpp"

#include <cmath>

#include "hml/constraint.hpp"
#include "hml/errors.hpp"
#include "hml/metrics.hpp"

namespace hml {

namespace {

Matrix sigmoid(const Matrix& x) {
    return x.unaryExpr([](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    });
}

void fill_uniform(Rng& rng, double bound, Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
}

// relu then inverted dropout; kept units are scaled by 1/(1-p) so inference
// needs no rescaling. Draw order is heads outer, then row-major over units.
Matrix dropped_hidden(const Head& head, const Matrix& x, Rng* rng) {
    Matrix h1 = ((x * head.w1.transpose()).rowwise() + head.b1.transpose()).cwiseMax(0.0);
    const double p = head.config.dropout;
    if (rng && p > 0.0) {
        const double scale = 1.0 / (1.0 - p);
        for (Eigen::Index r = 0; r < h1.rows(); ++r)
            for (Eigen::Index c = 0; c < h1.cols(); ++c)
                h1(r, c) = rng->bernoulli(p) ? 0.0 : h1(r, c) * scale;
    }
    return h1;
}

}  // namespace

LrSchedule LrSchedule::from(const TrainConfig& cfg, long long steps_per_epoch) {
    if (cfg.epochs <= 0 || steps_per_epoch <= 0)
        fail("invalid-argument", "schedule needs positive epoch and step counts");
    if (cfg.warmup_to_peak_epoch >= cfg.epochs)
        fail("invalid-argument", "peak epoch must come before the end of training");
    if (cfg.start_end_lr > cfg.peak_lr)
        fail("invalid-argument", "start/end learning rate must not exceed the peak");
    LrSchedule s;
    s.start_end_lr = cfg.start_end_lr;
    s.peak_lr = cfg.peak_lr;
    s.peak_step = static_cast<long long>(cfg.warmup_to_peak_epoch) * steps_per_epoch;
    s.last_step = static_cast<long long>(cfg.epochs) * steps_per_epoch - 1;
    return s;
}

double LrSchedule::at(long long step) const {
    if (step < 0 || step > last_step) fail("step-out-of-range", "schedule step outside training");
    const double pi = 3.14159265358979323846;
    if (step <= peak_step) {
        if (peak_step == 0) return peak_lr;
        const double t = static_cast<double>(step) / static_cast<double>(peak_step);
        return start_end_lr + (peak_lr - start_end_lr) * 0.5 * (1.0 - std::cos(pi * t));
    }
    const double t =
        static_cast<double>(step - peak_step) / static_cast<double>(last_step - peak_step);
    return start_end_lr + (peak_lr - start_end_lr) * 0.5 * (1.0 + std::cos(pi * t));
}

double lr_at(const TrainConfig& cfg, long long steps_per_epoch, long long step) {
    return LrSchedule::from(cfg, steps_per_epoch).at(step);
}

Model::Model(int input_dim, std::vector<Head> heads)
    : input_dim_(input_dim), heads_(std::move(heads)) {}

Model Model::create(std::span<const Hierarchy* const> hierarchies, int input_dim, int hidden_dim,
                    double dropout, std::uint64_t seed, double init_gain) {
    if (hierarchies.empty()) fail("invalid-argument", "model needs at least one category");
    if (input_dim <= 0 || hidden_dim <= 0) fail("invalid-argument", "dimensions must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("invalid-argument", "dropout must lie in [0, 1)");
    if (!(init_gain > 0.0)) fail("invalid-argument", "init gain must be positive");
    std::vector<Head> heads;
    for (std::size_t k = 0; k < hierarchies.size(); ++k) {
        const Hierarchy& h = *hierarchies[k];
        Head head;
        head.category = h.category();
        head.config = {input_dim, hidden_dim, h.size(), dropout};
        head.w1.resize(hidden_dim, input_dim);
        head.b1.resize(hidden_dim);
        head.w2.resize(h.size(), hidden_dim);
        head.b2.resize(h.size());
        Rng rng = substream(seed, "init", static_cast<std::uint64_t>(k));
        const double bound1 = init_gain * std::sqrt(6.0 / static_cast<double>(input_dim));
        fill_uniform(rng, bound1, head.w1);
        head.b1.setZero();
        head.w2.setZero();
        head.b2.setZero();
        heads.push_back(std::move(head));
    }
    return Model(input_dim, std::move(heads));
}

std::vector<Matrix> Model::forward(const Matrix& features) const {
    if (features.cols() != input_dim_)
        fail("dim-mismatch", "feature width does not match model input dimension");
    std::vector<Matrix> out;
    out.reserve(heads_.size());
    for (const Head& head : heads_) {
        const Matrix h1 = dropped_hidden(head, features, nullptr);
        out.push_back((h1 * head.w2.transpose()).rowwise() + head.b2.transpose());
    }
    return out;
}

std::vector<Matrix> Model::forward_train(const Matrix& features, Rng& rng) const {
    if (features.cols() != input_dim_)
        fail("dim-mismatch", "feature width does not match model input dimension");
    std::vector<Matrix> out;
    out.reserve(heads_.size());
    for (const Head& head : heads_) {
        const Matrix h1 = dropped_hidden(head, features, &rng);
        out.push_back((h1 * head.w2.transpose()).rowwise() + head.b2.transpose());
    }
    return out;
}

std::vector<Matrix> Model::predict_probs(const Matrix& features) const {
    std::vector<Matrix> out = forward(features);
    for (Matrix& m : out) m = sigmoid(m);
    return out;
}

namespace {

template <typename T>
struct Moments {
    T m, v;
};

// Decoupled weight decay (applied to the incoming parameters), then the
// bias-corrected adaptive step. t counts performed optimizer steps from 1.
template <typename T>
void adamw_update(T& param, Moments<T>& slot, const T& grad, const TrainConfig& cfg, double lr,
                  long long t) {
    slot.m = cfg.beta1 * slot.m + (1.0 - cfg.beta1) * grad;
    slot.v = cfg.beta2 * slot.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    if (cfg.weight_decay != 0.0) param.array() -= (lr * cfg.weight_decay) * param.array();
    param.array() -=
        lr * ((slot.m.array() / bc1) / ((slot.v.array() / bc2).sqrt() + cfg.adam_eps));
}

struct HeadTrainState {
    Moments<Matrix> w1, w2;
    Moments<Vector> b1, b2;
};

void check_dataset(const Model& model, const Dataset& d, const char* which) {
    if (d.features.rows() == 0) fail("empty-dataset", std::string(which) + " set has no samples");
    if (d.features.cols() != model.input_dim())
        fail("dim-mismatch", std::string(which) + " feature width does not match the model");
    if (d.hierarchies.size() != model.heads().size() || d.targets.size() != d.hierarchies.size() ||
        d.masks.size() != d.hierarchies.size())
        fail("dim-mismatch", std::string(which) + " category count does not match the model");
    for (std::size_t k = 0; k < d.hierarchies.size(); ++k) {
        if (!d.hierarchies[k]) fail("dim-mismatch", "dataset category without a hierarchy");
        if (d.targets[k].rows() != d.features.rows() || d.masks[k].rows() != d.features.rows() ||
            d.targets[k].cols() != d.hierarchies[k]->size() ||
            d.masks[k].cols() != d.hierarchies[k]->size())
            fail("dim-mismatch", std::string(which) + " label shapes do not match");
        if (d.hierarchies[k]->category() != model.heads()[k].category)
            fail("dim-mismatch", "dataset category order does not match the model");
    }
}

// Samples with at least one unmasked bit in some head. Fully masked samples
// are dropped before batching so adding them cannot perturb training.
std::vector<Eigen::Index> usable_samples(const Dataset& d) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index s = 0; s < d.features.rows(); ++s) {
        bool any = false;
        for (const BitMatrix& mask : d.masks) {
            for (Eigen::Index i = 0; i < mask.cols() && !any; ++i)
                if (!mask(s, i)) any = true;
            if (any) break;
        }
        if (any) idx.push_back(s);
    }
    return idx;
}

Matrix take_rows(const Matrix& m, std::span<const Eigen::Index> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        out.row(r) = m.row(rows[static_cast<std::size_t>(r)]);
    return out;
}

BitMatrix take_rows(const BitMatrix& m, std::span<const Eigen::Index> rows) {
    BitMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        out.row(r) = m.row(rows[static_cast<std::size_t>(r)]);
    return out;
}

struct ValScores {
    std::optional<double> loss;
    std::optional<double> ap, hml_ap, singular_f1;
};

ValScores validate(const Model& model, const Dataset& val) {
    ValScores out;
    const std::vector<Matrix> logits = model.forward(val.features);
    std::vector<HeadLoss> head_losses;
    std::vector<CategoryBatch> batches;
    for (std::size_t k = 0; k < val.hierarchies.size(); ++k) {
        const Hierarchy& h = *val.hierarchies[k];
        head_losses.push_back(mc_loss_grad(h, logits[k], val.targets[k], val.masks[k]).head);
        CategoryBatch cb;
        cb.hierarchy = &h;
        cb.targets = val.targets[k];
        cb.mask = val.masks[k];
        DescendantMatrix dm(h);
        cb.preds = binarize_rows(constrain_rows(dm, sigmoid(logits[k])));
        batches.push_back(std::move(cb));
    }
    const LossReport lr = batch_loss(head_losses);
    if (!lr.skip) out.loss = lr.total;
    const MetricsReport mr = evaluate(batches);
    out.ap = mr.ap;
    out.hml_ap = mr.hml_ap;
    out.singular_f1 = mr.singular_f1;
    return out;
}

}  // namespace

History fit(Model& model, const Dataset& train, const Dataset* validation,
            const TrainConfig& cfg) {
    check_dataset(model, train, "training");
    if (validation) check_dataset(model, *validation, "validation");
    if (cfg.batch_size <= 0) fail("invalid-argument", "batch size must be positive");

    const std::vector<Eigen::Index> usable = usable_samples(train);
    const long long steps_per_epoch =
        usable.empty()
            ? 0
            : (static_cast<long long>(usable.size()) + cfg.batch_size - 1) / cfg.batch_size;
    LrSchedule schedule;
    if (steps_per_epoch > 0) schedule = LrSchedule::from(cfg, steps_per_epoch);

    std::vector<HeadTrainState> states(model.heads().size());
    for (std::size_t k = 0; k < model.heads().size(); ++k) {
        const Head& head = model.heads()[k];
        states[k].w1 = {Matrix::Zero(head.w1.rows(), head.w1.cols()),
                        Matrix::Zero(head.w1.rows(), head.w1.cols())};
        states[k].w2 = {Matrix::Zero(head.w2.rows(), head.w2.cols()),
                        Matrix::Zero(head.w2.rows(), head.w2.cols())};
        states[k].b1 = {Vector::Zero(head.b1.size()), Vector::Zero(head.b1.size())};
        states[k].b2 = {Vector::Zero(head.b2.size()), Vector::Zero(head.b2.size())};
    }

    History history;
    long long adam_t = 0;
    std::vector<Eigen::Index> order;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochStats stats;
        stats.epoch = epoch;

        Rng shuffle_rng = substream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
        order.assign(usable.begin(), usable.end());
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(shuffle_rng.below(i));
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        long long contributing_steps = 0;
        for (long long step = 0; step < steps_per_epoch; ++step) {
            const long long global_step = static_cast<long long>(epoch) * steps_per_epoch + step;
            const double lr = schedule.at(global_step);
            stats.last_lr = lr;

            const std::size_t lo = static_cast<std::size_t>(step * cfg.batch_size);
            const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
            const std::span<const Eigen::Index> rows(order.data() + lo, hi - lo);
            const Matrix x = take_rows(train.features, rows);

            Rng dropout_rng =
                substream(cfg.seed, "dropout", static_cast<std::uint64_t>(global_step));
            std::vector<Matrix> hidden(model.heads().size());
            std::vector<Matrix> logits(model.heads().size());
            for (std::size_t k = 0; k < model.heads().size(); ++k) {
                const Head& head = model.heads()[k];
                hidden[k] = dropped_hidden(head, x, &dropout_rng);
                logits[k] = (hidden[k] * head.w2.transpose()).rowwise() + head.b2.transpose();
            }

            std::vector<HeadLossGrad> grads;
            std::vector<HeadLoss> head_losses;
            for (std::size_t k = 0; k < model.heads().size(); ++k) {
                grads.push_back(mc_loss_grad(*train.hierarchies[k], logits[k],
                                             take_rows(train.targets[k], rows),
                                             take_rows(train.masks[k], rows)));
                head_losses.push_back(grads.back().head);
            }
            const LossReport report = batch_loss(head_losses, cfg.head_reduction);
            if (!std::isfinite(report.total))
                fail("nan-loss", "training loss diverged at step " + std::to_string(global_step));
            ++stats.steps;
            if (report.skip) {
                ++stats.skipped_steps;
                continue;
            }
            loss_sum += report.total;
            ++contributing_steps;

            const double head_scale = cfg.head_reduction == HeadReduction::mean
                                          ? 1.0 / static_cast<double>(report.contributing_heads)
                                          : 1.0;
            ++adam_t;
            for (std::size_t k = 0; k < model.heads().size(); ++k) {
                Head& head = model.heads()[k];
                const Matrix g = head_scale * grads[k].grad;  // zero matrix for idle heads
                const Matrix dW2 = g.transpose() * hidden[k];
                const Vector db2 = g.colwise().sum().transpose();
                Matrix dh = g * head.w2;
                // hidden > 0 exactly at units that were kept and active; those
                // carry the inverted-dropout scale through the product.
                const double p = head.config.dropout;
                const double scale = p > 0.0 ? 1.0 / (1.0 - p) : 1.0;
                for (Eigen::Index r = 0; r < dh.rows(); ++r)
                    for (Eigen::Index c = 0; c < dh.cols(); ++c)
                        dh(r, c) = hidden[k](r, c) > 0.0 ? dh(r, c) * scale : 0.0;
                const Matrix dW1 = dh.transpose() * x;
                const Vector db1 = dh.colwise().sum().transpose();

                adamw_update(head.w1, states[k].w1, dW1, cfg, lr, adam_t);
                adamw_update(head.b1, states[k].b1, db1, cfg, lr, adam_t);
                adamw_update(head.w2, states[k].w2, dW2, cfg, lr, adam_t);
                adamw_update(head.b2, states[k].b2, db2, cfg, lr, adam_t);
            }
        }

        if (contributing_steps > 0)
            stats.train_loss = loss_sum / static_cast<double>(contributing_steps);
        if (validation) {
            const ValScores v = validate(model, *validation);
            stats.val_loss = v.loss;
            stats.val_ap = v.ap;
            stats.val_hml_ap = v.hml_ap;
            stats.val_singular_f1 = v.singular_f1;
        }
        history.push_back(stats);
    }
    return history;
}

}  // namespace hml
