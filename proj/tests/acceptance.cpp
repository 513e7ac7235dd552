// Acceptance gate: one [PASS]/[FAIL] line per release criterion, nonzero
// exit when anything fails. Criteria 7-9 share one end-to-end experiment
// whose artifacts round-trip through the real CSV/JSON file formats.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "hml/annotations.hpp"
#include "hml/baseline.hpp"
#include "hml/constraint.hpp"
#include "hml/datagen.hpp"
#include "hml/errors.hpp"
#include "hml/hierarchy.hpp"
#include "hml/io.hpp"
#include "hml/loss.hpp"
#include "hml/metrics.hpp"
#include "hml/model.hpp"
#include "hml/rng.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using hml::BitMatrix;
using hml::BitVec;
using hml::Hierarchy;
using hml::Matrix;
using hml::Vector;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kSuiteSeed = 2026;
constexpr std::uint64_t kExperimentSeed = 415;

std::string strf(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Gate {
    int failed = 0;

    template <typename Body>
    void criterion(int num, const char* title, Body body) {
        const auto t0 = Clock::now();
        bool ok = false;
        std::string detail;
        try {
            detail = body(ok);
        } catch (const std::exception& e) {
            ok = false;
            detail = strf("exception: %s", e.what());
        }
        std::printf("[%s] %d. %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", num, title,
                    seconds_since(t0), detail.empty() ? "" : " -- ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failed;
    }
};

Hierarchy load_data_hierarchy(const char* name) {
    return hml::io::load_hierarchy(std::string(HML_DATA_DIR) + "/hierarchies/" + name);
}

std::string scratch_dir(const char* tag) {
    const fs::path dir = fs::temp_directory_path() / (std::string("hml_acceptance_") + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

// --- randomized loss/metric instances ---------------------------------------

struct MaskedInstance {
    Hierarchy h;
    BitMatrix targets;
    BitMatrix mask;
};

// Closed targets with derived masks, extra masked negatives, and (optionally)
// fully masked rows; `whole` forces every row fully masked.
MaskedInstance random_masked_instance(hml::Rng& rng, int max_extra_nodes, int max_rows,
                                      bool whole) {
    MaskedInstance ins{oracle::random_tree(rng, 2 + static_cast<int>(rng.below(
                                                        static_cast<std::uint64_t>(max_extra_nodes)))),
                       {},
                       {}};
    const int n = ins.h.size();
    const auto rows = static_cast<Eigen::Index>(1 + rng.below(static_cast<std::uint64_t>(max_rows)));
    ins.targets.resize(rows, n);
    ins.mask.resize(rows, n);
    for (Eigen::Index b = 0; b < rows; ++b) {
        if (whole || rng.bernoulli(0.15)) {
            for (int i = 0; i < n; ++i) {
                ins.targets(b, i) = 0;
                ins.mask(b, i) = 1;
            }
            continue;
        }
        const BitVec t = oracle::random_closed_bits(ins.h, rng, 0.35);
        const BitVec m = hml::derive_mask(ins.h, t);
        for (int i = 0; i < n; ++i) {
            ins.targets(b, i) = t[static_cast<std::size_t>(i)];
            ins.mask(b, i) = m[static_cast<std::size_t>(i)];
            if (!t[static_cast<std::size_t>(i)] && !m[static_cast<std::size_t>(i)] &&
                rng.bernoulli(0.15))
                ins.mask(b, i) = 1;
        }
    }
    return ins;
}

// Logits drawn as distinct slots of a coarse grid, so every pairwise gap
// (>= 6/8192) dwarfs the finite-difference step and no subtree max can
// change its winner under perturbation.
Matrix grid_logits(hml::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::vector<int> slots(8192);
    std::iota(slots.begin(), slots.end(), 0);
    const auto need = static_cast<std::size_t>(rows * cols);
    for (std::size_t k = 0; k < need; ++k)
        std::swap(slots[k], slots[k + static_cast<std::size_t>(rng.below(slots.size() - k))]);
    Matrix logits(rows, cols);
    for (Eigen::Index b = 0; b < rows; ++b)
        for (Eigen::Index i = 0; i < cols; ++i)
            logits(b, i) =
                -3.0 + 6.0 *
                           static_cast<double>(slots[static_cast<std::size_t>(b * cols + i)]) /
                           8192.0;
    return logits;
}

BitMatrix random_closed_rows(const Hierarchy& h, hml::Rng& rng, Eigen::Index rows, double p) {
    BitMatrix out(rows, h.size());
    for (Eigen::Index b = 0; b < rows; ++b)
        hml::set_row_bits(out, b, oracle::random_closed_bits(h, rng, p));
    return out;
}

// Every metric output flattened to one string; byte equality means bitwise
// metric equality.
std::string metrics_fingerprint(const Hierarchy& h, const BitMatrix& preds,
                                const BitMatrix& targets, const BitMatrix& mask) {
    std::string s;
    const auto add_opt = [&s](const std::optional<double>& v) {
        s += v ? strf("%.17g|", *v) : std::string("~|");
    };
    add_opt(hml::micro_ap(preds, targets, mask));
    std::map<int, double> hml_depth, sing_depth;
    add_opt(hml::hml_ap(h, preds, targets, mask, &hml_depth));
    add_opt(hml::singular_f1(h, preds, targets, mask, &sing_depth));
    for (const auto& [d, v] : hml_depth) s += strf("h%d=%.17g|", d, v);
    for (const auto& [d, v] : sing_depth) s += strf("s%d=%.17g|", d, v);
    for (const hml::NodePrf& r : hml::per_node_prf(h, preds, targets, mask)) {
        s += strf("n%d:%lld/%lld/%.17g:", r.node, r.support, r.evaluated, r.support_fraction);
        add_opt(r.precision);
        add_opt(r.recall);
        add_opt(r.f1);
    }
    const std::vector<hml::CategoryBatch> batch{{&h, preds, targets, mask}};
    s += hml::io::metrics_report_json(hml::evaluate(batch)).dump();
    return s;
}

// --- the shared end-to-end experiment ----------------------------------------

struct DataBundle {
    std::vector<Hierarchy> owned;
    std::vector<const Hierarchy*> hs;
    hml::io::FeatureTable features;  // as re-read from disk
    hml::AnnotationTable table;      // observed annotations, masks re-derived
    std::size_t test_begin = 0;      // rows [test_begin, n) are held out
    hml::Dataset train_set;
    std::vector<BitMatrix> test_targets;  // per category
    std::vector<BitMatrix> test_masks;
    double gen_seconds = 0.0;
};

// Generates the benchmark dataset, writes it through the CSV formats and
// reads it back, exactly as the command-line pipeline would.
DataBundle make_experiment_data(const std::string& dir) {
    const auto t0 = Clock::now();
    DataBundle d;
    d.owned.push_back(load_data_hierarchy("substrate.txt"));
    d.owned.push_back(load_data_hierarchy("relief.txt"));
    d.owned.push_back(load_data_hierarchy("bedforms.txt"));
    for (const Hierarchy& h : d.owned) d.hs.push_back(&h);

    hml::DatagenConfig cfg;
    cfg.n_samples = 5000;
    cfg.noise_sigma = 0.1;
    cfg.branch_prob = 0.4;
    cfg.missing_precision_rate = 0.3;
    cfg.missing_category_rate = 0.2;
    cfg.seed = kExperimentSeed;
    hml::io::write_generated(dir, d.hs, hml::generate_dataset(d.hs, cfg));

    d.features = hml::io::read_features_csv(dir + "/features.csv");
    d.table = hml::io::bind_annotations(hml::io::read_annotation_csv(dir + "/annotations.csv"),
                                        d.hs, dir + "/annotations.csv");
    const std::size_t n = d.features.sample_ids.size();
    for (std::size_t i = 0; i < n; ++i)
        if (d.table.samples[i].sample_id != d.features.sample_ids[i])
            throw std::runtime_error("annotation rows out of order after the CSV round-trip");

    d.test_begin = n - n / 5;
    const auto train_n = static_cast<Eigen::Index>(d.test_begin);
    const auto test_n = static_cast<Eigen::Index>(n - d.test_begin);
    d.train_set.hierarchies = d.hs;
    d.train_set.features = d.features.features.topRows(train_n);
    for (std::size_t k = 0; k < d.hs.size(); ++k) {
        const int width = d.hs[k]->size();
        BitMatrix train_t(train_n, width), train_m(train_n, width);
        BitMatrix test_t(test_n, width), test_m(test_n, width);
        for (std::size_t s = 0; s < n; ++s) {
            const hml::CategoryAnnotation& a = d.table.samples[s].categories[k];
            if (s < d.test_begin) {
                hml::set_row_bits(train_t, static_cast<Eigen::Index>(s), a.targets);
                hml::set_row_bits(train_m, static_cast<Eigen::Index>(s), a.mask);
            } else {
                const auto r = static_cast<Eigen::Index>(s - d.test_begin);
                hml::set_row_bits(test_t, r, a.targets);
                hml::set_row_bits(test_m, r, a.mask);
            }
        }
        d.train_set.targets.push_back(std::move(train_t));
        d.train_set.masks.push_back(std::move(train_m));
        d.test_targets.push_back(std::move(test_t));
        d.test_masks.push_back(std::move(test_m));
    }
    d.gen_seconds = seconds_since(t0);
    return d;
}

struct ExperimentRun {
    hml::MetricsReport trained;
    hml::BaselineReport baseline;
    std::string metrics_dump;
    std::string baseline_dump;
    double seconds = 0.0;  // training through baseline, excluding generation
};

// Trains the default 100-epoch probe recipe, evaluates constrained binary
// predictions on the held-out fifth, then runs the 10-trial random baseline
// on the same annotations.
ExperimentRun run_probe_experiment(const DataBundle& d) {
    const auto t0 = Clock::now();
    ExperimentRun run;

    hml::TrainConfig cfg;  // stock recipe: one-cycle 3e-6 -> 3e-5 -> 3e-6 over 100 epochs
    cfg.seed = kExperimentSeed;
    hml::Model model = hml::Model::create(d.hs, static_cast<int>(d.features.features.cols()),
                                          2048, 0.7, kExperimentSeed);
    hml::fit(model, d.train_set, nullptr, cfg);

    const auto test_n =
        static_cast<Eigen::Index>(d.features.sample_ids.size() - d.test_begin);
    const Matrix test_features = d.features.features.bottomRows(test_n);
    const std::vector<Matrix> probs = model.predict_probs(test_features);

    std::vector<hml::CategoryBatch> batches(d.hs.size());
    std::vector<hml::BaselineInput> base_inputs(d.hs.size());
    for (std::size_t k = 0; k < d.hs.size(); ++k) {
        const hml::DescendantMatrix dm(*d.hs[k]);
        batches[k] = {d.hs[k], hml::binarize_rows(hml::constrain_rows(dm, probs[k])),
                      d.test_targets[k], d.test_masks[k]};
        base_inputs[k] = {d.hs[k], d.test_targets[k], d.test_masks[k]};
    }
    run.trained = hml::evaluate(batches);
    run.baseline = hml::estimate_random_baseline(base_inputs, 10, 0.5, kExperimentSeed);
    run.metrics_dump = hml::io::metrics_report_json(run.trained).dump(2);
    run.baseline_dump = hml::io::baseline_report_json(run.baseline, d.hs, 0.5, kExperimentSeed).dump(2);
    run.seconds = seconds_since(t0);
    return run;
}

}  // namespace

int main() {
    Gate gate;
    std::optional<DataBundle> bundle;   // built at criterion 5, reused by 7/8
    std::optional<ExperimentRun> first; // built at criterion 7, reused by 8/9

    // 1 ------------------------------------------------------------------
    gate.criterion(1, "constraint equals the subtree-max oracle", [&](bool& ok) {
        hml::Rng rng = hml::substream(kSuiteSeed, "accept-constraint");
        const auto t0 = Clock::now();
        int vectors = 0;
        for (int t = 0; t < 50; ++t) {
            const Hierarchy h = oracle::random_tree(rng, 2 + static_cast<int>(rng.below(63)));
            const hml::DescendantMatrix dm(h);
            for (int v = 0; v < 200; ++v, ++vectors) {
                Vector scores(h.size());
                for (int i = 0; i < h.size(); ++i) scores(i) = rng.uniform(-2.0, 2.0);
                const Vector got = hml::constrain(dm, scores);
                if (!(got == oracle::naive_constrain(h, scores)))
                    return strf("oracle mismatch on tree %d", t);
                for (int i = 1; i < h.size(); ++i)
                    if (got(h.node(i).parent) < got(i))
                        return strf("parent < child after constraint on tree %d", t);
                if (!(hml::constrain(dm, got) == got))
                    return strf("constraint is not idempotent on tree %d", t);
            }
        }
        const double secs = seconds_since(t0);
        if (secs >= 10.0) return strf("too slow: %.1fs for %d vectors", secs, vectors);
        ok = true;
        return strf("%d vectors over 50 trees, all exact", vectors);
    });

    // 2 ------------------------------------------------------------------
    gate.criterion(2, "analytic gradients match central finite differences", [&](bool& ok) {
        hml::Rng rng = hml::substream(kSuiteSeed, "accept-gradient");
        const auto t0 = Clock::now();
        const double fd_h = 1e-5;
        long long coords = 0;
        int masked_instances = 0;
        for (int t = 0; t < 120; ++t) {
            const bool whole = t % 10 == 9;
            masked_instances += whole;
            const MaskedInstance ins = random_masked_instance(rng, 19, 6, whole);
            Matrix logits = grid_logits(rng, ins.targets.rows(), ins.targets.cols());
            const hml::HeadLossGrad got = hml::mc_loss_grad(ins.h, logits, ins.targets, ins.mask);
            for (Eigen::Index b = 0; b < logits.rows(); ++b) {
                for (Eigen::Index i = 0; i < logits.cols(); ++i) {
                    const double keep = logits(b, i);
                    logits(b, i) = keep + fd_h;
                    const double up = hml::mc_loss_grad(ins.h, logits, ins.targets, ins.mask).head.loss;
                    logits(b, i) = keep - fd_h;
                    const double down = hml::mc_loss_grad(ins.h, logits, ins.targets, ins.mask).head.loss;
                    logits(b, i) = keep;
                    const double fd = (up - down) / (2.0 * fd_h);
                    const double diff = std::abs(got.grad(b, i) - fd);
                    if (diff > 1e-4 * std::max({std::abs(fd), std::abs(got.grad(b, i)), 1e-4}))
                        return strf("instance %d coord (%lld,%lld): got %.9g fd %.9g", t,
                                    static_cast<long long>(b), static_cast<long long>(i),
                                    got.grad(b, i), fd);
                    ++coords;
                }
            }
        }
        const double secs = seconds_since(t0);
        if (secs >= 60.0) return strf("too slow: %.1fs", secs);
        ok = true;
        return strf("120 instances (%d fully masked), %lld coordinates within 1e-4 relative",
                    masked_instances, coords);
    });

    // 3 ------------------------------------------------------------------
    gate.criterion(3, "masked bits cannot influence loss, gradients or metrics", [&](bool& ok) {
        hml::Rng rng = hml::substream(kSuiteSeed, "accept-masking");
        long long flips = 0;
        for (int t = 0; t < 30; ++t) {
            const MaskedInstance ins = random_masked_instance(rng, 14, 8, false);
            const Eigen::Index rows = ins.targets.rows();
            const int n = ins.h.size();

            Matrix logits = grid_logits(rng, rows, n);
            Matrix probs(rows, n);
            for (Eigen::Index b = 0; b < rows; ++b)
                for (int i = 0; i < n; ++i) probs(b, i) = rng.uniform(0.02, 0.98);
            BitMatrix preds = random_closed_rows(ins.h, rng, rows, 0.5);

            const hml::HeadLossTerms loss0 = hml::mc_loss(ins.h, probs, ins.targets, ins.mask);
            const hml::HeadLossGrad grad0 = hml::mc_loss_grad(ins.h, logits, ins.targets, ins.mask);
            const std::string metrics0 = metrics_fingerprint(ins.h, preds, ins.targets, ins.mask);

            Matrix logits_all = logits, probs_all = probs;
            BitMatrix preds_all = preds;
            for (Eigen::Index b = 0; b < rows; ++b) {
                for (int i = 0; i < n; ++i) {
                    if (!ins.mask(b, i)) continue;
                    ++flips;
                    // one coordinate at a time
                    Matrix lp = logits;
                    lp(b, i) = rng.uniform(-50.0, 50.0);
                    const hml::HeadLossGrad g = hml::mc_loss_grad(ins.h, lp, ins.targets, ins.mask);
                    if (g.head.loss != grad0.head.loss || !(g.grad == grad0.grad) ||
                        g.head.contributing_bits != grad0.head.contributing_bits)
                        return strf("gradient changed under a masked logit (instance %d)", t);
                    Matrix pp = probs;
                    pp(b, i) = rng.uniform(0.02, 0.98);
                    const hml::HeadLossTerms l = hml::mc_loss(ins.h, pp, ins.targets, ins.mask);
                    if (l.head.loss != loss0.head.loss || !(l.per_bit == loss0.per_bit))
                        return strf("loss changed under a masked probability (instance %d)", t);
                    BitMatrix fp = preds;
                    fp(b, i) = fp(b, i) ? 0 : 1;
                    if (metrics_fingerprint(ins.h, fp, ins.targets, ins.mask) != metrics0)
                        return strf("a metric changed under a masked prediction flip (instance %d)", t);
                    // accumulate the all-at-once variant
                    logits_all(b, i) = rng.uniform(-50.0, 50.0);
                    probs_all(b, i) = rng.uniform(0.02, 0.98);
                    preds_all(b, i) = preds_all(b, i) ? 0 : 1;
                }
            }
            const hml::HeadLossGrad ga = hml::mc_loss_grad(ins.h, logits_all, ins.targets, ins.mask);
            const hml::HeadLossTerms la = hml::mc_loss(ins.h, probs_all, ins.targets, ins.mask);
            if (ga.head.loss != grad0.head.loss || !(ga.grad == grad0.grad) ||
                la.head.loss != loss0.head.loss || !(la.per_bit == loss0.per_bit) ||
                metrics_fingerprint(ins.h, preds_all, ins.targets, ins.mask) != metrics0)
                return strf("joint masked rewrite leaked into outputs (instance %d)", t);
        }
        ok = true;
        return strf("%lld masked coordinates flipped with zero bitwise change", flips);
    });

    // 4 ------------------------------------------------------------------
    gate.criterion(4, "annotation counting matches exhaustive enumeration", [&](bool& ok) {
        hml::Rng rng = hml::substream(kSuiteSeed, "accept-count");
        for (int t = 0; t < 200; ++t) {
            const int n = 1 + static_cast<int>(rng.below(15));
            const Hierarchy h = oracle::random_tree(rng, n);
            const mpz_class dp = hml::count_valid_annotations(h);
            if (dp != hml::brute_force_count(h))
                return strf("count mismatch on tree %d (n=%d)", t, n);
            const auto [lo, hi] = hml::valid_label_cardinality_bound(n);
            if (dp < lo || dp > hi) return strf("count outside [n+1, 2^n] on tree %d", t);
        }
        const Hierarchy sub = load_data_hierarchy("substrate.txt");
        if (sub.size() != 24) return strf("bundled substrate tree has %d nodes", sub.size());
        const auto t0 = Clock::now();
        const mpz_class brute = hml::brute_force_count(sub);
        const double secs = seconds_since(t0);
        const mpz_class dp = hml::count_valid_annotations(sub);
        if (dp != brute) return std::string("substrate count disagrees with 2^24 enumeration");
        const auto [lo, hi] = hml::valid_label_cardinality_bound(sub.size());
        if (dp < lo || dp > hi) return std::string("substrate count outside [n+1, 2^n]");
        if (secs >= 120.0) return strf("enumeration too slow: %.1fs", secs);
        ok = true;
        return strf("200 random trees exact; substrate count %s via 2^24 enumeration in %.1fs",
                    dp.get_str().c_str(), secs);
    });

    // 5 ------------------------------------------------------------------
    gate.criterion(5, "random-prediction law and depth-1 recall/precision profile", [&](bool& ok) {
        const Hierarchy sub = load_data_hierarchy("substrate.txt");
        const std::vector<double> law = hml::activation_probabilities(sub, 0.5);
        std::vector<long long> hits(static_cast<std::size_t>(sub.size()), 0);
        hml::Rng rng = hml::substream(kSuiteSeed, "accept-activation");
        const int draws = 100000;
        for (int d = 0; d < draws; ++d) {
            const BitVec bits = hml::sample_random_prediction(sub, 0.5, rng);
            for (std::size_t v = 0; v < bits.size(); ++v) hits[v] += bits[v];
        }
        double worst_z = 0.0;
        for (int v = 0; v < sub.size(); ++v) {
            const double q = law[static_cast<std::size_t>(v)];
            const double emp = static_cast<double>(hits[static_cast<std::size_t>(v)]) / draws;
            const double se = std::sqrt(q * (1.0 - q) / draws);
            const double z = std::abs(emp - q) / se;
            worst_z = std::max(worst_z, z);
            if (z > 4.0)
                return strf("node '%s': empirical %.5f vs law %.5f (%.1f SE)",
                            sub.path_of(v).c_str(), emp, q, z);
        }

        if (!bundle) bundle = make_experiment_data(scratch_dir("experiment"));
        // Ten pooled random predictions over the test rows, so the comparison
        // tests the structural claim rather than one coin flip of recall.
        const int profile_draws = 10;
        for (std::size_t k = 0; k < bundle->hs.size(); ++k) {
            const Hierarchy& h = *bundle->hs[k];
            const BitMatrix& targets = bundle->test_targets[k];
            const BitMatrix& mask = bundle->test_masks[k];
            const Eigen::Index rows = targets.rows();
            BitMatrix preds(rows * profile_draws, targets.cols());
            BitMatrix rep_t(rows * profile_draws, targets.cols());
            BitMatrix rep_m(rows * profile_draws, targets.cols());
            for (int t = 0; t < profile_draws; ++t) {
                hml::Rng draw = hml::substream(kExperimentSeed, "profile",
                                               static_cast<std::uint64_t>(t));
                rep_t.middleRows(t * rows, rows) = targets;
                rep_m.middleRows(t * rows, rows) = mask;
                for (Eigen::Index b = 0; b < rows; ++b)
                    hml::set_row_bits(preds, t * rows + b,
                                      hml::sample_random_prediction(h, 0.5, draw));
            }
            for (const hml::NodePrf& r : hml::per_node_prf(h, preds, rep_t, rep_m)) {
                if (r.depth != 1) continue;
                if (!r.recall || !r.precision)
                    return strf("depth-1 node '%s' lacks a defined recall/precision",
                                r.path.c_str());
                if (!(*r.recall > *r.precision))
                    return strf("depth-1 node '%s': recall %.3f <= precision %.3f",
                                r.path.c_str(), *r.recall, *r.precision);
            }
        }
        ok = true;
        return strf("all 24 nodes within 4 SE of 1-2^-s (worst %.2f SE); "
                    "recall > precision at every depth-1 node (10 pooled draws)",
                    worst_z);
    });

    // 6 ------------------------------------------------------------------
    gate.criterion(6, "metrics match independent naive reimplementations", [&](bool& ok) {
        hml::Rng rng = hml::substream(kSuiteSeed, "accept-metrics");
        const auto close = [](double a, double b) {
            return std::abs(a - b) <= 1e-12 * std::max({std::abs(a), std::abs(b), 1.0});
        };
        const auto close_opt = [&](const std::optional<double>& a,
                                   const std::optional<double>& b) {
            if (a.has_value() != b.has_value()) return false;
            return !a || close(*a, *b);
        };
        for (int t = 0; t < 50; ++t) {
            const MaskedInstance ins = random_masked_instance(rng, 14, 12, false);
            const BitMatrix preds = random_closed_rows(ins.h, rng, ins.targets.rows(), 0.5);

            if (!close_opt(hml::micro_ap(preds, ins.targets, ins.mask),
                           oracle::naive_micro_ap(preds, ins.targets, ins.mask)))
                return strf("micro_ap mismatch on set %d", t);

            std::map<int, double> got_d, want_d;
            if (!close_opt(hml::hml_ap(ins.h, preds, ins.targets, ins.mask, &got_d),
                           oracle::naive_hml_ap(ins.h, preds, ins.targets, ins.mask, &want_d)))
                return strf("hml_ap mismatch on set %d", t);
            if (got_d.size() != want_d.size()) return strf("hml_ap depth map mismatch on set %d", t);
            for (const auto& [d, v] : want_d)
                if (!got_d.count(d) || !close(got_d[d], v))
                    return strf("hml_ap depth %d mismatch on set %d", d, t);

            got_d.clear();
            want_d.clear();
            if (!close_opt(hml::singular_f1(ins.h, preds, ins.targets, ins.mask, &got_d),
                           oracle::naive_singular_f1(ins.h, preds, ins.targets, ins.mask, &want_d)))
                return strf("singular_f1 mismatch on set %d", t);
            if (got_d.size() != want_d.size())
                return strf("singular_f1 depth map mismatch on set %d", t);
            for (const auto& [d, v] : want_d)
                if (!got_d.count(d) || !close(got_d[d], v))
                    return strf("singular_f1 depth %d mismatch on set %d", d, t);

            const std::vector<hml::NodePrf> got = hml::per_node_prf(ins.h, preds, ins.targets, ins.mask);
            const std::vector<oracle::NaivePrf> want =
                oracle::naive_per_node(preds, ins.targets, ins.mask);
            for (std::size_t i = 0; i < want.size(); ++i) {
                if (got[i].support != want[i].support || got[i].evaluated != want[i].evaluated ||
                    !close_opt(got[i].precision, want[i].precision) ||
                    !close_opt(got[i].recall, want[i].recall) || !close_opt(got[i].f1, want[i].f1))
                    return strf("per-node mismatch at node %zu on set %d", i, t);
            }
        }
        // Worked 3-bit example: scores (1,0,1) against targets (1,1,0).
        BitMatrix preds(1, 3), targets(1, 3), mask = BitMatrix::Zero(1, 3);
        preds << 1, 0, 1;
        targets << 1, 1, 0;
        const auto ap = hml::micro_ap(preds, targets, mask);
        if (!ap || std::abs(*ap - 7.0 / 12.0) > 1e-9)
            return strf("worked example: got %.10f, want 7/12", ap ? *ap : -1.0);
        ok = true;
        return strf("50 randomized sets, four metrics each; worked example %.10f", *ap);
    });

    // 7 ------------------------------------------------------------------
    gate.criterion(7, "trained probe beats the random baseline by 0.2 on every metric",
                   [&](bool& ok) {
        if (!bundle) bundle = make_experiment_data(scratch_dir("experiment"));
        first = run_probe_experiment(*bundle);
        const double total = bundle->gen_seconds + first->seconds;

        const auto need = [&](const std::optional<double>& v, const char* name) {
            if (!v) throw std::runtime_error(strf("undefined trained metric: %s", name));
            return *v;
        };
        const double ap = need(first->trained.ap, "ap");
        const double hml_ap = need(first->trained.hml_ap, "hml_ap");
        const double sf1 = need(first->trained.singular_f1, "singular_f1");
        const auto base_mean = [&](const hml::BaselineMetricStat& s, const char* name) {
            if (!s.mean) throw std::runtime_error(strf("undefined baseline metric: %s", name));
            return *s.mean;
        };
        const double b_ap = base_mean(first->baseline.ap, "ap");
        const double b_hml = base_mean(first->baseline.hml_ap, "hml_ap");
        const double b_sf1 = base_mean(first->baseline.singular_f1, "singular_f1");

        const std::string summary = strf(
            "ap %.3f vs %.3f (+%.3f), hml_ap %.3f vs %.3f (+%.3f), "
            "singular_f1 %.3f vs %.3f (+%.3f), %.0fs total",
            ap, b_ap, ap - b_ap, hml_ap, b_hml, hml_ap - b_hml, sf1, b_sf1, sf1 - b_sf1, total);
        if (ap - b_ap < 0.2 || hml_ap - b_hml < 0.2 || sf1 - b_sf1 < 0.2)
            return "margin below 0.2: " + summary;
        if (total >= 600.0) return "too slow: " + summary;
        ok = true;
        return summary;
    });

    // 8 ------------------------------------------------------------------
    gate.criterion(8, "per-node F1 falls off with depth", [&](bool& ok) {
        if (!first) return std::string("experiment unavailable (criterion 7 did not run)");
        std::map<int, std::pair<double, long long>> weighted;  // depth -> (sum f1*support, support)
        std::map<int, std::pair<double, int>> plain;           // depth -> (sum f1, count)
        for (const hml::CategoryEval& cat : first->trained.categories) {
            for (const hml::NodePrf& r : cat.per_node) {
                if (r.depth < 1 || !r.f1 || r.support == 0) continue;
                auto& w = weighted[r.depth];
                w.first += *r.f1 * static_cast<double>(r.support);
                w.second += r.support;
                auto& p = plain[r.depth];
                p.first += *r.f1;
                p.second += 1;
            }
        }
        if (!weighted.count(1)) return std::string("no scored nodes at depth 1");
        const int max_depth = weighted.rbegin()->first;
        if (max_depth <= 1) return std::string("report has no depth beyond 1");
        const auto mean1 = plain[1].first / plain[1].second;
        const auto mean_max = plain[max_depth].first / plain[max_depth].second;
        if (!(mean1 > mean_max))
            return strf("mean F1 at depth 1 (%.3f) does not exceed depth %d (%.3f)", mean1,
                        max_depth, mean_max);
        std::string profile;
        double prev = 2.0;
        for (int dpt = 1; dpt <= max_depth; ++dpt) {
            if (!weighted.count(dpt)) return strf("no scored nodes at depth %d", dpt);
            const double w = weighted[dpt].first / static_cast<double>(weighted[dpt].second);
            profile += strf("%s%.3f", dpt == 1 ? "" : " >= ", w);
            if (w > prev)
                return strf("support-weighted F1 rises from depth %d to %d (%s)", dpt - 1, dpt,
                            profile.c_str());
            prev = w;
        }
        ok = true;
        return strf("depth-1 mean %.3f > depth-%d mean %.3f; weighted profile %s", mean1,
                    max_depth, mean_max, profile.c_str());
    });

    // 9 ------------------------------------------------------------------
    gate.criterion(9, "repeating the experiment reproduces the reports byte for byte",
                   [&](bool& ok) {
        if (!first) return std::string("experiment unavailable (criterion 7 did not run)");
        const DataBundle again = make_experiment_data(scratch_dir("experiment_repeat"));
        const ExperimentRun rerun = run_probe_experiment(again);
        if (rerun.metrics_dump != first->metrics_dump)
            return std::string("metric reports differ between identically seeded runs");
        if (rerun.baseline_dump != first->baseline_dump)
            return std::string("baseline reports differ between identically seeded runs");
        ok = true;
        return strf("metric and baseline reports identical (%zu + %zu bytes)",
                    first->metrics_dump.size(), first->baseline_dump.size());
    });

    if (gate.failed == 0) {
        std::printf("all 9 criteria passed\n");
        return 0;
    }
    std::printf("%d criterion(s) failed\n", gate.failed);
    return 1;
}
