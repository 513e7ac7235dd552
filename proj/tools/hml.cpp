// Command-line front end: every subcommand is deterministic under --seed and
// reports failures as a machine-readable JSON error object on stderr.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "hml/baseline.hpp"
#include "hml/constraint.hpp"
#include "hml/datagen.hpp"
#include "hml/errors.hpp"
#include "hml/io.hpp"
#include "hml/loss.hpp"
#include "hml/metrics.hpp"
#include "hml/model.hpp"

namespace {

using hml::io::json;

struct HierarchySet {
    std::vector<hml::Hierarchy> owned;
    std::vector<const hml::Hierarchy*> ptrs;
};

HierarchySet load_hierarchies(const std::vector<std::string>& paths) {
    HierarchySet set;
    set.owned.reserve(paths.size());
    for (const std::string& p : paths) set.owned.push_back(hml::io::load_hierarchy(p));
    for (const hml::Hierarchy& h : set.owned) set.ptrs.push_back(&h);
    return set;
}

void emit(const json& report, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << report.dump(2) << "\n";
    } else {
        hml::io::spit(out_path, report.dump(2) + "\n");
    }
}

// Stacks one category of an annotation table into targets/mask matrices for
// the given subset of rows.
void encode_rows(const hml::AnnotationTable& table, std::size_t category,
                 const std::vector<std::size_t>& rows, const hml::Hierarchy& h,
                 hml::BitMatrix& targets, hml::BitMatrix& mask) {
    targets.resize(static_cast<Eigen::Index>(rows.size()), h.size());
    mask.resize(static_cast<Eigen::Index>(rows.size()), h.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const hml::CategoryAnnotation& a = table.samples[rows[r]].categories[category];
        hml::set_row_bits(targets, static_cast<Eigen::Index>(r), a.targets);
        hml::set_row_bits(mask, static_cast<Eigen::Index>(r), a.mask);
    }
}

std::unordered_map<std::string, std::size_t> index_by_id(const std::vector<std::string>& ids,
                                                          const std::string& path) {
    std::unordered_map<std::string, std::size_t> map;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (!map.emplace(ids[i], i).second)
            hml::fail("schema-mismatch", "duplicate sample_id '" + ids[i] + "'", path,
                      "sample_id");
    return map;
}

// --- subcommand payloads ---------------------------------------------------

int run_validate(const std::string& hierarchy_path, const std::string& report_path) {
    const hml::Hierarchy h = hml::io::load_hierarchy(hierarchy_path);
    emit(hml::io::hierarchy_report(h), report_path);
    return 0;
}

int run_count(const std::string& hierarchy_path, bool brute, const std::string& report_path) {
    const hml::Hierarchy h = hml::io::load_hierarchy(hierarchy_path);
    const mpz_class count = hml::count_valid_annotations(h);
    mpz_class brute_count;
    if (brute) brute_count = hml::brute_force_count(h);
    emit(hml::io::count_report(h, count, brute ? &brute_count : nullptr), report_path);
    return 0;
}

int run_generate(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
    const json cfg_json = json::parse(hml::io::slurp(config_path), nullptr, false);
    if (cfg_json.is_discarded())
        hml::fail("schema-mismatch", "not valid JSON", config_path);
    auto it = cfg_json.find("hierarchies");
    if (it == cfg_json.end() || !it->is_array() || it->empty())
        hml::fail("schema-mismatch", "config needs a non-empty hierarchies array", config_path,
                  "hierarchies");
    // Relative hierarchy paths resolve against the config file's directory.
    const std::filesystem::path base = std::filesystem::path(config_path).parent_path();
    std::vector<std::string> paths;
    for (const json& p : *it) {
        if (!p.is_string())
            hml::fail("schema-mismatch", "hierarchy entries must be strings", config_path,
                      "hierarchies");
        std::filesystem::path fp = p.get<std::string>();
        if (fp.is_relative()) fp = base / fp;
        paths.push_back(fp.string());
    }
    const HierarchySet hs = load_hierarchies(paths);

    hml::DatagenConfig cfg;
    cfg.seed = seed;
    auto num = [&](const char* name, double fallback) {
        auto f = cfg_json.find(name);
        if (f == cfg_json.end()) return fallback;
        if (!f->is_number())
            hml::fail("schema-mismatch", "expected a number", config_path, name);
        return f->get<double>();
    };
    cfg.n_samples = static_cast<int>(num("n_samples", cfg.n_samples));
    cfg.noise_sigma = num("noise_sigma", cfg.noise_sigma);
    cfg.branch_prob = num("branch_prob", cfg.branch_prob);
    cfg.missing_precision_rate = num("missing_precision_rate", cfg.missing_precision_rate);
    cfg.missing_category_rate = num("missing_category_rate", cfg.missing_category_rate);
    cfg.feature_dim = static_cast<int>(num("feature_dim", cfg.feature_dim));

    const hml::GeneratedData data = hml::generate_dataset(hs.ptrs, cfg);
    hml::io::write_generated(out_dir, hs.ptrs, data);

    json summary;
    summary["kind"] = "generate_summary";
    summary["version"] = 1;
    summary["samples"] = cfg.n_samples;
    summary["feature_dim"] = static_cast<int>(data.features.cols());
    summary["signal_dim"] = data.signal_dim;
    summary["seed"] = seed;
    summary["out"] = out_dir;
    std::cout << summary.dump(2) << "\n";
    return 0;
}

struct TrainArgs {
    std::string features_path;
    std::string annotations_path;
    std::vector<std::string> hierarchy_paths;
    std::string config_path;
    std::string out_path = "model.ckpt";
    std::string log_path;
    std::uint64_t seed = 0;
    double val_fraction = 0.1;
    int hidden_dim = 2048;
    double dropout = 0.7;
    double init_gain = hml::Model::kDefaultInitGain;
    bool fine_tune = false;
};

hml::TrainConfig load_train_config(const std::string& path) {
    hml::TrainConfig cfg;
    if (path.empty()) return cfg;
    const json j = json::parse(hml::io::slurp(path), nullptr, false);
    if (j.is_discarded()) hml::fail("schema-mismatch", "not valid JSON", path);
    auto num = [&](const char* name, double fallback) {
        auto f = j.find(name);
        if (f == j.end()) return fallback;
        if (!f->is_number()) hml::fail("schema-mismatch", "expected a number", path, name);
        return f->get<double>();
    };
    cfg.peak_lr = num("peak_lr", cfg.peak_lr);
    cfg.start_end_lr = num("start_end_lr", cfg.start_end_lr);
    cfg.warmup_to_peak_epoch = static_cast<int>(num("warmup_to_peak_epoch", cfg.warmup_to_peak_epoch));
    cfg.epochs = static_cast<int>(num("epochs", cfg.epochs));
    cfg.batch_size = static_cast<int>(num("batch_size", cfg.batch_size));
    cfg.weight_decay = num("weight_decay", cfg.weight_decay);
    cfg.beta1 = num("beta1", cfg.beta1);
    cfg.beta2 = num("beta2", cfg.beta2);
    cfg.adam_eps = num("adam_eps", cfg.adam_eps);
    auto r = j.find("head_reduction");
    if (r != j.end()) {
        if (!r->is_string() || (*r != "mean" && *r != "sum"))
            hml::fail("schema-mismatch", "head_reduction must be \"mean\" or \"sum\"", path,
                      "head_reduction");
        cfg.head_reduction =
            *r == "mean" ? hml::HeadReduction::mean : hml::HeadReduction::sum;
    }
    return cfg;
}

int run_train(const TrainArgs& args) {
    const HierarchySet hs = load_hierarchies(args.hierarchy_paths);
    const hml::io::FeatureTable ft = hml::io::read_features_csv(args.features_path);
    const hml::io::AnnotationCsv raw = hml::io::read_annotation_csv(args.annotations_path);
    const hml::AnnotationTable table =
        hml::io::bind_annotations(raw, hs.ptrs, args.annotations_path);
    const auto ann_index = index_by_id(raw.sample_ids, args.annotations_path);

    // Dataset rows follow the feature file; every sample needs annotations.
    std::vector<std::size_t> ann_rows;
    for (const std::string& id : ft.sample_ids) {
        auto it = ann_index.find(id);
        if (it == ann_index.end())
            hml::fail("schema-mismatch", "no annotation row for sample '" + id + "'",
                      args.annotations_path, "sample_id");
        ann_rows.push_back(it->second);
    }

    hml::TrainConfig cfg = load_train_config(args.config_path);
    cfg.seed = args.seed;
    if (args.fine_tune) {
        cfg.peak_lr *= 0.1;
        cfg.start_end_lr *= 0.1;
    }

    // Deterministic validation split drawn from its own substream.
    const std::size_t n = ft.sample_ids.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    hml::Rng split_rng = hml::substream(cfg.seed, "split");
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(split_rng.below(i))]);
    const auto val_count =
        static_cast<std::size_t>(std::llround(args.val_fraction * static_cast<double>(n)));
    if (val_count >= n)
        hml::fail("invalid-argument", "validation fraction leaves no training data");
    std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_count));
    std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(val_count), order.end());
    std::sort(val_rows.begin(), val_rows.end());
    std::sort(train_rows.begin(), train_rows.end());

    auto build = [&](const std::vector<std::size_t>& rows) {
        hml::Dataset d;
        d.hierarchies = hs.ptrs;
        d.features.resize(static_cast<Eigen::Index>(rows.size()), ft.features.cols());
        for (std::size_t r = 0; r < rows.size(); ++r)
            d.features.row(static_cast<Eigen::Index>(r)) =
                ft.features.row(static_cast<Eigen::Index>(rows[r]));
        d.targets.resize(hs.ptrs.size());
        d.masks.resize(hs.ptrs.size());
        for (std::size_t k = 0; k < hs.ptrs.size(); ++k) {
            std::vector<std::size_t> table_rows;
            table_rows.reserve(rows.size());
            for (std::size_t r : rows) table_rows.push_back(ann_rows[r]);
            encode_rows(table, k, table_rows, *hs.ptrs[k], d.targets[k], d.masks[k]);
        }
        return d;
    };

    const hml::Dataset train_set = build(train_rows);
    hml::Dataset val_set;
    if (val_count > 0) val_set = build(val_rows);

    hml::Model model = hml::Model::create(hs.ptrs, static_cast<int>(ft.features.cols()),
                                          args.hidden_dim, args.dropout, cfg.seed, args.init_gain);
    const hml::History history =
        hml::fit(model, train_set, val_count > 0 ? &val_set : nullptr, cfg);

    hml::io::save_model(args.out_path, model);
    const std::string log_path =
        args.log_path.empty() ? args.out_path + ".log.jsonl" : args.log_path;
    hml::io::spit(log_path, hml::io::history_jsonl(history));

    json summary;
    summary["kind"] = "train_summary";
    summary["version"] = 1;
    summary["epochs"] = static_cast<int>(history.size());
    summary["train_samples"] = static_cast<long long>(train_rows.size());
    summary["val_samples"] = static_cast<long long>(val_rows.size());
    if (!history.empty()) {
        const hml::EpochStats& last = history.back();
        summary["final_train_loss"] = last.train_loss ? json(*last.train_loss) : json(nullptr);
        summary["final_val_loss"] = last.val_loss ? json(*last.val_loss) : json(nullptr);
        summary["final_val_ap"] = last.val_ap ? json(*last.val_ap) : json(nullptr);
    }
    summary["checkpoint"] = args.out_path;
    summary["log"] = log_path;
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int run_predict(const std::string& features_path, const std::string& checkpoint_path,
                const std::string& out_path) {
    const hml::Model model = hml::io::load_model(checkpoint_path);
    const hml::io::FeatureTable ft = hml::io::read_features_csv(features_path);
    const std::vector<hml::Matrix> probs = model.predict_probs(ft.features);

    hml::io::PredictionFile pf;
    pf.score_kind = "probabilities";
    for (const hml::Head& head : model.heads()) {
        pf.categories.push_back(head.category);
        pf.node_counts.push_back(head.config.output_dim);
    }
    pf.sample_ids = ft.sample_ids;
    for (Eigen::Index r = 0; r < ft.features.rows(); ++r) {
        std::vector<hml::Vector> row;
        for (const hml::Matrix& m : probs) row.push_back(m.row(r).transpose());
        pf.scores.push_back(std::move(row));
    }
    hml::io::write_predictions(out_path, pf);
    return 0;
}

// Checks a prediction file's header against loaded hierarchies and returns
// per-category score matrices in hierarchy order.
std::vector<hml::Matrix> score_matrices(const hml::io::PredictionFile& pf,
                                        const HierarchySet& hs, const std::string& path) {
    std::vector<std::size_t> col;
    for (const hml::Hierarchy* h : hs.ptrs) {
        std::size_t found = pf.categories.size();
        for (std::size_t k = 0; k < pf.categories.size(); ++k)
            if (pf.categories[k] == h->category()) {
                found = k;
                break;
            }
        if (found == pf.categories.size())
            hml::fail("schema-mismatch", "prediction file lacks category '" + h->category() + "'",
                      path, h->category());
        if (pf.node_counts[found] != h->size())
            hml::fail("dimension-mismatch",
                      "prediction width " + std::to_string(pf.node_counts[found]) +
                          " does not match hierarchy size " + std::to_string(h->size()),
                      path, h->category());
        col.push_back(found);
    }
    std::vector<hml::Matrix> out;
    for (std::size_t k = 0; k < hs.ptrs.size(); ++k) {
        hml::Matrix m(static_cast<Eigen::Index>(pf.sample_ids.size()), hs.ptrs[k]->size());
        for (std::size_t r = 0; r < pf.sample_ids.size(); ++r)
            m.row(static_cast<Eigen::Index>(r)) = pf.scores[r][col[k]].transpose();
        out.push_back(std::move(m));
    }
    return out;
}

int run_constrain(const std::string& predictions_path,
                  const std::vector<std::string>& hierarchy_paths, const std::string& out_path,
                  bool binarize) {
    const HierarchySet hs = load_hierarchies(hierarchy_paths);
    hml::io::PredictionFile pf = hml::io::read_predictions(predictions_path);
    std::vector<hml::Matrix> scores = score_matrices(pf, hs, predictions_path);

    hml::io::PredictionFile out;
    out.score_kind = binarize ? "binary" : pf.score_kind;
    for (const hml::Hierarchy* h : hs.ptrs) {
        out.categories.push_back(h->category());
        out.node_counts.push_back(h->size());
    }
    out.sample_ids = pf.sample_ids;
    out.scores.resize(pf.sample_ids.size());

    for (std::size_t k = 0; k < hs.ptrs.size(); ++k) {
        const hml::DescendantMatrix dm(*hs.ptrs[k]);
        hml::Matrix constrained = hml::constrain_rows(dm, scores[k]);
        if (binarize) {
            const hml::BitMatrix bits = hml::binarize_rows(constrained);
            constrained = bits.cast<double>();
        }
        for (std::size_t r = 0; r < out.sample_ids.size(); ++r)
            out.scores[r].push_back(constrained.row(static_cast<Eigen::Index>(r)).transpose());
    }
    hml::io::write_predictions(out_path, out);
    return 0;
}

struct EvaluateArgs {
    std::string predictions_path;
    std::string annotations_path;
    std::vector<std::string> hierarchy_paths;
    std::string report_path;
    std::string per_node_path;
};

int run_evaluate(const EvaluateArgs& args) {
    const HierarchySet hs = load_hierarchies(args.hierarchy_paths);
    const hml::io::PredictionFile pf = hml::io::read_predictions(args.predictions_path);
    const std::vector<hml::Matrix> scores = score_matrices(pf, hs, args.predictions_path);
    const hml::io::AnnotationCsv raw = hml::io::read_annotation_csv(args.annotations_path);
    const hml::AnnotationTable table =
        hml::io::bind_annotations(raw, hs.ptrs, args.annotations_path);
    const auto ann_index = index_by_id(raw.sample_ids, args.annotations_path);

    std::vector<std::size_t> ann_rows;
    for (const std::string& id : pf.sample_ids) {
        auto it = ann_index.find(id);
        if (it == ann_index.end())
            hml::fail("schema-mismatch", "no annotation row for sample '" + id + "'",
                      args.annotations_path, "sample_id");
        ann_rows.push_back(it->second);
    }

    std::vector<hml::CategoryBatch> batches(hs.ptrs.size());
    for (std::size_t k = 0; k < hs.ptrs.size(); ++k) {
        const hml::Hierarchy& h = *hs.ptrs[k];
        const hml::DescendantMatrix dm(h);
        batches[k].hierarchy = &h;
        batches[k].preds = hml::binarize_rows(hml::constrain_rows(dm, scores[k]));
        encode_rows(table, k, ann_rows, h, batches[k].targets, batches[k].mask);
    }
    const hml::MetricsReport report = hml::evaluate(batches);
    emit(hml::io::metrics_report_json(report), args.report_path);
    if (!args.per_node_path.empty())
        hml::io::spit(args.per_node_path, hml::io::per_node_csv(report));
    return 0;
}

struct BaselineArgs {
    std::string annotations_path;
    std::vector<std::string> hierarchy_paths;
    int trials = 10;
    double p = 0.5;
    std::uint64_t seed = 0;
    std::string report_path;
};

int run_baseline(const BaselineArgs& args) {
    const HierarchySet hs = load_hierarchies(args.hierarchy_paths);
    const hml::io::AnnotationCsv raw = hml::io::read_annotation_csv(args.annotations_path);
    const hml::AnnotationTable table =
        hml::io::bind_annotations(raw, hs.ptrs, args.annotations_path);
    std::vector<std::size_t> rows(raw.sample_ids.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;

    std::vector<hml::BaselineInput> inputs(hs.ptrs.size());
    for (std::size_t k = 0; k < hs.ptrs.size(); ++k) {
        inputs[k].hierarchy = hs.ptrs[k];
        encode_rows(table, k, rows, *hs.ptrs[k], inputs[k].targets, inputs[k].mask);
    }
    const hml::BaselineReport report =
        hml::estimate_random_baseline(inputs, args.trials, args.p, args.seed);
    emit(hml::io::baseline_report_json(report, hs.ptrs, args.p, args.seed), args.report_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical multi-label classification under missing information"};
    app.require_subcommand(1);

    // validate
    auto* validate = app.add_subcommand("validate", "Parse a hierarchy file and report its structure");
    std::string v_hierarchy, v_report;
    validate->add_option("hierarchy", v_hierarchy, "Hierarchy text file")->required();
    validate->add_option("--report", v_report, "Write the JSON report here instead of stdout");

    // count
    auto* count = app.add_subcommand("count", "Count valid annotations of a hierarchy");
    std::string c_hierarchy, c_report;
    bool c_brute = false;
    count->add_option("hierarchy", c_hierarchy, "Hierarchy text file")->required();
    count->add_flag("--brute-force", c_brute, "Cross-check with exhaustive enumeration (n <= 24)");
    count->add_option("--report", c_report, "Write the JSON report here instead of stdout");

    // generate
    auto* generate = app.add_subcommand("generate", "Generate a synthetic dataset");
    std::string g_config, g_out = "dataset";
    std::uint64_t g_seed = 0;
    generate->add_option("config", g_config, "Generator config JSON")->required();
    generate->add_option("--seed", g_seed, "Master seed");
    generate->add_option("--out", g_out, "Output directory");

    // train
    auto* train = app.add_subcommand("train", "Train the multi-head probe");
    TrainArgs t;
    train->add_option("features", t.features_path, "Feature CSV")->required();
    train->add_option("annotations", t.annotations_path, "Annotation CSV")->required();
    train->add_option("hierarchies", t.hierarchy_paths, "Hierarchy files, one per category")
        ->required()
        ->expected(-1);
    train->add_option("--config", t.config_path, "Training config JSON (defaults otherwise)");
    train->add_option("--seed", t.seed, "Master seed");
    train->add_option("--out", t.out_path, "Checkpoint path");
    train->add_option("--log", t.log_path, "Per-epoch JSON-lines log (default <out>.log.jsonl)");
    train->add_option("--val-fraction", t.val_fraction, "Validation split fraction");
    train->add_option("--hidden-dim", t.hidden_dim, "Hidden layer width");
    train->add_option("--dropout", t.dropout, "Dropout between the two layers");
    train->add_option("--init-gain", t.init_gain,
                      "Amplification on the rectifier fan-in init bounds");
    train->add_flag("--fine-tune", t.fine_tune, "Continue at one-tenth learning rates");

    // predict
    auto* predict = app.add_subcommand("predict", "Write raw probability predictions");
    std::string p_features, p_checkpoint, p_out = "predictions.jsonl";
    predict->add_option("features", p_features, "Feature CSV")->required();
    predict->add_option("checkpoint", p_checkpoint, "Model checkpoint")->required();
    predict->add_option("--out", p_out, "Prediction JSON-lines path");

    // constrain
    auto* constrain = app.add_subcommand("constrain", "Apply the subtree-max constraint to predictions");
    std::string cn_predictions, cn_out = "constrained.jsonl";
    std::vector<std::string> cn_hierarchies;
    bool cn_binarize = false;
    constrain->add_option("predictions", cn_predictions, "Prediction JSON-lines")->required();
    constrain->add_option("hierarchies", cn_hierarchies, "Hierarchy files")->required()->expected(-1);
    constrain->add_option("--out", cn_out, "Output path");
    constrain->add_flag("--binarize", cn_binarize, "Also threshold at 0.5");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against annotations");
    EvaluateArgs e;
    evaluate->add_option("predictions", e.predictions_path, "Prediction JSON-lines")->required();
    evaluate->add_option("annotations", e.annotations_path, "Annotation CSV")->required();
    evaluate->add_option("hierarchies", e.hierarchy_paths, "Hierarchy files")->required()->expected(-1);
    evaluate->add_option("--report", e.report_path, "Write the JSON report here instead of stdout");
    evaluate->add_option("--per-node", e.per_node_path, "Also write the per-node table as CSV");

    // baseline
    auto* baseline = app.add_subcommand("baseline", "Random-prediction baseline over a test set");
    BaselineArgs b;
    baseline->add_option("annotations", b.annotations_path, "Annotation CSV")->required();
    baseline->add_option("hierarchies", b.hierarchy_paths, "Hierarchy files")->required()->expected(-1);
    baseline->add_option("--trials", b.trials, "Monte Carlo trials");
    baseline->add_option("--p", b.p, "Per-bit activation probability");
    baseline->add_option("--seed", b.seed, "Master seed");
    baseline->add_option("--report", b.report_path, "Write the JSON report here instead of stdout");

    try {
        app.parse(argc, argv);
        if (validate->parsed()) return run_validate(v_hierarchy, v_report);
        if (count->parsed()) return run_count(c_hierarchy, c_brute, c_report);
        if (generate->parsed()) return run_generate(g_config, g_seed, g_out);
        if (train->parsed()) return run_train(t);
        if (predict->parsed()) return run_predict(p_features, p_checkpoint, p_out);
        if (constrain->parsed()) return run_constrain(cn_predictions, cn_hierarchies, cn_out, cn_binarize);
        if (evaluate->parsed()) return run_evaluate(e);
        if (baseline->parsed()) return run_baseline(b);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    } catch (const hml::Error& err) {
        json j;
        j["error"] = {{"code", err.code()},
                      {"message", std::string(err.what())},
                      {"file", err.file().empty() ? json(nullptr) : json(err.file())},
                      {"field", err.field().empty() ? json(nullptr) : json(err.field())}};
        std::cerr << j.dump() << "\n";
        return 1;
    }
    return 0;
}
