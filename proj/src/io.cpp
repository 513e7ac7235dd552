#include "hml/io.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hml/errors.hpp"

namespace hml::io {

namespace {

json parse_json(const std::string& text, const std::string& path) {
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) fail("schema-mismatch", "not valid JSON", path);
    return j;
}

const json& field(const json& j, const char* name, const std::string& path) {
    auto it = j.find(name);
    if (it == j.end()) fail("schema-mismatch", "missing field", path, name);
    return *it;
}

double number_field(const json& j, const char* name, const std::string& path) {
    const json& f = field(j, name, path);
    if (!f.is_number()) fail("schema-mismatch", "expected a number", path, name);
    return f.get<double>();
}

int int_field(const json& j, const char* name, const std::string& path) {
    const json& f = field(j, name, path);
    if (!f.is_number_integer()) fail("schema-mismatch", "expected an integer", path, name);
    return f.get<int>();
}

std::string string_field(const json& j, const char* name, const std::string& path) {
    const json& f = field(j, name, path);
    if (!f.is_string()) fail("schema-mismatch", "expected a string", path, name);
    return f.get<std::string>();
}

json opt_json(const std::optional<double>& v) {
    if (v) return json(*v);
    return json(nullptr);
}

// --- CSV -----------------------------------------------------------------

bool needs_quoting(std::string_view cell) {
    return cell.find_first_of(",\"\n\r") != std::string_view::npos;
}

void append_cell(std::string& out, std::string_view cell) {
    if (!needs_quoting(cell)) {
        out += cell;
        return;
    }
    out += '"';
    for (const char c : cell) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
}

// RFC-4180 reader: quoted cells may contain commas, quotes and newlines.
std::vector<std::vector<std::string>> read_csv(const std::string& text, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool in_quotes = false;
    bool row_started = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cell += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!cell.empty()) fail("schema-mismatch", "stray quote inside a cell", path);
                in_quotes = true;
                row_started = true;
                break;
            case ',':
                row.push_back(std::move(cell));
                cell.clear();
                row_started = true;
                break;
            case '\r':
                break;
            case '\n':
                if (row_started || !cell.empty() || !row.empty()) {
                    row.push_back(std::move(cell));
                    cell.clear();
                    rows.push_back(std::move(row));
                    row.clear();
                    row_started = false;
                }
                break;
            default:
                cell += c;
                row_started = true;
        }
    }
    if (in_quotes) fail("schema-mismatch", "unterminated quoted cell", path);
    if (row_started || !cell.empty() || !row.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> split_cell_paths(const std::string& cell) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= cell.size()) {
        const std::size_t semi = cell.find(';', start);
        const std::size_t end = semi == std::string::npos ? cell.size() : semi;
        std::size_t a = start, b = end;
        while (a < b && std::isspace(static_cast<unsigned char>(cell[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(cell[b - 1]))) --b;
        if (b > a) out.push_back(cell.substr(a, b - a));
        if (semi == std::string::npos) break;
        start = semi + 1;
    }
    return out;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("file-not-found", "cannot open for reading", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void spit(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("io-error", "cannot open for writing", path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail("io-error", "short write", path);
}

Hierarchy load_hierarchy(const std::string& path) {
    return Hierarchy::parse(slurp(path), path);
}

AnnotationCsv read_annotation_csv(const std::string& path) {
    const auto rows = read_csv(slurp(path), path);
    if (rows.empty()) fail("schema-mismatch", "empty annotation file", path);
    const auto& header = rows[0];
    if (header.empty() || header[0] != "sample_id")
        fail("schema-mismatch", "first header column must be sample_id", path, "sample_id");
    if (header.size() < 2) fail("schema-mismatch", "no category columns", path);
    AnnotationCsv out;
    out.categories.assign(header.begin() + 1, header.end());
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size())
            fail("schema-mismatch",
                 "row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                     " cells, expected " + std::to_string(header.size()),
                 path);
        out.sample_ids.push_back(row[0]);
        std::vector<std::vector<std::string>> cells;
        for (std::size_t c = 1; c < row.size(); ++c) cells.push_back(split_cell_paths(row[c]));
        out.paths.push_back(std::move(cells));
    }
    return out;
}

void write_annotation_csv(const std::string& path, const AnnotationCsv& table) {
    std::string out = "sample_id";
    for (const std::string& c : table.categories) {
        out += ',';
        append_cell(out, c);
    }
    out += '\n';
    for (std::size_t r = 0; r < table.sample_ids.size(); ++r) {
        append_cell(out, table.sample_ids[r]);
        for (const auto& cell : table.paths[r]) {
            out += ',';
            std::string joined;
            for (std::size_t i = 0; i < cell.size(); ++i) {
                if (i) joined += ';';
                joined += cell[i];
            }
            append_cell(out, joined);
        }
        out += '\n';
    }
    spit(path, out);
}

AnnotationTable bind_annotations(const AnnotationCsv& raw,
                                 std::span<const Hierarchy* const> hierarchies,
                                 const std::string& source_name) {
    std::vector<std::size_t> column;  // per hierarchy, index into raw.categories
    for (const Hierarchy* h : hierarchies) {
        std::size_t found = raw.categories.size();
        for (std::size_t c = 0; c < raw.categories.size(); ++c)
            if (raw.categories[c] == h->category()) {
                found = c;
                break;
            }
        if (found == raw.categories.size())
            fail("schema-mismatch", "annotation file lacks category '" + h->category() + "'",
                 source_name, h->category());
        column.push_back(found);
    }
    AnnotationTable table;
    for (const Hierarchy* h : hierarchies) table.category_names.push_back(h->category());
    for (std::size_t r = 0; r < raw.sample_ids.size(); ++r) {
        AnnotationSet set;
        set.sample_id = raw.sample_ids[r];
        for (std::size_t k = 0; k < hierarchies.size(); ++k)
            set.categories.push_back(
                parse_annotation(*hierarchies[k], raw.paths[r][column[k]]));
        table.samples.push_back(std::move(set));
    }
    return table;
}

FeatureTable read_features_csv(const std::string& path) {
    const auto rows = read_csv(slurp(path), path);
    if (rows.empty()) fail("schema-mismatch", "empty feature file", path);
    const auto& header = rows[0];
    if (header.empty() || header[0] != "sample_id")
        fail("schema-mismatch", "first header column must be sample_id", path, "sample_id");
    const std::size_t dim = header.size() - 1;
    if (dim == 0) fail("schema-mismatch", "no feature columns", path);
    FeatureTable out;
    out.features.resize(static_cast<Eigen::Index>(rows.size() - 1),
                        static_cast<Eigen::Index>(dim));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size())
            fail("schema-mismatch", "row " + std::to_string(r + 1) + " width mismatch", path);
        out.sample_ids.push_back(row[0]);
        for (std::size_t c = 1; c < row.size(); ++c) {
            char* end = nullptr;
            const double v = std::strtod(row[c].c_str(), &end);
            if (end == row[c].c_str() || *end != '\0')
                fail("schema-mismatch", "feature value is not a number", path,
                     "f" + std::to_string(c - 1));
            out.features(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) = v;
        }
    }
    return out;
}

void write_features_csv(const std::string& path, const FeatureTable& table) {
    if (table.sample_ids.size() != static_cast<std::size_t>(table.features.rows()))
        fail("dimension-mismatch", "sample id count does not match feature rows", path);
    std::string out = "sample_id";
    for (Eigen::Index c = 0; c < table.features.cols(); ++c)
        out += ",f" + std::to_string(c);
    out += '\n';
    for (Eigen::Index r = 0; r < table.features.rows(); ++r) {
        append_cell(out, table.sample_ids[static_cast<std::size_t>(r)]);
        for (Eigen::Index c = 0; c < table.features.cols(); ++c) {
            out += ',';
            out += format_double(table.features(r, c));
        }
        out += '\n';
    }
    spit(path, out);
}

PredictionFile read_predictions(const std::string& path) {
    const std::string text = slurp(path);
    PredictionFile out;
    std::size_t pos = 0;
    bool saw_header = false;
    long long line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = parse_json(line, path);
        if (!saw_header) {
            if (string_field(j, "kind", path) != "predictions")
                fail("schema-mismatch", "first record must be the predictions header", path,
                     "kind");
            out.score_kind = string_field(j, "score_kind", path);
            if (out.score_kind != "probabilities" && out.score_kind != "binary")
                fail("schema-mismatch", "score_kind must be probabilities or binary", path,
                     "score_kind");
            const json& cats = field(j, "categories", path);
            if (!cats.is_array() || cats.empty())
                fail("schema-mismatch", "categories must be a non-empty array", path,
                     "categories");
            for (const json& c : cats) {
                out.categories.push_back(string_field(c, "category", path));
                out.node_counts.push_back(int_field(c, "nodes", path));
            }
            saw_header = true;
            continue;
        }
        out.sample_ids.push_back(string_field(j, "sample_id", path));
        const json& scores = field(j, "scores", path);
        std::vector<Vector> row;
        for (std::size_t k = 0; k < out.categories.size(); ++k) {
            auto it = scores.find(out.categories[k]);
            if (it == scores.end() || !it->is_array() ||
                static_cast<int>(it->size()) != out.node_counts[k])
                fail("schema-mismatch",
                     "line " + std::to_string(line_no) + ": bad score array for category '" +
                         out.categories[k] + "'",
                     path, out.categories[k]);
            Vector v(out.node_counts[k]);
            Eigen::Index i = 0;
            for (const json& x : *it) {
                if (!x.is_number())
                    fail("schema-mismatch", "scores must be numbers", path, out.categories[k]);
                v[i++] = x.get<double>();
            }
            row.push_back(std::move(v));
        }
        out.scores.push_back(std::move(row));
    }
    if (!saw_header) fail("schema-mismatch", "missing predictions header record", path);
    return out;
}

void write_predictions(const std::string& path, const PredictionFile& preds) {
    json header;
    header["kind"] = "predictions";
    header["version"] = 1;
    header["score_kind"] = preds.score_kind;
    header["categories"] = json::array();
    for (std::size_t k = 0; k < preds.categories.size(); ++k) {
        json c;
        c["category"] = preds.categories[k];
        c["nodes"] = preds.node_counts[k];
        header["categories"].push_back(c);
    }
    std::string out = header.dump();
    out += '\n';
    for (std::size_t r = 0; r < preds.sample_ids.size(); ++r) {
        json rec;
        rec["sample_id"] = preds.sample_ids[r];
        json scores;
        for (std::size_t k = 0; k < preds.categories.size(); ++k) {
            json arr = json::array();
            const Vector& v = preds.scores[r][k];
            for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
            scores[preds.categories[k]] = std::move(arr);
        }
        rec["scores"] = std::move(scores);
        out += rec.dump();
        out += '\n';
    }
    spit(path, out);
}

void save_model(const std::string& path, const Model& model) {
    json j;
    j["kind"] = "checkpoint";
    j["version"] = 1;
    j["input_dim"] = model.input_dim();
    j["heads"] = json::array();
    for (const Head& head : model.heads()) {
        json hj;
        hj["category"] = head.category;
        hj["input_dim"] = head.config.input_dim;
        hj["hidden_dim"] = head.config.hidden_dim;
        hj["output_dim"] = head.config.output_dim;
        hj["dropout"] = head.config.dropout;
        auto flat = [](const Matrix& m) {
            json arr = json::array();
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
            return arr;
        };
        auto flatv = [](const Vector& v) {
            json arr = json::array();
            for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
            return arr;
        };
        hj["w1"] = flat(head.w1);
        hj["b1"] = flatv(head.b1);
        hj["w2"] = flat(head.w2);
        hj["b2"] = flatv(head.b2);
        j["heads"].push_back(std::move(hj));
    }
    spit(path, j.dump());
}

Model load_model(const std::string& path) {
    const json j = parse_json(slurp(path), path);
    if (string_field(j, "kind", path) != "checkpoint")
        fail("schema-mismatch", "not a checkpoint file", path, "kind");
    const int input_dim = int_field(j, "input_dim", path);
    const json& heads_j = field(j, "heads", path);
    if (!heads_j.is_array() || heads_j.empty())
        fail("schema-mismatch", "checkpoint has no heads", path, "heads");
    std::vector<Head> heads;
    for (const json& hj : heads_j) {
        Head head;
        head.category = string_field(hj, "category", path);
        head.config.input_dim = int_field(hj, "input_dim", path);
        head.config.hidden_dim = int_field(hj, "hidden_dim", path);
        head.config.output_dim = int_field(hj, "output_dim", path);
        head.config.dropout = number_field(hj, "dropout", path);
        auto unflat = [&](const char* name, Eigen::Index rows, Eigen::Index cols) {
            const json& arr = field(hj, name, path);
            if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != rows * cols)
                fail("schema-mismatch", "parameter size mismatch", path, name);
            Matrix m(rows, cols);
            Eigen::Index i = 0;
            for (const json& x : arr) {
                m(i / cols, i % cols) = x.get<double>();
                ++i;
            }
            return m;
        };
        head.w1 = unflat("w1", head.config.hidden_dim, head.config.input_dim);
        head.b1 = unflat("b1", head.config.hidden_dim, 1).col(0);
        head.w2 = unflat("w2", head.config.output_dim, head.config.hidden_dim);
        head.b2 = unflat("b2", head.config.output_dim, 1).col(0);
        if (head.config.input_dim != input_dim)
            fail("schema-mismatch", "head input dim disagrees with checkpoint input_dim", path,
                 "input_dim");
        heads.push_back(std::move(head));
    }
    return Model(input_dim, std::move(heads));
}

json hierarchy_report(const Hierarchy& h) {
    json j;
    j["kind"] = "hierarchy_report";
    j["version"] = 1;
    j["category"] = h.category();
    j["nodes"] = h.size();
    j["max_depth"] = h.max_depth();
    j["depth_histogram"] = h.depth_histogram();
    j["node_table"] = json::array();
    for (int i = 0; i < h.size(); ++i) {
        json n;
        n["index"] = i;
        n["name"] = h.node(i).name;
        n["parent"] = h.node(i).parent;
        n["depth"] = h.node(i).depth;
        n["subtree_size"] = h.node(i).subtree_size;
        n["path"] = h.path_of(i);
        j["node_table"].push_back(std::move(n));
    }
    return j;
}

json count_report(const Hierarchy& h, const mpz_class& count, const mpz_class* brute) {
    const auto [lower, upper] = valid_label_cardinality_bound(h.size());
    json j;
    j["kind"] = "count_report";
    j["version"] = 1;
    j["category"] = h.category();
    j["nodes"] = h.size();
    j["count"] = count.get_str();
    j["bounds"] = {{"lower", lower.get_str()}, {"upper", upper.get_str()}};
    if (brute) {
        j["brute_force"] = brute->get_str();
        j["matches"] = (*brute == count);
    } else {
        j["brute_force"] = nullptr;
        j["matches"] = nullptr;
    }
    return j;
}

namespace {

json depth_map_json(const std::map<int, DepthScore>& per_depth) {
    json j = json::object();
    for (const auto& [d, s] : per_depth) {
        json e;
        e["hml_ap"] = opt_json(s.hml_ap);
        e["singular_f1"] = opt_json(s.singular_f1);
        j[std::to_string(d)] = std::move(e);
    }
    return j;
}

}  // namespace

json metrics_report_json(const MetricsReport& report) {
    json j;
    j["kind"] = "metrics_report";
    j["version"] = 1;
    j["ap"] = opt_json(report.ap);
    j["hml_ap"] = opt_json(report.hml_ap);
    j["singular_f1"] = opt_json(report.singular_f1);
    j["per_depth"] = depth_map_json(report.per_depth);
    j["categories"] = json::array();
    for (const CategoryEval& ce : report.categories) {
        json c;
        c["category"] = ce.category;
        c["micro_ap"] = opt_json(ce.micro_ap);
        c["hml_ap"] = opt_json(ce.hml_ap);
        c["singular_f1"] = opt_json(ce.singular_f1);
        c["per_depth"] = depth_map_json(ce.per_depth);
        c["per_node"] = json::array();
        for (const NodePrf& n : ce.per_node) {
            json nj;
            nj["node"] = n.node;
            nj["path"] = n.path;
            nj["depth"] = n.depth;
            nj["support"] = n.support;
            nj["evaluated"] = n.evaluated;
            nj["support_fraction"] = n.support_fraction;
            nj["precision"] = opt_json(n.precision);
            nj["recall"] = opt_json(n.recall);
            nj["f1"] = opt_json(n.f1);
            c["per_node"].push_back(std::move(nj));
        }
        j["categories"].push_back(std::move(c));
    }
    return j;
}

json baseline_report_json(const BaselineReport& report,
                          std::span<const Hierarchy* const> hierarchies, double p,
                          std::uint64_t seed) {
    auto stat = [](const BaselineMetricStat& s) {
        json j;
        j["mean"] = opt_json(s.mean);
        j["stddev"] = opt_json(s.stddev);
        j["values"] = s.values;
        return j;
    };
    json j;
    j["kind"] = "baseline_report";
    j["version"] = 1;
    j["trials"] = report.trials;
    j["p"] = p;
    j["seed"] = seed;
    j["metrics"] = {{"ap", stat(report.ap)},
                    {"hml_ap", stat(report.hml_ap)},
                    {"singular_f1", stat(report.singular_f1)}};
    j["activation"] = json::array();
    for (const Hierarchy* h : hierarchies) {
        const std::vector<double> probs = activation_probabilities(*h, p);
        json cj;
        cj["category"] = h->category();
        cj["nodes"] = json::array();
        for (int v = 0; v < h->size(); ++v) {
            json nj;
            nj["path"] = h->path_of(v);
            nj["subtree_size"] = h->node(v).subtree_size;
            nj["probability"] = probs[static_cast<std::size_t>(v)];
            cj["nodes"].push_back(std::move(nj));
        }
        j["activation"].push_back(std::move(cj));
    }
    return j;
}

std::string history_jsonl(const History& history) {
    std::string out;
    for (const EpochStats& e : history) {
        json j;
        j["epoch"] = e.epoch;
        j["steps"] = e.steps;
        j["skipped_steps"] = e.skipped_steps;
        j["lr"] = e.last_lr;
        j["train_loss"] = opt_json(e.train_loss);
        j["val_loss"] = opt_json(e.val_loss);
        j["val_ap"] = opt_json(e.val_ap);
        j["val_hml_ap"] = opt_json(e.val_hml_ap);
        j["val_singular_f1"] = opt_json(e.val_singular_f1);
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string per_node_csv(const MetricsReport& report) {
    std::string out = "category,node,path,depth,support,evaluated,support_fraction,precision,recall,f1\n";
    auto opt = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string();
    };
    for (const CategoryEval& ce : report.categories) {
        for (const NodePrf& n : ce.per_node) {
            append_cell(out, ce.category);
            out += ',' + std::to_string(n.node) + ',';
            append_cell(out, n.path);
            out += ',' + std::to_string(n.depth) + ',' + std::to_string(n.support) + ',' +
                   std::to_string(n.evaluated) + ',' + format_double(n.support_fraction) + ',' +
                   opt(n.precision) + ',' + opt(n.recall) + ',' + opt(n.f1) + '\n';
        }
    }
    return out;
}

AnnotationCsv annotations_from_bits(std::span<const Hierarchy* const> hierarchies,
                                    std::span<const std::string> sample_ids,
                                    std::span<const BitMatrix> targets,
                                    std::span<const BitVec> present) {
    AnnotationCsv out;
    for (const Hierarchy* h : hierarchies) out.categories.push_back(h->category());
    out.sample_ids.assign(sample_ids.begin(), sample_ids.end());
    for (std::size_t r = 0; r < sample_ids.size(); ++r) {
        std::vector<std::vector<std::string>> row;
        for (std::size_t k = 0; k < hierarchies.size(); ++k) {
            if (!present.empty() && !present[k][r]) {
                row.emplace_back();
                continue;
            }
            row.push_back(
                to_paths(*hierarchies[k], row_bits(targets[k], static_cast<Eigen::Index>(r))));
        }
        out.paths.push_back(std::move(row));
    }
    return out;
}

void write_generated(const std::string& dir, std::span<const Hierarchy* const> hierarchies,
                     const GeneratedData& data) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail("io-error", "cannot create output directory: " + ec.message(), dir);

    FeatureTable ft;
    ft.sample_ids = data.sample_ids;
    ft.features = data.features;
    write_features_csv(dir + "/features.csv", ft);

    write_annotation_csv(dir + "/annotations.csv",
                         annotations_from_bits(hierarchies, data.sample_ids,
                                               data.observed_targets, data.category_present));

    write_annotation_csv(dir + "/ground_truth.csv",
                         annotations_from_bits(hierarchies, data.sample_ids, data.ground_truth,
                                               {}));
}

}  // namespace hml::io
