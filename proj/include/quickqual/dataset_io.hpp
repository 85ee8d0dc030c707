#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "quickqual/blob_io.hpp"
#include "quickqual/error.hpp"
#include "quickqual/head_io.hpp"
#include "quickqual/heads.hpp"
#include "quickqual/matrix.hpp"
#include "quickqual/metrics.hpp"
#include "quickqual/training/dataset.hpp"
#include "quickqual/training/selection.hpp"

namespace quickqual {

/// Shortest decimal text that parses back to the same double.
inline std::string format_real(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::file_not_found, "cannot open " + path.string());
    CsvTable t;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        require(fields.size() == t.header.size(), ErrorCode::format,
                path.string() + ":" + std::to_string(number) + ": expected " + std::to_string(t.header.size()) +
                    " fields, got " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(number);
    }
    require(!t.header.empty(), ErrorCode::format, path.string() + ": missing CSV header");
    return t;
}

inline double parse_real(const std::string& s, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    require(res.ec == std::errc{} && res.ptr == s.data() + s.size(), ErrorCode::format,
            where + ": not a number: '" + s + "'");
    return v;
}

inline int parse_label(const std::string& s, const std::string& where) {
    int v = -1;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    require(res.ec == std::errc{} && res.ptr == s.data() + s.size() && v >= 0 && v < kNumClasses,
            ErrorCode::format, where + ": label must be 0, 1 or 2, got '" + s + "'");
    return v;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
    return out;
}

inline void close_output(std::ofstream& out, const std::filesystem::path& path) {
    out.close();
    require(!out.fail(), ErrorCode::io, "write failed: " + path.string());
}

}  // namespace detail

struct LabelTable {
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::map<std::string, int> by_id;
};

/// `image_id,label` with label in {0, 1, 2}; ids must be unique.
inline LabelTable read_labels_csv(const std::filesystem::path& path) {
    const auto t = detail::read_csv(path);
    require(t.header == std::vector<std::string>{"image_id", "label"}, ErrorCode::format,
            path.string() + ": expected header image_id,label");
    LabelTable out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto where = path.string() + ":" + std::to_string(t.line_numbers[r]);
        const int label = detail::parse_label(t.rows[r][1], where);
        require(out.by_id.emplace(t.rows[r][0], label).second, ErrorCode::format,
                where + ": duplicate image_id '" + t.rows[r][0] + "'");
        out.ids.push_back(t.rows[r][0]);
        out.labels.push_back(label);
    }
    return out;
}

inline void write_labels_csv(const LabelTable& labels, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << "image_id,label\n";
    for (std::size_t i = 0; i < labels.ids.size(); ++i) out << labels.ids[i] << ',' << labels.labels[i] << '\n';
    detail::close_output(out, path);
}

/// One image id per line, in feature-matrix row order.
inline std::vector<std::string> read_id_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::file_not_found, "cannot open " + path.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

inline void write_id_list(std::span<const std::string> ids, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    for (const auto& id : ids) out << id << '\n';
    detail::close_output(out, path);
}

/// Id list stored next to a feature matrix: `features.featmat` -> `features.ids`.
inline std::filesystem::path id_list_path(const std::filesystem::path& featmat) {
    auto p = featmat;
    p.replace_extension(".ids");
    return p;
}

/// Joins a feature matrix with its id list and a labels table. Rows without a
/// label are an error, so training never silently drops samples.
inline FeatureDataset load_labelled_features(const std::filesystem::path& featmat,
                                             const std::filesystem::path& labels_csv) {
    FeatureDataset ds;
    ds.features = read_feature_matrix(featmat);
    ds.ids = read_id_list(id_list_path(featmat));
    require(ds.ids.size() == ds.features.rows(), ErrorCode::shape_mismatch,
            "id list has " + std::to_string(ds.ids.size()) + " entries but the feature matrix has " +
                std::to_string(ds.features.rows()) + " rows");
    const auto labels = read_labels_csv(labels_csv);
    for (const auto& id : ds.ids) {
        const auto it = labels.by_id.find(id);
        require(it != labels.by_id.end(), ErrorCode::invalid_argument, "no label for image_id '" + id + "'");
        ds.labels.push_back(it->second);
    }
    ds.validate();
    return ds;
}

struct PredictionRecord {
    std::string id;
    std::vector<double> probabilities;  // 3 values, or 1 value (p_bad)
    int label = 0;                      // class index, or 1 = Ungradable for scalar heads
};

/// Scalar heads write `image_id,p_bad`; three-class heads add the class
/// probabilities and the argmax label.
inline void write_predictions_csv(std::span<const PredictionRecord> records, bool scalar, std::ostream& out) {
    out << (scalar ? "image_id,p_bad\n" : "image_id,p_good,p_usable,p_bad,pred_label\n");
    for (const auto& r : records) {
        out << r.id;
        for (double p : r.probabilities) out << ',' << format_real(p);
        if (!scalar) out << ',' << r.label;
        out << '\n';
    }
}

inline nlohmann::json predictions_to_json(std::span<const PredictionRecord> records) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& r : records) {
        nlohmann::json j{{"image_id", r.id}};
        if (r.probabilities.size() == 1) {
            j["p_bad"] = r.probabilities[0];
            j["ungradable"] = r.label == 1;
        } else {
            j["p_good"] = r.probabilities[0];
            j["p_usable"] = r.probabilities[1];
            j["p_bad"] = r.probabilities[2];
            j["pred_label"] = r.label;
        }
        items.push_back(std::move(j));
    }
    return {{"schema_version", kSchemaVersion}, {"predictions", std::move(items)}};
}

/// Reads a predictions CSV and attaches truth from the labels table. Both
/// files must cover exactly the same ids.
inline PredictionSet read_predictions_csv(const std::filesystem::path& path, const LabelTable& labels) {
    const auto t = detail::read_csv(path);
    const std::vector<std::string> three{"image_id", "p_good", "p_usable", "p_bad", "pred_label"};
    const std::vector<std::string> one{"image_id", "p_bad"};
    require(t.header == three || t.header == one, ErrorCode::format,
            path.string() + ": expected header image_id,p_good,p_usable,p_bad,pred_label or image_id,p_bad");
    const std::size_t cols = t.header == three ? 3 : 1;

    PredictionSet ps;
    ps.probabilities = Matrix<double>(0, cols);
    std::map<std::string, bool> seen;
    std::vector<double> row(cols);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto where = path.string() + ":" + std::to_string(t.line_numbers[r]);
        const auto& id = t.rows[r][0];
        require(seen.emplace(id, true).second, ErrorCode::format, where + ": duplicate image_id '" + id + "'");
        const auto it = labels.by_id.find(id);
        require(it != labels.by_id.end(), ErrorCode::invalid_argument,
                where + ": image_id '" + id + "' has no label");
        for (std::size_t c = 0; c < cols; ++c) row[c] = detail::parse_real(t.rows[r][1 + c], where);
        ps.ids.push_back(id);
        ps.probabilities.append_row(row);
        ps.true_labels.push_back(it->second);
    }
    for (const auto& id : labels.ids)
        require(seen.count(id) == 1, ErrorCode::invalid_argument, "labelled image_id '" + id + "' has no prediction");
    ps.validate();
    return ps;
}

inline nlohmann::json report_to_json(const MetricsReport& r, std::string_view task) {
    nlohmann::json counts = nlohmann::json::array();
    for (std::size_t i = 0; i < r.confusion.counts.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (auto c : r.confusion.counts.row(i)) row.push_back(c);
        counts.push_back(std::move(row));
    }
    nlohmann::json j{{"schema_version", kSchemaVersion},
                     {"task", task},
                     {"n", r.n},
                     {"accuracy", r.accuracy},
                     {"auc", r.auc},
                     {"f1", r.f1},
                     {"logloss", r.logloss},
                     {"confusion", std::move(counts)}};
    j["kappa"] = r.kappa ? nlohmann::json(*r.kappa) : nlohmann::json(nullptr);
    j["quadkappa"] = r.quadkappa ? nlohmann::json(*r.quadkappa) : nlohmann::json(nullptr);
    return j;
}

/// Counts and row-normalised fractions, rows = truth.
inline void write_confusion_csv(const ConfusionMatrix& cm, std::ostream& out) {
    const auto norm = row_normalize(cm);
    out << "true_class,pred_class,count,fraction\n";
    for (std::size_t t = 0; t < cm.counts.rows(); ++t)
        for (std::size_t p = 0; p < cm.counts.cols(); ++p)
            out << t << ',' << p << ',' << cm.counts(t, p) << ',' << format_real(norm(t, p)) << '\n';
}

inline void write_histogram_csv(std::span<const HistogramCell> cells, std::ostream& out) {
    out << "true_class,prob_column,bin_lo,bin_hi,count\n";
    for (const auto& c : cells)
        for (std::size_t b = 0; b < c.counts.size(); ++b)
            out << c.true_class << ',' << c.prob_column << ',' << format_real(c.edges[b]) << ','
                << format_real(c.edges[b + 1]) << ',' << c.counts[b] << '\n';
}

inline void write_selection_trace_csv(const SelectionResult& r, std::ostream& out) {
    out << "step,feature_index,cv_auc\n";
    for (std::size_t s = 0; s < r.ordered_selected.size(); ++s)
        out << s + 1 << ',' << r.ordered_selected[s] << ',' << format_real(r.cv_auc_trace[s]) << '\n';
}

/// Histogram of the nonzero L1 coefficients; `above_cutoff` marks bins
/// entirely beyond the shortlist cutoff.
inline void write_coefficient_histogram_csv(std::span<const double> coefficients, double cutoff, std::ostream& out,
                                            int bins = 40) {
    require(bins >= 1, ErrorCode::invalid_argument, "histogram needs at least one bin");
    double lo = 0.0, hi = 0.0;
    for (double c : coefficients) {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    lo = std::min(lo, -cutoff);
    hi = std::max(hi, cutoff);
    if (hi == lo) hi = lo + 1.0;
    std::vector<long long> counts(static_cast<std::size_t>(bins), 0);
    for (double c : coefficients) {
        if (c == 0.0) continue;
        auto b = static_cast<std::size_t>((c - lo) / (hi - lo) * bins);
        counts[std::min(b, counts.size() - 1)] += 1;
    }
    out << "bin_lo,bin_hi,count,above_cutoff\n";
    for (int b = 0; b < bins; ++b) {
        const double a = lo + (hi - lo) * b / bins, z = lo + (hi - lo) * (b + 1) / bins;
        const bool above = a >= cutoff || z <= -cutoff;
        out << format_real(a) << ',' << format_real(z) << ',' << counts[static_cast<std::size_t>(b)] << ','
            << (above ? 1 : 0) << '\n';
    }
}

}  // namespace quickqual
