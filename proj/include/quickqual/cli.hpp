#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "quickqual/backbone.hpp"
#include "quickqual/blob_io.hpp"
#include "quickqual/dataset_io.hpp"
#include "quickqual/error.hpp"
#include "quickqual/head_io.hpp"
#include "quickqual/heads.hpp"
#include "quickqual/image_io.hpp"
#include "quickqual/imageproc.hpp"
#include "quickqual/metrics.hpp"
#include "quickqual/training/binary_head.hpp"
#include "quickqual/training/selection.hpp"
#include "quickqual/training/svm.hpp"

namespace quickqual::cli {

inline constexpr const char* kBuiltinMeme = "builtin-meme";

enum class OutputFormat { csv, json };

/// Exit codes: 0 success, 1 some inputs failed, 2 the command could not run.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitFatal = 2;

struct CliConfig {
    std::optional<std::string> model_path;
    std::string head = kBuiltinMeme;
    PreprocessMode mode = PreprocessMode::paper;
    int batch_size = 1;
    OutputFormat format = OutputFormat::csv;
    std::uint64_t seed = 0;
    int reps = 1000;

    void validate() const {
        require(batch_size >= 1, ErrorCode::invalid_argument, "batch size must be >= 1");
        require(reps >= 1, ErrorCode::invalid_argument, "repetitions must be >= 1");
    }
};

/// A head ready for inference; the builtin MEME head is kept distinct so that
/// scoring goes through meme_predict itself.
struct ScoringHead {
    std::variant<std::monostate, LinearHead, SvmHead> head;  // monostate = builtin MEME

    [[nodiscard]] bool scalar() const { return !std::holds_alternative<SvmHead>(head); }

    PredictionRecord predict(const std::string& id, const FeatureVector& f) const {
        PredictionRecord r{id, {}, 0};
        if (const auto* svm = std::get_if<SvmHead>(&head)) {
            const auto p = svm_predict_proba(*svm, f);
            r.probabilities.assign(p.p.begin(), p.p.end());
            r.label = static_cast<int>(classify(p));
            return r;
        }
        const auto s = std::holds_alternative<LinearHead>(head) ? linear_predict(std::get<LinearHead>(head), f)
                                                                : meme_predict(f);
        r.probabilities = {s.p_bad};
        r.label = threshold_classify(s) == Gradability::ungradable ? 1 : 0;
        return r;
    }
};

inline ScoringHead load_scoring_head(const std::string& source) {
    if (source == kBuiltinMeme) return {};
    auto h = load_head(source);
    if (auto* lin = std::get_if<LinearHead>(&h)) return {*lin};
    return {std::get<SvmHead>(h)};
}

struct FileError {
    std::string id;
    std::string path;
    std::string message;
};

namespace detail {

inline std::vector<std::string> unique_ids(std::span<const std::string> inputs) {
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& in : inputs) {
        ids.push_back(image_id(in));
        require(seen.insert(ids.back()).second, ErrorCode::invalid_argument,
                "two inputs share the image id '" + ids.back() + "'");
    }
    return ids;
}

/// Loads and preprocesses one batch, then runs the backbone over the images
/// that succeeded. Failures are recorded per file and do not stop the batch.
inline void featurize_batch(const BackboneSession& session, std::span<const std::string> paths,
                            std::span<const std::string> ids, const PreprocessConfig& pcfg,
                            std::vector<std::optional<FeatureVector>>& out, std::vector<FileError>& errors) {
    std::vector<PreprocessedTensor> tensors;
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        try {
            tensors.push_back(preprocess(load_image(paths[i]), pcfg));
            slots.push_back(i);
        } catch (const Error& e) {
            errors.push_back({ids[i], paths[i], e.what()});
        }
        out.emplace_back();
    }
    const std::size_t base = out.size() - paths.size();
    try {
        auto feats = session.extract_features(tensors);
        for (std::size_t k = 0; k < slots.size(); ++k) out[base + slots[k]] = std::move(feats[k]);
    } catch (const Error&) {
        // retry one by one so a single bad tensor only costs its own record
        for (std::size_t k = 0; k < slots.size(); ++k) {
            try {
                out[base + slots[k]] = session.extract_features(tensors[k]);
            } catch (const Error& e) {
                errors.push_back({ids[slots[k]], paths[slots[k]], e.what()});
            }
        }
    }
}

inline std::vector<std::optional<FeatureVector>> featurize_all(const BackboneSession& session,
                                                                std::span<const std::string> paths,
                                                                std::span<const std::string> ids,
                                                                const CliConfig& cfg, std::vector<FileError>& errors) {
    PreprocessConfig pcfg;
    pcfg.mode = cfg.mode;
    pcfg.target_size = session.input_size();
    std::vector<std::optional<FeatureVector>> out;
    out.reserve(paths.size());
    const auto step = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < paths.size(); start += step) {
        const std::size_t n = std::min(step, paths.size() - start);
        featurize_batch(session, paths.subspan(start, n), ids.subspan(start, n), pcfg, out, errors);
    }
    return out;
}

inline void report_errors(std::span<const FileError> errors, std::ostream& err) {
    for (const auto& e : errors) err << "error: " << e.path << ": " << e.message << '\n';
}

inline std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
    auto out = p;
    out.replace_extension();
    out += suffix;
    return out;
}

inline std::ofstream open_file(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::io, "cannot write " + p.string());
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------- commands

/// Scores each image and writes one record per successfully scored input, in
/// input order. Model and head are loaded before any output is produced.
inline int cmd_score(std::span<const std::string> inputs, const CliConfig& cfg, std::ostream& out,
                     std::ostream& err) {
    cfg.validate();
    const auto ids = detail::unique_ids(inputs);
    const auto head = load_scoring_head(cfg.head);
    const auto session = load_backbone(resolve_model_path(cfg.model_path));

    std::vector<FileError> errors;
    const auto feats = detail::featurize_all(session, inputs, ids, cfg, errors);
    std::vector<PredictionRecord> records;
    for (std::size_t i = 0; i < feats.size(); ++i)
        if (feats[i]) records.push_back(head.predict(ids[i], *feats[i]));

    if (cfg.format == OutputFormat::csv) {
        write_predictions_csv(records, head.scalar(), out);
    } else {
        auto j = predictions_to_json(records);
        j["errors"] = nlohmann::json::array();
        for (const auto& e : errors) j["errors"].push_back({{"image_id", e.id}, {"path", e.path}, {"error", e.message}});
        out << j.dump(2) << '\n';
    }
    detail::report_errors(errors, err);
    return errors.empty() ? kExitOk : kExitPartial;
}

/// Writes `<out>` (feature matrix), `<out stem>.ids` and `<out stem>.errors.csv`.
inline int cmd_extract_features(std::span<const std::string> inputs, const CliConfig& cfg,
                                const std::filesystem::path& out_path, std::ostream& err) {
    cfg.validate();
    const auto ids = detail::unique_ids(inputs);
    const auto session = load_backbone(resolve_model_path(cfg.model_path));

    std::vector<FileError> errors;
    const auto feats = detail::featurize_all(session, inputs, ids, cfg, errors);
    Matrix<float> m(0, kFeatureDim);
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        if (!feats[i]) continue;
        m.append_row(feats[i]->view());
        kept.push_back(ids[i]);
    }
    write_feature_matrix(m, out_path);
    write_id_list(kept, id_list_path(out_path));
    auto sidecar = detail::open_file(detail::sibling(out_path, ".errors.csv"));
    sidecar << "image_id,error\n";
    for (const auto& e : errors) {
        std::string msg = e.message;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        sidecar << e.id << ',' << msg << '\n';
    }
    detail::report_errors(errors, err);
    return errors.empty() ? kExitOk : kExitPartial;
}

enum class TrainTask { three_class_svm, fixed_prior, binary };

inline TrainTask parse_train_task(const std::string& s) {
    if (s == "three-class-svm") return TrainTask::three_class_svm;
    if (s == "fixed-prior") return TrainTask::fixed_prior;
    if (s == "binary") return TrainTask::binary;
    fail(ErrorCode::invalid_argument, "unknown task '" + s + "' (expected three-class-svm|fixed-prior|binary)");
}

struct TrainOptions {
    TrainTask task = TrainTask::three_class_svm;
    double prior = 0.5;
    std::optional<Learner> learner;  // binary task: svm unless overridden
};

inline Head train_head(const FeatureDataset& data, const TrainOptions& opt, const CliConfig& cfg) {
    SvmConfig svm;
    svm.seed = cfg.seed;
    switch (opt.task) {
        case TrainTask::three_class_svm:
            return fit_svm_multiclass(data, svm);
        case TrainTask::fixed_prior:
            return fit_binary_head(data, FixedPrior{opt.prior}, opt.learner.value_or(Learner::logistic), {}, svm);
        case TrainTask::binary:
            return fit_binary_head(data, BinarizedGradable{}, opt.learner.value_or(Learner::svm), {}, svm);
    }
    fail(ErrorCode::invalid_argument, "unknown task");
}

inline int cmd_train_head(const std::filesystem::path& features, const std::filesystem::path& labels,
                          const TrainOptions& opt, const CliConfig& cfg, const std::filesystem::path& out_path) {
    cfg.validate();
    const auto data = load_labelled_features(features, labels);
    save_head(train_head(data, opt, cfg), out_path);
    return kExitOk;
}

struct SelectOptions {
    double cutoff = 0.2;
    std::size_t k = 9;
    int folds = 2;
    double prior = 0.5;
};

struct SelectionOutcome {
    ShortlistResult shortlist;
    SelectionResult selection;
    LinearHead head;  // rounded to two decimals
};

/// L1 shortlist on fixed-prior targets, forward stepwise selection scored by
/// Bad-vs-rest AUC, then an L2 refit on the selected columns.
inline SelectionOutcome select_features(const FeatureDataset& data, const SelectOptions& opt, std::uint64_t seed) {
    data.validate();
    const auto x = to_double(data.features);
    const auto t = make_fixed_prior_targets(data.labels, opt.prior);
    std::vector<int> positive;
    for (int l : data.labels) positive.push_back(l == 2 ? 1 : 0);

    SelectionOutcome r;
    r.shortlist = l1_shortlist(x, t, opt.cutoff);
    StepwiseConfig scfg;
    scfg.k = opt.k;
    scfg.folds = opt.folds;
    scfg.seed = seed;
    r.selection = forward_stepwise_select({x, t, data.labels, positive}, r.shortlist.indices, scfg);
    r.head = round_params(refit_selected(x, t, r.selection.ordered_selected, scfg.refit));
    return r;
}

/// Writes the head JSON to `<out>`, plus `<out stem>.trace.csv` and
/// `<out stem>.coefficients.csv`.
inline int cmd_select_features(const std::filesystem::path& features, const std::filesystem::path& labels,
                               const SelectOptions& opt, const CliConfig& cfg, const std::filesystem::path& out_path) {
    cfg.validate();
    const auto data = load_labelled_features(features, labels);
    const auto r = select_features(data, opt, cfg.seed);
    save_head(r.head, out_path);
    auto trace = detail::open_file(detail::sibling(out_path, ".trace.csv"));
    write_selection_trace_csv(r.selection, trace);
    auto coef = detail::open_file(detail::sibling(out_path, ".coefficients.csv"));
    write_coefficient_histogram_csv(r.shortlist.coefficients, opt.cutoff, coef);
    return kExitOk;
}

enum class EvalTask { three_class, binary };

inline EvalTask parse_eval_task(const std::string& s) {
    if (s == "three-class") return EvalTask::three_class;
    if (s == "binary") return EvalTask::binary;
    fail(ErrorCode::invalid_argument, "unknown task '" + s + "' (expected three-class|binary)");
}

/// Writes the report JSON to `<out>`, plus `<out stem>.confusion.csv` and
/// `<out stem>.histogram.csv`. Nothing is written if the inputs disagree.
inline int cmd_evaluate(const std::filesystem::path& predictions, const std::filesystem::path& labels, EvalTask task,
                        double cutoff, const std::filesystem::path& out_path) {
    const auto preds = read_predictions_csv(predictions, read_labels_csv(labels));
    const auto report = task == EvalTask::three_class ? evaluate_three_class(preds) : evaluate_binary(preds, cutoff);
    const auto hist = probability_histograms(preds);

    auto out = detail::open_file(out_path);
    out << report_to_json(report, task == EvalTask::three_class ? "three-class" : "binary").dump(2) << '\n';
    auto cm = detail::open_file(detail::sibling(out_path, ".confusion.csv"));
    write_confusion_csv(report.confusion, cm);
    auto hf = detail::open_file(detail::sibling(out_path, ".histogram.csv"));
    write_histogram_csv(hist, hf);
    return kExitOk;
}

struct BenchResult {
    int reps = 0;
    double mean_ms = 0.0;
    double std_ms = 0.0;  // population standard deviation
};

/// Per-image latency of decode, preprocessing, feature extraction and head,
/// after one untimed warm-up run. Model loading is excluded.
inline BenchResult run_bench(const std::filesystem::path& image, const BackboneSession& session,
                             const ScoringHead& head, PreprocessMode mode, int reps) {
    require(reps >= 1, ErrorCode::invalid_argument, "repetitions must be >= 1");
    PreprocessConfig pcfg;
    pcfg.mode = mode;
    pcfg.target_size = session.input_size();
    const auto id = image_id(image);
    auto once = [&] { return head.predict(id, session.extract_features(preprocess(load_image(image), pcfg))); };
    once();

    std::vector<double> ms;
    ms.reserve(static_cast<std::size_t>(reps));
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto rec = once();
        const auto t1 = std::chrono::steady_clock::now();
        require(!rec.probabilities.empty(), ErrorCode::runtime_failure, "empty prediction");
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    BenchResult b;
    b.reps = reps;
    for (double v : ms) b.mean_ms += v;
    b.mean_ms /= reps;
    for (double v : ms) b.std_ms += (v - b.mean_ms) * (v - b.mean_ms);
    b.std_ms = std::sqrt(b.std_ms / reps);
    return b;
}

inline int cmd_bench(const std::filesystem::path& image, const CliConfig& cfg, std::ostream& out) {
    cfg.validate();
    const auto head = load_scoring_head(cfg.head);
    const auto session = load_backbone(resolve_model_path(cfg.model_path));
    const auto b = run_bench(image, session, head, cfg.mode, cfg.reps);
    if (cfg.format == OutputFormat::csv) {
        out << "head,reps,mean_ms,std_ms\n"
            << cfg.head << ',' << b.reps << ',' << format_real(b.mean_ms) << ',' << format_real(b.std_ms) << '\n';
    } else {
        out << nlohmann::json{{"schema_version", kSchemaVersion},
                              {"head", cfg.head},
                              {"reps", b.reps},
                              {"mean_ms", b.mean_ms},
                              {"std_ms", b.std_ms}}
                   .dump(2)
            << '\n';
    }
    return kExitOk;
}

// ------------------------------------------------------------------ parsing

/// Parses argv and dispatches. Library errors are reported on `err` and
/// mapped to kExitFatal.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Retinal image quality scoring"};
    app.require_subcommand(1);

    CliConfig cfg;
    std::string model, mode = "paper", format = "csv", out_path;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--model", model, "ONNX feature extractor (default: $QUICKQUAL_MODEL_PATH, then " +
                                              std::string(kDefaultModelPath) + ")");
        sub->add_option("--mode", mode, "Preprocessing: paper|raw")->check(CLI::IsMember({"paper", "raw"}));
        sub->add_option("--batch-size", cfg.batch_size, "Images per forward pass")->check(CLI::PositiveNumber);
    };

    std::vector<std::string> inputs;
    auto* score = app.add_subcommand("score", "Score images");
    common(score);
    score->add_option("inputs", inputs, "Image files");
    score->add_option("--head", cfg.head, "builtin-meme or a head model JSON");
    score->add_option("--format", format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    score->add_option("--out", out_path, "Output file (default: stdout)");

    auto* extract = app.add_subcommand("extract-features", "Write a feature matrix for images");
    common(extract);
    extract->add_option("inputs", inputs, "Image files");
    extract->add_option("--out", out_path, "Feature matrix (.featmat)")->required();

    std::string features, labels, task;
    TrainOptions topt;
    std::string learner;
    auto* train = app.add_subcommand("train-head", "Train a head on extracted features");
    train->add_option("features", features, "Feature matrix (.featmat)")->required();
    train->add_option("labels", labels, "Labels CSV (image_id,label)")->required();
    train->add_option("--task", task, "three-class-svm|fixed-prior|binary")->default_str("three-class-svm");
    train->add_option("--prior", topt.prior, "Fixed prior for Usable images")->default_val(0.5);
    train->add_option("--learner", learner, "logistic|svm (binary tasks only)");
    train->add_option("--seed", cfg.seed, "Seed for calibration folds");
    train->add_option("--out", out_path, "Head model JSON")->required();

    SelectOptions sopt;
    auto* select = app.add_subcommand("select-features", "Select a small linear head");
    select->add_option("features", features, "Feature matrix (.featmat)")->required();
    select->add_option("labels", labels, "Labels CSV (image_id,label)")->required();
    select->add_option("--cutoff", sopt.cutoff, "L1 coefficient magnitude cutoff")->default_val(0.2);
    select->add_option("--k", sopt.k, "Features to select")->default_val(9);
    select->add_option("--folds", sopt.folds, "Cross-validation folds")->default_val(2);
    select->add_option("--prior", sopt.prior, "Fixed prior for Usable images")->default_val(0.5);
    select->add_option("--seed", cfg.seed, "Seed for the fold split");
    select->add_option("--out", out_path, "Head model JSON")->required();

    std::string predictions;
    double cutoff = 0.5;
    auto* evaluate = app.add_subcommand("evaluate", "Compute metrics for a predictions file");
    evaluate->add_option("predictions", predictions, "Predictions CSV")->required();
    evaluate->add_option("labels", labels, "Labels CSV (image_id,label)")->required();
    evaluate->add_option("--task", task, "three-class|binary")->default_str("three-class");
    evaluate->add_option("--cutoff", cutoff, "p(Bad) threshold for the binary task")->default_val(0.5);
    evaluate->add_option("--out", out_path, "Report JSON")->required();

    std::string image;
    auto* bench = app.add_subcommand("bench", "Measure single-image latency");
    common(bench);
    bench->add_option("image", image, "Image file")->required();
    bench->add_option("--head", cfg.head, "builtin-meme or a head model JSON");
    bench->add_option("--reps", cfg.reps, "Timed repetitions")->default_val(1000)->check(CLI::PositiveNumber);
    bench->add_option("--format", format, "csv|json")->check(CLI::IsMember({"csv", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitFatal;
    }

    try {
        if (!model.empty()) cfg.model_path = model;
        cfg.mode = parse_preprocess_mode(mode);
        cfg.format = format == "json" ? OutputFormat::json : OutputFormat::csv;

        if (score->parsed()) {
            if (out_path.empty()) return cmd_score(inputs, cfg, out, err);
            std::ostringstream buf;
            const int rc = cmd_score(inputs, cfg, buf, err);
            auto f = detail::open_file(out_path);
            f << buf.str();
            return rc;
        }
        if (extract->parsed()) return cmd_extract_features(inputs, cfg, out_path, err);
        if (train->parsed()) {
            topt.task = parse_train_task(task.empty() ? "three-class-svm" : task);
            if (!learner.empty()) topt.learner = parse_learner(learner);
            return cmd_train_head(features, labels, topt, cfg, out_path);
        }
        if (select->parsed()) return cmd_select_features(features, labels, sopt, cfg, out_path);
        if (evaluate->parsed())
            return cmd_evaluate(predictions, labels, parse_eval_task(task.empty() ? "three-class" : task), cutoff,
                                out_path);
        if (bench->parsed()) return cmd_bench(image, cfg, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitFatal;
    }
    return kExitFatal;
}

}  // namespace quickqual::cli
