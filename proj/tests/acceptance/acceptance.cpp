// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "quickqual/cli.hpp"
#include "quickqual/quickqual.hpp"
#include "support.hpp"

using namespace quickqual;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool cond, const std::string& what) {
        if (!cond && ok) detail << what;
        ok = ok && cond;
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

// ------------------------------------------------------------------ parity

Check golden_parity() {
    Check c;
    const auto t0 = Clock::now();
    const auto manifest = qqtest::load_json(qqtest::fixture_dir() / "manifest.json");
    const auto session = load_backbone(qqtest::fixture_model());
    double worst_px = 0, worst_feat = 0, worst_pred = 0;
    for (const auto& fx : manifest.at("fixtures")) {
        const auto id = fx.at("id").get<std::string>();
        const bool lossy = fx.at("lossy").get<bool>();
        const auto expected = read_tensor(qqtest::fixture_dir() / (id + ".qqt"));
        const auto tensor = preprocess(load_image(qqtest::fixture_dir() / fx.at("image").get<std::string>()));
        c.expect(tensor.channels == expected.channels && tensor.height == expected.height &&
                     tensor.width == expected.width,
                 id + ": tensor shape differs");
        if (!c.ok) continue;
        double px = 0;
        for (std::size_t i = 0; i < tensor.data.size(); ++i)
            px = std::max(px, static_cast<double>(std::abs(tensor.data[i] - expected.data[i])));
        worst_px = std::max(worst_px, px);
        // one 8-bit step is 2/255 after normalisation
        if (lossy) c.expect(px <= 2.0 / 255.0 + 1e-6, id + ": pixel deviation " + fmt(px * 127.5) + " steps");
        else c.expect(px == 0.0, id + ": synthetic tensor not exact");

        const auto feats = session.extract_features(tensor);
        const auto ref = read_feature_blob(qqtest::fixture_dir() / (id + ".feat"));
        double fd = 0;
        for (std::size_t j = 0; j < ref.size(); ++j)
            fd = std::max(fd, static_cast<double>(std::abs(feats[j] - ref[j])));
        worst_feat = std::max(worst_feat, fd);
        c.expect(fd <= 1e-3, id + ": feature deviation " + fmt(fd));

        const double p = meme_predict(feats).p_bad;
        const double pd = std::abs(p - read_prediction_blob(qqtest::fixture_dir() / (id + ".pred")));
        worst_pred = std::max(worst_pred, pd);
        c.expect(pd <= 1e-4, id + ": prediction deviation " + fmt(pd));
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 30.0, "runtime " + fmt(secs) + " s");
    if (c.ok)
        c.detail << "8 fixtures; max |tensor| " << fmt(worst_px) << ", max |feature| " << fmt(worst_feat)
                 << ", max |p_bad| " << fmt(worst_pred) << ", " << fmt(secs) << " s";
    return c;
}

// -------------------------------------------------------------------- MEME

Check meme_closed_form() {
    Check c;
    std::vector<float> f(kFeatureDim, 0.0f);
    const double zero = meme_predict(f).p_bad;
    c.expect(std::abs(zero - 0.99440) <= 1e-4, "zero vector gives " + fmt(zero));
    struct Case {
        std::size_t index;
        float value;
        double expected;
    };
    // sigmoid(5.18 + w_i * v), evaluated by hand at high precision
    const Case cases[] = {
        {71, 0.01f, 1.31917751213201e-4}, {55, 0.01f, 0.999999996927886}, {29, 0.001f, 0.990419131754376},
        {84, 0.5f, 0.999629393859374},    {53, 0.005f, 0.837602961020726},
    };
    double worst = 0;
    for (const auto& k : cases) {
        std::fill(f.begin(), f.end(), 0.0f);
        f[k.index] = k.value;
        const double d = std::abs(meme_predict(f).p_bad - k.expected);
        worst = std::max(worst, d);
        c.expect(d <= 1e-6, "perturbation at " + std::to_string(k.index) + " off by " + fmt(d));
    }
    if (c.ok) c.detail << "p(0) = " << zero << ", 5 perturbations within " << fmt(worst);
    return c;
}

// ---------------------------------------------------------------- logistic

Check logistic_trainer() {
    Check c;
    Rng rng(20240101);
    double worst_rel = 0, worst_res = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 10 + rng.below(91), d = 1 + rng.below(10);
        const auto x = qqtest::random_matrix(rng, n, d);
        std::vector<double> t;
        for (std::size_t i = 0; i < n; ++i) t.push_back(trial % 2 ? rng.uniform() : static_cast<double>(rng.below(2)));
        LogisticConfig cfg;
        cfg.penalty = trial % 4 == 0 ? Penalty::none : Penalty::l2;
        const SoftTargetLoss loss(x, t, cfg);

        std::vector<double> theta(d + 1), grad(d + 1);
        for (auto& v : theta) v = rng.normal();
        loss.smooth(theta, grad);
        double err = 0, norm = 0;
        for (std::size_t j = 0; j <= d; ++j) {
            auto a = theta, b = theta;
            a[j] += 1e-5;
            b[j] -= 1e-5;
            const double fd = (loss.smooth(a, {}) - loss.smooth(b, {})) / 2e-5;
            err += (fd - grad[j]) * (fd - grad[j]);
            norm += grad[j] * grad[j];
        }
        const double rel = std::sqrt(err) / std::max(std::sqrt(norm), 1e-12);
        worst_rel = std::max(worst_rel, rel);
        c.expect(rel < 1e-4, "gradient check " + std::to_string(trial) + ": relative error " + fmt(rel));

        if (cfg.penalty == Penalty::none && trial % 2 == 0) cfg.penalty = Penalty::l2;  // hard targets may separate
        const auto fit = fit_logistic_detailed(x, t, cfg);
        std::vector<double> at(fit.head.weights);
        at.push_back(fit.head.bias);
        SoftTargetLoss(x, t, cfg).smooth(at, grad);
        double gmax = 0;
        for (double g : grad) gmax = std::max(gmax, std::abs(g));
        worst_res = std::max(worst_res, gmax);
        c.expect(gmax < 1e-6, "instance " + std::to_string(trial) + ": gradient max-norm " + fmt(gmax));
    }

    FeatureDataset data;
    data.features = Matrix<float>(90, 16);
    for (auto& v : data.features.data()) v = static_cast<float>(rng.normal());
    for (std::size_t i = 0; i < 90; ++i)
        data.labels.push_back(data.features(i, 3) > 0.6f ? 2 : data.features(i, 3) > -0.4f ? 1 : 0);
    const auto a = fit_binary_head(data, FixedPrior{0.0}, Learner::logistic);
    const auto b = fit_binary_head(data, BinarizedGradable{}, Learner::logistic);
    c.expect(a == b && to_json(a).dump() == to_json(b).dump(), "fixed-prior p=0 head differs from binarized head");
    if (c.ok)
        c.detail << "20 gradient checks (max rel " << fmt(worst_rel) << "), max residual " << fmt(worst_res)
                 << ", p=0 head bit-identical";
    return c;
}

// --------------------------------------------------------------------- SVM

struct ToySet {
    std::string name;
    Matrix<double> x;
    std::vector<int> y;
    Matrix<double> probes;
    nlohmann::json rec;
};

std::vector<ToySet> toy_sets() {
    const auto j = qqtest::load_json(qqtest::data_dir() / "svm_oracle.json");
    std::vector<ToySet> out;
    for (const auto& s : j.at("sets"))
        out.push_back({s.at("name").get<std::string>(), qqtest::matrix_from_json(s.at("x"), kFeatureDim),
                       s.at("y").get<std::vector<int>>(), qqtest::matrix_from_json(s.at("probes"), kFeatureDim), s});
    return out;
}

std::vector<float> as_float(std::span<const double> r) { return {r.begin(), r.end()}; }

Check svm_trainer() {
    Check c;
    const auto sets = toy_sets();
    double worst_kkt = 0, worst_dup = 0, worst_sum = 0, worst_ref = 0;
    for (const auto& s : sets) {
        const double gamma = s.rec.at("gamma").get<double>();
        std::vector<int> y;
        for (int v : s.y) y.push_back(v == s.y[0] ? 1 : -1);

        if (s.name == "xor") {
            SvmConfig cfg;
            cfg.gamma = 1.0;
            cfg.probability = false;
            const auto head = fit_svm_multiclass(s.x, s.y, cfg);
            int correct = 0;
            for (std::size_t i = 0; i < s.x.rows(); ++i)
                correct += (svm_decision(head.pairs[0], head.gamma, as_float(s.x.row(i))) > 0 ? 0 : 2) == s.y[i];
            c.expect(correct == 4, "XOR training accuracy " + std::to_string(correct) + "/4");
        }

        // KKT: margins against the returned multipliers
        const auto res = solve_smo(s.x, y, gamma, SmoConfig{});
        const RbfKernelRows k(s.x, gamma, 1 << 20);
        for (std::size_t i = 0; i < y.size(); ++i) {
            double f = -res.rho;
            for (std::size_t j = 0; j < y.size(); ++j) f += res.alpha[j] * y[j] * k(i, j);
            const double m = y[i] * f;
            double v = 0;
            if (res.alpha[i] <= 0) v = std::max(0.0, 1 - m);
            else if (res.alpha[i] >= 1.0) v = std::max(0.0, m - 1);
            else v = std::abs(m - 1);
            worst_kkt = std::max(worst_kkt, v);
        }

        // duplication: each sample twice with C halved
        if (s.name != "xor") {
            Matrix<double> xx = s.x;
            std::vector<int> yy = y;
            for (std::size_t i = 0; i < s.x.rows(); ++i) {
                xx.append_row(s.x.row(i));
                yy.push_back(y[i]);
            }
            SvmConfig one;
            one.C = 8.0;
            one.tolerance = 1e-10;
            SvmConfig two = one;
            two.C = 4.0;
            const auto ma = detail::train_binary(s.x, y, gamma, one);
            const auto mb = detail::train_binary(xx, yy, gamma, two);
            std::vector<double> q(kFeatureDim, 0.0);
            for (int a = -4; a <= 4; ++a)
                for (int b = -4; b <= 4; ++b) {
                    q[0] = a;
                    q[1] = 0.75 * b;
                    worst_dup = std::max(worst_dup, std::abs(detail::decision(ma, s.x, q, gamma) -
                                                             detail::decision(mb, xx, q, gamma)));
                }

            SvmConfig ref;
            ref.seed = s.rec.at("cv_seed").get<std::uint64_t>();
            const auto head = fit_svm_multiclass(s.x, s.y, ref);
            const auto classes = s.rec.at("classes").get<std::vector<int>>();
            auto compare = [&](const Matrix<double>& pts, const nlohmann::json& ref) {
                for (std::size_t r = 0; r < pts.rows(); ++r) {
                    const auto p = svm_predict_proba(head, as_float(pts.row(r)));
                    worst_sum = std::max(worst_sum, std::abs(p.p[0] + p.p[1] + p.p[2] - 1.0));
                    for (std::size_t ci = 0; ci < classes.size(); ++ci)
                        worst_ref = std::max(worst_ref, std::abs(p.p[static_cast<std::size_t>(classes[ci])] -
                                                                 ref.at(r).at(ci).get<double>()));
                }
            };
            compare(s.probes, s.rec.at("probe_proba"));
            compare(s.x, s.rec.at("train_proba"));
        }
    }
    c.expect(worst_kkt < 1e-3, "KKT violation " + fmt(worst_kkt));
    c.expect(worst_dup <= 1e-6, "duplication changes decisions by " + fmt(worst_dup));
    c.expect(worst_sum <= 1e-9, "probabilities sum off by " + fmt(worst_sum));
    c.expect(worst_ref <= 0.05, "reference probability gap " + fmt(worst_ref));
    if (c.ok)
        c.detail << "XOR 4/4; KKT " << fmt(worst_kkt) << "; duplication " << fmt(worst_dup) << "; sum "
                 << fmt(worst_sum) << "; vs reference " << fmt(worst_ref);
    return c;
}

// --------------------------------------------------------------- selection

Check feature_selection() {
    Check c;
    const auto t0 = Clock::now();
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(7000 + seed);
        const std::size_t n = 500, d = 51, planted = (seed * 7 + 3) % d;
        auto x = qqtest::random_matrix(rng, n, d);
        std::vector<int> labels, positive;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = 2.0 * x(i, planted) + 0.5 * rng.normal();
            labels.push_back(z < -0.6 ? 0 : z < 0.6 ? 1 : 2);
            positive.push_back(labels.back() == 2);
        }
        const auto t = make_fixed_prior_targets(labels, 0.5);
        const auto sl = l1_shortlist(x, t);
        const bool listed = std::find(sl.indices.begin(), sl.indices.end(), planted) != sl.indices.end();
        bool first = false;
        if (listed) {
            StepwiseConfig cfg;
            cfg.k = std::min<std::size_t>(9, sl.indices.size());
            cfg.seed = seed;
            const auto r = forward_stepwise_select({x, t, labels, positive}, sl.indices, cfg);
            first = r.ordered_selected.front() == planted;
        }
        hits += listed && first;
        c.expect(listed, "seed " + std::to_string(seed) + ": planted feature not shortlisted; ");
        c.expect(first, "seed " + std::to_string(seed) + ": planted feature not selected first; ");
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 60.0, "runtime " + fmt(secs) + " s");
    if (c.ok) c.detail << hits << "/10 seeds, " << fmt(secs) << " s";
    return c;
}

// ----------------------------------------------------------------- metrics

Check metrics_oracle() {
    Check c;
    const auto j = qqtest::load_json(qqtest::data_dir() / "metrics_oracle.json");
    double worst = 0;
    int sets = 0;
    for (const auto& s : j.at("sets")) {
        ++sets;
        const auto name = s.at("name").get<std::string>();
        const int k = s.at("classes").get<int>();
        const auto truth = s.at("truth").get<std::vector<int>>();
        const auto probs = qqtest::matrix_from_json(s.at("probs"));
        std::vector<int> pred;
        if (k == 3) {
            pred = argmax_labels(probs);
        } else {
            for (std::size_t i = 0; i < probs.rows(); ++i) pred.push_back(probs(i, 1) >= probs(i, 0) ? 1 : 0);
        }
        std::vector<double> p1;
        for (std::size_t i = 0; i < probs.rows(); ++i) p1.push_back(probs(i, k - 1));
        const double kap = cohen_kappa(pred, truth, KappaWeights::none, k);
        const double qk = cohen_kappa(pred, truth, KappaWeights::quadratic, k);
        const std::pair<const char*, double> got[] = {
            {"accuracy", accuracy(pred, truth)},
            {"macro_f1", macro_f1(pred, truth, k)},
            {"auc", k == 3 ? roc_auc_ovr(probs, truth) : roc_auc(p1, truth)},
            {"logloss", log_loss(probs, truth)},
            {"kappa", kap},
            {"quadkappa", qk},
        };
        for (const auto& [key, v] : got) {
            const double d = std::abs(v - s.at(key).get<double>());
            worst = std::max(worst, d);
            c.expect(d <= 1e-12, name + ": " + key + " off by " + fmt(d) + "; ");
        }
        if (k == 2) c.expect(std::abs(qk - kap) <= 1e-12, name + ": QuadKappa != Kappa; ");
    }
    c.expect(sets == 5, "expected 5 oracle sets");

    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 4 + rng.below(60);
        std::vector<double> s, u;
        std::vector<int> y;
        for (std::size_t i = 0; i < n; ++i) {
            s.push_back(std::round(rng.uniform() * 25) / 25);
            y.push_back(i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2)));
        }
        const double a = 0.01 + rng.uniform() * 10, b = rng.normal() * 3;
        for (double v : s) u.push_back(trial % 2 ? a * v + b : std::exp(2 * v) + std::pow(v, 3));
        c.expect(roc_auc(u, y) == roc_auc(s, y), "AUC not invariant in case " + std::to_string(trial) + "; ");
    }
    if (c.ok) c.detail << "5 sets within " << fmt(worst) << ", 100 transform cases";
    return c;
}

// ------------------------------------------------------------------- bench

Check latency() {
    Check c;
    const auto session = load_backbone(qqtest::fixture_model());
    const auto image = qqtest::fixture_dir() / "images" / "fixture_04.png";

    // three-class SVM head on synthetic 1024-d features
    Rng rng(5);
    Matrix<double> x(0, kFeatureDim);
    std::vector<int> y;
    std::vector<double> row(kFeatureDim);
    for (int i = 0; i < 150; ++i) {
        const int cls = i % 3;
        for (auto& v : row) v = std::abs(rng.normal()) * 0.05;
        row[static_cast<std::size_t>(10 + cls)] += 0.3;
        x.append_row(row);
        y.push_back(cls);
    }
    const cli::ScoringHead svm{fit_svm_multiclass(x, y)};
    const cli::ScoringHead meme{};

    const auto m = cli::run_bench(image, session, meme, PreprocessMode::paper, 100);
    const auto s = cli::run_bench(image, session, svm, PreprocessMode::paper, 100);
    const double rel = std::abs(s.mean_ms - m.mean_ms) / m.mean_ms;
    c.expect(m.mean_ms < 1000.0, "MEME mean " + fmt(m.mean_ms) + " ms; ");
    c.expect(s.mean_ms < 1000.0, "SVM mean " + fmt(s.mean_ms) + " ms; ");
    c.expect(rel < 0.2, "heads differ by " + fmt(100 * rel) + "%");
    c.detail << "MEME " << fmt(m.mean_ms) << " ± " << fmt(m.std_ms) << " ms, SVM " << fmt(s.mean_ms) << " ± "
             << fmt(s.std_ms) << " ms over 100 reps (difference " << fmt(100 * rel) << "%)";
    return c;
}

// ------------------------------------------------------------- determinism

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "quickqual");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

Check determinism() {
    Check c;
    const auto dir = qqtest::scratch_dir("acceptance_determinism");
    const auto model = qqtest::fixture_model().string();
    const auto img = qqtest::fixture_dir() / "images";

    // labelled synthetic features for the training commands
    Rng rng(31);
    const std::size_t n = 120;
    Matrix<float> m(n, kFeatureDim, 0.0f);
    LabelTable labels;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
        const int l = static_cast<int>(i % 3);
        for (std::size_t j = 0; j < 48; ++j) m(i, j) = static_cast<float>(rng.normal() * 0.5);
        m(i, 20) += static_cast<float>(l - 1);
        ids.push_back("s" + std::to_string(i));
        labels.ids.push_back(ids.back());
        labels.labels.push_back(l);
    }
    write_feature_matrix(m, dir / "train.featmat");
    write_id_list(ids, dir / "train.ids");
    write_labels_csv(labels, dir / "labels.csv");

    struct Cmd {
        std::string name;
        std::function<std::vector<std::string>(const std::string&)> args;
        std::vector<std::string> outputs;
    };
    const std::string f = (dir / "train.featmat").string(), l = (dir / "labels.csv").string();
    const std::vector<std::string> images{(img / "fixture_01.jpg").string(), (img / "fixture_04.png").string(),
                                          (img / "fixture_07.png").string()};
    const std::vector<Cmd> cmds{
        {"score",
         [&](const std::string& tag) {
             std::vector<std::string> a{"score", "--model", model, "--out", (dir / (tag + "_score.csv")).string()};
             a.insert(a.end(), images.begin(), images.end());
             return a;
         },
         {"_score.csv"}},
        {"extract-features",
         [&](const std::string& tag) {
             std::vector<std::string> a{"extract-features", "--model", model, "--out",
                                        (dir / (tag + "_feats.featmat")).string()};
             a.insert(a.end(), images.begin(), images.end());
             return a;
         },
         {"_feats.featmat", "_feats.ids", "_feats.errors.csv"}},
        {"train-head",
         [&](const std::string& tag) {
             return std::vector<std::string>{"train-head", f, l, "--seed", "3", "--out",
                                             (dir / (tag + "_svm.json")).string()};
         },
         {"_svm.json"}},
        {"select-features",
         [&](const std::string& tag) {
             return std::vector<std::string>{"select-features", f, l, "--k", "3", "--seed", "3", "--out",
                                             (dir / (tag + "_sel.json")).string()};
         },
         {"_sel.json", "_sel.trace.csv", "_sel.coefficients.csv"}},
    };
    for (const auto& cmd : cmds) {
        const int ra = run_cli(cmd.args("a")), rb = run_cli(cmd.args("b"));
        c.expect(ra == 0 && rb == 0, cmd.name + " failed; ");
        for (const auto& suffix : cmd.outputs) {
            const auto pa = dir / ("a" + suffix), pb = dir / ("b" + suffix);
            c.expect(std::filesystem::exists(pa) && qqtest::read_bytes(pa) == qqtest::read_bytes(pb),
                     cmd.name + ": " + suffix + " differs between runs; ");
        }
    }
    if (c.ok) c.detail << "score, extract-features, train-head, select-features bit-identical across two runs";
    return c;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
        {"golden-fixture pipeline parity", golden_parity},
        {"MEME closed-form checks", meme_closed_form},
        {"logistic trainer", logistic_trainer},
        {"SVM trainer", svm_trainer},
        {"feature selection", feature_selection},
        {"metrics oracle equivalence", metrics_oracle},
        {"end-to-end latency", latency},
        {"determinism", determinism},
    };
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        Check c;
        try {
            c = fn();
        } catch (const std::exception& e) {
            c.ok = false;
            c.detail << "exception: " << e.what();
        }
        failures += !c.ok;
        std::cout << (c.ok ? "PASS" : "FAIL") << "  " << name << ": " << c.detail.str() << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
