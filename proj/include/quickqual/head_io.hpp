#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "quickqual/error.hpp"
#include "quickqual/heads.hpp"

namespace quickqual {

inline constexpr int kSchemaVersion = 1;

using Head = std::variant<LinearHead, SvmHead>;

inline nlohmann::json to_json(const LinearHead& h) {
    return {{"schema_version", kSchemaVersion},
            {"type", "linear"},
            {"target_semantics", "p_bad"},
            {"feature_indices", h.indices},
            {"weights", h.weights},
            {"bias", h.bias}};
}

inline nlohmann::json to_json(const SvmHead& h) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : h.pairs) {
        nlohmann::json svs = nlohmann::json::array();
        for (std::size_t i = 0; i < p.support_vectors.rows(); ++i) {
            auto row = p.support_vectors.row(i);
            svs.push_back(std::vector<double>(row.begin(), row.end()));
        }
        pairs.push_back({{"classes", {p.positive_class, p.negative_class}},
                         {"support_vectors", std::move(svs)},
                         {"dual_coef", p.dual_coef},
                         {"intercept", p.intercept},
                         {"platt_a", p.platt_a},
                         {"platt_b", p.platt_b}});
    }
    return {{"schema_version", kSchemaVersion},
            {"type", "svm"},
            {"kernel", "rbf"},
            {"classes", h.classes},
            {"gamma", h.gamma},
            {"C", h.C},
            {"pairs", std::move(pairs)}};
}

inline nlohmann::json to_json(const Head& h) {
    return std::visit([](const auto& v) { return to_json(v); }, h);
}

inline Head head_from_json(const nlohmann::json& j) {
    try {
        const auto type = j.at("type").get<std::string>();
        if (type == "linear") {
            LinearHead h;
            h.indices = j.at("feature_indices").get<std::vector<std::size_t>>();
            h.weights = j.at("weights").get<std::vector<double>>();
            h.bias = j.at("bias").get<double>();
            h.validate();
            return h;
        }
        if (type == "svm") {
            SvmHead h;
            h.classes = j.at("classes").get<std::vector<int>>();
            h.gamma = j.at("gamma").get<double>();
            h.C = j.value("C", 1.0);
            for (const auto& pj : j.at("pairs")) {
                SvmPair p;
                const auto cls = pj.at("classes").get<std::vector<int>>();
                require(cls.size() == 2, ErrorCode::format, "svm pair must name two classes");
                p.positive_class = cls[0];
                p.negative_class = cls[1];
                for (const auto& sv : pj.at("support_vectors")) p.support_vectors.append_row(sv.get<std::vector<double>>());
                p.dual_coef = pj.at("dual_coef").get<std::vector<double>>();
                p.intercept = pj.at("intercept").get<double>();
                p.platt_a = pj.at("platt_a").get<double>();
                p.platt_b = pj.at("platt_b").get<double>();
                h.pairs.push_back(std::move(p));
            }
            h.validate();
            return h;
        }
        fail(ErrorCode::format, "unknown head type '" + type + "'");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::format, std::string("malformed head model: ") + e.what());
    }
}

inline void save_head(const Head& h, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::io, "cannot open " + path.string() + " for writing");
    out << to_json(h).dump(2) << '\n';
    require(out.good(), ErrorCode::io, "write failed for " + path.string());
}

inline Head load_head(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorCode::file_not_found, path.string());
    std::ifstream in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::format, path.string() + ": " + e.what());
    }
    return head_from_json(j);
}

}  // namespace quickqual
