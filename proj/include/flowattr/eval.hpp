#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "flowattr/dataset.hpp"
#include "flowattr/geometry.hpp"

namespace flowattr {

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PredictionRecord {
    std::string sample_id;
    std::optional<std::vector<NodeLabel>> pred_nodes;
    std::optional<std::vector<Geometry>> pred_regions;
};

/// For each predicted region, the ground-truth node of maximum IoU when that
/// IoU reaches `threshold`. The earlier node wins ties; repeated labels collapse.
inline std::vector<NodeLabel> match_regions(const std::vector<Geometry>& preds, const RegionMap& gt,
                                            double threshold = 0.7) {
    if (!(threshold > 0 && threshold <= 1)) throw EvalError("IoU threshold must lie in (0, 1]");
    std::vector<NodeLabel> out;
    for (const auto& p : preds) {
        const Region* best = nullptr;
        double best_iou = 0;
        for (const auto& r : gt.regions()) {
            double v = iou(p, r.geometry());
            if (v > best_iou) {
                best_iou = v;
                best = &r;
            }
        }
        if (best && best_iou >= threshold && std::find(out.begin(), out.end(), best->label) == out.end()) {
            out.push_back(best->label);
        }
    }
    return out;
}

struct Counts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
    double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
    double f1() const {
        double p = precision(), r = recall();
        return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
    }

    Counts& operator+=(const Counts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    bool operator==(const Counts&) const = default;
};

struct SampleDiagnostic {
    std::string sample_id;
    Counts counts;
    std::size_t pred_length = 0;
    std::size_t gt_length = 0;
    bool predicted = false;

    /// |pred| / |gt|; 0 when the ground truth is empty.
    double path_length_ratio() const {
        return gt_length == 0 ? 0.0 : static_cast<double>(pred_length) / static_cast<double>(gt_length);
    }
};

struct EvalReport {
    double threshold = 0.7;
    Counts overall;
    std::map<Split, Counts> by_split;
    std::map<QuestionType, Counts> by_question_type;
    std::vector<SampleDiagnostic> samples;  // dataset order
};

/// Labels a prediction resolves to: its node list followed by any region
/// matches not already named.
inline std::vector<NodeLabel> resolve_prediction(const PredictionRecord& p, const QASample& s, double threshold) {
    std::vector<NodeLabel> out;
    auto add = [&](const NodeLabel& l) {
        if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
    };
    if (p.pred_nodes) {
        for (const auto& l : *p.pred_nodes) add(l);
    }
    if (p.pred_regions) {
        for (const auto& l : match_regions(*p.pred_regions, s.regions, threshold)) add(l);
    }
    return out;
}

inline EvalReport score(const std::vector<PredictionRecord>& preds, const std::vector<QASample>& dataset,
                        double threshold = 0.7) {
    if (!(threshold > 0 && threshold <= 1)) throw EvalError("IoU threshold must lie in (0, 1]");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < dataset.size(); ++i) index.emplace(dataset[i].id, i);
    std::vector<const PredictionRecord*> by_sample(dataset.size(), nullptr);
    for (const auto& p : preds) {
        auto it = index.find(p.sample_id);
        if (it == index.end()) throw EvalError("prediction for unknown sample '" + p.sample_id + "'");
        if (by_sample[it->second]) throw EvalError("duplicate prediction for sample '" + p.sample_id + "'");
        by_sample[it->second] = &p;
    }

    EvalReport report;
    report.threshold = threshold;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& s = dataset[i];
        std::vector<NodeLabel> pred;
        if (by_sample[i]) pred = resolve_prediction(*by_sample[i], s, threshold);
        std::set<NodeLabel> p(pred.begin(), pred.end());
        std::set<NodeLabel> g(s.gt_nodes.begin(), s.gt_nodes.end());
        SampleDiagnostic d;
        d.sample_id = s.id;
        d.predicted = by_sample[i] != nullptr;
        d.pred_length = p.size();
        d.gt_length = g.size();
        for (const auto& l : p) (g.contains(l) ? d.counts.tp : d.counts.fp)++;
        for (const auto& l : g) d.counts.fn += p.contains(l) ? 0 : 1;
        report.overall += d.counts;
        report.by_split[s.split] += d.counts;
        report.by_question_type[s.statement.question_type] += d.counts;
        report.samples.push_back(std::move(d));
    }
    return report;
}

/// Percentage rounded to two decimals.
inline double percent(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

inline nlohmann::ordered_json to_json(const Counts& c) {
    return {{"precision", percent(c.precision())},
            {"recall", percent(c.recall())},
            {"f1", percent(c.f1())},
            {"tp", c.tp},
            {"fp", c.fp},
            {"fn", c.fn}};
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json splits = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.by_split) splits[std::string(to_string(k))] = to_json(v);
    nlohmann::ordered_json types = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.by_question_type) types[std::string(to_string(k))] = to_json(v);
    nlohmann::ordered_json samples = nlohmann::ordered_json::array();
    for (const auto& d : r.samples) {
        samples.push_back({{"sample_id", d.sample_id},
                           {"predicted", d.predicted},
                           {"tp", d.counts.tp},
                           {"fp", d.counts.fp},
                           {"fn", d.counts.fn},
                           {"pred_length", d.pred_length},
                           {"gt_length", d.gt_length},
                           {"path_length_ratio", d.path_length_ratio()}});
    }
    return {{"schema_version", kSchemaVersion}, {"iou_threshold", r.threshold},
            {"overall", to_json(r.overall)},    {"by_split", std::move(splits)},
            {"by_question_type", std::move(types)}, {"samples", std::move(samples)}};
}

/// One row per slice: overall, then splits, then question types.
inline std::string to_csv(const EvalReport& r) {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", percent(v));
        return std::string(buf);
    };
    std::string out = "slice,precision,recall,f1,tp,fp,fn\n";
    auto row = [&](const std::string& name, const Counts& c) {
        out += name + "," + fmt(c.precision()) + "," + fmt(c.recall()) + "," + fmt(c.f1()) + "," +
               std::to_string(c.tp) + "," + std::to_string(c.fp) + "," + std::to_string(c.fn) + "\n";
    };
    row("overall", r.overall);
    for (const auto& [k, v] : r.by_split) row("split:" + std::string(to_string(k)), v);
    for (const auto& [k, v] : r.by_question_type) row("type:" + std::string(to_string(k)), v);
    return out;
}

inline nlohmann::ordered_json to_json(const PredictionRecord& p) {
    nlohmann::ordered_json j = {{"schema_version", kSchemaVersion}, {"sample_id", p.sample_id}};
    if (p.pred_nodes) {
        nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
        for (const auto& l : *p.pred_nodes) nodes.push_back(l.str());
        j["pred_nodes"] = std::move(nodes);
    }
    if (p.pred_regions) {
        nlohmann::ordered_json regions = nlohmann::ordered_json::array();
        for (const auto& g : *p.pred_regions) {
            if (std::holds_alternative<Box>(g)) {
                regions.push_back({{"bbox", box_to_json(std::get<Box>(g))}});
            } else {
                regions.push_back({{"polygon", polygon_to_json(std::get<Polygon>(g))}});
            }
        }
        j["pred_regions"] = std::move(regions);
    }
    return j;
}

inline PredictionRecord prediction_from_json(const nlohmann::ordered_json& j) {
    try {
        PredictionRecord p;
        p.sample_id = j.at("sample_id").get<std::string>();
        if (j.contains("pred_nodes") && !j.at("pred_nodes").is_null()) {
            p.pred_nodes.emplace();
            for (const auto& l : j.at("pred_nodes")) {
                auto text = l.get<std::string>();
                if (!NodeLabel::is_valid(text)) throw EvalError("invalid label '" + text + "'");
                p.pred_nodes->emplace_back(text);
            }
        }
        if (j.contains("pred_regions") && !j.at("pred_regions").is_null()) {
            p.pred_regions.emplace();
            for (const auto& r : j.at("pred_regions")) {
                if (r.contains("polygon")) {
                    p.pred_regions->push_back(polygon_from_json(r.at("polygon")));
                } else {
                    p.pred_regions->push_back(box_from_json(r.at("bbox")));
                }
            }
        }
        if (!p.pred_nodes && !p.pred_regions) {
            throw EvalError("prediction for '" + p.sample_id + "' has neither pred_nodes nor pred_regions");
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw EvalError(std::string("malformed prediction: ") + e.what());
    }
}

inline std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw EvalError("cannot read " + path.string());
    std::vector<PredictionRecord> out;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (flowattr::detail::trim(line).empty()) continue;
        try {
            out.push_back(prediction_from_json(nlohmann::ordered_json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw EvalError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

inline void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& preds) {
    std::ofstream out(path);
    if (!out) throw EvalError("cannot write " + path.string());
    for (const auto& p : preds) out << to_json(p).dump() << '\n';
}

}  // namespace flowattr
