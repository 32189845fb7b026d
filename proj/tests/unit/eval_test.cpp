#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "flowattr/eval.hpp"

#include "support/fixtures.hpp"

using namespace flowattr;

namespace {

QASample g1_sample(std::string id, std::vector<NodeLabel> gt, QuestionType type = QuestionType::fact_retrieval,
                   Split split = Split::code) {
    auto g = fixtures::g1();
    AssembleOptions o;
    o.split = split;
    auto s = assemble_sample(g, {"question " + id, "answer", type}, gt, make_style(StyleFamily::default_, 0), 0, o)
                 .sample;
    s.id = std::move(id);
    return s;
}

PredictionRecord nodes(std::string id, std::vector<NodeLabel> labels) {
    return PredictionRecord{std::move(id), std::move(labels), std::nullopt};
}

// Mixed fixture: region predictions at assorted offsets from the true boxes.
struct Mixed {
    std::vector<QASample> dataset;
    std::vector<PredictionRecord> preds;
};

Mixed mixed_fixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> shift(-60, 60);
    Mixed m;
    SynthesisOptions o;
    o.count = 12;
    o.seed = seed;
    for (auto& a : synthesize_dataset(o)) m.dataset.push_back(a.sample);
    for (const auto& s : m.dataset) {
        PredictionRecord p{s.id, std::nullopt, std::vector<Geometry>{}};
        for (const auto& r : s.regions.regions()) {
            if (rng() % 3 == 0) continue;
            Box b = r.bbox;
            b.x += shift(rng) * (rng() % 2);
            b.y += shift(rng) * (rng() % 2);
            if (r.polygon && rng() % 2) {
                p.pred_regions->push_back(*r.polygon);
            } else {
                p.pred_regions->push_back(b);
            }
        }
        if (rng() % 2) p.pred_nodes = std::vector<NodeLabel>{s.gt_nodes.front()};
        m.preds.push_back(std::move(p));
    }
    return m;
}

}  // namespace

TEST(Eval, MatchRegions) {
    auto s = g1_sample("s1", {"A"});
    const auto& b = s.regions.find("C")->bbox;
    EXPECT_EQ(match_regions({b}, s.regions), (std::vector<NodeLabel>{"C"}));
    EXPECT_EQ(match_regions({b, b}, s.regions), (std::vector<NodeLabel>{"C"}));

    // Same size, shifted right by half its width: IoU 1/3 with C.
    Box half{b.x + b.width / 2, b.y, b.width, b.height};
    EXPECT_NEAR(iou(half, b), 1.0 / 3.0, 1e-12);
    EXPECT_TRUE(match_regions({half}, s.regions).empty());
    EXPECT_EQ(match_regions({half}, s.regions, 0.3), (std::vector<NodeLabel>{"C"}));

    EXPECT_THROW(match_regions({b}, s.regions, 0.0), EvalError);
    EXPECT_THROW(match_regions({b}, s.regions, 1.5), EvalError);
    EXPECT_EQ(match_regions({b}, s.regions, 1.0), (std::vector<NodeLabel>{"C"}));

    // Equal IoU with two regions: the earlier node wins.
    RegionMap twin;
    twin.add({NodeLabel("X"), RegionShape::rect, {0, 0, 10, 10}, std::nullopt});
    twin.add({NodeLabel("Y"), RegionShape::rect, {10, 0, 10, 10}, std::nullopt});
    EXPECT_EQ(match_regions({Box{5, 0, 10, 10}}, twin, 0.3), (std::vector<NodeLabel>{"X"}));
}

TEST(Eval, SingleSampleTwoThirds) {
    auto r = score({nodes("s1", {"B", "C", "D"})}, {g1_sample("s1", {"A", "B", "C"})});
    EXPECT_EQ(r.overall, (Counts{2, 1, 1}));
    EXPECT_DOUBLE_EQ(r.overall.precision(), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.overall.recall(), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.overall.f1(), 2.0 / 3.0);
    auto j = to_json(r);
    EXPECT_EQ(j.at("overall").at("f1"), 66.67);
    EXPECT_EQ(j.at("overall").at("precision"), 66.67);
    EXPECT_EQ(j.at("by_split").at("code").at("recall"), 66.67);
    EXPECT_EQ(j.at("samples").at(0).at("path_length_ratio"), 1.0);
    EXPECT_NE(to_csv(r).find("overall,66.67,66.67,66.67,2,1,1"), std::string::npos);
}

TEST(Eval, PerfectAndMissingPredictions) {
    std::vector<QASample> ds = {g1_sample("a", {"A", "B"}), g1_sample("b", {"E"}, QuestionType::topological)};
    auto perfect = score({nodes("a", {"B", "A"}), nodes("b", {"E"})}, ds);
    EXPECT_EQ(to_json(perfect).at("overall").at("f1"), 100.0);

    auto partial = score({nodes("a", {"A", "B"})}, ds);
    EXPECT_EQ(partial.overall, (Counts{2, 0, 1}));
    EXPECT_FALSE(partial.samples[1].predicted);

    EXPECT_THROW(score({nodes("zzz", {"A"})}, ds), EvalError);
    EXPECT_THROW(score({nodes("a", {"A"}), nodes("a", {"B"})}, ds), EvalError);

    auto none = score({}, {});
    EXPECT_EQ(none.overall, Counts{});
    EXPECT_EQ(to_json(none).at("overall").at("f1"), 0.0);
}

TEST(Eval, RegionPredictionsFunnelIntoTheSameScorer) {
    auto s = g1_sample("s", {"A", "B"});
    PredictionRecord p{"s", std::nullopt, std::vector<Geometry>{s.regions.find("A")->bbox, *s.regions.find("B")->polygon,
                                                                 s.regions.find("E")->bbox}};
    auto r = score({p}, {s});
    EXPECT_EQ(r.overall, (Counts{2, 1, 0}));
}

TEST(Eval, Properties) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        auto m = mixed_fixture(seed);
        auto base = score(m.preds, m.dataset, 0.7);

        // Micro average is the pooled count; slices sum to the total.
        Counts pooled, by_split, by_type;
        std::size_t predicted = 0, truth = 0;
        for (const auto& d : base.samples) {
            pooled += d.counts;
            predicted += d.pred_length;
            truth += d.gt_length;
        }
        for (const auto& [k, c] : base.by_split) by_split += c;
        for (const auto& [k, c] : base.by_question_type) by_type += c;
        EXPECT_EQ(pooled, base.overall);
        EXPECT_EQ(by_split, base.overall);
        EXPECT_EQ(by_type, base.overall);
        EXPECT_EQ(base.overall.tp + base.overall.fp, predicted);
        EXPECT_EQ(base.overall.tp + base.overall.fn, truth);

        double p = base.overall.precision(), r = base.overall.recall(), f = base.overall.f1();
        EXPECT_GE(f, std::min(p, r) - 1e-12);
        EXPECT_LE(f, std::max(p, r) + 1e-12);

        // Permutation invariance in sample order and in node order.
        auto preds = m.preds;
        auto dataset = m.dataset;
        std::mt19937_64 rng(seed);
        std::shuffle(preds.begin(), preds.end(), rng);
        std::shuffle(dataset.begin(), dataset.end(), rng);
        for (auto& pr : preds) {
            if (pr.pred_nodes) std::reverse(pr.pred_nodes->begin(), pr.pred_nodes->end());
            if (pr.pred_regions) std::reverse(pr.pred_regions->begin(), pr.pred_regions->end());
        }
        EXPECT_EQ(score(preds, dataset, 0.7).overall, base.overall);

        // Raising the threshold never increases TP.
        std::size_t last = SIZE_MAX;
        for (double t : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
            auto tp = score(m.preds, m.dataset, t).overall.tp;
            EXPECT_LE(tp, last) << "threshold " << t;
            last = tp;
        }
    }
}

TEST(Eval, PredictionJsonRoundTrip) {
    PredictionRecord p{"x", std::vector<NodeLabel>{"A", "C"},
                       std::vector<Geometry>{Box{1, 2, 3, 4}, Polygon{{0, 0}, {4, 0}, {0, 3}}}};
    auto j = to_json(p);
    EXPECT_EQ(j.dump(),
              R"({"schema_version":1,"sample_id":"x","pred_nodes":["A","C"],"pred_regions":[{"bbox":[1.0,2.0,3.0,4.0]},{"polygon":[[0.0,0.0],[4.0,0.0],[0.0,3.0]]}]})");
    auto back = prediction_from_json(j);
    EXPECT_EQ(back.pred_nodes, p.pred_nodes);
    EXPECT_EQ(back.pred_regions, p.pred_regions);
    EXPECT_THROW(prediction_from_json(nlohmann::ordered_json{{"sample_id", "x"}}), EvalError);
    EXPECT_THROW(prediction_from_json(nlohmann::ordered_json{{"sample_id", "x"}, {"pred_nodes", {"a-b"}}}), EvalError);
}
