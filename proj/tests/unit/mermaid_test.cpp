#include <gtest/gtest.h>

#include <random>

#include "flowattr/mermaid.hpp"

#include "support/fixtures.hpp"

using namespace flowattr;
using mermaid::ParseMode;

TEST(Mermaid, TwoNodesOneEdge) {
    auto r = mermaid::parse("flowchart TD\nA[Start] --> B{Check}");
    EXPECT_EQ(r.chart.node_count(), 2u);
    EXPECT_EQ(r.chart.edge_count(), 1u);
    EXPECT_EQ(r.chart.edges()[0].condition, Condition::unconditional());
    EXPECT_EQ(r.chart.node("B").shape, Shape::diamond);
    EXPECT_EQ(r.chart.statement("B"), "Check");
    EXPECT_TRUE(r.diagnostics.empty());
}

TEST(Mermaid, RecoverAutoDeclaresUnknownSource) {
    auto r = mermaid::parse("flowchart TD\nB -->|Yes| C[Go]", ParseMode::recover);
    ASSERT_EQ(r.chart.node_count(), 2u);
    EXPECT_EQ(r.chart.node("B").shape, Shape::unknown);
    EXPECT_EQ(r.chart.edges()[0].condition, Condition::yes());
    ASSERT_EQ(r.diagnostics.size(), 1u);
    EXPECT_EQ(r.diagnostics[0].line, 2);
    EXPECT_TRUE(r.diagnostics[0].recovered);
    EXPECT_EQ(r.diagnostics[0].severity, mermaid::Severity::warning);
}

TEST(Mermaid, StrictRejectsUndeclaredReference) {
    try {
        mermaid::parse("flowchart TD\nB -->|Yes| C[Go]");
        FAIL();
    } catch (const mermaid::ParseError& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_EQ(e.column(), 1);
    }
}

TEST(Mermaid, G1Fixture) {
    auto r = mermaid::parse(fixtures::kG1Mermaid);
    EXPECT_EQ(r.chart.edge_count(), 5u);
    auto n = r.chart.neighbours("B");
    ASSERT_EQ(n.size(), 2u);
    EXPECT_EQ(n[0].label.str(), "C");
    EXPECT_EQ(n[0].condition, Condition::yes());
    EXPECT_EQ(n[1].label.str(), "D");
    EXPECT_EQ(n[1].condition, Condition::no());
    EXPECT_EQ(r.chart, fixtures::g1());
    EXPECT_EQ(r.document.direction, "TD");
}

TEST(Mermaid, ShapesQuotesAndEscapes) {
    auto r = mermaid::parse(
        "graph LR\n"
        "%% comment\n"
        "A([Begin]);\n"
        "B(\"Rounded ] text\")\n"
        "C{\"Is #quot;x#quot; set?\"}\n"
        "D[\"a #35;1 b\"]\n"
        "A --> B\n"
        "B --> C\n"
        "C -->|\"maybe | later\"| D\n"
        "C -->| NO | A\n");
    EXPECT_EQ(r.document.keyword, "graph");
    EXPECT_EQ(r.document.direction, "LR");
    EXPECT_EQ(r.chart.node("A").shape, Shape::stadium);
    EXPECT_EQ(r.chart.node("B").shape, Shape::rounded);
    EXPECT_EQ(r.chart.statement("B"), "Rounded ] text");
    EXPECT_EQ(r.chart.statement("C"), "Is \"x\" set?");
    EXPECT_EQ(r.chart.statement("D"), "a #1 b");
    auto edges = r.chart.edges();
    EXPECT_EQ(edges[2].condition, Condition::other("maybe | later"));
    EXPECT_EQ(edges[3].condition, Condition::no());
}

TEST(Mermaid, LaterDeclarationCompletesBareNode) {
    auto r = mermaid::parse("flowchart TD\nA\nA[Now declared] --> B[Next]");
    EXPECT_EQ(r.chart.node("A").shape, Shape::rectangle);
    EXPECT_EQ(r.chart.statement("A"), "Now declared");
}

TEST(Mermaid, StrictErrors) {
    EXPECT_THROW(mermaid::parse(""), mermaid::ParseError);
    EXPECT_THROW(mermaid::parse("flowchart TD\n"), mermaid::ParseError);
    EXPECT_THROW(mermaid::parse("A[x] --> B[y]"), mermaid::ParseError);  // no header
    EXPECT_THROW(mermaid::parse("flowchart TD\nA[x] --> B[y] --> C[z]"), mermaid::ParseError);
    EXPECT_THROW(mermaid::parse("flowchart TD\nsubgraph one\nA[x]\nend"), mermaid::ParseError);
    EXPECT_THROW(mermaid::parse("flowchart TD\nA[x] --> B[y]\nA --> B"), mermaid::ParseError);
    EXPECT_THROW(mermaid::parse("flowchart TD\nA[x]\nA[y]"), mermaid::ParseError);
    EXPECT_THROW(mermaid::parse("flowchart TD\nA[[sub]]"), mermaid::ParseError);
    EXPECT_THROW(mermaid::parse("flowchart TD\nA[]"), mermaid::ParseError);
    try {
        mermaid::parse("flowchart TD\nA[ok]\nA --> @");
        FAIL();
    } catch (const mermaid::ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_EQ(e.column(), 7);
    }
}

TEST(Mermaid, RecoverRulesOneDiagnosticPerLine) {
    auto r = mermaid::parse(
        "A[x] --> B[y] --> C[z]\n"    // line 1: missing header + chained
        "click A callback\n"         // line 2: skipped
        "B -- yes --> D\n"           // line 3: dash label + auto-declare D
        "A --> B\n"                  // line 4: duplicate edge
        "E[]\n"                      // line 5: empty text
        "flowchart LR\n"             // line 6: misplaced header
        "F --> G --> H\n",           // line 7: chained + auto-declare
        ParseMode::recover);
    ASSERT_EQ(r.diagnostics.size(), 7u);
    for (int i = 0; i < 7; ++i) EXPECT_EQ(r.diagnostics[static_cast<std::size_t>(i)].line, i + 1);
    EXPECT_EQ(r.chart.edge_count(), 5u);
    EXPECT_EQ(r.chart.edges()[2].condition, Condition::yes());
    EXPECT_EQ(r.chart.node("E").shape, Shape::unknown);
}

TEST(Mermaid, SerializeCanonicalForm) {
    FlowChart single;
    single.add_node("A", "Only", Shape::rectangle);
    EXPECT_EQ(mermaid::serialize(single), "flowchart TD\n    A[\"Only\"]\n");

    auto text = mermaid::serialize(fixtures::g1());
    int edge_lines = 0;
    for (const auto& line : flowattr::detail::split_lines(text)) edge_lines += line.find("-->") != std::string::npos;
    EXPECT_EQ(edge_lines, 5);
    EXPECT_EQ(mermaid::parse(text).chart, fixtures::g1());
}

TEST(Mermaid, RoundtripRandomCharts) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        auto g = fixtures::random_chart(rng, 1 + static_cast<int>(rng() % 12), 0.3, i % 3 == 0);
        g.add_node(alpha_label(40), "quote \" hash #quot; pipe | brackets ]} end", Shape::diamond);
        g.add_node(alpha_label(41), "", Shape::unknown);
        g.add_edge(alpha_label(40), alpha_label(41), Condition::other("a \"b\" | c"));
        auto once = mermaid::parse(mermaid::serialize(g)).chart;
        EXPECT_EQ(once, g);
        EXPECT_EQ(mermaid::serialize(once), mermaid::serialize(g));
    }
}
