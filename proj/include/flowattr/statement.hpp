#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "flowattr/graph.hpp"

namespace flowattr {

enum class QuestionType { fact_retrieval, applied_scenario, flow_referential, topological };

inline constexpr QuestionType kQuestionTypes[] = {QuestionType::fact_retrieval, QuestionType::applied_scenario,
                                                  QuestionType::flow_referential, QuestionType::topological};

inline std::string_view to_string(QuestionType t) {
    switch (t) {
        case QuestionType::fact_retrieval: return "fact_retrieval";
        case QuestionType::applied_scenario: return "applied_scenario";
        case QuestionType::flow_referential: return "flow_referential";
        case QuestionType::topological: return "topological";
    }
    return "fact_retrieval";
}

inline std::optional<QuestionType> question_type_from_string(std::string_view s) {
    for (auto t : kQuestionTypes) {
        if (to_string(t) == s) return t;
    }
    return std::nullopt;
}

/// A question-answer pair about one chart.
struct Statement {
    std::string question;
    std::string answer;
    QuestionType question_type = QuestionType::fact_retrieval;

    Statement() = default;
    Statement(std::string q, std::string a, QuestionType t)
        : question(std::move(q)), answer(std::move(a)), question_type(t) {
        if (question.empty() || answer.empty()) {
            throw GraphError(GraphErrorKind::invalid_argument, "statement needs a non-empty question and answer");
        }
    }

    bool operator==(const Statement&) const = default;
};

}  // namespace flowattr
