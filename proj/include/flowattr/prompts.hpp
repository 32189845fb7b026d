#pragma once

#include <map>
#include <string>
#include <string_view>

namespace flowattr::prompts {

// Keep in sync with prompts/system.txt and prompts/planning.txt.
inline constexpr std::string_view kSystem =
    R"(You explain which part of a flowchart supports a given answer.

Every node in the flowchart image carries a small red label. The chart has these labels:
{node_labels}

You see the image once, during planning. After that, inspect the chart only through the tools below. Call exactly one tool per turn and read its result before choosing the next one.

Tools:
{tool_schemas}

When you know which nodes support the answer, call final_answer with
{"nodes": [labels in the order the process visits them], "reasoning": "one or two sentences"}.
List only nodes the answer depends on and keep them in flow order.
)";

inline constexpr std::string_view kPlanning =
    R"(Question: {question}
Answer: {answer}

Look at the labeled flowchart. Which nodes does this answer most likely rest on, and which tools would confirm the path between them?
Reply with {"nodes": [candidate labels], "rationale": "short explanation"}, or call a tool straight away.
)";

inline constexpr std::string_view kContinue =
    "Continue. Call one tool, or call final_answer once the supporting nodes are known.";

inline constexpr std::string_view kNeedToolCall =
    "Your last reply did not call a tool. Call exactly one tool now, or final_answer if you are done.";

inline constexpr std::string_view kBadFinalAnswer =
    R"(final_answer could not be read ({error}). Call final_answer again with {"nodes": [labels]}.)";

/// Replaces each `{name}` whose name is in `vars`; other braces are left alone.
inline std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                auto it = vars.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

}  // namespace flowattr::prompts
