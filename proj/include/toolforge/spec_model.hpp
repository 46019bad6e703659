#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toolforge/util.hpp"

namespace toolforge {

class Gateway;

enum class ValueKind { String, Float, Int, Boolean, Dict, List, Other };

// Closed type vocabulary with an escape hatch. Known aliases ("number",
// "object", "array", ...) collapse onto the canonical tag; anything else is
// kept verbatim as Other so the embedder still sees the source's literal tag.
struct ValueType {
    ValueKind kind = ValueKind::Other;
    std::string tag;

    static ValueType from_source(std::string_view raw);
    static ValueType other(std::string tag) { return {ValueKind::Other, std::move(tag)}; }

    bool operator==(const ValueType&) const = default;
};

struct ParameterDef {
    std::string name;
    std::string description;
    std::optional<ValueType> value_type;
    bool required = false; // inputs only

    bool is_complete() const { return !description.empty() && value_type && !value_type->tag.empty(); }
    bool operator==(const ParameterDef&) const = default;
};

struct Provenance {
    std::string source;
    std::string locator;

    bool operator==(const Provenance&) const = default;
};

struct FunctionSpec {
    std::string id;
    std::string name;
    std::string description;
    std::vector<ParameterDef> inputs;  // sorted by name
    std::vector<ParameterDef> outputs; // sorted by name
    Provenance provenance;
    bool completed = false;

    bool is_complete() const;
    bool operator==(const FunctionSpec&) const = default;
};

// Parses one raw tool record. Accepts the properties/required shape used by
// ToolACE and glaive, and the flat name->param map used by xlam. Outputs come
// from an optional "outputs" array or a "results"/"returns" properties block.
FunctionSpec parse_function_spec(std::string_view raw, const Provenance& provenance);
FunctionSpec parse_function_spec(const json& raw, const Provenance& provenance);

// Sorted-key JSON in the raw-record shape, whitespace-normalized. Feeding it
// back into parse_function_spec reproduces the spec.
std::string canonicalize(const FunctionSpec& spec);
std::string compute_spec_id(const FunctionSpec& spec);

// Raw-record shaped projection, used inside prompts and trajectory files.
json tool_schema(const FunctionSpec& spec);
// OpenAI "tools" entry ({"type":"function","function":{...}}).
json openai_tool(const FunctionSpec& spec);

// functions.jsonl line: {id, name, description, inputs[], outputs[], provenance, completed}
json to_record(const FunctionSpec& spec);
FunctionSpec from_record(const json& record);

struct CompletionOptions {
    int retries = 2;
};

// Fills missing parameter descriptions/types and empty output lists through
// the completion prompts. Complete specs come back unchanged without any
// gateway traffic. Throws CompletionFailed when no usable reply arrives.
FunctionSpec complete_spec(const FunctionSpec& spec, Gateway& gw, const CompletionOptions& opts = {});

// Keeps the first spec seen for each id.
std::vector<FunctionSpec> dedup_by_id(std::vector<FunctionSpec> specs);

} // namespace toolforge
