#include "toolforge/spec_model.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <unordered_set>

#include "toolforge/error.hpp"
#include "toolforge/gateway.hpp"
#include "toolforge/prompts.hpp"

namespace toolforge {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string string_field(const json& obj, const char* key) {
    if (!obj.is_object() || !obj.contains(key) || !obj[key].is_string()) return {};
    return obj[key].get<std::string>();
}

// "type" is usually a string; JSON-schema unions arrive as arrays.
std::optional<ValueType> type_field(const json& obj) {
    if (!obj.contains("type")) return std::nullopt;
    const auto& t = obj["type"];
    std::string raw;
    if (t.is_string()) raw = t.get<std::string>();
    else if (t.is_array() && !t.empty() && t[0].is_string()) raw = t[0].get<std::string>();
    raw = trim(raw);
    if (raw.empty()) return std::nullopt;
    return ValueType::from_source(raw);
}

void sort_and_check_unique(std::vector<ParameterDef>& params, const char* what) {
    std::sort(params.begin(), params.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    for (std::size_t i = 1; i < params.size(); ++i) {
        if (params[i].name == params[i - 1].name) {
            throw SchemaMismatch(std::string("duplicate ") + what + " parameter '" + params[i].name + "'");
        }
    }
}

ParameterDef param_from_property(const std::string& name, const json& prop) {
    if (name.empty()) throw SchemaMismatch("parameter with empty name");
    if (!prop.is_object()) throw SchemaMismatch("parameter '" + name + "' is not an object");
    ParameterDef p;
    p.name = name;
    p.description = normalize_whitespace(string_field(prop, "description"));
    p.value_type = type_field(prop);
    return p;
}

std::vector<ParameterDef> params_from_properties_block(const json& block, bool with_required) {
    std::vector<ParameterDef> out;
    if (!block.contains("properties") || block["properties"].is_null()) return out;
    const auto& props = block["properties"];
    if (!props.is_object()) throw SchemaMismatch("'properties' is not an object");
    for (const auto& [name, prop] : props.items()) out.push_back(param_from_property(name, prop));
    if (with_required && block.contains("required") && !block["required"].is_null()) {
        const auto& req = block["required"];
        if (!req.is_array()) throw SchemaMismatch("'required' is not a list");
        for (const auto& r : req) {
            if (!r.is_string()) throw SchemaMismatch("'required' entry is not a string");
            auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.name == r.get<std::string>(); });
            if (it == out.end()) {
                throw SchemaMismatch("required parameter '" + r.get<std::string>() + "' is not among properties");
            }
            it->required = true;
        }
    }
    return out;
}

// xlam style: {"param": {"description": ..., "type": "str, optional", "default": ...}}
std::vector<ParameterDef> params_from_flat_map(const json& params) {
    std::vector<ParameterDef> out;
    for (const auto& [name, prop] : params.items()) {
        ParameterDef p = param_from_property(name, prop);
        p.required = true;
        if (p.value_type) {
            std::string tag = p.value_type->tag;
            auto pos = lower(tag).rfind(", optional");
            if (pos != std::string::npos) {
                tag = trim(tag.substr(0, pos));
                p.value_type = tag.empty() ? std::nullopt : std::optional(ValueType::from_source(tag));
                p.required = false;
            }
        }
        if (prop.contains("default")) p.required = false;
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<ParameterDef> params_from_list(const json& list) {
    if (!list.is_array()) throw SchemaMismatch("'outputs' is not a list");
    std::vector<ParameterDef> out;
    for (const auto& item : list) {
        if (!item.is_object()) throw SchemaMismatch("output entry is not an object");
        out.push_back(param_from_property(string_field(item, "name"), item));
    }
    return out;
}

json param_json(const ParameterDef& p) {
    json j = {{"description", p.description}};
    if (p.value_type) j["type"] = p.value_type->tag;
    return j;
}

// Finds "input structure" under any of the spellings models produce
// ("input_structure", "Input Structure", "inputStructure").
const json* find_loose(const json& obj, std::string_view wanted) {
    auto squash = [](std::string_view s) {
        std::string out;
        for (unsigned char c : s) {
            if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
        }
        return out;
    };
    const std::string target = squash(wanted);
    for (const auto& [key, value] : obj.items()) {
        if (squash(key) == target) return &value;
    }
    return nullptr;
}

struct PredictedParam {
    std::string name;
    std::string description;
    std::string type;
};

std::optional<std::vector<PredictedParam>> read_structure(const std::string& reply, std::string_view key) {
    auto obj = extract_json_object(reply);
    if (!obj) return std::nullopt;
    const json* list = find_loose(*obj, key);
    if (list == nullptr || !list->is_array()) return std::nullopt;
    std::vector<PredictedParam> out;
    for (const auto& item : *list) {
        if (!item.is_object()) return std::nullopt;
        PredictedParam p;
        p.name = trim(string_field(item, "name"));
        p.description = normalize_whitespace(string_field(item, "description"));
        if (auto t = type_field(item)) p.type = t->tag;
        out.push_back(std::move(p));
    }
    return out;
}

// Returns the filled parameter list, or nullopt if this reply cannot
// complete every parameter.
std::optional<std::vector<ParameterDef>> apply_prediction(std::vector<ParameterDef> params,
                                                          const std::vector<PredictedParam>& predicted,
                                                          bool replace_when_empty) {
    if (params.empty() && replace_when_empty) {
        if (predicted.empty()) return std::nullopt;
        std::vector<ParameterDef> out;
        for (const auto& p : predicted) {
            if (p.name.empty() || p.description.empty() || p.type.empty()) return std::nullopt;
            out.push_back({p.name, p.description, ValueType::from_source(p.type), false});
        }
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
        for (std::size_t i = 1; i < out.size(); ++i) {
            if (out[i].name == out[i - 1].name) return std::nullopt;
        }
        return out;
    }
    for (auto& param : params) {
        if (param.is_complete()) continue;
        auto it = std::find_if(predicted.begin(), predicted.end(), [&](const auto& p) { return p.name == param.name; });
        if (it == predicted.end()) return std::nullopt;
        if (param.description.empty()) param.description = it->description;
        if (!param.value_type || param.value_type->tag.empty()) {
            if (!it->type.empty()) param.value_type = ValueType::from_source(it->type);
        }
        if (!param.is_complete()) return std::nullopt;
    }
    return params;
}

template <class Accept>
void ask_until_valid(Gateway& gw, const std::string& prompt, std::string_view expected, int retries,
                     const std::string& spec_name, Accept&& accept) {
    ChatRequest req;
    req.temperature = 0.0;
    req.messages.push_back({Role::User, prompt, {}, {}});
    for (int attempt = 0; attempt <= retries; ++attempt) {
        ChatReply reply = gw.chat(req);
        if (accept(reply.content)) return;
        req.messages.push_back({Role::Assistant, reply.content, {}, {}});
        req.messages.push_back({Role::User, prompts::format_reminder(expected), {}, {}});
    }
    throw CompletionFailed("no usable completion for '" + spec_name + "' after " + std::to_string(retries) +
                           " retries");
}

} // namespace

ValueType ValueType::from_source(std::string_view raw) {
    const std::string tag = trim(raw);
    const std::string key = lower(tag);
    static const std::pair<const char*, ValueKind> kAliases[] = {
        {"string", ValueKind::String}, {"str", ValueKind::String},       {"text", ValueKind::String},
        {"float", ValueKind::Float},   {"number", ValueKind::Float},     {"double", ValueKind::Float},
        {"int", ValueKind::Int},       {"integer", ValueKind::Int},      {"long", ValueKind::Int},
        {"boolean", ValueKind::Boolean}, {"bool", ValueKind::Boolean},
        {"dict", ValueKind::Dict},     {"object", ValueKind::Dict},      {"map", ValueKind::Dict},
        {"list", ValueKind::List},     {"array", ValueKind::List},
    };
    static const char* kCanonical[] = {"string", "float", "int", "boolean", "dict", "list"};
    for (const auto& [alias, kind] : kAliases) {
        if (key == alias) return {kind, kCanonical[static_cast<int>(kind)]};
    }
    return other(tag);
}

bool FunctionSpec::is_complete() const {
    if (outputs.empty()) return false;
    auto complete = [](const ParameterDef& p) { return p.is_complete(); };
    return std::all_of(inputs.begin(), inputs.end(), complete) && std::all_of(outputs.begin(), outputs.end(), complete);
}

FunctionSpec parse_function_spec(std::string_view raw, const Provenance& provenance) {
    auto doc = json::parse(raw, nullptr, false);
    if (doc.is_discarded()) throw ParseFailure("malformed JSON tool record");
    return parse_function_spec(doc, provenance);
}

FunctionSpec parse_function_spec(const json& doc, const Provenance& provenance) {
    if (!doc.is_object()) throw ParseFailure("tool record is not a JSON object");
    // Some corpora wrap the definition: {"type":"function","function":{...}}
    if (!doc.contains("name") && doc.contains("function") && doc["function"].is_object()) {
        return parse_function_spec(doc["function"], provenance);
    }
    FunctionSpec spec;
    spec.name = trim(string_field(doc, "name"));
    if (spec.name.empty()) throw ParseFailure("tool record has no name");
    spec.description = normalize_whitespace(string_field(doc, "description"));
    spec.provenance = provenance;

    if (doc.contains("parameters") && !doc["parameters"].is_null()) {
        const auto& params = doc["parameters"];
        if (!params.is_object()) throw SchemaMismatch("'parameters' is not an object");
        if (params.contains("properties") || params.contains("type")) {
            spec.inputs = params_from_properties_block(params, true);
        } else {
            spec.inputs = params_from_flat_map(params);
        }
    }
    if (doc.contains("outputs") && !doc["outputs"].is_null()) {
        spec.outputs = params_from_list(doc["outputs"]);
    } else {
        for (const char* key : {"results", "returns"}) {
            if (doc.contains(key) && doc[key].is_object()) {
                spec.outputs = params_from_properties_block(doc[key], false);
                break;
            }
        }
    }
    sort_and_check_unique(spec.inputs, "input");
    sort_and_check_unique(spec.outputs, "output");
    spec.id = compute_spec_id(spec);
    return spec;
}

json tool_schema(const FunctionSpec& spec) {
    json properties = json::object();
    json required = json::array();
    for (const auto& p : spec.inputs) {
        properties[p.name] = param_json(p);
        if (p.required) required.push_back(p.name);
    }
    json outputs = json::array();
    for (const auto& p : spec.outputs) {
        json o = param_json(p);
        o["name"] = p.name;
        outputs.push_back(std::move(o));
    }
    return {{"name", spec.name},
            {"description", spec.description},
            {"parameters", {{"type", "dict"}, {"properties", std::move(properties)}, {"required", std::move(required)}}},
            {"outputs", std::move(outputs)}};
}

json openai_tool(const FunctionSpec& spec) {
    json properties = json::object();
    json required = json::array();
    for (const auto& p : spec.inputs) {
        json prop = {{"description", p.description}};
        if (p.value_type) {
            static const char* kJsonSchema[] = {"string", "number", "integer", "boolean", "object", "array"};
            prop["type"] = p.value_type->kind == ValueKind::Other ? "string"
                                                                  : kJsonSchema[static_cast<int>(p.value_type->kind)];
        }
        properties[p.name] = std::move(prop);
        if (p.required) required.push_back(p.name);
    }
    return {{"type", "function"},
            {"function",
             {{"name", spec.name},
              {"description", spec.description},
              {"parameters", {{"type", "object"}, {"properties", std::move(properties)}, {"required", std::move(required)}}}}}};
}

std::string canonicalize(const FunctionSpec& spec) {
    // tool_schema already emits sorted keys and normalized text; normalize
    // again so hand-built specs canonicalize the same way as parsed ones.
    FunctionSpec norm = spec;
    norm.name = trim(norm.name);
    norm.description = normalize_whitespace(norm.description);
    for (auto* list : {&norm.inputs, &norm.outputs}) {
        for (auto& p : *list) p.description = normalize_whitespace(p.description);
        std::sort(list->begin(), list->end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    }
    return tool_schema(norm).dump();
}

std::string compute_spec_id(const FunctionSpec& spec) {
    return "fn-" + sha256_hex(canonicalize(spec)).substr(0, 16);
}

json to_record(const FunctionSpec& spec) {
    auto params = [](const std::vector<ParameterDef>& list, bool with_required) {
        json arr = json::array();
        for (const auto& p : list) {
            json j = {{"name", p.name}, {"description", p.description}, {"type", p.value_type ? p.value_type->tag : ""}};
            if (with_required) j["required"] = p.required;
            arr.push_back(std::move(j));
        }
        return arr;
    };
    return {{"id", spec.id},
            {"name", spec.name},
            {"description", spec.description},
            {"inputs", params(spec.inputs, true)},
            {"outputs", params(spec.outputs, false)},
            {"provenance", {{"source", spec.provenance.source}, {"locator", spec.provenance.locator}}},
            {"completed", spec.completed}};
}

FunctionSpec from_record(const json& r) {
    try {
        FunctionSpec spec;
        spec.id = r.at("id").get<std::string>();
        spec.name = r.at("name").get<std::string>();
        spec.description = r.value("description", "");
        auto params = [](const json& arr) {
            std::vector<ParameterDef> out;
            for (const auto& j : arr) {
                ParameterDef p;
                p.name = j.at("name").get<std::string>();
                p.description = j.value("description", "");
                std::string type = j.value("type", "");
                if (!type.empty()) p.value_type = ValueType::from_source(type);
                p.required = j.value("required", false);
                out.push_back(std::move(p));
            }
            return out;
        };
        spec.inputs = params(r.at("inputs"));
        spec.outputs = params(r.at("outputs"));
        const auto& prov = r.value("provenance", json::object());
        spec.provenance = {prov.value("source", ""), prov.value("locator", "")};
        spec.completed = r.value("completed", false);
        return spec;
    } catch (const json::exception& e) {
        throw ParseFailure(std::string("bad function record: ") + e.what());
    }
}

FunctionSpec complete_spec(const FunctionSpec& spec, Gateway& gw, const CompletionOptions& opts) {
    if (spec.is_complete()) return spec;
    FunctionSpec out = spec;
    const bool inputs_missing =
        std::any_of(out.inputs.begin(), out.inputs.end(), [](const auto& p) { return !p.is_complete(); });
    if (inputs_missing) {
        const std::string prompt = prompts::complete_input(tool_schema(out).dump());
        ask_until_valid(gw, prompt, "one JSON object with \"input description\" and \"input structure\"",
                        opts.retries, out.name, [&](const std::string& reply) {
                            auto predicted = read_structure(reply, "input structure");
                            if (!predicted) return false;
                            auto filled = apply_prediction(out.inputs, *predicted, false);
                            if (!filled) return false;
                            out.inputs = std::move(*filled);
                            return true;
                        });
    }
    const bool outputs_missing = out.outputs.empty() ||
        std::any_of(out.outputs.begin(), out.outputs.end(), [](const auto& p) { return !p.is_complete(); });
    if (outputs_missing) {
        const std::string prompt = prompts::complete_output(tool_schema(out).dump());
        ask_until_valid(gw, prompt, "one JSON object with \"output description\" and \"output structure\"",
                        opts.retries, out.name, [&](const std::string& reply) {
                            auto predicted = read_structure(reply, "output structure");
                            if (!predicted) return false;
                            auto filled = apply_prediction(out.outputs, *predicted, true);
                            if (!filled) return false;
                            out.outputs = std::move(*filled);
                            return true;
                        });
    }
    out.completed = true;
    out.id = compute_spec_id(out);
    return out;
}

std::vector<FunctionSpec> dedup_by_id(std::vector<FunctionSpec> specs) {
    std::unordered_set<std::string> seen;
    std::vector<FunctionSpec> out;
    out.reserve(specs.size());
    for (auto& s : specs) {
        if (seen.insert(s.id).second) out.push_back(std::move(s));
    }
    return out;
}

} // namespace toolforge
