#include "support/fuzz.hpp"

#include <string>
#include <vector>

namespace gridmcp::testing {

using nlohmann::json;

namespace {

bool allows(const json& schema, const std::string& type)
{
    if (!schema.contains("type")) {
        return true;
    }
    const auto& t = schema["type"];
    if (t.is_string()) {
        return t == type || (type == "integer" && t == "number");
    }
    for (const auto& x : t) {
        if (x == type || (type == "integer" && x == "number")) {
            return true;
        }
    }
    return false;
}

/// Values of every JSON kind; numeric strings are left out because the
/// validator coerces them.
std::vector<json> samples()
{
    return {json(nullptr), json(true), json(17), json(2.5), json("not-a-number"), json::array({1, 2}),
            json::object({{"x", 1}})};
}

std::string kind_of(const json& v)
{
    if (v.is_null()) {
        return "null";
    }
    if (v.is_boolean()) {
        return "boolean";
    }
    if (v.is_number_integer()) {
        return "integer";
    }
    if (v.is_number()) {
        return "number";
    }
    if (v.is_string()) {
        return "string";
    }
    if (v.is_array()) {
        return "array";
    }
    return "object";
}

/// A value with a kind the property schema rejects, or null when it accepts anything.
std::optional<json> wrong_type(const json& prop, std::mt19937_64& rng)
{
    std::vector<json> bad;
    for (const auto& v : samples()) {
        if (!allows(prop, kind_of(v))) {
            bad.push_back(v);
        }
    }
    if (bad.empty()) {
        return std::nullopt;
    }
    return bad[std::uniform_int_distribution<std::size_t>(0, bad.size() - 1)(rng)];
}

std::optional<json> out_of_range(const json& prop)
{
    if (prop.contains("enum")) {
        return json("definitely-not-allowed");
    }
    if (prop.contains("minimum")) {
        return json(prop["minimum"].get<double>() - 1000.5);
    }
    if (prop.contains("exclusiveMinimum")) {
        return json(prop["exclusiveMinimum"].get<double>());
    }
    if (prop.contains("maximum")) {
        return json(prop["maximum"].get<double>() + 1000.5);
    }
    if (prop.contains("minLength")) {
        return json("");
    }
    if (prop.contains("minItems")) {
        return json::array();
    }
    return std::nullopt;
}

json valid_value(const json& prop)
{
    if (prop.contains("enum")) {
        return prop["enum"][0];
    }
    if (allows(prop, "string")) {
        return "x";
    }
    if (allows(prop, "integer")) {
        return prop.contains("minimum") ? prop["minimum"] : json(1);
    }
    if (allows(prop, "array")) {
        return json::array({1.0});
    }
    return json::object();
}

} // namespace

json malformed_arguments(const json& schema, std::mt19937_64& rng)
{
    const json& props = schema.at("properties");
    std::vector<std::string> names;
    for (const auto& [k, v] : props.items()) {
        names.push_back(k);
    }
    json base = json::object();
    for (const auto& r : schema.at("required")) {
        base[r.get<std::string>()] = valid_value(props[r.get<std::string>()]);
    }
    for (int attempt = 0; attempt < 16; ++attempt) {
        switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
        case 0: {
            if (schema["required"].empty()) {
                break;
            }
            auto args = base;
            const auto& req = schema["required"];
            args.erase(req[std::uniform_int_distribution<std::size_t>(0, req.size() - 1)(rng)].get<std::string>());
            return args;
        }
        case 1: {
            if (names.empty()) {
                break;
            }
            const auto& key = names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)];
            if (auto bad = wrong_type(props[key], rng)) {
                auto args = base;
                args[key] = *bad;
                return args;
            }
            break;
        }
        case 2: {
            if (names.empty()) {
                break;
            }
            const auto& key = names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)];
            if (auto bad = out_of_range(props[key])) {
                auto args = base;
                args[key] = *bad;
                return args;
            }
            break;
        }
        case 3: {
            auto args = base;
            args["unexpected_" + std::to_string(rng() % 1000)] = 1;
            return args;
        }
        default: {
            const std::vector<json> non_objects{json::array({1}), json("text"), json(42), json(true)};
            return non_objects[std::uniform_int_distribution<std::size_t>(0, non_objects.size() - 1)(rng)];
        }
        }
    }
    auto args = base;
    args["unexpected"] = true;
    return args;
}

} // namespace gridmcp::testing
