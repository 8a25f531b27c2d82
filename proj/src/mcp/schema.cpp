#include "gridmcp/mcp/schema.hpp"

#include <charconv>
#include <cmath>

namespace gridmcp::mcp {

namespace {

struct Fail {
    SchemaIssue issue;
};

std::string join(const std::string& base, const std::string& key)
{
    return base.empty() ? key : base + "." + key;
}

bool matches_type(const std::string& type, nlohmann::json& v)
{
    if (type == "string") {
        return v.is_string();
    }
    if (type == "boolean") {
        return v.is_boolean();
    }
    if (type == "null") {
        return v.is_null();
    }
    if (type == "object") {
        return v.is_object();
    }
    if (type == "array") {
        return v.is_array();
    }
    if (type == "number" || type == "integer") {
        if (v.is_string()) {
            const auto& s = v.get_ref<const std::string&>();
            double d = 0.0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
            if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(d)) {
                return false;
            }
            v = d;
        }
        if (!v.is_number()) {
            return false;
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            return false;
        }
        if (type == "integer") {
            if (v.is_number_float()) {
                if (std::floor(d) != d || std::abs(d) > 9.0e15) {
                    return false;
                }
                v = static_cast<std::int64_t>(d);
            }
        }
        return true;
    }
    return false;
}

std::string describe_types(const nlohmann::json& type)
{
    if (type.is_string()) {
        return type.get<std::string>();
    }
    std::string out;
    for (const auto& t : type) {
        out += (out.empty() ? "" : " or ") + t.get<std::string>();
    }
    return out;
}

void check(const nlohmann::json& schema, nlohmann::json& v, const std::string& path)
{
    if (schema.contains("type")) {
        const auto& type = schema["type"];
        bool ok = false;
        if (type.is_string()) {
            ok = matches_type(type.get<std::string>(), v);
        } else {
            for (const auto& t : type) {
                auto copy = v;
                if (matches_type(t.get<std::string>(), copy)) {
                    v = std::move(copy);
                    ok = true;
                    break;
                }
            }
        }
        if (!ok) {
            throw Fail{{path, describe_types(type),
                        "expected " + describe_types(type) + ", got " + std::string(v.type_name())}};
        }
    }
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& e : schema["enum"]) {
            if (e == v) {
                found = true;
                break;
            }
        }
        if (!found) {
            std::string opts;
            for (const auto& e : schema["enum"]) {
                opts += (opts.empty() ? "" : ", ") + (e.is_string() ? e.get<std::string>() : e.dump());
            }
            throw Fail{{path, "one of [" + opts + "]", "value " + v.dump() + " is not one of [" + opts + "]"}};
        }
    }
    if (v.is_number()) {
        const double d = v.get<double>();
        if (schema.contains("minimum") && d < schema["minimum"].get<double>()) {
            throw Fail{{path, "number >= " + schema["minimum"].dump(),
                        "value " + v.dump() + " is below the minimum " + schema["minimum"].dump()}};
        }
        if (schema.contains("exclusiveMinimum") && d <= schema["exclusiveMinimum"].get<double>()) {
            throw Fail{{path, "number > " + schema["exclusiveMinimum"].dump(),
                        "value " + v.dump() + " must be greater than " + schema["exclusiveMinimum"].dump()}};
        }
        if (schema.contains("maximum") && d > schema["maximum"].get<double>()) {
            throw Fail{{path, "number <= " + schema["maximum"].dump(),
                        "value " + v.dump() + " is above the maximum " + schema["maximum"].dump()}};
        }
    }
    if (v.is_string() && schema.contains("minLength") &&
        v.get_ref<const std::string&>().size() < schema["minLength"].get<std::size_t>()) {
        throw Fail{{path, "non-empty string", "string is shorter than " + schema["minLength"].dump()}};
    }
    if (v.is_array()) {
        if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>()) {
            throw Fail{{path, "at least " + schema["minItems"].dump() + " items", "array has too few items"}};
        }
        if (schema.contains("maxItems") && v.size() > schema["maxItems"].get<std::size_t>()) {
            throw Fail{{path, "at most " + schema["maxItems"].dump() + " items", "array has too many items"}};
        }
        if (schema.contains("items")) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                check(schema["items"], v[i], path + "[" + std::to_string(i) + "]");
            }
        }
    }
    if (v.is_object()) {
        const auto props = schema.value("properties", nlohmann::json::object());
        for (const auto& req : schema.value("required", nlohmann::json::array())) {
            const auto key = req.get<std::string>();
            if (!v.contains(key)) {
                std::string type = "value";
                if (props.contains(key) && props[key].contains("type")) {
                    type = describe_types(props[key]["type"]);
                }
                throw Fail{{join(path, key), type, "missing required field '" + join(path, key) + "' (" + type + ")"}};
            }
        }
        const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"].is_boolean() &&
                            !schema["additionalProperties"].get<bool>();
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (props.contains(it.key())) {
                check(props[it.key()], it.value(), join(path, it.key()));
            } else if (closed) {
                std::string known;
                for (auto p = props.begin(); p != props.end(); ++p) {
                    known += (known.empty() ? "" : ", ") + p.key();
                }
                throw Fail{{join(path, it.key()), "no such field",
                            "unknown field '" + join(path, it.key()) + "'; allowed: " +
                                (known.empty() ? "none" : known)}};
            }
        }
    }
}

} // namespace

Validated validate(const nlohmann::json& schema, const nlohmann::json& value)
{
    Validated out;
    out.value = value;
    try {
        check(schema, out.value, "");
        out.ok = true;
    } catch (const Fail& f) {
        out.issue = f.issue;
        out.value = nullptr;
    }
    return out;
}

} // namespace gridmcp::mcp
