#include "gridmcp/shapes/loadshape.hpp"

#include "gridmcp/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace gridmcp::shapes {

namespace {

LoadShape builtin(std::string name, std::vector<double> multipliers)
{
    return LoadShape{std::move(name), 1.0, std::move(multipliers), ShapeSource::Builtin};
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

std::optional<double> parse_number(std::string_view s)
{
    s = trim(s);
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return value;
}

} // namespace

void check_shape(const LoadShape& shape)
{
    if (shape.name.empty()) {
        throw Error(ErrorCode::InvalidArgument, "load shape name must not be empty");
    }
    if (!(shape.interval_hours > 0.0) || !std::isfinite(shape.interval_hours)) {
        throw Error(ErrorCode::InvalidArgument, "interval_hours must be a positive number");
    }
    if (shape.multipliers.empty()) {
        throw Error(ErrorCode::InvalidArgument, "load shape '" + shape.name + "' has no multipliers");
    }
    for (std::size_t i = 0; i < shape.multipliers.size(); ++i) {
        const double m = shape.multipliers[i];
        if (!std::isfinite(m)) {
            throw Error(ErrorCode::NonFiniteValue, "multiplier " + std::to_string(i) + " is not finite");
        }
        if (m < 0.0) {
            throw Error(ErrorCode::InvalidArgument, "multiplier " + std::to_string(i) + " is negative");
        }
    }
}

// Synthetic day profiles. Everything peaks at 1.0 except peak_stress (1.4).
const std::vector<LoadShape>& builtin_profiles()
{
    static const std::vector<LoadShape> profiles = {
        builtin("residential", {0.45, 0.40, 0.38, 0.37, 0.38, 0.45, 0.60, 0.72, 0.68, 0.60, 0.56, 0.55,
                                0.55, 0.54, 0.56, 0.62, 0.75, 0.88, 0.97, 1.00, 0.95, 0.85, 0.70, 0.55}),
        builtin("commercial_office", {0.35, 0.33, 0.32, 0.32, 0.33, 0.38, 0.50, 0.70, 0.88, 0.96, 0.99, 1.00,
                                      0.97, 0.99, 1.00, 0.97, 0.90, 0.75, 0.58, 0.48, 0.42, 0.39, 0.37, 0.36}),
        builtin("data_center", {0.92, 0.91, 0.90, 0.90, 0.90, 0.91, 0.93, 0.95, 0.97, 0.98, 0.99, 1.00,
                                1.00, 1.00, 1.00, 0.99, 0.98, 0.97, 0.96, 0.95, 0.94, 0.93, 0.93, 0.92}),
        builtin("industrial", {0.55, 0.55, 0.55, 0.55, 0.58, 0.70, 0.88, 0.97, 1.00, 1.00, 0.98, 0.96,
                               0.90, 0.97, 1.00, 0.99, 0.95, 0.85, 0.72, 0.65, 0.60, 0.58, 0.56, 0.55}),
        builtin("solar_generation", {0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.05, 0.18, 0.38, 0.58, 0.76, 0.90,
                                     0.98, 1.00, 0.95, 0.84, 0.67, 0.46, 0.24, 0.08, 0.00, 0.00, 0.00, 0.00}),
        builtin("peak_stress", {0.80, 0.75, 0.72, 0.70, 0.72, 0.80, 0.95, 1.10, 1.05, 0.98, 0.95, 0.95,
                                0.96, 0.98, 1.02, 1.10, 1.22, 1.32, 1.38, 1.40, 1.36, 1.25, 1.08, 0.90}),
        builtin("flat", std::vector<double>(24, 1.0)),
        builtin("retail", {0.30, 0.28, 0.27, 0.27, 0.28, 0.30, 0.38, 0.50, 0.68, 0.85, 0.95, 0.99,
                           1.00, 1.00, 0.99, 0.98, 0.97, 0.96, 0.93, 0.85, 0.70, 0.50, 0.38, 0.32}),
        builtin("school", {0.25, 0.25, 0.25, 0.25, 0.25, 0.28, 0.40, 0.75, 0.95, 1.00, 1.00, 0.98,
                           0.96, 0.97, 0.92, 0.70, 0.45, 0.35, 0.32, 0.30, 0.28, 0.27, 0.26, 0.25}),
        builtin("ev_charging", {0.85, 0.70, 0.55, 0.40, 0.30, 0.25, 0.20, 0.18, 0.15, 0.15, 0.15, 0.16,
                                0.18, 0.20, 0.22, 0.28, 0.40, 0.60, 0.80, 0.95, 1.00, 0.98, 0.95, 0.92}),
    };
    return profiles;
}

LoadShape parse_profile_csv(std::string_view text, std::string name, double interval_hours)
{
    LoadShape shape;
    shape.name = std::move(name);
    shape.interval_hours = interval_hours;
    shape.source = ShapeSource::Custom;

    std::size_t row = 0;
    bool seen_row = false;
    while (!text.empty()) {
        auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        ++row;
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const bool first = !seen_row;
        seen_row = true;
        auto comma = line.find(',');
        if (comma == std::string_view::npos) {
            throw Error(ErrorCode::MalformedRow, "malformed row " + std::to_string(row) + ": expected two columns");
        }
        auto col1 = trim(line.substr(0, comma));
        auto col2 = trim(line.substr(comma + 1));
        if (auto extra = col2.find(','); extra != std::string_view::npos) {
            col2 = trim(col2.substr(0, extra));
        }
        const auto index = parse_number(col1);
        if (first && !index) {
            continue; // header
        }
        const auto value = parse_number(col2);
        if (!index || !value) {
            throw Error(ErrorCode::MalformedRow, "malformed row " + std::to_string(row) + ": '" + std::string(line) + "'");
        }
        if (!std::isfinite(*value)) {
            throw Error(ErrorCode::NonFiniteValue, "row " + std::to_string(row) + " has a non-finite multiplier");
        }
        if (*value < 0.0) {
            throw Error(ErrorCode::MalformedRow, "malformed row " + std::to_string(row) + ": negative multiplier");
        }
        shape.multipliers.push_back(*value);
    }
    if (shape.multipliers.empty()) {
        throw Error(ErrorCode::MalformedRow, "profile CSV contains no data rows");
    }
    return shape;
}

nlohmann::json to_json(const LoadShape& shape)
{
    return {{"name", shape.name},
            {"interval_hours", shape.interval_hours},
            {"multipliers", shape.multipliers},
            {"source", shape.source == ShapeSource::Builtin ? "builtin" : "custom"}};
}

LoadShape shape_from_json(const nlohmann::json& j)
{
    LoadShape s;
    s.name = j.at("name").get<std::string>();
    s.interval_hours = j.value("interval_hours", 1.0);
    s.multipliers = j.at("multipliers").get<std::vector<double>>();
    s.source = j.value("source", std::string("custom")) == "builtin" ? ShapeSource::Builtin : ShapeSource::Custom;
    check_shape(s);
    return s;
}

ShapeRegistry::ShapeRegistry()
{
    for (const auto& s : builtin_profiles()) {
        shapes_.emplace(s.name, s);
    }
}

void ShapeRegistry::create(LoadShape shape)
{
    shape.source = ShapeSource::Custom;
    check_shape(shape);
    std::unique_lock lock(mutex_);
    if (shapes_.count(shape.name) != 0) {
        throw Error(ErrorCode::DuplicateName, "a load shape named '" + shape.name + "' already exists");
    }
    auto name = shape.name;
    shapes_.emplace(std::move(name), std::move(shape));
}

LoadShape& ShapeRegistry::mutable_custom(std::string_view name)
{
    auto it = shapes_.find(name);
    if (it == shapes_.end()) {
        throw Error(ErrorCode::UnknownShape, "no load shape named '" + std::string(name) + "'");
    }
    if (it->second.source == ShapeSource::Builtin) {
        throw Error(ErrorCode::BuiltinImmutable, "built-in profile '" + std::string(name) + "' cannot be modified");
    }
    return it->second;
}

void ShapeRegistry::edit(std::string_view name, std::vector<double> multipliers, std::optional<double> interval_hours)
{
    std::unique_lock lock(mutex_);
    auto& shape = mutable_custom(name);
    LoadShape updated = shape;
    updated.multipliers = std::move(multipliers);
    if (interval_hours) {
        updated.interval_hours = *interval_hours;
    }
    check_shape(updated);
    shape = std::move(updated);
}

void ShapeRegistry::edit_point(std::string_view name, std::size_t index, double value)
{
    std::unique_lock lock(mutex_);
    auto& shape = mutable_custom(name);
    if (index >= shape.multipliers.size()) {
        throw Error(ErrorCode::InvalidArgument, "index " + std::to_string(index) + " outside shape of length " +
                                                    std::to_string(shape.multipliers.size()));
    }
    LoadShape updated = shape;
    updated.multipliers[index] = value;
    check_shape(updated);
    shape = std::move(updated);
}

void ShapeRegistry::remove(std::string_view name, const InUseProbe& in_use)
{
    std::unique_lock lock(mutex_);
    mutable_custom(name);
    if (in_use && in_use(name)) {
        throw Error(ErrorCode::ShapeInUse, "load shape '" + std::string(name) + "' is assigned to a load");
    }
    shapes_.erase(shapes_.find(name));
}

LoadShape ShapeRegistry::get(std::string_view name) const
{
    std::shared_lock lock(mutex_);
    auto it = shapes_.find(name);
    if (it == shapes_.end()) {
        throw Error(ErrorCode::UnknownShape, "no load shape named '" + std::string(name) + "'");
    }
    return it->second;
}

bool ShapeRegistry::contains(std::string_view name) const
{
    std::shared_lock lock(mutex_);
    return shapes_.find(name) != shapes_.end();
}

std::vector<LoadShape> ShapeRegistry::list() const
{
    std::shared_lock lock(mutex_);
    std::vector<LoadShape> out;
    for (const auto& [name, shape] : shapes_) {
        out.push_back(shape);
    }
    return out;
}

std::vector<std::string> ShapeRegistry::names() const
{
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [name, shape] : shapes_) {
        out.push_back(name);
    }
    return out;
}

nlohmann::json ShapeRegistry::export_json() const
{
    auto arr = nlohmann::json::array();
    for (const auto& s : list()) {
        arr.push_back(to_json(s));
    }
    return arr;
}

} // namespace gridmcp::shapes
