#pragma once

#include <json.hpp>

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace gridmcp::shapes {

enum class ShapeSource { Builtin, Custom };

struct LoadShape {
    std::string name;
    double interval_hours = 1.0;
    std::vector<double> multipliers;
    ShapeSource source = ShapeSource::Custom;

    /// Multiplier at a time step; the index wraps modulo the shape length.
    double at(std::size_t step) const { return multipliers[step % multipliers.size()]; }
};

/// Throws InvalidArgument / NonFiniteValue when the shape breaks its invariants.
void check_shape(const LoadShape& shape);

/// The ten shipped synthetic day profiles (24 points, 1 h interval).
const std::vector<LoadShape>& builtin_profiles();

/// Two-column CSV: index or hour, then multiplier. One header row tolerated.
LoadShape parse_profile_csv(std::string_view text, std::string name = "uploaded", double interval_hours = 1.0);

nlohmann::json to_json(const LoadShape& shape);
LoadShape shape_from_json(const nlohmann::json& j);

/// Callback answering whether a shape is currently assigned to some load.
using InUseProbe = std::function<bool(std::string_view name)>;

/// Named shape registry with the built-in profiles preloaded. Mutations take
/// an exclusive lock; reads share it.
class ShapeRegistry {
public:
    ShapeRegistry();

    void create(LoadShape shape);
    /// Replaces the multipliers (and optionally the interval) of a custom shape.
    void edit(std::string_view name, std::vector<double> multipliers, std::optional<double> interval_hours = {});
    /// Sets a single multiplier of a custom shape.
    void edit_point(std::string_view name, std::size_t index, double value);
    void remove(std::string_view name, const InUseProbe& in_use);
    LoadShape get(std::string_view name) const;
    bool contains(std::string_view name) const;
    /// Sorted by name.
    std::vector<LoadShape> list() const;
    std::vector<std::string> names() const;

    nlohmann::json export_json() const;

private:
    LoadShape& mutable_custom(std::string_view name);

    mutable std::shared_mutex mutex_;
    std::map<std::string, LoadShape, std::less<>> shapes_;
};

} // namespace gridmcp::shapes
