#pragma once

#include "gridmcp/dsspkg/dss.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gridmcp::dss {

namespace fs = std::filesystem;

/// File access used by the package loader. Tests substitute a recording
/// implementation to check that nothing outside the whitelist is touched.
class FileSystem {
public:
    virtual ~FileSystem() = default;
    /// Resolves symlinks and dot segments; the path need not exist.
    virtual fs::path canonical(const fs::path& p) const = 0;
    virtual bool is_file(const fs::path& p) const = 0;
    virtual bool is_directory(const fs::path& p) const = 0;
    virtual std::vector<fs::path> list_directory(const fs::path& p) const = 0;
    virtual std::string read(const fs::path& p) const = 0;
};

/// The real filesystem.
std::shared_ptr<const FileSystem> local_filesystem();

/// Confines every path to one whitelisted root directory after symlink
/// resolution.
class PathGuard {
public:
    PathGuard(fs::path root, std::shared_ptr<const FileSystem> fs = local_filesystem());

    /// Canonical form of `p` (relative paths are taken from the root).
    /// Throws PathEscapesWhitelist when the result is outside the root.
    fs::path resolve(const fs::path& p) const;
    /// Like resolve, but relative paths start at `base`.
    fs::path resolve_from(const fs::path& base, const fs::path& p) const;
    bool contains(const fs::path& canonical_path) const;

    const fs::path& root() const { return root_; }
    const FileSystem& files() const { return *fs_; }

private:
    fs::path root_;
    std::shared_ptr<const FileSystem> fs_;
};

struct Manifest {
    std::string name;
    std::string version = "0";
    std::string description;
};

struct CircuitPackage {
    Manifest manifest;
    fs::path directory;                            // canonical
    std::string master_file;                       // text of master.dss
    std::map<std::string, std::string> components; // redirected files, by relative name
    std::optional<std::string> buscoords;          // text of buscoords.csv
};

struct LoadedPackage {
    CircuitPackage package;
    BuiltCircuit built;
    std::vector<std::string> warnings; // parser, builder and coordinate warnings
};

/// Loads a package directory (or its master.dss). Throws PathEscapesWhitelist,
/// SyntaxError, UnresolvedRedirect, UndefinedLineCode, ParseError or
/// NonRadialCircuit.
LoadedPackage load_circuit_package(const PathGuard& guard, const fs::path& path);

/// Parses "bus,x,y" rows; a leading header row is skipped.
std::map<std::string, pf::Coord> parse_buscoords(std::string_view text);

/// Package files in resource order: master.dss, components, buscoords.csv.
std::vector<std::pair<std::string, std::string>> package_files(const CircuitPackage& pkg);

struct LibraryEntry {
    Manifest manifest;
    fs::path directory;
};

/// Packages found directly below the library root, sorted by name.
std::vector<LibraryEntry> list_library(const PathGuard& guard);

nlohmann::json to_json(const Manifest& m);

} // namespace gridmcp::dss
