#include "gridmcp/dsspkg/package.hpp"

#include "gridmcp/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace gridmcp::dss {

namespace {

class LocalFileSystem final : public FileSystem {
public:
    fs::path canonical(const fs::path& p) const override { return fs::weakly_canonical(p); }
    bool is_file(const fs::path& p) const override { return fs::is_regular_file(p); }
    bool is_directory(const fs::path& p) const override { return fs::is_directory(p); }

    std::vector<fs::path> list_directory(const fs::path& p) const override
    {
        std::vector<fs::path> out;
        for (const auto& entry : fs::directory_iterator(p)) {
            out.push_back(entry.path());
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    std::string read(const fs::path& p) const override
    {
        std::ifstream in(p, std::ios::binary);
        if (!in) {
            throw Error(ErrorCode::ParseError, "cannot read '" + p.string() + "'");
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
};

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

std::optional<double> to_number(std::string_view s)
{
    s = trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

Manifest read_manifest(const PathGuard& guard, const fs::path& dir)
{
    Manifest m;
    m.name = dir.filename().string();
    const auto file = guard.resolve_from(dir, "manifest.json");
    if (!guard.files().is_file(file)) {
        return m;
    }
    try {
        auto j = nlohmann::json::parse(guard.files().read(file));
        m.name = j.value("name", m.name);
        if (j.contains("version")) {
            m.version = j["version"].is_string() ? j["version"].get<std::string>() : j["version"].dump();
        }
        m.description = j.value("description", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, "manifest.json in '" + dir.filename().string() + "': " + e.what());
    }
    return m;
}

} // namespace

std::shared_ptr<const FileSystem> local_filesystem()
{
    static const auto instance = std::make_shared<LocalFileSystem>();
    return instance;
}

PathGuard::PathGuard(fs::path root, std::shared_ptr<const FileSystem> files)
    : fs_(std::move(files))
{
    root_ = fs_->canonical(fs::absolute(root));
}

bool PathGuard::contains(const fs::path& canonical_path) const
{
    auto r = root_.begin();
    auto p = canonical_path.begin();
    for (; r != root_.end(); ++r, ++p) {
        if (r->empty() && std::next(r) == root_.end()) {
            break; // trailing separator on the root
        }
        if (p == canonical_path.end() || *p != *r) {
            return false;
        }
    }
    return true;
}

fs::path PathGuard::resolve_from(const fs::path& base, const fs::path& p) const
{
    const auto joined = p.is_absolute() ? p : base / p;
    auto canon = fs_->canonical(joined);
    if (!contains(canon)) {
        throw Error(ErrorCode::PathEscapesWhitelist,
                    "path '" + p.string() + "' resolves outside the allowed directory");
    }
    return canon;
}

fs::path PathGuard::resolve(const fs::path& p) const { return resolve_from(root_, p); }

std::map<std::string, pf::Coord> parse_buscoords(std::string_view text)
{
    std::map<std::string, pf::Coord> out;
    std::size_t row = 0;
    bool seen = false;
    while (!text.empty()) {
        auto eol = text.find('\n');
        auto line = trim(text.substr(0, eol));
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        ++row;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string_view> cols;
        std::size_t start = 0;
        while (true) {
            auto comma = line.find(',', start);
            cols.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
            if (comma == std::string_view::npos) {
                break;
            }
            start = comma + 1;
        }
        const bool first = !seen;
        seen = true;
        std::optional<double> x = cols.size() >= 3 ? to_number(cols[1]) : std::nullopt;
        std::optional<double> y = cols.size() >= 3 ? to_number(cols[2]) : std::nullopt;
        if (!x || !y) {
            if (first) {
                continue; // header
            }
            throw Error(ErrorCode::MalformedRow, "buscoords row " + std::to_string(row) + " is not 'bus,x,y'");
        }
        out[lower(cols[0])] = pf::Coord{*x, *y};
    }
    return out;
}

LoadedPackage load_circuit_package(const PathGuard& guard, const fs::path& path)
{
    const auto& files = guard.files();
    auto target = guard.resolve(path);
    fs::path dir;
    fs::path master;
    if (files.is_directory(target)) {
        dir = target;
        master = guard.resolve_from(dir, "master.dss");
    } else {
        master = target;
        dir = target.parent_path();
    }
    if (!files.is_file(master)) {
        throw Error(ErrorCode::ParseError, "package '" + path.string() + "' has no master.dss");
    }

    LoadedPackage out;
    out.package.directory = dir;
    out.package.manifest = read_manifest(guard, dir);
    out.package.master_file = files.read(master);

    RedirectResolver resolver = [&](const std::string& name) -> std::optional<std::string> {
        auto file = guard.resolve_from(dir, name);
        if (!files.is_file(file)) {
            return std::nullopt;
        }
        auto text = files.read(file);
        out.package.components[file.lexically_relative(dir).generic_string()] = text;
        return text;
    };
    auto parsed = parse_dss_subset(out.package.master_file, master.filename().string(), resolver);
    out.built = build_circuit(parsed.directives);
    out.warnings = parsed.warnings;
    out.warnings.insert(out.warnings.end(), out.built.warnings.begin(), out.built.warnings.end());

    const auto coords_file = guard.resolve_from(dir, "buscoords.csv");
    if (files.is_file(coords_file)) {
        out.package.buscoords = files.read(coords_file);
        for (const auto& [bus, xy] : parse_buscoords(*out.package.buscoords)) {
            auto* b = out.built.circuit.find_bus(bus);
            if (b == nullptr) {
                out.warnings.push_back("buscoords: unknown bus '" + bus + "' ignored");
                continue;
            }
            b->coord = xy;
        }
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> package_files(const CircuitPackage& pkg)
{
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back("master.dss", pkg.master_file);
    for (const auto& [name, text] : pkg.components) {
        out.emplace_back(name, text);
    }
    if (pkg.buscoords) {
        out.emplace_back("buscoords.csv", *pkg.buscoords);
    }
    return out;
}

std::vector<LibraryEntry> list_library(const PathGuard& guard)
{
    std::vector<LibraryEntry> out;
    const auto& files = guard.files();
    if (!files.is_directory(guard.root())) {
        return out;
    }
    for (const auto& entry : files.list_directory(guard.root())) {
        fs::path dir;
        try {
            dir = guard.resolve(entry);
        } catch (const Error&) {
            continue; // symlinked package pointing elsewhere
        }
        if (!files.is_directory(dir) || !files.is_file(dir / "master.dss")) {
            continue;
        }
        out.push_back(LibraryEntry{read_manifest(guard, dir), dir});
    }
    std::sort(out.begin(), out.end(),
              [](const LibraryEntry& a, const LibraryEntry& b) { return a.manifest.name < b.manifest.name; });
    return out;
}

nlohmann::json to_json(const Manifest& m)
{
    return {{"name", m.name}, {"version", m.version}, {"description", m.description}};
}

} // namespace gridmcp::dss
