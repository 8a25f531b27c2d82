#include "gridmcp/gateway/store.hpp"

#include "gridmcp/error.hpp"
#include "gridmcp/mcp/envelope.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <chrono>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

namespace gridmcp::gateway {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso()
{
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)), ms);
}

std::optional<std::string> slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const fs::path& target, const std::string& bytes)
{
    fs::create_directories(target.parent_path());
    const auto tmp = target.parent_path() / ("." + target.filename().string() + ".tmp");
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("cannot write '{}'", tmp.string()));
    }
    std::size_t done = 0;
    while (done < bytes.size()) {
        const auto n = ::write(fd, bytes.data() + done, bytes.size() - done);
        if (n <= 0) {
            ::close(fd);
            throw Error(ErrorCode::InvalidArgument, fmt::format("short write to '{}'", tmp.string()));
        }
        done += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
    fs::rename(tmp, target);
}

std::optional<Document> parse_record(const std::string& text)
{
    const auto j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("version")
        || !j["version"].is_number_unsigned() || !j.contains("body")) {
        return std::nullopt;
    }
    return Document{j["id"].get<std::string>(), j["version"].get<std::uint64_t>(), j.value("updated_at", ""),
                    j["body"]};
}

} // namespace

bool DocumentStore::valid_id(const std::string& id)
{
    if (id.empty() || id.size() > 128 || id.front() == '.') {
        return false;
    }
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-'
                        || c == '_' || c == '.';
        if (!ok) {
            return false;
        }
    }
    return true;
}

DocumentStore::DocumentStore(fs::path root) : root_(std::move(root))
{
    fs::create_directories(root_);
    scan();
}

fs::path DocumentStore::file_of(const std::string& collection, const std::string& id) const
{
    if (!valid_id(collection) || !valid_id(id)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("invalid document key '{}/{}'", collection, id));
    }
    return root_ / collection / (id + ".json");
}

void DocumentStore::scan()
{
    for (const auto& dir : fs::directory_iterator(root_)) {
        const auto name = dir.path().filename().string();
        if (!dir.is_directory() || name == "blobs" || name == "quarantine" || name == "uploads") {
            continue;
        }
        for (const auto& f : fs::directory_iterator(dir.path())) {
            const auto fname = f.path().filename().string();
            if (!f.is_regular_file()) {
                continue;
            }
            if (fname.front() == '.') {
                fs::remove(f.path()); // a temp file left by an interrupted write
                continue;
            }
            const auto text = slurp(f.path());
            const auto doc = text ? parse_record(*text) : std::nullopt;
            const bool matches = doc && f.path().extension() == ".json" && doc->id == f.path().stem().string();
            if (!matches) {
                const auto dest = root_ / "quarantine" / name / fname;
                fs::create_directories(dest.parent_path());
                fs::rename(f.path(), dest);
                warnings_.push_back(fmt::format("{}: corrupt record {}/{} moved to quarantine",
                                                to_string(ErrorCode::CorruptRecord), name, fname));
            }
        }
    }
}

std::uint64_t DocumentStore::put(const std::string& collection, const std::string& id, const json& body)
{
    std::lock_guard lock(mutex_);
    const auto file = file_of(collection, id);
    std::uint64_t version = 1;
    if (auto text = slurp(file)) {
        if (auto doc = parse_record(*text)) {
            version = doc->version + 1;
        }
    }
    const json record = {{"id", id}, {"version", version}, {"updated_at", now_iso()}, {"body", body}};
    write_atomic(file, record.dump());
    return version;
}

std::optional<Document> DocumentStore::get(const std::string& collection, const std::string& id) const
{
    std::lock_guard lock(mutex_);
    if (!valid_id(collection) || !valid_id(id)) {
        return std::nullopt;
    }
    const auto text = slurp(file_of(collection, id));
    return text ? parse_record(*text) : std::nullopt;
}

std::vector<Document> DocumentStore::list(const std::string& collection) const
{
    std::lock_guard lock(mutex_);
    std::vector<Document> out;
    if (!valid_id(collection) || !fs::is_directory(root_ / collection)) {
        return out;
    }
    for (const auto& f : fs::directory_iterator(root_ / collection)) {
        if (f.path().extension() != ".json" || f.path().filename().string().front() == '.') {
            continue;
        }
        if (auto text = slurp(f.path())) {
            if (auto doc = parse_record(*text)) {
                out.push_back(std::move(*doc));
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const Document& a, const Document& b) { return a.id < b.id; });
    return out;
}

bool DocumentStore::remove(const std::string& collection, const std::string& id)
{
    std::lock_guard lock(mutex_);
    return fs::remove(file_of(collection, id));
}

std::string DocumentStore::put_blob(const std::string& bytes)
{
    const auto hash = mcp::hex64(mcp::fnv1a(bytes));
    std::lock_guard lock(mutex_);
    const auto file = root_ / "blobs" / hash;
    if (!fs::exists(file)) {
        write_atomic(file, bytes);
    }
    return hash;
}

std::optional<std::string> DocumentStore::get_blob(const std::string& hash) const
{
    std::lock_guard lock(mutex_);
    if (!valid_id(hash)) {
        return std::nullopt;
    }
    return slurp(root_ / "blobs" / hash);
}

} // namespace gridmcp::gateway
