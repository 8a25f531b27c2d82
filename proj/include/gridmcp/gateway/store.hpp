#pragma once

#include <json.hpp>

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace gridmcp::gateway {

struct Document {
    std::string id;
    std::uint64_t version = 0;
    std::string updated_at;
    nlohmann::json body;
};

/// Versioned JSON documents on the local filesystem, one file per document
/// under <root>/<collection>/<id>.json, plus content-addressed blobs under
/// <root>/blobs. Writes go to a temp file first and are renamed into place.
class DocumentStore {
public:
    /// Scans every collection. Unreadable records are moved to
    /// <root>/quarantine and reported through warnings(); opening never throws
    /// for a bad record.
    explicit DocumentStore(std::filesystem::path root);

    /// Last writer wins; returns the new version (previous + 1).
    std::uint64_t put(const std::string& collection, const std::string& id, const nlohmann::json& body);
    std::optional<Document> get(const std::string& collection, const std::string& id) const;
    std::vector<Document> list(const std::string& collection) const;
    bool remove(const std::string& collection, const std::string& id);

    /// Stores bytes under their content hash and returns the hash.
    std::string put_blob(const std::string& bytes);
    std::optional<std::string> get_blob(const std::string& hash) const;

    const std::vector<std::string>& warnings() const { return warnings_; }
    const std::filesystem::path& root() const { return root_; }

    /// Letters, digits, '-', '_' and '.', not starting with '.', at most 128 chars.
    static bool valid_id(const std::string& id);

private:
    std::filesystem::path file_of(const std::string& collection, const std::string& id) const;
    void scan();

    std::filesystem::path root_;
    mutable std::mutex mutex_;
    std::vector<std::string> warnings_;
};

} // namespace gridmcp::gateway
