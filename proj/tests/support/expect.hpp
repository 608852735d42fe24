#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "ablb/error.hpp"

namespace testutil {

/// Code of the ablb::Error raised by f, or nothing when f returns normally.
template <class F>
std::optional<ablb::ErrorCode> thrown_code(F&& f) {
    try {
        f();
    } catch (const ablb::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& path);

}  // namespace testutil
