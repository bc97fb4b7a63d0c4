#pragma once

// Number formatting, content hashing and atomic file output.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>
#include <unistd.h>

#include "rmdiff/error.hpp"

namespace rmdiff {

/// Shortest-form-free, round-trippable rendering with 17 significant digits.
inline std::string format_double(double v) {
    if (v == std::numeric_limits<double>::infinity()) return "inf";
    if (v == -std::numeric_limits<double>::infinity()) return "-inf";
    if (v != v) return "nan";
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

/// Write `path` by streaming into a sibling temporary file and renaming it
/// into place. A crash or kill before the rename leaves no file at `path`.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::function<void(std::ostream&)>& writer) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
        writer(out);
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw Error("write failed for '" + path.string() + "'");
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("cannot rename into '" + path.string() + "'");
    }
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, [&](std::ostream& os) { os << text; });
}

/// In-memory CSV table: `# config-hash:` comment line, header row, data rows.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    CsvTable& row() {
        rows_.emplace_back();
        return *this;
    }
    CsvTable& add(double v) { return add_cell(format_double(v)); }
    CsvTable& add(long long v) { return add_cell(std::to_string(v)); }
    CsvTable& add(int v) { return add_cell(std::to_string(v)); }
    CsvTable& add(std::size_t v) { return add_cell(std::to_string(v)); }
    CsvTable& add(const std::string& v) { return add_cell(v); }
    CsvTable& add(const char* v) { return add_cell(v); }

    std::size_t size() const { return rows_.size(); }
    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }

    std::string render(const std::string& config_hash) const {
        std::ostringstream os;
        os << "# config-hash: " << config_hash << "\n";
        join(os, columns_);
        for (const auto& r : rows_) join(os, r);
        return os.str();
    }

private:
    CsvTable& add_cell(std::string cell) {
        if (rows_.empty()) rows_.emplace_back();
        rows_.back().push_back(std::move(cell));
        return *this;
    }
    static void join(std::ostream& os, const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
        os << "\n";
    }

    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

} // namespace rmdiff
