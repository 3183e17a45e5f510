/*
 * Copyright 2026 The hwmimo Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "hwmimo/common.hpp"

namespace hwmimo {

/// Empty, integer, real or text cell.
using CsvCell = std::variant<std::monostate, std::int64_t, double, std::string>;

struct CsvTable {
        std::vector<std::string> header;
        std::vector<std::vector<CsvCell>> rows;
};

/// Shortest decimal that round-trips, limited to `precision` significant
/// digits when precision > 0. Infinities are written "inf" / "-inf".
inline std::string format_number(double x, int precision) {
    if (std::isnan(x)) {
        return "nan";
    }
    if (std::isinf(x)) {
        return x > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = precision > 0
                         ? std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general,
                                         precision)
                         : std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

/// RFC 4180 field quoting.
inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) {
        return field;
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

inline std::string format_cell(const CsvCell& cell, int precision) {
    struct Visitor {
            int precision;
            std::string operator()(std::monostate) const { return {}; }
            std::string operator()(std::int64_t v) const { return std::to_string(v); }
            std::string operator()(double v) const { return format_number(v, precision); }
            std::string operator()(const std::string& v) const { return csv_escape(v); }
    };
    return std::visit(Visitor{precision}, cell);
}

/// CSV text with CRLF record separators.
inline std::string to_csv(const CsvTable& table, int precision) {
    std::string out;
    auto emit_row = [&](const auto& cells, auto&& render) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i > 0) {
                out += ',';
            }
            out += render(cells[i]);
        }
        out += "\r\n";
    };
    emit_row(table.header, [](const std::string& h) { return csv_escape(h); });
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) {
            throw ValidationError("CSV row width does not match the header");
        }
        emit_row(row, [&](const CsvCell& c) { return format_cell(c, precision); });
    }
    return out;
}

inline void emit_csv(const CsvTable& table, const std::filesystem::path& path, int precision) {
    const std::string text = to_csv(table, precision);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

}  // namespace hwmimo
