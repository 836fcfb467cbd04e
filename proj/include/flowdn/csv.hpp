// Minimal CSV: header + string cells, RFC-style quoting, and doubles printed
// with enough digits to round-trip bit-exactly.
#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <vector>

#include "flowdn/tensor.hpp"

namespace flowdn::csv {

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const {
        for (size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        throw ConfigError("csv: no column '" + name + "'");
    }
    const std::string& cell(size_t row, const std::string& col) const {
        return rows.at(row).at(column_index(col));
    }
};

// Shortest decimal that parses back to the same bits ("0.3", not "0.29999...").
inline std::string format_double(double v) {
    char buf[40];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw IoError("format_double: conversion failed");
    return std::string(buf, end);
}

inline std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string serialize(const Table& t) {
    std::string out;
    for (size_t i = 0; i < t.columns.size(); ++i) {
        if (i) out += ',';
        out += quote(t.columns[i]);
    }
    out += '\n';
    for (const auto& row : t.rows) {
        if (row.size() != t.columns.size()) throw ConfigError("csv: ragged row");
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += quote(row[i]);
        }
        out += '\n';
    }
    return out;
}

inline Table parse(const std::string& text) {
    Table t;
    std::vector<std::string> row;
    std::string cell;
    bool in_quotes = false, any = false;
    auto end_cell = [&] {
        row.push_back(cell);
        cell.clear();
    };
    auto end_row = [&] {
        end_cell();
        if (!any) {
            t.columns = row;
            any = true;
        } else {
            t.rows.push_back(row);
        }
        row.clear();
    };
    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cell += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            end_cell();
        } else if (c == '\n') {
            end_row();
        } else if (c != '\r') {
            cell += c;
        }
    }
    if (!cell.empty() || !row.empty()) end_row();
    if (in_quotes) throw ConfigError("csv: unterminated quote");
    return t;
}

}  // namespace flowdn::csv
