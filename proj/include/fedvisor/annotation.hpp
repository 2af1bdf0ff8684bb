#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "fedvisor/common.hpp"

namespace fedvisor {

// One Darknet-format labeled box: "label x y w h", normalized center
// coordinates. label is the class index.
struct BoxAnnotation {
    int label = 0;
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    bool operator==(const BoxAnnotation& o) const = default;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

inline double parse_double_field(std::string_view f, std::size_t lineno, const char* name) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || ptr != f.data() + f.size())
        throw AnnotationError(lineno, std::string("field '") + name + "' is not numeric: '" +
                                          std::string(f) + "'");
    return v;
}

inline int parse_label_field(std::string_view f, std::size_t lineno) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || ptr != f.data() + f.size())
        throw AnnotationError(lineno, "field 'label' is not an integer: '" + std::string(f) + "'");
    if (v < 0) throw AnnotationError(lineno, "label must be non-negative");
    return v;
}

}  // namespace detail

// One BoxAnnotation per non-empty line; five whitespace-separated fields.
// Throws AnnotationError carrying the offending 1-based line number.
inline std::vector<BoxAnnotation> parse_annotation_file(std::string_view text) {
    std::vector<BoxAnnotation> boxes;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
        ++lineno;
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;

        auto fields = detail::split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != 5)
            throw AnnotationError(lineno, "expected 5 fields {label x y w h}, got " +
                                              std::to_string(fields.size()));
        BoxAnnotation b;
        b.label = detail::parse_label_field(fields[0], lineno);
        b.x = detail::parse_double_field(fields[1], lineno, "x");
        b.y = detail::parse_double_field(fields[2], lineno, "y");
        b.w = detail::parse_double_field(fields[3], lineno, "w");
        b.h = detail::parse_double_field(fields[4], lineno, "h");
        if (b.x < 0.0 || b.x > 1.0) throw AnnotationError(lineno, "x out of range [0,1]");
        if (b.y < 0.0 || b.y > 1.0) throw AnnotationError(lineno, "y out of range [0,1]");
        if (b.w <= 0.0 || b.w > 1.0) throw AnnotationError(lineno, "w out of range (0,1]");
        if (b.h <= 0.0 || b.h > 1.0) throw AnnotationError(lineno, "h out of range (0,1]");
        boxes.push_back(b);
    }
    return boxes;
}

// Fixed 6-fractional-digit formatting; parse(serialize(b)) == b for values
// already quantized to that precision (which is how the files are written).
inline std::string serialize_annotations(const std::vector<BoxAnnotation>& boxes) {
    std::string out;
    char buf[128];
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f", b.label, b.x, b.y, b.w, b.h);
        if (i) out += '\n';
        out += buf;
    }
    return out;
}

}  // namespace fedvisor
