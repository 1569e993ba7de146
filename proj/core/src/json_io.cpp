#include "probcontour/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "probcontour/errors.hpp"

namespace probcontour {

std::string format_double_17(double v) {
    if (!std::isfinite(v)) throw NumericError("cannot serialize non-finite value");
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    std::string s(buf);
    // Keep a float marker so round-tripping preserves the JSON number type.
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
}

namespace {

void dump_rec(const json& j, std::string& out, int indent, int depth) {
    const auto pad = [&](int d) {
        if (indent >= 0) {
            out += '\n';
            out.append(static_cast<std::size_t>(indent) * d, ' ');
        }
    };
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += '{';
            bool first = true;
            for (const auto& [key, val] : j.items()) {
                if (!first) out += ',';
                first = false;
                pad(depth + 1);
                out += json(key).dump();
                out += indent >= 0 ? ": " : ":";
                dump_rec(val, out, indent, depth + 1);
            }
            pad(depth);
            out += '}';
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            out += '[';
            bool first = true;
            for (const auto& val : j) {
                if (!first) out += ',';
                first = false;
                pad(depth + 1);
                dump_rec(val, out, indent, depth + 1);
            }
            pad(depth);
            out += ']';
            return;
        }
        case json::value_t::number_float:
            out += format_double_17(j.get<double>());
            return;
        default:
            out += j.dump();
            return;
    }
}

}  // namespace

std::string dump_json(const json& j, int indent) {
    std::string out;
    dump_rec(j, out, indent, 0);
    if (indent >= 0) out += '\n';
    return out;
}

json parse_json_file(const std::filesystem::path& path) {
    return parse_json_text(read_text_file(path), path.string());
}

json parse_json_text(std::string_view text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(origin + ": JSON parse error at byte " + std::to_string(e.byte) + ": " +
                      e.what());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write file: " + path.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

std::uint64_t fnv1a64(const void* bytes, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::string to_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string hash_file_hex(const std::filesystem::path& path) {
    return to_hex(fnv1a64(read_text_file(path)));
}

}  // namespace probcontour
