#include "vit4lpa/text_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vit4lpa/error.hpp"

namespace vit4lpa {

std::string format_full(double v) {
    // try increasing precision until the value round-trips
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    return buf;
}

std::string format_g12(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

double parse_double(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) throw ContractError("not a number: '" + s + "'");
    return v;
}

long parse_long(const std::string& s) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str()) throw ContractError("not an integer: '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

bool KeyValueFile::has(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return true;
    }
    return false;
}

const std::string& KeyValueFile::require(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    throw ContractError("missing key: " + key);
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    return fallback;
}

std::string KeyValueFile::to_string() const {
    std::ostringstream os;
    std::string open_section;
    for (const auto& [k, v] : entries_) {
        const auto dot = k.find('.');
        if (dot != std::string::npos) {
            const std::string section = k.substr(0, dot);
            if (section != open_section) {
                os << '[' << section << "]\n";
                open_section = section;
            }
            os << k.substr(dot + 1) << " = " << v << '\n';
        } else {
            os << k << " = " << v << '\n';
        }
    }
    return os.str();
}

void KeyValueFile::write(const std::string& path) const {
    write_text_file(path, to_string());
}

KeyValueFile KeyValueFile::parse(const std::string& text) {
    KeyValueFile kv;
    std::string section;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ContractError("malformed line " + std::to_string(line_no) + ": '" + t + "'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ContractError("empty key at line " + std::to_string(line_no));
        kv.entries_.emplace_back(section.empty() ? key : section + "." + key, value);
    }
    return kv;
}

KeyValueFile KeyValueFile::read(const std::string& path) {
    return parse(read_text_file(path));
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace vit4lpa
