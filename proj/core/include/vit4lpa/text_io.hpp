#pragma once

#include <string>
#include <utility>
#include <vector>

namespace vit4lpa {

// Shortest representation that round-trips a double exactly.
std::string format_full(double v);
// 12 significant digits, used for bulk CSV data.
std::string format_g12(double v);

double parse_double(const std::string& s);
long parse_long(const std::string& s);

std::vector<std::string> split(const std::string& s, char delim);
std::string trim(const std::string& s);

// Ordered `key = value` text file with '#' comments and optional [sections].
// Section names are folded into keys as "section.key".
class KeyValueFile {
 public:
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    const std::string& require(const std::string& key) const;  // ContractError if absent
    std::string get_or(const std::string& key, const std::string& fallback) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string to_string() const;
    void write(const std::string& path) const;
    static KeyValueFile parse(const std::string& text);
    static KeyValueFile read(const std::string& path);

 private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace vit4lpa
