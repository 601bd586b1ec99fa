#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace copseudo {

// Flat `key=value` configuration. Blank lines and lines starting with '#'
// are ignored; keys and values are whitespace-trimmed.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);
// Writes keys in sorted order, one `key=value` per line.
void write_key_values(const KeyValues& kv, const std::filesystem::path& path);

std::string trim(std::string_view s);

}  // namespace copseudo
