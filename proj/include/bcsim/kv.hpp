#pragma once

#include <string>
#include <utility>
#include <vector>

namespace bcsim {

// Flat key-value text format: `key = value` lines, `#` comments, blank lines
// ignored. Keys may be dotted (`dhp.gamma`). Order is preserved so emitted
// files diff cleanly.
using KvEntries = std::vector<std::pair<std::string, std::string>>;

// Throws std::runtime_error naming file and line on malformed input.
KvEntries read_kv_file(const std::string& path);
KvEntries parse_kv_text(const std::string& text, const std::string& origin);
void write_kv_file(const std::string& path, const KvEntries& entries);

const std::string* kv_find(const KvEntries& entries, const std::string& key);

// Decimal text that round-trips the double exactly.
std::string format_double(double v);
double parse_double(const std::string& text, const std::string& context);
long long parse_int(const std::string& text, const std::string& context);

}  // namespace bcsim
