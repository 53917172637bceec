#pragma once

#include <filesystem>
#include <string>

namespace adagat {

// Shortest round-trip-exact decimal form ("%.17g" trimmed), "nan"/"inf" for
// non-finite values. Used for CSV output so reruns are byte-comparable.
std::string format_double(double v);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace adagat
