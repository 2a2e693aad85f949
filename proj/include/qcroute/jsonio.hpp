#pragma once

#include <string>
#include <string_view>

namespace qcroute {

// Formats a finite double with up to 17 significant digits ("%.17g"), which
// round-trips to the identical bit pattern. All file formats emitted by this
// project go through here so reruns are byte-identical.
std::string fmt_double(double v);

// JSON string literal including the surrounding quotes.
std::string json_quote(std::string_view s);

// Writes `content` to `path` atomically: a sibling temp file is written and
// renamed over the target, so a failed command never leaves partial output.
void write_file_atomic(const std::string& path, std::string_view content);

// Reads a whole file; throws ValidationError if it cannot be opened.
std::string read_file(const std::string& path);

}  // namespace qcroute
