#pragma once

#include <string>

namespace tsb {

/// Throws ParseError when the file cannot be opened.
std::string read_text_file(const std::string& path);

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file. Creates missing parent directories.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace tsb
