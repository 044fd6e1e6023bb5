#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace vitsi {

/// Headerless text image: one decimal float per line, row-major. Blank lines
/// are ignored. Throws ParseError naming the byte offset of the bad token.
std::vector<double> parse_image_text(std::string_view text);
std::vector<double> read_image_file(const std::filesystem::path& path);

/// Round-trips exactly (17 significant digits).
void write_image_text(std::ostream& out, std::span<const double> image);
void write_image_file(const std::filesystem::path& path, std::span<const double> image);

}  // namespace vitsi
