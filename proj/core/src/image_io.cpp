#include "vitsi/image_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <ostream>
#include <string>

#include "vitsi/errors.hpp"

namespace vitsi {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

}  // namespace

std::vector<double> parse_image_text(std::string_view text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::size_t b = pos, e = end;
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    if (b < e) {
      double v = 0.0;
      const char* first = text.data() + b;
      const char* last = text.data() + e;
      // from_chars rejects a leading '+', which other writers may emit.
      if (*first == '+' && last - first > 1 && first[1] != '-') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw ParseError("invalid pixel value '" + std::string(text.substr(b, e - b)) + "' at byte offset " +
                         std::to_string(ec != std::errc() ? b : static_cast<std::size_t>(ptr - text.data())) +
                         " (line " + std::to_string(out.size() + 1) + ")");
      }
      out.push_back(v);
    }
    pos = end + 1;
  }
  return out;
}

std::vector<double> read_image_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open image file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_image_text(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_image_text(std::ostream& out, std::span<const double> image) {
  out << std::setprecision(17);
  for (double v : image) out << v << '\n';
}

void write_image_file(const std::filesystem::path& path, std::span<const double> image) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  write_image_text(out, image);
}

}  // namespace vitsi
