#include "sinkdesc/io.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace sinkdesc {

namespace fs = std::filesystem;

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    std::string field = line.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(std::move(field));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_number(const std::string& field, const std::string& origin, std::size_t line_no) {
  if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "-inf") return -std::numeric_limits<double>::infinity();
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw Error(ErrorKind::Parse, origin + ":" + std::to_string(line_no) + ": not a number: '" + field + "'");
  }
  return value;
}

}  // namespace

DiscreteMeasure parse_measure_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Parse, origin + ": empty file");
  const auto header = split_commas(line);
  bool has_weight = !header.empty() && header.back() == "w";
  const std::size_t dim = header.size() - (has_weight ? 1 : 0);
  if (dim == 0) throw Error(ErrorKind::Parse, origin + ": header declares no coordinates");
  for (std::size_t k = 0; k < dim; ++k) {
    if (header[k] != "x" + std::to_string(k)) {
      throw Error(ErrorKind::Parse, origin + ": expected header column x" + std::to_string(k) + ", got '" +
                                        header[k] + "'");
    }
  }

  std::vector<double> coords;
  std::vector<double> weights;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::Parse, origin + ":" + std::to_string(line_no) + ": expected " +
                                        std::to_string(header.size()) + " fields, got " +
                                        std::to_string(fields.size()));
    }
    for (std::size_t k = 0; k < dim; ++k) coords.push_back(parse_number(fields[k], origin, line_no));
    if (has_weight) weights.push_back(parse_number(fields.back(), origin, line_no));
  }
  const auto n = static_cast<Eigen::Index>(coords.size() / dim);
  if (n == 0) throw Error(ErrorKind::EmptySupport, origin + ": no data rows");
  Matrix pts = Eigen::Map<Matrix>(coords.data(), n, static_cast<Eigen::Index>(dim));
  if (!has_weight) return DiscreteMeasure(std::move(pts));
  Vector w = Eigen::Map<Vector>(weights.data(), n);
  return DiscreteMeasure(std::move(pts), std::move(w));
}

DiscreteMeasure read_measure_csv(const fs::path& path) {
  return parse_measure_csv(read_file(path), path.string());
}

std::string format_measure_csv(const DiscreteMeasure& measure) {
  std::string out;
  for (int k = 0; k < measure.dim(); ++k) out += "x" + std::to_string(k) + ",";
  out += "w\n";
  for (int i = 0; i < measure.size(); ++i) {
    for (int k = 0; k < measure.dim(); ++k) {
      out += format_double(measure.points()(i, k));
      out += ',';
    }
    out += format_double(measure.weights()[i]);
    out += '\n';
  }
  return out;
}

void write_measure_csv(const fs::path& path, const DiscreteMeasure& measure) {
  write_file_atomic(path, format_measure_csv(measure));
}

// ---------------------------------------------------------------------------
// PNG

GrayImage read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorKind::Io, "cannot read PNG " + path.string() + ": " + image.message);
  }
  // Request 8-bit RGB so the luma weights are applied here, not by libpng.
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::Io, "cannot decode PNG " + path.string() + ": " + msg);
  }

  GrayImage img;
  img.height = static_cast<int>(image.height);
  img.width = static_cast<int>(image.width);
  img.pixels.resize(static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width));
  for (std::size_t p = 0; p < img.pixels.size(); ++p) {
    const png_byte* px = buffer.data() + 3 * p;
    img.pixels[p] = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
  }
  return img;
}

void write_png_gray(const fs::path& path, const GrayImage& image) {
  if (image.height < 1 || image.width < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.height) * static_cast<std::size_t>(image.width)) {
    throw Error(ErrorKind::DimensionMismatch, "pixel count does not match image shape");
  }
  std::vector<png_byte> buffer(image.pixels.size());
  for (std::size_t p = 0; p < buffer.size(); ++p) {
    buffer[p] = static_cast<png_byte>(std::lround(std::clamp(image.pixels[p], 0.0, 1.0) * 255.0));
  }
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(image.width);
  out.height = static_cast<png_uint_32>(image.height);
  out.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&out, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error(ErrorKind::Io, "cannot write PNG " + path.string() + ": " + out.message);
  }
}

}  // namespace sinkdesc
