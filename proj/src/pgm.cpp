#include "nestseg/pgm.hpp"

#include <cmath>
#include <fstream>

#include "nestseg/common.hpp"

namespace nestseg {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  check_runtime(ch != EOF, "read_pgm: unexpected end of header in ", path);
  std::string tok;
  while (ch != EOF && !std::isspace(ch) && ch != '#') {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  // Put the terminator back: the caller after the last header token consumes
  // exactly one separator byte before the raster.
  if (ch != EOF) in.unget();
  return tok;
}

long parse_long(const std::string& tok, const char* what, const std::string& path) {
  check_runtime(!tok.empty() && tok.find_first_not_of("0123456789") == std::string::npos,
                "read_pgm: bad ", what, " '", tok, "' in ", path);
  return std::stol(tok);
}

struct RawPgm {
  int height = 0;
  int width = 0;
  long maxval = 0;
  std::vector<uint16_t> samples;
};

RawPgm read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_runtime(in.good(), "read_pgm: cannot open ", path);
  std::string magic = next_token(in, path);
  check_runtime(magic == "P5", "read_pgm: ", path, " is not binary PGM (magic '",
                magic, "', want P5)");
  RawPgm out;
  out.width = static_cast<int>(parse_long(next_token(in, path), "width", path));
  out.height = static_cast<int>(parse_long(next_token(in, path), "height", path));
  out.maxval = parse_long(next_token(in, path), "maxval", path);
  check_runtime(out.width > 0 && out.height > 0, "read_pgm: bad extent ",
                out.width, "x", out.height, " in ", path);
  check_runtime(out.maxval > 0 && out.maxval < 65536, "read_pgm: maxval ",
                out.maxval, " out of range in ", path);
  // Exactly one whitespace byte separates the header from the raster.
  int sep = in.get();
  check_runtime(sep != EOF && std::isspace(sep), "read_pgm: missing raster in ",
                path);
  const std::size_t n = static_cast<std::size_t>(out.width) * out.height;
  const bool wide = out.maxval > 255;
  std::vector<char> bytes(n * (wide ? 2 : 1));
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  check_runtime(static_cast<std::size_t>(in.gcount()) == bytes.size(),
                "read_pgm: truncated raster in ", path, " (want ", bytes.size(),
                " bytes, got ", in.gcount(), ")");
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (wide) {
      const auto hi = static_cast<uint8_t>(bytes[2 * i]);
      const auto lo = static_cast<uint8_t>(bytes[2 * i + 1]);
      out.samples[i] = static_cast<uint16_t>((hi << 8) | lo);
    } else {
      out.samples[i] = static_cast<uint8_t>(bytes[i]);
    }
    check_runtime(out.samples[i] <= out.maxval, "read_pgm: sample ",
                  out.samples[i], " exceeds maxval ", out.maxval, " in ", path);
  }
  return out;
}

void write_raw(const std::string& path, int height, int width, long maxval,
               const std::vector<uint16_t>& samples) {
  std::ofstream out(path, std::ios::binary);
  check_runtime(out.good(), "write_pgm: cannot open ", path);
  out << "P5\n" << width << " " << height << "\n" << maxval << "\n";
  const bool wide = maxval > 255;
  std::vector<char> bytes;
  bytes.reserve(samples.size() * (wide ? 2 : 1));
  for (uint16_t s : samples) {
    if (wide) {
      bytes.push_back(static_cast<char>(s >> 8));
      bytes.push_back(static_cast<char>(s & 0xff));
    } else {
      bytes.push_back(static_cast<char>(s & 0xff));
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  check_runtime(out.good(), "write_pgm: short write to ", path);
}

}  // namespace

void write_pgm(const Image& img, const std::string& path) {
  check_config(img.values.size() ==
                   static_cast<std::size_t>(img.height) * img.width,
               "write_pgm: image ", img.height, "x", img.width, " wants ",
               static_cast<std::size_t>(img.height) * img.width,
               " values, got ", img.values.size());
  std::vector<uint16_t> samples(img.values.size());
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    const double v = img.values[i];
    check_config(v >= 0.0 && v <= 1.0, "write_pgm: value ", v, " at index ", i,
                 " outside [0,1]");
    samples[i] = static_cast<uint16_t>(std::lround(v * 65535.0));
  }
  write_raw(path, img.height, img.width, 65535, samples);
}

Image read_pgm(const std::string& path) {
  RawPgm raw = read_raw(path);
  Image img;
  img.height = raw.height;
  img.width = raw.width;
  img.values.resize(raw.samples.size());
  for (std::size_t i = 0; i < raw.samples.size(); ++i)
    img.values[i] = static_cast<double>(raw.samples[i]) /
                    static_cast<double>(raw.maxval);
  return img;
}

void write_label_pgm(const LabelMap& label, const std::string& path) {
  label.validate();
  check_config(label.m <= 255, "write_label_pgm: m=", label.m,
               " exceeds the 8-bit label format");
  std::vector<uint16_t> samples(label.values.begin(), label.values.end());
  write_raw(path, label.height, label.width, label.m, samples);
}

LabelMap read_label_pgm(const std::string& path) {
  RawPgm raw = read_raw(path);
  check_runtime(raw.maxval <= 255, "read_label_pgm: ", path, " has maxval ",
                raw.maxval, ", not a label map");
  LabelMap label;
  label.m = static_cast<int>(raw.maxval);
  label.height = raw.height;
  label.width = raw.width;
  label.values.assign(raw.samples.begin(), raw.samples.end());
  label.validate();
  return label;
}

}  // namespace nestseg
