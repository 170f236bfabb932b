#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nestseg/image.hpp"
#include "nestseg/losses.hpp"

namespace nestseg {

// Binary PGM (P5). Images are written with maxval 65535 (16-bit big-endian
// samples); v in [0,1] maps to round(v * 65535), so write/read round-trips
// are bit-exact on the integer samples. Label maps are written with
// maxval = m so the stored bytes are the raw class indices.
void write_pgm(const Image& img, const std::string& path);
Image read_pgm(const std::string& path);

void write_label_pgm(const LabelMap& label, const std::string& path);
// m is taken from the file's maxval.
LabelMap read_label_pgm(const std::string& path);

}  // namespace nestseg
