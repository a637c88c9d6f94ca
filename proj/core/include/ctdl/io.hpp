#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctdl/fields.hpp"

namespace ctdl {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fixed little-endian binary container:
///   magic "CTDL", version u32, dtype u8 (0 = float32), ndim u8,
///   dims u32 each, payload row-major float32.
struct Container {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t size() const;
};

constexpr std::uint32_t kContainerVersion = 1;

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

// Field helpers. Doubles are narrowed to float32 on write.
void write_image(const std::string& path, const Image& img);
Image read_image(const std::string& path, const ImageGrid& grid);
void write_sinogram(const std::string& path, const Sinogram& sino);
Sinogram read_sinogram(const std::string& path, const FanBeamGeometry& geom);
void write_projection_mask(const std::string& path, const ProjectionMask& mask);
void write_image_mask(const std::string& path, const ImageMask& mask);

/// Flat key=value configuration text; '#' starts a comment, keys outside
/// `allowed` are rejected.
std::map<std::string, std::string> parse_key_values(const std::string& text,
                                                    const std::set<std::string>& allowed);
std::map<std::string, std::string> parse_config_file(const std::string& path,
                                                     const std::set<std::string>& allowed);

/// 8-bit binary PGM.
void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& pixels);

} // namespace ctdl
