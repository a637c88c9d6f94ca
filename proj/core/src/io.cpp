#include "ctdl/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace ctdl {

namespace {

constexpr char kMagic[4] = {'C', 'T', 'D', 'L'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

float get_f32(std::istream& is) {
    const std::uint32_t u = get_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

} // namespace

std::size_t Container::size() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

void write_container(const std::string& path, const Container& c) {
    if (c.dims.empty() || c.dims.size() > 255)
        throw FormatError("container: invalid rank");
    if (c.data.size() != c.size())
        throw FormatError("container: payload size does not match dims");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("container: cannot open for writing: " + path);
    os.write(kMagic, 4);
    put_u32(os, kContainerVersion);
    os.put(char(0)); // dtype float32
    os.put(char(c.dims.size()));
    for (auto d : c.dims) put_u32(os, d);
    for (float v : c.data) put_f32(os, v);
    if (!os) throw FormatError("container: write failed: " + path);
}

Container read_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("container: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("container: bad magic: " + path);
    const std::uint32_t version = get_u32(is);
    if (version != kContainerVersion)
        throw FormatError("container: unsupported version: " + path);
    const int dtype = is.get();
    if (dtype != 0) throw FormatError("container: unsupported dtype: " + path);
    const int ndim = is.get();
    if (ndim < 1) throw FormatError("container: invalid rank: " + path);
    Container c;
    c.dims.resize(ndim);
    for (auto& d : c.dims) d = get_u32(is);
    c.data.resize(c.size());
    for (auto& v : c.data) v = get_f32(is);
    if (!is) throw FormatError("container: truncated payload: " + path);
    return c;
}

void write_image(const std::string& path, const Image& img) {
    Container c;
    c.dims = {std::uint32_t(img.grid.ny), std::uint32_t(img.grid.nx)};
    c.data.assign(img.values.begin(), img.values.end());
    write_container(path, c);
}

Image read_image(const std::string& path, const ImageGrid& grid) {
    const Container c = read_container(path);
    if (c.dims.size() != 2 || c.dims[0] != std::uint32_t(grid.ny) ||
        c.dims[1] != std::uint32_t(grid.nx))
        throw FormatError("image: dims mismatch: " + path);
    Image img(grid);
    img.values.assign(c.data.begin(), c.data.end());
    for (double v : img.values)
        if (!std::isfinite(v)) throw FormatError("image: non-finite value: " + path);
    return img;
}

void write_sinogram(const std::string& path, const Sinogram& sino) {
    Container c;
    c.dims = {std::uint32_t(sino.geom.n_views), std::uint32_t(sino.geom.n_dets)};
    c.data.assign(sino.values.begin(), sino.values.end());
    write_container(path, c);
}

Sinogram read_sinogram(const std::string& path, const FanBeamGeometry& geom) {
    const Container c = read_container(path);
    if (c.dims.size() != 2 || c.dims[0] != std::uint32_t(geom.n_views) ||
        c.dims[1] != std::uint32_t(geom.n_dets))
        throw FormatError("sinogram: dims mismatch: " + path);
    Sinogram s(geom);
    s.values.assign(c.data.begin(), c.data.end());
    for (double v : s.values)
        if (!std::isfinite(v)) throw FormatError("sinogram: non-finite value: " + path);
    return s;
}

void write_projection_mask(const std::string& path, const ProjectionMask& mask) {
    Container c;
    c.dims = {std::uint32_t(mask.n_views), std::uint32_t(mask.n_dets)};
    c.data.assign(mask.values.begin(), mask.values.end());
    write_container(path, c);
}

void write_image_mask(const std::string& path, const ImageMask& mask) {
    Container c;
    c.dims = {std::uint32_t(mask.ny), std::uint32_t(mask.nx)};
    c.data.assign(mask.values.begin(), mask.values.end());
    write_container(path, c);
}

std::map<std::string, std::string> parse_key_values(const std::string& text,
                                                    const std::set<std::string>& allowed) {
    std::map<std::string, std::string> out;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!allowed.empty() && !allowed.count(key))
            throw ConfigError("config: unknown key '" + key + "'");
        out[key] = value;
    }
    return out;
}

std::map<std::string, std::string> parse_config_file(const std::string& path,
                                                     const std::set<std::string>& allowed) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_key_values(ss.str(), allowed);
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != std::size_t(width) * height)
        throw FormatError("pgm: pixel count mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("pgm: cannot open for writing: " + path);
    os << "P5\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
    if (!os) throw FormatError("pgm: write failed: " + path);
}

} // namespace ctdl
