#ifndef RVESCOPE_IMAGE_IO_HPP
#define RVESCOPE_IMAGE_IO_HPP

#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "rvescope/errors.hpp"
#include "rvescope/micrograph.hpp"

namespace rvescope {

namespace detail {

// Skips PNM whitespace and '#' comment lines, then reads one unsigned int.
inline int pnm_next_uint(std::istream& in, const std::string& path) {
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = in.get();
    }
    if (ch == EOF || !std::isdigit(ch)) throw IoError("malformed PGM header in " + path);
    long value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        if (value > 1000000000L) throw IoError("absurd PGM header value in " + path);
        ch = in.get();
    }
    if (ch != EOF) in.unget();
    return static_cast<int>(value);
}

} // namespace detail

/// Reads an 8-bit grayscale PGM (P2 ascii or P5 binary).
inline IntensityGrid read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || (magic[1] != '2' && magic[1] != '5')) {
        throw IoError("unsupported format (expected PGM P2/P5): " + path);
    }
    const bool binary = magic[1] == '5';
    IntensityGrid g;
    g.width = detail::pnm_next_uint(in, path);
    g.height = detail::pnm_next_uint(in, path);
    const int maxval = detail::pnm_next_uint(in, path);
    if (g.width < 1 || g.height < 1) throw IoError("degenerate PGM dimensions in " + path);
    if (maxval < 1 || maxval > 255) {
        throw IoError("unsupported PGM maxval " + std::to_string(maxval) + " (8-bit only): " + path);
    }
    const std::size_t n = static_cast<std::size_t>(g.width) * g.height;
    g.values.resize(n);
    if (binary) {
        in.get(); // single whitespace byte after maxval
        in.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n) throw IoError("truncated PGM data in " + path);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const int v = detail::pnm_next_uint(in, path);
            if (v > maxval) throw IoError("PGM sample exceeds maxval in " + path);
            g.values[i] = static_cast<std::uint8_t>(v);
        }
    }
    return g;
}

/// Writes binary PGM (P5), maxval 255. Byte layout is canonical so that
/// write -> read round-trips bit-exactly.
inline void write_pgm(const std::string& path, const IntensityGrid& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P5\n" << g.width << " " << g.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(g.values.data()),
              static_cast<std::streamsize>(g.values.size()));
    if (!out) throw IoError("short write to " + path);
}

/// Reads an 8-bit single-channel (grayscale) PNG. Anything else is rejected
/// with an explicit message.
inline IntensityGrid read_png_gray(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        std::fclose(fp);
        throw IoError("unsupported format (not a PNG): " + path);
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("libpng initialization failed");
    }
    std::string error;
    IntensityGrid g;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError(error.empty() ? "PNG decode failed: " + path : error);
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);
    if (color_type != PNG_COLOR_TYPE_GRAY || channels != 1) {
        error = "image with more than one channel rejected (need 8-bit grayscale PNG): " + path;
        longjmp(png_jmpbuf(png), 1);
    }
    if (bit_depth != 8) {
        if (bit_depth < 8) {
            png_set_expand_gray_1_2_4_to_8(png);
        } else {
            error = "unsupported PNG bit depth " + std::to_string(bit_depth) +
                    " (8-bit grayscale only): " + path;
            longjmp(png_jmpbuf(png), 1);
        }
    }
    png_read_update_info(png, info);

    g.width = static_cast<int>(png_get_image_width(png, info));
    g.height = static_cast<int>(png_get_image_height(png, info));
    g.values.resize(static_cast<std::size_t>(g.width) * g.height);
    std::vector<png_bytep> rows(static_cast<std::size_t>(g.height));
    for (int r = 0; r < g.height; ++r) {
        rows[static_cast<std::size_t>(r)] = g.values.data() + static_cast<std::size_t>(r) * g.width;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return g;
}

/// Sidecar metadata: "<image>.meta" containing `scale_um_per_px = <float>`.
inline std::optional<double> read_sidecar_scale(const std::string& image_path) {
    std::ifstream in(image_path + ".meta");
    if (!in) return std::nullopt;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        key.erase(0, key.find_first_not_of(" \t"));
        key.erase(key.find_last_not_of(" \t") + 1);
        if (key != "scale_um_per_px") continue;
        const double v = std::strtod(line.c_str() + eq + 1, nullptr);
        if (!(v > 0.0)) throw IoError("invalid scale_um_per_px in " + image_path + ".meta");
        return v;
    }
    return std::nullopt;
}

inline void write_sidecar_scale(const std::string& image_path, double scale) {
    std::ofstream out(image_path + ".meta");
    if (!out) throw IoError("cannot write " + image_path + ".meta");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "scale_um_per_px = %.17g\n", scale);
    out << buf;
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Reads a PGM (P2/P5) or grayscale PNG, deciding the format by extension
/// and falling back to the magic bytes.
inline IntensityGrid read_image(const std::string& path) {
    if (has_suffix(path, ".png") || has_suffix(path, ".PNG")) return read_png_gray(path);
    if (has_suffix(path, ".pgm") || has_suffix(path, ".PGM")) return read_pgm(path);
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open " + path);
    char m0 = 0;
    probe.get(m0);
    probe.close();
    return m0 == 'P' ? read_pgm(path) : read_png_gray(path);
}

/// Loads a micrograph from a PGM (P2/P5) or grayscale PNG file. Pixels with
/// intensity >= threshold become phase 1; with no threshold given, Otsu's
/// method picks one (reported via threshold_used when asked). Scale comes
/// from `scale_override`, else the `.meta` sidecar, else defaults to 1 um/px.
inline Micrograph load_micrograph(const std::string& path,
                                  std::optional<int> threshold = std::nullopt,
                                  std::optional<double> scale_override = std::nullopt,
                                  int* threshold_used = nullptr) {
    const IntensityGrid grid = read_image(path);
    double scale = 1.0;
    if (scale_override) {
        scale = *scale_override;
    } else if (auto side = read_sidecar_scale(path)) {
        scale = *side;
    }
    if (!(scale > 0.0)) throw ConfigError("scale must be > 0");
    const int thr = threshold ? *threshold : otsu_threshold(grid);
    if (threshold_used) *threshold_used = thr;
    return binarize(grid, thr, scale);
}

/// Saves a micrograph as binary PGM with phases stretched to {0, 255} plus
/// the scale sidecar. Reload with threshold 128 reproduces the phases.
inline void save_micrograph_pgm(const std::string& path, const Micrograph& m) {
    IntensityGrid g;
    g.height = m.height;
    g.width = m.width;
    g.values.resize(m.pixel_count());
    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = m.phases[i] ? 255 : 0;
    write_pgm(path, g);
    write_sidecar_scale(path, m.scale_um_per_px);
}

} // namespace rvescope

#endif
