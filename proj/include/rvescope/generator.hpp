#ifndef RVESCOPE_GENERATOR_HPP
#define RVESCOPE_GENERATOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rvescope/errors.hpp"
#include "rvescope/micrograph.hpp"
#include "rvescope/rng.hpp"

namespace rvescope {

enum class GeneratorKind { BooleanDisks, TwoRegion, Clustered };

/// Parameters for the synthetic two-phase micrograph generators.
/// Same spec + same seed produces bit-identical output; all geometry is
/// integer arithmetic (disk membership dx*dx + dy*dy <= r*r).
struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::BooleanDisks;
    double target_vf = 0.1;        // fraction in (0,1)
    int particle_radius = 6;       // pixels, > 0
    // clustered kind
    int parent_cap = 4096;         // max parent points drawn before giving up
    int offspring_count = 16;      // offspring disks per parent
    int cluster_radius = 24;       // offspring scatter radius, pixels
    // two-region kind
    double region_vf_left = 0.05;
    double region_vf_right = 0.20;
    int region_radius_left = 0;  // 0: use particle_radius
    int region_radius_right = 0; // 0: use particle_radius
    std::uint64_t seed = 0;
};

namespace detail {

// pixel count of the inclusive integer disk of radius r
inline std::int64_t disk_area(int r) {
    std::int64_t area = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (dx * dx + dy * dy <= r * r) ++area;
    return area;
}

// rasterize the disk, returning how many pixels flipped 0 -> 1
inline std::int64_t stamp_disk(Micrograph& m, int cy, int cx, int r) {
    std::int64_t fresh = 0;
    for (int dy = -r; dy <= r; ++dy) {
        const int y = cy + dy;
        if (y < 0 || y >= m.height) continue;
        for (int dx = -r; dx <= r; ++dx) {
            const int x = cx + dx;
            if (x < 0 || x >= m.width) continue;
            if (dx * dx + dy * dy <= r * r && m.at(y, x) == 0) {
                m.at(y, x) = 1;
                ++fresh;
            }
        }
    }
    return fresh;
}

inline void validate_common(const GeneratorSpec& spec, int height, int width) {
    if (!(spec.target_vf > 0.0 && spec.target_vf < 1.0))
        throw ConfigError("generator: target_vf must lie in (0,1)");
    if (spec.particle_radius < 1) throw ConfigError("generator: particle_radius must be > 0");
    if (height < 4 * spec.particle_radius || width < 4 * spec.particle_radius)
        throw ConfigError("generator: dimensions must be >= 4 * particle_radius");
}

// counts how many pixels the disk would flip 0 -> 1 without stamping it
inline std::int64_t count_fresh(const Micrograph& m, int cy, int cx, int r) {
    std::int64_t fresh = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (dy * dy + dx * dx <= r * r && m.at(cy + dy, cx + dx) == 0) ++fresh;
    return fresh;
}

// Boolean disk field: centers uniform with disks fully inside the image,
// overlap allowed as long as a candidate contributes at least a third of its
// area in fresh pixels (so particles merge into blobs at moderate vf, while
// coverage saturates far below 1 and high targets fail at the cap). Disks
// that would overshoot the +/-10% band are rejected.
inline void fill_boolean_disks(Micrograph& m, double target_vf, int radius, Rng& rng) {
    const std::int64_t total_px = static_cast<std::int64_t>(m.pixel_count());
    const std::int64_t area = disk_area(radius);
    const double lo = 0.9 * target_vf;
    const double hi = 1.1 * target_vf;
    const std::int64_t min_ones = static_cast<std::int64_t>(lo * total_px + 0.999999);
    const std::int64_t max_ones = static_cast<std::int64_t>(hi * total_px);
    const std::int64_t min_fresh = (area + 2) / 3;

    const int r = radius;
    const int row_span = m.height - 2 * r;
    const int col_span = m.width - 2 * r;
    const std::int64_t attempt_cap =
        50000 + 1000 * static_cast<std::int64_t>(target_vf * total_px / area + 1);

    std::int64_t ones = 0;
    std::int64_t attempts = 0;
    while (ones < min_ones) {
        if (++attempts > attempt_cap) {
            throw GenerationError(
                "generator: iteration cap (" + std::to_string(attempt_cap) +
                " draws) exceeded at vf " +
                std::to_string(static_cast<double>(ones) / total_px) +
                " before reaching target " + std::to_string(target_vf) +
                "; target unreachable with radius " + std::to_string(radius));
        }
        const int cy = r + static_cast<int>(rng.below(static_cast<std::uint64_t>(row_span)));
        const int cx = r + static_cast<int>(rng.below(static_cast<std::uint64_t>(col_span)));
        const std::int64_t fresh = count_fresh(m, cy, cx, r);
        if (fresh < min_fresh) continue;          // too deep an overlap
        if (ones + fresh > max_ones) continue;    // would overshoot the band
        stamp_disk(m, cy, cx, r);
        ones += fresh;
    }
}

// Matern-style cluster process: parents uniform, offspring disks scattered
// within cluster_radius of the parent. Offspring may overlap each other.
inline void fill_clustered(Micrograph& m, const GeneratorSpec& spec, Rng& rng) {
    const std::int64_t total_px = static_cast<std::int64_t>(m.pixel_count());
    const int r = spec.particle_radius;
    const double lo = 0.9 * spec.target_vf;
    const double hi = 1.1 * spec.target_vf;
    if (spec.cluster_radius < 1) throw ConfigError("generator: cluster_radius must be > 0");
    if (spec.offspring_count < 1) throw ConfigError("generator: offspring_count must be > 0");

    std::int64_t ones = 0;
    const std::int64_t min_ones = static_cast<std::int64_t>(lo * total_px + 0.999999);
    const std::int64_t max_ones = static_cast<std::int64_t>(hi * total_px);
    for (int parent = 0; parent < spec.parent_cap && ones < min_ones; ++parent) {
        const int py = static_cast<int>(rng.below(static_cast<std::uint64_t>(m.height)));
        const int px = static_cast<int>(rng.below(static_cast<std::uint64_t>(m.width)));
        for (int j = 0; j < spec.offspring_count && ones < min_ones; ++j) {
            // integer offset inside the cluster disk
            int dy;
            int dx;
            do {
                dy = static_cast<int>(rng.below(2 * static_cast<std::uint64_t>(spec.cluster_radius) + 1)) -
                     spec.cluster_radius;
                dx = static_cast<int>(rng.below(2 * static_cast<std::uint64_t>(spec.cluster_radius) + 1)) -
                     spec.cluster_radius;
            } while (dy * dy + dx * dx > spec.cluster_radius * spec.cluster_radius);
            const int cy = py + dy;
            const int cx = px + dx;
            if (cy < r || cy >= m.height - r || cx < r || cx >= m.width - r) continue;
            // dry-count so we never exit the band from above
            std::int64_t fresh = 0;
            for (int yy = -r; yy <= r; ++yy)
                for (int xx = -r; xx <= r; ++xx)
                    if (yy * yy + xx * xx <= r * r && m.at(cy + yy, cx + xx) == 0) ++fresh;
            if (ones + fresh > max_ones) continue;
            stamp_disk(m, cy, cx, r);
            ones += fresh;
        }
    }
    if (ones < min_ones) {
        throw GenerationError(
            "generator: parent cap (" + std::to_string(spec.parent_cap) +
            ") exceeded at vf " + std::to_string(static_cast<double>(ones) / total_px) +
            " before reaching target " + std::to_string(spec.target_vf));
    }
}

} // namespace detail

/// Synthesizes a two-phase micrograph. Realized volume fraction lands within
/// +/-10% relative of the target (per half for the two-region kind) or a
/// GenerationError reports why it could not.
inline Micrograph generate(const GeneratorSpec& spec, int height, int width,
                           double scale_um_per_px = 1.0) {
    detail::validate_common(spec, height, width);
    Micrograph m(height, width, scale_um_per_px);
    Rng rng(spec.seed);
    switch (spec.kind) {
    case GeneratorKind::BooleanDisks: {
        detail::fill_boolean_disks(m, spec.target_vf, spec.particle_radius, rng);
        break;
    }
    case GeneratorKind::TwoRegion: {
        if (!(spec.region_vf_left > 0.0 && spec.region_vf_left < 1.0) ||
            !(spec.region_vf_right > 0.0 && spec.region_vf_right < 1.0))
            throw ConfigError("generator: region vfs must lie in (0,1)");
        const int r_left = spec.region_radius_left > 0 ? spec.region_radius_left : spec.particle_radius;
        const int r_right = spec.region_radius_right > 0 ? spec.region_radius_right : spec.particle_radius;
        const int left_w = width / 2;
        const int right_w = width - left_w;
        if (left_w < 4 * r_left || right_w < 4 * r_right)
            throw ConfigError("generator: each half must be >= 4x its particle radius wide");
        Micrograph left(height, left_w, scale_um_per_px);
        Micrograph right(height, right_w, scale_um_per_px);
        Rng left_rng = rng.split(1);
        Rng right_rng = rng.split(2);
        detail::fill_boolean_disks(left, spec.region_vf_left, r_left, left_rng);
        detail::fill_boolean_disks(right, spec.region_vf_right, r_right, right_rng);
        for (int r = 0; r < height; ++r) {
            for (int c = 0; c < left_w; ++c) m.at(r, c) = left.at(r, c);
            for (int c = 0; c < right_w; ++c) m.at(r, left_w + c) = right.at(r, c);
        }
        break;
    }
    case GeneratorKind::Clustered: {
        detail::fill_clustered(m, spec, rng);
        break;
    }
    }
    return m;
}

inline GeneratorKind parse_generator_kind(const std::string& s) {
    if (s == "boolean-disks") return GeneratorKind::BooleanDisks;
    if (s == "two-region") return GeneratorKind::TwoRegion;
    if (s == "clustered") return GeneratorKind::Clustered;
    throw ConfigError("unknown generator kind '" + s +
                      "' (expected boolean-disks, two-region, or clustered)");
}

} // namespace rvescope

#endif
