#ifndef RVESCOPE_DATASET_HPP
#define RVESCOPE_DATASET_HPP

#include <cstdint>
#include <span>
#include <string>

#include "rvescope/errors.hpp"
#include "rvescope/micrograph.hpp"

namespace rvescope {

/// Supervised dataset view over a micrograph: one sample per interior pixel,
/// response y_i = the pixel's own phase, input x_i = its l_s x l_s
/// neighborhood minus the center, flattened top-left to bottom-right in
/// raster order with the center entry skipped (dimension l_s^2 - 1).
///
/// Samples are views into the micrograph, never copied; the micrograph must
/// outlive the dataset. Sample index i maps to interior pixel
/// (margin + i / interior_width, margin + i % interior_width).
class NeighborhoodDataset {
public:
    NeighborhoodDataset(const Micrograph& m, int ls) : m_(&m), ls_(ls) {
        if (ls < 3) throw ConfigError("neighborhood size l_s must be >= 3, got " + std::to_string(ls));
        if (ls % 2 == 0)
            throw ConfigError("neighborhood size l_s must be odd, got " + std::to_string(ls));
        if (ls > m.height || ls > m.width)
            throw ConfigError("neighborhood size l_s = " + std::to_string(ls) +
                              " exceeds micrograph side " + std::to_string(std::min(m.height, m.width)));
        margin_ = (ls - 1) / 2;
        interior_height_ = m.height - ls + 1;
        interior_width_ = m.width - ls + 1;
        center_flat_ = (ls * ls - 1) / 2; // raster index of the skipped center
    }

    const Micrograph& micrograph() const { return *m_; }
    int ls() const { return ls_; }
    int margin() const { return margin_; }
    int interior_height() const { return interior_height_; }
    int interior_width() const { return interior_width_; }
    std::pair<int, int> interior_origin() const { return {margin_, margin_}; }
    std::int64_t size() const {
        return static_cast<std::int64_t>(interior_height_) * interior_width_;
    }
    int dim() const { return ls_ * ls_ - 1; }

    std::uint8_t response(std::int64_t i) const {
        const auto [r, c] = pixel_of(i);
        return m_->at(r, c);
    }

    /// Micrograph location of sample i (the neighborhood center).
    std::pair<int, int> pixel_of(std::int64_t i) const {
        return {margin_ + static_cast<int>(i / interior_width_),
                margin_ + static_cast<int>(i % interior_width_)};
    }

    /// Value of input feature j of sample i, without materializing x_i.
    std::uint8_t feature(std::int64_t i, int j) const {
        const int flat = j < center_flat_ ? j : j + 1;
        const auto [r, c] = pixel_of(i);
        return m_->at(r - margin_ + flat / ls_, c - margin_ + flat % ls_);
    }

    /// Materializes x_i into `out` (size dim()).
    template <typename T>
    void gather(std::int64_t i, std::span<T> out) const {
        const auto [r, c] = pixel_of(i);
        const int w = m_->width;
        const std::uint8_t* base = &m_->phases[static_cast<std::size_t>(r - margin_) * w + (c - margin_)];
        T* dst = out.data();
        for (int dr = 0; dr < ls_; ++dr) {
            const std::uint8_t* row = base + static_cast<std::size_t>(dr) * w;
            if (dr == margin_) {
                for (int dc = 0; dc < margin_; ++dc) *dst++ = static_cast<T>(row[dc]);
                for (int dc = margin_ + 1; dc < ls_; ++dc) *dst++ = static_cast<T>(row[dc]);
            } else {
                for (int dc = 0; dc < ls_; ++dc) *dst++ = static_cast<T>(row[dc]);
            }
        }
    }

    /// Dot product of x_i with a weight vector of length dim(). Hot path of
    /// model fitting and scoring; iterates the neighborhood rows in place.
    double dot(std::int64_t i, std::span<const double> weights) const {
        const auto [r, c] = pixel_of(i);
        const int w = m_->width;
        const std::uint8_t* base = &m_->phases[static_cast<std::size_t>(r - margin_) * w + (c - margin_)];
        const double* wp = weights.data();
        double acc = 0.0;
        for (int dr = 0; dr < ls_; ++dr) {
            const std::uint8_t* row = base + static_cast<std::size_t>(dr) * w;
            if (dr == margin_) {
                for (int dc = 0; dc < margin_; ++dc) acc += *wp++ * row[dc];
                for (int dc = margin_ + 1; dc < ls_; ++dc) acc += *wp++ * row[dc];
            } else {
                for (int dc = 0; dc < ls_; ++dc) acc += *wp++ * row[dc];
            }
        }
        return acc;
    }

    /// grad += coeff * x_i, the adjoint of dot().
    void accumulate(std::int64_t i, double coeff, std::span<double> grad) const {
        const auto [r, c] = pixel_of(i);
        const int w = m_->width;
        const std::uint8_t* base = &m_->phases[static_cast<std::size_t>(r - margin_) * w + (c - margin_)];
        double* gp = grad.data();
        for (int dr = 0; dr < ls_; ++dr) {
            const std::uint8_t* row = base + static_cast<std::size_t>(dr) * w;
            if (dr == margin_) {
                for (int dc = 0; dc < margin_; ++dc) *gp++ += coeff * row[dc];
                for (int dc = margin_ + 1; dc < ls_; ++dc) *gp++ += coeff * row[dc];
            } else {
                for (int dc = 0; dc < ls_; ++dc) *gp++ += coeff * row[dc];
            }
        }
    }

private:
    const Micrograph* m_;
    int ls_;
    int margin_;
    int interior_height_;
    int interior_width_;
    int center_flat_;
};

/// Builds the Fig.-1-style dataset for neighborhood size l_s (odd, >= 3).
inline NeighborhoodDataset extract_dataset(const Micrograph& m, int ls) {
    return NeighborhoodDataset(m, ls);
}

} // namespace rvescope

#endif
