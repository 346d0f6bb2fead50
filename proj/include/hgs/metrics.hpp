#pragma once

#include "hgs/image.hpp"

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace hgs {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

// 10 log10(1 / MSE) over all channels; +infinity for identical images.
// Throws ShapeMismatch.
double psnr(const Image& a, const Image& b);

// Mean local SSIM (11x11 Gaussian window, sigma 1.5, zero-padded borders),
// averaged over channels. Throws ShapeMismatch, ImageTooSmall.
double ssim(const Image& a, const Image& b);

// SSIM together with d SSIM / d a.
struct SsimWithGradient {
    double value = 0.0;
    Image d_a;
};
SsimWithGradient ssim_with_gradient(const Image& a, const Image& b);

struct EvalEntry {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
    double render_ms = 0.0;
};

struct EvalReport {
    std::vector<EvalEntry> entries;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_render_ms = 0.0;
    std::size_t primitive_count = 0;
    // LPIPS needs a pretrained network and is not computed.
    std::optional<double> lpips;

    void finalize(); // recompute the means from entries
    void write_csv(std::ostream& os) const;
    void write_table(std::ostream& os) const;
};

} // namespace hgs
