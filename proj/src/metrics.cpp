#include "hgs/metrics.hpp"

#include "hgs/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace hgs {

namespace {

void check_shapes(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw Error(ErrorKind::ShapeMismatch, "images differ in shape");
}

std::array<double, kSsimWindow> gaussian_window() {
    std::array<double, kSsimWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable Gaussian blur of one plane with zero padding, same-size output.
std::vector<double> blur(const std::vector<double>& src, int width, int height) {
    static const auto w = gaussian_window();
    constexpr int half = kSsimWindow / 2;
    std::vector<double> tmp(src.size(), 0.0), dst(src.size(), 0.0);
    for (int y = 0; y < height; ++y) {
        const double* row = src.data() + static_cast<std::size_t>(y) * width;
        double* out = tmp.data() + static_cast<std::size_t>(y) * width;
        for (int x = 0; x < width; ++x) {
            const int k0 = std::max(-half, -x), k1 = std::min(half, width - 1 - x);
            double acc = 0.0;
            for (int k = k0; k <= k1; ++k) acc += w[k + half] * row[x + k];
            out[x] = acc;
        }
    }
    for (int y = 0; y < height; ++y) {
        const int k0 = std::max(-half, -y), k1 = std::min(half, height - 1 - y);
        double* out = dst.data() + static_cast<std::size_t>(y) * width;
        for (int k = k0; k <= k1; ++k) {
            const double wk = w[k + half];
            const double* row = tmp.data() + static_cast<std::size_t>(y + k) * width;
            for (int x = 0; x < width; ++x) out[x] += wk * row[x];
        }
    }
    return dst;
}

std::vector<double> channel_plane(const Image& img, int c) {
    std::vector<double> plane(img.pixel_count());
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.data[i * img.channels + c];
    return plane;
}

SsimWithGradient ssim_impl(const Image& a, const Image& b, bool want_gradient) {
    check_shapes(a, b);
    if (std::min(a.width, a.height) < kSsimWindow) {
        throw Error(ErrorKind::ImageTooSmall, "ssim needs at least 11x11 pixels");
    }
    SsimWithGradient result;
    if (want_gradient) result.d_a = Image(a.width, a.height, a.channels);
    const std::size_t n = a.pixel_count();
    const double total = static_cast<double>(n) * a.channels;

    double sum = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        const auto pa = channel_plane(a, c);
        const auto pb = channel_plane(b, c);
        std::vector<double> aa(n), bb(n), ab(n);
        for (std::size_t i = 0; i < n; ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const auto mu_a = blur(pa, a.width, a.height);
        const auto mu_b = blur(pb, a.width, a.height);
        const auto e_aa = blur(aa, a.width, a.height);
        const auto e_bb = blur(bb, a.width, a.height);
        const auto e_ab = blur(ab, a.width, a.height);

        std::vector<double> d_mu(n), d_eaa(n), d_eab(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double var_a = e_aa[i] - ma * ma;
            const double var_b = e_bb[i] - mb * mb;
            const double cov = e_ab[i] - ma * mb;
            const double a1 = 2.0 * ma * mb + kSsimC1;
            const double a2 = 2.0 * cov + kSsimC2;
            const double b1 = ma * ma + mb * mb + kSsimC1;
            const double b2 = var_a + var_b + kSsimC2;
            const double num = a1 * a2;
            const double den = b1 * b2;
            sum += num / den;
            if (want_gradient) {
                const double d_num_mu = 2.0 * mb * a2 - 2.0 * mb * a1;
                const double d_den_mu = 2.0 * ma * b2 - 2.0 * ma * b1;
                d_mu[i] = (d_num_mu * den - num * d_den_mu) / (den * den);
                d_eaa[i] = -num * b1 / (den * den);
                d_eab[i] = 2.0 * a1 / den;
            }
        }
        if (want_gradient) {
            const auto g_mu = blur(d_mu, a.width, a.height);
            const auto g_eaa = blur(d_eaa, a.width, a.height);
            const auto g_eab = blur(d_eab, a.width, a.height);
            for (std::size_t i = 0; i < n; ++i) {
                result.d_a.data[i * a.channels + c] =
                    (g_mu[i] + 2.0 * pa[i] * g_eaa[i] + pb[i] * g_eab[i]) / total;
            }
        }
    }
    result.value = sum / total;
    return result;
}

} // namespace

double psnr(const Image& a, const Image& b) {
    check_shapes(a, b);
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = se / static_cast<double>(a.data.size());
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, false).value; }

SsimWithGradient ssim_with_gradient(const Image& a, const Image& b) { return ssim_impl(a, b, true); }

void EvalReport::finalize() {
    mean_psnr = mean_ssim = mean_render_ms = 0.0;
    if (entries.empty()) return;
    for (const auto& e : entries) {
        mean_psnr += e.psnr;
        mean_ssim += e.ssim;
        mean_render_ms += e.render_ms;
    }
    const double n = static_cast<double>(entries.size());
    mean_psnr /= n;
    mean_ssim /= n;
    mean_render_ms /= n;
}

namespace {
std::string format_psnr(double v) {
    if (std::isinf(v)) return "inf";
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}
} // namespace

void EvalReport::write_csv(std::ostream& os) const {
    os << "image,psnr,ssim,render_ms\n";
    os << std::setprecision(10);
    for (const auto& e : entries) {
        os << e.name << ',' << format_psnr(e.psnr) << ',' << e.ssim << ',' << e.render_ms << '\n';
    }
    os << "mean," << format_psnr(mean_psnr) << ',' << mean_ssim << ',' << mean_render_ms << '\n';
    os << "# primitives," << primitive_count << '\n';
}

void EvalReport::write_table(std::ostream& os) const {
    os << std::left << std::setw(28) << "image" << std::right << std::setw(12) << "PSNR" << std::setw(10)
       << "SSIM" << std::setw(12) << "ms/frame" << '\n';
    auto row = [&](const std::string& name, double p, double s, double ms) {
        os << std::left << std::setw(28) << name << std::right << std::fixed << std::setprecision(3)
           << std::setw(12) << p << std::setw(10) << std::setprecision(4) << s << std::setw(12)
           << std::setprecision(2) << ms << '\n';
        os.unsetf(std::ios::fixed);
    };
    for (const auto& e : entries) row(e.name, e.psnr, e.ssim, e.render_ms);
    row("mean", mean_psnr, mean_ssim, mean_render_ms);
    os << "primitives: " << primitive_count << "  (LPIPS not computed)\n";
}

} // namespace hgs
