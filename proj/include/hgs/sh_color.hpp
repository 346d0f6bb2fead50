#pragma once

#include <Eigen/Core>

#include <array>
#include <span>
#include <vector>

namespace hgs {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kMaxShCoeffs = 16;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

namespace sh {
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2 = {1.0925484305920792, -1.0925484305920792,
                                              0.31539156525252005, -1.0925484305920792,
                                              0.5462742152960396};
inline constexpr std::array<double, 7> kC3 = {-0.5900435899266435, 2.890611442640554,
                                              -0.4570457994644658, 0.3731763325901154,
                                              -0.4570457994644658, 1.445305721320277,
                                              -0.5900435899266435};

// Real SH basis in the 3D-GS ordering and sign convention. Writes
// sh_coeff_count(degree) values into out.
template <typename T>
void eval_basis(const T& x, const T& y, const T& z, int degree, T* out) {
    out[0] = T(kC0);
    if (degree < 1) return;
    out[1] = T(-kC1) * y;
    out[2] = T(kC1) * z;
    out[3] = T(-kC1) * x;
    if (degree < 2) return;
    const T xx = x * x, yy = y * y, zz = z * z;
    const T xy = x * y, yz = y * z, xz = x * z;
    out[4] = T(kC2[0]) * xy;
    out[5] = T(kC2[1]) * yz;
    out[6] = T(kC2[2]) * (T(2.0) * zz - xx - yy);
    out[7] = T(kC2[3]) * xz;
    out[8] = T(kC2[4]) * (xx - yy);
    if (degree < 3) return;
    out[9] = T(kC3[0]) * y * (T(3.0) * xx - yy);
    out[10] = T(kC3[1]) * xy * z;
    out[11] = T(kC3[2]) * y * (T(4.0) * zz - xx - yy);
    out[12] = T(kC3[3]) * z * (T(2.0) * zz - T(3.0) * xx - T(3.0) * yy);
    out[13] = T(kC3[4]) * x * (T(4.0) * zz - xx - yy);
    out[14] = T(kC3[5]) * z * (xx - yy);
    out[15] = T(kC3[6]) * x * (xx - T(3.0) * yy);
}
} // namespace sh

struct ShBasisValues {
    int degree = 0;
    std::array<double, kMaxShCoeffs> values{};

    std::span<const double> view() const {
        return {values.data(), static_cast<std::size_t>(sh_coeff_count(degree))};
    }
};

// dir must be unit length; degree in [0, 3].
ShBasisValues eval_sh_basis(const Eigen::Vector3d& dir, int degree);

// RGB = sum basis_i * coeff_i + 0.5, floored at zero. Degree is inferred
// from the coefficient count.
Eigen::Vector3d eval_color(std::span<const Eigen::Vector3d> sh_coeffs, const Eigen::Vector3d& dir);

// Degree for a coefficient count, or -1 if the count is not (L+1)^2 with L <= 3.
int sh_degree_for_count(std::size_t count);

} // namespace hgs
