#include "hgs/sh_color.hpp"

#include "hgs/error.hpp"

#include <algorithm>
#include <string>

namespace hgs {

ShBasisValues eval_sh_basis(const Eigen::Vector3d& dir, int degree) {
    if (degree < 0 || degree > kMaxShDegree) {
        throw Error(ErrorKind::InvalidArgument, "sh degree out of range: " + std::to_string(degree));
    }
    ShBasisValues out;
    out.degree = degree;
    sh::eval_basis(dir.x(), dir.y(), dir.z(), degree, out.values.data());
    return out;
}

int sh_degree_for_count(std::size_t count) {
    for (int d = 0; d <= kMaxShDegree; ++d) {
        if (static_cast<std::size_t>(sh_coeff_count(d)) == count) return d;
    }
    return -1;
}

Eigen::Vector3d eval_color(std::span<const Eigen::Vector3d> sh_coeffs, const Eigen::Vector3d& dir) {
    const int degree = sh_degree_for_count(sh_coeffs.size());
    if (degree < 0) {
        throw Error(ErrorKind::InvalidArgument,
                    "sh coefficient count is not a square <= 16: " + std::to_string(sh_coeffs.size()));
    }
    const ShBasisValues basis = eval_sh_basis(dir, degree);
    Eigen::Vector3d rgb = Eigen::Vector3d::Constant(0.5);
    for (std::size_t i = 0; i < sh_coeffs.size(); ++i) rgb += basis.values[i] * sh_coeffs[i];
    return rgb.cwiseMax(0.0);
}

} // namespace hgs
