// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/scene.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace featsplat {

namespace {

bool
all_finite(const Eigen::Ref<const Eigen::VectorXd> &v) {
    return v.allFinite();
}

} // namespace

Vec3
Gaussian::scale() const {
    Vec3 s;
    for (int i = 0; i < 3; ++i)
        s[i] = std::max(std::exp(double(log_scale[i])), kScaleFloor);
    return s;
}

double
Gaussian::opacity() const {
    return 1.0 / (1.0 + std::exp(-double(opacity_logit)));
}

Mat3
Gaussian::covariance() const {
    return assemble_covariance(quaternion(), scale());
}

float &
Gaussian::sh_coeff(int channel, int basis) {
    return basis == 0 ? sh[channel] : sh[3 + channel * (kShCoeffsPerChannel - 1) + (basis - 1)];
}

float
Gaussian::sh_coeff(int channel, int basis) const {
    return basis == 0 ? sh[channel] : sh[3 + channel * (kShCoeffsPerChannel - 1) + (basis - 1)];
}

std::size_t
GaussianScene::selected_count() const {
    return std::size_t(std::count(selection_mask.begin(), selection_mask.end(), true));
}

std::pair<Vec3, Vec3>
GaussianScene::bounds(double margin) const {
    require(!gaussians.empty(), ErrorKind::InvalidParameter, "bounds of an empty scene");
    Vec3 lo = gaussians.front().position();
    Vec3 hi = lo;
    for (const auto &g : gaussians) {
        lo = lo.cwiseMin(g.position());
        hi = hi.cwiseMax(g.position());
    }
    Vec3 pad = (hi - lo) * margin;
    // Flat scenes still need a non-empty box along every axis.
    for (int i = 0; i < 3; ++i)
        pad[i] = std::max(pad[i], 1e-3);
    return {lo - pad, hi + pad};
}

void
GaussianScene::validate() const {
    require(selection_mask.size() == gaussians.size(), ErrorKind::InvalidParameter,
            "selection mask length " + std::to_string(selection_mask.size()) + " != gaussian count " +
                std::to_string(gaussians.size()));
}

void
Camera::validate() const {
    require(fx > 0 && fy > 0, ErrorKind::InvalidParameter, "focal lengths must be positive");
    require(width >= 1 && height >= 1, ErrorKind::InvalidParameter, "image size must be at least 1x1");
    require(rotation.allFinite() && translation.allFinite(), ErrorKind::InvalidParameter, "non-finite pose");
    const double err = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    require(err <= 1e-6, ErrorKind::InvalidParameter, "world_to_camera rotation is not orthonormal");
}

Camera
Camera::rescaled(int new_width, int new_height) const {
    Camera c = *this;
    const double sx = double(new_width) / width;
    const double sy = double(new_height) / height;
    c.fx *= sx;
    c.cx *= sx;
    c.fy *= sy;
    c.cy *= sy;
    c.width = new_width;
    c.height = new_height;
    return c;
}

Camera
Camera::look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double focal, int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    // Image y grows downward, so the camera y axis points along -up.
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Camera c;
    c.fx = c.fy = focal;
    c.cx = 0.5 * width;
    c.cy = 0.5 * height;
    c.width = width;
    c.height = height;
    c.rotation.row(0) = right.transpose();
    c.rotation.row(1) = down.transpose();
    c.rotation.row(2) = forward.transpose();
    c.translation = -c.rotation * eye;
    return c;
}

Mat3
quaternion_to_rotation(const Vec4 &wxyz) {
    require(all_finite(wxyz), ErrorKind::InvalidParameter, "non-finite quaternion");
    const double n = wxyz.norm();
    require(n > 0.0, ErrorKind::InvalidParameter, "zero quaternion");
    const Eigen::Quaterniond q(wxyz[0] / n, wxyz[1] / n, wxyz[2] / n, wxyz[3] / n);
    return q.toRotationMatrix();
}

Mat3
assemble_covariance(const Vec4 &rotation, const Vec3 &scale) {
    require(all_finite(scale), ErrorKind::InvalidParameter, "non-finite scale");
    const Mat3 r = quaternion_to_rotation(rotation);
    const Mat3 m = r * scale.asDiagonal();
    Mat3 cov = m * m.transpose();
    // Exact symmetry regardless of rounding in the product.
    cov = 0.5 * (cov + cov.transpose()).eval();
    return cov;
}

double
gaussian_density(const Gaussian &g, const Vec3 &x) {
    const Vec3 s = g.scale();
    require(s.allFinite() && (s.array() > 0.0).all(), ErrorKind::DegenerateGaussian, "singular covariance");
    require(x.allFinite(), ErrorKind::InvalidParameter, "non-finite query point");
    const Mat3 r = quaternion_to_rotation(g.quaternion());
    // Sigma^-1 = R S^-2 R^T, so the Mahalanobis term is |S^-1 R^T (x - mu)|^2.
    const Vec3 local = (r.transpose() * (x - g.position())).cwiseQuotient(s);
    return std::exp(-0.5 * local.squaredNorm());
}

Vec3
eval_sh_color(const Gaussian &g, const Vec3 &view_dir) {
    constexpr double C0 = 0.28209479177387814;
    constexpr double C1 = 0.4886025119029199;
    constexpr double C2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                             0.5462742152960396};
    constexpr double C3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                             -0.4570457994644658, 1.445305721320277, -0.5900435899266435};

    const double x = view_dir[0], y = view_dir[1], z = view_dir[2];
    const double xx = x * x, yy = y * y, zz = z * z;
    const double xy = x * y, yz = y * z, xz = x * z;
    const double basis[kShCoeffsPerChannel] = {
        C0,
        -C1 * y,
        C1 * z,
        -C1 * x,
        C2[0] * xy,
        C2[1] * yz,
        C2[2] * (2.0 * zz - xx - yy),
        C2[3] * xz,
        C2[4] * (xx - yy),
        C3[0] * y * (3.0 * xx - yy),
        C3[1] * xy * z,
        C3[2] * y * (4.0 * zz - xx - yy),
        C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        C3[4] * x * (4.0 * zz - xx - yy),
        C3[5] * z * (xx - yy),
        C3[6] * x * (xx - 3.0 * yy),
    };

    Vec3 rgb;
    for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        for (int k = 0; k < kShCoeffsPerChannel; ++k)
            v += basis[k] * g.sh_coeff(c, k);
        rgb[c] = std::max(v + 0.5, 0.0);
    }
    return rgb;
}

} // namespace featsplat
