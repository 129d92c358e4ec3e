// camera.hpp - planar homography between board coordinates (cm) and pixels.
#pragma once

#include <array>
#include <cmath>

#include "fishboard/common.hpp"
#include "fishboard/mask.hpp"

namespace fishboard {

// Row-major 3x3 homography mapping board-plane (cm) to pixel coordinates.
struct CameraModel {
    std::array<double, 9> homography{1, 0, 0, 0, 1, 0, 0, 0, 1};
    int image_width = 0;
    int image_height = 0;
};

inline double homography_det(const std::array<double, 9>& h) {
    return h[0] * (h[4] * h[8] - h[5] * h[7]) -
           h[1] * (h[3] * h[8] - h[5] * h[6]) +
           h[2] * (h[3] * h[7] - h[4] * h[6]);
}

inline PointD project_board(const CameraModel& camera, PointD board_cm) {
    const auto& h = camera.homography;
    const double w = h[6] * board_cm.x + h[7] * board_cm.y + h[8];
    if (std::abs(w) < 1e-12)
        throw ProjectionError("point projects to infinity");
    return {(h[0] * board_cm.x + h[1] * board_cm.y + h[2]) / w,
            (h[3] * board_cm.x + h[4] * board_cm.y + h[5]) / w};
}

namespace detail {
// Gaussian elimination with partial pivoting; small fixed systems only.
template <int N>
std::array<double, N> solve_linear(std::array<std::array<double, N + 1>, N> a) {
    for (int col = 0; col < N; ++col) {
        int pivot = col;
        for (int r = col + 1; r < N; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-12)
            throw ProjectionError("singular system in homography fit");
        std::swap(a[col], a[pivot]);
        for (int r = 0; r < N; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (int c = col; c <= N; ++c) a[r][c] -= f * a[col][c];
        }
    }
    std::array<double, N> x{};
    for (int r = 0; r < N; ++r) x[r] = a[r][N] / a[r][r];
    return x;
}
}  // namespace detail

// Homography taking the four src points to the four dst points (DLT with the
// h22 = 1 normalization).
inline std::array<double, 9> homography_from_points(const std::array<PointD, 4>& src,
                                                    const std::array<PointD, 4>& dst) {
    std::array<std::array<double, 9>, 8> m{};
    for (int i = 0; i < 4; ++i) {
        const double x = src[i].x, y = src[i].y;
        const double u = dst[i].x, v = dst[i].y;
        m[2 * i] = {x, y, 1, 0, 0, 0, -u * x, -u * y, u};
        m[2 * i + 1] = {0, 0, 0, x, y, 1, -v * x, -v * y, v};
    }
    const std::array<double, 8> h = detail::solve_linear<8>(m);
    return {h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0};
}

inline std::array<double, 9> homography_invert(const std::array<double, 9>& h) {
    const double det = homography_det(h);
    if (std::abs(det) < 1e-15) throw ProjectionError("homography not invertible");
    const std::array<double, 9> adj = {
        h[4] * h[8] - h[5] * h[7], h[2] * h[7] - h[1] * h[8], h[1] * h[5] - h[2] * h[4],
        h[5] * h[6] - h[3] * h[8], h[0] * h[8] - h[2] * h[6], h[2] * h[3] - h[0] * h[5],
        h[3] * h[7] - h[4] * h[6], h[1] * h[6] - h[0] * h[7], h[0] * h[4] - h[1] * h[3]};
    std::array<double, 9> inv;
    for (int i = 0; i < 9; ++i) inv[i] = adj[i] / det;
    return inv;
}

}  // namespace fishboard
