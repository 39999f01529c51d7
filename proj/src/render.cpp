/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/render.hpp"

#include "vlrep/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace vlrep {
namespace {

struct Rgb {
    double r, g, b;
};

constexpr Rgb kBackground{0.82, 0.82, 0.80};
constexpr Rgb kAgentColor{0.12, 0.12, 0.12};
constexpr Rgb kGoalColor{0.95, 0.95, 0.95};

Rgb region_tint(Region r) {
    switch (r) {
    case Region::top: return {0.70, 0.74, 0.86};
    case Region::bottom: return {0.86, 0.74, 0.70};
    case Region::left: return {0.72, 0.84, 0.72};
    case Region::right: return {0.86, 0.84, 0.66};
    }
    return kBackground;
}

Rgb object_color(ColorName c) {
    switch (c) {
    case ColorName::red: return {0.85, 0.12, 0.12};
    case ColorName::green: return {0.10, 0.62, 0.18};
    case ColorName::blue: return {0.12, 0.22, 0.88};
    case ColorName::yellow: return {0.95, 0.80, 0.08};
    }
    return kBackground;
}

bool inside_shape(ShapeKind s, Vec2 p, Vec2 c, double r) {
    const double dx = p.x - c.x, dy = p.y - c.y;
    switch (s) {
    case ShapeKind::square: return std::fabs(dx) <= r * 0.85 && std::fabs(dy) <= r * 0.85;
    case ShapeKind::circle: return dx * dx + dy * dy <= r * r;
    case ShapeKind::triangle: {
        // Upward triangle with apex at (0, -r) and base at y = +r*0.8.
        if (dy < -r || dy > 0.8 * r) return false;
        const double half = (dy + r) / (1.8 * r) * r;
        return std::fabs(dx) <= half;
    }
    }
    return false;
}

constexpr int kSuper = 3;  // supersamples per axis

} // namespace

double Vec2::norm() const { return std::sqrt(x * x + y * y); }

Tensor Image::to_tensor() const {
    Tensor t({height, width, 3});
    for (std::size_t i = 0; i < rgb.size(); ++i) t[i] = static_cast<double>(rgb[i]) / 255.0;
    return t;
}

std::string_view to_string(ShapeKind s) {
    switch (s) {
    case ShapeKind::square: return "square";
    case ShapeKind::circle: return "circle";
    case ShapeKind::triangle: return "triangle";
    }
    return "?";
}
std::string_view to_string(ColorName c) {
    switch (c) {
    case ColorName::red: return "red";
    case ColorName::green: return "green";
    case ColorName::blue: return "blue";
    case ColorName::yellow: return "yellow";
    }
    return "?";
}
std::string_view to_string(Region r) {
    switch (r) {
    case Region::top: return "top";
    case Region::bottom: return "bottom";
    case Region::left: return "left";
    case Region::right: return "right";
    }
    return "?";
}

ShapeKind parse_shape(std::string_view s) {
    for (auto k : kShapes)
        if (to_string(k) == s) return k;
    throw ArgumentError("unknown shape '" + std::string(s) + "'");
}
ColorName parse_color(std::string_view s) {
    for (auto k : kColors)
        if (to_string(k) == s) return k;
    throw ArgumentError("unknown color '" + std::string(s) + "'");
}
Region parse_region(std::string_view s) {
    for (auto k : kRegions)
        if (to_string(k) == s) return k;
    throw ArgumentError("unknown region '" + std::string(s) + "'");
}

bool RegionBox::contains(Vec2 p) const {
    return std::fabs(p.x - center.x) <= half_size && std::fabs(p.y - center.y) <= half_size;
}

RegionBox region_box(Region r) {
    constexpr double half = 0.13;
    switch (r) {
    case Region::top: return {{0.5, 0.15}, half};
    case Region::bottom: return {{0.5, 0.85}, half};
    case Region::left: return {{0.15, 0.5}, half};
    case Region::right: return {{0.85, 0.5}, half};
    }
    return {{0.5, 0.5}, half};
}

const std::array<View, 3>& standard_views() {
    static const std::array<View, 3> views{View{"front", 0.0, 0.0, 1.0, false}, View{"zoom", 0.08, 0.08, 0.84, false},
                                           View{"mirror", -0.04, -0.04, 1.08, true}};
    return views;
}

const View& view_by_name(std::string_view name) {
    for (const auto& v : standard_views())
        if (v.name == name) return v;
    throw ArgumentError("unknown view '" + std::string(name) + "'");
}

Image render_scene(const SceneState& scene, const View& view, std::size_t size) {
    if (size == 0) throw ArgumentError("render size must be positive");
    Image img(size, size);
    const double step = view.span / static_cast<double>(size * kSuper);
    const Rgb obj = object_color(scene.color);
    for (std::size_t py = 0; py < size; ++py) {
        for (std::size_t px = 0; px < size; ++px) {
            double acc[3] = {0, 0, 0};
            for (int sy = 0; sy < kSuper; ++sy) {
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double u = view.origin_x + (static_cast<double>(px * kSuper + sx) + 0.5) * step;
                    const double wy = view.origin_y + (static_cast<double>(py * kSuper + sy) + 0.5) * step;
                    const Vec2 p{view.mirror ? 1.0 - u : u, wy};
                    Rgb c = kBackground;
                    if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0) c = {0.45, 0.45, 0.45};
                    for (auto r : kRegions)
                        if (region_box(r).contains(p)) c = region_tint(r);
                    if (scene.goal_marker) {
                        const double d = (p - *scene.goal_marker).norm();
                        if (d <= 0.05 && d >= 0.03) c = kGoalColor;
                    }
                    if (inside_shape(scene.shape, p, scene.object, kObjectRadius)) c = obj;
                    const double da = (p - scene.agent).norm();
                    if (da <= kAgentRadius && (scene.gripper_closed || da >= kAgentRadius * 0.45)) c = kAgentColor;
                    acc[0] += c.r;
                    acc[1] += c.g;
                    acc[2] += c.b;
                }
            }
            std::uint8_t* out = img.rgb.data() + (py * size + px) * 3;
            for (int ch = 0; ch < 3; ++ch) {
                const double v = acc[ch] / (kSuper * kSuper);
                out[ch] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
        }
    }
    return img;
}

void save_ppm(const Image& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
    if (!out) throw Error(ErrorClass::data, "cannot write " + path.string());
}

} // namespace vlrep
