/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

// 2-D tabletop renderer shared by the video generator and the control
// environments. World coordinates live in the unit square, y pointing down.

#include "vlrep/tensor.hpp"

#include <array>
#include <filesystem>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vlrep {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2 a, Vec2 b) = default;
    double norm() const;
};

/// 8-bit RGB image, row-major (H, W, 3).
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0) {}
    /// (H, W, 3) tensor with values in [0, 1].
    Tensor to_tensor() const;
    friend bool operator==(const Image& a, const Image& b) = default;
};

enum class ShapeKind : std::uint8_t { square, circle, triangle };
enum class ColorName : std::uint8_t { red, green, blue, yellow };
enum class Region : std::uint8_t { top, bottom, left, right };

inline constexpr std::array<ShapeKind, 3> kShapes{ShapeKind::square, ShapeKind::circle, ShapeKind::triangle};
inline constexpr std::array<ColorName, 4> kColors{ColorName::red, ColorName::green, ColorName::blue, ColorName::yellow};
inline constexpr std::array<Region, 4> kRegions{Region::top, Region::bottom, Region::left, Region::right};

std::string_view to_string(ShapeKind s);
std::string_view to_string(ColorName c);
std::string_view to_string(Region r);
ShapeKind parse_shape(std::string_view s);
ColorName parse_color(std::string_view s);
Region parse_region(std::string_view s);

/// Axis-aligned square zone of a named region.
struct RegionBox {
    Vec2 center;
    double half_size;
    bool contains(Vec2 p) const;
};
RegionBox region_box(Region r);

inline constexpr double kObjectRadius = 0.06;
inline constexpr double kAgentRadius = 0.035;

/// A camera framing: the world window [origin, origin + span]^2 (after an
/// optional horizontal mirror) is mapped onto the image.
struct View {
    std::string name;
    double origin_x = 0.0;
    double origin_y = 0.0;
    double span = 1.0;
    bool mirror = false;
};

/// The three fixed framings used by the environments; index 0 is the full frontal view.
const std::array<View, 3>& standard_views();
const View& view_by_name(std::string_view name);

struct SceneState {
    Vec2 agent;
    bool gripper_closed = false;
    Vec2 object;
    ShapeKind shape = ShapeKind::square;
    ColorName color = ColorName::red;
    std::optional<Vec2> goal_marker;
};

Image render_scene(const SceneState& scene, const View& view, std::size_t size);

/// Binary PPM (P6).
void save_ppm(const Image& image, const std::filesystem::path& path);

} // namespace vlrep
