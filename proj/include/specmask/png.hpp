#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "specmask/grid.hpp"

namespace specmask {

enum class Colormap { grayscale, diverging };

/// Minimal deterministic PNG encoder: 8-bit, filter 0 on every scanline,
/// fixed-level zlib stream. Identical input bytes give identical files.
void write_png_gray(const std::filesystem::path& path, const std::vector<uint8_t>& pixels,
                    int width, int height);
void write_png_rgb(const std::filesystem::path& path, const std::vector<uint8_t>& rgb,
                   int width, int height);

/// Renders a grid as a heatmap. Grayscale maps [min,max] linearly; diverging
/// is centered at 0 with a symmetric range (blue-white-red), taking the
/// shared normalization from symmetric_max when given so figure sets share a
/// colormap. scale is nearest-neighbor upsampling.
void render_png(const Grid& grid, Colormap cmap, const std::filesystem::path& path,
                std::optional<double> symmetric_max = std::nullopt, int scale = 1);

/// Side-by-side bar panels (one per series) on a shared canvas; used for the
/// spectra demos. Heights are normalized per panel.
void render_bar_panels(const std::vector<std::vector<double>>& series,
                       const std::filesystem::path& path, int panel_height = 120);

}  // namespace specmask
