#pragma once

// Attention visualization: topology heatmaps, skeleton overlays with
// joint-importance circles, CSV matrix dumps. Images are binary PPM, written
// atomically (temp file + rename).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hocslm/skeleton.hpp"

namespace hocslm {

inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot write '" + tmp.string() + "'");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    fs::rename(tmp, path);
}

struct Image {
    int width = 0, height = 0;
    std::vector<unsigned char> rgb;

    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 255) {}

    void set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }

    std::string to_ppm() const {
        std::ostringstream os;
        os << "P6\n" << width << " " << height << "\n255\n";
        os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
        return os.str();
    }

    void save(const std::filesystem::path& path) const { atomic_write_file(path, to_ppm()); }
};

// compact viridis-style perceptually uniform ramp
inline void colormap(double t, unsigned char& r, unsigned char& g, unsigned char& b) {
    static const double anchors[9][3] = {
        {0.267, 0.005, 0.329}, {0.283, 0.141, 0.458}, {0.254, 0.265, 0.530},
        {0.207, 0.372, 0.553}, {0.164, 0.471, 0.558}, {0.128, 0.567, 0.551},
        {0.135, 0.659, 0.518}, {0.267, 0.749, 0.441}, {0.993, 0.906, 0.144}};
    t = std::min(1.0, std::max(0.0, t));
    const double pos = t * 8.0;
    const int lo = std::min(7, static_cast<int>(pos));
    const double w = pos - lo;
    r = static_cast<unsigned char>(255.0 * ((1 - w) * anchors[lo][0] + w * anchors[lo + 1][0]));
    g = static_cast<unsigned char>(255.0 * ((1 - w) * anchors[lo][1] + w * anchors[lo + 1][1]));
    b = static_cast<unsigned char>(255.0 * ((1 - w) * anchors[lo][2] + w * anchors[lo + 1][2]));
}

// N x N matrix as a cell grid, normalized to [min,max]
inline Image render_heatmap(const Tensor& matrix, int cell_px = 12) {
    const int n = matrix.dim(0);
    double lo = matrix[0], hi = matrix[0];
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        lo = std::min(lo, matrix[i]);
        hi = std::max(hi, matrix[i]);
    }
    const double span = (hi > lo) ? hi - lo : 1.0;
    Image img(n * cell_px, n * cell_px);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            unsigned char r, g, bl;
            colormap((matrix.at(a, b) - lo) / span, r, g, bl);
            for (int y = 0; y < cell_px; ++y)
                for (int x = 0; x < cell_px; ++x) img.set(b * cell_px + x, a * cell_px + y, r, g, bl);
        }
    return img;
}

namespace detail_viz {

inline void draw_line(Image& img, int x0, int y0, int x1, int y1, unsigned char r, unsigned char g,
                      unsigned char b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        img.set(x0, y0, r, g, b);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

inline void draw_disc(Image& img, int cx, int cy, int radius, unsigned char r, unsigned char g,
                      unsigned char b) {
    for (int y = -radius; y <= radius; ++y)
        for (int x = -radius; x <= radius; ++x)
            if (x * x + y * y <= radius * radius) img.set(cx + x, cy + y, r, g, b);
}

}  // namespace detail_viz

// One frame's pose (orthographic x/y) with circle radius per joint in [0,1].
inline Image render_skeleton_frame(const Tensor& coords, int frame, int body, const EdgeList& edges,
                                   const std::vector<double>& radii, int size_px = 320) {
    const int n = coords.dim(2);
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (int j = 0; j < n; ++j) {
        min_x = std::min(min_x, coords.at(0, frame, j, body));
        max_x = std::max(max_x, coords.at(0, frame, j, body));
        min_y = std::min(min_y, coords.at(1, frame, j, body));
        max_y = std::max(max_y, coords.at(1, frame, j, body));
    }
    const double span = std::max(std::max(max_x - min_x, max_y - min_y), 1e-6);
    const double margin = 0.12 * size_px;
    auto px = [&](int j) {
        return static_cast<int>(margin + (coords.at(0, frame, j, body) - min_x) / span * (size_px - 2 * margin));
    };
    auto py = [&](int j) {  // image y grows downward
        return static_cast<int>(size_px - margin -
                                (coords.at(1, frame, j, body) - min_y) / span * (size_px - 2 * margin));
    };
    Image img(size_px, size_px);
    for (auto [a, b] : edges) detail_viz::draw_line(img, px(a), py(a), px(b), py(b), 90, 90, 90);
    const int max_r = size_px / 24;
    for (int j = 0; j < n; ++j) {
        const double t = radii.empty() ? 0.5 : radii[static_cast<std::size_t>(j)];
        unsigned char r, g, b;
        colormap(t, r, g, b);
        detail_viz::draw_disc(img, px(j), py(j), std::max(2, static_cast<int>(t * max_r)), r, g, b);
    }
    return img;
}

// ----------------------------------------------------------------- csv i/o

inline std::string matrix_to_csv(const Tensor& m) {
    std::ostringstream os;
    char buf[40];
    for (int a = 0; a < m.dim(0); ++a) {
        for (int b = 0; b < m.dim(1); ++b) {
            std::snprintf(buf, sizeof(buf), "%.12g", m.at(a, b));
            os << (b ? "," : "") << buf;
        }
        os << "\n";
    }
    return os.str();
}

inline Tensor matrix_from_csv(std::istream& is) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw TruncatedFile("empty matrix csv");
    Tensor out(Shape{static_cast<int>(rows.size()), static_cast<int>(rows[0].size())});
    for (std::size_t a = 0; a < rows.size(); ++a) {
        if (rows[a].size() != rows[0].size()) throw TruncatedFile("ragged matrix csv");
        for (std::size_t b = 0; b < rows[a].size(); ++b) out.at(static_cast<int>(a), static_cast<int>(b)) = rows[a][b];
    }
    return out;
}

}  // namespace hocslm
