#pragma once

#include <cmath>
#include <cstddef>

namespace orvicon::geo {

struct LatLon {
    double lat = 0.0;
    double lon = 0.0;

    bool operator==(const LatLon&) const = default;
};

/// Local metric coordinates: x east, y north, meters.
struct LocalPoint {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(LocalPoint a, LocalPoint b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

/// Equirectangular projection around a fixed origin. For fields under a
/// kilometre across the distance error stays below 0.1 % at mid latitudes.
class LocalProjection {
public:
    static constexpr double kEarthRadiusM = 6371008.8;

    explicit LocalProjection(LatLon origin) noexcept;

    LocalPoint to_local(LatLon p) const noexcept;
    LatLon to_geo(LocalPoint p) const noexcept;
    LatLon origin() const noexcept { return origin_; }

private:
    LatLon origin_;
    double meters_per_deg_lat_;
    double meters_per_deg_lon_;
};

struct Cell {
    std::size_t row = 0;
    std::size_t col = 0;

    bool operator==(const Cell&) const = default;
    auto operator<=>(const Cell&) const = default;
};

/// Regular field grid. The origin is the centre of cell (0,0); rows grow
/// northwards and columns eastwards.
struct GridSpec {
    std::size_t rows = 1;
    std::size_t cols = 1;
    double cell_size_m = 1.0;
    LatLon origin;

    std::size_t cell_count() const noexcept { return rows * cols; }
    bool contains(Cell c) const noexcept { return c.row < rows && c.col < cols; }
    std::size_t index(Cell c) const noexcept { return c.row * cols + c.col; }

    LocalPoint cell_center_local(Cell c) const noexcept {
        return {static_cast<double>(c.col) * cell_size_m, static_cast<double>(c.row) * cell_size_m};
    }
    LatLon cell_center(Cell c) const noexcept { return LocalProjection(origin).to_geo(cell_center_local(c)); }
    LocalProjection projection() const noexcept { return LocalProjection(origin); }

    /// Throws Error(InvalidModel) when rows/cols are zero or the cell size is
    /// not positive.
    void validate() const;
};

}  // namespace orvicon::geo
