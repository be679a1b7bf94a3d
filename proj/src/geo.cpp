#include "orvicon/geo.hpp"

#include "orvicon/error.hpp"

#include <numbers>

namespace orvicon::geo {

LocalProjection::LocalProjection(LatLon origin) noexcept
    : origin_(origin),
      meters_per_deg_lat_(kEarthRadiusM * std::numbers::pi / 180.0),
      meters_per_deg_lon_(kEarthRadiusM * std::numbers::pi / 180.0 * std::cos(origin.lat * std::numbers::pi / 180.0)) {}

LocalPoint LocalProjection::to_local(LatLon p) const noexcept {
    return {(p.lon - origin_.lon) * meters_per_deg_lon_, (p.lat - origin_.lat) * meters_per_deg_lat_};
}

LatLon LocalProjection::to_geo(LocalPoint p) const noexcept {
    return {origin_.lat + p.y / meters_per_deg_lat_, origin_.lon + p.x / meters_per_deg_lon_};
}

void GridSpec::validate() const {
    if (rows < 1 || cols < 1) fail(ErrorCode::InvalidModel, "grid needs at least one row and one column");
    if (!(cell_size_m > 0.0) || !std::isfinite(cell_size_m)) fail(ErrorCode::InvalidModel, "cell_size_m must be positive");
    if (!(origin.lat >= -90.0 && origin.lat <= 90.0 && origin.lon >= -180.0 && origin.lon <= 180.0)) {
        fail(ErrorCode::InvalidModel, "grid origin outside valid coordinates");
    }
}

}  // namespace orvicon::geo
