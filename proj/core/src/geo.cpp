#include "mrpllm/geo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mrpllm {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDegPerKmLat = 1.0 / 111.19492664455873; // 180 / (pi * R)

double deg2rad(double d) { return d * kPi / 180.0; }
double rad2deg(double r) { return r * 180.0 / kPi; }
} // namespace

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
    const double phi1 = deg2rad(a.lat);
    const double phi2 = deg2rad(b.lat);
    const double dphi = deg2rad(b.lat - a.lat);
    const double dlam = deg2rad(b.lon - a.lon);
    const double s = std::sin(dphi / 2.0);
    const double t = std::sin(dlam / 2.0);
    const double h = s * s + std::cos(phi1) * std::cos(phi2) * t * t;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

GeoPoint destination_point(const GeoPoint& origin, double distance_km, double bearing_rad) {
    const double delta = distance_km / kEarthRadiusKm;
    const double phi1 = deg2rad(origin.lat);
    const double lam1 = deg2rad(origin.lon);
    const double sin_phi2 = std::sin(phi1) * std::cos(delta) +
                            std::cos(phi1) * std::sin(delta) * std::cos(bearing_rad);
    const double phi2 = std::asin(std::clamp(sin_phi2, -1.0, 1.0));
    const double y = std::sin(bearing_rad) * std::sin(delta) * std::cos(phi1);
    const double x = std::cos(delta) - std::sin(phi1) * sin_phi2;
    const double lam2 = lam1 + std::atan2(y, x);
    GeoPoint out;
    out.lat = rad2deg(phi2);
    out.lon = rad2deg(lam2);
    if (out.lon > 180.0) out.lon -= 360.0;
    if (out.lon < -180.0) out.lon += 360.0;
    return out;
}

RegionGrid::RegionGrid(GeoPoint min_corner, GeoPoint max_corner, double cell_km)
    : min_(min_corner), max_(max_corner), cell_km_(cell_km) {
    if (cell_km <= 0.0) throw std::invalid_argument("RegionGrid: cell_km must be positive");
    lat_step_ = cell_km * kDegPerKmLat;
    const double mid_lat = deg2rad((min_.lat + max_.lat) / 2.0);
    const double cos_lat = std::max(std::abs(std::cos(mid_lat)), 1e-2);
    lon_step_ = cell_km * kDegPerKmLat / cos_lat;
    rows_ = static_cast<std::size_t>(
        std::max<double>(1.0, std::ceil((max_.lat - min_.lat) / lat_step_ - 1e-12)));
    cols_ = static_cast<std::size_t>(
        std::max<double>(1.0, std::ceil((max_.lon - min_.lon) / lon_step_ - 1e-12)));
}

RegionGrid RegionGrid::covering(const std::vector<GeoPoint>& points, double cell_km) {
    if (points.empty()) return RegionGrid({0, 0}, {0, 0}, cell_km);
    GeoPoint lo = points.front(), hi = points.front();
    for (const auto& p : points) {
        lo.lat = std::min(lo.lat, p.lat);
        lo.lon = std::min(lo.lon, p.lon);
        hi.lat = std::max(hi.lat, p.lat);
        hi.lon = std::max(hi.lon, p.lon);
    }
    return RegionGrid(lo, hi, cell_km);
}

std::size_t RegionGrid::cell_of(const GeoPoint& p) const {
    auto clampi = [](double v, std::size_t n) {
        if (v < 0.0) return std::size_t{0};
        auto i = static_cast<std::size_t>(v);
        return std::min(i, n - 1);
    };
    const std::size_t row = clampi(std::floor((p.lat - min_.lat) / lat_step_), rows_);
    const std::size_t col = clampi(std::floor((p.lon - min_.lon) / lon_step_), cols_);
    return row * cols_ + col;
}

std::size_t assign_region(const PoiEntry& poi, const RegionGrid& grid) {
    return grid.cell_of(poi.pos);
}

SpatialIndex::SpatialIndex(std::vector<PoiEntry> catalog, double bucket_km)
    : catalog_(std::move(catalog)) {
    std::vector<GeoPoint> pts;
    pts.reserve(catalog_.size());
    for (const auto& p : catalog_) pts.push_back(p.pos);
    buckets_ = RegionGrid::covering(pts, bucket_km);
    cells_.assign(buckets_.cell_count(), {});
    for (std::size_t i = 0; i < catalog_.size(); ++i)
        cells_[buckets_.cell_of(catalog_[i].pos)].push_back(i);
}

void SpatialIndex::collect_in_box(const GeoPoint& center, double radius_km,
                                  std::vector<std::size_t>& out) const {
    // Conservative lat/lon box around the circle, then walk overlapping cells.
    const double dlat = radius_km * kDegPerKmLat;
    const double cos_lat = std::max(std::abs(std::cos(center.lat * kPi / 180.0)), 1e-2);
    const double dlon = radius_km * kDegPerKmLat / cos_lat;
    GeoPoint lo{center.lat - dlat, center.lon - dlon};
    GeoPoint hi{center.lat + dlat, center.lon + dlon};
    const std::size_t c0 = buckets_.cell_of(lo);
    const std::size_t c1 = buckets_.cell_of(hi);
    const std::size_t row0 = c0 / buckets_.cols(), col0 = c0 % buckets_.cols();
    const std::size_t row1 = c1 / buckets_.cols(), col1 = c1 % buckets_.cols();
    for (std::size_t r = row0; r <= row1; ++r)
        for (std::size_t c = col0; c <= col1; ++c)
            for (std::size_t idx : cells_[r * buckets_.cols() + c]) out.push_back(idx);
}

double SpatialIndex::min_radius_containing(const GeoPoint& center, std::size_t h,
                                           double radius_floor_km,
                                           double radius_ceil_km) const {
    if (h < 1) throw std::invalid_argument("min_radius_containing: h must be >= 1");
    if (h > catalog_.size())
        throw std::invalid_argument("min_radius_containing: h exceeds catalog size");

    // Expand a candidate box until it certainly contains the h nearest POIs,
    // then take the h-th smallest distance among candidates.
    std::vector<std::size_t> cand;
    double probe = std::max(buckets_.cell_km(), 0.5);
    const double max_extent =
        haversine_km(buckets_.min_corner(), buckets_.max_corner()) + probe;
    while (true) {
        cand.clear();
        collect_in_box(center, probe, cand);
        std::size_t inside = 0;
        for (std::size_t idx : cand)
            if (haversine_km(center, catalog_[idx].pos) <= probe) ++inside;
        if (inside >= h || probe > max_extent) break;
        probe *= 2.0;
    }
    if (cand.size() < h) {
        cand.resize(catalog_.size());
        for (std::size_t i = 0; i < catalog_.size(); ++i) cand[i] = i;
    }
    std::vector<double> dists;
    dists.reserve(cand.size());
    for (std::size_t idx : cand) dists.push_back(haversine_km(center, catalog_[idx].pos));
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(h - 1),
                     dists.end());
    const double raw = dists[h - 1];
    return std::clamp(raw, radius_floor_km, radius_ceil_km);
}

std::vector<std::size_t> SpatialIndex::pois_in_circle(
    const GeoPoint& center, double radius_km, std::optional<std::size_t> category) const {
    std::vector<std::size_t> cand;
    collect_in_box(center, radius_km, cand);
    std::vector<std::size_t> out;
    for (std::size_t idx : cand) {
        if (category && catalog_[idx].category_id != *category) continue;
        if (haversine_km(center, catalog_[idx].pos) <= radius_km) out.push_back(idx);
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace mrpllm
