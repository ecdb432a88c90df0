#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace mrpllm {

constexpr double kEarthRadiusKm = 6371.0;

struct GeoPoint {
    double lat = 0.0; // degrees, [-90, 90]
    double lon = 0.0; // degrees, [-180, 180]
};

struct PoiEntry {
    std::string poi_id;
    std::size_t category_id = 0;
    GeoPoint pos;
    std::size_t region_id = 0;
};

// Great-circle distance in km, Earth radius 6371 km.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

// Point reached by traveling distance_km from origin at the given bearing
// (radians, clockwise from north), on the same sphere as haversine_km.
GeoPoint destination_point(const GeoPoint& origin, double distance_km, double bearing_rad);

// Fixed square grid over a bounding box. Cells are half-open [edge, edge+size)
// in both axes (floor convention); points outside the box are clamped to the
// boundary cells. Cell ids are row * cols + col, stable for a given box.
class RegionGrid {
  public:
    RegionGrid() = default;
    RegionGrid(GeoPoint min_corner, GeoPoint max_corner, double cell_km);

    static RegionGrid covering(const std::vector<GeoPoint>& points, double cell_km);

    std::size_t cell_of(const GeoPoint& p) const;
    std::size_t cell_count() const { return rows_ * cols_; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double cell_km() const { return cell_km_; }
    GeoPoint min_corner() const { return min_; }
    GeoPoint max_corner() const { return max_; }

  private:
    GeoPoint min_{}, max_{};
    double cell_km_ = 1.0;
    double lat_step_ = 1.0, lon_step_ = 1.0; // degrees
    std::size_t rows_ = 1, cols_ = 1;
};

std::size_t assign_region(const PoiEntry& poi, const RegionGrid& grid);

// Grid-bucketed POI index for h-th-nearest and radius queries. Immutable after
// construction; query results match a brute-force haversine scan exactly.
class SpatialIndex {
  public:
    explicit SpatialIndex(std::vector<PoiEntry> catalog, double bucket_km = 2.0);

    const std::vector<PoiEntry>& catalog() const { return catalog_; }
    std::size_t size() const { return catalog_.size(); }

    // Distance to the h-th nearest catalog POI, clamped into
    // [radius_floor_km, radius_ceil_km]. Throws std::invalid_argument when
    // h < 1 or h > catalog size.
    double min_radius_containing(const GeoPoint& center, std::size_t h,
                                 double radius_floor_km = 10.0,
                                 double radius_ceil_km = 30.0) const;

    // Indices into catalog() of every POI with haversine(center, poi) <= radius,
    // optionally restricted to one category.
    std::vector<std::size_t> pois_in_circle(const GeoPoint& center, double radius_km,
                                            std::optional<std::size_t> category = {}) const;

  private:
    std::vector<PoiEntry> catalog_;
    RegionGrid buckets_;
    std::vector<std::vector<std::size_t>> cells_;

    void collect_in_box(const GeoPoint& center, double radius_km,
                        std::vector<std::size_t>& out) const;
};

} // namespace mrpllm
