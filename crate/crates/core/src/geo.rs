//! Geodetic coordinates and the local flat-earth ENU frame used by the
//! simulation and the twin.
//!
//! The conversion uses a spherical earth of radius 6 371 000 m and a local
//! tangent-plane approximation around a reference origin: metres east scale
//! with cos(latitude of the origin), metres north with the full radius. This
//! is accurate to millimetres over the few hundred metres a field scenario
//! covers, and — more importantly — both directions use the *same* formula so
//! round trips are exact to floating-point precision.

use thiserror::Error;

/// Mean earth radius in metres for the local tangent-plane conversion.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Conversions are only trusted near the origin; beyond this span the
/// flat-earth assumption is refused rather than silently degraded.
pub const MAX_ENU_SPAN_M: f64 = 50_000.0;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("latitude {0} out of range [-90, 90]")]
    LatitudeRange(f64),
    #[error("longitude {0} out of range [-180, 180]")]
    LongitudeRange(f64),
    #[error("coordinate component is not finite")]
    NotFinite,
    #[error("point is {0:.0} m from the origin, beyond the {1:.0} m flat-earth span")]
    SpanExceeded(f64, f64),
    #[error("origin latitude {0} too close to a pole for an ENU frame")]
    PolarOrigin(f64),
}

/// WGS-style geodetic position: degrees latitude/longitude, metres altitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoCoordinate {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f64,
}

impl GeoCoordinate {
    pub fn new(latitude_deg: f64, longitude_deg: f64, altitude_m: f64) -> Result<Self, GeoError> {
        if !latitude_deg.is_finite() || !longitude_deg.is_finite() || !altitude_m.is_finite() {
            return Err(GeoError::NotFinite);
        }
        if !(-90.0..=90.0).contains(&latitude_deg) {
            return Err(GeoError::LatitudeRange(latitude_deg));
        }
        if !(-180.0..=180.0).contains(&longitude_deg) {
            return Err(GeoError::LongitudeRange(longitude_deg));
        }
        Ok(GeoCoordinate {
            latitude_deg,
            longitude_deg,
            altitude_m,
        })
    }
}

/// East/north/up offset in metres from an ENU origin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnuPosition {
    pub east_m: f64,
    pub north_m: f64,
    pub up_m: f64,
}

/// Offset of `point` from `origin` in the origin's local ENU frame.
pub fn geo_to_enu(origin: &GeoCoordinate, point: &GeoCoordinate) -> Result<EnuPosition, GeoError> {
    let cos_lat0 = origin.latitude_deg.to_radians().cos();
    if cos_lat0 < 1e-6 {
        return Err(GeoError::PolarOrigin(origin.latitude_deg));
    }
    let east_m = EARTH_RADIUS_M
        * cos_lat0
        * (point.longitude_deg - origin.longitude_deg).to_radians();
    let north_m = EARTH_RADIUS_M * (point.latitude_deg - origin.latitude_deg).to_radians();
    let dist = east_m.hypot(north_m);
    if dist > MAX_ENU_SPAN_M {
        return Err(GeoError::SpanExceeded(dist, MAX_ENU_SPAN_M));
    }
    Ok(EnuPosition {
        east_m,
        north_m,
        up_m: point.altitude_m - origin.altitude_m,
    })
}

/// Inverse of [`geo_to_enu`] around the same origin.
pub fn enu_to_geo(origin: &GeoCoordinate, enu: &EnuPosition) -> Result<GeoCoordinate, GeoError> {
    let cos_lat0 = origin.latitude_deg.to_radians().cos();
    if cos_lat0 < 1e-6 {
        return Err(GeoError::PolarOrigin(origin.latitude_deg));
    }
    let dist = enu.east_m.hypot(enu.north_m);
    if dist > MAX_ENU_SPAN_M {
        return Err(GeoError::SpanExceeded(dist, MAX_ENU_SPAN_M));
    }
    let lat = origin.latitude_deg + (enu.north_m / EARTH_RADIUS_M).to_degrees();
    let lon = origin.longitude_deg + (enu.east_m / (EARTH_RADIUS_M * cos_lat0)).to_degrees();
    GeoCoordinate::new(lat, lon, origin.altitude_m + enu.up_m)
}
