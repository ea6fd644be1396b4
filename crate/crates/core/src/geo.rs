//! Spherical pseudo-Mercator projection and haversine distances.

use std::f64::consts::PI;

use thiserror::Error;

/// Sphere radius used by the pseudo-Mercator projection (m).
pub const MERCATOR_RADIUS: f64 = 6_378_137.0;

/// Mean Earth radius used for great-circle distances (m).
pub const MEAN_EARTH_RADIUS: f64 = 6_371_000.0;

/// Projection is refused at or beyond this latitude (degrees).
pub const MAX_PROJECTED_LAT: f64 = 85.06;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum GeoError {
    #[error("coordinate ({lat}, {lon}) is outside the valid latitude/longitude range")]
    InvalidCoord { lat: f64, lon: f64 },
    #[error("latitude {0} is beyond the projection limit of ±{MAX_PROJECTED_LAT}°")]
    OutsideProjection(f64),
}

/// WGS84 geographic coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoCoord {
    lat: f64,
    lon: f64,
}

impl GeoCoord {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Ok(Self { lat, lon })
        } else {
            Err(GeoError::InvalidCoord { lat, lon })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Projected pseudo-Mercator coordinate in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjCoord {
    pub x: f64,
    pub y: f64,
}

impl ProjCoord {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

pub fn project_forward(g: GeoCoord) -> Result<ProjCoord, GeoError> {
    if g.lat.abs() >= MAX_PROJECTED_LAT {
        return Err(GeoError::OutsideProjection(g.lat));
    }
    let x = MERCATOR_RADIUS * g.lon.to_radians();
    // equals R * ln(tan(pi/4 + lat/2)), without its rounding at the equator
    let y = MERCATOR_RADIUS * g.lat.to_radians().sin().atanh();
    Ok(ProjCoord { x, y })
}

/// Analytic inverse of [`project_forward`]. Longitudes outside ±180° are
/// not wrapped.
pub fn project_inverse(p: ProjCoord) -> GeoCoord {
    let lon = (p.x / MERCATOR_RADIUS).to_degrees();
    let lat = (p.y / MERCATOR_RADIUS).sinh().atan().to_degrees();
    GeoCoord { lat, lon }
}

/// Haversine great-circle distance on the mean-radius sphere (m).
pub fn geodesic_distance(a: GeoCoord, b: GeoCoord) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * MEAN_EARTH_RADIUS * h.sqrt().min(1.0).asin()
}

/// Half the circumference of the projection sphere; bound on `|x|`.
pub const MERCATOR_HALF_WIDTH: f64 = PI * MERCATOR_RADIUS;
