//! Geodesic distance and link geometry between a sensor observation and a
//! gateway.
//!
//! All distances are great-circle ground distances on a sphere of radius
//! 6,371,000 m. Altitude is never folded into the link distance; it is only
//! carried along for the altitude plausibility filter.

use thiserror::Error;

use crate::{cast, Scalar};

/// Mean earth radius in meters used for all great-circle math.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} out of range [-90, 90]")]
    InvalidLatitude(f64),
    #[error("longitude {0} out of range [-180, 180]")]
    InvalidLongitude(f64),
    #[error("sensor and gateway positions coincide; link distance must be > 0")]
    ZeroDistance,
    #[error("height {0} must be > 0 m")]
    InvalidHeight(f64),
}

/// A WGS-84-style coordinate: latitude/longitude in degrees, optional
/// altitude in meters above sea level.
///
/// The constructor rejects out-of-range coordinates, so a `GeoPoint` is
/// always a valid position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint<T> {
    lat_deg: T,
    lon_deg: T,
    alt_m: Option<T>,
}

impl<T: Scalar> GeoPoint<T> {
    pub fn new(lat_deg: T, lon_deg: T) -> Result<Self, GeoError> {
        let ninety = cast::<T>(90.0);
        let one_eighty = cast::<T>(180.0);
        if !lat_deg.is_finite() || lat_deg < -ninety || lat_deg > ninety {
            return Err(GeoError::InvalidLatitude(
                lat_deg.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if !lon_deg.is_finite() || lon_deg < -one_eighty || lon_deg > one_eighty {
            return Err(GeoError::InvalidLongitude(
                lon_deg.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(Self {
            lat_deg,
            lon_deg,
            alt_m: None,
        })
    }

    pub fn with_altitude(mut self, alt_m: T) -> Self {
        self.alt_m = Some(alt_m);
        self
    }

    pub fn lat_deg(&self) -> T {
        self.lat_deg
    }

    pub fn lon_deg(&self) -> T {
        self.lon_deg
    }

    pub fn alt_m(&self) -> Option<T> {
        self.alt_m
    }
}

/// Geometry of one sensor–gateway link: ground distance and the antenna
/// heights above ground on both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry<T> {
    pub distance_m: T,
    pub gw_height_m: T,
    pub sensor_height_m: T,
}

impl<T: Scalar> LinkGeometry<T> {
    pub fn new(distance_m: T, gw_height_m: T, sensor_height_m: T) -> Result<Self, GeoError> {
        if !(distance_m > T::zero()) {
            return Err(GeoError::ZeroDistance);
        }
        if !(gw_height_m > T::zero()) {
            return Err(GeoError::InvalidHeight(
                gw_height_m.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if !(sensor_height_m > T::zero()) {
            return Err(GeoError::InvalidHeight(
                sensor_height_m.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(Self {
            distance_m,
            gw_height_m,
            sensor_height_m,
        })
    }
}

/// Great-circle distance in meters between two points (haversine formula).
///
/// Symmetric and non-negative; altitude is ignored.
pub fn haversine_distance<T: Scalar>(a: &GeoPoint<T>, b: &GeoPoint<T>) -> T {
    let lat1 = a.lat_deg.to_radians();
    let lat2 = b.lat_deg.to_radians();
    let dlat = (b.lat_deg - a.lat_deg).to_radians();
    let dlon = (b.lon_deg - a.lon_deg).to_radians();

    let two = cast::<T>(2.0);
    let sin_dlat = (dlat / two).sin();
    let sin_dlon = (dlon / two).sin();
    let h = sin_dlat * sin_dlat + lat1.cos() * lat2.cos() * sin_dlon * sin_dlon;
    // Clamp against rounding pushing sqrt argument past 1 for antipodes.
    let arc = two * h.sqrt().min(T::one()).asin();
    arc * cast::<T>(EARTH_RADIUS_M)
}

/// Builds the link geometry for a sensor position and a gateway position.
///
/// Distance is the haversine ground distance; heights come from the gateway
/// record and the campaign configuration. Fails with
/// [`GeoError::ZeroDistance`] when the positions coincide, since a zero
/// distance breaks every log-distance expression downstream.
pub fn link_geometry<T: Scalar>(
    sensor_pos: &GeoPoint<T>,
    gw_pos: &GeoPoint<T>,
    gw_height_m: T,
    sensor_height_m: T,
) -> Result<LinkGeometry<T>, GeoError> {
    let distance_m = haversine_distance(sensor_pos, gw_pos);
    LinkGeometry::new(distance_m, gw_height_m, sensor_height_m)
}

/// Destination point a given ground distance and initial bearing away from
/// `origin` (the inverse of the haversine distance).
///
/// Used by the synthetic generator; round-tripping through
/// [`haversine_distance`] recovers the requested distance.
pub fn destination_point<T: Scalar>(
    origin: &GeoPoint<T>,
    bearing_deg: T,
    distance_m: T,
) -> Result<GeoPoint<T>, GeoError> {
    let lat1 = origin.lat_deg.to_radians();
    let lon1 = origin.lon_deg.to_radians();
    let bearing = bearing_deg.to_radians();
    let angular = distance_m / cast::<T>(EARTH_RADIUS_M);

    let lat2 = (lat1.sin() * angular.cos() + lat1.cos() * angular.sin() * bearing.cos()).asin();
    let lon2 = lon1
        + (bearing.sin() * angular.sin() * lat1.cos())
            .atan2(angular.cos() - lat1.sin() * lat2.sin());

    let half_turn = cast::<T>(180.0);
    let full_turn = cast::<T>(360.0);
    let mut lon_deg = lon2.to_degrees();
    if lon_deg > half_turn {
        lon_deg = lon_deg - full_turn;
    } else if lon_deg < -half_turn {
        lon_deg = lon_deg + full_turn;
    }
    GeoPoint::new(lat2.to_degrees(), lon_deg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint<f64> {
        GeoPoint::new(lat, lon).unwrap()
    }

    /// Independent distance oracle: spherical law of cosines.
    fn law_of_cosines_distance(a: &GeoPoint<f64>, b: &GeoPoint<f64>) -> f64 {
        let lat1 = a.lat_deg().to_radians();
        let lat2 = b.lat_deg().to_radians();
        let dlon = (b.lon_deg() - a.lon_deg()).to_radians();
        let cos_arc = lat1.sin() * lat2.sin() + lat1.cos() * lat2.cos() * dlon.cos();
        cos_arc.clamp(-1.0, 1.0).acos() * EARTH_RADIUS_M
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        assert_eq!(
            GeoPoint::new(90.5, 0.0).unwrap_err(),
            GeoError::InvalidLatitude(90.5)
        );
        assert_eq!(
            GeoPoint::new(0.0, -180.2).unwrap_err(),
            GeoError::InvalidLongitude(-180.2)
        );
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(-90.0, 180.0).is_ok());
    }

    #[test]
    fn identical_points_have_zero_distance() {
        let a = pt(50.73, 7.10);
        assert_eq!(haversine_distance(&a, &a), 0.0);
    }

    #[test]
    fn one_degree_of_latitude() {
        // Oracle: law of cosines; one degree of latitude on this sphere is
        // 111,195 m (pi/180 * R).
        let a = pt(50.0, 7.0);
        let b = pt(51.0, 7.0);
        let d = haversine_distance(&a, &b);
        assert_relative_eq!(d, law_of_cosines_distance(&a, &b), max_relative = 1e-9);
        assert!((d - 111_195.0).abs() < 1.0, "got {d}");
    }

    #[test]
    fn matches_law_of_cosines_on_a_spread_of_pairs() {
        let pairs = [
            ((50.73, 7.10), (50.77, 7.18)),
            ((50.0, 7.0), (50.0, 8.0)),
            ((-33.9, 18.4), (-33.8, 18.6)),
            ((65.0, 25.5), (65.05, 25.4)),
        ];
        for ((la, lo), (lb, lob)) in pairs {
            let a = pt(la, lo);
            let b = pt(lb, lob);
            // Law of cosines loses precision on very short arcs; these pairs
            // are all in the km range where both formulas are stable.
            assert_relative_eq!(
                haversine_distance(&a, &b),
                law_of_cosines_distance(&a, &b),
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn link_geometry_rejects_coincident_positions() {
        let p = pt(50.73, 7.10);
        assert_eq!(
            link_geometry(&p, &p, 30.0, 2.0).unwrap_err(),
            GeoError::ZeroDistance
        );
    }

    #[test]
    fn link_geometry_one_km_due_north() {
        let gw = pt(50.73, 7.10);
        let sensor = destination_point(&gw, 0.0, 1000.0).unwrap();
        let link = link_geometry(&sensor, &gw, 30.0, 2.0).unwrap();
        assert_relative_eq!(link.distance_m, 1000.0, epsilon = 1e-3);
        assert_eq!(link.gw_height_m, 30.0);
        assert_eq!(link.sensor_height_m, 2.0);
    }

    #[test]
    fn link_geometry_rejects_bad_heights() {
        let gw = pt(50.73, 7.10);
        let sensor = pt(50.74, 7.10);
        assert!(link_geometry(&sensor, &gw, 0.0, 2.0).is_err());
        assert!(link_geometry(&sensor, &gw, 30.0, -1.0).is_err());
    }

    #[test]
    fn destination_round_trips_distance_and_bearing_sweep() {
        let origin = pt(50.7374, 7.0982);
        for bearing in [0.0, 45.0, 137.0, 210.0, 359.0] {
            for dist in [50.0, 1_000.0, 12_900.0] {
                let dest = destination_point(&origin, bearing, dist).unwrap();
                let back = haversine_distance(&origin, &dest);
                assert_relative_eq!(back, dist, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn works_in_f32() {
        let a = GeoPoint::<f32>::new(50.0, 7.0).unwrap();
        let b = GeoPoint::<f32>::new(51.0, 7.0).unwrap();
        let d = haversine_distance(&a, &b);
        assert!((d - 111_195.0).abs() < 20.0, "got {d}");
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(
            lat_a in -89.0f64..89.0, lon_a in -179.0f64..179.0,
            lat_b in -89.0f64..89.0, lon_b in -179.0f64..179.0,
        ) {
            let a = pt(lat_a, lon_a);
            let b = pt(lat_b, lon_b);
            prop_assert_eq!(haversine_distance(&a, &b), haversine_distance(&b, &a));
        }

        #[test]
        fn distance_is_non_negative_and_finite(
            lat_a in -90.0f64..=90.0, lon_a in -180.0f64..=180.0,
            lat_b in -90.0f64..=90.0, lon_b in -180.0f64..=180.0,
        ) {
            let d = haversine_distance(&pt(lat_a, lon_a), &pt(lat_b, lon_b));
            prop_assert!(d.is_finite());
            prop_assert!(d >= 0.0);
        }

        #[test]
        fn triangle_inequality(
            lat_a in -89.0f64..89.0, lon_a in -179.0f64..179.0,
            lat_b in -89.0f64..89.0, lon_b in -179.0f64..179.0,
            lat_c in -89.0f64..89.0, lon_c in -179.0f64..179.0,
        ) {
            let a = pt(lat_a, lon_a);
            let b = pt(lat_b, lon_b);
            let c = pt(lat_c, lon_c);
            let ab = haversine_distance(&a, &b);
            let bc = haversine_distance(&b, &c);
            let ac = haversine_distance(&a, &c);
            prop_assert!(ac <= ab + bc + 1e-6 * (ab + bc).max(1.0));
        }
    }
}
