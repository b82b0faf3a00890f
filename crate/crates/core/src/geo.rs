/// Mean Earth radius used for great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const KM_PER_NAUTICAL_MILE: f64 = 1.852;

/// Great-circle distance in kilometres (haversine formula).
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Speed in knots for a distance covered in a number of hours.
pub fn knots(distance_km: f64, hours: f64) -> f64 {
    distance_km / KM_PER_NAUTICAL_MILE / hours
}
