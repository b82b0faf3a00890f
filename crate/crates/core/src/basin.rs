use serde::{Deserialize, Serialize};

use crate::model::OceanBasin;

/// Meridian boundaries separating the three tropical ocean basins.
///
/// Atlantic covers `[atlantic_west, atlantic_east)`, Indian covers
/// `[atlantic_east, indian_east)` and everything else is Pacific. Positions
/// with `|lat| > max_abs_lat` are not assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasinConfig {
    pub atlantic_west: f64,
    pub atlantic_east: f64,
    pub indian_east: f64,
    pub max_abs_lat: f64,
}

impl Default for BasinConfig {
    fn default() -> Self {
        Self {
            atlantic_west: -70.0,
            atlantic_east: 20.0,
            indian_east: 146.0,
            max_abs_lat: 30.0,
        }
    }
}

pub fn assign_basin(lat: f64, lon: f64, config: &BasinConfig) -> Option<OceanBasin> {
    if lat.abs() > config.max_abs_lat {
        return None;
    }
    if (config.atlantic_west..config.atlantic_east).contains(&lon) {
        Some(OceanBasin::Atlantic)
    } else if (config.atlantic_east..config.indian_east).contains(&lon) {
        Some(OceanBasin::Indian)
    } else {
        Some(OceanBasin::Pacific)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_boundaries() {
        let c = BasinConfig::default();
        assert_eq!(assign_basin(0.0, -30.0, &c), Some(OceanBasin::Atlantic));
        assert_eq!(assign_basin(0.0, 70.0, &c), Some(OceanBasin::Indian));
        assert_eq!(assign_basin(0.0, -150.0, &c), Some(OceanBasin::Pacific));
        assert_eq!(assign_basin(0.0, 20.0, &c), Some(OceanBasin::Indian));
        assert_eq!(assign_basin(0.0, 146.0, &c), Some(OceanBasin::Pacific));
        assert_eq!(assign_basin(0.0, -70.0, &c), Some(OceanBasin::Atlantic));
        assert_eq!(assign_basin(31.0, -30.0, &c), None);
        assert_eq!(assign_basin(-30.0, -30.0, &c), Some(OceanBasin::Atlantic));
    }
}
