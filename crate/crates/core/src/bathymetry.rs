//! Regular lat/lon depth grid with nearest-cell lookup.

use std::path::Path;

use crate::{Error, Result};

/// Depth grid in metres. Positive values are water depth, zero or negative
/// values are land. Cell `(i, j)` is centred on `(lat0 + i*dlat, lon0 + j*dlon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BathymetryGrid {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub nrows: usize,
    pub ncols: usize,
    depth: Vec<f64>,
}

impl BathymetryGrid {
    pub fn new(
        lat0: f64,
        lon0: f64,
        dlat: f64,
        dlon: f64,
        nrows: usize,
        ncols: usize,
        depth: Vec<f64>,
    ) -> Result<Self> {
        if !(dlat > 0.0 && dlon > 0.0) {
            return Err(Error::Input("bathymetry cell size must be positive".into()));
        }
        if nrows == 0 || ncols == 0 {
            return Err(Error::Input("bathymetry grid must be non-empty".into()));
        }
        if depth.len() != nrows * ncols {
            return Err(Error::Input(format!(
                "bathymetry grid expects {} depths, found {}",
                nrows * ncols,
                depth.len()
            )));
        }
        if depth.iter().any(|d| !d.is_finite()) {
            return Err(Error::Input("bathymetry depths must be finite".into()));
        }
        Ok(Self {
            lat0,
            lon0,
            dlat,
            dlon,
            nrows,
            ncols,
            depth,
        })
    }

    /// A single-cell grid reporting the same depth everywhere it covers.
    pub fn uniform(lat0: f64, lon0: f64, dlat: f64, dlon: f64, nrows: usize, ncols: usize, depth: f64) -> Result<Self> {
        Self::new(lat0, lon0, dlat, dlon, nrows, ncols, vec![depth; nrows * ncols])
    }

    /// Depth of the nearest cell, or `None` when the position falls outside
    /// the grid.
    pub fn depth_at(&self, lat: f64, lon: f64) -> Option<f64> {
        let i = ((lat - self.lat0) / self.dlat).round();
        let j = ((lon - self.lon0) / self.dlon).round();
        if i < 0.0 || j < 0.0 || i >= self.nrows as f64 || j >= self.ncols as f64 {
            return None;
        }
        Some(self.depth[i as usize * self.ncols + j as usize])
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Input("empty bathymetry file".into()))?
            .split_whitespace()
            .collect();
        if header.len() != 6 {
            return Err(Error::Input(
                "bathymetry header must be `lat0 lon0 dlat dlon nrows ncols`".into(),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Input(format!("bad bathymetry number `{s}`")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::Input(format!("bad bathymetry size `{s}`")))
        };
        let (lat0, lon0, dlat, dlon) = (num(header[0])?, num(header[1])?, num(header[2])?, num(header[3])?);
        let (nrows, ncols) = (int(header[4])?, int(header[5])?);

        let mut depth = Vec::with_capacity(nrows * ncols);
        for (row, line) in lines.enumerate() {
            let values = line.split_whitespace().map(num).collect::<Result<Vec<_>>>()?;
            if values.len() != ncols {
                return Err(Error::Input(format!(
                    "bathymetry row {} has {} values, expected {ncols}",
                    row + 1,
                    values.len()
                )));
            }
            depth.extend(values);
        }
        Self::new(lat0, lon0, dlat, dlon, nrows, ncols, depth)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {} {} {} {}\n",
            self.lat0, self.lon0, self.dlat, self.dlon, self.nrows, self.ncols
        );
        for row in self.depth.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|d| d.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}
