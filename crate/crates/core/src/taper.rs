//! Taper geometry: fiber diameter versus position along the taper.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard single-mode fiber cladding diameter before pulling.
pub const UNTAPERED_DIAMETER_UM: f64 = 125.0;

/// Diameter samples with monotone piecewise-cubic (Fritsch-Carlson)
/// interpolation. Position is in mm from the diameter minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub struct TaperProfile {
    lc_mm: Vec<f64>,
    d_um: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawProfile {
    lc_mm: Vec<f64>,
    d_um: Vec<f64>,
}

impl TryFrom<RawProfile> for TaperProfile {
    type Error = Error;
    fn try_from(raw: RawProfile) -> Result<Self> {
        TaperProfile::new(raw.lc_mm, raw.d_um)
    }
}

impl From<TaperProfile> for RawProfile {
    fn from(p: TaperProfile) -> Self {
        RawProfile {
            lc_mm: p.lc_mm,
            d_um: p.d_um,
        }
    }
}

impl TaperProfile {
    pub fn new(lc_mm: Vec<f64>, d_um: Vec<f64>) -> Result<Self> {
        if lc_mm.len() != d_um.len() {
            return Err(Error::InvalidInput("position and diameter lengths differ".into()));
        }
        if lc_mm.len() < 2 {
            return Err(Error::InvalidInput("taper profile needs at least two samples".into()));
        }
        if lc_mm.iter().chain(d_um.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("taper profile contains non-finite values".into()));
        }
        if lc_mm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("l_c values must be strictly increasing".into()));
        }
        if d_um.iter().any(|&d| d <= 0.0) {
            return Err(Error::InvalidInput("diameters must be positive".into()));
        }
        let waist = d_um
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let descending_ok = d_um[..=waist].windows(2).all(|w| w[1] <= w[0]);
        let ascending_ok = d_um[waist..].windows(2).all(|w| w[1] >= w[0]);
        if !(descending_ok && ascending_ok) {
            return Err(Error::InvalidInput(
                "diameter must not decrease moving away from the waist".into(),
            ));
        }
        let slopes = fritsch_carlson_slopes(&lc_mm, &d_um);
        Ok(Self { lc_mm, d_um, slopes })
    }

    /// Heat-and-pull profile for a constant hot zone: a uniform waist of
    /// length L flanked by exponential transitions `d_w exp((|l| - L/2) / L)`,
    /// where `L = pull / (2 ln(d0 / d_w))`.
    pub fn exponential(waist_um: f64, pull_length_mm: f64, samples: usize) -> Result<Self> {
        if !(waist_um > 0.0 && waist_um < UNTAPERED_DIAMETER_UM) {
            return Err(Error::InvalidInput(format!("waist diameter {waist_um} out of range")));
        }
        if !(pull_length_mm > 0.0) || samples < 3 {
            return Err(Error::InvalidInput("pull length must be positive, samples >= 3".into()));
        }
        let hot_zone = pull_length_mm / (2.0 * (UNTAPERED_DIAMETER_UM / waist_um).ln());
        let half = hot_zone / 2.0 + pull_length_mm / 2.0;
        let lc: Vec<f64> = (0..samples)
            .map(|i| -half + 2.0 * half * i as f64 / (samples - 1) as f64)
            .collect();
        let d = lc
            .iter()
            .map(|&l| {
                let excess = (l.abs() - hot_zone / 2.0).max(0.0);
                (waist_um * (excess / hot_zone).exp()).min(UNTAPERED_DIAMETER_UM)
            })
            .collect();
        Self::new(lc, d)
    }

    /// Reads the two-column CSV form with header `l_c_mm,d_um`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| csv_error(&e, 1))?.clone();
        if header.len() != 2 || &header[0] != "l_c_mm" || &header[1] != "d_um" {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: "expected header `l_c_mm,d_um`".into(),
            });
        }
        let mut lc = Vec::new();
        let mut d = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| csv_error(&e, line))?;
            if rec.len() != 2 {
                return Err(Error::Parse {
                    line,
                    column: rec.len().min(2) + 1,
                    message: format!("expected 2 fields, found {}", rec.len()),
                });
            }
            for (col, out) in [(0usize, &mut lc), (1, &mut d)] {
                let v: f64 = rec[col].parse().map_err(|_| Error::Parse {
                    line,
                    column: col + 1,
                    message: format!("not a number: {:?}", &rec[col]),
                })?;
                out.push(v);
            }
        }
        Self::new(lc, d)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("l_c_mm,d_um\n");
        for (l, d) in self.lc_mm.iter().zip(&self.d_um) {
            s.push_str(&format!("{l},{d}\n"));
        }
        s
    }

    pub fn positions_mm(&self) -> &[f64] {
        &self.lc_mm
    }

    pub fn diameters_um(&self) -> &[f64] {
        &self.d_um
    }

    pub fn range_mm(&self) -> (f64, f64) {
        (self.lc_mm[0], *self.lc_mm.last().unwrap())
    }

    fn locate(&self, lc_mm: f64) -> Result<usize> {
        let (lo, hi) = self.range_mm();
        if !(lc_mm >= lo && lc_mm <= hi) {
            return Err(Error::OutOfRange {
                value: lc_mm,
                lo,
                hi,
            });
        }
        let i = self.lc_mm.partition_point(|&x| x <= lc_mm);
        Ok(i.saturating_sub(1).min(self.lc_mm.len() - 2))
    }

    /// Interpolated diameter, um.
    pub fn diameter_at(&self, lc_mm: f64) -> Result<f64> {
        let i = self.locate(lc_mm)?;
        let (x0, x1) = (self.lc_mm[i], self.lc_mm[i + 1]);
        if lc_mm == x0 {
            return Ok(self.d_um[i]);
        }
        if lc_mm == x1 {
            return Ok(self.d_um[i + 1]);
        }
        let h = x1 - x0;
        let t = (lc_mm - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * self.d_um[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.d_um[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1])
    }

    /// Derivative of the interpolant, um per mm.
    pub fn slope_at(&self, lc_mm: f64) -> Result<f64> {
        let i = self.locate(lc_mm)?;
        let (x0, x1) = (self.lc_mm[i], self.lc_mm[i + 1]);
        let h = x1 - x0;
        let t = (lc_mm - x0) / h;
        let t2 = t * t;
        Ok((6.0 * t2 - 6.0 * t) / h * self.d_um[i]
            + (3.0 * t2 - 4.0 * t + 1.0) * self.slopes[i]
            + (-6.0 * t2 + 6.0 * t) / h * self.d_um[i + 1]
            + (3.0 * t2 - 2.0 * t) * self.slopes[i + 1])
    }
}

pub(crate) fn csv_error(e: &csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    Error::Parse {
        line,
        column: 1,
        message: e.to_string(),
    }
}

/// Node slopes for a shape-preserving Hermite interpolant.
pub(crate) fn fritsch_carlson_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let secant: Vec<f64> = (0..n - 1)
        .map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i]))
        .collect();
    let mut m = vec![0.0; n];
    m[0] = secant[0];
    m[n - 1] = secant[n - 2];
    for i in 1..n - 1 {
        m[i] = if secant[i - 1] * secant[i] <= 0.0 {
            0.0
        } else {
            0.5 * (secant[i - 1] + secant[i])
        };
    }
    for i in 0..n - 1 {
        if secant[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / secant[i];
        let b = m[i + 1] / secant[i];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * secant[i];
            m[i + 1] = tau * b * secant[i];
        }
    }
    m
}
