use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::textio::{data_lines, parse_error, parse_row, read_to_string};
use crate::{Error, Result};

/// Reference spatial frequency of the roughness classes, cycles/m.
const REFERENCE_FREQUENCY: f64 = 0.1;

/// Road roughness class; displacement PSD at the reference spatial frequency
/// follows the usual geometric-mean values, quadrupling per class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoughnessClass {
    A,
    B,
    C,
    D,
}

impl RoughnessClass {
    /// Displacement PSD at 0.1 cycles/m, in m³.
    pub fn reference_psd(self) -> f64 {
        match self {
            RoughnessClass::A => 16e-6,
            RoughnessClass::B => 64e-6,
            RoughnessClass::C => 256e-6,
            RoughnessClass::D => 1024e-6,
        }
    }
}

impl std::str::FromStr for RoughnessClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            "D" => Ok(Self::D),
            other => Err(Error::invalid(format!("unknown roughness class `{other}`"))),
        }
    }
}

/// Road height sampled uniformly in distance.
///
/// A periodic road wraps around: distance `s` and `s + length()` refer to the
/// same point, which is how closed loops are represented.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadInput {
    spacing: f64,
    heights: Vec<f64>,
    periodic: bool,
}

impl RoadInput {
    pub fn new(spacing: f64, heights: Vec<f64>, periodic: bool) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid(format!("road spacing must be positive, got {spacing}")));
        }
        if heights.len() < 2 {
            return Err(Error::invalid("road needs at least two samples"));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::invalid("road heights must be finite"));
        }
        Ok(Self {
            spacing,
            heights,
            periodic,
        })
    }

    /// A flat road of the given length.
    pub fn flat(length: f64, spacing: f64) -> Result<Self> {
        let n = (length / spacing).ceil() as usize + 1;
        Self::new(spacing, vec![0.0; n.max(2)], false)
    }

    /// Builds a road by sampling `f(distance)`.
    pub fn from_fn(length: f64, spacing: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = (length / spacing).ceil() as usize + 1;
        Self::new(spacing, (0..n).map(|i| f(i as f64 * spacing)).collect(), false)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    /// Covered distance: the period for periodic roads, otherwise the
    /// distance between first and last sample.
    pub fn length(&self) -> f64 {
        if self.periodic {
            self.heights.len() as f64 * self.spacing
        } else {
            (self.heights.len() - 1) as f64 * self.spacing
        }
    }

    /// Whether `[start, end]` lies on the road.
    pub fn covers(&self, start: f64, end: f64) -> bool {
        self.periodic || (start >= -1e-9 && end <= self.length() + 1e-9)
    }

    /// Height at `distance` by linear interpolation.
    pub fn height_at(&self, distance: f64) -> f64 {
        let n = self.heights.len();
        let x = distance / self.spacing;
        if self.periodic {
            let period = n as f64;
            let x = x.rem_euclid(period);
            let i = (x.floor() as usize).min(n - 1);
            let frac = x - i as f64;
            let j = (i + 1) % n;
            self.heights[i] + frac * (self.heights[j] - self.heights[i])
        } else {
            let x = x.clamp(0.0, (n - 1) as f64);
            let i = (x.floor() as usize).min(n - 2);
            let frac = x - i as f64;
            self.heights[i] + frac * (self.heights[i + 1] - self.heights[i])
        }
    }

    pub fn rms(&self) -> f64 {
        (self.heights.iter().map(|h| h * h).sum::<f64>() / self.heights.len() as f64).sqrt()
    }

    /// `distance,height` pairs, one per line, after a header line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.heights.len() * 24);
        out.push_str(if self.periodic {
            "distance,height # periodic\n"
        } else {
            "distance,height\n"
        });
        for (i, h) in self.heights.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i as f64 * self.spacing, h));
        }
        out
    }

    pub fn from_text(path: &Path, text: &str) -> Result<Self> {
        let periodic = text
            .lines()
            .next()
            .is_some_and(|l| l.contains("periodic"));
        let mut rows = Vec::new();
        for (line_no, line) in data_lines(text) {
            if line.starts_with("distance") {
                continue;
            }
            let row = parse_row(path, line_no, line, 2)?;
            rows.push((line_no, row[0], row[1]));
        }
        if rows.len() < 2 {
            return Err(parse_error(path, 0, "road needs at least two samples"));
        }
        let spacing = rows[1].1 - rows[0].1;
        for w in rows.windows(2) {
            let d = w[1].1 - w[0].1;
            if (d - spacing).abs() > 1e-6 * spacing.abs().max(1.0) {
                return Err(parse_error(path, w[1].0, "road samples are not uniformly spaced"));
            }
        }
        Self::new(spacing, rows.into_iter().map(|r| r.2).collect(), periodic)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (p, text) = read_to_string(path)?;
        Self::from_text(&p, &text)
    }
}

/// Synthesizes a zero-mean periodic road whose displacement PSD follows
/// `G(n) = G(n0) (n / n0)^-2` for the given roughness class.
///
/// Harmonics `k / length` for `k = 1 .. N/2 - 1` get deterministic amplitude
/// `sqrt(2 G(n_k) Δn)` and a uniformly random phase drawn from `seed`; the
/// height sequence is the inverse FFT, so it wraps smoothly at `length`.
pub fn generate_road(
    length: f64,
    spacing: f64,
    class: RoughnessClass,
    seed: u64,
) -> Result<RoadInput> {
    if !(spacing > 0.0 && length > spacing && length.is_finite()) {
        return Err(Error::invalid(format!(
            "generate_road needs length > spacing > 0, got length {length}, spacing {spacing}"
        )));
    }
    let n = (length / spacing).round() as usize;
    if n < 4 {
        return Err(Error::invalid("road must have at least four samples"));
    }
    let period = n as f64 * spacing;
    let dn = 1.0 / period;
    let g0 = class.reference_psd();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    // Exclusive upper bound keeps the Nyquist bin (if any) at zero.
    for k in 1..n.div_ceil(2) {
        let freq = k as f64 * dn;
        let psd = g0 * (freq / REFERENCE_FREQUENCY).powi(-2);
        let amplitude = (2.0 * psd * dn).sqrt();
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let c = Complex::from_polar(0.5 * amplitude * n as f64, phase);
        spectrum[k] = c;
        spectrum[n - k] = c.conj();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let heights = spectrum.iter().map(|c| c.re / n as f64).collect();
    RoadInput::new(spacing, heights, true)
}
