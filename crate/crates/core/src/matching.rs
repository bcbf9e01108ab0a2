//! Cross-correlation of a snippet against a longer stream, and peak gating.
//!
//! For real signals the raw (unnormalized) correlation at lag `m` is
//! `R[m] = sum_n stream[n + m] * snippet[n]`, evaluated only at lags where the
//! snippet lies entirely inside the stream (`0 ..= N - M`). The strongest lag
//! is the offset of the snippet within the stream.

use std::fmt::Write as _;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Default half-width of the exclusion zone around the main peak, in cells.
pub const DEFAULT_EXCLUSION_HALFWIDTH: usize = 10;

/// Default acceptance threshold on the second-to-first peak ratio.
pub const DEFAULT_RATIO_THRESHOLD: f64 = 0.6;

fn check_inputs(snippet: &[f64], stream: &[f64]) -> Result<()> {
    if snippet.is_empty() || stream.is_empty() {
        return Err(Error::invalid("correlation inputs must be non-empty"));
    }
    if snippet.len() > stream.len() {
        return Err(Error::invalid(format!(
            "snippet ({}) longer than stream ({})",
            snippet.len(),
            stream.len()
        )));
    }
    Ok(())
}

/// Direct O(N·M) evaluation.
pub fn raw_cross_correlation(snippet: &[f64], stream: &[f64]) -> Result<Vec<f64>> {
    check_inputs(snippet, stream)?;
    let lags = stream.len() - snippet.len() + 1;
    Ok((0..lags)
        .map(|m| {
            snippet
                .iter()
                .zip(&stream[m..])
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect())
}

/// Same values as [`raw_cross_correlation`], computed in the frequency domain.
pub fn fast_cross_correlation(snippet: &[f64], stream: &[f64]) -> Result<Vec<f64>> {
    Correlator::new().correlate(snippet, stream)
}

/// FFT correlation engine that keeps plans and scratch buffers between calls.
pub struct Correlator {
    planner: FftPlanner<f64>,
    plans: Option<(usize, Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
    snippet_buf: Vec<Complex<f64>>,
    stream_buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Default for Correlator {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for Correlator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Correlator")
            .field("size", &self.plans.as_ref().map(|p| p.0))
            .finish()
    }
}

impl Correlator {
    pub fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
            plans: None,
            snippet_buf: Vec::new(),
            stream_buf: Vec::new(),
            scratch: Vec::new(),
        }
    }

    fn plans(&mut self, size: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        match &self.plans {
            Some((n, fwd, inv)) if *n == size => (fwd.clone(), inv.clone()),
            _ => {
                let fwd = self.planner.plan_fft_forward(size);
                let inv = self.planner.plan_fft_inverse(size);
                self.plans = Some((size, fwd.clone(), inv.clone()));
                (fwd, inv)
            }
        }
    }

    /// Correlation over all full-overlap lags.
    ///
    /// Both signals are zero-padded to a smooth FFT size of at least the
    /// stream length, and the product `conj(S) · X` is transformed back; the
    /// circular wrap only touches lags beyond `N - M`, which are discarded.
    pub fn correlate(&mut self, snippet: &[f64], stream: &[f64]) -> Result<Vec<f64>> {
        check_inputs(snippet, stream)?;
        let size = fft_size(stream.len());
        let (fwd, inv) = self.plans(size);

        self.snippet_buf.clear();
        self.snippet_buf
            .extend(snippet.iter().map(|&v| Complex::new(v, 0.0)));
        self.snippet_buf.resize(size, Complex::new(0.0, 0.0));
        self.stream_buf.clear();
        self.stream_buf
            .extend(stream.iter().map(|&v| Complex::new(v, 0.0)));
        self.stream_buf.resize(size, Complex::new(0.0, 0.0));

        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        self.scratch.resize(scratch_len, Complex::new(0.0, 0.0));
        fwd.process_with_scratch(&mut self.snippet_buf, &mut self.scratch);
        fwd.process_with_scratch(&mut self.stream_buf, &mut self.scratch);
        for (x, s) in self.stream_buf.iter_mut().zip(&self.snippet_buf) {
            *x *= s.conj();
        }
        inv.process_with_scratch(&mut self.stream_buf, &mut self.scratch);

        let scale = 1.0 / size as f64;
        let lags = stream.len() - snippet.len() + 1;
        Ok(self.stream_buf[..lags].iter().map(|c| c.re * scale).collect())
    }

    /// Subtracts the snippet mean, correlates, and gates the peak.
    pub fn locate(
        &mut self,
        snippet: &[f64],
        stream: &[f64],
        exclusion_halfwidth: usize,
    ) -> Result<(CorrelationResult, Vec<f64>)> {
        let mean = snippet.iter().sum::<f64>() / snippet.len().max(1) as f64;
        let centered: Vec<f64> = snippet.iter().map(|v| v - mean).collect();
        let correlation = self.correlate(&centered, stream)?;
        let result = find_peak_with_ratio(&correlation, exclusion_halfwidth)?;
        Ok((result, correlation))
    }
}

/// Smallest 2^a·3^b·5^c at or above `n`, sizes rustfft handles quickly.
fn fft_size(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1usize;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut candidate = p35;
            while candidate < n {
                candidate *= 2;
            }
            best = best.min(candidate);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationResult {
    pub best_lag: usize,
    pub best_value: f64,
    /// Largest value farther than the exclusion half-width from `best_lag`,
    /// if any lag lies outside the zone.
    pub second_best_value: Option<f64>,
    /// `max(second_best, 0) / best`; `None` when the best value is not
    /// positive or no lag lies outside the exclusion zone.
    pub ratio: Option<f64>,
}

impl CorrelationResult {
    /// Whether the peak is clear under `threshold`.
    pub fn is_clear(&self, threshold: f64) -> bool {
        self.ratio.is_some_and(|r| r < threshold)
    }
}

/// Arg-max of a correlation sequence together with the strongest competing
/// value outside `best_lag ± exclusion_halfwidth`. Ties resolve to the
/// smallest lag.
pub fn find_peak_with_ratio(
    correlation: &[f64],
    exclusion_halfwidth: usize,
) -> Result<CorrelationResult> {
    if correlation.is_empty() {
        return Err(Error::invalid("empty correlation sequence"));
    }
    if exclusion_halfwidth == 0 {
        return Err(Error::invalid("exclusion half-width must be at least 1"));
    }
    let mut best_lag = 0;
    for (i, &v) in correlation.iter().enumerate() {
        if v > correlation[best_lag] {
            best_lag = i;
        }
    }
    let best_value = correlation[best_lag];
    let lo = best_lag.saturating_sub(exclusion_halfwidth);
    let hi = best_lag + exclusion_halfwidth;
    let second_best_value = correlation
        .iter()
        .enumerate()
        .filter(|(i, _)| *i < lo || *i > hi)
        .map(|(_, v)| *v)
        .reduce(f64::max);
    let ratio = match second_best_value {
        Some(second) if best_value > 0.0 => Some(second.max(0.0) / best_value),
        _ => None,
    };
    Ok(CorrelationResult {
        best_lag,
        best_value,
        second_best_value,
        ratio,
    })
}

/// `lag,value` text for plotting a correlation trace.
pub fn correlation_to_text(correlation: &[f64], first_lag: i64) -> String {
    let mut out = String::with_capacity(correlation.len() * 24);
    out.push_str("lag,value\n");
    for (i, v) in correlation.iter().enumerate() {
        let _ = writeln!(out, "{},{}", first_lag + i as i64, v);
    }
    out
}
