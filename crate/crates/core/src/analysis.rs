//! Power, RMS, harmonic distortion and efficiency measurements.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::transforms::{abc_to_dq0, ThreePhase};

/// Harmonic orders included in reported THD unless stated otherwise.
pub const DEFAULT_HARMONICS: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("fundamental amplitude {amplitude} is negligible against signal scale {scale}")]
    FundamentalAbsent { amplitude: f64, scale: f64 },
    #[error("input power must be positive, got {0}")]
    NonPositiveInput(f64),
    #[error("invalid measurement window: {0}")]
    InvalidWindow(String),
    #[error("harmonic order {order} is not below Nyquist for a {periods}-period window of {len} samples")]
    AboveNyquist {
        order: usize,
        periods: usize,
        len: usize,
    },
}

/// Instantaneous active and reactive power of a three-phase set.
///
/// `p` is the sum of phase products. `q = 3/2·(v_q·i_d − v_d·i_q)` in the
/// amplitude-invariant frame at `theta`; lagging (inductive) current gives
/// positive `q`. Both are independent of `theta` for the dq part.
pub fn instantaneous_pq(v: ThreePhase, i: ThreePhase, theta: f64) -> (f64, f64) {
    let p = v.dot(&i);
    let vdq = abc_to_dq0(v, theta);
    let idq = abc_to_dq0(i, theta);
    let q = 1.5 * (vdq.q * idq.d - vdq.d * idq.q);
    (p, q)
}

/// Uniformly sampled signal spanning an integer number of fundamental
/// periods.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementWindow {
    samples: Vec<f64>,
    sample_rate: f64,
    fundamental_hz: f64,
    periods: usize,
}

const PERIOD_TOLERANCE: f64 = 1e-6;

impl MeasurementWindow {
    /// Wraps `samples`, which must cover a whole number of periods.
    pub fn new(
        samples: Vec<f64>,
        sample_rate: f64,
        fundamental_hz: f64,
    ) -> Result<Self, AnalysisError> {
        check_rates(sample_rate, fundamental_hz)?;
        let exact = samples.len() as f64 * fundamental_hz / sample_rate;
        let periods = exact.round();
        if periods < 1.0
            || (exact - periods).abs() * sample_rate / fundamental_hz > PERIOD_TOLERANCE
        {
            return Err(AnalysisError::InvalidWindow(format!(
                "{} samples at {sample_rate} Hz span {exact} periods of {fundamental_hz} Hz",
                samples.len()
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            fundamental_hz,
            periods: periods as usize,
        })
    }

    /// The longest trailing part of `samples` that spans a whole number of
    /// periods on the sample grid, optionally capped at `max_periods`.
    pub fn trailing(
        samples: &[f64],
        sample_rate: f64,
        fundamental_hz: f64,
        max_periods: Option<usize>,
    ) -> Result<Self, AnalysisError> {
        check_rates(sample_rate, fundamental_hz)?;
        let per_period = sample_rate / fundamental_hz;
        let mut periods = (samples.len() as f64 / per_period).floor() as usize;
        if let Some(cap) = max_periods {
            periods = periods.min(cap);
        }
        while periods > 0 {
            let n = periods as f64 * per_period;
            if (n - n.round()).abs() <= PERIOD_TOLERANCE {
                let len = n.round() as usize;
                return Self::new(
                    samples[samples.len() - len..].to_vec(),
                    sample_rate,
                    fundamental_hz,
                );
            }
            periods -= 1;
        }
        Err(AnalysisError::InvalidWindow(format!(
            "no whole number of {fundamental_hz} Hz periods fits {} samples at {sample_rate} Hz",
            samples.len()
        )))
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn fundamental_hz(&self) -> f64 {
        self.fundamental_hz
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

fn check_rates(sample_rate: f64, fundamental_hz: f64) -> Result<(), AnalysisError> {
    if !(sample_rate > 0.0) || !(fundamental_hz > 0.0) {
        return Err(AnalysisError::InvalidWindow(
            "sample rate and fundamental must be positive".into(),
        ));
    }
    Ok(())
}

pub fn rms(w: &MeasurementWindow) -> f64 {
    let s = w.samples();
    (s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt()
}

/// Total harmonic distortion over orders `2..=n_harmonics`, relative to the
/// fundamental.
pub fn thd(w: &MeasurementWindow, n_harmonics: usize) -> Result<f64, AnalysisError> {
    let amplitudes = harmonic_amplitudes(w, n_harmonics)?;
    let fundamental = amplitudes[1];
    let scale = w.samples().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || fundamental <= 1e-9 * scale {
        return Err(AnalysisError::FundamentalAbsent {
            amplitude: fundamental,
            scale,
        });
    }
    let harmonic_power: f64 = amplitudes[2..].iter().map(|a| a * a).sum();
    Ok(harmonic_power.sqrt() / fundamental)
}

/// Peak amplitudes of harmonic orders `0..=n_harmonics`, index = order.
/// Order 0 holds the DC mean.
pub fn harmonic_amplitudes(
    w: &MeasurementWindow,
    n_harmonics: usize,
) -> Result<Vec<f64>, AnalysisError> {
    let len = w.samples().len();
    if n_harmonics < 2 || 2 * n_harmonics * w.periods() >= len {
        return Err(AnalysisError::AboveNyquist {
            order: n_harmonics,
            periods: w.periods(),
            len,
        });
    }
    let mut buf: Vec<Complex<f64>> = w.samples().iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let scale = 2.0 / len as f64;
    Ok((0..=n_harmonics)
        .map(|h| {
            let bin = buf[h * w.periods()].norm();
            if h == 0 {
                bin / len as f64
            } else {
                bin * scale
            }
        })
        .collect())
}

pub fn efficiency(p_out: f64, p_in: f64) -> Result<f64, AnalysisError> {
    if !(p_in > 0.0) {
        return Err(AnalysisError::NonPositiveInput(p_in));
    }
    Ok(p_out / p_in)
}

/// Summary of one steady-state window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowMetrics {
    pub p_active: f64,
    pub q_reactive: f64,
    pub v_rms: f64,
    pub f_est: f64,
    /// Ratio, not percent.
    pub thd: f64,
    /// Ratio, not percent.
    pub efficiency: f64,
}
