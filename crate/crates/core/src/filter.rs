//! Second-order IIR sections designed by bilinear transform with prewarping.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Normalised biquad: `y = b0 x + b1 x1 + b2 x2 - a1 y1 - a2 y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

fn check_cutoff(name: &'static str, f: f64, fs: f64) -> Result<()> {
    if !(f > 0.0 && f < fs / 2.0) {
        return Err(Error::param(
            name,
            format!("{f} Hz must lie strictly between 0 and Nyquist ({} Hz)", fs / 2.0),
        ));
    }
    Ok(())
}

impl Biquad {
    fn from_analog(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    /// Butterworth low-pass, `|H| = 1/sqrt(2)` at `cutoff_hz`.
    pub fn lowpass(cutoff_hz: f64, fs: f64) -> Result<Self> {
        check_cutoff("cutoff_hz", cutoff_hz, fs)?;
        let k = 2.0 * fs;
        let wc = k * (PI * cutoff_hz / fs).tan();
        let wc2 = wc * wc;
        Ok(Self::from_analog(
            [wc2, 2.0 * wc2, wc2],
            [
                k * k + SQRT_2 * wc * k + wc2,
                2.0 * wc2 - 2.0 * k * k,
                k * k - SQRT_2 * wc * k + wc2,
            ],
        ))
    }

    /// Second-order band-pass `B s / (s^2 + B s + w0^2)` whose -3 dB edges
    /// fall exactly on `low_hz` and `high_hz`.
    pub fn bandpass(low_hz: f64, high_hz: f64, fs: f64) -> Result<Self> {
        check_cutoff("low_hz", low_hz, fs)?;
        check_cutoff("high_hz", high_hz, fs)?;
        if low_hz >= high_hz {
            return Err(Error::param("low_hz", "must be below high_hz"));
        }
        let k = 2.0 * fs;
        let w1 = k * (PI * low_hz / fs).tan();
        let w2 = k * (PI * high_hz / fs).tan();
        let w0sq = w1 * w2;
        let bw = w2 - w1;
        Ok(Self::from_analog(
            [bw * k, 0.0, -bw * k],
            [k * k + bw * k + w0sq, 2.0 * w0sq - 2.0 * k * k, k * k - bw * k + w0sq],
        ))
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Magnitude response at `f_hz`.
    pub fn gain_at(&self, f_hz: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f_hz / fs;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * c1 + self.b[2] * c2,
            self.b[1] * s1 + self.b[2] * s2,
        );
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }

    /// Causal filtering, state initialised as if `x[0]` had been held forever.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let Some(&x0) = x.first() else {
            return Vec::new();
        };
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        // transposed direct form II steady state for constant input x0
        let y0 = self.dc_gain() * x0;
        let mut z2 = b2 * x0 - a2 * y0;
        let mut z1 = b1 * x0 - a1 * y0 + z2;
        x.iter()
            .map(|&xn| {
                let yn = b0 * xn + z1;
                z1 = b1 * xn - a1 * yn + z2;
                z2 = b2 * xn - a2 * yn;
                yn
            })
            .collect()
    }

    /// Zero-phase forward-backward filtering.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.filter(x);
        y.reverse();
        let mut z = self.filter(&y);
        z.reverse();
        z
    }
}
