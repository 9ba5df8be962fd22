//! Time- and frequency-domain features of pressure traces.

use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
    Hamming,
    Rectangular,
}

impl WindowKind {
    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Hann => "hann",
            WindowKind::Hamming => "hamming",
            WindowKind::Rectangular => "rectangular",
        }
    }

    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let tau = 2.0 * std::f64::consts::PI;
        (0..n)
            .map(|i| {
                let x = tau * i as f64 / n as f64;
                match self {
                    WindowKind::Hann => 0.5 - 0.5 * x.cos(),
                    WindowKind::Hamming => 0.54 - 0.46 * x.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Hz, `k·Fs/nfft` for `k = 0..=nfft/2`.
    pub frequencies: Vec<f64>,
    /// Pa²/Hz
    pub psd: Vec<f64>,
    pub sampling_frequency: f64,
    pub segment_length: usize,
    pub overlap: f64,
    pub window: WindowKind,
    /// Transform length (segment length plus zero padding).
    pub nfft: usize,
    pub segments: usize,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        self.sampling_frequency / self.nfft as f64
    }

    pub fn nyquist(&self) -> f64 {
        self.sampling_frequency / 2.0
    }

    pub fn scaled(&self, a: f64) -> Spectrum {
        Spectrum { psd: self.psd.iter().map(|p| a * p).collect(), ..self.clone() }
    }

    /// CSV with columns `frequency_hz,psd`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frequency_hz,psd\n");
        for (f, p) in self.frequencies.iter().zip(&self.psd) {
            s.push_str(&format!("{f:e},{p:e}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelchSettings {
    /// Number of segments the trace is split into.
    pub segments: usize,
    pub overlap: f64,
    pub window: WindowKind,
    /// Minimum transform length; segments are zero-padded up to it.
    pub min_nfft: usize,
}

impl Default for WelchSettings {
    fn default() -> Self {
        WelchSettings { segments: 8, overlap: 0.5, window: WindowKind::Hann, min_nfft: 0 }
    }
}

impl WelchSettings {
    /// Segment length giving `segments` overlapping segments over `n` samples.
    pub fn segment_length(&self, n: usize) -> usize {
        let k = self.segments.max(1) as f64;
        ((n as f64 / (1.0 + (k - 1.0) * (1.0 - self.overlap))).floor() as usize).max(2)
    }

    pub fn estimate(&self, trace: &SignalTrace) -> Result<Spectrum> {
        if self.segments == 0 {
            return Err(Error::config("Welch segment count must be positive"));
        }
        let len = self.segment_length(trace.len());
        welch_psd_padded(trace, len, self.overlap, self.window, self.min_nfft.max(len))
    }
}

pub fn peak_to_peak(trace: &SignalTrace) -> f64 {
    let (lo, hi) = trace
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

/// Welch estimate without zero padding.
pub fn welch_psd(trace: &SignalTrace, segment_length: usize, overlap: f64, window: WindowKind) -> Result<Spectrum> {
    welch_psd_padded(trace, segment_length, overlap, window, segment_length)
}

/// Welch estimate with each windowed segment zero-padded to `nfft` (rounded
/// up to even so the grid ends at Fs/2). Normalised as a one-sided density,
/// so the PSD integrated over [0, Fs/2] is the mean square of the windowed
/// segments.
pub fn welch_psd_padded(
    trace: &SignalTrace,
    segment_length: usize,
    overlap: f64,
    window: WindowKind,
    nfft: usize,
) -> Result<Spectrum> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::config(format!("overlap must lie in [0, 1), got {overlap}")));
    }
    if segment_length < 2 {
        return Err(Error::shape(format!("segment length must be at least 2, got {segment_length}")));
    }
    if segment_length > trace.len() {
        return Err(Error::shape(format!(
            "trace of {} samples is shorter than one segment of {segment_length}",
            trace.len()
        )));
    }
    let nfft = nfft.max(segment_length);
    let nfft = nfft + nfft % 2;
    let step = (((1.0 - overlap) * segment_length as f64).round() as usize).max(1);
    let w = window.coefficients(segment_length);
    let w2: f64 = w.iter().map(|x| x * x).sum();
    let fs = trace.sampling_frequency;

    let r2c = RealFftPlanner::<f64>::new().plan_fft_forward(nfft);
    let mut buf = r2c.make_input_vec();
    let mut spec = r2c.make_output_vec();
    let mut acc = vec![0.0; nfft / 2 + 1];
    let mut segments = 0;
    let mut start = 0;
    while start + segment_length <= trace.len() {
        buf.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..segment_length {
            buf[i] = w[i] * trace.samples[start + i];
        }
        r2c.process(&mut buf, &mut spec).expect("matching lengths");
        for (a, s) in acc.iter_mut().zip(&spec) {
            *a += s.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let last = acc.len() - 1;
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || k == last { 1.0 } else { 2.0 };
            one_sided * a / (segments as f64 * fs * w2)
        })
        .collect();
    Ok(Spectrum {
        frequencies: (0..=last).map(|k| k as f64 * fs / nfft as f64).collect(),
        psd,
        sampling_frequency: fs,
        segment_length,
        overlap,
        window,
        nfft,
        segments,
    })
}

fn check_band(spectrum: &Spectrum, f_lo: f64, f_hi: f64) -> Result<()> {
    let ny = spectrum.nyquist();
    if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= ny * (1.0 + 1e-12)) {
        return Err(Error::domain(format!(
            "band [{f_lo:e}, {f_hi:e}] Hz must satisfy 0 ≤ f_lo < f_hi ≤ Fs/2 = {ny:e} Hz"
        )));
    }
    Ok(())
}

/// ∫ PSD df over `[f_lo, f_hi]`, treating bin `k` as the constant PSD over
/// `[f_k − Δf/2, f_k + Δf/2]` clipped to `[0, Fs/2]`. The full band returns
/// the mean square of the (windowed) signal.
pub fn band_power(spectrum: &Spectrum, f_lo: f64, f_hi: f64) -> Result<f64> {
    check_band(spectrum, f_lo, f_hi)?;
    let df = spectrum.bin_width();
    let ny = spectrum.nyquist();
    Ok(spectrum
        .frequencies
        .iter()
        .zip(&spectrum.psd)
        .map(|(&f, &p)| {
            let lo = (f - df / 2.0).max(0.0).max(f_lo);
            let hi = (f + df / 2.0).min(ny).min(f_hi);
            if hi > lo {
                p * (hi - lo)
            } else {
                0.0
            }
        })
        .sum())
}

/// Left-rectangle sum Σ PSD(f_k)·Δf over bins with `f_lo ≤ f_k < f_hi`.
pub fn high_band_integral(spectrum: &Spectrum, f_lo: f64, f_hi: f64) -> Result<f64> {
    check_band(spectrum, f_lo, f_hi)?;
    let df = spectrum.bin_width();
    Ok(spectrum
        .frequencies
        .iter()
        .zip(&spectrum.psd)
        .filter(|(&f, _)| f >= f_lo && f < f_hi)
        .map(|(_, &p)| p * df)
        .sum())
}

/// Indices of local maxima (strictly above both neighbours) of the 3-bin
/// moving average whose prominence reaches `prominence × max`.
pub fn spectral_peaks(psd: &[f64], prominence: f64) -> Vec<usize> {
    let n = psd.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            psd[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let global = smooth.iter().copied().fold(0.0, f64::max);
    let threshold = prominence * global;
    (1..n.saturating_sub(1))
        .filter(|&i| smooth[i] > smooth[i - 1] && smooth[i] > smooth[i + 1])
        .filter(|&i| {
            // lowest point on each side before reaching higher ground
            let mut left = smooth[i];
            for j in (0..i).rev() {
                if smooth[j] > smooth[i] {
                    break;
                }
                left = left.min(smooth[j]);
            }
            let mut right = smooth[i];
            for &v in &smooth[i + 1..] {
                if v > smooth[i] {
                    break;
                }
                right = right.min(v);
            }
            smooth[i] - left.max(right) >= threshold && threshold > 0.0
        })
        .collect()
}

/// f = 0 intercept of the line through the two lowest-frequency qualifying
/// maxima (raw PSD values at the detected bins).
pub fn spectral_y_intercept(spectrum: &Spectrum, prominence: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&prominence) {
        return Err(Error::domain(format!("prominence fraction must lie in [0, 1], got {prominence}")));
    }
    let peaks = spectral_peaks(&spectrum.psd, prominence);
    if peaks.len() < 2 {
        return Err(Error::unavailable(format!(
            "y-intercept needs two spectral maxima, found {}",
            peaks.len()
        )));
    }
    let (i1, i2) = (peaks[0], peaks[1]);
    let (f1, p1) = (spectrum.frequencies[i1], spectrum.psd[i1]);
    let (f2, p2) = (spectrum.frequencies[i2], spectrum.psd[i2]);
    Ok(line_intercept(f1, p1, f2, p2))
}

pub fn line_intercept(f1: f64, p1: f64, f2: f64, p2: f64) -> f64 {
    p1 - f1 * (p2 - p1) / (f2 - f1)
}

/// `ps_yi ≈ c1·s^γ + c2` with `s` in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeResponseFit {
    pub c1: f64,
    pub c2: f64,
    pub gamma: f64,
    /// Root of the summed squared residuals.
    pub residual: f64,
}

impl SizeResponseFit {
    pub fn predict(&self, size_um: f64) -> f64 {
        self.c1 * size_um.powf(self.gamma) + self.c2
    }
}

/// Grid step of the γ search.
pub const GAMMA_STEP: f64 = 0.01;
/// Bracket width at which golden-section refinement stops.
pub const GAMMA_TOL: f64 = 1e-4;

/// Least-squares fit of `c1·s^γ + c2`: γ is searched on a 0.01 grid over
/// `gamma_range` and refined by golden section; (c1, c2) are linear
/// least squares for each γ.
pub fn fit_size_response(points: &[(f64, f64)], gamma_range: (f64, f64)) -> Result<SizeResponseFit> {
    if points.len() < 3 {
        return Err(Error::UnderDetermined(format!("need at least 3 (size, value) points, got {}", points.len())));
    }
    let mut sizes: Vec<f64> = points.iter().map(|p| p.0).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::UnderDetermined("need at least 3 distinct sizes".into()));
    }
    if points.iter().any(|&(s, y)| !(s > 0.0 && s.is_finite() && y.is_finite())) {
        return Err(Error::domain("sizes must be positive and values finite"));
    }
    let (g_lo, g_hi) = gamma_range;
    if !(g_lo.is_finite() && g_hi.is_finite() && g_lo < g_hi) {
        return Err(Error::domain(format!("invalid γ range [{g_lo}, {g_hi}]")));
    }
    // normalise for conditioning; undone at the end
    let s_max = *sizes.last().unwrap();
    let y_scale = points.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
    let y_scale = if y_scale > 0.0 { y_scale } else { 1.0 };
    let xs: Vec<f64> = points.iter().map(|p| p.0 / s_max).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1 / y_scale).collect();
    let solve = |g: f64| -> (f64, f64, f64) {
        let x: Vec<f64> = xs.iter().map(|s| s.powf(g)).collect();
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
        let a = if sxx > 1e-300 { sxy / sxx } else { 0.0 };
        let b = my - a * mx;
        let sse = x.iter().zip(&ys).map(|(xv, yv)| (a * xv + b - yv).powi(2)).sum();
        (a, b, sse)
    };

    let steps = ((g_hi - g_lo) / GAMMA_STEP + 1e-9).floor() as usize;
    let mut best = (g_lo, solve(g_lo).2);
    for i in 1..=steps {
        let g = g_lo + i as f64 * GAMMA_STEP;
        let e = solve(g).2;
        if e < best.1 {
            best = (g, e);
        }
    }
    let (mut a, mut b) = ((best.0 - GAMMA_STEP).max(g_lo), (best.0 + GAMMA_STEP).min(g_hi));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (solve(c).2, solve(d).2);
    while b - a > GAMMA_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = solve(c).2;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = solve(d).2;
        }
        for (g, e) in [(c, fc), (d, fd)] {
            if e < best.1 {
                best = (g, e);
            }
        }
    }
    let gamma = best.0;
    let (a1, b1, sse) = solve(gamma);
    Ok(SizeResponseFit {
        c1: a1 * y_scale / s_max.powf(gamma),
        c2: b1 * y_scale,
        gamma,
        residual: sse.sqrt() * y_scale,
    })
}

/// Time of the sample with the largest |p| (earliest on ties).
pub fn arrival_time(trace: &SignalTrace) -> Result<f64> {
    let mut best = (0usize, 0.0f64);
    for (i, &x) in trace.samples.iter().enumerate() {
        if x.abs() > best.1 {
            best = (i, x.abs());
        }
    }
    if best.1 == 0.0 {
        return Err(Error::unavailable("arrival time of an all-zero trace"));
    }
    Ok(trace.time(best.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub welch: WelchSettings,
    /// Hz
    pub band: (f64, f64),
    /// Hz
    pub high_band: (f64, f64),
    pub peak_prominence: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            welch: WelchSettings::default(),
            band: (0.0, 3e6),
            high_band: (1.5e6, 3e6),
            peak_prominence: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFeatures {
    /// Pa
    pub ppp: f64,
    /// Pa²
    pub band_power: f64,
    /// Pa²
    pub high_band_integral: f64,
    /// Pa²/Hz; `None` when fewer than two maxima qualify.
    pub y_intercept: Option<f64>,
    /// s; `None` for an all-zero trace.
    pub arrival_time: Option<f64>,
    pub welch_segment_length: usize,
    pub welch_overlap: f64,
    pub welch_window: WindowKind,
    pub welch_nfft: usize,
    /// Reasons for any unavailable feature.
    pub notes: Vec<String>,
}

pub fn extract_features(trace: &SignalTrace, settings: &AnalysisSettings) -> Result<(SpectralFeatures, Spectrum)> {
    let spectrum = settings.welch.estimate(trace)?;
    let mut notes = Vec::new();
    let y_intercept = match spectral_y_intercept(&spectrum, settings.peak_prominence) {
        Ok(v) => Some(v),
        Err(Error::FeatureUnavailable(m)) => {
            notes.push(m);
            None
        }
        Err(e) => return Err(e),
    };
    let arrival = match arrival_time(trace) {
        Ok(v) => Some(v),
        Err(Error::FeatureUnavailable(m)) => {
            notes.push(m);
            None
        }
        Err(e) => return Err(e),
    };
    let features = SpectralFeatures {
        ppp: peak_to_peak(trace),
        band_power: band_power(&spectrum, settings.band.0, settings.band.1)?,
        high_band_integral: high_band_integral(&spectrum, settings.high_band.0, settings.high_band.1)?,
        y_intercept,
        arrival_time: arrival,
        welch_segment_length: spectrum.segment_length,
        welch_overlap: spectrum.overlap,
        welch_window: spectrum.window,
        welch_nfft: spectrum.nfft,
        notes,
    };
    Ok((features, spectrum))
}

#[cfg(test)]
mod tests;
