//! Small signal-processing helpers shared by the front-end and TSM code.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Symmetric Hann window of length `n`.
pub fn hann_symmetric(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Frequency (Hz) of the strongest spectral component, refined by parabolic
/// interpolation of the log magnitude around the peak bin. The signal is
/// Hann-windowed and zero-padded to at least `min_fft` points.
pub fn dominant_frequency(samples: &[f32], sample_rate: u32, min_fft: usize) -> f64 {
    let n = samples.len();
    let fft_len = n.max(min_fft).next_power_of_two();
    let window = hann_symmetric(n);
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .zip(&window)
        .map(|(&s, &w)| Complex::new(s as f64 * w, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    FftPlanner::new().plan_fft_forward(fft_len).process(&mut buf);

    let half = fft_len / 2;
    let mags: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();
    let (peak, _) = mags
        .iter()
        .enumerate()
        .skip(1)
        .fold((1, f64::MIN), |best, (i, &m)| if m > best.1 { (i, m) } else { best });
    let mut bin = peak as f64;
    if peak > 0 && peak < half {
        let (a, b, c) = (
            mags[peak - 1].max(1e-300).ln(),
            mags[peak].max(1e-300).ln(),
            mags[peak + 1].max(1e-300).ln(),
        );
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-12 {
            bin += 0.5 * (a - c) / denom;
        }
    }
    bin * sample_rate as f64 / fft_len as f64
}

/// Pure sine tone.
pub fn sine(freq: f64, amplitude: f64, n: usize, sample_rate: u32) -> Vec<f32> {
    (0..n)
        .map(|i| (amplitude * (2.0 * PI * freq * i as f64 / sample_rate as f64).sin()) as f32)
        .collect()
}
