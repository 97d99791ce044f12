//! Fluorescence readout: photon-count histograms and maximum-likelihood
//! estimation of P↓ from a two-component mixture.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA_BRIGHT: f64 = 30.0;
pub const DEFAULT_LAMBDA_DARK: f64 = 2.0;
pub const DEFAULT_WINDOW: f64 = 200e-6;
pub const DEFAULT_SHOTS: usize = 200;

/// SplitMix64 finalizer; derives independent per-point seeds from a run seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Photon-count frequency table; `counts[k]` shots saw k photons.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CountHistogram {
    counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct HistogramRecord {
    total_shots: u64,
    counts: Vec<u64>,
}

impl Serialize for CountHistogram {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HistogramRecord {
            total_shots: self.total(),
            counts: self.counts.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CountHistogram {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = HistogramRecord::deserialize(d)?;
        let hist = CountHistogram::new(rec.counts);
        if hist.total() != rec.total_shots {
            return Err(serde::de::Error::custom(format!(
                "counts sum to {} but total_shots is {}",
                hist.total(),
                rec.total_shots
            )));
        }
        Ok(hist)
    }
}

impl CountHistogram {
    pub fn new(mut counts: Vec<u64>) -> Self {
        while counts.last() == Some(&0) {
            counts.pop();
        }
        Self { counts }
    }

    pub fn from_samples(samples: &[u64]) -> Self {
        let mut counts = Vec::new();
        for &k in samples {
            let k = k as usize;
            if k >= counts.len() {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        }
        Self { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of bins up to the largest occupied one.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn get(&self, k: usize) -> u64 {
        self.counts.get(k).copied().unwrap_or(0)
    }

    pub fn mean(&self) -> f64 {
        let weighted: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| k as f64 * c as f64)
            .sum();
        weighted / self.total() as f64
    }

    /// Bin-wise sum of two histograms.
    pub fn merged(&self, other: &CountHistogram) -> CountHistogram {
        let len = self.len().max(other.len());
        CountHistogram::new((0..len).map(|k| self.get(k) + other.get(k)).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{k},{c}");
        }
        out
    }

    /// Parses `bin,count` rows; the header line is optional and bins may be
    /// listed in any order.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut counts: Vec<u64> = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (line_no == 0 && line.starts_with("bin")) {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let parse = |f: Option<&str>| -> Result<u64> {
                f.and_then(|v| v.parse().ok()).ok_or_else(|| {
                    Error::Config(format!("bad histogram row {}: '{line}'", line_no + 1))
                })
            };
            let bin = parse(fields.next())? as usize;
            let count = parse(fields.next())?;
            if bin >= counts.len() {
                counts.resize(bin + 1, 0);
            }
            counts[bin] += count;
        }
        Ok(Self::new(counts))
    }
}

/// Poisson photon-count means for the bright (|↓⟩) and dark (|↑⟩) states.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub lambda_bright: f64,
    pub lambda_dark: f64,
    /// Detection window in seconds; informational.
    pub window: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            lambda_bright: DEFAULT_LAMBDA_BRIGHT,
            lambda_dark: DEFAULT_LAMBDA_DARK,
            window: DEFAULT_WINDOW,
        }
    }
}

impl DetectorModel {
    pub fn new(lambda_bright: f64, lambda_dark: f64) -> Result<Self> {
        let det = Self {
            lambda_bright,
            lambda_dark,
            window: DEFAULT_WINDOW,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_bright == self.lambda_dark {
            return Err(Error::Unidentifiable(format!(
                "bright and dark means are both {}",
                self.lambda_bright
            )));
        }
        if !(self.lambda_dark >= 0.0
            && self.lambda_bright > self.lambda_dark
            && self.lambda_bright.is_finite())
        {
            return Err(Error::Config(format!(
                "need lambda_bright > lambda_dark ≥ 0, got {} and {}",
                self.lambda_bright, self.lambda_dark
            )));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, bright: bool, rng: &mut R) -> u64 {
        let lambda = if bright {
            self.lambda_bright
        } else {
            self.lambda_dark
        };
        if lambda == 0.0 {
            return 0;
        }
        Poisson::new(lambda)
            .expect("positive finite mean")
            .sample(rng) as u64
    }
}

/// ln of the Poisson pmf.
pub fn ln_poisson(lambda: f64, k: usize) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let ln_fact: f64 = (2..=k).map(|j| (j as f64).ln()).sum();
    k as f64 * lambda.ln() - lambda - ln_fact
}

/// Shots are bright with probability `p_down`, then Poisson-distributed.
pub fn simulate_histogram(
    p_down: f64,
    shots: usize,
    det: &DetectorModel,
    seed: u64,
) -> Result<CountHistogram> {
    if !(0.0..=1.0).contains(&p_down) {
        return Err(Error::Domain(format!(
            "probability {p_down} outside [0, 1]"
        )));
    }
    if shots == 0 {
        return Err(Error::Config("shots must be ≥ 1".into()));
    }
    det.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<u64> = (0..shots)
        .map(|_| {
            let bright = rng.random::<f64>() < p_down;
            det.sample(bright, &mut rng)
        })
        .collect();
    Ok(CountHistogram::from_samples(&samples))
}

/// P↓ estimate with its 1σ uncertainty.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p_down: f64,
    pub sigma: f64,
}

/// Per-bin bright and dark log-likelihoods, covering at least every occupied
/// bin of the histogram being fitted.
struct Components {
    ln_bright: Vec<f64>,
    ln_dark: Vec<f64>,
}

impl Components {
    fn poisson(det: &DetectorModel, width: usize) -> Self {
        let k_max = (det.lambda_bright + 20.0 * det.lambda_bright.sqrt() + 20.0).ceil() as usize;
        let width = width.max(k_max + 1);
        Self {
            ln_bright: (0..width)
                .map(|k| ln_poisson(det.lambda_bright, k))
                .collect(),
            ln_dark: (0..width).map(|k| ln_poisson(det.lambda_dark, k)).collect(),
        }
    }

    /// r = f_b/(f_b + f_d) from the log ratio, finite even where both underflow.
    fn bright_share(&self, k: usize) -> f64 {
        let log_ratio = self.ln_bright[k] - self.ln_dark[k];
        1.0 / (1.0 + (-log_ratio).exp())
    }

    fn expected_info(&self, p: f64) -> f64 {
        self.ln_bright
            .iter()
            .zip(&self.ln_dark)
            .map(|(&lb, &ld)| {
                let (fb, fd) = (lb.exp(), ld.exp());
                let mix = p * fb + (1.0 - p) * fd;
                if mix > 0.0 {
                    (fb - fd).powi(2) / mix
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// ML for p in p·f_b + (1 − p)·f_d. σ uses the expected information
    /// evaluated half a shot inside [0, 1] when the estimate sits on a
    /// boundary; observed information alone collapses to 1/√N there.
    fn fit(&self, hist: &CountHistogram) -> Estimate {
        let bins: Vec<(f64, f64)> = hist
            .counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (c as f64, self.bright_share(k)))
            .collect();
        let shots = hist.total() as f64;
        let score = |p: f64| -> f64 {
            bins.iter()
                .map(|&(n, r)| {
                    let mix = p * r + (1.0 - p) * (1.0 - r);
                    if mix == 0.0 {
                        // impossible bin at p: infinite pull toward the other side
                        if r > 0.5 {
                            f64::INFINITY
                        } else {
                            f64::NEG_INFINITY
                        }
                    } else {
                        n * (2.0 * r - 1.0) / mix
                    }
                })
                .sum()
        };
        let curvature = |p: f64| -> f64 {
            bins.iter()
                .map(|&(n, r)| {
                    let mix = p * r + (1.0 - p) * (1.0 - r);
                    n * (2.0 * r - 1.0).powi(2) / (mix * mix)
                })
                .sum()
        };
        let p_hat = if score(0.0) <= 0.0 {
            0.0
        } else if score(1.0) >= 0.0 {
            1.0
        } else {
            // score is strictly decreasing: Newton kept inside a shrinking bracket
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            let mut p = 0.5;
            for _ in 0..200 {
                let s = score(p);
                if s > 0.0 {
                    lo = p;
                } else {
                    hi = p;
                }
                let newton = p + s / curvature(p);
                let next = if newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
                let done = (next - p).abs() < 1e-13 || hi - lo < 1e-13;
                p = next;
                if done {
                    break;
                }
            }
            p
        };
        let edge = 0.5 / shots;
        let p_eval = p_hat.clamp(edge, 1.0 - edge);
        Estimate {
            p_down: p_hat,
            sigma: 1.0 / (shots * self.expected_info(p_eval)).sqrt(),
        }
    }
}

/// Parametric ML estimate of P↓ from the detector's Poisson means.
pub fn estimate_p_down(hist: &CountHistogram, det: &DetectorModel) -> Result<Estimate> {
    det.validate()?;
    if hist.is_empty() {
        return Err(Error::Config("empty histogram".into()));
    }
    Ok(Components::poisson(det, hist.len()).fit(hist))
}

/// ML estimate against empirical bright/dark reference histograms, smoothed
/// with a total pseudocount of one shot over the bins spanned by all three.
pub fn estimate_from_references(
    hist: &CountHistogram,
    ref_bright: &CountHistogram,
    ref_dark: &CountHistogram,
) -> Result<Estimate> {
    if ref_bright.is_empty() || ref_dark.is_empty() {
        return Err(Error::Config("empty reference histogram".into()));
    }
    if hist.is_empty() {
        return Err(Error::Config("empty histogram".into()));
    }
    let overlaps = hist
        .counts()
        .iter()
        .enumerate()
        .any(|(k, &c)| c > 0 && (ref_bright.get(k) > 0 || ref_dark.get(k) > 0));
    if !overlaps {
        return Err(Error::Unidentifiable(
            "histogram shares no bins with either reference".into(),
        ));
    }
    let width = hist.len().max(ref_bright.len()).max(ref_dark.len());
    // one pseudo-shot spread over the bins: empty bins stay possible, and
    // the occupied bins barely move
    let alpha = 1.0 / width as f64;
    let smoothed = |h: &CountHistogram| -> Vec<f64> {
        let norm = h.total() as f64 + 1.0;
        (0..width)
            .map(|k| ((h.get(k) as f64 + alpha) / norm).ln())
            .collect()
    };
    let parts = Components {
        ln_bright: smoothed(ref_bright),
        ln_dark: smoothed(ref_dark),
    };
    if parts.ln_bright == parts.ln_dark {
        return Err(Error::Unidentifiable(
            "reference histograms are identical".into(),
        ));
    }
    Ok(parts.fit(hist))
}

/// Expected-information σ of the parametric estimator at true `p_down`.
pub fn fisher_sigma(p_down: f64, shots: usize, det: &DetectorModel) -> f64 {
    1.0 / (shots as f64 * Components::poisson(det, 0).expected_info(p_down)).sqrt()
}

/// Simulates a histogram at the state's P↓ and estimates it back.
pub fn measure(p_down: f64, shots: usize, det: &DetectorModel, seed: u64) -> Result<Estimate> {
    estimate_p_down(&simulate_histogram(p_down, shots, det, seed)?, det)
}
