//! End-to-end experiments (prep, gate, readout) and the curve fits used to
//! analyse them.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingModel;
use crate::error::{Error, Result};
use crate::pulses::{self, NoiseConfig, PulseSpec, Recipe};
use crate::readout::{self, DetectorModel};
use crate::state::IonState;

/// Ideal P↓ after the gate for the inputs ↓0, ↑0, ↓2, ↑2.
pub const IDEAL_TRUTH_TABLE: [f64; 4] = [1.0, 0.0, 0.0, 1.0];

/// How P↓ is obtained from a final state.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Readout {
    /// Exact P↓ with zero uncertainty.
    Bypass,
    /// Simulated fluorescence histogram followed by the ML estimator; point
    /// `i` uses the seed `derive_seed(seed, i)`.
    Simulated {
        detector: DetectorModel,
        shots: usize,
        seed: u64,
    },
}

impl Readout {
    pub fn simulated(detector: DetectorModel, shots: usize, seed: u64) -> Self {
        Readout::Simulated {
            detector,
            shots,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Readout::Bypass => Ok(()),
            Readout::Simulated {
                detector, shots, ..
            } => {
                if *shots == 0 {
                    return Err(Error::Config("shots must be ≥ 1".into()));
                }
                detector.validate()
            }
        }
    }

    pub fn read(&self, state: &IonState, index: u64) -> Result<(f64, f64)> {
        let p = state.p_down();
        match self {
            Readout::Bypass => Ok((p, 0.0)),
            Readout::Simulated {
                detector,
                shots,
                seed,
            } => {
                let est =
                    readout::measure(p, *shots, detector, readout::derive_seed(*seed, index))?;
                Ok((est.p_down, est.sigma))
            }
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub x: f64,
    pub p_down: f64,
    pub sigma: f64,
}

/// Measured P↓ against a scanned time (s) or phase (rad).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ScanPoint>", into = "Vec<ScanPoint>")]
pub struct ScanCurve {
    points: Vec<ScanPoint>,
}

impl TryFrom<Vec<ScanPoint>> for ScanCurve {
    type Error = Error;

    fn try_from(points: Vec<ScanPoint>) -> Result<Self> {
        ScanCurve::new(points)
    }
}

impl From<ScanCurve> for Vec<ScanPoint> {
    fn from(curve: ScanCurve) -> Self {
        curve.points
    }
}

impl ScanCurve {
    pub fn new(points: Vec<ScanPoint>) -> Result<Self> {
        if points
            .windows(2)
            .any(|w| w[0].x.partial_cmp(&w[1].x) != Some(Ordering::Less))
        {
            return Err(Error::Config(
                "scan abscissae must be strictly increasing".into(),
            ));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(0.0..=1.0).contains(&p.p_down) || p.sigma.is_nan() || p.sigma < 0.0)
        {
            return Err(Error::Domain(format!("bad scan point {p:?}")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ScanPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.p_down).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,p_down,sigma\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.x, p.p_down, p.sigma);
        }
        out
    }

    /// Least-squares weights 1/σ², or all ones when any σ is zero.
    fn weights(&self) -> Vec<f64> {
        if self.points.iter().all(|p| p.sigma > 0.0) {
            self.points
                .iter()
                .map(|p| 1.0 / (p.sigma * p.sigma))
                .collect()
        } else {
            vec![1.0; self.points.len()]
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BTreeMap<String, Param>,
    /// Weighted residual sum of squares.
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<Param> {
        self.params.get(name).copied()
    }

    pub fn value(&self, name: &str) -> f64 {
        self.params.get(name).map_or(f64::NAN, |p| p.value)
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.params.get(name).map_or(f64::NAN, |p| p.sigma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub input: String,
    pub p_down: f64,
    pub sigma: f64,
}

fn scan<F>(xs: &[f64], readout: &Readout, evolve: F) -> Result<ScanCurve>
where
    F: Fn(f64) -> Result<IonState> + Sync,
{
    readout.validate()?;
    let points = xs
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let (p_down, sigma) = readout.read(&evolve(x)?, i as u64)?;
            Ok(ScanPoint { x, p_down, sigma })
        })
        .collect::<Result<Vec<_>>>()?;
    ScanCurve::new(points)
}

/// Each basis input prepared with `noise.prep_error`, sent through the gate
/// (spin coherences dephase over the gate time) and read out.
pub fn run_truth_table(
    model: &CouplingModel,
    noise: &NoiseConfig,
    readout: &Readout,
) -> Result<Vec<TruthRow>> {
    noise.validate()?;
    readout.validate()?;
    Recipe::BASIS
        .par_iter()
        .enumerate()
        .map(|(i, &recipe)| {
            let gated = pulses::cnot(&pulses::prep(recipe, model, noise)?, model)?;
            let out = pulses::apply_contrast_decay(&gated, model.gate_time(), noise);
            let (p_down, sigma) = readout.read(&out, i as u64)?;
            Ok(TruthRow {
                input: recipe.to_string(),
                p_down,
                sigma,
            })
        })
        .collect()
}

/// Carrier drive of (|↓0⟩ − i|↑2⟩)/√2 for each duration in `times`.
pub fn run_rabi_scan(
    model: &CouplingModel,
    noise: &NoiseConfig,
    readout: &Readout,
    times: &[f64],
) -> Result<ScanCurve> {
    noise.validate()?;
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::Config(format!("bad drive time {t}")));
    }
    let start = pulses::prep(Recipe::ScanSuperposition, model, noise)?;
    scan(times, readout, |t| {
        pulses::drive(&start, &PulseSpec::carrier(t)?, model, noise)
    })
}

/// Interferometric phase scan: phase-state(φ), gate, then a π/2 analysis
/// pulse (phase 0) on the second blue sideband. With `coherent = false` all
/// motional coherences are removed after the gate.
pub fn run_fringe_scan(
    model: &CouplingModel,
    noise: &NoiseConfig,
    readout: &Readout,
    phases: &[f64],
    coherent: bool,
) -> Result<ScanCurve> {
    noise.validate()?;
    let analysis = pulses::area_pulse(model, 2, FRAC_PI_2, 0.0, 0)?;
    scan(phases, readout, |phi| {
        let gated = pulses::cnot(&pulses::prep(Recipe::PhaseState(phi), model, noise)?, model)?;
        let mut out = pulses::apply_contrast_decay(&gated, model.gate_time(), noise);
        if !coherent {
            out = out.motion_dephased();
        }
        pulses::apply_pulse(&out, &analysis, model)
    })
}

/// `count` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// `count` phases covering one period, [0, 2π).
pub fn phase_grid(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| 2.0 * PI * i as f64 / count as f64)
        .collect()
}

/// P(t) = c + e^{−t/τ}[a·cos(2Ω₁t) + b·cos(2Ω₂t)].
pub fn double_sine_decay(
    t: f64,
    c: f64,
    a: f64,
    b: f64,
    omega_1: f64,
    omega_2: f64,
    tau: f64,
) -> f64 {
    c + (-t / tau).exp() * (a * (2.0 * omega_1 * t).cos() + b * (2.0 * omega_2 * t).cos())
}

const MIN_DOUBLE_SINE_POINTS: usize = 30;
const MAX_LM_ITERATIONS: usize = 500;
/// Largest |cos| between the residual and any scaled Jacobian column at a
/// converged optimum.
const GRADIENT_TOL: f64 = 1e-7;
/// A second spectral peak weaker than this fraction of the first counts as absent.
const SECOND_PEAK_FRACTION: f64 = 0.1;

/// Model and Jacobian in scaled time u = t/T, θ = (c, a, b, w₁, w₂, g).
fn dsd_eval(theta: &[f64; 6], u: f64) -> (f64, [f64; 6]) {
    let [c, a, b, w1, w2, g] = *theta;
    let env = (-g * u).exp();
    let (s1, c1) = (2.0 * w1 * u).sin_cos();
    let (s2, c2) = (2.0 * w2 * u).sin_cos();
    let osc = a * c1 + b * c2;
    let value = c + env * osc;
    let jac = [
        1.0,
        env * c1,
        env * c2,
        -env * a * s1 * 2.0 * u,
        -env * b * s2 * 2.0 * u,
        -u * env * osc,
    ];
    (value, jac)
}

fn weighted_rss(theta: &[f64; 6], u: &[f64], y: &[f64], w: &[f64]) -> f64 {
    u.iter()
        .zip(y)
        .zip(w)
        .map(|((&u, &y), &w)| w * (y - dsd_eval(theta, u).0).powi(2))
        .sum()
}

/// Angular frequencies ν of the two strongest local maxima of the
/// mean-subtracted periodogram, strongest first, with their powers.
fn periodogram_peaks(u: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut du: Vec<f64> = u.windows(2).map(|w| w[1] - w[0]).collect();
    du.sort_by(f64::total_cmp);
    let nyquist = PI / du[du.len() / 2];
    let step = 2.0 * PI / 16.0;
    let grid: Vec<f64> = (1..)
        .map(|i| i as f64 * step)
        .take_while(|&nu| nu < nyquist)
        .collect();
    let power: Vec<f64> = grid
        .iter()
        .map(|&nu| {
            let (re, im) = u.iter().zip(y).fold((0.0, 0.0), |(re, im), (&u, &y)| {
                let (s, c) = (nu * u).sin_cos();
                (re + (y - mean) * c, im + (y - mean) * s)
            });
            re * re + im * im
        })
        .collect();
    let mut peaks: Vec<(f64, f64)> = (1..power.len().saturating_sub(1))
        .filter(|&i| power[i] > power[i - 1] && power[i] >= power[i + 1])
        .map(|i| (grid[i], power[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks.truncate(2);
    peaks
}

/// Best (c, a, b) for fixed frequencies and decay, with its rss.
fn linear_amplitudes(
    w1: f64,
    w2: f64,
    g: f64,
    u: &[f64],
    y: &[f64],
    w: &[f64],
) -> Option<([f64; 6], f64)> {
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for ((&u, &y), &wt) in u.iter().zip(y).zip(w) {
        let env = (-g * u).exp();
        let row = Vector3::new(1.0, env * (2.0 * w1 * u).cos(), env * (2.0 * w2 * u).cos());
        ata += row * row.transpose() * wt;
        aty += row * (y * wt);
    }
    let sol = ata.try_inverse()? * aty;
    let theta = [sol[0], sol[1], sol[2], w1, w2, g];
    Some((theta, weighted_rss(&theta, u, y, w)))
}

/// Weighted fit of `c + e^{−t/τ}[a·cos(2Ω₁t) + b·cos(2Ω₂t)]`, Ω₁ > Ω₂,
/// started from the two strongest periodogram peaks. Reports c, a, b,
/// omega_1, omega_2 (rad/s), tau (s) and ratio = Ω₁/Ω₂; σ from the
/// covariance scaled by the reduced χ².
pub fn fit_double_sine_decay(curve: &ScanCurve) -> Result<FitResult> {
    let n = curve.len();
    if n < MIN_DOUBLE_SINE_POINTS {
        return Err(Error::Fit(format!(
            "need ≥ {MIN_DOUBLE_SINE_POINTS} points, got {n}"
        )));
    }
    let span = curve.points()[n - 1].x;
    if span.is_nan() || span <= 0.0 {
        return Err(Error::Fit("scan must extend to positive times".into()));
    }
    let u: Vec<f64> = curve.xs().iter().map(|t| t / span).collect();
    let y = curve.ys();
    let w = curve.weights();

    let peaks = periodogram_peaks(&u, &y);
    if peaks.len() < 2 || peaks[1].1 < SECOND_PEAK_FRACTION * peaks[0].1 {
        return Err(Error::Fit(format!(
            "single frequency component: spectral peaks {:?}",
            peaks.iter().map(|p| p.0 / (2.0 * span)).collect::<Vec<_>>()
        )));
    }
    let (hi, lo) = (
        peaks[0].0.max(peaks[1].0) / 2.0,
        peaks[0].0.min(peaks[1].0) / 2.0,
    );

    let mut theta = [0.0, 0.0, 0.0, hi, lo, 0.0];
    let mut rss = f64::INFINITY;
    for g in [0.0, 0.3, 1.0, 3.0] {
        if let Some((cand, r)) = linear_amplitudes(hi, lo, g, &u, &y, &w) {
            if r < rss {
                theta = cand;
                rss = r;
            }
        }
    }
    if !rss.is_finite() {
        return Err(Error::Fit(
            "singular amplitude system at initialization".into(),
        ));
    }

    let normal = |theta: &[f64; 6]| -> (DMatrix<f64>, DVector<f64>) {
        let mut jtj = DMatrix::zeros(6, 6);
        let mut jtr = DVector::zeros(6);
        for ((&u, &y), &wt) in u.iter().zip(&y).zip(&w) {
            let (v, jac) = dsd_eval(theta, u);
            let j = DVector::from_row_slice(&jac);
            jtj += &j * j.transpose() * wt;
            jtr += j * ((y - v) * wt);
        }
        (jtj, jtr)
    };
    let gradient_cos = |jtj: &DMatrix<f64>, jtr: &DVector<f64>, rss: f64| -> f64 {
        if rss < 1e-28 {
            return 0.0;
        }
        (0..6)
            .map(|i| jtr[i].abs() / (jtj[(i, i)] * rss).sqrt())
            .fold(0.0, f64::max)
    };

    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_LM_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal(&theta);
        if gradient_cos(&jtj, &jtr, rss) < GRADIENT_TOL {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for i in 0..6 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            if let Some(step) = damped.cholesky().map(|ch| ch.solve(&jtr)) {
                let mut trial = theta;
                for i in 0..6 {
                    trial[i] += step[i];
                }
                let trial_rss = weighted_rss(&trial, &u, &y, &w);
                if trial_rss < rss {
                    let small = (0..6).all(|i| step[i].abs() <= 1e-14 * (1.0 + theta[i].abs()));
                    theta = trial;
                    rss = trial_rss;
                    lambda = (lambda * 0.3).max(1e-12);
                    accepted = true;
                    if small {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no downhill step at any damping: accept only if the gradient test passes
            let (jtj, jtr) = normal(&theta);
            converged = gradient_cos(&jtj, &jtr, rss) < 1e3 * GRADIENT_TOL;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "no convergence after {iterations} iterations (rss {rss:.4e}, θ = {theta:?})"
        )));
    }

    // label the faster component Ω₁
    if theta[4] > theta[3] {
        theta.swap(3, 4);
        theta.swap(1, 2);
    }
    let (jtj, _) = normal(&theta);
    let dof = n.saturating_sub(6).max(1) as f64;
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular curvature at the optimum".into()))?
        * (rss / dof);
    let sd = |i: usize| cov[(i, i)].max(0.0).sqrt();

    let [c, a, b, w1, w2, g] = theta;
    let mut params = BTreeMap::new();
    let mut put = |name: &str, value: f64, sigma: f64| {
        params.insert(name.to_string(), Param { value, sigma });
    };
    put("c", c, sd(0));
    put("a", a, sd(1));
    put("b", b, sd(2));
    put("omega_1", w1 / span, sd(3) / span);
    put("omega_2", w2 / span, sd(4) / span);
    if g > 0.0 {
        put("tau", span / g, span * sd(5) / (g * g));
    } else {
        put("tau", f64::INFINITY, f64::INFINITY);
    }
    let ratio = w1 / w2;
    let rel_var = cov[(3, 3)] / (w1 * w1) + cov[(4, 4)] / (w2 * w2) - 2.0 * cov[(3, 4)] / (w1 * w2);
    put("ratio", ratio, ratio * rel_var.max(0.0).sqrt());
    Ok(FitResult {
        params,
        rss,
        converged,
        iterations,
    })
}

/// Closed-form fit of P(φ) = c + (C/2)·cos(φ − φ₀) through the linear form
/// c + A·cos φ + B·sin φ. Contrast is reported clamped to [0, 1].
pub fn fit_fringe(curve: &ScanCurve) -> Result<FitResult> {
    let w = curve.weights();
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    let rows: Vec<Vector3<f64>> = curve
        .xs()
        .iter()
        .map(|&phi| Vector3::new(1.0, phi.cos(), phi.sin()))
        .collect();
    for ((row, y), &wt) in rows.iter().zip(curve.ys()).zip(&w) {
        ata += row * row.transpose() * wt;
        aty += row * (y * wt);
    }
    let inv = ata
        .try_inverse()
        .ok_or_else(|| Error::Fit(format!("{} phases do not determine a fringe", curve.len())))?;
    let sol = inv * aty;
    let rss: f64 = rows
        .iter()
        .zip(curve.ys())
        .zip(&w)
        .map(|((row, y), &wt)| wt * (y - row.dot(&sol)).powi(2))
        .sum();
    let dof = curve.len().saturating_sub(3).max(1) as f64;
    let cov = inv * (rss / dof);

    let (c, a, b) = (sol[0], sol[1], sol[2]);
    let r = a.hypot(b);
    let (sigma_r, sigma_phi) = if r > 0.0 {
        let var_r =
            (a * a * cov[(1, 1)] + b * b * cov[(2, 2)] + 2.0 * a * b * cov[(1, 2)]) / (r * r);
        let var_phi =
            (b * b * cov[(1, 1)] + a * a * cov[(2, 2)] - 2.0 * a * b * cov[(1, 2)]) / r.powi(4);
        (var_r.max(0.0).sqrt(), var_phi.max(0.0).sqrt())
    } else {
        (0.5 * (cov[(1, 1)] + cov[(2, 2)]).max(0.0).sqrt(), PI)
    };
    let mut params = BTreeMap::new();
    params.insert(
        "c".to_string(),
        Param {
            value: c,
            sigma: cov[(0, 0)].max(0.0).sqrt(),
        },
    );
    params.insert(
        "contrast".to_string(),
        Param {
            value: (2.0 * r).min(1.0),
            sigma: 2.0 * sigma_r,
        },
    );
    params.insert(
        "phi0".to_string(),
        Param {
            value: b.atan2(a),
            sigma: sigma_phi,
        },
    );
    Ok(FitResult {
        params,
        rss,
        converged: true,
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::CNOT_RATIO;
    use std::f64::consts::TAU;

    fn model() -> CouplingModel {
        CouplingModel::from_ratio(CNOT_RATIO, TAU * 3.4e6, TAU * 92e3, 20).unwrap()
    }

    #[test]
    fn ideal_truth_table() {
        let rows = run_truth_table(&model(), &NoiseConfig::ideal(), &Readout::Bypass).unwrap();
        let labels: Vec<&str> = rows.iter().map(|r| r.input.as_str()).collect();
        assert_eq!(labels, ["down0", "up0", "down2", "up2"]);
        for (row, ideal) in rows.iter().zip(IDEAL_TRUTH_TABLE) {
            assert!((row.p_down - ideal).abs() < 1e-12, "{row:?}");
            assert_eq!(row.sigma, 0.0);
        }
    }

    #[test]
    fn rabi_scan_closed_forms() {
        let m = model();
        let times = linspace(0.0, 150e-6, 151);
        let (w0, w2) = (m.carrier(0), m.carrier(2));
        let ideal = run_rabi_scan(&m, &NoiseConfig::ideal(), &Readout::Bypass, &times).unwrap();
        for p in ideal.points() {
            let want = 0.5 * ((w0 * p.x).cos().powi(2) + (w2 * p.x).sin().powi(2));
            assert!((p.p_down - want).abs() < 1e-12);
        }
        let noise = NoiseConfig::new(170e-6, 0.0).unwrap();
        let decayed = run_rabi_scan(&m, &noise, &Readout::Bypass, &times).unwrap();
        for p in decayed.points() {
            let want = 0.5
                + 0.25 * (-p.x / 170e-6).exp() * ((2.0 * w0 * p.x).cos() - (2.0 * w2 * p.x).cos());
            assert!((p.p_down - want).abs() < 1e-12);
        }
        assert!((ideal.points()[0].p_down - 0.5).abs() < 1e-15);
        let at_gate = run_rabi_scan(
            &m,
            &NoiseConfig::ideal(),
            &Readout::Bypass,
            &[m.gate_time()],
        )
        .unwrap();
        assert!((at_gate.points()[0].p_down - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fringe_contrasts() {
        let m = model();
        let phases = phase_grid(24);
        let ideal = NoiseConfig::ideal();
        let coherent = run_fringe_scan(&m, &ideal, &Readout::Bypass, &phases, true).unwrap();
        let fit = fit_fringe(&coherent).unwrap();
        assert!((fit.value("contrast") - 1.0).abs() < 1e-10);
        assert!((fit.value("c") - 0.5).abs() < 1e-10);
        for p in coherent.points() {
            let want = 0.5 * (1.0 + (p.x - fit.value("phi0")).cos());
            assert!((p.p_down - want).abs() < 1e-10);
        }
        let flat = run_fringe_scan(&m, &ideal, &Readout::Bypass, &phases, false).unwrap();
        assert!(flat.points().iter().all(|p| (p.p_down - 0.5).abs() < 1e-12));
        assert!(fit_fringe(&flat).unwrap().value("contrast") < 1e-12);

        let noisy = NoiseConfig::new(170e-6, 0.04).unwrap();
        let c = fit_fringe(&run_fringe_scan(&m, &noisy, &Readout::Bypass, &phases, true).unwrap())
            .unwrap();
        assert!(
            c.value("contrast") > 0.5 && c.value("contrast") < 1.0,
            "{c:?}"
        );
    }

    #[test]
    fn double_sine_self_consistency() {
        let (w1, w2, tau) = (TAU * 92e3, TAU * 92e3 / 1.295, 170e-6);
        let points = linspace(0.0, 150e-6, 151)
            .into_iter()
            .map(|t| ScanPoint {
                x: t,
                p_down: double_sine_decay(t, 0.5, 0.25, -0.25, w1, w2, tau),
                sigma: 0.0,
            })
            .collect();
        let fit = fit_double_sine_decay(&ScanCurve::new(points).unwrap()).unwrap();
        for (name, want) in [
            ("c", 0.5),
            ("a", 0.25),
            ("b", -0.25),
            ("omega_1", w1),
            ("omega_2", w2),
            ("tau", tau),
            ("ratio", 1.295),
        ] {
            let got = fit.value(name);
            assert!(
                ((got - want) / want).abs() < 1e-6,
                "{name}: {got} vs {want}"
            );
        }
        assert!(fit.converged);
    }

    #[test]
    fn double_sine_on_gate_ratio() {
        let m = model();
        let noise = NoiseConfig::new(170e-6, 0.0).unwrap();
        let curve =
            run_rabi_scan(&m, &noise, &Readout::Bypass, &linspace(0.0, 150e-6, 151)).unwrap();
        let fit = fit_double_sine_decay(&curve).unwrap();
        assert!((fit.value("ratio") - CNOT_RATIO).abs() < 1e-6);
        assert!((fit.value("tau") - 170e-6).abs() < 1e-6 * 170e-6);
    }

    #[test]
    fn single_frequency_rejected() {
        let points = linspace(0.0, 150e-6, 151)
            .into_iter()
            .map(|t| ScanPoint {
                x: t,
                p_down: 0.5 + 0.4 * (2.0 * TAU * 80e3 * t).cos(),
                sigma: 0.0,
            })
            .collect();
        assert!(matches!(
            fit_double_sine_decay(&ScanCurve::new(points).unwrap()),
            Err(Error::Fit(_))
        ));
        let few: Vec<ScanPoint> = (0..10)
            .map(|i| ScanPoint {
                x: i as f64,
                p_down: 0.5,
                sigma: 0.0,
            })
            .collect();
        assert!(fit_double_sine_decay(&ScanCurve::new(few).unwrap()).is_err());
    }

    #[test]
    fn simulated_readout_is_seeded() {
        let m = model();
        let readout = Readout::simulated(DetectorModel::default(), 200, 9);
        let times = linspace(0.0, 20e-6, 21);
        let a = run_rabi_scan(&m, &NoiseConfig::ideal(), &readout, &times).unwrap();
        let b = run_rabi_scan(&m, &NoiseConfig::ideal(), &readout, &times).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.points().iter().all(|p| p.sigma > 0.0));
    }

    #[test]
    fn curve_validation() {
        let p = |x| ScanPoint {
            x,
            p_down: 0.5,
            sigma: 0.0,
        };
        assert!(ScanCurve::new(vec![p(1.0), p(1.0)]).is_err());
        assert!(ScanCurve::new(vec![ScanPoint {
            x: 0.0,
            p_down: 1.5,
            sigma: 0.0
        }])
        .is_err());
        let curve = ScanCurve::new(vec![p(0.0), p(1.0)]).unwrap();
        assert_eq!(curve.to_csv(), "x,p_down,sigma\n0,0.5,0\n1,0.5,0\n");
        let json = serde_json::to_string(&curve).unwrap();
        assert_eq!(serde_json::from_str::<ScanCurve>(&json).unwrap(), curve);
        assert!(serde_json::from_str::<ScanCurve>(
            r#"[{"x":1,"p_down":0.5,"sigma":0},{"x":0,"p_down":0.5,"sigma":0}]"#
        )
        .is_err());
    }
}
