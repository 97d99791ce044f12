//! Carrier and sideband Raman pulses, state-preparation recipes and the
//! single-pulse CNOT.
//!
//! A pulse of order Δn couples every pair (|↓,n⟩, |↑,n+Δn⟩) inside the
//! truncated space with rate Ω_{n,n+Δn} and rotates it as
//!
//! ```text
//! c'(↑,n+Δn) = cos(Ωt) c(↑,n+Δn) − i e^{+iφ} sin(Ωt) c(↓,n)
//! c'(↓,n)    = cos(Ωt) c(↓,n)    − i e^{−iφ} sin(Ωt) c(↑,n+Δn)
//! ```
//!
//! Pulse areas follow the "area = 2Ωt" naming: a π-pulse is full transfer
//! (Ωt = π/2) and the gate's Ω_{0,0}t = 2π is a 4π-pulse.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::coupling::{CouplingModel, CNOT_RATIO};
use crate::error::{Error, Result};
use crate::state::{BasisLabel, IonState, Repr, Spin};

/// Largest supported sideband order |Δn|.
pub const MAX_SIDEBAND_ORDER: i32 = 3;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Sideband order: 0 carrier, +k k-th blue, −k k-th red.
    pub delta_n: i32,
    /// Seconds.
    pub duration: f64,
    /// Radians.
    #[serde(default)]
    pub phase: f64,
}

impl PulseSpec {
    pub fn new(delta_n: i32, duration: f64, phase: f64) -> Result<Self> {
        let pulse = Self {
            delta_n,
            duration,
            phase,
        };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn carrier(duration: f64) -> Result<Self> {
        Self::new(0, duration, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_n.abs() > MAX_SIDEBAND_ORDER {
            return Err(Error::Config(format!(
                "sideband order {} exceeds the supported |Δn| ≤ {MAX_SIDEBAND_ORDER}",
                self.delta_n
            )));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!(
                "pulse duration {} must be ≥ 0",
                self.duration
            )));
        }
        if !self.phase.is_finite() {
            return Err(Error::Config("pulse phase must be finite".into()));
        }
        Ok(())
    }
}

/// Parses a JSON list of pulse records.
pub fn pulses_from_json(text: &str) -> Result<Vec<PulseSpec>> {
    let pulses: Vec<PulseSpec> = serde_json::from_str(text)?;
    for p in &pulses {
        p.validate()?;
    }
    Ok(pulses)
}

pub fn pulses_to_json(pulses: &[PulseSpec]) -> Result<String> {
    Ok(serde_json::to_string_pretty(pulses)?)
}

/// Imperfection parameters.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Contrast-decay time constant in seconds; infinite means no decay.
    /// Serialized as `null` when infinite.
    #[serde(serialize_with = "ser_tau", deserialize_with = "de_tau")]
    pub tau: f64,
    /// Probability that state preparation produces the wrong spin.
    pub prep_error: f64,
}

fn ser_tau<S: Serializer>(tau: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if tau.is_finite() {
        s.serialize_some(tau)
    } else {
        s.serialize_none()
    }
}

fn de_tau<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::ideal()
    }
}

impl NoiseConfig {
    pub fn ideal() -> Self {
        Self {
            tau: f64::INFINITY,
            prep_error: 0.0,
        }
    }

    pub fn new(tau: f64, prep_error: f64) -> Result<Self> {
        let noise = Self { tau, prep_error };
        noise.validate()?;
        Ok(noise)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::Config(format!(
                "decay time {} must be positive",
                self.tau
            )));
        }
        if !(0.0..=1.0).contains(&self.prep_error) {
            return Err(Error::Config(format!(
                "prep_error {} outside [0, 1]",
                self.prep_error
            )));
        }
        Ok(())
    }

    /// e^{−elapsed/τ}.
    pub fn decay_factor(&self, elapsed: f64) -> f64 {
        if self.tau.is_infinite() {
            1.0
        } else {
            (-elapsed / self.tau).exp()
        }
    }
}

/// Operator that acts on disjoint index pairs by 2×2 blocks and on the
/// remaining indices by scalars.
struct BlockOp {
    pairs: Vec<(usize, usize, [[C64; 2]; 2])>,
    singles: Vec<(usize, C64)>,
}

impl BlockOp {
    fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut out = v.clone();
        for &(i, j, m) in &self.pairs {
            out[i] = m[0][0] * v[i] + m[0][1] * v[j];
            out[j] = m[1][0] * v[i] + m[1][1] * v[j];
        }
        for &(k, s) in &self.singles {
            out[k] = s * v[k];
        }
        out
    }

    /// U ρ U†.
    fn conjugate(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let dim = rho.nrows();
        let mut left = rho.clone();
        for &(i, j, m) in &self.pairs {
            for c in 0..dim {
                let (a, b) = (rho[(i, c)], rho[(j, c)]);
                left[(i, c)] = m[0][0] * a + m[0][1] * b;
                left[(j, c)] = m[1][0] * a + m[1][1] * b;
            }
        }
        for &(k, s) in &self.singles {
            for c in 0..dim {
                left[(k, c)] = s * rho[(k, c)];
            }
        }
        let mut out = left.clone();
        for &(i, j, m) in &self.pairs {
            for r in 0..dim {
                let (a, b) = (left[(r, i)], left[(r, j)]);
                out[(r, i)] = a * m[0][0].conj() + b * m[0][1].conj();
                out[(r, j)] = a * m[1][0].conj() + b * m[1][1].conj();
            }
        }
        for &(k, s) in &self.singles {
            for r in 0..dim {
                out[(r, k)] = left[(r, k)] * s.conj();
            }
        }
        out
    }

    fn act(&self, state: &IonState) -> IonState {
        let repr = match state.repr() {
            Repr::Pure(v) => Repr::Pure(self.apply(v)),
            Repr::Density(rho) => Repr::Density(self.conjugate(rho)),
        };
        IonState::from_repr_unchecked(state.n_max(), repr)
    }
}

/// The (↓ n, ↑ n+Δn) Fock pairs a sideband of order `delta_n` couples.
pub fn coupled_pairs(n_max: usize, delta_n: i32) -> impl Iterator<Item = (usize, usize)> {
    let shift = delta_n.unsigned_abs() as usize;
    let count = (n_max + 1).saturating_sub(shift);
    (0..count).map(move |k| {
        if delta_n >= 0 {
            (k, k + shift)
        } else {
            (k + shift, k)
        }
    })
}

fn indices(n_max: usize, delta_n: i32) -> Vec<(usize, usize)> {
    coupled_pairs(n_max, delta_n)
        .map(|(n, m)| {
            (
                BasisLabel::down(n).index(n_max),
                BasisLabel::up(m).index(n_max),
            )
        })
        .collect()
}

fn unpaired(n_max: usize, pairs: &[(usize, usize)]) -> Vec<usize> {
    let mut used = vec![false; 2 * (n_max + 1)];
    for &(i, j) in pairs {
        used[i] = true;
        used[j] = true;
    }
    (0..used.len()).filter(|&k| !used[k]).collect()
}

fn pulse_op(pulse: &PulseSpec, model: &CouplingModel) -> BlockOp {
    let n_max = model.n_max();
    let to_up = C64::from_polar(1.0, pulse.phase);
    let minus_i = C64::new(0.0, -1.0);
    let pairs = coupled_pairs(n_max, pulse.delta_n)
        .map(|(n, m)| {
            let theta = model.rabi_unchecked(n, m) * pulse.duration;
            let (s, c) = theta.sin_cos();
            let c = C64::new(c, 0.0);
            let i = BasisLabel::down(n).index(n_max);
            let j = BasisLabel::up(m).index(n_max);
            (
                i,
                j,
                [[c, minus_i * to_up.conj() * s], [minus_i * to_up * s, c]],
            )
        })
        .collect();
    BlockOp {
        pairs,
        singles: Vec::new(),
    }
}

fn check_model(state: &IonState, model: &CouplingModel) -> Result<()> {
    if state.n_max() != model.n_max() {
        return Err(Error::Config(format!(
            "state n_max = {} differs from model n_max = {}",
            state.n_max(),
            model.n_max()
        )));
    }
    Ok(())
}

/// Applies one pulse. Pure states stay pure; density operators are
/// conjugated by the same unitary.
pub fn apply_pulse(state: &IonState, pulse: &PulseSpec, model: &CouplingModel) -> Result<IonState> {
    pulse.validate()?;
    check_model(state, model)?;
    let out = pulse_op(pulse, model).act(state);
    out.check_truncation()?;
    Ok(out)
}

pub fn apply_sequence(
    state: &IonState,
    pulses: &[PulseSpec],
    model: &CouplingModel,
) -> Result<IonState> {
    pulses
        .iter()
        .try_fold(state.clone(), |s, p| apply_pulse(&s, p, model))
}

/// Duration for a pulse of the given area on the pair (↓ `reference_n`,
/// ↑ `reference_n` + Δn), solving Ω_ref·t = area/2.
pub fn area_duration(
    model: &CouplingModel,
    delta_n: i32,
    area: f64,
    reference_n: usize,
) -> Result<f64> {
    if !(area >= 0.0 && area.is_finite()) {
        return Err(Error::Config(format!("pulse area {area} must be ≥ 0")));
    }
    let partner = reference_n as i64 + delta_n as i64;
    if partner < 0 || partner > model.n_max() as i64 || reference_n > model.n_max() {
        return Err(Error::Config(format!(
            "Δn = {delta_n} has no partner level for reference n = {reference_n}"
        )));
    }
    let rate = model.rabi(reference_n, partner as usize)?;
    if area == 0.0 {
        return Ok(0.0);
    }
    if rate == 0.0 {
        return Err(Error::DegeneratePulse {
            delta_n,
            reference_n,
        });
    }
    Ok(area / (2.0 * rate))
}

/// A pulse specified by its nominal area on a reference pair, whose ↓ side
/// is Fock level `reference_n`.
pub fn area_pulse(
    model: &CouplingModel,
    delta_n: i32,
    area: f64,
    phase: f64,
    reference_n: usize,
) -> Result<PulseSpec> {
    PulseSpec::new(
        delta_n,
        area_duration(model, delta_n, area, reference_n)?,
        phase,
    )
}

pub fn apply_area(
    state: &IonState,
    delta_n: i32,
    area: f64,
    phase: f64,
    model: &CouplingModel,
    reference_n: usize,
) -> Result<IonState> {
    apply_pulse(
        state,
        &area_pulse(model, delta_n, area, phase, reference_n)?,
        model,
    )
}

/// The gate pulse: carrier, duration 2π/Ω_{0,0}, phase 0.
pub fn cnot_pulse(model: &CouplingModel) -> PulseSpec {
    PulseSpec {
        delta_n: 0,
        duration: model.gate_time(),
        phase: 0.0,
    }
}

/// Single carrier pulse with Ω_{0,0}t = 2π. At Ω_{0,0}/Ω_{2,2} = 4/3 this maps
/// |↓0⟩→|↓0⟩, |↑0⟩→|↑0⟩, |↓2⟩→i|↑2⟩, |↑2⟩→i|↓2⟩.
pub fn cnot(state: &IonState, model: &CouplingModel) -> Result<IonState> {
    let ratio = model.ratio();
    if (ratio - CNOT_RATIO).abs() > 1e-9 {
        log::warn!("carrier ratio {ratio:.6} differs from 4/3; gate logic will be approximate");
    }
    apply_pulse(state, &cnot_pulse(model), model)
}

/// Gate input preparations starting from |↓0⟩.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Recipe {
    Down0,
    Up0,
    Down2,
    Up2,
    /// (|↓0⟩ − i|↑2⟩)/√2.
    ScanSuperposition,
    /// |↓⟩(|0⟩ − e^{iφ}|2⟩)/√2.
    PhaseState(f64),
}

impl Recipe {
    pub const BASIS: [Recipe; 4] = [Recipe::Down0, Recipe::Up0, Recipe::Down2, Recipe::Up2];

    /// (delta_n, area, phase, reference_n) for each preparation pulse.
    fn steps(self) -> Vec<(i32, f64, f64, usize)> {
        match self {
            Recipe::Down0 => vec![],
            Recipe::Up0 => vec![(0, PI, 0.0, 0)],
            Recipe::Down2 => vec![(1, PI, 0.0, 0), (-1, PI, 0.0, 2)],
            Recipe::Up2 => vec![(2, PI, 0.0, 0)],
            Recipe::ScanSuperposition => vec![(2, FRAC_PI_2, 0.0, 0)],
            Recipe::PhaseState(phi) => vec![(1, FRAC_PI_2, phi, 0), (-1, PI, 0.0, 2)],
        }
    }

    pub fn pulses(self, model: &CouplingModel) -> Result<Vec<PulseSpec>> {
        self.steps()
            .into_iter()
            .map(|(dn, area, phase, r)| area_pulse(model, dn, area, phase, r))
            .collect()
    }

    /// Nominal basis label for the four logic inputs.
    pub fn label(self) -> Option<BasisLabel> {
        match self {
            Recipe::Down0 => Some(BasisLabel::down(0)),
            Recipe::Up0 => Some(BasisLabel::up(0)),
            Recipe::Down2 => Some(BasisLabel::down(2)),
            Recipe::Up2 => Some(BasisLabel::up(2)),
            _ => None,
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::Down0 => write!(f, "down0"),
            Recipe::Up0 => write!(f, "up0"),
            Recipe::Down2 => write!(f, "down2"),
            Recipe::Up2 => write!(f, "up2"),
            Recipe::ScanSuperposition => write!(f, "scan-superposition"),
            Recipe::PhaseState(phi) => write!(f, "phase-state:{phi}"),
        }
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "down0" => Ok(Recipe::Down0),
            "up0" => Ok(Recipe::Up0),
            "down2" => Ok(Recipe::Down2),
            "up2" => Ok(Recipe::Up2),
            "scan-superposition" => Ok(Recipe::ScanSuperposition),
            _ => match s.strip_prefix("phase-state:") {
                Some(phi) => phi
                    .parse::<f64>()
                    .map(Recipe::PhaseState)
                    .map_err(|_| Error::Config(format!("bad phase in recipe '{s}'"))),
                None => Err(Error::Config(format!("unknown preparation recipe '{s}'"))),
            },
        }
    }
}

/// Ideal preparation: the recipe's pulses applied to |↓0⟩.
pub fn prep_ideal(recipe: Recipe, model: &CouplingModel) -> Result<IonState> {
    let start = IonState::basis(BasisLabel::down(0), model.n_max())?;
    apply_sequence(&start, &recipe.pulses(model)?, model)
}

/// Preparation with spin errors: (1 − ε)·ρ_ideal + ε·ρ_flipped. Returns the
/// pure ideal state when ε = 0.
pub fn prep(recipe: Recipe, model: &CouplingModel, noise: &NoiseConfig) -> Result<IonState> {
    noise.validate()?;
    let ideal = prep_ideal(recipe, model)?;
    if noise.prep_error == 0.0 {
        return Ok(ideal);
    }
    let flipped = ideal.spin_flipped();
    IonState::mixture(&[
        (1.0 - noise.prep_error, &ideal),
        (noise.prep_error, &flipped),
    ])
}

/// One sampled preparation: the spin-flipped ideal state with probability ε.
/// Deterministic per seed.
pub fn prep_shot(
    recipe: Recipe,
    model: &CouplingModel,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<IonState> {
    noise.validate()?;
    let ideal = prep_ideal(recipe, model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rng.random::<f64>() < noise.prep_error {
        Ok(ideal.spin_flipped())
    } else {
        Ok(ideal)
    }
}

/// Two-outcome dephasing ρ → ½(1+d)ρ + ½(1−d)GρG for a Hermitian unitary G.
fn dephase(state: &IonState, g: &BlockOp, d: f64) -> IonState {
    let rho = state.density_matrix();
    let flipped = g.conjugate(&rho);
    let p = 0.5 * (1.0 + d);
    let out = rho * C64::new(p, 0.0) + flipped * C64::new(1.0 - p, 0.0);
    IonState::from_repr_unchecked(state.n_max(), Repr::Density(out))
}

fn spin_sign(n_max: usize, k: usize) -> C64 {
    match BasisLabel::from_index(k, n_max).spin {
        Spin::Down => C64::new(-1.0, 0.0),
        Spin::Up => C64::new(1.0, 0.0),
    }
}

/// Multiplies every coherence between different spin labels by e^{−elapsed/τ}.
/// Populations and same-spin coherences are unchanged.
pub fn apply_contrast_decay(state: &IonState, elapsed: f64, noise: &NoiseConfig) -> IonState {
    let d = noise.decay_factor(elapsed);
    if d == 1.0 {
        return state.clone();
    }
    let n_max = state.n_max();
    let singles = (0..state.dim()).map(|k| (k, spin_sign(n_max, k))).collect();
    dephase(
        state,
        &BlockOp {
            pairs: Vec::new(),
            singles,
        },
        d,
    )
}

/// Contrast decay in the eigenbasis of a pulse's drive: on every coupled pair
/// the Bloch components perpendicular to the drive axis shrink by
/// e^{−elapsed/τ}; uncoupled levels dephase as in [`apply_contrast_decay`].
/// This is the loss of Rabi-oscillation contrast from drive-strength noise.
pub fn apply_drive_decay(
    state: &IonState,
    pulse: &PulseSpec,
    elapsed: f64,
    noise: &NoiseConfig,
) -> IonState {
    let d = noise.decay_factor(elapsed);
    if d == 1.0 {
        return state.clone();
    }
    let n_max = state.n_max();
    let pairs = indices(n_max, pulse.delta_n);
    let singles = unpaired(n_max, &pairs)
        .into_iter()
        .map(|k| (k, spin_sign(n_max, k)))
        .collect();
    let axis = C64::from_polar(1.0, pulse.phase);
    let zero = C64::new(0.0, 0.0);
    let pairs = pairs
        .into_iter()
        .map(|(i, j)| (i, j, [[zero, axis.conj()], [axis, zero]]))
        .collect();
    dephase(state, &BlockOp { pairs, singles }, d)
}

/// A pulse followed by drive-frame contrast decay over its duration.
pub fn drive(
    state: &IonState,
    pulse: &PulseSpec,
    model: &CouplingModel,
    noise: &NoiseConfig,
) -> Result<IonState> {
    let out = apply_pulse(state, pulse, model)?;
    Ok(apply_drive_decay(&out, pulse, pulse.duration, noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, TAU};

    fn model() -> CouplingModel {
        CouplingModel::from_ratio(CNOT_RATIO, TAU * 3.4e6, TAU * 92e3, 20).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    fn basis(label: BasisLabel) -> IonState {
        IonState::basis(label, 20).unwrap()
    }

    #[test]
    fn carrier_pi_pulse() {
        let m = model();
        let s = apply_area(&basis(BasisLabel::down(0)), 0, PI, 0.0, &m, 0).unwrap();
        assert!(close(
            s.amplitude(BasisLabel::up(0)).unwrap(),
            c(0.0, -1.0),
            1e-14
        ));
        assert!(s.p_down() < 1e-28);
    }

    #[test]
    fn carrier_four_pi_and_three_pi() {
        let m = model();
        let t = m.gate_time();
        let s = apply_pulse(
            &basis(BasisLabel::down(0)),
            &PulseSpec::carrier(t).unwrap(),
            &m,
        )
        .unwrap();
        assert!(close(
            s.amplitude(BasisLabel::down(0)).unwrap(),
            c(1.0, 0.0),
            1e-14
        ));
        let s = apply_pulse(
            &basis(BasisLabel::down(2)),
            &PulseSpec::carrier(t).unwrap(),
            &m,
        )
        .unwrap();
        assert!(close(
            s.amplitude(BasisLabel::up(2)).unwrap(),
            c(0.0, 1.0),
            1e-14
        ));
    }

    #[test]
    fn sideband_area_pulses() {
        let m = model();
        let s = apply_area(&basis(BasisLabel::down(0)), 2, PI, 0.0, &m, 0).unwrap();
        assert!(close(
            s.amplitude(BasisLabel::up(2)).unwrap(),
            c(0.0, -1.0),
            1e-14
        ));
        assert!(s.p_down() < 1e-28);

        let s = apply_area(&basis(BasisLabel::down(0)), 2, FRAC_PI_2, 0.0, &m, 0).unwrap();
        assert!(close(
            s.amplitude(BasisLabel::down(0)).unwrap(),
            c(FRAC_1_SQRT_2, 0.0),
            1e-14
        ));
        assert!(close(
            s.amplitude(BasisLabel::up(2)).unwrap(),
            c(0.0, -FRAC_1_SQRT_2),
            1e-14
        ));

        let start = basis(BasisLabel::down(3));
        assert_eq!(apply_area(&start, 1, 0.0, 0.0, &m, 0).unwrap(), start);
    }

    #[test]
    fn area_duration_errors() {
        let m = model();
        assert!(matches!(
            area_duration(&m, -1, PI, 0),
            Err(Error::Config(_))
        ));
        assert!(area_duration(&m, 0, -1.0, 0).is_err());
        let dark = CouplingModel::new(10.0, 0.5, 0.0, 20).unwrap();
        assert!(matches!(
            area_duration(&dark, 0, PI, 1),
            Err(Error::DegeneratePulse { .. })
        ));
    }

    #[test]
    fn red_sideband_skips_low_levels() {
        let m = model();
        let s = basis(BasisLabel::down(0));
        let out = apply_area(&s, -2, PI, 0.0, &m, 2).unwrap();
        assert_eq!(out, s);
        let s = basis(BasisLabel::down(1));
        let out = apply_area(&s, -2, PI, 0.0, &m, 2).unwrap();
        assert_eq!(out, s);
        let s = basis(BasisLabel::up(1));
        let out = apply_area(&s, -2, PI, 0.0, &m, 3).unwrap();
        assert!(out.population(BasisLabel::down(3)) > 0.99);
    }

    #[test]
    fn truncation_trips() {
        let m = model();
        let s = basis(BasisLabel::down(17));
        let err = apply_area(&s, 3, PI, 0.0, &m, 17).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn density_matches_pure() {
        let m = model();
        let s = prep_ideal(Recipe::PhaseState(0.7), &m).unwrap();
        let pulse = PulseSpec::new(1, 3.1e-6, 0.4).unwrap();
        let pure = apply_pulse(&s, &pulse, &m).unwrap();
        let mixed = apply_pulse(&s.to_density(), &pulse, &m).unwrap();
        let diff = (pure.density_matrix() - mixed.density_matrix()).camax();
        assert!(diff < 1e-15);
    }

    #[test]
    fn cnot_truth_table() {
        let m = model();
        let out = cnot(&basis(BasisLabel::down(2)), &m).unwrap();
        assert!(out.p_down() < 1e-28);
        let out = cnot(&basis(BasisLabel::up(0)), &m).unwrap();
        assert!(out.p_down() < 1e-28);
        assert!(close(
            out.amplitude(BasisLabel::up(0)).unwrap(),
            c(1.0, 0.0),
            1e-14
        ));
        let out = cnot(&basis(BasisLabel::up(2)), &m).unwrap();
        assert!(close(
            out.amplitude(BasisLabel::down(2)).unwrap(),
            c(0.0, 1.0),
            1e-14
        ));
    }

    #[test]
    fn cnot_on_superposition() {
        let m = model();
        let input = IonState::superposition(
            20,
            &[
                (BasisLabel::down(0), c(1.0, 0.0)),
                (BasisLabel::up(2), c(1.0, 0.0)),
            ],
        )
        .unwrap();
        let out = cnot(&input, &m).unwrap();
        assert!((out.p_down() - 1.0).abs() < 1e-14);
        assert!(close(
            out.amplitude(BasisLabel::down(0)).unwrap(),
            c(FRAC_1_SQRT_2, 0.0),
            1e-14
        ));
        assert!(close(
            out.amplitude(BasisLabel::down(2)).unwrap(),
            c(0.0, FRAC_1_SQRT_2),
            1e-14
        ));
    }

    #[test]
    fn prep_recipes() {
        let m = model();
        let s = prep_ideal(Recipe::Down2, &m).unwrap();
        assert!((s.p_down() - 1.0).abs() < 1e-12);
        assert!((s.fock_population(2) - 1.0).abs() < 1e-12);
        let s = prep_ideal(Recipe::Up0, &m).unwrap();
        assert!((s.population(BasisLabel::up(0)) - 1.0).abs() < 1e-12);
        let s = prep_ideal(Recipe::Up2, &m).unwrap();
        assert!((s.population(BasisLabel::up(2)) - 1.0).abs() < 1e-12);
        let s = prep_ideal(Recipe::ScanSuperposition, &m).unwrap();
        assert!(close(
            s.amplitude(BasisLabel::up(2)).unwrap(),
            c(0.0, -FRAC_1_SQRT_2),
            1e-14
        ));
    }

    #[test]
    fn phase_state_offset_is_pi() {
        let m = model();
        for phi in [0.0, 0.3, 1.9, -2.5] {
            let s = prep_ideal(Recipe::PhaseState(phi), &m).unwrap();
            let a0 = s.amplitude(BasisLabel::down(0)).unwrap();
            let a2 = s.amplitude(BasisLabel::down(2)).unwrap();
            assert!(close(a0, c(FRAC_1_SQRT_2, 0.0), 1e-14));
            assert!(close(a2, C64::from_polar(FRAC_1_SQRT_2, phi + PI), 1e-14));
        }
    }

    #[test]
    fn prep_with_error() {
        let m = model();
        let noise = NoiseConfig::new(f64::INFINITY, 0.04).unwrap();
        let s = prep(Recipe::Up0, &m, &noise).unwrap();
        assert!(!s.is_pure());
        assert!((s.population(BasisLabel::down(0)) - 0.04).abs() < 1e-14);
        s.validate().unwrap();
        assert!(prep(Recipe::Up0, &m, &NoiseConfig::ideal())
            .unwrap()
            .is_pure());
    }

    #[test]
    fn prep_shot_is_seeded() {
        let m = model();
        let noise = NoiseConfig::new(f64::INFINITY, 0.5).unwrap();
        let a: Vec<f64> = (0..20)
            .map(|s| prep_shot(Recipe::Up0, &m, &noise, s).unwrap().p_down())
            .collect();
        let b: Vec<f64> = (0..20)
            .map(|s| prep_shot(Recipe::Up0, &m, &noise, s).unwrap().p_down())
            .collect();
        assert_eq!(a, b);
        assert!(a.iter().any(|&p| p > 0.5) && a.iter().any(|&p| p < 0.5));
    }

    #[test]
    fn recipe_names() {
        for r in [
            Recipe::Down0,
            Recipe::Up0,
            Recipe::Down2,
            Recipe::Up2,
            Recipe::ScanSuperposition,
            Recipe::PhaseState(0.25),
        ] {
            assert_eq!(r.to_string().parse::<Recipe>().unwrap(), r);
        }
        assert!(matches!("up3".parse::<Recipe>(), Err(Error::Config(_))));
    }

    #[test]
    fn contrast_decay_channel() {
        let s = IonState::superposition(
            20,
            &[
                (BasisLabel::down(0), c(1.0, 0.0)),
                (BasisLabel::up(2), c(1.0, 0.0)),
            ],
        )
        .unwrap();
        assert_eq!(apply_contrast_decay(&s, 1e-3, &NoiseConfig::ideal()), s);
        let noise = NoiseConfig::new(170e-6, 0.0).unwrap();
        let out = apply_contrast_decay(&s, 170e-6, &noise);
        let rho = out.density_matrix();
        let (i, j) = (out.index(BasisLabel::down(0)), out.index(BasisLabel::up(2)));
        assert!((rho[(i, j)].norm() - 0.5 * (-1f64).exp()).abs() < 1e-15);
        assert!((rho[(i, i)].re - 0.5).abs() < 1e-15);
        assert!((out.trace() - 1.0).abs() < 1e-15);
        out.validate().unwrap();

        let same_spin = IonState::superposition(
            20,
            &[
                (BasisLabel::down(0), c(1.0, 0.0)),
                (BasisLabel::down(2), c(1.0, 0.0)),
            ],
        )
        .unwrap();
        let out = apply_contrast_decay(&same_spin, 170e-6, &noise);
        assert!((out.density_matrix() - same_spin.density_matrix()).camax() < 1e-15);
    }

    #[test]
    fn drive_decay_envelope() {
        let m = model();
        let noise = NoiseConfig::new(170e-6, 0.0).unwrap();
        for t in [0.0, 3e-6, 25e-6, 140e-6] {
            let pulse = PulseSpec::carrier(t).unwrap();
            let s = drive(&basis(BasisLabel::down(0)), &pulse, &m, &noise).unwrap();
            let expected = 0.5 * (1.0 + (-t / 170e-6).exp() * (2.0 * m.carrier(0) * t).cos());
            assert!((s.p_down() - expected).abs() < 1e-13);
            s.validate().unwrap();
        }
    }
}
