//! Lamb-Dicke parameter and spin–motion Rabi-rate matrix elements.
//!
//! All rates are angular frequencies (rad/s); energies elsewhere are in
//! units of ħ, so they share these units.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::MIN_N_MAX;

/// Reduced Planck constant (CODATA 2018), J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Mass of a ⁹Be⁺ ion, kg.
pub const BE9_MASS: f64 = 9.012_182_2 * 1.660_539_066_60e-27 - 9.109_383_701_5e-31;

/// Carrier ratio at which the single carrier pulse is a CNOT.
pub const CNOT_RATIO: f64 = 4.0 / 3.0;

/// η = Δk_z √(ħ / 2 m ω_z).
pub fn lamb_dicke(delta_k_z: f64, mass: f64, omega_z: f64) -> Result<f64> {
    for (name, v) in [
        ("delta_k_z", delta_k_z),
        ("mass", mass),
        ("omega_z", omega_z),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(delta_k_z * (HBAR / (2.0 * mass * omega_z)).sqrt())
}

/// Ω_{0,0} / Ω_{2,2} = 2 / (2 − 4η² + η⁴).
pub fn carrier_ratio(eta: f64) -> f64 {
    let x = eta * eta;
    2.0 / (2.0 - 4.0 * x + x * x)
}

/// Smallest positive η whose carrier ratio equals `target_ratio`.
///
/// Bisection on x = η² ∈ (0, 1) of (2 − 4x + x²)·r − 2, which is strictly
/// decreasing there and positive at x = 0 whenever r > 1.
pub fn eta_for_ratio(target_ratio: f64) -> Result<f64> {
    if !(target_ratio > 1.0 && target_ratio.is_finite()) {
        return Err(Error::Domain(format!(
            "carrier ratio {target_ratio} has no Lamb-Dicke solution in (0, 1)"
        )));
    }
    let h = |x: f64| (2.0 - 4.0 * x + x * x) * target_ratio - 2.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).sqrt())
}

/// Generalized Laguerre polynomial L_k^α(x) by upward recurrence in k.
pub fn laguerre(k: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for j in 1..k {
        let j = j as f64;
        let next = ((2.0 * j + 1.0 + alpha - x) * cur - (j + alpha) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// |⟨m| e^{iη(a + a†)} |n⟩|, the Debye-Waller-reduced overlap.
pub fn displacement_element(eta: f64, n: usize, m: usize) -> f64 {
    let (lo, hi) = (n.min(m), n.max(m));
    let d = hi - lo;
    let x = eta * eta;
    // √(lo!/hi!) as a running product
    let ratio: f64 = (lo + 1..=hi).map(|k| 1.0 / (k as f64).sqrt()).product();
    ((-x / 2.0).exp() * eta.powi(d as i32) * ratio * laguerre(lo, d as f64, x)).abs()
}

/// Trap and laser parameters with the derived Rabi-rate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CouplingParams", into = "CouplingParams")]
pub struct CouplingModel {
    omega_z: f64,
    eta: f64,
    omega_base: f64,
    n_max: usize,
    table: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CouplingParams {
    omega_z: f64,
    eta: f64,
    omega_base: f64,
    n_max: usize,
}

impl TryFrom<CouplingParams> for CouplingModel {
    type Error = Error;

    fn try_from(p: CouplingParams) -> Result<Self> {
        CouplingModel::new(p.omega_z, p.eta, p.omega_base, p.n_max)
    }
}

impl From<CouplingModel> for CouplingParams {
    fn from(m: CouplingModel) -> Self {
        Self {
            omega_z: m.omega_z,
            eta: m.eta,
            omega_base: m.omega_base,
            n_max: m.n_max,
        }
    }
}

impl CouplingModel {
    /// `omega_base` is the bare Rabi rate Ω, so that Ω_{0,0} = Ω·e^{−η²/2}.
    pub fn new(omega_z: f64, eta: f64, omega_base: f64, n_max: usize) -> Result<Self> {
        if !(omega_z > 0.0 && omega_z.is_finite()) {
            return Err(Error::Domain(format!(
                "omega_z must be positive, got {omega_z}"
            )));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Domain(format!(
                "Lamb-Dicke parameter {eta} outside (0, 1)"
            )));
        }
        if !(omega_base >= 0.0 && omega_base < omega_z) {
            return Err(Error::Domain(format!(
                "Rabi rate {omega_base} must lie in [0, omega_z = {omega_z})"
            )));
        }
        if n_max < MIN_N_MAX {
            return Err(Error::Config(format!(
                "n_max = {n_max} is below the minimum {MIN_N_MAX}"
            )));
        }
        let size = n_max + 1;
        let mut table = vec![0.0; size * size];
        for n in 0..size {
            for m in n..size {
                let v = omega_base * displacement_element(eta, n, m);
                table[n * size + m] = v;
                table[m * size + n] = v;
            }
        }
        Ok(Self {
            omega_z,
            eta,
            omega_base,
            n_max,
            table,
        })
    }

    /// Model from physical inputs; η follows from Δk_z, the ion mass and ω_z.
    pub fn from_physical(
        delta_k_z: f64,
        mass: f64,
        omega_z: f64,
        omega_base: f64,
        n_max: usize,
    ) -> Result<Self> {
        Self::new(
            omega_z,
            lamb_dicke(delta_k_z, mass, omega_z)?,
            omega_base,
            n_max,
        )
    }

    /// Model fixed by its ground-state carrier rate Ω_{0,0} instead of Ω.
    pub fn from_carrier_rate(omega_z: f64, eta: f64, omega_00: f64, n_max: usize) -> Result<Self> {
        Self::new(omega_z, eta, omega_00 * (eta * eta / 2.0).exp(), n_max)
    }

    /// Model tuned to the carrier ratio Ω_{0,0}/Ω_{2,2} = `target_ratio`.
    pub fn from_ratio(
        target_ratio: f64,
        omega_z: f64,
        omega_00: f64,
        n_max: usize,
    ) -> Result<Self> {
        Self::from_carrier_rate(omega_z, eta_for_ratio(target_ratio)?, omega_00, n_max)
    }

    /// Same trap, different ground-state carrier rate.
    pub fn with_carrier_rate(&self, omega_00: f64) -> Result<Self> {
        Self::from_carrier_rate(self.omega_z, self.eta, omega_00, self.n_max)
    }

    pub fn with_omega_base(&self, omega_base: f64) -> Result<Self> {
        Self::new(self.omega_z, self.eta, omega_base, self.n_max)
    }

    pub fn omega_z(&self) -> f64 {
        self.omega_z
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn omega_base(&self) -> f64 {
        self.omega_base
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Ω_{n,m}: coupling of |↓,n⟩ ↔ |↑,m⟩.
    pub fn rabi(&self, n: usize, m: usize) -> Result<f64> {
        if n > self.n_max || m > self.n_max {
            return Err(Error::Domain(format!(
                "Fock indices ({n}, {m}) outside 0..={}",
                self.n_max
            )));
        }
        Ok(self.rabi_unchecked(n, m))
    }

    pub(crate) fn rabi_unchecked(&self, n: usize, m: usize) -> f64 {
        self.table[n * (self.n_max + 1) + m]
    }

    /// Carrier rate Ω_{n,n}.
    pub fn carrier(&self, n: usize) -> f64 {
        self.rabi_unchecked(n, n)
    }

    /// Ω_{0,0} / Ω_{2,2} from the table.
    pub fn ratio(&self) -> f64 {
        self.carrier(0) / self.carrier(2)
    }

    /// Ω_{0,0} / ω_z, the gate speed relative to the trap frequency.
    pub fn speed(&self) -> f64 {
        self.carrier(0) / self.omega_z
    }

    /// Carrier duration giving Ω_{0,0}·t = 2π.
    pub fn gate_time(&self) -> f64 {
        TAU / self.carrier(0)
    }
}
