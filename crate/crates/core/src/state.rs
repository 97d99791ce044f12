//! Joint spin–motion state of a single ion.
//!
//! The Hilbert space is spin ⊗ Fock(0..=n_max). Basis ordering is spin-major:
//! `index = spin * (n_max + 1) + n` with `down = 0`, `up = 1`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_MAX: usize = 20;
pub const MIN_N_MAX: usize = 4;

/// Norm, trace and Hermiticity tolerance.
pub const STATE_TOL: f64 = 1e-12;
/// Most negative eigenvalue accepted for a density operator.
pub const EIGEN_TOL: f64 = 1e-10;
/// Largest population allowed in the top two Fock levels.
pub const TRUNCATION_TOL: f64 = 1e-9;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Down,
    Up,
}

impl Spin {
    pub fn index(self) -> usize {
        match self {
            Spin::Down => 0,
            Spin::Up => 1,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Down => Spin::Up,
            Spin::Up => Spin::Down,
        }
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spin::Down => write!(f, "down"),
            Spin::Up => write!(f, "up"),
        }
    }
}

/// A product basis label |spin⟩|n⟩.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisLabel {
    pub spin: Spin,
    pub n: usize,
}

impl BasisLabel {
    pub fn new(spin: Spin, n: usize) -> Self {
        Self { spin, n }
    }

    pub fn down(n: usize) -> Self {
        Self::new(Spin::Down, n)
    }

    pub fn up(n: usize) -> Self {
        Self::new(Spin::Up, n)
    }

    pub fn index(self, n_max: usize) -> usize {
        self.spin.index() * (n_max + 1) + self.n
    }

    pub fn from_index(index: usize, n_max: usize) -> Self {
        let spin = if index <= n_max { Spin::Down } else { Spin::Up };
        Self {
            spin,
            n: index % (n_max + 1),
        }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.spin, self.n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Repr {
    Pure(DVector<C64>),
    Density(DMatrix<C64>),
}

/// Pure amplitude vector or density operator over spin ⊗ Fock(n_max).
#[derive(Clone, Debug, PartialEq)]
pub struct IonState {
    n_max: usize,
    repr: Repr,
}

pub fn dimension(n_max: usize) -> usize {
    2 * (n_max + 1)
}

fn check_n_max(n_max: usize) -> Result<()> {
    if n_max < MIN_N_MAX {
        return Err(Error::Config(format!(
            "n_max = {n_max} is below the minimum {MIN_N_MAX}"
        )));
    }
    Ok(())
}

impl IonState {
    /// The basis state `label` with all other amplitudes zero.
    pub fn basis(label: BasisLabel, n_max: usize) -> Result<Self> {
        check_n_max(n_max)?;
        if label.n > n_max {
            return Err(Error::Config(format!(
                "Fock index {} exceeds n_max = {n_max}",
                label.n
            )));
        }
        let mut amps = DVector::zeros(dimension(n_max));
        amps[label.index(n_max)] = C64::new(1.0, 0.0);
        Ok(Self {
            n_max,
            repr: Repr::Pure(amps),
        })
    }

    /// Normalized superposition of the listed components.
    pub fn superposition(n_max: usize, components: &[(BasisLabel, C64)]) -> Result<Self> {
        check_n_max(n_max)?;
        let mut amps = DVector::zeros(dimension(n_max));
        for (label, c) in components {
            if label.n > n_max {
                return Err(Error::Config(format!(
                    "Fock index {} exceeds n_max",
                    label.n
                )));
            }
            amps[label.index(n_max)] += c;
        }
        let norm = amps.norm();
        if norm == 0.0 {
            return Err(Error::Config("superposition has zero norm".into()));
        }
        amps /= C64::new(norm, 0.0);
        Ok(Self {
            n_max,
            repr: Repr::Pure(amps),
        })
    }

    pub fn from_amplitudes(n_max: usize, amps: DVector<C64>) -> Result<Self> {
        check_n_max(n_max)?;
        let state = Self {
            n_max,
            repr: Repr::Pure(amps),
        };
        state.validate()?;
        Ok(state)
    }

    pub fn from_density(n_max: usize, rho: DMatrix<C64>) -> Result<Self> {
        check_n_max(n_max)?;
        let state = Self {
            n_max,
            repr: Repr::Density(rho),
        };
        state.validate()?;
        Ok(state)
    }

    /// Construction without validation, for results of norm-preserving maps.
    pub(crate) fn from_repr_unchecked(n_max: usize, repr: Repr) -> Self {
        Self { n_max, repr }
    }

    /// Convex mixture Σ wᵢ ρᵢ. Weights must be non-negative and sum to one.
    pub fn mixture(parts: &[(f64, &IonState)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return Err(Error::Config("empty mixture".into()));
        };
        let n_max = first.n_max;
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > STATE_TOL {
            return Err(Error::Config(
                "mixture weights must be non-negative and sum to 1".into(),
            ));
        }
        let dim = dimension(n_max);
        let mut rho = DMatrix::zeros(dim, dim);
        for (w, s) in parts {
            if s.n_max != n_max {
                return Err(Error::Config(
                    "mixture of states with different n_max".into(),
                ));
            }
            rho += s.density_matrix() * C64::new(*w, 0.0);
        }
        Ok(Self {
            n_max,
            repr: Repr::Density(rho),
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        dimension(self.n_max)
    }

    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.repr, Repr::Pure(_))
    }

    pub fn index(&self, label: BasisLabel) -> usize {
        label.index(self.n_max)
    }

    /// Amplitude of `label`; `None` for density operators.
    pub fn amplitude(&self, label: BasisLabel) -> Option<C64> {
        match &self.repr {
            Repr::Pure(v) => Some(v[self.index(label)]),
            Repr::Density(_) => None,
        }
    }

    pub fn population(&self, label: BasisLabel) -> f64 {
        self.population_at(self.index(label))
    }

    fn population_at(&self, i: usize) -> f64 {
        match &self.repr {
            Repr::Pure(v) => v[i].norm_sqr(),
            Repr::Density(rho) => rho[(i, i)].re,
        }
    }

    /// Total population of Fock level `n`, summed over both spins.
    pub fn fock_population(&self, n: usize) -> f64 {
        self.population(BasisLabel::down(n)) + self.population(BasisLabel::up(n))
    }

    /// Probability of finding the ion in |↓⟩.
    pub fn p_down(&self) -> f64 {
        let p: f64 = (0..=self.n_max)
            .map(|n| self.population(BasisLabel::down(n)))
            .sum();
        p.clamp(0.0, 1.0)
    }

    pub fn p_up(&self) -> f64 {
        1.0 - self.p_down()
    }

    /// Norm squared for pure states, trace for density operators.
    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.population_at(i)).sum()
    }

    /// tr(ρ²); 1 for pure states.
    pub fn purity(&self) -> f64 {
        match &self.repr {
            Repr::Pure(v) => v.norm_squared().powi(2),
            Repr::Density(rho) => rho.iter().map(|z| z.norm_sqr()).sum(),
        }
    }

    /// The density matrix |ψ⟩⟨ψ| or ρ itself.
    pub fn density_matrix(&self) -> DMatrix<C64> {
        match &self.repr {
            Repr::Pure(v) => v * v.adjoint(),
            Repr::Density(rho) => rho.clone(),
        }
    }

    /// Density-operator form of this state. Idempotent.
    pub fn to_density(&self) -> IonState {
        Self {
            n_max: self.n_max,
            repr: Repr::Density(self.density_matrix()),
        }
    }

    /// |⟨a|b⟩|² for two pure states, ⟨ψ|ρ|ψ⟩ for a pure/mixed pair.
    pub fn fidelity(&self, other: &IonState) -> Result<f64> {
        if self.n_max != other.n_max {
            return Err(Error::Config(format!(
                "fidelity between n_max = {} and n_max = {}",
                self.n_max, other.n_max
            )));
        }
        let f = match (&self.repr, &other.repr) {
            (Repr::Pure(a), Repr::Pure(b)) => a.dotc(b).norm_sqr(),
            (Repr::Pure(psi), Repr::Density(rho)) | (Repr::Density(rho), Repr::Pure(psi)) => {
                psi.dotc(&(rho * psi)).re
            }
            (Repr::Density(_), Repr::Density(_)) => {
                return Err(Error::Unsupported(
                    "fidelity between two mixed states".into(),
                ))
            }
        };
        Ok(f.clamp(0.0, 1.0))
    }

    /// Population in Fock levels n_max − 1 and n_max.
    pub fn top_population(&self) -> f64 {
        self.fock_population(self.n_max - 1) + self.fock_population(self.n_max)
    }

    /// Fails when the top two Fock levels carry non-negligible population.
    pub fn check_truncation(&self) -> Result<()> {
        let population = self.top_population();
        if population >= TRUNCATION_TOL {
            return Err(Error::Truncation {
                population,
                n_max: self.n_max,
            });
        }
        Ok(())
    }

    /// Checks the norm (pure) or Hermiticity, trace and positivity (density).
    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        match &self.repr {
            Repr::Pure(v) => {
                if v.len() != dim {
                    return Err(Error::Config(format!(
                        "expected {dim} amplitudes, got {}",
                        v.len()
                    )));
                }
                let norm = v.norm_squared();
                if (norm - 1.0).abs() > STATE_TOL {
                    return Err(Error::Domain(format!("state norm {norm} differs from 1")));
                }
            }
            Repr::Density(rho) => {
                if rho.nrows() != dim || rho.ncols() != dim {
                    return Err(Error::Config(format!(
                        "expected a {dim}×{dim} density matrix"
                    )));
                }
                let herm = (rho - rho.adjoint())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                if herm > STATE_TOL {
                    return Err(Error::Domain(format!(
                        "density matrix not Hermitian ({herm:.2e})"
                    )));
                }
                let tr = rho.trace().re;
                if (tr - 1.0).abs() > STATE_TOL {
                    return Err(Error::Domain(format!(
                        "density matrix trace {tr} differs from 1"
                    )));
                }
                let min_eig = rho.clone().symmetric_eigenvalues().min();
                if min_eig < -EIGEN_TOL {
                    return Err(Error::Domain(format!(
                        "density matrix eigenvalue {min_eig:.2e} < 0"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Exchange |↓n⟩ ↔ |↑n⟩ for every n.
    pub fn spin_flipped(&self) -> IonState {
        let half = self.n_max + 1;
        let perm = |i: usize| if i < half { i + half } else { i - half };
        let repr = match &self.repr {
            Repr::Pure(v) => Repr::Pure(DVector::from_fn(v.len(), |i, _| v[perm(i)])),
            Repr::Density(rho) => {
                Repr::Density(DMatrix::from_fn(rho.nrows(), rho.ncols(), |i, j| {
                    rho[(perm(i), perm(j))]
                }))
            }
        };
        Self {
            n_max: self.n_max,
            repr,
        }
    }

    /// Removes every coherence between different Fock levels.
    pub fn motion_dephased(&self) -> IonState {
        let n_max = self.n_max;
        let rho = self.density_matrix();
        let out = DMatrix::from_fn(rho.nrows(), rho.ncols(), |i, j| {
            if BasisLabel::from_index(i, n_max).n == BasisLabel::from_index(j, n_max).n {
                rho[(i, j)]
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self {
            n_max,
            repr: Repr::Density(out),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&StateRecord::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: StateRecord = serde_json::from_str(text)?;
        record.try_into()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReprKind {
    Pure,
    Density,
}

/// Serialized state: amplitudes as `[re, im]` pairs in basis order,
/// row-major for density operators.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateRecord {
    pub n_max: usize,
    pub repr: ReprKind,
    pub amplitudes: Vec<[f64; 2]>,
}

impl From<&IonState> for StateRecord {
    fn from(state: &IonState) -> Self {
        let (repr, amplitudes) = match &state.repr {
            Repr::Pure(v) => (ReprKind::Pure, v.iter().map(|z| [z.re, z.im]).collect()),
            Repr::Density(rho) => {
                let dim = rho.nrows();
                let flat = (0..dim)
                    .flat_map(|i| (0..dim).map(move |j| (i, j)))
                    .map(|(i, j)| [rho[(i, j)].re, rho[(i, j)].im])
                    .collect();
                (ReprKind::Density, flat)
            }
        };
        Self {
            n_max: state.n_max,
            repr,
            amplitudes,
        }
    }
}

impl TryFrom<StateRecord> for IonState {
    type Error = Error;

    fn try_from(record: StateRecord) -> Result<Self> {
        let dim = dimension(record.n_max);
        let values: Vec<C64> = record
            .amplitudes
            .iter()
            .map(|[re, im]| C64::new(*re, *im))
            .collect();
        match record.repr {
            ReprKind::Pure => {
                if values.len() != dim {
                    return Err(Error::Config(format!(
                        "expected {dim} amplitudes, got {}",
                        values.len()
                    )));
                }
                IonState::from_amplitudes(record.n_max, DVector::from_vec(values))
            }
            ReprKind::Density => {
                if values.len() != dim * dim {
                    return Err(Error::Config(format!(
                        "expected {} density entries, got {}",
                        dim * dim,
                        values.len()
                    )));
                }
                IonState::from_density(record.n_max, DMatrix::from_row_slice(dim, dim, &values))
            }
        }
    }
}
