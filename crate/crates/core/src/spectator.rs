//! Off-resonant spectator couplings: perturbative level shifts, an exact
//! dressed-Hamiltonian oracle, and leakage out of the computational basis.
//!
//! In the frame rotating at the carrier frequency the Hamiltonian (units of ħ)
//! is time independent:
//!
//! ```text
//! H = ω_z Σ_n n (|↓n⟩⟨↓n| + |↑n⟩⟨↑n|) + Σ_{n,m} Ω_{n,m} (|↑m⟩⟨↓n| + |↓n⟩⟨↑m|)
//! ```
//!
//! Each carrier pair (↓n, ↑n) is resonantly split by ±Ω_{n,n}; every other
//! coupling is detuned by a multiple of ω_z and shifts the pair as a whole.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingModel;
use crate::error::{Error, Result};
use crate::state::{dimension, BasisLabel, IonState, Repr, Spin};

/// Fock levels above `n` that the perturbative sum needs inside the space.
pub const SHIFT_HEADROOM: usize = 5;

/// Computational basis of the gate.
pub const COMPUTATIONAL_BASIS: [BasisLabel; 4] = [
    BasisLabel {
        spin: Spin::Down,
        n: 0,
    },
    BasisLabel {
        spin: Spin::Up,
        n: 0,
    },
    BasisLabel {
        spin: Spin::Down,
        n: 2,
    },
    BasisLabel {
        spin: Spin::Up,
        n: 2,
    },
];

/// Real symmetric H/ħ in rad/s over the spin-major basis.
#[derive(Clone, Debug)]
pub struct DressedHamiltonian {
    n_max: usize,
    omega_z: f64,
    matrix: DMatrix<f64>,
}

impl DressedHamiltonian {
    pub fn new(model: &CouplingModel) -> Self {
        let n_max = model.n_max();
        let mut h = DMatrix::zeros(dimension(n_max), dimension(n_max));
        for n in 0..=n_max {
            let energy = n as f64 * model.omega_z();
            h[(
                BasisLabel::down(n).index(n_max),
                BasisLabel::down(n).index(n_max),
            )] = energy;
            h[(
                BasisLabel::up(n).index(n_max),
                BasisLabel::up(n).index(n_max),
            )] = energy;
            for m in 0..=n_max {
                let i = BasisLabel::down(n).index(n_max);
                let j = BasisLabel::up(m).index(n_max);
                let rate = model.rabi_unchecked(n, m);
                h[(i, j)] = rate;
                h[(j, i)] = rate;
            }
        }
        Self {
            n_max,
            omega_z: model.omega_z(),
            matrix: h,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Unperturbed energy n·ω_z of a basis level.
    pub fn bare_energy(&self, label: BasisLabel) -> f64 {
        label.n as f64 * self.omega_z
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        self.matrix.clone().symmetric_eigen()
    }

    /// Largest |H − Hᵀ| entry.
    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }
}

/// Second-order shift of |spin, n⟩ from every off-resonant sideband:
/// Σ_{i≠n} Ω²_{i,n} / ((n − i) ω_z), truncated at n_max. The formula does not
/// depend on the spin, so both members of a carrier pair shift equally.
pub fn perturbative_shift(model: &CouplingModel, _spin: Spin, n: usize) -> Result<f64> {
    let n_max = model.n_max();
    if n + SHIFT_HEADROOM > n_max {
        return Err(Error::Headroom {
            n,
            required: n + SHIFT_HEADROOM,
            n_max,
        });
    }
    Ok(partial_shift(model, n, n_max))
}

/// Perturbative sum over spectators i ≤ `upper`.
pub fn partial_shift(model: &CouplingModel, n: usize, upper: usize) -> f64 {
    (0..=upper.min(model.n_max()))
        .filter(|&i| i != n)
        .map(|i| {
            let rate = model.rabi_unchecked(i, n);
            rate * rate / ((n as f64 - i as f64) * model.omega_z())
        })
        .sum()
}

/// Exact shifts of one carrier pair from diagonalization.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairShift {
    pub n: usize,
    /// Mean of the pair's two eigenvalues minus n·ω_z.
    pub center: f64,
    /// Eigenvalues weighted by their |↓n⟩ overlap, minus n·ω_z.
    pub down: f64,
    /// Eigenvalues weighted by their |↑n⟩ overlap, minus n·ω_z.
    pub up: f64,
}

impl PairShift {
    pub fn differential(&self) -> f64 {
        self.up - self.down
    }
}

/// Diagonalizes the dressed Hamiltonian and assigns each eigenvector to the
/// carrier pair it overlaps most. Fails when an assignment is ambiguous.
pub fn exact_shifts(model: &CouplingModel) -> Result<Vec<PairShift>> {
    let h = DressedHamiltonian::new(model);
    let n_max = model.n_max();
    let eig = h.eigen();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_max + 1];
    for k in 0..eig.eigenvalues.len() {
        let v = eig.eigenvectors.column(k);
        let (best_n, overlap) = (0..=n_max)
            .map(|n| {
                let w = v[BasisLabel::down(n).index(n_max)].powi(2)
                    + v[BasisLabel::up(n).index(n_max)].powi(2);
                (n, w)
            })
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            );
        if overlap < 0.5 {
            return Err(Error::StrongCoupling { index: k, overlap });
        }
        members[best_n].push(k);
    }
    let mut shifts = Vec::with_capacity(n_max + 1);
    for (n, ks) in members.iter().enumerate() {
        if ks.len() != 2 {
            let index = ks.first().copied().unwrap_or(0);
            return Err(Error::StrongCoupling {
                index,
                overlap: 0.0,
            });
        }
        let bare = n as f64 * model.omega_z();
        let weighted = |label: BasisLabel| {
            let i = label.index(n_max);
            let (num, den) = ks.iter().fold((0.0, 0.0), |(num, den), &k| {
                let w = eig.eigenvectors[(i, k)].powi(2);
                (num + w * eig.eigenvalues[k], den + w)
            });
            num / den - bare
        };
        shifts.push(PairShift {
            n,
            center: 0.5 * (eig.eigenvalues[ks[0]] + eig.eigenvalues[ks[1]]) - bare,
            down: weighted(BasisLabel::down(n)),
            up: weighted(BasisLabel::up(n)),
        });
    }
    Ok(shifts)
}

/// Interaction-picture propagator e^{+iH₀t} e^{−iHt} for the full dressed
/// Hamiltonian.
pub fn exact_propagator(model: &CouplingModel, t: f64) -> DMatrix<C64> {
    let h = DressedHamiltonian::new(model);
    let eig = h.eigen();
    let dim = h.matrix.nrows();
    let vectors = eig.eigenvectors.map(|x| C64::new(x, 0.0));
    let phases = DVector::from_iterator(
        dim,
        eig.eigenvalues
            .iter()
            .map(|&e| C64::from_polar(1.0, -e * t)),
    );
    let u = &vectors * DMatrix::from_diagonal(&phases) * vectors.transpose();
    let frame = DVector::from_iterator(
        dim,
        (0..dim)
            .map(|i| C64::from_polar(1.0, h.bare_energy(BasisLabel::from_index(i, h.n_max)) * t)),
    );
    DMatrix::from_diagonal(&frame) * u
}

/// Evolves `state` for `t` seconds under every sideband at once.
pub fn propagate_exact(state: &IonState, t: f64, model: &CouplingModel) -> Result<IonState> {
    if state.n_max() != model.n_max() {
        return Err(Error::Config("state and model disagree on n_max".into()));
    }
    let u = exact_propagator(model, t);
    let repr = match state.repr() {
        Repr::Pure(v) => Repr::Pure(&u * v),
        Repr::Density(rho) => Repr::Density(&u * rho * u.adjoint()),
    };
    Ok(IonState::from_repr_unchecked(state.n_max(), repr))
}

/// Population outside {|↓0⟩, |↑0⟩, |↓2⟩, |↑2⟩}.
pub fn leakage(state: &IonState) -> f64 {
    let kept: f64 = COMPUTATIONAL_BASIS
        .iter()
        .map(|&l| state.population(l))
        .sum();
    (1.0 - kept).max(0.0)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakagePoint {
    /// Ω_{0,0} / ω_z.
    pub speed: f64,
    /// Mean leakage over the four computational inputs after one gate.
    pub leakage: f64,
}

/// Gate leakage versus speed Ω_{0,0}/ω_z at the model's trap and η.
pub fn leakage_scan(model: &CouplingModel, speeds: &[f64]) -> Result<Vec<LeakagePoint>> {
    for &s in speeds {
        if !(s > 0.0 && s <= 0.5) {
            return Err(Error::Domain(format!("gate speed {s} outside (0, 0.5]")));
        }
    }
    speeds
        .par_iter()
        .map(|&speed| {
            let m = model.with_carrier_rate(speed * model.omega_z())?;
            let u = exact_propagator(&m, m.gate_time());
            let total: f64 = COMPUTATIONAL_BASIS
                .iter()
                .map(|&label| {
                    let psi = IonState::basis(label, m.n_max())?;
                    let Repr::Pure(v) = psi.repr() else {
                        unreachable!()
                    };
                    let out = IonState::from_repr_unchecked(m.n_max(), Repr::Pure(&u * v));
                    Ok(leakage(&out))
                })
                .sum::<Result<f64>>()?;
            Ok(LeakagePoint {
                speed,
                leakage: total / COMPUTATIONAL_BASIS.len() as f64,
            })
        })
        .collect()
}

/// Least-squares slope of ln(leakage) against ln(speed).
pub fn power_law_exponent(points: &[LeakagePoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.speed.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.leakage.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// One row of the perturbative-versus-exact shift table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub level: BasisLabel,
    pub shift_pert: f64,
    pub shift_exact: f64,
    pub rel_err: f64,
}

/// Shift table for every level with enough headroom; the exact column is the
/// spin-resolved diagonalization shift.
pub fn shift_table(model: &CouplingModel) -> Result<Vec<ShiftRow>> {
    let exact = exact_shifts(model)?;
    let top = model.n_max().saturating_sub(SHIFT_HEADROOM);
    let mut rows = Vec::new();
    for pair in exact.iter().take(top + 1) {
        let n = pair.n;
        for spin in [Spin::Down, Spin::Up] {
            let shift_pert = perturbative_shift(model, spin, n)?;
            let shift_exact = match spin {
                Spin::Down => pair.down,
                Spin::Up => pair.up,
            };
            let rel_err = if shift_exact == 0.0 {
                (shift_pert - shift_exact).abs()
            } else {
                ((shift_pert - shift_exact) / shift_exact).abs()
            };
            rows.push(ShiftRow {
                level: BasisLabel::new(spin, n),
                shift_pert,
                shift_exact,
                rel_err,
            });
        }
    }
    Ok(rows)
}

pub fn shift_table_csv(rows: &[ShiftRow]) -> String {
    let mut out = String::from("level,shift_pert,shift_exact,rel_err\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e}",
            r.level, r.shift_pert, r.shift_exact, r.rel_err
        );
    }
    out
}

pub fn leakage_csv(points: &[LeakagePoint]) -> String {
    let mut out = String::from("speed,leakage\n");
    for p in points {
        let _ = writeln!(out, "{:e},{:e}", p.speed, p.leakage);
    }
    out
}
