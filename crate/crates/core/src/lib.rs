//! Single-ion spin–motion register simulator for the wave-packet CNOT gate.
//!
//! The control qubit is the motional pair {|0⟩, |2⟩} of one axial mode and
//! the target qubit is the spin {|↓⟩, |↑⟩}. A single carrier pulse with
//! Ω_{0,0}t = 2π and Ω_{0,0}/Ω_{2,2} = 4/3 flips the spin only when n = 2.

pub mod coupling;
pub mod error;
pub mod experiments;
pub mod pulses;
pub mod readout;
pub mod spectator;
pub mod state;

pub use coupling::CouplingModel;
pub use error::{Error, Result};
pub use experiments::{FitResult, Readout, ScanCurve};
pub use pulses::{NoiseConfig, PulseSpec, Recipe};
pub use readout::{CountHistogram, DetectorModel, Estimate};
pub use state::{BasisLabel, IonState, Spin};
