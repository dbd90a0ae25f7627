//! Truncated-Fock simulation of continuous-variable quantum neural networks
//! whose nonlinearity comes from repeat-until-success ancilla measurements.

// `!(x > 0.0)` also rejects NaN, and index loops read better over matrix entries.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod gates;
pub mod hybrid;
pub mod layers;
pub mod linalg;
pub mod meas;
pub mod nonlin;
pub mod optim;
pub mod targets;

pub use error::{Error, Result};
pub use fock::{apply_gate, make_operators, project_mode, FockState, ModeOperator, Operators, Projector, C64};
pub use gates::{GateKind, GateMatrix, GateParams};
pub use hybrid::{HybridConfig, HybridModel, TrainConfig};
pub use layers::{CompiledNetwork, Network, ParamVector, ReadoutKind};
pub use meas::{GridSpec, WignerGrid};
pub use nonlin::{Detector, LoopStats, NonlinConfig, Outcome};
pub use optim::{AdamConfig, NelderMeadConfig, OptimizerTrace};
pub use targets::{TargetSpec, TargetState};
