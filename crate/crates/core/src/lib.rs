//! Polyhedral Lyapunov norms for switched linear systems under arbitrary
//! switching: min-max value iteration, homogeneous feedback extraction,
//! certification and closed-loop simulation.

pub mod bellman;
pub mod certify;
pub mod controllers;
pub mod error;
pub mod lp;
pub mod model;
pub mod norm;
pub mod signal;
pub mod simulate;

pub use error::{Error, Result};
pub use lp::{solve_lp, LinearProgram, LpError, LpResult, VarBound};
pub use model::{load_system, Mode, SwitchedSystem, Trajectory};
pub use norm::{gauge_evaluate, gauge_evaluate_lp, gauge_facets_2d, rebuild_norm, BalancedPolytopeNorm};
pub use bellman::{
    bellman_dependent, bellman_independent, direction_grid, value_iteration, value_iteration_traced, BellmanOperator, BellmanStep,
    Certificate, DependentStep, IterationRecord, SynthesisConfig, SynthesisStatus,
};
pub use controllers::{
    build_sector_controller_2d, extract_feedback, extract_feedback_dependent, from_fn, history_step, lift_memoryless,
    scale_controller, sum_controller, FeedbackStrategy, FnController, LiftedController, MemoryController, MemoryKind,
    MemorylessController, ModeDependentController, ScaledController, Sector, SectorLinearController2D, StaticFeedback,
    SumController,
};
pub use signal::{parse_signal, SwitchingSignal};
pub use simulate::{adversarial_signal, estimate_ues, simulate, SimulationSpec, UesEstimate};
pub use certify::{
    bellman_residual, certificate_hash, certify, check_norm_axioms, rho_recomputed, sample_sector_ratios,
    verify_sector_certificate_2d, CertReport, CertifyConfig, NormAxiomReport, SectorCertificate,
};
