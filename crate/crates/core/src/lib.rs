//! Certification and simulation of output synchronisation in heterogeneous
//! networks with nonlinear diffusive couplings and link disturbances.
//!
//! The certification path is graph → edge certificates → distributed edge
//! margin → Ψ/Q → gain bound (ρ, ε). The simulation path integrates the
//! coupled Goodwin network and accumulates the finite-horizon norms needed
//! to check that bound along real trajectories.

pub mod certificate;
pub mod coupling;
pub mod disturbance;
pub mod eigen;
pub mod exec;
pub mod goodwin;
pub mod graph;
pub mod positivity;
pub mod sim;
pub mod table;

pub use certificate::{
    assemble_psi_q, dissipation_matrices, dissipation_residual, edge_margin, gain_bound, sector_box_samples,
    EdgeCertificate, GainBound, NetworkCertificate, SectorBound,
};
pub use coupling::{CouplingFn, CouplingSpec};
pub use disturbance::{DisturbanceKind, DisturbanceSpec};
pub use exec::Execution;
pub use goodwin::{certify_edge, certify_network, search_params, CertParams, GoodwinParams, NuMode};
pub use graph::{EdgeStats, Graph, IncidenceMatrix};
pub use positivity::{edge_condition, pd_oracle};
pub use sim::{bound_check, run, Network, SimOptions, SimulationTrace};
