//! Numerical Orlicz-space toolkit and two-solution variational solver for
//! quasilinear Phi-Laplacian problems -div(phi(|grad u|) grad u) = lambda f(x, u)
//! with Dirichlet boundary conditions on an interval or a square.

pub mod assembly;
pub mod error;
pub mod mesh;
pub mod modular;
pub mod nfunction;
pub mod nonlinearity;
pub mod quad;
pub mod report;
pub mod solver;

pub use assembly::{
    dom_diagnostics, integrate_gradient, integrate_pointwise, visit_cells, CellView,
    DomDiagnostics, EnergyFunctional, QuadPt, Rhs,
};
pub use error::{Error, Result};
pub use mesh::{make_mesh, Cells, DiscreteFunction, Mesh, MeshDescriptor, Point};
pub use modular::{
    luxemburg_norm, luxemburg_norm_tilde, modular, verify_holder, verify_modular_poincare,
    w01_norm, InequalityCheck, LuxemburgNorm,
};
pub use nfunction::{
    build_nfunction, catalog, Delta2Report, Density, GridSpec, IndexReport, NFunction,
};
pub use nonlinearity::{
    check_hypotheses, model_f, phi_power_model, truncate, HypothesisReport, Nonlinearity,
    Profile, TruncatedNonlinearity,
};
pub use quad::{adaptive_simpson, geomspace, linspace};
pub use report::{summary_header, summary_row, write_profile_table};
pub use solver::{
    build_plateau, descend, lambda_star, minimize_i, mountain_pass, newton_polish, noise_floor,
    solve_two,
    verify_mp_geometry, DescentOptions, DescentResult, LambdaStarResult, Minimization,
    MountainPassState, MpGeometry, Outcome, PlateauFunction, SolveOptions, SolverReport,
};
