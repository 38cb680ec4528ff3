//! Numerical laboratory for the complex Monge-Ampere equation
//! `det(phi_{i j-bar}) = f` and its linearization `L_phi u = det(phi_{k l-bar}) phi^{i j-bar} u_{i j-bar}`
//! on structured grids over near-unit balls in `C^n`, `n` in `{1, 2}`.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: lattices, star-shaped domains with Shortley-Weller cut arms, measures.
//! - [`field`]: scalar fields, boundary traces, interpolation and the CMAF binary format.
//! - [`herm`]: small complex matrices (`n <= 2`) used pointwise.
//! - [`psh`]: complex Hessians, pluriharmonic Taylor polynomials, affine normalizations.
//! - [`sparse`]: CSR storage with an ILU(0)-preconditioned BiCGSTAB solver.
//! - [`lin`]: assembly and solution of `L_phi u = g`.
//! - [`ma`]: damped Newton for the Dirichlet problem and comparison/barrier audits.
//! - [`sections`]: sublevel sections, ellipsoid fits and the geometric audits.
//! - [`cz`]: covering selection and the Calderon-Zygmund decomposition over node sets.
//! - [`harnack`]: critical density, infimum propagation, level-set decay, Harnack and
//!   oscillation decay measurements.
//! - [`families`]: built-in formulas and test-solution families.
//! - [`experiment`] and [`report`]: pipeline orchestration, JSON/CSV/SVG artifacts.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cz;
pub mod error;
pub mod experiment;
pub mod families;
pub mod field;
pub mod grid;
pub mod harnack;
pub mod herm;
pub mod lin;
pub mod ma;
pub mod psh;
pub mod report;
pub mod sections;
pub mod sparse;

pub use error::{Error, Result};
pub use field::{ScalarField, Trace};
pub use grid::{DomainMask, Grid, MaMeasure, NodeKind, Perturbation, Point, MAX_DIM};
pub use herm::{CMat, Herm};
pub use lin::{LinearOperator, StencilMode};
pub use ma::{ComparisonEnvelope, Solution, SolverConfig};
pub use psh::{AffineMap, HermitianField, PluriharmonicPoly};
pub use sections::{Section, SectionConfig, SectionFamily};
