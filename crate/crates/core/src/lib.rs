//! Fractional integration with a kernel that is singular on the light cone
//! `|s| = |y|` of `R^n x R`.
//!
//! The crate provides the cone geometry (dyadic cells, sectors, Monte Carlo
//! volumes), sampled fields, the operator and its dyadic pieces, the sector
//! maximal operators with the cell masses `theta_ell`, and a harness of
//! numerical experiments that produce structured reports.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cone_geometry;
pub mod error;
pub mod field;
pub mod maximal;
pub mod operator;
pub mod verify;

pub use cone_geometry::{
    build_sphere_grid, cell_contains, cell_volume, classify, mc_measure, sector_contains,
    star_contains, BoundingBox, CellIndex, ConePoint, SectorIndex, SphereGrid, StarCell,
};
pub use error::{Error, Result};
pub use field::{
    dilate, lp_norm, make_test_field, ExponentPair, FieldKind, FieldParams, GridSpec,
    SampledField,
};
pub use maximal::{
    averaged_maximal, cone_mass, sector_maximal, solve_rho, theta, theta_profile, RhoField,
    SectorMaximal, ThetaProfile,
};
pub use operator::{
    apply_cell, apply_full, apply_n1_separable, apply_partial, kernel_eval, riesz_1d,
    ConeOperator, KernelParams, QuadratureOptions, Sampled1d, Window,
};
pub use verify::{
    cell_volume_check, hedberg_check, intersection_bound_check, n1_oracle_check,
    norm_ratio_survey, ortho_decay, scaling_experiment, theta_sum_check, theta_sum_check_with, ExperimentReport,
    IntersectionConfig, OrthoConfig,
};
