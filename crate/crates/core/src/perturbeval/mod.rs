//! Region perturbation: heatmap-induced region orderings, the four local
//! corruption operators, MoRF/LeRF trajectories and the AOPC/ABPC metrics.

mod curve;
mod operator;
mod region;

use thiserror::Error;

use crate::datahub::DataError;
use crate::netcore::NetError;

pub use curve::{
    abpc, aopc, aopc_profile, derive_seed, evaluate_curves, lerf_curve, mean_and_sem, morf_curve,
    trajectory, Direction, PerturbationConfig, PerturbationCurve,
};
pub use operator::{gaussian_kernel, perturb_region, perturb_region_in_place, Operator, BLUR_SIGMA};
pub use region::{build_region_grid, order_regions, Region, RegionOrdering};

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("window {window} does not fit a {height}x{width} image")]
    WindowTooLarge {
        window: usize,
        height: usize,
        width: usize,
    },
    #[error("heatmap is {found:?} but the regions need at least {needed:?}")]
    HeatmapExtent {
        found: (usize, usize),
        needed: (usize, usize),
    },
    #[error("region {region:?} lies outside a {height}x{width} image")]
    RegionOutOfBounds {
        region: Region,
        height: usize,
        width: usize,
    },
    #[error("{operator} operator needs {what}; compute dataset statistics first")]
    MissingStats {
        operator: Operator,
        what: &'static str,
    },
    #[error("invalid perturbation config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no curves to aggregate")]
    Empty,
    #[error("curve sets do not match: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
}
