//! Numerical tolerances shared by every module.
//!
//! Callers that need different values build their own [`Tolerances`]; the
//! defaults are what the CLI and the acceptance suite use.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Maximum `||R^T R - I||_F` accepted when constructing a rotation.
    pub orth_tol: f64,
    /// Safety margin for the positive-definiteness test of `I - Z^T Z`.
    pub pd_margin: f64,
    /// Minimum distance of a block angle from pi for the principal log.
    pub log_tol: f64,
    /// Step of the central finite difference used for the K_j terms.
    pub fd_step: f64,
    /// Agreement required between the Itô drift's symmetric part and the
    /// pinning term.
    pub conversion_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            orth_tol: 1e-9,
            pd_margin: 1e-8,
            log_tol: 1e-6,
            fd_step: 1e-5,
            conversion_tol: 1e-6,
        }
    }
}

/// Orthogonality defect bound for geometry-preserving schemes over long runs.
pub const GEOMETRY_DEFECT: f64 = 1e-10;

/// Reconstruction tolerance of the block Schur form, relative to `1 + ||Z||_F`.
pub const SCHUR_RECONSTRUCTION: f64 = 1e-10;
