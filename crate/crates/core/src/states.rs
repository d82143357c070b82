//! Resource states emitted by the two independent sources.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Result};
use crate::qmath::{kron, ComplexMatrix, DensityMatrix, ZERO};

/// Which two-dimensional subspace the pure part lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseState {
    /// `sqrt(eta)|00> + sqrt(1-eta)|11>`, equal to `|phi+>` at `eta = 1/2`.
    PhiPlus,
    /// `sqrt(eta)|01> - sqrt(1-eta)|10>`, equal to `|psi->` at `eta = 1/2`.
    PsiMinus,
}

/// A noisy non-maximally entangled source: `v |psi_eta><psi_eta| + (1 - v) I/4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub eta: f64,
    pub visibility: f64,
    pub base: BaseState,
}

impl SourceSpec {
    pub fn new(eta: f64, visibility: f64, base: BaseState) -> Result<Self> {
        let spec = Self {
            eta,
            visibility,
            base,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn maximally_entangled(base: BaseState) -> Self {
        Self {
            eta: 0.5,
            visibility: 1.0,
            base,
        }
    }

    pub fn werner(visibility: f64, base: BaseState) -> Result<Self> {
        Self::new(0.5, visibility, base)
    }

    pub fn validate(&self) -> Result<()> {
        check_range("eta", self.eta, 0.0, 1.0)?;
        check_range("visibility", self.visibility, 0.0, 1.0)
    }

    pub fn pure_part(&self) -> Result<Vec<Complex64>> {
        match self.base {
            BaseState::PhiPlus => nme_pure(self.eta),
            BaseState::PsiMinus => nme_singlet(self.eta),
        }
    }

    pub fn state(&self) -> Result<DensityMatrix> {
        source_state(self)
    }
}

/// `sqrt(eta)|00> + sqrt(1 - eta)|11>`.
pub fn nme_pure(eta: f64) -> Result<Vec<Complex64>> {
    check_range("eta", eta, 0.0, 1.0)?;
    Ok(vec![
        Complex64::new(eta.sqrt(), 0.0),
        ZERO,
        ZERO,
        Complex64::new((1.0 - eta).sqrt(), 0.0),
    ])
}

/// `sqrt(eta)|01> - sqrt(1 - eta)|10>`.
pub fn nme_singlet(eta: f64) -> Result<Vec<Complex64>> {
    check_range("eta", eta, 0.0, 1.0)?;
    Ok(vec![
        ZERO,
        Complex64::new(eta.sqrt(), 0.0),
        Complex64::new(-(1.0 - eta).sqrt(), 0.0),
        ZERO,
    ])
}

pub fn source_state(spec: &SourceSpec) -> Result<DensityMatrix> {
    spec.validate()?;
    let psi = spec.pure_part()?;
    let v = spec.visibility;
    let mat = &ComplexMatrix::outer(&psi).scale(v) + &ComplexMatrix::identity(4).scale((1.0 - v) / 4.0);
    DensityMatrix::new(mat)
}

/// Four-qubit state `rho_1 ⊗ rho_2` ordered (A, B1, B2, C).
pub fn network_state(source1: &SourceSpec, source2: &SourceSpec) -> Result<DensityMatrix> {
    let rho1 = source_state(source1)?;
    let rho2 = source_state(source2)?;
    DensityMatrix::new(kron(rho1.matrix(), rho2.matrix()))
}
