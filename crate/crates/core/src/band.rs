//! Energy band `ε(k)`.
//!
//! The Kane model defines `ε` implicitly by `ε (1 + α ε) = ħ²|k|²/(2 m*)`.
//! The positive root is evaluated as `2γ / (1 + sqrt(1 + 4αγ))`, which is
//! exact at `α = 0` and free of cancellation for small `αγ`.

use crate::error::{Error, Result};
use crate::params::{MaterialParams, CONSTANTS};

/// The band interface used by the solver. Only isotropic analytic bands
/// ship; a tabulated band would implement the same three operations.
pub trait BandStructure {
    /// Energy in eV at wave vector `k` (1/m).
    fn energy(&self, k: [f64; 3]) -> f64;
    /// `(1/ħ) ∇_k ε` in m/s.
    fn group_velocity(&self, k: [f64; 3]) -> [f64; 3];
    /// `|k|` (1/m) at energy `e` (eV).
    fn wavevector_of_energy(&self, e: f64) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BandKind {
    Parabolic,
    Kane,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandModel {
    pub kind: BandKind,
    /// kg
    pub m_star: f64,
    /// 1/eV, forced to zero for `Parabolic`.
    pub alpha_kane: f64,
}

impl BandModel {
    pub fn kane(m_star: f64, alpha_kane: f64) -> Self {
        Self {
            kind: if alpha_kane == 0.0 {
                BandKind::Parabolic
            } else {
                BandKind::Kane
            },
            m_star,
            alpha_kane,
        }
    }

    pub fn parabolic(m_star: f64) -> Self {
        Self {
            kind: BandKind::Parabolic,
            m_star,
            alpha_kane: 0.0,
        }
    }

    pub fn from_material(mat: &MaterialParams) -> Self {
        Self::kane(mat.m_star(), mat.alpha_kane)
    }

    pub fn alpha(&self) -> f64 {
        match self.kind {
            BandKind::Parabolic => 0.0,
            BandKind::Kane => self.alpha_kane,
        }
    }

    /// Parabolic energy `ħ²k²/(2m*)` in eV.
    fn gamma(&self, kmag: f64) -> f64 {
        let h = CONSTANTS.hbar;
        h * h * kmag * kmag / (2.0 * self.m_star) / CONSTANTS.q
    }

    /// Energy in eV as a function of `|k|`.
    pub fn energy_of_magnitude(&self, kmag: f64) -> f64 {
        kane_root(self.gamma(kmag), self.alpha())
    }

    /// `dε/d|k|` in eV·m.
    pub fn energy_slope(&self, kmag: f64) -> f64 {
        let e = self.energy_of_magnitude(kmag);
        let h = CONSTANTS.hbar;
        h * h * kmag / (self.m_star * (1.0 + 2.0 * self.alpha() * e)) / CONSTANTS.q
    }

    /// The same band in units where energies are multiples of `eps_star`
    /// (eV) and wave vectors multiples of `sqrt(2 m* eps_star q)/ħ`.
    pub fn reduced(&self, eps_star: f64) -> ReducedBand {
        ReducedBand {
            alpha: self.alpha() * eps_star,
        }
    }
}

impl BandStructure for BandModel {
    fn energy(&self, k: [f64; 3]) -> f64 {
        self.energy_of_magnitude(norm(k))
    }

    fn group_velocity(&self, k: [f64; 3]) -> [f64; 3] {
        let e = self.energy(k);
        let f = CONSTANTS.hbar / (self.m_star * (1.0 + 2.0 * self.alpha() * e));
        [f * k[0], f * k[1], f * k[2]]
    }

    fn wavevector_of_energy(&self, e: f64) -> Result<f64> {
        if e < 0.0 || e.is_nan() {
            return Err(Error::NegativeEnergy(e));
        }
        let gamma = e * (1.0 + self.alpha() * e);
        Ok((2.0 * self.m_star * gamma * CONSTANTS.q).sqrt() / CONSTANTS.hbar)
    }
}

/// Positive root of `ε (1 + α ε) = γ`.
#[inline]
pub fn kane_root(gamma: f64, alpha: f64) -> f64 {
    2.0 * gamma / (1.0 + (1.0 + 4.0 * alpha * gamma).sqrt())
}

fn norm(k: [f64; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
}

/// Isotropic band in reduced units: `ε (1 + α ε) = s²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedBand {
    pub alpha: f64,
}

impl ReducedBand {
    #[inline]
    pub fn energy(&self, s: f64) -> f64 {
        kane_root(s * s, self.alpha)
    }

    /// Inverse of `energy`; `e` must be non-negative.
    #[inline]
    pub fn radius(&self, e: f64) -> f64 {
        (e * (1.0 + self.alpha * e)).sqrt()
    }

    /// `1 + 2 α ε`, the nonparabolic correction of the velocity and of the
    /// density of states.
    #[inline]
    pub fn nonparabolic_factor(&self, e: f64) -> f64 {
        1.0 + 2.0 * self.alpha * e
    }
}
