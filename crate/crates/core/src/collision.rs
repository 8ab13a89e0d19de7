//! Electron-phonon kernel, total scattering rate, the co-area quadrature
//! for the collision matrix, and the discrete collision operator.
//!
//! The kernel is a sum of mechanisms `S(k, k') = c δ(ε(k') − ε(k) − Δε)`
//! for the transition `k → k'`: elastic acoustic scattering (`Δε = 0`) and
//! optical absorption / emission (`Δε = ±ħω_p`).
//!
//! In reduced units (energy in `eps_star`, wave vector in `k_star`, time in
//! `t_star`) the shell measure `∫ δ(ε(k') − E) dk'` over the part of the
//! sphere inside a cell is `π s_E (1 + 2αE) · W(s_E)` with `W` the angular
//! weight of [`Rect::shell_weight`], and a full sphere has `W = 2`.

use std::f64::consts::PI;

use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::band::ReducedBand;
use crate::error::{Error, Result};
use crate::kgrid::{KGrid, Rect};
use crate::par::Execution;
use crate::params::{MaterialParams, Scales, CONSTANTS};
use crate::quadrature::adaptive_simpson;

/// Relative tolerance of each adaptive Simpson panel set.
pub const ORACLE_REL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MechanismKind {
    AcousticElastic,
    OpticalEmit,
    OpticalAbsorb,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterMechanism {
    pub kind: MechanismKind,
    /// Nondimensional coupling `c t_star k_star³ / (k_B T_L)`.
    pub coupling: f64,
    /// Energy gained by the electron, eV.
    pub energy_shift: f64,
}

/// A set of mechanisms together with the band and scales they are expressed in.
#[derive(Clone, Debug)]
pub struct PhononKernel {
    pub mechanisms: Vec<ScatterMechanism>,
    pub band: ReducedBand,
    pub eps_star: f64,
    pub t_star: f64,
    pub k_star: f64,
}

/// Bose-Einstein occupation of the optical mode.
pub fn phonon_occupation(mat: &MaterialParams) -> f64 {
    1.0 / ((mat.hbar_omega_p / mat.thermal_energy_ev()).exp() - 1.0)
}

impl PhononKernel {
    /// Acoustic (elastic, equipartition) plus optical absorption and
    /// emission with a deformation-potential coupling.
    pub fn silicon(mat: &MaterialParams, scales: &Scales) -> Self {
        let c = CONSTANTS;
        let kt = c.k_b * mat.lattice_temperature;
        let xi = mat.xi_d * c.q;
        let dtk = mat.dtk * c.q;
        let omega = mat.hbar_omega_p * c.q / c.hbar;
        // J m³ / s
        let c_ac = xi * xi * kt / (4.0 * PI * PI * c.hbar * mat.rho0 * mat.v_sound.powi(2));
        let c_op = dtk * dtk / (8.0 * PI * PI * mat.rho0 * omega);
        let nq = phonon_occupation(mat);
        let to_reduced = scales.t_star * scales.k_volume() / kt;
        Self {
            mechanisms: vec![
                ScatterMechanism {
                    kind: MechanismKind::AcousticElastic,
                    coupling: c_ac * to_reduced,
                    energy_shift: 0.0,
                },
                ScatterMechanism {
                    kind: MechanismKind::OpticalAbsorb,
                    coupling: c_op * nq * to_reduced,
                    energy_shift: mat.hbar_omega_p,
                },
                ScatterMechanism {
                    kind: MechanismKind::OpticalEmit,
                    coupling: c_op * (nq + 1.0) * to_reduced,
                    energy_shift: -mat.hbar_omega_p,
                },
            ],
            band: ReducedBand {
                alpha: mat.alpha_kane * scales.eps_star,
            },
            eps_star: scales.eps_star,
            t_star: scales.t_star,
            k_star: scales.k_star,
        }
    }

    /// Keeps only the mechanisms accepted by `keep`.
    pub fn filtered(&self, keep: impl Fn(MechanismKind) -> bool) -> Self {
        let mut out = self.clone();
        out.mechanisms.retain(|m| keep(m.kind));
        out
    }

    /// Multiplies every coupling by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.mechanisms {
            m.coupling *= factor;
        }
        out
    }

    #[inline]
    fn reduced_shift(&self, m: &ScatterMechanism) -> f64 {
        m.energy_shift / self.eps_star
    }

    /// Final energy and radius after mechanism `m` from radius `s`, or
    /// `None` below the emission threshold.
    #[inline]
    pub fn final_state(&self, m: &ScatterMechanism, s: f64) -> Option<(f64, f64)> {
        let e = self.band.energy(s);
        if m.energy_shift == 0.0 {
            return Some((e, s));
        }
        let ef = e + self.reduced_shift(m);
        (ef >= 0.0).then(|| (ef, self.band.radius(ef)))
    }

    /// Reduced partial rate of `m` at radius `s` over the full sphere of final states.
    #[inline]
    pub fn partial_rate_reduced(&self, m: &ScatterMechanism, s: f64) -> f64 {
        match self.final_state(m, s) {
            Some((ef, sf)) => m.coupling * 2.0 * PI * sf * self.band.nonparabolic_factor(ef),
            None => 0.0,
        }
    }

    /// Reduced total rate `Γ t_star` at radius `s`, all final states allowed.
    pub fn total_rate_reduced(&self, s: f64) -> f64 {
        self.mechanisms
            .iter()
            .map(|m| self.partial_rate_reduced(m, s))
            .sum()
    }

    /// Reduced rate into final states lying in `region` only.
    pub fn rate_into_reduced(&self, s: f64, region: &Rect) -> f64 {
        self.mechanisms
            .iter()
            .map(|m| match self.final_state(m, s) {
                Some((ef, sf)) => {
                    m.coupling * PI * sf * self.band.nonparabolic_factor(ef) * region.shell_weight(sf)
                }
                None => 0.0,
            })
            .sum()
    }

    /// Total scattering rate `Γ(k)` in 1/s for `k` in 1/m.
    pub fn total_rate(&self, k: [f64; 3]) -> f64 {
        let s = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt() / self.k_star;
        self.total_rate_reduced(s) / self.t_star
    }

    /// Majorant of the reduced rate over a domain whose largest radius is
    /// `s_max`. Each partial rate is nondecreasing in `s`.
    pub fn rate_majorant(&self, s_max: f64) -> f64 {
        self.total_rate_reduced(s_max) * (1.0 + 1e-12)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Oracle,
    MonteCarlo,
}

impl Provenance {
    pub fn code(self) -> u32 {
        match self {
            Provenance::Oracle => 0,
            Provenance::MonteCarlo => 1,
        }
    }

    pub fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(Provenance::Oracle),
            1 => Some(Provenance::MonteCarlo),
            _ => None,
        }
    }
}

/// Dense `K[α][β]` (row = receiving cell, column = source cell) in reduced
/// units `K t_star / k_star³`.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionMatrix {
    pub k: Array2<f64>,
    /// `∫_{C_α} Γ dk` in the same units, with Γ restricted to final states
    /// inside the k-domain.
    pub gamma_int: Vec<f64>,
    pub provenance: Provenance,
    col_sums: Vec<f64>,
}

impl CollisionMatrix {
    pub fn new(k: Array2<f64>, gamma_int: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let (n, m) = k.dim();
        if n != m {
            return Err(Error::Dimension {
                what: "collision matrix columns",
                expected: n,
                got: m,
            });
        }
        if gamma_int.len() != n {
            return Err(Error::Dimension {
                what: "gamma integrals",
                expected: n,
                got: gamma_int.len(),
            });
        }
        let col_sums = column_sums(&k);
        Ok(Self {
            k,
            gamma_int,
            provenance,
            col_sums,
        })
    }

    pub fn zeros(n: usize, provenance: Provenance) -> Self {
        Self::new(Array2::zeros((n, n)), vec![0.0; n], provenance).expect("square by construction")
    }

    pub fn len(&self) -> usize {
        self.gamma_int.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma_int.is_empty()
    }

    /// `∑_α K[α][β]`: the total outflow coefficient of each source cell.
    pub fn column_sums(&self) -> &[f64] {
        &self.col_sums
    }

    pub fn max_entry(&self) -> f64 {
        self.k.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }
}

fn column_sums(k: &Array2<f64>) -> Vec<f64> {
    let n = k.ncols();
    let mut sums = vec![0.0; n];
    for row in k.rows() {
        for (s, v) in sums.iter_mut().zip(row.iter()) {
            *s += *v;
        }
    }
    sums
}

/// `g_α = ∑_β (K[α][β] f_β − K[β][α] f_α)`.
pub fn apply_collision(kmat: &CollisionMatrix, f: &[f64]) -> Result<Vec<f64>> {
    let n = kmat.len();
    if f.len() != n {
        return Err(Error::Dimension {
            what: "state slice",
            expected: n,
            got: f.len(),
        });
    }
    let fv = ndarray::ArrayView1::from(f);
    let gain = kmat.k.dot(&fv);
    Ok(gain
        .iter()
        .zip(kmat.col_sums.iter().zip(f))
        .map(|(g, (l, fa))| g - l * fa)
        .collect())
}

/// Row-wise collision operator: `out[i, :] = apply_collision(f[i, :])` for
/// every spatial interval `i`, as one matrix product.
pub fn apply_collision_rows(kmat: &CollisionMatrix, f: ArrayView2<f64>, mut out: ArrayViewMut2<f64>) {
    ndarray::linalg::general_mat_mul(1.0, &f, &kmat.k.t(), 0.0, &mut out);
    for (mut orow, frow) in out.axis_iter_mut(Axis(0)).zip(f.axis_iter(Axis(0))) {
        for ((o, l), fa) in orow.iter_mut().zip(&kmat.col_sums).zip(frow.iter()) {
            *o -= l * fa;
        }
    }
}

/// Reduced-energy range `[ε(s_min), ε(s_max)]` of each cell.
fn energy_ranges(grid: &KGrid) -> Vec<(f64, f64)> {
    grid.cells
        .iter()
        .map(|c| (grid.band.energy(c.rect.s_min()), grid.band.energy(c.rect.s_max())))
        .collect()
}

/// `∫_{C_src} dk' · c ∫_{target} δ(ε(k) − ε(k') − Δε) dk` for one mechanism,
/// reduced to a 1-D integral over `s' = |k'|`. Returns 0 when the energy
/// windows cannot overlap.
fn transfer_integral(
    kernel: &PhononKernel,
    m: &ScatterMechanism,
    src: &Rect,
    target: &Rect,
    target_energy: (f64, f64),
) -> f64 {
    let band = &kernel.band;
    let shift = m.energy_shift / kernel.eps_star;
    let (e_lo, e_hi) = (target_energy.0 - shift, target_energy.1 - shift);
    if e_hi <= 0.0 {
        return 0.0;
    }
    let a = src.s_min().max(band.radius(e_lo.max(0.0)));
    let b = src.s_max().min(band.radius(e_hi));
    if !(b > a) {
        return 0.0;
    }
    let elastic = m.energy_shift == 0.0;
    let mut cuts: Vec<f64> = src.kinks().collect();
    for s in target.kinks() {
        if elastic {
            cuts.push(s);
        } else {
            let e = band.energy(s) - shift;
            if e > 0.0 {
                cuts.push(band.radius(e));
            }
        }
    }
    let integrand = |sp: f64| {
        let w_src = src.shell_weight(sp);
        if w_src == 0.0 {
            return 0.0;
        }
        let (ef, sf) = if elastic {
            (band.energy(sp), sp)
        } else {
            let ef = band.energy(sp) + shift;
            if ef <= 0.0 {
                return 0.0;
            }
            (ef, band.radius(ef))
        };
        2.0 * PI * sp * sp * w_src * PI * sf * band.nonparabolic_factor(ef) * target.shell_weight(sf)
    };
    m.coupling * integrate_pieces(&integrand, a, b, &mut cuts)
}

fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, cuts: &mut Vec<f64>) -> f64 {
    cuts.retain(|&c| c > a && c < b);
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * y.abs().max(1.0));
    cuts.windows(2)
        .map(|w| adaptive_simpson(f, w[0], w[1], ORACLE_REL_TOL, 0.0))
        .sum()
}

/// `∫_{C_α} Γ dk` for every cell, with final states restricted to the k-domain.
pub fn gamma_integrals(grid: &KGrid, kernel: &PhononKernel, exec: Execution) -> Vec<f64> {
    let domain = grid.domain();
    let e_dom = (0.0, grid.band.energy(domain.s_max()));
    exec.map_range(grid.len(), |a| {
        let rect = &grid.cells[a].rect;
        kernel
            .mechanisms
            .iter()
            .map(|m| transfer_integral(kernel, m, rect, &domain, e_dom))
            .sum()
    })
}

/// The collision matrix by co-area quadrature, one column per task.
pub fn k_matrix_oracle(grid: &KGrid, kernel: &PhononKernel, exec: Execution) -> CollisionMatrix {
    let n = grid.len();
    let ranges = energy_ranges(grid);
    let columns: Vec<Vec<f64>> = exec.map_range(n, |beta| {
        let src = &grid.cells[beta].rect;
        let mut col = vec![0.0; n];
        for m in &kernel.mechanisms {
            if m.coupling == 0.0 {
                continue;
            }
            for (alpha, entry) in col.iter_mut().enumerate() {
                *entry += transfer_integral(kernel, m, src, &grid.cells[alpha].rect, ranges[alpha]);
            }
        }
        col
    });
    let mut k = Array2::zeros((n, n));
    for (beta, col) in columns.into_iter().enumerate() {
        k.slice_mut(s![.., beta]).assign(&ndarray::Array1::from(col));
    }
    let gamma = gamma_integrals(grid, kernel, exec);
    CollisionMatrix::new(k, gamma, Provenance::Oracle).expect("square by construction")
}
