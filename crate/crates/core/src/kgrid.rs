//! Annular cell decomposition of the k-domain.
//!
//! With the field along `k_x`, k-space is parametrized as
//! `k = k_star (u, r cos θ, r sin θ)` and every cell is the rectangle
//! `[u_a, u_b] × [r_a, r_b]` in the `(u, r)` half-plane swept through
//! `θ ∈ [0, 2π]`. All stored coefficients are nondimensional:
//! measures in units of `k_star³`, `eta_x` in `k_star³ x_star / t_star`,
//! face areas in `k_star²`.
//!
//! Cells are numbered `α = iu * n_r + ir`.

use std::f64::consts::PI;
use std::io::Write;

use crate::band::{BandModel, ReducedBand};
use crate::error::{Error, Result};
use crate::params::{build_scales, Config, Scales};
use crate::quadrature::integrate_rect;

/// A rectangle in the `(u, r)` half-plane (`r ≥ 0`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub u_a: f64,
    pub u_b: f64,
    pub r_a: f64,
    pub r_b: f64,
}

impl Rect {
    /// Volume of the solid of revolution, `π (r_b² − r_a²)(u_b − u_a)`.
    pub fn measure(&self) -> f64 {
        PI * (self.r_b * self.r_b - self.r_a * self.r_a) * (self.u_b - self.u_a)
    }

    /// Smallest `|k|` in the cell.
    pub fn s_min(&self) -> f64 {
        let u = if self.u_a <= 0.0 && self.u_b >= 0.0 {
            0.0
        } else {
            self.u_a.abs().min(self.u_b.abs())
        };
        (u * u + self.r_a * self.r_a).sqrt()
    }

    /// Largest `|k|` in the cell.
    pub fn s_max(&self) -> f64 {
        let u = self.u_a.abs().max(self.u_b.abs());
        (u * u + self.r_b * self.r_b).sqrt()
    }

    /// Radii at which `shell_weight` is not smooth.
    pub fn kinks(&self) -> impl Iterator<Item = f64> {
        let (ua, ub, ra, rb) = (self.u_a, self.u_b, self.r_a, self.r_b);
        [
            self.s_min(),
            self.s_max(),
            ua.abs(),
            ub.abs(),
            ra,
            rb,
            ua.hypot(ra),
            ua.hypot(rb),
            ub.hypot(ra),
            ub.hypot(rb),
        ]
        .into_iter()
    }

    /// Angular weight of the sphere `|k| = s` inside the cell: the length of
    /// the set of `cos φ ∈ [−1, 1]` with `(s cos φ, s sin φ)` in the
    /// rectangle. A full sphere has weight 2, and the surface measure of the
    /// sphere inside the cell is `2π s² · shell_weight(s)`.
    pub fn shell_weight(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let hi2 = 1.0 - (self.r_a / s).powi(2);
        if hi2 <= 0.0 {
            return 0.0;
        }
        let hi = hi2.sqrt();
        let lo = (1.0 - (self.r_b / s).powi(2)).max(0.0).sqrt();
        let (c0, c1) = (self.u_a / s, self.u_b / s);
        overlap(c0, c1, lo, hi) + overlap(c0, c1, -hi, -lo)
    }

    pub fn contains(&self, u: f64, r: f64) -> bool {
        u >= self.u_a && u < self.u_b && r >= self.r_a && r < self.r_b
    }
}

#[inline]
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KCell {
    pub index: usize,
    pub iu: usize,
    pub ir: usize,
    pub rect: Rect,
    /// `M_α / k_star³`.
    pub measure: f64,
    /// x-component of `η_α = ∫ (1/ħ)∇_k ε dk`, nondimensional.
    pub eta_x: f64,
    /// Area of each u-face, `π (r_b² − r_a²)`.
    pub face_area: f64,
    /// Cell average of the band energy, eV.
    pub mean_energy: f64,
    /// Neighbor at larger `u`.
    pub up_neighbor: Option<usize>,
    /// Neighbor at smaller `u`.
    pub down_neighbor: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub n_u: usize,
    pub n_r: usize,
    pub u_max: f64,
    pub r_max: f64,
}

impl GridSpec {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            n_u: cfg.device.n_u,
            n_r: cfg.device.n_r,
            u_max: cfg.device.resolved_u_max(&cfg.material),
            r_max: cfg.device.resolved_r_max(&cfg.material),
        }
    }
}

#[derive(Clone, Debug)]
pub struct KGrid {
    pub cells: Vec<KCell>,
    pub n_u: usize,
    pub n_r: usize,
    pub u_max: f64,
    pub r_max: f64,
    pub k_star: f64,
    /// eV per reduced energy unit.
    pub eps_star: f64,
    pub band: ReducedBand,
    pub u_breaks: Vec<f64>,
    pub r_breaks: Vec<f64>,
}

/// Returned by [`KGrid::locate`] for points outside `[−u_max, u_max) × [0, r_max)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutOfDomain;

/// Builds the grid described by a validated configuration.
pub fn build_grid(cfg: &Config) -> Result<KGrid> {
    let scales = build_scales(&cfg.material);
    KGrid::build(
        GridSpec::from_config(cfg),
        &BandModel::from_material(&cfg.material),
        &scales,
    )
}

impl KGrid {
    pub fn build(spec: GridSpec, band: &BandModel, scales: &Scales) -> Result<Self> {
        if spec.n_u == 0 || spec.n_r == 0 {
            return Err(Error::validation("grid", "n_u and n_r must be >= 1"));
        }
        if !(spec.u_max > 0.0 && spec.r_max > 0.0) {
            return Err(Error::validation("grid", "u_max and r_max must be > 0"));
        }
        let reduced = band.reduced(scales.eps_star);
        let (n_u, n_r) = (spec.n_u, spec.n_r);
        let u_breaks: Vec<f64> = (0..=n_u)
            .map(|j| {
                if j == 0 {
                    -spec.u_max
                } else if j == n_u {
                    spec.u_max
                } else {
                    (2.0 * j as f64 - n_u as f64) * spec.u_max / n_u as f64
                }
            })
            .collect();
        let r_breaks: Vec<f64> = (0..=n_r)
            .map(|j| {
                if j == n_r {
                    spec.r_max
                } else {
                    j as f64 * spec.r_max / n_r as f64
                }
            })
            .collect();

        let mut cells = Vec::with_capacity(n_u * n_r);
        for iu in 0..n_u {
            for ir in 0..n_r {
                let rect = Rect {
                    u_a: u_breaks[iu],
                    u_b: u_breaks[iu + 1],
                    r_a: r_breaks[ir],
                    r_b: r_breaks[ir + 1],
                };
                let index = iu * n_r + ir;
                cells.push(KCell {
                    index,
                    iu,
                    ir,
                    rect,
                    measure: rect.measure(),
                    eta_x: 0.0,
                    face_area: PI * (rect.r_b * rect.r_b - rect.r_a * rect.r_a),
                    mean_energy: cell_mean_energy(&rect, &reduced) * scales.eps_star,
                    up_neighbor: (iu + 1 < n_u).then(|| index + n_r),
                    down_neighbor: (iu > 0).then(|| index - n_r),
                });
            }
        }
        // η on the u ≥ 0 half, mirrored so that η(−u) = −η(u) holds exactly
        for iu in n_u / 2..n_u {
            let mirror = n_u - 1 - iu;
            for ir in 0..n_r {
                let a = iu * n_r + ir;
                let eta = if mirror == iu {
                    0.0
                } else {
                    cell_eta_x(&cells[a].rect, &reduced)
                };
                cells[a].eta_x = eta;
                cells[mirror * n_r + ir].eta_x = -eta;
            }
        }
        Ok(Self {
            cells,
            n_u,
            n_r,
            u_max: spec.u_max,
            r_max: spec.r_max,
            k_star: scales.k_star,
            eps_star: scales.eps_star,
            band: reduced,
            u_breaks,
            r_breaks,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn du(&self) -> f64 {
        2.0 * self.u_max / self.n_u as f64
    }

    pub fn dr(&self) -> f64 {
        self.r_max / self.n_r as f64
    }

    /// The whole k-domain as a single rectangle.
    pub fn domain(&self) -> Rect {
        Rect {
            u_a: -self.u_max,
            u_b: self.u_max,
            r_a: 0.0,
            r_b: self.r_max,
        }
    }

    pub fn total_measure(&self) -> f64 {
        self.domain().measure()
    }

    /// Index of the cell reflected through `u = 0`.
    pub fn mirror(&self, alpha: usize) -> usize {
        let c = &self.cells[alpha];
        (self.n_u - 1 - c.iu) * self.n_r + c.ir
    }

    /// Cell containing the dimensionless point `(u, r)`, half-open on every side.
    pub fn locate(&self, u: f64, r: f64) -> std::result::Result<usize, OutOfDomain> {
        if !(u >= -self.u_max && u < self.u_max && r >= 0.0 && r < self.r_max) {
            return Err(OutOfDomain);
        }
        let iu = bin(&self.u_breaks, (u + self.u_max) / self.du(), u);
        let ir = bin(&self.r_breaks, r / self.dr(), r);
        Ok(iu * self.n_r + ir)
    }

    /// CSV dump: `index,u_a,u_b,r_a,r_b,measure,eta_x,mean_energy`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,u_a,u_b,r_a,r_b,measure,eta_x,mean_energy")?;
        for c in &self.cells {
            let r = &c.rect;
            writeln!(
                w,
                "{},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e}",
                c.index, r.u_a, r.u_b, r.r_a, r.r_b, c.measure, c.eta_x, c.mean_energy
            )?;
        }
        Ok(())
    }
}

/// Bin index from a guess, corrected against the stored breakpoints.
#[inline]
fn bin(breaks: &[f64], guess: f64, x: f64) -> usize {
    let n = breaks.len() - 1;
    let mut i = (guess.max(0.0) as usize).min(n - 1);
    while i > 0 && x < breaks[i] {
        i -= 1;
    }
    while i + 1 < n && x >= breaks[i + 1] {
        i += 1;
    }
    i
}

/// `2π ∫∫ r u / (1 + 2αε) dr du`: the nondimensional `η_x` of a cell.
pub fn cell_eta_x(rect: &Rect, band: &ReducedBand) -> f64 {
    2.0 * PI
        * integrate_rect(
            |u, r| {
                let e = band.energy(u.hypot(r));
                r * u / band.nonparabolic_factor(e)
            },
            (rect.u_a, rect.u_b),
            (rect.r_a, rect.r_b),
        )
}

/// Cell average of the reduced energy.
pub fn cell_mean_energy(rect: &Rect, band: &ReducedBand) -> f64 {
    let integral = 2.0
        * PI
        * integrate_rect(
            |u, r| r * band.energy(u.hypot(r)),
            (rect.u_a, rect.u_b),
            (rect.r_a, rect.r_b),
        );
    integral / rect.measure()
}
