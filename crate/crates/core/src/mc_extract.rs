//! Collision-matrix extraction from a short homogeneous Monte Carlo run.
//!
//! For each source cell `β` the field-free, space-homogeneous kinetic
//! equation is started from the indicator of `C_β` and advanced over a
//! short `Δt` with the null-collision method. To first order in `Δt`,
//!
//! ```text
//! K[α][β] ≈ (∫_{C_α} f_MC(Δt) dk − δ_αβ M_α) / Δt + δ_αβ ∫_{C_α} Γ dk
//! ```
//!
//! and `∫_{C_α} f_MC dk` is the particle weight times the number of
//! particles that end in `C_α`.
//!
//! The default `Δt` is a fixed fraction of the inverse of the largest total
//! rate in the k-domain. Each source cell may instead use the largest rate
//! inside that cell, which lets many more low-energy particles scatter.
//!
//! Random numbers: source cell `β` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `β`, consumed in
//! particle order. Columns are therefore independent of scheduling.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::collision::{CollisionMatrix, PhononKernel, Provenance};
use crate::error::{Error, Result};
use crate::kgrid::KGrid;
use crate::par::Execution;

/// Upper bound on `Δt · Γ_max`.
pub const MAX_DT_GAMMA: f64 = 0.1;
/// Default `Δt · Γ_max`.
pub const AUTO_DT_GAMMA: f64 = 0.05;
pub const MIN_PARTICLES: u64 = 1000;

const BATCH: usize = 1 << 16;

/// Dimensionless `(u, r, θ)` coordinates of one particle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub u: f64,
    pub r: f64,
    pub theta: f64,
}

impl Particle {
    #[inline]
    pub fn radius(&self) -> f64 {
        self.u.hypot(self.r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<Particle>,
    /// Measure carried by each particle, `M_β / n`, reduced units.
    pub weight: f64,
    pub source_cell: usize,
}

impl ParticleEnsemble {
    /// `n` particles distributed uniformly in `dk` over cell `beta`.
    pub fn seed_uniform<R: Rng>(grid: &KGrid, beta: usize, n: usize, rng: &mut R) -> Self {
        let mut particles = Vec::with_capacity(n);
        fill_uniform(grid, beta, n, rng, &mut particles);
        Self {
            particles,
            weight: grid.cells[beta].measure / n as f64,
            source_cell: beta,
        }
    }
}

fn fill_uniform<R: Rng>(grid: &KGrid, beta: usize, n: usize, rng: &mut R, out: &mut Vec<Particle>) {
    let rect = grid.cells[beta].rect;
    let (ra2, rb2) = (rect.r_a * rect.r_a, rect.r_b * rect.r_b);
    out.clear();
    out.extend((0..n).map(|_| {
        let u = rect.u_a + (rect.u_b - rect.u_a) * rng.gen::<f64>();
        // linear density in r
        let r = (ra2 + (rb2 - ra2) * rng.gen::<f64>()).sqrt();
        let theta = 2.0 * PI * rng.gen::<f64>();
        Particle { u, r, theta }
    }));
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvolveStats {
    /// Accepted scatterings whose final state lies in the k-domain.
    pub real_events: u64,
    /// Scatterings rejected because the final state left the k-domain.
    pub rejected_escapes: u64,
}

impl std::ops::AddAssign for EvolveStats {
    fn add_assign(&mut self, o: Self) {
        self.real_events += o.real_events;
        self.rejected_escapes += o.rejected_escapes;
    }
}

/// Null-collision sampler over the grid's k-domain.
///
/// Candidate events arrive at a constant majorant rate. Between events the
/// wave vector is frozen, so after a real event the majorant may be raised
/// to cover the new state without biasing the process.
struct NullCollision<'a> {
    kernel: &'a PhononKernel,
    gamma_max: f64,
    u_max: f64,
    r_max: f64,
    dt: f64,
    /// Probability of at least one candidate event in `dt`.
    p_event: f64,
}

impl<'a> NullCollision<'a> {
    fn new(kernel: &'a PhononKernel, grid: &KGrid, gamma_max: f64, dt: f64) -> Self {
        Self {
            kernel,
            gamma_max,
            u_max: grid.u_max,
            r_max: grid.r_max,
            dt,
            p_event: -(-gamma_max * dt).exp_m1(),
        }
    }

    /// The particle's total rate must not exceed `gamma_max`.
    #[inline]
    fn advance<R: Rng>(&self, p: &mut Particle, rng: &mut R, stats: &mut EvolveStats) {
        if self.gamma_max == 0.0 {
            return;
        }
        let first = rng.gen::<f64>();
        if first >= self.p_event {
            return;
        }
        let mut g = self.gamma_max;
        let mut t = -(-first).ln_1p() / g;
        while t < self.dt {
            if self.scatter(p, g, rng, stats) {
                g = g.max(self.kernel.rate_majorant(p.radius()));
            }
            t += -(-rng.gen::<f64>()).ln_1p() / g;
        }
    }

    /// Returns true when the particle moved.
    fn scatter<R: Rng>(&self, p: &mut Particle, g: f64, rng: &mut R, stats: &mut EvolveStats) -> bool {
        let s = p.radius();
        let mut x = rng.gen::<f64>() * g;
        for m in &self.kernel.mechanisms {
            let rate = self.kernel.partial_rate_reduced(m, s);
            if x >= rate {
                x -= rate;
                continue;
            }
            let (_, sf) = self
                .kernel
                .final_state(m, s)
                .expect("positive partial rate implies an allowed final state");
            let c = 2.0 * rng.gen::<f64>() - 1.0;
            let theta = 2.0 * PI * rng.gen::<f64>();
            let u = sf * c;
            let r = sf * (1.0 - c * c).max(0.0).sqrt();
            if u >= -self.u_max && u < self.u_max && r < self.r_max {
                *p = Particle { u, r, theta };
                stats.real_events += 1;
                return true;
            }
            stats.rejected_escapes += 1;
            return false;
        }
        // self-scattering
        false
    }
}

/// Majorant (reduced) of the total rate over cell `beta`; rates grow with `|k|`.
fn cell_majorant(kernel: &PhononKernel, grid: &KGrid, beta: usize) -> f64 {
    kernel.rate_majorant(grid.cells[beta].rect.s_max())
}

fn check_dt(dt_seconds: f64, gamma_max_reduced: f64, t_star: f64) -> Result<f64> {
    let product = dt_seconds * gamma_max_reduced / t_star;
    if !(dt_seconds > 0.0 && dt_seconds.is_finite()) || product > MAX_DT_GAMMA {
        return Err(Error::TimeStep {
            dt: dt_seconds,
            product,
            limit: MAX_DT_GAMMA,
        });
    }
    Ok(dt_seconds / t_star)
}

/// `AUTO_DT_GAMMA / Γ_max` in seconds, with `Γ_max` bounding the total rate
/// over the whole k-domain (one `t_star` for a zero kernel).
pub fn auto_dt(kernel: &PhononKernel, grid: &KGrid) -> f64 {
    let g = kernel.rate_majorant(grid.domain().s_max());
    if g > 0.0 {
        AUTO_DT_GAMMA / g * kernel.t_star
    } else {
        kernel.t_star
    }
}

/// Like [`auto_dt`] with the rate bounded over source cell `beta` only.
pub fn cell_dt(kernel: &PhononKernel, grid: &KGrid, beta: usize) -> f64 {
    let g = cell_majorant(kernel, grid, beta);
    if g > 0.0 {
        AUTO_DT_GAMMA / g * kernel.t_star
    } else {
        kernel.t_star
    }
}

/// Advances every particle over `dt_seconds` of field-free, homogeneous
/// scattering. Positions in k change only at real scattering events.
/// `dt_seconds` times the largest initial rate in the ensemble must not
/// exceed [`MAX_DT_GAMMA`].
pub fn evolve_homogeneous<R: Rng>(
    ensemble: &mut ParticleEnsemble,
    kernel: &PhononKernel,
    grid: &KGrid,
    dt_seconds: f64,
    rng: &mut R,
) -> Result<EvolveStats> {
    let g0 = ensemble
        .particles
        .iter()
        .map(|p| kernel.rate_majorant(p.radius()))
        .fold(0.0f64, f64::max);
    let dt = check_dt(dt_seconds, g0, kernel.t_star)?;
    let nc = NullCollision::new(kernel, grid, g0, dt);
    let mut stats = EvolveStats::default();
    for p in &mut ensemble.particles {
        nc.advance(p, rng, &mut stats);
    }
    Ok(stats)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtChoice {
    /// See [`auto_dt`].
    Auto,
    /// Each source cell gets its own step, see [`cell_dt`].
    PerCell,
    /// The same step for every source cell.
    Seconds(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractOptions {
    /// Particles per source cell.
    pub n_particles: u64,
    pub dt: DtChoice,
    pub seed: u64,
    pub exec: Execution,
}

/// Absolute errors are in reduced units; relative ones are divided by the
/// largest reference entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub max_rel: f64,
    pub mean_rel: f64,
}

pub fn compare(estimate: &CollisionMatrix, reference: &CollisionMatrix) -> Result<ErrorMetrics> {
    if estimate.len() != reference.len() {
        return Err(Error::Dimension {
            what: "reference matrix",
            expected: estimate.len(),
            got: reference.len(),
        });
    }
    let mut max_abs = 0.0f64;
    let mut sum = 0.0;
    for (a, b) in estimate.k.iter().zip(reference.k.iter()) {
        let d = (a - b).abs();
        max_abs = max_abs.max(d);
        sum += d;
    }
    let mean_abs = sum / estimate.k.len() as f64;
    let norm = reference.max_entry();
    let (max_rel, mean_rel) = if norm > 0.0 {
        (max_abs / norm, mean_abs / norm)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ErrorMetrics {
        max_abs,
        mean_abs,
        max_rel,
        mean_rel,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractionReport {
    pub k_mc: CollisionMatrix,
    pub errors: Option<ErrorMetrics>,
    pub n_particles: u64,
    /// Step used for each source cell, s.
    pub dt: Vec<f64>,
    pub seed: u64,
    /// Total particles binned into cells, over all source cells.
    pub binned: u64,
    /// Particles found outside the k-domain after evolution.
    pub escaped: u64,
    pub stats: EvolveStats,
}

struct ColumnResult {
    counts: Vec<u64>,
    escaped: u64,
    stats: EvolveStats,
}

fn run_column(grid: &KGrid, nc: &NullCollision, beta: usize, n: u64, seed: u64) -> ColumnResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(beta as u64);
    let mut counts = vec![0u64; grid.len()];
    let mut escaped = 0;
    let mut stats = EvolveStats::default();
    let mut buf = Vec::with_capacity(BATCH.min(n as usize));
    let mut left = n;
    while left > 0 {
        let take = left.min(BATCH as u64) as usize;
        fill_uniform(grid, beta, take, &mut rng, &mut buf);
        for p in &mut buf {
            nc.advance(p, &mut rng, &mut stats);
            match grid.locate(p.u, p.r) {
                Ok(a) => counts[a] += 1,
                Err(_) => escaped += 1,
            }
        }
        left -= take as u64;
    }
    ColumnResult {
        counts,
        escaped,
        stats,
    }
}

/// Estimates every column of the collision matrix by Monte Carlo.
///
/// `gamma_int` supplies `∫_{C_α} Γ dk` for the diagonal; with a
/// `reference` matrix the report carries error metrics against it.
pub fn extract_k_matrix(
    grid: &KGrid,
    kernel: &PhononKernel,
    gamma_int: &[f64],
    opts: &ExtractOptions,
    reference: Option<&CollisionMatrix>,
) -> Result<ExtractionReport> {
    let n = grid.len();
    if gamma_int.len() != n {
        return Err(Error::Dimension {
            what: "gamma integrals",
            expected: n,
            got: gamma_int.len(),
        });
    }
    if opts.n_particles < MIN_PARTICLES {
        return Err(Error::validation(
            "particles",
            format!("need at least {MIN_PARTICLES}, got {}", opts.n_particles),
        ));
    }
    let dt_seconds: Vec<f64> = (0..n)
        .map(|beta| match opts.dt {
            DtChoice::Auto => auto_dt(kernel, grid),
            DtChoice::PerCell => cell_dt(kernel, grid, beta),
            DtChoice::Seconds(s) => s,
        })
        .collect();
    let steps = (0..n)
        .map(|beta| {
            let g = cell_majorant(kernel, grid, beta);
            check_dt(dt_seconds[beta], g, kernel.t_star).map(|dt| (g, dt))
        })
        .collect::<Result<Vec<_>>>()?;
    let np = opts.n_particles;

    let columns = opts.exec.map_range(n, |beta| {
        let (g, dt) = steps[beta];
        let nc = NullCollision::new(kernel, grid, g, dt);
        run_column(grid, &nc, beta, np, opts.seed)
    });

    let mut k = Array2::zeros((n, n));
    let mut binned = 0;
    let mut escaped = 0;
    let mut stats = EvolveStats::default();
    for (beta, col) in columns.into_iter().enumerate() {
        let m_beta = grid.cells[beta].measure;
        let dt = steps[beta].1;
        for (alpha, &count) in col.counts.iter().enumerate() {
            let mass = m_beta * (count as f64 / np as f64);
            let value = if alpha == beta {
                (mass - grid.cells[alpha].measure) / dt + gamma_int[alpha]
            } else {
                mass / dt
            };
            k[[alpha, beta]] = value.max(0.0);
        }
        binned += col.counts.iter().sum::<u64>();
        escaped += col.escaped;
        stats += col.stats;
    }
    let k_mc = CollisionMatrix::new(k, gamma_int.to_vec(), Provenance::MonteCarlo)?;
    let errors = reference.map(|r| compare(&k_mc, r)).transpose()?;
    Ok(ExtractionReport {
        k_mc,
        errors,
        n_particles: np,
        dt: dt_seconds,
        seed: opts.seed,
        binned,
        escaped,
        stats,
    })
}

pub const REPORT_HEADER: &str =
    "particles,max_error,mean_error,max_error_abs,mean_error_abs,dt_min_s,dt_max_s,seed,rejected_escapes";

/// Error table, one row per report: normalized max/mean errors first,
/// then absolute errors in reduced units.
pub fn write_error_report<W: Write>(reports: &[&ExtractionReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in reports {
        let e = r.errors.unwrap_or(ErrorMetrics {
            max_abs: f64::NAN,
            mean_abs: f64::NAN,
            max_rel: f64::NAN,
            mean_rel: f64::NAN,
        });
        let dt_min = r.dt.iter().copied().fold(f64::INFINITY, f64::min);
        let dt_max = r.dt.iter().copied().fold(0.0, f64::max);
        writeln!(
            w,
            "{},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e},{},{}",
            r.n_particles,
            e.max_rel,
            e.mean_rel,
            e.max_abs,
            e.mean_abs,
            dt_min,
            dt_max,
            r.seed,
            r.stats.rejected_escapes
        )?;
    }
    Ok(())
}
