//! Time integration of the coupled transport and Poisson equations, moments,
//! diagnostics and run output.
//!
//! Each step is a two-stage strong-stability-preserving Runge-Kutta (Heun)
//! step with a Poisson solve before each stage. The step size is
//! `cfl · Transport::stable_dt` for the current field, clipped so that
//! snapshot times are hit exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Zip};

use crate::collision::CollisionMatrix;
use crate::error::{Error, Result};
use crate::field::{solve_poisson, PoissonProblem, PoissonSolution};
use crate::kgrid::KGrid;
use crate::par::Execution;
use crate::params::{build_scales, Config, Scales};
use crate::transport::{density, Boundary, StateField, Transport};

/// Moments of one state. Units: x in µm, density in 1/cm³, velocity in
/// cm/s, energy in eV, potentials in V.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub velocity: Vec<f64>,
    pub energy: Vec<f64>,
    /// Node potentials, `n_x + 1` values.
    pub potential: Vec<f64>,
    /// Intervals whose density was not positive; their velocity and
    /// energy are reported as 0.
    pub zero_density: Vec<bool>,
}

impl Moments {
    /// Potential at interval centers.
    pub fn center_potential(&self) -> Vec<f64> {
        self.potential.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,density,velocity,energy,potential")?;
        let v = self.center_potential();
        for i in 0..self.x.len() {
            writeln!(
                w,
                "{:.14e},{:.14e},{:.14e},{:.14e},{:.14e}",
                self.x[i], self.density[i], self.velocity[i], self.energy[i], v[i]
            )?;
        }
        Ok(())
    }

    pub fn write_potential_csv<W: Write>(&self, mut w: W, dx_um: f64) -> std::io::Result<()> {
        writeln!(w, "x,potential")?;
        for (j, v) in self.potential.iter().enumerate() {
            writeln!(w, "{:.14e},{:.14e}", j as f64 * dx_um, v)?;
        }
        Ok(())
    }
}

/// `potential` holds the node potentials belonging to `f`.
pub fn compute_moments(
    f: ArrayView2<f64>,
    grid: &KGrid,
    scales: &Scales,
    dx: f64,
    potential: &[f64],
) -> Moments {
    let n_x = f.nrows();
    let mut m = Moments {
        x: (0..n_x).map(|i| (i as f64 + 0.5) * dx * 1e6).collect(),
        density: Vec::with_capacity(n_x),
        velocity: Vec::with_capacity(n_x),
        energy: Vec::with_capacity(n_x),
        potential: potential.to_vec(),
        zero_density: Vec::with_capacity(n_x),
    };
    for row in f.outer_iter() {
        let (mut rho, mut flux, mut en) = (0.0, 0.0, 0.0);
        for (c, v) in grid.cells.iter().zip(row.iter()) {
            rho += c.measure * v;
            flux += c.eta_x * v;
            en += c.mean_energy * c.measure * v;
        }
        m.density.push(rho * scales.n_star * 1e-6);
        if rho > 0.0 {
            m.velocity.push(flux / rho * scales.v_star * 100.0);
            m.energy.push(en / rho);
            m.zero_density.push(false);
        } else {
            m.velocity.push(0.0);
            m.energy.push(0.0);
            m.zero_density.push(true);
        }
    }
    m
}

/// Discrete Maxwellian at the lattice temperature, scaled so each
/// interval's density equals its doping.
pub fn initialize(cfg: &Config, grid: &KGrid, scales: &Scales) -> StateField {
    let kt = cfg.material.thermal_energy_ev();
    let shape: Vec<f64> = grid.cells.iter().map(|c| (-c.mean_energy / kt).exp()).collect();
    let norm: f64 = grid.cells.iter().zip(&shape).map(|(c, w)| c.measure * w).sum();
    let doping = cfg.device.doping_profile();
    let values = Array2::from_shape_fn((doping.len(), grid.len()), |(i, a)| {
        shape[a] * (doping[i] / scales.n_star) / norm
    });
    StateField { values, time: 0.0 }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub step: usize,
    pub time_ps: f64,
    /// Percentage of `(α, i)` entries with `f < 0`.
    pub neg_fraction_pct: f64,
    pub pdf_min: f64,
    pub pdf_max: f64,
    /// Electrons per unit contact area, 1/m².
    pub total_charge: f64,
    /// Not written to CSV so outputs stay reproducible.
    pub wall_seconds: f64,
}

pub const DIAGNOSTICS_HEADER: &str = "step,time_ps,neg_fraction_pct,pdf_min,pdf_max,total_charge";

impl Diagnostics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e}",
            self.step, self.time_ps, self.neg_fraction_pct, self.pdf_min, self.pdf_max, self.total_charge
        )
    }
}

/// Solver state for one device run.
pub struct Simulation<'a> {
    pub cfg: &'a Config,
    pub grid: &'a KGrid,
    pub scales: Scales,
    pub state: StateField,
    pub step_count: usize,
    transport: Transport<'a>,
    poisson: PoissonProblem,
    doping: Vec<f64>,
    field: PoissonSolution,
}

impl<'a> Simulation<'a> {
    /// Starts from the equilibrium initial state.
    pub fn new(cfg: &'a Config, grid: &'a KGrid, kmat: &'a CollisionMatrix, exec: Execution) -> Result<Self> {
        let scales = build_scales(&cfg.material);
        let state = initialize(cfg, grid, &scales);
        Self::with_state(cfg, grid, kmat, exec, state)
    }

    pub fn with_state(
        cfg: &'a Config,
        grid: &'a KGrid,
        kmat: &'a CollisionMatrix,
        exec: Execution,
        state: StateField,
    ) -> Result<Self> {
        let dev = &cfg.device;
        if state.values.dim() != (dev.n_x, grid.len()) {
            return Err(Error::Dimension {
                what: "initial state",
                expected: dev.n_x * grid.len(),
                got: state.values.len(),
            });
        }
        let scales = build_scales(&cfg.material);
        let doping = dev.doping_profile();
        let bc = Boundary::charge_neutral(doping[0], doping[dev.n_x - 1], &scales)?;
        let dx = scales.nondimensionalize(crate::params::Quantity::Length, dev.dx());
        let transport = Transport::new(grid, kmat, dx, bc, exec)?;
        let poisson = PoissonProblem::uniform(dev.n_x, dev.length, cfg.material.eps_r, 0.0, dev.bias);
        let mut sim = Self {
            cfg,
            grid,
            scales,
            state,
            step_count: 0,
            transport,
            poisson,
            doping,
            field: PoissonSolution {
                potential: Vec::new(),
                efield: Vec::new(),
            },
        };
        sim.field = sim.solve_field(sim.state.values.view())?;
        Ok(sim)
    }

    /// Electron density per interval, 1/m³.
    pub fn density_si(&self, f: ArrayView2<f64>) -> Vec<f64> {
        f.outer_iter()
            .map(|row| density(self.grid, row) * self.scales.n_star)
            .collect()
    }

    fn solve_field(&self, f: ArrayView2<f64>) -> Result<PoissonSolution> {
        solve_poisson(&self.poisson, &self.density_si(f), &self.doping)
    }

    fn reduced_field(&self, sol: &PoissonSolution) -> Vec<f64> {
        sol.efield.iter().map(|e| e / self.scales.e_star).collect()
    }

    /// Field of the current state.
    pub fn field(&self) -> &PoissonSolution {
        &self.field
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    /// Step size (s) the CFL rule allows for the current field.
    pub fn cfl_dt(&self) -> f64 {
        let e = self.reduced_field(&self.field);
        let e_max = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.cfg.device.cfl * self.transport.stable_dt(e_max) * self.scales.t_star
    }

    /// One Heun step of at most `max_dt` seconds; returns the step taken.
    pub fn step(&mut self, max_dt: f64) -> Result<f64> {
        let dt_s = self.cfl_dt().min(max_dt);
        let dt = dt_s / self.scales.t_star;
        let f0 = &self.state.values;
        let e0 = self.reduced_field(&self.field);
        let k1 = self.transport.rhs_owned(f0.view(), &e0)?;
        let mut f1 = f0 + &(k1 * dt);
        let field1 = self.solve_field(f1.view())?;
        let e1 = self.reduced_field(&field1);
        let k2 = self.transport.rhs_owned(f1.view(), &e1)?;
        Zip::from(&mut f1)
            .and(f0)
            .and(&k2)
            .for_each(|a, &b, &c| *a = 0.5 * b + 0.5 * (*a + dt * c));
        self.step_count += 1;
        let time = self.state.time + dt_s;
        if let Some(bad) = f1.iter().position(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: self.step_count,
                time_ps: time * 1e12,
                detail: format!(
                    "non-finite pdf at interval {}, cell {}",
                    bad / self.grid.len(),
                    bad % self.grid.len()
                ),
            });
        }
        self.state = StateField { values: f1, time };
        self.field = self.solve_field(self.state.values.view())?;
        Ok(dt_s)
    }

    /// Steps until `t` (s) is reached exactly.
    pub fn advance_to(&mut self, t: f64, mut on_step: impl FnMut(&Self) -> Result<()>) -> Result<()> {
        while self.state.time < t {
            let left = t - self.state.time;
            // avoid a sliver step caused by rounding
            if left <= 1e-9 * self.scales.t_star {
                self.state.time = t;
                break;
            }
            let dt = self.cfl_dt();
            let target = if dt >= left {
                left
            } else if dt * 1.5 >= left {
                0.5 * left
            } else {
                dt
            };
            self.step(target)?;
            if (self.state.time - t).abs() <= 1e-9 * self.scales.t_star {
                self.state.time = t;
            }
            on_step(self)?;
        }
        Ok(())
    }

    pub fn moments(&self) -> Moments {
        compute_moments(
            self.state.values.view(),
            self.grid,
            &self.scales,
            self.cfg.device.dx(),
            &self.field.potential,
        )
    }

    pub fn diagnostics(&self, wall_seconds: f64) -> Diagnostics {
        let f = &self.state.values;
        let neg = f.iter().filter(|v| **v < 0.0).count();
        let (lo, hi) = f
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let dx = self.cfg.device.dx();
        Diagnostics {
            step: self.step_count,
            time_ps: self.state.time * 1e12,
            neg_fraction_pct: 100.0 * neg as f64 / f.len() as f64,
            pdf_min: lo,
            pdf_max: hi,
            total_charge: self.density_si(f.view()).iter().sum::<f64>() * dx,
            wall_seconds,
        }
    }
}

/// File-name form of a time in ps: shortest decimal with at least one
/// fractional digit, e.g. `0.5`, `3.0`.
pub fn time_label(t_seconds: f64) -> String {
    let ps = (t_seconds * 1e12 * 1e6).round() / 1e6;
    let s = format!("{ps}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn moments_file_name(t_seconds: f64) -> String {
    format!("moments_t{}.csv", time_label(t_seconds))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub final_time: f64,
    pub snapshots: Vec<PathBuf>,
    pub diagnostics: Vec<Diagnostics>,
}

impl RunSummary {
    pub fn max_neg_fraction_pct(&self) -> f64 {
        self.diagnostics.iter().fold(0.0, |m, d| m.max(d.neg_fraction_pct))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_snapshot(sim: &Simulation, out_dir: &Path, name: &str) -> Result<PathBuf> {
    let m = sim.moments();
    let path = out_dir.join(name);
    let mut w = create(&path)?;
    m.write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;
    let pname = name.replacen("moments_", "potential_", 1);
    let ppath = out_dir.join(pname);
    let mut w = create(&ppath)?;
    m.write_potential_csv(&mut w, sim.cfg.device.dx() * 1e6)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&ppath, e))?;
    Ok(path)
}

/// Runs the configured device to `t_final`, writing moment snapshots and
/// `diagnostics.csv` into `out_dir`. On divergence the last finite state's
/// moments are written to `moments_diverged.csv` before the error returns.
pub fn run(cfg: &Config, grid: &KGrid, kmat: &CollisionMatrix, out_dir: &Path, exec: Execution) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut sim = Simulation::new(cfg, grid, kmat, exec)?;
    let dev = &cfg.device;

    let mut stops: Vec<f64> = dev
        .snapshot_times
        .iter()
        .copied()
        .filter(|t| *t <= dev.t_final)
        .chain(std::iter::once(dev.t_final))
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let diag_path = out_dir.join("diagnostics.csv");
    let mut diag_w = create(&diag_path)?;
    let io = |e| Error::io(&diag_path, e);
    writeln!(diag_w, "{DIAGNOSTICS_HEADER}").map_err(io)?;
    let first = sim.diagnostics(0.0);
    writeln!(diag_w, "{}", first.csv_row()).map_err(io)?;
    let mut diagnostics = vec![first];

    let mut snapshots = Vec::new();
    if dev.snapshot_times.iter().any(|t| *t == 0.0) {
        snapshots.push(write_snapshot(&sim, out_dir, &moments_file_name(0.0))?);
    }
    let mut last_finite: Option<Moments> = None;
    let mut clock = Instant::now();
    for &stop in &stops {
        let result = sim.advance_to(stop, |s| {
            let d = s.diagnostics(clock.elapsed().as_secs_f64());
            clock = Instant::now();
            writeln!(diag_w, "{}", d.csv_row()).map_err(io)?;
            diagnostics.push(d);
            if dev.output_stride > 0 && s.step_count % dev.output_stride == 0 {
                write_snapshot(s, out_dir, &format!("moments_step{}.csv", s.step_count))?;
            }
            Ok(())
        });
        if let Err(err) = result {
            diag_w.flush().map_err(io)?;
            if matches!(err, Error::Diverged { .. }) {
                let m = last_finite.take().unwrap_or_else(|| sim.moments());
                let p = out_dir.join("moments_diverged.csv");
                let mut w = create(&p)?;
                m.write_csv(&mut w)
                    .and_then(|_| w.flush())
                    .map_err(|e| Error::io(&p, e))?;
            }
            return Err(err);
        }
        last_finite = Some(sim.moments());
        if dev.snapshot_times.iter().any(|t| *t == stop) && stop > 0.0 {
            snapshots.push(write_snapshot(&sim, out_dir, &moments_file_name(stop))?);
        }
    }
    diag_w.flush().map_err(io)?;
    Ok(RunSummary {
        steps: sim.step_count,
        final_time: sim.time(),
        snapshots,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::Provenance;
    use crate::kgrid::build_grid;
    use crate::params::DopingSegment;

    fn small_cfg() -> Config {
        let mut cfg = Config::default();
        cfg.device.n_x = 12;
        cfg.device.n_u = 12;
        cfg.device.n_r = 6;
        cfg
    }

    fn uniform(cfg: &mut Config, bias: f64) {
        cfg.device.bias = bias;
        cfg.device.doping = vec![DopingSegment { from: 0.0, to: cfg.device.length, value: 1e23 }];
    }

    #[test]
    fn initial_state_has_doping_density_and_no_current() {
        let cfg = Config::default();
        let grid = build_grid(&cfg).unwrap();
        let scales = build_scales(&cfg.material);
        let st = initialize(&cfg, &grid, &scales);
        let v = vec![0.0; cfg.device.n_x + 1];
        let m = compute_moments(st.values.view(), &grid, &scales, cfg.device.dx(), &v);
        for (i, d) in cfg.device.doping_profile().iter().enumerate() {
            let rho = m.density[i] * 1e6;
            assert!((rho - d).abs() <= 1e-12 * d);
            assert!(m.velocity[i].abs() < 1e-12 * 1e7);
        }
        // continuum mean energy of exp(−ε/kT) over k for the Kane band,
        // by a fine midpoint rule in |k|
        let kt = cfg.material.thermal_energy_ev();
        let band = grid.band;
        let (mut num, mut den) = (0.0, 0.0);
        let h = 1e-3;
        for j in 0..40_000 {
            let s = (j as f64 + 0.5) * h;
            let e = band.energy(s) * grid.eps_star;
            let w = s * s * (-e / kt).exp();
            num += e * w;
            den += w;
        }
        let kane = num / den;
        assert!(kane > 1.5 * kt * 1.02, "nonparabolicity raises the mean: {kane}");
        let e = m.energy[0];
        assert!((e - kane).abs() < 0.05 * kane, "mean energy {e} vs {kane}");
    }

    #[test]
    fn parabolic_equilibrium_energy_is_three_halves_kt() {
        let mut cfg = Config::default();
        cfg.material.alpha_kane = 0.0;
        let grid = build_grid(&cfg).unwrap();
        let scales = build_scales(&cfg.material);
        let st = initialize(&cfg, &grid, &scales);
        let v = vec![0.0; cfg.device.n_x + 1];
        let m = compute_moments(st.values.view(), &grid, &scales, cfg.device.dx(), &v);
        let target = 1.5 * cfg.material.thermal_energy_ev();
        assert!((target - 0.0388).abs() < 1e-4);
        for e in m.energy {
            assert!((e - target).abs() < 0.05 * target, "mean energy {e}");
        }
    }

    #[test]
    fn moments_of_constant_pdf() {
        let cfg = small_cfg();
        let grid = build_grid(&cfg).unwrap();
        let scales = build_scales(&cfg.material);
        let f = Array2::from_elem((3, grid.len()), 0.25);
        let m = compute_moments(f.view(), &grid, &scales, 1e-9, &[0.0, 1.0, 2.0, 3.0]);
        let expect = 0.25 * grid.total_measure() * scales.n_star * 1e-6;
        for i in 0..3 {
            assert!((m.density[i] - expect).abs() < 1e-12 * expect);
            assert!(m.velocity[i].abs() < 1e-6);
        }
        assert_eq!(m.center_potential(), vec![0.5, 1.5, 2.5]);
        let z = Array2::zeros((2, grid.len()));
        let m = compute_moments(z.view(), &grid, &scales, 1e-9, &[0.0; 3]);
        assert_eq!(m.zero_density, vec![true, true]);
        assert_eq!(m.velocity, vec![0.0, 0.0]);
    }

    #[test]
    fn unbiased_uniform_device_is_stationary() {
        let mut cfg = small_cfg();
        uniform(&mut cfg, 0.0);
        let grid = build_grid(&cfg).unwrap();
        let k = CollisionMatrix::zeros(grid.len(), Provenance::Oracle);
        let mut sim = Simulation::new(&cfg, &grid, &k, Execution::Parallel).unwrap();
        let f0 = sim.state.values.clone();
        for _ in 0..5 {
            sim.step(f64::INFINITY).unwrap();
        }
        let scale = f0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in sim.state.values.iter().zip(f0.iter()) {
            assert!((a - b).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn charge_is_conserved_when_contacts_balance() {
        // biased uniform device: inflow and outflow ghosts match the doping,
        // so the field is uniform and the total charge cannot change
        let mut cfg = small_cfg();
        uniform(&mut cfg, 0.1);
        let grid = build_grid(&cfg).unwrap();
        let k = CollisionMatrix::zeros(grid.len(), Provenance::Oracle);
        let mut sim = Simulation::new(&cfg, &grid, &k, Execution::Parallel).unwrap();
        let q0 = sim.diagnostics(0.0).total_charge;
        for _ in 0..3 {
            sim.step(f64::INFINITY).unwrap();
            let q = sim.diagnostics(0.0).total_charge;
            assert!((q - q0).abs() < 1e-10 * q0, "{q} vs {q0}");
        }
    }

    #[test]
    fn steps_respect_cfl_and_targets() {
        let cfg = small_cfg();
        let grid = build_grid(&cfg).unwrap();
        let k = CollisionMatrix::zeros(grid.len(), Provenance::Oracle);
        let mut sim = Simulation::new(&cfg, &grid, &k, Execution::Parallel).unwrap();
        let dt = sim.cfl_dt();
        assert!(dt > 0.0 && dt < 1e-13);
        sim.advance_to(2.5 * dt, |_| Ok(())).unwrap();
        assert_eq!(sim.time(), 2.5 * dt);
        let taken = sim.step(0.1 * dt).unwrap();
        assert_eq!(taken, 0.1 * dt);
    }

    #[test]
    fn time_labels() {
        assert_eq!(time_label(0.5e-12), "0.5");
        assert_eq!(time_label(3.0e-12), "3.0");
        assert_eq!(time_label(0.0), "0.0");
        assert_eq!(moments_file_name(1.25e-12), "moments_t1.25.csv");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let cfg = small_cfg();
        let grid = build_grid(&cfg).unwrap();
        let k = CollisionMatrix::zeros(5, Provenance::Oracle);
        assert!(Simulation::new(&cfg, &grid, &k, Execution::Sequential).is_err());
    }

    #[test]
    fn short_run_writes_outputs() {
        let mut cfg = small_cfg();
        cfg.device.t_final = 0.02e-12;
        cfg.device.snapshot_times = vec![0.0, 0.01e-12, 0.02e-12];
        let grid = build_grid(&cfg).unwrap();
        let k = CollisionMatrix::zeros(grid.len(), Provenance::Oracle);
        let dir = tempfile::tempdir().unwrap();
        let s = run(&cfg, &grid, &k, dir.path(), Execution::Parallel).unwrap();
        assert_eq!(s.final_time, 0.02e-12);
        assert_eq!(s.snapshots.len(), 3);
        for name in ["moments_t0.0.csv", "moments_t0.01.csv", "moments_t0.02.csv", "potential_t0.02.csv", "diagnostics.csv"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let text = std::fs::read_to_string(dir.path().join("moments_t0.02.csv")).unwrap();
        assert_eq!(text.lines().next(), Some("x,density,velocity,energy,potential"));
        assert_eq!(text.lines().count(), 1 + cfg.device.n_x);
        let diag = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
        assert_eq!(diag.lines().count(), 2 + s.steps);
        let pot = std::fs::read_to_string(dir.path().join("potential_t0.02.csv")).unwrap();
        let last: Vec<f64> = pot.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last[1], 2.0);
    }
}
