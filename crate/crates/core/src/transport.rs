//! Semidiscrete right-hand side of the transport equation.
//!
//! For every spatial interval `i` and k-cell `α`, in reduced units,
//!
//! ```text
//! M_α df_α/dt = −η_α (upwind x-difference of f_α)
//!               + E A_α (f̂_upper − f̂_lower)
//!               + ∑_β (K[α][β] f_β − K[β][α] f_α)
//! ```
//!
//! where `E` is the reduced field of the interval. Electrons move toward
//! smaller `u` when `E > 0`, so the face values are taken from the cell
//! above each face in that case and from the cell below otherwise. Faces
//! on the `u`-boundary of the k-domain carry `f̂ = 0`.
//!
//! States are stored as `n_x × N` arrays: row `i` holds every `f_α(x_i)`,
//! which turns the collision term into one matrix product.

use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2};

use crate::collision::{apply_collision_rows, CollisionMatrix};
use crate::error::{Error, Result};
use crate::kgrid::KGrid;
use crate::par::Execution;
use crate::params::Scales;

/// Rows per work item. Fixed so the floating-point work per row does not
/// depend on the execution policy.
const ROWS_PER_CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct StateField {
    /// `values[[i, α]] = f_α(x_i)`, reduced pdf.
    pub values: Array2<f64>,
    /// s
    pub time: f64,
}

impl StateField {
    pub fn n_x(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Spatial boundary treatment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    /// Ghost states are the boundary interval's state rescaled to the
    /// contact doping. Dopings are in units of the density scale.
    ChargeNeutral { left: f64, right: f64 },
    /// Wraps around; used for conservation checks.
    Periodic,
}

impl Boundary {
    /// Charge-neutral contacts with dopings given in 1/m³.
    pub fn charge_neutral(left: f64, right: f64, scales: &Scales) -> Result<Self> {
        for (side, d) in [("left contact doping", left), ("right contact doping", right)] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::validation(side, format!("must be positive, got {d}")));
            }
        }
        Ok(Boundary::ChargeNeutral {
            left: left / scales.n_star,
            right: right / scales.n_star,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ghosts {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

/// Reduced density `∑_α M_α f_α` of one interval.
pub fn density(grid: &KGrid, f: ArrayView1<f64>) -> f64 {
    grid.cells.iter().zip(f.iter()).map(|(c, v)| c.measure * v).sum()
}

/// Ghost states beyond both ends of the x-domain.
pub fn apply_bc(f: ArrayView2<f64>, grid: &KGrid, bc: &Boundary) -> Result<Ghosts> {
    let n_x = f.nrows();
    let first = f.row(0);
    let last = f.row(n_x - 1);
    match *bc {
        Boundary::Periodic => Ok(Ghosts {
            left: last.to_vec(),
            right: first.to_vec(),
        }),
        Boundary::ChargeNeutral { left, right } => {
            let scaled = |row: ArrayView1<f64>, doping: f64| {
                let rho = density(grid, row);
                if !(rho > 0.0) {
                    return Err(Error::ZeroBoundaryDensity(rho));
                }
                let c = doping / rho;
                Ok(row.iter().map(|v| v * c).collect())
            };
            Ok(Ghosts {
                left: scaled(first, left)?,
                right: scaled(last, right)?,
            })
        }
    }
}

/// Everything needed to evaluate the right-hand side for a fixed grid,
/// collision matrix and boundary treatment.
pub struct Transport<'a> {
    pub grid: &'a KGrid,
    pub kmat: &'a CollisionMatrix,
    /// Reduced interval width.
    pub dx: f64,
    pub bc: Boundary,
    pub exec: Execution,
    inv_measure: Vec<f64>,
}

impl<'a> Transport<'a> {
    pub fn new(grid: &'a KGrid, kmat: &'a CollisionMatrix, dx: f64, bc: Boundary, exec: Execution) -> Result<Self> {
        if kmat.len() != grid.len() {
            return Err(Error::Dimension {
                what: "collision matrix vs grid",
                expected: grid.len(),
                got: kmat.len(),
            });
        }
        if !(dx > 0.0) {
            return Err(Error::validation("dx", "must be positive"));
        }
        Ok(Self {
            grid,
            kmat,
            dx,
            bc,
            exec,
            inv_measure: grid.cells.iter().map(|c| 1.0 / c.measure).collect(),
        })
    }

    fn check(&self, f: &ArrayView2<f64>, efield: &[f64]) -> Result<()> {
        let (n_x, n) = f.dim();
        if n != self.grid.len() {
            return Err(Error::Dimension {
                what: "state columns",
                expected: self.grid.len(),
                got: n,
            });
        }
        if n_x == 0 {
            return Err(Error::Dimension {
                what: "state rows",
                expected: 1,
                got: 0,
            });
        }
        if efield.len() != n_x {
            return Err(Error::Dimension {
                what: "electric field",
                expected: n_x,
                got: efield.len(),
            });
        }
        Ok(())
    }

    /// Writes `df/dt` into `out`. `efield` is the reduced field per interval.
    pub fn rhs(&self, f: ArrayView2<f64>, efield: &[f64], mut out: ArrayViewMut2<f64>) -> Result<()> {
        self.check(&f, efield)?;
        if out.dim() != f.dim() {
            return Err(Error::Dimension {
                what: "output rows",
                expected: f.nrows(),
                got: out.nrows(),
            });
        }
        let ghosts = apply_bc(f.view(), self.grid, &self.bc)?;
        let n = self.grid.len();
        let n_x = f.nrows();
        let out = out
            .as_slice_mut()
            .ok_or_else(|| Error::validation("rhs output", "must be contiguous"))?;
        self.exec
            .for_each_chunk_mut(out, ROWS_PER_CHUNK * n, |ci, chunk| {
                let i0 = ci * ROWS_PER_CHUNK;
                let rows = chunk.len() / n;
                let mut block = ArrayViewMut2::from_shape((rows, n), chunk).expect("chunk shape");
                apply_collision_rows(self.kmat, f.slice(s![i0..i0 + rows, ..]), block.view_mut());
                for (di, mut orow) in block.outer_iter_mut().enumerate() {
                    let i = i0 + di;
                    let here = f.row(i);
                    let west = if i == 0 { ArrayView1::from(&ghosts.left) } else { f.row(i - 1) };
                    let east = if i + 1 == n_x { ArrayView1::from(&ghosts.right) } else { f.row(i + 1) };
                    let e = efield[i];
                    for (a, cell) in self.grid.cells.iter().enumerate() {
                        let fa = here[a];
                        let eta = cell.eta_x;
                        let adv_x = if eta > 0.0 {
                            eta * (fa - west[a])
                        } else if eta < 0.0 {
                            eta * (east[a] - fa)
                        } else {
                            0.0
                        } / self.dx;
                        let lower = match cell.down_neighbor {
                            None => 0.0,
                            Some(d) => if e >= 0.0 { fa } else { here[d] },
                        };
                        let upper = match cell.up_neighbor {
                            None => 0.0,
                            Some(u) => if e >= 0.0 { here[u] } else { fa },
                        };
                        let adv_k = e * cell.face_area * (upper - lower);
                        orow[a] = (orow[a] - adv_x + adv_k) * self.inv_measure[a];
                    }
                }
            });
        Ok(())
    }

    /// Allocating form of [`Transport::rhs`].
    pub fn rhs_owned(&self, f: ArrayView2<f64>, efield: &[f64]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(f.dim());
        self.rhs(f, efield, out.view_mut())?;
        Ok(out)
    }

    /// Largest forward-Euler step that keeps every diagonal coefficient of
    /// the update nonnegative, for fields bounded by `e_max` (reduced).
    pub fn stable_dt(&self, e_max: f64) -> f64 {
        let k_rate = e_max.abs() / self.grid.du();
        let worst = self
            .grid
            .cells
            .iter()
            .zip(self.kmat.column_sums())
            .map(|(c, loss)| (c.eta_x.abs() / self.dx + loss) / c.measure)
            .fold(0.0f64, f64::max);
        1.0 / (worst + k_rate)
    }
}
