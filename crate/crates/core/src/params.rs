//! Physical constants, material data, device configuration and the
//! nondimensionalization shared by every other module.
//!
//! Configuration files are TOML with two tables, `[device]` and
//! `[material]`. All values are SI except energies, which are in eV:
//!
//! | key | unit | meaning |
//! |-----|------|---------|
//! | `device.length` | m | device length |
//! | `device.bias` | V | potential of the right contact (left is 0 V) |
//! | `device.n_x` | - | spatial intervals |
//! | `device.n_u`, `device.n_r` | - | k-cells along `u` and `r` |
//! | `device.u_max`, `device.r_max` | k_star | optional k-domain half extents |
//! | `device.k_domain_energy` | eV | band energy at `u_max` when `u_max` is omitted |
//! | `device.t_final` | s | simulated time |
//! | `device.cfl` | - | Courant number in (0, 1] |
//! | `device.output_stride` | steps | periodic moment snapshots, 0 disables |
//! | `device.snapshot_times` | s | times at which moments are always written |
//! | `device.doping` | m, m, 1/m³ | array of `{ from, to, value }` segments |
//! | `material.m_star_ratio` | m_e | effective mass |
//! | `material.alpha_kane` | 1/eV | nonparabolicity |
//! | `material.eps_r` | - | relative permittivity |
//! | `material.lattice_temperature` | K | |
//! | `material.rho0` | kg/m³ | mass density |
//! | `material.v_sound` | m/s | longitudinal sound speed |
//! | `material.xi_d` | eV | acoustic deformation potential |
//! | `material.dtk` | eV/m | optical coupling constant |
//! | `material.hbar_omega_p` | eV | optical phonon energy |

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub q: f64,
    pub eps0: f64,
    pub k_b: f64,
    pub m_e: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    hbar: 1.054_571_817e-34,
    q: 1.602_176_634e-19,
    eps0: 8.854_187_812_8e-12,
    k_b: 1.380_649e-23,
    m_e: 9.109_383_701_5e-31,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    pub m_star_ratio: f64,
    pub alpha_kane: f64,
    pub eps_r: f64,
    pub lattice_temperature: f64,
    pub rho0: f64,
    pub v_sound: f64,
    pub xi_d: f64,
    pub dtk: f64,
    pub hbar_omega_p: f64,
}

impl Default for MaterialParams {
    /// Silicon, single nonparabolic valley.
    fn default() -> Self {
        Self {
            m_star_ratio: 0.32,
            alpha_kane: 0.5,
            eps_r: 11.7,
            lattice_temperature: 300.0,
            rho0: 2330.0,
            v_sound: 9040.0,
            xi_d: 9.0,
            dtk: 11.4e10,
            hbar_omega_p: 0.063,
        }
    }
}

impl MaterialParams {
    /// Effective mass in kg.
    pub fn m_star(&self) -> f64 {
        self.m_star_ratio * CONSTANTS.m_e
    }

    /// `k_B T_L` in eV.
    pub fn thermal_energy_ev(&self) -> f64 {
        CONSTANTS.k_b * self.lattice_temperature / CONSTANTS.q
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("material.m_star_ratio", self.m_star_ratio),
            ("material.lattice_temperature", self.lattice_temperature),
            ("material.rho0", self.rho0),
            ("material.v_sound", self.v_sound),
            ("material.hbar_omega_p", self.hbar_omega_p),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(name, format!("must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("material.alpha_kane", self.alpha_kane),
            ("material.xi_d", self.xi_d),
            ("material.dtk", self.dtk),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(name, format!("must be >= 0, got {v}")));
            }
        }
        if !(self.eps_r.is_finite() && self.eps_r >= 1.0) {
            return Err(Error::validation(
                "material.eps_r",
                format!("must be >= 1, got {}", self.eps_r),
            ));
        }
        Ok(())
    }
}

/// Piecewise-constant donor density on `[from, to)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DopingSegment {
    pub from: f64,
    pub to: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub length: f64,
    pub bias: f64,
    pub n_x: usize,
    pub n_u: usize,
    pub n_r: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    pub k_domain_energy: f64,
    pub t_final: f64,
    pub cfl: f64,
    pub output_stride: usize,
    pub snapshot_times: Vec<f64>,
    pub doping: Vec<DopingSegment>,
}

impl Default for DeviceConfig {
    /// The 400 nm n+-n-n+ silicon diode at 2 V.
    fn default() -> Self {
        Self {
            length: 400e-9,
            bias: 2.0,
            n_x: 120,
            n_u: 60,
            n_r: 24,
            u_max: None,
            r_max: None,
            k_domain_energy: 1.4,
            t_final: 3.0e-12,
            cfl: 0.8,
            output_stride: 0,
            snapshot_times: vec![0.5e-12, 3.0e-12],
            doping: vec![
                DopingSegment { from: 0.0, to: 100e-9, value: 5e23 },
                DopingSegment { from: 100e-9, to: 300e-9, value: 2e21 },
                DopingSegment { from: 300e-9, to: 400e-9, value: 5e23 },
            ],
        }
    }
}

impl DeviceConfig {
    /// Number of k-cells.
    pub fn n_cells(&self) -> usize {
        self.n_u * self.n_r
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_x as f64
    }

    /// Axial half extent of the k-domain in units of `k_star`.
    pub fn resolved_u_max(&self, mat: &MaterialParams) -> f64 {
        self.u_max.unwrap_or_else(|| {
            let alpha = mat.alpha_kane;
            let e = self.k_domain_energy;
            (e * (1.0 + alpha * e) / mat.thermal_energy_ev()).sqrt()
        })
    }

    pub fn resolved_r_max(&self, mat: &MaterialParams) -> f64 {
        self.r_max.unwrap_or_else(|| self.resolved_u_max(mat))
    }

    /// Donor density at `x`; segments are half-open except the last.
    pub fn doping_at(&self, x: f64) -> f64 {
        let last = self.doping.len() - 1;
        for (i, seg) in self.doping.iter().enumerate() {
            if x >= seg.from && (x < seg.to || (i == last && x <= seg.to)) {
                return seg.value;
            }
        }
        if x < 0.0 {
            self.doping[0].value
        } else {
            self.doping[last].value
        }
    }

    /// Doping sampled at interval centers.
    pub fn doping_profile(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_x)
            .map(|i| self.doping_at((i as f64 + 0.5) * dx))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::validation("device.length", "must be > 0"));
        }
        if !(self.bias.is_finite() && self.bias >= 0.0) {
            return Err(Error::validation("device.bias", "must be >= 0"));
        }
        if self.n_x < 2 {
            return Err(Error::validation("device.n_x", "need at least 2 intervals"));
        }
        if self.n_u == 0 {
            return Err(Error::validation("device.n_u", "must be >= 1"));
        }
        if self.n_r == 0 {
            return Err(Error::validation("device.n_r", "must be >= 1"));
        }
        for (name, v) in [("device.u_max", self.u_max), ("device.r_max", self.r_max)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::validation(name, "must be > 0"));
                }
            }
        }
        if !(self.k_domain_energy.is_finite() && self.k_domain_energy > 0.0) {
            return Err(Error::validation("device.k_domain_energy", "must be > 0"));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::validation("device.t_final", "must be >= 0"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::validation("device.cfl", "must lie in (0, 1]"));
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::validation(
                "device.snapshot_times",
                format!("negative or non-finite time {t}"),
            ));
        }
        self.validate_doping()
    }

    fn validate_doping(&self) -> Result<()> {
        let field = "device.doping";
        if self.doping.is_empty() {
            return Err(Error::validation(field, "at least one segment required"));
        }
        let tol = 1e-9 * self.length;
        let mut segs = self.doping.clone();
        segs.sort_by(|a, b| a.from.total_cmp(&b.from));
        for s in &segs {
            if !(s.to > s.from) {
                return Err(Error::validation(
                    field,
                    format!("empty segment [{}, {})", s.from, s.to),
                ));
            }
            if !(s.value.is_finite() && s.value > 0.0) {
                return Err(Error::validation(field, "doping values must be > 0"));
            }
        }
        if segs[0].from.abs() > tol {
            return Err(Error::validation(field, "first segment must start at 0"));
        }
        for w in segs.windows(2) {
            let gap = w[1].from - w[0].to;
            if gap < -tol {
                return Err(Error::validation(
                    field,
                    format!("segments overlap at x = {}", w[1].from),
                ));
            }
            if gap > tol {
                return Err(Error::validation(
                    field,
                    format!("gap between {} and {}", w[0].to, w[1].from),
                ));
            }
        }
        if (segs[segs.len() - 1].to - self.length).abs() > tol {
            return Err(Error::validation(field, "last segment must end at device.length"));
        }
        Ok(())
    }
}

/// A fully validated configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub device: DeviceConfig,
    pub material: MaterialParams,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.material.validate()
    }

    /// Parses TOML text, applies `section.key=value` overrides, validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            Error::Parse(e.to_string())
        })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{spec}` is not key=value")))?;
    let value = parse_override_value(raw.trim());
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields at least one piece");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Parse(format!("override path `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key v was just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Config::from_toml_str(&text, overrides)
}

/// Characteristic scales. Nondimensional quantities are `value / scale`.
///
/// `k_star` maps the thermal wave vector `sqrt(2 m* k_B T_L)/ħ` to 1, so the
/// parabolic energy of a dimensionless `|k| = s` is `eps_star * s²`. The
/// length scale is the distance travelled at `ħ k_star / m*` in `t_star`,
/// and the field scale makes `q E t_star / (ħ k_star)` dimensionless.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scales {
    pub k_star: f64,
    pub t_star: f64,
    pub x_star: f64,
    pub eps_star: f64,
    pub e_star: f64,
    pub f_star: f64,
    pub v_star: f64,
    pub n_star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    WaveVector,
    Time,
    Length,
    Energy,
    Field,
    Pdf,
    Velocity,
    Density,
    /// Scattering rate, 1/s.
    Rate,
}

pub const DENSITY_SCALE: f64 = 1e23;
pub const TIME_SCALE: f64 = 1e-12;

pub fn build_scales(mat: &MaterialParams) -> Scales {
    let c = CONSTANTS;
    let kt = c.k_b * mat.lattice_temperature;
    let k_star = (2.0 * mat.m_star() * kt).sqrt() / c.hbar;
    let t_star = TIME_SCALE;
    let v_star = c.hbar * k_star / mat.m_star();
    Scales {
        k_star,
        t_star,
        x_star: v_star * t_star,
        eps_star: kt / c.q,
        e_star: c.hbar * k_star / (c.q * t_star),
        f_star: DENSITY_SCALE / k_star.powi(3),
        v_star,
        n_star: DENSITY_SCALE,
    }
}

impl Scales {
    pub fn scale(&self, q: Quantity) -> f64 {
        match q {
            Quantity::WaveVector => self.k_star,
            Quantity::Time => self.t_star,
            Quantity::Length => self.x_star,
            Quantity::Energy => self.eps_star,
            Quantity::Field => self.e_star,
            Quantity::Pdf => self.f_star,
            Quantity::Velocity => self.v_star,
            Quantity::Density => self.n_star,
            Quantity::Rate => 1.0 / self.t_star,
        }
    }

    pub fn nondimensionalize(&self, q: Quantity, v: f64) -> f64 {
        v / self.scale(q)
    }

    pub fn dimensionalize(&self, q: Quantity, v: f64) -> f64 {
        v * self.scale(q)
    }

    /// Scale of a k-space measure `∫ dk`, 1/m³.
    pub fn k_volume(&self) -> f64 {
        self.k_star.powi(3)
    }
}
