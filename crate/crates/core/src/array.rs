//! Surface geometry, steering vectors and power-domain array factors.
//!
//! Each polarization's elements sit on a rectangular lattice. Element `k` of
//! a per-polarization configuration vector maps to lattice position
//! `(k % rows, k / rows)`, so the first `rows` entries form the first column
//! of the configuration matrix. The three supported layouts only differ in
//! the lattice strides and in the constant phase offset of one polarization.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::golay::ComplexArray2D;

const ANGLE_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Horizontal line, polarizations alternate element by element.
    UlaInterleaved,
    /// Planar, polarizations alternate row by row (V on even rows).
    UpaRowInterleaved,
    /// Planar, every element on a single polarization.
    UpaUniPolarized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

/// Surface layout. For [`Layout::UlaInterleaved`] `n_y` counts every element
/// of the line and `n_z` is 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub struct RisGeometry {
    layout: Layout,
    n_y: usize,
    n_z: usize,
    delta_y: f64,
    delta_z: f64,
    wavelength: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    layout: Layout,
    n_y: usize,
    #[serde(default = "one")]
    n_z: usize,
    delta_y: f64,
    #[serde(default)]
    delta_z: f64,
    wavelength: f64,
}

fn one() -> usize {
    1
}

impl TryFrom<RawGeometry> for RisGeometry {
    type Error = Error;
    fn try_from(r: RawGeometry) -> Result<Self> {
        let g = Self {
            layout: r.layout,
            n_y: r.n_y,
            n_z: r.n_z,
            delta_y: r.delta_y,
            delta_z: r.delta_z,
            wavelength: r.wavelength,
        };
        g.validate()?;
        Ok(g)
    }
}

impl From<RisGeometry> for RawGeometry {
    fn from(g: RisGeometry) -> Self {
        Self {
            layout: g.layout,
            n_y: g.n_y,
            n_z: g.n_z,
            delta_y: g.delta_y,
            delta_z: g.delta_z,
            wavelength: g.wavelength,
        }
    }
}

impl RisGeometry {
    /// Interleaved line with `total` elements (`total / 2` per polarization).
    pub fn ula(total: usize, delta_y: f64, wavelength: f64) -> Result<Self> {
        let g = Self {
            layout: Layout::UlaInterleaved,
            n_y: total,
            n_z: 1,
            delta_y,
            delta_z: 0.0,
            wavelength,
        };
        g.validate()?;
        Ok(g)
    }

    /// Row-interleaved planar surface; `n_z` must be even.
    pub fn upa(n_y: usize, n_z: usize, delta_y: f64, delta_z: f64, wavelength: f64) -> Result<Self> {
        let g = Self { layout: Layout::UpaRowInterleaved, n_y, n_z, delta_y, delta_z, wavelength };
        g.validate()?;
        Ok(g)
    }

    pub fn upa_uni(n_y: usize, n_z: usize, delta_y: f64, delta_z: f64, wavelength: f64) -> Result<Self> {
        let g = Self { layout: Layout::UpaUniPolarized, n_y, n_z, delta_y, delta_z, wavelength };
        g.validate()?;
        Ok(g)
    }

    /// Uni-polarized surface with the same footprint and element count.
    pub fn uni_polarized_twin(&self) -> Result<Self> {
        match self.layout {
            Layout::UlaInterleaved => invalid("no uni-polarized twin for a line layout"),
            _ => Self::upa_uni(self.n_y, self.n_z, self.delta_y, self.delta_z, self.wavelength),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.wavelength) || !positive(self.delta_y) {
            return invalid("wavelength and spacings must be positive");
        }
        if self.n_y == 0 || self.n_z == 0 {
            return invalid("element counts must be positive");
        }
        match self.layout {
            Layout::UlaInterleaved => {
                if self.n_z != 1 || self.n_y % 2 != 0 {
                    return invalid("an interleaved line needs an even element count and n_z = 1");
                }
            }
            Layout::UpaRowInterleaved => {
                if self.n_z % 2 != 0 {
                    return invalid("row-interleaved layout needs an even number of rows");
                }
                if !positive(self.delta_z) {
                    return invalid("vertical spacing must be positive");
                }
            }
            Layout::UpaUniPolarized => {
                if !positive(self.delta_z) {
                    return invalid("vertical spacing must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn n_z(&self) -> usize {
        self.n_z
    }
    pub fn delta_y(&self) -> f64 {
        self.delta_y
    }
    pub fn delta_z(&self) -> f64 {
        self.delta_z
    }
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn total_elements(&self) -> usize {
        self.n_y * self.n_z
    }

    pub fn is_dual_polarized(&self) -> bool {
        self.layout != Layout::UpaUniPolarized
    }

    pub fn polarizations(&self) -> &'static [Polarization] {
        if self.is_dual_polarized() {
            &[Polarization::H, Polarization::V]
        } else {
            &[Polarization::V]
        }
    }

    /// Elements per polarization.
    pub fn per_pol_len(&self) -> usize {
        let (r, c) = self.matrix_shape();
        r * c
    }

    /// Shape of a per-polarization configuration matrix.
    pub fn matrix_shape(&self) -> (usize, usize) {
        match self.layout {
            Layout::UlaInterleaved => (self.n_y / 2, 1),
            Layout::UpaRowInterleaved => (self.n_y, self.n_z / 2),
            Layout::UpaUniPolarized => (self.n_y, self.n_z),
        }
    }

    /// Phase multipliers of `psi_y`, `psi_z` per lattice step.
    fn strides(&self) -> (f64, f64) {
        match self.layout {
            Layout::UlaInterleaved => (2.0, 0.0),
            Layout::UpaRowInterleaved => (1.0, 2.0),
            Layout::UpaUniPolarized => (1.0, 1.0),
        }
    }

    fn pol_offset(&self, pol: Polarization, psi_y: f64, psi_z: f64) -> f64 {
        match (self.layout, pol) {
            (Layout::UlaInterleaved, Polarization::V) => psi_y,
            (Layout::UpaRowInterleaved, Polarization::H) => psi_z,
            _ => 0.0,
        }
    }

    /// Same-polarization element spacings in meters along y and z.
    pub fn same_pol_pitch(&self) -> (f64, f64) {
        let (sy, sz) = self.strides();
        (sy * self.delta_y, sz * self.delta_z)
    }
}

/// Azimuth/elevation pair in radians, both within `[-pi/2, pi/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        let ok = |x: f64| x.is_finite() && x.abs() <= FRAC_PI_2 + ANGLE_SLACK;
        if !ok(azimuth) || !ok(elevation) {
            return invalid(format!("direction ({azimuth}, {elevation}) outside [-pi/2, pi/2]"));
        }
        Ok(Self { azimuth, elevation })
    }

    pub const fn broadside() -> Self {
        Self { azimuth: 0.0, elevation: 0.0 }
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }
}

impl TryFrom<(f64, f64)> for Direction {
    type Error = Error;
    fn try_from((a, e): (f64, f64)) -> Result<Self> {
        Self::new(a, e)
    }
}

impl From<Direction> for (f64, f64) {
    fn from(d: Direction) -> Self {
        (d.azimuth, d.elevation)
    }
}

/// `psi_y = 2 pi / lambda * dy * sin(az) cos(el)`, `psi_z = 2 pi / lambda * dz * sin(el)`.
pub fn phase_shifts(g: &RisGeometry, dir: Direction) -> (f64, f64) {
    let k = TAU / g.wavelength;
    (
        k * g.delta_y * dir.azimuth.sin() * dir.elevation.cos(),
        k * g.delta_z * dir.elevation.sin(),
    )
}

/// Steering vector for explicit phase shifts.
pub fn steering_from_psi(g: &RisGeometry, psi_y: f64, psi_z: f64, pol: Polarization) -> Vec<Complex64> {
    let (rows, cols) = g.matrix_shape();
    let (sy, sz) = g.strides();
    let ay: Vec<Complex64> = (0..rows).map(|i| Complex64::cis(-sy * i as f64 * psi_y)).collect();
    let az: Vec<Complex64> = (0..cols).map(|i| Complex64::cis(-sz * i as f64 * psi_z)).collect();
    let off = g.pol_offset(pol, psi_y, psi_z);
    let shift = Complex64::cis(-off);
    let mut out = Vec::with_capacity(rows * cols);
    for z in &az {
        let zs = if off == 0.0 { *z } else { z * shift };
        out.extend(ay.iter().map(|y| zs * y));
    }
    out
}

/// Per-polarization response `a_p = a_p^z ⊗ a_p^y` toward `dir`.
pub fn steering_vector(g: &RisGeometry, dir: Direction, pol: Polarization) -> Vec<Complex64> {
    let (py, pz) = phase_shifts(g, dir);
    steering_from_psi(g, py, pz, pol)
}

/// `a_p(obs) ⊙ a_p(incident)`.
pub fn equivalent_response(
    g: &RisGeometry,
    obs: Direction,
    incident: Direction,
    pol: Polarization,
) -> Vec<Complex64> {
    steering_vector(g, obs, pol)
        .into_iter()
        .zip(steering_vector(g, incident, pol))
        .map(|(a, b)| a * b)
        .collect()
}

/// Column-major fill of an `n_y`-row matrix.
pub fn reshape_vec_to_matrix(phi: &[Complex64], n_y: usize) -> Result<ComplexArray2D> {
    ComplexArray2D::from_column_major(phi, n_y)
}

pub fn reshape_matrix_to_vec(m: &ComplexArray2D) -> Vec<Complex64> {
    m.to_column_major()
}

/// Weights per polarization. A phase configuration when entries are
/// unimodular; an effective configuration `h_p ⊙ phi_p` otherwise. On a
/// uni-polarized surface only `v` is populated.
#[derive(Clone, Debug, PartialEq)]
pub struct PolPair {
    pub h: Vec<Complex64>,
    pub v: Vec<Complex64>,
}

/// A phase configuration pair.
pub type ConfigPair = PolPair;

impl PolPair {
    pub fn new(h: Vec<Complex64>, v: Vec<Complex64>) -> Self {
        Self { h, v }
    }

    pub fn uni(v: Vec<Complex64>) -> Self {
        Self { h: Vec::new(), v }
    }

    pub fn from_phases(h: &[f64], v: &[f64]) -> Self {
        Self {
            h: h.iter().map(|&p| Complex64::cis(p)).collect(),
            v: v.iter().map(|&p| Complex64::cis(p)).collect(),
        }
    }

    /// Builds a configuration from matrix views (column-major flattening).
    pub fn from_matrices(h: &ComplexArray2D, v: &ComplexArray2D) -> Self {
        Self { h: h.to_column_major(), v: v.to_column_major() }
    }

    pub fn get(&self, pol: Polarization) -> &[Complex64] {
        match pol {
            Polarization::H => &self.h,
            Polarization::V => &self.v,
        }
    }

    pub fn get_mut(&mut self, pol: Polarization) -> &mut Vec<Complex64> {
        match pol {
            Polarization::H => &mut self.h,
            Polarization::V => &mut self.v,
        }
    }

    pub fn check_against(&self, g: &RisGeometry) -> Result<()> {
        let n = g.per_pol_len();
        let expect_h = if g.is_dual_polarized() { n } else { 0 };
        if self.h.len() != expect_h || self.v.len() != n {
            return invalid(format!(
                "configuration lengths ({}, {}) do not match geometry ({expect_h}, {n})",
                self.h.len(),
                self.v.len()
            ));
        }
        Ok(())
    }

    pub fn is_unimodular(&self, tol: f64) -> bool {
        self.h.iter().chain(&self.v).all(|z| (z.norm() - 1.0).abs() <= tol)
    }

    /// Entrywise product with per-polarization vectors of the same shape.
    pub fn hadamard(&self, other: &PolPair) -> Result<PolPair> {
        if self.h.len() != other.h.len() || self.v.len() != other.v.len() {
            return invalid("hadamard product of mismatched pairs");
        }
        let mul = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x * y).collect();
        Ok(PolPair { h: mul(&self.h, &other.h), v: mul(&self.v, &other.v) })
    }

    pub fn scaled(&self, s: Complex64) -> PolPair {
        PolPair {
            h: self.h.iter().map(|z| z * s).collect(),
            v: self.v.iter().map(|z| z * s).collect(),
        }
    }

    pub fn energy(&self) -> f64 {
        self.h.iter().chain(&self.v).map(|z| z.norm_sqr()).sum()
    }

    pub fn matrix(&self, pol: Polarization, g: &RisGeometry) -> Result<ComplexArray2D> {
        reshape_vec_to_matrix(self.get(pol), g.matrix_shape().0)
    }

    pub fn to_record(&self) -> ConfigRecord {
        let wrap = |v: &[Complex64]| v.iter().map(|z| wrap_phase(z.arg())).collect();
        ConfigRecord { phi_h_rad: wrap(&self.h), phi_v_rad: wrap(&self.v) }
    }
}

/// Phase configuration as stored on disk, radians in `[0, 2 pi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigRecord {
    pub phi_h_rad: Vec<f64>,
    pub phi_v_rad: Vec<f64>,
}

impl ConfigRecord {
    pub fn to_config(&self) -> ConfigPair {
        ConfigPair::from_phases(&self.phi_h_rad, &self.phi_v_rad)
    }
}

/// `sum_k w[k] a_p[k](psi)` using the separable lattice structure.
fn field_at_psi(g: &RisGeometry, w: &[Complex64], psi_y: f64, psi_z: f64, pol: Polarization) -> Complex64 {
    let (rows, cols) = g.matrix_shape();
    let (sy, sz) = g.strides();
    let ay: Vec<Complex64> = (0..rows).map(|i| Complex64::cis(-sy * i as f64 * psi_y)).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for c in 0..cols {
        let inner: Complex64 = w[c * rows..(c + 1) * rows].iter().zip(&ay).map(|(a, b)| a * b).sum();
        acc += inner * Complex64::cis(-sz * c as f64 * psi_z);
    }
    acc * Complex64::cis(-g.pol_offset(pol, psi_y, psi_z))
}

fn components_at_psi(g: &RisGeometry, eff: &PolPair, psi_y: f64, psi_z: f64) -> (f64, f64) {
    let h = if g.is_dual_polarized() {
        field_at_psi(g, &eff.h, psi_y, psi_z, Polarization::H).norm_sqr()
    } else {
        0.0
    };
    (h, field_at_psi(g, &eff.v, psi_y, psi_z, Polarization::V).norm_sqr())
}

/// Per-polarization terms `(|phî_Hᵀ a_H|², |phî_Vᵀ a_V|²)` of the effective
/// array factor.
pub fn array_factor_components(eff: &PolPair, g: &RisGeometry, obs: Direction) -> Result<(f64, f64)> {
    eff.check_against(g)?;
    let (py, pz) = phase_shifts(g, obs);
    Ok(components_at_psi(g, eff, py, pz))
}

/// `A = |phî_Hᵀ a_H(obs)|² + |phî_Vᵀ a_V(obs)|²` for effective weights.
pub fn array_factor_effective(eff: &PolPair, g: &RisGeometry, obs: Direction) -> Result<f64> {
    let (h, v) = array_factor_components(eff, g, obs)?;
    Ok(h + v)
}

/// Folds the incident response into the configuration so that the line-of-
/// sight array factor becomes an effective one: `phi_p ⊙ a_p(incident)`.
pub fn fold_incident(config: &ConfigPair, g: &RisGeometry, incident: Direction) -> Result<PolPair> {
    config.check_against(g)?;
    let mut out = config.clone();
    for &pol in g.polarizations() {
        let a = steering_vector(g, incident, pol);
        for (w, x) in out.get_mut(pol).iter_mut().zip(a) {
            *w *= x;
        }
    }
    Ok(out)
}

/// `A = sum_p |phi_pᵀ (a_p(obs) ⊙ a_p(incident))|²`.
pub fn array_factor_los(config: &ConfigPair, g: &RisGeometry, incident: Direction, obs: Direction) -> Result<f64> {
    config.check_against(g)?;
    let mut total = 0.0;
    for &pol in g.polarizations() {
        let a_hat = equivalent_response(g, obs, incident, pol);
        let s: Complex64 = config.get(pol).iter().zip(&a_hat).map(|(p, a)| p * a).sum();
        total += s.norm_sqr();
    }
    Ok(total)
}

/// Configuration focusing both polarizations on `target`: each inner
/// product at the target equals the per-polarization element count.
pub fn user_specific_config(g: &RisGeometry, incident: Direction, target: Direction) -> ConfigPair {
    let conj_phase = |pol| -> Vec<Complex64> {
        equivalent_response(g, target, incident, pol)
            .into_iter()
            .map(|a| Complex64::cis(-a.arg()))
            .collect()
    };
    if g.is_dual_polarized() {
        ConfigPair::new(conj_phase(Polarization::H), conj_phase(Polarization::V))
    } else {
        ConfigPair::uni(conj_phase(Polarization::V))
    }
}

/// Mean of the effective array factor over a uniform grid of `k_y x k_z`
/// points spanning one period of the lattice phase variables. Equals the
/// total energy of the weights whenever `k_y >= 2 rows - 1` and
/// `k_z >= 2 cols - 1`.
pub fn mean_af_over_period(eff: &PolPair, g: &RisGeometry, k_y: usize, k_z: usize) -> Result<f64> {
    eff.check_against(g)?;
    if k_y == 0 || k_z == 0 {
        return invalid("grid must be non-empty");
    }
    let (sy, sz) = g.strides();
    let (rows, cols) = g.matrix_shape();
    if k_y < 2 * rows - 1 || (cols > 1 && k_z < 2 * cols - 1) {
        return invalid("grid too coarse for an exact period average");
    }
    let mut acc = 0.0;
    for i in 0..k_y {
        let py = TAU * i as f64 / (sy * k_y as f64);
        for j in 0..k_z {
            let pz = if sz == 0.0 { 0.0 } else { TAU * j as f64 / (sz * k_z as f64) };
            let (h, v) = components_at_psi(g, eff, py, pz);
            acc += h + v;
        }
    }
    Ok(acc / (k_y * k_z) as f64)
}

/// Element pattern in dBi: peak 8 dBi, 12 dB per squared normalized angle,
/// 30 dB floor, 90 degree reference widths centered at broadside.
pub fn element_gain_dbi(dir: Direction) -> f64 {
    let term = |x: f64| (12.0 * (x / FRAC_PI_2).powi(2)).min(30.0);
    8.0 - (term(dir.azimuth) + term(dir.elevation)).min(30.0)
}

pub fn element_gain(dir: Direction) -> f64 {
    db_to_linear(element_gain_dbi(dir))
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Uniform azimuth x elevation grid, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleGrid {
    pub az_min: f64,
    pub az_max: f64,
    pub n_az: usize,
    pub el_min: f64,
    pub el_max: f64,
    pub n_el: usize,
}

impl Default for AngleGrid {
    /// 181 x 181 points (one degree) over the front half-space.
    fn default() -> Self {
        Self::square(181)
    }
}

impl AngleGrid {
    /// `n x n` points over `[-pi/2, pi/2]` in both angles.
    pub fn square(n: usize) -> Self {
        Self {
            az_min: -FRAC_PI_2,
            az_max: FRAC_PI_2,
            n_az: n,
            el_min: -FRAC_PI_2,
            el_max: FRAC_PI_2,
            n_el: n,
        }
    }

    pub fn len(&self) -> usize {
        self.n_az * self.n_el
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn linspace(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    }

    pub fn azimuths(&self) -> Vec<f64> {
        (0..self.n_az).map(|i| Self::linspace(self.az_min, self.az_max, self.n_az, i)).collect()
    }

    pub fn elevations(&self) -> Vec<f64> {
        (0..self.n_el).map(|i| Self::linspace(self.el_min, self.el_max, self.n_el, i)).collect()
    }

    /// Directions in azimuth-major order.
    pub fn directions(&self) -> Result<Vec<Direction>> {
        self.validate()?;
        let els = self.elevations();
        self.azimuths()
            .into_iter()
            .flat_map(|a| els.iter().map(move |&e| Direction::new(a, e)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_az == 0 || self.n_el == 0 {
            return invalid("angle grid must have at least one point per axis");
        }
        if self.az_min > self.az_max || self.el_min > self.el_max {
            return invalid("angle grid bounds are reversed");
        }
        Direction::new(self.az_min, self.el_min)?;
        Direction::new(self.az_max, self.el_max)?;
        Ok(())
    }
}

/// What a pattern grid is evaluated for.
#[derive(Clone, Copy, Debug)]
pub enum PatternSource<'a> {
    /// Phase configuration over a line-of-sight backhaul from `incident`.
    Los { config: &'a ConfigPair, incident: Direction },
    /// Effective weights `h_p ⊙ phi_p`.
    Effective { weights: &'a PolPair },
}

/// One direction of a pattern grid; linear power values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PatternRow {
    pub phi_rad: f64,
    pub theta_rad: f64,
    pub af_h: f64,
    pub af_v: f64,
    pub af_total: f64,
    /// Total array factor times the element gain.
    pub pattern: f64,
}

pub fn pattern_grid(source: PatternSource<'_>, g: &RisGeometry, grid: &AngleGrid) -> Result<Vec<PatternRow>> {
    let eff = match source {
        PatternSource::Los { config, incident } => fold_incident(config, g, incident)?,
        PatternSource::Effective { weights } => {
            weights.check_against(g)?;
            weights.clone()
        }
    };
    let dirs = grid.directions()?;
    Ok(dirs
        .par_iter()
        .map(|&d| {
            let (py, pz) = phase_shifts(g, d);
            let (h, v) = components_at_psi(g, &eff, py, pz);
            let total = h + v;
            PatternRow {
                phi_rad: d.azimuth,
                theta_rad: d.elevation,
                af_h: h,
                af_v: v,
                af_total: total,
                pattern: total * element_gain(d),
            }
        })
        .collect())
}

pub const PATTERN_CSV_HEADER: &str = "phi_rad,theta_rad,af_h_db,af_v_db,af_total_db,pattern_db";

pub fn pattern_csv(rows: &[PatternRow]) -> String {
    let mut s = String::with_capacity(rows.len() * 96);
    s.push_str(PATTERN_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.phi_rad,
            r.theta_rad,
            to_db(r.af_h),
            to_db(r.af_v),
            to_db(r.af_total),
            to_db(r.pattern)
        );
    }
    s
}

/// JSON mirror of [`pattern_csv`]; non-finite dB values become `null`.
pub fn pattern_json(rows: &[PatternRow]) -> serde_json::Value {
    let db = |x: f64| {
        let v = to_db(x);
        if v.is_finite() {
            serde_json::json!(v)
        } else {
            serde_json::Value::Null
        }
    };
    serde_json::Value::Array(
        rows.iter()
            .map(|r| {
                serde_json::json!({
                    "phi_rad": r.phi_rad,
                    "theta_rad": r.theta_rad,
                    "af_h_db": db(r.af_h),
                    "af_v_db": db(r.af_v),
                    "af_total_db": db(r.af_total),
                    "pattern_db": db(r.pattern),
                })
            })
            .collect(),
    )
}

/// Average of the total array factor in dB over the rows. Exact nulls are
/// floored at 1e-30 so a single grid point on a null stays finite.
pub fn mean_total_db(rows: &[PatternRow]) -> f64 {
    rows.iter().map(|r| to_db(r.af_total.max(1e-30))).sum::<f64>() / rows.len() as f64
}

/// Angle wrapped into `[0, 2 pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}
