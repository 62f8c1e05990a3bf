//! Base-station side of the backhaul: BS steering, line-of-sight and
//! correlated Rician channels, spatial correlation, transmit beamforming and
//! the effective per-polarization surface channels `h_p = H_p f_p`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::{element_gain, steering_vector, ConfigPair, Direction, Layout, PolPair, Polarization, RisGeometry};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{GaussHermite, QuadratureSpec};
use crate::rng::{complex_normal, stream_rng, streams};

const PSD_FLOOR: f64 = -1e-10;
const TIE_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBs", into = "RawBs")]
pub struct BsGeometry {
    m: usize,
    delta_b: f64,
    wavelength: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBs {
    m: usize,
    delta_b: f64,
    wavelength: f64,
}

impl TryFrom<RawBs> for BsGeometry {
    type Error = Error;
    fn try_from(r: RawBs) -> Result<Self> {
        Self::new(r.m, r.delta_b, r.wavelength)
    }
}

impl From<BsGeometry> for RawBs {
    fn from(b: BsGeometry) -> Self {
        Self { m: b.m, delta_b: b.delta_b, wavelength: b.wavelength }
    }
}

impl BsGeometry {
    pub fn new(m: usize, delta_b: f64, wavelength: f64) -> Result<Self> {
        if m == 0 {
            return invalid("BS needs at least one antenna per polarization");
        }
        if !(delta_b.is_finite() && delta_b > 0.0 && wavelength.is_finite() && wavelength > 0.0) {
            return invalid("BS spacing and wavelength must be positive");
        }
        Ok(Self { m, delta_b, wavelength })
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn delta_b(&self) -> f64 {
        self.delta_b
    }
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }
}

/// Departure angle at the BS and arrival direction at the surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAngles", into = "RawAngles")]
pub struct ScenarioAngles {
    aod: f64,
    aoa: Direction,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAngles {
    aod_rad: f64,
    aoa_az_rad: f64,
    aoa_el_rad: f64,
}

impl TryFrom<RawAngles> for ScenarioAngles {
    type Error = Error;
    fn try_from(r: RawAngles) -> Result<Self> {
        Self::new(r.aod_rad, Direction::new(r.aoa_az_rad, r.aoa_el_rad)?)
    }
}

impl From<ScenarioAngles> for RawAngles {
    fn from(a: ScenarioAngles) -> Self {
        Self { aod_rad: a.aod, aoa_az_rad: a.aoa.azimuth(), aoa_el_rad: a.aoa.elevation() }
    }
}

impl ScenarioAngles {
    pub fn new(aod: f64, aoa: Direction) -> Result<Self> {
        Direction::new(aod, 0.0).map_err(|_| Error::InvalidInput(format!("AoD {aod} outside [-pi/2, pi/2]")))?;
        Ok(Self { aod, aoa })
    }
    pub fn aod(&self) -> f64 {
        self.aod
    }
    pub fn aoa(&self) -> Direction {
        self.aoa
    }
}

/// Linear element gains of the BS toward the surface and of the surface
/// toward the BS.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkGains {
    pub g_b: f64,
    pub g_r: f64,
}

impl LinkGains {
    pub fn isotropic() -> Self {
        Self { g_b: 1.0, g_r: 1.0 }
    }

    /// Element pattern evaluated at the backhaul angles.
    pub fn element_model(angles: &ScenarioAngles) -> Self {
        Self {
            g_b: element_gain(Direction::new(angles.aod, 0.0).expect("validated AoD")),
            g_r: element_gain(angles.aoa),
        }
    }

    pub fn product(&self) -> f64 {
        self.g_b * self.g_r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RicianParams {
    /// Rician factor; `f64::INFINITY` gives the pure line-of-sight channel.
    pub kappa: f64,
    /// Angular standard deviation of the local scattering, radians.
    pub asd: f64,
    pub rng_seed: u64,
}

impl RicianParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) {
            return invalid("Rician factor must be non-negative");
        }
        if !(self.asd.is_finite() && self.asd > 0.0) {
            return invalid("angular spread must be positive");
        }
        Ok(())
    }
}

/// `b[m] = exp(-j m psi_B)`, `psi_B = 2 pi / lambda * delta_B * sin(aod)`.
pub fn bs_steering(bs: &BsGeometry, aod: f64) -> Vec<Complex64> {
    let psi = TAU / bs.wavelength * bs.delta_b * aod.sin();
    (0..bs.m).map(|m| Complex64::cis(-(m as f64) * psi)).collect()
}

/// Per-polarization channel matrices (surface elements x BS antennas). The
/// H matrix has zero rows on a uni-polarized surface.
#[derive(Clone, Debug, PartialEq)]
pub struct PolChannel {
    pub h: DMatrix<Complex64>,
    pub v: DMatrix<Complex64>,
}

impl PolChannel {
    pub fn get(&self, pol: Polarization) -> &DMatrix<Complex64> {
        match pol {
            Polarization::H => &self.h,
            Polarization::V => &self.v,
        }
    }
}

fn outer(a: &[Complex64], b: &[Complex64], scale: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j] * scale)
}

fn empty_h(m: usize) -> DMatrix<Complex64> {
    DMatrix::zeros(0, m)
}

/// `H_p = sqrt(G_B G_R) a_p(aoa) bᵀ(aod)`.
pub fn los_channel(g: &RisGeometry, bs: &BsGeometry, angles: &ScenarioAngles, gains: LinkGains) -> PolChannel {
    let b = bs_steering(bs, angles.aod);
    let s = gains.product().sqrt();
    let mat = |pol| outer(&steering_vector(g, angles.aoa, pol), &b, s);
    PolChannel {
        h: if g.is_dual_polarized() { mat(Polarization::H) } else { empty_h(bs.m) },
        v: mat(Polarization::V),
    }
}

/// Lag-indexed correlation values; lag `(dy, dz)` lives at
/// `(dy + rows - 1) + (2 rows - 1) * (dz + cols - 1)`.
struct LagTable {
    rows: usize,
    cols: usize,
    vals: Vec<Complex64>,
}

impl LagTable {
    fn get(&self, dy: isize, dz: isize) -> Complex64 {
        let w = 2 * self.rows - 1;
        let iy = (dy + self.rows as isize - 1) as usize;
        let iz = (dz + self.cols as isize - 1) as usize;
        self.vals[iy + w * iz]
    }

    fn max_diff(&self, other: &LagTable) -> f64 {
        self.vals.iter().zip(&other.vals).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

fn lag_table(g: &RisGeometry, aoa: Direction, asd: f64, n: usize) -> Result<LagTable> {
    let (z, p) = GaussHermite::new(n)?.normal_rule();
    let (rows, cols) = g.matrix_shape();
    let (pitch_y, pitch_z) = g.same_pol_pitch();
    let k = TAU / g.wavelength();
    let (phi, theta) = (aoa.azimuth(), aoa.elevation());
    let w = 2 * rows - 1;
    let mut vals = vec![Complex64::new(0.0, 0.0); w * (2 * cols - 1)];
    let sin_phi: Vec<f64> = z.iter().map(|e| (phi + asd * e).sin()).collect();
    let ula = g.layout() == Layout::UlaInterleaved;
    let (sin_th, cos_th): (Vec<f64>, Vec<f64>) = z.iter().map(|e| (theta + asd * e).sin_cos()).unzip();
    for dz in 0..cols as isize {
        for dy in -(rows as isize - 1)..rows as isize {
            if dz == 0 && dy < 0 {
                continue;
            }
            let v = if dy == 0 && dz == 0 {
                Complex64::new(1.0, 0.0)
            } else if ula {
                let a = k * pitch_y * dy as f64;
                sin_phi.iter().zip(&p).map(|(s, wi)| Complex64::cis(a * s) * wi).sum()
            } else {
                let ay = k * pitch_y * dy as f64;
                let az = k * pitch_z * dz as f64;
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, wj) in p.iter().enumerate() {
                    let mut inner = Complex64::new(0.0, 0.0);
                    for (s, wi) in sin_phi.iter().zip(&p) {
                        inner += Complex64::cis(ay * s * cos_th[j]) * wi;
                    }
                    acc += inner * Complex64::cis(az * sin_th[j]) * wj;
                }
                acc
            };
            let iy = (dy + rows as isize - 1) as usize;
            let iz = (dz + cols as isize - 1) as usize;
            vals[iy + w * iz] = v;
            let my = (-dy + rows as isize - 1) as usize;
            let mz = (-dz + cols as isize - 1) as usize;
            vals[my + w * mz] = v.conj();
        }
    }
    Ok(LagTable { rows, cols, vals })
}

/// Spatial correlation of the local-scattering model with Gaussian angular
/// deviation, evaluated per lag with Gauss–Hermite rules refined by doubling
/// until successive tables agree within `spec.tol`.
pub fn correlation_matrix(
    g: &RisGeometry,
    aoa: Direction,
    asd: f64,
    spec: &QuadratureSpec,
) -> Result<DMatrix<Complex64>> {
    spec.validate()?;
    if !(asd.is_finite() && asd > 0.0) {
        return invalid("angular spread must be positive");
    }
    let mut n = spec.nodes;
    let mut table = lag_table(g, aoa, asd, n)?;
    loop {
        let m = 2 * n;
        if m > spec.max_nodes {
            return invalid(format!("quadrature did not settle within {} nodes", spec.max_nodes));
        }
        let finer = lag_table(g, aoa, asd, m)?;
        let change = finer.max_diff(&table);
        table = finer;
        n = m;
        if change <= spec.tol {
            break;
        }
    }
    let rows = table.rows;
    let len = g.per_pol_len();
    Ok(DMatrix::from_fn(len, len, |a, b| {
        let dy = (a % rows) as isize - (b % rows) as isize;
        let dz = (a / rows) as isize - (b / rows) as isize;
        table.get(dy, dz)
    }))
}

/// Line-layout correlation for arrival azimuth `phi`.
pub fn correlation_matrix_ula(g: &RisGeometry, phi: f64, asd: f64, spec: &QuadratureSpec) -> Result<DMatrix<Complex64>> {
    if g.layout() != Layout::UlaInterleaved {
        return invalid("line correlation requested for a planar layout");
    }
    correlation_matrix(g, Direction::new(phi, 0.0)?, asd, spec)
}

/// Planar correlation with independent azimuth and elevation deviations.
pub fn correlation_matrix_upa(
    g: &RisGeometry,
    phi: f64,
    theta: f64,
    asd: f64,
    spec: &QuadratureSpec,
) -> Result<DMatrix<Complex64>> {
    if g.layout() == Layout::UlaInterleaved {
        return invalid("planar correlation requested for a line layout");
    }
    correlation_matrix(g, Direction::new(phi, theta)?, asd, spec)
}

/// Hermitian square root of a correlation matrix, for coloring white draws.
#[derive(Clone, Debug)]
pub struct CorrelationSqrt(DMatrix<Complex64>);

impl CorrelationSqrt {
    pub fn new(r: &DMatrix<Complex64>) -> Result<Self> {
        if !r.is_square() || r.nrows() == 0 {
            return invalid("correlation matrix must be square and non-empty");
        }
        let herm = (r + r.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < PSD_FLOOR {
            return invalid(format!("correlation matrix is not positive semidefinite (eigenvalue {min:e})"));
        }
        let roots = DVector::from_iterator(
            eig.eigenvalues.len(),
            eig.eigenvalues.iter().map(|&l| Complex64::new(l.max(0.0).sqrt(), 0.0)),
        );
        let u = &eig.eigenvectors;
        Ok(Self(u * DMatrix::from_diagonal(&roots) * u.adjoint()))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    /// One draw from `CN(0, R)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<Complex64> {
        let w = DVector::from_fn(self.dim(), |_, _| complex_normal(rng));
        &self.0 * w
    }
}

/// `sqrt(G_B G_R) (sqrt(k/(k+1)) a_p bᵀ + sqrt(1/(k+1)) H_NLoS)` with
/// `CN(0, R)` columns in the scattered part. Draws come from the channel
/// stream of `params.rng_seed`, H columns before V columns.
pub fn rician_channel(
    g: &RisGeometry,
    bs: &BsGeometry,
    angles: &ScenarioAngles,
    params: &RicianParams,
    correlation: &CorrelationSqrt,
    gains: LinkGains,
) -> Result<PolChannel> {
    params.validate()?;
    if correlation.dim() != g.per_pol_len() {
        return invalid("correlation size does not match the surface");
    }
    let (w_los, w_nlos) = if params.kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((params.kappa / (params.kappa + 1.0)).sqrt(), (1.0 / (params.kappa + 1.0)).sqrt())
    };
    let s = gains.product().sqrt();
    let b = bs_steering(bs, angles.aod);
    let mut rng = stream_rng(params.rng_seed, streams::CHANNEL);
    let mut mat = |pol| {
        let mut h = outer(&steering_vector(g, angles.aoa, pol), &b, w_los);
        for j in 0..bs.m {
            let col = correlation.sample(&mut rng);
            for i in 0..h.nrows() {
                h[(i, j)] += col[i] * w_nlos;
            }
        }
        h * Complex64::new(s, 0.0)
    };
    let h = if g.is_dual_polarized() { mat(Polarization::H) } else { empty_h(bs.m) };
    let v = mat(Polarization::V);
    Ok(PolChannel { h, v })
}

/// `w = b*(aod) / ||b||`.
pub fn mrt_weights(bs: &BsGeometry, aod: f64) -> Vec<Complex64> {
    let s = 1.0 / (bs.m as f64).sqrt();
    bs_steering(bs, aod).into_iter().map(|z| z.conj() * s).collect()
}

fn fix_phase(v: &mut [Complex64]) {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(first) = v.iter().find(|z| z.norm() > 1e-9 * scale).copied() {
        let rot = first.conj() / first.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

/// Unit-norm principal eigenvector of `Hᴴ H`, phase-fixed so its first
/// nonzero entry is real and positive.
pub fn eigen_beamformer(h: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    if h.ncols() == 0 || h.iter().all(|z| z.norm_sqr() == 0.0) {
        return invalid("beamformer of a zero channel");
    }
    let gram = h.adjoint() * h;
    let gram = (&gram + gram.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    let mut f: Vec<Complex64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
    if order.len() > 1 && (top - eig.eigenvalues[order[1]]).abs() <= TIE_REL * top.abs() {
        // Degenerate top space: take the unit vector of the tied subspace
        // closest to e1, which is deterministic regardless of solver output.
        let tied: Vec<usize> =
            order.iter().copied().filter(|&i| (top - eig.eigenvalues[i]).abs() <= TIE_REL * top.abs()).collect();
        let mut proj = vec![Complex64::new(0.0, 0.0); f.len()];
        for &i in &tied {
            let col = eig.eigenvectors.column(i);
            let c = col[0].conj();
            for (p, x) in proj.iter_mut().zip(col.iter()) {
                *p += x * c;
            }
        }
        let n: f64 = proj.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-9 {
            f = proj.into_iter().map(|z| z / n).collect();
        }
    }
    let norm: f64 = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    f.iter_mut().for_each(|z| *z /= norm);
    fix_phase(&mut f);
    Ok(f)
}

/// `h = H f`.
pub fn effective_channel(h: &DMatrix<Complex64>, f: &[Complex64]) -> Result<Vec<Complex64>> {
    if h.ncols() != f.len() {
        return invalid(format!("beamformer length {} does not match {} BS antennas", f.len(), h.ncols()));
    }
    Ok((h * DVector::from_column_slice(f)).iter().copied().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Los,
    Rician { seed: u64 },
}

/// Effective surface channels `h_H`, `h_V`; `h_h` is empty on a
/// uni-polarized surface. Complex entries serialize as `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRealization {
    pub h_h: Vec<Complex64>,
    pub h_v: Vec<Complex64>,
    pub provenance: Provenance,
}

impl ChannelRealization {
    /// Eigen-beamforms each polarization of `channel`.
    pub fn from_channel(channel: &PolChannel, provenance: Provenance) -> Result<Self> {
        let eff = |m: &DMatrix<Complex64>| -> Result<Vec<Complex64>> {
            if m.nrows() == 0 {
                return Ok(Vec::new());
            }
            effective_channel(m, &eigen_beamformer(m)?)
        };
        Ok(Self { h_h: eff(&channel.h)?, h_v: eff(&channel.v)?, provenance })
    }

    /// Line-of-sight backhaul with MRT on both polarizations.
    pub fn los(g: &RisGeometry, bs: &BsGeometry, angles: &ScenarioAngles, gains: LinkGains) -> Result<Self> {
        let ch = los_channel(g, bs, angles, gains);
        let w = mrt_weights(bs, angles.aod);
        let h_h = if ch.h.nrows() == 0 { Vec::new() } else { effective_channel(&ch.h, &w)? };
        Ok(Self { h_h, h_v: effective_channel(&ch.v, &w)?, provenance: Provenance::Los })
    }

    pub fn as_pair(&self) -> PolPair {
        PolPair::new(self.h_h.clone(), self.h_v.clone())
    }

    /// Effective configuration `h_p ⊙ phi_p`.
    pub fn effective(&self, config: &ConfigPair) -> Result<PolPair> {
        self.as_pair().hadamard(config)
    }

    pub fn check_against(&self, g: &RisGeometry) -> Result<()> {
        if self.h_h.iter().chain(&self.h_v).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("channel realization has non-finite entries");
        }
        self.as_pair().check_against(g)
    }
}

/// Backhaul model between the BS and the surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackhaulModel {
    Los,
    Rician { kappa: f64, asd: f64 },
}

/// Fully specified backhaul scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Backhaul {
    pub geometry: RisGeometry,
    pub bs: BsGeometry,
    pub angles: ScenarioAngles,
    pub gains: LinkGains,
    pub model: BackhaulModel,
    pub quadrature: QuadratureSpec,
}

impl Backhaul {
    /// Effective channels; `seed` selects the Rician draw and is ignored for
    /// line of sight.
    pub fn realize(&self, seed: u64) -> Result<ChannelRealization> {
        match self.model {
            BackhaulModel::Los => ChannelRealization::los(&self.geometry, &self.bs, &self.angles, self.gains),
            BackhaulModel::Rician { kappa, asd } => {
                let params = RicianParams { kappa, asd, rng_seed: seed };
                params.validate()?;
                let r = correlation_matrix(&self.geometry, self.angles.aoa, asd, &self.quadrature)?;
                let root = CorrelationSqrt::new(&r)?;
                let ch = rician_channel(&self.geometry, &self.bs, &self.angles, &params, &root, self.gains)?;
                ChannelRealization::from_channel(&ch, Provenance::Rician { seed })
            }
        }
    }
}
