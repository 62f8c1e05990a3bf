//! Link-level evaluation: path loss, SNR, spectral efficiency, user drops,
//! scheme design and SE reports.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_6, PI};
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{
    array_factor_effective, db_to_linear, element_gain, steering_vector, AngleGrid, ConfigPair, Direction,
    RisGeometry,
};
use crate::channel::{Backhaul, BackhaulModel, BsGeometry, ChannelRealization, LinkGains, ScenarioAngles};
use crate::error::{invalid, Result};
use crate::golay::{construct_array_pair_vertical, planar_seeds_len8, seed_of_length, SeedPair};
use crate::optimizer::{epsilon_complementary, optimize_directional, Aggregate, OptimizationResult, OptimizerSettings};
use crate::quadrature::QuadratureSpec;
use crate::rng::{stream_rng, streams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkBudget {
    pub p_t_dbm: f64,
    pub sigma2_dbm: f64,
    /// BS to surface distance.
    pub d_bs_ris_m: f64,
    pub d_min_m: f64,
    pub d_max_m: f64,
    /// Users fall in `[-az_max, az_max] x [-el_max, el_max]`.
    pub az_max_rad: f64,
    pub el_max_rad: f64,
    pub pl_intercept_db: f64,
    pub pl_slope_db: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            p_t_dbm: 30.0,
            sigma2_dbm: -110.0,
            d_bs_ris_m: 50.0,
            d_min_m: 50.0,
            d_max_m: 80.0,
            az_max_rad: FRAC_PI_3,
            el_max_rad: FRAC_PI_6,
            pl_intercept_db: -37.5,
            pl_slope_db: 22.0,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.p_t_dbm, self.sigma2_dbm, self.pl_intercept_db, self.pl_slope_db];
        if finite.iter().any(|x| !x.is_finite()) {
            return invalid("link budget powers must be finite");
        }
        if !(self.d_bs_ris_m > 0.0 && self.d_min_m > 0.0 && self.d_max_m >= self.d_min_m) {
            return invalid("distances must be positive with d_min <= d_max");
        }
        Direction::new(self.az_max_rad, self.el_max_rad)?;
        if self.az_max_rad < 0.0 || self.el_max_rad < 0.0 {
            return invalid("angular bounds must be non-negative");
        }
        Ok(())
    }

    pub fn pathloss_db(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return invalid(format!("distance {d} must be positive"));
        }
        Ok(self.pl_intercept_db - self.pl_slope_db * d.log10())
    }

    /// `P_T * beta~ / sigma²`, linear.
    fn backhaul_snr_scale(&self) -> Result<f64> {
        Ok(db_to_linear(self.p_t_dbm - self.sigma2_dbm + self.pathloss_db(self.d_bs_ris_m)?))
    }
}

/// `-37.5 - 22 log10(d)` dB.
pub fn pathloss_db(d: f64) -> Result<f64> {
    LinkBudget::default().pathloss_db(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSample {
    pub d_m: f64,
    pub direction: Direction,
}

/// I.i.d. users from the budget's uniform distance and angle ranges.
pub fn sample_users(k: usize, budget: &LinkBudget, seed: u64) -> Result<Vec<UserSample>> {
    budget.validate()?;
    if k == 0 {
        return invalid("at least one user is required");
    }
    let mut rng = stream_rng(seed, streams::USERS);
    let mut uni = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    (0..k)
        .map(|_| {
            let d = uni(budget.d_min_m, budget.d_max_m);
            let az = uni(-budget.az_max_rad, budget.az_max_rad);
            let el = uni(-budget.el_max_rad, budget.el_max_rad);
            Ok(UserSample { d_m: d, direction: Direction::new(az, el)? })
        })
        .collect()
}

pub fn spectral_efficiency(snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return invalid(format!("SNR {snr} must be non-negative"));
    }
    Ok((1.0 + snr).log2())
}

/// Line-of-sight SNR with the backhaul folded into
/// `gamma = M P_T beta~ beta G_B G_R(incident) G_R(user) / sigma²`.
#[allow(clippy::too_many_arguments)]
pub fn snr_los(
    config: &ConfigPair,
    g: &RisGeometry,
    bs: &BsGeometry,
    angles: &ScenarioAngles,
    gains: LinkGains,
    budget: &LinkBudget,
    user: &UserSample,
) -> Result<f64> {
    let gamma = bs.m() as f64
        * budget.backhaul_snr_scale()?
        * db_to_linear(budget.pathloss_db(user.d_m)?)
        * gains.product()
        * element_gain(user.direction);
    Ok(gamma * crate::array::array_factor_los(config, g, angles.aoa(), user.direction)?)
}

/// SNR with effective channels, `gamma = P_T beta~ beta G_R(user) / sigma²`
/// times the effective array factor.
pub fn snr_arbitrary(
    config: &ConfigPair,
    channels: &ChannelRealization,
    g: &RisGeometry,
    budget: &LinkBudget,
    user: &UserSample,
) -> Result<f64> {
    let eff = channels.effective(config)?;
    let gamma = budget.backhaul_snr_scale()? * db_to_linear(budget.pathloss_db(user.d_m)?) * element_gain(user.direction);
    Ok(gamma * array_factor_effective(&eff, g, user.direction)?)
}

/// Doubling construction `(a|b, a|-b)` from a catalog seed up to `len`.
pub fn golay_sequence_pair(len: usize) -> Result<SeedPair> {
    if let Some(s) = seed_of_length(len) {
        return Ok(s);
    }
    if len < 2 || !len.is_power_of_two() {
        return invalid(format!("no complementary pair of length {len} available"));
    }
    let half = golay_sequence_pair(len / 2)?;
    Ok(SeedPair {
        a: half.a.concat(&half.b),
        b: half.a.concat(&half.b.negated()),
        source: format!("binary doubling, length {len}"),
    })
}

/// Complementary configuration pair for a dual-polarized surface.
/// Planar layouts stack two sequence pairs vertically; for 8-by-8 blocks
/// the quaternary length-8 pair feeds the column factor.
pub fn golay_config(g: &RisGeometry) -> Result<ConfigPair> {
    if !g.is_dual_polarized() {
        return invalid("complementary pairs need a dual-polarized surface");
    }
    let (rows, cols) = g.matrix_shape();
    if cols == 1 {
        let p = golay_sequence_pair(rows)?;
        return Ok(ConfigPair::new(p.a.to_vec(), p.b.to_vec()));
    }
    if rows % 2 != 0 {
        return invalid("planar complementary pair needs an even row count");
    }
    let first = golay_sequence_pair(rows / 2)?;
    let second = if cols == 8 { planar_seeds_len8().1 } else { golay_sequence_pair(cols)? };
    let (u, v) = construct_array_pair_vertical(&first.a, &first.b, &second.a, &second.b)?;
    Ok(ConfigPair::from_matrices(&u, &v))
}

/// Configuration co-phasing every element toward `target` under `channels`.
pub fn matched_config(channels: &ChannelRealization, g: &RisGeometry, target: Direction) -> Result<ConfigPair> {
    channels.check_against(g)?;
    let phase = |h: &[Complex64], pol| -> Vec<Complex64> {
        if h.is_empty() {
            return Vec::new();
        }
        let a = steering_vector(g, target, pol);
        h.iter().zip(a).map(|(x, y)| Complex64::cis(-(x * y).arg())).collect()
    };
    Ok(ConfigPair::new(
        phase(&channels.h_h, crate::array::Polarization::H),
        phase(&channels.h_v, crate::array::Polarization::V),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scheme {
    ProposedGolay,
    ProposedEpsComp,
    DpMaxSum,
    DpMaxMin,
    UpMaxMin,
    UserSpecific { target: Direction },
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::ProposedGolay => "proposed-golay",
            Scheme::ProposedEpsComp => "proposed-eps-comp",
            Scheme::DpMaxSum => "dp-max-sum",
            Scheme::DpMaxMin => "dp-max-min",
            Scheme::UpMaxMin => "up-max-min",
            Scheme::UserSpecific { .. } => "user-specific",
        }
    }

    /// The broad-beam design suited to the backhaul model.
    pub fn proposed_for(model: &BackhaulModel) -> Self {
        match model {
            BackhaulModel::Los => Scheme::ProposedGolay,
            BackhaulModel::Rician { .. } => Scheme::ProposedEpsComp,
        }
    }
}

/// Backhaul, budget and seeds of one experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scenario {
    pub backhaul: Backhaul,
    pub budget: LinkBudget,
    /// Selects the Rician realization.
    pub channel_seed: u64,
    /// Points per axis of the max-min design grid over `[-pi/2, pi/2]²`.
    pub maxmin_grid: usize,
}

impl Scenario {
    /// 16 x 16 planar surface at quarter-wavelength pitch, 4-antenna BS at
    /// half-wavelength pitch, departure -pi/3, arrival (pi/3, pi/3).
    pub fn reference_upa(model: BackhaulModel, channel_seed: u64) -> Result<Self> {
        Self::reference_upa_sized(16, 16, model, channel_seed)
    }

    pub fn reference_upa_sized(n_y: usize, n_z: usize, model: BackhaulModel, channel_seed: u64) -> Result<Self> {
        let geometry = RisGeometry::upa(n_y, n_z, 0.25, 0.25, 1.0)?;
        let angles = ScenarioAngles::new(-FRAC_PI_3, Direction::new(FRAC_PI_3, FRAC_PI_3)?)?;
        Self::assemble(geometry, angles, model, channel_seed)
    }

    /// Interleaved line with 64 elements per polarization, arrival azimuth pi/3.
    pub fn reference_ula(model: BackhaulModel, channel_seed: u64) -> Result<Self> {
        let geometry = RisGeometry::ula(128, 0.25, 1.0)?;
        let angles = ScenarioAngles::new(-FRAC_PI_3, Direction::new(FRAC_PI_3, 0.0)?)?;
        Self::assemble(geometry, angles, model, channel_seed)
    }

    fn assemble(geometry: RisGeometry, angles: ScenarioAngles, model: BackhaulModel, channel_seed: u64) -> Result<Self> {
        Ok(Self {
            backhaul: Backhaul {
                geometry,
                bs: BsGeometry::new(4, 0.5, 1.0)?,
                angles,
                gains: LinkGains::element_model(&angles),
                model,
                quadrature: QuadratureSpec::default(),
            },
            budget: LinkBudget::default(),
            channel_seed,
            maxmin_grid: 100,
        })
    }

    pub fn rician_default() -> BackhaulModel {
        BackhaulModel::Rician { kappa: 3.0, asd: PI / 18.0 }
    }

    pub fn channels(&self) -> Result<ChannelRealization> {
        self.backhaul.realize(self.channel_seed)
    }

    /// Same scenario on the uni-polarized surface of equal element count.
    pub fn uni_polarized(&self) -> Result<Self> {
        let mut s = *self;
        s.backhaul.geometry = self.backhaul.geometry.uni_polarized_twin()?;
        Ok(s)
    }

    fn maxmin_targets(&self) -> Result<Vec<(Direction, f64)>> {
        Ok(AngleGrid::square(self.maxmin_grid)
            .directions()?
            .into_iter()
            .map(|d| (d, element_gain(d)))
            .collect())
    }
}

/// A configuration together with the surface and channels it was designed
/// for.
#[derive(Clone, Debug)]
pub struct Design {
    pub scheme: Scheme,
    pub geometry: RisGeometry,
    pub channels: ChannelRealization,
    pub config: ConfigPair,
    pub optimization: Option<OptimizationResult>,
}

pub fn design_scheme(
    scheme: Scheme,
    scenario: &Scenario,
    users: &[UserSample],
    settings: &OptimizerSettings,
) -> Result<Design> {
    let (scenario, geometry) = match scheme {
        Scheme::UpMaxMin => {
            let s = scenario.uni_polarized()?;
            (s, s.backhaul.geometry)
        }
        _ => (*scenario, scenario.backhaul.geometry),
    };
    let channels = scenario.channels()?;
    let pair = channels.as_pair();
    let (config, optimization) = match scheme {
        Scheme::ProposedGolay => {
            if scenario.backhaul.model != BackhaulModel::Los {
                return invalid("complementary-pair design requires a line-of-sight backhaul");
            }
            (golay_config(&geometry)?, None)
        }
        Scheme::ProposedEpsComp => {
            let r = epsilon_complementary(&pair, &geometry, settings)?;
            (r.config.clone(), Some(r))
        }
        Scheme::DpMaxSum => {
            if users.is_empty() {
                return invalid("max-sum design needs the user set");
            }
            let targets: Vec<(Direction, f64)> = users
                .iter()
                .map(|u| {
                    let beta = db_to_linear(scenario.budget.pathloss_db(u.d_m)?);
                    Ok((u.direction, beta * element_gain(u.direction)))
                })
                .collect::<Result<_>>()?;
            let r = optimize_directional(&pair, &geometry, &targets, Aggregate::Sum, settings)?;
            (r.config.clone(), Some(r))
        }
        Scheme::DpMaxMin | Scheme::UpMaxMin => {
            let targets = scenario.maxmin_targets()?;
            let r = optimize_directional(&pair, &geometry, &targets, Aggregate::Min, settings)?;
            (r.config.clone(), Some(r))
        }
        Scheme::UserSpecific { target } => (matched_config(&channels, &geometry, target)?, None),
    };
    Ok(Design { scheme, geometry, channels, config, optimization })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UserResult {
    pub user_id: usize,
    pub d_m: f64,
    pub phi_rad: f64,
    pub theta_rad: f64,
    pub snr_linear: f64,
    pub se_bpshz: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeReport {
    pub scheme: String,
    pub seed: u64,
    pub users: Vec<UserResult>,
    pub min_se: f64,
    /// Right-continuous empirical CDF, one point per distinct SE value.
    pub cdf: Vec<(f64, f64)>,
}

pub const SE_CSV_HEADER: &str = "user_id,d_m,phi_rad,theta_rad,snr_linear,se_bpshz";

impl SeReport {
    pub fn from_users(scheme: &str, seed: u64, users: Vec<UserResult>) -> Self {
        let cdf = empirical_cdf(&users.iter().map(|u| u.se_bpshz).collect::<Vec<_>>());
        let min_se = users.iter().map(|u| u.se_bpshz).fold(f64::INFINITY, f64::min);
        Self { scheme: scheme.to_string(), seed, users, min_se, cdf }
    }

    pub fn se_values(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.se_bpshz).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(SE_CSV_HEADER);
        s.push('\n');
        for u in &self.users {
            let _ = writeln!(s, "{},{},{},{},{},{}", u.user_id, u.d_m, u.phi_rad, u.theta_rad, u.snr_linear, u.se_bpshz);
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "scheme": self.scheme,
            "seed": self.seed,
            "min_se": self.min_se,
            "cdf": self.cdf.iter().map(|(a, b)| [*a, *b]).collect::<Vec<_>>(),
        })
    }
}

pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (i, x) in v.into_iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = p,
            _ => out.push((x, p)),
        }
    }
    out
}

/// Share of users for which `a` gives strictly higher SE than `b`.
pub fn fraction_better(a: &SeReport, b: &SeReport) -> Result<f64> {
    if a.users.len() != b.users.len() || a.users.is_empty() {
        return invalid("reports cover different user sets");
    }
    let wins = a.users.iter().zip(&b.users).filter(|(x, y)| x.se_bpshz > y.se_bpshz).count();
    Ok(wins as f64 / a.users.len() as f64)
}

/// SE of every user under a design; users are evaluated in parallel and
/// reported in input order.
pub fn evaluate_design(design: &Design, budget: &LinkBudget, users: &[UserSample], seed: u64) -> Result<SeReport> {
    budget.validate()?;
    let rows: Vec<UserResult> = users
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let snr = snr_arbitrary(&design.config, &design.channels, &design.geometry, budget, u)?;
            Ok(UserResult {
                user_id: i,
                d_m: u.d_m,
                phi_rad: u.direction.azimuth(),
                theta_rad: u.direction.elevation(),
                snr_linear: snr,
                se_bpshz: spectral_efficiency(snr)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SeReport::from_users(design.scheme.label(), seed, rows))
}

/// Designs and evaluates one scheme.
pub fn run_scheme(
    scheme: Scheme,
    scenario: &Scenario,
    users: &[UserSample],
    settings: &OptimizerSettings,
    seed: u64,
) -> Result<SeReport> {
    let design = design_scheme(scheme, scenario, users, settings)?;
    evaluate_design(&design, &scenario.budget, users, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub p_t_dbm: f64,
    pub scheme: String,
    pub min_se: f64,
}

/// Minimum SE per scheme and transmit power. Designs do not depend on the
/// transmit power, so each scheme is designed once.
pub fn min_se_sweep(
    designs: &[Design],
    p_t_values: &[f64],
    budget: &LinkBudget,
    users: &[UserSample],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut out = Vec::new();
    for &p in p_t_values {
        let b = LinkBudget { p_t_dbm: p, ..*budget };
        for d in designs {
            let r = evaluate_design(d, &b, users, seed)?;
            out.push(SweepRow { p_t_dbm: p, scheme: r.scheme.clone(), min_se: r.min_se });
        }
    }
    Ok(out)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("p_t_dbm,scheme,min_se_bpshz\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.p_t_dbm, r.scheme, r.min_se);
    }
    s
}
