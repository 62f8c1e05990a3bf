//! Subcommand implementations. Each returns a short human-readable summary
//! for stdout; files go under the output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use broadbeam::array::{
    mean_total_db, pattern_csv, pattern_grid, to_db, user_specific_config, ConfigRecord, PatternRow, PatternSource,
    PolPair, Polarization, RisGeometry,
};
use broadbeam::channel::BackhaulModel;
use broadbeam::eval::{
    design_scheme, evaluate_design, fraction_better, golay_config, golay_sequence_pair, min_se_sweep, sample_users,
    sweep_csv, Design, LinkBudget, Scheme, SeReport, SweepRow, UserResult, UserSample,
};
use broadbeam::golay::{
    acf_2d, construct_array_pair_vertical, construct_array_pair_horizontal, expand_array_pair_horizontal,
    expand_array_pair_vertical, is_golay_pair_2d, planar_seeds_len8, ArrayPairRecord, ComplexArray2D, SeedPair,
    SeedRecord, DEFAULT_REL_TOL,
};
use broadbeam::optimizer::{epsilon_complementary, OptimizationResult, Termination};

use crate::config::RunConfig;
use crate::error::{usage, CliError, CliResult};

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    let io = |e| CliError::Io { path: path.to_path_buf(), source: e };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
    }
    std::fs::write(path, contents).map_err(io)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Parse { path: path.to_path_buf(), source: e })?;
    text.push('\n');
    write_file(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse { path: path.to_path_buf(), source: e })
}

fn require_seed(seed: Option<u64>, what: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Usage(format!("{what} is stochastic; pass --seed")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ConstructMethod {
    Prop2Vertical,
    Prop2Horizontal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ExpandMethod {
    Vertical,
    Horizontal,
}

/// Sequence pairs feeding a planar construction. Two length-8 seeds use the
/// distinct quaternary/binary pairs of the catalog.
fn construction_seeds(first: usize, second: usize) -> CliResult<(SeedPair, SeedPair)> {
    if first == 8 && second == 8 {
        return Ok(planar_seeds_len8());
    }
    Ok((golay_sequence_pair(first)?, golay_sequence_pair(second)?))
}

fn verify_record(a: &ComplexArray2D, b: &ComplexArray2D, tol: Option<f64>) -> CliResult<String> {
    let tol = tol.unwrap_or(DEFAULT_REL_TOL * a.len() as f64);
    let check = is_golay_pair_2d(a, b, tol)?;
    if !check.is_pair {
        return Err(CliError::Verification(format!(
            "{}x{} pair: max sidepeak {:.3e} exceeds {:.3e}",
            a.rows(),
            a.cols(),
            check.max_sidepeak,
            tol
        )));
    }
    Ok(format!("{}x{} pair verified, max sidepeak {:.3e}", a.rows(), a.cols(), check.max_sidepeak))
}

pub fn golay_construct(
    seed_len: usize,
    second_len: Option<usize>,
    method: ConstructMethod,
    out: &Path,
) -> CliResult<String> {
    let (s1, s2) = construction_seeds(seed_len, second_len.unwrap_or(seed_len))?;
    let (a, b) = match method {
        ConstructMethod::Prop2Vertical => construct_array_pair_vertical(&s1.a, &s1.b, &s2.a, &s2.b)?,
        ConstructMethod::Prop2Horizontal => construct_array_pair_horizontal(&s1.a, &s1.b, &s2.a, &s2.b)?,
    };
    let summary = verify_record(&a, &b, None)?;
    let source = format!("{:?} from [{}] and [{}]", method, s1.source, s2.source);
    write_json(out, &ArrayPairRecord::from_pair(&a, &b, source))?;
    Ok(format!("{summary}; written to {}", out.display()))
}

/// Accepts an array-pair record or a sequence-pair record.
fn load_pair(path: &Path) -> CliResult<(ComplexArray2D, ComplexArray2D)> {
    let value: serde_json::Value = read_json(path)?;
    if let Ok(rec) = serde_json::from_value::<ArrayPairRecord>(value.clone()) {
        return Ok(rec.to_pair()?);
    }
    match serde_json::from_value::<SeedRecord>(value) {
        Ok(rec) => {
            let s = SeedPair::from_record(&rec)?;
            Ok((ComplexArray2D::new(1, s.len(), s.a.to_vec())?, ComplexArray2D::new(1, s.len(), s.b.to_vec())?))
        }
        Err(e) => Err(CliError::Parse { path: path.to_path_buf(), source: e }),
    }
}

pub fn golay_verify(path: &Path, tol: Option<f64>) -> CliResult<String> {
    let (a, b) = load_pair(path)?;
    verify_record(&a, &b, tol)
}

pub fn golay_expand(first: &Path, second: &Path, method: ExpandMethod, out: &Path) -> CliResult<String> {
    let (a1, b1) = load_pair(first)?;
    let (a2, b2) = load_pair(second)?;
    let (a, b) = match method {
        ExpandMethod::Vertical => expand_array_pair_vertical(&a1, &b1, &a2, &b2)?,
        ExpandMethod::Horizontal => expand_array_pair_horizontal(&a1, &b1, &a2, &b2)?,
    };
    let summary = verify_record(&a, &b, None)?;
    let source = format!("{:?} expansion of {} and {}", method, first.display(), second.display());
    write_json(out, &ArrayPairRecord::from_pair(&a, &b, source))?;
    Ok(format!("{summary}; written to {}", out.display()))
}

fn pattern_summary(rows: &[PatternRow]) -> serde_json::Value {
    let db: Vec<f64> = rows.iter().map(|r| to_db(r.af_total)).collect();
    let max = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = db.iter().copied().fold(f64::INFINITY, f64::min);
    let peak = rows.iter().zip(&db).find(|(_, v)| **v == max).map(|(r, _)| (r.phi_rad, r.theta_rad));
    let finite = |x: f64| if x.is_finite() { serde_json::json!(x) } else { serde_json::Value::Null };
    serde_json::json!({
        "points": rows.len(),
        "af_total_max_db": finite(max),
        "af_total_min_db": finite(min),
        "af_total_mean_db": finite(mean_total_db(rows)),
        "af_total_ripple_db": finite(max - min),
        "argmax_rad": peak.map(|p| [p.0, p.1]),
    })
}

fn format_pattern_summary(v: &serde_json::Value) -> String {
    format!(
        "pattern over {} directions: total AF max {} dB, min {} dB, mean {} dB",
        v["points"], v["af_total_max_db"], v["af_total_min_db"], v["af_total_mean_db"]
    )
}

/// Pattern of the first design. Line-of-sight designs that do not depend on
/// channel knowledge are drawn from the configuration and the incident
/// direction; everything else from the effective weights.
pub fn pattern(cfg: &RunConfig, seed: Option<u64>, dir: &Path) -> CliResult<String> {
    let scheme = cfg.scheme.designs[0];
    let g = cfg.scenario.geometry;
    let incident = cfg.scenario.angles.aoa();
    let los = cfg.scenario.backhaul == BackhaulModel::Los;
    let rows = match (los, scheme) {
        (true, Scheme::ProposedGolay) => {
            let config = golay_config(&g)?;
            pattern_grid(PatternSource::Los { config: &config, incident }, &g, &cfg.output.grid)?
        }
        (true, Scheme::UserSpecific { target }) => {
            let config = user_specific_config(&g, incident, target);
            pattern_grid(PatternSource::Los { config: &config, incident }, &g, &cfg.output.grid)?
        }
        _ => {
            let seed = require_seed(seed, "this pattern")?;
            let design = build_design(cfg, scheme, seed)?;
            let eff = design.channels.effective(&design.config)?;
            pattern_grid(PatternSource::Effective { weights: &eff }, &design.geometry, &cfg.output.grid)?
        }
    };
    write_file(&dir.join("pattern.csv"), &pattern_csv(&rows))?;
    let summary = pattern_summary(&rows);
    write_json(&dir.join("pattern_summary.json"), &summary)?;
    Ok(format_pattern_summary(&summary))
}

fn build_design(cfg: &RunConfig, scheme: Scheme, seed: u64) -> CliResult<Design> {
    let scenario = cfg.scenario(seed);
    let users = sample_users(cfg.scheme.users, &scenario.budget, seed)?;
    Ok(design_scheme(scheme, &scenario, &users, &cfg.settings(seed))?)
}

/// Magnitudes of the per-polarization and summed ACFs over all lags.
pub fn acf_csv(eff: &PolPair, g: &RisGeometry) -> CliResult<String> {
    let (rows, _) = g.matrix_shape();
    let v = acf_2d(&ComplexArray2D::from_column_major(eff.get(Polarization::V), rows)?);
    let h = if eff.h.is_empty() { None } else { Some(acf_2d(&ComplexArray2D::from_column_major(&eff.h, rows)?)) };
    let mut s = String::from("lag_y,lag_z,acf_h_abs,acf_v_abs,acf_sum_abs\n");
    for (a, b) in v.lags() {
        let rv = v.get(a, b);
        let rh = h.as_ref().map_or(num_complex::Complex64::new(0.0, 0.0), |t| t.get(a, b));
        let _ = writeln!(s, "{},{},{},{},{}", a, b, rh.norm(), rv.norm(), (rh + rv).norm());
    }
    Ok(s)
}

fn split_phases(r: &OptimizationResult, dual: bool) -> ConfigRecord {
    if dual {
        let n = r.phases.len() / 2;
        ConfigRecord { phi_h_rad: r.phases[..n].to_vec(), phi_v_rad: r.phases[n..].to_vec() }
    } else {
        ConfigRecord { phi_h_rad: Vec::new(), phi_v_rad: r.phases.clone() }
    }
}

fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::IterationCapped => "iteration_capped",
    }
}

/// Runs the ε-complementary search on the configured backhaul. Files are
/// written in every case; an iteration-capped run is reported as
/// non-convergence.
pub fn optimize(cfg: &RunConfig, seed: u64, dir: &Path) -> CliResult<String> {
    let scenario = cfg.scenario(seed);
    let g = scenario.backhaul.geometry;
    let channels = scenario.channels()?;
    let r = epsilon_complementary(&channels.as_pair(), &g, &cfg.settings(seed))?;
    let eff = channels.effective(&r.config)?;
    write_json(&dir.join("config_pair.json"), &split_phases(&r, g.is_dual_polarized()))?;
    write_file(&dir.join("trace.csv"), &r.trace_csv())?;
    write_file(&dir.join("acf.csv"), &acf_csv(&eff, &g)?)?;
    let rows = pattern_grid(PatternSource::Effective { weights: &eff }, &g, &cfg.output.grid)?;
    write_file(&dir.join("pattern.csv"), &pattern_csv(&rows))?;
    let initial = r.trace[0].utility;
    let result = serde_json::json!({
        "termination": termination_label(r.termination),
        "outer_iterations": r.outer_iterations(),
        "initial_sidepeak": -initial,
        "final_sidepeak": -r.utility,
        "epsilon": r.epsilon,
        "sidepeak_ratio": if initial != 0.0 { r.utility / initial } else { 0.0 },
        "zero_lag": eff.energy(),
        "pattern": pattern_summary(&rows),
    });
    write_json(&dir.join("optimize.json"), &result)?;
    let summary = format!(
        "{} after {} outer iterations: sidepeak {:.6} -> {:.6} (epsilon {:.6})",
        termination_label(r.termination),
        r.outer_iterations(),
        -initial,
        -r.utility,
        r.epsilon.unwrap_or(f64::NAN)
    );
    match r.termination {
        Termination::Converged => Ok(summary),
        Termination::IterationCapped => Err(CliError::NotConverged(summary)),
    }
}

fn unique_labels(designs: &[Scheme]) -> CliResult<()> {
    let mut seen = std::collections::BTreeSet::new();
    for s in designs {
        if !seen.insert(s.label()) {
            return usage(format!("design '{}' listed twice", s.label()));
        }
    }
    Ok(())
}

fn build_designs(cfg: &RunConfig, seed: u64, dir: &Path) -> CliResult<(Vec<Vec<Design>>, Vec<UserSample>)> {
    unique_labels(&cfg.scheme.designs)?;
    let base = cfg.scenario(seed);
    let users = sample_users(cfg.scheme.users, &base.budget, seed)?;
    let settings = cfg.settings(seed);
    let many = cfg.scheme.realizations > 1;
    let mut draws = Vec::new();
    for r in 0..cfg.scheme.realizations {
        let scenario = cfg.scenario(RunConfig::realization_seed(seed, r));
        let mut designs = Vec::new();
        for &s in &cfg.scheme.designs {
            let d = design_scheme(s, &scenario, &users, &settings)?;
            let tag = if many { format!("{}_r{r}", s.label()) } else { s.label().to_string() };
            write_json(&dir.join(format!("config_{tag}.json")), &d.config.to_record())?;
            if let Some(o) = &d.optimization {
                write_file(&dir.join(format!("trace_{tag}.csv")), &o.trace_csv())?;
            }
            designs.push(d);
        }
        draws.push(designs);
    }
    Ok((draws, users))
}

/// One report per design, pooling the users of every backhaul draw.
fn pooled_reports(draws: &[Vec<Design>], budget: &LinkBudget, users: &[UserSample], seed: u64) -> CliResult<Vec<SeReport>> {
    let k = users.len();
    let mut reports = Vec::new();
    for i in 0..draws[0].len() {
        let mut rows = Vec::with_capacity(k * draws.len());
        for (r, draw) in draws.iter().enumerate() {
            let rep = evaluate_design(&draw[i], budget, users, seed)?;
            rows.extend(rep.users.into_iter().map(|u| UserResult { user_id: r * k + u.user_id, ..u }));
        }
        reports.push(SeReport::from_users(draws[0][i].scheme.label(), seed, rows));
    }
    Ok(reports)
}

/// SE report per design plus a comparison against the first design.
pub fn evaluate(cfg: &RunConfig, seed: u64, dir: &Path) -> CliResult<String> {
    let (draws, users) = build_designs(cfg, seed, dir)?;
    let reports = pooled_reports(&draws, &cfg.scenario.budget, &users, seed)?;
    let mut min_se = BTreeMap::new();
    let mut better = BTreeMap::new();
    let mut out = String::new();
    for r in &reports {
        write_file(&dir.join(format!("se_{}.csv", r.scheme)), &r.to_csv())?;
        write_json(&dir.join(format!("se_{}.json", r.scheme)), &r.summary_json())?;
        min_se.insert(r.scheme.clone(), r.min_se);
        let _ = writeln!(out, "{:<20} min SE {:.4} bit/s/Hz", r.scheme, r.min_se);
    }
    let reference = &reports[0];
    for r in &reports[1..] {
        let f = fraction_better(reference, r)?;
        better.insert(r.scheme.clone(), f);
        let _ = writeln!(out, "{} beats {} for {:.1}% of users", reference.scheme, r.scheme, 100.0 * f);
    }
    write_json(
        &dir.join("comparison.json"),
        &serde_json::json!({
            "reference": reference.scheme,
            "seed": seed,
            "users": users.len(),
            "realizations": draws.len(),
            "min_se": min_se,
            "fraction_reference_better": better,
        }),
    )?;
    Ok(out.trim_end().to_string())
}

/// Minimum SE per design over the configured transmit powers.
pub fn sweep(cfg: &RunConfig, seed: u64, dir: &Path) -> CliResult<String> {
    if cfg.scheme.p_t_dbm.is_empty() {
        return usage("sweep needs scheme.p_t_dbm");
    }
    let (draws, users) = build_designs(cfg, seed, dir)?;
    let mut rows: Vec<SweepRow> = Vec::new();
    for draw in &draws {
        let next = min_se_sweep(draw, &cfg.scheme.p_t_dbm, &cfg.scenario.budget, &users, seed)?;
        if rows.is_empty() {
            rows = next;
        } else {
            for (acc, r) in rows.iter_mut().zip(next) {
                acc.min_se = acc.min_se.min(r.min_se);
            }
        }
    }
    let csv = sweep_csv(&rows);
    write_file(&dir.join("sweep.csv"), &csv)?;
    let mut out = String::new();
    for r in &rows {
        let _ = writeln!(out, "P_T {:>5} dBm  {:<20} min SE {:.4}", r.p_t_dbm, r.scheme, r.min_se);
    }
    Ok(out.trim_end().to_string())
}

/// Checked-in experiment configurations, one per figure.
pub fn figure_configs(figure: u8) -> CliResult<Vec<(&'static str, &'static str)>> {
    Ok(match figure {
        3 => vec![("", include_str!("../configs/fig3.json"))],
        4 => vec![("", include_str!("../configs/fig4.json"))],
        5 => vec![("", include_str!("../configs/fig5.json"))],
        6 => vec![("", include_str!("../configs/fig6.json"))],
        7 => vec![("", include_str!("../configs/fig7.json"))],
        8 => vec![("", include_str!("../configs/fig8.json"))],
        9 => vec![("n256", include_str!("../configs/fig9_n256.json")), ("n128", include_str!("../configs/fig9_n128.json"))],
        _ => return usage(format!("no figure {figure}; choose 3 to 9")),
    })
}

pub fn reproduce(figure: u8, seed: Option<u64>, out: Option<&Path>) -> CliResult<String> {
    let mut summaries = Vec::new();
    let mut pending: Option<CliError> = None;
    for (sub, text) in figure_configs(figure)? {
        let origin = PathBuf::from(format!("fig{figure}{}{sub}.json", if sub.is_empty() { "" } else { "_" }));
        let cfg = RunConfig::parse(text, &origin)?;
        let base = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
        let dir = if sub.is_empty() { base } else { base.join(sub) };
        let res = match figure {
            3 | 4 => pattern(&cfg, seed, &dir),
            5 | 6 => optimize(&cfg, require_seed(seed, "this figure")?, &dir),
            7 | 8 => evaluate(&cfg, require_seed(seed, "this figure")?, &dir),
            _ => sweep(&cfg, require_seed(seed, "this figure")?, &dir),
        };
        match res {
            Ok(s) => summaries.push(s),
            Err(CliError::NotConverged(s)) => {
                summaries.push(s.clone());
                pending = Some(CliError::NotConverged(s));
            }
            Err(e) => return Err(e),
        }
    }
    match pending {
        Some(e) => Err(e),
        None => Ok(summaries.join("\n")),
    }
}
