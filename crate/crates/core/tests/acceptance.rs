//! Acceptance suite. Each test prints one `PASS` or `FAIL` line for its
//! criterion and then asserts it.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_6, PI};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use broadbeam::array::{
    array_factor_los, mean_af_over_period, mean_total_db, pattern_csv, pattern_grid, to_db, user_specific_config,
    AngleGrid, Direction, PatternRow, PatternSource, RisGeometry,
};
use broadbeam::channel::BackhaulModel;
use broadbeam::eval::{
    design_scheme, evaluate_design, fraction_better, golay_config, min_se_sweep, sample_users, sweep_csv, Design,
    Scenario, Scheme, SeReport,
};
use broadbeam::golay::{
    acf_1d, acf_2d, construct_array_pair_horizontal, construct_array_pair_vertical, expand_array_pair_horizontal,
    expand_array_pair_vertical, is_golay_pair_2d, psd_1d, psd_from_acf, psd_sum_check, seed_pairs,
    sum_acf_from_psd_grid, ComplexArray2D, SeedPair,
};
use broadbeam::optimizer::{epsilon_complementary, OptimizerSettings, SidepeakObjective};
use broadbeam::rng::stream_rng;
use num_complex::Complex64;
use rand::Rng;

/// Seed for the channel, optimizer and user streams of criteria 6 to 8.
const RUN_SEED: u64 = 1;
const USERS: usize = 1000;

fn report(id: u32, pass: bool, detail: String) {
    println!("criterion {id}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
}

fn incident() -> Direction {
    Direction::new(FRAC_PI_3, FRAC_PI_3).unwrap()
}

fn upa16() -> RisGeometry {
    RisGeometry::upa(16, 16, 0.25, 0.25, 1.0).unwrap()
}

#[test]
fn criterion_1_golay_flatness() {
    let t = Instant::now();
    let g = upa16();
    let cfg = golay_config(&g).unwrap();
    let inc = incident();
    let rows = pattern_grid(PatternSource::Los { config: &cfg, incident: inc }, &g, &AngleGrid::square(181)).unwrap();
    let dev = rows.iter().map(|r| (r.af_total / 256.0 - 1.0).abs()).fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    let pass = rows.len() == 181 * 181 && dev <= 1e-9 && secs < 10.0;
    report(1, pass, format!("max relative deviation from 256 = {dev:.3e}, {:.2} dB, {secs:.2} s", to_db(256.0)));
    assert!(pass);
}

#[test]
fn criterion_2_user_specific_peak() {
    let g = upa16();
    let inc = incident();
    let target = Direction::new(FRAC_PI_6, FRAC_PI_6).unwrap();
    let cfg = user_specific_config(&g, inc, target);
    let peak = array_factor_los(&cfg, &g, inc, target).unwrap();
    let expect = 2.0 * 128.0 * 128.0;
    let rel = (peak / expect - 1.0).abs();
    let fine = pattern_grid(PatternSource::Los { config: &cfg, incident: inc }, &g, &AngleGrid::square(1000)).unwrap();
    let avg = mean_total_db(&fine);
    let pass = rel <= 1e-9 && (avg - 3.61).abs() <= 0.5;
    report(
        2,
        pass,
        format!("peak {:.4} dB (relative error {rel:.2e}), grid average {avg:.3} dB on 1000x1000 (reference 3.61 dB)", to_db(peak)),
    );
    assert!(pass);
}

fn rotate(p: &SeedPair, rng: &mut impl Rng) -> (Vec<Complex64>, Vec<Complex64>) {
    let w = Complex64::cis(rng.random_range(0.0..2.0 * PI));
    let a: Vec<Complex64> = p.a.as_slice().iter().map(|z| z * w).collect();
    let b: Vec<Complex64> = p.b.as_slice().iter().map(|z| z * w).collect();
    if rng.random_bool(0.5) {
        (b, a)
    } else {
        (a, b)
    }
}

fn pair_error(u: &ComplexArray2D, v: &ComplexArray2D) -> (bool, f64) {
    let n = u.len() as f64;
    let c = is_golay_pair_2d(u, v, 1e-10 * n).unwrap();
    (c.is_pair, c.max_sidepeak.max(c.zero_lag_error) / n)
}

#[test]
fn criterion_3_complementarity_exactness() {
    let catalog = seed_pairs();
    let small: Vec<&SeedPair> = catalog.iter().filter(|p| p.len() <= 4).collect();
    let mut rng = stream_rng(2024, 0);
    let mut cases = 0;
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut note = |ok: bool, e: f64| {
        cases += 1;
        failures += usize::from(!ok);
        worst = worst.max(e);
    };
    for _ in 0..80 {
        let (u1, v1) = rotate(&catalog[rng.random_range(0..catalog.len())], &mut rng);
        let (u2, v2) = rotate(&catalog[rng.random_range(0..catalog.len())], &mut rng);
        let (a, b) = if rng.random_bool(0.5) {
            construct_array_pair_vertical(&u1, &v1, &u2, &v2).unwrap()
        } else {
            construct_array_pair_horizontal(&u1, &v1, &u2, &v2).unwrap()
        };
        let (ok, e) = pair_error(&a, &b);
        note(ok, e);
    }
    for _ in 0..40 {
        let mut arrays = Vec::new();
        for _ in 0..2 {
            let (u1, v1) = rotate(small[rng.random_range(0..small.len())], &mut rng);
            let (u2, v2) = rotate(small[rng.random_range(0..small.len())], &mut rng);
            arrays.push(construct_array_pair_vertical(&u1, &v1, &u2, &v2).unwrap());
        }
        let ((a1, b1), (a2, b2)) = (&arrays[0], &arrays[1]);
        let (a, b) = if rng.random_bool(0.5) {
            expand_array_pair_vertical(a1, b1, a2, b2).unwrap()
        } else {
            expand_array_pair_horizontal(a1, b1, a2, b2).unwrap()
        };
        let (ok, e) = pair_error(&a, &b);
        note(ok, e);
    }

    let mut wk = 0.0f64;
    for p in &catalog {
        let (u, v) = (p.a.as_slice(), p.b.as_slice());
        wk = wk.max(psd_sum_check(u, v, 512).unwrap());
        let (ra, rb) = (acf_1d(u).unwrap(), acf_1d(v).unwrap());
        for k in 0..512 {
            let psi = k as f64 / 512.0;
            wk = wk.max((psd_from_acf(&ra, psi) - psd_1d(u, psi)).abs());
            wk = wk.max((psd_from_acf(&rb, psi) - psd_1d(v, psi)).abs());
        }
    }
    let (s1, s2) = (&catalog[3], &catalog[6]);
    let (a, b) = construct_array_pair_vertical(s1.a.as_slice(), s1.b.as_slice(), s2.a.as_slice(), s2.b.as_slice()).unwrap();
    let direct = acf_2d(&a).sum(&acf_2d(&b)).unwrap();
    let back = sum_acf_from_psd_grid(&a, &b, 32, 16).unwrap();
    for (x, y) in direct.lags() {
        wk = wk.max((direct.get(x, y) - back.get(x, y)).norm());
    }

    let pass = cases >= 100 && failures == 0 && wk <= 1e-9;
    report(
        3,
        pass,
        format!("{cases} cases, {failures} failures, worst normalized sidepeak {worst:.2e}, Wiener-Khinchin error {wk:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_epsilon_complementary_convergence() {
    let mut reached = 0;
    let mut parseval = 0.0f64;
    let mut slowest = Duration::ZERO;
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let t = Instant::now();
        let sc = Scenario::reference_ula(Scenario::rician_default(), seed).unwrap();
        let g = sc.backhaul.geometry;
        let ch = sc.channels().unwrap();
        let r = epsilon_complementary(&ch.as_pair(), &g, &OptimizerSettings::with_seed(seed)).unwrap();
        slowest = slowest.max(t.elapsed());
        let ratio = r.utility / r.trace[0].utility;
        ratios.push(ratio);
        if ratio <= 0.02 {
            reached += 1;
        }
        let eff = ch.effective(&r.config).unwrap();
        let mean = mean_af_over_period(&eff, &g, 256, 1).unwrap();
        parseval = parseval.max((mean / eff.energy() - 1.0).abs());
        println!(
            "  seed {seed}: sidepeak {:.4} -> {:.4}, ratio {ratio:.4}, {:?} after {} passes, {:.1} s",
            -r.trace[0].utility,
            -r.utility,
            r.termination,
            r.outer_iterations(),
            t.elapsed().as_secs_f64()
        );
    }
    let pass = reached >= 9 && parseval <= 1e-6 && slowest < Duration::from_secs(300);
    let list: Vec<String> = ratios.iter().map(|r| format!("{r:.4}")).collect();
    report(
        4,
        pass,
        format!(
            "{reached}/10 seeds at ratio <= 0.02 (ratios {}), Parseval error {parseval:.2e}, slowest seed {:.1} s",
            list.join(" "),
            slowest.as_secs_f64()
        ),
    );
    assert!(pass);
}

fn update_drift(g: &RisGeometry, updates: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 0);
    let n = g.total_elements();
    let h: Vec<Complex64> =
        (0..n).map(|_| Complex64::from_polar(rng.random_range(0.2..1.5), rng.random_range(0.0..2.0 * PI))).collect();
    let pair = broadbeam::array::PolPair::new(h[..n / 2].to_vec(), h[n / 2..].to_vec());
    let mut obj = SidepeakObjective::new(&pair, g).unwrap();
    for _ in 0..updates {
        obj.set_phase(rng.random_range(0..n), rng.random_range(0.0..2.0 * PI));
    }
    obj.sum_acf().iter().zip(obj.recomputed_sum_acf()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

fn update_cost(per_pol: usize) -> f64 {
    let g = RisGeometry::ula(2 * per_pol, 0.25, 1.0).unwrap();
    let n = g.total_elements();
    let mut rng = stream_rng(per_pol as u64, 0);
    let h: Vec<Complex64> = (0..n).map(|_| Complex64::cis(rng.random_range(0.0..2.0 * PI))).collect();
    let pair = broadbeam::array::PolPair::new(h[..per_pol].to_vec(), h[per_pol..].to_vec());
    let mut obj = SidepeakObjective::new(&pair, &g).unwrap();
    let moves: Vec<(usize, f64)> = (0..20_000).map(|_| (rng.random_range(0..n), rng.random_range(0.0..2.0 * PI))).collect();
    let mut best = f64::INFINITY;
    for _ in 0..5 {
        let t = Instant::now();
        for &(k, p) in &moves {
            obj.set_phase(k, p);
        }
        best = best.min(t.elapsed().as_secs_f64() / moves.len() as f64);
    }
    best
}

#[test]
fn criterion_5_incremental_acf() {
    let line = update_drift(&RisGeometry::ula(128, 0.25, 1.0).unwrap(), 10_000, 5);
    let plane = update_drift(&RisGeometry::upa(16, 8, 0.25, 0.25, 1.0).unwrap(), 10_000, 6);
    let sizes = [16usize, 32, 64, 128];
    let costs: Vec<f64> = sizes.iter().map(|&n| update_cost(n)).collect();
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = costs.iter().map(|c| c.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let pass = line <= 1e-10 && plane <= 1e-10 && (0.5..=1.5).contains(&slope);
    let ns: Vec<String> = costs.iter().map(|c| format!("{:.0}", c * 1e9)).collect();
    report(
        5,
        pass,
        format!("drift line {line:.2e}, plane {plane:.2e}; ns/update {} for N = 16..128, log-log slope {slope:.2}", ns.join("/")),
    );
    assert!(pass);
}

fn ripple_db(rows: &[PatternRow], f: impl Fn(&PatternRow) -> f64) -> f64 {
    let v: Vec<f64> = rows.iter().map(|r| to_db(f(r).max(1e-30))).collect();
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
}

struct Fixture {
    scenario: Scenario,
    users: Vec<broadbeam::eval::UserSample>,
    designs: Vec<Design>,
}

fn build(scenario: Scenario, schemes: &[Scheme]) -> Fixture {
    let users = sample_users(USERS, &scenario.budget, RUN_SEED).unwrap();
    let settings = OptimizerSettings::with_seed(RUN_SEED);
    let designs = schemes.iter().map(|&s| design_scheme(s, &scenario, &users, &settings).unwrap()).collect();
    Fixture { scenario, users, designs }
}

const BENCHMARKS: [Scheme; 3] = [Scheme::DpMaxSum, Scheme::DpMaxMin, Scheme::UpMaxMin];

fn rician_16x16() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let sc = Scenario::reference_upa(Scenario::rician_default(), RUN_SEED).unwrap();
        let mut schemes = vec![Scheme::ProposedEpsComp];
        schemes.extend(BENCHMARKS);
        build(sc, &schemes)
    })
}

#[test]
fn criterion_6_planar_epsilon_complementary() {
    let f = rician_16x16();
    let d = &f.designs[0];
    let opt = d.optimization.as_ref().unwrap();
    let eff = d.channels.effective(&d.config).unwrap();
    let rows = pattern_grid(PatternSource::Effective { weights: &eff }, &d.geometry, &AngleGrid::square(181)).unwrap();
    let total = ripple_db(&rows, |r| r.af_total);
    let h = ripple_db(&rows, |r| r.af_h);
    let v = ripple_db(&rows, |r| r.af_v);
    let within = opt.outer_iterations() <= 1000 && opt.trace.len() <= 1001;
    let pass = total < h.min(v) && within;
    report(
        6,
        pass,
        format!(
            "ripple total {total:.2} dB, H {h:.2} dB, V {v:.2} dB; {:?} after {} passes, sidepeak ratio {:.4}",
            opt.termination,
            opt.outer_iterations(),
            opt.utility / opt.trace[0].utility
        ),
    );
    assert!(pass);
}

fn compare(f: &Fixture) -> (bool, String) {
    let reports: Vec<SeReport> =
        f.designs.iter().map(|d| evaluate_design(d, &f.scenario.budget, &f.users, RUN_SEED).unwrap()).collect();
    let (reference, rest) = reports.split_first().unwrap();
    let mut ok = true;
    let mut parts = vec![format!("{} min SE {:.3}", reference.scheme, reference.min_se)];
    for r in rest {
        let frac = fraction_better(reference, r).unwrap();
        ok &= frac > 0.55 && reference.min_se > r.min_se;
        parts.push(format!("vs {}: better for {:.1}%, min SE {:.3}", r.scheme, 100.0 * frac, r.min_se));
    }
    (ok, parts.join("; "))
}

#[test]
fn criterion_7_spectral_efficiency_comparison() {
    let t = Instant::now();
    let los = Scenario::reference_upa(BackhaulModel::Los, RUN_SEED).unwrap();
    let mut schemes = vec![Scheme::ProposedGolay];
    schemes.extend(BENCHMARKS);
    let (ok_los, los_text) = compare(&build(los, &schemes));
    let (ok_ric, ric_text) = compare(rician_16x16());
    let secs = t.elapsed().as_secs_f64();
    let pass = ok_los && ok_ric && secs < 1800.0;
    report(7, pass, format!("LoS [{los_text}]; Rician [{ric_text}]; {secs:.0} s"));
    assert!(pass);
}

fn sweep_ok(f: &Fixture) -> (bool, String) {
    let p = [20.0, 25.0, 30.0, 35.0, 40.0];
    let keep: Vec<Design> =
        f.designs.iter().filter(|d| matches!(d.scheme, Scheme::ProposedEpsComp | Scheme::DpMaxMin | Scheme::UpMaxMin)).cloned().collect();
    let rows = min_se_sweep(&keep, &p, &f.scenario.budget, &f.users, RUN_SEED).unwrap();
    let curve = |label: &str| -> Vec<f64> { rows.iter().filter(|r| r.scheme == label).map(|r| r.min_se).collect() };
    let (prop, dp, up) = (curve("proposed-eps-comp"), curve("dp-max-min"), curve("up-max-min"));
    let ordered = (0..p.len()).all(|i| prop[i] >= dp[i] && dp[i] >= up[i]);
    let monotone = [&prop, &dp, &up].iter().all(|c| c.len() == p.len() && c.windows(2).all(|w| w[1] > w[0]));
    let fmt = |c: &[f64]| c.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    (ordered && monotone, format!("proposed {}, dp-max-min {}, up-max-min {}", fmt(&prop), fmt(&dp), fmt(&up)))
}

#[test]
fn criterion_8_min_se_ordering() {
    let (ok_big, big) = sweep_ok(rician_16x16());
    let small = Scenario::reference_upa_sized(16, 8, Scenario::rician_default(), RUN_SEED).unwrap();
    let (ok_small, small_text) =
        sweep_ok(&build(small, &[Scheme::ProposedEpsComp, Scheme::DpMaxMin, Scheme::UpMaxMin]));
    let pass = ok_big && ok_small;
    report(8, pass, format!("16x16 [{big}]; 16x8 [{small_text}]"));
    assert!(pass);
}

fn pipeline_outputs() -> Vec<String> {
    let mut out = Vec::new();
    let sc = Scenario::reference_upa_sized(8, 8, Scenario::rician_default(), 3).unwrap();
    let users = sample_users(200, &sc.budget, 3).unwrap();
    let settings = OptimizerSettings { l1_max: 30, ..OptimizerSettings::with_seed(3) };
    let mut sc = sc;
    sc.maxmin_grid = 20;
    let mut designs = Vec::new();
    for s in [Scheme::ProposedEpsComp, Scheme::DpMaxSum, Scheme::DpMaxMin, Scheme::UpMaxMin] {
        let d = design_scheme(s, &sc, &users, &settings).unwrap();
        let r = evaluate_design(&d, &sc.budget, &users, 3).unwrap();
        out.push(d.optimization.as_ref().unwrap().trace_csv());
        out.push(serde_json::to_string(&d.config.to_record()).unwrap());
        out.push(r.to_csv());
        out.push(r.summary_json().to_string());
        designs.push(d);
    }
    let eff = designs[0].channels.effective(&designs[0].config).unwrap();
    let rows = pattern_grid(PatternSource::Effective { weights: &eff }, &designs[0].geometry, &AngleGrid::square(61)).unwrap();
    out.push(pattern_csv(&rows));
    out.push(sweep_csv(&min_se_sweep(&designs, &[20.0, 30.0], &sc.budget, &users, 3).unwrap()));
    out
}

#[test]
fn criterion_9_determinism() {
    let runs: Vec<Vec<String>> = [1usize, 3, 1]
        .iter()
        .map(|&n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(pipeline_outputs))
        .collect();
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    let bytes: usize = runs[0].iter().map(String::len).sum();
    report(9, same, format!("{} artifacts, {bytes} bytes, identical across 1/3/1 threads", runs[0].len()));
    assert!(same);
}
