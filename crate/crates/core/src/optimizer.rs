//! Stochastic coordinate refinement of surface phases.
//!
//! The engine follows the increment/decrement/shrink scheme used for
//! ε-complementary pairs and is shared by every objective. Objectives keep
//! incremental caches so a single-coordinate trial costs time linear in the
//! number of lags (or directions) rather than a full recomputation.

use std::cell::Cell;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::{steering_vector, ConfigPair, Direction, Layout, PolPair, RisGeometry};
use crate::error::{invalid, Result};
use crate::golay::{acf_1d, acf_2d, ComplexArray2D};
use crate::rng::{stream_rng, streams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    /// Stop once every sidepeak is within this fraction of the initial peak.
    pub epsilon_fraction: f64,
    pub alpha: f64,
    pub l1_max: usize,
    pub l2_max: usize,
    pub rng_seed: u64,
    /// Relative improvement per outer pass below which benchmark runs stop.
    pub stall_rel_tol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { epsilon_fraction: 0.02, alpha: 0.97, l1_max: 1000, l2_max: 1000, rng_seed: 0, stall_rel_tol: 1e-6 }
    }
}

impl OptimizerSettings {
    pub fn with_seed(seed: u64) -> Self {
        Self { rng_seed: seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        if !(self.epsilon_fraction > 0.0 && self.epsilon_fraction.is_finite()) {
            return invalid("epsilon fraction must be positive");
        }
        if !(self.stall_rel_tol >= 0.0) {
            return invalid("stall tolerance must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    IterationCapped,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// `|F| <= fraction * |F(initial)|`.
    Epsilon { fraction: f64 },
    /// Relative gain over one outer pass below `rel_tol`.
    Stall { rel_tol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub utility: f64,
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub config: ConfigPair,
    /// Final phases in `[0, 2 pi)`, H block then V block.
    pub phases: Vec<f64>,
    pub utility: f64,
    pub epsilon: Option<f64>,
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
}

impl OptimizationResult {
    pub fn outer_iterations(&self) -> usize {
        self.trace.last().map_or(0, |r| r.outer_iter)
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("outer_iter,utility,epsilon\n");
        for r in &self.trace {
            let eps = r.epsilon.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{}", r.outer_iter, r.utility, eps);
        }
        s
    }
}

/// A utility to maximize over per-coordinate phases.
pub trait Objective {
    /// Number of phase coordinates.
    fn len(&self) -> usize;
    /// Rebuilds every cache from `phases`.
    fn reset(&mut self, phases: &[f64]);
    fn value(&self) -> f64;
    /// Utility with coordinate `k` moved to `phase`, or `None` when it would
    /// drop below `floor`. Leaves the state untouched.
    fn trial(&self, k: usize, phase: f64, floor: f64) -> Option<f64>;
    /// Applies a move previously evaluated by `trial`.
    fn commit(&mut self, k: usize, phase: f64);
    /// Recomputes caches from the committed phases.
    fn resync(&mut self);
}

/// Runs the refinement loop from a uniformly random start.
pub fn run_engine<O: Objective>(obj: &mut O, settings: &OptimizerSettings, stop: StopRule) -> Result<(Vec<f64>, Vec<TraceRow>, Termination)> {
    settings.validate()?;
    let n = obj.len();
    let mut rng = stream_rng(settings.rng_seed, streams::OPTIMIZER);
    let mut omega: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
    obj.reset(&omega);
    let mut f = obj.value();
    let eps = match stop {
        StopRule::Epsilon { fraction } => Some(fraction * f.abs()),
        StopRule::Stall { .. } => None,
    };
    let mut trace = vec![TraceRow { outer_iter: 0, utility: f, epsilon: eps }];
    let mut stalled = false;
    let mut l1 = 0;
    let termination = loop {
        let done = match (stop, eps) {
            (StopRule::Epsilon { .. }, Some(e)) => f.abs() <= e,
            _ => stalled,
        };
        if done {
            break Termination::Converged;
        }
        if l1 >= settings.l1_max {
            break Termination::IterationCapped;
        }
        l1 += 1;
        let mut delta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        let start = f;
        for k in 0..n {
            let mu = f;
            let mut l2 = 0;
            while f <= mu && l2 < settings.l2_max {
                l2 += 1;
                let plus = omega[k] + delta[k];
                if let Some(fp) = obj.trial(k, plus, mu) {
                    obj.commit(k, plus);
                    omega[k] = plus;
                    f = fp;
                    continue;
                }
                let minus = plus - 2.0 * delta[k];
                if let Some(fm) = obj.trial(k, minus, mu) {
                    obj.commit(k, minus);
                    omega[k] = minus;
                    f = fm;
                } else {
                    delta[k] *= settings.alpha;
                }
            }
        }
        obj.resync();
        f = obj.value();
        trace.push(TraceRow { outer_iter: l1, utility: f, epsilon: eps });
        if let StopRule::Stall { rel_tol } = stop {
            stalled = f - start <= rel_tol * start.abs();
        }
    };
    Ok((omega, trace, termination))
}

fn phases_to_config(phases: &[f64], dual: bool) -> (ConfigPair, Vec<f64>) {
    let wrapped: Vec<f64> = phases.iter().map(|&p| crate::array::wrap_phase(p)).collect();
    let cis = |s: &[f64]| s.iter().map(|&p| Complex64::cis(p)).collect::<Vec<_>>();
    let config = if dual {
        let n = phases.len() / 2;
        ConfigPair::new(cis(&phases[..n]), cis(&phases[n..]))
    } else {
        ConfigPair::uni(cis(phases))
    };
    (config, wrapped)
}

fn check_channels(h: &PolPair, g: &RisGeometry) -> Result<()> {
    h.check_against(g)?;
    for v in [&h.h, &h.v] {
        if !v.is_empty() && v.iter().all(|z| z.norm_sqr() == 0.0) {
            return invalid("zero channel vector");
        }
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("non-finite channel entry");
        }
    }
    Ok(())
}

/// Sum of the per-polarization ACFs of effective weights, maximum magnitude
/// over nonzero lags, negated. Line layouts use the 1D ACF.
pub fn utility_ula(eff: &PolPair, g: &RisGeometry) -> Result<f64> {
    if g.layout() != Layout::UlaInterleaved {
        return invalid("line utility requested for a planar layout");
    }
    eff.check_against(g)?;
    let a = acf_1d(&eff.h)?;
    let b = acf_1d(&eff.v)?;
    let s = a.sum(&b)?;
    Ok(-s.max_sidepeak())
}

/// Planar analogue of [`utility_ula`] on the column-major matrix views.
pub fn utility_upa(eff: &PolPair, g: &RisGeometry) -> Result<f64> {
    if g.layout() == Layout::UlaInterleaved {
        return invalid("planar utility requested for a line layout");
    }
    eff.check_against(g)?;
    let rows = g.matrix_shape().0;
    let v = acf_2d(&ComplexArray2D::from_column_major(&eff.v, rows)?);
    if eff.h.is_empty() {
        return Ok(-v.max_sidepeak());
    }
    let h = acf_2d(&ComplexArray2D::from_column_major(&eff.h, rows)?);
    Ok(-h.sum(&v)?.max_sidepeak())
}

/// Utility for either layout.
pub fn utility(eff: &PolPair, g: &RisGeometry) -> Result<f64> {
    match g.layout() {
        Layout::UlaInterleaved => utility_ula(eff, g),
        _ => utility_upa(eff, g),
    }
}

/// Negated peak sidelobe of the summed ACF of `h_p ⊙ phi_p`, with the ACF
/// kept on a half plane of lags and updated per coordinate.
#[derive(Clone, Debug)]
pub struct SidepeakObjective {
    rows: usize,
    cols: usize,
    n_per: usize,
    h: Vec<Complex64>,
    x: Vec<Complex64>,
    lags: Vec<(isize, isize)>,
    /// Per coordinate, the lags it enters with the partner index on either
    /// side (`NONE` when the shifted position falls off the array).
    touch: Vec<Vec<Touch>>,
    /// `touched[k * lags + l]`.
    touched: Vec<bool>,
    sum: Vec<Complex64>,
    mags: Vec<f64>,
    peak: f64,
    argpeak: usize,
    /// Largest channel magnitude per polarization; bounds how far one
    /// coordinate can move any lag.
    hmax: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Touch {
    lag: u32,
    fwd: u32,
    bwd: u32,
}

const NONE: u32 = u32::MAX;

impl SidepeakObjective {
    /// `channels` holds `h_H`, `h_V` (H empty on uni-polarized surfaces).
    pub fn new(channels: &PolPair, g: &RisGeometry) -> Result<Self> {
        check_channels(channels, g)?;
        let (rows, cols) = g.matrix_shape();
        let mut lags = Vec::new();
        for b in 0..cols as isize {
            for a in -(rows as isize - 1)..rows as isize {
                if b > 0 || a > 0 {
                    lags.push((a, b));
                }
            }
        }
        let h: Vec<Complex64> = channels.h.iter().chain(&channels.v).copied().collect();
        let x = h.clone();
        let n_per = rows * cols;
        let hmax = h.chunks(n_per).map(|c| c.iter().map(|z| z.norm()).fold(0.0, f64::max)).collect();
        let index = |p: usize, r: isize, c: isize| {
            if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
                NONE
            } else {
                (p * n_per + c as usize * rows + r as usize) as u32
            }
        };
        let mut touch = Vec::with_capacity(h.len());
        let mut touched = vec![false; h.len() * lags.len()];
        for k in 0..h.len() {
            let (p, local) = (k / n_per, k % n_per);
            let (i, j) = ((local % rows) as isize, (local / rows) as isize);
            let mut list = Vec::new();
            for (l, &(a, b)) in lags.iter().enumerate() {
                let fwd = index(p, i + a, j + b);
                let bwd = index(p, i - a, j - b);
                if fwd != NONE || bwd != NONE {
                    list.push(Touch { lag: l as u32, fwd, bwd });
                    touched[k * lags.len() + l] = true;
                }
            }
            touch.push(list);
        }
        let mut me = Self {
            rows,
            cols,
            n_per,
            h,
            x,
            lags,
            touch,
            touched,
            sum: Vec::new(),
            mags: Vec::new(),
            peak: 0.0,
            argpeak: 0,
            hmax,
        };
        me.sum = me.full_sum();
        me.refresh_peak();
        Ok(me)
    }

    fn pols(&self) -> usize {
        self.x.len() / self.n_per
    }

    fn at(&self, p: usize, r: isize, c: isize) -> Option<Complex64> {
        if r < 0 || c < 0 || r >= self.rows as isize || c >= self.cols as isize {
            None
        } else {
            Some(self.x[p * self.n_per + c as usize * self.rows + r as usize])
        }
    }

    fn full_sum(&self) -> Vec<Complex64> {
        let (rows, cols) = (self.rows as isize, self.cols as isize);
        self.lags
            .iter()
            .map(|&(a, b)| {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in 0..self.pols() {
                    for c in 0..cols {
                        for r in 0..rows {
                            if let Some(y) = self.at(p, r + a, c + b) {
                                acc += self.at(p, r, c).unwrap() * y.conj();
                            }
                        }
                    }
                }
                acc
            })
            .collect()
    }

    fn rescan_peak(&mut self) {
        self.peak = 0.0;
        self.argpeak = 0;
        for (l, &m) in self.mags.iter().enumerate() {
            if m > self.peak {
                self.peak = m;
                self.argpeak = l;
            }
        }
    }

    fn refresh_peak(&mut self) {
        self.mags = self.sum.iter().map(|z| z.norm_sqr().sqrt()).collect();
        self.rescan_peak();
    }

    /// Lag `l` after adding `d` at the coordinate described by `t`.
    fn moved(&self, t: &Touch, d: Complex64) -> Complex64 {
        let mut v = self.sum[t.lag as usize];
        if t.fwd != NONE {
            v += d * self.x[t.fwd as usize].conj();
        }
        if t.bwd != NONE {
            v += self.x[t.bwd as usize] * d.conj();
        }
        v
    }

    /// Half-plane lags `(a, b)` with `b > 0`, or `b = 0` and `a > 0`.
    pub fn lags(&self) -> &[(isize, isize)] {
        &self.lags
    }

    /// Cached summed ACF on [`Self::lags`].
    pub fn sum_acf(&self) -> &[Complex64] {
        &self.sum
    }

    /// Summed ACF recomputed from the current effective weights.
    pub fn recomputed_sum_acf(&self) -> Vec<Complex64> {
        self.full_sum()
    }

    /// Zero-lag value, `||h_H ⊙ phi_H||² + ||h_V ⊙ phi_V||²`.
    pub fn zero_lag(&self) -> f64 {
        self.x.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn effective(&self) -> PolPair {
        if self.pols() == 2 {
            PolPair::new(self.x[..self.n_per].to_vec(), self.x[self.n_per..].to_vec())
        } else {
            PolPair::uni(self.x.clone())
        }
    }

    /// Incremental ACF update for coordinate `k` moving to `phase`. Only the
    /// lags coordinate `k` enters are touched.
    pub fn set_phase(&mut self, k: usize, phase: f64) {
        let new = self.h[k] * Complex64::cis(phase);
        let d = new - self.x[k];
        let mut grew = false;
        for t in &self.touch[k] {
            let l = t.lag as usize;
            let v = self.moved(t, d);
            self.sum[l] = v;
            let m = v.norm_sqr().sqrt();
            self.mags[l] = m;
            grew |= m > self.peak;
        }
        self.x[k] = new;
        let nl = self.lags.len();
        if nl > 0 && (grew || self.touched[k * nl + self.argpeak]) {
            self.rescan_peak();
        }
    }
}

impl Objective for SidepeakObjective {
    fn len(&self) -> usize {
        self.x.len()
    }

    fn reset(&mut self, phases: &[f64]) {
        for (k, &ph) in phases.iter().enumerate() {
            self.x[k] = self.h[k] * Complex64::cis(ph);
        }
        self.sum = self.full_sum();
        self.refresh_peak();
    }

    fn value(&self) -> f64 {
        -self.peak
    }

    fn trial(&self, k: usize, phase: f64, floor: f64) -> Option<f64> {
        let nl = self.lags.len();
        if nl == 0 {
            return (0.0 >= floor).then_some(0.0);
        }
        let limit = -floor;
        let d = self.h[k] * Complex64::cis(phase) - self.x[k];
        let touched = &self.touched[k * nl..(k + 1) * nl];
        // Untouched lags keep their magnitude; when the peak is among them
        // it bounds the result from below.
        let hot = touched[self.argpeak];
        let mut peak = if hot { 0.0 } else { self.peak };
        // No lag moves by more than 2 |d| max|h|, so lags that far below the
        // running peak are skipped.
        let reach = 2.0 * d.norm() * self.hmax[k / self.n_per] * (1.0 + 1e-9) + 1e-12 * self.peak;
        if hot {
            if let Some(t) = self.touch[k].iter().find(|t| t.lag as usize == self.argpeak) {
                peak = self.moved(t, d).norm_sqr().sqrt();
                if peak > limit {
                    return None;
                }
            }
        }
        for t in &self.touch[k] {
            let l = t.lag as usize;
            if self.mags[l] + reach < peak {
                continue;
            }
            let m = self.moved(t, d).norm_sqr().sqrt();
            if m > limit {
                return None;
            }
            peak = peak.max(m);
        }
        if hot {
            for (l, &m) in self.mags.iter().enumerate() {
                if !touched[l] {
                    peak = peak.max(m);
                }
            }
        }
        Some(-peak)
    }

    fn commit(&mut self, k: usize, phase: f64) {
        self.set_phase(k, phase);
    }

    fn resync(&mut self) {
        let fresh = self.full_sum();
        debug_assert!(
            {
                let scale = self.zero_lag().max(1.0);
                fresh.iter().zip(&self.sum).all(|(a, b)| (a - b).norm() <= 1e-10 * scale)
            },
            "incremental ACF drifted from recomputation"
        );
        self.sum = fresh;
        self.refresh_peak();
    }
}

/// Runs the ε-complementary search on effective channels `h_H`, `h_V`.
pub fn epsilon_complementary(
    channels: &PolPair,
    g: &RisGeometry,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    let mut obj = SidepeakObjective::new(channels, g)?;
    let stop = StopRule::Epsilon { fraction: settings.epsilon_fraction };
    let (omega, trace, termination) = run_engine(&mut obj, settings, stop)?;
    let (config, phases) = phases_to_config(&omega, g.is_dual_polarized());
    Ok(OptimizationResult {
        config,
        phases,
        utility: obj.value(),
        epsilon: trace[0].epsilon,
        trace,
        termination,
    })
}

/// Bisection on the epsilon fraction: the smallest fraction in `[lo, hi]`
/// (to `steps` halvings) for which the search converges under the given
/// iteration caps. Returns `None` when even `hi` fails.
pub fn bisect_epsilon_fraction(
    channels: &PolPair,
    g: &RisGeometry,
    settings: &OptimizerSettings,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<Option<(f64, OptimizationResult)>> {
    if !(lo > 0.0 && hi > lo) {
        return invalid("bisection needs 0 < lo < hi");
    }
    let run = |fraction| epsilon_complementary(channels, g, &OptimizerSettings { epsilon_fraction: fraction, ..*settings });
    let top = run(hi)?;
    if top.termination != Termination::Converged {
        return Ok(None);
    }
    let (mut lo, mut hi, mut best) = (lo, hi, top);
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        let r = run(mid)?;
        if r.termination == Termination::Converged {
            hi = mid;
            best = r;
        } else {
            lo = mid;
        }
    }
    Ok(Some((hi, best)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Sum,
    Min,
}

/// Weighted received power over a set of directions,
/// `w_d (|f_H(d)|² + |f_V(d)|²)` with `f_p(d) = sum_k phi_pk h_pk a_pk(d)`,
/// aggregated by sum or minimum.
#[derive(Clone, Debug)]
pub struct DirectionalObjective {
    aggregate: Aggregate,
    n_dirs: usize,
    n_per: usize,
    weights: Vec<f64>,
    wsum: f64,
    wmax: f64,
    /// `h_pk a_pk(d)`, coordinate-major.
    table: Vec<Complex64>,
    hmag: Vec<f64>,
    phi: Vec<Complex64>,
    /// Fields per polarization, direction-major within each block.
    fields: Vec<Complex64>,
    /// Largest field magnitude per polarization.
    fmax: Vec<f64>,
    values: Vec<f64>,
    /// Directions by increasing value (minimum aggregate only).
    order: Vec<usize>,
    current: f64,
    /// `sum_d w_d conj(f_p(d)) h_pk a_pk(d)` for the coordinate last asked.
    grad: Cell<Option<(usize, Complex64)>>,
}

impl DirectionalObjective {
    pub fn new(channels: &PolPair, g: &RisGeometry, targets: &[(Direction, f64)], aggregate: Aggregate) -> Result<Self> {
        check_channels(channels, g)?;
        if targets.is_empty() {
            return invalid("objective needs at least one direction");
        }
        if targets.iter().any(|t| !(t.1 >= 0.0 && t.1.is_finite())) {
            return invalid("direction weights must be finite and non-negative");
        }
        let pols = g.polarizations();
        let n_per = g.per_pol_len();
        let n_dirs = targets.len();
        let mut table = vec![Complex64::new(0.0, 0.0); pols.len() * n_per * n_dirs];
        let mut hmag = Vec::with_capacity(pols.len() * n_per);
        for (pi, &pol) in pols.iter().enumerate() {
            let h = channels.get(pol);
            hmag.extend(h.iter().map(|z| z.norm()));
            for (di, (d, _)) in targets.iter().enumerate() {
                let a = steering_vector(g, *d, pol);
                for k in 0..n_per {
                    table[(pi * n_per + k) * n_dirs + di] = h[k] * a[k];
                }
            }
        }
        let weights: Vec<f64> = targets.iter().map(|t| t.1).collect();
        let mut me = Self {
            aggregate,
            n_dirs,
            n_per,
            wsum: weights.iter().sum(),
            wmax: weights.iter().copied().fold(0.0, f64::max),
            weights,
            table,
            hmag,
            phi: vec![Complex64::new(1.0, 0.0); pols.len() * n_per],
            fields: Vec::new(),
            fmax: Vec::new(),
            values: Vec::new(),
            order: Vec::new(),
            current: 0.0,
            grad: Cell::new(None),
        };
        me.rebuild();
        Ok(me)
    }

    fn pols(&self) -> usize {
        self.phi.len() / self.n_per
    }

    fn rebuild(&mut self) {
        let nd = self.n_dirs;
        let mut fields = vec![Complex64::new(0.0, 0.0); self.pols() * nd];
        for (k, &p) in self.phi.iter().enumerate() {
            let pol = k / self.n_per;
            let row = &self.table[k * nd..(k + 1) * nd];
            for (f, t) in fields[pol * nd..(pol + 1) * nd].iter_mut().zip(row) {
                *f += p * t;
            }
        }
        self.fields = fields;
        self.refresh_values();
    }

    fn refresh_values(&mut self) {
        let nd = self.n_dirs;
        self.grad.set(None);
        self.values = (0..nd)
            .map(|d| self.weights[d] * (0..self.pols()).map(|p| self.fields[p * nd + d].norm_sqr()).sum::<f64>())
            .collect();
        self.fmax = self.fields.chunks(nd).map(|c| c.iter().map(|z| z.norm()).fold(0.0, f64::max)).collect();
        self.current = match self.aggregate {
            Aggregate::Sum => self.values.iter().sum(),
            Aggregate::Min => {
                let mut order: Vec<usize> = (0..nd).collect();
                order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
                self.order = order;
                self.values[self.order[0]]
            }
        };
    }

    fn gradient(&self, k: usize) -> Complex64 {
        if let Some((kk, g)) = self.grad.get() {
            if kk == k {
                return g;
            }
        }
        let nd = self.n_dirs;
        let pol = k / self.n_per;
        let own = &self.fields[pol * nd..(pol + 1) * nd];
        let row = &self.table[k * nd..(k + 1) * nd];
        let g = own.iter().zip(row).zip(&self.weights).map(|((f, t), w)| *w * f.conj() * t).sum();
        self.grad.set(Some((k, g)));
        g
    }

    /// Per-direction weighted power under the current phases.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len_directions(&self) -> usize {
        self.n_dirs
    }
}

impl Objective for DirectionalObjective {
    fn len(&self) -> usize {
        self.phi.len()
    }

    fn reset(&mut self, phases: &[f64]) {
        self.phi = phases.iter().map(|&p| Complex64::cis(p)).collect();
        self.rebuild();
    }

    fn value(&self) -> f64 {
        self.current
    }

    fn trial(&self, k: usize, phase: f64, floor: f64) -> Option<f64> {
        let nd = self.n_dirs;
        let d = Complex64::cis(phase) - self.phi[k];
        let pol = k / self.n_per;
        let v = match self.aggregate {
            Aggregate::Sum => {
                let e2 = d.norm_sqr() * self.hmag[k] * self.hmag[k];
                self.current + 2.0 * (d * self.gradient(k)).re + e2 * self.wsum
            }
            Aggregate::Min => {
                let row = &self.table[k * nd..(k + 1) * nd];
                let own = &self.fields[pol * nd..(pol + 1) * nd];
                let power = |i: usize| {
                    let mut s = (own[i] + d * row[i]).norm_sqr();
                    for p in (0..self.pols()).filter(|&p| p != pol) {
                        s += self.fields[p * nd + i].norm_sqr();
                    }
                    self.weights[i] * s
                };
                // A direction's value moves by at most w (2 |f| e + e²).
                let e = d.norm() * self.hmag[k];
                let reach = self.wmax * (2.0 * self.fmax[pol] * e + e * e) * (1.0 + 1e-9) + 1e-12 * self.current.abs();
                let mut m = f64::INFINITY;
                for &i in &self.order {
                    if self.values[i] - reach > m {
                        break;
                    }
                    let v = power(i);
                    if v < floor {
                        return None;
                    }
                    m = m.min(v);
                }
                m
            }
        };
        (v >= floor).then_some(v)
    }

    fn commit(&mut self, k: usize, phase: f64) {
        let nd = self.n_dirs;
        let new = Complex64::cis(phase);
        let d = new - self.phi[k];
        let pol = k / self.n_per;
        if self.aggregate == Aggregate::Sum {
            let e2 = d.norm_sqr() * self.hmag[k] * self.hmag[k];
            let moved = self.current + 2.0 * (d * self.gradient(k)).re + e2 * self.wsum;
            for (f, t) in self.fields[pol * nd..(pol + 1) * nd].iter_mut().zip(&self.table[k * nd..(k + 1) * nd]) {
                *f += d * t;
            }
            self.phi[k] = new;
            self.refresh_values();
            self.current = moved;
            return;
        }
        for (f, t) in self.fields[pol * nd..(pol + 1) * nd].iter_mut().zip(&self.table[k * nd..(k + 1) * nd]) {
            *f += d * t;
        }
        self.phi[k] = new;
        self.refresh_values();
    }

    fn resync(&mut self) {
        self.rebuild();
    }
}

/// Benchmark optimization: weighted received power over `targets`,
/// aggregated by `aggregate`, stopping on a stalled outer pass.
pub fn optimize_directional(
    channels: &PolPair,
    g: &RisGeometry,
    targets: &[(Direction, f64)],
    aggregate: Aggregate,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    let mut obj = DirectionalObjective::new(channels, g, targets, aggregate)?;
    let (omega, trace, termination) =
        run_engine(&mut obj, settings, StopRule::Stall { rel_tol: settings.stall_rel_tol })?;
    let (config, phases) = phases_to_config(&omega, g.is_dual_polarized());
    Ok(OptimizationResult { config, phases, utility: obj.value(), epsilon: None, trace, termination })
}

/// Sum of `w_u A(d_u)` for a fixed configuration; `A` uses effective weights.
pub fn objective_max_sum(eff: &PolPair, g: &RisGeometry, targets: &[(Direction, f64)]) -> Result<f64> {
    if targets.is_empty() {
        return invalid("empty user set");
    }
    targets
        .iter()
        .map(|(d, w)| crate::array::array_factor_effective(eff, g, *d).map(|a| w * a))
        .sum()
}

/// Minimum of `w_d A(d)` over a direction set for a fixed configuration.
pub fn objective_max_min_grid(eff: &PolPair, g: &RisGeometry, targets: &[(Direction, f64)]) -> Result<f64> {
    if targets.is_empty() {
        return invalid("empty direction grid");
    }
    targets
        .iter()
        .map(|(d, w)| crate::array::array_factor_effective(eff, g, *d).map(|a| w * a))
        .try_fold(f64::INFINITY, |m, v| v.map(|v| m.min(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{user_specific_config, AngleGrid};
    use crate::golay::{construct_array_pair_vertical, planar_seeds_len8, seed_of_length};
    use crate::rng::complex_normal;

    fn ones(n: usize) -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.0); n]
    }

    fn random_pair(n: usize, seed: u64) -> PolPair {
        let mut r = stream_rng(seed, 9);
        PolPair::new((0..n).map(|_| complex_normal(&mut r)).collect(), (0..n).map(|_| complex_normal(&mut r)).collect())
    }

    #[test]
    fn utility_examples_line() {
        let g = RisGeometry::ula(16, 0.25, 1.0).unwrap();
        let s = seed_of_length(8).unwrap();
        let golay = PolPair::new(s.a.to_vec(), s.b.to_vec());
        assert!(utility_ula(&golay, &g).unwrap().abs() < 1e-12);
        let flat = PolPair::new(ones(8), ones(8));
        assert_eq!(utility_ula(&flat, &g).unwrap(), -14.0);
    }

    #[test]
    fn utility_examples_planar() {
        let g = RisGeometry::upa(16, 16, 0.25, 0.25, 1.0).unwrap();
        let (s1, s2) = planar_seeds_len8();
        let (u, v) = construct_array_pair_vertical(&s1.a, &s1.b, &s2.a, &s2.b).unwrap();
        let golay = PolPair::from_matrices(&u, &v);
        assert!(utility_upa(&golay, &g).unwrap().abs() < 1e-12);
        // all-ones: largest sidepeak at lag (1, 0) or (0, 1)
        let flat = PolPair::new(ones(128), ones(128));
        assert_eq!(utility_upa(&flat, &g).unwrap(), -2.0 * 15.0 * 8.0);
    }

    #[test]
    fn cached_utility_matches_oracle() {
        for (g, seed) in [
            (RisGeometry::ula(24, 0.25, 1.0).unwrap(), 1),
            (RisGeometry::upa(5, 6, 0.25, 0.25, 1.0).unwrap(), 2),
            (RisGeometry::upa_uni(4, 3, 0.25, 0.25, 1.0).unwrap(), 3),
        ] {
            let mut ch = random_pair(g.per_pol_len(), seed);
            if !g.is_dual_polarized() {
                ch.h.clear();
            }
            let obj = SidepeakObjective::new(&ch, &g).unwrap();
            let oracle = utility(&ch, &g).unwrap();
            assert!((obj.value() - oracle).abs() <= 1e-12 * oracle.abs());
        }
    }

    #[test]
    fn incremental_update_fuzz() {
        let g = RisGeometry::upa(6, 8, 0.25, 0.25, 1.0).unwrap();
        let ch = random_pair(g.per_pol_len(), 4);
        let mut obj = SidepeakObjective::new(&ch, &g).unwrap();
        let before = obj.sum_acf().to_vec();
        obj.set_phase(5, 1.0);
        obj.set_phase(5, 0.0);
        for (a, b) in obj.sum_acf().iter().zip(&before) {
            assert!((a - b).norm() < 1e-12);
        }
        let mut r = stream_rng(5, 0);
        for _ in 0..200 {
            let k = r.random_range(0..obj.len());
            obj.set_phase(k, r.random_range(0.0..TAU));
        }
        let fresh = obj.recomputed_sum_acf();
        let diff = fresh.iter().zip(obj.sum_acf()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff <= 1e-10);
        assert!((obj.zero_lag() - ch.energy()).abs() < 1e-10);
    }

    #[test]
    fn single_element_has_no_sidepeaks() {
        let g = RisGeometry::ula(2, 0.25, 1.0).unwrap();
        let mut obj = SidepeakObjective::new(&PolPair::new(ones(1), ones(1)), &g).unwrap();
        assert!(obj.lags().is_empty());
        obj.set_phase(0, 2.0);
        assert_eq!(obj.value(), 0.0);
    }

    #[test]
    fn trial_agrees_with_commit() {
        let g = RisGeometry::ula(16, 0.25, 1.0).unwrap();
        let ch = random_pair(8, 6);
        let mut obj = SidepeakObjective::new(&ch, &g).unwrap();
        let t = obj.trial(3, 0.7, f64::NEG_INFINITY).unwrap();
        obj.commit(3, 0.7);
        assert!((obj.value() - t).abs() < 1e-12);
        assert!(obj.trial(3, 2.0, obj.value() + 1e9).is_none());
    }

    #[test]
    fn golay_length_line_converges() {
        let g = RisGeometry::ula(16, 0.25, 1.0).unwrap();
        let ch = PolPair::new(ones(8), ones(8));
        let r = epsilon_complementary(&ch, &g, &OptimizerSettings::with_seed(3)).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert!(r.utility.abs() <= r.epsilon.unwrap());
        let eff = ch.hadamard(&r.config).unwrap();
        assert!((utility(&eff, &g).unwrap() - r.utility).abs() < 1e-9);
    }

    #[test]
    fn zero_iterations_returns_start() {
        let g = RisGeometry::ula(16, 0.25, 1.0).unwrap();
        let ch = random_pair(8, 7);
        let s = OptimizerSettings { l1_max: 0, ..OptimizerSettings::with_seed(1) };
        let r = epsilon_complementary(&ch, &g, &s).unwrap();
        assert_eq!(r.termination, Termination::IterationCapped);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.trace[0].utility, r.utility);
    }

    #[test]
    fn trace_is_monotone_and_seeded() {
        let g = RisGeometry::upa(4, 4, 0.25, 0.25, 1.0).unwrap();
        let ch = random_pair(8, 8);
        let s = OptimizerSettings { l1_max: 30, ..OptimizerSettings::with_seed(2) };
        let a = epsilon_complementary(&ch, &g, &s).unwrap();
        for w in a.trace.windows(2) {
            assert!(w[1].utility >= w[0].utility - 1e-9);
        }
        let b = epsilon_complementary(&ch, &g, &s).unwrap();
        assert_eq!(a.phases, b.phases);
        assert_eq!(a.trace, b.trace);
        assert!(a.phases.iter().all(|p| (0.0..TAU).contains(p)));
        assert!(a.trace_csv().starts_with("outer_iter,utility,epsilon\n"));
    }

    #[test]
    fn zero_channel_is_rejected() {
        let g = RisGeometry::ula(8, 0.25, 1.0).unwrap();
        let ch = PolPair::new(vec![Complex64::new(0.0, 0.0); 4], ones(4));
        assert!(epsilon_complementary(&ch, &g, &OptimizerSettings::default()).is_err());
    }

    #[test]
    fn directional_objectives() {
        let g = RisGeometry::upa(4, 4, 0.25, 0.25, 1.0).unwrap();
        let inc = Direction::broadside();
        let target = Direction::new(0.3, -0.2).unwrap();
        let cfg = user_specific_config(&g, inc, target);
        let ch = PolPair::new(ones(8), ones(8));
        let s = objective_max_sum(&cfg, &g, &[(target, 2.5)]).unwrap();
        assert!((s - 2.5 * 2.0 * 64.0).abs() < 1e-9);
        assert!(objective_max_sum(&cfg, &g, &[]).is_err());
        let grid: Vec<(Direction, f64)> =
            AngleGrid::square(100).directions().unwrap().into_iter().map(|d| (d, 1.0)).collect();
        assert_eq!(grid.len(), 10_000);
        let (s1, s2) = planar_seeds_len8();
        let (u, v) = construct_array_pair_vertical(&s1.a, &s1.b, &s2.a, &s2.b).unwrap();
        let gb = RisGeometry::upa(16, 16, 0.25, 0.25, 1.0).unwrap();
        let flat = PolPair::from_matrices(&u, &v);
        let mn = objective_max_min_grid(&flat, &gb, &grid).unwrap();
        let sm = objective_max_sum(&flat, &gb, &grid).unwrap();
        assert!((mn - sm / 10_000.0).abs() < 1e-9 * mn);
        let mut obj = DirectionalObjective::new(&ch, &g, &grid[..50], Aggregate::Min).unwrap();
        obj.reset(&cfg.h.iter().chain(&cfg.v).map(|z| z.arg()).collect::<Vec<_>>());
        let oracle = objective_max_min_grid(&cfg, &g, &grid[..50]).unwrap();
        assert!((obj.value() - oracle).abs() < 1e-9 * oracle.abs().max(1.0));
    }

    #[test]
    fn directional_trials_match_recomputation() {
        let g = RisGeometry::upa(4, 6, 0.25, 0.25, 1.0).unwrap();
        let ch = random_pair(12, 11);
        let targets: Vec<(Direction, f64)> = AngleGrid::square(9)
            .directions()
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, d)| (d, 0.5 + (i % 7) as f64))
            .collect();
        for agg in [Aggregate::Sum, Aggregate::Min] {
            let mut obj = DirectionalObjective::new(&ch, &g, &targets, agg).unwrap();
            let mut r = stream_rng(12, 0);
            for step in 0..300 {
                let k = r.random_range(0..obj.len());
                let ph = r.random_range(0.0..TAU);
                let t = obj.trial(k, ph, f64::NEG_INFINITY).unwrap();
                obj.commit(k, ph);
                assert!((obj.value() - t).abs() <= 1e-9 * t.abs());
                if step % 50 == 0 {
                    let ok = obj.trial(k, ph + 0.3, obj.value());
                    let mut fresh = obj.clone();
                    fresh.commit(k, ph + 0.3);
                    fresh.resync();
                    assert_eq!(ok.is_some(), fresh.value() >= obj.value() - 1e-9 * obj.value().abs());
                }
            }
            let before = obj.value();
            obj.resync();
            assert!((obj.value() - before).abs() <= 1e-9 * before.abs(), "{agg:?}");
        }
    }

    #[test]
    fn directional_benchmark_improves() {
        let g = RisGeometry::upa(4, 4, 0.25, 0.25, 1.0).unwrap();
        let ch = random_pair(8, 10);
        let grid: Vec<(Direction, f64)> =
            AngleGrid::square(10).directions().unwrap().into_iter().map(|d| (d, 1.0)).collect();
        let s = OptimizerSettings { l1_max: 20, ..OptimizerSettings::with_seed(4) };
        let r = optimize_directional(&ch, &g, &grid, Aggregate::Min, &s).unwrap();
        assert!(r.utility >= r.trace[0].utility);
        let eff = ch.hadamard(&r.config).unwrap();
        let check = objective_max_min_grid(&eff, &g, &grid).unwrap();
        assert!((check - r.utility).abs() < 1e-9 * check);
    }
}
