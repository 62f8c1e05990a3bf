//! Aperiodic autocorrelation and Golay complementary pairs.
//!
//! Sequences and arrays whose autocorrelations sum to a scaled delta have
//! power spectra that sum to a constant. This module computes the
//! autocorrelation tables by direct summation, verifies complementarity and
//! builds larger complementary array pairs from smaller ones.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Tolerance for the unimodular check on inputs to the pair checkers.
pub const UNIMODULAR_TOL: f64 = 1e-9;

/// Default verification tolerance per unit of energy.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// A non-empty, finite complex sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSequence(Vec<Complex64>);

impl ComplexSequence {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return invalid("sequence must contain at least one entry");
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("sequence entries must be finite");
        }
        Ok(Self(entries))
    }

    pub fn from_phases(phases: &[f64]) -> Result<Self> {
        Self::new(phases.iter().map(|&p| Complex64::cis(p)).collect())
    }

    pub fn from_reals(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_unimodular(&self, tol: f64) -> bool {
        self.0.iter().all(|z| (z.norm() - 1.0).abs() <= tol)
    }

    /// Phases in radians, each in (-pi, pi].
    pub fn phases(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.arg()).collect()
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.iter().map(|z| z.conj()).collect())
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self(self.0.iter().map(|z| z * factor).collect())
    }

    pub fn negated(&self) -> Self {
        self.scaled(Complex64::new(-1.0, 0.0))
    }

    /// Concatenation `[self, other]`.
    pub fn concat(&self, other: &Self) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Self(v)
    }
}

impl std::ops::Deref for ComplexSequence {
    type Target = [Complex64];
    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

/// A non-empty complex matrix stored row-major. The row index is the first
/// autocorrelation dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexArray2D {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexArray2D {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid("array dimensions must be positive");
        }
        if data.len() != rows * cols {
            return invalid(format!(
                "array data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            ));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("array entries must be finite");
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return invalid("ragged rows");
        }
        Self::new(n_rows, n_cols, rows.concat())
    }

    pub fn from_phase_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&p| Complex64::cis(p)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// Builds a `rows x (len/rows)` matrix whose first column holds the first
    /// `rows` entries of `v`, the second column the next `rows`, and so on.
    pub fn from_column_major(v: &[Complex64], rows: usize) -> Result<Self> {
        if rows == 0 || v.is_empty() || v.len() % rows != 0 {
            return invalid(format!(
                "length {} is not a positive multiple of {rows} rows",
                v.len()
            ));
        }
        let cols = v.len() / rows;
        let mut data = vec![ZERO; v.len()];
        for c in 0..cols {
            for r in 0..rows {
                data[r * cols + c] = v[c * rows + r];
            }
        }
        Self::new(rows, cols, data)
    }

    /// Inverse of [`ComplexArray2D::from_column_major`].
    pub fn to_column_major(&self) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                v.push(self.get(r, c));
            }
        }
        v
    }

    /// Outer product `u vᵀ` (no conjugation).
    pub fn outer(u: &[Complex64], v: &[Complex64]) -> Result<Self> {
        let data = u
            .iter()
            .flat_map(|a| v.iter().map(move |b| a * b))
            .collect();
        Self::new(u.len(), v.len(), data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row_vecs(&self) -> Vec<Vec<Complex64>> {
        self.data.chunks(self.cols).map(<[_]>::to_vec).collect()
    }

    pub fn phase_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.cols)
            .map(|r| r.iter().map(|z| z.arg()).collect())
            .collect()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_unimodular(&self, tol: f64) -> bool {
        self.data.iter().all(|z| (z.norm() - 1.0).abs() <= tol)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn negated(&self) -> Self {
        self.map(|z| -z)
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Self { rows: self.cols, cols: self.rows, data }
    }

    /// `E_L X E_J`: reverses both the row and column order.
    pub fn rotated_180(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().rev().copied().collect(),
        }
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut data = vec![ZERO; rows * cols];
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self.get(r1, c1);
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        let r = r1 * other.rows + r2;
                        let c = c1 * other.cols + c2;
                        data[r * cols + c] = a * other.get(r2, c2);
                    }
                }
            }
        }
        Self { rows, cols, data }
    }

    /// Stacks `top` over `bottom`.
    pub fn vstack(top: &Self, bottom: &Self) -> Result<Self> {
        if top.cols != bottom.cols {
            return invalid("vertical stacking needs equal column counts");
        }
        let mut data = top.data.clone();
        data.extend_from_slice(&bottom.data);
        Self::new(top.rows + bottom.rows, top.cols, data)
    }

    /// Places `left` and `right` side by side.
    pub fn hstack(left: &Self, right: &Self) -> Result<Self> {
        if left.rows != right.rows {
            return invalid("horizontal stacking needs equal row counts");
        }
        let cols = left.cols + right.cols;
        let mut data = Vec::with_capacity(left.rows * cols);
        for r in 0..left.rows {
            data.extend_from_slice(&left.data[r * left.cols..(r + 1) * left.cols]);
            data.extend_from_slice(&right.data[r * right.cols..(r + 1) * right.cols]);
        }
        Self::new(left.rows, cols, data)
    }
}

/// Aperiodic autocorrelation of a length-N sequence over lags `-N+1..=N-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AcfTable1D {
    n: usize,
    values: Vec<Complex64>,
}

impl AcfTable1D {
    pub fn seq_len(&self) -> usize {
        self.n
    }

    pub fn max_lag(&self) -> isize {
        self.n as isize - 1
    }

    /// Value at lag `xi`; zero outside the support.
    pub fn get(&self, xi: isize) -> Complex64 {
        let m = self.max_lag();
        if xi.abs() > m {
            ZERO
        } else {
            self.values[(xi + m) as usize]
        }
    }

    /// Values ordered from lag `-N+1` to `N-1`.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Largest magnitude over nonzero lags.
    pub fn max_sidepeak(&self) -> f64 {
        let m = self.max_lag();
        (-m..=m)
            .filter(|&xi| xi != 0)
            .map(|xi| self.get(xi).norm())
            .fold(0.0, f64::max)
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return invalid("autocorrelation tables have different supports");
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { n: self.n, values })
    }
}

/// Aperiodic autocorrelation of an `N1 x N2` array over
/// `[-N1+1, N1-1] x [-N2+1, N2-1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AcfTable2D {
    n1: usize,
    n2: usize,
    values: Vec<Complex64>,
}

impl AcfTable2D {
    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn max_lags(&self) -> (isize, isize) {
        (self.n1 as isize - 1, self.n2 as isize - 1)
    }

    /// Value at lag `(xi1, xi2)`; zero outside the support.
    pub fn get(&self, xi1: isize, xi2: isize) -> Complex64 {
        let (m1, m2) = self.max_lags();
        if xi1.abs() > m1 || xi2.abs() > m2 {
            return ZERO;
        }
        let width = 2 * self.n2 - 1;
        self.values[(xi1 + m1) as usize * width + (xi2 + m2) as usize]
    }

    pub fn lags(&self) -> impl Iterator<Item = (isize, isize)> {
        let (m1, m2) = self.max_lags();
        (-m1..=m1).flat_map(move |a| (-m2..=m2).map(move |b| (a, b)))
    }

    pub fn max_sidepeak(&self) -> f64 {
        self.lags()
            .filter(|&l| l != (0, 0))
            .map(|(a, b)| self.get(a, b).norm())
            .fold(0.0, f64::max)
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return invalid("autocorrelation tables have different supports");
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { n1: self.n1, n2: self.n2, values })
    }
}

/// Direct-summation aperiodic autocorrelation,
/// `R[xi] = sum_n u[n] conj(u[n + xi])`, with no circular wraparound.
pub fn acf_1d(u: &[Complex64]) -> Result<AcfTable1D> {
    let n = u.len();
    if n == 0 {
        return invalid("autocorrelation of an empty sequence");
    }
    let m = n as isize - 1;
    let mut values = Vec::with_capacity(2 * n - 1);
    for xi in -m..=m {
        let mut acc = ZERO;
        if xi >= 0 {
            let s = xi as usize;
            for k in 0..n - s {
                acc += u[k] * u[k + s].conj();
            }
        } else {
            let s = (-xi) as usize;
            for k in 0..n - s {
                acc += u[k + s] * u[k].conj();
            }
        }
        values.push(acc);
    }
    Ok(AcfTable1D { n, values })
}

/// Direct-summation 2D aperiodic autocorrelation,
/// `R[a, b] = sum U[n1, n2] conj(U[n1 + a, n2 + b])` over the overlap.
pub fn acf_2d(u: &ComplexArray2D) -> AcfTable2D {
    let (n1, n2) = u.shape();
    let (m1, m2) = (n1 as isize - 1, n2 as isize - 1);
    let mut values = Vec::with_capacity((2 * n1 - 1) * (2 * n2 - 1));
    for a in -m1..=m1 {
        for b in -m2..=m2 {
            let mut acc = ZERO;
            let r_lo = (-a).max(0) as usize;
            let r_hi = (n1 as isize - a.max(0)) as usize;
            let c_lo = (-b).max(0) as usize;
            let c_hi = (n2 as isize - b.max(0)) as usize;
            for r in r_lo..r_hi {
                for c in c_lo..c_hi {
                    let r2 = (r as isize + a) as usize;
                    let c2 = (c as isize + b) as usize;
                    acc += u.get(r, c) * u.get(r2, c2).conj();
                }
            }
            values.push(acc);
        }
    }
    AcfTable2D { n1, n2, values }
}

/// Outcome of a complementarity check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GolayCheck {
    pub is_pair: bool,
    /// Largest `|R_a + R_b|` over nonzero lags.
    pub max_sidepeak: f64,
    /// `|R_a[0] + R_b[0] - 2N|`.
    pub zero_lag_error: f64,
}

pub fn is_golay_pair_1d(u: &[Complex64], v: &[Complex64], tol: f64) -> Result<GolayCheck> {
    if u.len() != v.len() {
        return invalid(format!("pair lengths differ: {} vs {}", u.len(), v.len()));
    }
    check_unimodular(u)?;
    check_unimodular(v)?;
    let sum = acf_1d(u)?.sum(&acf_1d(v)?)?;
    let max_sidepeak = sum.max_sidepeak();
    let zero_lag_error = (sum.get(0) - Complex64::new(2.0 * u.len() as f64, 0.0)).norm();
    Ok(GolayCheck {
        is_pair: max_sidepeak <= tol && zero_lag_error <= tol,
        max_sidepeak,
        zero_lag_error,
    })
}

pub fn is_golay_pair_2d(u: &ComplexArray2D, v: &ComplexArray2D, tol: f64) -> Result<GolayCheck> {
    if u.shape() != v.shape() {
        return invalid(format!("pair shapes differ: {:?} vs {:?}", u.shape(), v.shape()));
    }
    check_unimodular(u.data())?;
    check_unimodular(v.data())?;
    let sum = acf_2d(u).sum(&acf_2d(v))?;
    let max_sidepeak = sum.max_sidepeak();
    let zero_lag_error = (sum.get(0, 0) - Complex64::new(2.0 * u.len() as f64, 0.0)).norm();
    Ok(GolayCheck {
        is_pair: max_sidepeak <= tol && zero_lag_error <= tol,
        max_sidepeak,
        zero_lag_error,
    })
}

fn check_unimodular(x: &[Complex64]) -> Result<()> {
    match x.iter().position(|z| (z.norm() - 1.0).abs() > UNIMODULAR_TOL) {
        Some(i) => invalid(format!("entry {i} is not unimodular (|z| = {})", x[i].norm())),
        None => Ok(()),
    }
}

/// A Golay sequence pair from the seed catalog.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedPair {
    pub a: ComplexSequence,
    pub b: ComplexSequence,
    pub source: String,
}

impl SeedPair {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn to_record(&self) -> SeedRecord {
        SeedRecord {
            length: self.len(),
            a_phases_rad: self.a.phases(),
            b_phases_rad: self.b.phases(),
            source: self.source.clone(),
        }
    }

    pub fn from_record(rec: &SeedRecord) -> Result<Self> {
        let a = ComplexSequence::from_phases(&rec.a_phases_rad)?;
        let b = ComplexSequence::from_phases(&rec.b_phases_rad)?;
        if a.len() != rec.length || b.len() != rec.length {
            return invalid(format!(
                "declared length {} does not match phase lists ({}, {})",
                rec.length,
                a.len(),
                b.len()
            ));
        }
        Ok(Self { a, b, source: rec.source.clone() })
    }
}

/// On-disk form of a seed pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRecord {
    pub length: usize,
    pub a_phases_rad: Vec<f64>,
    pub b_phases_rad: Vec<f64>,
    pub source: String,
}

/// Known Golay pairs: the trivial pairs of length 1 and 2, the binary
/// doubling family `(x, y) -> ([x y], [x -y])` up to length 16, and two
/// quaternary/binary length-8 pairs used for the 16x8 planar construction.
///
/// No completeness claim is made; many lengths admit no pair at all.
pub fn seed_pairs() -> Vec<SeedPair> {
    let mut out = Vec::new();
    let one = ComplexSequence::from_reals(&[1.0]).expect("static");
    out.push(SeedPair { a: one.clone(), b: one, source: "trivial length-1 pair".into() });

    let mut a = ComplexSequence::from_reals(&[1.0, 1.0]).expect("static");
    let mut b = ComplexSequence::from_reals(&[1.0, -1.0]).expect("static");
    out.push(SeedPair { a: a.clone(), b: b.clone(), source: "binary length-2 pair".into() });
    for _ in 0..3 {
        let next_a = a.concat(&b);
        let next_b = a.concat(&b.negated());
        a = next_a;
        b = next_b;
        out.push(SeedPair {
            source: format!("binary doubling, length {}", a.len()),
            a: a.clone(),
            b: b.clone(),
        });
    }

    let (h, q) = (PI, PI / 2.0);
    out.push(SeedPair {
        a: ComplexSequence::from_phases(&[0.0, 0.0, 0.0, 0.0, 0.0, h, h, 0.0]).expect("static"),
        b: ComplexSequence::from_phases(&[0.0, 0.0, h, h, 0.0, h, 0.0, h]).expect("static"),
        source: "binary length-8 pair (planar seed 1)".into(),
    });
    out.push(SeedPair {
        a: ComplexSequence::from_phases(&[0.0, 0.0, 0.0, 0.0, q, -q, -q, q]).expect("static"),
        b: ComplexSequence::from_phases(&[0.0, 0.0, h, h, q, -q, q, -q]).expect("static"),
        source: "quaternary length-8 pair (planar seed 2)".into(),
    });

    for p in &out {
        let tol = DEFAULT_REL_TOL * p.len() as f64;
        let check = is_golay_pair_1d(&p.a, &p.b, tol).expect("catalog pairs are well formed");
        assert!(check.is_pair, "catalog entry '{}' is not complementary", p.source);
    }
    out
}

/// The two length-8 seeds behind the 16x8 planar configuration.
pub fn planar_seeds_len8() -> (SeedPair, SeedPair) {
    let catalog = seed_pairs();
    let pick = |tag: &str| {
        catalog
            .iter()
            .find(|p| p.source.contains(tag))
            .cloned()
            .expect("static catalog")
    };
    (pick("planar seed 1"), pick("planar seed 2"))
}

/// First catalog pair of the requested length, preferring the planar seeds
/// for length 8.
pub fn seed_of_length(len: usize) -> Option<SeedPair> {
    let catalog = seed_pairs();
    catalog
        .iter()
        .find(|p| p.len() == len && p.source.contains("planar seed 1"))
        .or_else(|| catalog.iter().find(|p| p.len() == len))
        .cloned()
}

fn verify_seed(a: &[Complex64], b: &[Complex64], what: &str) -> Result<()> {
    let check = is_golay_pair_1d(a, b, DEFAULT_REL_TOL * a.len() as f64)?;
    if !check.is_pair {
        return invalid(format!(
            "{what} is not a Golay pair (max sidepeak {:.3e})",
            check.max_sidepeak
        ));
    }
    Ok(())
}

fn verify_array_pair(a: &ComplexArray2D, b: &ComplexArray2D, what: &str) -> Result<()> {
    let check = is_golay_pair_2d(a, b, DEFAULT_REL_TOL * a.len() as f64)?;
    if !check.is_pair {
        return invalid(format!(
            "{what} is not a Golay array pair (max sidepeak {:.3e})",
            check.max_sidepeak
        ));
    }
    Ok(())
}

/// `ũ₂ᴴ E_L` as a row: conjugate, then reverse.
fn conj_reversed(x: &[Complex64]) -> Vec<Complex64> {
    x.iter().rev().map(|z| z.conj()).collect()
}

fn seed_blocks(
    u1: &[Complex64],
    v1: &[Complex64],
    u2: &[Complex64],
    v2: &[Complex64],
) -> Result<[ComplexArray2D; 4]> {
    verify_seed(u1, v1, "first seed")?;
    verify_seed(u2, v2, "second seed")?;
    let neg_v1: Vec<Complex64> = v1.iter().map(|z| -z).collect();
    Ok([
        ComplexArray2D::outer(u1, u2)?,
        ComplexArray2D::outer(&neg_v1, &conj_reversed(v2))?,
        ComplexArray2D::outer(u1, v2)?,
        ComplexArray2D::outer(v1, &conj_reversed(u2))?,
    ])
}

/// `U = [u1 u2ᵀ; -ũ1 ũ2ᴴ E]`, `Ũ = [u1 ũ2ᵀ; ũ1 u2ᴴ E]`, shape `2L1 x L2`.
pub fn construct_array_pair_vertical(
    u1: &[Complex64],
    v1: &[Complex64],
    u2: &[Complex64],
    v2: &[Complex64],
) -> Result<(ComplexArray2D, ComplexArray2D)> {
    let [top_a, bot_a, top_b, bot_b] = seed_blocks(u1, v1, u2, v2)?;
    Ok((ComplexArray2D::vstack(&top_a, &bot_a)?, ComplexArray2D::vstack(&top_b, &bot_b)?))
}

/// Side-by-side variant of [`construct_array_pair_vertical`], shape `L1 x 2L2`.
pub fn construct_array_pair_horizontal(
    u1: &[Complex64],
    v1: &[Complex64],
    u2: &[Complex64],
    v2: &[Complex64],
) -> Result<(ComplexArray2D, ComplexArray2D)> {
    let [left_a, right_a, left_b, right_b] = seed_blocks(u1, v1, u2, v2)?;
    Ok((
        ComplexArray2D::hstack(&left_a, &right_a)?,
        ComplexArray2D::hstack(&left_b, &right_b)?,
    ))
}

fn expansion_blocks(
    a1: &ComplexArray2D,
    b1: &ComplexArray2D,
    a2: &ComplexArray2D,
    b2: &ComplexArray2D,
) -> Result<[ComplexArray2D; 4]> {
    verify_array_pair(a1, b1, "first array pair")?;
    verify_array_pair(a2, b2, "second array pair")?;
    let flip_b2 = b2.conj().rotated_180();
    let flip_a2 = a2.conj().rotated_180();
    Ok([a1.kron(a2), b1.negated().kron(&flip_b2), a1.kron(b2), b1.kron(&flip_a2)])
}

/// `W = [U1⊗U2; -Ũ1⊗E Ũ2* E]`, `W̃ = [U1⊗Ũ2; Ũ1⊗E U2* E]`, shape
/// `2 L1 L2 x J1 J2`.
pub fn expand_array_pair_vertical(
    a1: &ComplexArray2D,
    b1: &ComplexArray2D,
    a2: &ComplexArray2D,
    b2: &ComplexArray2D,
) -> Result<(ComplexArray2D, ComplexArray2D)> {
    let [top_w, bot_w, top_v, bot_v] = expansion_blocks(a1, b1, a2, b2)?;
    Ok((ComplexArray2D::vstack(&top_w, &bot_w)?, ComplexArray2D::vstack(&top_v, &bot_v)?))
}

/// Side-by-side variant of [`expand_array_pair_vertical`], shape
/// `L1 L2 x 2 J1 J2`.
pub fn expand_array_pair_horizontal(
    a1: &ComplexArray2D,
    b1: &ComplexArray2D,
    a2: &ComplexArray2D,
    b2: &ComplexArray2D,
) -> Result<(ComplexArray2D, ComplexArray2D)> {
    let [left_w, right_w, left_v, right_v] = expansion_blocks(a1, b1, a2, b2)?;
    Ok((
        ComplexArray2D::hstack(&left_w, &right_w)?,
        ComplexArray2D::hstack(&left_v, &right_v)?,
    ))
}

/// Power spectrum `|sum_n u[n] e^{-j 2 pi psi n}|^2` at normalized frequency `psi`.
pub fn psd_1d(u: &[Complex64], psi: f64) -> f64 {
    u.iter()
        .enumerate()
        .map(|(n, z)| z * Complex64::cis(-TAU * psi * n as f64))
        .sum::<Complex64>()
        .norm_sqr()
}

/// 2D power spectrum at `(psi1, psi2)`; `psi1` runs along rows.
pub fn psd_2d(u: &ComplexArray2D, psi1: f64, psi2: f64) -> f64 {
    let mut acc = ZERO;
    for r in 0..u.rows() {
        for c in 0..u.cols() {
            acc += u.get(r, c) * Complex64::cis(-TAU * (psi1 * r as f64 + psi2 * c as f64));
        }
    }
    acc.norm_sqr()
}

/// Largest `|S_u(psi) + S_v(psi) - 2N|` over `psi = k / points`.
pub fn psd_sum_check(u: &[Complex64], v: &[Complex64], points: usize) -> Result<f64> {
    if u.len() != v.len() {
        return invalid("pair lengths differ");
    }
    if points == 0 {
        return invalid("frequency grid must be non-empty");
    }
    let target = 2.0 * u.len() as f64;
    Ok((0..points)
        .map(|k| {
            let psi = k as f64 / points as f64;
            (psd_1d(u, psi) + psd_1d(v, psi) - target).abs()
        })
        .fold(0.0, f64::max))
}

/// PSD evaluated from the autocorrelation, `sum_xi R[xi] e^{j 2 pi psi xi}`.
pub fn psd_from_acf(acf: &AcfTable1D, psi: f64) -> f64 {
    let m = acf.max_lag();
    (-m..=m)
        .map(|xi| acf.get(xi) * Complex64::cis(TAU * psi * xi as f64))
        .sum::<Complex64>()
        .re
}

/// Recovers the summed autocorrelation of `(u, v)` from samples of the summed
/// power spectrum on a `k1 x k2` uniform grid by inverse DFT. Needs
/// `k1 >= 2 N1 - 1` and `k2 >= 2 N2 - 1` to avoid lag aliasing.
pub fn sum_acf_from_psd_grid(
    u: &ComplexArray2D,
    v: &ComplexArray2D,
    k1: usize,
    k2: usize,
) -> Result<AcfTable2D> {
    if u.shape() != v.shape() {
        return invalid("pair shapes differ");
    }
    let (n1, n2) = u.shape();
    if k1 < 2 * n1 - 1 || k2 < 2 * n2 - 1 {
        return invalid("frequency grid too coarse to resolve every lag");
    }
    let mut samples = vec![0.0; k1 * k2];
    for i in 0..k1 {
        for j in 0..k2 {
            let (p1, p2) = (i as f64 / k1 as f64, j as f64 / k2 as f64);
            samples[i * k2 + j] = psd_2d(u, p1, p2) + psd_2d(v, p1, p2);
        }
    }
    let (m1, m2) = (n1 as isize - 1, n2 as isize - 1);
    let mut values = Vec::with_capacity((2 * n1 - 1) * (2 * n2 - 1));
    let scale = 1.0 / (k1 * k2) as f64;
    for a in -m1..=m1 {
        for b in -m2..=m2 {
            let mut acc = ZERO;
            for i in 0..k1 {
                for j in 0..k2 {
                    let arg = -TAU * (a as f64 * i as f64 / k1 as f64 + b as f64 * j as f64 / k2 as f64);
                    acc += samples[i * k2 + j] * Complex64::cis(arg);
                }
            }
            values.push(acc * scale);
        }
    }
    Ok(AcfTable2D { n1, n2, values })
}

/// On-disk form of an array pair; phases are listed row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayPairRecord {
    pub rows: usize,
    pub cols: usize,
    pub a_phases_rad: Vec<Vec<f64>>,
    pub b_phases_rad: Vec<Vec<f64>>,
    pub source: String,
}

impl ArrayPairRecord {
    pub fn from_pair(a: &ComplexArray2D, b: &ComplexArray2D, source: impl Into<String>) -> Self {
        Self {
            rows: a.rows(),
            cols: a.cols(),
            a_phases_rad: a.phase_rows(),
            b_phases_rad: b.phase_rows(),
            source: source.into(),
        }
    }

    pub fn to_pair(&self) -> Result<(ComplexArray2D, ComplexArray2D)> {
        let a = ComplexArray2D::from_phase_rows(&self.a_phases_rad)?;
        let b = ComplexArray2D::from_phase_rows(&self.b_phases_rad)?;
        if a.shape() != (self.rows, self.cols) || b.shape() != (self.rows, self.cols) {
            return invalid(format!(
                "declared shape {}x{} does not match the phase tables",
                self.rows, self.cols
            ));
        }
        Ok((a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn reals(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| c(x)).collect()
    }

    fn assert_close(a: Complex64, b: Complex64) {
        assert!((a - b).norm() < 1e-12, "{a} != {b}");
    }

    #[test]
    fn acf_all_ones_pair() {
        let r = acf_1d(&reals(&[1.0, 1.0])).unwrap();
        assert_eq!(r.values(), &reals(&[1.0, 2.0, 1.0])[..]);
    }

    #[test]
    fn acf_length_four() {
        let r = acf_1d(&reals(&[1.0, 1.0, 1.0, -1.0])).unwrap();
        let want = [-1.0, 0.0, 1.0, 4.0, 1.0, 0.0, -1.0];
        for (xi, w) in (-3..=3).zip(want) {
            assert_close(r.get(xi), c(w));
        }
        assert_close(r.get(4), c(0.0));
    }

    #[test]
    fn acf_length_eight() {
        let r = acf_1d(&reals(&[1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0])).unwrap();
        assert_close(r.get(1), c(3.0));
        assert_close(r.get(3), c(1.0));
        assert_close(r.get(5), c(-1.0));
        for xi in [2, 4, 6, -2, -4, -6] {
            assert_close(r.get(xi), c(0.0));
        }
    }

    #[test]
    fn acf_rejects_empty() {
        assert!(acf_1d(&[]).is_err());
        assert!(ComplexSequence::new(vec![]).is_err());
        assert!(ComplexArray2D::new(0, 3, vec![]).is_err());
    }

    #[test]
    fn acf_2d_examples() {
        let single = ComplexArray2D::from_rows(&[reals(&[1.0])]).unwrap();
        let r = acf_2d(&single);
        assert_close(r.get(0, 0), c(1.0));
        assert_close(r.get(1, 0), c(0.0));
        assert_close(r.get(0, -1), c(0.0));

        let ones = ComplexArray2D::from_rows(&[reals(&[1.0, 1.0]), reals(&[1.0, 1.0])]).unwrap();
        let r = acf_2d(&ones);
        for (a, b) in r.lags() {
            let want = ((2 - a.abs()) * (2 - b.abs())) as f64;
            assert_close(r.get(a, b), c(want));
        }

        let m = ComplexArray2D::from_rows(&[reals(&[1.0, 1.0]), reals(&[1.0, -1.0])]).unwrap();
        let r = acf_2d(&m);
        assert_close(r.get(0, 0), c(4.0));
        assert_close(r.get(1, 0), c(0.0));
        assert_close(r.get(0, 1), c(0.0));
        assert_close(r.get(1, 1), c(-1.0));
        assert_close(r.get(1, -1), c(1.0));
    }

    #[test]
    fn pair_checks_1d() {
        let one = reals(&[1.0]);
        assert!(is_golay_pair_1d(&one, &one, 1e-12).unwrap().is_pair);
        assert!(is_golay_pair_1d(&reals(&[1.0, 1.0]), &reals(&[1.0, -1.0]), 1e-12).unwrap().is_pair);
        let bad = is_golay_pair_1d(&reals(&[1.0, 1.0]), &reals(&[1.0, 1.0]), 1e-12).unwrap();
        assert!(!bad.is_pair);
        assert!((bad.max_sidepeak - 2.0).abs() < 1e-12);
        assert!(is_golay_pair_1d(&reals(&[1.0]), &reals(&[1.0, 1.0]), 1e-12).is_err());
    }

    #[test]
    fn pair_checks_2d() {
        let one = ComplexArray2D::from_rows(&[reals(&[1.0])]).unwrap();
        assert!(is_golay_pair_2d(&one, &one, 1e-12).unwrap().is_pair);
        let ones = ComplexArray2D::from_rows(&[reals(&[1.0, 1.0]), reals(&[1.0, 1.0])]).unwrap();
        assert!(!is_golay_pair_2d(&ones, &ones, 1e-12).unwrap().is_pair);
    }

    #[test]
    fn non_unimodular_inputs_are_rejected() {
        assert!(is_golay_pair_1d(&reals(&[2.0]), &reals(&[1.0]), 1e-12).is_err());
    }

    #[test]
    fn catalog_contains_required_pairs() {
        let cat = seed_pairs();
        for len in [1, 2, 4, 8, 16] {
            assert!(cat.iter().any(|p| p.len() == len), "missing length {len}");
        }
        let binary8 = cat.iter().find(|p| p.source == "binary doubling, length 8").unwrap();
        assert_eq!(binary8.a.as_slice(), &reals(&[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0])[..]);
        assert_eq!(binary8.b.as_slice(), &reals(&[1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0, -1.0])[..]);
        let (s1, s2) = planar_seeds_len8();
        assert!(is_golay_pair_1d(&s1.a, &s1.b, 1e-9).unwrap().is_pair);
        assert!(is_golay_pair_1d(&s2.a, &s2.b, 1e-9).unwrap().is_pair);
    }

    #[test]
    fn nine_entry_phase_list_truncated_at_the_end_is_not_complementary() {
        let truncated = ComplexSequence::from_phases(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, PI, PI]).unwrap();
        let (s1, _) = planar_seeds_len8();
        assert!(!is_golay_pair_1d(&truncated, &s1.b, 1e-9).unwrap().is_pair);
    }

    #[test]
    fn scalar_vertical_construction() {
        let one = reals(&[1.0]);
        let (u, v) = construct_array_pair_vertical(&one, &one, &one, &one).unwrap();
        assert_eq!(u.data(), &reals(&[1.0, -1.0])[..]);
        assert_eq!(v.data(), &reals(&[1.0, 1.0])[..]);
        let (u, v) = construct_array_pair_horizontal(&one, &one, &one, &one).unwrap();
        assert_eq!(u.shape(), (1, 2));
        assert_eq!(u.data(), &reals(&[1.0, -1.0])[..]);
        assert_eq!(v.data(), &reals(&[1.0, 1.0])[..]);
    }

    #[test]
    fn construction_rejects_unverified_seeds() {
        let a = reals(&[1.0, 1.0]);
        assert!(construct_array_pair_vertical(&a, &a, &a, &reals(&[1.0, -1.0])).is_err());
        let ones = ComplexArray2D::from_rows(&[reals(&[1.0, 1.0])]).unwrap();
        let one = ComplexArray2D::from_rows(&[reals(&[1.0])]).unwrap();
        assert!(expand_array_pair_vertical(&ones, &ones, &one, &one).is_err());
    }

    #[test]
    fn scalar_expansion() {
        let one = ComplexArray2D::from_rows(&[reals(&[1.0])]).unwrap();
        let (w, v) = expand_array_pair_vertical(&one, &one, &one, &one).unwrap();
        assert_eq!(w.shape(), (2, 1));
        assert_eq!(w.data(), &reals(&[1.0, -1.0])[..]);
        assert_eq!(v.data(), &reals(&[1.0, 1.0])[..]);
        let (w, _) = expand_array_pair_horizontal(&one, &one, &one, &one).unwrap();
        assert_eq!(w.shape(), (1, 2));
    }

    #[test]
    fn psd_examples() {
        assert!((psd_1d(&reals(&[1.0]), 0.37) - 1.0).abs() < 1e-12);
        let (u, v) = (reals(&[1.0, 1.0]), reals(&[1.0, -1.0]));
        assert!((psd_1d(&u, 0.0) - 4.0).abs() < 1e-12);
        assert!(psd_1d(&v, 0.0).abs() < 1e-12);
        assert!(psd_sum_check(&u, &v, 64).unwrap() < 1e-12);
    }

    #[test]
    fn column_major_reshape() {
        let v = reals(&[1.0, 2.0, 3.0, 4.0]);
        let m = ComplexArray2D::from_column_major(&v, 2).unwrap();
        assert_eq!(m.row_vecs(), vec![reals(&[1.0, 3.0]), reals(&[2.0, 4.0])]);
        assert_eq!(m.to_column_major(), v);
        assert!(ComplexArray2D::from_column_major(&v, 3).is_err());
    }

    #[test]
    fn seed_record_round_trip() {
        let (s1, _) = planar_seeds_len8();
        let json = serde_json::to_string(&s1.to_record()).unwrap();
        let back = SeedPair::from_record(&serde_json::from_str(&json).unwrap()).unwrap();
        for (x, y) in back.a.iter().zip(s1.a.iter()) {
            assert!((x - y).norm() < 1e-15);
        }
        let bad = r#"{"length": 3, "a_phases_rad": [0], "b_phases_rad": [0], "source": "x"}"#;
        assert!(SeedPair::from_record(&serde_json::from_str(bad).unwrap()).is_err());
    }

    #[test]
    fn spectrum_matches_acf_for_complex_sequences() {
        let (_, quad) = planar_seeds_len8();
        for u in [quad.a.as_slice(), quad.b.as_slice()] {
            let r = acf_1d(u).unwrap();
            for k in 0..64 {
                let psi = k as f64 / 64.0 + 0.003;
                assert!((psd_from_acf(&r, psi) - psd_1d(u, psi)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn acf_recovered_from_spectrum_grid() {
        let (s1, s2) = planar_seeds_len8();
        let u = ComplexArray2D::outer(&s1.a.as_slice()[..3], &s2.a.as_slice()[4..]).unwrap();
        let v = ComplexArray2D::outer(&s2.b.as_slice()[..3], &s1.b.as_slice()[..4]).unwrap();
        let direct = acf_2d(&u).sum(&acf_2d(&v)).unwrap();
        let back = sum_acf_from_psd_grid(&u, &v, 5, 8).unwrap();
        for (a, b) in direct.lags() {
            assert!((direct.get(a, b) - back.get(a, b)).norm() < 1e-10, "lag ({a}, {b})");
        }
        assert!(sum_acf_from_psd_grid(&u, &v, 4, 8).is_err());
    }
}
