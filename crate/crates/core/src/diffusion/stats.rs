//! Rank and linear correlation with significance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {xs} vs {ys} values")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("need at least 3 pairs, got {0}")]
    TooShort(usize),
    #[error("{side}[{index}] = {value} is not positive; log correlation needs positive values")]
    NonPositive { side: &'static str, index: usize, value: f64 },
    #[error("{side}[{index}] is not finite")]
    NonFinite { side: &'static str, index: usize },
    #[error("{0} is constant; correlation undefined")]
    Constant(&'static str),
}

fn check(xs: &[f64], ys: &[f64]) -> Result<(), StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch { xs: xs.len(), ys: ys.len() });
    }
    if xs.len() < 3 {
        return Err(StatsError::TooShort(xs.len()));
    }
    for (side, v) in [("xs", xs), ("ys", ys)] {
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            return Err(StatsError::NonFinite { side, index });
        }
    }
    Ok(())
}

/// 1-based ranks; ties share the average of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson_unchecked(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::Constant("xs"));
    }
    if syy == 0.0 {
        return Err(StatsError::Constant("ys"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check(xs, ys)?;
    pearson_unchecked(xs, ys)
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check(xs, ys)?;
    pearson_unchecked(&average_ranks(xs), &average_ranks(ys))
}

/// Pearson correlation of `(ln x, ln y)`.
pub fn pearson_log(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check(xs, ys)?;
    for (side, v) in [("xs", xs), ("ys", ys)] {
        if let Some(index) = v.iter().position(|&x| x <= 0.0) {
            return Err(StatsError::NonPositive { side, index, value: v[index] });
        }
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    pearson_unchecked(&lx, &ly)
}

/// Kendall's tau-b.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check(xs, ys)?;
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let dx = xs[i].total_cmp(&xs[j]) as i64;
            let dy = ys[i].total_cmp(&ys[j]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tie_x += 1,
                (_, 0) => tie_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + tie_x) * (concordant + discordant + tie_y)) as f64).sqrt();
    if denom == 0.0 {
        let xs_constant = xs.iter().all(|x| *x == xs[0]);
        return Err(StatsError::Constant(if xs_constant { "xs" } else { "ys" }));
    }
    Ok((concordant - discordant) as f64 / denom)
}

/// Largest sample for which [`spearman_p_value`] enumerates permutations.
pub const EXACT_PERMUTATION_MAX_N: usize = 10;

/// Two-sided p-value for Spearman's rho: the exact permutation distribution
/// for n ≤ 10, the t approximation with n−2 degrees of freedom above.
pub fn spearman_p_value(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    let rho = spearman(xs, ys)?;
    let n = xs.len();
    if n <= EXACT_PERMUTATION_MAX_N {
        return Ok(exact_permutation_p(&average_ranks(xs), &average_ranks(ys), rho));
    }
    if rho.abs() >= 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    Ok((2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0))
}

/// Fraction of the n! pairings whose |rho| reaches the observed |rho|.
/// Permutations are visited by Heap's algorithm; each swap updates the
/// cross-product sum in O(1).
fn exact_permutation_p(rx: &[f64], ry: &[f64], rho: f64) -> f64 {
    let n = rx.len();
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let sxx: f64 = rx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ry.iter().map(|y| (y - my) * (y - my)).sum();
    let scale = (sxx * syy).sqrt();
    let offset = n as f64 * mx * my;
    let target = rho.abs() - 1e-12;

    let mut p = ry.to_vec();
    let mut s: f64 = rx.iter().zip(&p).map(|(x, y)| x * y).sum();
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut visit = |s: f64| {
        total += 1;
        if ((s - offset) / scale).abs() >= target {
            hits += 1;
        }
    };
    visit(s);
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            s += (rx[j] - rx[i]) * (p[i] - p[j]);
            p.swap(i, j);
            visit(s);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMethod {
    Spearman,
    PearsonLog,
    Pearson,
    Kendall,
}

impl FromStr for CorrelationMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spearman" => Ok(CorrelationMethod::Spearman),
            "pearson-log" => Ok(CorrelationMethod::PearsonLog),
            "pearson" => Ok(CorrelationMethod::Pearson),
            "kendall" => Ok(CorrelationMethod::Kendall),
            other => Err(format!("unknown method {other:?} (spearman|pearson-log|pearson|kendall)")),
        }
    }
}

impl fmt::Display for CorrelationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrelationMethod::Spearman => "spearman",
            CorrelationMethod::PearsonLog => "pearson-log",
            CorrelationMethod::Pearson => "pearson",
            CorrelationMethod::Kendall => "kendall",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub method: CorrelationMethod,
    pub n: usize,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

pub fn correlate(method: CorrelationMethod, xs: &[f64], ys: &[f64]) -> Result<Correlation, StatsError> {
    let (value, p_value) = match method {
        CorrelationMethod::Spearman => (spearman(xs, ys)?, Some(spearman_p_value(xs, ys)?)),
        CorrelationMethod::PearsonLog => (pearson_log(xs, ys)?, None),
        CorrelationMethod::Pearson => (pearson(xs, ys)?, None),
        CorrelationMethod::Kendall => (kendall_tau(xs, ys)?, None),
    };
    Ok(Correlation { method, n: xs.len(), value, p_value })
}

fn value_of(method: CorrelationMethod, xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    match method {
        CorrelationMethod::Spearman => spearman(xs, ys),
        CorrelationMethod::PearsonLog => pearson_log(xs, ys),
        CorrelationMethod::Pearson => pearson(xs, ys),
        CorrelationMethod::Kendall => kendall_tau(xs, ys),
    }
}

/// Half a unit of the last printed digit: `12.3` → 0.05, `120` → 0.5.
pub fn rounding_half_unit(text: &str) -> f64 {
    let t = text.trim();
    let decimals = t.split_once('.').map_or(0, |(_, frac)| frac.chars().take_while(|c| c.is_ascii_digit()).count());
    0.5 * 10f64.powi(-(decimals as i32))
}

/// How far a correlation can move when its inputs are rounded values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub method: CorrelationMethod,
    pub value: f64,
    /// Extremes over inputs moved to either end of their rounding interval.
    pub rounding_min: f64,
    pub rounding_max: f64,
    /// Value with pair `i` left out.
    pub leave_one_out: Vec<f64>,
}

const MAX_EXACT_CORNERS: usize = 20;
const SAMPLED_CORNERS: usize = 4096;

/// Every corner of the rounding box is tried when there are at most 2^20;
/// otherwise a fixed-seed sample of corners.
pub fn sensitivity(
    method: CorrelationMethod,
    xs: &[f64],
    ys: &[f64],
    x_half: &[f64],
    y_half: &[f64],
) -> Result<Sensitivity, StatsError> {
    let value = value_of(method, xs, ys)?;
    check(x_half, y_half)?;
    if x_half.len() != xs.len() {
        return Err(StatsError::LengthMismatch { xs: xs.len(), ys: x_half.len() });
    }
    let n = xs.len();
    let dims = 2 * n;
    let (mut lo, mut hi) = (value, value);
    let mut bx = xs.to_vec();
    let mut by = ys.to_vec();
    let mut visit = |bits: &dyn Fn(usize) -> bool| {
        for i in 0..n {
            bx[i] = xs[i] + if bits(i) { x_half[i] } else { -x_half[i] };
            by[i] = ys[i] + if bits(n + i) { y_half[i] } else { -y_half[i] };
        }
        if let Ok(v) = value_of(method, &bx, &by) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    };
    if dims <= MAX_EXACT_CORNERS {
        for corner in 0u64..(1 << dims) {
            visit(&|i| corner >> i & 1 == 1);
        }
    } else {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..SAMPLED_CORNERS {
            let corner: Vec<bool> = (0..dims).map(|_| rng.gen()).collect();
            visit(&|i| corner[i]);
        }
    }
    let mut leave_one_out = Vec::new();
    if n > 3 {
        for skip in 0..n {
            let lx: Vec<f64> = xs.iter().enumerate().filter(|&(i, _)| i != skip).map(|e| *e.1).collect();
            let ly: Vec<f64> = ys.iter().enumerate().filter(|&(i, _)| i != skip).map(|e| *e.1).collect();
            leave_one_out.push(value_of(method, &lx, &ly).unwrap_or(f64::NAN));
        }
    }
    Ok(Sensitivity { method, value, rounding_min: lo, rounding_max: hi, leave_one_out })
}
