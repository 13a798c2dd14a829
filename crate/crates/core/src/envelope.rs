//! Envelope detection and Gaussian fitting for scattered membership clouds.
//!
//! The envelope detector walks a scatter set left to right and classifies
//! each point by the slope from its predecessor: rising points feed the
//! upper envelope, falling points the lower one, and the first point seeds
//! both. Re-applying the detector to its own output a configurable number
//! of times thins each envelope toward the extreme points. Gaussians fitted
//! to the two envelopes bound the cloud from above and below and become the
//! upper and lower membership functions of an interval-valued fuzzy set.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Floor applied to ordinates before the logarithmic fitting stage.
const LOG_FLOOR: f64 = 1e-6;
/// Grid resolution used when checking or enforcing envelope dominance.
const DOMINANCE_GRID: usize = 1000;

/// A scatter of `(x, y)` samples sorted by abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSet {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl ScatterSet {
    /// Builds a scatter set: validates finiteness, sorts by `x`, and merges
    /// duplicate abscissas by averaging their ordinates.
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidInput(format!(
                "scatter set needs equal coordinate counts, got {} and {}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.is_empty() {
            return Err(Error::InvalidInput("scatter set must not be empty".into()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("scatter coordinates must be finite".into()));
        }
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let mut out_x: Vec<f64> = Vec::with_capacity(xs.len());
        let mut out_y: Vec<f64> = Vec::with_capacity(ys.len());
        let mut i = 0;
        while i < idx.len() {
            let x = xs[idx[i]];
            let mut sum = 0.0;
            let mut count = 0usize;
            while i < idx.len() && xs[idx[i]] == x {
                sum += ys[idx[i]];
                count += 1;
                i += 1;
            }
            out_x.push(x);
            out_y.push(sum / count as f64);
        }
        Ok(Self { xs: out_x, ys: out_y })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Upper and lower envelope point sets produced by the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePair {
    pub upper: ScatterSet,
    pub lower: ScatterSet,
}

/// One pass of the envelope detector.
///
/// The first point seeds both envelopes. Every later point joins the upper
/// set when the slope from its predecessor is positive, the lower set when
/// negative, and both sets when exactly zero.
pub fn eda_once(s: &ScatterSet) -> Result<EnvelopePair> {
    if s.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "envelope detection needs at least 2 points, got {}",
            s.len()
        )));
    }
    for w in s.xs.windows(2) {
        if w[1] < w[0] {
            return Err(Error::InvalidInput(
                "scatter abscissas must be sorted; build with ScatterSet::new".into(),
            ));
        }
    }
    let mut upper = ScatterSet { xs: vec![s.xs[0]], ys: vec![s.ys[0]] };
    let mut lower = upper.clone();
    for i in 0..s.len() - 1 {
        let dx = s.xs[i + 1] - s.xs[i];
        if dx == 0.0 {
            return Err(Error::DuplicateAbscissa { x: s.xs[i] });
        }
        let slope = (s.ys[i + 1] - s.ys[i]) / dx;
        if slope >= 0.0 {
            upper.xs.push(s.xs[i + 1]);
            upper.ys.push(s.ys[i + 1]);
        }
        if slope <= 0.0 {
            lower.xs.push(s.xs[i + 1]);
            lower.ys.push(s.ys[i + 1]);
        }
    }
    Ok(EnvelopePair { upper, lower })
}

/// Iterated envelope detection.
///
/// The first pass runs on the full set; the upper output is then re-fed to
/// the detector `i_max - 1` further times (keeping its upper output), and
/// the lower output `j_max - 1` times (keeping its lower output). A stage
/// that shrinks below 2 points stops early and keeps the last valid set.
pub fn eda_iterated(s: &ScatterSet, i_max: usize, j_max: usize) -> Result<EnvelopePair> {
    if i_max == 0 || j_max == 0 {
        return Err(Error::InvalidInput("envelope pass counts must be at least 1".into()));
    }
    let first = eda_once(s)?;
    let mut upper = first.upper;
    let mut lower = first.lower;
    for _ in 1..i_max {
        if upper.len() < 2 {
            break;
        }
        upper = eda_once(&upper)?.upper;
    }
    for _ in 1..j_max {
        if lower.len() < 2 {
            break;
        }
        lower = eda_once(&lower)?.lower;
    }
    Ok(EnvelopePair { upper, lower })
}

/// A scaled Gaussian `h * exp(-(x - c)^2 / (2 sigma^2))` used as a
/// membership function: height in `(0, 1]`, positive width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMf {
    pub height: f64,
    pub center: f64,
    pub sigma: f64,
}

impl GaussianMf {
    pub fn new(height: f64, center: f64, sigma: f64) -> Result<Self> {
        if !(height > 0.0 && height <= 1.0) || !height.is_finite() {
            return Err(Error::InvalidInput(format!("height must be in (0, 1], got {height}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        if !center.is_finite() {
            return Err(Error::InvalidInput("center must be finite".into()));
        }
        Ok(Self { height, center, sigma })
    }

    pub fn value(&self, x: f64) -> f64 {
        let d = (x - self.center) / self.sigma;
        self.height * (-0.5 * d * d).exp()
    }
}

/// A fitted Gaussian together with its root-mean-square residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub mf: GaussianMf,
    pub rmse: f64,
}

/// Widest width the fit may choose, as a multiple of the abscissa span.
const SIGMA_SPAN_MAX: f64 = 2.0;
/// Narrowest width the fit may choose, as a fraction of the abscissa span.
const SIGMA_SPAN_MIN: f64 = 1e-3;

/// Least-squares Gaussian fit, constrained to yield a usable membership
/// function.
///
/// Stage one estimates `(h, c, sigma)` from a weighted quadratic fit in the
/// log domain with ordinates floored at 1e-6; stage two refines with at
/// most 50 projected Gauss-Newton steps under step halving.
///
/// The parameters are kept inside a box: height in `(0, 1]`, center within
/// the abscissa range, and width between [`SIGMA_SPAN_MIN`] and
/// [`SIGMA_SPAN_MAX`] times the abscissa span. Without the box, diffuse or
/// nearly flat point sets are matched best by a thin slice of some enormous
/// far-away Gaussian — a fine curve fit, but meaningless as a membership
/// function and wildly misleading once evaluated outside the points it was
/// fit on. The box keeps the peak where data was actually observed and the
/// reach on the scale of the observed support.
pub fn fit_gaussian(s: &ScatterSet) -> Result<GaussianFit> {
    let n = s.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "gaussian fit needs at least 3 points, got {n}"
        )));
    }
    let y_min = s.ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = s.ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if y_max - y_min < 1e-12 * y_max.abs().max(1.0) {
        return Err(Error::DegenerateFit(
            "all ordinates are equal, the width is unidentifiable; widen the data".into(),
        ));
    }
    let (x_lo, x_hi) = (s.xs[0], *s.xs.last().unwrap());
    let span = x_hi - x_lo;
    if !(span > 0.0) {
        return Err(Error::DegenerateFit(
            "all abscissas coincide, the center is unidentifiable".into(),
        ));
    }
    let project = |h: f64, c: f64, sg: f64| -> (f64, f64, f64) {
        (
            h.clamp(LOG_FLOOR, 1.0),
            c.clamp(x_lo, x_hi),
            sg.clamp(SIGMA_SPAN_MIN * span, SIGMA_SPAN_MAX * span),
        )
    };

    let (h0, c0, s0) = log_domain_seed(s);
    let (mut h, mut c, mut sigma) = project(h0, c0, s0);
    let mut sse = gaussian_sse(s, h, c, sigma);

    // Projected Gauss-Newton refinement with step halving.
    for _ in 0..50 {
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for k in 0..n {
            let d = (s.xs[k] - c) / sigma;
            let e = (-0.5 * d * d).exp();
            let model = h * e;
            let grad = [e, h * e * d / sigma, h * e * d * d / sigma];
            let r = s.ys[k] - model;
            for a in 0..3 {
                for b in 0..3 {
                    jtj[a][b] += grad[a] * grad[b];
                }
                jtr[a] += grad[a] * r;
            }
        }
        let delta = match solve3(&jtj, &jtr) {
            Some(d) => d,
            None => break,
        };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let (h2, c2, s2) =
                project(h + scale * delta[0], c + scale * delta[1], sigma + scale * delta[2]);
            let sse2 = gaussian_sse(s, h2, c2, s2);
            if sse2 < sse {
                h = h2;
                c = c2;
                sigma = s2;
                sse = sse2;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved || sse < 1e-30 {
            break;
        }
    }

    if !(h > 0.0) || !sigma.is_finite() || !c.is_finite() {
        return Err(Error::DegenerateFit("gaussian refinement collapsed".into()));
    }
    let mf = GaussianMf::new(h, c, sigma)?;
    let rmse = (s.xs.iter().zip(&s.ys).map(|(&x, &y)| (y - mf.value(x)).powi(2)).sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(GaussianFit { mf, rmse })
}

/// Initial `(h, c, sigma)` from a `y^2`-weighted quadratic fit of `ln y`.
fn log_domain_seed(s: &ScatterSet) -> (f64, f64, f64) {
    let mut jtj = [[0.0f64; 3]; 3];
    let mut jtr = [0.0f64; 3];
    for (&x, &y) in s.xs.iter().zip(&s.ys) {
        let yc = y.max(LOG_FLOOR);
        let w = yc * yc;
        let basis = [1.0, x, x * x];
        let target = yc.ln();
        for a in 0..3 {
            for b in 0..3 {
                jtj[a][b] += w * basis[a] * basis[b];
            }
            jtr[a] += w * basis[a] * target;
        }
    }
    if let Some(coef) = solve3(&jtj, &jtr) {
        let (a0, a1, a2) = (coef[0], coef[1], coef[2]);
        if a2 < 0.0 {
            let sigma2 = -1.0 / (2.0 * a2);
            let center = -a1 / (2.0 * a2);
            let h = (a0 - a2 * center * center).exp();
            if sigma2 > 0.0 && h.is_finite() && h > 0.0 && center.is_finite() {
                return (h, center, sigma2.sqrt());
            }
        }
    }
    moment_seed(s)
}

/// Fallback seed from ordinate-weighted moments.
fn moment_seed(s: &ScatterSet) -> (f64, f64, f64) {
    let wsum: f64 = s.ys.iter().map(|y| y.max(LOG_FLOOR)).sum();
    let center = s.xs.iter().zip(&s.ys).map(|(&x, &y)| x * y.max(LOG_FLOOR)).sum::<f64>() / wsum;
    let var = s
        .xs
        .iter()
        .zip(&s.ys)
        .map(|(&x, &y)| (x - center).powi(2) * y.max(LOG_FLOOR))
        .sum::<f64>()
        / wsum;
    let span = s.xs.last().unwrap() - s.xs.first().unwrap();
    let sigma = if var > 0.0 { var.sqrt() } else { (span / 4.0).max(1e-6) };
    let h = s.ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(LOG_FLOOR);
    (h, center, sigma)
}

fn gaussian_sse(s: &ScatterSet, h: f64, c: f64, sigma: f64) -> f64 {
    s.xs.iter()
        .zip(&s.ys)
        .map(|(&x, &y)| {
            let d = (x - c) / sigma;
            let r = y - h * (-0.5 * d * d).exp();
            r * r
        })
        .sum()
}

/// Solves a symmetric positive-definite 3x3 system by Gaussian elimination
/// with partial pivoting; `None` when singular.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for r in 0..3 {
        m[r][..3].copy_from_slice(&a[r]);
        m[r][3] = b[r];
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for k in col..4 {
                m[r][k] -= f * m[col][k];
            }
        }
    }
    let mut x = [0.0f64; 3];
    for r in (0..3).rev() {
        let mut acc = m[r][3];
        for k in r + 1..3 {
            acc -= m[r][k] * x[k];
        }
        x[r] = acc / m[r][r];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// An interval-valued Gaussian membership function: a lower and an upper
/// Gaussian with the lower dominated by the upper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalGaussianMf {
    pub lower: GaussianMf,
    pub upper: GaussianMf,
}

impl IntervalGaussianMf {
    /// A degenerate interval whose bands coincide (a type-1 set).
    pub fn degenerate(mf: GaussianMf) -> Self {
        Self { lower: mf, upper: mf }
    }

    pub fn value_lower(&self, x: f64) -> f64 {
        self.lower.value(x)
    }

    pub fn value_upper(&self, x: f64) -> f64 {
        self.upper.value(x)
    }

    /// Checks `lower(x) <= upper(x) + tol` on a grid over `[x0, x1]`.
    pub fn dominates_on(&self, x0: f64, x1: f64, tol: f64) -> bool {
        grid(x0, x1, DOMINANCE_GRID)
            .all(|x| self.value_lower(x) <= self.value_upper(x) + tol)
    }
}

/// The lower band used when no meaningful lower Gaussian can be fit: a
/// half-height, half-width core nested inside the upper band, which
/// dominates it analytically.
fn nested_core(upper: GaussianMf) -> GaussianMf {
    GaussianMf {
        height: 0.5 * upper.height,
        center: upper.center,
        sigma: 0.5 * upper.sigma,
    }
}

/// Heights below this are treated as a collapsed band.
const HEIGHT_FLOOR: f64 = 1e-6;

/// Shrinks `lower` until `lower(x) <= upper(x)` holds for every real `x`,
/// not just on the sampled cloud.
///
/// Dominance everywhere needs `sigma_l <= sigma_u` (a wider lower band
/// always re-crosses in the tails), with strict inequality when the
/// centers differ. Under that clamp the ratio `lower/upper` is
/// log-concave, so its maximum has a closed form and a single height
/// shrink makes the bound exact.
fn enforce_dominance(mut lower: GaussianMf, upper: &GaussianMf) -> GaussianMf {
    if lower.center == upper.center {
        lower.sigma = lower.sigma.min(upper.sigma);
        lower.height = lower.height.min(upper.height);
        return lower;
    }
    lower.sigma = lower.sigma.min(0.999 * upper.sigma);
    let (sl2, su2) = (lower.sigma * lower.sigma, upper.sigma * upper.sigma);
    let x_star = (upper.center * sl2 - lower.center * su2) / (sl2 - su2);
    // Log-space ratio: at large center offsets both values underflow.
    let dl = x_star - lower.center;
    let du = x_star - upper.center;
    let log_ratio =
        (lower.height / upper.height).ln() - dl * dl / (2.0 * sl2) + du * du / (2.0 * su2);
    if log_ratio > 0.0 {
        lower.height *= (-log_ratio).exp();
    }
    lower
}

/// Builds an interval membership function from a membership cloud.
///
/// Runs the iterated envelope detector and fits a Gaussian to each
/// envelope. The taller fit becomes the upper band; the other is then
/// shrunk just enough that it never exceeds the upper anywhere on the real
/// line, which keeps the pair a valid interval membership function even
/// far outside the training data.
///
/// Envelopes are not always fittable: on a monotone membership curve the
/// detector assigns every point to one envelope, and lower envelopes that
/// hug zero carry no shape. When only one envelope yields a fit it becomes
/// the upper band; when the repaired lower height collapses below 1e-6 the
/// band is equally meaningless. In both cases the lower band falls back to
/// a nested half-height, half-width copy of the upper Gaussian. If neither
/// envelope is fittable the whole cloud is fitted instead, and only its
/// failure is an error.
pub fn build_interval_mf(cloud: &ScatterSet, i_max: usize, j_max: usize) -> Result<IntervalGaussianMf> {
    let envelopes = eda_iterated(cloud, i_max, j_max)?;
    let try_fit = |s: &ScatterSet| match fit_gaussian(s) {
        Ok(fit) => Ok(Some(fit.mf)),
        Err(Error::DegenerateFit(_)) | Err(Error::InvalidInput(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let (upper, lower) = match (try_fit(&envelopes.upper)?, try_fit(&envelopes.lower)?) {
        (Some(mut upper), Some(mut lower)) => {
            if lower.height > upper.height {
                std::mem::swap(&mut lower, &mut upper);
            }
            let lower = enforce_dominance(lower, &upper);
            if lower.height < HEIGHT_FLOOR {
                (upper, nested_core(upper))
            } else {
                (upper, lower)
            }
        }
        (Some(only), None) | (None, Some(only)) => (only, nested_core(only)),
        (None, None) => {
            let whole = fit_gaussian(cloud)?.mf;
            (whole, nested_core(whole))
        }
    };
    Ok(IntervalGaussianMf { lower, upper })
}

/// Counts sign changes of `upper(x) - lower(x)` on an `n`-point grid.
pub fn crossing_count(lower: &GaussianMf, upper: &GaussianMf, x0: f64, x1: f64, n: usize) -> usize {
    let values: Vec<f64> = grid(x0, x1, n).map(|x| upper.value(x) - lower.value(x)).collect();
    values
        .windows(2)
        .filter(|w| w[0] != 0.0 && w[1] != 0.0 && w[0].signum() != w[1].signum())
        .count()
}

fn grid(x0: f64, x1: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (x1 - x0) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| x0 + step * i as f64)
}
