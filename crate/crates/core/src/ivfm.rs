//! Interval-valued Takagi-Sugeno fuzzy models.
//!
//! A model is a set of rules, each carrying one interval Gaussian
//! membership function per input axis. Rule firing uses the product t-norm
//! across axes, evaluated separately for the lower and upper membership
//! bands; each band's firing vector is normalized over the rules.
//!
//! Consequents are affine (`y = coeffs . x + offset`) and their layout
//! depends on the model kind:
//! - a type-1 model carries one consequent per rule, weighted by the
//!   (band-averaged) normalized firing — with coincident bands this is the
//!   classical Takagi-Sugeno inference;
//! - an interval model carries a separate consequent per firing band
//!   (lower and upper), and the output is the average of the two band
//!   outputs. The parameter vector is the stacked pair of band consequent
//!   sets, so an interval model spans twice the function space of a type-1
//!   model built on the same rules.
//!
//! Antecedents come from Gustafson-Kessel clustering followed by envelope
//! fitting of the per-axis membership projections; consequents come from a
//! global least-squares fit over all rules (and bands) at once.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clustering::{gk_cluster, DataSet, FuzzyPartition, GkConfig};
use crate::envelope::{build_interval_mf, GaussianMf, IntervalGaussianMf, ScatterSet};
use crate::{Error, Result};

/// Firing strengths below this total are treated as "no rule fires".
const FIRING_FLOOR: f64 = 1e-300;

/// Whether a model's membership bands were identified as an interval or
/// collapsed to a single type-1 Gaussian per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Type1,
    Interval,
}

impl ModelKind {
    /// Number of consequent sets a rule of this kind carries: one shared
    /// set for type-1, one per firing band (lower, upper) for interval.
    pub fn bands(self) -> usize {
        match self {
            ModelKind::Type1 => 1,
            ModelKind::Interval => 2,
        }
    }
}

/// An affine rule consequent `y = coeffs . x + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineConsequent {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl AffineConsequent {
    pub fn zero(dim: usize) -> Self {
        Self { coeffs: vec![0.0; dim], offset: 0.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.offset
    }
}

/// One fuzzy rule: an interval membership function per input axis plus its
/// consequents, one per firing band (`[shared]` for type-1 models,
/// `[lower, upper]` for interval models).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsRule {
    pub antecedent: Vec<IntervalGaussianMf>,
    pub consequents: Vec<AffineConsequent>,
}

/// Identification metadata carried by a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ModelKind,
    pub clusters: usize,
    pub seed: u64,
    pub training_rmse: Option<f64>,
    /// Set when the consequent design matrix was rank deficient and the
    /// minimum-norm solution was taken.
    pub rank_deficient: bool,
}

/// A Takagi-Sugeno model over `input_dim` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsModel {
    pub input_dim: usize,
    pub rules: Vec<TsRule>,
    pub meta: ModelMeta,
}

/// Normalized firing strengths of the lower and upper bands; each vector
/// sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FiringVector {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FiringVector {
    /// Endpoint-average type reduction: `(lower + upper) / 2` per rule.
    pub fn averaged(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }
}

/// Identification settings for [`build_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    /// Number of rules (clusters).
    pub clusters: usize,
    /// Clustering fuzziness exponent.
    pub fuzziness: f64,
    /// Clustering convergence threshold.
    pub tol: f64,
    /// Clustering iteration cap.
    pub max_iter: usize,
    /// Seed for the clustering initialization.
    pub seed: u64,
    /// Envelope passes kept for the upper set.
    pub upper_passes: usize,
    /// Envelope passes kept for the lower set.
    pub lower_passes: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            clusters: 3,
            fuzziness: 2.0,
            tol: 1e-6,
            max_iter: 300,
            seed: 0,
            upper_passes: 2,
            lower_passes: 2,
        }
    }
}

impl TsModel {
    /// Number of consequent sets per rule (see [`ModelKind::bands`]).
    pub fn bands(&self) -> usize {
        self.meta.kind.bands()
    }

    /// Number of consequent parameters:
    /// `bands * rules * (input_dim + 1)`.
    pub fn consequent_len(&self) -> usize {
        self.bands() * self.rules.len() * (self.input_dim + 1)
    }

    /// Consequents flattened band-major, rule-major within a band:
    /// `[a_1^b, o_1^b, a_2^b, o_2^b, ...]` for each band `b` in turn.
    pub fn flatten_consequents(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.consequent_len());
        for band in 0..self.bands() {
            for rule in &self.rules {
                out.extend_from_slice(&rule.consequents[band].coeffs);
                out.push(rule.consequents[band].offset);
            }
        }
        out
    }

    /// One consequent set per rule in the layout of [`regressor_basis`]:
    /// `[a_1, o_1, a_2, o_2, ...]`, averaging across bands. Fitted models
    /// carry identical consequents in every band, so for them this is the
    /// exact parameter vector whose dot product with the regressor basis
    /// equals [`infer`]; it seeds the adaptive controllers.
    pub fn controller_consequents(&self) -> Vec<f64> {
        let stride = self.input_dim + 1;
        let scale = 1.0 / self.bands() as f64;
        let mut out = vec![0.0; self.rules.len() * stride];
        for (i, rule) in self.rules.iter().enumerate() {
            for cons in &rule.consequents {
                for (j, c) in cons.coeffs.iter().enumerate() {
                    out[i * stride + j] += scale * c;
                }
                out[i * stride + self.input_dim] += scale * cons.offset;
            }
        }
        out
    }

    /// Writes a flattened consequent vector back into the rules.
    pub fn set_consequents(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.consequent_len() {
            return Err(Error::InvalidInput(format!(
                "consequent vector has {} entries, expected {}",
                theta.len(),
                self.consequent_len()
            )));
        }
        let stride = self.input_dim + 1;
        let per_band = self.rules.len() * stride;
        let bands = self.bands();
        let dim = self.input_dim;
        for band in 0..bands {
            for (i, rule) in self.rules.iter_mut().enumerate() {
                let start = band * per_band + i * stride;
                let chunk = &theta[start..start + stride];
                rule.consequents[band].coeffs.copy_from_slice(&chunk[..dim]);
                rule.consequents[band].offset = chunk[dim];
            }
        }
        Ok(())
    }

    /// Serializes the model to pretty JSON. All parameters are finite
    /// doubles printed in shortest round-trip form, so saving and loading
    /// reproduces the model bit for bit.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TsModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::InvalidInput("model must contain at least one rule".into()));
        }
        let bands = self.bands();
        for rule in &self.rules {
            if rule.antecedent.len() != self.input_dim {
                return Err(Error::InvalidInput(
                    "rule arity does not match the model input dimension".into(),
                ));
            }
            if rule.consequents.len() != bands {
                return Err(Error::InvalidInput(format!(
                    "rule carries {} consequent sets, expected {} for a {:?} model",
                    rule.consequents.len(),
                    bands,
                    self.meta.kind
                )));
            }
            if rule.consequents.iter().any(|c| c.coeffs.len() != self.input_dim) {
                return Err(Error::InvalidInput(
                    "consequent arity does not match the model input dimension".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Evaluates the normalized lower/upper firing vectors at `x`.
///
/// Per rule, the band memberships multiply across axes (product t-norm);
/// each band is then normalized over the rules. If both bands underflow the
/// input is outside the model's support and an error is returned; if only
/// one band underflows it borrows the other band's distribution.
pub fn firing(model: &TsModel, x: &[f64]) -> Result<FiringVector> {
    if x.len() != model.input_dim {
        return Err(Error::InvalidInput(format!(
            "input has {} entries, model expects {}",
            x.len(),
            model.input_dim
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("model inputs must be finite".into()));
    }
    let c = model.rules.len();
    let mut lower = vec![0.0; c];
    let mut upper = vec![0.0; c];
    for (i, rule) in model.rules.iter().enumerate() {
        let mut lo = 1.0;
        let mut up = 1.0;
        for (j, mf) in rule.antecedent.iter().enumerate() {
            lo *= mf.value_lower(x[j]);
            up *= mf.value_upper(x[j]);
        }
        lower[i] = lo;
        upper[i] = up;
    }
    let sum_lo: f64 = lower.iter().sum();
    let sum_up: f64 = upper.iter().sum();
    if sum_lo < FIRING_FLOOR && sum_up < FIRING_FLOOR {
        return Err(Error::NoRuleFires { input: x.to_vec() });
    }
    if sum_lo < FIRING_FLOOR {
        for v in &mut upper {
            *v /= sum_up;
        }
        lower.copy_from_slice(&upper);
    } else if sum_up < FIRING_FLOOR {
        for v in &mut lower {
            *v /= sum_lo;
        }
        upper.copy_from_slice(&lower);
    } else {
        for v in &mut lower {
            *v /= sum_lo;
        }
        for v in &mut upper {
            *v /= sum_up;
        }
    }
    Ok(FiringVector { lower, upper })
}

fn extend_blocks(basis: &mut Vec<f64>, weights: &[f64], x: &[f64], scale: f64) {
    for w in weights {
        let p = scale * w;
        for &v in x {
            basis.push(p * v);
        }
        basis.push(p);
    }
}

/// The consequent regressor basis at `x`: one block `[phi_i * x, phi_i]`
/// per rule, with `phi` the band-averaged normalized firing (for a type-1
/// model that is simply its firing). Its dot product with
/// [`TsModel::controller_consequents`] reproduces [`infer`] exactly when
/// the bands share one consequent set, as fitted models do, and the same
/// rows form the least-squares design matrix of the fit.
///
/// The adaptive controllers adapt in this basis. Collapsing the bands
/// keeps the basis norm comparable between model kinds, so equal
/// adaptation gains mean equal effective adaptation speed; a stacked
/// per-band basis would halve the interval controllers' squared norm and
/// slow their parameter updates by the same factor.
pub fn regressor_basis(model: &TsModel, x: &[f64]) -> Result<Vec<f64>> {
    let fv = firing(model, x)?;
    let mut basis = Vec::with_capacity(model.rules.len() * (model.input_dim + 1));
    extend_blocks(&mut basis, &fv.averaged(), x, 1.0);
    Ok(basis)
}

/// Model output at `x`: the firing-weighted mix of rule consequents. An
/// interval model averages its lower-band and upper-band outputs.
pub fn infer(model: &TsModel, x: &[f64]) -> Result<f64> {
    let fv = firing(model, x)?;
    match model.meta.kind {
        ModelKind::Type1 => {
            let phi = fv.averaged();
            Ok(phi
                .iter()
                .zip(&model.rules)
                .map(|(p, rule)| p * rule.consequents[0].eval(x))
                .sum())
        }
        ModelKind::Interval => {
            let mut y = 0.0;
            for (i, rule) in model.rules.iter().enumerate() {
                y += 0.5 * fv.lower[i] * rule.consequents[0].eval(x);
                y += 0.5 * fv.upper[i] * rule.consequents[1].eval(x);
            }
            Ok(y)
        }
    }
}

/// Significance threshold of the consequent fit: an SVD direction is kept
/// only when the magnitude of its correlation with the target exceeds this
/// many residual standard deviations (a three-sigma test on `u_i' y`).
const FIT_SIGNIFICANCE: f64 = 3.0;

/// Residual-to-signal ratio below which the fit counts as noiseless and
/// the significance test is skipped (it is meaningless without noise).
const NOISELESS_RESIDUAL: f64 = 1e-9;

/// Summary returned by [`fit_consequents`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSummary {
    pub training_rmse: f64,
    pub rank_deficient: bool,
}

/// Fits one shared consequent set per rule by least squares on `data`,
/// whose last column is the regressand.
///
/// Both model kinds are fitted against the band-averaged firing, so the
/// design has `rules * (input_dim + 1)` columns. For an interval model the
/// solved set is written into both bands: the identified model starts with
/// equal lower and upper consequents, and only the adaptive controller
/// later moves the two bands apart. (Fitting the bands as free parameters
/// would be ill-posed: the band firings are nearly collinear, so the fit
/// trades huge opposing weights between them.)
///
/// The normal equations are solved through the SVD of the design matrix,
/// truncated twice:
/// - directions below machine-precision rank are dropped and flagged as
///   rank deficiency;
/// - on noisy data, directions whose correlation with the target does not
///   exceed [`FIT_SIGNIFICANCE`] residual standard deviations are dropped
///   as statistically insignificant. Such directions fit noise, not
///   structure, and near-degenerate ones would amplify that noise into
///   large coefficients that generalize badly. A target carrying no signal
///   at all is thereby fit by the zero model instead of by hallucinated
///   structure.
///
/// The solution is the minimum-norm least-squares fit restricted to the
/// retained directions.
pub fn fit_consequents(model: &mut TsModel, data: &DataSet) -> Result<FitSummary> {
    if data.dim() != model.input_dim + 1 {
        return Err(Error::InvalidInput(format!(
            "data has {} columns, expected {} inputs plus a regressand",
            data.dim(),
            model.input_dim
        )));
    }
    let n = data.n_samples();
    let cols = model.rules.len() * (model.input_dim + 1);
    if n < cols {
        return Err(Error::InvalidInput(format!(
            "need at least {cols} samples to fit {cols} consequent parameters, got {n}"
        )));
    }
    let mut design = DMatrix::zeros(n, cols);
    let mut target = DVector::zeros(n);
    let mut x = vec![0.0; model.input_dim];
    for k in 0..n {
        let row = data.row(k);
        for j in 0..model.input_dim {
            x[j] = row[j];
        }
        let fv = firing(model, &x)?;
        let mut basis = Vec::with_capacity(cols);
        extend_blocks(&mut basis, &fv.averaged(), &x, 1.0);
        for (j, b) in basis.iter().enumerate() {
            design[(k, j)] = *b;
        }
        target[k] = row[model.input_dim];
    }
    let svd = design.clone().svd(true, true);
    let (u, v_t) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateFit("SVD factors unavailable".into())),
    };
    let smax = svd.singular_values.max();
    let eps = smax * cols.max(n) as f64 * f64::EPSILON;
    let rank = svd.rank(eps);
    if rank == 0 {
        return Err(Error::DegenerateFit(
            "consequent design matrix is numerically zero".into(),
        ));
    }
    // Correlations of the target with the left singular directions, and
    // the coefficient each numerically independent direction would take.
    let correlations = u.transpose() * &target;
    let full_coeff = |i: usize| correlations[i] / svd.singular_values[i];
    let fitted_sq: f64 = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > eps)
        .map(|i| correlations[i] * correlations[i])
        .sum();
    let residual_sq = (target.norm_squared() - fitted_sq).max(0.0);
    // Residual standard deviation of the unrestricted fit; the denominator
    // discounts the fitted directions.
    let dof = (n - rank.min(n - 1)) as f64;
    let sigma_hat = (residual_sq / dof).sqrt();
    let noiseless = sigma_hat <= NOISELESS_RESIDUAL * (target.norm() / (n as f64).sqrt() + 1.0);
    let keep = |i: usize| -> bool {
        svd.singular_values[i] > eps
            && (noiseless || correlations[i].abs() >= FIT_SIGNIFICANCE * sigma_hat)
    };
    let mut theta = DVector::zeros(cols);
    for i in 0..svd.singular_values.len() {
        if keep(i) {
            let c = full_coeff(i);
            for j in 0..cols {
                theta[j] += c * v_t[(i, j)];
            }
        }
    }
    let residual = &design * &theta - &target;
    let training_rmse = (residual.norm_squared() / n as f64).sqrt();
    let rank_deficient = rank < cols;
    let flattened: Vec<f64> = theta.as_slice().repeat(model.bands());
    model.set_consequents(&flattened)?;
    model.meta.training_rmse = Some(training_rmse);
    model.meta.rank_deficient = rank_deficient;
    Ok(FitSummary { training_rmse, rank_deficient })
}

/// Root-mean-square prediction error of `model` on `data` (last column is
/// the reference output).
pub fn rmse(model: &TsModel, data: &DataSet) -> Result<f64> {
    if data.dim() != model.input_dim + 1 {
        return Err(Error::InvalidInput(format!(
            "data has {} columns, expected {} inputs plus a reference",
            data.dim(),
            model.input_dim
        )));
    }
    let n = data.n_samples();
    let mut sse = 0.0;
    let mut x = vec![0.0; model.input_dim];
    for k in 0..n {
        let row = data.row(k);
        for j in 0..model.input_dim {
            x[j] = row[j];
        }
        let e = infer(model, &x)? - row[model.input_dim];
        sse += e * e;
    }
    Ok((sse / n as f64).sqrt())
}

/// Identifies a model from `data` (inputs followed by one output column):
/// clusters the product space, builds per-axis membership functions from
/// the membership projections, and fits the consequents.
pub fn build_model(data: &DataSet, kind: ModelKind, cfg: &BuildConfig) -> Result<TsModel> {
    let gk = GkConfig {
        c: cfg.clusters,
        m: cfg.fuzziness,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        seed: cfg.seed,
        rho: None,
    };
    let partition = gk_cluster(data, &gk)?;
    build_model_from_partition(data, &partition, kind, cfg)
}

/// The classical type-1 membership function of a fuzzy cluster along one
/// axis: a unit-height Gaussian at the membership-weighted mean with the
/// membership-weighted standard deviation (weights are the memberships
/// raised to the clustering fuzziness exponent) — the Gaussian projection
/// of the cluster onto that axis. The interval variant instead bounds the
/// projected membership cloud by envelopes; see [`build_interval_mf`].
fn projected_gaussian(xs: &[f64], memberships: &[f64], fuzziness: f64) -> Result<GaussianMf> {
    let mut wsum = 0.0;
    let mut mean = 0.0;
    for (&x, &u) in xs.iter().zip(memberships) {
        let w = u.powf(fuzziness);
        wsum += w;
        mean += w * x;
    }
    if !(wsum > 0.0) {
        return Err(Error::DegenerateFit("cluster has no membership mass".into()));
    }
    mean /= wsum;
    let mut var = 0.0;
    for (&x, &u) in xs.iter().zip(memberships) {
        var += u.powf(fuzziness) * (x - mean).powi(2);
    }
    var /= wsum;
    if !(var > 0.0) {
        return Err(Error::DegenerateFit(
            "cluster is concentrated on a single abscissa, its width is unidentifiable".into(),
        ));
    }
    GaussianMf::new(1.0, mean, var.sqrt())
}

/// Same as [`build_model`] but reuses an existing partition of `data`, so
/// the type-1 and interval variants can share one clustering run.
pub fn build_model_from_partition(
    data: &DataSet,
    partition: &FuzzyPartition,
    kind: ModelKind,
    cfg: &BuildConfig,
) -> Result<TsModel> {
    if data.dim() < 2 {
        return Err(Error::InvalidInput(
            "model identification needs at least one input column and one output column".into(),
        ));
    }
    let input_dim = data.dim() - 1;
    let c = partition.memberships.nrows();
    let mut rules = Vec::with_capacity(c);
    for i in 0..c {
        let memberships: Vec<f64> =
            (0..data.n_samples()).map(|k| partition.memberships[(i, k)]).collect();
        let mut antecedent = Vec::with_capacity(input_dim);
        for j in 0..input_dim {
            let mf = match kind {
                ModelKind::Interval => {
                    let cloud = ScatterSet::new(&data.column(j), &memberships)?;
                    build_interval_mf(&cloud, cfg.upper_passes, cfg.lower_passes)?
                }
                ModelKind::Type1 => IntervalGaussianMf::degenerate(projected_gaussian(
                    &data.column(j),
                    &memberships,
                    cfg.fuzziness,
                )?),
            };
            antecedent.push(mf);
        }
        rules.push(TsRule {
            antecedent,
            consequents: vec![AffineConsequent::zero(input_dim); kind.bands()],
        });
    }
    let mut model = TsModel {
        input_dim,
        rules,
        meta: ModelMeta {
            kind,
            clusters: c,
            seed: cfg.seed,
            training_rmse: None,
            rank_deficient: false,
        },
    };
    fit_consequents(&mut model, data)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::GaussianMf;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mf(height: f64, center: f64, sigma: f64) -> IntervalGaussianMf {
        IntervalGaussianMf::degenerate(GaussianMf::new(height, center, sigma).unwrap())
    }

    fn aff(coeffs: Vec<f64>, offset: f64) -> AffineConsequent {
        AffineConsequent { coeffs, offset }
    }

    fn two_rule_model() -> TsModel {
        TsModel {
            input_dim: 1,
            rules: vec![
                TsRule {
                    antecedent: vec![mf(1.0, -1.0, 0.8)],
                    consequents: vec![aff(vec![2.0], 0.5)],
                },
                TsRule {
                    antecedent: vec![mf(1.0, 1.0, 0.8)],
                    consequents: vec![aff(vec![-1.0], 1.5)],
                },
            ],
            meta: ModelMeta {
                kind: ModelKind::Type1,
                clusters: 2,
                seed: 0,
                training_rmse: None,
                rank_deficient: false,
            },
        }
    }

    /// The same rules re-tagged as an interval model: degenerate bands and
    /// the type-1 consequent duplicated into both band slots.
    fn interval_twin(t1: &TsModel) -> TsModel {
        let mut twin = t1.clone();
        twin.meta.kind = ModelKind::Interval;
        for rule in &mut twin.rules {
            let shared = rule.consequents[0].clone();
            rule.consequents = vec![shared.clone(), shared];
        }
        twin
    }

    /// Independent type-1 TS reference: plain weighted average of the rule
    /// outputs with product-of-Gaussians weights.
    fn type1_reference(model: &TsModel, x: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for rule in &model.rules {
            let mut w = 1.0;
            for (j, a) in rule.antecedent.iter().enumerate() {
                w *= a.upper.value(x[j]);
            }
            let out = rule.consequents[0].eval(x);
            num += w * out;
            den += w;
        }
        num / den
    }

    #[test]
    fn symmetric_rules_split_firing_at_midpoint() {
        let model = two_rule_model();
        let fv = firing(&model, &[0.0]).unwrap();
        assert_abs_diff_eq!(fv.lower[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fv.lower[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fv.upper[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn firing_vectors_are_normalized_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = TsModel {
            input_dim: 2,
            rules: (0..4)
                .map(|_| TsRule {
                    antecedent: vec![
                        IntervalGaussianMf {
                            lower: GaussianMf::new(
                                0.3 + 0.3 * rng.gen::<f64>(),
                                rng.gen::<f64>() * 4.0 - 2.0,
                                0.3 + rng.gen::<f64>(),
                            )
                            .unwrap(),
                            upper: GaussianMf::new(
                                0.7 + 0.3 * rng.gen::<f64>(),
                                rng.gen::<f64>() * 4.0 - 2.0,
                                0.5 + rng.gen::<f64>(),
                            )
                            .unwrap(),
                        },
                        mf(1.0, rng.gen::<f64>() * 4.0 - 2.0, 0.5 + rng.gen::<f64>()),
                    ],
                    consequents: vec![
                        aff(vec![rng.gen(), rng.gen()], rng.gen()),
                        aff(vec![rng.gen(), rng.gen()], rng.gen()),
                    ],
                })
                .collect(),
            meta: ModelMeta {
                kind: ModelKind::Interval,
                clusters: 4,
                seed: 0,
                training_rmse: None,
                rank_deficient: false,
            },
        };
        for _ in 0..200 {
            let x = [rng.gen::<f64>() * 6.0 - 3.0, rng.gen::<f64>() * 6.0 - 3.0];
            let fv = firing(&model, &x).unwrap();
            for band in [&fv.lower, &fv.upper] {
                let sum: f64 = band.iter().sum();
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
                assert!(band.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
            }
        }
    }

    #[test]
    fn degenerate_interval_matches_type1_reference() {
        // With coincident bands and both band consequents equal, interval
        // inference must collapse to classical type-1 inference exactly.
        let t1 = two_rule_model();
        let twin = interval_twin(&t1);
        for i in 0..100 {
            let x = -3.0 + i as f64 * 0.06;
            let reference = type1_reference(&t1, &[x]);
            assert_abs_diff_eq!(infer(&t1, &[x]).unwrap(), reference, epsilon = 1e-12);
            assert_abs_diff_eq!(infer(&twin, &[x]).unwrap(), reference, epsilon = 1e-12);
            // The regressor basis dotted with the controller consequents
            // agrees with both paths.
            let basis = regressor_basis(&twin, &[x]).unwrap();
            let theta = twin.controller_consequents();
            assert_eq!(basis.len(), theta.len());
            let dotted: f64 = basis.iter().zip(&theta).map(|(b, t)| b * t).sum();
            assert_abs_diff_eq!(dotted, reference, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_band_inflation_leaves_output_unchanged() {
        // Scaling every lower band by one common factor rescales each
        // band's products uniformly, so normalization cancels the factor
        // and both the firing vectors and the model output are unchanged.
        let base = interval_twin(&two_rule_model());
        let mut widened = base.clone();
        for (i, rule) in widened.rules.iter_mut().enumerate() {
            // Distinct per-band consequents to exercise the full layout.
            rule.consequents[1].coeffs[0] += 0.3 * (i as f64 + 1.0);
            rule.consequents[1].offset -= 0.2;
            for a in &mut rule.antecedent {
                a.lower = GaussianMf::new(a.lower.height * 0.8, a.lower.center, a.lower.sigma)
                    .unwrap();
            }
        }
        let mut unwidened = base;
        for (i, rule) in unwidened.rules.iter_mut().enumerate() {
            rule.consequents[1].coeffs[0] += 0.3 * (i as f64 + 1.0);
            rule.consequents[1].offset -= 0.2;
        }
        for i in 0..100 {
            let x = -3.0 + i as f64 * 0.06;
            assert_abs_diff_eq!(
                infer(&widened, &[x]).unwrap(),
                infer(&unwidened, &[x]).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn distant_input_fires_no_rule() {
        let mut model = two_rule_model();
        for rule in &mut model.rules {
            for a in &mut rule.antecedent {
                let narrow = GaussianMf::new(a.upper.height, a.upper.center, 0.05).unwrap();
                *a = IntervalGaussianMf::degenerate(narrow);
            }
        }
        let err = infer(&model, &[1e6]).unwrap_err();
        assert!(matches!(err, Error::NoRuleFires { .. }));
    }

    #[test]
    fn inference_is_continuous() {
        let model = two_rule_model();
        for i in 0..50 {
            let x = -2.0 + i as f64 * 0.08;
            let a = infer(&model, &[x]).unwrap();
            let b = infer(&model, &[x + 1e-9]).unwrap();
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn consequent_fit_recovers_generating_parameters() {
        let truth = two_rule_model();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let x = rng.gen::<f64>() * 6.0 - 3.0;
                vec![x, infer(&truth, &[x]).unwrap()]
            })
            .collect();
        let data = DataSet::from_rows(&rows).unwrap();
        let mut fitted = truth.clone();
        fitted.set_consequents(&vec![0.0; 4]).unwrap();
        let summary = fit_consequents(&mut fitted, &data).unwrap();
        assert!(!summary.rank_deficient);
        assert!(summary.training_rmse < 1e-9);
        let got = fitted.flatten_consequents();
        let want = truth.flatten_consequents();
        for (g, w) in got.iter().zip(&want) {
            assert_relative_eq!(g, w, max_relative = 1e-6);
        }
        assert!(rmse(&fitted, &data).unwrap() < 1e-9);
    }

    #[test]
    fn interval_fit_shares_one_consequent_set_across_bands() {
        // Identification fits a single consequent set per rule against the
        // band-averaged firing and writes it into both bands, so a target
        // generated by such a model is recovered exactly — parameters
        // included — and the design is full rank.
        let truth = TsModel {
            input_dim: 1,
            rules: vec![
                TsRule {
                    antecedent: vec![IntervalGaussianMf {
                        lower: GaussianMf::new(0.5, -1.0, 0.4).unwrap(),
                        upper: GaussianMf::new(1.0, -1.0, 0.9).unwrap(),
                    }],
                    consequents: vec![aff(vec![2.0], 0.5), aff(vec![2.0], 0.5)],
                },
                TsRule {
                    antecedent: vec![IntervalGaussianMf {
                        lower: GaussianMf::new(0.6, 1.0, 0.5).unwrap(),
                        upper: GaussianMf::new(1.0, 1.2, 1.1).unwrap(),
                    }],
                    consequents: vec![aff(vec![-1.0], 1.5), aff(vec![-1.0], 1.5)],
                },
            ],
            meta: ModelMeta {
                kind: ModelKind::Interval,
                clusters: 2,
                seed: 0,
                training_rmse: None,
                rank_deficient: false,
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                let x = rng.gen::<f64>() * 6.0 - 3.0;
                vec![x, infer(&truth, &[x]).unwrap()]
            })
            .collect();
        let data = DataSet::from_rows(&rows).unwrap();
        let mut fitted = truth.clone();
        assert_eq!(fitted.consequent_len(), 8);
        fitted.set_consequents(&vec![0.0; 8]).unwrap();
        let summary = fit_consequents(&mut fitted, &data).unwrap();
        assert!(!summary.rank_deficient);
        assert!(summary.training_rmse < 1e-9);
        for rule in &fitted.rules {
            assert_eq!(rule.consequents[0], rule.consequents[1]);
        }
        let got = fitted.flatten_consequents();
        let want = truth.flatten_consequents();
        for (g, w) in got.iter().zip(&want) {
            assert_relative_eq!(g, w, max_relative = 1e-6);
        }
        for i in 0..200 {
            let x = [-3.0 + i as f64 * 0.03];
            assert_abs_diff_eq!(
                infer(&fitted, &x).unwrap(),
                infer(&truth, &x).unwrap(),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn fitted_consequents_are_a_local_sse_minimum() {
        // In-span target without noise: the fit is then the unrestricted
        // least-squares solution, so no coordinate perturbation may lower
        // the sum of squared errors.
        let truth = {
            let mut m = two_rule_model();
            m.set_consequents(&[0.7, -0.2, 0.4, 1.1]).unwrap();
            m
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..150)
            .map(|_| {
                let x = rng.gen::<f64>() * 6.0 - 3.0;
                vec![x, infer(&truth, &[x]).unwrap()]
            })
            .collect();
        let data = DataSet::from_rows(&rows).unwrap();
        let mut model = two_rule_model();
        fit_consequents(&mut model, &data).unwrap();

        let sse = |m: &TsModel| -> f64 {
            (0..data.n_samples())
                .map(|k| {
                    let row = data.row(k);
                    let e = infer(m, &[row[0]]).unwrap() - row[1];
                    e * e
                })
                .sum()
        };
        let base = sse(&model);
        let theta = model.flatten_consequents();
        for j in 0..theta.len() {
            for delta in [-1e-3, 1e-3] {
                let mut perturbed = theta.clone();
                perturbed[j] += delta;
                let mut m = model.clone();
                m.set_consequents(&perturbed).unwrap();
                assert!(sse(&m) >= base - 1e-9, "perturbing consequent {j} decreased SSE");
            }
        }
    }

    #[test]
    fn pure_noise_target_fits_the_zero_model() {
        // No direction of either design can pass the significance test on
        // a target that is independent noise, so both model kinds must
        // come out exactly zero instead of hallucinating structure.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                let x = rng.gen::<f64>() * 6.0 - 3.0;
                let noise: f64 = rng.gen::<f64>() + rng.gen::<f64>() + rng.gen::<f64>()
                    + rng.gen::<f64>()
                    - 2.0;
                vec![x, 0.3 * noise]
            })
            .collect();
        let data = DataSet::from_rows(&rows).unwrap();
        for mut model in [two_rule_model(), interval_twin(&two_rule_model())] {
            let summary = fit_consequents(&mut model, &data).unwrap();
            assert!(model.flatten_consequents().iter().all(|t| *t == 0.0));
            // The zero model's training error is the noise itself.
            let mean_sq = (0..data.n_samples())
                .map(|k| data.row(k)[1].powi(2))
                .sum::<f64>()
                / data.n_samples() as f64;
            assert_abs_diff_eq!(summary.training_rmse, mean_sq.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn significant_structure_survives_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                let x = rng.gen::<f64>() * 6.0 - 3.0;
                let noise: f64 = rng.gen::<f64>() - 0.5;
                vec![x, 2.0 * x - 1.0 + 0.2 * noise]
            })
            .collect();
        let data = DataSet::from_rows(&rows).unwrap();
        let mut model = two_rule_model();
        fit_consequents(&mut model, &data).unwrap();
        assert!(model.flatten_consequents().iter().any(|t| t.abs() > 0.1));
        // Fresh noiseless probes: the fitted function tracks the line.
        for i in 0..50 {
            let x = -2.5 + i as f64 * 0.1;
            let err = infer(&model, &[x]).unwrap() - (2.0 * x - 1.0);
            assert!(err.abs() < 0.1, "x={x}: err {err}");
        }
    }

    #[test]
    fn duplicate_rules_flag_rank_deficiency() {
        let mut model = two_rule_model();
        model.rules[1] = model.rules[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let x = rng.gen::<f64>() * 4.0 - 2.0;
                vec![x, x * 0.3 + 1.0]
            })
            .collect();
        let data = DataSet::from_rows(&rows).unwrap();
        let summary = fit_consequents(&mut model, &data).unwrap();
        assert!(summary.rank_deficient);
        assert!(model.meta.rank_deficient);
        // The minimum-norm fit still explains the affine data.
        assert!(summary.training_rmse < 1e-6);
    }

    #[test]
    fn identified_model_fits_linear_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| {
                let x = rng.gen::<f64>() * 4.0 - 2.0;
                vec![x, 2.0 * x - 1.0]
            })
            .collect();
        let data = DataSet::from_rows(&rows).unwrap();
        let cfg = BuildConfig { clusters: 2, ..Default::default() };
        for kind in [ModelKind::Type1, ModelKind::Interval] {
            let model = build_model(&data, kind, &cfg).unwrap();
            assert_eq!(model.input_dim, 1);
            assert_eq!(model.rules.len(), 2);
            assert_eq!(model.consequent_len(), kind.bands() * 4);
            let fit = rmse(&model, &data).unwrap();
            assert!(fit < 0.05, "{kind:?} rmse {fit}");
            if kind == ModelKind::Interval {
                for rule in &model.rules {
                    for a in &rule.antecedent {
                        assert!(a.dominates_on(-2.0, 2.0, 1e-9));
                    }
                }
            }
        }
    }

    #[test]
    fn identification_is_deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let x = rng.gen::<f64>() * 4.0 - 2.0;
                vec![x, x.sin()]
            })
            .collect();
        let data = DataSet::from_rows(&rows).unwrap();
        let cfg = BuildConfig { clusters: 2, seed: 11, ..Default::default() };
        let a = build_model(&data, ModelKind::Interval, &cfg).unwrap();
        let b = build_model(&data, ModelKind::Interval, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut model = interval_twin(&two_rule_model());
        model.rules[0].consequents[0].coeffs[0] = 1.0 / 3.0;
        model.rules[0].consequents[1].offset = 2.0_f64.sqrt();
        model.rules[1].consequents[0].coeffs[0] = -1e-17;
        model.meta.training_rmse = Some(0.1 + 0.2);
        let text = model.to_json().unwrap();
        let back = TsModel::from_json(&text).unwrap();
        assert_eq!(model, back);
        for (a, b) in model
            .flatten_consequents()
            .iter()
            .zip(back.flatten_consequents())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(text, back.to_json().unwrap());
    }

    #[test]
    fn mismatched_consequent_sets_are_rejected() {
        let mut model = two_rule_model();
        model.meta.kind = ModelKind::Interval; // rules still carry one set
        let text = serde_json::to_string(&model).unwrap();
        assert!(TsModel::from_json(&text).is_err());
    }

    #[test]
    fn arity_mismatches_are_rejected() {
        let model = two_rule_model();
        assert!(firing(&model, &[0.0, 0.0]).is_err());
        assert!(infer(&model, &[]).is_err());
        assert!(firing(&model, &[f64::NAN]).is_err());
        let data = DataSet::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(rmse(&model, &data).is_err());
    }
}
