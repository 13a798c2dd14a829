//! Indirect adaptive fuzzy sliding-mode controllers.
//!
//! Each control loop tracks a twice-differentiable reference through a
//! sliding surface `e_s = e + k0*edot` with a boundary layer of width
//! `epsilon`: inside the layer the distance `e_eps` is exactly zero and
//! adaptation pauses. The control is a certainty-equivalence term built
//! from an adapting model plus a smooth switching term that dominates the
//! model's approximation error.
//!
//! Three loop kinds share the machinery:
//! - attitude (roll/pitch/yaw): the drift term comes from an identified
//!   fuzzy model whose consequents keep adapting online,
//! - altitude: gravity and inverse mass are adapted scalars; the thrust
//!   enters with a negative sign (positive thrust pushes `z` down in this
//!   convention), which flips the switching sign and the gain-adaptation
//!   factor relative to the attitude loops,
//! - horizontal position: a drift-free loop producing virtual tilt
//!   commands, turned into desired angles by [`desired_angles`].

use serde::{Deserialize, Serialize};

use crate::ivfm::{regressor_basis, TsModel};
use crate::quadrotor::{
    derived_coeffs, f_phi, f_psi, f_theta, DerivedCoeffs, QuadParams, QuadState,
};
use crate::{Error, Result};

/// Minimum thrust direction cosine `cos(phi)*cos(theta)` for which the
/// altitude loop is considered valid.
pub const TILT_VALIDITY_MIN: f64 = 0.1;

/// Saturation: identity inside `[-1, 1]`, clipped outside.
pub fn sat(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Switching-term shape: smooth boundary-layer saturation or hard sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Switching {
    Sat,
    Sign,
}

impl Switching {
    fn value(self, e_s: f64, epsilon: f64) -> f64 {
        match self {
            Switching::Sat => sat(e_s / epsilon),
            Switching::Sign => {
                if e_s > 0.0 {
                    1.0
                } else if e_s < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// How the surface gain pairs with the error terms. The default applies
/// `k0` to the rate; the alternative applies it to the error instead. The
/// auxiliary term `k0*edot` in the demanded acceleration is the same for
/// both (it is the surface derivative minus the error acceleration).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceForm {
    /// `e_s = e + k0*edot`.
    #[default]
    ErrorPlusScaledRate,
    /// `e_s = k0*e + edot`.
    ScaledErrorPlusRate,
}

/// Per-loop sliding-mode settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlidingConfig {
    /// Surface gain (see [`SurfaceForm`]).
    pub k0: f64,
    /// Reaching gain on the boundary-layer error.
    pub gamma: f64,
    /// Boundary-layer width.
    pub epsilon: f64,
    /// Bound on the drift-model approximation error.
    pub w_f: f64,
    /// Relative bound on the gain-model approximation error.
    pub w_g: f64,
    /// Lower bound on every effective gain estimate.
    pub g0: f64,
    pub switching: Switching,
    #[serde(default)]
    pub surface: SurfaceForm,
}

impl Default for SlidingConfig {
    fn default() -> Self {
        Self {
            k0: 1.0,
            gamma: 10.0,
            epsilon: 0.1,
            w_f: 0.1,
            w_g: 0.1,
            g0: 0.1,
            switching: Switching::Sat,
            surface: SurfaceForm::ErrorPlusScaledRate,
        }
    }
}

impl SlidingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k0 > 0.0 && self.gamma > 0.0 && self.epsilon > 0.0 && self.g0 > 0.0) {
            return Err(Error::InvalidInput(
                "k0, gamma, epsilon and g0 must be positive".into(),
            ));
        }
        if self.w_f < 0.0 || self.w_g < 0.0 {
            return Err(Error::InvalidInput("w_f and w_g must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Tracking error and its sliding-surface transforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingState {
    /// `reference - actual`.
    pub e: f64,
    pub e_dot: f64,
    /// Sliding variable per the configured [`SurfaceForm`].
    pub e_s: f64,
    /// Distance to the boundary layer; exactly zero inside it.
    pub e_eps: f64,
}

/// Builds the sliding variables for one error sample.
pub fn sliding_vars(e: f64, e_dot: f64, cfg: &SlidingConfig) -> TrackingState {
    let e_s = match cfg.surface {
        SurfaceForm::ErrorPlusScaledRate => e + cfg.k0 * e_dot,
        SurfaceForm::ScaledErrorPlusRate => cfg.k0 * e + e_dot,
    };
    let e_eps = if e_s.abs() <= cfg.epsilon {
        0.0
    } else {
        e_s - cfg.epsilon * e_s.signum()
    };
    TrackingState { e, e_dot, e_s, e_eps }
}

/// Certainty-equivalence control `(nu - fhat) / ghat` for a loop whose
/// acceleration is `f + g*u` with `g > 0`.
pub fn equivalent_control(f_hat: f64, g_hat: f64, nu: f64, g0: f64) -> Result<f64> {
    if g0 <= 0.0 {
        return Err(Error::InvalidInput("g0 must be positive".into()));
    }
    if g_hat < g0 {
        return Err(Error::InvalidInput(format!(
            "gain estimate {g_hat} fell below its floor {g0}; projection was bypassed"
        )));
    }
    Ok((nu - f_hat) / g_hat)
}

/// Smooth switching term `(w_f_eff + w_g*|u_eq|) / g0 * sat(e_s/epsilon)`.
///
/// `attenuation` carries the altitude loop's thrust direction cosine,
/// which divides the drift bound (`w_f / U`); it must be positive.
#[allow(clippy::too_many_arguments)]
pub fn switching_control(
    w_f: f64,
    w_g: f64,
    u_eq: f64,
    g0: f64,
    e_s: f64,
    epsilon: f64,
    attenuation: Option<f64>,
    switching: Switching,
) -> Result<f64> {
    let w_f_eff = match attenuation {
        Some(u) if u <= 0.0 => return Err(Error::ThrustValidity(u)),
        Some(u) => w_f / u,
        None => w_f,
    };
    Ok((w_f_eff + w_g * u_eq.abs()) / g0 * switching.value(e_s, epsilon))
}

/// Adjustable parameters of one loop's drift and gain estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveParams {
    /// Drift-model parameters (flattened fuzzy consequents, or one scalar
    /// for the altitude loop, or empty when the drift is known zero).
    pub theta_f: Vec<f64>,
    pub bounds_f: Vec<(f64, f64)>,
    /// Gain estimate (effective input gain, always positive).
    pub theta_g: f64,
    pub bounds_g: (f64, f64),
    pub eta_f: f64,
    pub eta_g: f64,
}

impl AdaptiveParams {
    pub fn within_bounds(&self) -> bool {
        self.theta_f
            .iter()
            .zip(&self.bounds_f)
            .all(|(t, (lo, hi))| *t >= *lo && *t <= *hi)
            && self.theta_g >= self.bounds_g.0
            && self.theta_g <= self.bounds_g.1
    }
}

fn projected(value: f64, rate: f64, dt: f64, bounds: (f64, f64)) -> f64 {
    (value + rate * dt).clamp(bounds.0, bounds.1)
}

/// One Euler step of the adaptation laws with componentwise projection:
/// `thetadot_f = -eta_f * phi_f * e_eps` and
/// `thetadot_g = -eta_g * e_eps * u_eq * factor`. A component sitting at a
/// bound with an outward update stays put. `factor` carries the loop's
/// gain-channel geometry: `1` for attitude, `-U` for altitude (negative
/// thrust channel), `U_z` for position.
pub fn adapt_step(
    params: &mut AdaptiveParams,
    phi_f: &[f64],
    e_eps: f64,
    u_eq: f64,
    factor: f64,
    dt: f64,
) {
    assert_eq!(phi_f.len(), params.theta_f.len(), "basis arity mismatch");
    for ((theta, phi), bounds) in
        params.theta_f.iter_mut().zip(phi_f).zip(&params.bounds_f)
    {
        let rate = -params.eta_f * phi * e_eps;
        *theta = projected(*theta, rate, dt, *bounds);
    }
    let rate_g = -params.eta_g * e_eps * u_eq * factor;
    params.theta_g = projected(params.theta_g, rate_g, dt, params.bounds_g);
}

/// A twice-differentiated reference sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RefSample {
    pub y: f64,
    pub dy: f64,
    pub ddy: f64,
}

/// What one control call produced, for logging and analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisOutput {
    pub u: f64,
    pub e: f64,
    pub e_s: f64,
    pub e_eps: f64,
    pub u_eq: f64,
}

/// Which rotational axis an attitude controller drives. Picks the axis
/// output, its drift regressors and its input gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttitudeChannel {
    Roll,
    Pitch,
    Yaw,
}

impl AttitudeChannel {
    pub fn name(self) -> &'static str {
        match self {
            AttitudeChannel::Roll => "roll",
            AttitudeChannel::Pitch => "pitch",
            AttitudeChannel::Yaw => "yaw",
        }
    }

    /// Inputs of this axis's drift function.
    pub fn regressors(self, s: &QuadState, omega_r: f64) -> Vec<f64> {
        match self {
            AttitudeChannel::Roll => vec![s.theta_dot, s.psi_dot, omega_r],
            AttitudeChannel::Pitch => vec![s.phi_dot, s.psi_dot, omega_r],
            AttitudeChannel::Yaw => vec![s.theta_dot, s.phi_dot],
        }
    }

    pub fn regressor_dim(self) -> usize {
        match self {
            AttitudeChannel::Yaw => 2,
            _ => 3,
        }
    }

    /// The true drift value, for exact-model controllers and data labels.
    pub fn true_drift(self, c: &DerivedCoeffs, s: &QuadState, omega_r: f64) -> f64 {
        match self {
            AttitudeChannel::Roll => f_phi(c, s.theta_dot, s.psi_dot, omega_r),
            AttitudeChannel::Pitch => f_theta(c, s.phi_dot, s.psi_dot, omega_r),
            AttitudeChannel::Yaw => f_psi(c, s.theta_dot, s.phi_dot),
        }
    }

    /// Axis angle and rate.
    pub fn output(self, s: &QuadState) -> (f64, f64) {
        match self {
            AttitudeChannel::Roll => (s.phi, s.phi_dot),
            AttitudeChannel::Pitch => (s.theta, s.theta_dot),
            AttitudeChannel::Yaw => (s.psi, s.psi_dot),
        }
    }

    /// Nominal input gain of this axis.
    pub fn input_gain(self, c: &DerivedCoeffs) -> f64 {
        match self {
            AttitudeChannel::Roll => c.b1,
            AttitudeChannel::Pitch => c.b2,
            AttitudeChannel::Yaw => c.b3,
        }
    }
}

/// Where an attitude controller's drift estimate comes from.
#[derive(Debug, Clone)]
enum DriftSource {
    /// Identified fuzzy model; antecedents stay frozen, the flattened
    /// consequents live in `theta_f` and keep adapting.
    Model(TsModel),
    /// The true drift function with true gains; adaptation disabled.
    Exact(DerivedCoeffs),
}

/// Sliding-mode controller for one rotational axis.
#[derive(Debug, Clone)]
pub struct AttitudeController {
    pub channel: AttitudeChannel,
    source: DriftSource,
    pub params: AdaptiveParams,
    pub cfg: SlidingConfig,
}

fn consequent_bounds(theta: &[f64]) -> Vec<(f64, f64)> {
    theta
        .iter()
        .map(|t| {
            let m = (10.0 * t.abs()).max(0.1);
            (-m, m)
        })
        .collect()
}

fn gain_setup(nominal: f64) -> (f64, (f64, f64), f64) {
    // initial estimate, bounds, floor
    (1.25 * nominal, (0.5 * nominal, 2.0 * nominal), 0.5 * nominal)
}

impl AttitudeController {
    /// Builds the controller around an identified drift model. The
    /// consequents seed `theta_f`, bounded to ten times their identified
    /// magnitude; the gain estimate starts 25% above `b_nominal` inside
    /// `[0.5, 2] * b_nominal` and `g0` is pinned to the lower bound.
    pub fn from_model(
        channel: AttitudeChannel,
        model: TsModel,
        b_nominal: f64,
        mut cfg: SlidingConfig,
        eta_f: f64,
        eta_g: f64,
    ) -> Result<Self> {
        if model.input_dim != channel.regressor_dim() {
            return Err(Error::InvalidInput(format!(
                "{} drift model expects {} inputs, got {}",
                channel.name(),
                channel.regressor_dim(),
                model.input_dim
            )));
        }
        if b_nominal <= 0.0 {
            return Err(Error::InvalidInput("input gain must be positive".into()));
        }
        let theta_f = model.controller_consequents();
        let bounds_f = consequent_bounds(&theta_f);
        let (theta_g, bounds_g, g0) = gain_setup(b_nominal);
        cfg.g0 = g0;
        cfg.validate()?;
        Ok(Self {
            channel,
            source: DriftSource::Model(model),
            params: AdaptiveParams { theta_f, bounds_f, theta_g, bounds_g, eta_f, eta_g },
            cfg,
        })
    }

    /// Controller with the true drift function and true gain; adaptation
    /// off. Useful as an exact-cancellation baseline.
    pub fn exact(channel: AttitudeChannel, plant: &QuadParams, mut cfg: SlidingConfig) -> Self {
        let coeffs = derived_coeffs(plant);
        let b = channel.input_gain(&coeffs);
        cfg.g0 = 0.5 * b;
        Self {
            channel,
            source: DriftSource::Exact(coeffs),
            params: AdaptiveParams {
                theta_f: Vec::new(),
                bounds_f: Vec::new(),
                theta_g: b,
                bounds_g: (0.5 * b, 2.0 * b),
                eta_f: 0.0,
                eta_g: 0.0,
            },
            cfg,
        }
    }

    /// One control step: evaluates the axis torque and advances the
    /// adaptive parameters by `dt`.
    pub fn control(
        &mut self,
        state: &QuadState,
        omega_r: f64,
        reference: &RefSample,
        dt: f64,
    ) -> Result<AxisOutput> {
        let (y, y_dot) = self.channel.output(state);
        let track = sliding_vars(reference.y - y, reference.dy - y_dot, &self.cfg);
        let nu = reference.ddy + self.cfg.gamma * track.e_eps + self.cfg.k0 * track.e_dot;
        let regs = self.channel.regressors(state, omega_r);
        let (f_hat, basis) = match &self.source {
            DriftSource::Model(model) => {
                let basis = regressor_basis(model, &regs)?;
                let f = basis.iter().zip(&self.params.theta_f).map(|(b, t)| b * t).sum();
                (f, Some(basis))
            }
            DriftSource::Exact(coeffs) => {
                (self.channel.true_drift(coeffs, state, omega_r), None)
            }
        };
        let u_eq = equivalent_control(f_hat, self.params.theta_g, nu, self.cfg.g0)?;
        let u_s = switching_control(
            self.cfg.w_f,
            self.cfg.w_g,
            u_eq,
            self.cfg.g0,
            track.e_s,
            self.cfg.epsilon,
            None,
            self.cfg.switching,
        )?;
        if let Some(basis) = &basis {
            adapt_step(&mut self.params, basis, track.e_eps, u_eq, 1.0, dt);
        }
        Ok(AxisOutput { u: u_eq + u_s, e: track.e, e_s: track.e_s, e_eps: track.e_eps, u_eq })
    }
}

/// Sliding-mode controller for the altitude loop.
///
/// The plant is `zddot = g - U * g_z * U_z` with `U = cos(phi)*cos(theta)`
/// and `g_z = 1/m`: thrust enters negatively, so the switching term is
/// subtracted and the gain-adaptation factor is `-U`. `theta_f` holds the
/// gravity estimate, `theta_g` the inverse-mass estimate.
#[derive(Debug, Clone)]
pub struct AltitudeController {
    pub params: AdaptiveParams,
    pub cfg: SlidingConfig,
}

impl AltitudeController {
    pub fn new(plant: &QuadParams, mut cfg: SlidingConfig, eta_f: f64, eta_g: f64) -> Self {
        let g = plant.gravity;
        let g_z = 1.0 / plant.mass;
        let (theta_g, bounds_g, g0) = gain_setup(g_z);
        cfg.g0 = g0;
        Self {
            params: AdaptiveParams {
                theta_f: vec![g],
                bounds_f: vec![(0.5 * g, 2.0 * g)],
                theta_g,
                bounds_g,
                eta_f,
                eta_g,
            },
            cfg,
        }
    }

    /// Frozen controller with the true gravity and inverse mass.
    pub fn exact(plant: &QuadParams, cfg: SlidingConfig) -> Self {
        let mut ctl = Self::new(plant, cfg, 0.0, 0.0);
        ctl.params.theta_f[0] = plant.gravity;
        ctl.params.theta_g = 1.0 / plant.mass;
        ctl
    }

    pub fn control(
        &mut self,
        state: &QuadState,
        reference: &RefSample,
        dt: f64,
    ) -> Result<AxisOutput> {
        let u_att = state.phi.cos() * state.theta.cos();
        if u_att <= TILT_VALIDITY_MIN {
            return Err(Error::ThrustValidity(u_att));
        }
        let track = sliding_vars(reference.y - state.z, reference.dy - state.z_dot, &self.cfg);
        let nu = reference.ddy + self.cfg.gamma * track.e_eps + self.cfg.k0 * track.e_dot;
        let g_hat = self.params.theta_g;
        if g_hat < self.cfg.g0 {
            return Err(Error::InvalidInput(format!(
                "inverse-mass estimate {g_hat} fell below its floor {}",
                self.cfg.g0
            )));
        }
        let u_eq = (self.params.theta_f[0] - nu) / (u_att * g_hat);
        let u_s = switching_control(
            self.cfg.w_f,
            self.cfg.w_g,
            u_eq,
            self.cfg.g0,
            track.e_s,
            self.cfg.epsilon,
            Some(u_att),
            self.cfg.switching,
        )?;
        let u_z = (u_eq - u_s).max(0.0);
        adapt_step(&mut self.params, &[1.0], track.e_eps, u_eq, -u_att, dt);
        Ok(AxisOutput { u: u_z, e: track.e, e_s: track.e_s, e_eps: track.e_eps, u_eq })
    }
}

/// Sliding-mode controller for one horizontal axis.
///
/// The plant is `xddot = u * U_z * g_p` with `g_p = 1/m`; the drift is
/// known zero, only the inverse mass adapts (factor `U_z`). The output is
/// a virtual tilt command clamped to `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct PositionController {
    pub params: AdaptiveParams,
    pub cfg: SlidingConfig,
}

impl PositionController {
    pub fn new(plant: &QuadParams, mut cfg: SlidingConfig, eta_g: f64) -> Self {
        let g_p = 1.0 / plant.mass;
        let (theta_g, bounds_g, g0) = gain_setup(g_p);
        cfg.g0 = g0;
        Self {
            params: AdaptiveParams {
                theta_f: Vec::new(),
                bounds_f: Vec::new(),
                theta_g,
                bounds_g,
                eta_f: 0.0,
                eta_g,
            },
            cfg,
        }
    }

    /// Frozen controller with the true inverse mass.
    pub fn exact(plant: &QuadParams, cfg: SlidingConfig) -> Self {
        let mut ctl = Self::new(plant, cfg, 0.0);
        ctl.params.theta_g = 1.0 / plant.mass;
        ctl
    }

    pub fn control(
        &mut self,
        position: f64,
        velocity: f64,
        reference: &RefSample,
        u_z: f64,
        dt: f64,
    ) -> Result<AxisOutput> {
        if u_z <= 0.0 {
            return Err(Error::NonPositiveThrust(u_z));
        }
        let track = sliding_vars(reference.y - position, reference.dy - velocity, &self.cfg);
        let nu = reference.ddy + self.cfg.gamma * track.e_eps + self.cfg.k0 * track.e_dot;
        let g_hat = self.params.theta_g;
        if g_hat < self.cfg.g0 {
            return Err(Error::InvalidInput(format!(
                "inverse-mass estimate {g_hat} fell below its floor {}",
                self.cfg.g0
            )));
        }
        let u_eq = nu / (u_z * g_hat);
        let u_s = switching_control(
            0.0,
            self.cfg.w_g,
            u_eq,
            self.cfg.g0,
            track.e_s,
            self.cfg.epsilon,
            None,
            self.cfg.switching,
        )?;
        let u = sat(u_eq + u_s);
        adapt_step(&mut self.params, &[], track.e_eps, u_eq, u_z, dt);
        Ok(AxisOutput { u, e: track.e, e_s: track.e_s, e_eps: track.e_eps, u_eq })
    }
}

/// Desired roll and pitch realizing the virtual tilt commands at the given
/// heading. Arguments outside the arcsine domain are clamped and flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredAngles {
    pub phi_d: f64,
    pub theta_d: f64,
    pub clamped: bool,
}

pub fn desired_angles(u_x: f64, u_y: f64, psi_d: f64) -> DesiredAngles {
    fn into_domain(v: f64) -> (f64, bool) {
        if !v.is_finite() {
            (0.0, true)
        } else if v.abs() > 1.0 {
            (v.clamp(-1.0, 1.0), true)
        } else {
            (v, false)
        }
    }
    let (s_phi, c1) = into_domain(u_x * psi_d.sin() - u_y * psi_d.cos());
    let phi_d = s_phi.asin();
    let (s_theta, c2) = into_domain((u_x * psi_d.cos() - u_y * psi_d.sin()) / phi_d.cos());
    let theta_d = s_theta.asin();
    DesiredAngles { phi_d, theta_d, clamped: c1 || c2 }
}
