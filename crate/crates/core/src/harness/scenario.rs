//! Closed-loop scenario execution: builds the controller set for the
//! configured variant, runs the tracking scenario with optional
//! disturbances, and produces a per-step log plus summary metrics.
//!
//! Loop order per step: altitude first (its thrust feeds the horizontal
//! loops), then in position mode the horizontal controllers and the tilt
//! command conversion, then the three attitude loops, then one RK4 plant
//! step. Parameter disturbances swap the simulated plant parameters inside
//! their window; the controllers always use the nominal ones. Angle
//! disturbances offset the commanded roll/pitch values only, leaving the
//! commanded rates and accelerations untouched.
//!
//! In position mode the raw tilt commands are magnitude-limited and passed
//! through a critically damped second-order shaper before they reach the
//! attitude loops. The shaper supplies mutually consistent command rates
//! and accelerations; differentiating the raw commands instead would feed
//! the inner loops step-induced spikes on the order of the step size
//! inverse, which the adaptive controllers amplify until the state leaves
//! the identified models' domain.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{
    desired_angles, AttitudeChannel, AttitudeController, AltitudeController, AxisOutput,
    PositionController, RefSample,
};
use crate::harness::config::{
    ControllerKind, DisturbanceSpec, ScenarioConfig, ScenarioMode,
};
use crate::harness::identify::IdentResult;
use crate::ivfm::ModelKind;
use crate::quadrotor::{derived_coeffs, step, ControlInputs, QuadState};
use crate::{Error, Result};

/// One logged control instant: the state and commands at time `t`, before
/// the plant advances to `t + dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub state: QuadState,
    pub u_phi: f64,
    pub u_theta: f64,
    pub u_psi: f64,
    pub u_z: f64,
    pub es_phi: f64,
    pub es_theta: f64,
    pub es_psi: f64,
    pub es_z: f64,
    pub es_x: f64,
    pub es_y: f64,
    /// Euclidean norms of the drift-consequent vectors, one scalar per
    /// rotational loop, plus the scalar gain estimates.
    pub thf_roll: f64,
    pub thg_roll: f64,
    pub thf_pitch: f64,
    pub thg_pitch: f64,
    pub thf_yaw: f64,
    pub thg_yaw: f64,
    pub thf_alt: f64,
    pub thg_alt: f64,
    pub thg_x: f64,
    pub thg_y: f64,
}

const CSV_HEADER: [&str; 33] = [
    "t", "phi", "phi_dot", "theta", "theta_dot", "psi", "psi_dot", "z", "z_dot", "x", "x_dot",
    "y", "y_dot", "u_phi", "u_theta", "u_psi", "u_z", "es_phi", "es_theta", "es_psi", "es_z",
    "es_x", "es_y", "thf_roll", "thg_roll", "thf_pitch", "thg_pitch", "thf_yaw", "thg_yaw",
    "thf_alt", "thg_alt", "thg_x", "thg_y",
];

impl StepRecord {
    fn to_row(self) -> [f64; 33] {
        let s = self.state.to_array();
        [
            self.t, s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7], s[8], s[9], s[10], s[11],
            self.u_phi, self.u_theta, self.u_psi, self.u_z, self.es_phi, self.es_theta,
            self.es_psi, self.es_z, self.es_x, self.es_y, self.thf_roll, self.thg_roll,
            self.thf_pitch, self.thg_pitch, self.thf_yaw, self.thg_yaw, self.thf_alt,
            self.thg_alt, self.thg_x, self.thg_y,
        ]
    }

    fn from_row(r: [f64; 33]) -> Self {
        let mut s = [0.0; 12];
        s.copy_from_slice(&r[1..13]);
        Self {
            t: r[0],
            state: QuadState::from_array(s),
            u_phi: r[13],
            u_theta: r[14],
            u_psi: r[15],
            u_z: r[16],
            es_phi: r[17],
            es_theta: r[18],
            es_psi: r[19],
            es_z: r[20],
            es_x: r[21],
            es_y: r[22],
            thf_roll: r[23],
            thg_roll: r[24],
            thf_pitch: r[25],
            thg_pitch: r[26],
            thf_yaw: r[27],
            thg_yaw: r[28],
            thf_alt: r[29],
            thg_alt: r[30],
            thg_x: r[31],
            thg_y: r[32],
        }
    }
}

/// Full per-step trace of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
}

impl RunLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(CSV_HEADER)?;
        for rec in &self.records {
            let row = rec.to_row();
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?;
        if header.len() != CSV_HEADER.len() {
            return Err(Error::InvalidInput(format!(
                "{}: expected {} columns, found {}",
                path.display(),
                CSV_HEADER.len(),
                header.len()
            )));
        }
        let mut records = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut row = [0.0; 33];
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = rec[i].parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("{}: bad float {:?}", path.display(), &rec[i]))
                })?;
            }
            records.push(StepRecord::from_row(row));
        }
        Ok(Self { records })
    }
}

/// Per-channel summary statistic; channels a scenario does not track stay
/// `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelStats {
    pub phi: Option<f64>,
    pub theta: Option<f64>,
    pub psi: Option<f64>,
    pub z: Option<f64>,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

/// Summary of one run. Errors are in SI units (radians, meters); mean
/// squared errors are taken over every control instant of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    pub mode: ScenarioMode,
    pub controller: ControllerKind,
    pub disturbance: String,
    pub seed: u64,
    pub duration: f64,
    pub dt: f64,
    pub mse: ChannelStats,
    pub rmse: ChannelStats,
    pub final_abs_error: ChannelStats,
    /// Total variation of the roll torque, a chattering measure.
    pub control_total_variation: f64,
    /// Times a commanded tilt left the valid command range (arcsine
    /// domain or tilt limit) and was clamped.
    pub clamp_events: usize,
}

impl RunMetrics {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Live view of one step for observers: the logged record plus the
/// adaptive internals of the rotational loops.
pub struct AxisProbe<'a> {
    pub e: f64,
    pub e_s: f64,
    pub e_eps: f64,
    pub u_eq: f64,
    pub theta_f: &'a [f64],
    pub theta_g: f64,
}

pub struct StepObservation<'a> {
    pub t: f64,
    pub record: &'a StepRecord,
    pub roll: AxisProbe<'a>,
    pub pitch: AxisProbe<'a>,
    pub yaw: AxisProbe<'a>,
    pub altitude: AxisProbe<'a>,
}

struct ControllerSet {
    roll: AttitudeController,
    pitch: AttitudeController,
    yaw: AttitudeController,
    alt: AltitudeController,
    pos_x: PositionController,
    pos_y: PositionController,
}

fn build_controllers(cfg: &ScenarioConfig, models: Option<&IdentResult>) -> Result<ControllerSet> {
    let g = &cfg.gains;
    let att = g.sliding(g.attitude);
    let alt = g.sliding(g.altitude);
    let pos = g.sliding(g.position);
    match cfg.controller {
        ControllerKind::Exact => Ok(ControllerSet {
            roll: AttitudeController::exact(AttitudeChannel::Roll, &cfg.plant, att),
            pitch: AttitudeController::exact(AttitudeChannel::Pitch, &cfg.plant, att),
            yaw: AttitudeController::exact(AttitudeChannel::Yaw, &cfg.plant, att),
            alt: AltitudeController::exact(&cfg.plant, alt),
            pos_x: PositionController::exact(&cfg.plant, pos),
            pos_y: PositionController::exact(&cfg.plant, pos),
        }),
        kind => {
            let result = models.ok_or_else(|| {
                Error::InvalidInput(format!(
                    "controller `{}` requires identified models",
                    kind.name()
                ))
            })?;
            let model_kind = match kind {
                ControllerKind::T1fc => ModelKind::Type1,
                ControllerKind::Ivfc => ModelKind::Interval,
                ControllerKind::Exact => unreachable!(),
            };
            let m = result.models(model_kind);
            let coeffs = derived_coeffs(&cfg.plant);
            let build = |channel: AttitudeChannel, model| {
                AttitudeController::from_model(
                    channel,
                    model,
                    channel.input_gain(&coeffs),
                    att,
                    g.attitude.eta_f,
                    g.attitude.eta_g,
                )
            };
            Ok(ControllerSet {
                roll: build(AttitudeChannel::Roll, m.f_phi)?,
                pitch: build(AttitudeChannel::Pitch, m.f_theta)?,
                yaw: build(AttitudeChannel::Yaw, m.f_psi)?,
                alt: AltitudeController::new(&cfg.plant, alt, g.altitude.eta_f, g.altitude.eta_g),
                pos_x: PositionController::new(&cfg.plant, pos, g.position.eta_g),
                pos_y: PositionController::new(&cfg.plant, pos, g.position.eta_g),
            })
        }
    }
}

/// Commanded roll/pitch offsets active at time `t`.
fn angle_offsets(spec: &DisturbanceSpec, t: f64) -> (f64, f64) {
    match spec {
        DisturbanceSpec::AdditiveAngle {
            d_phi,
            phi_start,
            phi_end,
            d_theta,
            theta_start,
            theta_end,
        } => {
            let phi = if t >= *phi_start && t < *phi_end { *d_phi } else { 0.0 };
            let theta = if t >= *theta_start && t < *theta_end { *d_theta } else { 0.0 };
            (phi, theta)
        }
        _ => (0.0, 0.0),
    }
}

/// Simulated plant parameters inside the disturbance window, if any.
fn disturbed_params(cfg: &ScenarioConfig) -> Option<(crate::quadrotor::QuadParams, f64, f64)> {
    match cfg.disturbance {
        DisturbanceSpec::Param { d_jr, d_i, start, end } => {
            let mut p = cfg.plant;
            p.rotor_inertia *= 1.0 + d_jr;
            p.ixx *= 1.0 + d_i;
            p.iyy *= 1.0 + d_i;
            p.izz *= 1.0 + d_i;
            Some((p, start, end))
        }
        _ => None,
    }
}

/// Largest tilt magnitude the horizontal loops may command, in radians.
/// Keeps the commanded attitude inside the small-perturbation range the
/// rotational model assumes (and well inside the arcsine domain of the
/// tilt conversion).
const MAX_TILT_CMD: f64 = 0.5;

/// Natural frequency of the tilt-command shaper, in rad/s. Well above the
/// outer position loops (a few rad/s) so the shaper does not limit them,
/// well below the step rate (100 Hz) so command steps cannot alias into
/// derivative spikes.
const TILT_SHAPER_FREQ: f64 = 20.0;

/// Critically damped second-order tracker turning a possibly stepping
/// tilt command into a smooth reference with consistent rate and
/// acceleration.
#[derive(Default, Clone, Copy)]
struct TiltShaper {
    pos: f64,
    vel: f64,
}

impl TiltShaper {
    fn sample(&mut self, cmd: f64, dt: f64) -> RefSample {
        let wn = TILT_SHAPER_FREQ;
        let acc = |p: f64, v: f64| wn * wn * (cmd - p) - 2.0 * wn * v;
        // One classical RK4 step of the linear tracker dynamics.
        let (p0, v0) = (self.pos, self.vel);
        let (k1p, k1v) = (v0, acc(p0, v0));
        let (k2p, k2v) = (v0 + 0.5 * dt * k1v, acc(p0 + 0.5 * dt * k1p, v0 + 0.5 * dt * k1v));
        let (k3p, k3v) = (v0 + 0.5 * dt * k2v, acc(p0 + 0.5 * dt * k2p, v0 + 0.5 * dt * k2v));
        let (k4p, k4v) = (v0 + dt * k3v, acc(p0 + dt * k3p, v0 + dt * k3v));
        self.pos = p0 + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        self.vel = v0 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        RefSample { y: self.pos, dy: self.vel, ddy: acc(self.pos, self.vel) }
    }
}

struct ErrorAccum {
    sum_sq: f64,
    last_abs: f64,
    n: usize,
}

impl ErrorAccum {
    fn new() -> Self {
        Self { sum_sq: 0.0, last_abs: 0.0, n: 0 }
    }

    fn push(&mut self, e: f64) {
        self.sum_sq += e * e;
        self.last_abs = e.abs();
        self.n += 1;
    }

    fn mse(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum_sq / self.n as f64)
    }

    fn final_abs(&self) -> Option<f64> {
        (self.n > 0).then_some(self.last_abs)
    }
}

/// Runs the configured scenario. Identified models are required for the
/// fuzzy controller kinds and ignored by the exact baseline.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    models: Option<&IdentResult>,
) -> Result<(RunLog, RunMetrics)> {
    run_scenario_observed(cfg, models, |_| {})
}

/// Like [`run_scenario`], invoking `observer` after every control instant
/// with the fresh record and the adaptive internals.
pub fn run_scenario_observed(
    cfg: &ScenarioConfig,
    models: Option<&IdentResult>,
    mut observer: impl FnMut(&StepObservation),
) -> Result<(RunLog, RunMetrics)> {
    cfg.validate()?;
    let mut ctl = build_controllers(cfg, models)?;
    let disturbed = disturbed_params(cfg);
    let n_steps = (cfg.duration / cfg.dt).round() as usize;
    let dt = cfg.dt;
    let position_mode = cfg.mode == ScenarioMode::Position;

    let mut state = QuadState::from_array(cfg.initial_state);
    let mut log = RunLog { records: Vec::with_capacity(n_steps) };
    let mut acc_phi = ErrorAccum::new();
    let mut acc_theta = ErrorAccum::new();
    let mut acc_psi = ErrorAccum::new();
    let mut acc_z = ErrorAccum::new();
    let mut acc_x = ErrorAccum::new();
    let mut acc_y = ErrorAccum::new();
    let mut tv = 0.0;
    let mut prev_u_phi: Option<f64> = None;
    let mut clamp_events = 0usize;
    let mut shape_phi = TiltShaper::default();
    let mut shape_theta = TiltShaper::default();

    for k in 0..n_steps {
        let t = k as f64 * dt;
        let omega_r = cfg.omega_r.value(t);
        let (d_phi_cmd, d_theta_cmd) = angle_offsets(&cfg.disturbance, t);

        // Altitude loop first: its thrust feeds the horizontal loops.
        let z_ref = RefSample {
            y: cfg.refs.z.value(t),
            dy: cfg.refs.z.rate(t),
            ddy: cfg.refs.z.accel(t),
        };
        let alt_out = ctl.alt.control(&state, &z_ref, dt)?;
        let u_z = alt_out.u;

        // Attitude commands, either direct profiles or from the position
        // loops through the tilt conversion.
        let psi_ref = RefSample {
            y: cfg.refs.psi.value(t),
            dy: cfg.refs.psi.rate(t),
            ddy: cfg.refs.psi.accel(t),
        };
        let (phi_ref, theta_ref, x_out, y_out) = if position_mode {
            let x_ref = RefSample {
                y: cfg.refs.x.value(t),
                dy: cfg.refs.x.rate(t),
                ddy: cfg.refs.x.accel(t),
            };
            let y_ref = RefSample {
                y: cfg.refs.y.value(t),
                dy: cfg.refs.y.rate(t),
                ddy: cfg.refs.y.accel(t),
            };
            let x_out = ctl.pos_x.control(state.x, state.x_dot, &x_ref, u_z, dt)?;
            let y_out = ctl.pos_y.control(state.y, state.y_dot, &y_ref, u_z, dt)?;
            let des = desired_angles(x_out.u, y_out.u, psi_ref.y);
            let phi_cmd = des.phi_d.clamp(-MAX_TILT_CMD, MAX_TILT_CMD);
            let theta_cmd = des.theta_d.clamp(-MAX_TILT_CMD, MAX_TILT_CMD);
            if des.clamped || phi_cmd != des.phi_d || theta_cmd != des.theta_d {
                clamp_events += 1;
            }
            // Shape the undisturbed commands, then offset the values: the
            // perturbation must not inject derivative spikes.
            let mut phi_ref = shape_phi.sample(phi_cmd, dt);
            let mut theta_ref = shape_theta.sample(theta_cmd, dt);
            phi_ref.y += d_phi_cmd;
            theta_ref.y += d_theta_cmd;
            (phi_ref, theta_ref, Some(x_out), Some(y_out))
        } else {
            let phi_ref = RefSample {
                y: cfg.refs.phi.value(t) + d_phi_cmd,
                dy: cfg.refs.phi.rate(t),
                ddy: cfg.refs.phi.accel(t),
            };
            let theta_ref = RefSample {
                y: cfg.refs.theta.value(t) + d_theta_cmd,
                dy: cfg.refs.theta.rate(t),
                ddy: cfg.refs.theta.accel(t),
            };
            (phi_ref, theta_ref, None, None)
        };

        let roll_out = ctl.roll.control(&state, omega_r, &phi_ref, dt)?;
        let pitch_out = ctl.pitch.control(&state, omega_r, &theta_ref, dt)?;
        let yaw_out = ctl.yaw.control(&state, omega_r, &psi_ref, dt)?;

        acc_phi.push(roll_out.e);
        acc_theta.push(pitch_out.e);
        acc_psi.push(yaw_out.e);
        acc_z.push(alt_out.e);
        if let Some(o) = &x_out {
            acc_x.push(o.e);
        }
        if let Some(o) = &y_out {
            acc_y.push(o.e);
        }
        if let Some(p) = prev_u_phi {
            tv += (roll_out.u - p).abs();
        }
        prev_u_phi = Some(roll_out.u);

        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let zero = AxisOutput { u: 0.0, e: 0.0, e_s: 0.0, e_eps: 0.0, u_eq: 0.0 };
        let xo = x_out.as_ref().unwrap_or(&zero);
        let yo = y_out.as_ref().unwrap_or(&zero);
        let record = StepRecord {
            t,
            state,
            u_phi: roll_out.u,
            u_theta: pitch_out.u,
            u_psi: yaw_out.u,
            u_z,
            es_phi: roll_out.e_s,
            es_theta: pitch_out.e_s,
            es_psi: yaw_out.e_s,
            es_z: alt_out.e_s,
            es_x: xo.e_s,
            es_y: yo.e_s,
            thf_roll: norm(&ctl.roll.params.theta_f),
            thg_roll: ctl.roll.params.theta_g,
            thf_pitch: norm(&ctl.pitch.params.theta_f),
            thg_pitch: ctl.pitch.params.theta_g,
            thf_yaw: norm(&ctl.yaw.params.theta_f),
            thg_yaw: ctl.yaw.params.theta_g,
            thf_alt: norm(&ctl.alt.params.theta_f),
            thg_alt: ctl.alt.params.theta_g,
            thg_x: ctl.pos_x.params.theta_g,
            thg_y: ctl.pos_y.params.theta_g,
        };
        fn probe<'a>(out: &AxisOutput, theta_f: &'a [f64], theta_g: f64) -> AxisProbe<'a> {
            AxisProbe {
                e: out.e,
                e_s: out.e_s,
                e_eps: out.e_eps,
                u_eq: out.u_eq,
                theta_f,
                theta_g,
            }
        }
        observer(&StepObservation {
            t,
            record: &record,
            roll: probe(&roll_out, &ctl.roll.params.theta_f, ctl.roll.params.theta_g),
            pitch: probe(&pitch_out, &ctl.pitch.params.theta_f, ctl.pitch.params.theta_g),
            yaw: probe(&yaw_out, &ctl.yaw.params.theta_f, ctl.yaw.params.theta_g),
            altitude: probe(&alt_out, &ctl.alt.params.theta_f, ctl.alt.params.theta_g),
        });
        log.records.push(record);

        // Plant step, with the disturbed parameters inside their window.
        let inputs = ControlInputs {
            u_phi: roll_out.u,
            u_theta: pitch_out.u,
            u_psi: yaw_out.u,
            u_z,
            omega_r,
        };
        let params = match &disturbed {
            Some((p, start, end)) if t >= *start && t < *end => p,
            _ => &cfg.plant,
        };
        state = step(&state, &inputs, params, dt)?;
        if !state.is_finite() {
            return Err(Error::NonFiniteState { state: state.to_array().to_vec() });
        }
    }

    let stats = |f: fn(&ErrorAccum) -> Option<f64>,
                 a: &ErrorAccum,
                 b: &ErrorAccum,
                 c: &ErrorAccum,
                 d: &ErrorAccum,
                 e: &ErrorAccum,
                 g: &ErrorAccum| ChannelStats {
        phi: f(a),
        theta: f(b),
        psi: f(c),
        z: f(d),
        x: f(e),
        y: f(g),
    };
    let mse = stats(ErrorAccum::mse, &acc_phi, &acc_theta, &acc_psi, &acc_z, &acc_x, &acc_y);
    let sqrt_stats = |s: ChannelStats| ChannelStats {
        phi: s.phi.map(f64::sqrt),
        theta: s.theta.map(f64::sqrt),
        psi: s.psi.map(f64::sqrt),
        z: s.z.map(f64::sqrt),
        x: s.x.map(f64::sqrt),
        y: s.y.map(f64::sqrt),
    };
    let metrics = RunMetrics {
        label: cfg.run_label(),
        mode: cfg.mode,
        controller: cfg.controller,
        disturbance: cfg.disturbance.slug(),
        seed: cfg.ident.seed,
        duration: cfg.duration,
        dt: cfg.dt,
        mse,
        rmse: sqrt_stats(mse),
        final_abs_error: stats(
            ErrorAccum::final_abs,
            &acc_phi,
            &acc_theta,
            &acc_psi,
            &acc_z,
            &acc_x,
            &acc_y,
        ),
        control_total_variation: tv,
        clamp_events,
    };
    Ok((log, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ScenarioConfig;

    fn quick(mode: ScenarioMode, duration: f64) -> ScenarioConfig {
        ScenarioConfig {
            mode,
            controller: ControllerKind::Exact,
            duration,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn fuzzy_kind_without_models_is_rejected() {
        let cfg = ScenarioConfig {
            controller: ControllerKind::Ivfc,
            ..ScenarioConfig::default()
        };
        assert!(run_scenario(&cfg, None).is_err());
    }

    #[test]
    fn attitude_mode_tracks_only_rotational_channels() {
        let cfg = quick(ScenarioMode::Attitude, 1.0);
        let (log, metrics) = run_scenario(&cfg, None).unwrap();
        assert_eq!(log.records.len(), 100);
        assert!(metrics.mse.phi.is_some());
        assert!(metrics.mse.z.is_some());
        assert!(metrics.mse.x.is_none());
        assert!(metrics.mse.y.is_none());
        assert_eq!(metrics.clamp_events, 0);
    }

    #[test]
    fn position_mode_tracks_all_channels() {
        let cfg = quick(ScenarioMode::Position, 1.0);
        let (_, metrics) = run_scenario(&cfg, None).unwrap();
        assert!(metrics.mse.x.is_some());
        assert!(metrics.mse.y.is_some());
        assert!(metrics.mse.phi.is_some());
    }

    #[test]
    fn mse_matches_hand_recomputation_from_the_log() {
        let cfg = quick(ScenarioMode::Attitude, 0.5);
        let (log, metrics) = run_scenario(&cfg, None).unwrap();
        let mut sum_sq = 0.0;
        for rec in &log.records {
            let e = cfg.refs.phi.value(rec.t) - rec.state.phi;
            sum_sq += e * e;
        }
        let expected = sum_sq / log.records.len() as f64;
        let got = metrics.mse.phi.unwrap();
        assert!((got - expected).abs() <= 1e-15 * expected.max(1.0));
        assert_eq!(metrics.rmse.phi.unwrap(), got.sqrt());
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = quick(ScenarioMode::Attitude, 0.5);
        let (a, ma) = run_scenario(&cfg, None).unwrap();
        let (b, mb) = run_scenario(&cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
    }

    #[test]
    fn param_disturbance_applies_only_inside_its_window() {
        let mut cfg = quick(ScenarioMode::Attitude, 2.0);
        cfg.disturbance = DisturbanceSpec::Param {
            d_jr: 0.5,
            d_i: 0.2,
            start: 1.0,
            end: 1.5,
        };
        let (log, _) = run_scenario(&cfg, None).unwrap();
        // Outside the window, stepping the logged state with the nominal
        // plant must reproduce the next logged state exactly.
        for pair in log.records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let inside = a.t >= 1.0 && a.t < 1.5;
            let inputs = ControlInputs {
                u_phi: a.u_phi,
                u_theta: a.u_theta,
                u_psi: a.u_psi,
                u_z: a.u_z,
                omega_r: cfg.omega_r.value(a.t),
            };
            let nominal_next = step(&a.state, &inputs, &cfg.plant, cfg.dt).unwrap();
            let diff = nominal_next
                .to_array()
                .iter()
                .zip(b.state.to_array())
                .map(|(p, q)| (p - q).abs())
                .fold(0.0_f64, f64::max);
            if inside {
                assert!(diff > 0.0, "disturbance had no effect at t = {}", a.t);
            } else {
                assert_eq!(diff, 0.0, "nominal step mismatch at t = {}", a.t);
            }
        }
    }

    #[test]
    fn angle_disturbance_offsets_the_command_value() {
        let mut cfg = quick(ScenarioMode::Attitude, 1.0);
        cfg.disturbance = DisturbanceSpec::AdditiveAngle {
            d_phi: 0.25,
            phi_start: 0.4,
            phi_end: 0.6,
            d_theta: 0.0,
            theta_start: 0.0,
            theta_end: 0.0,
        };
        let (log_d, _) = run_scenario(&cfg, None).unwrap();
        cfg.disturbance = DisturbanceSpec::None;
        let (log_n, _) = run_scenario(&cfg, None).unwrap();
        // Identical up to the window start.
        let k_start = (0.4 / cfg.dt) as usize;
        assert_eq!(log_d.records[..k_start], log_n.records[..k_start]);
        assert_ne!(log_d.records[k_start + 1], log_n.records[k_start + 1]);
    }

    #[test]
    fn log_csv_round_trip_is_exact() {
        let cfg = quick(ScenarioMode::Position, 0.3);
        let (log, metrics) = run_scenario(&cfg, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let log_path = dir.path().join("run.csv");
        log.write_csv(&log_path).unwrap();
        assert_eq!(RunLog::read_csv(&log_path).unwrap(), log);
        let metrics_path = dir.path().join("metrics.json");
        metrics.save(&metrics_path).unwrap();
        assert_eq!(RunMetrics::load(&metrics_path).unwrap(), metrics);
    }

    #[test]
    fn observer_sees_every_step() {
        let cfg = quick(ScenarioMode::Attitude, 0.2);
        let mut count = 0;
        let mut last_t = -1.0;
        run_scenario_observed(&cfg, None, |obs| {
            count += 1;
            assert!(obs.t > last_t);
            last_t = obs.t;
            assert_eq!(obs.record.t, obs.t);
        })
        .unwrap();
        assert_eq!(count, 20);
    }
}
