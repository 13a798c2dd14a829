//! Scenario and identification configuration, loadable from TOML.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::{SlidingConfig, SurfaceForm, Switching};
use crate::quadrotor::QuadParams;
use crate::{Error, Result};

/// A reference (or excitation) signal over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant { value: f64 },
    Sinusoid { amplitude: f64, frequency: f64, phase: f64 },
    /// A sinusoid overridden by a constant inside `[hold_start, hold_end)`;
    /// the commanded rate and acceleration are zero during the hold.
    SinusoidWithHold {
        amplitude: f64,
        frequency: f64,
        phase: f64,
        hold_value: f64,
        hold_start: f64,
        hold_end: f64,
    },
}

impl Profile {
    fn in_hold(&self, t: f64) -> bool {
        matches!(self, Profile::SinusoidWithHold { hold_start, hold_end, .. }
            if t >= *hold_start && t < *hold_end)
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Sinusoid { amplitude, frequency, phase } => {
                amplitude * (frequency * t + phase).sin()
            }
            Profile::SinusoidWithHold { amplitude, frequency, phase, hold_value, .. } => {
                if self.in_hold(t) {
                    *hold_value
                } else {
                    amplitude * (frequency * t + phase).sin()
                }
            }
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            Profile::Constant { .. } => 0.0,
            Profile::Sinusoid { amplitude, frequency, phase }
            | Profile::SinusoidWithHold { amplitude, frequency, phase, .. } => {
                if self.in_hold(t) {
                    0.0
                } else {
                    amplitude * frequency * (frequency * t + phase).cos()
                }
            }
        }
    }

    pub fn accel(&self, t: f64) -> f64 {
        match self {
            Profile::Constant { .. } => 0.0,
            Profile::Sinusoid { amplitude, frequency, phase }
            | Profile::SinusoidWithHold { amplitude, frequency, phase, .. } => {
                if self.in_hold(t) {
                    0.0
                } else {
                    -amplitude * frequency * frequency * (frequency * t + phase).sin()
                }
            }
        }
    }
}

/// What perturbs the nominal run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    #[default]
    None,
    /// Plant-parameter deltas inside `[start, end)`: rotor inertia scaled
    /// by `1 + d_jr`, all three body inertias by `1 + d_i`.
    Param { d_jr: f64, d_i: f64, start: f64, end: f64 },
    /// Additive steps on the commanded roll and pitch angles, each inside
    /// its own window.
    AdditiveAngle {
        d_phi: f64,
        phi_start: f64,
        phi_end: f64,
        d_theta: f64,
        theta_start: f64,
        theta_end: f64,
    },
}

impl DisturbanceSpec {
    pub fn validate(&self, duration: f64) -> Result<()> {
        let window = |name: &str, start: f64, end: f64| -> Result<()> {
            if !(0.0..=duration).contains(&start) || !(start..=duration).contains(&end) {
                return Err(Error::InvalidInput(format!(
                    "{name} window [{start}, {end}] must lie within [0, {duration}]"
                )));
            }
            Ok(())
        };
        match self {
            DisturbanceSpec::None => Ok(()),
            DisturbanceSpec::Param { d_jr, d_i, start, end } => {
                if *d_jr < 0.0 || *d_i < 0.0 {
                    return Err(Error::InvalidInput(
                        "parameter disturbance fractions must be nonnegative".into(),
                    ));
                }
                window("parameter disturbance", *start, *end)
            }
            DisturbanceSpec::AdditiveAngle {
                phi_start, phi_end, theta_start, theta_end, ..
            } => {
                window("roll-command disturbance", *phi_start, *phi_end)?;
                window("pitch-command disturbance", *theta_start, *theta_end)
            }
        }
    }

    /// Short token for labels and file names.
    pub fn slug(&self) -> String {
        match self {
            DisturbanceSpec::None => "none".into(),
            DisturbanceSpec::Param { d_jr, d_i, start, end } => {
                format!("param-djr{:02}-di{:02}-{start}s-{end}s", (d_jr * 100.0).round(),
                    (d_i * 100.0).round())
            }
            DisturbanceSpec::AdditiveAngle { d_phi, d_theta, .. } => {
                format!("angle-dphi{d_phi}-dtheta{d_theta}")
            }
        }
    }
}

fn parse_kv(body: &str, kind: &str) -> Result<std::collections::HashMap<String, f64>> {
    let mut map = std::collections::HashMap::new();
    for part in body.split(',') {
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!(
                "disturbance field `{part}` in `{kind}` spec is not key=value"
            ))
        })?;
        let value: f64 = value.trim().parse().map_err(|_| {
            Error::InvalidInput(format!("disturbance field `{key}` has non-numeric value"))
        })?;
        map.insert(key.trim().to_string(), value);
    }
    Ok(map)
}

impl FromStr for DisturbanceSpec {
    type Err = Error;

    /// Compact CLI form:
    /// `none`,
    /// `param:d_jr=0.2,d_i=0,start=12,end=14`,
    /// `angle:d_phi=0.25,phi_start=8,phi_end=8.5,d_theta=0.25,theta_start=9,theta_end=9.5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(DisturbanceSpec::None);
        }
        let (kind, body) = s.split_once(':').ok_or_else(|| {
            Error::InvalidInput(format!("disturbance spec `{s}` must be none, param:... or angle:..."))
        })?;
        let mut map = parse_kv(body, kind)?;
        let mut take = |key: &str| {
            map.remove(key)
                .ok_or_else(|| Error::InvalidInput(format!("disturbance spec missing `{key}`")))
        };
        let spec = match kind {
            "param" => DisturbanceSpec::Param {
                d_jr: take("d_jr")?,
                d_i: take("d_i")?,
                start: take("start")?,
                end: take("end")?,
            },
            "angle" => DisturbanceSpec::AdditiveAngle {
                d_phi: take("d_phi")?,
                phi_start: take("phi_start")?,
                phi_end: take("phi_end")?,
                d_theta: take("d_theta")?,
                theta_start: take("theta_start")?,
                theta_end: take("theta_end")?,
            },
            other => {
                return Err(Error::InvalidInput(format!("unknown disturbance kind `{other}`")))
            }
        };
        if let Some(extra) = map.keys().next() {
            return Err(Error::InvalidInput(format!("unknown disturbance field `{extra}`")));
        }
        Ok(spec)
    }
}

/// Which drift models drive the attitude loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Type-1 fuzzy models.
    T1fc,
    /// Interval-valued fuzzy models.
    #[default]
    Ivfc,
    /// True drift functions with frozen true gains (baseline, no fuzzy part).
    Exact,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::T1fc => "t1fc",
            ControllerKind::Ivfc => "ivfc",
            ControllerKind::Exact => "exact",
        }
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t1fc" => Ok(ControllerKind::T1fc),
            "ivfc" => Ok(ControllerKind::Ivfc),
            "exact" => Ok(ControllerKind::Exact),
            other => Err(Error::InvalidInput(format!(
                "unknown controller kind `{other}` (expected t1fc, ivfc or exact)"
            ))),
        }
    }
}

/// Whether the scenario tracks attitude references directly or closes the
/// horizontal-position loops around them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioMode {
    #[default]
    Attitude,
    Position,
}

impl ScenarioMode {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioMode::Attitude => "attitude",
            ScenarioMode::Position => "position",
        }
    }
}

/// Gains of one control loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopGains {
    pub k0: f64,
    pub gamma: f64,
    pub eta_f: f64,
    pub eta_g: f64,
}

impl Default for LoopGains {
    fn default() -> Self {
        Self { k0: 1.0, gamma: 10.0, eta_f: 2.0, eta_g: 0.5 }
    }
}

/// All controller gains. Shared sliding-mode settings plus per-loop gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainConfig {
    pub epsilon: f64,
    pub w_f: f64,
    pub w_g: f64,
    pub switching: Switching,
    pub surface: SurfaceForm,
    pub attitude: LoopGains,
    pub altitude: LoopGains,
    pub position: LoopGains,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            w_f: 0.1,
            w_g: 0.1,
            switching: Switching::Sat,
            surface: SurfaceForm::default(),
            attitude: LoopGains::default(),
            altitude: LoopGains { k0: 1.0, gamma: 10.0, eta_f: 1.0, eta_g: 0.05 },
            position: LoopGains { k0: 5.0, gamma: 2.0, eta_f: 0.0, eta_g: 0.05 },
        }
    }
}

impl GainConfig {
    /// Sliding settings for one loop; `g0` is overridden downstream by the
    /// controller constructors from the nominal gains.
    pub fn sliding(&self, gains: LoopGains) -> SlidingConfig {
        SlidingConfig {
            k0: gains.k0,
            gamma: gains.gamma,
            epsilon: self.epsilon,
            w_f: self.w_f,
            w_g: self.w_g,
            g0: 0.1,
            switching: self.switching,
            surface: self.surface,
        }
    }
}

/// Identification settings: excitation, sampling, noise, clustering and
/// envelope passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentConfig {
    pub seed: u64,
    /// Rules per model.
    pub clusters: usize,
    pub fuzziness: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Envelope passes kept for the upper and lower sets.
    pub upper_passes: usize,
    pub lower_passes: usize,
    /// Identification / validation split sizes.
    pub n_ident: usize,
    pub n_valid: usize,
    pub dt: f64,
    /// Noise sigma as a fraction of each output's range.
    pub noise_frac: f64,
    /// Scale on the roll/pitch reference amplitude of the excitation
    /// flight (0.5 rad nominal).
    pub excitation_scale: f64,
    /// Peak yaw-rate reference of the excitation flight (yaw carries no
    /// angle constraint, so it provides most of the cross-coupling energy).
    pub yaw_rate_scale: f64,
    /// Amplitude of the exogenous rotor-residual excitation.
    pub omega_r_amplitude: f64,
}

impl Default for IdentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            clusters: 3,
            fuzziness: 2.0,
            tol: 1e-6,
            max_iter: 300,
            upper_passes: 2,
            lower_passes: 2,
            n_ident: 2000,
            n_valid: 2000,
            dt: 0.01,
            noise_frac: 0.05,
            excitation_scale: 1.0,
            yaw_rate_scale: 4.0,
            omega_r_amplitude: 600.0,
        }
    }
}

impl IdentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ident == 0 || self.n_valid == 0 {
            return Err(Error::InvalidInput("split sizes must be at least 1".into()));
        }
        if self.dt <= 0.0 {
            return Err(Error::InvalidInput("identification dt must be positive".into()));
        }
        if self.noise_frac < 0.0 {
            return Err(Error::InvalidInput("noise fraction must be nonnegative".into()));
        }
        if self.clusters == 0 {
            return Err(Error::InvalidInput("need at least one cluster".into()));
        }
        Ok(())
    }
}

/// Per-channel reference profiles. Attitude scenarios read `phi`, `theta`,
/// `psi`, `z`; position scenarios read `x`, `y`, `psi`, `z` and derive the
/// angle commands from the position loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSet {
    pub phi: Profile,
    pub theta: Profile,
    pub psi: Profile,
    pub z: Profile,
    pub x: Profile,
    pub y: Profile,
}

impl Default for ReferenceSet {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            phi: Profile::SinusoidWithHold {
                amplitude: 1.0,
                frequency: 1.0,
                phase: PI,
                hold_value: 0.0,
                hold_start: 10.0,
                hold_end: 12.0,
            },
            theta: Profile::SinusoidWithHold {
                amplitude: 1.0,
                frequency: 1.0,
                phase: 0.0,
                hold_value: 0.0,
                hold_start: 10.0,
                hold_end: 12.0,
            },
            psi: Profile::Constant { value: 0.2 },
            z: Profile::Constant { value: 1.0 },
            x: Profile::Sinusoid { amplitude: 1.0, frequency: 1.0, phase: 0.0 },
            y: Profile::Sinusoid { amplitude: 1.0, frequency: 1.0, phase: PI },
        }
    }
}

/// One closed-loop experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Optional run label; derived from the settings when empty.
    pub label: String,
    pub mode: ScenarioMode,
    pub controller: ControllerKind,
    pub duration: f64,
    pub dt: f64,
    pub disturbance: DisturbanceSpec,
    /// Exogenous rotor-speed residual driving the gyroscopic coupling.
    pub omega_r: Profile,
    pub refs: ReferenceSet,
    pub gains: GainConfig,
    pub ident: IdentConfig,
    pub plant: QuadParams,
    /// Initial state as `[phi, phi_dot, theta, theta_dot, psi, psi_dot,
    /// z, z_dot, x, x_dot, y, y_dot]`.
    pub initial_state: [f64; 12],
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            label: String::new(),
            mode: ScenarioMode::Attitude,
            controller: ControllerKind::Ivfc,
            duration: 20.0,
            dt: 0.01,
            disturbance: DisturbanceSpec::None,
            omega_r: Profile::Sinusoid { amplitude: 200.0, frequency: 1.3, phase: 0.0 },
            refs: ReferenceSet::default(),
            gains: GainConfig::default(),
            ident: IdentConfig::default(),
            plant: QuadParams::default(),
            initial_state: [0.0; 12],
        }
    }
}

impl ScenarioConfig {
    /// The default attitude scenario: sinusoidal roll/pitch with a hold
    /// window, constant yaw and altitude references.
    pub fn attitude_nominal() -> Self {
        Self::default()
    }

    /// The default position scenario: sinusoidal x/y references, constant
    /// yaw and altitude.
    pub fn position_nominal() -> Self {
        Self { mode: ScenarioMode::Position, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration <= 0.0 || self.dt <= 0.0 {
            return Err(Error::InvalidInput("duration and dt must be positive".into()));
        }
        if self.dt > self.duration {
            return Err(Error::InvalidInput("dt must not exceed the duration".into()));
        }
        self.disturbance.validate(self.duration)?;
        self.ident.validate()?;
        self.gains.sliding(self.gains.attitude).validate()?;
        self.gains.sliding(self.gains.altitude).validate()?;
        self.gains.sliding(self.gains.position).validate()?;
        Ok(())
    }

    /// Run label: the configured one, or one derived from the settings.
    pub fn run_label(&self) -> String {
        if !self.label.is_empty() {
            return self.label.clone();
        }
        format!(
            "{}-{}-{}-seed{}",
            self.mode.name(),
            self.controller.name(),
            self.disturbance.slug(),
            self.ident.seed
        )
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            Error::InvalidInput(format!("config parse error: {e}"))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}
