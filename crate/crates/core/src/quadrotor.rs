//! Twelve-state rigid-body quadrotor model with a fixed-step RK4 integrator.
//!
//! State order is `(phi, phi_dot, theta, theta_dot, psi, psi_dot, z, z_dot,
//! x, x_dot, y, y_dot)`: roll, pitch, yaw and their rates, then altitude and
//! the horizontal positions with their rates. The altitude axis is oriented
//! so gravity enters `z_ddot` with a positive sign and thrust with a
//! negative one; the controllers account for the inversion.
//!
//! Rotational cross-coupling uses the standard inertia ratios `a1..a5`, the
//! gyroscopic terms scale with the rotor-speed residual `omega_r`, and the
//! torque/thrust inputs enter through `b1..b3` and `1/m`. The integrator
//! holds the inputs constant over each step (zero-order hold).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Physical parameters of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    /// Roll-axis inertia (kg m^2).
    pub ixx: f64,
    /// Pitch-axis inertia (kg m^2).
    pub iyy: f64,
    /// Yaw-axis inertia (kg m^2).
    pub izz: f64,
    /// Total mass (kg).
    pub mass: f64,
    /// Arm length (m).
    pub arm: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
    /// Rotor inertia (kg m^2).
    pub rotor_inertia: f64,
    /// Drag factor (N m s^2).
    pub drag_factor: f64,
    /// Thrust factor (N s^2).
    pub thrust_factor: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            ixx: 0.18,
            iyy: 0.18,
            izz: 0.09,
            mass: 1.2,
            arm: 0.23,
            gravity: 9.81,
            rotor_inertia: 1.32e-3,
            drag_factor: 1.1e-6,
            thrust_factor: 54.2e-6,
        }
    }
}

/// Coefficients of the equations of motion derived from [`QuadParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedCoeffs {
    /// `(iyy - izz) / ixx`, roll cross-coupling.
    pub a1: f64,
    /// `jr / ixx`, roll gyroscopic gain.
    pub a2: f64,
    /// `(izz - ixx) / iyy`, pitch cross-coupling.
    pub a3: f64,
    /// `jr / iyy`, pitch gyroscopic gain.
    pub a4: f64,
    /// `(ixx - iyy) / izz`, yaw cross-coupling.
    pub a5: f64,
    /// `arm / ixx`, roll input gain.
    pub b1: f64,
    /// `arm / iyy`, pitch input gain.
    pub b2: f64,
    /// `1 / izz`, yaw input gain.
    pub b3: f64,
}

/// Computes the equation-of-motion coefficients for the given parameters.
pub fn derived_coeffs(p: &QuadParams) -> DerivedCoeffs {
    DerivedCoeffs {
        a1: (p.iyy - p.izz) / p.ixx,
        a2: p.rotor_inertia / p.ixx,
        a3: (p.izz - p.ixx) / p.iyy,
        a4: p.rotor_inertia / p.iyy,
        a5: (p.ixx - p.iyy) / p.izz,
        b1: p.arm / p.ixx,
        b2: p.arm / p.iyy,
        b3: 1.0 / p.izz,
    }
}

/// Full vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadState {
    pub phi: f64,
    pub phi_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub psi: f64,
    pub psi_dot: f64,
    pub z: f64,
    pub z_dot: f64,
    pub x: f64,
    pub x_dot: f64,
    pub y: f64,
    pub y_dot: f64,
}

impl QuadState {
    pub fn to_array(self) -> [f64; 12] {
        [
            self.phi, self.phi_dot, self.theta, self.theta_dot, self.psi, self.psi_dot, self.z,
            self.z_dot, self.x, self.x_dot, self.y, self.y_dot,
        ]
    }

    pub fn from_array(a: [f64; 12]) -> Self {
        Self {
            phi: a[0],
            phi_dot: a[1],
            theta: a[2],
            theta_dot: a[3],
            psi: a[4],
            psi_dot: a[5],
            z: a[6],
            z_dot: a[7],
            x: a[8],
            x_dot: a[9],
            y: a[10],
            y_dot: a[11],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Generalized inputs: three torque combinations, total thrust, and the
/// rotor-speed residual driving the gyroscopic terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInputs {
    /// Roll torque input.
    pub u_phi: f64,
    /// Pitch torque input.
    pub u_theta: f64,
    /// Yaw torque input.
    pub u_psi: f64,
    /// Total thrust input.
    pub u_z: f64,
    /// Rotor-speed residual `w1 - w2 + w3 - w4`.
    pub omega_r: f64,
}

impl ControlInputs {
    pub fn is_finite(&self) -> bool {
        [self.u_phi, self.u_theta, self.u_psi, self.u_z, self.omega_r]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Combines four rotor speeds into the generalized inputs.
///
/// With `squared` set, the torque and thrust combinations use the squared
/// speeds (aerodynamic forces scale with the square); the gyroscopic
/// residual stays linear in the speeds either way.
pub fn mix_motors(omegas: [f64; 4], squared: bool) -> ControlInputs {
    let s = |w: f64| if squared { w * w } else { w };
    ControlInputs {
        u_phi: s(omegas[0]) - s(omegas[2]),
        u_theta: s(omegas[3]) - s(omegas[1]),
        u_psi: s(omegas[0]) + s(omegas[2]) - s(omegas[1]) - s(omegas[3]),
        u_z: s(omegas[0]) + s(omegas[1]) + s(omegas[2]) + s(omegas[3]),
        omega_r: omegas[0] - omegas[1] + omegas[2] - omegas[3],
    }
}

/// Rotational drift terms as functions of the rates and rotor residual.
///
/// These are the nonlinear functions the fuzzy models identify:
/// `f_phi(theta_dot, psi_dot, omega_r)`, `f_theta(phi_dot, psi_dot,
/// omega_r)` and `f_psi(theta_dot, phi_dot)`.
pub fn f_phi(c: &DerivedCoeffs, theta_dot: f64, psi_dot: f64, omega_r: f64) -> f64 {
    theta_dot * psi_dot * c.a1 + theta_dot * c.a2 * omega_r
}

pub fn f_theta(c: &DerivedCoeffs, phi_dot: f64, psi_dot: f64, omega_r: f64) -> f64 {
    phi_dot * psi_dot * c.a3 + phi_dot * c.a4 * omega_r
}

pub fn f_psi(c: &DerivedCoeffs, theta_dot: f64, phi_dot: f64) -> f64 {
    theta_dot * phi_dot * c.a5
}

/// Thrust direction cosines for the horizontal axes.
pub fn u_x_coupling(phi: f64, theta: f64, psi: f64) -> f64 {
    phi.cos() * theta.sin() * psi.cos() - phi.sin() * psi.sin()
}

pub fn u_y_coupling(phi: f64, theta: f64, psi: f64) -> f64 {
    phi.cos() * theta.sin() * psi.sin() - phi.sin() * psi.cos()
}

/// State derivative under the given inputs. Rejects non-finite inputs.
pub fn dynamics(s: &QuadState, u: &ControlInputs, p: &QuadParams) -> Result<[f64; 12]> {
    if !s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "non-finite state passed to dynamics: {:?}",
            s.to_array()
        )));
    }
    if !u.is_finite() {
        return Err(Error::InvalidInput(format!(
            "non-finite inputs passed to dynamics: {u:?}"
        )));
    }
    let c = derived_coeffs(p);
    let thrust_per_mass = u.u_z / p.mass;
    Ok([
        s.phi_dot,
        f_phi(&c, s.theta_dot, s.psi_dot, u.omega_r) + c.b1 * u.u_phi,
        s.theta_dot,
        f_theta(&c, s.phi_dot, s.psi_dot, u.omega_r) + c.b2 * u.u_theta,
        s.psi_dot,
        f_psi(&c, s.theta_dot, s.phi_dot) + c.b3 * u.u_psi,
        s.z_dot,
        p.gravity - s.phi.cos() * s.theta.cos() * thrust_per_mass,
        s.x_dot,
        u_x_coupling(s.phi, s.theta, s.psi) * thrust_per_mass,
        s.y_dot,
        u_y_coupling(s.phi, s.theta, s.psi) * thrust_per_mass,
    ])
}

/// Advances the state by one RK4 step of size `dt` with the inputs held
/// constant over the step. Errors if the result is non-finite.
pub fn step(s: &QuadState, u: &ControlInputs, p: &QuadParams, dt: f64) -> Result<QuadState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
    }
    let y0 = s.to_array();
    let stage = |st: QuadState| -> Result<QuadState> {
        if st.is_finite() {
            Ok(st)
        } else {
            Err(Error::NonFiniteState { state: st.to_array().to_vec() })
        }
    };
    let k1 = dynamics(s, u, p)?;
    let k2 = dynamics(&stage(offset(&y0, &k1, dt / 2.0))?, u, p)?;
    let k3 = dynamics(&stage(offset(&y0, &k2, dt / 2.0))?, u, p)?;
    let k4 = dynamics(&stage(offset(&y0, &k3, dt))?, u, p)?;
    let mut out = [0.0; 12];
    for i in 0..12 {
        out[i] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let next = QuadState::from_array(out);
    if !next.is_finite() {
        return Err(Error::NonFiniteState { state: out.to_vec() });
    }
    Ok(next)
}

fn offset(y: &[f64; 12], k: &[f64; 12], h: f64) -> QuadState {
    let mut out = [0.0; 12];
    for i in 0..12 {
        out[i] = y[i] + h * k[i];
    }
    QuadState::from_array(out)
}
