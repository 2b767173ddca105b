//! Built-in case-study models: a rigid satellite with redundant torque
//! actuators and a cart with an inverted pendulum.

use std::f64::consts::PI;

use crate::error::Result;
use crate::lti::{augment_disturbances_ct, c2d_tustin, c2d_zoh, CtStateSpace, DtStateSpace};
use crate::numerics::{mat, Mat};

/// Satellite sample period (s).
pub const SATELLITE_TS: f64 = 0.25;
/// Satellite inertia (kg·m²).
pub const SATELLITE_J: f64 = 500.0;
/// Dipole parameter used for the satellite filter-form design.
pub const SATELLITE_DIPOLE_W: f64 = 50.0;

/// Rigid-body attitude, angles in degrees, two identical torque inputs and a
/// constant torque disturbance state. Output: attitude in radians.
pub fn satellite_ct() -> Result<CtStateSpace> {
    let k = 180.0 / PI / SATELLITE_J;
    let body = CtStateSpace::new(
        mat(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        mat(2, 2, &[0.0, 0.0, k, k]),
        mat(1, 2, &[PI / 180.0, 0.0]),
        Mat::zeros(1, 2),
    )?;
    augment_disturbances_ct(&body, &mat(2, 1, &[0.0, k]))
}

/// Zero-order-hold satellite model at Ts = 0.25 s (three states, last one the disturbance).
pub fn satellite() -> Result<DtStateSpace> {
    c2d_zoh(&satellite_ct()?, SATELLITE_TS)
}

/// Number of trailing disturbance states in [`satellite`].
pub const SATELLITE_DISTURBANCE_STATES: usize = 1;

/// Baseline discrete satellite controller (one output measured, two torque commands;
/// only the first torque is used).
///
/// The integrator is kept exact (1.41175 = 1 + 0.5·0.8235) and the output
/// coefficients are refined so that the closed-loop poles with the plant above
/// agree with the published four-digit values.
pub fn satellite_controller() -> Result<DtStateSpace> {
    DtStateSpace::new(
        mat(2, 2, &[1.41175, -0.8235, 0.5, 0.0]),
        mat(2, 1, &[32.0, 0.0]),
        mat(2, 2, &[13.0170, -26.1490, 0.0, 0.0]),
        mat(2, 1, &[-871.2547, 0.0]),
        SATELLITE_TS,
    )
}

/// Pendulum physical parameters.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PendulumParams {
    pub cart_mass: f64,
    pub bob_mass: f64,
    pub length: f64,
    pub gravity: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            cart_mass: 0.5,
            bob_mass: 0.5,
            length: 1.0,
            gravity: 9.81,
        }
    }
}

/// Pendulum sample period (s).
pub const PENDULUM_TS: f64 = 0.1;

/// Linearisation about the upright equilibrium; states [x, ẋ, θ, θ̇], force input,
/// outputs cart position and angle.
pub fn pendulum_ct(p: &PendulumParams) -> Result<CtStateSpace> {
    let (mc, m, l, g) = (p.cart_mass, p.bob_mass, p.length, p.gravity);
    CtStateSpace::new(
        mat(
            4,
            4,
            &[
                0.0,
                1.0,
                0.0,
                0.0,
                0.0,
                0.0,
                -m * g / mc,
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
                0.0,
                0.0,
                (mc + m) * g / (mc * l),
                0.0,
            ],
        ),
        mat(4, 1, &[0.0, 1.0 / mc, 0.0, -1.0 / (mc * l)]),
        mat(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        Mat::zeros(2, 1),
    )
}

pub fn pendulum() -> Result<DtStateSpace> {
    c2d_zoh(&pendulum_ct(&PendulumParams::default())?, PENDULUM_TS)
}

/// K₀(s) = [4(s+0.2)/(s+5), 150(s+4)/(s+30)], used with positive feedback u = K·y.
pub fn pendulum_controller_ct() -> Result<CtStateSpace> {
    CtStateSpace::new(
        mat(2, 2, &[-5.0, 0.0, 0.0, -30.0]),
        mat(2, 2, &[40.0, 0.0, 0.0, 640.0]),
        mat(1, 2, &[-0.48, -6.09375]),
        mat(1, 2, &[4.0, 150.0]),
    )
}

/// Tustin discretisation of [`pendulum_controller_ct`] at Ts = 0.1 s.
pub fn pendulum_controller() -> Result<DtStateSpace> {
    c2d_tustin(&pendulum_controller_ct()?, PENDULUM_TS)
}
