//! Two-link acrobot (Sutton, 1996) in the "book" parameterization,
//! integrated with one fourth-order Runge-Kutta step per action.
//!
//! State `[theta1, theta2, dtheta1, dtheta2]`; observation is
//! `[cos t1, sin t1, cos t2, sin t2, dt1, dt2]`. Actions apply torque
//! -1, 0 or +1 at the middle joint. Reward is -1 per step and 0 on the step
//! that raises the tip above the goal line.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::EnvParams;

pub const DT: f64 = 0.2;
pub const LINK_COM_POS_2: f64 = 0.5;
pub const LINK_MOI: f64 = 1.0;
pub const MAX_VEL_1: f64 = 4.0 * PI;
pub const MAX_VEL_2: f64 = 9.0 * PI;
const GRAVITY: f64 = 9.8;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

#[derive(Debug, Clone)]
pub struct Acrobot {
    pub link_length_1: f64,
    pub link_com_pos_1: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub(super) state: [f64; 4],
}

impl Acrobot {
    pub fn new(params: &EnvParams) -> Self {
        Self {
            link_length_1: params.value("link_length_1"),
            link_com_pos_1: params.value("link_com_pos_1"),
            link_mass_1: params.value("link_mass_1"),
            link_mass_2: params.value("link_mass_2"),
            state: [0.0; 4],
        }
    }

    pub(super) fn reset(&mut self, rng: &mut ChaCha8Rng) {
        for v in &mut self.state {
            *v = rng.gen_range(-0.1..=0.1);
        }
    }

    fn derivs(&self, s: &[f64; 4], torque: f64) -> [f64; 4] {
        let (m1, m2) = (self.link_mass_1, self.link_mass_2);
        let (l1, lc1, lc2) = (self.link_length_1, self.link_com_pos_1, LINK_COM_POS_2);
        let (i1, i2) = (LINK_MOI, LINK_MOI);
        let g = GRAVITY;
        let [theta1, theta2, dtheta1, dtheta2] = *s;

        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
        let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
        let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
            - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
            + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
            + phi2;
        let ddtheta2 = (torque + d2 / d1 * phi1
            - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin()
            - phi2)
            / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
        [dtheta1, dtheta2, ddtheta1, ddtheta2]
    }

    pub(super) fn step(&mut self, action: usize) -> (f64, bool) {
        let torque = TORQUES[action];
        let y0 = self.state;
        let axpy = |y: &[f64; 4], h: f64, k: &[f64; 4]| -> [f64; 4] {
            [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3]]
        };
        let half = DT / 2.0;
        let k1 = self.derivs(&y0, torque);
        let k2 = self.derivs(&axpy(&y0, half, &k1), torque);
        let k3 = self.derivs(&axpy(&y0, half, &k2), torque);
        let k4 = self.derivs(&axpy(&y0, DT, &k3), torque);
        let mut ns = [0.0; 4];
        for i in 0..4 {
            ns[i] = y0[i] + DT / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        ns[0] = wrap(ns[0], -PI, PI);
        ns[1] = wrap(ns[1], -PI, PI);
        ns[2] = ns[2].clamp(-MAX_VEL_1, MAX_VEL_1);
        ns[3] = ns[3].clamp(-MAX_VEL_2, MAX_VEL_2);
        self.state = ns;

        let terminated = -ns[0].cos() - (ns[1] + ns[0]).cos() > 1.0;
        (if terminated { 0.0 } else { -1.0 }, terminated)
    }

    pub(super) fn observe(&self) -> Vec<f64> {
        let [t1, t2, d1, d2] = self.state;
        vec![t1.cos(), t1.sin(), t2.cos(), t2.sin(), d1, d2]
    }
}

fn wrap(mut x: f64, lo: f64, hi: f64) -> f64 {
    let diff = hi - lo;
    while x > hi {
        x -= diff;
    }
    while x < lo {
        x += diff;
    }
    x
}
