use crate::math::{cos, sin};
use crate::rng::SeededRng;

/// Two-link underactuated pendulum (Spong), torque on the elbow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcrobotParams {
    pub link_mass: [f64; 2],
    pub link_length: [f64; 2],
    pub com_position: [f64; 2],
    pub moment_of_inertia: [f64; 2],
    pub gravity: f64,
    /// Newton-metres per unit action.
    pub torque_scale: f64,
}

pub const ACROBOT: AcrobotParams = AcrobotParams {
    link_mass: [1.0, 1.0],
    link_length: [1.0, 1.0],
    com_position: [0.5, 0.5],
    moment_of_inertia: [1.0, 1.0],
    gravity: 9.81,
    torque_scale: 1.0,
};

impl AcrobotParams {
    /// State `[q1, q2, q̇1, q̇2]`; `q1 = 0` points the first link straight up and
    /// `q2` is measured relative to the first link.
    pub fn derivative(&self, s: &[f64; 4], action: f64) -> [f64; 4] {
        let [m1, m2] = self.link_mass;
        let l1 = self.link_length[0];
        let [lc1, lc2] = self.com_position;
        let [i1, i2] = self.moment_of_inertia;
        let g = self.gravity;
        let (q1, q2, dq1, dq2) = (s[0], s[1], s[2], s[3]);
        let tau = self.torque_scale * action;

        let c2 = cos(q2);
        let s2 = sin(q2);
        let d11 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2) + i1 + i2;
        let d12 = m2 * (lc2 * lc2 + l1 * lc2 * c2) + i2;
        let d22 = m2 * lc2 * lc2 + i2;
        let h1 = -m2 * l1 * lc2 * s2 * (2.0 * dq1 * dq2 + dq2 * dq2);
        let h2 = m2 * l1 * lc2 * s2 * dq1 * dq1;
        let s12 = sin(q1 + q2);
        let g1 = -(m1 * lc1 + m2 * l1) * g * sin(q1) - m2 * lc2 * g * s12;
        let g2 = -m2 * lc2 * g * s12;

        let rhs1 = -h1 - g1;
        let rhs2 = tau - h2 - g2;
        let det = d11 * d22 - d12 * d12;
        let ddq1 = (d22 * rhs1 - d12 * rhs2) / det;
        let ddq2 = (d11 * rhs2 - d12 * rhs1) / det;
        [dq1, dq2, ddq1, ddq2]
    }

    pub fn tip_height(&self, s: &[f64; 4]) -> f64 {
        self.link_length[0] * cos(s[0]) + self.link_length[1] * cos(s[0] + s[1])
    }
}

pub(super) fn initial_state(rng: &mut SeededRng) -> [f64; 4] {
    [
        core::f64::consts::PI + rng.uniform_range(-0.05, 0.05),
        rng.uniform_range(-0.05, 0.05),
        0.0,
        0.0,
    ]
}

/// Tip height mapped affinely from `[-2, 2]` onto `[0, 1]`.
pub(super) fn reward(s: &[f64; 4]) -> f64 {
    ((ACROBOT.tip_height(s) + 2.0) / 4.0).clamp(0.0, 1.0)
}
