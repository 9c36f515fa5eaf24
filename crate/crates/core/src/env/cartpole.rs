use crate::math::{cos, sin};
use crate::rng::SeededRng;

/// Frictionless cart-pole with the pole modelled as a uniform rod.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartpoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from the pivot to the pole's centre of mass.
    pub half_length: f64,
    /// Newtons per unit action.
    pub force_scale: f64,
    pub gravity: f64,
    /// Cart position at which the centering factor of the reward reaches zero.
    pub track_limit: f64,
}

pub const CARTPOLE: CartpoleParams = CartpoleParams {
    cart_mass: 1.0,
    pole_mass: 0.1,
    half_length: 0.5,
    force_scale: 10.0,
    gravity: 9.81,
    track_limit: 1.8,
};

impl CartpoleParams {
    /// State `[x, θ, ẋ, θ̇]` with `θ = 0` upright.
    pub fn derivative(&self, s: &[f64; 4], action: f64) -> [f64; 4] {
        let (theta, x_dot, theta_dot) = (s[1], s[2], s[3]);
        let force = self.force_scale * action;
        let total = self.cart_mass + self.pole_mass;
        let (st, ct) = (sin(theta), cos(theta));
        let temp = (force + self.pole_mass * self.half_length * theta_dot * theta_dot * st) / total;
        let theta_acc = (self.gravity * st - ct * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * ct * ct / total));
        let x_acc = temp - self.pole_mass * self.half_length * theta_acc * ct / total;
        [x_dot, theta_dot, x_acc, theta_acc]
    }
}

pub(super) fn initial_state(theta0: f64, rng: &mut SeededRng) -> [f64; 4] {
    [0.0, theta0 + rng.uniform_range(-0.05, 0.05), 0.0, 0.0]
}

/// `((1 + cos θ) / 2) * max(0, 1 - (x / limit)^2)`
pub(super) fn reward(s: &[f64; 4]) -> f64 {
    let upright = (1.0 + cos(s[1])) / 2.0;
    let r = s[0] / CARTPOLE.track_limit;
    let centered = (1.0 - r * r).max(0.0);
    (upright * centered).clamp(0.0, 1.0)
}
