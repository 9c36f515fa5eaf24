//! Reference implementations the integration tests compare against. None of
//! them reuse the code under test beyond building inputs.
#![allow(dead_code)]

use trickbench_core::agents::{
    critic_loss, deterministic_actor_loss, ppo_policy_loss, sac_actor_loss, Minibatch, PpoConfig,
};
use trickbench_core::init::{InitKind, InitScheme};
use trickbench_core::mlp::{Activation, MlpParams};
use trickbench_core::policy::{DeterministicPolicy, GaussianPolicy, TanhGaussianPolicy};
use trickbench_core::tape::Tape;
use trickbench_core::SeededRng;

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a − n| / max(|a|, |n|, floor)` over all coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Mean and population variance, each computed in its own pass.
pub fn two_pass(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for j in 0..d {
            mean[j] += s[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for s in samples {
        for j in 0..d {
            var[j] += (s[j] - mean[j]) * (s[j] - mean[j]);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

/// Advantages as explicit discounted sums of TD residuals, truncated at the
/// first terminal transition.
pub fn brute_force_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let value_after = |k: usize| if k + 1 < n { values[k + 1] } else { last_value };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for k in t..n {
                let live = if dones[k] { 0.0 } else { 1.0 };
                let delta = rewards[k] + gamma * value_after(k) * live - values[k];
                total += (gamma * lambda).powi((k - t) as i32) * delta;
                if dones[k] {
                    break;
                }
            }
            total
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on a row-major `n x n` system.
pub fn dense_solve(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a[i * n..(i + 1) * n].to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// `BᵀB + I` for a random Gaussian `B`.
pub fn random_spd(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    let b: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (0..n).map(|k| b[k * n + i] * b[k * n + j]).sum::<f64>();
        }
        a[i * n + i] += 1.0;
    }
    a
}

pub fn mat_vec(n: usize, a: &[f64], v: &[f64]) -> Vec<f64> {
    (0..n).map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum()).collect()
}

/// Forward pass written as plain nested loops over the stored weights.
pub fn loop_forward(net: &MlpParams, input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    for layer in net.layers() {
        let (fan_out, fan_in) = (layer.fan_out(), layer.fan_in());
        let w = layer.weight.data();
        let mut y = vec![0.0; fan_out];
        for i in 0..fan_out {
            let mut z = layer.bias.data()[i];
            for j in 0..fan_in {
                z += w[i * fan_in + j] * x[j];
            }
            y[i] = match layer.activation {
                Activation::Tanh => z.tanh(),
                Activation::Relu => z.max(0.0),
                Activation::Linear => z,
            };
        }
        x = y;
    }
    x
}

pub fn tiny_net(sizes: &[usize], hidden: Activation, out: Activation, seed: u64) -> MlpParams {
    let mut rng = SeededRng::new(seed);
    let mut net = MlpParams::new(sizes, hidden, out, &InitScheme::new(InitKind::Xavier), &mut rng).unwrap();
    // nonzero biases so every parameter influences the loss
    let mut flat = net.flat();
    for v in &mut flat {
        if *v == 0.0 {
            *v = 0.1 * rng.normal();
        }
    }
    net.set_flat(&flat).unwrap();
    net
}

fn normals(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// A differentiable loss with its parameters: `eval(params)` returns the loss
/// and its analytic gradient.
pub struct LossCase {
    pub name: &'static str,
    pub params: Vec<f64>,
    pub eval: Box<dyn Fn(&[f64]) -> (f64, Vec<f64>)>,
}

fn gaussian_grad(tape: &Tape, policy: &GaussianPolicy, vars: &trickbench_core::policy::GaussianVars) -> Vec<f64> {
    let mut g = policy.mean_net.tape_grad_flat(tape, &vars.mean);
    g.extend_from_slice(tape.grad(vars.log_std).unwrap_or(&[0.0]));
    g
}

/// Every loss the agents differentiate, on instances with at most fifty
/// parameters.
pub fn registered_losses() -> Vec<LossCase> {
    let mut rng = SeededRng::new(2024);
    let rows = 6;
    let mut cases = Vec::new();

    // value regression (PPO and TRPO critics)
    {
        let net = tiny_net(&[2, 4, 1], Activation::Tanh, Activation::Linear, 1);
        let x = normals(rows * 2, &mut rng);
        let y = normals(rows, &mut rng);
        let base = net.clone();
        cases.push(LossCase {
            name: "value-mse",
            params: net.flat(),
            eval: Box::new(move |p| {
                let mut net = base.clone();
                net.set_flat(p).unwrap();
                let mut tape = Tape::new();
                let vars = net.bind(&mut tape);
                let xs = tape.constant(rows, 2, x.clone());
                let loss = critic_loss(&mut tape, &vars, xs, &y);
                tape.backward(loss).unwrap();
                (tape.scalar(loss), net.tape_grad_flat(&tape, &vars))
            }),
        });
    }

    let mut policy = GaussianPolicy::new(2, 1, &[3], &InitScheme::new(InitKind::Xavier), 1.0, &mut rng).unwrap();
    policy.log_std.data_mut()[0] = -0.3;
    let states = normals(rows * 2, &mut rng);
    let actions = normals(rows, &mut rng);
    let advantages = normals(rows, &mut rng);
    let flat = policy.flat();

    // negative log-likelihood of the Gaussian policy
    {
        let (base, states, actions) = (policy.clone(), states.clone(), actions.clone());
        cases.push(LossCase {
            name: "gaussian-nll",
            params: flat.clone(),
            eval: Box::new(move |p| {
                let mut pol = base.clone();
                pol.set_flat(p).unwrap();
                let mut tape = Tape::new();
                let vars = pol.bind(&mut tape);
                let s = tape.constant(rows, 2, states.clone());
                let a = tape.constant(rows, 1, actions.clone());
                let lp = vars.log_prob(&mut tape, s, a);
                let m = tape.mean(lp);
                let loss = tape.neg(m);
                tape.backward(loss).unwrap();
                (tape.scalar(loss), gaussian_grad(&tape, &pol, &vars))
            }),
        });
    }

    // clipped surrogate + entropy + active KL-cutoff penalty
    for (name, cutoff) in [("ppo-clip", false), ("ppo-clip-cutoff", true)] {
        let old_lp: Vec<f64> = policy
            .log_prob_batch(rows, &states, &actions)
            .iter()
            .map(|l| l + 0.05 * rng.normal() + if cutoff { 0.3 } else { 0.0 })
            .collect();
        let mb = Minibatch {
            rows,
            states: states.clone(),
            actions: actions.clone(),
            old_log_probs: old_lp,
            advantages: advantages.clone(),
            returns: vec![0.0; rows],
        };
        let base = policy.clone();
        let config = PpoConfig::default();
        cases.push(LossCase {
            name,
            params: flat.clone(),
            eval: Box::new(move |p| {
                let mut pol = base.clone();
                pol.set_flat(p).unwrap();
                let mut tape = Tape::new();
                let vars = pol.bind(&mut tape);
                let loss = ppo_policy_loss(&mut tape, &vars, &mb, 2, 1, &config, cutoff);
                tape.backward(loss.total).unwrap();
                (tape.scalar(loss.total), gaussian_grad(&tape, &pol, &vars))
            }),
        });
    }

    // importance-weighted surrogate of TRPO
    {
        let old_lp = policy.log_prob_batch(rows, &states, &actions);
        let (base, states, actions, adv) = (policy.clone(), states.clone(), actions.clone(), advantages.clone());
        cases.push(LossCase {
            name: "trpo-surrogate",
            params: flat.clone(),
            eval: Box::new(move |p| {
                let mut pol = base.clone();
                pol.set_flat(p).unwrap();
                let mut tape = Tape::new();
                let vars = pol.bind(&mut tape);
                let s = tape.constant(rows, 2, states.clone());
                let a = tape.constant(rows, 1, actions.clone());
                let lp = vars.log_prob(&mut tape, s, a);
                let old = tape.constant(rows, 1, old_lp.clone());
                let adv = tape.constant(rows, 1, adv.clone());
                let d = tape.sub(lp, old);
                let r = tape.exp(d);
                let w = tape.mul(r, adv);
                let loss = tape.mean(w);
                tape.backward(loss).unwrap();
                (tape.scalar(loss), gaussian_grad(&tape, &pol, &vars))
            }),
        });
    }

    // twin-critic regression (TD3 and SAC)
    {
        let net = tiny_net(&[3, 4, 1], Activation::Relu, Activation::Linear, 2);
        let x = normals(rows * 3, &mut rng);
        let y = normals(rows, &mut rng);
        let base = net.clone();
        cases.push(LossCase {
            name: "q-critic-mse",
            params: net.flat(),
            eval: Box::new(move |p| {
                let mut net = base.clone();
                net.set_flat(p).unwrap();
                let mut tape = Tape::new();
                let vars = net.bind(&mut tape);
                let xs = tape.constant(rows, 3, x.clone());
                let loss = critic_loss(&mut tape, &vars, xs, &y);
                tape.backward(loss).unwrap();
                (tape.scalar(loss), net.tape_grad_flat(&tape, &vars))
            }),
        });
    }

    // deterministic policy gradient through a fixed critic
    {
        let mut r = SeededRng::new(5);
        let mut actor =
            DeterministicPolicy::new(2, 1, &[3], &InitScheme::new(InitKind::Xavier), 0.1, &mut r).unwrap();
        actor.net = tiny_net(&[2, 3, 1], Activation::Relu, Activation::Tanh, 3);
        let critic = tiny_net(&[3, 5, 1], Activation::Tanh, Activation::Linear, 4);
        let s = normals(rows * 2, &mut rng);
        let base = actor.net.clone();
        cases.push(LossCase {
            name: "td3-actor",
            params: base.flat(),
            eval: Box::new(move |p| {
                let mut net = base.clone();
                net.set_flat(p).unwrap();
                let mut tape = Tape::new();
                let av = net.bind(&mut tape);
                let cv = critic.bind(&mut tape);
                let st = tape.constant(rows, 2, s.clone());
                let loss = deterministic_actor_loss(&mut tape, &av, &cv, st);
                tape.backward(loss).unwrap();
                (tape.scalar(loss), net.tape_grad_flat(&tape, &av))
            }),
        });
    }

    // reparameterized SAC actor objective on a ten-parameter policy
    {
        let mut r = SeededRng::new(6);
        let mut pol = TanhGaussianPolicy::new(1, 1, &[2], &InitScheme::new(InitKind::Xavier), &mut r).unwrap();
        pol.net = tiny_net(&[1, 2, 2], Activation::Relu, Activation::Linear, 7);
        let c1 = tiny_net(&[2, 4, 1], Activation::Tanh, Activation::Linear, 8);
        let c2 = tiny_net(&[2, 4, 1], Activation::Tanh, Activation::Linear, 9);
        let s = normals(rows, &mut rng);
        let eps = normals(rows, &mut rng);
        let base = pol.clone();
        cases.push(LossCase {
            name: "sac-actor",
            params: base.net.flat(),
            eval: Box::new(move |p| {
                let mut pol = base.clone();
                pol.net.set_flat(p).unwrap();
                let mut tape = Tape::new();
                let pv = pol.net.bind(&mut tape);
                let v1 = c1.bind(&mut tape);
                let v2 = c2.bind(&mut tape);
                let st = tape.constant(rows, 1, s.clone());
                let loss = sac_actor_loss(&mut tape, &pol, &pv, &v1, &v2, st, &eps, 0.2);
                tape.backward(loss).unwrap();
                (tape.scalar(loss), pol.net.tape_grad_flat(&tape, &pv))
            }),
        });
    }
    cases
}

/// Rows of three columns with different location and scale.
pub fn stream(rng: &mut SeededRng, n: usize, offset: f64, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| vec![offset + scale * rng.normal(), rng.uniform_range(-5.0, 5.0), (offset + 1.0) * rng.uniform()])
        .collect()
}

/// Fisher matrix of a one-action Gaussian policy as the sample mean of score
/// outer products. Scores come from per-state mean Jacobians and the
/// closed-form derivatives of the log density.
pub fn monte_carlo_fisher(policy: &GaussianPolicy, states: &[f64], samples: usize, rng: &mut SeededRng) -> Vec<f64> {
    let obs = policy.obs_dim();
    let rows = states.len() / obs;
    let nm = policy.mean_net.num_params();
    let np = nm + 1;
    let jacobians: Vec<(f64, Vec<f64>)> = (0..rows)
        .map(|r| {
            let mut tape = Tape::new();
            let vars = policy.mean_net.bind(&mut tape);
            let s = tape.constant(1, obs, states[r * obs..(r + 1) * obs].to_vec());
            let out = vars.forward(&mut tape, s);
            tape.backward_with(out, &[1.0]).unwrap();
            (tape.value(out)[0], policy.mean_net.tape_grad_flat(&tape, &vars))
        })
        .collect();
    let sigma = policy.std()[0];
    let mut fisher = vec![0.0; np * np];
    let mut score = vec![0.0; np];
    for k in 0..samples {
        let (_, jac) = &jacobians[k % rows];
        let z = rng.normal();
        // a = mu + sigma z
        let dmu = z / sigma;
        for i in 0..nm {
            score[i] = jac[i] * dmu;
        }
        score[nm] = z * z - 1.0;
        for i in 0..np {
            for j in 0..np {
                fisher[i * np + j] += score[i] * score[j];
            }
        }
    }
    fisher.iter_mut().for_each(|f| *f /= samples as f64);
    fisher
}

/// `max |G − I|` for the Gram matrix over the shorter side of `w`.
pub fn max_gram_deviation(rows: usize, cols: usize, w: &[f64]) -> f64 {
    let (short, long, at) = if rows <= cols {
        (rows, cols, Box::new(|i: usize, k: usize| w[i * cols + k]) as Box<dyn Fn(usize, usize) -> f64>)
    } else {
        (cols, rows, Box::new(|i: usize, k: usize| w[k * cols + i]) as Box<dyn Fn(usize, usize) -> f64>)
    };
    let mut worst: f64 = 0.0;
    for i in 0..short {
        for j in 0..short {
            let g: f64 = (0..long).map(|k| at(i, k) * at(j, k)).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}
