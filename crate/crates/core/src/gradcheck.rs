//! Central finite-difference checks of the analytic gradients of every
//! network in the system, at their real architectures.

use rand::seq::index;
use rand::Rng;

use crate::ddpg::{actor_objective_gradient, new_actor, new_critic};
use crate::env::ContentId;
use crate::error::Result;
use crate::fl::{cross_entropy, new_predictor};
use crate::nn::{Matrix, ModelParams};
use crate::rng::{MasterSeed, Stream};

pub const DELTA: f64 = 1e-5;
/// Denominator floor of the relative error, so that gradients that are zero
/// up to rounding are compared absolutely.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub name: String,
    pub draws: usize,
    pub checked: usize,
    pub max_rel_err: f64,
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Central difference of `f` in the coordinate `x` of `state`.
fn central<S>(state: &mut S, x: impl Fn(&mut S) -> &mut f64, f: impl Fn(&S) -> f64) -> f64 {
    let x0 = *x(state);
    *x(state) = x0 + DELTA;
    let up = f(state);
    *x(state) = x0 - DELTA;
    let down = f(state);
    *x(state) = x0;
    (up - down) / (2.0 * DELTA)
}

/// Flat indices to probe: up to `max_w` weights and `max_b` biases per layer.
fn sample_coords(p: &ModelParams, rng: &mut Stream, max_w: usize, max_b: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut base = 0;
    for l in p.layers() {
        let nw = l.weights.len();
        out.extend(index::sample(rng, nw, nw.min(max_w)).into_iter().map(|i| base + i));
        out.extend(index::sample(rng, l.n_out, l.n_out.min(max_b)).into_iter().map(|i| base + nw + i));
        base += nw + l.n_out;
    }
    out
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Stream) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Compares `grad` against central differences of `loss` around `params`.
fn compare(params: &ModelParams, grad: &ModelParams, coords: &[usize], loss: impl Fn(&ModelParams) -> f64) -> f64 {
    let mut p = params.clone();
    let mut worst: f64 = 0.0;
    for &c in coords {
        let x0 = p.get_flat(c);
        p.set_flat(c, x0 + DELTA);
        let up = loss(&p);
        p.set_flat(c, x0 - DELTA);
        let down = loss(&p);
        p.set_flat(c, x0);
        worst = worst.max(rel_err(grad.get_flat(c), (up - down) / (2.0 * DELTA)));
    }
    worst
}

/// Weighted output sum `Σ c ⊙ f(x)`, whose output gradient is `c`.
fn weighted(net: &ModelParams, x: &Matrix, c: &Matrix) -> f64 {
    net.predict(x).unwrap().data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
}

pub struct Architecture {
    pub n_contents: usize,
    pub window: usize,
    pub predictor_hidden: usize,
    pub hidden: usize,
}

const BATCH: usize = 8;
const MAX_W: usize = 64;
const MAX_B: usize = 16;

pub fn check_predictor(arch: &Architecture, draws: usize, seed: MasterSeed) -> Result<GradcheckReport> {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for d in 0..draws {
        let mut rng = seed.stream(&format!("gradcheck/predictor/{d}"));
        let net = new_predictor(arch.n_contents, arch.window, arch.predictor_hidden, &mut rng)?;
        let x = random_matrix(BATCH, net.input_dim(), &mut rng);
        let targets: Vec<ContentId> = (0..BATCH).map(|_| rng.random_range(1..=arch.n_contents as ContentId)).collect();
        let (p, tape) = net.forward(&x)?;
        let (_, dp) = cross_entropy(&p, &targets);
        let (g, dx) = net.backward(&tape, &dp)?;
        let coords = sample_coords(&net, &mut rng, MAX_W, MAX_B);
        let loss = |n: &ModelParams| cross_entropy(&n.predict(&x).unwrap(), &targets).0;
        worst = worst.max(compare(&net, &g, &coords, loss));
        // Input gradient on a few coordinates.
        for k in index::sample(&mut rng, x.data().len(), 16) {
            let mut xp = x.clone();
            let numeric = central(&mut xp, |m| &mut m.data_mut()[k], |m| cross_entropy(&net.predict(m).unwrap(), &targets).0);
            worst = worst.max(rel_err(dx.data()[k], numeric));
        }
        checked += coords.len() + 16;
    }
    Ok(GradcheckReport { name: "predictor".into(), draws, checked, max_rel_err: worst })
}

fn check_weighted(name: &str, make: impl Fn(&mut Stream) -> Result<ModelParams>, draws: usize, seed: MasterSeed) -> Result<GradcheckReport> {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for d in 0..draws {
        let mut rng = seed.stream(&format!("gradcheck/{name}/{d}"));
        let net = make(&mut rng)?;
        let x = random_matrix(BATCH, net.input_dim(), &mut rng);
        let c = random_matrix(BATCH, net.output_dim(), &mut rng);
        let (_, tape) = net.forward(&x)?;
        let (g, dx) = net.backward(&tape, &c)?;
        let coords = sample_coords(&net, &mut rng, MAX_W, MAX_B);
        worst = worst.max(compare(&net, &g, &coords, |n| weighted(n, &x, &c)));
        for k in 0..x.data().len() {
            let mut xp = x.clone();
            let numeric = central(&mut xp, |m| &mut m.data_mut()[k], |m| weighted(&net, m, &c));
            worst = worst.max(rel_err(dx.data()[k], numeric));
        }
        checked += coords.len() + x.data().len();
    }
    Ok(GradcheckReport { name: name.into(), draws, checked, max_rel_err: worst })
}

pub fn check_actor(arch: &Architecture, draws: usize, seed: MasterSeed) -> Result<GradcheckReport> {
    check_weighted("actor", |rng| new_actor(arch.n_contents, arch.hidden, rng), draws, seed)
}

/// Covers both parameter gradients and `dQ/d(s, a)`.
pub fn check_critic(arch: &Architecture, draws: usize, seed: MasterSeed) -> Result<GradcheckReport> {
    check_weighted("critic", |rng| new_critic(arch.n_contents, arch.hidden, rng), draws, seed)
}

/// `J(Θ^A) = mean_s Q(s, π(s))` differentiated through the critic.
pub fn check_actor_through_critic(arch: &Architecture, draws: usize, seed: MasterSeed) -> Result<GradcheckReport> {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for d in 0..draws {
        let mut rng = seed.stream(&format!("gradcheck/composed/{d}"));
        let actor = new_actor(arch.n_contents, arch.hidden, &mut rng)?;
        let critic = new_critic(arch.n_contents, arch.hidden, &mut rng)?;
        let s = random_matrix(BATCH, actor.input_dim(), &mut rng);
        let (_, g) = actor_objective_gradient(&actor, &critic, &s)?;
        let coords = sample_coords(&actor, &mut rng, MAX_W, MAX_B);
        let j = |a: &ModelParams| {
            let act = a.predict(&s).unwrap();
            let q = critic.predict(&s.hcat(&act).unwrap()).unwrap();
            q.data().iter().sum::<f64>() / s.rows() as f64
        };
        worst = worst.max(compare(&actor, &g, &coords, j));
        checked += coords.len();
    }
    Ok(GradcheckReport { name: "actor_through_critic".into(), draws, checked, max_rel_err: worst })
}

pub fn check_all(arch: &Architecture, draws: usize, seed: MasterSeed) -> Result<Vec<GradcheckReport>> {
    Ok(vec![
        check_predictor(arch, draws, seed)?,
        check_actor(arch, draws, seed)?,
        check_critic(arch, draws, seed)?,
        check_actor_through_critic(arch, draws, seed)?,
    ])
}
