//! Analytic PPO gradients against central finite differences.

use hris_core::ppo::{actor_loss, critic_loss, Actor, Critic, Minibatch, Parameters, PpoHyper};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs())).max(1e-6)
}

fn tiny_batch(rng: &mut ChaCha8Rng, actor: &Actor) -> Minibatch {
    let b = 8;
    let states = Array2::from_shape_fn((b, 3), |_| rng.random_range(-1.0..1.0));
    let means = actor.means(states.view());
    // actions near the mean keep ratios inside and outside the clip range
    let actions = Array2::from_shape_fn((b, 2), |(i, j)| means[[i, j]] + rng.random_range(-1.5..1.5));
    let old_log_probs = Array1::from_shape_fn(b, |i| {
        let a = actions.row(i).to_vec();
        let m = means.row(i).to_vec();
        hris_core::ppo::gaussian_log_prob(&a, &m, actor.log_std.as_slice().unwrap()) + rng.random_range(-0.4..0.4)
    });
    Minibatch {
        states,
        actions,
        old_log_probs,
        advantages: Array1::from_shape_fn(b, |_| rng.random_range(-2.0..2.0)),
        targets: Array1::from_shape_fn(b, |_| rng.random_range(-1.0..1.0)),
    }
}

fn check<P: Parameters + Clone>(params: &P, analytic: &[Vec<f64>], loss: impl Fn(&P) -> f64) -> f64 {
    let flat = params.flat();
    let grad: Vec<f64> = analytic.concat();
    assert_eq!(grad.len(), flat.len());
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let mut p = params.clone();
        let mut x = flat.clone();
        x[i] = flat[i] + H;
        p.set_flat(&x);
        let up = loss(&p);
        x[i] = flat[i] - H;
        p.set_flat(&x);
        let down = loss(&p);
        let fd = (up - down) / (2.0 * H);
        if fd.abs() < 1e-9 && grad[i].abs() < 1e-9 {
            continue;
        }
        worst = worst.max(rel_err(fd, grad[i]));
    }
    worst
}

#[test]
fn actor_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..5 {
        let mut actor = Actor::new(3, &[4, 4], 2, &mut rng);
        // larger output weights than the default init so every path matters
        for l in &mut actor.net.layers {
            l.weight.mapv_inplace(|w| w * 3.0);
            l.bias.mapv_inplace(|_| 0.1);
        }
        actor.log_std = Array1::from(vec![-0.3, 0.2]);
        let mb = tiny_batch(&mut rng, &actor);
        let hp = PpoHyper {
            entropy_coef: if trial % 2 == 0 { 0.0 } else { 0.05 },
            ..PpoHyper::default()
        };
        let (_, grads, stats) = actor_loss(&actor, &mb, &hp);
        let worst = check(&actor, &grads, |a| actor_loss(a, &mb, &hp).0);
        assert!(worst < 1e-4, "trial {trial}: worst rel err {worst:e} (clip frac {})", stats.clip_fraction);
    }
}

#[test]
fn critic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let mut critic = Critic::new(3, &[4, 4], &mut rng);
        for l in &mut critic.net.layers {
            l.bias.mapv_inplace(|_| 0.05);
        }
        let actor = Actor::new(3, &[4, 4], 2, &mut rng);
        let mb = tiny_batch(&mut rng, &actor);
        let (_, grads) = critic_loss(&critic, &mb);
        let worst = check(&critic, &grads, |c| critic_loss(c, &mb).0);
        assert!(worst < 1e-4, "worst rel err {worst:e}");
    }
}
