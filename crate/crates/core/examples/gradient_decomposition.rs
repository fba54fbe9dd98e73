//! The three gradient estimators on a small random network and batch:
//! true = semi + backward-semi, and only the true gradient agrees with
//! finite differences of the loss.
//!
//!     cargo run --release --example gradient_decomposition

use qregime::gradients::{bellman_loss, fd_gradient, grad, GradientMode};
use qregime::qnet::{NetShape, QNetwork};
use qregime::{ActionId, StateVec, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inf_norm(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |m, x| m.max(x.abs()))
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = QNetwork::new(NetShape::new(3, &[6, 5], 3))?;
    let params = net.init(4);
    let mut state = || StateVec((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let batch: Vec<Transition> = (0..6)
        .map(|i| Transition {
            state: state(),
            action: ActionId(i % 3),
            next_state: state(),
            reward: if i % 2 == 0 { 1.0 } else { -0.5 },
            next_is_terminal: false,
        })
        .collect();

    for gamma in [0.0, 0.5, 0.95] {
        let t = grad(GradientMode::True, &net, &params, &batch, gamma)?;
        let s = grad(GradientMode::Semi, &net, &params, &batch, gamma)?;
        let b = grad(GradientMode::BackwardSemi, &net, &params, &batch, gamma)?;
        let fd = fd_gradient(&net, &params, &batch, gamma, 1e-5)?;
        let split = inf_norm((0..t.len()).map(|i| t.0[i] - s.0[i] - b.0[i]));
        println!("gamma = {gamma}");
        println!("  loss                      {:.6}", bellman_loss(&net, &params, &batch, gamma)?);
        println!("  |true - semi - backward|  {split:.2e}");
        println!("  |true - fd|               {:.2e}", inf_norm(t.0.iter().zip(&fd.0).map(|(a, b)| a - b)));
        println!("  |semi - fd|               {:.2e}", inf_norm(s.0.iter().zip(&fd.0).map(|(a, b)| a - b)));
        println!("  |backward-semi|           {:.2e}", inf_norm(b.0.iter().copied()));
    }
    Ok(())
}
