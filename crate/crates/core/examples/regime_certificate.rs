//! Exact Grid World solutions: the optimal Q-table from value iteration and
//! a table with zero Bellman residual whose greedy policy never reaches the
//! goal. Both are audited by the same regime classifier used for networks.
//!
//!     cargo run --release --example regime_certificate

use qregime::dataset::build_grid_cartesian;
use qregime::env::{EnvKind, Environment, GridAction};
use qregime::oracle::{
    bad_regime_certificate, exact_residual, shortest_path_length, table_rollout, tabular_network, value_iteration,
    TabularQ,
};
use qregime::regime::analyze;

fn print_table(name: &str, table: &TabularQ, cols: usize) {
    println!("{name}: max_a Q(s, a) and greedy action");
    for r in 0..table.rows.len() / cols {
        let cells: Vec<String> = (0..cols)
            .map(|c| {
                let s = r * cols + c;
                let v = table.value(s).unwrap_or(f64::NAN);
                let a = table.greedy(s).map(|a| GridAction::from_id(a).map_or('?', GridAction::arrow));
                format!("{v:>8.4} {}", a.unwrap_or('?'))
            })
            .collect();
        println!("  {}", cells.join("  "));
    }
}

fn main() -> anyhow::Result<()> {
    let env = Environment::new(EnvKind::GridWorld);
    let grid = env.grid().expect("grid world");
    let layout = &grid.layout;
    let spec = env.spec();
    let data = build_grid_cartesian(&env)?;

    let optimal = value_iteration(layout, spec, 1e-12)?;
    let certificate = bad_regime_certificate(layout, spec)?;
    println!("shortest path from start: {:?} moves", shortest_path_length(layout));
    println!("value-iteration sweeps: {}", optimal.sweep_deltas.len());
    println!();

    for (name, table) in [("optimal", &optimal.q), ("bad-regime certificate", &certificate)] {
        print_table(name, table, layout.cols);
        let rollout = table_rollout(table, layout, spec)?;
        let (net, params) = tabular_network(table)?;
        let report = analyze(&env, &data.transitions, &net, &params, None)?;
        println!("  Bellman residual (mean square): {:.3e}", exact_residual(table, layout, spec)?);
        let shown: Vec<String> = rollout.path.iter().take(10).map(usize::to_string).collect();
        let more = if rollout.path.len() > 10 { format!(" ... ({} steps)", rollout.path.len() - 1) } else { String::new() };
        println!("  greedy path {}{more}, reward {:.2}, reaches goal: {}", shown.join(" "), rollout.reward, rollout.reached_goal);
        println!("  regime verdict: {:?} (threshold {:.4})", report.verdict, report.threshold);
        println!();
    }
    Ok(())
}
