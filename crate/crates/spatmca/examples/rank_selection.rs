//! Choose the number of pattern pairs automatically: scan K = 1, 2, ...
//! and stop at the first K whose cross-validation score does not improve
//! on the next one.
//!
//! Run with `cargo run --example rank_selection`.

use spatmca::cv::{select_rank, CVConfig};
use spatmca::sim::{generate_sample, SimConfig};

fn main() -> spatmca::Result<()> {
    // A design with two genuine pattern pairs: strengths 1.0 and 0.6.
    let cfg = SimConfig {
        n: 500,
        d1: 1.0,
        d2: 0.6,
        noise_sd1: 0.5,
        noise_sd2: 0.5,
        seed: 42,
        ..SimConfig::desk_1d()
    };
    let sample = generate_sample(&cfg)?;

    let cvcfg = CVConfig {
        m_folds: 5,
        // Keep the tuning grids tiny: rank selection repeats the full
        // two-step search at every candidate rank.
        tau1_grid_u: vec![0.0, 0.1, 1.0],
        tau1_grid_v: vec![0.0, 0.1, 1.0],
        tau2_grid_u: vec![0.0, 0.01],
        tau2_grid_v: vec![0.0, 0.01],
        k_max: 4,
        seed: 0,
        ..CVConfig::default()
    };

    let result = select_rank(&sample, &cvcfg)?;

    // The best score at each rank actually scanned.
    println!("    K    best score");
    let mut scores: Vec<(usize, f64)> = Vec::new();
    for r in &result.records {
        match scores.iter_mut().find(|(k, _)| *k == r.k) {
            Some((_, s)) => *s = s.min(r.score),
            None => scores.push((r.k, r.score)),
        }
    }
    for (k, s) in &scores {
        println!("  {k:3}    {s:.6}");
    }

    println!(
        "\nselected K = {} ({}), tuning = (tau1: {:.3}/{:.3}, tau2: {:.3}/{:.3})",
        result.k_selected,
        if result.k_converged {
            "score stopped improving"
        } else {
            "still improving at k_max"
        },
        result.selected.tau1u,
        result.selected.tau1v,
        result.selected.tau2u,
        result.selected.tau2v,
    );
    println!("true number of pattern pairs: 2");

    Ok(())
}
