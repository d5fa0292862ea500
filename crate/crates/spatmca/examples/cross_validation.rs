//! Tune the smoothness and sparseness weights by M-fold cross-validation:
//! the two-step search fixes the smoothness weight first, then scans the
//! sparseness weight with the smoothness weight held at its winner.
//!
//! Run with `cargo run --example cross_validation`.

use spatmca::cv::{log_grid, two_step, CVConfig, CvStage};
use spatmca::sim::{generate_sample, SimConfig};

fn main() -> spatmca::Result<()> {
    let cfg = SimConfig {
        seed: 3,
        ..SimConfig::desk_1d()
    };
    let sample = generate_sample(&cfg)?;

    // Small grids keep the sweep quick; {0} is always worth including so the
    // search can turn a penalty off entirely.
    let mut tau1 = vec![0.0];
    tau1.extend(log_grid(1e-2, 10.0, 7));
    let mut tau2 = vec![0.0];
    tau2.extend(log_grid(1e-3, 1.0, 5));

    let cvcfg = CVConfig {
        m_folds: 5,
        tau1_grid_u: tau1.clone(),
        tau1_grid_v: tau1,
        tau2_grid_u: tau2.clone(),
        tau2_grid_v: tau2,
        seed: 0,
        ..CVConfig::default()
    };

    let (winner, records) = two_step(&sample, &cvcfg, 1)?;

    // Stage 1: smoothness weights scanned with sparseness off.
    println!("stage 1 (smoothness):");
    println!("    tau1u     tau1v     score");
    for r in records.iter().filter(|r| r.stage == CvStage::Tau1) {
        println!("  {:8.4}  {:8.4}  {:.6}", r.tau1u, r.tau1v, r.score);
    }

    // Stage 2: sparseness weights scanned at the stage-1 winner.
    println!("\nstage 2 (sparseness, tau1 fixed at the stage-1 winner):");
    println!("    tau2u     tau2v     score");
    for r in records.iter().filter(|r| r.stage == CvStage::Tau2) {
        println!("  {:8.4}  {:8.4}  {:.6}", r.tau2u, r.tau2v, r.score);
    }

    println!(
        "\nselected: tau1 = ({:.4}, {:.4}), tau2 = ({:.4}, {:.4}), score = {:.6}",
        winner.tau1u, winner.tau1v, winner.tau2u, winner.tau2v, winner.score
    );

    Ok(())
}
