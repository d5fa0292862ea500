//! Fit coupled patterns on simulated data and inspect the result: pattern
//! strengths, convergence diagnostics, sparsity, and orthonormality.
//!
//! Run with `cargo run --example fit_patterns`.

use spatmca::admm::{PenaltyConfig, Zeta};
use spatmca::cov::sample_cross_cov;
use spatmca::model::fit;
use spatmca::sim::{generate_sample, true_patterns, SimConfig};

fn main() -> spatmca::Result<()> {
    // A compact simulated data set: two fields observed at 20 sites each,
    // 1000 joint observations, one shared pattern pair plus noise.
    let cfg = SimConfig {
        seed: 7,
        n: 1000,
        noise_sd1: 0.5,
        noise_sd2: 0.5,
        ..SimConfig::desk_1d()
    };
    let sample = generate_sample(&cfg)?;
    let s12 = sample_cross_cov(&sample, false)?;
    println!(
        "data: n = {}, p1 = {}, p2 = {}",
        sample.n(),
        sample.p1(),
        sample.p2()
    );

    // Fit one pattern pair with moderate smoothness and a light sparseness
    // penalty. Zeta::Auto sets the solver's internal step parameter from the
    // data scale.
    let config = PenaltyConfig {
        rank: 1,
        tau1u: 0.5,
        tau1v: 0.5,
        tau2u: 0.05,
        tau2v: 0.05,
        zeta: Zeta::Auto,
        ..PenaltyConfig::default()
    };
    let model = fit(&s12, sample.locs1(), sample.locs2(), &config)?;

    println!(
        "solver: converged = {} after {} iterations (zeta = {:.4})",
        model.patterns.converged, model.patterns.iterations, model.zeta
    );
    let r = &model.residuals;
    println!(
        "residuals: delta_g = {:.2e}, primal_r = {:.2e}, primal_q = {:.2e}",
        r.delta_g, r.primal_r, r.primal_q
    );
    println!("pattern strength d_1 = {:.4}", model.d_hat[0]);

    // The sparseness penalty produces exact zeros in the tails.
    let u = model.patterns.u_hat.column(0);
    let zeros = u.iter().filter(|x| **x == 0.0).count();
    println!("left pattern: {zeros} of {} entries are exactly zero", u.len());

    // Orthonormality: each pattern has unit length by construction.
    println!("left pattern norm  = {:.6}", u.norm());
    println!("right pattern norm = {:.6}", model.patterns.v_hat.column(0).norm());

    // Compare with the pattern that generated the data.
    let truth = true_patterns(&cfg)?;
    let u_true = truth.u_matrix().column(0).into_owned();
    let aligned = if u.dot(&u_true) < 0.0 { -u_true } else { u_true };
    println!("\n    x      fitted     true");
    let coords = sample.locs1().coords();
    for i in 0..u.len() {
        println!("  {:5.2}  {:9.5}  {:9.5}", coords[(i, 0)], u[i], aligned[i]);
    }

    Ok(())
}
