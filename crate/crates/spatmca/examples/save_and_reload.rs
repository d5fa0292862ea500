//! Persist a fitted model and get it back bit for bit: the JSON model file
//! stores patterns, strengths, spline coefficients, and provenance, so a
//! reloaded model predicts identically to the original.
//!
//! Run with `cargo run --example save_and_reload`.

use nalgebra::DMatrix;
use spatmca::admm::PenaltyConfig;
use spatmca::cov::sample_cross_cov;
use spatmca::io::{write_matrix_csv, ModelFile, Provenance};
use spatmca::model::fit;
use spatmca::sim::{generate_sample, SimConfig};

fn main() -> spatmca::Result<()> {
    let cfg = SimConfig {
        seed: 5,
        ..SimConfig::desk_1d()
    };
    let sample = generate_sample(&cfg)?;
    let s12 = sample_cross_cov(&sample, false)?;

    let config = PenaltyConfig {
        rank: 1,
        tau1u: 0.3,
        tau1v: 0.3,
        tau2u: 0.02,
        tau2v: 0.02,
        ..PenaltyConfig::default()
    };
    let model = fit(&s12, sample.locs1(), sample.locs2(), &config)?;

    let dir = std::env::temp_dir().join("spatmca_save_and_reload");
    std::fs::create_dir_all(&dir)?;

    // The observations themselves round-trip through CSV at full precision.
    let y1_path = dir.join("y1.csv");
    write_matrix_csv(&y1_path, sample.y1(), None)?;
    println!("wrote {}", y1_path.display());

    // Serialize the fitted model with its provenance.
    let provenance = Provenance {
        seed: Some(cfg.seed),
        n: Some(sample.n()),
        centered: Some(false),
        ..Provenance::default()
    };
    let file = ModelFile::from_model(&model, provenance);
    let model_path = dir.join("model.json");
    file.save(&model_path)?;
    println!("wrote {}", model_path.display());

    // Reload and rebuild a working model.
    let reloaded = ModelFile::load(&model_path)?.into_model()?;

    // Identical predictions, bit for bit, at fresh query points.
    let query = DMatrix::from_fn(5, 1, |i, _| -6.3 + 2.9 * i as f64);
    let original = model.predict_cross_cov(&query, &query)?;
    let recovered = reloaded.predict_cross_cov(&query, &query)?;
    let identical = original
        .iter()
        .zip(recovered.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!(
        "reloaded model reproduces predictions bitwise: {}",
        if identical { "yes" } else { "NO" }
    );

    println!("\npredicted cross-covariance at the query points:");
    for i in 0..original.nrows() {
        let row: Vec<String> = (0..original.ncols())
            .map(|j| format!("{:8.4}", original[(i, j)]))
            .collect();
        println!("  {}", row.join(" "));
    }

    Ok(())
}
