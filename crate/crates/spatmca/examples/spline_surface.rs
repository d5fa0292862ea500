//! Thin-plate spline building blocks: interpolate scattered values, carry
//! them off-grid, and measure roughness with the penalty matrix.
//!
//! Run with `cargo run --example spline_surface`.

use nalgebra::{DMatrix, DVector};
use spatmca::spline::{evaluate_spline, roughness_matrix, solve_spline, LocationSet};

fn main() -> spatmca::Result<()> {
    // Nine unevenly spaced sites on a line.
    let xs = [0.0, 0.4, 1.1, 1.9, 2.4, 3.3, 4.0, 4.8, 5.5];
    let locs = LocationSet::one_dim(&xs)?;

    // Observed values: a bump with a dip in the middle.
    let values = DVector::from_fn(xs.len(), |i, _| {
        let x = xs[i];
        (-0.5 * (x - 2.7f64).powi(2)).exp() - 0.3 * (-4.0 * (x - 2.7f64).powi(2)).exp()
    });

    // Solve the interpolation system once; the coefficients define the
    // surface everywhere.
    let coef = solve_spline(&locs, &values)?;

    // The surface passes through every site exactly.
    let at_knots = evaluate_spline(&coef, &locs, locs.coords())?;
    let worst = (&at_knots - &values).abs().max();
    println!("interpolation residual at the sites: {worst:.2e}");

    // Evaluate on a fine grid for plotting or downstream use.
    let fine = DMatrix::from_fn(23, 1, |i, _| i as f64 * 0.25);
    let curve = evaluate_spline(&coef, &locs, &fine)?;
    println!("\n    x      spline");
    for i in 0..fine.nrows() {
        println!("  {:5.2}  {:9.5}", fine[(i, 0)], curve[i]);
    }

    // The roughness penalty matrix turns curvature into a quadratic form.
    let omega = roughness_matrix(&locs)?;
    let rough_bumpy = omega.quad_form(&values);
    let line = DVector::from_fn(xs.len(), |i, _| 0.7 + 0.2 * xs[i]);
    let rough_line = omega.quad_form(&line);
    println!("\nroughness of the bumpy surface : {rough_bumpy:.6}");
    println!("roughness of a straight line   : {rough_line:.2e} (affine functions are free)");

    Ok(())
}
