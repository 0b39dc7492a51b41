//! Checks whether intermediate percentile time series stay inside the band
//! formed by the mu - sigma / mu + sigma (15.9 / 84.1) percentile series —
//! the signature diagnostic for nonlinear uncertainty propagation.
//!
//! Run with: cargo run --example envelope_diagnostics

use equips::dist::{envelope_check, QuantitySeries};

fn main() {
    let times: Vec<f64> = (0..=20).map(|t| t as f64 * 0.5).collect();
    // a toy discharge-like transient per percentile
    let series_for = |q: f64, bump: f64| {
        let values = times
            .iter()
            .map(|&t| {
                let base = 1.0 + q / 100.0 - 0.05 * t;
                // a mid-transient excursion that scales nonlinearly with q
                base + bump * (-((t - 5.0) * (t - 5.0)) / 2.0).exp()
            })
            .collect();
        QuantitySeries::new(q, times.clone(), values).unwrap()
    };

    let series = vec![
        series_for(15.9, 0.0),
        series_for(30.0, 0.6), // escapes the band mid-transient
        series_for(50.0, 0.0),
        series_for(84.1, 0.0),
    ];
    let report = envelope_check(&series).unwrap();
    if report.sigma_violations.is_empty() {
        println!("all intermediate percentiles stay inside the sigma band");
    } else {
        println!("{} sigma-band violations:", report.sigma_violations.len());
        for v in report.sigma_violations.iter().take(5) {
            println!(
                "  percentile {} at t = {}: value {:.3} outside [{:.3}, {:.3}]",
                v.percentile, v.time, v.value, v.lower, v.upper
            );
        }
        println!("a three-point characteristic understates the uncertainty here;");
        println!("simulate additional percentiles before trusting the band");
    }
}
