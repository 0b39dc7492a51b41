//! Fits a characteristic Normal from the three standard percentile values
//! (mu - sigma, mu, mu + sigma), compares it with a least-squares fit over
//! a denser percentile grid, and shows the adaptive percentile suggestion
//! for a deliberately skewed sample set.
//!
//! Run with: cargo run --example distribution_fit

use equips::dist::{
    fit_characteristic_normal, fit_quantile_family, goodness_of_fit, normal_quantile,
    suggest_percentiles, Family, PercentileSampleSet, DEFAULT_FIT_TOLERANCE,
};

fn main() {
    // samples drawn exactly from a Normal(1.0, 0.08) quantile curve
    let (mu, sigma) = (1.0, 0.08);
    let qs = [5.0, 15.9, 30.0, 50.0, 70.0, 84.1, 95.0];
    let pairs: Vec<(f64, f64)> =
        qs.iter().map(|&q| (q, normal_quantile(q / 100.0, mu, sigma).unwrap())).collect();
    let samples = PercentileSampleSet::from_pairs(&pairs).unwrap();

    let characteristic = fit_characteristic_normal(&samples).unwrap();
    let ls = fit_quantile_family(&samples, Family::Normal).unwrap();
    println!("true distribution:        Normal(mean {mu}, std {sigma})");
    println!("three-point characteristic: {characteristic:?}");
    println!("least-squares fit:          {:?}", ls.dist);
    println!(
        "goodness of fit: characteristic {:.2e}, least squares {:.2e}",
        goodness_of_fit(&samples, &characteristic),
        goodness_of_fit(&samples, &ls.dist)
    );

    // a heavy right tail the Normal family cannot capture
    let skewed: Vec<(f64, f64)> =
        pairs.iter().map(|&(q, v)| (q, if q > 84.0 { v * 1.5 } else { v })).collect();
    let skewed_samples = PercentileSampleSet::from_pairs(&skewed).unwrap();
    let fit = fit_quantile_family(&skewed_samples, Family::Normal).unwrap().dist;
    let gof = goodness_of_fit(&skewed_samples, &fit);
    let suggested = suggest_percentiles(&skewed_samples, &fit, DEFAULT_FIT_TOLERANCE, 3);
    println!("\nskewed samples: goodness of fit {gof:.3} (tolerance {DEFAULT_FIT_TOLERANCE})");
    println!("suggested extra percentiles to simulate next: {suggested:?}");
}
