//! Physics-quantity uncertainty distributions.
//!
//! Percentile segmentations carry their own CDF coordinate: a quantity
//! simulated on the q-percentile segmentation is, by construction, the
//! q/100 quantile of the uncertainty distribution. This module fits
//! characteristic distributions to such (percentile, value) pairs and
//! diagnoses where the fit (or the monotone picture behind it) breaks down.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("sample set must contain at least one sample")]
    Empty,
    #[error("percentile {0} outside [0, 100] or not finite")]
    BadPercentile(f64),
    #[error("non-finite quantity value at percentile {0}")]
    BadValue(f64),
    #[error("duplicate percentile {0}")]
    DuplicatePercentile(f64),
    #[error("standard percentile {0} missing from sample set")]
    MissingStandardPercentile(f64),
    #[error("non-monotone standard samples give sigma = {0} <= 0")]
    NonMonotoneInput(f64),
    #[error("scale parameter must be positive, got {0}")]
    BadScale(f64),
    #[error("quantile probability {0} outside (0, 1)")]
    BadProbability(f64),
    #[error("need at least {needed} samples for this fit, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("percentile {0} gives an unbounded quantile basis for this family")]
    UnboundedBasis(f64),
    #[error("singular design: all sample percentiles map to the same basis value")]
    SingularDesign,
    #[error("time series requires equal-length, strictly increasing times")]
    BadSeries,
    #[error("envelope check requires series at percentiles 15.9, 50 and 84.1; missing {0}")]
    MissingSeries(f64),
}

/// One (percentile, physics-quantity value) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileSample {
    pub percentile: f64,
    pub value: f64,
}

/// Samples with unique percentiles, kept sorted by percentile.
#[derive(Debug, Clone)]
pub struct PercentileSampleSet {
    samples: Vec<PercentileSample>,
}

impl PercentileSampleSet {
    pub fn new(mut samples: Vec<PercentileSample>) -> Result<Self, DistError> {
        if samples.is_empty() {
            return Err(DistError::Empty);
        }
        for s in &samples {
            if !s.percentile.is_finite() || !(0.0..=100.0).contains(&s.percentile) {
                return Err(DistError::BadPercentile(s.percentile));
            }
            if !s.value.is_finite() {
                return Err(DistError::BadValue(s.percentile));
            }
        }
        samples.sort_by(|a, b| a.percentile.partial_cmp(&b.percentile).unwrap());
        for w in samples.windows(2) {
            if w[0].percentile == w[1].percentile {
                return Err(DistError::DuplicatePercentile(w[0].percentile));
            }
        }
        Ok(PercentileSampleSet { samples })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, DistError> {
        Self::new(
            pairs
                .iter()
                .map(|&(percentile, value)| PercentileSample { percentile, value })
                .collect(),
        )
    }

    pub fn samples(&self) -> &[PercentileSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Value at percentile q, matched to within 1e-9.
    pub fn value_at(&self, q: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|s| (s.percentile - q).abs() <= 1e-9)
            .map(|s| s.value)
    }
}

/// Two-parameter characteristic distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    HalfCauchy,
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(Family::Normal),
            "half_cauchy" | "half-cauchy" => Ok(Family::HalfCauchy),
            other => Err(format!("unknown family `{other}` (expected normal or half_cauchy)")),
        }
    }
}

/// A fitted characteristic distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CharacteristicDistribution {
    Normal { mean: f64, std: f64 },
    HalfCauchy { location: f64, scale: f64 },
}

impl CharacteristicDistribution {
    pub fn family(&self) -> Family {
        match self {
            CharacteristicDistribution::Normal { .. } => Family::Normal,
            CharacteristicDistribution::HalfCauchy { .. } => Family::HalfCauchy,
        }
    }

    /// Central value used to normalize quantities (mean for the Normal,
    /// median for the half-Cauchy, whose mean is undefined).
    pub fn central_value(&self) -> f64 {
        match *self {
            CharacteristicDistribution::Normal { mean, .. } => mean,
            CharacteristicDistribution::HalfCauchy { location, scale } => location + scale,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            CharacteristicDistribution::Normal { mean, std } => normal_cdf(x, mean, std)
                .expect("fitted normal has positive scale"),
            CharacteristicDistribution::HalfCauchy { location, scale } => {
                if x <= location {
                    0.0
                } else {
                    (2.0 / std::f64::consts::PI) * ((x - location) / scale).atan()
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64, DistError> {
        if !(0.0 < p && p < 1.0) {
            return Err(DistError::BadProbability(p));
        }
        Ok(match *self {
            CharacteristicDistribution::Normal { mean, std } => normal_quantile(p, mean, std)?,
            CharacteristicDistribution::HalfCauchy { location, scale } => {
                location + scale * (std::f64::consts::PI * p / 2.0).tan()
            }
        })
    }
}

/// A transient physics quantity evaluated on one percentile segmentation.
#[derive(Debug, Clone)]
pub struct QuantitySeries {
    pub percentile: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl QuantitySeries {
    pub fn new(percentile: f64, times: Vec<f64>, values: Vec<f64>) -> Result<Self, DistError> {
        if !percentile.is_finite() || !(0.0..=100.0).contains(&percentile) {
            return Err(DistError::BadPercentile(percentile));
        }
        if times.is_empty()
            || times.len() != values.len()
            || times.windows(2).any(|w| !(w[0] < w[1]))
            || times.iter().chain(values.iter()).any(|v| !v.is_finite())
        {
            return Err(DistError::BadSeries);
        }
        Ok(QuantitySeries { percentile, times, values })
    }

    /// Linear interpolation; clamps to the endpoint values outside the range.
    pub fn sample_at(&self, t: f64) -> f64 {
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= *self.times.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

// --- Normal CDF / quantile -------------------------------------------------

/// Complementary error function via the rational Chebyshev approximation of
/// Press et al. (Numerical Recipes, erfcc). Fractional error below 1.2e-7
/// everywhere, which keeps the CDF within 1e-7 absolute.
fn erfc_approx(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z
        - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277))))))));
    let ans = t * poly.exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal CDF built from the upper-tail erfc so that Phi(0) = 0.5
/// exactly and Phi(-z) = 1 - Phi(z) holds by construction. The erfc value
/// is normalized by erfc_approx(0) (which is ~3e-9 off 1) to keep the two
/// branches continuous and monotone through z = 0.
fn std_normal_cdf(z: f64) -> f64 {
    if z == 0.0 {
        return 0.5;
    }
    let tail =
        0.5 * erfc_approx(z.abs() / std::f64::consts::SQRT_2) / erfc_approx(0.0);
    if z < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Normal CDF, accurate to <= 1e-7 absolute.
pub fn normal_cdf(x: f64, mean: f64, std: f64) -> Result<f64, DistError> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(DistError::BadScale(std));
    }
    Ok(std_normal_cdf((x - mean) / std))
}

/// Standard normal density.
fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Rational initial guess for the standard normal quantile (Acklam).
fn quantile_initial_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -quantile_initial_guess(1.0 - p)
    }
}

/// Normal quantile: rational initial guess refined by safeguarded Newton on
/// the CDF above, so cdf(quantile(p)) = p to well under 1e-9.
pub fn normal_quantile(p: f64, mean: f64, std: f64) -> Result<f64, DistError> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(DistError::BadScale(std));
    }
    if !(0.0 < p && p < 1.0) {
        return Err(DistError::BadProbability(p));
    }
    let mut z = quantile_initial_guess(p);
    // bisection bracket in case the initial guess is far off
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let f = std_normal_cdf(z) - p;
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        if hi - lo <= f64::EPSILON * z.abs().max(1.0) {
            break;
        }
        let d = phi(z);
        let mut next = z - f / d.max(f64::MIN_POSITIVE);
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if next == z {
            break;
        }
        z = next;
    }
    Ok(mean + std * z)
}

// --- Fitting ---------------------------------------------------------------

/// Characteristic Normal from the three standard segmentations: the 50.0
/// percentile value is the mean, half the spread between the 84.1 and 15.9
/// percentile values is the standard deviation.
pub fn fit_characteristic_normal(
    samples: &PercentileSampleSet,
) -> Result<CharacteristicDistribution, DistError> {
    let mut std_values = [0.0f64; 3];
    for (slot, q) in std_values.iter_mut().zip(crate::grid::standard_percentiles()) {
        *slot = samples
            .value_at(q)
            .ok_or(DistError::MissingStandardPercentile(q))?;
    }
    let mean = std_values[1];
    let std = (std_values[2] - std_values[0]) / 2.0;
    if !(std > 0.0) {
        return Err(DistError::NonMonotoneInput(std));
    }
    Ok(CharacteristicDistribution::Normal { mean, std })
}

/// Result of a least-squares quantile-family fit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuantileFit {
    pub dist: CharacteristicDistribution,
    pub residual_norm: f64,
}

fn family_basis(family: Family, q: f64) -> Result<f64, DistError> {
    let p = q / 100.0;
    match family {
        Family::Normal => {
            if !(0.0 < p && p < 1.0) {
                return Err(DistError::UnboundedBasis(q));
            }
            normal_quantile(p, 0.0, 1.0)
        }
        Family::HalfCauchy => {
            if !(0.0..1.0).contains(&p) {
                return Err(DistError::UnboundedBasis(q));
            }
            Ok((std::f64::consts::PI * p / 2.0).tan())
        }
    }
}

/// Ordinary least squares over the family's two-parameter linear quantile
/// basis: Q(p) = location + scale * b(p) with b the standard quantile.
pub fn fit_quantile_family(
    samples: &PercentileSampleSet,
    family: Family,
) -> Result<QuantileFit, DistError> {
    if samples.len() < 2 {
        return Err(DistError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let n = samples.len() as f64;
    let mut sb = 0.0;
    let mut sbb = 0.0;
    let mut sv = 0.0;
    let mut sbv = 0.0;
    let mut basis = Vec::with_capacity(samples.len());
    for s in samples.samples() {
        let b = family_basis(family, s.percentile)?;
        basis.push(b);
        sb += b;
        sbb += b * b;
        sv += s.value;
        sbv += b * s.value;
    }
    let det = n * sbb - sb * sb;
    if det.abs() <= 1e-12 * n * sbb.max(1.0) {
        return Err(DistError::SingularDesign);
    }
    let scale = (n * sbv - sb * sv) / det;
    let location = (sv - scale * sb) / n;
    let residual_norm = samples
        .samples()
        .iter()
        .zip(&basis)
        .map(|(s, b)| {
            let r = s.value - (location + scale * b);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    if !(scale > 0.0) {
        return Err(DistError::NonMonotoneInput(scale));
    }
    let dist = match family {
        Family::Normal => CharacteristicDistribution::Normal { mean: location, std: scale },
        Family::HalfCauchy => CharacteristicDistribution::HalfCauchy { location, scale },
    };
    Ok(QuantileFit { dist, residual_norm })
}

// --- Diagnostics -----------------------------------------------------------

/// Max over samples of |CDF_dist(value_i) - q_i / 100|, in CDF units.
pub fn goodness_of_fit(samples: &PercentileSampleSet, dist: &CharacteristicDistribution) -> f64 {
    samples
        .samples()
        .iter()
        .map(|s| (dist.cdf(s.value) - s.percentile / 100.0).abs())
        .fold(0.0, f64::max)
}

/// Default goodness-of-fit tolerance (CDF units) separating an adequate
/// characteristic fit from one that needs more percentile segmentations.
pub const DEFAULT_FIT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub monotone: bool,
    /// Expected direction, detected from the endpoint values.
    pub direction: Direction,
    /// Consecutive (value_i, value_{i+1}) pairs breaking the direction.
    pub violating_pairs: Vec<(f64, f64)>,
}

/// Checks whether values are monotone in percentile. The direction is
/// auto-detected from the endpoints and reported.
pub fn monotonicity_check(samples: &PercentileSampleSet) -> Result<MonotonicityReport, DistError> {
    if samples.len() < 2 {
        return Err(DistError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let vals: Vec<f64> = samples.samples().iter().map(|s| s.value).collect();
    let direction = if *vals.last().unwrap() >= vals[0] {
        Direction::Increasing
    } else {
        Direction::Decreasing
    };
    let violating_pairs: Vec<(f64, f64)> = vals
        .windows(2)
        .filter(|w| match direction {
            Direction::Increasing => w[1] < w[0],
            Direction::Decreasing => w[1] > w[0],
        })
        .map(|w| (w[0], w[1]))
        .collect();
    Ok(MonotonicityReport { monotone: violating_pairs.is_empty(), direction, violating_pairs })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnvelopeViolation {
    pub percentile: f64,
    pub time: f64,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    /// Violations of the band formed by the 15.9 and 84.1 percentile series.
    pub sigma_violations: Vec<EnvelopeViolation>,
    /// Violations of the 10/90 band, when both those series are present.
    pub decile_violations: Option<Vec<EnvelopeViolation>>,
    /// The common time grid (the 50.0 percentile series' grid).
    pub times: Vec<f64>,
}

fn find_series(series: &[QuantitySeries], q: f64) -> Option<&QuantitySeries> {
    series.iter().find(|s| (s.percentile - q).abs() <= 1e-9)
}

fn band_violations(
    series: &[QuantitySeries],
    times: &[f64],
    lo_q: f64,
    hi_q: f64,
) -> Option<Vec<EnvelopeViolation>> {
    let a = find_series(series, lo_q)?;
    let b = find_series(series, hi_q)?;
    // only percentiles strictly inside (lo_q, hi_q) are expected to stay
    // within the band; more extreme percentiles legitimately sit outside
    let mut out = Vec::new();
    for s in series {
        if s.percentile <= lo_q + 1e-9 || s.percentile >= hi_q - 1e-9 {
            continue;
        }
        for &t in times {
            let (va, vb) = (a.sample_at(t), b.sample_at(t));
            let (lower, upper) = (va.min(vb), vb.max(va));
            let v = s.sample_at(t);
            let eps = 1e-12 * (1.0 + upper.abs().max(lower.abs()));
            if v < lower - eps || v > upper + eps {
                out.push(EnvelopeViolation {
                    percentile: s.percentile,
                    time: t,
                    value: v,
                    lower,
                    upper,
                });
            }
        }
    }
    Some(out)
}

/// Per-time bound check of every series against the band formed by the
/// mu-sigma / mu+sigma (15.9 / 84.1) percentile series, and against the
/// 10/90 band when those series are supplied. All series are resampled by
/// linear interpolation onto the 50.0 percentile series' time grid.
pub fn envelope_check(series: &[QuantitySeries]) -> Result<EnvelopeReport, DistError> {
    for q in crate::grid::standard_percentiles() {
        if find_series(series, q).is_none() {
            return Err(DistError::MissingSeries(q));
        }
    }
    let times = find_series(series, 50.0).unwrap().times.clone();
    let sigma_violations = band_violations(series, &times, 15.9, 84.1).unwrap();
    let decile_violations = band_violations(series, &times, 10.0, 90.0);
    Ok(EnvelopeReport { sigma_violations, decile_violations, times })
}

/// Suggests up to `budget` new percentiles where the fitted CDF deviates
/// most from the samples.
///
/// If the fit already meets `tol`, returns nothing. Otherwise intervals
/// between consecutive sampled percentiles (with implicit 0 and 100
/// endpoints) are scored by the summed CDF deviation at their endpoints
/// (implicit endpoints inherit the adjacent sample's deviation) and the
/// midpoints of the highest-scoring intervals are returned, largest first.
pub fn suggest_percentiles(
    samples: &PercentileSampleSet,
    dist: &CharacteristicDistribution,
    tol: f64,
    budget: usize,
) -> Vec<f64> {
    if budget == 0 || goodness_of_fit(samples, dist) <= tol {
        return Vec::new();
    }
    let devs: Vec<(f64, f64)> = samples
        .samples()
        .iter()
        .map(|s| (s.percentile, (dist.cdf(s.value) - s.percentile / 100.0).abs()))
        .collect();
    // interval endpoints: 0, q_1 .. q_n, 100 (dedup exact boundary samples)
    let mut intervals: Vec<(f64, f64, f64)> = Vec::new(); // (lo, hi, score)
    let first = devs.first().unwrap();
    let last = devs.last().unwrap();
    if first.0 > 0.0 {
        intervals.push((0.0, first.0, 2.0 * first.1));
    }
    for w in devs.windows(2) {
        intervals.push((w[0].0, w[1].0, w[0].1 + w[1].1));
    }
    if last.0 < 100.0 {
        intervals.push((last.0, 100.0, 2.0 * last.1));
    }
    intervals.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(a.0.partial_cmp(&b.0).unwrap())
    });
    let existing: Vec<f64> = devs.iter().map(|d| d.0).collect();
    let mut out = Vec::new();
    for (lo, hi, _) in intervals {
        if out.len() == budget {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let taken = existing
            .iter()
            .chain(out.iter())
            .any(|&q| (q - mid).abs() <= 1e-9);
        if mid > 0.0 && mid < 100.0 && !taken {
            out.push(mid);
        }
    }
    out
}

/// Empirical CDF points with the plotting position of each sample fixed to
/// its own percentile / 100.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalCdf {
    /// (value, cdf) points sorted by value.
    pub points: Vec<(f64, f64)>,
    /// False when sorting by value disagreed with the percentile order,
    /// i.e. the quantity is non-monotone in percentile.
    pub order_consistent: bool,
}

pub fn empirical_cdf(samples: &PercentileSampleSet) -> EmpiricalCdf {
    let mut points: Vec<(f64, f64)> = samples
        .samples()
        .iter()
        .map(|s| (s.value, s.percentile / 100.0))
        .collect();
    let order_consistent = points.windows(2).all(|w| w[0].0 <= w[1].0);
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    EmpiricalCdf { points, order_consistent }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard_set(v: [f64; 3]) -> PercentileSampleSet {
        PercentileSampleSet::from_pairs(&[(15.9, v[0]), (50.0, v[1]), (84.1, v[2])]).unwrap()
    }

    #[test]
    fn characteristic_normal_from_standard_values() {
        let fit = fit_characteristic_normal(&standard_set([8.0, 10.0, 12.0])).unwrap();
        assert_eq!(fit, CharacteristicDistribution::Normal { mean: 10.0, std: 2.0 });
    }

    #[test]
    fn characteristic_normal_recovers_exact_quantiles() {
        let (mu, sigma) = (3.0, 0.5);
        let vals: Vec<(f64, f64)> = crate::grid::standard_percentiles()
            .iter()
            .map(|&q| (q, normal_quantile(q / 100.0, mu, sigma).unwrap()))
            .collect();
        let fit = fit_characteristic_normal(&PercentileSampleSet::from_pairs(&vals).unwrap())
            .unwrap();
        match fit {
            CharacteristicDistribution::Normal { mean, std } => {
                assert!((mean - mu).abs() < 1e-12);
                // sigma recovery limited by how exactly 15.9/84.1 sit at
                // -+1 sigma: Phi^-1(0.841) = 0.99858, a ~0.14% offset
                assert!((std - sigma).abs() < 1e-3, "std = {std}");
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn characteristic_normal_rejects_degenerate_spread() {
        let err = fit_characteristic_normal(&standard_set([10.0, 10.0, 10.0])).unwrap_err();
        assert!(matches!(err, DistError::NonMonotoneInput(_)));
    }

    #[test]
    fn characteristic_normal_requires_all_standard_percentiles() {
        let set = PercentileSampleSet::from_pairs(&[(15.9, 1.0), (50.0, 2.0)]).unwrap();
        assert!(matches!(
            fit_characteristic_normal(&set),
            Err(DistError::MissingStandardPercentile(q)) if (q - 84.1).abs() < 1e-9
        ));
    }

    #[test]
    fn normal_cdf_symmetry_and_sigma_point() {
        assert_eq!(normal_cdf(1.5, 1.5, 2.0).unwrap(), 0.5);
        let p = normal_cdf(1.0, 0.0, 1.0).unwrap();
        assert!((p - 0.8413).abs() < 1e-4, "cdf(mu+sigma) = {p}");
    }

    #[test]
    fn normal_cdf_matches_independent_oracle() {
        let oracle = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let mut worst = 0.0f64;
        let mut z = -8.0;
        while z <= 8.0 {
            let got = normal_cdf(z, 0.0, 1.0).unwrap();
            worst = worst.max((got - oracle.cdf(z)).abs());
            z += 0.01;
        }
        assert!(worst <= 1e-7, "max abs CDF error {worst}");
    }

    #[test]
    fn quantile_cdf_round_trip() {
        // cdf(quantile(p)) = p to 1e-9 across the open interval
        for &p in &[1e-6, 1e-3, 0.1, 0.25, 0.5, 0.75, 0.841, 0.999, 1.0 - 1e-6] {
            let x = normal_quantile(p, 2.0, 3.0).unwrap();
            assert!((normal_cdf(x, 2.0, 3.0).unwrap() - p).abs() <= 1e-9, "p = {p}");
        }
        // quantile(cdf(x)) = x to 1e-9 over mu +- 5.5 sigma; beyond that the
        // f64 resolution of probabilities near 1 caps the attainable accuracy
        let (mu, sigma) = (-1.0, 0.7);
        let mut x = mu - 5.5 * sigma;
        while x <= mu + 5.5 * sigma {
            let p = normal_cdf(x, mu, sigma).unwrap();
            let back = normal_quantile(p, mu, sigma).unwrap();
            assert!((back - x).abs() <= 1e-9 * (1.0 + x.abs()), "x = {x}, back = {back}");
            x += 0.11;
        }
    }

    #[test]
    fn quantile_rejects_domain_violations() {
        assert!(normal_quantile(0.0, 0.0, 1.0).is_err());
        assert!(normal_quantile(1.0, 0.0, 1.0).is_err());
        assert!(normal_cdf(0.0, 0.0, 0.0).is_err());
        assert!(normal_cdf(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn half_cauchy_ls_exact_recovery() {
        let (x0, gamma) = (1.0, 2.0);
        let pairs: Vec<(f64, f64)> = (0..11)
            .map(|i| {
                let q = 5.0 + 9.0 * i as f64; // 5 .. 95
                let p = q / 100.0;
                (q, x0 + gamma * (std::f64::consts::PI * p / 2.0).tan())
            })
            .collect();
        let fit = fit_quantile_family(
            &PercentileSampleSet::from_pairs(&pairs).unwrap(),
            Family::HalfCauchy,
        )
        .unwrap();
        match fit.dist {
            CharacteristicDistribution::HalfCauchy { location, scale } => {
                assert!((location - x0).abs() <= 1e-9);
                assert!((scale - gamma).abs() <= 1e-9);
            }
            _ => unreachable!(),
        }
        assert!(fit.residual_norm <= 1e-9);
    }

    #[test]
    fn normal_ls_on_standard_points_matches_characteristic_fit() {
        let set = standard_set([8.0, 10.0, 12.0]);
        let direct = fit_characteristic_normal(&set).unwrap();
        let ls = fit_quantile_family(&set, Family::Normal).unwrap();
        match (direct, ls.dist) {
            (
                CharacteristicDistribution::Normal { mean: m1, std: s1 },
                CharacteristicDistribution::Normal { mean: m2, std: s2 },
            ) => {
                // LS interpolates 3 near-collinear points; the gap is the
                // 15.9/84.1 percentiles not sitting exactly at -+1 sigma
                // (Phi^-1(0.841) = 0.99858, so the slopes differ by ~0.3%)
                assert!((m1 - m2).abs() < 1e-3);
                assert!((s1 - s2).abs() < 5e-3);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn two_point_normal_fit_interpolates() {
        let set = PercentileSampleSet::from_pairs(&[(20.0, 1.0), (80.0, 3.0)]).unwrap();
        let fit = fit_quantile_family(&set, Family::Normal).unwrap();
        assert!(fit.residual_norm <= 1e-12);
        assert!(goodness_of_fit(&set, &fit.dist) <= 1e-9);
    }

    #[test]
    fn quantile_family_rejects_unbounded_basis() {
        let set = PercentileSampleSet::from_pairs(&[(0.0, 1.0), (50.0, 2.0)]).unwrap();
        assert!(matches!(
            fit_quantile_family(&set, Family::Normal),
            Err(DistError::UnboundedBasis(_))
        ));
        let set = PercentileSampleSet::from_pairs(&[(50.0, 1.0), (100.0, 2.0)]).unwrap();
        assert!(matches!(
            fit_quantile_family(&set, Family::HalfCauchy),
            Err(DistError::UnboundedBasis(_))
        ));
    }

    #[test]
    fn goodness_of_fit_zero_on_self_consistent_samples() {
        let dist = CharacteristicDistribution::Normal { mean: 4.0, std: 0.25 };
        let pairs: Vec<(f64, f64)> = [10.0, 30.0, 50.0, 70.0, 90.0]
            .iter()
            .map(|&q| (q, dist.quantile(q / 100.0).unwrap()))
            .collect();
        let set = PercentileSampleSet::from_pairs(&pairs).unwrap();
        assert!(goodness_of_fit(&set, &dist) <= 1e-9);
    }

    #[test]
    fn goodness_of_fit_detects_heavy_tails() {
        // samples from a half-Cauchy generator, judged against a Normal fit
        let gen = CharacteristicDistribution::HalfCauchy { location: 0.0, scale: 1.0 };
        let pairs: Vec<(f64, f64)> = [5.0, 15.9, 30.0, 50.0, 70.0, 84.1, 95.0]
            .iter()
            .map(|&q| (q, gen.quantile(q / 100.0).unwrap()))
            .collect();
        let set = PercentileSampleSet::from_pairs(&pairs).unwrap();
        let normal = fit_characteristic_normal(&set).unwrap();
        assert!(goodness_of_fit(&set, &normal) > 0.05);
    }

    #[test]
    fn goodness_of_fit_single_sample_at_median() {
        let dist = CharacteristicDistribution::Normal { mean: 7.0, std: 1.0 };
        let set = PercentileSampleSet::from_pairs(&[(50.0, 7.0)]).unwrap();
        assert_eq!(goodness_of_fit(&set, &dist), 0.0);
    }

    #[test]
    fn monotonicity_check_directions_and_violations() {
        let inc = PercentileSampleSet::from_pairs(&[(10.0, 1.0), (50.0, 2.0), (90.0, 3.0)]).unwrap();
        let r = monotonicity_check(&inc).unwrap();
        assert!(r.monotone);
        assert_eq!(r.direction, Direction::Increasing);

        let bad = PercentileSampleSet::from_pairs(&[(10.0, 1.0), (50.0, 3.0), (90.0, 2.0)]).unwrap();
        let r = monotonicity_check(&bad).unwrap();
        assert!(!r.monotone);
        assert_eq!(r.violating_pairs, vec![(3.0, 2.0)]);

        let dec = PercentileSampleSet::from_pairs(&[(10.0, 3.0), (50.0, 2.0), (90.0, 1.0)]).unwrap();
        let r = monotonicity_check(&dec).unwrap();
        assert!(r.monotone);
        assert_eq!(r.direction, Direction::Decreasing);
    }

    fn series(q: f64, f: impl Fn(f64) -> f64) -> QuantitySeries {
        let times: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        QuantitySeries::new(q, times, values).unwrap()
    }

    #[test]
    fn envelope_no_violations_for_monotone_family() {
        let fam: Vec<QuantitySeries> = [10.0, 15.9, 50.0, 84.1, 90.0]
            .iter()
            .map(|&q| series(q, move |t| q / 100.0 * (1.0 + t.sin().abs())))
            .collect();
        let report = envelope_check(&fam).unwrap();
        assert!(report.sigma_violations.is_empty());
        assert!(report.decile_violations.unwrap().is_empty());
    }

    #[test]
    fn envelope_detects_constructed_crossing() {
        // mu series exceeds the 84.1 series exactly on t in [5, 7]
        let lo = series(15.9, |_| 0.0);
        let hi = series(84.1, |_| 1.0);
        let mu = series(50.0, |t| if (5.0..=7.0).contains(&t) { 1.5 } else { 0.5 });
        let report = envelope_check(&[lo, hi, mu]).unwrap();
        let times: Vec<f64> = report.sigma_violations.iter().map(|v| v.time).collect();
        assert_eq!(times, vec![5.0, 5.5, 6.0, 6.5, 7.0]);
        assert!(report.sigma_violations.iter().all(|v| v.percentile == 50.0));
        assert!(report.decile_violations.is_none());
    }

    #[test]
    fn envelope_single_time_point_acts_as_scalar_bounds() {
        let mk = |q: f64, v: f64| QuantitySeries::new(q, vec![0.0], vec![v]).unwrap();
        let report =
            envelope_check(&[mk(15.9, 1.0), mk(50.0, 5.0), mk(84.1, 2.0)]).unwrap();
        assert_eq!(report.sigma_violations.len(), 1);
        assert_eq!(report.sigma_violations[0].value, 5.0);
    }

    #[test]
    fn envelope_requires_standard_series() {
        let mk = |q: f64, v: f64| QuantitySeries::new(q, vec![0.0], vec![v]).unwrap();
        assert!(matches!(
            envelope_check(&[mk(15.9, 1.0), mk(84.1, 2.0)]),
            Err(DistError::MissingSeries(q)) if (q - 50.0).abs() < 1e-9
        ));
    }

    #[test]
    fn suggest_percentiles_perfect_fit_and_budget_zero() {
        let dist = CharacteristicDistribution::Normal { mean: 0.0, std: 1.0 };
        let pairs: Vec<(f64, f64)> = [15.9, 50.0, 84.1]
            .iter()
            .map(|&q| (q, dist.quantile(q / 100.0).unwrap()))
            .collect();
        let set = PercentileSampleSet::from_pairs(&pairs).unwrap();
        assert!(suggest_percentiles(&set, &dist, 0.05, 4).is_empty());

        let off = PercentileSampleSet::from_pairs(&[(15.9, -5.0), (50.0, 0.0), (84.1, 5.0)])
            .unwrap();
        assert!(suggest_percentiles(&off, &dist, 0.05, 0).is_empty());
    }

    #[test]
    fn suggest_percentiles_midpoint_of_worst_interval() {
        // deviation concentrated at the 84.1 sample: the (84.1, 100) interval
        // scores highest, so 92.05 comes first
        let dist = CharacteristicDistribution::Normal { mean: 0.0, std: 1.0 };
        let mut pairs: Vec<(f64, f64)> = [15.9, 50.0]
            .iter()
            .map(|&q| (q, dist.quantile(q / 100.0).unwrap()))
            .collect();
        pairs.push((84.1, 10.0)); // way off the fitted curve
        let set = PercentileSampleSet::from_pairs(&pairs).unwrap();
        let suggested = suggest_percentiles(&set, &dist, 0.05, 3);
        assert!(!suggested.is_empty());
        assert!((suggested[0] - 92.05).abs() < 1e-9, "first suggestion {suggested:?}");
        // no duplicates, all strictly inside (0, 100), none already sampled
        for (i, &a) in suggested.iter().enumerate() {
            assert!(a > 0.0 && a < 100.0);
            assert!(pairs.iter().all(|&(q, _)| (q - a).abs() > 1e-9));
            assert!(suggested[i + 1..].iter().all(|&b| (a - b).abs() > 1e-9));
        }
    }

    #[test]
    fn empirical_cdf_positions_and_flagging() {
        let set = standard_set([1.0, 2.0, 3.0]);
        let e = empirical_cdf(&set);
        assert!(e.order_consistent);
        assert_eq!(e.points, vec![(1.0, 0.159), (2.0, 0.5), (3.0, 0.841)]);

        let set = standard_set([1.0, 3.0, 2.0]);
        let e = empirical_cdf(&set);
        assert!(!e.order_consistent);
        assert_eq!(e.points, vec![(1.0, 0.159), (2.0, 0.841), (3.0, 0.5)]);

        let one = PercentileSampleSet::from_pairs(&[(50.0, 4.2)]).unwrap();
        assert_eq!(empirical_cdf(&one).points, vec![(4.2, 0.5)]);
    }

    #[test]
    fn fit_is_affine_equivariant() {
        let set = standard_set([8.0, 10.0, 12.0]);
        let (a, b) = (2.5, -7.0);
        let scaled = standard_set([a * 8.0 + b, a * 10.0 + b, a * 12.0 + b]);
        let f1 = fit_characteristic_normal(&set).unwrap();
        let f2 = fit_characteristic_normal(&scaled).unwrap();
        match (f1, f2) {
            (
                CharacteristicDistribution::Normal { mean: m1, std: s1 },
                CharacteristicDistribution::Normal { mean: m2, std: s2 },
            ) => {
                assert!((m2 - (a * m1 + b)).abs() < 1e-12);
                assert!((s2 - a * s1).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
    }
}
