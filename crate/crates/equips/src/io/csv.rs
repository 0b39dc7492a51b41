//! CSV schemas for distribution output and external quantity input.
//!
//! Plain `.` decimals, LF line endings, no locale. Floats are written with
//! Rust's shortest round-trip formatting, so read(write(x)) is value-exact.

use std::io::Write;
use std::path::Path;

use super::IoError;
use crate::dist::{
    CharacteristicDistribution, PercentileSample, PercentileSampleSet, QuantitySeries,
};

/// Writes the uncertainty-distribution CSV: one row per sample, sorted by
/// percentile. `normalized_quantity` (quantity over the fit's central
/// value) and `fit_cdf` are filled only when a fit is supplied.
pub fn write_distribution_csv(
    path: &Path,
    samples: &PercentileSampleSet,
    fit: Option<&CharacteristicDistribution>,
) -> Result<(), IoError> {
    if samples.is_empty() {
        return Err(IoError::EmptySamples);
    }
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| IoError::io(path, e))?,
    );
    let write = |w: &mut dyn Write, s: &str| {
        w.write_all(s.as_bytes()).map_err(|e| IoError::io(path, e))
    };
    write(&mut w, "percentile,threshold,quantity,normalized_quantity,fit_cdf\n")?;
    for s in samples.samples() {
        let threshold = 1.0 - s.percentile / 100.0;
        let (norm, cdf) = match fit {
            Some(d) => (
                format!("{}", s.value / d.central_value()),
                format!("{}", d.cdf(s.value)),
            ),
            None => (String::new(), String::new()),
        };
        write(
            &mut w,
            &format!("{},{},{},{},{}\n", s.percentile, threshold, s.value, norm, cdf),
        )?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Parsed contents of a quantity CSV.
#[derive(Debug)]
pub enum QuantityData {
    /// `percentile,quantity` rows.
    Scalar(PercentileSampleSet),
    /// `percentile,time,value` rows grouped per percentile, sorted by
    /// percentile.
    Series(Vec<QuantitySeries>),
}

fn parse_field(path: &Path, line: usize, name: &str, raw: &str) -> Result<f64, IoError> {
    raw.trim().parse::<f64>().map_err(|_| IoError::MalformedCsv {
        path: path.to_path_buf(),
        line,
        reason: format!("cannot parse {name} from `{raw}`"),
    })
}

/// Reads either scalar quantities or time series, depending on the header.
pub fn read_quantity_csv(path: &Path) -> Result<QuantityData, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| IoError::MalformedCsv {
        path: path.to_path_buf(),
        line: 1,
        reason: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    match cols.as_slice() {
        ["percentile", "quantity"] => {
            let mut pairs = Vec::new();
            for (i, raw) in lines {
                if raw.trim().is_empty() {
                    continue;
                }
                let line = i + 1;
                let fields: Vec<&str> = raw.split(',').collect();
                if fields.len() != 2 {
                    return Err(IoError::MalformedCsv {
                        path: path.to_path_buf(),
                        line,
                        reason: format!("expected 2 fields, got {}", fields.len()),
                    });
                }
                pairs.push((
                    parse_field(path, line, "percentile", fields[0])?,
                    parse_field(path, line, "quantity", fields[1])?,
                ));
            }
            let samples = PercentileSampleSet::new(
                pairs
                    .into_iter()
                    .map(|(percentile, value)| PercentileSample { percentile, value })
                    .collect(),
            )?;
            Ok(QuantityData::Scalar(samples))
        }
        ["percentile", "time", "value"] => {
            // group rows by percentile, preserving row order per group
            let mut groups: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
            for (i, raw) in lines {
                if raw.trim().is_empty() {
                    continue;
                }
                let line = i + 1;
                let fields: Vec<&str> = raw.split(',').collect();
                if fields.len() != 3 {
                    return Err(IoError::MalformedCsv {
                        path: path.to_path_buf(),
                        line,
                        reason: format!("expected 3 fields, got {}", fields.len()),
                    });
                }
                let q = parse_field(path, line, "percentile", fields[0])?;
                let t = parse_field(path, line, "time", fields[1])?;
                let v = parse_field(path, line, "value", fields[2])?;
                match groups.iter_mut().find(|g| g.0 == q) {
                    Some(g) => {
                        g.1.push(t);
                        g.2.push(v);
                    }
                    None => groups.push((q, vec![t], vec![v])),
                }
            }
            groups.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let series = groups
                .into_iter()
                .map(|(q, times, values)| QuantitySeries::new(q, times, values))
                .collect::<Result<Vec<_>, _>>()?;
            if series.is_empty() {
                return Err(IoError::MalformedCsv {
                    path: path.to_path_buf(),
                    line: 1,
                    reason: "no data rows".into(),
                });
            }
            Ok(QuantityData::Series(series))
        }
        _ => Err(IoError::MalformedCsv {
            path: path.to_path_buf(),
            line: 1,
            reason: format!(
                "unrecognized header `{header}` (expected `percentile,quantity` or `percentile,time,value`)"
            ),
        }),
    }
}
