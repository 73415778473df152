use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::rank::{spearman, CorrelationResult};
use crate::decay::{DecayFit, FitStatus};
use crate::retention::SampleMeta;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassForgettingRow {
    pub class_label: String,
    pub train_size: usize,
    /// Raw `λ`, without the scheduler floor.
    pub mean_lambda: f64,
    pub pct_never_forgotten: f64,
}

/// Per-class mean `λ` and never-forgotten share, sorted by mean `λ`
/// descending (ties by class label).
pub fn class_table(fits: &[DecayFit], meta: &[SampleMeta]) -> Result<Vec<ClassForgettingRow>> {
    let by_id: HashMap<&str, &SampleMeta> = meta.iter().map(|m| (m.sample_id.as_str(), m)).collect();
    // Members are summed in sample-id order so the means do not depend on
    // input order.
    let mut groups: BTreeMap<&str, Vec<&DecayFit>> = BTreeMap::new();
    for fit in fits {
        let m = by_id
            .get(fit.sample_id.as_str())
            .ok_or_else(|| Error::UnknownClassLabel(fit.sample_id.clone()))?;
        groups.entry(m.class_label.as_str()).or_default().push(fit);
    }
    let mut rows: Vec<ClassForgettingRow> = groups
        .into_iter()
        .map(|(class, mut members)| {
            members.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
            let size = members.len();
            let sum: f64 = members.iter().map(|f| f.lambda).sum();
            let never = members
                .iter()
                .filter(|f| f.fit_status == FitStatus::NeverForgotten)
                .count();
            ClassForgettingRow {
                class_label: class.to_owned(),
                train_size: size,
                mean_lambda: sum / size as f64,
                pct_never_forgotten: 100.0 * never as f64 / size as f64,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mean_lambda
            .total_cmp(&a.mean_lambda)
            .then_with(|| a.class_label.cmp(&b.class_label))
    });
    Ok(rows)
}

/// Spearman correlation between warmup loss and fitted `λ`, aligned by id.
pub fn early_loss_correlation(fits: &[DecayFit], meta: &[SampleMeta]) -> Result<CorrelationResult> {
    let by_id: HashMap<&str, f64> = meta
        .iter()
        .map(|m| (m.sample_id.as_str(), m.phase1_loss))
        .collect();
    let mut losses = Vec::with_capacity(fits.len());
    let mut lambdas = Vec::with_capacity(fits.len());
    for fit in fits {
        let loss = by_id
            .get(fit.sample_id.as_str())
            .ok_or_else(|| Error::MissingLoss(fit.sample_id.clone()))?;
        losses.push(*loss);
        lambdas.push(fit.lambda);
    }
    spearman(&losses, &lambdas)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateStat {
    pub mean: f64,
    /// Population standard deviation (divisor `n`).
    pub std: f64,
    pub n_seeds: usize,
}

pub fn aggregate_over_seeds(values: &[f64]) -> Result<AggregateStat> {
    if values.is_empty() {
        return Err(Error::TooFewObservations { got: 0, min: 1 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("aggregated values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(AggregateStat {
        mean,
        std: var.sqrt(),
        n_seeds: values.len(),
    })
}

/// Mean R² over samples that have one (imputed samples are skipped).
pub fn mean_r2(fits: &[DecayFit]) -> Result<f64> {
    let values: Vec<f64> = fits.iter().filter_map(|f| f.r_squared).collect();
    if values.is_empty() {
        return Err(Error::NoFittedSamples);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn mean_r2_split(fits_a: &[DecayFit], fits_b: &[DecayFit]) -> Result<(f64, f64)> {
    Ok((mean_r2(fits_a)?, mean_r2(fits_b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retention::Split;

    fn fit(id: &str, lambda: f64, status: FitStatus, r2: Option<f64>) -> DecayFit {
        DecayFit {
            sample_id: id.into(),
            lambda,
            fit_status: status,
            r_squared: r2,
            sse: None,
        }
    }

    fn meta(id: &str, class: &str, loss: f64) -> SampleMeta {
        SampleMeta {
            sample_id: id.into(),
            class_label: class.into(),
            phase1_loss: loss,
            split: Split::Train,
        }
    }

    #[test]
    fn single_class_never_forgotten() {
        let fits = vec![
            fit("a", 0.0, FitStatus::NeverForgotten, Some(1.0)),
            fit("b", 0.0, FitStatus::NeverForgotten, Some(1.0)),
        ];
        let m = vec![meta("a", "x", 0.1), meta("b", "x", 0.2)];
        let t = class_table(&fits, &m).unwrap();
        assert_eq!(
            t,
            vec![ClassForgettingRow {
                class_label: "x".into(),
                train_size: 2,
                mean_lambda: 0.0,
                pct_never_forgotten: 100.0
            }]
        );
    }

    #[test]
    fn two_classes_by_hand() {
        // class p: λ {0, 2, 4} -> mean 2, 1/3 never forgotten
        // class q: λ {0, 0, 1, 10 (imputed)} -> mean 2.75, 2/4 never forgotten
        let fits = vec![
            fit("p1", 0.0, FitStatus::NeverForgotten, Some(1.0)),
            fit("p2", 2.0, FitStatus::Fitted, Some(0.5)),
            fit("p3", 4.0, FitStatus::Fitted, Some(0.5)),
            fit("q1", 0.0, FitStatus::NeverForgotten, Some(1.0)),
            fit("q2", 0.0, FitStatus::NeverForgotten, Some(1.0)),
            fit("q3", 1.0, FitStatus::Fitted, Some(0.2)),
            fit("q4", 10.0, FitStatus::NeverLearnedImputed, None),
        ];
        let m: Vec<SampleMeta> = fits
            .iter()
            .map(|f| meta(&f.sample_id, &f.sample_id[..1], 0.0))
            .collect();
        let t = class_table(&fits, &m).unwrap();
        assert_eq!(t[0].class_label, "q");
        assert_eq!(t[0].train_size, 4);
        assert_eq!(t[0].mean_lambda, 2.75);
        assert_eq!(t[0].pct_never_forgotten, 50.0);
        assert_eq!(t[1].class_label, "p");
        assert_eq!(t[1].mean_lambda, 2.0);
        assert!((t[1].pct_never_forgotten - 100.0 / 3.0).abs() < 1e-12);

        let mut reversed = fits.clone();
        reversed.reverse();
        assert_eq!(class_table(&reversed, &m).unwrap(), t);

        assert!(matches!(
            class_table(&fits, &m[1..]),
            Err(Error::UnknownClassLabel(id)) if id == "p1"
        ));
    }

    #[test]
    fn early_loss_identity() {
        let fits: Vec<DecayFit> = (0..15)
            .map(|i| fit(&format!("s{i:02}"), i as f64 * 0.3, FitStatus::Fitted, None))
            .collect();
        let m: Vec<SampleMeta> = fits.iter().map(|f| meta(&f.sample_id, "c", f.lambda)).collect();
        let r = early_loss_correlation(&fits, &m).unwrap();
        assert_eq!(r.rho, 1.0);
        assert!(matches!(
            early_loss_correlation(&fits, &m[..3]),
            Err(Error::MissingLoss(_))
        ));
    }

    #[test]
    fn aggregate_uses_population_std() {
        let a = aggregate_over_seeds(&[0.344, 0.331, 0.357]).unwrap();
        assert!((a.mean - 0.344).abs() < 1e-12);
        // sqrt((0 + 0.013² + 0.013²) / 3)
        assert!((a.std - (2.0 * 0.013f64.powi(2) / 3.0).sqrt()).abs() < 1e-12);
        assert!((a.std - 0.010_614_455_552_060_425).abs() < 1e-12);
        assert_eq!(a.n_seeds, 3);

        assert_eq!(aggregate_over_seeds(&[5.0]).unwrap().std, 0.0);
        assert_eq!(aggregate_over_seeds(&[1.0, 1.0, 1.0]).unwrap().std, 0.0);
        assert!(aggregate_over_seeds(&[]).is_err());
    }

    #[test]
    fn mean_r2_skips_imputed() {
        let a = vec![
            fit("a", 0.0, FitStatus::NeverForgotten, Some(1.0)),
            fit("b", 1.0, FitStatus::Fitted, Some(0.25)),
            fit("c", 0.5, FitStatus::Fitted, Some(-0.1)),
            fit("d", 9.0, FitStatus::NeverLearnedImputed, None),
        ];
        let b = vec![fit("a", 0.0, FitStatus::NeverForgotten, Some(1.0))];
        let (ma, mb) = mean_r2_split(&a, &b).unwrap();
        assert!((ma - 1.15 / 3.0).abs() < 1e-15);
        assert_eq!(mb, 1.0);
        let imputed_only = vec![fit("d", 9.0, FitStatus::NeverLearnedImputed, None)];
        assert!(matches!(mean_r2(&imputed_only), Err(Error::NoFittedSamples)));
    }
}
