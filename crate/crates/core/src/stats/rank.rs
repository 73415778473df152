use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::overlap::RankedLambdaSet;
use crate::{Error, Result};

/// Largest sample size for which p-values come from full permutation
/// enumeration (10! ≈ 3.6M orderings).
pub const EXACT_PERMUTATION_MAX_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    ExactPermutation,
    TApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub rho: f64,
    /// Two-sided.
    pub p_value: f64,
    pub n: usize,
    pub method: CorrelationMethod,
}

/// 1-based ranks with ties replaced by the average of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewObservations { got: x.len(), min: 2 });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input"));
    }
    Ok(())
}

/// Pearson correlation of two rank vectors; `None` when either is constant.
pub(crate) fn pearson(rx: &[f64], ry: &[f64]) -> Option<f64> {
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(ry) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ only, without a p-value.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    rho_of_ranks(&average_ranks(x), &average_ranks(y))
}

fn rho_of_ranks(rx: &[f64], ry: &[f64]) -> Result<f64> {
    if rx.iter().all(|&r| r == rx[0]) {
        return Err(Error::ZeroVariance("x"));
    }
    if ry.iter().all(|&r| r == ry[0]) {
        return Err(Error::ZeroVariance("y"));
    }
    Ok(pearson(rx, ry).expect("both rank vectors vary"))
}

/// Spearman rank correlation with a two-sided p-value.
///
/// Ties get average ranks. For `n ≤ 10` the p-value is the fraction of all
/// `n!` reorderings of `y` whose `|ρ|` is at least the observed `|ρ|`; above
/// that it comes from `t = ρ √((n-2)/(1-ρ²))` against Student's t with `n - 2`
/// degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_pair(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = rho_of_ranks(&rx, &ry)?;
    let n = x.len();
    if n <= EXACT_PERMUTATION_MAX_N {
        Ok(CorrelationResult {
            rho,
            p_value: exact_permutation_p(&rx, &ry),
            n,
            method: CorrelationMethod::ExactPermutation,
        })
    } else {
        Ok(CorrelationResult {
            rho,
            p_value: t_approximation_p(rho, n),
            n,
            method: CorrelationMethod::TApproximation,
        })
    }
}

/// Average ranks are multiples of 1/2 and the mean rank is always (n+1)/2,
/// so `Σ (2rx)(2ry) - n(n+1)²` is an exact integer proportional to ρ. The
/// permutation count compares these integers instead of floating-point ρ.
fn exact_permutation_p(rx: &[f64], ry: &[f64]) -> f64 {
    let n = rx.len();
    let a: Vec<i64> = rx.iter().map(|r| (2.0 * r).round() as i64).collect();
    let mut b: Vec<i64> = ry.iter().map(|r| (2.0 * r).round() as i64).collect();
    let offset = n as i64 * (n as i64 + 1).pow(2);
    let stat = |b: &[i64]| -> i64 { a.iter().zip(b).map(|(p, q)| p * q).sum::<i64>() - offset };
    let observed = stat(&b).abs();

    // Heap's algorithm, iterative form.
    let mut hits: u64 = u64::from(stat(&b).abs() >= observed);
    let mut total: u64 = 1;
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                b.swap(0, i);
            } else {
                b.swap(c[i], i);
            }
            total += 1;
            if stat(&b).abs() >= observed {
                hits += 1;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

fn t_approximation_p(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let rho = rho.clamp(-1.0, 1.0);
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = rho * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedPairCorrelation {
    pub run_a: String,
    pub run_b: String,
    pub shared_samples: usize,
    pub correlation: CorrelationResult,
}

/// `λ` vectors of two runs aligned on their shared ids (sorted by id).
pub(crate) fn aligned(a: &RankedLambdaSet, b: &RankedLambdaSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = a.restrict_to_shared(b)?;
    let b = b.restrict_to_shared(&a)?;
    Ok((
        a.entries().iter().map(|e| e.1).collect(),
        b.entries().iter().map(|e| e.1).collect(),
    ))
}

impl RankedLambdaSet {
    /// `λ` of this run and `other`, aligned by sample id over the shared ids.
    pub fn aligned_with(&self, other: &RankedLambdaSet) -> Result<(Vec<f64>, Vec<f64>)> {
        aligned(self, other)
    }
}

/// Spearman correlation for every unordered pair of runs, on shared ids.
pub fn cross_seed_stability(runs: &[RankedLambdaSet]) -> Result<Vec<SeedPairCorrelation>> {
    if runs.len() < 2 {
        return Err(Error::TooFewObservations {
            got: runs.len(),
            min: 2,
        });
    }
    let mut out = Vec::new();
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            let (x, y) = aligned(a, b)?;
            out.push(SeedPairCorrelation {
                run_a: a.run_id().to_owned(),
                run_b: b.run_id().to_owned(),
                shared_samples: x.len(),
                correlation: spearman(&x, &y)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Rank by counting: rank = #less + (#equal + 1) / 2.
    fn oracle_ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let less = v.iter().filter(|&&b| b < a).count() as f64;
                let eq = v.iter().filter(|&&b| b == a).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect()
    }

    fn oracle_rho(rx: &[f64], ry: &[f64]) -> f64 {
        let n = rx.len() as f64;
        let sx: f64 = rx.iter().sum();
        let sy: f64 = ry.iter().sum();
        let sxy: f64 = rx.iter().zip(ry).map(|(a, b)| a * b).sum();
        let sxx: f64 = rx.iter().map(|a| a * a).sum();
        let syy: f64 = ry.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    fn permutations(items: &[f64]) -> Vec<Vec<f64>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut tail in permutations(&rest) {
                tail.insert(0, head);
                out.push(tail);
            }
        }
        out
    }

    fn oracle(x: &[f64], y: &[f64]) -> (f64, f64) {
        let rx = oracle_ranks(x);
        let ry = oracle_ranks(y);
        let obs = oracle_rho(&rx, &ry);
        let perms = permutations(&ry);
        let hits = perms
            .iter()
            .filter(|p| oracle_rho(&rx, p).abs() >= obs.abs() - 1e-9)
            .count();
        (obs, hits as f64 / perms.len() as f64)
    }

    #[test]
    fn monotone_and_reversed() {
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(r.method, CorrelationMethod::ExactPermutation);
        // only the identity and the reversal reach |ρ| = 1
        assert!((r.p_value - 2.0 / 24.0).abs() < 1e-15);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(r.rho, -1.0);
    }

    #[test]
    fn ties_in_both_inputs() {
        let x = [1.0, 2.0, 2.0, 4.0];
        let y = [3.0, 1.0, 4.0, 4.0];
        let (rho, p) = oracle(&x, &y);
        let r = spearman(&x, &y).unwrap();
        assert!((r.rho - rho).abs() < 1e-12);
        assert!((r.p_value - p).abs() < 1e-12);
        // ranks x: [1, 2.5, 2.5, 4], y: [2, 1, 3.5, 3.5]
        assert!((r.rho - 0.5).abs() < 1e-12, "{}", r.rho);
    }

    #[test]
    fn average_ranks_handles_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
        assert_eq!(average_ranks(&[3.0, 3.0, 3.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(spearman(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(Error::TooFewObservations { .. })));
        assert!(matches!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ZeroVariance("x"))));
        assert!(matches!(spearman(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]), Err(Error::ZeroVariance("y"))));
        assert!(matches!(spearman(&[1.0, f64::NAN], &[1.0, 2.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn two_points_have_p_one() {
        let r = spearman(&[1.0, 2.0], &[5.0, 3.0]).unwrap();
        assert_eq!(r.rho, -1.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn large_n_uses_t_approximation() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..30).map(|i| ((i * 17) % 30) as f64).collect();
        let r = spearman(&x, &y).unwrap();
        assert_eq!(r.method, CorrelationMethod::TApproximation);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);

        // Perfect correlation: the t statistic is unbounded, p = 0.
        let r = spearman(&x, &x).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn t_approximation_reference_value() {
        // ρ = 0.5, n = 12: t = 0.5·√(10/0.75) = 1.825742; two-sided p from
        // Student's t with 10 df = 0.0978546 (scipy.stats.t.sf(t, 10) * 2).
        let p = t_approximation_p(0.5, 12);
        assert!((p - 0.097_854_614).abs() < 1e-8, "{p}");
    }

    #[test]
    fn cross_seed_pairs() {
        let a = RankedLambdaSet::new("a", (0..20).map(|i| (format!("s{i:02}"), i as f64))).unwrap();
        let b = RankedLambdaSet::new("b", (5..25).map(|i| (format!("s{i:02}"), i as f64))).unwrap();
        let c = RankedLambdaSet::new("c", (0..20).map(|i| (format!("s{i:02}"), -(i as f64)))).unwrap();
        let pairs = cross_seed_stability(&[a.clone(), b, c]).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].shared_samples, 15);
        assert_eq!(pairs[0].correlation.rho, 1.0);
        assert_eq!(pairs[1].correlation.rho, -1.0);
        assert!(cross_seed_stability(&[a]).is_err());
    }

    proptest! {
        #[test]
        fn matches_enumeration_oracle(
            pairs in prop::collection::vec((0u8..5, 0u8..5), 3..7)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            match spearman(&x, &y) {
                Ok(r) => {
                    let (rho, p) = oracle(&x, &y);
                    prop_assert!((r.rho - rho).abs() < 1e-12);
                    prop_assert!((r.p_value - p).abs() < 1e-12);
                }
                Err(Error::ZeroVariance(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn rank_invariance(x in prop::collection::vec(-100.0f64..100.0, 3..40)) {
            let distinct = x.iter().any(|&v| v != x[0]);
            prop_assume!(distinct);
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let cubed: Vec<f64> = x.iter().map(|v| v.powi(3) + 7.0).collect();
            prop_assert!((spearman_rho(&x, &x).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((spearman_rho(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
            let y: Vec<f64> = x.iter().rev().cloned().collect();
            prop_assert_eq!(spearman_rho(&x, &y).unwrap(), spearman_rho(&cubed, &y).unwrap());
        }
    }
}
