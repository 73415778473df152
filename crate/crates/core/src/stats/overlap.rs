use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::decay::DecayFit;
use crate::{Error, Result};

/// One run's decay constants keyed by sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedLambdaSet {
    run_id: String,
    /// Sorted by sample id.
    entries: Vec<(String, f64)>,
}

impl RankedLambdaSet {
    pub fn new(run_id: impl Into<String>, entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut entries: Vec<(String, f64)> = entries.into_iter().collect();
        if entries.iter().any(|(_, l)| !l.is_finite()) {
            return Err(Error::NonFinite("lambda values"));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateSampleId(w[0].0.clone()));
        }
        Ok(Self {
            run_id: run_id.into(),
            entries,
        })
    }

    pub fn from_fits(run_id: impl Into<String>, fits: &[DecayFit]) -> Result<Self> {
        Self::new(run_id, fits.iter().map(|f| (f.sample_id.clone(), f.lambda)))
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    /// The `⌈k·N/100⌉` ids with the highest `λ`; ties broken by ascending id.
    pub fn top_k_ids(&self, k_percent: u32) -> Result<BTreeSet<&str>> {
        let size = top_k_size(self.entries.len(), k_percent)?;
        let mut order: Vec<&(String, f64)> = self.entries.iter().collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(order[..size].iter().map(|(id, _)| id.as_str()).collect())
    }

    /// Restriction to the ids shared with `other`.
    pub fn restrict_to_shared(&self, other: &Self) -> Result<Self> {
        let theirs: HashMap<&str, f64> = other.entries.iter().map(|(id, l)| (id.as_str(), *l)).collect();
        let entries: Vec<(String, f64)> = self
            .entries
            .iter()
            .filter(|(id, _)| theirs.contains_key(id.as_str()))
            .cloned()
            .collect();
        if entries.is_empty() {
            return Err(Error::DisjointUniverses(self.run_id.clone(), other.run_id.clone()));
        }
        Ok(Self {
            run_id: self.run_id.clone(),
            entries,
        })
    }
}

fn top_k_size(n: usize, k_percent: u32) -> Result<usize> {
    if k_percent > 100 {
        return Err(Error::InvalidParameter(format!("k_percent {k_percent} exceeds 100")));
    }
    Ok((k_percent as usize * n).div_ceil(100))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapPoint {
    pub k_percent: u32,
    pub shared_samples: usize,
    pub top_k_size: usize,
    pub intersection: usize,
    pub union: usize,
    pub jaccard: f64,
}

/// Top-k overlap on the ids both runs share.
pub fn overlap_top_k(a: &RankedLambdaSet, b: &RankedLambdaSet, k_percent: u32) -> Result<OverlapPoint> {
    let a = a.restrict_to_shared(b)?;
    let b = b.restrict_to_shared(&a)?;
    let top_a = a.top_k_ids(k_percent)?;
    let top_b = b.top_k_ids(k_percent)?;
    let intersection = top_a.intersection(&top_b).count();
    let union = top_a.union(&top_b).count();
    let jaccard = if union == 0 {
        log::warn!(
            "top-{k_percent}% of {} shared samples is empty; Jaccard defined as 1.0",
            a.len()
        );
        1.0
    } else {
        intersection as f64 / union as f64
    };
    Ok(OverlapPoint {
        k_percent,
        shared_samples: a.len(),
        top_k_size: top_a.len(),
        intersection,
        union,
        jaccard,
    })
}

/// `|A ∩ B| / |A ∪ B|` for the two runs' top-k% highest-λ samples.
pub fn jaccard_top_k(a: &RankedLambdaSet, b: &RankedLambdaSet, k_percent: u32) -> Result<f64> {
    overlap_top_k(a, b, k_percent).map(|p| p.jaccard)
}

/// Overlap at each `k` in ascending order.
pub fn jaccard_sweep(a: &RankedLambdaSet, b: &RankedLambdaSet, k_list: &[u32]) -> Result<Vec<OverlapPoint>> {
    let mut ks = k_list.to_vec();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter().map(|k| overlap_top_k(a, b, k)).collect()
}
