//! Nonparametric method comparison: tie-corrected Kruskal-Wallis across
//! groups and Dunn's pairwise post-hoc test on the pooled ranks.

mod special;

pub use special::{chi2_sf, erfc, gamma_q, lgamma, normal_sf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("need at least two groups")]
    TooFewGroups,
    #[error("group '{0}' has no values")]
    EmptyGroup(String),
    #[error("scores contain a non-finite value")]
    NonFiniteValue,
    #[error("degenerate data: all values identical or fewer than three observations")]
    DegenerateData,
    #[error("unknown p-value adjustment '{0}' (expected 'bonferroni' or 'none')")]
    UnknownAdjustment(String),
}

/// Per-method score lists for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedScores {
    pub metric_name: String,
    pub groups: Vec<ScoreGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGroup {
    pub method: String,
    pub values: Vec<f64>,
}

/// Kruskal-Wallis outcome: tie-corrected H, degrees of freedom, and the
/// chi-square p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KruskalResult {
    pub h: f64,
    pub df: usize,
    pub p: f64,
    pub tie_correction: f64,
}

/// One Dunn pairwise comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnPair {
    pub method_a: String,
    pub method_b: String,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

/// Dunn post-hoc result: one entry per unordered method pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnResult {
    pub pairs: Vec<DunnPair>,
    pub adjustment: String,
}

/// Multiplicity adjustment for the Dunn pairwise p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Adjustment {
    #[default]
    Bonferroni,
    None,
}

impl Adjustment {
    pub fn as_str(self) -> &'static str {
        match self {
            Adjustment::Bonferroni => "bonferroni",
            Adjustment::None => "none",
        }
    }

    fn apply(self, p_raw: f64, comparisons: usize) -> f64 {
        match self {
            Adjustment::Bonferroni => (p_raw * comparisons as f64).min(1.0),
            Adjustment::None => p_raw,
        }
    }
}

impl std::str::FromStr for Adjustment {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, StatsError> {
        match s.to_ascii_lowercase().as_str() {
            "bonferroni" => Ok(Adjustment::Bonferroni),
            "none" => Ok(Adjustment::None),
            other => Err(StatsError::UnknownAdjustment(other.to_string())),
        }
    }
}

/// Ranks 1..n with tied values receiving the average of their rank span.
pub fn rank_with_ties(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share ranks i+1..j, averaging to:
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

struct RankedGroups {
    /// Mean pooled rank per group.
    mean_ranks: Vec<f64>,
    sizes: Vec<usize>,
    n_total: usize,
    /// Sum of t^3 - t over tie groups of size t.
    tie_sum: f64,
}

fn pooled_ranks(scores: &GroupedScores) -> Result<RankedGroups, StatsError> {
    if scores.groups.len() < 2 {
        return Err(StatsError::TooFewGroups);
    }
    for g in &scores.groups {
        if g.values.is_empty() {
            return Err(StatsError::EmptyGroup(g.method.clone()));
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFiniteValue);
        }
    }
    let pooled: Vec<f64> = scores
        .groups
        .iter()
        .flat_map(|g| g.values.iter().copied())
        .collect();
    let n_total = pooled.len();
    if n_total < 3 {
        return Err(StatsError::DegenerateData);
    }
    let ranks = rank_with_ties(&pooled);

    let mut mean_ranks = Vec::with_capacity(scores.groups.len());
    let mut sizes = Vec::with_capacity(scores.groups.len());
    let mut offset = 0;
    for g in &scores.groups {
        let n = g.values.len();
        let sum: f64 = ranks[offset..offset + n].iter().sum();
        mean_ranks.push(sum / n as f64);
        sizes.push(n);
        offset += n;
    }

    let mut sorted = pooled;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < n_total {
        let mut j = i + 1;
        while j < n_total && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_sum += t * t * t - t;
        i = j;
    }

    Ok(RankedGroups {
        mean_ranks,
        sizes,
        n_total,
        tie_sum,
    })
}

/// Tie-corrected Kruskal-Wallis test across the groups.
pub fn kruskal_wallis(scores: &GroupedScores) -> Result<KruskalResult, StatsError> {
    let ranked = pooled_ranks(scores)?;
    let n = ranked.n_total as f64;
    let grand_mean = (n + 1.0) / 2.0;
    let mut deviation = 0.0;
    for (r_bar, &size) in ranked.mean_ranks.iter().zip(&ranked.sizes) {
        deviation += size as f64 * (r_bar - grand_mean) * (r_bar - grand_mean);
    }
    let h = 12.0 * deviation / (n * (n + 1.0));
    let tie_correction = 1.0 - ranked.tie_sum / (n * n * n - n);
    if tie_correction <= 0.0 {
        return Err(StatsError::DegenerateData);
    }
    let h_corrected = h / tie_correction;
    let df = scores.groups.len() - 1;
    let p = chi2_sf(h_corrected, df as u32);
    Ok(KruskalResult {
        h: h_corrected,
        df,
        p,
        tie_correction,
    })
}

/// Dunn's post-hoc test on the pooled tied ranks with the named adjustment.
pub fn dunn_posthoc(
    scores: &GroupedScores,
    adjustment: Adjustment,
) -> Result<DunnResult, StatsError> {
    let ranked = pooled_ranks(scores)?;
    let n = ranked.n_total as f64;
    let variance = n * (n + 1.0) / 12.0 - ranked.tie_sum / (12.0 * (n - 1.0));
    if variance <= 0.0 {
        return Err(StatsError::DegenerateData);
    }
    let k = scores.groups.len();
    let comparisons = k * (k - 1) / 2;
    let mut pairs = Vec::with_capacity(comparisons);
    for i in 0..k {
        for j in (i + 1)..k {
            let se =
                (variance * (1.0 / ranked.sizes[i] as f64 + 1.0 / ranked.sizes[j] as f64)).sqrt();
            let z = (ranked.mean_ranks[i] - ranked.mean_ranks[j]) / se;
            let p_raw = 2.0 * normal_sf(z.abs());
            pairs.push(DunnPair {
                method_a: scores.groups[i].method.clone(),
                method_b: scores.groups[j].method.clone(),
                z,
                p_raw,
                p_adjusted: adjustment.apply(p_raw, comparisons),
            });
        }
    }
    Ok(DunnResult {
        pairs,
        adjustment: adjustment.as_str().to_string(),
    })
}
