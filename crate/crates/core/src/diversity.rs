//! Rank-based diversity between quantum, classical and expert importance rankings.
//!
//! A model's diversity is summarised by the triple
//! `accuracy @ average percent rank difference @ importance variance`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankSource {
    Quantum,
    Classical,
    Sme,
}

impl fmt::Display for RankSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankSource::Quantum => "quantum",
            RankSource::Classical => "classical",
            RankSource::Sme => "sme",
        })
    }
}

/// `rank_of[i]` is the 1-based rank of feature `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankVector {
    pub rank_of: Vec<usize>,
    pub source: RankSource,
}

impl RankVector {
    /// Checks that `rank_of` is a permutation of `1..=n`.
    pub fn new(rank_of: Vec<usize>, source: RankSource) -> Result<Self> {
        let n = rank_of.len();
        let mut seen = vec![false; n + 1];
        for &r in &rank_of {
            if r == 0 || r > n || seen[r] {
                return Err(QfiError::validation(format!(
                    "ranks are not a permutation of 1..={n}"
                )));
            }
            seen[r] = true;
        }
        Ok(RankVector { rank_of, source })
    }

    pub fn len(&self) -> usize {
        self.rank_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank_of.is_empty()
    }
}

/// Rank 1 for the largest score; equal scores ranked by ascending feature index.
pub fn rank_features(scores: &[f64], source: RankSource) -> RankVector {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut rank_of = vec![0; scores.len()];
    for (pos, &feature) in order.iter().enumerate() {
        rank_of[feature] = pos + 1;
    }
    RankVector { rank_of, source }
}

/// Largest possible L1 distance between two rankings of `n` items, `sum |2i - (n + 1)|`.
pub fn max_rank_diff(n: usize) -> u64 {
    let n = n as i64;
    (1..=n).map(|i| (2 * i - (n + 1)).unsigned_abs()).sum()
}

/// `sum |a_i - b_i| / max_diff`.
pub fn pct_rank_diff(a: &RankVector, b: &RankVector, max_diff: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(QfiError::validation(format!(
            "rank vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() <= 1 || max_diff == 0 {
        return Err(QfiError::validation(
            "percent rank difference needs at least two features",
        ));
    }
    let total: u64 = a
        .rank_of
        .iter()
        .zip(&b.rank_of)
        .map(|(&x, &y)| x.abs_diff(y) as u64)
        .sum();
    Ok(total as f64 / max_diff as f64)
}

/// Mean of the percent rank differences of `primary` against `other` and `sme`.
pub fn rank_diff_avg(primary: &RankVector, other: &RankVector, sme: &RankVector) -> Result<f64> {
    let max = max_rank_diff(primary.len());
    Ok((pct_rank_diff(primary, other, max)? + pct_rank_diff(primary, sme, max)?) / 2.0)
}

/// Population variance `(1/n) sum (p_i - mu)^2`.
pub fn importance_variance(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(QfiError::validation("variance of an empty score vector"));
    }
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    Ok(p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityTriple {
    pub accuracy: f64,
    pub rank_diff_avg: f64,
    pub variance: f64,
    pub side: RankSource,
}

impl DiversityTriple {
    pub fn new(accuracy: f64, rank_diff_avg: f64, variance: f64, side: RankSource) -> Result<Self> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(QfiError::validation(format!(
                "accuracy {accuracy} outside [0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&rank_diff_avg) {
            return Err(QfiError::validation(format!(
                "rank difference {rank_diff_avg} outside [0, 1]"
            )));
        }
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(QfiError::validation(format!("invalid variance {variance}")));
        }
        Ok(DiversityTriple {
            accuracy,
            rank_diff_avg,
            variance,
            side,
        })
    }
}

/// `v` to three significant figures in plain decimal notation.
pub fn format_sig3(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{:.2}", v);
    }
    let decimals = |x: f64| (2 - x.abs().log10().floor() as i32).max(0) as usize;
    let mut d = decimals(v);
    let rounded: f64 = format!("{:.*}", d, v).parse().unwrap_or(v);
    // rounding can carry into the next decade (0.09996 -> 0.1000)
    if rounded != 0.0 && decimals(rounded) < d {
        d = decimals(rounded);
    }
    format!("{:.*}", d, v)
}

/// `"{accuracy %, 1 dp}% @ {rank diff %, 0 dp}% @ {variance, 3 sig figs}"`.
pub fn format_triple(t: &DiversityTriple) -> String {
    format!(
        "{:.1}% @ {:.0}% @ {}",
        t.accuracy * 100.0,
        t.rank_diff_avg * 100.0,
        format_sig3(t.variance)
    )
}

impl fmt::Display for DiversityTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_triple(self))
    }
}

/// Expert ranks keyed by feature name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmeRanks {
    pub ranks: BTreeMap<String, u64>,
}

impl SmeRanks {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Reads a `feature_name,rank` CSV. Ranks must be positive integers; names and ranks unique.
    pub fn read_csv<R: Read>(r: R, origin: &Path) -> Result<Self> {
        let err = |message: String| QfiError::Ingestion {
            path: origin.to_path_buf(),
            message,
        };
        let mut reader = csv::Reader::from_reader(r);
        let headers = reader.headers().map_err(|e| err(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| err(format!("missing '{name}' column")))
        };
        let (name_col, rank_col) = (col("feature_name")?, col("rank")?);
        let mut ranks = BTreeMap::new();
        let mut used = HashSet::new();
        for (line, record) in reader.records().enumerate() {
            let row = line + 2;
            let record = record.map_err(|e| err(format!("row {row}: {e}")))?;
            let name = record.get(name_col).unwrap_or("").trim().to_string();
            let raw = record.get(rank_col).unwrap_or("").trim();
            let rank: u64 = raw
                .parse()
                .ok()
                .filter(|&r| r > 0)
                .ok_or_else(|| err(format!("row {row}: rank '{raw}' is not a positive integer")))?;
            if !used.insert(rank) {
                return Err(err(format!("row {row}: duplicate rank {rank}")));
            }
            if ranks.insert(name.clone(), rank).is_some() {
                return Err(err(format!("row {row}: duplicate feature name '{name}'")));
            }
        }
        Ok(SmeRanks { ranks })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| QfiError::io(path, e))?;
        SmeRanks::read_csv(std::io::BufReader::new(file), path)
    }
}

/// Expert ranking restricted to the dataset's features, re-compressed to `1..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedSme {
    pub ranks: RankVector,
    /// Names present in the expert file but absent from the dataset.
    pub dropped: Vec<String>,
}

/// Matches expert ranks to `feature_names`, dropping unknown names and
/// re-ranking the rest by their original order. Every dataset feature needs a rank.
pub fn align_sme_ranks(sme: &SmeRanks, feature_names: &[String]) -> Result<AlignedSme> {
    let wanted: HashMap<&str, usize> = feature_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let dropped: Vec<String> = sme
        .ranks
        .keys()
        .filter(|name| !wanted.contains_key(name.as_str()))
        .cloned()
        .collect();
    if !dropped.is_empty() {
        log::warn!(
            "{} expert-ranked feature(s) not in the dataset were dropped: {}",
            dropped.len(),
            dropped.join(", ")
        );
    }
    let mut present: Vec<(u64, usize)> = Vec::with_capacity(feature_names.len());
    for (i, name) in feature_names.iter().enumerate() {
        let rank = sme.ranks.get(name).ok_or_else(|| {
            QfiError::validation(format!("expert ranks have no entry for feature '{name}'"))
        })?;
        present.push((*rank, i));
    }
    present.sort_unstable();
    let mut rank_of = vec![0; feature_names.len()];
    for (pos, &(_, feature)) in present.iter().enumerate() {
        rank_of[feature] = pos + 1;
    }
    Ok(AlignedSme {
        ranks: RankVector::new(rank_of, RankSource::Sme)?,
        dropped,
    })
}

/// Pairwise percent rank differences behind one triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pairwise {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub vs_classical: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub vs_quantum: Option<f64>,
    pub vs_sme: Option<f64>,
}

/// One row of the diversity table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub model: String,
    pub accuracy: f64,
    pub rank_diff_avg: f64,
    pub variance: f64,
    pub triple_string: String,
    pub pairwise: Pairwise,
}

/// Builds the report for `primary` against its counterpart ranking and/or the expert ranking.
///
/// With only one comparison available the average is that single difference.
pub fn diversity_report(
    model: impl Into<String>,
    accuracy: f64,
    scores: &[f64],
    primary: &RankVector,
    counterpart: Option<&RankVector>,
    sme: Option<&RankVector>,
) -> Result<DiversityReport> {
    let max = max_rank_diff(primary.len());
    let vs_counterpart = counterpart
        .map(|c| pct_rank_diff(primary, c, max))
        .transpose()?;
    let vs_sme = sme.map(|s| pct_rank_diff(primary, s, max)).transpose()?;
    let avg = match (vs_counterpart, vs_sme) {
        (Some(c), Some(s)) => (c + s) / 2.0,
        (Some(v), None) | (None, Some(v)) => v,
        (None, None) => {
            return Err(QfiError::validation(
                "diversity needs a counterpart or an expert ranking",
            ))
        }
    };
    let triple = DiversityTriple::new(accuracy, avg, importance_variance(scores)?, primary.source)?;
    let against_quantum = counterpart.is_some_and(|c| c.source == RankSource::Quantum);
    let pairwise = Pairwise {
        vs_classical: if against_quantum { None } else { vs_counterpart },
        vs_quantum: if against_quantum { vs_counterpart } else { None },
        vs_sme,
    };
    Ok(DiversityReport {
        model: model.into(),
        accuracy,
        rank_diff_avg: avg,
        variance: triple.variance,
        triple_string: format_triple(&triple),
        pairwise,
    })
}
