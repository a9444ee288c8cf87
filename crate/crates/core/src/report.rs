//! Writes a run report to disk as JSON plus chart-ready CSV files.
//!
//! Layout of `out_dir`:
//!
//! ```text
//! report.json           full report, including timings
//! importance.csv        primary model's global importance
//! importance_baseline.csv   (quantum runs) classical baseline's global importance
//! ranks.csv             1-based ranks per ranking source
//! diversity.json        diversity rows
//! tiers.csv             feature -> tier
//! plotdata/top10_<model>.csv        ten highest global scores, descending
//! plotdata/tier_metrics_<model>.csv per-tier accuracy, F1, recall, precision
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{QfiError, Result};
use crate::pipeline::{ModelRun, RunReport};

pub const TOP_K: usize = 10;

fn csv_bytes<F>(fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w)?;
        w.flush().map_err(|e| QfiError::Serde(e.to_string()))?;
    }
    Ok(buf)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| QfiError::io(path, e))
}

fn file_stem(model_id: &str) -> String {
    model_id.replace('+', "_")
}

/// `(feature, score)` for the `k` highest scores; equal scores keep feature order.
pub fn top_k(scores: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.into_iter().take(k).map(|i| (i, scores[i])).collect()
}

fn top10_csv(run: &ModelRun, names: &[String]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["rank", "feature_index", "feature_name", "normalized_score"])?;
        for (pos, (i, score)) in top_k(&run.global_importance.scores, TOP_K).into_iter().enumerate() {
            w.write_record([
                (pos + 1).to_string(),
                i.to_string(),
                names[i].clone(),
                score.to_string(),
            ])?;
        }
        Ok(())
    })
}

fn tier_metrics_csv(run: &ModelRun) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["tier_id", "n_features", "accuracy", "f1", "recall", "precision"])?;
        for t in &run.tiers {
            w.write_record([
                t.tier_id.to_string(),
                t.features.len().to_string(),
                t.metrics.accuracy.to_string(),
                t.metrics.f1.to_string(),
                t.metrics.recall.to_string(),
                t.metrics.precision.to_string(),
            ])?;
        }
        Ok(())
    })
}

fn ranks_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut header = vec!["feature_index".to_string(), "feature_name".to_string()];
    let mut columns: Vec<&[usize]> = Vec::new();
    for run in report.runs() {
        header.push(format!("{}_rank", run.model_id));
        columns.push(&run.ranks.rank_of);
    }
    if let Some(sme) = &report.sme_ranks {
        header.push("sme_rank".into());
        columns.push(&sme.rank_of);
    }
    csv_bytes(|w| {
        w.write_record(&header)?;
        for (i, name) in report.feature_names.iter().enumerate() {
            let mut record = vec![i.to_string(), name.clone()];
            record.extend(columns.iter().map(|c| c[i].to_string()));
            w.write_record(&record)?;
        }
        Ok(())
    })
}

/// Writes every output file and returns their paths. Output bytes depend only on `report`.
pub fn emit_report(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let plot_dir = out_dir.join("plotdata");
    fs::create_dir_all(&plot_dir).map_err(|e| QfiError::io(&plot_dir, e))?;
    let names = &report.feature_names;
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();

    files.push((out_dir.join("report.json"), report.to_json()?.into_bytes()));

    let mut buf = Vec::new();
    report.primary.global_importance.write_csv(names, &mut buf)?;
    files.push((out_dir.join("importance.csv"), buf));
    if let Some(baseline) = &report.baseline {
        let mut buf = Vec::new();
        baseline.global_importance.write_csv(names, &mut buf)?;
        files.push((out_dir.join("importance_baseline.csv"), buf));
    }

    files.push((out_dir.join("ranks.csv"), ranks_csv(report)?));
    files.push((
        out_dir.join("diversity.json"),
        serde_json::to_string_pretty(&report.diversity)?.into_bytes(),
    ));
    let mut buf = Vec::new();
    report.tier_assignment.write_csv(names, &mut buf)?;
    files.push((out_dir.join("tiers.csv"), buf));

    for run in report.runs() {
        let stem = file_stem(&run.model_id);
        files.push((plot_dir.join(format!("top10_{stem}.csv")), top10_csv(run, names)?));
        files.push((plot_dir.join(format!("tier_metrics_{stem}.csv")), tier_metrics_csv(run)?));
    }

    for (path, bytes) in &files {
        write_file(path, bytes)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_orders_and_truncates() {
        let s = [0.1, 0.4, 0.4, 0.05, 0.05];
        assert_eq!(top_k(&s, 3), vec![(1, 0.4), (2, 0.4), (0, 0.1)]);
        assert_eq!(top_k(&s, 10).len(), 5);
    }
}
