//! AUC computation and report aggregation.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::audio_io::Label;
use crate::{Error, Result};

/// Area under the ROC curve, computed as the normalized Mann-Whitney U
/// statistic with half weight for tied scores. `O(n log n)` in the number
/// of scored clips.
pub fn auc(scores: &[(f64, Label)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|(_, l)| *l == Label::Anomalous).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one normal and one anomalous score".into(),
        ));
    }
    for (s, _) in scores {
        if !s.is_finite() {
            return Err(Error::UndefinedMetric("non-finite anomaly score".into()));
        }
    }
    let mut sorted: Vec<(f64, Label)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    // Walk the sorted scores in tie groups. Every anomalous score earns one
    // unit per normal score strictly below it and half a unit per tied normal.
    let mut u = 0.0f64;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let group = &sorted[i..j];
        let g_pos = group.iter().filter(|(_, l)| *l == Label::Anomalous).count();
        let g_neg = group.len() - g_pos;
        u += g_pos as f64 * (neg_below as f64 + 0.5 * g_neg as f64);
        neg_below += g_neg;
        i = j;
    }
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Reference implementation: direct `O(n^2)` pair counting. Kept alongside
/// the sort-based version so the two can be cross-checked.
pub fn auc_bruteforce(scores: &[(f64, Label)]) -> Result<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .filter(|(_, l)| *l == Label::Anomalous)
        .map(|(s, _)| *s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .filter(|(_, l)| *l == Label::Normal)
        .map(|(s, _)| *s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one normal and one anomalous score".into(),
        ));
    }
    let mut u = 0.0f64;
    for &p in &pos {
        for &n in &neg {
            if !p.is_finite() || !n.is_finite() {
                return Err(Error::UndefinedMetric("non-finite anomaly score".into()));
            }
            u += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(u / (pos.len() as f64 * neg.len() as f64))
}

/// One evaluated (model, machine, model_id, snr, seed) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub machine: String,
    pub model_id: String,
    pub snr: String,
    pub seed: u64,
    pub model_kind: String,
    /// Embedding width; absent for the autoencoder.
    pub dim: Option<usize>,
    pub auc: f64,
    pub n_test: usize,
}

impl EvalRecord {
    /// Display label combining kind and width, e.g. "svdd2" or "ae".
    pub fn model_label(&self) -> String {
        match self.dim {
            Some(d) => format!("{}{}", self.model_kind, d),
            None => self.model_kind.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    /// Per (model, snr): mean AUC with equal weight for each machine type.
    pub averages: Vec<(String, String, f64)>,
}

/// Aggregates per-cell AUCs into per-(model, snr) averages. Cells are first
/// averaged within each machine type, then machine types are averaged with
/// equal weight regardless of how many model IDs each contributes.
pub fn aggregate(records: &[EvalRecord]) -> EvalReport {
    let mut by_group: BTreeMap<(String, String), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in records {
        by_group
            .entry((r.model_label(), r.snr.clone()))
            .or_default()
            .entry(r.machine.clone())
            .or_default()
            .push(r.auc);
    }
    let averages = by_group
        .into_iter()
        .map(|((model, snr), machines)| {
            let mean = machines
                .values()
                .map(|aucs| aucs.iter().sum::<f64>() / aucs.len() as f64)
                .sum::<f64>()
                / machines.len() as f64;
            (model, snr, mean)
        })
        .collect();
    EvalReport { records: records.to_vec(), averages }
}

impl EvalReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("machine,model_id,snr,seed,model_kind,dim,auc,n_test\n");
        for r in &self.records {
            let dim = r.dim.map(|d| d.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.6},{}\n",
                r.machine, r.model_id, r.snr, r.seed, r.model_kind, dim, r.auc, r.n_test
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn write_markdown(&self, path: &Path) -> Result<()> {
        let mut out = String::from("# Evaluation report\n\n");
        out.push_str("## Per-cell AUC\n\n");
        out.push_str("| model | machine | model_id | snr | seed | AUC | n_test |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for r in &self.records {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {:.3} | {} |\n",
                r.model_label(),
                r.machine,
                r.model_id,
                r.snr,
                r.seed,
                r.auc,
                r.n_test
            ));
        }
        out.push_str("\n## Averages (equal machine weighting)\n\n");
        out.push_str("| model | snr | mean AUC |\n|---|---|---|\n");
        for (model, snr, mean) in &self.averages {
            out.push_str(&format!("| {model} | {snr} | {mean:.3} |\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Wall-clock timing for a repeated operation: returns (mean, min, max) in
/// seconds over `reps` runs after `warmup` discarded runs.
pub fn measure_latency<F: FnMut() -> Result<()>>(
    mut op: F,
    warmup: usize,
    reps: usize,
) -> Result<(f64, f64, f64)> {
    if reps == 0 {
        return Err(Error::Usage("measure_latency: reps must be positive".into()));
    }
    for _ in 0..warmup {
        op()?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        op()?;
        times.push(t0.elapsed().as_secs_f64());
    }
    let mean = times.iter().sum::<f64>() / reps as f64;
    let min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((mean, min, max))
}
