use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evaluate::{mean_loss, LossRecord};
use crate::error::{Error, Result};
use crate::models::Family;

/// A report row: a family at one embedding length (0 for families without one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelKey {
    pub family: Family,
    pub embedding_length: usize,
}

impl ModelKey {
    pub fn new(family: Family, embedding_length: usize) -> Self {
        ModelKey {
            family,
            embedding_length,
        }
    }

    /// The pooled feedforward policy every other model is normalized to.
    pub fn baseline() -> Self {
        ModelKey::new(Family::Ffn, 0)
    }
}

impl std::fmt::Display for ModelKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.embedding_length > 0 {
            write!(f, "{}(L={})", self.family, self.embedding_length)
        } else {
            write!(f, "{}", self.family)
        }
    }
}

/// Evaluation output of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRecords {
    pub seed: u64,
    pub models: BTreeMap<ModelKey, Vec<LossRecord>>,
    /// Mean per-step oracle entropy of the test set, when known.
    pub oracle_floor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// Percentile bootstrap over per-seed values.
    Bootstrap,
    /// 1.96 standard errors.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiSettings {
    pub method: CiMethod,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for CiSettings {
    fn default() -> Self {
        CiSettings {
            method: CiMethod::Bootstrap,
            resamples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: Family,
    #[serde(rename = "L")]
    pub embedding_length: usize,
    /// Mean over seeds of the per-seed mean step loss.
    pub mean_loss_nats: f64,
    /// Mean over seeds of `100 · mean(model) / mean(FFN)`.
    pub normalized_pct: f64,
    /// 95% half-width across seeds; absent with a single seed.
    pub ci_pct: Option<f64>,
    pub seeds: usize,
    pub per_seed_mean_loss: Vec<f64>,
    pub per_seed_normalized_pct: Vec<f64>,
}

impl ReportRow {
    pub fn key(&self) -> ModelKey {
        ModelKey::new(self.model, self.embedding_length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub ci: CiSettings,
    pub rows: Vec<ReportRow>,
    /// Per-seed oracle entropy of the test set, when every seed has one.
    pub oracle_floor: Option<Vec<f64>>,
}

impl EvalReport {
    pub fn row(&self, key: ModelKey) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.key() == key)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Half-width of the 2.5–97.5 percentile bootstrap interval of the mean.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Contract(format!(
            "bootstrap needs at least 2 values, got {}",
            values.len()
        )));
    }
    if resamples == 0 {
        return Err(Error::Contract("bootstrap needs at least 1 resample".into()));
    }
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok((quantile(&means, 0.975) - quantile(&means, 0.025)) / 2.0)
}

/// `1.96 · s / √n` with the sample standard deviation `s`.
pub fn normal_ci(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Contract(format!(
            "standard error needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    Ok(1.96 * (var / n).sqrt())
}

fn interval(values: &[f64], ci: &CiSettings) -> Result<Option<f64>> {
    if values.len() < 2 {
        return Ok(None);
    }
    match ci.method {
        CiMethod::Bootstrap => bootstrap_ci(values, ci.resamples, ci.seed).map(Some),
        CiMethod::Normal => normal_ci(values).map(Some),
    }
}

/// Normalizes every model to the FFN baseline seed by seed, then aggregates.
pub fn normalized_report(per_seed: &[SeedRecords], ci: &CiSettings) -> Result<EvalReport> {
    let Some(first) = per_seed.first() else {
        return Err(Error::Contract("no seeds to report".into()));
    };
    let keys: Vec<ModelKey> = first.models.keys().copied().collect();
    let mut per_key: BTreeMap<ModelKey, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for run in per_seed {
        if run.models.keys().copied().collect::<Vec<_>>() != keys {
            return Err(Error::Contract(format!(
                "seed {} evaluated a different model set",
                run.seed
            )));
        }
        let baseline = run
            .models
            .get(&ModelKey::baseline())
            .ok_or_else(|| Error::Contract(format!("seed {} has no FFN baseline", run.seed)))?;
        let base = mean_loss(baseline)?;
        for (key, records) in &run.models {
            let m = mean_loss(records)?;
            let slot = per_key.entry(*key).or_default();
            slot.0.push(m);
            slot.1.push(100.0 * m / base);
        }
    }
    let mut rows = Vec::with_capacity(per_key.len());
    for (key, (losses, pcts)) in per_key {
        rows.push(ReportRow {
            model: key.family,
            embedding_length: key.embedding_length,
            mean_loss_nats: mean(&losses),
            normalized_pct: mean(&pcts),
            ci_pct: interval(&pcts, ci)?,
            seeds: pcts.len(),
            per_seed_mean_loss: losses,
            per_seed_normalized_pct: pcts,
        });
    }
    let oracle_floor = per_seed.iter().map(|r| r.oracle_floor).collect();
    Ok(EvalReport {
        seeds: per_seed.iter().map(|r| r.seed).collect(),
        ci: *ci,
        rows,
        oracle_floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub model: Family,
    #[serde(rename = "L")]
    pub embedding_length: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    /// Absent when no step fell into the bin.
    pub mean_loss: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub bin_count: usize,
    pub encoding_lengths: Vec<usize>,
    pub rows: Vec<CurveRow>,
}

impl CurveReport {
    /// The bins of one model in order.
    pub fn bins_of(&self, key: ModelKey) -> Vec<&CurveRow> {
        self.rows
            .iter()
            .filter(|r| r.model == key.family && r.embedding_length == key.embedding_length)
            .collect()
    }
}

/// Bin of a step by within-episode progress.
pub fn progress_bin(step_index: usize, episode_length: usize, bins: usize) -> usize {
    (bins * step_index / episode_length).min(bins - 1)
}

/// Mean loss per within-episode progress bin for every model.
pub fn timestep_curve(models: &BTreeMap<ModelKey, Vec<LossRecord>>, bins: usize) -> Result<CurveReport> {
    if bins < 2 {
        return Err(Error::Contract(format!("need at least 2 bins, got {bins}")));
    }
    if models.is_empty() || models.values().all(Vec::is_empty) {
        return Err(Error::Contract("no loss records to bin".into()));
    }
    let mut rows = Vec::with_capacity(models.len() * bins);
    let mut lengths: Vec<usize> = Vec::new();
    for (key, records) in models {
        if key.embedding_length > 0 && !lengths.contains(&key.embedding_length) {
            lengths.push(key.embedding_length);
        }
        let mut sums = vec![0.0; bins];
        let mut counts = vec![0usize; bins];
        for r in records {
            let b = progress_bin(r.step_index, r.episode_length, bins);
            sums[b] += r.loss;
            counts[b] += 1;
        }
        for b in 0..bins {
            rows.push(CurveRow {
                model: key.family,
                embedding_length: key.embedding_length,
                bin_lo: b as f64 / bins as f64,
                bin_hi: (b + 1) as f64 / bins as f64,
                mean_loss: (counts[b] > 0).then(|| sums[b] / counts[b] as f64),
                count: counts[b],
            });
        }
    }
    lengths.sort_unstable();
    Ok(CurveReport {
        bin_count: bins,
        encoding_lengths: lengths,
        rows,
    })
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub report: EvalReport,
    pub curve: CurveReport,
}

/// Six significant digits, plain decimal notation.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    let decimals = (5 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

fn opt_sig6(v: Option<f64>) -> String {
    v.map(format_sig6).unwrap_or_default()
}

pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("model,L,mean_loss_nats,normalized_pct,ci_pct,seeds\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.model,
            r.embedding_length,
            format_sig6(r.mean_loss_nats),
            format_sig6(r.normalized_pct),
            opt_sig6(r.ci_pct),
            r.seeds
        );
    }
    out
}

pub fn curve_csv(curve: &CurveReport) -> String {
    let mut out = String::from("model,L,bin_lo,bin_hi,mean_loss,count\n");
    for r in &curve.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.model,
            r.embedding_length,
            format_sig6(r.bin_lo),
            format_sig6(r.bin_hi),
            opt_sig6(r.mean_loss),
            r.count
        );
    }
    out
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Writes `report.csv`, `curve.csv` and `report.json` into `dir`.
pub fn emit_reports(report: &EvalReport, curve: &CurveReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("report.csv"), &report_csv(report))?;
    write_text(&dir.join("curve.csv"), &curve_csv(curve))?;
    let file = ReportFile {
        report: report.clone(),
        curve: curve.clone(),
    };
    write_text(&dir.join("report.json"), &pretty_json(&file))
}

pub fn load_report(path: &Path) -> Result<ReportFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(losses: &[f64]) -> Vec<LossRecord> {
        losses
            .iter()
            .enumerate()
            .map(|(i, &loss)| LossRecord {
                demonstrator_id: "d".into(),
                episode_id: "e".into(),
                step_index: i,
                episode_length: losses.len(),
                loss,
            })
            .collect()
    }

    fn seed(seed: u64, base: &[f64], other: &[f64]) -> SeedRecords {
        let mut models = BTreeMap::new();
        models.insert(ModelKey::baseline(), records(base));
        models.insert(ModelKey::new(Family::Bnn, 3), records(other));
        SeedRecords {
            seed,
            models,
            oracle_floor: None,
        }
    }

    #[test]
    fn self_normalization_and_constant_ratio() {
        let runs = vec![
            seed(0, &[1.0, 2.0], &[0.5, 1.0]),
            seed(1, &[0.3, 0.9], &[0.15, 0.45]),
        ];
        let r = normalized_report(&runs, &CiSettings::default()).unwrap();
        let base = r.row(ModelKey::baseline()).unwrap();
        assert_eq!(base.normalized_pct, 100.0);
        assert_eq!(base.ci_pct, Some(0.0));
        let half = r.row(ModelKey::new(Family::Bnn, 3)).unwrap();
        assert!((half.normalized_pct - 50.0).abs() < 1e-12);
        assert!(half.ci_pct.unwrap() < 1e-12);
        assert!(r.oracle_floor.is_none());
    }

    #[test]
    fn missing_baseline_is_a_contract_error() {
        let mut run = seed(0, &[1.0], &[1.0]);
        run.models.remove(&ModelKey::baseline());
        assert!(matches!(
            normalized_report(&[run], &CiSettings::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn bootstrap_contract_and_determinism() {
        assert!(bootstrap_ci(&[1.0], 100, 0).is_err());
        assert_eq!(bootstrap_ci(&[2.5; 5], 1000, 3).unwrap(), 0.0);
        let v = [0.1, 0.7, -0.2, 1.3];
        assert_eq!(
            bootstrap_ci(&v, 500, 9).unwrap(),
            bootstrap_ci(&v, 500, 9).unwrap()
        );
        assert!(normal_ci(&[1.0]).is_err());
        assert!((normal_ci(&[1.0, 3.0]).unwrap() - 1.96).abs() < 1e-12);
    }

    #[test]
    fn curve_bins_partition_steps() {
        let mut models = BTreeMap::new();
        models.insert(ModelKey::baseline(), records(&[0.5; 14]));
        let c = timestep_curve(&models, 10).unwrap();
        assert_eq!(c.rows.len(), 10);
        assert_eq!(c.rows.iter().map(|r| r.count).sum::<usize>(), 14);
        assert!(c.rows.iter().all(|r| r.mean_loss == Some(0.5)));
        assert_eq!(c.rows[0].bin_lo, 0.0);
        assert_eq!(c.rows[9].bin_hi, 1.0);
        assert!(timestep_curve(&models, 1).is_err());
        assert!(timestep_curve(&BTreeMap::new(), 10).is_err());
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(100.0), "100.000");
        assert_eq!(format_sig6(0.0123456789), "0.0123457");
        assert_eq!(format_sig6(9.9999996), "10.0000");
        assert_eq!(format_sig6(-1234567.0), "-1234567");
        assert_eq!(format_sig6(0.0), "0");
    }
}
