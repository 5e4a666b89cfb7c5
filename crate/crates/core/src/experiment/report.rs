use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::manifest::io_err;
use super::ExperimentError;
use crate::analysis::{
    bootstrap_ci, breakthroughness, default_threshold, histogram, is_bimodal, kde_curve, linearity, mixture_stats,
    mode_estimate, peaks, populations_from_records, wasserstein2, AnalysisError, BootstrapSettings, HistogramRange,
    Interval, KdeSettings, PopulationDistribution, ScalingCurve, Statistic, EM_BINS,
};
use crate::tasks::TaskKind;
use crate::train::{MetricName, RunRecord};

pub const CURVES_CSV: &str = "curves.csv";
pub const KDE_CSV: &str = "kde.csv";
pub const HISTOGRAM_CSV: &str = "histogram.csv";
pub const BIMODALITY_CSV: &str = "bimodality.csv";
pub const SEED_RANKINGS_CSV: &str = "seed_rankings.csv";
pub const SEED_SCORES_CSV: &str = "seed_scores.csv";

/// How many seeds each ranking lists.
pub const TOP_SEEDS: usize = 5;

#[derive(Debug, Clone)]
pub struct AnalysisSpec {
    /// Success threshold on exact match; `None` uses the task default.
    pub threshold: Option<f64>,
    pub metrics: Vec<MetricName>,
    pub bootstrap: BootstrapSettings,
    pub kde: KdeSettings,
    pub top_seeds: usize,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            threshold: None,
            metrics: MetricName::ALL.to_vec(),
            bootstrap: BootstrapSettings::default(),
            kde: KdeSettings::default(),
            top_seeds: TOP_SEEDS,
        }
    }
}

/// One row of `curves.csv`: the statistics of one population.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub task_kind: TaskKind,
    pub metric: MetricName,
    pub eval_length: usize,
    pub scale_label: String,
    pub param_count: usize,
    pub n_seeds: usize,
    pub mean: f64,
    pub mean_ci: Interval,
    pub mode: f64,
    /// Present for exact match only.
    pub mixture: Option<MixtureRow>,
    pub w2_drift: f64,
    pub n_peaks: usize,
    pub bimodal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureRow {
    pub threshold: f64,
    pub p_success: f64,
    pub p_success_ci: Interval,
    pub mean_success: Option<f64>,
    pub mean_success_ci: Option<Interval>,
    pub mean_fail: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedScore {
    pub seed: u64,
    pub breakthroughness: f64,
    pub linearity: f64,
}

/// Everything derived for one (task, metric, length) across scales.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGroup {
    pub task_kind: TaskKind,
    pub metric: MetricName,
    pub eval_length: usize,
    pub rows: Vec<CurveRow>,
    pub onset: Option<String>,
    /// Seeds present at every scale; empty with fewer than two scales.
    pub seed_scores: Vec<SeedScore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub groups: Vec<CurveGroup>,
    pub files: Vec<PathBuf>,
}

fn population_groups(
    records: &[RunRecord],
    metrics: &[MetricName],
) -> Result<BTreeMap<(TaskKind, MetricName, usize), Vec<PopulationDistribution>>, ExperimentError> {
    let mut groups: BTreeMap<_, Vec<PopulationDistribution>> = BTreeMap::new();
    for p in populations_from_records(records)? {
        if metrics.contains(&p.metric_name) {
            groups.entry((p.task_kind, p.metric_name, p.eval_length)).or_default().push(p);
        }
    }
    for m in metrics {
        if !groups.keys().any(|k| k.1 == *m) {
            return Err(ExperimentError::Analysis(AnalysisError::Empty(format!("no values for metric {m}"))));
        }
    }
    for pops in groups.values_mut() {
        pops.sort_by_key(|p| p.param_count);
        if let Some(w) = pops.windows(2).find(|w| w[0].param_count == w[1].param_count) {
            return Err(ExperimentError::Analysis(AnalysisError::Mismatch(format!(
                "scales {} and {} share a parameter count",
                w[0].scale_label, w[1].scale_label
            ))));
        }
    }
    Ok(groups)
}

fn optional_ci(
    values: &[f64],
    stat: Statistic,
    settings: &BootstrapSettings,
) -> Result<Option<Interval>, AnalysisError> {
    match bootstrap_ci(values, stat, settings) {
        Ok(ci) => Ok(Some(ci)),
        Err(AnalysisError::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scales y so that larger is better, for curve-shape scores.
fn oriented(metric: MetricName, v: f64) -> f64 {
    if metric.higher_is_better() {
        v
    } else {
        -v
    }
}

fn analyze_group(
    task_kind: TaskKind,
    metric: MetricName,
    eval_length: usize,
    pops: &[PopulationDistribution],
    spec: &AnalysisSpec,
) -> Result<CurveGroup, ExperimentError> {
    let threshold = spec.threshold.unwrap_or_else(|| default_threshold(task_kind));
    let last = pops.last().expect("group is nonempty");
    let mut rows = Vec::with_capacity(pops.len());
    let mut onset = None;
    for p in pops {
        let v = &p.values;
        let curve = kde_curve(v, &spec.kde)?;
        let bimodal = is_bimodal(&curve, &spec.kde);
        if bimodal && onset.is_none() {
            onset = Some(p.scale_label.clone());
        }
        let mixture = if metric == MetricName::Em {
            let m = mixture_stats(v, threshold);
            Some(MixtureRow {
                threshold,
                p_success: m.p_success,
                p_success_ci: bootstrap_ci(v, Statistic::PSuccess { threshold }, &spec.bootstrap)?,
                mean_success: m.mean_success,
                mean_success_ci: optional_ci(v, Statistic::MeanSuccess { threshold }, &spec.bootstrap)?,
                mean_fail: m.mean_fail,
            })
        } else {
            None
        };
        rows.push(CurveRow {
            task_kind,
            metric,
            eval_length,
            scale_label: p.scale_label.clone(),
            param_count: p.param_count,
            n_seeds: p.len(),
            mean: crate::analysis::mean(v),
            mean_ci: bootstrap_ci(v, Statistic::Mean, &spec.bootstrap)?,
            mode: mode_estimate(v, &spec.kde)?,
            mixture,
            w2_drift: wasserstein2(v, &last.values)?,
            n_peaks: peaks(&curve.density, spec.kde.min_peak_ratio).len(),
            bimodal,
        });
    }

    let mut seed_scores = Vec::new();
    if pops.len() >= 2 {
        let labels: Vec<String> = pops.iter().map(|p| p.scale_label.clone()).collect();
        let params: Vec<usize> = pops.iter().map(|p| p.param_count).collect();
        for &seed in &pops[0].seed_ids {
            let Some(y) = pops.iter().map(|p| p.value_for_seed(seed)).collect::<Option<Vec<f64>>>() else {
                continue;
            };
            let y = y.into_iter().map(|v| oriented(metric, v)).collect();
            let curve = ScalingCurve::new(labels.clone(), params.clone(), y)?;
            seed_scores.push(SeedScore {
                seed,
                breakthroughness: breakthroughness(&curve)?,
                linearity: linearity(&curve)?,
            });
        }
    }
    Ok(CurveGroup {
        task_kind,
        metric,
        eval_length,
        rows,
        onset,
        seed_scores,
    })
}

/// Seeds ordered by one score, highest first; ties go to the lower seed.
pub fn top_seeds(scores: &[SeedScore], by: fn(&SeedScore) -> f64, k: usize) -> Vec<SeedScore> {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| by(b).total_cmp(&by(a)).then(a.seed.cmp(&b.seed)));
    s.truncate(k);
    s
}

/// Computes every statistic without touching the filesystem.
pub fn analyze(records: &[RunRecord], spec: &AnalysisSpec) -> Result<Vec<CurveGroup>, ExperimentError> {
    if let Some(t) = spec.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(ExperimentError::Config(format!("threshold {t} is outside [0, 1]")));
        }
    }
    population_groups(records, &spec.metrics)?
        .iter()
        .map(|(&(task, metric, len), pops)| analyze_group(task, metric, len, pops, spec))
        .collect()
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct Csv {
    path: PathBuf,
    w: csv::Writer<fs::File>,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self, ExperimentError> {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
        w.write_record(header).map_err(|e| ExperimentError::Io(e.to_string()))?;
        Ok(Self { path, w })
    }

    fn row(&mut self, fields: Vec<String>) -> Result<(), ExperimentError> {
        self.w.write_record(&fields).map_err(|e| ExperimentError::Io(format!("{}: {e}", self.path.display())))
    }

    fn finish(mut self) -> Result<PathBuf, ExperimentError> {
        self.w.flush().map_err(|e| io_err(&self.path, e))?;
        Ok(self.path)
    }
}

fn key_fields(g: &CurveGroup) -> Vec<String> {
    vec![g.task_kind.to_string(), g.metric.to_string(), g.eval_length.to_string()]
}

/// Runs [`analyze`] and writes the CSV tables into `out_dir`.
pub fn write_analysis(records: &[RunRecord], spec: &AnalysisSpec, out_dir: &Path) -> Result<AnalysisReport, ExperimentError> {
    let groups = analyze(records, spec)?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut files = Vec::new();

    let mut curves = Csv::create(
        out_dir,
        CURVES_CSV,
        &[
            "task", "metric", "eval_length", "scale_label", "param_count", "n_seeds", "mean", "mean_lo", "mean_hi",
            "mode", "threshold", "p_success", "p_success_lo", "p_success_hi", "mean_success", "mean_success_lo",
            "mean_success_hi", "mean_fail", "w2_drift", "n_peaks", "bimodal",
        ],
    )?;
    for g in &groups {
        for r in &g.rows {
            let mut f = key_fields(g);
            f.extend([
                r.scale_label.clone(),
                r.param_count.to_string(),
                r.n_seeds.to_string(),
                num(r.mean),
                num(r.mean_ci.lo),
                num(r.mean_ci.hi),
                num(r.mode),
            ]);
            match &r.mixture {
                Some(m) => f.extend([
                    num(m.threshold),
                    num(m.p_success),
                    num(m.p_success_ci.lo),
                    num(m.p_success_ci.hi),
                    opt(m.mean_success),
                    opt(m.mean_success_ci.map(|c| c.lo)),
                    opt(m.mean_success_ci.map(|c| c.hi)),
                    opt(m.mean_fail),
                ]),
                None => f.extend(std::iter::repeat_n(String::new(), 8)),
            }
            f.extend([num(r.w2_drift), r.n_peaks.to_string(), r.bimodal.to_string()]);
            curves.row(f)?;
        }
    }
    files.push(curves.finish()?);

    let mut onset = Csv::create(out_dir, BIMODALITY_CSV, &["task", "metric", "eval_length", "onset_scale", "onset_param_count"])?;
    for g in &groups {
        let mut f = key_fields(g);
        let params = g.onset.as_ref().and_then(|l| g.rows.iter().find(|r| &r.scale_label == l)).map(|r| r.param_count);
        f.extend([g.onset.clone().unwrap_or_default(), params.map(|p| p.to_string()).unwrap_or_default()]);
        onset.row(f)?;
    }
    files.push(onset.finish()?);

    let by_records = populations_for_tables(records, spec)?;
    let mut kde = Csv::create(
        out_dir,
        KDE_CSV,
        &["task", "metric", "eval_length", "scale_label", "param_count", "bandwidth", "x", "density"],
    )?;
    let mut hist = Csv::create(
        out_dir,
        HISTOGRAM_CSV,
        &["task", "metric", "eval_length", "scale_label", "param_count", "bin", "lo", "hi", "count"],
    )?;
    for p in &by_records {
        let head = vec![
            p.task_kind.to_string(),
            p.metric_name.to_string(),
            p.eval_length.to_string(),
            p.scale_label.clone(),
            p.param_count.to_string(),
        ];
        let c = kde_curve(&p.values, &spec.kde)?;
        for (x, d) in c.grid.iter().zip(&c.density) {
            let mut f = head.clone();
            f.extend([num(c.bandwidth), num(*x), num(*d)]);
            kde.row(f)?;
        }
        let range = if p.metric_name == MetricName::Em || p.metric_name == MetricName::MinProb {
            HistogramRange::Fixed(0.0, 1.0)
        } else {
            HistogramRange::Data
        };
        let h = histogram(&p.values, EM_BINS, range)?;
        for (b, count) in h.counts.iter().enumerate() {
            let mut f = head.clone();
            f.extend([b.to_string(), num(h.edges[b]), num(h.edges[b + 1]), count.to_string()]);
            hist.row(f)?;
        }
    }
    files.push(kde.finish()?);
    files.push(hist.finish()?);

    let mut scores = Csv::create(out_dir, SEED_SCORES_CSV, &["task", "metric", "eval_length", "seed", "breakthroughness", "linearity"])?;
    let mut ranks = Csv::create(
        out_dir,
        SEED_RANKINGS_CSV,
        &["task", "metric", "eval_length", "ranked_by", "rank", "seed", "breakthroughness", "linearity"],
    )?;
    for g in &groups {
        for s in &g.seed_scores {
            let mut f = key_fields(g);
            f.extend([s.seed.to_string(), num(s.breakthroughness), num(s.linearity)]);
            scores.row(f)?;
        }
        let rankings: [(&str, fn(&SeedScore) -> f64); 2] =
            [("breakthroughness", |s| s.breakthroughness), ("linearity", |s| s.linearity)];
        for (name, by) in rankings {
            for (rank, s) in top_seeds(&g.seed_scores, by, spec.top_seeds).iter().enumerate() {
                let mut f = key_fields(g);
                f.extend([
                    name.to_string(),
                    (rank + 1).to_string(),
                    s.seed.to_string(),
                    num(s.breakthroughness),
                    num(s.linearity),
                ]);
                ranks.row(f)?;
            }
        }
    }
    files.push(scores.finish()?);
    files.push(ranks.finish()?);

    Ok(AnalysisReport { groups, files })
}

fn populations_for_tables(records: &[RunRecord], spec: &AnalysisSpec) -> Result<Vec<PopulationDistribution>, ExperimentError> {
    Ok(populations_from_records(records)?
        .into_iter()
        .filter(|p| spec.metrics.contains(&p.metric_name))
        .collect())
}
