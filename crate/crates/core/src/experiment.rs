//! Experiment configuration and the N-sweep runner: sample, fit TTNS-Sketch
//! and tree graphical-model baselines, score everything against the truth.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chow_liu::{chow_liu_model, chow_liu_tree};
use crate::error::{Error, Result};
use crate::estimator::{ttns_sketch, Density, FitOptions, RankSpec};
use crate::metrics::{self, Method, MetricReport};
use crate::models::{preset_model, PairwiseMRF, PresetParams};
use crate::rng::derive_seed;
use crate::samples::{DiscreteSamples, SAMPLES_FORMAT, SAMPLES_VERSION};
use crate::sketch::{SketchConfig, SketchKind};
use crate::tensor::DenseTensor;
use crate::tree::RootedTree;
use crate::ttns::{Ttns, MODEL_FORMAT, MODEL_VERSION};

pub const CONFIG_FORMAT: &str = "ttns-experiment";
pub const CONFIG_VERSION: u32 = 1;
pub const MANIFEST_FORMAT: &str = "ttns-run-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const METRICS_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeSource {
    True,
    Path,
    ChowLiu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Maximum-likelihood tree model on the true interaction tree.
    TrueTreeGm,
    /// Maximum-likelihood tree model on the Chow-Liu tree of the samples.
    ChowLiuGm,
    /// Maximum-likelihood tree model on the numeric-order path.
    PathGm,
    /// TTNS-Sketch fitted on the numeric-order path.
    PathSketch,
}

impl Baseline {
    pub fn id(self) -> &'static str {
        match self {
            Baseline::TrueTreeGm => "true-tree-gm",
            Baseline::ChowLiuGm => "chow-liu-gm",
            Baseline::PathGm => "path-gm",
            Baseline::PathSketch => "path-sketch",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ising,
    Clock,
}

/// A pairwise model given edge by edge instead of by preset name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub d: usize,
    pub edges: Vec<[usize; 2]>,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    pub tree: TreeSource,
    /// Defaults to the preset's custom sets when it has them, else Markov.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch: Option<SketchConfig>,
    pub ranks: RankSpec,
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub baselines: Vec<Baseline>,
    #[serde(default)]
    pub save_models: bool,
    #[serde(default)]
    pub emit_mi: bool,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn template() -> Self {
        ExperimentConfig {
            format: CONFIG_FORMAT.into(),
            version: CONFIG_VERSION,
            preset: Some("trident10".into()),
            d: None,
            beta: None,
            model: None,
            tree: TreeSource::True,
            sketch: Some(SketchConfig::markov()),
            ranks: RankSpec::Fixed(2),
            n_list: (10..=17).map(|e| 1usize << e).collect(),
            seeds: (0..10).collect(),
            baselines: vec![Baseline::TrueTreeGm, Baseline::ChowLiuGm, Baseline::PathGm],
            save_models: false,
            emit_mi: false,
            out: PathBuf::from("runs/trident10"),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CONFIG_FORMAT {
            return Err(Error::Config(format!("format `{}`, expected `{CONFIG_FORMAT}`", self.format)));
        }
        if self.version != CONFIG_VERSION {
            return Err(Error::VersionMismatch { found: self.version.to_string(), expected: CONFIG_VERSION.to_string() });
        }
        match (&self.preset, &self.model) {
            (Some(_), Some(_)) => return Err(Error::Config("give either `preset` or `model`, not both".into())),
            (None, None) => return Err(Error::Config("one of `preset` or `model` is required".into())),
            _ => {}
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::Config("`n_list` needs positive sample sizes".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` is empty".into()));
        }
        match &self.ranks {
            RankSpec::Fixed(0) | RankSpec::Capped(0) => return Err(Error::Config("ranks must be >= 1".into())),
            RankSpec::Delta { delta, .. } if !(*delta > 0.0) => {
                return Err(Error::Config("`delta` must be positive".into()))
            }
            _ => {}
        }
        Ok(())
    }

    /// Model, fitted tree and alternatives as the run plan sees them.
    pub fn resolve_model(&self) -> Result<ResolvedModel> {
        if let Some(name) = &self.preset {
            let p = preset_model(name, &PresetParams { d: self.d, beta: self.beta })?;
            let path = match p.path_tree {
                Some(t) => t,
                None => RootedTree::path(p.mrf.d(), 1)?,
            };
            return Ok(ResolvedModel { id: p.name, mrf: p.mrf, tree: p.tree, path, sketch_sets: p.sketch_sets });
        }
        let m = self.model.as_ref().expect("validated");
        let edges: Vec<(usize, usize)> = m.edges.iter().map(|e| (e[0], e[1])).collect();
        let mrf = match m.kind {
            ModelKind::Ising => PairwiseMRF::ising(m.d, &edges, m.beta)?,
            ModelKind::Clock => PairwiseMRF::clock(m.d, &edges, m.beta)?,
        };
        let path = RootedTree::path(m.d, 1)?;
        let tree = mrf.interaction_tree(1).unwrap_or_else(|| path.clone());
        Ok(ResolvedModel { id: "model".into(), mrf, tree, path, sketch_sets: None })
    }

    pub fn resolved_sketch(&self, model: &ResolvedModel) -> SketchConfig {
        match (&self.sketch, &model.sketch_sets) {
            (Some(s), _) => s.clone(),
            (None, Some(sets)) => SketchConfig::custom_sets(sets.clone()),
            (None, None) => SketchConfig::markov(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResolvedModel {
    pub id: String,
    pub mrf: PairwiseMRF,
    pub tree: RootedTree,
    pub path: RootedTree,
    pub sketch_sets: Option<BTreeMap<usize, Vec<usize>>>,
}

/// Ground truth in the cheapest exact form available.
pub enum Truth {
    Ttns(Ttns),
    Dense(DenseTensor),
}

impl Truth {
    pub fn of(model: &ResolvedModel) -> Result<Self> {
        if let Some(t) = model.mrf.interaction_tree(model.tree.root()) {
            if t == model.tree {
                return Ok(Truth::Ttns(model.mrf.to_ttns(&model.tree)?));
            }
        }
        Ok(Truth::Dense(model.mrf.full_tensor()?))
    }

    pub fn density(&self) -> Density<'_> {
        match self {
            Truth::Ttns(t) => t.into(),
            Truth::Dense(t) => t.into(),
        }
    }

    fn nll(&self, samples: &DiscreteSamples) -> Result<f64> {
        match self {
            Truth::Ttns(t) => Ok(metrics::nll(t, samples)?.value),
            Truth::Dense(p) => {
                let strides = p.strides();
                let total: f64 = samples
                    .rows()
                    .map(|r| {
                        let i: usize = r.iter().zip(&strides).map(|(&x, s)| x as usize * s).sum();
                        -p.data()[i].max(metrics::NLL_FLOOR).ln()
                    })
                    .sum();
                Ok(total / samples.len() as f64)
            }
        }
    }
}

/// Outcome of one `(N, seed)` cell.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub n: usize,
    pub seed: u64,
    pub sample_seed: u64,
    pub sketch_seed: Option<u64>,
    /// Model id to error message for every fit that failed.
    pub failures: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub reports: Vec<MetricReport>,
}

/// Median `rel_l2_error` of one model at one sample size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub model_id: String,
    pub n: usize,
    pub median: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Slope {
    pub model_id: String,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
    pub slopes: Vec<Slope>,
}

impl ExperimentResult {
    pub fn metrics_csv(&self) -> String {
        let rows: Vec<MetricReport> = self.runs.iter().flat_map(|r| r.reports.iter().cloned()).collect();
        metrics::to_csv(&rows)
    }

    pub fn aggregate_csv(&self) -> String {
        let mut s = String::from("model_id,N,median_rel_l2_error,runs\n");
        for a in &self.aggregates {
            s.push_str(&format!("{},{},{:.17e},{}\n", a.model_id, a.n, a.median, a.runs));
        }
        s
    }

    pub fn slope_csv(&self) -> String {
        let mut s = String::from("model_id,loglog_slope,intercept\n");
        for a in &self.slopes {
            s.push_str(&format!("{},{:.17e},{:.17e}\n", a.model_id, a.slope, a.intercept));
        }
        s
    }

    pub fn median(&self, model_id: &str, n: usize) -> Option<f64> {
        self.aggregates.iter().find(|a| a.model_id == model_id && a.n == n).map(|a| a.median)
    }

    pub fn slope(&self, model_id: &str) -> Option<f64> {
        self.slopes.iter().find(|s| s.model_id == model_id).map(|s| s.slope)
    }
}

pub const SKETCH_ID: &str = "ttns-sketch";

/// Median; `NaN` for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Least-squares fit of `log y = a + b log x`; returns `(b, a)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite()).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    Some((b, my - b * mx))
}

fn report(name: &str, value: f64, method: Method, model: &str, reference: &str, n: usize, seed: u64) -> MetricReport {
    MetricReport {
        name: name.into(),
        value,
        method,
        model_id: model.into(),
        reference_id: reference.into(),
        n: Some(n),
        seed: Some(seed),
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a ResolvedModel,
    truth: &'a Truth,
    sketch: &'a SketchConfig,
}

impl Ctx<'_> {
    fn sketch_for(&self, seed: u64) -> (SketchConfig, Option<u64>) {
        let mut sk = self.sketch.clone();
        if sk.kind == SketchKind::Perturbative && sk.seed.is_none() {
            sk.seed = Some(derive_seed(seed, 1));
        }
        let s = sk.seed.filter(|_| sk.kind == SketchKind::Perturbative);
        (sk, s)
    }

    fn score(&self, id: &str, fit: &Ttns, samples: &DiscreteSamples, rec: &mut RunRecord) {
        let (n, seed) = (rec.n, rec.seed);
        match metrics::rel_l2_error_with_method(fit, self.truth.density()) {
            Ok((v, m)) => rec.reports.push(report("rel_l2_error", v, m, id, "truth", n, seed)),
            Err(e) => {
                rec.failures.insert(format!("{id}/rel_l2_error"), e.to_string());
            }
        }
        match metrics::nll(fit, samples) {
            Ok(r) => {
                rec.reports.push(report("nll", r.value, Method::SampleBased, id, "samples", n, seed));
                if r.floored > 0 {
                    rec.warnings.push(format!("{id}: {} sample probabilities floored", r.floored));
                }
            }
            Err(e) => {
                rec.failures.insert(format!("{id}/nll"), e.to_string());
            }
        }
        if self.cfg.emit_mi {
            let d = fit.d();
            if let Ok(r) = metrics::pairwise_mi(fit, 1, d) {
                rec.reports.push(report("mi_1_d", r.value, Method::TtnsContraction, id, "", n, seed));
            }
        }
    }

    fn run(&self, n: usize, seed: u64) -> RunRecord {
        let sample_seed = derive_seed(seed, 0);
        let (sketch, sketch_seed) = self.sketch_for(seed);
        let mut rec = RunRecord {
            n,
            seed,
            sample_seed,
            sketch_seed,
            failures: BTreeMap::new(),
            warnings: Vec::new(),
            reports: Vec::new(),
        };
        let samples = match self.model.mrf.sample(n, sample_seed) {
            Ok(s) => s,
            Err(e) => {
                rec.failures.insert("samples".into(), e.to_string());
                return rec;
            }
        };
        match self.truth.nll(&samples) {
            Ok(v) => rec.reports.push(report("nll", v, Method::SampleBased, "truth", "samples", n, seed)),
            Err(e) => {
                rec.failures.insert("truth/nll".into(), e.to_string());
            }
        }
        let learned = chow_liu_tree(&samples, 1);
        let fit_tree = match self.cfg.tree {
            TreeSource::True => Ok(self.model.tree.clone()),
            TreeSource::Path => Ok(self.model.path.clone()),
            TreeSource::ChowLiu => learned.as_ref().map(|t| t.clone()).map_err(|e| e.to_string()),
        };
        let mut fits: Vec<(String, std::result::Result<Ttns, String>)> = Vec::new();
        let sketch_fit = |tree: &RootedTree, rec: &mut RunRecord| {
            ttns_sketch(&samples, tree, &sketch, &self.cfg.ranks, &FitOptions::default()).map(|f| {
                rec.warnings.extend(f.diagnostics.warnings.iter().cloned());
                f.model
            })
        };
        let main = match &fit_tree {
            Ok(t) => sketch_fit(t, &mut rec).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        };
        fits.push((SKETCH_ID.into(), main));
        for &b in &self.cfg.baselines {
            let fit = match b {
                Baseline::TrueTreeGm => chow_liu_model(&samples, &self.model.tree).map_err(|e| e.to_string()),
                Baseline::PathGm => chow_liu_model(&samples, &self.model.path).map_err(|e| e.to_string()),
                Baseline::ChowLiuGm => match &learned {
                    Ok(t) => chow_liu_model(&samples, t).map_err(|e| e.to_string()),
                    Err(e) => Err(e.to_string()),
                },
                Baseline::PathSketch => sketch_fit(&self.model.path, &mut rec).map_err(|e| e.to_string()),
            };
            fits.push((b.id().into(), fit));
        }
        if let Ok(t) = &learned {
            let hit = t.undirected_edges() == self.model.tree.undirected_edges();
            rec.reports.push(report(
                "chow_liu_tree_match",
                if hit { 1.0 } else { 0.0 },
                Method::SampleBased,
                "chow-liu-tree",
                "true-tree",
                n,
                seed,
            ));
        }
        for (id, fit) in &fits {
            match fit {
                Ok(m) => {
                    self.score(id, m, &samples, &mut rec);
                    if self.cfg.save_models {
                        let path = self.cfg.out.join("models").join(format!("{id}_N{n}_s{seed}.json"));
                        if let Err(e) = m.save(&path) {
                            rec.failures.insert(format!("{id}/save"), e.to_string());
                        }
                    }
                }
                Err(e) => {
                    rec.failures.insert(id.clone(), e.clone());
                }
            }
        }
        rec
    }
}

/// Runs every `(N, seed)` cell concurrently; results come back in config
/// order so the outputs do not depend on scheduling.
pub fn run_plan(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let model = cfg.resolve_model()?;
    let truth = Truth::of(&model)?;
    let sketch = cfg.resolved_sketch(&model);
    let ctx = Ctx { cfg, model: &model, truth: &truth, sketch: &sketch };
    if cfg.save_models {
        fs::create_dir_all(cfg.out.join("models"))?;
    }
    let cells: Vec<(usize, u64)> = cfg.n_list.iter().flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s))).collect();
    let runs: Vec<RunRecord> = cells.par_iter().map(|&(n, s)| ctx.run(n, s)).collect();

    let mut ids: Vec<String> = vec![SKETCH_ID.into()];
    ids.extend(cfg.baselines.iter().map(|b| b.id().to_string()));
    let mut aggregates = Vec::new();
    let mut slopes = Vec::new();
    for id in &ids {
        let mut points = Vec::new();
        for &n in &cfg.n_list {
            let errs: Vec<f64> = runs
                .iter()
                .filter(|r| r.n == n)
                .flat_map(|r| r.reports.iter())
                .filter(|m| m.model_id == *id && m.name == "rel_l2_error")
                .map(|m| m.value)
                .collect();
            if errs.is_empty() {
                continue;
            }
            let med = median(&errs);
            points.push((n as f64, med));
            aggregates.push(Aggregate { model_id: id.clone(), n, median: med, runs: errs.len() });
        }
        if let Some((slope, intercept)) = loglog_slope(&points) {
            slopes.push(Slope { model_id: id.clone(), slope, intercept });
        }
    }
    Ok(ExperimentResult { runs, aggregates, slopes })
}

#[derive(Serialize)]
struct Formats {
    config: String,
    samples: String,
    model: String,
    metrics_csv: u32,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    format: &'static str,
    version: u32,
    crate_version: &'static str,
    formats: Formats,
    config: &'a ExperimentConfig,
    sketch: SketchConfig,
    fitted_tree: Option<crate::tree::TreeSpec>,
    runs: &'a [RunRecord],
    failed_runs: usize,
    aggregates: &'a [Aggregate],
    slopes: &'a [Slope],
}

/// [`run_plan`] followed by writing `metrics.csv`, `aggregate.csv`,
/// `slope.csv` and `manifest.json` under `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let result = run_plan(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("metrics.csv"), result.metrics_csv())?;
    fs::write(cfg.out.join("aggregate.csv"), result.aggregate_csv())?;
    fs::write(cfg.out.join("slope.csv"), result.slope_csv())?;
    let model = cfg.resolve_model()?;
    let manifest = RunManifest {
        format: MANIFEST_FORMAT,
        version: MANIFEST_VERSION,
        crate_version: env!("CARGO_PKG_VERSION"),
        formats: Formats {
            config: format!("{CONFIG_FORMAT} v{CONFIG_VERSION}"),
            samples: format!("{SAMPLES_FORMAT} v{SAMPLES_VERSION}"),
            model: format!("{MODEL_FORMAT} v{MODEL_VERSION}"),
            metrics_csv: METRICS_VERSION,
        },
        config: cfg,
        sketch: cfg.resolved_sketch(&model),
        fitted_tree: match cfg.tree {
            TreeSource::True => Some(model.tree.to_spec()),
            TreeSource::Path => Some(model.path.to_spec()),
            TreeSource::ChowLiu => None,
        },
        runs: &result.runs,
        failed_runs: result.runs.iter().filter(|r| !r.failures.is_empty()).count(),
        aggregates: &result.aggregates,
        slopes: &result.slopes,
    };
    fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(result)
}

/// Parses `"2^10,4096,2^12"`.
pub fn parse_n_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            let v = match t.split_once('^') {
                Some((b, e)) => {
                    let b: usize = b.trim().parse().map_err(|_| Error::Config(format!("bad sample size `{t}`")))?;
                    let e: u32 = e.trim().parse().map_err(|_| Error::Config(format!("bad sample size `{t}`")))?;
                    b.checked_pow(e).ok_or_else(|| Error::Config(format!("sample size `{t}` overflows")))?
                }
                None => t.parse().map_err(|_| Error::Config(format!("bad sample size `{t}`")))?,
            };
            if v == 0 {
                return Err(Error::Config("sample sizes must be positive".into()));
            }
            Ok(v)
        })
        .collect()
}
