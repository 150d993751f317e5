use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ttns_sketch::chow_liu::{chow_liu_model, max_spanning_tree, mi_matrix};
use ttns_sketch::experiment::{parse_n_list, run_experiment, ExperimentConfig, TreeSource, Truth};
use ttns_sketch::metrics::{self, Method, MetricReport};
use ttns_sketch::{preset_model, ttns_sketch, DiscreteSamples, Error, FitOptions, PresetParams, RankSpec, RootedTree, SketchConfig, Ttns, TreeSpec};

#[derive(Parser)]
#[command(name = "ttns", version, about = "Tree tensor network density estimation by sketching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// Experiment config; its model, tree and sketch fields are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Override the preset's number of variables.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct FitArgs {
    /// markov | lmarkov:L | perturbative
    #[arg(long)]
    sketch: Option<String>,
    #[arg(long, conflicts_with_all = ["delta", "max_rank"])]
    rank: Option<usize>,
    /// Rank on every edge, lowered where an edge cannot support it.
    #[arg(long, conflicts_with = "delta")]
    max_rank: Option<usize>,
    /// Relative singular-value threshold for rank selection.
    #[arg(long)]
    delta: Option<f64>,
    /// Perturbation strength for the perturbative sketch.
    #[arg(long)]
    eps: Option<f64>,
    /// Sketch dimension for the perturbative sketch.
    #[arg(long)]
    l: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples from a ground-truth model.
    GenSamples {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write the little-endian u16 variant with a JSON sidecar.
        #[arg(long)]
        binary: bool,
    },
    /// Learn the maximum-MI spanning tree of a sample file.
    ChowLiu {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 1)]
        root: usize,
        /// Tree JSON output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the MI matrix as CSV.
        #[arg(long)]
        emit_mi: Option<PathBuf>,
        /// Save the tree graphical model fitted on the learned tree.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Fit a TTNS to a sample file.
    Fit {
        #[arg(long)]
        samples: PathBuf,
        /// Tree JSON; defaults to the preset's tree, or the Chow-Liu tree.
        #[arg(long)]
        tree: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model: NLL on samples, error and KL against a reference.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Reference TTNS file.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Use a preset's exact distribution as the reference.
        #[command(flatten)]
        truth: ModelArgs,
        /// Also report MI between the first and last variable.
        #[arg(long)]
        emit_mi: bool,
    },
    /// Draw samples from a fitted model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        binary: bool,
    },
    /// Run an N-sweep experiment.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run a single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_list: Option<String>,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        emit_mi: bool,
    },
    /// Print an experiment config template.
    ConfigTemplate,
}

fn sample_size(s: &str) -> Result<usize, Error> {
    match parse_n_list(s)?.as_slice() {
        [n] => Ok(*n),
        _ => Err(Error::Config(format!("expected one sample size, got `{s}`"))),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Option<ExperimentConfig>, Error> {
    path.as_ref().map(ExperimentConfig::load).transpose()
}

/// Config from `--config`, or the template, with `--preset` etc. applied.
fn model_config(args: &ModelArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = load_config(&args.config)?.unwrap_or_else(ExperimentConfig::template);
    if let Some(p) = &args.preset {
        cfg.preset = Some(p.clone());
        cfg.model = None;
        cfg.sketch = None;
    }
    if args.d.is_some() {
        cfg.d = args.d;
    }
    if args.beta.is_some() {
        cfg.beta = args.beta;
    }
    if args.config.is_none() && args.preset.is_none() {
        return Err(Error::Config("give --preset or --config".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_fit_args(cfg: &mut ExperimentConfig, fit: &FitArgs, seed: Option<u64>) -> Result<(), Error> {
    if let Some(s) = &fit.sketch {
        cfg.sketch = Some(SketchConfig::parse_short(s)?);
    }
    if fit.eps.is_some() || fit.l.is_some() || seed.is_some() {
        let sk = cfg.sketch.get_or_insert_with(SketchConfig::markov);
        if fit.eps.is_some() {
            sk.eps = fit.eps;
        }
        if fit.l.is_some() {
            sk.l = fit.l;
        }
        if seed.is_some() {
            sk.seed = seed;
        }
    }
    if let Some(r) = fit.rank {
        cfg.ranks = RankSpec::Fixed(r);
    }
    if let Some(r) = fit.max_rank {
        cfg.ranks = RankSpec::Capped(r);
    }
    if let Some(delta) = fit.delta {
        cfg.ranks = RankSpec::Delta { delta, absolute: false };
    }
    cfg.validate()
}

fn load_samples(path: &Path) -> Result<DiscreteSamples, Error> {
    DiscreteSamples::load_auto(path)
}

fn save_samples(s: &DiscreteSamples, path: &Path, binary: bool) -> Result<(), Error> {
    if binary {
        s.save_binary(path)
    } else {
        s.save_text(path)
    }
}

fn load_tree(path: &Path) -> Result<RootedTree, Error> {
    let spec: TreeSpec = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Error::MalformedHeader(format!("tree file: {e}")))?;
    RootedTree::from_spec(&spec)
}

fn print_reports(rows: &[MetricReport]) -> Result<(), Error> {
    let mut out = io::stdout().lock();
    out.write_all(metrics::to_csv(rows).as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenSamples { model, n, seed, out, binary } => {
            let cfg = model_config(&model)?;
            let m = cfg.resolve_model()?;
            let s = m.mrf.sample(sample_size(&n)?, seed)?;
            save_samples(&s, &out, binary)?;
        }
        Command::ChowLiu { samples, root, out, emit_mi, model_out } => {
            let s = load_samples(&samples)?;
            let mi = mi_matrix(&s);
            let tree = max_spanning_tree(&mi, root)?;
            let json = serde_json::to_string_pretty(&tree.to_spec())?;
            match out {
                Some(p) => fs::write(p, json)?,
                None => println!("{json}"),
            }
            if let Some(p) = emit_mi {
                fs::write(p, mi.to_csv())?;
            }
            if let Some(p) = model_out {
                chow_liu_model(&s, &tree)?.save(p)?;
            }
        }
        Command::Fit { samples, tree, model, fit, seed, out } => {
            let s = load_samples(&samples)?;
            let have_model = model.config.is_some() || model.preset.is_some();
            let mut cfg = if have_model { model_config(&model)? } else { ExperimentConfig::template() };
            if !have_model {
                cfg.sketch = None;
            }
            apply_fit_args(&mut cfg, &fit, seed)?;
            let resolved = if have_model { Some(cfg.resolve_model()?) } else { None };
            let tree = match (&tree, &resolved) {
                (Some(p), _) => load_tree(p)?,
                (None, Some(m)) => match cfg.tree {
                    TreeSource::True => m.tree.clone(),
                    TreeSource::Path => m.path.clone(),
                    TreeSource::ChowLiu => ttns_sketch::chow_liu::chow_liu_tree(&s, 1)?,
                },
                (None, None) => ttns_sketch::chow_liu::chow_liu_tree(&s, 1)?,
            };
            let sketch = match (&cfg.sketch, &resolved) {
                (Some(sk), _) => sk.clone(),
                (None, Some(m)) => cfg.resolved_sketch(m),
                (None, None) => SketchConfig::markov(),
            };
            let fitted = ttns_sketch(&s, &tree, &sketch, &cfg.ranks, &FitOptions::default())?;
            for w in &fitted.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
            fitted.model.save(&out)?;
            println!("{}", serde_json::to_string_pretty(&fitted.diagnostics)?);
        }
        Command::Eval { model, samples, reference, truth, emit_mi } => {
            let m = Ttns::load(&model)?;
            let id = model.display().to_string();
            let mut rows = Vec::new();
            let row = |name: &str, value: f64, method: Method, reference: &str| MetricReport {
                name: name.into(),
                value,
                method,
                model_id: id.clone(),
                reference_id: reference.into(),
                n: None,
                seed: None,
            };
            if let Some(p) = &samples {
                let s = load_samples(p)?;
                let r = metrics::nll(&m, &s)?;
                if r.floored > 0 {
                    eprintln!("warning: {} sample probabilities floored", r.floored);
                }
                rows.push(MetricReport { n: Some(s.len()), ..row("nll", r.value, Method::SampleBased, &p.display().to_string()) });
            }
            if let Some(p) = &reference {
                let r = Ttns::load(p)?;
                let (v, method) = metrics::rel_l2_error_with_method(&m, &r)?;
                rows.push(row("rel_l2_error", v, method, &p.display().to_string()));
            }
            if truth.preset.is_some() || truth.config.is_some() {
                let cfg = model_config(&truth)?;
                let t = Truth::of(&cfg.resolve_model()?)?;
                let (v, method) = metrics::rel_l2_error_with_method(&m, t.density())?;
                rows.push(row("rel_l2_error", v, method, "truth"));
                if let Truth::Dense(p) = &t {
                    let q = m.contract_full()?;
                    rows.push(row("kl_divergence", metrics::kl_divergence(p, &q)?, Method::Dense, "truth"));
                }
            }
            if emit_mi {
                let r = metrics::pairwise_mi(&m, 1, m.d())?;
                rows.push(row("mi_1_d", r.value, Method::TtnsContraction, ""));
            }
            print_reports(&rows)?;
        }
        Command::Sample { model, n, seed, out, binary } => {
            let m = Ttns::load(&model)?;
            let (s, report) = m.draw_samples(sample_size(&n)?, seed)?;
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            save_samples(&s, &out, binary)?;
        }
        Command::Experiment { config, preset, out, seed, n_list, fit, emit_mi } => {
            let mut cfg = load_config(&config)?.unwrap_or_else(ExperimentConfig::template);
            if let Some(p) = preset {
                let p = preset_model(&p, &PresetParams::default()).map(|m| m.name)?;
                cfg.preset = Some(p);
                cfg.model = None;
                if config.is_none() {
                    cfg.sketch = None;
                    cfg.out = PathBuf::from("runs").join(cfg.preset.as_deref().unwrap_or("model"));
                }
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(l) = n_list {
                cfg.n_list = parse_n_list(&l)?;
            }
            if emit_mi {
                cfg.emit_mi = true;
            }
            apply_fit_args(&mut cfg, &fit, None)?;
            let result = run_experiment(&cfg)?;
            print!("{}", result.aggregate_csv());
            print!("{}", result.slope_csv());
            let failed = result.runs.iter().filter(|r| !r.failures.is_empty()).count();
            if failed > 0 {
                eprintln!("{failed} of {} runs had failures; see manifest.json", result.runs.len());
            }
        }
        Command::ConfigTemplate => {
            println!("{}", ExperimentConfig::template().to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
