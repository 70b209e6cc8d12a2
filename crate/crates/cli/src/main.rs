use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use delaysinc::features::{load_features, load_labels, write_labels};
use delaysinc::harness::{
    emit_report, eval_masked, fuse_predictions, holdout_eval, load_points, loso_cv, sweep_bandwidth, sweep_clusters, sweep_delay,
    sweep_max_delay, with_jobs, Curve, CurvePoint, ExperimentConfig, Report, Scheme, SweepOptions, SweepParam,
};
use delaysinc::synth::{curve_argmax, delay_curve, latent_map, DelayGrid};
use delaysinc::train::mean_ccc;
use delaysinc::{train, Dataset, MdsModel, Partition, SampledSignal, SynthSpec};

#[derive(Parser)]
#[command(name = "delaysinc", version, about = "Learnable-delay regression of continuous annotations")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the training seed and the synthetic data seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: the config's out_dir, else ./out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset into <out>/dataset.
    Synth,
    /// Train every model candidate and keep the best on dev.
    Train,
    /// Score a saved model, or run the configured evaluation scheme.
    Eval {
        /// Model JSON written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also report masked CCC per synthetic delay region.
        #[arg(long, requires = "model")]
        regions: bool,
    },
    /// Brute-force delay search between a feature signal and labels.
    Align {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Feature channel to align.
        #[arg(long, conflicts_with = "latent", required_unless_present = "latent")]
        channel: Option<usize>,
        /// Align the synthetic latent map of all channels instead.
        #[arg(long)]
        latent: bool,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, default_value_t = 6.0)]
        hi: f64,
        #[arg(long, default_value_t = 0.4)]
        step: f64,
    },
    /// Score the alignment probe on features shifted by each delay.
    SweepDelay {
        /// Delays in seconds [default: the config's sweep values].
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        values: Option<Vec<f64>>,
        /// Probe filter length in seconds.
        #[arg(long, default_value_t = 2.0)]
        probe_window: f64,
    },
    /// CCC of the labels against their low-passed versions, per cutoff.
    SweepBandwidth {
        /// Cutoffs in Hz [default: the config's sweep values].
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Kernel half-length in samples [default: the longest recording].
        #[arg(long)]
        half_len: Option<usize>,
    },
    /// Score the model grid per cluster count.
    SweepClusters {
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Score the model grid per maximum delay.
    SweepMaxdelay {
        /// Maximum delays in seconds.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Average two label-format prediction files.
    Fuse {
        a: PathBuf,
        b: PathBuf,
        /// Output file [default: <out>/fused.csv].
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rebuild metrics and curve CSVs from finished sweep points in <out>.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs;
    let res = with_jobs(jobs, move || run(cli)).map_err(anyhow::Error::from).and_then(|r| r);
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| anyhow!("this command needs --config"))?;
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_json(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth => synth(&cli),
        Command::Train => train_cmd(&cli),
        Command::Eval { model, regions } => eval(&cli, model.as_deref(), *regions),
        Command::Align {
            features,
            labels,
            channel,
            latent: _,
            lo,
            hi,
            step,
        } => align(&cli, features, labels, *channel, DelayGrid { lo: *lo, hi: *hi, step: *step }),
        Command::SweepDelay { values, probe_window } => sweep(&cli, SweepParam::Delay, values.clone(), *probe_window, None),
        Command::SweepBandwidth { values, half_len } => sweep(&cli, SweepParam::Bandwidth, values.clone(), 2.0, *half_len),
        Command::SweepClusters { values } => sweep(&cli, SweepParam::Clusters, values.clone(), 2.0, None),
        Command::SweepMaxdelay { values } => sweep(&cli, SweepParam::MaxDelay, values.clone(), 2.0, None),
        Command::Fuse { a, b, output } => fuse(&cli, a, b, output.as_deref()),
        Command::Report => report(&cli),
    }
}

fn synth(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(_) => Some(load_config(cli)?),
        None => None,
    };
    let mut spec = match &cfg {
        Some(c) => c.synth.clone().ok_or_else(|| anyhow!("the config has no `synth` section"))?,
        None => SynthSpec::default(),
    };
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    let ds = delaysinc::gen_multi_delay_task(&spec)?;
    let dir = out_dir(cli, cfg.as_ref()).join("dataset");
    ds.save(&dir)?;
    println!("wrote {} recordings to {}", ds.recordings.len(), dir.display());
    Ok(())
}

fn train_cmd(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let ds = cfg.dataset()?;
    let mut best = None;
    for (i, c) in cfg.model.expand().iter().enumerate() {
        let run = train(&ds, c, &cfg.train).with_context(|| format!("training candidate {i}"))?;
        println!(
            "candidate {i}: {} filters x {} taps, best dev CCC {:.4} at epoch {}",
            c.trunk_filters, c.trunk_kernel_len, run.best_val_ccc, run.best_epoch
        );
        if best.as_ref().map_or(true, |b: &delaysinc::RunRecord| run.best_val_ccc > b.best_val_ccc) {
            best = Some(run);
        }
    }
    let run = best.expect("model grid is never empty");
    let dir = out_dir(cli, Some(&cfg));
    write_json(&dir.join("model.json"), &run.model.to_json()?)?;
    write_json(&dir.join("run.json"), &run.to_json()?)?;
    let taus: Vec<String> = run.best_taus.iter().map(|t| format!("{t:.3}")).collect();
    println!("best dev CCC {:.4}; delays [{}] s", run.best_val_ccc, taus.join(", "));
    println!("wrote {}", dir.join("model.json").display());
    Ok(())
}

fn eval(cli: &Cli, model: Option<&Path>, regions: bool) -> Result<()> {
    let cfg = load_config(cli)?;
    let ds = cfg.dataset()?;
    let mut metrics = BTreeMap::new();
    match model {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let m = MdsModel::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
            for (name, p) in [("train", Partition::Train), ("dev", Partition::Dev), ("test", Partition::Test)] {
                if ds.partition(p).next().is_some() {
                    metrics.insert(format!("ccc_{name}"), mean_ccc(&m, ds.partition(p))?);
                }
            }
            if regions {
                let meta = ds.meta.as_ref().ok_or_else(|| anyhow!("--regions needs a synthetic dataset"))?;
                let all: Vec<Vec<bool>> = ds.recordings.iter().map(|r| vec![true; r.labels.len()]).collect();
                metrics.insert("ccc_full".into(), eval_masked(&ds, &m, &all)?.full_ccc);
                for (k, tau) in meta.delays().iter().enumerate() {
                    let masks: Vec<Vec<bool>> = (0..ds.recordings.len()).map(|i| meta.region_mask(i, k)).collect();
                    let e = eval_masked(&ds, &m, &masks)?;
                    metrics.insert(format!("ccc_region{k}_delay{tau}"), e.masked_ccc);
                }
            }
        }
        None => {
            let candidates = cfg.model.expand();
            match cfg.scheme {
                Scheme::Loso => {
                    let r = loso_cv(&ds, &candidates, &cfg.train)?;
                    for f in &r.folds {
                        metrics.insert(format!("fold_{}", f.speaker), f.ccc);
                    }
                    metrics.insert("ccc_mean".into(), r.mean);
                    metrics.insert("ccc_std".into(), r.std);
                }
                Scheme::Holdout => {
                    let e = holdout_eval(&ds, &candidates, &cfg.train)?;
                    metrics.insert("ccc".into(), e.scores[0]);
                }
            }
        }
    }
    for (k, v) in &metrics {
        println!("{k}: {v:.4}");
    }
    let dir = out_dir(cli, Some(&cfg));
    emit_report(&Report { metrics, curves: Vec::new() }, &dir)?;
    Ok(())
}

fn align(cli: &Cli, features: &Path, labels: &Path, channel: Option<usize>, grid: DelayGrid) -> Result<()> {
    let f = load_features(features)?;
    let y = load_labels(labels)?;
    let x = match channel {
        Some(d) => {
            if d >= f.dims() {
                bail!("channel {d} out of range for {} feature dimensions", f.dims());
            }
            SampledSignal::new(f.channel(d), f.fs())?
        }
        None => latent_map(&f),
    };
    let curve = delay_curve(&[(&x, &y, None)], &grid)?;
    let tau = curve_argmax(&curve)?;
    println!("best delay {tau} s");
    if let Some(dir) = &cli.out {
        let points = curve
            .iter()
            .map(|&(t, c)| CurvePoint::from_scores(t, vec![c], Vec::new()))
            .collect::<delaysinc::Result<Vec<_>>>()?;
        let mut metrics = BTreeMap::new();
        metrics.insert("delay".to_string(), tau);
        let curves = vec![Curve { name: "align".into(), points }];
        for p in emit_report(&Report { metrics, curves }, dir)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn curve_metrics(curves: &[Curve]) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for c in curves {
        if let Some(best) = c.points.iter().reduce(|a, b| if b.ccc_mean > a.ccc_mean { b } else { a }) {
            m.insert(format!("{}.best_parameter", c.name), best.parameter);
            m.insert(format!("{}.best_ccc_mean", c.name), best.ccc_mean);
        }
    }
    m
}

fn sweep(cli: &Cli, param: SweepParam, values: Option<Vec<f64>>, probe_window: f64, half_len: Option<usize>) -> Result<()> {
    let cfg = load_config(cli)?;
    let values = match (values, &cfg.sweep) {
        (Some(v), _) => v,
        (None, Some(s)) if s.parameter == param => s.values.clone(),
        (None, Some(s)) => bail!(
            "the config sweeps {}; pass --values for this sweep",
            serde_json::to_string(&s.parameter)?
        ),
        (None, None) => bail!("no sweep values: pass --values or set `sweep` in the config"),
    };
    let ds: Dataset = cfg.dataset()?;
    let dir = out_dir(cli, Some(&cfg));
    let opts = SweepOptions {
        scheme: cfg.scheme,
        repeats: cfg.repeats,
        cache_dir: Some(dir.clone()),
        probe_window_s: probe_window,
    };
    let candidates = cfg.model.expand();
    let curve = match param {
        SweepParam::Delay => sweep_delay(&ds, &values, &cfg.train, &opts)?,
        SweepParam::Bandwidth => {
            let labels: Vec<SampledSignal> = ds.recordings.iter().map(|r| r.labels.clone()).collect();
            let h = half_len.unwrap_or_else(|| labels.iter().map(|l| l.len()).max().unwrap_or(1));
            sweep_bandwidth(&labels, &values, h)?
        }
        SweepParam::Clusters => {
            let ms = values
                .iter()
                .map(|&v| {
                    if v >= 1.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(anyhow!("cluster count {v} is not a positive integer"))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            sweep_clusters(&ds, &ms, &candidates, &cfg.train, &opts)?
        }
        SweepParam::MaxDelay => sweep_max_delay(&ds, &values, &candidates, &cfg.train, &opts)?,
    };
    for p in &curve.points {
        println!("{}: {:.4} +- {:.4}", p.parameter, p.ccc_mean, p.ccc_std);
    }
    let curves = vec![curve];
    let metrics = curve_metrics(&curves);
    for p in emit_report(&Report { metrics, curves }, &dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn fuse(cli: &Cli, a: &Path, b: &Path, output: Option<&Path>) -> Result<()> {
    let pa = load_labels(a)?;
    let pb = load_labels(b)?;
    let fused = fuse_predictions(&pa, &pb)?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => out_dir(cli, None).join("fused.csv"),
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    write_labels(&path, &fused)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn report(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(_) => Some(load_config(cli)?),
        None => None,
    };
    let dir = out_dir(cli, cfg.as_ref());
    let curves = load_points(&dir)?;
    let metrics = curve_metrics(&curves);
    for p in emit_report(&Report { metrics, curves }, &dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
