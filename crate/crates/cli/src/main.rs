use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssgn_core::config::RunConfig;
use ssgn_core::error::ErrorClass;
use ssgn_core::exec::Exec;
use ssgn_core::graph::{export_graph, ExportFormat, GraphKind, SceneGraph, SparsitySummary};
use ssgn_core::scene::{
    load_dataset, load_scene, scene_name, synth_generate_with, write_dataset, Dataset, Scene,
    Split, SynthSpec,
};
use ssgn_core::training::{self, evaluate_split, load_trained, prepare, TrainRun};
use ssgn_core::{Result, SsgnError};

#[derive(Parser)]
#[command(
    name = "ssgn",
    version,
    about = "Sparse spatial graph network for scene-text VQA"
)]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Prune one scene and print per-graph sparsity ratios.
    Prune(PruneArgs),
    /// Entity counts and sparsity ratios of a dataset.
    Stats(StatsArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split.
    Eval(EvalArgs),
    /// Write the pruned graphs of one scene as JSON or DOT.
    ExportGraph(ExportArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Run config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set theta=0.4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self, extra: Vec<String>) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let mut all = self.overrides.clone();
        all.extend(extra);
        base.with_overrides(&all)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Generator spec (TOML); defaults apply for missing keys.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    scenes: Option<usize>,
}

#[derive(Args)]
struct PruneArgs {
    scene: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// otsg, osg, tsg or all.
    #[arg(long, default_value = "all")]
    graph: String,
    #[arg(long, default_value = "json")]
    format: String,
    /// Directory for the exports; without it only ratios are printed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    split: Option<Split>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    /// Continue from `last.ckpt` in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "val")]
    split: Split,
    /// Directory for `report.json` and `predictions.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    scene: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "all")]
    graph: String,
    #[arg(long, default_value = "json")]
    format: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(1);
        }
    };
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a, exec),
        Command::Prune(a) => prune(a),
        Command::Stats(a) => stats(a, exec),
        Command::Train(a) => train(a, exec),
        Command::Eval(a) => eval(a, exec),
        Command::ExportGraph(a) => export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (tag, code) = match e.class() {
                ErrorClass::Usage => ("usage", 1),
                ErrorClass::Data => ("data", 2),
                ErrorClass::Numeric => ("numeric", 3),
            };
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{tag}]: {msg}");
            ExitCode::from(code)
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| SsgnError::io(path, e))
}

fn read_scene(path: &Path, cfg: &RunConfig) -> Result<Scene> {
    let bytes = fs::read(path).map_err(|e| SsgnError::io(path, e))?;
    let (scene, report) = load_scene(&bytes, cfg.limits())?;
    if report.clamped > 0 {
        log::warn!(
            "{}: clipped {} boxes to the image",
            path.display(),
            report.clamped
        );
    }
    Ok(scene)
}

fn graph_kinds(name: &str) -> Result<Vec<GraphKind>> {
    if name == "all" {
        Ok(GraphKind::ALL.to_vec())
    } else {
        Ok(vec![name.parse()?])
    }
}

fn synth(a: SynthArgs, exec: Exec) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| SsgnError::io(p, e))?;
            toml::from_str::<SynthSpec>(&text)
                .map_err(|e| SsgnError::Config(format!("{}: {}", p.display(), e.message())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(n) = a.scenes {
        spec.scenes = n;
    }
    spec.validate()?;
    let seed = match a.seed {
        Some(s) => s,
        None => RunConfig::default().resolved_seed()?,
    };
    let scenes = synth_generate_with(seed, &spec, exec)?;
    let named: Vec<(String, Split, Scene)> = scenes
        .into_iter()
        .enumerate()
        .map(|(i, s)| (scene_name(i), spec.split_of(i), s))
        .collect();
    let manifest = write_dataset(&a.out, &named)?;
    #[derive(serde::Serialize)]
    struct Echo<'a> {
        seed: u64,
        spec: &'a SynthSpec,
    }
    let echo = toml::to_string(&Echo { seed, spec: &spec })
        .map_err(|e| SsgnError::Config(e.to_string()))?;
    write(&a.out.join("config.toml"), echo)?;

    println!("scenes {}", manifest.scenes.len());
    for split in [Split::Train, Split::Val, Split::Test] {
        let n = manifest.scenes.iter().filter(|e| e.split == split).count();
        println!("{:<6} {n}", split.as_str());
    }
    print_histogram("objects", named.iter().map(|s| s.2.objects.len()));
    print_histogram("tokens", named.iter().map(|s| s.2.tokens.len()));
    Ok(())
}

fn print_histogram(what: &str, counts: impl Iterator<Item = usize>) {
    let mut h = std::collections::BTreeMap::new();
    for c in counts {
        *h.entry(c).or_insert(0usize) += 1;
    }
    let parts: Vec<String> = h.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    println!("{what:<8} {}", parts.join(" "));
}

fn prune(a: PruneArgs) -> Result<()> {
    let cfg = a.config.resolve(Vec::new())?;
    let kinds = graph_kinds(&a.graph)?;
    let format: ExportFormat = a.format.parse()?;
    let scene = read_scene(&a.scene, &cfg)?;
    let exp = cfg.experiment()?;
    let graph = SceneGraph::build(&scene, &exp.prune, exp.model.toggles)?;
    println!(
        "{:<6} {:>6} {:>7} {:>8}",
        "graph", "total", "pruned", "ratio"
    );
    for k in &kinds {
        let s = graph.stats(*k);
        println!(
            "{:<6} {:>6} {:>7} {:>8.4}",
            k.as_str(),
            s.total,
            s.pruned,
            s.ratio
        );
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out).map_err(|e| SsgnError::io(out, e))?;
        let stem = scene_stem(&a.scene);
        let ext = match format {
            ExportFormat::Json => "json",
            ExportFormat::Dot => "dot",
        };
        for k in &kinds {
            let path = out.join(format!("{stem}.{}.{ext}", k.as_str()));
            write(&path, export_graph(&scene, &graph, &[*k], format))?;
        }
        write(&out.join("config.toml"), cfg.to_toml())?;
    }
    Ok(())
}

fn scene_stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.strip_suffix(ssgn_core::scene::SCENE_SUFFIX)
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(&name)
        .to_string()
}

fn data_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.data.clone()).ok_or_else(|| {
        SsgnError::Config("no dataset given (--data or `data` in the config)".into())
    })
}

fn stats(a: StatsArgs, exec: Exec) -> Result<()> {
    let cfg = a.config.resolve(Vec::new())?;
    let exp = cfg.experiment()?;
    let data = data_dir(a.data, &cfg)?;
    let ds = load_dataset(&data, cfg.limits())?;
    let entries: Vec<_> = match a.split {
        Some(s) => ds.split(s).collect(),
        None => ds.entries.iter().collect(),
    };
    let graphs = exec.try_map_range(entries.len(), |i| {
        SceneGraph::build(&entries[i].scene, &exp.prune, exp.model.toggles)
    })?;
    let summary = SparsitySummary::from_graphs(&graphs);
    let examples: usize = entries.iter().map(|e| e.scene.examples.len()).sum();
    println!("scenes   {}", summary.scenes);
    println!("examples {examples}");
    print_histogram("objects", entries.iter().map(|e| e.scene.objects.len()));
    print_histogram("tokens", entries.iter().map(|e| e.scene.tokens.len()));
    println!("sr_otsg  {:.4}", summary.otsg);
    println!("sr_osg   {:.4}", summary.osg);
    println!("sr_tsg   {:.4}", summary.tsg);
    Ok(())
}

fn train(a: TrainArgs, exec: Exec) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(s) = a.seed {
        extra.push(format!("seed={s}"));
    }
    if let Some(s) = a.steps {
        extra.push(format!("steps={s}"));
    }
    let mut cfg = a.config.resolve(extra)?;
    if let Some(d) = a.data {
        cfg.data = Some(d);
    }
    if let Some(o) = a.out {
        cfg.out = Some(o);
    }
    let data = data_dir(None, &cfg)?;
    let out = cfg.out.clone().ok_or_else(|| {
        SsgnError::Config("no output directory given (--out or `out` in the config)".into())
    })?;
    cfg.seed = Some(cfg.resolved_seed()?);
    let exp = cfg.experiment()?;
    let ds: Dataset = load_dataset(&data, cfg.limits())?;
    fs::create_dir_all(&out).map_err(|e| SsgnError::io(&out, e))?;
    write(&out.join("config.toml"), cfg.to_toml())?;
    let summary = training::train(TrainRun {
        dataset: &ds,
        experiment: &exp,
        out_dir: &out,
        resume: a.resume,
        exec,
    })?;
    if let Some(last) = summary.rows.last() {
        println!("step {} loss {:.6}", last.step, last.loss.total);
    }
    if let Some(b) = summary.best_val_acc {
        println!("best val acc {b:.4}");
    }
    println!("checkpoint {}", summary.last_checkpoint.display());
    Ok(())
}

fn eval(a: EvalArgs, exec: Exec) -> Result<()> {
    let trained = load_trained(&a.checkpoint)?;
    let ds = load_dataset(&a.data, Default::default())?;
    let split = prepare(
        &ds,
        a.split,
        &trained.meta.vocabs,
        &trained.meta.experiment,
        exec,
    )?;
    let (mut report, predictions) = evaluate_split(
        &trained.model,
        &trained.params,
        &split,
        &trained.meta.vocabs,
        exec,
    )?;
    report.split = Some(a.split);
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        fs::create_dir_all(out).map_err(|e| SsgnError::io(out, e))?;
        write(&out.join("report.json"), report.to_json())?;
        let mut lines = String::new();
        for p in &predictions {
            lines.push_str(&serde_json::to_string(p).expect("prediction serializes"));
            lines.push('\n');
        }
        write(&out.join("predictions.jsonl"), lines)?;
        let cfg = RunConfig::from_parts(
            Some(trained.meta.experiment.train.seed),
            &trained.meta.experiment,
            Default::default(),
        );
        write(&out.join("config.toml"), cfg.to_toml())?;
    }
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let cfg = a.config.resolve(Vec::new())?;
    let kinds = graph_kinds(&a.graph)?;
    let format: ExportFormat = a.format.parse()?;
    let scene = read_scene(&a.scene, &cfg)?;
    let exp = cfg.experiment()?;
    let graph = SceneGraph::build(&scene, &exp.prune, exp.model.toggles)?;
    let bytes = export_graph(&scene, &graph, &kinds, format);
    match &a.out {
        Some(p) => write(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| SsgnError::io("<stdout>", e))
        }
    }
}
