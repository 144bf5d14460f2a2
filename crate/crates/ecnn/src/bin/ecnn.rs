//! Command-line driver: synthetic data generation, RT labeling,
//! decomposition, PSD export, LOSO evaluation and the component sweep.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use clap::{Args, Parser, Subcommand};
use ecnn::data::{
    generate_synthetic, label_trials, load_epochs, parse_rt_csv, save_epochs, SyntheticSpec,
};
use ecnn::decompose::{decompose_epoch, DecompositionConfig, Method};
use ecnn::ensemble::{EnsembleMode, TrainConfig};
use ecnn::epoch::{Epoch, EpochSet};
use ecnn::eval::{
    run_loso, sensitivity_sweep, write_report_kv, write_report_text, write_sweep_csv, LosoConfig,
};
use ecnn::features::write_feature_csv;
use ecnn::signal::rel_l2_error;
use std::collections::HashMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ecnn", about = "Decomposition-ensemble EEG fatigue classification pipeline")]
struct Cli {
    /// Worker threads for fold-level parallelism (default: ECNN_WORKERS env
    /// var, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Key=value config file supplying defaults for training/method flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset.
    Synth(SynthArgs),
    /// Decompose every epoch of a dataset into component datasets.
    Decompose(DecomposeArgs),
    /// Label RT trials from a CSV.
    Label(LabelArgs),
    /// Export PSD band-power features as CSV.
    Psd(PsdArgs),
    /// Leave-one-subject-out evaluation.
    Loso(LosoArgs),
    /// Component-count sensitivity sweep.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    subjects: usize,
    /// Epochs per class per subject.
    #[arg(long, default_value_t = 40)]
    epochs_per_class: usize,
    #[arg(long, default_value_t = 4)]
    channels: usize,
    #[arg(long, default_value_t = 384)]
    samples: usize,
    #[arg(long, default_value_t = 128.0)]
    rate: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    /// Disable per-subject gain/offset shifts.
    #[arg(long)]
    no_subject_shift: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long)]
    method: Option<Method>,
    /// Component count D; method default when omitted.
    #[arg(long)]
    components: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    mode: Option<EnsembleMode>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LabelArgs {
    /// CSV: subject,deviation_onset_s,response_onset_s.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 90.0)]
    window_s: f64,
    /// Output CSV of per-trial labels.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PsdArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LosoArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Output directory for report files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Component range `lo:hi` (inclusive).
    #[arg(long)]
    range: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers.or_else(|| {
        std::env::var("ECNN_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = workers {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            eprintln!("warning: worker pool already initialized");
        }
    }
    let file_config = match cli.config.as_deref().map(read_config_file).transpose() {
        Ok(map) => map.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command, &file_config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn read_config_file(path: &Path) -> Result<HashMap<String, String>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read config {path:?}: {e}"))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn config_get<T: std::str::FromStr>(
    map: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>, String> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| format!("config key '{key}': unparseable value '{v}'")),
    }
}

struct ResolvedRun {
    decomposition: DecompositionConfig,
    mode: EnsembleMode,
    train: TrainConfig,
}

fn resolve_run(
    method: &MethodArgs,
    train: Option<&TrainArgs>,
    file: &HashMap<String, String>,
) -> Result<ResolvedRun, String> {
    let method_value = match method.method {
        Some(m) => m,
        None => config_get::<Method>(file, "method")?.unwrap_or(Method::Dwt),
    };
    let components = match method.components {
        Some(d) => d,
        None => config_get(file, "components")?.unwrap_or_else(|| method_value.default_components()),
    };
    let decomposition =
        DecompositionConfig::new(method_value, components).map_err(|e| e.to_string())?;
    let defaults = TrainConfig::default();
    let (mode, train_config) = if let Some(t) = train {
        let mode = match t.mode {
            Some(m) => m,
            None => config_get::<EnsembleMode>(file, "mode")?.unwrap_or(EnsembleMode::E2),
        };
        let epochs = match t.epochs {
            Some(v) => v,
            None => config_get(file, "epochs")?.unwrap_or(defaults.epochs),
        };
        let batch_size = match t.batch {
            Some(v) => v,
            None => config_get(file, "batch")?.unwrap_or(defaults.batch_size),
        };
        let learning_rate = match t.lr {
            Some(v) => v,
            None => config_get(file, "lr")?.unwrap_or(defaults.learning_rate),
        };
        let seed = match t.seed {
            Some(v) => v,
            None => config_get(file, "seed")?.unwrap_or(defaults.seed),
        };
        (mode, TrainConfig { epochs, batch_size, learning_rate, seed })
    } else {
        (EnsembleMode::E2, defaults)
    };
    Ok(ResolvedRun { decomposition, mode, train: train_config })
}

fn effective_config_lines(run: &ResolvedRun) -> String {
    format!(
        "method={}\ncomponents={}\nmode={}\nepochs={}\nbatch={}\nlr={}\nseed={}\n",
        run.decomposition.method.name(),
        run.decomposition.components,
        run.mode.name(),
        run.train.epochs,
        run.train.batch_size,
        run.train.learning_rate,
        run.train.seed,
    )
}

fn run(command: Command, file_config: &HashMap<String, String>) -> Result<(), String> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Decompose(args) => cmd_decompose(args, file_config),
        Command::Label(args) => cmd_label(args),
        Command::Psd(args) => cmd_psd(args),
        Command::Loso(args) => cmd_loso(args, file_config),
        Command::Sweep(args) => cmd_sweep(args, file_config),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), String> {
    let spec = SyntheticSpec {
        subjects: args.subjects,
        epochs_per_class: args.epochs_per_class,
        channels: args.channels,
        samples: args.samples,
        sample_rate_hz: args.rate,
        noise_sigma: args.noise_sigma,
        subject_shift: !args.no_subject_shift,
        seed: args.seed,
    };
    let set = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    save_epochs(&set, &args.out).map_err(|e| e.to_string())?;
    println!(
        "wrote {} epochs ({} subjects x 2 x {}) to {:?} [seed {}]",
        set.len(),
        spec.subjects,
        spec.epochs_per_class,
        args.out,
        spec.seed
    );
    Ok(())
}

fn cmd_decompose(args: DecomposeArgs, file: &HashMap<String, String>) -> Result<(), String> {
    let run = resolve_run(&args.method, None, file)?;
    let set = load_epochs(&args.input).map_err(|e| e.to_string())?;
    let (c, t, rate) = set.shape().ok_or("empty dataset")?;
    let config = &run.decomposition;

    let mut stacks = Vec::with_capacity(set.len());
    let mut clamped_epochs = 0usize;
    let mut worst_error = 0.0f64;
    for epoch in set.epochs() {
        let stack = decompose_epoch(epoch, config).map_err(|e| e.to_string())?;
        if stack.clamped {
            clamped_epochs += 1;
        }
        // Reconstruction check: components sum back to the epoch.
        let mut recon = vec![0.0; c * t];
        for comp in &stack.components {
            for (r, v) in recon.iter_mut().zip(comp) {
                *r += v;
            }
        }
        worst_error = worst_error.max(rel_l2_error(&recon, epoch.data()));
        stacks.push(stack);
    }
    let depth = stacks.iter().map(|s| s.depth()).min().unwrap_or(0);

    fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    for d in 0..depth {
        let mut component_set = EpochSet::new();
        for (stack, epoch) in stacks.iter().zip(set.epochs()) {
            // Fold any surplus components of deeper stacks into the last one.
            let mut data = stack.components[d.min(stack.depth() - 1)].clone();
            if d == depth - 1 {
                for extra in &stack.components[depth..] {
                    for (o, v) in data.iter_mut().zip(extra) {
                        *o += v;
                    }
                }
            }
            component_set
                .push(
                    Epoch::new(data, c, t, rate, epoch.subject_id, epoch.label)
                        .map_err(|e| e.to_string())?,
                )
                .map_err(|e| e.to_string())?;
        }
        save_epochs(&component_set, &args.out.join(format!("component_{d}")))
            .map_err(|e| e.to_string())?;
    }
    let summary = format!(
        "method={}\nrequested_components={}\nwritten_components={}\nclamped_epochs={}\nmax_reconstruction_rel_l2={:.3e}\n",
        config.method.name(),
        config.components,
        depth,
        clamped_epochs,
        worst_error
    );
    fs::write(args.out.join("summary.txt"), &summary).map_err(|e| e.to_string())?;
    print!("{summary}");
    Ok(())
}

fn cmd_label(args: LabelArgs) -> Result<(), String> {
    let file = fs::File::open(&args.input).map_err(|e| e.to_string())?;
    let trials = parse_rt_csv(BufReader::new(file)).map_err(|e| e.to_string())?;
    let result = label_trials(&trials, args.window_s).map_err(|e| e.to_string())?;
    let mut out = String::from("subject,deviation_onset_s,local_rt_s,global_rt_s,label\n");
    let mut counts = [0usize; 3];
    for (trial, (label, global)) in trials
        .iter()
        .zip(result.labels.iter().zip(&result.global_rt_s))
    {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            trial.subject_id,
            trial.deviation_onset_s,
            trial.local_rt_s(),
            global,
            label.name()
        ));
        counts[*label as usize] += 1;
    }
    fs::write(&args.out, out).map_err(|e| e.to_string())?;
    for (subject, alert_rt) in &result.alert_rt_s {
        println!("subject {subject}: alert_rt={alert_rt:.4}s");
    }
    println!(
        "labeled {} trials: {} alert, {} fatigue, {} excluded (window {}s)",
        trials.len(),
        counts[0],
        counts[1],
        counts[2],
        args.window_s
    );
    Ok(())
}

fn cmd_psd(args: PsdArgs) -> Result<(), String> {
    let set = load_epochs(&args.input).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    write_feature_csv(&set, &mut out).map_err(|e| e.to_string())?;
    fs::write(&args.out, out).map_err(|e| e.to_string())?;
    println!("wrote {} feature rows to {:?}", set.len(), args.out);
    Ok(())
}

fn cmd_loso(args: LosoArgs, file: &HashMap<String, String>) -> Result<(), String> {
    let run = resolve_run(&args.method, Some(&args.train), file)?;
    let set = load_epochs(&args.input).map_err(|e| e.to_string())?;
    let config = LosoConfig {
        decomposition: run.decomposition.clone(),
        mode: run.mode,
        train: run.train.clone(),
        trunk: None,
    };
    let report = run_loso(&set, &config).map_err(|e| e.to_string())?;
    fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    let mut text = Vec::new();
    write_report_text(&report, &mut text).map_err(|e| e.to_string())?;
    fs::write(args.out.join("report.txt"), &text).map_err(|e| e.to_string())?;
    let mut kv = Vec::new();
    kv.extend_from_slice(effective_config_lines(&run).as_bytes());
    write_report_kv(&report, &mut kv).map_err(|e| e.to_string())?;
    fs::write(args.out.join("report.kv"), kv).map_err(|e| e.to_string())?;
    print!("{}", String::from_utf8_lossy(&text));
    Ok(())
}

fn parse_range(s: &str) -> Result<Vec<usize>, String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("range '{s}' must be lo:hi"))?;
    let lo: usize = lo.parse().map_err(|_| format!("bad range start '{lo}'"))?;
    let hi: usize = hi.parse().map_err(|_| format!("bad range end '{hi}'"))?;
    if lo == 0 || hi < lo {
        return Err(format!("range '{s}' must satisfy 1 <= lo <= hi"));
    }
    Ok((lo..=hi).collect())
}

fn cmd_sweep(args: SweepArgs, file: &HashMap<String, String>) -> Result<(), String> {
    let run = resolve_run(&args.method, Some(&args.train), file)?;
    let d_range = parse_range(&args.range)?;
    let set = load_epochs(&args.input).map_err(|e| e.to_string())?;
    let config = LosoConfig {
        decomposition: run.decomposition.clone(),
        mode: run.mode,
        train: run.train.clone(),
        trunk: None,
    };
    let rows = sensitivity_sweep(&set, &config, &d_range).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    out.extend_from_slice(
        effective_config_lines(&run)
            .lines()
            .map(|l| format!("# {l}\n"))
            .collect::<String>()
            .as_bytes(),
    );
    write_sweep_csv(&rows, &mut out).map_err(|e| e.to_string())?;
    fs::write(&args.out, &out).map_err(|e| e.to_string())?;
    for r in &rows {
        println!(
            "D={} (effective {}): avg accuracy {:.4}{}",
            r.requested_d,
            r.effective_d,
            r.avg_accuracy,
            if r.clamped { " [clamped]" } else { "" }
        );
    }
    Ok(())
}
