mod manifest;
mod plot;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use hsisr_core::hsi_data::{add_noise_snr, bicubic_downsample, cube_paths, load_cube, save_cube, synth_cube, HsiCube, SynthSpec};
use hsisr_core::metrics::{evaluate, fit_niqe, ConstantMa, MetricReport, NiqeParams};
use hsisr_core::trainer::{
    apply_ablation, collapse_diagnostics, curves_from_csv, restore, run_training, super_resolve_test, test_reports, write_diagnostics,
    LossVariant, RunOptions, TrainConfig, TrainData, TrainError,
};

use manifest::RunManifest;

const MANIFEST: &str = "manifest.txt";

/// Bad arguments or inputs; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "hsisr", version, about = "Hyperspectral super-resolution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    DeskFast,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Bicubic,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// `key = value` configuration file; unset keys keep the preset values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    /// Ablation model 1-5 (5 is the full model).
    #[arg(long)]
    ablation: Option<u8>,
    /// Loss variant: ssrp, wasserstein_plain or js.
    #[arg(long = "loss")]
    loss: Option<String>,
    #[arg(long)]
    joint_iters: Option<usize>,
    #[arg(long)]
    pretrain_iters: Option<usize>,
    #[arg(long)]
    gp_weight: Option<f64>,
    /// Overrides both the configuration and `HSISR_SEED`.
    #[arg(long)]
    seed: Option<u64>,
    /// HR cubes to train on instead of synthetic scenes.
    #[arg(long = "hr")]
    hr: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cube.
    Synth {
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        bands: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        endmembers: usize,
        #[arg(long, default_value_t = 2.0)]
        smoothness: f64,
        /// Output stem; `.hdr` and `.raw` are appended.
        #[arg(long)]
        out: PathBuf,
    },
    /// Bicubic downsampling plus optional noise.
    Degrade {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_scale)]
        scale: usize,
        /// Noise level in dB: inf, 40 or 80.
        #[arg(long, default_value = "inf", value_parser = parse_snr)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pretrain and jointly train, writing a run directory.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fidelity metrics of a trained run on its test split.
    Eval {
        #[arg(long)]
        run: PathBuf,
        /// Checkpoint directory; defaults to the latest in the run.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Score the HR patches against themselves.
        #[arg(long)]
        oracle_identity: bool,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long = "hr")]
        hr: Vec<PathBuf>,
        /// Defaults to `<run>/eval`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Curve, density and mode-spectrum plots with their tables.
    Diagnose {
        #[arg(long)]
        run: PathBuf,
        /// Further runs whose curves are overlaid.
        #[arg(long, num_args = 1..)]
        compare: Vec<PathBuf>,
        #[arg(long = "hr")]
        hr: Vec<PathBuf>,
        /// Defaults to `<run>/plots`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train Models 1-5 in turn and tabulate them.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_scale(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k @ (2 | 4 | 8)) => Ok(k),
        _ => Err(format!("scale must be 2, 4 or 8, got {s}")),
    }
}

fn parse_snr(s: &str) -> Result<f64, String> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "40" => Ok(40.0),
        "80" => Ok(80.0),
        _ => Err(format!("snr must be inf, 40 or 80, got {s}")),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        match cause.downcast_ref::<TrainError>() {
            Some(TrainError::Diverged { .. }) => return 3,
            Some(TrainError::Config(_) | TrainError::Ablation(_)) => return 2,
            _ => {}
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            width,
            height,
            bands,
            seed,
            endmembers,
            smoothness,
            out,
        } => cmd_synth(
            &SynthSpec {
                height,
                width,
                bands,
                n_endmembers: endmembers,
                smoothness,
                seed,
            },
            &out,
        ),
        Command::Degrade {
            input,
            out,
            scale,
            snr,
            seed,
        } => cmd_degrade(&input, &out, scale, snr, seed),
        Command::Train { cfg, out, resume } => cmd_train(&cfg, &out, resume),
        Command::Eval {
            run,
            checkpoint,
            oracle_identity,
            baseline,
            hr,
            out,
        } => cmd_eval(&run, checkpoint, oracle_identity, baseline.is_some(), &hr, out),
        Command::Diagnose { run, compare, hr, out } => cmd_diagnose(&run, &compare, &hr, out),
        Command::Ablate { cfg, out } => cmd_ablate(&cfg, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = cube_paths(path).0.with_extension("").into_os_string();
    s.push(suffix);
    s.into()
}

fn save(cube: &HsiCube, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(save_cube(cube, out)?)
}

fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<()> {
    let mut m = RunManifest::start();
    let cube = synth_cube(spec).map_err(|e| usage(e.to_string()))?;
    save(&cube, out)?;
    let (hdr, raw) = cube_paths(out);
    m.seed("synth", spec.seed);
    m.artifact(hdr);
    m.artifact(raw);
    m.write(&with_suffix(out, ".manifest.txt"))
}

fn cmd_degrade(input: &Path, out: &Path, scale: usize, snr: f64, seed: u64) -> Result<()> {
    let mut m = RunManifest::start();
    let hr = load_cube(input).map_err(|e| usage(format!("reading {}: {e}", input.display())))?;
    let mut lr = bicubic_downsample(&hr, scale).map_err(|e| usage(e.to_string()))?;
    if snr.is_finite() {
        lr = add_noise_snr(&lr, snr, seed)?;
    }
    save(&lr, out)?;
    let (hdr, raw) = cube_paths(out);
    m.seed("noise", seed);
    m.record("scale", scale);
    m.record("snr_db", snr);
    m.artifact(hdr);
    m.artifact(raw);
    m.write(&with_suffix(out, ".manifest.txt"))
}

fn build_config(a: &ConfigArgs) -> Result<TrainConfig> {
    let base = match a.preset {
        Preset::Desk => TrainConfig::desk(),
        Preset::DeskFast => TrainConfig::desk_fast(),
        Preset::Full => TrainConfig::full(16, 2, 64),
    };
    let mut c = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            TrainConfig::from_text(&text, &base)?
        }
        None => base,
    };
    c = c.with_env_seed()?;
    if let Some(m) = a.ablation {
        c.ablation_model = m;
    }
    if let Some(v) = &a.loss {
        c.loss_variant = LossVariant::parse(v).ok_or_else(|| usage(format!("unknown loss variant {v}")))?;
    }
    if let Some(n) = a.joint_iters {
        c.joint_iters = n;
    }
    if let Some(n) = a.pretrain_iters {
        c.pretrain_iters = n;
    }
    if let Some(g) = a.gp_weight {
        c.gp_weight = g;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    c.validate()?;
    apply_ablation(&c)?;
    Ok(c)
}

fn load_data(config: &TrainConfig, hr: &[PathBuf]) -> Result<TrainData> {
    if hr.is_empty() {
        return Ok(TrainData::synthetic(
            &config.data,
            config.bands,
            config.scale,
            config.hr_patch,
            config.seed,
        )?);
    }
    let mut cubes = Vec::with_capacity(hr.len());
    for p in hr {
        let c = load_cube(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
        if c.bands() != config.bands {
            return Err(usage(format!(
                "{} has {} bands, configuration {}",
                p.display(),
                c.bands(),
                config.bands
            )));
        }
        cubes.push(c);
    }
    Ok(TrainData::from_cubes(
        &cubes,
        &config.data,
        config.scale,
        config.hr_patch,
        config.seed,
    )?)
}

fn train_run(config: &TrainConfig, data: &TrainData, out: &Path, resume: Option<PathBuf>, hr: &[PathBuf]) -> Result<()> {
    let mut m = RunManifest::start();
    let ab = apply_ablation(config)?;
    let state = run_training(
        config,
        data,
        out,
        &RunOptions {
            resume,
            ..RunOptions::default()
        },
    )?;
    m.config = Some(out.join("config.cfg"));
    m.seed("train", config.seed);
    m.record("loss_variant", config.loss_variant.name());
    m.record("gp_weight", config.gp_weight);
    for line in ab.describe().lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            m.record(&format!("ablation.{k}"), v);
        }
    }
    for (i, p) in hr.iter().enumerate() {
        m.record(&format!("hr.{i}"), p.display());
    }
    m.artifact(out.join("curves.csv"));
    m.artifact(hsisr_core::trainer::checkpoint_dir(out, state.iter));
    for f in ["density.csv", "spectrum.csv", "scores.csv", "overlap.txt"] {
        let p = out.join("diag").join(f);
        if p.exists() {
            m.artifact(p);
        }
    }
    if !data.test.is_empty() {
        let (model, base) = test_reports(&state, data)?;
        println!(
            "{}: {} iterations, test psnr {:.3} dB (bicubic {:.3}), sam {:.3} (bicubic {:.3})",
            out.display(),
            state.iter,
            model.psnr,
            base.psnr,
            model.sam,
            base.sam
        );
    }
    m.write(&out.join(MANIFEST))
}

fn cmd_train(a: &ConfigArgs, out: &Path, resume: Option<PathBuf>) -> Result<()> {
    let config = build_config(a)?;
    let data = load_data(&config, &a.hr)?;
    train_run(&config, &data, out, resume, &a.hr)
}

fn run_config(run: &Path) -> Result<TrainConfig> {
    let p = run.join("config.cfg");
    let text = fs::read_to_string(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
    Ok(TrainConfig::from_text(&text, &TrainConfig::desk())?)
}

fn latest_checkpoint(run: &Path) -> Option<PathBuf> {
    fs::read_dir(run)
        .ok()?
        .filter_map(|e| {
            let name = e.ok()?.file_name().into_string().ok()?;
            name.strip_prefix("ckpt-")?.parse::<usize>().ok()
        })
        .max()
        .map(|i| hsisr_core::trainer::checkpoint_dir(run, i))
}

fn report_row(name: &str, r: &MetricReport) -> String {
    let pi = r.pi.map(|v| v.to_string()).unwrap_or_else(|| "nan".into());
    format!("{name},{},{},{},{},{pi}\n", r.psnr, r.ssim, r.sam, r.sre)
}

fn cmd_eval(
    run: &Path,
    checkpoint: Option<PathBuf>,
    oracle_identity: bool,
    baseline: bool,
    hr: &[PathBuf],
    out: Option<PathBuf>,
) -> Result<()> {
    let mut m = RunManifest::start();
    let config = run_config(run)?;
    let out = out.unwrap_or_else(|| run.join("eval"));
    let data = load_data(&config, hr)?;
    if data.test.is_empty() {
        return Err(usage("the test split is empty"));
    }
    let train_hr: Vec<&HsiCube> = data.train.iter().map(|p| &p.hr).collect();
    let niqe_model = fit_niqe(&train_hr, NiqeParams::default()).ok();
    let ma = ConstantMa::default();
    let perceptual = niqe_model.as_ref().map(|n| (&ma as &dyn hsisr_core::metrics::MaScorer, n));

    let (name, sr): (&str, Vec<HsiCube>) = if oracle_identity {
        ("identity", data.test.iter().map(|p| p.hr.clone()).collect())
    } else {
        let ckpt = checkpoint
            .or_else(|| latest_checkpoint(run))
            .ok_or_else(|| usage(format!("no checkpoint in {}", run.display())))?;
        if !ckpt.join("state.cfg").exists() {
            return Err(usage(format!("missing checkpoint {}", ckpt.display())));
        }
        let state = restore(&ckpt, &config)?;
        m.record("checkpoint", ckpt.display());
        ("model", super_resolve_test(&state, &data)?)
    };
    let pairs: Vec<(&HsiCube, &HsiCube)> = data.test.iter().zip(&sr).map(|(p, s)| (&p.hr, s)).collect();
    let report = evaluate(&pairs, perceptual, true)?;

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut table = String::from("method,psnr,ssim,sam,sre,pi\n");
    table.push_str(&report_row(name, &report));
    let write = |m: &mut RunManifest, file: &str, text: &str| -> Result<()> {
        let p = out.join(file);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        m.artifact(p);
        Ok(())
    };
    write(&mut m, "report.txt", &report.to_text())?;
    if let Some(csv) = report.per_band_csv() {
        write(&mut m, "per_band.csv", &csv)?;
    }
    if baseline {
        let pairs: Vec<(&HsiCube, &HsiCube)> = data.test.iter().zip(&data.test_up).map(|(p, s)| (&p.hr, s)).collect();
        let base = evaluate(&pairs, perceptual, true)?;
        table.push_str(&report_row("bicubic", &base));
        write(&mut m, "baseline_report.txt", &base.to_text())?;
        if let Some(csv) = base.per_band_csv() {
            write(&mut m, "baseline_per_band.csv", &csv)?;
        }
    }
    write(&mut m, "comparison.csv", &table)?;
    print!("{table}");
    m.config = Some(run.join("config.cfg"));
    m.seed("train", config.seed);
    m.record("pi_scorer", "constant 5.0");
    m.write(&out.join(MANIFEST))
}

fn read_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

fn num(s: &str) -> f64 {
    s.trim().parse().unwrap_or(f64::NAN)
}

fn cmd_diagnose(run: &Path, compare: &[PathBuf], hr: &[PathBuf], out: Option<PathBuf>) -> Result<()> {
    let mut m = RunManifest::start();
    let out = out.unwrap_or_else(|| run.join("plots"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let runs: Vec<&Path> = std::iter::once(run).chain(compare.iter().map(PathBuf::as_path)).collect();

    let mut table = String::from("run,iter,total,is,fid\n");
    let (mut is_s, mut fid_s, mut total_s) = (Vec::new(), Vec::new(), Vec::new());
    for r in &runs {
        let p = r.join("curves.csv");
        if !p.exists() {
            return Err(usage(format!("missing {}", p.display())));
        }
        let rows = curves_from_csv(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &rows {
            let _ = writeln!(
                table,
                "{},{},{},{},{}",
                r.display(),
                row.iter,
                row.loss.total,
                opt(row.is),
                opt(row.fid)
            );
        }
        is_s.push(rows.iter().filter_map(|x| x.is.map(|v| (x.iter as f64, v))).collect());
        fid_s.push(rows.iter().filter_map(|x| x.fid.map(|v| (x.iter as f64, v))).collect());
        total_s.push(rows.iter().map(|x| (x.iter as f64, x.loss.total)).collect());
    }
    let p = out.join("curves.csv");
    fs::write(&p, &table).with_context(|| format!("writing {}", p.display()))?;
    m.artifact(p);
    for (file, series) in [("is_curve.png", &is_s), ("fid_curve.png", &fid_s), ("loss_curve.png", &total_s)] {
        let p = out.join(file);
        plot::lines(series, &p)?;
        m.artifact(p);
    }

    let diag = run.join("diag");
    if !diag.join("density.csv").exists() {
        let config = run_config(run)?;
        let ckpt = latest_checkpoint(run).ok_or_else(|| usage(format!("no checkpoint in {}", run.display())))?;
        let state = restore(&ckpt, &config)?;
        let data = load_data(&config, hr)?;
        write_diagnostics(&collapse_diagnostics(&state, &data)?, &diag)?;
    }
    let density = read_csv(&diag.join("density.csv"))?;
    let edges: Vec<(f64, f64)> = density.iter().map(|r| (num(&r[1]), num(&r[2]))).collect();
    let masses = vec![
        density.iter().map(|r| num(&r[3])).collect(),
        density.iter().map(|r| num(&r[4])).collect(),
    ];
    let p = out.join("density.png");
    plot::densities(&edges, &masses, &p)?;
    m.artifact(p);
    let spectrum = read_csv(&diag.join("spectrum.csv"))?;
    let groups: Vec<Vec<f64>> = spectrum
        .iter()
        .map(|r| r[1..].iter().map(|v| num(v)).filter(|v| v.is_finite()).collect())
        .collect();
    let p = out.join("spectrum.png");
    plot::bars(&groups, &p)?;
    m.artifact(p);
    for f in ["density.csv", "spectrum.csv"] {
        let p = out.join(f);
        fs::copy(diag.join(f), &p).with_context(|| format!("writing {}", p.display()))?;
        m.artifact(p);
    }
    let overlap = fs::read_to_string(diag.join("overlap.txt")).context("reading overlap.txt")?;
    print!("{overlap}");
    m.record("colours", "series in run order, real before generated");
    m.write(&out.join(MANIFEST))
}

fn cmd_ablate(a: &ConfigArgs, out: &Path) -> Result<()> {
    let mut m = RunManifest::start();
    let base = build_config(a)?;
    let data = load_data(&base, &a.hr)?;
    let mut table = String::from("model,conv,upscale,sigmoid,encoder,objective,psnr,ssim,sam,sre,overlap\n");
    for model in 1..=5u8 {
        let mut c = base.clone();
        c.ablation_model = model;
        let dir = out.join(format!("model-{model}"));
        train_run(&c, &data, &dir, None, &a.hr)?;
        m.artifact(dir.join(MANIFEST));
        let ab = apply_ablation(&c)?;
        let sw: Vec<String> = ab
            .describe()
            .lines()
            .skip(1)
            .filter_map(|l| l.split_once(" = ").map(|(_, v)| v.to_string()))
            .collect();
        let state = restore(&latest_checkpoint(&dir).context("missing checkpoint")?, &c)?;
        let (r, _) = test_reports(&state, &data)?;
        let overlap = fs::read_to_string(dir.join("diag").join("overlap.txt"))
            .ok()
            .and_then(|t| t.lines().next().and_then(|l| l.split_once(" = ")).map(|(_, v)| v.to_string()))
            .unwrap_or_else(|| "nan".into());
        let _ = writeln!(
            table,
            "{model},{},{},{},{},{},{overlap}",
            sw.join(","),
            r.psnr,
            r.ssim,
            r.sam,
            r.sre
        );
    }
    let p = out.join("ablation.csv");
    fs::write(&p, &table).with_context(|| format!("writing {}", p.display()))?;
    print!("{table}");
    m.artifact(p);
    m.seed("train", base.seed);
    m.write(&out.join(MANIFEST))
}
