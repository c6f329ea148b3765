use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use serde::{Deserialize, Serialize};

use clp_core::checkpoint::CHECKPOINT_VERSION;
use clp_core::harness::{
    build_learner, build_protocol, gen_synthetic, read_feature_file, run_experiment, write_feature_file,
    write_metrics_csv, ClipSource, RunMetrics, SyntheticSpec, FEATURE_FILE_VERSION, METRICS_COLUMNS,
};
use clp_core::quantize::FORMAT_VERSION;
use clp_core::selftest::{run_selftest, SelfTestOptions};

use crate::config::{ExperimentConfig, SourceKind};
use crate::scripts::{FRONTIER_SCRIPT, PLOT_SCRIPT};
use crate::CliError;

pub const METRICS_FILE: &str = "metrics.csv";
pub const RUN_FILE: &str = "run.toml";
pub const PLOT_FILE: &str = "plot.py";
pub const COMPARE_FILE: &str = "compare.csv";
pub const FRONTIER_FILE: &str = "frontier.py";

/// Everything needed to reproduce a run directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunEcho {
    pub metadata: Metadata,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub quant_format_version: u32,
    pub feature_file_version: u32,
    pub checkpoint_version: u32,
    pub metrics_columns: Vec<String>,
    pub seeds: Vec<u64>,
    pub dim: usize,
    pub clips: usize,
    /// SLDA shrinkage in effect: a fixed value or the trace-scaled default.
    pub slda_shrinkage: String,
}

fn load_source(cfg: &ExperimentConfig) -> Result<ClipSource, CliError> {
    match cfg.data.source {
        SourceKind::Synthetic => Ok(gen_synthetic(&cfg.data.synthetic)?),
        SourceKind::FeatureFile => {
            let path = cfg.data.path.as_ref().expect("validated");
            let f = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Ok(read_feature_file(BufReader::new(f), cfg.data.frames_per_clip)?)
        }
    }
}

/// Runs every seed on its own thread; results come back in seed order.
pub fn execute(cfg: &ExperimentConfig) -> Result<(ClipSource, Vec<RunMetrics>), CliError> {
    let source = load_source(cfg)?;
    let mode = cfg.protocol.mode();
    let runs = thread::scope(|s| {
        let handles: Vec<_> = cfg
            .protocol
            .seeds
            .iter()
            .map(|&seed| {
                let source = &source;
                s.spawn(move || -> clp_core::Result<RunMetrics> {
                    let protocol = build_protocol(mode, source, seed)?;
                    let mut learner = build_learner(cfg.learner.kind, &cfg.learner.params, source.dim())?;
                    log::info!("{} seed {seed}: {} tasks", cfg.learner.kind, protocol.tasks.len());
                    run_experiment(learner.as_mut(), source, &protocol)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect::<clp_core::Result<Vec<_>>>()
    })?;
    Ok((source, runs))
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<RunMetrics>, CliError> {
    let (source, runs) = execute(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;

    let mut csv = BufWriter::new(File::create(dir.join(METRICS_FILE))?);
    write_metrics_csv(&mut csv, &runs)?;
    csv.flush()?;

    let echo = RunEcho {
        metadata: Metadata {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            quant_format_version: FORMAT_VERSION,
            feature_file_version: FEATURE_FILE_VERSION,
            checkpoint_version: CHECKPOINT_VERSION,
            metrics_columns: METRICS_COLUMNS.iter().map(|s| s.to_string()).collect(),
            seeds: cfg.protocol.seeds.clone(),
            dim: source.dim(),
            clips: source.clips().len(),
            slda_shrinkage: match cfg.learner.params.shrinkage {
                Some(s) => s.to_string(),
                None => "1e-4 * trace / d".into(),
            },
        },
        config: cfg.clone(),
    };
    fs::write(dir.join(RUN_FILE), toml::to_string(&echo).expect("echo serializes"))?;
    fs::write(dir.join(PLOT_FILE), PLOT_SCRIPT)?;

    for m in &runs {
        println!(
            "{} seed {}: final accuracy {:.2}%, {} allocated, {} samples",
            m.learner,
            m.seed,
            100.0 * m.final_accuracy,
            m.allocated,
            m.samples
        );
    }
    println!("wrote {}", dir.display());
    Ok(runs)
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub run: String,
    pub learner: String,
    pub seeds: usize,
    pub final_accuracy: f64,
    pub ops_per_sample: f64,
    pub wall_ns_per_sample: f64,
}

/// Reads a finished run directory, averaging the last evaluation point of
/// each seed.
pub fn summarize(dir: &Path) -> Result<Summary, CliError> {
    let missing = || CliError::Core(clp_core::Error::MissingRun(dir.to_path_buf()));
    let echo_text = fs::read_to_string(dir.join(RUN_FILE)).map_err(|_| missing())?;
    let csv = fs::read_to_string(dir.join(METRICS_FILE)).map_err(|_| missing())?;
    let echo: RunEcho = toml::from_str(&echo_text).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;

    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().ok_or_else(missing)?.split(',').collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| CliError::Data(format!("{}: no column {name}", dir.display())))
    };
    let (seed, task, samples, acc, writes, macs, wall) = (
        col("seed")?,
        col("task")?,
        col("samples_seen")?,
        col("accuracy")?,
        col("weight_writes")?,
        col("macs")?,
        col("wall_ns_per_sample")?,
    );
    // Last row per seed.
    let mut last: std::collections::BTreeMap<u64, Vec<String>> = Default::default();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<String> = line.split(',').map(String::from).collect();
        let bad = || CliError::Data(format!("{}: malformed row `{line}`", dir.display()));
        if f.len() != header.len() {
            return Err(bad());
        }
        let s: u64 = f[seed].parse().map_err(|_| bad())?;
        let t: usize = f[task].parse().map_err(|_| bad())?;
        let keep = last.get(&s).is_none_or(|prev| prev[task].parse::<usize>().map_or(true, |p| t >= p));
        if keep {
            last.insert(s, f);
        }
    }
    if last.is_empty() {
        return Err(missing());
    }
    let num = |f: &[String], i: usize| -> Result<f64, CliError> {
        f[i].parse().map_err(|_| CliError::Data(format!("{}: bad number `{}`", dir.display(), f[i])))
    };
    let n = last.len() as f64;
    let (mut a, mut o, mut w) = (0.0, 0.0, 0.0);
    for f in last.values() {
        a += num(f, acc)?;
        o += (num(f, writes)? + num(f, macs)?) / num(f, samples)?.max(1.0);
        w += num(f, wall)?;
    }
    let run = dir.file_name().map_or_else(|| dir.display().to_string(), |s| s.to_string_lossy().into_owned());
    Ok(Summary {
        run,
        learner: echo.config.learner.kind.to_string(),
        seeds: last.len(),
        final_accuracy: a / n,
        ops_per_sample: o / n,
        wall_ns_per_sample: w / n,
    })
}

/// Deltas are taken against the first run given.
pub fn cmd_compare(dirs: &[PathBuf], out: &Path) -> Result<Vec<Summary>, CliError> {
    if dirs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two run directories".into()));
    }
    let rows = dirs.iter().map(|d| summarize(d)).collect::<Result<Vec<_>, _>>()?;
    let reference = rows[0].clone();
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| {
        b.final_accuracy.total_cmp(&a.final_accuracy).then(a.ops_per_sample.total_cmp(&b.ops_per_sample))
    });

    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join(COMPARE_FILE))?);
    writeln!(w, "run,learner,seeds,final_accuracy,delta_accuracy,ops_per_sample,delta_ops,wall_ns_per_sample")?;
    println!(
        "{:<20} {:<12} {:>5} {:>9} {:>9} {:>14} {:>14} {:>12}",
        "run", "learner", "seeds", "accuracy", "delta", "ops/sample", "delta ops", "ns/sample"
    );
    for r in &sorted {
        let da = r.final_accuracy - reference.final_accuracy;
        let dops = r.ops_per_sample - reference.ops_per_sample;
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.3},{:.3},{:.1}",
            r.run, r.learner, r.seeds, r.final_accuracy, da, r.ops_per_sample, dops, r.wall_ns_per_sample
        )?;
        println!(
            "{:<20} {:<12} {:>5} {:>8.2}% {:>+8.2} {:>14.1} {:>+14.1} {:>12.0}",
            r.run,
            r.learner,
            r.seeds,
            100.0 * r.final_accuracy,
            100.0 * da,
            r.ops_per_sample,
            dops,
            r.wall_ns_per_sample
        );
    }
    w.flush()?;
    fs::write(out.join(FRONTIER_FILE), FRONTIER_SCRIPT)?;
    Ok(sorted)
}

pub fn cmd_selftest(opts: &SelfTestOptions) -> Result<(), CliError> {
    let results = run_selftest(opts);
    let mut failed = Vec::new();
    for r in &results {
        println!("{} {}: {} [{:.2?}]", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail, r.elapsed);
        if !r.passed {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("failed: {}", failed.join(", "))))
    }
}

pub fn cmd_gen_data(spec: &SyntheticSpec, out: &Path, normalized: bool) -> Result<(), CliError> {
    let source = gen_synthetic(spec)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(out)?);
    write_feature_file(&mut w, &source, normalized)?;
    w.flush()?;
    println!(
        "wrote {} clips x {} frames, d = {}, to {}",
        source.clips().len(),
        source.frames_per_clip(),
        source.dim(),
        out.display()
    );
    Ok(())
}
