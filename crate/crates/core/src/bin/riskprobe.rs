// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use riskprobe::access::{Access, AttackKind, ThreatModel};
use riskprobe::eval::plot::{parse_roc_csv, report_bar_charts, roc_svg};
use riskprobe::eval::RiskReport;
use riskprobe::pipeline::run::{preflight, run_attack, RepeatContext};
use riskprobe::pipeline::{rebuild_report, run_assessment, DefenseConfig, RunConfig};
use riskprobe::zoo::checkpoint;
use riskprobe::{Error, Result};

const SCHEMA: &str = include_str!("../../schema/run-config.schema.json");

#[derive(Parser)]
#[command(name = "riskprobe", version, about = "Inference-attack risk assessment for image classifiers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline and write the risk report.
    Assess {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the undefended target model only.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one attack against an existing checkpoint.
    Attack {
        /// meminf, modinv, attrinf or modsteal.
        #[arg(long)]
        kind: AttackKind,
        /// bb_partial, bb_shadow, wb_partial, wb_shadow or wb_none.
        #[arg(long)]
        tm: ThreatModel,
        /// Checkpoint directory (weights.bin + meta.json).
        #[arg(long)]
        target: PathBuf,
        /// Supplies the dataset, split seed and attack settings.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the target with the configured defense.
    Defend {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild report.json from the per-repeat records of a finished run.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Render SVG figures (ROC curves, metric bar charts) from a report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        /// Defaults to `<report dir>/figures`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the JSON schema of the run configuration.
    Schema,
}

/// `--out`, then the config's `output_dir`, then `$RISKPROBE_OUTPUT/<hash>`,
/// then `riskprobe-out/<hash>`.
fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig, sub: &str) -> PathBuf {
    if let Some(p) = flag.or_else(|| cfg.output_dir.clone()) {
        return p;
    }
    let root = std::env::var_os("RISKPROBE_OUTPUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("riskprobe-out"));
    root.join(format!("{sub}-{}", &cfg.content_hash()[..12]))
}

fn train_target(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let ds = cfg.dataset.load()?;
    preflight(cfg, &ds)?;
    let ctx = RepeatContext::new(cfg, &ds, 0, out)?;
    let (model, defense) = ctx.target()?;
    let s = &ctx.split;
    let dir = ctx.dir.join("target");
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": dir,
            "sha256": model.content_hash(),
            "train_acc": model.accuracy(&s.target_train.images(), s.target_train.labels())?,
            "test_acc": model.accuracy(&s.target_test.images(), s.target_test.labels())?,
            "defense": defense,
        })
    );
    Ok(dir)
}

fn attack(kind: AttackKind, tm: ThreatModel, target: &Path, cfg: &RunConfig, out: &Path) -> Result<()> {
    riskprobe::access::check_applicable(kind, tm)?;
    let meta = checkpoint::load_meta(target)?;
    if tm.access() == Access::WhiteBox && meta.access == Access::BlackBox {
        return Err(Error::Capability { op: "white-box threat model on a black-box checkpoint" });
    }
    let ds = cfg.dataset.load()?;
    preflight(cfg, &ds)?;
    let (model, _) = checkpoint::load(target)?;
    let ctx = RepeatContext::new(cfg, &ds, 0, out)?;
    let shadow = if kind == AttackKind::MemInf && tm.auxiliary() == riskprobe::Auxiliary::Shadow {
        Some(Arc::new(ctx.shadow()?))
    } else {
        None
    };
    let pair = riskprobe::pipeline::AttackPair { attack: kind, threat_model: tm };
    let rec = run_attack(&ctx, &Arc::new(model), shadow.as_ref(), pair)?;
    let text = serde_json::to_string_pretty(&rec)?;
    let path = ctx.dir.join(format!("attack_{}_{}.json", kind.id(), tm.id()));
    fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    println!("{text}");
    Ok(())
}

fn plot(report_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let text = fs::read_to_string(report_path).map_err(|e| Error::io(report_path, e))?;
    let report = RiskReport::from_json(&text)?;
    let base = report_path.parent().unwrap_or(Path::new("."));
    let out = out.unwrap_or_else(|| base.join("figures"));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut files = report_bar_charts(&report);
    for r in &report.results {
        let series: Vec<_> = r
            .artifacts
            .iter()
            .filter(|a| a.ends_with("_roc.csv"))
            .filter_map(|a| {
                let pts = parse_roc_csv(&fs::read_to_string(base.join(a)).ok()?);
                Some((a.split('/').next().unwrap_or(a).to_string(), pts))
            })
            .collect();
        if !series.is_empty() {
            let title = format!("{} ROC, {}", r.attack.id(), r.threat_model.id());
            files.push((format!("roc_{}_{}.svg", r.attack.id(), r.threat_model.id()), roc_svg(&title, &series)));
        }
    }
    for (name, svg) in files {
        let p = out.join(name);
        fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Assess { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = output_dir(out, &cfg, "assess");
            let a = run_assessment(&cfg, &out)?;
            println!("{}", a.report_path.display());
        }
        Cmd::Train { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.defense = DefenseConfig::None;
            let out = output_dir(out, &cfg, "train");
            train_target(&cfg, &out)?;
        }
        Cmd::Defend { config, out } => {
            let cfg = RunConfig::load(&config)?;
            if cfg.defense == DefenseConfig::None {
                return Err(Error::Config("defend needs a defense other than `none`".into()));
            }
            let out = output_dir(out, &cfg, "defend");
            train_target(&cfg, &out)?;
        }
        Cmd::Attack { kind, tm, target, config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = output_dir(out, &cfg, "attack");
            attack(kind, tm, &target, &cfg, &out)?;
        }
        Cmd::Report { run_dir } => {
            let a = rebuild_report(&run_dir)?;
            println!("{}", a.report_path.display());
        }
        Cmd::Plot { report, out } => plot(&report, out)?,
        Cmd::Schema => print!("{SCHEMA}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut block = BTreeMap::new();
            block.insert("kind", serde_json::Value::from(e.kind()));
            block.insert("message", serde_json::Value::from(e.to_string()));
            block.insert("exit_code", serde_json::Value::from(e.exit_code()));
            eprintln!("{}", serde_json::json!({ "error": block }));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
