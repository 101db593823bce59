use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kbl_core::bounds;
use kbl_core::channels::KrausChannel;
use kbl_core::ensembles::GammaSignature;
use kbl_core::matcore::{self, SPECTRAL_TOL};
use kbl_core::spectral::{fixed_point, gap_report, von_neumann_entropy};
use kbl_core::twirl::{exact_twirl, mc_twirl, MAX_SUPEROP_DIM};
use kbl_harness::output::{write_csv, write_jsonl};
use kbl_harness::{resolve_workers, run, ExperimentConfig, ExperimentKind, Format, HarnessError, Result};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "kbl", version, about = "Random Kraus channel laboratory")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; beats KBL_WORKERS and the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file; `-` or absent means stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    /// Exit 3 when the experiment's statistical check fails.
    #[arg(long, global = true)]
    assert: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Empirical deviation tails against the concentration bounds.
    Tailprob,
    /// ε-twirling certification rates.
    TwirlCheck,
    /// Tensor-unitary expander certification rates.
    Expander,
    /// Rectified-model three-regimes study.
    Rectified,
    /// Median deviation against k.
    Scaling,
    /// Second-moment isotropy audit of an ensemble.
    Isotropy,
    /// Evaluate a Kraus-number budget.
    BernsteinBound(BoundArgs),
    /// Build a twirling channel and write it as JSON.
    TwirlBuild(TwirlArgs),
    /// Spectral analysis of a serialized channel.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Regime {
    Tdesign,
    Twirling,
    GeneralizedCp,
    AlmostInvertible,
    NewModel,
    Regime1,
    Regime2,
    Regime3,
}

#[derive(clap::Args, Debug)]
struct BoundArgs {
    #[arg(long, value_enum)]
    regime: Regime,
    #[arg(long)]
    d: u64,
    #[arg(long, default_value_t = 1)]
    t: u32,
    /// α, ε or Δ depending on the regime.
    #[arg(long, visible_aliases = ["eps", "delta"])]
    alpha: f64,
    #[arg(long = "C")]
    c: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
}

#[derive(clap::Args, Debug)]
struct TwirlArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    t: Option<usize>,
    /// Decorations such as `1,-`; anything but all-`1` uses Monte Carlo.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<String>>,
    #[arg(long, default_value_t = 32_000)]
    samples: usize,
}

#[derive(clap::Args, Debug)]
struct SpectrumArgs {
    /// Channel JSON `{m, n, weights, ops}`.
    channel: PathBuf,
    /// Compare against the t-copy twirl (operators on C^{d^t}).
    #[arg(long, default_value_t = 1)]
    t: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kbl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let kind = match &cli.command {
        Command::Tailprob => ExperimentKind::TailProbability,
        Command::TwirlCheck => ExperimentKind::TwirlingCheck,
        Command::Expander => ExperimentKind::ExpanderCampaign,
        Command::Rectified => ExperimentKind::RectifiedRegimes,
        Command::Scaling => ExperimentKind::ScalingSweep,
        Command::Isotropy => ExperimentKind::IsotropyAudit,
        Command::BernsteinBound(args) => return emit_json(cli.out.as_deref(), &bernstein_bound(args)?),
        Command::TwirlBuild(args) => return twirl_build(cli, args),
        Command::Spectrum(args) => return emit_json(cli.out.as_deref(), &spectrum(args)?),
    };
    run_experiment(cli, kind)
}

fn run_experiment(cli: &Cli, kind: ExperimentKind) -> Result<()> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| HarnessError::Config("this subcommand needs --config <path>".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if cfg.kind != kind {
        return Err(HarnessError::Config(format!(
            "config kind {:?} does not match the subcommand ({kind:?})",
            cfg.kind
        )));
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    let env = std::env::var("KBL_WORKERS").ok();
    let workers = resolve_workers(cli.workers, env.as_deref(), cfg.workers)?;
    let out = run(&cfg, workers)?;

    let target = cli.out.clone().or_else(|| out.config.output_path.clone().map(PathBuf::from));
    let w = open_output(target.as_deref())?;
    match cli.format {
        Format::Jsonl => write_jsonl(w, &out.records, &out.summary)?,
        Format::Csv => write_csv(w, &out.summary.rows)?,
    }
    if cli.assert && !out.summary.check_passed {
        return Err(HarnessError::Assert(out.summary.check.clone()));
    }
    Ok(())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) if p == Path::new("-") => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => {
            let f = File::create(p).map_err(|source| HarnessError::Io {
                path: p.display().to_string(),
                source,
            })?;
            Ok(Box::new(BufWriter::new(f)))
        }
    }
}

fn emit_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut w = open_output(out)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    writeln!(w, "{text}")
        .and_then(|_| w.flush())
        .map_err(|source| HarnessError::Io {
            path: out.map_or("<stdout>".into(), |p| p.display().to_string()),
            source,
        })
}

fn bernstein_bound(a: &BoundArgs) -> Result<serde_json::Value> {
    let r = match a.regime {
        Regime::Tdesign => bounds::tdesign_budget(a.d, a.t, a.alpha, a.c)?,
        Regime::Twirling => bounds::twirling_budget(a.d, a.t, a.alpha, a.c)?,
        Regime::GeneralizedCp => bounds::generalized_cp_budget(a.d, a.l, a.alpha, a.c)?,
        Regime::AlmostInvertible => bounds::almost_invertible_budget(a.d, a.l, a.alpha, a.c)?,
        Regime::NewModel => bounds::new_model_budget(a.d, a.l, a.alpha, a.c)?,
        Regime::Regime1 => bounds::three_regimes_budget(a.d, a.l, a.alpha, 1, a.c)?,
        Regime::Regime2 => bounds::three_regimes_budget(a.d, a.l, a.alpha, 2, a.c)?,
        Regime::Regime3 => bounds::three_regimes_budget(a.d, a.l, a.alpha, 3, a.c)?,
    };
    Ok(json!({
        "k": r.k,
        "tail_bound": r.tail_bound,
        "vacuous": r.vacuous,
        "regime_tag": r.regime_tag,
        "inputs": {
            "regime": format!("{:?}", a.regime).to_lowercase(),
            "d": a.d, "t": a.t, "alpha": a.alpha, "C": a.c, "L": a.l,
        },
        "k_real": r.k_real,
        "c_tilde": r.c_tilde,
        "lambda_bound": r.lambda_bound,
        "entropy_bound": r.entropy_bound,
    }))
}

fn twirl_build(cli: &Cli, a: &TwirlArgs) -> Result<()> {
    let gamma = match (&a.gamma, a.t) {
        (Some(g), t) => {
            let g: GammaSignature = serde_json::from_value(json!(g)).map_err(|e| HarnessError::Config(e.to_string()))?;
            if t.is_some_and(|t| t != g.t()) {
                return Err(HarnessError::Config("--t disagrees with --gamma".into()));
            }
            g
        }
        (None, Some(t)) => GammaSignature::plain(t)?,
        (None, None) => return Err(HarnessError::Config("twirl-build needs --t or --gamma".into())),
    };
    let omega = if gamma.is_plain() {
        exact_twirl::<f64>(a.d, gamma.t())?
    } else {
        mc_twirl::<f64>(a.d, &gamma, a.samples, cli.seed.unwrap_or(0))?
    };
    let doc = serde_json::to_value(omega.to_json_doc()).map_err(|e| HarnessError::Config(e.to_string()))?;
    emit_json(cli.out.as_deref(), &doc)
}

fn spectrum(a: &SpectrumArgs) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(&a.channel).map_err(|source| HarnessError::Io {
        path: a.channel.display().to_string(),
        source,
    })?;
    let ch = KrausChannel::<f64>::from_json(&text)?;
    let hat = ch.natural_rep();
    let spec = matcore::spectrum_by_modulus(hat.matrix())?;
    let tp = ch.is_trace_preserving(SPECTRAL_TOL)?;
    let mut out = json!({
        "m": ch.output_dim(),
        "n": ch.input_dim(),
        "k": ch.len(),
        "moduli": spec.moduli(),
        "trace_preserving": tp,
        "unital": ch.is_unital(SPECTRAL_TOL)?,
    });
    let side = ch.input_dim();
    if ch.output_dim() == side {
        let d = (side as f64).powf(1.0 / a.t as f64).round() as usize;
        if d.pow(a.t as u32) == side && side * side <= MAX_SUPEROP_DIM && d >= 2 {
            out["gap_report"] = serde_json::to_value(gap_report(&hat, d, a.t)?).expect("plain struct");
        }
        if tp.holds {
            out["fixed_point"] = match fixed_point(&ch) {
                Ok(fp) => json!({
                    "residual": fp.residual,
                    "unique_certified": fp.unique_certified,
                    "entropy": von_neumann_entropy(&fp.state)?,
                }),
                Err(e) => json!({ "error": e.to_string() }),
            };
        }
    }
    Ok(out)
}
