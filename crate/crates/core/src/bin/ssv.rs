use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ssv_core::config::{ModelKind, OutputFormat, RunConfig};
use ssv_core::data_io::{ingest_files, read_observations, VixConvention};
use ssv_core::inference::{bootstrap, write_summary_table};
use ssv_core::model::{dt_intraday_years, dt_joint_days};
use ssv_core::moments::{moment_report, monte_carlo_moments, McSettings, MomentReport, MomentRequest, MomentSource};
use ssv_core::npsmle::{fit, EstimationResult, ObservationSeries, Theta};
use ssv_core::sentiment::bars::{aggregate_bars, write_bars, EmptyBarPolicy};
use ssv_core::sentiment::classifier::{cross_validate, read_labeled, train, ClassifierModel, TrainConfig};
use ssv_core::sentiment::score::{read_news, read_scores, score_news, write_scores};
use ssv_core::simulate::{simulate_ou, simulate_ssv, write_path_csv, write_paths_long_csv, SimConfig};
use ssv_core::{Result, SsvError, TimeGrid};

const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_DATA_ERROR: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "ssv", version, about = "Sentiment-driven stochastic volatility toolkit")]
struct Cli {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "ssv-out")]
    out_dir: PathBuf,
    /// Worker threads (results are identical for any value).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
enum Command {
    /// Simulate paths of the joint or sentiment-only model.
    Simulate(SimulateArgs),
    /// Moments of sentiment and log variance at the configured horizons.
    Moments(MomentsArgs),
    /// Fit the sentiment process to an observation file.
    FitOu(FitArgs),
    /// Fit the joint model to an observation file or raw bar files.
    FitSsv(FitArgs),
    /// Parametric bootstrap around a fitted or configured parameter set.
    Bootstrap(BootstrapArgs),
    /// Train the sentence classifier, choosing the penalty by cross-validation.
    TrainClassifier(TrainArgs),
    /// Score news documents with a trained classifier.
    ScoreNews(ScoreArgs),
    /// Average document scores onto the session bar grid.
    AggregateSentiment(AggregateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelArg {
    Joint,
    Sentiment,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Joint => ModelKind::Joint,
            ModelArg::Sentiment => ModelKind::Sentiment,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    n_bars: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Debug, Serialize)]
struct MomentsArgs {
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Comma-separated horizons.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<f64>>,
    /// Adds Monte Carlo estimates from this many paths.
    #[arg(long)]
    mc_paths: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    /// Observation CSV with a `timestamp` or `t` column and `s[,p,v]`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Raw `timestamp,value` sentiment bars (joint model).
    #[arg(long)]
    sentiment: Option<PathBuf>,
    #[arg(long)]
    price: Option<PathBuf>,
    #[arg(long)]
    volatility: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BootstrapArgs {
    /// `fit.json` from `fit-ou` or `fit-ssv`; its estimate is the truth.
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    n_bars: Option<usize>,
    /// 1000 replications of 6500 bars.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// Labeled sentences: `sentence<delimiter>label`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    delimiter: Option<char>,
}

#[derive(Args, Debug, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with header `doc_id,timestamp,text`.
    #[arg(long)]
    news: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct AggregateArgs {
    /// Output of `score-news`.
    #[arg(long)]
    scores: PathBuf,
    /// Fill empty bars by linear interpolation instead of 0.
    #[arg(long)]
    interpolate: bool,
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'a Command,
    config: &'a RunConfig,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                ExitCode::from(EXIT_DATA_ERROR)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    apply_overrides(&cli.command, &mut cfg);
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| SsvError::Config(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    write_json(
        &cli.out_dir.join("resolved_config.json"),
        &Resolved {
            command: &cli.command,
            config: &cfg,
        },
    )?;
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Simulate(_) => simulate_cmd(&cfg, out),
        Command::Moments(_) => moments_cmd(&cfg, out),
        Command::FitOu(a) => fit_cmd(&cfg, a, ModelKind::Sentiment, out),
        Command::FitSsv(a) => fit_cmd(&cfg, a, ModelKind::Joint, out),
        Command::Bootstrap(a) => bootstrap_cmd(&cfg, a, out),
        Command::TrainClassifier(a) => train_cmd(&cfg, a, out),
        Command::ScoreNews(a) => score_cmd(a, out),
        Command::AggregateSentiment(a) => aggregate_cmd(&cfg, a, out),
    }
}

/// Folds subcommand flags into the configuration so the echoed config is
/// the one actually used.
fn apply_overrides(cmd: &Command, cfg: &mut RunConfig) {
    match cmd {
        Command::Simulate(a) => {
            if let Some(m) = a.model {
                cfg.simulate.model = m.into();
            }
            if let Some(n) = a.n_paths {
                cfg.simulate.n_paths = n;
            }
            if let Some(n) = a.n_bars {
                cfg.simulate.n_bars = n;
            }
        }
        Command::Moments(a) => {
            if let Some(f) = a.format {
                cfg.moments.format = match f {
                    FormatArg::Json => OutputFormat::Json,
                    FormatArg::Csv => OutputFormat::Csv,
                };
            }
            if let Some(h) = &a.horizons {
                cfg.moments.horizons = h.clone();
            }
            if let Some(n) = a.mc_paths {
                cfg.moments.mc_paths = n;
            }
        }
        Command::FitOu(a) | Command::FitSsv(a) => {
            if a.data.is_some() {
                cfg.data.observations = a.data.clone();
            }
            if a.sentiment.is_some() {
                cfg.data.sentiment = a.sentiment.clone();
            }
            if a.price.is_some() {
                cfg.data.price = a.price.clone();
            }
            if a.volatility.is_some() {
                cfg.data.volatility = a.volatility.clone();
            }
        }
        Command::Bootstrap(a) => {
            if let Some(m) = a.model {
                cfg.simulate.model = m.into();
            }
            if let Some(n) = a.reps {
                cfg.bootstrap.n_reps = n;
            }
            if let Some(n) = a.n_bars {
                cfg.bootstrap.n_bars = n;
            }
            if a.full_scale {
                cfg.bootstrap.full_scale = true;
            }
        }
        Command::TrainClassifier(a) => {
            if let Some(d) = a.delimiter {
                cfg.sentiment.delimiter = d;
            }
        }
        Command::ScoreNews(_) => {}
        Command::AggregateSentiment(a) => {
            if a.interpolate {
                cfg.sentiment.empty_bars = EmptyBarPolicy::Interpolate;
            }
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn simulate_cmd(cfg: &RunConfig, out: &Path) -> Result<u8> {
    let s = &cfg.simulate;
    let grid = TimeGrid::new(0.0, s.resolved_dt(), s.n_bars, s.m_substeps)?;
    let sim = SimConfig {
        grid,
        n_paths: s.n_paths,
        seed: cfg.seed,
        initial: s.initial,
        antithetic: s.antithetic,
    };
    // Plot-ready long format: one row per (path, time, series).
    let mut plot = csv::Writer::from_writer(create(&out.join("plot_long.csv"))?);
    plot.write_record(["path_id", "t", "series", "value"])?;
    let mut emit = |id: usize, bar: usize, name: &str, value: f64| {
        plot.write_record([
            id.to_string(),
            grid.time_of(bar).to_string(),
            name.to_string(),
            value.to_string(),
        ])
    };
    match s.model {
        ModelKind::Joint => {
            let paths = simulate_ssv(&cfg.params, &sim, s.scheme)?;
            write_paths_long_csv(&paths, create(&out.join("paths.csv"))?)?;
            write_path_csv(&paths[0], create(&out.join("observations.csv"))?)?;
            for (id, p) in paths.iter().enumerate() {
                for bar in 0..p.s.len() {
                    emit(id, bar, "sentiment", p.s[bar])?;
                    emit(id, bar, "log_price", p.p[bar])?;
                    if bar > 0 {
                        emit(id, bar, "return", p.p[bar] - p.p[bar - 1])?;
                    }
                    emit(id, bar, "log_variance", p.v[bar])?;
                }
            }
        }
        ModelKind::Sentiment => {
            let paths = simulate_ou(&cfg.ou_params, &sim)?;
            let mut w = csv::Writer::from_writer(create(&out.join("paths.csv"))?);
            w.write_record(["path_id", "t", "s"])?;
            for (id, p) in paths.iter().enumerate() {
                for (bar, x) in p.iter().enumerate() {
                    w.write_record([id.to_string(), grid.time_of(bar).to_string(), x.to_string()])?;
                    emit(id, bar, "sentiment", *x)?;
                }
            }
            w.flush()?;
            let mut w = csv::Writer::from_writer(create(&out.join("observations.csv"))?);
            w.write_record(["t", "s"])?;
            for (bar, x) in paths[0].iter().enumerate() {
                w.write_record([grid.time_of(bar).to_string(), x.to_string()])?;
            }
            w.flush()?;
        }
    }
    plot.flush()?;
    Ok(0)
}

#[derive(Serialize)]
struct MomentRow {
    source: MomentSource,
    #[serde(flatten)]
    report: MomentReport,
}

fn moments_cmd(cfg: &RunConfig, out: &Path) -> Result<u8> {
    let m = &cfg.moments;
    let base = MomentRequest::new(cfg.params, m.s0, m.v0, 0.0)?;
    let rows: Vec<MomentRow> = m
        .horizons
        .iter()
        .map(|&t| moment_report(&base.at(t)).map(|(report, source)| MomentRow { source, report }))
        .collect::<Result<_>>()?;
    let mc = if m.mc_paths > 0 {
        let settings = McSettings {
            n_paths: m.mc_paths,
            dt: m.mc_dt,
            m_substeps: m.mc_substeps,
            seed: cfg.seed,
            scheme: cfg.simulate.scheme,
        };
        Some(monte_carlo_moments(&cfg.params, m.s0, m.v0, &m.horizons, &settings)?)
    } else {
        None
    };
    match m.format {
        OutputFormat::Json => write_json(
            &out.join("moments.json"),
            &serde_json::json!({ "params": cfg.params, "s0": m.s0, "v0": m.v0, "moments": rows, "monte_carlo": mc }),
        )?,
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(create(&out.join("moments.csv"))?);
            let mut header: Vec<&str> = MomentReport::CSV_HEADER.to_vec();
            header.push("source");
            w.write_record(&header)?;
            for r in &rows {
                let mut rec = r.report.csv_record();
                rec.push(serde_json::to_value(r.source)?.as_str().unwrap_or_default().to_string());
                w.write_record(&rec)?;
            }
            w.flush()?;
            if let Some(mc) = mc {
                let mut w = csv::Writer::from_writer(create(&out.join("moments_mc.csv"))?);
                w.write_record(["t", "quantity", "value", "se"])?;
                for row in &mc {
                    for (name, e) in [
                        ("e_s", row.e_s),
                        ("var_s", row.var_s),
                        ("e_v", row.e_v),
                        ("var_v", row.var_v),
                        ("cov_sv", row.cov_sv),
                        ("rho_sv_t", row.rho_sv_t),
                    ] {
                        w.write_record([
                            row.t.to_string(),
                            name.to_string(),
                            e.value.to_string(),
                            e.se.to_string(),
                        ])?;
                    }
                }
                w.flush()?;
            }
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct FitReport<'a> {
    model: ModelKind,
    /// Present for joint fits.
    vix_convention: Option<VixConvention>,
    dataset_hash: Option<String>,
    n_rows: usize,
    n_skipped_transitions: usize,
    #[serde(flatten)]
    result: &'a EstimationResult,
}

fn load_series(cfg: &RunConfig, model: ModelKind) -> Result<(ObservationSeries, Option<String>)> {
    let d = &cfg.data;
    let channels = if model == ModelKind::Joint { 3 } else { 1 };
    let dt = d.dt.unwrap_or(if model == ModelKind::Joint {
        dt_joint_days()
    } else {
        dt_intraday_years()
    });
    if let Some(path) = &d.observations {
        let f = File::open(path).map_err(|e| SsvError::Data(format!("{}: {e}", path.display())))?;
        return Ok((read_observations(f, channels, dt, &d.calendar)?, None));
    }
    match (model, &d.sentiment, &d.price, &d.volatility) {
        (ModelKind::Joint, Some(s), Some(p), Some(v)) => {
            let ds = ingest_files(s, p, v, &d.calendar, d.vix_convention)?;
            let mut series = ds.to_series()?;
            series.grid.dt = dt;
            Ok((series, Some(ds.hash())))
        }
        _ => Err(SsvError::Data(
            "no input: pass --data, or --sentiment, --price and --volatility for the joint model".into(),
        )),
    }
}

fn fit_cmd(cfg: &RunConfig, _args: &FitArgs, model: ModelKind, out: &Path) -> Result<u8> {
    let (series, hash) = load_series(cfg, model)?;
    let est = ssv_core::npsmle::EstimatorConfig {
        seed: cfg.seed,
        ..cfg.estimator.clone()
    };
    let res = fit(&series, &est, None)?;
    write_json(
        &out.join("fit.json"),
        &FitReport {
            model,
            vix_convention: (model == ModelKind::Joint).then_some(cfg.data.vix_convention),
            dataset_hash: hash,
            n_rows: series.grid.n_bars + 1,
            n_skipped_transitions: series.skipped.len(),
            result: &res,
        },
    )?;
    let mut w = csv::Writer::from_writer(create(&out.join("trace.csv"))?);
    let mut header = vec!["iteration", "loglik"];
    header.extend(res.theta_hat.names());
    w.write_record(&header)?;
    for e in &res.trace {
        let mut rec = vec![e.iteration.to_string(), e.loglik.to_string()];
        rec.extend(e.theta.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    if res.converged {
        Ok(0)
    } else {
        eprintln!("optimizer stopped before meeting its tolerances");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn bootstrap_cmd(cfg: &RunConfig, args: &BootstrapArgs, out: &Path) -> Result<u8> {
    let theta = match &args.fit {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let t = v
                .get("theta_hat")
                .ok_or_else(|| SsvError::Data(format!("{}: no `theta_hat`", path.display())))?;
            serde_json::from_value::<Theta>(t.clone())?
        }
        None => match cfg.simulate.model {
            ModelKind::Joint => Theta::Joint(cfg.params),
            ModelKind::Sentiment => Theta::Sentiment(cfg.ou_params),
        },
    };
    let (_, n_bars) = cfg.bootstrap.resolved();
    let dt = cfg.data.dt.unwrap_or(match theta {
        Theta::Joint(_) => dt_joint_days(),
        Theta::Sentiment(_) => dt_intraday_years(),
    });
    let grid = TimeGrid::new(0.0, dt, n_bars, 1)?;
    let bcfg = cfg.bootstrap.to_config(cfg.seed, cfg.simulate.initial, &cfg.estimator);
    let summary = bootstrap(&theta, &grid, &bcfg)?;
    write_json(&out.join("bootstrap.json"), &summary)?;
    write_summary_table(&summary, create(&out.join("bootstrap_table.csv"))?)?;
    Ok(0)
}

fn train_cmd(cfg: &RunConfig, args: &TrainArgs, out: &Path) -> Result<u8> {
    let f = File::open(&args.data).map_err(|e| SsvError::Data(format!("{}: {e}", args.data.display())))?;
    let examples = read_labeled(f, cfg.sentiment.delimiter)?;
    let mut tc: TrainConfig = cfg.sentiment.train.clone();
    tc.seed = cfg.seed;
    let cv = if cfg.sentiment.lambda_grid.is_empty() {
        None
    } else {
        let report = cross_validate(&examples, &cfg.sentiment.lambda_grid, cfg.sentiment.folds, &tc)?;
        tc.lambda = report.best_lambda;
        Some(report)
    };
    let model = train(&examples, &tc)?;
    model.save(&out.join("classifier.model"))?;
    let n_nonzero: Vec<usize> = model.models.iter().map(|m| m.nonzero()).collect();
    write_json(
        &out.join("training.json"),
        &serde_json::json!({
            "n_examples": examples.len(),
            "config": tc,
            "eta0": model.eta0,
            "nonzero_weights": n_nonzero,
            "cross_validation": cv,
        }),
    )?;
    Ok(0)
}

fn score_cmd(args: &ScoreArgs, out: &Path) -> Result<u8> {
    let model = ClassifierModel::load(&args.model)?;
    let f = File::open(&args.news).map_err(|e| SsvError::Data(format!("{}: {e}", args.news.display())))?;
    let items = read_news(f)?;
    let scores = score_news(&model, &items)?;
    write_scores(&scores, create(&out.join("scores.csv"))?)?;
    Ok(0)
}

fn aggregate_cmd(cfg: &RunConfig, args: &AggregateArgs, out: &Path) -> Result<u8> {
    let f = File::open(&args.scores).map_err(|e| SsvError::Data(format!("{}: {e}", args.scores.display())))?;
    let scores = read_scores(f)?;
    let agg = aggregate_bars(&scores, &cfg.data.calendar, cfg.sentiment.empty_bars)?;
    write_bars(&agg.bars, create(&out.join("bars.csv"))?)?;
    write_json(
        &out.join("bars_report.json"),
        &serde_json::json!({
            "timezone": agg.timezone,
            "policy": agg.policy,
            "n_bars": agg.bars.len(),
            "n_empty": agg.n_empty,
            "imputed": agg.bars.iter().filter(|b| b.imputed).map(|b| b.interval_start).collect::<Vec<_>>(),
            "reassigned": agg.reassigned,
        }),
    )?;
    Ok(0)
}
