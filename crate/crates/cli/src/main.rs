use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use infoloss::corpus::io::{export_corpus, import_corpus, read_wav, LengthPolicy};
use infoloss::corpus::{
    synthesize_corpus, theta_from_db, GaussianWordModel, NormalizedCorpus, WordCorpus,
};
use infoloss::decoder::{Classifier, Decoder};
use infoloss::gaussian::DependenceMode;
use infoloss::harness::{build_report, fit_psychometric, srt, Config, PsychPoint, CONFIG_ENV};
use infoloss::infobounds::{mutual_info_bounds, Priors};
use infoloss::listening::{
    presentation_gain, render_session_audio, Phase, SessionPlan, SessionResults,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "infoloss",
    version,
    about = "Information-loss analysis of noisy closed-vocabulary word recognition"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set sweep.trials_per_fold=40`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Corpus source: `synthetic` (the configured synthetic corpus),
    /// `identical-words` (every word drawn from one process), or a manifest path.
    #[arg(long, global = true)]
    corpus: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the configured corpus into a directory of WAV files.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Read a WAV corpus manifest and write it back in canonical form.
    Import {
        #[arg(long)]
        manifest: PathBuf,
        /// Common length in samples; the shortest file when absent.
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train word models on the whole corpus and save them as JSON.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "markov1")]
        mode: DependenceMode,
    },
    /// Decode one WAV stimulus and print the result as a JSON line.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "map_m")]
        classifier: Classifier,
        /// Playback gain the stimulus was written with; samples are divided by it.
        #[arg(long, default_value_t = 1.0)]
        gain: f64,
    },
    /// Leave-one-out sweep over SNRs, classifiers and dependence modes; writes the CSV report.
    Sweep {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Listening-test results (JSON) to add as human rows. Repeatable.
        #[arg(long)]
        human: Vec<PathBuf>,
    },
    /// Print bounds on I(M;Y) at one SNR.
    Bounds {
        /// Linear SNR scale.
        #[arg(long, conflicts_with = "snr_db", required_unless_present = "snr_db")]
        theta: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: Option<f64>,
        #[arg(long, default_value = "markov1")]
        mode: DependenceMode,
    },
    /// Fit the psychometric function to listening-test results or a CSV of
    /// `snr_db,p_c,n_trials` points.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Vocabulary size; taken from the results file when absent.
        #[arg(long)]
        gamma: Option<usize>,
    },
    /// Run the listening-test service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Write the WAV stimuli of one session plan plus an operator manifest.
    ExportStimuli {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        phase: Phase,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Download the results of a completed session from a running service.
    FetchResults {
        #[arg(long)]
        url: String,
        #[arg(long)]
        session: String,
        #[arg(long)]
        token: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure caused by the invocation rather than by the data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    Usage(e.to_string()).into()
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = Config::resolve(cli.config.as_deref()).map_err(|e| match e {
        infoloss::Error::Io { .. } => anyhow::Error::from(e),
        other => usage(other),
    })?;
    for s in &cli.set {
        cfg.set(s).map_err(usage)?;
    }
    match cli.corpus.as_deref() {
        None | Some("synthetic") | Some("identical-words") => {}
        Some(path) => cfg.corpus.manifest = Some(PathBuf::from(path)),
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn load_corpus(cli: &Cli, cfg: &Config) -> anyhow::Result<WordCorpus> {
    if cli.corpus.as_deref() == Some("identical-words") {
        let mut spec = cfg.synth_spec()?;
        let first = spec.words[0].clone();
        spec.words.iter_mut().for_each(|w| *w = first.clone());
        return Ok(synthesize_corpus(&spec)?);
    }
    Ok(cfg.load_corpus()?)
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_results(path: &Path) -> anyhow::Result<SessionResults> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a results file", path.display()))
}

fn read_points(path: &Path) -> anyhow::Result<(Vec<PsychPoint>, Option<usize>)> {
    if path.extension().is_some_and(|e| e == "csv") {
        let mut r =
            csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| -> anyhow::Result<&str> {
                rec.get(i)
                    .with_context(|| format!("{}: expected snr_db,p_c,n_trials", path.display()))
            };
            points.push(PsychPoint {
                snr_db: field(0)?.trim().parse()?,
                p_c: field(1)?.trim().parse()?,
                n_trials: field(2)?.trim().parse()?,
            });
        }
        Ok((points, None))
    } else {
        let r = read_results(path)?;
        Ok((r.psych_points(), Some(r.gamma)))
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Synth { out } => {
            let corpus = load_corpus(&cli, &cfg)?;
            let manifest = export_corpus(&corpus, out)?;
            println!(
                "{}",
                json!({
                    "manifest": manifest,
                    "words": corpus.word_count(),
                    "realizations": corpus.realization_count(),
                    "samples": corpus.samples_per_realization(),
                    "fingerprint": corpus.fingerprint(),
                })
            );
        }
        Command::Import {
            manifest,
            length,
            out,
        } => {
            let policy = length.map_or(LengthPolicy::Shortest, LengthPolicy::Fixed);
            let corpus = import_corpus(manifest, policy)?;
            let written = export_corpus(&corpus, out)?;
            println!(
                "{}",
                json!({
                    "manifest": written,
                    "words": corpus.word_count(),
                    "realizations": corpus.realization_count(),
                    "samples": corpus.samples_per_realization(),
                    "fingerprint": corpus.fingerprint(),
                })
            );
        }
        Command::Train { out, mode } => {
            let corpus = load_corpus(&cli, &cfg)?;
            let model = GaussianWordModel::train(&corpus, &cfg.model_config(*mode)?)?;
            model.save(out)?;
            println!(
                "{}",
                json!({"model": out, "words": model.word_count(), "dim": model.dim(), "mode": mode})
            );
        }
        Command::Decode {
            model,
            input,
            classifier,
            gain,
        } => {
            if gain.is_nan() || *gain <= 0.0 {
                return Err(usage("--gain must be positive"));
            }
            let model = GaussianWordModel::load(model)?;
            let (rate, samples) = read_wav(input)?;
            if rate != model.sample_rate {
                bail!(
                    "{} is sampled at {rate} Hz, the model at {} Hz",
                    input.display(),
                    model.sample_rate
                );
            }
            let y: Vec<f64> = samples.iter().map(|x| x / gain).collect();
            let decoder = Decoder::from_model(&model, model.mode(), cfg.decoder_settings()?)?;
            let stride = match cfg.sweep.stride {
                0 => model.layout.frame_len(),
                s => s,
            };
            let r = decoder.decode_with_shift(&y, *classifier, stride)?;
            println!(
                "{}",
                json!({
                    "classifier": r.classifier,
                    "m_star": r.m_star,
                    "label": model.labels[r.m_star],
                    "theta_star": r.theta_star,
                    "theta_index": r.theta_index,
                    "shift": r.shift,
                    "scores": r.scores,
                })
            );
        }
        Command::Sweep { seed, out, human } => {
            let mut cfg = cfg.clone();
            if let Some(s) = seed {
                cfg.sweep.seed = *s;
            }
            let out = out.clone().unwrap_or_else(|| cfg.sweep.output.clone());
            let human = human
                .iter()
                .map(|p| read_results(p))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let corpus = load_corpus(&cli, &cfg)?;
            let mut report = build_report(&corpus, &cfg)?;
            if !human.is_empty() {
                report.merge_human(&corpus, &SessionResults::pool(&human)?)?;
            }
            report.write_csv(&out)?;
            println!(
                "{}",
                json!({
                    "report": out,
                    "rows": report.rows.len(),
                    "dpi_violations": report.dpi_violations().len(),
                    "max_classifier_spread": report.max_classifier_spread(),
                })
            );
        }
        Command::Bounds {
            theta,
            snr_db,
            mode,
        } => {
            let theta = match (theta, snr_db) {
                (Some(t), _) => *t,
                (None, Some(db)) => theta_from_db(*db),
                (None, None) => unreachable!("clap requires one"),
            };
            let corpus = load_corpus(&cli, &cfg)?;
            let model = GaussianWordModel::train(&corpus, &cfg.model_config(*mode)?)?;
            let b = mutual_info_bounds(
                &model.noisy_all(theta)?,
                &Priors::uniform(model.word_count()),
                &cfg.beta()?,
                *mode,
            )?;
            println!("{}", json!({"theta": theta, "mode": mode, "bounds": b}));
        }
        Command::Fit { input, gamma } => {
            let (points, found) = read_points(input)?;
            let gamma = gamma
                .or(found)
                .ok_or_else(|| usage("--gamma is required for CSV input"))?;
            let fit = fit_psychometric(&points, gamma)?;
            let threshold = srt(&fit).ok();
            println!("{}", json!({"fit": fit, "srt_db": threshold}));
        }
        Command::Serve { bind, data_dir } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .with_writer(std::io::stderr)
                .init();
            let bind = bind.clone().unwrap_or_else(|| cfg.service.bind.clone());
            let data_dir = data_dir
                .clone()
                .unwrap_or_else(|| cfg.service.data_dir.clone());
            let corpus = load_corpus(&cli, &cfg)?;
            let normalized =
                NormalizedCorpus::new(&corpus, &cfg.model_config(cfg.model.modes[0])?)?;
            let service = infoloss_service::Service::open(
                infoloss_service::ServiceConfig {
                    data_dir,
                    session: cfg.session_config(),
                },
                Some(normalized),
            )?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind)
                    .await
                    .with_context(|| format!("binding {bind}"))?;
                println!(
                    "{}",
                    json!({"listening": listener.local_addr()?.to_string()})
                );
                infoloss_service::serve(listener, Arc::new(service), async {
                    tokio::signal::ctrl_c().await.ok();
                })
                .await?;
                anyhow::Ok(())
            })?;
        }
        Command::ExportStimuli { out, phase, seed } => {
            let corpus = load_corpus(&cli, &cfg)?;
            let normalized =
                NormalizedCorpus::new(&corpus, &cfg.model_config(cfg.model.modes[0])?)?;
            let session = cfg.session_config();
            let plan = SessionPlan::generate(
                *phase,
                &session,
                corpus.word_count(),
                corpus.realization_count(),
                *seed,
            )?;
            let gain = presentation_gain(&normalized, &session);
            let audio = render_session_audio(&plan, &normalized, &session)?;
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let mut trials = Vec::new();
            for (i, (t, wav)) in plan.trials.iter().zip(&audio).enumerate() {
                let file = format!("trial_{:03}.wav", i + 1);
                let path = out.join(&file);
                std::fs::write(&path, wav)
                    .with_context(|| format!("writing {}", path.display()))?;
                let labels: Vec<&str> = t
                    .words
                    .iter()
                    .map(|&m| corpus.labels()[m].as_str())
                    .collect();
                trials.push(json!({
                    "file": file,
                    "words": t.words,
                    "labels": labels,
                    "realizations": t.realizations,
                    "snr_db": t.snr_db,
                }));
            }
            let manifest = out.join("stimuli.json");
            write_json(
                &manifest,
                &json!({
                    "phase": phase,
                    "seed": seed,
                    "sample_rate": corpus.sample_rate(),
                    "gain": gain,
                    "labels": corpus.labels(),
                    "trials": trials,
                }),
            )?;
            println!(
                "{}",
                json!({"manifest": manifest, "trials": plan.len(), "gain": gain})
            );
        }
        Command::FetchResults {
            url,
            session,
            token,
            out,
        } => {
            let client = infoloss_client::Client::new(url.as_str());
            let handle = infoloss_client::SessionHandle {
                session_id: session.clone(),
                token: token.clone(),
                trial_count: 0,
            };
            let rt = tokio::runtime::Runtime::new()?;
            let results = rt.block_on(client.results(&handle))?;
            let value = serde_json::to_value(&results)?;
            match out {
                Some(p) => write_json(p, &value)?,
                None => println!("{value}"),
            }
        }
    }
    Ok(())
}

/// Error kind and exit code: 2 for invocation problems, 1 otherwise.
fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    if e.downcast_ref::<Usage>().is_some() {
        return ("usage", 2);
    }
    let io = e.chain().any(|c| {
        c.is::<std::io::Error>()
            || matches!(
                c.downcast_ref::<infoloss::Error>(),
                Some(infoloss::Error::Io { .. })
            )
    });
    if io {
        ("io", 1)
    } else {
        ("error", 1)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            e.print().ok();
            if code != 0 {
                eprintln!(
                    "{}",
                    json!({"error": {"kind": "usage", "message": e.kind().to_string()}})
                );
            }
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = classify(&e);
            eprintln!(
                "{}",
                json!({"error": {"kind": kind, "message": format!("{e:#}")}})
            );
            ExitCode::from(code)
        }
    }
}
