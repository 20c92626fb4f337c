use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use absa_core::bert_fmt::build_text_input;
use absa_core::data::{attach_dependencies, load_dependency_edges, parse_semeval, synth, write_jsonl, BucketProfile};
use absa_core::harness::{
    analyze_report, cross_domain_eval, evaluate_model, grad_check_suite, load_model, run_experiment, save_model, AnalyzeBy,
    DatasetMeta, SuiteOptions,
};
use absa_core::{Dataset, FormatKind, Rng, RunReport, Sample, Task, TrainConfig};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

#[derive(Parser)]
#[command(name = "absa", version, about = "Aspect-aware sentiment encoders: train, evaluate, check")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Atsa,
    Acsa,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Atsa => Task::Atsa,
            TaskArg::Acsa => Task::Acsa,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// "the <aspect> was <opinion> ." with one aspect per review.
    Separable,
    /// Two aspects of opposite polarity per review.
    Pairs,
    /// Category-task version of `separable`.
    Category,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a SemEval-2014 XML file into a JSONL sample cache.
    Preprocess {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        xml: PathBuf,
        /// Dependency heads, one `{"id", "heads"}` object per line.
        #[arg(long)]
        deps: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per seed and write the run report.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory with train.jsonl, test.jsonl and optional embeddings.txt, meta.json.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also save the first seed's best model (JSON manifest; payload beside it as .bin).
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Evaluate a saved model on a data directory's test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Treat the data as a foreign domain; unseen words get fresh rows.
        #[arg(long)]
        cross_domain: bool,
        /// Label of the cross-domain report, e.g. "L→R".
        #[arg(long, default_value = "cross-domain")]
        direction: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference check of every parameter of every component.
    Gradcheck {
        /// Only components whose name starts with this prefix.
        #[arg(long)]
        only: Option<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
        seeds: Vec<u64>,
        /// Print every entry as JSON instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Print the built input of one format as JSON.
    Formats {
        #[arg(long)]
        format: FormatKind,
        #[arg(long)]
        sentence: String,
        #[arg(long)]
        aspect: String,
    },
    /// Break a run report down by aspect count or class.
    Analyze {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        by: AnalyzeBy,
    },
    /// Write a synthetic data directory.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        /// Samples for `separable`/`category`, reviews for `pairs`.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Share of samples (whole reviews for `pairs`) held out as test.
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_samples(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_jsonl(samples, &mut w)?;
    w.flush()?;
    Ok(())
}

fn preprocess(task: Task, xml: &Path, deps: Option<&Path>, out: &Path) -> Result<()> {
    let text = fs::read_to_string(xml).with_context(|| format!("reading {}", xml.display()))?;
    let (mut samples, stats) = parse_semeval(&text, task)?;
    if let Some(deps) = deps {
        let edges = load_dependency_edges(&fs::read_to_string(deps)?)?;
        let n = attach_dependencies(&mut samples, &edges)?;
        info!("attached dependency heads to {n} of {} samples", samples.len());
    }
    write_samples(out, &samples)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

fn train(config: &Path, data: &Path, out: &Path, model_out: Option<&Path>) -> Result<()> {
    let cfg: TrainConfig = serde_json::from_str(&fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?)
        .context("parsing training config")?;
    let data = Dataset::load_dir(data)?;
    let (report, model) = run_experiment(&cfg, &data)?;
    fs::write(out, serde_json::to_string_pretty(&report)?)?;
    if let Some(path) = model_out {
        save_model(&model, path)?;
    }
    let a = &report.aggregate;
    println!("accuracy {:.4} ± {:.4}  macro-F1 {:.4} ± {:.4}  ({} runs)", a.mean.accuracy, a.std.accuracy, a.mean.macro_f1, a.std.macro_f1, a.runs);
    Ok(())
}

fn eval(model: &Path, data: &Path, cross: bool, direction: &str, seed: u64) -> Result<()> {
    let mut model = load_model(model)?;
    let data = Dataset::load_dir(data)?;
    let profile = data.meta.bucket_profile;
    let json = if cross {
        let r = cross_domain_eval(&mut model, &data.test, direction, profile, &Rng::new(seed).substream("cross-domain"))?;
        serde_json::to_string_pretty(&r)?
    } else {
        serde_json::to_string_pretty(&evaluate_model(&model, &data.test, profile)?)?
    };
    println!("{json}");
    Ok(())
}

fn gradcheck(only: Option<String>, seeds: Vec<u64>, json: bool) -> Result<bool> {
    let report = grad_check_suite(&SuiteOptions { seeds, only })?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(report.passed());
    }
    let mut components: Vec<&str> = report.entries.iter().map(|e| e.component.as_str()).collect();
    components.dedup();
    for c in components {
        let entries: Vec<_> = report.entries.iter().filter(|e| e.component == c).collect();
        let worst = entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
        let ok = entries.iter().all(|e| e.passed);
        println!("{} {c:<36} max rel error {worst:.2e} (< {:.0e})", if ok { "ok  " } else { "FAIL" }, entries[0].threshold);
    }
    for f in report.failures() {
        println!("  failed: {} seed {} {} {:.3e}", f.component, f.seed, f.param, f.max_rel_error);
    }
    println!("{} entries, max rel error {:.2e}: {}", report.entries.len(), report.max_rel_error(), if report.passed() { "PASS" } else { "FAIL" });
    Ok(report.passed())
}

fn synth_dir(kind: SynthKind, n: usize, seed: u64, test_fraction: f64, out: &Path) -> Result<()> {
    if !(0.0..1.0).contains(&test_fraction) {
        bail!("test fraction must lie in [0, 1)");
    }
    let rng = Rng::new(seed);
    let (samples, group) = match kind {
        SynthKind::Separable => (synth::separable_corpus(n, &rng), 1),
        SynthKind::Pairs => (synth::opposite_pair_corpus(n, &rng), 2),
        SynthKind::Category => (synth::separable_category_corpus(n, &rng), 1),
    };
    let groups = samples.len() / group;
    let test_groups = ((groups as f64) * test_fraction).round() as usize;
    let cut = (groups - test_groups) * group;
    if cut == 0 || cut == samples.len() {
        bail!("split leaves an empty train or test set; adjust --n or --test-fraction");
    }
    fs::create_dir_all(out)?;
    write_samples(&out.join("train.jsonl"), &samples[..cut])?;
    write_samples(&out.join("test.jsonl"), &samples[cut..])?;
    let name = out.file_name().map_or_else(|| "synthetic".into(), |s| s.to_string_lossy().into_owned());
    let meta = DatasetMeta { name, bucket_profile: BucketProfile::Raw, embedding_seed: seed };
    fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    println!("wrote {} train and {} test samples to {}", cut, samples.len() - cut, out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Preprocess { task, xml, deps, out } => preprocess(task.into(), &xml, deps.as_deref(), &out)?,
        Command::Train { config, data, out, save_model } => train(&config, &data, &out, save_model.as_deref())?,
        Command::Eval { model, data, cross_domain, direction, seed } => eval(&model, &data, cross_domain, &direction, seed)?,
        Command::Gradcheck { only, seeds, json } => return gradcheck(only, seeds, json),
        Command::Formats { format, sentence, aspect } => println!("{}", build_text_input(format, &sentence, &aspect)?.to_json()?),
        Command::Analyze { report, by } => {
            let r: RunReport = serde_json::from_str(&fs::read_to_string(&report)?).context("parsing run report")?;
            print!("{}", analyze_report(&r, by));
        }
        Command::Synth { kind, n, seed, test_fraction, out } => synth_dir(kind, n, seed, test_fraction, &out)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
