//! The `teleo` command line.
//!
//! Exit status: 0 on success, 1 when the graph or data is invalid, 2 on
//! usage errors (unknown flags, missing files, bad arguments).

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::agent::bind_agent;
use crate::classify::classify_effects;
use crate::error::{Error, Result};
use crate::infer::{
    arms_from_dataset, enumerate_hypotheses, full_battery, identify, score_hypotheses, ScoringConfig,
    DEFAULT_HYPOTHESIS_CAP,
};
use crate::io::report::{
    ClassificationSection, ExperimentEntry, IdentificationSection, RunConfig, SimulationSection, ValidationSection,
};
use crate::io::{dataset_to_string, emit_report, parse_graph_spec, read_dataset, Format, GraphSpec, Report};
use crate::lab::{battery_pattern_check, plan, run_battery, InterferenceExperiment, DEFAULT_ALPHA};
use crate::observe::{observational_battery, required_adjustment, simulate_observational, ObservationalConfig};
use crate::scm::{self, Dataset, Regime, RNG_ALGORITHM};

#[derive(Parser, Debug)]
#[command(name = "teleo", version, about = "Teleological inference on binary causal models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Human,
    Machine,
}

#[derive(Args, Debug)]
struct Common {
    /// Graph spec file.
    #[arg(long)]
    graph: PathBuf,
    /// Report format.
    #[arg(long, value_enum, default_value = "human")]
    format: FormatArg,
    /// Write the report here instead of stdout (for `simulate`, the dataset).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a graph spec.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Classify the action's effects relative to a hypothesized intention.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        hypothesis: Option<String>,
    },
    /// List the interference experiments for a hypothesis.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        hypothesis: Option<String>,
    },
    /// Generate a dataset from the bound model.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        /// Rows per regime (total rows with --observational).
        #[arg(long)]
        n: usize,
        /// One natural population labeled by the lever values it happens to show.
        #[arg(long)]
        observational: bool,
    },
    /// Run the randomized battery on the bound model.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        /// Rows per arm.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Plan for this hypothesis only instead of the full battery.
        #[arg(long)]
        hypothesis: Option<String>,
    },
    /// Run the battery on observational data.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Comma-separated adjustment set; defaults to the confounding causes.
        #[arg(long, value_delimiter = ',')]
        adjust: Option<Vec<String>>,
        #[arg(long)]
        hypothesis: Option<String>,
    },
    /// Score intention hypotheses against a dataset and identify the intention.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        max_size: usize,
        #[arg(long, value_delimiter = ',')]
        adjust: Option<Vec<String>>,
    },
}

enum Failure {
    Usage(String),
    Invalid(String),
    /// Invalid, with a report describing why; exit 1.
    Reported(Box<Report>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

fn read_file(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_spec(path: &Path) -> std::result::Result<GraphSpec, Failure> {
    let text = read_file(path)?;
    parse_graph_spec(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load_data(path: &Path, spec: &GraphSpec) -> std::result::Result<Dataset, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let d = read_dataset(file).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    for v in spec.graph.names() {
        if !d.has_column(v) {
            return Err(Failure::Invalid(format!("{}: missing column `{v}`", path.display())));
        }
    }
    Ok(d)
}

fn hypothesis_of(spec: &GraphSpec, given: &Option<String>) -> std::result::Result<String, Failure> {
    if let Some(h) = given {
        return Ok(h.clone());
    }
    let t = spec.require_tagging()?;
    match t.intention.iter().collect::<Vec<_>>()[..] {
        [only] => Ok(only.variable.clone()),
        _ => Err(Failure::Usage(
            "pass --hypothesis: the tagging block does not name exactly one intended effect".into(),
        )),
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn battery(spec: &GraphSpec, action: &str, hypothesis: &Option<String>, report: &mut Report) -> Result<Vec<InterferenceExperiment>> {
    match hypothesis {
        Some(h) => {
            let c = classify_effects(&spec.graph, action, h)?;
            let p = plan(&spec.graph, &c, &spec.levers)?;
            let experiments = p.experiments.clone();
            report.classification = Some(ClassificationSection::build(&spec.graph, &c)?);
            report.plan = Some(p);
            Ok(experiments)
        }
        None => full_battery(&spec.graph, action, &spec.levers),
    }
}

fn adjustment_set(
    spec: &GraphSpec,
    action: &str,
    experiments: &[InterferenceExperiment],
    given: &Option<Vec<String>>,
) -> Result<BTreeSet<String>> {
    match given {
        Some(vs) => {
            for v in vs {
                spec.graph.index_of(v)?;
            }
            Ok(vs.iter().cloned().collect())
        }
        None => required_adjustment(&spec.graph, action, experiments),
    }
}

/// Returns the report and, for `simulate`, the dataset to write.
fn execute(command: &Command) -> std::result::Result<(Report, Option<(PathBuf, Dataset)>), Failure> {
    match command {
        Command::Validate { common } => {
            let mut report = Report::new(RunConfig {
                command: "validate".into(),
                graph: Some(display(&common.graph)),
                ..RunConfig::default()
            });
            let text = read_file(&common.graph)?;
            match parse_graph_spec(&text) {
                Ok(spec) => {
                    report.validation = Some(ValidationSection::of_graph(&spec.graph));
                    Ok((report, None))
                }
                Err(Error::InvalidGraph(r)) => {
                    report.validation = Some(ValidationSection::failed(r));
                    Err(Failure::Reported(Box::new(report)))
                }
                Err(e) => Err(Failure::Invalid(format!("{}: {e}", common.graph.display()))),
            }
        }
        Command::Classify { common, hypothesis } | Command::Plan { common, hypothesis } => {
            let spec = load_spec(&common.graph)?;
            let h = hypothesis_of(&spec, hypothesis)?;
            let action = spec.require_tagging()?.action.clone();
            let is_plan = matches!(command, Command::Plan { .. });
            let mut report = Report::new(RunConfig {
                command: if is_plan { "plan" } else { "classify" }.into(),
                graph: Some(display(&common.graph)),
                hypothesis: Some(h.clone()),
                ..RunConfig::default()
            });
            report.validation = Some(ValidationSection::of_graph(&spec.graph));
            let c = classify_effects(&spec.graph, &action, &h)?;
            report.classification = Some(ClassificationSection::build(&spec.graph, &c)?);
            if is_plan {
                report.plan = Some(plan(&spec.graph, &c, &spec.levers)?);
            }
            Ok((report, None))
        }
        Command::Simulate {
            common,
            seed,
            n,
            observational,
        } => {
            let spec = load_spec(&common.graph)?;
            let out = common
                .out
                .clone()
                .ok_or_else(|| Failure::Usage("simulate needs --out FILE for the dataset".into()))?;
            let mut report = Report::new(RunConfig {
                command: "simulate".into(),
                graph: Some(display(&common.graph)),
                seed: Some(*seed),
                n: Some(*n),
                observational: *observational,
                rng: Some(RNG_ALGORITHM.into()),
                ..RunConfig::default()
            });
            report.validation = Some(ValidationSection::of_graph(&spec.graph));
            let mut regimes = vec![Regime::natural()];
            for lever in spec.levers.values() {
                let r = lever.regime();
                if !regimes.contains(&r) {
                    regimes.push(r);
                }
            }
            let data = match (&spec.tagging, observational) {
                (Some(t), true) => {
                    let model = bind_agent(&spec.graph, &t.action, t.policy())?;
                    let levers: Vec<_> = spec.levers.values().cloned().collect();
                    simulate_observational(&model, &levers, *n, *seed)?
                }
                (None, true) => return Err(Failure::Usage("--observational needs a [tagging] block".into())),
                (tagging, false) => {
                    let model = match tagging {
                        Some(t) => Some(bind_agent(&spec.graph, &t.action, t.policy())?),
                        None => None,
                    };
                    let mut all = Dataset::empty(spec.graph.names().map(str::to_string).collect());
                    for (i, r) in regimes.iter().enumerate() {
                        let block = match &model {
                            Some(m) if r.clamp(m.action()).is_none() => m.sample(r, *n, *seed, i as u64)?,
                            _ => scm::sample_regime(&spec.graph, r, *n, *seed, i as u64)?,
                        };
                        all.extend(block)?;
                    }
                    all
                }
            };
            let mut counts: Vec<(String, usize)> = Vec::new();
            for l in data.regime_labels() {
                match counts.iter_mut().find(|(x, _)| x == l) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((l.clone(), 1)),
                }
            }
            report.simulation = Some(SimulationSection {
                rows: data.len(),
                output: display(&out),
                blocks: data.provenance().to_vec(),
                regimes: counts,
            });
            Ok((report, Some((out, data))))
        }
        Command::Experiment {
            common,
            seed,
            n,
            alpha,
            hypothesis,
        } => {
            let spec = load_spec(&common.graph)?;
            let t = spec.require_tagging()?;
            let model = bind_agent(&spec.graph, &t.action, t.policy())?;
            let mut report = Report::new(RunConfig {
                command: "experiment".into(),
                graph: Some(display(&common.graph)),
                seed: Some(*seed),
                n: Some(*n),
                alpha: Some(*alpha),
                hypothesis: hypothesis.clone(),
                rng: Some(RNG_ALGORITHM.into()),
                ..RunConfig::default()
            });
            report.validation = Some(ValidationSection::of_graph(&spec.graph));
            let experiments = battery(&spec, &t.action, hypothesis, &mut report)?;
            let runs = run_battery(&model, &experiments, *n, *seed, *alpha)?;
            let entries = experiments
                .into_iter()
                .zip(runs)
                .map(|(experiment, (result, arms))| {
                    let pattern = battery_pattern_check(&arms.treated, &experiment, t.p_base)?;
                    Ok(ExperimentEntry {
                        experiment,
                        result,
                        pattern,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            report.experiments = Some(entries);
            Ok((report, None))
        }
        Command::Analyze {
            common,
            data,
            alpha,
            adjust,
            hypothesis,
        } => {
            let spec = load_spec(&common.graph)?;
            let t = spec.require_tagging()?;
            let dataset = load_data(data, &spec)?;
            let mut report = Report::new(RunConfig {
                command: "analyze".into(),
                graph: Some(display(&common.graph)),
                data: Some(display(data)),
                alpha: Some(*alpha),
                hypothesis: hypothesis.clone(),
                ..RunConfig::default()
            });
            report.validation = Some(ValidationSection::of_graph(&spec.graph));
            let experiments = battery(&spec, &t.action, hypothesis, &mut report)?;
            let adjustment = adjustment_set(&spec, &t.action, &experiments, adjust)?;
            report.config.adjustment = Some(adjustment.iter().cloned().collect());
            let entries = observational_battery(
                &dataset,
                &spec.graph,
                &t.action,
                &experiments,
                &adjustment,
                ObservationalConfig {
                    alpha: *alpha,
                    p_base: t.p_base,
                },
            )?;
            report.observational = Some(entries);
            Ok((report, None))
        }
        Command::Infer {
            common,
            data,
            max_size,
            adjust,
        } => {
            let spec = load_spec(&common.graph)?;
            let t = spec.require_tagging()?;
            let dataset = load_data(data, &spec)?;
            let mut report = Report::new(RunConfig {
                command: "infer".into(),
                graph: Some(display(&common.graph)),
                data: Some(display(data)),
                max_size: Some(*max_size),
                ..RunConfig::default()
            });
            report.validation = Some(ValidationSection::of_graph(&spec.graph));
            let experiments = full_battery(&spec.graph, &t.action, &spec.levers)?;
            let adjustment = adjustment_set(&spec, &t.action, &experiments, adjust)?;
            report.config.adjustment = Some(adjustment.iter().cloned().collect());
            let arms = arms_from_dataset(&dataset, &t.action, &adjustment)?;
            let hypotheses = enumerate_hypotheses(&spec.graph, &t.action, *max_size, DEFAULT_HYPOTHESIS_CAP)?;
            let scoring = score_hypotheses(
                &arms,
                &spec.graph,
                &t.action,
                &t.policy(),
                &hypotheses,
                ScoringConfig::default(),
            )?;
            report.identification = Some(IdentificationSection {
                arms: arms.len(),
                adjustment: adjustment.into_iter().collect(),
                identification: identify(&scoring.scores),
                scoring,
            });
            Ok((report, None))
        }
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Validate { common }
        | Command::Classify { common, .. }
        | Command::Plan { common, .. }
        | Command::Simulate { common, .. }
        | Command::Experiment { common, .. }
        | Command::Analyze { common, .. }
        | Command::Infer { common, .. } => common,
    }
}

fn write_report(
    report: &Report,
    common: &Common,
    to_stdout: bool,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let format = match common.format {
        FormatArg::Human => Format::Human,
        FormatArg::Machine => Format::Machine,
    };
    let text = emit_report(report, format);
    match (&common.out, to_stdout) {
        (Some(path), false) => {
            std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
        }
        _ => out
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Usage(e.to_string())),
    }
}

/// Run the CLI on `args` (program name first). Reports go to `out`,
/// diagnostics to `err`.
pub fn run_command<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    2
                }
            };
        }
    };
    let common = common(&cli.command);
    let is_simulate = matches!(cli.command, Command::Simulate { .. });
    let outcome = execute(&cli.command).and_then(|(report, dataset)| {
        if let Some((path, data)) = dataset {
            std::fs::write(&path, dataset_to_string(&data))
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        }
        write_report(&report, common, is_simulate, out)
    });
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(Failure::Invalid(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
        Err(Failure::Reported(report)) => {
            let _ = write_report(&report, common, false, out);
            1
        }
    }
}
