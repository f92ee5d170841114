use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use speechscreen::pipeline::{self, PipelineError, RunConfig, Stage, KEYS};

/// Named shortcuts and the config keys they set.
const VALUE_FLAGS: &[(&str, &[&str], &str)] = &[
    ("manifest", &["run.manifest"], "Manifest CSV"),
    ("out", &["run.out"], "Output directory"),
    ("modality", &["run.modality"], "features | audio"),
    ("backend-kind", &["backend.kind"], "remote_chat | remote_audio | mock_threshold | mock_fixed | mock_oracle"),
    ("endpoint", &["backend.endpoint"], "Chat-completions endpoint URL"),
    ("model", &["backend.model"], "Model name sent to the endpoint"),
    ("seed", &["bootstrap.seed", "backend.seed"], "Seed for the bootstrap and the backend"),
    ("replicates", &["bootstrap.replicates"], "Bootstrap replicates"),
    ("format", &["run.format"], "markdown | csv | json"),
];

const SWITCHES: &[(&str, &str, &str)] = &[
    ("resume", "run.resume", "Skip stages whose output already exists"),
    ("strict", "run.strict", "Fail on any validation finding"),
    ("log-prompts", "run.log_prompts", "Include prompt text in prompts.jsonl"),
    ("log-raw", "run.log_raw", "Write raw backend responses to raw.jsonl"),
];

fn cli() -> Command {
    let mut cmd = Command::new("speechscreen")
        .about("Screen speech recordings for Parkinson's disease with a language-model backend")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("Config file of `key = value` lines"),
        );
    for (name, _, help) in VALUE_FLAGS {
        cmd = cmd.arg(Arg::new(*name).long(*name).global(true).help(*help));
    }
    for (name, _, help) in SWITCHES {
        cmd = cmd.arg(Arg::new(*name).long(*name).global(true).action(ArgAction::SetTrue).help(*help));
    }
    for (key, help) in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(*key)
                .global(true)
                .value_name("VALUE")
                .hide_short_help(true)
                .help(*help),
        );
    }
    for (stage, about) in [
        (Stage::Validate, "Check the manifest and write validation.json"),
        (Stage::Extract, "Preprocess recordings and extract features"),
        (Stage::Infer, "Query the backend for every segment"),
        (Stage::Aggregate, "Combine segment predictions into subject decisions"),
        (Stage::Evaluate, "Compute metrics with bootstrap intervals"),
        (Stage::Report, "Render report.json as a table"),
    ] {
        cmd = cmd.subcommand(Command::new(stage.name()).about(about));
    }
    cmd.subcommand(Command::new("run").about("Run every stage in order"))
        .subcommand(Command::new("keys").about("List every config key"))
}

fn build_config(m: &ArgMatches) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        cfg.apply_text(&pipeline::jsonl::read_text(path)?)?;
    }
    for (key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    for (name, keys, _) in VALUE_FLAGS {
        if let Some(v) = m.get_one::<String>(name) {
            for key in *keys {
                cfg.set(key, v)?;
            }
        }
    }
    for (name, key, _) in SWITCHES {
        if m.get_flag(name) {
            cfg.set(key, "true")?;
        }
    }
    Ok(cfg)
}

fn run(m: &ArgMatches) -> Result<(), PipelineError> {
    let (name, _) = m.subcommand().expect("subcommand required");
    if name == "keys" {
        for (key, help) in KEYS {
            println!("{key:<28} {help}");
        }
        return Ok(());
    }
    let cfg = build_config(m)?;
    if name == "run" || name == "infer" {
        cfg.validate()?;
    } else {
        cfg.validate_except_backend()?;
    }
    if name == "run" {
        let (_, rendered) = pipeline::run_pipeline(&cfg)?;
        print!("{rendered}");
        return Ok(());
    }
    let stage = Stage::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .expect("every subcommand is a stage");
    match pipeline::run_stage(&cfg, stage)? {
        Some(text) => print!("{text}"),
        None => eprintln!("{stage}: wrote {}", cfg.output_dir.join(stage.output(cfg.modality)).display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
