//! Command-line front end. Options are layered: command-line flags, then
//! the config file (or replayed manifest), then built-in defaults.

pub mod args;
pub mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;

use crate::error::{Error, Result};
use crate::train::builtin_configs;
use args::{Cli, Command, ConfigFile, Layered};
use manifest::{artifact, RunManifest, TOOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::NonFinite(_) => EXIT_NUMERIC,
        Error::ShapeMismatch { .. }
        | Error::Degenerate(_)
        | Error::NoForwardCache(_)
        | Error::Format { .. }
        | Error::Io { .. }
        | Error::Json(_) => EXIT_DATA,
    }
}

/// What `--config` pointed at.
enum ConfigSource {
    None,
    File(ConfigFile),
    Manifest(RunManifest),
    Preset(String),
}

fn load_config(arg: Option<&str>) -> Result<ConfigSource> {
    let Some(arg) = arg else {
        return Ok(ConfigSource::None);
    };
    let path = Path::new(arg);
    if !path.is_file() {
        if crate::train::find_config(arg).is_some() {
            return Ok(ConfigSource::Preset(arg.to_string()));
        }
        return Err(Error::invalid(format!(
            "--config `{arg}` is neither a readable file nor a built-in training config"
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Some(m) = RunManifest::parse(&text) {
        return Ok(ConfigSource::Manifest(m));
    }
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed
        .map(ConfigSource::File)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn pick<T: Layered + Default>(cli: Option<T>, file: Option<T>) -> T {
    cli.unwrap_or_default().or(file.unwrap_or_default())
}

fn execute(cli: Cli) -> Result<()> {
    let source = load_config(cli.config.as_deref())?;
    let (file, replay, preset) = match source {
        ConfigSource::None => (ConfigFile::default(), None, None),
        ConfigSource::File(f) => (f, None, None),
        ConfigSource::Manifest(m) => (m.config, Some(m.command), None),
        ConfigSource::Preset(p) => (ConfigFile::default(), None, Some(p)),
    };

    let command = match (cli.command, replay.as_deref()) {
        (Some(c), _) => c,
        (None, Some("simulate")) => Command::Simulate(Default::default()),
        (None, Some("dataset")) => Command::Dataset(Default::default()),
        (None, Some("train")) => Command::Train(Default::default()),
        (None, Some("eval")) => Command::Eval(Default::default()),
        (None, Some(other)) => return Err(Error::invalid(format!("manifest names unknown command `{other}`"))),
        (None, None) => return Err(Error::invalid("no subcommand given (simulate, dataset, train or eval)")),
    };

    if let Command::Train(a) = &command {
        if a.list_configs {
            for c in builtin_configs() {
                println!(
                    "{:<22} lr={} batch={} patches_per_image={} epochs={} lr_decay={}",
                    c.name, c.lr, c.batch, c.patches_per_image, c.epochs, c.lr_decay
                );
            }
            return Ok(());
        }
    }

    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let threads = cli.threads.or(file.threads).unwrap_or(0);
    let out: PathBuf = cli.out.or(file.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {threads} threads: {e}")))?;

    let mut resolved = ConfigFile {
        seed: Some(seed),
        threads: Some(threads),
        out: Some(out.clone()),
        ..ConfigFile::default()
    };
    let started = Instant::now();
    let name = command.name();
    let outcome = pool.install(|| match command {
        Command::Simulate(a) => {
            let a = commands::resolve_simulate(pick(Some(a), file.simulate))?;
            resolved.simulate = Some(a.clone());
            commands::simulate_cmd(&a, seed, &out)
        }
        Command::Dataset(a) => {
            let a = commands::resolve_dataset(pick(Some(a), file.dataset), &out)?;
            resolved.dataset = Some(a.clone());
            commands::dataset_cmd(&a, seed, &out)
        }
        Command::Train(mut a) => {
            a.preset = a.preset.or(preset);
            let a = commands::resolve_train(pick(Some(a), file.train), &out)?;
            resolved.train = Some(a.clone());
            commands::train_cmd(&a, seed, &out)
        }
        Command::Eval(a) => {
            let a = commands::resolve_eval(pick(Some(a), file.eval), &out, preset.as_deref())?;
            resolved.eval = Some(a.clone());
            commands::eval_cmd(&a, seed, &out)
        }
    })?;

    let manifest = RunManifest {
        tool: TOOL.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: name.to_string(),
        config: resolved,
        seeds: outcome.seeds,
        inputs: outcome
            .inputs
            .iter()
            .map(|p| artifact(p, &out))
            .collect::<Result<_>>()?,
        artifacts: outcome
            .artifacts
            .iter()
            .map(|p| artifact(p, &out))
            .collect::<Result<_>>()?,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let path = manifest.write(&out)?;
    eprintln!("wrote {} artifacts; manifest {}", manifest.artifacts.len(), path.display());
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
