use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use regime_causal::cli::{self, RunConfig, CONFIG_KEYS};
use regime_causal::{Error, Result};

fn with_config_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .value_parser(value_parser!(PathBuf))
            .help("key = value configuration file"),
    );
    CONFIG_KEYS.iter().fold(cmd, |cmd, (key, help)| {
        cmd.arg(Arg::new(*key).long(*key).value_name("VALUE").help(*help).hide_short_help(true))
    })
}

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("PATH").value_parser(value_parser!(PathBuf)).required(true).help(help)
}

fn command() -> Command {
    Command::new("regime-causal")
        .about("Regime discovery, causal structure and forecasting on multivariate streams")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_config_args(
            Command::new("gen")
                .about("Generate a synthetic stream and its ground truth")
                .arg(path_arg("out", "output prefix; writes <out>.csv and <out>.truth.json")),
        ))
        .subcommand(with_config_args(
            Command::new("run")
                .about("Stream a CSV through the engine")
                .arg(path_arg("input", "CSV with header t,x1,...,xd"))
                .arg(path_arg("out", "output prefix for the .jsonl files"))
                .arg(
                    Arg::new("baseline-static")
                        .long("baseline-static")
                        .action(ArgAction::SetTrue)
                        .help("fit one demixing matrix to the whole stream instead"),
                ),
        ))
        .subcommand(with_config_args(
            Command::new("eval")
                .about("Score a run against ground truth")
                .arg(path_arg("truth", "<prefix>.truth.json from gen"))
                .arg(path_arg("run", "output prefix passed to run"))
                .arg(path_arg("data", "the CSV that was run")),
        ))
        .subcommand(with_config_args(
            Command::new("bench").about("Per-tick latency on a stationary stream").arg(
                Arg::new("length")
                    .long("length")
                    .value_name("TICKS")
                    .value_parser(value_parser!(usize))
                    .default_value("10000"),
            ),
        ))
}

fn config(m: &ArgMatches) -> Result<RunConfig> {
    let overrides: Vec<(String, String)> = CONFIG_KEYS
        .iter()
        .filter_map(|(k, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect();
    RunConfig::from_sources(m.get_one::<PathBuf>("config").map(PathBuf::as_path), &overrides)
}

fn path<'a>(m: &'a ArgMatches, name: &str) -> &'a std::path::Path {
    m.get_one::<PathBuf>(name).expect("required argument")
}

fn dispatch(matches: &ArgMatches) -> Result<()> {
    match matches.subcommand() {
        Some(("gen", m)) => {
            let cfg = config(m)?;
            cli::cmd_gen(&cfg, path(m, "out"))?;
            println!("wrote {} samples of {} variables", cfg.gen.total_len(), cfg.gen.d);
        }
        Some(("run", m)) => {
            let cfg = config(m)?;
            let s = cli::cmd_run(&cfg, path(m, "input"), path(m, "out"), m.get_flag("baseline-static"))?;
            println!("ticks={}\nskipped={}\nregimes={}", s.ticks, s.skipped, s.regimes);
            if let Some(tau) = s.tau_unit {
                println!("tau_unit={tau}");
            }
        }
        Some(("eval", m)) => {
            let cfg = config(m)?;
            let report = cli::cmd_eval(path(m, "truth"), path(m, "run"), path(m, "data"), cfg.engine.l_s)?;
            print!("{}", cli::render_report(&report));
        }
        Some(("bench", m)) => {
            let cfg = config(m)?;
            let report = cli::cmd_bench(&cfg, *m.get_one::<usize>("length").expect("defaulted"))?;
            print!("{}", cli::render_bench(&report));
        }
        _ => return Err(Error::Config("unknown subcommand".into())),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = command().get_matches();
    match dispatch(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
