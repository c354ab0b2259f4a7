use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use edgecache::config::KEYS;
use edgecache::fl::FlRoundLog;
use edgecache::gradcheck::{self, Architecture};
use edgecache::harness::{self, SweepAxis};
use edgecache::rng::MasterSeed;
use edgecache::{Error, ExperimentConfig, Policy, Result};

fn with_config_args(cmd: Command) -> Command {
    let mut cmd = cmd.arg(Arg::new("config").long("config").short('c').value_name("FILE").help("key = value config file"));
    for key in KEYS {
        let dashed = key.replace('_', "-");
        let mut arg = Arg::new(*key).long(*key).value_name("VALUE").help(format!("override `{key}`"));
        if dashed != *key {
            arg = arg.alias(dashed);
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn cli() -> Command {
    let out = || Arg::new("out").long("out").short('o').value_name("DIR").default_value("out");
    Command::new("edgecache")
        .about("Edge caching experiments: federated prediction, actor-critic caching and baselines")
        .subcommand_required(true)
        .subcommand(with_config_args(Command::new("run").about("Run one experiment")).arg(out()))
        .subcommand(
            with_config_args(Command::new("sweep").about("Sweep one axis over policies and seeds"))
                .arg(Arg::new("axis").long("axis").required(true).help("M_0, M_i, H or N"))
                .arg(Arg::new("values").long("values").required(true).help("comma-separated axis values"))
                .arg(Arg::new("policies").long("policies").default_value("all").help("comma-separated policies or `all`"))
                .arg(Arg::new("seeds").long("seeds").default_value("0,1,2,3,4"))
                .arg(Arg::new("parallel-cells").long("parallel-cells").action(ArgAction::SetTrue).help("run sweep cells in parallel"))
                .arg(out()),
        )
        .subcommand(
            with_config_args(Command::new("audit").about("Check a round log file, or run an experiment and audit its boundary traffic"))
                .arg(Arg::new("fl-log").long("fl-log").value_name("FILE")),
        )
        .subcommand(
            Command::new("gradcheck")
                .about("Finite-difference check of every network gradient")
                .arg(Arg::new("draws").long("draws").default_value("20"))
                .arg(Arg::new("seed").long("seed").default_value("0"))
                .arg(Arg::new("n_contents").long("n_contents").alias("n-contents").default_value("24"))
                .arg(Arg::new("window").long("window").default_value("10"))
                .arg(Arg::new("hidden").long("hidden").default_value("128"))
                .arg(Arg::new("predictor_hidden").long("predictor_hidden").alias("predictor-hidden").default_value("128"))
                .arg(Arg::new("tolerance").long("tolerance").default_value("1e-4")),
        )
}

fn config_from(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(p) => ExperimentConfig::load(Path::new(p))?,
        None => ExperimentConfig::default(),
    };
    let mut errors = Vec::new();
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            if let Err(Error::Config(e)) = cfg.set(key, v) {
                errors.extend(e);
            }
        }
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| Error::Config(vec![format!("{what}: cannot parse {x:?}")])))
        .collect()
}

fn parse_one<T: std::str::FromStr>(m: &ArgMatches, key: &str) -> Result<T> {
    let v = m.get_one::<String>(key).unwrap();
    v.parse().map_err(|_| Error::Config(vec![format!("{key}: cannot parse {v:?}")]))
}

fn run(m: &ArgMatches) -> Result<()> {
    let cfg = config_from(m)?;
    let dir = PathBuf::from(m.get_one::<String>("out").unwrap());
    fs::create_dir_all(&dir)?;
    let out = harness::run_experiment(&cfg)?;
    fs::write(dir.join("metrics.csv"), harness::to_csv(&out.rows))?;
    fs::write(dir.join("config.ini"), cfg.to_ini())?;
    if !out.training.is_empty() {
        fs::write(dir.join("training.csv"), harness::training_log_csv(&out.training))?;
    }
    if let Some(log) = &out.fl_log {
        fs::write(dir.join("fl_rounds.log"), log.to_lines())?;
    }
    let s = &out.summary;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "none".into());
    println!(
        "ok\tpolicy={}\tseed={}\tprivate={}\tmean_h0={}\tsd_h0={}\tmean_hi={:.6}\taudit_violations={}",
        s.policy,
        s.seed,
        s.private,
        fmt(s.mean_h0),
        fmt(s.sd_h0),
        s.mean_hi,
        out.audit.violations.len()
    );
    Ok(())
}

fn sweep(m: &ArgMatches) -> Result<()> {
    let cfg = config_from(m)?;
    let axis: SweepAxis = m.get_one::<String>("axis").unwrap().parse()?;
    let values: Vec<usize> = parse_list("values", m.get_one::<String>("values").unwrap())?;
    let seeds: Vec<u64> = parse_list("seeds", m.get_one::<String>("seeds").unwrap())?;
    let policies: Vec<Policy> = match m.get_one::<String>("policies").unwrap().as_str() {
        "all" => Policy::ALL.to_vec(),
        s => parse_list("policies", s)?,
    };
    let dir = PathBuf::from(m.get_one::<String>("out").unwrap());
    fs::create_dir_all(&dir)?;
    let cells = harness::sweep(&cfg, axis, &values, &policies, &seeds, m.get_flag("parallel-cells"))?;
    let mut metrics = String::from(harness::CSV_HEADER);
    metrics.push('\n');
    for c in &cells {
        let csv = harness::to_csv(&c.output.rows);
        metrics.push_str(csv.split_once('\n').map(|(_, body)| body).unwrap_or(""));
    }
    fs::write(dir.join("metrics.csv"), metrics)?;
    fs::write(dir.join("sweep.csv"), harness::sweep_csv(axis, &cells))?;
    let points = harness::aggregate(&cells);
    fs::write(dir.join("sweep.svg"), harness::sweep_svg(axis, &points)?)?;
    for p in &points {
        println!("ok\tpolicy={}\t{}={}\tseeds={}\tmean_h0={:.6}\tsd_h0={:.6}", p.policy, axis.key(), p.value, p.seeds, p.mean_h0, p.sd_h0);
    }
    Ok(())
}

fn audit(m: &ArgMatches) -> Result<()> {
    if let Some(path) = m.get_one::<String>("fl-log") {
        let log = FlRoundLog::parse(&fs::read_to_string(path)?)?;
        let problems = log.audit();
        if !problems.is_empty() {
            return Err(Error::Format(format!("{} round log violations: {}", problems.len(), problems.join("; "))));
        }
        println!("ok\trounds={}\tviolations=0", log.records.len());
        return Ok(());
    }
    let cfg = config_from(m)?;
    let out = harness::run_experiment(&cfg)?;
    if !out.audit.is_clean() {
        return Err(Error::Ordering(format!("{}: {}", out.audit, out.audit.violations.join("; "))));
    }
    println!("ok\t{}", out.audit.to_string().replace(' ', "\t"));
    Ok(())
}

fn gradcheck_cmd(m: &ArgMatches) -> Result<()> {
    let arch = Architecture {
        n_contents: parse_one(m, "n_contents")?,
        window: parse_one(m, "window")?,
        predictor_hidden: parse_one(m, "predictor_hidden")?,
        hidden: parse_one(m, "hidden")?,
    };
    let tol: f64 = parse_one(m, "tolerance")?;
    let reports = gradcheck::check_all(&arch, parse_one(m, "draws")?, MasterSeed(parse_one(m, "seed")?))?;
    let mut failed = Vec::new();
    for r in &reports {
        println!("{}\tnetwork={}\tdraws={}\tchecked={}\tmax_rel_err={:.3e}", if r.max_rel_err <= tol { "ok" } else { "fail" }, r.name, r.draws, r.checked, r.max_rel_err);
        if r.max_rel_err > tol {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("gradient mismatch above {tol:e} in {}", failed.join(","))))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error\tkind=usage\tmessage={first}");
            return ExitCode::from(2);
        }
    };
    let result = match matches.subcommand() {
        Some(("run", m)) => run(m),
        Some(("sweep", m)) => sweep(m),
        Some(("audit", m)) => audit(m),
        Some(("gradcheck", m)) => gradcheck_cmd(m),
        _ => unreachable!("subcommand required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\t', '\n'], " ");
            eprintln!("error\tkind={}\tmessage={msg}", e.kind());
            ExitCode::from(2)
        }
    }
}
