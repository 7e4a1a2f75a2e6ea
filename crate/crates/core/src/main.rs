use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slatkit::bench::{
    descent_csv, emit_report, example4_descent, position_stats, position_stats_csv, run_monte_carlo, Experiment,
    ExperimentConfig,
};
use slatkit::crlb::{crlb_total, fisher_information};
use slatkit::error::{Result, SlatError};
use slatkit::io::{parse_noise, ranges_to_csv, read_ranges, read_scenario, scenario_to_json, Method};
use slatkit::model::{generate_scenario, synthesize_ranges, NoiseModel, ObservationMask, Point2, SquareBox, StackedCoords};
use slatkit::pipeline::{slat_batch, slat_batch_dump, slat_recursive, Dumps, NewTargetRanges, PipelineConfig};
use slatkit::refine::CostMode;
use slatkit::source_loc::{sll1_locate_dump, slcp_locate_dump, CircleSet, DEFAULT_PROJECTOR_SIGMA};

#[derive(Parser)]
#[command(name = "slatkit", version, about = "Simultaneous localization and tracking from range measurements")]
struct Cli {
    /// Random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Scenario JSON (anchors, sensors, targets).
    #[arg(long)]
    scenario: PathBuf,
    /// Range CSV (`kind,i,j,d`).
    #[arg(long)]
    ranges: PathBuf,
    /// edm-sr+mm | edm-r+mm | edm-r-l1+wmm | ...
    #[arg(long, default_value = "edm-r+mm")]
    method: String,
    /// Write the refinement cost trace as CSV.
    #[arg(long)]
    dump_trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random scenario and noisy ranges.
    Simulate {
        #[arg(long, default_value_t = 4)]
        anchors: usize,
        #[arg(long, default_value_t = 5)]
        sensors: usize,
        #[arg(long, default_value_t = 6)]
        targets: usize,
        /// Side interval of the square region, `LO:HI`.
        #[arg(long, default_value = "0:2")]
        region: String,
        #[arg(long, default_value = "gaussian:0.01")]
        noise: String,
    },
    /// EDM initialization and refinement on all targets.
    Batch {
        #[command(flatten)]
        inputs: Inputs,
        /// Write the first conic problem in text form.
        #[arg(long)]
        dump_conic: Option<PathBuf>,
        /// Write the completed EDM as CSV.
        #[arg(long)]
        dump_edm: Option<PathBuf>,
    },
    /// Batch estimate of all but the last target, then one recursive step for the last one.
    Recursive {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Locate one source from station circles.
    Locate {
        /// Station `x,y,d`; repeatable.
        #[arg(long = "station", allow_hyphen_values = true)]
        stations: Vec<String>,
        /// CSV file with `x,y,d` rows.
        #[arg(long)]
        stations_file: Option<PathBuf>,
        /// slcp | sll1
        #[arg(long, default_value = "slcp")]
        method: String,
        #[arg(long, default_value_t = DEFAULT_PROJECTOR_SIGMA)]
        sigma: f64,
        #[arg(long)]
        dump_conic: Option<PathBuf>,
    },
    /// Total Cramér-Rao bound of a scenario under Gaussian range noise.
    Crlb {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        sigma: f64,
    },
    /// Monte Carlo experiment.
    Bench {
        /// example1 | example2-stats | example3 | example4 | custom
        #[arg(long, default_value = "custom")]
        experiment: String,
        /// Number of Monte Carlo runs.
        #[arg(long)]
        mc: Option<usize>,
        /// Noise level; repeatable, replaces the preset grid.
        #[arg(long)]
        noise: Vec<String>,
        /// Method; repeatable, replaces the preset list.
        #[arg(long)]
        method: Vec<String>,
    },
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn estimate_csv(x: &StackedCoords, n_sensors: usize) -> String {
    let mut out = String::from("kind,index,x,y\n");
    for (p, pt) in x.to_points().iter().enumerate() {
        let (kind, idx) = if p < n_sensors { ("sensor", p) } else { ("target", p - n_sensors) };
        let _ = writeln!(out, "{kind},{idx},{:?},{:?}", pt.x, pt.y);
    }
    out
}

fn pipeline_config(method: &str) -> Result<PipelineConfig> {
    match method.parse::<Method>()? {
        Method::Edm { init, refine: Some(mode) } => Ok(PipelineConfig::new(init, mode)),
        other => Err(SlatError::Config(format!("'{other}' is not an EDM method with refinement (use e.g. edm-r+mm)"))),
    }
}

fn parse_region(s: &str) -> Result<SquareBox> {
    let bad = || SlatError::Config(format!("region '{s}' is not LO:HI"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(bad());
    }
    Ok(SquareBox::new(lo, hi))
}

fn parse_station(s: &str) -> Result<(Point2, f64)> {
    let v: Vec<f64> = s
        .split(',')
        .map(|f| f.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| SlatError::Config(format!("station '{s}' is not x,y,d")))?;
    match v.as_slice() {
        [x, y, d] => Ok((Point2::new(*x, *y), *d)),
        _ => Err(SlatError::Config(format!("station '{s}' is not x,y,d"))),
    }
}

fn read_stations(path: &Path) -> Result<Vec<(Point2, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| SlatError::Parse(e.to_string()))?;
        out.push(parse_station(&rec.iter().collect::<Vec<_>>().join(","))?);
    }
    Ok(out)
}

fn simulate(cli: &Cli, anchors: usize, sensors: usize, targets: usize, region: &str, noise: &str) -> Result<()> {
    let noise = parse_noise(noise)?;
    let s = generate_scenario(anchors, sensors, targets, parse_region(region)?, cli.seed)?;
    let r = synthesize_ranges(&s, &noise, &ObservationMask::for_scenario(&s), cli.seed.wrapping_add(1))?;
    write_file(&cli.out.join("scenario.json"), &scenario_to_json(&s)?)?;
    write_file(&cli.out.join("ranges.csv"), &ranges_to_csv(&r)?)?;
    println!("wrote {} and {}", cli.out.join("scenario.json").display(), cli.out.join("ranges.csv").display());
    Ok(())
}

fn batch(cli: &Cli, inputs: &Inputs, dump_conic: Option<&Path>, dump_edm: Option<&Path>) -> Result<()> {
    let cfg = pipeline_config(&inputs.method)?;
    let s = read_scenario(&inputs.scenario)?;
    let r = read_ranges(&inputs.ranges, &s)?;
    let mut dumps = Dumps::default();
    let want = dump_conic.is_some() || dump_edm.is_some();
    let est = slat_batch_dump(&s.anchors, &r, &cfg, want.then_some(&mut dumps))?;
    if let (Some(p), Some(text)) = (dump_conic, &dumps.conic) {
        write_file(p, text)?;
    }
    if let (Some(p), Some(text)) = (dump_edm, &dumps.edm) {
        write_file(p, text)?;
    }
    if let Some(p) = &inputs.dump_trace {
        write_file(p, &est.trace.to_csv())?;
    }
    write_file(&cli.out.join("estimate.csv"), &estimate_csv(&est.coords, s.n_sensors()))?;
    println!("method: {}", inputs.method);
    println!("initial cost: {:e}", est.init_cost);
    println!("final cost: {:e}", est.final_cost);
    println!("iterations: {} ({:?})", est.trace.costs.len() - 1, est.trace.termination);
    Ok(())
}

fn recursive(cli: &Cli, inputs: &Inputs) -> Result<()> {
    let cfg = pipeline_config(&inputs.method)?;
    let s = read_scenario(&inputs.scenario)?;
    let r = read_ranges(&inputs.ranges, &s)?;
    let m = s.n_targets();
    if m < 2 {
        return Err(SlatError::Config("the recursive step needs at least two targets".into()));
    }
    let prior_ranges = r.first_targets(m - 1)?;
    let prior = slat_batch(&s.anchors, &prior_ranges, &cfg)?;
    let new = NewTargetRanges {
        sensor: (0..s.n_sensors()).map(|i| r.sensor_target[&(i, m - 1)]).collect(),
        anchor: (0..s.n_anchors()).map(|k| r.anchor_target[&(k, m - 1)]).collect(),
    };
    let (est, _) = slat_recursive(&prior, &s.anchors, &prior_ranges, &new, &cfg)?;
    if let Some(p) = &inputs.dump_trace {
        write_file(p, &est.trace.to_csv())?;
    }
    write_file(&cli.out.join("estimate.csv"), &estimate_csv(&est.coords, s.n_sensors()))?;
    if let Some(d) = est.locate {
        println!("locate: rank-1 ratio {:e}, status {:?}, grid fallback {}", d.rank1_ratio, d.status, d.grid_fallback);
    }
    println!("initial cost: {:e}", est.init_cost);
    println!("final cost: {:e}", est.final_cost);
    Ok(())
}

fn locate(stations: &[String], file: Option<&Path>, method: &str, sigma: f64, dump_conic: Option<&Path>) -> Result<()> {
    let mut all: Vec<(Point2, f64)> = stations.iter().map(|s| parse_station(s)).collect::<Result<_>>()?;
    if let Some(f) = file {
        all.extend(read_stations(f)?);
    }
    let (centers, radii) = all.into_iter().unzip();
    let c = CircleSet::new(centers, radii)?;
    let mut dump = String::new();
    let want = dump_conic.is_some();
    let res = match method.parse::<Method>()? {
        Method::Slcp => slcp_locate_dump(&c, want.then_some(&mut dump))?,
        Method::Sll1 => sll1_locate_dump(&c, sigma, want.then_some(&mut dump))?,
        other => return Err(SlatError::Config(format!("locate supports slcp and sll1, not '{other}'"))),
    };
    if let Some(p) = dump_conic {
        write_file(p, &dump)?;
    }
    println!("position: {:?} {:?}", res.position.x, res.position.y);
    println!("rank-1 ratio: {:e}", res.rank1_ratio);
    println!("status: {:?}", res.status);
    Ok(())
}

fn crlb(scenario: &Path, sigma: f64) -> Result<()> {
    let s = read_scenario(scenario)?;
    let f = fisher_information(&s.truth(), &s.anchors, &ObservationMask::for_scenario(&s), sigma)?;
    println!("crlb: {:e}", crlb_total(&f, s.n_sensors() + s.n_targets())?);
    Ok(())
}

fn bench(cli: &Cli, experiment: &str, mc: Option<usize>, noise: &[String], methods: &[String]) -> Result<()> {
    let experiment: Experiment = experiment.parse()?;
    let mut cfg = ExperimentConfig::preset(experiment);
    cfg.seed = cli.seed;
    if let Some(k) = mc {
        cfg.runs = k;
    }
    if !noise.is_empty() {
        cfg.noise_grid = noise.iter().map(|n| parse_noise(n)).collect::<Result<_>>()?;
    }
    if !methods.is_empty() {
        cfg.methods = methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cli.out)?;
    match experiment {
        Experiment::Example2Stats => {
            let path = cli.out.join("position_stats.csv");
            write_file(&path, &position_stats_csv(&position_stats(&cfg)?))?;
            println!("wrote {}", path.display());
        }
        Experiment::Example4 => {
            let mut runs = Vec::new();
            for noise in &cfg.noise_grid {
                let mode = match noise {
                    NoiseModel::Gaussian { .. } => CostMode::Gaussian,
                    _ => CostMode::Laplacian,
                };
                for k in 0..cfg.runs {
                    let d = example4_descent(&cfg, k, noise, mode)?;
                    println!(
                        "{mode:?} seed {}: iteration 0 recursive {:e} batch {:e}; final recursive {:e} batch {:e}",
                        d.seed,
                        d.recursive.initial_cost(),
                        d.batch.initial_cost(),
                        d.recursive.final_cost(),
                        d.batch.final_cost()
                    );
                    runs.push(d);
                }
            }
            let path = cli.out.join("descent.csv");
            write_file(&path, &descent_csv(&runs))?;
            println!("wrote {}", path.display());
        }
        _ => {
            let report = run_monte_carlo(&cfg)?;
            emit_report(&report, &cli.out)?;
            print!("{}", report.to_csv()?);
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { anchors, sensors, targets, region, noise } => {
            simulate(cli, *anchors, *sensors, *targets, region, noise)
        }
        Command::Batch { inputs, dump_conic, dump_edm } => batch(cli, inputs, dump_conic.as_deref(), dump_edm.as_deref()),
        Command::Recursive { inputs } => recursive(cli, inputs),
        Command::Locate { stations, stations_file, method, sigma, dump_conic } => {
            locate(stations, stations_file.as_deref(), method, *sigma, dump_conic.as_deref())
        }
        Command::Crlb { scenario, sigma } => crlb(scenario, *sigma),
        Command::Bench { experiment, mc, noise, method } => bench(cli, experiment, *mc, noise, method),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_solver_failure() { 3 } else { 2 })
        }
    }
}
