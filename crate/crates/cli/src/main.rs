//! `terrainloc` command-line front end.
//!
//! Every command reads an optional scenario config (`--config`, TOML) whose
//! defaults reproduce the reference 4.2 km loop. Outputs are delimited text
//! plus the binary map file; all writes are atomic.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use terrainloc::fsutil::write_atomic;
use terrainloc::localizer::{estimates_to_text, RunOptions};
use terrainloc::matching::correlation_to_text;
use terrainloc::scenario::{
    build_map, localize_pass, loop_graph, run_experiment, LocalizationRun, PassData, Scenario, ScenarioConfig,
};
use terrainloc::terrain_map::{
    load_map, outcome_fraction, report_to_text, save_map, OutcomeKind, StretchReport,
};

#[derive(Parser, Debug)]
#[command(name = "terrainloc", version, about = "Terrain-based vehicle localization toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the mapping passes and one live pass.
    Simulate {
        /// Number of passes; defaults to mapping passes + 1.
        #[arg(long)]
        passes: Option<usize>,
    },
    /// Build a map from pass directories, merged in the given order.
    BuildMap {
        #[arg(required = true)]
        passes: Vec<PathBuf>,
    },
    /// Localize a live pass against a map.
    Localize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        pass: PathBuf,
        /// Dead reckoning only.
        #[arg(long)]
        disable_matching: bool,
    },
    /// Run the whole experiment in memory and report the error gates.
    Evaluate {
        #[arg(long)]
        disable_matching: bool,
    },
    /// Summarize a map file.
    InspectMap {
        map: PathBuf,
        /// Also write the master heights to `<out>/heights.csv`.
        #[arg(long)]
        dump: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
            eprintln!("error: class=usage {}", first.trim_start_matches("error: "));
            eprint!("{rest}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: class={} {e:#}", error_class(&e));
            ExitCode::FAILURE
        }
    }
}

/// Machine-readable class of the first library error in the chain.
fn error_class(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<terrainloc::Error>())
        .map_or("other", terrainloc::Error::class)
}

fn load_config(common: &Common) -> anyhow::Result<ScenarioConfig> {
    let mut config = match &common.config {
        Some(path) => ScenarioConfig::read(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    match cli.command {
        Command::Simulate { passes } => simulate(&config, out, passes),
        Command::BuildMap { passes } => cmd_build_map(&config, out, &passes),
        Command::Localize {
            map,
            pass,
            disable_matching,
        } => localize(&config, out, &map, &pass, disable_matching),
        Command::Evaluate { disable_matching } => evaluate(&config, out, disable_matching),
        Command::InspectMap { map, dump } => inspect_map(&map, dump.then_some(out)),
    }
}

fn create_out(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)
        .map_err(terrainloc::Error::from)
        .with_context(|| format!("cannot create {}", out.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn simulate(config: &ScenarioConfig, out: &Path, passes: Option<usize>) -> anyhow::Result<()> {
    let count = passes.unwrap_or(config.mapping.passes + 1);
    if count == 0 {
        bail!(terrainloc::Error::InvalidArgument("--passes must be at least 1".into()));
    }
    create_out(out)?;
    let scenario = Scenario::new(config.clone())?;
    write(&out.join("config.toml"), &config.to_toml())?;
    write(&out.join("road_left.csv"), &scenario.left.to_text())?;
    write(&out.join("road_right.csv"), &scenario.right.to_text())?;
    for i in 0..count {
        let started = Instant::now();
        let pass = scenario.simulate_pass(i as u64)?;
        let dir = out.join(format!("pass_{i}"));
        pass.write(&dir)
            .with_context(|| format!("writing {}", dir.display()))?;
        let s = &pass.streams[0];
        println!(
            "pass {i}: {} samples, {:.1} s, {} GPS fixes -> {} [{:.1} s]",
            s.len(),
            s.time.last().copied().unwrap_or(0.0),
            pass.gps.len(),
            dir.display(),
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

fn read_pass(dir: &Path) -> anyhow::Result<PassData> {
    PassData::read(dir).with_context(|| format!("reading pass {}", dir.display()))
}

fn print_report(report: &[StretchReport]) {
    let mut sources: Vec<u32> = report.iter().map(|r| r.source).collect();
    sources.dedup();
    for source in sources {
        let own: Vec<StretchReport> = report.iter().filter(|r| r.source == source).copied().collect();
        println!(
            "pass {source}: {} stretches, matched {:.1}%, bootstrap {:.1}%, quarantined {}",
            own.len(),
            100.0 * outcome_fraction(&own, OutcomeKind::Matched),
            100.0 * outcome_fraction(&own, OutcomeKind::Bootstrap),
            own.iter().filter(|r| r.kind == OutcomeKind::Quarantined).count()
        );
    }
}

fn cmd_build_map(config: &ScenarioConfig, out: &Path, dirs: &[PathBuf]) -> anyhow::Result<()> {
    let passes = dirs.iter().map(|d| read_pass(d)).collect::<anyhow::Result<Vec<_>>>()?;
    config.validate()?;
    let graph = loop_graph(&config.road)?;
    let (map, report) = build_map(&graph, &passes, config)?;
    create_out(out)?;
    let map_path = out.join("map.bin");
    save_map(&map_path, &map)?;
    write(&out.join("merge_report.csv"), &report_to_text(&report))?;
    print_report(&report);
    println!(
        "map: {} cells, coverage {:.1}% -> {}",
        map.master.cell_count(),
        100.0 * map.master.coverage(),
        map_path.display()
    );
    Ok(())
}

fn write_run(out: &Path, run: &LocalizationRun) -> anyhow::Result<()> {
    create_out(out)?;
    write(&out.join("estimates.csv"), &estimates_to_text(&run.estimates))?;
    for snap in &run.snapshots {
        let name = format!("snapshot_{:.0}.csv", snap.travel_distance);
        write(&out.join(name), &correlation_to_text(&snap.correlation, snap.window_first_cell))?;
    }
    println!(
        "{} updates, {} after buffer fill, matched {:.1}%, {} snapshots",
        run.estimates.len(),
        run.active_updates,
        100.0 * run.match_rate,
        run.snapshots.len()
    );
    if let Some(errors) = &run.errors {
        let mut samples = String::from("travel_distance,error\n");
        for (d, e) in &errors.samples {
            samples.push_str(&format!("{d},{e}\n"));
        }
        write(&out.join("errors.csv"), &samples)?;
        write(&out.join("error_cdf.csv"), &errors.cdf_to_text())?;
        println!("errors: {}", errors.summary_line());
    }
    Ok(())
}

fn localize(
    config: &ScenarioConfig,
    out: &Path,
    map_path: &Path,
    pass_dir: &Path,
    disable_matching: bool,
) -> anyhow::Result<()> {
    let map = load_map(map_path).with_context(|| format!("loading map {}", map_path.display()))?;
    let pass = read_pass(pass_dir)?;
    let options = RunOptions {
        disable_matching,
        ..RunOptions::default()
    };
    let run = localize_pass(&map, &pass, config, &options)?;
    write_run(out, &run)
}

fn evaluate(config: &ScenarioConfig, out: &Path, disable_matching: bool) -> anyhow::Result<()> {
    let options = RunOptions {
        disable_matching,
        ..RunOptions::default()
    };
    let result = run_experiment(config, &options)?;
    print_report(&result.report);
    create_out(out)?;
    write(&out.join("merge_report.csv"), &report_to_text(&result.report))?;
    write_run(out, &result.localization)?;
    if let Some(errors) = &result.localization.errors {
        let gate = |name: &str, ok: bool| println!("{name}: {}", if ok { "met" } else { "not met" });
        gate("under 1 m for at least 80% of samples", errors.fraction_below(1.0) >= 0.8);
        gate("under 0.5 m for at least 50% of samples", errors.fraction_below(0.5) >= 0.5);
    }
    Ok(())
}

fn inspect_map(path: &Path, dump_to: Option<&Path>) -> anyhow::Result<()> {
    let map = load_map(path).with_context(|| format!("loading map {}", path.display()))?;
    let master = &map.master;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "spacing {} m, {} segments, {} cells, route {:.1} m, {}",
        master.spacing(),
        master.segments().len(),
        master.cell_count(),
        map.graph.length(),
        if master.is_closed() { "closed loop" } else { "open route" }
    );
    let _ = writeln!(text, "coverage {:.2}%", 100.0 * master.coverage());
    let mut histogram = std::collections::BTreeMap::new();
    for seg in master.segments() {
        for w in &seg.weights {
            *histogram.entry(*w).or_insert(0usize) += 1;
        }
    }
    for (w, n) in &histogram {
        let _ = writeln!(text, "weight {w:>2}: {n} cells");
    }
    for seg in master.segments() {
        let _ = writeln!(
            text,
            "segment {}: cells {}..{}, anchor {:+.3} m",
            seg.segment_id,
            seg.first_cell,
            seg.first_cell + seg.len(),
            seg.anchor
        );
    }
    // A closed pipe (`| head`) is not an error worth reporting.
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    if let Some(out) = dump_to {
        create_out(out)?;
        write(&out.join("heights.csv"), &master.heights().to_text())?;
    }
    Ok(())
}
