use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use defectq::circuit::{compose_all, dump_events, GateRecord, StabilizerCircuit};
use defectq::codes::{self, CodeDef};
use defectq::decode_bench;
use defectq::decoder::Pipeline;
use defectq::lattice::{
    encodability_check, reconfigure, Lattice, LatticeFile, StabKind, StabilizerLayout,
};
use defectq::metrics::{self, Chip, ChipMetrics, ExperimentConfig, Target};
use defectq::noise::{ErrorModel, Preset};
use defectq::purification::{self, PairSource, Scheme, Source};
use defectq::rng::derive_seed;
use defectq::scheduler;

#[derive(Parser)]
#[command(
    name = "defectq",
    version,
    about = "Surface-code memory on defective lattices and Bell-pair purification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lattice generation.
    #[command(subcommand)]
    Lattice(LatticeCmd),
    /// Stabilizer circuit composition.
    #[command(subcommand)]
    Circuit(CircuitCmd),
    /// Schedule the circuits of a circuit file into a whole circuit.
    Schedule(ScheduleArgs),
    /// Monte Carlo memory experiment on a circuit file.
    Simulate(SimulateArgs),
    /// Decoder oracle-equivalence suites.
    DecodeBench(DecodeBenchArgs),
    /// Bell-pair purification table.
    Purify(PurifyArgs),
    /// Closed-form resource counts at distance d.
    Resources(ResourcesArgs),
    /// Tableau traces for injection, surgery, cat states and teleportation.
    VerifyAlgebra,
    /// Chip metrics and logical rates for lattice files.
    Metrics(MetricsArgs),
    /// Correlate chip metrics with the logical X rate.
    Correlate(CorrelateArgs),
    /// Run a JSON experiment config.
    Run(RunArgs),
}

#[derive(Subcommand)]
enum LatticeCmd {
    /// Draw lattices at a given yield and write one JSON file per lattice.
    Gen {
        #[arg(long)]
        d: usize,
        #[arg(long = "yield", default_value_t = 1.0)]
        yield_: f64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CircuitCmd {
    /// Reconfigure a lattice and compose one circuit per stabilizer.
    Build {
        #[arg(long)]
        lattice: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    circuits: PathBuf,
    #[arg(long)]
    steps: usize,
    /// Write the whole-circuit dump here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include idle slots in the dump.
    #[arg(long)]
    waits: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Preset::Lattice)]
    preset: Preset,
}

#[derive(Args)]
struct DecodeBenchArgs {
    /// Distance of the perfect lattice for the single-fault sweep.
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 8)]
    max_events: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write both detector graphs as JSON here.
    #[arg(long)]
    dump_nest: Option<PathBuf>,
}

#[derive(Args)]
struct PurifyArgs {
    #[arg(long, value_enum)]
    scheme: Scheme,
    #[arg(long = "code-a", alias = "codeA", default_value = "physical")]
    code_a: String,
    #[arg(long = "code-b", alias = "codeB", default_value = "physical")]
    code_b: String,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 4)]
    rounds: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, value_enum, default_value_t = Source::Optical)]
    source: Source,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ResourcesArgs {
    #[arg(long)]
    d: i64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// Lattice files.
    #[arg(required = true)]
    lattices: Vec<PathBuf>,
    /// Error probabilities to simulate; none gives static metrics only.
    #[arg(long, value_delimiter = ',')]
    p: Vec<f64>,
    #[arg(long, default_value_t = 20_000)]
    cycles: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelateArgs {
    /// JSON list of chip metrics, as written by `metrics --out`.
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long, value_enum, default_value_t = Target::Log)]
    target: Target,
    #[arg(long, default_value_t = 0.002)]
    p: f64,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
}

/// Lattice plus the composed circuit of every stabilizer.
#[derive(Serialize, Deserialize)]
struct CircuitFile {
    lattice: LatticeFile,
    circuits: Vec<CircuitView>,
}

#[derive(Serialize, Deserialize)]
struct CircuitView {
    stabilizer_id: usize,
    kind: StabKind,
    depth: usize,
    gates: Vec<GateRecord>,
    compiled: StabilizerCircuit,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_circuits(path: &Path) -> Result<(StabilizerLayout, Vec<StabilizerCircuit>)> {
    let f: CircuitFile = read_json(path)?;
    let layout = reconfigure(&Lattice::from_file(&f.lattice)?);
    Ok((layout, f.circuits.into_iter().map(|c| c.compiled).collect()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Lattice(LatticeCmd::Gen {
            d,
            yield_,
            count,
            seed,
            out,
        }) => {
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let perfect = Lattice::generate_perfect(d)?;
            for i in 0..count {
                let l = if yield_ >= 1.0 {
                    perfect.clone()
                } else {
                    perfect.apply_yield(yield_, derive_seed(seed, d as u64, i as u64))?
                };
                let path = out.join(format!("lattice_d{d}_{i:04}.json"));
                write_json(&path, &l.to_file())?;
                let enc = encodability_check(&reconfigure(&l));
                println!(
                    "{}\tfaulty={}\tencodable={}\treduced_distance={}",
                    path.display(),
                    l.faulty_sites().len(),
                    enc.encodable,
                    enc.reduced_distance()
                );
            }
        }
        Command::Circuit(CircuitCmd::Build { lattice, out }) => {
            let file: LatticeFile = read_json(&lattice)?;
            let layout = reconfigure(&Lattice::from_file(&file)?);
            let circuits = compose_all(&layout)?;
            let views: Vec<CircuitView> = circuits
                .into_iter()
                .map(|c| CircuitView {
                    stabilizer_id: c.stabilizer_id,
                    kind: c.kind,
                    depth: c.depth,
                    gates: dump_events(&c),
                    compiled: c,
                })
                .collect();
            println!(
                "{} stabilizer circuits, deepest {}",
                views.len(),
                views.iter().map(|v| v.depth).max().unwrap_or(0)
            );
            write_json(
                &out,
                &CircuitFile {
                    lattice: file,
                    circuits: views,
                },
            )?;
        }
        Command::Schedule(a) => {
            let (layout, circuits) = load_circuits(&a.circuits)?;
            let w = scheduler::schedule(&layout, &circuits, a.steps)?;
            scheduler::verify_whole_circuit(&w, &layout)?;
            println!("horizon\t{}", w.horizon);
            println!(
                "error_correction_cycle\t{}",
                scheduler::error_correction_cycle(&w)
            );
            println!(
                "mean_error_correction_cycle\t{:.4}",
                scheduler::mean_ec_cycle(&w)
            );
            println!(
                "z_measurements_per_step\t{:.4}",
                scheduler::z_throughput(&w)
            );
            if let Some(out) = a.out {
                write_json(&out, &scheduler::dump(&w, a.waits))?;
            }
        }
        Command::Simulate(a) => {
            let (layout, circuits) = load_circuits(&a.circuit)?;
            let chip = Chip::assemble(layout, circuits)?;
            let m = ErrorModel::preset(a.preset, a.p)?;
            let r = metrics::simulate_model(&chip, &m, a.trials, a.seed)?;
            let (x, xe) = r.x_per_cycle();
            let (z, ze) = r.z_per_cycle();
            println!("p\t{:.4e}", r.p);
            println!("trials\t{}", r.trials);
            println!("cycles\t{:.1}", r.cycles());
            println!("x_failures\t{}", r.x_failures);
            println!("z_failures\t{}", r.z_failures);
            println!("x_per_cycle\t{x:.4e}\t{xe:.4e}");
            println!("z_per_cycle\t{z:.4e}\t{ze:.4e}");
        }
        Command::DecodeBench(a) => {
            let chip = Chip::build(&Lattice::generate_perfect(a.d)?)?;
            let pipe = Pipeline::new(&chip.whole, &chip.layout, &ErrorModel::lattice(0.0)?)?;
            let sweep = decode_bench::single_fault_sweep(&pipe)?;
            let matching = decode_bench::matching_oracle_bench(a.instances, a.max_events, a.seed)?;
            let boundary = decode_bench::boundary_miscorrection_scenario()?;
            let ok = [
                sweep.logical_failures == 0,
                matching.agreements == matching.instances,
                boundary.matched_to_boundary && boundary.logical_failure,
            ];
            let tag = |b: bool| if b { "PASS" } else { "FAIL" };
            println!(
                "{}\tsingle-fault sweep d={}: {} faults, {} logical failures",
                tag(ok[0]),
                a.d,
                sweep.faults,
                sweep.logical_failures
            );
            println!(
                "{}\tblossom vs exhaustive: {}/{} agree ({} infeasible)",
                tag(ok[1]),
                matching.agreements,
                matching.instances,
                matching.infeasible
            );
            println!(
                "{}\tboundary scenario: between {:.0}, to boundary {:.0}/{:.0}, matched to boundary {}, logical failure {}",
                tag(ok[2]),
                boundary.distance_between,
                boundary.distance_to_boundary.0,
                boundary.distance_to_boundary.1,
                boundary.matched_to_boundary,
                boundary.logical_failure
            );
            if let Some(path) = a.dump_nest {
                write_json(&path, &[pipe.nest.z.dump(), pipe.nest.x.dump()])?;
            }
            if !ok.iter().all(|&b| b) {
                bail!("decoder bench failed");
            }
        }
        Command::Purify(a) => {
            let ca = CodeDef::by_name(&a.code_a)?;
            let cb = CodeDef::by_name(&a.code_b)?;
            let source = match a.source {
                Source::Optical => PairSource::optical(),
                Source::Local => PairSource::local(),
            };
            let rows = purification::run_table(
                a.scheme, &ca, &cb, &source, a.p, a.rounds, a.trials, a.seed,
            )?;
            print!("{}", purification::table_csv(&rows));
            if let Some(path) = a.csv {
                purification::write_table_csv(&path, &rows)?;
            }
        }
        Command::Resources(a) => {
            let r = codes::resource_formulas(a.d)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                let v = serde_json::to_value(&r)?;
                for (k, val) in v.as_object().into_iter().flatten() {
                    let shown = match val.as_array() {
                        Some(nd) if nd.len() == 2 => format!("{}/{}", nd[0], nd[1]),
                        _ => val.to_string(),
                    };
                    println!("{k}\t{shown}");
                }
            }
        }
        Command::VerifyAlgebra => {
            let traces = [
                codes::verify_state_injection_trace()?,
                codes::verify_lattice_surgery_cnot_trace()?,
                codes::verify_zz_teleportation_trace()?,
            ];
            let mut all = true;
            for t in &traces {
                for s in &t.steps {
                    println!(
                        "{}\t{}\t{}",
                        if s.ok { "ok" } else { "FAIL" },
                        t.name,
                        s.label
                    );
                }
                all &= t.passed();
            }
            for n in 2..=5 {
                let c = codes::cat_state_check(n, 5)?;
                let ok = c.stabilizers_ok && c.z_flips_parity;
                println!(
                    "{}\tcat state n={n}\tbranches {}, preparation depth {}, check cycle depth {}",
                    if ok { "ok" } else { "FAIL" },
                    c.branches_checked,
                    c.preparation_depth,
                    c.check_cycle_depth
                );
                all &= ok;
            }
            for name in ["steane", "surface3"] {
                let ok = CodeDef::by_name(name)?.verify_encoder()?;
                println!("{}\tencoder {name}", if ok { "ok" } else { "FAIL" });
                all &= ok;
            }
            if !all {
                bail!("algebra verification failed");
            }
        }
        Command::Metrics(a) => {
            let mut out: Vec<ChipMetrics> = Vec::new();
            for (i, path) in a.lattices.iter().enumerate() {
                let l = Lattice::from_file(&read_json::<LatticeFile>(path)?)?;
                let chip = match Chip::build(&l) {
                    Ok(c) => c,
                    Err(e) => {
                        eprintln!("{}: skipped ({e})", path.display());
                        continue;
                    }
                };
                let mut m = metrics::compute_metrics(&chip)?;
                let trials = metrics::trials_for_cycles(&chip, a.cycles);
                for &p in &a.p {
                    m.rates.push(metrics::simulate(
                        &chip,
                        p,
                        trials,
                        derive_seed(a.seed, i as u64, 0),
                    )?);
                }
                println!("{}", path.display());
                for (k, v) in m.columns() {
                    println!("  {k}\t{v}");
                }
                for r in &m.rates {
                    let (x, se) = r.x_per_cycle();
                    println!("  X per cycle at p={:.3e}\t{x:.4e}\t{se:.4e}", r.p);
                }
                out.push(m);
            }
            if let Some(path) = a.out {
                write_json(&path, &out)?;
            }
        }
        Command::Correlate(a) => {
            let ensemble: Vec<ChipMetrics> = read_json(&a.metrics)?;
            for c in metrics::correlate(&ensemble, a.target, a.p)? {
                match c.r {
                    Some(r) => println!("{}\t{r:.4}", c.metric),
                    None => println!("{}\t-", c.metric),
                }
            }
        }
        Command::Run(a) => {
            let cfg = ExperimentConfig::from_file(&a.config)?;
            let m = metrics::run_experiment(&cfg)?;
            for f in &m.files {
                println!("{}", f.display());
            }
            println!("runtime {:.1} s", m.runtime_seconds);
        }
    }
    Ok(())
}
