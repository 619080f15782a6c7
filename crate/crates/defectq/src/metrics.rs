//! Chip-quality metrics, logical-rate simulation, correlation, culling and experiment runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::circuit::{circuit_kdq, circuit_kq, compose_all, StabilizerCircuit};
use crate::decoder::Pipeline;
use crate::error::{Error, Result};
use crate::lattice::{encodability_check, reconfigure, Lattice, StabKind, StabilizerLayout};
use crate::noise::ErrorModel;
use crate::purification::{self, PairSource, Scheme, Source};
use crate::rng::{derive_seed, stream};
use crate::scheduler::{
    cycle_of, default_horizon, error_correction_cycle, mean_ec_cycle, schedule, z_throughput,
    WholeCircuit,
};

/// Default physical error rate for ranking and culling chips.
pub const REFERENCE_P: f64 = 0.002;
/// Trials per parallel work item.
const CHUNK: u64 = 256;

/// A lattice with its merged layout, stabilizer circuits and whole circuit.
#[derive(Clone, Debug)]
pub struct Chip {
    pub layout: StabilizerLayout,
    pub circuits: Vec<StabilizerCircuit>,
    pub whole: WholeCircuit,
}

impl Chip {
    /// Reconfigures and schedules a lattice with room for `d + 2` error-correction cycles.
    pub fn build(l: &Lattice) -> Result<Chip> {
        let layout = reconfigure(l);
        let enc = encodability_check(&layout);
        if !enc.encodable {
            return Err(Error::InvalidParameter("lattice is not encodable".into()));
        }
        let circuits = compose_all(&layout)?;
        Self::assemble(layout, circuits)
    }

    /// Schedules already composed circuits with the same horizon rule as [`Chip::build`].
    pub fn assemble(layout: StabilizerLayout, circuits: Vec<StabilizerCircuit>) -> Result<Chip> {
        let d = layout.lattice.distance();
        let mut horizon = default_horizon(d, 8);
        let mut whole = loop {
            match schedule(&layout, &circuits, horizon) {
                Ok(w) => break w,
                Err(Error::Horizon(_)) if horizon < 64 * default_horizon(d, 8) => horizon *= 2,
                Err(e) => return Err(e),
            }
        };
        let needed = default_horizon(d, error_correction_cycle(&whole));
        if needed > horizon {
            whole = schedule(&layout, &circuits, needed)?;
        }
        Ok(Chip {
            layout,
            circuits,
            whole,
        })
    }

    pub fn distance(&self) -> usize {
        self.layout.lattice.distance()
    }
}

/// Named single-fault positions on the (2d−1)² grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FaultSite {
    Center,
    /// Middle row, second data column from the west edge.
    West,
    /// Second data row and column from the northwest corner.
    Northwest,
}

impl FaultSite {
    pub fn site(self, l: &Lattice) -> usize {
        let mid = l.size() / 2;
        match self {
            FaultSite::Center => l.center(),
            FaultSite::West => l.site(mid, 2),
            FaultSite::Northwest => l.site(2, 2),
        }
    }
}

pub fn single_fault_lattice(d: usize, at: FaultSite) -> Result<Lattice> {
    let l = Lattice::generate_perfect(d)?;
    let s = at.site(&l);
    Ok(l.with_faults(&[s]))
}

/// Logical failure counts at one physical error rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub p: f64,
    pub trials: u64,
    pub x_failures: u64,
    pub z_failures: u64,
    /// Error-correction cycles per trial.
    pub cycles_per_trial: f64,
}

impl RatePoint {
    pub fn cycles(&self) -> f64 {
        self.trials as f64 * self.cycles_per_trial
    }

    fn per_cycle(&self, failures: f64) -> (f64, f64) {
        let n = self.trials.max(1) as f64;
        let pf = failures / n;
        let t = self.cycles_per_trial.max(1.0);
        let rate = 1.0 - (1.0 - pf).powf(1.0 / t);
        let se_p = (pf * (1.0 - pf) / n).sqrt();
        let deriv = (1.0 - pf).max(1e-300).powf(1.0 / t - 1.0) / t;
        (rate, se_p * deriv)
    }

    /// Per-cycle logical X rate and its standard error.
    pub fn x_per_cycle(&self) -> (f64, f64) {
        self.per_cycle(self.x_failures as f64)
    }

    /// As `x_per_cycle`, with zero failures counted as half a failure so that ensemble
    /// geometric means stay finite.
    pub fn x_per_cycle_floored(&self) -> (f64, f64) {
        let f = (self.x_failures as f64).max(0.5);
        let (r, _) = self.per_cycle(f);
        let (_, se) = self.per_cycle(f.max(1.0));
        (r, se)
    }

    pub fn z_per_cycle(&self) -> (f64, f64) {
        self.per_cycle(self.z_failures as f64)
    }
}

/// Monte Carlo memory experiment over the chip's whole circuit.
pub fn simulate(chip: &Chip, p: f64, trials: u64, seed: u64) -> Result<RatePoint> {
    simulate_model(chip, &ErrorModel::lattice(p)?, trials, seed)
}

pub fn simulate_model(chip: &Chip, m: &ErrorModel, trials: u64, seed: u64) -> Result<RatePoint> {
    let p = m.p;
    let pipe = Pipeline::new(&chip.whole, &chip.layout, m)?;
    let chunks = trials.div_ceil(CHUNK);
    let pool = crate::parallel::worker_pool()?;
    let counts = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|ci| -> Result<(u64, u64)> {
                let mut rng = stream(seed, p.to_bits(), ci);
                let (mut x, mut z) = (0, 0);
                for _ in ci * CHUNK..((ci + 1) * CHUNK).min(trials) {
                    let o = pipe.run(&mut rng)?;
                    x += o.x_error as u64;
                    z += o.z_error as u64;
                }
                Ok((x, z))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let (x, z) = counts
        .into_iter()
        .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(RatePoint {
        p,
        trials,
        x_failures: x,
        z_failures: z,
        cycles_per_trial: chip.whole.horizon as f64 / mean_ec_cycle(&chip.whole),
    })
}

/// Trials needed for at least `min_cycles` correction cycles.
pub fn trials_for_cycles(chip: &Chip, min_cycles: u64) -> u64 {
    let per = chip.whole.horizon as f64 / mean_ec_cycle(&chip.whole);
    (min_cycles as f64 / per).ceil().max(1.0) as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChipMetrics {
    pub distance: usize,
    pub seed: Option<u64>,
    pub stabs: usize,
    pub faulty: usize,
    pub faulty_data: usize,
    pub faulty_ancilla: usize,
    pub reduced_distance: usize,
    pub z_stabs: usize,
    pub biggest_z_qubits: usize,
    pub average_z_qubits: f64,
    pub biggest_z_dataq: usize,
    /// Sum of data qubits over Z stabilizers; the average is this over `z_stabs`.
    pub z_dataq_total: usize,
    pub average_z_dataq: f64,
    pub deepest_z_depth: usize,
    pub average_z_depth: f64,
    pub biggest_z_kq: usize,
    pub average_z_kq: f64,
    pub biggest_z_kdq: usize,
    pub average_z_kdq: f64,
    pub biggest_z_cycle: f64,
    pub average_z_cycle: f64,
    pub biggest_z_cq: f64,
    pub average_z_cq: f64,
    pub biggest_z_cdq: f64,
    pub average_z_cdq: f64,
    pub z_measurements_per_step: f64,
    pub ec_cycle: f64,
    pub rates: Vec<RatePoint>,
}

fn max_mean<T: Copy + Into<f64>>(v: &[T]) -> (f64, f64) {
    let f: Vec<f64> = v.iter().map(|&x| x.into()).collect();
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (max, f.iter().sum::<f64>() / f.len().max(1) as f64)
}

/// Static and schedule metrics; Z stabilizers only where the column names say so.
pub fn compute_metrics(chip: &Chip) -> Result<ChipMetrics> {
    let layout = &chip.layout;
    let l = &layout.lattice;
    let faulty = l.faulty_sites();
    let faulty_data = faulty.iter().filter(|&&s| l.is_data(s)).count();
    let z: Vec<&StabilizerCircuit> = chip
        .circuits
        .iter()
        .filter(|c| c.kind == StabKind::Z)
        .collect();
    let qubits: Vec<u32> = z.iter().map(|c| c.qubits_touched().len() as u32).collect();
    let dataq: Vec<u32> = z.iter().map(|c| c.data_members.len() as u32).collect();
    let depth: Vec<u32> = z.iter().map(|c| c.depth as u32).collect();
    let kq: Vec<u32> = z.iter().map(|c| circuit_kq(c) as u32).collect();
    let kdq: Vec<u32> = z.iter().map(|c| circuit_kdq(c, layout) as u32).collect();
    let cycles: Vec<f64> = z
        .iter()
        .map(|c| cycle_of(&chip.whole, c.stabilizer_id))
        .collect::<Result<_>>()?;
    let cq: Vec<f64> = cycles
        .iter()
        .zip(&qubits)
        .map(|(c, &q)| c * q as f64)
        .collect();
    let cdq: Vec<f64> = cycles
        .iter()
        .zip(&dataq)
        .map(|(c, &q)| c * q as f64)
        .collect();
    let (bq, aq) = max_mean(&qubits);
    let (bd, ad) = max_mean(&depth);
    let (bkq, akq) = max_mean(&kq);
    let (bkdq, akdq) = max_mean(&kdq);
    let (bc, ac) = max_mean(&cycles);
    let (bcq, acq) = max_mean(&cq);
    let (bcdq, acdq) = max_mean(&cdq);
    let total: usize = dataq.iter().map(|&d| d as usize).sum();
    Ok(ChipMetrics {
        distance: l.distance(),
        seed: l.seed(),
        stabs: layout.stabilizers.len(),
        faulty: faulty.len(),
        faulty_data,
        faulty_ancilla: faulty.len() - faulty_data,
        reduced_distance: encodability_check(layout).reduced_distance(),
        z_stabs: z.len(),
        biggest_z_qubits: bq as usize,
        average_z_qubits: aq,
        biggest_z_dataq: dataq.iter().copied().max().unwrap_or(0) as usize,
        z_dataq_total: total,
        average_z_dataq: total as f64 / z.len().max(1) as f64,
        deepest_z_depth: bd as usize,
        average_z_depth: ad,
        biggest_z_kq: bkq as usize,
        average_z_kq: akq,
        biggest_z_kdq: bkdq as usize,
        average_z_kdq: akdq,
        biggest_z_cycle: bc,
        average_z_cycle: ac,
        biggest_z_cq: bcq,
        average_z_cq: acq,
        biggest_z_cdq: bcdq,
        average_z_cdq: acdq,
        z_measurements_per_step: z_throughput(&chip.whole),
        ec_cycle: mean_ec_cycle(&chip.whole),
        rates: Vec::new(),
    })
}

impl ChipMetrics {
    /// Candidate quality factors, by column name.
    pub fn columns(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("#stabs", self.stabs as f64),
            ("#faulty", self.faulty as f64),
            ("#faulty data", self.faulty_data as f64),
            ("#faulty ancilla", self.faulty_ancilla as f64),
            ("reduced distance", self.reduced_distance as f64),
            ("#Z stabs", self.z_stabs as f64),
            ("biggest #qubit of Z stabs", self.biggest_z_qubits as f64),
            ("ave #qubit of Z stabs", self.average_z_qubits),
            ("biggest #dataq of Z stabs", self.biggest_z_dataq as f64),
            ("ave #dataq of Z stabs", self.average_z_dataq),
            ("deepest depth of Z stabs", self.deepest_z_depth as f64),
            ("ave depth of Z stabs", self.average_z_depth),
            ("biggest KQ of Z stabs", self.biggest_z_kq as f64),
            ("ave KQ of Z stabs", self.average_z_kq),
            ("biggest KDQ of Z stabs", self.biggest_z_kdq as f64),
            ("ave KDQ of Z stabs", self.average_z_kdq),
            ("biggest Z cycle", self.biggest_z_cycle),
            ("ave Z cycle", self.average_z_cycle),
            ("biggest CQ of Z stabs", self.biggest_z_cq),
            ("ave CQ of Z stabs", self.average_z_cq),
            ("biggest CDQ of Z stabs", self.biggest_z_cdq),
            ("ave CDQ of Z stabs", self.average_z_cdq),
            (
                "ave #Z stab measurements per step",
                self.z_measurements_per_step,
            ),
        ]
    }

    pub fn rate_at(&self, p: f64) -> Option<&RatePoint> {
        self.rates
            .iter()
            .find(|r| (r.p - p).abs() <= 1e-12 * p.max(1.0))
    }
}

pub fn pearson(xs: &[f64], ys: &[f64], name: &str) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(xs.len(), ys.len()));
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance(name.to_string()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Against the per-cycle logical X rate.
    Linear,
    /// Against its natural logarithm.
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub metric: String,
    /// `None` when the metric or the target has zero variance.
    pub r: Option<f64>,
}

/// Pearson correlation of every metric with the X rate at `p`.
pub fn correlate(ensemble: &[ChipMetrics], target: Target, p: f64) -> Result<Vec<Correlation>> {
    if ensemble.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 lattices, got {}",
            ensemble.len()
        )));
    }
    let mut ys = Vec::with_capacity(ensemble.len());
    for m in ensemble {
        let r = m
            .rate_at(p)
            .ok_or_else(|| Error::InvalidParameter(format!("no simulated rate at p = {p}")))?;
        let x = r.x_per_cycle_floored().0;
        ys.push(match target {
            Target::Linear => x,
            Target::Log => x.max(f64::MIN_POSITIVE).ln(),
        });
    }
    let names: Vec<&str> = ensemble[0].columns().iter().map(|c| c.0).collect();
    Ok(names
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let xs: Vec<f64> = ensemble.iter().map(|m| m.columns()[i].1).collect();
            Correlation {
                metric: name.to_string(),
                r: pearson(&xs, &ys, name).ok(),
            }
        })
        .collect())
}

/// Keeps the best chips after dropping `fraction` of the originally generated count;
/// unencodable chips count among the generated ones and are dropped first.
pub fn cull(
    ensemble: &[ChipMetrics],
    generated: usize,
    fraction: f64,
    reference_p: f64,
) -> Result<Vec<ChipMetrics>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "cull fraction {fraction} outside [0, 1)"
        )));
    }
    let drop = (fraction * generated as f64 + 1e-9).floor() as usize;
    let keep = generated.saturating_sub(drop).min(ensemble.len());
    let mut ranked: Vec<(f64, &ChipMetrics)> = ensemble
        .iter()
        .map(|m| {
            let r = m.rate_at(reference_p).ok_or_else(|| {
                Error::InvalidParameter(format!("no simulated rate at p = {reference_p}"))
            })?;
            Ok((r.x_per_cycle_floored().0, m))
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ranked
        .into_iter()
        .take(keep)
        .map(|(_, m)| m.clone())
        .collect())
}

/// Geometric mean and the standard error of the geometric mean (delta method).
pub fn geometric_mean(values: &[(f64, f64)]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().any(|v| v.0 <= 0.0) {
        return (0.0, 0.0);
    }
    let k = values.len() as f64;
    let g = (values.iter().map(|v| v.0.ln()).sum::<f64>() / k).exp();
    let var_ln: f64 = values.iter().map(|v| (v.1 / v.0).powi(2)).sum::<f64>() / (k * k);
    (g, g * var_ln.sqrt())
}

/// X per-cycle rates of an ensemble at `p`, with standard errors; zero counts floored.
pub fn x_rates(ensemble: &[ChipMetrics], p: f64) -> Vec<(f64, f64)> {
    ensemble
        .iter()
        .filter_map(|m| m.rate_at(p))
        .map(|r| r.x_per_cycle_floored())
        .collect()
}

/// Lattices at yield `y`, each simulated at every p when encodable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub distance: usize,
    pub yield_: f64,
    pub generated: usize,
    pub seeds: Vec<u64>,
    pub encodable: Vec<ChipMetrics>,
}

impl Ensemble {
    pub fn encodable_fraction(&self) -> f64 {
        self.encodable.len() as f64 / self.generated.max(1) as f64
    }
}

pub fn random_ensemble(
    d: usize,
    y: f64,
    lattices: usize,
    ps: &[f64],
    min_cycles: u64,
    seed: u64,
) -> Result<Ensemble> {
    let perfect = Lattice::generate_perfect(d)?;
    let seeds: Vec<u64> = (0..lattices as u64)
        .map(|i| derive_seed(seed, d as u64, i))
        .collect();
    let mut encodable = Vec::new();
    for &s in &seeds {
        let l = perfect.apply_yield(y, s)?;
        let chip = match Chip::build(&l) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let mut m = compute_metrics(&chip)?;
        for &p in ps {
            let trials = trials_for_cycles(&chip, min_cycles);
            m.rates.push(simulate(&chip, p, trials, s)?);
        }
        encodable.push(m);
    }
    Ok(Ensemble {
        distance: d,
        yield_: y,
        generated: lattices,
        seeds,
        encodable,
    })
}

/// Per-cycle X rates of perfect lattices over a p grid.
pub fn perfect_sweep(
    ds: &[usize],
    ps: &[f64],
    min_cycles: u64,
    seed: u64,
) -> Result<Vec<(usize, RatePoint)>> {
    let mut out = Vec::new();
    for &d in ds {
        let chip = Chip::build(&Lattice::generate_perfect(d)?)?;
        let trials = trials_for_cycles(&chip, min_cycles);
        for &p in ps {
            out.push((
                d,
                simulate(&chip, p, trials, derive_seed(seed, d as u64, 0))?,
            ));
        }
    }
    Ok(out)
}

/// First p at which the larger distance stops beating the smaller one, by log-log
/// interpolation of the rate ratio between neighbouring grid points.
pub fn crossing(small: &[RatePoint], large: &[RatePoint]) -> Option<f64> {
    let ratio = |a: &RatePoint, b: &RatePoint| {
        let (ra, rb) = (a.x_per_cycle().0, b.x_per_cycle().0);
        (rb.max(1e-12) / ra.max(1e-12)).ln()
    };
    for i in 1..small.len().min(large.len()) {
        let (r0, r1) = (
            ratio(&small[i - 1], &large[i - 1]),
            ratio(&small[i], &large[i]),
        );
        if r0 < 0.0 && r1 >= 0.0 {
            let (l0, l1) = (small[i - 1].p.ln(), small[i].p.ln());
            return Some((l0 + (l1 - l0) * (-r0) / (r1 - r0)).exp());
        }
    }
    None
}

fn sci4(x: f64) -> f64 {
    format!("{x:.3e}").parse().expect("formatted float")
}

fn ser_sci<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{x:.3e}"))
}

/// One row of a memory-experiment CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub lattice: String,
    pub distance: usize,
    #[serde(serialize_with = "ser_sci")]
    pub p: f64,
    #[serde(serialize_with = "ser_sci")]
    pub logical_x_rate: f64,
    #[serde(serialize_with = "ser_sci")]
    pub stderr: f64,
    #[serde(serialize_with = "ser_sci")]
    pub logical_z_rate: f64,
    pub trials: u64,
    pub cycles: u64,
}

impl RateRecord {
    pub fn new(lattice: &str, d: usize, r: &RatePoint) -> Self {
        let (x, se) = r.x_per_cycle();
        RateRecord {
            lattice: lattice.to_string(),
            distance: d,
            p: sci4(r.p),
            logical_x_rate: sci4(x),
            stderr: sci4(se),
            logical_z_rate: sci4(r.z_per_cycle().0),
            trials: r.trials,
            cycles: r.cycles().round() as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CullRecord {
    pub fraction: f64,
    pub kept: usize,
    #[serde(serialize_with = "ser_sci")]
    pub geometric_mean: f64,
    #[serde(serialize_with = "ser_sci")]
    pub stderr: f64,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("{}: {e}", path.display()))
}

pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| io_err(path, e)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Perfect,
    SingleFault,
    Random,
    Purification,
}

fn default_min_cycles() -> u64 {
    20_000
}

fn default_reference_p() -> f64 {
    REFERENCE_P
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurificationConfig {
    pub scheme: Scheme,
    pub code_a: String,
    pub code_b: String,
    pub source: Source,
    pub max_rounds: usize,
    pub trials: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub distances: Vec<usize>,
    #[serde(default)]
    pub p_grid: Vec<f64>,
    #[serde(default = "default_min_cycles")]
    pub min_cycles: u64,
    #[serde(default)]
    pub fault_sites: Vec<FaultSite>,
    #[serde(default, rename = "yield")]
    pub yield_: Option<f64>,
    #[serde(default)]
    pub lattices: usize,
    #[serde(default)]
    pub cull_fractions: Vec<f64>,
    #[serde(default = "default_reference_p")]
    pub reference_p: f64,
    #[serde(default)]
    pub purification: Option<PurificationConfig>,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(path, e))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub files: Vec<PathBuf>,
    pub runtime_seconds: f64,
}

/// Runs one experiment and writes its CSVs plus `<name>.manifest.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Manifest> {
    let start = Instant::now();
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    let file = |suffix: &str| cfg.output_dir.join(format!("{}{suffix}", cfg.name));
    let mut files = Vec::new();
    match cfg.kind {
        ExperimentKind::Perfect => {
            let rows: Vec<RateRecord> =
                perfect_sweep(&cfg.distances, &cfg.p_grid, cfg.min_cycles, cfg.seed)?
                    .iter()
                    .map(|(d, r)| RateRecord::new("perfect", *d, r))
                    .collect();
            let path = file(".csv");
            write_records(&path, &rows)?;
            files.push(path);
        }
        ExperimentKind::SingleFault => {
            let mut rows = Vec::new();
            for &site in &cfg.fault_sites {
                for &d in &cfg.distances {
                    let chip = Chip::build(&single_fault_lattice(d, site)?)?;
                    let trials = trials_for_cycles(&chip, cfg.min_cycles);
                    let name = serde_json::to_value(site)
                        .expect("enum")
                        .as_str()
                        .unwrap_or("")
                        .to_string();
                    for &p in &cfg.p_grid {
                        let r = simulate(
                            &chip,
                            p,
                            trials,
                            derive_seed(cfg.seed, d as u64, site as u64),
                        )?;
                        rows.push(RateRecord::new(&name, d, &r));
                    }
                }
            }
            let path = file(".csv");
            write_records(&path, &rows)?;
            files.push(path);
        }
        ExperimentKind::Random => {
            let y = cfg
                .yield_
                .ok_or_else(|| Error::InvalidParameter("random experiment needs a yield".into()))?;
            let mut rates = Vec::new();
            let mut metrics = Vec::new();
            let mut culls = Vec::new();
            for &d in &cfg.distances {
                let mut ps = cfg.p_grid.clone();
                if !ps.contains(&cfg.reference_p) {
                    ps.push(cfg.reference_p);
                }
                let ens = random_ensemble(d, y, cfg.lattices, &ps, cfg.min_cycles, cfg.seed)?;
                for m in &ens.encodable {
                    let name = format!("seed-{}", m.seed.unwrap_or(0));
                    rates.extend(m.rates.iter().map(|r| RateRecord::new(&name, d, r)));
                    metrics.push(m.clone());
                }
                for &f in &cfg.cull_fractions {
                    let kept = cull(&ens.encodable, ens.generated, f, cfg.reference_p)?;
                    let (g, se) = geometric_mean(&x_rates(&kept, cfg.reference_p));
                    culls.push(CullRecord {
                        fraction: f,
                        kept: kept.len(),
                        geometric_mean: sci4(g),
                        stderr: sci4(se),
                    });
                }
            }
            let path = file(".csv");
            write_records(&path, &rates)?;
            files.push(path);
            let path = file("_cull.csv");
            write_records(&path, &culls)?;
            files.push(path);
            let path = file("_metrics.json");
            std::fs::write(
                &path,
                serde_json::to_string_pretty(&metrics).expect("serialisable"),
            )
            .map_err(|e| io_err(&path, e))?;
            files.push(path);
        }
        ExperimentKind::Purification => {
            let pc = cfg.purification.as_ref().ok_or_else(|| {
                Error::InvalidParameter("purification experiment needs a purification block".into())
            })?;
            let a = crate::codes::CodeDef::by_name(&pc.code_a)?;
            let b = crate::codes::CodeDef::by_name(&pc.code_b)?;
            let source = match pc.source {
                Source::Optical => PairSource::optical(),
                Source::Local => PairSource::local(),
            };
            for &p in &cfg.p_grid {
                let rows = purification::run_table(
                    pc.scheme,
                    &a,
                    &b,
                    &source,
                    p,
                    pc.max_rounds,
                    pc.trials,
                    cfg.seed,
                )?;
                let path = file(&format!("_p{p:e}.csv"));
                purification::write_table_csv(&path, &rows)?;
                files.push(path);
            }
        }
    }
    let manifest = Manifest {
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        files,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    let path = file(".manifest.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).expect("serialisable"),
    )
    .map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_fault_metrics() {
        let chip = Chip::build(&single_fault_lattice(5, FaultSite::Center).unwrap()).unwrap();
        let m = compute_metrics(&chip).unwrap();
        assert_eq!(
            (
                m.stabs,
                m.z_stabs,
                m.biggest_z_dataq,
                m.z_dataq_total,
                m.reduced_distance
            ),
            (38, 19, 6, 70, 4)
        );
        assert_eq!((m.faulty, m.faulty_data), (1, 1));
    }

    #[test]
    fn perfect_metrics() {
        let chip = Chip::build(&Lattice::generate_perfect(5).unwrap()).unwrap();
        let m = compute_metrics(&chip).unwrap();
        assert_eq!((m.biggest_z_dataq, m.reduced_distance, m.stabs), (4, 5, 40));
        assert!((m.ec_cycle - 8.0).abs() < 0.2);
    }

    #[test]
    fn side_faults_match_center_counts() {
        for site in [FaultSite::West, FaultSite::Northwest] {
            let chip = Chip::build(&single_fault_lattice(5, site).unwrap()).unwrap();
            let m = compute_metrics(&chip).unwrap();
            assert_eq!(
                (m.stabs, m.z_stabs, m.biggest_z_dataq, m.reduced_distance),
                (38, 19, 6, 4),
                "{site:?}"
            );
        }
    }

    #[test]
    fn pearson_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0], "a").unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0], "a").unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            pearson(&x, &[1.0; 4], "flat"),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn geometric_mean_basics() {
        let (g, _) = geometric_mean(&[(1e-2, 0.0), (1e-4, 0.0)]);
        assert!((g - 1e-3).abs() < 1e-15);
    }
}
