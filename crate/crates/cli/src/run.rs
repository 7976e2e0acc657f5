//! Scenario execution: exact return probabilities, meter analysis, trajectory
//! ensembles and parameter sweeps, collected into a [`Report`].

use std::collections::BTreeSet;

use csm_core::{
    entangle, exact_ensemble, gram_uniform, interference_return, irreversible_return,
    mean_entropy_production, meter_chain_reduced_state, meter_return_probability,
    meter_states_from_gram, reduced_system_state, reversible_return, Context, DensityMatrix,
    GramMatrix, Modality,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::ScenarioError;
use crate::scenario::{Built, BuiltMeter, Scenario};
use crate::table::Table;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Enumerate every path instead of (or in addition to) sampling.
    pub exhaustive: bool,
    /// Worker cap; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Report entropies in bits rather than nats.
    pub bits: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub n_samples: usize,
    pub exhaustive: bool,
    pub entropy_unit: EntropyUnit,
    pub scenario: Scenario,
    /// Unread final-outcome marginal of the protocol.
    pub final_distribution: Vec<f64>,
    pub returns: Vec<ReturnReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meter: Option<MeterReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<SweepReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyUnit {
    Nats,
    Bits,
}

impl EntropyUnit {
    fn convert(self, nats: f64) -> f64 {
        match self {
            EntropyUnit::Nats => nats,
            EntropyUnit::Bits => nats / std::f64::consts::LN_2,
        }
    }
}

/// Round trip from the initial modality through `intermediate` and back to
/// the initial context; entry `k` is the probability of returning to `u_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnReport {
    pub intermediate: String,
    pub reversible: Vec<f64>,
    pub irreversible: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeterReport {
    pub pointer: String,
    pub return_probabilities: Vec<f64>,
    /// System state after tracing out the meter, in pointer coordinates,
    /// entries as `[re, im]`.
    pub reduced_state: Vec<Vec<[f64; 2]>>,
    pub max_coherence: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub sample_count: usize,
    pub mean_entropy_production: f64,
    pub std_error: f64,
    pub shannon_entropy_final: f64,
    pub empirical_final_frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactReport {
    pub path_count: usize,
    pub total_probability: f64,
    pub mean_entropy_production: f64,
    pub shannon_entropy_final: f64,
    pub max_telescoping_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepReport {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub g: Vec<GPoint>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub m_count: Vec<ChainPoint>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub phi: Vec<PhasePoint>,
}

/// Uniform Gram matrix with off-diagonal overlap `g`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GPoint {
    pub g: f64,
    pub return_probabilities: Vec<f64>,
    pub entropy: f64,
    pub max_coherence: f64,
}

/// `m_count` meters in a chain, each with the scenario's Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainPoint {
    pub m_count: u32,
    pub diagonal: Vec<f64>,
    pub max_coherence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub phi: f64,
    pub return_probabilities: Vec<f64>,
}

/// Sweepable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    G,
    MCount,
    Phi,
}

impl std::str::FromStr for SweepParam {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "g" => Ok(SweepParam::G),
            "m_count" => Ok(SweepParam::MCount),
            "phi" => Ok(SweepParam::Phi),
            other => Err(ScenarioError::Usage(format!(
                "unknown sweep parameter `{other}` (expected g, m_count or phi)"
            ))),
        }
    }
}

/// Runs `f` on a pool with at most `threads` workers.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, ScenarioError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(ScenarioError::Usage("thread count must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| ScenarioError::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn run_scenario(
    scenario: &Scenario,
    seed: u64,
    n_samples: usize,
    options: &RunOptions,
) -> Result<Report, ScenarioError> {
    if n_samples == 0 && !options.exhaustive {
        return Err(ScenarioError::Usage(
            "--trajectories 0 requires --exhaustive".into(),
        ));
    }
    with_threads(options.threads, || {
        run_inner(scenario, seed, n_samples, options)
    })?
}

fn run_inner(
    scenario: &Scenario,
    seed: u64,
    n_samples: usize,
    options: &RunOptions,
) -> Result<Report, ScenarioError> {
    let built = scenario.build()?;
    let unit = if options.bits {
        EntropyUnit::Bits
    } else {
        EntropyUnit::Nats
    };
    let protocol = &built.protocol;
    let initial = protocol.initial();

    let final_distribution = protocol
        .final_marginal()
        .map_err(ScenarioError::domain("protocol"))?
        .weights()
        .to_vec();

    let mut seen = BTreeSet::new();
    let mut returns = Vec::new();
    for name in &scenario.protocol.sequence {
        if seen.insert(name.as_str()) {
            returns.push(return_report(&initial, &built.contexts[name])?);
        }
    }

    let meter = match &built.meter {
        Some(m) => Some(meter_report(&initial, m, unit)?),
        None => None,
    };

    let ensemble = if n_samples > 0 {
        let stats = mean_entropy_production(protocol, n_samples, seed)
            .map_err(ScenarioError::domain("protocol"))?;
        Some(EnsembleReport {
            sample_count: stats.sample_count,
            mean_entropy_production: unit.convert(stats.mean_entropy_production),
            std_error: unit.convert(stats.std_error),
            shannon_entropy_final: unit.convert(stats.shannon_entropy_final),
            empirical_final_frequencies: stats.empirical_final_frequencies,
        })
    } else {
        None
    };

    let exact = if options.exhaustive {
        let e = exact_ensemble(protocol, None).map_err(ScenarioError::domain("protocol"))?;
        Some(ExactReport {
            path_count: e.path_count,
            total_probability: e.total_probability,
            mean_entropy_production: unit.convert(e.mean_entropy_production),
            shannon_entropy_final: unit.convert(e.shannon_entropy_final),
            max_telescoping_residual: e.max_telescoping_residual,
        })
    } else {
        None
    };

    let sweeps = match &scenario.sweep {
        Some(sweep) => Some(SweepReport {
            g: sweep_g(&built, &sweep.g, unit)?,
            m_count: sweep_m_count(&built, &sweep.m_count)?,
            phi: sweep_phi(scenario, &built, &sweep.phi)?,
        }),
        None => None,
    };

    Ok(Report {
        tool: TOOL.into(),
        version: VERSION.into(),
        seed,
        n_samples,
        exhaustive: options.exhaustive,
        entropy_unit: unit,
        scenario: scenario.clone(),
        final_distribution,
        returns,
        meter,
        ensemble,
        exact,
        sweeps,
    })
}

fn return_report(
    initial: &Modality<'_>,
    intermediate: &Context,
) -> Result<ReturnReport, ScenarioError> {
    let path = format!("contexts.{}", intermediate.id());
    let n = intermediate.dim();
    let collect = |f: fn(&Modality<'_>, &Context, usize) -> csm_core::Result<f64>| {
        (0..n)
            .map(|k| f(initial, intermediate, k))
            .collect::<csm_core::Result<Vec<_>>>()
            .map_err(ScenarioError::domain(path.clone()))
    };
    Ok(ReturnReport {
        intermediate: intermediate.id().to_string(),
        reversible: collect(reversible_return)?,
        irreversible: collect(irreversible_return)?,
    })
}

fn meter_analysis(
    initial: &Modality<'_>,
    pointer: &Context,
    gram: &GramMatrix,
) -> csm_core::Result<(Vec<f64>, DensityMatrix)> {
    let probs = (0..pointer.dim())
        .map(|k| meter_return_probability(initial, pointer, gram, k))
        .collect::<csm_core::Result<Vec<_>>>()?;
    let xi = entangle(initial, pointer, &meter_states_from_gram(gram)?)?;
    let rho = reduced_system_state(&xi, gram, pointer)?;
    Ok((probs, rho))
}

fn meter_report(
    initial: &Modality<'_>,
    meter: &BuiltMeter,
    unit: EntropyUnit,
) -> Result<MeterReport, ScenarioError> {
    let (return_probabilities, rho) = meter_analysis(initial, &meter.pointer, &meter.gram)
        .map_err(ScenarioError::domain("meter"))?;
    let n = rho.dim();
    let reduced_state = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let z = rho.get(i, j);
                    [z.re, z.im]
                })
                .collect()
        })
        .collect();
    Ok(MeterReport {
        pointer: meter.pointer.id().to_string(),
        return_probabilities,
        reduced_state,
        max_coherence: rho.max_off_diagonal(),
        entropy: unit.convert(rho.von_neumann_entropy()),
    })
}

fn require_meter(built: &Built) -> Result<&BuiltMeter, ScenarioError> {
    built
        .meter
        .as_ref()
        .ok_or_else(|| ScenarioError::validation("meter", "sweep needs a `meter` section"))
}

fn sweep_g(built: &Built, grid: &[f64], unit: EntropyUnit) -> Result<Vec<GPoint>, ScenarioError> {
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let meter = require_meter(built)?;
    let initial = built.protocol.initial();
    grid.par_iter()
        .enumerate()
        .map(|(idx, &g)| {
            let path = format!("sweep.g[{idx}]");
            let gram =
                gram_uniform(meter.pointer.dim(), g).map_err(ScenarioError::domain(&path))?;
            let (return_probabilities, rho) = meter_analysis(&initial, &meter.pointer, &gram)
                .map_err(ScenarioError::domain(&path))?;
            Ok(GPoint {
                g,
                return_probabilities,
                entropy: unit.convert(rho.von_neumann_entropy()),
                max_coherence: rho.max_off_diagonal(),
            })
        })
        .collect()
}

fn sweep_m_count(built: &Built, grid: &[u32]) -> Result<Vec<ChainPoint>, ScenarioError> {
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let meter = require_meter(built)?;
    let initial = built.protocol.initial();
    grid.par_iter()
        .enumerate()
        .map(|(idx, &m)| {
            let rho = meter_chain_reduced_state(&initial, &meter.pointer, &meter.gram, m)
                .map_err(ScenarioError::domain(format!("sweep.m_count[{idx}]")))?;
            Ok(ChainPoint {
                m_count: m,
                diagonal: rho.diagonal(),
                max_coherence: rho.max_off_diagonal(),
            })
        })
        .collect()
}

/// Interferometer from the initial modality through the first context of the
/// sequence, arm `j` carrying phase `j * phi`.
fn sweep_phi(
    scenario: &Scenario,
    built: &Built,
    grid: &[f64],
) -> Result<Vec<PhasePoint>, ScenarioError> {
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let intermediate = &built.contexts[&scenario.protocol.sequence[0]];
    let initial = built.protocol.initial();
    let n = intermediate.dim();
    grid.par_iter()
        .enumerate()
        .map(|(idx, &phi)| {
            let phases: Vec<f64> = (0..n).map(|j| j as f64 * phi).collect();
            let return_probabilities = (0..n)
                .map(|k| interference_return(&initial, intermediate, &phases, k))
                .collect::<csm_core::Result<Vec<_>>>()
                .map_err(ScenarioError::domain(format!("sweep.phi[{idx}]")))?;
            Ok(PhasePoint {
                phi,
                return_probabilities,
            })
        })
        .collect()
}

/// `steps` evenly spaced points from `from` to `to` inclusive.
pub fn linspace(from: f64, to: f64, steps: usize) -> Result<Vec<f64>, ScenarioError> {
    if !from.is_finite() || !to.is_finite() {
        return Err(ScenarioError::Usage("sweep bounds must be finite".into()));
    }
    match steps {
        0 => Err(ScenarioError::Usage("--steps must be at least 1".into())),
        1 => Ok(vec![from]),
        _ => {
            let last = (steps - 1) as f64;
            Ok((0..steps)
                .map(|i| {
                    if i == steps - 1 {
                        to
                    } else {
                        from + (to - from) * (i as f64 / last)
                    }
                })
                .collect())
        }
    }
}

/// One-parameter sweep rendered as a table. `g` uses a uniform Gram matrix,
/// `m_count` chains the scenario's meter, and `phi` drives the
/// interferometer through the first context of the sequence.
pub fn sweep(
    scenario: &Scenario,
    param: SweepParam,
    from: f64,
    to: f64,
    steps: usize,
) -> Result<Table, ScenarioError> {
    let grid = linspace(from, to, steps)?;
    let built = scenario.build()?;
    match param {
        SweepParam::G => {
            if let Some(g) = grid.iter().find(|g| !(0.0..=1.0).contains(*g)) {
                return Err(ScenarioError::Usage(format!("g = {g} outside [0, 1]")));
            }
            Ok(g_table(&sweep_g(&built, &grid, EntropyUnit::Nats)?))
        }
        SweepParam::MCount => {
            let counts = grid
                .iter()
                .map(|&x| {
                    if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
                        Ok(x as u32)
                    } else {
                        Err(ScenarioError::Usage(format!(
                            "m_count grid point {x} is not a non-negative integer"
                        )))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(chain_table(&sweep_m_count(&built, &counts)?))
        }
        SweepParam::Phi => Ok(phase_table(&sweep_phi(scenario, &built, &grid)?)),
    }
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |k| format!("{prefix}_{k}"))
}

pub fn g_table(points: &[GPoint]) -> Table {
    let n = points.first().map_or(0, |p| p.return_probabilities.len());
    let mut header = vec!["g".to_string()];
    header.extend(indexed("p_return", n));
    header.extend(["entropy".to_string(), "max_coherence".to_string()]);
    let mut t = Table::new(header);
    for p in points {
        let mut row = vec![p.g];
        row.extend(&p.return_probabilities);
        row.extend([p.entropy, p.max_coherence]);
        t.rows.push(row);
    }
    t
}

pub fn chain_table(points: &[ChainPoint]) -> Table {
    let n = points.first().map_or(0, |p| p.diagonal.len());
    let mut header = vec!["m_count".to_string()];
    header.extend(indexed("diagonal", n));
    header.push("max_coherence".into());
    let mut t = Table::new(header);
    for p in points {
        let mut row = vec![f64::from(p.m_count)];
        row.extend(&p.diagonal);
        row.push(p.max_coherence);
        t.rows.push(row);
    }
    t
}

pub fn phase_table(points: &[PhasePoint]) -> Table {
    let n = points.first().map_or(0, |p| p.return_probabilities.len());
    let mut header = vec!["phi".to_string()];
    header.extend(indexed("p_return", n));
    let mut t = Table::new(header);
    for p in points {
        let mut row = vec![p.phi];
        row.extend(&p.return_probabilities);
        t.rows.push(row);
    }
    t
}

/// Tables for every sweep in `report`, keyed by file stem.
pub fn report_tables(report: &Report) -> Vec<(&'static str, Table)> {
    let mut out = Vec::new();
    if let Some(s) = &report.sweeps {
        if !s.g.is_empty() {
            out.push(("sweep_g", g_table(&s.g)));
        }
        if !s.m_count.is_empty() {
            out.push(("sweep_m_count", chain_table(&s.m_count)));
        }
        if !s.phi.is_empty() {
            out.push(("sweep_phi", phase_table(&s.phi)));
        }
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
