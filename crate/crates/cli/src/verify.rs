//! Invariant checks against a scenario's objects, each reported with its
//! measured residual.

use csm_core::hilbert::orthonormality_residual;
use csm_core::{
    backward_log_prob, born_probability, context_change_unitary, entangle, exact_ensemble,
    irreversible_return_matrix, meter_return_probability, meter_states_from_gram, propagate,
    reduced_system_state, reversible_return, sample_trajectory, transition_matrix, CMatrix,
    Context, GramMatrix, ProbabilityDistribution, Protocol,
};
use serde::Serialize;

use crate::error::ScenarioError;
use crate::run::{TOOL, VERSION};
use crate::scenario::{Built, Scenario};

/// Trajectories sampled for the telescoping check when the path space is too
/// large to enumerate.
const TELESCOPING_SAMPLES: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub tool: String,
    pub version: String,
    pub tolerance: f64,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<Check>,
}

struct Checks {
    tolerance: f64,
    checks: Vec<Check>,
}

impl Checks {
    fn push(&mut self, name: impl Into<String>, residual: f64) {
        self.checks.push(Check {
            name: name.into(),
            residual,
            // NaN residuals fail
            passed: residual <= self.tolerance,
        });
    }

    fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

fn domain(path: &str) -> impl FnOnce(csm_core::Error) -> ScenarioError + '_ {
    ScenarioError::domain(path)
}

/// Runs every applicable check. Orthonormality of each context is measured
/// first; if any context fails it, the remaining checks are skipped because
/// they need valid contexts.
pub fn verify(scenario: &Scenario, tolerance: f64) -> Result<VerifyReport, ScenarioError> {
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(ScenarioError::Usage(format!(
            "tolerance must be non-negative, got {tolerance}"
        )));
    }
    let mut checks = Checks {
        tolerance,
        checks: Vec::new(),
    };
    for (name, spec) in &scenario.contexts {
        let raw = spec
            .raw_basis(scenario.dim)
            .map_err(domain(&format!("contexts.{name}")))?;
        checks.push(
            format!("context.{name}.orthonormality"),
            orthonormality_residual(&raw),
        );
    }
    if checks.all_passed() {
        let built = scenario.build()?;
        context_checks(&mut checks, &built);
        transition_checks(&mut checks, &built)?;
        trajectory_checks(&mut checks, &built.protocol)?;
        if let Some(meter) = &built.meter {
            meter_checks(&mut checks, &built.protocol, &meter.pointer, &meter.gram)?;
        }
    }
    let first_failure = checks.checks.iter().find(|c| !c.passed).cloned();
    Ok(VerifyReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        tolerance,
        passed: first_failure.is_none(),
        checks: checks.checks,
        first_failure,
    })
}

fn context_checks(checks: &mut Checks, built: &Built) {
    for (name, c) in &built.contexts {
        let n = c.dim();
        let projectors = c.projectors();
        let projector_residual = projectors.iter().fold(0.0f64, |acc, p| {
            acc.max(p.hermiticity_residual())
                .max(p.idempotency_residual())
                .max(p.trace_residual())
        });
        checks.push(format!("context.{name}.projectors"), projector_residual);
        let sum = projectors
            .iter()
            .fold(CMatrix::zeros(n, n), |acc, p| acc + p.matrix());
        checks.push(
            format!("context.{name}.closure"),
            max_abs(&(sum - CMatrix::identity(n, n))),
        );
    }
}

fn transition_checks(checks: &mut Checks, built: &Built) -> Result<(), ScenarioError> {
    let contexts: Vec<&Context> = built.contexts.values().collect();
    let n = built.protocol.dim();

    let mut unitarity = 0.0f64;
    let mut stochasticity = 0.0f64;
    let mut fixed_point = 0.0f64;
    let mut symmetry = 0.0f64;
    for a in &contexts {
        for b in &contexts {
            let u = context_change_unitary(a, b).map_err(domain("contexts"))?;
            unitarity = unitarity.max(u.unitarity_residual());
            let t = transition_matrix(a, b).map_err(domain("contexts"))?;
            stochasticity = stochasticity.max(t.stochasticity_residual());
            let image =
                propagate(&ProbabilityDistribution::uniform(n), &t).map_err(domain("contexts"))?;
            for w in image.weights() {
                fixed_point = fixed_point.max((w - 1.0 / n as f64).abs());
            }
            for ma in a.modalities() {
                for mb in b.modalities() {
                    let ab = born_probability(&ma, &mb).map_err(domain("contexts"))?;
                    let ba = born_probability(&mb, &ma).map_err(domain("contexts"))?;
                    symmetry = symmetry.max((ab - ba).abs());
                }
            }
        }
    }
    checks.push("unitary.unitarity", unitarity);
    checks.push("transition.stochasticity", stochasticity);
    checks.push("transition.uniform_fixed_point", fixed_point);
    checks.push("born.symmetry", symmetry);

    let mut composition = 0.0f64;
    for a in &contexts {
        for b in &contexts {
            let ab = context_change_unitary(a, b).map_err(domain("contexts"))?;
            for c in &contexts {
                let bc = context_change_unitary(b, c).map_err(domain("contexts"))?;
                let ac = context_change_unitary(a, c).map_err(domain("contexts"))?;
                composition = composition.max(max_abs(&(ab.then(&bc).matrix() - ac.matrix())));
            }
        }
    }
    checks.push("unitary.composition", composition);

    let home = &built.protocol.contexts()[0];
    let mut reversible = 0.0f64;
    let mut normalization = 0.0f64;
    let mut chain = 0.0f64;
    for v in &contexts {
        for u in home.modalities() {
            for k in 0..n {
                let delta = if k == u.index() { 1.0 } else { 0.0 };
                let p = reversible_return(&u, v, k).map_err(domain("contexts"))?;
                reversible = reversible.max((p - delta).abs());
            }
        }
        let irr = irreversible_return_matrix(home, v).map_err(domain("contexts"))?;
        normalization = normalization.max(irr.column_sum_residual());
        let two_step = transition_matrix(home, v)
            .and_then(|t| Ok(t.then(&transition_matrix(v, home)?)))
            .map_err(domain("contexts"))?;
        chain = chain.max((irr.matrix() - two_step.matrix()).abs().max());
    }
    checks.push("return.reversible_identity", reversible);
    checks.push("return.irreversible_normalization", normalization);
    checks.push("return.irreversible_chain", chain);
    Ok(())
}

fn trajectory_checks(checks: &mut Checks, protocol: &Protocol) -> Result<(), ScenarioError> {
    let marginal = protocol.final_marginal().map_err(domain("protocol"))?;
    checks.push(
        "trajectory.marginal_normalization",
        (marginal.weights().iter().sum::<f64>() - 1.0).abs(),
    );
    match exact_ensemble(protocol, None) {
        Ok(exact) => {
            checks.push("trajectory.telescoping", exact.max_telescoping_residual);
            checks.push(
                "trajectory.total_probability",
                (exact.total_probability - 1.0).abs(),
            );
            checks.push(
                "trajectory.shannon_identity",
                (exact.mean_entropy_production - exact.shannon_entropy_final).abs(),
            );
        }
        Err(csm_core::Error::TooManyPaths { .. }) => {
            let mut residual = 0.0f64;
            for seed in 0..TELESCOPING_SAMPLES {
                let t = sample_trajectory(protocol, seed).map_err(domain("protocol"))?;
                let last = *t.outcomes.last().expect("non-empty");
                let backward = backward_log_prob(protocol, &t.outcomes, &marginal)
                    .map_err(domain("protocol"))?;
                let telescoped = -marginal.weights()[last].ln();
                residual = residual.max((t.forward_log_prob - backward - telescoped).abs());
            }
            checks.push("trajectory.telescoping", residual);
        }
        Err(e) => return Err(ScenarioError::domain("protocol")(e)),
    }
    Ok(())
}

fn meter_checks(
    checks: &mut Checks,
    protocol: &Protocol,
    pointer: &Context,
    gram: &GramMatrix,
) -> Result<(), ScenarioError> {
    let n = pointer.dim();
    let initial = protocol.initial();
    let home = initial.context();
    checks.push("meter.gram_psd", (-gram.min_eigenvalue()).max(0.0));
    let meters = meter_states_from_gram(gram).map_err(domain("meter.gram"))?;
    checks.push("meter.realization", meters.gram_residual(gram));

    let return_probs = |g: &GramMatrix| -> csm_core::Result<Vec<f64>> {
        (0..n)
            .map(|k| meter_return_probability(&initial, pointer, g, k))
            .collect()
    };
    let probs = return_probs(gram).map_err(domain("meter"))?;
    checks.push(
        "meter.normalization",
        (probs.iter().sum::<f64>() - 1.0).abs(),
    );

    let mut two_form = 0.0f64;
    for u in home.modalities() {
        let xi = entangle(&u, pointer, &meters).map_err(domain("meter"))?;
        for k in 0..n {
            let via_gram =
                meter_return_probability(&u, pointer, gram, k).map_err(domain("meter"))?;
            let via_state = xi
                .system_projector_expectation(pointer, &home.modality(k).map_err(domain("meter"))?)
                .map_err(domain("meter"))?;
            two_form = two_form.max((via_gram - via_state).abs());
        }
    }
    checks.push("meter.two_form_consistency", two_form);

    let orthogonal = return_probs(&GramMatrix::identity(n)).map_err(domain("meter"))?;
    let irr = irreversible_return_matrix(home, pointer).map_err(domain("meter"))?;
    let orthogonal_residual = (0..n)
        .map(|k| (orthogonal[k] - irr.get(k, initial.index())).abs())
        .fold(0.0, f64::max);
    checks.push("meter.orthogonal_limit", orthogonal_residual);

    let indistinguishable = return_probs(&GramMatrix::ones(n)).map_err(domain("meter"))?;
    let identity_residual = (0..n)
        .map(|k| {
            let delta = if k == initial.index() { 1.0 } else { 0.0 };
            (indistinguishable[k] - delta).abs()
        })
        .fold(0.0, f64::max);
    checks.push("meter.indistinguishable_limit", identity_residual);

    let xi = entangle(&initial, pointer, &meters).map_err(domain("meter"))?;
    let rho = reduced_system_state(&xi, gram, pointer).map_err(domain("meter"))?;
    checks.push("meter.reduced_trace", rho.trace_residual());
    let expected = transition_matrix(home, pointer)
        .and_then(|t| {
            propagate(
                &ProbabilityDistribution::point_mass(n, initial.index())?,
                &t,
            )
        })
        .map_err(domain("meter"))?;
    let diagonal_residual = rho
        .diagonal()
        .iter()
        .zip(expected.weights())
        .map(|(d, p)| (d - p).abs())
        .fold(0.0, f64::max);
    checks.push("meter.reduced_diagonal", diagonal_residual);
    Ok(())
}
