//! Stochastic trajectories over a sequence of contexts and their entropy
//! production.
//!
//! A trajectory is the sequence of modalities realized when measuring in
//! contexts `C(t_0), ..., C(t_n)`, starting from a known modality of
//! `C(t_0)`. Its forward probability is the product of Born conditionals. The
//! backward trajectory picks the final modality from a distribution `p~` and
//! runs the contexts in reverse; since Born conditionals are symmetric the
//! conditional factors cancel and the entropy production
//! `ln(P[γ] / P~[γ~])` reduces to `-ln p~(final)`. With `p~` the unread
//! final marginal, its mean is the Shannon entropy of that marginal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::hilbert::{Context, Modality};
use crate::measurement::{propagate, transition_matrix, ProbabilityDistribution, TransitionMatrix};
use crate::qnd::{entangle, meter_states_from_gram, reduced_system_state, GramMatrix};
use crate::{Error, Result, SELF_TOL};

/// Upper bound on the number of paths [`exact_ensemble`] will enumerate.
pub const MAX_ENUMERATED_PATHS: usize = 100_000;

/// Measurement protocol: contexts `C(t_0) .. C(t_n)` and the known initial
/// modality in `C(t_0)`.
#[derive(Debug, Clone)]
pub struct Protocol {
    contexts: Vec<Context>,
    initial_index: usize,
    steps: Vec<TransitionMatrix>,
}

impl Protocol {
    pub fn new(contexts: Vec<Context>, initial_index: usize) -> Result<Self> {
        let first = contexts.first().ok_or(Error::LengthMismatch {
            expected: 1,
            found: 0,
        })?;
        let dim = first.dim();
        if initial_index >= dim {
            return Err(Error::IndexOutOfRange {
                index: initial_index,
                dim,
            });
        }
        let steps = contexts
            .windows(2)
            .map(|w| transition_matrix(&w[0], &w[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Protocol {
            contexts,
            initial_index,
            steps,
        })
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    /// Number of contexts, including `C(t_0)`.
    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.contexts[0].dim()
    }

    pub fn initial_index(&self) -> usize {
        self.initial_index
    }

    pub fn initial(&self) -> Modality<'_> {
        Modality::new(&self.contexts[0], self.initial_index).expect("validated in Protocol::new")
    }

    /// Transition matrix from `C(t_k)` to `C(t_{k+1})`.
    pub fn step(&self, k: usize) -> &TransitionMatrix {
        &self.steps[k]
    }

    /// Distribution over `C(t_n)` when no intermediate outcome is read.
    pub fn final_marginal(&self) -> Result<ProbabilityDistribution> {
        let mut dist = ProbabilityDistribution::point_mass(self.dim(), self.initial_index)?;
        for t in &self.steps {
            dist = propagate(&dist, t)?;
        }
        Ok(dist)
    }

    /// `N^(len - 1)`, as a float so it cannot overflow.
    pub fn path_count(&self) -> f64 {
        (self.dim() as f64).powi(self.steps.len() as i32)
    }

    fn check_outcomes(&self, outcomes: &[usize]) -> Result<()> {
        if outcomes.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: outcomes.len(),
            });
        }
        if let Some(&bad) = outcomes.iter().find(|&&o| o >= self.dim()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                dim: self.dim(),
            });
        }
        Ok(())
    }
}

/// One realized sequence of outcome indices, one per context.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub outcomes: Vec<usize>,
    /// `ln P[γ]`, `-inf` for impossible paths.
    pub forward_log_prob: f64,
    /// Nats, against the unread final marginal.
    pub entropy_production: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsembleStats {
    pub sample_count: usize,
    pub mean_entropy_production: f64,
    pub std_error: f64,
    /// Exact unread final marginal.
    pub final_distribution: ProbabilityDistribution,
    pub shannon_entropy_final: f64,
    /// Observed relative frequencies of the final outcome.
    pub empirical_final_frequencies: Vec<f64>,
}

/// Expectations computed by summing over every path.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactEnsemble {
    pub path_count: usize,
    /// Sum of `P[γ]` over all paths; 1 up to rounding.
    pub total_probability: f64,
    pub mean_entropy_production: f64,
    pub final_distribution: ProbabilityDistribution,
    pub shannon_entropy_final: f64,
    /// Largest `|ln(P/P~) + ln p~(final)|` over paths with `P > 0`.
    pub max_telescoping_residual: f64,
}

/// `ln P[γ] = sum_k ln p(u_{k+1} | u_k)`, with `outcomes[0]` the initial
/// modality.
pub fn forward_log_prob(protocol: &Protocol, outcomes: &[usize]) -> Result<f64> {
    protocol.check_outcomes(outcomes)?;
    if outcomes[0] != protocol.initial_index {
        return Err(Error::InitialMismatch {
            expected: protocol.initial_index,
            found: outcomes[0],
        });
    }
    Ok(outcomes
        .windows(2)
        .enumerate()
        .map(|(k, w)| protocol.steps[k].get(w[1], w[0]).ln())
        .sum())
}

/// `ln P~[γ~] = ln p~(final) + sum_{k = n-1 .. 0} ln p(u_k | u_{k+1})`.
///
/// The reversed conditionals are read from the forward transition matrices:
/// Born probabilities are symmetric.
pub fn backward_log_prob(
    protocol: &Protocol,
    outcomes: &[usize],
    final_dist: &ProbabilityDistribution,
) -> Result<f64> {
    protocol.check_outcomes(outcomes)?;
    if final_dist.len() != protocol.dim() {
        return Err(Error::DimensionMismatch {
            expected: protocol.dim(),
            found: final_dist.len(),
        });
    }
    let last = *outcomes.last().expect("non-empty protocol");
    let start = final_dist.weights()[last].ln();
    Ok((0..protocol.steps.len()).rev().fold(start, |acc, k| {
        acc + protocol.steps[k].get(outcomes[k + 1], outcomes[k]).ln()
    }))
}

/// `ln(P[γ] / P~[γ~])`.
///
/// Computed as the difference of the two path log-probabilities and checked
/// against the telescoped form `-ln p~(final)`.
pub fn entropy_production(
    protocol: &Protocol,
    outcomes: &[usize],
    final_dist: &ProbabilityDistribution,
) -> Result<f64> {
    let forward = forward_log_prob(protocol, outcomes)?;
    let backward = backward_log_prob(protocol, outcomes, final_dist)?;
    if forward == f64::NEG_INFINITY {
        return Err(Error::UndefinedEntropy);
    }
    if backward == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    let direct = forward - backward;
    let telescoped = telescoped_entropy_production(outcomes, final_dist);
    let scale = 1.0f64.max(telescoped.abs()).max(forward.abs());
    if (direct - telescoped).abs() > 1e-9 * scale {
        return Err(Error::InternalConsistency(format!(
            "entropy production {direct} disagrees with telescoped value {telescoped}"
        )));
    }
    // -ln p~ is never negative; anything below zero here is summation order
    if direct < 0.0 && direct > -SELF_TOL * scale {
        return Ok(0.0);
    }
    Ok(direct)
}

/// `-ln p~(final)`: what the entropy production reduces to once the
/// conditional factors cancel.
pub fn telescoped_entropy_production(
    outcomes: &[usize],
    final_dist: &ProbabilityDistribution,
) -> f64 {
    let last = *outcomes.last().expect("non-empty outcome sequence");
    -final_dist.weights()[last].ln()
}

/// Inverse-CDF draw from column `from` of `t`.
fn draw_next(t: &TransitionMatrix, from: usize, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let n = t.dim();
    let mut cumulative = 0.0;
    let mut last_possible = from;
    for j in 0..n {
        let p = t.get(j, from);
        if p > 0.0 {
            last_possible = j;
        }
        cumulative += p;
        if u < cumulative {
            return j;
        }
    }
    // column sums can fall short of 1 by rounding
    last_possible
}

fn sample_outcomes(protocol: &Protocol, rng: &mut impl Rng) -> Vec<usize> {
    let mut outcomes = Vec::with_capacity(protocol.len());
    outcomes.push(protocol.initial_index);
    for t in &protocol.steps {
        let prev = *outcomes.last().expect("seeded with the initial outcome");
        outcomes.push(draw_next(t, prev, rng));
    }
    outcomes
}

/// Random stream for trajectory `index` of the ensemble seeded with `seed`.
fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn realize(
    protocol: &Protocol,
    outcomes: Vec<usize>,
    final_dist: &ProbabilityDistribution,
) -> Result<Trajectory> {
    let forward_log_prob = forward_log_prob(protocol, &outcomes)?;
    let entropy_production = entropy_production(protocol, &outcomes, final_dist)?;
    Ok(Trajectory {
        outcomes,
        forward_log_prob,
        entropy_production,
    })
}

/// Samples one trajectory; the same seed always yields the same trajectory,
/// and it coincides with trajectory 0 of [`mean_entropy_production`] under
/// that seed.
pub fn sample_trajectory(protocol: &Protocol, seed: u64) -> Result<Trajectory> {
    let final_dist = protocol.final_marginal()?;
    let outcomes = sample_outcomes(protocol, &mut trajectory_rng(seed, 0));
    realize(protocol, outcomes, &final_dist)
}

/// Monte Carlo estimate of the mean entropy production over `n_samples`
/// trajectories.
///
/// Trajectory `t` draws from ChaCha8 stream `t` of `seed`, and results are
/// reduced in index order, so the output does not depend on how many rayon
/// workers run the sampling.
pub fn mean_entropy_production(
    protocol: &Protocol,
    n_samples: usize,
    seed: u64,
) -> Result<TrajectoryEnsembleStats> {
    if n_samples == 0 {
        return Err(Error::InvalidDistribution(
            "ensemble needs at least one sample".into(),
        ));
    }
    let final_dist = protocol.final_marginal()?;
    let samples = (0..n_samples as u64)
        .into_par_iter()
        .map(|t| {
            let outcomes = sample_outcomes(protocol, &mut trajectory_rng(seed, t));
            let last = *outcomes.last().expect("non-empty");
            entropy_production(protocol, &outcomes, &final_dist).map(|s| (last, s))
        })
        .collect::<Result<Vec<_>>>()?;

    // Welford: constant inputs give back exactly that constant as the mean
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut counts = vec![0usize; protocol.dim()];
    for (n, &(last, s)) in samples.iter().enumerate() {
        counts[last] += 1;
        let delta = s - mean;
        mean += delta / (n + 1) as f64;
        m2 += delta * (s - mean);
    }
    let std_error = if n_samples > 1 {
        (m2 / (n_samples - 1) as f64 / n_samples as f64).sqrt()
    } else {
        0.0
    };
    Ok(TrajectoryEnsembleStats {
        sample_count: n_samples,
        mean_entropy_production: mean,
        std_error,
        shannon_entropy_final: shannon_entropy(&final_dist),
        final_distribution: final_dist,
        empirical_final_frequencies: counts
            .into_iter()
            .map(|c| c as f64 / n_samples as f64)
            .collect(),
    })
}

/// Sums over every outcome sequence starting at the initial modality.
/// `final_dist` defaults to the unread final marginal.
pub fn exact_ensemble(
    protocol: &Protocol,
    final_dist: Option<&ProbabilityDistribution>,
) -> Result<ExactEnsemble> {
    let paths = protocol.path_count();
    if paths > MAX_ENUMERATED_PATHS as f64 {
        return Err(Error::TooManyPaths {
            paths,
            limit: MAX_ENUMERATED_PATHS,
        });
    }
    let marginal = protocol.final_marginal()?;
    let backward_dist = final_dist.unwrap_or(&marginal);
    let n = protocol.dim();
    let steps = protocol.steps.len();
    let mut outcomes = vec![0usize; protocol.len()];
    outcomes[0] = protocol.initial_index;

    let mut total_probability = 0.0;
    let mut mean = 0.0;
    let mut max_residual = 0.0f64;
    let path_count = paths as usize;
    for _ in 0..path_count {
        let log_p = forward_log_prob(protocol, &outcomes)?;
        if log_p > f64::NEG_INFINITY {
            let p = log_p.exp();
            let s = entropy_production(protocol, &outcomes, backward_dist)?;
            if s.is_finite() {
                let residual = (s - telescoped_entropy_production(&outcomes, backward_dist)).abs();
                max_residual = max_residual.max(residual);
            }
            total_probability += p;
            mean += p * s;
        }
        // odometer over outcomes[1..]
        for k in (1..=steps).rev() {
            outcomes[k] += 1;
            if outcomes[k] < n {
                break;
            }
            outcomes[k] = 0;
        }
    }
    Ok(ExactEnsemble {
        path_count,
        total_probability,
        mean_entropy_production: mean,
        shannon_entropy_final: shannon_entropy(&marginal),
        final_distribution: marginal,
        max_telescoping_residual: max_residual,
    })
}

/// `-sum p ln p` in nats, with `0 ln 0 = 0`.
pub fn shannon_entropy(dist: &ProbabilityDistribution) -> f64 {
    dist.weights()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Irreversibility of a meter-mediated measurement: the von Neumann entropy
/// of the system after the meter is traced out.
///
/// For orthogonal meters this is the Shannon entropy of the pointer-basis
/// outcomes; for indistinguishable meters it is zero; in between it varies
/// continuously with the meter overlaps.
pub fn meter_protocol_entropy(
    initial: &Modality<'_>,
    pointer: &Context,
    gram: &GramMatrix,
) -> Result<f64> {
    if gram.dim() != pointer.dim() {
        return Err(Error::DimensionMismatch {
            expected: pointer.dim(),
            found: gram.dim(),
        });
    }
    let meters = meter_states_from_gram(gram)?;
    let xi = entangle(initial, pointer, &meters)?;
    Ok(reduced_system_state(&xi, gram, pointer)?.von_neumann_entropy())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_context, ContextSpec};
    use crate::qnd::gram_uniform;
    use std::f64::consts::{FRAC_PI_2, LN_2};

    fn z() -> Context {
        build_context("z", &ContextSpec::Computational, 2).unwrap()
    }

    fn x() -> Context {
        build_context("x", &ContextSpec::Rotation { theta: FRAC_PI_2 }, 2).unwrap()
    }

    fn balanced() -> Protocol {
        Protocol::new(vec![z(), x()], 0).unwrap()
    }

    #[test]
    fn protocol_validation() {
        assert!(Protocol::new(vec![], 0).is_err());
        assert!(matches!(
            Protocol::new(vec![z()], 2),
            Err(Error::IndexOutOfRange { .. })
        ));
        let three = build_context("t", &ContextSpec::Computational, 3).unwrap();
        assert!(matches!(
            Protocol::new(vec![z(), three], 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn forward_examples() {
        let p = Protocol::new(vec![z(), z(), z()], 1).unwrap();
        assert_eq!(forward_log_prob(&p, &[1, 1, 1]).unwrap(), 0.0);
        assert_eq!(forward_log_prob(&p, &[1, 0, 0]).unwrap(), f64::NEG_INFINITY);
        let b = balanced();
        assert!((forward_log_prob(&b, &[0, 0]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn forward_errors() {
        let b = balanced();
        assert_eq!(
            forward_log_prob(&b, &[0]).unwrap_err(),
            Error::LengthMismatch {
                expected: 2,
                found: 1
            }
        );
        assert_eq!(
            forward_log_prob(&b, &[1, 0]).unwrap_err(),
            Error::InitialMismatch {
                expected: 0,
                found: 1
            }
        );
        assert!(forward_log_prob(&b, &[0, 2]).is_err());
    }

    #[test]
    fn backward_examples() {
        let p = Protocol::new(vec![z(), z()], 0).unwrap();
        let point = ProbabilityDistribution::point_mass(2, 0).unwrap();
        assert_eq!(backward_log_prob(&p, &[0, 0], &point).unwrap(), 0.0);
        assert_eq!(
            backward_log_prob(&p, &[0, 1], &point).unwrap(),
            f64::NEG_INFINITY
        );
        let b = balanced();
        let uniform = ProbabilityDistribution::uniform(2);
        let got = backward_log_prob(&b, &[0, 0], &uniform).unwrap();
        assert!((got - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        assert!(matches!(
            backward_log_prob(&b, &[0], &uniform),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn entropy_examples() {
        let b = balanced();
        let point = ProbabilityDistribution::point_mass(2, 0).unwrap();
        assert!(entropy_production(&b, &[0, 0], &point).unwrap().abs() < 1e-15);
        let uniform = ProbabilityDistribution::uniform(2);
        for o in [[0, 0], [0, 1]] {
            assert!((entropy_production(&b, &o, &uniform).unwrap() - LN_2).abs() < 1e-15);
        }
        let quarter = ProbabilityDistribution::new(vec![0.25, 0.75]).unwrap();
        assert!((entropy_production(&b, &[0, 0], &quarter).unwrap() - 4f64.ln()).abs() < 1e-15);
        // p~ = 0 at a reachable outcome
        assert_eq!(
            entropy_production(&b, &[0, 1], &point).unwrap(),
            f64::INFINITY
        );
        // zero-probability forward path
        let same = Protocol::new(vec![z(), z()], 0).unwrap();
        assert_eq!(
            entropy_production(&same, &[0, 1], &point).unwrap_err(),
            Error::UndefinedEntropy
        );
    }

    #[test]
    fn sampling_is_deterministic() {
        let b = balanced();
        assert_eq!(
            sample_trajectory(&b, 17).unwrap(),
            sample_trajectory(&b, 17).unwrap()
        );
        let constant = Protocol::new(vec![z(), z(), z(), z()], 1).unwrap();
        let t = sample_trajectory(&constant, 3).unwrap();
        assert_eq!(t.outcomes, vec![1, 1, 1, 1]);
        assert_eq!(t.entropy_production, 0.0);
        assert_eq!(t.forward_log_prob, 0.0);
    }

    #[test]
    fn draw_next_follows_cdf() {
        let t = TransitionMatrix::new(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[0.25, 0.75, 0.75, 0.25],
        ))
        .unwrap();
        let mut rng = trajectory_rng(5, 0);
        let n = 40_000;
        let zeros = (0..n).filter(|_| draw_next(&t, 0, &mut rng) == 0).count();
        let freq = zeros as f64 / n as f64;
        // 5 sigma for a Bernoulli(1/4) mean
        assert!((freq - 0.25).abs() < 5.0 * (0.25f64 * 0.75 / n as f64).sqrt());
    }

    #[test]
    fn shannon_examples() {
        assert_eq!(
            shannon_entropy(&ProbabilityDistribution::point_mass(3, 1).unwrap()),
            0.0
        );
        assert!((shannon_entropy(&ProbabilityDistribution::uniform(2)) - LN_2).abs() < 1e-15);
        let d = ProbabilityDistribution::new(vec![0.25, 0.75]).unwrap();
        let direct = -0.25 * 0.25f64.ln() - 0.75 * 0.75f64.ln();
        assert!((shannon_entropy(&d) - direct).abs() < 1e-15);
        assert!((direct - 0.562335).abs() < 1e-6);
    }

    #[test]
    fn ensemble_deterministic_protocol() {
        let p = Protocol::new(vec![z(), z()], 0).unwrap();
        let stats = mean_entropy_production(&p, 100, 1).unwrap();
        assert_eq!(stats.mean_entropy_production, 0.0);
        assert_eq!(stats.shannon_entropy_final, 0.0);
        assert_eq!(stats.std_error, 0.0);
        assert!(mean_entropy_production(&p, 0, 1).is_err());
    }

    #[test]
    fn exact_ensemble_small() {
        let b = balanced();
        let e = exact_ensemble(&b, None).unwrap();
        assert_eq!(e.path_count, 2);
        assert!((e.total_probability - 1.0).abs() < 1e-15);
        assert!((e.mean_entropy_production - LN_2).abs() < 1e-12);
        assert!((e.shannon_entropy_final - LN_2).abs() < 1e-12);
    }

    #[test]
    fn exact_ensemble_path_limit() {
        let ctxs: Vec<Context> = (0..18).map(|_| z()).collect();
        let p = Protocol::new(ctxs, 0).unwrap();
        assert!(matches!(
            exact_ensemble(&p, None),
            Err(Error::TooManyPaths { .. })
        ));
    }

    #[test]
    fn meter_entropy_examples() {
        let zc = z();
        let xc = x();
        let z0 = zc.modality(0).unwrap();
        assert!(
            meter_protocol_entropy(&z0, &xc, &GramMatrix::ones(2))
                .unwrap()
                .abs()
                < 1e-12
        );
        assert!(
            (meter_protocol_entropy(&z0, &xc, &GramMatrix::identity(2)).unwrap() - LN_2).abs()
                < 1e-12
        );
        // [[1/2, 1/4], [1/4, 1/2]] has eigenvalues 3/4 and 1/4
        let want = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let got = meter_protocol_entropy(&z0, &xc, &gram_uniform(2, 0.5).unwrap()).unwrap();
        assert!((got - want).abs() < 1e-12);
    }
}
