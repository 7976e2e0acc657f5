//! Born-rule probability calculus between contexts.
//!
//! Going from a context `{u_i}` through an intermediate context `{v_j}` and
//! back can happen in two ways. If an intermediate modality is realized the
//! probabilities of the paths add ([`irreversible_return`]); if none is, the
//! amplitudes add and the closure relation returns the initial modality with
//! certainty ([`reversible_return`]).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::hilbert::{CMatrix, Context, Modality};
use crate::{Error, Result, INPUT_TOL};

/// Maps a computed probability onto `[0, 1]`.
///
/// Values within [`INPUT_TOL`] outside the interval are rounding and get
/// clamped; anything further out is a bug upstream.
pub(crate) fn clamp_probability(p: f64) -> Result<f64> {
    if !p.is_finite() || !(-INPUT_TOL..=1.0 + INPUT_TOL).contains(&p) {
        return Err(Error::InternalConsistency(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Weights over the `N` modalities of one context.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityDistribution(Vec<f64>);

impl ProbabilityDistribution {
    /// Checks each weight lies in `[0, 1]` and that they sum to one, both within
    /// [`INPUT_TOL`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no weights".into()));
        }
        let mut clamped = Vec::with_capacity(weights.len());
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || !(-INPUT_TOL..=1.0 + INPUT_TOL).contains(&w) {
                return Err(Error::InvalidDistribution(format!(
                    "weight {i} = {w} outside [0, 1]"
                )));
            }
            clamped.push(w.clamp(0.0, 1.0));
        }
        let total: f64 = clamped.iter().sum();
        if (total - 1.0).abs() > INPUT_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        Ok(ProbabilityDistribution(clamped))
    }

    pub fn point_mass(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        let mut w = vec![0.0; dim];
        w[index] = 1.0;
        Ok(ProbabilityDistribution(w))
    }

    pub fn uniform(dim: usize) -> Self {
        ProbabilityDistribution(vec![1.0 / dim as f64; dim])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.0.get(index).copied()
    }
}

/// `N x N` matrix with entry `(j, i) = p(v_j | u_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix(DMatrix<f64>);

impl TransitionMatrix {
    /// Wraps a caller-supplied matrix after checking it is square, entrywise in
    /// `[0, 1]` and doubly stochastic within [`INPUT_TOL`].
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        if entries
            .iter()
            .any(|&p| !p.is_finite() || !(-INPUT_TOL..=1.0 + INPUT_TOL).contains(&p))
        {
            return Err(Error::InvalidDistribution(
                "transition entry outside [0, 1]".into(),
            ));
        }
        let t = TransitionMatrix(entries);
        let residual = t.stochasticity_residual();
        if residual > INPUT_TOL {
            return Err(Error::InvalidDistribution(format!(
                "not doubly stochastic: residual {residual:e}"
            )));
        }
        Ok(t)
    }

    pub fn identity(dim: usize) -> Self {
        TransitionMatrix(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `p(v_j | u_i)`.
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.0[(j, i)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// The reverse-direction matrix; Born probabilities are symmetric.
    pub fn transpose(&self) -> TransitionMatrix {
        TransitionMatrix(self.0.transpose())
    }

    /// `self` first, then `next`.
    pub fn then(&self, next: &TransitionMatrix) -> TransitionMatrix {
        TransitionMatrix(&next.0 * &self.0)
    }

    pub fn row_sum_residual(&self) -> f64 {
        self.0
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn column_sum_residual(&self) -> f64 {
        self.0
            .column_iter()
            .map(|c| (c.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn stochasticity_residual(&self) -> f64 {
        self.row_sum_residual().max(self.column_sum_residual())
    }
}

/// `N x N` complex matrix with entry `(j, i) = <v_j|u_i>`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionAmplitudes(CMatrix);

impl TransitionAmplitudes {
    pub fn get(&self, j: usize, i: usize) -> Complex64 {
        self.0[(j, i)]
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }
}

/// `Tr(P_a P_b) = |<a|b>|^2`, bitwise symmetric in its arguments.
pub fn born_probability(a: &Modality<'_>, b: &Modality<'_>) -> Result<f64> {
    a.context().check_same_dim(b.context())?;
    clamp_probability(
        a.context()
            .overlap(a.index(), b.context(), b.index())
            .norm_sqr(),
    )
}

pub fn transition_amplitudes(from: &Context, to: &Context) -> Result<TransitionAmplitudes> {
    from.check_same_dim(to)?;
    let n = from.dim();
    Ok(TransitionAmplitudes(CMatrix::from_fn(n, n, |j, i| {
        to.overlap(j, from, i)
    })))
}

pub fn transition_matrix(from: &Context, to: &Context) -> Result<TransitionMatrix> {
    from.check_same_dim(to)?;
    let n = from.dim();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        let u = Modality::new(from, i)?;
        for j in 0..n {
            t[(j, i)] = born_probability(&Modality::new(to, j)?, &u)?;
        }
    }
    Ok(TransitionMatrix(t))
}

/// `p(v_j) = sum_i p(v_j | u_i) p(u_i)`.
pub fn propagate(
    dist: &ProbabilityDistribution,
    t: &TransitionMatrix,
) -> Result<ProbabilityDistribution> {
    if dist.len() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            found: dist.len(),
        });
    }
    let n = t.dim();
    let out = (0..n)
        .map(|j| clamp_probability((0..n).map(|i| t.get(j, i) * dist.0[i]).sum()))
        .collect::<Result<Vec<_>>>()?;
    ProbabilityDistribution::new(out)
}

fn check_return_args(
    initial: &Modality<'_>,
    intermediate: &Context,
    final_index: usize,
) -> Result<()> {
    initial.context().check_same_dim(intermediate)?;
    let dim = intermediate.dim();
    if final_index >= dim {
        return Err(Error::IndexOutOfRange {
            index: final_index,
            dim,
        });
    }
    Ok(())
}

/// `p_{v}(u_k | u_i) = sum_j |<u_k|v_j>|^2 |<v_j|u_i>|^2`: the intermediate
/// modality is realized, so path probabilities add.
pub fn irreversible_return(
    initial: &Modality<'_>,
    intermediate: &Context,
    final_index: usize,
) -> Result<f64> {
    check_return_args(initial, intermediate, final_index)?;
    let ctx = initial.context();
    let i = initial.index();
    let p = (0..intermediate.dim())
        .map(|j| {
            ctx.overlap(final_index, intermediate, j).norm_sqr()
                * intermediate.overlap(j, ctx, i).norm_sqr()
        })
        .sum();
    clamp_probability(p)
}

/// All `(k, i)` irreversible return probabilities from `context` through
/// `intermediate` and back.
pub fn irreversible_return_matrix(
    context: &Context,
    intermediate: &Context,
) -> Result<TransitionMatrix> {
    context.check_same_dim(intermediate)?;
    let n = context.dim();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        let u = Modality::new(context, i)?;
        for k in 0..n {
            t[(k, i)] = irreversible_return(&u, intermediate, k)?;
        }
    }
    Ok(TransitionMatrix(t))
}

/// `|sum_j <u_k|v_j><v_j|u_i>|^2`, summed explicitly through the intermediate
/// context. By closure this is `delta_{k,i}` up to rounding.
pub fn reversible_return(
    initial: &Modality<'_>,
    intermediate: &Context,
    final_index: usize,
) -> Result<f64> {
    let zeros = vec![0.0; intermediate.dim()];
    interference_return(initial, intermediate, &zeros, final_index)
}

/// `|sum_j e^{i phi_j} <u_k|v_j><v_j|u_i>|^2`: an interferometer whose arms
/// are the intermediate modalities, each with its own phase shift.
pub fn interference_return(
    initial: &Modality<'_>,
    intermediate: &Context,
    phases: &[f64],
    final_index: usize,
) -> Result<f64> {
    check_return_args(initial, intermediate, final_index)?;
    if phases.len() != intermediate.dim() {
        return Err(Error::DimensionMismatch {
            expected: intermediate.dim(),
            found: phases.len(),
        });
    }
    if phases.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("phases"));
    }
    let ctx = initial.context();
    let i = initial.index();
    let amplitude = phases
        .iter()
        .enumerate()
        .fold(Complex64::new(0.0, 0.0), |acc, (j, &phi)| {
            let path = ctx.overlap(final_index, intermediate, j) * intermediate.overlap(j, ctx, i);
            if phi == 0.0 {
                acc + path
            } else {
                acc + Complex64::from_polar(1.0, phi) * path
            }
        });
    clamp_probability(amplitude.norm_sqr())
}
