//! Meter-mediated (QND) measurement.
//!
//! The system starts in `|u_i>` with the meter in a fixed reference state. The
//! coupling maps `|v_j>|x_1>` to `|v_j>|w_j>`, so the compound ends up in
//!
//! ```text
//! |xi_i> = sum_j <v_j|u_i> |v_j, w_j>
//! ```
//!
//! Everything observable on the system depends on the meter states only
//! through their Gram matrix `G_{jj'} = <w_j|w_j'>`. `G = I` is a projective
//! measurement in the pointer context `{v_j}`; `G = 1 1^T` leaves the system
//! untouched.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::hilbert::{
    check_fields, max_abs, max_abs_diff_identity, CMatrix, Context, MatrixSpec, Modality,
};
use crate::measurement::clamp_probability;
use crate::{Error, Result, INPUT_TOL};

/// Eigenvalues below this are treated as zero when realizing meter states.
pub const RANK_TOL: f64 = 1e-10;

/// Meter realizations must reproduce their Gram matrix to this tolerance.
pub const METER_TOL: f64 = 1e-8;

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub(crate) fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

fn hermiticity_residual(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Matrix of meter-state overlaps `<w_j|w_j'>`: Hermitian, unit diagonal,
/// positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(CMatrix);

impl GramMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidGram("empty matrix".into()));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("Gram matrix"));
        }
        let herm = hermiticity_residual(&m);
        if herm > INPUT_TOL {
            return Err(Error::InvalidGram(format!(
                "not Hermitian: residual {herm:e}"
            )));
        }
        if let Some(j) = (0..m.nrows()).find(|&j| (m[(j, j)] - 1.0).norm() > INPUT_TOL) {
            return Err(Error::InvalidGram(format!(
                "diagonal entry {j} is {}",
                m[(j, j)]
            )));
        }
        let g = GramMatrix(m);
        let min_eigenvalue = g.min_eigenvalue();
        if min_eigenvalue < -INPUT_TOL {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue });
        }
        Ok(g)
    }

    /// Orthogonal meter states: projective measurement.
    pub fn identity(n: usize) -> Self {
        GramMatrix(CMatrix::identity(n, n))
    }

    /// Indistinguishable meter states: no measurement.
    pub fn ones(n: usize) -> Self {
        GramMatrix(CMatrix::from_element(n, n, Complex64::new(1.0, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `<w_j|w_k>`.
    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.0[(j, k)]
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.0).0[0]
    }
}

/// `n x n` Gram matrix with unit diagonal and every off-diagonal equal to `g`.
///
/// The eigenvalues are `1 + (n - 1) g` and `1 - g` (multiplicity `n - 1`), so
/// the matrix is PSD on all of `[0, 1]`.
pub fn gram_uniform(n: usize, g: f64) -> Result<GramMatrix> {
    if !(0.0..=1.0).contains(&g) {
        return Err(Error::StrengthOutOfRange(g));
    }
    if n == 0 {
        return Err(Error::InvalidGram("empty matrix".into()));
    }
    Ok(GramMatrix(CMatrix::from_fn(n, n, |j, k| {
        Complex64::new(if j == k { 1.0 } else { g }, 0.0)
    })))
}

/// Gram specification as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawGramSpec")]
pub enum GramSpec {
    Uniform { g: f64 },
    Explicit { matrix: MatrixSpec },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGramSpec {
    kind: GramKind,
    g: Option<f64>,
    matrix: Option<MatrixSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GramKind {
    Uniform,
    Explicit,
}

impl TryFrom<RawGramSpec> for GramSpec {
    type Error = String;

    fn try_from(raw: RawGramSpec) -> std::result::Result<Self, String> {
        let present = [("g", raw.g.is_some()), ("matrix", raw.matrix.is_some())];
        Ok(match raw.kind {
            GramKind::Uniform => {
                check_fields("uniform", &["g"], &present)?;
                GramSpec::Uniform {
                    g: raw.g.expect("checked"),
                }
            }
            GramKind::Explicit => {
                check_fields("explicit", &["matrix"], &present)?;
                GramSpec::Explicit {
                    matrix: raw.matrix.expect("checked"),
                }
            }
        })
    }
}

impl GramSpec {
    pub fn build(&self, n: usize) -> Result<GramMatrix> {
        match self {
            GramSpec::Uniform { g } => gram_uniform(n, *g),
            GramSpec::Explicit { matrix } => {
                let m = matrix.to_matrix()?;
                if m.nrows() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: m.nrows(),
                    });
                }
                GramMatrix::new(m)
            }
        }
    }
}

/// Meter states `|w_j>` as the columns of an `M x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterStates(CMatrix);

impl MeterStates {
    /// Wraps explicit meter vectors; every column must have unit norm.
    pub fn new(states: CMatrix) -> Result<Self> {
        if states.nrows() == 0 || states.ncols() == 0 {
            return Err(Error::InvalidGram("no meter states".into()));
        }
        for (j, col) in states.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > INPUT_TOL {
                return Err(Error::InvalidGram(format!(
                    "meter state {j} has norm {norm}"
                )));
            }
        }
        Ok(MeterStates(states))
    }

    pub fn dim_meter(&self) -> usize {
        self.0.nrows()
    }

    /// Number of meter states, one per pointer modality.
    pub fn count(&self) -> usize {
        self.0.ncols()
    }

    pub fn states(&self) -> &CMatrix {
        &self.0
    }

    pub fn state(&self, j: usize) -> DVector<Complex64> {
        self.0.column(j).into_owned()
    }

    /// `W^dag W`.
    pub fn overlaps(&self) -> CMatrix {
        self.0.adjoint() * &self.0
    }

    pub fn gram_residual(&self, gram: &GramMatrix) -> f64 {
        max_abs(&(self.overlaps() - gram.matrix()))
    }
}

/// Minimal meter realization of `gram`.
///
/// With `G = sum_r lambda_r e_r e_r^dag`, row `r` of `W` is
/// `sqrt(lambda_r) e_r^dag`, keeping only `lambda_r > RANK_TOL`, ordered by
/// decreasing eigenvalue. Each `e_r` is rephased so its largest-magnitude
/// component (lowest index on ties) is real positive.
pub fn meter_states_from_gram(gram: &GramMatrix) -> Result<MeterStates> {
    let (values, vectors) = hermitian_eigen(gram.matrix());
    if values[0] < -INPUT_TOL {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: values[0],
        });
    }
    let n = gram.dim();
    let mut kept: Vec<usize> = (0..n).filter(|&k| values[k] > RANK_TOL).collect();
    // ascending -> descending; stable so equal eigenvalues keep solver order
    kept.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut w = CMatrix::zeros(kept.len(), n);
    for (row, &k) in kept.iter().enumerate() {
        let e = vectors.column(k);
        let mut pivot = 0;
        for idx in 1..n {
            if e[idx].norm() > e[pivot].norm() {
                pivot = idx;
            }
        }
        let phase = e[pivot] / e[pivot].norm();
        let scale = values[k].sqrt();
        for j in 0..n {
            // (e * conj(phase))^dag = conj(e) * phase
            w[(row, j)] = (e[j] * phase.conj()).conj() * scale;
        }
    }
    let states = MeterStates(w);
    let residual = states.gram_residual(gram);
    if residual > METER_TOL {
        return Err(Error::InternalConsistency(format!(
            "meter realization misses its Gram matrix by {residual:e}"
        )));
    }
    Ok(states)
}

/// Pure state of system plus meter over the product basis `|v_j, x_l>`,
/// stored system-major (`index = j * M + l`). System coordinates refer to the
/// pointer context.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    dim_system: usize,
    dim_meter: usize,
    amplitudes: DVector<Complex64>,
}

impl CompositeState {
    pub fn dim_system(&self) -> usize {
        self.dim_system
    }

    pub fn dim_meter(&self) -> usize {
        self.dim_meter
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    /// Amplitude on `|v_j, x_l>`.
    pub fn amplitude(&self, j: usize, l: usize) -> Complex64 {
        self.amplitudes[j * self.dim_meter + l]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn density_matrix(&self) -> CMatrix {
        &self.amplitudes * self.amplitudes.adjoint()
    }

    /// `Tr_meter |xi><xi|` in pointer-basis coordinates.
    pub fn partial_trace_meter(&self) -> CMatrix {
        CMatrix::from_fn(self.dim_system, self.dim_system, |j, jp| {
            (0..self.dim_meter)
                .map(|l| self.amplitude(j, l) * self.amplitude(jp, l).conj())
                .sum()
        })
    }

    /// `<xi| P_{u_k} (x) 1_meter |xi> = sum_l |<u_k, x_l|xi>|^2`, with `pointer`
    /// the context the system coordinates refer to.
    pub fn system_projector_expectation(
        &self,
        pointer: &Context,
        modality: &Modality<'_>,
    ) -> Result<f64> {
        if pointer.dim() != self.dim_system {
            return Err(Error::DimensionMismatch {
                expected: self.dim_system,
                found: pointer.dim(),
            });
        }
        pointer.check_same_dim(modality.context())?;
        let ctx = modality.context();
        let k = modality.index();
        let p = (0..self.dim_meter)
            .map(|l| {
                (0..self.dim_system)
                    .map(|j| ctx.overlap(k, pointer, j) * self.amplitude(j, l))
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .sum();
        clamp_probability(p)
    }
}

/// Applies the QND coupling to `|u_i>|x_1>`:
/// `|xi_i> = sum_j <v_j|u_i> |v_j> (x) |w_j>`.
pub fn entangle(
    initial: &Modality<'_>,
    pointer: &Context,
    meters: &MeterStates,
) -> Result<CompositeState> {
    initial.context().check_same_dim(pointer)?;
    if meters.count() != pointer.dim() {
        return Err(Error::DimensionMismatch {
            expected: pointer.dim(),
            found: meters.count(),
        });
    }
    let n = pointer.dim();
    let m = meters.dim_meter();
    let mut amplitudes = DVector::zeros(n * m);
    for j in 0..n {
        let c = pointer.overlap(j, initial.context(), initial.index());
        for l in 0..m {
            amplitudes[j * m + l] = c * meters.states()[(l, j)];
        }
    }
    Ok(CompositeState {
        dim_system: n,
        dim_meter: m,
        amplitudes,
    })
}

/// Probability of finding `u_k` when returning to the initial context after
/// the system has interacted with the meter:
///
/// `sum_{j,j'} <u_i|v_j><v_j|u_k> <w_j|w_j'> <u_k|v_j'><v_j'|u_i>`.
pub fn meter_return_probability(
    initial: &Modality<'_>,
    pointer: &Context,
    gram: &GramMatrix,
    final_index: usize,
) -> Result<f64> {
    let ctx = initial.context();
    ctx.check_same_dim(pointer)?;
    let n = pointer.dim();
    if gram.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: gram.dim(),
        });
    }
    if final_index >= n {
        return Err(Error::IndexOutOfRange {
            index: final_index,
            dim: n,
        });
    }
    let i = initial.index();
    // b_j = <u_k|v_j><v_j|u_i>, so the sum is b^dag G b
    let paths: Vec<Complex64> = (0..n)
        .map(|j| ctx.overlap(final_index, pointer, j) * pointer.overlap(j, ctx, i))
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    for j in 0..n {
        for jp in 0..n {
            total += paths[j].conj() * gram.get(j, jp) * paths[jp];
        }
    }
    if total.im.abs() > INPUT_TOL {
        return Err(Error::InternalConsistency(format!(
            "return probability has imaginary part {:e}",
            total.im
        )));
    }
    clamp_probability(total.re)
}

/// Hermitian, PSD, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let herm = hermiticity_residual(&m);
        if herm > INPUT_TOL {
            return Err(Error::InternalConsistency(format!(
                "density matrix not Hermitian: residual {herm:e}"
            )));
        }
        let trace = m.trace();
        if (trace - 1.0).norm() > INPUT_TOL {
            return Err(Error::InternalConsistency(format!(
                "density matrix trace {trace}"
            )));
        }
        let rho = DensityMatrix(m);
        let min_eigenvalue = rho.eigenvalues()[0];
        if min_eigenvalue < -INPUT_TOL {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue });
        }
        Ok(rho)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.0).0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(self.0[(i, j)].norm());
                }
            }
        }
        worst
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    /// `-Tr(rho ln rho)` in nats.
    pub fn von_neumann_entropy(&self) -> f64 {
        let s: f64 = self
            .eigenvalues()
            .into_iter()
            .filter(|&l| l > 0.0)
            .map(|l| -l * l.ln())
            .sum();
        s.max(0.0)
    }

    pub fn trace_residual(&self) -> f64 {
        (self.0.trace() - 1.0).norm()
    }

    /// Re-expresses a system matrix written in `basis` coordinates in the
    /// computational basis: `V rho V^dag`.
    pub fn in_computational_basis(&self, basis: &Context) -> Result<DensityMatrix> {
        if basis.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: basis.dim(),
            });
        }
        Ok(DensityMatrix(
            basis.basis() * &self.0 * basis.basis().adjoint(),
        ))
    }
}

/// Post-measurement compound state for orthogonal meters,
/// `rho_i = sum_j |c_ji|^2 |v_j><v_j| (x) |w_j><w_j|`, over `|v_j, x_l>`.
///
/// Each branch's meter state is the pure `|w_j>`.
pub fn post_measurement_state(
    initial: &Modality<'_>,
    pointer: &Context,
    meters: &MeterStates,
) -> Result<DensityMatrix> {
    initial.context().check_same_dim(pointer)?;
    let n = pointer.dim();
    if meters.count() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: meters.count(),
        });
    }
    let residual = max_abs_diff_identity(&meters.overlaps());
    if residual > METER_TOL {
        return Err(Error::MeterNotOrthogonal { residual });
    }
    let m = meters.dim_meter();
    let mut rho = CMatrix::zeros(n * m, n * m);
    for j in 0..n {
        let weight = pointer
            .overlap(j, initial.context(), initial.index())
            .norm_sqr();
        let w = meters.state(j);
        let block = (&w * w.adjoint()).scale(weight);
        rho.view_mut((j * m, j * m), (m, m)).copy_from(&block);
    }
    DensityMatrix::new(rho)
}

/// Traces the meter out of `state`; in pointer coordinates element `(j, j')`
/// is `c_j conj(c_j') <w_j'|w_j>`.
pub fn reduced_system_state(
    state: &CompositeState,
    gram: &GramMatrix,
    pointer: &Context,
) -> Result<DensityMatrix> {
    if pointer.dim() != state.dim_system() {
        return Err(Error::DimensionMismatch {
            expected: state.dim_system(),
            found: pointer.dim(),
        });
    }
    if gram.dim() != state.dim_system() {
        return Err(Error::DimensionMismatch {
            expected: state.dim_system(),
            found: gram.dim(),
        });
    }
    DensityMatrix::new(state.partial_trace_meter())
}

/// Reduced system state after a chain of `m_count` identical meters, each
/// entangled in the pointer basis with Gram matrix `gram`; coherences pick up
/// a factor `<w_j'|w_j>` per meter.
pub fn meter_chain_reduced_state(
    initial: &Modality<'_>,
    pointer: &Context,
    gram: &GramMatrix,
    m_count: u32,
) -> Result<DensityMatrix> {
    initial.context().check_same_dim(pointer)?;
    let n = pointer.dim();
    if gram.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: gram.dim(),
        });
    }
    let c: Vec<Complex64> = (0..n)
        .map(|j| pointer.overlap(j, initial.context(), initial.index()))
        .collect();
    let rho = CMatrix::from_fn(n, n, |j, jp| {
        let coherence = if j == jp {
            Complex64::new(1.0, 0.0)
        } else {
            gram.get(jp, j).powu(m_count)
        };
        c[j] * c[jp].conj() * coherence
    });
    DensityMatrix::new(rho)
}
