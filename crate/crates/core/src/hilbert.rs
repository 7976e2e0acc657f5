//! Contexts as orthonormal bases, their rank-one projectors, and the unitaries
//! relating two contexts.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, INPUT_TOL};

/// Dense complex matrix used for every operator in the crate.
pub type CMatrix = DMatrix<Complex64>;

/// Conjugate-linear in `a`: returns `<a|b>`.
///
/// The loop order is fixed so that `inner(a, b)` is the exact complex
/// conjugate of `inner(b, a)`.
pub(crate) fn inner<'a, I, J>(a: I, b: J) -> Complex64
where
    I: IntoIterator<Item = &'a Complex64>,
    J: IntoIterator<Item = &'a Complex64>,
{
    a.into_iter()
        .zip(b)
        .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

/// `max_{j,k} |(M^dag M - I)_{jk}|`.
pub fn orthonormality_residual(m: &CMatrix) -> f64 {
    let gram = m.adjoint() * m;
    max_abs_diff_identity(&gram)
}

pub(crate) fn max_abs_diff_identity(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// One matrix entry in a scenario file: either a bare real number or a
/// `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexEntry {
    Real(f64),
    Complex([f64; 2]),
}

impl ComplexEntry {
    pub fn value(self) -> Complex64 {
        match self {
            ComplexEntry::Real(re) => Complex64::new(re, 0.0),
            ComplexEntry::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

/// Row-major matrix literal, as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixSpec(pub Vec<Vec<ComplexEntry>>);

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, Vec::len);
        if let Some(bad) = self.0.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        let m = CMatrix::from_fn(rows, cols, |i, j| self.0[i][j].value());
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix literal"));
        }
        Ok(m)
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        MatrixSpec(
            (0..m.nrows())
                .map(|i| {
                    (0..m.ncols())
                        .map(|j| ComplexEntry::Complex([m[(i, j)].re, m[(i, j)].im]))
                        .collect()
                })
                .collect(),
        )
    }
}

/// Declarative description of a context.
///
/// `Explicit` matrices are given row-major; column `j` is the modality vector
/// `|u_j>`. `Rotation` is the real dim-2 basis
/// `(cos θ/2, sin θ/2), (-sin θ/2, cos θ/2)`, so `θ` is the Bloch-sphere angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawContextSpec")]
pub enum ContextSpec {
    Computational,
    Fourier,
    Rotation { theta: f64 },
    Haar { seed: u64 },
    Explicit { matrix: MatrixSpec },
}

// Flat wire form. Deserializing through a plain struct keeps parser
// positions in error messages and rejects stray keys on every kind.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContextSpec {
    kind: ContextKind,
    theta: Option<f64>,
    seed: Option<u64>,
    matrix: Option<MatrixSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ContextKind {
    Computational,
    Fourier,
    Rotation,
    Haar,
    Explicit,
}

impl TryFrom<RawContextSpec> for ContextSpec {
    type Error = String;

    fn try_from(raw: RawContextSpec) -> std::result::Result<Self, String> {
        use ContextKind as K;
        let kind = format!("{:?}", raw.kind).to_lowercase();
        let expected: &[&str] = match raw.kind {
            K::Computational | K::Fourier => &[],
            K::Rotation => &["theta"],
            K::Haar => &["seed"],
            K::Explicit => &["matrix"],
        };
        check_fields(
            &kind,
            expected,
            &[
                ("theta", raw.theta.is_some()),
                ("seed", raw.seed.is_some()),
                ("matrix", raw.matrix.is_some()),
            ],
        )?;
        Ok(match raw.kind {
            K::Computational => ContextSpec::Computational,
            K::Fourier => ContextSpec::Fourier,
            K::Rotation => ContextSpec::Rotation {
                theta: raw.theta.expect("checked"),
            },
            K::Haar => ContextSpec::Haar {
                seed: raw.seed.expect("checked"),
            },
            K::Explicit => ContextSpec::Explicit {
                matrix: raw.matrix.expect("checked"),
            },
        })
    }
}

/// Every field in `expected` is present and nothing else is.
pub(crate) fn check_fields(
    kind: &str,
    expected: &[&str],
    present: &[(&str, bool)],
) -> std::result::Result<(), String> {
    for &(name, is_present) in present {
        let wanted = expected.contains(&name);
        if is_present && !wanted {
            return Err(format!("field `{name}` does not apply to kind `{kind}`"));
        }
        if !is_present && wanted {
            return Err(format!("missing field `{name}` for kind `{kind}`"));
        }
    }
    Ok(())
}

impl ContextSpec {
    /// The basis matrix this spec describes, before any orthonormality check.
    pub fn raw_basis(&self, dim: usize) -> Result<CMatrix> {
        if dim < 2 {
            return Err(Error::InvalidDimension(dim));
        }
        match self {
            ContextSpec::Computational => Ok(CMatrix::identity(dim, dim)),
            ContextSpec::Fourier => {
                let norm = 1.0 / (dim as f64).sqrt();
                Ok(CMatrix::from_fn(dim, dim, |j, k| {
                    // reduce jk mod dim before scaling to keep the phase small
                    let phase = 2.0 * PI * ((j * k) % dim) as f64 / dim as f64;
                    Complex64::from_polar(norm, phase)
                }))
            }
            ContextSpec::Rotation { theta } => {
                if dim != 2 {
                    return Err(Error::DimensionMismatch {
                        expected: 2,
                        found: dim,
                    });
                }
                if !theta.is_finite() {
                    return Err(Error::NonFinite("rotation angle"));
                }
                let (s, c) = (theta / 2.0).sin_cos();
                Ok(CMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Complex64::new(c, 0.0),
                        Complex64::new(-s, 0.0),
                        Complex64::new(s, 0.0),
                        Complex64::new(c, 0.0),
                    ],
                ))
            }
            ContextSpec::Haar { seed } => Ok(haar_random_unitary(*seed, dim)?.0),
            ContextSpec::Explicit { matrix } => {
                let m = matrix.to_matrix()?;
                if m.nrows() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: m.nrows(),
                    });
                }
                if m.ncols() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: m.ncols(),
                    });
                }
                Ok(m)
            }
        }
    }
}

/// An ordered orthonormal basis: the `N` mutually exclusive modalities of one
/// measurement setup.
///
/// Two contexts are the same context iff their ids match.
#[derive(Debug, Clone)]
pub struct Context {
    id: String,
    basis: CMatrix,
}

impl PartialEq for Context {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for Context {}

impl Context {
    /// Validates `basis` (square, `N >= 2`, finite, orthonormal within
    /// [`INPUT_TOL`]) and wraps it.
    pub fn new(id: impl Into<String>, basis: CMatrix) -> Result<Self> {
        if basis.nrows() != basis.ncols() {
            return Err(Error::DimensionMismatch {
                expected: basis.nrows(),
                found: basis.ncols(),
            });
        }
        if basis.nrows() < 2 {
            return Err(Error::InvalidDimension(basis.nrows()));
        }
        if basis.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("context basis"));
        }
        let residual = orthonormality_residual(&basis);
        if residual > INPUT_TOL {
            return Err(Error::NonOrthonormalInput { residual });
        }
        Ok(Context {
            id: id.into(),
            basis,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Column `j` is `|u_j>`.
    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn vector(&self, index: usize) -> DVector<Complex64> {
        self.basis.column(index).into_owned()
    }

    pub fn modality(&self, index: usize) -> Result<Modality<'_>> {
        Modality::new(self, index)
    }

    pub fn modalities(&self) -> impl Iterator<Item = Modality<'_>> {
        (0..self.dim()).map(move |index| Modality {
            context: self,
            index,
        })
    }

    pub fn projectors(&self) -> Vec<Projector> {
        self.modalities().map(|m| projector(&m)).collect()
    }

    /// `<self_j | other_i>` for column `j` of this context and column `i` of
    /// `other`.
    pub(crate) fn overlap(&self, j: usize, other: &Context, i: usize) -> Complex64 {
        inner(self.basis.column(j).iter(), other.basis.column(i).iter())
    }

    pub(crate) fn check_same_dim(&self, other: &Context) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

/// Outcome `index` of `context`.
#[derive(Debug, Clone, Copy)]
pub struct Modality<'a> {
    context: &'a Context,
    index: usize,
}

impl<'a> Modality<'a> {
    pub fn new(context: &'a Context, index: usize) -> Result<Self> {
        if index >= context.dim() {
            return Err(Error::IndexOutOfRange {
                index,
                dim: context.dim(),
            });
        }
        Ok(Modality { context, index })
    }

    pub fn context(&self) -> &'a Context {
        self.context
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn vector(&self) -> DVector<Complex64> {
        self.context.vector(self.index)
    }
}

impl PartialEq for Modality<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.context == other.context && self.index == other.index
    }
}

/// Hermitian rank-one projector `|u><u|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector(CMatrix);

impl Projector {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn hermiticity_residual(&self) -> f64 {
        max_abs(&(&self.0 - self.0.adjoint()))
    }

    pub fn idempotency_residual(&self) -> f64 {
        max_abs(&(&self.0 * &self.0 - &self.0))
    }

    pub fn trace_residual(&self) -> f64 {
        (self.0.trace() - Complex64::new(1.0, 0.0)).norm()
    }
}

pub fn projector(m: &Modality<'_>) -> Projector {
    let v = m.vector();
    Projector(&v * v.adjoint())
}

/// Unitary `N x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(CMatrix);

impl UnitaryMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `max |U^dag U - I|`.
    pub fn unitarity_residual(&self) -> f64 {
        orthonormality_residual(&self.0)
    }

    /// Applies `self` first, then `next`: the matrix product `next * self`.
    pub fn then(&self, next: &UnitaryMatrix) -> UnitaryMatrix {
        UnitaryMatrix(&next.0 * &self.0)
    }

    pub fn adjoint(&self) -> UnitaryMatrix {
        UnitaryMatrix(self.0.adjoint())
    }
}

/// Builds a context named `id` from `spec`, validating the result.
pub fn build_context(id: impl Into<String>, spec: &ContextSpec, dim: usize) -> Result<Context> {
    Context::new(id, spec.raw_basis(dim)?)
}

/// The unitary `U` with `U|u_i> = |v_i>` for every column, i.e. `V U^dag`.
pub fn context_change_unitary(from: &Context, to: &Context) -> Result<UnitaryMatrix> {
    from.check_same_dim(to)?;
    Ok(UnitaryMatrix(to.basis() * from.basis().adjoint()))
}

/// Haar-distributed unitary from a ChaCha20 stream seeded with `seed`.
///
/// Entries of a complex Ginibre matrix are drawn column by column, then the
/// matrix is QR-factored and `Q` is multiplied by the phases of `diag(R)`, so
/// the result corresponds to the factorization with a real positive diagonal
/// in `R`.
pub fn haar_random_unitary(seed: u64, dim: usize) -> Result<UnitaryMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut ginibre = CMatrix::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            let re = draw();
            let im = draw();
            ginibre[(i, j)] = Complex64::new(re * scale, im * scale);
        }
    }
    let qr = ginibre.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    Ok(UnitaryMatrix(q))
}
