//! Shared numeric kernels: overflow-safe power sums, seeded stream
//! derivation, span bases, and symmetric pseudo-inverse pieces.

use nalgebra::{DMatrix, DVector};

use crate::tol;

/// Compensated (Kahan) accumulator. Keeps long nonnegative sums accurate to
/// a few ulps regardless of term count, which the certificate identities
/// rely on.
#[derive(Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, term: f64) {
        let y = term - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// `(sum_j w_j * v_j^p)^{1/p}` for nonnegative values and weights.
///
/// Large exponents (or huge values) are accumulated in max-rescaled form so
/// no intermediate power overflows; the rescaling is exact in the result up
/// to ordinary rounding.
pub(crate) fn weighted_pow_sum_root(weights: &[f64], values: &[f64], p: f64) -> f64 {
    debug_assert_eq!(weights.len(), values.len());
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(*v));
    if scale == 0.0 {
        return 0.0;
    }
    let mut acc = KahanSum::default();
    if p <= tol::LOG_DOMAIN_P && p * scale.max(1.0).ln() <= tol::LOG_EXPANSION {
        for (w, v) in weights.iter().zip(values) {
            acc.add(w * v.powf(p));
        }
        acc.value().powf(1.0 / p)
    } else {
        for (w, v) in weights.iter().zip(values) {
            acc.add(w * (v / scale).powf(p));
        }
        scale * acc.value().powf(1.0 / p)
    }
}

/// Frobenius norm with max-rescaling, so matrices whose entries approach
/// the f64 range do not overflow during the sum of squares.
pub(crate) fn safe_frobenius(a: &DMatrix<f64>) -> f64 {
    let s = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if s == 0.0 || !s.is_finite() {
        return s;
    }
    let mut acc = KahanSum::default();
    for v in a.iter() {
        let r = v / s;
        acc.add(r * r);
    }
    s * acc.value().sqrt()
}

/// splitmix64 finalizer; decorrelates nearby seeds.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-stream seed from a root seed and a stream index.
pub(crate) fn mix_seed(seed: u64, index: u64) -> u64 {
    splitmix(seed ^ splitmix(index))
}

/// |a - b| relative to the larger magnitude; 0 when both vanish.
pub(crate) fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Orthonormal basis (as matrix columns) of the span of the given vectors.
///
/// Singular vectors with `sigma > RANK_RTOL * sigma_max` are kept, matching
/// the crate-wide numerical-rank convention.
pub(crate) fn span_basis(vectors: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    if vectors.is_empty() {
        return DMatrix::zeros(dim, 0);
    }
    let mat = DMatrix::from_columns(vectors);
    let svd = mat.svd(true, false);
    let u = svd.u.expect("SVD with compute_u");
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |m, s| m.max(*s));
    if sigma_max == 0.0 {
        return DMatrix::zeros(dim, 0);
    }
    let cutoff = tol::RANK_RTOL * sigma_max;
    let cols: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > cutoff)
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Result of projecting through the pseudo-inverse of a symmetric PSD
/// matrix: the quadratic form `s^T C^+ s` and the norm of the component of
/// `s` outside the numerical range of `C`.
pub(crate) struct PinvQuadform {
    pub quadform: f64,
    pub null_component: f64,
}

/// Computes `s^T C^+ s` with eigenvalues below `PINV_RTOL * lambda_max`
/// treated as zero. `c` must be symmetric.
pub(crate) fn pinv_quadform(c: &DMatrix<f64>, s: &DVector<f64>) -> PinvQuadform {
    let eigen = c.clone().symmetric_eigen();
    let lambda_max = eigen.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let cutoff = tol::PINV_RTOL * lambda_max;
    let mut quadform = 0.0;
    let mut null_sq = 0.0;
    for (i, &lambda) in eigen.eigenvalues.iter().enumerate() {
        let coeff = eigen.eigenvectors.column(i).dot(s);
        if lambda > cutoff {
            quadform += coeff * coeff / lambda;
        } else {
            null_sq += coeff * coeff;
        }
    }
    PinvQuadform {
        quadform,
        null_component: null_sq.sqrt(),
    }
}
