//! Matrix form of the moment comparison: rank-factored matrices, Hadamard
//! (entrywise) powers, and the explicit multiset expansion witnessing
//! `rank(A∘m) <= C(n+m-1, m)`.
//!
//! A weighted instance becomes the k×l matrix `a_ij = p_j^{1/p} ⟨t_i, x_j⟩`
//! with the rank-n factorization `A = T · X` built in; the column-max /
//! row-sum ratio of that matrix reproduces the strong/weak moment ratio
//! exactly.

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::law::{DiscreteVectorLaw, DirectionSet, MomentInstance};
use crate::numeric;
use crate::tol;

/// k×l matrix with explicit factors witnessing rank ≤ inner_dim.
#[derive(Debug, Clone, PartialEq)]
pub struct RankFactoredMatrix {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    entries: DMatrix<f64>,
}

impl RankFactoredMatrix {
    /// Builds the product `left · right` and stores it as the entries.
    pub fn new(left: DMatrix<f64>, right: DMatrix<f64>) -> Result<Self> {
        if left.ncols() != right.nrows() {
            return Err(Error::Domain {
                quantity: "factor inner dimensions",
                requirement: "left.ncols() == right.nrows()",
                value: left.ncols() as f64,
            });
        }
        let entries = &left * &right;
        Ok(RankFactoredMatrix {
            left,
            right,
            entries,
        })
    }

    /// Accepts a claimed factorization of `entries`, verifying it to
    /// `tol::FACTOR_REL` relative Frobenius.
    pub(crate) fn with_entries(
        left: DMatrix<f64>,
        right: DMatrix<f64>,
        entries: DMatrix<f64>,
    ) -> Result<Self> {
        let product = &left * &right;
        let diff = numeric::safe_frobenius(&(&product - &entries));
        let scale = numeric::safe_frobenius(&entries)
            .max(numeric::safe_frobenius(&left) * numeric::safe_frobenius(&right));
        let rel_err = if scale == 0.0 { 0.0 } else { diff / scale };
        if !(rel_err <= tol::FACTOR_REL) {
            return Err(Error::ReconstructionMismatch { rel_err });
        }
        Ok(RankFactoredMatrix {
            left,
            right,
            entries,
        })
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn inner_dim(&self) -> usize {
        self.left.ncols()
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn condition_iii(&self, p: f64) -> ConditionRatio {
        condition_iii_ratio(&self.entries, p)
    }
}

/// Multiplicity vector α of length n with |α| = m: one degree-m monomial in
/// n variables. Enumeration is lexicographic, so column indexing of the
/// expansion is reproducible across runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultisetIndex {
    alpha: Vec<usize>,
}

impl MultisetIndex {
    pub fn alpha(&self) -> &[usize] {
        &self.alpha
    }

    pub fn degree(&self) -> usize {
        self.alpha.iter().sum()
    }

    /// All multiplicity vectors of length n summing to m, in ascending
    /// lexicographic order. There are exactly `C(n+m-1, m)` of them.
    pub fn enumerate(n: usize, m: usize) -> Vec<MultisetIndex> {
        assert!(n >= 1, "need at least one variable");
        let mut out = Vec::new();
        let mut alpha = vec![0usize; n];
        fill_lex(&mut out, &mut alpha, 0, m);
        out
    }

    /// `m! / Π α_r!`, exact in u128 while it fits.
    pub fn multinomial(&self) -> f64 {
        let m = self.degree();
        if m <= 33 {
            let mut acc: u128 = (1..=m as u128).product();
            for &a in &self.alpha {
                let fact: u128 = (1..=a as u128).product();
                acc /= fact;
            }
            acc as f64
        } else {
            self.ln_multinomial().exp()
        }
    }

    pub fn ln_multinomial(&self) -> f64 {
        let m = self.degree() as f64;
        ln_gamma(m + 1.0)
            - self
                .alpha
                .iter()
                .map(|&a| ln_gamma(a as f64 + 1.0))
                .sum::<f64>()
    }
}

fn fill_lex(out: &mut Vec<MultisetIndex>, alpha: &mut Vec<usize>, pos: usize, remaining: usize) {
    if pos + 1 == alpha.len() {
        alpha[pos] = remaining;
        out.push(MultisetIndex {
            alpha: alpha.clone(),
        });
        return;
    }
    for a in 0..=remaining {
        alpha[pos] = a;
        fill_lex(out, alpha, pos + 1, remaining - a);
    }
}

/// Weighted matrix form of an instance, with the probabilities kept aside
/// so the instance can be reconstructed.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMatrix {
    pub matrix: RankFactoredMatrix,
    /// Original atom probabilities (folded into the columns as p_j^{1/p}).
    pub weights: Vec<f64>,
    pub exponent: f64,
}

impl InstanceMatrix {
    /// Unfolds the weights back out of the columns.
    pub fn to_instance(&self) -> Result<MomentInstance> {
        let m = &self.matrix;
        let n = m.inner_dim();
        let l = m.ncols();
        let mut points = Vec::with_capacity(l);
        for j in 0..l {
            let w = self.weights[j];
            let col = m.right().column(j);
            let point = if w > 0.0 {
                let unfold = w.powf(-1.0 / self.exponent);
                (0..n).map(|r| col[r] * unfold).collect()
            } else {
                vec![0.0; n]
            };
            points.push(point);
        }
        let directions = (0..m.nrows())
            .map(|i| (0..n).map(|r| m.left()[(i, r)]).collect())
            .collect();
        MomentInstance::new(
            DiscreteVectorLaw::new(points, self.weights.clone())?,
            DirectionSet::new(directions)?,
            self.exponent,
        )
    }
}

/// Builds `a_ij = p_j^{1/p} ⟨t_i, x_j⟩` with its rank factorization: rows of
/// the left factor are the directions, columns of the right factor are the
/// weight-folded atoms.
pub fn instance_to_matrix(inst: &MomentInstance) -> InstanceMatrix {
    let n = inst.law().dimension();
    let k = inst.directions().len();
    let l = inst.law().support_size();
    let p = inst.exponent();
    let left = DMatrix::from_fn(k, n, |i, r| inst.directions().directions()[i][r]);
    let right = DMatrix::from_fn(n, l, |r, j| {
        inst.law().probs()[j].powf(1.0 / p) * inst.law().points()[j][r]
    });
    let matrix = RankFactoredMatrix::new(left, right).expect("shapes agree by construction");
    InstanceMatrix {
        matrix,
        weights: inst.law().probs().to_vec(),
        exponent: p,
    }
}

/// Column-max vs row-sum comparison of a raw matrix:
/// `lhs = (Σ_j sup_i |a_ij|^p)^{1/p}`, `rhs = sup_i (Σ_j |a_ij|^p)^{1/p}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionRatio {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, with 0/0 reported as 1.
    pub ratio: f64,
}

pub fn condition_iii_ratio(a: &DMatrix<f64>, p: f64) -> ConditionRatio {
    let (k, l) = a.shape();
    let ones = vec![1.0; l.max(k)];
    let col_max: Vec<f64> = (0..l)
        .map(|j| (0..k).fold(0.0_f64, |m, i| m.max(a[(i, j)].abs())))
        .collect();
    let lhs = numeric::weighted_pow_sum_root(&ones[..l], &col_max, p);
    let mut row = vec![0.0; l];
    let mut rhs = 0.0_f64;
    for i in 0..k {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = a[(i, j)].abs();
        }
        rhs = rhs.max(numeric::weighted_pow_sum_root(&ones[..l], &row, p));
    }
    let ratio = if rhs == 0.0 { 1.0 } else { lhs / rhs };
    ConditionRatio { lhs, rhs, ratio }
}

/// Entrywise m-th power.
pub fn hadamard_power(a: &DMatrix<f64>, m: u32) -> DMatrix<f64> {
    debug_assert!(m >= 1);
    a.map(|v| v.powi(m as i32))
}

/// Count of singular values above `tol::RANK_RTOL · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let sigma_max = sv.iter().fold(0.0_f64, |m, s| m.max(*s));
    if sigma_max == 0.0 {
        return 0;
    }
    let cutoff = tol::RANK_RTOL * sigma_max;
    sv.iter().filter(|s| **s > cutoff).count()
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Factorization of `A∘m` with inner dimension `N = C(n+m-1, m)`: column α
/// of the left factor is `multinomial(m; α) · Π_r u_r^{∘α_r}` (coefficient
/// absorbed on the left), row α of the right factor is the matching pure
/// monomial of the right columns. The product is verified against the
/// entrywise power before returning.
///
/// When `m · ln(max entry)` exceeds `tol::LOG_EXPANSION` the monomials are
/// formed in log-magnitude + sign form with a per-column balancing shift,
/// so intermediate products cannot overflow while the target stays
/// representable.
pub fn expand_factorization(m0: &RankFactoredMatrix, m: u32) -> Result<RankFactoredMatrix> {
    debug_assert!(m >= 1);
    let n = m0.inner_dim();
    if n == 0 {
        return Err(Error::Domain {
            quantity: "inner dimension",
            requirement: "at least 1",
            value: 0.0,
        });
    }
    let k = m0.nrows();
    let l = m0.ncols();
    let indices = MultisetIndex::enumerate(n, m as usize);
    let target = hadamard_power(m0.entries(), m);

    let magnitude = max_abs(m0.left()).max(max_abs(m0.right())).max(n as f64);
    let log_path = m as f64 * magnitude.max(1.0).ln() > tol::LOG_EXPANSION;

    let mut left = DMatrix::zeros(k, indices.len());
    let mut right = DMatrix::zeros(indices.len(), l);
    for (c, idx) in indices.iter().enumerate() {
        if log_path {
            fill_column_logged(m0, idx, c, &mut left, &mut right);
        } else {
            let coeff = idx.multinomial();
            for i in 0..k {
                let mut v = coeff;
                for (r, &a) in idx.alpha().iter().enumerate() {
                    if a > 0 {
                        v *= m0.left()[(i, r)].powi(a as i32);
                    }
                }
                left[(i, c)] = v;
            }
            for j in 0..l {
                let mut v = 1.0;
                for (r, &a) in idx.alpha().iter().enumerate() {
                    if a > 0 {
                        v *= m0.right()[(r, j)].powi(a as i32);
                    }
                }
                right[(c, j)] = v;
            }
        }
    }

    RankFactoredMatrix::with_entries(left, right, target)
}

/// Log-magnitude + sign evaluation of one expansion column, with a
/// balancing shift moving scale from the larger factor to the smaller one.
fn fill_column_logged(
    m0: &RankFactoredMatrix,
    idx: &MultisetIndex,
    c: usize,
    left: &mut DMatrix<f64>,
    right: &mut DMatrix<f64>,
) {
    let k = m0.nrows();
    let l = m0.ncols();
    let ln_coeff = idx.ln_multinomial();

    let mut llog = vec![f64::NEG_INFINITY; k];
    let mut lsign = vec![1.0_f64; k];
    for i in 0..k {
        let mut lg = ln_coeff;
        let mut sg = 1.0;
        for (r, &a) in idx.alpha().iter().enumerate() {
            if a == 0 {
                continue;
            }
            let v = m0.left()[(i, r)];
            if v == 0.0 {
                lg = f64::NEG_INFINITY;
                break;
            }
            lg += a as f64 * v.abs().ln();
            if v < 0.0 && a % 2 == 1 {
                sg = -sg;
            }
        }
        llog[i] = lg;
        lsign[i] = sg;
    }

    let mut rlog = vec![f64::NEG_INFINITY; l];
    let mut rsign = vec![1.0_f64; l];
    for j in 0..l {
        let mut lg = 0.0;
        let mut sg = 1.0;
        for (r, &a) in idx.alpha().iter().enumerate() {
            if a == 0 {
                continue;
            }
            let v = m0.right()[(r, j)];
            if v == 0.0 {
                lg = f64::NEG_INFINITY;
                break;
            }
            lg += a as f64 * v.abs().ln();
            if v < 0.0 && a % 2 == 1 {
                sg = -sg;
            }
        }
        rlog[j] = lg;
        rsign[j] = sg;
    }

    let lmax = llog.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let rmax = rlog.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let shift = if lmax.is_finite() && rmax.is_finite() {
        (lmax - rmax) / 2.0
    } else {
        0.0
    };
    for i in 0..k {
        left[(i, c)] = lsign[i] * (llog[i] - shift).exp();
    }
    for j in 0..l {
        right[(c, j)] = rsign[j] * (rlog[j] + shift).exp();
    }
}
