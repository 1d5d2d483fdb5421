//! Discrete probability laws on ℝ^n, direction sets, and exact weak/strong
//! moment computation over the finite support.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::constants;
use crate::error::{Error, Result};
use crate::numeric;
use crate::tol;

/// Finitely supported probability law on ℝ^n: atoms `x_j` with weights
/// `p_j >= 0` summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteVectorLaw {
    dimension: usize,
    points: Vec<DVector<f64>>,
    probs: Vec<f64>,
}

impl DiscreteVectorLaw {
    /// Validates and builds a law. Probabilities must be nonnegative and sum
    /// to 1 within `tol::PROB_SUM`; they are then renormalized exactly so
    /// serialization round-trips cannot drift.
    pub fn new(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        let points = points.into_iter().map(DVector::from_vec).collect();
        Self::from_vectors(points, probs)
    }

    pub fn from_vectors(points: Vec<DVector<f64>>, probs: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySupport);
        }
        let dimension = points[0].len();
        if dimension == 0 {
            return Err(Error::ZeroDimension);
        }
        for (index, x) in points.iter().enumerate() {
            if x.len() != dimension {
                return Err(Error::PointLength {
                    index,
                    found: x.len(),
                    expected: dimension,
                });
            }
            if x.iter().any(|c| !c.is_finite()) {
                return Err(Error::Domain {
                    quantity: "point coordinate",
                    requirement: "finite entries",
                    value: x.iter().copied().find(|c| !c.is_finite()).unwrap(),
                });
            }
        }
        if probs.len() != points.len() {
            return Err(Error::ProbabilityCount {
                found: probs.len(),
                expected: points.len(),
            });
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::Domain {
                    quantity: "probability",
                    requirement: "finite entries",
                    value,
                });
            }
            if value < 0.0 {
                return Err(Error::NegativeProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol::PROB_SUM {
            return Err(Error::ProbabilitySum {
                sum,
                tolerance: tol::PROB_SUM,
            });
        }
        let probs = probs.into_iter().map(|p| p / sum).collect();
        Ok(DiscreteVectorLaw {
            dimension,
            points,
            probs,
        })
    }

    /// Uniform law on `{±e_1, ..., ±e_n}`.
    pub fn canonical(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroDimension);
        }
        let mut points = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut plus = DVector::zeros(n);
            plus[i] = 1.0;
            let minus = -&plus;
            points.push(plus);
            points.push(minus);
        }
        let probs = vec![1.0 / (2 * n) as f64; 2 * n];
        Self::from_vectors(points, probs)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn support_size(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Second-moment matrix `Σ_j p_j x_j x_jᵀ`. For symmetric laws this is
    /// the covariance; degeneracy is left to downstream rank checks.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.dimension, self.dimension);
        for (x, &p) in self.points.iter().zip(&self.probs) {
            c.ger(p, x, x, 1.0);
        }
        c
    }

    /// Law of `εX` with `ε = ±1` uniform and independent of `X`: every atom
    /// is split into a `±` pair with halved weight, then atoms closer than
    /// `tol::ATOM_MERGE` in sup-norm are merged (first occurrence wins), so
    /// the operation is idempotent. Moments against any direction set are
    /// unchanged.
    pub fn symmetrize(&self) -> Self {
        let mut points = Vec::with_capacity(2 * self.points.len());
        let mut probs = Vec::with_capacity(2 * self.probs.len());
        for (x, &p) in self.points.iter().zip(&self.probs) {
            points.push(x.clone());
            probs.push(p / 2.0);
            points.push(-x);
            probs.push(p / 2.0);
        }
        let (points, probs) = merge_atoms(points, probs);
        DiscreteVectorLaw {
            dimension: self.dimension,
            points,
            probs,
        }
    }
}

fn merge_atoms(points: Vec<DVector<f64>>, probs: Vec<f64>) -> (Vec<DVector<f64>>, Vec<f64>) {
    let mut kept_points: Vec<DVector<f64>> = Vec::with_capacity(points.len());
    let mut kept_probs: Vec<f64> = Vec::with_capacity(probs.len());
    'atoms: for (x, p) in points.into_iter().zip(probs) {
        for (y, q) in kept_points.iter().zip(kept_probs.iter_mut()) {
            let close = x
                .iter()
                .zip(y.iter())
                .all(|(a, b)| (a - b).abs() <= tol::ATOM_MERGE);
            if close {
                *q += p;
                continue 'atoms;
            }
        }
        kept_points.push(x);
        kept_probs.push(p);
    }
    (kept_points, kept_probs)
}

/// Finite set of directions `{t_i}` in ℝ^n.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    dimension: usize,
    directions: Vec<DVector<f64>>,
}

impl DirectionSet {
    pub fn new(directions: Vec<Vec<f64>>) -> Result<Self> {
        let directions = directions.into_iter().map(DVector::from_vec).collect();
        Self::from_vectors(directions)
    }

    pub fn from_vectors(directions: Vec<DVector<f64>>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::EmptyDirections);
        }
        let dimension = directions[0].len();
        if dimension == 0 {
            return Err(Error::ZeroDimension);
        }
        for (index, t) in directions.iter().enumerate() {
            if t.len() != dimension {
                return Err(Error::DirectionLength {
                    index,
                    found: t.len(),
                    expected: dimension,
                });
            }
            if t.iter().any(|c| !c.is_finite()) {
                return Err(Error::Domain {
                    quantity: "direction coordinate",
                    requirement: "finite entries",
                    value: t.iter().copied().find(|c| !c.is_finite()).unwrap(),
                });
            }
        }
        Ok(DirectionSet {
            dimension,
            directions,
        })
    }

    /// The standard basis `{e_1, ..., e_n}`.
    pub fn canonical_basis(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroDimension);
        }
        let directions = (0..n)
            .map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                e
            })
            .collect();
        Self::from_vectors(directions)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[DVector<f64>] {
        &self.directions
    }
}

pub(crate) fn validate_exponent(p: f64) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::ExponentNotFinite { p });
    }
    if p >= 2.0 {
        Ok(())
    } else if p >= 1.0 {
        // The comparison range starts at 2; [1, 2) is a meaningful moment
        // exponent that is deliberately not extrapolated.
        Err(Error::ExponentBelowTwo { p })
    } else {
        Err(Error::Domain {
            quantity: "exponent p",
            requirement: "p >= 2",
            value: p,
        })
    }
}

/// A law, a direction set over the same space, and an exponent `p >= 2`:
/// the unit of moment comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentInstance {
    law: DiscreteVectorLaw,
    directions: DirectionSet,
    exponent: f64,
}

impl MomentInstance {
    pub fn new(law: DiscreteVectorLaw, directions: DirectionSet, exponent: f64) -> Result<Self> {
        if law.dimension() != directions.dimension() {
            return Err(Error::DimensionMismatch {
                law: law.dimension(),
                directions: directions.dimension(),
            });
        }
        validate_exponent(exponent)?;
        Ok(MomentInstance {
            law,
            directions,
            exponent,
        })
    }

    /// Uniform law on `{±e_i}` paired with `T = {e_i}`: the instance whose
    /// moment quantities all have closed forms (ratio `n^{1/p}`, dual-norm
    /// moment `n^{1/p}`).
    pub fn canonical(n: usize, p: f64) -> Result<Self> {
        Self::new(
            DiscreteVectorLaw::canonical(n)?,
            DirectionSet::canonical_basis(n)?,
            p,
        )
    }

    pub fn law(&self) -> &DiscreteVectorLaw {
        &self.law
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Same data with the law replaced (used by the reduction steps).
    pub(crate) fn with_law(&self, law: DiscreteVectorLaw, exponent: f64) -> Result<Self> {
        Self::new(law, self.directions.clone(), exponent)
    }

    /// `sup_i (Σ_j p_j |⟨t_i, x_j⟩|^p)^{1/p}`: the largest one-dimensional
    /// marginal moment.
    pub fn weak_moment(&self) -> f64 {
        let probs = self.law.probs();
        let mut vals = vec![0.0; probs.len()];
        let mut best = 0.0_f64;
        for t in self.directions.directions() {
            for (j, x) in self.law.points().iter().enumerate() {
                vals[j] = t.dot(x).abs();
            }
            best = best.max(numeric::weighted_pow_sum_root(probs, &vals, self.exponent));
        }
        best
    }

    /// `(Σ_j p_j sup_i |⟨t_i, x_j⟩|^p)^{1/p}`: the p-th moment of the
    /// supremum itself.
    pub fn strong_moment(&self) -> f64 {
        let mut vals = vec![0.0; self.law.support_size()];
        for (j, x) in self.law.points().iter().enumerate() {
            vals[j] = self
                .directions
                .directions()
                .iter()
                .fold(0.0_f64, |m, t| m.max(t.dot(x).abs()));
        }
        numeric::weighted_pow_sum_root(self.law.probs(), &vals, self.exponent)
    }

    /// `strong_moment / weak_moment`, with the degenerate `0/0` instance
    /// reported as 1 (the comparison is vacuous there).
    pub fn moment_ratio(&self) -> Result<f64> {
        let weak = self.weak_moment();
        let strong = self.strong_moment();
        if weak == 0.0 {
            if strong == 0.0 {
                return Ok(1.0);
            }
            return Err(Error::DegenerateRatio { strong });
        }
        Ok(strong / weak)
    }

    /// Ratio plus the two comparison constants it is measured against.
    pub fn ratio_report(&self) -> Result<RatioReport> {
        let weak = self.weak_moment();
        let strong = self.strong_moment();
        let degenerate = weak == 0.0 && strong == 0.0;
        let ratio = if degenerate {
            1.0
        } else if weak == 0.0 {
            return Err(Error::DegenerateRatio { strong });
        } else {
            strong / weak
        };
        let n = self.law.dimension();
        let c_np = constants::c_np(n, self.exponent)?;
        let envelope = constants::envelope(n, self.exponent);
        let bound = c_np.min(envelope);
        let within_bound = ratio <= bound * (1.0 + tol::STEP_SLACK_RTOL);
        Ok(RatioReport {
            weak,
            strong,
            ratio,
            degenerate,
            c_np,
            envelope,
            within_bound,
        })
    }
}

/// Moment-ratio measurement against the closed-form bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub weak: f64,
    pub strong: f64,
    pub ratio: f64,
    /// Both moments vanished; the ratio is reported as 1 by convention.
    pub degenerate: bool,
    /// Exact comparison constant for this (n, p).
    pub c_np: f64,
    /// `2√e √((n+p)/p)`.
    pub envelope: f64,
    pub within_bound: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, rel: f64) {
        let scale = a.abs().max(b.abs()).max(1e-300);
        assert!(
            (a - b).abs() / scale <= rel,
            "expected {a} and {b} within {rel} relative"
        );
    }

    #[test]
    fn point_mass_moments_are_the_inner_product() {
        let law = DiscreteVectorLaw::new(vec![vec![1.0, -2.0, 0.5]], vec![1.0]).unwrap();
        let dirs = DirectionSet::new(vec![vec![3.0, 1.0, 2.0]]).unwrap();
        let inst = MomentInstance::new(law, dirs, 3.5).unwrap();
        // <t, x> = 3 - 2 + 1 = 2
        assert_close(inst.weak_moment(), 2.0, 1e-15);
        assert_close(inst.strong_moment(), 2.0, 1e-15);
        assert_close(inst.moment_ratio().unwrap(), 1.0, 1e-15);
    }

    #[test]
    fn canonical_n2_p2_moments() {
        let inst = MomentInstance::canonical(2, 2.0).unwrap();
        assert_close(inst.weak_moment(), 0.5_f64.sqrt(), 1e-15);
        assert_close(inst.strong_moment(), 1.0, 1e-15);
        assert_close(inst.moment_ratio().unwrap(), 2.0_f64.sqrt(), 1e-14);
    }

    #[test]
    fn canonical_single_direction_marginal() {
        let law = DiscreteVectorLaw::canonical(4).unwrap();
        let dirs = DirectionSet::new(vec![vec![1.0, 0.0, 0.0, 0.0]]).unwrap();
        let inst = MomentInstance::new(law, dirs, 4.0).unwrap();
        assert_close(inst.weak_moment(), 0.25_f64.powf(0.25), 1e-15);
    }

    #[test]
    fn canonical_ratio_is_n_to_the_inverse_p() {
        for &(n, p) in &[(2usize, 2.0), (4, 4.0), (8, 3.0), (5, 2.5)] {
            let inst = MomentInstance::canonical(n, p).unwrap();
            assert_close(inst.strong_moment(), 1.0, 1e-14);
            assert_close(
                inst.moment_ratio().unwrap(),
                (n as f64).powf(1.0 / p),
                1e-13,
            );
        }
    }

    #[test]
    fn covariance_examples() {
        let canon = DiscreteVectorLaw::canonical(2).unwrap();
        let c = canon.covariance();
        assert_close(c[(0, 0)], 0.5, 1e-15);
        assert_close(c[(1, 1)], 0.5, 1e-15);
        assert!(c[(0, 1)].abs() < 1e-15);

        let zero = DiscreteVectorLaw::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap();
        assert_eq!(zero.covariance(), DMatrix::zeros(2, 2));

        let diag = DiscreteVectorLaw::new(
            vec![
                vec![1.0, 1.0],
                vec![-1.0, -1.0],
                vec![1.0, -1.0],
                vec![-1.0, 1.0],
            ],
            vec![0.25; 4],
        )
        .unwrap();
        assert!((diag.covariance() - DMatrix::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn symmetrize_point_mass_and_idempotence() {
        let law = DiscreteVectorLaw::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
        let sym = law.symmetrize();
        assert_eq!(sym.support_size(), 2);
        assert_close(sym.probs()[0], 0.5, 0.0);
        assert_close(sym.probs()[1], 0.5, 0.0);
        assert_eq!(sym.points()[1], -&sym.points()[0]);

        let again = sym.symmetrize();
        assert_eq!(again, sym);
    }

    #[test]
    fn symmetrize_preserves_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let n = rng.random_range(1..=4);
            let l = rng.random_range(1..=8);
            let k = rng.random_range(1..=6);
            let points: Vec<Vec<f64>> = (0..l)
                .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let mut probs: Vec<f64> = (0..l).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            let dirs: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let law = DiscreteVectorLaw::new(points, probs).unwrap();
            let directions = DirectionSet::new(dirs).unwrap();
            let p = rng.random_range(2.0..8.0);
            let inst = MomentInstance::new(law.clone(), directions.clone(), p).unwrap();
            let sym = MomentInstance::new(law.symmetrize(), directions, p).unwrap();
            assert_close(inst.weak_moment(), sym.weak_moment(), 1e-15);
            assert_close(inst.strong_moment(), sym.strong_moment(), 1e-15);
        }
    }

    #[test]
    fn moments_invariant_under_atom_permutation_and_splitting() {
        let points = vec![vec![1.0, 2.0], vec![-0.5, 0.25], vec![2.0, -1.0]];
        let probs = vec![0.5, 0.3, 0.2];
        let dirs = vec![vec![1.0, 1.0], vec![0.5, -2.0]];
        let base = MomentInstance::new(
            DiscreteVectorLaw::new(points.clone(), probs.clone()).unwrap(),
            DirectionSet::new(dirs.clone()).unwrap(),
            3.0,
        )
        .unwrap();

        let permuted = MomentInstance::new(
            DiscreteVectorLaw::new(
                vec![points[2].clone(), points[0].clone(), points[1].clone()],
                vec![probs[2], probs[0], probs[1]],
            )
            .unwrap(),
            DirectionSet::new(dirs.clone()).unwrap(),
            3.0,
        )
        .unwrap();

        let split = MomentInstance::new(
            DiscreteVectorLaw::new(
                vec![
                    points[0].clone(),
                    points[0].clone(),
                    points[1].clone(),
                    points[2].clone(),
                ],
                vec![0.25, 0.25, 0.3, 0.2],
            )
            .unwrap(),
            DirectionSet::new(dirs).unwrap(),
            3.0,
        )
        .unwrap();

        assert_close(base.weak_moment(), permuted.weak_moment(), 1e-15);
        assert_close(base.strong_moment(), permuted.strong_moment(), 1e-15);
        assert_close(base.weak_moment(), split.weak_moment(), 1e-14);
        assert_close(base.strong_moment(), split.strong_moment(), 1e-14);
    }

    #[test]
    fn direction_scaling_scales_moments() {
        let law = DiscreteVectorLaw::new(
            vec![vec![1.0, -1.0], vec![0.5, 2.0]],
            vec![0.75, 0.25],
        )
        .unwrap();
        let dirs = DirectionSet::new(vec![vec![1.0, 0.5], vec![-1.0, 2.0]]).unwrap();
        let scaled =
            DirectionSet::new(vec![vec![3.0, 1.5], vec![-3.0, 6.0]]).unwrap();
        let a = MomentInstance::new(law.clone(), dirs, 2.5).unwrap();
        let b = MomentInstance::new(law, scaled, 2.5).unwrap();
        assert_close(b.weak_moment(), 3.0 * a.weak_moment(), 1e-14);
        assert_close(b.strong_moment(), 3.0 * a.strong_moment(), 1e-14);
        assert_close(
            a.moment_ratio().unwrap(),
            b.moment_ratio().unwrap(),
            1e-14,
        );
    }

    #[test]
    fn large_exponent_large_scale_does_not_overflow() {
        let law = DiscreteVectorLaw::new(
            vec![vec![1e8], vec![-1e8]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let dirs = DirectionSet::new(vec![vec![1.0]]).unwrap();
        let inst = MomentInstance::new(law, dirs, 100.0).unwrap();
        assert_close(inst.weak_moment(), 1e8, 1e-13);
        assert_close(inst.strong_moment(), 1e8, 1e-13);
    }

    #[test]
    fn degenerate_all_zero_instance_reports_ratio_one() {
        let law = DiscreteVectorLaw::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap();
        let dirs = DirectionSet::new(vec![vec![1.0, 1.0]]).unwrap();
        let inst = MomentInstance::new(law, dirs, 2.0).unwrap();
        assert_eq!(inst.moment_ratio().unwrap(), 1.0);
        let report = inst.ratio_report().unwrap();
        assert!(report.degenerate);
        assert!(report.within_bound);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert_eq!(
            DiscreteVectorLaw::new(vec![], vec![]),
            Err(Error::EmptySupport)
        );
        assert_eq!(
            DiscreteVectorLaw::new(vec![vec![]], vec![1.0]),
            Err(Error::ZeroDimension)
        );
        assert!(matches!(
            DiscreteVectorLaw::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.5, 0.5]),
            Err(Error::PointLength { index: 1, .. })
        ));
        assert!(matches!(
            DiscreteVectorLaw::new(vec![vec![1.0]], vec![0.5, 0.5]),
            Err(Error::ProbabilityCount { .. })
        ));
        assert!(matches!(
            DiscreteVectorLaw::new(vec![vec![1.0], vec![2.0]], vec![1.5, -0.5]),
            Err(Error::NegativeProbability { index: 1, .. })
        ));
        assert!(matches!(
            DiscreteVectorLaw::new(vec![vec![1.0], vec![2.0]], vec![0.5, 0.4]),
            Err(Error::ProbabilitySum { .. })
        ));
        assert!(matches!(
            DirectionSet::new(vec![]),
            Err(Error::EmptyDirections)
        ));
        assert!(matches!(
            DirectionSet::new(vec![vec![1.0, 0.0], vec![1.0]]),
            Err(Error::DirectionLength { index: 1, .. })
        ));

        let law = DiscreteVectorLaw::canonical(2).unwrap();
        let dirs3 = DirectionSet::canonical_basis(3).unwrap();
        assert!(matches!(
            MomentInstance::new(law.clone(), dirs3, 2.0),
            Err(Error::DimensionMismatch {
                law: 2,
                directions: 3
            })
        ));
        let dirs = DirectionSet::canonical_basis(2).unwrap();
        assert!(matches!(
            MomentInstance::new(law.clone(), dirs.clone(), 1.5),
            Err(Error::ExponentBelowTwo { .. })
        ));
        assert!(matches!(
            MomentInstance::new(law.clone(), dirs.clone(), 0.5),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            MomentInstance::new(law, dirs, f64::NAN),
            Err(Error::ExponentNotFinite { .. })
        ));
    }

    #[test]
    fn probabilities_renormalize_within_tolerance() {
        let probs = vec![0.5, 0.5 + 4e-13];
        let law = DiscreteVectorLaw::new(vec![vec![1.0], vec![-1.0]], probs).unwrap();
        let sum: f64 = law.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn atoms_within_merge_tolerance_collapse() {
        let law = DiscreteVectorLaw::new(
            vec![vec![1.0, 0.0], vec![1.0 + 1e-13, 0.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let sym = law.symmetrize();
        // The two nearby atoms and their mirror images collapse pairwise.
        assert_eq!(sym.support_size(), 2);
        assert_close(sym.probs()[0], 0.5, 1e-15);
    }
}
