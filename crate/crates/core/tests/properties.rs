//! Randomized invariants over generated instances: moment ordering and
//! bounds, invariance under symmetry-preserving transforms, dual-norm
//! axioms, Hadamard-power structure, matrix-form round-trips, and
//! certificate determinism.

use momentforge::certificate::build_certificate;
use momentforge::constants::{c_np, envelope};
use momentforge::hadamard::{
    condition_iii_ratio, expand_factorization, hadamard_power, instance_to_matrix,
    numerical_rank, RankFactoredMatrix,
};
use momentforge::zp::{zp_norm_p2, ZpBodySpec};
use momentforge::{DirectionSet, DiscreteVectorLaw, MomentInstance};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn binomial(a: usize, b: usize) -> usize {
    let mut value = 1usize;
    for i in 0..b {
        value = value * (a - i) / (i + 1);
    }
    value
}

/// Points, normalized probabilities, directions, and an exponent for a
/// valid instance with the given size caps.
fn instance_parts(
    max_n: usize,
    max_k: usize,
    max_l: usize,
) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, f64)> {
    (1..=max_n, 1..=max_k, 1..=max_l).prop_flat_map(move |(n, k, l)| {
        let points = prop::collection::vec(prop::collection::vec(-2.0..2.0f64, n), l);
        let raws = prop::collection::vec(0.05..1.0f64, l);
        let directions = prop::collection::vec(prop::collection::vec(-2.0..2.0f64, n), k);
        let exponent = prop_oneof![
            Just(2.0),
            Just(3.0),
            Just(4.0),
            Just(6.0),
            2.0..8.0f64,
        ];
        (points, raws, directions, exponent).prop_map(|(points, raws, directions, p)| {
            let total: f64 = raws.iter().sum();
            let probs = raws.iter().map(|w| w / total).collect();
            (points, probs, directions, p)
        })
    })
}

fn build(points: &[Vec<f64>], probs: &[f64], directions: &[Vec<f64>], p: f64) -> MomentInstance {
    MomentInstance::new(
        DiscreteVectorLaw::new(points.to_vec(), probs.to_vec()).unwrap(),
        DirectionSet::new(directions.to_vec()).unwrap(),
        p,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weak_at_most_strong_and_ratio_bounded(
        (points, probs, directions, p) in instance_parts(4, 8, 8),
    ) {
        let inst = build(&points, &probs, &directions, p);
        let weak = inst.weak_moment();
        let strong = inst.strong_moment();
        prop_assert!(weak <= strong * (1.0 + 1e-12), "weak {weak} above strong {strong}");
        if let Ok(ratio) = inst.moment_ratio() {
            let n = inst.law().dimension();
            let bound = c_np(n, p).unwrap().min(envelope(n, p));
            prop_assert!(
                ratio <= bound * (1.0 + 1e-9),
                "ratio {ratio} above bound {bound}"
            );
        }
    }

    #[test]
    fn moments_scale_linearly_with_directions(
        (points, probs, directions, p) in instance_parts(3, 6, 6),
        lambda in 0.1..8.0f64,
    ) {
        let inst = build(&points, &probs, &directions, p);
        let scaled_dirs: Vec<Vec<f64>> = directions
            .iter()
            .map(|t| t.iter().map(|c| c * lambda).collect())
            .collect();
        let scaled = build(&points, &probs, &scaled_dirs, p);
        prop_assert!(rel_err(scaled.weak_moment(), lambda * inst.weak_moment()) <= 1e-12);
        prop_assert!(rel_err(scaled.strong_moment(), lambda * inst.strong_moment()) <= 1e-12);
        if let (Ok(a), Ok(b)) = (inst.moment_ratio(), scaled.moment_ratio()) {
            prop_assert!(rel_err(a, b) <= 1e-12, "ratio changed under scaling: {a} vs {b}");
        }
    }

    #[test]
    fn symmetrize_permutation_and_splitting_preserve_moments(
        (points, probs, directions, p) in instance_parts(3, 6, 6),
        order in prop::collection::vec(any::<u32>(), 16),
    ) {
        let inst = build(&points, &probs, &directions, p);
        let weak = inst.weak_moment();
        let strong = inst.strong_moment();

        let sym = MomentInstance::new(
            inst.law().symmetrize(),
            DirectionSet::new(directions.to_vec()).unwrap(),
            p,
        )
        .unwrap();
        prop_assert!(rel_err(sym.weak_moment(), weak) <= 1e-14);
        prop_assert!(rel_err(sym.strong_moment(), strong) <= 1e-14);

        // Permute atoms by sorting on arbitrary keys.
        let mut idx: Vec<usize> = (0..points.len()).collect();
        idx.sort_by_key(|&j| order.get(j).copied().unwrap_or(0));
        let perm_points: Vec<Vec<f64>> = idx.iter().map(|&j| points[j].clone()).collect();
        let perm_probs: Vec<f64> = idx.iter().map(|&j| probs[j]).collect();
        let perm = build(&perm_points, &perm_probs, &directions, p);
        prop_assert!(rel_err(perm.weak_moment(), weak) <= 1e-14);
        prop_assert!(rel_err(perm.strong_moment(), strong) <= 1e-14);

        // Split the first atom into two identical halves.
        let mut split_points = points.clone();
        split_points.push(points[0].clone());
        let mut split_probs = probs.clone();
        split_probs[0] /= 2.0;
        split_probs.push(split_probs[0]);
        let split = build(&split_points, &split_probs, &directions, p);
        prop_assert!(rel_err(split.weak_moment(), weak) <= 1e-13);
        prop_assert!(rel_err(split.strong_moment(), strong) <= 1e-13);
    }

    #[test]
    fn hadamard_power_is_repeated_entrywise_product(
        rows in 1..=6usize,
        cols in 1..=6usize,
        m in 1..=5u32,
        seedlings in prop::collection::vec(-2.0..2.0f64, 36),
    ) {
        let a = DMatrix::from_fn(rows, cols, |i, j| seedlings[(i * cols + j) % 36]);
        let powered = hadamard_power(&a, m);
        let mut repeated = DMatrix::repeat(rows, cols, 1.0);
        for _ in 0..m {
            repeated.component_mul_assign(&a);
        }
        for i in 0..rows {
            for j in 0..cols {
                prop_assert!(rel_err(powered[(i, j)], repeated[(i, j)]) <= 1e-12);
            }
        }
    }

    #[test]
    fn expansion_dims_and_rank_caps(
        n in 1..=3usize,
        k in 1..=10usize,
        l in 1..=10usize,
        m in 1..=3u32,
        seedlings in prop::collection::vec(-2.0..2.0f64, 100),
    ) {
        let left = DMatrix::from_fn(k, n, |i, j| seedlings[(i * n + j) % 100]);
        let right = DMatrix::from_fn(n, l, |i, j| seedlings[(47 + i * l + j) % 100]);
        let base = RankFactoredMatrix::new(left, right).unwrap();
        let expanded = expand_factorization(&base, m).unwrap();
        let cap = binomial(n + m as usize - 1, m as usize);
        prop_assert_eq!(expanded.inner_dim(), cap);
        let rank = numerical_rank(&hadamard_power(base.entries(), m));
        prop_assert!(rank <= k.min(l).min(cap), "rank {rank} above cap");
    }

    #[test]
    fn moment_ratio_roundtrips_through_matrix_form(
        (points, probs, directions, p) in instance_parts(4, 8, 8),
    ) {
        let inst = build(&points, &probs, &directions, p);
        if let Ok(ratio) = inst.moment_ratio() {
            let im = instance_to_matrix(&inst);
            let cond = condition_iii_ratio(im.matrix.entries(), p);
            prop_assert!(
                rel_err(cond.ratio, ratio) <= 1e-12,
                "matrix-form ratio {} vs direct {ratio}",
                cond.ratio
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn certificates_pass_and_are_deterministic(
        (points, probs, directions, p) in instance_parts(4, 10, 10),
    ) {
        let inst = build(&points, &probs, &directions, p);
        let report = build_certificate(&inst).unwrap();
        prop_assert!(report.passed(), "verdict {:?}", report.verdict);
        for step in &report.steps {
            prop_assert!(step.holds(), "step '{}' violated", step.name);
        }
        let again = build_certificate(&inst).unwrap();
        prop_assert_eq!(report.steps, again.steps);
    }

    #[test]
    fn dual_norm_is_homogeneous_subadditive_and_monotone_in_p(
        coords in prop::collection::vec(-2.0..2.0f64, 10),
        raws in prop::collection::vec(0.05..1.0f64, 5),
        mix in prop::collection::vec(-1.0..1.0f64, 10),
        lambda in 0.25..4.0f64,
    ) {
        let n = 2;
        let points: Vec<Vec<f64>> = coords.chunks(n).map(|c| c.to_vec()).collect();
        let total: f64 = raws.iter().sum();
        let probs: Vec<f64> = raws.iter().map(|w| w / total).collect();
        let law = DiscreteVectorLaw::new(points.clone(), probs).unwrap();

        // Query vectors inside the span of the support.
        let combine = |weights: &[f64]| -> Vec<f64> {
            let mut s = vec![0.0; n];
            for (w, x) in weights.iter().zip(&points) {
                for (acc, c) in s.iter_mut().zip(x) {
                    *acc += w * c;
                }
            }
            s
        };
        let s = combine(&mix[..5]);
        let u = combine(&mix[5..]);

        let mut prev = f64::INFINITY;
        for p in [2.0, 2.5, 3.5, 5.0] {
            let body = ZpBodySpec::new(law.clone(), p).unwrap();
            let ns = body.zp_norm(&s).unwrap();
            if !ns.is_finite() {
                return Ok(());
            }
            if p == 2.0 {
                let closed = zp_norm_p2(&law, &s);
                prop_assert!(rel_err(ns, closed) <= 1e-7, "ascent {ns} vs closed {closed}");
            }
            let scaled: Vec<f64> = s.iter().map(|c| c * lambda).collect();
            let nscaled = body.zp_norm(&scaled).unwrap();
            prop_assert!(rel_err(nscaled, lambda * ns) <= 1e-8);
            let nu = body.zp_norm(&u).unwrap();
            let sum: Vec<f64> = s.iter().zip(&u).map(|(a, b)| a + b).collect();
            let nsum = body.zp_norm(&sum).unwrap();
            prop_assert!(
                nsum <= ns + nu + 1e-8 * (ns + nu).max(1.0),
                "triangle violated: {nsum} vs {ns} + {nu}"
            );
            prop_assert!(
                ns <= prev * (1.0 + 1e-8),
                "norm increased in p: {prev} -> {ns} at p = {p}"
            );
            prev = ns;
        }
    }
}

#[test]
fn constant_identities_on_grid() {
    for n in 1..=40usize {
        for &p in &[2.0, 3.0, 5.5, 10.0, 25.0, 60.0, 120.0, 200.0] {
            let c = c_np(n, p).unwrap();
            let e = envelope(n, p);
            assert!(c <= e * (1.0 + 1e-12), "c_np({n},{p}) = {c} above envelope {e}");
        }
        for m in 1..=5usize {
            let c = c_np(n, 2.0 * m as f64).unwrap();
            let exact = binomial(n + m - 1, m) as f64;
            assert!(
                rel_err(c.powi(2 * m as i32), exact) <= 1e-12,
                "c_np({n},{}) ^ {} = {} vs binomial {exact}",
                2 * m,
                2 * m,
                c.powi(2 * m as i32),
            );
        }
    }
}
