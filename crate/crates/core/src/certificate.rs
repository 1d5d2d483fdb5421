//! Step-by-step numerical certificates for the weak/strong moment
//! comparison.
//!
//! A certificate reduces the instance until the p = 2 covariance argument
//! applies: a non-even exponent is first pushed down to the even exponent
//! `2m` below it by reweighting the atoms (two verified inequality lines),
//! an even exponent `2m` becomes a p = 2 problem on the m-th Hadamard power
//! through its rank factorization (a verified identity), and the p = 2 core
//! is bounded by `α · rank(C)` with `α = sup_t ⟨Ct,t⟩`. Every link is
//! recorded with its numerical lhs/rhs, and the chain closes with the direct
//! moment comparison and the constant's envelope check.

use serde::Serialize;

use crate::constants;
use crate::error::{Error, Result};
use crate::hadamard;
use crate::law::MomentInstance;
use crate::tol;

/// One verified link: the claim `lhs ≤ rhs` (or `lhs = rhs` for identity
/// links) with `slack = rhs − lhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateStep {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// Constant or dimension entering the right-hand side, when one does.
    pub constant_used: Option<f64>,
    pub slack: f64,
}

impl CertificateStep {
    fn checked(
        name: &'static str,
        lhs: f64,
        rhs: f64,
        constant_used: Option<f64>,
    ) -> Result<Self> {
        let step = CertificateStep {
            name,
            lhs,
            rhs,
            constant_used,
            slack: rhs - lhs,
        };
        if !step.holds() {
            return Err(Error::StepViolation {
                name: name.to_string(),
                lhs,
                rhs,
            });
        }
        Ok(step)
    }

    /// Identity link: both sides must agree to `tol::IDENTITY_REL`
    /// relative, or to within the caller's absolute rounding floor (the
    /// worst difference honest f64 evaluation of the two sides can
    /// produce).
    fn identity(name: &'static str, lhs: f64, rhs: f64, floor: f64) -> Result<Self> {
        let scale = lhs.abs().max(rhs.abs());
        let diff = (lhs - rhs).abs();
        if diff > tol::IDENTITY_REL * scale && diff > floor {
            return Err(Error::StepViolation {
                name: name.to_string(),
                lhs,
                rhs,
            });
        }
        Ok(CertificateStep {
            name,
            lhs,
            rhs,
            constant_used: None,
            slack: rhs - lhs,
        })
    }

    /// `slack ≥ −tol::STEP_SLACK_RTOL · max(|lhs|, |rhs|, 1)`.
    pub fn holds(&self) -> bool {
        self.slack >= -tol::STEP_SLACK_RTOL * self.lhs.abs().max(self.rhs.abs()).max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Full chain for one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub steps: Vec<CertificateStep>,
    /// strong/weak moment ratio of the instance as given (0/0 reported
    /// as 1).
    pub final_ratio: f64,
    /// `2√e · √((n+p)/p)`.
    pub final_bound: f64,
    pub verdict: Verdict,
    /// All pairings vanish: the chain is vacuous and passes trivially.
    pub degenerate: bool,
    /// Support indices the reweighting dropped (atoms whose pairings all
    /// vanish), relative to the symmetrized law the chain ran on.
    pub dropped_atoms: Vec<usize>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Output of [`reduce_even`]: the p = 2 problem on the m-th Hadamard power.
#[derive(Debug, Clone)]
pub struct EvenReduction {
    /// p = 2 instance whose directions are the rows of the expanded left
    /// factor and whose atoms are the weight-unfolded expanded columns.
    pub instance: MomentInstance,
    /// Inner dimension C(n+m-1, m) of the expansion.
    pub inner_dim: usize,
    pub step: CertificateStep,
}

/// Output of [`reduce_to_even`]: the even-exponent instance produced by the
/// reweighting, with the verified reduction lines.
#[derive(Debug, Clone)]
pub struct OddReduction {
    /// Instance at exponent 2m with reweighted probabilities on the folded
    /// atoms `p_j^{1/p} x_j`.
    pub instance: MomentInstance,
    /// Reduction degree m, with 2m < p ≤ 2m+2.
    pub degree: usize,
    /// Normalizer Z = Σ_j g_j^{p-2m} of the new weights.
    pub normalizer: f64,
    pub steps: Vec<CertificateStep>,
    /// Indices of support atoms with all pairings zero.
    pub dropped_atoms: Vec<usize>,
}

/// Covariance bound at p = 2: `E sup_t ⟨t,X⟩² ≤ α · rank(C)` with
/// `α = sup_t ⟨Ct,t⟩`.
///
/// The bound only involves the second-moment matrix, so it holds for any
/// law; symmetrizing upstream changes neither side.
pub fn verify_p2_step(inst: &MomentInstance) -> Result<CertificateStep> {
    if inst.exponent() != 2.0 {
        return Err(Error::Domain {
            quantity: "exponent",
            requirement: "exactly 2 for the covariance step",
            value: inst.exponent(),
        });
    }
    let c = inst.law().covariance();
    let alpha = inst
        .directions()
        .directions()
        .iter()
        .map(|t| (&c * t).dot(t))
        .fold(0.0_f64, f64::max);
    let rank = hadamard::numerical_rank(&c);
    let lhs = inst.strong_moment().powi(2);
    let rhs = alpha * rank as f64;
    CertificateStep::checked("covariance rank bound", lhs, rhs, Some(rank as f64))
}

/// Turns an even-exponent instance into the equivalent p = 2 instance on
/// the m-th Hadamard power of its weighted matrix.
///
/// With `a_ij = p_j^{1/p} ⟨t_i, x_j⟩` and `p = 2m`, the factorization of A
/// expands to one of A∘m with inner dimension `N = C(n+m-1, m)`; unfolding
/// the weights from its columns gives a p = 2 instance in dimension N whose
/// strong moment squared equals `Σ_j sup_i |a_ij|^{2m}` exactly. That
/// identity is the recorded step.
pub fn reduce_even(inst: &MomentInstance) -> Result<EvenReduction> {
    let p = inst.exponent();
    if !constants::is_even_integer(p) {
        return Err(Error::Domain {
            quantity: "exponent",
            requirement: "an even integer",
            value: p,
        });
    }
    let m = (p / 2.0).round() as u32;
    let folded = hadamard::instance_to_matrix(inst);
    let expanded = hadamard::expand_factorization(&folded.matrix, m)?;
    let reduced = hadamard::InstanceMatrix {
        matrix: expanded,
        weights: folded.weights,
        exponent: 2.0,
    };
    let instance = reduced.to_instance()?;

    let lhs = inst.strong_moment().powf(p);
    let rhs = instance.strong_moment().powi(2);
    let floor = identity_floor(&folded.matrix, &reduced.matrix, m);
    let inner_dim = reduced.matrix.inner_dim();
    let mut step = CertificateStep::identity("even power identity", lhs, rhs, floor)?;
    step.constant_used = Some(inner_dim as f64);
    Ok(EvenReduction {
        instance,
        inner_dim,
        step,
    })
}

/// Absolute rounding floor for the even-power identity.
///
/// Every matrix entry behind the identity is an inner product `Σ_α l_α r_α`
/// whose floating-point evaluation carries absolute error of order
/// `eps · D · Σ_α |l_α| |r_α|`. When the exact pairing nearly cancels, that
/// error dwarfs the entry itself and is then amplified by the outer powers,
/// so a purely relative test would flag honest rounding as a violation.
/// Summing the worst-case per-column perturbations of `Σ_j sup_i |v_ij|^k`
/// on each side gives the absolute level below which the two sides are
/// indistinguishable in f64.
fn identity_floor(
    folded: &hadamard::RankFactoredMatrix,
    expanded: &hadamard::RankFactoredMatrix,
    m: u32,
) -> f64 {
    let column_sum_error = |fac: &hadamard::RankFactoredMatrix, k: i32| -> f64 {
        let abs_product = fac.left().abs() * fac.right().abs();
        let entries = fac.entries();
        let slack = 2.0 * f64::EPSILON * (fac.inner_dim() as f64 + m as f64 + 2.0);
        let mut total = crate::numeric::KahanSum::default();
        for j in 0..entries.ncols() {
            let mut worst = 0.0_f64;
            for i in 0..entries.nrows() {
                let v = entries[(i, j)].abs();
                let e = slack * abs_product[(i, j)];
                worst = worst.max((v + e).powi(k) - v.powi(k));
            }
            total.add(worst);
        }
        total.value()
    };
    column_sum_error(folded, 2 * m as i32) + column_sum_error(expanded, 2)
}

/// Reduces a non-even exponent to the largest even exponent below it via
/// [`reduce_to_even_with_m`] with `m = max(1, ⌈p/2⌉ − 1)`.
pub fn reduce_to_even(inst: &MomentInstance) -> Result<OddReduction> {
    let p = inst.exponent();
    if constants::is_even_integer(p) {
        return Err(Error::EvenExponent { p });
    }
    let m = (((p / 2.0).ceil() as usize).saturating_sub(1)).max(1);
    reduce_to_even_with_m(inst, m)
}

/// Reweighting reduction from exponent p to 2m, valid for 2m < p ≤ 2m+2
/// (the closed right endpoint covers even p with the smaller degree).
///
/// On the folded atoms `y_j = p_j^{1/p} x_j` with pairings
/// `g_j = sup_i |⟨t_i, y_j⟩|`, the new weights are `q_j = g_j^{p-2m} / Z`.
/// Two lines are verified: the exact identity
/// `Z · (strong moment of the 2m-instance)^{2m} = Σ_j g_j^p` and the
/// power-mean bound
/// `(weak moment of the 2m-instance)^{2m} ≤ (Σ_j g_j^p)^{(p-2m)/p} · W^{2m} / Z`
/// with W the original weak moment.
pub fn reduce_to_even_with_m(inst: &MomentInstance, m: usize) -> Result<OddReduction> {
    let p = inst.exponent();
    let two_m = 2.0 * m as f64;
    if m < 1 || two_m >= p || p > two_m + 2.0 {
        return Err(Error::Domain {
            quantity: "reduction degree",
            requirement: "2m < p <= 2m + 2",
            value: m as f64,
        });
    }

    let law = inst.law();
    let folded: Vec<_> = law
        .points()
        .iter()
        .zip(law.probs())
        .map(|(x, &pi)| x * pi.powf(1.0 / p))
        .collect();
    let pairings: Vec<f64> = folded
        .iter()
        .map(|y| {
            inst.directions()
                .directions()
                .iter()
                .map(|t| t.dot(y).abs())
                .fold(0.0_f64, f64::max)
        })
        .collect();

    let dropped_atoms: Vec<usize> = (0..folded.len()).filter(|&j| pairings[j] == 0.0).collect();
    if dropped_atoms.len() == folded.len() {
        return Err(Error::AllZeroInstance);
    }

    let mut z_sum = crate::numeric::KahanSum::default();
    let mut kept_points = Vec::new();
    let mut raw_weights = Vec::new();
    for (y, &g) in folded.iter().zip(&pairings) {
        if g == 0.0 {
            continue;
        }
        let w = g.powf(p - two_m);
        z_sum.add(w);
        kept_points.push(y.clone());
        raw_weights.push(w);
    }
    let normalizer = z_sum.value();
    let probs: Vec<f64> = raw_weights.iter().map(|w| w / normalizer).collect();
    let reduced_law = crate::law::DiscreteVectorLaw::from_vectors(kept_points, probs)?;
    let instance = inst.with_law(reduced_law, two_m)?;

    let s_p = inst.strong_moment().powf(p);
    let lhs_identity = instance.strong_moment().powf(two_m) * normalizer;
    let identity =
        CertificateStep::identity("strong moment reweighting identity", lhs_identity, s_p, 0.0)?;

    let w = inst.weak_moment();
    let lhs_hoelder = instance.weak_moment().powf(two_m);
    let rhs_hoelder = s_p.powf((p - two_m) / p) * w.powf(two_m) / normalizer;
    let hoelder = CertificateStep::checked(
        "split exponent weak moment bound",
        lhs_hoelder,
        rhs_hoelder,
        None,
    )?;

    Ok(OddReduction {
        instance,
        degree: m,
        normalizer,
        steps: vec![identity, hoelder],
        dropped_atoms,
    })
}

/// Builds the full chain for an instance with p ≥ 2 and verifies every
/// link.
///
/// Dispatch: p = 2 runs the covariance bound directly; even p runs the
/// Hadamard-power reduction with m = p/2 and then the covariance bound;
/// any other p is first reweighted down to 2m. The law is symmetrized up
/// front, which changes no moment. Two closing steps compare the original
/// moments against `c · weak` for the a-priori constant c the chain
/// certifies, and that constant against the envelope `2√e · √((n+p)/p)`.
pub fn build_certificate(inst: &MomentInstance) -> Result<CertificateReport> {
    let p = inst.exponent();
    let n = inst.law().dimension();
    let report = inst.ratio_report()?;

    let sym = inst.with_law(inst.law().symmetrize(), p)?;
    let mut steps = Vec::new();
    let mut dropped_atoms = Vec::new();
    let mut degenerate = false;

    let constant = if p == 2.0 {
        steps.push(verify_p2_step(&sym)?);
        constants::c_np(n, 2.0)?
    } else if constants::is_even_integer(p) {
        let even = reduce_even(&sym)?;
        steps.push(even.step);
        steps.push(verify_p2_step(&even.instance)?);
        constants::c_for_m(n, (p / 2.0).round() as usize)
    } else {
        match reduce_to_even(&sym) {
            Ok(odd) => {
                steps.extend(odd.steps.iter().cloned());
                dropped_atoms = odd.dropped_atoms;
                if odd.instance.exponent() == 2.0 {
                    steps.push(verify_p2_step(&odd.instance)?);
                } else {
                    let even = reduce_even(&odd.instance)?;
                    steps.push(even.step);
                    steps.push(verify_p2_step(&even.instance)?);
                }
                constants::c_for_m(n, odd.degree)
            }
            Err(Error::AllZeroInstance) => {
                degenerate = true;
                steps.push(CertificateStep {
                    name: "vacuous chain (all pairings zero)",
                    lhs: 0.0,
                    rhs: 0.0,
                    constant_used: None,
                    slack: 0.0,
                });
                let m = (((p / 2.0).ceil() as usize).saturating_sub(1)).max(1);
                constants::c_for_m(n, m)
            }
            Err(e) => return Err(e),
        }
    };

    steps.push(CertificateStep::checked(
        "moment comparison",
        report.strong,
        constant * report.weak,
        Some(constant),
    )?);
    steps.push(CertificateStep::checked(
        "constant envelope",
        constant,
        report.envelope,
        Some(constant),
    )?);

    let verdict = if steps.iter().all(CertificateStep::holds) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(CertificateReport {
        steps,
        final_ratio: report.ratio,
        final_bound: report.envelope,
        verdict,
        degenerate: degenerate || report.strong == 0.0,
        dropped_atoms,
    })
}
