//! The dual norm `‖s‖_{Z_p(X)} = sup{ |⟨t,s⟩| : E|⟨t,X⟩|^p ≤ 1 }`, its p-th
//! moment, and the Markov tail-bound check.
//!
//! The constraint functional `f(t) = (E|⟨t,X⟩|^p)^{1/p}` is a seminorm
//! vanishing exactly off the span of the support, so the supremum is
//! genuinely infinite there; `f64::INFINITY` is the returned value, not an
//! error. On the span the solver maximizes the scale-invariant ratio
//! `⟨t,s⟩ / f(t)` in whitened span coordinates (the second-moment matrix
//! becomes the identity), where the p = 2 problem is solved exactly by one
//! step and larger exponents stay well conditioned.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::law::{self, DiscreteVectorLaw};
use crate::numeric;
use crate::tol;

/// Deterministic root for the solver's restart streams.
const RESTART_ROOT: u64 = 0x5EED_BA5E;

/// Number of ascent restarts; the first starts at the exact p = 2 optimum.
const RESTARTS: usize = 8;

const MAX_ITERS: usize = 600;

/// A law with exponent `p >= 2`, plus the cached span basis and whitening
/// data the dual-norm solver works in.
#[derive(Debug, Clone, PartialEq)]
pub struct ZpBodySpec {
    law: DiscreteVectorLaw,
    exponent: f64,
    hoelder_dual: f64,
    /// n×d orthonormal basis of span{x_j : p_j > 0}.
    span_basis: DMatrix<f64>,
    /// Whitening map in span coordinates: W = (BᵀCB)^{-1/2}.
    whiten: DMatrix<f64>,
    /// W Bᵀ x_j for the supported atoms, with their probabilities.
    whitened_points: Vec<DVector<f64>>,
    whitened_probs: Vec<f64>,
}

impl ZpBodySpec {
    pub fn new(law: DiscreteVectorLaw, exponent: f64) -> Result<Self> {
        law::validate_exponent(exponent)?;
        let hoelder_dual = exponent / (exponent - 1.0);
        let supported: Vec<DVector<f64>> = law
            .points()
            .iter()
            .zip(law.probs())
            .filter(|(_, &p)| p > 0.0)
            .map(|(x, _)| x.clone())
            .collect();
        let span_basis = numeric::span_basis(&supported, law.dimension());
        let d = span_basis.ncols();

        let mut whitened_points = Vec::new();
        let mut whitened_probs = Vec::new();
        let whiten = if d == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let mut c_span = DMatrix::zeros(d, d);
            let coords: Vec<DVector<f64>> = law
                .points()
                .iter()
                .zip(law.probs())
                .filter(|(_, &p)| p > 0.0)
                .map(|(x, &p)| {
                    let coord = span_basis.transpose() * x;
                    c_span.ger(p, &coord, &coord, 1.0);
                    whitened_probs.push(p);
                    coord
                })
                .collect();
            let eigen = c_span.symmetric_eigen();
            let lam_max = eigen.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(*l));
            let floor = lam_max * 1e-14;
            let mut w = DMatrix::zeros(d, d);
            for (i, &lam) in eigen.eigenvalues.iter().enumerate() {
                let v = eigen.eigenvectors.column(i);
                w.ger(1.0 / lam.max(floor).sqrt(), &v.into_owned(), &v.into_owned(), 1.0);
            }
            whitened_points = coords.iter().map(|x| &w * x).collect();
            w
        };

        Ok(ZpBodySpec {
            law,
            exponent,
            hoelder_dual,
            span_basis,
            whiten,
            whitened_points,
            whitened_probs,
        })
    }

    pub fn law(&self) -> &DiscreteVectorLaw {
        &self.law
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// q with 1/p + 1/q = 1.
    pub fn hoelder_dual(&self) -> f64 {
        self.hoelder_dual
    }

    pub fn span_basis(&self) -> &DMatrix<f64> {
        &self.span_basis
    }

    /// dim span{x_j : p_j > 0}.
    pub fn span_dim(&self) -> usize {
        self.span_basis.ncols()
    }

    pub fn is_spanning(&self) -> bool {
        self.span_dim() == self.law.dimension()
    }

    /// `f(t) = (Σ_j p_j |⟨t, x_j⟩|^p)^{1/p}`.
    pub fn constraint_norm(&self, t: &[f64]) -> Result<f64> {
        let t = self.check_vector(t, "constraint direction")?;
        let mut vals = vec![0.0; self.law.support_size()];
        for (slot, x) in vals.iter_mut().zip(self.law.points()) {
            *slot = t.dot(x).abs();
        }
        Ok(numeric::weighted_pow_sum_root(
            self.law.probs(),
            &vals,
            self.exponent,
        ))
    }

    /// `sup{ |⟨t,s⟩| : f(t) ≤ 1 }`: `f64::INFINITY` when `s` leaves the
    /// support span (projection residual above
    /// `tol::SPAN_RESIDUAL_RTOL · |s|`), otherwise the ascent value over at
    /// least [`RESTARTS`] deterministic starts. At p = 2 the result is
    /// certified against the closed form.
    pub fn zp_norm(&self, s: &[f64]) -> Result<f64> {
        let s = self.check_vector(s, "query vector")?;
        let s_norm = s.norm();
        if s_norm == 0.0 {
            return Ok(0.0);
        }
        if self.span_dim() == 0 {
            return Ok(f64::INFINITY);
        }
        let coords = self.span_basis.transpose() * &s;
        let residual = (&s - &self.span_basis * &coords).norm();
        if residual > tol::SPAN_RESIDUAL_RTOL * s_norm {
            return Ok(f64::INFINITY);
        }
        let c = &self.whiten * &coords;
        let best = self.maximize(&c)?;
        if self.exponent == 2.0 {
            let closed = zp_norm_p2(&self.law, s.as_slice());
            let spread = numeric::rel_diff(best, closed);
            if closed.is_finite() && spread > tol::SOLVER_AGREEMENT {
                return Err(Error::SolverStall {
                    spread,
                    best,
                });
            }
        }
        Ok(best)
    }

    /// `(Σ_j p_j ‖x_j‖_{Z_p}^p)^{1/p}` over the supported atoms. For a law
    /// that fails to span ℝ^n the norm is taken inside the span (dimension
    /// reported and flagged).
    pub fn zp_pth_moment(&self) -> Result<ZpMomentReport> {
        let mut probs = Vec::new();
        let mut norms = Vec::new();
        for (x, &p) in self.law.points().iter().zip(self.law.probs()) {
            if p == 0.0 {
                continue;
            }
            probs.push(p);
            norms.push(self.zp_norm(x.as_slice())?);
        }
        Ok(ZpMomentReport {
            value: numeric::weighted_pow_sum_root(&probs, &norms, self.exponent),
            effective_dim: self.span_dim(),
            spanning: self.is_spanning(),
        })
    }

    /// Exact mass above the threshold `2 e^{3/2} √((n+p)/p)`; Markov applied
    /// to the dual-norm moment forces it below `e^{-p}`, and a violation is
    /// reported as a step failure.
    pub fn tail_bound_check(&self) -> Result<TailBoundReport> {
        let n = self.span_dim();
        let p = self.exponent;
        let threshold =
            2.0 * (1.5_f64).exp() * ((n as f64 + p) / p).sqrt();
        let bound = (-p).exp();
        let mut tail_prob = 0.0;
        for (x, &prob) in self.law.points().iter().zip(self.law.probs()) {
            if prob == 0.0 {
                continue;
            }
            if self.zp_norm(x.as_slice())? > threshold {
                tail_prob += prob;
            }
        }
        if tail_prob > bound {
            return Err(Error::StepViolation {
                name: "markov tail bound".to_string(),
                lhs: tail_prob,
                rhs: bound,
            });
        }
        Ok(TailBoundReport {
            threshold,
            tail_prob,
            bound,
            spanning: self.is_spanning(),
        })
    }

    fn check_vector(&self, v: &[f64], what: &'static str) -> Result<DVector<f64>> {
        if v.len() != self.law.dimension() {
            return Err(Error::Domain {
                quantity: what,
                requirement: "length matching the law dimension",
                value: v.len() as f64,
            });
        }
        if let Some(&bad) = v.iter().find(|c| !c.is_finite()) {
            return Err(Error::Domain {
                quantity: what,
                requirement: "finite entries",
                value: bad,
            });
        }
        Ok(DVector::from_column_slice(v))
    }

    /// Projected gradient ascent of `⟨z,c⟩ / f(z)` over unit vectors in the
    /// whitened span, repeated over deterministic restarts. Restart 0 is
    /// `c/|c|`, the exact p = 2 maximizer.
    ///
    /// Consensus is taken over the restarts whose exit passes the
    /// first-order optimality test: those must agree to within
    /// [`tol::SOLVER_AGREEMENT`], and no stalled restart may sit materially
    /// above them (a stalled value lagging below is an ordinary slow start
    /// and is ignored). At least one restart must certify, else the failure
    /// is reported rather than guessed around.
    fn maximize(&self, c: &DVector<f64>) -> Result<f64> {
        let d = c.len();
        let mut best_certified = f64::NEG_INFINITY;
        let mut worst_certified = f64::INFINITY;
        let mut best_stalled = f64::NEG_INFINITY;
        for restart in 0..RESTARTS {
            let z0 = if restart == 0 {
                c.clone()
            } else {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(numeric::mix_seed(RESTART_ROOT, restart as u64));
                DVector::from_fn(d, |_, _| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal)
                })
            };
            let (value, converged) = self.ascend(c, z0);
            if converged {
                best_certified = best_certified.max(value);
                worst_certified = worst_certified.min(value);
            } else {
                best_stalled = best_stalled.max(value);
            }
        }
        if best_certified == f64::NEG_INFINITY {
            return Err(Error::SolverStall {
                spread: f64::INFINITY,
                best: best_stalled,
            });
        }
        let denom = best_certified.max(f64::MIN_POSITIVE);
        let mut spread = (best_certified - worst_certified) / denom;
        if best_stalled > best_certified {
            spread = spread.max((best_stalled - best_certified) / denom);
        }
        if spread > tol::SOLVER_AGREEMENT {
            return Err(Error::SolverStall {
                spread,
                best: best_certified.max(best_stalled),
            });
        }
        Ok(best_certified)
    }

    /// Returns the best ratio found from `z0` together with a convergence
    /// certificate: whether the final iterate passes the first-order
    /// optimality test below. Only certified values enter the consensus.
    fn ascend(&self, c: &DVector<f64>, mut z: DVector<f64>) -> (f64, bool) {
        let p = self.exponent;
        let probs = &self.whitened_probs;
        let ws = &self.whitened_points;
        let d = c.len();
        let mut abs = vec![0.0; ws.len()];
        let mut trial_abs = vec![0.0; ws.len()];

        let eval = |z: &DVector<f64>, abs: &mut [f64]| -> f64 {
            for (ab, w) in abs.iter_mut().zip(ws) {
                *ab = z.dot(w).abs();
            }
            numeric::weighted_pow_sum_root(probs, abs, p)
        };

        // First-order optimality: at the maximum c = φ · grad f, so the
        // tangent component of grad φ vanishes. grad f = f^{1-p} Σ p_j
        // |u_j|^{p-1} sign(u_j) w_j, formed from the bounded ratios
        // |u_j|/f. The value error is quadratic in this residual, so a
        // modest threshold certifies far more digits in φ.
        let tangent_gradient =
            |z: &DVector<f64>, f: f64, phi: f64, abs: &[f64]| -> (DVector<f64>, f64) {
                let mut grad_f: DVector<f64> = DVector::zeros(d);
                for ((w, &pi), &a) in ws.iter().zip(probs).zip(abs.iter()) {
                    if a == 0.0 {
                        continue;
                    }
                    let u = z.dot(w);
                    let coeff = pi * (a / f).powf(p - 1.0) * u.signum();
                    grad_f.axpy(coeff, w, 1.0);
                }
                let mut tangent = (c - &grad_f * phi) / f;
                let along = tangent.dot(z);
                tangent.axpy(-along, z, 1.0);
                let g_norm = tangent.norm();
                (tangent, g_norm)
            };

        if z.norm() == 0.0 {
            z = c.clone();
        }
        z /= z.norm();
        if z.dot(c) < 0.0 {
            z = -z;
        }
        let mut f = eval(&z, &mut abs);
        if f == 0.0 {
            return (0.0, false);
        }
        let mut phi = z.dot(c) / f;
        let mut flat_streak = 0;

        let accept = |trial: DVector<f64>,
                          min_gain: f64,
                          z: &mut DVector<f64>,
                          f: &mut f64,
                          phi: &mut f64,
                          abs: &mut Vec<f64>,
                          trial_abs: &mut Vec<f64>|
         -> Option<f64> {
            let tf = eval(&trial, trial_abs);
            if tf == 0.0 {
                return None;
            }
            let tphi = trial.dot(c) / tf;
            if !tphi.is_finite() || tphi <= *phi + min_gain {
                return None;
            }
            let rel = (tphi - *phi) / tphi;
            *z = trial;
            *f = tf;
            *phi = tphi;
            std::mem::swap(abs, trial_abs);
            Some(rel)
        };

        for _ in 0..MAX_ITERS {
            let (tangent, g_norm) = tangent_gradient(&z, f, phi, &abs);
            let scale = c.norm() / f;
            if g_norm <= 1e-11 * scale {
                break;
            }

            // Reweighted quadratic model: the maximizer of ⟨z,c⟩ over
            // zᵀMz = 1 with M = Σ p_j (|u_j|/f)^{p-2} w_j w_jᵀ is M⁻¹c, and
            // the true optimum is exactly a fixed point of that map (it
            // reproduces c/|c| at p = 2). The step is damped toward the
            // current iterate until it improves.
            let mut improved = None;
            let mut m = DMatrix::zeros(d, d);
            for ((w, &pi), &a) in ws.iter().zip(probs).zip(abs.iter()) {
                let coeff = pi * (a / f).powf(p - 2.0);
                if coeff > 0.0 {
                    m.ger(coeff, w, w, 1.0);
                }
            }
            let ridge = (m.trace() / d as f64).max(f64::MIN_POSITIVE) * 1e-13;
            for i in 0..d {
                m[(i, i)] += ridge;
            }
            if let Some(chol) = m.cholesky() {
                let mut target = chol.solve(c);
                let norm = target.norm();
                if norm.is_finite() && norm > 0.0 {
                    target /= norm;
                    if target.dot(c) < 0.0 {
                        target = -target;
                    }
                    let mut theta = 1.0;
                    for _ in 0..8 {
                        let mut trial = &z * (1.0 - theta) + &target * theta;
                        let trial_norm = trial.norm();
                        if trial_norm > 0.0 {
                            trial /= trial_norm;
                            improved = accept(
                                trial,
                                0.0,
                                &mut z,
                                &mut f,
                                &mut phi,
                                &mut abs,
                                &mut trial_abs,
                            );
                            if improved.is_some() {
                                break;
                            }
                        }
                        theta *= 0.5;
                    }
                }
            }

            // Fallback: projected gradient with a sufficient-decrease line
            // search, taken not only when the model produces no step but
            // also when the step it produced gained far less than the
            // gradient says is available (a poorly conditioned model can
            // crawl mid-slope in sliver increments forever). The gain
            // requirement stops the search from accepting overshooting
            // hops across the maximum: each accepted step realizes a fixed
            // fraction of the first-order prediction, so progress is
            // geometric until a true plateau.
            let mut fallback = None;
            if improved.is_none_or(|rel| rel * phi < 1e-4 * g_norm) {
                let (tangent, g_norm) = if improved.is_some() {
                    tangent_gradient(&z, f, phi, &abs)
                } else {
                    (tangent, g_norm)
                };
                if g_norm > 1e-11 * (c.norm() / f) {
                    let step = &tangent / g_norm;
                    let mut eta = 1.0;
                    for _ in 0..60 {
                        let mut trial = &z + &step * eta;
                        trial /= trial.norm();
                        fallback = accept(
                            trial,
                            0.1 * g_norm * eta,
                            &mut z,
                            &mut f,
                            &mut phi,
                            &mut abs,
                            &mut trial_abs,
                        );
                        if fallback.is_some() {
                            break;
                        }
                        eta *= 0.5;
                    }
                }
            }

            if improved.is_none() && fallback.is_none() {
                break;
            }
            if improved.unwrap_or(0.0) + fallback.unwrap_or(0.0) < tol::SOLVER_REL_CHANGE {
                flat_streak += 1;
                if flat_streak >= 24 {
                    break;
                }
            } else {
                flat_streak = 0;
            }
        }
        // Post-condition, independent of which break fired: the restart is
        // certified only if its final iterate is first-order stationary.
        // The bound is much looser than the in-loop break because a restart
        // that stops on a value plateau cannot push the residual below
        // about √ε of scale, while the value error it certifies is
        // quadratic in the residual and so still far below the consensus
        // tolerance.
        let (_, g_norm) = tangent_gradient(&z, f, phi, &abs);
        let converged = g_norm <= 1e-6 * (c.norm() / f);
        (phi, converged)
    }
}

/// Closed form for p = 2: `√(sᵀ C⁺ s)` on the range of the second-moment
/// matrix (eigenvalues below `tol::PINV_RTOL · λ_max` treated as zero) and
/// `f64::INFINITY` off it. Serves as the oracle the ascent is checked
/// against.
pub fn zp_norm_p2(law: &DiscreteVectorLaw, s: &[f64]) -> f64 {
    assert_eq!(s.len(), law.dimension(), "query vector length");
    let s = DVector::from_column_slice(s);
    let s_norm = s.norm();
    if s_norm == 0.0 {
        return 0.0;
    }
    let c = law.covariance();
    let out = numeric::pinv_quadform(&c, &s);
    if out.null_component > tol::SPAN_RESIDUAL_RTOL * s_norm {
        f64::INFINITY
    } else {
        out.quadform.sqrt()
    }
}

/// Result of [`ZpBodySpec::zp_pth_moment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZpMomentReport {
    pub value: f64,
    /// Span dimension the norms were computed in.
    pub effective_dim: usize,
    /// Whether the support spans the ambient space.
    pub spanning: bool,
}

/// Result of [`ZpBodySpec::tail_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBoundReport {
    pub threshold: f64,
    pub tail_prob: f64,
    /// `e^{-p}`.
    pub bound: f64,
    pub spanning: bool,
}
