//! Upper-bounding machinery for the objective: a parametric power-function
//! bound, the Jensen/tangent-line auxiliary function, and its parametric
//! tightening. Constants are evaluated explicitly so the bounds are
//! comparable to the exact cost in absolute value, which is what the
//! sandwich and equality tests rely on.

use ndarray::{Array3, Array4};

use crate::error::{Error, Result};
use crate::kahan::KahanSum;
use crate::model::{demixed_powers, IlrmaState, SourceModel};

/// Below this, ratio powers with exponent `1/p` are evaluated in the log
/// domain so coefficient times power does not overflow prematurely.
const LOG_DOMAIN_P: f64 = 0.05;

/// Upper bound on `z^q1` that touches it exactly at `z = xi`:
///
/// `z^q1 <= (q1/q2) z^q2 xi^(q1-q2) + ((q2-q1)/q2) xi^q1`
///
/// valid for `0 < q1 < q2` or `q2 < q1 < 0`, with `z > 0`, `xi > 0`.
pub fn power_upper_bound(z: f64, xi: f64, q1: f64, q2: f64) -> Result<f64> {
    let ordered = (0.0 < q1 && q1 < q2) || (q2 < q1 && q1 < 0.0);
    if !ordered {
        return Err(Error::InvalidParameter(format!(
            "exponents must satisfy 0 < q1 < q2 or q2 < q1 < 0, got q1={q1}, q2={q2}"
        )));
    }
    if !(z > 0.0) || !(xi > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "z and xi must be positive, got z={z}, xi={xi}"
        )));
    }
    Ok(q1 / q2 * z.powf(q2) * xi.powf(q1 - q2) + (q2 - q1) / q2 * xi.powf(q1))
}

/// Auxiliary variables frozen at a model point, with the convergence-speed
/// exponent they were built for. Indexing is `(bin, frame, basis, source)`
/// for the per-basis variables and `(bin, frame, source)` for `beta`.
#[derive(Debug, Clone)]
pub struct SurrogateState {
    pub alpha: Array4<f64>,
    pub beta: Array3<f64>,
    pub gamma: Array4<f64>,
    pub delta: Array4<f64>,
    pub p: f64,
}

impl SurrogateState {
    /// Variables at their equality point for the given anchor model:
    /// `alpha = t v / sum_l t v`, `beta = sum_l t v`, `gamma = delta = t v`.
    pub fn at_equality(model: &SourceModel, p: f64) -> Result<Self> {
        check_p(p)?;
        let (bins, frames, l, sources) = (
            model.bins(),
            model.frames(),
            model.basis_count(),
            model.sources(),
        );
        let mut alpha = Array4::zeros((bins, frames, l, sources));
        let mut beta = Array3::zeros((bins, frames, sources));
        let mut gamma = Array4::zeros((bins, frames, l, sources));
        for n in 0..sources {
            let t = model.basis(n).data();
            let v = model.activation(n).data();
            let r = model.estimated_power(n);
            for i in 0..bins {
                for j in 0..frames {
                    let r_ij = r[[i, j]];
                    for k in 0..l {
                        let prod = t[[i, k]] * v[[k, j]];
                        alpha[[i, j, k, n]] = prod / r_ij;
                        gamma[[i, j, k, n]] = prod;
                    }
                    beta[[i, j, n]] = r_ij;
                }
            }
        }
        let delta = gamma.clone();
        let state = Self {
            alpha,
            beta,
            gamma,
            delta,
            p,
        };
        state.validate()?;
        Ok(state)
    }

    /// Checks the simplex and positivity invariants.
    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        let shape = self.alpha.shape();
        let (bins, frames, l, sources) = (shape[0], shape[1], shape[2], shape[3]);
        for n in 0..sources {
            for i in 0..bins {
                for j in 0..frames {
                    let mut sum = 0.0;
                    for k in 0..l {
                        let a = self.alpha[[i, j, k, n]];
                        if a < 0.0 {
                            return Err(Error::InvalidParameter(format!(
                                "alpha negative at ({i},{j},{k},{n})"
                            )));
                        }
                        sum += a;
                        if !(self.gamma[[i, j, k, n]] > 0.0) || !(self.delta[[i, j, k, n]] > 0.0) {
                            return Err(Error::InvalidParameter(format!(
                                "gamma/delta must be positive at ({i},{j},{k},{n})"
                            )));
                        }
                    }
                    if (sum - 1.0).abs() > 1e-12 {
                        return Err(Error::InvalidParameter(format!(
                            "alpha does not sum to one at ({i},{j},{n}): {sum}"
                        )));
                    }
                    if !(self.beta[[i, j, n]] > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "beta must be positive at ({i},{j},{n})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "convergence-speed exponent must lie in (0, 1], got {p}"
        )));
    }
    Ok(())
}

fn check_tilde(state: &IlrmaState, tilde: &SourceModel) -> Result<()> {
    let model = state.model();
    if tilde.sources() != model.sources()
        || tilde.bins() != model.bins()
        || tilde.frames() != model.frames()
        || tilde.basis_count() != model.basis_count()
    {
        return Err(Error::DimensionMismatch(
            "anchor model dimensions differ from the state's model".into(),
        ));
    }
    Ok(())
}

/// Jensen/tangent-line upper bound on the cost, anchored at `tilde`.
///
/// Equals the cost exactly when `tilde` equals the state's model, and is
/// never below it otherwise.
pub fn auxiliary_cost(state: &IlrmaState, tilde: &SourceModel) -> Result<f64> {
    check_tilde(state, tilde)?;
    let powers = demixed_powers(state);
    let model = state.model();
    let (bins, frames, l) = (model.bins(), model.frames(), model.basis_count());

    let mut acc = KahanSum::new();
    for n in 0..model.sources() {
        let t = model.basis(n).data();
        let v = model.activation(n).data();
        let ta = tilde.basis(n).data();
        let va = tilde.activation(n).data();
        let r_anchor = tilde.estimated_power(n);
        let p_n = &powers[n];
        for i in 0..bins {
            for j in 0..frames {
                let r_a = r_anchor[[i, j]];
                let pow = p_n[[i, j]];
                let mut bracket = 0.0;
                for k in 0..l {
                    let anchor = ta[[i, k]] * va[[k, j]];
                    let current = t[[i, k]] * v[[k, j]];
                    bracket += pow * anchor * anchor / (r_a * r_a * current) + current / r_a;
                }
                acc.add(bracket + r_a.ln() - 1.0);
            }
        }
    }
    let log_det = state.demixing().log_abs_det_sum()?;
    Ok(acc.value() - 2.0 * frames as f64 * log_det)
}

/// Parametric upper bound on [`auxiliary_cost`], anchored at `tilde`, with
/// exponent `1/p` on the model-to-anchor ratios. At `p = 1` it coincides
/// with [`auxiliary_cost`]; as `p` shrinks it loosens, which is what slows
/// the source-model updates derived from it.
pub fn auxiliary_cost_parametric(state: &IlrmaState, tilde: &SourceModel, p: f64) -> Result<f64> {
    check_p(p)?;
    check_tilde(state, tilde)?;
    let powers = demixed_powers(state);
    let model = state.model();
    let (bins, frames, l) = (model.bins(), model.frames(), model.basis_count());
    let inv_p = 1.0 / p;
    let log_domain = p < LOG_DOMAIN_P;

    let mut acc = KahanSum::new();
    for n in 0..model.sources() {
        let t = model.basis(n).data();
        let v = model.activation(n).data();
        let ta = tilde.basis(n).data();
        let va = tilde.activation(n).data();
        let r_anchor = tilde.estimated_power(n);
        let p_n = &powers[n];
        for i in 0..bins {
            for j in 0..frames {
                let r_a = r_anchor[[i, j]];
                let pow = p_n[[i, j]];
                // constant so the bound matches the cost at the anchor
                acc.add(r_a.ln() - 1.0 + (1.0 - p) * (pow / r_a + 1.0));
                for k in 0..l {
                    let anchor = ta[[i, k]] * va[[k, j]];
                    let current = t[[i, k]] * v[[k, j]];
                    let coef_fit = pow * anchor / (r_a * r_a);
                    let coef_reg = anchor / r_a;
                    let term = if log_domain {
                        let ln_ratio = (current / anchor).ln();
                        let fit = if coef_fit > 0.0 {
                            (coef_fit.ln() - inv_p * ln_ratio).exp()
                        } else {
                            0.0
                        };
                        p * (fit + (coef_reg.ln() + inv_p * ln_ratio).exp())
                    } else {
                        let ratio_pow = (current / anchor).powf(inv_p);
                        let fit = if coef_fit > 0.0 { coef_fit / ratio_pow } else { 0.0 };
                        p * (fit + coef_reg * ratio_pow)
                    };
                    // the exponent 1/p can push a single term past f64 range;
                    // the bound itself is then past it too
                    if term.is_infinite() {
                        return Ok(f64::INFINITY);
                    }
                    acc.add(term);
                }
            }
        }
    }
    let log_det = state.demixing().log_abs_det_sum()?;
    Ok(acc.value() - 2.0 * frames as f64 * log_det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::cost;
    use crate::model::tests::random_state;
    use crate::tensors::FLOOR;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tilde(state: &IlrmaState, seed: u64) -> SourceModel {
        let m = state.model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SourceModel::random(
            m.bins(),
            m.frames(),
            m.basis_count(),
            m.sources(),
            FLOOR,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn power_bound_equality_cases() {
        // touches z^q1 at z = xi, in both exponent branches
        let v = power_upper_bound(1.0, 1.0, 0.4, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let v = power_upper_bound(0.5, 0.5, -1.0, -2.0).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_bound_hand_value() {
        // z=2, xi=1, q1=0.4, q2=2: 0.2*4 + 0.8 = 1.6 >= 2^0.4
        let v = power_upper_bound(2.0, 1.0, 0.4, 2.0).unwrap();
        assert!((v - 1.6).abs() < 1e-12);
        assert!(v >= 2.0f64.powf(0.4));
    }

    #[test]
    fn power_bound_rejects_bad_exponent_order() {
        assert!(power_upper_bound(1.0, 1.0, 2.0, 1.0).is_err());
        assert!(power_upper_bound(1.0, 1.0, -1.0, 1.0).is_err());
        assert!(power_upper_bound(1.0, 1.0, -2.0, -1.0).is_err());
        assert!(power_upper_bound(-1.0, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn power_bound_dominates_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20_000 {
            let z = 10f64.powf(rng.random_range(-6.0..6.0));
            let xi = 10f64.powf(rng.random_range(-6.0..6.0));
            let (q1, q2) = if rng.random_bool(0.5) {
                let q1 = rng.random_range(1e-3..4.0);
                (q1, q1 + rng.random_range(1e-3..4.0))
            } else {
                let q1 = -rng.random_range(1e-3..4.0);
                (q1, q1 - rng.random_range(1e-3..4.0))
            };
            let bound = power_upper_bound(z, xi, q1, q2).unwrap();
            let direct = z.powf(q1);
            assert!(
                bound >= direct - 1e-12 * direct.abs(),
                "violated at z={z}, xi={xi}, q1={q1}, q2={q2}"
            );
        }
    }

    #[test]
    fn equality_state_satisfies_invariants() {
        let state = random_state(3, 4, 3, 2, 17);
        let s = SurrogateState::at_equality(state.model(), 0.5).unwrap();
        s.validate().unwrap();
        // beta is the modeled power, gamma the per-basis products
        let r = state.model().estimated_power(0);
        assert!((s.beta[[1, 2, 0]] - r[[1, 2]]).abs() < 1e-15);
        assert!(SurrogateState::at_equality(state.model(), 0.0).is_err());
        assert!(SurrogateState::at_equality(state.model(), 1.5).is_err());
    }

    #[test]
    fn aux_equals_cost_at_anchor() {
        let state = random_state(4, 5, 3, 2, 31);
        let c = cost(&state).unwrap();
        let plus = auxiliary_cost(&state, state.model()).unwrap();
        assert!((plus - c).abs() <= 1e-10 * c.abs(), "{c} vs {plus}");
        for &p in &[0.1, 0.3, 0.5, 0.7, 1.0] {
            let pp = auxiliary_cost_parametric(&state, state.model(), p).unwrap();
            assert!((pp - c).abs() <= 1e-10 * c.abs(), "p={p}: {c} vs {pp}");
        }
    }

    #[test]
    fn parametric_bound_matches_plain_bound_at_p_one() {
        let state = random_state(3, 4, 2, 2, 7);
        for seed in 0..5 {
            let tilde = random_tilde(&state, 100 + seed);
            let plus = auxiliary_cost(&state, &tilde).unwrap();
            let pp = auxiliary_cost_parametric(&state, &tilde, 1.0).unwrap();
            assert!((pp - plus).abs() <= 1e-10 * plus.abs());
        }
    }

    #[test]
    fn sandwich_holds_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for trial in 0..200 {
            let state = random_state(3, 4, 2, 2, 1000 + trial);
            let tilde = random_tilde(&state, 2000 + trial);
            let p = 1.0 - rng.random::<f64>();
            let c = cost(&state).unwrap();
            let plus = auxiliary_cost(&state, &tilde).unwrap();
            let pp = auxiliary_cost_parametric(&state, &tilde, p).unwrap();
            let slack = 1e-12;
            assert!(c <= plus + slack * c.abs().max(plus.abs()), "trial {trial}");
            assert!(
                plus <= pp + slack * plus.abs().max(pp.abs()),
                "trial {trial}, p={p}"
            );
        }
    }

    #[test]
    fn parametric_bound_nonincreasing_in_p() {
        for trial in 0..50 {
            let state = random_state(3, 3, 2, 2, 3000 + trial);
            let tilde = random_tilde(&state, 4000 + trial);
            let ps = [0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
            let vals: Vec<f64> = ps
                .iter()
                .map(|&p| auxiliary_cost_parametric(&state, &tilde, p).unwrap())
                .collect();
            for w in vals.windows(2) {
                assert!(
                    w[0] >= w[1] - 1e-12 * w[1].abs(),
                    "trial {trial}: {vals:?}"
                );
            }
        }
    }

    #[test]
    fn single_basis_case_reduces_to_tangent_term() {
        // with one basis the Jensen step is an identity, so the gap between
        // the bound and the cost is exactly the tangent-line remainder
        let state = random_state(4, 4, 1, 2, 71);
        let tilde = random_tilde(&state, 72);
        let gap = auxiliary_cost(&state, &tilde).unwrap() - cost(&state).unwrap();
        let mut expect = 0.0;
        for n in 0..2 {
            let r = state.model().estimated_power(n);
            let ra = tilde.estimated_power(n);
            for i in 0..4 {
                for j in 0..4 {
                    expect += r[[i, j]] / ra[[i, j]] - 1.0 + ra[[i, j]].ln() - r[[i, j]].ln();
                }
            }
        }
        assert!((gap - expect).abs() <= 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn tiny_p_uses_stable_log_domain_path() {
        let state = random_state(2, 2, 2, 2, 91);
        let tilde = random_tilde(&state, 92);
        let v = auxiliary_cost_parametric(&state, &tilde, 0.01).unwrap();
        assert!(v.is_finite() || v == f64::INFINITY);
        // still dominated from below by the anchor-free bound
        let plus = auxiliary_cost(&state, &tilde).unwrap();
        assert!(v >= plus - 1e-12 * plus.abs());
    }
}
