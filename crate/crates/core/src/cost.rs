//! Follower-aware yielding cost, threshold waiting time and the priority
//! order used to rank contenders in a deadlock.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::vehicle::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub s_comm: f64,
    pub t_comm: f64,
    pub s_perception: f64,
    pub t_perception: f64,
    /// Seconds of waiting per unit of cost.
    pub a: f64,
    /// Seconds spanned by the random tie-break term.
    pub r_scale: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            s_comm: 1.0,
            t_comm: 20.0,
            s_perception: 1.0,
            t_perception: 20.0,
            a: 0.1,
            r_scale: 1.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("s_comm", self.s_comm),
            ("t_comm", self.t_comm),
            ("s_perception", self.s_perception),
            ("t_perception", self.t_perception),
            ("a", self.a),
            ("r_scale", self.r_scale),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("cost parameter {name} must be strictly positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostInputs {
    pub d_space: f64,
    pub n_f: u32,
    pub g: bool,
}

/// χ from communication: `s_comm·D_SPACE + t_comm·N_f`.
pub fn yielding_cost_comm(p: &CostParams, inputs: &CostInputs) -> f64 {
    p.s_comm * inputs.d_space + p.t_comm * f64::from(inputs.n_f)
}

/// χ from on-board perception: `s_perception·D_SPACE + t_perception·G`.
pub fn yielding_cost_perception(p: &CostParams, inputs: &CostInputs) -> f64 {
    p.s_perception * inputs.d_space + p.t_perception * if inputs.g { 1.0 } else { 0.0 }
}

/// Δ = a·χ + R_scale·R, in seconds.
pub fn threshold_wait(p: &CostParams, chi: f64, r: f64) -> f64 {
    p.a * chi + p.r_scale * r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contender {
    pub id: VehicleId,
    pub rho: bool,
    pub chi: f64,
    pub r: f64,
}

/// `Less` means `x` ranks ahead of `y`.
pub fn priority_cmp(x: &Contender, y: &Contender) -> Ordering {
    y.rho
        .cmp(&x.rho)
        .then_with(|| {
            if x.rho {
                y.chi.total_cmp(&x.chi)
            } else {
                // Among ρ = 0 contenders only the random draw counts.
                Ordering::Equal
            }
        })
        .then_with(|| y.r.total_cmp(&x.r))
        .then_with(|| x.id.cmp(&y.id))
}

/// Contenders ranked highest priority first.
pub fn priority_order(contenders: &[Contender]) -> Vec<Contender> {
    let mut v = contenders.to_vec();
    v.sort_by(priority_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(id: VehicleId, rho: bool, chi: f64, r: f64) -> Contender {
        Contender { id, rho, chi, r }
    }

    #[test]
    fn comm_cost_examples() {
        let p = CostParams {
            t_comm: 10.0,
            ..Default::default()
        };
        let x = yielding_cost_comm(&p, &CostInputs { d_space: 30.0, n_f: 2, g: true });
        assert_eq!(x, 50.0);
        assert_eq!(yielding_cost_comm(&p, &CostInputs::default()), 0.0);
        let a = yielding_cost_comm(&p, &CostInputs { d_space: 12.0, n_f: 2, g: true });
        let b = yielding_cost_comm(&p, &CostInputs { d_space: 12.0, n_f: 0, g: false });
        assert!(a > b);
    }

    #[test]
    fn perception_cost_examples() {
        let p = CostParams::default();
        assert_eq!(yielding_cost_perception(&p, &CostInputs { d_space: 15.0, n_f: 0, g: true }), 35.0);
        assert_eq!(yielding_cost_perception(&p, &CostInputs::default()), 0.0);
        let with = yielding_cost_perception(&p, &CostInputs { d_space: 8.0, n_f: 0, g: true });
        let without = yielding_cost_perception(&p, &CostInputs { d_space: 8.0, n_f: 0, g: false });
        assert!(with > without);
    }

    #[test]
    fn threshold_examples() {
        let p = CostParams::default();
        assert_eq!(threshold_wait(&p, 50.0, 0.3), 5.3);
        assert_eq!(threshold_wait(&p, 0.0, 0.0), 0.0);
        assert_ne!(threshold_wait(&p, 10.0, 0.25), threshold_wait(&p, 10.0, 0.75));
    }

    #[test]
    fn priority_examples() {
        let r = priority_order(&[c(1, false, 100.0, 0.5), c(2, true, 5.0, 0.1)]);
        assert_eq!(r[0].id, 2);
        let r = priority_order(&[c(1, true, 20.0, 0.9), c(2, true, 50.0, 0.1)]);
        assert_eq!(r[0].id, 2);
        let r = priority_order(&[c(1, false, 0.0, 0.2), c(2, false, 0.0, 0.9)]);
        assert_eq!(r[0].id, 2);
    }

    #[test]
    fn rho_zero_ignores_cost() {
        let r = priority_order(&[c(1, false, 90.0, 0.2), c(2, false, 1.0, 0.3)]);
        assert_eq!(r[0].id, 2);
    }

    #[test]
    fn exact_ties_fall_back_to_lowest_id() {
        let r = priority_order(&[c(9, true, 4.0, 0.5), c(3, true, 4.0, 0.5)]);
        assert_eq!(r[0].id, 3);
    }
}
