use log::warn;

use super::paths::all_or_nothing;
use super::{edge_cost, edge_derivative, edge_integral, AssignmentResult, Method, SolverOptions, Unreachable};
use crate::error::{Error, Result};
use crate::netio::{Edge, OdMatrix, RoadNetwork};

const INV_PHI: f64 = 0.618_033_988_749_894_8;
/// Upper bound on conjugate weights, keeps some pull towards the AON point.
const MAX_CONJUGATE_WEIGHT: f64 = 0.99999;

struct Problem<'a> {
    edges: &'a [Edge],
    present: &'a [bool],
}

impl Problem<'_> {
    fn costs(&self, flows: &[f64]) -> Vec<f64> {
        self.edges
            .iter()
            .zip(flows)
            .map(|(e, &v)| edge_cost(e, v))
            .collect()
    }

    fn objective(&self, flows: &[f64]) -> f64 {
        self.edges
            .iter()
            .zip(flows)
            .zip(self.present)
            .filter(|(_, &p)| p)
            .map(|((e, &v), _)| edge_integral(e, v))
            .sum()
    }

    fn objective_along(&self, x: &[f64], d: &[f64], tau: f64) -> f64 {
        self.edges
            .iter()
            .zip(x.iter().zip(d))
            .zip(self.present)
            .filter(|(_, &p)| p)
            .map(|((e, (&xv, &dv)), _)| edge_integral(e, (xv + tau * dv).max(0.0)))
            .sum()
    }

    fn hessian(&self, flows: &[f64]) -> Vec<f64> {
        self.edges
            .iter()
            .zip(flows)
            .map(|(e, &v)| edge_derivative(e, v))
            .collect()
    }

    /// Golden-section minimisation of the objective on `x + τ·d`, τ ∈ [0, 1].
    /// Never returns a step that increases the objective.
    fn line_search(&self, x: &[f64], d: &[f64], tol: f64) -> (f64, f64) {
        let f0 = self.objective(x);
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut a = hi - INV_PHI * (hi - lo);
        let mut b = lo + INV_PHI * (hi - lo);
        let mut fa = self.objective_along(x, d, a);
        let mut fb = self.objective_along(x, d, b);
        while hi - lo > tol {
            if fa <= fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - INV_PHI * (hi - lo);
                fa = self.objective_along(x, d, a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + INV_PHI * (hi - lo);
                fb = self.objective_along(x, d, b);
            }
        }
        let mut best = (0.0, f0);
        for tau in [lo, 0.5 * (lo + hi), hi] {
            let f = self.objective_along(x, d, tau);
            if f < best.1 {
                best = (tau, f);
            }
        }
        best
    }
}

fn weighted_dot(a: &[f64], h: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(h).zip(b).map(|((x, w), y)| x * w * y).sum()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn combine(weights: &[(f64, &[f64])]) -> Vec<f64> {
    let n = weights[0].1.len();
    (0..n).map(|i| weights.iter().map(|(w, v)| w * v[i]).sum()).collect()
}

/// Conjugate target: `α·s_prev + (1−α)·y`, with `α` making the new
/// direction conjugate to the previous one under the diagonal Hessian.
fn conjugate_target(x: &[f64], y: &[f64], s_prev: &[f64], hess: &[f64]) -> Vec<f64> {
    let dp = diff(s_prev, x);
    let num = weighted_dot(&dp, hess, &diff(y, x));
    let den = weighted_dot(&dp, hess, &diff(y, s_prev));
    let alpha = if den != 0.0 { num / den } else { 0.0 };
    let alpha = if alpha.is_finite() {
        alpha.clamp(0.0, MAX_CONJUGATE_WEIGHT)
    } else {
        0.0
    };
    combine(&[(alpha, s_prev), (1.0 - alpha, y)])
}

/// Bi-conjugate target `β₀·y + β₁·s₁ + β₂·s₂` (s₁, s₂ the two previous
/// targets, `tau_prev` the last step length in (0, 1)).
fn biconjugate_target(x: &[f64], y: &[f64], s1: &[f64], s2: &[f64], tau_prev: f64, hess: &[f64]) -> Option<Vec<f64>> {
    let d1 = diff(s1, x);
    // τ·s₁ + (1−τ)·s₂ − x
    let d2: Vec<f64> = s1
        .iter()
        .zip(s2)
        .zip(x)
        .map(|((a, b), xv)| tau_prev * a + (1.0 - tau_prev) * b - xv)
        .collect();
    let y_dir = diff(y, x);

    let mu_den = weighted_dot(&d2, hess, &diff(s2, s1));
    let mu = if mu_den != 0.0 {
        (-weighted_dot(&d2, hess, &y_dir) / mu_den).max(0.0)
    } else {
        0.0
    };
    let nu_den = weighted_dot(&d1, hess, &d1);
    let nu = if nu_den != 0.0 {
        (-weighted_dot(&d1, hess, &y_dir) / nu_den + mu * tau_prev / (1.0 - tau_prev)).max(0.0)
    } else {
        0.0
    };
    let b0 = 1.0 / (1.0 + mu + nu);
    let (b1, b2) = (nu * b0, mu * b0);
    if !(b0.is_finite() && b1.is_finite() && b2.is_finite()) {
        return None;
    }
    Some(combine(&[(b0, y), (b1, s1), (b2, s2)]))
}

/// Solves static user equilibrium on the open part of `network`.
///
/// Convergence is measured by the relative gap
/// `(Σ c·v − Σ c·v_aon) / Σ c·v` at the current costs `c`.
pub fn solve_ue(network: &RoadNetwork, present: &[bool], od: &OdMatrix, options: &SolverOptions) -> Result<AssignmentResult> {
    options.validate()?;
    if present.len() != network.n_edges() {
        return Err(Error::Shape {
            op: "solve_ue",
            lhs: (network.n_edges(), 1),
            rhs: (present.len(), 1),
        });
    }
    if od.zones() != network.n_zones() {
        return Err(Error::Shape {
            op: "solve_ue",
            lhs: (network.n_zones(), network.n_zones()),
            rhs: (od.zones(), od.zones()),
        });
    }
    let problem = Problem {
        edges: network.edges(),
        present,
    };

    let free_flow = problem.costs(&vec![0.0; network.n_edges()]);
    let init = all_or_nothing(network, present, &free_flow, od);
    if init.unreachable_demand > 0.0 {
        match options.unreachable {
            Unreachable::Error => {
                return Err(Error::ScenarioInfeasible {
                    demand: init.unreachable_demand,
                    task_id: None,
                    od_id: Some(od.od_id()),
                })
            }
            Unreachable::Warn => warn!(
                "{} trips of demand have no open path and are dropped",
                init.unreachable_demand
            ),
        }
    }

    let mut x = init.flows;
    let mut objective = problem.objective(&x);
    let mut history = vec![objective];
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut tau_prev = 1.0;
    let mut iterations = 0;

    loop {
        let costs = problem.costs(&x);
        let aon = all_or_nothing(network, present, &costs, od);
        let total: f64 = costs.iter().zip(&x).map(|(c, v)| c * v).sum();
        let gap = if total > 0.0 {
            ((total - aon.shortest_cost) / total).max(0.0)
        } else {
            0.0
        };
        let converged = gap <= options.gap_tolerance;
        if converged || iterations >= options.max_iterations {
            return Ok(AssignmentResult {
                flows: x,
                costs,
                relative_gap: gap,
                iterations,
                converged,
                objective,
                objective_history: history,
                unreachable_demand: init.unreachable_demand,
            });
        }

        let y = aon.flows;
        let hess = || problem.hessian(&x);
        let mut target = match (options.method, targets.as_slice()) {
            (Method::Fw, _) | (_, []) => y.clone(),
            (Method::Cfw, [.., s1]) => conjugate_target(&x, &y, s1, &hess()),
            (Method::Bcfw, [s1]) => conjugate_target(&x, &y, s1, &hess()),
            (Method::Bcfw, [s2, s1]) => {
                let h = hess();
                if tau_prev > 0.0 && tau_prev < 1.0 {
                    biconjugate_target(&x, &y, s1, s2, tau_prev, &h).unwrap_or_else(|| conjugate_target(&x, &y, s1, &h))
                } else {
                    conjugate_target(&x, &y, s1, &h)
                }
            }
            (Method::Bcfw, _) => unreachable!("at most two targets are kept"),
        };
        let descent: f64 = costs.iter().zip(target.iter().zip(&x)).map(|(c, (s, v))| c * (s - v)).sum();
        if descent.is_nan() || descent >= 0.0 {
            target = y.clone();
        }
        let (mut tau, _) = problem.line_search(&x, &diff(&target, &x), options.line_search_tolerance);
        if tau == 0.0 && target != y {
            // stalled conjugate target: restart from the plain FW direction
            tau = problem.line_search(&x, &diff(&y, &x), options.line_search_tolerance).0;
            target = y;
            targets.clear();
        }
        // x ← x + τ (s − x)
        for (xv, sv) in x.iter_mut().zip(&target) {
            *xv = (*xv + tau * (sv - *xv)).max(0.0);
        }
        objective = problem.objective(&x);
        history.push(objective);
        if targets.len() == 2 {
            targets.remove(0);
        }
        targets.push(target);
        tau_prev = tau;
        iterations += 1;
    }
}
