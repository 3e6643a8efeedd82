//! BFGS minimization with a backtracking line search, plus the coordinate
//! transforms that turn box constraints into unconstrained variables.

use nalgebra::{DMatrix, DVector};

/// Largest step allowed along any free coordinate in one iteration.
const MAX_STEP: f64 = 3.0;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub max_iterations: usize,
    /// Infinity norm of the gradient in free coordinates.
    pub gradient_tolerance: f64,
    /// Relative change of the objective between accepted steps.
    pub relative_tolerance: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            relative_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub converged: bool,
}

/// Minimizes `f`, which returns the value and gradient or `None` where it
/// cannot be evaluated. Returns `None` only if the start itself fails.
pub(crate) fn minimize<F>(mut f: F, x0: DVector<f64>, rule: &StoppingRule) -> Option<Minimum>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let mut eval = |x: &DVector<f64>| f(x).filter(|(v, g)| v.is_finite() && g.iter().all(|d| d.is_finite()));
    let n = x0.len();
    let (mut fx, mut g) = eval(&x0)?;
    let mut x = x0;
    let mut h = DMatrix::identity(n, n);
    let mut fresh = true;

    for _ in 0..rule.max_iterations {
        if g.amax() < rule.gradient_tolerance {
            return Some(Minimum { x, value: fx, converged: true });
        }
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            fresh = true;
            d = -g.clone();
            slope = g.dot(&d);
        }
        let biggest = d.amax();
        if biggest > MAX_STEP {
            d *= MAX_STEP / biggest;
            slope *= MAX_STEP / biggest;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + step * &d;
            if let Some((ft, gt)) = eval(&trial) {
                if ft <= fx + ARMIJO * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if fresh {
                // steepest descent cannot make progress either
                return Some(Minimum { x, value: fx, converged: false });
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                // scale the first inverse-Hessian guess to the observed curvature
                h *= sy / y.norm_squared();
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← H - ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h.ger(-rho, &hy, &s, 1.0);
            h.ger(-rho, &s, &hy, 1.0);
            h.ger(rho * rho * yhy + rho, &s, &s, 1.0);
            fresh = false;
        }

        let change = (fx - f_new).abs();
        x = x_new;
        g = g_new;
        let previous = fx;
        fx = f_new;
        if g.amax() < rule.gradient_tolerance
            || change <= rule.relative_tolerance * previous.abs().max(f64::MIN_POSITIVE)
        {
            return Some(Minimum { x, value: fx, converged: true });
        }
    }
    Some(Minimum { x, value: fx, converged: false })
}

/// Map from a free coordinate `u` to a constrained parameter `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Transform {
    /// `θ = exp(u)` on `(0, ∞)`.
    Log,
    /// `θ = lo + exp(u)` on `[lo, ∞)`.
    Shifted { lo: f64 },
    /// `θ = lo + (hi - lo) σ(u)` on `[lo, hi]`.
    Logistic { lo: f64, hi: f64 },
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl Transform {
    pub fn for_interval(lo: f64, hi: f64) -> Transform {
        match (lo > 0.0, hi.is_finite()) {
            (_, true) => Transform::Logistic { lo, hi },
            (true, false) => Transform::Shifted { lo },
            (false, false) => Transform::Log,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Transform::Log => (0.0, f64::INFINITY),
            Transform::Shifted { lo } => (lo, f64::INFINITY),
            Transform::Logistic { lo, hi } => (lo, hi),
        }
    }

    pub fn to_natural(self, u: f64) -> f64 {
        let (lo, hi) = self.bounds();
        let theta = match self {
            Transform::Log => u.exp(),
            Transform::Shifted { lo } => lo + u.exp(),
            Transform::Logistic { lo, hi } => lo + (hi - lo) * sigmoid(u),
        };
        theta.clamp(lo, hi)
    }

    /// Inverse map; `θ` is pulled strictly inside the interval first.
    pub fn to_free(self, theta: f64) -> f64 {
        match self {
            Transform::Log => theta.max(f64::MIN_POSITIVE).ln(),
            Transform::Shifted { lo } => (theta - lo).max(1e-8 * lo.max(f64::MIN_POSITIVE)).ln(),
            Transform::Logistic { lo, hi } => {
                let p = ((theta - lo) / (hi - lo)).clamp(1e-8, 1.0 - 1e-8);
                (p / (1.0 - p)).ln()
            }
        }
    }

    /// `(dθ/du) / θ`, which converts a log-parameter derivative into a
    /// free-coordinate derivative.
    pub fn log_jacobian(&self, u: f64, theta: f64) -> f64 {
        match *self {
            Transform::Log => 1.0,
            Transform::Shifted { .. } => u.exp() / theta,
            Transform::Logistic { lo, hi } => {
                let e = (-u.abs()).exp();
                (hi - lo) * e / ((1.0 + e) * (1.0 + e)) / theta
            }
        }
    }

    /// Interior point for starting values that fall outside the interval.
    pub fn interior(&self, theta: f64) -> f64 {
        match *self {
            Transform::Log => theta,
            Transform::Shifted { lo } => theta.max(lo * (1.0 + 1e-3)),
            Transform::Logistic { lo, hi } => {
                let margin = 1e-3 * (hi - lo);
                theta.clamp(lo + margin, hi - margin)
            }
        }
    }
}
