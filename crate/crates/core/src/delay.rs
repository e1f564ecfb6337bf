//! Scalar stochastic delay equation `dx(t) = -a x(t - tau) dt + dw(t)`.
//!
//! A stationary solution exists iff the gain lies in the open interval
//! `(0, pi/(2 tau))`. Inside it the stationary variance has the closed form
//!
//! ```text
//! var(a) = (1 + sin(a tau)) / (2 a cos(a tau))
//! ```
//!
//! which is strictly convex in `a` and minimized at `a = beta/tau`, where
//! `beta` is the unique root of `beta = cos(beta)`. The same variance is
//! reproducible as the integral of the squared fundamental solution of the
//! deterministic equation, which this module builds exactly, segment by
//! segment, as an independent cross-check of the closed form.

use thiserror::Error;

use crate::num::{real, Real};

/// Margin below `pi/2` (in units of `a*tau`) under which the closed-form
/// variance is evaluated; closer to the boundary `cos` blows up.
const STABILITY_GUARD: f64 = 1e-9;

/// Default segment budget for the fundamental-solution variance integral.
pub const DEFAULT_SEGMENT_BUDGET: usize = 10_000;

/// Window of trailing segments used to estimate the geometric decay rate
/// of the tail of the variance integral.
const TAIL_WINDOW: usize = 8;

/// Safety factor applied to the estimated integral tail before comparing
/// against the requested relative tolerance.
const TAIL_SAFETY: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    /// The delay must be strictly positive and finite.
    #[error("invalid plant: delay must be positive and finite, got tau = {tau}")]
    InvalidPlant { tau: f64 },
    /// The gain lies outside `(0, pi/(2 tau))`: no stationary solution.
    #[error("no stationary solution: gain a = {a} outside (0, {limit}) for tau = {tau}")]
    Unstable { a: f64, tau: f64, limit: f64 },
    /// The variance-integral tail did not fall below tolerance in budget.
    #[error("variance integral did not converge within {budget} delay segments")]
    NoConvergence { budget: usize },
}

/// Scalar retarded plant: feedback gain `a` and strictly positive delay `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarDelayPlant<F> {
    a: F,
    tau: F,
}

impl<F: Real> ScalarDelayPlant<F> {
    pub fn new(a: F, tau: F) -> Result<Self, DelayError> {
        if !tau.is_finite() || tau <= F::zero() || !a.is_finite() {
            return Err(DelayError::InvalidPlant {
                tau: tau.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { a, tau })
    }

    pub fn gain(&self) -> F {
        self.a
    }

    pub fn delay(&self) -> F {
        self.tau
    }

    /// Upper end `pi/(2 tau)` of the gain interval admitting a stationary
    /// solution.
    pub fn stability_limit(&self) -> F {
        F::FRAC_PI_2() / self.tau
    }

    /// True iff `0 < a < pi/(2 tau)`, strictly at both ends.
    pub fn is_stable(&self) -> bool {
        self.a > F::zero() && self.a * self.tau < F::FRAC_PI_2()
    }

    fn unstable_error(&self) -> DelayError {
        DelayError::Unstable {
            a: self.a.to_f64().unwrap_or(f64::NAN),
            tau: self.tau.to_f64().unwrap_or(f64::NAN),
            limit: self.stability_limit().to_f64().unwrap_or(f64::NAN),
        }
    }

    /// The closed-form guard: `a > 0` and `a*tau <= pi/2 - 1e-9`.
    fn check_stable_guarded(&self) -> Result<(), DelayError> {
        let b = self.a * self.tau;
        if self.a > F::zero() && b <= F::FRAC_PI_2() - real(STABILITY_GUARD) {
            Ok(())
        } else {
            Err(self.unstable_error())
        }
    }
}

/// The optimal gain of the scalar plant and its minimum variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarOptimum<F> {
    /// Root of `beta = cos(beta)` on `(0, pi/2)`.
    pub beta_star: F,
    /// Optimal gain `beta_star / tau`.
    pub lambda_star: F,
    /// Minimum stationary variance `(1 + sin beta) / (2 cos^2 beta) * tau`.
    pub sigma2_star: F,
}

/// Stationary variance `(1 + sin(a tau)) / (2 a cos(a tau))`.
///
/// In the `tau -> 0` limit the expression degenerates to the
/// Ornstein-Uhlenbeck variance `1/(2a)` (see [`delay_free_variance`]);
/// `tau = 0` itself is not a valid plant.
pub fn steady_state_variance<F: Real>(plant: &ScalarDelayPlant<F>) -> Result<F, DelayError> {
    plant.check_stable_guarded()?;
    let b = plant.a * plant.tau;
    Ok((F::one() + b.sin()) / ((F::one() + F::one()) * plant.a * b.cos()))
}

/// Stationary variance of the delay-free plant `dx = -a x dt + dw`: `1/(2a)`.
///
/// This is the formal `tau -> 0` limit of [`steady_state_variance`]. With no
/// delay the variance can be pushed arbitrarily close to zero by increasing
/// the gain, so there is no delay-free optimum.
pub fn delay_free_variance<F: Real>(a: F) -> F {
    F::one() / ((F::one() + F::one()) * a)
}

/// Derivative of the stationary variance with respect to the gain,
/// evaluated at the plant's gain:
///
/// ```text
/// d var / da = (b - cos b + b sin b - sin b cos b) / (2 a^2 cos^2 b),   b = a tau
/// ```
pub fn variance_derivative<F: Real>(plant: &ScalarDelayPlant<F>) -> Result<F, DelayError> {
    plant.check_stable_guarded()?;
    let b = plant.a * plant.tau;
    let (sin_b, cos_b) = (b.sin(), b.cos());
    let two = F::one() + F::one();
    let numer = b - cos_b + b * sin_b - sin_b * cos_b;
    Ok(numer / (two * plant.a * plant.a * cos_b * cos_b))
}

/// Second derivative of the stationary variance with respect to the gain.
pub fn variance_second_derivative<F: Real>(plant: &ScalarDelayPlant<F>) -> Result<F, DelayError> {
    plant.check_stable_guarded()?;
    // var(a) = tau * v(b) with b = a tau, so d2 var/da2 = tau^3 v''(b).
    let b = plant.a * plant.tau;
    let t3 = plant.tau * plant.tau * plant.tau;
    Ok(t3 * dimensionless_variance_d2(b))
}

/// `v(b) = (1 + sin b)/(2 b cos b)`: the variance with delay scaled out,
/// `var(a; tau) = tau * v(a tau)`.
pub(crate) fn dimensionless_variance<F: Real>(b: F) -> F {
    (F::one() + b.sin()) / ((F::one() + F::one()) * b * b.cos())
}

/// First derivative of [`dimensionless_variance`]. The numerator factors
/// as `(1 + sin b)(b - cos b)`, so the only interior zero is `b = cos b`.
pub(crate) fn dimensionless_variance_d1<F: Real>(b: F) -> F {
    let (sin_b, cos_b) = (b.sin(), b.cos());
    let two = F::one() + F::one();
    (F::one() + sin_b) * (b - cos_b) / (two * b * b * cos_b * cos_b)
}

/// Second derivative of [`dimensionless_variance`], by the quotient rule
/// applied to `v'(b) = u(b) / d(b)` with `u = (1+sin b)(b - cos b)` and
/// `d = 2 b^2 cos^2 b`.
pub(crate) fn dimensionless_variance_d2<F: Real>(b: F) -> F {
    let (sin_b, cos_b) = (b.sin(), b.cos());
    let one = F::one();
    let two = one + one;
    let four = two + two;
    let u = (one + sin_b) * (b - cos_b);
    let du = cos_b * (b - cos_b) + (one + sin_b) * (one + sin_b);
    let d = two * b * b * cos_b * cos_b;
    let dd = four * b * cos_b * (cos_b - b * sin_b);
    (du * d - u * dd) / (d * d)
}

/// Solves `beta = cos(beta)` on `(0, pi/2)` to the requested tolerance on
/// the residual `|beta - cos beta|`.
///
/// Newton iteration from 0.75 with a bisection fallback; the result is
/// deterministic. Tolerances below machine precision are clamped.
pub fn solve_beta_star<F: Real>(tolerance: F) -> F {
    let tol = tolerance.max(F::epsilon());
    let residual = |x: F| x - x.cos();

    let mut beta = real::<F>(0.75);
    for _ in 0..64 {
        let r = residual(beta);
        if r.abs() <= tol {
            return beta;
        }
        let next = beta - r / (F::one() + beta.sin());
        if next <= F::zero() || next >= F::FRAC_PI_2() || !next.is_finite() {
            break; // fall back to bisection
        }
        if next == beta {
            return beta; // converged to the representable fixed point
        }
        beta = next;
    }

    // Bisection on (0, pi/2): residual is negative at 0+, positive at pi/2.
    let mut lo = F::zero();
    let mut hi = F::FRAC_PI_2();
    for _ in 0..4096 {
        let mid = (lo + hi) / (F::one() + F::one());
        let r = residual(mid);
        if r.abs() <= tol || mid == lo || mid == hi {
            return mid;
        }
        if r < F::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / (F::one() + F::one())
}

/// Optimal gain and minimum variance for a given delay:
/// `lambda = beta/tau`, `sigma2 = (1 + sin beta)/(2 cos^2 beta) * tau`.
pub fn optimal_scalar_gain<F: Real>(tau: F) -> Result<ScalarOptimum<F>, DelayError> {
    if !tau.is_finite() || tau <= F::zero() {
        return Err(DelayError::InvalidPlant {
            tau: tau.to_f64().unwrap_or(f64::NAN),
        });
    }
    let beta = solve_beta_star(real::<F>(1e-12));
    let cos_b = beta.cos();
    let two = F::one() + F::one();
    Ok(ScalarOptimum {
        beta_star: beta,
        lambda_star: beta / tau,
        sigma2_star: (F::one() + beta.sin()) / (two * cos_b * cos_b) * tau,
    })
}

/// Fundamental solution of the deterministic equation
/// `x'(t) = -a x(t - tau)` with `x = 0` on `[-tau, 0)` and `x(0) = 1`.
///
/// On the segment `[m tau, (m+1) tau)` the solution is the degree-`m`
/// polynomial `p_m(s)` in the local coordinate `s = t - m tau`, built by the
/// method of steps: `p_0 = 1`, `p_m(0) = p_{m-1}(tau)` and
/// `p_m'(s) = -a p_{m-1}(s)`. The coefficients are exact up to rounding;
/// segments are grown lazily on demand.
#[derive(Debug, Clone)]
pub struct FundamentalSolution<F> {
    plant: ScalarDelayPlant<F>,
    segments: Vec<Vec<F>>,
}

impl<F: Real> FundamentalSolution<F> {
    pub fn new(plant: ScalarDelayPlant<F>) -> Self {
        Self {
            plant,
            segments: vec![vec![F::one()]],
        }
    }

    pub fn plant(&self) -> &ScalarDelayPlant<F> {
        &self.plant
    }

    /// Coefficients of the degree-`m` polynomial on segment `m`, lowest
    /// power first, in the local coordinate `s = t - m tau`.
    pub fn segment(&mut self, m: usize) -> &[F] {
        self.extend_to(m);
        &self.segments[m]
    }

    /// Evaluates `x_d(t)`; zero for `t < 0`.
    pub fn value(&mut self, t: F) -> F {
        if t < F::zero() {
            return F::zero();
        }
        let ratio = (t / self.plant.tau).floor();
        let m = ratio.to_usize().expect("segment index fits in usize");
        self.extend_to(m);
        let s = t - ratio * self.plant.tau;
        poly_eval(&self.segments[m], s)
    }

    fn extend_to(&mut self, m: usize) {
        while self.segments.len() <= m {
            let prev = self.segments.last().expect("segment 0 always present");
            let boundary = poly_eval(prev, self.plant.tau);
            let mut next = Vec::with_capacity(prev.len() + 1);
            next.push(boundary);
            for (j, &c) in prev.iter().enumerate() {
                next.push(-self.plant.a * c / real_usize_plus_one(j));
            }
            self.segments.push(next);
        }
    }

    /// `integral of p_m(s)^2 ds` over `[0, tau]`, by exact antiderivative
    /// of the squared polynomial.
    fn segment_square_integral(&mut self, m: usize) -> F {
        self.extend_to(m);
        let c = &self.segments[m];
        let tau = self.plant.tau;
        let mut acc = F::zero();
        // conv(c, c)[k] integrates to conv[k] * tau^(k+1) / (k+1)
        let deg = c.len();
        for k in 0..(2 * deg - 1) {
            let mut conv = F::zero();
            let lo = k.saturating_sub(deg - 1);
            let hi = k.min(deg - 1);
            for i in lo..=hi {
                conv += c[i] * c[k - i];
            }
            acc += conv * tau.powi(k as i32 + 1) / real_usize_plus_one(k);
        }
        acc
    }
}

fn real_usize_plus_one<F: Real>(j: usize) -> F {
    crate::num::real_usize::<F>(j + 1)
}

fn poly_eval<F: Real>(coeffs: &[F], s: F) -> F {
    let mut acc = F::zero();
    for &c in coeffs.iter().rev() {
        acc = acc * s + c;
    }
    acc
}

/// Evaluates the fundamental solution at one time point.
pub fn fundamental_solution_eval<F: Real>(plant: &ScalarDelayPlant<F>, t: F) -> F {
    FundamentalSolution::new(*plant).value(t)
}

/// Stationary variance as the integral of the squared fundamental solution,
/// accumulated segment by segment until the estimated tail falls below
/// `rel_tol` of the running total. Independent of the closed form:
/// the only approximation is tail truncation.
pub fn fundamental_variance_integral<F: Real>(
    plant: &ScalarDelayPlant<F>,
    rel_tol: F,
) -> Result<F, DelayError> {
    fundamental_variance_integral_with_budget(plant, rel_tol, DEFAULT_SEGMENT_BUDGET)
}

/// [`fundamental_variance_integral`] with an explicit segment budget.
pub fn fundamental_variance_integral_with_budget<F: Real>(
    plant: &ScalarDelayPlant<F>,
    rel_tol: F,
    budget: usize,
) -> Result<F, DelayError> {
    plant.check_stable_guarded()?;
    let mut fundamental = FundamentalSolution::new(*plant);
    let mut acc = F::zero();
    let mut history: Vec<F> = Vec::with_capacity(budget.min(4096));

    for m in 0..budget {
        let seg = fundamental.segment_square_integral(m);
        acc += seg;
        history.push(seg);

        if m + 1 < 2 * TAIL_WINDOW {
            continue;
        }
        let old = history[m - TAIL_WINDOW];
        if old <= F::zero() {
            return Ok(acc); // decayed below representable range
        }
        // Geometric-mean decay ratio over the trailing window; averaging
        // over a full window rides out the oscillation of the dominant
        // complex root pair.
        let ratio = (seg / old).powf(F::one() / crate::num::real_usize(TAIL_WINDOW));
        if ratio < F::one() {
            let tail = seg * ratio / (F::one() - ratio) * real(TAIL_SAFETY);
            if tail <= rel_tol * acc {
                return Ok(acc);
            }
        }
    }
    Err(DelayError::NoConvergence { budget })
}
