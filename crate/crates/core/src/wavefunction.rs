//! Harmonic-oscillator eigenstates continued into the complex plane.
//!
//! Everything is dimensionless with `hbar = m = omega = 1`, so the `n`-th
//! eigenstate is
//!
//! ```text
//! Psi_n(t, z) = C_n H_n(z) exp(-z^2 / 2) exp(-i (n + 1/2) t),
//! C_n = (2^n n! sqrt(pi))^(-1/2)
//! ```
//!
//! and the drift of the complex random motion is `u*(z) = -i d(ln Psi_n)/dz`.
//! The time-dependent phase drops out of every logarithmic derivative.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::WaveError;
use crate::ComplexValue;

/// `|H_n(z)|` below this is reported as node proximity.
pub const NODE_THRESHOLD: f64 = 1e-12;

/// Magnitude clamp applied to drift velocities near nodes.
pub const DRIFT_CLAMP: f64 = 1e3;

// exp() overflows just above 709.78
const EXP_LIMIT: f64 = 709.0;

/// Oscillator quantum number together with its normalization constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "u32", from = "u32")]
pub struct QuantumState {
    n: u32,
    norm_const: f64,
}

impl QuantumState {
    pub fn new(n: u32) -> Self {
        // ln C_n = -(n ln 2 + ln n! + ln(pi)/2) / 2
        let ln_factorial: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
        let ln_c = -0.5 * (n as f64 * std::f64::consts::LN_2 + ln_factorial + 0.5 * PI.ln());
        Self {
            n,
            norm_const: ln_c.exp(),
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// `C_n`.
    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// `E_n = n + 1/2`.
    pub fn energy(&self) -> f64 {
        self.n as f64 + 0.5
    }

    /// Classical turning point `A = sqrt(2n + 1)` at the same energy.
    pub fn classical_amplitude(&self) -> f64 {
        (2.0 * self.n as f64 + 1.0).sqrt()
    }

    /// Real zeros of `H_n`, ascending. Found by bisection between the
    /// sign changes of `H_n` on a fine grid inside the classical region.
    pub fn real_nodes(&self) -> Vec<f64> {
        let n = self.n;
        if n == 0 {
            return Vec::new();
        }
        let h = |x: f64| hermite(n, Complex64::new(x, 0.0)).re;
        let reach = self.classical_amplitude() + 1.0;
        let cells = 400 * n as usize;
        let step = 2.0 * reach / cells as f64;
        let mut nodes = Vec::with_capacity(n as usize);
        let mut a = -reach;
        let mut ha = h(a);
        for k in 1..=cells {
            let b = -reach + k as f64 * step;
            let hb = h(b);
            if hb == 0.0 {
                nodes.push(b);
            } else if ha * hb < 0.0 {
                let (mut lo, mut hi, mut hlo) = (a, b, ha);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let hm = h(mid);
                    if hm == 0.0 || hi - lo < 1e-15 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if hlo * hm < 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        hlo = hm;
                    }
                }
                nodes.push(0.5 * (lo + hi));
            }
            a = b;
            ha = hb;
        }
        // H_n has odd/even parity, so snap the middle node of odd n onto 0
        for x in nodes.iter_mut() {
            if x.abs() < 1e-12 {
                *x = 0.0;
            }
        }
        nodes
    }
}

impl From<QuantumState> for u32 {
    fn from(s: QuantumState) -> u32 {
        s.n
    }
}

impl From<u32> for QuantumState {
    fn from(n: u32) -> Self {
        QuantumState::new(n)
    }
}

/// Physicists' Hermite polynomial by upward recurrence
/// `H_{k+1} = 2z H_k - 2k H_{k-1}`.
pub fn hermite(n: u32, z: ComplexValue) -> ComplexValue {
    hermite_triple(n, z).0
}

/// `(H_n, H_{n-1}, H_{n-2})` with the convention `H_{-1} = H_{-2} = 0`.
pub(crate) fn hermite_triple(n: u32, z: ComplexValue) -> (Complex64, Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    match n {
        0 => (one, zero, zero),
        _ => {
            let mut prev2 = zero;
            let mut prev = one;
            let mut cur = 2.0 * z;
            for k in 1..n {
                prev2 = prev;
                prev = cur;
                cur = 2.0 * z * prev - 2.0 * k as f64 * prev2;
            }
            (cur, prev, prev2)
        }
    }
}

fn check_finite(z: ComplexValue) -> Result<(), WaveError> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(WaveError::NonFinite(z))
    }
}

/// `C_n e^{-z^2/2} e^{-i E t}` times `poly`, computed in log space when the
/// Gaussian factor alone would overflow.
fn gaussian_times(
    state: &QuantumState,
    t: f64,
    z: ComplexValue,
    poly: Complex64,
) -> Result<ComplexValue, WaveError> {
    let exponent = -z * z / 2.0 - Complex64::new(0.0, state.energy() * t);
    if poly == Complex64::new(0.0, 0.0) {
        return Ok(poly);
    }
    let ln_mag = state.norm_const.ln() + poly.norm().ln() + exponent.re;
    if ln_mag > EXP_LIMIT {
        return Err(WaveError::Overflow {
            z,
            exponent: ln_mag,
        });
    }
    if exponent.re.abs() < EXP_LIMIT && poly.is_finite() {
        Ok(state.norm_const * poly * exponent.exp())
    } else {
        Ok((state.norm_const.ln() + poly.ln() + exponent).exp())
    }
}

/// `Psi_n(t, z)`.
pub fn eigenstate(
    state: &QuantumState,
    t: f64,
    z: ComplexValue,
) -> Result<ComplexValue, WaveError> {
    check_finite(z)?;
    gaussian_times(state, t, z, hermite(state.n, z))
}

/// `dPsi_n/dz = C_n (2n H_{n-1}(z) - z H_n(z)) e^{-z^2/2} e^{-iEt}`.
pub fn eigenstate_dz(
    state: &QuantumState,
    t: f64,
    z: ComplexValue,
) -> Result<ComplexValue, WaveError> {
    check_finite(z)?;
    let (h, h1, _) = hermite_triple(state.n, z);
    gaussian_times(state, t, z, 2.0 * state.n as f64 * h1 - z * h)
}

/// Logarithmic derivative `d(ln Psi_n)/dz = 2n H_{n-1}/H_n - z`, or `None`
/// exactly at a zero of `H_n`.
pub(crate) fn log_derivative_unchecked(n: u32, z: ComplexValue) -> Option<ComplexValue> {
    let (h, h1, _) = hermite_triple(n, z);
    if h == Complex64::new(0.0, 0.0) {
        return None;
    }
    Some(2.0 * n as f64 * h1 / h - z)
}

/// `d(ln Psi_n)/dz`, rejecting points within [`NODE_THRESHOLD`] of a node.
pub fn log_derivative(state: &QuantumState, z: ComplexValue) -> Result<ComplexValue, WaveError> {
    log_derivative_with_threshold(state, z, NODE_THRESHOLD)
}

pub fn log_derivative_with_threshold(
    state: &QuantumState,
    z: ComplexValue,
    node_threshold: f64,
) -> Result<ComplexValue, WaveError> {
    check_finite(z)?;
    let (h, h1, _) = hermite_triple(state.n, z);
    let magnitude = h.norm();
    if magnitude < node_threshold {
        return Err(WaveError::NodeProximity {
            n: state.n,
            z,
            magnitude,
        });
    }
    Ok(2.0 * state.n as f64 * h1 / h - z)
}

/// Second logarithmic derivative
/// `d^2(ln Psi_n)/dz^2 = 4n((n-1) H_{n-2} H_n - n H_{n-1}^2) / H_n^2 - 1`.
pub fn log_derivative_dz(state: &QuantumState, z: ComplexValue) -> Result<ComplexValue, WaveError> {
    check_finite(z)?;
    let n = state.n as f64;
    let (h, h1, h2) = hermite_triple(state.n, z);
    let magnitude = h.norm();
    if magnitude < NODE_THRESHOLD {
        return Err(WaveError::NodeProximity {
            n: state.n,
            z,
            magnitude,
        });
    }
    Ok(4.0 * n * ((n - 1.0) * h2 * h - n * h1 * h1) / (h * h) - 1.0)
}

/// A drift velocity after the magnitude clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drift {
    pub velocity: ComplexValue,
    pub clamped: bool,
}

/// Rescale `v` onto the circle of radius `limit` if it lies outside.
pub fn clamp_magnitude(v: ComplexValue, limit: f64) -> (ComplexValue, bool) {
    let norm = v.norm();
    if norm > limit {
        (v * (limit / norm), true)
    } else {
        (v, false)
    }
}

/// Optimal-guidance drift `u*(z) = -i d(ln Psi_n)/dz`, clamped to
/// [`DRIFT_CLAMP`].
pub fn complex_drift(state: &QuantumState, z: ComplexValue) -> Result<Drift, WaveError> {
    complex_drift_clamped(state, z, DRIFT_CLAMP)
}

pub fn complex_drift_clamped(
    state: &QuantumState,
    z: ComplexValue,
    limit: f64,
) -> Result<Drift, WaveError> {
    let f = log_derivative(state, z)?;
    let (velocity, clamped) = clamp_magnitude(Complex64::new(f.im, -f.re), limit);
    Ok(Drift { velocity, clamped })
}

/// Divergence of the drift viewed as the planar field `(Re u*, Im u*)`.
/// Since `u*` is analytic this is `2 Re(du*/dz) = 2 Im(f')` with
/// `f = d(ln Psi_n)/dz`.
pub fn drift_divergence(state: &QuantumState, z: ComplexValue) -> Result<f64, WaveError> {
    Ok(2.0 * log_derivative_dz(state, z)?.im)
}

/// `|Psi_n(t, z)|^2 = C_n^2 |H_n(z)|^2 e^{-(x^2 - y^2)}`, independent of `t`.
pub fn magnitude_squared_complex(state: &QuantumState, z: ComplexValue) -> Result<f64, WaveError> {
    check_finite(z)?;
    let h = hermite(state.n, z);
    let hn = h.norm();
    if hn == 0.0 {
        return Ok(0.0);
    }
    let exponent = -(z.re * z.re - z.im * z.im);
    if !hn.is_finite() {
        // only reachable for absurdly large |z|; the Gaussian wins on the real side
        return if exponent < 0.0 {
            Ok(0.0)
        } else {
            Err(WaveError::Overflow { z, exponent })
        };
    }
    let ln_mag = 2.0 * (state.norm_const.ln() + hn.ln()) + exponent;
    if ln_mag > EXP_LIMIT {
        return Err(WaveError::Overflow {
            z,
            exponent: ln_mag,
        });
    }
    let amp = state.norm_const * hn;
    if exponent.abs() < EXP_LIMIT {
        Ok(amp * amp * exponent.exp())
    } else {
        Ok(ln_mag.exp())
    }
}

/// Born density `[C_n H_n(x)]^2 e^{-x^2}` on the real axis.
pub fn born_density(state: &QuantumState, x: f64) -> f64 {
    magnitude_squared_complex(state, Complex64::new(x, 0.0)).unwrap_or(0.0)
}

/// Classical oscillator density at energy `n + 1/2`: the arcsine law
/// `1 / (pi sqrt(A^2 - x^2))` on `|x| < A = sqrt(2n + 1)`, zero elsewhere.
pub fn classical_density(state: &QuantumState, x: f64) -> f64 {
    let a = state.classical_amplitude();
    if x.abs() >= a {
        0.0
    } else {
        1.0 / (PI * (a * a - x * x).sqrt())
    }
}

/// Complex action `S = -i ln Psi_n(t, z)` on the principal branch, so that
/// `Im S = -ln |Psi|` and `Re S = arg Psi`.
pub fn complex_action(
    state: &QuantumState,
    t: f64,
    z: ComplexValue,
) -> Result<ComplexValue, WaveError> {
    let psi = eigenstate(state, t, z)?;
    if psi.norm() == 0.0 {
        return Err(WaveError::NodeProximity {
            n: state.n,
            z,
            magnitude: 0.0,
        });
    }
    Ok(Complex64::new(0.0, -1.0) * psi.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hermite_small_orders() {
        assert_eq!(hermite(0, c(3.7, -1.2)), c(1.0, 0.0));
        // H_3(x) = 8x^3 - 12x
        assert_relative_eq!(hermite(3, c(2.0, 0.0)).re, 40.0, epsilon = 1e-12);
        // H_2(z) = 4z^2 - 2 at z = i
        let h2 = hermite(2, c(0.0, 1.0));
        assert_relative_eq!(h2.re, -6.0, epsilon = 1e-12);
        assert_relative_eq!(h2.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn normalization_constant() {
        let s1 = QuantumState::new(1);
        assert_relative_eq!(
            s1.norm_const(),
            (1.0 / (2.0 * PI.sqrt())).sqrt(),
            epsilon = 1e-15
        );
        let s5 = QuantumState::new(5);
        let direct = 1.0 / (32.0 * 120.0 * PI.sqrt()).sqrt();
        assert_relative_eq!(s5.norm_const(), direct, max_relative = 1e-14);
    }

    #[test]
    fn eigenstate_values() {
        let s = QuantumState::new(1);
        assert_eq!(eigenstate(&s, 0.0, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        let v = eigenstate(&s, 0.0, c(1.0, 0.0)).unwrap();
        assert_relative_eq!(
            v.re,
            2.0 * s.norm_const() * (-0.5f64).exp(),
            epsilon = 1e-15
        );
        let z = c(0.4, -0.7);
        let m0 = eigenstate(&s, 0.0, z).unwrap().norm();
        for t in [0.3, 1.7, 12.0] {
            assert_relative_eq!(
                eigenstate(&s, t, z).unwrap().norm(),
                m0,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn eigenstate_overflow_is_flagged() {
        let s = QuantumState::new(1);
        let err = eigenstate(&s, 0.0, c(0.0, 40.0)).unwrap_err();
        assert!(matches!(err, WaveError::Overflow { .. }));
        assert!(magnitude_squared_complex(&s, c(0.0, 30.0)).is_err());
    }

    #[test]
    fn log_derivative_examples() {
        let s1 = QuantumState::new(1);
        assert_relative_eq!(
            log_derivative(&s1, c(1.0, 0.0)).unwrap().norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            log_derivative(&s1, c(2.0, 0.0)).unwrap().re,
            -1.5,
            epsilon = 1e-15
        );
        let s0 = QuantumState::new(0);
        let z = c(0.3, 2.1);
        assert_eq!(log_derivative(&s0, z).unwrap(), -z);
        let err = log_derivative(&s1, c(0.0, 0.0)).unwrap_err();
        assert!(matches!(err, WaveError::NodeProximity { .. }));
    }

    #[test]
    fn drift_examples() {
        let s1 = QuantumState::new(1);
        for x in [1.0, -1.0] {
            let d = complex_drift(&s1, c(x, 0.0)).unwrap();
            assert!(d.velocity.norm() < 1e-15);
        }
        let d = complex_drift(&s1, c(0.0, 1.0)).unwrap();
        assert_relative_eq!(d.velocity.re, -2.0, epsilon = 1e-14);
        assert_relative_eq!(d.velocity.im, 0.0, epsilon = 1e-14);
        // component form of the n = 1 drift
        for (x, y) in [(0.3, 0.8), (-1.4, 0.2), (2.0, -1.5)] {
            let d = complex_drift(&s1, c(x, y)).unwrap().velocity;
            let r2 = x * x + y * y;
            assert_relative_eq!(d.re, (-x * x * y - y * y * y - y) / r2, epsilon = 1e-13);
            assert_relative_eq!(d.im, (x * x * x + x * y * y - x) / r2, epsilon = 1e-13);
        }
    }

    #[test]
    fn drift_clamp_near_node() {
        let s1 = QuantumState::new(1);
        let d = complex_drift(&s1, c(1e-5, 1e-5)).unwrap();
        assert!(d.clamped);
        assert_relative_eq!(d.velocity.norm(), DRIFT_CLAMP, max_relative = 1e-12);
    }

    #[test]
    fn divergence_at_one_one() {
        // -4xy/(x^2+y^2)^2 at (1, 1) is the FP reaction coefficient -div
        let s1 = QuantumState::new(1);
        assert_relative_eq!(
            drift_divergence(&s1, c(1.0, 1.0)).unwrap(),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn born_density_values() {
        let s1 = QuantumState::new(1);
        assert_eq!(born_density(&s1, 0.0), 0.0);
        let expected = 2.0 * (-1.0f64).exp() / PI.sqrt();
        assert_relative_eq!(born_density(&s1, 1.0), expected, max_relative = 1e-14);
        assert_relative_eq!(born_density(&s1, -1.0), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 0.4151, epsilon = 1e-4);
    }

    #[test]
    fn magnitude_squared_grows_along_imaginary_axis() {
        let s1 = QuantumState::new(1);
        let mut last = 0.0;
        for k in 0..40 {
            let y = 2.0 + 0.25 * k as f64;
            let m = magnitude_squared_complex(&s1, c(0.0, y)).unwrap();
            assert!(m > last);
            last = m;
        }
        assert!(magnitude_squared_complex(&s1, c(12.0, 0.0)).unwrap() < 1e-60);
        for x in [-2.5, 0.3, 1.9] {
            assert_eq!(
                magnitude_squared_complex(&s1, c(x, 0.0)).unwrap(),
                born_density(&s1, x)
            );
        }
    }

    #[test]
    fn classical_density_values() {
        let s0 = QuantumState::new(0);
        assert_relative_eq!(classical_density(&s0, 0.0), 1.0 / PI, epsilon = 1e-15);
        for n in [0, 3, 20] {
            let s = QuantumState::new(n);
            let a = s.classical_amplitude();
            assert_eq!(classical_density(&s, a), 0.0);
            assert_eq!(classical_density(&s, -a - 1e-3), 0.0);
            assert_eq!(classical_density(&s, a + 0.5), 0.0);
        }
    }

    #[test]
    fn complex_action_examples() {
        let s1 = QuantumState::new(1);
        let psi = eigenstate(&s1, 0.0, c(2.0, 0.0)).unwrap();
        let action = complex_action(&s1, 0.0, c(2.0, 0.0)).unwrap();
        assert_relative_eq!(action.im, -psi.norm().ln(), epsilon = 1e-14);

        let s0 = QuantumState::new(0);
        for t in [0.0, 1.0, 3.0, 7.5] {
            let action = complex_action(&s0, t, c(0.8, 0.0)).unwrap();
            let expected = (-0.5 * t + PI).rem_euclid(2.0 * PI) - PI;
            assert_relative_eq!(action.re, expected, epsilon = 1e-13);
        }

        let z = c(0.6, 0.3);
        let psi = eigenstate(&s1, 0.4, z).unwrap();
        let back = (Complex64::new(0.0, 1.0) * complex_action(&s1, 0.4, z).unwrap()).exp();
        assert_relative_eq!((back - psi).norm(), 0.0, epsilon = 1e-15);
        assert!(complex_action(&s1, 0.0, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn real_nodes_of_low_states() {
        assert!(QuantumState::new(0).real_nodes().is_empty());
        assert_eq!(QuantumState::new(1).real_nodes(), vec![0.0]);
        let n3 = QuantumState::new(3).real_nodes();
        assert_eq!(n3.len(), 3);
        assert_relative_eq!(n3[2], 1.5f64.sqrt(), epsilon = 1e-12);
        assert_eq!(n3[1], 0.0);
        assert_eq!(QuantumState::new(20).real_nodes().len(), 20);
    }
}
