use cqrt_core::fokker_planck::{Field2D, GridAxis};
use cqrt_core::sde::{bohmian_drift, nelson_drift, step_bohmian, step_complex};
use cqrt_core::stats::{build_histogram, marginal_y, pearson_correlation, DensityHistogram};
use cqrt_core::wavefunction::{
    born_density, complex_drift, hermite, log_derivative, magnitude_squared_complex,
};
use cqrt_core::QuantumState;
use num_complex::Complex64;
use proptest::prelude::*;

/// `H_n(z) = n! sum_m (-1)^m (2z)^(n-2m) / (m! (n-2m)!)`.
fn hermite_series(n: u32, z: Complex64) -> Complex64 {
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    (0..=n / 2)
        .map(|m| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            (2.0 * z).powu(n - 2 * m) * (sign * fact(n) / (fact(m) * fact(n - 2 * m)))
        })
        .sum()
}

fn disk(radius: f64) -> impl Strategy<Value = Complex64> {
    (-radius..radius, -radius..radius)
        .prop_filter("inside disk", move |(x, y)| x * x + y * y <= radius * radius)
        .prop_map(|(x, y)| Complex64::new(x, y))
}

fn distance_to_nodes(state: &QuantumState, x: f64) -> f64 {
    state
        .real_nodes()
        .iter()
        .map(|r| (x - r).abs())
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hermite_recurrence_identity(n in 1u32..=60, z in disk(6.0)) {
        let (hp, h, hm) = (hermite(n + 1, z), hermite(n, z), hermite(n - 1, z));
        let residual = (hp - 2.0 * z * h + 2.0 * n as f64 * hm).norm();
        let scale = hp.norm().max((2.0 * z * h).norm()).max(2.0 * n as f64 * hm.norm());
        prop_assert!(residual <= 1e-12 * scale, "residual {residual:e} scale {scale:e}");
    }

    #[test]
    fn hermite_matches_explicit_series(n in 0u32..=15, z in disk(3.0)) {
        let a = hermite(n, z);
        let b = hermite_series(n, z);
        let scale = (0..=n).map(|k| (2.0 * z.norm()).powi(k as i32)).sum::<f64>()
            * (1..=n).map(f64::from).product::<f64>();
        prop_assert!((a - b).norm() <= 1e-12 * scale);
    }

    #[test]
    fn cauchy_riemann_for_log_derivative(n in 0u32..=5, z in disk(3.0)) {
        let s = QuantumState::new(n);
        let h = 1e-4;
        // near a node f ~ 1/(z - z0) and the central-difference residual is
        // h^2 |f'''| / 3 ~ 2 h^2 / d^4, below 1e-6 only for d > 0.38
        prop_assume!(hermite(n, z).norm() > 0.1);
        prop_assume!(s.real_nodes().iter().all(|r| (z - r).norm() >= 0.4));
        let f = |w: Complex64| log_derivative(&s, w).unwrap();
        let dx = (f(z + Complex64::new(h, 0.0)) - f(z - Complex64::new(h, 0.0))) / (2.0 * h);
        let dy = (f(z + Complex64::new(0.0, h)) - f(z - Complex64::new(0.0, h))) / (2.0 * h);
        prop_assert!((dx.re - dy.im).abs() <= 1e-6);
        prop_assert!((dy.re + dx.im).abs() <= 1e-6);
    }

    #[test]
    fn drift_identity(n in 0u32..=3, x in -4.5f64..4.5) {
        let s = QuantumState::new(n);
        prop_assume!(distance_to_nodes(&s, x) > 1e-3);
        let vb = bohmian_drift(&s, x).unwrap();
        let b_plus = nelson_drift(&s, x).unwrap();
        let u = complex_drift(&s, Complex64::new(x, 0.0)).unwrap().velocity;
        prop_assert!((vb - b_plus).abs() <= 1e-12, "{vb} vs {b_plus}");
        prop_assert!((vb - (u.re - u.im)).abs() <= 1e-12, "{vb} vs {}", u.re - u.im);
    }

    #[test]
    fn n1_drift_is_odd(z in disk(5.0)) {
        prop_assume!(z.norm() > 1e-3);
        let s = QuantumState::new(1);
        let a = complex_drift(&s, z).unwrap().velocity;
        let b = complex_drift(&s, -z).unwrap().velocity;
        prop_assert!((a + b).norm() <= 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn complex_noise_increments_are_opposite(
        n in 0u32..=4,
        z in disk(3.0),
        xi in -5.0f64..5.0,
        dt in 1e-5f64..1e-2,
    ) {
        let s = QuantumState::new(n);
        prop_assume!(hermite(n, z).norm() > 1e-3);
        let base = step_complex(&s, z, dt, 0.0).unwrap();
        let kicked = step_complex(&s, z, dt, xi).unwrap();
        let (dx, dy) = (kicked.re - base.re, kicked.im - base.im);
        let expected = xi * (dt / 2.0).sqrt();
        prop_assert!((dx + expected).abs() <= 1e-12 * (1.0 + z.norm()));
        prop_assert!((dy - expected).abs() <= 1e-12 * (1.0 + z.norm()));
    }

    #[test]
    fn born_density_is_magnitude_on_real_axis(n in 0u32..=30, x in -8.0f64..8.0) {
        let s = QuantumState::new(n);
        let a = born_density(&s, x);
        let b = magnitude_squared_complex(&s, Complex64::new(x, 0.0)).unwrap();
        prop_assert!((a - b).abs() <= 1e-14);
    }

    #[test]
    fn histogram_has_unit_integral(
        samples in prop::collection::vec(-10.0f64..10.0, 1..400),
        bins in 2usize..200,
        lo in -12.0f64..-1.0,
        width in 1.0f64..20.0,
    ) {
        let in_range = samples.iter().any(|x| *x >= lo && *x < lo + width);
        match build_histogram(&samples, bins, (lo, lo + width)) {
            Ok(h) => prop_assert!((h.integral() - 1.0).abs() <= 1e-10),
            Err(_) => prop_assert!(!in_range),
        }
    }

    #[test]
    fn pearson_invariant_under_positive_affine_maps(
        weights in prop::collection::vec(0.0f64..5.0, 5..60),
        a in 0.01f64..100.0,
        b in -50.0f64..50.0,
        c in 0.01f64..100.0,
        d in -50.0f64..50.0,
    ) {
        let n = weights.len();
        let edges: Vec<f64> = (0..=n).map(|k| k as f64 * 0.1).collect();
        prop_assume!(weights.iter().any(|w| *w > 0.0));
        let h = DensityHistogram::from_weights(edges.clone(), weights.clone(), 0).unwrap();
        let reference = |x: f64| (3.0 * x).sin() + 0.2 * x;
        let Ok(base) = pearson_correlation(&h, reference) else {
            return Ok(());
        };
        // affine map of the histogram: a * density + b, renormalization-free
        let mapped = DensityHistogram {
            densities: h.densities.iter().map(|v| a * v + b).collect(),
            ..h.clone()
        };
        let r1 = pearson_correlation(&mapped, reference).unwrap();
        let r2 = pearson_correlation(&h, |x| c * reference(x) + d).unwrap();
        prop_assert!((r1 - base).abs() <= 1e-9);
        prop_assert!((r2 - base).abs() <= 1e-9);
    }

    #[test]
    fn marginal_of_point_symmetric_field_is_even(
        seeds in prop::collection::vec(0.0f64..1.0, 13 * 17),
        half_x in 1.0f64..6.0,
        half_y in 1.0f64..6.0,
    ) {
        let x = GridAxis::new(-half_x, half_x, 26).unwrap();
        let y = GridAxis::new(-half_y, half_y, 17).unwrap();
        // fill half of the grid at random, mirror the rest through the origin
        let (nx, ny) = (26, 17);
        let mut values = vec![0.0; nx * ny];
        for i in 0..nx / 2 {
            for j in 0..ny {
                let v = seeds[i * ny + j];
                values[i * ny + j] = v;
                values[(nx - 1 - i) * ny + (ny - 1 - j)] = v;
            }
        }
        let mut field = Field2D { x, y, values };
        let mass = field.mass();
        prop_assume!(mass > 0.0);
        for v in field.values.iter_mut() {
            *v /= mass;
        }
        let m = marginal_y(&field).unwrap();
        let k = m.n_bins();
        for i in 0..k {
            prop_assert!((m.densities[i] - m.densities[k - 1 - i]).abs() <= 1e-10);
        }
        let centers = m.centers();
        for i in 0..k {
            prop_assert!((centers[i] + centers[k - 1 - i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_noise_bohmian_motion_settles_on_plus_minus_one(x0 in 0.3f64..3.0, sign in prop::bool::ANY) {
        let s = QuantumState::new(1);
        let target = if sign { 1.0 } else { -1.0 };
        let mut x = target * x0;
        let mut gap = (x - target).abs();
        for _ in 0..20 {
            for _ in 0..100 {
                x = step_bohmian(&s, x, 1e-3, 0.0).unwrap();
            }
            let next = (x - target).abs();
            prop_assert!(next <= gap + 1e-15);
            gap = next;
        }
        for _ in 0..20_000 {
            x = step_bohmian(&s, x, 1e-3, 0.0).unwrap();
        }
        prop_assert!((x - target).abs() < 1e-6);
    }

    #[test]
    fn zero_noise_complex_motion_circles_plus_minus_one(
        r in 0.01f64..0.1,
        phase in 0.0f64..std::f64::consts::TAU,
        sign in prop::bool::ANY,
    ) {
        // u* = i (z^2 - 1) / z vanishes at +-1 and linearizes to a rotation
        // there, so nearby orbits neither escape nor converge.
        let s = QuantumState::new(1);
        let target = Complex64::new(if sign { 1.0 } else { -1.0 }, 0.0);
        prop_assert!(complex_drift(&s, target).unwrap().velocity.norm() < 1e-15);
        let mut z = target + Complex64::from_polar(r, phase);
        let mut closest = f64::INFINITY;
        let mut farthest: f64 = 0.0;
        for _ in 0..5_000 {
            z = step_complex(&s, z, 1e-3, 0.0).unwrap();
            let d = (z - target).norm();
            closest = closest.min(d);
            farthest = farthest.max(d);
        }
        prop_assert!(farthest < 2.0 * r);
        prop_assert!(closest > 0.5 * r);
    }
}
