use fosep_core::contour::{estimate_ce, exact_ce, tangent_angles};
use fosep_core::dynamics::{polynomial_from_roots, printer};
use fosep_core::splines::{basis_matrix, derivative_basis_matrix, sample_grid};
use fosep_core::{
    Compensator, ConstraintFamily, DiscreteTransferFunction, KnotVector, LpProblem, LpStatus, Toolpath,
};
use nalgebra::{DMatrix, DVector};
use nalgebra::Complex;
use proptest::prelude::*;

fn knot_vector() -> impl Strategy<Value = KnotVector> {
    (1usize..=5, 0usize..25, any::<bool>(), proptest::collection::vec(0.05f64..1.0, 25)).prop_map(
        |(p, extra, clamped, gaps)| {
            let n = p + 1 + extra;
            if !clamped {
                return KnotVector::uniform(n, p).unwrap();
            }
            // clamped with irregular interior spacing
            let spans = n - p;
            let mut cum = vec![0.0];
            for g in &gaps[..spans] {
                cum.push(cum.last().unwrap() + g);
            }
            let total = *cum.last().unwrap();
            let mut knots = vec![0.0; p];
            knots.extend(cum.iter().map(|c| c / total));
            knots.extend(std::iter::repeat(1.0).take(p));
            KnotVector::new(p, knots).unwrap()
        },
    )
}

fn stable_model() -> impl Strategy<Value = DiscreteTransferFunction> {
    (
        proptest::collection::vec((0.05f64..0.9, -3.0f64..3.0), 1..4),
        proptest::collection::vec(-1.0f64..1.0, 1..4),
        0usize..3,
    )
        .prop_map(|(poles, num, delay)| {
            let mut roots = Vec::new();
            for (r, a) in poles {
                let z = Complex::from_polar(r, a);
                roots.push(z);
                roots.push(z.conj());
            }
            let den = polynomial_from_roots(&roots);
            let mut num = num;
            num.truncate(den.len() - delay);
            if num.iter().all(|v| v.abs() < 1e-3) {
                num[0] = 1.0;
            }
            num.extend(std::iter::repeat(0.0).take(delay));
            DiscreteTransferFunction::new(num, den, 1e-3).unwrap()
        })
}

fn printer_models() -> [DiscreteTransferFunction; 2] {
    [(printer::X_NUM, printer::X_DEN), (printer::Y_NUM, printer::Y_DEN)].map(|(n, d)| {
        DiscreteTransferFunction::new(n.to_vec(), d.to_vec(), printer::SAMPLE_TIME)
            .unwrap()
            .stabilize()
            .normalize_dc()
            .unwrap()
    })
}

/// Second-order difference quotient on `[0, 1]`, one-sided at the ends.
fn diff(f: impl Fn(f64) -> f64, z: f64, h: f64) -> f64 {
    if z - h < 0.0 {
        (-3.0 * f(z) + 4.0 * f(z + h) - f(z + 2.0 * h)) / (2.0 * h)
    } else if z + h > 1.0 {
        (3.0 * f(z) - 4.0 * f(z - h) + f(z - 2.0 * h)) / (2.0 * h)
    } else {
        (f(z + h) - f(z - h)) / (2.0 * h)
    }
}

fn spline_value(kv: &KnotVector, c: &[f64], zeta: f64) -> f64 {
    let (span, n) = kv.nonzero_basis(zeta);
    let p = kv.degree();
    n.iter().enumerate().map(|(r, v)| v * c[span - p + r]).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn basis_partition_of_unity(kv in knot_vector(), t in 0.0f64..=1.0) {
        let (lo, hi) = kv.domain();
        let zeta = lo + t * (hi - lo);
        let (_, n) = kv.nonzero_basis(zeta);
        let sum: f64 = n.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {sum} at {zeta}");
        prop_assert!(n.iter().all(|v| *v >= -1e-15));
    }

    #[test]
    fn basis_matrix_rows_sum_to_one(kv in knot_vector(), extra in 0usize..40) {
        let b = basis_matrix(&kv, kv.n_basis() + extra).unwrap().into_matrix();
        for r in b.row_iter() {
            prop_assert!((r.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn derivative_matrix_matches_finite_differences(
        p in 2usize..=5,
        extra in 0usize..30,
        rows in 60usize..200,
        seed in proptest::collection::vec(-1.0f64..1.0, 40),
    ) {
        let n = p + 1 + extra;
        let kv = KnotVector::clamped_uniform(n, p).unwrap();
        let c = &seed[..n];
        let d1 = derivative_basis_matrix(&kv, 1, rows).unwrap().into_matrix() * DVector::from_column_slice(c);
        let d2 = derivative_basis_matrix(&kv, 2, rows).unwrap().into_matrix() * DVector::from_column_slice(c);
        let h = 1e-6;
        // the derivative of order p - 1 kinks at knots, where differences are O(h)
        let straddles = |a: f64, b: f64| kv.knots().iter().any(|u| *u > a && *u < b);
        for (k, z) in sample_grid(&kv, rows).into_iter().enumerate() {
            if p == 2 && straddles(z - 2.0 * h, z + 2.0 * h) {
                continue;
            }
            let fd = diff(|x| spline_value(&kv, c, x), z, h);
            let scale = 1.0 + d1[k].abs() + d2[k].abs() * h;
            prop_assert!((fd - d1[k]).abs() <= 1e-6 * scale, "first derivative at {z}: {fd} vs {}", d1[k]);
        }
        if p >= 3 {
            let d1_at = |z: f64| {
                let (span, ders) = kv.nonzero_derivs(z, 1);
                ders[1].iter().enumerate().map(|(r, v)| v * c[span - p + r]).sum::<f64>()
            };
            for (k, z) in sample_grid(&kv, rows).into_iter().enumerate() {
                if p == 3 && straddles(z - 2.0 * h, z + 2.0 * h) {
                    continue;
                }
                let fd = diff(d1_at, z, h);
                let scale = 1.0 + d2[k].abs();
                prop_assert!((fd - d2[k]).abs() <= 1e-6 * scale.max(1e3), "second derivative at {z}: {fd} vs {}", d2[k]);
            }
        }
    }

    #[test]
    fn lift_equals_simulate(g in stable_model(), u in proptest::collection::vec(-1.0f64..1.0, 1..120)) {
        let y = g.simulate(&u);
        let lifted = g.lift(u.len()).apply(&u);
        let dense = g.lift(u.len()).to_dense() * DVector::from_column_slice(&u);
        let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..u.len() {
            prop_assert!((y[k] - lifted[k]).abs() <= 1e-12 * scale * u.len() as f64);
            prop_assert!((y[k] - dense[k]).abs() <= 1e-12 * scale * u.len() as f64);
        }
    }

    #[test]
    fn simulation_is_linear_and_causal(
        g in stable_model(),
        u in proptest::collection::vec(-1.0f64..1.0, 60),
        v in proptest::collection::vec(-1.0f64..1.0, 60),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        cut in 0usize..60,
    ) {
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let ym = g.simulate(&mix);
        let (yu, yv) = (g.simulate(&u), g.simulate(&v));
        let scale = 1.0 + ym.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for k in 0..60 {
            prop_assert!((ym[k] - (a * yu[k] + b * yv[k])).abs() <= 1e-11 * scale);
        }
        let mut tail = u.clone();
        for x in &mut tail[cut..] {
            *x += 1.0;
        }
        let yt = g.simulate(&tail);
        prop_assert_eq!(&yt[..cut], &yu[..cut]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fbs_solves_the_normal_equations(
        rows in 120usize..400,
        n in 8usize..40,
        degree in 2usize..=5,
        axis in 0usize..2,
        coeffs in proptest::collection::vec(-3.0f64..3.0, 4),
    ) {
        prop_assume!(n > degree);
        let g = &printer_models()[axis];
        let c = Compensator::build(g, rows, n, degree).unwrap();
        let desired: Vec<f64> = (0..rows)
            .map(|k| {
                let t = k as f64 / rows as f64;
                coeffs[0] + coeffs[1] * t + coeffs[2] * (6.0 * t).sin() + coeffs[3] * t * t * t
            })
            .collect();
        let p = DVector::from_vec(c.control_points(&desired).unwrap());
        let nt: &DMatrix<f64> = c.filtered_basis();
        let d = DVector::from_column_slice(&desired);
        let residual = nt.tr_mul(&(nt * &p - &d));
        let scale = nt.norm() * d.norm();
        prop_assert!(residual.norm() <= 1e-9 * scale, "relative residual {}", residual.norm() / scale);
    }

    #[test]
    fn contour_estimate_tracks_the_exact_error(
        s in 0.02f64..0.98,
        normal in -0.01f64..0.01,
        tangential in -0.01f64..0.01,
        circle in any::<bool>(),
    ) {
        let path = if circle {
            Toolpath::full_circle([1.0, -2.0], 5.0).unwrap()
        } else {
            let kv = KnotVector::clamped_uniform(6, 3).unwrap();
            let ctrl = vec![[0.0, 0.0], [4.0, 3.0], [8.0, -1.0], [12.0, 4.0], [16.0, 2.0], [20.0, 6.0]];
            Toolpath::spline(kv, ctrl).unwrap()
        };
        // 1% of the circle radius, or of a comparable length on the spline
        let r = 5.0;
        let theta = path.tangent_angle(s).unwrap();
        let (t, nrm) = ([theta.cos(), theta.sin()], [-theta.sin(), theta.cos()]);
        let d = path.eval(s).unwrap();
        let e = [normal * r * nrm[0] + tangential * r * t[0], normal * r * nrm[1] + tangential * r * t[1]];
        let actual = [d[0] - e[0], d[1] - e[1]];
        let est = estimate_ce(&[e[0]], &[e[1]], &tangent_angles(&path, &[s]).unwrap()).unwrap()[0];
        let exact = exact_ce(&[actual], &path)[0];
        let mag = (e[0] * e[0] + e[1] * e[1]).sqrt();
        prop_assert!((est - exact).abs() <= 0.05 * mag, "est {est} exact {exact} |e| {mag}");
        if tangential == 0.0 || (tangential / normal).abs() < 1e-3 {
            prop_assert!((est - exact).abs() <= 0.05 * exact.abs());
        }
    }

    #[test]
    fn pure_normal_errors_match_within_five_percent(s in 0.0f64..1.0, normal in -0.01f64..0.01) {
        prop_assume!(normal.abs() > 1e-6);
        let path = Toolpath::full_circle([0.0, 0.0], 5.0).unwrap();
        let theta = path.tangent_angle(s).unwrap();
        let d = path.eval(s).unwrap();
        let e = [-theta.sin() * normal * 5.0, theta.cos() * normal * 5.0];
        let actual = [d[0] - e[0], d[1] - e[1]];
        let est = estimate_ce(&[e[0]], &[e[1]], &[theta]).unwrap()[0];
        let exact = exact_ce(&[actual], &path)[0];
        prop_assert!((est - exact).abs() <= 0.05 * exact.abs(), "{est} vs {exact}");
    }
}

/// Random bounded LP with a known strictly feasible point.
fn random_lp(n: usize, m: usize, vals: &[f64]) -> (LpProblem, Vec<f64>, Vec<(Vec<f64>, f64)>) {
    let mut it = vals.iter().copied().cycle();
    let x0: Vec<f64> = (0..n).map(|_| it.next().unwrap() * 0.5).collect();
    let mut lp = LpProblem::new(n);
    lp.set_cost((0..n).map(|_| it.next().unwrap()).collect()).unwrap();
    for j in 0..n {
        lp.set_bounds(j, -1.0, 1.0).unwrap();
    }
    let mut rows = Vec::new();
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| it.next().unwrap()).collect();
        let slack = 0.1 + it.next().unwrap().abs();
        let rhs = a.iter().zip(&x0).map(|(u, v)| u * v).sum::<f64>() + slack;
        lp.add_le_dense(&a, rhs, ConstraintFamily::Feedrate).unwrap();
        rows.push((a, rhs));
    }
    (lp, x0, rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_optimum_is_feasible_and_no_worse_than_a_known_point(
        n in 1usize..8,
        m in 0usize..15,
        vals in proptest::collection::vec(-1.0f64..1.0, 200),
    ) {
        let (lp, x0, _) = random_lp(n, m, &vals);
        let sol = lp.solve().unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!(lp.max_violation(&sol.x) <= 1e-6);
        prop_assert!(sol.objective <= lp.objective(&x0) + 1e-7);
    }

    #[test]
    fn lp_row_scaling_leaves_the_optimum_unchanged(
        n in 1usize..8,
        m in 1usize..15,
        vals in proptest::collection::vec(-1.0f64..1.0, 200),
        scales in proptest::collection::vec(-6.0f64..6.0, 15),
    ) {
        let (lp, _, rows) = random_lp(n, m, &vals);
        let mut scaled = LpProblem::new(n);
        scaled.set_cost(lp.cost().to_vec()).unwrap();
        for j in 0..n {
            scaled.set_bounds(j, -1.0, 1.0).unwrap();
        }
        for ((a, rhs), e) in rows.iter().zip(&scales) {
            let k = 10f64.powf(*e);
            let row: Vec<f64> = a.iter().map(|v| v * k).collect();
            scaled.add_le_dense(&row, rhs * k, ConstraintFamily::Feedrate).unwrap();
        }
        let (a, b) = (lp.solve().unwrap(), scaled.solve().unwrap());
        prop_assert_eq!(b.status, LpStatus::Optimal);
        prop_assert!((a.objective - b.objective).abs() <= 1e-6 * (1.0 + a.objective.abs()));
    }
}
