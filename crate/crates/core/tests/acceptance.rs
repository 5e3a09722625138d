//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed; exits non-zero if any criterion
//! fails.

use std::time::Instant;

use fosep_core::contour::{estimate_ce, exact_ce};
use fosep_core::experiment::TimeRun;
use fosep_core::opt_time::{relinearize, TimeLpOutcome};
use fosep_core::splines::{basis_matrix, derivative_basis_matrix, sample_grid};
use fosep_core::{
    solve_path_lp, AxisCompensation, Experiment, ExperimentConfig, KnotVector, PathLpSpec, Result, Toolpath,
};
use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, title: &str, pass: bool, details: &[String]) {
        if !pass {
            self.failed += 1;
        }
        println!("[{}] criterion {id}: {title}", if pass { "PASS" } else { "FAIL" });
        for d in details {
            println!("         {d}");
        }
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

fn check(ok: bool) -> &'static str {
    if ok { "ok" } else { "out of tolerance" }
}

/// A time-based run kept at the LP level so its rows can be re-evaluated.
struct TimeCell {
    out: TimeLpOutcome,
    comp: [AxisCompensation; 2],
}

fn time_cell(exp: &Experiment, limits: &str, opts: TimeRun) -> Result<TimeCell> {
    let lim = exp.config.limit_set(limits)?;
    let (spec, comp) = exp.time_spec(&lim, opts)?;
    let out = relinearize(&spec, exp.config.passes)?.best;
    Ok(TimeCell { out, comp })
}

fn path_spec(exp: &Experiment, limits: &str, jerk: bool) -> Result<PathLpSpec> {
    let cfg = &exp.config;
    let mut spec = PathLpSpec::new(exp.path.clone(), cfg.limit_set(limits)?, cfg.sample_time);
    spec.grid_points = cfg.path_lp.grid_points;
    spec.degree = cfg.path_lp.degree;
    spec.n_control = cfg.path_lp.n_control;
    spec.include_jerk = jerk;
    Ok(spec)
}

fn time_opts(jerk: bool, ce_mm: Option<f64>, sep: bool) -> TimeRun {
    TimeRun {
        include_jerk: jerk,
        ce_limit_mm: ce_mm,
        sep,
    }
}

struct Violations(Vec<(String, f64)>);

fn criterion_1(r: &mut Report, exp: &Experiment, v: &mut Violations) -> Result<(f64, f64)> {
    let started = Instant::now();
    let t_nj = time_cell(exp, "conservative", time_opts(false, None, false))?;
    let t_j = time_cell(exp, "conservative", time_opts(true, None, false))?;
    let p_nj = solve_path_lp(&path_spec(exp, "conservative", false)?)?;
    let p_j = solve_path_lp(&path_spec(exp, "conservative", true)?)?;
    let elapsed = started.elapsed().as_secs_f64();

    for (name, cell) in [("time-based, no jerk", &t_nj), ("time-based, jerk", &t_j)] {
        v.0.push((name.into(), cell.out.lp.problem.max_violation(&cell.out.solution.x)));
    }
    for (name, out) in [("path-based, no jerk", &p_nj), ("path-based, jerk", &p_j)] {
        v.0.push((name.into(), out.lp.problem.max_violation(&out.solution.x)));
    }
    let cells = [
        ("time-based, no jerk", t_nj.out.cycle_time(), 1.13, 0.05),
        ("path-based, no jerk", p_nj.cycle_time(), 1.14, 0.05),
        ("time-based, jerk", t_j.out.cycle_time(), 1.25, 0.07),
        ("path-based, jerk", p_j.cycle_time(), 1.42, 0.07),
    ];
    let mut pass = elapsed < 60.0;
    let mut details = Vec::new();
    for (name, t, target, tol) in cells {
        let ok = within(t, target, tol);
        pass &= ok;
        details.push(format!(
            "{name:<20} {t:.3} s, expected {target:.2} s ±{:.0}%: {}",
            tol * 100.0,
            check(ok)
        ));
    }
    details.push(format!("wall clock {elapsed:.1} s (limit 60 s)"));
    r.line("1", "cycle times of time- and path-based LPs, conservative limits", pass, &details);
    Ok((t_j.out.cycle_time(), p_j.cycle_time()))
}

/// Returns the contour-error limit and the linearized error of each run, mm.
fn criterion_2(r: &mut Report, exp: &Experiment, v: &mut Violations) -> Result<(f64, Vec<(String, f64)>)> {
    let started = Instant::now();
    let ce = exp.config.ce_limit_um * 1e-3;
    let fo = time_cell(exp, "aggressive", time_opts(true, Some(ce), false))?;
    let sep = time_cell(exp, "aggressive", time_opts(true, Some(ce), true))?;
    let elapsed = started.elapsed().as_secs_f64();
    let (t_fo, t_sep) = (fo.out.cycle_time(), sep.out.cycle_time());
    let ok_fo = within(t_fo, 1.13, 0.10);
    let ok_sep = within(t_sep, 0.64, 0.10);
    let ok_order = t_sep <= 0.75 * t_fo;
    let ok_time = elapsed < 300.0;
    r.line(
        "2",
        "FO and FO+SEP under a 14 µm contour-error limit, aggressive limits",
        ok_fo && ok_sep && ok_order && ok_time,
        &[
            format!("FO      {t_fo:.3} s, expected 1.13 s ±10%: {}", check(ok_fo)),
            format!("FO+SEP  {t_sep:.3} s, expected 0.64 s ±10%: {}", check(ok_sep)),
            format!(
                "FO+SEP / FO = {:.3}, required ≤ 0.75: {}",
                t_sep / t_fo,
                check(ok_order)
            ),
            format!("wall clock {elapsed:.1} s (limit 300 s)"),
        ],
    );

    // criterion 4 material: rows and the linearized contour error
    let mut lin = Vec::new();
    for (name, cell) in [("FO", &fo), ("FO+SEP", &sep)] {
        v.0.push((name.into(), cell.out.lp.problem.max_violation(&cell.out.solution.x)));
        let e = exp.linearized_ce(&cell.out, &cell.comp)?;
        lin.push((name.to_string(), e.iter().fold(0.0f64, |m, x| m.max(x.abs()))));
    }
    Ok((ce, lin))
}

fn criterion_3(r: &mut Report, exp: &Experiment) -> Result<()> {
    let mut pass = true;
    let mut details = Vec::new();
    for (set, target) in [("conservative", 14.0), ("aggressive", 30.0)] {
        let out = exp.run_tap(&exp.config.limit_set(set)?, set)?;
        let est = out.max_ce_estimated_um();
        let ok = within(est, target, 0.25);
        pass &= ok;
        details.push(format!(
            "TAP {set:<12} max|estimated CE| {est:.2} µm (exact {:.2} µm), expected {target:.0} µm ±25%: {}",
            out.max_ce_simulated_um(),
            check(ok)
        ));
    }
    r.line("3", "simulated contour error of the TAP benchmark", pass, &details);
    Ok(())
}

fn criterion_4(r: &mut Report, v: &Violations, ce: &(f64, Vec<(String, f64)>)) {
    let mut pass = true;
    let mut details = Vec::new();
    for (name, viol) in &v.0 {
        let ok = *viol <= 1e-6;
        pass &= ok;
        details.push(format!("{name:<20} max scaled row violation {viol:.2e} (≤ 1e-6): {}", check(ok)));
    }
    let (limit, rows) = ce;
    for (name, e) in rows {
        let ok = *e <= limit * 1.02;
        pass &= ok;
        details.push(format!(
            "{name:<20} linearized max|estimated CE| {:.4} µm (≤ {:.2} µm): {}",
            e * 1e3,
            limit * 1.02e3,
            check(ok)
        ));
    }
    r.line("4", "constraint satisfaction of every optimizer output", pass, &details);
}

fn random_knots(rng: &mut StdRng) -> KnotVector {
    let p = rng.gen_range(1..=5);
    let n = p + 1 + rng.gen_range(0..30);
    let spans = n - p;
    let mut cum = vec![0.0];
    for _ in 0..spans {
        cum.push(cum.last().unwrap() + rng.gen_range(0.05..1.0));
    }
    let total = *cum.last().unwrap();
    let mut knots = vec![0.0; p];
    knots.extend(cum.iter().map(|c| c / total));
    knots.extend(std::iter::repeat(1.0).take(p));
    KnotVector::new(p, knots).unwrap()
}

fn criterion_5(r: &mut Report, exp: &Experiment, jerk_cells: (f64, f64)) -> Result<()> {
    let mut rng = StdRng::seed_from_u64(7);
    let mut details = Vec::new();
    let mut pass = true;
    let mut item = |details: &mut Vec<String>, name: &str, ok: bool, what: String| {
        pass &= ok;
        details.push(format!("{name:<34} {what}: {}", check(ok)));
    };

    // partition of unity
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let kv = random_knots(&mut rng);
        let b = basis_matrix(&kv, kv.n_basis() + rng.gen_range(0..50))?.into_matrix();
        for row in b.row_iter() {
            worst = worst.max((row.sum() - 1.0).abs());
        }
    }
    item(&mut details, "B-spline partition of unity", worst <= 1e-12, format!("max |Σ N - 1| = {worst:.1e} (≤ 1e-12)"));

    // derivative matrix against central differences, away from kinks
    let mut worst = 0.0f64;
    for _ in 0..60 {
        let p = rng.gen_range(3..=5);
        let n = p + 1 + rng.gen_range(0..30);
        let kv = KnotVector::clamped_uniform(n, p)?;
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rows = rng.gen_range(n.max(60)..300);
        let d1 = derivative_basis_matrix(&kv, 1, rows)?.into_matrix() * DVector::from_column_slice(&c);
        let f = |z: f64| {
            let (span, nb) = kv.nonzero_basis(z);
            nb.iter().enumerate().map(|(k, v)| v * c[span - p + k]).sum::<f64>()
        };
        let h = 1e-6;
        for (k, z) in sample_grid(&kv, rows).into_iter().enumerate() {
            let fd = if z < h {
                (-3.0 * f(z) + 4.0 * f(z + h) - f(z + 2.0 * h)) / (2.0 * h)
            } else if z > 1.0 - h {
                (3.0 * f(z) - 4.0 * f(z - h) + f(z - 2.0 * h)) / (2.0 * h)
            } else {
                (f(z + h) - f(z - h)) / (2.0 * h)
            };
            worst = worst.max((fd - d1[k]).abs() / (1.0 + d1[k].abs()));
        }
    }
    item(&mut details, "derivative matrix vs differences", worst <= 1e-6, format!("max relative error {worst:.1e} (≤ 1e-6)"));

    // lifted operator against the difference equation on the printer models
    let mut worst = 0.0f64;
    for g in &exp.models {
        let u: Vec<f64> = (0..1500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = g.simulate(&u);
        let z = g.lift(u.len()).apply(&u);
        let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(y.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale);
    }
    item(&mut details, "lift ≡ simulate", worst <= 1e-12, format!("max relative difference {worst:.1e} (rounding only)"));

    // FBS normal equations on the full horizon
    let lim = exp.config.limit_set(&exp.config.limits)?;
    let rows = exp.time_spec(&lim, time_opts(true, None, false))?.0.horizon();
    let comps = exp.compensators(rows)?;
    let mut worst = 0.0f64;
    for c in &comps {
        let d: Vec<f64> = (0..rows).map(|k| (k as f64 * 0.01).sin() * 5.0 + 0.3 * rng.gen_range(-1.0..1.0)).collect();
        let p = DVector::from_vec(c.control_points(&d)?);
        let a = c.filtered_basis();
        let dv = DVector::from_column_slice(&d);
        let res = a.tr_mul(&(a * &p - &dv)).norm() / (a.norm() * dv.norm());
        worst = worst.max(res);
    }
    item(&mut details, "FBS normal-equation residual", worst <= 1e-9, format!("relative residual {worst:.1e} over {rows} samples (≤ 1e-9)"));

    // contour error estimate against the exact distance
    let path = Toolpath::full_circle([0.0, 0.0], 5.0)?;
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let s: f64 = rng.gen_range(0.0..1.0);
        let theta = path.tangent_angle(s)?;
        let d = path.eval(s)?;
        let normal: f64 = rng.gen_range(-0.05..0.05);
        if normal.abs() < 1e-4 {
            continue;
        }
        let tangential = rng.gen_range(-0.1..0.1) * normal;
        let e = [
            -theta.sin() * normal + theta.cos() * tangential,
            theta.cos() * normal + theta.sin() * tangential,
        ];
        let actual = [d[0] - e[0], d[1] - e[1]];
        let est = estimate_ce(&[e[0]], &[e[1]], &[theta])?[0];
        let exact = exact_ce(&[actual], &path)[0];
        worst = worst.max((est - exact).abs() / exact.abs());
    }
    item(&mut details, "CE estimate vs exact, |e| < 1% R", worst <= 0.05, format!("max relative deviation {:.2}% (≤ 5%)", worst * 100.0));

    // doubling the contour-error limit never slows the optimum
    let mut ok = true;
    let mut seen = Vec::new();
    for sep in [false, true] {
        let mut prev: Option<f64> = None;
        for ce_um in [7.0, 14.0, 28.0] {
            let t = time_cell(exp, "aggressive", time_opts(true, Some(ce_um * 1e-3), sep))?.out.cycle_time();
            if let Some(p) = prev {
                ok &= t <= p + 1e-9;
            }
            prev = Some(t);
            seen.push(format!("{}{ce_um:.0}µm={t:.3}", if sep { "SEP " } else { "FO " }));
        }
    }
    item(&mut details, "monotone feasible region", ok, seen.join(" "));

    let (time_j, path_j) = jerk_cells;
    item(
        &mut details,
        "path-based ≥ time-based, with jerk",
        path_j >= time_j,
        format!("path {path_j:.3} s, time {time_j:.3} s"),
    );

    r.line("5", "property suites", pass, &details);
    Ok(())
}

fn main() {
    let exp = Experiment::new(ExperimentConfig::default()).expect("default experiment");
    let mut report = Report { failed: 0 };
    let mut violations = Violations(Vec::new());
    let started = Instant::now();

    let jerk_cells = criterion_1(&mut report, &exp, &mut violations).expect("criterion 1 runs");
    let ce = criterion_2(&mut report, &exp, &mut violations).expect("criterion 2 runs");
    criterion_3(&mut report, &exp).expect("criterion 3 runs");
    criterion_4(&mut report, &violations, &ce);
    criterion_5(&mut report, &exp, jerk_cells).expect("criterion 5 runs");

    println!(
        "acceptance: {} of 5 criteria passed in {:.1} s",
        5 - report.failed,
        started.elapsed().as_secs_f64()
    );
    if report.failed > 0 {
        std::process::exit(1);
    }
}
