//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotaprec::bfgs::{
    bfgs_update, golden_section_search, numeric_gradient, BracketMode, LineSearchConfig,
};
use rotaprec::harness::{run_table, ExperimentResult, ExperimentSpec, Method};
use rotaprec::matlin::{
    self, compose_rotation, extract_angles, max_abs_diff, GivensAngleSet, Matrix,
};
use rotaprec::rectifier::Objective;
use rotaprec::{
    draw_channel, grid_oracle, gsvd_decompose, rectify, solve, OracleConfig, SolveConfig,
};

const SEED: u64 = 2021;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn rate(r: &ExperimentResult, nt: usize, nr: usize, ne: usize, m: Method) -> f64 {
    r.cell(nt, nr, ne, 30.0, m).expect("cell present").mean_rate
}

fn spot_cells(
    r: &ExperimentResult,
    nt: usize,
    tol: f64,
    cells: &[((usize, usize), f64, f64)],
) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for &((nr, ne), bfgs_ref, gsvd_ref) in cells {
        let b = rate(r, nt, nr, ne, Method::RotationBfgs);
        let g = rate(r, nt, nr, ne, Method::Gsvd);
        ok &= (b - bfgs_ref).abs() <= tol && (g - gsvd_ref).abs() <= tol;
        parts.push(format!(
            "({nr},{ne}) bfgs {b:.2}/{bfgs_ref:.2} gsvd {g:.2}/{gsvd_ref:.2}"
        ));
    }
    (ok, parts.join("; "))
}

fn random_orthonormal(nt: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = Matrix::from_fn(nt, nt, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

fn main() -> ExitCode {
    let mut rep = Report { failed: 0 };
    let started = Instant::now();

    // The nt = 3 grid serves both the spot cells and the improvement pattern.
    let mut t1 = ExperimentSpec::new(
        3,
        (1..=6).collect(),
        (1..=6).collect(),
        vec![30.0],
        200,
        SEED,
    );
    t1.methods = vec![Method::RotationBfgs, Method::Gsvd];
    let t1 = run_table(&t1).expect("nt = 3 grid");
    let (ok, detail) = spot_cells(
        &t1,
        3,
        0.20,
        &[
            ((1, 1), 2.58, 2.56),
            ((2, 1), 3.91, 2.97),
            ((3, 1), 4.84, 4.41),
            ((3, 6), 0.70, 0.70),
        ],
    );
    rep.line("nt=3 Pt=30 mean rates (±0.20)", ok, detail);

    let t2 = ExperimentSpec::new(4, vec![2, 6], vec![1], vec![30.0], 200, SEED);
    let t2 = run_table(&t2).expect("nt = 4 cells");
    let (ok, detail) = spot_cells(&t2, 4, 0.30, &[((2, 1), 4.72, 4.27), ((6, 1), 8.24, 7.70)]);
    rep.line("nt=4 Pt=30 mean rates (±0.30)", ok, detail);

    {
        let eta = t1
            .improvement(3, 2, 1, 30.0)
            .and_then(|i| i.eta_g)
            .unwrap_or(f64::NAN);
        let mut worst: f64 = 0.0;
        for nr in 1..=6 {
            for ne in 3..=6 {
                let e = t1
                    .improvement(3, nr, ne, 30.0)
                    .and_then(|i| i.eta_g)
                    .unwrap_or(f64::NAN);
                worst = if e.abs() > worst || e.is_nan() {
                    e.abs()
                } else {
                    worst
                };
            }
        }
        rep.line(
            "gain over GSVD, nt=3",
            eta >= 20.0 && worst <= 5.0,
            format!("eta_g(3,2,1) = {eta:.2}% (≥ 20), max |eta_g| over ne ≥ 3 = {worst:.2}% (≤ 5)"),
        );
    }

    {
        let oracle = OracleConfig::default();
        let mut worst2 = f64::INFINITY;
        for i in 0..50u64 {
            let ch =
                draw_channel(2, 1 + (i % 3) as usize, 1 + (i / 3 % 3) as usize, SEED + i).unwrap();
            let (sol, _) = solve(&ch, &SolveConfig::new(10.0)).unwrap();
            let o = grid_oracle(&ch, 10.0, &oracle).unwrap();
            worst2 = worst2.min(sol.rate - o);
        }
        let mut worst3 = f64::INFINITY;
        for i in 0..20u64 {
            let ch = draw_channel(
                3,
                1 + (i % 3) as usize,
                1 + (i / 3 % 3) as usize,
                SEED + 100 + i,
            )
            .unwrap();
            let (sol, _) = solve(&ch, &SolveConfig::new(10.0)).unwrap();
            let o = grid_oracle(&ch, 10.0, &OracleConfig { seed: i, ..oracle }).unwrap();
            worst3 = worst3.min(sol.rate - o);
        }
        rep.line(
            "oracle near-optimality",
            worst2 >= -0.02 && worst3 >= -0.05,
            format!("min(solve − grid) nt=2: {worst2:+.4} (≥ −0.02); min(solve − random search) nt=3: {worst3:+.4} (≥ −0.05)"),
        );
    }

    {
        let a = rectify(&[-1.0, 4.0], 5.0);
        let b = rectify(&[-1.0, -1.0], 5.0);
        rep.line(
            "rectifier worked cases",
            a == vec![0.0, 4.0, 1.0] && b == vec![0.0, 0.0, 5.0],
            format!("[−1,4] → {a:?}, [−1,−1] → {b:?}"),
        );
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut round_trip: f64 = 0.0;
        for _ in 0..1000 {
            let nt = rng.random_range(1..=6);
            let v = random_orthonormal(nt, &mut rng);
            let (angles, swapped) = extract_angles(&v).unwrap();
            let mut target = v.clone();
            if swapped {
                if nt == 1 {
                    target[(0, 0)] = -target[(0, 0)];
                } else {
                    target.swap_columns(0, 1);
                }
            }
            round_trip = round_trip.max(max_abs_diff(&compose_rotation(&angles), &target));
        }

        let mut factor: f64 = 0.0;
        let mut unit: f64 = 0.0;
        for i in 0..1000u64 {
            let (nt, nr, ne) = (
                rng.random_range(1..=5),
                rng.random_range(1..=6),
                rng.random_range(1..=6),
            );
            let ch = draw_channel(nt, nr, ne, SEED + i).unwrap();
            let r = gsvd_decompose(&ch).unwrap().residuals(&ch);
            factor = factor.max(r.h).max(r.g);
            unit = unit.max(r.unit_sum);
        }

        let mut min_eig = f64::INFINITY;
        let mut trace_err: f64 = 0.0;
        let mut rise = f64::NEG_INFINITY;
        let mut zero_power = 0;
        for i in 0..1000u64 {
            let (nt, nr, ne) = (
                rng.random_range(1..=4),
                rng.random_range(1..=4),
                rng.random_range(1..=4),
            );
            let pt = rng.random_range(0.5..50.0);
            let ch = draw_channel(nt, nr, ne, SEED + 5000 + i).unwrap();
            let (sol, trace) = solve(&ch, &SolveConfig::new(pt)).unwrap();
            let (_, eig) = matlin::sym_eig(&sol.q).unwrap();
            min_eig = min_eig.min(eig.iter().copied().fold(f64::INFINITY, f64::min));
            if sol.q.iter().all(|&x| x == 0.0) {
                zero_power += 1;
            } else {
                trace_err = trace_err.max((sol.q.trace() - pt).abs());
            }
            for w in trace.records.windows(2) {
                rise = rise.max(w[1].f - w[0].f);
            }
        }

        let mut secant: f64 = 0.0;
        for _ in 0..1000 {
            let n = rng.random_range(1..=8);
            let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let m = &a * a.transpose() + Matrix::identity(n, n);
            let dx: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            // δg = B δx with B symmetric positive definite keeps the update well conditioned
            let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
            let b = &b * b.transpose() + Matrix::identity(n, n);
            let dg: Vec<f64> = (&b * nalgebra::DVector::from_column_slice(&dx))
                .iter()
                .copied()
                .collect();
            let (next, applied) = bfgs_update(&m, &dx, &dg);
            assert!(applied);
            let mg = &next * nalgebra::DVector::from_column_slice(&dg);
            for k in 0..n {
                secant = secant.max((mg[k] - dx[k]).abs());
            }
        }

        let ok = round_trip <= 1e-8
            && factor <= 1e-8
            && unit <= 1e-8
            && min_eig >= -1e-9
            && trace_err <= 1e-9
            && rise <= 1e-4
            && secant <= 1e-8;
        rep.line(
            "structural invariants (1000 instances each)",
            ok,
            format!(
                "rotation round-trip {round_trip:.1e}; GSVD residual {factor:.1e}, c+d−1 {unit:.1e}; \
                 min eig(Q) {min_eig:.1e}, |tr−Pt| {trace_err:.1e} ({zero_power} zero-power); \
                 max f rise {rise:.1e}; secant {secant:.1e}"
            ),
        );
    }

    {
        let descent = LineSearchConfig {
            bracket_mode: BracketMode::Descent,
            ..Default::default()
        };
        let out = golden_section_search(
            |y: &[f64]| (y[0] - 2.0).powi(2),
            &[0.0],
            &[-1.0],
            4.0,
            &descent,
        );
        let inner = golden_section_search(
            |y: &[f64]| (y[0] - 0.07).powi(2) * 1e6,
            &[0.0],
            &[-1.0],
            4900.0,
            &LineSearchConfig::default(),
        );
        let (e1, e2) = ((out.alpha - 2.0).abs(), (inner.alpha - 0.07).abs());
        rep.line(
            "line-search quadratic oracle (5e−4)",
            e1 <= 5e-4 && e2 <= 5e-4,
            format!(
                "(α−2)² descent bracket: α* = {:.5}; 1e6(α−0.07)² verbatim bracket: α* = {:.5}",
                out.alpha, inner.alpha
            ),
        );
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
        let mut worst: f64 = 0.0;
        for i in 0..100u64 {
            let nt = rng.random_range(2..=4);
            let ch = draw_channel(
                nt,
                rng.random_range(1..=4),
                rng.random_range(1..=4),
                SEED + 800 + i,
            )
            .unwrap();
            let pt = 10.0;
            let obj = Objective::new(&ch, pt);
            // λ̃ strictly inside the rectifier's linear region, angles anywhere
            let share = pt / nt as f64;
            let mut x: Vec<f64> = (0..nt - 1)
                .map(|_| rng.random_range(0.1 * share..0.9 * share))
                .collect();
            x.extend((0..GivensAngleSet::count(nt)).map(|_| rng.random_range(-3.0..3.0)));
            let f = |y: &[f64]| obj.value(y);
            let g = numeric_gradient(f, &x, obj.value(&x), 1e-4).unwrap();
            let h = 1e-6;
            for k in 0..x.len() {
                let (mut up, mut dn) = (x.clone(), x.clone());
                up[k] += h;
                dn[k] -= h;
                let central = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
                worst = worst.max((g[k] - central).abs());
            }
        }
        rep.line(
            "forward vs central gradient (5e−3)",
            worst <= 5e-3,
            format!("max entry difference over 100 points: {worst:.2e}"),
        );
    }

    {
        let exe = env!("CARGO_BIN_EXE_rotaprec");
        let run = |threads: &str, format: &str| {
            let out = Command::new(exe)
                .args([
                    "montecarlo",
                    "--nt",
                    "3",
                    "--nr",
                    "1..2",
                    "--ne",
                    "1..2",
                    "--pt",
                    "10,30",
                    "--trials",
                    "25",
                    "--seed",
                    "2021",
                    "--methods",
                    "rotation-bfgs,gsvd",
                    "--format",
                    format,
                ])
                .env("ROTAPREC_THREADS", threads)
                .output()
                .expect("run rotaprec");
            assert!(
                out.status.success(),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
            out.stdout
        };
        let mut ok = true;
        for format in ["csv", "json"] {
            let base = run("1", format);
            ok &= !base.is_empty() && base == run("1", format) && base == run("4", format);
        }
        rep.line(
            "CLI determinism",
            ok,
            "csv and json bitwise identical across repeats and ROTAPREC_THREADS = 1, 4".to_string(),
        );
    }

    {
        let median_ms = |nt: usize| {
            let mut times: Vec<f64> = (0..15u64)
                .map(|i| {
                    let ch = draw_channel(nt, 2, 1, SEED + 900 + i).unwrap();
                    let t = Instant::now();
                    solve(&ch, &SolveConfig::new(30.0)).unwrap();
                    t.elapsed().as_secs_f64() * 1e3
                })
                .collect();
            times.sort_by(f64::total_cmp);
            times[times.len() / 2]
        };
        let (t3, t6) = (median_ms(3), median_ms(6));
        rep.line(
            "solve time nt 3 → 6 (≤ 50×)",
            t6 <= 50.0 * t3,
            format!("median solve {t3:.2} ms → {t6:.2} ms, ratio {:.1}", t6 / t3),
        );
    }

    println!(
        "{} failed, {:.1} s",
        rep.failed,
        started.elapsed().as_secs_f64()
    );
    if rep.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
