//! Acceptance run: one PASS/FAIL line per criterion. Failures are reported
//! without failing the test suite unless ACCEPTANCE_STRICT is set. A
//! positional argument restricts the run to criteria whose name contains it.

mod common;

use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uav_cloudlet::baselines::{run_scheme, Scheme};
use uav_cloudlet::energy::{mobile_execution_energy, uav_energy_total};
use uav_cloudlet::output::{read_csv, MeanRow, MEANS_FILE};
use uav_cloudlet::sca::{run, ScaConfig};
use uav_cloudlet::scenario::{Access, FlightModel, Scenario, TableTwo};
use uav_cloudlet::solver::{solve, IpmOptions};

type Check = fn() -> Result<String, String>;

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let checks: [(&str, Check); 8] = [
        ("mobile_closed_form", mobile_closed_form),
        ("surrogate_suite", surrogate_suite),
        ("fig3_iterate_feasibility_and_descent", fig3_iterates),
        ("grid_oracle", grid_oracle),
        ("fig3_qualitative", fig3_qualitative),
        ("fig5_means", fig5_means),
        ("baseline_ordering", baseline_ordering),
        ("inner_solver_qp", inner_solver_qp),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = check();
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mobile_closed_form() -> Result<String, String> {
    let s = TableTwo::fig5([[2.0, 3.0], [7.0, 1.0]], Access::Orthogonal);
    let e = mobile_execution_energy(&s.users, s.deadline()).total;
    let (gamma, c, i, t) = (1e-28_f64, 1550.7_f64, 8e6_f64, 2.7_f64);
    let hand = 2.0 * gamma * (c * i).powi(3) / (t * t);
    let rel = (e - hand).abs() / hand;
    ensure(rel <= 1e-6 && (hand - 52.38).abs() < 5e-3, format!("{e:.6} J vs hand {hand:.6} J, rel {rel:.1e}"))
}

fn surrogate_suite() -> Result<String, String> {
    let t0 = Instant::now();
    let mut worst_tight = 0.0f64;
    let mut worst_grad = 0.0f64;
    let mut dominance = 0;
    let mut convexity = 0;
    for (fi, f) in Family::ALL.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + fi as u64);
        for _ in 0..1000 {
            let r = check_case(f, &mut rng, 6);
            worst_tight = worst_tight.max(r.tightness);
            worst_grad = worst_grad.max(r.gradient);
            dominance += r.dominance_violations;
            convexity += r.convexity_violations;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(
        worst_tight <= 1e-10 && worst_grad <= 1e-5 && dominance == 0 && convexity == 0 && secs < 30.0,
        format!(
            "7x1000 cases, tightness {worst_tight:.1e}, gradient {worst_grad:.1e}, \
             {dominance} dominance and {convexity} convexity violations"
        ),
    )
}

fn fig3_variants() -> [(Access, FlightModel); 4] {
    [
        (Access::Orthogonal, FlightModel::Model1),
        (Access::NonOrthogonal, FlightModel::Model1),
        (Access::Orthogonal, FlightModel::Model2),
        (Access::NonOrthogonal, FlightModel::Model2),
    ]
}

fn fig3_iterates() -> Result<String, String> {
    let cfg = ScaConfig { keep_iterates: true, ..Default::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    for (access, model) in fig3_variants() {
        let s = TableTwo::fig3(access, model);
        let t0 = Instant::now();
        let r = run(&s, &cfg).map_err(|e| format!("{access:?} {model:?}: {e}"))?;
        let secs = t0.elapsed().as_secs_f64();
        let mut worst = 0.0f64;
        let mut rises = 0;
        let mut prev = f64::INFINITY;
        for z in &r.iterates {
            worst = worst.max(max_violation(&s, z));
            let obj = uav_energy_total(&s, &z.bits, &z.trajectory).map_err(|e| e.to_string())?.mobile_total;
            if obj > prev + 1e-9 * prev.abs() {
                rises += 1;
            }
            prev = obj;
        }
        ok &= worst <= 1e-6 && rises == 0 && secs < 60.0;
        parts.push(format!(
            "{access:?}/{model:?} {} iterates, violation {worst:.1e}, {rises} rises, {:.3} J, {secs:.1} s",
            r.iterates.len(),
            r.ledger.mobile_total
        ));
    }
    ensure(ok, parts.join("; "))
}

fn grid_oracle() -> Result<String, String> {
    let s = grid_scenario();
    let (grid, _) = grid_search(&s, 200);
    let r = run_scheme(&s, Scheme::BitOnly, &ScaConfig::default()).map_err(|e| e.to_string())?;
    let rel = (r.ledger.mobile_total - grid) / grid;
    ensure(rel.abs() <= 0.02, format!("SCA {:.6} J vs grid {grid:.6} J, rel {rel:.2e}", r.ledger.mobile_total))
}

fn fig3_qualitative() -> Result<String, String> {
    let cfg = ScaConfig::default();
    let s1 = TableTwo::fig3(Access::Orthogonal, FlightModel::Model1);
    let s2 = TableTwo::fig3(Access::Orthogonal, FlightModel::Model2);
    let r1 = run(&s1, &cfg).map_err(|e| e.to_string())?;
    let r2 = run(&s2, &cfg).map_err(|e| e.to_string())?;
    let d: Vec<f64> = (0..3).map(|k| closest_approach(&s1, &r1.plan, k)).collect();
    // Time spent within 1 m of each user, for the report only.
    let dwell: Vec<f64> = (0..3)
        .map(|k| {
            let m = s1.users[k].position;
            let near = r1.plan.trajectory.positions.iter().filter(|p| (p[0] - m[0]).hypot(p[1] - m[1]) <= 1.0).count();
            near as f64 * s1.frame_len()
        })
        .collect();
    let min_speed = 0.05 * s1.uav.v_max;
    let h1 = max_heading_change(&s1, &r1.plan, min_speed);
    let h2 = max_heading_change(&s2, &r2.plan, min_speed);
    // Distances under a millimetre are ties, not an ordering.
    let tie = 1e-3;
    ensure(
        d[1] + tie < d[0] && d[1] + tie < d[2] && h2 < h1,
        format!(
            "closest approach MU1 {:.1e} m, MU2 {:.1e} m, MU3 {:.1e} m (ties below {tie} m); \
             time within 1 m MU1 {:.2} s, MU2 {:.2} s, MU3 {:.2} s; \
             max heading change Model 1 {h1:.3} rad, Model 2 {h2:.3} rad",
            d[0], d[1], d[2], dwell[0], dwell[1], dwell[2]
        ),
    )
}

fn fig5_means() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().ok_or("non-UTF-8 temp path")?;
    let code = uav_cloudlet::cli::main_with_args([
        "uav-cloudlet",
        "sweep",
        "--t-list",
        "2.7",
        "--placements",
        "200",
        "--seed",
        "7",
        "--schemes",
        "joint,bit,traj,noopt",
        "--out",
        out,
    ]);
    if code != 0 {
        return Err(format!("sweep exited with {code}"));
    }
    let rows: Vec<MeanRow> = read_csv(&dir.path().join(MEANS_FILE)).map_err(|e| e.to_string())?;
    let mean = |scheme: &str, access: &str| {
        rows.iter()
            .find(|r| r.scheme == scheme && r.access == access)
            .map(|r| (r.mean_mobile_j.unwrap_or(f64::NAN), r.runs, r.failed))
            .ok_or_else(|| format!("no {scheme}/{access} row"))
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (scheme, access, target) in
        [("joint", "oma", 36.8), ("joint", "noma", 29.9), ("noopt", "oma", 43.1), ("noopt", "noma", 44.3)]
    {
        let (m, runs, failed) = mean(scheme, access)?;
        let rel = (m - target) / target;
        ok &= rel.abs() <= 0.2 && runs >= 200 && failed == 0;
        parts.push(format!("{scheme}/{access} {m:.2} J (target {target}, {:+.0}%, {runs} runs, {failed} failed)", 100.0 * rel));
    }
    for access in ["oma", "noma"] {
        let j = mean("joint", access)?.0;
        let b = mean("bit", access)?.0;
        let t = mean("traj", access)?.0;
        let n = mean("noopt", access)?.0;
        let ordered = j < b.min(t) && b.max(t) < n;
        ok &= ordered;
        parts.push(format!("{access} joint {j:.2} < bit {b:.2}, traj {t:.2} < noopt {n:.2}: {ordered}"));
    }
    let noma_wins = mean("joint", "noma")?.0 < mean("joint", "oma")?.0;
    ok &= noma_wins;
    parts.push(format!("NOMA joint below OMA joint: {noma_wins}"));
    ensure(ok, parts.join("; "))
}

fn random_baseline_scenario(rng: &mut impl Rng) -> Scenario {
    let k = rng.gen_range(2..=3);
    let pos: Vec<[f64; 2]> = (0..k).map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]).collect();
    let bits: Vec<f64> = (0..k).map(|_| rng.gen_range(2e6..8e6)).collect();
    let access = if rng.gen_bool(0.5) { Access::Orthogonal } else { Access::NonOrthogonal };
    let model = if rng.gen_bool(0.5) { FlightModel::Model1 } else { FlightModel::Model2 };
    TableTwo::scenario(
        &pos,
        &bits,
        rng.gen_range(2.0..3.0),
        20,
        rng.gen_range(-6.0..-2.0),
        [0.0, 0.0],
        [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)],
        2.22,
        access,
        model,
    )
    .expect("random scenario is valid")
}

fn baseline_ordering() -> Result<String, String> {
    let cfg = ScaConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut bad = Vec::new();
    for i in 0..20 {
        let s = random_baseline_scenario(&mut rng);
        let e = |scheme| {
            run_scheme(&s, scheme, &cfg).map(|r| r.ledger.mobile_total).map_err(|e| format!("scenario {i} {scheme}: {e}"))
        };
        let (j, b, t, n) = (e(Scheme::Joint)?, e(Scheme::BitOnly)?, e(Scheme::TrajectoryOnly)?, e(Scheme::NoOptimization)?);
        let partial = b.min(t);
        if j > partial * (1.0 + 1e-6) || partial > n * (1.0 + 1e-6) {
            bad.push(format!("scenario {i}: joint {j:.4}, bit {b:.4}, traj {t:.4}, noopt {n:.4}"));
        }
    }
    ensure(bad.is_empty(), if bad.is_empty() { "20 scenarios ordered".into() } else { bad.join("; ") })
}

fn inner_solver_qp() -> Result<String, String> {
    let opts = IpmOptions { tol: 1e-11, ..IpmOptions::default() };
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qp = planted_qp(&mut rng);
        let (x, lam) = kkt_oracle(&qp);
        let sol = solve(&qp.program, &opts).map_err(|e| format!("seed {seed}: {e}"))?;
        let active: Vec<f64> = qp.active.iter().map(|&i| sol.lambda[i]).collect();
        let inactive = (0..qp.ineq.len()).filter(|i| !qp.active.contains(i)).map(|i| sol.lambda[i]).fold(0.0, f64::max);
        worst = worst.max(rel_inf(&sol.x, &x)).max(rel_inf(&active, &lam)).max(inactive);
    }
    ensure(worst <= 1e-6, format!("100 QPs, worst relative error {worst:.1e}"))
}
