//! End-to-end acceptance run: one line per criterion, nonzero exit on any
//! failure.

use std::f64::consts::PI;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pksh::direct::{delta_sweep, SweepConfig};
use pksh::effective::{AveragedKinetics, EffectiveCoefficients};
use pksh::kinetics::{find_equilibrium, make_model, KineticsModel};
use pksh::pipeline::{run_selftest, RunOptions};
use pksh::selftest::{self, Check, Sizes};
use pksh::signal::{build_weight, SignalSpec};
use pksh::slow::{mode_growth_rate, run, SlowParams, SlowRun, SlowState, StepPolicy};
use pksh::stability::{growth_rate, hat_params, scan, ScanInputs};
use pksh::torus_field::{SpatialField, SpatialGrid, TorusGrid};

type Outcome = Result<(bool, String), String>;

fn rng(stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + stream)
}

fn describe(c: &Check) -> String {
    format!("{} worst {:.2e} (tol {:.0e}, {} cases)", c.name, c.worst, c.tolerance, c.cases)
}

fn from_check(c: pksh::Result<Check>) -> Outcome {
    let c = c.map_err(|e| e.to_string())?;
    Ok((c.pass, describe(&c)))
}

fn closed_form_diffusivity() -> Outcome {
    let t = Instant::now();
    let c = selftest::check_diffusivity_1d(&mut rng(1), 20).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    Ok((c.pass && secs < 2.0, format!("{}; {secs:.2} s", describe(&c))))
}

fn bessel() -> Outcome {
    from_check(selftest::check_bessel(&mut rng(2)))
}

fn operator_algebra() -> Outcome {
    let cs = selftest::check_operator_algebra(&mut rng(3), 100).map_err(|e| e.to_string())?;
    let pass = cs.iter().all(|c| c.pass);
    Ok((pass, cs.iter().map(describe).collect::<Vec<_>>().join("; ")))
}

fn traveling_wave() -> Outcome {
    from_check(selftest::check_traveling_wave(&mut rng(4), 12))
}

fn convexity() -> Outcome {
    from_check(selftest::check_convexity(&mut rng(5), 100))
}

fn triad_oracle() -> Outcome {
    let a = selftest::check_triad_oracle(&mut rng(6), 1000);
    let b = selftest::check_threshold_bisection(&mut rng(7), 200);
    Ok((a.pass && b.pass, format!("{}; {}", describe(&a), describe(&b))))
}

fn sign_restrictions() -> Outcome {
    from_check(selftest::check_sign_restrictions(&mut rng(8), 1000))
}

fn p_linear() -> Outcome {
    from_check(selftest::check_p_linear(&mut rng(9)))
}

fn ag_model() -> pksh::Result<KineticsModel> {
    let params = [("gamma", 2.0), ("beta", 1.0), ("r", 1.5)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    make_model("arditi-ginzburg", &params)
}

/// Homogenized 1-D data of `h = a cos(ξ − cτ)` with AG kinetics attached at
/// the averaged equilibrium.
fn ag_coefficients_1d(a: f64, speed: f64) -> pksh::Result<EffectiveCoefficients> {
    let tau_period = 2.0 * PI / speed.abs().max(1.0);
    let grid = TorusGrid::new(vec![2.0 * PI], vec![32], tau_period, 32)?;
    let w = build_weight(&SignalSpec::traveling_wave(a, vec![1.0], speed), 1.0, 1.0, &grid)?;
    let model = ag_model()?;
    let eq = find_equilibrium(&AveragedKinetics::new(&w, model.clone()), (0.3, 0.3))?;
    EffectiveCoefficients::compute(&w, 1.0)?.with_kinetics(&w, model, Some((eq.p_e, eq.s_e)))
}

fn slow_rate(coeffs: &EffectiveCoefficients, params: SlowParams) -> pksh::Result<f64> {
    let (pe, se) = coeffs.equilibrium.expect("attached");
    let grid = SpatialGrid::new(vec![2.0 * PI], vec![32])?;
    let eps = 1e-7;
    let p = SpatialField::from_fn(&grid, |x| pe + eps * x[0].cos());
    let s = SpatialField::from_fn(&grid, |x| se + eps * x[0].sin());
    let traj = run(&SlowRun {
        initial: SlowState::new(p, s)?,
        coeffs: coeffs.clone(),
        params,
        policy: StepPolicy { dt_max: 0.02, cfl: 0.5 },
        end_time: 40.0,
        snapshot_interval: 0.5,
    })?;
    mode_growth_rate(&traj, &[1], (pe, se), 20.0, 40.0)
}

fn imposed_instability() -> Outcome {
    let e = |e: pksh::Error| e.to_string();
    let a = 0.2;
    let (mu, chi) = (1.0, 2.0);
    // 2-D scan, signal traveling along ξ₁
    let grid = TorusGrid::new(vec![2.0 * PI, 2.0 * PI], vec![32, 32], 2.0 * PI, 32).map_err(e)?;
    let w = build_weight(&SignalSpec::traveling_wave(a, vec![1.0, 0.0], 1.0), 1.0, mu, &grid).map_err(e)?;
    let model = ag_model().map_err(e)?;
    let eq = find_equilibrium(&AveragedKinetics::new(&w, model.clone()), (0.3, 0.3)).map_err(e)?;
    let co = EffectiveCoefficients::compute(&w, mu)
        .and_then(|c| c.with_kinetics(&w, model, Some((eq.p_e, eq.s_e))))
        .map_err(e)?;
    let abar = co.abar.expect("attached");
    let inputs = ScanInputs {
        dbar: co.dbar.clone(),
        cbar1: co.cbar.clone(),
        mu,
        chi,
        prey_diffusivity: 0.0,
        p_e: eq.p_e,
        abar,
        directions: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]],
        alphas: vec![0.125, 0.25, 0.5, 1.0, 2.0],
        cs: vec![0.0, 1.0, 10.0, 50.0, 100.0, 500.0, 1000.0, 5000.0],
    };
    let r = scan(&inputs).map_err(e)?;
    let stable_at_rest = r.rows.iter().filter(|x| x.c == 0.0).all(|x| x.unstable_count == 0);
    let oblique_finite = r
        .thresholds
        .iter()
        .filter(|t| t.direction != 1)
        .all(|t| t.c_star.is_some_and(f64::is_finite));
    let orthogonal_stable = r.thresholds.iter().filter(|t| t.direction == 1).all(|t| t.c_star.is_none())
        && r.rows.iter().filter(|x| x.direction == 1).all(|x| x.unstable_count == 0);
    let crossing = r
        .rows
        .iter()
        .filter(|x| x.direction != 1 && !x.triad.neutral)
        .all(|x| (x.unstable_count > 0) == x.threshold.is_some_and(|c| x.c > c));
    let diverges = r.longwave.iter().filter(|l| l.direction != 1).all(|l| l.diverges);
    let small_alpha: Vec<f64> = r
        .thresholds
        .iter()
        .filter(|t| t.direction == 0)
        .filter_map(|t| t.c_star)
        .collect();
    // slow solver against the oracle, 1-D reduction along the signal
    let c_star = inputs.threshold(0, 1.0).map_err(e)?.c_star.expect("lemma holds");
    let params = SlowParams { mu, chi, prey_diffusivity: 0.0 };
    let mut worst: f64 = 0.0;
    let mut rates = Vec::new();
    for c in [0.5 * c_star, 2.0 * c_star] {
        let co1 = ag_coefficients_1d(a, c).map_err(e)?;
        let (pe, _) = co1.equilibrium.expect("attached");
        let m = hat_params(&[1.0], &co1.dbar, &co1.cbar, mu, chi, 0.0, pe).map_err(e)?;
        let oracle = growth_rate(&m, &co1.abar.expect("attached"));
        let measured = slow_rate(&co1, params).map_err(e)?;
        worst = worst.max((measured - oracle).abs() / oracle.abs());
        rates.push((c, oracle, measured));
    }
    let signs_ok = rates[0].1 < 0.0 && rates[1].1 > 0.0;
    let pass = stable_at_rest
        && oblique_finite
        && orthogonal_stable
        && crossing
        && diverges
        && signs_ok
        && worst < 0.05
        && r.oracle_agreement;
    let rate_text: Vec<String> = rates
        .iter()
        .map(|(c, o, m)| format!("c={c:.1}: Re λ {o:.5} vs slow {m:.5}"))
        .collect();
    Ok((
        pass,
        format!(
            "a={a}: stable at c=0 {stable_at_rest}; c*(α) along θ {:?}; orthogonal none {orthogonal_stable}; \
             c*→∞ as α→0 {diverges}; {}; worst rel {worst:.2e}",
            small_alpha.iter().map(|c| format!("{c:.1}")).collect::<Vec<_>>(),
            rate_text.join(", ")
        ),
    ))
}

fn asymptotic_validation() -> Outcome {
    let e = |e: pksh::Error| e.to_string();
    let t = Instant::now();
    let params = [("alpha", 0.5), ("gamma", 4.0), ("beta", 1.0)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    let model = make_model("holling-ii", &params).map_err(e)?;
    let eq = find_equilibrium(&model, (1.0, 0.7)).map_err(e)?;
    let g = SpatialGrid::new(vec![2.0 * PI], vec![32]).map_err(e)?;
    let p = SpatialField::from_fn(&g, |x| eq.p_e + 0.2 * x[0].cos());
    let s = SpatialField::from_fn(&g, |x| eq.s_e + 0.1 * x[0].sin());
    let report = delta_sweep(&SweepConfig {
        signal: SignalSpec::traveling_wave(0.5, vec![1.0], 1.0),
        torus: TorusGrid::new(vec![2.0 * PI], vec![32], 2.0 * PI, 32).map_err(e)?,
        model,
        chi: 0.5,
        kappa: 1.0,
        mu: 1.0,
        initial: SlowState::new(p, s).map_err(e)?,
        deltas: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0],
        end_time: 0.25,
        points_per_period: 16,
        slow_dt: 1e-3,
        cfl: 0.2,
        with_correction: true,
    })
    .map_err(e)?;
    let secs = t.elapsed().as_secs_f64();
    let errs: Vec<f64> = report.rows.iter().map(|r| r.comparison.leading.max_p).collect();
    let ratios: Vec<f64> = errs.windows(2).take(2).map(|w| w[0] / w[1]).collect();
    let leading_ok = ratios.iter().all(|r| (1.7..=2.3).contains(r));
    let corrected = report.corrected_orders();
    let corrected_ok = corrected.iter().all(|o| *o >= 1.7);
    let plain: Vec<f64> = pksh::direct::observed_orders(
        &report.rows.iter().map(|r| r.comparison.corrected.max_p).collect::<Vec<_>>(),
    );
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ");
    Ok((
        leading_ok && corrected_ok && secs < 600.0,
        format!(
            "leading ratios {} ; corrected fluctuation orders {} (plain corrected {}); {secs:.0} s",
            fmt(&ratios),
            fmt(&corrected),
            fmt(&plain)
        ),
    ))
}

fn determinism() -> Outcome {
    let e = |e: pksh::Error| e.to_string();
    let d1 = tempfile::tempdir().map_err(|x| x.to_string())?;
    let d2 = tempfile::tempdir().map_err(|x| x.to_string())?;
    let opts = |p: &std::path::Path| RunOptions { out: p.to_path_buf(), seed: Some(0), threads: 0 };
    let (m1, _) = run_selftest(&opts(d1.path()), Sizes::default()).map_err(e)?;
    let (m2, _) = run_selftest(&opts(d2.path()), Sizes::default()).map_err(e)?;
    let a = std::fs::read(d1.path().join("selftest.csv")).map_err(|x| x.to_string())?;
    let b = std::fs::read(d2.path().join("selftest.csv")).map_err(|x| x.to_string())?;
    let same = a == b && m1.stages[0].outputs == m2.stages[0].outputs;
    Ok((same && !m1.failed(), format!("selftest.csv identical {same}, {} bytes", a.len())))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("closed-form 1-D diffusivity", closed_form_diffusivity),
        ("Bessel identity", bessel),
        ("operator algebra", operator_algebra),
        ("traveling-wave reduction", traveling_wave),
        ("convexity bound", convexity),
        ("triad vs oracle and threshold", triad_oracle),
        ("stability inequalities", sign_restrictions),
        ("p-linear neutrality", p_linear),
        ("imposed instability", imposed_instability),
        ("asymptotic validation", asymptotic_validation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail) = match f() {
            Ok(x) => x,
            Err(msg) => (false, format!("error: {msg}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {:>2} {:<32} {}  {detail}", i + 1, name, if pass { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
