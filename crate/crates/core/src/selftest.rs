//! Closed-form and oracle cross-checks with seeded random inputs.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cell::CellOperatorContext;
use crate::effective::{closed_form_diffusivity_1d, closed_form_traveling_wave, AveragedKinetics, EffectiveCoefficients};
use crate::kinetics::{find_equilibrium, make_model, KineticsModel, Reaction};
use crate::signal::{bessel_i0, build_weight, CosineFactor, Harmonic, SignalSpec, WeightField};
use crate::stability::{
    eigen_oracle, growth_rate, hat_params, lemma_preconditions, sign_restrictions_hold, threshold_chat2, triad,
    ModeParams,
};
use crate::torus_field::{FastField, SpatialField, TorusGrid};
use crate::Result;

/// Outcome of one cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub cases: usize,
    /// Largest residual, or the number of disagreements for counting checks.
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn residual(name: &'static str, cases: usize, worst: f64, tolerance: f64) -> Self {
        Check {
            name,
            cases,
            worst,
            tolerance,
            pass: worst.is_finite() && worst < tolerance,
        }
    }

    fn count(name: &'static str, cases: usize, failures: usize) -> Self {
        Check {
            name,
            cases,
            worst: failures as f64,
            tolerance: 0.0,
            pass: failures == 0,
        }
    }
}

/// Number of random cases per check.
#[derive(Debug, Clone, Copy)]
pub struct Sizes {
    pub diffusivity_1d: usize,
    pub algebra: usize,
    pub traveling: usize,
    pub convexity: usize,
    pub triad_draws: usize,
    pub bisections: usize,
    pub restriction_draws: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes {
            diffusivity_1d: 20,
            algebra: 100,
            traveling: 12,
            convexity: 60,
            triad_draws: 1000,
            bisections: 200,
            restriction_draws: 1000,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Random zero-mean 1-D signal: a traveling wave or a cosine product.
pub fn random_signal_1d(rng: &mut ChaCha8Rng) -> SignalSpec {
    let amplitude = rng.gen_range(0.1..2.0);
    if rng.gen_bool(0.5) {
        let harmonics = (1..=2)
            .map(|k| Harmonic {
                k,
                cos: rng.gen_range(-1.0..1.0) / k as f64,
                sin: rng.gen_range(-1.0..1.0) / k as f64,
            })
            .collect();
        SignalSpec::TravelingWave {
            amplitude,
            direction: vec![if rng.gen_bool(0.5) { 1.0 } else { -1.0 }],
            speed: rng.gen_range(-2..=2) as f64,
            phase: rng.gen_range(0.0..2.0 * PI),
            harmonics,
        }
    } else {
        let mut factors = vec![CosineFactor {
            axis: 1,
            mode: rng.gen_range(1..=3),
            phase: rng.gen_range(0.0..2.0 * PI),
        }];
        if rng.gen_bool(0.5) {
            factors.push(CosineFactor {
                axis: 0,
                mode: rng.gen_range(1..=2),
                phase: rng.gen_range(0.0..2.0 * PI),
            });
        }
        SignalSpec::CosineProduct { amplitude, factors }
    }
}

/// Random low-mode trigonometric field on a 2-D torus, sampled as a
/// tabulated signal with maximum `amplitude`.
pub fn random_signal_2d(rng: &mut ChaCha8Rng, grid: &TorusGrid, amplitude: f64) -> SignalSpec {
    let terms: Vec<(f64, i32, i32, i32, f64)> = (0..4)
        .map(|_| {
            let (m1, m2) = loop {
                let m = (rng.gen_range(-2..=2), rng.gen_range(-2..=2));
                if m != (0, 0) {
                    break m;
                }
            };
            (
                rng.gen_range(-1.0..1.0),
                m1,
                m2,
                rng.gen_range(0..=1),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let l = grid.spatial().periods().to_vec();
    let lt = grid.tau_period();
    let f = FastField::from_fn(grid, |x, t| {
        terms
            .iter()
            .map(|&(c, m1, m2, j, ph)| {
                let arg = 2.0 * PI * (m1 as f64 * x[0] / l[0] + m2 as f64 * x[1] / l[1] + j as f64 * t / lt);
                c * (arg + ph).cos()
            })
            .sum()
    });
    let scale = amplitude / f.max_abs();
    SignalSpec::Tabulated {
        values: f.scale(scale).into_values(),
    }
}

fn random_slice(rng: &mut ChaCha8Rng, grid: &TorusGrid) -> SpatialField {
    let c: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|i| {
            (
                rng.gen_range(-1.0..1.0),
                (i % 3) as f64 + 1.0,
                rng.gen_range(-2..=2) as f64,
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let l = grid.spatial().periods().to_vec();
    let off = rng.gen_range(-0.5..0.5);
    SpatialField::from_fn(grid.spatial(), |x| {
        off + c
            .iter()
            .map(|&(a, m1, m2, ph)| a * (2.0 * PI * (m1 * x[0] / l[0] + m2 * x[1] / l[1]) + ph).sin())
            .sum::<f64>()
    })
}

/// General 1-D pipeline against `D̄ = ⟨1/(⟨𝔢⟩^ξ⟨𝔢⁻¹⟩^ξ)⟩^τ` (relative error).
pub fn check_diffusivity_1d(rng: &mut ChaCha8Rng, count: usize) -> Result<Check> {
    let grid = TorusGrid::uniform(1, 64, 2.0 * PI, 16)?;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let h = random_signal_1d(rng);
        let w = build_weight(&h, 1.0, 1.0, &grid)?;
        let d = EffectiveCoefficients::compute(&w, 1.0)?.dbar[(0, 0)];
        let cf = closed_form_diffusivity_1d(&w);
        worst = worst.max((d - cf).abs() / cf);
    }
    Ok(Check::residual("closed_form_diffusivity_1d", count, worst, 1e-8))
}

/// `⟨𝔢⟩^ξ = ⟨𝔢⁻¹⟩^ξ = I₀(a)` for `h = a cos(ξ + ξ₀)`.
pub fn check_bessel(rng: &mut ChaCha8Rng) -> Result<Check> {
    let grid = TorusGrid::uniform(1, 64, 2.0 * PI, 8)?;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for a in [0.5, 1.0, 2.0] {
        for xi0 in [0.0, 0.7, 2.3, rng.gen_range(0.0..2.0 * PI)] {
            let w = build_weight(&SignalSpec::cosine(a, xi0), 1.0, 1.0, &grid)?;
            let i0 = bessel_i0(a);
            worst = worst
                .max((w.mean_e.values()[0] - i0).abs())
                .max((w.mean_inv_e.values()[0] - i0).abs());
            cases += 1;
        }
    }
    Ok(Check::residual("bessel_identity", cases, worst, 1e-10))
}

fn algebra_grid() -> Result<TorusGrid> {
    TorusGrid::new(vec![2.0 * PI, 2.0 * PI], vec![16, 16], 2.0 * PI, 8)
}

/// `ℒP = Pℒ` on random fields.
fn commutation_residual(rng: &mut ChaCha8Rng, ctx: &CellOperatorContext) -> f64 {
    let g = ctx.grid().clone();
    let slices = (0..g.tau_points()).map(|_| random_slice(rng, &g)).collect();
    let u = FastField::from_slices(&g, slices).expect("matching grid");
    let lp = ctx.apply_l_field(&ctx.project_p(&u));
    let pl = ctx.project_p(&ctx.apply_l_field(&u));
    lp.sub(&pl).max_abs()
}

/// Idempotence, kernel and range of `𝒫` on one τ slice.
fn projector_residual(rng: &mut ChaCha8Rng, ctx: &CellOperatorContext, j: usize) -> Result<f64> {
    let g = ctx.grid().clone();
    let diff = |a: &[SpatialField], b: &[SpatialField]| {
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (x, y)| m.max(max_diff(x.values(), y.values())))
    };
    let w = vec![random_slice(rng, &g), random_slice(rng, &g)];
    let pw = ctx.project_vector(&w, j)?;
    let ppw = ctx.project_vector(&pw, j)?;
    let mut r = diff(&pw, &ppw);
    // kernel: divergence-free fields
    let psi = random_slice(rng, &g).gradient();
    let v = vec![psi[1].clone(), psi[0].map(|x| -x)];
    let pv = ctx.project_vector(&v, j)?;
    r = r.max(pv.iter().fold(0.0, |m, c| m.max(c.max_abs())));
    // range: 𝔢-weighted gradients
    let phi = random_slice(rng, &g);
    let ge = ctx.weighted_gradient(&phi, j);
    r = r.max(diff(&ctx.project_vector(&ge, j)?, &ge));
    // complement is divergence free
    let rest: Vec<SpatialField> = w.iter().zip(&pw).map(|(a, b)| a.zip_map(b, |x, y| x - y)).collect();
    Ok(r.max(SpatialField::divergence(&rest).max_abs()))
}

/// Symmetry, positivity and the upper bound of `ℳ`; returns the worst
/// violation (negative when every bound holds).
fn matrix_m_residual(ctx: &CellOperatorContext) -> Result<f64> {
    let mut r: f64 = 0.0;
    for (j, m) in ctx.matrix_m_all()?.iter().enumerate() {
        let ev = m.eigenvalues();
        let bound = ctx.weight().mean_e.values()[j];
        r = r.max(m.asymmetry()).max(-ev[0]);
        if ev[ev.len() - 1] >= bound {
            r = f64::INFINITY;
        }
    }
    Ok(r)
}

/// Commutation of `ℒ` with `P`, the vector projector, and `ℳ` bounds on
/// random 2-D signals.
pub fn check_operator_algebra(rng: &mut ChaCha8Rng, count: usize) -> Result<[Check; 3]> {
    let grid = algebra_grid()?;
    let (mut c1, mut c2, mut c3) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..count {
        let amp = rng.gen_range(0.2..1.2);
        let h = random_signal_2d(rng, &grid, amp);
        let ctx = CellOperatorContext::new(build_weight(&h, 1.0, 1.0, &grid)?);
        c1 = c1.max(commutation_residual(rng, &ctx));
        let j = rng.gen_range(0..grid.tau_points());
        c2 = c2.max(projector_residual(rng, &ctx, j)?);
        c3 = c3.max(matrix_m_residual(&ctx)?);
    }
    Ok([
        Check::residual("l_commutes_with_p", count, c1, 1e-9),
        Check::residual("vector_projector", count, c2, 1e-9),
        Check::residual("matrix_m_bounds", count, c3, 1e-9),
    ])
}

/// Directions with rational slopes and torus periods that keep the
/// wave periodic.
const WAVE_DIRECTIONS: [([f64; 2], [f64; 2]); 4] = [
    ([1.0, 0.0], [2.0 * PI, 2.0 * PI]),
    ([0.0, 1.0], [2.0 * PI, 2.0 * PI]),
    ([0.6, 0.8], [10.0 * PI / 3.0, 2.5 * PI]),
    ([-0.8, 0.6], [2.5 * PI, 10.0 * PI / 3.0]),
];

/// 2-D pipeline against the traveling-wave reduction of `D̄` and `c̄`.
pub fn check_traveling_wave(rng: &mut ChaCha8Rng, count: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let (theta, periods) = WAVE_DIRECTIONS[i % WAVE_DIRECTIONS.len()];
        let speed = [0.0, 1.0, -1.0, 2.0][rng.gen_range(0..4)];
        let h = SignalSpec::TravelingWave {
            amplitude: rng.gen_range(0.2..1.5),
            direction: theta.to_vec(),
            speed,
            phase: rng.gen_range(0.0..2.0 * PI),
            harmonics: vec![
                Harmonic { k: 1, cos: 1.0, sin: 0.0 },
                Harmonic {
                    k: 2,
                    cos: rng.gen_range(-0.3..0.3),
                    sin: rng.gen_range(-0.3..0.3),
                },
            ],
        };
        let grid = TorusGrid::new(periods.to_vec(), vec![32, 32], 2.0 * PI, 64)?;
        let w = build_weight(&h, 1.0, 1.0, &grid)?;
        let c = EffectiveCoefficients::compute(&w, 1.0)?;
        let (d, cbar) = closed_form_traveling_wave(&w, &theta, speed);
        worst = worst.max((&c.dbar - d).amax()).max(max_diff(&c.cbar, &cbar));
    }
    Ok(Check::residual("traveling_wave_reduction", count, worst, 1e-8))
}

fn convexity_violation(w: &WeightField, log_e: &FastField) -> f64 {
    let prod = w.convexity_product();
    let mut worst: f64 = 0.0;
    for j in 0..prod.len() {
        let s = log_e.slice_values(j);
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let half_spread = 0.5 * (hi - lo);
        let margin = prod.values()[j] - 1.0;
        if half_spread >= 0.1 && margin < 1e-6 {
            worst = worst.max(1e-6 - margin);
        } else if half_spread > 1e-12 && margin <= 0.0 {
            worst = worst.max(-margin + f64::EPSILON);
        }
    }
    worst
}

/// `⟨𝔢⟩^ξ⟨𝔢⁻¹⟩^ξ > 1` on every non-constant slice, by at least `1e-6`
/// when the slice amplitude is at least `0.1`.
pub fn check_convexity(rng: &mut ChaCha8Rng, count: usize) -> Result<Check> {
    let g1 = TorusGrid::uniform(1, 64, 2.0 * PI, 16)?;
    let g2 = algebra_grid()?;
    let mut failures = 0;
    for i in 0..count {
        let (h, grid) = if i % 2 == 0 {
            (random_signal_1d(rng), &g1)
        } else {
            let a = rng.gen_range(0.1..2.0);
            (random_signal_2d(rng, &g2, a), &g2)
        };
        let w = build_weight(&h, 1.0, 1.0, grid)?;
        let log_e = w.e.map(f64::ln);
        if convexity_violation(&w, &log_e) > 0.0 {
            failures += 1;
        }
    }
    Ok(Check::count("convexity_bound", count, failures))
}

fn random_abar(rng: &mut ChaCha8Rng) -> [[f64; 2]; 2] {
    let mut a = [[0.0; 2]; 2];
    for row in &mut a {
        for v in row.iter_mut() {
            *v = rng.gen_range(-1.5..1.5);
        }
    }
    a
}

fn random_mode(rng: &mut ChaCha8Rng) -> ModeParams {
    ModeParams {
        k: vec![1.0],
        alpha: 1.0,
        kbar: vec![1.0],
        mu_hat: rng.gen_range(0.0..2.0),
        chi_hat: rng.gen_range(0.0..2.0),
        delta_hat: rng.gen_range(0.0..2.0),
        c_hat: rng.gen_range(-3.0..3.0),
    }
}

/// Draw until the lemma's preconditions hold.
pub fn lemma_draw(rng: &mut ChaCha8Rng) -> (ModeParams, [[f64; 2]; 2]) {
    loop {
        let a = random_abar(rng);
        let m = random_mode(rng);
        if lemma_preconditions(&m, &a).is_ok() {
            return (m, a);
        }
    }
}

/// Sign-change count of the triad against eigenvalue counts, inside the
/// lemma's precondition set with the neutral band excluded.
pub fn check_triad_oracle(rng: &mut ChaCha8Rng, draws: usize) -> Check {
    let mut failures = 0;
    let mut n = 0;
    while n < draws {
        let (m, a) = lemma_draw(rng);
        let t = triad(&m, &a);
        if t.neutral {
            continue;
        }
        n += 1;
        if t.sign_changes != eigen_oracle(&m, &a).unstable_count {
            failures += 1;
        }
    }
    Check::count("triad_matches_oracle", n, failures)
}

/// `ĉ*²` against bisection of the oracle growth rate (relative error).
pub fn check_threshold_bisection(rng: &mut ChaCha8Rng, draws: usize) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let (m, a) = lemma_draw(rng);
        let c2 = threshold_chat2(&m, &a).expect("preconditions hold");
        let unstable = |q: f64| growth_rate(&m.with_c_hat(q.sqrt()), &a) > 0.0;
        let (mut lo, mut hi) = (0.0, 4.0 * c2);
        if unstable(lo) || !unstable(hi) {
            worst = f64::INFINITY;
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if unstable(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        worst = worst.max((0.5 * (lo + hi) - c2).abs() / c2);
    }
    Check::residual("threshold_bisection", draws, worst, 1e-6)
}

fn random_restricted_abar(rng: &mut ChaCha8Rng) -> [[f64; 2]; 2] {
    loop {
        let mut v = [
            -rng.gen_range(0.0..1.5),
            rng.gen_range(0.0..1.5),
            -rng.gen_range(0.0..1.5),
            -rng.gen_range(0.0..1.5),
        ];
        // one entry may vanish
        if rng.gen_bool(0.3) {
            v[rng.gen_range(0..4)] = 0.0;
        }
        let a = [[v[0], v[1]], [v[2], v[3]]];
        if sign_restrictions_hold(&a) {
            return a;
        }
    }
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * 0.1
}

/// No unstable modes for any sampled wave vector when the stability
/// inequalities hold.
pub fn check_sign_restrictions(rng: &mut ChaCha8Rng, draws: usize) -> Result<Check> {
    let mut failures = 0;
    for _ in 0..draws {
        let a = random_restricted_abar(rng);
        let dbar = random_spd(rng, 2);
        let cbar = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let mu = rng.gen_range(0.1..2.0);
        let chi = rng.gen_range(0.0..3.0);
        let dhat = rng.gen_range(0.0..1.0);
        let pe = rng.gen_range(0.05..2.0);
        let unstable = (0..8).try_fold(false, |acc, _| {
            let k = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            let m = hat_params(&k, &dbar, &cbar, mu, chi, dhat, pe)?;
            Ok::<_, crate::Error>(acc || eigen_oracle(&m, &a).unstable_count > 0)
        })?;
        if unstable {
            failures += 1;
        }
    }
    Ok(Check::count("sign_restrictions_stable", draws, failures))
}

fn p_linear_models() -> Result<Vec<KineticsModel>> {
    let table = |kv: &[(&str, f64)]| kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    Ok(vec![
        make_model("lotka-volterra", &table(&[("gamma", 2.0), ("beta", 0.6)]))?,
        make_model("holling-ii", &table(&[("alpha", 0.5), ("gamma", 4.0), ("beta", 1.0)]))?,
        make_model("holling-iii", &table(&[("alpha", 2.0), ("gamma", 3.0), ("beta", 1.0)]))?,
    ])
}

/// Averaged p-linear kinetics coincide with the unforced kinetics, and so
/// do their equilibria.
pub fn check_p_linear(rng: &mut ChaCha8Rng) -> Result<Check> {
    let g1 = TorusGrid::uniform(1, 32, 2.0 * PI, 16)?;
    let g2 = algebra_grid()?;
    let mut weights = Vec::new();
    for _ in 0..3 {
        weights.push(build_weight(&random_signal_1d(rng), 1.0, 1.0, &g1)?);
    }
    let a = rng.gen_range(0.2..1.5);
    weights.push(build_weight(&random_signal_2d(rng, &g2, a), 1.0, 1.0, &g2)?);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for model in p_linear_models()? {
        let base = find_equilibrium(&model, (0.3, 0.5))?;
        for w in &weights {
            let avg = AveragedKinetics::new(w, model.clone());
            for _ in 0..8 {
                let (p, s) = (rng.gen_range(0.05..2.0), rng.gen_range(0.05..2.0));
                let (f, g) = model.fg(p, s)?;
                let (fa, ga) = avg.fg(p, s)?;
                worst = worst.max((f - fa).abs()).max((g - ga).abs());
            }
            let e = find_equilibrium(&avg, (0.3, 0.5))?;
            worst = worst.max((e.p_e - base.p_e).abs()).max((e.s_e - base.s_e).abs());
            cases += 1;
        }
    }
    Ok(Check::residual("p_linear_neutrality", cases, worst, 1e-12))
}

/// Run every check with the given sizes; each check draws from its own
/// stream of the seed.
pub fn run_checks(seed: u64, sizes: Sizes) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    out.push(check_diffusivity_1d(&mut rng_for(seed, 1), sizes.diffusivity_1d)?);
    out.push(check_bessel(&mut rng_for(seed, 2))?);
    out.extend(check_operator_algebra(&mut rng_for(seed, 3), sizes.algebra)?);
    out.push(check_traveling_wave(&mut rng_for(seed, 4), sizes.traveling)?);
    out.push(check_convexity(&mut rng_for(seed, 5), sizes.convexity)?);
    out.push(check_triad_oracle(&mut rng_for(seed, 6), sizes.triad_draws));
    out.push(check_threshold_bisection(&mut rng_for(seed, 7), sizes.bisections));
    out.push(check_sign_restrictions(&mut rng_for(seed, 8), sizes.restriction_draws)?);
    out.push(check_p_linear(&mut rng_for(seed, 9))?);
    Ok(out)
}

/// Rows `check,cases,worst,tolerance,pass`.
pub fn write_csv(checks: &[Check], mut out: impl Write) -> Result<()> {
    writeln!(out, "check,cases,worst,tolerance,pass")?;
    for c in checks {
        writeln!(out, "{},{},{:e},{:e},{}", c.name, c.cases, c.worst, c.tolerance, c.pass)?;
    }
    Ok(())
}
