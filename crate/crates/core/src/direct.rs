//! Direct simulation of the fast-forced predator–prey system in 1-D:
//!
//! ```text
//! p_t + (p(χs + κh)_x − μp_x)_x = p f(p, s)
//! s_t = δ s_xx + s g(p, s)
//! ```
//!
//! with `h = h(x/δ, t/δ)`. The logarithmic flux term is written as linear
//! diffusion. Both diffusions sit in an exact integrating factor; taxis and
//! reaction are advanced with RK4.

use std::io::Write;

use num_complex::Complex64;

use crate::correction::{slow_jets, CorrectionContext};
use crate::effective::EffectiveCoefficients;
use crate::error::{Error, Result};
use crate::kinetics::{KineticsModel, Reaction};
use crate::signal::{SignalSpec, WeightField};
use crate::slow::{SlowParams, SlowState, POSITIVITY_FLOOR};
use crate::spectral::Spectral;
use crate::torus_field::{FastField, SpatialField, TorusGrid};

/// Minimum grid points per fast period.
pub const MIN_POINTS_PER_PERIOD: usize = 16;
/// Largest step as a fraction of the forcing period `ℓ₀δ`.
pub const FORCING_STEP_FRACTION: f64 = 1.0 / 32.0;

#[derive(Debug, Clone)]
pub struct DirectRun {
    /// Small parameter, also the prey diffusivity.
    pub delta: f64,
    pub signal: SignalSpec,
    /// Fast periods `ℓ₁`, `ℓ₀`; resolutions are used for tabulated signals.
    pub torus: TorusGrid,
    pub model: KineticsModel,
    pub chi: f64,
    pub kappa: f64,
    pub mu: f64,
    /// Slow domain length; must hold a whole number of fast periods.
    pub length: f64,
    pub points_per_period: usize,
    pub initial_p: Vec<f64>,
    pub initial_s: Vec<f64>,
    pub end_time: f64,
    /// Advective CFL number for the explicit part.
    pub cfl: f64,
}

impl DirectRun {
    /// Number of fast periods in the domain.
    pub fn periods(&self) -> Result<usize> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::param("delta", "must be positive"));
        }
        if self.torus.dim() != 1 {
            return Err(Error::param("torus", "direct simulation is one-dimensional"));
        }
        let cell = self.torus.spatial().periods()[0] * self.delta;
        let k = self.length / cell;
        let kr = k.round();
        if kr < 1.0 || (k - kr).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::param(
                "length",
                format!("must be a whole number of fast periods ℓ₁δ = {cell}"),
            ));
        }
        Ok(kr as usize)
    }

    pub fn points(&self) -> Result<usize> {
        if self.points_per_period < MIN_POINTS_PER_PERIOD {
            return Err(Error::param(
                "points_per_period",
                format!("at least {MIN_POINTS_PER_PERIOD} points per fast period are required"),
            ));
        }
        Ok(self.periods()? * self.points_per_period)
    }

    pub fn coords(&self) -> Result<Vec<f64>> {
        let n = self.points()?;
        Ok((0..n).map(|i| self.length * i as f64 / n as f64).collect())
    }

    /// Initial data `p = p̄₀𝔢_*(x/δ, 0)`, `s = s̄₀` from a slow state.
    pub fn leading_initial(&mut self, slow: &SlowState, w: &WeightField) -> Result<()> {
        let xs = self.coords()?;
        let e0 = w.estar.sample_tau(0.0);
        let l1 = self.torus.spatial().periods()[0];
        let fast = fast_sampler(&e0);
        let pspec = slow_sampler(&slow.pbar);
        let sspec = slow_sampler(&slow.sbar);
        self.initial_p = xs
            .iter()
            .map(|&x| pspec(x) * fast((x / self.delta).rem_euclid(l1)))
            .collect();
        self.initial_s = xs.iter().map(|&x| sspec(x)).collect();
        Ok(())
    }
}

/// Trigonometric interpolant of a 1-D periodic field.
fn slow_sampler(f: &SpatialField) -> impl Fn(f64) -> f64 + '_ {
    let sp = f.grid().spectral();
    let spec = sp.forward(f.values());
    let period = f.grid().periods()[0];
    move |x| sp.interpolate(&spec, &[period], &[x])
}

fn fast_sampler(f: &SpatialField) -> impl Fn(f64) -> f64 + '_ {
    slow_sampler(f)
}

/// Time snapshots of a direct run.
#[derive(Debug, Clone)]
pub struct DirectResult {
    pub delta: f64,
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub dt: f64,
    pub steps: usize,
    pub points_per_period: usize,
    pub fast_period: f64,
}

impl DirectResult {
    pub fn final_p(&self) -> &[f64] {
        self.p.last().expect("non-empty")
    }

    pub fn final_s(&self) -> &[f64] {
        self.s.last().expect("non-empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.p[k].iter().sum::<f64>() * (self.x.len() as f64).recip() * self.length()
    }

    fn length(&self) -> f64 {
        self.fast_period * self.delta * (self.x.len() / self.points_per_period) as f64
    }

    /// Rows `time,i,x,p,s`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "time,i,x,p,s")?;
        for (k, t) in self.times.iter().enumerate() {
            for (i, x) in self.x.iter().enumerate() {
                writeln!(out, "{t},{i},{x},{},{}", self.p[k][i], self.s[k][i])?;
            }
        }
        Ok(())
    }
}

/// Largest `|∂ξh|` over a fine sampling of the torus.
fn signal_slope_bound(h: &SignalSampler, torus: &TorusGrid) -> f64 {
    match h {
        SignalSampler::Analytic(..) => {
            let l1 = torus.spatial().periods()[0];
            let l0 = torus.tau_period();
            let xi: Vec<f64> = (0..64).map(|i| l1 * i as f64 / 64.0).collect();
            (0..32)
                .flat_map(|j| h.dxi(&xi, l0 * j as f64 / 32.0))
                .fold(0.0f64, |m, v| m.max(v.abs()))
        }
        SignalSampler::Table(f) => f.max_abs(),
    }
}

enum SignalSampler {
    Analytic(SignalSpec, TorusGrid),
    Table(FastField),
}

impl SignalSampler {
    fn new(h: &SignalSpec, grid: &TorusGrid) -> Result<Self> {
        h.check(grid)?;
        Ok(if h.eval_grad(grid, &[0.0], 0.0).is_some() {
            SignalSampler::Analytic(h.clone(), grid.clone())
        } else {
            let field = h.realize(grid)?;
            SignalSampler::Table(field.fast_gradient().remove(0))
        })
    }

    /// `∂ξh` at fast points `xi` and fast time `tau`.
    fn dxi(&self, xi: &[f64], tau: f64) -> Vec<f64> {
        match self {
            SignalSampler::Analytic(h, g) => xi
                .iter()
                .map(|&x| h.eval_grad(g, &[x], tau).expect("analytic").0[0])
                .collect(),
            SignalSampler::Table(f) => {
                let slice = f.sample_tau(tau.rem_euclid(f.grid().tau_period()));
                let l1 = f.grid().spatial().periods()[0];
                let sample = slow_sampler(&slice);
                xi.iter().map(|&x| sample(x.rem_euclid(l1))).collect()
            }
        }
    }
}

struct DirectStepper<'a> {
    run: &'a DirectRun,
    spec: Spectral,
    xi: Vec<f64>,
    h: SignalSampler,
    /// Bound on `|∂ξh|`.
    hmax: f64,
}

impl<'a> DirectStepper<'a> {
    fn rhs(&self, p: &[f64], s: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let r = self.run;
        let hxi = self.h.dxi(&self.xi, t / r.delta);
        let sx = self.spec.derivative(s, 0);
        let flux: Vec<f64> = (0..p.len())
            .map(|i| p[i] * (r.chi * sx[i] + r.kappa * hxi[i] / r.delta))
            .collect();
        let dflux = self.spec.derivative(&flux, 0);
        let mut np = vec![0.0; p.len()];
        let mut ns = vec![0.0; p.len()];
        for i in 0..p.len() {
            let (f, g) = r.model.fg(p[i].max(0.0), s[i].max(0.0))?;
            np[i] = -dflux[i] + p[i] * f;
            ns[i] = s[i] * g;
        }
        Ok((np, ns))
    }

    fn velocity_bound(&self, s: &[f64]) -> f64 {
        let r = self.run;
        let sx = self.spec.derivative(s, 0);
        let smax = sx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        r.chi * smax + r.kappa * self.hmax / r.delta
    }

    fn propagate(&self, v: &[f64], t: f64, diff: f64) -> Vec<f64> {
        self.spec.apply_symbol(v, |idx| {
            let k2 = self.spec.k_squared(idx);
            Complex64::new((-diff * k2 * t).exp(), 0.0)
        })
    }

    fn step(&self, p: &[f64], s: &[f64], t: f64, dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let r = self.run;
        let (mp, ms) = (r.mu, r.delta);
        let h = 0.5 * dt;
        let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(x, y)| x + a * y).collect() };
        let (ap, as_) = self.rhs(p, s, t)?;
        let p1 = self.propagate(&axpy(p, h, &ap), h, mp);
        let s1 = self.propagate(&axpy(s, h, &as_), h, ms);
        let (bp, bs) = self.rhs(&p1, &s1, t + h)?;
        let p2 = axpy(&self.propagate(p, h, mp), h, &bp);
        let s2 = axpy(&self.propagate(s, h, ms), h, &bs);
        let (cp, cs) = self.rhs(&p2, &s2, t + h)?;
        let p3 = axpy(&self.propagate(p, dt, mp), dt, &self.propagate(&cp, h, mp));
        let s3 = axpy(&self.propagate(s, dt, ms), dt, &self.propagate(&cs, h, ms));
        let (dp, ds) = self.rhs(&p3, &s3, t + dt)?;
        let combine = |u: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64], diff: f64| -> Vec<f64> {
            let full = self.propagate(&axpy(u, dt / 6.0, a), dt, diff);
            let bc: Vec<f64> = b.iter().zip(c).map(|(b, c)| 2.0 * (b + c)).collect();
            let half = self.propagate(&bc, h, diff);
            (0..u.len()).map(|i| full[i] + dt / 6.0 * (half[i] + d[i])).collect()
        };
        Ok((
            combine(p, &ap, &bp, &cp, &dp, mp),
            combine(s, &as_, &bs, &cs, &ds, ms),
        ))
    }
}

/// Integrate the direct system, recording `snapshots + 1` equally spaced states.
pub fn simulate(r: &DirectRun, snapshots: usize) -> Result<DirectResult> {
    let n = r.points()?;
    if r.initial_p.len() != n || r.initial_s.len() != n {
        return Err(Error::GridMismatch(format!(
            "initial data has {} / {} samples for {n} grid points",
            r.initial_p.len(),
            r.initial_s.len()
        )));
    }
    if r.initial_p.iter().chain(&r.initial_s).any(|&v| !(v > 0.0)) {
        return Err(Error::param("initial", "densities must be strictly positive"));
    }
    if !(r.mu > 0.0 && r.kappa >= 0.0 && r.chi >= 0.0 && r.end_time > 0.0 && r.cfl > 0.0 && r.cfl <= 1.0) {
        return Err(Error::param("run", "need mu > 0, kappa, chi >= 0, end_time > 0, 0 < cfl <= 1"));
    }
    let snapshots = snapshots.max(1);
    let l1 = r.torus.spatial().periods()[0];
    let x = r.coords()?;
    let h = SignalSampler::new(&r.signal, &r.torus)?;
    let stepper = DirectStepper {
        run: r,
        spec: Spectral::new(&[n], &[r.length]),
        xi: x.iter().map(|x| (x / r.delta).rem_euclid(l1)).collect(),
        hmax: signal_slope_bound(&h, &r.torus),
        h,
    };
    let dx = r.length / n as f64;
    let v = stepper.velocity_bound(&r.initial_s);
    let forcing = FORCING_STEP_FRACTION * r.torus.tau_period() * r.delta;
    let advective = if v > 0.0 { r.cfl * dx / v } else { f64::INFINITY };
    let interval = r.end_time / snapshots as f64;
    let per_snap = (interval / forcing.min(advective)).ceil().max(1.0) as usize;
    let dt = interval / per_snap as f64;

    let mut p = r.initial_p.clone();
    let mut s = r.initial_s.clone();
    let mut out = DirectResult {
        delta: r.delta,
        x,
        times: vec![0.0],
        p: vec![p.clone()],
        s: vec![s.clone()],
        dt,
        steps: 0,
        points_per_period: r.points_per_period,
        fast_period: l1,
    };
    for k in 0..snapshots {
        for j in 0..per_snap {
            let t = k as f64 * interval + j as f64 * dt;
            let limit = dx / stepper.velocity_bound(&s).max(1e-300);
            if dt > limit {
                return Err(Error::Cfl { dt, limit });
            }
            let (np, ns) = stepper.step(&p, &s, t, dt)?;
            p = np;
            s = ns;
            let min = p.iter().chain(&s).fold(f64::INFINITY, |m, &v| m.min(v));
            if !(min >= POSITIVITY_FLOOR) {
                return Err(Error::Positivity { time: t + dt, min });
            }
            out.steps += 1;
        }
        out.times.push((k + 1) as f64 * interval);
        out.p.push(p.clone());
        out.s.push(s.clone());
    }
    Ok(out)
}

/// Max and L₂ norms of the `p` and `s` discrepancies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub max_p: f64,
    pub l2_p: f64,
    pub max_s: f64,
    pub l2_s: f64,
}

impl ErrorNorms {
    fn from(ep: &[f64], es: &[f64], dx: f64) -> Self {
        let max = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let l2 = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() * dx).sqrt();
        ErrorNorms {
            max_p: max(ep),
            l2_p: l2(ep),
            max_s: max(es),
            l2_s: l2(es),
        }
    }
}

/// `p̄(x)𝔢_*(x/δ, t/δ)` and `s̄(x)` on the direct grid at time `t`.
fn leading_profile(direct: &DirectResult, slow: &SlowState, w: &WeightField, t: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if slow.grid().dim() != 1 || w.grid().dim() != 1 {
        return Err(Error::GridMismatch("comparison is one-dimensional".into()));
    }
    let l1 = w.grid().spatial().periods()[0];
    if (l1 - direct.fast_period).abs() > 1e-12 * l1 {
        return Err(Error::GridMismatch("weight and direct run use different fast periods".into()));
    }
    let slice = w.estar.sample_tau((t / direct.delta).rem_euclid(w.grid().tau_period()));
    let fast = fast_sampler(&slice);
    let ps = slow_sampler(&slow.pbar);
    let ss = slow_sampler(&slow.sbar);
    let estar: Vec<f64> = direct.x.iter().map(|&x| fast((x / direct.delta).rem_euclid(l1))).collect();
    let p = direct.x.iter().zip(&estar).map(|(&x, e)| ps(x) * e).collect();
    let s = direct.x.iter().map(|&x| ss(x)).collect();
    Ok((p, s, estar))
}

/// Distance between the final direct state and the leading approximation
/// built from the slow state at the same time.
pub fn compare_leading(direct: &DirectResult, slow: &SlowState, w: &WeightField) -> Result<ErrorNorms> {
    let (p0, s0, _) = leading_profile(direct, slow, w, direct.final_time())?;
    let ep: Vec<f64> = direct.final_p().iter().zip(&p0).map(|(a, b)| a - b).collect();
    let es: Vec<f64> = direct.final_s().iter().zip(&s0).map(|(a, b)| a - b).collect();
    Ok(ErrorNorms::from(&ep, &es, direct.length() / direct.x.len() as f64))
}

/// Errors with and without the first correction. The `fluctuation` norms
/// remove the local component `Ā(x)𝔢_*` (for `p`) and `Ā(x)` (for `s`),
/// with `Ā` the moving average over one fast period, which is where the
/// undetermined components `p̂•₁` and `s̄₁` live.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectedComparison {
    pub leading: ErrorNorms,
    pub corrected: ErrorNorms,
    pub leading_fluctuation: ErrorNorms,
    pub corrected_fluctuation: ErrorNorms,
}

/// Periodic moving average over `m` cells (trapezoidal end weights).
fn cell_average(v: &[f64], m: usize) -> Vec<f64> {
    let n = v.len();
    let half = m / 2;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for k in 0..=m {
                let w = if k == 0 || k == m { 0.5 } else { 1.0 };
                acc += w * v[(i + n + k - half) % n];
            }
            acc / m as f64
        })
        .collect()
}

pub fn compare_corrected(
    direct: &DirectResult,
    slow: &SlowState,
    coeffs: &EffectiveCoefficients,
    params: SlowParams,
    corr: &CorrectionContext,
) -> Result<CorrectedComparison> {
    let w = corr.weight();
    let t = direct.final_time();
    let (p0, s0, estar) = leading_profile(direct, slow, w, t)?;
    let l1 = direct.fast_period;
    let tau = (t / direct.delta).rem_euclid(w.grid().tau_period());
    let points: Vec<Vec<f64>> = direct.x.iter().map(|&x| vec![x]).collect();
    let jets = slow_jets(slow, coeffs, params, &points)?;
    // fields depend on x only through the jet, so reuse bundles per node
    let m = direct.points_per_period;
    let samples: Vec<(f64, f64)> = {
        use rayon::prelude::*;
        jets.par_iter()
            .zip(direct.x.par_iter())
            .map(|(j, &x)| {
                let b = corr.build(j)?;
                Ok(b.sample(w, &[(x / direct.delta).rem_euclid(l1)], tau))
            })
            .collect::<Result<Vec<_>>>()?
    };
    let d = direct.delta;
    let ep0: Vec<f64> = direct.final_p().iter().zip(&p0).map(|(a, b)| a - b).collect();
    let es0: Vec<f64> = direct.final_s().iter().zip(&s0).map(|(a, b)| a - b).collect();
    let ep1: Vec<f64> = ep0.iter().zip(&samples).map(|(e, s)| e - d * s.0).collect();
    let es1: Vec<f64> = es0.iter().zip(&samples).map(|(e, s)| e - d * s.1).collect();
    let strip_p = |e: &[f64]| -> Vec<f64> {
        let a = cell_average(e, m);
        let ea = cell_average(&estar, m);
        e.iter().zip(a.iter().zip(&ea)).zip(&estar).map(|((e, (a, ea)), es)| e - a / ea * es).collect()
    };
    let strip_s = |e: &[f64]| -> Vec<f64> {
        let a = cell_average(e, m);
        e.iter().zip(&a).map(|(e, a)| e - a).collect()
    };
    let dx = direct.length() / direct.x.len() as f64;
    Ok(CorrectedComparison {
        leading: ErrorNorms::from(&ep0, &es0, dx),
        corrected: ErrorNorms::from(&ep1, &es1, dx),
        leading_fluctuation: ErrorNorms::from(&strip_p(&ep0), &strip_s(&es0), dx),
        corrected_fluctuation: ErrorNorms::from(&strip_p(&ep1), &strip_s(&es1), dx),
    })
}

/// `log₂` of successive error ratios.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// δ-refinement study of the direct system against the leading
/// approximation and, optionally, the first correction.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub signal: SignalSpec,
    /// Cell-problem grid; its periods are the fast periods.
    pub torus: TorusGrid,
    pub model: KineticsModel,
    pub chi: f64,
    pub kappa: f64,
    pub mu: f64,
    /// Slow initial state; its grid fixes the domain length.
    pub initial: SlowState,
    pub deltas: Vec<f64>,
    pub end_time: f64,
    pub points_per_period: usize,
    pub slow_dt: f64,
    pub cfl: f64,
    pub with_correction: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub points: usize,
    pub steps: usize,
    pub comparison: CorrectedComparison,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub slow_final: SlowState,
    pub coefficients: EffectiveCoefficients,
}

impl SweepReport {
    /// Observed orders of the max-norm `p` error of the leading approximation.
    pub fn leading_orders(&self) -> Vec<f64> {
        observed_orders(&self.rows.iter().map(|r| r.comparison.leading.max_p).collect::<Vec<_>>())
    }

    /// Observed orders of the corrected fluctuation error.
    pub fn corrected_orders(&self) -> Vec<f64> {
        observed_orders(
            &self
                .rows
                .iter()
                .map(|r| r.comparison.corrected_fluctuation.max_p)
                .collect::<Vec<_>>(),
        )
    }

    /// Rows `delta,points,steps,metric,max_p,l2_p,max_s,l2_s`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "delta,points,steps,metric,max_p,l2_p,max_s,l2_s")?;
        for r in &self.rows {
            let c = &r.comparison;
            for (name, e) in [
                ("leading", c.leading),
                ("corrected", c.corrected),
                ("leading_fluctuation", c.leading_fluctuation),
                ("corrected_fluctuation", c.corrected_fluctuation),
            ] {
                writeln!(
                    out,
                    "{},{},{},{name},{},{},{},{}",
                    r.delta, r.points, r.steps, e.max_p, e.l2_p, e.max_s, e.l2_s
                )?;
            }
        }
        Ok(())
    }
}

pub fn delta_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    use crate::effective::EffectiveCoefficients;
    use crate::slow::{run, SlowRun, StepPolicy};
    if cfg.initial.grid().dim() != 1 {
        return Err(Error::param("initial", "the sweep is one-dimensional"));
    }
    let w = crate::signal::build_weight(&cfg.signal, cfg.kappa, cfg.mu, &cfg.torus)?;
    let coefficients = EffectiveCoefficients::compute(&w, cfg.mu)?.with_kinetics(&w, cfg.model.clone(), None)?;
    let params = SlowParams {
        mu: cfg.mu,
        chi: cfg.chi,
        prey_diffusivity: 0.0,
    };
    let traj = run(&SlowRun {
        initial: cfg.initial.clone(),
        coeffs: coefficients.clone(),
        params,
        policy: StepPolicy {
            dt_max: cfg.slow_dt,
            cfl: 0.5,
        },
        end_time: cfg.end_time,
        snapshot_interval: cfg.end_time,
    })?;
    let slow_final = traj.final_state().clone();
    let corr = if cfg.with_correction {
        Some(CorrectionContext::new(&w, cfg.model.clone(), cfg.mu, cfg.chi)?)
    } else {
        None
    };
    let length = cfg.initial.grid().periods()[0];
    let mut rows = Vec::new();
    for &delta in &cfg.deltas {
        let mut r = DirectRun {
            delta,
            signal: cfg.signal.clone(),
            torus: cfg.torus.clone(),
            model: cfg.model.clone(),
            chi: cfg.chi,
            kappa: cfg.kappa,
            mu: cfg.mu,
            length,
            points_per_period: cfg.points_per_period,
            initial_p: Vec::new(),
            initial_s: Vec::new(),
            end_time: cfg.end_time,
            cfl: cfg.cfl,
        };
        r.leading_initial(&cfg.initial, &w)?;
        let out = simulate(&r, 1)?;
        let comparison = match &corr {
            Some(c) => compare_corrected(&out, &slow_final, &coefficients, params, c)?,
            None => {
                let e = compare_leading(&out, &slow_final, &w)?;
                CorrectedComparison {
                    leading: e,
                    corrected: e,
                    leading_fluctuation: e,
                    corrected_fluctuation: e,
                }
            }
        };
        rows.push(SweepRow {
            delta,
            points: out.x.len(),
            steps: out.steps,
            comparison,
        });
    }
    Ok(SweepReport {
        rows,
        slow_final,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::find_equilibrium;
    use std::f64::consts::PI;

    fn holling() -> KineticsModel {
        KineticsModel::Holling {
            alpha: 0.5,
            exponent: 1.0,
            gamma: 4.0,
            beta: 1.0,
        }
    }

    fn base(delta: f64, h: SignalSpec, p: Vec<f64>, s: Vec<f64>) -> DirectRun {
        DirectRun {
            delta,
            signal: h,
            torus: TorusGrid::uniform(1, 16, 2.0 * PI, 16).unwrap(),
            model: holling(),
            chi: 0.5,
            kappa: 1.0,
            mu: 1.0,
            length: 2.0 * PI,
            points_per_period: 16,
            initial_p: p,
            initial_s: s,
            end_time: 0.05,
            cfl: 0.5,
        }
    }

    #[test]
    fn unforced_equilibrium_is_stationary() {
        let eq = find_equilibrium(&holling(), (0.8, 0.6)).unwrap();
        let n = 8 * 16;
        let r = base(1.0 / 8.0, SignalSpec::zero(), vec![eq.p_e; n], vec![eq.s_e; n]);
        let out = simulate(&r, 2).unwrap();
        for v in out.final_p() {
            assert!((v - eq.p_e).abs() < 1e-10);
        }
        for v in out.final_s() {
            assert!((v - eq.s_e).abs() < 1e-10);
        }
    }

    #[test]
    fn mass_conserved_without_reaction() {
        let n = 8 * 16;
        let xs: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        let p: Vec<f64> = xs.iter().map(|x| 1.0 + 0.3 * x.cos()).collect();
        let s: Vec<f64> = xs.iter().map(|x| 1.0 + 0.2 * (2.0 * x).sin()).collect();
        let mut r = base(1.0 / 8.0, SignalSpec::traveling_wave(0.5, vec![1.0], 1.0), p, s);
        r.model = KineticsModel::LotkaVolterra { gamma: 0.0, beta: 0.0 };
        r.end_time = 0.01;
        let out = simulate(&r, 4).unwrap();
        let m0 = out.mass(0);
        for k in 1..out.times.len() {
            assert!((out.mass(k) - m0).abs() < 1e-12 * m0 * out.steps as f64);
        }
    }

    #[test]
    fn prey_stays_in_invariant_region() {
        let n = 8 * 16;
        let xs: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        let p: Vec<f64> = xs.iter().map(|x| 0.8 + 0.3 * x.cos()).collect();
        let s: Vec<f64> = xs.iter().map(|x| 0.6 + 0.3 * x.sin()).collect();
        let r = base(1.0 / 8.0, SignalSpec::traveling_wave(0.5, vec![1.0], 1.0), p, s);
        let out = simulate(&r, 2).unwrap();
        assert!(out.s.iter().flatten().all(|&v| v <= 1.0 + 1e-12));
    }

    #[test]
    fn rejects_bad_runs() {
        let mut r = base(1.0 / 8.0, SignalSpec::zero(), vec![1.0; 128], vec![1.0; 128]);
        r.points_per_period = 8;
        assert!(simulate(&r, 1).is_err());
        let mut r = base(0.3, SignalSpec::zero(), vec![1.0; 128], vec![1.0; 128]);
        r.length = 2.0 * PI;
        assert!(r.periods().is_err());
        let mut r = base(1.0 / 8.0, SignalSpec::zero(), vec![1.0; 128], vec![1.0; 128]);
        r.initial_p[3] = 0.0;
        assert!(simulate(&r, 1).is_err());
    }

    #[test]
    fn moving_average_is_exact_on_fast_modes() {
        let m = 16;
        let n = 8 * m;
        let v: Vec<f64> = (0..n)
            .map(|i| 2.0 + (2.0 * PI * i as f64 / m as f64).cos() + 0.5 * (4.0 * PI * i as f64 / m as f64).sin())
            .collect();
        for a in cell_average(&v, m) {
            assert!((a - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn uniform_unforced_leading_error_is_tiny() {
        let eq = find_equilibrium(&holling(), (0.8, 0.6)).unwrap();
        let grid = TorusGrid::uniform(1, 16, 2.0 * PI, 16).unwrap();
        let w = crate::signal::build_weight(&SignalSpec::zero(), 1.0, 1.0, &grid).unwrap();
        let slow_grid = crate::torus_field::SpatialGrid::new(vec![2.0 * PI], vec![16]).unwrap();
        let slow = SlowState::uniform(&slow_grid, eq.p_e, eq.s_e);
        let mut r = base(1.0 / 8.0, SignalSpec::zero(), vec![], vec![]);
        r.leading_initial(&slow, &w).unwrap();
        let out = simulate(&r, 1).unwrap();
        let e = compare_leading(&out, &slow, &w).unwrap();
        assert!(e.max_p < 1e-8 && e.max_s < 1e-8);
    }
}
