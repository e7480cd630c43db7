//! Time integration of the leading slow system
//!
//! ```text
//! p̄_t + ∇·(p̄(c̄ + χD̄∇s̄) − μD̄∇p̄) = p̄f̄(p̄, s̄)
//! s̄_t = s̄ḡ(p̄, s̄) + δ̂Δs̄
//! ```
//!
//! on a periodic slow domain. Diffusion is absorbed exactly into an
//! integrating factor; advection, taxis and reaction are advanced with RK4.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::effective::EffectiveCoefficients;
use crate::error::{Error, Result};
use crate::kinetics::Reaction;
use crate::spectral::Spectral;
use crate::torus_field::{SpatialField, SpatialGrid};

/// Densities below this abort the run.
pub const POSITIVITY_FLOOR: f64 = 1e-14;

/// Mean predator and prey densities on the slow domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowState {
    pub pbar: SpatialField,
    pub sbar: SpatialField,
}

impl SlowState {
    pub fn new(pbar: SpatialField, sbar: SpatialField) -> Result<Self> {
        if pbar.grid() != sbar.grid() {
            return Err(Error::GridMismatch("pbar and sbar grids differ".into()));
        }
        Ok(SlowState { pbar, sbar })
    }

    pub fn uniform(grid: &SpatialGrid, p: f64, s: f64) -> Self {
        SlowState {
            pbar: SpatialField::constant(grid, p),
            sbar: SpatialField::constant(grid, s),
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.pbar.grid()
    }

    pub fn min(&self) -> f64 {
        self.pbar
            .values()
            .iter()
            .chain(self.sbar.values())
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// `∫p̄`
    pub fn mass(&self) -> f64 {
        self.pbar.values().iter().sum::<f64>() * self.grid().cell_volume()
    }
}

/// Physical constants of the slow system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowParams {
    pub mu: f64,
    pub chi: f64,
    /// Weak prey diffusivity `δ̂`; zero gives the pointwise prey ODE.
    pub prey_diffusivity: f64,
}

/// Step size policy: `dt = min(dt_max, cfl·h/v_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    pub dt_max: f64,
    pub cfl: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            dt_max: 0.05,
            cfl: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SlowGrid {
    pub grid: SpatialGrid,
    pub policy: StepPolicy,
}

impl SlowGrid {
    pub fn new(grid: SpatialGrid, policy: StepPolicy) -> Result<Self> {
        if !(policy.dt_max > 0.0 && policy.cfl > 0.0 && policy.cfl <= 1.0) {
            return Err(Error::param("policy", "need dt_max > 0 and 0 < cfl <= 1"));
        }
        Ok(SlowGrid { grid, policy })
    }
}

#[derive(Debug, Clone)]
pub struct SlowRun {
    pub initial: SlowState,
    pub coeffs: EffectiveCoefficients,
    pub params: SlowParams,
    pub policy: StepPolicy,
    pub end_time: f64,
    /// Time between snapshots; the final state is always recorded.
    pub snapshot_interval: f64,
}

#[derive(Debug, Clone)]
pub struct SlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SlowState>,
    pub steps: usize,
}

impl SlowTrajectory {
    pub fn final_state(&self) -> &SlowState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Rows `time,i1..in,x1..xn,pbar,sbar`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let grid = self.final_state().grid();
        let n = grid.dim();
        let idx: Vec<String> = (1..=n).map(|a| format!("i{a}")).collect();
        let xs: Vec<String> = (1..=n).map(|a| format!("x{a}")).collect();
        writeln!(out, "time,{},{},pbar,sbar", idx.join(","), xs.join(","))?;
        for (t, st) in self.times.iter().zip(&self.states) {
            for flat in 0..grid.len() {
                let mut rem = flat;
                let mut ii = vec![0usize; n];
                for a in (0..n).rev() {
                    ii[a] = rem % grid.points()[a];
                    rem /= grid.points()[a];
                }
                let ii: Vec<String> = ii.iter().map(|v| v.to_string()).collect();
                let x: Vec<String> = grid.coords(flat).iter().map(|v| v.to_string()).collect();
                writeln!(
                    out,
                    "{t},{},{},{},{}",
                    ii.join(","),
                    x.join(","),
                    st.pbar.values()[flat],
                    st.sbar.values()[flat]
                )?;
            }
        }
        Ok(())
    }
}

struct Stepper<'a> {
    spec: Spectral,
    coeffs: &'a EffectiveCoefficients,
    params: SlowParams,
}

impl<'a> Stepper<'a> {
    fn new(grid: &SpatialGrid, coeffs: &'a EffectiveCoefficients, params: SlowParams) -> Result<Self> {
        if coeffs.dim() != grid.dim() {
            return Err(Error::GridMismatch(format!(
                "coefficients are {}-dimensional, slow grid is {}-dimensional",
                coeffs.dim(),
                grid.dim()
            )));
        }
        if params.mu <= 0.0 || params.chi < 0.0 || params.prey_diffusivity < 0.0 {
            return Err(Error::param("mu/chi/prey_diffusivity", "need mu > 0, chi >= 0, delta >= 0"));
        }
        Ok(Stepper {
            spec: grid.spectral(),
            coeffs,
            params,
        })
    }

    /// Symbol of `μ∇·D̄∇`.
    fn p_symbol(&self, idx: &[usize]) -> f64 {
        let d: &DMatrix<f64> = &self.coeffs.dbar;
        let n = idx.len();
        let mut q = 0.0;
        for a in 0..n {
            for b in 0..n {
                let k2 = if a == b {
                    self.spec.k_even(a)[idx[a]].powi(2)
                } else {
                    self.spec.k_odd(a)[idx[a]] * self.spec.k_odd(b)[idx[b]]
                };
                q += d[(a, b)] * k2;
            }
        }
        -self.params.mu * q
    }

    fn s_symbol(&self, idx: &[usize]) -> f64 {
        -self.params.prey_diffusivity * self.spec.k_squared(idx)
    }

    fn propagate(&self, v: &[f64], t: f64, prey: bool) -> Vec<f64> {
        self.spec.apply_symbol(v, |idx| {
            let l = if prey { self.s_symbol(idx) } else { self.p_symbol(idx) };
            Complex64::new((l * t).exp(), 0.0)
        })
    }

    fn taxis_velocity(&self, s: &[f64]) -> Vec<Vec<f64>> {
        let n = self.coeffs.dim();
        let grads: Vec<Vec<f64>> = (0..n).map(|b| self.spec.derivative(s, b)).collect();
        (0..n)
            .map(|a| {
                (0..s.len())
                    .map(|i| {
                        let dgrad: f64 = (0..n).map(|b| self.coeffs.dbar[(a, b)] * grads[b][i]).sum();
                        self.coeffs.cbar[a] + self.params.chi * dgrad
                    })
                    .collect()
            })
            .collect()
    }

    /// Explicit part for both species.
    fn rhs(&self, p: &[f64], s: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.coeffs.dim();
        let vel = self.taxis_velocity(s);
        let mut np = vec![0.0; p.len()];
        for (a, va) in vel.iter().enumerate().take(n) {
            let flux: Vec<f64> = p.iter().zip(va).map(|(p, v)| p * v).collect();
            let d = self.spec.derivative(&flux, a);
            for (o, d) in np.iter_mut().zip(d) {
                *o -= d;
            }
        }
        let mut ns = vec![0.0; s.len()];
        if let Some(kin) = &self.coeffs.kinetics {
            let fg: Vec<(f64, f64)> = p
                .par_iter()
                .zip(s.par_iter())
                .map(|(&p, &s)| kin.fg(p.max(0.0), s.max(0.0)))
                .collect::<Result<_>>()?;
            for i in 0..p.len() {
                np[i] += p[i] * fg[i].0;
                ns[i] = s[i] * fg[i].1;
            }
        }
        Ok((np, ns))
    }

    fn cfl_limit(&self, s: &[f64]) -> f64 {
        let vel = self.taxis_velocity(s);
        let grid_h = (0..self.coeffs.dim())
            .map(|a| self.spec_spacing(a))
            .fold(f64::INFINITY, f64::min);
        let vmax = vel
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if vmax == 0.0 {
            f64::INFINITY
        } else {
            grid_h / vmax
        }
    }

    fn spec_spacing(&self, axis: usize) -> f64 {
        // largest odd wavenumber is π/h up to the Nyquist shift
        let kmax = self.spec.k_odd(axis).iter().fold(0.0f64, |m, k| m.max(k.abs()));
        if kmax == 0.0 {
            f64::INFINITY
        } else {
            std::f64::consts::PI / kmax
        }
    }

    fn step(&self, p: &[f64], s: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let limit = self.cfl_limit(s);
        if dt > limit {
            return Err(Error::Cfl { dt, limit });
        }
        let h = 0.5 * dt;
        let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(x, y)| x + a * y).collect() };
        let ep = |v: &[f64], t: f64| self.propagate(v, t, false);
        let es = |v: &[f64], t: f64| self.propagate(v, t, true);

        let (ap, as_) = self.rhs(p, s)?;
        let p1 = ep(&axpy(p, h, &ap), h);
        let s1 = es(&axpy(s, h, &as_), h);
        let (bp, bs) = self.rhs(&p1, &s1)?;
        let ep_h = ep(p, h);
        let es_h = es(s, h);
        let p2 = axpy(&ep_h, h, &bp);
        let s2 = axpy(&es_h, h, &bs);
        let (cp, cs) = self.rhs(&p2, &s2)?;
        let p3 = axpy(&ep(p, dt), dt, &ep(&cp, h));
        let s3 = axpy(&es(s, dt), dt, &es(&cs, h));
        let (dp, ds) = self.rhs(&p3, &s3)?;

        let combine = |u: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64], prey: bool| -> Vec<f64> {
            let e = |v: &[f64], t: f64| self.propagate(v, t, prey);
            let ua = axpy(u, dt / 6.0, a);
            let bc: Vec<f64> = b.iter().zip(c).map(|(b, c)| 2.0 * (b + c)).collect();
            let full = e(&ua, dt);
            let half = e(&bc, h);
            (0..u.len())
                .map(|i| full[i] + dt / 6.0 * (half[i] + d[i]))
                .collect()
        };
        Ok((
            combine(p, &ap, &bp, &cp, &dp, false),
            combine(s, &as_, &bs, &cs, &ds, true),
        ))
    }
}

/// Advance one step of size `dt`.
pub fn step(state: &SlowState, coeffs: &EffectiveCoefficients, params: SlowParams, dt: f64) -> Result<SlowState> {
    step_at(state, coeffs, params, dt, 0.0)
}

fn step_at(state: &SlowState, coeffs: &EffectiveCoefficients, params: SlowParams, dt: f64, time: f64) -> Result<SlowState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let st = Stepper::new(state.grid(), coeffs, params)?;
    let (p, s) = st.step(state.pbar.values(), state.sbar.values(), dt)?;
    let grid = state.grid().clone();
    let next = SlowState {
        pbar: SpatialField::from_raw(grid.clone(), p),
        sbar: SpatialField::from_raw(grid, s),
    };
    let min = next.min();
    if !(min >= POSITIVITY_FLOOR) {
        return Err(Error::Positivity { time: time + dt, min });
    }
    Ok(next)
}

/// Integrate to `end_time`, recording snapshots.
pub fn run(r: &SlowRun) -> Result<SlowTrajectory> {
    if r.initial.min() <= 0.0 {
        return Err(Error::param("initial", "densities must be positive"));
    }
    if !(r.end_time >= 0.0 && r.snapshot_interval > 0.0) {
        return Err(Error::param("end_time/snapshot_interval", "need end_time >= 0, interval > 0"));
    }
    let stepper = Stepper::new(r.initial.grid(), &r.coeffs, r.params)?;
    let mut t = 0.0;
    let mut state = r.initial.clone();
    let mut times = vec![0.0];
    let mut states = vec![state.clone()];
    let mut next_snap = r.snapshot_interval.min(r.end_time);
    let mut steps = 0usize;
    let eps = 1e-12 * r.end_time.max(1.0);
    while t < r.end_time - eps {
        let limit = stepper.cfl_limit(state.sbar.values());
        let mut dt = r.policy.dt_max.min(r.policy.cfl * limit);
        if t + dt > next_snap - eps {
            dt = next_snap - t;
        }
        state = step_at(&state, &r.coeffs, r.params, dt, t)?;
        t += dt;
        steps += 1;
        if (t - next_snap).abs() <= eps {
            t = next_snap;
            times.push(t);
            states.push(state.clone());
            next_snap = (next_snap + r.snapshot_interval).min(r.end_time);
        }
    }
    if times.last() != Some(&t) {
        times.push(t);
        states.push(state);
    }
    Ok(SlowTrajectory { times, states, steps })
}

/// Least-squares slope of `ln|mode|` over the trajectory snapshots with
/// `t ∈ [t0, t1]`, where `mode` is the Fourier coefficient at multi-index
/// `m` of the deviation from `(p_e, s_e)`.
pub fn mode_growth_rate(traj: &SlowTrajectory, m: &[usize], base: (f64, f64), t0: f64, t1: f64) -> Result<f64> {
    let grid = traj.final_state().grid();
    if m.len() != grid.dim() || m.iter().zip(grid.points()).any(|(a, b)| a >= b) {
        return Err(Error::param("mode", "index outside the grid"));
    }
    let spec = grid.spectral();
    let mut flat = 0usize;
    for (a, &j) in m.iter().enumerate() {
        flat = flat * grid.points()[a] + j;
    }
    let mut pts = Vec::new();
    for (t, st) in traj.times.iter().zip(&traj.states) {
        if *t < t0 || *t > t1 {
            continue;
        }
        let dp: Vec<f64> = st.pbar.values().iter().map(|v| v - base.0).collect();
        let ds: Vec<f64> = st.sbar.values().iter().map(|v| v - base.1).collect();
        let a = spec.forward(&dp)[flat].norm_sqr() + spec.forward(&ds)[flat].norm_sqr();
        pts.push((*t, 0.5 * a.ln()));
    }
    if pts.len() < 2 {
        return Err(Error::param("window", "fewer than two snapshots in the fit window"));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::AveragedKinetics;
    use crate::kinetics::{find_equilibrium, KineticsModel};
    use crate::stability::{growth_rate, hat_params};
    use std::f64::consts::PI;

    fn ag() -> KineticsModel {
        KineticsModel::ArditiGinzburg {
            gamma: 2.0,
            beta: 1.0,
            r: 1.5,
        }
    }

    fn coeffs_1d(d: f64, c: f64, kin: Option<KineticsModel>) -> EffectiveCoefficients {
        let mut co = EffectiveCoefficients::unforced(1);
        co.dbar[(0, 0)] = d;
        co.cbar[0] = c;
        co.kinetics = kin.map(AveragedKinetics::unforced);
        co
    }

    const PARAMS: SlowParams = SlowParams {
        mu: 1.0,
        chi: 2.0,
        prey_diffusivity: 0.0,
    };

    #[test]
    fn equilibrium_is_fixed_point() {
        let grid = SpatialGrid::new(vec![2.0 * PI], vec![16]).unwrap();
        let eq = find_equilibrium(&ag(), (0.3, 0.3)).unwrap();
        let co = coeffs_1d(0.7, 0.4, Some(ag()));
        let st = SlowState::uniform(&grid, eq.p_e, eq.s_e);
        let next = step(&st, &co, PARAMS, 0.05).unwrap();
        for (a, b) in next.pbar.values().iter().zip(st.pbar.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in next.sbar.values().iter().zip(st.sbar.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_is_conserved_without_reaction() {
        let grid = SpatialGrid::new(vec![2.0 * PI, 4.0], vec![16, 12]).unwrap();
        let mut co = EffectiveCoefficients::unforced(2);
        co.dbar = DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 0.6]);
        co.cbar = vec![0.3, -0.2];
        let p = SpatialField::from_fn(&grid, |x| 1.0 + 0.3 * x[0].sin() * (PI * x[1] / 2.0).cos());
        let s = SpatialField::from_fn(&grid, |x| 1.0 + 0.2 * x[0].cos());
        let st = SlowState::new(p, s).unwrap();
        let next = step(&st, &co, PARAMS, 0.01).unwrap();
        assert!((next.mass() - st.mass()).abs() < 1e-12 * st.mass());
    }

    #[test]
    fn pure_diffusion_matches_exact_factor() {
        let l = 3.0;
        let grid = SpatialGrid::new(vec![l, l], vec![16, 16]).unwrap();
        let mut co = EffectiveCoefficients::unforced(2);
        co.dbar = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 0.5]);
        let k = [2.0 * PI / l * 2.0, 2.0 * PI / l * 1.0];
        let p = SpatialField::from_fn(&grid, |x| 1.0 + 0.1 * (k[0] * x[0] + k[1] * x[1]).cos());
        let st = SlowState::new(p, SpatialField::constant(&grid, 1.0)).unwrap();
        let dt = 0.1;
        let next = step(&st, &co, PARAMS, dt).unwrap();
        let kdk = 0.8 * k[0] * k[0] + 0.4 * k[0] * k[1] + 0.5 * k[1] * k[1];
        let f = (-kdk * dt).exp();
        let expect = SpatialField::from_fn(&grid, |x| 1.0 + 0.1 * f * (k[0] * x[0] + k[1] * x[1]).cos());
        for (a, b) in next.pbar.values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn positivity_breach_aborts() {
        let grid = SpatialGrid::new(vec![2.0 * PI], vec![16]).unwrap();
        let co = coeffs_1d(1.0, 0.0, None);
        let p = SpatialField::from_fn(&grid, |x| 1.0 + 0.999_999_999 * x[0].cos() * 5.0);
        let st = SlowState {
            pbar: p,
            sbar: SpatialField::constant(&grid, 1.0),
        };
        assert!(matches!(step(&st, &co, PARAMS, 0.01), Err(Error::Positivity { .. })));
    }

    #[test]
    fn cfl_violation_is_reported() {
        let grid = SpatialGrid::new(vec![2.0 * PI], vec![32]).unwrap();
        let co = coeffs_1d(1.0, 50.0, None);
        let st = SlowState::uniform(&grid, 1.0, 1.0);
        assert!(matches!(step(&st, &co, PARAMS, 0.1), Err(Error::Cfl { .. })));
    }

    fn linear_rate(c: f64) -> (f64, f64) {
        let l = 8.0 * PI;
        let grid = SpatialGrid::new(vec![l], vec![32]).unwrap();
        let model = ag();
        let eq = find_equilibrium(&model, (0.3, 0.3)).unwrap();
        let co = coeffs_1d(0.9, c, Some(model.clone()));
        let k = 2.0 * PI / l;
        let eps = 1e-7;
        let p = SpatialField::from_fn(&grid, |x| eq.p_e + eps * (k * x[0]).cos());
        let s = SpatialField::from_fn(&grid, |x| eq.s_e + eps * (k * x[0]).sin());
        let run_spec = SlowRun {
            initial: SlowState::new(p, s).unwrap(),
            coeffs: co.clone(),
            params: PARAMS,
            policy: StepPolicy { dt_max: 0.02, cfl: 0.5 },
            end_time: 60.0,
            snapshot_interval: 0.5,
        };
        let traj = run(&run_spec).unwrap();
        let rate = mode_growth_rate(&traj, &[1], (eq.p_e, eq.s_e), 30.0, 60.0).unwrap();
        let abar = model.linearization(eq.p_e, eq.s_e).unwrap();
        let m = hat_params(&[k], &co.dbar, &co.cbar, PARAMS.mu, PARAMS.chi, 0.0, eq.p_e).unwrap();
        (rate, growth_rate(&m, &abar))
    }

    #[test]
    fn unstable_mode_grows_at_oracle_rate() {
        let (rate, oracle) = linear_rate(6.0);
        assert!(oracle > 0.0);
        assert!((rate - oracle).abs() < 0.05 * oracle.abs(), "{rate} vs {oracle}");
    }

    #[test]
    fn stable_mode_decays_at_oracle_rate() {
        let (rate, oracle) = linear_rate(0.5);
        assert!(oracle < 0.0);
        assert!((rate - oracle).abs() < 0.05 * oracle.abs(), "{rate} vs {oracle}");
    }
}
