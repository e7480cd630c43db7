//! First-order corrections of the two-scale expansion for unmodulated
//! signals.
//!
//! Given the leading slow fields at a point, with their derivatives, this
//! builds `s̃₁ = ℋ⁻¹(s̄g(p̄𝔢_*, s̄) − s̄_t)`, the flux `q₀`, the `range Q`
//! component `p̌₁` and the `range Q₁` component `p̂°₁`. The components
//! `p̂•₁` and `s̄₁` are not fixed at this order and are set to zero.

use std::io::Write;

use nalgebra::DMatrix;

use crate::cell::{invert_dtau, CellOperatorContext};
use crate::effective::{AveragedKinetics, EffectiveCoefficients};
use crate::error::{Error, Result};
use crate::kinetics::{KineticsModel, Reaction};
use crate::signal::WeightField;
use crate::slow::{SlowParams, SlowState};
use crate::torus_field::{FastField, SpatialField, TauProfile};

/// Relative tolerance of the first-order compatibility condition.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

/// Leading slow fields and their derivatives at one slow point.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowJet {
    pub p: f64,
    pub s: f64,
    pub grad_p: Vec<f64>,
    pub grad_s: Vec<f64>,
    pub hess_p: DMatrix<f64>,
    pub hess_s: DMatrix<f64>,
    pub p_t: f64,
    pub s_t: f64,
}

impl SlowJet {
    /// A spatially uniform state with time derivatives from the slow system.
    pub fn uniform(p: f64, s: f64, dim: usize, coeffs: &EffectiveCoefficients) -> Result<Self> {
        let params = SlowParams {
            mu: 1.0,
            chi: 0.0,
            prey_diffusivity: 0.0,
        };
        Self::with_slow_rhs(
            p,
            s,
            vec![0.0; dim],
            vec![0.0; dim],
            DMatrix::zeros(dim, dim),
            DMatrix::zeros(dim, dim),
            coeffs,
            params,
        )
    }

    /// Fill `p̄_t`, `s̄_t` from the leading slow system.
    #[allow(clippy::too_many_arguments)]
    pub fn with_slow_rhs(
        p: f64,
        s: f64,
        grad_p: Vec<f64>,
        grad_s: Vec<f64>,
        hess_p: DMatrix<f64>,
        hess_s: DMatrix<f64>,
        coeffs: &EffectiveCoefficients,
        params: SlowParams,
    ) -> Result<Self> {
        let n = coeffs.dim();
        if grad_p.len() != n || grad_s.len() != n || hess_p.nrows() != n || hess_s.nrows() != n {
            return Err(Error::GridMismatch("jet and coefficients differ in dimension".into()));
        }
        let d = &coeffs.dbar;
        let (fbar, gbar) = match &coeffs.kinetics {
            Some(k) => k.fg(p, s)?,
            None => (0.0, 0.0),
        };
        let mut p_t = p * fbar;
        for a in 0..n {
            p_t -= coeffs.cbar[a] * grad_p[a];
            for b in 0..n {
                p_t -= params.chi * d[(a, b)] * (grad_p[a] * grad_s[b] + p * hess_s[(a, b)]);
                p_t += params.mu * d[(a, b)] * hess_p[(a, b)];
            }
        }
        let s_t = s * gbar + params.prey_diffusivity * hess_s.trace();
        Ok(SlowJet {
            p,
            s,
            grad_p,
            grad_s,
            hess_p,
            hess_s,
            p_t,
            s_t,
        })
    }
}

/// Jets of a slow state at arbitrary points, from spectral derivatives.
pub fn slow_jets(
    state: &SlowState,
    coeffs: &EffectiveCoefficients,
    params: SlowParams,
    points: &[Vec<f64>],
) -> Result<Vec<SlowJet>> {
    let n = state.grid().dim();
    let gp = state.pbar.gradient();
    let gs = state.sbar.gradient();
    let hp: Vec<Vec<SpatialField>> = gp.iter().map(|g| g.gradient()).collect();
    let hs: Vec<Vec<SpatialField>> = gs.iter().map(|g| g.gradient()).collect();
    let at = |f: &SpatialField, x: &[f64]| f.eval_at(x);
    points
        .iter()
        .map(|x| {
            if x.len() != n {
                return Err(Error::GridMismatch("point dimension differs from slow grid".into()));
            }
            SlowJet::with_slow_rhs(
                at(&state.pbar, x),
                at(&state.sbar, x),
                gp.iter().map(|g| at(g, x)).collect(),
                gs.iter().map(|g| at(g, x)).collect(),
                DMatrix::from_fn(n, n, |a, b| at(&hp[a][b], x)),
                DMatrix::from_fn(n, n, |a, b| at(&hs[a][b], x)),
                coeffs,
                params,
            )
        })
        .collect()
}

/// Correction fields at one slow point.
#[derive(Debug, Clone)]
pub struct CorrectionBundle {
    pub s1_tilde: FastField,
    pub q0: Vec<FastField>,
    /// `range Q` component of `p₁`.
    pub p1_check: FastField,
    /// `range Q₁` component of `p₁`.
    pub p1_circ: FastField,
    pub undetermined: Undetermined,
}

/// Components left free at this order, fixed to zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Undetermined {
    /// Amplitude of `p̂•₁ = p̄₁𝔢_*`.
    pub p1_bullet_mean: f64,
    pub s1_bar: f64,
}

impl CorrectionBundle {
    /// `p₁ = p̌₁ + p̂°₁ + p̂•₁`.
    pub fn p1(&self, w: &WeightField) -> FastField {
        self.p1_check
            .add(&self.p1_circ)
            .add(&w.estar.scale(self.undetermined.p1_bullet_mean))
    }

    pub fn s1(&self) -> FastField {
        self.s1_tilde.map(|v| v + self.undetermined.s1_bar)
    }

    /// `(p₁, s₁)` at fast coordinates `(ξ, τ)` by trigonometric interpolation.
    pub fn sample(&self, w: &WeightField, xi: &[f64], tau: f64) -> (f64, f64) {
        let p = self.p1(w).sample_tau(tau).eval_at(xi);
        let s = self.s1().sample_tau(tau).eval_at(xi);
        (p, s)
    }

    /// Rows `field,component,i_tau,i_xi1..,value`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let grid = self.s1_tilde.grid().clone();
        let n = grid.dim();
        let cols: Vec<String> = (1..=n).map(|a| format!("i_xi{a}")).collect();
        writeln!(out, "field,component,i_tau,{},value", cols.join(","))?;
        let mut emit = |name: &str, comp: usize, f: &FastField| -> Result<()> {
            let pts = grid.spatial().points().to_vec();
            let m = grid.slice_len();
            for (flat, v) in f.values().iter().enumerate() {
                let j = flat / m;
                let mut rem = flat % m;
                let mut ii = vec![0usize; n];
                for a in (0..n).rev() {
                    ii[a] = rem % pts[a];
                    rem /= pts[a];
                }
                let ii: Vec<String> = ii.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{name},{comp},{j},{},{v}", ii.join(","))?;
            }
            Ok(())
        };
        emit("s1_tilde", 0, &self.s1_tilde)?;
        for (a, q) in self.q0.iter().enumerate() {
            emit("q0", a + 1, q)?;
        }
        emit("p1_check", 0, &self.p1_check)?;
        emit("p1_circ", 0, &self.p1_circ)?;
        Ok(())
    }
}

/// Cell-problem data shared by every slow point.
pub struct CorrectionContext {
    ctx: CellOperatorContext,
    model: KineticsModel,
    mu: f64,
    chi: f64,
    /// `V = ∇̃_𝔢ℒ⁻¹𝔢_{*τ}`.
    v: Vec<FastField>,
    /// `W_j = (I − 𝒫)(𝔢_* e_j)`.
    w: Vec<Vec<FastField>>,
    /// `ℒ⁻¹𝔢_{*τ}`.
    l_tau: FastField,
    /// `ℒ⁻¹∂_j𝔢_*`.
    l_grad: Vec<FastField>,
    gbar: AveragedKinetics,
}

fn components(slices: Vec<Vec<crate::torus_field::SpatialField>>, ctx: &CellOperatorContext) -> Result<Vec<FastField>> {
    let n = ctx.grid().dim();
    (0..n)
        .map(|a| {
            FastField::from_slices(ctx.grid(), slices.iter().map(|s| s[a].clone()).collect())
        })
        .collect()
}

impl CorrectionContext {
    pub fn new(w: &WeightField, model: KineticsModel, mu: f64, chi: f64) -> Result<Self> {
        if !(mu > 0.0 && chi >= 0.0) {
            return Err(Error::param("mu/chi", "need mu > 0 and chi >= 0"));
        }
        let ctx = CellOperatorContext::new(w.clone());
        let grid = ctx.grid().clone();
        let n = grid.dim();
        let estar_tau = w.estar_tau();
        let l_tau = ctx.solve_l_field(&estar_tau)?;
        let v_slices = (0..grid.tau_points())
            .map(|j| Ok(ctx.weighted_gradient(&l_tau.slice(j), j)))
            .collect::<Result<Vec<_>>>()?;
        let v = components(v_slices, &ctx)?;
        let grad_estar = w.estar.fast_gradient();
        let mut l_grad = Vec::with_capacity(n);
        let mut wj = Vec::with_capacity(n);
        for (j, g) in grad_estar.iter().enumerate() {
            let lg = ctx.solve_l_field(g)?;
            let proj = (0..grid.tau_points())
                .map(|k| Ok(ctx.weighted_gradient(&lg.slice(k), k)))
                .collect::<Result<Vec<_>>>()?;
            let proj = components(proj, &ctx)?;
            let comps: Vec<FastField> = (0..n)
                .map(|a| {
                    let base = if a == j { w.estar.clone() } else { FastField::zeros(&grid) };
                    base.sub(&proj[a])
                })
                .collect();
            wj.push(comps);
            l_grad.push(lg);
        }
        Ok(CorrectionContext {
            gbar: AveragedKinetics::new(w, model.clone()),
            ctx,
            model,
            mu,
            chi,
            v,
            w: wj,
            l_tau,
            l_grad,
        })
    }

    pub fn weight(&self) -> &WeightField {
        self.ctx.weight()
    }

    pub fn cell(&self) -> &CellOperatorContext {
        &self.ctx
    }

    fn estar(&self) -> &FastField {
        &self.ctx.weight().estar
    }

    fn slow_flux(&self, jet: &SlowJet) -> Vec<f64> {
        (0..jet.grad_p.len())
            .map(|j| self.chi * jet.p * jet.grad_s[j] - self.mu * jet.grad_p[j])
            .collect()
    }

    /// `s̃₁ = ℋ⁻¹(s̄g(p̄𝔢_*, s̄) − s̄_t)`.
    pub fn build_s1(&self, jet: &SlowJet) -> Result<FastField> {
        let g = self.pointwise_g(jet)?;
        let rhs = g.map(|g| jet.s * g - jet.s_t);
        self.ctx.solve_heat(&rhs)
    }

    fn pointwise_g(&self, jet: &SlowJet) -> Result<FastField> {
        let vals = self
            .estar()
            .values()
            .iter()
            .map(|e| self.model.fg(jet.p * e, jet.s).map(|r| r.1))
            .collect::<Result<Vec<_>>>()?;
        FastField::new(self.estar().grid().clone(), vals)
    }

    /// `q₀ = −p̄∇̃_𝔢ℒ⁻¹𝔢_{*τ} + (I − 𝒫)u` with `u = 𝔢_*(χp̄∇s̄ − μ∇p̄)`.
    pub fn build_q0(&self, jet: &SlowJet) -> Vec<FastField> {
        let v = self.slow_flux(jet);
        let n = v.len();
        (0..n)
            .map(|a| {
                let mut acc = self.v[a].scale(-jet.p);
                for (j, vj) in v.iter().enumerate() {
                    acc = acc.add(&self.w[j][a].scale(*vj));
                }
                acc
            })
            .collect()
    }

    /// `μp̌₁ = χQ(p₀s̃₁) + ℒ⁻¹(∇̃·u + p̄𝔢_{*τ})`.
    pub fn build_p1_check(&self, jet: &SlowJet, s1: &FastField) -> FastField {
        let p0s1 = self.estar().scale(jet.p).mul(s1);
        let mut acc = self.ctx.project_q(&p0s1).scale(self.chi);
        for (j, vj) in self.slow_flux(jet).iter().enumerate() {
            acc = acc.add(&self.l_grad[j].scale(*vj));
        }
        acc.add(&self.l_tau.scale(jet.p)).scale(1.0 / self.mu)
    }

    /// `⟨R⟩^ξ` for `R = (p̄𝔢_*)_t + ∇·q₀ − p̄𝔢_*f(p̄𝔢_*, s̄)`.
    pub fn transport_residual(&self, jet: &SlowJet) -> Result<TauProfile> {
        let n = jet.grad_p.len();
        let e = self.estar();
        // ∇·q₀ = −∇p̄·V + Σ ∂_a v_j W_{j,a}
        let mut div_q0 = FastField::zeros(e.grid());
        for a in 0..n {
            div_q0 = div_q0.sub(&self.v[a].scale(jet.grad_p[a]));
            for j in 0..n {
                let dv = self.chi * (jet.grad_p[a] * jet.grad_s[j] + jet.p * jet.hess_s[(a, j)])
                    - self.mu * jet.hess_p[(a, j)];
                div_q0 = div_q0.add(&self.w[j][a].scale(dv));
            }
        }
        let pf = e
            .values()
            .iter()
            .map(|ev| {
                let p0 = jet.p * ev;
                self.model.fg(p0, jet.s).map(|r| p0 * r.0)
            })
            .collect::<Result<Vec<_>>>()?;
        let pf = FastField::new(e.grid().clone(), pf)?;
        let r = e.scale(jet.p_t).add(&div_q0).sub(&pf);
        Ok(r.average_spatial())
    }

    /// `p̂°₁ = −P∂τ⁻¹⟨R⟩^ξ`.
    pub fn build_p1_circ(&self, jet: &SlowJet) -> Result<FastField> {
        let r = self.transport_residual(jet)?;
        let m = r.mean();
        let scale = jet.p_t.abs().max(r.max_abs()).max(jet.p.abs()).max(1.0);
        if m.abs() > COMPATIBILITY_TOL * scale {
            return Err(Error::Solvability {
                operator: "first-order transport",
                mean: m,
                tol: COMPATIBILITY_TOL * scale,
            });
        }
        let centred = r.map(|v| v - m);
        let phi = invert_dtau(&centred)?.map(|v| -v);
        Ok(self.estar().mul_tau(&phi))
    }

    /// All determined components at one slow point.
    pub fn build(&self, jet: &SlowJet) -> Result<CorrectionBundle> {
        if jet.grad_p.len() != self.ctx.grid().dim() {
            return Err(Error::GridMismatch("jet and torus differ in dimension".into()));
        }
        let s1_tilde = self.build_s1(jet)?;
        let q0 = self.build_q0(jet);
        let p1_check = self.build_p1_check(jet, &s1_tilde);
        let p1_circ = self.build_p1_circ(jet)?;
        Ok(CorrectionBundle {
            s1_tilde,
            q0,
            p1_check,
            p1_circ,
            undetermined: Undetermined::default(),
        })
    }

    /// `ḡ` on the same quadrature as the correction fields.
    pub fn averaged_kinetics(&self) -> &AveragedKinetics {
        &self.gbar
    }

    /// Residual of the order-one flux equation
    /// `χp₀∇̃s̃₁ − μ∇̃_𝔢p₁ + u − q₀`, max over the torus.
    pub fn flux_residual(&self, jet: &SlowJet, b: &CorrectionBundle) -> f64 {
        let grid = self.ctx.grid();
        let n = grid.dim();
        let e = self.estar();
        let p0 = e.scale(jet.p);
        let grad_s1 = b.s1_tilde.fast_gradient();
        let p1 = b.p1(self.weight());
        let v = self.slow_flux(jet);
        let mut worst = 0.0f64;
        for j in 0..grid.tau_points() {
            let wg = self.ctx.weighted_gradient(&p1.slice(j), j);
            for a in 0..n {
                let lhs = p0.slice(j).zip_map(&grad_s1[a].slice(j), |p, g| self.chi * p * g);
                let u = e.slice(j).map(|ev| ev * v[a]);
                let r = lhs
                    .zip_map(&wg[a], |l, w| l - self.mu * w)
                    .zip_map(&u, |l, u| l + u)
                    .zip_map(&b.q0[a].slice(j), |l, q| l - q);
                worst = worst.max(r.max_abs());
            }
        }
        worst
    }
}
