//! Cell-problem operators on the fast torus.
//!
//! * `ℋ = ∂τ − Δξ` is diagonal in Fourier space and inverted exactly.
//! * `ℒu = ∇̃·(𝔢∇̃(u/𝔢))` has variable coefficients. Writing `φ = u/𝔢` turns
//!   `ℒu = f` into the symmetric problem `−∇·(𝔢∇φ) = −f`, solved by conjugate
//!   gradients preconditioned with the inverse Laplacian.
//!
//! Right-inverse normalizations: `⟨ℋ⁻¹v⟩ = 0`, `⟨ℒ⁻¹v⟩^ξ = 0`,
//! `M^τ∂τ⁻¹ = 0` and `M^ξ∂ξ⁻¹ = 0`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::WeightField;
use crate::spectral::Spectral;
use crate::torus_field::{FastField, SpatialField, TauProfile, TorusGrid};

/// Absolute solvability tolerance, scaled by `max(1, ‖rhs‖∞)`.
pub const SOLVABILITY_TOL: f64 = 1e-10;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_mean(operator: &'static str, values: &[f64]) -> Result<()> {
    let m = mean(values);
    let tol = SOLVABILITY_TOL * max_abs(values).max(1.0);
    if m.abs() > tol {
        return Err(Error::Solvability {
            operator,
            mean: m,
            tol,
        });
    }
    Ok(())
}

/// Symmetric `n×n` matrix such as `ℳ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMatrix {
    pub m: DMatrix<f64>,
}

impl EffectiveMatrix {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// `‖ℳ − ℳᵀ‖_max`.
    pub fn asymmetry(&self) -> f64 {
        (&self.m - self.m.transpose()).amax()
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.m + self.m.transpose()) * 0.5;
        let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn quadratic_form(&self, a: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(a);
        v.dot(&(&self.m * &v))
    }
}

/// Operators of the cell problems for one weight field.
#[derive(Debug, Clone)]
pub struct CellOperatorContext {
    weight: WeightField,
    tol: f64,
    max_iter: usize,
    xi: Spectral,
    full: Spectral,
}

impl CellOperatorContext {
    /// Context with the default tolerance `1e-11`.
    pub fn new(weight: WeightField) -> Self {
        let n = weight.grid().slice_len();
        Self::with_tolerance(weight, 1e-11, 20 * n.max(50)).expect("default tolerance is valid")
    }

    pub fn with_tolerance(weight: WeightField, tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::param("tolerance", format!("must be positive, got {tol}")));
        }
        if max_iter == 0 {
            return Err(Error::param("max_iterations", "must be positive"));
        }
        let grid = weight.grid().clone();
        Ok(CellOperatorContext {
            xi: grid.spatial().spectral(),
            full: grid.full_spectral(),
            weight,
            tol,
            max_iter,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        self.weight.grid()
    }

    pub fn weight(&self) -> &WeightField {
        &self.weight
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    fn dim(&self) -> usize {
        self.grid().dim()
    }

    fn spatial(&self, values: Vec<f64>) -> SpatialField {
        SpatialField::from_raw(self.grid().spatial().clone(), values)
    }

    fn e_slice(&self, j: usize) -> &[f64] {
        self.weight.e.slice_values(j)
    }

    // ---- heat operator -------------------------------------------------

    /// `ℋu` for a field on the torus.
    pub fn apply_heat(&self, u: &FastField) -> FastField {
        u.fast_dtau().sub(&u.fast_laplacian())
    }

    /// Right inverse of `ℋ = ∂τ − Δξ` with `⟨u⟩ = 0`.
    pub fn solve_heat(&self, rhs: &FastField) -> Result<FastField> {
        check_mean("H", rhs.values())?;
        let sp = &self.full;
        let mut spec = sp.forward(rhs.values());
        sp.for_each_mode(|flat, idx| {
            let omega = sp.k_odd(0)[idx[0]];
            let k2: f64 = (1..idx.len())
                .map(|a| sp.k_even(a)[idx[a]].powi(2))
                .sum();
            let sym = Complex64::new(k2, omega);
            spec[flat] = if sym.norm() == 0.0 {
                zero()
            } else {
                spec[flat] / sym
            };
        });
        Ok(FastField::from_raw(self.grid().clone(), sp.inverse(spec)))
    }

    // ---- weighted elliptic operator ------------------------------------

    /// `ℒu = ∇̃·(𝔢∇̃(u/𝔢))` on τ slice `j`.
    pub fn apply_l(&self, u: &SpatialField, j: usize) -> SpatialField {
        let e = self.e_slice(j);
        let phi: Vec<f64> = u.values().iter().zip(e).map(|(u, e)| u / e).collect();
        let mut out = self.neg_div_e_grad(&phi, e);
        out.iter_mut().for_each(|v| *v = -*v);
        self.spatial(out)
    }

    /// `ℒ` applied slice by slice.
    pub fn apply_l_field(&self, u: &FastField) -> FastField {
        let slices: Vec<SpatialField> = (0..self.grid().tau_points())
            .into_par_iter()
            .map(|j| self.apply_l(&u.slice(j), j))
            .collect();
        FastField::from_slices(self.grid(), slices).expect("slice grids match")
    }

    /// `−∇·(𝔢∇φ)` with spectral derivatives.
    fn neg_div_e_grad(&self, phi: &[f64], e: &[f64]) -> Vec<f64> {
        let sp = &self.xi;
        let spec = sp.forward(phi);
        let mut acc = vec![zero(); sp.len()];
        for a in 0..self.dim() {
            let k = sp.k_odd(a);
            let mut d = spec.clone();
            sp.for_each_mode(|flat, idx| d[flat] *= Complex64::new(0.0, k[idx[a]]));
            let flux: Vec<f64> = sp.inverse(d).iter().zip(e).map(|(g, e)| g * e).collect();
            let f = sp.forward(&flux);
            sp.for_each_mode(|flat, idx| acc[flat] += f[flat] * Complex64::new(0.0, k[idx[a]]));
        }
        let mut out = sp.inverse(acc);
        out.iter_mut().for_each(|v| *v = -*v);
        out
    }

    /// Remove the components annihilated by every discrete first derivative
    /// (the mean and the pure-Nyquist modes), optionally applying the inverse
    /// Laplacian scaled by `1/ē` to the rest.
    fn filter_kernel(&self, r: &[f64], inverse_laplacian: Option<f64>) -> Vec<f64> {
        let sp = &self.xi;
        let mut spec = sp.forward(r);
        sp.for_each_mode(|flat, idx| {
            let k2 = sp.k_squared_odd(idx);
            if k2 == 0.0 {
                spec[flat] = zero();
            } else if let Some(ebar) = inverse_laplacian {
                spec[flat] /= ebar * k2;
            }
        });
        sp.inverse(spec)
    }

    /// Right inverse of `ℒ` on τ slice `j`, normalized by `⟨u⟩^ξ = 0`.
    pub fn solve_l(&self, rhs: &SpatialField, j: usize) -> Result<SpatialField> {
        check_mean("L", rhs.values())?;
        let e = self.e_slice(j);
        let b: Vec<f64> = self
            .filter_kernel(rhs.values(), None)
            .into_iter()
            .map(|v| -v)
            .collect();
        let bnorm = dot(&b, &b).sqrt();
        let n = b.len();
        if bnorm == 0.0 {
            return Ok(self.spatial(vec![0.0; n]));
        }
        let ebar = mean(e);
        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let mut z = self.filter_kernel(&r, Some(ebar));
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut converged = false;
        let mut res = 1.0;
        for _ in 0..self.max_iter {
            let ap = self.neg_div_e_grad(&p, e);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            res = dot(&r, &r).sqrt() / bnorm;
            if res <= self.tol {
                converged = true;
                break;
            }
            z = self.filter_kernel(&r, Some(ebar));
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                solver: "L (conjugate gradients)",
                iterations: self.max_iter,
                residual: res,
            });
        }
        let c = -dot(e, &x) / e.iter().sum::<f64>();
        let u: Vec<f64> = x.iter().zip(e).map(|(phi, e)| e * (phi + c)).collect();
        if cfg!(debug_assertions) {
            let lu = self.apply_l(&self.spatial(u.clone()), j);
            let target = self.filter_kernel(rhs.values(), None);
            let err = lu
                .values()
                .iter()
                .zip(&target)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            debug_assert!(
                err <= 1e-7 * max_abs(&target).max(1e-300),
                "L residual {err:e} after convergence"
            );
            debug_assert!(mean(&u).abs() <= 1e-10 * max_abs(&u).max(1.0));
        }
        Ok(self.spatial(u))
    }

    /// `ℒ⁻¹` slice by slice.
    pub fn solve_l_field(&self, rhs: &FastField) -> Result<FastField> {
        let slices = (0..self.grid().tau_points())
            .into_par_iter()
            .map(|j| self.solve_l(&rhs.slice(j), j))
            .collect::<Result<Vec<_>>>()?;
        FastField::from_slices(self.grid(), slices)
    }

    /// `∇̃_𝔢 g = 𝔢∇̃(g/𝔢)` on τ slice `j`.
    pub fn weighted_gradient(&self, g: &SpatialField, j: usize) -> Vec<SpatialField> {
        let e = self.e_slice(j);
        let ratio: Vec<f64> = g.values().iter().zip(e).map(|(g, e)| g / e).collect();
        let sp = &self.xi;
        let spec = sp.forward(&ratio);
        (0..self.dim())
            .map(|a| {
                let k = sp.k_odd(a);
                let mut d = spec.clone();
                sp.for_each_mode(|flat, idx| d[flat] *= Complex64::new(0.0, k[idx[a]]));
                let v = sp.inverse(d).iter().zip(e).map(|(d, e)| d * e).collect();
                self.spatial(v)
            })
            .collect()
    }

    /// `∇̃_𝔢 ℒ⁻¹ f` on τ slice `j`.
    pub fn weighted_gradient_of_inverse(&self, f: &SpatialField, j: usize) -> Result<Vec<SpatialField>> {
        let g = self.solve_l(f, j)?;
        Ok(self.weighted_gradient(&g, j))
    }

    // ---- scalar projectors ---------------------------------------------

    /// `Pu = ⟨u⟩^ξ 𝔢_*`.
    pub fn project_p(&self, u: &FastField) -> FastField {
        self.weight.estar.mul_tau(&u.average_spatial())
    }

    /// `Q = I − P`.
    pub fn project_q(&self, u: &FastField) -> FastField {
        u.sub(&self.project_p(u))
    }

    /// `P₁ = P(I − M^ξ + M)P`, which reduces to `⟨u⟩𝔢_*`.
    pub fn project_p1(&self, u: &FastField) -> FastField {
        self.weight.estar.scale(u.average_full())
    }

    /// `Q₁ = P(M^ξ − M)P`, which reduces to `(⟨u⟩^ξ − ⟨u⟩)𝔢_*`.
    pub fn project_q1(&self, u: &FastField) -> FastField {
        let m = u.average_full();
        self.weight
            .estar
            .mul_tau(&u.average_spatial().map(|v| v - m))
    }

    // ---- vector projector and ℳ ------------------------------------------

    /// `(u, v)_𝔢 = ⟨u·v/𝔢⟩^ξ` on τ slice `j`.
    pub fn inner_e(&self, u: &[SpatialField], v: &[SpatialField], j: usize) -> f64 {
        let e = self.e_slice(j);
        let n = e.len();
        let mut s = 0.0;
        for (a, b) in u.iter().zip(v) {
            for i in 0..n {
                s += a.values()[i] * b.values()[i] / e[i];
            }
        }
        s / n as f64
    }

    /// `𝒫v = ∇̃_𝔢 ℒ⁻¹ ∇̃·v` on τ slice `j`.
    pub fn project_vector(&self, v: &[SpatialField], j: usize) -> Result<Vec<SpatialField>> {
        if v.len() != self.dim() {
            return Err(Error::GridMismatch(format!(
                "{} components for dimension {}",
                v.len(),
                self.dim()
            )));
        }
        let div = SpatialField::divergence(v);
        self.weighted_gradient_of_inverse(&div, j)
    }

    /// `ℳ` on τ slice `j`: column `k` is `⟨𝒫(𝔢e_k)⟩^ξ`.
    pub fn matrix_m(&self, j: usize) -> Result<EffectiveMatrix> {
        let n = self.dim();
        let e = self.spatial(self.e_slice(j).to_vec());
        let de = e.gradient();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            // ∇̃·(𝔢e_k) = ∂_k 𝔢
            let col = self.weighted_gradient_of_inverse(&de[k], j)?;
            for (i, c) in col.iter().enumerate() {
                m[(i, k)] = c.mean();
            }
        }
        Ok(EffectiveMatrix { m })
    }

    /// `ℳ` at every τ node.
    pub fn matrix_m_all(&self) -> Result<Vec<EffectiveMatrix>> {
        (0..self.grid().tau_points())
            .into_par_iter()
            .map(|j| self.matrix_m(j))
            .collect()
    }
}

/// Right inverse of `∂τ` with zero mean.
pub fn invert_dtau(p: &TauProfile) -> Result<TauProfile> {
    check_mean("d/dtau", p.values())?;
    let sp = Spectral::new(&[p.len()], &[p.period()]);
    let k = sp.k_odd(0).to_vec();
    let out = sp.apply_symbol(p.values(), |idx| {
        if k[idx[0]] == 0.0 {
            zero()
        } else {
            Complex64::new(0.0, -1.0 / k[idx[0]])
        }
    });
    TauProfile::new(p.period(), out)
}

/// Right inverse of `∂ξ_axis` with zero spatial mean. The input must have
/// zero mean along every line parallel to `axis`.
pub fn invert_dxi(f: &SpatialField, axis: usize) -> Result<SpatialField> {
    if axis >= f.grid().dim() {
        return Err(Error::param("axis", format!("{axis} out of range")));
    }
    check_mean("d/dxi", f.values())?;
    let sp = f.grid().spectral();
    let mut spec = sp.forward(f.values());
    let k = sp.k_odd(axis).to_vec();
    let n = f.values().len() as f64;
    let mut leak = 0.0f64;
    sp.for_each_mode(|flat, idx| {
        let kk = k[idx[axis]];
        if kk == 0.0 {
            if !sp.is_nyquist(axis, idx[axis]) {
                leak = leak.max(spec[flat].norm() / n);
            }
            spec[flat] = zero();
        } else {
            spec[flat] *= Complex64::new(0.0, -1.0 / kk);
        }
    });
    let tol = SOLVABILITY_TOL * f.max_abs().max(1.0);
    if leak > tol {
        return Err(Error::Solvability {
            operator: "d/dxi",
            mean: leak,
            tol,
        });
    }
    Ok(SpatialField::from_raw(f.grid().clone(), sp.inverse(spec)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{bessel_i0, build_weight, CosineFactor, SignalSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ctx_for(h: &SignalSpec, grid: &TorusGrid) -> CellOperatorContext {
        CellOperatorContext::new(build_weight(h, 1.0, 1.0, grid).unwrap())
    }

    fn grid2() -> TorusGrid {
        TorusGrid::new(vec![2.0 * PI, 2.0 * PI], vec![32, 32], 2.0 * PI, 8).unwrap()
    }

    fn signal2(seed: u64) -> SignalSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SignalSpec::CosineProduct {
            amplitude: rng.gen_range(0.2..1.2),
            factors: vec![
                CosineFactor { axis: 1, mode: 1, phase: rng.gen_range(0.0..6.0) },
                CosineFactor { axis: 2, mode: rng.gen_range(1..=2), phase: rng.gen_range(0.0..6.0) },
                CosineFactor { axis: 0, mode: 1, phase: rng.gen_range(0.0..6.0) },
            ],
        }
    }

    fn smooth_slice(grid: &TorusGrid, seed: u64) -> SpatialField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0)))
            .collect();
        SpatialField::from_fn(grid.spatial(), |x| {
            let y = if x.len() > 1 { x[1] } else { 0.0 };
            c[0].0 * (x[0] + c[0].1).cos()
                + c[1].0 * (2.0 * y + c[1].1).sin()
                + c[2].0 * (x[0] - y + c[2].2).cos()
                + c[3].0 * (3.0 * x[0] + c[3].1).sin()
                + 0.3
        })
    }

    #[test]
    fn heat_examples() {
        let g = grid2();
        let ctx = ctx_for(&SignalSpec::zero(), &g);
        let z = ctx.solve_heat(&FastField::zeros(&g)).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let rhs = FastField::from_fn(&g, |x, _| x[0].cos());
        let u = ctx.solve_heat(&rhs).unwrap();
        assert!(ctx.apply_heat(&u).sub(&rhs).max_abs() < 1e-12);
        assert!(u.average_full().abs() < 1e-15);
        let rhs = FastField::from_fn(&g, |_, t| t.cos());
        let u = ctx.solve_heat(&rhs).unwrap();
        let exact = FastField::from_fn(&g, |_, t| t.sin());
        assert!(u.sub(&exact).max_abs() < 1e-12);
        assert!(matches!(
            ctx.solve_heat(&FastField::constant(&g, 1.0)),
            Err(Error::Solvability { .. })
        ));
    }

    #[test]
    fn l_with_unit_weight_is_poisson() {
        let g = grid2();
        let ctx = ctx_for(&SignalSpec::zero(), &g);
        assert_eq!(
            ctx.solve_l(&SpatialField::constant(g.spatial(), 0.0), 0).unwrap().max_abs(),
            0.0
        );
        let f = SpatialField::from_fn(g.spatial(), |x| (x[0] + 2.0 * x[1]).sin());
        let u = ctx.solve_l(&f, 3).unwrap();
        let exact = f.map(|v| -v / 5.0);
        assert!(u.zip_map(&exact, |a, b| a - b).max_abs() < 1e-12);
        assert!(matches!(
            ctx.solve_l(&SpatialField::constant(g.spatial(), 1.0), 0),
            Err(Error::Solvability { .. })
        ));
    }

    #[test]
    fn l_inverse_of_l_removes_kernel_part() {
        let g = grid2();
        for seed in 0..3 {
            let ctx = ctx_for(&signal2(seed), &g);
            for j in [0, 5] {
                let phi = smooth_slice(&g, seed + 10);
                let back = ctx.solve_l(&ctx.apply_l(&phi, j), j).unwrap();
                let estar = ctx.weight().estar.slice(j);
                let expect = phi.zip_map(&estar, |p, e| p - phi.mean() * e);
                let err = back.zip_map(&expect, |a, b| a - b).max_abs();
                assert!(err < 1e-9, "seed {seed} slice {j}: {err:e}");
            }
        }
    }

    #[test]
    fn projector_identities() {
        let g = grid2();
        let ctx = ctx_for(&signal2(4), &g);
        let estar = ctx.weight().estar.clone();
        assert!(ctx.project_p(&estar).sub(&estar).max_abs() < 1e-12);
        assert!(ctx.project_q(&estar).max_abs() < 1e-12);
        let u = FastField::from_fn(&g, |x, t| (x[0] + t).sin() + 0.5 * x[1].cos() * t.cos() + 0.2);
        let pu = ctx.project_p(&u);
        let qu = ctx.project_q(&u);
        assert!((pu.average_full() - u.average_full()).abs() < 1e-12);
        for (a, b) in pu.average_spatial().values().iter().zip(u.average_spatial().values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(qu.average_spatial().max_abs() < 1e-12);
        assert!(ctx.project_p(&pu).sub(&pu).max_abs() < 1e-12);
        let p1 = ctx.project_p1(&u);
        let q1 = ctx.project_q1(&u);
        assert!(p1.add(&q1).sub(&pu).max_abs() < 1e-12);
        assert!(ctx.project_p1(&p1).sub(&p1).max_abs() < 1e-12);
        assert!(ctx.project_q1(&q1).sub(&q1).max_abs() < 1e-12);
        // literal composition P(I − M^ξ + M)P
        let lit = {
            let w = pu.sub(&FastField::from_tau_profile(&g, &pu.average_spatial()))
                .map(|v| v + pu.average_full());
            ctx.project_p(&w)
        };
        assert!(lit.sub(&p1).max_abs() < 1e-12);
    }

    #[test]
    fn vector_projector_properties() {
        let g = grid2();
        let ctx = ctx_for(&signal2(7), &g);
        let j = 2;
        let phi = smooth_slice(&g, 3);
        let grad_e = ctx.weighted_gradient(&phi, j);
        let back = ctx.project_vector(&grad_e, j).unwrap();
        for (a, b) in back.iter().zip(&grad_e) {
            assert!(a.zip_map(b, |x, y| x - y).max_abs() < 1e-9);
        }
        // divergence-free field: v = (∂₂ψ, −∂₁ψ)
        let psi = smooth_slice(&g, 8);
        let d = psi.gradient();
        let v = vec![d[1].clone(), d[0].map(|x| -x)];
        let pv = ctx.project_vector(&v, j).unwrap();
        assert!(pv.iter().all(|c| c.max_abs() < 1e-9));
        // idempotence and divergence-free complement
        let w = vec![smooth_slice(&g, 1), smooth_slice(&g, 2)];
        let pw = ctx.project_vector(&w, j).unwrap();
        let ppw = ctx.project_vector(&pw, j).unwrap();
        for (a, b) in pw.iter().zip(&ppw) {
            assert!(a.zip_map(b, |x, y| x - y).max_abs() < 1e-9);
        }
        let rest: Vec<SpatialField> = w.iter().zip(&pw).map(|(a, b)| a.zip_map(b, |x, y| x - y)).collect();
        assert!(SpatialField::divergence(&rest).max_abs() < 1e-9);
        // self-adjoint in the 𝔢 metric
        let u = vec![smooth_slice(&g, 5), smooth_slice(&g, 6)];
        let pu = ctx.project_vector(&u, j).unwrap();
        assert!((ctx.inner_e(&u, &pw, j) - ctx.inner_e(&pu, &w, j)).abs() < 1e-9);
    }

    #[test]
    fn unit_weight_projector_is_helmholtz() {
        let g = grid2();
        let ctx = ctx_for(&SignalSpec::zero(), &g);
        let phi = smooth_slice(&g, 4);
        let psi = smooth_slice(&g, 9);
        let gp = phi.gradient();
        let gs = psi.gradient();
        let v = vec![
            gp[0].zip_map(&gs[1], |a, b| a + b),
            gp[1].zip_map(&gs[0], |a, b| a - b),
        ];
        let pv = ctx.project_vector(&v, 0).unwrap();
        for (a, b) in pv.iter().zip(&gp) {
            assert!(a.zip_map(b, |x, y| x - y).max_abs() < 1e-11);
        }
    }

    #[test]
    fn matrix_m_examples() {
        let g = TorusGrid::uniform(1, 32, 2.0 * PI, 8).unwrap();
        let zero = ctx_for(&SignalSpec::zero(), &g).matrix_m(0).unwrap();
        assert!(zero.m.amax() < 1e-14);
        let ctx = ctx_for(&SignalSpec::cosine(1.0, 0.4), &g);
        let m = ctx.matrix_m(3).unwrap();
        let i0 = bessel_i0(1.0);
        assert!((m.m[(0, 0)] - (i0 - 1.0 / i0)).abs() < 1e-8);
        let g2 = grid2();
        let h = SignalSpec::CosineProduct {
            amplitude: 0.8,
            factors: vec![CosineFactor { axis: 1, mode: 1, phase: 0.0 }],
        };
        let m2 = ctx_for(&h, &g2).matrix_m(1).unwrap();
        assert!(m2.m.column(1).amax() < 1e-10 && m2.m.row(1).amax() < 1e-10);
        assert!(m2.m[(0, 0)] > 0.1);
    }

    #[test]
    fn l_commutes_with_p() {
        let g = grid2();
        let ctx = ctx_for(&signal2(3), &g);
        let u = FastField::from_fn(&g, |x, t| (x[0] - t).sin() * (0.5 * x[1].cos() + 1.0) + 0.3);
        let lp = ctx.apply_l_field(&ctx.project_p(&u));
        let pl = ctx.project_p(&ctx.apply_l_field(&u));
        assert!(lp.sub(&pl).max_abs() < 1e-9);
    }

    #[test]
    fn inverse_derivatives() {
        let g = TorusGrid::uniform(1, 16, 2.0 * PI, 16).unwrap();
        let p = TauProfile::from_fn(&g, f64::cos);
        let q = invert_dtau(&p).unwrap();
        for (j, v) in q.values().iter().enumerate() {
            assert!((v - g.tau_coord(j).sin()).abs() < 1e-12);
        }
        let z = invert_dtau(&TauProfile::from_fn(&g, |_| 0.0)).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        assert!(invert_dtau(&TauProfile::from_fn(&g, |_| 1.0)).is_err());
        let f = SpatialField::from_fn(g.spatial(), |x| (2.0 * x[0]).cos());
        let i = invert_dxi(&f, 0).unwrap();
        assert!(i.mean().abs() < 1e-15);
        let back = &i.gradient()[0];
        assert!(back.zip_map(&f, |a, b| a - b).max_abs() < 1e-12);
        let g2 = grid2();
        let bad = SpatialField::from_fn(g2.spatial(), |x| x[1].cos());
        assert!(invert_dxi(&bad, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn dtau_roundtrip(seed in 0u64..10_000) {
            let g = TorusGrid::uniform(1, 8, 3.0, 32).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = TauProfile::from_fn(&g, |t| {
                let w = 2.0 * PI * t / 3.0;
                c[0] * w.cos() + c[1] * w.sin() + c[2] * (2.0 * w).cos() + c[3] * (5.0 * w).sin()
            });
            let back = invert_dtau(&p).unwrap().dtau();
            for (a, b) in back.values().iter().zip(p.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn matrix_m_is_symmetric_psd_and_bounded(seed in 0u64..10_000) {
            let g = TorusGrid::new(vec![2.0 * PI, 2.0 * PI], vec![16, 16], 2.0 * PI, 8).unwrap();
            let ctx = ctx_for(&signal2(seed), &g);
            let j = (seed % 8) as usize;
            let m = ctx.matrix_m(j).unwrap();
            prop_assert!(m.asymmetry() < 1e-10);
            let ev = m.eigenvalues();
            prop_assert!(ev[0] >= -1e-10);
            prop_assert!(ev[1] < ctx.weight().mean_e.values()[j]);
        }
    }
}
