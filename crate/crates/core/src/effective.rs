//! Coefficients of the leading slow system: effective diffusivity
//! `D̄ = E − ⟨ρℳ⟩^τ`, drift
//! `c̄ = μ⟨(E − ρℳ)∇ln⟨𝔢⟩^ξ⟩^τ − ⟨∇̃_𝔢ℒ⁻¹𝔢_{*τ}⟩`,
//! averaged kinetics and their linearization, plus closed-form reductions.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cell::{CellOperatorContext, EffectiveMatrix};
use crate::error::{Error, Result};
use crate::kinetics::{KineticsModel, Reaction};
use crate::signal::WeightField;
use crate::torus_field::TauProfile;

/// `D̄` for a weight field.
pub fn effective_diffusivity(w: &WeightField) -> Result<DMatrix<f64>> {
    let ctx = CellOperatorContext::new(w.clone());
    let ms = ctx.matrix_m_all()?;
    Ok(diffusivity_from(&ctx, &ms))
}

fn diffusivity_from(ctx: &CellOperatorContext, ms: &[EffectiveMatrix]) -> DMatrix<f64> {
    let n = ctx.grid().dim();
    let rho = ctx.weight().rho.values();
    let mut acc = DMatrix::zeros(n, n);
    for (m, r) in ms.iter().zip(rho) {
        acc += &m.m * *r;
    }
    DMatrix::identity(n, n) - acc / ms.len() as f64
}

/// `⟨∇̃_𝔢ℒ⁻¹𝔢_{*τ}⟩`, the fast contribution to the drift (with sign `+`).
fn fast_drift(ctx: &CellOperatorContext) -> Result<Vec<f64>> {
    let n = ctx.grid().dim();
    let nt = ctx.grid().tau_points();
    let et = ctx.weight().estar_tau();
    if et.max_abs() == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let per_slice = (0..nt)
        .into_par_iter()
        .map(|j| {
            ctx.weighted_gradient_of_inverse(&et.slice(j), j)
                .map(|v| v.iter().map(|c| c.mean()).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; n];
    for v in per_slice {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x / nt as f64;
        }
    }
    Ok(out)
}

fn modulation_drift(
    ctx: &CellOperatorContext,
    ms: &[EffectiveMatrix],
    mu: f64,
    slow_log_gradient: &[TauProfile],
) -> Result<Vec<f64>> {
    let n = ctx.grid().dim();
    let nt = ctx.grid().tau_points();
    if slow_log_gradient.len() != n || slow_log_gradient.iter().any(|p| p.len() != nt) {
        return Err(Error::GridMismatch(
            "slow log-gradient must have one τ profile per axis".into(),
        ));
    }
    let rho = ctx.weight().rho.values();
    let mut out = DVector::zeros(n);
    for j in 0..nt {
        let g = DVector::from_iterator(n, slow_log_gradient.iter().map(|p| p.values()[j]));
        let a = DMatrix::identity(n, n) - &ms[j].m * rho[j];
        out += a * g;
    }
    Ok((out * (mu / nt as f64)).iter().copied().collect())
}

/// `c̄`. `slow_log_gradient` holds `∂ᵢ ln⟨𝔢⟩^ξ` as τ profiles (one per axis)
/// for slowly modulated signals and is `None` otherwise.
pub fn effective_drift(
    w: &WeightField,
    mu: f64,
    slow_log_gradient: Option<&[TauProfile]>,
) -> Result<Vec<f64>> {
    let ctx = CellOperatorContext::new(w.clone());
    let fast = fast_drift(&ctx)?;
    let slow = match slow_log_gradient {
        Some(g) => {
            let ms = ctx.matrix_m_all()?;
            modulation_drift(&ctx, &ms, mu, g)?
        }
        None => vec![0.0; fast.len()],
    };
    Ok(slow.iter().zip(&fast).map(|(s, f)| s - f).collect())
}

/// Averaged kinetics `f̄(p̄, s̄) = ⟨𝔢_* f(𝔢_*p̄, s̄)⟩`, `ḡ(p̄, s̄) = ⟨g(𝔢_*p̄, s̄)⟩`
/// evaluated by quadrature over the torus samples of `𝔢_*`.
#[derive(Debug, Clone)]
pub struct AveragedKinetics {
    estar: Vec<f64>,
    model: KineticsModel,
}

impl AveragedKinetics {
    pub fn new(w: &WeightField, model: KineticsModel) -> Self {
        AveragedKinetics {
            estar: w.estar.values().to_vec(),
            model,
        }
    }

    /// Kinetics without a signal (`𝔢_* ≡ 1`).
    pub fn unforced(model: KineticsModel) -> Self {
        AveragedKinetics {
            estar: vec![1.0],
            model,
        }
    }

    pub fn model(&self) -> &KineticsModel {
        &self.model
    }

    pub fn estar_samples(&self) -> &[f64] {
        &self.estar
    }

    fn check(&self, p: f64, s: f64) -> Result<()> {
        if p.is_finite() && s.is_finite() && p >= 0.0 && s >= 0.0 {
            Ok(())
        } else {
            Err(Error::OutsideDomain { p, s })
        }
    }
}

impl Reaction for AveragedKinetics {
    fn fg(&self, p: f64, s: f64) -> Result<(f64, f64)> {
        self.check(p, s)?;
        let mut f = 0.0;
        let mut g = 0.0;
        for &e in &self.estar {
            let (fi, gi) = self.model.fg(e * p, s)?;
            f += e * fi;
            g += gi;
        }
        let n = self.estar.len() as f64;
        Ok((f / n, g / n))
    }

    fn fg_jacobian(&self, p: f64, s: f64) -> Result<[[f64; 2]; 2]> {
        self.check(p, s)?;
        let mut j = [[0.0; 2]; 2];
        for &e in &self.estar {
            let [[fp, fs], [gp, gs]] = self.model.fg_jacobian(e * p, s)?;
            j[0][0] += e * e * fp;
            j[0][1] += e * fs;
            j[1][0] += e * gp;
            j[1][1] += gs;
        }
        let n = self.estar.len() as f64;
        for row in j.iter_mut() {
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        Ok(j)
    }
}

/// `ā°ᵢⱼ = ⟨aᵢⱼ(𝔢_*p̄ₑ, s̄ₑ)·(𝔢_*)^{δⱼ₁}⟩`.
pub fn averaged_linearization(
    w: &WeightField,
    model: &KineticsModel,
    pbar_e: f64,
    sbar_e: f64,
) -> Result<[[f64; 2]; 2]> {
    if !(pbar_e > 0.0 && sbar_e > 0.0) {
        return Err(Error::OutsideDomain {
            p: pbar_e,
            s: sbar_e,
        });
    }
    let mut out = [[0.0; 2]; 2];
    let values = w.estar.values();
    for &e in values {
        let a = model.linearization(e * pbar_e, sbar_e)?;
        out[0][0] += a[0][0] * e;
        out[0][1] += a[0][1];
        out[1][0] += a[1][0] * e;
        out[1][1] += a[1][1];
    }
    let n = values.len() as f64;
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok(out)
}

/// `D̄`, `c̄` and per-τ data of the leading slow system.
#[derive(Debug, Clone)]
pub struct EffectiveCoefficients {
    pub dbar: DMatrix<f64>,
    pub cbar: Vec<f64>,
    /// `ℳ` at each τ node.
    pub m_tau: Vec<EffectiveMatrix>,
    /// `⟨𝔢⟩^ξ⟨𝔢⁻¹⟩^ξ` at each τ node.
    pub convexity: Vec<f64>,
    pub kinetics: Option<AveragedKinetics>,
    /// `ā°` at the quasi-equilibrium, when one was attached.
    pub abar: Option<[[f64; 2]; 2]>,
    pub equilibrium: Option<(f64, f64)>,
    pub signal_id: String,
    pub kinetics_id: String,
}

impl EffectiveCoefficients {
    /// Compute `D̄` and `c̄` (unmodulated signal).
    pub fn compute(w: &WeightField, mu: f64) -> Result<Self> {
        let ctx = CellOperatorContext::new(w.clone());
        Self::compute_with(&ctx, mu, None)
    }

    pub fn compute_with(
        ctx: &CellOperatorContext,
        mu: f64,
        slow_log_gradient: Option<&[TauProfile]>,
    ) -> Result<Self> {
        let ms = ctx.matrix_m_all()?;
        let dbar = diffusivity_from(ctx, &ms);
        let fast = fast_drift(ctx)?;
        let slow = match slow_log_gradient {
            Some(g) => modulation_drift(ctx, &ms, mu, g)?,
            None => vec![0.0; fast.len()],
        };
        Ok(EffectiveCoefficients {
            dbar,
            cbar: slow.iter().zip(&fast).map(|(s, f)| s - f).collect(),
            m_tau: ms,
            convexity: ctx.weight().convexity_product().values().to_vec(),
            kinetics: None,
            abar: None,
            equilibrium: None,
            signal_id: String::new(),
            kinetics_id: String::new(),
        })
    }

    /// Pure diffusion: `D̄ = E`, `c̄ = 0`.
    pub fn unforced(dim: usize) -> Self {
        EffectiveCoefficients {
            dbar: DMatrix::identity(dim, dim),
            cbar: vec![0.0; dim],
            m_tau: Vec::new(),
            convexity: Vec::new(),
            kinetics: None,
            abar: None,
            equilibrium: None,
            signal_id: String::new(),
            kinetics_id: String::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.cbar.len()
    }

    /// Attach averaged kinetics and, given an equilibrium, `ā°`.
    pub fn with_kinetics(
        mut self,
        w: &WeightField,
        model: KineticsModel,
        equilibrium: Option<(f64, f64)>,
    ) -> Result<Self> {
        self.kinetics_id = model.name().to_string();
        if let Some((p, s)) = equilibrium {
            self.abar = Some(averaged_linearization(w, &model, p, s)?);
            self.equilibrium = Some((p, s));
        }
        self.kinetics = Some(AveragedKinetics::new(w, model));
        Ok(self)
    }

    /// Write long-form rows `scenario,quantity,i,j,value`.
    pub fn write_csv(&self, scenario: &str, mut out: impl Write) -> Result<()> {
        writeln!(out, "scenario,quantity,i,j,value")?;
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                writeln!(out, "{scenario},dbar,{},{},{}", i + 1, j + 1, self.dbar[(i, j)])?;
            }
        }
        for (i, c) in self.cbar.iter().enumerate() {
            writeln!(out, "{scenario},cbar,{},,{}", i + 1, c)?;
        }
        if let Some(a) = self.abar {
            for i in 0..2 {
                for j in 0..2 {
                    writeln!(out, "{scenario},abar,{},{},{}", i + 1, j + 1, a[i][j])?;
                }
            }
        }
        if let Some((p, s)) = self.equilibrium {
            writeln!(out, "{scenario},p_e,,,{p}")?;
            writeln!(out, "{scenario},s_e,,,{s}")?;
        }
        if !self.convexity.is_empty() {
            let min = self.convexity.iter().copied().fold(f64::INFINITY, f64::min);
            writeln!(out, "{scenario},convexity_min,,,{min}")?;
        }
        Ok(())
    }
}

/// 1-D reduction `D̄ = ⟨1/(⟨𝔢⟩^ξ⟨𝔢⁻¹⟩^ξ)⟩^τ`.
pub fn closed_form_diffusivity_1d(w: &WeightField) -> f64 {
    let c = w.convexity_product();
    c.values().iter().map(|v| 1.0 / v).sum::<f64>() / c.len() as f64
}

/// Traveling-wave reduction `D̄ = E − θθ + θθ/(⟨𝔢⟩⟨𝔢⁻¹⟩)`,
/// `c̄ = c(1 − 1/(⟨𝔢⟩⟨𝔢⁻¹⟩))θ`.
pub fn closed_form_traveling_wave(w: &WeightField, theta: &[f64], c: f64) -> (DMatrix<f64>, Vec<f64>) {
    let n = theta.len();
    // ⟨𝔢⟩^ξ⟨𝔢⁻¹⟩^ξ is τ-independent for traveling waves
    let prod = w.convexity_product().mean();
    let t = DVector::from_column_slice(theta);
    let tt = &t * t.transpose();
    let d = DMatrix::identity(n, n) - &tt + tt / prod;
    let cb = theta.iter().map(|th| c * (1.0 - 1.0 / prod) * th).collect();
    (d, cb)
}
