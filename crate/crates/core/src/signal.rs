//! External shortwave signal `h(ξ, τ)` and the weights derived from it:
//! `𝔢 = exp(κh/μ)`, `ρ = 1/⟨𝔢⟩^ξ` and `𝔢_* = ρ𝔢`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus_field::{FastField, SpatialField, SpatialGrid, TauProfile, TorusGrid};

/// Mean tolerance for analytic signals.
pub const MEAN_TOL: f64 = 1e-10;
/// Tabulated signals with a mean below this are re-centred, others rejected.
pub const TABULATED_RECENTRE_TOL: f64 = 1e-6;

/// One factor `cos(2π m x/ℓ + φ)` of a cosine product. Axis `0` is `τ`,
/// axes `1..=n` are `ξ₁..ξₙ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineFactor {
    pub axis: usize,
    pub mode: i32,
    #[serde(default)]
    pub phase: f64,
}

/// A harmonic `α cos(kη) + β sin(kη)` of a traveling-wave profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub k: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

fn default_harmonics() -> Vec<Harmonic> {
    vec![Harmonic {
        k: 1,
        cos: 1.0,
        sin: 0.0,
    }]
}

/// The external signal on the fast torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalSpec {
    /// `h = a₀ Π cos(2π mᵢ xᵢ/ℓᵢ + φᵢ)`; no factors means `h ≡ 0`.
    CosineProduct {
        amplitude: f64,
        #[serde(default)]
        factors: Vec<CosineFactor>,
    },
    /// `h = a₀ Σ (αₖ cos kη + βₖ sin kη)` with `η = θ·ξ − cτ + φ`.
    TravelingWave {
        amplitude: f64,
        direction: Vec<f64>,
        speed: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default = "default_harmonics")]
        harmonics: Vec<Harmonic>,
    },
    /// Samples in the torus layout (τ-major).
    Tabulated { values: Vec<f64> },
}

impl SignalSpec {
    pub fn zero() -> Self {
        SignalSpec::CosineProduct {
            amplitude: 0.0,
            factors: Vec::new(),
        }
    }

    /// `a cos(ξ₁ + φ)` in 1-D with the standard `2π` period.
    pub fn cosine(amplitude: f64, phase: f64) -> Self {
        SignalSpec::CosineProduct {
            amplitude,
            factors: vec![CosineFactor {
                axis: 1,
                mode: 1,
                phase,
            }],
        }
    }

    /// `a cos(θ·ξ − cτ)`.
    pub fn traveling_wave(amplitude: f64, direction: Vec<f64>, speed: f64) -> Self {
        SignalSpec::TravelingWave {
            amplitude,
            direction,
            speed,
            phase: 0.0,
            harmonics: default_harmonics(),
        }
    }

    pub fn amplitude(&self) -> f64 {
        match self {
            SignalSpec::CosineProduct { amplitude, .. }
            | SignalSpec::TravelingWave { amplitude, .. } => *amplitude,
            SignalSpec::Tabulated { values } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// Same shape, amplitude replaced (tabulated samples are rescaled).
    pub fn with_amplitude(&self, a: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            SignalSpec::CosineProduct { amplitude, .. }
            | SignalSpec::TravelingWave { amplitude, .. } => *amplitude = a,
            SignalSpec::Tabulated { values } => {
                let cur = self.amplitude();
                let f = if cur > 0.0 { a / cur } else { 0.0 };
                values.iter_mut().for_each(|v| *v *= f);
            }
        }
        out
    }

    /// Multiply the signal by a constant.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            SignalSpec::Tabulated { values } => SignalSpec::Tabulated {
                values: values.iter().map(|v| v * factor).collect(),
            },
            _ => self.with_amplitude(self.amplitude() * factor),
        }
    }

    /// Whether `h` (hence `𝔢_*`) depends on `τ`.
    pub fn is_time_dependent(&self) -> bool {
        match self {
            SignalSpec::CosineProduct { amplitude, factors } => {
                *amplitude != 0.0 && factors.iter().any(|f| f.axis == 0 && f.mode != 0)
            }
            SignalSpec::TravelingWave {
                amplitude, speed, ..
            } => *amplitude != 0.0 && *speed != 0.0,
            SignalSpec::Tabulated { .. } => true,
        }
    }

    fn is_analytic(&self) -> bool {
        !matches!(self, SignalSpec::Tabulated { .. })
    }

    /// Check the parameters against a grid (dimension, periodicity, `|θ| = 1`).
    pub fn check(&self, grid: &TorusGrid) -> Result<()> {
        let n = grid.dim();
        match self {
            SignalSpec::CosineProduct { amplitude, factors } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::InvalidSignal(format!(
                        "amplitude {amplitude} must be finite and non-negative"
                    )));
                }
                if let Some(f) = factors.iter().find(|f| f.axis > n) {
                    return Err(Error::InvalidSignal(format!(
                        "factor axis {} exceeds dimension {n}",
                        f.axis
                    )));
                }
            }
            SignalSpec::TravelingWave {
                amplitude,
                direction,
                speed,
                harmonics,
                ..
            } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::InvalidSignal(format!(
                        "amplitude {amplitude} must be finite and non-negative"
                    )));
                }
                if direction.len() != n {
                    return Err(Error::InvalidSignal(format!(
                        "direction has {} components, grid dimension is {n}",
                        direction.len()
                    )));
                }
                let norm = direction.iter().map(|t| t * t).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidSignal(format!(
                        "direction must be a unit vector, |θ| = {norm}"
                    )));
                }
                if harmonics.iter().any(|h| h.k == 0) {
                    return Err(Error::InvalidSignal("harmonic k = 0 is a mean shift".into()));
                }
                let per = grid.spatial().periods();
                for (i, (&t, &l)) in direction.iter().zip(per).enumerate() {
                    if !is_integer(t * l / (2.0 * PI)) {
                        return Err(Error::InvalidSignal(format!(
                            "θ{} ℓ{} = {} is not a multiple of 2π",
                            i + 1,
                            i + 1,
                            t * l
                        )));
                    }
                }
                if !is_integer(speed * grid.tau_period() / (2.0 * PI)) {
                    return Err(Error::InvalidSignal(format!(
                        "c ℓ₀ = {} is not a multiple of 2π",
                        speed * grid.tau_period()
                    )));
                }
            }
            SignalSpec::Tabulated { values } => {
                if values.len() != grid.len() {
                    return Err(Error::InvalidSignal(format!(
                        "{} tabulated samples for a grid of {}",
                        values.len(),
                        grid.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSignal("non-finite tabulated sample".into()));
                }
            }
        }
        Ok(())
    }

    /// Evaluate `h` at a point. Tabulated signals are not point-evaluable.
    pub fn eval(&self, grid: &TorusGrid, xi: &[f64], tau: f64) -> Option<f64> {
        match self {
            SignalSpec::CosineProduct { amplitude, factors } => {
                if factors.is_empty() {
                    return Some(0.0);
                }
                let mut v = *amplitude;
                for f in factors {
                    v *= (phase_of(grid, f, xi, tau)).cos();
                }
                Some(v)
            }
            SignalSpec::TravelingWave {
                amplitude,
                harmonics,
                ..
            } => {
                let eta = self.eta(xi, tau);
                Some(
                    amplitude
                        * harmonics
                            .iter()
                            .map(|h| {
                                let k = h.k as f64;
                                h.cos * (k * eta).cos() + h.sin * (k * eta).sin()
                            })
                            .sum::<f64>(),
                )
            }
            SignalSpec::Tabulated { .. } => None,
        }
    }

    /// Gradient in `ξ` and derivative in `τ` at a point.
    pub fn eval_grad(&self, grid: &TorusGrid, xi: &[f64], tau: f64) -> Option<(Vec<f64>, f64)> {
        let n = grid.dim();
        match self {
            SignalSpec::CosineProduct { amplitude, factors } => {
                let mut grad = vec![0.0; n];
                let mut dt = 0.0;
                for (i, fi) in factors.iter().enumerate() {
                    let mut v = *amplitude;
                    for (j, fj) in factors.iter().enumerate() {
                        let ph = phase_of(grid, fj, xi, tau);
                        v *= if i == j { -ph.sin() } else { ph.cos() };
                    }
                    let w = angular(grid, fi);
                    if fi.axis == 0 {
                        dt += v * w;
                    } else {
                        grad[fi.axis - 1] += v * w;
                    }
                }
                Some((grad, dt))
            }
            SignalSpec::TravelingWave {
                amplitude,
                direction,
                speed,
                harmonics,
                ..
            } => {
                let eta = self.eta(xi, tau);
                let dh = amplitude
                    * harmonics
                        .iter()
                        .map(|h| {
                            let k = h.k as f64;
                            k * (h.sin * (k * eta).cos() - h.cos * (k * eta).sin())
                        })
                        .sum::<f64>();
                Some((direction.iter().map(|t| t * dh).collect(), -speed * dh))
            }
            SignalSpec::Tabulated { .. } => None,
        }
    }

    fn eta(&self, xi: &[f64], tau: f64) -> f64 {
        match self {
            SignalSpec::TravelingWave {
                direction,
                speed,
                phase,
                ..
            } => direction.iter().zip(xi).map(|(t, x)| t * x).sum::<f64>() - speed * tau + phase,
            _ => 0.0,
        }
    }

    /// Sample `h` on the grid without any mean check.
    pub fn realize(&self, grid: &TorusGrid) -> Result<FastField> {
        self.check(grid)?;
        match self {
            SignalSpec::Tabulated { values } => FastField::new(grid.clone(), values.clone()),
            _ => Ok(FastField::from_fn(grid, |xi, tau| {
                self.eval(grid, xi, tau).unwrap_or(0.0)
            })),
        }
    }
}

fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() < 1e-9
}

fn angular(grid: &TorusGrid, f: &CosineFactor) -> f64 {
    let l = if f.axis == 0 {
        grid.tau_period()
    } else {
        grid.spatial().periods()[f.axis - 1]
    };
    2.0 * PI * f.mode as f64 / l
}

fn phase_of(grid: &TorusGrid, f: &CosineFactor, xi: &[f64], tau: f64) -> f64 {
    let x = if f.axis == 0 { tau } else { xi[f.axis - 1] };
    angular(grid, f) * x + f.phase
}

/// Effective amplitude `a = a₀κ/μ`.
pub fn effective_amplitude(a0: f64, kappa: f64, mu: f64) -> f64 {
    a0 * kappa / mu
}

/// Weight fields induced by a signal.
#[derive(Debug, Clone)]
pub struct WeightField {
    /// `𝔢 = exp(κh/μ)`.
    pub e: FastField,
    /// `ρ = 1/⟨𝔢⟩^ξ`.
    pub rho: TauProfile,
    /// `𝔢_* = ρ𝔢`.
    pub estar: FastField,
    /// `⟨𝔢⟩^ξ`.
    pub mean_e: TauProfile,
    /// `⟨𝔢⁻¹⟩^ξ`.
    pub mean_inv_e: TauProfile,
    pub kappa: f64,
    pub mu: f64,
    /// Effective amplitude `a₀κ/μ`.
    pub effective_amplitude: f64,
}

impl WeightField {
    pub fn grid(&self) -> &TorusGrid {
        self.e.grid()
    }

    /// Weights built directly from samples of `κh/μ`.
    pub fn from_log_weight(log_e: &FastField, kappa: f64, mu: f64) -> WeightField {
        let e = log_e.map(f64::exp);
        let mean_e = e.average_spatial();
        let mean_inv_e = e.map(|v| 1.0 / v).average_spatial();
        let rho = mean_e.map(|v| 1.0 / v);
        let estar = e.mul_tau(&rho);
        let amp = log_e.max_abs();
        WeightField {
            e,
            rho,
            estar,
            mean_e,
            mean_inv_e,
            kappa,
            mu,
            effective_amplitude: amp,
        }
    }

    /// `⟨𝔢⟩^ξ⟨𝔢⁻¹⟩^ξ` per τ; at least one by convexity.
    pub fn convexity_product(&self) -> TauProfile {
        let v = self
            .mean_e
            .values()
            .iter()
            .zip(self.mean_inv_e.values())
            .map(|(a, b)| a * b)
            .collect();
        TauProfile::new(self.mean_e.period(), v).expect("finite")
    }

    /// `∂τ 𝔢_*`.
    pub fn estar_tau(&self) -> FastField {
        self.estar.fast_dtau()
    }
}

/// Build `𝔢`, `ρ`, `𝔢_*` from a signal.
pub fn build_weight(h: &SignalSpec, kappa: f64, mu: f64, grid: &TorusGrid) -> Result<WeightField> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::param("kappa", format!("must be positive, got {kappa}")));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::param("mu", format!("must be positive, got {mu}")));
    }
    let mut field = h.realize(grid)?;
    let mean = field.average_full();
    if h.is_analytic() {
        if mean.abs() > MEAN_TOL {
            return Err(Error::InvalidSignal(format!(
                "signal mean {mean:.3e} is not zero"
            )));
        }
    } else if mean.abs() < TABULATED_RECENTRE_TOL {
        field = field.map(|v| v - mean);
    } else {
        return Err(Error::InvalidSignal(format!(
            "tabulated signal mean {mean:.3e} exceeds {TABULATED_RECENTRE_TOL:.0e}"
        )));
    }
    let ratio = kappa / mu;
    let mut w = WeightField::from_log_weight(&field.scale(ratio), kappa, mu);
    w.effective_amplitude = effective_amplitude(h.amplitude(), kappa, mu);
    Ok(w)
}

/// Report-only diagnostics of a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDiagnostics {
    pub mean: f64,
    /// Spectral energy beyond two thirds of the grid's resolvable band,
    /// measured on a twice finer sampling for analytic signals.
    pub tail_fraction: f64,
    pub e_min: f64,
    pub e_max: f64,
    /// True when the tail fraction exceeds `1e-6`.
    pub under_resolved: bool,
}

/// Diagnose mean, resolution and weight range (using `κ/μ = 1`).
pub fn validate_signal(h: &SignalSpec, grid: &TorusGrid) -> Result<SignalDiagnostics> {
    let field = h.realize(grid)?;
    let mean = field.average_full();
    let tail_fraction = if h.is_analytic() {
        let fine = grid.refined(2);
        let ff = FastField::from_fn(&fine, |xi, tau| h.eval(&fine, xi, tau).unwrap_or(0.0));
        ff.tail_energy_fraction_against(&grid.full_shape())
    } else {
        field.tail_energy_fraction()
    };
    let e = field.map(f64::exp);
    Ok(SignalDiagnostics {
        mean,
        tail_fraction,
        e_min: e.min(),
        e_max: e.max(),
        under_resolved: tail_fraction > 1e-6,
    })
}

/// A signal whose amplitude is modulated by a slow field `A(x)`:
/// `h(x, ξ, τ) = A(x) h₀(ξ, τ)`.
#[derive(Debug, Clone)]
pub struct ModulatedSignal {
    pub base: SignalSpec,
    pub amplitude: SpatialField,
}

impl ModulatedSignal {
    pub fn slow_grid(&self) -> &SpatialGrid {
        self.amplitude.grid()
    }

    /// Signal frozen at slow node `i`.
    pub fn at_node(&self, i: usize) -> SignalSpec {
        self.base.scaled(self.amplitude.values()[i])
    }

    /// One weight field per slow node.
    pub fn weights(&self, kappa: f64, mu: f64, grid: &TorusGrid) -> Result<Vec<WeightField>> {
        (0..self.amplitude.values().len())
            .map(|i| build_weight(&self.at_node(i), kappa, mu, grid))
            .collect()
    }

    /// `ln⟨𝔢⟩^ξ` at every slow node, per τ node (outer index: slow node).
    pub fn log_mean_e(&self, kappa: f64, mu: f64, grid: &TorusGrid) -> Result<Vec<TauProfile>> {
        Ok(self
            .weights(kappa, mu, grid)?
            .into_iter()
            .map(|w| w.mean_e.map(f64::ln))
            .collect())
    }
}

/// Power series `Σ (a/2)^{2m}/(m!)²` for the modified Bessel function `I₀`.
pub fn bessel_i0(a: f64) -> f64 {
    let q = 0.25 * a * a;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..200 {
        term *= q / (m as f64 * m as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid1() -> TorusGrid {
        TorusGrid::uniform(1, 32, 2.0 * PI, 16).unwrap()
    }

    #[test]
    fn zero_signal_gives_unit_weights() {
        let w = build_weight(&SignalSpec::zero(), 1.0, 1.0, &grid1()).unwrap();
        assert!(w.e.values().iter().all(|&v| v == 1.0));
        assert!(w.rho.values().iter().all(|&v| v == 1.0));
        assert!(w.estar.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cosine_weight_means_are_i0() {
        let i0 = bessel_i0(1.0);
        assert!((i0 - 1.2660658777520082).abs() < 1e-15);
        for phase in [0.0, 0.3, 2.0] {
            let w = build_weight(&SignalSpec::cosine(1.0, phase), 1.0, 1.0, &grid1()).unwrap();
            for (a, b) in w.mean_e.values().iter().zip(w.mean_inv_e.values()) {
                assert!((a - i0).abs() < 1e-10);
                assert!((b - i0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn effective_amplitude_example() {
        assert_eq!(effective_amplitude(2.0, 0.5, 1.0), 1.0);
        let w = build_weight(&SignalSpec::cosine(2.0, 0.0), 0.5, 1.0, &grid1()).unwrap();
        assert_eq!(w.effective_amplitude, 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = grid1();
        assert!(build_weight(&SignalSpec::cosine(1.0, 0.0), 0.0, 1.0, &g).is_err());
        assert!(build_weight(&SignalSpec::cosine(1.0, 0.0), 1.0, -1.0, &g).is_err());
        // cos² has mean 1/2
        let biased = SignalSpec::CosineProduct {
            amplitude: 1.0,
            factors: vec![
                CosineFactor { axis: 1, mode: 1, phase: 0.0 },
                CosineFactor { axis: 1, mode: 1, phase: 0.0 },
            ],
        };
        assert!(matches!(build_weight(&biased, 1.0, 1.0, &g), Err(Error::InvalidSignal(_))));
        let bad_dir = SignalSpec::traveling_wave(1.0, vec![0.9], 1.0);
        assert!(build_weight(&bad_dir, 1.0, 1.0, &g).is_err());
    }

    #[test]
    fn tabulated_mean_policy() {
        let g = grid1();
        let base = SignalSpec::cosine(1.0, 0.0).realize(&g).unwrap();
        let small = SignalSpec::Tabulated {
            values: base.values().iter().map(|v| v + 1e-8).collect(),
        };
        let w = build_weight(&small, 1.0, 1.0, &g).unwrap();
        assert!((w.mean_e.values()[0] - bessel_i0(1.0)).abs() < 1e-7);
        let large = SignalSpec::Tabulated {
            values: base.values().iter().map(|v| v + 1e-3).collect(),
        };
        assert!(build_weight(&large, 1.0, 1.0, &g).is_err());
    }

    #[test]
    fn diagnostics() {
        let g = grid1();
        let d = validate_signal(&SignalSpec::cosine(1.0, 0.0), &g).unwrap();
        assert!(d.mean.abs() < 1e-14 && d.tail_fraction < 1e-20 && !d.under_resolved);
        let tw = TorusGrid::new(vec![2.0 * PI], vec![16], 2.0 * PI, 16).unwrap();
        let d = validate_signal(&SignalSpec::traveling_wave(1.0, vec![1.0], 1.0), &tw).unwrap();
        assert!(d.mean.abs() < 1e-14);
        let high = SignalSpec::CosineProduct {
            amplitude: 1.0,
            factors: vec![CosineFactor { axis: 1, mode: 16, phase: 0.1 }],
        };
        let d = validate_signal(&high, &g).unwrap();
        assert!(d.tail_fraction > 1e-6 && d.under_resolved);
    }

    #[test]
    fn analytic_gradient_matches_spectral() {
        let g = TorusGrid::new(vec![10.0 * PI, 10.0 * PI], vec![32, 32], PI, 16).unwrap();
        let h = SignalSpec::TravelingWave {
            amplitude: 0.7,
            direction: vec![0.6, 0.8],
            speed: 2.0,
            phase: 0.4,
            harmonics: vec![
                Harmonic { k: 1, cos: 1.0, sin: 0.2 },
                Harmonic { k: 2, cos: 0.0, sin: 0.3 },
            ],
        };
        let f = h.realize(&g).unwrap();
        let grads = f.fast_gradient();
        let dt = f.fast_dtau();
        for idx in [0usize, 77, 300, 5000] {
            let tj = idx / g.slice_len();
            let xi = g.spatial().coords(idx % g.slice_len());
            let (gr, d) = h.eval_grad(&g, &xi, g.tau_coord(tj)).unwrap();
            assert!((gr[0] - grads[0].values()[idx]).abs() < 1e-10);
            assert!((gr[1] - grads[1].values()[idx]).abs() < 1e-10);
            assert!((d - dt.values()[idx]).abs() < 1e-10);
        }
        let c = SignalSpec::CosineProduct {
            amplitude: 0.5,
            factors: vec![
                CosineFactor { axis: 0, mode: 1, phase: 0.2 },
                CosineFactor { axis: 2, mode: 2, phase: 0.0 },
            ],
        };
        let f = c.realize(&g).unwrap();
        let grads = f.fast_gradient();
        let dt = f.fast_dtau();
        for idx in [3usize, 999, 4000] {
            let tj = idx / g.slice_len();
            let xi = g.spatial().coords(idx % g.slice_len());
            let (gr, d) = c.eval_grad(&g, &xi, g.tau_coord(tj)).unwrap();
            assert!(gr[0].abs() < 1e-14);
            assert!((gr[1] - grads[1].values()[idx]).abs() < 1e-10);
            assert!((d - dt.values()[idx]).abs() < 1e-10);
        }
    }

    #[test]
    fn modulated_signal_builds_per_node() {
        let slow = SpatialGrid::new(vec![1.0], vec![4]).unwrap();
        let m = ModulatedSignal {
            base: SignalSpec::cosine(1.0, 0.0),
            amplitude: SpatialField::from_fn(&slow, |x| 1.0 + x[0]),
        };
        let ws = m.weights(1.0, 1.0, &grid1()).unwrap();
        assert_eq!(ws.len(), 4);
        assert!((ws[2].mean_e.values()[0] - bessel_i0(1.5)).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn weight_invariants(a in 0.0f64..2.5, kappa in 0.1f64..3.0, mu in 0.1f64..3.0, ph in 0.0f64..6.3) {
            let g = TorusGrid::new(vec![2.0 * PI, 4.0], vec![32, 16], 3.0, 8).unwrap();
            let h = SignalSpec::CosineProduct {
                amplitude: a * mu / kappa,
                factors: vec![
                    CosineFactor { axis: 1, mode: 1, phase: ph },
                    CosineFactor { axis: 0, mode: 1, phase: 0.0 },
                ],
            };
            let w = build_weight(&h, kappa, mu, &g).unwrap();
            prop_assert!(w.e.min() > 0.0);
            for v in w.estar.average_spatial().values() {
                prop_assert!((v - 1.0).abs() < 1e-12);
            }
            for v in w.convexity_product().values() {
                prop_assert!(*v >= 1.0 - 1e-14);
            }
            let unit = build_weight(&h.scaled(kappa / mu), 1.0, 1.0, &g).unwrap();
            for (x, y) in w.e.values().iter().zip(unit.e.values()) {
                prop_assert!((x - y).abs() <= 1e-13 * x.abs().max(1.0));
            }
            for (x, y) in w.estar.values().iter().zip(unit.estar.values()) {
                prop_assert!((x - y).abs() <= 1e-13 * x.abs().max(1.0));
            }
        }
    }
}
