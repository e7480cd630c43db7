//! Built-in predator–prey kinetics `f(p, s)`, `g(p, s)` with analytic
//! partial derivatives, equilibrium search and structural predicates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::signal::{build_weight, SignalSpec};
use crate::torus_field::TorusGrid;

/// Anything exposing a per-capita reaction pair `(f, g)` with its Jacobian.
pub trait Reaction {
    /// `(f, g)` at `(p, s)`.
    fn fg(&self, p: f64, s: f64) -> Result<(f64, f64)>;

    /// `[[f_p, f_s], [g_p, g_s]]` at `(p, s)`.
    fn fg_jacobian(&self, p: f64, s: f64) -> Result<[[f64; 2]; 2]>;

    /// Linearization of `(pf, sg)`:
    /// `a₁₁ = f + pf_p`, `a₁₂ = pf_s`, `a₂₁ = sg_p`, `a₂₂ = g + sg_s`.
    fn linearization(&self, p: f64, s: f64) -> Result<[[f64; 2]; 2]> {
        let (f, g) = self.fg(p, s)?;
        let [[fp, fs], [gp, gs]] = self.fg_jacobian(p, s)?;
        Ok([[f + p * fp, p * fs], [s * gp, g + s * gs]])
    }
}

/// Reaction models. Every model has the form `g = g₀(s) − g₁(s)p/s`
/// except Arditi–Ginzburg, which is ratio dependent.
#[derive(Debug, Clone, PartialEq)]
pub enum KineticsModel {
    /// `f = γs − β`, `g = 1 − s − p`.
    LotkaVolterra { gamma: f64, beta: f64 },
    /// `g₁ = αsⁿ/(1 + αsⁿ)`, `f = γg₁ − β`, `g = 1 − s − g₁p/s`.
    Holling {
        alpha: f64,
        exponent: f64,
        gamma: f64,
        beta: f64,
    },
    /// `f = γs/(s+p) − β`, `g = 1 − s − rp/(s+p)`.
    ArditiGinzburg { gamma: f64, beta: f64, r: f64 },
}

fn get(params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    params
        .get(key)
        .copied()
        .ok_or_else(|| Error::param(key, "missing"))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::param(name, format!("must be positive, got {v}")))
    }
}

/// Build a model from its name and a parameter table.
///
/// Names: `lotka-volterra` (`gamma`, `beta`), `holling-ii` and `holling-iii`
/// (`alpha`, `gamma`, `beta`), `holling` (plus `exponent`),
/// `arditi-ginzburg` (`gamma`, `beta`, `r`).
pub fn make_model(name: &str, params: &BTreeMap<String, f64>) -> Result<KineticsModel> {
    let allowed: &[&str] = match name {
        "lotka-volterra" => &["gamma", "beta"],
        "holling-ii" | "holling-iii" => &["alpha", "gamma", "beta"],
        "holling" => &["alpha", "exponent", "gamma", "beta"],
        "arditi-ginzburg" => &["gamma", "beta", "r"],
        _ => return Err(Error::UnknownModel(name.to_string())),
    };
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::param(k.clone(), format!("not a parameter of `{name}`")));
    }
    let p = |k: &str| get(params, k).and_then(|v| positive(k, v));
    Ok(match name {
        "lotka-volterra" => KineticsModel::LotkaVolterra {
            gamma: p("gamma")?,
            beta: p("beta")?,
        },
        "holling-ii" | "holling-iii" | "holling" => KineticsModel::Holling {
            alpha: p("alpha")?,
            exponent: match name {
                "holling-ii" => 1.0,
                "holling-iii" => 2.0,
                _ => {
                    let n = p("exponent")?;
                    if n < 1.0 {
                        return Err(Error::param("exponent", "must be at least 1"));
                    }
                    n
                }
            },
            gamma: p("gamma")?,
            beta: p("beta")?,
        },
        _ => KineticsModel::ArditiGinzburg {
            gamma: p("gamma")?,
            beta: p("beta")?,
            r: p("r")?,
        },
    })
}

impl KineticsModel {
    pub fn name(&self) -> &'static str {
        match self {
            KineticsModel::LotkaVolterra { .. } => "lotka-volterra",
            KineticsModel::Holling { exponent, .. } if *exponent == 1.0 => "holling-ii",
            KineticsModel::Holling { exponent, .. } if *exponent == 2.0 => "holling-iii",
            KineticsModel::Holling { .. } => "holling",
            KineticsModel::ArditiGinzburg { .. } => "arditi-ginzburg",
        }
    }

    /// Parameters as a name → value table.
    pub fn params(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match *self {
            KineticsModel::LotkaVolterra { gamma, beta } => vec![("gamma", gamma), ("beta", beta)],
            KineticsModel::Holling {
                alpha,
                exponent,
                gamma,
                beta,
            } => vec![
                ("alpha", alpha),
                ("exponent", exponent),
                ("gamma", gamma),
                ("beta", beta),
            ],
            KineticsModel::ArditiGinzburg { gamma, beta, r } => {
                vec![("gamma", gamma), ("beta", beta), ("r", r)]
            }
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// `f` independent of `p` and `g` affine in `p`.
    pub fn p_linear(&self) -> bool {
        !matches!(self, KineticsModel::ArditiGinzburg { .. })
    }

    fn check_domain(&self, p: f64, s: f64) -> Result<()> {
        let ok = p.is_finite()
            && s.is_finite()
            && p >= 0.0
            && match self {
                KineticsModel::LotkaVolterra { .. } => s >= 0.0,
                KineticsModel::Holling { .. } => s > 0.0,
                KineticsModel::ArditiGinzburg { .. } => s >= 0.0 && s + p > 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::OutsideDomain { p, s })
        }
    }

    /// Holling response `g₁(s)` and its derivative.
    fn holling_parts(alpha: f64, n: f64, s: f64) -> (f64, f64) {
        let sn = s.powf(n);
        let g1 = alpha * sn / (1.0 + alpha * sn);
        let dg1 = alpha * n * s.powf(n - 1.0) / (1.0 + alpha * sn).powi(2);
        (g1, dg1)
    }

    /// `g₀(s)` and `g₁(s)` where the decomposition exists.
    pub fn decomposition(&self, s: f64) -> Result<(f64, f64)> {
        match *self {
            KineticsModel::LotkaVolterra { .. } => Ok((1.0 - s, s)),
            KineticsModel::Holling {
                alpha, exponent, ..
            } => Ok((1.0 - s, Self::holling_parts(alpha, exponent, s).0)),
            KineticsModel::ArditiGinzburg { .. } => {
                Err(Error::MissingDecomposition(self.name().into()))
            }
        }
    }

    /// Coexistence equilibrium in closed form where available.
    pub fn closed_form_equilibrium(&self) -> Option<(f64, f64)> {
        match *self {
            KineticsModel::LotkaVolterra { gamma, beta } => {
                let s = beta / gamma;
                Some((1.0 - s, s))
            }
            KineticsModel::ArditiGinzburg { gamma, beta, r } => {
                let sigma = beta / gamma;
                let s = 1.0 - r * (1.0 - sigma);
                Some((s * (1.0 - sigma) / sigma, s))
            }
            KineticsModel::Holling { .. } => None,
        }
    }
}

impl Reaction for KineticsModel {
    fn fg(&self, p: f64, s: f64) -> Result<(f64, f64)> {
        self.check_domain(p, s)?;
        Ok(match *self {
            KineticsModel::LotkaVolterra { gamma, beta } => (gamma * s - beta, 1.0 - s - p),
            KineticsModel::Holling {
                alpha,
                exponent,
                gamma,
                beta,
            } => {
                let (g1, _) = Self::holling_parts(alpha, exponent, s);
                (gamma * g1 - beta, 1.0 - s - g1 * p / s)
            }
            KineticsModel::ArditiGinzburg { gamma, beta, r } => {
                let q = s + p;
                (gamma * s / q - beta, 1.0 - s - r * p / q)
            }
        })
    }

    fn fg_jacobian(&self, p: f64, s: f64) -> Result<[[f64; 2]; 2]> {
        self.check_domain(p, s)?;
        Ok(match *self {
            KineticsModel::LotkaVolterra { gamma, .. } => [[0.0, gamma], [-1.0, -1.0]],
            KineticsModel::Holling {
                alpha,
                exponent,
                gamma,
                ..
            } => {
                let (g1, dg1) = Self::holling_parts(alpha, exponent, s);
                let d_ratio = (dg1 * s - g1) / (s * s);
                [[0.0, gamma * dg1], [-g1 / s, -1.0 - p * d_ratio]]
            }
            KineticsModel::ArditiGinzburg { gamma, r, .. } => {
                let q2 = (s + p) * (s + p);
                [
                    [-gamma * s / q2, gamma * p / q2],
                    [-r * s / q2, -1.0 + r * p / q2],
                ]
            }
        })
    }
}

/// A coexistence equilibrium `f(pₑ, sₑ) = g(pₑ, sₑ) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub p_e: f64,
    pub s_e: f64,
    /// Jacobian of `(pf, sg)` is well conditioned.
    pub nondegenerate: bool,
    pub residual: f64,
    pub iterations: usize,
}

pub const EQUILIBRIUM_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 50;

fn residual(r: &impl Reaction, p: f64, s: f64) -> Result<f64> {
    let (f, g) = r.fg(p, s)?;
    Ok(f.abs().max(g.abs()))
}

/// Damped Newton iteration on `(f, g) = (0, 0)` from `guess`.
pub fn find_equilibrium(r: &impl Reaction, guess: (f64, f64)) -> Result<Equilibrium> {
    let (mut p, mut s) = guess;
    if !(p > 0.0 && s > 0.0) {
        return Err(Error::OutsideDomain { p, s });
    }
    let mut res = residual(r, p, s)?;
    let mut it = 0;
    while res >= EQUILIBRIUM_TOL {
        if it == MAX_NEWTON {
            return Err(Error::NonConvergence {
                solver: "equilibrium Newton",
                iterations: MAX_NEWTON,
                residual: res,
            });
        }
        it += 1;
        let (f, g) = r.fg(p, s)?;
        let [[a, b], [c, d]] = r.fg_jacobian(p, s)?;
        let det = a * d - b * c;
        if det == 0.0 || !det.is_finite() {
            return Err(Error::NonConvergence {
                solver: "equilibrium Newton (singular Jacobian)",
                iterations: it,
                residual: res,
            });
        }
        let dp = -(d * f - b * g) / det;
        let ds = -(a * g - c * f) / det;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let (np, ns) = (p + lambda * dp, s + lambda * ds);
            if np > 0.0 && ns > 0.0 {
                if let Ok(nr) = residual(r, np, ns) {
                    if nr < res || nr < EQUILIBRIUM_TOL {
                        p = np;
                        s = ns;
                        res = nr;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            if p < 1e-8 || s < 1e-8 {
                return Err(Error::BoundaryEquilibrium { p, s });
            }
            return Err(Error::NonConvergence {
                solver: "equilibrium Newton (line search)",
                iterations: it,
                residual: res,
            });
        }
    }
    if p < 1e-8 || s < 1e-8 {
        return Err(Error::BoundaryEquilibrium { p, s });
    }
    let j = r.linearization(p, s)?;
    let nondegenerate = condition_number(j) < 1e12;
    Ok(Equilibrium {
        p_e: p,
        s_e: s,
        nondegenerate,
        residual: res,
        iterations: it,
    })
}

/// 2-norm condition number of a 2×2 matrix.
fn condition_number(m: [[f64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = m;
    let fro2 = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    if det == 0.0 {
        return f64::INFINITY;
    }
    // σ₁/σ₂ from σ₁² + σ₂² = ‖m‖_F², σ₁σ₂ = |det|
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let s1 = ((fro2 + disc) / 2.0).sqrt();
    let s2 = det / s1;
    s1 / s2
}

/// Quasi-equilibria along a family of signals of increasing effective
/// amplitude.
#[derive(Debug, Clone)]
pub struct Branch {
    /// `(a, equilibrium)` for every amplitude reached.
    pub points: Vec<(f64, Equilibrium)>,
    /// Failure at the first amplitude that could not be continued.
    pub failure: Option<BranchFailure>,
}

#[derive(Debug, Clone)]
pub struct BranchFailure {
    pub last_good_a: Option<f64>,
    pub failed_a: f64,
    pub reason: String,
}

/// Continue the quasi-equilibrium in the effective amplitude `a`.
/// The signal is rescaled so that `κh/μ` has amplitude `a`.
pub fn quasi_equilibrium_branch(
    model: &KineticsModel,
    signal: &SignalSpec,
    grid: &TorusGrid,
    a_values: &[f64],
    guess: (f64, f64),
) -> Result<Branch> {
    if a_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("a_values", "must be sorted ascending"));
    }
    let mut points = Vec::new();
    let mut warm = guess;
    for &a in a_values {
        let step = build_weight(&signal.with_amplitude(a), 1.0, 1.0, grid)
            .map(|w| crate::effective::AveragedKinetics::new(&w, model.clone()))
            .and_then(|k| find_equilibrium(&k, warm));
        match step {
            Ok(eq) => {
                warm = (eq.p_e, eq.s_e);
                points.push((a, eq));
            }
            Err(e) => {
                return Ok(Branch {
                    failure: Some(BranchFailure {
                        last_good_a: points.last().map(|(a, _)| *a),
                        failed_a: a,
                        reason: e.to_string(),
                    }),
                    points,
                })
            }
        }
    }
    Ok(Branch {
        points,
        failure: None,
    })
}

/// Evaluate `g₀ₛ − (sg₀/g₁)(g₁/s)ₛ < 0` at each sample with `g₀(s) > 0`.
/// Samples where `g₀ ≤ 0` are reported as `None`.
pub fn check_pcr_condition(model: &KineticsModel, s_values: &[f64]) -> Result<Vec<Option<bool>>> {
    model.decomposition(0.5)?;
    Ok(s_values
        .iter()
        .map(|&s| {
            let (g0, g1) = model.decomposition(s).ok()?;
            if g0 <= 0.0 || s <= 0.0 {
                return None;
            }
            let (g0s, ratio_s) = match *model {
                KineticsModel::LotkaVolterra { .. } => (-1.0, 0.0),
                KineticsModel::Holling {
                    alpha, exponent, ..
                } => {
                    let (g1, dg1) = KineticsModel::holling_parts(alpha, exponent, s);
                    (-1.0, (dg1 * s - g1) / (s * s))
                }
                KineticsModel::ArditiGinzburg { .. } => unreachable!(),
            };
            Some(g0s - s * g0 / g1 * ratio_s < 0.0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn lv() -> KineticsModel {
        make_model("lotka-volterra", &params(&[("gamma", 2.0), ("beta", 1.0)])).unwrap()
    }

    fn ag() -> KineticsModel {
        make_model(
            "arditi-ginzburg",
            &params(&[("gamma", 2.0), ("beta", 1.0), ("r", 1.5)]),
        )
        .unwrap()
    }

    fn holling(alpha: f64, n: f64) -> KineticsModel {
        KineticsModel::Holling {
            alpha,
            exponent: n,
            gamma: 3.0,
            beta: 1.0,
        }
    }

    fn all_models() -> Vec<KineticsModel> {
        vec![lv(), ag(), holling(0.5, 1.0), holling(2.0, 2.0), holling(1.3, 1.7)]
    }

    #[test]
    fn make_model_examples() {
        let m = lv();
        assert_eq!(m.fg(0.3, 0.5).unwrap().0, 0.0);
        assert!(matches!(make_model("foo", &BTreeMap::new()), Err(Error::UnknownModel(_))));
        assert!(make_model("lotka-volterra", &params(&[("gamma", -1.0), ("beta", 1.0)])).is_err());
        assert!(make_model("lotka-volterra", &params(&[("gamma", 1.0)])).is_err());
        assert!(make_model("lotka-volterra", &params(&[("gamma", 1.0), ("beta", 1.0), ("x", 1.0)])).is_err());
        assert!(matches!(ag().fg(0.0, 0.0), Err(Error::OutsideDomain { .. })));
        assert!(ag().p_linear() == false && lv().p_linear() && holling(1.0, 1.0).p_linear());
    }

    fn fd_check(m: &KineticsModel, p: f64, s: f64) {
        let h = 1e-5;
        let j = m.fg_jacobian(p, s).unwrap();
        let (fpp, gpp) = m.fg(p + h, s).unwrap();
        let (fpm, gpm) = m.fg(p - h, s).unwrap();
        let (fsp, gsp) = m.fg(p, s + h).unwrap();
        let (fsm, gsm) = m.fg(p, s - h).unwrap();
        let fd = [
            [(fpp - fpm) / (2.0 * h), (fsp - fsm) / (2.0 * h)],
            [(gpp - gpm) / (2.0 * h), (gsp - gsm) / (2.0 * h)],
        ];
        for i in 0..2 {
            for k in 0..2 {
                let scale = j[i][k].abs().max(1.0);
                assert!(
                    (j[i][k] - fd[i][k]).abs() < 1e-6 * scale,
                    "{} at ({p},{s}) entry {i}{k}: {} vs {}",
                    m.name(),
                    j[i][k],
                    fd[i][k]
                );
            }
        }
    }

    #[test]
    fn holling_partials_match_finite_differences() {
        for &(p, s) in &[(0.2, 0.3), (1.0, 0.7), (2.0, 1.5)] {
            let m = holling(1.5, 1.0);
            let h = 1e-5;
            let j = m.fg_jacobian(p, s).unwrap();
            let fd = (m.fg(p, s + h).unwrap().0 - m.fg(p, s - h).unwrap().0) / (2.0 * h);
            assert!((j[0][1] - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn equilibria() {
        let e = find_equilibrium(&lv(), (0.3, 0.8)).unwrap();
        assert!((e.p_e - 0.5).abs() < 1e-12 && (e.s_e - 0.5).abs() < 1e-12);
        assert!(e.nondegenerate);
        let a = find_equilibrium(&ag(), (0.5, 0.5)).unwrap();
        assert!(a.residual < 1e-12);
        let (pc, sc) = ag().closed_form_equilibrium().unwrap();
        assert!((a.p_e - pc).abs() < 1e-10 && (a.s_e - sc).abs() < 1e-10);
        assert!((pc - 0.25).abs() < 1e-15 && (sc - 0.25).abs() < 1e-15);
        let lin = ag().linearization(pc, sc).unwrap();
        let expect = [[-0.5, 0.5], [-0.375, 0.125]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((lin[i][k] - expect[i][k]).abs() < 1e-14);
            }
        }
        let h = find_equilibrium(&KineticsModel::Holling { alpha: 0.5, exponent: 1.0, gamma: 4.0, beta: 1.0 }, (0.5, 0.5)).unwrap();
        assert!((h.s_e - 2.0 / 3.0).abs() < 1e-12 && (h.p_e - 8.0 / 9.0).abs() < 1e-12);
        assert!(h.residual < 1e-12);
        assert!(find_equilibrium(&lv(), (-1.0, 0.5)).is_err());
        // no coexistence for β > γ
        let dead = KineticsModel::LotkaVolterra { gamma: 1.0, beta: 2.0 };
        assert!(find_equilibrium(&dead, (0.5, 0.5)).is_err());
    }

    #[test]
    fn pcr_condition() {
        let s: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        assert!(check_pcr_condition(&lv(), &s).unwrap().iter().all(|v| *v == Some(true)));
        assert!(check_pcr_condition(&holling(0.5, 1.0), &s)
            .unwrap()
            .iter()
            .all(|v| *v == Some(true)));
        assert!(check_pcr_condition(&holling(2.0, 1.0), &s)
            .unwrap()
            .iter()
            .any(|v| *v == Some(false)));
        assert!(matches!(
            check_pcr_condition(&ag(), &s),
            Err(Error::MissingDecomposition(_))
        ));
        assert_eq!(check_pcr_condition(&lv(), &[1.5]).unwrap(), vec![None]);
    }

    proptest! {
        #[test]
        fn partials_agree_with_finite_differences(p in 0.05f64..3.0, s in 0.05f64..3.0) {
            for m in all_models() {
                fd_check(&m, p, s);
            }
        }

        #[test]
        fn p_linear_models_are_affine_in_p(p1 in 0.0f64..3.0, p2 in 0.0f64..3.0, s in 0.05f64..3.0) {
            for m in all_models().into_iter().filter(|m| m.p_linear()) {
                let (f1, g1) = m.fg(p1, s).unwrap();
                let (f2, g2) = m.fg(p2, s).unwrap();
                let (fm, gm) = m.fg(0.5 * (p1 + p2), s).unwrap();
                prop_assert!((f1 - f2).abs() < 1e-14 && (fm - f1).abs() < 1e-14);
                prop_assert!((gm - 0.5 * (g1 + g2)).abs() < 1e-12);
            }
        }
    }
}
