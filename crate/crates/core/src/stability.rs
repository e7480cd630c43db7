//! Linear stability of quasi-equilibria of the leading slow system.
//!
//! For a normal mode `exp(ik·x + λt)` the linearization is the 2×2 complex
//! matrix
//!
//! ```text
//! A = [ ā₁₁ − μ̂ − iĉ   ā₁₂ + χ̂ ]
//!     [ ā₂₁            ā₂₂ − δ̂ ]
//! ```
//!
//! and the number of sign changes in the triad `(1, Δ₂, Δ₄)` counts its
//! eigenvalues with positive real part.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Relative size below which a triad entry is treated as zero.
pub const NEUTRAL_TOL: f64 = 1e-12;
/// Real-part threshold for an unstable eigenvalue.
pub const UNSTABLE_TOL: f64 = 1e-12;

/// Hat parameters of one wave vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeParams {
    pub k: Vec<f64>,
    pub alpha: f64,
    pub kbar: Vec<f64>,
    pub mu_hat: f64,
    pub chi_hat: f64,
    pub delta_hat: f64,
    pub c_hat: f64,
}

/// `μ̂ = μk·D̄k`, `χ̂ = p̄ₑχk·D̄k`, `δ̂ = δ|k|²`, `ĉ = c̄·k`.
pub fn hat_params(
    k: &[f64],
    dbar: &DMatrix<f64>,
    cbar: &[f64],
    mu: f64,
    chi: f64,
    prey_diffusivity: f64,
    p_e: f64,
) -> Result<ModeParams> {
    let n = k.len();
    if dbar.nrows() != n || dbar.ncols() != n || cbar.len() != n {
        return Err(Error::GridMismatch("wave vector, D̄ and c̄ differ in dimension".into()));
    }
    if prey_diffusivity < 0.0 || chi < 0.0 || mu < 0.0 {
        return Err(Error::param("mu/chi/delta", "must be non-negative"));
    }
    let kv = DVector::from_column_slice(k);
    let kdk = kv.dot(&(dbar * &kv));
    let alpha = kv.norm();
    let kbar = if alpha > 0.0 {
        k.iter().map(|x| x / alpha).collect()
    } else {
        vec![0.0; n]
    };
    Ok(ModeParams {
        k: k.to_vec(),
        alpha,
        kbar,
        mu_hat: mu * kdk,
        chi_hat: p_e * chi * kdk,
        delta_hat: prey_diffusivity * alpha * alpha,
        c_hat: cbar.iter().zip(k).map(|(c, k)| c * k).sum(),
    })
}

impl ModeParams {
    /// Same mode with a different `ĉ`.
    pub fn with_c_hat(&self, c_hat: f64) -> Self {
        ModeParams {
            c_hat,
            ..self.clone()
        }
    }

    fn scale(&self, abar: &[[f64; 2]; 2]) -> f64 {
        [self.mu_hat, self.chi_hat, self.delta_hat, self.c_hat]
            .iter()
            .chain(abar.iter().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// The triad `(Δ₀, Δ₂, Δ₄)` and its sign-change count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriadResult {
    pub delta0: f64,
    pub delta2: f64,
    pub delta4: f64,
    pub sign_changes: usize,
    pub neutral: bool,
}

/// `Δ₂ = μ̂ + δ̂ − ā₁₁ − ā₂₂`,
/// `Δ₄ = (ĉ² + Δ₂²)(δ̂ − ā₂₂)(μ̂ − ā₁₁) − ā₂₁Δ₂²(ā₁₂ + χ̂)`.
pub fn triad(m: &ModeParams, abar: &[[f64; 2]; 2]) -> TriadResult {
    let x = m.mu_hat - abar[0][0];
    let y = m.delta_hat - abar[1][1];
    let d2 = x + y;
    let d4 = (m.c_hat * m.c_hat + d2 * d2) * y * x - abar[1][0] * d2 * d2 * (abar[0][1] + m.chi_hat);
    let s = m.scale(abar).max(f64::MIN_POSITIVE);
    let neutral = d2.abs() < NEUTRAL_TOL * s || d4.abs() < NEUTRAL_TOL * s.powi(4);
    let signs = [1.0f64, d2, d4];
    let sign_changes = signs
        .windows(2)
        .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
        .count();
    TriadResult {
        delta0: 1.0,
        delta2: d2,
        delta4: d4,
        sign_changes,
        neutral,
    }
}

/// Which precondition of the threshold lemma failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemmaFailure {
    /// `ā₁₁ā₂₂ − ā₂₁ā₁₂ > 0`
    Determinant,
    /// `ā₁₁ + ā₂₂ < 0`
    Trace,
    /// `ā₁₁ā₂₂ < 0`
    DiagonalProduct,
    /// `(δ̂ − ā₂₂)(μ̂ − ā₁₁) < 0`
    ShiftedProduct,
    /// `(δ̂ − ā₂₂)(μ̂ − ā₁₁) − ā₂₁(ā₁₂ + χ̂) > 0`
    ShiftedDeterminant,
    /// `μ̂, δ̂, χ̂ ≥ 0`
    Sign,
}

impl std::fmt::Display for LemmaFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LemmaFailure::Determinant => "a11*a22 - a21*a12 > 0",
            LemmaFailure::Trace => "a11 + a22 < 0",
            LemmaFailure::DiagonalProduct => "a11*a22 < 0",
            LemmaFailure::ShiftedProduct => "(dhat - a22)(muhat - a11) < 0",
            LemmaFailure::ShiftedDeterminant => "(dhat - a22)(muhat - a11) - a21(a12 + chihat) > 0",
            LemmaFailure::Sign => "muhat, dhat, chihat >= 0",
        };
        f.write_str(s)
    }
}

/// Check the lemma preconditions; `Ok(())` when all hold.
pub fn lemma_preconditions(m: &ModeParams, a: &[[f64; 2]; 2]) -> std::result::Result<(), LemmaFailure> {
    let x = m.mu_hat - a[0][0];
    let y = m.delta_hat - a[1][1];
    if a[0][0] * a[1][1] - a[1][0] * a[0][1] <= 0.0 {
        return Err(LemmaFailure::Determinant);
    }
    if a[0][0] + a[1][1] >= 0.0 {
        return Err(LemmaFailure::Trace);
    }
    if a[0][0] * a[1][1] >= 0.0 {
        return Err(LemmaFailure::DiagonalProduct);
    }
    if x * y >= 0.0 {
        return Err(LemmaFailure::ShiftedProduct);
    }
    if x * y - a[1][0] * (a[0][1] + m.chi_hat) <= 0.0 {
        return Err(LemmaFailure::ShiftedDeterminant);
    }
    if m.mu_hat < 0.0 || m.delta_hat < 0.0 || m.chi_hat < 0.0 {
        return Err(LemmaFailure::Sign);
    }
    Ok(())
}

/// `ĉ*² = −Δ₂²[(δ̂ − ā₂₂)(μ̂ − ā₁₁) − ā₂₁(ā₁₂ + χ̂)] / [(δ̂ − ā₂₂)(μ̂ − ā₁₁)]`,
/// or the failed precondition.
pub fn threshold_chat2(m: &ModeParams, a: &[[f64; 2]; 2]) -> std::result::Result<f64, LemmaFailure> {
    lemma_preconditions(m, a)?;
    let x = m.mu_hat - a[0][0];
    let y = m.delta_hat - a[1][1];
    let d2 = x + y;
    Ok(-d2 * d2 * (x * y - a[1][0] * (a[0][1] + m.chi_hat)) / (x * y))
}

/// Eigenvalues of the mode matrix and how many have `Re λ > 1e-12`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub eigenvalues: [Complex64; 2],
    pub unstable_count: usize,
}

/// The linearized 2×2 complex matrix of a normal mode.
pub fn mode_matrix(m: &ModeParams, a: &[[f64; 2]; 2]) -> [[Complex64; 2]; 2] {
    [
        [
            Complex64::new(a[0][0] - m.mu_hat, -m.c_hat),
            Complex64::new(a[0][1] + m.chi_hat, 0.0),
        ],
        [
            Complex64::new(a[1][0], 0.0),
            Complex64::new(a[1][1] - m.delta_hat, 0.0),
        ],
    ]
}

/// Independent check of the triad count by direct eigenvalue computation.
pub fn eigen_oracle(m: &ModeParams, a: &[[f64; 2]; 2]) -> OracleResult {
    let mm = mode_matrix(m, a);
    let tr = mm[0][0] + mm[1][1];
    let det = mm[0][0] * mm[1][1] - mm[0][1] * mm[1][0];
    let disc = (tr * tr - 4.0 * det).sqrt();
    // avoid cancellation in the smaller root
    let q = if (tr.conj() * disc).re >= 0.0 {
        (tr + disc) * 0.5
    } else {
        (tr - disc) * 0.5
    };
    let l1 = q;
    let l2 = if q.norm() > 0.0 { det / q } else { tr - q };
    let eigenvalues = [l1, l2];
    let unstable_count = eigenvalues.iter().filter(|l| l.re > UNSTABLE_TOL).count();
    OracleResult {
        eigenvalues,
        unstable_count,
    }
}

/// Largest real part among the mode's eigenvalues.
pub fn growth_rate(m: &ModeParams, a: &[[f64; 2]; 2]) -> f64 {
    let o = eigen_oracle(m, a);
    o.eigenvalues[0].re.max(o.eigenvalues[1].re)
}

/// Whether the stability inequalities `ā₁₁ ≤ 0, ā₂₂ ≤ 0, ā₂₁ ≤ 0, ā₁₂ ≥ 0`
/// hold with at least three strict.
pub fn sign_restrictions_hold(a: &[[f64; 2]; 2]) -> bool {
    let checks = [-a[0][0], -a[1][1], -a[1][0], a[0][1]];
    checks.iter().all(|&v| v >= 0.0) && checks.iter().filter(|&&v| v > 0.0).count() >= 3
}

/// Inputs of a wave-vector scan.
#[derive(Debug, Clone)]
pub struct ScanInputs {
    pub dbar: DMatrix<f64>,
    /// Drift for unit frequency; the drift at frequency `c` is `c·c̄₁`.
    pub cbar1: Vec<f64>,
    pub mu: f64,
    pub chi: f64,
    pub prey_diffusivity: f64,
    pub p_e: f64,
    pub abar: [[f64; 2]; 2],
    /// Unit directions `k̄`.
    pub directions: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub cs: Vec<f64>,
}

/// One `(direction, α, c)` evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub direction: usize,
    pub alpha: f64,
    pub c: f64,
    pub triad: TriadResult,
    pub unstable_count: usize,
    pub threshold: Option<f64>,
}

/// Threshold frequency `c*(k̄, α)` where the lemma applies.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub direction: usize,
    pub alpha: f64,
    pub lemma: std::result::Result<(), LemmaFailure>,
    /// `c̄₁·k`
    pub drift_projection: f64,
    pub c_star: Option<f64>,
}

/// Per-direction longwave behaviour of the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct LongwaveSummary {
    pub direction: usize,
    /// `c*` at `α₀`, `α₀/2`, `α₀/4` for the smallest scanned `α₀`.
    pub c_star: [Option<f64>; 3],
    /// Strictly increasing as `α` halves.
    pub diverges: bool,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub directions: Vec<Vec<f64>>,
    pub rows: Vec<ScanRow>,
    pub thresholds: Vec<ThresholdRow>,
    pub longwave: Vec<LongwaveSummary>,
    /// Triad and oracle counts agree on every non-neutral row.
    pub oracle_agreement: bool,
}

impl ScanInputs {
    fn mode(&self, kbar: &[f64], alpha: f64) -> Result<ModeParams> {
        let k: Vec<f64> = kbar.iter().map(|x| alpha * x).collect();
        hat_params(&k, &self.dbar, &self.cbar1, self.mu, self.chi, self.prey_diffusivity, self.p_e)
    }

    /// `c*(k̄, α)`, or the reason it does not exist.
    pub fn threshold(&self, d: usize, alpha: f64) -> Result<ThresholdRow> {
        let m1 = self.mode(&self.directions[d], alpha)?;
        let proj = m1.c_hat;
        let lemma = lemma_preconditions(&m1, &self.abar);
        let c_star = match (lemma, proj != 0.0) {
            (Ok(()), true) => threshold_chat2(&m1, &self.abar)
                .ok()
                .map(|c2| c2.sqrt() / proj.abs()),
            _ => None,
        };
        Ok(ThresholdRow {
            direction: d,
            alpha,
            lemma,
            drift_projection: proj,
            c_star,
        })
    }
}

/// Scan directions × α × c.
pub fn scan(inp: &ScanInputs) -> Result<StabilityReport> {
    for (i, d) in inp.directions.iter().enumerate() {
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::param(format!("directions[{i}]"), "must be a unit vector"));
        }
    }
    if inp.alphas.iter().chain(&inp.cs).any(|v| !v.is_finite()) {
        return Err(Error::param("scan grid", "must be finite"));
    }
    let mut thresholds = Vec::new();
    for d in 0..inp.directions.len() {
        for &alpha in &inp.alphas {
            thresholds.push(inp.threshold(d, alpha)?);
        }
    }
    let jobs: Vec<(usize, usize, f64)> = (0..inp.directions.len())
        .flat_map(|d| {
            let na = inp.alphas.len();
            (0..na).flat_map(move |ai| inp.cs.iter().map(move |&c| (d, ai, c)))
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(d, ai, c)| {
            let alpha = inp.alphas[ai];
            let m1 = inp.mode(&inp.directions[d], alpha)?;
            let m = m1.with_c_hat(c * m1.c_hat);
            let t = triad(&m, &inp.abar);
            let o = eigen_oracle(&m, &inp.abar);
            Ok(ScanRow {
                direction: d,
                alpha,
                c,
                triad: t,
                unstable_count: o.unstable_count,
                threshold: thresholds[d * inp.alphas.len() + ai].c_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let oracle_agreement = rows
        .iter()
        .filter(|r| !r.triad.neutral)
        .all(|r| r.triad.sign_changes == r.unstable_count);
    let a0 = inp.alphas.iter().copied().filter(|a| *a > 0.0).fold(f64::INFINITY, f64::min);
    let mut longwave = Vec::new();
    if a0.is_finite() {
        for d in 0..inp.directions.len() {
            let c: Vec<Option<f64>> = [a0, a0 / 2.0, a0 / 4.0]
                .iter()
                .map(|&a| inp.threshold(d, a).map(|t| t.c_star))
                .collect::<Result<_>>()?;
            let diverges = matches!((c[0], c[1], c[2]), (Some(x), Some(y), Some(z)) if y > x && z > y);
            longwave.push(LongwaveSummary {
                direction: d,
                c_star: [c[0], c[1], c[2]],
                diverges,
            });
        }
    }
    Ok(StabilityReport {
        directions: inp.directions.clone(),
        rows,
        thresholds,
        longwave,
        oracle_agreement,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl StabilityReport {
    /// Long-form rows
    /// `direction,k1..kn,alpha,c,delta2,delta4,sign_changes,unstable_count,neutral,threshold`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let n = self.directions.first().map_or(0, |d| d.len());
        let kcols: Vec<String> = (1..=n).map(|i| format!("kbar{i}")).collect();
        writeln!(
            out,
            "direction,{},alpha,c,delta2,delta4,sign_changes,unstable_count,neutral,threshold",
            kcols.join(",")
        )?;
        for r in &self.rows {
            let k: Vec<String> = self.directions[r.direction].iter().map(|x| x.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.direction,
                k.join(","),
                r.alpha,
                r.c,
                r.triad.delta2,
                r.triad.delta4,
                r.triad.sign_changes,
                r.unstable_count,
                r.triad.neutral,
                opt(r.threshold)
            )?;
        }
        Ok(())
    }

    /// Rows `direction,alpha,drift_projection,lemma,c_star`; `c_star` is
    /// empty where the lemma fails or the drift is orthogonal.
    pub fn write_thresholds_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "direction,alpha,drift_projection,lemma,c_star")?;
        for t in &self.thresholds {
            let lemma = match t.lemma {
                Ok(()) => "ok".to_string(),
                Err(e) => format!("fails: {e}"),
            };
            writeln!(
                out,
                "{},{},{},{},{}",
                t.direction,
                t.alpha,
                t.drift_projection,
                lemma,
                opt(t.c_star)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mode(mu: f64, chi: f64, delta: f64, c: f64) -> ModeParams {
        ModeParams {
            k: vec![1.0],
            alpha: 1.0,
            kbar: vec![1.0],
            mu_hat: mu,
            chi_hat: chi,
            delta_hat: delta,
            c_hat: c,
        }
    }

    const AG: [[f64; 2]; 2] = [[-0.5, 0.5], [-0.375, 0.125]];

    #[test]
    fn hat_param_examples() {
        let d = DMatrix::identity(2, 2);
        let m = hat_params(&[0.0, 0.0], &d, &[0.0, 0.0], 1.0, 2.0, 0.1, 0.5).unwrap();
        assert_eq!((m.mu_hat, m.chi_hat, m.c_hat), (0.0, 0.0, 0.0));
        let m = hat_params(&[0.6, 0.8], &d, &[0.0, 0.0], 1.5, 2.0, 0.0, 0.5).unwrap();
        assert!((m.mu_hat - 1.5).abs() < 1e-15 && (m.chi_hat - 1.0).abs() < 1e-15 && m.c_hat == 0.0);
        let d1 = DMatrix::from_element(1, 1, 0.6238603604320694);
        let m = hat_params(&[2.0], &d1, &[0.0], 1.0, 0.0, 0.0, 1.0).unwrap();
        assert!((m.mu_hat - 4.0 * 0.6238603604320694).abs() < 1e-14);
    }

    #[test]
    fn pure_diffusion_is_stable() {
        let t = triad(&mode(1.0, 0.0, 1.0, 0.0), &[[0.0; 2]; 2]);
        assert_eq!((t.delta0, t.delta2, t.delta4), (1.0, 2.0, 4.0));
        assert_eq!(t.sign_changes, 0);
        let o = eigen_oracle(&mode(1.0, 0.0, 1.0, 0.0), &[[0.0; 2]; 2]);
        assert_eq!(o.unstable_count, 0);
        let mut ev: Vec<f64> = o.eigenvalues.iter().map(|l| l.re).collect();
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev, vec![-1.0, -1.0]);
        let o = eigen_oracle(&mode(2.0, 0.0, 0.5, 0.0), &[[0.0; 2]; 2]);
        let mut ev: Vec<f64> = o.eigenvalues.iter().map(|l| l.re).collect();
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev, vec![-2.0, -0.5]);
    }

    #[test]
    fn threshold_is_root_and_flips_sign() {
        let m = mode(0.3, 0.4, 0.01, 0.0);
        let c2 = threshold_chat2(&m, &AG).unwrap();
        assert!(c2 > 0.0);
        let at = triad(&m.with_c_hat(c2.sqrt()), &AG);
        let scale = triad(&m.with_c_hat(2.0 * c2.sqrt()), &AG).delta4.abs();
        assert!(at.delta4.abs() < 1e-10 * scale);
        let below = triad(&m.with_c_hat((c2 * (1.0 - 1e-6)).sqrt()), &AG);
        let above = triad(&m.with_c_hat((c2 * (1.0 + 1e-6)).sqrt()), &AG);
        assert_eq!(below.sign_changes, 0);
        assert_eq!(above.sign_changes, 1);
        assert_eq!(eigen_oracle(&m.with_c_hat(1e3), &AG).unstable_count, 1);
        // bisection on the oracle
        let (mut lo, mut hi) = (0.0, 4.0 * c2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if growth_rate(&m.with_c_hat(f64::sqrt(mid)), &AG) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!(((lo + hi) / 2.0 - c2).abs() < 1e-6 * c2);
    }

    #[test]
    fn preconditions_are_reported() {
        let stable = [[-1.0, 0.5], [-0.5, -1.0]];
        assert_eq!(threshold_chat2(&mode(1.0, 0.0, 0.0, 0.0), &stable), Err(LemmaFailure::DiagonalProduct));
        assert_eq!(threshold_chat2(&mode(1.0, 0.0, 0.5, 0.0), &AG), Err(LemmaFailure::ShiftedProduct));
        let bad_det = [[-0.5, 0.0], [0.0, 0.125]];
        assert_eq!(threshold_chat2(&mode(1.0, 0.0, 0.0, 0.0), &bad_det), Err(LemmaFailure::Determinant));
    }

    #[test]
    fn scan_reports_thresholds() {
        let inp = ScanInputs {
            dbar: DMatrix::identity(2, 2) * 0.9,
            cbar1: vec![0.3, 0.0],
            mu: 1.0,
            chi: 2.0,
            prey_diffusivity: 0.0,
            p_e: 0.25,
            abar: AG,
            directions: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]],
            alphas: vec![0.2, 0.5, 1.0, 2.0],
            cs: vec![0.0, 1.0, 10.0, 100.0],
        };
        let r = scan(&inp).unwrap();
        assert!(r.oracle_agreement);
        for t in &r.thresholds {
            if t.direction == 1 {
                assert!(t.c_star.is_none());
            } else {
                assert!(t.c_star.is_some());
            }
        }
        assert!(r.longwave[0].diverges && r.longwave[2].diverges);
        assert!(!r.longwave[1].diverges);
        for &alpha in &inp.alphas {
            let par = inp.threshold(0, alpha).unwrap().c_star.unwrap();
            let obl = inp.threshold(2, alpha).unwrap().c_star.unwrap();
            assert!(par < obl);
        }
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 3 * 4 * 4);
        let mut buf = Vec::new();
        r.write_thresholds_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.lines().nth(5).unwrap().ends_with(','));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1024))]
        #[test]
        fn triad_matches_oracle(
            a11 in -2.0f64..2.0, a22 in -2.0f64..2.0, a12 in -2.0f64..2.0, a21 in -2.0f64..2.0,
            mu in 0.0f64..3.0, chi in 0.0f64..3.0, delta in 0.0f64..1.0, c in -20.0f64..20.0
        ) {
            let a = [[a11, a12], [a21, a22]];
            let m = mode(mu, chi, delta, c);
            let t = triad(&m, &a);
            let s = m.scale(&a);
            prop_assume!(t.delta2.abs() > 1e-9 * s && t.delta4.abs() > 1e-9 * s.powi(4));
            prop_assert_eq!(t.sign_changes, eigen_oracle(&m, &a).unstable_count);
        }

        #[test]
        fn sign_restrictions_imply_stability(
            a11 in -2.0f64..0.0, a22 in -2.0f64..0.0, a12 in 0.0f64..2.0, a21 in -2.0f64..0.0,
            mu in 0.0f64..3.0, chi in 0.0f64..3.0, c in -20.0f64..20.0, zero in 0usize..5
        ) {
            let mut a = [[a11, a12], [a21, a22]];
            match zero { 0 => a[0][0] = 0.0, 1 => a[1][1] = 0.0, 2 => a[1][0] = 0.0, 3 => a[0][1] = 0.0, _ => {} }
            prop_assume!(sign_restrictions_hold(&a));
            let m = mode(mu, chi, 0.0, c);
            prop_assert_eq!(eigen_oracle(&m, &a).unstable_count, 0);
        }
    }
}
