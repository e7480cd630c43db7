//! Smooth periodic functions of the fast variables `(ξ, τ)` sampled on a
//! uniform tensor grid, with spectral differentiation and the three
//! averaging operators (full, spatial, temporal).
//!
//! Storage is τ-major: each τ slice is a contiguous block of `Π nᵢ` samples
//! laid out row-major over `ξ₁..ξₙ`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{self, mode_number, Spectral};

/// Uniform periodic grid over `ξ ∈ 𝕋ⁿ` (also used for slow periodic domains).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    periods: Vec<f64>,
    points: Vec<usize>,
}

impl SpatialGrid {
    pub fn new(periods: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        if periods.is_empty() || periods.len() > 3 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1..=3, got {}",
                periods.len()
            )));
        }
        if periods.len() != points.len() {
            return Err(Error::InvalidGrid("periods and points differ in length".into()));
        }
        if let Some(l) = periods.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidGrid(format!("period {l} is not positive")));
        }
        if points.iter().any(|&n| n == 0) {
            return Err(Error::InvalidGrid("zero points on an axis".into()));
        }
        Ok(SpatialGrid { periods, points })
    }

    pub fn dim(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.points[axis] as f64
    }

    /// Cell volume of one sample.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Coordinates of the sample with flat index `flat`.
    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut rest = flat;
        let mut x = vec![0.0; self.dim()];
        for a in (0..self.dim()).rev() {
            let i = rest % self.points[a];
            rest /= self.points[a];
            x[a] = i as f64 * self.spacing(a);
        }
        x
    }

    pub(crate) fn spectral(&self) -> Spectral {
        Spectral::new(&self.points, &self.periods)
    }
}

/// Grid over the fast torus `𝕋ⁿ⁺¹ = 𝕋ⁿ_ξ × 𝕋¹_τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    xi: SpatialGrid,
    tau_period: f64,
    tau_points: usize,
}

impl TorusGrid {
    /// Every resolution must be even and at least 8.
    pub fn new(
        xi_periods: Vec<f64>,
        xi_points: Vec<usize>,
        tau_period: f64,
        tau_points: usize,
    ) -> Result<Self> {
        let xi = SpatialGrid::new(xi_periods, xi_points)?;
        if !(tau_period.is_finite() && tau_period > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "tau period {tau_period} is not positive"
            )));
        }
        for &n in xi.points().iter().chain(std::iter::once(&tau_points)) {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "resolution {n} must be even and >= 8"
                )));
            }
        }
        Ok(TorusGrid {
            xi,
            tau_period,
            tau_points,
        })
    }

    /// Isotropic grid with `2π`-periodic spatial axes.
    pub fn uniform(dim: usize, xi_points: usize, tau_period: f64, tau_points: usize) -> Result<Self> {
        TorusGrid::new(vec![2.0 * PI; dim], vec![xi_points; dim], tau_period, tau_points)
    }

    pub fn dim(&self) -> usize {
        self.xi.dim()
    }

    pub fn spatial(&self) -> &SpatialGrid {
        &self.xi
    }

    pub fn tau_period(&self) -> f64 {
        self.tau_period
    }

    pub fn tau_points(&self) -> usize {
        self.tau_points
    }

    pub fn slice_len(&self) -> usize {
        self.xi.len()
    }

    pub fn len(&self) -> usize {
        self.tau_points * self.slice_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tau_coord(&self, j: usize) -> f64 {
        j as f64 * self.tau_period / self.tau_points as f64
    }

    /// Same periods, every axis resolution multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> TorusGrid {
        TorusGrid {
            xi: SpatialGrid {
                periods: self.xi.periods.clone(),
                points: self.xi.points.iter().map(|n| n * factor).collect(),
            },
            tau_period: self.tau_period,
            tau_points: self.tau_points * factor,
        }
    }

    pub(crate) fn full_shape(&self) -> Vec<usize> {
        let mut s = vec![self.tau_points];
        s.extend_from_slice(self.xi.points());
        s
    }

    pub(crate) fn full_spectral(&self) -> Spectral {
        let mut periods = vec![self.tau_period];
        periods.extend_from_slice(self.xi.periods());
        Spectral::new(&self.full_shape(), &periods)
    }

    fn tau_spectral(&self) -> Spectral {
        Spectral::new(&[self.tau_points], &[self.tau_period])
    }
}

/// Function of `ξ` only: one τ slice, a `M^τ` average, or a slow field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl SpatialField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite sample".into()));
        }
        Ok(SpatialField { grid, values })
    }

    pub(crate) fn from_raw(grid: SpatialGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        SpatialField { grid, values }
    }

    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        SpatialField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn constant(grid: &SpatialGrid, c: f64) -> Self {
        SpatialField {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SpatialField::from_raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &SpatialField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        SpatialField::from_raw(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn gradient(&self) -> Vec<SpatialField> {
        let sp = self.grid.spectral();
        (0..self.grid.dim())
            .map(|a| SpatialField::from_raw(self.grid.clone(), sp.derivative(&self.values, a)))
            .collect()
    }

    pub fn divergence(components: &[SpatialField]) -> SpatialField {
        let grid = components[0].grid.clone();
        let sp = grid.spectral();
        let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (a, c) in components.iter().enumerate() {
            let f = sp.forward(&c.values);
            let k = sp.k_odd(a);
            sp.for_each_mode(|flat, idx| spec[flat] += f[flat] * Complex64::new(0.0, k[idx[a]]));
        }
        SpatialField::from_raw(grid, sp.inverse(spec))
    }

    pub fn laplacian(&self) -> SpatialField {
        SpatialField::from_raw(self.grid.clone(), self.grid.spectral().laplacian(&self.values))
    }

    /// Trigonometric interpolation at an arbitrary point.
    pub fn eval_at(&self, x: &[f64]) -> f64 {
        let sp = self.grid.spectral();
        let spec = sp.forward(&self.values);
        sp.interpolate(&spec, self.grid.periods(), x)
    }

    /// Product formed on a 3/2-padded grid and truncated back.
    pub fn dealiased_product(&self, other: &SpatialField) -> SpatialField {
        let n = self.grid.points();
        let padded = padded_shape(n);
        let a = spectral::resample(&self.values, n, &padded);
        let b = spectral::resample(&other.values, n, &padded);
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        SpatialField::from_raw(self.grid.clone(), spectral::resample(&prod, &padded, n))
    }

    /// Write `index columns..., value` rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let header: Vec<String> = (1..=self.grid.dim()).map(|a| format!("i_xi{a}")).collect();
        writeln!(w, "{},value", header.join(","))?;
        for (flat, v) in self.values.iter().enumerate() {
            let idx = unflatten(flat, self.grid.points());
            let cols: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            writeln!(w, "{},{}", cols.join(","), v)?;
        }
        Ok(())
    }
}

/// Function of `τ` only, e.g. a spatial average `M^ξ f`.
#[derive(Debug, Clone, PartialEq)]
pub struct TauProfile {
    period: f64,
    values: Vec<f64>,
}

impl TauProfile {
    pub fn new(period: f64, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite sample".into()));
        }
        Ok(TauProfile { period, values })
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64) -> f64) -> Self {
        TauProfile {
            period: grid.tau_period(),
            values: (0..grid.tau_points()).map(|j| f(grid.tau_coord(j))).collect(),
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        TauProfile {
            period: self.period,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn dtau(&self) -> TauProfile {
        let sp = Spectral::new(&[self.values.len()], &[self.period]);
        TauProfile {
            period: self.period,
            values: sp.derivative(&self.values, 0),
        }
    }

    pub fn eval_at(&self, tau: f64) -> f64 {
        let sp = Spectral::new(&[self.values.len()], &[self.period]);
        sp.interpolate(&sp.forward(&self.values), &[self.period], &[tau])
    }
}

/// Scalar field on the fast torus.
#[derive(Debug, Clone, PartialEq)]
pub struct FastField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl FastField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a torus grid of {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite sample".into()));
        }
        Ok(FastField { grid, values })
    }

    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        FastField { grid, values }
    }

    /// Sample `f(ξ, τ)` on the grid.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let m = grid.slice_len();
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.tau_points() {
            let tau = grid.tau_coord(j);
            for i in 0..m {
                values.push(f(&grid.spatial().coords(i), tau));
            }
        }
        FastField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        FastField {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Assemble from per-τ slices (one per τ node, in order).
    pub fn from_slices(grid: &TorusGrid, slices: Vec<SpatialField>) -> Result<Self> {
        if slices.len() != grid.tau_points() {
            return Err(Error::GridMismatch(format!(
                "{} slices for {} tau nodes",
                slices.len(),
                grid.tau_points()
            )));
        }
        let mut values = Vec::with_capacity(grid.len());
        for s in slices {
            if s.grid != *grid.spatial() {
                return Err(Error::GridMismatch("slice grid differs from torus grid".into()));
            }
            values.extend(s.values);
        }
        Ok(FastField {
            grid: grid.clone(),
            values,
        })
    }

    /// Extend a τ profile to a field constant in ξ.
    pub fn from_tau_profile(grid: &TorusGrid, p: &TauProfile) -> Self {
        let m = grid.slice_len();
        let values = p
            .values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, m))
            .collect();
        FastField {
            grid: grid.clone(),
            values,
        }
    }

    /// Extend a ξ profile to a field constant in τ.
    pub fn from_spatial(grid: &TorusGrid, f: &SpatialField) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.tau_points() {
            values.extend_from_slice(&f.values);
        }
        FastField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn slice_values(&self, j: usize) -> &[f64] {
        let m = self.grid.slice_len();
        &self.values[j * m..(j + 1) * m]
    }

    pub fn slice(&self, j: usize) -> SpatialField {
        SpatialField::from_raw(self.grid.spatial().clone(), self.slice_values(j).to_vec())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        FastField::from_raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &FastField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        FastField::from_raw(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &FastField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &FastField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &FastField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// Multiply slice `j` by `p[j]`.
    pub fn mul_tau(&self, p: &TauProfile) -> Self {
        let m = self.grid.slice_len();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| v * p.values[i / m])
            .collect();
        FastField::from_raw(self.grid.clone(), values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `M f`: mean over the whole torus.
    pub fn average_full(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `M^ξ f`: per-τ spatial mean.
    pub fn average_spatial(&self) -> TauProfile {
        let m = self.grid.slice_len();
        let values = self
            .values
            .chunks(m)
            .map(|c| c.iter().sum::<f64>() / m as f64)
            .collect();
        TauProfile {
            period: self.grid.tau_period(),
            values,
        }
    }

    /// `M^τ f`: per-ξ temporal mean.
    pub fn average_temporal(&self) -> SpatialField {
        let m = self.grid.slice_len();
        let nt = self.grid.tau_points();
        let mut acc = vec![0.0; m];
        for chunk in self.values.chunks(m) {
            for (a, v) in acc.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a /= nt as f64;
        }
        SpatialField::from_raw(self.grid.spatial().clone(), acc)
    }

    /// Spectral `∇_ξ`, slice by slice.
    pub fn fast_gradient(&self) -> Vec<FastField> {
        let sp = self.grid.spatial().spectral();
        let m = self.grid.slice_len();
        (0..self.grid.dim())
            .map(|a| {
                let mut out = Vec::with_capacity(self.values.len());
                for chunk in self.values.chunks(m) {
                    out.extend(sp.derivative(chunk, a));
                }
                FastField::from_raw(self.grid.clone(), out)
            })
            .collect()
    }

    /// Spectral `∇_ξ·`, slice by slice.
    pub fn fast_divergence(components: &[FastField]) -> FastField {
        let grid = components[0].grid.clone();
        let nt = grid.tau_points();
        let mut out = Vec::with_capacity(grid.len());
        for j in 0..nt {
            let slices: Vec<SpatialField> = components.iter().map(|c| c.slice(j)).collect();
            out.extend(SpatialField::divergence(&slices).values);
        }
        FastField::from_raw(grid, out)
    }

    /// Spectral `Δ_ξ`, slice by slice.
    pub fn fast_laplacian(&self) -> FastField {
        let sp = self.grid.spatial().spectral();
        let m = self.grid.slice_len();
        let mut out = Vec::with_capacity(self.values.len());
        for chunk in self.values.chunks(m) {
            out.extend(sp.laplacian(chunk));
        }
        FastField::from_raw(self.grid.clone(), out)
    }

    /// Spectral `∂_τ`.
    pub fn fast_dtau(&self) -> FastField {
        let sp = self.grid.full_spectral();
        FastField::from_raw(self.grid.clone(), sp.derivative(&self.values, 0))
    }

    /// Product formed on a 3/2-padded grid and truncated back.
    pub fn dealiased_product(&self, other: &FastField) -> FastField {
        let n = self.grid.full_shape();
        let padded = padded_shape(&n);
        let a = spectral::resample(&self.values, &n, &padded);
        let b = spectral::resample(&other.values, &n, &padded);
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        FastField::from_raw(self.grid.clone(), spectral::resample(&prod, &padded, &n))
    }

    /// Spectral interpolation onto a finer (or coarser) grid with equal periods.
    pub fn resample(&self, target: &TorusGrid) -> Result<FastField> {
        if target.spatial().periods() != self.grid.spatial().periods()
            || target.tau_period() != self.grid.tau_period()
        {
            return Err(Error::GridMismatch("periods differ".into()));
        }
        Ok(FastField::from_raw(
            target.clone(),
            spectral::resample(&self.values, &self.grid.full_shape(), &target.full_shape()),
        ))
    }

    /// Trigonometric interpolation in τ: the ξ profile at an arbitrary time.
    pub fn sample_tau(&self, tau: f64) -> SpatialField {
        let nt = self.grid.tau_points();
        let m = self.grid.slice_len();
        let sp = self.grid.tau_spectral();
        // weights w_j such that f(τ) = Σ_j w_j f_j, exact for band-limited data
        let weights: Vec<f64> = (0..nt)
            .map(|j| {
                let mut e = vec![0.0; nt];
                e[j] = 1.0;
                sp.interpolate(&sp.forward(&e), &[self.grid.tau_period()], &[tau])
            })
            .collect();
        let mut out = vec![0.0; m];
        for (j, w) in weights.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.slice_values(j)) {
                *o += w * v;
            }
        }
        SpatialField::from_raw(self.grid.spatial().clone(), out)
    }

    /// `mean(f²)` computed from the spectrum (Parseval).
    pub fn spectral_energy(&self) -> f64 {
        let sp = self.grid.full_spectral();
        let n = self.values.len() as f64;
        sp.forward(&self.values).iter().map(|c| c.norm_sqr()).sum::<f64>() / (n * n)
    }

    /// Fraction of spectral energy in modes above two thirds of the
    /// resolvable band on any axis.
    pub fn tail_energy_fraction(&self) -> f64 {
        self.tail_energy_fraction_against(&self.grid.full_shape())
    }

    /// As [`FastField::tail_energy_fraction`], with the band measured
    /// against a coarser reference resolution `(nτ, n₁, ..)`.
    pub(crate) fn tail_energy_fraction_against(&self, shape: &[usize]) -> f64 {
        let sp = self.grid.full_spectral();
        let own = self.grid.full_shape();
        let spec = sp.forward(&self.values);
        let mut total = 0.0;
        let mut tail = 0.0;
        sp.for_each_mode(|flat, idx| {
            let e = spec[flat].norm_sqr();
            total += e;
            let high = idx
                .iter()
                .zip(own.iter().zip(shape))
                .any(|(&j, (&n, &r))| 3 * mode_number(j, n).unsigned_abs() as usize > r);
            if high {
                tail += e;
            }
        });
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    /// Write `i_tau, i_xi1.., value` rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut header = vec!["i_tau".to_string()];
        header.extend((1..=self.grid.dim()).map(|a| format!("i_xi{a}")));
        writeln!(w, "{},value", header.join(","))?;
        let shape = self.grid.full_shape();
        for (flat, v) in self.values.iter().enumerate() {
            let idx = unflatten(flat, &shape);
            let cols: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            writeln!(w, "{},{}", cols.join(","), v)?;
        }
        Ok(())
    }
}

fn padded_shape(n: &[usize]) -> Vec<usize> {
    n.iter().map(|&k| (3 * k).div_ceil(2)).collect()
}

fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
    idx
}
