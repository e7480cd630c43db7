//! Multi-dimensional FFT plumbing on uniform periodic tensor grids.
//!
//! Arrays are stored row-major with the last axis fastest. Wavenumbers are
//! angular: mode `m` on an axis of period `l` has `k = 2πm/l`.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Signed mode number of FFT index `j` on an axis with `n` points.
/// The Nyquist index maps to `+n/2`.
pub(crate) fn mode_number(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spectral {
    shape: Vec<usize>,
    /// Wavenumbers for odd-order derivatives (Nyquist zeroed).
    k_odd: Vec<Vec<f64>>,
    /// Wavenumbers for even-order derivatives (Nyquist kept).
    k_even: Vec<Vec<f64>>,
    nyquist: Vec<Option<usize>>,
}

impl Spectral {
    pub(crate) fn new(shape: &[usize], periods: &[f64]) -> Self {
        assert_eq!(shape.len(), periods.len());
        let mut k_odd = Vec::with_capacity(shape.len());
        let mut k_even = Vec::with_capacity(shape.len());
        let mut nyquist = Vec::with_capacity(shape.len());
        for (&n, &l) in shape.iter().zip(periods) {
            let even: Vec<f64> = (0..n)
                .map(|j| 2.0 * PI * mode_number(j, n) as f64 / l)
                .collect();
            let nyq = (n % 2 == 0 && n > 1).then_some(n / 2);
            let mut odd = even.clone();
            if let Some(j) = nyq {
                odd[j] = 0.0;
            }
            k_odd.push(odd);
            k_even.push(even);
            nyquist.push(nyq);
        }
        Spectral {
            shape: shape.to_vec(),
            k_odd,
            k_even,
            nyquist,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub(crate) fn k_odd(&self, axis: usize) -> &[f64] {
        &self.k_odd[axis]
    }

    pub(crate) fn k_even(&self, axis: usize) -> &[f64] {
        &self.k_even[axis]
    }

    pub(crate) fn is_nyquist(&self, axis: usize, j: usize) -> bool {
        self.nyquist[axis] == Some(j)
    }

    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.len());
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    /// Inverse transform, normalized, real part returned.
    pub(crate) fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spec, true);
        let scale = 1.0 / self.len() as f64;
        spec.into_iter().map(|c| c.re * scale).collect()
    }

    /// In-place unnormalized transform over every axis.
    pub(crate) fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let ndim = self.shape.len();
        for axis in 0..ndim {
            fft_axis(buf, &self.shape, axis, inverse);
        }
    }

    /// Visit every coefficient with its flat index and multi-index.
    pub(crate) fn for_each_mode(&self, mut f: impl FnMut(usize, &[usize])) {
        let ndim = self.shape.len();
        let mut idx = vec![0usize; ndim];
        for flat in 0..self.len() {
            f(flat, &idx);
            for a in (0..ndim).rev() {
                idx[a] += 1;
                if idx[a] < self.shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    /// Multiply each coefficient by `symbol(multi_index)` and transform back.
    pub(crate) fn apply_symbol(
        &self,
        values: &[f64],
        mut symbol: impl FnMut(&[usize]) -> Complex64,
    ) -> Vec<f64> {
        let mut spec = self.forward(values);
        self.for_each_mode(|flat, idx| spec[flat] *= symbol(idx));
        self.inverse(spec)
    }

    /// Spectral partial derivative along `axis`.
    pub(crate) fn derivative(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let k = &self.k_odd[axis];
        self.apply_symbol(values, |idx| Complex64::new(0.0, k[idx[axis]]))
    }

    /// Spectral Laplacian (Nyquist wavenumbers kept).
    pub(crate) fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        self.apply_symbol(values, |idx| Complex64::new(-self.k_squared(idx), 0.0))
    }

    pub(crate) fn k_squared(&self, idx: &[usize]) -> f64 {
        idx.iter()
            .enumerate()
            .map(|(a, &j)| self.k_even[a][j] * self.k_even[a][j])
            .sum()
    }

    /// Sum of squared odd-derivative wavenumbers; zero exactly on the modes
    /// annihilated by every discrete first derivative.
    pub(crate) fn k_squared_odd(&self, idx: &[usize]) -> f64 {
        idx.iter()
            .enumerate()
            .map(|(a, &j)| self.k_odd[a][j] * self.k_odd[a][j])
            .sum()
    }

    /// Trigonometric interpolation of periodic samples at an arbitrary point.
    /// `periods` must match the grid used to build `self`.
    pub(crate) fn interpolate(&self, spec: &[Complex64], periods: &[f64], x: &[f64]) -> f64 {
        let ndim = self.shape.len();
        // per-axis phase tables
        let tables: Vec<Vec<Complex64>> = (0..ndim)
            .map(|a| {
                let n = self.shape[a];
                (0..n)
                    .map(|j| {
                        let m = mode_number(j, n);
                        let w = 2.0 * PI * m as f64 * x[a] / periods[a];
                        if self.is_nyquist(a, j) {
                            // split the Nyquist mode symmetrically
                            Complex64::new(w.cos(), 0.0)
                        } else {
                            Complex64::new(w.cos(), w.sin())
                        }
                    })
                    .collect()
            })
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        self.for_each_mode(|flat, idx| {
            let mut ph = Complex64::new(1.0, 0.0);
            for a in 0..ndim {
                ph *= tables[a][idx[a]];
            }
            acc += spec[flat] * ph;
        });
        acc.re / self.len() as f64
    }
}

/// Change the resolution of periodic samples by zero-padding or truncating
/// their spectrum. Nyquist coefficients are split when refining and folded
/// when coarsening so real data stays real.
pub(crate) fn resample(values: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    assert_eq!(from.len(), to.len());
    if from == to {
        return values.to_vec();
    }
    let ones = vec![1.0; from.len()];
    let src = Spectral::new(from, &ones);
    let dst = Spectral::new(to, &ones);
    let spec = src.forward(values);
    let mut out = vec![Complex64::new(0.0, 0.0); dst.len()];
    let strides: Vec<usize> = (0..to.len())
        .map(|a| to[a + 1..].iter().product())
        .collect();
    src.for_each_mode(|flat, idx| {
        // per-axis list of (target index, weight)
        let mut targets: Vec<(usize, f64)> = vec![(0, 1.0)];
        for a in 0..from.len() {
            let (nf, nt) = (from[a], to[a]);
            let m = mode_number(idx[a], nf);
            let mut axis_t: Vec<(i64, f64)> = Vec::with_capacity(2);
            let src_nyq = nf % 2 == 0 && m == (nf / 2) as i64;
            if src_nyq && nt > nf {
                axis_t.push((m, 0.5));
                axis_t.push((-m, 0.5));
            } else if 2 * m.unsigned_abs() as usize <= nt {
                axis_t.push((m, 1.0));
            }
            let mut next = Vec::with_capacity(targets.len() * axis_t.len());
            for &(t, w) in &targets {
                for &(mm, ww) in &axis_t {
                    let j = mm.rem_euclid(nt as i64) as usize;
                    next.push((t + j * strides[a], w * ww));
                }
            }
            targets = next;
        }
        for (t, w) in targets {
            out[t] += spec[flat] * w;
        }
    });
    let scale = dst.len() as f64 / src.len() as f64;
    for c in out.iter_mut() {
        *c *= scale;
    }
    dst.inverse(out)
}

fn fft_axis(buf: &mut [Complex64], shape: &[usize], axis: usize, inverse: bool) {
    let n = shape[axis];
    if n <= 1 {
        return;
    }
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    if inner == 1 {
        fft.process(buf);
        return;
    }
    let mut lines = vec![Complex64::new(0.0, 0.0); n * inner];
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            for j in 0..n {
                lines[i * n + j] = buf[base + j * inner + i];
            }
        }
        fft.process(&mut lines);
        for i in 0..inner {
            for j in 0..n {
                buf[base + j * inner + i] = lines[i * n + j];
            }
        }
    }
}
