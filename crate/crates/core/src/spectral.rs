//! Fourier and Hermite spectral bases.
//!
//! A basis is a tensor product of one or two [`Axis`] objects of the same
//! kind. Coefficients and grid values are stored row-major with the `x`
//! axis outermost, so index `(ix, iy)` lives at `ix * ny + iy`.
//!
//! Fourier coefficients follow `psi(x) = sum_k c_k e^{ikx}` with the
//! wavenumbers `{-N/2+1, ..., N/2}` stored in FFT order. Hermite
//! coefficients follow `psi(x) = sum_k c_k h_k(x)` with orthonormal Hermite
//! functions and a Gauss-Hermite collocation grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisKind {
    Fourier1D,
    Fourier2D,
    Hermite1D,
    Hermite2D,
}

impl BasisKind {
    pub fn is_fourier(self) -> bool {
        matches!(self, BasisKind::Fourier1D | BasisKind::Fourier2D)
    }

    pub fn is_2d(self) -> bool {
        matches!(self, BasisKind::Fourier2D | BasisKind::Hermite2D)
    }
}

/// Identity of a basis: kind plus the number of modes per axis.
///
/// `ny` is 1 for one-dimensional bases. For Hermite axes the mode count is
/// `N + 1` for a series truncated at degree `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisKey {
    pub kind: BasisKind,
    pub nx: usize,
    pub ny: usize,
}

impl BasisKey {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for BasisKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind.is_2d() {
            write!(f, "{:?}[{}x{}]", self.kind, self.nx, self.ny)
        } else {
            write!(f, "{:?}[{}]", self.kind, self.nx)
        }
    }
}

/// Periodic Fourier axis on `[0, 2*pi)`.
#[derive(Clone)]
pub struct FourierAxis {
    n: usize,
    wavenumbers: Vec<i64>,
    nodes: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FourierAxis {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::config(format!(
                "Fourier axis needs an even number of points >= 2, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let wavenumbers = (0..n)
            .map(|i| {
                if i <= n / 2 {
                    i as i64
                } else {
                    i as i64 - n as i64
                }
            })
            .collect();
        let dx = 2.0 * PI / n as f64;
        Ok(Self {
            n,
            wavenumbers,
            nodes: (0..n).map(|j| j as f64 * dx).collect(),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    /// Wavenumber of each storage slot.
    pub fn wavenumbers(&self) -> &[i64] {
        &self.wavenumbers
    }

    /// Storage slot of wavenumber `k`, if it is resolved.
    pub fn slot(&self, k: i64) -> Option<usize> {
        let n = self.n as i64;
        if k <= -n / 2 || k > n / 2 {
            return None;
        }
        Some(if k >= 0 { k as usize } else { (k + n) as usize })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }
}

/// Hermite axis: orthonormal Hermite functions `h_0..h_N` collocated at
/// Gauss-Hermite nodes.
#[derive(Clone)]
pub struct HermiteAxis {
    modes: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `synth[j * modes + k] = h_k(x_j)`
    synth: Vec<f64>,
    /// `anal[k * nodes + j] = h_k(x_j) * omega_j`
    anal: Vec<f64>,
}

impl HermiteAxis {
    /// `modes = N + 1` basis functions on `nodes >= modes` quadrature points.
    pub fn new(modes: usize, nodes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::config("Hermite axis needs at least one mode"));
        }
        if nodes < modes {
            return Err(Error::config(format!(
                "Hermite axis needs at least as many nodes as modes ({nodes} < {modes})"
            )));
        }
        let rule = gauss_hermite(nodes);
        let table = hermite_functions(modes - 1, &rule.nodes);
        let mut synth = vec![0.0; nodes * modes];
        let mut anal = vec![0.0; modes * nodes];
        for (k, row) in table.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                synth[j * modes + k] = v;
                anal[k * nodes + j] = v * rule.weights[j];
            }
        }
        Ok(Self {
            modes,
            nodes: rule.nodes,
            weights: rule.weights,
            synth,
            anal,
        })
    }

    /// Rescaled Gauss-Hermite weights `omega_j`, normalized so that
    /// `sum_j h_k(x_j) h_l(x_j) omega_j = delta_kl`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn modes(&self) -> usize {
        self.modes
    }
}

#[derive(Clone)]
pub enum Axis {
    Fourier(FourierAxis),
    Hermite(HermiteAxis),
}

impl Axis {
    /// Number of coefficients along this axis.
    pub fn modes(&self) -> usize {
        match self {
            Axis::Fourier(a) => a.n,
            Axis::Hermite(a) => a.modes,
        }
    }

    /// Number of grid nodes along this axis.
    pub fn points(&self) -> usize {
        match self {
            Axis::Fourier(a) => a.n,
            Axis::Hermite(a) => a.nodes.len(),
        }
    }

    pub fn nodes(&self) -> &[f64] {
        match self {
            Axis::Fourier(a) => &a.nodes,
            Axis::Hermite(a) => &a.nodes,
        }
    }

    /// Quadrature weight of each node (`dx` or `omega_j`).
    pub fn quadrature_weights(&self) -> Vec<f64> {
        match self {
            Axis::Fourier(a) => vec![a.spacing(); a.n],
            Axis::Hermite(a) => a.weights.clone(),
        }
    }

    /// Squared norm of a single basis function (`2*pi` for `e^{ikx}`).
    pub fn mode_norm_sq(&self) -> f64 {
        match self {
            Axis::Fourier(_) => 2.0 * PI,
            Axis::Hermite(_) => 1.0,
        }
    }

    /// Signed mode label of each storage slot (wavenumber or degree).
    pub fn labels(&self) -> Vec<i64> {
        match self {
            Axis::Fourier(a) => a.wavenumbers.clone(),
            Axis::Hermite(a) => (0..a.modes as i64).collect(),
        }
    }

    pub fn slot(&self, label: i64) -> Option<usize> {
        match self {
            Axis::Fourier(a) => a.slot(label),
            Axis::Hermite(a) => (label >= 0 && (label as usize) < a.modes).then_some(label as usize),
        }
    }

    fn synthesize_line(&self, coeffs: &[Complex64], grid: &mut [Complex64]) {
        match self {
            Axis::Fourier(a) => {
                grid.copy_from_slice(coeffs);
                a.inverse.process(grid);
            }
            Axis::Hermite(a) => {
                for (j, g) in grid.iter_mut().enumerate() {
                    let row = &a.synth[j * a.modes..(j + 1) * a.modes];
                    *g = row.iter().zip(coeffs).map(|(&h, &c)| c * h).sum();
                }
            }
        }
    }

    fn analyze_line(&self, grid: &[Complex64], coeffs: &mut [Complex64]) {
        match self {
            Axis::Fourier(a) => {
                coeffs.copy_from_slice(grid);
                a.forward.process(coeffs);
                let scale = 1.0 / a.n as f64;
                coeffs.iter_mut().for_each(|c| *c *= scale);
            }
            Axis::Hermite(a) => {
                let np = a.nodes.len();
                for (k, c) in coeffs.iter_mut().enumerate() {
                    let row = &a.anal[k * np..(k + 1) * np];
                    *c = row.iter().zip(grid).map(|(&w, &g)| g * w).sum();
                }
            }
        }
    }
}

/// A spectral basis with its collocation grid. Immutable once built.
#[derive(Clone)]
pub struct SpectralBasis {
    key: BasisKey,
    axes: Vec<Axis>,
}

impl fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpectralBasis({})", self.key)
    }
}

impl SpectralBasis {
    pub fn fourier_1d(nx: usize) -> Result<Self> {
        Ok(Self {
            key: BasisKey { kind: BasisKind::Fourier1D, nx, ny: 1 },
            axes: vec![Axis::Fourier(FourierAxis::new(nx)?)],
        })
    }

    pub fn fourier_2d(nx: usize, ny: usize) -> Result<Self> {
        Ok(Self {
            key: BasisKey { kind: BasisKind::Fourier2D, nx, ny },
            axes: vec![
                Axis::Fourier(FourierAxis::new(nx)?),
                Axis::Fourier(FourierAxis::new(ny)?),
            ],
        })
    }

    /// Hermite series `h_0..h_{modes-1}` on `nodes` Gauss-Hermite points.
    pub fn hermite_1d(modes: usize, nodes: usize) -> Result<Self> {
        Ok(Self {
            key: BasisKey { kind: BasisKind::Hermite1D, nx: modes, ny: 1 },
            axes: vec![Axis::Hermite(HermiteAxis::new(modes, nodes)?)],
        })
    }

    pub fn hermite_2d(modes_x: usize, modes_y: usize) -> Result<Self> {
        Ok(Self {
            key: BasisKey { kind: BasisKind::Hermite2D, nx: modes_x, ny: modes_y },
            axes: vec![
                Axis::Hermite(HermiteAxis::new(modes_x, modes_x)?),
                Axis::Hermite(HermiteAxis::new(modes_y, modes_y)?),
            ],
        })
    }

    pub fn key(&self) -> BasisKey {
        self.key
    }

    pub fn kind(&self) -> BasisKind {
        self.key.kind
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Number of coefficients.
    pub fn len(&self) -> usize {
        self.key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.key.is_empty()
    }

    /// Number of grid values.
    pub fn grid_len(&self) -> usize {
        self.axes.iter().map(Axis::points).product()
    }

    /// Grid shape `(points_x, points_y)`; `points_y` is 1 in 1D.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.axes[0].points(), self.axes.get(1).map_or(1, Axis::points))
    }

    /// Node coordinates of each grid value, `(x, y)` with `y = 0` in 1D.
    pub fn grid_points(&self) -> Vec<(f64, f64)> {
        let xs = self.axes[0].nodes();
        match self.axes.get(1) {
            None => xs.iter().map(|&x| (x, 0.0)).collect(),
            Some(ay) => xs
                .iter()
                .flat_map(|&x| ay.nodes().iter().map(move |&y| (x, y)))
                .collect(),
        }
    }

    /// Quadrature weight of each grid value.
    pub fn grid_weights(&self) -> Vec<f64> {
        let wx = self.axes[0].quadrature_weights();
        match self.axes.get(1) {
            None => wx,
            Some(ay) => {
                let wy = ay.quadrature_weights();
                wx.iter()
                    .flat_map(|&a| wy.iter().map(move |&b| a * b))
                    .collect()
            }
        }
    }

    /// Squared norm of one basis function; Parseval reads
    /// `||u||^2 = mode_norm_sq * sum |c|^2`.
    pub fn mode_norm_sq(&self) -> f64 {
        self.axes.iter().map(Axis::mode_norm_sq).product()
    }

    /// Mode labels `(kx, ky)` of each coefficient slot (`ky = 0` in 1D).
    pub fn mode_labels(&self) -> Vec<(i64, i64)> {
        let lx = self.axes[0].labels();
        match self.axes.get(1) {
            None => lx.into_iter().map(|k| (k, 0)).collect(),
            Some(ay) => {
                let ly = ay.labels();
                lx.iter()
                    .flat_map(|&a| ly.iter().map(move |&b| (a, b)))
                    .collect()
            }
        }
    }

    /// Storage slot of mode `(kx, ky)`.
    pub fn slot(&self, kx: i64, ky: i64) -> Result<usize> {
        let out = || Error::IndexOutOfRange { index: (kx, ky) };
        let ix = self.axes[0].slot(kx).ok_or_else(out)?;
        match self.axes.get(1) {
            None if ky == 0 => Ok(ix),
            None => Err(out()),
            Some(ay) => Ok(ix * self.key.ny + ay.slot(ky).ok_or_else(out)?),
        }
    }

    /// Spectral synthesis: coefficients to grid values.
    pub fn to_grid(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.len(), coeffs.len())?;
        Ok(match self.axes.as_slice() {
            [ax] => {
                let mut grid = vec![Complex64::default(); ax.points()];
                ax.synthesize_line(coeffs, &mut grid);
                grid
            }
            [ax, ay] => transform_2d(coeffs, ax, ay, (ax.modes(), ay.modes()), true),
            _ => unreachable!("bases have one or two axes"),
        })
    }

    /// Spectral analysis: grid values to coefficients.
    pub fn to_coeffs(&self, grid: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.grid_len(), grid.len())?;
        Ok(match self.axes.as_slice() {
            [ax] => {
                let mut coeffs = vec![Complex64::default(); ax.modes()];
                ax.analyze_line(grid, &mut coeffs);
                coeffs
            }
            [ax, ay] => transform_2d(grid, ax, ay, (ax.points(), ay.points()), false),
            _ => unreachable!("bases have one or two axes"),
        })
    }

    /// Replaces `coeffs` by the analysis of `op` applied to its grid values.
    /// 1D Fourier bases do this in place.
    pub fn map_on_grid(
        &self,
        coeffs: &mut Vec<Complex64>,
        op: impl FnOnce(&mut [Complex64]),
    ) -> Result<()> {
        check_len(self.len(), coeffs.len())?;
        if let [Axis::Fourier(a)] = self.axes.as_slice() {
            a.inverse.process(coeffs);
            op(coeffs);
            a.forward.process(coeffs);
            let scale = 1.0 / a.n as f64;
            coeffs.iter_mut().for_each(|c| *c *= scale);
            return Ok(());
        }
        let mut grid = self.to_grid(coeffs)?;
        op(&mut grid);
        *coeffs = self.to_coeffs(&grid)?;
        Ok(())
    }

    /// Weighted discrete l2 distance between two coefficient vectors,
    /// evaluated on the grid.
    pub fn l2_distance(&self, u: &[Complex64], v: &[Complex64]) -> Result<f64> {
        check_len(self.len(), v.len())?;
        let diff: Vec<Complex64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        self.grid_norm(&diff)
    }

    /// Weighted discrete l2 norm on the grid.
    pub fn grid_norm(&self, u: &[Complex64]) -> Result<f64> {
        let grid = self.to_grid(u)?;
        Ok(grid
            .iter()
            .zip(self.grid_weights())
            .map(|(g, w)| g.norm_sqr() * w)
            .sum::<f64>()
            .sqrt())
    }

    /// Coefficient-space norm `sqrt(mode_norm_sq * sum |c_k|^2)`.
    pub fn coeff_norm(&self, u: &[Complex64]) -> f64 {
        (self.mode_norm_sq() * u.iter().map(Complex64::norm_sqr).sum::<f64>()).sqrt()
    }

    /// Pseudospectral `-d^2/dx^2` symbol of each coefficient slot (x axis,
    /// Fourier only): `k_x^2`.
    pub fn neg_laplacian_x_symbol(&self) -> Result<Vec<f64>> {
        if !self.kind().is_fourier() {
            return Err(Error::config("second-derivative symbol needs a Fourier basis"));
        }
        Ok(self
            .mode_labels()
            .into_iter()
            .map(|(kx, _)| (kx * kx) as f64)
            .collect())
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::SizeMismatch { expected, found });
    }
    Ok(())
}

/// Separable 2D transform: along `y` (contiguous) first, then along `x`.
fn transform_2d(
    input: &[Complex64],
    ax: &Axis,
    ay: &Axis,
    (in_x, in_y): (usize, usize),
    synth: bool,
) -> Vec<Complex64> {
    let out_y = if synth { ay.points() } else { ay.modes() };
    let out_x = if synth { ax.points() } else { ax.modes() };

    let mut stage = vec![Complex64::default(); in_x * out_y];
    for (src, dst) in input.chunks_exact(in_y).zip(stage.chunks_exact_mut(out_y)) {
        if synth {
            ay.synthesize_line(src, dst);
        } else {
            ay.analyze_line(src, dst);
        }
    }

    let mut out = vec![Complex64::default(); out_x * out_y];
    let mut col_in = vec![Complex64::default(); in_x];
    let mut col_out = vec![Complex64::default(); out_x];
    for iy in 0..out_y {
        for ix in 0..in_x {
            col_in[ix] = stage[ix * out_y + iy];
        }
        if synth {
            ax.synthesize_line(&col_in, &mut col_out);
        } else {
            ax.analyze_line(&col_in, &mut col_out);
        }
        for ix in 0..out_x {
            out[ix * out_y + iy] = col_out[ix];
        }
    }
    out
}

/// Orthonormal Hermite functions `h_0..h_n` at the given points.
///
/// Uses the normalized three-term recurrence
/// `h_{k+1} = x sqrt(2/(k+1)) h_k - sqrt(k/(k+1)) h_{k-1}` started from
/// `h_0 = pi^{-1/4} e^{-x^2/2}`, so the Gaussian weight is carried through
/// every term and nothing overflows. Returns `table[k][j] = h_k(x_j)`.
pub fn hermite_functions(n: usize, nodes: &[f64]) -> Vec<Vec<f64>> {
    let mut table = vec![vec![0.0; nodes.len()]; n + 1];
    for (j, &x) in nodes.iter().enumerate() {
        let mut prev = 0.0;
        let mut cur = PI.powf(-0.25) * (-0.5 * x * x).exp();
        table[0][j] = cur;
        for k in 0..n {
            let kf = k as f64;
            let next = x * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
            prev = cur;
            cur = next;
            table[k + 1][j] = cur;
        }
    }
    table
}

/// `(h_n(x), h_{n-1}(x))` by the same recurrence.
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * x * x).exp();
    for k in 0..n {
        let kf = k as f64;
        let next = x * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

#[derive(Debug, Clone)]
pub struct GaussHermiteRule {
    /// Ascending nodes.
    pub nodes: Vec<f64>,
    /// Rescaled weights `omega_j = w_j e^{x_j^2}` in the normalization
    /// where `sum_j h_k h_l omega_j = delta_kl`.
    pub weights: Vec<f64>,
}

/// Gauss-Hermite rule with `n` nodes for the weight `e^{-x^2}`.
///
/// Nodes come from the eigenvalues of the symmetric Jacobi matrix and are
/// then polished with Newton steps on `h_n`. The rescaled weights use the
/// Christoffel identity `omega_j = 1 / sum_{k<n} h_k(x_j)^2`, which avoids
/// forming `e^{-x^2}` and `e^{x^2}` separately.
pub fn gauss_hermite(n: usize) -> GaussHermiteRule {
    assert!(n > 0, "Gauss-Hermite rule needs at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (hn, hn1) = hermite_pair(n, *x);
            // h_n' = sqrt(2n) h_{n-1} - x h_n
            let d = (2.0 * n as f64).sqrt() * hn1 - *x * hn;
            if d == 0.0 {
                break;
            }
            let step = hn / d;
            *x -= step;
            if step.abs() < 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
    }
    // exact symmetry
    for j in 0..n / 2 {
        let m = 0.5 * (nodes[n - 1 - j] - nodes[j]);
        nodes[j] = -m;
        nodes[n - 1 - j] = m;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }

    let table = hermite_functions(n - 1, &nodes);
    let weights = (0..n)
        .map(|j| 1.0 / table.iter().map(|row| row[j] * row[j]).sum::<f64>())
        .collect();
    GaussHermiteRule { nodes, weights }
}
