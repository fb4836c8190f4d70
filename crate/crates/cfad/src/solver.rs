//! Per-AP coordinate-descent solver and the centralized baseline.
//!
//! Each coordinate update minimizes a quartic surrogate of the exact
//! one-dimensional objective. The surrogate is built from first-order Taylor
//! expansions of the log-determinant and the low-rank inverse update; state
//! maintenance, in contrast, always uses the exact Sherman-Morrison-Woodbury
//! identity so no approximation error accumulates in the maintained
//! covariance inverse.
//!
//! All per-coordinate products exploit the Kronecker structure
//! `X = B (x) s`: the only LK-sized intermediates are `P = C^{-1} (I (x) s)`
//! (built from L-sparse columns) and the rank-J update itself.

use crate::channel::{ChannelStats, ReceivedSignal, XFactor};
use crate::scenario::{Scenario, SignatureMatrix};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Steps smaller than this skip the SMW update entirely.
pub const DEAD_STEP: f64 = 1e-12;

/// Tolerance for treating a polynomial leading coefficient as zero.
const COEFF_EPS: f64 = 1e-14;

/// Solver tuning knobs.
#[derive(Debug, Clone)]
pub struct SolverParams {
    /// Surrogate curvature parameter (auto-doubled on non-descent sweeps).
    pub omega: f64,
    /// Consensus penalty parameter (value used on the first outer iteration).
    pub mu: f64,
    /// Per-outer-iteration multiplier on `mu`. With a fixed penalty the APs
    /// can enter a limit cycle at high SNR: an AP whose local likelihood
    /// strongly favors a different activity value than the consensus flips
    /// between basins while the dual keeps integrating the disagreement.
    /// Escalating the penalty freezes the consensus once the cheap progress
    /// has been made. Set to 1 for the textbook fixed-penalty iteration.
    pub mu_growth: f64,
    /// Upper bound on the escalated penalty, to keep the quartic
    /// coefficients well-scaled on long runs.
    pub mu_max: f64,
    /// Coordinate-descent sweeps per outer iteration. A single sweep makes
    /// very small moves far from the optimum (the Taylor curvature is a large
    /// overestimate there), so consensus needs many outer rounds to settle;
    /// several sweeps per round let each AP solve its local subproblem well
    /// enough that the global estimate stabilizes within a few iterations.
    pub sweeps_per_call: usize,
    /// Full covariance refactorization cadence, in sweeps.
    pub refactor_every: usize,
    /// Maximum LK for dense log-det / oracle paths.
    pub oracle_cap: usize,
    /// Cap on automatic omega doublings.
    pub max_omega_doublings: u32,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            omega: 1.0,
            mu: 50.0,
            mu_growth: 2.0,
            mu_max: 1e9,
            sweeps_per_call: 6,
            refactor_every: 1,
            oracle_cap: 512,
            max_omega_doublings: 10,
        }
    }
}

impl SolverParams {
    /// Effective consensus penalty on 1-based outer iteration `iteration`.
    pub fn mu_at(&self, iteration: usize) -> f64 {
        let exp = iteration.saturating_sub(1).min(1024) as i32;
        (self.mu * self.mu_growth.powi(exp)).min(self.mu_max)
    }
}

/// Coefficients of the quartic coordinate surrogate
/// `q(d) = rho1 d + rho2 d^2 + rho3 d^3 + rho4 d^4` (omega enters separately).
#[derive(Debug, Clone, Copy)]
pub struct QuarticCoeffs {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub rho4: f64,
}

impl QuarticCoeffs {
    pub fn is_finite(&self) -> bool {
        self.rho1.is_finite()
            && self.rho2.is_finite()
            && self.rho3.is_finite()
            && self.rho4.is_finite()
    }

    /// Surrogate value at `d` including the omega term.
    pub fn eval(&self, d: f64, omega: f64) -> f64 {
        d * (self.rho1 + d * (self.rho2 + omega / 2.0 + d * (self.rho3 + d * self.rho4)))
    }
}

/// Real roots of `a3 x^3 + a2 x^2 + a1 x + a0 = 0` in closed form, with
/// graceful degradation to quadratic/linear when leading coefficients vanish.
pub fn real_cubic_roots(a3: f64, a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    let amax = a3.abs().max(a2.abs()).max(a1.abs()).max(a0.abs());
    if amax == 0.0 {
        return vec![];
    }
    let eps = COEFF_EPS * amax;
    if a3.abs() <= eps {
        return real_quadratic_roots(a2, a1, a0, eps);
    }
    // depressed cubic t^3 + p t + q with x = t - a2 / (3 a3)
    let b = a2 / a3;
    let c = a1 / a3;
    let d = a0 / a3;
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let half_q = q / 2.0;
    let third_p = p / 3.0;
    let disc = half_q * half_q + third_p * third_p * third_p;
    let mut roots = Vec::with_capacity(3);
    if disc > 0.0 {
        // one real root (Cardano)
        let sq = disc.sqrt();
        let t = stable_cbrt(-half_q + sq) + stable_cbrt(-half_q - sq);
        roots.push(t - shift);
    } else if disc == 0.0 {
        if half_q == 0.0 {
            roots.push(-shift);
        } else {
            let t = stable_cbrt(-half_q);
            roots.push(2.0 * t - shift);
            roots.push(-t - shift);
        }
    } else {
        // three real roots (trigonometric form)
        let r = (-third_p).sqrt();
        let cos_arg = (-half_q / (r * r * r)).clamp(-1.0, 1.0);
        let phi = cos_arg.acos() / 3.0;
        for k in 0..3 {
            let t = 2.0 * r * (phi - std::f64::consts::TAU * k as f64 / 3.0).cos();
            roots.push(t - shift);
        }
    }
    roots
}

fn real_quadratic_roots(a2: f64, a1: f64, a0: f64, eps: f64) -> Vec<f64> {
    if a2.abs() <= eps {
        if a1.abs() <= eps {
            return vec![];
        }
        return vec![-a0 / a1];
    }
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    // citardauq form for the small root
    let q = -0.5 * (a1 + a1.signum() * sq);
    let mut roots = vec![];
    if q != 0.0 {
        roots.push(q / a2);
        roots.push(a0 / q);
    } else {
        roots.push(0.0);
        roots.push(-a1 / a2);
    }
    roots
}

fn stable_cbrt(x: f64) -> f64 {
    x.signum() * x.abs().cbrt()
}

/// Global minimizer of `q(d) = rho1 d + (rho2 + omega/2) d^2 + rho3 d^3 +
/// rho4 d^4` over `[lo, hi]`: stationary points from the closed-form cubic on
/// `q'`, compared against both endpoints; ties resolve to the smaller `|d|`.
pub fn minimize_quartic(c: &QuarticCoeffs, omega: f64, lo: f64, hi: f64) -> Result<f64> {
    if !c.is_finite() || !omega.is_finite() {
        return Err(Error::NonFinite("quartic coefficients"));
    }
    if lo > hi {
        return Err(Error::InvalidArgument(format!(
            "empty interval [{lo}, {hi}]"
        )));
    }
    let r2 = c.rho2 + omega / 2.0;
    let mut best_d = lo;
    let mut best_q = c.eval(lo, omega);
    let consider = |d: f64, best_d: &mut f64, best_q: &mut f64| {
        let q = c.eval(d, omega);
        if q < *best_q || (q == *best_q && d.abs() < best_d.abs()) {
            *best_q = q;
            *best_d = d;
        }
    };
    consider(hi, &mut best_d, &mut best_q);
    for root in real_cubic_roots(4.0 * c.rho4, 3.0 * c.rho3, 2.0 * r2, c.rho1) {
        if root.is_finite() && root >= lo && root <= hi {
            consider(root, &mut best_d, &mut best_q);
        }
    }
    Ok(best_d)
}

/// Per-coordinate products shared by coefficient construction and the SMW
/// state update for the same coordinate.
struct CoordProducts {
    /// `P = C^{-1} (I_K (x) s_n)`, LK x K.
    p: DMatrix<Complex64>,
    /// `A = X^H C^{-1} X`, J x J.
    a: DMatrix<Complex64>,
}

/// Per-AP solver state for the local subproblem.
#[derive(Debug, Clone)]
pub struct LocalState {
    theta: Vec<f64>,
    lambda: Vec<f64>,
    /// Current surrogate curvature (doubles on non-descent sweeps).
    omega: f64,
    omega_doublings: u32,
    cov_inv: DMatrix<Complex64>,
    residual: DVector<Complex64>,
    y: DVector<Complex64>,
    x: Vec<XFactor>,
    noise_var: f64,
    antennas: usize,
    sig_len: usize,
    sweeps_since_refactor: usize,
}

/// Snapshot for sweep rollback under the omega-doubling policy.
struct StateSnapshot {
    theta: Vec<f64>,
    cov_inv: DMatrix<Complex64>,
    residual: DVector<Complex64>,
    sweeps_since_refactor: usize,
}

impl LocalState {
    /// Initialize from the received signal and per-device channel statistics.
    pub fn new(
        signal: &ReceivedSignal,
        stats_row: &[ChannelStats],
        signatures: &SignatureMatrix,
        theta0: &[f64],
        lambda0: &[f64],
        params: &SolverParams,
    ) -> Result<Self> {
        let n = stats_row.len();
        if theta0.len() != n || lambda0.len() != n {
            return Err(Error::InvalidArgument(
                "theta0/lambda0 length mismatch".into(),
            ));
        }
        if signal.y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("received signal"));
        }
        if theta0.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::InvalidArgument("theta0 outside [0, 1]".into()));
        }
        if !(signal.noise_var > 0.0) {
            return Err(Error::InvalidArgument("noise variance must be > 0".into()));
        }
        let x: Vec<XFactor> = stats_row
            .iter()
            .enumerate()
            .map(|(i, st)| XFactor::new(st, signatures.column(i), i))
            .collect();
        let antennas = stats_row[0].mean.len();
        let sig_len = signatures.len();
        let lk = antennas * sig_len;
        let mut state = Self {
            theta: theta0.to_vec(),
            lambda: lambda0.to_vec(),
            omega: params.omega,
            omega_doublings: 0,
            cov_inv: DMatrix::zeros(lk, lk),
            residual: DVector::zeros(lk),
            y: signal.y.clone(),
            x,
            noise_var: signal.noise_var,
            antennas,
            sig_len,
            sweeps_since_refactor: 0,
        };
        if theta0.iter().all(|&t| t == 0.0) {
            state.cov_inv = DMatrix::from_diagonal_element(
                lk,
                lk,
                Complex64::new(1.0 / signal.noise_var, 0.0),
            );
            state.residual = signal.y.clone();
        } else {
            state.refactor()?;
        }
        Ok(state)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn lambda_mut(&mut self) -> &mut Vec<f64> {
        &mut self.lambda
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn cov_inv(&self) -> &DMatrix<Complex64> {
        &self.cov_inv
    }

    pub fn residual(&self) -> &DVector<Complex64> {
        &self.residual
    }

    pub fn x_factors(&self) -> &[XFactor] {
        &self.x
    }

    pub fn num_devices(&self) -> usize {
        self.x.len()
    }

    fn lk(&self) -> usize {
        self.antennas * self.sig_len
    }

    /// `P = C^{-1} (I_K (x) s_n)` exploiting the L-sparse columns.
    fn p_matrix(&self, n: usize) -> DMatrix<Complex64> {
        let lk = self.lk();
        let k = self.antennas;
        let l = self.sig_len;
        let s = &self.x[n].signature;
        let mut p = DMatrix::<Complex64>::zeros(lk, k);
        let cinv = self.cov_inv.as_slice();
        let pdat = p.as_mut_slice();
        for kc in 0..k {
            let dst = &mut pdat[kc * lk..(kc + 1) * lk];
            for li in 0..l {
                let w = s[li];
                let src = &cinv[(kc * l + li) * lk..(kc * l + li + 1) * lk];
                for i in 0..lk {
                    dst[i] += w * src[i];
                }
            }
        }
        p
    }

    /// `T = (I (x) s)^H P = (I (x) s)^H C^{-1} (I (x) s)`, K x K.
    fn t_matrix(&self, n: usize, p: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let k = self.antennas;
        let l = self.sig_len;
        let s = &self.x[n].signature;
        DMatrix::from_fn(k, k, |k1, k2| {
            let mut acc = Complex64::default();
            for li in 0..l {
                acc += s[li].conj() * p[(k1 * l + li, k2)];
            }
            acc
        })
    }

    fn coord_products(&self, n: usize) -> CoordProducts {
        let p = self.p_matrix(n);
        let t = self.t_matrix(n, &p);
        let a = match self.x[n].far_gain {
            Some(g) => t.map(|z| z * g),
            None => {
                let b = &self.x[n].cov_part;
                b.adjoint() * &t * b
            }
        };
        CoordProducts { p, a }
    }

    fn coeffs_from_products(
        &self,
        n: usize,
        a_n: f64,
        mu: f64,
        prod: &CoordProducts,
    ) -> QuarticCoeffs {
        let xf = &self.x[n];
        let u = &self.residual;
        // pu = P^H u = (I (x) s)^H C^{-1} u
        let pu = prod.p.adjoint() * u;
        let (v, w_h, m_quad, m_lin) = match xf.far_gain {
            Some(g) => {
                let v = pu.map(|z| z * g.sqrt());
                (v, DVector::zeros(prod.a.nrows()), 0.0, Complex64::default())
            }
            None => {
                let b = &xf.cov_part;
                let t = self.t_matrix(n, &prod.p);
                let hbar = xf.mean_part_antenna();
                let th = &t * &hbar;
                let v = b.adjoint() * &pu;
                let w_h = b.adjoint() * &th;
                let m_quad = hbar.dotc(&th).re;
                let m_lin = hbar.dotc(&pu);
                (v, w_h, m_quad, m_lin)
            }
        };
        let tr_a: f64 = prod.a.diagonal().iter().map(|z| z.re).sum();
        let av = &prod.a * &v;
        let aw = &prod.a * &w_h;
        let rho1 = tr_a - 2.0 * m_lin.re - v.norm_squared()
            + self.lambda[n]
            + mu * (self.theta[n] - a_n);
        let rho2 = m_quad + 2.0 * v.dotc(&w_h).re + v.dotc(&av).re + mu / 2.0;
        let rho3 = -2.0 * v.dotc(&aw).re - w_h.norm_squared();
        let rho4 = w_h.dotc(&aw).re.max(0.0);
        QuarticCoeffs {
            rho1,
            rho2,
            rho3,
            rho4,
        }
    }

    /// Quartic surrogate coefficients for coordinate `n` against consensus
    /// target `a_n` with penalty `mu`.
    pub fn quartic_coeffs(&self, n: usize, a_n: f64, mu: f64) -> QuarticCoeffs {
        let prod = self.coord_products(n);
        self.coeffs_from_products(n, a_n, mu, &prod)
    }

    /// Apply the coordinate step `theta_n += d` with an exact SMW update of
    /// the maintained covariance inverse and residual.
    pub fn apply_step(&mut self, n: usize, d: f64) -> Result<()> {
        if !d.is_finite() {
            return Err(Error::NonFinite("step size"));
        }
        let new_theta = self.theta[n] + d;
        if !(-1e-9..=1.0 + 1e-9).contains(&new_theta) {
            return Err(Error::InvalidArgument(format!(
                "step drives theta[{n}] to {new_theta}, outside [0, 1]"
            )));
        }
        if d.abs() <= DEAD_STEP {
            return Ok(());
        }
        let prod = self.coord_products(n);
        self.apply_with_products(n, d, &prod)
    }

    fn apply_with_products(&mut self, n: usize, d: f64, prod: &CoordProducts) -> Result<()> {
        let j = prod.a.nrows();
        let lk = self.lk();
        let small =
            DMatrix::identity(j, j) + prod.a.map(|z| z * d);
        let small_norm = small.norm();
        let inv = small.clone().try_inverse();
        let ill_conditioned = match &inv {
            Some(m) => small_norm * m.norm() > 1e12,
            None => true,
        };
        self.theta[n] = (self.theta[n] + d).clamp(0.0, 1.0);
        if let Some(g) = self.x[n].far_gain {
            if ill_conditioned {
                return self.refactor();
            }
            let g_mat = prod.p.map(|z| z * g.sqrt());
            let m1 = &g_mat * inv.as_ref().unwrap();
            self.rank_update(&m1, &g_mat, d, lk);
        } else {
            if ill_conditioned {
                self.residual -= self.x[n].mean_part.map(|z| z * d);
                return self.refactor();
            }
            let g_mat = &prod.p * &self.x[n].cov_part;
            let m1 = &g_mat * inv.as_ref().unwrap();
            self.rank_update(&m1, &g_mat, d, lk);
            self.residual -= self.x[n].mean_part.map(|z| z * d);
        }
        Ok(())
    }

    /// `cov_inv -= d * M1 * G^H` (the hot loop). The update is Hermitian, so
    /// only the lower triangle is accumulated and then mirrored.
    fn rank_update(&mut self, m1: &DMatrix<Complex64>, g: &DMatrix<Complex64>, d: f64, lk: usize) {
        let j = m1.ncols();
        let m1s = m1.as_slice();
        let gs = g.as_slice();
        let c = self.cov_inv.as_mut_slice();
        for col in 0..lk {
            let dst = &mut c[col * lk..(col + 1) * lk];
            for jj in 0..j {
                let w = gs[jj * lk + col].conj() * d;
                if w.re == 0.0 && w.im == 0.0 {
                    continue;
                }
                let src = &m1s[jj * lk..(jj + 1) * lk];
                for i in col..lk {
                    dst[i] -= w * src[i];
                }
            }
        }
        for col in 0..lk {
            for row in (col + 1)..lk {
                c[row * lk + col] = c[col * lk + row].conj();
            }
        }
    }

    /// Rebuild the covariance inverse and residual from scratch.
    pub fn refactor(&mut self) -> Result<()> {
        let lk = self.lk();
        let k = self.antennas;
        let l = self.sig_len;
        let mut cov =
            DMatrix::from_diagonal_element(lk, lk, Complex64::new(self.noise_var, 0.0));
        for (n, xf) in self.x.iter().enumerate() {
            let t = self.theta[n];
            if t == 0.0 {
                continue;
            }
            let s = &xf.signature;
            let xi = &xf.xi;
            for kc in 0..k {
                for kr in 0..k {
                    let w = xi[(kr, kc)] * t;
                    if w.re == 0.0 && w.im == 0.0 {
                        continue;
                    }
                    for lc in 0..l {
                        let ws = w * s[lc].conj();
                        for lr in 0..l {
                            cov[(kr * l + lr, kc * l + lc)] += ws * s[lr];
                        }
                    }
                }
            }
        }
        let chol = nalgebra::linalg::Cholesky::new(cov.clone());
        self.cov_inv = match chol {
            Some(c) => c.inverse(),
            None => cov
                .try_inverse()
                .ok_or(Error::NonFinite("singular model covariance"))?,
        };
        let mut residual = self.y.clone();
        for (n, xf) in self.x.iter().enumerate() {
            if self.theta[n] != 0.0 && xf.far_gain.is_none() {
                residual -= xf.mean_part.map(|z| z * self.theta[n]);
            }
        }
        self.residual = residual;
        self.sweeps_since_refactor = 0;
        Ok(())
    }

    /// One coordinate-descent pass over all devices in ascending index order.
    pub fn cd_sweep(&mut self, a: &[f64], params: &SolverParams) -> Result<()> {
        let mu = params.mu;
        for n in 0..self.x.len() {
            let prod = self.coord_products(n);
            let coeffs = self.coeffs_from_products(n, a[n], mu, &prod);
            let lo = -self.theta[n];
            let hi = 1.0 - self.theta[n];
            let d = minimize_quartic(&coeffs, self.omega, lo, hi)?;
            if d.abs() > DEAD_STEP {
                self.apply_with_products(n, d, &prod)?;
            }
        }
        self.sweeps_since_refactor += 1;
        if params.refactor_every > 0 && self.sweeps_since_refactor >= params.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    /// `sweeps_per_call` guarded sweeps: whenever a sweep increases the exact
    /// local objective, the sweep is rolled back, omega is doubled (up to the
    /// configured cap) and the sweep is rerun.
    pub fn guarded_sweeps(&mut self, a: &[f64], params: &SolverParams) -> Result<()> {
        for _ in 0..params.sweeps_per_call {
            let before = self.local_objective(a, params)?;
            let snap = self.snapshot();
            loop {
                self.cd_sweep(a, params)?;
                let after = self.local_objective(a, params)?;
                if after <= before + 1e-9 || self.omega_doublings >= params.max_omega_doublings {
                    break;
                }
                self.restore(&snap);
                self.omega *= 2.0;
                self.omega_doublings += 1;
            }
        }
        Ok(())
    }

    fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            theta: self.theta.clone(),
            cov_inv: self.cov_inv.clone(),
            residual: self.residual.clone(),
            sweeps_since_refactor: self.sweeps_since_refactor,
        }
    }

    fn restore(&mut self, snap: &StateSnapshot) {
        self.theta.clone_from(&snap.theta);
        self.cov_inv.clone_from(&snap.cov_inv);
        self.residual.clone_from(&snap.residual);
        self.sweeps_since_refactor = snap.sweeps_since_refactor;
    }

    /// Exact local objective: `log|C| + u^H C^{-1} u + lambda^T (theta - a) +
    /// (mu/2) ||theta - a||^2`. The additive `LK log(pi)` constant of the
    /// Gaussian density is dropped (only differences matter).
    pub fn local_objective(&self, a: &[f64], params: &SolverParams) -> Result<f64> {
        let lk = self.lk();
        if lk > params.oracle_cap {
            return Err(Error::OracleCapExceeded {
                lk,
                cap: params.oracle_cap,
            });
        }
        let (logdet, quad) = self.logdet_and_quad()?;
        let mut f = logdet + quad;
        for n in 0..self.theta.len() {
            let diff = self.theta[n] - a[n];
            f += self.lambda[n] * diff + params.mu / 2.0 * diff * diff;
        }
        Ok(f)
    }

    fn logdet_and_quad(&self) -> Result<(f64, f64)> {
        let lk = self.lk();
        let k = self.antennas;
        let l = self.sig_len;
        let mut cov =
            DMatrix::from_diagonal_element(lk, lk, Complex64::new(self.noise_var, 0.0));
        for (n, xf) in self.x.iter().enumerate() {
            let t = self.theta[n];
            if t == 0.0 {
                continue;
            }
            let s = &xf.signature;
            let xi = &xf.xi;
            for kc in 0..k {
                for kr in 0..k {
                    let w = xi[(kr, kc)] * t;
                    for lc in 0..l {
                        let ws = w * s[lc].conj();
                        for lr in 0..l {
                            cov[(kr * l + lr, kc * l + lc)] += ws * s[lr];
                        }
                    }
                }
            }
        }
        let chol = nalgebra::linalg::Cholesky::new(cov)
            .ok_or(Error::NonFinite("covariance not positive definite"))?;
        let logdet: f64 = chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|z| 2.0 * z.re.ln())
            .sum();
        let solved = chol.solve(&self.residual);
        let quad = self.residual.dotc(&solved).re;
        Ok((logdet, quad))
    }
}

impl XFactor {
    /// Antenna-domain mean (length K) recovered from `mean_part = h (x) s`.
    /// Zero for far-field devices.
    fn mean_part_antenna(&self) -> DVector<Complex64> {
        let l = self.signature.len();
        let k = self.cov_part.nrows();
        if self.far_gain.is_some() {
            return DVector::zeros(k);
        }
        // h[k] = mean_part[k*L + l0] / s[l0] for any l0 (s has unit modulus)
        let s0 = self.signature[0];
        DVector::from_fn(k, |ki, _| self.mean_part[ki * l] / s0)
    }
}

/// Coordinate descent directly on the centralized ML problem: per-coordinate
/// quartic coefficients are summed across APs (no dual or penalty terms) and
/// the step is applied to every per-AP state simultaneously.
pub fn centralized_cd(
    signals: &[ReceivedSignal],
    scenario: &Scenario,
    model: &crate::channel::ChannelModel,
    params: &SolverParams,
    max_sweeps: usize,
) -> Result<Vec<f64>> {
    Ok(centralized_cd_with_history(signals, scenario, model, params, max_sweeps)?.0)
}

/// As [`centralized_cd`], also returning the activity estimate after each
/// sweep.
pub fn centralized_cd_with_history(
    signals: &[ReceivedSignal],
    scenario: &Scenario,
    model: &crate::channel::ChannelModel,
    params: &SolverParams,
    max_sweeps: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n_dev = scenario.cfg.num_devices;
    let zero = vec![0.0; n_dev];
    let local = SolverParams {
        mu: 0.0,
        ..params.clone()
    };
    let mut states: Vec<LocalState> = signals
        .iter()
        .enumerate()
        .map(|(m, sig)| {
            LocalState::new(sig, &model.stats[m], &scenario.signatures, &zero, &zero, &local)
                .map_err(|e| Error::Ap {
                    ap: m,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let mut a = vec![0.0; n_dev];
    let mut omega = params.omega;
    let mut doublings = 0u32;
    let mut history = Vec::new();
    let mut prev_delta = f64::INFINITY;
    for _ in 0..max_sweeps {
        let before = global_objective(&states, &a, &local)?;
        let snaps: Vec<StateSnapshot> = states.iter().map(|s| s.snapshot()).collect();
        let a_snap = a.clone();
        let max_delta = loop {
            let mut max_delta = 0.0f64;
            for n in 0..n_dev {
                let mut coeffs = QuarticCoeffs {
                    rho1: 0.0,
                    rho2: 0.0,
                    rho3: 0.0,
                    rho4: 0.0,
                };
                let prods: Vec<CoordProducts> =
                    states.iter().map(|s| s.coord_products(n)).collect();
                for (s, p) in states.iter().zip(&prods) {
                    let c = s.coeffs_from_products(n, a[n], 0.0, p);
                    coeffs.rho1 += c.rho1;
                    coeffs.rho2 += c.rho2;
                    coeffs.rho3 += c.rho3;
                    coeffs.rho4 += c.rho4;
                }
                let d = minimize_quartic(&coeffs, omega, -a[n], 1.0 - a[n])?;
                if d.abs() > DEAD_STEP {
                    for (m, (s, p)) in states.iter_mut().zip(&prods).enumerate() {
                        s.apply_with_products(n, d, p).map_err(|e| Error::Ap {
                            ap: m,
                            source: Box::new(e),
                        })?;
                    }
                    a[n] = (a[n] + d).clamp(0.0, 1.0);
                    max_delta = max_delta.max(d.abs());
                }
            }
            for s in states.iter_mut() {
                s.sweeps_since_refactor += 1;
                if local.refactor_every > 0 && s.sweeps_since_refactor >= local.refactor_every {
                    s.refactor()?;
                }
            }
            let after = global_objective(&states, &a, &local)?;
            if after <= before + 1e-9 || doublings >= params.max_omega_doublings {
                break max_delta;
            }
            for (s, snap) in states.iter_mut().zip(&snaps) {
                s.restore(snap);
            }
            a.clone_from(&a_snap);
            omega *= 2.0;
            doublings += 1;
        };
        history.push(a.clone());
        // stop only once small steps are shrinking: the ramp-up from the
        // zero start can begin with arbitrarily small but growing steps
        if max_delta < 1e-6 && max_delta <= prev_delta {
            break;
        }
        prev_delta = max_delta;
    }
    Ok((a, history))
}

fn global_objective(states: &[LocalState], a: &[f64], params: &SolverParams) -> Result<f64> {
    let mut total = 0.0;
    for s in states {
        // theta == a in lockstep centralized CD; penalty terms are zero
        total += s.local_objective(a, params)?;
    }
    Ok(total)
}

/// Initialize a per-AP local state for the distributed algorithm
/// (theta = lambda = 0 by default).
pub fn init_local_state(
    signal: &ReceivedSignal,
    stats_row: &[ChannelStats],
    signatures: &SignatureMatrix,
    theta0: &[f64],
    lambda0: &[f64],
    params: &SolverParams,
) -> Result<LocalState> {
    LocalState::new(signal, stats_row, signatures, theta0, lambda0, params)
}
