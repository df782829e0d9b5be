//! Envelope-sinusoid fringe fitting.
//!
//! Model: `y(X) = A·exp(−(X−µ)²/2σ²)·(1 + V·cos(k·X + φ))`, fitted by
//! weighted least squares with Poisson weights and Levenberg–Marquardt
//! damping. Internally the fit runs in pixel units (`u = s/N`) and the
//! result is mapped back to the histogram's centroid coordinate.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ocm::CentroidHistogram;

pub const MIN_POPULATED_BINS: usize = 8;
pub const MAX_VISIBILITY: f64 = 1.5;

/// Parameter names in covariance order.
pub const PARAM_NAMES: [&str; 6] = [
    "amplitude",
    "center",
    "width",
    "visibility",
    "phase",
    "frequency",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitParams {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub visibility: f64,
    pub phase: f64,
    pub frequency: f64,
}

impl FitParams {
    fn to_array(self) -> [f64; 6] {
        [
            self.amplitude,
            self.center,
            self.width,
            self.visibility,
            self.phase,
            self.frequency,
        ]
    }

    fn from_array(a: [f64; 6]) -> Self {
        FitParams {
            amplitude: a[0],
            center: a[1],
            width: a[2],
            visibility: a[3],
            phase: a[4],
            frequency: a[5],
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        self.amplitude
            * (-0.5 * z * z).exp()
            * (1.0 + self.visibility * (self.frequency * x + self.phase).cos())
    }

    /// Fringe period `2π/k`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.frequency
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: FitParams,
    pub sigmas: FitParams,
    /// 6×6 row-major covariance in [`PARAM_NAMES`] order; a fixed frequency
    /// has zero rows/columns.
    pub covariance: Vec<f64>,
    pub frequency_fixed: bool,
    pub chi_squared: f64,
    pub dof: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    /// Visibility clipped to `[0, 1]`.
    pub fn visibility(&self) -> f64 {
        self.params.visibility.clamp(0.0, 1.0)
    }

    /// Unclipped estimate.
    pub fn visibility_raw(&self) -> f64 {
        self.params.visibility
    }

    pub fn visibility_sigma(&self) -> f64 {
        self.sigmas.visibility
    }

    pub fn visibility_clipped(&self) -> bool {
        self.params.visibility > 1.0
    }

    pub fn period(&self) -> f64 {
        self.params.period()
    }

    /// Standard error of the period, propagated from the frequency.
    pub fn period_sigma(&self) -> f64 {
        2.0 * PI * self.sigmas.frequency / (self.params.frequency * self.params.frequency)
    }

    pub fn reduced_chi_squared(&self) -> f64 {
        self.chi_squared / self.dof.max(1) as f64
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.params.evaluate(x)
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let p = self.params.to_array();
        let s = self.sigmas.to_array();
        for (i, name) in PARAM_NAMES.iter().enumerate() {
            let _ = writeln!(out, "{name} = {}", p[i]);
            let _ = writeln!(out, "{name}_sigma = {}", s[i]);
        }
        let _ = writeln!(out, "visibility_reported = {}", self.visibility());
        let _ = writeln!(out, "visibility_clipped = {}", self.visibility_clipped());
        let _ = writeln!(out, "frequency_fixed = {}", self.frequency_fixed);
        let _ = writeln!(out, "period = {}", self.period());
        let _ = writeln!(out, "chi_squared = {}", self.chi_squared);
        let _ = writeln!(out, "dof = {}", self.dof);
        let _ = writeln!(out, "iterations = {}", self.iterations);
        let _ = writeln!(out, "converged = {}", self.converged);
        for (i, a) in PARAM_NAMES.iter().enumerate() {
            for (j, b) in PARAM_NAMES.iter().enumerate() {
                let _ = writeln!(out, "cov.{a}.{b} = {}", self.covariance[i * 6 + j]);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Fixed fringe frequency (rad per coordinate unit); free when `None`.
    pub frequency: Option<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            frequency: None,
            max_iterations: 200,
            tolerance: 1e-8,
        }
    }
}

/// Fits the envelope-sinusoid model; `k_constraint` pins the frequency.
pub fn fit_fringe(hist: &CentroidHistogram, k_constraint: Option<f64>) -> Result<FitResult> {
    fit_fringe_with(
        hist,
        &FitOptions {
            frequency: k_constraint,
            ..FitOptions::default()
        },
    )
}

/// Fits independent histograms, each with its own optional frequency.
pub fn fit_batch(
    jobs: &[(&CentroidHistogram, Option<f64>)],
    exec: Execution,
) -> Vec<Result<FitResult>> {
    exec.map_range(jobs.len(), |i| fit_fringe(jobs[i].0, jobs[i].1))
}

/// `2|Σ y e^{−ikX}| / Σ y`: the fringe contrast seen by a single Fourier
/// component at frequency `k`.
pub fn fourier_visibility(hist: &CentroidHistogram, k: f64) -> f64 {
    let mut f = Complex64::new(0.0, 0.0);
    for (s, &y) in hist.counts().iter().enumerate() {
        f += Complex64::from_polar(y, -k * hist.coordinate(s));
    }
    2.0 * f.norm() / hist.total()
}

struct Data {
    u: Vec<f64>,
    y: Vec<f64>,
    inv_sigma: Vec<f64>,
}

// parameter vector layout in pixel units: [A, µ, σ, V, φ, k?]
struct Lm<'a> {
    data: &'a Data,
    fixed_k: Option<f64>,
    max_iterations: usize,
    tolerance: f64,
}

struct LmOutcome {
    p: Vec<f64>,
    chi2: f64,
    iterations: usize,
    converged: bool,
}

impl Lm<'_> {
    fn n_params(&self) -> usize {
        if self.fixed_k.is_some() {
            5
        } else {
            6
        }
    }

    fn k(&self, p: &[f64]) -> f64 {
        self.fixed_k.unwrap_or_else(|| p[5])
    }

    fn chi2(&self, p: &[f64]) -> f64 {
        let k = self.k(p);
        let d = self.data;
        d.u.iter()
            .zip(&d.y)
            .zip(&d.inv_sigma)
            .map(|((&u, &y), &w)| {
                let z = (u - p[1]) / p[2];
                let m = p[0] * (-0.5 * z * z).exp() * (1.0 + p[3] * (k * u + p[4]).cos());
                let r = (y - m) * w;
                r * r
            })
            .sum()
    }

    /// Weighted Jacobian of the model and weighted residuals.
    fn linearize(&self, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n_params();
        let d = self.data;
        let m = d.u.len();
        let k = self.k(p);
        let (a, mu, sig, v, phi) = (p[0], p[1], p[2], p[3], p[4]);
        let mut jac = DMatrix::zeros(m, n);
        let mut res = DVector::zeros(m);
        for i in 0..m {
            let u = d.u[i];
            let w = d.inv_sigma[i];
            let z = (u - mu) / sig;
            let g = (-0.5 * z * z).exp();
            let (sn, cs) = (k * u + phi).sin_cos();
            let fringe = 1.0 + v * cs;
            let model = a * g * fringe;
            res[i] = (d.y[i] - model) * w;
            jac[(i, 0)] = g * fringe * w;
            jac[(i, 1)] = model * z / sig * w;
            jac[(i, 2)] = model * z * z / sig * w;
            jac[(i, 3)] = a * g * cs * w;
            jac[(i, 4)] = -a * g * v * sn * w;
            if n == 6 {
                jac[(i, 5)] = -a * g * v * sn * u * w;
            }
        }
        (jac, res)
    }

    fn project(p: &mut [f64]) {
        p[0] = p[0].max(0.0);
        p[2] = p[2].abs().max(1e-9);
        if p[3] < 0.0 {
            p[3] = -p[3];
            p[4] += PI;
        }
        p[3] = p[3].min(MAX_VISIBILITY);
        p[4] = wrap_phase(p[4]);
    }

    fn scale(p: &[f64], j: usize) -> f64 {
        match j {
            1 => p[2].abs(),
            3 | 4 => 1.0,
            _ => p[j].abs(),
        }
        .max(1e-300)
    }

    fn run(&self, mut p: Vec<f64>) -> LmOutcome {
        let n = self.n_params();
        Self::project(&mut p);
        let mut chi = self.chi2(&p);
        let mut lambda = 1e-3;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.max_iterations {
            iterations += 1;
            let (jac, res) = self.linearize(&p);
            let jtj = jac.transpose() * &jac;
            let grad = jac.transpose() * &res;
            let max_diag = (0..n).map(|j| jtj[(j, j)]).fold(0.0, f64::max);
            let mut accepted = None;
            while lambda <= 1e16 {
                let mut damped = jtj.clone();
                for j in 0..n {
                    damped[(j, j)] += lambda * jtj[(j, j)].max(1e-12 * max_diag);
                }
                let Some(chol) = damped.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let step = chol.solve(&grad);
                let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                Self::project(&mut trial);
                let trial_chi = self.chi2(&trial);
                if trial_chi.is_finite() && trial_chi <= chi {
                    accepted = Some((trial, trial_chi, step));
                    lambda = (lambda * 0.1).max(1e-12);
                    break;
                }
                lambda *= 10.0;
            }
            match accepted {
                Some((trial, trial_chi, step)) => {
                    let small =
                        (0..n).all(|j| step[j].abs() <= self.tolerance * Self::scale(&p, j));
                    let flat = chi - trial_chi <= 1e-15 * chi.max(1e-300);
                    p = trial;
                    chi = trial_chi;
                    if small || (flat && chi == 0.0) {
                        converged = true;
                        break;
                    }
                }
                None => {
                    // no damped step lowers chi²: stationary up to rounding
                    let gnorm = grad.amax();
                    converged = gnorm <= 1e-6 * (1.0 + chi).sqrt() * max_diag.sqrt();
                    break;
                }
            }
        }
        LmOutcome {
            p,
            chi2: chi,
            iterations,
            converged,
        }
    }

    /// Inverse normal matrix; unidentifiable directions get infinite variance.
    fn covariance(&self, p: &[f64]) -> DMatrix<f64> {
        let n = self.n_params();
        let (jac, _) = self.linearize(p);
        let jtj = jac.transpose() * &jac;
        if let Some(inv) = jtj.clone().cholesky().map(|c| c.inverse()) {
            return inv;
        }
        let max_diag = (0..n).map(|j| jtj[(j, j)]).fold(0.0, f64::max);
        let keep: Vec<usize> = (0..n).filter(|&j| jtj[(j, j)] > 1e-14 * max_diag).collect();
        let mut out = DMatrix::from_element(n, n, f64::NAN);
        for j in 0..n {
            out[(j, j)] = f64::INFINITY;
        }
        let sub = DMatrix::from_fn(keep.len(), keep.len(), |a, b| jtj[(keep[a], keep[b])]);
        if let Some(inv) = sub.cholesky().map(|c| c.inverse()) {
            for (a, &ja) in keep.iter().enumerate() {
                for (b, &jb) in keep.iter().enumerate() {
                    out[(ja, jb)] = inv[(a, b)];
                }
            }
        }
        out
    }
}

fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

pub fn fit_fringe_with(hist: &CentroidHistogram, opts: &FitOptions) -> Result<FitResult> {
    let n_photons = hist.photon_number() as f64;
    let populated = hist.counts().iter().filter(|&&c| c > 0.0).count();
    if populated <= 2 {
        return Err(Error::DegenerateData(populated));
    }
    if populated < MIN_POPULATED_BINS {
        return Err(Error::InsufficientData {
            required: MIN_POPULATED_BINS,
            found: populated,
        });
    }
    if let Some(k) = opts.frequency {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::invalid("frequency", "constraint must be positive"));
        }
    }
    let pitch = hist.pitch();
    let origin = hist.origin();
    let data = Data {
        u: (0..hist.len()).map(|s| s as f64 / n_photons).collect(),
        y: hist.counts().to_vec(),
        inv_sigma: hist
            .variances()
            .iter()
            .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 })
            .collect(),
    };

    // moments of the positive part
    let w: Vec<f64> = data.y.iter().map(|&y| y.max(0.0)).collect();
    let wsum: f64 = w.iter().sum();
    let mu0 = w.iter().zip(&data.u).map(|(w, u)| w * u).sum::<f64>() / wsum;
    let var0 = w
        .iter()
        .zip(&data.u)
        .map(|(w, u)| w * (u - mu0) * (u - mu0))
        .sum::<f64>()
        / wsum;
    let sigma0 = var0.sqrt().max(0.5 / n_photons);
    let amp0 = data.y.iter().cloned().fold(f64::MIN, f64::max);

    let fourier = |k: f64| -> (f64, f64) {
        let f: Complex64 = w
            .iter()
            .zip(&data.u)
            .map(|(&w, &u)| Complex64::from_polar(w, -k * u))
            .sum();
        ((2.0 * f.norm() / wsum).clamp(0.02, 1.2), f.arg())
    };
    let seed = |k: f64| -> Vec<f64> {
        let (v0, phi0) = fourier(k);
        vec![amp0, mu0, sigma0, v0, phi0]
    };
    let lm = |fixed_k: Option<f64>, max_iterations: usize| Lm {
        data: &data,
        fixed_k,
        max_iterations,
        tolerance: opts.tolerance,
    };

    let (outcome, fixed_k) = match opts.frequency {
        Some(k) => {
            let k_u = k * pitch;
            (lm(Some(k_u), opts.max_iterations).run(seed(k_u)), Some(k_u))
        }
        None => {
            // profile chi² over a frequency grid, then free the frequency
            let span = data.u.last().unwrap() - data.u[0];
            let k_lo = PI / span;
            let k_hi = PI * n_photons;
            let step = PI / (4.0 * span);
            let mut best: Option<(f64, Vec<f64>, f64)> = None;
            let mut k = k_lo;
            while k <= k_hi {
                let o = lm(Some(k), 60).run(seed(k));
                if best.as_ref().is_none_or(|b| o.chi2 < b.2) {
                    best = Some((k, o.p, o.chi2));
                }
                k += step;
            }
            let (k_best, mut p, _) = best.expect("non-empty frequency grid");
            p.push(k_best);
            (lm(None, opts.max_iterations).run(p), None)
        }
    };

    let free = lm(fixed_k, 0);
    let cov_u = free.covariance(&outcome.p);
    let mut p_u = [0.0; 6];
    p_u[..outcome.p.len()].copy_from_slice(&outcome.p);
    let k_u = fixed_k.unwrap_or(p_u[5]);
    p_u[5] = k_u;

    // map pixel units back to centroid coordinates: X = origin + pitch·u
    let k_x = k_u / pitch;
    let params = FitParams {
        amplitude: p_u[0],
        center: origin + pitch * p_u[1],
        width: pitch * p_u[2],
        visibility: p_u[3],
        phase: wrap_phase(p_u[4] - k_x * origin),
        frequency: k_x,
    };
    let mut t = DMatrix::<f64>::zeros(6, 6);
    t[(0, 0)] = 1.0;
    t[(1, 1)] = pitch;
    t[(2, 2)] = pitch;
    t[(3, 3)] = 1.0;
    t[(4, 4)] = 1.0;
    t[(4, 5)] = -origin / pitch;
    t[(5, 5)] = 1.0 / pitch;
    let mut cov6 = DMatrix::<f64>::zeros(6, 6);
    let n = outcome.p.len();
    for i in 0..n {
        for j in 0..n {
            cov6[(i, j)] = cov_u[(i, j)];
        }
    }
    let cov_x = if cov6.iter().all(|c| c.is_finite()) {
        &t * cov6 * t.transpose()
    } else {
        // keep infinities from leaking NaNs through the transform
        let mut c = DMatrix::<f64>::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                c[(i, j)] = t[(i, i)] * cov6[(i, j)] * t[(j, j)];
            }
        }
        c
    };
    let sig = |i: usize| cov_x[(i, i)].max(0.0).sqrt();
    let sigmas = FitParams::from_array([sig(0), sig(1), sig(2), sig(3), sig(4), sig(5)]);
    let result = FitResult {
        params,
        sigmas,
        covariance: cov_x.transpose().iter().copied().collect(),
        frequency_fixed: fixed_k.is_some(),
        chi_squared: outcome.chi2,
        dof: data.u.len().saturating_sub(n),
        iterations: outcome.iterations,
        converged: outcome.converged,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NotConverged(Box::new(result)))
    }
}
