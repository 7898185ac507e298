//! Spectrum reconstruction from a family of decay curves.
//!
//! A rectangular estimate at each drive strength (the spectrum assumed flat
//! across the filter lobe) seeds projected gradient descent on
//! `J = Σ (P_s(t_j) − P_s′(t_j))²`, where `P_s′` is the exact filter-function
//! prediction of the candidate spectrum `S′` on a fixed grid.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::curve::DecayCurve;
use crate::error::{Error, Result};
use crate::filter::{chi_weights, filter_function, FilterSpec};
use crate::lln::LlnTone;
use crate::lsq::{levenberg_marquardt, LmOptions};
use crate::psd::{linspace, PsdModel};

/// Below this angular frequency the reconstruction grid is logarithmic.
pub const LOG_GRID_CORNER: f64 = 2.0 * PI * 2_000.0;
/// Curves whose median survival falls below this are treated as
/// tone-dominated.
pub const TONE_MEDIAN_THRESHOLD: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectangularEstimate {
    pub omega: f64,
    /// `S₀(Ω)` (rad²/Hz).
    pub s: f64,
    pub s_sigma: f64,
    pub delta_a: f64,
    pub delta_a_sigma: f64,
    /// Whether the fit resolved a Stark oscillation; `δ_A = 0` otherwise.
    pub delta_a_resolved: bool,
    pub chi2_red: f64,
    pub converged: bool,
}

fn rect_model(s: f64, delta: f64, t: f64) -> f64 {
    0.5 + 0.5 * (delta * t).cos() * (-0.5 * s * t).exp()
}

/// Fit `P = ½ + ½ cos(δ_A t) e^{−S t/2}` with `S, δ_A ≥ 0`.
pub fn rectangular_estimate(curve: &DecayCurve) -> Result<RectangularEstimate> {
    curve.validate()?;
    if curve.len() < 6 {
        return Err(Error::InvalidArgument(format!(
            "rectangular estimate needs at least 6 points, got {}",
            curve.len()
        )));
    }
    let mut sorted = curve.p_s.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    if median < TONE_MEDIAN_THRESHOLD {
        return Err(Error::ToneContamination { median });
    }
    let t = &curve.times;
    let p = &curve.p_s;
    let w = curve.inverse_sigmas();
    let t_max = curve.t_max();
    let min_dt = t.windows(2).map(|x| x[1] - x[0]).fold(f64::INFINITY, f64::min);
    let cost = |s: f64, d: f64| -> f64 {
        t.iter()
            .zip(p)
            .zip(&w)
            .map(|((&ti, &pi), &wi)| ((rect_model(s, d, ti) - pi) * wi).powi(2))
            .sum()
    };

    // Coarse scan over (δ_A, log S) to land in the right basin.
    let d_max = PI / min_dt;
    let n_d = 200;
    let s_lo = 0.01 / t_max;
    let s_hi = 200.0 / t_max;
    let n_s = 30;
    let mut best = (0.0, 0.0, cost(0.0, 0.0));
    for i in 0..n_d {
        let d = d_max * i as f64 / (n_d - 1) as f64;
        for j in 0..=n_s {
            let s = if j == 0 {
                0.0
            } else {
                s_lo * (s_hi / s_lo).powf((j - 1) as f64 / (n_s - 1) as f64)
            };
            let c = cost(s, d);
            if c < best.2 {
                best = (s, d, c);
            }
        }
    }

    let residuals = |q: &[f64]| -> Vec<f64> {
        t.iter()
            .zip(p)
            .zip(&w)
            .map(|((&ti, &pi), &wi)| (rect_model(q[0], q[1], ti) - pi) * wi)
            .collect()
    };
    let fit = levenberg_marquardt(
        residuals,
        &[best.0.max(s_lo), best.1],
        &[0.0, 0.0],
        &[1e4 / t_max, 2.0 * d_max],
        &[1.0 / t_max, 1.0 / t_max],
        &LmOptions::default(),
    );
    // Without attached errors the residual scatter sets the noise level.
    let unit = curve.stderr.iter().all(|&s| s == 0.0);
    let inflate = |chi2: f64| if unit { chi2.sqrt() } else { chi2.max(1.0).sqrt() };

    // A Stark oscillation is only identifiable when the fitted curve dips
    // measurably below ½, which no pure decay can do. Otherwise the cosine
    // merely bends the decay and δ_A is set to zero.
    let noise_level = if unit {
        (fit.cost / fit.n_residuals as f64).sqrt()
    } else {
        let mut s = curve.stderr.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s[s.len() / 2]
    };
    let dip = (0..=2000)
        .map(|i| {
            let ti = t_max * i as f64 / 2000.0;
            rect_model(fit.params[0], fit.params[1], ti) - 0.5
        })
        .fold(f64::INFINITY, f64::min);
    if fit.params[1] > 0.0 && dip < -2.0 * noise_level {
        let chi2_red = fit.reduced_chi2();
        return Ok(RectangularEstimate {
            omega: curve.omega,
            s: fit.params[0],
            s_sigma: fit.sigma(0) * inflate(chi2_red),
            delta_a: fit.params[1],
            delta_a_sigma: fit.sigma(1) * inflate(chi2_red),
            delta_a_resolved: true,
            chi2_red,
            converged: fit.converged,
        });
    }
    let decay_only = |q: &[f64]| residuals(&[q[0], 0.0]);
    let fit = levenberg_marquardt(
        decay_only,
        &[fit.params[0].max(s_lo)],
        &[0.0],
        &[1e4 / t_max],
        &[1.0 / t_max],
        &LmOptions::default(),
    );
    let chi2_red = fit.reduced_chi2();
    Ok(RectangularEstimate {
        omega: curve.omega,
        s: fit.params[0],
        s_sigma: fit.sigma(0) * inflate(chi2_red),
        delta_a: 0.0,
        delta_a_sigma: 0.0,
        delta_a_resolved: false,
        chi2_red,
        converged: fit.converged,
    })
}

/// Frequencies for `S′`: logarithmic below [`LOG_GRID_CORNER`], spacing
/// `π/t_max` above, covering `[min Ω − π/t_max, max Ω + π/t_max]`. Nodes
/// within `±3·2π/t_max` of a tone are dropped.
pub fn reconstruction_grid(omegas: &[f64], t_max: f64, tones: &[LlnTone]) -> Result<Vec<f64>> {
    if omegas.is_empty() || !(t_max > 0.0) {
        return Err(Error::InvalidArgument("need drive frequencies and a positive t_max".into()));
    }
    let step = PI / t_max;
    let w_min = omegas.iter().copied().fold(f64::INFINITY, f64::min);
    let w_max = omegas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = (w_min - step).max(0.0);
    let hi = w_max + step;
    let mut grid = Vec::new();
    let mut lin_start = lo;
    if lo < LOG_GRID_CORNER {
        let corner = LOG_GRID_CORNER.min(hi);
        let first = if lo > 0.0 { lo } else { grid.push(0.0); (2.0 * PI * 20.0).min(corner) };
        // 20 nodes per decade, never coarser than the linear spacing.
        let decades = (corner / first).log10();
        let n = ((decades * 20.0).ceil() as usize).max(1);
        for i in 0..n {
            let w = first * (corner / first).powf(i as f64 / n as f64);
            grid.push(w);
        }
        lin_start = corner;
    }
    let n_lin = ((hi - lin_start) / step).ceil() as usize;
    if n_lin == 0 {
        grid.push(hi);
    } else {
        grid.extend(linspace(lin_start, hi, n_lin + 1));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
    let half = 3.0 * 2.0 * PI / t_max;
    grid.retain(|w| tones.iter().all(|tn| (w - tn.omega0).abs() > half));
    if grid.is_empty() {
        return Err(Error::InvalidArgument("tone masking removed the whole grid".into()));
    }
    Ok(grid)
}

/// Piecewise-linear interpolation of the rectangular estimates onto `grid`.
pub fn rectangular_spectrum(estimates: &[RectangularEstimate], grid: &[f64]) -> Result<PsdModel> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no rectangular estimates".into()));
    }
    let mut pts: Vec<(f64, f64)> = estimates.iter().map(|e| (e.omega, e.s)).collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut nodes: Vec<(f64, f64, usize)> = Vec::new();
    for (w, s) in pts {
        match nodes.last_mut() {
            Some(last) if last.0 == w => {
                last.1 += s;
                last.2 += 1;
            }
            _ => nodes.push((w, s, 1)),
        }
    }
    let base = PsdModel::new(
        nodes.iter().map(|n| n.0).collect(),
        nodes.iter().map(|n| n.1 / n.2 as f64).collect(),
    )?;
    base.resample(grid.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineOptions {
    pub max_iter: usize,
    /// Stop once the relative decrease of `J` in one iteration falls below this.
    pub tol: f64,
    /// Clamp iterates to `S′ ≥ 0`.
    pub project: bool,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Backtracking factor.
    pub shrink: f64,
    /// Stop once `J` falls to this level (discrepancy principle: the summed
    /// squared measurement errors). Below it further descent fits noise.
    pub target_j: Option<f64>,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            tol: 1e-6,
            project: true,
            armijo_c: 1e-4,
            shrink: 0.5,
            target_j: None,
        }
    }
}

struct CurveTerms {
    cos_da: Vec<f64>,
    tone_chi: Vec<f64>,
    weights: Vec<Vec<f64>>,
    p: Vec<f64>,
}

/// Fixed data of the refinement: curves, grid, frozen `δ_A`, and the
/// filter weights of every `(curve, time)` pair against the grid.
pub struct ReconstructionProblem {
    pub curves: Vec<DecayCurve>,
    pub grid: Vec<f64>,
    pub init: PsdModel,
    pub delta_a: Vec<f64>,
    pub tones: Vec<LlnTone>,
    pub options: RefineOptions,
    terms: Vec<CurveTerms>,
}

impl ReconstructionProblem {
    /// `init` is resampled onto `grid`; `delta_a[k]` is frozen for curve `k`.
    /// Known tones contribute a fixed term to every exponent.
    pub fn new(
        curves: Vec<DecayCurve>,
        grid: Vec<f64>,
        init: &PsdModel,
        delta_a: Vec<f64>,
        tones: Vec<LlnTone>,
        options: RefineOptions,
    ) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::InvalidArgument("no curves".into()));
        }
        if delta_a.len() != curves.len() {
            return Err(Error::InvalidArgument("one δ_A per curve required".into()));
        }
        let init = PsdModel::new(grid.clone(), grid.iter().map(|&w| init.eval(w)).collect())?;
        let terms = curves
            .iter()
            .zip(&delta_a)
            .map(|(c, &da)| {
                c.validate()?;
                Ok(CurveTerms {
                    cos_da: c.times.iter().map(|&t| (da * t).cos()).collect(),
                    tone_chi: c
                        .times
                        .iter()
                        .map(|&t| {
                            if t == 0.0 {
                                return 0.0;
                            }
                            let spec = FilterSpec { omega_drive: c.omega, t };
                            tones
                                .iter()
                                .map(|tn| tn.delta_weight() * filter_function(tn.omega0, &spec))
                                .sum()
                        })
                        .collect(),
                    weights: c.times.iter().map(|&t| chi_weights(&grid, c.omega, t)).collect(),
                    p: c.p_s.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            curves,
            grid,
            init,
            delta_a,
            tones,
            options,
            terms,
        })
    }

    fn check(&self, s: &[f64]) {
        assert_eq!(s.len(), self.grid.len(), "S′ must live on the problem grid");
    }

    /// Model survival `P_s′` for every curve and time.
    pub fn predict(&self, s: &[f64]) -> Vec<Vec<f64>> {
        self.check(s);
        self.terms
            .iter()
            .map(|ct| {
                ct.weights
                    .iter()
                    .zip(&ct.cos_da)
                    .zip(&ct.tone_chi)
                    .map(|((w, &cd), &tc)| {
                        let chi: f64 = w.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() + tc;
                        0.5 + 0.5 * cd * (-chi).exp()
                    })
                    .collect()
            })
            .collect()
    }

    /// `J` and per-curve residuals `P_s − P_s′`.
    pub fn objective(&self, s: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let pred = self.predict(s);
        let res: Vec<Vec<f64>> = pred
            .iter()
            .zip(&self.terms)
            .map(|(pp, ct)| ct.p.iter().zip(pp).map(|(a, b)| a - b).collect())
            .collect();
        let j = res.iter().flatten().map(|r| r * r).sum();
        (j, res)
    }

    /// `∂J/∂S′(ω_i) = Σ_j 2(P_s′ − P_s)(−½ cos(δ_A t_j) e^{−χ_j}) W_i(t_j)`.
    pub fn gradient(&self, s: &[f64]) -> Vec<f64> {
        self.check(s);
        let mut g = vec![0.0; s.len()];
        for ct in &self.terms {
            for (j, w) in ct.weights.iter().enumerate() {
                let chi: f64 = w.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() + ct.tone_chi[j];
                let e = ct.cos_da[j] * (-chi).exp();
                let pp = 0.5 + 0.5 * e;
                let coef = 2.0 * (pp - ct.p[j]) * (-0.5 * e);
                for (gi, wi) in g.iter_mut().zip(w) {
                    *gi += coef * wi;
                }
            }
        }
        g
    }
}

pub fn objective(problem: &ReconstructionProblem, s: &[f64]) -> (f64, Vec<Vec<f64>>) {
    problem.objective(s)
}

pub fn gradient_of_objective(problem: &ReconstructionProblem, s: &[f64]) -> Vec<f64> {
    problem.gradient(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineStatus {
    Converged,
    MaxIterations,
    /// Line search could not decrease `J` further.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub j: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineResult {
    pub psd: PsdModel,
    pub log: Vec<IterRecord>,
    pub status: RefineStatus,
}

/// Projected gradient descent from `problem.init` with Armijo backtracking.
pub fn gradient_refine(problem: &ReconstructionProblem) -> Result<RefineResult> {
    let opts = &problem.options;
    if !(opts.shrink > 0.0 && opts.shrink < 1.0) || !(opts.armijo_c > 0.0 && opts.armijo_c < 1.0) {
        return Err(Error::InvalidArgument("line-search constants must lie in (0, 1)".into()));
    }
    let project = |v: f64| if opts.project { v.max(0.0) } else { v };
    let mut s: Vec<f64> = problem.init.values().iter().map(|&v| project(v)).collect();
    let (mut j, _) = problem.objective(&s);
    let mut log = vec![IterRecord { iter: 0, j, step: 0.0 }];
    let mut status = RefineStatus::MaxIterations;
    let mut alpha = {
        let g = problem.gradient(&s);
        let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let smax = s.iter().fold(0.0f64, |m, x| m.max(*x)).max(1.0);
        if gmax > 0.0 { 0.1 * smax / gmax } else { 1.0 }
    };
    let alpha_floor = alpha * 1e-30;

    for iter in 1..=opts.max_iter {
        if j <= 1e-30 || opts.target_j.is_some_and(|t| j <= t) {
            status = RefineStatus::Converged;
            break;
        }
        let g = problem.gradient(&s);
        if g.iter().all(|&x| x == 0.0) {
            status = RefineStatus::Converged;
            break;
        }
        let mut accepted = None;
        while alpha > alpha_floor {
            let trial: Vec<f64> = s.iter().zip(&g).map(|(x, gi)| project(x - alpha * gi)).collect();
            let decrease: f64 = g.iter().zip(&s).zip(&trial).map(|((gi, a), b)| gi * (a - b)).sum();
            let (jt, _) = problem.objective(&trial);
            if decrease > 0.0 && jt <= j - opts.armijo_c * decrease && jt < j {
                accepted = Some((trial, jt));
                break;
            }
            alpha *= opts.shrink;
        }
        let Some((trial, jt)) = accepted else {
            log::info!("line search stalled at iteration {iter}, J = {j:e}");
            status = RefineStatus::Stalled;
            break;
        };
        let rel = (j - jt) / j;
        s = trial;
        j = jt;
        log.push(IterRecord { iter, j, step: alpha });
        alpha *= 2.0;
        if rel < opts.tol {
            status = RefineStatus::Converged;
            break;
        }
    }
    let psd = PsdModel::new(problem.grid.clone(), s)?;
    Ok(RefineResult { psd, log, status })
}

/// `∫|S_est − S_true| / ∫S_true` over `[lo, hi]`, smooth parts only.
pub fn band_relative_error(estimate: &PsdModel, truth: &PsdModel, lo: f64, hi: f64) -> f64 {
    let n = 4001;
    let xs = linspace(lo, hi, n);
    let h = (hi - lo) / (n - 1) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &w) in xs.iter().enumerate() {
        let c = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let st = truth.eval(w);
        num += c * (estimate.eval(w) - st).abs();
        den += c * st;
    }
    num * h / (den * h)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedCurve {
    pub omega: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reconstruction {
    pub rectangular: Vec<RectangularEstimate>,
    pub rejected: Vec<RejectedCurve>,
    pub initial: PsdModel,
    pub refined: RefineResult,
}

/// Rectangular estimates for every curve, then gradient refinement on the
/// standard grid. Tone-contaminated curves are skipped and listed.
pub fn reconstruct(curves: &[DecayCurve], tones: &[LlnTone], options: RefineOptions) -> Result<Reconstruction> {
    let mut rect = Vec::new();
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for c in curves {
        match rectangular_estimate(c) {
            Ok(r) => {
                rect.push(r);
                kept.push(c.clone());
            }
            Err(e @ Error::ToneContamination { .. }) => rejected.push(RejectedCurve {
                omega: c.omega,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidArgument("every curve was rejected".into()));
    }
    let t_max = kept.iter().map(|c| c.t_max()).fold(0.0, f64::max);
    let omegas: Vec<f64> = kept.iter().map(|c| c.omega).collect();
    let grid = reconstruction_grid(&omegas, t_max, tones)?;
    let initial = rectangular_spectrum(&rect, &grid)?;
    let delta_a = rect.iter().map(|r| r.delta_a).collect();
    let mut options = options;
    if options.target_j.is_none() {
        let noise: f64 = kept.iter().flat_map(|c| c.stderr.iter()).map(|s| s * s).sum();
        if noise > 0.0 {
            options.target_j = Some(noise);
        }
    }
    let problem = ReconstructionProblem::new(kept, grid, &initial, delta_a, tones.to_vec(), options)?;
    let refined = gradient_refine(&problem)?;
    Ok(Reconstruction {
        rectangular: rect,
        rejected,
        initial,
        refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::predict_decay;

    #[test]
    fn exact_recovery_on_analytic_curve() {
        let s_true = 1.3e3;
        let da = 2.0 * PI * 5e3;
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 2.5e-5).collect();
        let c = predict_decay(&PsdModel::flat(s_true), 2.0 * PI * 3e4, &times, da).unwrap();
        let r = rectangular_estimate(&c).unwrap();
        assert!((r.s / s_true - 1.0).abs() < 1e-6, "{}", r.s);
        assert!((r.delta_a / da - 1.0).abs() < 1e-6, "{}", r.delta_a);
    }

    #[test]
    fn tone_dominated_curve_rejected() {
        let times: Vec<f64> = (0..12).map(|i| i as f64 * 1e-4).collect();
        let p = times.iter().map(|_| 0.3).collect();
        let c = DecayCurve::new(1e5, times, p, vec![0.01; 12]).unwrap();
        assert!(matches!(rectangular_estimate(&c), Err(Error::ToneContamination { .. })));
    }

    #[test]
    fn grid_covers_band_and_masks_tones() {
        let om = [2.0 * PI * 5e3, 2.0 * PI * 30e3];
        let t_max = 2e-3;
        let tone = LlnTone::new(2.0 * PI * 20e3, 1e3, 0.0);
        let g = reconstruction_grid(&om, t_max, &[tone]).unwrap();
        assert!(g[0] <= om[0] - PI / t_max + 1e-9);
        assert!(*g.last().unwrap() >= om[1] + PI / t_max - 1e-9);
        assert!(g.iter().all(|w| (w - tone.omega0).abs() > 6.0 * PI / t_max));
        for p in g.windows(2) {
            assert!(p[1] > p[0]);
            let straddles_tone = p[0] < tone.omega0 && p[1] > tone.omega0;
            if p[0] >= LOG_GRID_CORNER && !straddles_tone {
                assert!(p[1] - p[0] <= PI / t_max * 1.0001);
            }
        }
    }

    #[test]
    fn truth_is_stationary() {
        let grid = reconstruction_grid(&[4e4, 9e4, 1.4e5], 1.9e-3, &[]).unwrap();
        let truth = PsdModel::from_fn(grid.clone(), |w| 500.0 + 5e-3 * w).unwrap();
        let times: Vec<f64> = (1..20).map(|i| i as f64 * 1e-4).collect();
        let curves: Vec<DecayCurve> = [4e4, 9e4, 1.4e5]
            .iter()
            .map(|&om| predict_decay(&truth, om, &times, 0.0).unwrap())
            .collect();
        let p = ReconstructionProblem::new(curves, grid, &truth, vec![0.0; 3], vec![], RefineOptions::default()).unwrap();
        let s = p.init.values().to_vec();
        let (j, _) = p.objective(&s);
        assert!(j < 1e-20, "{j}");
        let g = p.gradient(&s);
        assert!(g.iter().all(|x| x.abs() < 1e-8));
    }
}
