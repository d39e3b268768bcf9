//! One-dimensional Gaussian mixtures fitted by expectation maximization.

use std::f64::consts::PI;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::seed::rng_from;

pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Lower bound applied to every component standard deviation.
    pub variance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            variance_floor: VARIANCE_FLOOR,
        }
    }
}

/// Mixture parameters. `stds` are standard deviations, not variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl GmmParams {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((&z, &mu), &sd)| z * normal_pdf(x, mu, sd))
            .sum()
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.k()];
        values
            .iter()
            .map(|&x| self.log_joint(x, &mut scratch))
            .sum()
    }

    /// `ln Σ z_j N(x | μ_j, σ_j)`, leaving the per-component log terms in
    /// `out`.
    fn log_joint(&self, x: f64, out: &mut [f64]) -> f64 {
        for j in 0..self.k() {
            out[j] = if self.weights[j] > 0.0 {
                self.weights[j].ln() + normal_log_pdf(x, self.means[j], self.stds[j])
            } else {
                f64::NEG_INFINITY
            };
        }
        log_sum_exp(out)
    }

    /// `(z_1..z_k, μ_1..μ_k, σ_1..σ_k)`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.k());
        v.extend_from_slice(&self.weights);
        v.extend_from_slice(&self.means);
        v.extend_from_slice(&self.stds);
        v
    }

    /// Components sorted by ascending mean (then std, then weight).
    pub fn canonical(&self) -> Self {
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| {
            self.means[a]
                .total_cmp(&self.means[b])
                .then(self.stds[a].total_cmp(&self.stds[b]))
                .then(self.weights[a].total_cmp(&self.weights[b]))
        });
        Self {
            weights: order.iter().map(|&j| self.weights[j]).collect(),
            means: order.iter().map(|&j| self.means[j]).collect(),
            stds: order.iter().map(|&j| self.stds[j]).collect(),
        }
    }

    /// Appends zero-weight components (mean 0, std = floor) up to `k`.
    pub fn padded_to(&self, k: usize, floor: f64) -> Self {
        let mut p = self.clone();
        while p.k() < k {
            p.weights.push(0.0);
            p.means.push(0.0);
            p.stds.push(floor);
        }
        p
    }

    pub fn weighted_mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(z, m)| z * m).sum()
    }

    pub fn weighted_std(&self) -> f64 {
        self.weights.iter().zip(&self.stds).map(|(z, s)| z * s).sum()
    }
}

pub fn normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    normal_log_pdf(x, mu, sd).exp()
}

fn normal_log_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub params: GmmParams,
    pub log_likelihood: f64,
    /// Log-likelihood of the initial parameters followed by one entry per
    /// EM iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub requested_k: usize,
    /// Set when `requested_k` exceeded the number of distinct values and the
    /// fit ran with fewer components.
    pub degraded: bool,
}

impl GmmFit {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }

    /// BIC = −2·logL + (3k−1)·ln m, with k the fitted component count.
    pub fn bic(&self, m: usize) -> f64 {
        let p = (3 * self.params.k() - 1) as f64;
        -2.0 * self.log_likelihood + p * (m as f64).ln()
    }
}

fn distinct_count(values: &[f64]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Fits a `k`-component mixture to `values`.
///
/// Initialization is k-means++ seeding followed by a few Lloyd rounds; EM
/// then runs until the log-likelihood gain drops below `cfg.tol` or
/// `cfg.max_iter` iterations pass. Components are returned sorted by mean.
pub fn fit_gmm(values: &[f64], k: usize, seed: u64, cfg: &EmConfig) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::InvalidArgument("component count must be positive".into()));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot fit a mixture to no values".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("mixture input contains {v}")));
    }
    let distinct = distinct_count(values);
    let k_eff = k.min(distinct);
    let floor = cfg.variance_floor;

    let mut params = initialize(values, k_eff, seed, floor);
    let m = values.len();
    let mut resp = vec![0.0; m * k_eff];
    let mut ll = e_step(&params, values, &mut resp);
    let mut trace = vec![ll];
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        m_step(&mut params, values, &resp, floor);
        let next = e_step(&params, values, &mut resp);
        trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(GmmFit {
        params: params.canonical(),
        log_likelihood: ll,
        trace,
        converged,
        requested_k: k,
        degraded: k_eff < k,
    })
}

fn initialize(values: &[f64], k: usize, seed: u64, floor: f64) -> GmmParams {
    let mut rng = rng_from(seed, &[0x6d6d]);
    let m = values.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(values[rng.gen_range(0..m)]);
    let mut d2: Vec<f64> = values.iter().map(|&x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = m - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // a zero-distance point can only be picked by rounding at the tail
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            values[pick]
        } else {
            values[rng.gen_range(0..m)]
        };
        centers.push(next);
        for (d, &x) in d2.iter_mut().zip(values) {
            *d = d.min((x - next).powi(2));
        }
    }

    let mut assign = vec![0usize; m];
    for _ in 0..10 {
        let mut changed = false;
        for (i, &x) in values.iter().enumerate() {
            let best = nearest(&centers, x);
            if best != assign[i] {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&a, &x) in assign.iter().zip(values) {
            sums[a] += x;
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j] / counts[j] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    for (i, &x) in values.iter().enumerate() {
        assign[i] = nearest(&centers, x);
    }

    let overall_mean = values.iter().sum::<f64>() / m as f64;
    let overall_sd = (values.iter().map(|x| (x - overall_mean).powi(2)).sum::<f64>() / m as f64)
        .sqrt()
        .max(floor);
    let mut weights = vec![0.0; k];
    let mut stds = vec![0.0; k];
    for j in 0..k {
        let members: Vec<f64> = values
            .iter()
            .zip(&assign)
            .filter(|&(_, &a)| a == j)
            .map(|(&x, _)| x)
            .collect();
        if members.is_empty() {
            weights[j] = 1.0 / m as f64;
            stds[j] = overall_sd;
            continue;
        }
        weights[j] = members.len() as f64;
        let var = members.iter().map(|x| (x - centers[j]).powi(2)).sum::<f64>() / members.len() as f64;
        stds[j] = if var > 0.0 { var.sqrt().max(floor) } else { overall_sd };
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmParams {
        weights,
        means: centers,
        stds,
    }
}

fn nearest(centers: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (j, &c) in centers.iter().enumerate() {
        if (x - c).abs() < (x - centers[best]).abs() {
            best = j;
        }
    }
    best
}

/// Fills responsibilities (row-major, m × k) and returns the log-likelihood.
fn e_step(params: &GmmParams, values: &[f64], resp: &mut [f64]) -> f64 {
    let k = params.k();
    let mut ll = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        let lse = params.log_joint(x, row);
        for r in row.iter_mut() {
            *r = (*r - lse).exp();
        }
        ll += lse;
    }
    ll
}

fn m_step(params: &mut GmmParams, values: &[f64], resp: &[f64], floor: f64) {
    let k = params.k();
    let m = values.len();
    for j in 0..k {
        let nk: f64 = (0..m).map(|i| resp[i * k + j]).sum();
        params.weights[j] = nk / m as f64;
        if nk <= 0.0 {
            continue;
        }
        let mean = (0..m).map(|i| resp[i * k + j] * values[i]).sum::<f64>() / nk;
        let var = (0..m)
            .map(|i| resp[i * k + j] * (values[i] - mean).powi(2))
            .sum::<f64>()
            / nk;
        params.means[j] = mean;
        params.stds[j] = var.sqrt().max(floor);
    }
    let total: f64 = params.weights.iter().sum();
    params.weights.iter_mut().for_each(|w| *w /= total);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalK {
    pub k: usize,
    /// BIC-optimal component count per feature.
    pub per_feature: Vec<usize>,
}

/// Per-feature BIC search over `1..=k_max`; the global k is the maximum.
///
/// Columns are used as given, so callers should pass a z-normalized table.
pub fn select_global_k(table: &FeatureTable, k_max: usize, seed: u64, cfg: &EmConfig) -> Result<GlobalK> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let per_feature = (0..table.n_features())
        .into_par_iter()
        .map(|j| best_bic_k(table.column(j), k_max, derive_fit_seed(seed, j), cfg))
        .collect::<Result<Vec<_>>>()?;
    let k = per_feature.iter().copied().max().unwrap_or(1);
    Ok(GlobalK { k, per_feature })
}

fn best_bic_k(values: &[f64], k_max: usize, seed: u64, cfg: &EmConfig) -> Result<usize> {
    let distinct = distinct_count(values);
    let mut best = (f64::INFINITY, 1);
    for k in 1..=k_max.min(distinct) {
        let fit = fit_gmm(values, k, seed, cfg)?;
        let bic = fit.bic(values.len());
        if bic < best.0 {
            best = (bic, k);
        }
    }
    Ok(best.1)
}

pub(crate) fn derive_fit_seed(seed: u64, feature: usize) -> u64 {
    crate::seed::derive_seed(seed, &[0x676d6d, feature as u64])
}

/// Fits every column at the shared `k`, padding degraded fits with
/// zero-weight components so all parameter vectors have `3k` entries.
pub fn fit_all(table: &FeatureTable, k: usize, seed: u64, cfg: &EmConfig) -> Result<Vec<GmmFit>> {
    (0..table.n_features())
        .into_par_iter()
        .map(|j| {
            let mut fit = fit_gmm(table.column(j), k, derive_fit_seed(seed, j), cfg)?;
            if fit.params.k() < k {
                fit.params = fit.params.padded_to(k, cfg.variance_floor);
            }
            Ok(fit)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureTable, TaskKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(rng: &mut ChaCha8Rng, mu: f64, sd: f64) -> f64 {
        // Box-Muller, test-only.
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen();
        mu + sd * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    fn two_halves(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let left = (0..n / 2).map(|_| gaussian(&mut rng, -3.0, 1.0)).collect();
        let right = (0..n / 2).map(|_| gaussian(&mut rng, 3.0, 1.0)).collect();
        (left, right)
    }

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
        (m, var.sqrt())
    }

    /// Adaptive Simpson quadrature; independent of the EM code path.
    fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, depth: u32) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f((a + b) / 2.0) + f(b))
        }
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, eps: f64, depth: u32) -> f64 {
            let c = (a + b) / 2.0;
            let (l, r) = (simpson(f, a, c), simpson(f, c, b));
            if depth == 0 || (l + r - whole).abs() <= 15.0 * eps {
                l + r + (l + r - whole) / 15.0
            } else {
                rec(f, a, c, l, eps / 2.0, depth - 1) + rec(f, c, b, r, eps / 2.0, depth - 1)
            }
        }
        // seed the recursion on a fine grid so narrow peaks are not skipped
        let pieces = 2000;
        let h = (b - a) / pieces as f64;
        (0..pieces)
            .map(|i| {
                let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
                rec(f, x0, x1, simpson(f, x0, x1), eps / pieces as f64, depth)
            })
            .sum()
    }

    #[test]
    fn recovers_two_component_mixture() {
        let (left, right) = two_halves(5000, 11);
        let values: Vec<f64> = left.iter().chain(&right).copied().collect();
        let fit = fit_gmm(&values, 2, 3, &EmConfig::default()).unwrap();
        let p = &fit.params;
        let (lm, _) = mean_sd(&left);
        let (rm, _) = mean_sd(&right);
        assert!((p.means[0] + 3.0).abs() < 0.15, "{p:?}");
        assert!((p.means[1] - 3.0).abs() < 0.15, "{p:?}");
        assert!((p.means[0] - lm).abs() < 0.15 && (p.means[1] - rm).abs() < 0.15);
        for z in &p.weights {
            assert!((z - 0.5).abs() < 0.05, "{p:?}");
        }
    }

    #[test]
    fn recovers_mixture_after_normalization() {
        let (left, right) = two_halves(5000, 12);
        let values: Vec<f64> = left.iter().chain(&right).copied().collect();
        let (mean, sd) = mean_sd(&values);
        let z = crate::dataset::z_score(&values);
        let fit = fit_gmm(&z, 2, 1, &EmConfig::default()).unwrap();
        let raw_means: Vec<f64> = fit.params.means.iter().map(|m| m * sd + mean).collect();
        assert!((raw_means[0] + 3.0).abs() < 0.15 && (raw_means[1] - 3.0).abs() < 0.15);
    }

    #[test]
    fn constant_column() {
        let fit = fit_gmm(&[0.0; 50], 1, 0, &EmConfig::default()).unwrap();
        assert_eq!(fit.params.means, vec![0.0]);
        assert_eq!(fit.params.stds, vec![VARIANCE_FLOOR]);
        assert_eq!(fit.params.weights, vec![1.0]);
    }

    #[test]
    fn degrades_k_to_distinct_count() {
        let values = [0.0, 1.0, 0.0, 1.0, 1.0];
        let fit = fit_gmm(&values, 4, 0, &EmConfig::default()).unwrap();
        assert!(fit.degraded);
        assert_eq!(fit.params.k(), 2);
        assert_eq!(fit.requested_k, 4);
    }

    #[test]
    fn single_gaussian_matches_closed_form_mle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..2000).map(|_| gaussian(&mut rng, 1.5, 2.0)).collect();
        let (m, sd) = mean_sd(&values);
        let fit = fit_gmm(&values, 1, 9, &EmConfig::default()).unwrap();
        assert!(((fit.params.means[0] - m) / m).abs() < 0.02);
        assert!(((fit.params.stds[0] - sd) / sd).abs() < 0.02);
    }

    #[test]
    fn log_likelihood_is_monotone_and_pdf_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..20 {
            let n = 50 + 20 * trial;
            let k = 1 + trial % 4;
            let values: Vec<f64> = (0..n)
                .map(|i| gaussian(&mut rng, (i % 3) as f64 * 2.0, 0.3 + (i % 2) as f64))
                .collect();
            let fit = fit_gmm(&values, k, trial as u64, &EmConfig::default()).unwrap();
            for w in fit.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "trace {:?}", fit.trace);
            }
            let p = &fit.params;
            assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.stds.iter().all(|&s| s >= VARIANCE_FLOOR));
            let lo = (0..k).map(|j| p.means[j] - 8.0 * p.stds[j]).fold(f64::INFINITY, f64::min);
            let hi = (0..k).map(|j| p.means[j] + 8.0 * p.stds[j]).fold(f64::NEG_INFINITY, f64::max);
            let mass = integrate(&|x| p.pdf(x), lo, hi, 1e-9, 30);
            assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
        }
    }

    #[test]
    fn fit_is_bit_reproducible() {
        let (l, r) = two_halves(400, 3);
        let values: Vec<f64> = l.into_iter().chain(r).collect();
        let a = fit_gmm(&values, 3, 42, &EmConfig::default()).unwrap();
        let b = fit_gmm(&values, 3, 42, &EmConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    fn table(columns: Vec<Vec<f64>>) -> FeatureTable {
        let m = columns[0].len();
        let names = (0..columns.len()).map(|i| format!("f{i}")).collect();
        let cols = columns.iter().map(|c| crate::dataset::z_score(c)).collect();
        FeatureTable::new(names, cols, vec![0.0; m], TaskKind::Regression).unwrap()
    }

    /// Brute force: BIC of every k for every column, argmin per column,
    /// max across columns.
    fn brute_force_global_k(t: &FeatureTable, k_max: usize, seed: u64) -> usize {
        (0..t.n_features())
            .map(|j| {
                let col = t.column(j);
                (1..=k_max)
                    .map(|k| {
                        let fit = fit_gmm(col, k, derive_fit_seed(seed, j), &EmConfig::default()).unwrap();
                        let ll: f64 = col.iter().map(|&x| fit.params.pdf(x).ln()).sum();
                        (-2.0 * ll + (3 * k - 1) as f64 * (col.len() as f64).ln(), k)
                    })
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .unwrap()
                    .1
            })
            .max()
            .unwrap()
    }

    #[test]
    fn global_k_unimodal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|j| (0..600).map(|_| gaussian(&mut rng, j as f64, 1.0 + j as f64)).collect())
            .collect();
        let t = table(cols);
        let gk = select_global_k(&t, 3, 1, &EmConfig::default()).unwrap();
        assert_eq!(gk.k, brute_force_global_k(&t, 3, 1));
        assert_eq!(gk.k, 1);
    }

    #[test]
    fn global_k_one_bimodal_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..600).map(|_| gaussian(&mut rng, 0.0, 1.0)).collect())
            .collect();
        cols.push(
            (0..600)
                .map(|i| gaussian(&mut rng, if i % 2 == 0 { -4.0 } else { 4.0 }, 1.0))
                .collect(),
        );
        let t = table(cols);
        let gk = select_global_k(&t, 5, 2, &EmConfig::default()).unwrap();
        assert_eq!(gk.k, brute_force_global_k(&t, 5, 2));
        assert_eq!(gk.k, 2);
        assert_eq!(gk.per_feature[3], 2);
    }

    #[test]
    fn global_k_collapses_with_k_max_one() {
        let (l, r) = two_halves(300, 1);
        let t = table(vec![l, r]);
        assert_eq!(select_global_k(&t, 1, 0, &EmConfig::default()).unwrap().k, 1);
    }

    #[test]
    fn fit_all_pads_degraded_columns() {
        let t = table(vec![vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 2.0, 3.0, 4.0]]);
        let fits = fit_all(&t, 3, 0, &EmConfig::default()).unwrap();
        assert!(fits.iter().all(|f| f.params.k() == 3));
        assert!(fits[0].degraded);
        assert_eq!(fits[0].params.weights[2], 0.0);
    }
}
