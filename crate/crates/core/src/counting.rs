//! Counting-rate model for the photon-pair source: quadratic pair
//! generation plus linear incoherent Raman background plus detector dark
//! counts, with accidental coincidences inside a finite window.
//!
//! Alongside the forward model live the derived metrics (heralding
//! efficiencies, the singles-product pair-rate estimate, per-pulse
//! brightness), a global weighted least-squares fit of power-scan data, and
//! a Poissonian simulator used to exercise the fitter.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{self, IterationRecord, LmOptions};

#[derive(Debug, Error)]
pub enum CountingError {
    #[error("invalid counting parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("under-determined fit: {points} distinct powers for {required} free parameters")]
    UnderDetermined { points: usize, required: usize },
    #[error("fit did not converge within the iteration budget")]
    NonConvergence(Box<CountingFit>),
    #[error("power-scan CSV: {0}")]
    Csv(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Parameters of the counting model. Rates are in counts per second; the
/// pair coefficient scales with P² (mW²) and the Raman coefficients with P
/// (mW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingParams {
    pub n_pair_cps_per_mw2: f64,
    pub n_raman_signal_cps_per_mw: f64,
    pub n_raman_idler_cps_per_mw: f64,
    pub eta_signal: f64,
    pub eta_idler: f64,
    pub dark_signal_cps: f64,
    pub dark_idler_cps: f64,
    pub coincidence_window_s: f64,
}

impl CountingParams {
    pub fn validate(&self) -> Result<(), CountingError> {
        let fields = [
            ("n_pair", self.n_pair_cps_per_mw2),
            ("n_raman_signal", self.n_raman_signal_cps_per_mw),
            ("n_raman_idler", self.n_raman_idler_cps_per_mw),
            ("eta_signal", self.eta_signal),
            ("eta_idler", self.eta_idler),
            ("dark_signal", self.dark_signal_cps),
            ("dark_idler", self.dark_idler_cps),
            ("coincidence_window", self.coincidence_window_s),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(CountingError::InvalidParams(format!(
                    "{name} = {v} must be finite and non-negative"
                )));
            }
        }
        if self.eta_signal > 1.0 || self.eta_idler > 1.0 {
            return Err(CountingError::InvalidParams(
                "detection efficiencies must not exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// One measured (or simulated) power-scan point: mean rates and their
/// standard deviations across `repeats` acquisitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerScanPoint {
    pub power_mw: f64,
    pub n_s_cps: f64,
    pub n_i_cps: f64,
    pub n_c_cps: f64,
    pub sd_s: f64,
    pub sd_i: f64,
    pub sd_c: f64,
    pub repeats: u32,
}

/// Forward model: (N_S, N_I, N_C) at average pump power `p_mw`.
///
/// N_S = η_S·N_pair·P² + N_D,S + η_S·N_Raman,S·P (idler analogous);
/// N_C = η_S·η_I·N_pair·P² plus the two pair-background cross-accidental
/// terms and the background-background accidental term, each scaled by the
/// coincidence window.
pub fn predict_rates(params: &CountingParams, p_mw: f64) -> (f64, f64, f64) {
    let p = p_mw;
    let pair = params.n_pair_cps_per_mw2 * p * p;
    let bg_s = params.dark_signal_cps + params.eta_signal * params.n_raman_signal_cps_per_mw * p;
    let bg_i = params.dark_idler_cps + params.eta_idler * params.n_raman_idler_cps_per_mw * p;
    let n_s = params.eta_signal * pair + bg_s;
    let n_i = params.eta_idler * pair + bg_i;
    let dt = params.coincidence_window_s;
    let n_c = params.eta_signal * params.eta_idler * pair
        + params.eta_signal * pair * bg_i * dt
        + params.eta_idler * pair * bg_s * dt
        + bg_i * bg_s * dt;
    (n_s, n_i, n_c)
}

/// Heralding efficiencies H_S = N_C/N_I, H_I = N_C/N_S.
pub fn heralding(n_s: f64, n_i: f64, n_c: f64) -> Result<(f64, f64), CountingError> {
    if n_s <= 0.0 || n_i <= 0.0 {
        return Err(CountingError::DegenerateInput(format!(
            "singles rates must be positive (N_S = {n_s}, N_I = {n_i})"
        )));
    }
    Ok((n_c / n_i, n_c / n_s))
}

/// Pair-generation rate inferred from the singles product, N_S·N_I/N_C.
pub fn klyshko_pair_rate(n_s: f64, n_i: f64, n_c: f64) -> Result<f64, CountingError> {
    if n_c <= 0.0 {
        return Err(CountingError::DegenerateInput(format!(
            "coincidence rate must be positive (N_C = {n_c})"
        )));
    }
    Ok(n_s * n_i / n_c)
}

/// Pair generation rate per pump pulse: N_pair / repetition rate.
pub fn per_pulse_brightness(n_pair_cps_per_mw2: f64, rep_rate_hz: f64) -> f64 {
    debug_assert!(rep_rate_hz > 0.0);
    n_pair_cps_per_mw2 / rep_rate_hz
}

/// Which observable series enter the fit objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesMode {
    /// {N_S, N_I, N_C, H_S, H_I}: the heralding ratios join the objective
    /// as derived series even though they are algebraically dependent.
    #[default]
    Five,
    /// {N_S, N_I, N_C} only.
    Three,
}

/// Configuration of [`fit_counting_model`]. Dark rates are inputs measured
/// at P = 0, not fit parameters.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub coincidence_window_s: f64,
    pub dark_signal_cps: f64,
    pub dark_idler_cps: f64,
    pub series: SeriesMode,
    pub init: Option<CountingParams>,
    pub max_iterations: usize,
    pub step_tolerance: f64,
}

impl FitConfig {
    pub fn new(coincidence_window_s: f64) -> Self {
        Self {
            coincidence_window_s,
            dark_signal_cps: 0.0,
            dark_idler_cps: 0.0,
            series: SeriesMode::default(),
            init: None,
            max_iterations: 200,
            step_tolerance: 1e-10,
        }
    }
}

/// Per-series residual summary of a fit.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesResidual {
    pub series: String,
    pub rms_weighted: f64,
    pub points: usize,
}

/// Result of the global counting-model fit.
#[derive(Debug, Clone, Serialize)]
pub struct CountingFit {
    pub params: CountingParams,
    /// 1σ uncertainties of {N_pair, N_Raman,S, N_Raman,I, η_S, η_I}.
    pub sigma: [f64; 5],
    /// Covariance of the five free parameters.
    pub covariance: Vec<Vec<f64>>,
    pub residuals: Vec<SeriesResidual>,
    pub chi2: f64,
    pub converged: bool,
    #[serde(skip)]
    pub iterations: Vec<IterationRecord>,
}

const FREE_PARAMS: usize = 5;

fn model_triplet_and_jacobian(
    free: &[f64],
    dark_s: f64,
    dark_i: f64,
    dt: f64,
    p: f64,
) -> ([f64; 3], [[f64; FREE_PARAMS]; 3]) {
    let [npair, nrs, nri, es, ei] = [free[0], free[1], free[2], free[3], free[4]];
    let p2 = p * p;
    let pair = npair * p2;
    let bg_s = dark_s + es * nrs * p;
    let bg_i = dark_i + ei * nri * p;
    let n_s = es * pair + bg_s;
    let n_i = ei * pair + bg_i;
    let n_c = es * ei * pair + es * pair * bg_i * dt + ei * pair * bg_s * dt + bg_i * bg_s * dt;

    // partials wrt (npair, nrs, nri, es, ei)
    let d_bg_s = [0.0, es * p, 0.0, nrs * p, 0.0];
    let d_bg_i = [0.0, 0.0, ei * p, 0.0, nri * p];
    let d_pair = [p2, 0.0, 0.0, 0.0, 0.0];
    let d_es = [0.0, 0.0, 0.0, 1.0, 0.0];
    let d_ei = [0.0, 0.0, 0.0, 0.0, 1.0];

    let mut j_s = [0.0; FREE_PARAMS];
    let mut j_i = [0.0; FREE_PARAMS];
    let mut j_c = [0.0; FREE_PARAMS];
    for k in 0..FREE_PARAMS {
        j_s[k] = d_es[k] * pair + es * d_pair[k] + d_bg_s[k];
        j_i[k] = d_ei[k] * pair + ei * d_pair[k] + d_bg_i[k];
        j_c[k] = d_es[k] * ei * pair + es * d_ei[k] * pair + es * ei * d_pair[k]
            + (d_es[k] * pair * bg_i + es * d_pair[k] * bg_i + es * pair * d_bg_i[k]) * dt
            + (d_ei[k] * pair * bg_s + ei * d_pair[k] * bg_s + ei * pair * d_bg_s[k]) * dt
            + (d_bg_i[k] * bg_s + bg_i * d_bg_s[k]) * dt;
    }
    ([n_s, n_i, n_c], [j_s, j_i, j_c])
}

fn default_init(scan: &[PowerScanPoint], cfg: &FitConfig) -> [f64; FREE_PARAMS] {
    // data-driven starting point: heralding at the highest power
    // approximates the efficiencies, the quadratic coefficient follows,
    // and the low-power singles excess seeds the Raman terms
    let hi = scan
        .iter()
        .cloned()
        .max_by(|a, b| a.power_mw.total_cmp(&b.power_mw))
        .expect("non-empty scan");
    let lo = scan
        .iter()
        .cloned()
        .min_by(|a, b| a.power_mw.total_cmp(&b.power_mw))
        .expect("non-empty scan");
    let es = (hi.n_c_cps / hi.n_i_cps.max(1e-12)).clamp(0.01, 1.0);
    let ei = (hi.n_c_cps / hi.n_s_cps.max(1e-12)).clamp(0.01, 1.0);
    let npair = (hi.n_c_cps / (es * ei * hi.power_mw * hi.power_mw)).max(1e-6);
    let raman = |n: f64, dark: f64, eta: f64, p: f64| -> f64 {
        ((n - eta * npair * p * p - dark) / (eta * p)).max(0.0)
    };
    let nrs = raman(lo.n_s_cps, cfg.dark_signal_cps, es, lo.power_mw);
    let nri = raman(lo.n_i_cps, cfg.dark_idler_cps, ei, lo.power_mw);
    [npair, nrs, nri, es, ei]
}

/// Global weighted least-squares fit of the counting model to a power
/// scan. The five shared parameters are {N_pair, N_Raman,S, N_Raman,I,
/// η_S, η_I}; weights come from the per-point standard deviations, with
/// Poisson √N substituted where a σ is missing, and ratio propagation for
/// the derived heralding series.
pub fn fit_counting_model(
    scan: &[PowerScanPoint],
    cfg: &FitConfig,
) -> Result<CountingFit, CountingError> {
    let mut powers: Vec<f64> = scan.iter().map(|p| p.power_mw).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if powers.len() < FREE_PARAMS {
        return Err(CountingError::UnderDetermined {
            points: powers.len(),
            required: FREE_PARAMS,
        });
    }

    // assemble observations: (series id, power, value, sigma)
    #[derive(Clone, Copy)]
    struct Obs {
        series: usize,
        power: f64,
        value: f64,
        sigma: f64,
    }
    let sigma_or_poisson = |sd: f64, n: f64| -> f64 {
        let s = if sd > 0.0 { sd } else { n.abs().sqrt() };
        s.max(1e-6)
    };
    let mut obs = Vec::new();
    for p in scan {
        let ss = sigma_or_poisson(p.sd_s, p.n_s_cps);
        let si = sigma_or_poisson(p.sd_i, p.n_i_cps);
        let sc = sigma_or_poisson(p.sd_c, p.n_c_cps);
        obs.push(Obs { series: 0, power: p.power_mw, value: p.n_s_cps, sigma: ss });
        obs.push(Obs { series: 1, power: p.power_mw, value: p.n_i_cps, sigma: si });
        obs.push(Obs { series: 2, power: p.power_mw, value: p.n_c_cps, sigma: sc });
        if cfg.series == SeriesMode::Five && p.n_s_cps > 0.0 && p.n_i_cps > 0.0 {
            let (h_s, h_i) = (p.n_c_cps / p.n_i_cps, p.n_c_cps / p.n_s_cps);
            let sh_s = h_s.abs() * ((sc / p.n_c_cps.max(1e-12)).powi(2) + (si / p.n_i_cps).powi(2)).sqrt();
            let sh_i = h_i.abs() * ((sc / p.n_c_cps.max(1e-12)).powi(2) + (ss / p.n_s_cps).powi(2)).sqrt();
            obs.push(Obs { series: 3, power: p.power_mw, value: h_s, sigma: sh_s.max(1e-9) });
            obs.push(Obs { series: 4, power: p.power_mw, value: h_i, sigma: sh_i.max(1e-9) });
        }
    }

    let dark_s = cfg.dark_signal_cps;
    let dark_i = cfg.dark_idler_cps;
    let dt = cfg.coincidence_window_s;

    let residuals = |free: &[f64]| -> DVector<f64> {
        DVector::from_iterator(
            obs.len(),
            obs.iter().map(|o| {
                let ([n_s, n_i, n_c], _) =
                    model_triplet_and_jacobian(free, dark_s, dark_i, dt, o.power);
                let model = match o.series {
                    0 => n_s,
                    1 => n_i,
                    2 => n_c,
                    3 => n_c / n_i.max(1e-12),
                    _ => n_c / n_s.max(1e-12),
                };
                (model - o.value) / o.sigma
            }),
        )
    };
    let jacobian = |free: &[f64]| -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(obs.len(), FREE_PARAMS);
        for (row, o) in obs.iter().enumerate() {
            let ([n_s, n_i, n_c], [j_s, j_i, j_c]) =
                model_triplet_and_jacobian(free, dark_s, dark_i, dt, o.power);
            for k in 0..FREE_PARAMS {
                let dm = match o.series {
                    0 => j_s[k],
                    1 => j_i[k],
                    2 => j_c[k],
                    3 => (j_c[k] * n_i - n_c * j_i[k]) / (n_i * n_i).max(1e-24),
                    _ => (j_c[k] * n_s - n_c * j_s[k]) / (n_s * n_s).max(1e-24),
                };
                jac[(row, k)] = dm / o.sigma;
            }
        }
        jac
    };

    let init = match &cfg.init {
        Some(p) => [
            p.n_pair_cps_per_mw2,
            p.n_raman_signal_cps_per_mw,
            p.n_raman_idler_cps_per_mw,
            p.eta_signal,
            p.eta_idler,
        ],
        None => default_init(scan, cfg),
    };
    let lower = [0.0; FREE_PARAMS];
    let upper = [f64::INFINITY, f64::INFINITY, f64::INFINITY, 1.0, 1.0];
    let opts = LmOptions {
        max_iterations: cfg.max_iterations,
        step_tolerance: cfg.step_tolerance,
        ..LmOptions::default()
    };
    let lm = numeric::levenberg_marquardt(&init, &lower, &upper, residuals, jacobian, &opts);

    let params = CountingParams {
        n_pair_cps_per_mw2: lm.params[0],
        n_raman_signal_cps_per_mw: lm.params[1],
        n_raman_idler_cps_per_mw: lm.params[2],
        eta_signal: lm.params[3],
        eta_idler: lm.params[4],
        dark_signal_cps: dark_s,
        dark_idler_cps: dark_i,
        coincidence_window_s: dt,
    };
    let mut sigma = [0.0; FREE_PARAMS];
    for (k, s) in sigma.iter_mut().enumerate() {
        *s = lm.covariance[(k, k)].max(0.0).sqrt();
    }
    let covariance = (0..FREE_PARAMS)
        .map(|i| (0..FREE_PARAMS).map(|j| lm.covariance[(i, j)]).collect())
        .collect();

    let series_names = ["n_s", "n_i", "n_c", "h_s", "h_i"];
    let final_res = {
        let r = residuals_of(&lm.params, &obs, dark_s, dark_i, dt);
        let mut acc = vec![(0.0f64, 0usize); 5];
        for (o, r) in obs.iter().zip(r.iter()) {
            acc[o.series].0 += r * r;
            acc[o.series].1 += 1;
        }
        acc.into_iter()
            .enumerate()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(i, (ss, n))| SeriesResidual {
                series: series_names[i].to_string(),
                rms_weighted: (ss / n as f64).sqrt(),
                points: n,
            })
            .collect::<Vec<_>>()
    };

    fn residuals_of(
        free: &[f64],
        obs: &[Obs],
        dark_s: f64,
        dark_i: f64,
        dt: f64,
    ) -> Vec<f64> {
        obs.iter()
            .map(|o| {
                let ([n_s, n_i, n_c], _) =
                    model_triplet_and_jacobian(free, dark_s, dark_i, dt, o.power);
                let model = match o.series {
                    0 => n_s,
                    1 => n_i,
                    2 => n_c,
                    3 => n_c / n_i.max(1e-12),
                    _ => n_c / n_s.max(1e-12),
                };
                (model - o.value) / o.sigma
            })
            .collect()
    }

    let fit = CountingFit {
        params,
        sigma,
        covariance,
        residuals: final_res,
        chi2: 2.0 * lm.cost,
        converged: lm.converged,
        iterations: lm.iterations,
    };
    if !fit.converged {
        return Err(CountingError::NonConvergence(Box::new(fit)));
    }
    Ok(fit)
}

/// Draws one power-scan point from independent Poisson laws with means
/// `duration × predict_rates(...)`. Deterministic for a given seed.
pub fn simulate_counts(
    params: &CountingParams,
    p_mw: f64,
    duration_s: f64,
    seed: u64,
) -> Result<PowerScanPoint, CountingError> {
    params.validate()?;
    if !(duration_s > 0.0) {
        return Err(CountingError::InvalidParams(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let (r_s, r_i, r_c) = predict_rates(params, p_mw);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rate: f64| -> (f64, f64) {
        let mean = rate * duration_s;
        if mean <= 0.0 {
            return (0.0, 0.0);
        }
        let counts = Poisson::new(mean).expect("positive mean").sample(&mut rng);
        (counts / duration_s, counts.sqrt() / duration_s)
    };
    let (n_s, sd_s) = draw(r_s);
    let (n_i, sd_i) = draw(r_i);
    let (n_c, sd_c) = draw(r_c);
    Ok(PowerScanPoint {
        power_mw: p_mw,
        n_s_cps: n_s,
        n_i_cps: n_i,
        n_c_cps: n_c,
        sd_s,
        sd_i,
        sd_c,
        repeats: 1,
    })
}

pub const POWER_SCAN_HEADER: &str = "power_mw,n_s_cps,n_i_cps,n_c_cps,sd_s,sd_i,sd_c,repeats";

/// Reads a power-scan CSV (`#` starts a comment line).
pub fn read_power_scan(reader: impl Read) -> Result<Vec<PowerScanPoint>, CountingError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.deserialize() {
        let point: PowerScanPoint = record.map_err(|e| CountingError::Csv(e.to_string()))?;
        if point.power_mw < 0.0
            || [point.n_s_cps, point.n_i_cps, point.n_c_cps, point.sd_s, point.sd_i, point.sd_c]
                .iter()
                .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(CountingError::Csv(format!(
                "negative or non-finite value at P = {} mW",
                point.power_mw
            )));
        }
        out.push(point);
    }
    Ok(out)
}

pub fn read_power_scan_path(path: impl AsRef<Path>) -> Result<Vec<PowerScanPoint>, CountingError> {
    let file = std::fs::File::open(path)?;
    read_power_scan(file)
}

/// Writes a power-scan CSV with full round-trip float precision.
pub fn write_power_scan(
    mut writer: impl Write,
    points: &[PowerScanPoint],
) -> Result<(), CountingError> {
    writeln!(writer, "{POWER_SCAN_HEADER}")?;
    for p in points {
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{}",
            p.power_mw, p.n_s_cps, p.n_i_cps, p.n_c_cps, p.sd_s, p.sd_i, p.sd_c, p.repeats
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Parameters from the published power-scan fit.
    pub(crate) fn reference_params(dark_s: f64, dark_i: f64) -> CountingParams {
        CountingParams {
            n_pair_cps_per_mw2: 149.71,
            n_raman_signal_cps_per_mw: 18.61,
            n_raman_idler_cps_per_mw: 450.39,
            eta_signal: 0.25,
            eta_idler: 0.19,
            dark_signal_cps: dark_s,
            dark_idler_cps: dark_i,
            coincidence_window_s: 1e-9,
        }
    }

    #[test]
    fn zero_power_leaves_dark_counts() {
        let mut p = reference_params(120.0, 800.0);
        p.coincidence_window_s = 1e-9;
        let (n_s, n_i, n_c) = predict_rates(&p, 0.0);
        assert_eq!(n_s, 120.0);
        assert_eq!(n_i, 800.0);
        assert_relative_eq!(n_c, 120.0 * 800.0 * 1e-9, max_relative = 1e-14);
    }

    #[test]
    fn predicted_rates_match_frozen_evaluation() {
        // frozen from an independent spreadsheet-style evaluation
        let p = reference_params(0.0, 0.0);
        let (n_s, n_i, n_c) = predict_rates(&p, 10.0);
        assert_relative_eq!(n_s, 3789.2750000000005, max_relative = 1e-12);
        assert_relative_eq!(n_i, 3700.231, max_relative = 1e-12);
        assert_relative_eq!(n_c, 711.1258749778751, max_relative = 1e-12);
    }

    #[test]
    fn pure_pair_coincidences_scale_quadratically() {
        let p = CountingParams {
            n_pair_cps_per_mw2: 42.0,
            n_raman_signal_cps_per_mw: 0.0,
            n_raman_idler_cps_per_mw: 0.0,
            eta_signal: 0.3,
            eta_idler: 0.2,
            dark_signal_cps: 0.0,
            dark_idler_cps: 0.0,
            coincidence_window_s: 0.0,
        };
        let (_, _, c1) = predict_rates(&p, 7.0);
        let (_, _, c2) = predict_rates(&p, 14.0);
        assert_relative_eq!(c2 / c1, 4.0, max_relative = 1e-13);
    }

    #[test]
    fn heralding_trivials() {
        assert_eq!(heralding(100.0, 100.0, 100.0).unwrap(), (1.0, 1.0));
        assert_eq!(heralding(50.0, 80.0, 0.0).unwrap(), (0.0, 0.0));
        assert!(heralding(0.0, 80.0, 10.0).is_err());
    }

    #[test]
    fn heralding_at_reference_parameters() {
        // frozen from the independent evaluation at P = 5 mW
        let p = reference_params(0.0, 0.0);
        let (n_s, n_i, n_c) = predict_rates(&p, 5.0);
        let (h_s, h_i) = heralding(n_s, n_i, n_c).unwrap();
        assert_relative_eq!(h_s, 0.15608616720989782, max_relative = 1e-12);
        assert_relative_eq!(h_i, 0.1853913674841265, max_relative = 1e-12);
    }

    #[test]
    fn signal_heralding_varies_more_than_idler() {
        let p = reference_params(0.0, 0.0);
        let h = |pw: f64| {
            let (n_s, n_i, n_c) = predict_rates(&p, pw);
            heralding(n_s, n_i, n_c).unwrap()
        };
        let (hs_lo, hi_lo) = h(2.0);
        let (hs_hi, hi_hi) = h(35.0);
        let var_s = hs_hi / hs_lo;
        let var_i = hi_hi / hi_lo;
        assert!(var_s > 2.0, "H_S should grow strongly, ratio {var_s}");
        assert!(var_i < 1.1, "H_I should stay nearly flat, ratio {var_i}");
    }

    #[test]
    fn klyshko_trivials_and_identity() {
        assert_eq!(klyshko_pair_rate(100.0, 100.0, 100.0).unwrap(), 100.0);
        assert_eq!(klyshko_pair_rate(200.0, 50.0, 10.0).unwrap(), 1000.0);
        assert!(klyshko_pair_rate(10.0, 10.0, 0.0).is_err());
        // noiseless model: klyshko returns N_pair P² exactly
        let p = CountingParams {
            n_raman_signal_cps_per_mw: 0.0,
            n_raman_idler_cps_per_mw: 0.0,
            dark_signal_cps: 0.0,
            dark_idler_cps: 0.0,
            coincidence_window_s: 0.0,
            ..reference_params(0.0, 0.0)
        };
        for power in [1.0, 5.0, 20.0] {
            let (n_s, n_i, n_c) = predict_rates(&p, power);
            assert_relative_eq!(
                klyshko_pair_rate(n_s, n_i, n_c).unwrap(),
                149.71 * power * power,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn noiseless_heralding_equals_efficiency() {
        let p = CountingParams {
            n_raman_signal_cps_per_mw: 0.0,
            n_raman_idler_cps_per_mw: 0.0,
            dark_signal_cps: 0.0,
            dark_idler_cps: 0.0,
            coincidence_window_s: 0.0,
            ..reference_params(0.0, 0.0)
        };
        let (n_s, n_i, n_c) = predict_rates(&p, 12.0);
        let (h_s, h_i) = heralding(n_s, n_i, n_c).unwrap();
        assert_relative_eq!(h_s, 0.25, max_relative = 1e-13);
        assert_relative_eq!(h_i, 0.19, max_relative = 1e-13);
    }

    #[test]
    fn per_pulse_brightness_cases() {
        assert_relative_eq!(
            per_pulse_brightness(76e6 * 2.1e-6, 76e6),
            2.1e-6,
            max_relative = 1e-13
        );
        assert_eq!(per_pulse_brightness(0.0, 76e6), 0.0);
        // the reference fit corresponds to ~2e-6 pairs/pulse/mW², inside
        // the published 2.1(2)e-6 band
        let b = per_pulse_brightness(149.71, 76e6);
        assert_relative_eq!(b, 1.9698684210526318e-6, max_relative = 1e-12);
        assert!((b - 2.1e-6).abs() <= 2e-7);
    }

    #[test]
    fn raman_dominates_idler_arm_below_crossover() {
        let p = reference_params(0.0, 0.0);
        let crossover = p.n_raman_idler_cps_per_mw / p.n_pair_cps_per_mw2;
        assert!(crossover > 0.0);
        assert_relative_eq!(crossover, 3.0084162714581524, max_relative = 1e-12);
        // below: linear Raman term exceeds quadratic pair term in the idler
        let below = 0.5 * crossover;
        assert!(p.n_raman_idler_cps_per_mw * below > p.n_pair_cps_per_mw2 * below * below);
        let above = 2.0 * crossover;
        assert!(p.n_raman_idler_cps_per_mw * above < p.n_pair_cps_per_mw2 * above * above);
    }

    fn noiseless_scan(params: &CountingParams, powers: &[f64]) -> Vec<PowerScanPoint> {
        powers
            .iter()
            .map(|&pw| {
                let (n_s, n_i, n_c) = predict_rates(params, pw);
                PowerScanPoint {
                    power_mw: pw,
                    n_s_cps: n_s,
                    n_i_cps: n_i,
                    n_c_cps: n_c,
                    sd_s: 0.0,
                    sd_i: 0.0,
                    sd_c: 0.0,
                    repeats: 1,
                }
            })
            .collect()
    }

    pub(crate) const SCAN_POWERS: [f64; 8] = [2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0];

    #[test]
    fn noiseless_fit_is_a_fixed_point() {
        let truth = reference_params(0.0, 0.0);
        let scan = noiseless_scan(&truth, &SCAN_POWERS);
        let fit = fit_counting_model(&scan, &FitConfig::new(1e-9)).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.params.n_pair_cps_per_mw2, 149.71, max_relative = 1e-6);
        assert_relative_eq!(fit.params.n_raman_signal_cps_per_mw, 18.61, max_relative = 1e-6);
        assert_relative_eq!(fit.params.n_raman_idler_cps_per_mw, 450.39, max_relative = 1e-6);
        assert_relative_eq!(fit.params.eta_signal, 0.25, max_relative = 1e-6);
        assert_relative_eq!(fit.params.eta_idler, 0.19, max_relative = 1e-6);
        for s in fit.sigma {
            assert!(s.is_finite() && s >= 0.0);
        }
    }

    #[test]
    fn fit_objective_decreases_monotonically() {
        let truth = reference_params(50.0, 400.0);
        let mut scan = Vec::new();
        for (k, pw) in SCAN_POWERS.iter().enumerate() {
            scan.push(simulate_counts(&truth, *pw, 10.0, 77 + k as u64).unwrap());
        }
        let mut cfg = FitConfig::new(1e-9);
        cfg.dark_signal_cps = 50.0;
        cfg.dark_idler_cps = 400.0;
        let fit = fit_counting_model(&scan, &cfg).unwrap();
        let accepted: Vec<f64> = fit
            .iterations
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.cost)
            .collect();
        assert!(!accepted.is_empty());
        assert!(accepted.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn underdetermined_scan_is_rejected() {
        let truth = reference_params(0.0, 0.0);
        let scan = noiseless_scan(&truth, &[2.0, 5.0, 10.0, 15.0]);
        assert!(matches!(
            fit_counting_model(&scan, &FitConfig::new(1e-9)),
            Err(CountingError::UnderDetermined { .. })
        ));
    }

    #[test]
    fn three_series_mode_also_recovers() {
        let truth = reference_params(0.0, 0.0);
        let scan = noiseless_scan(&truth, &SCAN_POWERS);
        let mut cfg = FitConfig::new(1e-9);
        cfg.series = SeriesMode::Three;
        let fit = fit_counting_model(&scan, &cfg).unwrap();
        assert_relative_eq!(fit.params.n_pair_cps_per_mw2, 149.71, max_relative = 1e-6);
        assert_relative_eq!(fit.params.eta_idler, 0.19, max_relative = 1e-6);
        assert_eq!(fit.residuals.len(), 3);
    }

    #[test]
    fn simulator_is_deterministic_and_zero_for_zero_params() {
        let zero = CountingParams {
            n_pair_cps_per_mw2: 0.0,
            n_raman_signal_cps_per_mw: 0.0,
            n_raman_idler_cps_per_mw: 0.0,
            eta_signal: 0.0,
            eta_idler: 0.0,
            dark_signal_cps: 0.0,
            dark_idler_cps: 0.0,
            coincidence_window_s: 0.0,
        };
        let p = simulate_counts(&zero, 10.0, 5.0, 3).unwrap();
        assert_eq!((p.n_s_cps, p.n_i_cps, p.n_c_cps), (0.0, 0.0, 0.0));

        let truth = reference_params(100.0, 900.0);
        let a = simulate_counts(&truth, 12.0, 2.0, 42).unwrap();
        let b = simulate_counts(&truth, 12.0, 2.0, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_counts(&truth, 12.0, 2.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn simulated_means_approach_predictions() {
        // law-of-large-numbers: sample mean over many seeds within 3σ of
        // the predicted rate
        let truth = reference_params(0.0, 0.0);
        let (r_s, _, _) = predict_rates(&truth, 10.0);
        let duration = 1.0;
        let n = 1000;
        let mean: f64 = (0..n)
            .map(|seed| {
                simulate_counts(&truth, 10.0, duration, seed as u64)
                    .unwrap()
                    .n_s_cps
            })
            .sum::<f64>()
            / n as f64;
        let sigma_mean = (r_s / duration).sqrt() / (n as f64).sqrt();
        assert!(
            (mean - r_s).abs() < 3.0 * sigma_mean,
            "mean {mean} vs predicted {r_s} (σ_mean {sigma_mean})"
        );
    }

    #[test]
    fn csv_round_trip() {
        let truth = reference_params(10.0, 20.0);
        let points: Vec<PowerScanPoint> = (0..5)
            .map(|k| simulate_counts(&truth, 2.0 + k as f64, 3.0, k as u64).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_power_scan(&mut buf, &points).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(POWER_SCAN_HEADER));
        let parsed = read_power_scan(&buf[..]).unwrap();
        assert_eq!(points, parsed);
    }

    #[test]
    fn csv_rejects_negative_counts() {
        let text = format!("{POWER_SCAN_HEADER}\n1.0,-5.0,2.0,1.0,0,0,0,1\n");
        assert!(read_power_scan(text.as_bytes()).is_err());
    }

    #[test]
    fn csv_skips_comment_lines() {
        let text = format!("# comment\n{POWER_SCAN_HEADER}\n# another\n1.0,5.0,2.0,1.0,0,0,0,1\n");
        let parsed = read_power_scan(text.as_bytes()).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].n_s_cps, 5.0);
    }
}
