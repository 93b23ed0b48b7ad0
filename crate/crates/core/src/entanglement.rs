//! Polarization-correlation analysis of the two-photon state
//! |Φ⟩ = γ|HH⟩ + √(1−γ²)·e^{iφ}|VV⟩: coincidence fringes, sinusoidal
//! fitting, visibility, the CHSH statistic, and extraction of the (γ, φ)
//! time series from symmetrized heralding efficiencies.
//!
//! Basis angle conventions: H = 0°, V = +90°, D = +45°, A = −45°.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric;

#[derive(Debug, Error)]
pub enum EntanglementError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("incomplete data: {0}")]
    IncompleteData(String),
    #[error("argument outside the arcsin domain: 2√2·δγ = {0}")]
    ArcsinDomain(f64),
    #[error("fringe CSV: {0}")]
    Csv(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Fixed idler analyzer settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdlerBasis {
    H,
    V,
    D,
    A,
}

impl IdlerBasis {
    pub fn angle_deg(&self) -> f64 {
        match self {
            IdlerBasis::H => 0.0,
            IdlerBasis::V => 90.0,
            IdlerBasis::D => 45.0,
            IdlerBasis::A => -45.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self, EntanglementError> {
        match s.trim() {
            "H" | "h" => Ok(IdlerBasis::H),
            "V" | "v" => Ok(IdlerBasis::V),
            "D" | "d" => Ok(IdlerBasis::D),
            "A" | "a" => Ok(IdlerBasis::A),
            other => Err(EntanglementError::Csv(format!("unknown idler basis {other:?}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            IdlerBasis::H => "H",
            IdlerBasis::V => "V",
            IdlerBasis::D => "D",
            IdlerBasis::A => "A",
        }
    }
}

/// Estimated pure two-photon state with its pair production rate
/// N_Φ (= 2·N_pair).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EntangledStateEstimate {
    pub gamma: f64,
    /// Wrapped to (−π, π].
    pub phi_rad: f64,
    pub pair_rate_cps: f64,
    pub sigma_gamma: f64,
    pub sigma_phi_rad: f64,
}

impl EntangledStateEstimate {
    pub fn new(gamma: f64, phi_rad: f64, pair_rate_cps: f64) -> Result<Self, EntanglementError> {
        if !(0.0..=1.0).contains(&gamma) || !gamma.is_finite() {
            return Err(EntanglementError::InvalidState(format!(
                "gamma = {gamma} outside [0, 1]"
            )));
        }
        if !phi_rad.is_finite() || pair_rate_cps < 0.0 {
            return Err(EntanglementError::InvalidState(
                "phase and pair rate must be finite/non-negative".into(),
            ));
        }
        Ok(Self {
            gamma,
            phi_rad: wrap_phase(phi_rad),
            pair_rate_cps,
            sigma_gamma: 0.0,
            sigma_phi_rad: 0.0,
        })
    }
}

fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * std::f64::consts::PI);
    if p > std::f64::consts::PI {
        p -= 2.0 * std::f64::consts::PI;
    }
    p
}

/// Coincidence rate with the signal polarizer at `theta_deg` and the idler
/// basis fixed:
///
/// N_C = N_Φ·η_S·η_I·|⟨M_S M_I|Φ⟩|²,
/// ⟨M_S M_I|Φ⟩ = γ·cosθ·cosβ + √(1−γ²)e^{iφ}·sinθ·sinβ.
pub fn coincidence_fringe(
    state: &EntangledStateEstimate,
    eta_s: f64,
    eta_i: f64,
    theta_deg: f64,
    basis: IdlerBasis,
) -> Result<f64, EntanglementError> {
    if !(eta_s > 0.0 && eta_s <= 1.0 && eta_i > 0.0 && eta_i <= 1.0) {
        return Err(EntanglementError::InvalidState(format!(
            "efficiencies must lie in (0, 1], got ({eta_s}, {eta_i})"
        )));
    }
    let g = state.gamma;
    let tail = (1.0 - g * g).max(0.0).sqrt();
    let th = theta_deg.to_radians();
    let beta = basis.angle_deg().to_radians();
    let re = g * th.cos() * beta.cos() + tail * state.phi_rad.cos() * th.sin() * beta.sin();
    let im = tail * state.phi_rad.sin() * th.sin() * beta.sin();
    Ok(state.pair_rate_cps * eta_s * eta_i * (re * re + im * im))
}

/// Second-order approximation of the normalized diagonal-basis fringe:
/// N_C/(N_Φ η_S η_I) ≈ ¼·[1 + sin(2θ + arcsin(2√2·δγ))·cos δφ].
pub fn approx_fringe(delta_gamma: f64, delta_phi: f64, theta_deg: f64) -> Result<f64, EntanglementError> {
    let arg = 2.0 * std::f64::consts::SQRT_2 * delta_gamma;
    if arg.abs() > 1.0 {
        return Err(EntanglementError::ArcsinDomain(arg));
    }
    let th2 = 2.0 * theta_deg.to_radians();
    Ok(0.25 * (1.0 + (th2 + arg.asin()).sin() * delta_phi.cos()))
}

/// One angle setting of a polarization-correlation scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub theta_deg: f64,
    pub n_c_cps: f64,
    pub n_s_cps: f64,
    pub n_i_cps: f64,
    pub sd_c: f64,
    pub repeats: u32,
}

/// A correlation scan at one fixed idler basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeDataset {
    pub idler_basis: IdlerBasis,
    pub points: Vec<FringePoint>,
}

impl FringeDataset {
    fn validate(&self) -> Result<(), EntanglementError> {
        if self.points.len() < 8 {
            return Err(EntanglementError::DegenerateInput(format!(
                "fringe needs at least 8 angle points, got {}",
                self.points.len()
            )));
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            lo = lo.min(p.theta_deg);
            hi = hi.max(p.theta_deg);
            if p.n_c_cps < 0.0 || p.n_s_cps < 0.0 || p.n_i_cps < 0.0 {
                return Err(EntanglementError::DegenerateInput(
                    "negative counting rate in fringe".into(),
                ));
            }
        }
        if hi - lo < 180.0 {
            return Err(EntanglementError::DegenerateInput(format!(
                "fringe spans {:.1}° (< 180°)",
                hi - lo
            )));
        }
        Ok(())
    }
}

/// Fitted sinusoid a + b·sin2θ + c·cos2θ with its covariance and derived
/// fringe metrics.
#[derive(Debug, Clone, Serialize)]
pub struct FringeFit {
    pub idler_basis: IdlerBasis,
    pub mean_level: f64,
    pub sin_amplitude: f64,
    pub cos_amplitude: f64,
    /// Row-major 3×3 covariance of (a, b, c).
    pub covariance: [[f64; 3]; 3],
    pub visibility: f64,
    pub sigma_visibility: f64,
    /// Phase of the 2θ sinusoid, atan2(c, b), radians.
    pub fringe_phase_rad: f64,
}

impl FringeFit {
    /// Model value at a signal angle.
    pub fn at(&self, theta_deg: f64) -> f64 {
        let th2 = 2.0 * theta_deg.to_radians();
        self.mean_level + self.sin_amplitude * th2.sin() + self.cos_amplitude * th2.cos()
    }
}

/// Closed-form σ-weighted linear least-squares fit of a fringe to
/// a + b·sin2θ + c·cos2θ, with V = √(b²+c²)/a.
pub fn fit_fringe(data: &FringeDataset) -> Result<FringeFit, EntanglementError> {
    data.validate()?;
    let mut rows = Vec::with_capacity(data.points.len());
    let mut y = Vec::with_capacity(data.points.len());
    let mut sigma = Vec::with_capacity(data.points.len());
    for p in &data.points {
        let th2 = 2.0 * p.theta_deg.to_radians();
        rows.push(vec![1.0, th2.sin(), th2.cos()]);
        y.push(p.n_c_cps);
        sigma.push(if p.sd_c > 0.0 {
            p.sd_c
        } else {
            p.n_c_cps.max(1.0).sqrt()
        });
    }
    let (coef, cov) = numeric::weighted_linear_fit(&rows, &y, &sigma)
        .map_err(|e| EntanglementError::DegenerateInput(e.to_string()))?;
    let (a, b, c) = (coef[0], coef[1], coef[2]);
    if a <= 0.0 {
        return Err(EntanglementError::DegenerateInput(format!(
            "fitted mean level {a} is not positive"
        )));
    }
    let r = (b * b + c * c).sqrt();
    let visibility = r / a;
    // delta method for σ_V
    let grad = if r > 0.0 {
        [-r / (a * a), b / (r * a), c / (r * a)]
    } else {
        [0.0, 0.0, 0.0]
    };
    let mut var = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            var += grad[i] * cov[(i, j)] * grad[j];
        }
    }
    let mut cov_out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            cov_out[i][j] = cov[(i, j)];
        }
    }
    Ok(FringeFit {
        idler_basis: data.idler_basis,
        mean_level: a,
        sin_amplitude: b,
        cos_amplitude: c,
        covariance: cov_out,
        visibility,
        sigma_visibility: var.max(0.0).sqrt(),
        fringe_phase_rad: c.atan2(b),
    })
}

/// Raw-count fringe contrast V = (max − min)/(max + min).
pub fn visibility(max_count: f64, min_count: f64) -> Result<f64, EntanglementError> {
    if !(max_count >= min_count && min_count >= 0.0 && max_count > 0.0) {
        return Err(EntanglementError::DegenerateInput(format!(
            "need max ≥ min ≥ 0 with max > 0, got ({max_count}, {min_count})"
        )));
    }
    Ok((max_count - min_count) / (max_count + min_count))
}

/// The four per-basis fringe fits entering the CHSH statistic.
#[derive(Debug, Clone, Default)]
pub struct FourBasisFits {
    pub h: Option<FringeFit>,
    pub v: Option<FringeFit>,
    pub d: Option<FringeFit>,
    pub a: Option<FringeFit>,
}

impl FourBasisFits {
    pub fn insert(&mut self, fit: FringeFit) {
        match fit.idler_basis {
            IdlerBasis::H => self.h = Some(fit),
            IdlerBasis::V => self.v = Some(fit),
            IdlerBasis::D => self.d = Some(fit),
            IdlerBasis::A => self.a = Some(fit),
        }
    }

    fn require(&self, basis: IdlerBasis) -> Result<&FringeFit, EntanglementError> {
        let f = match basis {
            IdlerBasis::H => &self.h,
            IdlerBasis::V => &self.v,
            IdlerBasis::D => &self.d,
            IdlerBasis::A => &self.a,
        };
        f.as_ref().ok_or_else(|| {
            EntanglementError::IncompleteData(format!("missing {} basis fringe", basis.label()))
        })
    }
}

/// CHSH analyzer settings: two idler basis families and two signal angles.
/// The canonical choice is (H/V, D/A; 22.5°, 67.5°).
#[derive(Debug, Clone, Copy)]
pub struct ChshSettings {
    pub signal_b_deg: f64,
    pub signal_b_prime_deg: f64,
}

impl Default for ChshSettings {
    fn default() -> Self {
        Self {
            signal_b_deg: 22.5,
            signal_b_prime_deg: 67.5,
        }
    }
}

/// Correlator E(family, θ) from two orthogonal-basis fitted fringes:
/// E = (N_∥(θ) + N_⊥(θ⊥) − N_⊥(θ) − N_∥(θ⊥)) / (sum of all four),
/// plus its gradient wrt the two fits' (a, b, c).
fn correlator(par: &FringeFit, perp: &FringeFit, theta_deg: f64) -> (f64, [f64; 3], [f64; 3]) {
    let basis = |th: f64| {
        let t2 = 2.0 * th.to_radians();
        [1.0, t2.sin(), t2.cos()]
    };
    let g_par_th = basis(theta_deg);
    let g_perp_th = basis(theta_deg);
    let g_par_perp = basis(theta_deg + 90.0);
    let g_perp_perp = basis(theta_deg + 90.0);
    let n_par = par.at(theta_deg);
    let n_perp = perp.at(theta_deg);
    let n_par_x = par.at(theta_deg + 90.0);
    let n_perp_x = perp.at(theta_deg + 90.0);
    let num = n_par + n_perp_x - n_perp - n_par_x;
    let den = n_par + n_perp_x + n_perp + n_par_x;
    let e = num / den;
    // dE/dN for (par@θ, perp@θ⊥, perp@θ, par@θ⊥) = ((1∓E)/den with signs)
    let d_pos = (1.0 - e) / den;
    let d_neg = (-1.0 - e) / den;
    let mut grad_par = [0.0; 3];
    let mut grad_perp = [0.0; 3];
    for k in 0..3 {
        grad_par[k] = d_pos * g_par_th[k] + d_neg * g_par_perp[k];
        grad_perp[k] = d_pos * g_perp_perp[k] + d_neg * g_perp_th[k];
    }
    (e, grad_par, grad_perp)
}

/// CHSH S from fitted sinusoids at the canonical basis families:
/// S = E(HV, b) − E(HV, b′) + E(DA, b) + E(DA, b′), with σ_S propagated
/// through the four fits' covariances.
pub fn chsh_s(fits: &FourBasisFits, settings: &ChshSettings) -> Result<(f64, f64), EntanglementError> {
    let h = fits.require(IdlerBasis::H)?;
    let v = fits.require(IdlerBasis::V)?;
    let d = fits.require(IdlerBasis::D)?;
    let a = fits.require(IdlerBasis::A)?;
    let b = settings.signal_b_deg;
    let bp = settings.signal_b_prime_deg;

    let (e_hb, gh1, gv1) = correlator(h, v, b);
    let (e_hbp, gh2, gv2) = correlator(h, v, bp);
    let (e_db, gd1, ga1) = correlator(d, a, b);
    let (e_dbp, gd2, ga2) = correlator(d, a, bp);
    let s = e_hb - e_hbp + e_db + e_dbp;

    // accumulate per-fit gradients of S, then sandwich with covariances
    let acc = |g1: &[f64; 3], w1: f64, g2: &[f64; 3], w2: f64| {
        [
            w1 * g1[0] + w2 * g2[0],
            w1 * g1[1] + w2 * g2[1],
            w1 * g1[2] + w2 * g2[2],
        ]
    };
    let grads = [
        (h, acc(&gh1, 1.0, &gh2, -1.0)),
        (v, acc(&gv1, 1.0, &gv2, -1.0)),
        (d, acc(&gd1, 1.0, &gd2, 1.0)),
        (a, acc(&ga1, 1.0, &ga2, 1.0)),
    ];
    let mut var = 0.0;
    for (fit, g) in grads {
        for i in 0..3 {
            for j in 0..3 {
                var += g[i] * fit.covariance[i][j] * g[j];
            }
        }
    }
    Ok((s, var.max(0.0).sqrt()))
}

/// Raw-count CHSH: reads the needed coincidence rates directly off the
/// datasets at the exact analyzer angles instead of going through fits.
pub fn chsh_s_from_counts(
    datasets: &[FringeDataset],
    settings: &ChshSettings,
) -> Result<f64, EntanglementError> {
    let rate_at = |basis: IdlerBasis, theta: f64| -> Result<f64, EntanglementError> {
        let ds = datasets
            .iter()
            .find(|d| d.idler_basis == basis)
            .ok_or_else(|| {
                EntanglementError::IncompleteData(format!("missing {} basis fringe", basis.label()))
            })?;
        let want = theta.rem_euclid(360.0);
        ds.points
            .iter()
            .find(|p| {
                let t = p.theta_deg.rem_euclid(360.0);
                (t - want).abs() < 1e-6 || (t - want).abs() > 360.0 - 1e-6
            })
            .map(|p| p.n_c_cps)
            .ok_or_else(|| {
                EntanglementError::IncompleteData(format!(
                    "no point at θ = {want}° in the {} basis scan",
                    basis.label()
                ))
            })
    };
    let correlator = |par: IdlerBasis, perp: IdlerBasis, th: f64| -> Result<f64, EntanglementError> {
        let pp = rate_at(par, th)?;
        let xx = rate_at(perp, th + 90.0)?;
        let px = rate_at(par, th + 90.0)?;
        let xp = rate_at(perp, th)?;
        let den = pp + xx + px + xp;
        if den <= 0.0 {
            return Err(EntanglementError::DegenerateInput(
                "all four coincidence rates vanish".into(),
            ));
        }
        Ok((pp + xx - px - xp) / den)
    };
    let b = settings.signal_b_deg;
    let bp = settings.signal_b_prime_deg;
    Ok(correlator(IdlerBasis::H, IdlerBasis::V, b)?
        - correlator(IdlerBasis::H, IdlerBasis::V, bp)?
        + correlator(IdlerBasis::D, IdlerBasis::A, b)?
        + correlator(IdlerBasis::D, IdlerBasis::A, bp)?)
}

/// Symmetrized heralding efficiency H_sym = N_C/√(N_S·N_I), insensitive to
/// pair-rate drift.
pub fn symmetric_heralding(n_s: f64, n_i: f64, n_c: f64) -> Result<f64, EntanglementError> {
    if n_s <= 0.0 || n_i <= 0.0 {
        return Err(EntanglementError::DegenerateInput(format!(
            "singles rates must be positive (N_S = {n_s}, N_I = {n_i})"
        )));
    }
    Ok(n_c / (n_s * n_i).sqrt())
}

/// (γ, φ) estimate from one diagonal-basis scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhaseScanEstimate {
    pub timestamp_s: f64,
    pub gamma: f64,
    /// Unwrapped across scans by nearest-branch continuation (degrees).
    pub phi_deg: f64,
    pub sigma_gamma: f64,
    pub sigma_phi_deg: f64,
    pub converged: bool,
}

/// The extracted per-scan state series.
#[derive(Debug, Clone, Default)]
pub struct PhaseScanSeries {
    pub scans: Vec<PhaseScanEstimate>,
}

/// Inverts a fitted H_sym sinusoid (a, b, c) into (κ, γ, cosφ):
/// H_sym(θ) = κ·[½ + (γ²−½)cos2θ + γ√(1−γ²)cosφ·sin2θ].
fn invert_hsym(a: f64, b: f64, c: f64) -> Option<(f64, f64, f64)> {
    if a <= 0.0 {
        return None;
    }
    let kappa = 2.0 * a;
    let gamma_sq = 0.5 + c / kappa;
    if !(-0.05..=1.05).contains(&gamma_sq) {
        return None;
    }
    let gamma = gamma_sq.clamp(0.0, 1.0).sqrt();
    let cross = gamma * (1.0 - gamma * gamma).max(0.0).sqrt();
    if cross < 1e-6 {
        // product state: the phase is unobservable
        return None;
    }
    let cos_phi = (b / (kappa * cross)).clamp(-1.0, 1.0);
    Some((kappa, gamma, cos_phi))
}

/// Fits the symmetrized-heralding fringe model to every full-rotation
/// diagonal-basis scan and unwraps the extracted phase across scans.
///
/// A scan that fails to fit (or whose inversion leaves the model's domain)
/// is flagged `converged = false`; the series continues, but phase
/// continuation restarts wrapped after the gap.
pub fn extract_phase_series(
    scans: &[(f64, FringeDataset)],
) -> Result<PhaseScanSeries, EntanglementError> {
    let mut out = PhaseScanSeries::default();
    let mut prev_phi: Option<f64> = None;
    for (timestamp, scan) in scans {
        match fit_scan(scan) {
            Some((gamma, phi0_deg, sigma_gamma, sigma_phi_deg)) => {
                let phi = unwrap_nearest(phi0_deg, prev_phi);
                prev_phi = Some(phi);
                out.scans.push(PhaseScanEstimate {
                    timestamp_s: *timestamp,
                    gamma,
                    phi_deg: phi,
                    sigma_gamma,
                    sigma_phi_deg,
                    converged: true,
                });
            }
            None => {
                prev_phi = None;
                out.scans.push(PhaseScanEstimate {
                    timestamp_s: *timestamp,
                    gamma: f64::NAN,
                    phi_deg: f64::NAN,
                    sigma_gamma: f64::NAN,
                    sigma_phi_deg: f64::NAN,
                    converged: false,
                });
            }
        }
    }
    Ok(out)
}

fn fit_scan(scan: &FringeDataset) -> Option<(f64, f64, f64, f64)> {
    if scan.idler_basis != IdlerBasis::D {
        return None;
    }
    // full rotation required
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &scan.points {
        lo = lo.min(p.theta_deg);
        hi = hi.max(p.theta_deg);
    }
    if scan.points.len() < 8 || hi - lo < 350.0 {
        return None;
    }
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut sig = Vec::new();
    for p in &scan.points {
        if p.n_s_cps <= 0.0 || p.n_i_cps <= 0.0 {
            return None;
        }
        let denom = (p.n_s_cps * p.n_i_cps).sqrt();
        let h = p.n_c_cps / denom;
        let sd = if p.sd_c > 0.0 {
            p.sd_c
        } else {
            p.n_c_cps.max(1.0).sqrt()
        };
        let th2 = 2.0 * p.theta_deg.to_radians();
        rows.push(vec![1.0, th2.sin(), th2.cos()]);
        y.push(h);
        sig.push((sd / denom).max(1e-12));
    }
    let (coef, cov) = numeric::weighted_linear_fit(&rows, &y, &sig).ok()?;
    let (a, b, c) = (coef[0], coef[1], coef[2]);
    let (_, gamma, cos_phi) = invert_hsym(a, b, c)?;
    let phi0_deg = cos_phi.acos().to_degrees();

    // delta-method uncertainties via numeric gradients of the inversion
    let eval = |a: f64, b: f64, c: f64| -> Option<(f64, f64)> {
        let (_, g, cp) = invert_hsym(a, b, c)?;
        Some((g, cp.acos().to_degrees()))
    };
    let h_step = [a.abs().max(1e-9) * 1e-6, b.abs().max(1e-9) * 1e-6, c.abs().max(1e-9) * 1e-6];
    let mut grad_g = [0.0; 3];
    let mut grad_p = [0.0; 3];
    for k in 0..3 {
        let mut plus = [a, b, c];
        let mut minus = [a, b, c];
        plus[k] += h_step[k];
        minus[k] -= h_step[k];
        let (gp, pp) = eval(plus[0], plus[1], plus[2])?;
        let (gm, pm) = eval(minus[0], minus[1], minus[2])?;
        grad_g[k] = (gp - gm) / (2.0 * h_step[k]);
        grad_p[k] = (pp - pm) / (2.0 * h_step[k]);
    }
    let mut var_g = 0.0;
    let mut var_p = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            var_g += grad_g[i] * cov[(i, j)] * grad_g[j];
            var_p += grad_p[i] * cov[(i, j)] * grad_p[j];
        }
    }
    Some((gamma, phi0_deg, var_g.max(0.0).sqrt(), var_p.max(0.0).sqrt()))
}

/// Nearest-branch continuation: among ±φ₀ + 360k, pick the candidate
/// closest to the previous unwrapped phase.
fn unwrap_nearest(phi0_deg: f64, prev: Option<f64>) -> f64 {
    let prev = match prev {
        Some(p) => p,
        None => return phi0_deg,
    };
    let mut best = phi0_deg;
    let mut best_dist = f64::INFINITY;
    for sign in [1.0, -1.0] {
        let base = sign * phi0_deg;
        let k = ((prev - base) / 360.0).round();
        for kk in [k - 1.0, k, k + 1.0] {
            let cand = base + 360.0 * kk;
            let dist = (cand - prev).abs();
            if dist < best_dist {
                best_dist = dist;
                best = cand;
            }
        }
    }
    best
}

// ---------------------------------------------------------------- file I/O

pub const FRINGE_HEADER: &str = "timestamp_s,idler_basis,theta_deg,n_c_cps,n_s_cps,n_i_cps,sd_c,repeats";
pub const PHASE_SERIES_HEADER: &str = "timestamp_s,gamma,phi_deg,sigma_gamma,sigma_phi_deg,converged";

/// One row of the fringe CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeRow {
    pub timestamp_s: f64,
    pub idler_basis: IdlerBasis,
    pub point: FringePoint,
}

pub fn read_fringe_csv(reader: impl Read) -> Result<Vec<FringeRow>, EntanglementError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    #[derive(Deserialize)]
    struct Raw {
        timestamp_s: f64,
        idler_basis: String,
        theta_deg: f64,
        n_c_cps: f64,
        n_s_cps: f64,
        n_i_cps: f64,
        sd_c: f64,
        repeats: u32,
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let raw: Raw = rec.map_err(|e| EntanglementError::Csv(e.to_string()))?;
        out.push(FringeRow {
            timestamp_s: raw.timestamp_s,
            idler_basis: IdlerBasis::parse(&raw.idler_basis)?,
            point: FringePoint {
                theta_deg: raw.theta_deg,
                n_c_cps: raw.n_c_cps,
                n_s_cps: raw.n_s_cps,
                n_i_cps: raw.n_i_cps,
                sd_c: raw.sd_c,
                repeats: raw.repeats,
            },
        });
    }
    Ok(out)
}

pub fn read_fringe_csv_path(path: impl AsRef<Path>) -> Result<Vec<FringeRow>, EntanglementError> {
    let file = std::fs::File::open(path)?;
    read_fringe_csv(file)
}

pub fn write_fringe_csv(mut writer: impl Write, rows: &[FringeRow]) -> Result<(), EntanglementError> {
    writeln!(writer, "{FRINGE_HEADER}")?;
    for r in rows {
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{}",
            r.timestamp_s,
            r.idler_basis.label(),
            r.point.theta_deg,
            r.point.n_c_cps,
            r.point.n_s_cps,
            r.point.n_i_cps,
            r.point.sd_c,
            r.point.repeats
        )?;
    }
    Ok(())
}

/// Collects all rows of each idler basis into one dataset (for fringe and
/// CHSH analysis of a four-basis measurement).
pub fn datasets_by_basis(rows: &[FringeRow]) -> Vec<FringeDataset> {
    let mut out: Vec<FringeDataset> = Vec::new();
    for basis in [IdlerBasis::H, IdlerBasis::V, IdlerBasis::D, IdlerBasis::A] {
        let points: Vec<FringePoint> = rows
            .iter()
            .filter(|r| r.idler_basis == basis)
            .map(|r| r.point)
            .collect();
        if !points.is_empty() {
            out.push(FringeDataset {
                idler_basis: basis,
                points,
            });
        }
    }
    out
}

/// Splits rows into sequential scans: a new scan starts whenever the
/// polarizer angle decreases or the basis changes. Scan timestamp = first
/// row's timestamp.
pub fn scans_in_order(rows: &[FringeRow]) -> Vec<(f64, FringeDataset)> {
    let mut out: Vec<(f64, FringeDataset)> = Vec::new();
    for row in rows {
        let start_new = match out.last() {
            None => true,
            Some((_, ds)) => {
                ds.idler_basis != row.idler_basis
                    || ds
                        .points
                        .last()
                        .map(|p| row.point.theta_deg < p.theta_deg)
                        .unwrap_or(true)
            }
        };
        if start_new {
            out.push((
                row.timestamp_s,
                FringeDataset {
                    idler_basis: row.idler_basis,
                    points: Vec::new(),
                },
            ));
        }
        out.last_mut().unwrap().1.points.push(row.point);
    }
    out
}

pub fn write_phase_series_csv(
    mut writer: impl Write,
    series: &PhaseScanSeries,
) -> Result<(), EntanglementError> {
    writeln!(writer, "{PHASE_SERIES_HEADER}")?;
    for s in &series.scans {
        writeln!(
            writer,
            "{},{},{},{},{},{}",
            s.timestamp_s,
            s.gamma,
            s.phi_deg,
            s.sigma_gamma,
            s.sigma_phi_deg,
            if s.converged { 1 } else { 0 }
        )?;
    }
    Ok(())
}
