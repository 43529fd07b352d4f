//! System configuration, RACA signal model and the achievable rate.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, Geometry, PathLossModel};
use crate::error::{Error, Result};
use crate::matops::{fro_norm_sq, hermitian_part, hermitian_solve, hstack, logdet_hermitian, CMat, ComplexMatrix, LogBase};

/// Relative slack accepted on every power constraint.
pub const FEASIBILITY_TOL: f64 = 1e-9;

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(watt: f64) -> f64 {
    10.0 * watt.log10() + 30.0
}

/// Antenna counts, carriers (GHz), budgets and noise variances (W).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_u: usize,
    pub n_r: usize,
    pub n_a: usize,
    pub n_s: usize,
    pub f_l: f64,
    pub f_h: f64,
    pub p_ua_fl: f64,
    pub p_ur_fh: f64,
    pub p_r: f64,
    pub sigma_r2: f64,
    pub sigma_a2: f64,
    pub geometry: Geometry,
    pub path_loss_model: PathLossModel,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_u: 2,
            n_r: 4,
            n_a: 4,
            n_s: 2,
            f_l: 6.0,
            f_h: 28.0,
            p_ua_fl: dbm_to_watt(10.0),
            p_ur_fh: dbm_to_watt(10.0),
            p_r: dbm_to_watt(10.0),
            sigma_r2: dbm_to_watt(-90.0),
            sigma_a2: dbm_to_watt(-90.0),
            geometry: Geometry::default(),
            path_loss_model: PathLossModel::Nlos,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [("n_u", self.n_u), ("n_r", self.n_r), ("n_a", self.n_a), ("n_s", self.n_s)];
        if let Some((name, _)) = counts.iter().find(|(_, n)| *n == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.n_s > self.n_u.min(self.n_a).min(self.n_r) {
            return Err(Error::Config(format!(
                "n_s = {} exceeds min(n_u, n_a, n_r) = {}",
                self.n_s,
                self.n_u.min(self.n_a).min(self.n_r)
            )));
        }
        if self.n_a < 2 * self.n_s {
            return Err(Error::Config(format!("n_a = {} is below 2 n_s = {}", self.n_a, 2 * self.n_s)));
        }
        for (name, f) in [("f_l", self.f_l), ("f_h", self.f_h)] {
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::Config(format!("{name} must be a positive frequency")));
            }
        }
        // Budgets may be zero (power-split sweeps hit the endpoints).
        for (name, p) in [("p_ua_fl", self.p_ua_fl), ("p_ur_fh", self.p_ur_fh), ("p_r", self.p_r)] {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::Config(format!("{name} must be a nonnegative power")));
            }
        }
        for (name, s) in [("sigma_r2", self.sigma_r2), ("sigma_a2", self.sigma_a2)] {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        self.geometry.validate()
    }

    /// Total transmit power shared by every compared system.
    pub fn total_power(&self) -> f64 {
        self.p_ua_fl + self.p_ur_fh + self.p_r
    }

    pub fn with_noise_dbm(mut self, dbm: f64) -> Self {
        self.sigma_r2 = dbm_to_watt(dbm);
        self.sigma_a2 = self.sigma_r2;
        self
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(s)?;
        let cfg = Self::from(file);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ConfigFile::from(self))?)
    }
}

/// On-disk configuration: powers and noise in dBm, carriers in GHz.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n_u: usize,
    pub n_r: usize,
    pub n_a: usize,
    pub n_s: usize,
    pub f_l_ghz: f64,
    pub f_h_ghz: f64,
    pub p_ua_fl_dbm: f64,
    pub p_ur_fh_dbm: f64,
    pub p_r_dbm: f64,
    pub sigma_r2_dbm: f64,
    pub sigma_a2_dbm: f64,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub path_loss_model: PathLossModel,
}

impl From<ConfigFile> for SystemConfig {
    fn from(f: ConfigFile) -> Self {
        Self {
            n_u: f.n_u,
            n_r: f.n_r,
            n_a: f.n_a,
            n_s: f.n_s,
            f_l: f.f_l_ghz,
            f_h: f.f_h_ghz,
            p_ua_fl: dbm_to_watt(f.p_ua_fl_dbm),
            p_ur_fh: dbm_to_watt(f.p_ur_fh_dbm),
            p_r: dbm_to_watt(f.p_r_dbm),
            sigma_r2: dbm_to_watt(f.sigma_r2_dbm),
            sigma_a2: dbm_to_watt(f.sigma_a2_dbm),
            geometry: f.geometry,
            path_loss_model: f.path_loss_model,
        }
    }
}

impl From<&SystemConfig> for ConfigFile {
    fn from(c: &SystemConfig) -> Self {
        Self {
            n_u: c.n_u,
            n_r: c.n_r,
            n_a: c.n_a,
            n_s: c.n_s,
            f_l_ghz: c.f_l,
            f_h_ghz: c.f_h,
            p_ua_fl_dbm: watt_to_dbm(c.p_ua_fl),
            p_ur_fh_dbm: watt_to_dbm(c.p_ur_fh),
            p_r_dbm: watt_to_dbm(c.p_r),
            sigma_r2_dbm: watt_to_dbm(c.sigma_r2),
            sigma_a2_dbm: watt_to_dbm(c.sigma_a2),
            geometry: c.geometry,
            path_loss_model: c.path_loss_model,
        }
    }
}

/// Precoders, relay matrix and (optionally) the AP receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSolution {
    /// N_u×N_s, f_L direct link.
    pub w_ua: ComplexMatrix,
    /// N_u×N_s, f_H relay link.
    pub w_ur: ComplexMatrix,
    /// N_r×N_r relay amplifying matrix.
    pub psi: ComplexMatrix,
    /// 2N_s×N_a receiver.
    pub w_a: Option<ComplexMatrix>,
}

impl BeamformerSolution {
    pub fn zeros(config: &SystemConfig) -> Self {
        Self {
            w_ua: ComplexMatrix::zeros(config.n_u, config.n_s),
            w_ur: ComplexMatrix::zeros(config.n_u, config.n_s),
            psi: ComplexMatrix::zeros(config.n_r, config.n_r),
            w_a: None,
        }
    }

    pub fn from_parts(w_ua: CMat, w_ur: CMat, psi: CMat) -> Result<Self> {
        Ok(Self {
            w_ua: ComplexMatrix::new(w_ua)?,
            w_ur: ComplexMatrix::new(w_ur)?,
            psi: ComplexMatrix::new(psi)?,
            w_a: None,
        })
    }
}

fn require_shape(name: &'static str, m: &CMat, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::DimensionMismatch {
            name,
            expected: format!("{rows}x{cols}"),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

fn check_solution_dims(ch: &ChannelSet, sol: &BeamformerSolution) -> Result<()> {
    let (na, nu) = ch.h_ua_fl.shape();
    let nr = ch.h_ra_fl.ncols();
    let ns = sol.w_ua.ncols();
    require_shape("h_ur_fh", &ch.h_ur_fh, nr, nu)?;
    require_shape("h_ra_fl", &ch.h_ra_fl, na, nr)?;
    require_shape("w_ua", &sol.w_ua, nu, ns)?;
    require_shape("w_ur", &sol.w_ur, nu, ns)?;
    require_shape("psi", &sol.psi, nr, nr)?;
    if let Some(w_a) = &sol.w_a {
        require_shape("w_a", w_a, 2 * ns, na)?;
    }
    Ok(())
}

/// The composite relay-path channel `H_ra Ψ H_ur` (N_a×N_u).
pub fn relay_path(ch: &ChannelSet, psi: &CMat) -> CMat {
    &*ch.h_ra_fl * psi * &*ch.h_ur_fh
}

/// `H = [H_ua W_ua, H_ra Ψ H_ur W_ur]`, N_a×2N_s.
pub fn effective_channel(ch: &ChannelSet, sol: &BeamformerSolution) -> Result<CMat> {
    check_solution_dims(ch, sol)?;
    let direct = &*ch.h_ua_fl * &*sol.w_ua;
    let relayed = relay_path(ch, &sol.psi) * &*sol.w_ur;
    Ok(hstack(&direct, &relayed))
}

/// AP noise covariance with the relay-forwarded noise term.
pub fn relay_noise_covariance(h_ra: &CMat, psi: &CMat, sigma_r2: f64, sigma_a2: f64) -> CMat {
    let g = h_ra * psi;
    let n = h_ra.nrows();
    hermitian_part(&((&g * g.adjoint()).scale(sigma_r2) + CMat::identity(n, n).scale(sigma_a2)))
}

/// `J = σ_r² (H_ra Ψ)(H_ra Ψ)^H + σ_a² I`.
pub fn noise_covariance(ch: &ChannelSet, sol: &BeamformerSolution, config: &SystemConfig) -> CMat {
    relay_noise_covariance(&ch.h_ra_fl, &sol.psi, config.sigma_r2, config.sigma_a2)
}

/// `log2 |I + H^H J^{-1} H|` for any effective channel and noise covariance.
pub fn rate_bits(h: &CMat, j: &CMat) -> Result<f64> {
    let jinv_h = hermitian_solve(j, h)?;
    let k = h.ncols();
    let m = hermitian_part(&(CMat::identity(k, k) + h.adjoint() * jinv_h));
    Ok(logdet_hermitian(&m, LogBase::Two)?.max(0.0))
}

/// Rate in bits per channel use; the solution must be feasible.
pub fn achievable_rate(ch: &ChannelSet, sol: &BeamformerSolution, config: &SystemConfig) -> Result<f64> {
    let report = validate_solution(ch, sol, config);
    if !report.feasible {
        return Err(Error::Infeasible(format!("power constraints violated: used {:?}, budgets {:?}", report.used, report.budgets)));
    }
    achievable_rate_unchecked(ch, sol, config)
}

/// Rate without the feasibility gate, for diagnostics.
pub fn achievable_rate_unchecked(ch: &ChannelSet, sol: &BeamformerSolution, config: &SystemConfig) -> Result<f64> {
    let h = effective_channel(ch, sol)?;
    rate_bits(&h, &noise_covariance(ch, sol, config))
}

/// `‖Ψ H_ur W‖_F² + σ_r² ‖Ψ‖_F²`.
pub fn relay_power(psi: &CMat, h_ur: &CMat, w: &CMat, sigma_r2: f64) -> f64 {
    fro_norm_sq(&(psi * h_ur * w)) + sigma_r2 * fro_norm_sq(psi)
}

/// Per-constraint usage for the UE f_L, UE f_H and relay budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub used: [f64; 3],
    pub budgets: [f64; 3],
    /// `budget − used`; negative means violated.
    pub slack: [f64; 3],
    pub feasible: bool,
}

impl FeasibilityReport {
    fn new(used: [f64; 3], budgets: [f64; 3]) -> Self {
        let slack = [budgets[0] - used[0], budgets[1] - used[1], budgets[2] - used[2]];
        let feasible = used.iter().zip(&budgets).all(|(u, b)| *u <= b * (1.0 + FEASIBILITY_TOL));
        Self { used, budgets, slack, feasible }
    }

    /// True when some budget is met with equality to relative `tol`.
    pub fn any_active(&self, tol: f64) -> bool {
        self.used.iter().zip(&self.budgets).any(|(u, b)| *b > 0.0 && (b - u).abs() <= tol * b)
    }
}

pub fn validate_solution(ch: &ChannelSet, sol: &BeamformerSolution, config: &SystemConfig) -> FeasibilityReport {
    let used = [
        fro_norm_sq(&sol.w_ua),
        fro_norm_sq(&sol.w_ur),
        relay_power(&sol.psi, &ch.h_ur_fh, &sol.w_ur, config.sigma_r2),
    ];
    FeasibilityReport::new(used, [config.p_ua_fl, config.p_ur_fh, config.p_r])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;
    use crate::matops::{c64, svd};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_solution(cfg: &SystemConfig, seed: u64) -> BeamformerSolution {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_ua = crate::channel::rayleigh(cfg.n_u, cfg.n_s, &mut rng).scale(0.05);
        let w_ur = crate::channel::rayleigh(cfg.n_u, cfg.n_s, &mut rng).scale(0.05);
        let psi = crate::channel::rayleigh(cfg.n_r, cfg.n_r, &mut rng).scale(10.0);
        BeamformerSolution::from_parts(w_ua, w_ur, psi).unwrap()
    }

    #[test]
    fn dbm_conversion() {
        assert_abs_diff_eq!(dbm_to_watt(10.0), 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(dbm_to_watt(-90.0), 1e-12, epsilon = 1e-24);
        assert_abs_diff_eq!(watt_to_dbm(dbm_to_watt(13.0)), 13.0, epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        let ok = SystemConfig::default();
        ok.validate().unwrap();
        assert!(SystemConfig { n_s: 3, ..ok.clone() }.validate().is_err());
        assert!(SystemConfig { n_a: 3, ..ok.clone() }.validate().is_err());
        assert!(SystemConfig { sigma_a2: 0.0, ..ok.clone() }.validate().is_err());
        assert!(SystemConfig { p_r: -1.0, ..ok.clone() }.validate().is_err());
        SystemConfig { p_r: 0.0, ..ok }.validate().unwrap();
    }

    #[test]
    fn config_json_uses_dbm() {
        let json = r#"{"n_u":2,"n_r":4,"n_a":4,"n_s":2,"f_l_ghz":6,"f_h_ghz":28,
            "p_ua_fl_dbm":10,"p_ur_fh_dbm":10,"p_r_dbm":10,"sigma_r2_dbm":-90,"sigma_a2_dbm":-90}"#;
        let cfg = SystemConfig::from_json(json).unwrap();
        assert_abs_diff_eq!(cfg.p_r, 0.01, epsilon = 1e-15);
        assert_eq!(cfg.geometry, Geometry::default());
        let back = SystemConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_abs_diff_eq!(back.sigma_a2, cfg.sigma_a2, epsilon = 1e-24);
    }

    #[test]
    fn effective_channel_blocks() {
        let cfg = SystemConfig::default();
        let ch = generate_channels(&cfg, 1).unwrap();
        let mut sol = random_solution(&cfg, 2);
        let h = effective_channel(&ch, &sol).unwrap();
        // brute-force column stacking
        let a = &*ch.h_ua_fl * &*sol.w_ua;
        let b = &*ch.h_ra_fl * &*sol.psi * &*ch.h_ur_fh * &*sol.w_ur;
        for i in 0..cfg.n_a {
            for j in 0..cfg.n_s {
                assert_eq!(h[(i, j)], a[(i, j)]);
                assert_eq!(h[(i, j + cfg.n_s)], b[(i, j)]);
            }
        }
        sol.psi = ComplexMatrix::zeros(cfg.n_r, cfg.n_r);
        let h = effective_channel(&ch, &sol).unwrap();
        assert!(h.columns(cfg.n_s, cfg.n_s).iter().all(|z| *z == c64::new(0.0, 0.0)));
        let zero = BeamformerSolution::zeros(&cfg);
        assert!(effective_channel(&ch, &zero).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn effective_channel_names_bad_matrix() {
        let cfg = SystemConfig::default();
        let ch = generate_channels(&cfg, 1).unwrap();
        let mut sol = BeamformerSolution::zeros(&cfg);
        sol.psi = ComplexMatrix::zeros(3, 3);
        match effective_channel(&ch, &sol) {
            Err(Error::DimensionMismatch { name, .. }) => assert_eq!(name, "psi"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn noise_covariance_cases() {
        let cfg = SystemConfig::default();
        let ch = generate_channels(&cfg, 3).unwrap();
        let zero = BeamformerSolution::zeros(&cfg);
        let j = noise_covariance(&ch, &zero, &cfg);
        assert_eq!(j, CMat::identity(4, 4).scale(cfg.sigma_a2));
        let sol = random_solution(&cfg, 4);
        let j = noise_covariance(&ch, &sol, &cfg);
        assert!(crate::matops::hermitian_asymmetry(&j) <= 1e-12);
        let eig = crate::matops::hermitian_eig(&j).unwrap();
        assert!(eig.values.iter().all(|&v| v >= cfg.sigma_a2 * (1.0 - 1e-9)));
        let quiet = SystemConfig { sigma_r2: f64::MIN_POSITIVE, ..cfg.clone() };
        let j = noise_covariance(&ch, &sol, &quiet);
        assert!((&j - CMat::identity(4, 4).scale(cfg.sigma_a2)).iter().all(|z| z.norm() < 1e-20));
    }

    #[test]
    fn rate_of_zero_solution() {
        let cfg = SystemConfig::default();
        let ch = generate_channels(&cfg, 5).unwrap();
        assert_eq!(achievable_rate(&ch, &BeamformerSolution::zeros(&cfg), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn rate_matches_parallel_siso_sum() {
        let cfg = SystemConfig::default();
        let ch = generate_channels(&cfg, 6).unwrap();
        let mut sol = random_solution(&cfg, 7);
        sol.psi = ComplexMatrix::zeros(cfg.n_r, cfg.n_r);
        let s = svd(&(&*ch.h_ua_fl * &*sol.w_ua)).unwrap();
        let oracle: f64 = s.singular_values.iter().map(|x| (1.0 + x * x / cfg.sigma_a2).log2()).sum();
        let rate = achievable_rate_unchecked(&ch, &sol, &cfg).unwrap();
        assert!((rate - oracle).abs() <= 1e-9 * oracle);
    }

    #[test]
    fn rate_invariant_under_unitary_mixing() {
        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..20 {
            let ch = generate_channels(&cfg, seed).unwrap();
            let sol = random_solution(&cfg, 100 + seed);
            let h = effective_channel(&ch, &sol).unwrap();
            let j = noise_covariance(&ch, &sol, &cfg);
            let q = svd(&crate::channel::rayleigh(4, 4, &mut rng)).unwrap().u;
            let r0 = rate_bits(&h, &j).unwrap();
            let r1 = rate_bits(&(&h * q), &j).unwrap();
            assert!((r0 - r1).abs() <= 1e-9 * r0.max(1.0));
        }
    }

    #[test]
    fn rate_monotone_in_ap_noise() {
        let cfg = SystemConfig::default();
        let ch = generate_channels(&cfg, 8).unwrap();
        let sol = random_solution(&cfg, 9);
        let mut last = f64::INFINITY;
        for dbm in (-120..=-60).step_by(5) {
            let c = SystemConfig { sigma_a2: dbm_to_watt(dbm as f64), ..cfg.clone() };
            let r = achievable_rate_unchecked(&ch, &sol, &c).unwrap();
            assert!(r <= last + 1e-12);
            last = r;
        }
    }

    #[test]
    fn feasibility_report() {
        let cfg = SystemConfig::default();
        let ch = generate_channels(&cfg, 10).unwrap();
        let zero = BeamformerSolution::zeros(&cfg);
        let rep = validate_solution(&ch, &zero, &cfg);
        assert!(rep.feasible);
        assert_eq!(rep.slack, [cfg.p_ua_fl, cfg.p_ur_fh, cfg.p_r]);

        let mut sol = zero.clone();
        let w = crate::channel::rayleigh(2, 2, &mut ChaCha8Rng::seed_from_u64(1));
        let scale = (2.0 * cfg.p_ua_fl / fro_norm_sq(&w)).sqrt();
        sol.w_ua = ComplexMatrix::new(w.scale(scale)).unwrap();
        let rep = validate_solution(&ch, &sol, &cfg);
        assert!(!rep.feasible);
        assert_abs_diff_eq!(rep.slack[0], -cfg.p_ua_fl, epsilon = 1e-15);
        assert!(achievable_rate(&ch, &sol, &cfg).is_err());
    }
}
