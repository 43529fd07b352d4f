//! Seeded block-fading channels: i.i.d. Rayleigh small-scale fading scaled by
//! the indoor-hotspot path loss of each link.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{c64, CMat, ComplexMatrix};
use crate::sysmodel::SystemConfig;

/// Node separations in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub d_ua: f64,
    pub d_ur: f64,
    pub d_ra: f64,
}

impl Default for Geometry {
    /// UE at the origin, relay at (1, 0), AP at (0, 10).
    fn default() -> Self {
        Self {
            d_ua: 10.0,
            d_ur: 1.0,
            d_ra: 101f64.sqrt(),
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("d_ua", self.d_ua), ("d_ur", self.d_ur), ("d_ra", self.d_ra)] {
            if !(d >= 1.0) || !d.is_finite() {
                return Err(Error::Config(format!("{name} = {d} m is below the 1 m model floor")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathLossModel {
    /// `max(LOS, NLOS')`.
    #[default]
    Nlos,
    /// LOS branch only.
    Los,
}

fn los_db(d: f64, fc: f64) -> f64 {
    32.4 + 17.3 * d.log10() + 20.0 * fc.log10()
}

fn nlos_prime_db(d: f64, fc: f64) -> f64 {
    17.3 + 38.3 * d.log10() + 24.9 * fc.log10()
}

/// InH NLOS path loss in dB for distance `d` (m) and carrier `fc` (GHz).
pub fn path_loss_db(d: f64, fc: f64) -> Result<f64> {
    path_loss_db_with(PathLossModel::Nlos, d, fc)
}

pub fn path_loss_db_with(model: PathLossModel, d: f64, fc: f64) -> Result<f64> {
    if !(d >= 1.0) || !d.is_finite() {
        return Err(Error::Domain(format!("distance {d} m is below 1 m")));
    }
    if !(fc > 0.0) || !fc.is_finite() {
        return Err(Error::Domain(format!("carrier frequency {fc} GHz must be positive")));
    }
    Ok(match model {
        PathLossModel::Nlos => los_db(d, fc).max(nlos_prime_db(d, fc)),
        PathLossModel::Los => los_db(d, fc),
    })
}

/// Linear amplitude gain `sqrt(10^(-PL/10))`.
pub fn amplitude_gain(path_loss_db: f64) -> f64 {
    10f64.powf(-path_loss_db / 20.0)
}

/// Identifies one generated link; the discriminant is the RNG stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    UaLow = 0,
    UrHigh = 1,
    RaLow = 2,
    UaHigh = 3,
    UrLow = 4,
}

/// All channel matrices of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// UE→AP at f_L, N_a×N_u.
    pub h_ua_fl: ComplexMatrix,
    /// UE→relay at f_H, N_r×N_u.
    pub h_ur_fh: ComplexMatrix,
    /// relay→AP at f_L, N_a×N_r.
    pub h_ra_fl: ComplexMatrix,
    /// UE→AP at f_H (carrier-aggregation baseline), N_a×N_u.
    pub h_ua_fh: ComplexMatrix,
    /// UE→relay at f_L (relay-assisted baseline), N_r×N_u.
    pub h_ur_fl: ComplexMatrix,
    pub seed: u64,
}

impl ChannelSet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Checks every matrix against the antenna counts of `config`.
    pub fn check_dims(&self, config: &SystemConfig) -> Result<()> {
        let (nu, nr, na) = (config.n_u, config.n_r, config.n_a);
        let expect = [
            ("h_ua_fl", &self.h_ua_fl, (na, nu)),
            ("h_ur_fh", &self.h_ur_fh, (nr, nu)),
            ("h_ra_fl", &self.h_ra_fl, (na, nr)),
            ("h_ua_fh", &self.h_ua_fh, (na, nu)),
            ("h_ur_fl", &self.h_ur_fl, (nr, nu)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::DimensionMismatch {
                    name,
                    expected: format!("{}x{}", shape.0, shape.1),
                    found: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
        }
        Ok(())
    }
}

/// `rows×cols` matrix of i.i.d. CN(0, 1) entries.
pub fn rayleigh(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c64::new(re * s, im * s)
    })
}

/// RNG for one link of one realization. Each link draws from its own
/// ChaCha stream, so links never share state.
pub fn link_rng(seed: u64, link: Link) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(link as u64);
    rng
}

pub fn generate_channels(config: &SystemConfig, seed: u64) -> Result<ChannelSet> {
    config.validate()?;
    let g = &config.geometry;
    let model = config.path_loss_model;
    let (nu, nr, na) = (config.n_u, config.n_r, config.n_a);
    let make = |link: Link, rows: usize, cols: usize, d: f64, fc: f64| -> Result<ComplexMatrix> {
        let gain = amplitude_gain(path_loss_db_with(model, d, fc)?);
        let mut rng = link_rng(seed, link);
        ComplexMatrix::new(rayleigh(rows, cols, &mut rng).scale(gain))
    };
    Ok(ChannelSet {
        h_ua_fl: make(Link::UaLow, na, nu, g.d_ua, config.f_l)?,
        h_ur_fh: make(Link::UrHigh, nr, nu, g.d_ur, config.f_h)?,
        h_ra_fl: make(Link::RaLow, na, nr, g.d_ra, config.f_l)?,
        h_ua_fh: make(Link::UaHigh, na, nu, g.d_ua, config.f_h)?,
        h_ur_fl: make(Link::UrLow, nr, nu, g.d_ur, config.f_l)?,
        seed,
    })
}
