//! Seeded construction of the physical experiment.
//!
//! Geometry lives on a wrap-around square of side `area_side` centered at the
//! origin. Devices are uniform over the square, APs sit on a circle of radius
//! 40 m (which for M = 3 reproduces the reference layout (40,0),
//! (-20, 20*sqrt(3)), (-20, -20*sqrt(3))), and each AP carries a uniform
//! linear array with half-wavelength spacing. Scatterers are placed in the
//! annulus [1 m, Rayleigh distance] around their AP so that NLoS responses
//! are genuinely near-field.

use crate::rng::{substream, StreamClass};
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// 2-D point in meters.
pub type Point = [f64; 2];

/// Full experiment description. Identical configs (including `seed`) yield
/// bit-identical scenarios.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Side of the square area in meters.
    pub area_side: f64,
    /// Number of devices (N).
    pub num_devices: usize,
    /// Number of APs (M).
    pub num_aps: usize,
    /// Antennas per AP (K).
    pub antennas_per_ap: usize,
    /// Signature sequence length (L).
    pub signature_len: usize,
    /// Carrier wavelength in meters.
    pub carrier_wavelength: f64,
    /// Scatterers per AP.
    pub scatterers_per_ap: usize,
    /// Reflection-coefficient variance of each scatterer.
    pub scatter_var: f64,
    /// Fraction of active devices, in (0, 1).
    pub active_ratio: f64,
    /// Background noise power in dBm.
    pub noise_power_dbm: f64,
    /// Device transmit power in dBm, folded multiplicatively into all gains.
    pub tx_power_dbm: f64,
    /// Root RNG seed.
    pub seed: u64,
    /// Explicit AP positions; when absent, APs are placed on the default
    /// 40 m circle (requires `area_side == 200`).
    pub ap_positions: Option<Vec<Point>>,
    /// Orientation of every AP array (unit vector; normalized on use).
    pub array_axis: Point,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_side: 200.0,
            num_devices: 100,
            num_aps: 3,
            antennas_per_ap: 24,
            signature_len: 6,
            carrier_wavelength: 0.2,
            scatterers_per_ap: 8,
            scatter_var: 1.0,
            active_ratio: 0.1,
            noise_power_dbm: -99.0,
            tx_power_dbm: 23.0,
            seed: 0,
            ap_positions: None,
            array_axis: [1.0, 0.0],
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_devices < 1 {
            return Err(Error::Config("num_devices must be >= 1".into()));
        }
        if self.num_aps < 1 {
            return Err(Error::Config("num_aps must be >= 1".into()));
        }
        if self.antennas_per_ap < 2 {
            return Err(Error::Config("antennas_per_ap must be >= 2".into()));
        }
        if self.signature_len < 1 {
            return Err(Error::Config("signature_len must be >= 1".into()));
        }
        if !(self.carrier_wavelength > 0.0) {
            return Err(Error::Config("carrier_wavelength must be > 0".into()));
        }
        if !(self.area_side > 0.0) {
            return Err(Error::Config("area_side must be > 0".into()));
        }
        if !(self.active_ratio > 0.0 && self.active_ratio < 1.0) {
            return Err(Error::Config("active_ratio must be in (0, 1)".into()));
        }
        if !(self.scatter_var >= 0.0) {
            return Err(Error::Config("scatter_var must be >= 0".into()));
        }
        if let Some(aps) = &self.ap_positions {
            if aps.len() != self.num_aps {
                return Err(Error::Config(format!(
                    "ap_positions has {} entries but num_aps = {}",
                    aps.len(),
                    self.num_aps
                )));
            }
            let half = self.area_side / 2.0;
            for p in aps {
                if p[0].abs() > half || p[1].abs() > half {
                    return Err(Error::Config(format!(
                        "AP position ({}, {}) outside the area",
                        p[0], p[1]
                    )));
                }
            }
        } else if (self.area_side - 200.0).abs() > 1e-9 {
            return Err(Error::Config(
                "default AP layout requires area_side = 200; supply ap_positions".into(),
            ));
        }
        let norm = (self.array_axis[0].powi(2) + self.array_axis[1].powi(2)).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Config("array_axis must be a nonzero vector".into()));
        }
        Ok(())
    }

    /// Parse a TOML config file body.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Noise power in linear watts.
    pub fn noise_var(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }

    /// Transmit power in linear watts.
    pub fn tx_power(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// Number of active devices in a ground-truth draw.
    pub fn num_active(&self) -> usize {
        (self.active_ratio * self.num_devices as f64).round() as usize
    }

    /// Rayleigh distance of the configured array.
    pub fn rayleigh(&self) -> f64 {
        rayleigh_distance(self.antennas_per_ap, self.carrier_wavelength)
    }

    fn unit_axis(&self) -> Point {
        let n = (self.array_axis[0].powi(2) + self.array_axis[1].powi(2)).sqrt();
        [self.array_axis[0] / n, self.array_axis[1] / n]
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Toroidal Euclidean distance: per-axis deltas reduced modulo `side` to
/// magnitude at most `side / 2`.
pub fn wrap_distance(p: Point, q: Point, side: f64) -> f64 {
    let d = wrap_displacement(p, q, side);
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

/// Minimum-image displacement of `p` relative to `q`, each component in
/// [-side/2, side/2].
pub fn wrap_displacement(p: Point, q: Point, side: f64) -> Point {
    let mut out = [0.0; 2];
    for ax in 0..2 {
        let mut d = (p[ax] - q[ax]).rem_euclid(side);
        if d > side / 2.0 {
            d -= side;
        }
        out[ax] = d;
    }
    out
}

/// Rayleigh distance 2 D^2 / lambda for a ULA with aperture D = (K-1) lambda / 2.
pub fn rayleigh_distance(antennas: usize, wavelength: f64) -> f64 {
    let aperture = (antennas as f64 - 1.0) * wavelength / 2.0;
    2.0 * aperture * aperture / wavelength
}

/// Path loss in dB at distance `tau_km` kilometers.
pub fn path_loss_db(tau_km: f64) -> f64 {
    128.1 + 37.6 * tau_km.log10()
}

/// Linear amplitude gain at distance `dist_m` meters: transmit power times
/// the path-loss attenuation, with a 1 m distance floor.
pub fn power_gain(tx_watts: f64, dist_m: f64) -> f64 {
    let tau_km = dist_m.max(1.0) / 1000.0;
    tx_watts * 10f64.powf(-path_loss_db(tau_km) / 10.0)
}

/// AP, device and scatterer geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Placement {
    pub ap_positions: Vec<Point>,
    pub device_positions: Vec<Point>,
    /// One list of scatterer positions per AP.
    pub scatterer_positions: Vec<Vec<Point>>,
    /// Unit array-orientation vector shared by all APs.
    pub array_axis: Point,
}

/// L x N matrix of unit-modulus QPSK-alphabet signatures.
#[derive(Debug, Clone)]
pub struct SignatureMatrix(pub DMatrix<Complex64>);

impl SignatureMatrix {
    pub fn column(&self, n: usize) -> nalgebra::DVectorView<'_, Complex64> {
        self.0.column(n)
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn num_devices(&self) -> usize {
        self.0.ncols()
    }
}

/// Device activity: {0,1} ground truth or [0,1] estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivityVector(pub Vec<f64>);

impl ActivityVector {
    pub fn num_active(&self) -> usize {
        self.0.iter().filter(|&&a| a >= 0.5).count()
    }
}

/// Near/far classification of a device relative to one AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldRegion {
    Near,
    Far,
}

/// A fully constructed experiment: geometry, signatures and ground truth.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub placement: Placement,
    pub signatures: SignatureMatrix,
    pub truth: ActivityVector,
}

impl Scenario {
    /// Generate the scenario for trial 0.
    pub fn generate(cfg: &ScenarioConfig) -> Result<Self> {
        Self::generate_trial(cfg, 0)
    }

    /// Generate the scenario for a given trial index. Every random draw class
    /// uses its own (seed, class, trial) substream, so trials are independent
    /// and individually reproducible.
    pub fn generate_trial(cfg: &ScenarioConfig, trial: u64) -> Result<Self> {
        cfg.validate()?;
        let half = cfg.area_side / 2.0;

        let ap_positions = match &cfg.ap_positions {
            Some(p) => p.clone(),
            None => default_ap_layout(cfg.num_aps),
        };

        let mut rng = substream(cfg.seed, StreamClass::Placement, trial);
        let device_positions: Vec<Point> = (0..cfg.num_devices)
            .map(|_| [rng.gen_range(-half..half), rng.gen_range(-half..half)])
            .collect();

        let rayleigh = cfg.rayleigh();
        let mut rng = substream(cfg.seed, StreamClass::Scatterers, trial);
        let scatterer_positions: Vec<Vec<Point>> = ap_positions
            .iter()
            .map(|ap| {
                (0..cfg.scatterers_per_ap)
                    .map(|_| {
                        // Uniform over the annulus [1 m, Rayleigh distance],
                        // wrapped back into the square.
                        let r_min: f64 = 1.0;
                        let r_max = rayleigh.max(r_min + 1e-6);
                        let u: f64 = rng.gen();
                        let r = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
                        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                        wrap_into_square([ap[0] + r * phi.cos(), ap[1] + r * phi.sin()], cfg.area_side)
                    })
                    .collect()
            })
            .collect();

        let mut rng = substream(cfg.seed, StreamClass::Signatures, trial);
        let root2 = std::f64::consts::FRAC_1_SQRT_2;
        let signatures = DMatrix::from_fn(cfg.signature_len, cfg.num_devices, |_, _| {
            let re = if rng.gen::<bool>() { root2 } else { -root2 };
            let im = if rng.gen::<bool>() { root2 } else { -root2 };
            Complex64::new(re, im)
        });

        let mut rng = substream(cfg.seed, StreamClass::Activity, trial);
        let mut truth = vec![0.0; cfg.num_devices];
        for idx in sample(&mut rng, cfg.num_devices, cfg.num_active()).iter() {
            truth[idx] = 1.0;
        }

        Ok(Self {
            cfg: cfg.clone(),
            placement: Placement {
                ap_positions,
                device_positions,
                scatterer_positions,
                array_axis: cfg.unit_axis(),
            },
            signatures: SignatureMatrix(signatures),
            truth: ActivityVector(truth),
        })
    }

    /// Near iff the device is within the Rayleigh distance of the AP
    /// (boundary ties classify as Near).
    pub fn classify_field(&self, device: usize, ap: usize) -> FieldRegion {
        classify_field(
            self.placement.device_positions[device],
            ap,
            &self.placement,
            &self.cfg,
        )
    }

    /// JSON dump of the full scenario for audit.
    pub fn dump_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            version: u32,
            cfg: &'a ScenarioConfig,
            placement: &'a Placement,
            signatures_re: Vec<Vec<f64>>,
            signatures_im: Vec<Vec<f64>>,
            truth: &'a [f64],
        }
        let s = &self.signatures.0;
        let dump = Dump {
            version: 1,
            cfg: &self.cfg,
            placement: &self.placement,
            signatures_re: (0..s.ncols())
                .map(|n| s.column(n).iter().map(|z| z.re).collect())
                .collect(),
            signatures_im: (0..s.ncols())
                .map(|n| s.column(n).iter().map(|z| z.im).collect())
                .collect(),
            truth: &self.truth.0,
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }
}

pub fn classify_field(
    device: Point,
    ap: usize,
    placement: &Placement,
    cfg: &ScenarioConfig,
) -> FieldRegion {
    let d = wrap_distance(device, placement.ap_positions[ap], cfg.area_side);
    if d <= cfg.rayleigh() {
        FieldRegion::Near
    } else {
        FieldRegion::Far
    }
}

/// M APs equally spaced on a circle of radius 40 m starting at angle 0.
/// Reproduces the reference three-AP layout for M = 3.
pub fn default_ap_layout(num_aps: usize) -> Vec<Point> {
    (0..num_aps)
        .map(|m| {
            let phi = std::f64::consts::TAU * m as f64 / num_aps as f64;
            [40.0 * phi.cos(), 40.0 * phi.sin()]
        })
        .collect()
}

fn wrap_into_square(p: Point, side: f64) -> Point {
    let mut out = [0.0; 2];
    for ax in 0..2 {
        let mut v = (p[ax] + side / 2.0).rem_euclid(side) - side / 2.0;
        if v >= side / 2.0 {
            v -= side;
        }
        out[ax] = v;
    }
    out
}
