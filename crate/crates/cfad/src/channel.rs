//! Per-(AP, device) channel statistics and received-signal synthesis.
//!
//! Far-field channels are i.i.d. Rayleigh with large-scale gain `g`; near-field
//! channels carry a deterministic spherical-wave LoS mean plus a correlated
//! NLoS covariance of rank `L_m` (one column per scatterer). Covariances are
//! kept in low-rank factor form `B` with `B B^H = Xi`, and the likelihood
//! factors `X = B (x) s` are never materialized at production scale.
//!
//! Vectorization convention: the L x K received block `Y` is stacked
//! column-by-column, so `vec(Y)[k*L + l] = Y[l, k]` and `h (x) s` has entry
//! `h[k] * s[l]` at index `k*L + l`.

use crate::scenario::{
    classify_field, power_gain, wrap_displacement, wrap_distance, ActivityVector, FieldRegion,
    Placement, Scenario, ScenarioConfig, SignatureMatrix,
};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, DVectorView};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// Statistics of one (AP, device) channel.
#[derive(Debug, Clone)]
pub struct ChannelStats {
    pub field: FieldRegion,
    /// LoS mean (length K); zero for far-field devices.
    pub mean: DVector<Complex64>,
    /// K x J factor with `B B^H = Xi` (J = L_m near, K far).
    pub cov_factor: DMatrix<Complex64>,
    /// Large-scale power gain; set for far-field devices only.
    pub gain: Option<f64>,
}

impl ChannelStats {
    pub fn rank(&self) -> usize {
        self.cov_factor.ncols()
    }

    /// Dense K x K covariance `Xi = B B^H`.
    pub fn xi(&self) -> DMatrix<Complex64> {
        let b = &self.cov_factor;
        b * b.adjoint()
    }
}

/// Low-rank representation of `X = Xi^{1/2} (x) s` for one device at one AP.
#[derive(Debug, Clone)]
pub struct XFactor {
    pub device: usize,
    /// The K x J covariance factor B.
    pub cov_part: DMatrix<Complex64>,
    /// Length-L signature.
    pub signature: DVector<Complex64>,
    /// `mean (x) s` of length LK; zero vector for far-field devices.
    pub mean_part: DVector<Complex64>,
    /// Far-field shortcut: B = sqrt(g) I_K.
    pub far_gain: Option<f64>,
    /// Cached dense K x K covariance `Xi = B B^H` (used by refactorization).
    pub xi: DMatrix<Complex64>,
}

impl XFactor {
    pub fn new(stats: &ChannelStats, signature: DVectorView<'_, Complex64>, device: usize) -> Self {
        let s = signature.clone_owned();
        let k = stats.mean.len();
        let mean_part = if stats.field == FieldRegion::Near {
            kron_vec(&stats.mean, &s)
        } else {
            DVector::zeros(k * s.len())
        };
        Self {
            device,
            cov_part: stats.cov_factor.clone(),
            signature: s,
            mean_part,
            far_gain: stats.gain,
            xi: stats.xi(),
        }
    }

    pub fn rank(&self) -> usize {
        self.cov_part.ncols()
    }

    /// Dense LK x J matrix `X = B (x) s` (small-scale / test use).
    pub fn x_matrix(&self) -> DMatrix<Complex64> {
        let k = self.cov_part.nrows();
        let l = self.signature.len();
        let j = self.cov_part.ncols();
        DMatrix::from_fn(l * k, j, |row, col| {
            self.cov_part[(row / l, col)] * self.signature[row % l]
        })
    }

    /// Dense LK x LK product `X X^H` (small-scale / test use).
    pub fn xxh(&self) -> DMatrix<Complex64> {
        let x = self.x_matrix();
        &x * x.adjoint()
    }
}

/// Vectorized received signal at one AP.
#[derive(Debug, Clone)]
pub struct ReceivedSignal {
    /// Length-LK vector `vec(Y_m)`.
    pub y: DVector<Complex64>,
    /// Noise variance in linear watts.
    pub noise_var: f64,
}

/// Kronecker product of an antenna vector (K) and a signature (L), indexed
/// `k*L + l`.
pub fn kron_vec(h: &DVector<Complex64>, s: &DVector<Complex64>) -> DVector<Complex64> {
    let (k, l) = (h.len(), s.len());
    DVector::from_fn(k * l, |i, _| h[i / l] * s[i % l])
}

/// Per-antenna distances from a source point to each element of AP `ap`,
/// plus the distance to the array center. Uses minimum-image displacement.
pub fn element_distances(
    source: [f64; 2],
    ap: usize,
    placement: &Placement,
    cfg: &ScenarioConfig,
) -> (DVector<f64>, f64) {
    let delta = wrap_displacement(source, placement.ap_positions[ap], cfg.area_side);
    let axis = placement.array_axis;
    let k = cfg.antennas_per_ap;
    let spacing = cfg.carrier_wavelength / 2.0;
    let r = DVector::from_fn(k, |idx, _| {
        let t = (idx as f64 - (k as f64 - 1.0) / 2.0) * spacing;
        let dx = delta[0] - t * axis[0];
        let dy = delta[1] - t * axis[1];
        (dx * dx + dy * dy).sqrt()
    });
    let r0 = (delta[0] * delta[0] + delta[1] * delta[1]).sqrt();
    (r, r0)
}

/// Spherical-wave array response: entry k is `exp(-j 2 pi / lambda (r_k - r0))`.
pub fn array_response(r: &DVector<f64>, r0: f64, wavelength: f64) -> DVector<Complex64> {
    let scale = -std::f64::consts::TAU / wavelength;
    r.map(|rk| Complex64::from_polar(1.0, scale * (rk - r0)))
}

/// Construct the channel statistics of device `n` at AP `m`.
pub fn build_channel_stats(
    m: usize,
    n: usize,
    placement: &Placement,
    cfg: &ScenarioConfig,
) -> ChannelStats {
    let device = placement.device_positions[n];
    let ap = placement.ap_positions[m];
    let tx = cfg.tx_power();
    let k = cfg.antennas_per_ap;
    match classify_field(device, m, placement, cfg) {
        FieldRegion::Far => {
            let g = power_gain(tx, wrap_distance(device, ap, cfg.area_side));
            let b = DMatrix::from_diagonal_element(k, k, Complex64::new(g.sqrt(), 0.0));
            ChannelStats {
                field: FieldRegion::Far,
                mean: DVector::zeros(k),
                cov_factor: b,
                gain: Some(g),
            }
        }
        FieldRegion::Near => {
            let (r, r0) = element_distances(device, m, placement, cfg);
            let beta = power_gain(tx, r0).sqrt();
            let mean = array_response(&r, r0, cfg.carrier_wavelength).map(|z| z * beta);
            let sigma = cfg.scatter_var.sqrt();
            let lm = cfg.scatterers_per_ap;
            let mut b = DMatrix::zeros(k, lm);
            for (ell, scat) in placement.scatterer_positions[m].iter().enumerate() {
                // NLoS gain at the two-hop distance device -> scatterer -> AP.
                let hop = wrap_distance(device, *scat, cfg.area_side)
                    + wrap_distance(*scat, ap, cfg.area_side);
                let amp = power_gain(tx, hop).sqrt();
                let (rs, rs0) = element_distances(*scat, m, placement, cfg);
                let resp = array_response(&rs, rs0, cfg.carrier_wavelength);
                b.column_mut(ell)
                    .copy_from(&resp.map(|z| z * (sigma * amp)));
            }
            ChannelStats {
                field: FieldRegion::Near,
                mean,
                cov_factor: b,
                gain: None,
            }
        }
    }
}

/// Draw one channel realization `h = mean + B z`, z circular standard normal.
pub fn sample_channel<R: Rng>(stats: &ChannelStats, rng: &mut R) -> DVector<Complex64> {
    let j = stats.rank();
    let z = DVector::from_fn(j, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    &stats.mean + &stats.cov_factor * z
}

/// All channel statistics of a scenario (M x N grid), built once and shared
/// read-only across trials.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    /// `stats[m][n]` for AP m, device n.
    pub stats: Vec<Vec<ChannelStats>>,
    pub noise_var: f64,
}

impl ChannelModel {
    pub fn new(scenario: &Scenario) -> Self {
        let cfg = &scenario.cfg;
        let stats = (0..cfg.num_aps)
            .map(|m| {
                (0..cfg.num_devices)
                    .map(|n| build_channel_stats(m, n, &scenario.placement, cfg))
                    .collect()
            })
            .collect();
        Self {
            stats,
            noise_var: cfg.noise_var(),
        }
    }

    /// Synthesize one coherence block: fresh channel draws for the active
    /// devices plus i.i.d. complex Gaussian noise at every AP.
    pub fn synthesize_received<R: Rng>(
        &self,
        scenario: &Scenario,
        truth: &ActivityVector,
        channel_rng: &mut R,
        noise_rng: &mut R,
    ) -> Vec<ReceivedSignal> {
        let cfg = &scenario.cfg;
        let lk = cfg.signature_len * cfg.antennas_per_ap;
        let noise_amp = (self.noise_var / 2.0).sqrt();
        (0..cfg.num_aps)
            .map(|m| {
                let mut y = DVector::zeros(lk);
                for n in 0..cfg.num_devices {
                    if truth.0[n] < 0.5 {
                        continue;
                    }
                    let h = sample_channel(&self.stats[m][n], channel_rng);
                    let s = scenario.signatures.column(n).clone_owned();
                    y += kron_vec(&h, &s);
                }
                for v in y.iter_mut() {
                    let re: f64 = noise_rng.sample(StandardNormal);
                    let im: f64 = noise_rng.sample(StandardNormal);
                    *v += Complex64::new(re, im) * noise_amp;
                }
                ReceivedSignal {
                    y,
                    noise_var: self.noise_var,
                }
            })
            .collect()
    }

    /// Low-rank likelihood factors for AP `m`.
    pub fn x_factors(&self, m: usize, signatures: &SignatureMatrix) -> Vec<XFactor> {
        self.stats[m]
            .iter()
            .enumerate()
            .map(|(n, st)| XFactor::new(st, signatures.column(n), n))
            .collect()
    }
}

/// Dense model mean and covariance for an activity vector `theta`
/// (test/oracle use; rejected above `cap`).
pub fn model_mean_cov(
    theta: &[f64],
    stats_row: &[ChannelStats],
    signatures: &SignatureMatrix,
    noise_var: f64,
    cap: usize,
) -> Result<(DVector<Complex64>, DMatrix<Complex64>)> {
    let k = stats_row[0].mean.len();
    let l = signatures.len();
    let lk = l * k;
    if lk > cap {
        return Err(Error::OracleCapExceeded { lk, cap });
    }
    let mut mean = DVector::zeros(lk);
    let mut cov = DMatrix::from_diagonal_element(lk, lk, Complex64::new(noise_var, 0.0));
    for (n, stats) in stats_row.iter().enumerate() {
        if theta[n] == 0.0 {
            continue;
        }
        let s = signatures.column(n).clone_owned();
        if stats.field == FieldRegion::Near {
            mean += kron_vec(&stats.mean, &s).map(|z| z * theta[n]);
        }
        let xi = stats.xi();
        // theta_n * Xi (x) (s s^H)
        for kr in 0..k {
            for kc in 0..k {
                let w = xi[(kr, kc)] * theta[n];
                for lr in 0..l {
                    for lc in 0..l {
                        cov[(kr * l + lr, kc * l + lc)] += w * s[lr] * s[lc].conj();
                    }
                }
            }
        }
    }
    Ok((mean, cov))
}

/// Versioned JSON dump of sampled channels (regression-test interface).
pub fn dump_channels_json(channels: &[DVector<Complex64>]) -> Result<String> {
    #[derive(Serialize)]
    struct Dump {
        version: u32,
        channels: Vec<Vec<[f64; 2]>>,
    }
    let dump = Dump {
        version: 1,
        channels: channels
            .iter()
            .map(|h| h.iter().map(|z| [z.re, z.im]).collect())
            .collect(),
    };
    Ok(serde_json::to_string(&dump)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamClass};
    use approx::assert_relative_eq;

    fn small_cfg() -> ScenarioConfig {
        ScenarioConfig {
            num_devices: 8,
            num_aps: 2,
            antennas_per_ap: 4,
            signature_len: 3,
            scatterers_per_ap: 2,
            // long wavelength so a K = 4 array still has a ~45 m Rayleigh
            // distance and the scenario mixes near and far devices
            carrier_wavelength: 10.0,
            ap_positions: Some(vec![[0.0, 0.0], [50.0, 50.0]]),
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn element_distances_match_per_element_oracle() {
        let cfg = small_cfg();
        let s = Scenario::generate(&cfg).unwrap();
        for n in 0..cfg.num_devices {
            let dev = s.placement.device_positions[n];
            let (r, r0) = element_distances(dev, 0, &s.placement, &cfg);
            // direct per-element construction from the min-image displacement
            let delta = wrap_displacement(dev, s.placement.ap_positions[0], cfg.area_side);
            for k in 0..cfg.antennas_per_ap {
                let t = (k as f64 - (cfg.antennas_per_ap as f64 - 1.0) / 2.0)
                    * cfg.carrier_wavelength
                    / 2.0;
                let ex = delta[0] - t * s.placement.array_axis[0];
                let ey = delta[1] - t * s.placement.array_axis[1];
                assert_relative_eq!(r[k], (ex * ex + ey * ey).sqrt(), epsilon = 1e-12);
            }
            assert_relative_eq!(r0, (delta[0].powi(2) + delta[1].powi(2)).sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn broadside_symmetry_for_two_elements() {
        let cfg = ScenarioConfig {
            antennas_per_ap: 2,
            ap_positions: Some(vec![[0.0, 0.0]]),
            num_aps: 1,
            ..Default::default()
        };
        let placement = Placement {
            ap_positions: vec![[0.0, 0.0]],
            device_positions: vec![[0.0, 30.0]],
            scatterer_positions: vec![vec![]],
            array_axis: [1.0, 0.0],
        };
        let (r, _) = element_distances([0.0, 30.0], 0, &placement, &cfg);
        assert_relative_eq!(r[0], r[1], epsilon = 1e-12);
    }

    #[test]
    fn array_response_phases() {
        let lambda = 0.2;
        let r = DVector::from_vec(vec![10.0, 10.0 + lambda / 4.0]);
        let b = array_response(&r, 10.0, lambda);
        assert_relative_eq!(b[0].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(b[0].im, 0.0, epsilon = 1e-12);
        // quarter-wave excess path -> -j
        assert_relative_eq!(b[1].re, 0.0, epsilon = 1e-12);
        assert_relative_eq!(b[1].im, -1.0, epsilon = 1e-12);
        for z in b.iter() {
            assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn far_field_stats_shape() {
        let cfg = small_cfg();
        let s = Scenario::generate(&cfg).unwrap();
        let far_n = (0..cfg.num_devices)
            .find(|&n| s.classify_field(n, 0) == FieldRegion::Far)
            .expect("scenario has a far device");
        let st = build_channel_stats(0, far_n, &s.placement, &cfg);
        let d = wrap_distance(
            s.placement.device_positions[far_n],
            s.placement.ap_positions[0],
            cfg.area_side,
        );
        let g = cfg.tx_power() * 10f64.powf(-crate::scenario::path_loss_db(d / 1000.0) / 10.0);
        assert_relative_eq!(st.gain.unwrap(), g, max_relative = 1e-12);
        assert!(st.mean.iter().all(|z| z.norm() == 0.0));
        // B B^H = g I
        let xi = st.xi();
        let target = DMatrix::from_diagonal_element(
            cfg.antennas_per_ap,
            cfg.antennas_per_ap,
            Complex64::new(g, 0.0),
        );
        assert!((xi - target).norm() / g < 1e-10);
    }

    #[test]
    fn near_field_covariance_matches_scatterer_sum() {
        let cfg = small_cfg();
        let s = Scenario::generate(&cfg).unwrap();
        let near_n = (0..cfg.num_devices)
            .flat_map(|n| (0..cfg.num_aps).map(move |m| (m, n)))
            .find(|&(m, n)| s.classify_field(n, m) == FieldRegion::Near);
        let Some((m, n)) = near_n else {
            panic!("scenario has no near device; adjust the test config");
        };
        let st = build_channel_stats(m, n, &s.placement, &cfg);
        assert_eq!(st.rank(), cfg.scatterers_per_ap);
        // direct summation of sigma^2 |beta|^2 b b^H over scatterers
        let k = cfg.antennas_per_ap;
        let mut direct = DMatrix::<Complex64>::zeros(k, k);
        for scat in &s.placement.scatterer_positions[m] {
            let hop = wrap_distance(s.placement.device_positions[n], *scat, cfg.area_side)
                + wrap_distance(*scat, s.placement.ap_positions[m], cfg.area_side);
            let p = cfg.scatter_var * power_gain(cfg.tx_power(), hop);
            let (r, r0) = element_distances(*scat, m, &s.placement, &cfg);
            let b = array_response(&r, r0, cfg.carrier_wavelength);
            direct += (&b * b.adjoint()).map(|z| z * p);
        }
        let xi = st.xi();
        assert!((&xi - &direct).norm() / direct.norm() < 1e-10);
        // trace identity: tr(R) = K * sum_l sigma^2 |beta|^2
        let trace: f64 = xi.diagonal().iter().map(|z| z.re).sum();
        let per_elem: f64 = s.placement.scatterer_positions[m]
            .iter()
            .map(|scat| {
                let hop = wrap_distance(s.placement.device_positions[n], *scat, cfg.area_side)
                    + wrap_distance(*scat, s.placement.ap_positions[m], cfg.area_side);
                cfg.scatter_var * power_gain(cfg.tx_power(), hop)
            })
            .sum();
        assert_relative_eq!(trace, k as f64 * per_elem, max_relative = 1e-10);
    }

    #[test]
    fn sample_channel_zero_factor_returns_mean() {
        let k = 3;
        let st = ChannelStats {
            field: FieldRegion::Near,
            mean: DVector::from_element(k, Complex64::new(1.0, -2.0)),
            cov_factor: DMatrix::zeros(k, 2),
            gain: None,
        };
        let mut rng = substream(0, StreamClass::Channels, 0);
        let h = sample_channel(&st, &mut rng);
        assert_eq!(h, st.mean);
    }

    #[test]
    fn sample_channel_moments() {
        let cfg = small_cfg();
        let s = Scenario::generate(&cfg).unwrap();
        let st = build_channel_stats(0, 0, &s.placement, &cfg);
        let k = cfg.antennas_per_ap;
        let mut rng = substream(1, StreamClass::Channels, 0);
        let draws = 100_000;
        let mut mean_acc = DVector::<Complex64>::zeros(k);
        let mut cov_acc = DMatrix::<Complex64>::zeros(k, k);
        let mut samples = Vec::with_capacity(draws);
        for _ in 0..draws {
            let h = sample_channel(&st, &mut rng);
            mean_acc += &h;
            samples.push(h);
        }
        let emp_mean = mean_acc.map(|z| z / draws as f64);
        for h in &samples {
            let c = h - &emp_mean;
            cov_acc += &c * c.adjoint();
        }
        let emp_cov = cov_acc.map(|z| z / draws as f64);
        let xi = st.xi();
        assert!((&emp_cov - &xi).norm() / xi.norm() < 0.05);
        if st.field == FieldRegion::Near {
            assert!((&emp_mean - &st.mean).norm() / st.mean.norm().max(1e-30) < 0.05);
        }
    }

    #[test]
    fn synthesize_noise_free_cases() {
        let cfg = ScenarioConfig {
            noise_power_dbm: -1000.0, // effectively zero
            ..small_cfg()
        };
        let s = Scenario::generate(&cfg).unwrap();
        let model = ChannelModel::new(&s);
        let mut ch = substream(3, StreamClass::Channels, 0);
        let mut no = substream(3, StreamClass::Noise, 0);

        // all inactive -> y = 0 (up to the vanishing noise)
        let silent = ActivityVector(vec![0.0; cfg.num_devices]);
        let ys = model.synthesize_received(&s, &silent, &mut ch, &mut no);
        assert!(ys.iter().all(|r| r.y.norm() < 1e-48));

        // single active device -> y = h (x) s, cross-checked against the
        // matrix-form construction vec(s h^T + W)
        let mut one = vec![0.0; cfg.num_devices];
        one[2] = 1.0;
        let mut ch2 = substream(3, StreamClass::Channels, 1);
        let mut no2 = substream(3, StreamClass::Noise, 1);
        let ys = model.synthesize_received(&s, &ActivityVector(one), &mut ch2, &mut no2);
        let mut ch3 = substream(3, StreamClass::Channels, 1);
        let h = sample_channel(&model.stats[0][2], &mut ch3);
        let sig = s.signatures.column(2).clone_owned();
        let l = cfg.signature_len;
        // matrix form: Y[l, k] = s[l] h[k]; vec stacks columns
        let mut y_matrix_form = DVector::<Complex64>::zeros(l * cfg.antennas_per_ap);
        for k in 0..cfg.antennas_per_ap {
            for li in 0..l {
                y_matrix_form[k * l + li] = sig[li] * h[k];
            }
        }
        assert!((&ys[0].y - &y_matrix_form).norm() / y_matrix_form.norm() < 1e-12);
    }

    #[test]
    fn model_mean_cov_oracle_properties() {
        let cfg = small_cfg();
        let s = Scenario::generate(&cfg).unwrap();
        let model = ChannelModel::new(&s);
        let nv = model.noise_var;
        let lk = cfg.signature_len * cfg.antennas_per_ap;

        // theta = 0 -> (0, noise I)
        let theta = vec![0.0; cfg.num_devices];
        let (mean, cov) =
            model_mean_cov(&theta, &model.stats[0], &s.signatures, nv, 512).unwrap();
        assert!(mean.norm() == 0.0);
        let eye = DMatrix::from_diagonal_element(lk, lk, Complex64::new(nv, 0.0));
        assert!((cov.clone() - eye).norm() < 1e-20);

        // random theta -> matches sum of theta_n X_n X_n^H + noise I built
        // from XFactors, and stays Hermitian with min eigenvalue >= noise_var
        let theta: Vec<f64> = (0..cfg.num_devices).map(|n| (n as f64) / 10.0).collect();
        let (_, cov) = model_mean_cov(&theta, &model.stats[0], &s.signatures, nv, 512).unwrap();
        let xfs = model.x_factors(0, &s.signatures);
        let mut direct = DMatrix::from_diagonal_element(lk, lk, Complex64::new(nv, 0.0));
        for (n, xf) in xfs.iter().enumerate() {
            direct += xf.xxh().map(|z| z * theta[n]);
        }
        assert!((&cov - &direct).norm() / direct.norm() < 1e-10);
        assert!((&cov - cov.adjoint()).norm() / cov.norm() < 1e-12);
        let eig = cov.map(|z| z).symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= nv * (1.0 - 1e-9)));

        // cap enforcement
        assert!(model_mean_cov(&theta, &model.stats[0], &s.signatures, nv, 4).is_err());
    }

    #[test]
    fn xfactor_kronecker_identity() {
        let cfg = small_cfg();
        let s = Scenario::generate(&cfg).unwrap();
        let model = ChannelModel::new(&s);
        for xf in model.x_factors(1, &s.signatures) {
            let xxh = xf.xxh();
            // entrywise Xi (x) (s s^H)
            let k = cfg.antennas_per_ap;
            let l = cfg.signature_len;
            let xi = &xf.xi;
            let mut kron = DMatrix::<Complex64>::zeros(l * k, l * k);
            for kr in 0..k {
                for kc in 0..k {
                    for lr in 0..l {
                        for lc in 0..l {
                            kron[(kr * l + lr, kc * l + lc)] =
                                xi[(kr, kc)] * xf.signature[lr] * xf.signature[lc].conj();
                        }
                    }
                }
            }
            assert!((&xxh - &kron).norm() / kron.norm().max(1e-30) < 1e-10);
        }
    }

    #[test]
    fn channel_dump_is_versioned_json() {
        let h = vec![DVector::from_vec(vec![Complex64::new(1.0, 2.0)])];
        let text = dump_channels_json(&h).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["channels"][0][0][1], 2.0);
    }
}
