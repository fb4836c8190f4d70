//! Identifiability diagnostics: pairwise cosine similarities of the
//! moment-matrix columns, the orthogonality bound relating them to signature
//! correlations, and numerical null-space probing of the stacked moment
//! matrices.
//!
//! Each device contributes one column `vec(X X^H)` to the per-AP moment
//! matrix. The Kronecker structure `X X^H = Xi (x) s s^H` means the cosine
//! between two columns factors into a covariance trace ratio times the
//! squared signature cosine; the trace ratio is at most 1, so near-field
//! devices (whose Xi are not proportional) are strictly closer to
//! orthogonality than far-field pairs with the same signatures.

use crate::channel::ChannelStats;
use crate::rng::{substream, StreamClass};
use crate::scenario::{FieldRegion, Scenario, SignatureMatrix};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use std::io::Write;

/// Largest LK for which dense (LK)^2-row probing is allowed.
const NULLSPACE_LK_CAP: usize = 64;

/// One materialized moment-matrix column (small scale only; at larger scale
/// the column is represented implicitly by the (Xi, s) pair).
#[derive(Debug, Clone)]
pub struct PsiColumn {
    pub device: usize,
    /// vec(X X^H), length (LK)^2, column-major vectorization.
    pub column: DVector<Complex64>,
}

impl PsiColumn {
    /// Materialize the column for one device from its covariance factor and
    /// signature (mean parts do not enter the second-moment column).
    pub fn new(device: usize, stats: &ChannelStats, s: &DVector<Complex64>) -> Self {
        let xi = stats.xi();
        let k = xi.nrows();
        let l = s.len();
        let lk = l * k;
        // X X^H = Xi (x) s s^H, vectorized column-major
        let mut column = DVector::zeros(lk * lk);
        for kc in 0..k {
            for lc in 0..l {
                let col = kc * l + lc;
                for kr in 0..k {
                    for lr in 0..l {
                        column[col * lk + kr * l + lr] = xi[(kr, kc)] * s[lr] * s[lc].conj();
                    }
                }
            }
        }
        Self { device, column }
    }
}

/// Pair classification by field region at the observing AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairType {
    NearNear,
    NearFar,
    FarFar,
}

fn pair_type(a: FieldRegion, b: FieldRegion) -> PairType {
    match (a, b) {
        (FieldRegion::Near, FieldRegion::Near) => PairType::NearNear,
        (FieldRegion::Far, FieldRegion::Far) => PairType::FarFar,
        _ => PairType::NearFar,
    }
}

/// Cosine similarity between the moment-matrix columns of devices `n` and
/// `n_prime`: `tr(Xi_n Xi_n') / (||Xi_n||_F ||Xi_n'||_F)` times the squared
/// signature cosine, computed entirely from the low-rank covariance factors.
pub fn cosine_similarity(
    n: usize,
    n_prime: usize,
    stats_row: &[ChannelStats],
    signatures: &SignatureMatrix,
) -> Result<f64> {
    if n == n_prime {
        return Err(Error::InvalidArgument("pair must be distinct".into()));
    }
    let b1 = &stats_row[n].cov_factor;
    let b2 = &stats_row[n_prime].cov_factor;
    let norm1 = (b1.adjoint() * b1).norm();
    let norm2 = (b2.adjoint() * b2).norm();
    if norm1 == 0.0 || norm2 == 0.0 {
        return Err(Error::InvalidArgument(
            "zero covariance factor has no direction".into(),
        ));
    }
    let cross = (b1.adjoint() * b2).norm_squared();
    let trace_ratio = cross / (norm1 * norm2);
    Ok(trace_ratio * signature_bound(n, n_prime, signatures))
}

/// The far-field upper bound: the squared signature cosine
/// `(|s_n^H s_n'| / (||s_n|| ||s_n'||))^2`.
pub fn signature_bound(n: usize, n_prime: usize, signatures: &SignatureMatrix) -> f64 {
    let s1 = signatures.column(n);
    let s2 = signatures.column(n_prime);
    let inner = s1.dotc(&s2).norm();
    let denom = s1.norm() * s2.norm();
    (inner / denom).powi(2)
}

/// One sampled pair in a sweep report.
#[derive(Debug, Clone, Serialize)]
pub struct PairRecord {
    pub ap: usize,
    pub n: usize,
    pub n_prime: usize,
    pub pair_type: PairType,
    pub similarity: f64,
    pub bound: f64,
}

/// Per-pair-type aggregate statistics.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PairStats {
    pub count: usize,
    pub mean_similarity: f64,
    pub max_similarity: f64,
    /// Mean of similarity / bound (1 exactly for far-far pairs).
    pub mean_ratio: f64,
}

/// Sweep report: sampled pairs, aggregates, and the bound-violation count.
#[derive(Debug, Clone, Serialize)]
pub struct Prop1Report {
    pub pairs: Vec<PairRecord>,
    pub near_near: PairStats,
    pub near_far: PairStats,
    pub far_far: PairStats,
    /// Pairs whose similarity exceeds the bound by more than 1e-12.
    pub violations: usize,
}

/// Sample random (AP, device pair) triples and check the orthogonality bound
/// on each, aggregating by pair type.
pub fn proposition1_sweep(
    scenario: &Scenario,
    stats: &[Vec<ChannelStats>],
    num_pairs: usize,
) -> Result<Prop1Report> {
    let n_dev = scenario.cfg.num_devices;
    if n_dev < 2 {
        return Err(Error::InvalidArgument(
            "need at least two devices to form pairs".into(),
        ));
    }
    let mut rng = substream(scenario.cfg.seed, StreamClass::Analysis, 0);
    let mut pairs = Vec::with_capacity(num_pairs);
    let mut violations = 0;
    for _ in 0..num_pairs {
        let ap = rng.gen_range(0..stats.len());
        let n = rng.gen_range(0..n_dev);
        let mut n_prime = rng.gen_range(0..n_dev - 1);
        if n_prime >= n {
            n_prime += 1;
        }
        let row = &stats[ap];
        let similarity = cosine_similarity(n, n_prime, row, &scenario.signatures)?;
        let bound = signature_bound(n, n_prime, &scenario.signatures);
        if similarity > bound + 1e-12 {
            violations += 1;
        }
        pairs.push(PairRecord {
            ap,
            n,
            n_prime,
            pair_type: pair_type(row[n].field, row[n_prime].field),
            similarity,
            bound,
        });
    }
    let aggregate = |ty: PairType| -> PairStats {
        let mut st = PairStats::default();
        for p in pairs.iter().filter(|p| p.pair_type == ty) {
            st.count += 1;
            st.mean_similarity += p.similarity;
            st.max_similarity = st.max_similarity.max(p.similarity);
            st.mean_ratio += if p.bound > 0.0 {
                p.similarity / p.bound
            } else {
                // orthogonal signatures: both sides are zero, ratio is moot
                1.0
            };
        }
        if st.count > 0 {
            st.mean_similarity /= st.count as f64;
            st.mean_ratio /= st.count as f64;
        }
        st
    };
    Ok(Prop1Report {
        near_near: aggregate(PairType::NearNear),
        near_far: aggregate(PairType::NearFar),
        far_far: aggregate(PairType::FarFar),
        violations,
        pairs,
    })
}

/// Write sampled pairs as CSV: ap, n, n_prime, pair_type, similarity, bound.
pub fn write_prop1_csv<W: Write>(report: &Prop1Report, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ap", "n", "n_prime", "pair_type", "similarity", "bound"])?;
    for p in &report.pairs {
        let ty = match p.pair_type {
            PairType::NearNear => "near_near",
            PairType::NearFar => "near_far",
            PairType::FarFar => "far_far",
        };
        w.write_record([
            p.ap.to_string(),
            p.n.to_string(),
            p.n_prime.to_string(),
            ty.to_string(),
            format!("{:.17e}", p.similarity),
            format!("{:.17e}", p.bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// JSON summary of a sweep (aggregates only, no per-pair rows).
pub fn prop1_summary_json(report: &Prop1Report) -> Result<String> {
    #[derive(Serialize)]
    struct Summary<'a> {
        num_pairs: usize,
        violations: usize,
        near_near: &'a PairStats,
        near_far: &'a PairStats,
        far_far: &'a PairStats,
    }
    Ok(serde_json::to_string_pretty(&Summary {
        num_pairs: report.pairs.len(),
        violations: report.violations,
        near_near: &report.near_near,
        near_far: &report.near_far,
        far_far: &report.far_far,
    })?)
}

/// Null-space probe of the stacked moment matrices.
#[derive(Debug, Clone, Serialize)]
pub struct NullspaceReport {
    pub rows: usize,
    pub cols: usize,
    pub null_dim: usize,
    pub smallest_singular: f64,
    pub largest_singular: f64,
    /// Whether any null direction is sign-feasible relative to the supplied
    /// truth (nonnegative where the truth is 0, nonpositive where it is 1).
    pub sign_feasible: bool,
}

/// Stack all per-AP moment matrices (real and imaginary parts as separate
/// rows), compute the numerical null space (singular values below
/// `1e-10 * sigma_max`), and test null directions for sign feasibility
/// against `truth`.
pub fn nullspace_probe(
    stats: &[Vec<ChannelStats>],
    signatures: &SignatureMatrix,
    truth: &[f64],
) -> Result<NullspaceReport> {
    let n_dev = truth.len();
    let l = signatures.len();
    let k = stats[0][0].mean.len();
    let lk = l * k;
    if lk > NULLSPACE_LK_CAP {
        return Err(Error::InvalidArgument(format!(
            "nullspace probe limited to LK <= {NULLSPACE_LK_CAP}, got {lk}"
        )));
    }
    let rows = 2 * stats.len() * lk * lk;
    let mut psi = DMatrix::<f64>::zeros(rows, n_dev);
    for (m, row) in stats.iter().enumerate() {
        for n in 0..n_dev {
            let col = PsiColumn::new(n, &row[n], &signatures.column(n).clone_owned());
            let base = 2 * m * lk * lk;
            for (i, z) in col.column.iter().enumerate() {
                psi[(base + i, n)] = z.re;
                psi[(base + lk * lk + i, n)] = z.im;
            }
        }
    }
    let svd = psi.svd(false, true);
    let sigma_max = svd.singular_values.max();
    let tol = 1e-10 * sigma_max;
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut null_dim = n_dev.saturating_sub(svd.singular_values.len());
    let mut null_rows = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < tol {
            null_dim += 1;
            null_rows.push(v_t.row(i).transpose());
        }
    }
    // rows of V^T beyond the singular-value count also span the null space
    for i in svd.singular_values.len()..v_t.nrows() {
        null_rows.push(v_t.row(i).transpose());
    }
    let feas_tol = 1e-10;
    let sign_feasible = null_rows.iter().any(|v| {
        let feasible = |dir: f64| {
            truth.iter().zip(v.iter()).all(|(&a, &x)| {
                let x = dir * x;
                if a < 0.5 {
                    x >= -feas_tol
                } else {
                    x <= feas_tol
                }
            })
        };
        v.norm() > feas_tol && (feasible(1.0) || feasible(-1.0))
    });
    Ok(NullspaceReport {
        rows,
        cols: n_dev,
        null_dim,
        smallest_singular: svd.singular_values.min(),
        largest_singular: sigma_max,
        sign_feasible,
    })
}
