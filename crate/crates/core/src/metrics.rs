//! Accuracy and information metrics: relative l2 error, mean negative
//! log-likelihood, KL divergence and pairwise mutual information (nats).

use serde::Serialize;

use crate::chow_liu::table_mi;
use crate::error::{Error, Result};
use crate::estimator::Density;
use crate::samples::DiscreteSamples;
use crate::tensor::DenseTensor;
use crate::ttns::{Ttns, DENSE_LIMIT};

/// Probabilities below this are raised to it before taking logs.
pub const NLL_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dense,
    TtnsContraction,
    SampleBased,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::TtnsContraction => "ttns-contraction",
            Method::SampleBased => "sample-based",
        }
    }
}

/// One metric value with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub method: Method,
    pub model_id: String,
    pub reference_id: String,
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

pub const CSV_HEADER: &str = "name,value,method,model_id,reference_id,N,seed";

impl MetricReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{},{},{},{},{}",
            self.name,
            self.value,
            self.method.as_str(),
            self.model_id,
            self.reference_id,
            self.n.map(|v| v.to_string()).unwrap_or_default(),
            self.seed.map(|v| v.to_string()).unwrap_or_default()
        )
    }
}

pub fn to_csv(rows: &[MetricReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn dense_of(p: Density<'_>) -> Result<DenseTensor> {
    match p {
        Density::Dense(t) => Ok(t.clone()),
        Density::Ttns(m) => m.contract_full(),
    }
}

fn dense_size(p: &Density<'_>) -> u128 {
    match p {
        Density::Dense(t) => t.len() as u128,
        Density::Ttns(m) => m.state_counts().iter().map(|&n| n as u128).product(),
    }
}

/// `‖p − p*‖ / ‖p‖`, with the evaluation path used.
///
/// Two TTNS on the same tree are compared through inner products; any other
/// pair is densified.
pub fn rel_l2_error_with_method<'a, 'b>(p: impl Into<Density<'a>>, p_star: impl Into<Density<'b>>) -> Result<(f64, Method)> {
    let (p, q) = (p.into(), p_star.into());
    if let (Density::Ttns(a), Density::Ttns(b)) = (p, q) {
        if a.tree() == b.tree() {
            return Ok((ttns_rel_error(a, b)?, Method::TtnsContraction));
        }
    }
    if dense_size(&p) > DENSE_LIMIT as u128 {
        return Err(Error::TooLarge { what: "dense error evaluation", size: dense_size(&p), limit: DENSE_LIMIT as u128 });
    }
    let (a, b) = (dense_of(p)?, dense_of(q)?);
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let norm = a.norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    Ok((diff / norm, Method::Dense))
}

pub fn rel_l2_error<'a, 'b>(p: impl Into<Density<'a>>, p_star: impl Into<Density<'b>>) -> Result<f64> {
    rel_l2_error_with_method(p, p_star).map(|(v, _)| v)
}

fn ttns_rel_error(p: &Ttns, q: &Ttns) -> Result<f64> {
    let pp = p.inner_product(p)?;
    if pp <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    let pq = p.inner_product(q)?;
    let qq = q.inner_product(q)?;
    Ok(((pp - 2.0 * pq + qq).max(0.0)).sqrt() / pp.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NllReport {
    pub value: f64,
    /// Rows whose model probability was raised to [`NLL_FLOOR`].
    pub floored: usize,
}

/// `−(1/N) Σ_i log p(y_i)`.
pub fn nll(p: &Ttns, samples: &DiscreteSamples) -> Result<NllReport> {
    if samples.state_counts() != p.state_counts() {
        return Err(Error::ShapeMismatch("samples and model have different state counts".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("negative log-likelihood of zero samples".into()));
    }
    let values = p.evaluate_samples(samples)?;
    let mut floored = 0;
    let mut total = 0.0;
    for v in values {
        if !(v >= NLL_FLOOR) {
            floored += 1;
        }
        total -= v.max(NLL_FLOOR).ln();
    }
    Ok(NllReport { value: total / samples.len() as f64, floored })
}

/// `Σ p log(p / q)` with `0 log 0 = 0`; `+∞` when `q` vanishes under `p`.
pub fn kl_divergence(p: &DenseTensor, q: &DenseTensor) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", p.shape(), q.shape())));
    }
    let mut sum = 0.0;
    for (&a, &b) in p.data().iter().zip(q.data()) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            sum += a * (a / b).ln();
        }
    }
    Ok(sum)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MiReport {
    pub value: f64,
    /// The 2-marginal had mass away from 1 or negative entries and was fixed up.
    pub renormalized: bool,
}

/// Mutual information of the exact `(i, j)` marginal.
pub fn pairwise_mi<'a>(p: impl Into<Density<'a>>, i: usize, j: usize) -> Result<MiReport> {
    let p = p.into();
    if i == j {
        return Err(Error::InvalidArgument("pairwise MI needs two distinct nodes".into()));
    }
    let (ni, nj, table) = match p {
        Density::Dense(t) => {
            let d = t.ndim();
            if i == 0 || j == 0 || i > d || j > d {
                return Err(Error::NodeOutOfRange { node: i.max(j), d });
            }
            (t.shape()[i - 1], t.shape()[j - 1], t.marginal(&[i - 1, j - 1])?)
        }
        Density::Ttns(m) => {
            let t = m.marginalize(&[i, j])?;
            let t = if i < j { t } else { t.permuted(&[1, 0])? };
            (m.state_counts()[i - 1], m.state_counts()[j - 1], t)
        }
    };
    let negative = table.data().iter().any(|&v| v < 0.0);
    let clean: Vec<f64> = table.data().iter().map(|&v| v.max(0.0)).collect();
    let mass: f64 = clean.iter().sum();
    if mass <= 0.0 {
        return Err(Error::NonPositiveMass { node: i, mass });
    }
    let renormalized = negative || (mass - 1.0).abs() > 1e-9;
    Ok(MiReport { value: table_mi(&clean, ni, nj), renormalized })
}

/// Shannon entropy in nats of a normalized dense tensor.
pub fn entropy(p: &DenseTensor) -> f64 {
    -p.data().iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}
