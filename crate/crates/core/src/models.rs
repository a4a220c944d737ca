//! Simulation designs: linear / Poisson (1.a-1.f), nonlinear (2.a-2.d),
//! bivariate response (3.a-3.b) and the knockoff designs (4.a-4.e).
//!
//! Covariates use the AR covariance `sigma_ij = rho^|i-j|` (default
//! `rho = 0.5`). Generation is deterministic in `(spec, seed)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;

/// Poisson rates are capped at `exp(700)`.
pub const MAX_LOG_RATE: f64 = 700.0;
/// Responses larger than this in magnitude are counted as extreme.
pub const EXTREME_RESPONSE: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelId {
    M1a,
    M1b,
    M1c,
    M1d,
    M1e,
    M1f,
    M2a,
    M2b,
    M2c,
    M2d,
    M3a,
    M3b,
    M4a,
    M4b,
    M4c,
    M4d,
    M4e,
}

impl ModelId {
    pub const ALL: [ModelId; 17] = [
        ModelId::M1a,
        ModelId::M1b,
        ModelId::M1c,
        ModelId::M1d,
        ModelId::M1e,
        ModelId::M1f,
        ModelId::M2a,
        ModelId::M2b,
        ModelId::M2c,
        ModelId::M2d,
        ModelId::M3a,
        ModelId::M3b,
        ModelId::M4a,
        ModelId::M4b,
        ModelId::M4c,
        ModelId::M4d,
        ModelId::M4e,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::M1a => "1a",
            ModelId::M1b => "1b",
            ModelId::M1c => "1c",
            ModelId::M1d => "1d",
            ModelId::M1e => "1e",
            ModelId::M1f => "1f",
            ModelId::M2a => "2a",
            ModelId::M2b => "2b",
            ModelId::M2c => "2c",
            ModelId::M2d => "2d",
            ModelId::M3a => "3a",
            ModelId::M3b => "3b",
            ModelId::M4a => "4a",
            ModelId::M4b => "4b",
            ModelId::M4c => "4c",
            ModelId::M4d => "4d",
            ModelId::M4e => "4e",
        }
    }

    /// Example group (1-4).
    pub fn group(self) -> u8 {
        self.name().as_bytes()[0] - b'0'
    }

    pub fn default_s(self) -> usize {
        match self.group() {
            1 => 5,
            2 | 3 => 4,
            _ => 10,
        }
    }

    pub fn response_dim(self) -> usize {
        if self.group() == 3 {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<ModelId> for String {
    fn from(id: ModelId) -> String {
        id.name().to_string()
    }
}

impl TryFrom<String> for ModelId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| *c != '.')
            .collect();
        ModelId::ALL
            .iter()
            .copied()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: ModelId,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    /// Number of active features. Fixed at 5 / 4 / 4 for groups 1-3; adjustable for group 4.
    pub s: usize,
}

impl ModelSpec {
    pub fn new(id: ModelId, n: usize, p: usize) -> Self {
        Self {
            id,
            n,
            p,
            rho: 0.5,
            s: id.default_s(),
        }
    }

    pub fn with_s(mut self, s: usize) -> Self {
        self.s = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("n must be >= 2, got {}", self.n)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("|rho| must be < 1, got {}", self.rho)));
        }
        if self.id.group() != 4 && self.s != self.id.default_s() {
            return Err(Error::InvalidParameter(format!(
                "model {} has a fixed active set of size {}",
                self.id,
                self.id.default_s()
            )));
        }
        if self.s == 0 || self.p < self.s {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= s <= p (s = {}, p = {})",
                self.s, self.p
            )));
        }
        Ok(())
    }

    pub fn true_active(&self) -> Vec<usize> {
        (0..self.s).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationDiagnostics {
    /// Poisson rates that hit the `exp(700)` cap.
    pub poisson_clamps: usize,
    /// Responses with magnitude above 1e12.
    pub extreme_responses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDataset {
    pub spec: ModelSpec,
    pub x: SampleMatrix,
    pub y: SampleMatrix,
    pub true_active: Vec<usize>,
    pub seed: u64,
    pub diagnostics: GenerationDiagnostics,
}

/// Toeplitz matrix with entries `rho^|i-j|`.
pub fn ar_covariance(p: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("|rho| must be < 1, got {rho}")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32)))
}

/// Symmetric PSD square root, memoized per `(p, rho)`.
pub fn ar_sqrt(p: usize, rho: f64) -> Result<Arc<DMatrix<f64>>> {
    type Memo = Mutex<HashMap<(usize, u64), Arc<DMatrix<f64>>>>;
    static MEMO: OnceLock<Memo> = OnceLock::new();
    let memo = MEMO.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (p, rho.to_bits());
    if let Some(m) = memo.lock().expect("memo lock").get(&key) {
        return Ok(Arc::clone(m));
    }
    let eig = SymmetricEigen::new(ar_covariance(p, rho)?);
    let mut v = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        v.column_mut(j).scale_mut(s);
    }
    let root = Arc::new(&v * eig.eigenvectors.transpose());
    memo.lock().expect("memo lock").insert(key, Arc::clone(&root));
    Ok(root)
}

/// One row of `N(0, AR(rho))` by the exact AR(1) recursion.
fn gaussian_ar_row(rng: &mut ChaCha8Rng, rho: f64, out: &mut [f64]) {
    let innov = (1.0 - rho * rho).sqrt();
    let mut prev = 0.0;
    for (j, v) in out.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        prev = if j == 0 { z } else { rho * prev + innov * z };
        *v = prev;
    }
}

/// Standard Cauchy via `tan(pi (U - 1/2))`.
fn cauchy(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    (PI * (u - 0.5)).tan()
}

fn poisson(rng: &mut ChaCha8Rng, log_rate: f64, diag: &mut GenerationDiagnostics) -> f64 {
    let log_rate = if log_rate > MAX_LOG_RATE {
        diag.poisson_clamps += 1;
        MAX_LOG_RATE
    } else {
        log_rate
    };
    let rate = log_rate.exp();
    if rate < 1e12 {
        match Poisson::new(rate) {
            Ok(d) => d.sample(rng),
            Err(_) => 0.0,
        }
    } else {
        // normal approximation; relative error of the Poisson mean is ~1e-6 here
        let z: f64 = StandardNormal.sample(rng);
        (rate + rate.sqrt() * z).round().max(0.0)
    }
}

/// Draws `(X, Y)` for `spec`.
pub fn generate_dataset(spec: &ModelSpec, seed: u64) -> Result<GeneratedDataset> {
    spec.validate()?;
    let (n, p, rho, s) = (spec.n, spec.p, spec.rho, spec.s);
    let id = spec.id;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diag = GenerationDiagnostics::default();

    let root = match id {
        ModelId::M1c | ModelId::M1d => Some(ar_sqrt(p, rho)?),
        _ => None,
    };
    let t2 = StudentT::new(2.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let q = id.response_dim();
    let mut xdata = vec![0.0; n * p];
    let mut ydata = vec![0.0; n * q];
    let mut row = vec![0.0; p];
    let mut aux = vec![0.0; p];

    for i in 0..n {
        match id {
            ModelId::M1c | ModelId::M1d => {
                for v in aux.iter_mut() {
                    *v = cauchy(&mut rng);
                }
                let root = root.as_ref().expect("root computed above");
                for (a, r) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (b, u) in aux.iter().enumerate() {
                        acc += root[(a, b)] * u;
                    }
                    *r = acc;
                }
            }
            ModelId::M4c => {
                gaussian_ar_row(&mut rng, rho, &mut row);
                gaussian_ar_row(&mut rng, rho, &mut aux);
                let w: f64 = Exp1.sample(&mut rng); // chi2_2 / 2
                let scale = 1.0 / w.sqrt();
                for (r, z) in row.iter_mut().zip(&aux) {
                    *r = 0.9 * *r + 0.1 * z * scale;
                }
            }
            _ => gaussian_ar_row(&mut rng, rho, &mut row),
        }
        for (j, v) in row.iter().enumerate() {
            xdata[j * n + i] = *v;
        }

        let x = |j: usize| row[j];
        let lin = |coef: f64| coef * row[..s].iter().sum::<f64>();
        let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

        let responses: [f64; 2] = match id {
            ModelId::M1a | ModelId::M1c | ModelId::M4a | ModelId::M4c => {
                [lin(1.0) + normal(&mut rng), 0.0]
            }
            ModelId::M1b | ModelId::M1d => [lin(1.0) + cauchy(&mut rng), 0.0],
            ModelId::M4b => [lin(1.0) + t2.sample(&mut rng), 0.0],
            ModelId::M1e | ModelId::M4d => [lin(2.0).exp() + normal(&mut rng), 0.0],
            ModelId::M1f | ModelId::M4e => [poisson(&mut rng, lin(2.0), &mut diag), 0.0],
            ModelId::M2a => [
                5.0 * x(0)
                    + 2.0 * (PI * x(1) / 2.0).sin()
                    + if x(2) > 0.0 { 2.0 * x(2) } else { 0.0 }
                    + 2.0 * (5.0 * x(3)).exp()
                    + normal(&mut rng),
                0.0,
            ],
            ModelId::M2b => [
                3.0 * x(0)
                    + 3.0 * x(1).powi(3)
                    + 3.0 / x(2)
                    + if x(3) > 0.0 { 5.0 } else { 0.0 }
                    + normal(&mut rng),
                0.0,
            ],
            ModelId::M2c => [
                1.0 - 5.0 * (x(1) + x(2)).powi(3) * (-5.0 * (x(0) + x(3) * x(3))).exp()
                    + normal(&mut rng),
                0.0,
            ],
            ModelId::M2d => [
                1.0 - 5.0 * (x(1) + x(2)).powi(-3)
                    * (1.0 + 10.0 * (PI * x(0) / 2.0).sin() + 5.0 * x(3)).exp()
                    + normal(&mut rng),
                0.0,
            ],
            ModelId::M3a | ModelId::M3b => {
                let t = 2.0 * (x(0) + x(1) + x(2) + x(3));
                let (mu1, mu2, sigma) = if id == ModelId::M3a {
                    ((2.0 * (x(0) + x(1))).exp(), x(2) + x(3), t.sin())
                } else {
                    (
                        2.0 * (PI * x(0) / 2.0).sin() + x(2) + (1.0 + x(3)).exp(),
                        x(0).powi(-2) + x(1),
                        // (e^t - 1) / (e^t + 1) without overflow
                        (t / 2.0).tanh(),
                    )
                };
                debug_assert!(sigma.abs() <= 1.0);
                let z1 = normal(&mut rng);
                let z2 = normal(&mut rng);
                [
                    mu1 + z1,
                    mu2 + sigma * z1 + (1.0 - sigma * sigma).max(0.0).sqrt() * z2,
                ]
            }
        };
        for (c, v) in responses.iter().take(q).enumerate() {
            if v.abs() > EXTREME_RESPONSE {
                diag.extreme_responses += 1;
            }
            ydata[c * n + i] = *v;
        }
    }

    Ok(GeneratedDataset {
        spec: *spec,
        x: SampleMatrix::from_col_major(n, p, xdata)?,
        y: SampleMatrix::from_col_major(n, q, ydata)?,
        true_active: spec.true_active(),
        seed,
        diagnostics: diag,
    })
}

/// Conditional correlation `sigma(x)` of the bivariate-response models.
pub fn bivariate_sigma(id: ModelId, x: &[f64]) -> Option<f64> {
    let t = 2.0 * x[..4].iter().sum::<f64>();
    match id {
        ModelId::M3a => Some(t.sin()),
        ModelId::M3b => Some((t / 2.0).tanh()),
        _ => None,
    }
}
