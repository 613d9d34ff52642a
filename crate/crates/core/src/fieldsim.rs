//! Exact simulation of stationary Gaussian fields on regular lattices and of
//! fractional Brownian motion paths.
//!
//! Three exact methods are available. Circulant embedding diagonalizes a
//! periodic extension of the covariance with the FFT; one complex transform
//! yields two independent lattice samples (real and imaginary parts). A dense
//! semidefinite Cholesky factor serves small lattices. The exponential
//! covariance with `α = 1` in one dimension is an Ornstein–Uhlenbeck process
//! and is sampled by its AR(1) recursion in linear time.

use crate::covmodels::{CovarianceKind, CovarianceModel, MixtureFieldSpec};
use crate::error::{arg_err, config_err, Error, Result};
use crate::grids::point_count;
use crate::linalg::{semidefinite_cholesky, LowerFactor};
use crate::rng::{stream, StreamRng, StreamTag};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;

pub const DEFAULT_POINT_CAP: usize = 1 << 24;
/// Largest lattice that may fall back to a dense factorization.
pub const DENSE_LIMIT: usize = 4096;
/// Number of times the embedding size is doubled looking for a nonnegative
/// spectrum.
pub const MAX_PADDING_DOUBLINGS: u32 = 3;
/// Negative eigenvalues down to this size are treated as rounding noise.
pub const EIGEN_CLAMP: f64 = 1e-10;
const MAX_EMBEDDING: usize = 1 << 27;

/// A regular lattice `{(j_1 h_1, …, j_d h_d) : 0 ≤ j_i h_i ≤ T_i}` with `d ≤ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    extent: Vec<f64>,
    step: Vec<f64>,
    counts: Vec<usize>,
}

impl LatticeSpec {
    pub fn new(extent: Vec<f64>, step: Vec<f64>) -> Result<Self> {
        Self::with_cap(extent, step, DEFAULT_POINT_CAP)
    }

    pub fn with_cap(extent: Vec<f64>, step: Vec<f64>, cap: usize) -> Result<Self> {
        if extent.is_empty() || extent.len() > 2 {
            return config_err(format!("lattices are 1- or 2-dimensional, got {} axes", extent.len()));
        }
        if step.len() != extent.len() {
            return config_err("lattice step and extent lengths differ");
        }
        if extent.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return config_err("lattice extent must be finite and nonnegative");
        }
        if step.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return config_err("lattice step must be finite and positive");
        }
        let counts: Vec<usize> = extent.iter().zip(&step).map(|(t, h)| point_count(*t, *h)).collect();
        let total = counts.iter().try_fold(1usize, |acc, n| acc.checked_mul(*n));
        match total {
            Some(n) if n <= cap => Ok(Self { extent, step, counts }),
            _ => config_err(format!("lattice with {counts:?} points exceeds the cap of {cap} points")),
        }
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn step(&self) -> &[f64] {
        &self.step
    }

    /// Points per axis, `floor(T_i/h_i) + 1`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major flat index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (i, n)| acc * n + i)
    }
}

/// One draw of a field on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub lattice: LatticeSpec,
    pub values: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMethod {
    /// Markov recursion where exact, else circulant embedding, else dense.
    #[default]
    Auto,
    Circulant,
    Dense,
    Markov,
}

/// Circulant embedding of a stationary covariance on an integer lattice.
struct Circulant {
    counts: Vec<usize>,
    sizes: Vec<usize>,
    sqrt_eigen: Vec<f64>,
    plans: Vec<Arc<dyn Fft<f64>>>,
    clamped: usize,
}

fn smooth_size(min: usize) -> usize {
    let mut m = min.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

fn fft_nd(data: &mut [Complex64], sizes: &[usize], plans: &[Arc<dyn Fft<f64>>]) {
    match sizes.len() {
        1 => plans[0].process(data),
        2 => {
            let (m0, m1) = (sizes[0], sizes[1]);
            for row in data.chunks_exact_mut(m1) {
                plans[1].process(row);
            }
            let mut col = vec![Complex64::new(0.0, 0.0); m0];
            for j in 0..m1 {
                for i in 0..m0 {
                    col[i] = data[i * m1 + j];
                }
                plans[0].process(&mut col);
                for i in 0..m0 {
                    data[i * m1 + j] = col[i];
                }
            }
        }
        _ => unreachable!("lattices have at most two axes"),
    }
}

impl Circulant {
    /// `cov` receives the signed integer lag on each axis.
    fn build(counts: &[usize], cov: &dyn Fn(&[i64]) -> f64) -> Result<Self> {
        let mut planner = FftPlanner::<f64>::new();
        let mut worst = 0.0f64;
        let mut sizes: Vec<usize> = counts.iter().map(|&n| smooth_size(2 * n.saturating_sub(1))).collect();
        for attempt in 0..=MAX_PADDING_DOUBLINGS {
            if attempt > 0 {
                for (m, &n) in sizes.iter_mut().zip(counts) {
                    if n > 1 {
                        *m = smooth_size(2 * *m);
                    }
                }
            }
            let total: usize = sizes.iter().product();
            if total > MAX_EMBEDDING {
                break;
            }
            let plans: Vec<Arc<dyn Fft<f64>>> = sizes.iter().map(|&m| planner.plan_fft_forward(m)).collect();
            let mut data = vec![Complex64::new(0.0, 0.0); total];
            let mut lag = vec![0i64; sizes.len()];
            for (flat, slot) in data.iter_mut().enumerate() {
                let mut rem = flat;
                for ax in (0..sizes.len()).rev() {
                    let m = sizes[ax];
                    let j = rem % m;
                    rem /= m;
                    lag[ax] = if 2 * j <= m { j as i64 } else { j as i64 - m as i64 };
                }
                *slot = Complex64::new(cov(&lag), 0.0);
            }
            fft_nd(&mut data, &sizes, &plans);
            let min = data.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
            if min >= -EIGEN_CLAMP {
                let mut clamped = 0;
                let sqrt_eigen = data
                    .iter()
                    .map(|c| {
                        if c.re < 0.0 {
                            clamped += 1;
                        }
                        (c.re.max(0.0) / total as f64).sqrt()
                    })
                    .collect();
                return Ok(Self { counts: counts.to_vec(), sizes, sqrt_eigen, plans, clamped });
            }
            worst = min;
        }
        Err(Error::Simulation(format!(
            "circulant embedding is not nonnegative definite after padding; most negative eigenvalue {worst:e}"
        )))
    }

    fn sample_pair(&self, rng: &mut StreamRng) -> (Vec<f64>, Vec<f64>) {
        let mut data: Vec<Complex64> = self
            .sqrt_eigen
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect();
        fft_nd(&mut data, &self.sizes, &self.plans);
        let n: usize = self.counts.iter().product();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        match self.counts.len() {
            1 => {
                for c in &data[..n] {
                    a.push(c.re);
                    b.push(c.im);
                }
            }
            _ => {
                let m1 = self.sizes[1];
                for i in 0..self.counts[0] {
                    for c in &data[i * m1..i * m1 + self.counts[1]] {
                        a.push(c.re);
                        b.push(c.im);
                    }
                }
            }
        }
        (a, b)
    }
}

enum Engine {
    Circulant(Circulant),
    Dense(LowerFactor),
    Markov { n: usize, phi: f64 },
}

/// A covariance prepared for repeated sampling on one lattice. Preparation
/// (eigenvalues or Cholesky factor) is done once; sampling is then pure and
/// may be shared between threads.
pub struct FieldSampler {
    lattice: LatticeSpec,
    engine: Engine,
}

fn markov_eligible(model: &CovarianceModel, lattice: &LatticeSpec) -> bool {
    model.kind() == CovarianceKind::Exponential && lattice.dim() == 1 && model.alphas()[0] == 1.0
}

fn dense_factor(model: &CovarianceModel, lattice: &LatticeSpec) -> Result<LowerFactor> {
    let n = lattice.len();
    if n > DENSE_LIMIT {
        return config_err(format!("dense factorization is limited to {DENSE_LIMIT} points, lattice has {n}"));
    }
    let counts = lattice.counts();
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|flat| {
            let mut rem = flat;
            let mut c = vec![0.0; counts.len()];
            for ax in (0..counts.len()).rev() {
                c[ax] = (rem % counts[ax]) as f64 * lattice.step()[ax];
                rem /= counts[ax];
            }
            c
        })
        .collect();
    let mut a = vec![0.0; n * n];
    let mut lag = vec![0.0; counts.len()];
    for i in 0..n {
        for j in 0..=i {
            for ax in 0..counts.len() {
                lag[ax] = coords[i][ax] - coords[j][ax];
            }
            let v = model.eval(&lag);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    semidefinite_cholesky(&a, n, 1e-10)
}

impl FieldSampler {
    pub fn new(model: &CovarianceModel, lattice: &LatticeSpec, method: SampleMethod) -> Result<Self> {
        if model.dim() != lattice.dim() {
            return arg_err(format!("model dimension {} differs from lattice dimension {}", model.dim(), lattice.dim()));
        }
        let engine = match method {
            SampleMethod::Markov => {
                if !markov_eligible(model, lattice) {
                    return config_err("the Markov sampler needs a one-dimensional exponential covariance with α = 1");
                }
                Engine::Markov { n: lattice.len(), phi: (-lattice.step()[0]).exp() }
            }
            SampleMethod::Dense => Engine::Dense(dense_factor(model, lattice)?),
            SampleMethod::Circulant => Engine::Circulant(circulant_for(model, lattice)?),
            SampleMethod::Auto => {
                if markov_eligible(model, lattice) {
                    Engine::Markov { n: lattice.len(), phi: (-lattice.step()[0]).exp() }
                } else {
                    match circulant_for(model, lattice) {
                        Ok(c) => Engine::Circulant(c),
                        Err(_) if lattice.len() <= DENSE_LIMIT => Engine::Dense(dense_factor(model, lattice)?),
                        Err(e) => return Err(e),
                    }
                }
            }
        };
        Ok(Self { lattice: lattice.clone(), engine })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn method(&self) -> SampleMethod {
        match self.engine {
            Engine::Circulant(_) => SampleMethod::Circulant,
            Engine::Dense(_) => SampleMethod::Dense,
            Engine::Markov { .. } => SampleMethod::Markov,
        }
    }

    /// Eigenvalues in `[−EIGEN_CLAMP, 0)` that were set to zero.
    pub fn clamped_eigenvalues(&self) -> usize {
        match &self.engine {
            Engine::Circulant(c) => c.clamped,
            _ => 0,
        }
    }

    /// One draw. For circulant embedding this is the real part of a transform
    /// whose imaginary part is discarded.
    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        match &self.engine {
            Engine::Circulant(c) => c.sample_pair(rng).0,
            _ => self.sample_single(rng),
        }
    }

    /// Two independent draws from one stream.
    pub fn sample_pair(&self, rng: &mut StreamRng) -> (Vec<f64>, Vec<f64>) {
        match &self.engine {
            Engine::Circulant(c) => c.sample_pair(rng),
            _ => {
                let a = self.sample_single(rng);
                (a, self.sample_single(rng))
            }
        }
    }

    fn sample_single(&self, rng: &mut StreamRng) -> Vec<f64> {
        match &self.engine {
            Engine::Markov { n, phi } => {
                let innov = (1.0 - phi * phi).sqrt();
                let mut out = Vec::with_capacity(*n);
                let mut x: f64 = rng.sample(StandardNormal);
                out.push(x);
                for _ in 1..*n {
                    let z: f64 = rng.sample(StandardNormal);
                    x = phi * x + innov * z;
                    out.push(x);
                }
                out
            }
            Engine::Dense(l) => {
                let z: Vec<f64> = (0..l.n).map(|_| rng.sample(StandardNormal)).collect();
                let mut out = vec![0.0; l.n];
                l.mul_vec(&z, &mut out);
                out
            }
            Engine::Circulant(c) => c.sample_pair(rng).0,
        }
    }
}

fn circulant_for(model: &CovarianceModel, lattice: &LatticeSpec) -> Result<Circulant> {
    let step = lattice.step().to_vec();
    let cov = move |lag: &[i64]| {
        let t: Vec<f64> = lag.iter().zip(&step).map(|(k, h)| *k as f64 * h).collect();
        model.eval(&t)
    };
    Circulant::build(lattice.counts(), &cov)
}

/// One exact draw of the stationary field on `lattice`. The same
/// `(model, lattice, seed)` always gives the same values.
pub fn sample_field(model: &CovarianceModel, lattice: &LatticeSpec, seed: u64) -> Result<FieldSample> {
    let sampler = FieldSampler::new(model, lattice, SampleMethod::Auto)?;
    let values = sampler.sample(&mut stream(seed, 0, StreamTag::Field));
    Ok(FieldSample { lattice: lattice.clone(), values, seed })
}

/// Adds the common factor: `√(1−ρ)·y + √ρ·U`.
pub fn apply_mixture(values: &mut [f64], rho: f64, common: f64) {
    if rho == 0.0 {
        return;
    }
    let (a, b) = ((1.0 - rho).sqrt(), rho.sqrt() * common);
    for v in values {
        *v = a * *v + b;
    }
}

/// The common normal `U` of a mixture draw, taken from its own substream.
pub fn mixture_common(seed: u64, part: u64) -> f64 {
    stream(seed, part, StreamTag::Mixture).sample(StandardNormal)
}

/// One draw of the mixture field `√(1−ρ)·Y + √ρ·U`; with `ρ = 0` this is
/// exactly [`sample_field`] of the base model.
pub fn sample_mixture_field(spec: &MixtureFieldSpec, lattice: &LatticeSpec, seed: u64) -> Result<FieldSample> {
    let rho = spec.rho();
    if !(0.0..1.0).contains(&rho) {
        return config_err(format!("mixing weight {rho} outside [0, 1)"));
    }
    let mut sample = sample_field(&spec.base, lattice, seed)?;
    if rho > 0.0 {
        apply_mixture(&mut sample.values, rho, mixture_common(seed, 0));
    }
    Ok(sample)
}

/// A fractional Brownian motion path on `{0, h, 2h, …}` with `B(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FbmPath {
    pub hurst: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

/// Prepared generator of fBm paths with a fixed number of increments.
pub struct FbmSampler {
    hurst: f64,
    step: f64,
    increments: usize,
    circulant: Option<Circulant>,
}

impl FbmSampler {
    pub fn new(hurst: f64, step: f64, increments: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return arg_err(format!("Hurst index {hurst} outside (0, 1)"));
        }
        if !(step > 0.0 && step.is_finite()) || increments == 0 {
            return arg_err("fBm step must be positive with at least one increment");
        }
        let circulant = if hurst == 0.5 {
            None
        } else {
            let scale = step.powf(2.0 * hurst);
            let h2 = 2.0 * hurst;
            let cov = move |lag: &[i64]| {
                let k = lag[0].unsigned_abs() as f64;
                0.5 * scale * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
            };
            Some(Circulant::build(&[increments], &cov)?)
        };
        Ok(Self { hurst, step, increments, circulant })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn points(&self) -> usize {
        self.increments + 1
    }

    fn integrate(&self, incr: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(incr.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for d in incr {
            acc += d;
            out.push(acc);
        }
        out
    }

    fn brownian_increments(&self, rng: &mut StreamRng) -> Vec<f64> {
        let s = self.step.sqrt();
        (0..self.increments).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    /// Two independent paths (B(0) = 0 for both).
    pub fn sample_pair(&self, rng: &mut StreamRng) -> (Vec<f64>, Vec<f64>) {
        match &self.circulant {
            Some(c) => {
                let (a, b) = c.sample_pair(rng);
                (self.integrate(&a), self.integrate(&b))
            }
            None => {
                let a = self.brownian_increments(rng);
                let b = self.brownian_increments(rng);
                (self.integrate(&a), self.integrate(&b))
            }
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        match &self.circulant {
            Some(c) => self.integrate(&c.sample_pair(rng).0),
            None => {
                let a = self.brownian_increments(rng);
                self.integrate(&a)
            }
        }
    }
}

/// Exact fBm on `[0, λ]` with spacing `step`: fractional Gaussian noise by
/// circulant embedding, cumulatively summed.
pub fn sample_fbm(hurst: f64, lambda: f64, step: f64, seed: u64) -> Result<FbmPath> {
    if !(lambda > 0.0 && step > 0.0 && step <= lambda / 4.0) {
        return arg_err(format!("fBm step {step} must lie in (0, λ/4] for λ = {lambda}"));
    }
    let sampler = FbmSampler::new(hurst, step, point_count(lambda, step) - 1)?;
    let values = sampler.sample(&mut stream(seed, 0, StreamTag::Path));
    Ok(FbmPath { hurst, step, values })
}

const DUMP_MAGIC: &[u8; 4] = b"FEXS";
const DUMP_VERSION: u32 = 1;

/// Writes a sample as a 32-byte header (magic, version, dimension, reserved,
/// two 64-bit point counts) followed by little-endian values.
pub fn write_dump<W: Write>(sample: &FieldSample, mut w: W) -> Result<()> {
    let counts = sample.lattice.counts();
    let mut header = Vec::with_capacity(32);
    header.extend_from_slice(DUMP_MAGIC);
    header.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    header.extend_from_slice(&(counts.len() as u32).to_le_bytes());
    header.extend_from_slice(&0u32.to_le_bytes());
    for ax in 0..2 {
        header.extend_from_slice(&(*counts.get(ax).unwrap_or(&1) as u64).to_le_bytes());
    }
    w.write_all(&header)?;
    for v in &sample.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a dump back as (point counts, values).
pub fn read_dump<R: Read>(mut r: R) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[..4] != DUMP_MAGIC {
        return config_err("not a field dump (bad magic)");
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if word(4) != DUMP_VERSION {
        return config_err(format!("unsupported dump version {}", word(4)));
    }
    let dim = word(8) as usize;
    if !(1..=2).contains(&dim) {
        return config_err(format!("bad dump dimension {dim}"));
    }
    let counts: Vec<usize> =
        (0..dim).map(|ax| u64::from_le_bytes(header[16 + 8 * ax..24 + 8 * ax].try_into().unwrap()) as usize).collect();
    let n: usize = counts.iter().product();
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((counts, values))
}
