//! Spatial noise basis and Brownian driving paths.
//!
//! A noise component Xi^j is either a constant xi or a single Fourier mode
//! xi (C cos(2 pi j x / L) + D sin(2 pi j x / L)); both have analytic first
//! and second derivatives, which the transport-noise terms of the solver
//! need pointwise.
//!
//! A Brownian path stores the increments Delta W for every (step, component)
//! pair of one realization. Increments are sampled once per realization at
//! the finest time step; coarser solver runs reuse the same randomness via
//! [`BrownianPath::coarsen`], which sums fine increments per block so paths
//! at different dt agree at shared times. Sampling is keyed by (seed,
//! component): every component draws from its own counter-based stream, so
//! realizations parallelize without stream overlap.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Derivative order for [`NoiseComponent::eval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deriv {
    Value,
    First,
    Second,
}

/// One spatial component of the noise basis.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseComponent<T> {
    /// Xi(x) = xi.
    Constant { xi: T },
    /// Xi(x) = xi (c cos(2 pi mode x / L) + d sin(2 pi mode x / L)).
    Fourier { mode: u32, c: T, d: T, xi: T, length: T },
}

impl<T: Scalar> NoiseComponent<T> {
    pub fn constant(xi: T) -> Self {
        NoiseComponent::Constant { xi }
    }

    pub fn fourier(mode: u32, c: T, d: T, xi: T, length: T) -> Result<Self> {
        if mode == 0 {
            return Err(Error::invalid("Fourier noise component needs mode >= 1; use a constant component instead"));
        }
        if !(length > T::zero()) {
            return Err(Error::invalid("Fourier noise component needs a positive domain length"));
        }
        Ok(NoiseComponent::Fourier { mode, c, d, xi, length })
    }

    /// Evaluates Xi, Xi_x or Xi_xx at `x`.
    pub fn eval(&self, x: T, deriv: Deriv) -> T {
        match *self {
            NoiseComponent::Constant { xi } => match deriv {
                Deriv::Value => xi,
                _ => T::zero(),
            },
            NoiseComponent::Fourier { mode, c, d, xi, length } => {
                let k = cast::<T>(2.0 * std::f64::consts::PI) * T::from_u32(mode).unwrap() / length;
                let (s, co) = (k * x).sin_cos();
                match deriv {
                    Deriv::Value => xi * (c * co + d * s),
                    Deriv::First => xi * k * (d * co - c * s),
                    Deriv::Second => -(xi * k * k) * (c * co + d * s),
                }
            }
        }
    }

    #[inline]
    pub fn xi(&self, x: T) -> T {
        self.eval(x, Deriv::Value)
    }

    #[inline]
    pub fn xi_x(&self, x: T) -> T {
        self.eval(x, Deriv::First)
    }

    #[inline]
    pub fn xi_xx(&self, x: T) -> T {
        self.eval(x, Deriv::Second)
    }
}

/// Ordered collection of noise components; empty means deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseBasis<T> {
    components: Vec<NoiseComponent<T>>,
}

impl<T: Scalar> NoiseBasis<T> {
    pub fn new(components: Vec<NoiseComponent<T>>) -> Self {
        Self { components }
    }

    pub fn empty() -> Self {
        Self { components: Vec::new() }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.components.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    #[inline]
    pub fn components(&self) -> &[NoiseComponent<T>] {
        &self.components
    }

    pub fn iter(&self) -> std::slice::Iter<'_, NoiseComponent<T>> {
        self.components.iter()
    }
}

/// Mixes a realization index into a base seed (splitmix64 finalizer), so
/// ensemble members get decorrelated but reproducible seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const PATH_MAGIC: &[u8; 4] = b"SCHW";
const PATH_FORMAT_VERSION: u32 = 1;

/// Brownian increments for one realization: `n_steps` rows of
/// `n_components` increments, each N(0, dt), stored row major.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath<T> {
    seed: u64,
    dt: T,
    n_steps: usize,
    n_components: usize,
    increments: Vec<T>,
}

impl<T: Scalar> BrownianPath<T> {
    /// Samples a fresh path. Component `j` draws from the ChaCha stream
    /// `(seed, j)`; draws advance with the step index, so the layout is
    /// reproducible independent of how it is later consumed.
    pub fn sample(seed: u64, dt: T, n_steps: usize, n_components: usize) -> Result<Self>
    where
        StandardNormal: Distribution<T>,
    {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::invalid(format!("Brownian path needs dt > 0, got {dt}")));
        }
        let scale = dt.sqrt();
        let mut increments = vec![T::zero(); n_steps * n_components];
        for j in 0..n_components {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            for step in 0..n_steps {
                let z: T = StandardNormal.sample(&mut rng);
                increments[step * n_components + j] = scale * z;
            }
        }
        Ok(Self { seed, dt, n_steps, n_components, increments })
    }

    /// A path of explicit zeros (deterministic driving).
    pub fn zeros(dt: T, n_steps: usize, n_components: usize) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::invalid(format!("Brownian path needs dt > 0, got {dt}")));
        }
        Ok(Self { seed: 0, dt, n_steps, n_components, increments: vec![T::zero(); n_steps * n_components] })
    }

    pub fn from_increments(seed: u64, dt: T, n_components: usize, increments: Vec<T>) -> Result<Self> {
        if n_components == 0 {
            if !increments.is_empty() {
                return Err(Error::invalid("increments must be empty when there are no components"));
            }
            return Ok(Self { seed, dt, n_steps: 0, n_components, increments });
        }
        if increments.len() % n_components != 0 {
            return Err(Error::invalid("increment count not divisible by component count"));
        }
        let n_steps = increments.len() / n_components;
        Ok(Self { seed, dt, n_steps, n_components, increments })
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn dt(&self) -> T {
        self.dt
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn n_components(&self) -> usize {
        self.n_components
    }

    /// Increments of step `i`, one per component.
    #[inline]
    pub fn step_increments(&self, i: usize) -> &[T] {
        &self.increments[i * self.n_components..(i + 1) * self.n_components]
    }

    #[inline]
    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    /// Cumulative value of component `j` after `steps` steps.
    pub fn sum_component(&self, j: usize, steps: usize) -> T {
        (0..steps).map(|i| self.increments[i * self.n_components + j]).sum()
    }

    /// Sums blocks of `m` consecutive increments, producing the same
    /// realization on a step `m` times larger. `m` must divide `n_steps`.
    ///
    /// The plain block sum keeps the variance at the coarse dt and makes the
    /// coarse path agree with the fine one at every shared time.
    pub fn coarsen(&self, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("coarsening factor must be >= 1"));
        }
        if self.n_steps % m != 0 {
            return Err(Error::invalid(format!(
                "coarsening factor {m} does not divide {} steps",
                self.n_steps
            )));
        }
        if m == 1 {
            return Ok(self.clone());
        }
        let coarse_steps = self.n_steps / m;
        let mut increments = vec![T::zero(); coarse_steps * self.n_components];
        for block in 0..coarse_steps {
            for j in 0..self.n_components {
                let mut acc = T::zero();
                for k in 0..m {
                    acc = acc + self.increments[(block * m + k) * self.n_components + j];
                }
                increments[block * self.n_components + j] = acc;
            }
        }
        Ok(Self {
            seed: self.seed,
            dt: self.dt * T::from_usize(m).unwrap(),
            n_steps: coarse_steps,
            n_components: self.n_components,
            increments,
        })
    }

    /// Writes the path in the little-endian binary layout:
    ///
    /// ```text
    /// offset  size  field
    /// 0       4     magic "SCHW"
    /// 4       4     format version (u32, currently 1)
    /// 8       8     seed (u64)
    /// 16      8     dt (f64)
    /// 24      8     n_steps (u64)
    /// 32      8     n_components (u64)
    /// 40      ...   increments, row major (step-by-step), f64 each
    /// ```
    ///
    /// Increments are widened to f64 on disk regardless of the in-memory
    /// scalar type; f32 payloads round-trip exactly.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(40 + 8 * self.increments.len());
        buf.extend_from_slice(PATH_MAGIC);
        buf.extend_from_slice(&PATH_FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&self.dt.to_f64().unwrap().to_le_bytes());
        buf.extend_from_slice(&(self.n_steps as u64).to_le_bytes());
        buf.extend_from_slice(&(self.n_components as u64).to_le_bytes());
        for inc in &self.increments {
            buf.extend_from_slice(&inc.to_f64().unwrap().to_le_bytes());
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    /// Reads a path written by [`BrownianPath::write_binary`].
    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 40 {
            return Err(Error::Format("path file shorter than its header".into()));
        }
        if &bytes[0..4] != PATH_MAGIC {
            return Err(Error::Format("bad magic; not a Brownian path file".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != PATH_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported path format version {version}")));
        }
        let seed = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let dt = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let n_steps = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
        let n_components = u64::from_le_bytes(bytes[32..40].try_into().unwrap()) as usize;
        let expected = n_steps
            .checked_mul(n_components)
            .and_then(|k| k.checked_mul(8))
            .and_then(|k| k.checked_add(40))
            .ok_or_else(|| Error::Format("path dimensions overflow".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "path file length {} does not match header ({} expected)",
                bytes.len(),
                expected
            )));
        }
        let mut increments = Vec::with_capacity(n_steps * n_components);
        for chunk in bytes[40..].chunks_exact(8) {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            increments.push(T::from_f64(v).ok_or_else(|| Error::Format("increment not representable".into()))?);
        }
        let dt = T::from_f64(dt).ok_or_else(|| Error::Format("dt not representable".into()))?;
        Self::from_increments(seed, dt, n_components, increments)
    }

    /// CSV export: header `step,dW_0,...`, one row per step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "step")?;
        for j in 0..self.n_components {
            write!(out, ",dW_{j}")?;
        }
        writeln!(out)?;
        for step in 0..self.n_steps {
            write!(out, "{step}")?;
            for j in 0..self.n_components {
                write!(out, ",{}", self.increments[step * self.n_components + j])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// FNV-1a hash of the on-disk increment bytes; used to assert that runs
    /// at different resolutions consumed the same realization.
    pub fn increments_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for inc in &self.increments {
            for b in inc.to_f64().unwrap().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}
