//! Target distributions, noise, and seeded random streams.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::autodiff::Array;
use crate::error::{Error, Result};

/// Named sub-streams of the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init,
    Data,
    Noise,
    Fitness,
    Eval,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Data => 2,
            Stream::Noise => 3,
            Stream::Fitness => 4,
            Stream::Eval => 5,
        }
    }
}

/// An independent generator for one named sub-stream of `seed`.
pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

/// Equal-weight isotropic Gaussian mixture in the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    centers: Vec<[f64; 2]>,
    sigma: f64,
}

impl GaussianMixture {
    pub fn new(centers: Vec<[f64; 2]>, sigma: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::config("data.centers", "a mixture needs at least one center"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::config("data.sigma", format!("must be positive, got {sigma}")));
        }
        if centers.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::config("data.centers", "centers must be finite"));
        }
        Ok(GaussianMixture { centers, sigma })
    }

    /// `k` components equally spaced on a circle.
    pub fn ring(k: usize, radius: f64, sigma: f64) -> Result<Self> {
        let centers = (0..k)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / k as f64;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect();
        GaussianMixture::new(centers, sigma)
    }

    /// `side × side` components on a square lattice centred on the origin.
    pub fn grid(side: usize, spacing: f64, sigma: f64) -> Result<Self> {
        let half = (side as f64 - 1.0) / 2.0;
        let mut centers = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                centers.push([(i as f64 - half) * spacing, (j as f64 - half) * spacing]);
            }
        }
        GaussianMixture::new(centers, sigma)
    }

    /// Eight components on a circle of radius 2, σ = 0.02.
    pub fn ring8() -> Self {
        GaussianMixture::ring(8, 2.0, 0.02).expect("valid constants")
    }

    /// 5×5 components spanning [-4, 4]², σ = 0.05.
    pub fn grid25() -> Self {
        GaussianMixture::grid(5, 2.0, 0.05).expect("valid constants")
    }

    pub fn centers(&self) -> &[[f64; 2]] {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array {
        let mut data = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let c = self.centers[rng.gen_range(0..self.centers.len())];
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            data.push(c[0] + self.sigma * dx);
            data.push(c[1] + self.sigma * dy);
        }
        Array::matrix(n, 2, data).expect("n >= 1")
    }
}

/// Where real samples come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Mixture(GaussianMixture),
    /// A fixed point set, sampled uniformly with replacement.
    Points(Vec<[f64; 2]>),
}

impl DataSource {
    /// Parses two comma-separated reals per line, no header.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Data(format!("line {}: expected `x,y`, found `{line}`", i + 1));
            let mut fields = line.split(',');
            let (Some(x), Some(y), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(bad());
            };
            let x: f64 = x.trim().parse().map_err(|_| bad())?;
            let y: f64 = y.trim().parse().map_err(|_| bad())?;
            if !x.is_finite() || !y.is_finite() {
                return Err(bad());
            }
            points.push([x, y]);
        }
        if points.is_empty() {
            return Err(Error::Data("dataset file has no points".into()));
        }
        Ok(DataSource::Points(points))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        DataSource::parse_csv(&text)
    }

    /// `n × 2` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array> {
        if n == 0 {
            return Err(Error::Usage("sample size must be at least 1".into()));
        }
        Ok(match self {
            DataSource::Mixture(m) => m.sample(n, rng),
            DataSource::Points(p) => {
                let data = (0..n).flat_map(|_| p[rng.gen_range(0..p.len())]).collect();
                Array::matrix(n, 2, data)?
            }
        })
    }
}

/// Standard normal latent noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseSampler {
    z_dim: usize,
}

impl NoiseSampler {
    pub fn new(z_dim: usize) -> Result<Self> {
        if z_dim == 0 {
            return Err(Error::config("generator.z_dim", "must be at least 1"));
        }
        Ok(NoiseSampler { z_dim })
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    /// `n × z_dim` i.i.d. standard normal entries.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array> {
        if n == 0 {
            return Err(Error::Usage("noise batch size must be at least 1".into()));
        }
        let data = (0..n * self.z_dim).map(|_| rng.sample(StandardNormal)).collect();
        Array::matrix(n, self.z_dim, data)
    }
}
