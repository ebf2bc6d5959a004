//! Evaluation of generated samples and of training runs.

use std::fmt::Write;

use crate::autodiff::Array;
use crate::data::GaussianMixture;
use crate::error::{Error, Result};
use crate::evolution::{EvolutionStepLog, Mutation};
use crate::nets::{gen_forward, Network};

/// Fraction of the fair per-mode share of samples a mode must claim.
pub const CAPTURE_SHARE: f64 = 0.2;

/// How many mixture components a sample set covers.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeCoverageReport {
    /// Modes with at least `max(1, CAPTURE_SHARE · n / k)` high-quality samples.
    pub modes_captured: usize,
    /// Modes with at least one high-quality sample.
    pub modes_touched: usize,
    /// High-quality samples claimed by each center.
    pub per_mode: Vec<usize>,
    /// Fraction of samples within `k_sigma · σ` of their nearest center.
    pub high_quality_ratio: f64,
    pub samples: usize,
}

impl ModeCoverageReport {
    pub fn to_csv(&self, mixture: &GaussianMixture) -> String {
        let mut out = format!(
            "modes_captured,{}\nmodes_touched,{}\nhigh_quality_ratio,{}\nsamples,{}\nmode,center_x,center_y,count\n",
            self.modes_captured, self.modes_touched, self.high_quality_ratio, self.samples
        );
        for (k, (c, n)) in mixture.centers().iter().zip(&self.per_mode).enumerate() {
            let _ = writeln!(out, "{k},{},{},{n}", c[0], c[1]);
        }
        out
    }
}

/// Assigns every sample to its nearest center and counts the close ones.
pub fn mode_coverage(samples: &Array, mixture: &GaussianMixture, k_sigma: f64) -> Result<ModeCoverageReport> {
    if samples.is_empty() || samples.cols() != 2 {
        return Err(Error::Structural(format!(
            "expected n×2 samples, got {:?}",
            samples.shape()
        )));
    }
    if !(k_sigma > 0.0) {
        return Err(Error::Usage("k_sigma must be positive".into()));
    }
    let centers = mixture.centers();
    let radius = k_sigma * mixture.sigma();
    let mut per_mode = vec![0usize; centers.len()];
    let mut good = 0usize;
    let n = samples.rows();
    for r in 0..n {
        let p = samples.row(r);
        let (k, d2) = centers
            .iter()
            .map(|c| (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2))
            .enumerate()
            .fold((0, f64::INFINITY), |best, (k, d2)| if d2 < best.1 { (k, d2) } else { best });
        if d2.sqrt() <= radius {
            per_mode[k] += 1;
            good += 1;
        }
    }
    let threshold = (CAPTURE_SHARE * n as f64 / centers.len() as f64).max(1.0);
    Ok(ModeCoverageReport {
        modes_captured: per_mode.iter().filter(|&&c| c as f64 >= threshold).count(),
        modes_touched: per_mode.iter().filter(|&&c| c > 0).count(),
        per_mode,
        high_quality_ratio: good as f64 / n as f64,
        samples: n,
    })
}

/// Gaussian kernel density estimate on a square grid.
#[derive(Clone, Debug, PartialEq)]
pub struct KdeGrid {
    /// `[min, max]` of both axes.
    pub extent: (f64, f64),
    pub resolution: usize,
    pub bandwidth: f64,
    /// Densities at cell centres, row-major with `y` as the row index.
    pub density: Vec<f64>,
}

/// Kernels are truncated this many bandwidths from their sample.
const KDE_CUTOFF: f64 = 8.0;

impl KdeGrid {
    pub fn cell_size(&self) -> f64 {
        (self.extent.1 - self.extent.0) / self.resolution as f64
    }

    /// Centre coordinate of cell index `i` along either axis.
    pub fn center(&self, i: usize) -> f64 {
        self.extent.0 + (i as f64 + 0.5) * self.cell_size()
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.density[iy * self.resolution + ix]
    }

    /// Riemann sum of the density over the grid.
    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_size().powi(2)
    }

    /// Cell indices `(ix, iy)` of the largest density.
    pub fn argmax(&self) -> (usize, usize) {
        let i = self
            .density
            .iter()
            .enumerate()
            .fold(0, |b, (i, &v)| if v > self.density[b] { i } else { b });
        (i % self.resolution, i / self.resolution)
    }

    /// Header line declaring extent, resolution and bandwidth, then `x,y,density`.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# extent_min={},extent_max={},resolution={},bandwidth={}\nx,y,density\n",
            self.extent.0, self.extent.1, self.resolution, self.bandwidth
        );
        for iy in 0..self.resolution {
            for ix in 0..self.resolution {
                let _ = writeln!(out, "{},{},{}", self.center(ix), self.center(iy), self.at(ix, iy));
            }
        }
        out
    }
}

pub fn kde_grid(samples: &Array, bandwidth: f64, extent: (f64, f64), resolution: usize) -> Result<KdeGrid> {
    if !(bandwidth > 0.0) {
        return Err(Error::Usage("bandwidth must be positive".into()));
    }
    if !(extent.1 > extent.0) || resolution == 0 {
        return Err(Error::Usage("empty KDE grid".into()));
    }
    if samples.is_empty() || samples.cols() != 2 {
        return Err(Error::Structural(format!("expected n×2 samples, got {:?}", samples.shape())));
    }
    let mut grid = KdeGrid { extent, resolution, bandwidth, density: vec![0.0; resolution * resolution] };
    let cell = grid.cell_size();
    let n = samples.rows();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * bandwidth * bandwidth * n as f64);
    let reach = KDE_CUTOFF * bandwidth;
    // index range of cells whose centres lie within `reach` of `v`
    let span = |v: f64| -> (usize, usize) {
        let lo = ((v - reach - extent.0) / cell - 0.5).ceil().max(0.0) as usize;
        let hi = ((v + reach - extent.0) / cell - 0.5).floor();
        if hi < 0.0 {
            return (1, 0);
        }
        (lo, (hi as usize).min(resolution - 1))
    };
    let mut wx = Vec::new();
    for r in 0..n {
        let p = samples.row(r);
        let (x0, x1) = span(p[0]);
        let (y0, y1) = span(p[1]);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        wx.clear();
        wx.extend((x0..=x1).map(|ix| (-0.5 * ((grid.center(ix) - p[0]) / bandwidth).powi(2)).exp()));
        for iy in y0..=y1 {
            let wy = norm * (-0.5 * ((grid.center(iy) - p[1]) / bandwidth).powi(2)).exp();
            let row = &mut grid.density[iy * resolution + x0..=iy * resolution + x1];
            for (d, w) in row.iter_mut().zip(&wx) {
                *d += wy * w;
            }
        }
    }
    Ok(grid)
}

/// Result of checking the optimal-discriminator formula by grid search.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalDiscriminatorReport {
    /// `p_data / (p_data + p_g)` per support point (NaN where both vanish).
    pub closed_form: Vec<f64>,
    /// Grid value maximizing the per-point objective.
    pub grid_argmax: Vec<f64>,
    /// Largest `|grid_argmax − closed_form|` over points with mass.
    pub max_deviation: f64,
    pub step: f64,
}

/// Maximizes `Σ p_data·log D + p_g·log(1 − D)` over `D ∈ {step, 2·step, …} ∩ (0, 1)`
/// independently per point and compares with the closed form.
pub fn optimal_discriminator_check(p_data: &[f64], p_g: &[f64], step: f64) -> Result<OptimalDiscriminatorReport> {
    if p_data.len() != p_g.len() || p_data.is_empty() {
        return Err(Error::Usage("distributions must share a non-empty support".into()));
    }
    for (name, p) in [("p_data", p_data), ("p_g", p_g)] {
        let total: f64 = p.iter().sum();
        if p.iter().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Usage(format!("{name} is not a normalized distribution")));
        }
    }
    if !(step > 0.0 && step < 0.5) {
        return Err(Error::Usage("grid step must lie in (0, 0.5)".into()));
    }
    let points = ((1.0 / step).round() as usize).saturating_sub(1);
    let mut closed_form = Vec::with_capacity(p_data.len());
    let mut grid_argmax = Vec::with_capacity(p_data.len());
    let mut max_deviation: f64 = 0.0;
    for (&a, &b) in p_data.iter().zip(p_g) {
        let d_star = if a + b > 0.0 { a / (a + b) } else { f64::NAN };
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for k in 1..=points {
            let d = k as f64 * step;
            // 0·log(0) terms vanish
            let mut v = 0.0;
            if a > 0.0 {
                v += a * d.ln();
            }
            if b > 0.0 {
                v += b * (1.0 - d).ln();
            }
            if v > best.0 {
                best = (v, d);
            }
        }
        if !d_star.is_nan() {
            max_deviation = max_deviation.max((best.1 - d_star).abs());
        }
        closed_form.push(d_star);
        grid_argmax.push(best.1);
    }
    Ok(OptimalDiscriminatorReport { closed_form, grid_argmax, max_deviation, step })
}

/// Survivor counts per mutation over consecutive windows of steps.
#[derive(Clone, Debug, PartialEq)]
pub struct MutationSelectionLog {
    pub window: usize,
    /// Steps covered by each window; the last one may be shorter.
    pub steps: Vec<usize>,
    /// Survivor counts per window, indexed like [`Mutation::ALL`].
    pub counts: Vec<[usize; 3]>,
}

impl MutationSelectionLog {
    /// Counts over the whole run.
    pub fn totals(&self) -> [usize; 3] {
        self.counts.iter().fold([0; 3], |mut acc, c| {
            for k in 0..3 {
                acc[k] += c[k];
            }
            acc
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("window_start,steps,minimax,heuristic,leastsq\n");
        let mut start = 0;
        for (s, c) in self.steps.iter().zip(&self.counts) {
            let _ = writeln!(out, "{start},{s},{},{},{}", c[0], c[1], c[2]);
            start += s;
        }
        out
    }
}

pub fn selection_histogram(logs: &[EvolutionStepLog], window: usize) -> Result<MutationSelectionLog> {
    if window == 0 {
        return Err(Error::Usage("window must be at least 1".into()));
    }
    let mut steps = Vec::new();
    let mut counts = Vec::new();
    for chunk in logs.chunks(window) {
        let mut c = [0usize; 3];
        for log in chunk {
            for m in log.selected() {
                c[m.rank()] += 1;
            }
        }
        steps.push(chunk.len());
        counts.push(c);
    }
    Ok(MutationSelectionLog { window, steps, counts })
}

/// Generator outputs along the straight line from `z1` to `z2`.
pub fn latent_interpolation(gen: &Network, z1: &[f64], z2: &[f64], steps: usize) -> Result<Array> {
    if steps < 2 {
        return Err(Error::Usage("interpolation needs at least 2 steps".into()));
    }
    let dim = gen.spec().input_dim;
    if z1.len() != dim || z2.len() != dim {
        return Err(Error::Structural(format!(
            "latent vectors of length {} and {} for a {dim}-dimensional generator",
            z1.len(),
            z2.len()
        )));
    }
    let mut data = Vec::with_capacity(steps * dim);
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        if i == 0 {
            data.extend_from_slice(z1);
        } else if i == steps - 1 {
            data.extend_from_slice(z2);
        } else {
            data.extend(z1.iter().zip(z2).map(|(a, b)| a + t * (b - a)));
        }
    }
    gen_forward(gen, &Array::matrix(steps, dim, data)?)
}

/// Name of the survivor mutation at each step (first survivor).
pub fn selected_per_step(logs: &[EvolutionStepLog]) -> Vec<Mutation> {
    logs.iter().filter_map(|l| l.selected().next()).collect()
}
