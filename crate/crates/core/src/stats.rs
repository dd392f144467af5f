//! Point sets, density histograms and correlation scores.
//!
//! Point set A collects the abscissas where a trajectory meets the real
//! axis; point set B collects the real part of every sample. Both are binned
//! into [`DensityHistogram`]s and compared with analytic densities through
//! the Pearson coefficient of bin densities against the reference at bin
//! centres.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::StatsError;
use crate::fokker_planck::Field2D;
use crate::sde::{ComplexSample, Merge, SampleSink, Trajectory};

/// Uniform binning of `[lo, hi)` into `bins` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl BinSpec {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self, StatsError> {
        let spec = Self { lo, hi, bins };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        if self.bins < 2 {
            return Err(StatsError::InvalidBins(format!(
                "need at least 2 bins, got {}",
                self.bins
            )));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(StatsError::InvalidBins(format!(
                "range [{}, {}] is empty or not finite",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.width();
        (0..=self.bins)
            .map(|k| if k == self.bins { self.hi } else { self.lo + k as f64 * w })
            .collect()
    }

    /// Bin of `x`, or `None` outside `[lo, hi)` or for non-finite `x`.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        let k = ((x - self.lo) / self.width()) as usize;
        Some(k.min(self.bins - 1))
    }
}

/// Integer bin counts; merging adds counts, so merged results do not depend
/// on how samples were split between partial accumulators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramAccumulator {
    spec: BinSpecKey,
    pub counts: Vec<u64>,
    pub out_of_range: u64,
}

// BinSpec holds floats; compare them bitwise so the accumulator can be Eq.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BinSpecKey {
    lo: u64,
    hi: u64,
    bins: usize,
}

impl From<BinSpec> for BinSpecKey {
    fn from(s: BinSpec) -> Self {
        Self {
            lo: s.lo.to_bits(),
            hi: s.hi.to_bits(),
            bins: s.bins,
        }
    }
}

impl HistogramAccumulator {
    pub fn new(spec: BinSpec) -> Result<Self, StatsError> {
        spec.validate()?;
        Ok(Self {
            spec: spec.into(),
            counts: vec![0; spec.bins],
            out_of_range: 0,
        })
    }

    pub fn spec(&self) -> BinSpec {
        BinSpec {
            lo: f64::from_bits(self.spec.lo),
            hi: f64::from_bits(self.spec.hi),
            bins: self.spec.bins,
        }
    }

    pub fn add(&mut self, x: f64) {
        match self.spec().bin_of(x) {
            Some(k) => self.counts[k] += 1,
            None => self.out_of_range += 1,
        }
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn finish(&self) -> Result<DensityHistogram, StatsError> {
        let spec = self.spec();
        let total = self.in_range();
        if total == 0 {
            return Err(StatsError::EmptyRange {
                lo: spec.lo,
                hi: spec.hi,
            });
        }
        let norm = 1.0 / (total as f64 * spec.width());
        Ok(DensityHistogram {
            bin_edges: spec.edges(),
            densities: self.counts.iter().map(|&c| c as f64 * norm).collect(),
            total_samples: total,
            out_of_range: self.out_of_range,
        })
    }
}

impl Merge for HistogramAccumulator {
    fn merge(&mut self, other: Self) {
        assert_eq!(self.spec, other.spec, "merging histograms with different bins");
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.out_of_range += other.out_of_range;
    }
}

/// Binned probability density with unit integral over its bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    /// Samples inside the binned range.
    pub total_samples: u64,
    /// Samples outside the range, excluded from the normalization.
    pub out_of_range: u64,
}

impl DensityHistogram {
    /// Normalize arbitrary non-negative bin weights to unit integral.
    pub fn from_weights(
        bin_edges: Vec<f64>,
        weights: Vec<f64>,
        total_samples: u64,
    ) -> Result<Self, StatsError> {
        if bin_edges.len() < 3 || bin_edges.len() != weights.len() + 1 {
            return Err(StatsError::InvalidBins(format!(
                "{} edges for {} bins",
                bin_edges.len(),
                weights.len()
            )));
        }
        if bin_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StatsError::InvalidBins("edges must increase strictly".into()));
        }
        let mass: f64 = weights
            .iter()
            .zip(bin_edges.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(StatsError::EmptyRange {
                lo: bin_edges[0],
                hi: bin_edges[bin_edges.len() - 1],
            });
        }
        Ok(Self {
            densities: weights.iter().map(|d| d / mass).collect(),
            bin_edges,
            total_samples,
            out_of_range: 0,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.densities.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `sum density_i * width_i`; 1 up to rounding.
    pub fn integral(&self) -> f64 {
        self.densities.iter().zip(self.widths()).map(|(d, w)| d * w).sum()
    }

    /// Density of the bin containing `x`, 0 outside the binned range.
    pub fn density_at(&self, x: f64) -> f64 {
        let k = self.bin_edges.partition_point(|e| *e <= x);
        if k == 0 || k > self.n_bins() {
            0.0
        } else {
            self.densities[k - 1]
        }
    }

    /// CSV with header `bin_center,density`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "bin_center,density")?;
        for (c, d) in self.centers().iter().zip(&self.densities) {
            writeln!(out, "{c:.16e},{d:.16e}")?;
        }
        Ok(())
    }
}

pub fn build_histogram(
    samples: &[f64],
    n_bins: usize,
    range: (f64, f64),
) -> Result<DensityHistogram, StatsError> {
    let mut acc = HistogramAccumulator::new(BinSpec::new(range.0, range.1, n_bins)?)?;
    for &x in samples {
        acc.add(x);
    }
    acc.finish()
}

/// One intersection of a trajectory with the real axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub x: f64,
    pub t: f64,
    pub trajectory_index: usize,
}

/// Intersections of consecutive samples `a -> b` with `y = 0`: a sample
/// exactly on the axis, or a strict sign change interpolated linearly.
#[derive(Debug, Clone, Copy, Default)]
struct CrossingDetector {
    prev: Option<ComplexSample>,
}

impl CrossingDetector {
    fn feed(&mut self, s: ComplexSample) -> Option<(f64, f64)> {
        let hit = if s.y == 0.0 {
            Some((s.x, s.t))
        } else {
            match self.prev {
                Some(p) if p.y * s.y < 0.0 => {
                    let frac = -p.y / (s.y - p.y);
                    Some((p.x + (s.x - p.x) * frac, p.t + (s.t - p.t) * frac))
                }
                _ => None,
            }
        };
        self.prev = Some(s);
        hit
    }
}

/// Point set A of one trajectory.
pub fn detect_crossings(trajectory: &Trajectory) -> Vec<CrossingRecord> {
    let mut det = CrossingDetector::default();
    trajectory
        .samples
        .iter()
        .filter_map(|s| det.feed(*s))
        .map(|(x, t)| CrossingRecord {
            x,
            t,
            trajectory_index: trajectory.index,
        })
        .collect()
}

/// Point set B of one trajectory.
pub fn project_real(trajectory: &Trajectory) -> Vec<f64> {
    trajectory.samples.iter().map(|s| s.x).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSet {
    /// Real-axis crossings.
    A,
    /// Real parts of all samples.
    B,
}

/// Streaming histogram of a point set, usable as an ensemble sink.
#[derive(Debug, Clone)]
pub struct PointSetAccumulator {
    pub set: PointSet,
    pub histogram: HistogramAccumulator,
    /// Number of points offered, in range or not.
    pub points: u64,
    detector: CrossingDetector,
}

impl PointSetAccumulator {
    pub fn new(set: PointSet, spec: BinSpec) -> Result<Self, StatsError> {
        Ok(Self {
            set,
            histogram: HistogramAccumulator::new(spec)?,
            points: 0,
            detector: CrossingDetector::default(),
        })
    }
}

impl SampleSink for PointSetAccumulator {
    fn begin_trajectory(&mut self, _index: usize) {
        self.detector = CrossingDetector::default();
    }

    fn record(&mut self, sample: ComplexSample) {
        let x = match self.set {
            PointSet::B => Some(sample.x),
            PointSet::A => self.detector.feed(sample).map(|(x, _)| x),
        };
        if let Some(x) = x {
            self.points += 1;
            self.histogram.add(x);
        }
    }
}

impl Merge for PointSetAccumulator {
    fn merge(&mut self, other: Self) {
        self.histogram.merge(other.histogram);
        self.points += other.points;
    }
}

/// Pearson coefficient of two equally long vectors.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    assert_eq!(a.len(), b.len());
    if a.len() < 3 {
        return Err(StatsError::TooFewBins {
            needed: 3,
            got: a.len(),
        });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // variance at rounding level of the mean counts as zero
    let negligible = |m: f64| n * (16.0 * f64::EPSILON * m).powi(2);
    if !(saa > negligible(ma)) {
        return Err(StatsError::ZeroVariance("histogram densities"));
    }
    if !(sbb > negligible(mb)) {
        return Err(StatsError::ZeroVariance("reference values"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson coefficient between bin densities and `reference` at bin centres.
pub fn pearson_correlation(
    hist: &DensityHistogram,
    reference: impl Fn(f64) -> f64,
) -> Result<f64, StatsError> {
    let refs: Vec<f64> = hist.centers().into_iter().map(reference).collect();
    pearson(&hist.densities, &refs)
}

/// [`pearson_correlation`] restricted to bins whose centres lie in
/// `[window.0, window.1]`.
pub fn pearson_correlation_windowed(
    hist: &DensityHistogram,
    reference: impl Fn(f64) -> f64,
    window: (f64, f64),
) -> Result<f64, StatsError> {
    let (d, r): (Vec<f64>, Vec<f64>) = hist
        .centers()
        .into_iter()
        .zip(&hist.densities)
        .filter(|(c, _)| *c >= window.0 && *c <= window.1)
        .map(|(c, d)| (*d, reference(c)))
        .unzip();
    pearson(&d, &r)
}

/// Marginal over `y` of a field, as a histogram whose bins are centred on
/// the grid's `x` points. Each column is integrated with the trapezoid rule
/// and the result is renormalized to unit integral.
pub fn marginal_y(field: &Field2D) -> Result<DensityHistogram, StatsError> {
    let (nx, ny) = (field.nx(), field.ny());
    for i in 0..nx {
        for j in 0..ny {
            if !field.get(i, j).is_finite() {
                return Err(StatsError::NonFiniteField {
                    x: field.x.coord(i),
                    y: field.y.coord(j),
                });
            }
        }
    }
    let mass = field.mass();
    if (mass - 1.0).abs() > 0.05 {
        return Err(StatsError::NotNormalized { mass });
    }
    let hy = field.y.spacing();
    let column = |i: usize| -> f64 {
        let inner: f64 = (1..ny - 1).map(|j| field.get(i, j)).sum();
        hy * (inner + 0.5 * (field.get(i, 0) + field.get(i, ny - 1)))
    };
    let weights: Vec<f64> = (0..nx).map(column).collect();
    let hx = field.x.spacing();
    let edges: Vec<f64> = (0..=nx)
        .map(|k| field.x.coord(0) + (k as f64 - 0.5) * hx)
        .collect();
    // symmetric grids get exactly symmetric edges
    let edges = symmetrize(edges);
    DensityHistogram::from_weights(edges, weights, 0)
}

fn symmetrize(mut edges: Vec<f64>) -> Vec<f64> {
    let n = edges.len();
    if (edges[0] + edges[n - 1]).abs() < 1e-12 * edges[n - 1].abs() {
        for k in 0..n / 2 {
            let m = 0.5 * (edges[n - 1 - k] - edges[k]);
            edges[k] = -m;
            edges[n - 1 - k] = m;
        }
        if n % 2 == 1 {
            edges[n / 2] = 0.0;
        }
    }
    edges
}
