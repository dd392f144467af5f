use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::FpError;

/// Uniform axis with `points` nodes from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self, FpError> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(FpError::InvalidProblem(format!(
                "axis bounds [{min}, {max}] are not an interval"
            )));
        }
        if points < 3 {
            return Err(FpError::InvalidProblem(format!(
                "axis needs at least 3 points, got {points}"
            )));
        }
        Ok(Self { min, max, points })
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    /// Coordinate of point `i`, measured from the axis midpoint so that
    /// symmetric axes have exactly antisymmetric coordinates.
    pub fn coord(&self, i: usize) -> f64 {
        let mid = 0.5 * (self.min + self.max);
        mid + (i as f64 - 0.5 * (self.points - 1) as f64) * self.spacing()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coord(i)).collect()
    }

    fn trapezoid_weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.points {
            0.5 * h
        } else {
            h
        }
    }
}

/// How to lay out one axis of a solver grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AxisSpec {
    Uniform {
        min: f64,
        max: f64,
        points: usize,
    },
    /// Symmetric axis on roughly `[-half_width, half_width]` whose points sit
    /// at odd multiples of `h/2`, with `h` close to `spacing` and chosen so
    /// that every real node of the state is an integer multiple of `h`.
    /// Nodes then fall exactly midway between two grid points.
    NodeCentered {
        half_width: f64,
        spacing: f64,
    },
}

impl AxisSpec {
    pub fn resolve(&self, nodes: &[f64]) -> Result<GridAxis, FpError> {
        match *self {
            AxisSpec::Uniform { min, max, points } => GridAxis::new(min, max, points),
            AxisSpec::NodeCentered {
                half_width,
                spacing,
            } => {
                if !(half_width > 0.0 && spacing > 0.0 && spacing < half_width) {
                    return Err(FpError::InvalidProblem(format!(
                        "node-centered axis needs 0 < spacing < half_width, got {spacing} and {half_width}"
                    )));
                }
                let h = node_spacing(nodes, spacing)?;
                let m = (half_width / h + 0.5).floor() as usize;
                let outer = (m as f64 - 0.5) * h;
                GridAxis::new(-outer, outer, 2 * m)
            }
        }
    }
}

fn node_spacing(nodes: &[f64], target: f64) -> Result<f64, FpError> {
    let Some(&base) = nodes
        .iter()
        .filter(|x| **x > 0.0)
        .min_by(|a, b| a.total_cmp(b))
    else {
        return Ok(target);
    };
    let k = (base / target).round().max(1.0);
    let h = base / k;
    for &x in nodes.iter().filter(|x| **x > 0.0) {
        let q = x / h;
        if (q - q.round()).abs() > 1e-9 * q.max(1.0) {
            return Err(FpError::InvalidProblem(format!(
                "real nodes {nodes:?} are not commensurate; use a uniform axis"
            )));
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field1D {
    pub axis: GridAxis,
    pub values: Vec<f64>,
}

impl Field1D {
    pub fn zeros(axis: GridAxis) -> Self {
        Self {
            axis,
            values: vec![0.0; axis.points],
        }
    }

    pub fn from_fn(axis: GridAxis, f: impl Fn(f64) -> f64) -> Self {
        Self {
            axis,
            values: axis.coords().into_iter().map(f).collect(),
        }
    }

    /// Trapezoid-rule integral.
    pub fn mass(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.axis.trapezoid_weight(i))
            .sum()
    }

    /// CSV with header `x,rho`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,rho")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e}", self.axis.coord(i), v)?;
        }
        Ok(())
    }
}

/// Density on a rectangular grid, stored row-major with `x` as the outer
/// index: `values[i * ny + j]` is the value at `(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub x: GridAxis,
    pub y: GridAxis,
    pub values: Vec<f64>,
}

impl Field2D {
    pub fn zeros(x: GridAxis, y: GridAxis) -> Self {
        Self {
            x,
            y,
            values: vec![0.0; x.points * y.points],
        }
    }

    pub fn from_fn(x: GridAxis, y: GridAxis, f: impl Fn(f64, f64) -> f64) -> Self {
        let ys = y.coords();
        let values = x
            .coords()
            .into_iter()
            .flat_map(|xv| ys.iter().map(move |&yv| (xv, yv)).collect::<Vec<_>>())
            .map(|(xv, yv)| f(xv, yv))
            .collect();
        Self { x, y, values }
    }

    pub fn nx(&self) -> usize {
        self.x.points
    }

    pub fn ny(&self) -> usize {
        self.y.points
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.y.points + j]
    }

    pub fn mass(&self) -> f64 {
        field_mass(self)
    }

    /// Largest `|rho(x, y) - rho(-x, -y)|` over the grid. Meaningful on axes
    /// symmetric about zero.
    pub fn point_asymmetry(&self) -> f64 {
        let n = self.values.len();
        (0..n / 2)
            .map(|k| (self.values[k] - self.values[n - 1 - k]).abs())
            .fold(0.0, f64::max)
    }

    /// `n` grid points drawn by systematic resampling: point `k` is the grid
    /// point where the running mass first exceeds `(k + 1/2) / n` of the total,
    /// so each point appears about `n * rho * dA` times. Deterministic.
    pub fn systematic_sample(&self, n: usize) -> Vec<(f64, f64)> {
        let total: f64 = self.values.iter().map(|v| v.max(0.0)).sum();
        let mut points = Vec::with_capacity(n);
        if n == 0 || !(total > 0.0) {
            return points;
        }
        let step = total / n as f64;
        let (mut running, mut k) = (0.0, 0usize);
        for (idx, v) in self.values.iter().enumerate() {
            running += v.max(0.0);
            while k < n && (k as f64 + 0.5) * step < running {
                let (i, j) = (idx / self.ny(), idx % self.ny());
                points.push((self.x.coord(i), self.y.coord(j)));
                k += 1;
            }
        }
        // rounding can leave the last target just above the running total
        while points.len() < n {
            let idx = self.values.iter().rposition(|v| *v > 0.0).unwrap();
            points.push((self.x.coord(idx / self.ny()), self.y.coord(idx % self.ny())));
        }
        points
    }

    /// Relative L2 distance `||self - reference|| / ||reference||` over the
    /// cells at least `margin` points away from the boundary.
    pub fn relative_l2(&self, reference: &Field2D, margin: usize) -> Option<f64> {
        if self.nx() != reference.nx() || self.ny() != reference.ny() {
            return None;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for i in margin..self.nx().saturating_sub(margin) {
            for j in margin..self.ny().saturating_sub(margin) {
                let (a, b) = (self.get(i, j), reference.get(i, j));
                num += (a - b) * (a - b);
                den += b * b;
            }
        }
        (den > 0.0).then(|| (num / den).sqrt())
    }

    /// CSV with header `x,y,rho`, `x` outer.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,y,rho")?;
        let ys = self.y.coords();
        for i in 0..self.nx() {
            let xv = self.x.coord(i);
            for (j, yv) in ys.iter().enumerate() {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", xv, yv, self.get(i, j))?;
            }
        }
        Ok(())
    }
}

/// Trapezoid-rule integral of a 2D field.
pub fn field_mass(field: &Field2D) -> f64 {
    let ny = field.ny();
    let mut total = 0.0;
    for i in 0..field.nx() {
        let wx = field.x.trapezoid_weight(i);
        let row: f64 = (0..ny)
            .map(|j| field.values[i * ny + j] * field.y.trapezoid_weight(j))
            .sum();
        total += wx * row;
    }
    total
}

/// A solver field of either dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum FpField {
    Line(Field1D),
    Plane(Field2D),
}

impl FpField {
    pub fn values(&self) -> &[f64] {
        match self {
            FpField::Line(f) => &f.values,
            FpField::Plane(f) => &f.values,
        }
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        match self {
            FpField::Line(f) => &mut f.values,
            FpField::Plane(f) => &mut f.values,
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            FpField::Line(f) => f.mass(),
            FpField::Plane(f) => f.mass(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        match self {
            FpField::Line(f) => f.write_csv(out),
            FpField::Plane(f) => f.write_csv(out),
        }
    }

    pub fn as_plane(&self) -> Option<&Field2D> {
        match self {
            FpField::Plane(f) => Some(f),
            FpField::Line(_) => None,
        }
    }

    pub fn as_line(&self) -> Option<&Field1D> {
        match self {
            FpField::Line(f) => Some(f),
            FpField::Plane(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn asymmetry_and_l2() {
        let a = GridAxis::new(-1.0, 1.0, 5).unwrap();
        let even = Field2D::from_fn(a, a, |x, y| 1.0 + x * y);
        assert_eq!(even.point_asymmetry(), 0.0);
        let odd = Field2D::from_fn(a, a, |x, y| 1.0 + x + 0.5 * y);
        assert_relative_eq!(odd.point_asymmetry(), 3.0, epsilon = 1e-14);
        let scaled = Field2D::from_fn(a, a, |x, y| 1.1 * (1.0 + x * y));
        assert_relative_eq!(scaled.relative_l2(&even, 0).unwrap(), 0.1, epsilon = 1e-12);
        assert_relative_eq!(scaled.relative_l2(&even, 2).unwrap(), 0.1, epsilon = 1e-12);
        let other = Field2D::zeros(a, GridAxis::new(-1.0, 1.0, 4).unwrap());
        assert!(even.relative_l2(&other, 0).is_none());
    }

    #[test]
    fn systematic_sample_follows_weights() {
        let a = GridAxis::new(0.0, 1.0, 3).unwrap();
        let mut f = Field2D::zeros(a, a);
        f.values[1] = 1.0;
        f.values[4] = 3.0;
        let pts = f.systematic_sample(8);
        assert_eq!(pts.len(), 8);
        assert_eq!(pts.iter().filter(|p| **p == (0.0, 0.5)).count(), 2);
        assert_eq!(pts.iter().filter(|p| **p == (0.5, 0.5)).count(), 6);
        assert!(Field2D::zeros(a, a).systematic_sample(4).is_empty());
    }

    #[test]
    fn unit_square_mass() {
        let a = GridAxis::new(0.0, 1.0, 11).unwrap();
        let f = Field2D::from_fn(a, a, |_, _| 1.0);
        assert_relative_eq!(field_mass(&f), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn symmetric_coordinates() {
        let a = GridAxis::new(-5.0, 5.0, 401).unwrap();
        assert_eq!(a.coord(200), 0.0);
        for i in 0..401 {
            assert_eq!(a.coord(i), -a.coord(400 - i));
        }
    }

    #[test]
    fn node_centered_axis_places_nodes_between_points() {
        let nodes = [-1.5f64.sqrt(), 0.0, 1.5f64.sqrt()];
        let spec = AxisSpec::NodeCentered {
            half_width: 7.0,
            spacing: 0.05,
        };
        let axis = spec.resolve(&nodes).unwrap();
        let h = axis.spacing();
        assert_relative_eq!(
            1.5f64.sqrt() / h,
            (1.5f64.sqrt() / h).round(),
            epsilon = 1e-9
        );
        assert_eq!(axis.points % 2, 0);
        assert!(axis.max <= 7.0 + h);
        for &node in &nodes {
            let nearest = axis
                .coords()
                .into_iter()
                .map(|x| (x - node).abs())
                .fold(f64::INFINITY, f64::min);
            assert_relative_eq!(nearest, 0.5 * h, epsilon = 1e-9);
        }
    }

    #[test]
    fn incommensurate_nodes_rejected() {
        let spec = AxisSpec::NodeCentered {
            half_width: 5.0,
            spacing: 0.05,
        };
        assert!(spec.resolve(&[0.5246476, 1.6506801]).is_err());
    }

    #[test]
    fn csv_headers() {
        let a = GridAxis::new(-1.0, 1.0, 3).unwrap();
        let mut buf = Vec::new();
        Field2D::zeros(a, a).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y,rho\n"));
        assert_eq!(text.lines().count(), 10);
        let mut buf = Vec::new();
        Field1D::zeros(a).write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,rho\n"));
    }
}
