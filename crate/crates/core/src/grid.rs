//! Truncated strip discretization and grid fields.
//!
//! Nodes sit at `y_i = L (2i - (Ny-1)) / (Ny-1)` and
//! `z_j = Y (2j - (Nz-1)) / (Nz-1)`, so the mesh is exactly symmetric under
//! (y, z) -> (-y, -z) in floating point. On the line z = Y the nodes with
//! y > 0 belong to the plastic ray; the nodes with y < 0 are inflow nodes
//! of the strip. The mirror convention holds on z = -Y.
//!
//! The two junction points (0, ±Y) carry two unknowns each: the trace seen
//! from the strip and the end point of the ray. Unknowns are numbered
//! column by column (y outer, z inner) so the assembled operators are
//! banded with half-bandwidth about `Nz`.

use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Functional, OscillatorParams, Region, Symmetry};

/// User-facing grid settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Velocity truncation half-width `L`.
    pub half_width: f64,
    pub ny: usize,
    pub nz: usize,
    /// Relative residual target for linear solves.
    pub tol: f64,
}

impl GridConfig {
    /// `L = 6 sqrt(2) sigma_y` (L = 6 at c0 = 1), 241 x 161 nodes.
    pub fn default_for(params: &OscillatorParams) -> Self {
        Self {
            half_width: 6.0 * std::f64::consts::SQRT_2 * params.velocity_scale(),
            ny: 241,
            nz: 161,
            tol: 1e-10,
        }
    }
}

/// The four one-sided junction values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Junction {
    /// `(0⁻, Y)`: strip-side trace at the top junction.
    TopInner,
    /// `(0⁺, Y)`: end point of the plus ray.
    TopRay,
    /// `(0⁺, -Y)`: strip-side trace at the bottom junction.
    BottomInner,
    /// `(0⁻, -Y)`: end point of the minus ray.
    BottomRay,
}

impl Junction {
    pub const ALL: [Junction; 4] = [
        Junction::TopInner,
        Junction::TopRay,
        Junction::BottomInner,
        Junction::BottomRay,
    ];

    pub fn reflect(self) -> Self {
        match self {
            Junction::TopInner => Junction::BottomInner,
            Junction::TopRay => Junction::BottomRay,
            Junction::BottomInner => Junction::TopInner,
            Junction::BottomRay => Junction::TopRay,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Junction::TopInner => "(0-,Y)",
            Junction::TopRay => "(0+,Y)",
            Junction::BottomInner => "(0+,-Y)",
            Junction::BottomRay => "(0-,-Y)",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Junction::ALL
            .into_iter()
            .find(|j| j.label() == s)
            .ok_or_else(|| Error::UnknownLocation(s.to_string()))
    }
}

/// Geometry of one unknown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    /// Column (y index).
    pub i: usize,
    /// Row (z index).
    pub j: usize,
    pub y: f64,
    pub z: f64,
    pub region: Region,
}

#[derive(Debug)]
pub struct Grid {
    params: OscillatorParams,
    config: GridConfig,
    hy: f64,
    hz: f64,
    ys: Vec<f64>,
    zs: Vec<f64>,
    nodes: Vec<Node>,
}

/// Rejects even `Ny`, tiny `Nz` and truncations `L <= 3 sigma_y`.
pub fn build_grid(params: &OscillatorParams, config: &GridConfig) -> Result<Arc<Grid>> {
    Grid::new(params, config).map(Arc::new)
}

impl Grid {
    pub fn new(params: &OscillatorParams, config: &GridConfig) -> Result<Self> {
        let GridConfig {
            half_width: l,
            ny,
            nz,
            tol,
        } = *config;
        if ny < 3 || ny % 2 == 0 {
            return Err(Error::invalid("Ny", format!("must be odd and >= 3, got {ny}")));
        }
        if nz < 3 {
            return Err(Error::invalid("Nz", format!("must be >= 3, got {nz}")));
        }
        let sigma = params.velocity_scale();
        if !(l.is_finite() && l > 3.0 * sigma) {
            return Err(Error::invalid(
                "L",
                format!("must exceed 3 sigma_y = {:.4}, got {l}", 3.0 * sigma),
            ));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::invalid("tol", format!("must be > 0, got {tol}")));
        }
        let yb = params.y_bound();
        let (my, mz) = ((ny - 1) as f64, (nz - 1) as f64);
        let ys: Vec<f64> = (0..ny).map(|i| l * (2.0 * i as f64 - my) / my).collect();
        let mut zs: Vec<f64> = (0..nz).map(|j| yb * (2.0 * j as f64 - mz) / mz).collect();
        zs[0] = -yb;
        zs[nz - 1] = yb;

        let i0 = (ny - 1) / 2;
        let mut nodes = Vec::with_capacity(ny * nz + 2);
        for (i, &y) in ys.iter().enumerate() {
            if i == i0 {
                nodes.push(Node {
                    i,
                    j: 0,
                    y,
                    z: -yb,
                    region: Region::MinusRay,
                });
            }
            for (j, &z) in zs.iter().enumerate() {
                let region = if j == nz - 1 && i > i0 {
                    Region::PlusRay
                } else if j == 0 && i < i0 {
                    Region::MinusRay
                } else {
                    Region::Interior
                };
                nodes.push(Node { i, j, y, z, region });
            }
            if i == i0 {
                nodes.push(Node {
                    i,
                    j: nz - 1,
                    y,
                    z: yb,
                    region: Region::PlusRay,
                });
            }
        }
        Ok(Self {
            params: *params,
            config: *config,
            hy: 2.0 * l / my,
            hz: 2.0 * yb / mz,
            ys,
            zs,
            nodes,
        })
    }

    pub fn params(&self) -> &OscillatorParams {
        &self.params
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn half_width(&self) -> f64 {
        self.config.half_width
    }

    pub fn ny(&self) -> usize {
        self.config.ny
    }

    pub fn nz(&self) -> usize {
        self.config.nz
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn hz(&self) -> f64 {
        self.hz
    }

    pub fn tol(&self) -> f64 {
        self.config.tol
    }

    /// Column index of y = 0.
    pub fn center(&self) -> usize {
        (self.config.ny - 1) / 2
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn zs(&self) -> &[f64] {
        &self.zs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    fn column_offset(&self, i: usize) -> usize {
        let base = i * self.config.nz;
        if i > self.center() {
            base + 2
        } else {
            base
        }
    }

    /// Unknown at column `i`, row `j`. At the junction column the strip-side
    /// unknowns are returned for `j = 0` and `j = Nz-1`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.config.ny && j < self.config.nz);
        let extra = usize::from(i == self.center());
        self.column_offset(i) + extra + j
    }

    pub fn junction(&self, which: Junction) -> usize {
        let (i0, nz) = (self.center(), self.config.nz);
        match which {
            Junction::TopInner => self.index(i0, nz - 1),
            Junction::TopRay => self.column_offset(i0) + nz + 1,
            Junction::BottomInner => self.index(i0, 0),
            Junction::BottomRay => self.column_offset(i0),
        }
    }

    /// Unknown on the same line as `idx`, one column to the side
    /// (`side = -1` or `+1`). Crossing the junction column lands on the
    /// ray end point only when coming from the ray.
    pub fn y_neighbor(&self, idx: usize, side: isize) -> Option<usize> {
        let n = &self.nodes[idx];
        let i = n.i as isize + side;
        if i < 0 || i >= self.config.ny as isize {
            return None;
        }
        let i = i as usize;
        let i0 = self.center();
        if i == i0 && n.i != i0 {
            if n.region == Region::PlusRay {
                return Some(self.junction(Junction::TopRay));
            }
            if n.region == Region::MinusRay {
                return Some(self.junction(Junction::BottomRay));
            }
        }
        if n.i == i0 && n.region != Region::Interior {
            // Ray end points continue along their ray.
            return if (n.region == Region::PlusRay) == (side > 0) {
                Some(self.index(i, n.j))
            } else {
                None
            };
        }
        Some(self.index(i, n.j))
    }

    /// Index of the mirror image under (y, z) -> (-y, -z).
    pub fn mirror(&self, idx: usize) -> usize {
        let n = &self.nodes[idx];
        let (ny, nz) = (self.config.ny, self.config.nz);
        if n.i == self.center() && n.region != Region::Interior {
            return if n.region == Region::PlusRay {
                self.junction(Junction::BottomRay)
            } else {
                self.junction(Junction::TopRay)
            };
        }
        self.index(ny - 1 - n.i, nz - 1 - n.j)
    }

    pub fn is_ray(&self, idx: usize) -> bool {
        self.nodes[idx].region != Region::Interior
    }

    /// Nearest column to velocity `y`.
    pub fn column_near(&self, y: f64) -> usize {
        let i = ((y + self.half_width()) / self.hy).round();
        i.clamp(0.0, (self.config.ny - 1) as f64) as usize
    }

    /// Nearest row to elastic component `z`.
    pub fn row_near(&self, z: f64) -> usize {
        let j = ((z + self.params.y_bound()) / self.hz).round();
        j.clamp(0.0, (self.config.nz - 1) as f64) as usize
    }

    /// Samples a functional at every unknown.
    pub fn sample(&self, f: &Functional) -> Vec<f64> {
        self.nodes.iter().map(|n| f.eval(n.y, n.z, n.region)).collect()
    }

    /// Checks the declared bound and symmetry tag of `f` on the nodes.
    pub fn verify_functional(&self, f: &Functional) -> Result<()> {
        let vals = self.sample(f);
        for (idx, v) in vals.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite("functional sample"));
            }
            if v.abs() > f.bound() * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::invalid(
                    "functional",
                    format!("|{}| = {} exceeds declared bound {}", f.name(), v.abs(), f.bound()),
                ));
            }
            let m = vals[self.mirror(idx)];
            let defect = match f.symmetry() {
                Symmetry::Symmetric => (v - m).abs(),
                Symmetry::Antisymmetric => (v + m).abs(),
                Symmetry::General => 0.0,
            };
            if defect > 1e-12 * v.abs().max(1.0) {
                return Err(Error::invalid(
                    "functional",
                    format!("{} is not {:?} on the grid", f.name(), f.symmetry()),
                ));
            }
        }
        Ok(())
    }
}

/// A grid function: one value per unknown.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
    label: String,
}

/// Addressable traces of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceLocation {
    Junction(Junction),
    /// Values along z = Y for y >= 0, end point first.
    PlusRay,
    /// Values along z = -Y for y <= 0, end point first.
    MinusRay,
    /// All rows of the column nearest to the given velocity.
    Segment(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(
                "field",
                format!("{} values for {} unknowns", values.len(), grid.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field"));
        }
        Ok(Self {
            grid,
            values,
            label: label.into(),
        })
    }

    pub fn zeros(grid: Arc<Grid>, label: impl Into<String>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
            label: label.into(),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Stored one-sided junction value; no extrapolation.
    pub fn junction(&self, which: Junction) -> f64 {
        self.values[self.grid.junction(which)]
    }

    pub fn trace(&self, location: TraceLocation) -> Result<Trace> {
        let g = &self.grid;
        let (i0, nz) = (g.center(), g.nz());
        Ok(match location {
            TraceLocation::Junction(j) => Trace::Scalar(self.junction(j)),
            TraceLocation::PlusRay => {
                let mut v = vec![self.junction(Junction::TopRay)];
                v.extend((i0 + 1..g.ny()).map(|i| self.at(i, nz - 1)));
                Trace::Vector(v)
            }
            TraceLocation::MinusRay => {
                let mut v = vec![self.junction(Junction::BottomRay)];
                v.extend((0..i0).rev().map(|i| self.at(i, 0)));
                Trace::Vector(v)
            }
            TraceLocation::Segment(y) => {
                if !(y.is_finite() && y.abs() <= g.half_width()) {
                    return Err(Error::UnknownLocation(format!("segment y = {y}")));
                }
                let i = g.column_near(y);
                Trace::Vector((0..nz).map(|j| self.at(i, j)).collect())
            }
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `a self + b other`, nodewise.
    pub fn combine(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.ensure_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Field::new(self.grid.clone(), values, self.label.clone())
    }

    /// Sup of |self - other| over all unknowns.
    pub fn max_diff(&self, other: &Field) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Sup of |v(x) - parity v(-x)|; `parity = 1` tests symmetry,
    /// `parity = -1` antisymmetry.
    pub fn mirror_defect(&self, parity: f64) -> f64 {
        (0..self.values.len()).fold(0.0, |m, idx| {
            let r = self.values[self.grid.mirror(idx)];
            m.max((self.values[idx] - parity * r).abs())
        })
    }

    /// Writes `y,z,region,value` rows, one per unknown, in index order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "y,z,region,value")?;
        for (n, v) in self.grid.nodes.iter().zip(&self.values) {
            writeln!(w, "{:.17e},{:.17e},{},{:.17e}", n.y, n.z, n.region, v)?;
        }
        Ok(())
    }
}
