//! Finite-difference assembly of `λ + A` on the strip and `λ + B±` on the rays.
//!
//! Strip rows discretize `-½ u_yy + (c0 y + k z) u_y - y u_z`:
//! the second y-difference is centered; the y-drift is centered where the
//! cell Péclet number `|c0 y + k z| hy` is at most 1 and upwinded otherwise;
//! the transport `-y u_z` is always upwinded (one-sided toward the point the
//! characteristic comes from). Both choices keep the off-diagonals
//! nonpositive. Ray rows discretize `-½ u_yy + (c0 y ± k Y) u_y` along the ray
//! with the same y-stencil. Rows at y = ±L impose `u_L = u_{L∓h}`.
//!
//! Problems can be posed on a window of columns, with Dirichlet data on
//! the side columns; this is what the overlapping Schwarz solver uses.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Junction};
use crate::model::{Functional, Region};
use crate::sparse::{CsrMatrix, Factored};

/// How a plastic ray and its junction end point are closed.
#[derive(Debug, Clone, PartialEq)]
pub enum RayCondition {
    /// The ray operator holds on the ray; its end point is pinned.
    Equation { junction: f64 },
    /// The ray operator holds; the end point equals the strip-side trace.
    Continuous,
    /// Values prescribed on the ray, indexed by grid column (the junction
    /// column gives the end point value).
    Prescribed(Vec<f64>),
}

/// Closure of the two plastic rays.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditionSpec {
    pub plus: RayCondition,
    pub minus: RayCondition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    LocalZero,
    NonlocalContinuity,
    DirichletRay,
    Mixed,
}

impl BoundaryConditionSpec {
    /// `v(0⁺,Y) = 0`, `v(0⁻,-Y) = 0`, ray equations on both rays.
    pub fn local_zero() -> Self {
        Self {
            plus: RayCondition::Equation { junction: 0.0 },
            minus: RayCondition::Equation { junction: 0.0 },
        }
    }

    /// Values continuous across y = 0 on both lines z = ±Y.
    pub fn nonlocal_continuity() -> Self {
        Self {
            plus: RayCondition::Continuous,
            minus: RayCondition::Continuous,
        }
    }

    /// Prescribed data on both rays, given as functions of y.
    pub fn dirichlet_ray(grid: &Grid, plus: impl Fn(f64) -> f64, minus: impl Fn(f64) -> f64) -> Self {
        let i0 = grid.center();
        let ys = grid.ys();
        let plus = (0..grid.ny()).map(|i| if i >= i0 { plus(ys[i]) } else { 0.0 }).collect();
        let minus = (0..grid.ny()).map(|i| if i <= i0 { minus(ys[i]) } else { 0.0 }).collect();
        Self {
            plus: RayCondition::Prescribed(plus),
            minus: RayCondition::Prescribed(minus),
        }
    }

    pub fn kind(&self) -> BcKind {
        use RayCondition::*;
        match (&self.plus, &self.minus) {
            (Equation { junction: a }, Equation { junction: b }) if *a == 0.0 && *b == 0.0 => {
                BcKind::LocalZero
            }
            (Continuous, Continuous) => BcKind::NonlocalContinuity,
            (Prescribed(_), Prescribed(_)) => BcKind::DirichletRay,
            _ => BcKind::Mixed,
        }
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        for c in [&self.plus, &self.minus] {
            if let RayCondition::Prescribed(v) = c {
                if v.len() != grid.ny() {
                    return Err(Error::invalid(
                        "bc",
                        format!("ray data has {} entries for {} columns", v.len(), grid.ny()),
                    ));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("ray data"));
                }
            }
        }
        Ok(())
    }
}

/// Condition on the outer columns of a window.
#[derive(Debug, Clone, PartialEq)]
pub enum SideCondition {
    /// Artificial closure at y = ±L; only valid at the grid edge.
    Closure,
    /// Dirichlet data on the column, indexed by row; ray nodes in the
    /// column follow the ray condition instead.
    Dirichlet(Vec<f64>),
}

/// A contiguous range of columns with its side conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub first: usize,
    pub last: usize,
    pub left: SideCondition,
    pub right: SideCondition,
}

impl Window {
    pub fn full(grid: &Grid) -> Self {
        Self {
            first: 0,
            last: grid.ny() - 1,
            left: SideCondition::Closure,
            right: SideCondition::Closure,
        }
    }

    fn is_full(&self, grid: &Grid) -> bool {
        self.first == 0
            && self.last == grid.ny() - 1
            && self.left == SideCondition::Closure
            && self.right == SideCondition::Closure
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        if self.first >= self.last || self.last >= grid.ny() {
            return Err(Error::invalid(
                "window",
                format!("columns {}..={} on {} columns", self.first, self.last, grid.ny()),
            ));
        }
        for (side, col, edge) in [(&self.left, self.first, 0), (&self.right, self.last, grid.ny() - 1)] {
            match side {
                SideCondition::Closure if col != edge => {
                    return Err(Error::invalid("window", "closure away from the grid edge"))
                }
                SideCondition::Dirichlet(v) if v.len() != grid.nz() => {
                    return Err(Error::invalid("window", "segment data length differs from Nz"))
                }
                SideCondition::Dirichlet(v) if v.iter().any(|x| !x.is_finite()) => {
                    return Err(Error::NonFinite("segment data"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// One linear problem: operator, right-hand side, and the grid unknowns
/// the local rows stand for.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Local row -> grid unknown.
    pub unknowns: Vec<usize>,
    pub grid: Arc<Grid>,
}

impl LinearSystem {
    /// Scatters a local solution vector onto the grid (zeros elsewhere).
    pub fn to_field(&self, local: &[f64], label: &str) -> Result<Field> {
        let mut values = vec![0.0; self.grid.len()];
        for (k, &idx) in self.unknowns.iter().enumerate() {
            values[idx] = local[k];
        }
        Field::new(self.grid.clone(), values, label)
    }

    /// Local right-hand side for a new source and the same boundary data.
    pub fn with_rhs(&self, rhs: Vec<f64>) -> Self {
        Self {
            matrix: self.matrix.clone(),
            rhs,
            unknowns: self.unknowns.clone(),
            grid: self.grid.clone(),
        }
    }
}

/// A full problem statement.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub lambda: f64,
    pub bc: &'a BoundaryConditionSpec,
    pub window: &'a Window,
    /// Right-hand side per grid unknown (read on equation rows only).
    pub source: &'a [f64],
}

/// Coefficients of `-½ D_yy + b D_y` at a node with y-neighbors present on
/// the requested sides. Returns (diagonal, coefficient toward -y, toward +y).
fn y_stencil(hy: f64, b: f64) -> (f64, f64, f64) {
    let diff = 0.5 / (hy * hy);
    if b.abs() * hy <= 1.0 {
        let c = b / (2.0 * hy);
        (2.0 * diff, -diff - c, -diff + c)
    } else if b > 0.0 {
        (2.0 * diff + b / hy, -diff - b / hy, -diff)
    } else {
        (2.0 * diff - b / hy, -diff, -diff + b / hy)
    }
}

fn closure_row(hy: f64, me: usize, nb: usize) -> Vec<(usize, f64)> {
    let c = 0.5 / (hy * hy);
    vec![(me, c), (nb, -c)]
}

/// Row of `λ + B±` at ray node `idx`, in grid indices.
pub(crate) fn ray_row(grid: &Grid, lambda: f64, idx: usize) -> Vec<(usize, f64)> {
    let n = grid.node(idx);
    let p = grid.params();
    let zr = if n.region == Region::PlusRay {
        p.y_bound()
    } else {
        -p.y_bound()
    };
    let b = p.c0() * n.y + p.k() * zr;
    let (lo, hi) = (grid.y_neighbor(idx, -1), grid.y_neighbor(idx, 1));
    match (lo, hi) {
        (Some(l), Some(h)) => {
            let (d, cl, ch) = y_stencil(grid.hy(), b);
            vec![(idx, lambda + d), (l, cl), (h, ch)]
        }
        (Some(nb), None) | (None, Some(nb)) => closure_row(grid.hy(), idx, nb),
        (None, None) => unreachable!("ray node without neighbors"),
    }
}

/// Row of `λ + A` at strip node `idx`, in grid indices.
pub(crate) fn strip_row(grid: &Grid, lambda: f64, idx: usize) -> Vec<(usize, f64)> {
    let n = *grid.node(idx);
    let p = grid.params();
    let (lo, hi) = (grid.y_neighbor(idx, -1), grid.y_neighbor(idx, 1));
    let (l, h) = match (lo, hi) {
        (Some(l), Some(h)) => (l, h),
        (Some(nb), None) | (None, Some(nb)) => return closure_row(grid.hy(), idx, nb),
        (None, None) => unreachable!("strip node without neighbors"),
    };
    let b = p.c0() * n.y + p.k() * n.z;
    let (d, cl, ch) = y_stencil(grid.hy(), b);
    let mut row = vec![(idx, lambda + d), (l, cl), (h, ch)];
    let t = n.y / grid.hz();
    if n.y > 0.0 {
        row[0].1 += t;
        row.push((grid.index(n.i, n.j + 1), -t));
    } else if n.y < 0.0 {
        row[0].1 -= t;
        row.push((grid.index(n.i, n.j - 1), t));
    }
    row
}

fn ray_of(grid: &Grid, idx: usize) -> Option<bool> {
    match grid.node(idx).region {
        Region::PlusRay => Some(true),
        Region::MinusRay => Some(false),
        Region::Interior => None,
    }
}

/// Assembles one problem on its window.
pub fn assemble(grid: &Arc<Grid>, problem: &Problem<'_>) -> Result<LinearSystem> {
    let Problem {
        lambda,
        bc,
        window,
        source,
    } = *problem;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("lambda", format!("must be >= 0, got {lambda}")));
    }
    if source.len() != grid.len() {
        return Err(Error::invalid("source", "length differs from the grid"));
    }
    bc.validate(grid)?;
    window.validate(grid)?;
    let full = window.is_full(grid);
    if !full
        && !matches!(
            (&bc.plus, &bc.minus),
            (RayCondition::Prescribed(_), RayCondition::Prescribed(_))
        )
    {
        return Err(Error::invalid("bc", "windowed problems need prescribed rays"));
    }

    let mut local = vec![usize::MAX; grid.len()];
    let mut unknowns = Vec::new();
    for (idx, n) in grid.nodes().iter().enumerate() {
        if n.i >= window.first && n.i <= window.last {
            local[idx] = unknowns.len();
            unknowns.push(idx);
        }
    }

    let mut rows = Vec::with_capacity(unknowns.len());
    let mut rhs = Vec::with_capacity(unknowns.len());
    for &idx in &unknowns {
        let n = *grid.node(idx);
        let (row, value) = if let Some(plus) = ray_of(grid, idx) {
            let cond = if plus { &bc.plus } else { &bc.minus };
            let end = if plus { Junction::TopRay } else { Junction::BottomRay };
            let inner = if plus {
                Junction::TopInner
            } else {
                Junction::BottomInner
            };
            let is_end = idx == grid.junction(end);
            match cond {
                RayCondition::Prescribed(v) => (vec![(idx, 1.0)], v[n.i]),
                RayCondition::Equation { junction } if is_end => (vec![(idx, 1.0)], *junction),
                RayCondition::Continuous if is_end => {
                    (vec![(idx, 1.0), (grid.junction(inner), -1.0)], 0.0)
                }
                _ => (ray_row(grid, lambda, idx), source[idx]),
            }
        } else {
            let side = if n.i == window.first {
                Some(&window.left)
            } else if n.i == window.last {
                Some(&window.right)
            } else {
                None
            };
            match side {
                Some(SideCondition::Dirichlet(v)) => (vec![(idx, 1.0)], v[n.j]),
                _ => (strip_row(grid, lambda, idx), source[idx]),
            }
        };
        let mapped = row
            .into_iter()
            .map(|(c, v)| {
                let lc = local[c];
                debug_assert!(lc != usize::MAX, "stencil leaves the window");
                (lc, v)
            })
            .collect();
        rows.push(mapped);
        rhs.push(value);
    }
    Ok(LinearSystem {
        matrix: CsrMatrix::from_rows(rows),
        rhs,
        unknowns,
        grid: grid.clone(),
    })
}

/// Samples `f` at every unknown, with zeros on the edge columns y = ±L so
/// the closure rows there stay homogeneous.
pub fn source_from(grid: &Grid, f: &Functional) -> Vec<f64> {
    let last = grid.ny() - 1;
    grid.nodes()
        .iter()
        .map(|n| {
            if n.i == 0 || n.i == last {
                0.0
            } else {
                f.eval(n.y, n.z, n.region)
            }
        })
        .collect()
}

/// `λ + A` on the whole strip with ray closure `bc` and right-hand side `f`.
pub fn assemble_generator(
    grid: &Arc<Grid>,
    lambda: f64,
    bc: &BoundaryConditionSpec,
    f: &Functional,
) -> Result<LinearSystem> {
    let source = source_from(grid, f);
    assemble(
        grid,
        &Problem {
            lambda,
            bc,
            window: &Window::full(grid),
            source: &source,
        },
    )
}

/// Solves to relative residual `tol` (`|Ax - b|_inf / max(1, |b|_inf)`).
pub fn solve_linear(system: &LinearSystem, tol: f64) -> Result<Field> {
    let fac = Factored::new(system.matrix.clone())?;
    let x = fac.solve(&system.rhs, tol)?;
    system.to_field(&x, "solution")
}

/// A factored system whose right-hand side can be swapped.
pub struct FactoredSystem {
    template: LinearSystem,
    fac: Factored,
}

impl FactoredSystem {
    pub fn new(system: LinearSystem) -> Result<Self> {
        let fac = Factored::new(system.matrix.clone())?;
        Ok(Self {
            template: system,
            fac,
        })
    }

    pub fn system(&self) -> &LinearSystem {
        &self.template
    }

    /// Solves with a local right-hand side.
    pub fn solve_local(&self, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        self.fac.solve(rhs, tol)
    }

    pub fn solve(&self, tol: f64, label: &str) -> Result<Field> {
        let x = self.fac.solve(&self.template.rhs, tol)?;
        self.template.to_field(&x, label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridConfig;
    use crate::model::{catalogue, OscillatorParams};

    fn grid(ny: usize, nz: usize) -> Arc<Grid> {
        let p = OscillatorParams::default();
        Arc::new(
            Grid::new(
                &p,
                &GridConfig {
                    half_width: 6.0,
                    ny,
                    nz,
                    tol: 1e-10,
                },
            )
            .unwrap(),
        )
    }

    fn assert_m_matrix(sys: &LinearSystem) {
        for r in 0..sys.matrix.n() {
            assert!(sys.matrix.row_nnz(r) <= 6);
            for (c, v) in sys.matrix.row(r) {
                if c == r {
                    assert!(v > 0.0, "row {r}: diagonal {v}");
                } else {
                    assert!(v <= 0.0, "row {r}: off-diagonal {v} at {c}");
                }
            }
        }
    }

    #[test]
    fn sign_pattern_for_every_bc() {
        let g = grid(41, 21);
        let f = Functional::one();
        for lambda in [0.0, 0.5, 3.0] {
            for bc in [
                BoundaryConditionSpec::local_zero(),
                BoundaryConditionSpec::nonlocal_continuity(),
                BoundaryConditionSpec::dirichlet_ray(&g, |_| 1.0, |_| 0.0),
            ] {
                let sys = assemble_generator(&g, lambda, &bc, &f).unwrap();
                assert_m_matrix(&sys);
            }
        }
    }

    #[test]
    fn upwinding_kicks_in_at_high_peclet() {
        let (d, cl, ch) = y_stencil(0.5, 5.0);
        assert!(cl < 0.0 && ch <= 0.0 && d > 0.0);
        assert!((d + cl + ch).abs() < 1e-12);
        let (d, cl, ch) = y_stencil(0.05, -3.0);
        assert!((d + cl + ch).abs() < 1e-12);
        assert!(cl < 0.0 && ch < 0.0);
    }

    #[test]
    fn generator_rows_annihilate_constants() {
        let g = grid(41, 21);
        let sys = assemble_generator(&g, 0.0, &BoundaryConditionSpec::nonlocal_continuity(), &Functional::one())
            .unwrap();
        let ones = vec![1.0; sys.matrix.n()];
        for v in sys.matrix.mul_vec(&ones) {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn homogeneous_problem_has_zero_solution() {
        let g = grid(41, 21);
        let zero = Functional::constant(0.0);
        let sys = assemble_generator(&g, 0.0, &BoundaryConditionSpec::local_zero(), &zero).unwrap();
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
        let u = solve_linear(&sys, 1e-10).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
    }

    #[test]
    fn discrete_maximum_principle() {
        let g = grid(41, 21);
        let zero = Functional::constant(0.0);
        let bc = BoundaryConditionSpec::dirichlet_ray(&g, |y| (y * 0.7).sin().abs(), |y| 0.5 + 0.4 * (y * 1.3).cos());
        let u = solve_linear(&assemble_generator(&g, 0.0, &bc, &zero).unwrap(), 1e-10).unwrap();
        for &v in u.values() {
            assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn pi_plus_is_one_on_its_ray() {
        let g = grid(41, 21);
        let bc = BoundaryConditionSpec::dirichlet_ray(&g, |_| 1.0, |_| 0.0);
        let u = solve_linear(&assemble_generator(&g, 0.0, &bc, &Functional::constant(0.0)).unwrap(), 1e-10)
            .unwrap();
        for (idx, n) in g.nodes().iter().enumerate() {
            if n.region == Region::PlusRay {
                assert_eq!(u.values()[idx], 1.0);
            }
            if n.region == Region::MinusRay {
                assert_eq!(u.values()[idx], 0.0);
            }
        }
    }

    #[test]
    fn symmetric_assembly_gives_symmetric_solution() {
        let g = grid(41, 21);
        let f = catalogue("y2", g.params(), 6.0).unwrap();
        let u = solve_linear(&assemble_generator(&g, 0.0, &BoundaryConditionSpec::local_zero(), &f).unwrap(), 1e-10)
            .unwrap();
        assert!(u.mirror_defect(1.0) < 1e-11);
        let a = u.junction(Junction::TopInner);
        let b = u.junction(Junction::BottomInner);
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn window_validation() {
        let g = grid(21, 9);
        let bc = BoundaryConditionSpec::local_zero();
        let src = vec![0.0; g.len()];
        let w = Window {
            first: 2,
            last: 18,
            left: SideCondition::Dirichlet(vec![0.0; 9]),
            right: SideCondition::Closure,
        };
        let p = Problem {
            lambda: 0.0,
            bc: &bc,
            window: &w,
            source: &src,
        };
        assert!(assemble(&g, &p).is_err());
        let bad_lambda = Problem {
            lambda: -1.0,
            bc: &bc,
            window: &Window::full(&g),
            source: &src,
        };
        assert!(assemble(&g, &bad_lambda).is_err());
    }
}
