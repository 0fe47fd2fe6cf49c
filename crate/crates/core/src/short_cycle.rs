//! Short cycles: the local-boundary problem `(λ + A) v = f`, `(λ + B±) v = f`
//! on the rays, `v(0⁺, Y) = v(0⁻, -Y) = 0`, and its splitting
//! `v = v_e + v⁺ + v⁻` into an elastic part with zero ray data and two
//! harmonic parts carrying the ray profiles φ±.

use std::sync::Arc;

use crate::assembly::{assemble_generator, ray_row, strip_row, BoundaryConditionSpec, FactoredSystem};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Junction};
use crate::model::{Functional, Region};
use crate::quadrature::{phi_junction_derivatives, phi_ray, RaySign};
use crate::schwarz::{solve_dirichlet_by_schwarz, solve_ve, GammaIterationReport, SchwarzConfig};
use crate::sparse::{CsrMatrix, Factored};

/// φ± sampled on the grid columns of its ray (zero elsewhere).
#[derive(Debug, Clone)]
pub struct RayProfile {
    sign: RaySign,
    grid: Arc<Grid>,
    values: Vec<f64>,
}

fn ray_columns(grid: &Grid, sign: RaySign) -> Vec<usize> {
    let i0 = grid.center();
    match sign {
        RaySign::Plus => (i0..grid.ny()).collect(),
        RaySign::Minus => (0..=i0).rev().collect(),
    }
}

fn ray_node(grid: &Grid, sign: RaySign, i: usize) -> usize {
    match sign {
        RaySign::Plus if i == grid.center() => grid.junction(Junction::TopRay),
        RaySign::Minus if i == grid.center() => grid.junction(Junction::BottomRay),
        RaySign::Plus => grid.index(i, grid.nz() - 1),
        RaySign::Minus => grid.index(i, 0),
    }
}

impl RayProfile {
    /// Solves the discrete ray equation `(λ + B±) φ = f` with `φ(0) = 0`,
    /// using exactly the ray rows of the strip assembly.
    pub fn discrete(grid: &Arc<Grid>, f: &Functional, sign: RaySign, lambda: f64) -> Result<Self> {
        let cols = ray_columns(grid, sign);
        let nodes: Vec<usize> = cols.iter().map(|&i| ray_node(grid, sign, i)).collect();
        let mut local = vec![usize::MAX; grid.len()];
        for (k, &idx) in nodes.iter().enumerate() {
            local[idx] = k;
        }
        let mut rows = Vec::with_capacity(nodes.len());
        let mut rhs = Vec::with_capacity(nodes.len());
        for (k, &idx) in nodes.iter().enumerate() {
            if k == 0 {
                rows.push(vec![(0, 1.0)]);
                rhs.push(0.0);
                continue;
            }
            let n = grid.node(idx);
            rows.push(ray_row(grid, lambda, idx).into_iter().map(|(c, v)| (local[c], v)).collect());
            // The last node carries the homogeneous closure.
            rhs.push(if k + 1 == nodes.len() { 0.0 } else { f.eval(n.y, n.z, n.region) });
        }
        let x = Factored::new(CsrMatrix::from_rows(rows))?.solve(&rhs, grid.tol())?;
        let mut values = vec![0.0; grid.ny()];
        for (k, &i) in cols.iter().enumerate() {
            values[i] = x[k];
        }
        Ok(Self {
            sign,
            grid: grid.clone(),
            values,
        })
    }

    /// Samples the quadrature formula at the ray columns.
    pub fn quadrature(grid: &Arc<Grid>, f: &Functional, sign: RaySign) -> Result<Self> {
        let mut values = vec![0.0; grid.ny()];
        for i in ray_columns(grid, sign) {
            values[i] = phi_ray(grid.params(), f, sign, grid.ys()[i])?;
        }
        Ok(Self {
            sign,
            grid: grid.clone(),
            values,
        })
    }

    pub fn sign(&self) -> RaySign {
        self.sign
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Values by grid column; zero off the ray.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values along the ray, end point first, with their velocities.
    pub fn along_ray(&self) -> Vec<(f64, f64)> {
        ray_columns(&self.grid, self.sign)
            .into_iter()
            .map(|i| (self.grid.ys()[i], self.values[i]))
            .collect()
    }
}

/// The factored local-zero operator `λ + A`, reusable across right-hand sides.
pub struct ShortCycleSolver {
    grid: Arc<Grid>,
    lambda: f64,
    fac: FactoredSystem,
}

impl ShortCycleSolver {
    pub fn new(grid: &Arc<Grid>, lambda: f64) -> Result<Self> {
        let sys = assemble_generator(grid, lambda, &BoundaryConditionSpec::local_zero(), &Functional::one())?;
        Ok(Self {
            grid: grid.clone(),
            lambda,
            fac: FactoredSystem::new(sys)?,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn solve(&self, f: &Functional) -> Result<Field> {
        let sys = assemble_generator(&self.grid, self.lambda, &BoundaryConditionSpec::local_zero(), f)?;
        let x = self.fac.solve_local(&sys.rhs, self.grid.tol())?;
        sys.to_field(&x, &format!("v[{}]", f.name()))
    }
}

/// Monolithic short cycle `v_λ(·; f)`; `λ = 0` gives the cycle itself.
pub fn solve_short_cycle(f: &Functional, lambda: f64, grid: &Arc<Grid>) -> Result<Field> {
    ShortCycleSolver::new(grid, lambda)?.solve(f)
}

/// C² continuation of a ray profile past the junction,
/// `(a s + b s²/2) exp(-(s/δ)²)`, matching value, slope and curvature at 0.
fn extension(a: f64, b: f64, delta: f64, y: f64) -> f64 {
    (a * y + 0.5 * b * y * y) * (-(y / delta).powi(2)).exp()
}

/// Harmonic part `v±`: `A v = 0` in the strip, `v = φ±` on its own ray,
/// `v = 0` on the other one.
///
/// Writes `v = w + Φ` with Φ the profile continued across y = 0 and
/// independent of z, solves `A w = -A Φ` with the shifted ray data by the
/// overlapping iteration, and adds Φ back.
pub fn solve_v_ray(
    f: &Functional,
    sign: RaySign,
    grid: &Arc<Grid>,
    cfg: &SchwarzConfig,
) -> Result<(Field, GammaIterationReport)> {
    let profile = RayProfile::discrete(grid, f, sign, 0.0)?;
    let (a, b) = phi_junction_derivatives(grid.params(), f, sign)?;
    let delta = grid.params().velocity_scale();
    let i0 = grid.center();
    let ys = grid.ys();
    let on_side = |i: usize| match sign {
        RaySign::Plus => i >= i0,
        RaySign::Minus => i <= i0,
    };
    let phi_col: Vec<f64> = (0..grid.ny())
        .map(|i| {
            if on_side(i) {
                profile.values()[i]
            } else {
                extension(a, b, delta, ys[i])
            }
        })
        .collect();
    let phi: Vec<f64> = grid.nodes().iter().map(|n| phi_col[n.i]).collect();
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ray profile continuation"));
    }

    let mut g = vec![0.0; grid.len()];
    for (idx, n) in grid.nodes().iter().enumerate() {
        if n.region == Region::Interior {
            g[idx] = -strip_row(grid, 0.0, idx).iter().map(|&(c, v)| v * phi[c]).sum::<f64>();
        }
    }
    // w = 0 on the profile's ray, w = -Φ on the opposite one.
    let own = vec![0.0; grid.ny()];
    let other: Vec<f64> = (0..grid.ny())
        .map(|i| if on_side(i) && i != i0 { 0.0 } else { -phi_col[i] })
        .collect();
    let (plus, minus) = match sign {
        RaySign::Plus => (own, other),
        RaySign::Minus => (other, own),
    };
    let (w, report) = solve_dirichlet_by_schwarz(grid, &g, plus, minus, cfg)?;
    let values = w.values().iter().zip(&phi).map(|(w, p)| w + p).collect();
    let label = match sign {
        RaySign::Plus => "v_plus",
        RaySign::Minus => "v_minus",
    };
    Ok((Field::new(grid.clone(), values, label)?, report))
}

/// `v = v_e + v⁺ + v⁻` with the three iteration reports.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub v_e: Field,
    pub v_plus: Field,
    pub v_minus: Field,
    pub total: Field,
    pub reports: [GammaIterationReport; 3],
}

pub fn decompose(f: &Functional, grid: &Arc<Grid>, cfg: &SchwarzConfig) -> Result<Decomposition> {
    let (v_e, r_e) = solve_ve(f, grid, cfg)?;
    let (v_plus, r_p) = solve_v_ray(f, RaySign::Plus, grid, cfg)?;
    let (v_minus, r_m) = solve_v_ray(f, RaySign::Minus, grid, cfg)?;
    let total = v_e.combine(1.0, &v_plus, 1.0)?.combine(1.0, &v_minus, 1.0)?.with_label("v");
    Ok(Decomposition {
        v_e,
        v_plus,
        v_minus,
        total,
        reports: [r_e, r_p, r_m],
    })
}
