//! Invariant measure and correctors from short cycles.
//!
//! With `v(·; f)` the short cycle,
//!
//! ```text
//! ν(f) = (v(0⁻, Y; f) + v(0⁺, -Y; f)) / (2 v(0⁻, Y; 1)),
//! u    = v(f) - ν(f) v(1) + (π⁺ - π⁻) / (4 π⁻(0⁻, Y)) · (v(0⁻, Y; f) - v(0⁺, -Y; f)),
//! ```
//!
//! and the resolvent `u_λ` with continuity across y = 0 on z = ±Y is both
//! solved directly and rebuilt from `v_λ` and `π_λ±` (symmetric and
//! antisymmetric parts separately).

use std::sync::Arc;

use serde::Serialize;

use crate::assembly::{
    assemble, assemble_generator, source_from, strip_row, BoundaryConditionSpec, FactoredSystem, Problem,
    RayCondition, Window,
};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Junction};
use crate::model::{symmetrize, Functional, OscillatorParams, Region};
use crate::quadrature::RaySign;
use crate::short_cycle::ShortCycleSolver;

/// Relative tolerance of the runtime check v(0⁻,Y;1) = v(0⁺,-Y;1).
const MIRROR_TOL: f64 = 1e-10;

/// π± (λ = 0) or π_λ± (λ > 0).
///
/// For λ = 0 the own ray carries 1 and the other 0. For λ > 0 the own ray
/// carries the equation `(λ + B±) π = 0` with `π = 1` at its end point, and
/// the other ray carries 0.
pub fn solve_pi(sign: RaySign, lambda: f64, grid: &Arc<Grid>) -> Result<Field> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("lambda", format!("must be >= 0, got {lambda}")));
    }
    let ny = grid.ny();
    let bc = if lambda == 0.0 {
        match sign {
            RaySign::Plus => BoundaryConditionSpec::dirichlet_ray(grid, |_| 1.0, |_| 0.0),
            RaySign::Minus => BoundaryConditionSpec::dirichlet_ray(grid, |_| 0.0, |_| 1.0),
        }
    } else {
        let own = RayCondition::Equation { junction: 1.0 };
        let other = RayCondition::Prescribed(vec![0.0; ny]);
        match sign {
            RaySign::Plus => BoundaryConditionSpec { plus: own, minus: other },
            RaySign::Minus => BoundaryConditionSpec { plus: other, minus: own },
        }
    };
    let source = vec![0.0; grid.len()];
    let sys = assemble(
        grid,
        &Problem {
            lambda,
            bc: &bc,
            window: &Window::full(grid),
            source: &source,
        },
    )?;
    let label = match sign {
        RaySign::Plus => "pi_plus",
        RaySign::Minus => "pi_minus",
    };
    FactoredSystem::new(sys)?.solve(grid.tol(), label)
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantMeasureResult {
    pub nu: f64,
    /// v(0⁻, Y; f)
    pub top: f64,
    /// v(0⁺, -Y; f)
    pub bottom: f64,
    /// v(0⁻, Y; 1)
    pub denominator: f64,
    /// v(0⁺, -Y; 1), equal to the denominator by symmetry.
    pub denominator_mirror: f64,
    pub lambda: f64,
    pub method: &'static str,
    #[serde(skip)]
    pub grid: Arc<Grid>,
}

/// Short-cycle solver with the cycle length `v(·; 1)` cached, for repeated
/// ν_λ evaluations on one grid.
pub struct MeasureSolver {
    solver: ShortCycleSolver,
    v_one: Field,
}

impl MeasureSolver {
    pub fn new(grid: &Arc<Grid>, lambda: f64) -> Result<Self> {
        let solver = ShortCycleSolver::new(grid, lambda)?;
        let v_one = solver.solve(&Functional::one())?;
        let (a, b) = (v_one.junction(Junction::TopInner), v_one.junction(Junction::BottomInner));
        if !(a > 0.0) {
            return Err(Error::Degenerate {
                what: "cycle length v(0-,Y;1)",
                value: a,
            });
        }
        if (a - b).abs() > MIRROR_TOL * a.max(1.0) {
            return Err(Error::Degenerate {
                what: "cycle length mirror defect",
                value: a - b,
            });
        }
        Ok(Self { solver, v_one })
    }

    pub fn v_one(&self) -> &Field {
        &self.v_one
    }

    pub fn short_cycle(&self, f: &Functional) -> Result<Field> {
        self.solver.solve(f)
    }

    pub fn measure_from(&self, v: &Field) -> Result<InvariantMeasureResult> {
        v.ensure_same_grid(&self.v_one)?;
        let top = v.junction(Junction::TopInner);
        let bottom = v.junction(Junction::BottomInner);
        let denominator = self.v_one.junction(Junction::TopInner);
        let lambda = self.solver.lambda();
        Ok(InvariantMeasureResult {
            nu: (top + bottom) / (2.0 * denominator),
            top,
            bottom,
            denominator,
            denominator_mirror: self.v_one.junction(Junction::BottomInner),
            lambda,
            method: if lambda == 0.0 {
                "short-cycle-ratio"
            } else {
                "resolvent-short-cycle-ratio"
            },
            grid: v.grid().clone(),
        })
    }

    pub fn measure(&self, f: &Functional) -> Result<InvariantMeasureResult> {
        self.measure_from(&self.short_cycle(f)?)
    }
}

/// ν(f) from the short cycles of f and of 1.
pub fn invariant_measure(f: &Functional, grid: &Arc<Grid>) -> Result<InvariantMeasureResult> {
    MeasureSolver::new(grid, 0.0)?.measure(f)
}

/// ν_λ(f) from the resolvent short cycles.
pub fn nu_lambda(f: &Functional, lambda: f64, grid: &Arc<Grid>) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("must be > 0, got {lambda}")));
    }
    Ok(MeasureSolver::new(grid, lambda)?.measure(f)?.nu)
}

/// Largest |f| over the equation rows.
fn sampled_sup(grid: &Grid, f: &Functional) -> f64 {
    source_from(grid, f).iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone)]
pub struct ResolventPair {
    pub lambda: f64,
    pub u_lambda: Field,
    pub nu_lambda: f64,
    /// `‖u_λ‖∞ - ‖f‖∞/λ`; positive beyond 1e-8 flags a violation.
    pub bound_excess: f64,
    pub bound_ok: bool,
}

/// Direct solve of `(λ + A) u = f` with continuity across y = 0 on z = ±Y.
pub fn solve_u_lambda_direct(f: &Functional, lambda: f64, grid: &Arc<Grid>) -> Result<ResolventPair> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("must be > 0, got {lambda}")));
    }
    let sys = assemble_generator(grid, lambda, &BoundaryConditionSpec::nonlocal_continuity(), f)?;
    let u = FactoredSystem::new(sys)?.solve(grid.tol(), "u_lambda")?;
    let bound_excess = u.sup_norm() - sampled_sup(grid, f) / lambda;
    Ok(ResolventPair {
        lambda,
        nu_lambda: nu_lambda(f, lambda, grid)?,
        u_lambda: u,
        bound_excess,
        bound_ok: bound_excess <= 1e-8,
    })
}

fn nonzero(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value.abs() > 1e-300 {
        Ok(value)
    } else {
        Err(Error::Degenerate { what, value })
    }
}

/// `u_λ` rebuilt from `v_λ` and `π_λ±`:
/// symmetric part `v_λ(f) + v_λ(0⁻,Y;f)/v_λ(0⁻,Y;1) · (1/λ - v_λ(1))`,
/// antisymmetric part
/// `v_λ(f) - (π_λ⁺ - π_λ⁻) v_λ(0⁺,-Y;f) / (1 - π_λ⁺(0⁻,Y) + π_λ⁺(0⁺,-Y))`.
pub fn u_lambda_by_formula(f: &Functional, lambda: f64, grid: &Arc<Grid>) -> Result<Field> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("must be > 0, got {lambda}")));
    }
    let split = symmetrize(f);
    let ms = MeasureSolver::new(grid, lambda)?;
    let v1 = ms.v_one();

    let vs = ms.short_cycle(&split.f_sym)?;
    let a = vs.junction(Junction::TopInner) / nonzero("v_lambda(0-,Y;1)", v1.junction(Junction::TopInner))?;
    let sym: Vec<f64> = vs
        .values()
        .iter()
        .zip(v1.values())
        .map(|(v, w)| v + a * (1.0 / lambda - w))
        .collect();

    let va = ms.short_cycle(&split.f_asym)?;
    let (pp, pm) = rayon::join(
        || solve_pi(RaySign::Plus, lambda, grid),
        || solve_pi(RaySign::Minus, lambda, grid),
    );
    let (pp, pm) = (pp?, pm?);
    let denom = nonzero(
        "antisymmetric resolvent denominator",
        1.0 - pp.junction(Junction::TopInner) + pp.junction(Junction::BottomInner),
    )?;
    let c = va.junction(Junction::BottomInner) / denom;
    let values = sym
        .iter()
        .zip(va.values())
        .zip(pp.values().iter().zip(pm.values()))
        .map(|((s, v), (p, q))| s + v - (p - q) * c)
        .collect();
    Field::new(grid.clone(), values, "u_lambda_formula")
}

/// The corrector `u` of the representation formula together with ν(f).
#[derive(Debug, Clone)]
pub struct Corrector {
    pub u: Field,
    pub nu: f64,
}

/// `u = v(f) - ν(f) v(1) + (π⁺ - π⁻)/(4 π⁻(0⁻,Y)) (v(0⁻,Y;f) - v(0⁺,-Y;f))`.
pub fn solve_u_representation(f: &Functional, grid: &Arc<Grid>) -> Result<Corrector> {
    let ms = MeasureSolver::new(grid, 0.0)?;
    let v = ms.short_cycle(f)?;
    let m = ms.measure_from(&v)?;
    let (pp, pm) = rayon::join(
        || solve_pi(RaySign::Plus, 0.0, grid),
        || solve_pi(RaySign::Minus, 0.0, grid),
    );
    let (pp, pm) = (pp?, pm?);
    let p0 = pm.junction(Junction::TopInner);
    if !(p0 > 0.0) {
        return Err(Error::Degenerate {
            what: "pi_minus(0-,Y)",
            value: p0,
        });
    }
    let c = (m.top - m.bottom) / (4.0 * p0);
    let values = v
        .values()
        .iter()
        .zip(ms.v_one().values())
        .zip(pp.values().iter().zip(pm.values()))
        .map(|((v, w), (p, q))| v - m.nu * w + (p - q) * c)
        .collect();
    Ok(Corrector {
        u: Field::new(grid.clone(), values, "u")?,
        nu: m.nu,
    })
}

/// Sup over strip nodes with |y| <= `y_max`, |z| <= `z_max` of the
/// discrete residual `|A_h u - (f - ν)|`.
pub fn corrector_residual(u: &Field, f: &Functional, nu: f64, y_max: f64, z_max: f64) -> f64 {
    let g = u.grid();
    let vals = u.values();
    g.nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.region == Region::Interior && n.y.abs() <= y_max && n.z.abs() <= z_max)
        .map(|(idx, n)| {
            let au: f64 = strip_row(g, 0.0, idx).iter().map(|&(c, v)| v * vals[c]).sum();
            (au - (f.eval(n.y, n.z, n.region) - nu)).abs()
        })
        .fold(0.0, f64::max)
}

/// max(|u(0⁺,Y) - u(0⁻,Y)|, |u(0⁺,-Y) - u(0⁻,-Y)|).
pub fn junction_jump(u: &Field) -> f64 {
    let top = (u.junction(Junction::TopRay) - u.junction(Junction::TopInner)).abs();
    let bottom = (u.junction(Junction::BottomRay) - u.junction(Junction::BottomInner)).abs();
    top.max(bottom)
}

/// Diagnostic points (0,0), (±σ_y,0), (0,±Y/2).
pub fn probe_points(params: &OscillatorParams) -> [(f64, f64); 5] {
    let (s, yb) = (params.velocity_scale(), params.y_bound());
    [(0.0, 0.0), (s, 0.0), (-s, 0.0), (0.0, 0.5 * yb), (0.0, -0.5 * yb)]
}

/// Value at the strip node nearest to (y, z).
pub fn value_near(field: &Field, y: f64, z: f64) -> f64 {
    let g = field.grid();
    field.at(g.column_near(y), g.row_near(z))
}
