//! Overlapping interior/exterior Dirichlet iteration for strip problems
//! with prescribed ray data.
//!
//! The interior window covers |y| <= ȳ₁ with Dirichlet data Φ on y = ±ȳ₁;
//! the two exterior windows cover y >= ȳ and y <= -ȳ with Dirichlet data
//! taken from the interior solution on y = ±ȳ. One sweep maps Φ to the
//! exterior traces on y = ±ȳ₁. By the maximum principle the sweep is a
//! contraction with factor at most sup_z ψ(ȳ₁, z), where ψ solves the
//! homogeneous exterior problem with ψ = 1 on y = ȳ and ψ = 0 on the ray.
//!
//! Every subproblem is factored once; only right-hand sides change.

use std::sync::Arc;

use serde::Serialize;

use crate::assembly::{assemble, source_from, BoundaryConditionSpec, FactoredSystem, Problem, RayCondition, SideCondition, Window};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{Functional, OscillatorParams};
use crate::quadrature::RaySign;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchwarzConfig {
    pub ybar: f64,
    pub ybar1: f64,
    /// Stop when the sup-norm update of the traces is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl SchwarzConfig {
    /// ȳ = σ_y, ȳ₁ = 2σ_y, tolerance 1e-9, 200 sweeps.
    pub fn default_for(params: &OscillatorParams) -> Self {
        let s = params.velocity_scale();
        Self {
            ybar: s,
            ybar1: 2.0 * s,
            tol: 1e-9,
            max_iter: 200,
        }
    }

    /// Column offsets `(m, m1)` of ȳ and ȳ₁ from the center column.
    pub fn columns(&self, grid: &Grid) -> Result<(usize, usize)> {
        let (ybar, ybar1) = (self.ybar, self.ybar1);
        if !(ybar.is_finite() && ybar > 0.0) {
            return Err(Error::invalid("ybar", format!("must be > 0, got {ybar}")));
        }
        if !(ybar1.is_finite() && ybar1 > ybar) {
            return Err(Error::invalid("ybar1", format!("must exceed ybar = {ybar}, got {ybar1}")));
        }
        if ybar1 >= grid.half_width() {
            return Err(Error::invalid(
                "ybar1",
                format!("must be below L = {}, got {ybar1}", grid.half_width()),
            ));
        }
        if ybar1 - ybar < 2.0 * grid.hy() * (1.0 - 1e-9) {
            return Err(Error::invalid(
                "ybar1",
                format!("overlap {} is thinner than 2 hy = {}", ybar1 - ybar, 2.0 * grid.hy()),
            ));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid("tol", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be >= 1"));
        }
        let hy = grid.hy();
        let m = ((ybar / hy).round() as usize).max(1);
        let m1 = (ybar1 / hy).round() as usize;
        if m1 < m + 2 {
            return Err(Error::invalid("ybar1", "overlap collapses to fewer than 2 columns"));
        }
        if grid.center() + m1 + 1 >= grid.ny() {
            return Err(Error::invalid("ybar1", "interior window reaches the grid edge"));
        }
        Ok((m, m1))
    }
}

/// History of the trace iteration.
#[derive(Debug, Clone, Serialize)]
pub struct GammaIterationReport {
    /// Traces `(Φ(-ȳ₁, ·), Φ(ȳ₁, ·))` after each sweep.
    pub iterates: Vec<(Vec<f64>, Vec<f64>)>,
    /// `‖Φ_{n+1} - Φ_n‖∞` per sweep.
    pub residuals: Vec<f64>,
    /// Largest ratio of consecutive residuals above the round-off floor.
    pub measured_ratio: f64,
    /// sup_z ψ(ȳ₁, z) over both sides.
    pub certified_rho: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ybar: f64,
    pub ybar1: f64,
}

/// Local rows of a window system holding the Dirichlet data of column `col`,
/// indexed by grid row (`None` where the ray condition takes over).
fn side_rows(sys: &crate::assembly::LinearSystem, col: usize) -> Vec<Option<usize>> {
    let g = &sys.grid;
    let mut rows = vec![None; g.nz()];
    for (k, &idx) in sys.unknowns.iter().enumerate() {
        let n = g.node(idx);
        if n.i == col && !g.is_ray(idx) {
            rows[n.j] = Some(k);
        }
    }
    rows
}

struct Sub {
    fac: FactoredSystem,
    /// Dirichlet rows per side column.
    sides: Vec<(usize, Vec<Option<usize>>)>,
}

impl Sub {
    fn build(grid: &Arc<Grid>, window: Window, bc: &BoundaryConditionSpec, source: &[f64]) -> Result<Self> {
        let mut cols = Vec::new();
        if matches!(window.left, SideCondition::Dirichlet(_)) {
            cols.push(window.first);
        }
        if matches!(window.right, SideCondition::Dirichlet(_)) {
            cols.push(window.last);
        }
        let sys = assemble(
            grid,
            &Problem {
                lambda: 0.0,
                bc,
                window: &window,
                source,
            },
        )?;
        let sides = cols.into_iter().map(|c| (c, side_rows(&sys, c))).collect();
        Ok(Self {
            fac: FactoredSystem::new(sys)?,
            sides,
        })
    }

    fn solve(&self, data: &[&[f64]], tol: f64, label: &str) -> Result<Field> {
        let sys = self.fac.system();
        let mut rhs = sys.rhs.clone();
        for ((_, rows), seg) in self.sides.iter().zip(data) {
            for (j, r) in rows.iter().enumerate() {
                if let Some(k) = r {
                    rhs[*k] = seg[j];
                }
            }
        }
        let x = self.fac.solve_local(&rhs, tol)?;
        sys.to_field(&x, label)
    }
}

fn column(field: &Field, i: usize) -> Vec<f64> {
    (0..field.grid().nz()).map(|j| field.at(i, j)).collect()
}

/// The three factored subproblems for one source and one set of ray data.
pub struct Subdomains {
    grid: Arc<Grid>,
    cfg: SchwarzConfig,
    m: usize,
    m1: usize,
    interior: Sub,
    plus: Sub,
    minus: Sub,
}

impl Subdomains {
    /// `source` is indexed by grid unknown; ray data by grid column.
    pub fn new(
        grid: &Arc<Grid>,
        cfg: &SchwarzConfig,
        source: &[f64],
        plus_ray: Vec<f64>,
        minus_ray: Vec<f64>,
    ) -> Result<Self> {
        let (m, m1) = cfg.columns(grid)?;
        let (i0, ny, nz) = (grid.center(), grid.ny(), grid.nz());
        let bc = BoundaryConditionSpec {
            plus: RayCondition::Prescribed(plus_ray),
            minus: RayCondition::Prescribed(minus_ray),
        };
        let zeros = || SideCondition::Dirichlet(vec![0.0; nz]);
        let interior = Window {
            first: i0 - m1,
            last: i0 + m1,
            left: zeros(),
            right: zeros(),
        };
        let plus = Window {
            first: i0 + m,
            last: ny - 1,
            left: zeros(),
            right: SideCondition::Closure,
        };
        let minus = Window {
            first: 0,
            last: i0 - m,
            left: SideCondition::Closure,
            right: zeros(),
        };
        Ok(Self {
            grid: grid.clone(),
            cfg: *cfg,
            m,
            m1,
            interior: Sub::build(grid, interior, &bc, source)?,
            plus: Sub::build(grid, plus, &bc, source)?,
            minus: Sub::build(grid, minus, &bc, source)?,
        })
    }

    /// Snapped `(ȳ, ȳ₁)`.
    pub fn radii(&self) -> (f64, f64) {
        let h = self.grid.hy();
        (self.m as f64 * h, self.m1 as f64 * h)
    }

    /// Interior solution with segment data on y = -ȳ₁ and y = ȳ₁.
    pub fn interior(&self, left: &[f64], right: &[f64]) -> Result<Field> {
        self.interior.solve(&[left, right], self.grid.tol(), "zeta")
    }

    /// Exterior solution beyond ±ȳ with segment data on y = ±ȳ.
    pub fn exterior(&self, side: RaySign, segment: &[f64]) -> Result<Field> {
        let sub = match side {
            RaySign::Plus => &self.plus,
            RaySign::Minus => &self.minus,
        };
        sub.solve(&[segment], self.grid.tol(), "eta")
    }

    /// Runs the trace iteration from Φ₀ = 0 and glues the result.
    pub fn iterate(&self, certified_rho: f64) -> Result<(Field, GammaIterationReport)> {
        let g = &self.grid;
        let (i0, nz) = (g.center(), g.nz());
        let (m, m1) = (self.m, self.m1);
        let mut phi = (vec![0.0; nz], vec![0.0; nz]);
        let mut report = GammaIterationReport {
            iterates: Vec::new(),
            residuals: Vec::new(),
            measured_ratio: 0.0,
            certified_rho,
            iterations: 0,
            converged: false,
            ybar: self.radii().0,
            ybar1: self.radii().1,
        };
        let mut last = None;
        for _ in 0..self.cfg.max_iter {
            let zeta = self.interior(&phi.0, &phi.1)?;
            let (seg_minus, seg_plus) = (column(&zeta, i0 - m), column(&zeta, i0 + m));
            let (eta_minus, eta_plus) = rayon::join(
                || self.exterior(RaySign::Minus, &seg_minus),
                || self.exterior(RaySign::Plus, &seg_plus),
            );
            let (eta_minus, eta_plus) = (eta_minus?, eta_plus?);
            let next = (column(&eta_minus, i0 - m1), column(&eta_plus, i0 + m1));
            let res = next
                .0
                .iter()
                .zip(&phi.0)
                .chain(next.1.iter().zip(&phi.1))
                .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            report.residuals.push(res);
            report.iterates.push(next.clone());
            report.iterations += 1;
            phi = next;
            last = Some((zeta, eta_minus, eta_plus));
            if res <= self.cfg.tol {
                report.converged = true;
                break;
            }
        }
        report.measured_ratio = measured_ratio(&report.residuals, self.cfg.tol);
        if !report.converged {
            return Err(Error::NoConvergence {
                iterations: report.iterations,
                residual: *report.residuals.last().unwrap_or(&f64::NAN),
            });
        }
        let (zeta, eta_minus, eta_plus) = last.expect("at least one sweep");
        let mut values = vec![0.0; g.len()];
        for (idx, n) in g.nodes().iter().enumerate() {
            values[idx] = if n.i + m1 < i0 {
                eta_minus.values()[idx]
            } else if n.i > i0 + m1 {
                eta_plus.values()[idx]
            } else {
                zeta.values()[idx]
            };
        }
        Ok((Field::new(g.clone(), values, "glued")?, report))
    }
}

/// Largest ratio of consecutive residuals, skipping pairs whose earlier
/// member is already at the stopping tolerance (round-off dominated).
fn measured_ratio(res: &[f64], tol: f64) -> f64 {
    res.windows(2)
        .filter(|w| w[0] > 10.0 * tol)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max)
}

/// Solves `A u = source` on the strip with the given ray data by the
/// overlapping iteration.
pub fn solve_dirichlet_by_schwarz(
    grid: &Arc<Grid>,
    source: &[f64],
    plus_ray: Vec<f64>,
    minus_ray: Vec<f64>,
    cfg: &SchwarzConfig,
) -> Result<(Field, GammaIterationReport)> {
    let rho = contraction_factor(grid, cfg.ybar, cfg.ybar1)?;
    let sub = Subdomains::new(grid, cfg, source, plus_ray, minus_ray)?;
    sub.iterate(rho)
}

/// The elastic part `A v_e = f` in the strip, `v_e = 0` on both rays.
pub fn solve_ve(f: &Functional, grid: &Arc<Grid>, cfg: &SchwarzConfig) -> Result<(Field, GammaIterationReport)> {
    let mut source = source_from(grid, f);
    for (idx, s) in source.iter_mut().enumerate() {
        if grid.is_ray(idx) {
            *s = 0.0;
        }
    }
    let ny = grid.ny();
    let (field, report) = solve_dirichlet_by_schwarz(grid, &source, vec![0.0; ny], vec![0.0; ny], cfg)?;
    Ok((field.with_label("v_e"), report))
}

/// sup_z ψ(±ȳ₁, z) for the homogeneous exterior problems with ψ = 1 on
/// y = ±ȳ and ψ = 0 on the ray; the larger of the two sides.
pub fn contraction_factor(grid: &Arc<Grid>, ybar: f64, ybar1: f64) -> Result<f64> {
    let cfg = SchwarzConfig {
        ybar,
        ybar1,
        ..SchwarzConfig::default_for(grid.params())
    };
    let (m, m1) = cfg.columns(grid)?;
    let (i0, ny, nz) = (grid.center(), grid.ny(), grid.nz());
    let source = vec![0.0; grid.len()];
    let bc = BoundaryConditionSpec {
        plus: RayCondition::Prescribed(vec![0.0; ny]),
        minus: RayCondition::Prescribed(vec![0.0; ny]),
    };
    let ones = vec![1.0; nz];
    let plus = Sub::build(
        grid,
        Window {
            first: i0 + m,
            last: ny - 1,
            left: SideCondition::Dirichlet(ones.clone()),
            right: SideCondition::Closure,
        },
        &bc,
        &source,
    )?;
    let minus = Sub::build(
        grid,
        Window {
            first: 0,
            last: i0 - m,
            left: SideCondition::Closure,
            right: SideCondition::Dirichlet(ones.clone()),
        },
        &bc,
        &source,
    )?;
    let psi_plus = plus.solve(&[&ones], grid.tol(), "psi")?;
    let psi_minus = minus.solve(&[&ones], grid.tol(), "psi")?;
    // Ray nodes carry ψ = 0 and do not change the supremum.
    let rho = column(&psi_plus, i0 + m1)
        .into_iter()
        .chain(column(&psi_minus, i0 - m1))
        .fold(0.0f64, f64::max);
    if !(rho < 1.0) {
        return Err(Error::NotContractive(rho));
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_generator, solve_linear};
    use crate::grid::{build_grid, GridConfig};
    use crate::model::catalogue;

    fn grid(ny: usize, nz: usize) -> Arc<Grid> {
        let p = OscillatorParams::default();
        build_grid(
            &p,
            &GridConfig {
                half_width: 6.0,
                ny,
                nz,
                tol: 1e-10,
            },
        )
        .unwrap()
    }

    #[test]
    fn thin_overlap_is_rejected() {
        let g = grid(121, 21);
        let cfg = SchwarzConfig {
            ybar: 1.0,
            ybar1: 1.05,
            ..SchwarzConfig::default_for(g.params())
        };
        assert!(matches!(cfg.columns(&g), Err(Error::InvalidInput { key: "ybar1", .. })));
        assert!(contraction_factor(&g, 2.0, 1.0).is_err());
        assert!(contraction_factor(&g, 1.0, 6.5).is_err());
    }

    #[test]
    fn zero_source_converges_at_once() {
        let g = grid(81, 21);
        let zero = Functional::constant(0.0);
        let (v, rep) = solve_ve(&zero, &g, &SchwarzConfig::default_for(g.params())).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert_eq!(v.sup_norm(), 0.0);
    }

    #[test]
    fn glued_field_matches_monolithic() {
        let g = grid(81, 31);
        let f = catalogue("y2", g.params(), 6.0).unwrap();
        let (ve, rep) = solve_ve(&f, &g, &SchwarzConfig::default_for(g.params())).unwrap();
        let bc = BoundaryConditionSpec::dirichlet_ray(&g, |_| 0.0, |_| 0.0);
        let mono = solve_linear(&assemble_generator(&g, 0.0, &bc, &f).unwrap(), 1e-12).unwrap();
        assert!(ve.max_diff(&mono).unwrap() < 5e-8, "{}", ve.max_diff(&mono).unwrap());
        assert!(rep.measured_ratio <= rep.certified_rho + 0.05);
        for w in rep.residuals.windows(2).skip(1) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn factor_grows_as_overlap_shrinks() {
        let g = grid(121, 21);
        let mut last = 0.0;
        for ybar1 in [3.0, 2.5, 2.0, 1.5, 1.2] {
            let rho = contraction_factor(&g, 1.0, ybar1).unwrap();
            assert!(rho > last && rho < 1.0, "{ybar1}: {rho}");
            last = rho;
        }
    }

    #[test]
    fn exterior_barrier() {
        let g = grid(121, 41);
        let cfg = SchwarzConfig::default_for(g.params());
        let one = Functional::one();
        let mut src = g.sample(&one);
        for (idx, s) in src.iter_mut().enumerate() {
            if g.is_ray(idx) {
                *s = 0.0;
            }
        }
        let sub = Subdomains::new(&g, &cfg, &src, vec![0.0; g.ny()], vec![0.0; g.ny()]).unwrap();
        let nz = g.nz();
        let zeta = sub.interior(&vec![0.3; nz], &vec![0.3; nz]).unwrap();
        let (ybar, _) = sub.radii();
        let m = (ybar / g.hy()).round() as usize;
        let seg = column(&zeta, g.center() + m);
        let sup = seg.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let eta = sub.exterior(RaySign::Plus, &seg).unwrap();
        let yb = g.params().y_bound();
        for (idx, n) in g.nodes().iter().enumerate() {
            if n.i > g.center() + m {
                let v = eta.values()[idx];
                assert!(v >= -1e-12 && v <= sup + (yb - n.z) / ybar + 1e-10, "{n:?}: {v}");
            }
        }
    }
}
