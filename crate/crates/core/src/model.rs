//! Physical constants, phase-space points and test functionals.
//!
//! The state of the oscillator is the pair (y, z): velocity and elastic
//! component, with |z| ≤ Y. Three regions partition the closed state space:
//! the open strip |z| < Y together with the inflow halves of the lines
//! z = ±Y, the plastic ray z = Y with y > 0, and the plastic ray z = -Y with
//! y < 0. Everything here is immutable and shareable between threads.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Damping `c0`, stiffness `k` and elasto-plastic bound `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    c0: f64,
    k: f64,
    y_bound: f64,
}

impl OscillatorParams {
    pub fn new(c0: f64, k: f64, y_bound: f64) -> Result<Self> {
        for (key, v) in [("c0", c0), ("k", k), ("Y", y_bound)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(key, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(Self { c0, k, y_bound })
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// The elasto-plastic bound `Y`.
    pub fn y_bound(&self) -> f64 {
        self.y_bound
    }

    /// Stationary velocity scale of the linear oscillator, `1/sqrt(2 c0)`.
    pub fn velocity_scale(&self) -> f64 {
        (2.0 * self.c0).sqrt().recip()
    }
}

impl Default for OscillatorParams {
    fn default() -> Self {
        Self {
            c0: 1.0,
            k: 1.0,
            y_bound: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Interior,
    PlusRay,
    MinusRay,
}

impl Region {
    pub fn reflect(self) -> Self {
        match self {
            Region::Interior => Region::Interior,
            Region::PlusRay => Region::MinusRay,
            Region::MinusRay => Region::PlusRay,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Interior => "interior",
            Region::PlusRay => "plus-ray",
            Region::MinusRay => "minus-ray",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub y: f64,
    pub z: f64,
    pub region: Region,
}

impl PhasePoint {
    /// Checked constructor: ray points must sit on their line with the
    /// outward sign of velocity, interior points inside the band.
    pub fn new(params: &OscillatorParams, y: f64, z: f64, region: Region) -> Result<Self> {
        let bound = params.y_bound();
        if !(y.is_finite() && z.is_finite()) {
            return Err(Error::invalid("point", "coordinates must be finite"));
        }
        let ok = match region {
            Region::Interior => z.abs() <= bound,
            Region::PlusRay => z == bound && y >= 0.0,
            Region::MinusRay => z == -bound && y <= 0.0,
        };
        if !ok {
            return Err(Error::invalid(
                "point",
                format!("({y}, {z}) is not a valid {region} point for Y = {bound}"),
            ));
        }
        Ok(Self { y, z, region })
    }

    pub fn interior(y: f64, z: f64) -> Self {
        Self {
            y,
            z,
            region: Region::Interior,
        }
    }
}

/// Velocity drift `-(c0 y + k z)`, with z pinned to ±Y on the plastic rays.
pub fn drift(params: &OscillatorParams, p: &PhasePoint) -> f64 {
    let z = match p.region {
        Region::Interior => p.z,
        Region::PlusRay => params.y_bound(),
        Region::MinusRay => -params.y_bound(),
    };
    -(params.c0() * p.y + params.k() * z)
}

/// The point symmetry (y, z) -> (-y, -z), exchanging the two rays.
pub fn reflect(p: &PhasePoint) -> PhasePoint {
    PhasePoint {
        y: -p.y,
        z: -p.z,
        region: p.region.reflect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    Symmetric,
    Antisymmetric,
    General,
}

type EvalFn = dyn Fn(f64, f64, Region) -> f64 + Send + Sync;

/// A bounded test function on the closed state space.
///
/// Functionals are callables rather than grid samples so the same object
/// drives both the finite-difference solvers and the path simulator.
#[derive(Clone)]
pub struct Functional {
    name: String,
    eval: Arc<EvalFn>,
    symmetry: Symmetry,
    bound: f64,
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional")
            .field("name", &self.name)
            .field("symmetry", &self.symmetry)
            .field("bound", &self.bound)
            .finish()
    }
}

impl Functional {
    pub fn new<F>(name: impl Into<String>, symmetry: Symmetry, bound: f64, eval: F) -> Self
    where
        F: Fn(f64, f64, Region) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            symmetry,
            bound,
        }
    }

    /// Constant function, exactly symmetric.
    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), Symmetry::Symmetric, c.abs(), move |_, _, _| c)
    }

    pub fn one() -> Self {
        let mut f = Self::constant(1.0);
        f.name = "one".into();
        f
    }

    #[inline]
    pub fn eval(&self, y: f64, z: f64, region: Region) -> f64 {
        (self.eval)(y, z, region)
    }

    pub fn eval_point(&self, p: &PhasePoint) -> f64 {
        self.eval(p.y, p.z, p.region)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Declared sup-norm bound.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// `a f + b g`; the symmetry tag survives only when both agree.
    pub fn linear_combination(a: f64, f: &Functional, b: f64, g: &Functional) -> Self {
        let symmetry = if f.symmetry == g.symmetry {
            f.symmetry
        } else if a == 0.0 {
            g.symmetry
        } else if b == 0.0 {
            f.symmetry
        } else {
            Symmetry::General
        };
        let (fe, ge) = (f.eval.clone(), g.eval.clone());
        Self {
            name: format!("{a}*{}+{b}*{}", f.name, g.name),
            eval: Arc::new(move |y, z, r| a * fe(y, z, r) + b * ge(y, z, r)),
            symmetry,
            bound: a.abs() * f.bound + b.abs() * g.bound,
        }
    }

    /// `f - c`, used for the corrector right-hand side.
    pub fn shifted(&self, c: f64) -> Self {
        let symmetry = match self.symmetry {
            Symmetry::Symmetric => Symmetry::Symmetric,
            _ if c == 0.0 => self.symmetry,
            _ => Symmetry::General,
        };
        let fe = self.eval.clone();
        Self {
            name: format!("{}-{c}", self.name),
            eval: Arc::new(move |y, z, r| fe(y, z, r) - c),
            symmetry,
            bound: self.bound + c.abs(),
        }
    }
}

/// The even and odd parts of a functional under (y, z) -> (-y, -z).
#[derive(Debug, Clone)]
pub struct SymmetrySplit {
    pub f_sym: Functional,
    pub f_asym: Functional,
}

pub fn symmetrize(f: &Functional) -> SymmetrySplit {
    let (e1, e2) = (f.eval.clone(), f.eval.clone());
    let f_sym = Functional {
        name: format!("{}_sym", f.name),
        eval: Arc::new(move |y, z, r| 0.5 * (e1(y, z, r) + e1(-y, -z, r.reflect()))),
        symmetry: Symmetry::Symmetric,
        bound: f.bound,
    };
    let f_asym = Functional {
        name: format!("{}_asym", f.name),
        eval: Arc::new(move |y, z, r| 0.5 * (e2(y, z, r) - e2(-y, -z, r.reflect()))),
        symmetry: Symmetry::Antisymmetric,
        bound: f.bound,
    };
    SymmetrySplit { f_sym, f_asym }
}

/// Names accepted by [`catalogue`].
pub const CATALOGUE: &[&str] = &[
    "one",
    "y",
    "z",
    "y2",
    "z2",
    "abs_y",
    "yz",
    "plastic_plus",
    "y_plus_y2",
    "y_plus_z2",
    "yz3_plus_y3",
    "yz2_plus_y3",
];

/// Standard test functionals by name.
///
/// `velocity_cap` is the largest |y| the caller will sample (the grid
/// truncation); polynomial bounds are declared relative to it.
pub fn catalogue(name: &str, params: &OscillatorParams, velocity_cap: f64) -> Result<Functional> {
    use Symmetry::*;
    let yb = params.y_bound();
    let l = velocity_cap.abs();
    let f = match name {
        "one" => Functional::one(),
        "y" => Functional::new(name, Antisymmetric, l, |y, _, _| y),
        "z" => Functional::new(name, Antisymmetric, yb, |_, z, _| z),
        "y2" => Functional::new(name, Symmetric, l * l, |y, _, _| y * y),
        "z2" => Functional::new(name, Symmetric, yb * yb, |_, z, _| z * z),
        "abs_y" => Functional::new(name, Symmetric, l, |y, _, _| y.abs()),
        "yz" => Functional::new(name, Symmetric, l * yb, |y, z, _| y * z),
        "plastic_plus" => Functional::new(name, General, 1.0, |_, _, r| {
            if r == Region::PlusRay {
                1.0
            } else {
                0.0
            }
        }),
        "y_plus_y2" => Functional::new(name, General, l + l * l, |y, _, _| y + y * y),
        "y_plus_z2" => Functional::new(name, General, l + yb * yb, |y, z, _| y + z * z),
        // y z^3 is even under the point reflection, so this one is general.
        "yz3_plus_y3" => Functional::new(name, General, l * yb.powi(3) + l.powi(3), |y, z, _| {
            y * z * z * z + y * y * y
        }),
        "yz2_plus_y3" => Functional::new(name, Antisymmetric, l * yb * yb + l.powi(3), |y, z, _| {
            y * z * z + y * y * y
        }),
        _ => return Err(Error::UnknownFunctional(name.to_string())),
    };
    Ok(f)
}
