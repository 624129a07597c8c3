//! Integrable systems: an integral map `F: R^{k+n} -> R^k` together with
//! `n` commuting vector fields tangent to its fibres, plus the built-in
//! model systems used throughout the crate.
//!
//! Coordinates on the Hamiltonian builtins are ordered `(q_1..q_n, p_1..p_n)`
//! and Hamiltonian fields follow `q' = dH/dp`, `p' = -dH/dq`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latalg::IntMatrix;

/// Radius of the value-space ball around critical values that the
/// builtins treat as non-regular.
pub const CRITICAL_EXCLUSION: f64 = 1e-3;

/// A point of the ambient phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhasePoint {
    #[serde(with = "crate::serde_util::vector")]
    pub coords: DVector<f64>,
}

impl PhasePoint {
    pub fn new(coords: DVector<f64>) -> Self {
        PhasePoint { coords }
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        PhasePoint { coords: DVector::from_column_slice(xs) }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|x| x.is_finite())
    }
}

impl From<DVector<f64>> for PhasePoint {
    fn from(coords: DVector<f64>) -> Self {
        PhasePoint { coords }
    }
}

/// Catalog metadata attached to a builtin system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemCatalogEntry {
    pub name: String,
    pub parameters: BTreeMap<String, f64>,
    /// Known monodromy of the canonical loop (synthetic systems only).
    pub prescribed_monodromy: Option<IntMatrix>,
}

/// An integrable system of type `(k, n)` on an open subset of `R^{k+n}`.
///
/// Implementors supply the integral map, its Jacobian and the generator
/// fields. Generator Jacobians fall back to central differences.
pub trait IntegrableSystem: Send + Sync + fmt::Debug {
    /// Ambient dimension `k + n`.
    fn dim(&self) -> usize;
    /// Rank of the integral map.
    fn k(&self) -> usize;
    /// Rank of the commuting action.
    fn n(&self) -> usize;

    fn integral_map(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `k x (k+n)` Jacobian of the integral map.
    fn integral_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Generator fields as the columns of a `(k+n) x n` matrix.
    fn generators(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Jacobian of the `i`-th generator.
    fn generator_jacobian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        fd_generator_jacobian(self, i, x)
    }

    /// Membership in the regular domain `M`.
    fn in_regular_domain(&self, x: &DVector<f64>) -> bool;

    /// Critical values to keep away from, in value space.
    fn critical_values(&self) -> Vec<DVector<f64>> {
        Vec::new()
    }

    /// Distance from `value` to the nearest excluded critical set, if any.
    fn critical_distance(&self, value: &DVector<f64>) -> Option<f64> {
        self.critical_values().iter().map(|c| (value - c).norm()).min_by(|a, b| a.total_cmp(b))
    }

    fn is_near_critical(&self, value: &DVector<f64>) -> bool {
        self.critical_distance(value).is_some_and(|d| d < CRITICAL_EXCLUSION)
    }

    /// Displacement `to - from` in the ambient space. Systems whose
    /// phase space is a quotient of `R^{k+n}` reduce it here.
    fn displacement(&self, from: &DVector<f64>, to: &DVector<f64>) -> DVector<f64> {
        to - from
    }

    /// Whether the generators are Hamiltonian fields of the components
    /// of `F` for the standard symplectic form on `R^{2n}`.
    fn is_hamiltonian(&self) -> bool {
        false
    }

    /// Closed-form period lattice basis (columns) over a regular value.
    fn analytic_lattice(&self, _value: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// A point on the fibre over `value`, when one is known in closed form.
    fn seed_point(&self, _value: &DVector<f64>) -> Option<PhasePoint> {
        None
    }

    fn catalog_entry(&self) -> Option<&SystemCatalogEntry> {
        None
    }

    /// Vector field `sum_i t_i X_i`.
    fn combined_field(&self, x: &DVector<f64>, t: &[f64]) -> DVector<f64> {
        self.generators(x) * DVector::from_column_slice(t)
    }

    /// Jacobian of `sum_i t_i X_i`.
    fn combined_jacobian(&self, x: &DVector<f64>, t: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut jac = DMatrix::zeros(d, d);
        for (i, &ti) in t.iter().enumerate() {
            if ti != 0.0 {
                jac += self.generator_jacobian(i, x) * ti;
            }
        }
        jac
    }
}

/// Central-difference Jacobian of generator `i` with step `1e-6 (1 + |x|)`.
pub fn fd_generator_jacobian<S: IntegrableSystem + ?Sized>(sys: &S, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
    let d = sys.dim();
    let h = 1e-6 * (1.0 + x.norm());
    let mut jac = DMatrix::zeros(d, d);
    let mut xp = x.clone();
    for j in 0..d {
        xp[j] = x[j] + h;
        let fp = sys.generators(&xp).column(i).into_owned();
        xp[j] = x[j] - h;
        let fm = sys.generators(&xp).column(i).into_owned();
        xp[j] = x[j];
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// `F(p)`.
pub fn eval_integral_map(sys: &dyn IntegrableSystem, p: &PhasePoint) -> DVector<f64> {
    sys.integral_map(&p.coords)
}

/// `X_1(p), ..., X_n(p)`.
pub fn eval_generators(sys: &dyn IntegrableSystem, p: &PhasePoint) -> Vec<DVector<f64>> {
    let g = sys.generators(&p.coords);
    g.column_iter().map(|c| c.into_owned()).collect()
}

/// Names accepted by [`builtin_system`].
pub const BUILTIN_NAMES: [&str; 4] = ["iso-oscillator", "aniso-oscillator", "champagne-bottle", "synthetic-twist"];

/// Instantiates one of the catalog systems.
///
/// | name | parameters |
/// |------|------------|
/// | `iso-oscillator` | `omega` (default 1) |
/// | `aniso-oscillator` | `omega1` (default 1), `omega2` (default 2) |
/// | `champagne-bottle` | none |
/// | `synthetic-twist` | `m` (integer, default 1), `r` (default 1) |
pub fn builtin_system(name: &str, params: &BTreeMap<String, f64>) -> Result<Arc<dyn IntegrableSystem>> {
    match name {
        "iso-oscillator" => {
            check_known(params, &["omega"])?;
            let w = param(params, "omega", 1.0)?;
            positive("omega", w)?;
            Ok(Arc::new(Oscillator::new(name, [w, w], params)))
        }
        "aniso-oscillator" => {
            check_known(params, &["omega1", "omega2"])?;
            let w1 = param(params, "omega1", 1.0)?;
            let w2 = param(params, "omega2", 2.0)?;
            positive("omega1", w1)?;
            positive("omega2", w2)?;
            Ok(Arc::new(Oscillator::new(name, [w1, w2], params)))
        }
        "champagne-bottle" => {
            check_known(params, &[])?;
            Ok(Arc::new(ChampagneBottle::new()))
        }
        "synthetic-twist" => {
            check_known(params, &["m", "r"])?;
            let m = param(params, "m", 1.0)?;
            if m.fract() != 0.0 || m.abs() > 1e6 {
                return Err(Error::InvalidParameter {
                    name: "m".into(),
                    reason: format!("must be an integer, got {m}"),
                });
            }
            let r = param(params, "r", 1.0)?;
            positive("r", r)?;
            Ok(Arc::new(SyntheticTwist::new(m as i64, r)))
        }
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

fn check_known(params: &BTreeMap<String, f64>, known: &[&str]) -> Result<()> {
    for key in params.keys() {
        if !known.contains(&key.as_str()) {
            return Err(Error::InvalidParameter { name: key.clone(), reason: "not a parameter of this system".into() });
        }
    }
    Ok(())
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> Result<f64> {
    let v = params.get(key).copied().unwrap_or(default);
    if !v.is_finite() {
        return Err(Error::InvalidParameter { name: key.into(), reason: "not finite".into() });
    }
    Ok(v)
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v <= 0.0 {
        return Err(Error::InvalidParameter { name: key.into(), reason: format!("must be positive, got {v}") });
    }
    Ok(())
}

/// Two decoupled harmonic oscillators on `R^4`,
/// `f_i = (p_i^2 + w_i^2 q_i^2) / 2`.
#[derive(Debug, Clone)]
pub struct Oscillator {
    omega: [f64; 2],
    entry: SystemCatalogEntry,
}

impl Oscillator {
    fn new(name: &str, omega: [f64; 2], params: &BTreeMap<String, f64>) -> Self {
        let mut parameters = params.clone();
        if name == "iso-oscillator" {
            parameters.entry("omega".into()).or_insert(omega[0]);
        } else {
            parameters.entry("omega1".into()).or_insert(omega[0]);
            parameters.entry("omega2".into()).or_insert(omega[1]);
        }
        Oscillator {
            omega,
            entry: SystemCatalogEntry { name: name.to_string(), parameters, prescribed_monodromy: None },
        }
    }
}

impl IntegrableSystem for Oscillator {
    fn dim(&self) -> usize {
        4
    }
    fn k(&self) -> usize {
        2
    }
    fn n(&self) -> usize {
        2
    }

    fn integral_map(&self, x: &DVector<f64>) -> DVector<f64> {
        let [w1, w2] = self.omega;
        DVector::from_vec(vec![
            0.5 * (x[2] * x[2] + w1 * w1 * x[0] * x[0]),
            0.5 * (x[3] * x[3] + w2 * w2 * x[1] * x[1]),
        ])
    }

    fn integral_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let [w1, w2] = self.omega;
        DMatrix::from_row_slice(2, 4, &[w1 * w1 * x[0], 0.0, x[2], 0.0, 0.0, w2 * w2 * x[1], 0.0, x[3]])
    }

    fn generators(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let [w1, w2] = self.omega;
        DMatrix::from_column_slice(4, 2, &[x[2], 0.0, -w1 * w1 * x[0], 0.0, 0.0, x[3], 0.0, -w2 * w2 * x[1]])
    }

    fn generator_jacobian(&self, i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(4, 4);
        let w = self.omega[i];
        j[(i, 2 + i)] = 1.0;
        j[(2 + i, i)] = -w * w;
        j
    }

    fn in_regular_domain(&self, x: &DVector<f64>) -> bool {
        let f = self.integral_map(x);
        f.iter().all(|&v| v.is_finite() && v >= CRITICAL_EXCLUSION)
    }

    fn critical_distance(&self, value: &DVector<f64>) -> Option<f64> {
        // Critical values are the two coordinate axes of the value plane.
        Some(value[0].min(value[1]))
    }

    fn is_hamiltonian(&self) -> bool {
        true
    }

    fn analytic_lattice(&self, _value: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 * PI / self.omega[0], 2.0 * PI / self.omega[1]])))
    }

    fn seed_point(&self, value: &DVector<f64>) -> Option<PhasePoint> {
        if value.len() != 2 || value.iter().any(|&v| v <= 0.0) {
            return None;
        }
        Some(PhasePoint::from_slice(&[
            (2.0 * value[0]).sqrt() / self.omega[0],
            (2.0 * value[1]).sqrt() / self.omega[1],
            0.0,
            0.0,
        ]))
    }

    fn catalog_entry(&self) -> Option<&SystemCatalogEntry> {
        Some(&self.entry)
    }
}

/// The champagne bottle on `R^4 = T*R^2` with coordinates `(x, y, p_x, p_y)`:
/// `H = |p|^2/2 + (x^2+y^2)^2 - (x^2+y^2)`, `L = x p_y - y p_x`.
/// The value `(0, 0)` is a focus-focus critical value.
#[derive(Debug, Clone)]
pub struct ChampagneBottle {
    entry: SystemCatalogEntry,
}

impl Default for ChampagneBottle {
    fn default() -> Self {
        Self::new()
    }
}

impl ChampagneBottle {
    pub fn new() -> Self {
        ChampagneBottle {
            entry: SystemCatalogEntry {
                name: "champagne-bottle".into(),
                parameters: BTreeMap::new(),
                prescribed_monodromy: None,
            },
        }
    }

    fn effective_potential(l: f64, r: f64) -> f64 {
        let r2 = r * r;
        0.5 * l * l / r2 + r2 * r2 - r2
    }
}

impl IntegrableSystem for ChampagneBottle {
    fn dim(&self) -> usize {
        4
    }
    fn k(&self) -> usize {
        2
    }
    fn n(&self) -> usize {
        2
    }

    fn integral_map(&self, x: &DVector<f64>) -> DVector<f64> {
        let (qx, qy, px, py) = (x[0], x[1], x[2], x[3]);
        let r2 = qx * qx + qy * qy;
        DVector::from_vec(vec![0.5 * (px * px + py * py) + r2 * r2 - r2, qx * py - qy * px])
    }

    fn integral_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (qx, qy, px, py) = (x[0], x[1], x[2], x[3]);
        let r2 = qx * qx + qy * qy;
        let c = 4.0 * r2 - 2.0;
        DMatrix::from_row_slice(2, 4, &[c * qx, c * qy, px, py, py, -px, -qy, qx])
    }

    fn generators(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (qx, qy, px, py) = (x[0], x[1], x[2], x[3]);
        let r2 = qx * qx + qy * qy;
        let c = 4.0 * r2 - 2.0;
        DMatrix::from_column_slice(4, 2, &[px, py, -c * qx, -c * qy, -qy, qx, -py, px])
    }

    fn generator_jacobian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let (qx, qy) = (x[0], x[1]);
        let r2 = qx * qx + qy * qy;
        let mut j = DMatrix::zeros(4, 4);
        if i == 0 {
            j[(0, 2)] = 1.0;
            j[(1, 3)] = 1.0;
            j[(2, 0)] = -(4.0 * r2 + 8.0 * qx * qx - 2.0);
            j[(2, 1)] = -8.0 * qx * qy;
            j[(3, 0)] = -8.0 * qx * qy;
            j[(3, 1)] = -(4.0 * r2 + 8.0 * qy * qy - 2.0);
        } else {
            j[(0, 1)] = -1.0;
            j[(1, 0)] = 1.0;
            j[(2, 3)] = -1.0;
            j[(3, 2)] = 1.0;
        }
        j
    }

    fn in_regular_domain(&self, x: &DVector<f64>) -> bool {
        if !x.iter().all(|v| v.is_finite()) {
            return false;
        }
        let f = self.integral_map(x);
        if f.norm() < CRITICAL_EXCLUSION {
            return false;
        }
        let sv = self.integral_jacobian(x).singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        hi > 0.0 && lo > 1e-8 * hi
    }

    fn critical_values(&self) -> Vec<DVector<f64>> {
        vec![DVector::zeros(2)]
    }

    fn is_hamiltonian(&self) -> bool {
        true
    }

    fn seed_point(&self, value: &DVector<f64>) -> Option<PhasePoint> {
        if value.len() != 2 {
            return None;
        }
        let (h, l) = (value[0], value[1]);
        // Place the point on the x-axis at the radius minimising the
        // effective potential and put the remaining energy into p_x.
        let mut best = (f64::INFINITY, 0.0);
        for i in 1..=4000 {
            let r = 2.0 * i as f64 / 4000.0;
            let v = Self::effective_potential(l, r);
            if v < best.0 {
                best = (v, r);
            }
        }
        let (vmin, r) = best;
        if h <= vmin {
            return None;
        }
        let px = (2.0 * (h - vmin)).sqrt();
        Some(PhasePoint::from_slice(&[r, 0.0, px, l / r]))
    }

    fn catalog_entry(&self) -> Option<&SystemCatalogEntry> {
        Some(&self.entry)
    }
}

/// A non-Hamiltonian model with prescribed monodromy `[[1, m], [0, 1]]`.
///
/// The phase space is `{(c, x)} = (R^2 \ 0) x R^2` with the fibre over `c`
/// taken modulo the lattice `L(c) = B(c) Z^2`, where
/// `B(c) = 2 pi [[1, m phi / 2pi], [0, 1]]` and `phi = arg c`. `L(c)` is
/// single valued even though `B` jumps by `[[1, m], [0, 1]]` across
/// `phi = 0`. The generators are the constant translations `d/dx_i`.
#[derive(Debug, Clone)]
pub struct SyntheticTwist {
    m: i64,
    radius: f64,
    entry: SystemCatalogEntry,
}

impl SyntheticTwist {
    pub fn new(m: i64, radius: f64) -> Self {
        let mut parameters = BTreeMap::new();
        parameters.insert("m".into(), m as f64);
        parameters.insert("r".into(), radius);
        SyntheticTwist {
            m,
            radius,
            entry: SystemCatalogEntry {
                name: "synthetic-twist".into(),
                parameters,
                prescribed_monodromy: Some(IntMatrix::from_rows(&[vec![1, m], vec![0, 1]])),
            },
        }
    }

    pub fn twist(&self) -> i64 {
        self.m
    }

    /// Radius of the canonical loop around the origin.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Basis `B(phi)` continued from `phi = 0`, for any real angle.
    pub fn basis_at_angle(&self, phi: f64) -> DMatrix<f64> {
        let tau = 2.0 * PI;
        DMatrix::from_row_slice(2, 2, &[tau, self.m as f64 * phi, 0.0, tau])
    }

    fn angle(value: &DVector<f64>) -> f64 {
        value[1].atan2(value[0]).rem_euclid(2.0 * PI)
    }

    fn reduce(&self, value: &DVector<f64>, dx: &[f64; 2]) -> [f64; 2] {
        let b = crate::lattice::reduce_basis(&self.basis_at_angle(Self::angle(value)));
        let inv = b.clone().try_inverse().expect("lattice basis is invertible");
        let coef = &inv * DVector::from_column_slice(dx);
        let frac = coef.map(|c| c - c.round());
        let r = b * frac;
        [r[0], r[1]]
    }
}

impl IntegrableSystem for SyntheticTwist {
    fn dim(&self) -> usize {
        4
    }
    fn k(&self) -> usize {
        2
    }
    fn n(&self) -> usize {
        2
    }

    fn integral_map(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[0], x[1]])
    }

    fn integral_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    }

    fn generators(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    }

    fn generator_jacobian(&self, _i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(4, 4)
    }

    fn in_regular_domain(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|v| v.is_finite()) && (x[0] * x[0] + x[1] * x[1]).sqrt() >= CRITICAL_EXCLUSION
    }

    fn critical_values(&self) -> Vec<DVector<f64>> {
        vec![DVector::zeros(2)]
    }

    fn displacement(&self, from: &DVector<f64>, to: &DVector<f64>) -> DVector<f64> {
        let value = DVector::from_vec(vec![from[0], from[1]]);
        let [a, b] = self.reduce(&value, &[to[2] - from[2], to[3] - from[3]]);
        DVector::from_vec(vec![to[0] - from[0], to[1] - from[1], a, b])
    }

    fn analytic_lattice(&self, value: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.basis_at_angle(Self::angle(value)))
    }

    fn seed_point(&self, value: &DVector<f64>) -> Option<PhasePoint> {
        Some(PhasePoint::from_slice(&[value[0], value[1], 0.0, 0.0]))
    }

    fn catalog_entry(&self) -> Option<&SystemCatalogEntry> {
        Some(&self.entry)
    }
}
