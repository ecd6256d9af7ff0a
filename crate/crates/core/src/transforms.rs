//! Spatial transforms `g` acting on the argument of the nonlinearity, their
//! certificates for (A1), (A2) and (A2*), and the change-of-variables
//! lower bound for weighted `L^p` integrals.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Assumption, Error, Result};
use crate::frac_space::{weight_value, WeightParams};
use crate::quad::{integrate_box, QuadOptions};

type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A user map with its inverse and `|det J_{g⁻¹}|`.
#[derive(Clone)]
pub struct CustomMap {
    pub name: String,
    pub forward: MapFn,
    pub inverse: MapFn,
    pub inverse_jacobian_det: ScalarFn,
}

impl fmt::Debug for CustomMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomMap({})", self.name)
    }
}

impl CustomMap {
    /// `x ↦ A x + b` for an invertible square `A` (dimension 1 to 3).
    pub fn affine(matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let d = offset.len();
        if matrix.len() != d || matrix.iter().any(|row| row.len() != d) {
            return Err(Error::param(
                "matrix",
                "must be square and match the offset length",
            ));
        }
        let inv = invert(&matrix).ok_or_else(|| Error::param("matrix", "is singular"))?;
        let det = determinant(&matrix);
        let a = matrix.clone();
        let b = offset.clone();
        let b2 = offset;
        Ok(CustomMap {
            name: "affine".into(),
            forward: Arc::new(move |x| mat_vec(&a, x).iter().zip(&b).map(|(u, v)| u + v).collect()),
            inverse: Arc::new(move |y| {
                let z: Vec<f64> = y.iter().zip(&b2).map(|(u, v)| u - v).collect();
                mat_vec(&inv, &z)
            }),
            inverse_jacobian_det: Arc::new(move |_| 1.0 / det.abs()),
        })
    }
}

#[derive(Debug, Clone)]
pub enum TransformKind {
    Dilation { k: f64 },
    Rotation { matrix: Vec<Vec<f64>> },
    Shift { x0: Vec<f64> },
    Custom(CustomMap),
}

#[derive(Debug, Clone)]
pub struct SpaceTransform {
    pub kind: TransformKind,
    pub d: usize,
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(u, v)| u * v).sum())
        .collect()
}

fn determinant(a: &[Vec<f64>]) -> f64 {
    match a.len() {
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        3 => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
        _ => f64::NAN,
    }
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let det = determinant(a);
    if !(det.abs() > 1e-300) || n > 3 {
        return None;
    }
    let minor = |r: usize, c: usize| -> f64 {
        let m: Vec<Vec<f64>> = (0..n)
            .filter(|&i| i != r)
            .map(|i| (0..n).filter(|&j| j != c).map(|j| a[i][j]).collect())
            .collect();
        if m.is_empty() {
            1.0
        } else {
            determinant(&m)
        }
    };
    let mut inv = vec![vec![0.0; n]; n];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            *v = sign * minor(j, i) / det;
        }
    }
    Some(inv)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rotation by `angle` in the `(x₀, x₁)` plane of `ℝ^d`.
pub fn planar_rotation(d: usize, angle: f64) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; d]; d];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    if d >= 2 {
        let (s, c) = angle.sin_cos();
        m[0][0] = c;
        m[0][1] = -s;
        m[1][0] = s;
        m[1][1] = c;
    } else if angle.cos() < 0.0 {
        m[0][0] = -1.0;
    }
    m
}

impl SpaceTransform {
    pub fn dilation(d: usize, k: f64) -> Result<Self> {
        let t = SpaceTransform {
            kind: TransformKind::Dilation { k },
            d,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn rotation(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let t = SpaceTransform {
            d: matrix.len(),
            kind: TransformKind::Rotation { matrix },
        };
        t.validate()?;
        Ok(t)
    }

    pub fn identity(d: usize) -> Self {
        SpaceTransform {
            kind: TransformKind::Rotation {
                matrix: planar_rotation(d, 0.0),
            },
            d,
        }
    }

    pub fn shift(x0: Vec<f64>) -> Result<Self> {
        let t = SpaceTransform {
            d: x0.len(),
            kind: TransformKind::Shift { x0 },
        };
        t.validate()?;
        Ok(t)
    }

    pub fn custom(d: usize, map: CustomMap) -> Result<Self> {
        let t = SpaceTransform {
            kind: TransformKind::Custom(map),
            d,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::param("d", "dimension must be at least 1"));
        }
        match &self.kind {
            TransformKind::Dilation { k } => {
                if !(k.abs() > 1.0 && k.is_finite()) {
                    return Err(Error::param(
                        "k",
                        format!("dilation needs |k| > 1, got {k}"),
                    ));
                }
            }
            TransformKind::Rotation { matrix } => {
                if matrix.len() != self.d || matrix.iter().any(|r| r.len() != self.d) {
                    return Err(Error::param("matrix", "must be d x d"));
                }
                for i in 0..self.d {
                    for j in 0..self.d {
                        let dot: f64 = (0..self.d).map(|k| matrix[i][k] * matrix[j][k]).sum();
                        let want = if i == j { 1.0 } else { 0.0 };
                        if (dot - want).abs() > 1e-12 {
                            return Err(Error::param("matrix", "is not orthogonal (A Aᵀ != I)"));
                        }
                    }
                }
            }
            TransformKind::Shift { x0 } => {
                if x0.len() != self.d || x0.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param("x0", "must be a finite vector of length d"));
                }
            }
            TransformKind::Custom(map) => {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
                for _ in 0..64 {
                    let x: Vec<f64> = (0..self.d).map(|_| rng.gen_range(-4.0..4.0)).collect();
                    let back = (map.forward)(&(map.inverse)(&x));
                    let err = back
                        .iter()
                        .zip(&x)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if err > 1e-9 * (1.0 + norm(&x)) {
                        return Err(Error::param("custom", format!("g(g⁻¹(x)) != x at {x:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            TransformKind::Dilation { k } => x.iter().map(|v| k * v).collect(),
            TransformKind::Rotation { matrix } => mat_vec(matrix, x),
            TransformKind::Shift { x0 } => x.iter().zip(x0).map(|(a, b)| a - b).collect(),
            TransformKind::Custom(m) => (m.forward)(x),
        }
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            TransformKind::Dilation { k } => x.iter().map(|v| v / k).collect(),
            TransformKind::Rotation { matrix } => (0..self.d)
                .map(|j| (0..self.d).map(|i| matrix[i][j] * x[i]).sum())
                .collect(),
            TransformKind::Shift { x0 } => x.iter().zip(x0).map(|(a, b)| a + b).collect(),
            TransformKind::Custom(m) => (m.inverse)(x),
        }
    }

    /// `|det J_{g⁻¹}(x)|`.
    pub fn inverse_jacobian_det(&self, x: &[f64]) -> f64 {
        match &self.kind {
            TransformKind::Dilation { k } => k.abs().powi(-(self.d as i32)),
            TransformKind::Rotation { .. } | TransformKind::Shift { .. } => 1.0,
            TransformKind::Custom(m) => (m.inverse_jacobian_det)(x),
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            TransformKind::Dilation { .. } => "dilation",
            TransformKind::Rotation { .. } => "rotation",
            TransformKind::Shift { .. } => "shift",
            TransformKind::Custom(_) => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A2Star {
    pub c0: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformCertificate {
    /// Lower bound for `|det J_{g⁻¹}|`.
    pub c0: f64,
    pub a2_holds: bool,
    pub a2star: Option<A2Star>,
    /// Points at which the infima were attained (sampled certificates only).
    pub evidence: Vec<Vec<f64>>,
    /// False for sampled certificates of user maps.
    pub rigorous: bool,
}

/// Certificate for `transform`; user maps are falsified by sampling
/// `sample_budget` points of `[-box_half_width, box_half_width]^d`.
pub fn certify(
    transform: &SpaceTransform,
    sample_budget: usize,
    box_half_width: f64,
    seed: u64,
) -> Result<TransformCertificate> {
    transform.validate()?;
    let d = transform.d;
    match &transform.kind {
        TransformKind::Dilation { k } => Ok(TransformCertificate {
            c0: k.abs().powi(-(d as i32)),
            a2_holds: true,
            a2star: None,
            evidence: vec![],
            rigorous: true,
        }),
        TransformKind::Rotation { .. } => Ok(TransformCertificate {
            c0: 1.0,
            a2_holds: true,
            a2star: None,
            evidence: vec![],
            rigorous: true,
        }),
        TransformKind::Shift { x0 } => {
            let n = norm(x0);
            Ok(TransformCertificate {
                c0: 1.0,
                a2_holds: n == 0.0,
                a2star: Some(A2Star {
                    c0: 0.5,
                    rho: 2.0 * n,
                }),
                evidence: vec![],
                rigorous: true,
            })
        }
        TransformKind::Custom(_) => certify_sampled(transform, sample_budget, box_half_width, seed),
    }
}

fn certify_sampled(
    t: &SpaceTransform,
    budget: usize,
    half: f64,
    seed: u64,
) -> Result<TransformCertificate> {
    if budget == 0 || !(half > 0.0) {
        return Err(Error::param(
            "sample_budget",
            "needs a positive budget and box",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec<f64>> = (0..budget)
        .map(|_| (0..t.d).map(|_| rng.gen_range(-half..half)).collect())
        .collect();

    let mut c0 = f64::INFINITY;
    let mut c0_at = pts[0].clone();
    for x in &pts {
        let j = t.inverse_jacobian_det(x);
        if j < c0 {
            c0 = j;
            c0_at = x.clone();
        }
    }
    if !(c0 > 0.0) {
        return Err(Error::Assumption {
            assumption: Assumption::A1,
            witness: c0_at,
        });
    }

    let mut a2_witness = None;
    for x in &pts {
        if norm(&t.apply(x)) < norm(x) * (1.0 - 1e-12) {
            a2_witness = Some(x.clone());
            break;
        }
    }
    let (a2_holds, a2star) = match a2_witness {
        None => (true, None),
        Some(w) => {
            let rho = half / 4.0;
            let mut ratio = f64::INFINITY;
            let mut at = w.clone();
            for x in pts.iter().filter(|x| norm(x) >= rho) {
                let r = norm(&t.apply(x)) / norm(x);
                if r < ratio {
                    ratio = r;
                    at = x.clone();
                }
            }
            if !(ratio > 0.0) || !ratio.is_finite() {
                return Err(Error::Assumption {
                    assumption: Assumption::A2Star,
                    witness: at,
                });
            }
            (
                false,
                Some(A2Star {
                    c0: ratio.min(1.0),
                    rho,
                }),
            )
        }
    };
    Ok(TransformCertificate {
        c0,
        a2_holds,
        a2star,
        evidence: vec![c0_at],
        rigorous: false,
    })
}

fn bounding_box(t: &SpaceTransform, half: f64) -> (Vec<f64>, Vec<f64>) {
    // Images of the corners and of a coarse boundary sample under g⁻¹.
    let d = t.d;
    let m = 9usize;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let total = m.pow(d as u32);
    for idx in 0..total {
        let mut rem = idx;
        let x: Vec<f64> = (0..d)
            .map(|_| {
                let i = rem % m;
                rem /= m;
                -half + 2.0 * half * i as f64 / (m - 1) as f64
            })
            .collect();
        let y = t.inverse(&x);
        for k in 0..d {
            lo[k] = lo[k].min(y[k]);
            hi[k] = hi[k].max(y[k]);
        }
    }
    let pad: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.05 * (b - a)).collect();
    (
        lo.iter().zip(&pad).map(|(a, p)| a - p).collect(),
        hi.iter().zip(&pad).map(|(b, p)| b + p).collect(),
    )
}

/// `∫ |u(g(x))|^p Φ_R(x) dx` computed directly over the preimage of the support.
pub fn pullback_direct(
    u: &(dyn Fn(&[f64]) -> f64 + Sync),
    support_half_width: f64,
    transform: &SpaceTransform,
    weight: &WeightParams,
    p: f64,
    opts: &QuadOptions,
) -> Result<f64> {
    let (lo, hi) = bounding_box(transform, support_half_width);
    let r = integrate_box(
        |x| {
            let y = transform.apply(x);
            if y.iter().any(|v| v.abs() > support_half_width) {
                return 0.0;
            }
            u(&y).abs().powf(p) * weight_value(weight, x)
        },
        &lo,
        &hi,
        opts,
    )?;
    Ok(r.value)
}

/// Change-of-variables form of the pullback integral and its lower bound:
/// `lhs = ∫ |u|^p Φ_R(g⁻¹ x) |J_{g⁻¹}(x)| dx`, `rhs = c0 ∫ |u|^p Φ_R dx`.
/// The bound rests on `Φ_R(g⁻¹ x) ≥ Φ_R(x)`, which needs (A2).
pub fn pullback_capacity_lower_bound(
    u: &(dyn Fn(&[f64]) -> f64 + Sync),
    support_half_width: f64,
    transform: &SpaceTransform,
    certificate: &TransformCertificate,
    weight: &WeightParams,
    p: f64,
    opts: &QuadOptions,
) -> Result<(f64, f64)> {
    if !certificate.a2_holds {
        return Err(Error::Certificate(format!(
            "the {} transform is not certified for (A2); the weight monotonicity step does not apply",
            transform.label()
        )));
    }
    if !(certificate.c0 > 0.0) {
        return Err(Error::Certificate("c0 must be positive".into()));
    }
    if weight.d != transform.d {
        return Err(Error::param("d", "weight and transform dimensions differ"));
    }
    let d = transform.d;
    let lo = vec![-support_half_width; d];
    let hi = vec![support_half_width; d];
    let lhs = integrate_box(
        |x| {
            let up = u(x).abs().powf(p);
            if up == 0.0 {
                return 0.0;
            }
            up * weight_value(weight, &transform.inverse(x)) * transform.inverse_jacobian_det(x)
        },
        &lo,
        &hi,
        opts,
    )?
    .value;
    let base = integrate_box(
        |x| u(x).abs().powf(p) * weight_value(weight, x),
        &lo,
        &hi,
        opts,
    )?
    .value;
    Ok((lhs, certificate.c0 * base))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gauss(x: &[f64]) -> f64 {
        (-x.iter().map(|v| v * v).sum::<f64>()).exp()
    }

    #[test]
    fn dilation_certificate() {
        let t = SpaceTransform::dilation(1, 2.0).unwrap();
        let c = certify(&t, 0, 1.0, 0).unwrap();
        assert_eq!(c.c0, 0.5);
        assert!(c.a2_holds && c.rigorous);
        let t = SpaceTransform::dilation(3, -2.0).unwrap();
        assert_eq!(certify(&t, 0, 1.0, 0).unwrap().c0, 0.125);
        assert!(SpaceTransform::dilation(1, 0.5).is_err());
    }

    #[test]
    fn rotation_certificate_and_norm() {
        let t = SpaceTransform::rotation(planar_rotation(2, 0.7)).unwrap();
        let c = certify(&t, 0, 1.0, 0).unwrap();
        assert_eq!(c.c0, 1.0);
        let x = [0.3, -1.2];
        assert_relative_eq!(norm(&t.apply(&x)), norm(&x), epsilon = 1e-14);
        let back = t.inverse(&t.apply(&x));
        assert_relative_eq!(back[0], x[0], epsilon = 1e-14);
        assert!(SpaceTransform::rotation(vec![vec![1.0, 0.1], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn shift_certificate() {
        let t = SpaceTransform::shift(vec![3.0]).unwrap();
        let c = certify(&t, 0, 1.0, 0).unwrap();
        assert!(!c.a2_holds);
        assert_eq!(c.a2star, Some(A2Star { c0: 0.5, rho: 6.0 }));
    }

    #[test]
    fn custom_contraction_falsifies_a2star() {
        // g(x) = x/2 contracts everything; the sampled ratio stays 1/2 > 0 so
        // (A2*) is reported with that constant, (A2) is falsified.
        let m = CustomMap::affine(vec![vec![0.5]], vec![0.0]).unwrap();
        let t = SpaceTransform::custom(1, m).unwrap();
        let c = certify(&t, 500, 4.0, 7).unwrap();
        assert!(!c.a2_holds && !c.rigorous);
        assert_relative_eq!(c.a2star.unwrap().c0, 0.5, epsilon = 1e-12);

        let degenerate = CustomMap {
            name: "flat".into(),
            forward: Arc::new(|x| x.to_vec()),
            inverse: Arc::new(|x| x.to_vec()),
            inverse_jacobian_det: Arc::new(|x| if x[0] > 0.0 { 0.0 } else { 1.0 }),
        };
        let t = SpaceTransform::custom(1, degenerate).unwrap();
        match certify(&t, 100, 1.0, 1) {
            Err(Error::Assumption {
                assumption,
                witness,
            }) => {
                assert_eq!(assumption, Assumption::A1);
                assert!(witness[0] > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pullback_rotation_is_equality() {
        let t = SpaceTransform::rotation(planar_rotation(2, 0.4)).unwrap();
        let c = certify(&t, 0, 1.0, 0).unwrap();
        let w = WeightParams::new(1.5, 3.0, 2, 0.5).unwrap();
        let opts = QuadOptions::with_tol(1e-12, 1e-9);
        let (lhs, rhs) =
            pullback_capacity_lower_bound(&gauss, 6.0, &t, &c, &w, 2.0, &opts).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
    }

    #[test]
    fn pullback_dilation_inequality_and_self_consistency() {
        let t = SpaceTransform::dilation(1, 2.0).unwrap();
        let c = certify(&t, 0, 1.0, 0).unwrap();
        let w = WeightParams::new(1.0, 3.0, 1, 0.5).unwrap();
        let opts = QuadOptions::with_tol(1e-13, 1e-11);
        let (lhs, rhs) =
            pullback_capacity_lower_bound(&gauss, 7.0, &t, &c, &w, 2.0, &opts).unwrap();
        assert!(lhs >= rhs - 1e-8);
        let direct = pullback_direct(&gauss, 7.0, &t, &w, 2.0, &opts).unwrap();
        assert_relative_eq!(direct, lhs, max_relative = 1e-5);
    }

    #[test]
    fn pullback_zero_field() {
        let t = SpaceTransform::dilation(1, 3.0).unwrap();
        let c = certify(&t, 0, 1.0, 0).unwrap();
        let w = WeightParams::new(1.0, 2.0, 1, 0.5).unwrap();
        let (lhs, rhs) =
            pullback_capacity_lower_bound(&|_| 0.0, 2.0, &t, &c, &w, 2.0, &QuadOptions::default())
                .unwrap();
        assert_eq!((lhs, rhs), (0.0, 0.0));
    }

    #[test]
    fn pullback_refuses_shift() {
        let t = SpaceTransform::shift(vec![1.0]).unwrap();
        let c = certify(&t, 0, 1.0, 0).unwrap();
        let w = WeightParams::new(1.0, 2.0, 1, 0.5).unwrap();
        let r =
            pullback_capacity_lower_bound(&gauss, 2.0, &t, &c, &w, 2.0, &QuadOptions::default());
        assert!(matches!(r, Err(Error::Certificate(_))));
    }
}
