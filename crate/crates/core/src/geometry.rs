//! Closed convex sets, Euclidean projections and tangent-cone projections.
//!
//! Every projected vector field in the crate is built from two primitives on
//! [`ConvexSet`]: the Euclidean projection `proj_S(y)` and the tangent-cone
//! projection `Π_S(x, v) = proj_{T_S(x)}(v)`. The normal-cone component is the
//! Moreau complement `v - Π_S(x, v)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, GneError, Result};

/// Relative tolerance for accepting a point as a member of a set.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Relative tolerance for deciding that a bound is active.
pub const ACTIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexSet {
    FullSpace {
        dim: usize,
    },
    /// Componentwise bounds; infinite entries serialize as `null`.
    Box {
        #[serde(with = "bounds")]
        lower: Vec<f64>,
        #[serde(with = "bounds")]
        upper: Vec<f64>,
    },
    NonnegativeOrthant {
        dim: usize,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `{ y : normalᵀ y ≤ offset }`
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    Product {
        factors: Vec<ConvexSet>,
    },
}

mod bounds {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<Option<f64>>>()
            .serialize(s)
    }

    // Missing bounds stay NaN until `ConvexSet::normalized` assigns the side.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Option<f64>>::deserialize(d)?;
        Ok(raw.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

impl ConvexSet {
    pub fn full(dim: usize) -> Self {
        ConvexSet::FullSpace { dim }
    }

    pub fn orthant(dim: usize) -> Self {
        ConvexSet::NonnegativeOrthant { dim }
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = ConvexSet::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let set = ConvexSet::Ball { center, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let set = ConvexSet::Halfspace { normal, offset };
        set.validate()?;
        Ok(set)
    }

    /// Product of factors. Zero-dimensional factors are dropped.
    pub fn product(factors: Vec<ConvexSet>) -> Self {
        ConvexSet::Product {
            factors: factors.into_iter().filter(|f| f.dim() > 0).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::FullSpace { dim } | ConvexSet::NonnegativeOrthant { dim } => *dim,
            ConvexSet::Box { lower, .. } => lower.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Halfspace { normal, .. } => normal.len(),
            ConvexSet::Product { factors } => factors.iter().map(ConvexSet::dim).sum(),
        }
    }

    pub fn is_full_space(&self) -> bool {
        match self {
            ConvexSet::FullSpace { .. } => true,
            ConvexSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .all(|(l, u)| *l == f64::NEG_INFINITY && *u == f64::INFINITY),
            ConvexSet::Product { factors } => factors.iter().all(ConvexSet::is_full_space),
            _ => self.dim() == 0,
        }
    }

    /// Checks structural invariants. Sets read from config must go through
    /// [`ConvexSet::normalized`] first so that `null` bounds become infinite.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSet::FullSpace { .. } | ConvexSet::NonnegativeOrthant { .. } => Ok(()),
            ConvexSet::Box { lower, upper } => {
                check_len("box bounds", lower.len(), upper.len())?;
                for (j, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if l.is_nan() || u.is_nan() {
                        return Err(GneError::InvalidSet(format!(
                            "box bound {j} is undefined (normalize first)"
                        )));
                    }
                    if l > u {
                        return Err(GneError::InvalidSet(format!(
                            "box lower bound exceeds upper bound at {j}: {l} > {u}"
                        )));
                    }
                }
                Ok(())
            }
            ConvexSet::Ball { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
                    return Err(GneError::InvalidSet(format!(
                        "ball radius {radius} must be positive"
                    )));
                }
                Ok(())
            }
            ConvexSet::Halfspace { normal, offset } => {
                if norm(normal) == 0.0 || !offset.is_finite() {
                    return Err(GneError::InvalidSet(
                        "halfspace normal must be nonzero".into(),
                    ));
                }
                Ok(())
            }
            ConvexSet::Product { factors } => factors.iter().try_for_each(ConvexSet::validate),
        }
    }

    /// Rewrites deserialized `NaN` box bounds to ±∞ and validates.
    pub fn normalized(mut self) -> Result<Self> {
        self.fill_missing_bounds();
        self.validate()?;
        Ok(self)
    }

    fn fill_missing_bounds(&mut self) {
        match self {
            ConvexSet::Box { lower, upper } => {
                lower
                    .iter_mut()
                    .filter(|l| l.is_nan())
                    .for_each(|l| *l = f64::NEG_INFINITY);
                upper
                    .iter_mut()
                    .filter(|u| u.is_nan())
                    .for_each(|u| *u = f64::INFINITY);
            }
            ConvexSet::Product { factors } => {
                factors.iter_mut().for_each(ConvexSet::fill_missing_bounds)
            }
            _ => {}
        }
    }

    pub fn label(&self) -> String {
        match self {
            ConvexSet::FullSpace { dim } => format!("R^{dim}"),
            ConvexSet::Box { lower, .. } => format!("box in R^{}", lower.len()),
            ConvexSet::NonnegativeOrthant { dim } => format!("nonnegative orthant R^{dim}_+"),
            ConvexSet::Ball { center, radius } => {
                format!("ball of radius {radius} in R^{}", center.len())
            }
            ConvexSet::Halfspace { normal, .. } => format!("halfspace in R^{}", normal.len()),
            ConvexSet::Product { factors } => format!("product of {} sets", factors.len()),
        }
    }

    /// Componentwise bounding box; unbounded directions are infinite.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ConvexSet::Box { lower, upper } => (lower.clone(), upper.clone()),
            ConvexSet::NonnegativeOrthant { dim } => (vec![0.0; *dim], vec![f64::INFINITY; *dim]),
            ConvexSet::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            ConvexSet::Product { factors } => {
                let (mut lo, mut hi) = (Vec::new(), Vec::new());
                for f in factors {
                    let (l, h) = f.bounding_box();
                    lo.extend(l);
                    hi.extend(h);
                }
                (lo, hi)
            }
            _ => (
                vec![f64::NEG_INFINITY; self.dim()],
                vec![f64::INFINITY; self.dim()],
            ),
        }
    }

    /// Euclidean projection, in place. `y` must have the set's dimension.
    pub fn project_in_place(&self, y: &mut [f64]) {
        match self {
            ConvexSet::FullSpace { .. } => {}
            ConvexSet::Box { lower, upper } => {
                for ((yj, l), u) in y.iter_mut().zip(lower).zip(upper) {
                    *yj = yj.max(*l).min(*u);
                }
            }
            ConvexSet::NonnegativeOrthant { .. } => {
                y.iter_mut().for_each(|yj| *yj = yj.max(0.0));
            }
            ConvexSet::Ball { center, radius } => {
                let dist = y
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if dist > *radius {
                    let scale = radius / dist;
                    for (yj, c) in y.iter_mut().zip(center) {
                        *yj = c + (*yj - c) * scale;
                    }
                }
            }
            ConvexSet::Halfspace { normal, offset } => {
                let excess = dot(normal, y) - offset;
                if excess > 0.0 {
                    let nn = dot(normal, normal);
                    for (yj, a) in y.iter_mut().zip(normal) {
                        *yj -= excess / nn * a;
                    }
                }
            }
            ConvexSet::Product { factors } => {
                let mut offset = 0;
                for f in factors {
                    let d = f.dim();
                    f.project_in_place(&mut y[offset..offset + d]);
                    offset += d;
                }
            }
        }
    }

    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("projection", self.dim(), y.len())?;
        let mut out = y.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    pub fn distance(&self, y: &[f64]) -> Result<f64> {
        let p = self.project(y)?;
        Ok(p.iter()
            .zip(y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    /// Membership within `MEMBERSHIP_TOL · (1 + ‖y‖)`.
    pub fn contains(&self, y: &[f64]) -> bool {
        match self.distance(y) {
            Ok(d) => d <= MEMBERSHIP_TOL * (1.0 + norm(y)),
            Err(_) => false,
        }
    }

    /// Tangent-cone projection `Π_S(x, v)`.
    pub fn project_tangent(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_len("tangent-cone point", self.dim(), x.len())?;
        check_len("tangent-cone direction", self.dim(), v.len())?;
        let distance = self.distance(x)?;
        if distance > MEMBERSHIP_TOL * (1.0 + norm(x)) {
            return Err(GneError::NotInSet {
                set: self.label(),
                distance,
            });
        }
        let mut out = v.to_vec();
        self.tangent_in_place(x, &mut out);
        Ok(out)
    }

    /// Tangent-cone projection without the membership check.
    pub fn tangent_in_place(&self, x: &[f64], v: &mut [f64]) {
        match self {
            ConvexSet::FullSpace { .. } => {}
            ConvexSet::Box { lower, upper } => {
                for j in 0..v.len() {
                    if v[j] < 0.0 && at_lower(x[j], lower[j]) {
                        v[j] = 0.0;
                    } else if v[j] > 0.0 && at_upper(x[j], upper[j]) {
                        v[j] = 0.0;
                    }
                }
            }
            ConvexSet::NonnegativeOrthant { .. } => {
                for j in 0..v.len() {
                    if v[j] < 0.0 && at_lower(x[j], 0.0) {
                        v[j] = 0.0;
                    }
                }
            }
            ConvexSet::Ball { center, radius } => {
                let radial: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let r = norm(&radial);
                if r > 0.0 && r >= radius - ACTIVE_TOL * (1.0 + radius) {
                    let outward = dot(&radial, v) / r;
                    if outward > 0.0 {
                        for (vj, rj) in v.iter_mut().zip(&radial) {
                            *vj -= outward * rj / r;
                        }
                    }
                }
            }
            ConvexSet::Halfspace { normal, offset } => {
                let nn = dot(normal, normal);
                let slack = offset - dot(normal, x);
                if slack <= ACTIVE_TOL * (1.0 + offset.abs()) * nn.sqrt() {
                    let outward = dot(normal, v);
                    if outward > 0.0 {
                        for (vj, a) in v.iter_mut().zip(normal) {
                            *vj -= outward / nn * a;
                        }
                    }
                }
            }
            ConvexSet::Product { factors } => {
                let mut offset = 0;
                for f in factors {
                    let d = f.dim();
                    f.tangent_in_place(&x[offset..offset + d], &mut v[offset..offset + d]);
                    offset += d;
                }
            }
        }
    }

    /// Normal-cone component `v - Π_S(x, v)`.
    pub fn normal_component(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let t = self.project_tangent(x, v)?;
        Ok(v.iter().zip(&t).map(|(a, b)| a - b).collect())
    }
}

// A point pushed marginally past a bound by roundoff still counts as active.
fn at_lower(x: f64, bound: f64) -> bool {
    bound.is_finite() && x - bound <= ACTIVE_TOL * (1.0 + bound.abs())
}

fn at_upper(x: f64, bound: f64) -> bool {
    bound.is_finite() && bound - x <= ACTIVE_TOL * (1.0 + bound.abs())
}

pub fn project_euclidean(set: &ConvexSet, y: &[f64]) -> Result<Vec<f64>> {
    set.project(y)
}

pub fn project_tangent_cone(set: &ConvexSet, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    set.project_tangent(x, v)
}

pub fn normal_cone_component(set: &ConvexSet, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    set.normal_component(x, v)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> ConvexSet {
        ConvexSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn euclidean_projection_examples() {
        assert_eq!(unit_box().project(&[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(
            ConvexSet::orthant(3).project(&[-1.0, 2.0, -3.0]).unwrap(),
            vec![0.0, 2.0, 0.0]
        );
        let p = ConvexSet::ball(vec![0.0, 0.0], 1.0)
            .unwrap()
            .project(&[3.0, 4.0])
            .unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn projection_dimension_mismatch() {
        assert!(matches!(
            unit_box().project(&[1.0]),
            Err(GneError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tangent_cone_examples() {
        let b = unit_box();
        assert_eq!(
            b.project_tangent(&[0.5, 0.5], &[-3.0, 2.0]).unwrap(),
            vec![-3.0, 2.0]
        );
        assert_eq!(
            b.project_tangent(&[0.0, 0.5], &[-1.0, 1.0]).unwrap(),
            vec![0.0, 1.0]
        );
        let o = ConvexSet::orthant(2);
        assert_eq!(
            o.project_tangent(&[0.0, 1.0], &[-2.0, -3.0]).unwrap(),
            vec![0.0, -3.0]
        );
    }

    #[test]
    fn tangent_cone_rejects_outside_point() {
        let err = unit_box()
            .project_tangent(&[2.0, 0.5], &[1.0, 1.0])
            .unwrap_err();
        assert!(matches!(err, GneError::NotInSet { .. }));
    }

    #[test]
    fn tangent_cone_accepts_roundoff_violation() {
        assert!(unit_box()
            .project_tangent(&[1.0 + 1e-12, 0.5], &[1.0, 0.0])
            .is_ok());
    }

    #[test]
    fn normal_component_examples() {
        let b = unit_box();
        assert_eq!(
            b.normal_component(&[0.3, 0.6], &[5.0, -7.0]).unwrap(),
            vec![0.0, 0.0]
        );
        let o = ConvexSet::orthant(2);
        assert_eq!(
            o.normal_component(&[0.0, 1.0], &[-2.0, -3.0]).unwrap(),
            vec![-2.0, 0.0]
        );
    }

    #[test]
    fn ball_boundary_removes_outward_radial_part() {
        let b = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let t = b.project_tangent(&[1.0, 0.0], &[2.0, 3.0]).unwrap();
        assert_eq!(t, vec![0.0, 3.0]);
        let t = b.project_tangent(&[1.0, 0.0], &[-2.0, 3.0]).unwrap();
        assert_eq!(t, vec![-2.0, 3.0]);
    }

    #[test]
    fn halfspace_projection_and_tangent() {
        let h = ConvexSet::halfspace(vec![1.0, 1.0], 1.0).unwrap();
        let p = h.project(&[1.0, 1.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        let t = h.project_tangent(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((t[0] - 0.5).abs() < 1e-15 && (t[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn product_is_factorwise() {
        let p = ConvexSet::product(vec![ConvexSet::full(1), ConvexSet::orthant(1), unit_box()]);
        assert_eq!(p.dim(), 4);
        assert_eq!(
            p.project(&[-5.0, -5.0, 2.0, -1.0]).unwrap(),
            vec![-5.0, 0.0, 1.0, 0.0]
        );
        let t = p
            .project_tangent(&[-5.0, 0.0, 1.0, 0.0], &[-1.0, -1.0, 1.0, 1.0])
            .unwrap();
        assert_eq!(t, vec![-1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn invalid_sets_are_rejected() {
        assert!(ConvexSet::boxed(vec![1.0], vec![0.0]).is_err());
        assert!(ConvexSet::ball(vec![0.0], 0.0).is_err());
        assert!(ConvexSet::halfspace(vec![0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn serde_roundtrip_with_unbounded_box() {
        let b = ConvexSet::boxed(vec![f64::NEG_INFINITY, 0.1], vec![f64::INFINITY, 0.5]).unwrap();
        let text = serde_json::to_string(&b).unwrap();
        assert!(text.contains("null"));
        let back: ConvexSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back.normalized().unwrap(), b);
    }
}
