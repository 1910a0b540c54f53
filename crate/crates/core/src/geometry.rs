//! Dense parameter vectors and the bounded parameter domain.
//!
//! The domain is always a closed Euclidean ball, so projection is the
//! closed-form radial rescaling toward the center. A zero-radius ball is a
//! legal (single point) domain.

use std::fmt;
use std::ops::Index;

use crate::error::{check_dim, Error, Result};

/// Relative tolerance for geometric identities (membership, idempotence).
pub const GEOMETRY_RTOL: f64 = 1e-12;

/// A point in parameter space. All coordinates are finite.
#[derive(Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "coordinate {i} is not finite ({})",
                coords[i]
            )));
        }
        Ok(ParamVector(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    /// Skips the finiteness check; callers guarantee it by construction.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|x| x.is_finite()));
        ParamVector(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn scaled(&self, factor: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|x| x * factor).collect())
    }

    /// Arithmetic mean of a nonempty set of equal-length vectors.
    pub fn mean<'a, I>(points: I) -> Result<ParamVector>
    where
        I: IntoIterator<Item = &'a ParamVector>,
    {
        let mut iter = points.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::invalid("mean of an empty set of points"))?;
        let mut sum = first.0.clone();
        let mut count = 1usize;
        for p in iter {
            check_dim(sum.len(), p.dim())?;
            add_assign(&mut sum, &p.0);
            count += 1;
        }
        let inv = count as f64;
        sum.iter_mut().for_each(|x| *x /= inv);
        Ok(ParamVector(sum))
    }
}

impl fmt::Debug for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// The parameter space: a closed ball `{θ : ‖θ − center‖₂ ≤ radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDomain {
    center: ParamVector,
    radius: f64,
}

impl ParamDomain {
    pub fn ball(center: ParamVector, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::invalid(format!(
                "domain radius must be finite and nonnegative, got {radius}"
            )));
        }
        if center.dim() == 0 {
            return Err(Error::invalid("domain dimension must be positive"));
        }
        Ok(ParamDomain { center, radius })
    }

    pub fn unit_ball(dim: usize) -> Result<Self> {
        Self::ball(ParamVector::zeros(dim), 1.0)
    }

    pub fn center(&self) -> &ParamVector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Membership up to [`GEOMETRY_RTOL`].
    pub fn contains(&self, v: &ParamVector) -> bool {
        v.dim() == self.dim()
            && dist_sq_raw(&v.0, &self.center.0).sqrt() <= self.radius * (1.0 + GEOMETRY_RTOL)
    }

    pub(crate) fn project_in_place(&self, v: &mut [f64]) {
        let c = &self.center.0;
        let d = dist_sq_raw(v, c).sqrt();
        if d <= self.radius {
            return;
        }
        if self.radius == 0.0 {
            v.copy_from_slice(c);
            return;
        }
        let scale = self.radius / d;
        for (x, ci) in v.iter_mut().zip(c) {
            *x = ci + scale * (*x - ci);
        }
    }
}

/// Euclidean projection onto the domain ball.
pub fn project(v: &ParamVector, dom: &ParamDomain) -> Result<ParamVector> {
    check_dim(dom.dim(), v.dim())?;
    let mut out = v.0.clone();
    dom.project_in_place(&mut out);
    Ok(ParamVector(out))
}

/// Rescales `v` onto the ball of radius `bound` around the origin when it lies outside.
pub fn clip_norm(v: &ParamVector, bound: f64) -> Result<ParamVector> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::invalid(format!(
            "clip bound must be positive and finite, got {bound}"
        )));
    }
    let mut out = v.0.clone();
    clip_in_place(&mut out, bound);
    Ok(ParamVector(out))
}

pub fn dist_sq(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(dist_sq_raw(&a.0, &b.0))
}

// Slice kernels shared by the learners' hot loops.

pub(crate) fn clip_in_place(v: &mut [f64], bound: f64) {
    let n = norm(v);
    if n > bound {
        let s = bound / n;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist_sq_raw(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn add_assign(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}
