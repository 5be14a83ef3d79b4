//! Plain 2D vector used for positions, velocities, and accelerations.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector in the same direction, or zero for the zero vector.
    pub fn unit_or_zero(self) -> Vec2 {
        let n = self.norm();
        if n == 0.0 {
            Vec2::ZERO
        } else {
            self / n
        }
    }

    /// Rescale so the magnitude does not exceed `max`, preserving direction.
    ///
    /// The bound holds exactly under the same `norm_sq` arithmetic: after the
    /// initial rescale the result can land one ulp above `max`, so it is
    /// shaved until the squared norm passes the comparison.
    pub fn clamp_norm(self, max: f64) -> Vec2 {
        let limit = max * max;
        if self.norm_sq() <= limit {
            return self;
        }
        let mut out = self * (max / self.norm());
        while out.norm_sq() > limit {
            let mut scale = max / out.norm();
            if scale >= 1.0 {
                scale = 1.0 - f64::EPSILON;
            }
            out = out * scale;
        }
        out
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        *self = *self + o;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_of_zero_is_zero() {
        assert_eq!(Vec2::ZERO.unit_or_zero(), Vec2::ZERO);
    }

    #[test]
    fn clamp_norm_leaves_short_vectors_untouched() {
        let v = Vec2::new(0.3, -0.4);
        assert_eq!(v.clamp_norm(1.0), v);
    }

    #[test]
    fn clamp_norm_axis_aligned_is_exact() {
        let v = Vec2::new(30.0, 0.0);
        let c = v.clamp_norm(3.0);
        assert_eq!(c, Vec2::new(3.0, 0.0));
    }

    proptest! {
        #[test]
        fn clamp_norm_bound_holds_exactly(
            x in -1.0e6_f64..1.0e6,
            y in -1.0e6_f64..1.0e6,
            max in 1.0e-3_f64..1.0e3,
        ) {
            let out = Vec2::new(x, y).clamp_norm(max);
            prop_assert!(out.norm_sq() <= max * max);
            prop_assert!(out.is_finite());
        }
    }
}
