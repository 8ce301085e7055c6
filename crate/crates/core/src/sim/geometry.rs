//! Planar geometry shared by the simulation, the formation planner and team
//! selection.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Point or free vector in the arena plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 1e-12).then(|| Vec2::new(self.x / n, self.y / n))
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
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
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = theta - two_pi * ((theta + PI) / two_pi).floor();
    if a <= -PI {
        a += two_pi;
    }
    if a > PI {
        a -= two_pi;
    }
    a
}

/// Signed smallest rotation taking `from` onto `to`, in `(-pi, pi]`.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    normalize_angle(to - from)
}

/// Oriented rectangle: center, heading and half extents along its local axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub center: Vec2,
    pub theta: f64,
    pub half: Vec2,
}

/// Result of a disc-versus-rectangle query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectContact {
    /// Distance from the disc center to the rectangle boundary (0 inside).
    pub center_distance: f64,
    /// Unit vector from the rectangle toward the disc center.
    pub normal: Vec2,
    /// How deep the disc reaches into the rectangle (negative when apart).
    pub penetration: f64,
}

impl Rect {
    pub fn new(center: Vec2, theta: f64, half: Vec2) -> Self {
        Self {
            center,
            theta,
            half,
        }
    }

    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.center).rotate(-self.theta)
    }

    pub fn to_world(&self, p: Vec2) -> Vec2 {
        self.center + p.rotate(self.theta)
    }

    pub fn inflated(&self, margin: f64) -> Rect {
        Rect {
            half: Vec2::new(self.half.x + margin, self.half.y + margin),
            ..*self
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= self.half.x && l.y.abs() <= self.half.y
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let (hx, hy) = (self.half.x, self.half.y);
        [
            self.to_world(Vec2::new(hx, hy)),
            self.to_world(Vec2::new(-hx, hy)),
            self.to_world(Vec2::new(-hx, -hy)),
            self.to_world(Vec2::new(hx, -hy)),
        ]
    }

    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let l = self.to_local(p);
        self.to_world(Vec2::new(
            l.x.clamp(-self.half.x, self.half.x),
            l.y.clamp(-self.half.y, self.half.y),
        ))
    }

    /// Euclidean distance from `p` to the rectangle (zero inside or on it).
    pub fn distance(&self, p: Vec2) -> f64 {
        let l = self.to_local(p);
        let dx = (l.x.abs() - self.half.x).max(0.0);
        let dy = (l.y.abs() - self.half.y).max(0.0);
        dx.hypot(dy)
    }

    /// Disc of `radius` centered at `p` against this rectangle.
    pub fn disc_contact(&self, p: Vec2, radius: f64) -> RectContact {
        let l = self.to_local(p);
        let dx = l.x.abs() - self.half.x;
        let dy = l.y.abs() - self.half.y;
        if dx > 0.0 || dy > 0.0 {
            let q = Vec2::new(dx.max(0.0) * l.x.signum(), dy.max(0.0) * l.y.signum());
            let d = q.norm();
            RectContact {
                center_distance: d,
                normal: q.rotate(self.theta) * (1.0 / d),
                penetration: radius - d,
            }
        } else {
            // Inside: leave through the nearest face.
            let local_n = if dx >= dy {
                Vec2::new(if l.x >= 0.0 { 1.0 } else { -1.0 }, 0.0)
            } else {
                Vec2::new(0.0, if l.y >= 0.0 { 1.0 } else { -1.0 })
            };
            RectContact {
                center_distance: 0.0,
                normal: local_n.rotate(self.theta),
                penetration: radius - dx.max(dy),
            }
        }
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn aabb(&self) -> (Vec2, Vec2) {
        let c = self.corners();
        let mut lo = c[0];
        let mut hi = c[0];
        for p in &c[1..] {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    /// True when the open segment `a -> b` stays out of the rectangle interior.
    pub fn segment_clear(&self, a: Vec2, b: Vec2) -> bool {
        const EPS: f64 = 1e-9;
        let la = self.to_local(a);
        let lb = self.to_local(b);
        let d = lb - la;
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        let hx = self.half.x - EPS;
        let hy = self.half.y - EPS;
        if hx <= 0.0 || hy <= 0.0 {
            return true;
        }
        for (p, q) in [
            (-d.x, la.x + hx),
            (d.x, hx - la.x),
            (-d.y, la.y + hy),
            (d.y, hy - la.y),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return true;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return true;
                }
            }
        }
        (t1 - t0) * d.norm() <= EPS
    }

    /// First waypoint of the shortest path from `from` to `to` that goes
    /// around this rectangle. Returns `to` when the straight segment is clear.
    pub fn detour(&self, from: Vec2, to: Vec2) -> Vec2 {
        if self.contains(from) {
            // Leave through the nearest face first.
            let l = self.to_local(from);
            let sx = if l.x >= 0.0 { 1.0 } else { -1.0 };
            let sy = if l.y >= 0.0 { 1.0 } else { -1.0 };
            let out = if self.half.x - l.x.abs() <= self.half.y - l.y.abs() {
                Vec2::new(sx * (self.half.x + 1e-6), l.y)
            } else {
                Vec2::new(l.x, sy * (self.half.y + 1e-6))
            };
            return self.to_world(out);
        }
        if self.segment_clear(from, to) {
            return to;
        }
        let corners = self.corners();
        let mut best: Option<(f64, Vec2)> = None;
        let mut consider = |len: f64, first: Vec2| {
            if best.is_none_or(|(b, _)| len < b - 1e-12) {
                best = Some((len, first));
            }
        };
        for (i, &c) in corners.iter().enumerate() {
            if self.segment_clear(from, c) {
                if self.segment_clear(c, to) {
                    consider(from.distance(c) + c.distance(to), c);
                }
                for j in [(i + 1) % 4, (i + 3) % 4] {
                    let c2 = corners[j];
                    if self.segment_clear(c2, to) {
                        consider(from.distance(c) + c.distance(c2) + c2.distance(to), c);
                    }
                }
            }
        }
        best.map_or(to, |(_, w)| w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-PI / 2.0 - 4.0 * PI) + PI / 2.0).abs() < 1e-12);
        for k in -50..50 {
            let a = normalize_angle(k as f64 * 0.37);
            assert!(a > -PI && a <= PI);
        }
    }

    #[test]
    fn rect_distance_and_contact() {
        let r = Rect::new(Vec2::new(0.0, 0.0), 0.0, Vec2::new(0.1, 0.1));
        assert_eq!(r.distance(Vec2::new(0.1, 0.0)), 0.0);
        assert!((r.distance(Vec2::new(0.4, 0.0)) - 0.3).abs() < 1e-12);
        assert!((r.distance(Vec2::new(0.4, 0.5)) - 0.5).abs() < 1e-12);
        let c = r.disc_contact(Vec2::new(0.15, 0.0), 0.07);
        assert!((c.penetration - 0.02).abs() < 1e-12);
        assert!((c.normal.x - 1.0).abs() < 1e-12);
        let inside = r.disc_contact(Vec2::new(0.0, 0.09), 0.07);
        assert!((inside.normal.y - 1.0).abs() < 1e-12);
        assert!((inside.penetration - 0.08).abs() < 1e-12);
    }

    #[test]
    fn segment_clearance() {
        let r = Rect::new(Vec2::ZERO, 0.3, Vec2::new(0.2, 0.1));
        assert!(!r.segment_clear(Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)));
        assert!(r.segment_clear(Vec2::new(-1.0, 1.0), Vec2::new(1.0, 1.0)));
        let c = r.corners();
        // Running along an edge is allowed.
        assert!(r.segment_clear(c[0], c[1]));
    }

    #[test]
    fn detour_goes_around() {
        let r = Rect::new(Vec2::ZERO, 0.0, Vec2::new(0.2, 0.2));
        let from = Vec2::new(-1.0, 0.05);
        let to = Vec2::new(1.0, 0.0);
        let w = r.detour(from, to);
        assert!(r.segment_clear(from, w));
        assert!((w.x + 0.2).abs() < 1e-9 && (w.y - 0.2).abs() < 1e-9);
        assert_eq!(
            r.detour(Vec2::new(-1.0, 1.0), Vec2::new(1.0, 1.0)),
            Vec2::new(1.0, 1.0)
        );
    }
}
