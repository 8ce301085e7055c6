use crate::sim::Vec2;

const EDGE_EPS: f64 = 1e-12;

/// Twice the signed area (positive for counter-clockwise).
pub fn signed_area2(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum()
}

fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    let ab = b - a;
    let ap = p - a;
    let len = ab.norm();
    if len == 0.0 {
        return ap.norm() <= EDGE_EPS;
    }
    (ab.cross(ap) / len).abs() <= EDGE_EPS
        && ap.dot(ab) >= -EDGE_EPS * len
        && (p - b).dot(a - b) >= -EDGE_EPS * len
}

/// Ray-casting (even-odd) membership; points on the boundary count as
/// inside. Fewer than three vertices or zero area selects nothing.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 || signed_area2(poly).abs() <= EDGE_EPS {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Area centroid of a simple polygon; vertex mean when degenerate.
pub fn centroid(poly: &[Vec2]) -> Vec2 {
    let a2 = signed_area2(poly);
    if poly.is_empty() {
        return Vec2::ZERO;
    }
    if a2.abs() <= EDGE_EPS {
        let s = poly.iter().fold(Vec2::ZERO, |acc, p| acc + *p);
        return s * (1.0 / poly.len() as f64);
    }
    let n = poly.len();
    let mut c = Vec2::ZERO;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        c += (a + b) * a.cross(b);
    }
    c * (1.0 / (3.0 * a2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    fn unit_square() -> Vec<Vec2> {
        vec![v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)]
    }

    #[test]
    fn square_membership() {
        let sq = unit_square();
        assert!(point_in_polygon(v(0.5, 0.5), &sq));
        assert!(!point_in_polygon(v(2.0, 2.0), &sq));
        assert!(point_in_polygon(v(1.0, 0.5), &sq));
        assert!(point_in_polygon(v(0.0, 0.0), &sq));
        assert!(point_in_polygon(v(0.3, 1.0), &sq));
    }

    #[test]
    fn degenerate_selects_nothing() {
        let line = vec![v(0.0, 0.0), v(1.0, 1.0), v(2.0, 2.0)];
        assert!(!point_in_polygon(v(1.0, 1.0), &line));
        assert!(!point_in_polygon(v(0.5, 0.5), &[v(0.0, 0.0), v(1.0, 1.0)]));
    }

    #[test]
    fn centroid_of_square() {
        let c = centroid(&unit_square());
        assert!((c.x - 0.5).abs() < 1e-12 && (c.y - 0.5).abs() < 1e-12);
    }
}
