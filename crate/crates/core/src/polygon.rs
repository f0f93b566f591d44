//! Planar polygon predicates used to validate boundaries and check that
//! exported flux-surface cross sections are nested.

pub type Point = (f64, f64);

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Whether the closed polygon through `pts` (last vertex joined to the
/// first) has no self-intersections and non-zero area.
pub fn is_simple_polygon(pts: &[Point]) -> bool {
    let n = pts.len();
    if n < 3 || signed_area(pts).abs() < 1e-300 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        for j in (i + 1)..n {
            // adjacent edges share a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (pts[j], pts[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

pub fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        * 0.5
}

/// Even-odd point-in-polygon test.
pub fn contains(pts: &[Point], p: Point) -> bool {
    let n = pts.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Whether two closed polygons share any point on their edges.
pub fn polygons_intersect(p: &[Point], q: &[Point]) -> bool {
    let (n, m) = (p.len(), q.len());
    (0..n).any(|i| {
        let (a, b) = (p[i], p[(i + 1) % n]);
        (0..m).any(|j| segments_intersect(a, b, q[j], q[(j + 1) % m]))
    })
}

/// `inner` lies strictly inside `outer` without touching it.
pub fn is_nested_inside(inner: &[Point], outer: &[Point]) -> bool {
    !polygons_intersect(inner, outer) && inner.iter().all(|&p| contains(outer, p))
}
