//! Planar polygon and segment primitives shared by the solvers and the
//! measurement code.

use crate::surface::Vec2;

/// Twice the signed area of the triangle `(a, b, c)`.
#[inline]
pub fn orient(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[inline]
pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Signed shoelace area of a closed polygon; positive for counterclockwise.
pub fn signed_area(points: &[Vec2]) -> f64 {
    let n = points.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += cross(&points[i], &points[(i + 1) % n]);
    }
    0.5 * acc
}

/// Euclidean distance from `p` to the segment `[a, b]`.
#[inline]
pub fn point_segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: &Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (&poly[i], &poly[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let x = pj.x + (p.y - pj.y) * (pi.x - pj.x) / (pi.y - pj.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segments_intersect(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: &Vec2, q: &Vec2, r: &Vec2, o: f64| {
        o == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

/// Uniform bucket grid over a set of segments.
pub struct SegmentGrid<'a> {
    points: &'a [Vec2],
    segments: Vec<(usize, usize)>,
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl<'a> SegmentGrid<'a> {
    /// Index over the polyline through `points`, closed when `closed` is set.
    pub fn polyline(points: &'a [Vec2], closed: bool) -> Self {
        let n = points.len();
        let count = if closed { n } else { n.saturating_sub(1) };
        let segments = (0..count).map(|i| (i, (i + 1) % n)).collect();
        Self::new(points, segments)
    }

    pub fn new(points: &'a [Vec2], segments: Vec<(usize, usize)>) -> Self {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut total_len = 0.0;
        for &(i, j) in &segments {
            for p in [&points[i], &points[j]] {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            total_len += (points[j] - points[i]).norm();
        }
        let m = segments.len().max(1);
        let extent = (hi - lo).max().max(1e-12);
        // O(m) cells, at least one average segment length wide
        let cell = (total_len / m as f64)
            .max(extent / (2.0 * (m as f64).sqrt()))
            .max(1e-12);
        let nx = (((hi.x - lo.x) / cell).floor() as usize + 1).max(1);
        let ny = (((hi.y - lo.y) / cell).floor() as usize + 1).max(1);
        let mut grid = SegmentGrid {
            points,
            segments,
            origin: lo,
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (k, &(i, j)) in grid.segments.iter().enumerate() {
            let (a, b) = (points[i], points[j]);
            let (ix0, iy0) = grid.cell_of(&a.inf(&b));
            let (ix1, iy1) = grid.cell_of(&a.sup(&b));
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    grid.buckets[iy * nx + ix].push(k as u32);
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: &Vec2) -> (usize, usize) {
        let fx = ((p.x - self.origin.x) / self.cell).floor();
        let fy = ((p.y - self.origin.y) / self.cell).floor();
        (
            (fx.max(0.0) as usize).min(self.nx - 1),
            (fy.max(0.0) as usize).min(self.ny - 1),
        )
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    fn segment(&self, k: usize) -> (&Vec2, &Vec2) {
        let (i, j) = self.segments[k];
        (&self.points[i], &self.points[j])
    }

    /// Distance from `p` to the nearest indexed segment, and that segment's index.
    pub fn nearest(&self, p: &Vec2) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        if self.segments.is_empty() {
            return best;
        }
        let (cx, cy) = self.cell_of(p);
        let box_gap = self.box_distance(p);
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            // every segment first seen in this ring is at least this far away
            let lower = box_gap.max((ring as f64 - 1.0).max(0.0) * self.cell);
            if best.0 < lower {
                break;
            }
            let x0 = cx as isize - ring as isize;
            let x1 = cx as isize + ring as isize;
            let y0 = cy as isize - ring as isize;
            let y1 = cy as isize + ring as isize;
            for iy in y0..=y1 {
                if iy < 0 || iy >= self.ny as isize {
                    continue;
                }
                for ix in x0..=x1 {
                    if ix < 0 || ix >= self.nx as isize {
                        continue;
                    }
                    let on_ring = iy == y0 || iy == y1 || ix == x0 || ix == x1;
                    if !on_ring {
                        continue;
                    }
                    for &k in &self.buckets[iy as usize * self.nx + ix as usize] {
                        let (a, b) = self.segment(k as usize);
                        let d = point_segment_distance(p, a, b);
                        if d < best.0 || (d == best.0 && (k as usize) < best.1) {
                            best = (d, k as usize);
                        }
                    }
                }
            }
        }
        best
    }

    fn box_distance(&self, p: &Vec2) -> f64 {
        let hi = self.origin + Vec2::new(self.nx as f64, self.ny as f64) * self.cell;
        let dx = (self.origin.x - p.x).max(0.0).max(p.x - hi.x);
        let dy = (self.origin.y - p.y).max(0.0).max(p.y - hi.y);
        (dx * dx + dy * dy).sqrt()
    }

    /// First pair of non-adjacent indexed segments that intersect, if any.
    pub fn find_crossing(&self) -> Option<(usize, usize)> {
        let mut found: Option<(usize, usize)> = None;
        for bucket in &self.buckets {
            for (u, &ka) in bucket.iter().enumerate() {
                for &kb in &bucket[u + 1..] {
                    let (ka, kb) = (ka as usize, kb as usize);
                    let (sa, sb) = (self.segments[ka], self.segments[kb]);
                    let shares = sa.0 == sb.0 || sa.0 == sb.1 || sa.1 == sb.0 || sa.1 == sb.1;
                    if shares {
                        continue;
                    }
                    let (a, b) = self.segment(ka);
                    let (c, d) = self.segment(kb);
                    if segments_intersect(a, b, c, d) {
                        let pair = (ka.min(kb), ka.max(kb));
                        if found.map_or(true, |f| pair < f) {
                            found = Some(pair);
                        }
                    }
                }
            }
        }
        found
    }
}

/// Whether the closed polygon through `points` is simple.
pub fn is_simple_polygon(points: &[Vec2]) -> bool {
    SegmentGrid::polyline(points, true).find_crossing().is_none()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize, r: f64) -> Vec<Vec2> {
        (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                Vec2::new(r * t.cos(), r * t.sin())
            })
            .collect()
    }

    #[test]
    fn area_and_orientation() {
        let sq = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert_eq!(signed_area(&sq), 1.0);
        let mut rev = sq.clone();
        rev.reverse();
        assert_eq!(signed_area(&rev), -1.0);
        assert!(point_in_polygon(&Vec2::new(0.5, 0.5), &sq));
        assert!(!point_in_polygon(&Vec2::new(1.5, 0.5), &sq));
    }

    #[test]
    fn simple_and_crossing_polygons() {
        assert!(is_simple_polygon(&circle(64, 1.0)));
        let bowtie = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(!is_simple_polygon(&bowtie));
    }

    #[test]
    fn grid_nearest_matches_brute_force() {
        let pts = circle(300, 1.0);
        let grid = SegmentGrid::polyline(&pts, true);
        for k in 0..200 {
            let t = k as f64 * 0.137;
            let r = 0.2 + 0.015 * k as f64;
            let p = Vec2::new(r * t.cos() + 0.1, r * t.sin());
            let brute = (0..pts.len())
                .map(|i| point_segment_distance(&p, &pts[i], &pts[(i + 1) % pts.len()]))
                .fold(f64::INFINITY, f64::min);
            let (d, _) = grid.nearest(&p);
            assert!((d - brute).abs() < 1e-14, "{d} vs {brute} at {p:?}");
        }
    }
}
