//! Polyline distances with a uniform-grid segment index.

use crate::charts_flows::PlanePoint;
use crate::model::point_segment_distance;

/// Segments of a polyline bucketed on a uniform grid.
pub struct SegmentIndex<'a> {
    pts: &'a [PlanePoint],
    min: (f64, f64),
    cell: f64,
    nx: i64,
    ny: i64,
    cells: Vec<Vec<u32>>,
}

impl<'a> SegmentIndex<'a> {
    pub fn new(pts: &'a [PlanePoint]) -> Self {
        assert!(!pts.is_empty(), "empty polyline");
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-300);
        let per_side = ((pts.len() as f64).sqrt().ceil() as i64).clamp(1, 2048);
        let cell = span / per_side as f64 * (1.0 + 1e-12);
        let nx = (((x1 - x0) / cell).floor() as i64 + 1).max(1);
        let ny = (((y1 - y0) / cell).floor() as i64 + 1).max(1);
        let mut idx = Self {
            pts,
            min: (x0, y0),
            cell,
            nx,
            ny,
            cells: vec![Vec::new(); (nx * ny) as usize],
        };
        let nseg = pts.len().saturating_sub(1).max(1);
        for s in 0..nseg {
            let a = pts[s];
            let b = pts[(s + 1).min(pts.len() - 1)];
            let (ci0, cj0) = idx.cell_of(PlanePoint::new(a.x.min(b.x), a.y.min(b.y)));
            let (ci1, cj1) = idx.cell_of(PlanePoint::new(a.x.max(b.x), a.y.max(b.y)));
            for i in ci0.max(0)..=ci1.min(nx - 1) {
                for j in cj0.max(0)..=cj1.min(ny - 1) {
                    idx.cells[(i * ny + j) as usize].push(s as u32);
                }
            }
        }
        idx
    }

    fn cell_of(&self, p: PlanePoint) -> (i64, i64) {
        (
            ((p.x - self.min.0) / self.cell).floor() as i64,
            ((p.y - self.min.1) / self.cell).floor() as i64,
        )
    }

    fn segment_distance(&self, p: PlanePoint, s: u32) -> f64 {
        let s = s as usize;
        let a = self.pts[s];
        let b = self.pts[(s + 1).min(self.pts.len() - 1)];
        point_segment_distance(p, a, b)
    }

    /// Distance from `p` to the polyline.
    pub fn distance(&self, p: PlanePoint) -> f64 {
        let (ci, cj) = self.cell_of(p);
        let reach = (ci.abs() + self.nx).max(cj.abs() + self.ny) + 1;
        // Rings that miss the grid entirely hold nothing.
        let start = 0.max(-ci).max(ci - (self.nx - 1)).max(-cj).max(cj - (self.ny - 1));
        let mut best = f64::INFINITY;
        let scan = |i: i64, j: i64, best: &mut f64| {
            for &s in &self.cells[(i * self.ny + j) as usize] {
                *best = best.min(self.segment_distance(p, s));
            }
        };
        for r in start..=reach {
            for i in (ci - r).max(0)..=(ci + r).min(self.nx - 1) {
                if i == ci - r || i == ci + r {
                    for j in (cj - r).max(0)..=(cj + r).min(self.ny - 1) {
                        scan(i, j, &mut best);
                    }
                } else {
                    for j in [cj - r, cj + r] {
                        if j >= 0 && j < self.ny {
                            scan(i, j, &mut best);
                        }
                    }
                }
            }
            if best <= r as f64 * self.cell {
                break;
            }
        }
        best
    }

    /// Candidate segment indices near segment `s`.
    fn neighbors(&self, s: usize) -> Vec<u32> {
        let a = self.pts[s];
        let b = self.pts[s + 1];
        let (ci0, cj0) = self.cell_of(PlanePoint::new(a.x.min(b.x), a.y.min(b.y)));
        let (ci1, cj1) = self.cell_of(PlanePoint::new(a.x.max(b.x), a.y.max(b.y)));
        let mut out = Vec::new();
        for i in ci0.max(0)..=ci1.min(self.nx - 1) {
            for j in cj0.max(0)..=cj1.min(self.ny - 1) {
                out.extend_from_slice(&self.cells[(i * self.ny + j) as usize]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// `sup_{a in A} d(a, B)` over the vertices of `A`.
pub fn directed_hausdorff(a: &[PlanePoint], b: &[PlanePoint]) -> f64 {
    let idx = SegmentIndex::new(b);
    a.iter().map(|&p| idx.distance(p)).fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance of two polylines.
pub fn hausdorff(a: &[PlanePoint], b: &[PlanePoint]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

fn orient(a: PlanePoint, b: PlanePoint, c: PlanePoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(a: PlanePoint, b: PlanePoint, c: PlanePoint, d: PlanePoint) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Number of proper crossings between non-adjacent segments.
pub fn self_intersections(poly: &[PlanePoint]) -> usize {
    if poly.len() < 4 {
        return 0;
    }
    let idx = SegmentIndex::new(poly);
    let nseg = poly.len() - 1;
    let mut count = 0;
    for s in 0..nseg {
        for t in idx.neighbors(s) {
            let t = t as usize;
            if t <= s + 1 || t >= nseg {
                continue;
            }
            if segments_cross(poly[s], poly[s + 1], poly[t], poly[t + 1]) {
                count += 1;
            }
        }
    }
    count
}
