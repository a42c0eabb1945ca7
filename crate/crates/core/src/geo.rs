//! Planar geometry on WGS84 `[lon, lat]` rings.

use crate::error::{Error, Result};

/// Mean earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Open ring (closing vertex dropped).
fn open(ring: &[[f64; 2]]) -> &[[f64; 2]] {
    match ring {
        [first, .., last] if first == last => &ring[..ring.len() - 1],
        _ => ring,
    }
}

/// Checks that `ring` is closed, finite and has at least three distinct vertices.
pub fn check_ring(ring: &[[f64; 2]]) -> Result<()> {
    if ring.len() < 4 || ring.first() != ring.last() {
        return Err(Error::InvalidValue(
            "polygon must be a closed ring with at least 3 vertices".into(),
        ));
    }
    if ring.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidValue("polygon has non-finite coordinates".into()));
    }
    let mut distinct: Vec<[f64; 2]> = Vec::new();
    for p in open(ring) {
        if !distinct.contains(p) {
            distinct.push(*p);
        }
    }
    if distinct.len() < 3 {
        return Err(Error::InvalidValue("polygon has fewer than 3 distinct vertices".into()));
    }
    Ok(())
}

/// Open ring translated so its first vertex is the origin. Field-sized
/// rings far from (0, 0) lose most of their digits in the shoelace cross
/// products otherwise.
fn relative(ring: &[[f64; 2]]) -> ([f64; 2], Vec<[f64; 2]>) {
    let pts = open(ring);
    let o = pts.first().copied().unwrap_or([0.0, 0.0]);
    (o, pts.iter().map(|p| [p[0] - o[0], p[1] - o[1]]).collect())
}

/// Signed shoelace area in the coordinate plane (positive for counter-clockwise).
pub fn signed_area(ring: &[[f64; 2]]) -> f64 {
    let (_, pts) = relative(ring);
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = pts[i];
        let [x1, y1] = pts[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

/// Area-weighted centroid in the coordinate plane; falls back to the vertex
/// mean for degenerate (zero-area) rings.
pub fn centroid(ring: &[[f64; 2]]) -> [f64; 2] {
    let (o, pts) = relative(ring);
    let n = pts.len();
    let a = signed_area(ring);
    if n == 0 {
        return [0.0, 0.0];
    }
    if a.abs() < 1e-18 {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        return [o[0] + sx / n as f64, o[1] + sy / n as f64];
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let [x0, y0] = pts[i];
        let [x1, y1] = pts[(i + 1) % n];
        let cross = x0 * y1 - x1 * y0;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    [o[0] + cx / (6.0 * a), o[1] + cy / (6.0 * a)]
}

/// Projects onto a local equirectangular plane (metres) around the ring's mean latitude.
pub fn project_local(ring: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let pts = open(ring);
    let lat0 = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len().max(1) as f64;
    let kx = EARTH_RADIUS_M * lat0.to_radians().cos();
    pts.iter()
        .map(|p| [p[0].to_radians() * kx, p[1].to_radians() * EARTH_RADIUS_M])
        .collect()
}

/// Ground area of a WGS84 ring in square metres.
pub fn area_m2(ring: &[[f64; 2]]) -> f64 {
    signed_area(&project_local(ring)).abs()
}

pub fn area_ha(ring: &[[f64; 2]]) -> f64 {
    area_m2(ring) / 10_000.0
}

/// Even-odd point-in-polygon test.
pub fn contains(ring: &[[f64; 2]], p: [f64; 2]) -> bool {
    let pts = open(ring);
    let n = pts.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// True when two non-adjacent edges of the ring touch or cross.
pub fn is_self_intersecting(ring: &[[f64; 2]]) -> bool {
    let pts = open(ring);
    let n = pts.len();
    if n < 4 {
        return false;
    }
    for i in 0..n {
        let (a1, a2) = (pts[i], pts[(i + 1) % n]);
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (b1, b2) = (pts[j], pts[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return true;
            }
        }
    }
    false
}

/// Closes an open vertex list.
pub fn close_ring(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    if let (Some(first), Some(last)) = (pts.first().copied(), pts.last().copied()) {
        if first != last {
            pts.push(first);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: [[f64; 2]; 5] = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0], [0.0, 0.0]];

    #[test]
    fn square_area_and_centroid() {
        assert_eq!(signed_area(&SQUARE), 4.0);
        assert_eq!(centroid(&SQUARE), [1.0, 1.0]);
        let mut cw = SQUARE.to_vec();
        cw.reverse();
        assert_eq!(signed_area(&cw), -4.0);
        assert_eq!(centroid(&cw), [1.0, 1.0]);
    }

    #[test]
    fn bowtie_is_self_intersecting() {
        let bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        assert!(is_self_intersecting(&bowtie));
        assert!(!is_self_intersecting(&SQUARE));
    }

    #[test]
    fn ring_checks() {
        assert!(check_ring(&SQUARE).is_ok());
        assert!(check_ring(&SQUARE[..4]).is_err());
        assert!(check_ring(&[[0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [0.0, 0.0]]).is_err());
    }

    #[test]
    fn point_in_polygon() {
        assert!(contains(&SQUARE, [1.0, 1.0]));
        assert!(!contains(&SQUARE, [3.0, 1.0]));
    }

    #[test]
    fn hectare_scale_is_plausible() {
        // ~100 m × ~100 m near 49.4°N
        let dlat = 100.0 / EARTH_RADIUS_M * 180.0 / std::f64::consts::PI;
        let dlon = dlat / 49.4f64.to_radians().cos();
        let ring = close_ring(vec![[7.7, 49.4], [7.7 + dlon, 49.4], [7.7 + dlon, 49.4 + dlat], [7.7, 49.4 + dlat]]);
        assert!((area_ha(&ring) - 1.0).abs() < 1e-3);
    }
}
