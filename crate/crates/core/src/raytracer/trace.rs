use serde::{Deserialize, Serialize};

use super::{path_amplitudes, DevicePair, Path, PathSet, Point, Scene, Wall, SPEED_OF_LIGHT};
use crate::error::Result;
use crate::mathkit::Angle;

/// Endpoint tolerance of the occlusion test [m].
const OCCLUSION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub max_bounces: usize,
    pub include_los: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            max_bounces: 3,
            include_los: true,
        }
    }
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

fn mirror(p: Point, wall: &Wall) -> Point {
    let n = wall.normal();
    let s = dot(sub(p, wall.a), n);
    [p[0] - 2.0 * s * n[0], p[1] - 2.0 * s * n[1]]
}

/// Intersection parameters `(t, s)` of `p + t (q - p)` with `a + s (b - a)`.
fn intersect(p: Point, q: Point, wall: &Wall) -> Option<(f64, f64)> {
    let d = sub(q, p);
    let e = sub(wall.b, wall.a);
    let den = cross(d, e);
    if den.abs() <= 1e-15 * d[0].hypot(d[1]) * e[0].hypot(e[1]) {
        return None;
    }
    let ap = sub(wall.a, p);
    Some((cross(ap, e) / den, cross(ap, d) / den))
}

/// True when some wall cuts the open leg `p -> q` away from both the leg
/// endpoints and the wall endpoints.
fn leg_blocked(p: Point, q: Point, walls: &[Wall]) -> bool {
    let leg = dist(p, q);
    let tol_t = OCCLUSION_TOL / leg;
    walls.iter().any(|w| {
        let tol_s = OCCLUSION_TOL / w.length();
        match intersect(p, q, w) {
            Some((t, s)) => t > tol_t && t < 1.0 - tol_t && s > tol_s && s < 1.0 - tol_s,
            None => false,
        }
    })
}

fn azimuth(from: Point, to: Point) -> Angle {
    let d = sub(to, from);
    Angle::new(d[1].atan2(d[0]))
}

/// Validates one wall sequence by the image method and builds the path.
fn image_path(scene: &Scene, pair: DevicePair, seq: &[usize]) -> Option<Path> {
    let walls = scene.walls();
    let mut images = Vec::with_capacity(seq.len() + 1);
    images.push(pair.tx);
    for &w in seq {
        let last = *images.last().unwrap();
        images.push(mirror(last, &walls[w]));
    }

    // walk back from the receiver towards successive images
    let mut points = vec![Point::default(); seq.len()];
    let mut target = pair.rx;
    for i in (0..seq.len()).rev() {
        let wall = &walls[seq[i]];
        let (t, s) = intersect(target, images[i + 1], wall)?;
        if !(t > 0.0 && t < 1.0 && (0.0..=1.0).contains(&s)) {
            return None;
        }
        let r = [
            wall.a[0] + s * (wall.b[0] - wall.a[0]),
            wall.a[1] + s * (wall.b[1] - wall.a[1]),
        ];
        points[i] = r;
        target = r;
    }

    let mut vertices = Vec::with_capacity(seq.len() + 2);
    vertices.push(pair.tx);
    vertices.extend_from_slice(&points);
    vertices.push(pair.rx);
    if vertices.windows(2).any(|w| dist(w[0], w[1]) <= OCCLUSION_TOL) {
        return None;
    }
    if vertices.windows(2).any(|w| leg_blocked(w[0], w[1], walls)) {
        return None;
    }

    let mut incidence_cos = Vec::with_capacity(seq.len());
    for (i, &w) in seq.iter().enumerate() {
        let incoming = sub(vertices[i + 1], vertices[i]);
        let c = dot(incoming, walls[w].normal()).abs() / dist(vertices[i + 1], vertices[i]);
        if !(c > 0.0) {
            return None;
        }
        incidence_cos.push(c.min(1.0));
    }
    let total_length: f64 = vertices.windows(2).map(|w| dist(w[0], w[1])).sum();
    Some(Path {
        amplitude: Default::default(),
        delay: total_length / SPEED_OF_LIGHT,
        aod: azimuth(pair.tx, vertices[1]),
        aoa: azimuth(pair.rx, vertices[vertices.len() - 2]),
        bounce_points: points,
        wall_ids: seq.to_vec(),
        materials: seq.iter().map(|&w| walls[w].material).collect(),
        incidence_cos,
        total_length,
    })
}

fn enumerate(scene: &Scene, pair: DevicePair, max: usize, seq: &mut Vec<usize>, out: &mut Vec<Path>) {
    if seq.len() == max {
        return;
    }
    for w in 0..scene.walls().len() {
        if seq.last() == Some(&w) {
            continue;
        }
        seq.push(w);
        if let Some(p) = image_path(scene, pair, seq) {
            out.push(p);
        }
        enumerate(scene, pair, max, seq, out);
        seq.pop();
    }
}

/// Enumerates every specular path with at most `max_bounces` reflections,
/// plus the line-of-sight path when requested and unobstructed.
///
/// Amplitudes are evaluated with the scene's own materials at `carrier_hz`.
pub fn trace_paths(scene: &Scene, pair: DevicePair, opts: &TraceOptions, carrier_hz: f64) -> Result<PathSet> {
    let pair = DevicePair::new(pair.rx, pair.tx)?;
    let mut paths = Vec::new();
    if opts.include_los {
        if let Some(p) = image_path(scene, pair, &[]) {
            paths.push(p);
        }
    }
    enumerate(scene, pair, opts.max_bounces, &mut Vec::new(), &mut paths);
    paths.sort_by(|a, b| a.delay.total_cmp(&b.delay).then_with(|| a.wall_ids.cmp(&b.wall_ids)));

    let mut set = PathSet {
        pair,
        carrier_hz,
        paths,
    };
    let amps = path_amplitudes(&set, scene.materials(), carrier_hz)?;
    for (p, a) in set.paths.iter_mut().zip(amps.alpha) {
        p.amplitude = a;
    }
    Ok(set)
}
