//! Turns a cleaned vector map into plot polygons and attaches recognized
//! digits to them.
//!
//! The map is read as a planar graph: nodes are the distinct category
//! endpoints, each category is one edge carrying its polyline geometry.
//! Faces come from the classic rotation-system walk: at every node the
//! outgoing half-edges are sorted by the angle of their first segment, and
//! each face follows "arrive, take the twin, step one slot clockwise".
//! Bounded faces come out counterclockwise (positive shoelace area); the
//! clockwise outer face of each connected component is discarded.
//!
//! Faces are simple rings. Containment is not subtracted: a ring nested
//! inside another is exported as its own polygon, and digit assignment
//! resolves the overlap by preferring the smallest containing face.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ocr::DigitDetection;
use crate::vecmodel::{Point, PointKey, UnionFind, VectorMap};

#[derive(Debug, Error)]
pub enum PolygonizeError {
    #[error("plot geojson: {0}")]
    BadGeoJson(String),
}

/// One bounded face of the map, ring closed (first point repeats at the
/// end) and counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub polygon_id: u32,
    pub ring: Vec<Point>,
    pub area: f64,
}

/// A face together with everything read out of it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRecord {
    pub polygon_id: u32,
    pub ring: Vec<Point>,
    /// Digits inside the face, in reading order. Not serialized; the
    /// exported property is `digit_count`.
    pub digits: Vec<DigitDetection>,
    pub plot_number: String,
    pub digit_count: usize,
    pub review_flag: bool,
}

/// Euler characteristic check of one connected component of the planar
/// graph; `faces` includes the component's own outer face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EulerAudit {
    pub nodes: usize,
    pub edges: usize,
    pub faces: usize,
}

impl EulerAudit {
    pub fn holds(&self) -> bool {
        // V - E + F = 2 for every connected planar graph.
        self.nodes as i64 - self.edges as i64 + self.faces as i64 == 2
    }
}

struct HalfEdge {
    cat_id: u32,
    forward: bool,
    from: usize,
    to: usize,
    angle: f64,
}

struct PlanarWalk {
    nodes: Vec<Point>,
    half: Vec<HalfEdge>,
    /// Every rotation-system cycle, each half-edge in exactly one.
    cycles: Vec<Vec<usize>>,
}

fn first_segment_angle(points: &[Point], forward: bool) -> f64 {
    if forward {
        let origin = points[0];
        for p in &points[1..] {
            if p.key() != origin.key() {
                return (p.y - origin.y).atan2(p.x - origin.x);
            }
        }
    } else {
        let origin = *points.last().expect("categories are never empty");
        for p in points.iter().rev().skip(1) {
            if p.key() != origin.key() {
                return (p.y - origin.y).atan2(p.x - origin.x);
            }
        }
    }
    0.0
}

fn walk_planar_graph(v: &VectorMap) -> PlanarWalk {
    let mut node_index: std::collections::HashMap<PointKey, usize> = std::collections::HashMap::new();
    let mut nodes: Vec<Point> = Vec::new();
    let mut half: Vec<HalfEdge> = Vec::new();

    let mut node_of = |p: Point, nodes: &mut Vec<Point>| -> usize {
        *node_index.entry(p.key()).or_insert_with(|| {
            nodes.push(p);
            nodes.len() - 1
        })
    };

    for cat in v.iter().filter(|c| !c.removed) {
        let from = node_of(cat.left(), &mut nodes);
        let to = node_of(cat.right(), &mut nodes);
        half.push(HalfEdge {
            cat_id: cat.id,
            forward: true,
            from,
            to,
            angle: first_segment_angle(&cat.points, true),
        });
        half.push(HalfEdge {
            cat_id: cat.id,
            forward: false,
            from: to,
            to: from,
            angle: first_segment_angle(&cat.points, false),
        });
    }

    // Rotation system: outgoing half-edges of each node in ascending angle
    // order, ties broken by category id and direction for determinism.
    let mut node_out: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, he) in half.iter().enumerate() {
        node_out[he.from].push(i);
    }
    for list in &mut node_out {
        list.sort_by(|&a, &b| {
            half[a]
                .angle
                .total_cmp(&half[b].angle)
                .then(half[a].cat_id.cmp(&half[b].cat_id))
                .then(half[a].forward.cmp(&half[b].forward))
        });
    }
    let mut slot_of = vec![0usize; half.len()];
    for list in &node_out {
        for (slot, &he) in list.iter().enumerate() {
            slot_of[he] = slot;
        }
    }

    let mut cycles = Vec::new();
    let mut visited = vec![false; half.len()];
    for start in 0..half.len() {
        if visited[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut h = start;
        loop {
            visited[h] = true;
            cycle.push(h);
            let twin = h ^ 1;
            let pivot = half[twin].from;
            let ring = &node_out[pivot];
            let slot = slot_of[twin];
            h = ring[(slot + ring.len() - 1) % ring.len()];
            if h == start {
                break;
            }
        }
        cycles.push(cycle);
    }

    PlanarWalk {
        nodes,
        half,
        cycles,
    }
}

/// Shoelace area of a closed ring; positive when counterclockwise in the
/// map's y-up frame.
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    0.5 * ring
        .windows(2)
        .map(|w| w[0].x * w[1].y - w[1].x * w[0].y)
        .sum::<f64>()
}

fn cycle_ring(v: &VectorMap, walk: &PlanarWalk, cycle: &[usize]) -> Vec<Point> {
    let mut ring = Vec::new();
    for &h in cycle {
        let he = &walk.half[h];
        let cat = v.get(he.cat_id).expect("half-edges come from live categories");
        if he.forward {
            ring.extend_from_slice(&cat.points[..cat.points.len() - 1]);
        } else {
            ring.extend(cat.points.iter().rev().take(cat.points.len() - 1));
        }
    }
    if let Some(&first) = ring.first() {
        ring.push(first);
    }
    ring
}

fn ring_min_key(ring: &[Point]) -> PointKey {
    ring.iter()
        .map(|p| p.key())
        .min()
        .expect("rings are never empty")
}

/// Extracts the bounded faces of a cleaned map as counterclockwise rings.
/// Polygon ids are assigned 1..n after sorting faces by their
/// lexicographically smallest vertex.
pub fn build_faces(v: &VectorMap) -> Vec<Face> {
    let walk = walk_planar_graph(v);
    let mut faces: Vec<(PointKey, Vec<Point>, f64)> = Vec::new();
    for cycle in &walk.cycles {
        let ring = cycle_ring(v, &walk, cycle);
        if ring.len() < 4 {
            continue;
        }
        let area = ring_signed_area(&ring);
        if area > 0.0 {
            faces.push((ring_min_key(&ring), ring, area));
        }
    }
    faces.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.len().cmp(&b.1.len()))
            .then(a.2.total_cmp(&b.2))
    });
    faces
        .into_iter()
        .enumerate()
        .map(|(i, (_, ring, area))| Face {
            polygon_id: (i + 1) as u32,
            ring,
            area,
        })
        .collect()
}

/// Checks V - E + F = 2 on every connected component of the planar graph,
/// counting each component's outer face. Components are reported in order
/// of their smallest node index.
pub fn euler_audit(v: &VectorMap) -> Vec<EulerAudit> {
    let walk = walk_planar_graph(v);
    if walk.nodes.is_empty() {
        return Vec::new();
    }
    let mut uf = UnionFind::new(walk.nodes.len());
    for he in &walk.half {
        uf.union(he.from, he.to);
    }
    let mut roots: Vec<usize> = (0..walk.nodes.len()).map(|n| uf.find(n)).collect();
    let mut order: Vec<usize> = {
        let mut seen = Vec::new();
        for &r in &roots {
            if !seen.contains(&r) {
                seen.push(r);
            }
        }
        seen
    };
    order.sort_by_key(|r| roots.iter().position(|x| x == r));

    let comp_of = |node: usize, order: &[usize], roots: &mut Vec<usize>| -> usize {
        let r = roots[node];
        order.iter().position(|&x| x == r).expect("root is registered")
    };

    let mut audits = vec![
        EulerAudit {
            nodes: 0,
            edges: 0,
            faces: 0,
        };
        order.len()
    ];
    for node in 0..walk.nodes.len() {
        audits[comp_of(node, &order, &mut roots)].nodes += 1;
    }
    for (i, he) in walk.half.iter().enumerate() {
        if i % 2 == 0 {
            audits[comp_of(he.from, &order, &mut roots)].edges += 1;
        }
    }
    for cycle in &walk.cycles {
        let node = walk.half[cycle[0]].from;
        audits[comp_of(node, &order, &mut roots)].faces += 1;
    }
    audits
}

/// Whether a point lies strictly inside a closed ring (even-odd rule).
pub fn ring_contains(p: Point, ring: &[Point]) -> bool {
    point_in_ring(p, ring)
}

/// Even-odd ray cast toward +x. The half-open test on y makes crossings
/// through vertices count once.
fn point_in_ring(p: Point, ring: &[Point]) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > p.y) != (b.y > p.y) {
            let t = (p.y - a.y) / (b.y - a.y);
            let x_cross = a.x + t * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

const ON_RING_EPS: f64 = 1e-9;

fn point_on_ring(p: Point, ring: &[Point]) -> bool {
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len_sq = dx * dx + dy * dy;
        if len_sq == 0.0 {
            if p.distance(a) <= ON_RING_EPS {
                return true;
            }
            continue;
        }
        let t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len_sq;
        if !(-ON_RING_EPS..=1.0 + ON_RING_EPS).contains(&t) {
            continue;
        }
        let proj = Point::new(a.x + t * dx, a.y + t * dy);
        if p.distance(proj) <= ON_RING_EPS {
            return true;
        }
    }
    false
}

/// Fixed nudge applied to a detection that lands exactly on a boundary.
/// The two components are in an irrational ratio, so the nudged point
/// cannot slide along any edge with rational slope.
const NUDGE: (f64, f64) = (1.0e-6, 1.618033988749895e-6);

/// Digits sorted into the faces that strictly contain them.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitAssignment {
    /// Parallel to the input faces.
    pub per_face: Vec<Vec<DigitDetection>>,
    /// Detections inside no face.
    pub outside: Vec<DigitDetection>,
}

/// Assigns each detection to the face containing it. A detection exactly on
/// a boundary is nudged by a fixed epsilon until it is strictly off every
/// edge, so the result is deterministic. When faces are nested the smallest
/// containing face wins.
pub fn assign_digits(faces: &[Face], detections: &[DigitDetection]) -> DigitAssignment {
    let mut per_face = vec![Vec::new(); faces.len()];
    let mut outside = Vec::new();
    for det in detections {
        let mut p = Point::new(det.position.0, det.position.1);
        let mut tries = 0;
        while tries < 4 && faces.iter().any(|f| point_on_ring(p, &f.ring)) {
            p = Point::new(p.x + NUDGE.0, p.y + NUDGE.1);
            tries += 1;
        }
        let mut hit: Option<usize> = None;
        for (i, face) in faces.iter().enumerate() {
            if point_in_ring(p, &face.ring) {
                hit = match hit {
                    Some(j) if faces[j].area <= face.area => Some(j),
                    _ => Some(i),
                };
            }
        }
        match hit {
            Some(i) => per_face[i].push(det.clone()),
            None => outside.push(det.clone()),
        }
    }
    DigitAssignment { per_face, outside }
}

/// Orders digits left to right (ties top to bottom by y, then by label) and
/// concatenates their labels.
pub fn assemble_plot_number(digits: &mut [DigitDetection]) -> String {
    digits.sort_by(|a, b| {
        a.position
            .0
            .total_cmp(&b.position.0)
            .then(a.position.1.total_cmp(&b.position.1))
            .then(a.label.cmp(&b.label))
    });
    digits
        .iter()
        .map(|d| char::from(b'0' + d.label))
        .collect()
}

/// Builds the final plot records: digits assigned, numbers assembled, and
/// faces with no digits or any low-confidence digit flagged for review.
pub fn plot_records(
    faces: Vec<Face>,
    detections: &[DigitDetection],
    review_margin: f64,
) -> (Vec<PlotRecord>, Vec<DigitDetection>) {
    let assignment = assign_digits(&faces, detections);
    let mut records = Vec::with_capacity(faces.len());
    for (face, mut digits) in faces.into_iter().zip(assignment.per_face) {
        let plot_number = assemble_plot_number(&mut digits);
        let review_flag = digits.is_empty() || digits.iter().any(|d| d.confidence < review_margin);
        records.push(PlotRecord {
            polygon_id: face.polygon_id,
            ring: face.ring,
            digit_count: digits.len(),
            digits,
            plot_number,
            review_flag,
        });
    }
    (records, assignment.outside)
}

#[derive(Serialize, Deserialize)]
struct GeoCollection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<GeoFeature>,
}

#[derive(Serialize, Deserialize)]
struct GeoFeature {
    #[serde(rename = "type")]
    kind: String,
    geometry: GeoPolygon,
    properties: GeoProperties,
}

#[derive(Serialize, Deserialize)]
struct GeoPolygon {
    #[serde(rename = "type")]
    kind: String,
    coordinates: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct GeoProperties {
    polygon_id: u32,
    plot_number: String,
    digit_count: usize,
    review_flag: bool,
}

/// Serializes plots as a GeoJSON FeatureCollection, one Polygon feature per
/// plot with a single exterior ring. Output is deterministic.
pub fn export_plots(records: &[PlotRecord]) -> String {
    let collection = GeoCollection {
        kind: "FeatureCollection".into(),
        features: records
            .iter()
            .map(|r| GeoFeature {
                kind: "Feature".into(),
                geometry: GeoPolygon {
                    kind: "Polygon".into(),
                    coordinates: vec![r.ring.iter().map(|p| [p.x, p.y]).collect()],
                },
                properties: GeoProperties {
                    polygon_id: r.polygon_id,
                    plot_number: r.plot_number.clone(),
                    digit_count: r.digit_count,
                    review_flag: r.review_flag,
                },
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&collection).expect("plots serialize infallibly");
    out.push('\n');
    out
}

/// Parses the GeoJSON written by [`export_plots`]. Individual digits are not
/// part of the format, so `digits` comes back empty while `digit_count`
/// carries the exported value.
pub fn parse_plots(text: &str) -> Result<Vec<PlotRecord>, PolygonizeError> {
    let collection: GeoCollection =
        serde_json::from_str(text).map_err(|e| PolygonizeError::BadGeoJson(e.to_string()))?;
    if collection.kind != "FeatureCollection" {
        return Err(PolygonizeError::BadGeoJson(format!(
            "expected FeatureCollection, found '{}'",
            collection.kind
        )));
    }
    let mut records = Vec::with_capacity(collection.features.len());
    for (i, feature) in collection.features.into_iter().enumerate() {
        if feature.kind != "Feature" {
            return Err(PolygonizeError::BadGeoJson(format!(
                "feature {i}: expected Feature, found '{}'",
                feature.kind
            )));
        }
        if feature.geometry.kind != "Polygon" {
            return Err(PolygonizeError::BadGeoJson(format!(
                "feature {i}: expected Polygon, found '{}'",
                feature.geometry.kind
            )));
        }
        if feature.geometry.coordinates.len() != 1 {
            return Err(PolygonizeError::BadGeoJson(format!(
                "feature {i}: expected exactly one ring, found {}",
                feature.geometry.coordinates.len()
            )));
        }
        let raw = &feature.geometry.coordinates[0];
        if raw.len() < 4 {
            return Err(PolygonizeError::BadGeoJson(format!(
                "feature {i}: ring has {} points, need at least 4",
                raw.len()
            )));
        }
        if raw.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PolygonizeError::BadGeoJson(format!(
                "feature {i}: non-finite coordinate"
            )));
        }
        let ring: Vec<Point> = raw.iter().map(|&[x, y]| Point::new(x, y)).collect();
        if ring[0].key() != ring[ring.len() - 1].key() {
            return Err(PolygonizeError::BadGeoJson(format!(
                "feature {i}: ring is not closed"
            )));
        }
        records.push(PlotRecord {
            polygon_id: feature.properties.polygon_id,
            ring,
            digits: Vec::new(),
            plot_number: feature.properties.plot_number,
            digit_count: feature.properties.digit_count,
            review_flag: feature.properties.review_flag,
        });
    }
    Ok(records)
}
