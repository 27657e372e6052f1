//! Core vector data model: polyline categories keyed by id, the endpoint
//! (junction) index, the skeleton tracer, endpoint snapping and dangle
//! pruning, and a bit-stable reader/writer for the ASCII vector format.
//!
//! Map coordinates follow the GIS convention: x grows right, y grows up,
//! and a skeleton pixel at `(row, col)` maps to the point
//! `(col + 0.5, (height - 1 - row) + 0.5)`, which is why coordinates in
//! vector files end in .5.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::raster::BinaryRaster;
use crate::skeleton::neighbor_count;

/// A 2D point in map coordinates (fractional pixels, y up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    /// Coordinates must be finite; NaN or infinity is a caller bug.
    pub fn new(x: f64, y: f64) -> Self {
        debug_assert!(x.is_finite() && y.is_finite(), "non-finite point ({x}, {y})");
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }

    pub fn key(self) -> PointKey {
        PointKey::from_point(self)
    }
}

/// Total-order key for exact point identity in maps and sets.
///
/// Each coordinate is mapped to a `u64` whose unsigned order matches the
/// numeric order of the doubles (sign bit flipped for positives, all bits
/// flipped for negatives); -0.0 is normalized to 0.0 first. Two points get
/// the same key exactly when they are numerically equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PointKey(u64, u64);

fn order_bits(v: f64) -> u64 {
    let v = if v == 0.0 { 0.0 } else { v };
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b ^ (1u64 << 63)
    }
}

impl PointKey {
    pub fn from_point(p: Point) -> Self {
        PointKey(order_bits(p.x), order_bits(p.y))
    }
}

/// A polyline between two junctions of the boundary network. The first
/// point is the left endpoint, the last the right endpoint; a closed loop
/// has both equal. `removed` is a work flag used by the cleanup passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Category {
    pub id: u32,
    pub points: Vec<Point>,
    pub removed: bool,
}

impl Category {
    /// Ids start at 1 and polylines have at least two points; both are
    /// structural invariants, so violations are caller bugs.
    pub fn new(id: u32, points: Vec<Point>) -> Self {
        debug_assert!(id >= 1, "category ids start at 1");
        debug_assert!(points.len() >= 2, "category needs at least 2 points");
        Category {
            id,
            points,
            removed: false,
        }
    }

    pub fn left(&self) -> Point {
        *self.points.first().expect("category is never empty")
    }

    pub fn right(&self) -> Point {
        *self.points.last().expect("category is never empty")
    }

    pub fn is_loop(&self) -> bool {
        self.left().key() == self.right().key()
    }

    /// Polyline length: sum of segment lengths.
    pub fn arc_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].distance(w[1]))
            .sum()
    }
}

/// A set of categories with unique ids, iterated in ascending id order.
///
/// The junction index (endpoint point -> ids of categories ending there) is
/// derived from the categories on demand, so it can never drift out of sync
/// with them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorMap {
    categories: BTreeMap<u32, Category>,
}

impl VectorMap {
    pub fn new() -> Self {
        VectorMap::default()
    }

    pub fn from_categories(cats: impl IntoIterator<Item = Category>) -> Self {
        let mut map = VectorMap::new();
        for c in cats {
            map.insert(c);
        }
        map
    }

    /// Inserting a duplicate id is a caller bug.
    pub fn insert(&mut self, cat: Category) {
        let id = cat.id;
        let prev = self.categories.insert(id, cat);
        assert!(prev.is_none(), "duplicate category id {id}");
    }

    pub fn get(&self, id: u32) -> Option<&Category> {
        self.categories.get(&id)
    }

    pub fn get_mut(&mut self, id: u32) -> Option<&mut Category> {
        self.categories.get_mut(&id)
    }

    pub fn remove(&mut self, id: u32) -> Option<Category> {
        self.categories.remove(&id)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &Category> {
        self.categories.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Category> {
        self.categories.values_mut()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.categories.keys().copied().collect()
    }

    pub fn max_id(&self) -> u32 {
        self.categories.keys().next_back().copied().unwrap_or(0)
    }

    /// Drops categories whose `removed` flag is set; returns how many went.
    pub fn purge_removed(&mut self) -> usize {
        let before = self.categories.len();
        self.categories.retain(|_, c| !c.removed);
        before - self.categories.len()
    }

    /// Endpoint index: for every live category, its id appears under its
    /// left and right endpoint (twice under the same point for a loop).
    /// Ids within a bucket come out ascending.
    pub fn junction_index(&self) -> BTreeMap<PointKey, Vec<u32>> {
        let mut index: BTreeMap<PointKey, Vec<u32>> = BTreeMap::new();
        for cat in self.iter().filter(|c| !c.removed) {
            index.entry(cat.left().key()).or_default().push(cat.id);
            index.entry(cat.right().key()).or_default().push(cat.id);
        }
        index
    }

    pub fn total_arc_length(&self) -> f64 {
        self.iter().filter(|c| !c.removed).map(Category::arc_length).sum()
    }
}

/// Minimal union-find with path halving, used for clustering and
/// graph-component counting.
#[derive(Debug)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Number of connected components of the category graph, where two live
/// categories are adjacent when they share an endpoint point exactly.
pub fn category_graph_components(v: &VectorMap) -> usize {
    let ids: Vec<u32> = v.iter().filter(|c| !c.removed).map(|c| c.id).collect();
    if ids.is_empty() {
        return 0;
    }
    let slot: HashMap<u32, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut uf = UnionFind::new(ids.len());
    for bucket in v.junction_index().values() {
        for pair in bucket.windows(2) {
            uf.union(slot[&pair[0]], slot[&pair[1]]);
        }
    }
    let roots: HashSet<usize> = (0..ids.len()).map(|i| uf.find(i)).collect();
    roots.len()
}

/// Converts a raster pixel to its map-coordinate center.
pub fn pixel_to_map(row: u32, col: u32, height: u32) -> Point {
    debug_assert!(row < height);
    Point::new(col as f64 + 0.5, (height - 1 - row) as f64 + 0.5)
}

/// Inverse of [`pixel_to_map`], rounding to the nearest pixel. The result
/// can fall outside the raster; callers clamp or skip as appropriate.
pub fn map_to_pixel(p: Point, height: u32) -> (i64, i64) {
    let col = (p.x - 0.5).round() as i64;
    let row = height as i64 - 1 - (p.y - 0.5).round() as i64;
    (row, col)
}

/// Neighbor offsets shared with the thinning code: N, NE, E, SE, S, SW, W,
/// NW. Walk order is fixed so tracing is deterministic.
const NEIGHBORS: [(i64, i64); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

fn foreground_neighbors(r: &BinaryRaster, row: u32, col: u32) -> Vec<(u32, u32)> {
    NEIGHBORS
        .iter()
        .filter_map(|&(dr, dc)| {
            let nr = row as i64 + dr;
            let nc = col as i64 + dc;
            r.get_checked(nr, nc).then_some((nr as u32, nc as u32))
        })
        .collect()
}

/// Traces a thinned raster into polylines.
///
/// Every maximal 8-connected run of degree-2 pixels between two node pixels
/// (degree 1 or >= 3) becomes one category, endpoints included; two
/// adjacent node pixels yield a two-point category. Closed loops with no
/// node anywhere are traced from their row-major first pixel and close back
/// on it (left endpoint = right endpoint). Isolated pixels carry no line
/// geometry and are dropped. Ids are assigned 1, 2, ... in discovery order,
/// which is deterministic: row-major node scan, fixed neighbor order.
pub fn trace(skel: &BinaryRaster) -> VectorMap {
    let w = skel.width() as usize;
    let h = skel.height();
    let index_of = |row: u32, col: u32| row as usize * w + col as usize;
    let mut visited = vec![false; w * skel.height() as usize];
    let mut node_edges: HashSet<(usize, usize)> = HashSet::new();
    let mut paths: Vec<Vec<(u32, u32)>> = Vec::new();

    // Walk from a node into a degree-2 chain until the next node.
    let walk = |visited: &mut Vec<bool>,
                start: (u32, u32),
                first: (u32, u32)|
     -> Vec<(u32, u32)> {
        let mut path = vec![start, first];
        let mut prev = start;
        let mut cur = first;
        while neighbor_count(skel, cur.0, cur.1) == 2 {
            visited[index_of(cur.0, cur.1)] = true;
            let next = foreground_neighbors(skel, cur.0, cur.1)
                .into_iter()
                .find(|&q| q != prev)
                .expect("degree-2 pixel has a second neighbor");
            path.push(next);
            prev = cur;
            cur = next;
        }
        path
    };

    for (row, col) in skel.foreground_pixels() {
        let deg = neighbor_count(skel, row, col);
        if deg == 0 || deg == 2 {
            continue;
        }
        for (nr, nc) in foreground_neighbors(skel, row, col) {
            if neighbor_count(skel, nr, nc) == 2 {
                if !visited[index_of(nr, nc)] {
                    paths.push(walk(&mut visited, (row, col), (nr, nc)));
                }
            } else {
                let a = index_of(row, col);
                let b = index_of(nr, nc);
                let edge = (a.min(b), a.max(b));
                if node_edges.insert(edge) {
                    paths.push(vec![(row, col), (nr, nc)]);
                }
            }
        }
    }

    // Pure cycles: every pixel degree 2, no node to anchor on.
    for (row, col) in skel.foreground_pixels() {
        if neighbor_count(skel, row, col) != 2 || visited[index_of(row, col)] {
            continue;
        }
        let start = (row, col);
        visited[index_of(row, col)] = true;
        let mut path = vec![start];
        let mut prev = start;
        let mut cur = foreground_neighbors(skel, row, col)[0];
        while cur != start {
            visited[index_of(cur.0, cur.1)] = true;
            path.push(cur);
            let next = foreground_neighbors(skel, cur.0, cur.1)
                .into_iter()
                .find(|&q| q != prev)
                .expect("degree-2 pixel has a second neighbor");
            prev = cur;
            cur = next;
        }
        path.push(start);
        paths.push(path);
    }

    let mut map = VectorMap::new();
    for (i, pixels) in paths.iter().enumerate() {
        let points = pixels
            .iter()
            .map(|&(r, c)| pixel_to_map(r, c, h))
            .collect();
        map.insert(Category::new(i as u32 + 1, points));
    }
    map
}

/// Snaps nearby endpoints together and drops short dangling lines.
///
/// Endpoint positions within `snap_tol` of each other are clustered
/// (transitively) and every cluster of two or more is replaced by the
/// unweighted mean of its distinct positions; only first/last points of
/// categories move. Then any non-loop category with at least one free
/// (degree-1) endpoint and arc length below `dangle_len` is removed, in a
/// single pass over the pre-pruning degrees.
pub fn snap_and_prune(v: VectorMap, snap_tol: f64, dangle_len: f64) -> VectorMap {
    let mut v = v;

    if snap_tol > 0.0 {
        // Unique endpoint positions.
        let mut positions: BTreeMap<PointKey, Point> = BTreeMap::new();
        for cat in v.iter() {
            positions.entry(cat.left().key()).or_insert_with(|| cat.left());
            positions
                .entry(cat.right().key())
                .or_insert_with(|| cat.right());
        }
        let pts: Vec<Point> = positions.values().copied().collect();

        // Bucket by a snap_tol-sized grid so only neighbors are compared.
        let cell = |p: Point| {
            (
                (p.x / snap_tol).floor() as i64,
                (p.y / snap_tol).floor() as i64,
            )
        };
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &p) in pts.iter().enumerate() {
            grid.entry(cell(p)).or_default().push(i);
        }
        let mut uf = UnionFind::new(pts.len());
        for (i, &p) in pts.iter().enumerate() {
            let (cx, cy) = cell(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(others) = grid.get(&(cx + dx, cy + dy)) else {
                        continue;
                    };
                    for &j in others {
                        if j > i && p.distance(pts[j]) <= snap_tol {
                            uf.union(i, j);
                        }
                    }
                }
            }
        }

        // Cluster centroids for clusters of size >= 2.
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..pts.len() {
            members.entry(uf.find(i)).or_default().push(i);
        }
        let mut moved: HashMap<PointKey, Point> = HashMap::new();
        for group in members.values() {
            if group.len() < 2 {
                continue;
            }
            let n = group.len() as f64;
            let cx = group.iter().map(|&i| pts[i].x).sum::<f64>() / n;
            let cy = group.iter().map(|&i| pts[i].y).sum::<f64>() / n;
            let centroid = Point::new(cx, cy);
            for &i in group {
                moved.insert(pts[i].key(), centroid);
            }
        }

        for cat in v.iter_mut() {
            let left = cat.points[0];
            if let Some(&p) = moved.get(&left.key()) {
                cat.points[0] = p;
            }
            let last = cat.points.len() - 1;
            let right = cat.points[last];
            if let Some(&p) = moved.get(&right.key()) {
                cat.points[last] = p;
            }
        }
    }

    if dangle_len > 0.0 {
        let index = v.junction_index();
        let degree = |p: Point| index.get(&p.key()).map_or(0, Vec::len);
        let doomed: Vec<u32> = v
            .iter()
            .filter(|cat| {
                !cat.is_loop()
                    && (degree(cat.left()) == 1 || degree(cat.right()) == 1)
                    && cat.arc_length() < dangle_len
            })
            .map(|cat| cat.id)
            .collect();
        for id in doomed {
            v.remove(id);
        }
    }
    v
}

/// Formats a coordinate as the shortest decimal that parses back to the
/// same double, always keeping a fractional part (`5050` prints as
/// `5050.0`) so columns stay visibly floating-point.
pub fn format_coord(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') {
        s.push_str(".0");
    }
    s
}

/// Serializes live categories in ascending id order. Each record is a
/// header `L <n_points> 1`, the points as `<x> <y>` lines, and a trailer
/// `1 <category_id>`; lines end with LF.
pub fn write_ascii(v: &VectorMap) -> String {
    let mut out = String::new();
    for cat in v.iter().filter(|c| !c.removed) {
        writeln!(out, "L {} 1", cat.points.len()).expect("string write");
        for p in &cat.points {
            out.push_str(&format_coord(p.x));
            out.push(' ');
            out.push_str(&format_coord(p.y));
            out.push('\n');
        }
        writeln!(out, "1 {}", cat.id).expect("string write");
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsciiError {
    #[error("line {line}: expected record header `L <n_points> 1`, got {found:?}")]
    BadHeader { line: usize, found: String },
    #[error("line {line}: expected coordinate pair, got {found:?}")]
    BadCoordinate { line: usize, found: String },
    #[error("line {line}: expected record trailer `1 <category_id>`, got {found:?}")]
    BadTrailer { line: usize, found: String },
    #[error("line {line}: record ends inside {context}")]
    UnexpectedEnd { line: usize, context: &'static str },
    #[error("line {line}: duplicate category id {id}")]
    DuplicateId { line: usize, id: u32 },
}

/// Parses the ASCII vector format written by [`write_ascii`]. Blank lines
/// and repeated whitespace are tolerated; errors carry 1-based line
/// numbers. The trailer is read as `<layer> <category_id>` with the layer
/// fixed at 1.
pub fn parse_ascii(text: &str) -> Result<VectorMap, AsciiError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let total_lines = text.lines().count();
    let mut map = VectorMap::new();

    while let Some((line_no, line)) = lines.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let header_ok = toks.len() == 3
            && toks[0] == "L"
            && toks[2] == "1"
            && toks[1].parse::<usize>().is_ok_and(|n| n >= 2);
        if !header_ok {
            return Err(AsciiError::BadHeader {
                line: line_no,
                found: line.trim().to_string(),
            });
        }
        let n_points: usize = toks[1].parse().expect("validated above");

        let mut points = Vec::with_capacity(n_points);
        for _ in 0..n_points {
            let Some((pline_no, pline)) = lines.next() else {
                return Err(AsciiError::UnexpectedEnd {
                    line: total_lines + 1,
                    context: "coordinate list",
                });
            };
            let ptoks: Vec<&str> = pline.split_whitespace().collect();
            let coords: Option<(f64, f64)> = match ptoks.as_slice() {
                [xs, ys] => match (xs.parse::<f64>(), ys.parse::<f64>()) {
                    (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => Some((x, y)),
                    _ => None,
                },
                _ => None,
            };
            let Some((x, y)) = coords else {
                return Err(AsciiError::BadCoordinate {
                    line: pline_no,
                    found: pline.trim().to_string(),
                });
            };
            points.push(Point::new(x, y));
        }

        let Some((tline_no, tline)) = lines.next() else {
            return Err(AsciiError::UnexpectedEnd {
                line: total_lines + 1,
                context: "record trailer",
            });
        };
        let ttoks: Vec<&str> = tline.split_whitespace().collect();
        let id = match ttoks.as_slice() {
            ["1", id_tok] => match id_tok.parse::<u32>() {
                Ok(id) if id >= 1 => id,
                _ => {
                    return Err(AsciiError::BadTrailer {
                        line: tline_no,
                        found: tline.trim().to_string(),
                    })
                }
            },
            _ => {
                return Err(AsciiError::BadTrailer {
                    line: tline_no,
                    found: tline.trim().to_string(),
                })
            }
        };
        if map.get(id).is_some() {
            return Err(AsciiError::DuplicateId { line: tline_no, id });
        }
        map.insert(Category::new(id, points));
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::thin;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_key_orders_and_normalizes() {
        let a = Point::new(-2.0, 0.0).key();
        let b = Point::new(-1.0, 0.0).key();
        let c = Point::new(0.0, 0.0).key();
        let d = Point::new(1.5, 0.0).key();
        assert!(a < b && b < c && c < d);
        assert_eq!(Point::new(-0.0, 0.0).key(), Point::new(0.0, -0.0).key());
        assert_ne!(Point::new(1.0, 2.0).key(), Point::new(2.0, 1.0).key());
    }

    #[test]
    fn coordinate_formatting_keeps_fraction() {
        assert_eq!(format_coord(4527.5), "4527.5");
        assert_eq!(format_coord(5050.0), "5050.0");
        assert_eq!(format_coord(7075.75), "7075.75");
        assert_eq!(format_coord(-1.0), "-1.0");
        assert_eq!(format_coord(0.1), "0.1");
        assert_eq!(format_coord(0.0), "0.0");
    }

    #[test]
    fn pixel_map_round_trip() {
        for row in 0..7u32 {
            for col in 0..5u32 {
                let p = pixel_to_map(row, col, 7);
                assert_eq!(map_to_pixel(p, 7), (row as i64, col as i64));
            }
        }
        assert_eq!(pixel_to_map(0, 0, 10), Point::new(0.5, 9.5));
        assert_eq!(pixel_to_map(9, 3, 10), Point::new(3.5, 0.5));
    }

    #[test]
    fn write_single_record_exact_bytes() {
        let cat = Category::new(
            1,
            vec![
                Point::new(4527.5, 7240.5),
                Point::new(4526.5, 7247.5),
                Point::new(4530.5, 7250.5),
            ],
        );
        let map = VectorMap::from_categories([cat]);
        assert_eq!(
            write_ascii(&map),
            "L 3 1\n4527.5 7240.5\n4526.5 7247.5\n4530.5 7250.5\n1 1\n"
        );
    }

    #[test]
    fn parse_is_whitespace_tolerant() {
        let text = "\n  L   6   1 \n5089.5 7079.5\n 5085.5  7078.5 \n5080.5 7075.75\n\n5050.0 7071.0\n5020.5 7070.0\n5000.5 7072.5\n 1  2 \n\n";
        let map = parse_ascii(text).unwrap();
        assert_eq!(map.len(), 1);
        let cat = map.get(2).expect("category id 2");
        assert_eq!(cat.points.len(), 6);
        assert_eq!(cat.points[0], Point::new(5089.5, 7079.5));
        assert_eq!(cat.points[3], Point::new(5050.0, 7071.0));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        // Bad header.
        let err = parse_ascii("B 3 1\n").unwrap_err();
        assert_eq!(
            err,
            AsciiError::BadHeader {
                line: 1,
                found: "B 3 1".into()
            }
        );

        // Non-numeric coordinate.
        let err = parse_ascii("L 2 1\n1.0 2.0\nx 4.0\n1 1\n").unwrap_err();
        assert_eq!(
            err,
            AsciiError::BadCoordinate {
                line: 3,
                found: "x 4.0".into()
            }
        );

        // Header promises 3 points but only 2 follow; the trailer gets
        // consumed as a coordinate pair and the next header fails as a
        // trailer, which is the first line where the mismatch is provable.
        let err = parse_ascii("L 3 1\n1.0 2.0\n3.0 4.0\n1 7\nL 2 1\n").unwrap_err();
        assert_eq!(
            err,
            AsciiError::BadTrailer {
                line: 5,
                found: "L 2 1".into()
            }
        );

        // File ends mid-record.
        let err = parse_ascii("L 2 1\n1.0 2.0\n").unwrap_err();
        assert_eq!(
            err,
            AsciiError::UnexpectedEnd {
                line: 3,
                context: "coordinate list"
            }
        );

        // Duplicate ids.
        let rec = "L 2 1\n0.5 0.5\n1.5 0.5\n1 4\n";
        let err = parse_ascii(&format!("{rec}{rec}")).unwrap_err();
        assert_eq!(err, AsciiError::DuplicateId { line: 8, id: 4 });

        // Layer other than 1 in the trailer.
        let err = parse_ascii("L 2 1\n0.5 0.5\n1.5 0.5\n2 4\n").unwrap_err();
        assert!(matches!(err, AsciiError::BadTrailer { line: 4, .. }));
    }

    #[test]
    fn round_trip_many_random_categories() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut cats = Vec::new();
        for id in 1..=1000u32 {
            let n = rng.gen_range(2..12);
            let points = (0..n)
                .map(|_| {
                    // Mix of magnitudes, integral values and negatives.
                    let scale = 10f64.powi(rng.gen_range(-3..6));
                    let x = (rng.gen::<f64>() - 0.5) * scale;
                    let y = if rng.gen_bool(0.3) {
                        rng.gen_range(-5000..5000) as f64
                    } else {
                        (rng.gen::<f64>() - 0.5) * scale
                    };
                    Point::new(x, y)
                })
                .collect();
            cats.push(Category::new(id, points));
        }
        let map = VectorMap::from_categories(cats);
        let text = write_ascii(&map);
        let back = parse_ascii(&text).unwrap();
        assert_eq!(back, map);
        // Canonical text is byte-stable under a second round trip.
        assert_eq!(write_ascii(&back), text);
    }

    #[test]
    fn trace_single_line() {
        let skel = BinaryRaster::from_ascii_art("#####");
        let map = trace(&skel);
        assert_eq!(map.len(), 1);
        let cat = map.get(1).unwrap();
        assert_eq!(cat.points.len(), 5);
        assert_eq!(cat.left(), Point::new(0.5, 0.5));
        assert_eq!(cat.right(), Point::new(4.5, 0.5));
    }

    #[test]
    fn trace_y_junction_shares_one_point() {
        let skel = BinaryRaster::from_ascii_art(
            "..#..
             ..#..
             ..#..
             .#.#.
             #...#",
        );
        let map = trace(&skel);
        assert_eq!(map.len(), 3);
        let junction = Point::new(2.5, 2.5);
        let index = map.junction_index();
        assert_eq!(index[&junction.key()], vec![1, 2, 3]);
        // Each category runs from a tip to the junction, 3 points each.
        for cat in map.iter() {
            assert_eq!(cat.points.len(), 3);
            assert!(cat.left() == junction || cat.right() == junction);
        }
    }

    #[test]
    fn trace_pure_ring_closes_on_itself() {
        let skel = BinaryRaster::from_ascii_art(
            ".#.
             #.#
             .#.",
        );
        let map = trace(&skel);
        assert_eq!(map.len(), 1);
        let cat = map.get(1).unwrap();
        assert!(cat.is_loop());
        assert_eq!(cat.points.len(), 5);
        // The loop id shows up twice under its anchor point.
        let index = map.junction_index();
        assert_eq!(index[&cat.left().key()], vec![1, 1]);
    }

    #[test]
    fn trace_skips_isolated_pixels() {
        let mut skel = BinaryRaster::new(5, 5);
        skel.set(2, 2, true);
        assert!(trace(&skel).is_empty());
    }

    #[test]
    fn trace_covers_every_thinned_pixel() {
        // Random strokes, thinned, then audited: every pixel of degree >= 1
        // appears in at least one category, degree-2 pixels in exactly one.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut r = BinaryRaster::new(64, 64);
            for _ in 0..8 {
                let (x0, y0) = (rng.gen_range(2..62) as f64, rng.gen_range(2..62) as f64);
                let (x1, y1) = (rng.gen_range(2..62) as f64, rng.gen_range(2..62) as f64);
                let steps = ((x1 - x0).abs().max((y1 - y0).abs()) * 3.0) as usize + 1;
                for s in 0..=steps {
                    let t = s as f64 / steps as f64;
                    let col = (x0 + (x1 - x0) * t).round() as u32;
                    let row = (y0 + (y1 - y0) * t).round() as u32;
                    r.set(row, col, true);
                }
            }
            let skel = thin(&r);
            let map = trace(&skel);
            let mut hits: HashMap<(i64, i64), usize> = HashMap::new();
            for cat in map.iter() {
                let mut seen_here: HashSet<(i64, i64)> = HashSet::new();
                for &p in &cat.points {
                    seen_here.insert(map_to_pixel(p, skel.height()));
                }
                for px in seen_here {
                    *hits.entry(px).or_default() += 1;
                }
            }
            for (row, col) in skel.foreground_pixels() {
                let deg = neighbor_count(&skel, row, col);
                let n = hits.get(&(row as i64, col as i64)).copied().unwrap_or(0);
                if deg == 0 {
                    continue;
                }
                assert!(n >= 1, "pixel ({row},{col}) deg {deg} not traced");
                if deg == 2 {
                    assert_eq!(n, 1, "path pixel ({row},{col}) traced {n} times");
                }
            }
        }
    }

    #[test]
    fn snap_merges_close_endpoints() {
        let a = Category::new(1, vec![Point::new(0.0, 0.0), Point::new(5.0, 0.0)]);
        let b = Category::new(2, vec![Point::new(5.4, 0.0), Point::new(9.0, 0.0)]);
        let map = VectorMap::from_categories([a, b]);
        let snapped = snap_and_prune(map, 0.5, 0.0);
        let shared = Point::new(5.2, 0.0);
        assert_eq!(snapped.get(1).unwrap().right(), shared);
        assert_eq!(snapped.get(2).unwrap().left(), shared);
        let index = snapped.junction_index();
        assert_eq!(index[&shared.key()], vec![1, 2]);
    }

    #[test]
    fn prune_drops_short_dangles() {
        let trunk1 = Category::new(1, vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)]);
        let trunk2 = Category::new(2, vec![Point::new(10.0, 0.0), Point::new(20.0, 0.0)]);
        let spur = Category::new(3, vec![Point::new(10.0, 0.0), Point::new(10.0, 3.0)]);
        let map = VectorMap::from_categories([trunk1, trunk2, spur]);
        let pruned = snap_and_prune(map, 0.0, 5.0);
        assert_eq!(pruned.ids(), vec![1, 2]);
    }

    #[test]
    fn snap_and_prune_is_idempotent_on_clean_maps() {
        let a = Category::new(1, vec![Point::new(0.5, 0.5), Point::new(30.5, 0.5)]);
        let b = Category::new(2, vec![Point::new(30.5, 0.5), Point::new(30.5, 40.5)]);
        let map = VectorMap::from_categories([a, b]);
        let once = snap_and_prune(map.clone(), 1.5, 8.0);
        assert_eq!(once, map);
        let twice = snap_and_prune(once.clone(), 1.5, 8.0);
        assert_eq!(twice, once);
    }

    #[test]
    fn junction_index_counts_multiplicity() {
        let shared = Point::new(3.0, 4.0);
        let a = Category::new(1, vec![Point::new(0.0, 0.0), shared]);
        let b = Category::new(2, vec![shared, Point::new(6.0, 0.0)]);
        let c = Category::new(3, vec![shared, Point::new(3.0, 9.0)]);
        let map = VectorMap::from_categories([a, b, c]);
        let index = map.junction_index();
        assert_eq!(index[&shared.key()], vec![1, 2, 3]);
        assert_eq!(index.len(), 4);
        assert_eq!(category_graph_components(&map), 1);

        let far = Category::new(9, vec![Point::new(100.0, 100.0), Point::new(101.0, 100.0)]);
        let mut map2 = map.clone();
        map2.insert(far);
        assert_eq!(category_graph_components(&map2), 2);
    }
}
