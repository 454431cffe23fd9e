use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnnotateError;

/// Planar point, `(easting, northing)` in meters.
pub type Point = (f64, f64);

/// Simple closed polygon; the closing edge from the last vertex back to the first is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct FieldBoundary {
    vertices: Vec<Point>,
    bbox: (Point, Point),
}

impl FieldBoundary {
    /// Validates the ring. A repeated closing vertex is dropped.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self, AnnotateError> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(AnnotateError::DegeneratePolygon(format!("{} vertices", vertices.len())));
        }
        if vertices.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(AnnotateError::DegeneratePolygon("non-finite vertex".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(AnnotateError::DegeneratePolygon(format!("repeated vertex {i}")));
            }
        }
        for i in 0..n {
            let a = (vertices[i], vertices[(i + 1) % n]);
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let b = (vertices[j], vertices[(j + 1) % n]);
                let hit = if adjacent {
                    // Adjacent edges share one endpoint; they must not fold back over each other.
                    let shared = if j == i + 1 { a.1 } else { a.0 };
                    let (p, q) = if j == i + 1 { (a.0, b.1) } else { (a.1, b.0) };
                    cross(shared, p, q) == 0.0 && dot(shared, p, q) > 0.0
                } else {
                    segments_intersect(a.0, a.1, b.0, b.1)
                };
                if hit {
                    return Err(AnnotateError::DegeneratePolygon(format!("edges {i} and {j} intersect")));
                }
            }
        }
        let area2: f64 = (0..n)
            .map(|i| {
                let (p, q) = (vertices[i], vertices[(i + 1) % n]);
                p.0 * q.1 - q.0 * p.1
            })
            .sum();
        if area2 == 0.0 {
            return Err(AnnotateError::DegeneratePolygon("zero area".into()));
        }
        let mut lo = vertices[0];
        let mut hi = vertices[0];
        for &(x, y) in &vertices {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        Ok(FieldBoundary { vertices, bbox: (lo, hi) })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Inside or on an edge.
    pub fn contains(&self, p: Point) -> bool {
        let ((x0, y0), (x1, y1)) = self.bbox;
        if p.0 < x0 || p.0 > x1 || p.1 < y0 || p.1 > y1 {
            return false;
        }
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if on_segment(a, b, p) {
                return true;
            }
            // Crossing test on the half-open rule so shared vertices count once.
            if (a.1 > p.1) != (b.1 > p.1) {
                let x_at = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
                if p.0 < x_at {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        FieldBoundary::new(self.vertices.iter().map(|&(x, y)| (x + dx, y + dy)).collect())
            .expect("translation keeps a valid polygon valid")
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, AnnotateError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| AnnotateError::BoundaryFile(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| AnnotateError::BoundaryFile(format!("missing column `{name}`")))
        };
        let (ce, cn) = (col("easting")?, col("northing")?);
        let mut vertices = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| AnnotateError::BoundaryFile(e.to_string()))?;
            let get = |c: usize| -> Result<f64, AnnotateError> {
                let s = rec.get(c).unwrap_or("");
                s.parse().map_err(|_| AnnotateError::BoundaryFile(format!("`{s}` is not a number")))
            };
            vertices.push((get(ce)?, get(cn)?));
        }
        FieldBoundary::new(vertices)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, AnnotateError> {
        let path = path.as_ref();
        let file = File::open(path)
            .map_err(|e| AnnotateError::BoundaryFile(format!("{}: {e}", path.display())))?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "easting,northing")?;
        for &(x, y) in &self.vertices {
            writeln!(w, "{},{}", crate::ingest::format_float(x), crate::ingest::format_float(y))?;
        }
        Ok(())
    }
}

impl TryFrom<Vec<Point>> for FieldBoundary {
    type Error = AnnotateError;
    fn try_from(v: Vec<Point>) -> Result<Self, Self::Error> {
        FieldBoundary::new(v)
    }
}

impl From<FieldBoundary> for Vec<Point> {
    fn from(b: FieldBoundary) -> Self {
        b.vertices
    }
}

/// Boundary counts as inside.
pub fn point_in_polygon(p: Point, boundary: &FieldBoundary) -> bool {
    boundary.contains(p)
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn dot(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.0 - o.0) + (a.1 - o.1) * (b.1 - o.1)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    cross(a, b, p) == 0.0
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> FieldBoundary {
        FieldBoundary::new(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).unwrap()
    }

    #[test]
    fn unit_square_membership() {
        let sq = unit_square();
        assert!(point_in_polygon((0.5, 0.5), &sq));
        assert!(!point_in_polygon((2.0, 0.5), &sq));
    }

    #[test]
    fn edges_and_vertices_are_inside() {
        let sq = unit_square();
        for p in [(0.0, 0.0), (1.0, 0.5), (0.5, 1.0), (0.0, 0.3), (1.0, 1.0)] {
            assert!(sq.contains(p), "{p:?}");
        }
        assert!(!sq.contains((1.0000001, 0.5)));
    }

    #[test]
    fn concave_polygon() {
        // U shape opening upwards.
        let u = FieldBoundary::new(vec![(0., 0.), (3., 0.), (3., 3.), (2., 3.), (2., 1.), (1., 1.), (1., 3.), (0., 3.)])
            .unwrap();
        assert!(u.contains((0.5, 2.0)));
        assert!(u.contains((2.5, 2.0)));
        assert!(!u.contains((1.5, 2.0)));
        assert!(u.contains((1.5, 0.5)));
    }

    #[test]
    fn degenerate_polygons_rejected() {
        assert!(FieldBoundary::new(vec![(0., 0.), (1., 0.)]).is_err());
        // Bow tie.
        assert!(FieldBoundary::new(vec![(0., 0.), (1., 1.), (1., 0.), (0., 1.)]).is_err());
        // Collinear.
        assert!(FieldBoundary::new(vec![(0., 0.), (1., 0.), (2., 0.)]).is_err());
        // Spike folding back on itself.
        assert!(FieldBoundary::new(vec![(0., 0.), (2., 0.), (1., 0.), (1., 1.)]).is_err());
    }

    #[test]
    fn closing_vertex_is_dropped() {
        let b = FieldBoundary::new(vec![(0., 0.), (1., 0.), (1., 1.), (0., 0.)]).unwrap();
        assert_eq!(b.vertices().len(), 3);
    }

    #[test]
    fn csv_round_trip() {
        let sq = unit_square();
        let mut buf = Vec::new();
        sq.write_csv(&mut buf).unwrap();
        assert_eq!(FieldBoundary::read_csv(buf.as_slice()).unwrap(), sq);
    }

    proptest! {
        #[test]
        fn translation_invariance(
            px in -320i32..320, py in -320i32..320,
            dx in -1000i32..1000, dy in -1000i32..1000,
        ) {
            let u = FieldBoundary::new(vec![(0., 0.), (3., 0.), (3., 3.), (2., 3.), (2., 1.), (1., 1.), (1., 3.), (0., 3.)]).unwrap();
            // Dyadic coordinates keep the translation exact.
            let (px, py) = (px as f64 / 64.0, py as f64 / 64.0);
            let (dx, dy) = (dx as f64, dy as f64);
            let moved = u.translated(dx, dy);
            prop_assert_eq!(u.contains((px, py)), moved.contains((px + dx, py + dy)));
        }
    }
}
