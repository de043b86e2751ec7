//! Triangular meshes of a 2D cross-section.
//!
//! Plain-text format (0-based indices, `#` comments):
//!
//! ```text
//! <vertex count>
//! x y                 (one line per vertex)
//! <triangle count>
//! i j k region        (one line per triangle)
//! <dirichlet count>
//! v v v ...           (whitespace separated, any line breaks)
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use super::FieldError;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<u32>,
    /// Sorted, unique vertex indices with `A_z = 0`.
    pub dirichlet: Vec<usize>,
}

impl Mesh2D {
    /// Signed area of triangle `t` (positive for counter-clockwise vertices).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [i, j, k] = self.triangles[t];
        let (p, q, r) = (self.vertices[i], self.vertices[j], self.vertices[k]);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [i, j, k] = self.triangles[t];
        let v = &self.vertices;
        [(v[i][0] + v[j][0] + v[k][0]) / 3.0, (v[i][1] + v[j][1] + v[k][1]) / 3.0]
    }

    /// Unit square with `n × n` vertices, each cell cut along its `/` diagonal.
    /// Triangle regions come from `region_of(centroid)`; the outer boundary is
    /// Dirichlet.
    pub fn unit_square(n: usize, region_of: impl Fn([f64; 2]) -> u32) -> Mesh2D {
        assert!(n >= 2, "need at least 2 vertices per side");
        let h = 1.0 / (n - 1) as f64;
        let id = |i: usize, j: usize| j * n + i;
        let mut vertices = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let dirichlet = (0..n * n)
            .filter(|&v| {
                let (i, j) = (v % n, v / n);
                i == 0 || j == 0 || i == n - 1 || j == n - 1
            })
            .collect();
        let mut mesh = Mesh2D { vertices, triangles, regions: Vec::new(), dirichlet };
        mesh.regions = (0..mesh.triangles.len()).map(|t| region_of(mesh.centroid(t))).collect();
        mesh
    }

    /// Checks orientation, non-degeneracy and the Dirichlet boundary.
    pub fn validate(&self) -> Result<(), FieldError> {
        let nv = self.vertices.len();
        if self.regions.len() != self.triangles.len() {
            return Err(FieldError::InvalidMesh("one region tag per triangle required".into()));
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let scale = ((hi[0] - lo[0]).max(hi[1] - lo[1])).powi(2);
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(FieldError::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let a = self.signed_area(t);
            if a.abs() <= 1e-14 * scale {
                return Err(FieldError::DegenerateTriangle(t));
            }
            if a < 0.0 {
                return Err(FieldError::InvalidMesh(format!("triangle {t} is not positively oriented")));
            }
        }
        if self.dirichlet.iter().any(|&v| v >= nv) {
            return Err(FieldError::InvalidMesh("Dirichlet vertex out of range".into()));
        }
        let fixed: BTreeSet<usize> = self.dirichlet.iter().copied().collect();
        let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut open: Vec<_> = edges
            .iter()
            .filter(|(&(a, b), &c)| c == 1 && !(fixed.contains(&a) && fixed.contains(&b)))
            .map(|(&e, _)| e)
            .collect();
        open.sort_unstable();
        if let Some((a, b)) = open.first() {
            return Err(FieldError::InvalidMesh(format!("boundary edge ({a}, {b}) is not Dirichlet")));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{} {}", v[0], v[1]);
        }
        let _ = writeln!(s, "{}", self.triangles.len());
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], r);
        }
        let _ = writeln!(s, "{}", self.dirichlet.len());
        let ids: Vec<String> = self.dirichlet.iter().map(|d| d.to_string()).collect();
        for chunk in ids.chunks(16) {
            let _ = writeln!(s, "{}", chunk.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh2D, FieldError> {
        let mut toks = text.lines().map(|l| l.split('#').next().unwrap_or("")).flat_map(str::split_whitespace);
        let mut next = |what: &str| -> Result<&str, FieldError> {
            toks.next().ok_or_else(|| FieldError::Parse(format!("mesh: missing {what}")))
        };
        fn num<T: std::str::FromStr>(s: &str) -> Result<T, FieldError> {
            s.parse().map_err(|_| FieldError::Parse(format!("mesh: bad number `{s}`")))
        }
        let nv: usize = num(next("vertex count")?)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            vertices.push([num(next("x")?)?, num(next("y")?)?]);
        }
        let nt: usize = num(next("triangle count")?)?;
        let mut triangles = Vec::with_capacity(nt);
        let mut regions = Vec::with_capacity(nt);
        for _ in 0..nt {
            triangles.push([num(next("i")?)?, num(next("j")?)?, num(next("k")?)?]);
            regions.push(num(next("region")?)?);
        }
        let nd: usize = num(next("dirichlet count")?)?;
        let mut dirichlet = Vec::with_capacity(nd);
        for _ in 0..nd {
            dirichlet.push(num(next("dirichlet vertex")?)?);
        }
        dirichlet.sort_unstable();
        dirichlet.dedup();
        Ok(Mesh2D { vertices, triangles, regions, dirichlet })
    }
}
