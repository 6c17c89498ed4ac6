//! Surface detection, periodic Delaunay triangulation of the top layer and
//! adsorption-site enumeration/sampling.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation as _};
use thiserror::Error;

use crate::rng;
use crate::structures::{Structure, Tag, Vec3};

pub const DEFAULT_LAYER_WINDOW: f64 = 0.5;
const DEDUP_TOLERANCE: f64 = 0.05;
const FOURFOLD_MERGE: f64 = 0.3;
const MIN_TRIANGLE_AREA: f64 = 1e-6;
const HOME_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SiteError {
    #[error("no surface atoms: the structure has no atom tagged 0 or 1")]
    NoSurface,
    #[error("degenerate surface layer: {0}")]
    Degenerate(String),
    #[error("requested zero random sites")]
    EmptyRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteKind {
    Ontop,
    Bridge,
    Hollow,
    Random,
}

impl SiteKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SiteKind::Ontop => "ontop",
            SiteKind::Bridge => "bridge",
            SiteKind::Hollow => "hollow",
            SiteKind::Random => "random",
        }
    }
}

impl std::fmt::Display for SiteKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub position: Vec3,
    pub kind: SiteKind,
    pub parents: Vec<usize>,
    pub parent_elements: Vec<String>,
}

impl Site {
    /// Parent elements, sorted, for multiset comparison.
    pub fn element_multiset(&self) -> Vec<String> {
        let mut v = self.parent_elements.clone();
        v.sort();
        v
    }
}

/// One home-cell Delaunay triangle. `corners` are the in-plane positions of
/// the (possibly imaged) vertices, counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub corners: [[f64; 2]; 3],
}

impl Triangle {
    pub fn area(&self) -> f64 {
        area(&self.corners)
    }

    pub fn centroid(&self) -> [f64; 2] {
        let c = &self.corners;
        [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triangulation {
    pub vertices: Vec<usize>,
    pub triangles: Vec<Triangle>,
}

impl Triangulation {
    pub fn total_area(&self) -> f64 {
        self.triangles.iter().map(|t| t.area()).sum()
    }
}

fn area(c: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1])).abs()
}

fn circumcentre(c: &[[f64; 2]; 3]) -> [f64; 2] {
    let (ax, ay) = (c[0][0], c[0][1]);
    let (bx, by) = (c[1][0] - ax, c[1][1] - ay);
    let (cx, cy) = (c[2][0] - ax, c[2][1] - ay);
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    [ax + (cy * b2 - by * c2) / d, ay + (bx * c2 - cx * b2) / d]
}

/// Indices of atoms within `window` Å of the highest slab atom, restricted
/// to tags 0 and 1.
pub fn surface_atoms(slab: &Structure, window: f64) -> Result<Vec<usize>, SiteError> {
    let slab_atoms: Vec<usize> = (0..slab.len())
        .filter(|&i| slab.atoms[i].tag != Tag::Adsorbate)
        .collect();
    let z_max = slab_atoms
        .iter()
        .map(|&i| slab.atoms[i].position.z)
        .fold(f64::NEG_INFINITY, f64::max);
    let out: Vec<usize> = slab_atoms
        .into_iter()
        .filter(|&i| slab.atoms[i].position.z >= z_max - window)
        .collect();
    if out.is_empty() {
        return Err(SiteError::NoSurface);
    }
    Ok(out)
}

/// In-plane geometry of the slab: the first two cell vectors projected on xy.
struct Plane {
    a: [f64; 2],
    b: [f64; 2],
    det: f64,
}

impl Plane {
    fn of(slab: &Structure) -> Plane {
        let (a, b) = (slab.lattice.vector(0), slab.lattice.vector(1));
        let det = a.x * b.y - a.y * b.x;
        Plane {
            a: [a.x, a.y],
            b: [b.x, b.y],
            det,
        }
    }

    fn frac(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] * self.b[1] - p[1] * self.b[0]) / self.det,
            (self.a[0] * p[1] - self.a[1] * p[0]) / self.det,
        ]
    }

    fn cart(&self, f: [f64; 2]) -> [f64; 2] {
        [f[0] * self.a[0] + f[1] * self.b[0], f[0] * self.a[1] + f[1] * self.b[1]]
    }

    fn is_home(&self, p: [f64; 2]) -> bool {
        let f = self.frac(p);
        f.iter().all(|x| *x >= -HOME_EPS && *x < 1.0 - HOME_EPS)
    }

    fn fold(&self, p: [f64; 2]) -> [f64; 2] {
        let f = self.frac(p);
        let w = |x: f64| {
            let r = x.rem_euclid(1.0);
            if r >= 1.0 - HOME_EPS {
                0.0
            } else {
                r
            }
        };
        self.cart([w(f[0]), w(f[1])])
    }

    fn periodic_distance(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        let f = self.frac([q[0] - p[0], q[1] - p[1]]);
        let mut best = f64::INFINITY;
        for i in -1..=1 {
            for j in -1..=1 {
                let d = self.cart([f[0] - f[0].round() + i as f64, f[1] - f[1].round() + j as f64]);
                best = best.min(d[0].hypot(d[1]));
            }
        }
        best
    }
}

/// The raw periodic tiling: every inner Delaunay face over a 3×3 image
/// tiling of the surface atoms, with a vertex → atom map.
struct Tiling {
    plane: Plane,
    points: Vec<[f64; 2]>,
    atom_of: Vec<usize>,
    faces: Vec<[usize; 3]>,
    /// Faces that belong to a 4-fold quad.
    merged: Vec<bool>,
    /// Quads as [diagonal u, diagonal v, w0, w1].
    quads: Vec<[usize; 4]>,
}

fn tile(slab: &Structure, surface: &[usize]) -> Result<Tiling, SiteError> {
    let plane = Plane::of(slab);
    let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut points = Vec::new();
    let mut atom_of = Vec::new();
    // centre image first so home vertices get the lowest indices
    let mut images = vec![(0i32, 0i32)];
    for i in -1..=1 {
        for j in -1..=1 {
            if (i, j) != (0, 0) {
                images.push((i, j));
            }
        }
    }
    for (i, j) in images {
        for &k in surface {
            let p = slab.atoms[k].position;
            let o = plane.cart([i as f64, j as f64]);
            let q = [p.x + o[0], p.y + o[1]];
            let h = dt
                .insert(Point2::new(q[0], q[1]))
                .map_err(|e| SiteError::Degenerate(format!("{e:?}")))?;
            if h.index() == points.len() {
                points.push(q);
                atom_of.push(k);
            }
        }
    }
    let mut faces: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| {
            let v = f.vertices();
            [v[0].fix().index(), v[1].fix().index(), v[2].fix().index()]
        })
        .filter(|f| area(&[points[f[0]], points[f[1]], points[f[2]]]) > MIN_TRIANGLE_AREA)
        .collect();
    if faces.is_empty() {
        return Err(SiteError::Degenerate("surface atoms are collinear".into()));
    }

    // Cocircular quads: the diagonal Delaunay picks is arbitrary and can
    // differ between periodic images, so re-split each one canonically
    // (the diagonal with the smaller direction angle in [0, π)).
    let centres: Vec<[f64; 2]> = faces
        .iter()
        .map(|f| circumcentre(&[points[f[0]], points[f[1]], points[f[2]]]))
        .collect();
    let mut merged = vec![false; faces.len()];
    let mut quads = Vec::new();
    for ((u, v), fs) in edge_map(&faces) {
        if fs.len() != 2 || merged[fs[0]] || merged[fs[1]] {
            continue;
        }
        let (c0, c1) = (centres[fs[0]], centres[fs[1]]);
        if (c0[0] - c1[0]).hypot(c0[1] - c1[1]) >= FOURFOLD_MERGE {
            continue;
        }
        merged[fs[0]] = true;
        merged[fs[1]] = true;
        let opposite = |f: &[usize; 3]| *f.iter().find(|w| **w != u && **w != v).unwrap();
        let (w0, w1) = (opposite(&faces[fs[0]]), opposite(&faces[fs[1]]));
        let angle = |a: usize, b: usize| {
            let (p, q) = (points[a], points[b]);
            let t = (q[1] - p[1]).atan2(q[0] - p[0]).rem_euclid(std::f64::consts::PI);
            (t * 1e9).round()
        };
        let quad = if angle(w0, w1) < angle(u, v) {
            faces[fs[0]] = [w0, w1, u];
            faces[fs[1]] = [w1, w0, v];
            [w0, w1, u, v]
        } else {
            [u, v, w0, w1]
        };
        quads.push(quad);
    }
    Ok(Tiling {
        plane,
        points,
        atom_of,
        faces,
        merged,
        quads,
    })
}

fn edge_map(faces: &[[usize; 3]]) -> Vec<((usize, usize), Vec<usize>)> {
    let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let (u, v) = (f[k], f[(k + 1) % 3]);
            edges.entry((u.min(v), u.max(v))).or_default().push(fi);
        }
    }
    let mut out: Vec<_> = edges.into_iter().collect();
    out.sort();
    out
}

impl Tiling {
    fn corners(&self, f: &[usize; 3]) -> [[f64; 2]; 3] {
        [self.points[f[0]], self.points[f[1]], self.points[f[2]]]
    }

    fn home_triangles(&self) -> Vec<Triangle> {
        self.faces
            .iter()
            .filter_map(|f| {
                let t = Triangle {
                    vertices: [self.atom_of[f[0]], self.atom_of[f[1]], self.atom_of[f[2]]],
                    corners: self.corners(f),
                };
                self.plane.is_home(t.centroid()).then_some(t)
            })
            .collect()
    }
}

/// Delaunay triangulation of the surface layer projected on the xy plane,
/// computed over a 3×3 periodic tiling and folded to home-cell triangles
/// (those whose centroid lies in the home cell).
pub fn triangulate_surface(slab: &Structure) -> Result<Triangulation, SiteError> {
    triangulate_with(slab, DEFAULT_LAYER_WINDOW)
}

pub fn triangulate_with(slab: &Structure, window: f64) -> Result<Triangulation, SiteError> {
    let surface = surface_atoms(slab, window)?;
    let tiling = tile(slab, &surface)?;
    let triangles = tiling.home_triangles();
    if triangles.is_empty() {
        return Err(SiteError::Degenerate("no triangle falls in the home cell".into()));
    }
    Ok(Triangulation {
        vertices: surface,
        triangles,
    })
}

/// Symmetry sites: ontop at each surface atom, bridge at each unique edge
/// midpoint, hollow at each triangle centroid. Pairs of triangles sharing a
/// circumcentre (within 0.3 Å) form one 4-fold hollow at the quad centre and
/// their shared diagonal is not a bridge.
pub fn enumerate_heuristic_sites(slab: &Structure) -> Result<Vec<Site>, SiteError> {
    enumerate_with(slab, DEFAULT_LAYER_WINDOW)
}

pub fn enumerate_with(slab: &Structure, window: f64) -> Result<Vec<Site>, SiteError> {
    let surface = surface_atoms(slab, window)?;
    let tiling = tile(slab, &surface)?;
    let plane = &tiling.plane;
    let z_site = surface.iter().map(|&i| slab.atoms[i].position.z).sum::<f64>() / surface.len() as f64;
    let symbol = |i: usize| slab.atoms[i].symbol().to_string();

    let is_diagonal = |e: &(usize, usize)| tiling.quads.iter().any(|q| (q[0].min(q[1]), q[0].max(q[1])) == *e);

    let mut sites: Vec<Site> = Vec::new();
    let push = |sites: &mut Vec<Site>, kind: SiteKind, xy: [f64; 2], mut parents: Vec<usize>| {
        if !plane.is_home(xy) {
            return;
        }
        let xy = plane.fold(xy);
        if sites
            .iter()
            .any(|s| s.kind == kind && plane.periodic_distance([s.position.x, s.position.y], xy) < DEDUP_TOLERANCE)
        {
            return;
        }
        parents.sort_unstable();
        let parent_elements = parents.iter().map(|&i| symbol(i)).collect();
        sites.push(Site {
            position: Vec3::new(xy[0], xy[1], z_site),
            kind,
            parents,
            parent_elements,
        });
    };

    for &i in &surface {
        let p = slab.atoms[i].position;
        push(&mut sites, SiteKind::Ontop, plane.fold([p.x, p.y]), vec![i]);
    }
    for ((u, v), _) in edge_map(&tiling.faces) {
        if is_diagonal(&(u, v)) {
            continue;
        }
        let (p, q) = (tiling.points[u], tiling.points[v]);
        let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
        push(
            &mut sites,
            SiteKind::Bridge,
            mid,
            vec![tiling.atom_of[u], tiling.atom_of[v]],
        );
    }
    for (fi, f) in tiling.faces.iter().enumerate() {
        if tiling.merged[fi] {
            continue;
        }
        let c = tiling.corners(f);
        let centroid = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
        push(
            &mut sites,
            SiteKind::Hollow,
            centroid,
            f.iter().map(|&v| tiling.atom_of[v]).collect(),
        );
    }
    for quad in &tiling.quads {
        let centre = quad.iter().fold([0.0, 0.0], |acc, &w| {
            [acc[0] + tiling.points[w][0] / 4.0, acc[1] + tiling.points[w][1] / 4.0]
        });
        push(
            &mut sites,
            SiteKind::Hollow,
            centre,
            quad.iter().map(|&w| tiling.atom_of[w]).collect(),
        );
    }

    sites.sort_by(|a, b| {
        a.kind
            .cmp(&b.kind)
            .then_with(|| a.parents.cmp(&b.parents))
            .then_with(|| a.position.y.partial_cmp(&b.position.y).unwrap())
            .then_with(|| a.position.x.partial_cmp(&b.position.x).unwrap())
    });
    Ok(sites)
}

/// Draws `n` points: a triangle with probability proportional to its area,
/// then a uniform point inside it. Returns (triangle index, point).
pub fn sample_in_triangles(triangles: &[[[f64; 2]; 3]], n: usize, rng: &mut rng::Rng) -> Vec<(usize, [f64; 2])> {
    let weights: Vec<f64> = triangles.iter().map(area).collect();
    let pick = WeightedIndex::new(&weights).expect("triangles have positive area");
    (0..n)
        .map(|_| {
            let t = pick.sample(rng);
            let [a, b, c] = triangles[t];
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
            (
                t,
                [wa * a[0] + wb * b[0] + wc * c[0], wa * a[1] + wb * b[1] + wc * c[1]],
            )
        })
        .collect()
}

/// Area-weighted uniform random sites over the home-cell triangles.
pub fn sample_random_sites(slab: &Structure, n: usize, seed: u64) -> Result<Vec<Site>, SiteError> {
    if n == 0 {
        return Err(SiteError::EmptyRequest);
    }
    let tri = triangulate_surface(slab)?;
    let plane = Plane::of(slab);
    let z_site = tri.vertices.iter().map(|&i| slab.atoms[i].position.z).sum::<f64>() / tri.vertices.len() as f64;
    let corners: Vec<[[f64; 2]; 3]> = tri.triangles.iter().map(|t| t.corners).collect();
    let mut rng = rng::stream(seed, 0);
    Ok(sample_in_triangles(&corners, n, &mut rng)
        .into_iter()
        .map(|(t, p)| {
            let xy = plane.fold(p);
            let parents = tri.triangles[t].vertices.to_vec();
            Site {
                position: Vec3::new(xy[0], xy[1], z_site),
                kind: SiteKind::Random,
                parent_elements: parents.iter().map(|&i| slab.atoms[i].symbol().to_string()).collect(),
                parents,
            }
        })
        .collect())
}

/// Site counts by kind: (ontop, bridge, hollow).
pub fn count_by_kind(sites: &[Site]) -> (usize, usize, usize) {
    let n = |k| sites.iter().filter(|s| s.kind == k).count();
    (n(SiteKind::Ontop), n(SiteKind::Bridge), n(SiteKind::Hollow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structures::{build_slab, Atom, BulkSpec, Lattice, SlabMetadata};

    fn pt(miller: [i32; 3], layers: usize, n: usize) -> Structure {
        let bulk = BulkSpec::Fcc {
            element: "Pt".into(),
            a: 4.0,
        };
        build_slab(&bulk, &SlabMetadata::new("Pt", miller, layers), (n, n)).unwrap()
    }

    fn cupd3(n: usize) -> Structure {
        let bulk = BulkSpec::L12 {
            a_element: "Pd".into(),
            b_element: "Cu".into(),
            a: 3.85,
        };
        build_slab(&bulk, &SlabMetadata::new("CuPd3", [1, 1, 1], 3), (n, n)).unwrap()
    }

    #[test]
    fn surface_of_fcc111() {
        let s = pt([1, 1, 1], 3, 2);
        let top = surface_atoms(&s, 0.5).unwrap();
        assert_eq!(top.len(), 4);
        let z_max = s.atoms.iter().map(|a| a.position.z).fold(f64::MIN, f64::max);
        assert!(top.iter().all(|&i| (s.atoms[i].position.z - z_max).abs() < 1e-9));
    }

    #[test]
    fn adatom_is_the_only_surface_atom() {
        let mut s = pt([1, 1, 1], 3, 2);
        let z_max = s.atoms.iter().map(|a| a.position.z).fold(f64::MIN, f64::max);
        s.atoms
            .push(Atom::new("Pt", Vec3::new(0.1, 0.2, z_max + 2.0), Tag::Surface).unwrap());
        assert_eq!(surface_atoms(&s, 0.5).unwrap(), vec![s.len() - 1]);
    }

    #[test]
    fn all_adsorbate_has_no_surface() {
        let s = Structure::new(
            Lattice::cubic(10.0),
            vec![Atom::new("H", Vec3::zeros(), Tag::Adsorbate).unwrap()],
        )
        .unwrap();
        assert_eq!(surface_atoms(&s, 0.5), Err(SiteError::NoSurface));
    }

    #[test]
    fn two_triangles_per_lattice_point() {
        for (m, n) in [([1, 1, 1], 1), ([1, 1, 1], 3), ([1, 0, 0], 1), ([1, 0, 0], 2)] {
            let s = pt(m, 3, n);
            let t = triangulate_surface(&s).unwrap();
            assert_eq!(t.triangles.len(), 2 * n * n, "{m:?} {n}");
            assert!((t.total_area() - s.lattice.in_plane_area()).abs() < 1e-6);
        }
    }

    #[test]
    fn fcc111_site_counts() {
        for n in 1..=3 {
            let sites = enumerate_heuristic_sites(&pt([1, 1, 1], 3, n)).unwrap();
            assert_eq!(count_by_kind(&sites), (n * n, 3 * n * n, 2 * n * n));
        }
    }

    #[test]
    fn fcc100_fourfold_hollow() {
        let sites = enumerate_heuristic_sites(&pt([1, 0, 0], 3, 1)).unwrap();
        assert_eq!(count_by_kind(&sites), (1, 2, 1));
        let hollow = sites.iter().find(|s| s.kind == SiteKind::Hollow).unwrap();
        assert_eq!(hollow.parents.len(), 4);
        let sites = enumerate_heuristic_sites(&pt([1, 0, 0], 3, 2)).unwrap();
        assert_eq!(count_by_kind(&sites), (4, 8, 4));
    }

    #[test]
    fn sites_lie_in_home_cell_at_surface_height() {
        let s = cupd3(2);
        let plane = Plane::of(&s);
        let z_max = s.atoms.iter().map(|a| a.position.z).fold(f64::MIN, f64::max);
        for site in enumerate_heuristic_sites(&s).unwrap() {
            let f = plane.frac([site.position.x, site.position.y]);
            assert!(f.iter().all(|x| *x >= -1e-7 && *x < 1.0), "{f:?}");
            assert!((site.position.z - z_max).abs() < 1e-9);
            let arity = match site.kind {
                SiteKind::Ontop => 1,
                SiteKind::Bridge => 2,
                _ => 3,
            };
            assert_eq!(site.parents.len(), arity);
        }
    }

    /// Independent count: nearest-neighbour pairs of the top layer under
    /// explicit image search, classified by element pair.
    #[test]
    fn l12_bridges_partition_by_element_pair() {
        let s = cupd3(2);
        let top = surface_atoms(&s, 0.5).unwrap();
        let nn = 3.85 / 2f64.sqrt();
        let (a, b) = (s.lattice.vector(0), s.lattice.vector(1));
        let mut brute: HashMap<Vec<String>, usize> = HashMap::new();
        for (x, &i) in top.iter().enumerate() {
            for &j in &top[x..] {
                for u in -2..=2 {
                    for v in -2..=2 {
                        if i == j && (u, v) <= (0, 0) {
                            continue;
                        }
                        let d = s.atoms[j].position + a * u as f64 + b * v as f64 - s.atoms[i].position;
                        if (d.norm() - nn).abs() < 1e-6 {
                            let mut k = vec![s.atoms[i].symbol().to_string(), s.atoms[j].symbol().to_string()];
                            k.sort();
                            *brute.entry(k).or_default() += 1;
                        }
                    }
                }
            }
        }
        let mut got: HashMap<Vec<String>, usize> = HashMap::new();
        for site in enumerate_heuristic_sites(&s).unwrap() {
            if site.kind == SiteKind::Bridge {
                *got.entry(site.element_multiset()).or_default() += 1;
            }
        }
        assert_eq!(got, brute);
        assert_eq!(got.len(), 2);
        assert!(!got.contains_key(&vec!["Cu".to_string(), "Cu".to_string()]));
    }

    #[test]
    fn random_sites_are_reproducible() {
        let s = pt([1, 1, 1], 3, 2);
        let a = sample_random_sites(&s, 5, 11).unwrap();
        assert_eq!(a, sample_random_sites(&s, 5, 11).unwrap());
        assert_ne!(a, sample_random_sites(&s, 5, 12).unwrap());
        assert!(a.iter().all(|x| x.kind == SiteKind::Random && x.parents.len() == 3));
        assert_eq!(sample_random_sites(&s, 0, 1), Err(SiteError::EmptyRequest));
    }

    #[test]
    fn samples_stay_inside_their_triangle() {
        let tris = [
            [[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]],
            [[2.0, 0.0], [2.0, 3.0], [0.0, 1.0]],
        ];
        let mut r = rng::stream(3, 0);
        for (t, p) in sample_in_triangles(&tris, 2000, &mut r) {
            let [a, b, c] = tris[t];
            let sub = |q: [f64; 2], r: [f64; 2], s: [f64; 2]| area(&[q, r, s]);
            let whole = area(&tris[t]);
            assert!((sub(p, b, c) + sub(a, p, c) + sub(a, b, p) - whole).abs() < 1e-9);
        }
    }
}
