//! Periodic-channel tetrahedral mesh.
//!
//! The mesh is a structured hexahedral grid on [0,Lx] x [-1,1] x [0,Lz],
//! uniform in x and z and stretched in y by a tanh law, with every hexahedron
//! split into 6 tetrahedra by the Kuhn (marching) subdivision. Using the same
//! split pattern in every hex makes the triangulation conforming: triangles on
//! shared hex faces match exactly, including across the periodic x and z
//! boundaries.

use crate::basis::{map_to_physical, Basis, TetGeometry, FACE_VERTS, PERMS3};
use crate::{Error, Result};
use std::collections::HashMap;
use std::io::Write;

/// Parameters of the channel mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub lz: f64,
    /// tanh stretching parameter; 0 selects the uniform-grid limit.
    pub omega: f64,
    /// Position of the first off-wall plane; when set, `omega` is solved for.
    pub y1_target: Option<f64>,
    /// Replace the walls by y-periodicity (verification meshes only).
    pub periodic_y: bool,
}

impl ChannelMeshSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 1 || self.ny < 1 || self.nz < 1 {
            return Err(Error::invalid("element counts must be >= 1"));
        }
        if !(self.lx > 0.0) || !(self.lz > 0.0) {
            return Err(Error::invalid("box dimensions must be positive"));
        }
        if !(self.omega >= 0.0) || !self.omega.is_finite() {
            return Err(Error::invalid(format!(
                "stretching parameter omega = {} must be finite and >= 0",
                self.omega
            )));
        }
        if let Some(y1) = self.y1_target {
            let upper = -1.0 + 2.0 / self.ny as f64;
            if !(y1 > -1.0 && y1 <= upper) {
                return Err(Error::invalid(format!(
                    "y1_target = {y1} outside feasible range (-1, {upper}]"
                )));
            }
        }
        Ok(())
    }

    /// Stretching parameter to use, solving for `y1_target` when present.
    pub fn resolved_omega(&self) -> Result<f64> {
        match self.y1_target {
            Some(y1) => solve_omega(y1, self.ny),
            None => Ok(self.omega),
        }
    }
}

/// One tetrahedral element with its parent-hexahedron metadata.
#[derive(Debug, Clone)]
pub struct Tet {
    pub verts: [usize; 4],
    pub hex: usize,
    /// Dimensions of the parent hexahedron in x, y, z.
    pub hex_dims: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    /// Paired across the periodic x, z (or y) boundaries.
    Periodic,
    /// y = -1 wall.
    WallBottom,
    /// y = +1 wall.
    WallTop,
}

/// One side of a mesh face.
#[derive(Debug, Clone, Copy)]
pub struct FaceSide {
    pub tet: usize,
    pub local_face: u8,
    /// Index into [`PERMS3`]: canonical node position -> face vertex slot.
    pub perm: u8,
}

/// A triangular face with its (up to) two sides.
#[derive(Debug, Clone)]
pub struct Face {
    pub kind: FaceKind,
    pub left: FaceSide,
    pub right: Option<FaceSide>,
    /// Unit normal, outward from the `left` element.
    pub normal: [f64; 3],
    pub area: f64,
    /// Index of the y = const grid plane containing this face, if any.
    pub y_plane: Option<usize>,
}

/// The channel mesh together with per-element affine geometry.
#[derive(Debug, Clone)]
pub struct ChannelMesh {
    pub spec: ChannelMeshSpec,
    pub omega: f64,
    pub vertices: Vec<[f64; 3]>,
    pub tets: Vec<Tet>,
    pub faces: Vec<Face>,
    pub geom: Vec<TetGeometry>,
    pub y_planes: Vec<f64>,
    /// For each y grid plane, indices of the faces lying in it.
    pub plane_faces: Vec<Vec<usize>>,
}

/// y = const planes of the stretched grid: y_j = -tanh(w(1-2j/N))/tanh(w).
///
/// `omega == 0` selects the uniform limit. Planes are exactly antisymmetric
/// about y = 0 by mirrored construction.
pub fn stretched_planes_raw(omega: f64, ny: usize) -> Result<Vec<f64>> {
    if ny < 1 {
        return Err(Error::invalid("ny must be >= 1"));
    }
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(Error::invalid(format!("invalid stretching parameter {omega}")));
    }
    let n = ny as f64;
    let mut y = vec![0.0; ny + 1];
    let tw = omega.tanh();
    for j in 0..=ny / 2 {
        let v = if omega == 0.0 {
            (2.0 * j as f64 - n) / n
        } else {
            let v = -((omega * (1.0 - 2.0 * j as f64 / n)).tanh()) / tw;
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "stretching overflow for omega = {omega}"
                )));
            }
            v
        };
        y[j] = v;
        y[ny - j] = -v;
    }
    Ok(y)
}

/// Planes for a mesh spec (resolving `y1_target` when set).
pub fn stretched_planes(spec: &ChannelMeshSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    stretched_planes_raw(spec.resolved_omega()?, spec.ny)
}

/// Solve for the stretching parameter that puts the first off-wall plane at
/// `y1_target`. The target must lie in (-1, -1 + 2/ny]; the upper endpoint is
/// the uniform-grid limit and returns omega = 0.
pub fn solve_omega(y1_target: f64, ny: usize) -> Result<f64> {
    if ny < 1 {
        return Err(Error::invalid("ny must be >= 1"));
    }
    let uniform_y1 = -1.0 + 2.0 / ny as f64;
    if y1_target == uniform_y1 {
        return Ok(0.0);
    }
    if !(y1_target > -1.0 && y1_target < uniform_y1) {
        return Err(Error::invalid(format!(
            "y1_target = {y1_target} infeasible; must lie in (-1, {uniform_y1})"
        )));
    }
    let y1_of = |w: f64| -> f64 { -((w * (1.0 - 2.0 / ny as f64)).tanh()) / w.tanh() };
    // y1(omega) decreases monotonically from the uniform value to -1.
    let (mut lo, mut hi) = (1e-8, 60.0);
    if y1_of(hi) > y1_target {
        return Err(Error::invalid(format!(
            "y1_target = {y1_target} too close to the wall to resolve"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = y1_of(mid);
        if v > y1_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (v - y1_target).abs() <= 1e-13 || (hi - lo) < f64::EPSILON * hi {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The 6 permutations generating the Kuhn subdivision, with parity:
/// tet vertices are the lattice path 0 -> e_p0 -> e_p0+e_p1 -> (1,1,1).
const KUHN_PERMS: [([usize; 3], bool); 6] = [
    ([0, 1, 2], true),
    ([0, 2, 1], false),
    ([1, 0, 2], false),
    ([1, 2, 0], true),
    ([2, 0, 1], true),
    ([2, 1, 0], false),
];

/// Build the mesh for a validated spec.
pub fn build_mesh(spec: &ChannelMeshSpec) -> Result<ChannelMesh> {
    spec.validate()?;
    let omega = spec.resolved_omega()?;
    let (nx, ny, nz) = (spec.nx, spec.ny, spec.nz);
    let ys = stretched_planes_raw(omega, ny)?;
    let xs: Vec<f64> = (0..=nx).map(|i| spec.lx * (i as f64 / nx as f64)).collect();
    let zs: Vec<f64> = (0..=nz).map(|k| spec.lz * (k as f64 / nz as f64)).collect();

    let vid = |i: usize, j: usize, k: usize| -> usize { (i * (ny + 1) + j) * (nz + 1) + k };
    let mut vertices = vec![[0.0; 3]; (nx + 1) * (ny + 1) * (nz + 1)];
    let mut grid_of = vec![[0usize; 3]; vertices.len()];
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                vertices[vid(i, j, k)] = [xs[i], ys[j], zs[k]];
                grid_of[vid(i, j, k)] = [i, j, k];
            }
        }
    }

    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let hex = (i * ny + j) * nz + k;
                let dims = [xs[i + 1] - xs[i], ys[j + 1] - ys[j], zs[k + 1] - zs[k]];
                let corner = |d: [usize; 3]| vid(i + d[0], j + d[1], k + d[2]);
                for (perm, even) in KUHN_PERMS {
                    let mut path = [[0usize; 3]; 4];
                    for (step, axis) in perm.iter().enumerate() {
                        path[step + 1] = path[step];
                        path[step + 1][*axis] = 1;
                    }
                    let mut verts = [
                        corner(path[0]),
                        corner(path[1]),
                        corner(path[2]),
                        corner(path[3]),
                    ];
                    if !even {
                        verts.swap(1, 2);
                    }
                    tets.push(Tet {
                        verts,
                        hex,
                        hex_dims: dims,
                    });
                }
            }
        }
    }

    let mut geom = Vec::with_capacity(tets.len());
    for (e, t) in tets.iter().enumerate() {
        let vs = [
            vertices[t.verts[0]],
            vertices[t.verts[1]],
            vertices[t.verts[2]],
            vertices[t.verts[3]],
        ];
        geom.push(map_to_physical(&vs, e)?);
    }

    let faces = build_faces(spec, &tets, &vertices, &geom, &grid_of)?;

    let mut plane_faces = vec![Vec::new(); ny + 1];
    for (fi, f) in faces.iter().enumerate() {
        if let Some(p) = f.y_plane {
            plane_faces[p].push(fi);
        }
    }

    Ok(ChannelMesh {
        spec: spec.clone(),
        omega,
        vertices,
        tets,
        faces,
        geom,
        y_planes: ys,
        plane_faces,
    })
}

fn perm_index(slots: [usize; 3]) -> u8 {
    PERMS3
        .iter()
        .position(|p| *p == slots)
        .expect("valid permutation") as u8
}

/// Locate, among the three vertices of `local_face` of tet `t`, the slot
/// holding global vertex `gv`.
fn face_slot(t: &Tet, local_face: usize, gv: usize) -> Option<usize> {
    FACE_VERTS[local_face]
        .iter()
        .position(|&lv| t.verts[lv] == gv)
}

fn side_for(t: &Tet, tet_idx: usize, local_face: usize, canonical: &[usize; 3]) -> FaceSide {
    let mut slots = [0usize; 3];
    for (p, gv) in canonical.iter().enumerate() {
        slots[p] = face_slot(t, local_face, *gv).expect("canonical vertex on face");
    }
    FaceSide {
        tet: tet_idx,
        local_face: local_face as u8,
        perm: perm_index(slots),
    }
}

fn triangle_geometry(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> ([f64; 3], f64) {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    ([n[0] / len, n[1] / len, n[2] / len], 0.5 * len)
}

fn build_faces(
    spec: &ChannelMeshSpec,
    tets: &[Tet],
    vertices: &[[f64; 3]],
    geom: &[TetGeometry],
    grid_of: &[[usize; 3]],
) -> Result<Vec<Face>> {
    let (nx, ny, nz) = (spec.nx, spec.ny, spec.nz);
    let mut by_key: HashMap<[usize; 3], Vec<(usize, usize)>> = HashMap::new();
    for (e, t) in tets.iter().enumerate() {
        for f in 0..4 {
            let mut key = [
                t.verts[FACE_VERTS[f][0]],
                t.verts[FACE_VERTS[f][1]],
                t.verts[FACE_VERTS[f][2]],
            ];
            key.sort_unstable();
            by_key.entry(key).or_default().push((e, f));
        }
    }

    let mut faces = Vec::new();
    // (axis, lo-plane key) -> boundary singletons awaiting a periodic partner.
    let mut boundary: HashMap<(usize, [usize; 3]), Vec<(usize, usize)>> = HashMap::new();

    let finish = |faces: &mut Vec<Face>,
                  kind: FaceKind,
                  canonical: [usize; 3],
                  left: (usize, usize),
                  right: Option<((usize, usize), [usize; 3])>| {
        let lt = &tets[left.0];
        let lside = side_for(lt, left.0, left.1, &canonical);
        let a = vertices[canonical[0]];
        let b = vertices[canonical[1]];
        let c = vertices[canonical[2]];
        let (mut normal, area) = triangle_geometry(a, b, c);
        // Orient outward from the left element.
        let centroid = geom[left.0].to_physical([0.25, 0.25, 0.25]);
        let fc = [
            (a[0] + b[0] + c[0]) / 3.0,
            (a[1] + b[1] + c[1]) / 3.0,
            (a[2] + b[2] + c[2]) / 3.0,
        ];
        let dot = (0..3).map(|d| normal[d] * (fc[d] - centroid[d])).sum::<f64>();
        if dot < 0.0 {
            for n in normal.iter_mut() {
                *n = -*n;
            }
        }
        let rside = right.map(|((tet, lf), canon_r)| side_for(&tets[tet], tet, lf, &canon_r));
        let gj = grid_of[canonical[0]][1];
        let y_plane = if canonical.iter().all(|&v| grid_of[v][1] == gj) {
            Some(gj)
        } else {
            None
        };
        faces.push(Face {
            kind,
            left: lside,
            right: rside,
            normal,
            area,
            y_plane,
        });
    };

    let mut keys: Vec<_> = by_key.into_iter().collect();
    keys.sort_unstable_by_key(|(k, _)| *k);
    for (key, sides) in keys {
        match sides.len() {
            2 => finish(
                &mut faces,
                FaceKind::Interior,
                key,
                sides[0],
                Some((sides[1], key)),
            ),
            1 => {
                let (e, f) = sides[0];
                let g: Vec<[usize; 3]> = key.iter().map(|&v| grid_of[v]).collect();
                let on = |axis: usize, val: usize| g.iter().all(|gi| gi[axis] == val);
                if !spec.periodic_y && on(1, 0) {
                    finish(&mut faces, FaceKind::WallBottom, key, (e, f), None);
                } else if !spec.periodic_y && on(1, ny) {
                    finish(&mut faces, FaceKind::WallTop, key, (e, f), None);
                } else {
                    let axis = if on(0, 0) || on(0, nx) {
                        0usize
                    } else if on(2, 0) || on(2, nz) {
                        2usize
                    } else if spec.periodic_y && (on(1, 0) || on(1, ny)) {
                        1usize
                    } else {
                        return Err(Error::invalid(
                            "unmatched interior face: non-conforming mesh".to_string(),
                        ));
                    };
                    let n_ax = [nx, ny, nz][axis];
                    let vid_stride =
                        |gi: [usize; 3]| -> usize { (gi[0] * (ny + 1) + gi[1]) * (nz + 1) + gi[2] };
                    let mut lo_key = [0usize; 3];
                    for (p, gi) in g.iter().enumerate() {
                        let mut gg = *gi;
                        if gg[axis] == n_ax {
                            gg[axis] = 0;
                        }
                        lo_key[p] = vid_stride(gg);
                    }
                    lo_key.sort_unstable();
                    boundary.entry((axis, lo_key)).or_default().push((e, f));
                }
            }
            n => {
                return Err(Error::invalid(format!(
                    "face shared by {n} elements: non-conforming mesh"
                )))
            }
        }
    }

    let mut pairs: Vec<_> = boundary.into_iter().collect();
    pairs.sort_unstable_by_key(|((axis, k), _)| (*axis, *k));
    for ((axis, lo_key), mut entries) in pairs {
        if entries.len() != 2 {
            return Err(Error::invalid(format!(
                "periodic face matched {} sides",
                entries.len()
            )));
        }
        entries.sort_unstable();
        let (le, lf) = entries[0];
        let (re, rf) = entries[1];
        // Canonical order follows the lo-side key; per side, translate each
        // canonical id into that side's own vertex numbering.
        let n_ax = [nx, ny, nz][axis];
        let canon_for = |side_tet: usize, side_face: usize| -> [usize; 3] {
            let t = &tets[side_tet];
            let mut canon = [0usize; 3];
            for (p, &lo) in lo_key.iter().enumerate() {
                let lg = grid_of[lo];
                let found = FACE_VERTS[side_face]
                    .iter()
                    .map(|&lv| t.verts[lv])
                    .find(|&gv| {
                        let gg = grid_of[gv];
                        (0..3).all(|d| {
                            gg[d] == lg[d] || (d == axis && lg[d] == 0 && gg[d] == n_ax)
                        })
                    })
                    .expect("periodic partner vertex");
                canon[p] = found;
            }
            canon
        };
        let canon_l = canon_for(le, lf);
        let canon_r = canon_for(re, rf);
        finish(
            &mut faces,
            FaceKind::Periodic,
            canon_l,
            (le, lf),
            Some(((re, rf), canon_r)),
        );
    }

    faces.sort_by_key(|f| (f.left.tet, f.left.local_face));
    Ok(faces)
}

impl ChannelMesh {
    pub fn n_elements(&self) -> usize {
        self.tets.len()
    }

    pub fn box_volume(&self) -> f64 {
        self.spec.lx * 2.0 * self.spec.lz
    }

    /// Distance to the nearest wall for every volume quadrature node,
    /// `[elem * n_nodes + node]`. Infinite for y-periodic meshes.
    pub fn node_wall_distances(&self, basis: &Basis) -> Vec<f64> {
        let nn = basis.quad.nodes.len();
        let mut out = vec![0.0; self.tets.len() * nn];
        for (e, g) in self.geom.iter().enumerate() {
            for (n, p) in basis.quad.nodes.iter().enumerate() {
                let y = g.to_physical(*p)[1];
                out[e * nn + n] = if self.spec.periodic_y {
                    f64::INFINITY
                } else {
                    1.0 - y.abs()
                };
            }
        }
        out
    }

    /// Plain-text element/vertex listing for debugging.
    pub fn dump_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# vertices {}", self.vertices.len())?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(w, "{i} {:.17e} {:.17e} {:.17e}", v[0], v[1], v[2])?;
        }
        writeln!(w, "# tets {}", self.tets.len())?;
        for t in &self.tets {
            writeln!(
                w,
                "{} {} {} {} {}",
                t.verts[0], t.verts[1], t.verts[2], t.verts[3], t.hex
            )?;
        }
        Ok(())
    }
}
