use std::collections::HashMap;

use super::{Mesh, Vec3};

/// Unit icosphere; `subdivisions = 1` gives 42 vertices.
pub fn icosphere(subdivisions: usize) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for v in &mut verts {
        *v = unit(*v);
    }
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let p = verts[a];
                let q = verts[b];
                verts.push(unit([
                    (p[0] + q[0]) / 2.0,
                    (p[1] + q[1]) / 2.0,
                    (p[2] + q[2]) / 2.0,
                ]));
                verts.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Mesh::new(verts, faces).expect("icosphere construction is valid")
}

fn unit(v: Vec3) -> Vec3 {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Regular `cols x rows` grid over `[-1, 1]²` in the z = 0 plane, each cell
/// split along alternating diagonals. Vertex `r * cols + c` sits at column c, row r.
pub fn grid_patch(cols: usize, rows: usize) -> Mesh {
    assert!(cols >= 2 && rows >= 2, "grid needs at least 2x2 vertices");
    let mut verts = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let u = -1.0 + 2.0 * c as f64 / (cols - 1) as f64;
            let v = -1.0 + 2.0 * r as f64 / (rows - 1) as f64;
            verts.push([u, v, 0.0]);
        }
    }
    let mut faces = Vec::with_capacity(2 * (cols - 1) * (rows - 1));
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let a = r * cols + c;
            let b = a + 1;
            let d = a + cols;
            let e = d + 1;
            if (r + c) % 2 == 0 {
                faces.push([a, b, e]);
                faces.push([a, e, d]);
            } else {
                faces.push([a, b, d]);
                faces.push([b, e, d]);
            }
        }
    }
    Mesh::new(verts, faces).expect("grid construction is valid")
}
/// `cols x rows` patch of near-equilateral triangles: odd rows are shifted by
/// half a column. Coordinates are normalized to `[-1, 1]²` at z = 0 and vertex
/// `r * cols + c` sits at column c, row r. Faces are counter-clockwise seen from +z.
pub fn offset_patch(cols: usize, rows: usize) -> Mesh {
    assert!(cols >= 2 && rows >= 2, "patch needs at least 2x2 vertices");
    let width = cols as f64 - 0.5;
    let height = (rows - 1) as f64;
    let mut verts = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        let shift = if r % 2 == 1 { 0.5 } else { 0.0 };
        for c in 0..cols {
            let x = c as f64 + shift;
            verts.push([2.0 * x / width - 1.0, 2.0 * r as f64 / height - 1.0, 0.0]);
        }
    }
    let id = |c: usize, r: usize| r * cols + c;
    let mut faces = Vec::with_capacity(2 * (cols - 1) * (rows - 1));
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let tris = if r % 2 == 0 {
                [
                    [id(c, r), id(c + 1, r), id(c, r + 1)],
                    [id(c + 1, r), id(c + 1, r + 1), id(c, r + 1)],
                ]
            } else {
                [
                    [id(c, r), id(c + 1, r + 1), id(c, r + 1)],
                    [id(c, r), id(c + 1, r), id(c + 1, r + 1)],
                ]
            };
            for t in tris {
                let [a, b, c] = t.map(|i| verts[i]);
                let signed = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
                faces.push(if signed > 0.0 { t } else { [t[0], t[2], t[1]] });
            }
        }
    }
    Mesh::new(verts, faces).expect("patch construction is valid")
}
