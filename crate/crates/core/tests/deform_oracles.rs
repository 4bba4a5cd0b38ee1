mod common;

use common::*;
use facerep::deform::{decode_drf, encode_drf, DrFeature, ReferenceFrame};
use facerep::mesh::{cotangent_weights, Mesh};
use facerep::metrics::e_avd;
use facerep::synth::{generate, Corpus, CorpusSpec};
use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Unit, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn corpus() -> &'static (Corpus, ReferenceFrame) {
    static C: OnceLock<(Corpus, ReferenceFrame)> = OnceLock::new();
    C.get_or_init(|| {
        let c = generate(&CorpusSpec {
            cols: 12,
            rows: 12,
            identities: 4,
            expressions: 6,
            held_out: 1,
            seed: 3,
        })
        .unwrap();
        let f = ReferenceFrame::new(c.reference.clone()).unwrap();
        (c, f)
    })
}

fn v3(p: [f64; 3]) -> Vector3<f64> {
    Vector3::from(p)
}

/// Area-weighted unit normal and area of the faces around `i`.
fn vertex_normal(mesh: &Mesh, i: usize) -> (Vector3<f64>, f64) {
    let v = mesh.vertices();
    let mut n = Vector3::zeros();
    for f in mesh.faces().iter().filter(|f| f.contains(&i)) {
        n += (v3(v[f[1]]) - v3(v[f[0]])).cross(&(v3(v[f[2]]) - v3(v[f[0]])));
    }
    let area = 0.5
        * mesh
            .faces()
            .iter()
            .filter(|f| f.contains(&i))
            .map(|f| {
                (v3(v[f[1]]) - v3(v[f[0]]))
                    .cross(&(v3(v[f[2]]) - v3(v[f[0]])))
                    .norm()
            })
            .sum::<f64>();
    (n.normalize(), area)
}

/// Best-fit `T` for vertex `i` from the stacked weighted correspondences
/// (1-ring edges plus the scaled normal), solved by SVD of the 3k x 9 system.
fn stacked_fit(reference: &Mesh, deformed: &Mesh, i: usize) -> Matrix3<f64> {
    let w = cotangent_weights(reference).unwrap();
    let (p, q) = (reference.vertices(), deformed.vertices());
    let mut pairs: Vec<(f64, Vector3<f64>, Vector3<f64>)> = Vec::new();
    let (mut csum, mut spread) = (0.0, 0.0);
    for (&j, &c) in w.neighbors(i).iter().zip(w.ring(i)) {
        let d = v3(p[i]) - v3(p[j]);
        pairs.push((c, d, v3(q[i]) - v3(q[j])));
        csum += c;
        spread += c * d.norm_squared();
    }
    let len = (spread / csum).sqrt();
    let (n0, a0) = vertex_normal(reference, i);
    let (n1, a1) = vertex_normal(deformed, i);
    pairs.push((0.5 * csum, n0 * len, n1 * len * (a1 / a0).sqrt()));
    let mut a = DMatrix::<f64>::zeros(3 * pairs.len(), 9);
    let mut b = DVector::<f64>::zeros(3 * pairs.len());
    for (k, (c, d, dq)) in pairs.iter().enumerate() {
        let s = c.sqrt();
        for r in 0..3 {
            for col in 0..3 {
                a[(3 * k + r, 3 * r + col)] = s * d[col];
            }
            b[3 * k + r] = s * dq[r];
        }
    }
    let x = a.svd(true, true).solve(&b, 1e-14).unwrap();
    Matrix3::from_row_slice(x.as_slice())
}

#[test]
fn deformation_gradients_match_stacked_least_squares() {
    let (c, frame) = corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for e in 1..c.expressions.len() {
        let mesh = c.mesh(1, e);
        let ts = frame.deformation_gradients(mesh).unwrap();
        for _ in 0..10 {
            let i = rng.random_range(0..mesh.vertex_count());
            let oracle = stacked_fit(frame.mesh(), mesh, i);
            let dev = (ts[i] - oracle).norm();
            assert!(dev < 1e-8, "expression {e}, vertex {i}: {dev}");
        }
    }
}

/// A second encode/decode pass moves the mesh less than the first one did.
#[test]
fn repeated_roundtrip_is_contractive() {
    let (c, frame) = corpus();
    for e in 1..c.expressions.len() {
        let mesh = c.mesh(2, e);
        let once = frame.decode(&frame.encode(mesh).unwrap()).unwrap();
        let twice = frame.decode(&frame.encode(&once).unwrap()).unwrap();
        let (a, b) = (once.centroid(), mesh.centroid());
        let aligned = mesh.translated([a[0] - b[0], a[1] - b[1], a[2] - b[2]]);
        let first = e_avd(&once, &aligned).unwrap();
        let second = e_avd(&twice, &once).unwrap();
        assert!(second < first, "expression {e}: {second} vs {first}");
    }
}

#[test]
fn rotation_logs_are_canonical() {
    let (c, frame) = corpus();
    for row in &c.meshes {
        for m in row {
            let f = frame.encode(m).unwrap();
            for r in f.values().rows() {
                assert!((r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt() <= std::f64::consts::PI);
            }
        }
    }
}

#[test]
fn decode_is_energy_optimal_and_centered() {
    let (c, frame) = corpus();
    for e in 0..c.expressions.len() {
        let mesh = c.mesh(0, e);
        let ts = frame.deformation_gradients(mesh).unwrap();
        let out = frame.decode_transforms(&ts).unwrap();
        assert!(frame.decode_energy(&ts, &out) <= frame.decode_energy(&ts, mesh) + 1e-9);
        let (a, b) = (out.centroid(), frame.mesh().centroid());
        assert!((v3(a) - v3(b)).norm() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn encode_ignores_translation(t in prop::array::uniform3(-500.0f64..500.0), e in 0usize..6) {
        let (c, frame) = corpus();
        let m = c.mesh(1, e);
        let moved = frame.encode(&m.translated(t)).unwrap();
        let base = frame.encode(m).unwrap();
        prop_assert_eq!(moved.reference_id(), base.reference_id());
        // edge vectors of the shifted copy differ by rounding only
        let worst = (moved.values() - base.values()).iter().fold(0.0f64, |a, b| a.max(b.abs()));
        prop_assert!(worst < 1e-9, "{}", worst);
    }

    #[test]
    fn similarity_transforms_are_recovered(
        axis in prop::array::uniform3(-1.0f64..1.0),
        theta in -3.0f64..3.0,
        s in 0.5f64..2.0,
        t in prop::array::uniform3(-50.0f64..50.0),
    ) {
        let axis = Vector3::from(axis);
        prop_assume!(axis.norm() > 1e-3);
        let (_, frame) = corpus();
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), theta);
        let moved = frame.mesh().map_vertices(|p| {
            let q = rot * v3(p) * s + v3(t);
            [q.x, q.y, q.z]
        });
        let expect = rot.matrix() * s;
        for ti in frame.deformation_gradients(&moved).unwrap() {
            prop_assert!((ti - expect).norm() < 1e-8);
        }
    }

    #[test]
    fn drf_bytes_roundtrip(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = ndarray::Array2::from_shape_simple_fn((n, 9), || rng.random_range(-4.0..4.0));
        let f = DrFeature::new(values, "abc").unwrap();
        let back = decode_drf(&encode_drf(&f)).unwrap();
        prop_assert_eq!(back.reference_id(), "abc");
        for (a, b) in f.values().iter().zip(back.values()) {
            prop_assert_eq!((*a as f32) as f64, *b);
        }
    }
}

#[test]
fn small_frame_is_valid() {
    let frame = small_frame();
    let rest = frame.rest_feature();
    for r in rest.values().rows() {
        let expect = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        for (a, b) in r.iter().zip(expect) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
