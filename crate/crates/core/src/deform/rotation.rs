//! Axis-angle exponential and logarithm on SO(3).

use nalgebra::{Matrix3, Vector3};

const SMALL_ANGLE: f64 = 1e-6;
/// Below this value of cos θ the axis is read from the symmetric part,
/// where the skew part (∝ sin θ) loses precision.
const NEAR_PI_COS: f64 = -0.99;

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula; `v = ω·θ` with unit axis ω.
pub fn rotation_exp(v: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(v);
    Matrix3::identity() + k * a + k * k * b
}

/// Canonical log with `‖v‖ = θ ∈ [0, π]`.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let w = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let sin_t = 0.5 * w.norm();
    let cos_t = (0.5 * (r.trace() - 1.0)).clamp(-1.0, 1.0);
    let theta = sin_t.atan2(cos_t);
    if theta < SMALL_ANGLE {
        return w * (0.5 * (1.0 + theta * theta / 6.0));
    }
    if cos_t > NEAR_PI_COS {
        return w * (theta / w.norm());
    }
    // aaᵀ = (sym(R) - cos θ I) / (1 - cos θ)
    let sym = (r + r.transpose()) * 0.5;
    let m = (sym - Matrix3::identity() * cos_t) / (1.0 - cos_t);
    let k = (0..3)
        .max_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]))
        .unwrap();
    let mut axis = m.column(k).into_owned();
    axis /= axis.norm();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    axis * theta
}
