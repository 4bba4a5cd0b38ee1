use nalgebra::Matrix3;

/// `T = R S` with `R` a proper rotation and `S` symmetric.
///
/// When `det T < 0` the reflection is folded into `S` by flipping the sign
/// carried by the smallest singular value.
pub fn polar_decompose(t: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let svd = t.svd(true, true);
    let mut u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut sigma = svd.singular_values;
    if (u * v_t).determinant() < 0.0 {
        let k = sigma.imin();
        u.column_mut(k).neg_mut();
        sigma[k] = -sigma[k];
    }
    let r = u * v_t;
    let s = v_t.transpose() * Matrix3::from_diagonal(&sigma) * v_t;
    (r, (s + s.transpose()) * 0.5)
}
