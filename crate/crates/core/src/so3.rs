//! Closed-form exponential and logarithm maps on SO(3).

use nalgebra::{Matrix3, Vector3};

/// Below this rotation angle the exponential uses its second-order series.
const EXP_SERIES_THRESHOLD: f64 = 1e-8;
/// Below this angle the logarithm uses its first-order series.
const LOG_SERIES_THRESHOLD: f64 = 1e-8;
/// Within this distance of pi the logarithm recovers the axis from the
/// symmetric part, where the skew part vanishes.
const LOG_NEAR_PI: f64 = 1e-4;

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues' formula for `exp([w]x)`.
pub fn exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = hat(w);
    let k2 = k * k;
    if theta < EXP_SERIES_THRESHOLD {
        return Matrix3::identity() + k + 0.5 * k2;
    }
    let (s, c) = theta.sin_cos();
    Matrix3::identity() + (s / theta) * k + ((1.0 - c) / (theta * theta)) * k2
}

/// Principal-branch logarithm, `|log(R)| <= pi`.
///
/// `r` must be a rotation matrix; no re-orthonormalization is done here.
pub fn log(r: &Matrix3<f64>) -> Vector3<f64> {
    // vee of the skew part is sin(theta) * axis.
    let skew = 0.5 * vee(&(r - r.transpose()));
    let sin_theta = skew.norm();
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < LOG_SERIES_THRESHOLD {
        return skew * (1.0 + theta * theta / 6.0);
    }
    if std::f64::consts::PI - theta > LOG_NEAR_PI {
        return skew * (theta / sin_theta);
    }

    // Near pi: sym(R) = cos(theta) I + (1 - cos(theta)) a a^T, so a a^T is
    // recovered from the symmetric part and its dominant column gives the
    // axis (the unit eigenvector), up to sign.
    let sym = 0.5 * (r + r.transpose());
    let outer = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let k = (0..3)
        .max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)]))
        .unwrap_or(0);
    let mut axis = outer.column(k).into_owned();
    axis /= axis.norm();
    if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Projects a nearly-orthonormal matrix back onto SO(3) via SVD.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return *m,
    };
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * vt;
    }
    r
}
