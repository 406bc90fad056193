//! Row-wise kernels shared by forward and backward passes.

use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::float::Float;

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) struct LnCache<F> {
    pub xhat: Array2<F>,
    pub rstd: Array1<F>,
}

pub(crate) fn layer_norm<F: Float>(
    x: &Array2<F>,
    gain: &Array1<F>,
    bias: &Array1<F>,
) -> (Array2<F>, LnCache<F>) {
    let (n, d) = x.dim();
    let inv_d = F::from_f64(1.0 / d as f64);
    let eps = F::from_f64(LN_EPS);
    let mut xhat = Array2::zeros((n, d));
    let mut rstd = Array1::zeros(n);
    let mut y = Array2::zeros((n, d));
    for (((xr, mut hr), mut yr), r) in x
        .outer_iter()
        .zip(xhat.outer_iter_mut())
        .zip(y.outer_iter_mut())
        .zip(rstd.iter_mut())
    {
        let mean = xr.sum() * inv_d;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
        let rs = F::one() / (var + eps).sqrt();
        *r = rs;
        for j in 0..d {
            let h = (xr[j] - mean) * rs;
            hr[j] = h;
            yr[j] = h * gain[j] + bias[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Returns `dx`; accumulates into `dgain`/`dbias` when given.
pub(crate) fn layer_norm_backward<F: Float>(
    dy: &Array2<F>,
    cache: &LnCache<F>,
    gain: &Array1<F>,
    dgain: Option<&mut Array1<F>>,
    dbias: Option<&mut Array1<F>>,
) -> Array2<F> {
    let (n, d) = dy.dim();
    if let Some(dg) = dgain {
        for (dyr, hr) in dy.outer_iter().zip(cache.xhat.outer_iter()) {
            for j in 0..d {
                dg[j] += dyr[j] * hr[j];
            }
        }
    }
    if let Some(db) = dbias {
        *db += &dy.sum_axis(Axis(0));
    }
    let inv_d = F::from_f64(1.0 / d as f64);
    let mut dx = Array2::zeros((n, d));
    for i in 0..n {
        let dyr = dy.row(i);
        let hr = cache.xhat.row(i);
        let mut sum_g = F::zero();
        let mut sum_gh = F::zero();
        for j in 0..d {
            let g = dyr[j] * gain[j];
            sum_g += g;
            sum_gh += g * hr[j];
        }
        let rs = cache.rstd[i];
        let mut dxr = dx.row_mut(i);
        for j in 0..d {
            let g = dyr[j] * gain[j];
            dxr[j] = rs * (g - inv_d * sum_g - hr[j] * inv_d * sum_gh);
        }
    }
    dx
}

#[inline]
pub(crate) fn gelu<F: Float>(u: F) -> F {
    let c = F::from_f64(GELU_C);
    let a = F::from_f64(GELU_A);
    let half = F::from_f64(0.5);
    half * u * (F::one() + (c * (u + a * u * u * u)).tanh())
}

#[inline]
pub(crate) fn gelu_grad<F: Float>(u: F) -> F {
    let c = F::from_f64(GELU_C);
    let a = F::from_f64(GELU_A);
    let half = F::from_f64(0.5);
    let t = (c * (u + a * u * u * u)).tanh();
    let three = F::from_f64(3.0);
    half * (F::one() + t) + half * u * (F::one() - t * t) * c * (F::one() + three * a * u * u)
}

/// Causal softmax in place: row `i` is normalized over columns `0..=i`,
/// later columns are set to zero.
pub(crate) fn causal_softmax<F: Float>(mut s: ArrayViewMut2<F>) {
    let n = s.nrows();
    for i in 0..n {
        let mut row = s.row_mut(i);
        let mut m = row[0];
        for j in 1..=i {
            m = m.max(row[j]);
        }
        let mut sum = F::zero();
        for j in 0..=i {
            let e = (row[j] - m).exp();
            row[j] = e;
            sum += e;
        }
        let inv = F::one() / sum;
        for j in 0..=i {
            row[j] *= inv;
        }
        for j in i + 1..row.len() {
            row[j] = F::zero();
        }
    }
}

/// Gradient of the causal softmax: `ds = p * (dp - <p, dp>)` on the causal
/// triangle, zero above it.
pub(crate) fn causal_softmax_backward<F: Float>(p: ArrayView2<F>, dp: &mut Array2<F>) {
    let n = p.nrows();
    for i in 0..n {
        let pr = p.row(i);
        let mut dr = dp.row_mut(i);
        let mut dot = F::zero();
        for j in 0..=i {
            dot += pr[j] * dr[j];
        }
        for j in 0..=i {
            dr[j] = pr[j] * (dr[j] - dot);
        }
        for j in i + 1..dr.len() {
            dr[j] = F::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &u in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((fd - gelu_grad(u)).abs() < 1e-8, "u={u}");
        }
    }

    #[test]
    fn causal_softmax_rows() {
        let mut s = array![[1.0f64, 9.0, 9.0], [0.0, 0.0, 9.0], [1.0, 2.0, 3.0]];
        causal_softmax(s.view_mut());
        assert_eq!(s.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(s.row(1).to_vec(), vec![0.5, 0.5, 0.0]);
        assert!((s.row(2).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_backward_matches_fd() {
        let x = array![[0.3f64, -1.2, 2.0, 0.5], [1.0, 1.5, -0.5, 0.0]];
        let g = array![1.1, 0.9, -0.3, 2.0];
        let b = array![0.1, 0.0, -0.2, 0.3];
        let w = array![[0.7, -0.1, 0.4, 1.3], [-0.6, 0.2, 0.9, 0.05]];
        let loss = |x: &Array2<f64>| (layer_norm(x, &g, &b).0 * &w).sum();
        let (_, cache) = layer_norm(&x, &g, &b);
        let dx = layer_norm_backward(&w, &cache, &g, None, None);
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..4 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
                assert!((fd - dx[[i, j]]).abs() < 1e-7);
            }
        }
    }
}
