//! Small dense kernels over row-major `f64` slices.

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out = m · x + bias`, with `m` of shape `out.len() × x.len()`.
#[inline]
pub(crate) fn affine(m: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(m.len(), out.len() * cols);
    for ((o, row), b) in out.iter_mut().zip(m.chunks_exact(cols)).zip(bias) {
        *o = dot(row, x) + b;
    }
}

/// `out += mᵀ · y`, with `m` of shape `y.len() × out.len()`.
#[inline]
pub(crate) fn add_transposed(m: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (row, &yi) in m.chunks_exact(cols).zip(y) {
        if yi != 0.0 {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * yi;
            }
        }
    }
}

/// `g += y ⊗ x` for a row-major gradient block of shape `y.len() × x.len()`.
#[inline]
pub(crate) fn add_outer(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (row, &yi) in g.chunks_exact_mut(cols).zip(y) {
        if yi != 0.0 {
            for (gj, xj) in row.iter_mut().zip(x) {
                *gj += yi * xj;
            }
        }
    }
}
