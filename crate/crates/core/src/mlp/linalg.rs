//! Dense f64 kernels for the network's three matrix shapes.
//!
//! Everything is row-major and allocation-free. Summation order is fixed,
//! so results are bit-identical across runs and thread counts; callers that
//! parallelize do so across independent output rows.

/// c[rows × n] = a[rows × k] · b[n × k]ᵀ.
///
/// `b` holds n rows of length k (a weight matrix in out×in layout), so each
/// output element is a dot product of two contiguous slices. Four output
/// columns share one pass over an `a` row.
pub fn gemm_abt(a: &[f64], b: &[f64], c: &mut [f64], rows: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), rows * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), rows * n);
    let n4 = n / 4 * 4;
    for i in 0..rows {
        let ar = &a[i * k..(i + 1) * k];
        let cr = &mut c[i * n..(i + 1) * n];
        let mut j = 0;
        while j < n4 {
            let b0 = &b[j * k..(j + 1) * k];
            let b1 = &b[(j + 1) * k..(j + 2) * k];
            let b2 = &b[(j + 2) * k..(j + 3) * k];
            let b3 = &b[(j + 3) * k..(j + 4) * k];
            let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
            for p in 0..k {
                let av = ar[p];
                s0 += av * b0[p];
                s1 += av * b1[p];
                s2 += av * b2[p];
                s3 += av * b3[p];
            }
            cr[j] = s0;
            cr[j + 1] = s1;
            cr[j + 2] = s2;
            cr[j + 3] = s3;
            j += 4;
        }
        while j < n {
            let br = &b[j * k..(j + 1) * k];
            cr[j] = dot(ar, br);
            j += 1;
        }
    }
}

/// c[rows × k] = a[rows × n] · b[n × k], accumulated row by row.
pub fn gemm_ab(a: &[f64], b: &[f64], c: &mut [f64], rows: usize, n: usize, k: usize) {
    debug_assert_eq!(a.len(), rows * n);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), rows * k);
    c.fill(0.0);
    for i in 0..rows {
        let ar = &a[i * n..(i + 1) * n];
        let cr = &mut c[i * k..(i + 1) * k];
        for (o, &w) in ar.iter().enumerate() {
            axpy(w, &b[o * k..(o + 1) * k], cr);
        }
    }
}

/// c[n × k] += a[rows × n]ᵀ · b[rows × k].
pub fn gemm_atb_acc(a: &[f64], b: &[f64], c: &mut [f64], rows: usize, n: usize, k: usize) {
    debug_assert_eq!(a.len(), rows * n);
    debug_assert_eq!(b.len(), rows * k);
    debug_assert_eq!(c.len(), n * k);
    for i in 0..rows {
        let ar = &a[i * n..(i + 1) * n];
        let br = &b[i * k..(i + 1) * k];
        for (o, &w) in ar.iter().enumerate() {
            axpy(w, br, &mut c[o * k..(o + 1) * k]);
        }
    }
}

/// y += alpha · x.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    if alpha == 0.0 {
        return;
    }
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let n4 = x.len() / 4 * 4;
    let mut p = 0;
    while p < n4 {
        s0 += x[p] * y[p];
        s1 += x[p + 1] * y[p + 1];
        s2 += x[p + 2] * y[p + 2];
        s3 += x[p + 3] * y[p + 3];
        p += 4;
    }
    let mut tail = 0.0;
    while p < x.len() {
        tail += x[p] * y[p];
        p += 1;
    }
    (s0 + s1) + (s2 + s3) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_abt(a: &[f64], b: &[f64], rows: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; rows * n];
        for i in 0..rows {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[j * k + p];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn gemm_variants_match_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (rows, k, n) in [(1, 1, 1), (3, 7, 5), (8, 13, 4), (5, 900, 100), (2, 6, 9)] {
            let a: Vec<f64> = (0..rows * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut c = vec![0.0; rows * n];
            gemm_abt(&a, &b, &mut c, rows, k, n);
            let want = naive_abt(&a, &b, rows, k, n);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12, "abt {rows}x{k}x{n}");
            }

            // gemm_ab: c[rows×k] = a2[rows×n]·b2[n×k]; reference via abt with
            // b2 transposed.
            let a2: Vec<f64> = (0..rows * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b2: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut b2t = vec![0.0; k * n];
            for o in 0..n {
                for p in 0..k {
                    b2t[p * n + o] = b2[o * k + p];
                }
            }
            let mut c2 = vec![0.0; rows * k];
            gemm_ab(&a2, &b2, &mut c2, rows, n, k);
            let want = naive_abt(&a2, &b2t, rows, n, k);
            for (x, y) in c2.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12, "ab {rows}x{n}x{k}");
            }

            // gemm_atb_acc: c[n×k] += a2ᵀ·b3.
            let b3: Vec<f64> = (0..rows * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut c3 = vec![0.0; n * k];
            gemm_atb_acc(&a2, &b3, &mut c3, rows, n, k);
            let mut want = vec![0.0; n * k];
            for o in 0..n {
                for p in 0..k {
                    for i in 0..rows {
                        want[o * k + p] += a2[i * n + o] * b3[i * k + p];
                    }
                }
            }
            for (x, y) in c3.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12, "atb {rows}x{n}x{k}");
            }
        }
    }

    #[test]
    fn dot_and_axpy_basics() {
        assert_eq!(dot(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 1.0, 1.0, 1.0, 1.0]), 15.0);
        let mut y = vec![1.0, 1.0];
        axpy(2.0, &[3.0, 4.0], &mut y);
        assert_eq!(y, vec![7.0, 9.0]);
    }
}
