//! Raw numeric kernels shared by the forward and backward passes.
//!
//! Outputs are partitioned into independent rows, so the parallel and
//! sequential paths compute every element with the same operation order.

use crate::parallel;

/// `c[m, n] = a[m, k] @ b[k, n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    parallel::for_each_chunk(&mut c, n.max(1), |i, row| {
        let ar = &a[i * k..(i + 1) * k];
        for (p, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let br = &b[p * n..(p + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(br) {
                *cv += av * bv;
            }
        }
    });
    c
}

/// `c[m, n] = a[m, k] @ b[n, k]ᵀ`.
pub fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    parallel::for_each_chunk(&mut c, n.max(1), |i, row| {
        let ar = &a[i * k..(i + 1) * k];
        for (j, cv) in row.iter_mut().enumerate() {
            let br = &b[j * k..(j + 1) * k];
            *cv = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    });
    c
}

/// `c[k, n] = a[m, k]ᵀ @ b[m, n]`.
pub fn matmul_at(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    parallel::for_each_chunk(&mut c, n.max(1), |p, row| {
        for i in 0..m {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let br = &b[i * n..(i + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(br) {
                *cv += av * bv;
            }
        }
    });
    c
}

#[derive(Debug, Clone, Copy)]
pub struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub width: usize,
    pub padding: usize,
}

impl ConvDims {
    pub fn out_len(&self) -> usize {
        self.len + 2 * self.padding + 1 - self.width
    }
}

/// Cross-correlation: `out[b, o, l] = Σ_c Σ_w x[b, c, l + w - pad] · k[o, c, w]`.
pub fn conv1d_forward(x: &[f64], k: &[f64], d: ConvDims) -> Vec<f64> {
    let lo = d.out_len();
    let mut out = vec![0.0; d.batch * d.c_out * lo];
    parallel::for_each_chunk(&mut out, lo.max(1), |row, dst| {
        let b = row / d.c_out;
        let o = row % d.c_out;
        for c in 0..d.c_in {
            let xr = &x[(b * d.c_in + c) * d.len..(b * d.c_in + c + 1) * d.len];
            let kr = &k[(o * d.c_in + c) * d.width..(o * d.c_in + c + 1) * d.width];
            for (w, &kv) in kr.iter().enumerate() {
                // output l reads input l + w - pad
                let shift = w as isize - d.padding as isize;
                let l_start = (-shift).max(0) as usize;
                let l_end = ((d.len as isize - shift).min(lo as isize)).max(0) as usize;
                for l in l_start..l_end {
                    dst[l] += kv * xr[(l as isize + shift) as usize];
                }
            }
        }
    });
    out
}

/// Gradient of the loss with respect to the conv input.
pub fn conv1d_grad_input(g: &[f64], k: &[f64], d: ConvDims) -> Vec<f64> {
    let lo = d.out_len();
    let mut gx = vec![0.0; d.batch * d.c_in * d.len];
    parallel::for_each_chunk(&mut gx, d.len.max(1), |row, dst| {
        let b = row / d.c_in;
        let c = row % d.c_in;
        for o in 0..d.c_out {
            let gr = &g[(b * d.c_out + o) * lo..(b * d.c_out + o + 1) * lo];
            let kr = &k[(o * d.c_in + c) * d.width..(o * d.c_in + c + 1) * d.width];
            for (w, &kv) in kr.iter().enumerate() {
                let shift = w as isize - d.padding as isize;
                let l_start = (-shift).max(0) as usize;
                let l_end = ((d.len as isize - shift).min(lo as isize)).max(0) as usize;
                for l in l_start..l_end {
                    dst[(l as isize + shift) as usize] += kv * gr[l];
                }
            }
        }
    });
    gx
}

/// Gradient of the loss with respect to the conv kernel.
pub fn conv1d_grad_kernel(g: &[f64], x: &[f64], d: ConvDims) -> Vec<f64> {
    let lo = d.out_len();
    let mut gk = vec![0.0; d.c_out * d.c_in * d.width];
    parallel::for_each_chunk(&mut gk, (d.c_in * d.width).max(1), |o, dst| {
        for b in 0..d.batch {
            let gr = &g[(b * d.c_out + o) * lo..(b * d.c_out + o + 1) * lo];
            for c in 0..d.c_in {
                let xr = &x[(b * d.c_in + c) * d.len..(b * d.c_in + c + 1) * d.len];
                for w in 0..d.width {
                    let shift = w as isize - d.padding as isize;
                    let l_start = (-shift).max(0) as usize;
                    let l_end = ((d.len as isize - shift).min(lo as isize)).max(0) as usize;
                    let mut acc = 0.0;
                    for l in l_start..l_end {
                        acc += gr[l] * xr[(l as isize + shift) as usize];
                    }
                    dst[c * d.width + w] += acc;
                }
            }
        }
    });
    gk
}
