//! Per-layer forward and backward kernels.
//!
//! All convolutions are 3x3, stride 1, zero padding 1; pooling is 2x2
//! stride 2. Convolutions lower to an im2col buffer so every inner loop
//! runs over a contiguous plane-sized slice and vectorizes regardless of
//! the image width.

use crate::numeric::Real;

/// Unfold into rows indexed by (ic, ky, kx), one column per output pixel:
/// `col[(ic*9 + ky*3 + kx) * n + (y*w + x)] = in[ic][y+ky-1][x+kx-1]`,
/// zero outside the image.
fn im2col<T: Real>(input: &[T], c_in: usize, h: usize, w: usize, col: &mut [T]) {
    let n = h * w;
    col.fill(T::ZERO);
    let mut row = 0;
    for ic in 0..c_in {
        let plane = &input[ic * n..(ic + 1) * n];
        for ky in 0..3isize {
            let dy = ky - 1;
            for kx in 0..3isize {
                let dx = kx - 1;
                let dst = &mut col[row * n..(row + 1) * n];
                row += 1;
                let y0 = (-dy).max(0) as usize;
                let y1 = (h as isize - dy.max(0)) as usize;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx.max(0)) as usize;
                for y in y0..y1 {
                    let src = ((y as isize + dy) * w as isize + x0 as isize + dx) as usize;
                    dst[y * w + x0..y * w + x1].copy_from_slice(&plane[src..src + x1 - x0]);
                }
            }
        }
    }
}

/// Fold gradients back: the scatter-add inverse of [`im2col`].
fn col2im_add<T: Real>(col: &[T], c_in: usize, h: usize, w: usize, din: &mut [T]) {
    let n = h * w;
    din.fill(T::ZERO);
    let mut row = 0;
    for ic in 0..c_in {
        let plane = &mut din[ic * n..(ic + 1) * n];
        for ky in 0..3isize {
            let dy = ky - 1;
            for kx in 0..3isize {
                let dx = kx - 1;
                let src_row = &col[row * n..(row + 1) * n];
                row += 1;
                let y0 = (-dy).max(0) as usize;
                let y1 = (h as isize - dy.max(0)) as usize;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx.max(0)) as usize;
                for y in y0..y1 {
                    let dst = ((y as isize + dy) * w as isize + x0 as isize + dx) as usize;
                    for (d, &s) in plane[dst..dst + x1 - x0]
                        .iter_mut()
                        .zip(&src_row[y * w + x0..y * w + x1])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
}

#[inline]
fn saxpy<T: Real>(acc: &mut [T], scale: T, src: &[T]) {
    for (a, &s) in acc.iter_mut().zip(src) {
        *a += scale * s;
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn conv_forward<T: Real>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[T],
    bias: &[T],
    c_out: usize,
    out: &mut [T],
) {
    let n = h * w;
    let k_dim = c_in * 9;
    let mut col = vec![T::ZERO; k_dim * n];
    im2col(input, c_in, h, w, &mut col);
    // out = W (c_out x k) @ col (k x n) + bias
    for oc in 0..c_out {
        let out_row = &mut out[oc * n..(oc + 1) * n];
        out_row.fill(bias[oc]);
        let wrow = &weights[oc * k_dim..(oc + 1) * k_dim];
        for (k, &wv) in wrow.iter().enumerate() {
            saxpy(out_row, wv, &col[k * n..(k + 1) * n]);
        }
    }
}

/// Gradient wrt the conv input: `col2im(W^T @ dOut)`.
pub fn conv_backward_input<T: Real>(
    dout: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[T],
    c_out: usize,
    din: &mut [T],
) {
    let n = h * w;
    let k_dim = c_in * 9;
    let mut dcol = vec![T::ZERO; k_dim * n];
    for oc in 0..c_out {
        let drow = &dout[oc * n..(oc + 1) * n];
        let wrow = &weights[oc * k_dim..(oc + 1) * k_dim];
        for (k, &wv) in wrow.iter().enumerate() {
            saxpy(&mut dcol[k * n..(k + 1) * n], wv, drow);
        }
    }
    col2im_add(&dcol, c_in, h, w, din);
}

/// Gradients wrt the conv weights and bias: `dW = dOut @ im2col(input)^T`.
pub fn conv_backward_params<T: Real>(
    input: &[T],
    dout: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    dw: &mut [T],
    db: &mut [T],
) {
    let n = h * w;
    let k_dim = c_in * 9;
    let mut col = vec![T::ZERO; k_dim * n];
    im2col(input, c_in, h, w, &mut col);
    for oc in 0..c_out {
        let drow = &dout[oc * n..(oc + 1) * n];
        db[oc] += drow.iter().copied().sum::<T>();
        let dwrow = &mut dw[oc * k_dim..(oc + 1) * k_dim];
        for (k, dwv) in dwrow.iter_mut().enumerate() {
            *dwv += dot(drow, &col[k * n..(k + 1) * n]);
        }
    }
}

pub fn relu_forward<T: Real>(input: &[T], out: &mut [T]) {
    for (o, &v) in out.iter_mut().zip(input) {
        *o = v.max(T::ZERO);
    }
}

pub fn relu_backward<T: Real>(input: &[T], dout: &[T], din: &mut [T]) {
    for ((d, &x), &g) in din.iter_mut().zip(input).zip(dout) {
        *d = if x > T::ZERO { g } else { T::ZERO };
    }
}

pub fn maxpool_forward<T: Real>(input: &[T], c: usize, h: usize, w: usize, out: &mut [T]) {
    let (oh, ow) = (h / 2, w / 2);
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        let oplane = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let mut m = plane[2 * y * w + 2 * x];
                m = m.max(plane[2 * y * w + 2 * x + 1]);
                m = m.max(plane[(2 * y + 1) * w + 2 * x]);
                m = m.max(plane[(2 * y + 1) * w + 2 * x + 1]);
                oplane[y * ow + x] = m;
            }
        }
    }
}

/// Routes each upstream value to the first maximum in scan order.
pub fn maxpool_backward<T: Real>(
    input: &[T],
    dout: &[T],
    c: usize,
    h: usize,
    w: usize,
    din: &mut [T],
) {
    let (oh, ow) = (h / 2, w / 2);
    din.fill(T::ZERO);
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        let dplane = &dout[ch * oh * ow..(ch + 1) * oh * ow];
        let iplane = &mut din[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let idx = [
                    2 * y * w + 2 * x,
                    2 * y * w + 2 * x + 1,
                    (2 * y + 1) * w + 2 * x,
                    (2 * y + 1) * w + 2 * x + 1,
                ];
                let mut best = idx[0];
                for &i in &idx[1..] {
                    if plane[i] > plane[best] {
                        best = i;
                    }
                }
                iplane[best] += dplane[y * ow + x];
            }
        }
    }
}

pub fn gap_forward<T: Real>(input: &[T], c: usize, plane: usize, out: &mut [T]) {
    let inv = T::from_f64(1.0 / plane as f64);
    for ch in 0..c {
        out[ch] = input[ch * plane..(ch + 1) * plane].iter().copied().sum::<T>() * inv;
    }
}

pub fn gap_backward<T: Real>(dout: &[T], c: usize, plane: usize, din: &mut [T]) {
    let inv = T::from_f64(1.0 / plane as f64);
    for ch in 0..c {
        let g = dout[ch] * inv;
        din[ch * plane..(ch + 1) * plane].fill(g);
    }
}

pub fn dense_forward<T: Real>(input: &[T], weights: &[T], bias: &[T], out: &mut [T]) {
    let n_in = input.len();
    for (o, (wrow, &b)) in out.iter_mut().zip(weights.chunks_exact(n_in).zip(bias)) {
        *o = b + dot(wrow, input);
    }
}

pub fn dense_backward_params<T: Real>(input: &[T], dout: &[T], dw: &mut [T], db: &mut [T]) {
    let n_in = input.len();
    for ((&g, dwrow), db_o) in dout.iter().zip(dw.chunks_exact_mut(n_in)).zip(db.iter_mut()) {
        *db_o += g;
        for (dwv, &x) in dwrow.iter_mut().zip(input) {
            *dwv += g * x;
        }
    }
}

pub fn dense_backward_input<T: Real>(weights: &[T], dout: &[T], din: &mut [T]) {
    let n_in = din.len();
    din.fill(T::ZERO);
    for (&g, wrow) in dout.iter().zip(weights.chunks_exact(n_in)) {
        for (d, &wv) in din.iter_mut().zip(wrow) {
            *d += g * wv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_kernel_copies_channels() {
        // centered delta per (oc, ic) diagonal: output = input
        let (c, h, w) = (2, 4, 4);
        let input: Vec<f64> = (0..c * h * w).map(|i| i as f64 * 0.5 - 3.0).collect();
        let mut weights = vec![0.0; c * c * 9];
        for ch in 0..c {
            weights[(ch * c + ch) * 9 + 4] = 1.0; // center tap
        }
        let mut out = vec![0.0; c * h * w];
        conv_forward(&input, c, h, w, &weights, &[0.0; 2], c, &mut out);
        assert_eq!(out, input);
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let input = [0.25, -1.5, 3.0];
        let mut weights = vec![0.0; 9];
        for i in 0..3 {
            weights[i * 3 + i] = 1.0;
        }
        let mut out = [0.0; 3];
        dense_forward(&input, &weights, &[0.0; 3], &mut out);
        assert_eq!(out, input);
    }

    #[test]
    fn dense_then_relu_hand_value() {
        // [[1,1],[1,-1]] on (1,2) -> (3,-1), relu -> (3,0)
        let weights = [1.0, 1.0, 1.0, -1.0];
        let mut out = [0.0f64; 2];
        dense_forward(&[1.0, 2.0], &weights, &[0.0; 2], &mut out);
        assert_eq!(out, [3.0, -1.0]);
        let mut relu = [0.0f64; 2];
        relu_forward(&out, &mut relu);
        assert_eq!(relu, [3.0, 0.0]);
    }

    #[test]
    fn maxpool_takes_block_maxima() {
        #[rustfmt::skip]
        let input = vec![
            1.0, 2.0, 0.0, 0.0,
            3.0, 4.0, 0.0, 5.0,
            1.0, 1.0, 9.0, 8.0,
            1.0, 1.0, 7.0, 6.0,
        ];
        let mut out = vec![0.0; 4];
        maxpool_forward(&input, 1, 4, 4, &mut out);
        assert_eq!(out, vec![4.0, 5.0, 1.0, 9.0]);
    }

    #[test]
    fn gap_averages_each_plane() {
        let input = vec![1.0, 2.0, 3.0, 4.0, 10.0, 10.0, 10.0, 10.0];
        let mut out = vec![0.0; 2];
        gap_forward(&input, 2, 4, &mut out);
        assert_eq!(out, vec![2.5, 10.0]);
    }
}
