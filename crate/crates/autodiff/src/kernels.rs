//! Convolution kernels. Every output element is written by a single loop
//! nest in a fixed order, so results are bit-reproducible.

use crate::real::Real;

/// Range of output positions `t` for which `t * stride + offset` lands inside
/// `[0, len_in)`.
#[inline]
fn valid_range(offset: isize, stride: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let last = len_in as isize - 1 - offset;
    let hi = if last < 0 { 0 } else { (last / s + 1).min(len_out as isize) };
    let lo = lo.min(len_out as isize);
    (lo as usize, hi.max(lo) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv1dGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv1dGeom {
    fn tap_offset(&self, k: usize) -> isize {
        (k * self.dilation) as isize - self.padding as isize
    }
}

pub(crate) fn conv1d_forward<T: Real>(x: &[T], w: &[T], bias: Option<&[T]>, g: &Conv1dGeom, out: &mut [T]) {
    let cin_g = g.cin / g.groups;
    let cout_g = g.cout / g.groups;
    for b in 0..g.batch {
        for co in 0..g.cout {
            let grp = co / cout_g;
            let orow = &mut out[(b * g.cout + co) * g.len_out..][..g.len_out];
            orow.fill(bias.map_or(T::zero(), |bs| bs[co]));
            for cil in 0..cin_g {
                let ci = grp * cin_g + cil;
                let xrow = &x[(b * g.cin + ci) * g.len_in..][..g.len_in];
                let wrow = &w[(co * cin_g + cil) * g.kernel..][..g.kernel];
                for (k, &wv) in wrow.iter().enumerate() {
                    let off = g.tap_offset(k);
                    let (t0, t1) = valid_range(off, g.stride, g.len_in, g.len_out);
                    if t0 >= t1 {
                        continue;
                    }
                    if g.stride == 1 {
                        let s0 = (t0 as isize + off) as usize;
                        for (o, &xv) in orow[t0..t1].iter_mut().zip(&xrow[s0..s0 + (t1 - t0)]) {
                            *o += wv * xv;
                        }
                    } else {
                        for t in t0..t1 {
                            orow[t] += wv * xrow[(t as isize * g.stride as isize + off) as usize];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv1d_backward<T: Real>(
    x: &[T],
    w: &[T],
    gout: &[T],
    geo: &Conv1dGeom,
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let cin_g = geo.cin / geo.groups;
    let cout_g = geo.cout / geo.groups;
    for b in 0..geo.batch {
        for co in 0..geo.cout {
            let grp = co / cout_g;
            let grow = &gout[(b * geo.cout + co) * geo.len_out..][..geo.len_out];
            if let Some(gb) = gb.as_deref_mut() {
                gb[co] += grow.iter().copied().sum::<T>();
            }
            for cil in 0..cin_g {
                let ci = grp * cin_g + cil;
                let xoff = (b * geo.cin + ci) * geo.len_in;
                let woff = (co * cin_g + cil) * geo.kernel;
                for k in 0..geo.kernel {
                    let off = geo.tap_offset(k);
                    let (t0, t1) = valid_range(off, geo.stride, geo.len_in, geo.len_out);
                    if t0 >= t1 {
                        continue;
                    }
                    let src = |t: usize| (t as isize * geo.stride as isize + off) as usize;
                    if let Some(gw) = gw.as_deref_mut() {
                        let xrow = &x[xoff..xoff + geo.len_in];
                        let mut acc = T::zero();
                        if geo.stride == 1 {
                            let s0 = src(t0);
                            acc += dot(&grow[t0..t1], &xrow[s0..s0 + (t1 - t0)]);
                        } else {
                            for t in t0..t1 {
                                acc += grow[t] * xrow[src(t)];
                            }
                        }
                        gw[woff + k] += acc;
                    }
                    if let Some(gx) = gx.as_deref_mut() {
                        let wv = w[woff + k];
                        let gxrow = &mut gx[xoff..xoff + geo.len_in];
                        if geo.stride == 1 {
                            let s0 = src(t0);
                            for (d, &gv) in gxrow[s0..s0 + (t1 - t0)].iter_mut().zip(&grow[t0..t1]) {
                                *d += wv * gv;
                            }
                        } else {
                            for t in t0..t1 {
                                gxrow[src(t)] += wv * grow[t];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvT1dGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// `out[b, co, t*stride + k] += x[b, ci, t] * w[ci, co, k]`
pub(crate) fn conv_transpose1d_forward<T: Real>(
    x: &[T],
    w: &[T],
    bias: Option<&[T]>,
    g: &ConvT1dGeom,
    out: &mut [T],
) {
    for b in 0..g.batch {
        for co in 0..g.cout {
            let orow = &mut out[(b * g.cout + co) * g.len_out..][..g.len_out];
            orow.fill(bias.map_or(T::zero(), |bs| bs[co]));
            for ci in 0..g.cin {
                let xrow = &x[(b * g.cin + ci) * g.len_in..][..g.len_in];
                let wrow = &w[(ci * g.cout + co) * g.kernel..][..g.kernel];
                for (k, &wv) in wrow.iter().enumerate() {
                    if g.stride == 1 {
                        for (o, &xv) in orow[k..k + g.len_in].iter_mut().zip(xrow) {
                            *o += wv * xv;
                        }
                    } else {
                        for (t, &xv) in xrow.iter().enumerate() {
                            orow[t * g.stride + k] += wv * xv;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_transpose1d_backward<T: Real>(
    x: &[T],
    w: &[T],
    gout: &[T],
    geo: &ConvT1dGeom,
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    for b in 0..geo.batch {
        for co in 0..geo.cout {
            let grow = &gout[(b * geo.cout + co) * geo.len_out..][..geo.len_out];
            if let Some(gb) = gb.as_deref_mut() {
                gb[co] += grow.iter().copied().sum::<T>();
            }
            for ci in 0..geo.cin {
                let xoff = (b * geo.cin + ci) * geo.len_in;
                let woff = (ci * geo.cout + co) * geo.kernel;
                for k in 0..geo.kernel {
                    if let Some(gw) = gw.as_deref_mut() {
                        let xrow = &x[xoff..xoff + geo.len_in];
                        let mut acc = T::zero();
                        for (t, &xv) in xrow.iter().enumerate() {
                            acc += xv * grow[t * geo.stride + k];
                        }
                        gw[woff + k] += acc;
                    }
                    if let Some(gx) = gx.as_deref_mut() {
                        let wv = w[woff + k];
                        for (t, d) in gx[xoff..xoff + geo.len_in].iter_mut().enumerate() {
                            *d += wv * grow[t * geo.stride + k];
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv2dGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub h_out: usize,
    pub w_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dGeom {
    fn row_source(&self, oh: usize, kh: usize) -> Option<usize> {
        let ih = (oh * self.stride + kh) as isize - self.padding as isize;
        (ih >= 0 && (ih as usize) < self.h_in).then_some(ih as usize)
    }
}

pub(crate) fn conv2d_forward<T: Real>(x: &[T], w: &[T], bias: Option<&[T]>, g: &Conv2dGeom, out: &mut [T]) {
    let plane_in = g.h_in * g.w_in;
    let plane_out = g.h_out * g.w_out;
    let ksz = g.kh * g.kw;
    for b in 0..g.batch {
        for co in 0..g.cout {
            let oplane = &mut out[(b * g.cout + co) * plane_out..][..plane_out];
            oplane.fill(bias.map_or(T::zero(), |bs| bs[co]));
            for ci in 0..g.cin {
                let xplane = &x[(b * g.cin + ci) * plane_in..][..plane_in];
                let wk = &w[(co * g.cin + ci) * ksz..][..ksz];
                for kh in 0..g.kh {
                    for kw in 0..g.kw {
                        let wv = wk[kh * g.kw + kw];
                        let off = kw as isize - g.padding as isize;
                        let (c0, c1) = valid_range(off, g.stride, g.w_in, g.w_out);
                        if c0 >= c1 {
                            continue;
                        }
                        let s0 = (c0 as isize * g.stride as isize + off) as usize;
                        for oh in 0..g.h_out {
                            let Some(ih) = g.row_source(oh, kh) else { continue };
                            let xrow = &xplane[ih * g.w_in + s0..(ih + 1) * g.w_in];
                            let orow = &mut oplane[oh * g.w_out + c0..oh * g.w_out + c1];
                            if g.stride == 1 {
                                axpy(orow, wv, &xrow[..c1 - c0]);
                            } else {
                                for (o, &xv) in orow.iter_mut().zip(xrow.iter().step_by(g.stride)) {
                                    *o += wv * xv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_backward<T: Real>(
    x: &[T],
    w: &[T],
    gout: &[T],
    g: &Conv2dGeom,
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let plane_in = g.h_in * g.w_in;
    let plane_out = g.h_out * g.w_out;
    let ksz = g.kh * g.kw;
    for b in 0..g.batch {
        for co in 0..g.cout {
            let gplane = &gout[(b * g.cout + co) * plane_out..][..plane_out];
            if let Some(gb) = gb.as_deref_mut() {
                gb[co] += gplane.iter().copied().sum::<T>();
            }
            for ci in 0..g.cin {
                let xoff = (b * g.cin + ci) * plane_in;
                let woff = (co * g.cin + ci) * ksz;
                for kh in 0..g.kh {
                    for kw in 0..g.kw {
                        let off = kw as isize - g.padding as isize;
                        let (c0, c1) = valid_range(off, g.stride, g.w_in, g.w_out);
                        if c0 >= c1 {
                            continue;
                        }
                        let s0 = (c0 as isize * g.stride as isize + off) as usize;
                        let n = c1 - c0;
                        let wv = w[woff + kh * g.kw + kw];
                        let mut acc = T::zero();
                        for oh in 0..g.h_out {
                            let Some(ih) = g.row_source(oh, kh) else { continue };
                            let grow = &gplane[oh * g.w_out + c0..oh * g.w_out + c1];
                            let base = xoff + ih * g.w_in + s0;
                            if gw.is_some() {
                                let xrow = &x[base..xoff + (ih + 1) * g.w_in];
                                if g.stride == 1 {
                                    acc += dot(grow, &xrow[..n]);
                                } else {
                                    for (&gv, &xv) in grow.iter().zip(xrow.iter().step_by(g.stride)) {
                                        acc += gv * xv;
                                    }
                                }
                            }
                            if let Some(gx) = gx.as_deref_mut() {
                                let gxrow = &mut gx[base..xoff + (ih + 1) * g.w_in];
                                if g.stride == 1 {
                                    axpy(&mut gxrow[..n], wv, grow);
                                } else {
                                    for (d, &gv) in gxrow.iter_mut().step_by(g.stride).zip(grow) {
                                        *d += wv * gv;
                                    }
                                }
                            }
                        }
                        if let Some(gw) = gw.as_deref_mut() {
                            gw[woff + kh * g.kw + kw] += acc;
                        }
                    }
                }
            }
        }
    }
}

/// `y += a * x`
#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Inner product with eight interleaved partial sums (fixed order, so still
/// deterministic) to let the compiler vectorize.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_covers_padding_and_stride() {
        // len_in 5, stride 2, offset -2: t*2-2 in [0,5) => t in [1, 3]
        assert_eq!(valid_range(-2, 2, 5, 10), (1, 4));
        assert_eq!(valid_range(0, 1, 3, 3), (0, 3));
        assert_eq!(valid_range(3, 1, 3, 3), (0, 0));
        assert_eq!(valid_range(-7, 1, 3, 3), (3, 3));
    }
}
