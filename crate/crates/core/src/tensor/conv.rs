//! Direct-loop N-d cross-correlation (1 to 3 spatial axes).
//!
//! Lower-rank inputs are lifted to three spatial axes with trailing
//! singletons, so one kernel serves 1-D, 2-D and 3-D convolutions.

use super::Tensor;
use crate::error::{config_err, shape_err, Result};
use crate::parallel::for_each_chunk;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub dilation: Vec<usize>,
    pub padding: Vec<usize>,
}

impl ConvSpec {
    /// Stride 1, dilation 1, no padding.
    pub fn plain(kernel: &[usize]) -> Self {
        let n = kernel.len();
        ConvSpec {
            kernel: kernel.to_vec(),
            stride: vec![1; n],
            dilation: vec![1; n],
            padding: vec![0; n],
        }
    }

    /// Kernel `k` per axis with "same"-style padding `dilation*(k-1)/2`.
    pub fn same(kernel: &[usize], stride: &[usize], dilation: &[usize]) -> Self {
        let padding = kernel
            .iter()
            .zip(dilation)
            .map(|(&k, &d)| d * (k - 1) / 2)
            .collect();
        ConvSpec {
            kernel: kernel.to_vec(),
            stride: stride.to_vec(),
            dilation: dilation.to_vec(),
            padding,
        }
    }

    pub fn spatial_rank(&self) -> usize {
        self.kernel.len()
    }

    /// Output extents for the given input spatial extents.
    pub fn output_extents(&self, input: &[usize]) -> Result<Vec<usize>> {
        let n = self.kernel.len();
        if [self.stride.len(), self.dilation.len(), self.padding.len(), input.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(config_err!("conv spec {self:?} inconsistent with input extents {input:?}"));
        }
        (0..n)
            .map(|i| {
                conv_output_extent(
                    input[i],
                    self.kernel[i],
                    self.stride[i],
                    self.dilation[i],
                    self.padding[i],
                )
                .ok_or_else(|| {
                    config_err!(
                        "axis {i}: extent {} with kernel {}, stride {}, dilation {}, padding {} gives no output",
                        input[i], self.kernel[i], self.stride[i], self.dilation[i], self.padding[i]
                    )
                })
            })
            .collect()
    }
}

/// `floor((in + 2*pad - dilation*(kernel-1) - 1) / stride) + 1`, or `None`
/// when that is below 1 or any parameter is degenerate.
pub fn conv_output_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    dilation: usize,
    padding: usize,
) -> Option<usize> {
    if kernel == 0 || stride == 0 || dilation == 0 {
        return None;
    }
    let span = dilation * (kernel - 1) + 1;
    let padded = input + 2 * padding;
    (padded >= span).then(|| (padded - span) / stride + 1)
}

#[derive(Clone, Copy)]
struct Geometry {
    batch: usize,
    cin: usize,
    cout: usize,
    inp: [usize; 3],
    out: [usize; 3],
    k: [usize; 3],
    s: [usize; 3],
    d: [usize; 3],
    p: [usize; 3],
}

impl Geometry {
    fn in_vol(&self) -> usize {
        self.inp.iter().product()
    }
    fn out_vol(&self) -> usize {
        self.out.iter().product()
    }
    fn k_vol(&self) -> usize {
        self.k.iter().product()
    }

    /// Output index range along `axis` whose input tap `o*s + kk*d - p` lands inside.
    fn valid_range(&self, axis: usize, kk: usize) -> (usize, usize) {
        let off = (kk * self.d[axis]) as isize - self.p[axis] as isize;
        let s = self.s[axis] as isize;
        let n_in = self.inp[axis] as isize;
        // smallest o with o*s + off >= 0
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // largest o with o*s + off <= n_in - 1, exclusive bound
        let hi = if n_in - 1 - off < 0 {
            0
        } else {
            ((n_in - 1 - off) / s + 1).min(self.out[axis] as isize)
        };
        (lo as usize, (hi.max(lo)) as usize)
    }

    fn tap(&self, axis: usize, o: usize, kk: usize) -> usize {
        o * self.s[axis] + kk * self.d[axis] - self.p[axis]
    }
}

fn lift3(v: &[usize], fill: usize) -> [usize; 3] {
    let mut a = [fill; 3];
    a[..v.len()].copy_from_slice(v);
    a
}

/// Calls `f(out_offset, in_offset, k_offset)` for each row segment of the
/// innermost axis: `len` contiguous outputs paired with strided inputs.
#[inline]
fn for_each_row(
    g: &Geometry,
    mut f: impl FnMut(usize, usize, usize, usize, usize),
) {
    let [_, o1, o2] = g.out;
    let [_, i1, i2] = g.inp;
    for k0 in 0..g.k[0] {
        let (z_lo, z_hi) = g.valid_range(0, k0);
        for k1 in 0..g.k[1] {
            let (y_lo, y_hi) = g.valid_range(1, k1);
            for k2 in 0..g.k[2] {
                let (x_lo, x_hi) = g.valid_range(2, k2);
                if x_lo >= x_hi {
                    continue;
                }
                let kidx = (k0 * g.k[1] + k1) * g.k[2] + k2;
                let len = x_hi - x_lo;
                for z in z_lo..z_hi {
                    let iz = g.tap(0, z, k0);
                    for y in y_lo..y_hi {
                        let iy = g.tap(1, y, k1);
                        let ix = g.tap(2, x_lo, k2);
                        let out_off = (z * o1 + y) * o2 + x_lo;
                        let in_off = (iz * i1 + iy) * i2 + ix;
                        f(out_off, in_off, kidx, len, g.s[2]);
                    }
                }
            }
        }
    }
}

fn forward_kernel(g: &Geometry, x: &[f64], w: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let (iv, ov, kv) = (g.in_vol(), g.out_vol(), g.k_vol());
    let mut out = vec![0.0; g.batch * g.cout * ov];
    for_each_chunk(&mut out, ov, |bo, dst| {
        let (bi, o) = (bo / g.cout, bo % g.cout);
        if let Some(b) = b {
            dst.fill(b[o]);
        }
        for c in 0..g.cin {
            let src = &x[(bi * g.cin + c) * iv..(bi * g.cin + c + 1) * iv];
            let wk = &w[(o * g.cin + c) * kv..(o * g.cin + c + 1) * kv];
            for_each_row(g, |oo, io, k, len, s| {
                let wv = wk[k];
                if wv == 0.0 {
                    return;
                }
                let row = &mut dst[oo..oo + len];
                if s == 1 {
                    row.iter_mut()
                        .zip(&src[io..io + len])
                        .for_each(|(d, v)| *d += wv * v);
                } else {
                    for (j, d) in row.iter_mut().enumerate() {
                        *d += wv * src[io + j * s];
                    }
                }
            });
        }
    });
    out
}

fn grad_input_kernel(g: &Geometry, gout: &[f64], w: &[f64]) -> Vec<f64> {
    let (iv, ov, kv) = (g.in_vol(), g.out_vol(), g.k_vol());
    let mut gin = vec![0.0; g.batch * g.cin * iv];
    for_each_chunk(&mut gin, iv, |bc, dst| {
        let (bi, c) = (bc / g.cin, bc % g.cin);
        for o in 0..g.cout {
            let go = &gout[(bi * g.cout + o) * ov..(bi * g.cout + o + 1) * ov];
            let wk = &w[(o * g.cin + c) * kv..(o * g.cin + c + 1) * kv];
            for_each_row(g, |oo, io, k, len, s| {
                let wv = wk[k];
                if wv == 0.0 {
                    return;
                }
                for j in 0..len {
                    dst[io + j * s] += wv * go[oo + j];
                }
            });
        }
    });
    gin
}

fn grad_weight_kernel(g: &Geometry, gout: &[f64], x: &[f64]) -> Vec<f64> {
    let (iv, ov, kv) = (g.in_vol(), g.out_vol(), g.k_vol());
    let mut gw = vec![0.0; g.cout * g.cin * kv];
    for_each_chunk(&mut gw, g.cin * kv, |o, dst| {
        for bi in 0..g.batch {
            let go = &gout[(bi * g.cout + o) * ov..(bi * g.cout + o + 1) * ov];
            for c in 0..g.cin {
                let src = &x[(bi * g.cin + c) * iv..(bi * g.cin + c + 1) * iv];
                let dk = &mut dst[c * kv..(c + 1) * kv];
                for_each_row(g, |oo, io, k, len, s| {
                    let mut acc = 0.0;
                    for j in 0..len {
                        acc += go[oo + j] * src[io + j * s];
                    }
                    dk[k] += acc;
                });
            }
        }
    });
    gw
}

impl Tensor {
    /// Cross-correlation of `[B, C_in, s...]` with weights `[C_out, C_in, k...]`.
    pub fn conv(&self, weights: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<Tensor> {
        let rank = self.rank();
        if rank != weights.rank() {
            return Err(shape_err!(
                "conv input rank {rank} differs from weight rank {}",
                weights.rank()
            ));
        }
        if !(3..=5).contains(&rank) {
            return Err(shape_err!("conv supports 1 to 3 spatial axes, got input {:?}", self.shape()));
        }
        let n = rank - 2;
        if spec.spatial_rank() != n {
            return Err(config_err!(
                "conv spec has {} spatial axes, input has {n}",
                spec.spatial_rank()
            ));
        }
        let (xs, ws) = (self.shape(), weights.shape());
        if xs[1] != ws[1] {
            return Err(shape_err!(
                "conv input has {} channels, weights {:?} expect {}",
                xs[1],
                ws,
                ws[1]
            ));
        }
        if ws[2..] != spec.kernel[..] {
            return Err(shape_err!(
                "weight kernel extents {:?} differ from spec kernel {:?}",
                &ws[2..],
                spec.kernel
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [ws[0]] {
                return Err(shape_err!("bias shape {:?}, expected [{}]", b.shape(), ws[0]));
            }
        }
        let out_sp = spec.output_extents(&xs[2..])?;
        let geo = Geometry {
            batch: xs[0],
            cin: xs[1],
            cout: ws[0],
            inp: lift3(&xs[2..], 1),
            out: lift3(&out_sp, 1),
            k: lift3(&spec.kernel, 1),
            s: lift3(&spec.stride, 1),
            d: lift3(&spec.dilation, 1),
            p: lift3(&spec.padding, 0),
        };
        let x = self.data_arc();
        let w = weights.data_arc();
        let out = forward_kernel(&geo, &x, &w, bias.map(|b| b.data()));

        let mut shape = vec![geo.batch, geo.cout];
        shape.extend_from_slice(&out_sp);
        let mut parents = vec![self.clone(), weights.clone()];
        parents.extend(bias.cloned());
        Tensor::from_op(
            "conv",
            shape,
            out,
            parents,
            Box::new(move |g, needs| {
                let gx = needs[0].then(|| grad_input_kernel(&geo, g, &w));
                let gw = needs[1].then(|| grad_weight_kernel(&geo, g, &x));
                let mut grads = vec![gx, gw];
                if needs.len() > 2 {
                    let ov = geo.out_vol();
                    let gb = needs[2].then(|| {
                        let mut gb = vec![0.0; geo.cout];
                        for (i, chunk) in g.chunks(ov).enumerate() {
                            gb[i % geo.cout] += chunk.iter().sum::<f64>();
                        }
                        gb
                    });
                    grads.push(gb);
                }
                grads
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let x = t(&[1, 1, 3], &[1.0, 2.0, 3.0]);
        let w = t(&[1, 1, 1], &[1.0]);
        let y = x.conv(&w, None, &ConvSpec::plain(&[1])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_tap_sum() {
        let x = t(&[1, 1, 3], &[1.0, 2.0, 3.0]);
        let w = t(&[1, 1, 2], &[1.0, 1.0]);
        let y = x.conv(&w, None, &ConvSpec::plain(&[2])).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);
    }

    #[test]
    fn dilated_taps_reach_the_ends() {
        let x = t(&[1, 1, 5], &[1.0, 0.0, 0.0, 0.0, 1.0]);
        let w = t(&[1, 1, 2], &[1.0, 1.0]);
        let mut spec = ConvSpec::plain(&[2]);
        spec.dilation = vec![4];
        let y = x.conv(&w, None, &spec).unwrap();
        assert_eq!(y.data(), &[2.0]);
    }

    #[test]
    fn output_extent_formula() {
        assert_eq!(conv_output_extent(5, 3, 2, 1, 1), Some(3));
        assert_eq!(conv_output_extent(160, 3, 2, 1, 1), Some(80));
        assert_eq!(conv_output_extent(2, 3, 1, 1, 0), None);
        assert_eq!(conv_output_extent(11, 3, 1, 5, 0), Some(1));
    }

    #[test]
    fn non_positive_extent_is_config_error() {
        let x = t(&[1, 1, 2], &[1.0, 2.0]);
        let w = t(&[1, 1, 3], &[1.0, 1.0, 1.0]);
        let err = x.conv(&w, None, &ConvSpec::plain(&[3])).unwrap_err();
        assert!(matches!(err, crate::Error::Config(_)), "{err}");
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let x = Tensor::zeros(&[1, 2, 4]).unwrap();
        let w = Tensor::zeros(&[1, 3, 1]).unwrap();
        let err = x.conv(&w, None, &ConvSpec::plain(&[1])).unwrap_err();
        assert!(matches!(err, crate::Error::Shape(_)));
    }

    #[test]
    fn strided_padded_3d_matches_naive() {
        // naive reference over explicit index arithmetic
        let xs = [2usize, 2, 5, 4, 3];
        let ws = [3usize, 2, 3, 2, 3];
        let spec = ConvSpec {
            kernel: vec![3, 2, 3],
            stride: vec![2, 1, 2],
            dilation: vec![1, 2, 1],
            padding: vec![1, 1, 1],
        };
        let xv: Vec<f64> = (0..xs.iter().product::<usize>()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let wv: Vec<f64> = (0..ws.iter().product::<usize>()).map(|i| ((i * 5) % 7) as f64 - 3.0).collect();
        let bv = vec![0.5, -1.0, 2.0];
        let x = t(&xs, &xv);
        let w = t(&ws, &wv);
        let b = t(&[3], &bv);
        let y = x.conv(&w, Some(&b), &spec).unwrap();
        let os = spec.output_extents(&xs[2..]).unwrap();
        assert_eq!(y.shape(), &[2, 3, os[0], os[1], os[2]]);
        let mut idx = 0;
        for bi in 0..2 {
            for o in 0..3 {
                for z in 0..os[0] {
                    for yy in 0..os[1] {
                        for xx in 0..os[2] {
                            let mut acc = bv[o];
                            for c in 0..2 {
                                for a in 0..3 {
                                    for bb in 0..2 {
                                        for cc in 0..3 {
                                            let iz = (z * 2 + a) as isize - 1;
                                            let iy = (yy + bb * 2) as isize - 1;
                                            let ix = (xx * 2 + cc) as isize - 1;
                                            if iz < 0 || iy < 0 || ix < 0 || iz >= 5 || iy >= 4 || ix >= 3 {
                                                continue;
                                            }
                                            let xi = (((bi * 2 + c) * 5 + iz as usize) * 4 + iy as usize) * 3 + ix as usize;
                                            let wi = (((o * 2 + c) * 3 + a) * 2 + bb) * 3 + cc;
                                            acc += xv[xi] * wv[wi];
                                        }
                                    }
                                }
                            }
                            assert!((y.data()[idx] - acc).abs() < 1e-12);
                            idx += 1;
                        }
                    }
                }
            }
        }
    }
}
