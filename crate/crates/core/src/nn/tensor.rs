//! Dense rank-4 tensor storage for the network: `[batch][channel][h][w]`.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    data: Vec<f64>,
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        assert!(n > 0 && c > 0 && h > 0 && w > 0, "tensor dims must be > 0");
        Self {
            data: vec![0.0; n * c * h * w],
            n,
            c,
            h,
            w,
        }
    }

    pub fn from_vec(data: Vec<f64>, n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} values", n * c * h * w),
                got: format!("{}", data.len()),
                context: "Tensor4::from_vec".into(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("Tensor4".into()));
        }
        Ok(Self { data, n, c, h, w })
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, b: usize, ch: usize, y: usize, x: usize) -> f64 {
        self.data[((b * self.c + ch) * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, ch: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[((b * self.c + ch) * self.h + y) * self.w + x]
    }

    /// Contiguous `h x w` plane of one (batch, channel) pair.
    #[inline]
    pub fn plane(&self, b: usize, ch: usize) -> &[f64] {
        let stride = self.h * self.w;
        let start = (b * self.c + ch) * stride;
        &self.data[start..start + stride]
    }

    #[inline]
    pub fn plane_mut(&mut self, b: usize, ch: usize) -> &mut [f64] {
        let stride = self.h * self.w;
        let start = (b * self.c + ch) * stride;
        &mut self.data[start..start + stride]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&self, other: &Tensor4) -> Result<Tensor4> {
        if self.n != other.n || self.h != other.h || self.w != other.w {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{}x_x{}x{}", self.n, self.h, self.w),
                got: format!("{}x_x{}x{}", other.n, other.h, other.w),
                context: "concat_channels".into(),
            });
        }
        let mut out = Tensor4::zeros(self.n, self.c + other.c, self.h, self.w);
        for b in 0..self.n {
            for ch in 0..self.c {
                out.plane_mut(b, ch).copy_from_slice(self.plane(b, ch));
            }
            for ch in 0..other.c {
                out.plane_mut(b, self.c + ch)
                    .copy_from_slice(other.plane(b, ch));
            }
        }
        Ok(out)
    }

    /// Splits the channel axis at `c_first`, inverse of [`concat_channels`].
    pub fn split_channels(&self, c_first: usize) -> (Tensor4, Tensor4) {
        assert!(c_first < self.c, "split point must leave both sides nonempty");
        let mut a = Tensor4::zeros(self.n, c_first, self.h, self.w);
        let mut b = Tensor4::zeros(self.n, self.c - c_first, self.h, self.w);
        for bi in 0..self.n {
            for ch in 0..c_first {
                a.plane_mut(bi, ch).copy_from_slice(self.plane(bi, ch));
            }
            for ch in c_first..self.c {
                b.plane_mut(bi, ch - c_first)
                    .copy_from_slice(self.plane(bi, ch));
            }
        }
        (a, b)
    }

    /// Stacks single-sample tensors into one batch.
    pub fn stack(samples: &[&Tensor4]) -> Result<Tensor4> {
        let first = samples
            .first()
            .ok_or_else(|| CoreError::InvalidArgument("cannot stack zero tensors".into()))?;
        let (c, h, w) = (first.c, first.h, first.w);
        let mut out = Tensor4::zeros(samples.len(), c, h, w);
        let stride = c * h * w;
        for (i, s) in samples.iter().enumerate() {
            if s.n != 1 || s.c != c || s.h != h || s.w != w {
                return Err(CoreError::ShapeMismatch {
                    expected: format!("1x{c}x{h}x{w}"),
                    got: format!("{}x{}x{}x{}", s.n, s.c, s.h, s.w),
                    context: "Tensor4::stack".into(),
                });
            }
            out.data[i * stride..(i + 1) * stride].copy_from_slice(&s.data);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_split_roundtrip() {
        let mut a = Tensor4::zeros(2, 3, 4, 5);
        let mut b = Tensor4::zeros(2, 2, 4, 5);
        for (i, v) in a.data_mut().iter_mut().enumerate() {
            *v = i as f64;
        }
        for (i, v) in b.data_mut().iter_mut().enumerate() {
            *v = -(i as f64);
        }
        let cat = a.concat_channels(&b).unwrap();
        assert_eq!(cat.shape(), (2, 5, 4, 5));
        let (a2, b2) = cat.split_channels(3);
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn stack_checks_shapes() {
        let a = Tensor4::zeros(1, 2, 3, 4);
        let b = Tensor4::zeros(1, 2, 3, 4);
        let s = Tensor4::stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), (2, 2, 3, 4));
        let c = Tensor4::zeros(1, 2, 3, 5);
        assert!(Tensor4::stack(&[&a, &c]).is_err());
    }
}
