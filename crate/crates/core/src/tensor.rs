//! Dense feature-map and kernel tensors, the two software deconvolution
//! algorithms (zero insertion followed by convolution, and per-pixel
//! scatter-accumulate), and exact zero-redundancy counting.
//!
//! Feature maps are stored row-major in `(h, w, c)` order and kernels in
//! `(i, j, c, m)` order, so the `C x M` weight matrix of one kernel tap and
//! the `C`-vector of one input pixel are both contiguous slices.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul};

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numeric element of tensors and crossbar cells.
///
/// Integer elements make every equivalence check exact. Floating-point
/// elements compare with a relative tolerance of `1e-9`.
pub trait Element:
    Copy
    + Debug
    + Default
    + PartialEq
    + Send
    + Sync
    + Zero
    + Add<Output = Self>
    + Mul<Output = Self>
    + AddAssign
    + 'static
{
    fn from_i64(v: i64) -> Self;

    fn approx_eq(self, other: Self) -> bool;
}

impl Element for i32 {
    fn from_i64(v: i64) -> Self {
        v as i32
    }

    fn approx_eq(self, other: Self) -> bool {
        self == other
    }
}

impl Element for i64 {
    fn from_i64(v: i64) -> Self {
        v
    }

    fn approx_eq(self, other: Self) -> bool {
        self == other
    }
}

pub const FLOAT_REL_TOLERANCE: f64 = 1e-9;

impl Element for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn approx_eq(self, other: Self) -> bool {
        let scale = self.abs().max(other.abs()).max(1.0);
        (self - other).abs() <= FLOAT_REL_TOLERANCE * scale
    }
}

/// An `H x W x C` feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Element> Tensor3<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "tensor dims must be >= 1, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} tensor needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(
            height > 0 && width > 0 && channels > 0,
            "tensor dims must be >= 1"
        );
        Self {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut t = Self::zeros(height, width, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    t.data[(y * width + x) * channels + c] = f(y, x, c);
                }
            }
        }
        t
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    fn offset(&self, y: usize, x: usize, c: usize) -> usize {
        debug_assert!(y < self.height && x < self.width && c < self.channels);
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[self.offset(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: T) {
        let o = self.offset(y, x, c);
        self.data[o] = v;
    }

    #[inline]
    pub fn add_at(&mut self, y: usize, x: usize, c: usize, v: T) {
        let o = self.offset(y, x, c);
        self.data[o] += v;
    }

    /// The `C`-vector at pixel `(y, x)`.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[T] {
        let o = self.offset(y, x, 0);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [T] {
        let o = self.offset(y, x, 0);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    /// Count of positions `(y, x, c)` holding a nonzero value.
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| !v.is_zero()).count()
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> Tensor3<U> {
        Tensor3 {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise comparison with [`Element::approx_eq`].
    pub fn approx_eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.approx_eq(*b))
    }

    /// Positions where the two tensors differ, in storage order.
    pub fn mismatches<'a>(
        &'a self,
        other: &'a Self,
    ) -> impl Iterator<Item = (usize, usize, usize)> + 'a {
        let (w, c) = (self.width, self.channels);
        self.data
            .iter()
            .zip(&other.data)
            .enumerate()
            .filter(|(_, (a, b))| !a.approx_eq(**b))
            .map(move |(k, _)| (k / (w * c), (k / c) % w, k % c))
    }
}

impl<T: Element> Add for &Tensor3<T> {
    type Output = Tensor3<T>;

    fn add(self, rhs: Self) -> Tensor3<T> {
        assert_eq!(self.shape(), rhs.shape(), "tensor shapes differ");
        Tensor3 {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }
}

/// Dimensions of a `K_H x K_W x C x M` kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelShape {
    pub kh: usize,
    pub kw: usize,
    pub channels: usize,
    pub filters: usize,
}

impl KernelShape {
    pub fn taps(&self) -> usize {
        self.kh * self.kw
    }

    pub fn weight_count(&self) -> usize {
        self.kh * self.kw * self.channels * self.filters
    }
}

/// A `K_H x K_W x C x M` weight tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel4<T> {
    shape: KernelShape,
    data: Vec<T>,
}

impl<T: Element> Kernel4<T> {
    pub fn new(
        kh: usize,
        kw: usize,
        channels: usize,
        filters: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        let shape = KernelShape {
            kh,
            kw,
            channels,
            filters,
        };
        if kh == 0 || kw == 0 || channels == 0 || filters == 0 {
            return Err(Error::Shape(format!(
                "kernel dims must be >= 1, got {kh}x{kw}x{channels}x{filters}"
            )));
        }
        if data.len() != shape.weight_count() {
            return Err(Error::Shape(format!(
                "{kh}x{kw}x{channels}x{filters} kernel needs {} values, got {}",
                shape.weight_count(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: KernelShape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.weight_count());
        for i in 0..shape.kh {
            for j in 0..shape.kw {
                for c in 0..shape.channels {
                    for m in 0..shape.filters {
                        data.push(f(i, j, c, m));
                    }
                }
            }
        }
        Self::new(shape.kh, shape.kw, shape.channels, shape.filters, data)
            .expect("from_fn produces a consistent kernel")
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize, m: usize) -> T {
        let s = &self.shape;
        debug_assert!(i < s.kh && j < s.kw && c < s.channels && m < s.filters);
        self.data[((i * s.kw + j) * s.channels + c) * s.filters + m]
    }

    /// The row-major `C x M` weight matrix at tap `(i, j)`.
    #[inline]
    pub fn tap(&self, i: usize, j: usize) -> &[T] {
        let s = &self.shape;
        let len = s.channels * s.filters;
        let o = (i * s.kw + j) * len;
        &self.data[o..o + len]
    }
}

/// Hyper-parameters of one deconvolution layer.
///
/// Cropping generalizes the usual symmetric padding `p`: `crop_top = p` etc.
/// Four independent fields are needed because some layers (e.g. `8 -> 16`
/// with a `5 x 5` kernel at stride 2) drop an odd number of border rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeconvLayerSpec {
    pub input_h: usize,
    pub input_w: usize,
    pub channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub filters: usize,
    pub stride: usize,
    pub crop_top: usize,
    pub crop_bottom: usize,
    pub crop_left: usize,
    pub crop_right: usize,
}

fn invalid(field: &'static str, constraint: impl Into<String>) -> Error {
    Error::InvalidSpec {
        field,
        constraint: constraint.into(),
    }
}

impl DeconvLayerSpec {
    /// A layer with the same crop on all four sides.
    pub fn symmetric(
        input: (usize, usize, usize),
        kernel: (usize, usize, usize),
        stride: usize,
        crop: usize,
    ) -> Self {
        Self {
            input_h: input.0,
            input_w: input.1,
            channels: input.2,
            kh: kernel.0,
            kw: kernel.1,
            filters: kernel.2,
            stride,
            crop_top: crop,
            crop_bottom: crop,
            crop_left: crop,
            crop_right: crop,
        }
    }

    pub fn with_crops(mut self, top: usize, bottom: usize, left: usize, right: usize) -> Self {
        self.crop_top = top;
        self.crop_bottom = bottom;
        self.crop_left = left;
        self.crop_right = right;
        self
    }

    pub fn with_channels(mut self, channels: usize, filters: usize) -> Self {
        self.channels = channels;
        self.filters = filters;
        self
    }

    pub fn kernel_shape(&self) -> KernelShape {
        KernelShape {
            kh: self.kh,
            kw: self.kw,
            channels: self.channels,
            filters: self.filters,
        }
    }

    /// Rows of the un-cropped scatter canvas, `s (I_H - 1) + K_H`.
    pub fn canvas_h(&self) -> usize {
        self.stride * (self.input_h - 1) + self.kh
    }

    pub fn canvas_w(&self) -> usize {
        self.stride * (self.input_w - 1) + self.kw
    }

    /// Zero rows added above the dilated input, `K_H - 1 - crop_top`.
    pub fn pad_top(&self) -> usize {
        self.kh - 1 - self.crop_top
    }

    pub fn pad_bottom(&self) -> usize {
        self.kh - 1 - self.crop_bottom
    }

    pub fn pad_left(&self) -> usize {
        self.kw - 1 - self.crop_left
    }

    pub fn pad_right(&self) -> usize {
        self.kw - 1 - self.crop_right
    }

    pub fn padded_h(&self) -> usize {
        self.stride * (self.input_h - 1) + 1 + self.pad_top() + self.pad_bottom()
    }

    pub fn padded_w(&self) -> usize {
        self.stride * (self.input_w - 1) + 1 + self.pad_left() + self.pad_right()
    }

    /// Structural checks every operation relies on: positive dims and
    /// stride, each crop at most `K - 1` (so border padding is nonnegative),
    /// and a nonempty output.
    pub fn check_geometry(&self) -> Result<()> {
        let dims = [
            ("input_h", self.input_h),
            ("input_w", self.input_w),
            ("channels", self.channels),
            ("kh", self.kh),
            ("kw", self.kw),
            ("filters", self.filters),
        ];
        for (field, v) in dims {
            if v == 0 {
                return Err(invalid(field, format!("{field} must be ≥ 1")));
            }
        }
        if self.stride == 0 {
            return Err(invalid("stride", "stride must be ≥ 1"));
        }
        let crops = [
            ("crop_top", self.crop_top, self.kh),
            ("crop_bottom", self.crop_bottom, self.kh),
            ("crop_left", self.crop_left, self.kw),
            ("crop_right", self.crop_right, self.kw),
        ];
        for (field, crop, k) in crops {
            if crop >= k {
                return Err(invalid(
                    field,
                    format!("{field} must be < kernel size {k}, got {crop}"),
                ));
            }
        }
        let crop_h = self.crop_top + self.crop_bottom;
        if self.canvas_h() <= crop_h {
            return Err(invalid(
                "crop_top",
                format!("output height {} - {crop_h} is < 1", self.canvas_h()),
            ));
        }
        let crop_w = self.crop_left + self.crop_right;
        if self.canvas_w() <= crop_w {
            return Err(invalid(
                "crop_left",
                format!("output width {} - {crop_w} is < 1", self.canvas_w()),
            ));
        }
        Ok(())
    }

    /// Full validation for benchmark layers: [`check_geometry`](Self::check_geometry)
    /// plus `crop_top + crop_bottom < K_H` (likewise for width) and an
    /// up-sampling output (`O_H >= I_H`, `O_W >= I_W`).
    pub fn validate(&self) -> Result<()> {
        self.check_geometry()?;
        if self.crop_top + self.crop_bottom >= self.kh {
            return Err(invalid(
                "crop",
                format!("crop_top + crop_bottom must be < kh = {}", self.kh),
            ));
        }
        if self.crop_left + self.crop_right >= self.kw {
            return Err(invalid(
                "crop",
                format!("crop_left + crop_right must be < kw = {}", self.kw),
            ));
        }
        let (oh, ow, _) = self.output_shape()?;
        if oh < self.input_h || ow < self.input_w {
            return Err(invalid(
                "crop",
                format!(
                    "output {oh}x{ow} must not be smaller than input {}x{}",
                    self.input_h, self.input_w
                ),
            ));
        }
        Ok(())
    }

    /// `(O_H, O_W, M)` with `O_H = s (I_H - 1) + K_H - crop_top - crop_bottom`.
    pub fn output_shape(&self) -> Result<(usize, usize, usize)> {
        self.check_geometry()?;
        Ok((self.output_h(), self.output_w(), self.filters))
    }

    /// Output height. Only meaningful after [`check_geometry`](Self::check_geometry).
    pub fn output_h(&self) -> usize {
        self.canvas_h() - self.crop_top - self.crop_bottom
    }

    pub fn output_w(&self) -> usize {
        self.canvas_w() - self.crop_left - self.crop_right
    }

    fn check_input<T: Element>(&self, input: &Tensor3<T>) -> Result<()> {
        let want = (self.input_h, self.input_w, self.channels);
        if input.shape() != want {
            return Err(Error::Shape(format!(
                "input is {:?}, layer expects {want:?}",
                input.shape()
            )));
        }
        Ok(())
    }

    fn check_kernel<T: Element>(&self, kernel: &Kernel4<T>) -> Result<()> {
        if kernel.shape() != self.kernel_shape() {
            return Err(Error::Shape(format!(
                "kernel is {:?}, layer expects {:?}",
                kernel.shape(),
                self.kernel_shape()
            )));
        }
        Ok(())
    }
}

/// Inserts `stride - 1` zeros between input pixels and surrounds the result
/// with `K - 1 - crop` zero rows/columns on each side.
///
/// Pixel `(a, b, c)` lands at `(pad_top + a s, pad_left + b s, c)`; a
/// `K_H x K_W` window sliding with stride 1 visits exactly `O_H x O_W`
/// positions.
pub fn dilate_and_pad<T: Element>(
    input: &Tensor3<T>,
    spec: &DeconvLayerSpec,
) -> Result<Tensor3<T>> {
    spec.check_geometry()?;
    spec.check_input(input)?;
    let s = spec.stride;
    let mut out = Tensor3::zeros(spec.padded_h(), spec.padded_w(), spec.channels);
    for a in 0..spec.input_h {
        for b in 0..spec.input_w {
            out.pixel_mut(spec.pad_top() + a * s, spec.pad_left() + b * s)
                .copy_from_slice(input.pixel(a, b));
        }
    }
    Ok(out)
}

/// Stride-1 valid cross-correlation (no kernel flip):
/// `out(y, x, m) = sum_{i,j,c} image(y+i, x+j, c) * kernel(i, j, c, m)`.
pub fn conv2d_valid<T: Element>(image: &Tensor3<T>, kernel: &Kernel4<T>) -> Result<Tensor3<T>> {
    let ks = kernel.shape();
    if image.channels() != ks.channels {
        return Err(Error::Shape(format!(
            "image has {} channels, kernel expects {}",
            image.channels(),
            ks.channels
        )));
    }
    if image.height() < ks.kh || image.width() < ks.kw {
        return Err(Error::Shape(format!(
            "image {}x{} is smaller than kernel {}x{}",
            image.height(),
            image.width(),
            ks.kh,
            ks.kw
        )));
    }
    let oh = image.height() - ks.kh + 1;
    let ow = image.width() - ks.kw + 1;
    let m_count = ks.filters;

    // Rows/columns that are entirely zero contribute nothing; dilated images
    // are mostly such lines.
    let nonzero = |y: usize, x: usize| image.pixel(y, x).iter().any(|v| !v.is_zero());
    let row_live: Vec<bool> = (0..image.height())
        .map(|y| (0..image.width()).any(|x| nonzero(y, x)))
        .collect();
    let col_live: Vec<bool> = (0..image.width())
        .map(|x| (0..image.height()).any(|y| nonzero(y, x)))
        .collect();

    let mut out = Tensor3::zeros(oh, ow, m_count);
    let mut acc = vec![T::zero(); m_count];
    for y in 0..oh {
        for x in 0..ow {
            acc.iter_mut().for_each(|v| *v = T::zero());
            for i in (0..ks.kh).filter(|&i| row_live[y + i]) {
                for j in (0..ks.kw).filter(|&j| col_live[x + j]) {
                    let px = image.pixel(y + i, x + j);
                    let tap = kernel.tap(i, j);
                    for (c, &v) in px.iter().enumerate() {
                        if v.is_zero() {
                            continue;
                        }
                        let row = &tap[c * m_count..(c + 1) * m_count];
                        for (a, &w) in acc.iter_mut().zip(row) {
                            *a += v * w;
                        }
                    }
                }
            }
            out.pixel_mut(y, x).copy_from_slice(&acc);
        }
    }
    Ok(out)
}

/// Deconvolution by zero insertion followed by a stride-1 convolution.
pub fn deconv_oracle_zero_padding<T: Element>(
    input: &Tensor3<T>,
    kernel: &Kernel4<T>,
    spec: &DeconvLayerSpec,
) -> Result<Tensor3<T>> {
    spec.check_kernel(kernel)?;
    let padded = dilate_and_pad(input, spec)?;
    conv2d_valid(&padded, kernel)
}

/// `out(i, j, c, m) = in(K_H - 1 - i, K_W - 1 - j, c, m)`.
pub fn rotate180<T: Element>(kernel: &Kernel4<T>) -> Kernel4<T> {
    let s = kernel.shape();
    Kernel4::from_fn(s, |i, j, c, m| kernel.get(s.kh - 1 - i, s.kw - 1 - j, c, m))
}

/// Deconvolution without zero insertion: each input pixel is multiplied by
/// the 180°-rotated kernel across channels, the `K_H x K_W x M` partial tiles
/// are overlap-added at offset `(s a, s b)` on the full canvas, and the
/// canvas edges are cropped.
pub fn deconv_oracle_padding_free<T: Element>(
    input: &Tensor3<T>,
    kernel: &Kernel4<T>,
    spec: &DeconvLayerSpec,
) -> Result<Tensor3<T>> {
    spec.check_geometry()?;
    spec.check_input(input)?;
    spec.check_kernel(kernel)?;
    let rot = rotate180(kernel);
    let s = spec.stride;
    let m_count = spec.filters;
    let mut canvas = Tensor3::zeros(spec.canvas_h(), spec.canvas_w(), m_count);
    for a in 0..spec.input_h {
        for b in 0..spec.input_w {
            for (c, &v) in input.pixel(a, b).iter().enumerate() {
                if v.is_zero() {
                    continue;
                }
                for i in 0..spec.kh {
                    for j in 0..spec.kw {
                        let row = &rot.tap(i, j)[c * m_count..(c + 1) * m_count];
                        let dst = canvas.pixel_mut(s * a + i, s * b + j);
                        for (d, &w) in dst.iter_mut().zip(row) {
                            *d += v * w;
                        }
                    }
                }
            }
        }
    }
    Ok(crop(&canvas, spec))
}

fn crop<T: Element>(canvas: &Tensor3<T>, spec: &DeconvLayerSpec) -> Tensor3<T> {
    Tensor3::from_fn(
        spec.output_h(),
        spec.output_w(),
        canvas.channels(),
        |y, x, m| canvas.get(y + spec.crop_top, x + spec.crop_left, m),
    )
}

/// Exact multiplication counts of the zero-padding convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RedundancyCount {
    /// Multiplications whose image operand is an inserted or border zero.
    pub zero: u128,
    pub total: u128,
}

impl RedundancyCount {
    pub fn ratio(&self) -> f64 {
        self.zero as f64 / self.total as f64
    }
}

/// Number of window taps over one axis that land on an original (non-padded)
/// input line: `sum over y in 0..O, i in 0..K of [y + i - pad lies on s*a]`.
fn live_taps(out_len: usize, k: usize, pad: usize, stride: usize, input_len: usize) -> u128 {
    let mut count = 0u128;
    for y in 0..out_len {
        for i in 0..k {
            let p = (y + i) as i64 - pad as i64;
            if p >= 0 && p % stride as i64 == 0 && ((p / stride as i64) as usize) < input_len {
                count += 1;
            }
        }
    }
    count
}

/// Per-channel multiplication counts; channels cancel in the ratio.
pub fn zero_redundancy(spec: &DeconvLayerSpec) -> Result<RedundancyCount> {
    spec.check_geometry()?;
    let rows = live_taps(
        spec.output_h(),
        spec.kh,
        spec.pad_top(),
        spec.stride,
        spec.input_h,
    );
    let cols = live_taps(
        spec.output_w(),
        spec.kw,
        spec.pad_left(),
        spec.stride,
        spec.input_w,
    );
    let total = (spec.output_h() * spec.kh) as u128 * (spec.output_w() * spec.kw) as u128;
    Ok(RedundancyCount {
        zero: total - rows * cols,
        total,
    })
}

/// Fraction of the zero-padding design's multiplications spent on padded zeros.
pub fn zero_redundancy_ratio(spec: &DeconvLayerSpec) -> Result<f64> {
    Ok(zero_redundancy(spec)?.ratio())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_tensor(h: usize, w: usize, c: usize) -> Tensor3<i64> {
        Tensor3::from_fn(h, w, c, |y, x, ch| {
            ((y * 7 + x * 3 + ch * 5) % 11) as i64 - 5
        })
    }

    fn seq_kernel(shape: KernelShape) -> Kernel4<i64> {
        Kernel4::from_fn(shape, |i, j, c, m| {
            ((i * 5 + j * 3 + c * 2 + m * 7) % 9) as i64 - 4
        })
    }

    #[test]
    fn output_shape_table_rows() {
        let fcn2 = DeconvLayerSpec::symmetric((70, 70, 21), (16, 16, 21), 8, 0);
        assert_eq!(fcn2.output_shape().unwrap(), (568, 568, 21));
        let gan3 = DeconvLayerSpec::symmetric((4, 4, 512), (4, 4, 256), 2, 1);
        assert_eq!(gan3.output_shape().unwrap(), (8, 8, 256));
        let id = DeconvLayerSpec::symmetric((1, 1, 1), (1, 1, 3), 1, 0);
        assert_eq!(id.output_shape().unwrap(), (1, 1, 3));
    }

    #[test]
    fn output_shape_rejects_empty_output() {
        // 1x1 input, K=3, crops 2+2 leaves 3 - 4 < 1 rows.
        let spec = DeconvLayerSpec::symmetric((1, 1, 1), (3, 3, 1), 1, 2);
        assert!(matches!(
            spec.output_shape(),
            Err(Error::InvalidSpec { .. })
        ));
    }

    #[test]
    fn stride_zero_is_rejected() {
        let spec = DeconvLayerSpec::symmetric((2, 2, 1), (2, 2, 1), 0, 0);
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("stride must be ≥ 1"), "{err}");
    }

    #[test]
    fn validate_rejects_downsampling_and_oversized_crops() {
        // Full crop K-1 per side shrinks the output.
        let spec = DeconvLayerSpec::symmetric((5, 5, 1), (3, 3, 1), 1, 2);
        assert!(spec.check_geometry().is_ok());
        assert!(spec.validate().is_err());
        let spec = DeconvLayerSpec::symmetric((4, 4, 1), (3, 3, 1), 2, 3);
        assert!(spec.check_geometry().is_err());
    }

    #[test]
    fn dilate_2x2_stride2() {
        let input = Tensor3::new(2, 2, 1, vec![1i64, 2, 3, 4]).unwrap();
        let spec = DeconvLayerSpec::symmetric((2, 2, 1), (2, 2, 1), 2, 0);
        let p = dilate_and_pad(&input, &spec).unwrap();
        assert_eq!(p.shape(), (5, 5, 1));
        let nz: Vec<_> = (0..5)
            .flat_map(|y| (0..5).map(move |x| (y, x)))
            .filter(|&(y, x)| p.get(y, x, 0) != 0)
            .collect();
        assert_eq!(nz, vec![(1, 1), (1, 3), (3, 1), (3, 3)]);
        assert_eq!(p.get(3, 1, 0), 3);
    }

    #[test]
    fn dilate_identity_when_stride1_full_crop() {
        let input = seq_tensor(4, 5, 2);
        let spec = DeconvLayerSpec::symmetric((4, 5, 2), (3, 3, 1), 1, 2);
        assert_eq!(dilate_and_pad(&input, &spec).unwrap(), input);
    }

    #[test]
    fn dilate_gan3_geometry() {
        let input = Tensor3::from_fn(4, 4, 1, |_, _, _| 1i64);
        let spec = DeconvLayerSpec::symmetric((4, 4, 1), (4, 4, 1), 2, 1);
        let p = dilate_and_pad(&input, &spec).unwrap();
        assert_eq!(p.shape(), (11, 11, 1));
        assert_eq!(p.count_nonzero(), 16);
    }

    #[test]
    fn dilate_rejects_wrong_input() {
        let spec = DeconvLayerSpec::symmetric((2, 2, 1), (2, 2, 1), 2, 0);
        assert!(matches!(
            dilate_and_pad(&seq_tensor(3, 2, 1), &spec),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn conv_trivial_cases() {
        let img = Tensor3::new(1, 1, 1, vec![6i64]).unwrap();
        let k = Kernel4::new(1, 1, 1, 1, vec![-7i64]).unwrap();
        assert_eq!(conv2d_valid(&img, &k).unwrap().data(), &[-42]);

        let ones = Tensor3::from_fn(3, 3, 1, |_, _, _| 1i64);
        let k = Kernel4::new(2, 2, 1, 1, vec![1i64; 4]).unwrap();
        let out = conv2d_valid(&ones, &k).unwrap();
        assert_eq!(out.shape(), (2, 2, 1));
        assert!(out.data().iter().all(|&v| v == 4));
    }

    #[test]
    fn conv_matches_nested_loops() {
        let img = seq_tensor(5, 5, 2);
        let shape = KernelShape {
            kh: 3,
            kw: 3,
            channels: 2,
            filters: 4,
        };
        let k = seq_kernel(shape);
        let out = conv2d_valid(&img, &k).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                for m in 0..4 {
                    let mut acc = 0;
                    for i in 0..3 {
                        for j in 0..3 {
                            for c in 0..2 {
                                acc += img.get(y + i, x + j, c) * k.get(i, j, c, m);
                            }
                        }
                    }
                    assert_eq!(out.get(y, x, m), acc);
                }
            }
        }
    }

    #[test]
    fn conv_dimension_errors() {
        let k = seq_kernel(KernelShape {
            kh: 3,
            kw: 3,
            channels: 2,
            filters: 1,
        });
        assert!(conv2d_valid(&seq_tensor(2, 5, 2), &k).is_err());
        assert!(conv2d_valid(&seq_tensor(5, 5, 1), &k).is_err());
    }

    #[test]
    fn zero_padding_degenerates_to_valid_conv() {
        let input = seq_tensor(6, 5, 3);
        let shape = KernelShape {
            kh: 3,
            kw: 3,
            channels: 3,
            filters: 2,
        };
        let k = seq_kernel(shape);
        let spec = DeconvLayerSpec::symmetric((6, 5, 3), (3, 3, 2), 1, 2);
        assert_eq!(
            deconv_oracle_zero_padding(&input, &k, &spec).unwrap(),
            conv2d_valid(&input, &k).unwrap()
        );
    }

    #[test]
    fn single_pixel_impulse_reproduces_kernel() {
        let input = Tensor3::new(1, 1, 1, vec![1i64]).unwrap();
        let shape = KernelShape {
            kh: 3,
            kw: 3,
            channels: 1,
            filters: 1,
        };
        let k = seq_kernel(shape);
        let spec = DeconvLayerSpec::symmetric((1, 1, 1), (3, 3, 1), 2, 0);
        let zp = deconv_oracle_zero_padding(&input, &k, &spec).unwrap();
        let pf = deconv_oracle_padding_free(&input, &k, &spec).unwrap();
        assert_eq!(zp, pf);
        // Correlation against the padded impulse reads the kernel back flipped,
        // i.e. the scatter of the rotated kernel.
        let rot = rotate180(&k);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(zp.get(i, j, 0), rot.get(i, j, 0, 0));
            }
        }
    }

    #[test]
    fn rotate180_cases() {
        let k = Kernel4::new(2, 2, 1, 1, vec![1i64, 2, 3, 4]).unwrap();
        assert_eq!(rotate180(&k).data(), &[4, 3, 2, 1]);
        let k1 = seq_kernel(KernelShape {
            kh: 1,
            kw: 1,
            channels: 3,
            filters: 2,
        });
        assert_eq!(rotate180(&k1), k1);
        let k3 = seq_kernel(KernelShape {
            kh: 3,
            kw: 4,
            channels: 2,
            filters: 2,
        });
        assert_eq!(rotate180(&rotate180(&k3)), k3);
    }

    #[test]
    fn padding_free_pointwise_mixing() {
        let input = seq_tensor(3, 4, 3);
        let shape = KernelShape {
            kh: 1,
            kw: 1,
            channels: 3,
            filters: 2,
        };
        let k = seq_kernel(shape);
        let spec = DeconvLayerSpec::symmetric((3, 4, 3), (1, 1, 2), 1, 0);
        let out = deconv_oracle_padding_free(&input, &k, &spec).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                for m in 0..2 {
                    let want: i64 = (0..3).map(|c| input.get(y, x, c) * k.get(0, 0, c, m)).sum();
                    assert_eq!(out.get(y, x, m), want);
                }
            }
        }
    }

    #[test]
    fn float_mode_agrees_within_tolerance() {
        let input = seq_tensor(4, 4, 2).map(|v| v as f64 * 0.37);
        let k = seq_kernel(KernelShape {
            kh: 4,
            kw: 4,
            channels: 2,
            filters: 3,
        })
        .data()
        .to_vec();
        let k = Kernel4::new(4, 4, 2, 3, k.into_iter().map(|v| v as f64 / 3.0).collect()).unwrap();
        let spec = DeconvLayerSpec::symmetric((4, 4, 2), (4, 4, 3), 2, 1);
        let zp = deconv_oracle_zero_padding(&input, &k, &spec).unwrap();
        let pf = deconv_oracle_padding_free(&input, &k, &spec).unwrap();
        assert!(zp.approx_eq(&pf));
    }

    /// Counts zero operands by materializing the padded image.
    fn brute_redundancy(spec: &DeconvLayerSpec) -> (usize, usize) {
        let ones = Tensor3::from_fn(spec.input_h, spec.input_w, 1, |_, _, _| 1i64);
        let spec1 = spec.with_channels(1, 1);
        let p = dilate_and_pad(&ones, &spec1).unwrap();
        let (oh, ow) = (spec.output_h(), spec.output_w());
        let mut zero = 0;
        for y in 0..oh {
            for x in 0..ow {
                for i in 0..spec.kh {
                    for j in 0..spec.kw {
                        if p.get(y + i, x + j, 0) == 0 {
                            zero += 1;
                        }
                    }
                }
            }
        }
        (zero, oh * ow * spec.kh * spec.kw)
    }

    #[test]
    fn redundancy_hand_case() {
        let spec = DeconvLayerSpec::symmetric((2, 2, 1), (2, 2, 1), 2, 0);
        let r = zero_redundancy(&spec).unwrap();
        assert_eq!((r.zero, r.total), (48, 64));
        assert_eq!(r.ratio(), 0.75);
        assert_eq!(brute_redundancy(&spec), (48, 64));
    }

    #[test]
    fn redundancy_zero_without_padding() {
        let spec = DeconvLayerSpec::symmetric((8, 8, 3), (3, 3, 3), 1, 2);
        assert_eq!(zero_redundancy_ratio(&spec).unwrap(), 0.0);
    }

    #[test]
    fn redundancy_counts_match_brute_force() {
        let specs = [
            DeconvLayerSpec::symmetric((8, 8, 1), (5, 5, 1), 2, 0).with_crops(1, 2, 1, 2),
            DeconvLayerSpec::symmetric((4, 4, 1), (4, 4, 1), 2, 1),
            DeconvLayerSpec::symmetric((7, 5, 1), (16, 16, 1), 8, 0),
            DeconvLayerSpec::symmetric((3, 6, 1), (3, 2, 1), 3, 0).with_crops(2, 0, 1, 0),
        ];
        for spec in specs {
            let r = zero_redundancy(&spec).unwrap();
            let (z, t) = brute_redundancy(&spec);
            assert_eq!((r.zero as usize, r.total as usize), (z, t), "{spec:?}");
        }
    }
}
