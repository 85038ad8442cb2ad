//! Crossbar weight layouts for the three designs.
//!
//! Cells are ideal: a cell stores its signed weight exactly. Differential
//! pairs or bit-sliced encodings only matter to the cost model, which treats
//! them as a uniform multiplier.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{rotate180, Element, Kernel4, KernelShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Design {
    #[serde(rename = "zero_padding")]
    ZeroPadding,
    #[serde(rename = "padding_free")]
    PaddingFree,
    #[serde(rename = "red")]
    RedPixelWise,
    #[serde(rename = "red_folded")]
    RedFolded,
}

impl Design {
    pub const ALL: [Design; 4] = [
        Design::ZeroPadding,
        Design::PaddingFree,
        Design::RedPixelWise,
        Design::RedFolded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Design::ZeroPadding => "zero_padding",
            Design::PaddingFree => "padding_free",
            Design::RedPixelWise => "red",
            Design::RedFolded => "red_folded",
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Design::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::UnknownDesign(s.to_string()))
    }
}

/// Physical array size cap. Larger logical crossbars are split into tiles
/// whose partial sums are added digitally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileLimit {
    pub max_rows: usize,
    pub max_cols: usize,
}

fn split_len(len: usize, max: usize) -> Vec<usize> {
    let max = max.max(1);
    let mut parts = vec![max; len / max];
    if !len.is_multiple_of(max) {
        parts.push(len % max);
    }
    parts
}

/// A `rows x cols` array of cells; inputs drive rows (wordlines), outputs
/// are read from columns (bitlines).
#[derive(Clone, Debug, PartialEq)]
pub struct CrossbarMatrix<T> {
    rows: usize,
    cols: usize,
    weights: Vec<T>,
}

impl<T: Element> CrossbarMatrix<T> {
    pub fn new(rows: usize, cols: usize, weights: Vec<T>) -> Result<Self> {
        if weights.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} crossbar needs {} weights, got {}",
                rows * cols,
                weights.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            weights,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![T::zero(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.weights[row * self.cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[T] {
        &self.weights[row * self.cols..(row + 1) * self.cols]
    }

    /// Vector-matrix product `out[col] = sum_row input[row] * w[row, col]`.
    pub fn vmm(&self, input: &[T]) -> Result<Vec<T>> {
        if input.len() != self.rows {
            return Err(Error::Shape(format!(
                "crossbar has {} rows, input vector has {}",
                self.rows,
                input.len()
            )));
        }
        let mut out = vec![T::zero(); self.cols];
        for (r, &x) in input.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += x * w;
            }
        }
        Ok(out)
    }

    /// Accumulates `x * row` for a single driven row into `out`.
    #[inline]
    pub(crate) fn accumulate_row(&self, row: usize, x: T, out: &mut [T]) {
        for (o, &w) in out.iter_mut().zip(self.row(row)) {
            *o += x * w;
        }
    }

    /// Splits into a row-major grid of tiles no larger than `limit`.
    pub fn split(&self, limit: TileLimit) -> Vec<Vec<CrossbarMatrix<T>>> {
        let mut r0 = 0;
        split_len(self.rows, limit.max_rows)
            .into_iter()
            .map(|rh| {
                let mut c0 = 0;
                let band = split_len(self.cols, limit.max_cols)
                    .into_iter()
                    .map(|cw| {
                        let mut w = Vec::with_capacity(rh * cw);
                        for r in r0..r0 + rh {
                            w.extend_from_slice(&self.row(r)[c0..c0 + cw]);
                        }
                        c0 += cw;
                        CrossbarMatrix::new(rh, cw, w).expect("tile dims are consistent")
                    })
                    .collect();
                r0 += rh;
                band
            })
            .collect()
    }

    /// VMM evaluated tile by tile. Returns the product and the number of
    /// partial-sum additions needed to merge row bands.
    pub fn vmm_tiled(&self, input: &[T], limit: TileLimit) -> Result<(Vec<T>, u64)> {
        if input.len() != self.rows {
            return Err(Error::Shape(format!(
                "crossbar has {} rows, input vector has {}",
                self.rows,
                input.len()
            )));
        }
        let mut out = vec![T::zero(); self.cols];
        let mut adds = 0u64;
        let mut r0 = 0;
        for (band_idx, band) in self.split(limit).into_iter().enumerate() {
            let mut c0 = 0;
            let rh = band[0].rows();
            for tile in band {
                let partial = tile.vmm(&input[r0..r0 + rh])?;
                for (o, p) in out[c0..c0 + tile.cols()].iter_mut().zip(partial) {
                    *o += p;
                }
                if band_idx > 0 {
                    adds += tile.cols() as u64;
                }
                c0 += tile.cols();
            }
            r0 += rh;
        }
        Ok((out, adds))
    }
}

/// RED's sub-crossbar tensor: sub-crossbar `n = i K_W + j` holds the
/// `C x M` weights of kernel tap `(i, j)`, i.e. `SCT[c, m, i K_W + j] = W[i, j, c, m]`.
///
/// Folding stacks subs `2n` (rows `0..C`) and `2n + 1` (rows `C..2C`) into
/// one `2C x M` array; an odd tap count leaves the last array's lower half zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SubCrossbarTensor<T> {
    kernel: KernelShape,
    folded: bool,
    subs: Vec<CrossbarMatrix<T>>,
}

impl<T: Element> SubCrossbarTensor<T> {
    pub fn channels(&self) -> usize {
        self.kernel.channels
    }

    pub fn filters(&self) -> usize {
        self.kernel.filters
    }

    pub fn kernel_shape(&self) -> KernelShape {
        self.kernel
    }

    pub fn count(&self) -> usize {
        self.subs.len()
    }

    pub fn folded(&self) -> bool {
        self.folded
    }

    pub fn subs(&self) -> &[CrossbarMatrix<T>] {
        &self.subs
    }

    /// Reads `SCT[c, m, n]` in the unfolded index space (`n < K_H K_W`).
    pub fn get(&self, c: usize, m: usize, n: usize) -> T {
        if self.folded {
            let half = n % 2;
            self.subs[n / 2].get(half * self.kernel.channels + c, m)
        } else {
            self.subs[n].get(c, m)
        }
    }

    pub fn into_subs(self) -> Vec<CrossbarMatrix<T>> {
        self.subs
    }
}

/// Pixel-wise mapping: one `C x M` sub-crossbar per kernel tap.
pub fn map_pixel_wise<T: Element>(kernel: &Kernel4<T>) -> SubCrossbarTensor<T> {
    let s = kernel.shape();
    let subs = (0..s.kh)
        .flat_map(|i| (0..s.kw).map(move |j| (i, j)))
        .map(|(i, j)| {
            CrossbarMatrix::new(s.channels, s.filters, kernel.tap(i, j).to_vec())
                .expect("tap is C x M")
        })
        .collect();
    SubCrossbarTensor {
        kernel: s,
        folded: false,
        subs,
    }
}

/// Halves the sub-crossbar count by stacking pairs into `2C x M` arrays.
pub fn fold_area_efficient<T: Element>(sct: &SubCrossbarTensor<T>) -> Result<SubCrossbarTensor<T>> {
    if sct.folded {
        return Err(Error::AlreadyFolded);
    }
    let (c, m) = (sct.channels(), sct.filters());
    let subs = sct
        .subs
        .chunks(2)
        .map(|pair| {
            let mut w = Vec::with_capacity(2 * c * m);
            w.extend_from_slice(pair[0].weights());
            match pair.get(1) {
                Some(second) => w.extend_from_slice(second.weights()),
                None => w.resize(2 * c * m, T::zero()),
            }
            CrossbarMatrix::new(2 * c, m, w).expect("stacked pair is 2C x M")
        })
        .collect();
    Ok(SubCrossbarTensor {
        kernel: sct.kernel,
        folded: true,
        subs,
    })
}

/// How a crossbar row index maps back to kernel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSemantics {
    /// `row = (i K_W + j) C + c`: a flattened receptive-field window.
    WindowTap,
    /// `row = c`; the tap is fixed by the crossbar or the column.
    Channel,
    /// `row = half C + c`, `half` selecting the stacked tap of a folded pair.
    StackedChannel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColSemantics {
    /// `col = m`.
    Filter,
    /// `col = (i K_W + j) M + m` over the rotated kernel.
    TapFilter,
}

/// The original kernel weight `W[i, j, c, m]` stored in a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellLabel {
    pub i: usize,
    pub j: usize,
    pub c: usize,
    pub m: usize,
}

/// Weight layout of one design.
#[derive(Clone, Debug)]
pub struct MappingPlan<T> {
    design: Design,
    kernel: KernelShape,
    crossbars: Vec<CrossbarMatrix<T>>,
    tiling: Option<TileLimit>,
}

/// One wide crossbar, `K_H K_W C` rows by `M` columns: every filter is
/// flattened into a column.
pub fn map_zero_padding<T: Element>(kernel: &Kernel4<T>) -> MappingPlan<T> {
    let s = kernel.shape();
    let xbar = CrossbarMatrix::new(s.taps() * s.channels, s.filters, kernel.data().to_vec())
        .expect("kernel storage order is the column mapping");
    MappingPlan {
        design: Design::ZeroPadding,
        kernel: s,
        crossbars: vec![xbar],
        tiling: None,
    }
}

/// One `C x K_H K_W M` crossbar holding the 180°-rotated kernel.
pub fn map_padding_free<T: Element>(kernel: &Kernel4<T>) -> MappingPlan<T> {
    let s = kernel.shape();
    let rot = rotate180(kernel);
    let cols = s.taps() * s.filters;
    let mut w = vec![T::zero(); s.channels * cols];
    for i in 0..s.kh {
        for j in 0..s.kw {
            let tap = i * s.kw + j;
            for c in 0..s.channels {
                for m in 0..s.filters {
                    w[c * cols + tap * s.filters + m] = rot.get(i, j, c, m);
                }
            }
        }
    }
    MappingPlan {
        design: Design::PaddingFree,
        kernel: s,
        crossbars: vec![CrossbarMatrix::new(s.channels, cols, w).expect("C x K_H K_W M")],
        tiling: None,
    }
}

impl<T: Element> MappingPlan<T> {
    pub fn from_sct(sct: SubCrossbarTensor<T>) -> Self {
        let design = if sct.folded {
            Design::RedFolded
        } else {
            Design::RedPixelWise
        };
        MappingPlan {
            design,
            kernel: sct.kernel,
            crossbars: sct.subs,
            tiling: None,
        }
    }

    pub fn with_tiling(mut self, tiling: Option<TileLimit>) -> Self {
        self.tiling = tiling;
        self
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn kernel_shape(&self) -> KernelShape {
        self.kernel
    }

    pub fn crossbars(&self) -> &[CrossbarMatrix<T>] {
        &self.crossbars
    }

    pub fn tiling(&self) -> Option<TileLimit> {
        self.tiling
    }

    pub fn row_semantics(&self) -> RowSemantics {
        match self.design {
            Design::ZeroPadding => RowSemantics::WindowTap,
            Design::PaddingFree | Design::RedPixelWise => RowSemantics::Channel,
            Design::RedFolded => RowSemantics::StackedChannel,
        }
    }

    pub fn col_semantics(&self) -> ColSemantics {
        match self.design {
            Design::PaddingFree => ColSemantics::TapFilter,
            _ => ColSemantics::Filter,
        }
    }

    pub fn total_cells(&self) -> usize {
        self.crossbars.iter().map(|x| x.rows() * x.cols()).sum()
    }

    /// The kernel weight a cell holds, or `None` for zero fill (the lower
    /// half of the last folded array when `K_H K_W` is odd).
    pub fn decode_cell(&self, crossbar: usize, row: usize, col: usize) -> Option<CellLabel> {
        let k = self.kernel;
        match self.design {
            Design::ZeroPadding => Some(CellLabel {
                i: row / (k.kw * k.channels),
                j: (row / k.channels) % k.kw,
                c: row % k.channels,
                m: col,
            }),
            Design::PaddingFree => {
                let tap = col / k.filters;
                Some(CellLabel {
                    i: k.kh - 1 - tap / k.kw,
                    j: k.kw - 1 - tap % k.kw,
                    c: row,
                    m: col % k.filters,
                })
            }
            Design::RedPixelWise => Some(CellLabel {
                i: crossbar / k.kw,
                j: crossbar % k.kw,
                c: row,
                m: col,
            }),
            Design::RedFolded => {
                let n = 2 * crossbar + row / k.channels;
                (n < k.taps()).then(|| CellLabel {
                    i: n / k.kw,
                    j: n % k.kw,
                    c: row % k.channels,
                    m: col,
                })
            }
        }
    }

    pub fn geometry(&self) -> PlanGeometry {
        PlanGeometry::new(self.design, self.kernel, self.tiling)
    }

    pub fn inventory(&self) -> PeripheryInventory {
        self.geometry().inventory()
    }
}

pub fn build_plan<T: Element>(design: Design, kernel: &Kernel4<T>) -> MappingPlan<T> {
    match design {
        Design::ZeroPadding => map_zero_padding(kernel),
        Design::PaddingFree => map_padding_free(kernel),
        Design::RedPixelWise => MappingPlan::from_sct(map_pixel_wise(kernel)),
        Design::RedFolded => MappingPlan::from_sct(
            fold_area_efficient(&map_pixel_wise(kernel)).expect("fresh tensor is unfolded"),
        ),
    }
}

/// Dimensions of one logical crossbar and its physical tiling.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CrossbarGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Row-band heights; a single entry when untiled.
    pub row_tiles: Vec<usize>,
    /// Column-band widths.
    pub col_tiles: Vec<usize>,
}

impl CrossbarGeometry {
    fn new(rows: usize, cols: usize, tiling: Option<TileLimit>) -> Self {
        let (row_tiles, col_tiles) = match tiling {
            Some(t) => (split_len(rows, t.max_rows), split_len(cols, t.max_cols)),
            None => (vec![rows], vec![cols]),
        };
        Self {
            rows,
            cols,
            row_tiles,
            col_tiles,
        }
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn tile_count(&self) -> usize {
        self.row_tiles.len() * self.col_tiles.len()
    }

    pub fn widest_tile(&self) -> usize {
        self.col_tiles.iter().copied().max().unwrap_or(0)
    }

    /// Partial-sum additions per activation to merge row bands.
    pub fn partial_sum_adds(&self) -> u64 {
        ((self.row_tiles.len() - 1) * self.cols) as u64
    }
}

/// Crossbar dimensions of a design without the weight values; what the cost
/// model needs at full layer size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PlanGeometry {
    pub design: Design,
    pub kernel: KernelShape,
    pub crossbars: Vec<CrossbarGeometry>,
}

impl PlanGeometry {
    pub fn new(design: Design, kernel: KernelShape, tiling: Option<TileLimit>) -> Self {
        let (c, m, taps) = (kernel.channels, kernel.filters, kernel.taps());
        let (count, rows, cols) = match design {
            Design::ZeroPadding => (1, taps * c, m),
            Design::PaddingFree => (1, c, taps * m),
            Design::RedPixelWise => (taps, c, m),
            Design::RedFolded => (taps.div_ceil(2), 2 * c, m),
        };
        Self {
            design,
            kernel,
            crossbars: (0..count)
                .map(|_| CrossbarGeometry::new(rows, cols, tiling))
                .collect(),
        }
    }

    pub fn total_cells(&self) -> usize {
        self.crossbars.iter().map(CrossbarGeometry::cells).sum()
    }

    /// One driver bank, decoder, column mux, read-circuit bank and shift-adder
    /// bank per physical array; port counts are rows for the input side and
    /// columns for the output side.
    pub fn inventory(&self) -> PeripheryInventory {
        let mut input_side = PortGroup::default();
        let mut output_side = PortGroup::default();
        for x in &self.crossbars {
            input_side.instances += x.tile_count();
            output_side.instances += x.tile_count();
            input_side.ports += x.rows * x.col_tiles.len();
            output_side.ports += x.cols * x.row_tiles.len();
        }
        PeripheryInventory {
            wordline_drivers: input_side,
            decoders: input_side,
            bitline_drivers: output_side,
            muxes: output_side,
            read_circuits: output_side,
            shift_adders: output_side,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PortGroup {
    pub instances: usize,
    pub ports: usize,
}

/// Periphery circuits implied by a layout, one field per breakdown component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PeripheryInventory {
    pub wordline_drivers: PortGroup,
    pub bitline_drivers: PortGroup,
    pub decoders: PortGroup,
    pub muxes: PortGroup,
    pub read_circuits: PortGroup,
    pub shift_adders: PortGroup,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Lcg;

    fn kernel(kh: usize, kw: usize, c: usize, m: usize, seed: u64) -> Kernel4<i64> {
        Lcg::new(seed).kernel(KernelShape {
            kh,
            kw,
            channels: c,
            filters: m,
        })
    }

    #[test]
    fn design_names_round_trip() {
        for d in Design::ALL {
            assert_eq!(d.as_str().parse::<Design>().unwrap(), d);
        }
        assert!(matches!(
            "red2".parse::<Design>(),
            Err(Error::UnknownDesign(_))
        ));
    }

    #[test]
    fn zero_padding_shapes() {
        let k = Kernel4::new(1, 1, 1, 1, vec![5i64]).unwrap();
        let p = map_zero_padding(&k);
        assert_eq!(
            p.crossbars()[0],
            CrossbarMatrix::new(1, 1, vec![5]).unwrap()
        );

        let g = PlanGeometry::new(
            Design::ZeroPadding,
            KernelShape {
                kh: 3,
                kw: 3,
                channels: 512,
                filters: 256,
            },
            None,
        );
        assert_eq!((g.crossbars[0].rows, g.crossbars[0].cols), (4608, 256));
        let g = PlanGeometry::new(
            Design::ZeroPadding,
            KernelShape {
                kh: 5,
                kw: 5,
                channels: 512,
                filters: 256,
            },
            None,
        );
        assert_eq!((g.crossbars[0].rows, g.crossbars[0].cols), (12800, 256));
    }

    #[test]
    fn zero_padding_row_index() {
        let k = kernel(3, 2, 4, 3, 11);
        let p = map_zero_padding(&k);
        let x = &p.crossbars()[0];
        for i in 0..3 {
            for j in 0..2 {
                for c in 0..4 {
                    for m in 0..3 {
                        assert_eq!(x.get(i * 2 * 4 + j * 4 + c, m), k.get(i, j, c, m));
                    }
                }
            }
        }
    }

    #[test]
    fn padding_free_shapes() {
        let k = kernel(1, 1, 3, 2, 3);
        assert_eq!(
            map_padding_free(&k).crossbars(),
            map_zero_padding(&k).crossbars()
        );
        let g = PlanGeometry::new(
            Design::PaddingFree,
            KernelShape {
                kh: 16,
                kw: 16,
                channels: 21,
                filters: 21,
            },
            None,
        );
        assert_eq!((g.crossbars[0].rows, g.crossbars[0].cols), (21, 5376));
    }

    #[test]
    fn pixel_wise_shapes_and_eq1() {
        let k = kernel(3, 3, 4, 2, 5);
        let sct = map_pixel_wise(&k);
        assert_eq!(sct.count(), 9);
        for i in 0..3 {
            for j in 0..3 {
                for c in 0..4 {
                    for m in 0..2 {
                        assert_eq!(sct.get(c, m, i * 3 + j), k.get(i, j, c, m));
                    }
                }
            }
        }
        let k1 = kernel(1, 1, 3, 4, 9);
        let sct1 = map_pixel_wise(&k1);
        assert_eq!(sct1.count(), 1);
        assert_eq!(sct1.subs()[0].weights(), k1.data());

        let g = PlanGeometry::new(
            Design::RedPixelWise,
            KernelShape {
                kh: 16,
                kw: 16,
                channels: 21,
                filters: 21,
            },
            None,
        );
        assert_eq!(g.crossbars.len(), 256);
        assert!(g.crossbars.iter().all(|x| (x.rows, x.cols) == (21, 21)));
    }

    #[test]
    fn fold_even_and_odd() {
        let g = PlanGeometry::new(
            Design::RedFolded,
            KernelShape {
                kh: 16,
                kw: 16,
                channels: 21,
                filters: 21,
            },
            None,
        );
        assert_eq!(g.crossbars.len(), 128);
        assert!(g.crossbars.iter().all(|x| (x.rows, x.cols) == (42, 21)));

        let k = kernel(3, 3, 2, 3, 1);
        let sct = map_pixel_wise(&k);
        let folded = fold_area_efficient(&sct).unwrap();
        assert_eq!(folded.count(), 5);
        let last = &folded.subs()[4];
        assert_eq!(&last.weights()[..6], sct.subs()[8].weights());
        assert!(last.weights()[6..].iter().all(|&v| v == 0));
        for n in 0..4 {
            assert_eq!(
                &folded.subs()[n].weights()[..6],
                sct.subs()[2 * n].weights()
            );
            assert_eq!(
                &folded.subs()[n].weights()[6..],
                sct.subs()[2 * n + 1].weights()
            );
        }
        assert!(matches!(
            fold_area_efficient(&folded),
            Err(Error::AlreadyFolded)
        ));
    }

    #[test]
    fn folded_vmm_reproduces_halves() {
        let k = kernel(2, 3, 4, 3, 21);
        let sct = map_pixel_wise(&k);
        let folded = fold_area_efficient(&sct).unwrap();
        let mut rng = Lcg::new(8);
        for n in 0..folded.count() {
            let x: Vec<i64> = (0..4).map(|_| rng.small_int()).collect();
            let mut upper = x.clone();
            upper.extend([0; 4]);
            let mut lower = vec![0; 4];
            lower.extend(&x);
            let f = &folded.subs()[n];
            assert_eq!(f.vmm(&upper).unwrap(), sct.subs()[2 * n].vmm(&x).unwrap());
            assert_eq!(
                f.vmm(&lower).unwrap(),
                sct.subs()[2 * n + 1].vmm(&x).unwrap()
            );
        }
    }

    #[test]
    fn vmm_cases() {
        let id = CrossbarMatrix::new(2, 2, vec![1i64, 0, 0, 1]).unwrap();
        assert_eq!(id.vmm(&[3, 5]).unwrap(), vec![3, 5]);
        let ones = CrossbarMatrix::new(3, 2, vec![1i64; 6]).unwrap();
        assert_eq!(ones.vmm(&[1, 2, 3]).unwrap(), vec![6, 6]);
        assert!(matches!(ones.vmm(&[1, 2]), Err(Error::Shape(_))));

        let mut rng = Lcg::new(99);
        let w: Vec<i64> = (0..32).map(|_| rng.small_int()).collect();
        let x: Vec<i64> = (0..8).map(|_| rng.small_int()).collect();
        let xb = CrossbarMatrix::new(8, 4, w.clone()).unwrap();
        let want: Vec<i64> = (0..4)
            .map(|col| (0..8).map(|r| x[r] * w[r * 4 + col]).sum())
            .collect();
        assert_eq!(xb.vmm(&x).unwrap(), want);
    }

    #[test]
    fn tiled_vmm_matches_untiled() {
        let mut rng = Lcg::new(4);
        let w: Vec<i64> = (0..13 * 7).map(|_| rng.small_int()).collect();
        let x: Vec<i64> = (0..13).map(|_| rng.small_int()).collect();
        let xb = CrossbarMatrix::new(13, 7, w).unwrap();
        let limit = TileLimit {
            max_rows: 4,
            max_cols: 3,
        };
        let tiles = xb.split(limit);
        assert_eq!(tiles.len(), 4);
        assert_eq!(tiles[0].len(), 3);
        let (out, adds) = xb.vmm_tiled(&x, limit).unwrap();
        assert_eq!(out, xb.vmm(&x).unwrap());
        assert_eq!(adds, 3 * 7);
        let g = CrossbarGeometry::new(13, 7, Some(limit));
        assert_eq!(g.partial_sum_adds(), adds);
    }

    #[test]
    fn every_design_stores_each_weight_once() {
        let k = kernel(3, 5, 3, 2, 17);
        let s = k.shape();
        let mut expected: Vec<CellLabel> = Vec::new();
        for i in 0..s.kh {
            for j in 0..s.kw {
                for c in 0..s.channels {
                    for m in 0..s.filters {
                        expected.push(CellLabel { i, j, c, m });
                    }
                }
            }
        }
        for design in Design::ALL {
            let plan = build_plan(design, &k);
            let mut seen = Vec::new();
            for (n, xb) in plan.crossbars().iter().enumerate() {
                for r in 0..xb.rows() {
                    for col in 0..xb.cols() {
                        match plan.decode_cell(n, r, col) {
                            Some(l) => {
                                assert_eq!(xb.get(r, col), k.get(l.i, l.j, l.c, l.m), "{design}");
                                seen.push(l);
                            }
                            None => assert_eq!(xb.get(r, col), 0),
                        }
                    }
                }
            }
            seen.sort();
            assert_eq!(seen, expected, "{design}");
            assert_eq!(plan.geometry(), PlanGeometry::new(design, s, None));
        }
    }

    #[test]
    fn inventory_scales_with_instances() {
        let shape = KernelShape {
            kh: 4,
            kw: 4,
            channels: 8,
            filters: 6,
        };
        let zp = PlanGeometry::new(Design::ZeroPadding, shape, None).inventory();
        let pf = PlanGeometry::new(Design::PaddingFree, shape, None).inventory();
        let red = PlanGeometry::new(Design::RedPixelWise, shape, None).inventory();
        assert_eq!(
            zp.shift_adders,
            PortGroup {
                instances: 1,
                ports: 6
            }
        );
        assert_eq!(
            pf.read_circuits,
            PortGroup {
                instances: 1,
                ports: 96
            }
        );
        assert_eq!(
            red.decoders,
            PortGroup {
                instances: 16,
                ports: 128
            }
        );
        assert_eq!(zp.wordline_drivers.ports, red.wordline_drivers.ports);
    }
}
