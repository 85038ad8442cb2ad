//! Per-cycle schedules for the three designs and their execution.
//!
//! A [`CycleSchedule`] lists, for every cycle, which crossbar performs a VMM
//! on which input vector, and which crossbar outputs are summed into which
//! output pixel. [`execute`] runs a schedule against a [`MappingPlan`] and
//! records an [`ExecutionTrace`]; [`trace_activity`] produces the same trace
//! from crossbar dimensions alone, which is how full-size layers are costed.
//!
//! RED's zero-skipping schedule walks the output in `s x s` tiles. Output row
//! `y` only ever meets original input rows through kernel rows
//! `i ≡ pad_top - y (mod s)`, so the `s²` pixels of a tile use disjoint tap
//! sets (the computation modes) and every sub-crossbar fires at most once per
//! cycle.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mapping::{Design, MappingPlan, PlanGeometry};
use crate::tensor::{DeconvLayerSpec, Element, Tensor3};

/// Kernel taps sharing one residue class `(i mod s, j mod s)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Mode {
    pub residue: (usize, usize),
    pub taps: Vec<(usize, usize)>,
}

impl Mode {
    pub fn size(&self) -> usize {
        self.taps.len()
    }
}

/// The `s²` computation modes of a layer, in row-major residue order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModePartition {
    pub stride: usize,
    pub modes: Vec<Mode>,
}

impl ModePartition {
    pub fn mode(&self, ry: usize, rx: usize) -> &Mode {
        &self.modes[ry * self.stride + rx]
    }
}

pub fn partition_modes(spec: &DeconvLayerSpec) -> Result<ModePartition> {
    spec.check_geometry()?;
    let s = spec.stride;
    let modes = (0..s)
        .flat_map(|ry| (0..s).map(move |rx| (ry, rx)))
        .map(|(ry, rx)| Mode {
            residue: (ry, rx),
            taps: (ry..spec.kh)
                .step_by(s)
                .flat_map(|i| (rx..spec.kw).step_by(s).map(move |j| (i, j)))
                .collect(),
        })
        .collect();
    Ok(ModePartition { stride: s, modes })
}

/// What a crossbar's wordlines are driven with in one cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputDescriptor {
    /// The `C`-vector of input pixel `(a, b)`.
    Pixel { a: usize, b: usize },
    /// Folded array, first phase: `[input(a, b), 0]`.
    Upper { a: usize, b: usize },
    /// Folded array, second phase: `[0, input(a, b)]`.
    Lower { a: usize, b: usize },
    /// The flattened `K_H x K_W x C` window of the padded image at output `(y, x)`.
    Window { y: usize, x: usize },
    /// A tap whose aligned input pixel `(a, b)` lies outside the image.
    Zero { a: i64, b: i64 },
}

impl InputDescriptor {
    pub fn kind(&self) -> &'static str {
        match self {
            InputDescriptor::Pixel { .. } => "pixel",
            InputDescriptor::Upper { .. } => "upper",
            InputDescriptor::Lower { .. } => "lower",
            InputDescriptor::Window { .. } => "window",
            InputDescriptor::Zero { .. } => "zero",
        }
    }

    fn coords(&self) -> (i64, i64) {
        match *self {
            InputDescriptor::Pixel { a, b }
            | InputDescriptor::Upper { a, b }
            | InputDescriptor::Lower { a, b } => (a as i64, b as i64),
            InputDescriptor::Window { y, x } => (y as i64, x as i64),
            InputDescriptor::Zero { a, b } => (a, b),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, InputDescriptor::Zero { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Assignment {
    pub crossbar: usize,
    pub input: InputDescriptor,
}

/// A crossbar output produced in `cycle`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GroupMember {
    pub cycle: usize,
    pub crossbar: usize,
}

/// Crossbar outputs summed into output pixel `(y, x)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AccumulationGroup {
    pub y: usize,
    pub x: usize,
    pub members: Vec<GroupMember>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Cycle {
    pub assignments: Vec<Assignment>,
    pub groups: Vec<AccumulationGroup>,
}

/// Overlap-add of every crossbar output onto the full canvas, then cropping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PostOps {
    pub canvas_h: usize,
    pub canvas_w: usize,
    pub crop: [usize; 4],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CycleSchedule {
    pub design: Design,
    pub spec: DeconvLayerSpec,
    pub crossbar_count: usize,
    pub cycles: Vec<Cycle>,
    pub post_ops: Option<PostOps>,
}

/// Closed-form cycle counts: `O_H O_W`, `I_H I_W`, `ceil(O_H/s) ceil(O_W/s)`
/// and twice that when folded.
pub fn expected_cycles(design: Design, spec: &DeconvLayerSpec) -> u64 {
    let (oh, ow) = (spec.output_h() as u64, spec.output_w() as u64);
    let s = spec.stride as u64;
    match design {
        Design::ZeroPadding => oh * ow,
        Design::PaddingFree => (spec.input_h * spec.input_w) as u64,
        Design::RedPixelWise => oh.div_ceil(s) * ow.div_ceil(s),
        Design::RedFolded => 2 * oh.div_ceil(s) * ow.div_ceil(s),
    }
}

pub fn crossbar_count(design: Design, spec: &DeconvLayerSpec) -> usize {
    let taps = spec.kh * spec.kw;
    match design {
        Design::ZeroPadding | Design::PaddingFree => 1,
        Design::RedPixelWise => taps,
        Design::RedFolded => taps.div_ceil(2),
    }
}

/// One cycle per output pixel in row-major order; the single crossbar sees
/// the gathered padded window.
pub fn schedule_zero_padding(spec: &DeconvLayerSpec) -> Result<CycleSchedule> {
    spec.check_geometry()?;
    let (oh, ow) = (spec.output_h(), spec.output_w());
    let cycles = (0..oh * ow)
        .map(|t| {
            let (y, x) = (t / ow, t % ow);
            Cycle {
                assignments: vec![Assignment {
                    crossbar: 0,
                    input: InputDescriptor::Window { y, x },
                }],
                groups: vec![AccumulationGroup {
                    y,
                    x,
                    members: vec![GroupMember {
                        cycle: t,
                        crossbar: 0,
                    }],
                }],
            }
        })
        .collect();
    Ok(CycleSchedule {
        design: Design::ZeroPadding,
        spec: *spec,
        crossbar_count: 1,
        cycles,
        post_ops: None,
    })
}

/// One cycle per input pixel; outputs are overlap-added and cropped after
/// the last cycle.
pub fn schedule_padding_free(spec: &DeconvLayerSpec) -> Result<CycleSchedule> {
    spec.check_geometry()?;
    let cycles = (0..spec.input_h)
        .flat_map(|a| (0..spec.input_w).map(move |b| (a, b)))
        .map(|(a, b)| Cycle {
            assignments: vec![Assignment {
                crossbar: 0,
                input: InputDescriptor::Pixel { a, b },
            }],
            groups: Vec::new(),
        })
        .collect();
    Ok(CycleSchedule {
        design: Design::PaddingFree,
        spec: *spec,
        crossbar_count: 1,
        cycles,
        post_ops: Some(PostOps {
            canvas_h: spec.canvas_h(),
            canvas_w: spec.canvas_w(),
            crop: [
                spec.crop_top,
                spec.crop_bottom,
                spec.crop_left,
                spec.crop_right,
            ],
        }),
    })
}

/// Input pixel index feeding tap `k` for output position `pos`, if the tap
/// lands on an original pixel: `(pos + k - pad) / s`.
#[inline]
fn aligned_input(pos: usize, k: usize, pad: usize, s: usize) -> Option<i64> {
    let p = (pos + k) as i64 - pad as i64;
    (p.rem_euclid(s as i64) == 0).then(|| p.div_euclid(s as i64))
}

/// RED's schedule: one `s x s` output tile per cycle in row-major tile
/// order (two cycles per tile when folded).
pub fn schedule_zero_skipping(spec: &DeconvLayerSpec, folded: bool) -> Result<CycleSchedule> {
    let modes = partition_modes(spec)?;
    let s = spec.stride;
    let (oh, ow) = (spec.output_h(), spec.output_w());
    let (ih, iw) = (spec.input_h as i64, spec.input_w as i64);
    let (pad_top, pad_left) = (spec.pad_top(), spec.pad_left());
    let tiles_h = oh.div_ceil(s);
    let tiles_w = ow.div_ceil(s);
    let phases = if folded { 2 } else { 1 };
    let mut cycles = Vec::with_capacity(tiles_h * tiles_w * phases);

    for ty in 0..tiles_h {
        for tx in 0..tiles_w {
            let base = cycles.len();
            let mut taps: Vec<(usize, InputDescriptor)> = Vec::new();
            let mut pixels: Vec<(usize, usize, Vec<usize>)> = Vec::new();
            for y in (ty * s..(ty + 1) * s).take_while(|&y| y < oh) {
                let ry = (pad_top as i64 - y as i64).rem_euclid(s as i64) as usize;
                for x in (tx * s..(tx + 1) * s).take_while(|&x| x < ow) {
                    let rx = (pad_left as i64 - x as i64).rem_euclid(s as i64) as usize;
                    let mut members = Vec::new();
                    for &(i, j) in &modes.mode(ry, rx).taps {
                        let a = aligned_input(y, i, pad_top, s).expect("mode taps are aligned");
                        let b = aligned_input(x, j, pad_left, s).expect("mode taps are aligned");
                        let n = i * spec.kw + j;
                        let input = if (0..ih).contains(&a) && (0..iw).contains(&b) {
                            InputDescriptor::Pixel {
                                a: a as usize,
                                b: b as usize,
                            }
                        } else {
                            InputDescriptor::Zero { a, b }
                        };
                        taps.push((n, input));
                        members.push(n);
                    }
                    pixels.push((y, x, members));
                }
            }
            taps.sort_by_key(|&(n, _)| n);

            if !folded {
                let assignments = taps
                    .into_iter()
                    .map(|(crossbar, input)| Assignment { crossbar, input })
                    .collect();
                let groups = pixels
                    .into_iter()
                    .map(|(y, x, members)| AccumulationGroup {
                        y,
                        x,
                        members: members
                            .into_iter()
                            .map(|crossbar| GroupMember {
                                cycle: base,
                                crossbar,
                            })
                            .collect(),
                    })
                    .collect();
                cycles.push(Cycle {
                    assignments,
                    groups,
                });
            } else {
                let mut phase = [Cycle::default(), Cycle::default()];
                for (n, input) in taps {
                    let input = match input {
                        InputDescriptor::Pixel { a, b } if n % 2 == 0 => {
                            InputDescriptor::Upper { a, b }
                        }
                        InputDescriptor::Pixel { a, b } => InputDescriptor::Lower { a, b },
                        zero => zero,
                    };
                    phase[n % 2].assignments.push(Assignment {
                        crossbar: n / 2,
                        input,
                    });
                }
                phase[1].groups = pixels
                    .into_iter()
                    .map(|(y, x, members)| AccumulationGroup {
                        y,
                        x,
                        members: members
                            .into_iter()
                            .map(|n| GroupMember {
                                cycle: base + n % 2,
                                crossbar: n / 2,
                            })
                            .collect(),
                    })
                    .collect();
                cycles.extend(phase);
            }
        }
    }

    let design = if folded {
        Design::RedFolded
    } else {
        Design::RedPixelWise
    };
    Ok(CycleSchedule {
        design,
        spec: *spec,
        crossbar_count: crossbar_count(design, spec),
        cycles,
        post_ops: None,
    })
}

pub fn build_schedule(design: Design, spec: &DeconvLayerSpec) -> Result<CycleSchedule> {
    match design {
        Design::ZeroPadding => schedule_zero_padding(spec),
        Design::PaddingFree => schedule_padding_free(spec),
        Design::RedPixelWise => schedule_zero_skipping(spec, false),
        Design::RedFolded => schedule_zero_skipping(spec, true),
    }
}

impl CycleSchedule {
    pub fn cycle_count(&self) -> u64 {
        self.cycles.len() as u64
    }

    /// Structural checks: one VMM per crossbar per cycle, group members
    /// refer to real assignments of the same or previous cycle and are each
    /// consumed once, and every output pixel is produced by exactly one group
    /// (or by the overlap-add pass).
    pub fn validate(&self) -> Result<()> {
        let spec = &self.spec;
        spec.check_geometry()?;
        let (oh, ow) = (spec.output_h(), spec.output_w());
        let bad = |msg: String| Err(Error::Schedule(msg));
        let mut used = vec![usize::MAX; self.crossbar_count];
        let mut consumed: Vec<Vec<bool>> = Vec::with_capacity(self.cycles.len());
        let mut produced = vec![false; oh * ow];

        for (t, cycle) in self.cycles.iter().enumerate() {
            for asg in &cycle.assignments {
                if asg.crossbar >= self.crossbar_count {
                    return bad(format!("cycle {t}: crossbar {} out of range", asg.crossbar));
                }
                if used[asg.crossbar] == t {
                    return bad(format!("cycle {t}: crossbar {} driven twice", asg.crossbar));
                }
                used[asg.crossbar] = t;
            }
            consumed.push(vec![false; cycle.assignments.len()]);
            for g in &cycle.groups {
                if g.y >= oh || g.x >= ow {
                    return bad(format!(
                        "cycle {t}: group output ({}, {}) outside output",
                        g.y, g.x
                    ));
                }
                if std::mem::replace(&mut produced[g.y * ow + g.x], true) {
                    return bad(format!("output ({}, {}) produced twice", g.y, g.x));
                }
                for m in &g.members {
                    if m.cycle > t || t - m.cycle > 1 {
                        return bad(format!("cycle {t}: member refers to cycle {}", m.cycle));
                    }
                    let Some(k) = self.cycles[m.cycle]
                        .assignments
                        .iter()
                        .position(|a| a.crossbar == m.crossbar)
                    else {
                        return bad(format!(
                            "cycle {t}: member crossbar {} idle in cycle {}",
                            m.crossbar, m.cycle
                        ));
                    };
                    if std::mem::replace(&mut consumed[m.cycle][k], true) {
                        return bad(format!(
                            "crossbar {} output of cycle {} summed twice",
                            m.crossbar, m.cycle
                        ));
                    }
                }
            }
        }
        match self.post_ops {
            Some(_) if self.cycles.iter().any(|c| !c.groups.is_empty()) => {
                bad("overlap-add schedule must not carry accumulation groups".into())
            }
            Some(_) => Ok(()),
            None if produced.iter().all(|&p| p) => Ok(()),
            None => bad("some output pixels are never produced".into()),
        }
    }

    /// Text dump, one line per assignment (`cycle,crossbar,kind,a,b`) followed
    /// by that cycle's groups (`cycle,g<k>,y,x,members...`). Cycles are
    /// numbered from 0. A member from an earlier cycle is written
    /// `crossbar@cycle`.
    ///
    /// For `window` assignments `a,b` is the output pixel the window serves;
    /// for `zero` it is the out-of-range input coordinate.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (t, cycle) in self.cycles.iter().enumerate() {
            for asg in &cycle.assignments {
                let (a, b) = asg.input.coords();
                writeln!(w, "{t},{},{},{a},{b}", asg.crossbar, asg.input.kind())?;
            }
            for (g, grp) in cycle.groups.iter().enumerate() {
                write!(w, "{t},g{g},{},{}", grp.y, grp.x)?;
                for m in &grp.members {
                    if m.cycle == t {
                        write!(w, ",{}", m.crossbar)?;
                    } else {
                        write!(w, ",{}@{}", m.crossbar, m.cycle)?;
                    }
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("dump is ASCII")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CrossbarActivity {
    pub activations: u64,
    /// Input vector lengths, summed over activations. A folded array drives
    /// only the selected half.
    pub driven_rows: u64,
    /// Wordlines carrying original input data, summed over activations.
    pub nonzero_rows: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PostOpCounts {
    /// Crossbar outputs scattered onto the canvas.
    pub overlap_add_values: u64,
    /// Canvas values discarded by cropping.
    pub crop_values: u64,
}

/// Activity counts of one run. Zero-vector assignments occupy their cycle
/// but count as no activation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub design: Design,
    pub cycle_count: u64,
    pub vmm_activations: u64,
    pub per_crossbar: Vec<CrossbarActivity>,
    /// Input vector lengths summed over activations (padded zeros included).
    pub wordlines_driven: u64,
    /// Wordlines carrying original (non-padded) input data.
    pub nonzero_wordlines: u64,
    pub output_values_read: u64,
    /// Shift-adder accumulations: group sums plus tile partial sums.
    pub adds_performed: u64,
    pub post_ops: PostOpCounts,
    cycle_bounds: Vec<usize>,
    active: Vec<u32>,
}

impl ExecutionTrace {
    /// Crossbars that performed a VMM in cycle `t`.
    pub fn active_in_cycle(&self, t: usize) -> &[u32] {
        &self.active[self.cycle_bounds[t]..self.cycle_bounds[t + 1]]
    }
}

struct Tally<'g> {
    geometry: &'g PlanGeometry,
    trace: ExecutionTrace,
}

impl<'g> Tally<'g> {
    fn new(geometry: &'g PlanGeometry, cycles: usize) -> Self {
        Self {
            geometry,
            trace: ExecutionTrace {
                design: geometry.design,
                cycle_count: 0,
                vmm_activations: 0,
                per_crossbar: vec![CrossbarActivity::default(); geometry.crossbars.len()],
                wordlines_driven: 0,
                nonzero_wordlines: 0,
                output_values_read: 0,
                adds_performed: 0,
                post_ops: PostOpCounts::default(),
                cycle_bounds: {
                    let mut v = Vec::with_capacity(cycles + 1);
                    v.push(0);
                    v
                },
                active: Vec::new(),
            },
        }
    }

    fn activation(&mut self, crossbar: usize, (driven, nonzero_rows): (usize, usize)) {
        let g = &self.geometry.crossbars[crossbar];
        let t = &mut self.trace;
        t.vmm_activations += 1;
        let act = &mut t.per_crossbar[crossbar];
        act.activations += 1;
        act.driven_rows += driven as u64;
        act.nonzero_rows += nonzero_rows as u64;
        t.wordlines_driven += driven as u64;
        t.nonzero_wordlines += nonzero_rows as u64;
        t.output_values_read += (g.cols * g.row_tiles.len()) as u64;
        t.adds_performed += g.partial_sum_adds();
        t.active.push(crossbar as u32);
    }

    fn group(&mut self, live_members: usize) {
        if live_members > 1 {
            self.trace.adds_performed += ((live_members - 1) * self.geometry.kernel.filters) as u64;
        }
    }

    fn end_cycle(&mut self) {
        self.trace.cycle_count += 1;
        self.trace.cycle_bounds.push(self.trace.active.len());
    }

    fn finish(mut self, schedule: &CycleSchedule) -> ExecutionTrace {
        if let Some(post) = schedule.post_ops {
            let spec = &schedule.spec;
            let m = spec.filters as u64;
            let t = &mut self.trace;
            t.post_ops.overlap_add_values = t.vmm_activations * (spec.kh * spec.kw) as u64 * m;
            t.post_ops.crop_values =
                ((post.canvas_h * post.canvas_w - spec.output_h() * spec.output_w()) as u64) * m;
        }
        self.trace
    }
}

/// Taps `(i, j)` of the padded window at output `(y, x)` that land on
/// original input pixels, with those pixels.
fn window_taps(
    spec: &DeconvLayerSpec,
    y: usize,
    x: usize,
) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
    let s = spec.stride;
    let rows = (0..spec.kh).filter_map(move |i| {
        aligned_input(y, i, spec.pad_top(), s)
            .filter(|a| (0..spec.input_h as i64).contains(a))
            .map(|a| (i, a as usize))
    });
    rows.flat_map(move |(i, a)| {
        (0..spec.kw).filter_map(move |j| {
            aligned_input(x, j, spec.pad_left(), s)
                .filter(|b| (0..spec.input_w as i64).contains(b))
                .map(|b| (i, j, a, b as usize))
        })
    })
}

/// `(driven, nonzero)` wordline counts of one assignment.
fn row_activity(spec: &DeconvLayerSpec, input: &InputDescriptor) -> (usize, usize) {
    match *input {
        InputDescriptor::Window { y, x } => (
            spec.kh * spec.kw * spec.channels,
            window_taps(spec, y, x).count() * spec.channels,
        ),
        InputDescriptor::Zero { .. } => (0, 0),
        _ => (spec.channels, spec.channels),
    }
}

fn check_pairing(geometry: &PlanGeometry, schedule: &CycleSchedule) -> Result<()> {
    if geometry.design != schedule.design {
        return Err(Error::DesignMismatch {
            plan: geometry.design,
            schedule: schedule.design,
        });
    }
    if geometry.kernel != schedule.spec.kernel_shape() {
        return Err(Error::Shape(format!(
            "plan kernel {:?} does not match layer kernel {:?}",
            geometry.kernel,
            schedule.spec.kernel_shape()
        )));
    }
    if geometry.crossbars.len() != schedule.crossbar_count {
        return Err(Error::Shape(format!(
            "plan has {} crossbars, schedule addresses {}",
            geometry.crossbars.len(),
            schedule.crossbar_count
        )));
    }
    Ok(())
}

/// Activity of a schedule on crossbars of the given dimensions, without
/// computing any values.
pub fn trace_activity(schedule: &CycleSchedule, geometry: &PlanGeometry) -> Result<ExecutionTrace> {
    check_pairing(geometry, schedule)?;
    let spec = &schedule.spec;
    let mut tally = Tally::new(geometry, schedule.cycles.len());
    for cycle in &schedule.cycles {
        for asg in cycle.assignments.iter().filter(|a| !a.input.is_zero()) {
            tally.activation(asg.crossbar, row_activity(spec, &asg.input));
        }
        for g in &cycle.groups {
            let live = g
                .members
                .iter()
                .filter(|m| {
                    schedule.cycles[m.cycle]
                        .assignments
                        .iter()
                        .any(|a| a.crossbar == m.crossbar && !a.input.is_zero())
                })
                .count();
            tally.group(live);
        }
        tally.end_cycle();
    }
    Ok(tally.finish(schedule))
}

/// Runs every cycle's VMMs on the plan's crossbars, sums accumulation
/// groups, applies overlap-add and cropping where scheduled, and returns the
/// output feature map with the activity trace.
pub fn execute<T: Element>(
    plan: &MappingPlan<T>,
    schedule: &CycleSchedule,
    input: &Tensor3<T>,
) -> Result<(Tensor3<T>, ExecutionTrace)> {
    let geometry = plan.geometry();
    check_pairing(&geometry, schedule)?;
    let spec = &schedule.spec;
    spec.check_geometry()?;
    let want = (spec.input_h, spec.input_w, spec.channels);
    if input.shape() != want {
        return Err(Error::Shape(format!(
            "input is {:?}, layer expects {want:?}",
            input.shape()
        )));
    }

    let (c_count, m_count) = (spec.channels, spec.filters);
    let xbars = plan.crossbars();
    let mut out = Tensor3::zeros(spec.output_h(), spec.output_w(), m_count);
    let mut canvas = schedule
        .post_ops
        .map(|p| Tensor3::<T>::zeros(p.canvas_h, p.canvas_w, m_count));
    let mut tally = Tally::new(&geometry, schedule.cycles.len());
    let mut prev: Vec<Option<Vec<T>>> = vec![None; xbars.len()];
    let mut cur: Vec<Option<Vec<T>>> = vec![None; xbars.len()];

    for (t, cycle) in schedule.cycles.iter().enumerate() {
        cur.iter_mut().for_each(|v| *v = None);
        for asg in &cycle.assignments {
            let xb = &xbars[asg.crossbar];
            let mut acc = vec![T::zero(); xb.cols()];
            let (pixel, row0) = match asg.input {
                InputDescriptor::Zero { .. } => continue,
                InputDescriptor::Pixel { a, b } | InputDescriptor::Upper { a, b } => {
                    (Some((a, b)), 0)
                }
                InputDescriptor::Lower { a, b } => (Some((a, b)), c_count),
                InputDescriptor::Window { y, x } => {
                    for (i, j, a, b) in window_taps(spec, y, x) {
                        let row0 = (i * spec.kw + j) * c_count;
                        for (c, &v) in input.pixel(a, b).iter().enumerate() {
                            if !v.is_zero() {
                                xb.accumulate_row(row0 + c, v, &mut acc);
                            }
                        }
                    }
                    (None, 0)
                }
            };
            if let Some((a, b)) = pixel {
                for (c, &v) in input.pixel(a, b).iter().enumerate() {
                    if !v.is_zero() {
                        xb.accumulate_row(row0 + c, v, &mut acc);
                    }
                }
            }
            tally.activation(asg.crossbar, row_activity(spec, &asg.input));

            if let (Some(canvas), InputDescriptor::Pixel { a, b }) = (canvas.as_mut(), asg.input) {
                let s = spec.stride;
                for i in 0..spec.kh {
                    for j in 0..spec.kw {
                        let tap = (i * spec.kw + j) * m_count;
                        let dst = canvas.pixel_mut(s * a + i, s * b + j);
                        for (d, &v) in dst.iter_mut().zip(&acc[tap..tap + m_count]) {
                            *d += v;
                        }
                    }
                }
            }
            cur[asg.crossbar] = Some(acc);
        }

        for g in &cycle.groups {
            let mut sum = vec![T::zero(); m_count];
            let mut live = 0;
            for m in &g.members {
                let slot = if m.cycle == t {
                    &cur[m.crossbar]
                } else if m.cycle + 1 == t {
                    &prev[m.crossbar]
                } else {
                    return Err(Error::Schedule(format!(
                        "cycle {t}: member refers to cycle {}",
                        m.cycle
                    )));
                };
                if let Some(v) = slot {
                    live += 1;
                    for (s, &x) in sum.iter_mut().zip(v) {
                        *s += x;
                    }
                }
            }
            tally.group(live);
            out.pixel_mut(g.y, g.x).copy_from_slice(&sum);
        }
        tally.end_cycle();
        std::mem::swap(&mut prev, &mut cur);
    }

    if let Some(canvas) = canvas {
        out = Tensor3::from_fn(spec.output_h(), spec.output_w(), m_count, |y, x, m| {
            canvas.get(y + spec.crop_top, x + spec.crop_left, m)
        });
    }
    Ok((out, tally.finish(schedule)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::build_plan;
    use crate::rng::Lcg;
    use crate::tensor::{deconv_oracle_zero_padding, KernelShape};

    /// `K = 3, s = 2` with the top/left border cropped away so the first
    /// tile is an interior tile.
    fn toy() -> DeconvLayerSpec {
        DeconvLayerSpec::symmetric((4, 4, 2), (3, 3, 2), 2, 0).with_crops(2, 0, 2, 0)
    }

    #[test]
    fn mode_sizes_k3_s2() {
        let spec = DeconvLayerSpec::symmetric((4, 4, 1), (3, 3, 1), 2, 0);
        let p = partition_modes(&spec).unwrap();
        let sizes: Vec<usize> = p.modes.iter().map(Mode::size).collect();
        assert_eq!(sizes, vec![4, 2, 2, 1]);
        // Weights numbered 1..9 row-major: mode (0,0) holds 1, 3, 7, 9.
        let numbers: Vec<usize> = p
            .mode(0, 0)
            .taps
            .iter()
            .map(|&(i, j)| i * 3 + j + 1)
            .collect();
        assert_eq!(numbers, vec![1, 3, 7, 9]);
    }

    #[test]
    fn mode_sizes_follow_ceil_formula() {
        for (k, s) in [(16, 8), (5, 2), (4, 4), (7, 3), (3, 1)] {
            let spec = DeconvLayerSpec::symmetric((3, 3, 1), (k, k, 1), s, 0);
            let p = partition_modes(&spec).unwrap();
            assert_eq!(p.modes.len(), s * s);
            for m in &p.modes {
                let (ry, rx) = m.residue;
                assert_eq!(m.size(), (k - ry).div_ceil(s) * (k - rx).div_ceil(s));
            }
        }
        let spec = DeconvLayerSpec::symmetric((3, 3, 1), (16, 16, 1), 8, 0);
        let p = partition_modes(&spec).unwrap();
        assert!(p.modes.iter().all(|m| m.size() == 4));
    }

    #[test]
    fn first_cycle_input_sharing() {
        let sched = schedule_zero_skipping(&toy(), false).unwrap();
        let first = &sched.cycles[0];
        assert_eq!(first.assignments.len(), 9);
        let pixel_of = |n: usize| {
            first
                .assignments
                .iter()
                .find(|a| a.crossbar == n)
                .unwrap()
                .input
        };
        use InputDescriptor::Pixel;
        assert_eq!(pixel_of(0), Pixel { a: 0, b: 0 });
        assert_eq!(pixel_of(1), Pixel { a: 0, b: 1 });
        assert_eq!(pixel_of(2), Pixel { a: 0, b: 1 });
        assert_eq!(pixel_of(3), Pixel { a: 1, b: 0 });
        assert_eq!(pixel_of(6), Pixel { a: 1, b: 0 });
        for n in [4, 5, 7, 8] {
            assert_eq!(pixel_of(n), Pixel { a: 1, b: 1 });
        }
    }

    #[test]
    fn schedules_validate_and_match_closed_forms() {
        let specs = [
            toy(),
            DeconvLayerSpec::symmetric((8, 8, 2), (5, 5, 2), 2, 0).with_crops(1, 2, 1, 2),
            DeconvLayerSpec::symmetric((3, 5, 1), (4, 3, 2), 3, 0),
            DeconvLayerSpec::symmetric((2, 3, 1), (2, 2, 1), 4, 0),
        ];
        for spec in specs {
            for d in Design::ALL {
                let sched = build_schedule(d, &spec).unwrap();
                sched
                    .validate()
                    .unwrap_or_else(|e| panic!("{d} {spec:?}: {e}"));
                assert_eq!(sched.cycle_count(), expected_cycles(d, &spec), "{d}");
            }
        }
    }

    #[test]
    fn validate_rejects_double_drive() {
        let mut sched = schedule_zero_skipping(&toy(), false).unwrap();
        let dup = sched.cycles[0].assignments[0];
        sched.cycles[0].assignments.push(dup);
        assert!(matches!(sched.validate(), Err(Error::Schedule(_))));
    }

    #[test]
    fn execute_matches_oracle_all_designs() {
        let spec = DeconvLayerSpec::symmetric((5, 4, 3), (5, 5, 2), 2, 0).with_crops(1, 2, 1, 2);
        let mut rng = Lcg::new(3);
        let input = rng.tensor::<i64>(5, 4, 3);
        let kernel = rng.kernel(spec.kernel_shape());
        let want = deconv_oracle_zero_padding(&input, &kernel, &spec).unwrap();
        for d in Design::ALL {
            let plan = build_plan(d, &kernel);
            let sched = build_schedule(d, &spec).unwrap();
            let (got, trace) = execute(&plan, &sched, &input).unwrap();
            assert_eq!(got, want, "{d}");
            assert_eq!(
                trace,
                trace_activity(&sched, &plan.geometry()).unwrap(),
                "{d}"
            );
            assert_eq!(trace.cycle_count, sched.cycle_count());
        }
    }

    #[test]
    fn execute_rejects_mismatched_pairs() {
        let spec = toy();
        let kernel: crate::tensor::Kernel4<i64> = Lcg::new(1).kernel(spec.kernel_shape());
        let plan = build_plan(Design::ZeroPadding, &kernel);
        let sched = build_schedule(Design::RedPixelWise, &spec).unwrap();
        let input = Lcg::new(2).tensor::<i64>(4, 4, 2);
        assert!(matches!(
            execute(&plan, &sched, &input),
            Err(Error::DesignMismatch { .. })
        ));
        let other: crate::tensor::Kernel4<i64> = Lcg::new(1).kernel(KernelShape {
            kh: 3,
            kw: 3,
            channels: 2,
            filters: 3,
        });
        let plan = build_plan(Design::RedPixelWise, &other);
        assert!(matches!(
            execute(&plan, &sched, &input),
            Err(Error::Shape(_))
        ));
        let plan = build_plan(Design::RedPixelWise, &kernel);
        let bad_input = Lcg::new(2).tensor::<i64>(3, 4, 2);
        assert!(matches!(
            execute(&plan, &sched, &bad_input),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn edge_taps_are_skipped() {
        // No crop: border tiles reach outside the image.
        let spec = DeconvLayerSpec::symmetric((3, 3, 2), (3, 3, 2), 2, 0);
        let sched = schedule_zero_skipping(&spec, false).unwrap();
        let zeros = sched.cycles[0]
            .assignments
            .iter()
            .filter(|a| a.input.is_zero())
            .count();
        assert!(zeros > 0);
        let geom = PlanGeometry::new(Design::RedPixelWise, spec.kernel_shape(), None);
        let trace = trace_activity(&sched, &geom).unwrap();
        assert!(trace.vmm_activations < 9 * trace.cycle_count);
        // Each activation is one (output pixel, tap) pair that hits an
        // original input pixel.
        let count = crate::tensor::zero_redundancy(&spec).unwrap();
        assert_eq!(trace.vmm_activations as u128, count.total - count.zero);
    }

    #[test]
    fn dump_lines() {
        let sched = schedule_zero_skipping(&toy(), false).unwrap();
        let dump = sched.dump_string();
        let first: Vec<&str> = dump.lines().take(9).collect();
        assert_eq!(first[0], "0,0,pixel,0,0");
        assert_eq!(first[8], "0,8,pixel,1,1");
        assert!(dump.lines().any(|l| l == "0,g0,0,0,0,2,6,8"));

        let folded = schedule_zero_skipping(&toy(), true).unwrap();
        let dump = folded.dump_string();
        assert!(dump.lines().next().unwrap().starts_with("0,0,upper,"));
        assert!(dump
            .lines()
            .any(|l| l.starts_with("1,g0,0,0,") && l.contains("@0")));
    }
}
