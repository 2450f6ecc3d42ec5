//! Parametric construction of the printed inverted-F antenna as a thin-wire
//! segment mesh.
//!
//! The antenna lives in the y = 0 plane above a ground plane at z = 0: a
//! vertical shorting pin at x = 0, a vertical feed pin at
//! `short_pin_offset`, and a horizontal radiating arm at
//! `footprint_height`.  The low-band extension folds back under the arm so
//! the whole conductor stays inside the footprint.  Two trap placements are
//! supported:
//!
//! * layout A (`ExtensionAtEnd`): the trap interrupts the arm near its tip
//!   and the extension hangs beyond the arm end;
//! * layout B (`ExtensionInset`): the trap and extension form a branch that
//!   leaves the arm at an interior point while the arm itself continues to
//!   the tip.
//!
//! Printed strips are replaced by equivalent-radius wires (radius =
//! strip width / 4).  The FR4 environment is collapsed into a single
//! length/frequency scale carried on the mesh; the solver stretches the
//! free-space wavelength by it.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::circuit::{ComponentValue, TrapSpec};
use crate::error::{Error, Result};
use crate::C0;

/// Fraction of the footprint height by which the folded extension drops
/// below the arm before running back toward the feed.
const FOLD_DROP_FRACTION: f64 = 0.62;

/// Lateral clearance the folded extension must keep from the feed pin.
const FOLD_CLEARANCE_FRACTION: f64 = 1.5;

/// Distance below which two endpoints are considered the same node (m).
const NODE_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

/// Substrate description.  The dielectric is not modeled volumetrically;
/// it enters through [`effective_permittivity_scale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstrateSpec {
    pub eps_r: f64,
    pub loss_tan: f64,
    /// Width of the antenna strip area, m.
    pub strip_width: f64,
    pub board_thickness: f64,
}

impl SubstrateSpec {
    pub fn new(eps_r: f64, loss_tan: f64, strip_width: f64, board_thickness: f64) -> Result<Self> {
        if eps_r < 1.0 {
            return Err(Error::domain("relative permittivity must be >= 1"));
        }
        if loss_tan < 0.0 {
            return Err(Error::domain("loss tangent must be non-negative"));
        }
        if strip_width <= 0.0 || board_thickness <= 0.0 {
            return Err(Error::domain("substrate dimensions must be positive"));
        }
        Ok(Self {
            eps_r,
            loss_tan,
            strip_width,
            board_thickness,
        })
    }
}

impl Default for SubstrateSpec {
    /// FR4: εr 4.3, tan δ 0.025, 13.5 mm strip on 1.6 mm board.
    fn default() -> Self {
        Self {
            eps_r: 4.3,
            loss_tan: 0.025,
            strip_width: 13.5e-3,
            board_thickness: 1.6e-3,
        }
    }
}

/// How the ground plane is modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundModel {
    /// Infinite perfect-conductor plane via image theory.
    InfiniteImage,
    /// Finite plane approximated by a wire grid (frame + mesh).
    WireGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundSpec {
    pub size_x: f64,
    pub size_y: f64,
    pub thickness: f64,
    pub model: GroundModel,
}

impl GroundSpec {
    pub fn new(size_x: f64, size_y: f64, thickness: f64, model: GroundModel) -> Result<Self> {
        if size_x <= 0.0 || size_y <= 0.0 || thickness <= 0.0 {
            return Err(Error::domain("ground dimensions must be positive"));
        }
        Ok(Self {
            size_x,
            size_y,
            thickness,
            model,
        })
    }
}

impl Default for GroundSpec {
    /// 100 × 100 mm, 1.6 mm thick, image model.
    fn default() -> Self {
        Self {
            size_x: 0.1,
            size_y: 0.1,
            thickness: 1.6e-3,
            model: GroundModel::InfiniteImage,
        }
    }
}

/// The two supported trap placements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AntennaConfig {
    /// Layout A: trap near the arm end, extension beyond it.
    ExtensionAtEnd,
    /// Layout B: trap + extension branch off an interior arm point; the arm
    /// continues to the tip.
    ExtensionInset,
}

impl fmt::Display for AntennaConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AntennaConfig::ExtensionAtEnd => write!(f, "A"),
            AntennaConfig::ExtensionInset => write!(f, "B"),
        }
    }
}

/// Geometric parameters of the antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntennaParams {
    /// Arm length along x, m.
    pub footprint_length: f64,
    /// Arm height above the ground plane, m.
    pub footprint_height: f64,
    /// Printed trace width (arm, pins, extension), m.
    pub trace_width: f64,
    /// Feed trace width, m.
    pub feed_width: f64,
    /// Conductor thickness, m.  Recorded only; the thin-strip model does not
    /// resolve it.
    pub conductor_thickness: f64,
    /// Feed pin offset from the shorting pin, m.
    pub short_pin_offset: f64,
    /// Trap attachment point as a fraction of the arm, strictly in (0, 1).
    pub trap_position_fraction: f64,
    /// Total conductor length of the low-band extension (fold drop
    /// included), m.
    pub extension_length: f64,
    pub config: AntennaConfig,
}

impl AntennaParams {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [
            self.footprint_length,
            self.footprint_height,
            self.trace_width,
            self.feed_width,
            self.conductor_thickness,
            self.short_pin_offset,
            self.extension_length,
        ];
        if all_positive.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::domain("all antenna lengths must be positive"));
        }
        let s = self.trap_position_fraction;
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::domain(format!(
                "trap_position_fraction must lie strictly inside (0, 1), got {s}"
            )));
        }
        if self.short_pin_offset >= self.footprint_length {
            return Err(Error::domain(
                "feed pin offset must be smaller than the arm length",
            ));
        }
        Ok(())
    }

    fn fold_drop(&self) -> f64 {
        FOLD_DROP_FRACTION * self.footprint_height
    }
}

// ---------------------------------------------------------------------------
// Mesh
// ---------------------------------------------------------------------------

/// Straight wire piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub radius: f64,
}

impl Segment {
    pub fn length(&self) -> f64 {
        dist(self.start, self.end)
    }

    pub fn midpoint(&self) -> [f64; 3] {
        [
            0.5 * (self.start[0] + self.end[0]),
            0.5 * (self.start[1] + self.end[1]),
            0.5 * (self.start[2] + self.end[2]),
        ]
    }

    pub fn direction(&self) -> [f64; 3] {
        let len = self.length();
        [
            (self.end[0] - self.start[0]) / len,
            (self.end[1] - self.start[1]) / len,
            (self.end[2] - self.start[2]) / len,
        ]
    }
}

pub fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Lumped element attached at the end node of a segment.
#[derive(Debug, Clone, PartialEq)]
pub enum Load {
    Trap(TrapSpec),
    Fixed(Complex64),
}

/// How the solver treats the space below z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundMode {
    /// No ground plane; the mesh is complete as given.
    FreeSpace,
    /// Infinite PEC plane at z = 0 handled by image theory.
    Image,
}

impl fmt::Display for GroundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroundMode::FreeSpace => write!(f, "free-space"),
            GroundMode::Image => write!(f, "infinite-image"),
        }
    }
}

/// Thin-wire segment model of the antenna.
///
/// Loads and the feed are referenced by segment index and attach at the
/// *end* node of that segment.  `length_scale` is the single calibration
/// scalar standing in for the dielectric environment: the solver uses the
/// in-medium wavelength `λ0 · length_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMesh {
    pub segments: Vec<Segment>,
    pub feed_segment: usize,
    pub loads: BTreeMap<usize, Load>,
    pub ground: GroundMode,
    pub length_scale: f64,
}

impl SegmentMesh {
    /// Node the delta-gap excitation is applied at.
    pub fn feed_node(&self) -> [f64; 3] {
        self.segments[self.feed_segment].end
    }

    pub fn total_conductor_length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    /// Wavelength in the effective medium at `f_hz`.
    pub fn medium_wavelength(&self, f_hz: f64) -> f64 {
        C0 * self.length_scale / f_hz
    }

    /// Serialize to the versioned plain-text mesh format.  Floats use the
    /// shortest representation that round-trips exactly.
    pub fn export(&self) -> String {
        let mut out = String::new();
        out.push_str("trapant-mesh v1\n");
        out.push_str(&format!("length_scale {}\n", self.length_scale));
        out.push_str(&format!("ground {}\n", self.ground));
        out.push_str(&format!("feed {}\n", self.feed_segment));
        out.push_str(&format!("segments {}\n", self.segments.len()));
        for s in &self.segments {
            out.push_str(&format!(
                "{} {} {} {} {} {} {}\n",
                s.start[0], s.start[1], s.start[2], s.end[0], s.end[1], s.end[2], s.radius
            ));
        }
        out.push_str(&format!("loads {}\n", self.loads.len()));
        for (idx, load) in &self.loads {
            match load {
                Load::Trap(t) => out.push_str(&format!(
                    "{} trap {} {} {} {} {} {} {} {} {} {} {}\n",
                    idx,
                    t.cap.nominal,
                    t.cap.tol_abs,
                    t.cap.tol_rel,
                    t.ind1.nominal,
                    t.ind1.tol_abs,
                    t.ind1.tol_rel,
                    t.ind2.nominal,
                    t.ind2.tol_abs,
                    t.ind2.tol_rel,
                    t.r_series_ind,
                    t.r_series_cap
                )),
                Load::Fixed(z) => out.push_str(&format!("{} fixed {} {}\n", idx, z.re, z.im)),
            }
        }
        out.push_str("end\n");
        out
    }

    /// Parse the text format produced by [`SegmentMesh::export`].
    pub fn import(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |expect: &str| -> Result<(usize, String)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.to_owned()))
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("unexpected end of file, expected {expect}"),
                })
        };
        let perr = |line: usize, message: String| Error::Parse { line, message };

        let (ln, header) = next("header")?;
        if header.trim() != "trapant-mesh v1" {
            return Err(perr(ln, format!("unsupported mesh header `{header}`")));
        }
        let parse_kv = |line: usize, text: &str, key: &str| -> Result<String> {
            let mut it = text.split_whitespace();
            match (it.next(), it.next()) {
                (Some(k), Some(v)) if k == key => Ok(v.to_owned()),
                _ => Err(perr(line, format!("expected `{key} <value>`, got `{text}`"))),
            }
        };

        let (ln, l) = next("length_scale")?;
        let length_scale: f64 = parse_kv(ln, &l, "length_scale")?
            .parse()
            .map_err(|_| perr(ln, "bad length_scale".into()))?;
        let (ln, l) = next("ground")?;
        let ground = match parse_kv(ln, &l, "ground")?.as_str() {
            "free-space" => GroundMode::FreeSpace,
            "infinite-image" => GroundMode::Image,
            other => return Err(perr(ln, format!("unknown ground mode `{other}`"))),
        };
        let (ln, l) = next("feed")?;
        let feed_segment: usize = parse_kv(ln, &l, "feed")?
            .parse()
            .map_err(|_| perr(ln, "bad feed index".into()))?;
        let (ln, l) = next("segments")?;
        let n_seg: usize = parse_kv(ln, &l, "segments")?
            .parse()
            .map_err(|_| perr(ln, "bad segment count".into()))?;

        let mut segments = Vec::with_capacity(n_seg);
        for _ in 0..n_seg {
            let (ln, l) = next("segment line")?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| perr(ln, format!("bad segment line `{l}`")))?;
            if v.len() != 7 {
                return Err(perr(ln, "segment line needs 7 numbers".into()));
            }
            segments.push(Segment {
                start: [v[0], v[1], v[2]],
                end: [v[3], v[4], v[5]],
                radius: v[6],
            });
        }

        let (ln, l) = next("loads")?;
        let n_loads: usize = parse_kv(ln, &l, "loads")?
            .parse()
            .map_err(|_| perr(ln, "bad load count".into()))?;
        let mut loads = BTreeMap::new();
        for _ in 0..n_loads {
            let (ln, l) = next("load line")?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() < 2 {
                return Err(perr(ln, format!("bad load line `{l}`")));
            }
            let idx: usize = toks[0]
                .parse()
                .map_err(|_| perr(ln, "bad load index".into()))?;
            let load = match toks[1] {
                "trap" => {
                    if toks.len() != 13 {
                        return Err(perr(ln, "trap load needs 11 numbers".into()));
                    }
                    let f: Vec<f64> = toks[2..]
                        .iter()
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| perr(ln, format!("bad trap load line `{l}`")))?;
                    let spec = TrapSpec::with_losses(
                        ComponentValue::new(f[0], f[1], f[2])
                            .map_err(|e| perr(ln, e.to_string()))?,
                        ComponentValue::new(f[3], f[4], f[5])
                            .map_err(|e| perr(ln, e.to_string()))?,
                        ComponentValue::new(f[6], f[7], f[8])
                            .map_err(|e| perr(ln, e.to_string()))?,
                        f[9],
                        f[10],
                    )
                    .map_err(|e| perr(ln, e.to_string()))?;
                    Load::Trap(spec)
                }
                "fixed" => {
                    if toks.len() != 4 {
                        return Err(perr(ln, "fixed load needs 2 numbers".into()));
                    }
                    let re: f64 = toks[2]
                        .parse()
                        .map_err(|_| perr(ln, "bad fixed load".into()))?;
                    let im: f64 = toks[3]
                        .parse()
                        .map_err(|_| perr(ln, "bad fixed load".into()))?;
                    Load::Fixed(Complex64::new(re, im))
                }
                other => return Err(perr(ln, format!("unknown load kind `{other}`"))),
            };
            loads.insert(idx, load);
        }
        let (ln, l) = next("end")?;
        if l.trim() != "end" {
            return Err(perr(ln, "missing `end` marker".into()));
        }
        if feed_segment >= segments.len() {
            return Err(perr(ln, "feed index out of range".into()));
        }
        Ok(Self {
            segments,
            feed_segment,
            loads,
            ground,
            length_scale,
        })
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// Quasi-static length/frequency scale standing in for the dielectric:
/// `1/√((εr + 1)/2)`.
pub fn effective_permittivity_scale(substrate: &SubstrateSpec) -> f64 {
    1.0 / ((substrate.eps_r + 1.0) / 2.0).sqrt()
}

/// Splits a straight run into segments no longer than `maxlen`.
///
/// The count is rounded up to a power of two so that halving the segment
/// budget always at least doubles the resolution of every run.
fn split_count(len: f64, maxlen: f64) -> usize {
    let needed = len / maxlen;
    if needed <= 1.0 {
        return 1;
    }
    let mut n = 1usize;
    while (n as f64) < needed {
        n *= 2;
    }
    n
}

struct MeshBuilder {
    segments: Vec<Segment>,
    maxlen: f64,
}

impl MeshBuilder {
    /// Append a straight run from `a` to `b`; returns the index of the last
    /// segment added.
    fn run(&mut self, a: [f64; 3], b: [f64; 3], radius: f64) -> usize {
        let n = split_count(dist(a, b), self.maxlen);
        for i in 0..n {
            let t0 = i as f64 / n as f64;
            let t1 = (i + 1) as f64 / n as f64;
            self.segments.push(Segment {
                start: lerp(a, b, t0),
                end: lerp(a, b, t1),
                radius,
            });
        }
        self.segments.len() - 1
    }
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    // Exact endpoints so shared nodes compare equal bit-for-bit.
    if t == 0.0 {
        return a;
    }
    if t == 1.0 {
        return b;
    }
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Build the antenna mesh.
///
/// `max_seg_fraction` bounds segment lengths to that fraction of the
/// in-medium wavelength at `f_max` (at most 1/10).  `length_scale`
/// overrides the substrate-derived default when given; the calibrated
/// presets use this.
pub fn build_ifa_mesh(
    params: &AntennaParams,
    substrate: &SubstrateSpec,
    ground: &GroundSpec,
    trap: &TrapSpec,
    max_seg_fraction: f64,
    f_max: f64,
    length_scale: Option<f64>,
) -> Result<SegmentMesh> {
    params.validate()?;
    if !(f_max > 0.0) {
        return Err(Error::domain("f_max must be positive"));
    }
    if !(max_seg_fraction > 0.0 && max_seg_fraction <= 0.1) {
        return Err(Error::domain(
            "max_seg_fraction must be in (0, 1/10]; segments may not exceed λ/10",
        ));
    }
    let scale = match length_scale {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::domain(format!("bad length scale {s}"))),
        None => effective_permittivity_scale(substrate),
    };
    let lambda_min = C0 * scale / f_max;
    let maxlen = max_seg_fraction * lambda_min;

    let h = params.footprint_height;
    let arm_len = params.footprint_length;
    let xf = params.short_pin_offset;
    let x_trap = params.trap_position_fraction * arm_len;
    let r_trace = params.trace_width / 4.0;
    let r_feed = params.feed_width / 4.0;
    let drop = params.fold_drop();
    let clearance = FOLD_CLEARANCE_FRACTION * params.trace_width;

    let mut b = MeshBuilder {
        segments: Vec::new(),
        maxlen,
    };

    let image_mode = ground.model == GroundModel::InfiniteImage;
    let pin_bottom_z = 0.0;

    // Wire-grid ground first, where requested, so pin bases land on its
    // crossings.
    if !image_mode {
        build_wire_grid(&mut b, ground, params, lambda_min)?;
    }

    // Shorting pin, bottom to top.
    b.run([0.0, 0.0, pin_bottom_z], [0.0, 0.0, h], r_trace);

    // Feed pin, top to bottom, so the final segment's end node is the
    // lowest pin node.
    let feed_segment = if image_mode {
        b.run([xf, 0.0, h], [xf, 0.0, pin_bottom_z], r_feed)
    } else {
        // With a wire-grid ground the lowest node is a grid junction; the
        // delta gap moves one node up, to the last simple node of the pin.
        let n = split_count(h, b.maxlen).max(2);
        let zs: Vec<f64> = (0..=n)
            .map(|i| h - h * (i as f64 / n as f64))
            .collect();
        let mut last_simple = 0;
        for i in 0..n {
            b.segments.push(Segment {
                start: [xf, 0.0, zs[i]],
                end: [xf, 0.0, zs[i + 1]],
                radius: r_feed,
            });
            if i == n - 2 {
                last_simple = b.segments.len() - 1;
            }
        }
        last_simple
    };

    // Arm, anchored at the pin tops and the trap/junction abscissa.
    let arm_a = [0.0, 0.0, h];
    let arm_f = [xf, 0.0, h];
    let arm_t = [x_trap, 0.0, h];
    let arm_tip = [arm_len, 0.0, h];
    if !(x_trap > xf) {
        return Err(Error::domain(
            "trap position must lie beyond the feed pin on the arm",
        ));
    }
    b.run(arm_a, arm_f, r_trace);
    b.run(arm_f, arm_t, r_trace);
    let arm_seg_to_trap = b.segments.len() - 1;
    b.run(arm_t, arm_tip, r_trace);

    let mut loads = BTreeMap::new();
    let ext = params.extension_length;
    match params.config {
        AntennaConfig::ExtensionAtEnd => {
            // Trap interrupts the arm at x_trap; extension beyond the tip,
            // folded down and back toward the feed.
            loads.insert(arm_seg_to_trap, Load::Trap(*trap));
            if ext <= drop {
                b.run(arm_tip, [arm_len, 0.0, h - ext], r_trace);
            } else {
                let elbow = [arm_len, 0.0, h - drop];
                let run = ext - drop;
                let x_end = arm_len - run;
                if x_end < xf + clearance {
                    return Err(Error::domain(format!(
                        "extension run reaches the feed region: ends at x = {:.4} mm",
                        x_end * 1e3
                    )));
                }
                b.run(arm_tip, elbow, r_trace);
                b.run(elbow, [x_end, 0.0, h - drop], r_trace);
            }
        }
        AntennaConfig::ExtensionInset => {
            // Branch at x_trap: connector stub down, trap at its lower end,
            // then the extension runs back toward the feed.
            if ext <= drop {
                return Err(Error::domain(format!(
                    "inset extension must be longer than the fold drop ({:.4} mm)",
                    drop * 1e3
                )));
            }
            let stub_end = [x_trap, 0.0, h - drop];
            let stub_last = b.run(arm_t, stub_end, r_trace);
            loads.insert(stub_last, Load::Trap(*trap));
            let run = ext - drop;
            let x_end = x_trap - run;
            if x_end < xf + clearance {
                return Err(Error::domain(format!(
                    "extension run reaches the feed region: ends at x = {:.4} mm",
                    x_end * 1e3
                )));
            }
            b.run(stub_end, [x_end, 0.0, h - drop], r_trace);
        }
    }

    let mesh = SegmentMesh {
        segments: b.segments,
        feed_segment,
        loads,
        ground: if image_mode {
            GroundMode::Image
        } else {
            GroundMode::FreeSpace
        },
        length_scale: scale,
    };

    let diag = validate_mesh(&mesh, f_max);
    if !diag.all_passed() {
        return Err(Error::MeshInvalid(diag.summary()));
    }
    Ok(mesh)
}

/// Wire-grid ground plane: frame plus grid with pitch at most λ/10,
/// with grid lines forced through both pin bases.
fn build_wire_grid(
    b: &mut MeshBuilder,
    ground: &GroundSpec,
    params: &AntennaParams,
    lambda_min: f64,
) -> Result<()> {
    let gx = ground.size_x;
    let gy = ground.size_y;
    let cx = params.footprint_length / 2.0;
    let x_lo = cx - gx / 2.0;
    let x_hi = cx + gx / 2.0;
    let y_lo = -gy / 2.0;
    let y_hi = gy / 2.0;
    let pitch_max = lambda_min / 10.0;

    let mut xs = uniform_lines(x_lo, x_hi, pitch_max);
    for anchor in [0.0, params.short_pin_offset] {
        if anchor > x_lo && anchor < x_hi {
            xs.push(anchor);
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < NODE_TOL);
    let mut ys = uniform_lines(y_lo, y_hi, pitch_max);
    if 0.0 > y_lo && 0.0 < y_hi {
        ys.push(0.0);
    }
    ys.sort_by(f64::total_cmp);
    ys.dedup_by(|a, b| (*a - *b).abs() < NODE_TOL);

    let min_gap = xs
        .windows(2)
        .chain(ys.windows(2))
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let radius = min_gap / (2.0 * std::f64::consts::PI);

    for &x in &xs {
        for w in ys.windows(2) {
            b.run([x, w[0], 0.0], [x, w[1], 0.0], radius);
        }
    }
    for &y in &ys {
        for w in xs.windows(2) {
            b.run([w[0], y, 0.0], [x_hi.min(w[1]), y, 0.0], radius);
        }
    }
    Ok(())
}

fn uniform_lines(lo: f64, hi: f64, pitch_max: f64) -> Vec<f64> {
    let n = ((hi - lo) / pitch_max).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| lo + (hi - lo) * (i as f64 / n as f64))
        .collect()
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: Vec<String>,
}

/// Per-check pass/fail report from [`validate_mesh`].
#[derive(Debug, Clone)]
pub struct MeshDiagnostics {
    pub checks: Vec<CheckResult>,
}

impl MeshDiagnostics {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{:<20} {}\n",
                c.name,
                if c.passed { "pass" } else { "FAIL" }
            ));
            for d in &c.details {
                out.push_str(&format!("    {d}\n"));
            }
        }
        out
    }
}

/// Check a mesh against the solver's requirements.  Returns diagnostics
/// rather than failing; a mesh passing all checks is accepted by the solver.
pub fn validate_mesh(mesh: &SegmentMesh, f_max: f64) -> MeshDiagnostics {
    let mut checks = Vec::new();
    let lambda = mesh.medium_wavelength(f_max);

    // Electrical length: no segment longer than λ/10 in the medium.
    {
        let mut details = Vec::new();
        for (i, s) in mesh.segments.iter().enumerate() {
            let len = s.length();
            if len > lambda / 10.0 {
                details.push(format!(
                    "segment {i}: length {:.3} mm exceeds λ/10 = {:.3} mm",
                    len * 1e3,
                    lambda / 10.0 * 1e3
                ));
            }
        }
        checks.push(CheckResult {
            name: "electrical-length",
            passed: details.is_empty(),
            details,
        });
    }

    // Radius ratio: thin-wire kernel needs length > 2.5 × radius.
    {
        let mut details = Vec::new();
        for (i, s) in mesh.segments.iter().enumerate() {
            let len = s.length();
            if !(s.radius > 0.0) {
                details.push(format!("segment {i}: non-positive radius"));
            } else if len <= 2.5 * s.radius {
                details.push(format!(
                    "segment {i}: length {:.3} mm not above 2.5 × radius {:.3} mm",
                    len * 1e3,
                    s.radius * 1e3
                ));
            }
        }
        checks.push(CheckResult {
            name: "radius-ratio",
            passed: details.is_empty(),
            details,
        });
    }

    let nodes = NodeIndex::build(mesh);

    // Connectivity: every segment reachable from the feed through shared
    // endpoints.
    {
        let mut details = Vec::new();
        if mesh.feed_segment >= mesh.segments.len() {
            details.push("feed segment index out of range".into());
        } else {
            let mut seen = vec![false; mesh.segments.len()];
            let mut stack = vec![mesh.feed_segment];
            seen[mesh.feed_segment] = true;
            while let Some(s) = stack.pop() {
                for &node in &nodes.of_segment[s] {
                    for &t in &nodes.segments_at[node] {
                        if !seen[t] {
                            seen[t] = true;
                            stack.push(t);
                        }
                    }
                }
            }
            for (i, ok) in seen.iter().enumerate() {
                if !ok {
                    details.push(format!("segment {i} not connected to the feed"));
                }
            }
        }
        checks.push(CheckResult {
            name: "connectivity",
            passed: details.is_empty(),
            details,
        });
    }

    // Overlap: duplicated segments, collinear continuation through a shared
    // node, or distinct segments closer than the sum of their radii.
    {
        let mut details = Vec::new();
        for i in 0..mesh.segments.len() {
            for j in (i + 1)..mesh.segments.len() {
                let a = &mesh.segments[i];
                let b = &mesh.segments[j];
                let shared = nodes.shared_nodes(i, j);
                match shared.len() {
                    2.. => details.push(format!("segments {i} and {j} are coincident")),
                    1 => {
                        let p = nodes.coords[shared[0]];
                        let da = away_direction(a, p);
                        let db = away_direction(b, p);
                        let dot = da[0] * db[0] + da[1] * db[1] + da[2] * db[2];
                        if dot > 1.0 - 1e-9 {
                            details.push(format!(
                                "segments {i} and {j} overlap beyond their shared node"
                            ));
                        }
                    }
                    _ => {
                        let d = segment_distance(a, b);
                        if d < a.radius + b.radius {
                            details.push(format!(
                                "segments {i} and {j} are {:.4} mm apart, closer than the sum of radii",
                                d * 1e3
                            ));
                        }
                    }
                }
            }
        }
        checks.push(CheckResult {
            name: "overlap",
            passed: details.is_empty(),
            details,
        });
    }

    // Feed and load attachment points.
    {
        let mut details = Vec::new();
        if mesh.feed_segment >= mesh.segments.len() {
            details.push(format!("feed segment {} out of range", mesh.feed_segment));
        }
        for (&idx, _) in &mesh.loads {
            if idx >= mesh.segments.len() {
                details.push(format!("load segment {idx} out of range"));
                continue;
            }
            let node = nodes.node_at(mesh.segments[idx].end);
            match node {
                Some(n) => {
                    let deg = nodes.segments_at[n].len();
                    if deg != 2 {
                        details.push(format!(
                            "load on segment {idx}: attachment node has degree {deg}, need a simple series point"
                        ));
                    }
                    if mesh.feed_segment < mesh.segments.len()
                        && dist(nodes.coords[n], mesh.feed_node()) < NODE_TOL
                    {
                        details.push(format!(
                            "load on segment {idx} coincides with the feed node"
                        ));
                    }
                }
                None => details.push(format!("load segment {idx}: no node at segment end")),
            }
        }
        checks.push(CheckResult {
            name: "attachments",
            passed: details.is_empty(),
            details,
        });
    }

    MeshDiagnostics { checks }
}

fn away_direction(s: &Segment, shared: [f64; 3]) -> [f64; 3] {
    let d = s.direction();
    if dist(s.start, shared) < NODE_TOL {
        d
    } else {
        [-d[0], -d[1], -d[2]]
    }
}

/// Node bookkeeping shared by validation and the solver's basis builder.
pub(crate) struct NodeIndex {
    pub coords: Vec<[f64; 3]>,
    /// Segment indices attached to each node, in segment order.
    pub segments_at: Vec<Vec<usize>>,
    /// The (one or two distinct) nodes of each segment.
    pub of_segment: Vec<Vec<usize>>,
    /// (node of start, node of end) per segment.
    pub endpoints: Vec<(usize, usize)>,
}

impl NodeIndex {
    pub fn build(mesh: &SegmentMesh) -> Self {
        let mut coords: Vec<[f64; 3]> = Vec::new();
        let mut segments_at: Vec<Vec<usize>> = Vec::new();
        let mut of_segment = vec![Vec::new(); mesh.segments.len()];
        let mut endpoints = Vec::with_capacity(mesh.segments.len());
        let mut find_or_add = |p: [f64; 3], coords: &mut Vec<[f64; 3]>| -> usize {
            for (i, c) in coords.iter().enumerate() {
                if dist(*c, p) < NODE_TOL {
                    return i;
                }
            }
            coords.push(p);
            segments_at.push(Vec::new());
            coords.len() - 1
        };
        let mut seg_ends = Vec::with_capacity(mesh.segments.len());
        for s in &mesh.segments {
            let a = find_or_add(s.start, &mut coords);
            let b = find_or_add(s.end, &mut coords);
            seg_ends.push((a, b));
        }
        for (i, &(a, b)) in seg_ends.iter().enumerate() {
            segments_at[a].push(i);
            if b != a {
                segments_at[b].push(i);
            }
            of_segment[i].push(a);
            if b != a {
                of_segment[i].push(b);
            }
            endpoints.push((a, b));
        }
        Self {
            coords,
            segments_at,
            of_segment,
            endpoints,
        }
    }

    pub fn node_at(&self, p: [f64; 3]) -> Option<usize> {
        self.coords
            .iter()
            .position(|c| dist(*c, p) < NODE_TOL)
    }

    fn shared_nodes(&self, i: usize, j: usize) -> Vec<usize> {
        self.of_segment[i]
            .iter()
            .copied()
            .filter(|n| self.of_segment[j].contains(n))
            .collect()
    }
}

/// Minimum distance between two segments.
pub fn segment_distance(a: &Segment, b: &Segment) -> f64 {
    segment_closest_points(a, b).2
}

/// Closest approach between two segments: the parameters (s on `a`,
/// t on `b`), both clamped to [0, 1], and the distance.
pub fn segment_closest_points(a: &Segment, b: &Segment) -> (f64, f64, f64) {
    let p1 = a.start;
    let d1 = sub(a.end, a.start);
    let p2 = b.start;
    let d2 = sub(b.end, b.start);
    let r = sub(p1, p2);
    let aa = dot(d1, d1);
    let ee = dot(d2, d2);
    let f = dot(d2, r);
    let c = dot(d1, r);
    let bb = dot(d1, d2);
    let denom = aa * ee - bb * bb;
    let mut s = if denom.abs() > 1e-30 {
        ((bb * f - c * ee) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = if ee > 1e-30 { (bb * s + f) / ee } else { 0.0 };
    if t < 0.0 {
        t = 0.0;
        s = (-c / aa).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((bb - c) / aa).clamp(0.0, 1.0);
    }
    let cp1 = [p1[0] + d1[0] * s, p1[1] + d1[1] * s, p1[2] + d1[2] * s];
    let cp2 = [p2[0] + d2[0] * t, p2[1] + d2[1] * t, p2[2] + d2[2] * t];
    (s, t, dist(cp1, cp2))
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    fn reference_build(config: AntennaConfig) -> SegmentMesh {
        let mut d = presets::design_b();
        d.antenna.config = config;
        if config == AntennaConfig::ExtensionAtEnd {
            d.antenna.trap_position_fraction = 0.95;
        }
        build_ifa_mesh(
            &d.antenna,
            &d.substrate,
            &d.ground,
            &d.trap,
            d.max_seg_fraction,
            d.f_max,
            Some(d.length_scale),
        )
        .unwrap()
    }

    #[test]
    fn default_build_passes_validation() {
        let mesh = reference_build(AntennaConfig::ExtensionInset);
        let diag = validate_mesh(&mesh, 1e9);
        assert!(diag.all_passed(), "{}", diag.summary());
        assert!(!mesh.loads.is_empty());
    }

    #[test]
    fn arm_spans_footprint() {
        let d = presets::design_b();
        let mesh = reference_build(AntennaConfig::ExtensionInset);
        let arm_total: f64 = mesh
            .segments
            .iter()
            .filter(|s| {
                (s.start[2] - d.antenna.footprint_height).abs() < 1e-12
                    && (s.end[2] - d.antenna.footprint_height).abs() < 1e-12
            })
            .map(Segment::length)
            .sum();
        assert_relative_eq!(arm_total, d.antenna.footprint_length, max_relative = 1e-12);
    }

    #[test]
    fn rejects_degenerate_trap_position() {
        let mut d = presets::design_b();
        d.antenna.trap_position_fraction = 0.0;
        assert!(build_ifa_mesh(
            &d.antenna,
            &d.substrate,
            &d.ground,
            &d.trap,
            d.max_seg_fraction,
            d.f_max,
            Some(d.length_scale),
        )
        .is_err());
    }

    #[test]
    fn configs_with_equal_totals_have_equal_conductor_length() {
        let a = reference_build(AntennaConfig::ExtensionAtEnd);
        let b = reference_build(AntennaConfig::ExtensionInset);
        assert_relative_eq!(
            a.total_conductor_length(),
            b.total_conductor_length(),
            max_relative = 1e-12
        );
        // Different load attachment: A's trap sits on the arm, B's on the
        // branch stub below it.
        let la = *a.loads.keys().next().unwrap();
        let lb = *b.loads.keys().next().unwrap();
        assert!(a.segments[la].end[2] > b.segments[lb].end[2]);
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let m1 = reference_build(AntennaConfig::ExtensionInset).export();
        let m2 = reference_build(AntennaConfig::ExtensionInset).export();
        assert_eq!(m1, m2);
    }

    #[test]
    fn halving_fraction_at_least_doubles_run_counts() {
        // The power-of-two split rule guarantees doubling for any run that
        // actually feels the budget (length above half the segment cap);
        // shorter runs are already a single segment either way.
        for needed in [0.51_f64, 0.9, 1.0, 1.2, 2.0, 3.7, 8.0, 13.5] {
            let maxlen = 1.0;
            let coarse = split_count(needed, maxlen);
            let fine = split_count(needed, maxlen / 2.0);
            assert!(
                fine >= 2 * coarse,
                "needed {needed}: {coarse} -> {fine} did not double"
            );
        }

        // On the built mesh, check the longest arm stretch doubles.
        let d = presets::design_b();
        let build = |frac: f64| {
            build_ifa_mesh(
                &d.antenna,
                &d.substrate,
                &d.ground,
                &d.trap,
                frac,
                d.f_max,
                Some(d.length_scale),
            )
            .unwrap()
        };
        let count_mid_arm = |mesh: &SegmentMesh| {
            let h = d.antenna.footprint_height;
            let x0 = d.antenna.short_pin_offset;
            let x1 = d.antenna.trap_position_fraction * d.antenna.footprint_length;
            mesh.segments
                .iter()
                .filter(|s| {
                    (s.start[2] - h).abs() < 1e-12
                        && (s.end[2] - h).abs() < 1e-12
                        && s.start[0] >= x0 - 1e-12
                        && s.end[0] <= x1 + 1e-12
                })
                .count()
        };
        let coarse = build(0.05);
        let fine = build(0.025);
        assert!(count_mid_arm(&fine) >= 2 * count_mid_arm(&coarse));
    }

    #[test]
    fn equivalent_radius_rule() {
        let d = presets::design_b();
        let mesh = reference_build(AntennaConfig::ExtensionInset);
        for s in &mesh.segments {
            let vertical = (s.start[0] - s.end[0]).abs() < 1e-15;
            let on_feed_x = (s.start[0] - d.antenna.short_pin_offset).abs() < 1e-12;
            if vertical && on_feed_x {
                assert_relative_eq!(s.radius, d.antenna.feed_width / 4.0, max_relative = 1e-15);
            } else {
                assert_relative_eq!(s.radius, d.antenna.trace_width / 4.0, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn validation_flags_stretched_segment() {
        let mut mesh = reference_build(AntennaConfig::ExtensionInset);
        let lambda = mesh.medium_wavelength(1e9);
        let i = mesh.segments.len() - 1;
        let s = mesh.segments[i];
        let dir = s.direction();
        mesh.segments[i].end = [
            s.start[0] + dir[0] * lambda / 5.0,
            s.start[1] + dir[1] * lambda / 5.0,
            s.start[2] + dir[2] * lambda / 5.0,
        ];
        let diag = validate_mesh(&mesh, 1e9);
        let check = diag
            .checks
            .iter()
            .find(|c| c.name == "electrical-length")
            .unwrap();
        assert!(!check.passed);
        assert!(check.details.iter().any(|d| d.contains(&format!("segment {i}"))));
    }

    #[test]
    fn validation_flags_coincident_segments() {
        let mut mesh = reference_build(AntennaConfig::ExtensionInset);
        let dup = mesh.segments[3];
        mesh.segments.push(dup);
        let diag = validate_mesh(&mesh, 1e9);
        let check = diag.checks.iter().find(|c| c.name == "overlap").unwrap();
        assert!(!check.passed);
    }

    #[test]
    fn effective_permittivity_scale_values() {
        let free = SubstrateSpec::new(1.0, 0.0, 13.5e-3, 1.6e-3).unwrap();
        assert_eq!(effective_permittivity_scale(&free), 1.0);
        let fr4 = SubstrateSpec::default();
        assert_relative_eq!(
            effective_permittivity_scale(&fr4),
            0.6142951168339512,
            max_relative = 1e-12
        );
        let seven = SubstrateSpec::new(7.0, 0.0, 13.5e-3, 1.6e-3).unwrap();
        assert_relative_eq!(effective_permittivity_scale(&seven), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn mesh_export_import_roundtrip() {
        let mesh = reference_build(AntennaConfig::ExtensionInset);
        let text = mesh.export();
        let back = SegmentMesh::import(&text).unwrap();
        assert_eq!(mesh, back);
        assert_eq!(text, back.export());
    }

    #[test]
    fn mesh_import_rejects_garbage() {
        assert!(SegmentMesh::import("not a mesh").is_err());
        let mesh = reference_build(AntennaConfig::ExtensionInset);
        let mut text = mesh.export();
        text = text.replace("end", "");
        assert!(SegmentMesh::import(&text).is_err());
    }

    #[test]
    fn wire_grid_ground_builds_and_validates() {
        let mut d = presets::design_b();
        d.ground.model = GroundModel::WireGrid;
        let mesh = build_ifa_mesh(
            &d.antenna,
            &d.substrate,
            &d.ground,
            &d.trap,
            d.max_seg_fraction,
            d.f_max,
            Some(d.length_scale),
        )
        .unwrap();
        assert_eq!(mesh.ground, GroundMode::FreeSpace);
        let diag = validate_mesh(&mesh, d.f_max);
        assert!(diag.all_passed(), "{}", diag.summary());
        // Grid present: plenty of z = 0 segments.
        let ground_segments = mesh
            .segments
            .iter()
            .filter(|s| s.start[2] == 0.0 && s.end[2] == 0.0)
            .count();
        assert!(ground_segments > 20);
    }
}
