//! Tolerance methodology for the full antenna: evaluate the design at the
//! component-tolerance corners and under Monte Carlo sampling, judge the
//! in-band return-loss goal, and compare the two trap placements.
//!
//! Corner sweeps and Monte Carlo samples are independent units of work and
//! reduce by order-independent min/max; reports are deterministic for a
//! fixed (mesh, grid, seed).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{CornerAssignment, TrapSpec, TrapValues};
use crate::error::{Error, Result};
use crate::geometry::{Load, SegmentMesh};
use crate::solver::{self, DriveResult, Resonance, SolveOptions};

/// Threshold used to *detect and track* dips (the pass/fail judgement uses
/// the report's own threshold).
const TRACKING_THRESHOLD_DB: f64 = -3.0;

/// A frequency band of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSpec {
    pub name: String,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
}

impl BandSpec {
    pub fn new(name: impl Into<String>, f_lo_hz: f64, f_hi_hz: f64) -> Result<Self> {
        if !(f_lo_hz > 0.0 && f_lo_hz < f_hi_hz) {
            return Err(Error::domain(format!(
                "band must satisfy 0 < f_lo < f_hi, got {f_lo_hz}..{f_hi_hz}"
            )));
        }
        Ok(Self {
            name: name.into(),
            f_lo_hz,
            f_hi_hz,
        })
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.f_lo_hz && f <= self.f_hi_hz
    }
}

/// Outcome for one band at one corner / sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandOutcome {
    /// Worst (largest) S11 dB over the in-band grid points.
    pub worst_rl_db: f64,
    /// Frequency of the dip tracked against this band, if one exists.
    pub dip_freq_hz: Option<f64>,
    /// Interpolated dip depth, dB.
    pub dip_rl_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CornerRow {
    pub corner: CornerAssignment,
    pub bands: Vec<BandOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Incomplete,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Fail => write!(f, "fail"),
            Verdict::Incomplete => write!(f, "incomplete"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McDistribution {
    /// Independent uniform draws within each tolerance window.
    Uniform,
    /// Each component independently at one of its two extremes.
    CornerWeighted,
}

impl std::fmt::Display for McDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            McDistribution::Uniform => write!(f, "uniform"),
            McDistribution::CornerWeighted => write!(f, "corner-weighted"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub samples: usize,
    pub seed: u64,
    pub distribution: McDistribution,
    pub pass_count: usize,
    pub pass_rate: f64,
    /// Per band: (min, max) dip frequency over samples, where tracked.
    pub dip_ranges: Vec<Option<(f64, f64)>>,
}

/// Corner + Monte Carlo results against the return-loss goal.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceReport {
    pub threshold_db: f64,
    pub bands: Vec<BandSpec>,
    /// Nominal first, then the four extremes, in canonical order.
    pub corners: Vec<CornerRow>,
    pub monte_carlo: Option<MonteCarloSummary>,
    /// Set when a sweep failed; names the failing corner.
    pub incomplete: Option<String>,
    pub verdict: Verdict,
}

impl ToleranceReport {
    pub fn is_complete(&self) -> bool {
        self.incomplete.is_none()
    }

    /// Corner envelope of tracked dip frequencies per band: (min, max).
    pub fn corner_dip_envelope(&self, band_idx: usize) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut any = false;
        for row in &self.corners {
            if let Some(f) = row.bands.get(band_idx).and_then(|b| b.dip_freq_hz) {
                lo = lo.min(f);
                hi = hi.max(f);
                any = true;
            }
        }
        any.then_some((lo, hi))
    }

    /// Stable structured-text serialization (fixed key order and number
    /// formatting; byte-identical for identical inputs).
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str("trapant-tolerance-report v1\n");
        out.push_str(&format!("threshold_db: {:.6}\n", self.threshold_db));
        out.push_str(&format!("bands: {}\n", self.bands.len()));
        for (i, b) in self.bands.iter().enumerate() {
            out.push_str(&format!(
                "band {}: {} {:.6} {:.6} MHz\n",
                i,
                b.name,
                b.f_lo_hz / 1e6,
                b.f_hi_hz / 1e6
            ));
        }
        out.push_str(&format!("corners: {}\n", self.corners.len()));
        for row in &self.corners {
            out.push_str(&format!("corner {}:\n", row.corner.label()));
            for (b, o) in self.bands.iter().zip(&row.bands) {
                let dip = match (o.dip_freq_hz, o.dip_rl_db) {
                    (Some(f), Some(rl)) => {
                        format!("dip_mhz={:.6} dip_rl_db={:.6}", f / 1e6, rl)
                    }
                    _ => "dip=none".to_owned(),
                };
                out.push_str(&format!(
                    "  {}: worst_rl_db={:.6} {}\n",
                    b.name, o.worst_rl_db, dip
                ));
            }
        }
        if let Some(mc) = &self.monte_carlo {
            out.push_str("monte_carlo:\n");
            out.push_str(&format!("  samples: {}\n", mc.samples));
            out.push_str(&format!("  seed: {}\n", mc.seed));
            out.push_str(&format!("  distribution: {}\n", mc.distribution));
            out.push_str(&format!("  pass_count: {}\n", mc.pass_count));
            out.push_str(&format!("  pass_rate: {:.6}\n", mc.pass_rate));
            for (b, range) in self.bands.iter().zip(&mc.dip_ranges) {
                match range {
                    Some((lo, hi)) => out.push_str(&format!(
                        "  {}: dip_min_mhz={:.6} dip_max_mhz={:.6}\n",
                        b.name,
                        lo / 1e6,
                        hi / 1e6
                    )),
                    None => out.push_str(&format!("  {}: dip=none\n", b.name)),
                }
            }
        }
        if let Some(why) = &self.incomplete {
            out.push_str(&format!("incomplete: {why}\n"));
        }
        out.push_str(&format!("verdict: {}\n", self.verdict));
        out
    }
}

// ---------------------------------------------------------------------------
// Grid plumbing
// ---------------------------------------------------------------------------

/// Sweep grid with every band edge inserted as an explicit sample point,
/// removing grid-alignment ambiguity in the in-band worst-point search.
pub fn augment_grid(grid: &[f64], bands: &[BandSpec]) -> Result<Vec<f64>> {
    crate::circuit::check_grid(grid)?;
    let lo = grid[0];
    let hi = *grid.last().unwrap();
    for b in bands {
        if b.f_lo_hz < lo || b.f_hi_hz > hi {
            return Err(Error::domain(format!(
                "band {} ({}..{} Hz) outside the sweep span {}..{} Hz",
                b.name, b.f_lo_hz, b.f_hi_hz, lo, hi
            )));
        }
    }
    let mut out: Vec<f64> = grid.to_vec();
    for b in bands {
        out.push(b.f_lo_hz);
        out.push(b.f_hi_hz);
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    Ok(out)
}

fn band_outcomes(
    sweep: &[DriveResult],
    bands: &[BandSpec],
    reference_dips: Option<&[Option<f64>]>,
) -> Result<Vec<BandOutcome>> {
    let dips: Vec<Resonance> = solver::find_resonances(sweep, TRACKING_THRESHOLD_DB)?;
    let mut out = Vec::with_capacity(bands.len());
    for (i, band) in bands.iter().enumerate() {
        let worst = sweep
            .iter()
            .filter(|r| band.contains(r.f_hz))
            .map(|r| r.return_loss_db())
            .fold(f64::NEG_INFINITY, f64::max);
        if worst == f64::NEG_INFINITY {
            return Err(Error::domain(format!(
                "band {} contains no sweep points",
                band.name
            )));
        }
        let dip = match reference_dips {
            // Track the dip nearest to the nominal dip of this band.
            Some(refs) => refs[i].and_then(|f_ref| {
                dips.iter()
                    .min_by(|a, b| {
                        (a.f_dip_hz - f_ref)
                            .abs()
                            .total_cmp(&(b.f_dip_hz - f_ref).abs())
                    })
                    .copied()
            }),
            // Nominal pass: deepest dip inside the band.
            None => dips
                .iter()
                .filter(|d| band.contains(d.f_dip_hz))
                .min_by(|a, b| a.rl_db.total_cmp(&b.rl_db))
                .copied(),
        };
        out.push(BandOutcome {
            worst_rl_db: worst,
            dip_freq_hz: dip.map(|d| d.f_dip_hz),
            dip_rl_db: dip.map(|d| d.rl_db),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Corner analysis
// ---------------------------------------------------------------------------

/// Sweep the mesh at the four extreme tolerance corners plus nominal and
/// judge the in-band worst return loss per band.  A sweep failure marks the
/// report incomplete and names the corner rather than erroring out.
pub fn corner_analysis(
    mesh: &SegmentMesh,
    bands: &[BandSpec],
    grid: &[f64],
    threshold_db: f64,
    opts: SolveOptions,
) -> Result<ToleranceReport> {
    if bands.is_empty() {
        return Err(Error::domain("at least one band is required"));
    }
    let grid = augment_grid(grid, bands)?;
    let mut corners = Vec::new();
    let mut incomplete = None;
    let mut nominal_dips: Vec<Option<f64>> = vec![None; bands.len()];

    for (i, corner) in CornerAssignment::canonical_set().into_iter().enumerate() {
        match solver::frequency_sweep_with(mesh, &grid, corner, opts) {
            Ok(sweep) => {
                let reference = (i > 0).then_some(nominal_dips.as_slice());
                let outcomes = band_outcomes(&sweep, bands, reference)?;
                if i == 0 {
                    for (slot, o) in nominal_dips.iter_mut().zip(&outcomes) {
                        *slot = o.dip_freq_hz;
                    }
                }
                corners.push(CornerRow {
                    corner,
                    bands: outcomes,
                });
            }
            Err(e) => {
                incomplete = Some(format!("corner {} failed: {e}", corner.label()));
                break;
            }
        }
    }

    let verdict = judge(&corners, bands.len(), threshold_db, &incomplete);
    Ok(ToleranceReport {
        threshold_db,
        bands: bands.to_vec(),
        corners,
        monte_carlo: None,
        incomplete,
        verdict,
    })
}

fn judge(
    corners: &[CornerRow],
    n_bands: usize,
    threshold_db: f64,
    incomplete: &Option<String>,
) -> Verdict {
    if incomplete.is_some() || corners.len() != 5 {
        return Verdict::Incomplete;
    }
    let all_pass = corners
        .iter()
        .flat_map(|c| &c.bands)
        .all(|b| b.worst_rl_db <= threshold_db);
    debug_assert!(corners.iter().all(|c| c.bands.len() == n_bands));
    if all_pass {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// True iff every corner's worst in-band return loss meets the threshold
/// (inclusive) in every band.
pub fn pass_fail(report: &ToleranceReport, threshold_db: f64) -> Result<bool> {
    if let Some(why) = &report.incomplete {
        return Err(Error::IncompleteReport(why.clone()));
    }
    if report.corners.len() != 5 {
        return Err(Error::IncompleteReport(format!(
            "expected 5 corners, report has {}",
            report.corners.len()
        )));
    }
    Ok(report
        .corners
        .iter()
        .flat_map(|c| &c.bands)
        .all(|b| b.worst_rl_db <= threshold_db))
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

/// Corner analysis followed by `n` Monte Carlo samples of the trap
/// components.  Deterministic for a fixed seed: sample j draws from an
/// independent ChaCha stream `j`, so results do not depend on evaluation
/// order.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    mesh: &SegmentMesh,
    bands: &[BandSpec],
    grid: &[f64],
    threshold_db: f64,
    n: usize,
    seed: u64,
    distribution: McDistribution,
    opts: SolveOptions,
) -> Result<ToleranceReport> {
    if n == 0 {
        return Err(Error::domain("monte carlo needs at least one sample"));
    }
    let trap = single_trap(mesh)?;
    let mut report = corner_analysis(mesh, bands, grid, threshold_db, opts)?;
    if !report.is_complete() {
        return Ok(report);
    }
    let grid = augment_grid(grid, bands)?;
    let nominal_dips: Vec<Option<f64>> = report.corners[0]
        .bands
        .iter()
        .map(|b| b.dip_freq_hz)
        .collect();

    let mut pass_count = 0usize;
    let mut dip_ranges: Vec<Option<(f64, f64)>> = vec![None; bands.len()];
    for j in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let values: TrapValues = match distribution {
            McDistribution::Uniform => trap.sample_uniform(&mut rng),
            McDistribution::CornerWeighted => trap.sample_corner_weighted(&mut rng),
        };
        let sweep =
            solver::frequency_sweep_resolved(mesh, &grid, &move |_t: &TrapSpec| values, opts)?;
        let outcomes = band_outcomes(&sweep, bands, Some(&nominal_dips))?;
        if outcomes.iter().all(|o| o.worst_rl_db <= threshold_db) {
            pass_count += 1;
        }
        for (slot, o) in dip_ranges.iter_mut().zip(&outcomes) {
            if let Some(f) = o.dip_freq_hz {
                *slot = match *slot {
                    None => Some((f, f)),
                    Some((lo, hi)) => Some((lo.min(f), hi.max(f))),
                };
            }
        }
    }

    report.monte_carlo = Some(MonteCarloSummary {
        samples: n,
        seed,
        distribution,
        pass_count,
        pass_rate: pass_count as f64 / n as f64,
        dip_ranges,
    });
    Ok(report)
}

fn single_trap(mesh: &SegmentMesh) -> Result<TrapSpec> {
    let traps: Vec<&TrapSpec> = mesh
        .loads
        .values()
        .filter_map(|l| match l {
            Load::Trap(t) => Some(t),
            Load::Fixed(_) => None,
        })
        .collect();
    if traps.len() != 1 {
        return Err(Error::TrapLoadCount { found: traps.len() });
    }
    Ok(*traps[0])
}

// ---------------------------------------------------------------------------
// Configuration comparison
// ---------------------------------------------------------------------------

/// A named design under comparison.
#[derive(Debug, Clone)]
pub struct DesignUnderTest {
    pub label: String,
    pub mesh: SegmentMesh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftOrdering {
    BSmaller,
    Equal,
    ASmaller,
}

impl std::fmt::Display for ShiftOrdering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShiftOrdering::BSmaller => write!(f, "B-smaller"),
            ShiftOrdering::Equal => write!(f, "equal"),
            ShiftOrdering::ASmaller => write!(f, "A-smaller"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BandComparison {
    pub band: String,
    /// Largest |dip shift| across the four extreme corners, Hz.
    pub a_max_dip_shift_hz: f64,
    pub b_max_dip_shift_hz: f64,
    /// Worst in-band return loss across all corners, dB.
    pub a_worst_rl_db: f64,
    pub b_worst_rl_db: f64,
    pub ordering: ShiftOrdering,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub a_label: String,
    pub b_label: String,
    pub threshold_db: f64,
    pub a_report: ToleranceReport,
    pub b_report: ToleranceReport,
    pub bands: Vec<BandComparison>,
    pub a_pass: bool,
    pub b_pass: bool,
}

impl ComparisonReport {
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str("trapant-comparison v1\n");
        out.push_str(&format!("design_a: {}\n", self.a_label));
        out.push_str(&format!("design_b: {}\n", self.b_label));
        out.push_str(&format!("threshold_db: {:.6}\n", self.threshold_db));
        for b in &self.bands {
            out.push_str(&format!(
                "band {}: a_shift_mhz={:.6} b_shift_mhz={:.6} a_worst_rl_db={:.6} b_worst_rl_db={:.6} ordering={}\n",
                b.band,
                b.a_max_dip_shift_hz / 1e6,
                b.b_max_dip_shift_hz / 1e6,
                b.a_worst_rl_db,
                b.b_worst_rl_db,
                b.ordering,
            ));
        }
        out.push_str(&format!(
            "a_pass: {}\nb_pass: {}\n",
            self.a_pass, self.b_pass
        ));
        out
    }
}

/// Corner-analyze both designs and compare per-band dip stability.
pub fn compare_configs(
    design_a: &DesignUnderTest,
    design_b: &DesignUnderTest,
    bands: &[BandSpec],
    grid: &[f64],
    threshold_db: f64,
    opts: SolveOptions,
) -> Result<ComparisonReport> {
    let a_report = corner_analysis(&design_a.mesh, bands, grid, threshold_db, opts)?;
    let b_report = corner_analysis(&design_b.mesh, bands, grid, threshold_db, opts)?;
    for (label, report) in [(&design_a.label, &a_report), (&design_b.label, &b_report)] {
        if let Some(why) = &report.incomplete {
            return Err(Error::IncompleteReport(format!("{label}: {why}")));
        }
        for (band, outcome) in bands.iter().zip(&report.corners[0].bands) {
            let tuned = outcome
                .dip_freq_hz
                .is_some_and(|f| band.contains(f))
                && outcome.dip_rl_db.is_some_and(|rl| rl <= threshold_db);
            if !tuned {
                return Err(Error::Untuned(format!(
                    "design {label} has no nominal dip at or below {threshold_db} dB inside band {}",
                    band.name
                )));
            }
        }
    }

    let mut band_rows = Vec::new();
    for (i, band) in bands.iter().enumerate() {
        let a_shift = max_dip_shift(&a_report, i);
        let b_shift = max_dip_shift(&b_report, i);
        let a_worst = worst_rl(&a_report, i);
        let b_worst = worst_rl(&b_report, i);
        let ordering = if b_shift < a_shift {
            ShiftOrdering::BSmaller
        } else if b_shift == a_shift {
            ShiftOrdering::Equal
        } else {
            ShiftOrdering::ASmaller
        };
        band_rows.push(BandComparison {
            band: band.name.clone(),
            a_max_dip_shift_hz: a_shift,
            b_max_dip_shift_hz: b_shift,
            a_worst_rl_db: a_worst,
            b_worst_rl_db: b_worst,
            ordering,
        });
    }

    let a_pass = pass_fail(&a_report, threshold_db)?;
    let b_pass = pass_fail(&b_report, threshold_db)?;
    Ok(ComparisonReport {
        a_label: design_a.label.clone(),
        b_label: design_b.label.clone(),
        threshold_db,
        a_report,
        b_report,
        bands: band_rows,
        a_pass,
        b_pass,
    })
}

/// Largest |dip(corner) − dip(nominal)| across the extreme corners; a
/// corner that loses the dip counts as an unbounded shift.
fn max_dip_shift(report: &ToleranceReport, band_idx: usize) -> f64 {
    let nominal = match report.corners[0].bands[band_idx].dip_freq_hz {
        Some(f) => f,
        None => return f64::INFINITY,
    };
    report.corners[1..]
        .iter()
        .map(|row| match row.bands[band_idx].dip_freq_hz {
            Some(f) => (f - nominal).abs(),
            None => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

fn worst_rl(report: &ToleranceReport, band_idx: usize) -> f64 {
    report
        .corners
        .iter()
        .map(|row| row.bands[band_idx].worst_rl_db)
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------------------
