//! Lumped-element model of the parallel-LC trap.
//!
//! The trap is one capacitor in parallel with two inductors (two parts are
//! used to realize an inductance the catalog does not stock directly).  Near
//! its parallel resonance it presents a very high impedance and behaves as a
//! band-stop element when inserted in series in an antenna conductor.
//!
//! Everything here is a pure function of its inputs; all operations are safe
//! to call concurrently.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Magnitude clamp applied where an ideal trap's impedance diverges at
/// parallel resonance.  Large enough to be an open circuit against any
/// realistic antenna impedance, small enough to keep the solver's linear
/// algebra well behaved.
pub const OPEN_CIRCUIT_CLAMP_OHMS: f64 = 1e9;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// A component value with either an absolute or a relative tolerance.
///
/// At most one of `tol_abs` and `tol_rel` may be nonzero; the effective
/// half-width of the tolerance window is `tol_abs + tol_rel * nominal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentValue {
    /// Nominal value in SI units (farads or henries).
    pub nominal: f64,
    /// Absolute tolerance half-width, same unit as `nominal`.
    pub tol_abs: f64,
    /// Relative tolerance half-width, as a fraction of `nominal`.
    pub tol_rel: f64,
}

impl ComponentValue {
    pub fn new(nominal: f64, tol_abs: f64, tol_rel: f64) -> Result<Self> {
        if !nominal.is_finite() || nominal <= 0.0 {
            return Err(Error::domain(format!(
                "component nominal must be positive and finite, got {nominal}"
            )));
        }
        if tol_abs < 0.0 || tol_rel < 0.0 || !tol_abs.is_finite() || !tol_rel.is_finite() {
            return Err(Error::domain("tolerances must be finite and non-negative"));
        }
        if tol_abs > 0.0 && tol_rel > 0.0 {
            return Err(Error::domain(
                "at most one of tol_abs and tol_rel may be nonzero",
            ));
        }
        if tol_abs + tol_rel * nominal >= nominal {
            return Err(Error::domain(
                "tolerance half-width must be smaller than the nominal value",
            ));
        }
        Ok(Self {
            nominal,
            tol_abs,
            tol_rel,
        })
    }

    /// Value with zero tolerance.
    pub fn exact(nominal: f64) -> Result<Self> {
        Self::new(nominal, 0.0, 0.0)
    }

    /// Value toleranced in absolute units, e.g. 9.1 pF ± 0.05 pF.
    pub fn with_abs_tol(nominal: f64, tol_abs: f64) -> Result<Self> {
        Self::new(nominal, tol_abs, 0.0)
    }

    /// Value toleranced as a fraction, e.g. 6.8 nH ± 2%.
    pub fn with_rel_tol(nominal: f64, tol_rel: f64) -> Result<Self> {
        Self::new(nominal, 0.0, tol_rel)
    }

    /// Effective half-width of the tolerance window.
    pub fn half_width(&self) -> f64 {
        self.tol_abs + self.tol_rel * self.nominal
    }

    /// Value at a signed fraction of the tolerance window, `delta` in [-1, 1].
    pub fn at(&self, delta: f64) -> f64 {
        self.nominal + delta * self.half_width()
    }
}

/// The trap: one capacitor and two inductors connected in parallel, with
/// optional series resistance per part for loss studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapSpec {
    /// Capacitor, farads.
    pub cap: ComponentValue,
    /// First inductor, henries.
    pub ind1: ComponentValue,
    /// Second inductor, henries.
    pub ind2: ComponentValue,
    /// Series resistance per inductor, ohms.
    pub r_series_ind: f64,
    /// Series resistance of the capacitor, ohms.
    pub r_series_cap: f64,
}

impl TrapSpec {
    /// Ideal (zero series resistance) trap.
    pub fn new(cap: ComponentValue, ind1: ComponentValue, ind2: ComponentValue) -> Result<Self> {
        Self::with_losses(cap, ind1, ind2, 0.0, 0.0)
    }

    pub fn with_losses(
        cap: ComponentValue,
        ind1: ComponentValue,
        ind2: ComponentValue,
        r_series_ind: f64,
        r_series_cap: f64,
    ) -> Result<Self> {
        if r_series_ind < 0.0 || r_series_cap < 0.0 {
            return Err(Error::domain("series resistances must be non-negative"));
        }
        let spec = Self {
            cap,
            ind1,
            ind2,
            r_series_ind,
            r_series_cap,
        };
        let v = spec.values_at(CornerAssignment::NOMINAL);
        if !(v.l_eff() > 0.0) || !v.resonance_hz().is_finite() || v.resonance_hz() <= 0.0 {
            return Err(Error::domain("trap has no finite positive resonance"));
        }
        Ok(spec)
    }

    /// True when both series resistances are zero.
    pub fn is_ideal(&self) -> bool {
        self.r_series_ind == 0.0 && self.r_series_cap == 0.0
    }

    /// Effective inductance of the two parallel inductors at nominal.
    pub fn l_eff_nominal(&self) -> f64 {
        self.values_at(CornerAssignment::NOMINAL).l_eff()
    }

    /// Concrete component values at a tolerance corner.  Both inductors move
    /// to the same end of their windows together; the corner model treats
    /// them as fully correlated.
    pub fn values_at(&self, corner: CornerAssignment) -> TrapValues {
        TrapValues {
            cap: self.cap.at(corner.delta_c as f64),
            ind1: self.ind1.at(corner.delta_l as f64),
            ind2: self.ind2.at(corner.delta_l as f64),
            r_series_ind: self.r_series_ind,
            r_series_cap: self.r_series_cap,
        }
    }

    /// Draw component values uniformly and independently within their
    /// tolerance windows (the Monte Carlo model; unlike corners, the two
    /// inductors are sampled independently).
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> TrapValues {
        let mut draw = |c: &ComponentValue| {
            let d: f64 = rng.random_range(-1.0..=1.0);
            c.at(d)
        };
        TrapValues {
            cap: draw(&self.cap),
            ind1: draw(&self.ind1),
            ind2: draw(&self.ind2),
            r_series_ind: self.r_series_ind,
            r_series_cap: self.r_series_cap,
        }
    }

    /// Draw each component independently at one of its two extremes
    /// (probability 1/2 each): a worst-case-biased sampling scheme.
    pub fn sample_corner_weighted<R: Rng + ?Sized>(&self, rng: &mut R) -> TrapValues {
        let mut draw = |c: &ComponentValue| {
            let d = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            c.at(d)
        };
        TrapValues {
            cap: draw(&self.cap),
            ind1: draw(&self.ind1),
            ind2: draw(&self.ind2),
            r_series_ind: self.r_series_ind,
            r_series_cap: self.r_series_cap,
        }
    }
}

/// Concrete (tolerance-resolved) component values of a trap instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapValues {
    pub cap: f64,
    pub ind1: f64,
    pub ind2: f64,
    pub r_series_ind: f64,
    pub r_series_cap: f64,
}

impl TrapValues {
    /// Effective inductance of the two parallel inductors.
    pub fn l_eff(&self) -> f64 {
        self.ind1 * self.ind2 / (self.ind1 + self.ind2)
    }

    /// Parallel resonance frequency 1/(2π√(L_eff·C)).
    pub fn resonance_hz(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * (self.l_eff() * self.cap).sqrt())
    }

    /// Trap impedance at `f_hz`.  For ideal parts the result is purely
    /// imaginary away from resonance; at resonance the magnitude is clamped
    /// to [`OPEN_CIRCUIT_CLAMP_OHMS`] instead of diverging.
    pub fn impedance(&self, f_hz: f64) -> Result<Complex64> {
        if !(f_hz > 0.0) || !f_hz.is_finite() {
            return Err(Error::domain(format!(
                "frequency must be positive, got {f_hz}"
            )));
        }
        let w = 2.0 * std::f64::consts::PI * f_hz;
        let z1 = Complex64::new(self.r_series_ind, w * self.ind1);
        let z2 = Complex64::new(self.r_series_ind, w * self.ind2);
        let zl = z1 * z2 / (z1 + z2);
        let zc = Complex64::new(self.r_series_cap, -1.0 / (w * self.cap));
        let den = zl + zc;
        let z = if den == Complex64::new(0.0, 0.0) {
            Complex64::new(0.0, OPEN_CIRCUIT_CLAMP_OHMS)
        } else {
            zl * zc / den
        };
        Ok(clamp_open_circuit(z))
    }
}

fn clamp_open_circuit(z: Complex64) -> Complex64 {
    let n = z.norm();
    if !n.is_finite() {
        Complex64::new(0.0, OPEN_CIRCUIT_CLAMP_OHMS)
    } else if n > OPEN_CIRCUIT_CLAMP_OHMS {
        z * (OPEN_CIRCUIT_CLAMP_OHMS / n)
    } else {
        z
    }
}

/// Tolerance-corner selector.  Each family is pushed to its lower extreme
/// (−1), left nominal (0), or pushed to its upper extreme (+1); both
/// inductors move together.  The canonical evaluation set is the four
/// extreme corners plus nominal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CornerAssignment {
    pub delta_l: i8,
    pub delta_c: i8,
}

impl CornerAssignment {
    pub const NOMINAL: Self = Self {
        delta_l: 0,
        delta_c: 0,
    };

    pub fn new(delta_l: i8, delta_c: i8) -> Result<Self> {
        if !(-1..=1).contains(&delta_l) || !(-1..=1).contains(&delta_c) {
            return Err(Error::domain("corner deviations must be in {-1, 0, +1}"));
        }
        Ok(Self { delta_l, delta_c })
    }

    /// The four extreme corners, in a pinned order.
    pub fn extremes() -> [Self; 4] {
        [
            Self {
                delta_l: -1,
                delta_c: -1,
            },
            Self {
                delta_l: -1,
                delta_c: 1,
            },
            Self {
                delta_l: 1,
                delta_c: -1,
            },
            Self {
                delta_l: 1,
                delta_c: 1,
            },
        ]
    }

    /// Nominal followed by the four extremes; the canonical evaluation set.
    pub fn canonical_set() -> [Self; 5] {
        let e = Self::extremes();
        [Self::NOMINAL, e[0], e[1], e[2], e[3]]
    }

    /// Stable label used in CSV output and reports.
    pub fn label(&self) -> String {
        fn sign(d: i8) -> &'static str {
            match d {
                -1 => "-",
                0 => "0",
                _ => "+",
            }
        }
        if *self == Self::NOMINAL {
            "nominal".to_owned()
        } else {
            format!("{}L{}C", sign(self.delta_l), sign(self.delta_c))
        }
    }
}

/// Port reference impedance for S-parameter conversions, ohms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceImpedance(f64);

impl ReferenceImpedance {
    pub fn new(z0: f64) -> Result<Self> {
        if !(z0 > 0.0) || !z0.is_finite() {
            return Err(Error::domain(format!(
                "reference impedance must be positive, got {z0}"
            )));
        }
        Ok(Self(z0))
    }

    pub fn ohms(&self) -> f64 {
        self.0
    }
}

impl Default for ReferenceImpedance {
    fn default() -> Self {
        Self(50.0)
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Parallel combination of two inductances.
pub fn parallel_inductance(l1: f64, l2: f64) -> Result<f64> {
    if !(l1 > 0.0) || !(l2 > 0.0) || !l1.is_finite() || !l2.is_finite() {
        return Err(Error::domain(format!(
            "inductances must be positive and finite, got {l1}, {l2}"
        )));
    }
    Ok(l1 * l2 / (l1 + l2))
}

/// Trap impedance at `f_hz` with components shifted to the given corner.
pub fn trap_impedance(spec: &TrapSpec, f_hz: f64, corner: CornerAssignment) -> Result<Complex64> {
    spec.values_at(corner).impedance(f_hz)
}

/// Parallel resonance frequency at the given corner.
pub fn trap_resonance(spec: &TrapSpec, corner: CornerAssignment) -> f64 {
    spec.values_at(corner).resonance_hz()
}

/// Logarithmic sensitivities of the resonance and the worst-corner shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceSensitivity {
    /// ∂(f0)/f0 per unit δL/L; −1/2 from f0 ∝ (L·C)^(−1/2).
    pub per_unit_l: f64,
    /// ∂(f0)/f0 per unit δC/C; −1/2.
    pub per_unit_c: f64,
    /// First-order worst-corner fractional shift magnitude,
    /// ½·(δL_eff/L_eff + δC/C) with all parts at their extremes.
    pub worst_fractional_shift: f64,
}

/// Resonance sensitivity of a trap to its component tolerances.
pub fn resonance_sensitivity(spec: &TrapSpec) -> ResonanceSensitivity {
    let l1 = spec.ind1.nominal;
    let l2 = spec.ind2.nominal;
    // ∂L_eff/L_eff = w1·∂l1/l1 + w2·∂l2/l2 with weights l2/(l1+l2), l1/(l1+l2).
    let w1 = l2 / (l1 + l2);
    let w2 = l1 / (l1 + l2);
    let l_frac = w1 * spec.ind1.half_width() / l1 + w2 * spec.ind2.half_width() / l2;
    let c_frac = spec.cap.half_width() / spec.cap.nominal;
    ResonanceSensitivity {
        per_unit_l: -0.5,
        per_unit_c: -0.5,
        worst_fractional_shift: 0.5 * (l_frac + c_frac),
    }
}

/// Two-port S-parameters of a series impedance `z` between matched `z0`
/// terminations.  Returns `(s11, s21)`.
pub fn series_element_sparams(z: Complex64, z0: ReferenceImpedance) -> (Complex64, Complex64) {
    let two_z0 = Complex64::new(2.0 * z0.ohms(), 0.0);
    let den = two_z0 + z;
    (z / den, two_z0 / den)
}

/// One row of a trap S-parameter sweep.
#[derive(Debug, Clone, Copy)]
pub struct TrapSweepRow {
    pub freq_hz: f64,
    pub corner: CornerAssignment,
    pub s11: Complex64,
    pub s21: Complex64,
}

/// Trap S-parameters tabulated over frequency for a set of corners.
/// Rows are grouped by corner (one contiguous series per corner, in the
/// order requested), each sorted by frequency.
#[derive(Debug, Clone)]
pub struct TrapSweep {
    pub rows: Vec<TrapSweepRow>,
}

impl TrapSweep {
    /// Frequency of the |S21| minimum for one corner's series.
    pub fn min_s21_frequency(&self, corner: CornerAssignment) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.corner == corner)
            .min_by(|a, b| a.s21.norm().total_cmp(&b.s21.norm()))
            .map(|r| r.freq_hz)
    }

    /// CSV per the trap export interface; `comment_lines` go first, each
    /// prefixed with `# `.
    pub fn to_csv(&self, comment_lines: &[String]) -> String {
        let mut out = String::new();
        for line in comment_lines {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("freq_hz,corner,s21_re,s21_im,s21_db,s11_re,s11_im\n");
        for r in &self.rows {
            let s21_db = 20.0 * r.s21.norm().log10();
            out.push_str(&format!(
                "{:.8e},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
                r.freq_hz,
                r.corner.label(),
                r.s21.re,
                r.s21.im,
                s21_db,
                r.s11.re,
                r.s11.im
            ));
        }
        out
    }
}

/// Validate a frequency grid: non-empty, strictly increasing, positive.
pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Grid("frequency grid is empty".into()));
    }
    if grid[0] <= 0.0 {
        return Err(Error::Grid("frequencies must be positive".into()));
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Grid(format!(
                "grid not strictly increasing at {} Hz",
                w[1]
            )));
        }
    }
    Ok(())
}

/// Sweep the trap's series two-port over a frequency grid at each corner.
pub fn trap_s21_sweep(
    spec: &TrapSpec,
    grid: &[f64],
    corners: &[CornerAssignment],
    z0: ReferenceImpedance,
) -> Result<TrapSweep> {
    check_grid(grid)?;
    let mut rows = Vec::with_capacity(grid.len() * corners.len());
    for &corner in corners {
        let values = spec.values_at(corner);
        for &f in grid {
            let z = values.impedance(f)?;
            let (s11, s21) = series_element_sparams(z, z0);
            rows.push(TrapSweepRow {
                freq_hz: f,
                corner,
                s11,
                s21,
            });
        }
    }
    Ok(TrapSweep { rows })
}

// ---------------------------------------------------------------------------
// Catalogs and component selection
// ---------------------------------------------------------------------------

/// E24 mantissas (24 values per decade).
pub const E24: [f64; 24] = [
    1.0, 1.1, 1.2, 1.3, 1.5, 1.6, 1.8, 2.0, 2.2, 2.4, 2.7, 3.0, 3.3, 3.6, 3.9, 4.3, 4.7, 5.1,
    5.6, 6.2, 6.8, 7.5, 8.2, 9.1,
];

/// One orderable part: a value plus its tolerance class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogEntry {
    /// Value in SI units.
    pub value: f64,
    /// Absolute tolerance (SI units), or 0.
    pub tol_abs: f64,
    /// Relative tolerance (fraction), or 0.
    pub tol_rel: f64,
}

impl CatalogEntry {
    pub fn component(&self) -> Result<ComponentValue> {
        ComponentValue::new(self.value, self.tol_abs, self.tol_rel)
    }
}

/// A list of orderable parts of one kind (capacitors or inductors).
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
}

impl Catalog {
    /// Parse the plain-text catalog format: one `value,unit,tolerance` per
    /// line, e.g. `9.1,pF,0.05pF` or `6.8,nH,2%`.  `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected `value,unit,tolerance`, got `{line}`"),
                });
            }
            let value: f64 = parts[0].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad value `{}`", parts[0]),
            })?;
            let unit = parse_unit(parts[1]).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("unknown unit `{}`", parts[1]),
            })?;
            let tol = parts[2];
            let (tol_abs, tol_rel) = if let Some(pct) = tol.strip_suffix('%') {
                let r: f64 = pct.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad percentage `{tol}`"),
                })?;
                (0.0, r / 100.0)
            } else {
                // absolute tolerance carries its own unit suffix
                let split = tol
                    .find(|c: char| c.is_ascii_alphabetic())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: format!("tolerance `{tol}` needs a unit or `%`"),
                    })?;
                let (num, u) = tol.split_at(split);
                let t: f64 = num.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad tolerance value `{num}`"),
                })?;
                let scale = parse_unit(u.trim()).ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("unknown tolerance unit `{u}`"),
                })?;
                (t * scale, 0.0)
            };
            entries.push(CatalogEntry {
                value: value * unit,
                tol_abs,
                tol_rel,
            });
        }
        Ok(Self { entries })
    }

    /// E24 inductor catalog spanning `[lo, hi]` henries at a relative
    /// tolerance.
    pub fn e24_inductors(lo: f64, hi: f64, tol_rel: f64) -> Self {
        let entries = e24_values(lo, hi)
            .into_iter()
            .map(|value| CatalogEntry {
                value,
                tol_abs: 0.0,
                tol_rel,
            })
            .collect();
        Self { entries }
    }

    /// E24 capacitor catalog where values up to `tight_ceiling` are stocked
    /// in a tight absolute-tolerance class and larger values only at a loose
    /// relative tolerance.
    pub fn e24_capacitors(
        lo: f64,
        hi: f64,
        tight_ceiling: f64,
        tight_tol_abs: f64,
        loose_tol_rel: f64,
    ) -> Self {
        let entries = e24_values(lo, hi)
            .into_iter()
            .map(|value| {
                if value <= tight_ceiling * (1.0 + 1e-9) {
                    CatalogEntry {
                        value,
                        tol_abs: tight_tol_abs,
                        tol_rel: 0.0,
                    }
                } else {
                    CatalogEntry {
                        value,
                        tol_abs: 0.0,
                        tol_rel: loose_tol_rel,
                    }
                }
            })
            .collect();
        Self { entries }
    }
}

fn parse_unit(u: &str) -> Option<f64> {
    Some(match u {
        "F" => 1.0,
        "mF" => 1e-3,
        "uF" | "µF" => 1e-6,
        "nF" => 1e-9,
        "pF" => 1e-12,
        "H" => 1.0,
        "mH" => 1e-3,
        "uH" | "µH" => 1e-6,
        "nH" => 1e-9,
        _ => return None,
    })
}

fn e24_values(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut decade = 10f64.powi(lo.log10().floor() as i32);
    while decade <= hi {
        for m in E24 {
            let v = m * decade;
            if v >= lo * (1.0 - 1e-9) && v <= hi * (1.0 + 1e-9) {
                out.push(v);
            }
        }
        decade *= 10.0;
    }
    out
}

/// Capacitor catalog mirroring the readily-available stock the reference
/// design drew from: tight ±0.05 pF class up to 9.1 pF, ±5% above.
pub fn default_capacitor_catalog() -> Catalog {
    Catalog::e24_capacitors(1.0e-12, 33e-12, 9.1e-12, 0.05e-12, 0.05)
}

/// Inductor catalog: E24 values from 1 to 82 nH at ±2%.
pub fn default_inductor_catalog() -> Catalog {
    Catalog::e24_inductors(1.0e-9, 82e-9, 0.02)
}

/// Select trap components for a target resonance.
///
/// Procedure: take the largest capacitor available in the tight
/// (absolute-tolerance) class, so the fractional tolerance impact is
/// smallest; compute the required effective inductance
/// `1/((2π f0)² C)`; realize it as two equal parallel inductors of twice
/// that value each, snapped to the nearest catalog value in log space
/// (ties round up).
pub fn select_trap_components(
    target_f0_hz: f64,
    cap_catalog: &Catalog,
    ind_catalog: &Catalog,
) -> Result<TrapSpec> {
    if !(target_f0_hz > 0.0) {
        return Err(Error::domain("target resonance must be positive"));
    }
    if cap_catalog.entries.is_empty() {
        return Err(Error::Synthesis("capacitor catalog is empty".into()));
    }
    if ind_catalog.entries.is_empty() {
        return Err(Error::Synthesis("inductor catalog is empty".into()));
    }
    let cap = cap_catalog
        .entries
        .iter()
        .filter(|e| e.tol_abs > 0.0)
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| {
            Error::Synthesis("no tight-tolerance (absolute class) capacitor in catalog".into())
        })?;

    let w0 = 2.0 * std::f64::consts::PI * target_f0_hz;
    let l_eff = 1.0 / (w0 * w0 * cap.value);
    let per_inductor = 2.0 * l_eff;

    let mut values: Vec<&CatalogEntry> = ind_catalog.entries.iter().collect();
    values.sort_by(|a, b| a.value.total_cmp(&b.value));
    let min = values.first().unwrap().value;
    let max = values.last().unwrap().value;
    if per_inductor < min || per_inductor > max {
        return Err(Error::Synthesis(format!(
            "required per-inductor value {:.4} nH is outside the catalog range {:.4}..{:.4} nH",
            per_inductor * 1e9,
            min * 1e9,
            max * 1e9
        )));
    }
    let ind = snap_log_nearest(&values, per_inductor);

    TrapSpec::new(cap.component()?, ind.component()?, ind.component()?)
}

/// Nearest catalog entry in log space; exact midpoints round up.
fn snap_log_nearest<'a>(sorted: &[&'a CatalogEntry], target: f64) -> &'a CatalogEntry {
    debug_assert!(!sorted.is_empty());
    let mut hi_idx = sorted.len() - 1;
    for (i, e) in sorted.iter().enumerate() {
        if e.value >= target {
            hi_idx = i;
            break;
        }
    }
    if sorted[hi_idx].value == target || hi_idx == 0 {
        return sorted[hi_idx];
    }
    let lo = sorted[hi_idx - 1];
    let hi = sorted[hi_idx];
    let mid = (lo.value * hi.value).sqrt();
    if target >= mid {
        hi
    } else {
        lo
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_trap() -> TrapSpec {
        TrapSpec::new(
            ComponentValue::with_abs_tol(9.1e-12, 0.05e-12).unwrap(),
            ComponentValue::with_rel_tol(6.8e-9, 0.02).unwrap(),
            ComponentValue::with_rel_tol(6.8e-9, 0.02).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn parallel_inductance_equal_halves() {
        let l = parallel_inductance(6.8e-9, 6.8e-9).unwrap();
        assert_relative_eq!(l, 3.4e-9, max_relative = 1e-15);
    }

    #[test]
    fn parallel_inductance_is_symmetric_example() {
        let a = parallel_inductance(6.8e-9, 6.8e-9).unwrap();
        let b = parallel_inductance(6.8e-9, 6.8e-9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_inductance_unequal() {
        // 6.2·7.5/(6.2+7.5) nH, evaluated independently beforehand.
        let l = parallel_inductance(6.2e-9, 7.5e-9).unwrap();
        assert_relative_eq!(l, 3.3941605839416057e-9, max_relative = 1e-12);
    }

    #[test]
    fn parallel_inductance_rejects_nonpositive() {
        assert!(parallel_inductance(0.0, 1e-9).is_err());
        assert!(parallel_inductance(1e-9, -2e-9).is_err());
    }

    #[test]
    fn trap_impedance_dc_limit_is_inductive_short() {
        let spec = reference_trap();
        let z = trap_impedance(&spec, 1e3, CornerAssignment::NOMINAL).unwrap();
        assert!(z.norm() < 1e-3, "|Z| at 1 kHz should be tiny, got {}", z);
        assert!(z.im > 0.0);
    }

    #[test]
    fn trap_impedance_open_at_resonance() {
        let spec = reference_trap();
        let f0 = trap_resonance(&spec, CornerAssignment::NOMINAL);
        let z = trap_impedance(&spec, f0, CornerAssignment::NOMINAL).unwrap();
        assert!(
            z.norm() >= OPEN_CIRCUIT_CLAMP_OHMS * 0.99,
            "expected clamped open circuit, got {z}"
        );
        assert!(z.re.abs() < 1e-9 * z.norm());
    }

    #[test]
    fn trap_impedance_at_915_mhz() {
        // jωL_eff/(1−ω²L_eff·C) evaluated independently beforehand:
        // −j863.4315741507697 Ω.
        let spec = reference_trap();
        let z = trap_impedance(&spec, 915e6, CornerAssignment::NOMINAL).unwrap();
        assert!(z.re.abs() < 1e-9 * z.norm());
        assert_relative_eq!(z.im, -863.4315741507697, max_relative = 1e-9);
    }

    #[test]
    fn trap_resonance_nominal() {
        let spec = reference_trap();
        let f0 = trap_resonance(&spec, CornerAssignment::NOMINAL);
        assert_relative_eq!(f0, 904_815_385.9738665, max_relative = 1e-12);
    }

    #[test]
    fn trap_resonance_upper_corner() {
        let spec = reference_trap();
        let f0 = trap_resonance(&spec, CornerAssignment::new(1, 1).unwrap());
        assert_relative_eq!(f0, 893_449_561.8846838, max_relative = 1e-12);
    }

    #[test]
    fn trap_resonance_quadrupled_l_halves_f0() {
        let spec = reference_trap();
        let big = TrapSpec::new(
            spec.cap,
            ComponentValue::with_rel_tol(4.0 * 6.8e-9, 0.02).unwrap(),
            ComponentValue::with_rel_tol(4.0 * 6.8e-9, 0.02).unwrap(),
        )
        .unwrap();
        let f0 = trap_resonance(&spec, CornerAssignment::NOMINAL);
        let f0_big = trap_resonance(&big, CornerAssignment::NOMINAL);
        assert_relative_eq!(f0_big, f0 / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn sensitivity_is_minus_half() {
        let s = resonance_sensitivity(&reference_trap());
        assert_eq!(s.per_unit_l, -0.5);
        assert_eq!(s.per_unit_c, -0.5);
    }

    #[test]
    fn sensitivity_worst_shift_reference_values() {
        // ½·(0.02 + 0.05/9.1) evaluated independently beforehand.
        let s = resonance_sensitivity(&reference_trap());
        assert_relative_eq!(
            s.worst_fractional_shift,
            0.012747252747252748,
            max_relative = 1e-12
        );
    }

    #[test]
    fn sensitivity_zero_tolerance() {
        let spec = TrapSpec::new(
            ComponentValue::exact(9.1e-12).unwrap(),
            ComponentValue::exact(6.8e-9).unwrap(),
            ComponentValue::exact(6.8e-9).unwrap(),
        )
        .unwrap();
        assert_eq!(resonance_sensitivity(&spec).worst_fractional_shift, 0.0);
    }

    #[test]
    fn corner_shift_matches_first_order_formula() {
        // Acceptance tolerance: 0.05 percentage points.
        let spec = reference_trap();
        let f0 = trap_resonance(&spec, CornerAssignment::NOMINAL);
        for corner in CornerAssignment::extremes() {
            let fc = trap_resonance(&spec, corner);
            let dl = corner.delta_l as f64 * 0.02;
            let dc = corner.delta_c as f64 * 0.05 / 9.1;
            let first_order = -0.5 * (dl + dc);
            let actual = fc / f0 - 1.0;
            assert!(
                (actual - first_order).abs() <= 5e-4,
                "corner {:?}: actual {actual:.6}, first-order {first_order:.6}",
                corner
            );
        }
    }

    #[test]
    fn sparams_through_connection() {
        let (s11, s21) =
            series_element_sparams(Complex64::new(0.0, 0.0), ReferenceImpedance::default());
        assert_eq!(s11, Complex64::new(0.0, 0.0));
        assert_eq!(s21, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn sparams_open_circuit() {
        let (s11, s21) = series_element_sparams(
            Complex64::new(0.0, OPEN_CIRCUIT_CLAMP_OHMS),
            ReferenceImpedance::default(),
        );
        assert!(s21.norm() < 1e-6);
        assert!((s11.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sparams_hundred_ohms() {
        let (s11, s21) =
            series_element_sparams(Complex64::new(100.0, 0.0), ReferenceImpedance::default());
        assert_relative_eq!(s11.re, 0.5, max_relative = 1e-15);
        assert_relative_eq!(s21.re, 0.5, max_relative = 1e-15);
        assert_eq!(s11.im, 0.0);
        assert_eq!(s21.im, 0.0);
    }

    fn mhz_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| (lo + i as f64 * step) * 1e6).collect()
    }

    #[test]
    fn sweep_minimum_tracks_nominal_resonance() {
        let spec = reference_trap();
        let grid = mhz_grid(850.0, 950.0, 0.25);
        let sweep = trap_s21_sweep(
            &spec,
            &grid,
            &[CornerAssignment::NOMINAL],
            ReferenceImpedance::default(),
        )
        .unwrap();
        let fmin = sweep.min_s21_frequency(CornerAssignment::NOMINAL).unwrap();
        assert!(
            (fmin - 904.75e6).abs() < 1e3,
            "expected minimum at 904.75 MHz grid point, got {fmin}"
        );
    }

    #[test]
    fn sweep_minimum_tracks_corner_resonance() {
        let spec = reference_trap();
        let grid = mhz_grid(850.0, 950.0, 0.25);
        let corner = CornerAssignment::new(1, 1).unwrap();
        let sweep =
            trap_s21_sweep(&spec, &grid, &[corner], ReferenceImpedance::default()).unwrap();
        let fmin = sweep.min_s21_frequency(corner).unwrap();
        assert!(
            (fmin - 893.4495618846838e6).abs() <= 0.25e6,
            "corner minimum at {fmin}"
        );
    }

    #[test]
    fn sweep_corner_minima_shift_in_opposite_directions() {
        let spec = reference_trap();
        let grid = mhz_grid(850.0, 950.0, 0.25);
        let up = CornerAssignment::new(1, 1).unwrap();
        let down = CornerAssignment::new(-1, -1).unwrap();
        let sweep = trap_s21_sweep(
            &spec,
            &grid,
            &[CornerAssignment::NOMINAL, up, down],
            ReferenceImpedance::default(),
        )
        .unwrap();
        let nominal = sweep.min_s21_frequency(CornerAssignment::NOMINAL).unwrap();
        assert!(sweep.min_s21_frequency(up).unwrap() < nominal);
        assert!(sweep.min_s21_frequency(down).unwrap() > nominal);
    }

    #[test]
    fn sweep_single_point_at_resonance() {
        let spec = reference_trap();
        let f0 = trap_resonance(&spec, CornerAssignment::NOMINAL);
        let sweep = trap_s21_sweep(
            &spec,
            &[f0],
            &[CornerAssignment::NOMINAL],
            ReferenceImpedance::default(),
        )
        .unwrap();
        assert_eq!(sweep.rows.len(), 1);
        assert!(sweep.rows[0].s21.norm() < 1e-6);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let spec = reference_trap();
        let corners = [CornerAssignment::NOMINAL];
        let z0 = ReferenceImpedance::default();
        assert!(trap_s21_sweep(&spec, &[], &corners, z0).is_err());
        assert!(trap_s21_sweep(&spec, &[2e6, 1e6], &corners, z0).is_err());
        assert!(trap_s21_sweep(&spec, &[-1e6, 1e6], &corners, z0).is_err());
    }

    #[test]
    fn lossless_unitarity_over_sweep_grid() {
        let spec = reference_trap();
        let grid = mhz_grid(850.0, 950.0, 0.25);
        let sweep = trap_s21_sweep(
            &spec,
            &grid,
            &CornerAssignment::canonical_set(),
            ReferenceImpedance::default(),
        )
        .unwrap();
        for r in &sweep.rows {
            let sum = r.s11.norm_sqr() + r.s21.norm_sqr();
            assert!(
                (sum - 1.0).abs() <= 1e-12,
                "unitarity violated at {} Hz: {sum}",
                r.freq_hz
            );
        }
    }

    #[test]
    fn monte_carlo_resonances_stay_inside_corner_envelope() {
        let spec = reference_trap();
        let lo = trap_resonance(&spec, CornerAssignment::new(1, 1).unwrap());
        let hi = trap_resonance(&spec, CornerAssignment::new(-1, -1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let f0 = spec.sample_uniform(&mut rng).resonance_hz();
            assert!(
                f0 >= lo - 1.0 && f0 <= hi + 1.0,
                "sample resonance {f0} outside corner envelope [{lo}, {hi}]"
            );
        }
    }

    #[test]
    fn catalog_parse_roundtrip() {
        let cat = Catalog::parse("9.1,pF,0.05pF\n6.8,nH,2%\n# comment\n\n1.0,nH,2%\n").unwrap();
        assert_eq!(cat.entries.len(), 3);
        assert_relative_eq!(cat.entries[0].value, 9.1e-12, max_relative = 1e-12);
        assert_relative_eq!(cat.entries[0].tol_abs, 0.05e-12, max_relative = 1e-12);
        assert_eq!(cat.entries[1].tol_rel, 0.02);
    }

    #[test]
    fn catalog_parse_errors_name_the_line() {
        let err = Catalog::parse("9.1,pF,0.05pF\nbogus line\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn select_components_reference_design() {
        let spec = select_trap_components(
            915e6,
            &default_capacitor_catalog(),
            &default_inductor_catalog(),
        )
        .unwrap();
        assert_relative_eq!(spec.cap.nominal, 9.1e-12, max_relative = 1e-9);
        assert_relative_eq!(spec.ind1.nominal, 6.8e-9, max_relative = 1e-9);
        assert_relative_eq!(spec.ind2.nominal, 6.8e-9, max_relative = 1e-9);
        assert_eq!(spec.cap.tol_abs, 0.05e-12);
        assert_eq!(spec.ind1.tol_rel, 0.02);
    }

    #[test]
    fn select_components_required_l_eff() {
        // 1/((2π·915 MHz)²·9.1 pF) evaluated independently beforehand.
        let w0 = 2.0 * std::f64::consts::PI * 915e6;
        let l_eff = 1.0 / (w0 * w0 * 9.1e-12);
        assert_relative_eq!(l_eff, 3.3247323015475237e-9, max_relative = 1e-12);
        // Half the target (457.5 MHz) needs four times the inductance.
        let w1 = w0 / 2.0;
        let l_eff_half = 1.0 / (w1 * w1 * 9.1e-12);
        assert_relative_eq!(l_eff_half, 4.0 * l_eff, max_relative = 1e-12);
        assert_relative_eq!(l_eff_half, 1.3298929206190095e-8, max_relative = 1e-12);
    }

    #[test]
    fn select_components_exact_value_snaps_identity() {
        // Target chosen so the required per-inductor value is exactly 6.8 nH.
        let c: f64 = 9.1e-12;
        let target = 1.0 / (2.0 * std::f64::consts::PI * (3.4e-9 * c).sqrt());
        let spec = select_trap_components(
            target,
            &default_capacitor_catalog(),
            &default_inductor_catalog(),
        )
        .unwrap();
        assert_relative_eq!(spec.ind1.nominal, 6.8e-9, max_relative = 1e-9);
    }

    #[test]
    fn select_components_out_of_range_names_gap() {
        let caps = default_capacitor_catalog();
        let inds = default_inductor_catalog();
        // 50 MHz needs ~1.1 µH per inductor: far outside 1–82 nH.
        let err = select_trap_components(50e6, &caps, &inds).unwrap_err();
        match err {
            Error::Synthesis(msg) => assert!(msg.contains("outside"), "{msg}"),
            other => panic!("expected synthesis error, got {other}"),
        }
    }

    #[test]
    fn select_components_empty_catalog() {
        let empty = Catalog::default();
        assert!(select_trap_components(915e6, &empty, &default_inductor_catalog()).is_err());
        assert!(select_trap_components(915e6, &default_capacitor_catalog(), &empty).is_err());
    }

    proptest! {
        #[test]
        fn parallel_inductance_symmetric_and_bounded(
            a in 1e-12f64..1e-3,
            b in 1e-12f64..1e-3,
        ) {
            let ab = parallel_inductance(a, b).unwrap();
            let ba = parallel_inductance(b, a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab <= a.min(b));
            prop_assert!(ab > 0.0);
        }

        #[test]
        fn ideal_trap_impedance_is_reactive(f_mhz in 1.0f64..3000.0) {
            let spec = reference_trap();
            let z = trap_impedance(&spec, f_mhz * 1e6, CornerAssignment::NOMINAL).unwrap();
            prop_assert!(z.re.abs() < 1e-9 * z.norm().max(1e-30));
        }

        #[test]
        fn lossless_unitarity_pointwise(f_mhz in 1.0f64..3000.0) {
            let spec = reference_trap();
            let z = trap_impedance(&spec, f_mhz * 1e6, CornerAssignment::NOMINAL).unwrap();
            let (s11, s21) = series_element_sparams(z, ReferenceImpedance::default());
            prop_assert!((s11.norm_sqr() + s21.norm_sqr() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn resonance_decreasing_in_l_and_c(
            scale_l in 1.001f64..2.0,
            scale_c in 1.001f64..2.0,
        ) {
            let base = TrapValues {
                cap: 9.1e-12, ind1: 6.8e-9, ind2: 6.8e-9,
                r_series_ind: 0.0, r_series_cap: 0.0,
            };
            let up_l = TrapValues { ind1: base.ind1 * scale_l, ind2: base.ind2 * scale_l, ..base };
            let up_c = TrapValues { cap: base.cap * scale_c, ..base };
            prop_assert!(up_l.resonance_hz() < base.resonance_hz());
            prop_assert!(up_c.resonance_hz() < base.resonance_hz());
        }
    }
}
