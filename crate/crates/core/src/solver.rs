//! Thin-wire method-of-moments solver.
//!
//! Electric-field integral equation with the reduced (thin-wire) kernel,
//! overlapping triangular basis functions on interior nodes, and Galerkin
//! testing, which makes the impedance matrix symmetric.  Self and near
//! terms are handled by extracting the 1/R singularity and integrating it
//! in closed form; the smooth remainder uses fixed-order Gauss quadrature.
//! Ground planes in image mode contribute mirrored source legs with negated
//! amplitudes.
//!
//! The solve path is: [`assemble_impedance_matrix`] →
//! [`apply_lumped_loads`] → [`solve_drive`]; [`frequency_sweep`] runs that
//! pipeline per grid point (in parallel, with order-independent results).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::circuit::{self, CornerAssignment, ReferenceImpedance, TrapSpec, TrapValues};
use crate::error::{Error, Result};
use crate::geometry::{GroundMode, Load, NodeIndex, SegmentMesh};
use crate::quadrature::gauss_legendre_unit;
use crate::{C0, ETA0};

/// Condition-estimate ceiling beyond which a solve is refused.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Default Gauss order for the pairwise segment integrals.
pub const DEFAULT_GAUSS_ORDER: usize = 8;

// ---------------------------------------------------------------------------
// Basis functions
// ---------------------------------------------------------------------------

/// One straight piece of a basis function, expressed in the owning
/// segment's canonical orientation: the (signed) current along the segment
/// direction is `a0 + (a1 - a0)·ξ` for ξ ∈ [0, 1].
#[derive(Debug, Clone, Copy)]
pub(crate) struct Leg {
    pub segment: usize,
    pub a0: f64,
    pub a1: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Basis {
    pub legs: Vec<Leg>,
}

/// The basis functions of a mesh, plus the feed and load attachments
/// resolved to basis indices.  Construction is deterministic.
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub(crate) bases: Vec<Basis>,
    pub feed_basis: usize,
    /// (basis index, mesh segment key, load).
    pub(crate) loads: Vec<(usize, usize, Load)>,
    pub(crate) image: bool,
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    /// Build the basis set for a mesh.
    ///
    /// Interior nodes of degree K get K−1 overlapping triangles over
    /// consecutive attached segments; open ends get none (the current
    /// vanishes there).  In image mode a node on the ground plane gets a
    /// half-triangle whose descending half is supplied by its own image.
    pub fn for_mesh(mesh: &SegmentMesh) -> Result<Self> {
        let nodes = NodeIndex::build(mesh);
        let image = mesh.ground == GroundMode::Image;
        let mut bases: Vec<Basis> = Vec::new();
        // Bases whose peak sits at each node.
        let mut peak_at: Vec<Vec<usize>> = vec![Vec::new(); nodes.coords.len()];

        for node in 0..nodes.coords.len() {
            let mut segs = nodes.segments_at[node].clone();
            segs.sort_unstable();
            let on_ground = nodes.coords[node][2].abs() < 1e-9;
            if image && on_ground {
                if segs.len() != 1 {
                    return Err(Error::domain(format!(
                        "ground attachment node at {:?} joins {} segments; expected exactly 1",
                        nodes.coords[node],
                        segs.len()
                    )));
                }
                bases.push(Basis {
                    legs: vec![leg_away_from(node, segs[0], &nodes)],
                });
                peak_at[node].push(bases.len() - 1);
                continue;
            }
            if segs.len() < 2 {
                continue;
            }
            for pair in segs.windows(2) {
                bases.push(Basis {
                    legs: vec![
                        leg_into(node, pair[0], &nodes),
                        leg_away_from(node, pair[1], &nodes),
                    ],
                });
                peak_at[node].push(bases.len() - 1);
            }
        }
        if bases.is_empty() {
            return Err(Error::domain("mesh supports no basis functions"));
        }

        let feed_node = nodes
            .node_at(mesh.feed_node())
            .ok_or_else(|| Error::domain("feed node not found"))?;
        let feed_basis = match peak_at[feed_node].as_slice() {
            [b] => *b,
            [] => {
                return Err(Error::domain(
                    "feed attaches at an open end with no basis function",
                ))
            }
            _ => {
                return Err(Error::domain(
                    "feed attaches at a junction; the delta gap needs a simple node",
                ))
            }
        };

        let mut loads = Vec::new();
        for (&seg, load) in &mesh.loads {
            if seg >= mesh.segments.len() {
                return Err(Error::domain(format!("load segment {seg} out of range")));
            }
            let node = nodes
                .node_at(mesh.segments[seg].end)
                .ok_or_else(|| Error::domain("load node not found"))?;
            let basis = match peak_at[node].as_slice() {
                [b] => *b,
                _ => {
                    return Err(Error::domain(format!(
                        "load on segment {seg} must sit at a simple two-segment node"
                    )))
                }
            };
            if basis == feed_basis {
                return Err(Error::LoadOnFeed { segment: seg });
            }
            loads.push((basis, seg, load.clone()));
        }

        Ok(Self {
            bases,
            feed_basis,
            loads,
            image,
        })
    }

    /// Signed current along each segment's canonical direction at its
    /// midpoint, for the given basis coefficients.
    pub(crate) fn segment_midpoint_currents(
        &self,
        n_segments: usize,
        coeffs: &[Complex64],
    ) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n_segments];
        for (b, basis) in self.bases.iter().enumerate() {
            for leg in &basis.legs {
                let w_mid = leg.a0 + 0.5 * (leg.a1 - leg.a0);
                out[leg.segment] += coeffs[b] * w_mid;
            }
        }
        out
    }
}

/// Leg of the triangle that rises toward `node` along segment `seg`.
fn leg_into(node: usize, seg: usize, nodes: &NodeIndex) -> Leg {
    let (start, _end) = nodes.endpoints[seg];
    if start == node {
        // Node at segment start; current toward the node flows against the
        // segment direction.
        Leg {
            segment: seg,
            a0: -1.0,
            a1: 0.0,
        }
    } else {
        Leg {
            segment: seg,
            a0: 0.0,
            a1: 1.0,
        }
    }
}

/// Leg of the triangle that falls away from `node` along segment `seg`.
fn leg_away_from(node: usize, seg: usize, nodes: &NodeIndex) -> Leg {
    let (start, _end) = nodes.endpoints[seg];
    if start == node {
        Leg {
            segment: seg,
            a0: 1.0,
            a1: 0.0,
        }
    } else {
        Leg {
            segment: seg,
            a0: 0.0,
            a1: -1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Matrix assembly
// ---------------------------------------------------------------------------

/// Dense Galerkin impedance matrix at one frequency.
#[derive(Debug, Clone)]
pub struct ImpedanceMatrix {
    pub f_hz: f64,
    entries: DMatrix<Complex64>,
}

impl ImpedanceMatrix {
    pub fn order(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, m: usize, n: usize) -> Complex64 {
        self.entries[(m, n)]
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }
}

/// Outer (test-side) quadrature rule for one segment pair.
///
/// The inner integral is analytic in its singular part, but as a function
/// of the test point it still varies sharply near the closest approach to
/// the source.  Plain Gauss there limits both accuracy and the Z_mn = Z_nm
/// agreement, so the test span is split at the closest-approach parameter
/// with cubic node clustering toward it; the self term clusters toward
/// both of its own ends instead.
fn outer_rule(
    p: (&[f64; 3], &[f64; 3], f64),
    q: (&[f64; 3], &[f64; 3], f64),
    self_term: bool,
    gx: &[f64],
    gw: &[f64],
) -> Vec<(f64, f64)> {
    // sinh transformation: with the near-feature at parameter ξ* and
    // transverse scale c, substituting ξ = ξ* + c·sinh(u) makes the
    // rounded-log integrand polynomially smooth in u.
    let mut rule = Vec::with_capacity(4 * gx.len());
    let lp = crate::geometry::dist(*p.0, *p.1);
    if self_term {
        let c = (0.5 * (p.2 * p.2 + q.2 * q.2)).sqrt() / lp;
        let u_max = (0.5 / c).asinh();
        for (u0, u1) in [(0.0, 0.5 * u_max), (0.5 * u_max, u_max)] {
            for (&t, &w) in gx.iter().zip(gw) {
                let u = u0 + t * (u1 - u0);
                let xi = c * u.sinh();
                let jac = w * (u1 - u0) * c * u.cosh();
                rule.push((xi, jac));
                rule.push((1.0 - xi, jac));
            }
        }
        return rule;
    }
    let (s_star, _, _) = crate::geometry::segment_closest_points(
        &crate::geometry::Segment {
            start: *p.0,
            end: *p.1,
            radius: p.2,
        },
        &crate::geometry::Segment {
            start: *q.0,
            end: *q.1,
            radius: q.2,
        },
    );
    // Transverse scale at the closest approach, in test-parameter units.
    let d = [q.1[0] - q.0[0], q.1[1] - q.0[1], q.1[2] - q.0[2]];
    let lq = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let dh = [d[0] / lq, d[1] / lq, d[2] / lq];
    let a_eff2 = 0.5 * (p.2 * p.2 + q.2 * q.2);
    let (_, b_min) = source_frame(p.0, p.1, q.0, &dh, a_eff2, s_star);
    let c = b_min / lp;

    let mut panels: Vec<(f64, f64)> = Vec::with_capacity(2);
    if s_star > 1e-9 {
        panels.push((-(s_star / c).asinh(), 0.0));
    }
    if s_star < 1.0 - 1e-9 {
        panels.push((0.0, ((1.0 - s_star) / c).asinh()));
    }
    if panels.len() == 1 {
        // Single-sided: split the u-range for resolution.
        let (u0, u1) = panels[0];
        let um = 0.5 * (u0 + u1);
        panels = vec![(u0, um), (um, u1)];
    }
    for (u0, u1) in panels {
        for (&t, &w) in gx.iter().zip(gw) {
            let u = u0 + t * (u1 - u0);
            let xi = s_star + c * u.sinh();
            rule.push((xi.clamp(0.0, 1.0), w * (u1 - u0) * c * u.cosh()));
        }
    }
    rule
}

/// Pairwise ξ-space kernel moments between a test segment and a source
/// segment: `M[a|b] = ∫∫ ξ^a ξ'^b ψ(R) dξ dξ'` with
/// `ψ(R) = exp(−jkR)/R`, `R² = |x−y|² + (r_p²+r_q²)/2`.
fn pair_moments(
    p: (&[f64; 3], &[f64; 3], f64),
    q: (&[f64; 3], &[f64; 3], f64),
    self_term: bool,
    k: f64,
    gx: &[f64],
    gw: &[f64],
) -> [Complex64; 4] {
    let (p0, p1, rp) = p;
    let (q0, q1, rq) = q;
    let a_eff2 = 0.5 * (rp * rp + rq * rq);
    let d = [q1[0] - q0[0], q1[1] - q0[1], q1[2] - q0[2]];
    let lq = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let dh = [d[0] / lq, d[1] / lq, d[2] / lq];

    let mut m = [Complex64::new(0.0, 0.0); 4];

    // Pass 1 — static extracted parts ∫(1/R − k²R/2) dξ', closed form in
    // the source variable, log-like in the test variable: graded outer rule.
    let rule = outer_rule(p, q, self_term, gx, gw);
    for &(xi, wi) in &rule {
        let (u, b) = source_frame(p0, p1, q0, &dh, a_eff2, xi);
        let ra = (u * u + b * b).sqrt();
        let rb = ((lq - u) * (lq - u) + b * b).sqrt();
        let asinh_diff = ((lq - u) / b).asinh() - (-u / b).asinh();
        let s0 = asinh_diff / lq;
        let s1 = (rb - ra + u * asinh_diff) / (lq * lq);
        let half = 0.5 * ((lq - u) * rb + u * ra + b * b * asinh_diff);
        let r0 = half / lq;
        let r1 = ((rb * rb * rb - ra * ra * ra) / 3.0 + u * half) / (lq * lq);

        let i0 = s0 - 0.5 * k * k * r0;
        let i1 = s1 - 0.5 * k * k * r1;
        m[0] += Complex64::new(wi * i0, 0.0);
        m[1] += Complex64::new(wi * i1, 0.0);
        m[2] += Complex64::new(wi * xi * i0, 0.0);
        m[3] += Complex64::new(wi * xi * i1, 0.0);
    }

    // Pass 2 — smooth remainder (exp(−jkR) − 1 + (kR)²/2)/R, an O(1)
    // function with O(R³) roughness only: plain Gauss on both sides.
    for (i, &xi) in gx.iter().enumerate() {
        let (u, b) = source_frame(p0, p1, q0, &dh, a_eff2, xi);
        let mut d0 = Complex64::new(0.0, 0.0);
        let mut d1 = Complex64::new(0.0, 0.0);
        for (j, &xj) in gx.iter().enumerate() {
            let mq = lq * xj;
            let r = ((mq - u) * (mq - u) + b * b).sqrt();
            let kr = k * r;
            let f = if kr < 0.1 {
                // −jk + jk³R²/6 + k⁴R³/24 − jk⁵R⁴/120 − k⁶R⁵/720
                let kr2 = kr * kr;
                Complex64::new(
                    k * (kr * kr2 / 24.0 - kr * kr2 * kr2 / 720.0),
                    k * (-1.0 + kr2 / 6.0 - kr2 * kr2 / 120.0),
                )
            } else {
                Complex64::new((kr.cos() - 1.0 + 0.5 * kr * kr) / r, -kr.sin() / r)
            };
            d0 += gw[j] * f;
            d1 += gw[j] * xj * f;
        }
        let wi = gw[i];
        m[0] += wi * d0;
        m[1] += wi * d1;
        m[2] += wi * xi * d0;
        m[3] += wi * xi * d1;
    }
    m
}

/// Projection of the test point at parameter `xi` onto the source axis:
/// (axial coordinate u, effective transverse distance b).
fn source_frame(
    p0: &[f64; 3],
    p1: &[f64; 3],
    q0: &[f64; 3],
    dh: &[f64; 3],
    a_eff2: f64,
    xi: f64,
) -> (f64, f64) {
    let x = [
        p0[0] + (p1[0] - p0[0]) * xi,
        p0[1] + (p1[1] - p0[1]) * xi,
        p0[2] + (p1[2] - p0[2]) * xi,
    ];
    let r0v = [x[0] - q0[0], x[1] - q0[1], x[2] - q0[2]];
    let u = r0v[0] * dh[0] + r0v[1] * dh[1] + r0v[2] * dh[2];
    let perp2 = (r0v[0] * r0v[0] + r0v[1] * r0v[1] + r0v[2] * r0v[2] - u * u).max(0.0);
    (u, (perp2 + a_eff2).sqrt())
}

fn mirror(p: &[f64; 3]) -> [f64; 3] {
    [p[0], p[1], -p[2]]
}

/// All pairwise moments of the mesh at wavenumber `k`, cached per ordered
/// (test, source) segment pair; `image` adds the mirrored-source table.
struct MomentTable {
    n: usize,
    real: Vec<[Complex64; 4]>,
    image: Option<Vec<[Complex64; 4]>>,
    /// Segment geometry snapshots: (start, end, radius, length, direction).
    segs: Vec<([f64; 3], [f64; 3], f64, f64, [f64; 3])>,
}

impl MomentTable {
    fn build(mesh: &SegmentMesh, k: f64, gauss_order: usize, image: bool) -> Self {
        let (gx, gw) = gauss_legendre_unit(gauss_order);
        let segs: Vec<_> = mesh
            .segments
            .iter()
            .map(|s| {
                let len = s.length();
                (s.start, s.end, s.radius, len, s.direction())
            })
            .collect();
        let n = segs.len();
        let mut real = vec![[Complex64::new(0.0, 0.0); 4]; n * n];
        for p in 0..n {
            for q in 0..n {
                real[p * n + q] = pair_moments(
                    (&segs[p].0, &segs[p].1, segs[p].2),
                    (&segs[q].0, &segs[q].1, segs[q].2),
                    p == q,
                    k,
                    &gx,
                    &gw,
                );
            }
        }
        let image_tbl = image.then(|| {
            let mut tbl = vec![[Complex64::new(0.0, 0.0); 4]; n * n];
            for p in 0..n {
                for q in 0..n {
                    let q0 = mirror(&segs[q].0);
                    let q1 = mirror(&segs[q].1);
                    tbl[p * n + q] = pair_moments(
                        (&segs[p].0, &segs[p].1, segs[p].2),
                        (&q0, &q1, segs[q].2),
                        false,
                        k,
                        &gx,
                        &gw,
                    );
                }
            }
            tbl
        });
        Self {
            n,
            real,
            image: image_tbl,
            segs,
        }
    }

    /// Galerkin interaction of two legs through the cached moments.
    fn leg_pair(&self, test: &Leg, src: &Leg, k: f64) -> Complex64 {
        let (sp, sq) = (test.segment, src.segment);
        let (.., lp, tp) = &self.segs[sp];
        let (.., lq, tq) = &self.segs[sq];
        let c0m = test.a0;
        let c1m = test.a1 - test.a0;
        let c0n = src.a0;
        let c1n = src.a1 - src.a0;

        let assemble = |m: &[Complex64; 4], tq: [f64; 3], sign: f64| -> Complex64 {
            let tdot = tp[0] * tq[0] + tp[1] * tq[1] + tp[2] * tq[2];
            let vector = k
                * tdot
                * lp
                * lq
                * (c0m * c0n * m[0] + c0m * c1n * m[1] + c1m * c0n * m[2] + c1m * c1n * m[3]);
            let charge = (c1m * c1n) * m[0] / k;
            sign * (vector - charge)
        };

        let mut z = assemble(&self.real[sp * self.n + sq], *tq, 1.0);
        if let Some(img) = &self.image {
            // Mirrored source: geometry reflected, amplitudes negated.
            let tq_img = [tq[0], tq[1], -tq[2]];
            z += assemble(&img[sp * self.n + sq], tq_img, -1.0);
        }
        z
    }
}

/// Assemble the Galerkin EFIE impedance matrix for a mesh at `f_hz`,
/// with the default Gauss order.
pub fn assemble_impedance_matrix(mesh: &SegmentMesh, f_hz: f64) -> Result<ImpedanceMatrix> {
    assemble_impedance_matrix_with_order(mesh, f_hz, DEFAULT_GAUSS_ORDER)
}

/// Assembly with an explicit quadrature order.
pub fn assemble_impedance_matrix_with_order(
    mesh: &SegmentMesh,
    f_hz: f64,
    gauss_order: usize,
) -> Result<ImpedanceMatrix> {
    if !(f_hz > 0.0) || !f_hz.is_finite() {
        return Err(Error::domain(format!(
            "frequency must be positive, got {f_hz}"
        )));
    }
    let diag = crate::geometry::validate_mesh(mesh, f_hz);
    if !diag.all_passed() {
        return Err(Error::MeshInvalid(diag.summary()));
    }
    let basis = BasisSet::for_mesh(mesh)?;
    Ok(assemble_for_basis(mesh, &basis, f_hz, gauss_order))
}

fn assemble_for_basis(
    mesh: &SegmentMesh,
    basis: &BasisSet,
    f_hz: f64,
    gauss_order: usize,
) -> ImpedanceMatrix {
    let k = 2.0 * std::f64::consts::PI * f_hz / (C0 * mesh.length_scale);
    let eta = ETA0 * mesh.length_scale;
    let table = MomentTable::build(mesh, k, gauss_order, basis.image);
    let n = basis.len();
    let prefactor = Complex64::new(0.0, eta / (4.0 * std::f64::consts::PI));

    let mut entries = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for m in 0..n {
        for nn in 0..n {
            let mut z = Complex64::new(0.0, 0.0);
            for lt in &basis.bases[m].legs {
                for ls in &basis.bases[nn].legs {
                    z += table.leg_pair(lt, ls, k);
                }
            }
            entries[(m, nn)] = prefactor * z;
        }
    }
    ImpedanceMatrix { f_hz, entries }
}

// ---------------------------------------------------------------------------
// Loads
// ---------------------------------------------------------------------------

/// Add lumped loads to the matrix diagonal with trap components shifted to
/// the given tolerance corner.  Off-diagonal entries are untouched.
pub fn apply_lumped_loads(
    matrix: &ImpedanceMatrix,
    mesh: &SegmentMesh,
    f_hz: f64,
    corner: CornerAssignment,
) -> Result<ImpedanceMatrix> {
    apply_lumped_loads_resolved(matrix, mesh, f_hz, &|t: &TrapSpec| t.values_at(corner))
}

/// Load application with an arbitrary trap-value resolver (used by the
/// Monte Carlo analysis to inject sampled component values).
pub fn apply_lumped_loads_resolved(
    matrix: &ImpedanceMatrix,
    mesh: &SegmentMesh,
    f_hz: f64,
    resolve: &dyn Fn(&TrapSpec) -> TrapValues,
) -> Result<ImpedanceMatrix> {
    let basis = BasisSet::for_mesh(mesh)?;
    if basis.len() != matrix.order() {
        return Err(Error::MeshMismatch(format!(
            "matrix order {} does not match the mesh's {} basis functions",
            matrix.order(),
            basis.len()
        )));
    }
    let mut out = matrix.clone();
    for (b, _seg, load) in &basis.loads {
        let z = load_impedance(load, f_hz, resolve)?;
        out.entries[(*b, *b)] += z;
    }
    Ok(out)
}

fn load_impedance(
    load: &Load,
    f_hz: f64,
    resolve: &dyn Fn(&TrapSpec) -> TrapValues,
) -> Result<Complex64> {
    match load {
        Load::Trap(spec) => resolve(spec).impedance(f_hz),
        Load::Fixed(z) => Ok(*z),
    }
}

// ---------------------------------------------------------------------------
// Solve
// ---------------------------------------------------------------------------

/// Per-frequency drive solution.
#[derive(Debug, Clone)]
pub struct DriveResult {
    pub f_hz: f64,
    /// Input impedance at the delta gap, ohms.
    pub z_in: Complex64,
    /// Reflection coefficient against the reference impedance.
    pub s11: Complex64,
    /// Basis-function current coefficients, amperes.
    pub currents: Vec<Complex64>,
    /// Power accepted at the feed, watts.
    pub p_in: f64,
    /// Power dissipated in lumped loads, watts.
    pub p_load_loss: f64,
}

impl DriveResult {
    /// S11 in dB (negative; "under −10 dB" means |s11| ≤ 0.316).
    pub fn return_loss_db(&self) -> f64 {
        20.0 * self.s11.norm().log10()
    }
}

/// Solve the loaded system with a delta-gap drive of `v_feed` volts on the
/// feed basis.  `loads` lists (basis index, impedance) pairs used for the
/// dissipation bookkeeping; pass an empty slice when none apply.
pub fn solve_drive(
    matrix: &ImpedanceMatrix,
    feed: usize,
    v_feed: f64,
    z0: ReferenceImpedance,
    loads: &[(usize, Complex64)],
) -> Result<DriveResult> {
    let n = matrix.order();
    if feed >= n {
        return Err(Error::domain(format!(
            "feed basis {feed} out of range for order {n}"
        )));
    }
    let lu = matrix.entries.clone().lu();
    let norm1 = one_norm(&matrix.entries);
    let inv_norm1 = inverse_one_norm_estimate(&matrix.entries, &lu, n)?;
    let condition = norm1 * inv_norm1;
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::IllConditioned {
            condition,
            limit: CONDITION_LIMIT,
        });
    }

    let mut rhs = nalgebra::DVector::from_element(n, Complex64::new(0.0, 0.0));
    rhs[feed] = Complex64::new(v_feed, 0.0);
    let currents = lu
        .solve(&rhs)
        .ok_or_else(|| Error::IllConditioned {
            condition,
            limit: CONDITION_LIMIT,
        })?;

    let i_feed = currents[feed];
    if i_feed.norm() == 0.0 {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
            limit: CONDITION_LIMIT,
        });
    }
    let v = Complex64::new(v_feed, 0.0);
    let z_in = v / i_feed;
    let z0v = Complex64::new(z0.ohms(), 0.0);
    let s11 = (z_in - z0v) / (z_in + z0v);
    let p_in = 0.5 * (v * i_feed.conj()).re;
    let p_load_loss: f64 = loads
        .iter()
        .map(|&(b, z)| 0.5 * z.re * currents[b].norm_sqr())
        .sum();

    Ok(DriveResult {
        f_hz: matrix.f_hz,
        z_in,
        s11,
        currents: currents.iter().copied().collect(),
        p_in,
        p_load_loss,
    })
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    let mut max = 0.0f64;
    for c in 0..m.ncols() {
        let s: f64 = (0..m.nrows()).map(|r| m[(r, c)].norm()).sum();
        max = max.max(s);
    }
    max
}

/// Hager-style one-norm estimate of ‖A⁻¹‖₁ using the existing LU factors.
/// The matrix is symmetric, so Aᴴx = b reduces to A·conj(x) = conj(b).
fn inverse_one_norm_estimate(
    a: &DMatrix<Complex64>,
    lu: &nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
) -> Result<f64> {
    let solve = |b: &nalgebra::DVector<Complex64>| -> Result<nalgebra::DVector<Complex64>> {
        lu.solve(b).ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
            limit: CONDITION_LIMIT,
        })
    };
    let solve_adj = |b: &nalgebra::DVector<Complex64>| -> Result<nalgebra::DVector<Complex64>> {
        let conj_b = b.map(|v| v.conj());
        let y = solve(&conj_b)?;
        Ok(y.map(|v| v.conj()))
    };
    debug_assert_eq!(a.nrows(), n);

    let mut x =
        nalgebra::DVector::from_element(n, Complex64::new(1.0 / n as f64, 0.0));
    let mut est = 0.0f64;
    for _ in 0..5 {
        let y = solve(&x)?;
        let new_est: f64 = y.iter().map(|v| v.norm()).sum();
        let xi = y.map(|v| {
            let m = v.norm();
            if m > 0.0 {
                v / m
            } else {
                Complex64::new(1.0, 0.0)
            }
        });
        let z = solve_adj(&xi)?;
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, 0.0));
        let stop = new_est <= est || zmax <= z.dot(&x.map(|v| v.conj())).norm();
        est = est.max(new_est);
        if stop {
            break;
        }
        x = nalgebra::DVector::from_element(n, Complex64::new(0.0, 0.0));
        x[jmax] = Complex64::new(1.0, 0.0);
    }
    Ok(est)
}

// ---------------------------------------------------------------------------
// High-level drive & sweep
// ---------------------------------------------------------------------------

/// Solver knobs shared by the sweep helpers.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub gauss_order: usize,
    pub z0: ReferenceImpedance,
    pub v_feed: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gauss_order: DEFAULT_GAUSS_ORDER,
            z0: ReferenceImpedance::default(),
            v_feed: 1.0,
        }
    }
}

/// Assemble, load, and solve one frequency with trap values from `resolve`.
pub fn drive_mesh_resolved(
    mesh: &SegmentMesh,
    f_hz: f64,
    resolve: &dyn Fn(&TrapSpec) -> TrapValues,
    opts: SolveOptions,
) -> Result<DriveResult> {
    let basis = BasisSet::for_mesh(mesh)?;
    let bare = assemble_impedance_matrix_with_order(mesh, f_hz, opts.gauss_order)?;
    let loaded = apply_lumped_loads_resolved(&bare, mesh, f_hz, resolve)?;
    let resolved: Vec<(usize, Complex64)> = basis
        .loads
        .iter()
        .map(|(b, _seg, load)| Ok((*b, load_impedance(load, f_hz, resolve)?)))
        .collect::<Result<_>>()?;
    solve_drive(&loaded, basis.feed_basis, opts.v_feed, opts.z0, &resolved)
}

/// Assemble, load, and solve one frequency at a tolerance corner.
pub fn drive_mesh_at(
    mesh: &SegmentMesh,
    f_hz: f64,
    corner: CornerAssignment,
    opts: SolveOptions,
) -> Result<DriveResult> {
    drive_mesh_resolved(mesh, f_hz, &|t: &TrapSpec| t.values_at(corner), opts)
}

/// Drive the mesh at every grid frequency.  Points run in parallel;
/// results are returned in grid order and are independent of scheduling.
/// The first failing point aborts the sweep and is named in the error.
pub fn frequency_sweep(
    mesh: &SegmentMesh,
    grid: &[f64],
    corner: CornerAssignment,
) -> Result<Vec<DriveResult>> {
    frequency_sweep_with(mesh, grid, corner, SolveOptions::default())
}

pub fn frequency_sweep_with(
    mesh: &SegmentMesh,
    grid: &[f64],
    corner: CornerAssignment,
    opts: SolveOptions,
) -> Result<Vec<DriveResult>> {
    frequency_sweep_resolved(mesh, grid, &|t: &TrapSpec| t.values_at(corner), opts)
}

pub fn frequency_sweep_resolved(
    mesh: &SegmentMesh,
    grid: &[f64],
    resolve: &(dyn Fn(&TrapSpec) -> TrapValues + Sync),
    opts: SolveOptions,
) -> Result<Vec<DriveResult>> {
    circuit::check_grid(grid)?;
    let points: Vec<Result<DriveResult>> = grid
        .par_iter()
        .map(|&f| {
            drive_mesh_resolved(mesh, f, &|t| resolve(t), opts).map_err(|e| Error::SweepPoint {
                freq_hz: f,
                source: Box::new(e),
            })
        })
        .collect();
    points.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Post-processing
// ---------------------------------------------------------------------------

/// A return-loss dip found in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    /// Dip frequency from quadratic interpolation of the three nearest
    /// samples, Hz.
    pub f_dip_hz: f64,
    /// Interpolated S11 (dB) at the dip.
    pub rl_db: f64,
    /// Width of the contiguous span where S11 stays at or below the
    /// threshold, Hz (edges linearly interpolated; clipped to the grid).
    pub bandwidth_hz: f64,
}

/// Locate return-loss dips at or below `threshold_db` in a sweep.
pub fn find_resonances(sweep: &[DriveResult], threshold_db: f64) -> Result<Vec<Resonance>> {
    if sweep.is_empty() {
        return Err(Error::Grid("sweep is empty".into()));
    }
    for w in sweep.windows(2) {
        if w[1].f_hz <= w[0].f_hz {
            return Err(Error::Grid("sweep not monotone in frequency".into()));
        }
    }
    let f: Vec<f64> = sweep.iter().map(|r| r.f_hz).collect();
    let v: Vec<f64> = sweep.iter().map(|r| r.return_loss_db()).collect();
    let n = v.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let left = v[i - 1];
        let right = v[i + 1];
        let is_min = (v[i] < left && v[i] <= right) || (v[i] <= left && v[i] < right);
        if !is_min || v[i] > threshold_db {
            continue;
        }
        // Quadratic vertex through the three nearest samples.
        let (x0, x1, x2) = (f[i - 1], f[i], f[i + 1]);
        let (y0, y1, y2) = (left, v[i], right);
        let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
        let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
        let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
        let (f_dip, rl_dip) = if a.abs() > 0.0 && a.is_finite() {
            let fd = (-b / (2.0 * a)).clamp(x0, x2);
            let c = y1 - a * x1 * x1 - b * x1;
            (fd, a * fd * fd + b * fd + c)
        } else {
            (x1, y1)
        };

        // Contiguous threshold span around the dip.
        let mut lo = i;
        while lo > 0 && v[lo - 1] <= threshold_db {
            lo -= 1;
        }
        let f_lo = if lo == 0 {
            f[0]
        } else {
            interp_crossing(f[lo - 1], v[lo - 1], f[lo], v[lo], threshold_db)
        };
        let mut hi = i;
        while hi + 1 < n && v[hi + 1] <= threshold_db {
            hi += 1;
        }
        let f_hi = if hi == n - 1 {
            f[n - 1]
        } else {
            interp_crossing(f[hi], v[hi], f[hi + 1], v[hi + 1], threshold_db)
        };

        out.push(Resonance {
            f_dip_hz: f_dip,
            rl_db: rl_dip,
            bandwidth_hz: f_hi - f_lo,
        });
    }
    Ok(out)
}

fn interp_crossing(f_out: f64, v_out: f64, f_in: f64, v_in: f64, threshold: f64) -> f64 {
    if (v_in - v_out).abs() < 1e-30 {
        return f_in;
    }
    f_out + (f_in - f_out) * (threshold - v_out) / (v_in - v_out)
}

/// Magnitude of the current at each segment midpoint.
pub fn current_distribution(result: &DriveResult, mesh: &SegmentMesh) -> Result<Vec<f64>> {
    let basis = BasisSet::for_mesh(mesh)?;
    if basis.len() != result.currents.len() {
        return Err(Error::MeshMismatch(format!(
            "result carries {} coefficients but the mesh has {} basis functions",
            result.currents.len(),
            basis.len()
        )));
    }
    Ok(basis
        .segment_midpoint_currents(mesh.segments.len(), &result.currents)
        .iter()
        .map(|c| c.norm())
        .collect())
}

/// Current blocking of the trap at `f_hz`: 20·log10 of the ratio between
/// the largest segment current on the feed side of the trap and the largest
/// on the far side.
pub fn trap_isolation(
    mesh: &SegmentMesh,
    f_hz: f64,
    corner: CornerAssignment,
    opts: SolveOptions,
) -> Result<f64> {
    let trap_segments: Vec<usize> = mesh
        .loads
        .iter()
        .filter(|(_, l)| matches!(l, Load::Trap(_)))
        .map(|(&s, _)| s)
        .collect();
    if trap_segments.len() != 1 {
        return Err(Error::TrapLoadCount {
            found: trap_segments.len(),
        });
    }
    let trap_seg = trap_segments[0];
    let result = drive_mesh_at(mesh, f_hz, corner, opts)?;
    let currents = current_distribution(&result, mesh)?;

    // Split the connectivity graph at the trap node.
    let nodes = NodeIndex::build(mesh);
    let trap_node = nodes
        .node_at(mesh.segments[trap_seg].end)
        .ok_or_else(|| Error::domain("trap node not found"))?;
    let mut feed_side = vec![false; mesh.segments.len()];
    let mut stack = vec![mesh.feed_segment];
    feed_side[mesh.feed_segment] = true;
    while let Some(s) = stack.pop() {
        for &node in &nodes.of_segment[s] {
            if node == trap_node {
                continue;
            }
            for &t in &nodes.segments_at[node] {
                if !feed_side[t] {
                    feed_side[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    let mut max_feed = 0.0f64;
    let mut max_far = 0.0f64;
    for (i, &cur) in currents.iter().enumerate() {
        if feed_side[i] {
            max_feed = max_feed.max(cur);
        } else {
            max_far = max_far.max(cur);
        }
    }
    if max_far == 0.0 {
        return Err(Error::domain("no current on the far side of the trap"));
    }
    Ok(20.0 * (max_feed / max_far).log10())
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

/// Sweep CSV per the export interface, 9 significant digits.
pub fn sweep_to_csv(
    results: &[DriveResult],
    corner: CornerAssignment,
    comment_lines: &[String],
) -> String {
    let mut out = String::new();
    for line in comment_lines {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("freq_hz,corner,zin_re,zin_im,s11_re,s11_im,rl_db\n");
    for r in results {
        out.push_str(&format!(
            "{:.8e},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
            r.f_hz,
            corner.label(),
            r.z_in.re,
            r.z_in.im,
            r.s11.re,
            r.s11.im,
            r.return_loss_db()
        ));
    }
    out
}

/// Touchstone v1.1 one-port file (S11, real/imaginary, reference `z0`).
pub fn to_touchstone(
    results: &[DriveResult],
    z0: ReferenceImpedance,
    comment_lines: &[String],
) -> String {
    let mut out = String::new();
    for line in comment_lines {
        out.push_str("! ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(&format!("# HZ S RI R {}\n", z0.ohms()));
    for r in results {
        out.push_str(&format!(
            "{:.8e} {:.8e} {:.8e}\n",
            r.f_hz, r.s11.re, r.s11.im
        ));
    }
    out
}

/// Parse a one-port Touchstone file written by [`to_touchstone`].
/// Returns (frequency, S11) rows.
pub fn parse_touchstone(text: &str) -> Result<Vec<(f64, Complex64)>> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('!') {
            continue;
        }
        if line.starts_with('#') {
            let toks: Vec<&str> = line[1..].split_whitespace().collect();
            if toks.len() < 5
                || !toks[0].eq_ignore_ascii_case("hz")
                || !toks[1].eq_ignore_ascii_case("s")
                || !toks[2].eq_ignore_ascii_case("ri")
            {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unsupported touchstone option line `{line}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad data line `{line}`"),
            })?;
        if nums.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: "expected `freq s11_re s11_im`".into(),
            });
        }
        rows.push((nums[0], Complex64::new(nums[1], nums[2])));
    }
    if !saw_header {
        return Err(Error::Parse {
            line: 0,
            message: "missing touchstone option line".into(),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
