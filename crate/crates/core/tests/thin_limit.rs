//! The classical half-wave dipole impedance 73 + j42.5 Ω holds in the
//! vanishing-radius limit; the solver must approach it monotonically as
//! the wire thins.

use std::collections::BTreeMap;

use num_complex::Complex64;
use trapant_core::geometry::{GroundMode, Segment, SegmentMesh};
use trapant_core::solver::{drive_mesh_at, SolveOptions};
use trapant_core::C0;

fn dipole_zin(a: f64) -> Complex64 {
    let n = 32;
    let length = 0.5;
    let segments = (0..n)
        .map(|i| Segment {
            start: [0.0, 0.0, -length / 2.0 + length * i as f64 / n as f64],
            end: [
                0.0,
                0.0,
                -length / 2.0 + length * (i + 1) as f64 / n as f64,
            ],
            radius: a,
        })
        .collect();
    let mesh = SegmentMesh {
        segments,
        feed_segment: n / 2 - 1,
        loads: BTreeMap::new(),
        ground: GroundMode::FreeSpace,
        length_scale: 1.0,
    };
    drive_mesh_at(
        &mesh,
        C0,
        trapant_core::circuit::CornerAssignment::NOMINAL,
        SolveOptions::default(),
    )
    .unwrap()
    .z_in
}

#[test]
fn thin_wire_limit_approaches_classical_value() {
    let target = Complex64::new(73.13, 42.54);
    let mut last = f64::INFINITY;
    for a in [1e-3, 1e-4, 1e-5, 1e-6] {
        let z = dipole_zin(a);
        let dev = (z - target).norm() / target.norm();
        println!("a = {a:.0e}: z_in = {z:.2}, deviation {:.1}%", dev * 100.0);
        assert!(
            dev < last,
            "deviation did not shrink with thinner wire at a = {a}"
        );
        last = dev;
    }
    // At radius 1e-6 λ the classical value is matched within 10%.
    assert!(last < 0.10);
}
