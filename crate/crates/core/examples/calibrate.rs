//! Calibration helper: sweeps a design preset (or a parameter scan around
//! it) and prints the return-loss dips, so the preset tuning values in
//! `presets.rs` can be re-derived.
//!
//! ```sh
//! cargo run --example calibrate -p trapant-core --release -- b
//! cargo run --example calibrate -p trapant-core --release -- scan-b
//! ```

use trapant_core::circuit::CornerAssignment;
use trapant_core::presets::{self, DesignPreset};
use trapant_core::solver::{find_resonances, frequency_sweep_with, SolveOptions};

fn survey(preset: &DesignPreset, grid: &[f64], verbose: bool) {
    let mesh = match preset.build_mesh() {
        Ok(m) => m,
        Err(e) => {
            println!("  build failed: {e}");
            return;
        }
    };
    let sweep = match frequency_sweep_with(
        &mesh,
        grid,
        CornerAssignment::NOMINAL,
        SolveOptions::default(),
    ) {
        Ok(s) => s,
        Err(e) => {
            println!("  sweep failed: {e}");
            return;
        }
    };
    let dips = find_resonances(&sweep, -3.0).unwrap();
    print!("  dips:");
    for d in &dips {
        print!(
            " {:.1} MHz ({:.1} dB, bw {:.1} MHz)",
            d.f_dip_hz / 1e6,
            d.rl_db,
            d.bandwidth_hz / 1e6
        );
    }
    println!();
    if verbose {
        for r in sweep.iter().step_by(8) {
            println!(
                "    {:7.2} MHz  rl {:7.2} dB   z = {:7.2} {:+7.2}j",
                r.f_hz / 1e6,
                r.return_loss_db(),
                r.z_in.re,
                r.z_in.im
            );
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("b");
    let grid = presets::frequency_grid(780e6, 1000e6, 1e6);

    match mode {
        "a" => {
            let p = presets::design_a();
            println!("design A: {:?}", p.antenna);
            survey(&p, &grid, true);
        }
        "b" => {
            let p = presets::design_b();
            println!("design B: {:?}", p.antenna);
            survey(&p, &grid, true);
        }
        "scan-b" => {
            for s in [0.6, 0.68, 0.74, 0.8, 0.88] {
                for ext_mm in [8.0, 11.0, 14.0, 17.0] {
                    let mut p = presets::design_b();
                    p.antenna.trap_position_fraction = s;
                    p.antenna.extension_length = ext_mm * 1e-3;
                    println!("B: s = {s}, ext = {ext_mm} mm");
                    survey(&p, &grid, false);
                }
            }
        }
        "scan-a" => {
            for s in [0.9, 0.93, 0.95] {
                for ext_mm in [5.0, 7.0, 9.0, 12.0] {
                    let mut p = presets::design_a();
                    p.antenna.trap_position_fraction = s;
                    p.antenna.extension_length = ext_mm * 1e-3;
                    println!("A: s = {s}, ext = {ext_mm} mm");
                    survey(&p, &grid, false);
                }
            }
        }
        "scan-scale" => {
            for scale in [0.80, 0.84, 0.86, 0.88, 0.92] {
                let mut p = presets::design_b();
                p.length_scale = scale;
                println!("B: length_scale = {scale}");
                survey(&p, &grid, false);
            }
        }
        "scan-feed" => {
            for off_mm in [3.0, 4.5, 6.0, 8.0, 10.0] {
                let mut p = presets::design_b();
                p.antenna.short_pin_offset = off_mm * 1e-3;
                println!("B: feed offset = {off_mm} mm");
                survey(&p, &grid, false);
            }
        }
        "tune-a" => tune(presets::design_a()),
        "tune-b" => tune(presets::design_b()),
        "corners" => corners(),
        "sens-b" => sensitivity_scan(),
        "floors" => {
            // True sensitivity floors: shortest buildable post-trap conductor.
            let fine = presets::frequency_grid(840e6, 960e6, 0.25e6);
            let mut survey = |label: String, p: &mut DesignPreset| {
                let mut ok = true;
                for _ in 0..10 {
                    let Some(((fl, _), _)) = dip_pair(p, &grid) else { ok = false; break };
                    let err = (867.3e6 - fl) / 1e6;
                    if err.abs() < 0.3 { break; }
                    p.length_scale = (p.length_scale + 0.7 * err / 500.0).clamp(0.6, 1.2);
                }
                if !ok { println!("{label}: lost"); return; }
                let Some(((fl, dl), (fh, dh))) = dip_pair(p, &grid) else { println!("{label}: lost pair"); return };
                let shift = low_band_shift(p).map(|t| t.1 / 1e6).unwrap_or(f64::NAN);
                let mesh = p.build_mesh().unwrap();
                let sweep = frequency_sweep_with(&mesh, &fine, CornerAssignment::NOMINAL, SolveOptions::default()).unwrap();
                let dips = find_resonances(&sweep, -10.0).unwrap();
                let bw: Vec<String> = dips.iter().map(|d| format!("{:.2}@{:.1}dB/bw{:.2}", d.f_dip_hz/1e6, d.rl_db, d.bandwidth_hz/1e6)).collect();
                println!("{label}: low {:.2} ({dl:.1}) high {:.1} ({dh:.1}) shift {shift:.3} scale {:.4} | {}", fl/1e6, fh/1e6, p.length_scale, bw.join("  "));
            };
            for (s, ext_mm) in [(0.9705, 1.75), (0.968, 1.75), (0.965, 1.75), (0.965, 2.0)] {
                let mut p = presets::design_a();
                p.antenna.trap_position_fraction = s;
                p.antenna.extension_length = ext_mm * 1e-3;
                survey(format!("A s={s} ext={ext_mm}"), &mut p);
            }
            for ext_mm in [8.6f64, 9.0, 9.4, 9.8] {
                let mut p = presets::design_b();
                p.antenna.extension_length = ext_mm * 1e-3;
                survey(format!("B ext={ext_mm}"), &mut p);
            }
        }
        "sens-a" => {
            let fine = presets::frequency_grid(840e6, 960e6, 0.25e6);
            for ext_mm in [1.8f64, 2.1, 2.4, 2.655, 3.0] {
                let mut p = presets::design_a();
                p.antenna.extension_length = ext_mm * 1e-3;
                let mut ok = true;
                for _ in 0..8 {
                    let Some(((fl, _), _)) = dip_pair(&p, &grid) else { ok = false; break };
                    let err = (867.3e6 - fl) / 1e6;
                    if err.abs() < 0.3 { break; }
                    p.length_scale = (p.length_scale + 0.8 * err / 670.0).clamp(0.6, 1.1);
                }
                if !ok { println!("A ext={ext_mm}: lost"); continue; }
                let Some(((fl, dl), (fh, dh))) = dip_pair(&p, &grid) else { continue };
                let shift = low_band_shift(&p).map(|t| t.1 / 1e6).unwrap_or(f64::NAN);
                let mesh = p.build_mesh().unwrap();
                let sweep = frequency_sweep_with(&mesh, &fine, CornerAssignment::NOMINAL, SolveOptions::default()).unwrap();
                let dips = find_resonances(&sweep, -10.0).unwrap();
                let bw: Vec<String> = dips.iter().map(|d| format!("{:.2}@{:.1}dB/bw{:.2}", d.f_dip_hz/1e6, d.rl_db, d.bandwidth_hz/1e6)).collect();
                println!("A ext={ext_mm}: low {:.2} ({dl:.1}) high {:.1} ({dh:.1}) shift {shift:.3} scale {:.4} | {}", fl/1e6, fh/1e6, p.length_scale, bw.join("  "));
            }
        }
        "widths-esr" => {
            let fine = presets::frequency_grid(840e6, 960e6, 0.25e6);
            for (r_ind, r_cap) in [(0.4, 0.08), (0.85, 0.15), (1.3, 0.25)] {
                for base in [presets::design_a(), presets::design_b()] {
                    let mut preset = base.clone();
                    preset.trap = trapant_core::circuit::TrapSpec::with_losses(
                        preset.trap.cap, preset.trap.ind1, preset.trap.ind2, r_ind, r_cap,
                    ).unwrap();
                    let mesh = preset.build_mesh().unwrap();
                    let sweep = frequency_sweep_with(&mesh, &fine, CornerAssignment::NOMINAL, SolveOptions::default()).unwrap();
                    let dips = find_resonances(&sweep, -10.0).unwrap();
                    print!("{} r_ind={r_ind}:", preset.label);
                    for d in &dips {
                        print!("  {:.2} MHz ({:.2} dB, bw {:.2})", d.f_dip_hz / 1e6, d.rl_db, d.bandwidth_hz / 1e6);
                    }
                    let shift = low_band_shift(&preset).map(|t| t.1 / 1e6).unwrap_or(f64::NAN);
                    println!("  low-shift {shift:.3} MHz");
                }
            }
        }
        "widths" => {
            let fine = presets::frequency_grid(840e6, 960e6, 0.25e6);
            for preset in [presets::design_a(), presets::design_b()] {
                let mesh = preset.build_mesh().unwrap();
                let sweep = frequency_sweep_with(&mesh, &fine, CornerAssignment::NOMINAL, SolveOptions::default()).unwrap();
                let dips = find_resonances(&sweep, -10.0).unwrap();
                print!("{}:", preset.label);
                for d in &dips {
                    print!("  {:.2} MHz ({:.2} dB, -10dB bw {:.2} MHz)", d.f_dip_hz / 1e6, d.rl_db, d.bandwidth_hz / 1e6);
                }
                println!();
            }
        }
        "depth-b" => {
            for off_mm in [1.65, 1.7, 1.75] {
                for ext_mm in [11.8, 12.2, 12.6] {
                    let mut p = presets::design_b();
                    p.antenna.short_pin_offset = off_mm * 1e-3;
                    p.antenna.extension_length = ext_mm * 1e-3;
                    // retune scale to put the low dip on 867.3
                    let mut ok = true;
                    for _ in 0..8 {
                        let Some(((fl, _), _)) = dip_pair(&p, &grid) else { ok = false; break };
                        let err = (867.3e6 - fl) / 1e6;
                        if err.abs() < 0.3 { break; }
                        p.length_scale = (p.length_scale + 0.8 * err / 405.0).clamp(0.6, 1.1);
                    }
                    if !ok { println!("B off={off_mm} ext={ext_mm}: lost"); continue; }
                    match dip_pair(&p, &grid) {
                        Some(((fl, dl), (fh, dh))) => {
                            let shift = low_band_shift(&p).map(|t| t.1).unwrap_or(f64::NAN);
                            let fine = presets::frequency_grid(840e6, 960e6, 0.25e6);
                            let mesh = p.build_mesh().unwrap();
                            let sweep = frequency_sweep_with(&mesh, &fine, CornerAssignment::NOMINAL, SolveOptions::default()).unwrap();
                            let dips = find_resonances(&sweep, -10.0).unwrap();
                            let bw: Vec<String> = dips.iter().map(|d| format!("{:.2}@{:.1}dB/bw{:.2}", d.f_dip_hz/1e6, d.rl_db, d.bandwidth_hz/1e6)).collect();
                            println!("B off={off_mm} ext={ext_mm}: low {:.2} ({dl:.1} dB) high {:.1} ({dh:.1} dB) shift {:.3} scale {:.4} | {}", fl/1e6, fh/1e6, shift/1e6, p.length_scale, bw.join("  "));
                        }
                        None => println!("B off={off_mm} ext={ext_mm}: lost"),
                    }
                }
            }
        }
        "map-b" => {
            for scale in [0.85, 0.87, 0.89, 0.91] {
                for ext_mm in [11.0, 13.0, 15.0, 17.0] {
                    let mut p = presets::design_b();
                    p.length_scale = scale;
                    p.antenna.extension_length = ext_mm * 1e-3;
                    match dip_pair(&p, &grid) {
                        Some(((fl, dl), (fh, dh))) => println!(
                            "B scale={scale} ext={ext_mm}: low {:.1} ({dl:.1} dB), high {:.1} ({dh:.1} dB)",
                            fl / 1e6,
                            fh / 1e6
                        ),
                        None => println!("B scale={scale} ext={ext_mm}: dips unresolved"),
                    }
                }
            }
        }
        "spacing-a" => {
            // How narrow can A's dip spacing get?  Short extensions, trap
            // at the far end, feed offset and scale swept.
            let wide = presets::frequency_grid(780e6, 1080e6, 1e6);
            for off_mm in [2.0, 3.0, 4.5] {
                for ext_mm in [3.0, 4.0, 6.0, 7.5] {
                    for scale in [0.80, 0.83, 0.86, 0.90] {
                        let mut p = presets::design_a();
                        p.antenna.short_pin_offset = off_mm * 1e-3;
                        p.antenna.trap_position_fraction = 0.97;
                        p.antenna.extension_length = ext_mm * 1e-3;
                        p.length_scale = scale;
                        match dip_pair(&p, &wide) {
                            Some(((fl, dl), (fh, dh))) => println!(
                                "A off={off_mm} ext={ext_mm} scale={scale}: low {:.1} ({dl:.1} dB) high {:.1} ({dh:.1} dB) spacing {:.1}",
                                fl / 1e6,
                                fh / 1e6,
                                (fh - fl) / 1e6
                            ),
                            None => println!(
                                "A off={off_mm} ext={ext_mm} scale={scale}: dip lost"
                            ),
                        }
                    }
                }
            }
        }
        other => eprintln!("unknown mode `{other}`"),
    }
}

/// Corner analysis + comparison of the two calibrated presets.
fn corners() {
    use trapant_core::tolerance::{compare_configs, DesignUnderTest};
    let bands = presets::dual_bands();
    let grid = presets::frequency_grid(840e6, 950e6, 0.5e6);
    let a = presets::design_a();
    let b = presets::design_b();
    let report = compare_configs(
        &DesignUnderTest {
            label: a.label.clone(),
            mesh: a.build_mesh().unwrap(),
        },
        &DesignUnderTest {
            label: b.label.clone(),
            mesh: b.build_mesh().unwrap(),
        },
        &bands,
        &grid,
        -10.0,
        SolveOptions::default(),
    )
    .unwrap();
    println!("{}", report.serialize());
    println!("--- design A corner detail ---");
    println!("{}", report.a_report.serialize());
    println!("--- design B corner detail ---");
    println!("{}", report.b_report.serialize());
}

/// Low-band dip shift across the four extreme corners for one design.
fn low_band_shift(preset: &DesignPreset) -> Option<(f64, f64, f64)> {
    let mesh = preset.build_mesh().ok()?;
    let grid = presets::frequency_grid(845e6, 895e6, 0.5e6);
    let mut nominal = None;
    let mut worst_shift = 0.0f64;
    let mut depth = 0.0f64;
    for corner in CornerAssignment::canonical_set() {
        let sweep =
            frequency_sweep_with(&mesh, &grid, corner, SolveOptions::default()).ok()?;
        let dips = find_resonances(&sweep, -2.0).ok()?;
        let dip = dips
            .iter()
            .min_by(|a, b| a.rl_db.total_cmp(&b.rl_db))?;
        match nominal {
            None => {
                nominal = Some(dip.f_dip_hz);
                depth = dip.rl_db;
            }
            Some(f0) => worst_shift = worst_shift.max((dip.f_dip_hz - f0).abs()),
        }
    }
    Some((nominal?, worst_shift, depth))
}

/// Scan B's junction position and extension for the smallest low-band
/// corner shift, retuning the dips to the targets at each point.
fn sensitivity_scan() {
    // Baseline: the calibrated A.
    let a = presets::design_a();
    if let Some((f0, shift, depth)) = low_band_shift(&a) {
        println!(
            "A baseline: dip {:.2} MHz ({depth:.1} dB), low-band corner shift {:.3} MHz",
            f0 / 1e6,
            shift / 1e6
        );
    }
    let grid = presets::frequency_grid(780e6, 1020e6, 1e6);
    let (target_low, target_high) = (867.3e6, 915.0e6);
    for s in [0.74, 0.82, 0.88, 0.93] {
        for ext_mm in [11.0f64, 11.4, 11.8, 12.2, 12.6] {
            let mut p = presets::design_b();
            p.antenna.trap_position_fraction = s;
            p.antenna.extension_length = ext_mm * 1e-3;
            // Retune scale only (extension pinned by the scan): two dips
            // cannot both be controlled, so push the low dip on target and
            // record where the high one lands.
            let mut ok = true;
            for _ in 0..8 {
                let Some(((fl, _), _)) = dip_pair(&p, &grid) else {
                    ok = false;
                    break;
                };
                let err = (target_low - fl) / 1e6;
                if err.abs() < 0.4 {
                    break;
                }
                p.length_scale = (p.length_scale + 0.8 * err / 405.0).clamp(0.6, 1.1);
            }
            if !ok {
                println!("B s={s} ext={ext_mm}: lost dips");
                continue;
            }
            let Some((_, (fh, dh))) = dip_pair(&p, &grid) else {
                continue;
            };
            let Some((f0, shift, depth)) = low_band_shift(&p) else {
                println!("B s={s} ext={ext_mm}: shift scan failed");
                continue;
            };
            println!(
                "B s={s} ext={ext_mm}: low {:.2} MHz ({depth:.1} dB), high {:.1} MHz ({dh:.1} dB, err {:+.1}), shift {:.3} MHz, scale {:.4}",
                f0 / 1e6,
                fh / 1e6,
                (fh - target_high) / 1e6,
                shift / 1e6,
                p.length_scale
            );
        }
    }
}

/// Dip pair (low, high) split at the trap resonance.
fn dip_pair(preset: &DesignPreset, grid: &[f64]) -> Option<((f64, f64), (f64, f64))> {
    let mesh = preset.build_mesh().ok()?;
    let sweep = frequency_sweep_with(
        &mesh,
        grid,
        CornerAssignment::NOMINAL,
        SolveOptions::default(),
    )
    .ok()?;
    let dips = find_resonances(&sweep, -2.0).ok()?;
    // Dips cannot cross the trap's parallel resonance; split there.
    let split = trapant_core::circuit::trap_resonance(
        &presets::reference_trap(),
        CornerAssignment::NOMINAL,
    );
    let low = dips
        .iter()
        .filter(|d| d.f_dip_hz < split)
        .min_by(|a, b| a.rl_db.total_cmp(&b.rl_db))?;
    let high = dips
        .iter()
        .filter(|d| d.f_dip_hz >= split)
        .min_by(|a, b| a.rl_db.total_cmp(&b.rl_db))?;
    Some(((low.f_dip_hz, low.rl_db), (high.f_dip_hz, high.rl_db)))
}

/// Newton steps on (length_scale, extension_length) that put the dips at
/// the band centers, nested in a feed-offset search for match depth.
fn tune(mut preset: DesignPreset) {
    let grid = presets::frequency_grid(780e6, 1020e6, 1e6);
    let (target_low, target_high) = (867.3e6, 915.0e6);
    let inset = preset.antenna.config == trapant_core::geometry::AntennaConfig::ExtensionInset;
    // Approximate Jacobians in MHz per (unit scale, mm of extension),
    // measured from the coarse scans.
    let (ja, jb, jc, jd) = if inset {
        (305.0, -2.5, 740.0, -3.2)
    } else {
        (670.0, -9.3, 413.0, -2.3)
    };
    if inset {
        preset.antenna.extension_length = 13.0e-3;
        preset.length_scale = 0.89;
    } else {
        preset.antenna.extension_length = 3.0e-3;
        preset.length_scale = 0.85;
        preset.antenna.trap_position_fraction = 0.965;
    }

    let clamp_ext = |ext: f64, p: &DesignPreset| -> f64 {
        let drop = p.antenna.footprint_height * 0.62;
        if inset {
            // Branch needs the stub plus a usable run, and must clear the
            // feed region on its way back.
            let x_junction =
                0.55 * p.antenna.trap_position_fraction * p.antenna.footprint_length;
            let max_ext =
                x_junction - p.antenna.short_pin_offset - 1.5 * p.antenna.trace_width + drop
                    - 0.5e-3;
            ext.clamp(drop + 2.0e-3, max_ext)
        } else {
            // Vertical-only, or drop + a run long enough to mesh; the
            // window between is unbuildable.
            let lo_max = drop - 0.1e-3;
            let hi_min = drop + 1.9e-3;
            let e = ext.clamp(1.8e-3, 0.03);
            if e > lo_max && e < hi_min {
                if e - lo_max < hi_min - e {
                    lo_max
                } else {
                    hi_min
                }
            } else {
                e
            }
        }
    };

    let newton = |p: &mut DesignPreset, grid: &[f64], iters: usize| -> bool {
        for _ in 0..iters {
            let Some(((fl, _), (fh, _))) = dip_pair(p, grid) else {
                return false;
            };
            let e_low = (target_low - fl) / 1e6;
            let e_high = (target_high - fh) / 1e6;
            if e_low.abs() < 0.4 && e_high.abs() < 0.4 {
                return true;
            }
            let det = ja * jd - jb * jc;
            let ds = (jd * e_low - jb * e_high) / det;
            let de = (-jc * e_low + ja * e_high) / det;
            let damp = 0.6;
            p.length_scale = (p.length_scale + damp * ds).clamp(0.6, 1.1);
            p.antenna.extension_length =
                clamp_ext(p.antenna.extension_length + damp * de * 1e-3, p);
        }
        true
    };

    let mut best: Option<(f64, DesignPreset, f64, f64)> = None;
    for off_mm in [1.5, 2.0, 2.5, 3.0, 4.0, 6.0] {
        let mut p = preset.clone();
        p.antenna.short_pin_offset = off_mm * 1e-3;
        if !newton(&mut p, &grid, 10) {
            println!("offset {off_mm} mm: tuning lost a dip");
            continue;
        }
        let Some(((fl, dl), (fh, dh))) = dip_pair(&p, &grid) else {
            continue;
        };
        let worst = dl.max(dh);
        println!(
            "offset {off_mm} mm: low {:.1} MHz {:.1} dB, high {:.1} MHz {:.1} dB, scale {:.4}, ext {:.2} mm",
            fl / 1e6,
            dl,
            fh / 1e6,
            dh,
            p.length_scale,
            p.antenna.extension_length * 1e3
        );
        if best.as_ref().is_none_or(|(w, ..)| worst < *w) {
            best = Some((worst, p, fl, fh));
        }
    }
    let Some((worst, mut p, ..)) = best else {
        println!("tuning failed");
        return;
    };
    println!("best worst-dip {worst:.1} dB; polishing on the fine grid");
    let fine = presets::frequency_grid(820e6, 970e6, 0.25e6);
    newton(&mut p, &fine, 4);
    preset = p;

    let Some(((fl, dl), (fh, dh))) = dip_pair(&preset, &fine) else {
        println!("polish lost the dips");
        return;
    };
    println!("tuned {}:", preset.label);
    println!("  length_scale        = {:.6}", preset.length_scale);
    println!(
        "  short_pin_offset    = {:.3} mm",
        preset.antenna.short_pin_offset * 1e3
    );
    println!(
        "  trap_position_frac  = {:.3}",
        preset.antenna.trap_position_fraction
    );
    println!(
        "  extension_length    = {:.3} mm",
        preset.antenna.extension_length * 1e3
    );
    println!(
        "  dips: {:.2} MHz ({:.1} dB), {:.2} MHz ({:.1} dB)",
        fl / 1e6,
        dl,
        fh / 1e6,
        dh
    );
}
