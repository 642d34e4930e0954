//! Feature-map, latent-grid, basis and relevance analyses against direct
//! re-computations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wmx_core::featviz::{layer_report, pair_maps, rgb_mask, upsample, LayerMaps, ReportConfig, Upsample};
use wmx_core::latentgrid::{build_grid, GridConfig, LatentDecoder};
use wmx_core::lstm_xai::{
    epsilon_rule, grid_inputs, grid_probe, kappa_filter, latent_sensitivity, relevance_to_pixels, HiddenTrace,
    PixelMapConfig, ProbeConfig,
};
use wmx_core::nets::{constant_lstm, hand_wire_autoencoder, ActionTriple, FeatureMap, Vae, VaeArchitecture};
use wmx_core::numerics::{correlation_distance, heaviside_pulse, kl_divergence, CorrelationForm, Matrix, KL_EPSILON};
use wmx_core::rgae::{fit, low_frequency_energy, FitConfig, SingularBasis};
use wmx_core::scenario::{render_sequence, table1_schedule, SceneSpec};
use wmx_core::store::{class, ClassFrame, Palette};

fn random_frames(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize) -> Vec<ClassFrame> {
    (0..n)
        .map(|_| ClassFrame::new(h, w, 24, (0..h * w).map(|_| rng.gen_range(0..24)).collect()).unwrap())
        .collect()
}

fn scenario_frame(t: usize) -> ClassFrame {
    render_sequence(&table1_schedule(), &SceneSpec::street(0), t + 1)
        .unwrap()
        .frame(t)
        .unwrap()
}

#[test]
fn rgb_mask_matches_per_pixel_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let frame = scenario_frame(120);
    let palette = Palette::urban();
    let map = Matrix::from_vec(5, 8, (0..40).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
    let (lo, hi) = map
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    for mode in [Upsample::Nearest, Upsample::Bilinear] {
        let got = rgb_mask(&map, &frame, &palette, mode).unwrap();
        let norm = Matrix::from_vec(5, 8, map.as_slice().iter().map(|v| (v - lo) / (hi - lo)).collect()).unwrap();
        let up = upsample(&norm, 45, 85, mode);
        for y in 0..45 {
            for x in 0..85 {
                let rgb = palette.rgb(frame.get(y, x));
                let m = up[(y, x)].clamp(0.0, 1.0);
                let want = rgb.map(|c| (m * c as f64).round() as u8);
                assert_eq!(got.pixel(y, x), want, "pixel ({y},{x})");
            }
        }
    }
    // Bilinear with aligned corners reproduces the corner samples.
    let up = upsample(&map, 45, 85, Upsample::Bilinear);
    assert_eq!(up[(0, 0)], map[(0, 0)]);
    assert_eq!(up[(44, 84)], map[(4, 7)]);
}

#[test]
fn pairing_equals_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (h, w) = (4, 6);
    let mut maps = |channels: usize| {
        let mut data: Vec<f64> = (0..channels * h * w)
            .map(|_| rng.gen_range(-1.0..1.0f64).max(0.0))
            .collect();
        // One constant map per model.
        data[..h * w].iter_mut().for_each(|v| *v = 0.0);
        LayerMaps {
            layer: 1,
            maps: FeatureMap::new(channels, h, w, data).unwrap(),
        }
    };
    let (a, b) = (maps(7), maps(9));
    for form in [CorrelationForm::Centered, CorrelationForm::Uncentered] {
        let got = pair_maps(&a, &b, form).unwrap();
        assert_eq!(got.excluded_a, vec![0]);
        assert_eq!(got.excluded_b, vec![0]);
        let mut want = Vec::new();
        for u in 1..7 {
            let mut best = (usize::MAX, f64::INFINITY);
            for v in 1..9 {
                let d = correlation_distance(a.maps.plane(u), b.maps.plane(v), form).unwrap();
                if d < best.1 {
                    best = (v, d);
                }
            }
            want.push((u, best.0, best.1));
        }
        let got: Vec<(usize, usize, f64)> = got.pairs.iter().map(|p| (p.a, p.b, p.distance)).collect();
        assert_eq!(got, want);
        assert!(got.iter().all(|p| (0.0..=2.0).contains(&p.2)));
    }
}

#[test]
fn report_covers_first_three_layers() {
    let dir = tempfile::tempdir().unwrap();
    let a = Vae::<f64>::random(&VaeArchitecture::paper_default(), 1).unwrap();
    let b = Vae::<f64>::random(&VaeArchitecture::paper_default(), 2).unwrap();
    let reports = layer_report(
        &a,
        &b,
        &scenario_frame(60),
        &Palette::urban(),
        dir.path(),
        &ReportConfig::default(),
    )
    .unwrap();
    assert_eq!(reports.len(), 3);
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names
        .iter()
        .all(|n| n.starts_with("L1_") || n.starts_with("L2_") || n.starts_with("L3_")));
    for l in 1..=3 {
        assert!(names.contains(&format!("L{l}_eig0.ppm")));
        assert!(names.contains(&format!("L{l}_pair0.ppm")));
    }
}

fn small_basis(seed: u64, k: usize) -> (SingularBasis<f64>, Vec<ClassFrame>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = random_frames(&mut rng, 30, 9, 11);
    (fit(&frames, &FitConfig::new(k)).unwrap(), frames)
}

#[test]
fn basis_encode_decode_match_loops() {
    let (basis, _) = small_basis(5, 12);
    let alpha = basis.alpha();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..basis.dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let z = basis.encode(&x).unwrap();
    for (i, zi) in z.iter().enumerate() {
        let want: f64 = (0..basis.dim()).map(|d| alpha[(d, i)] * x[d]).sum();
        assert!((zi - want).abs() <= 1e-12);
    }
    let back = basis.decode(&z).unwrap();
    for (d, v) in back.iter().enumerate() {
        let want: f64 = (0..12).map(|i| alpha[(d, i)] * z[i]).sum();
        assert!((v - want).abs() <= 1e-12);
    }
}

#[test]
fn grid_cells_match_linear_decoder() {
    let (basis, _) = small_basis(7, 20);
    let alpha = basis.alpha().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let z: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z_before = z.clone();
    let config = GridConfig {
        region_size: 5,
        increments: vec![1.0, 2.0, 3.0],
        debug_zero_row: false,
    };
    let grid = build_grid(&basis, &z, &config).unwrap();
    assert_eq!((grid.rows(), grid.cols()), (3, 4));
    for (r, delta) in [1.0, 2.0, 3.0].iter().enumerate() {
        for c in 0..4 {
            let zp: Vec<f64> = (0..20).map(|i| z[i] + if i / 5 == c { *delta } else { 0.0 }).collect();
            for (d, v) in grid.dense[r][c].iter().enumerate() {
                let want: f64 = (0..20).map(|i| alpha[(d, i)] * zp[i]).sum();
                assert!((v - want).abs() <= 1e-12);
            }
        }
    }
    assert!(z.iter().zip(&z_before).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(grid.decode_calls, 12);
}

#[test]
fn smooth_set_has_low_frequency_leading_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let frames: Vec<ClassFrame> = (0..60)
        .map(|_| {
            let (ay, ax, phase) = (
                rng.gen_range(0.0..0.3),
                rng.gen_range(0.0..0.3),
                rng.gen_range(0.0..std::f64::consts::TAU),
            );
            let level = rng.gen_range(0.3..0.7);
            let data = (0..45 * 85)
                .map(|p| {
                    let (y, x) = ((p / 85) as f64 / 45.0, (p % 85) as f64 / 85.0);
                    let v =
                        level + ay * (std::f64::consts::PI * y + phase).cos() + ax * (std::f64::consts::PI * x).sin();
                    (v.clamp(0.0, 1.0) * 23.0).round() as u8
                })
                .collect();
            ClassFrame::new(45, 85, 24, data).unwrap()
        })
        .collect();
    let basis = fit::<f64>(&frames, &FitConfig::new(5)).unwrap();
    let share = low_frequency_energy(&basis.column_image(0).unwrap(), 0.05);
    assert!(share >= 0.8, "low-frequency share {share}");
}

#[test]
fn epsilon_rule_hand_arithmetic() {
    // y = 2·x1 + 3·x2 at x = (1, 1), R_y = 1.
    let w = [[2.0f64, 3.0]];
    let flow = epsilon_rule(1, &[1.0f64, 1.0], |j, i| w[j][i], |_| 0.0, &[1.0], 0.0).unwrap();
    assert!((flow.inputs[0] - 0.4).abs() < 1e-15 && (flow.inputs[1] - 0.6).abs() < 1e-15);
    assert_eq!(flow.epsilon_absorbed, 0.0);

    let flow = epsilon_rule(1, &[1.0f64, 1.0], |j, i| w[j][i], |_| 1.0, &[1.0], 0.5).unwrap();
    // z = 6, denominator 6.5.
    assert!((flow.inputs[0] - 2.0 / 6.5).abs() < 1e-15);
    assert!((flow.bias_absorbed - 1.0 / 6.5).abs() < 1e-15);
    assert!((flow.epsilon_absorbed - 0.5 / 6.5).abs() < 1e-15);
}

#[test]
fn linear_decoder_pixel_map_closed_form() {
    let (basis, _) = small_basis(11, 6);
    let alpha = basis.alpha().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let z: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let base = basis.decode_dense(&z).unwrap();
    let delta = 0.7;
    for i in 0..6 {
        let d = latent_sensitivity(&basis, &z, &base, i, delta).unwrap();
        for (p, v) in d.iter().enumerate() {
            assert!((v - delta * alpha[(p, i)].abs()).abs() <= 1e-12);
        }
        // z-independent.
        let other = vec![3.0; 6];
        let d2 = latent_sensitivity(&basis, &other, &basis.decode_dense(&other).unwrap(), i, delta).unwrap();
        assert!(d.iter().zip(&d2).all(|(a, b)| (a - b).abs() <= 1e-12));
    }
    let config = PixelMapConfig { delta, top_q: None };
    let map = relevance_to_pixels(&basis, &z, &r, &config).unwrap();
    let raw = map.raw();
    for (p, v) in raw.iter().enumerate() {
        let want: f64 = (0..6).map(|i| r[i].abs() * delta * alpha[(p, i)].abs()).sum();
        assert!((v - want).abs() <= 1e-12 * want.max(1.0));
    }
}

#[test]
fn kappa_ranking_equals_independent_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (frames, cells) = (120, 40);
    let values: Vec<f64> = (0..frames * cells).map(|_| rng.gen_range(0.01..0.99)).collect();
    let trace = HiddenTrace::new(Matrix::from_vec(frames, cells, values).unwrap()).unwrap();
    let ranking = kappa_filter(&trace, 30, 70).unwrap();
    let pulse: Vec<f64> = heaviside_pulse(frames, 30, 70).unwrap();
    let mut want: Vec<(usize, f64)> = (0..cells)
        .map(|c| {
            let series: Vec<f64> = (0..frames).map(|t| trace.values()[(t, c)]).collect();
            (c, kl_divergence(&series, &pulse, KL_EPSILON).unwrap())
        })
        .collect();
    want.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let got: Vec<(usize, f64)> = ranking.entries.iter().map(|e| (e.cell, e.value)).collect();
    assert_eq!(got, want);
}

#[test]
fn probe_flags_swapped_classes() {
    // Two street frames that differ only in a car becoming a cyclist.
    let mut with_car = vec![class::ROAD; 45 * 85];
    for y in 20..30 {
        for x in 30..50 {
            with_car[y * 85 + x] = class::CAR;
        }
    }
    let with_cyclist: Vec<u8> = with_car
        .iter()
        .map(|&c| if c == class::CAR { class::CYCLIST } else { c })
        .collect();
    let frames = [
        ClassFrame::new(45, 85, 24, with_car).unwrap(),
        ClassFrame::new(45, 85, 24, with_cyclist).unwrap(),
    ];
    let vae = hand_wire_autoencoder::<f64>(&frames, 10.0).unwrap();
    let z_car = vae.encode(&frames[0]).unwrap();
    let z_cyclist = vae.encode(&frames[1]).unwrap();
    let lstm = constant_lstm(&z_cyclist, 4);
    let config = GridConfig {
        region_size: 1,
        increments: vec![0.0],
        debug_zero_row: false,
    };
    let grid = build_grid(&vae, &z_car, &config).unwrap();
    let probe = ProbeConfig {
        action: ActionTriple::new(1.0, 180.0, 0.0),
        epsilon: 0.01,
        pixels: PixelMapConfig::default(),
    };
    let result = grid_probe(&lstm, &vae, &grid_inputs(&grid).unwrap(), &Palette::urban(), &probe).unwrap();
    assert_eq!(result.report.anomalous_cells, 2);
    for cell in &result.report.cells {
        assert_eq!(cell.appeared, vec![class::CYCLIST]);
        assert_eq!(cell.vanished, vec![class::CAR]);
        let classes: Vec<u8> = cell.deltas.iter().map(|d| d.class).collect();
        assert_eq!(classes, vec![class::CAR, class::CYCLIST]);
    }
}
