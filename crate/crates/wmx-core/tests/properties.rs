//! Property-based invariants across the toolkit.

use proptest::prelude::*;
use wmx_core::featviz::{eigen_maps, rgb_mask, LayerMaps, Upsample};
use wmx_core::latentgrid::{build_grid, perturb_region, GridConfig, LatentDecoder};
use wmx_core::lstm_xai::{lrp, mu_filter, record_trace, relevance_to_pixels, HiddenTrace, MuMode, PixelMapConfig};
use wmx_core::nets::{ActionTriple, FeatureMap, Lstm, LstmState};
use wmx_core::numerics::{
    correlation_distance, fft2, heaviside_pulse, ifft2, kl_divergence, low_pass, nss, svd, CorrelationForm, Matrix,
};
use wmx_core::rgae::{fit, FitConfig};
use wmx_core::scenario::{table1_schedule, Renderer, SceneSpec};
use wmx_core::store::{pack_model, unpack_model, ClassFrame, FrameDataset, Palette, RgbImage};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn sized_matrix() -> impl Strategy<Value = Matrix<f64>> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| matrix(r, c))
}

fn frames(n: usize, h: usize, w: usize) -> impl Strategy<Value = Vec<ClassFrame>> {
    prop::collection::vec(prop::collection::vec(0u8..24, h * w), n)
        .prop_map(move |fs| fs.into_iter().map(|d| ClassFrame::new(h, w, 24, d).unwrap()).collect())
}

fn frob(m: &Matrix<f64>) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(m in sized_matrix()) {
        let d = svd(&m).unwrap();
        let back = d.reconstruct();
        let err = m.as_slice().iter().zip(back.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-9 * frob(&m).max(1e-300));
        prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        let utu = d.u.transpose().matmul(&d.u).unwrap();
        let vvt = d.vt.matmul(&d.vt.transpose()).unwrap();
        let r = d.s.len();
        for i in 0..r {
            for j in 0..r {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((utu[(i, j)] - want).abs() <= 1e-9);
                prop_assert!((vvt[(i, j)] - want).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn fft_round_trips_and_is_linear(x in matrix(6, 10), y in matrix(6, 10), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        prop_assert!(max_diff(ifft2(&fft2(&x)).as_slice(), x.as_slice()) <= 1e-9);
        let mix = Matrix::from_vec(6, 10, x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let (fm, fx, fy) = (fft2(&mix), fft2(&x), fft2(&y));
        for i in 0..60 {
            let want = fx.data[i] * a + fy.data[i] * b;
            prop_assert!((fm.data[i] - want).norm() <= 1e-9);
        }
    }

    #[test]
    fn low_pass_is_a_contracting_projection(x in matrix(9, 13), y in matrix(9, 13), cutoff in 1usize..=117) {
        let once = low_pass(&x, cutoff).unwrap();
        prop_assert!(max_diff(low_pass(&once, cutoff).unwrap().as_slice(), once.as_slice()) <= 1e-9);
        prop_assert!(frob(&once) <= frob(&x) + 1e-9);
        let sum = Matrix::from_vec(9, 13, x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p + q).collect()).unwrap();
        let lin: Vec<f64> = once.as_slice().iter().zip(low_pass(&y, cutoff).unwrap().as_slice()).map(|(p, q)| p + q).collect();
        prop_assert!(max_diff(low_pass(&sum, cutoff).unwrap().as_slice(), &lin) <= 1e-9);
    }

    #[test]
    fn kl_is_non_negative_and_zero_on_equal(p in prop::collection::vec(0.0f64..5.0, 12), q in prop::collection::vec(0.0f64..5.0, 12)) {
        prop_assume!(p.iter().sum::<f64>() > 0.0 && q.iter().sum::<f64>() > 0.0);
        prop_assert!(kl_divergence(&p, &q, 1e-10).unwrap() >= -1e-15);
        prop_assert!(kl_divergence(&p, &p, 1e-10).unwrap().abs() <= 1e-15);
    }

    #[test]
    fn correlation_distance_is_affine_invariant(
        u in prop::collection::vec(-5.0f64..5.0, 16),
        v in prop::collection::vec(-5.0f64..5.0, 16),
        a in 0.1f64..10.0, b in -5.0f64..5.0, c in 0.1f64..10.0, d in -5.0f64..5.0,
    ) {
        prop_assume!(u.iter().any(|&x| x != u[0]) && v.iter().any(|&x| x != v[0]));
        let base = correlation_distance(&u, &v, CorrelationForm::Centered).unwrap();
        let ut: Vec<f64> = u.iter().map(|x| a * x + b).collect();
        let vt: Vec<f64> = v.iter().map(|x| c * x + d).collect();
        let moved = correlation_distance(&ut, &vt, CorrelationForm::Centered).unwrap();
        prop_assert!((base - moved).abs() <= 1e-9);
        prop_assert!((0.0..=2.0).contains(&base));
    }

    #[test]
    fn pulse_mass(len in 2usize..500, a in 0usize..500, span in 1usize..500) {
        prop_assume!(a + span <= len);
        let p: Vec<f64> = heaviside_pulse(len, a, a + span).unwrap();
        prop_assert_eq!(p.iter().sum::<f64>(), span as f64);
    }

    #[test]
    fn nss_is_affine_invariant(sal in prop::collection::vec(0.0f64..1.0, 30), fix in prop::collection::vec(any::<bool>(), 30), s in 0.1f64..10.0, t in -5.0f64..5.0) {
        prop_assume!(fix.iter().any(|&f| f));
        let scaled: Vec<f64> = sal.iter().map(|x| s * x + t).collect();
        prop_assert!((nss(&sal, &fix).unwrap() - nss(&scaled, &fix).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn lstm_activations_stay_in_range(seed in any::<u64>(), scale in 0.1f64..5.0, z in prop::collection::vec(-3.0f64..3.0, 5)) {
        let m = Lstm::<f64>::random(5, 6, scale, seed);
        let cap = m.step(&LstmState::zeros(6), &z, &ActionTriple::new(1.0, 270.0, -30.0)).unwrap();
        for &g in cap.input_gate.iter().chain(&cap.forget_gate).chain(&cap.output_gate) {
            prop_assert!(g > 0.0 && g < 1.0);
        }
        prop_assert!(cap.candidate.iter().chain(&cap.state.h).all(|v| v.abs() < 1.0));
        let again = m.step(&LstmState::zeros(6), &z, &ActionTriple::new(1.0, 270.0, -30.0)).unwrap();
        prop_assert_eq!(cap.output, again.output);
    }

    #[test]
    fn trace_entries_are_strictly_inside_unit_interval(seed in any::<u64>()) {
        let m = Lstm::<f64>::random(4, 10, 2.0, seed);
        let actions = table1_schedule().actions(60).unwrap();
        let trace = record_trace(&m, &[0.5, -0.5, 1.0, 0.0], &actions).unwrap();
        prop_assert!(trace.values().as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_epsilon_conserves_on_positive_fixtures(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = Lstm::<f64>::zeros(3, 4);
        for v in m.w_ih.as_mut_slice().iter_mut().chain(m.head_w.as_mut_slice()) {
            *v = rng.gen_range(0.01..2.0);
        }
        let z: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..2.0)).collect();
        let cap = m.step(&LstmState::zeros(4), &z, &ActionTriple::new(1.0, 45.0, 10.0)).unwrap();
        let rel = lrp(&m, &cap, 0.0).unwrap();
        prop_assert!((rel.recovered - rel.injected).abs() <= 1e-9);
        prop_assert!((rel.input_total() - 3.0).abs() <= 1e-9);
        prop_assert!(rel.r_gates.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mu_modes_agree_when_all_similarities_negative(seed in any::<u64>(), cells in 2usize..8) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let actions = table1_schedule().actions(400).unwrap();
        // Each cell follows −a2 plus a small cell-specific wobble.
        let rows: Vec<Vec<f64>> = actions
            .iter()
            .enumerate()
            .map(|(t, a)| (0..cells).map(|c| 0.5 - a.a2 / 400.0 + 0.01 * (c as f64 + 1.0) * ((t * (c + 2)) as f64).sin() * rng.gen_range(0.5..1.0)).collect())
            .collect();
        let trace = HiddenTrace::new(Matrix::from_rows(&rows).unwrap()).unwrap();
        let min = mu_filter(&trace, &actions, 2, MuMode::Min).unwrap();
        let abs = mu_filter(&trace, &actions, 2, MuMode::MaxAbs).unwrap();
        prop_assume!(min.entries.iter().all(|e| e.value < 0.0));
        let a: Vec<usize> = min.entries.iter().map(|e| e.cell).collect();
        let b: Vec<usize> = abs.entries.iter().map(|e| e.cell).collect();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projector_properties(fs in frames(12, 5, 6), probe in prop::collection::vec(-1.0f64..1.0, 30), k in 1usize..8) {
        let basis = fit::<f64>(&fs, &FitConfig::new(k));
        prop_assume!(basis.is_ok());
        let basis = basis.unwrap();
        let p = |x: &[f64]| basis.decode(&basis.encode(x).unwrap()).unwrap();
        let once = p(&probe);
        prop_assert!(max_diff(&p(&once), &once) <= 1e-9);
        // ⟨Px, y⟩ = ⟨x, Py⟩
        let other: Vec<f64> = probe.iter().rev().copied().collect();
        let lhs: f64 = once.iter().zip(&other).map(|(a, b)| a * b).sum();
        let rhs: f64 = probe.iter().zip(&p(&other)).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-9);
    }

    #[test]
    fn evaluate_ignores_test_order(fs in frames(10, 4, 5), rot in 0usize..10) {
        let basis = fit::<f64>(&fs, &FitConfig::new(3));
        prop_assume!(basis.is_ok());
        let basis = basis.unwrap();
        let mut shuffled = fs.clone();
        shuffled.rotate_left(rot);
        shuffled.reverse();
        prop_assert!((basis.evaluate(&fs).unwrap() - basis.evaluate(&shuffled).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn grid_is_linear_in_the_increment(fs in frames(12, 4, 5), z in prop::collection::vec(-1.0f64..1.0, 6)) {
        let basis = fit::<f64>(&fs, &FitConfig::new(6));
        prop_assume!(basis.is_ok());
        let basis = basis.unwrap();
        let snapshot = z.clone();
        let config = GridConfig { region_size: 2, increments: vec![1.0, 2.0, 3.0], debug_zero_row: false };
        let grid = build_grid(&basis, &z, &config).unwrap();
        prop_assert_eq!(grid.decode_calls, 9);
        prop_assert!(z.iter().zip(&snapshot).all(|(a, b)| a.to_bits() == b.to_bits()));
        let base = basis.decode_dense(&z).unwrap();
        let alpha = basis.alpha();
        for (r, inc) in [1.0, 2.0, 3.0].iter().enumerate() {
            for c in 0..3 {
                for (d, v) in grid.dense[r][c].iter().enumerate() {
                    let cols = alpha[(d, 2 * c)] + alpha[(d, 2 * c + 1)];
                    prop_assert!((v - base[d] - inc * cols).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn perturbation_touches_only_its_region(z in prop::collection::vec(-5.0f64..5.0, 20), region in 0usize..4, delta in -3.0f64..3.0) {
        let out = perturb_region(&z, region, 5, delta).unwrap();
        for (i, (a, b)) in z.iter().zip(&out).enumerate() {
            if i / 5 == region {
                prop_assert_eq!(*b, a + delta);
            } else {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        prop_assert!(perturb_region(&z, 4, 5, delta).is_err());
    }

    #[test]
    fn pixel_map_is_positively_homogeneous(fs in frames(12, 4, 5), r in prop::collection::vec(-2.0f64..2.0, 4), lambda in 0.1f64..10.0) {
        let basis = fit::<f64>(&fs, &FitConfig::new(4));
        prop_assume!(basis.is_ok());
        let basis = basis.unwrap();
        let z = vec![0.2, -0.1, 0.3, 0.0];
        let config = PixelMapConfig { delta: 1.0, top_q: None };
        let a = relevance_to_pixels(&basis, &z, &r, &config).unwrap();
        let scaled: Vec<f64> = r.iter().map(|v| v * lambda).collect();
        let b = relevance_to_pixels(&basis, &z, &scaled, &config).unwrap();
        for (x, y) in a.raw().iter().zip(b.raw()) {
            prop_assert!((x * lambda - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }

    #[test]
    fn rgb_mask_is_bounded_and_black_at_zero(values in prop::collection::vec(-4.0f64..4.0, 12), t in 0usize..400) {
        let frame = Renderer::new(&SceneSpec::street(1)).frame((8.1, 1.0), &ActionTriple::new(1.0, 180.0, 0.0), t).unwrap();
        let map = Matrix::from_vec(3, 4, values.clone()).unwrap();
        let img = rgb_mask(&map, &frame, &Palette::urban(), Upsample::Nearest).unwrap();
        prop_assert_eq!(img.data.len(), 45 * 85 * 3);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        for y in 0..45 {
            for x in 0..85 {
                if map[(y * 3 / 45, x * 4 / 85)] == lo {
                    prop_assert_eq!(img.pixel(y, x), [0, 0, 0]);
                }
            }
        }
    }

    #[test]
    fn eigen_maps_are_unit_and_ordered(data in prop::collection::vec(0.0f64..3.0, 6 * 4 * 5)) {
        let layer = LayerMaps { layer: 1, maps: FeatureMap::new(6, 4, 5, data).unwrap() };
        let eig = eigen_maps(&layer, 4).unwrap();
        prop_assert!(eig.singular_values.windows(2).all(|w| w[0] >= w[1]));
        for m in &eig.maps {
            prop_assert!((frob(m) - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn model_blob_round_trips(seed in any::<u64>(), latent in 1usize..6, cells in 1usize..6) {
        let (manifest, tensors) = Lstm::<f64>::random(latent, cells, 1.0, seed).to_parts().unwrap();
        let (packed, blob) = pack_model(&manifest, &tensors).unwrap();
        let json = serde_json::to_string(&packed).unwrap();
        let (m2, t2) = unpack_model(&json, &blob).unwrap();
        prop_assert_eq!(m2, packed);
        prop_assert_eq!(t2, tensors);
    }

    #[test]
    fn frame_files_round_trip_and_reject_bad_bytes(fs in frames(3, 4, 6), bad in 24u8..=255) {
        let ds = FrameDataset::from_frames(&fs).unwrap();
        let mut bytes = ds.encode().unwrap();
        prop_assert_eq!(FrameDataset::decode(&bytes).unwrap(), ds);
        let last = bytes.len() - 1;
        bytes[last] = bad;
        prop_assert!(FrameDataset::decode(&bytes).is_err());
    }

    #[test]
    fn ppm_is_deterministic(w in 1usize..20, h in 1usize..20, seed in any::<u8>()) {
        let gray: Vec<u8> = (0..w * h).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let img = RgbImage::from_gray(w, h, &gray);
        let (a, b) = (img.encode_ppm().unwrap(), img.clone().encode_ppm().unwrap());
        let header = format!("P6\n{w} {h}\n255\n");
        prop_assert_eq!(a.len(), header.len() + w * h * 3);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn rendering_is_pure_and_in_palette(seed in 0u64..50, t in 0usize..400) {
        let schedule = table1_schedule();
        let actions = schedule.actions(400).unwrap();
        let r = Renderer::new(&SceneSpec::street(seed));
        let path = r.trajectory(&actions);
        let a = r.frame(path[t], &actions[t], t).unwrap();
        let b = Renderer::new(&SceneSpec::street(seed)).frame(path[t], &actions[t], t).unwrap();
        prop_assert!(a.pixels().iter().all(|&c| c < 24));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn schedule_is_continuous_where_endpoints_meet(t in 0usize..399) {
        let s = table1_schedule();
        let (a, b) = (s.at(t).unwrap(), s.at(t + 1).unwrap());
        let seg = s.segment_of(t).unwrap();
        if seg.end == t {
            let next = s.segment_of(t + 1).unwrap();
            if seg.a2.to == next.a2.from {
                prop_assert_eq!(a.a2, b.a2);
            }
        } else {
            // Inside a segment each step moves by the segment's constant slope.
            let span = (seg.end - seg.start) as f64;
            prop_assert!((b.a2 - a.a2 - (seg.a2.to - seg.a2.from) / span).abs() <= 1e-9);
        }
    }
}
