//! Time-frequency transform tests: hand-computed DFT anchors, exact
//! round-trips, linearity, Parseval's identity, and spectrogram export.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tfdnet::autodiff::{check_gradients, ComplexPair, Graph};
use tfdnet::error::Error;
use tfdnet::signal::{
    istft, spectrogram_export, spectrogram_magnitudes, stft, write_spectrogram_csv, StftConfig,
    StftPlan,
};

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

#[test]
fn constant_series_puts_all_energy_in_the_dc_bin() {
    // A window of 8 ones sums to 8 in bin 0 and cancels in every other bin;
    // edge replication keeps even the boundary frames constant.
    let cfg = StftConfig::new(8, 4).unwrap();
    let plan = StftPlan::new(cfg, 16).unwrap();
    assert_eq!((plan.m, plan.n), (5, 5));
    let (re, im) = plan.forward(&vec![1.0; 16], 1);
    for frame in 0..plan.n {
        assert!(
            (re[frame] - 8.0).abs() < 1e-12,
            "dc bin, frame {frame}: {}",
            re[frame]
        );
        assert!(im[frame].abs() < 1e-12);
        for w in 1..plan.m {
            let idx = w * plan.n + frame;
            assert!(re[idx].abs() < 1e-12, "bin {w}, frame {frame}");
            assert!(im[idx].abs() < 1e-12, "bin {w}, frame {frame}");
        }
    }
}

#[test]
fn seven_channel_transform_has_expected_shape() {
    let cfg = StftConfig::new(16, 8).unwrap();
    let plan = StftPlan::new(cfg, 96).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data = randn(&mut rng, 7 * 96);
    let mut g = Graph::inference();
    let x = g.constant(data, &[7, 96]).unwrap();
    let z = stft(&mut g, x, &plan).unwrap();
    assert_eq!(g.shape(z.re), &[7, 9, 13]);
    assert_eq!(g.shape(z.im), &[7, 9, 13]);
    assert_eq!(g.len(z.re), 7 * 9 * 13);
}

#[test]
fn pure_cosine_lands_in_its_own_bin_on_interior_frames() {
    // x[t] = cos(2*pi*2*t/8) has period 4; every frame whose window is a
    // clean tile of the wave (frames 1..=3 here) reads 4 + 0i in bin 2 and
    // zero elsewhere.
    let len = 16;
    let x: Vec<f64> = (0..len)
        .map(|t| (std::f64::consts::TAU * 2.0 * t as f64 / 8.0).cos())
        .collect();
    let cfg = StftConfig::new(8, 4).unwrap();
    let plan = StftPlan::new(cfg, len).unwrap();
    let (re, im) = plan.forward(&x, 1);
    for frame in 1..=3usize {
        for w in 0..plan.m {
            let idx = w * plan.n + frame;
            if w == 2 {
                assert!((re[idx] - 4.0).abs() < 1e-10, "frame {frame} bin 2 re {}", re[idx]);
                assert!(im[idx].abs() < 1e-10, "frame {frame} bin 2 im {}", im[idx]);
            } else {
                assert!(re[idx].hypot(im[idx]) < 1e-10, "frame {frame} bin {w}");
            }
        }
    }
}

#[test]
fn inverse_reconstructs_the_input_for_each_window_config() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (rows, len) = (3, 96);
    for &(s, l) in &[(8usize, 4usize), (16, 8), (32, 16)] {
        let plan = StftPlan::new(StftConfig::new(s, l).unwrap(), len).unwrap();
        for trial in 0..50 {
            let data = randn(&mut rng, rows * len);
            let (re, im) = plan.forward(&data, rows);
            let back = plan.inverse(&re, &im, rows);
            let worst = back
                .iter()
                .zip(&data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(worst < 1e-10, "window {s}/{l}, trial {trial}: err {worst}");
        }
    }
}

#[test]
fn graph_round_trip_matches_the_plan_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (rows, len) = (2, 32);
    let plan = StftPlan::new(StftConfig::new(8, 4).unwrap(), len).unwrap();
    let data = randn(&mut rng, rows * len);
    let mut g = Graph::inference();
    let x = g.constant(data.clone(), &[rows, len]).unwrap();
    let z = stft(&mut g, x, &plan).unwrap();
    let back = istft(&mut g, z, &plan).unwrap();
    assert_eq!(g.shape(back), &[rows, len]);
    for (got, want) in g.data(back).iter().zip(&data) {
        assert!((got - want).abs() < 1e-10);
    }
}

#[test]
fn zero_spectra_invert_to_a_zero_series() {
    let plan = StftPlan::new(StftConfig::new(8, 4).unwrap(), 24).unwrap();
    let mut g = Graph::inference();
    let shape = [2, plan.m, plan.n];
    let re = g.constant(vec![0.0; 2 * plan.m * plan.n], &shape).unwrap();
    let im = g.constant(vec![0.0; 2 * plan.m * plan.n], &shape).unwrap();
    let back = istft(&mut g, ComplexPair { re, im }, &plan).unwrap();
    for &v in g.data(back) {
        assert_eq!(v, 0.0);
    }
}

#[test]
fn dc_perturbation_of_one_frame_shifts_exactly_its_samples() {
    // Non-overlapping windows (stride = window = 8) tile the padded series,
    // so frame 1 owns original samples 4..12 outright. Adding 8 to its DC
    // coefficient adds 8/8 = 1 to exactly those samples.
    let len = 16;
    let plan = StftPlan::new(StftConfig::new(8, 8).unwrap(), len).unwrap();
    assert_eq!(plan.n, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let data = randn(&mut rng, len);
    let (re, im) = plan.forward(&data, 1);
    let base = plan.inverse(&re, &im, 1);
    let mut re2 = re;
    re2[1] += 8.0; // bin 0, frame 1
    let bumped = plan.inverse(&re2, &im, 1);
    for t in 0..len {
        let delta = bumped[t] - base[t];
        let want = if (4..12).contains(&t) { 1.0 } else { 0.0 };
        assert!((delta - want).abs() < 1e-12, "sample {t}: delta {delta}");
    }
}

#[test]
fn frame_energy_obeys_parseval() {
    // With stride = window, frame 1 holds samples 4..12 unmodified, so the
    // retained half-spectrum must carry the window's energy: sum x^2 =
    // (|X_0|^2 + 2*sum_interior |X_w|^2 + |X_nyq|^2) / 8.
    let len = 16;
    let plan = StftPlan::new(StftConfig::new(8, 8).unwrap(), len).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let data = randn(&mut rng, len);
    let (re, im) = plan.forward(&data, 1);
    let time_energy: f64 = data[4..12].iter().map(|v| v * v).sum();
    let mut spec_energy = 0.0;
    for w in 0..plan.m {
        let idx = w * plan.n + 1;
        let p = re[idx] * re[idx] + im[idx] * im[idx];
        let weight = if w == 0 || w == plan.m - 1 { 1.0 } else { 2.0 };
        spec_energy += weight * p;
    }
    spec_energy /= 8.0;
    assert!(
        (time_energy - spec_energy).abs() < 1e-9,
        "time {time_energy} vs spectral {spec_energy}"
    );
}

#[test]
fn transform_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let len = 48;
    let plan = StftPlan::new(StftConfig::new(16, 8).unwrap(), len).unwrap();
    let a = randn(&mut rng, len);
    let b = randn(&mut rng, len);
    let scale = -1.75;
    let combined: Vec<f64> = a.iter().zip(&b).map(|(x, y)| scale * x + y).collect();
    let (ra, ia) = plan.forward(&a, 1);
    let (rb, ib) = plan.forward(&b, 1);
    let (rc, ic) = plan.forward(&combined, 1);
    for i in 0..rc.len() {
        assert!((rc[i] - (scale * ra[i] + rb[i])).abs() < 1e-12, "re {i}");
        assert!((ic[i] - (scale * ia[i] + ib[i])).abs() < 1e-12, "im {i}");
    }
}

#[test]
fn round_trip_gradient_matches_finite_differences() {
    let (rows, len) = (2, 16);
    let plan = StftPlan::new(StftConfig::new(8, 4).unwrap(), len).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..5 {
        let data = randn(&mut rng, rows * len);
        let plan_ref = Arc::clone(&plan);
        let err = check_gradients(
            move |g, ids| {
                let z = stft(g, ids[0], &plan_ref).unwrap();
                let sq_re = g.mul(z.re, z.re).unwrap();
                let scaled = g.affine(sq_re, 0.25, 0.0);
                let gated = g.tanh(scaled);
                let pair = ComplexPair { re: gated, im: z.im };
                let back = istft(g, pair, &plan_ref).unwrap();
                let t = g.tanh(back);
                g.mean_all(t).unwrap()
            },
            &[(data, vec![rows, len])],
            1e-5,
        );
        assert!(err < 1e-4, "trial {trial}: rel err {err}");
    }
}

#[test]
fn spectrogram_of_a_constant_is_dc_only() {
    let cfg = StftConfig::new(8, 4).unwrap();
    let (mags, m, n) = spectrogram_magnitudes(&vec![2.0; 32], 32, cfg).unwrap();
    assert_eq!((m, n), (5, 9));
    for frame in 0..n {
        assert!((mags[frame] - 16.0).abs() < 1e-12, "dc frame {frame}");
        for w in 1..m {
            assert!(mags[w * n + frame].abs() < 1e-12, "bin {w} frame {frame}");
        }
    }
}

#[test]
fn spectrogram_of_a_tone_peaks_in_its_bin() {
    let len = 32;
    let x: Vec<f64> = (0..len)
        .map(|t| (std::f64::consts::TAU * 2.0 * t as f64 / 8.0).cos())
        .collect();
    let cfg = StftConfig::new(8, 4).unwrap();
    let (mags, m, n) = spectrogram_magnitudes(&x, len, cfg).unwrap();
    // Interior frames see a clean tile: bin 2 reads |4|, everything else ~0.
    for frame in 1..n - 1 {
        let column: Vec<f64> = (0..m).map(|w| mags[w * n + frame]).collect();
        let peak = column
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 2, "frame {frame}: {column:?}");
        assert!((column[2] - 4.0).abs() < 1e-10);
    }
    // And the single largest entry of the whole matrix sits in row 2.
    let global = (0..m * n).max_by(|a, b| mags[*a].total_cmp(&mags[*b])).unwrap();
    assert_eq!(global / n, 2);
}

#[test]
fn spectrogram_export_writes_one_csv_per_channel() {
    let dir = tempfile::tempdir().unwrap();
    let len = 32;
    let mut data = vec![3.0; len];
    data.extend((0..len).map(|t| (std::f64::consts::TAU * 2.0 * t as f64 / 8.0).cos()));
    let cfg = StftConfig::new(8, 4).unwrap();
    let base = dir.path().join("spectrogram_s8.csv");
    let written = spectrogram_export(&data, 2, len, cfg, &base).unwrap();
    assert_eq!(written.len(), 2);
    assert_eq!(written[0].file_name().unwrap(), "spectrogram_s8_ch0.csv");
    assert_eq!(written[1].file_name().unwrap(), "spectrogram_s8_ch1.csv");

    let text = std::fs::read_to_string(&written[0]).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5 + 1, "header plus one line per bin");
    assert!(lines[0].starts_with("freq_bin,frame_0,"));
    // Constant channel: DC row is 24 everywhere, the rest are zero.
    let dc: Vec<f64> = lines[1].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(dc.len(), 9);
    for v in dc {
        assert!((v - 24.0).abs() < 1e-12);
    }
    for line in &lines[2..] {
        for v in line.split(',').skip(1) {
            assert!(v.parse::<f64>().unwrap().abs() < 1e-12);
        }
    }
}

#[test]
fn spectrogram_write_to_a_missing_directory_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("no_such_dir").join("spec.csv");
    let err = write_spectrogram_csv(&path, &[1.0, 2.0], 2, 1).unwrap_err();
    match &err {
        Error::Io { context, .. } => assert!(
            context.contains("no_such_dir"),
            "context should name the path: {context}"
        ),
        other => panic!("expected an io error, got {other:?}"),
    }
}

#[test]
fn config_and_plan_validation_reject_bad_geometry() {
    assert!(StftConfig::new(7, 4).is_err(), "odd window");
    assert!(StftConfig::new(0, 1).is_err(), "zero window");
    assert!(StftConfig::new(8, 0).is_err(), "zero stride");
    assert!(StftConfig::new(8, 9).is_err(), "stride beyond window");
    let cfg = StftConfig::new(16, 8).unwrap();
    let err = match StftPlan::new(cfg, 12) {
        Err(e) => e,
        Ok(_) => panic!("series shorter than the window must be rejected"),
    };
    assert!(
        err.to_string().contains("12") && err.to_string().contains("16"),
        "short series error should name both lengths: {err}"
    );
}
