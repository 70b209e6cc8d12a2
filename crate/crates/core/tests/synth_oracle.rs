use delaysinc::synth::{curve_argmax, delay_curve, gen_bandlimited_sloped, latent_map, DelayGrid};
use delaysinc::{apply_delay, brute_force_delay, gen_bandlimited, gen_multi_delay_task, gen_single_delay_task, Dataset, SynthSpec};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Fraction of periodogram power at or above `band_hz`.
fn power_above(x: &[f64], fs: f64, band_hz: f64) -> f64 {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut above, mut total) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
        let p = c.norm_sqr();
        total += p;
        if k as f64 * fs / n as f64 >= band_hz {
            above += p;
        }
    }
    above / total
}

#[test]
fn bandlimited_power_stays_below_band() {
    for (seed, band, slope) in [(0, 0.1, 0.0), (1, 0.5, 0.0), (2, 2.0, 0.0), (3, 0.1, 1.0), (4, 5.0, 2.0)] {
        let x = gen_bandlimited_sloped(seed, 1500, 25.0, band, slope).unwrap();
        let frac = power_above(x.values(), 25.0, band);
        assert!(frac <= 0.01, "band {band} slope {slope}: {frac}");
    }
}

#[test]
fn bandlimited_variance_for_long_signals() {
    for seed in 0..10 {
        let x = gen_bandlimited(seed, 30 * 25, 25.0, 0.5).unwrap();
        let n = x.len() as f64;
        let mean = x.values().iter().sum::<f64>() / n;
        let var = x.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((0.9..=1.1).contains(&var), "seed {seed}: {var}");
    }
    assert_ne!(gen_bandlimited(0, 750, 25.0, 0.5).unwrap(), gen_bandlimited(1, 750, 25.0, 0.5).unwrap());
}

#[test]
fn zero_delay_without_noise_is_the_latent_map() {
    let spec = SynthSpec { delays: vec![0.0], noise_std: 0.0, ..SynthSpec::default() };
    let ds = gen_single_delay_task(&spec).unwrap();
    for r in &ds.recordings {
        assert_eq!(r.labels, latent_map(&r.features));
    }
}

#[test]
fn grid_search_recovers_injected_delay() {
    let ds = gen_single_delay_task(&SynthSpec::default()).unwrap();
    for r in &ds.recordings {
        let g = latent_map(&r.features);
        let tau = brute_force_delay(&g, &r.labels, 0.0, 6.0, 0.4).unwrap();
        assert!((tau - 2.0).abs() <= 0.4 + 1e-9, "{}: {tau}", r.id);
    }
}

#[test]
fn grid_search_self_consistency() {
    let x = gen_bandlimited(9, 1500, 25.0, 0.5).unwrap();
    assert_eq!(brute_force_delay(&x, &x, 0.0, 6.0, 0.4).unwrap(), 0.0);
    let y = apply_delay(&x, 2.0, 12.5, 51).unwrap();
    assert!((brute_force_delay(&x, &y, 0.0, 6.0, 0.4).unwrap() - 2.0).abs() < 1e-9);
    assert!(brute_force_delay(&x, &y, 1.0, 0.0, 0.4).is_err());
    assert!(brute_force_delay(&x, &y, 0.0, 6.0, 0.0).is_err());
}

#[test]
fn default_grid_spans_zero_to_six_seconds() {
    let g = DelayGrid::default();
    assert_eq!((g.lo, g.hi, g.step), (0.0, 6.0, 0.4));
    let p = g.points().unwrap();
    assert_eq!(p.len(), 16);
    assert_eq!(p[5], 2.0);
}

#[test]
fn noiseless_delay_curve_is_unimodal() {
    let spec = SynthSpec { noise_std: 0.0, ..SynthSpec::default() };
    let ds = gen_single_delay_task(&spec).unwrap();
    let latents: Vec<_> = ds.recordings.iter().map(|r| latent_map(&r.features)).collect();
    let pairs: Vec<_> = ds.recordings.iter().zip(&latents).map(|(r, g)| (g, &r.labels, None)).collect();
    let curve = delay_curve(&pairs, &DelayGrid::default()).unwrap();
    let peak = curve.iter().position(|&(t, _)| t == curve_argmax(&curve).unwrap()).unwrap();
    assert!((curve[peak].0 - 2.0).abs() <= 0.4);
    assert!(curve[..=peak].windows(2).all(|w| w[1].1 > w[0].1), "{curve:?}");
    assert!(curve[peak..].windows(2).all(|w| w[1].1 < w[0].1), "{curve:?}");
}

#[test]
fn metadata_round_trips_through_saved_dataset() {
    let spec = SynthSpec { delays: vec![1.0, 3.0], n_recordings: 4, n_speakers: 2, duration_s: 20.0, ..SynthSpec::default() };
    let ds = gen_multi_delay_task(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back, ds);
    let meta = back.meta.unwrap();
    assert_eq!(meta.delays(), &[1.0, 3.0]);
    assert_eq!(meta.spec, spec);
}

#[test]
fn one_delay_matches_single_delay_task() {
    let spec = SynthSpec { seed: 4, ..SynthSpec::default() };
    assert_eq!(gen_multi_delay_task(&spec).unwrap(), gen_single_delay_task(&spec).unwrap());
    let two = SynthSpec { delays: vec![1.0, 3.0], ..spec.clone() };
    assert!(gen_single_delay_task(&two).is_err());
}

#[test]
fn equal_delays_reduce_to_single_delay_labels() {
    let single = gen_single_delay_task(&SynthSpec { seed: 6, ..SynthSpec::default() }).unwrap();
    let multi = gen_multi_delay_task(&SynthSpec { seed: 6, delays: vec![2.0, 2.0, 2.0], ..SynthSpec::default() }).unwrap();
    for (a, b) in single.recordings.iter().zip(&multi.recordings) {
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
    }
}

#[test]
fn region_masks_partition_every_recording() {
    let spec = SynthSpec { delays: vec![0.5, 1.0, 3.0], ..SynthSpec::default() };
    let ds = gen_multi_delay_task(&spec).unwrap();
    let meta = ds.meta.as_ref().unwrap();
    for (i, r) in ds.recordings.iter().enumerate() {
        let masks: Vec<Vec<bool>> = (0..3).map(|k| meta.region_mask(i, k)).collect();
        for n in 0..r.labels.len() {
            assert_eq!(masks.iter().filter(|m| m[n]).count(), 1);
        }
        for m in &masks {
            let share = m.iter().filter(|&&b| b).count() as f64 / m.len() as f64;
            assert!((share - 1.0 / 3.0).abs() < 0.01, "{share}");
        }
    }
}

#[test]
fn per_region_grid_search_recovers_each_delay() {
    let spec = SynthSpec { delays: vec![1.0, 3.0], ..SynthSpec::default() };
    let ds = gen_multi_delay_task(&spec).unwrap();
    let meta = ds.meta.as_ref().unwrap();
    let latents: Vec<_> = ds.recordings.iter().map(|r| latent_map(&r.features)).collect();
    for (k, &want) in [1.0, 3.0].iter().enumerate() {
        let masks: Vec<Vec<bool>> = (0..ds.recordings.len()).map(|i| meta.region_mask(i, k)).collect();
        let pairs: Vec<_> = ds
            .recordings
            .iter()
            .zip(&latents)
            .zip(&masks)
            .map(|((r, g), m)| (g, &r.labels, Some(m.as_slice())))
            .collect();
        let got = curve_argmax(&delay_curve(&pairs, &DelayGrid::default()).unwrap()).unwrap();
        assert!((got - want).abs() <= 0.4 + 1e-9, "region {k}: {got}");
    }
}

#[test]
fn invalid_specs_are_rejected() {
    for spec in [
        SynthSpec { label_bandwidth_hz: 12.5, ..SynthSpec::default() },
        SynthSpec { delays: vec![], ..SynthSpec::default() },
        SynthSpec { delays: vec![15.0], ..SynthSpec::default() },
    ] {
        assert!(gen_multi_delay_task(&spec).is_err());
    }
}
