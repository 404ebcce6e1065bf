use std::f64::consts::PI;

use ddwave::channel::{generate_channel, ChannelConfig};
use ddwave::par::Exec;
use ddwave::scheme::SchemeKind;
use ddwave::sim::{build_scheme, impulse_leakage, parse_config_str, run_plan_with, sidelobes, RunPlan, SchemeOutcome};

fn plan(json: &str) -> RunPlan {
    parse_config_str(json).unwrap().resolve().unwrap()
}

/// `|D_N(x)|²`, the normalized Dirichlet kernel power at offset `x` bins.
fn dirichlet_power(x: f64, n: usize) -> f64 {
    let n = n as f64;
    if x.abs() < 1e-12 {
        return 1.0;
    }
    (PI * x).sin().powi(2) / (n * n * (PI * x / n).sin().powi(2))
}

#[test]
fn otfs_leakage_matches_dirichlet_kernel() {
    let p = plan(r#"{"experiment": "impulse_leakage", "schemes": ["otfs"]}"#);
    let s = build_scheme(SchemeKind::Otfs, &p).unwrap();
    let (report, _) = impulse_leakage(&p, s.as_ref()).unwrap();
    let kept: f64 = [-1.0, 0.0, 1.0].iter().map(|k| dirichlet_power(0.5 - k, 8)).sum();
    let expected = 10.0 * (1.0 - kept).log10();
    assert!((report.leakage_ratio_db - expected).abs() < 1e-9, "{} vs {expected}", report.leakage_ratio_db);
}

#[test]
fn integer_doppler_does_not_leak_in_otfs() {
    let p = plan(r#"{"experiment": "impulse_leakage", "schemes": ["otfs"], "channel": {"fractional_doppler_override": 1.0}}"#);
    let s = build_scheme(SchemeKind::Otfs, &p).unwrap();
    let (report, grid) = impulse_leakage(&p, s.as_ref()).unwrap();
    assert_eq!(report.leakage_ratio_db, -200.0);
    assert!((grid[32][5].norm() - 1.0).abs() < 1e-9);
}

#[test]
fn effective_channel_predicts_received_symbols() {
    let p = plan("{}");
    let ch = generate_channel(&p.channel, 5, 1200).unwrap();
    let d: Vec<_> = (0..p.geometry.mn())
        .map(|k| ddwave::C64::from_polar(1.0, 0.37 * k as f64))
        .collect();
    for kind in SchemeKind::ALL {
        let s = build_scheme(kind, &p).unwrap();
        let h = s.effective_channel(&ch, Exec::Sequential).unwrap();
        let direct = s.demodulate(&ch.apply(&s.modulate(&d).unwrap()).unwrap()).unwrap();
        let predicted = h.matvec(&d);
        let err = direct.iter().zip(&predicted).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{kind}: {err}");
    }
}

#[test]
fn table_scale_frame_lengths() {
    let p = plan("{}");
    let len = |k| build_scheme(k, &p).unwrap().tx_len();
    assert_eq!(len(SchemeKind::Otfs), 512 + 4);
    assert_eq!(len(SchemeKind::GfOtfs), 512 + 128);
    assert_eq!(len(SchemeKind::RwOtfs), 512 + 128);
    assert_eq!(len(SchemeKind::DrUfmc), 512 + 19);
}

#[test]
fn filtering_lowers_inactive_half_sidelobes() {
    let p = plan(r#"{"experiment": "sidelobes", "n_frames": 4}"#);
    let level = |k| sidelobes(&p, build_scheme(k, &p).unwrap().as_ref()).unwrap().0.inactive_mean_db;
    let otfs = level(SchemeKind::Otfs);
    let gf = level(SchemeKind::GfOtfs);
    assert!(otfs > -40.0 && otfs < -20.0, "{otfs}");
    assert!(gf < otfs - 20.0, "gf {gf} vs otfs {otfs}");
}

#[test]
fn psd_csv_is_centred_and_finite() {
    let p = plan(r#"{"experiment": "psd", "schemes": ["otfs", "gf_otfs"], "n_frames": 4}"#);
    let out = run_plan_with(&p, Exec::Sequential).unwrap();
    let body = String::from_utf8(out.file("psd_gf_otfs.csv").unwrap().contents.clone()).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("freq_hz,psd_db"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (f, v) = l.split_once(',').unwrap();
            (f.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert!(rows.windows(2).all(|w| w[0].0 < w[1].0));
    assert!((rows[0].0 + rows.last().unwrap().0).abs() < 1e-6);
    assert!(rows.iter().all(|(_, v)| v.is_finite() && *v >= -200.0));
    match out.report.scheme(SchemeKind::GfOtfs).unwrap() {
        SchemeOutcome::Psd(s) => assert!(s.oob_db < -60.0, "{}", s.oob_db),
        other => panic!("{other:?}"),
    }
}

#[test]
fn doppler_stays_within_maximum() {
    let p = plan("{}");
    let nu_max = p.channel.max_doppler_hz();
    for seed in 0..20 {
        let ch = generate_channel(&p.channel, seed, 700).unwrap();
        assert!(ch.doppler_hz().iter().all(|nu| nu.abs() <= nu_max + 1e-9));
        assert_eq!(ch.delays(), &[0, 1, 2, 3, 4]);
    }
}

#[test]
fn unit_power_profile_on_average() {
    let cfg = ChannelConfig::reference(&ddwave::FrameGeometry::reference());
    let total: f64 = (0..200)
        .map(|seed| {
            let ch = generate_channel(&cfg, seed, 10).unwrap();
            (0..ch.n_taps()).map(|l| ch.gain(l, 0).norm_sqr()).sum::<f64>()
        })
        .sum::<f64>()
        / 200.0;
    assert!((total - 1.0).abs() < 1e-9, "{total}");
}
