use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use speechmask_core::audio::{read_wav, write_wav, SampleFormat};
use speechmask_core::neural::{count_macs_per_second, WeightFile};
use speechmask_core::{AudioBuffer, ModelKind};

fn speechmask(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speechmask"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tone_noise(n: usize, rate: u32, seed: u64) -> AudioBuffer {
    let mut state = seed.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1);
    let samples = (0..n)
        .map(|i| {
            state = state
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            let r = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            let t = i as f64 / rate as f64;
            0.2 * (2.0 * std::f64::consts::PI * 220.0 * t).sin() * (3.0 * t).sin().abs() + 0.05 * r
        })
        .collect();
    AudioBuffer::new(samples, rate)
}

fn write(dir: &Path, name: &str, audio: &AudioBuffer, fmt: SampleFormat) -> PathBuf {
    let p = dir.join(name);
    write_wav(&p, audio, fmt).unwrap();
    p
}

#[test]
fn simulate_enhance_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir_all(d.join("speech")).unwrap();
    std::fs::create_dir_all(d.join("noise")).unwrap();
    for k in 0..2 {
        write(
            &d.join("speech"),
            &format!("s{k}.wav"),
            &tone_noise(24_000, 16_000, k),
            SampleFormat::Pcm16,
        );
    }
    write(
        &d.join("noise"),
        "n.wav",
        &tone_noise(9_000, 32_000, 9),
        SampleFormat::Float32,
    );

    let out = speechmask(&[
        "simulate",
        "--speech-dir",
        s(&d.join("speech")),
        "--noise-dir",
        s(&d.join("noise")),
        "-o",
        s(&d.join("set")),
        "--count",
        "3",
        "--seed",
        "5",
        "--snr-min-db",
        "-5",
        "--snr-max-db",
        "5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = d.join("set").join("manifest.tsv");
    assert!(String::from_utf8_lossy(&out.stdout).contains("manifest.tsv"));

    let mixes: Vec<String> = (0..3)
        .map(|i| s(&d.join("set/mix").join(format!("{i:05}.wav"))).to_string())
        .collect();
    let enh_dir = d.join("enh");
    let mut args = vec!["enhance", "--engine", "baseline", "-o", s(&enh_dir)];
    args.extend(mixes.iter().map(String::as_str));
    let out = speechmask(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let log = String::from_utf8_lossy(&out.stderr);
    assert_eq!(log.matches("real-time factor").count(), 3, "{log}");
    let (mix, _) = read_wav(&mixes[0]).unwrap();
    let (enh, _) = read_wav(d.join("enh/00000.wav")).unwrap();
    assert_eq!(mix.len(), enh.len());

    let out = speechmask(&[
        "eval",
        "--manifest",
        s(&manifest),
        "--enhanced-dir",
        s(&d.join("enh")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.starts_with("id\tsdr_db\tstoi\tstatus"));
    assert_eq!(table.lines().count(), 5);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("enh/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(json["summary"]["scored"], 3);

    // references score at the cap
    let out = speechmask(&[
        "eval",
        "--manifest",
        s(&manifest),
        "--enhanced-dir",
        s(&d.join("set/clean")),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean\t60.0000\t1.000000"));

    // a missing enhanced file fails the run but still reports
    std::fs::remove_file(d.join("enh/00001.wav")).unwrap();
    let out = speechmask(&[
        "eval",
        "--manifest",
        s(&manifest),
        "--enhanced-dir",
        s(&d.join("enh")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("00001\tNA\tNA\terror"));
}

#[test]
fn enhance_silence_and_zero_network() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let silent = write(
        d,
        "silent.wav",
        &AudioBuffer::zeros(16_000, 32_000),
        SampleFormat::Pcm16,
    );
    let out = speechmask(&["enhance", "-o", s(&d.join("o")), s(&silent)]);
    assert!(out.status.success());
    let (y, _) = read_wav(d.join("o/silent.wav")).unwrap();
    assert!(y.samples.iter().all(|v| *v == 0.0));

    let w = d.join("zero.nmwf");
    WeightFile::zeros(ModelKind::Gru).write(&w).unwrap();
    let x = tone_noise(16_000, 32_000, 3);
    let input = write(d, "x.wav", &x, SampleFormat::Float32);
    let out = speechmask(&[
        "enhance",
        "--engine",
        "gru",
        "--weights",
        s(&w),
        "-o",
        s(&d.join("g")),
        s(&input),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (y, fmt) = read_wav(d.join("g/x.wav")).unwrap();
    assert_eq!(fmt, SampleFormat::Float32);
    let (x32, _) = read_wav(&input).unwrap();
    let err = x32
        .samples
        .iter()
        .zip(&y.samples)
        .map(|(a, b)| (0.5 * a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn sixteen_khz_input_keeps_rate_and_length() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = write(
        d,
        "w.wav",
        &tone_noise(12_345, 16_000, 4),
        SampleFormat::Pcm16,
    );
    let out = speechmask(&[
        "enhance",
        "-o",
        s(&d.join("o")),
        "--format",
        "float32",
        s(&input),
    ]);
    assert!(out.status.success());
    let (y, fmt) = read_wav(d.join("o/w.wav")).unwrap();
    assert_eq!(
        (y.sample_rate, y.len(), fmt),
        (16_000, 12_345, SampleFormat::Float32)
    );
}

#[test]
fn failures_set_the_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let good = write(
        d,
        "good.wav",
        &tone_noise(8000, 32_000, 1),
        SampleFormat::Pcm16,
    );
    let bad = d.join("bad.wav");
    std::fs::write(&bad, b"not a wav").unwrap();
    let out = speechmask(&["enhance", "-o", s(&d.join("o")), s(&good), s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(d.join("o/good.wav").exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.wav"));

    // neural engine without weights, bad weights, unknown engine
    assert_eq!(
        speechmask(&["enhance", "--engine", "unet", "-o", s(d), s(&good)])
            .status
            .code(),
        Some(2)
    );
    let out = speechmask(&[
        "enhance",
        "--engine",
        "gru",
        "--weights",
        s(&bad),
        "-o",
        s(d),
        s(&good),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        !speechmask(&["enhance", "--engine", "lstm", "-o", s(d), s(&good)])
            .status
            .success()
    );
    let u = d.join("u.nmwf");
    WeightFile::zeros(ModelKind::Unet).write(&u).unwrap();
    let out = speechmask(&[
        "enhance",
        "--engine",
        "gru",
        "--weights",
        s(&u),
        "-o",
        s(d),
        s(&good),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.conf");
    std::fs::write(&cfg, "# bench settings\nengine = gru\nduration_s = 0.5\n").unwrap();
    let out = speechmask(&["--config", s(&cfg), "bench"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(report.contains("engine\tgru"));
    assert!(report.contains("audio_s\t0.5"));
    let macs = count_macs_per_second(ModelKind::Gru, 100);
    assert!(
        report.contains(&format!("macs_per_second\t{macs}")),
        "{report}"
    );

    let out = speechmask(&["--config", s(&cfg), "bench", "--engine", "baseline"]);
    let report = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(report.contains("engine\tbaseline") && !report.contains("macs_per_second"));

    std::fs::write(&cfg, "volume = 11\n").unwrap();
    assert_eq!(
        speechmask(&["--config", s(&cfg), "inspect-layout"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn bench_rejects_zero_duration() {
    assert_eq!(
        speechmask(&["bench", "--duration-s", "0"]).status.code(),
        Some(2)
    );
}

#[test]
fn inspection_commands() {
    let out = speechmask(&["inspect-layout"]);
    assert!(out.status.success());
    let table = String::from_utf8_lossy(&out.stdout).to_string();
    assert_eq!(table.lines().count(), 67);
    assert!(table
        .lines()
        .last()
        .unwrap()
        .starts_with("65\t430\t512\t83\t"));

    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("g.nmwf");
    let out = speechmask(&["init-weights", "--kind", "gru", "--seed", "3", "-o", s(&w)]);
    assert!(out.status.success());
    assert_eq!(
        WeightFile::read(&w).unwrap(),
        WeightFile::random(ModelKind::Gru, 3, 1.0)
    );
    let out = speechmask(&["inspect-weights", s(&w)]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("params\t83778") && text.contains("macs_per_second\t8294400"));
    assert!(
        !speechmask(&["inspect-weights", s(&dir.path().join("none"))])
            .status
            .success()
    );
}
