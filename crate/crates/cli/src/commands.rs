use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use speechmask_core::audio::{read_wav, write_wav, SampleFormat};
use speechmask_core::bands::make_layout;
use speechmask_core::metrics::evaluate_set;
use speechmask_core::mixture::{make_test_set, Manifest, MixSpec, Sources, MANIFEST_FILE};
use speechmask_core::neural::{count_macs_per_second, describe, WeightFile};
use speechmask_core::pipeline::enhance_buffer;
use speechmask_core::{
    Engine, EngineKind, Model, ModelKind, StreamProcessor, SuppressorConfig, FRAME_RATE, NUM_BINS,
    PROCESSING_RATE,
};

use crate::config::Config;
use crate::{
    BenchArgs, EngineOpts, EnhanceArgs, EvalArgs, Failure, FormatArg, InitWeightsArgs,
    InspectWeightsArgs, KindArg, SimulateArgs,
};

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Failure::Runtime(format!("cannot start worker pool: {e}")))
}

/// Everything needed to build a fresh engine per stream.
struct EngineSpec {
    kind: EngineKind,
    suppressor: SuppressorConfig,
    weights: Option<WeightFile>,
    max_atten_db: f64,
}

impl EngineSpec {
    fn resolve(
        opts: &EngineOpts,
        cfg: &Config,
        allow_random: bool,
        seed: u64,
    ) -> Result<Self, Failure> {
        let kind: EngineKind = cfg
            .pick(opts.engine.clone(), "engine")?
            .unwrap_or_else(|| "baseline".into())
            .parse()?;
        let max_atten_db = cfg
            .pick(opts.max_atten_db, "max_atten_db")?
            .unwrap_or(kind.default_max_atten_db());
        let mut suppressor = SuppressorConfig {
            max_atten_db,
            ..SuppressorConfig::default()
        };
        if let Some(v) = cfg.pick(opts.alpha_dd, "alpha_dd")? {
            suppressor.alpha_dd = v;
        }
        if let Some(v) = cfg.pick(opts.alpha_noise, "alpha_noise")? {
            suppressor.alpha_noise = v;
        }
        if let Some(v) = cfg.pick(opts.alpha_speech, "alpha_speech")? {
            suppressor.alpha_speech = v;
        }
        if let Some(v) = cfg.pick(opts.minstat_window_s, "minstat_window_s")? {
            suppressor.minstat_window_s = v;
        }
        if let Some(v) = cfg.pick(opts.dd_previous_gamma, "dd_previous_gamma")? {
            suppressor.dd_previous_gamma = v;
        }
        suppressor.validate()?;

        let weights = match kind {
            EngineKind::Baseline => None,
            EngineKind::Gru | EngineKind::Unet => {
                let model_kind = if kind == EngineKind::Gru {
                    ModelKind::Gru
                } else {
                    ModelKind::Unet
                };
                match cfg.pick(opts.weights.clone(), "weights")? {
                    Some(path) => {
                        let file = WeightFile::read(&path)?;
                        if file.kind != model_kind {
                            return Err(Failure::Usage(format!(
                                "{} holds {} weights, engine is {kind}",
                                path.display(),
                                file.kind
                            )));
                        }
                        Some(file)
                    }
                    None if allow_random => {
                        log::info!(
                            "no weight file given; using random {kind} weights (seed {seed})"
                        );
                        Some(WeightFile::random(model_kind, seed, 1.0))
                    }
                    None => {
                        return Err(Failure::Usage(format!("engine {kind} needs --weights")));
                    }
                }
            }
        };
        Ok(Self {
            kind,
            suppressor,
            weights,
            max_atten_db,
        })
    }

    fn build(&self) -> Result<Engine, Failure> {
        Ok(match &self.weights {
            None => Engine::baseline(self.suppressor.clone())?,
            Some(w) => Engine::neural(Model::from_weights(w)?, self.max_atten_db)?,
        })
    }
}

fn output_path(out_dir: &Path, input: &Path) -> PathBuf {
    let mut name = input.file_stem().unwrap_or(input.as_os_str()).to_os_string();
    name.push(".wav");
    out_dir.join(name)
}

fn enhance_file(
    spec: &EngineSpec,
    input: &Path,
    out_dir: &Path,
    format: FormatArg,
) -> Result<(), Failure> {
    let (audio, in_format) = read_wav(input)?;
    let start = Instant::now();
    let out = enhance_buffer(&audio, spec.build()?)?;
    let wall = start.elapsed().as_secs_f64();
    let fmt = match format {
        FormatArg::Same => in_format,
        FormatArg::Pcm16 => SampleFormat::Pcm16,
        FormatArg::Float32 => SampleFormat::Float32,
    };
    let dest = output_path(out_dir, input);
    write_wav(&dest, &out, fmt)?;
    let dur = audio.duration_s();
    log::info!(
        "{} -> {}: {dur:.2} s of audio in {wall:.3} s, real-time factor {:.1}",
        input.display(),
        dest.display(),
        if wall > 0.0 {
            dur / wall
        } else {
            f64::INFINITY
        }
    );
    Ok(())
}

pub fn enhance(a: &EnhanceArgs, cfg: &Config, jobs: Option<usize>) -> Result<(), Failure> {
    let spec = EngineSpec::resolve(&a.engine, cfg, false, 0)?;
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", a.out_dir.display())))?;
    log::info!(
        "engine {}, attenuation limit {} dB",
        spec.kind,
        spec.max_atten_db
    );
    let results: Vec<Result<(), Failure>> = pool(jobs)?.install(|| {
        a.inputs
            .par_iter()
            .map(|input| enhance_file(&spec, input, &a.out_dir, a.format))
            .collect()
    });
    let mut failed = 0;
    for (input, r) in a.inputs.iter().zip(results) {
        if let Err(Failure::Usage(m) | Failure::Runtime(m)) = r {
            log::error!("{}: {m}", input.display());
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Failure::Runtime(format!(
            "{failed} of {} files failed",
            a.inputs.len()
        )));
    }
    Ok(())
}

pub fn simulate(a: &SimulateArgs, cfg: &Config, jobs: Option<usize>) -> Result<(), Failure> {
    let d = MixSpec::default();
    let level_min = cfg.pick(a.level_min_db, "level_min_db")?;
    let level_max = cfg.pick(a.level_max_db, "level_max_db")?;
    let level_range_db = match (level_min, level_max) {
        (None, None) => None,
        (lo, hi) => Some((lo.unwrap_or(-6.0), hi.unwrap_or(0.0))),
    };
    let spec = MixSpec {
        snr_min_db: cfg
            .pick(a.snr_min_db, "snr_min_db")?
            .unwrap_or(d.snr_min_db),
        snr_max_db: cfg
            .pick(a.snr_max_db, "snr_max_db")?
            .unwrap_or(d.snr_max_db),
        hp_cutoff_hz: cfg
            .pick(a.hp_cutoff_hz, "hp_cutoff_hz")?
            .unwrap_or(d.hp_cutoff_hz),
        seed: cfg.pick(a.seed, "seed")?.unwrap_or(d.seed),
        level_range_db,
    };
    let sources = Sources {
        speech_dir: a.speech_dir.clone(),
        noise_dir: a.noise_dir.clone(),
        ir_dir: a.ir_dir.clone(),
    };
    let manifest = pool(jobs)?.install(|| make_test_set(&sources, &spec, a.count, &a.out_dir))?;
    log::info!("wrote {} items", manifest.rows.len());
    println!("{}", a.out_dir.join(MANIFEST_FILE).display());
    Ok(())
}

pub fn eval(a: &EvalArgs, jobs: Option<usize>) -> Result<(), Failure> {
    let manifest = Manifest::read(&a.manifest)?;
    let report = pool(jobs)?.install(|| evaluate_set(&manifest, &a.enhanced_dir))?;
    let tsv_path = a
        .report
        .clone()
        .unwrap_or_else(|| a.enhanced_dir.join("metrics.tsv"));
    let json_path = a
        .summary
        .clone()
        .unwrap_or_else(|| a.enhanced_dir.join("metrics.json"));
    let tsv = report.to_tsv();
    for (p, body) in [
        (&tsv_path, tsv.as_str()),
        (&json_path, report.to_json().as_str()),
    ] {
        std::fs::write(p, body)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display())))?;
    }
    print!("{tsv}");
    let s = &report.summary;
    log::info!(
        "{} of {} items scored: mean SDR {:.2} dB, mean STOI {:.4}",
        s.scored,
        s.items,
        s.mean_sdr_db,
        s.mean_stoi
    );
    if s.failed > 0 {
        return Err(Failure::Runtime(format!(
            "{} items could not be scored",
            s.failed
        )));
    }
    Ok(())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

pub fn bench(a: &BenchArgs, cfg: &Config) -> Result<(), Failure> {
    let duration = cfg.pick(a.duration_s, "duration_s")?.unwrap_or(10.0);
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Failure::Usage(format!(
            "duration {duration} s must be positive"
        )));
    }
    let seed = cfg.pick(a.seed, "seed")?.unwrap_or(0);
    let spec = EngineSpec::resolve(&a.engine, cfg, true, seed)?;

    use rand::{RngExt, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = (duration * PROCESSING_RATE as f64).round() as usize;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();

    let mut proc = StreamProcessor::new(spec.build()?)?;
    let hop = proc.hop();
    let mut out = vec![0.0; hop];
    let mut chunk = vec![0.0; hop];
    let mut times = Vec::with_capacity(n / hop + 1);
    let start = Instant::now();
    for src in x.chunks(hop) {
        chunk[..src.len()].copy_from_slice(src);
        chunk[src.len()..].fill(0.0);
        let t = Instant::now();
        proc.process_hop(&chunk, &mut out)?;
        times.push(t.elapsed().as_secs_f64() * 1e6);
    }
    let wall = start.elapsed().as_secs_f64();
    times.sort_by(f64::total_cmp);
    let mean = times.iter().sum::<f64>() / times.len() as f64;

    println!("engine\t{}", spec.kind);
    println!("audio_s\t{duration}");
    println!("wall_s\t{wall:.6}");
    println!("real_time_factor\t{:.2}", duration / wall);
    println!("frames\t{}", times.len());
    println!("frame_us_mean\t{mean:.2}");
    println!("frame_us_p50\t{:.2}", percentile(&times, 0.5));
    println!("frame_us_p99\t{:.2}", percentile(&times, 0.99));
    println!("frame_us_max\t{:.2}", times[times.len() - 1]);
    println!(
        "frame_budget_us\t{:.0}",
        1e6 * hop as f64 / PROCESSING_RATE as f64
    );
    if let Some(w) = &spec.weights {
        println!(
            "macs_per_second\t{}",
            count_macs_per_second(w.kind, FRAME_RATE)
        );
    }
    Ok(())
}

pub fn inspect_weights(a: &InspectWeightsArgs) -> Result<(), Failure> {
    let file = WeightFile::read(&a.path)?;
    print!("{}", describe(&file, FRAME_RATE));
    Ok(())
}

pub fn inspect_layout() -> Result<(), Failure> {
    let bin_hz = PROCESSING_RATE as f64 / (2 * (NUM_BINS - 1)) as f64;
    print!("{}", make_layout().table(bin_hz));
    Ok(())
}

pub fn init_weights(a: &InitWeightsArgs, cfg: &Config) -> Result<(), Failure> {
    let kind = match a.kind {
        KindArg::Gru => ModelKind::Gru,
        KindArg::Unet => ModelKind::Unet,
    };
    let file = if a.zeros {
        WeightFile::zeros(kind)
    } else {
        WeightFile::random(kind, cfg.pick(a.seed, "seed")?.unwrap_or(0), a.scale)
    };
    file.write(&a.out)?;
    log::info!(
        "wrote {} {kind} parameters to {}",
        file.param_count(),
        a.out.display()
    );
    Ok(())
}
