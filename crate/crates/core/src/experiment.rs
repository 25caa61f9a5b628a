//! Experiment driver: the six benchmark noise environments, single runs,
//! the full curriculum, and run-log / plot output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dqn::{DqnAgent, DqnConfig, EpsilonSchedule};
use crate::env::{EnvConfig, QasEnv};
use crate::error::{Error, Result};
use crate::neural::QNetwork;
use crate::ppr::{ppr_run, ExplorationParams, PolicyLibrary, PolicyMeta, PprHyper, RunRng};
use crate::quantum::{GateKind, NoiseSpec, TargetState};

pub const ENVIRONMENT_COUNT: u32 = 6;
pub const ROLLING_WINDOW: usize = 50;
pub const DEFAULT_MEAS_ERROR: f64 = 0.01;

/// Gate error rates of benchmark environment `env_id` (0..=5), plus the
/// shared readout error.
pub fn environment_noise(env_id: u32) -> Result<NoiseSpec> {
    use GateKind::{Cnot, Hadamard, PauliX};
    let gates: &[(GateKind, f64)] = match env_id {
        0 => &[],
        1 => &[(PauliX, 0.01)],
        2 => &[(PauliX, 0.01), (Hadamard, 0.01)],
        3 => &[(PauliX, 0.01), (Cnot, 0.01)],
        4 => &[(PauliX, 0.005), (Hadamard, 0.005), (Cnot, 0.005)],
        5 => &[(PauliX, 0.01), (Hadamard, 0.01), (Cnot, 0.005)],
        other => return Err(Error::UnknownEnvironment(other)),
    };
    NoiseSpec::new(gates.iter().copied(), DEFAULT_MEAS_ERROR)
}

/// Bell-state search under benchmark environment `env_id`.
pub fn build_environment(env_id: u32) -> Result<EnvConfig> {
    Ok(EnvConfig::bell(environment_noise(env_id)?))
}

pub fn env_tag(env_id: u32) -> String {
    format!("env-{env_id}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Train a fresh policy with epsilon-greedy exploration and no library.
    FromScratch,
    /// Reuse the policies in a library.
    Ppr,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "from_scratch" | "from-scratch" | "scratch" => Ok(Mode::FromScratch),
            "ppr" => Ok(Mode::Ppr),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::FromScratch => "from_scratch",
            Mode::Ppr => "ppr",
        })
    }
}

/// Everything needed to reproduce one run. Serializes as a flat TOML
/// key/value file; missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: u32,
    pub mode: Mode,
    pub library: Option<PathBuf>,
    pub seed: u64,
    pub episodes: usize,
    pub out: PathBuf,

    pub max_steps: usize,
    pub fidelity_threshold: f64,
    pub step_penalty: f64,
    pub p_meas: f64,
    /// Optional per-gate overrides of the environment preset.
    pub p_rot: Option<f64>,
    pub p_x: Option<f64>,
    pub p_y: Option<f64>,
    pub p_z: Option<f64>,
    pub p_h: Option<f64>,
    pub p_cnot: Option<f64>,

    pub gamma: f64,
    pub batch_size: usize,
    pub min_replay: usize,
    pub replay_capacity: usize,
    pub target_update_period: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub hidden1: usize,
    pub hidden2: usize,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub epsilon_decay: f64,

    pub tau0: f64,
    pub delta_tau: f64,
    pub psi0: f64,
    pub nu: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let dqn = DqnConfig::default();
        let hyper = PprHyper::default();
        ExperimentConfig {
            env: 0,
            mode: Mode::FromScratch,
            library: None,
            seed: 0,
            episodes: hyper.episodes,
            out: PathBuf::from("runs"),
            max_steps: crate::env::DEFAULT_MAX_STEPS,
            fidelity_threshold: crate::env::DEFAULT_FIDELITY_THRESHOLD,
            step_penalty: crate::env::DEFAULT_STEP_PENALTY,
            p_meas: DEFAULT_MEAS_ERROR,
            p_rot: None,
            p_x: None,
            p_y: None,
            p_z: None,
            p_h: None,
            p_cnot: None,
            gamma: dqn.gamma,
            batch_size: dqn.batch_size,
            min_replay: dqn.min_replay_before_learning,
            replay_capacity: dqn.replay_capacity,
            target_update_period: dqn.target_update_period,
            learning_rate: dqn.learning_rate,
            beta1: dqn.beta1,
            beta2: dqn.beta2,
            hidden1: dqn.hidden[0],
            hidden2: dqn.hidden[1],
            epsilon_start: dqn.epsilon.start,
            epsilon_min: dqn.epsilon.min,
            epsilon_decay: dqn.epsilon.decay,
            tau0: hyper.tau0,
            delta_tau: hyper.delta_tau,
            psi0: hyper.exploration.psi,
            nu: hyper.exploration.nu,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let mut noise = environment_noise(self.env)?;
        noise.meas_error = self.p_meas;
        let overrides = [
            (GateKind::RotPi4, self.p_rot),
            (GateKind::PauliX, self.p_x),
            (GateKind::PauliY, self.p_y),
            (GateKind::PauliZ, self.p_z),
            (GateKind::Hadamard, self.p_h),
            (GateKind::Cnot, self.p_cnot),
        ];
        for (kind, p) in overrides {
            if let Some(p) = p {
                noise.gate_error.insert(kind, p);
            }
        }
        let config = EnvConfig {
            n_qubits: 2,
            target: TargetState::bell(),
            noise,
            fidelity_threshold: self.fidelity_threshold,
            max_steps: self.max_steps,
            step_penalty: self.step_penalty,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn dqn_config(&self) -> DqnConfig {
        DqnConfig {
            gamma: self.gamma,
            batch_size: self.batch_size,
            min_replay_before_learning: self.min_replay,
            target_update_period: self.target_update_period,
            replay_capacity: self.replay_capacity,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            hidden: [self.hidden1, self.hidden2],
            epsilon: EpsilonSchedule {
                start: self.epsilon_start,
                min: self.epsilon_min,
                decay: self.epsilon_decay,
            },
        }
    }

    pub fn ppr_hyper(&self) -> PprHyper {
        PprHyper {
            episodes: self.episodes,
            tau0: self.tau0,
            delta_tau: self.delta_tau,
            exploration: ExplorationParams {
                psi: self.psi0,
                nu: self.nu,
            },
            epsilon: match self.mode {
                Mode::FromScratch => Some(self.dqn_config().epsilon),
                Mode::Ppr => None,
            },
        }
    }

    /// File stem used for this run's outputs.
    pub fn run_name(&self) -> String {
        format!("env{}_{}_seed{}", self.env, self.mode, self.seed)
    }
}

/// One row of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub episode: usize,
    pub score: f64,
    pub steps: usize,
    pub final_fidelity: f64,
    /// Reuse slot chosen for the episode (0 = policy being trained).
    pub policy: usize,
    pub tau: f64,
    /// Wall-clock time of the episode. Kept out of the main CSV so that
    /// logs are reproducible byte for byte.
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<RunRow>,
}

/// Formats `x` with 12 significant digits, `%g` style.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') {
            fixed
                .trim_end_matches('0')
                .trim_end_matches('.')
                .to_string()
        } else {
            fixed
        }
    } else {
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{exp}")
    }
}

impl RunLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "episode",
            "score",
            "steps",
            "final_fidelity",
            "policy",
            "tau",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.episode.to_string(),
                format_sig12(r.score),
                r.steps.to_string(),
                format_sig12(r.final_fidelity),
                r.policy.to_string(),
                format_sig12(r.tau),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io("flushing csv", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()?)
            .map_err(|e| Error::io(format!("writing run log {}", path.display()), e))
    }

    pub fn write_timing_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["episode", "wall_ms"])?;
        for r in &self.rows {
            w.write_record([r.episode.to_string(), format!("{:.3}", r.wall_ms)])?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let rows = reader
            .deserialize()
            .collect::<std::result::Result<Vec<RunRow>, _>>()?;
        Ok(RunLog { rows })
    }
}

/// Trailing mean over at most `window` values; the first entries average
/// whatever prefix is available.
pub fn rolling_mean(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            sum += v;
            if i >= window {
                sum -= values[i - window];
            }
            sum / (i + 1).min(window) as f64
        })
        .collect()
}

/// First 1-based episode whose full trailing window averages at least
/// `threshold`.
pub fn episodes_to_threshold(scores: &[f64], window: usize, threshold: f64) -> Option<usize> {
    if window == 0 || scores.len() < window {
        return None;
    }
    let mut sum: f64 = scores[..window].iter().sum();
    let mut e = window;
    loop {
        if sum / window as f64 >= threshold {
            return Some(e);
        }
        if e == scores.len() {
            return None;
        }
        sum += scores[e] - scores[e - window];
        e += 1;
    }
}

/// Whether every full trailing window ending at or after episode `from`
/// (1-based) averages at least `threshold`.
pub fn holds_from(scores: &[f64], window: usize, threshold: f64, from: usize) -> bool {
    let start = from.max(window);
    (start..=scores.len()).all(|e| {
        let slice = &scores[e - window..e];
        slice.iter().sum::<f64>() / window as f64 >= threshold
    })
}

/// A finished run and the policy it produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: RunLog,
    pub policy: QNetwork,
}

/// Trains one policy according to `config` using `library` for reuse.
/// In from-scratch mode the library is ignored.
pub fn execute(config: &ExperimentConfig, library: &PolicyLibrary) -> Result<RunResult> {
    let env_config = config.env_config()?;
    let dqn = config.dqn_config();
    let hyper = config.ppr_hyper();
    hyper.validate()?;
    let mut env = QasEnv::new(env_config)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut agent = DqnAgent::new(env.config().n_qubits, dqn, &mut init_rng)?;
    let mut rng = RunRng::new(config.seed);
    let empty = PolicyLibrary::new();
    let library = match config.mode {
        Mode::FromScratch => &empty,
        Mode::Ppr => library,
    };
    if let Some(first) = library.entries().first() {
        if !first.policy.same_architecture(&agent.policy) {
            return Err(Error::ArchitectureMismatch(
                first.policy.layer_sizes().to_vec(),
                agent.policy.layer_sizes().to_vec(),
            ));
        }
    }

    let mut rows = Vec::with_capacity(hyper.episodes);
    let mut clock = Instant::now();
    ppr_run(&mut env, &mut agent, library, &hyper, &mut rng, |ep| {
        let elapsed = clock.elapsed().as_secs_f64() * 1e3;
        clock = Instant::now();
        rows.push(RunRow {
            episode: ep.episode,
            score: ep.outcome.score,
            steps: ep.outcome.steps,
            final_fidelity: ep.outcome.final_fidelity,
            policy: ep.slot,
            tau: ep.tau,
            wall_ms: elapsed,
        });
    })?;
    Ok(RunResult {
        log: RunLog { rows },
        policy: agent.policy,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

/// Executes one run and writes `<out>/<run_name>.csv`, a timing CSV and the
/// trained policy snapshot.
pub fn run_single(config: &ExperimentConfig) -> Result<RunLog> {
    let library = match config.mode {
        Mode::Ppr => {
            let path = config.library.as_ref().ok_or_else(|| {
                Error::InvalidConfig("ppr mode needs a policy library path".into())
            })?;
            PolicyLibrary::load(path)?
        }
        Mode::FromScratch => PolicyLibrary::new(),
    };
    let result = execute(config, &library)?;
    create_dir(&config.out)?;
    let name = config.run_name();
    result
        .log
        .write_csv(&config.out.join(format!("{name}.csv")))?;
    result
        .log
        .write_timing_csv(&config.out.join(format!("{name}.timing.csv")))?;
    result
        .policy
        .save(&config.out.join(format!("{name}.qnet")))?;
    Ok(result.log)
}

/// Outcome of [`run_curriculum`]: one log per environment that was run.
#[derive(Debug, Clone, Default)]
pub struct CurriculumReport {
    pub logs: Vec<(u32, RunLog)>,
    pub skipped: Vec<u32>,
    /// Library size when each environment was entered.
    pub library_sizes: Vec<(u32, usize)>,
    pub library: PolicyLibrary,
}

pub fn library_dir(output_dir: &Path) -> PathBuf {
    output_dir.join("library")
}

/// Trains environment 0 from scratch, then environments 1..=5 with reuse,
/// appending each environment's final policy to the library in
/// `<output_dir>/library`. With `resume`, environments already present in
/// an existing library are skipped.
pub fn run_curriculum(
    base: &ExperimentConfig,
    output_dir: &Path,
    resume: bool,
) -> Result<CurriculumReport> {
    let lib_dir = library_dir(output_dir);
    create_dir(output_dir)?;
    let mut library = if resume && lib_dir.join(crate::ppr::MANIFEST_FILE).exists() {
        PolicyLibrary::load(&lib_dir)?
    } else {
        PolicyLibrary::new()
    };
    let mut report = CurriculumReport::default();
    for env_id in 0..ENVIRONMENT_COUNT {
        let tag = env_tag(env_id);
        if library.contains_tag(&tag) {
            report.skipped.push(env_id);
            continue;
        }
        let config = ExperimentConfig {
            env: env_id,
            mode: if env_id == 0 {
                Mode::FromScratch
            } else {
                Mode::Ppr
            },
            library: Some(lib_dir.clone()),
            out: output_dir.to_path_buf(),
            ..base.clone()
        };
        report.library_sizes.push((env_id, library.len()));
        let with_context = |e: Error| match e {
            Error::Io { context, source } => Error::Io {
                context: format!("{tag}: {context}"),
                source,
            },
            other => other,
        };
        let result = execute(&config, &library).map_err(with_context)?;
        let name = config.run_name();
        result
            .log
            .write_csv(&output_dir.join(format!("{name}.csv")))
            .map_err(with_context)?;
        result
            .log
            .write_timing_csv(&output_dir.join(format!("{name}.timing.csv")))
            .map_err(with_context)?;
        let mut meta = PolicyMeta::new(tag.clone());
        meta.seed = Some(config.seed);
        meta.episodes = Some(config.episodes);
        library.append(&result.policy, meta)?;
        library.save(&lib_dir).map_err(with_context)?;
        report.logs.push((env_id, result.log));
    }
    report.library = library;
    Ok(report)
}

/// Writes a score-vs-episode SVG at `path` and the rolling-mean series next
/// to it (`<stem>.rolling.csv`). Returns the CSV path.
pub fn emit_plot(log: &RunLog, path: &Path) -> Result<PathBuf> {
    if log.is_empty() {
        return Err(Error::InvalidConfig("cannot plot an empty run log".into()));
    }
    let scores = log.scores();
    let rolling = rolling_mean(&scores, ROLLING_WINDOW);

    let csv_path = path.with_extension("rolling.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["episode", "score", "rolling_mean"])?;
    for ((row, s), m) in log.rows.iter().zip(&scores).zip(&rolling) {
        w.write_record([row.episode.to_string(), format_sig12(*s), format_sig12(*m)])?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", csv_path.display()), e))?;

    fs::write(path, render_svg(&scores, &rolling))
        .map_err(|e| Error::io(format!("writing plot {}", path.display()), e))?;
    Ok(csv_path)
}

fn render_svg(scores: &[f64], rolling: &[f64]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let (lo, hi) = (-0.25, 1.05);
    let n = scores.len().max(2) as f64;
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n - 1.0);
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v.clamp(lo, hi) - lo) / (hi - lo);
    let polyline = |values: &[f64]| {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for tick in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            svg,
            r##"<line x1="{PAD}" x2="{}" y1="{y0:.1}" y2="{y0:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{tick}</text>"##,
            W - PAD,
            PAD - 6.0,
            y(tick) + 4.0,
            y0 = y(tick),
        );
    }
    let _ = writeln!(
        svg,
        r##"<polyline fill="none" stroke="#9ecae1" stroke-width="1" points="{}"/>"##,
        polyline(scores)
    );
    let _ = writeln!(
        svg,
        r##"<polyline fill="none" stroke="#08519c" stroke-width="2" points="{}"/>"##,
        polyline(rolling)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">episode (1..{})</text>"#,
        W / 2.0,
        H - 12.0,
        scores.len()
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">score</text>"#,
        H / 2.0,
        H / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}
