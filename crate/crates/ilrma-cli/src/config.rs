//! Experiment configuration: defaults, config-file parsing, and command-line
//! merging. A config file is a flat `key = value` text file; any key may also
//! be set on the command line, and the command line wins.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ilrma::stft::{StftConfig, Window};

/// The standard basis-count sweep. `--L` accepts any comma-separated list;
/// one run (one CSV row) is produced per trial and basis count. The default
/// is a single count, `DEFAULT_BASIS_COUNTS[0]`, so `--trials N` alone
/// yields exactly N rows; pass `--L 10,20,40,60` for the full sweep.
pub const DEFAULT_BASIS_COUNTS: [usize; 4] = [10, 20, 40, 60];

/// Frames generated for the synthetic fixture when the config does not say
/// otherwise.
pub const DEFAULT_SYNTHETIC_FRAMES: usize = 128;

/// What the experiment separates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSpec {
    /// Multichannel WAV file, STFT'd with the configured geometry.
    Wav(PathBuf),
    /// Built-in generator; currently only `synthetic:default`, the 2x2
    /// disjoint-dominant-band fixture.
    Synthetic(String),
}

impl InputSpec {
    pub fn parse(raw: &str) -> Result<Self> {
        if let Some(name) = raw.strip_prefix("synthetic:") {
            if name != "default" {
                bail!("unknown synthetic fixture {name:?}; available: default");
            }
            return Ok(InputSpec::Synthetic(name.to_string()));
        }
        if raw == "synthetic" {
            return Ok(InputSpec::Synthetic("default".to_string()));
        }
        Ok(InputSpec::Wav(PathBuf::from(raw)))
    }
}

impl fmt::Display for InputSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSpec::Wav(p) => write!(f, "{}", p.display()),
            InputSpec::Synthetic(name) => write!(f, "synthetic:{name}"),
        }
    }
}

/// Convergence-speed exponent: fixed, or drawn per trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PChoice {
    Fixed(f64),
    /// Uniform in `(0, 1]`, one draw per trial.
    Random,
}

impl PChoice {
    pub fn parse(raw: &str) -> Result<Self> {
        if raw == "random" {
            return Ok(PChoice::Random);
        }
        let value: f64 = raw
            .parse()
            .map_err(|_| anyhow!("p must be a number or 'random', got {raw:?}"))?;
        if !(value > 0.0 && value <= 1.0) {
            bail!("p must lie in (0, 1], got {value}");
        }
        Ok(PChoice::Fixed(value))
    }
}

impl fmt::Display for PChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PChoice::Fixed(v) => write!(f, "{v}"),
            PChoice::Random => write!(f, "random"),
        }
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: InputSpec,
    pub p: PChoice,
    pub basis_counts: Vec<usize>,
    pub iterations: usize,
    pub trials: usize,
    pub seed: u64,
    pub stft: StftConfig,
    /// Frames of the synthetic fixture; ignored for WAV input.
    pub synthetic_frames: usize,
    pub output_dir: PathBuf,
    pub write_wavs: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: InputSpec::Synthetic("default".to_string()),
            p: PChoice::Fixed(0.5),
            basis_counts: vec![DEFAULT_BASIS_COUNTS[0]],
            iterations: 200,
            trials: 1,
            seed: 0,
            stft: StftConfig {
                fft_length: 512,
                shift: 256,
                window: Window::Hann,
                sample_rate: 16_000,
            },
            synthetic_frames: DEFAULT_SYNTHETIC_FRAMES,
            output_dir: PathBuf::from("ilrma-out"),
            write_wavs: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let PChoice::Fixed(p) = self.p {
            if !(p > 0.0 && p <= 1.0) {
                bail!("p must lie in (0, 1], got {p}");
            }
        }
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.iterations == 0 {
            bail!("iterations must be at least 1");
        }
        if self.basis_counts.is_empty() {
            bail!("at least one basis count is required");
        }
        if self.basis_counts.iter().any(|&l| l == 0) {
            bail!("basis counts must be at least 1");
        }
        if self.synthetic_frames < 2 {
            bail!("synthetic fixture needs at least 2 frames");
        }
        self.stft
            .validate()
            .map_err(|e| anyhow!("invalid STFT geometry: {e}"))?;
        Ok(())
    }
}

/// Unresolved settings: every field optional so a config file and the
/// command line can each fill in part and be merged.
#[derive(Debug, Clone, Default)]
pub struct PartialConfig {
    pub input: Option<InputSpec>,
    pub p: Option<PChoice>,
    pub basis_counts: Option<Vec<usize>>,
    pub iterations: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub fft_length: Option<usize>,
    pub shift: Option<usize>,
    pub sample_rate: Option<u32>,
    pub synthetic_frames: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub write_wavs: Option<bool>,
}

impl PartialConfig {
    /// Reads a flat `key = value` file. Blank lines and lines starting with
    /// `#` are skipped; unknown keys are errors so typos do not silently
    /// fall back to defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse_str(&text).with_context(|| format!("in config file {}", path.display()))
    }

    /// The parsing behind [`PartialConfig::from_file`].
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = PartialConfig::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value, got {line:?}", idx + 1))?;
            let key = key.trim();
            let value = value.trim();
            let ctx = |what| format!("line {}: invalid {what} {value:?}", idx + 1);
            match key {
                "input" => cfg.input = Some(InputSpec::parse(value)?),
                "p" => cfg.p = Some(PChoice::parse(value)?),
                "L" | "basis_counts" => cfg.basis_counts = Some(parse_basis_list(value)?),
                "iterations" => {
                    cfg.iterations = Some(value.parse().with_context(|| ctx("iterations"))?)
                }
                "trials" => cfg.trials = Some(value.parse().with_context(|| ctx("trials"))?),
                "seed" => cfg.seed = Some(value.parse().with_context(|| ctx("seed"))?),
                "fft_length" => {
                    cfg.fft_length = Some(value.parse().with_context(|| ctx("fft_length"))?)
                }
                "shift" => cfg.shift = Some(value.parse().with_context(|| ctx("shift"))?),
                "sample_rate" => {
                    cfg.sample_rate = Some(value.parse().with_context(|| ctx("sample_rate"))?)
                }
                "frames" => {
                    cfg.synthetic_frames = Some(value.parse().with_context(|| ctx("frames"))?)
                }
                "output_dir" => cfg.output_dir = Some(PathBuf::from(value)),
                "write_wavs" => {
                    cfg.write_wavs = Some(value.parse().with_context(|| ctx("write_wavs"))?)
                }
                other => bail!("line {}: unknown config key {other:?}", idx + 1),
            }
        }
        Ok(cfg)
    }

    /// Overlays `self` on top of `base`: set fields win, unset fall through.
    pub fn over(self, base: PartialConfig) -> PartialConfig {
        PartialConfig {
            input: self.input.or(base.input),
            p: self.p.or(base.p),
            basis_counts: self.basis_counts.or(base.basis_counts),
            iterations: self.iterations.or(base.iterations),
            trials: self.trials.or(base.trials),
            seed: self.seed.or(base.seed),
            fft_length: self.fft_length.or(base.fft_length),
            shift: self.shift.or(base.shift),
            sample_rate: self.sample_rate.or(base.sample_rate),
            synthetic_frames: self.synthetic_frames.or(base.synthetic_frames),
            output_dir: self.output_dir.or(base.output_dir),
            write_wavs: self.write_wavs.or(base.write_wavs),
        }
    }

    /// Fills the gaps with defaults. WAV input defaults to the 4096/2048
    /// geometry; the synthetic fixture to 512/256, which keeps the default
    /// fixture at 257 bins.
    pub fn resolve(self) -> Result<RunConfig> {
        let input = self
            .input
            .unwrap_or(InputSpec::Synthetic("default".to_string()));
        let default_fft = match input {
            InputSpec::Wav(_) => 4096,
            InputSpec::Synthetic(_) => 512,
        };
        let fft_length = self.fft_length.unwrap_or(default_fft);
        let shift = self.shift.unwrap_or(fft_length / 2).max(1);
        let defaults = RunConfig::default();
        let cfg = RunConfig {
            input,
            p: self.p.unwrap_or(defaults.p),
            basis_counts: self.basis_counts.unwrap_or(defaults.basis_counts),
            iterations: self.iterations.unwrap_or(defaults.iterations),
            trials: self.trials.unwrap_or(defaults.trials),
            seed: self.seed.unwrap_or(defaults.seed),
            stft: StftConfig {
                fft_length,
                shift,
                window: Window::Hann,
                sample_rate: self.sample_rate.unwrap_or(defaults.stft.sample_rate),
            },
            synthetic_frames: self.synthetic_frames.unwrap_or(defaults.synthetic_frames),
            output_dir: self.output_dir.unwrap_or(defaults.output_dir),
            write_wavs: self.write_wavs.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_basis_list(raw: &str) -> Result<Vec<usize>> {
    let list: Vec<usize> = raw
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| anyhow!("invalid basis count {part:?}"))
        })
        .collect::<Result<_>>()?;
    if list.is_empty() {
        bail!("at least one basis count is required");
    }
    Ok(list)
}
