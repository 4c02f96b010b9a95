//! Run configuration: TOML files (`.cfg`) with every section except
//! `[model]` and `[grid]` optional.
//!
//! All times and rates are dimensionless: a rate `r` and a time
//! `t` only ever appear as the product `r t`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::de::{DeTable, DeValue};

use crate::error::{Error, Result};
use crate::linalg::{Operator, C64};
use crate::model::presets::{self, ChainParams};
use crate::model::{AuxSpec, CompositeModel, MatterModel, ModeSpec, SpectatorInit};
use crate::oracle::{gaussian_aligned, grid_count, Quadrature, Wavepacket};
use crate::protocol::{GridSpec, PulseParams, DEFAULT_SUBTRACTION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<AuxConfig>,
    #[serde(default)]
    pub wavepacket: WavepacketConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub elimination: EliminationConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Complex matrix as paired real and (optional) imaginary row arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl ComplexMatrix {
    pub fn to_operator(&self, what: &str) -> Result<Operator> {
        let n = self.re.len();
        let bad = |msg: String| Error::Config(vec![format!("model.{what}: {msg}")]);
        if n == 0 {
            return Err(bad("empty matrix".into()));
        }
        if let Some(im) = &self.im {
            if im.len() != n {
                return Err(bad(format!("`im` has {} rows, `re` has {n}", im.len())));
            }
        }
        let mut m = ndarray::Array2::zeros((n, n));
        for i in 0..n {
            if self.re[i].len() != n {
                return Err(bad(format!("row {i} of `re` has {} entries, expected {n}", self.re[i].len())));
            }
            for j in 0..n {
                let im = match &self.im {
                    Some(im) if im[i].len() != n => {
                        return Err(bad(format!("row {i} of `im` has {} entries, expected {n}", im[i].len())))
                    }
                    Some(im) => im[i][j],
                    None => 0.0,
                };
                m[[i, j]] = C64::new(self.re[i][j], im);
            }
        }
        Operator::new(m)
    }

    pub fn from_operator(op: &Operator) -> Self {
        let e = op.entries();
        let rows = |f: fn(&C64) -> f64| e.rows().into_iter().map(|r| r.iter().map(f).collect()).collect();
        let im: Vec<Vec<f64>> = rows(|z| z.im);
        Self {
            re: rows(|z| z.re),
            im: im.iter().flatten().any(|&x| x != 0.0).then_some(im),
        }
    }
}

/// Parameter overrides for the `example2` chain preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub omega: Option<[f64; 4]>,
    pub omega_fluct: Option<[f64; 2]>,
    pub j12: Option<f64>,
    pub j23: Option<f64>,
    pub j2_fluct: Option<[f64; 2]>,
    pub l: Option<f64>,
    pub gamma_f2: Option<f64>,
    pub gamma_fluct2: Option<[f64; 2]>,
}

impl ChainConfig {
    fn params(&self) -> ChainParams {
        let d = ChainParams::default();
        ChainParams {
            omega: self.omega.unwrap_or(d.omega),
            omega_fluct: self.omega_fluct.unwrap_or(d.omega_fluct),
            j12: self.j12.unwrap_or(d.j12),
            j23: self.j23.unwrap_or(d.j23),
            j2_fluct: self.j2_fluct.unwrap_or(d.j2_fluct),
            l: self.l.unwrap_or(d.l),
            gamma_f2: self.gamma_f2.unwrap_or(d.gamma_f2),
            gamma_fluct2: self.gamma_fluct2.unwrap_or(d.gamma_fluct2),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Option<String>,
    pub chain: Option<ChainConfig>,
    /// `single_emitter` transition frequency and decay rate.
    pub omega: Option<f64>,
    pub l2: Option<f64>,
    pub hamiltonian: Option<ComplexMatrix>,
    pub coupling: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dissipators: Vec<ComplexMatrix>,
    pub omega0: Option<f64>,
    pub measured_state: Option<usize>,
    pub ground_state: Option<usize>,
    pub grading: Option<Vec<usize>>,
    pub spectator_dim: Option<usize>,
    pub spectator_init: Option<SpectatorInit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dt: f64,
    pub t_max_m: f64,
    pub t_max_int: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeConfig {
    pub n_max: usize,
    pub initial_fock: usize,
}

impl Default for ModeConfig {
    fn default() -> Self {
        let m = ModeSpec::default();
        Self {
            n_max: m.n_max,
            initial_fock: m.initial_fock,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    pub t_gamma: f64,
    /// Pulse area; alternatively give the coupling `gamma = n_gamma / t_gamma`.
    pub n_gamma: Option<f64>,
    pub gamma: Option<f64>,
    pub subtraction: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            t_gamma: 1.0,
            n_gamma: None,
            gamma: None,
            subtraction: DEFAULT_SUBTRACTION,
        }
    }
}

impl PulseConfig {
    pub const DEFAULT_AREA: f64 = 0.25;

    pub fn area(&self) -> f64 {
        match (self.n_gamma, self.gamma) {
            (Some(n), _) => n,
            (None, Some(g)) => g * self.t_gamma,
            (None, None) => Self::DEFAULT_AREA,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxConfig {
    pub chi: Option<f64>,
    pub chi_squared: Option<f64>,
}

impl AuxConfig {
    pub fn chi(&self) -> Option<f64> {
        self.chi.or(self.chi_squared.map(f64::sqrt))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WavepacketConfig {
    pub shape: String,
    pub sigma_t: f64,
    pub t0: f64,
    /// Sampling step of the profile; defaults to the grid step.
    pub dt: Option<f64>,
    /// Support kept on each side of `t0`, in units of `sigma_t`.
    pub width_sigmas: f64,
    /// Evaluation times `t_from, t_from + t_step, ..., <= t_to`; default a
    /// single point at `t0 + 2 sigma_t`.
    pub t_from: Option<f64>,
    pub t_to: Option<f64>,
    pub t_step: Option<f64>,
    /// `auto`, `riemann`, `trapezoid` or `pulsed`.
    pub quadrature: String,
}

impl Default for WavepacketConfig {
    fn default() -> Self {
        Self {
            shape: "gaussian".into(),
            sigma_t: 100.0,
            t0: 0.0,
            dt: None,
            width_sigmas: 6.0,
            t_from: None,
            t_to: None,
            t_step: None,
            quadrature: "auto".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub enabled: bool,
    pub trials: u64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            trials: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EliminationConfig {
    pub chi_squared: Vec<f64>,
    pub t_end: f64,
    pub samples: usize,
}

impl Default for EliminationConfig {
    fn default() -> Self {
        Self {
            chi_squared: vec![0.5, 5.0, 50.0],
            t_end: 100.0,
            samples: 11,
        }
    }
}

impl EliminationConfig {
    pub fn times(&self) -> Vec<f64> {
        let n = self.samples.max(2);
        (0..n).map(|i| self.t_end * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    pub target_sigma: f64,
    pub p_typical: f64,
    /// Time domain `T`; defaults to `grid.t_max_m`.
    pub domain: Option<f64>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            target_sigma: 0.01,
            p_typical: 0.01,
            domain: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// `(t_m, t_int)` at which the reconstructed Green's function is reported.
    pub g_probe: [f64; 2],
    /// Time at which the convolved population is reported.
    pub p_probe: f64,
    /// Step of the exact reference table and wavepacket.
    pub reference_dt: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            g_probe: [50.0, 250.0],
            p_probe: 200.0,
            reference_dt: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Known keys per table path; `*` marks tables whose keys are free-form.
const SCHEMA: &[(&str, &[&str])] = &[
    (
        "",
        &["model", "grid", "mode", "pulse", "aux", "wavepacket", "sampling", "elimination", "budget", "sweep", "output"],
    ),
    (
        "model",
        &[
            "preset", "chain", "omega", "l2", "hamiltonian", "coupling", "dissipators", "omega0", "measured_state",
            "ground_state", "grading", "spectator_dim", "spectator_init",
        ],
    ),
    ("model.chain", &["omega", "omega_fluct", "j12", "j23", "j2_fluct", "l", "gamma_f2", "gamma_fluct2"]),
    ("model.hamiltonian", &["re", "im"]),
    ("model.coupling", &["re", "im"]),
    ("model.dissipators", &["re", "im"]),
    ("grid", &["dt", "t_max_m", "t_max_int"]),
    ("mode", &["n_max", "initial_fock"]),
    ("pulse", &["t_gamma", "n_gamma", "gamma", "subtraction"]),
    ("aux", &["chi", "chi_squared"]),
    (
        "wavepacket",
        &["shape", "sigma_t", "t0", "dt", "width_sigmas", "t_from", "t_to", "t_step", "quadrature"],
    ),
    ("sampling", &["enabled", "trials", "seed"]),
    ("elimination", &["chi_squared", "t_end", "samples"]),
    ("budget", &["target_sigma", "p_typical", "domain"]),
    ("sweep", &["g_probe", "p_probe", "reference_dt"]),
    ("output", &["dir"]),
];

const REQUIRED: &[(&str, &[&str])] = &[("", &["model", "grid"]), ("grid", &["dt", "t_max_m", "t_max_int"])];

/// Scalar parameters accepted by `--axis`.
pub const AXES: &[&str] = &["dt", "t_gamma", "n_gamma", "gamma", "chi", "chi_squared", "sigma_t", "t0", "subtraction"];

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Closest candidate by edit distance, if reasonably close.
pub fn suggest<'a>(word: &str, candidates: &[&'a str]) -> Option<&'a str> {
    candidates
        .iter()
        .map(|c| (strsim::damerau_levenshtein(word, c), *c))
        .filter(|(d, c)| *d <= 2.max(c.len() / 3))
        .min_by_key(|(d, _)| *d)
        .map(|(_, c)| c)
}

fn keys_for(path: &str) -> Option<&'static [&'static str]> {
    SCHEMA.iter().find(|(p, _)| *p == path).map(|(_, k)| *k)
}

fn walk(text: &str, path: &str, table: &DeTable<'_>, errors: &mut Vec<String>) {
    let Some(known) = keys_for(path) else { return };
    for (key, value) in table.iter() {
        let name: &str = key.get_ref();
        let line = line_of(text, key.span().start);
        let section = if path.is_empty() { "top level".to_string() } else { format!("[{path}]") };
        if !known.contains(&name) {
            let hint = suggest(name, known).map(|s| format!("; did you mean `{s}`?")).unwrap_or_default();
            errors.push(format!("line {line}: unknown key `{name}` in {section}{hint}"));
            continue;
        }
        let child = if path.is_empty() { name.to_string() } else { format!("{path}.{name}") };
        match value.get_ref() {
            DeValue::Table(t) => walk(text, &child, t, errors),
            DeValue::Array(items) => {
                for item in items.iter() {
                    if let DeValue::Table(t) = item.get_ref() {
                        walk(text, &child, t, errors);
                    }
                }
            }
            _ => {}
        }
    }
    for (p, required) in REQUIRED {
        if *p == path {
            for r in required.iter().filter(|r| !table.iter().any(|(k, _)| k.get_ref() == *r)) {
                let at = if path.is_empty() { String::new() } else { format!(" in [{path}]") };
                errors.push(format!("missing required key `{r}`{at}"));
            }
        }
    }
}

/// Parse and validate a configuration; every problem found is reported.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root = DeTable::parse(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        Error::Config(vec![format!("line {line}: syntax error: {}", e.message().trim())])
    })?;
    let mut errors = Vec::new();
    walk(text, "", root.get_ref(), &mut errors);
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        Error::Config(vec![format!("line {line}: {}", e.message().trim())])
    })?;
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(items) => Error::Config(items.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
        other => other,
    })
}

impl RunConfig {
    /// Semantic checks beyond the schema.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0) || !v.is_finite() {
                out.push(format!("{name} must be positive, got {v}"));
            }
        };
        positive("grid.dt", self.grid.dt);
        positive("pulse.t_gamma", self.pulse.t_gamma);
        positive("wavepacket.sigma_t", self.wavepacket.sigma_t);
        positive("wavepacket.width_sigmas", self.wavepacket.width_sigmas);
        positive("elimination.t_end", self.elimination.t_end);
        positive("budget.target_sigma", self.budget.target_sigma);
        positive("sweep.reference_dt", self.sweep.reference_dt);
        if let Some(dt) = self.wavepacket.dt {
            positive("wavepacket.dt", dt);
        }
        if let Some(s) = self.wavepacket.t_step {
            positive("wavepacket.t_step", s);
        }
        if let Some(d) = self.budget.domain {
            positive("budget.domain", d);
        }
        for c in &self.elimination.chi_squared {
            positive("elimination.chi_squared", *c);
        }
        if self.pulse.n_gamma.is_some() && self.pulse.gamma.is_some() {
            out.push("pulse: give either `n_gamma` or `gamma`, not both".into());
        }
        if self.pulse.area() == 0.0 || !self.pulse.area().is_finite() {
            out.push("pulse area must be non-zero".into());
        }
        for (name, v) in [("grid.t_max_m", self.grid.t_max_m), ("grid.t_max_int", self.grid.t_max_int)] {
            if !(v >= 0.0) || !v.is_finite() {
                out.push(format!("{name} must be non-negative, got {v}"));
            }
        }
        if let Some(aux) = &self.aux {
            match (aux.chi, aux.chi_squared) {
                (Some(_), Some(_)) => out.push("aux: give either `chi` or `chi_squared`, not both".into()),
                (None, None) => out.push("aux: `chi` or `chi_squared` is required".into()),
                (Some(c), None) | (None, Some(c)) if !(c > 0.0) => out.push(format!("aux: chi must be positive, got {c}")),
                _ => {}
            }
        }
        if self.wavepacket.shape != "gaussian" {
            out.push(format!("wavepacket.shape `{}` is not supported (only `gaussian`)", self.wavepacket.shape));
        }
        if self.wavepacket.quadrature != "auto" && Quadrature::parse(&self.wavepacket.quadrature).is_none() {
            out.push(format!(
                "wavepacket.quadrature `{}` is not one of auto, riemann, trapezoid, pulsed",
                self.wavepacket.quadrature
            ));
        }
        if !(0.0..=1.0).contains(&self.budget.p_typical) {
            out.push(format!("budget.p_typical must lie in [0, 1], got {}", self.budget.p_typical));
        }
        if self.sampling.trials == 0 {
            out.push("sampling.trials must be at least 1".into());
        }
        if self.mode.n_max == 0 || self.mode.initial_fock > self.mode.n_max {
            out.push("mode: need 1 <= n_max and initial_fock <= n_max".into());
        }
        match self.matter() {
            Ok(m) => out.extend(m.validate().into_iter().map(|e| format!("model: {e}"))),
            Err(Error::Config(items)) => out.extend(items),
            Err(e) => out.push(format!("model: {e}")),
        }
        out
    }

    pub fn matter(&self) -> Result<MatterModel> {
        let m = &self.model;
        let inline = m.hamiltonian.is_some()
            || m.coupling.is_some()
            || !m.dissipators.is_empty()
            || m.grading.is_some()
            || m.omega0.is_some()
            || m.measured_state.is_some();
        let mut model = match (&m.preset, inline) {
            (Some(_), true) => {
                return Err(Error::Config(vec![
                    "model: inline operators cannot be combined with `preset`".into(),
                ]))
            }
            (Some(name), false) => {
                if m.chain.is_some() && name != "example2" {
                    return Err(Error::Config(vec!["model.chain only applies to preset `example2`".into()]));
                }
                if (m.omega.is_some() || m.l2.is_some()) && name != "single_emitter" {
                    return Err(Error::Config(vec![
                        "model.omega and model.l2 only apply to preset `single_emitter`".into(),
                    ]));
                }
                match name.as_str() {
                    "example2" => presets::chain(&m.chain.clone().unwrap_or_default().params()),
                    "single_emitter" => presets::single_emitter(m.omega.unwrap_or(1.0), m.l2.unwrap_or(0.0036)),
                    other => presets::by_name(other).ok_or_else(|| {
                        let hint = suggest(other, &presets::NAMES)
                            .map(|s| format!("; did you mean `{s}`?"))
                            .unwrap_or_default();
                        Error::Config(vec![format!(
                            "model.preset `{other}` is not one of {}{hint}",
                            presets::NAMES.join(", ")
                        )])
                    })?,
                }
            }
            (None, _) => {
                let mut missing = Vec::new();
                for (key, present) in [
                    ("hamiltonian", m.hamiltonian.is_some()),
                    ("coupling", m.coupling.is_some()),
                    ("grading", m.grading.is_some()),
                    ("omega0", m.omega0.is_some()),
                    ("measured_state", m.measured_state.is_some()),
                ] {
                    if !present {
                        missing.push(format!("model: missing `{key}` (or give `preset`)"));
                    }
                }
                if !missing.is_empty() {
                    return Err(Error::Config(missing));
                }
                MatterModel {
                    hamiltonian: m.hamiltonian.as_ref().expect("checked").to_operator("hamiltonian")?,
                    coupling: m.coupling.as_ref().expect("checked").to_operator("coupling")?,
                    dissipators: m
                        .dissipators
                        .iter()
                        .enumerate()
                        .map(|(i, d)| d.to_operator(&format!("dissipators[{i}]")))
                        .collect::<Result<_>>()?,
                    omega0: m.omega0.expect("checked"),
                    measured_state: m.measured_state.expect("checked"),
                    ground_state: m.ground_state.unwrap_or(0),
                    grading: m.grading.clone().expect("checked"),
                    spectator_dim: m.spectator_dim.unwrap_or(1),
                    spectator_init: SpectatorInit::Ground,
                    frame: 0.0,
                }
            }
        };
        if let Some(init) = m.spectator_init {
            model.spectator_init = init;
        }
        Ok(model)
    }

    pub fn aux_spec(&self) -> Option<AuxSpec> {
        self.aux.as_ref().and_then(AuxConfig::chi).map(AuxSpec::matched)
    }

    pub fn composite(&self) -> Result<CompositeModel> {
        let mut c = CompositeModel::new(self.matter()?, self.aux_spec());
        c.mode = ModeSpec {
            n_max: self.mode.n_max,
            initial_fock: self.mode.initial_fock,
        };
        Ok(c)
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            dt: self.grid.dt,
            m_count: grid_count(self.grid.t_max_m, self.grid.dt),
            k_count: grid_count(self.grid.t_max_int, self.grid.dt),
        }
    }

    pub fn pulse_params(&self) -> PulseParams {
        PulseParams {
            t_gamma: self.pulse.t_gamma,
            n_gamma: self.pulse.area(),
            subtraction: self.pulse.subtraction,
        }
    }

    pub fn wavepacket_dt(&self) -> f64 {
        self.wavepacket.dt.unwrap_or(self.grid.dt)
    }

    /// Gaussian profile on a grid through `t = 0` with step `dt`.
    pub fn wavepacket_on(&self, dt: f64) -> Result<Wavepacket> {
        self.wavepacket_anchored(dt, 0.0)
    }

    /// Same profile on the grid through `anchor`, so that `anchor` itself
    /// is a valid evaluation time for any `dt`.
    pub fn wavepacket_anchored(&self, dt: f64, anchor: f64) -> Result<Wavepacket> {
        let w = &self.wavepacket;
        gaussian_aligned(w.sigma_t, w.t0, dt, anchor, w.width_sigmas)
    }

    pub fn wavepacket(&self) -> Result<Wavepacket> {
        self.wavepacket_on(self.wavepacket_dt())
    }

    pub fn eval_times(&self) -> Vec<f64> {
        let w = &self.wavepacket;
        let from = w.t_from.unwrap_or(w.t0 + 2.0 * w.sigma_t);
        let to = w.t_to.unwrap_or(from);
        let step = w.t_step.unwrap_or(self.grid.dt);
        let n = ((to - from) / step + 1e-9).floor().max(0.0) as usize;
        (0..=n).map(|i| from + i as f64 * step).collect()
    }

    /// `None` selects the quadrature matching each table's provenance.
    pub fn quadrature(&self) -> Option<Quadrature> {
        Quadrature::parse(&self.wavepacket.quadrature)
    }

    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Override one scalar parameter by axis name.
    pub fn set_axis(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "dt" => self.grid.dt = value,
            "t_gamma" => self.pulse.t_gamma = value,
            "n_gamma" => {
                self.pulse.n_gamma = Some(value);
                self.pulse.gamma = None;
            }
            "gamma" => {
                self.pulse.gamma = Some(value);
                self.pulse.n_gamma = None;
            }
            "chi" => self.aux = Some(AuxConfig { chi: Some(value), chi_squared: None }),
            "chi_squared" => self.aux = Some(AuxConfig { chi: None, chi_squared: Some(value) }),
            "sigma_t" => self.wavepacket.sigma_t = value,
            "t0" => self.wavepacket.t0 = value,
            "subtraction" => self.pulse.subtraction = value,
            other => {
                let hint = suggest(other, AXES).map(|s| format!("; did you mean `{s}`?")).unwrap_or_default();
                return Err(Error::Config(vec![format!(
                    "unknown sweep axis `{other}` (known: {}){hint}",
                    AXES.join(", ")
                )]));
            }
        }
        let problems = self.validate();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}
