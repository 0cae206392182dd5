//! Experiment configuration: one defaults table, a TOML file merged over it,
//! then `--set key=value` overrides.
//!
//! | key | default | notes |
//! |---|---|---|
//! | `seed` | 1 | master seed; MC blocks use `(seed, block)` streams |
//! | `n_samples` | 100000 | MC samples per ε |
//! | `t` | 0.5 | macro time of the pairings |
//! | `eps_ladder` | `[0.2, 0.1, 0.05, 0.025]` | strictly decreasing, in (0, 1) |
//! | `output_dir` | unset | else `WCL_OUTPUT_DIR`, else `wcl-output` |
//! | `potential.kind` | `"poly"` | `"poly"` or `"table"` |
//! | `potential.k` | 3 | exponent of `(1 - r²)^k` |
//! | `potential.strength` | 1.0 (0.2 for `consistency`, `chaos`) | prefactor of φ |
//! | `potential.table` | unset | two-column `r φ(r)` file when `kind = "table"` |
//! | `initial.rho_center`, `initial.rho_radius` | `[0,0,0]`, 1.0 | spatial bump of f₀ |
//! | `initial.b`, `initial.drift` | 1.0, `[0,0,1]` | bi-Maxwellian of f₀ |
//! | `test_function.chi_*`, `test_function.eta_*` | `[0,0,0.2]`, 0.8, `[0,0,0.5]`, 1.5 | u = χ(x)η(v) |
//! | `second_test_function.*` | `[0,0,-0.2]`, 0.8, `[0,0,-0.5]`, 1.5 | second factor for `chaos` |
//! | `mc.steps_per_eps` | 500 | two-body step `ε / steps_per_eps` |
//! | `pairing.grid_n`, `n_tau`, `n_radial`, `n_axial`, `n_spatial` | 32, 16, 10, 16, 8 | Landau reference pairing |
//! | `pairing.free_rule` | `[12, 10, 12]` | ball rule of the free pairing |
//! | `kernel.w`, `kernel.tau` | `[1,0,0]`, 1.0 | |
//! | `kernel.n_radial`, `n_polar`, `n_azimuth`, `steps_per_transit` | 32, 16, 32, 64 | |
//! | `landau.coarse_n`, `n`, `refine_n` | 24, 48, 96 | velocity grid points per axis |
//! | `landau.half_width`, `landau.b` | 4.5, 1.0 | grid `[-h, h]³`, Maxwellian |
//! | `landau.defect_constant` | 0.065 | bound `‖Q(M,M)‖∞ ≤ C·A·Δv` |
//! | `landau.mixture_b`, `landau.mixture_drift` | 1.5, `[0.6, 0.3, 0]` | bi-Maxwellian for the weak forms |
//! | `scatter.eps`, `events`, `steps_per_eps` | 0.01, 1000, 1000 | |
//! | `scatter.speed_span` | 3.0 | `|w|` uniform on `(aε^{1/4}, aε^{1/4} + span)` |
//! | `scatter.deviation_factor` | 4.0 | velocity bound `C√ε/|w|` with `C = factor · sup|F|` |
//! | `scatter.deflection_w`, `deflection_impact`, `deflection_smax` | 4.0, 0.5, 1.0 | ladder geometry |
//! | `nbody.n`, `b`, `t_final`, `dt_factor`, `box_len` | 512, 1.0, 1.0, 200, 1.0 | `dt = ε / dt_factor` |
//! | `nbody.bins`, `vmax`, `record_every`, `check_n` | 4, 2.5, 16, 216 | |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weakcoupling::operator::PairingResolution;
use weakcoupling::phase::{BiMaxwellian, Bump, InitialData, TestFunction};
use weakcoupling::{Potential, Vec3};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub n_samples: usize,
    pub t: f64,
    pub eps_ladder: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub potential: PotentialSpec,
    pub initial: InitialSpec,
    pub test_function: TestFunctionSpec,
    pub second_test_function: TestFunctionSpec,
    pub mc: McSpec,
    pub pairing: PairingSpec,
    pub kernel: KernelSpec,
    pub landau: LandauSpec,
    pub scatter: ScatterSpec,
    pub nbody: NbodySpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSpec {
    pub kind: String,
    pub k: u32,
    pub strength: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    pub rho_center: [f64; 3],
    pub rho_radius: f64,
    pub b: f64,
    pub drift: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestFunctionSpec {
    pub chi_center: [f64; 3],
    pub chi_radius: f64,
    pub eta_center: [f64; 3],
    pub eta_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSpec {
    pub steps_per_eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairingSpec {
    pub grid_n: usize,
    pub n_tau: usize,
    pub n_radial: usize,
    pub n_axial: usize,
    pub n_spatial: usize,
    pub free_rule: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSpec {
    pub w: [f64; 3],
    pub tau: f64,
    pub n_radial: usize,
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub steps_per_transit: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandauSpec {
    pub coarse_n: usize,
    pub n: usize,
    pub refine_n: usize,
    pub half_width: f64,
    pub b: f64,
    pub defect_constant: f64,
    pub mixture_b: f64,
    pub mixture_drift: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScatterSpec {
    pub eps: f64,
    pub events: usize,
    pub steps_per_eps: f64,
    pub speed_span: f64,
    pub deviation_factor: f64,
    pub deflection_w: f64,
    pub deflection_impact: f64,
    pub deflection_smax: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NbodySpec {
    pub n: usize,
    pub b: f64,
    pub t_final: f64,
    pub dt_factor: f64,
    pub box_len: f64,
    pub bins: usize,
    pub vmax: f64,
    pub record_every: usize,
    pub check_n: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: String::new(),
            seed: 1,
            n_samples: 100_000,
            t: 0.5,
            eps_ladder: vec![0.2, 0.1, 0.05, 0.025],
            output_dir: None,
            potential: PotentialSpec::default(),
            initial: InitialSpec::default(),
            test_function: TestFunctionSpec::default(),
            second_test_function: TestFunctionSpec {
                chi_center: [0.0, 0.0, -0.2],
                eta_center: [0.0, 0.0, -0.5],
                ..TestFunctionSpec::default()
            },
            mc: McSpec::default(),
            pairing: PairingSpec::default(),
            kernel: KernelSpec::default(),
            landau: LandauSpec::default(),
            scatter: ScatterSpec::default(),
            nbody: NbodySpec::default(),
        }
    }
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self { kind: "poly".into(), k: 3, strength: 1.0, table: None }
    }
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { rho_center: [0.0; 3], rho_radius: 1.0, b: 1.0, drift: [0.0, 0.0, 1.0] }
    }
}

impl Default for TestFunctionSpec {
    fn default() -> Self {
        Self { chi_center: [0.0, 0.0, 0.2], chi_radius: 0.8, eta_center: [0.0, 0.0, 0.5], eta_radius: 1.5 }
    }
}

impl Default for McSpec {
    fn default() -> Self {
        Self { steps_per_eps: 500.0 }
    }
}

impl Default for PairingSpec {
    fn default() -> Self {
        let r = PairingResolution::default();
        Self {
            grid_n: r.grid_n,
            n_tau: r.n_tau,
            n_radial: r.n_radial,
            n_axial: r.n_axial,
            n_spatial: r.n_spatial,
            free_rule: [r.free_rule.0, r.free_rule.1, r.free_rule.2],
        }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { w: [1.0, 0.0, 0.0], tau: 1.0, n_radial: 32, n_polar: 16, n_azimuth: 32, steps_per_transit: 64 }
    }
}

impl Default for LandauSpec {
    fn default() -> Self {
        Self {
            coarse_n: 24,
            n: 48,
            refine_n: 96,
            half_width: 4.5,
            b: 1.0,
            defect_constant: 0.065,
            mixture_b: 1.5,
            mixture_drift: [0.6, 0.3, 0.0],
        }
    }
}

impl Default for ScatterSpec {
    fn default() -> Self {
        Self {
            eps: 0.01,
            events: 1000,
            steps_per_eps: 1000.0,
            speed_span: 3.0,
            deviation_factor: 4.0,
            deflection_w: 4.0,
            deflection_impact: 0.5,
            deflection_smax: 1.0,
        }
    }
}

impl Default for NbodySpec {
    fn default() -> Self {
        Self {
            n: 512,
            b: 1.0,
            t_final: 1.0,
            dt_factor: 200.0,
            box_len: 1.0,
            bins: 4,
            vmax: 2.5,
            record_every: 16,
            check_n: 216,
        }
    }
}

fn usage(field: &str, message: impl Into<String>) -> CliError {
    CliError::Usage { field: field.to_string(), message: message.into() }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Recursive merge: tables merge key by key, anything else is replaced.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses `a.b.c=value`; the value is read as TOML and falls back to a bare string.
fn parse_override(text: &str) -> Result<(Vec<String>, toml::Value), CliError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| usage(text, "overrides take the form key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(usage(key, "empty key segment"));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.split('.').map(String::from).collect(), value))
}

fn nest(path: &[String], value: toml::Value) -> toml::Value {
    path.iter().rev().fold(value, |acc, k| {
        let mut t = toml::Table::new();
        t.insert(k.clone(), acc);
        toml::Value::Table(t)
    })
}

impl ExperimentConfig {
    /// Defaults for `experiment`, with the per-experiment adjustments of the table above.
    pub fn defaults_for(experiment: &str) -> Self {
        let mut c = Self { experiment: experiment.to_string(), ..Self::default() };
        if matches!(experiment, "consistency" | "chaos") {
            c.potential.strength = 0.2;
        }
        c
    }

    /// Defaults, then the file (if any), then each override in order.
    pub fn resolve(base: Self, file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let experiment = base.experiment.clone();
        let mut tree = toml::Value::try_from(&base).map_err(|e| usage("config", e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage("--config", format!("{}: {e}", path.display())))?;
            let parsed: toml::Table = toml::from_str(&text)
                .map_err(|e| usage("--config", format!("{}: {e}", path.display())))?;
            merge(&mut tree, toml::Value::Table(parsed));
        }
        for o in overrides {
            let (path, value) = parse_override(o)?;
            merge(&mut tree, nest(&path, value));
        }
        let cfg: Self = tree.try_into().map_err(|e: toml::de::Error| usage("config", e.message().to_string()))?;
        if cfg.experiment != experiment {
            return Err(usage(
                "experiment",
                format!("config names `{}` but `{experiment}` was requested", cfg.experiment),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every numeric field against the preconditions of the operation it feeds.
    pub fn validate(&self) -> Result<(), CliError> {
        let pos = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(usage(field, format!("must be positive and finite, got {v}")))
            }
        };
        let at_least = |field: &str, v: usize, min: usize| {
            if v >= min {
                Ok(())
            } else {
                Err(usage(field, format!("must be at least {min}, got {v}")))
            }
        };
        let finite3 = |field: &str, v: [f64; 3]| {
            if v.iter().all(|c| c.is_finite()) {
                Ok(())
            } else {
                Err(usage(field, "components must be finite"))
            }
        };

        if self.eps_ladder.is_empty() {
            return Err(usage("eps_ladder", "must not be empty"));
        }
        if let Some(e) = self.eps_ladder.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(usage("eps_ladder", format!("entries must lie in (0, 1), got {e}")));
        }
        if self.eps_ladder.windows(2).any(|p| p[1] >= p[0]) {
            return Err(usage("eps_ladder", "must be strictly decreasing"));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(usage("t", format!("must be finite and nonnegative, got {}", self.t)));
        }
        at_least("n_samples", self.n_samples, 1)?;

        match self.potential.kind.as_str() {
            "poly" => {
                if self.potential.k < 3 {
                    return Err(usage("potential.k", format!("must be at least 3, got {}", self.potential.k)));
                }
            }
            "table" => {
                if self.potential.table.is_none() {
                    return Err(usage("potential.table", "required when potential.kind = \"table\""));
                }
            }
            other => return Err(usage("potential.kind", format!("expected \"poly\" or \"table\", got \"{other}\""))),
        }
        if !self.potential.strength.is_finite() {
            return Err(usage("potential.strength", "must be finite"));
        }

        finite3("initial.rho_center", self.initial.rho_center)?;
        finite3("initial.drift", self.initial.drift)?;
        pos("initial.rho_radius", self.initial.rho_radius)?;
        pos("initial.b", self.initial.b)?;
        for (name, u) in [("test_function", &self.test_function), ("second_test_function", &self.second_test_function)] {
            finite3(&format!("{name}.chi_center"), u.chi_center)?;
            finite3(&format!("{name}.eta_center"), u.eta_center)?;
            pos(&format!("{name}.chi_radius"), u.chi_radius)?;
            pos(&format!("{name}.eta_radius"), u.eta_radius)?;
        }

        if !(self.mc.steps_per_eps >= 100.0 && self.mc.steps_per_eps.is_finite()) {
            return Err(usage("mc.steps_per_eps", "must be at least 100 so that dt <= eps/100"));
        }

        at_least("pairing.grid_n", self.pairing.grid_n, 16)?;
        at_least("pairing.n_tau", self.pairing.n_tau, 2)?;
        if self.pairing.n_tau % 2 != 0 {
            return Err(usage("pairing.n_tau", "Simpson needs an even number of subintervals"));
        }
        at_least("pairing.n_radial", self.pairing.n_radial, 1)?;
        at_least("pairing.n_axial", self.pairing.n_axial, 1)?;
        at_least("pairing.n_spatial", self.pairing.n_spatial, 1)?;
        if self.pairing.free_rule.contains(&0) {
            return Err(usage("pairing.free_rule", "node counts must be positive"));
        }

        finite3("kernel.w", self.kernel.w)?;
        if vec3(self.kernel.w).norm() == 0.0 {
            return Err(usage("kernel.w", "must be nonzero"));
        }
        pos("kernel.tau", self.kernel.tau)?;
        at_least("kernel.n_radial", self.kernel.n_radial, 1)?;
        at_least("kernel.n_polar", self.kernel.n_polar, 1)?;
        at_least("kernel.n_azimuth", self.kernel.n_azimuth, 1)?;
        at_least("kernel.steps_per_transit", self.kernel.steps_per_transit, 2)?;

        let l = &self.landau;
        at_least("landau.coarse_n", l.coarse_n, 16)?;
        if !(l.coarse_n < l.n && l.n < l.refine_n) {
            return Err(usage("landau.n", "need coarse_n < n < refine_n"));
        }
        pos("landau.half_width", l.half_width)?;
        pos("landau.b", l.b)?;
        pos("landau.defect_constant", l.defect_constant)?;
        pos("landau.mixture_b", l.mixture_b)?;
        finite3("landau.mixture_drift", l.mixture_drift)?;
        if l.half_width < 4.0 / l.b.sqrt() {
            return Err(usage("landau.half_width", format!("must cover the envelope 4/sqrt(b) = {}", 4.0 / l.b.sqrt())));
        }

        let s = &self.scatter;
        if !(s.eps > 0.0 && s.eps < 1.0) {
            return Err(usage("scatter.eps", format!("must lie in (0, 1), got {}", s.eps)));
        }
        at_least("scatter.events", s.events, 1)?;
        if !(s.steps_per_eps >= 100.0 && s.steps_per_eps.is_finite()) {
            return Err(usage("scatter.steps_per_eps", "must be at least 100"));
        }
        pos("scatter.speed_span", s.speed_span)?;
        pos("scatter.deviation_factor", s.deviation_factor)?;
        pos("scatter.deflection_w", s.deflection_w)?;
        pos("scatter.deflection_smax", s.deflection_smax)?;
        if !(s.deflection_impact >= 0.0 && s.deflection_impact <= 1.0) {
            return Err(usage("scatter.deflection_impact", "must lie in [0, 1]"));
        }

        let n = &self.nbody;
        at_least("nbody.n", n.n, 2)?;
        at_least("nbody.check_n", n.check_n, 2)?;
        pos("nbody.b", n.b)?;
        if !(n.t_final >= 0.0 && n.t_final.is_finite()) {
            return Err(usage("nbody.t_final", "must be finite and nonnegative"));
        }
        if !(n.dt_factor >= 100.0 && n.dt_factor.is_finite()) {
            return Err(usage("nbody.dt_factor", "must be at least 100 so that dt <= eps/100"));
        }
        pos("nbody.box_len", n.box_len)?;
        at_least("nbody.bins", n.bins, 1)?;
        pos("nbody.vmax", n.vmax)?;
        Ok(())
    }

    pub fn potential(&self) -> Result<Potential, CliError> {
        let p = match self.potential.kind.as_str() {
            "table" => {
                let path = self.potential.table.as_ref().ok_or_else(|| usage("potential.table", "missing"))?;
                Potential::from_table_file(path)
                    .map_err(|e| usage("potential.table", e.to_string()))?
                    .scaled(self.potential.strength)
            }
            _ => Potential::polynomial(self.potential.k, self.potential.strength)
                .map_err(|e| usage("potential", e.to_string()))?,
        };
        Ok(p)
    }

    pub fn initial_data(&self) -> Result<InitialData, CliError> {
        let i = &self.initial;
        let rho = Bump::new(vec3(i.rho_center), i.rho_radius).map_err(|e| usage("initial.rho_radius", e.to_string()))?;
        let g = BiMaxwellian::new(i.b, vec3(i.drift)).map_err(|e| usage("initial.b", e.to_string()))?;
        Ok(InitialData::new(rho, g))
    }

    fn make_test_function(name: &str, u: &TestFunctionSpec) -> Result<TestFunction, CliError> {
        let chi = Bump::new(vec3(u.chi_center), u.chi_radius).map_err(|e| usage(&format!("{name}.chi_radius"), e.to_string()))?;
        let eta = Bump::new(vec3(u.eta_center), u.eta_radius).map_err(|e| usage(&format!("{name}.eta_radius"), e.to_string()))?;
        Ok(TestFunction::new(chi, eta))
    }

    pub fn test_function(&self) -> Result<TestFunction, CliError> {
        Self::make_test_function("test_function", &self.test_function)
    }

    pub fn second_test_function(&self) -> Result<TestFunction, CliError> {
        Self::make_test_function("second_test_function", &self.second_test_function)
    }

    pub fn pairing_resolution(&self) -> PairingResolution {
        let p = &self.pairing;
        PairingResolution {
            grid_n: p.grid_n,
            n_tau: p.n_tau,
            n_radial: p.n_radial,
            n_axial: p.n_axial,
            n_spatial: p.n_spatial,
            free_rule: (p.free_rule[0], p.free_rule[1], p.free_rule[2]),
        }
    }

    pub fn mc_settings(&self) -> weakcoupling::hierarchy::McSettings {
        weakcoupling::hierarchy::McSettings {
            n_samples: self.n_samples,
            seed: self.seed,
            steps_per_eps: self.mc.steps_per_eps,
        }
    }
}
