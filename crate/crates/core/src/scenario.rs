//! TOML scenario files.
//!
//! ```toml
//! name = "leaky-pair"
//!
//! [plant]
//! dim = 1
//! drift = "linear"        # linear | rotation_scaling | cubic_damped
//! params = [1.0]
//!
//! [controller]
//! topology = "independent" # or "connected", which takes `gain` instead
//! B = [-1.0, 1.0]          # row-major, dim × units
//! thetas = [0.4, 0.4]
//! lambdas = [3.0, 3.0]
//!
//! [controller.input_fn]
//! directions = [1.0, -1.0] # row-major, units × dim
//! scales = [1.0, 1.0]
//!
//! [sim]
//! x0 = [2.0]
//! T = 10.0
//! dt = 1e-4
//! event_tol = 1e-9
//! ```

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use crate::linalg::Mat;
use crate::model::{validate, ControllerSpec, Drift, InputFn, PlantSpec};
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    /// 1-based line in the scenario source, when known.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    pub x0: Vec<f64>,
    pub config: SimConfig,
    pub outputs: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    outputs: Option<String>,
    plant: Spanned<RawPlant>,
    controller: Spanned<RawController>,
    sim: Spanned<RawSim>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    dim: usize,
    drift: Spanned<String>,
    params: Spanned<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    topology: Spanned<String>,
    #[serde(rename = "B")]
    b: Spanned<Vec<f64>>,
    thetas: Option<Spanned<Vec<f64>>>,
    lambdas: Spanned<Vec<f64>>,
    input_fn: Option<Spanned<RawInput>>,
    gain: Option<Spanned<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    directions: Spanned<Vec<f64>>,
    scales: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    x0: Spanned<Vec<f64>>,
    #[serde(rename = "T")]
    t_end: f64,
    dt: f64,
    event_tol: f64,
}

struct Source<'a>(&'a str);

impl Source<'_> {
    fn line_of(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.0.len());
        self.0[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err<T>(&self, span: Range<usize>, message: impl Into<String>) -> Result<T, ScenarioError> {
        Err(ScenarioError { line: Some(self.line_of(span)), message: message.into() })
    }

    fn matrix(&self, field: &Spanned<Vec<f64>>, rows: usize, what: &str) -> Result<Mat, ScenarioError> {
        let v = field.get_ref();
        if rows == 0 || !v.len().is_multiple_of(rows) {
            return self.err(field.span(), format!("{what}: {} entries do not fill {rows} rows", v.len()));
        }
        Mat::from_row_major(rows, v.len() / rows, v.clone())
            .or_else(|e| self.err(field.span(), format!("{what}: {e}")))
    }
}

impl Scenario {
    pub fn from_toml_str(src: &str) -> Result<Scenario, ScenarioError> {
        let source = Source(src);
        let raw: RawScenario = toml::from_str(src).map_err(|e| ScenarioError {
            line: e.span().map(|s| source.line_of(s)),
            message: e.message().to_string(),
        })?;

        let plant_raw = raw.plant.get_ref();
        let dim = plant_raw.dim;
        let drift = Drift::from_registry(plant_raw.drift.get_ref(), plant_raw.params.get_ref(), dim)
            .or_else(|e| source.err(plant_raw.drift.span(), e.to_string()))?;
        let plant = PlantSpec::new(dim, drift);

        let c = raw.controller.get_ref();
        let b = source.matrix(&c.b, dim, "B")?;
        let units = b.cols();
        let controller = match c.topology.get_ref().as_str() {
            "independent" => {
                let Some(thetas) = &c.thetas else {
                    return source.err(raw.controller.span(), "independent controller needs `thetas`");
                };
                let Some(input) = &c.input_fn else {
                    return source.err(raw.controller.span(), "independent controller needs [controller.input_fn]");
                };
                let inp = input.get_ref();
                let directions = source.matrix(&inp.directions, units, "input_fn.directions")?;
                ControllerSpec::Independent {
                    b,
                    thetas: thetas.get_ref().clone(),
                    lambdas: c.lambdas.get_ref().clone(),
                    input: InputFn::new(directions, inp.scales.clone()),
                }
            }
            "connected" => {
                let Some(gain) = &c.gain else {
                    return source.err(raw.controller.span(), "connected controller needs `gain`");
                };
                ControllerSpec::Connected {
                    b,
                    lambdas: c.lambdas.get_ref().clone(),
                    gain: source.matrix(gain, dim, "gain")?,
                }
            }
            other => {
                return source.err(
                    c.topology.span(),
                    format!("unknown topology `{other}` (expected independent or connected)"),
                )
            }
        };

        let report = validate(&plant, &controller);
        if !report.is_valid() {
            return source.err(raw.controller.span(), report.to_string());
        }

        let s = raw.sim.get_ref();
        if s.x0.get_ref().len() != dim {
            return source.err(s.x0.span(), format!("x0 has {} entries, plant dim is {dim}", s.x0.get_ref().len()));
        }
        let config = SimConfig::new(s.t_end, s.dt, s.event_tol);
        if let Err(e) = config.check() {
            return source.err(raw.sim.span(), e.to_string());
        }

        Ok(Scenario {
            name: raw.name.unwrap_or_else(|| "scenario".into()),
            plant,
            controller,
            x0: s.x0.get_ref().clone(),
            config,
            outputs: raw.outputs.map(PathBuf::from),
        })
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError { line: None, message: format!("{}: {e}", path.display()) })?;
        Scenario::from_toml_str(&src)
    }

    /// Serializes back to the file format. Floats use the shortest
    /// representation that round-trips exactly.
    pub fn to_toml_string(&self) -> String {
        let list = |v: &[f64]| format!("[{}]", v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));
        let mut s = format!("name = {:?}\n", self.name);
        if let Some(out) = &self.outputs {
            s += &format!("outputs = {:?}\n", out.display().to_string());
        }
        s += &format!(
            "\n[plant]\ndim = {}\ndrift = {:?}\nparams = {}\n",
            self.plant.dim,
            self.plant.drift.name(),
            list(&self.plant.drift.params())
        );
        s += &format!(
            "\n[controller]\ntopology = {:?}\nB = {}\nlambdas = {}\n",
            self.controller.topology(),
            list(self.controller.b().as_slice()),
            list(self.controller.lambdas())
        );
        match &self.controller {
            ControllerSpec::Independent { thetas, input, .. } => {
                s += &format!("thetas = {}\n", list(thetas));
                s += &format!(
                    "\n[controller.input_fn]\ndirections = {}\nscales = {}\n",
                    list(input.directions.as_slice()),
                    list(&input.scales)
                );
            }
            ControllerSpec::Connected { gain, .. } => s += &format!("gain = {}\n", list(gain.as_slice())),
        }
        s += &format!(
            "\n[sim]\nx0 = {}\nT = {:?}\ndt = {:?}\nevent_tol = {:?}\n",
            list(&self.x0),
            self.config.t_end,
            self.config.dt,
            self.config.event_tol
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = r#"
name = "leaky-pair"

[plant]
dim = 1
drift = "linear"
params = [1.0]

[controller]
topology = "independent"
B = [-1.0, 1.0]
thetas = [0.4, 0.4]
lambdas = [3.0, 3.0]

[controller.input_fn]
directions = [1.0, -1.0]
scales = [1.0, 1.0]

[sim]
x0 = [2.0]
T = 10.0
dt = 1e-4
event_tol = 1e-9
"#;

    #[test]
    fn parses_scalar_pair() {
        let s = Scenario::from_toml_str(FIG2).unwrap();
        assert_eq!(s.controller, ControllerSpec::scalar_pair(1.0, 0.4, 3.0));
        assert_eq!(s.plant, PlantSpec::scalar(1.0));
        assert_eq!(s.x0, vec![2.0]);
        assert_eq!(s.config, SimConfig::new(10.0, 1e-4, 1e-9));
    }

    #[test]
    fn round_trips() {
        let s = Scenario::from_toml_str(FIG2).unwrap();
        let again = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn syntax_error_has_line() {
        let bad = FIG2.replace("dim = 1", "dim = ");
        let e = Scenario::from_toml_str(&bad).unwrap_err();
        assert_eq!(e.line, Some(5), "{e}");
    }

    #[test]
    fn semantic_errors_have_lines() {
        let e = Scenario::from_toml_str(&FIG2.replace("drift = \"linear\"", "drift = \"quartic\"")).unwrap_err();
        assert_eq!(e.line, Some(6));
        let e = Scenario::from_toml_str(&FIG2.replace("thetas = [0.4, 0.4]", "thetas = [0.0, 0.4]")).unwrap_err();
        assert!(e.to_string().contains("threshold must be positive"), "{e}");
        assert!(e.line.is_some());
        let e = Scenario::from_toml_str(&FIG2.replace("x0 = [2.0]", "x0 = [2.0, 1.0]")).unwrap_err();
        assert_eq!(e.line, Some(20));
    }

    #[test]
    fn connected_needs_gain() {
        let src = FIG2.replace("topology = \"independent\"", "topology = \"connected\"");
        let e = Scenario::from_toml_str(&src).unwrap_err();
        assert!(e.message.contains("gain"), "{e}");
    }
}
