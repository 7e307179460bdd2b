use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::autoencoder::TrainConfig;
use crate::baselines::{AmpConfig, SolverSettings};
use crate::datagen::{ActivityCase, DatasetSizes, ScenarioConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    DlFixedMatrix,
    Lasso,
    GroupLasso,
    SparseGroupLasso,
    Amp,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Proposed,
        Method::DlFixedMatrix,
        Method::Lasso,
        Method::GroupLasso,
        Method::SparseGroupLasso,
        Method::Amp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::DlFixedMatrix => "dl_fixed_matrix",
            Method::Lasso => "lasso",
            Method::GroupLasso => "group_lasso",
            Method::SparseGroupLasso => "sparse_group_lasso",
            Method::Amp => "amp",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Method::Proposed | Method::DlFixedMatrix)
    }

    pub fn needs_groups(self) -> bool {
        matches!(self, Method::GroupLasso | Method::SparseGroupLasso)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Undersampling ratio; `L = round(value * N)`.
    #[serde(rename = "L_over_N")]
    LOverN,
    #[serde(rename = "p")]
    P,
    #[serde(rename = "ratio_p1_p2")]
    RatioP1P2,
    #[serde(rename = "p_u")]
    PU,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::LOverN => "L_over_N",
            SweepAxis::P => "p",
            SweepAxis::RatioP1P2 => "ratio_p1_p2",
            SweepAxis::PU => "p_u",
        }
    }

    pub fn parse(s: &str) -> Option<SweepAxis> {
        [SweepAxis::LOverN, SweepAxis::P, SweepAxis::RatioP1P2, SweepAxis::PU]
            .into_iter()
            .find(|a| a.name() == s)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Reduced sample counts that train in minutes on one core.
    #[default]
    Desk,
    /// Full dataset sizes of the reference experiments.
    Paper,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Profile> {
        match s {
            "desk" => Some(Profile::Desk),
            "paper" => Some(Profile::Paper),
            _ => None,
        }
    }

    pub fn sizes(self, case: &ActivityCase) -> DatasetSizes {
        match self {
            Profile::Desk => DatasetSizes::DESK,
            Profile::Paper => DatasetSizes::paper(case),
        }
    }

    fn calibration_samples(self) -> usize {
        match self {
            Profile::Desk => 1000,
            Profile::Paper => 5000,
        }
    }

    fn timing_samples(self) -> usize {
        match self {
            Profile::Desk => 1000,
            Profile::Paper => 10_000,
        }
    }
}

/// How the classical baselines pick their weights and how they are timed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSettings {
    /// Validation samples used to choose weights and magnitude thresholds;
    /// `None` takes the profile default.
    pub calibration_samples: Option<usize>,
    /// Test samples timed per method; `None` takes the profile default.
    pub timing_samples: Option<usize>,
    pub warmup_samples: usize,
    pub lambda_points: usize,
    pub solver: SolverSettings,
    /// Fractions of the weight given to the element-wise penalty of the
    /// sparse group LASSO; the rest goes to the group penalty.
    pub sgl_mixes: Vec<f64>,
    pub amp: AmpConfig,
    /// Threshold multipliers tried for AMP.
    pub amp_thetas: Vec<f64>,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self {
            calibration_samples: None,
            timing_samples: None,
            warmup_samples: 10,
            lambda_points: 20,
            solver: SolverSettings::default(),
            sgl_mixes: vec![0.2, 0.5, 0.8],
            amp: AmpConfig::default(),
            amp_thetas: vec![0.5, 0.75, 1.0, 1.1, 1.25, 1.5, 2.0, 2.5, 3.0],
        }
    }
}

/// A full experiment: one scenario swept along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub profile: Profile,
    pub output_dir: PathBuf,
    /// `None` selects the methods suited to the scenario.
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    /// Overrides the profile's dataset sizes.
    #[serde(default)]
    pub sizes: Option<DatasetSizes>,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub sweep: Sweep,
    #[serde(default)]
    pub baselines: BaselineSettings,
}

impl ExperimentPlan {
    pub fn new(scenario: ScenarioConfig, sweep: Sweep, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            profile: Profile::Desk,
            output_dir: output_dir.into(),
            methods: None,
            sizes: None,
            scenario,
            train: TrainConfig {
                seed: scenario.seed,
                ..TrainConfig::default()
            },
            sweep,
            baselines: BaselineSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(format!("cannot serialize plan: {e}")))
    }

    pub fn sizes(&self) -> DatasetSizes {
        self.sizes.unwrap_or_else(|| self.profile.sizes(&self.scenario.case))
    }

    pub fn calibration_samples(&self) -> usize {
        self.baselines
            .calibration_samples
            .unwrap_or_else(|| self.profile.calibration_samples())
    }

    pub fn timing_samples(&self) -> usize {
        self.baselines.timing_samples.unwrap_or_else(|| self.profile.timing_samples())
    }

    /// Scenario at one sweep value.
    pub fn scenario_at(&self, value: f64) -> Result<ScenarioConfig> {
        let mut s = self.scenario;
        match (self.sweep.axis, &mut s.case) {
            (SweepAxis::LOverN, _) => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::InvalidConfig(format!("L/N value {value} must be positive")));
                }
                s.l = (value * s.n as f64).round() as usize;
            }
            (SweepAxis::P, _) => s.p = value,
            (SweepAxis::RatioP1P2, ActivityCase::TwoGroup { ratio_p1_p2 }) => *ratio_p1_p2 = value,
            (SweepAxis::PU, ActivityCase::GroupCorrelated { p_u, .. }) => *p_u = value,
            (axis, _) => {
                return Err(Error::InvalidConfig(format!(
                    "sweep axis {axis} does not apply to case {}",
                    s.case.id()
                )))
            }
        }
        s.validate()?;
        Ok(s)
    }

    /// Methods run at one sweep point.
    ///
    /// By default the group penalties join only in the group-correlated case:
    /// group LASSO when `p_u = 1`, sparse group LASSO when `p_u < 1`.
    pub fn methods_for(&self, scenario: &ScenarioConfig) -> Vec<Method> {
        if let Some(m) = &self.methods {
            return m.clone();
        }
        let mut out = vec![Method::Proposed, Method::DlFixedMatrix, Method::Lasso];
        if let ActivityCase::GroupCorrelated { p_u, .. } = scenario.case {
            out.push(if p_u >= 1.0 {
                Method::GroupLasso
            } else {
                Method::SparseGroupLasso
            });
        }
        out.push(Method::Amp);
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value".into()));
        }
        if let Some(m) = &self.methods {
            if m.is_empty() {
                return Err(Error::InvalidConfig("method list is empty".into()));
            }
            let grouped = matches!(self.scenario.case, ActivityCase::GroupCorrelated { .. });
            if let Some(bad) = m.iter().find(|m| m.needs_groups() && !grouped) {
                return Err(Error::InvalidConfig(format!("{bad} needs the group-correlated case")));
            }
        }
        for &v in &self.sweep.values {
            self.scenario_at(v)?;
        }
        self.train.validate()?;
        let sizes = self.sizes();
        if sizes.train == 0 || sizes.validation == 0 || sizes.test == 0 {
            return Err(Error::InvalidConfig(format!("dataset sizes must be positive: {sizes:?}")));
        }
        let b = &self.baselines;
        if b.lambda_points == 0 || b.amp_thetas.is_empty() || b.sgl_mixes.is_empty() {
            return Err(Error::InvalidConfig("baseline grids must be non-empty".into()));
        }
        if b.sgl_mixes.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::InvalidConfig("sparse group mixes must lie in [0, 1]".into()));
        }
        if self.calibration_samples() == 0 || self.timing_samples() == 0 {
            return Err(Error::InvalidConfig("calibration and timing sample counts must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
output_dir = "out"
methods = ["proposed", "lasso", "amp"]

[scenario]
n = 40
l = 12
case = "iid"
p = 0.1
sigma2 = 0.1
seed = 7

[train]
max_epochs = 30

[sweep]
axis = "L_over_N"
values = [0.2, 0.3]
"#;

    #[test]
    fn parses_minimal_plan() {
        let plan = ExperimentPlan::from_toml(EXAMPLE).unwrap();
        assert_eq!(plan.profile, Profile::Desk);
        assert_eq!(plan.train.max_epochs, 30);
        assert_eq!(plan.train.patience, 5);
        assert_eq!(plan.sizes(), DatasetSizes::DESK);
        assert_eq!(plan.scenario_at(0.3).unwrap().l, 12);
        assert_eq!(plan.scenario_at(0.2).unwrap().l, 8);
    }

    #[test]
    fn round_trips_through_toml() {
        let plan = ExperimentPlan::from_toml(EXAMPLE).unwrap();
        let again = ExperimentPlan::from_toml(&plan.to_toml().unwrap()).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn full_scale_operating_point() {
        let s = ScenarioConfig::iid(40, 1, 0.1, 0.1, 0);
        let plan = ExperimentPlan::new(s, Sweep { axis: SweepAxis::LOverN, values: vec![0.3] }, "o");
        let at = plan.scenario_at(0.3).unwrap();
        assert_eq!((at.n, at.l), (40, 12));
    }

    #[test]
    fn case_3_full_scale_shape() {
        let s = ScenarioConfig {
            case: ActivityCase::GroupCorrelated {
                p_u: 1.0,
                group_count: 40,
            },
            ..ScenarioConfig::iid(200, 60, 0.1, 0.1, 0)
        };
        assert_eq!(s.group_size(), Some(5));
        let mut plan = ExperimentPlan::new(s, Sweep { axis: SweepAxis::PU, values: vec![0.5, 1.0] }, "o");
        plan.profile = Profile::Paper;
        assert_eq!(plan.sizes(), DatasetSizes::PAPER_CASE_3);
        plan.validate().unwrap();
        let at_half = plan.scenario_at(0.5).unwrap();
        assert!(plan.methods_for(&at_half).contains(&Method::SparseGroupLasso));
        let at_one = plan.scenario_at(1.0).unwrap();
        let methods = plan.methods_for(&at_one);
        assert!(methods.contains(&Method::GroupLasso) && !methods.contains(&Method::SparseGroupLasso));
    }

    #[test]
    fn axis_must_match_case() {
        let s = ScenarioConfig::iid(20, 6, 0.1, 0.1, 0);
        let plan = ExperimentPlan::new(s, Sweep { axis: SweepAxis::PU, values: vec![0.5] }, "o");
        assert!(plan.validate().is_err());
        let plan = ExperimentPlan::new(s, Sweep { axis: SweepAxis::RatioP1P2, values: vec![2.0] }, "o");
        assert!(plan.validate().is_err());
        let plan = ExperimentPlan::new(s, Sweep { axis: SweepAxis::LOverN, values: vec![1.0] }, "o");
        assert!(plan.validate().is_err(), "L = N is not a compression");
        let mut plan = ExperimentPlan::new(s, Sweep { axis: SweepAxis::P, values: vec![0.05] }, "o");
        plan.validate().unwrap();
        plan.methods = Some(vec![Method::GroupLasso]);
        assert!(plan.validate().is_err());
    }

    #[test]
    fn default_methods_for_iid() {
        let s = ScenarioConfig::iid(20, 6, 0.1, 0.1, 0);
        let plan = ExperimentPlan::new(s, Sweep { axis: SweepAxis::P, values: vec![0.1] }, "o");
        assert_eq!(
            plan.methods_for(&s),
            vec![Method::Proposed, Method::DlFixedMatrix, Method::Lasso, Method::Amp]
        );
    }

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        for a in [SweepAxis::LOverN, SweepAxis::P, SweepAxis::RatioP1P2, SweepAxis::PU] {
            assert_eq!(SweepAxis::parse(a.name()), Some(a));
        }
    }
}
