//! Report assembly and rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use harnacklab_core::harnack::{EquivalenceMatrix, GroupRow};
use harnacklab_core::space::Family;
use harnacklab_core::{ConditionReport, MetricMeasureSpace, Verdict};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::formats::csv_err;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSummary {
    pub family: String,
    pub points: usize,
    pub window: [f64; 2],
    pub diameter: f64,
    pub total_mass: f64,
}

impl SpaceSummary {
    pub fn of(space: &MetricMeasureSpace) -> Self {
        let family = match space.family() {
            Family::Torus(t) => format!("torus Z_{}^{} {:?}", t.side, t.dim, t.metric).to_lowercase(),
            Family::Gasket { level } => format!("gasket level {level}"),
            Family::Custom => "custom".to_string(),
        };
        let (lo, hi) = space.window();
        Self {
            family,
            points: space.len(),
            window: [lo, hi],
            diameter: space.diameter(),
            total_mass: space.total_mass(),
        }
    }
}

/// A constant that moved more than the tolerance between the two levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub condition: String,
    pub constant: String,
    #[serde(with = "harnacklab_core::report::float")]
    pub coarse: f64,
    #[serde(with = "harnacklab_core::report::float")]
    pub fine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// `None` when the space family has no refinement.
    pub space: Option<SpaceSummary>,
    pub conditions: Vec<ConditionReport>,
    pub unstable: Vec<Drift>,
}

/// Everything that is a deterministic function of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Canonical {
    pub config: ExperimentConfig,
    pub space: SpaceSummary,
    pub conditions: Vec<ConditionReport>,
    pub matrix: EquivalenceMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<Refinement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub threads: usize,
    pub wall_time: f64,
    /// Seconds per condition id.
    pub condition_times: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub canonical: Canonical,
    pub meta: Meta,
}

impl SuiteReport {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(&self.canonical).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| crate::CliError::Runtime(format!("report json: {e}")))
    }

    /// One row per fitted constant, with the first witness of that constant.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["condition", "verdict", "constant", "value", "relation", "witness_value", "witness_at"])
            .map_err(csv_err)?;
        for r in &self.canonical.conditions {
            for (name, v) in &r.constants {
                let wit = r.witnesses.iter().find(|w| &w.constant == name);
                let at = wit
                    .map(|w| w.at.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default();
                w.write_record([
                    r.condition.as_str(),
                    r.verdict.as_str(),
                    name,
                    &v.to_string(),
                    wit.map_or("", |w| if w.relation == harnacklab_core::report::Relation::Le { "le" } else { "ge" }),
                    &wit.map(|w| w.value.to_string()).unwrap_or_default(),
                    &at,
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let c = &self.canonical;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# harnacklab report\n\n{} points, {}, window [{}, {}], seed {}\n",
            c.space.points, c.space.family, c.space.window[0], c.space.window[1], c.config.seed
        );
        render_matrix(&mut s, &c.matrix);
        if !c.conditions.is_empty() {
            s.push_str("\n| Condition | Verdict | Constants |\n|---|---|---|\n");
            for r in &c.conditions {
                let main: Vec<String> = r
                    .constants
                    .iter()
                    .filter(|(k, _)| !k.contains('='))
                    .map(|(k, v)| format!("{k} = {v:.4}"))
                    .collect();
                let _ = writeln!(s, "| {} | {} | {} |", r.condition, r.verdict.as_str(), main.join(", "));
            }
        }
        if let Some(rf) = &c.refinement {
            match &rf.space {
                Some(sp) => {
                    let _ =
                        writeln!(s, "\nRefinement at {} points: {} unstable constants", sp.points, rf.unstable.len());
                    for d in &rf.unstable {
                        let _ = writeln!(s, "- {} {}: {} -> {}", d.condition, d.constant, d.coarse, d.fine);
                    }
                }
                None => s.push_str("\nRefinement not applicable to this space family\n"),
            }
        }
        s
    }

    pub fn write_all(&self, dir: &Path, csv: bool, markdown: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        if csv {
            self.write_csv(std::fs::File::create(dir.join("report.csv"))?)?;
        }
        if markdown {
            std::fs::write(dir.join("matrix.md"), self.to_markdown())?;
        }
        Ok(())
    }
}

fn group_line(s: &mut String, g: &GroupRow) {
    let failing = if g.failing.is_empty() { "-".to_string() } else { g.failing.join(", ") };
    let _ = writeln!(s, "| {} | {} | {} |", g.group, g.verdict.as_str(), failing);
}

pub fn render_matrix(s: &mut String, m: &EquivalenceMatrix) {
    if m.groups.is_empty() && m.extra.is_empty() && m.corollary.is_none() {
        s.push_str("No equivalence group was fully evaluated.\n");
        return;
    }
    s.push_str("| Group | Verdict | Failing |\n|---|---|---|\n");
    for g in &m.groups {
        group_line(s, g);
    }
    for g in &m.extra {
        group_line(s, g);
    }
    if let Some(c) = &m.corollary {
        let hk = if c.hk_failing.is_empty() {
            c.hk.as_str().to_string()
        } else {
            format!("{} ({})", c.hk.as_str(), c.hk_failing.join(", "))
        };
        s.push_str("\n| HK | PHI | J_ge | Consistent |\n|---|---|---|---|\n");
        let _ = writeln!(
            s,
            "| {hk} | {} | {} | {} |",
            c.phi.as_str(),
            c.j_ge.as_str(),
            if c.consistent { "yes" } else { "no" }
        );
    }
    let _ = writeln!(s, "\nMatrix consistent: {}", if m.consistent { "yes" } else { "no" });
    for d in &m.disagreements {
        let _ = writeln!(s, "- {d}");
    }
}

/// Whether every group row passes.
pub fn all_pass(m: &EquivalenceMatrix) -> bool {
    m.groups.iter().all(|g| g.verdict == Verdict::Pass)
}
