//! Metric reports (TOML) and ROC plots (SVG).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Aggregate, RocPoint};

/// One replicate of an experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub seed: u64,
    pub auc: f64,
    /// AUC with the score polarity flipped (lower loss = anomalous).
    pub auc_flipped: f64,
    pub eer: f64,
    pub samples: usize,
    pub admitted: usize,
    pub errors: usize,
    /// Stream index where the mixer first fell back to the other pool.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossover: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    /// Pooled AUC of the first (or only) run.
    pub auc: f64,
    pub eer: f64,
    pub samples: usize,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<Aggregate>,
    #[serde(default)]
    pub replicates: Vec<ReplicateRow>,
    #[serde(default)]
    pub roc: Vec<RocPoint>,
}

impl MetricReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Input(format!("cannot encode report: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Input(format!("cannot parse report: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = super::create(path)?;
        w.write_all(self.to_toml()?.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// One named ROC polyline of `(fpr, tpr)` points.
#[derive(Clone, Debug, PartialEq)]
pub struct RocSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl RocSeries {
    pub fn from_curve(label: impl Into<String>, curve: &[RocPoint]) -> Self {
        RocSeries {
            label: label.into(),
            points: curve.iter().map(|p| (p.fpr, p.tpr)).collect(),
        }
    }
}

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn px(fpr: f64, tpr: f64) -> (f64, f64) {
    (MARGIN + fpr * SIZE, MARGIN + (1.0 - tpr) * SIZE)
}

pub fn roc_svg(series: &[RocSeries]) -> Result<String> {
    for s in series {
        if let Some(&(x, y)) = s
            .points
            .iter()
            .find(|(x, y)| !(0.0..=1.0).contains(x) || !(0.0..=1.0).contains(y))
        {
            return Err(Error::Input(format!(
                "ROC point ({x}, {y}) of series {:?} lies outside the unit square",
                s.label
            )));
        }
    }
    let total = SIZE + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{total}" height="{total}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        let (x, _) = px(v, 0.0);
        let (_, y) = px(0.0, v);
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" font-size="10" text-anchor="middle">{v:.1}</text>"#,
            MARGIN + SIZE + 15.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{v:.1}</text>"#,
            MARGIN - 5.0,
            y + 3.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">false positive rate</text>"#,
        MARGIN + SIZE / 2.0,
        total - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{0}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {0})">true positive rate</text>"#,
        MARGIN + SIZE / 2.0
    );
    let (x0, y0) = px(0.0, 0.0);
    let (x1, y1) = px(1.0, 1.0);
    let _ = writeln!(
        svg,
        r#"<line class="reference" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="gray" stroke-dasharray="4 4"/>"#
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(f, t)| {
                let (x, y) = px(f, t);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="roc" data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&s.label),
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            MARGIN + SIZE - 150.0,
            MARGIN + SIZE - 15.0 - 14.0 * i as f64,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_roc_svg(series: &[RocSeries], path: &Path) -> Result<()> {
    let svg = roc_svg(series)?;
    let mut w = super::create(path)?;
    w.write_all(svg.as_bytes())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_range_point_is_rejected() {
        let s = RocSeries {
            label: "x".into(),
            points: vec![(0.0, 0.0), (1.2, 1.0)],
        };
        assert!(matches!(roc_svg(&[s]), Err(Error::Input(_))));
    }

    #[test]
    fn report_round_trips_through_toml() {
        let r = MetricReport {
            name: "demo".into(),
            auc: 0.75,
            eer: 0.5,
            samples: 4,
            extra: BTreeMap::from([("lambda".to_string(), 0.05)]),
            aggregate: Some(Aggregate { mean: 0.75, sd: 0.0, n: 1 }),
            replicates: vec![ReplicateRow {
                seed: 3,
                auc: 0.75,
                crossover: Some(2),
                ..Default::default()
            }],
            roc: vec![
                RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 },
                RocPoint { threshold: f64::NEG_INFINITY, fpr: 1.0, tpr: 1.0 },
            ],
        };
        let text = r.to_toml().unwrap();
        assert_eq!(MetricReport::from_toml(&text).unwrap(), r);
    }
}
