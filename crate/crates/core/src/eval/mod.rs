//! Matching, metrics, reports and the CSV schema shared with plotting tools.

mod metrics;

pub use metrics::{
    joint_error_sum, match_people, mpjpe, mrpe, pck, pck_counts, root_errors, MatchResult, PckCounts, Population,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Point3};
use crate::synth::{Pose3D, SkeletonSpec};

/// One estimated person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonPrediction {
    pub confidence: f64,
    /// Final root: the decoded root joint when poses are estimated, else the coarse root.
    pub root_xyz_mm: Point3,
    /// Root candidate from the coarse volume.
    pub coarse_root_xyz_mm: Point3,
    /// Full pose when pose estimation ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints_mm: Option<Vec<Point3>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricParams {
    pub match_max_dist: f64,
    pub pck_abs_mm: f64,
    pub pck_root_mm: f64,
    pub population: Population,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            match_max_dist: 500.0,
            pck_abs_mm: 150.0,
            pck_root_mm: 250.0,
            population: Population::Matched,
        }
    }
}

/// Pooled sums over scenes; every mean is over matched pairs unless noted. People are
/// matched on final roots, and coarse roots are scored on the same pairs.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    scenes: usize,
    gt: usize,
    pred: usize,
    matched: usize,
    root_sum: f64,
    root_z_sum: f64,
    coarse_sum: f64,
    coarse_z_sum: f64,
    joint_abs_sum: f64,
    joint_rel_sum: f64,
    joint_count: usize,
    pck: PckCounts,
    baseline_z_sum: f64,
}

impl MetricsAccumulator {
    /// Adds one scene. `baseline_depth` is the constant depth assumed by the reference
    /// baseline that places each person on its true root ray.
    pub fn add_scene(
        &mut self,
        skel: &SkeletonSpec,
        cam: &CameraModel,
        gt: &[Pose3D],
        pred: &[PersonPrediction],
        params: &MetricParams,
        baseline_depth: f64,
    ) -> Result<()> {
        let root = skel.root;
        let gt_roots: Vec<Point3> = gt.iter().map(|p| p.joints[root]).collect();
        let pred_roots: Vec<Point3> = pred.iter().map(|p| p.root_xyz_mm).collect();
        let m = match_people(&gt_roots, &pred_roots, params.match_max_dist)?;
        self.scenes += 1;
        self.gt += gt.len();
        self.pred += pred.len();
        self.matched += m.pairs.len();
        for (e, ez) in root_errors(&m, &gt_roots, &pred_roots, cam) {
            self.root_sum += e;
            self.root_z_sum += ez;
        }
        let coarse: Vec<Point3> = pred.iter().map(|p| p.coarse_root_xyz_mm).collect();
        for (e, ez) in root_errors(&m, &gt_roots, &coarse, cam) {
            self.coarse_sum += e;
            self.coarse_z_sum += ez;
        }
        for &g in &gt_roots {
            self.baseline_z_sum += (cam.to_camera(g)[2] - baseline_depth).abs();
        }
        if let Some(joints) = pred.iter().map(|p| p.joints_mm.clone()).collect::<Option<Vec<_>>>() {
            let gj: Vec<Vec<Point3>> = gt.iter().map(|p| p.joints.clone()).collect();
            let (abs, n) = joint_error_sum(&m, &gj, &joints, None);
            let (rel, _) = joint_error_sum(&m, &gj, &joints, Some(root));
            self.joint_abs_sum += abs;
            self.joint_rel_sum += rel;
            self.joint_count += n;
            let c = pck_counts(&m, &gj, &joints, root, params.pck_abs_mm, params.pck_root_mm, params.population)?;
            self.pck.add(&c);
        }
        Ok(())
    }

    pub fn report(&self) -> MetricsReport {
        let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
        let (pck_abs, pck_root) = self.pck.percentages();
        MetricsReport {
            mrpe: mean(self.root_sum, self.matched),
            mrpe_z: mean(self.root_z_sum, self.matched),
            coarse_mrpe: mean(self.coarse_sum, self.matched),
            coarse_mrpe_z: mean(self.coarse_z_sum, self.matched),
            mpjpe_abs: mean(self.joint_abs_sum, self.joint_count),
            mpjpe_rel: mean(self.joint_rel_sum, self.joint_count),
            pck_abs,
            pck_root,
            baseline_mrpe_z: mean(self.baseline_z_sum, self.gt),
            counts: Counts {
                scenes: self.scenes,
                gt: self.gt,
                pred: self.pred,
                matched: self.matched,
                joints: self.joint_count,
                pck_abs_total: self.pck.abs_total,
                pck_root_total: self.pck.root_total,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub scenes: usize,
    pub gt: usize,
    pub pred: usize,
    pub matched: usize,
    pub joints: usize,
    pub pck_abs_total: usize,
    pub pck_root_total: usize,
}

/// Aggregate metrics in mm and percent; absent values had an empty population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mrpe: Option<f64>,
    pub mrpe_z: Option<f64>,
    pub coarse_mrpe: Option<f64>,
    pub coarse_mrpe_z: Option<f64>,
    pub mpjpe_abs: Option<f64>,
    pub mpjpe_rel: Option<f64>,
    pub pck_abs: Option<f64>,
    pub pck_root: Option<f64>,
    /// Depth error of placing every person at the midpoint of the depth range.
    pub baseline_mrpe_z: Option<f64>,
    pub counts: Counts,
}

impl MetricsReport {
    /// `(metric, value, count)` for every present metric.
    pub fn metric_rows(&self) -> Vec<(&'static str, f64, usize)> {
        let c = &self.counts;
        [
            ("mrpe", self.mrpe, c.matched),
            ("mrpe_z", self.mrpe_z, c.matched),
            ("coarse_mrpe", self.coarse_mrpe, c.matched),
            ("coarse_mrpe_z", self.coarse_mrpe_z, c.matched),
            ("mpjpe_abs", self.mpjpe_abs, c.joints),
            ("mpjpe_rel", self.mpjpe_rel, c.joints),
            ("pck_abs", self.pck_abs, c.pck_abs_total),
            ("pck_root", self.pck_root, c.pck_root_total),
            ("baseline_mrpe_z", self.baseline_mrpe_z, c.gt),
        ]
        .into_iter()
        .filter_map(|(n, v, k)| v.map(|v| (n, v, k)))
        .collect()
    }
}

/// One line of the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub protocol: String,
    pub cell_id: String,
    pub train_tag: String,
    pub test_tag: String,
    pub metric: String,
    pub value: f64,
    pub count: usize,
}

pub fn report_rows(protocol: &str, cell_id: &str, train_tag: &str, test_tag: &str, report: &MetricsReport) -> Vec<ReportRow> {
    report
        .metric_rows()
        .into_iter()
        .map(|(metric, value, count)| ReportRow {
            protocol: protocol.into(),
            cell_id: cell_id.into(),
            train_tag: train_tag.into(),
            test_tag: test_tag.into(),
            metric: metric.into(),
            value,
            count,
        })
        .collect()
}

/// Writes rows with the header `protocol,cell_id,train_tag,test_tag,metric,value,count`.
pub fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record(["protocol", "cell_id", "train_tag", "test_tag", "metric", "value", "count"])
            .map_err(csv_err)?;
    }
    for r in rows {
        if !r.value.is_finite() {
            return Err(Error::Numerical(format!("non-finite {} in cell {}", r.metric, r.cell_id)));
        }
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_sample, SynthConfig};

    fn oracle(gt: &[Pose3D], root: usize) -> Vec<PersonPrediction> {
        gt.iter()
            .map(|p| PersonPrediction {
                confidence: 1.0,
                root_xyz_mm: p.joints[root],
                coarse_root_xyz_mm: p.joints[root],
                joints_mm: Some(p.joints.clone()),
            })
            .collect()
    }

    #[test]
    fn ground_truth_gives_exact_identities() {
        let cfg = SynthConfig::default();
        let skel = cfg.skeleton();
        for pop in [Population::Matched, Population::All] {
            let mut acc = MetricsAccumulator::default();
            let params = MetricParams {
                population: pop,
                ..Default::default()
            };
            for i in 0..5 {
                let s = generate_sample(&cfg, &skel, i).unwrap();
                acc.add_scene(&skel, &s.camera, &s.gt_poses, &oracle(&s.gt_poses, skel.root), &params, 5500.0)
                    .unwrap();
            }
            let r = acc.report();
            assert_eq!((r.mrpe, r.mrpe_z), (Some(0.0), Some(0.0)));
            assert_eq!((r.mpjpe_abs, r.mpjpe_rel), (Some(0.0), Some(0.0)));
            assert_eq!((r.pck_abs, r.pck_root), (Some(100.0), Some(100.0)));
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![ReportRow {
            protocol: "eval".into(),
            cell_id: "0".into(),
            train_tag: "a".into(),
            test_tag: "b".into(),
            metric: "mrpe".into(),
            value: 123.25,
            count: 7,
        }];
        write_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("protocol,cell_id,train_tag,test_tag,metric,value,count\n"));
        assert_eq!(read_csv(&path).unwrap(), rows);
    }
}
