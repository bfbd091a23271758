//! Generalization protocols: projection ablation, cross-view matrix, random-view training
//! and cross-pose transfer. Each cell trains a fresh model and evaluates it on one or more
//! held-out sets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::{Projection, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{report_rows, MetricsReport, ReportRow};
use crate::model::Model;
use crate::synth::{generate_sample, AgrSample, CameraRanges, SynthConfig};
use crate::train::{evaluate, train, TrainOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Projection,
    CrossView,
    RandomView,
    CrossPose,
}

impl ProtocolName {
    pub const ALL: [ProtocolName; 4] = [
        ProtocolName::Projection,
        ProtocolName::CrossView,
        ProtocolName::RandomView,
        ProtocolName::CrossPose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolName::Projection => "projection",
            ProtocolName::CrossView => "cross_view",
            ProtocolName::RandomView => "random_view",
            ProtocolName::CrossPose => "cross_pose",
        }
    }
}

impl fmt::Display for ProtocolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config {
                path: "protocol".into(),
                msg: format!("unknown protocol {s:?} (expected projection, cross_view, random_view or cross_pose)"),
            })
    }
}

/// One fixed camera of the cross-view study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSpec {
    pub f: f64,
    pub theta_deg: f64,
    pub height: f64,
    pub yaw_deg: f64,
    pub distance: f64,
}

impl ViewSpec {
    pub fn ranges(&self, target: [f64; 2]) -> CameraRanges {
        CameraRanges {
            target,
            ..CameraRanges::fixed(self.f, self.theta_deg, self.height, self.yaw_deg, self.distance)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub train_count: usize,
    pub test_count: usize,
    pub epochs: usize,
    pub use_pen: bool,
    pub views: Vec<ViewSpec>,
    /// Camera distribution of the random-view cell.
    pub random_camera: CameraRanges,
    /// Joint angle jitter of pose families A and B.
    pub pose_jitter: [f64; 2],
    /// Evaluate single-view models on their own camera as well.
    pub include_diagonal: bool,
    /// Keep as many root candidates as there are people, so root errors cover everyone.
    pub oracle_count: bool,
    pub match_max_dist: f64,
    /// Cells trained concurrently.
    pub threads: usize,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            train_count: 200,
            test_count: 50,
            epochs: 10,
            use_pen: false,
            views: vec![
                ViewSpec {
                    f: 60.0,
                    theta_deg: 2.0,
                    height: 1200.0,
                    yaw_deg: 0.0,
                    distance: 4500.0,
                },
                ViewSpec {
                    f: 80.0,
                    theta_deg: 12.0,
                    height: 2200.0,
                    yaw_deg: 40.0,
                    distance: 5500.0,
                },
                ViewSpec {
                    f: 100.0,
                    theta_deg: 22.0,
                    height: 3000.0,
                    yaw_deg: -60.0,
                    distance: 6000.0,
                },
            ],
            random_camera: CameraRanges {
                f: [60.0, 100.0],
                theta_deg: [2.0, 22.0],
                height: [1200.0, 3000.0],
                yaw_deg: [-60.0, 40.0],
                distance: [4500.0, 6000.0],
                target: [0.0, 0.0],
            },
            pose_jitter: [0.15, 0.6],
            include_diagonal: true,
            oracle_count: true,
            match_max_dist: 5000.0,
            threads: 1,
        }
    }
}

impl AblateConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: &str| {
            Err(Error::Config {
                path: format!("ablate.{path}"),
                msg: msg.into(),
            })
        };
        if self.train_count == 0 || self.test_count == 0 {
            return bad("train_count", "train and test counts must be positive");
        }
        if self.views.is_empty() {
            return bad("views", "need at least one view");
        }
        for (i, v) in self.views.iter().enumerate() {
            v.ranges([0.0, 0.0]).validate().map_err(|e| Error::Config {
                path: format!("ablate.views[{i}]"),
                msg: e.to_string(),
            })?;
        }
        self.random_camera.validate().map_err(|e| Error::Config {
            path: "ablate.random_camera".into(),
            msg: e.to_string(),
        })?;
        if self.pose_jitter.iter().any(|j| !(*j >= 0.0)) {
            return bad("pose_jitter", "jitter must be >= 0");
        }
        if !(self.match_max_dist > 0.0) {
            return bad("match_max_dist", "must be positive");
        }
        if self.threads == 0 {
            return bad("threads", "must be at least 1");
        }
        Ok(())
    }
}

/// A training configuration and the held-out sets it is scored on.
struct Cell {
    id: String,
    train_tag: String,
    run: RunConfig,
    tests: Vec<(String, SynthConfig)>,
}

fn dataset(cfg: &SynthConfig) -> Result<Vec<AgrSample<f32>>> {
    let skel = cfg.skeleton();
    (0..cfg.count as u64).map(|i| generate_sample(cfg, &skel, i)).collect()
}

fn cell_run(base: &RunConfig, a: &AblateConfig, synth: SynthConfig) -> RunConfig {
    let mut run = base.clone();
    run.synth = SynthConfig {
        count: a.train_count,
        ..synth
    };
    run.train.epochs = a.epochs;
    run.model.use_pen = a.use_pen;
    run.eval.test_count = a.test_count;
    run.eval.oracle_count = a.oracle_count;
    run.eval.metrics.match_max_dist = a.match_max_dist;
    run
}

fn test_set(run: &RunConfig, synth: SynthConfig) -> SynthConfig {
    SynthConfig {
        count: run.eval.test_count,
        seed: run.eval.test_seed,
        ..synth
    }
}

fn cells(name: ProtocolName, base: &RunConfig) -> Vec<Cell> {
    let a = &base.ablate;
    let target = base.synth.camera.target;
    let view_synth = |v: &ViewSpec| SynthConfig {
        camera: v.ranges(target),
        ..base.synth.clone()
    };
    match name {
        ProtocolName::Projection => [("gated", Projection::Gated), ("naive", Projection::Naive)]
            .into_iter()
            .map(|(id, p)| {
                let mut run = cell_run(base, a, base.synth.clone());
                run.model.projection = p;
                let tests = vec![("default".to_string(), test_set(&run, base.synth.clone()))];
                Cell {
                    id: id.into(),
                    train_tag: id.into(),
                    run,
                    tests,
                }
            })
            .collect(),
        ProtocolName::CrossView => a
            .views
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let run = cell_run(base, a, view_synth(v));
                let tests = a
                    .views
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| a.include_diagonal || i != j)
                    .map(|(j, w)| (format!("cam{j}"), test_set(&run, view_synth(w))))
                    .collect();
                Cell {
                    id: format!("train_cam{i}"),
                    train_tag: format!("cam{i}"),
                    run,
                    tests,
                }
            })
            .collect(),
        ProtocolName::RandomView => {
            let synth = SynthConfig {
                camera: a.random_camera,
                ..base.synth.clone()
            };
            let run = cell_run(base, a, synth);
            let tests = a
                .views
                .iter()
                .enumerate()
                .map(|(j, w)| (format!("cam{j}"), test_set(&run, view_synth(w))))
                .collect();
            vec![Cell {
                id: "train_random".into(),
                train_tag: "random".into(),
                run,
                tests,
            }]
        }
        ProtocolName::CrossPose => {
            let family = |j: f64| SynthConfig {
                angle_jitter: j,
                ..base.synth.clone()
            };
            let tags = ["poseA", "poseB"];
            (0..2)
                .map(|i| {
                    let run = cell_run(base, a, family(a.pose_jitter[i]));
                    let tests = (0..2)
                        .map(|j| (tags[j].to_string(), test_set(&run, family(a.pose_jitter[j]))))
                        .collect();
                    Cell {
                        id: format!("train_{}", tags[i]),
                        train_tag: tags[i].into(),
                        run,
                        tests,
                    }
                })
                .collect()
        }
    }
}

/// Evaluation of one trained cell on one held-out set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell_id: String,
    pub train_tag: String,
    pub test_tag: String,
    pub report: MetricsReport,
}

fn run_cell(cell: &Cell, out: Option<&Path>) -> Result<Vec<CellReport>> {
    let run = &cell.run;
    run.validate()?;
    let data = dataset(&run.synth)?;
    let mut model: Model<f32> = Model::init(run)?;
    let target = out.map(|d| TrainOutput::under(&d.join(&cell.id)));
    log::info!("cell {}: training on {} scenes", cell.id, data.len());
    train(run, &mut model, &data, 0, target.as_ref(), &[])?;
    let mut reports = Vec::new();
    for (tag, synth) in &cell.tests {
        let test = dataset(synth)?;
        let report = evaluate(run, &model, &test)?;
        log::info!("cell {} on {tag}: mrpe_z {:?}", cell.id, report.mrpe_z);
        reports.push(CellReport {
            cell_id: cell.id.clone(),
            train_tag: cell.train_tag.clone(),
            test_tag: tag.clone(),
            report,
        });
    }
    Ok(reports)
}

/// Trains and evaluates every cell of a protocol, `base.ablate.threads` cells at a time.
/// Results are ordered by cell, independent of scheduling. When `out` is given, each cell's
/// checkpoints and loss log go under `out/<cell_id>/`.
pub fn run_protocol(name: ProtocolName, base: &RunConfig, out: Option<&Path>) -> Result<Vec<CellReport>> {
    base.validate()?;
    let cells = cells(name, base);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<Vec<CellReport>>>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let workers = base.ablate.threads.min(cells.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let r = run_cell(&cells[i], out);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    let mut all = Vec::new();
    for slot in slots {
        let r = slot.into_inner().expect("result slot").expect("every cell ran");
        all.extend(r?);
    }
    Ok(all)
}

pub fn protocol_rows(name: ProtocolName, reports: &[CellReport]) -> Vec<ReportRow> {
    reports
        .iter()
        .flat_map(|c| report_rows(name.as_str(), &c.cell_id, &c.train_tag, &c.test_tag, &c.report))
        .collect()
}

/// Directory for one protocol's outputs under an ablation root.
pub fn protocol_dir(root: &Path, name: ProtocolName) -> PathBuf {
    root.join(name.as_str())
}
