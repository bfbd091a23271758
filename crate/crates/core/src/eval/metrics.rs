use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, CameraModel, Point3};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(gt index, pred index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Greedy matching on ascending 3D root distance (ties by gt then pred index); pairs
/// farther apart than `max_dist` are never formed.
pub fn match_people(gt_roots: &[Point3], pred_roots: &[Point3], max_dist: f64) -> Result<MatchResult> {
    if !(max_dist > 0.0) {
        return Err(Error::InvalidArgument(format!("match distance {max_dist} must be positive")));
    }
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (g, &gr) in gt_roots.iter().enumerate() {
        for (p, &pr) in pred_roots.iter().enumerate() {
            let d = geometry::distance(gr, pr);
            if d <= max_dist {
                cand.push((d, g, p));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = vec![false; gt_roots.len()];
    let mut pred_used = vec![false; pred_roots.len()];
    let mut pairs = Vec::new();
    for (_, g, p) in cand {
        if !gt_used[g] && !pred_used[p] {
            gt_used[g] = true;
            pred_used[p] = true;
            pairs.push((g, p));
        }
    }
    pairs.sort();
    Ok(MatchResult {
        pairs,
        unmatched_gt: (0..gt_roots.len()).filter(|&g| !gt_used[g]).collect(),
        unmatched_pred: (0..pred_roots.len()).filter(|&p| !pred_used[p]).collect(),
    })
}

/// Per matched pair: Euclidean root error and absolute camera-depth error, mm.
pub fn root_errors(m: &MatchResult, gt_roots: &[Point3], pred_roots: &[Point3], cam: &CameraModel) -> Vec<(f64, f64)> {
    m.pairs
        .iter()
        .map(|&(g, p)| {
            let e = geometry::distance(gt_roots[g], pred_roots[p]);
            let dz = cam.to_camera(pred_roots[p])[2] - cam.to_camera(gt_roots[g])[2];
            (e, dz.abs())
        })
        .collect()
}

/// Mean root error and mean camera-depth error over matched pairs; `None` without matches.
pub fn mrpe(m: &MatchResult, gt_roots: &[Point3], pred_roots: &[Point3], cam: &CameraModel) -> Option<(f64, f64)> {
    let errs = root_errors(m, gt_roots, pred_roots, cam);
    if errs.is_empty() {
        return None;
    }
    let n = errs.len() as f64;
    Some((
        errs.iter().map(|e| e.0).sum::<f64>() / n,
        errs.iter().map(|e| e.1).sum::<f64>() / n,
    ))
}

fn joint_errors(gt: &[Point3], pred: &[Point3], align: Option<usize>) -> Vec<f64> {
    let (og, op) = match align {
        Some(r) => (gt[r], pred[r]),
        None => ([0.0; 3], [0.0; 3]),
    };
    gt.iter()
        .zip(pred)
        .map(|(&g, &p)| geometry::distance(geometry::sub(g, og), geometry::sub(p, op)))
        .collect()
}

/// Sum of joint errors and joint count over matched pairs; root-centered when
/// `align_root` is given.
pub fn joint_error_sum(m: &MatchResult, gt: &[Vec<Point3>], pred: &[Vec<Point3>], align_root: Option<usize>) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for &(g, p) in &m.pairs {
        let e = joint_errors(&gt[g], &pred[p], align_root);
        n += e.len();
        sum += e.iter().sum::<f64>();
    }
    (sum, n)
}

/// Mean per-joint position error over matched people, mm.
pub fn mpjpe(m: &MatchResult, gt: &[Vec<Point3>], pred: &[Vec<Point3>], align_root: Option<usize>) -> Option<f64> {
    let (sum, n) = joint_error_sum(m, gt, pred, align_root);
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    #[default]
    Matched,
    All,
}

/// Hit and total counts behind a PCK percentage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PckCounts {
    pub abs_hits: usize,
    pub abs_total: usize,
    pub root_hits: usize,
    pub root_total: usize,
}

impl PckCounts {
    pub fn add(&mut self, o: &PckCounts) {
        self.abs_hits += o.abs_hits;
        self.abs_total += o.abs_total;
        self.root_hits += o.root_hits;
        self.root_total += o.root_total;
    }

    pub fn percentages(&self) -> (Option<f64>, Option<f64>) {
        let pct = |h: usize, t: usize| (t > 0).then(|| 100.0 * h as f64 / t as f64);
        (pct(self.abs_hits, self.abs_total), pct(self.root_hits, self.root_total))
    }
}

/// Joints within `thresh_abs` in absolute coordinates over the chosen population
/// (unmatched ground truth counts every joint as wrong) and matched roots within
/// `thresh_root`.
pub fn pck_counts(
    m: &MatchResult,
    gt: &[Vec<Point3>],
    pred: &[Vec<Point3>],
    root: usize,
    thresh_abs: f64,
    thresh_root: f64,
    population: Population,
) -> Result<PckCounts> {
    if !(thresh_abs > 0.0 && thresh_root > 0.0) {
        return Err(Error::InvalidArgument("pck thresholds must be positive".into()));
    }
    let mut c = PckCounts::default();
    for &(g, p) in &m.pairs {
        let e = joint_errors(&gt[g], &pred[p], None);
        c.abs_total += e.len();
        c.abs_hits += e.iter().filter(|&&x| x <= thresh_abs).count();
        c.root_total += 1;
        if geometry::distance(gt[g][root], pred[p][root]) <= thresh_root {
            c.root_hits += 1;
        }
    }
    if population == Population::All {
        c.abs_total += m.unmatched_gt.iter().map(|&g| gt[g].len()).sum::<usize>();
    }
    Ok(c)
}

/// `(pck_abs %, pck_root %)`; `None` for an empty population.
pub fn pck(
    m: &MatchResult,
    gt: &[Vec<Point3>],
    pred: &[Vec<Point3>],
    root: usize,
    thresh_abs: f64,
    thresh_root: f64,
    population: Population,
) -> Result<(Option<f64>, Option<f64>)> {
    Ok(pck_counts(m, gt, pred, root, thresh_abs, thresh_root, population)?.percentages())
}
