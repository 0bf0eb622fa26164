//! The standard trend grid and its statistical checks.
//!
//! Runs of different cells with the same run index share their random
//! streams (provider picks, requester samples), so cell comparisons use
//! paired per-run differences.

use std::collections::BTreeMap;
use std::fmt;

use crate::classifier::ClassifierKind;
use crate::sim::experiment::{CellParams, ExperimentOutput, ExperimentSpec, Sweep, WeightingMode};
use crate::sim::world::WorldConfig;

/// One-sided 95% normal quantile.
pub const Z_ONE_SIDED_95: f64 = 1.644_853_626_951_472_2;

/// Noise levels of the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrendLevels {
    /// p2 of the n, p1 and classifier sweeps.
    pub p2: f64,
    /// p2 of the k sweep.
    pub k_p2: f64,
    /// p2 of the noisy providers in the weighting sweep.
    pub noisy_p2: f64,
    /// Decoys in the p1 sweep's upper arm and in the k sweep.
    pub p1_high: usize,
}

impl Default for TrendLevels {
    fn default() -> Self {
        Self {
            p2: 0.1,
            k_p2: 0.2,
            noisy_p2: 1.0,
            p1_high: 500,
        }
    }
}

pub const N_GRID: [usize; 4] = [1, 3, 5, 7];
pub const P2_GRID: [f64; 5] = [0.0, 0.1, 0.2, 0.4, 0.6];
pub const K_GRID: [usize; 5] = [5, 10, 20, 30, 50];
/// Inclusive band the best k should fall in.
pub const K_BAND: (usize, usize) = (15, 35);
pub const NOISY_GRID: [usize; 4] = [2, 3, 4, 5];
/// Allowed NFM deficit against MLR.
pub const MLR_MARGIN: f64 = 0.02;

/// The trend grid over `world`.
pub fn trend_spec(seed: u64, world: WorldConfig, levels: TrendLevels) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(seed, world);
    spec.base = CellParams {
        n: 3,
        p2: levels.p2,
        ..CellParams::default()
    };
    spec.sweeps = vec![
        Sweep {
            name: "n".into(),
            n: Some(N_GRID.to_vec()),
            ..Sweep::default()
        },
        Sweep {
            name: "p2".into(),
            p2: Some(P2_GRID.to_vec()),
            ..Sweep::default()
        },
        Sweep {
            name: "p1".into(),
            n: Some(vec![1, 7]),
            p1: Some(vec![0, levels.p1_high]),
            ..Sweep::default()
        },
        Sweep {
            name: "k".into(),
            n: Some(vec![7]),
            k: Some(K_GRID.to_vec()),
            p1: Some(vec![levels.p1_high]),
            p2: Some(vec![levels.k_p2]),
            ..Sweep::default()
        },
        Sweep {
            name: "weighting".into(),
            n: Some(vec![7]),
            p2: Some(vec![levels.noisy_p2]),
            n_noisy: Some(NOISY_GRID.to_vec()),
            weighting: Some(vec![WeightingMode::Uniform, WeightingMode::Oracle]),
            ..Sweep::default()
        },
        Sweep {
            name: "classifier".into(),
            n: Some(N_GRID.to_vec()),
            classifier: Some(vec![ClassifierKind::Nfm, ClassifierKind::Mlr]),
            ..Sweep::default()
        },
    ];
    spec
}

/// Outcome of one trend check.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{mark} {}: {}", self.name, self.detail)
    }
}

/// Mean and standard error of paired differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Paired {
    pub mean: f64,
    pub se: f64,
}

impl Paired {
    pub fn of(a: &[f64], b: &[f64]) -> Self {
        assert_eq!(a.len(), b.len(), "paired samples differ in length");
        let n = a.len() as f64;
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / n;
        let var = if d.len() > 1 {
            d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// `a > b` at one-sided 95%.
    pub fn significantly_positive(&self) -> bool {
        self.mean > Z_ONE_SIDED_95 * self.se
    }

    /// `a < b` at one-sided 95%.
    pub fn significantly_negative(&self) -> bool {
        self.mean < -Z_ONE_SIDED_95 * self.se
    }
}

impl fmt::Display for Paired {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+.3}±{:.3}", self.mean, Z_ONE_SIDED_95 * self.se)
    }
}

/// Per-run accuracies of each cell, ordered by run index.
struct Table<'a> {
    out: &'a ExperimentOutput,
    room: BTreeMap<&'a str, Vec<f64>>,
    building: BTreeMap<&'a str, Vec<f64>>,
}

impl<'a> Table<'a> {
    fn new(out: &'a ExperimentOutput) -> Self {
        let mut rows: Vec<_> = out.results.iter().collect();
        rows.sort_by(|a, b| a.cell_id.cmp(&b.cell_id).then(a.run.cmp(&b.run)));
        let mut room: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut building: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in rows {
            room.entry(&r.cell_id).or_default().push(r.room_hit);
            building.entry(&r.cell_id).or_default().push(r.building_hit);
        }
        Self { out, room, building }
    }

    fn find(&self, pred: impl Fn(&CellParams) -> bool) -> Option<&'a str> {
        self.out
            .cells
            .iter()
            .find(|c| c.skipped.is_none() && pred(&c.cell.params))
            .map(|c| c.cell.id.as_str())
    }

    fn room(&self, pred: impl Fn(&CellParams) -> bool) -> Option<&[f64]> {
        self.find(pred).and_then(|id| self.room.get(id)).map(Vec::as_slice)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn half_width(v: &[f64]) -> f64 {
    crate::sim::report::Estimate::of(v).half_width
}

fn missing(name: &'static str) -> Verdict {
    Verdict {
        name,
        passed: false,
        detail: "cells missing from the output".into(),
    }
}

/// Evaluates every trend of the grid built by [`trend_spec`].
pub fn evaluate_trends(out: &ExperimentOutput, levels: TrendLevels) -> Vec<Verdict> {
    let t = Table::new(out);
    let base = |p: &CellParams| {
        p.k == 25 && p.weighting == WeightingMode::Uniform && p.n_noisy == 0
    };
    vec![
        n_trend(&t, levels, &base),
        p2_trend(&t, &base),
        criss_cross(&t, levels, &base),
        best_k(&t, levels),
        weighting(&t, levels),
        classifier(&t, levels, &base),
        building_dominates(&t),
    ]
}

fn n_trend(t: &Table, levels: TrendLevels, base: &impl Fn(&CellParams) -> bool) -> Verdict {
    const NAME: &str = "accuracy non-decreasing in n, half-widths shrinking";
    let series: Option<Vec<&[f64]>> = N_GRID
        .iter()
        .map(|&n| {
            t.room(|p| {
                base(p) && p.n == n && p.p1 == 0 && p.p2 == levels.p2 && p.classifier == ClassifierKind::Nfm
            })
        })
        .collect();
    let Some(series) = series else { return missing(NAME) };
    let steps: Vec<Paired> = series.windows(2).map(|w| Paired::of(w[1], w[0])).collect();
    let overall = Paired::of(series[series.len() - 1], series[0]);
    let hws: Vec<f64> = series.iter().map(|s| half_width(s)).collect();
    let passed = overall.significantly_positive()
        && steps.iter().all(|s| !s.significantly_negative())
        && hws[hws.len() - 1] < hws[0];
    Verdict {
        name: NAME,
        passed,
        detail: format!(
            "means {:?}, steps [{}], n=7 vs n=1 {overall}, half-widths {:?}",
            series.iter().map(|s| round3(mean(s))).collect::<Vec<_>>(),
            steps.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", "),
            hws.iter().map(|h| round3(*h)).collect::<Vec<_>>()
        ),
    }
}

fn p2_trend(t: &Table, base: &impl Fn(&CellParams) -> bool) -> Verdict {
    const NAME: &str = "accuracy decreasing in p2";
    let series: Option<Vec<&[f64]>> = P2_GRID
        .iter()
        .map(|&p2| t.room(|p| base(p) && p.n == 3 && p.p1 == 0 && p.p2 == p2 && p.classifier == ClassifierKind::Nfm))
        .collect();
    let Some(series) = series else { return missing(NAME) };
    let steps: Vec<Paired> = series.windows(2).map(|w| Paired::of(w[0], w[1])).collect();
    let overall = Paired::of(series[0], series[series.len() - 1]);
    let passed = overall.significantly_positive() && steps.iter().all(|s| !s.significantly_negative());
    Verdict {
        name: NAME,
        passed,
        detail: format!(
            "means {:?}, drops [{}]",
            series.iter().map(|s| round3(mean(s))).collect::<Vec<_>>(),
            steps.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn criss_cross(t: &Table, levels: TrendLevels, base: &impl Fn(&CellParams) -> bool) -> Verdict {
    const NAME: &str = "p1 criss-cross between n = 1 and n = 7";
    let cell = |n: usize, p1: usize| {
        t.room(|p| base(p) && p.n == n && p.p1 == p1 && p.p2 == levels.p2 && p.classifier == ClassifierKind::Nfm)
    };
    let (Some(a0), Some(a1), Some(b0), Some(b1)) = (cell(1, 0), cell(1, levels.p1_high), cell(7, 0), cell(7, levels.p1_high))
    else {
        return missing(NAME);
    };
    let one = Paired::of(a0, a1);
    let seven = Paired::of(b1, b0);
    Verdict {
        name: NAME,
        passed: one.significantly_positive() && seven.significantly_positive(),
        detail: format!(
            "n=1: p1=0 minus p1={} {one}; n=7: p1={} minus p1=0 {seven}",
            levels.p1_high, levels.p1_high
        ),
    }
}

fn best_k(t: &Table, levels: TrendLevels) -> Verdict {
    const NAME: &str = "best k within the band";
    let series: Option<Vec<&[f64]>> = K_GRID
        .iter()
        .map(|&k| {
            t.room(|p| {
                p.n == 7
                    && p.k == k
                    && p.p1 == levels.p1_high
                    && p.p2 == levels.k_p2
                    && p.weighting == WeightingMode::Uniform
                    && p.n_noisy == 0
                    && p.classifier == ClassifierKind::Nfm
            })
        })
        .collect();
    let Some(series) = series else { return missing(NAME) };
    let means: Vec<f64> = series.iter().map(|s| mean(s)).collect();
    let best = (0..means.len()).fold(0, |b, i| if means[i] > means[b] { i } else { b });
    let in_band: Vec<usize> = (0..K_GRID.len())
        .filter(|&i| (K_BAND.0..=K_BAND.1).contains(&K_GRID[i]))
        .collect();
    let distance = in_band.iter().map(|&i| i.abs_diff(best)).min().unwrap_or(usize::MAX);
    Verdict {
        name: NAME,
        passed: distance <= 1,
        detail: format!(
            "means {:?} over k {:?}, best k = {} ({} grid steps from the band)",
            means.iter().map(|m| round3(*m)).collect::<Vec<_>>(),
            K_GRID,
            K_GRID[best],
            distance
        ),
    }
}

fn weighting(t: &Table, levels: TrendLevels) -> Verdict {
    const NAME: &str = "oracle weighting at least as good as uniform";
    let cell = |nn: usize, w: WeightingMode| {
        t.room(|p| p.n == 7 && p.n_noisy == nn && p.weighting == w && p.p2 == levels.noisy_p2 && p.k == 25)
    };
    let mut diffs = Vec::new();
    for nn in NOISY_GRID {
        let (Some(o), Some(u)) = (cell(nn, WeightingMode::Oracle), cell(nn, WeightingMode::Uniform)) else {
            return missing(NAME);
        };
        diffs.push((nn, Paired::of(o, u)));
    }
    let pooled = diffs.iter().map(|(_, d)| d.mean).sum::<f64>() / diffs.len() as f64;
    Verdict {
        name: NAME,
        passed: pooled >= 0.0 && diffs.iter().all(|(_, d)| !d.significantly_negative()),
        detail: format!(
            "oracle minus uniform by n_noisy: {}; pooled {pooled:+.3}",
            diffs.iter().map(|(nn, d)| format!("{nn}: {d}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn classifier(t: &Table, levels: TrendLevels, base: &impl Fn(&CellParams) -> bool) -> Verdict {
    const NAME: &str = "NFM at least MLR minus 2 points";
    let mut gaps = Vec::new();
    for n in N_GRID {
        let cell = |c: ClassifierKind| t.room(|p| base(p) && p.n == n && p.p1 == 0 && p.p2 == levels.p2 && p.classifier == c);
        let (Some(nfm), Some(mlr)) = (cell(ClassifierKind::Nfm), cell(ClassifierKind::Mlr)) else {
            return missing(NAME);
        };
        gaps.push((n, mean(nfm) - mean(mlr)));
    }
    Verdict {
        name: NAME,
        passed: gaps.iter().all(|(_, g)| *g >= -MLR_MARGIN),
        detail: format!(
            "NFM minus MLR by n: {}",
            gaps.iter().map(|(n, g)| format!("{n}: {g:+.3}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn building_dominates(t: &Table) -> Verdict {
    const NAME: &str = "building-level at least room-level in every cell";
    let bad: Vec<&str> = t
        .room
        .iter()
        .filter(|(id, room)| {
            let building = &t.building[*id];
            room.iter().zip(building.iter()).any(|(r, b)| r > b)
        })
        .map(|(id, _)| *id)
        .collect();
    Verdict {
        name: NAME,
        passed: bad.is_empty() && !t.room.is_empty(),
        detail: if bad.is_empty() {
            format!("{} cells checked run by run", t.room.len())
        } else {
            format!("violated in {bad:?}")
        },
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_statistics() {
        let p = Paired::of(&[0.5, 0.6, 0.7], &[0.4, 0.4, 0.4]);
        assert!((p.mean - 0.2).abs() < 1e-12);
        assert!((p.se - (0.01f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(p.significantly_positive());
        assert!(!p.significantly_negative());
        let flat = Paired::of(&[0.5, 0.4], &[0.4, 0.5]);
        assert!(!flat.significantly_positive() && !flat.significantly_negative());
    }

    #[test]
    fn grid_has_every_sweep() {
        let spec = trend_spec(1, WorldConfig::with_seed(1), TrendLevels::default());
        let cells = spec.cells();
        // n: 4, p2: 5 minus the shared base, p1: 4 minus the shared n=1/n=7 cells,
        // k: 5, weighting: 8, classifier: 8 minus the 4 NFM cells of the n sweep.
        assert_eq!(cells.len(), 4 + 4 + 2 + 5 + 8 + 4);
        assert!(cells.iter().any(|c| c.params.classifier == ClassifierKind::Mlr && c.params.n == 7));
    }
}
