//! Level-wise micro/macro F1 over predicted label paths.
//!
//! Every repository carries one gold path and one predicted path through
//! the hierarchy (level-1 label, level-2 label, …). A class's TP/FP/FN
//! counts come from comparing the two paths at that class's depth; each
//! depth forms a scope, and the "overall" scope pools every depth. Micro F1
//! recomputes precision/recall from the summed counts; macro F1 averages
//! per-class F1 without weighting, counting zero-support classes as 0.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelHierarchy;
use crate::error::{Error, Result};

/// Confusion counts and derived metrics for one class at its depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub level: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Pooled counts and micro/macro metrics for one scope (a depth, or all
/// depths together).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// Number of classes contributing to the macro average.
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub repos: usize,
    /// "level-1", "level-2", …, "overall".
    pub scopes: BTreeMap<String, ScopeMetrics>,
    pub per_class: BTreeMap<String, ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Compares gold and predicted paths level by level. Both maps must cover
/// exactly the same repository ids; paths must be parent-to-child chains
/// starting at a child of the root (shorter-than-tree paths are allowed and
/// simply do not participate at deeper levels).
pub fn f1_report(
    gold: &BTreeMap<String, Vec<String>>,
    predicted: &BTreeMap<String, Vec<String>>,
    hierarchy: &LabelHierarchy,
) -> Result<EvalReport> {
    for id in gold.keys() {
        if !predicted.contains_key(id) {
            return Err(Error::Validation(format!(
                "no prediction for repository {id:?}"
            )));
        }
    }
    for id in predicted.keys() {
        if !gold.contains_key(id) {
            return Err(Error::Validation(format!(
                "prediction for unknown repository {id:?}"
            )));
        }
    }
    for path in gold.values().chain(predicted.values()) {
        for label in path {
            if !hierarchy.contains(label) || label == hierarchy.root() {
                return Err(Error::UnknownLabel(label.clone()));
            }
        }
        hierarchy.validate_path(path)?;
    }

    let max_depth = hierarchy.max_depth();
    let mut counts: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    let mut levels: BTreeMap<String, usize> = BTreeMap::new();
    for leaf_or_internal in hierarchy.internal_nodes().into_iter().chain(hierarchy.leaves()) {
        if leaf_or_internal == hierarchy.root() {
            continue;
        }
        levels.insert(
            leaf_or_internal.clone(),
            hierarchy.level(&leaf_or_internal)?,
        );
        counts.insert(leaf_or_internal, (0, 0, 0));
    }

    for (id, g) in gold {
        let p = &predicted[id];
        for depth in 1..=max_depth {
            match (g.get(depth - 1), p.get(depth - 1)) {
                (Some(gl), Some(pl)) if gl == pl => counts.get_mut(gl).unwrap().0 += 1,
                (Some(gl), Some(pl)) => {
                    counts.get_mut(pl).unwrap().1 += 1;
                    counts.get_mut(gl).unwrap().2 += 1;
                }
                (None, Some(pl)) => counts.get_mut(pl).unwrap().1 += 1,
                (Some(gl), None) => counts.get_mut(gl).unwrap().2 += 1,
                (None, None) => {}
            }
        }
    }

    let per_class: BTreeMap<String, ClassMetrics> = counts
        .iter()
        .map(|(class, &(tp, fp, fn_))| {
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            (
                class.clone(),
                ClassMetrics {
                    level: levels[class],
                    tp,
                    fp,
                    fn_,
                    precision,
                    recall,
                    f1: f1(precision, recall),
                },
            )
        })
        .collect();

    let scope_over = |wanted: &dyn Fn(usize) -> bool| -> ScopeMetrics {
        let members: Vec<&ClassMetrics> = per_class
            .values()
            .filter(|c| wanted(c.level))
            .collect();
        let tp: u64 = members.iter().map(|c| c.tp).sum();
        let fp: u64 = members.iter().map(|c| c.fp).sum();
        let fn_: u64 = members.iter().map(|c| c.fn_).sum();
        let micro_precision = ratio(tp, tp + fp);
        let micro_recall = ratio(tp, tp + fn_);
        let macro_f1 = if members.is_empty() {
            0.0
        } else {
            members.iter().map(|c| c.f1).sum::<f64>() / members.len() as f64
        };
        ScopeMetrics {
            tp,
            fp,
            fn_,
            micro_precision,
            micro_recall,
            micro_f1: f1(micro_precision, micro_recall),
            macro_f1,
            classes: members.len(),
        }
    };

    let mut scopes = BTreeMap::new();
    for depth in 1..=max_depth {
        scopes.insert(format!("level-{depth}"), scope_over(&|l| l == depth));
    }
    scopes.insert("overall".to_string(), scope_over(&|_| true));

    Ok(EvalReport {
        repos: gold.len(),
        scopes,
        per_class,
    })
}

impl EvalReport {
    /// Scope names whose micro F1 falls below `threshold` (gate for CI).
    pub fn scopes_below(&self, threshold: f64) -> Vec<String> {
        self.scope_names()
            .into_iter()
            .filter(|s| self.scopes[s].micro_f1 < threshold)
            .collect()
    }

    /// Scopes in report order: level-1, level-2, …, overall.
    fn scope_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .scopes
            .keys()
            .filter(|s| *s != "overall")
            .cloned()
            .collect();
        names.sort_by_key(|s| {
            s.strip_prefix("level-")
                .and_then(|d| d.parse::<usize>().ok())
                .unwrap_or(usize::MAX)
        });
        names.push("overall".to_string());
        names
    }

    /// Aligned text table: scope summary block, then per-class counts.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>8} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9}\n",
            "scope", "TP", "FP", "FN", "micro-P", "micro-R", "micro-F1", "macro-F1"
        ));
        for name in self.scope_names() {
            let s = &self.scopes[&name];
            out.push_str(&format!(
                "{name:<10} {:>8} {:>8} {:>8} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
                s.tp, s.fp, s.fn_, s.micro_precision, s.micro_recall, s.micro_f1, s.macro_f1
            ));
        }
        let width = self
            .per_class
            .keys()
            .map(|c| c.len())
            .max()
            .unwrap_or(5)
            .max("class".len());
        out.push('\n');
        out.push_str(&format!(
            "{:<width$} {:>5} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}\n",
            "class", "level", "TP", "FP", "FN", "P", "R", "F1"
        ));
        let mut classes: Vec<(&String, &ClassMetrics)> = self.per_class.iter().collect();
        classes.sort_by_key(|(name, c)| (c.level, (*name).clone()));
        for (name, c) in classes {
            out.push_str(&format!(
                "{name:<width$} {:>5} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}\n",
                c.level, c.tp, c.fp, c.fn_, c.precision, c.recall, c.f1
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serialization");
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_hierarchy() -> LabelHierarchy {
        LabelHierarchy::from_json_str(
            r#"{"id":"root","name":"R","children":[
                {"id":"a","name":"A","keyword":"alpha"},
                {"id":"b","name":"B","keyword":"bravo"},
                {"id":"c","name":"C","keyword":"charlie"}]}"#,
        )
        .unwrap()
    }

    fn two_level_hierarchy() -> LabelHierarchy {
        LabelHierarchy::from_json_str(
            r#"{"id":"root","name":"R","children":[
                {"id":"x","name":"X","children":[
                    {"id":"x1","name":"X1","keyword":"xone"},
                    {"id":"x2","name":"X2","keyword":"xtwo"}]},
                {"id":"y","name":"Y","children":[
                    {"id":"y1","name":"Y1","keyword":"yone"},
                    {"id":"y2","name":"Y2","keyword":"ytwo"}]}]}"#,
        )
        .unwrap()
    }

    fn paths(items: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
        items
            .iter()
            .map(|(id, p)| {
                (
                    id.to_string(),
                    p.iter().map(|s| s.to_string()).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let h = two_level_hierarchy();
        let gold = paths(&[
            ("r1", &["x", "x1"]),
            ("r2", &["x", "x2"]),
            ("r3", &["y", "y1"]),
            ("r4", &["y", "y2"]),
        ]);
        let report = f1_report(&gold, &gold, &h).unwrap();
        for s in report.scopes.values() {
            assert_eq!(s.micro_f1, 1.0);
            assert_eq!(s.macro_f1, 1.0);
            assert_eq!(s.fp, 0);
            assert_eq!(s.fn_, 0);
        }
        for c in report.per_class.values() {
            assert_eq!(c.f1, 1.0);
        }
    }

    #[test]
    fn swapped_leaves_zero_the_leaf_level() {
        let h = two_level_hierarchy();
        let gold = paths(&[("r1", &["x", "x1"]), ("r2", &["x", "x2"])]);
        let pred = paths(&[("r1", &["x", "x2"]), ("r2", &["x", "x1"])]);
        let report = f1_report(&gold, &pred, &h).unwrap();
        assert_eq!(report.scopes["level-2"].micro_f1, 0.0);
        assert_eq!(report.scopes["level-1"].micro_f1, 1.0);
    }

    #[test]
    fn six_repo_hand_tally() {
        // Gold a,a,b,b,c,c; predicted a,b,b,c,c,c.
        //   a: TP 1, FP 0, FN 1 → P 1, R 1/2, F1 2/3
        //   b: TP 1, FP 1, FN 1 → P 1/2, R 1/2, F1 1/2
        //   c: TP 2, FP 1, FN 0 → P 2/3, R 1, F1 4/5
        // micro: 4/(4+2) both ways → F1 2/3 (= accuracy 4/6)
        // macro: (2/3 + 1/2 + 4/5)/3
        let h = flat_hierarchy();
        let gold = paths(&[
            ("r1", &["a"]),
            ("r2", &["a"]),
            ("r3", &["b"]),
            ("r4", &["b"]),
            ("r5", &["c"]),
            ("r6", &["c"]),
        ]);
        let pred = paths(&[
            ("r1", &["a"]),
            ("r2", &["b"]),
            ("r3", &["b"]),
            ("r4", &["c"]),
            ("r5", &["c"]),
            ("r6", &["c"]),
        ]);
        let report = f1_report(&gold, &pred, &h).unwrap();
        let a = &report.per_class["a"];
        assert_eq!((a.tp, a.fp, a.fn_), (1, 0, 1));
        assert!((a.f1 - 2.0 / 3.0).abs() < 1e-12);
        let b = &report.per_class["b"];
        assert_eq!((b.tp, b.fp, b.fn_), (1, 1, 1));
        assert!((b.f1 - 0.5).abs() < 1e-12);
        let c = &report.per_class["c"];
        assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 0));
        assert!((c.f1 - 0.8).abs() < 1e-12);
        let s = &report.scopes["level-1"];
        assert!((s.micro_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.macro_f1 - (2.0 / 3.0 + 0.5 + 0.8) / 3.0).abs() < 1e-12);
        assert_eq!(report.scopes["overall"], report.scopes["level-1"]);
    }

    /// Brute-force oracle: tally every (repo, depth) cell independently and
    /// recompute the metrics from scratch.
    fn oracle(
        gold: &BTreeMap<String, Vec<String>>,
        pred: &BTreeMap<String, Vec<String>>,
        h: &LabelHierarchy,
    ) -> BTreeMap<String, (f64, f64)> {
        let mut all_classes: Vec<String> = h.internal_nodes();
        all_classes.extend(h.leaves());
        all_classes.retain(|c| c != h.root());
        let count_for = |class: &str| -> (u64, u64, u64) {
            let depth = h.level(class).unwrap();
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (id, g) in gold {
                let p = &pred[id];
                let gl = g.get(depth - 1).map(|s| s.as_str());
                let pl = p.get(depth - 1).map(|s| s.as_str());
                if gl == Some(class) && pl == Some(class) {
                    tp += 1;
                } else {
                    if pl == Some(class) {
                        fp += 1;
                    }
                    if gl == Some(class) {
                        fn_ += 1;
                    }
                }
            }
            (tp, fp, fn_)
        };
        let mut scopes: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for c in &all_classes {
            scopes
                .entry(format!("level-{}", h.level(c).unwrap()))
                .or_default()
                .push(c.clone());
            scopes
                .entry("overall".into())
                .or_default()
                .push(c.clone());
        }
        scopes
            .into_iter()
            .map(|(name, classes)| {
                let counts: Vec<(u64, u64, u64)> =
                    classes.iter().map(|c| count_for(c)).collect();
                let tp: u64 = counts.iter().map(|x| x.0).sum();
                let fp: u64 = counts.iter().map(|x| x.1).sum();
                let fn_: u64 = counts.iter().map(|x| x.2).sum();
                let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
                let micro = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
                let macro_f1 = counts
                    .iter()
                    .map(|&(tp, fp, fn_)| {
                        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
                        if p + r == 0.0 {
                            0.0
                        } else {
                            2.0 * p * r / (p + r)
                        }
                    })
                    .sum::<f64>()
                    / counts.len() as f64;
                (name, (micro, macro_f1))
            })
            .collect()
    }

    #[test]
    fn random_instances_match_brute_force_oracle() {
        let h = two_level_hierarchy();
        let leaves = h.leaves();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..50 {
            let n = rng.gen_range(3..25);
            let random_paths = |rng: &mut ChaCha8Rng| -> BTreeMap<String, Vec<String>> {
                (0..n)
                    .map(|i| {
                        let leaf = &leaves[rng.gen_range(0..leaves.len())];
                        (format!("r{i}"), h.path_to(leaf).unwrap())
                    })
                    .collect()
            };
            let gold = random_paths(&mut rng);
            let pred = random_paths(&mut rng);
            let report = f1_report(&gold, &pred, &h).unwrap();
            let expect = oracle(&gold, &pred, &h);
            for (scope, (micro, macro_f1)) in expect {
                let s = &report.scopes[&scope];
                assert!((s.micro_f1 - micro).abs() < 1e-12, "{scope} micro");
                assert!((s.macro_f1 - macro_f1).abs() < 1e-12, "{scope} macro");
            }

            // Full single-label coverage at each level: micro F1 = accuracy.
            for depth in 1..=2usize {
                let acc = gold
                    .iter()
                    .filter(|(id, g)| g[depth - 1] == pred[*id][depth - 1])
                    .count() as f64
                    / n as f64;
                let s = &report.scopes[&format!("level-{depth}")];
                assert!((s.micro_f1 - acc).abs() < 1e-12);
            }

            // Disjoint level class sets: overall counts are the level sums.
            let overall = &report.scopes["overall"];
            let l1 = &report.scopes["level-1"];
            let l2 = &report.scopes["level-2"];
            assert_eq!(overall.tp, l1.tp + l2.tp);
            assert_eq!(overall.fp, l1.fp + l2.fp);
            assert_eq!(overall.fn_, l1.fn_ + l2.fn_);
        }
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let h = flat_hierarchy();
        let gold = paths(&[("r1", &["a"]), ("r2", &["b"]), ("r3", &["c"])]);
        let pred = paths(&[("r1", &["a"]), ("r2", &["c"]), ("r3", &["c"])]);
        let mut gold_rev = BTreeMap::new();
        for (k, v) in gold.iter().rev() {
            gold_rev.insert(k.clone(), v.clone());
        }
        let a = f1_report(&gold, &pred, &h).unwrap();
        let b = f1_report(&gold_rev, &pred, &h).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_predicted_paths_count_as_misses_below_their_depth() {
        let h = two_level_hierarchy();
        let gold = paths(&[("r1", &["x", "x1"])]);
        let pred = paths(&[("r1", &["x"])]);
        let report = f1_report(&gold, &pred, &h).unwrap();
        assert_eq!(report.scopes["level-1"].micro_f1, 1.0);
        let x1 = &report.per_class["x1"];
        assert_eq!((x1.tp, x1.fp, x1.fn_), (0, 0, 1));
        assert_eq!(report.scopes["level-2"].micro_f1, 0.0);
    }

    #[test]
    fn coverage_and_label_errors() {
        let h = flat_hierarchy();
        let gold = paths(&[("r1", &["a"]), ("r2", &["b"])]);
        let missing = paths(&[("r1", &["a"])]);
        assert!(f1_report(&gold, &missing, &h).is_err());
        let extra = paths(&[("r1", &["a"]), ("r2", &["b"]), ("r3", &["c"])]);
        assert!(f1_report(&gold, &extra, &h).is_err());
        let unknown = paths(&[("r1", &["a"]), ("r2", &["ghost"])]);
        assert!(matches!(
            f1_report(&gold, &unknown, &h),
            Err(Error::UnknownLabel(_))
        ));
        let not_a_chain = paths(&[("r1", &["a"]), ("r2", &["a", "b"])]);
        assert!(f1_report(&gold, &not_a_chain, &h).is_err());
    }

    #[test]
    fn report_serializes_and_formats() {
        let h = two_level_hierarchy();
        let gold = paths(&[("r1", &["x", "x1"]), ("r2", &["y", "y2"])]);
        let pred = paths(&[("r1", &["x", "x2"]), ("r2", &["y", "y2"])]);
        let report = f1_report(&gold, &pred, &h).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        assert_eq!(EvalReport::load(&path).unwrap(), report);
        let json = std::fs::read_to_string(&path).unwrap();
        assert!(json.contains("\"fn\""), "fn key renamed");
        let table = report.format_table();
        assert!(table.contains("level-1"));
        assert!(table.contains("overall"));
        assert!(table.contains("x1"));
        assert_eq!(report.scopes_below(0.99), vec!["level-2", "overall"]);
        assert!(report.scopes_below(0.1).is_empty());
    }
}
