//! Confusion matrix and the accuracy statistics reported per experiment:
//! overall accuracy (OA), average accuracy (AA, mean per-class recall),
//! Cohen's kappa and per-class F1.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Width of the class-name column in rendered tables.
pub const NAME_WIDTH: usize = 24;

/// `C × C` counts; rows are reference classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Builds a matrix from row-major counts.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Dimension(format!(
                "{} counts for {classes} classes",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[reference * self.classes + predicted]
    }

    /// Records one sample; both labels are 1-based.
    pub fn accumulate(&mut self, reference: usize, predicted: usize) -> Result<()> {
        let c = self.classes;
        if !(1..=c).contains(&reference) || !(1..=c).contains(&predicted) {
            return Err(Error::Data(format!(
                "label pair ({reference}, {predicted}) outside 1..={c}"
            )));
        }
        self.counts[(reference - 1) * c + predicted - 1] += 1;
        Ok(())
    }

    /// Entrywise sum, for combining shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Dimension(format!(
                "cannot merge {}-class and {}-class matrices",
                self.classes, other.classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        (0..self.classes).map(|j| self.get(class, j)).sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, class)).sum()
    }

    fn nonempty(&self) -> Result<u64> {
        match self.total() {
            0 => Err(Error::UndefinedMetric("confusion matrix is empty".into())),
            n => Ok(n),
        }
    }

    pub fn overall_accuracy(&self) -> Result<f64> {
        let n = self.nonempty()?;
        Ok(self.trace() as f64 / n as f64)
    }

    pub fn average_accuracy(&self) -> Result<f64> {
        let mut sum = 0.0;
        for c in 0..self.classes {
            let row = self.row_sum(c);
            if row == 0 {
                return Err(Error::UndefinedMetric(format!(
                    "average accuracy: class {} has no reference samples",
                    c + 1
                )));
            }
            sum += self.get(c, c) as f64 / row as f64;
        }
        Ok(sum / self.classes as f64)
    }

    /// `(p_o − p_e)/(1 − p_e)`, evaluated as the exact integer ratio
    /// `(N·trace − Σ row·col) / (N² − Σ row·col)`.
    pub fn kappa(&self) -> Result<f64> {
        let n = self.nonempty()? as u128;
        let chance: u128 = (0..self.classes)
            .map(|c| self.row_sum(c) as u128 * self.col_sum(c) as u128)
            .sum();
        let denom = n * n - chance;
        if denom == 0 {
            return Err(Error::UndefinedMetric(
                "kappa: chance agreement is 1".into(),
            ));
        }
        let num = (n * self.trace() as u128) as i128 - chance as i128;
        Ok(num as f64 / denom as f64)
    }

    /// Per-class `2PR/(P+R)`, 0 when `P + R = 0` or a ratio is undefined.
    pub fn f1_per_class(&self) -> Result<Vec<f64>> {
        self.nonempty()?;
        Ok((0..self.classes)
            .map(|c| {
                let tp = self.get(c, c) as f64;
                let (col, row) = (self.col_sum(c), self.row_sum(c));
                let p = if col == 0 { 0.0 } else { tp / col as f64 };
                let r = if row == 0 { 0.0 } else { tp / row as f64 };
                if p + r == 0.0 {
                    0.0
                } else {
                    2.0 * p * r / (p + r)
                }
            })
            .collect())
    }
}

/// Metrics of one evaluation, ready for rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub class_names: Vec<String>,
    pub f1: Vec<f64>,
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
}

impl Summary {
    pub fn from_matrix(cm: &ConfusionMatrix, class_names: &[String]) -> Result<Self> {
        if class_names.len() != cm.classes() {
            return Err(Error::Config(format!(
                "{} class names for {} classes",
                class_names.len(),
                cm.classes()
            )));
        }
        Ok(Summary {
            class_names: class_names.to_vec(),
            f1: cm.f1_per_class()?,
            oa: cm.overall_accuracy()?,
            aa: cm.average_accuracy()?,
            kappa: cm.kappa()?,
        })
    }

    /// Mean of several summaries over the same classes.
    pub fn mean(summaries: &[Summary]) -> Result<Summary> {
        let first = summaries
            .first()
            .ok_or_else(|| Error::UndefinedMetric("no summaries to average".into()))?;
        let n = summaries.len() as f64;
        let avg = |f: &dyn Fn(&Summary) -> f64| summaries.iter().map(f).sum::<f64>() / n;
        Ok(Summary {
            class_names: first.class_names.clone(),
            f1: (0..first.f1.len())
                .map(|i| avg(&|s: &Summary| s.f1[i]))
                .collect(),
            oa: avg(&|s| s.oa),
            aa: avg(&|s| s.aa),
            kappa: avg(&|s| s.kappa),
        })
    }

    /// `key=value` lines: `oa`, `aa`, `kappa`, then `f1.<class>`. Values are
    /// printed in shortest round-trip form.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        writeln!(s, "oa={}", self.oa).unwrap();
        writeln!(s, "aa={}", self.aa).unwrap();
        writeln!(s, "kappa={}", self.kappa).unwrap();
        for (name, f) in self.class_names.iter().zip(&self.f1) {
            writeln!(s, "f1.{}={}", key_name(name), f).unwrap();
        }
        s
    }
}

/// Class name as used in a metric key (whitespace replaced by `_`).
pub fn key_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join("_")
}

/// Parses `key=value` lines, ignoring anything else.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        let k = k.trim();
        if k.is_empty() || k.contains(char::is_whitespace) {
            continue;
        }
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("bad metric value in line {line:?}")))?;
        out.insert(k.to_string(), v);
    }
    Ok(out)
}

fn row(s: &mut String, label: &str, cells: &[String]) {
    write!(s, "{label:<NAME_WIDTH$}").unwrap();
    for c in cells {
        write!(s, " | {c:>10}").unwrap();
    }
    s.push('\n');
}

/// Renders one or more result columns in the per-class F1 + OA/AA/κ layout
/// (F1 with two decimals, the summary rows ×100).
pub fn render_table(headers: &[&str], columns: &[Summary]) -> Result<String> {
    let first = columns
        .first()
        .ok_or_else(|| Error::Config("no result columns".into()))?;
    if headers.len() != columns.len() {
        return Err(Error::Config("header/column count mismatch".into()));
    }
    let mut s = String::new();
    let heads: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    row(&mut s, "Class", &heads);
    let width = NAME_WIDTH + columns.len() * 13;
    s.push_str(&"-".repeat(width));
    s.push('\n');
    for (i, name) in first.class_names.iter().enumerate() {
        let cells: Vec<String> = columns.iter().map(|c| format!("{:.2}", c.f1[i])).collect();
        row(&mut s, name, &cells);
    }
    s.push_str(&"=".repeat(width));
    s.push('\n');
    let pct = |f: &dyn Fn(&Summary) -> f64| -> Vec<String> {
        columns
            .iter()
            .map(|c| format!("{:.2}", 100.0 * f(c)))
            .collect()
    };
    row(&mut s, "OA×100", &pct(&|c| c.oa));
    row(&mut s, "AA×100", &pct(&|c| c.aa));
    row(&mut s, "κ×100", &pct(&|c| c.kappa));
    Ok(s)
}

/// Single-column report: formatted table, a blank line, then key-value lines.
pub fn render_report(cm: &ConfusionMatrix, class_names: &[String]) -> Result<String> {
    let summary = Summary::from_matrix(cm, class_names)?;
    let mut out = render_table(&["F1"], std::slice::from_ref(&summary))?;
    out.push('\n');
    out.push_str(&summary.to_key_values());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> ConfusionMatrix {
        ConfusionMatrix::from_counts(2, vec![50, 10, 5, 35]).unwrap()
    }

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("class {i}")).collect()
    }

    #[test]
    fn accumulate_is_one_based() {
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(1, 1).unwrap();
        assert_eq!(cm.get(0, 0), 1);
        assert_eq!(cm.total(), 1);
        assert!(matches!(cm.accumulate(0, 1), Err(Error::Data(_))));
        assert!(cm.accumulate(1, 4).is_err());
    }

    #[test]
    fn worked_example() {
        let cm = example();
        assert!((cm.overall_accuracy().unwrap() - 0.85).abs() < 1e-15);
        let aa = (50.0 / 60.0 + 35.0 / 40.0) / 2.0;
        assert!((cm.average_accuracy().unwrap() - aa).abs() < 1e-15);
        assert!((cm.kappa().unwrap() - 0.34 / 0.49).abs() < 1e-12);
        let (p, r) = (50.0 / 55.0, 50.0 / 60.0);
        assert!((cm.f1_per_class().unwrap()[0] - 2.0 * p * r / (p + r)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cases() {
        assert!(matches!(
            ConfusionMatrix::new(2).overall_accuracy(),
            Err(Error::UndefinedMetric(_))
        ));
        let single = ConfusionMatrix::from_counts(2, vec![5, 0, 0, 0]).unwrap();
        assert!(single.kappa().is_err());
        let err = single.average_accuracy().unwrap_err().to_string();
        assert!(err.contains("class 2"), "{err}");
        assert_eq!(single.f1_per_class().unwrap(), vec![1.0, 0.0]);
        let miss = ConfusionMatrix::from_counts(2, vec![0, 1, 0, 0]).unwrap();
        assert_eq!(miss.overall_accuracy().unwrap(), 0.0);
        let balanced = ConfusionMatrix::from_counts(2, vec![1, 1, 1, 1]).unwrap();
        assert_eq!(balanced.average_accuracy().unwrap(), 0.5);
    }

    #[test]
    fn report_layout_and_round_trip() {
        let cm = ConfusionMatrix::from_counts(2, vec![3, 0, 0, 4]).unwrap();
        let report = render_report(&cm, &names(2)).unwrap();
        assert!(report.contains("100.00"));
        let kv = parse_key_values(&report).unwrap();
        assert_eq!(kv["oa"], 1.0);
        assert_eq!(kv["f1.class_2"], 1.0);

        let s = Summary::from_matrix(&example(), &names(2)).unwrap();
        let kv = parse_key_values(&s.to_key_values()).unwrap();
        assert_eq!(kv["kappa"].to_bits(), s.kappa.to_bits());
        assert_eq!(kv["aa"].to_bits(), s.aa.to_bits());
        assert!(render_report(&cm, &names(3)).is_err());
    }

    #[test]
    fn columns_align_for_long_names() {
        let long = vec!["x".repeat(24), "y".to_string()];
        let cm = ConfusionMatrix::from_counts(2, vec![3, 1, 2, 4]).unwrap();
        let report = render_report(&cm, &long).unwrap();
        let bars: Vec<usize> = report
            .lines()
            .filter(|l| l.contains(" | "))
            .map(|l| l.chars().position(|c| c == '|').unwrap())
            .collect();
        assert!(bars.iter().all(|&b| b == NAME_WIDTH + 1), "{bars:?}");
    }
}
