//! Prediction metrics and the fold-level significance tests.

mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use special::{f_upper_tail, ln_gamma, reg_inc_beta, student_t_two_tailed, student_t_upper};

/// Percentage of matching labels.
pub fn accuracy(predicted: &[u8], truth: &[u8]) -> Result<f64> {
    check_lengths(predicted.len(), truth.len())?;
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / truth.len() as f64)
}

pub fn mae(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(predicted.len(), truth.len())?;
    Ok(predicted.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / truth.len() as f64)
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two samples".into()));
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a} predictions for {b} targets")));
    }
    if a == 0 {
        return Err(Error::InvalidInput("empty input".into()));
    }
    Ok(())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (denominator n - 1); 0 for fewer than two values.
pub fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// t for paired tests, F for ANOVA.
    pub statistic: f64,
    pub df1: f64,
    /// Denominator degrees of freedom (F tests only).
    pub df2: Option<f64>,
    pub p_value: f64,
}

impl TestResult {
    pub fn marker(&self) -> &'static str {
        significance_marker(self.p_value)
    }
}

/// `n.s.` / `*` / `**` / `***` at the 0.05 / 0.01 / 0.001 levels.
pub fn significance_marker(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "n.s."
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    #[default]
    Two,
    /// H1: mean(a - b) < 0
    Less,
    /// H1: mean(a - b) > 0
    Greater,
}

/// Two-tailed paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    paired_t_test_tailed(a, b, Tail::Two)
}

pub fn paired_t_test_tailed(a: &[f64], b: &[f64], tail: Tail) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidInput("paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let md = mean(&d);
    let sd = sample_sd(&d);
    let df = (n - 1) as f64;
    let t = if sd == 0.0 {
        if md == 0.0 {
            0.0
        } else {
            md.signum() * f64::INFINITY
        }
    } else {
        md / (sd / (n as f64).sqrt())
    };
    let p_value = match tail {
        Tail::Two if t == 0.0 => 1.0,
        Tail::Two => student_t_two_tailed(t, df),
        Tail::Greater => student_t_upper(t, df),
        Tail::Less => student_t_upper(-t, df),
    };
    Ok(TestResult { statistic: t, df1: df, df2: None, p_value })
}

/// One-way repeated-measures ANOVA. `table[i][j]` is the value of method `j`
/// on block (fold) `i`; blocks are the repeated subjects.
pub fn rm_anova(table: &[Vec<f64>]) -> Result<TestResult> {
    let n = table.len();
    if n < 2 {
        return Err(Error::InvalidInput("repeated-measures ANOVA needs at least two blocks".into()));
    }
    let k = table[0].len();
    if k < 2 {
        return Err(Error::InvalidInput("repeated-measures ANOVA needs at least two methods".into()));
    }
    if let Some(i) = table.iter().position(|row| row.len() != k) {
        return Err(Error::InvalidInput(format!("row {i} has {} of {k} methods", table[i].len())));
    }
    if table.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("table has non-finite entries".into()));
    }
    let grand = table.iter().flatten().sum::<f64>() / (n * k) as f64;
    let row_means: Vec<f64> = table.iter().map(|r| mean(r)).collect();
    let col_means: Vec<f64> = (0..k).map(|j| table.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();

    let ss_method = n as f64 * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_error = 0.0;
    for (row, rm) in table.iter().zip(&row_means) {
        for (x, cm) in row.iter().zip(&col_means) {
            ss_error += (x - rm - cm + grand).powi(2);
        }
    }
    let df1 = (k - 1) as f64;
    let df2 = ((k - 1) * (n - 1)) as f64;
    let ss_total: f64 = table.iter().flatten().map(|x| (x - grand).powi(2)).sum();
    let negligible = 1e-24 * ss_total.max(f64::MIN_POSITIVE);
    let (f, p) = if ss_method <= negligible {
        (0.0, 1.0)
    } else if ss_error <= negligible {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ss_method / df1) / (ss_error / df2);
        (f, f_upper_tail(f, df1, df2))
    };
    Ok(TestResult { statistic: f, df1, df2: Some(df2), p_value: p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 100.0);
        assert_eq!(accuracy(&[1, 1], &[0, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 1, 0, 0], &[1, 1, 0, 1]).unwrap(), 75.0);
        assert!(accuracy(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn mae_cases() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[2.0, -1.0], &[1.0, 2.0]).unwrap(), 2.0);
        let t = [3.0, 9.5, -2.0];
        let shifted: Vec<f64> = t.iter().map(|v| v - 1.5).collect();
        assert!((mae(&shifted, &t).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y2: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson_r(&x, &y2).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson_r(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(pearson_r(&x, &[2.0; 4]), Err(Error::UndefinedCorrelation(_))));
        assert!(pearson_r(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn paired_t_reference() {
        // scipy.stats.ttest_rel([1,2,3,4,5], [2,2,4,4,6])
        let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 2.0, 4.0, 4.0, 6.0]).unwrap();
        assert!((r.statistic - -2.449_489_742_783_178).abs() < 1e-9);
        assert!((r.p_value - 0.070_483_996_910_219_93).abs() < 1e-9);
        assert_eq!(r.df1, 4.0);
        let swapped = paired_t_test(&[2.0, 2.0, 4.0, 4.0, 6.0], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(swapped.statistic, -r.statistic);
        assert_eq!(swapped.p_value, r.p_value);
    }

    #[test]
    fn paired_t_degenerate_and_tails() {
        let a = [0.3, 0.4, 0.5];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = paired_t_test(&[1.5, 2.5, 3.5], &[1.0, 2.0, 3.0]).unwrap();
        assert!(r.statistic.is_infinite() && r.p_value == 0.0);
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 2.0, 4.0, 4.0, 6.0];
        let two = paired_t_test(&a, &b).unwrap().p_value;
        let less = paired_t_test_tailed(&a, &b, Tail::Less).unwrap().p_value;
        let greater = paired_t_test_tailed(&a, &b, Tail::Greater).unwrap().p_value;
        assert!((less - two / 2.0).abs() < 1e-12);
        assert!((greater - (1.0 - two / 2.0)).abs() < 1e-12);
        assert!(paired_t_test(&a, &b[..4]).is_err());
    }

    #[test]
    fn anova_reference() {
        // statsmodels AnovaRM on the same table
        let table = vec![
            vec![0.31, 0.35, 0.39],
            vec![0.28, 0.33, 0.41],
            vec![0.35, 0.36, 0.44],
            vec![0.30, 0.31, 0.37],
            vec![0.33, 0.38, 0.40],
        ];
        let r = rm_anova(&table).unwrap();
        assert!((r.statistic - 34.604_651_162_790_75).abs() < 1e-8);
        assert!((r.p_value - 0.000_115_260_748_478_648_64).abs() < 1e-8);
        assert_eq!((r.df1, r.df2), (2.0, Some(8.0)));
        assert_eq!(r.marker(), "***");
    }

    #[test]
    fn anova_degenerate_and_errors() {
        let table = vec![vec![0.5, 0.5], vec![0.7, 0.7], vec![0.1, 0.1]];
        let r = rm_anova(&table).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(rm_anova(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(rm_anova(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn markers() {
        assert_eq!(significance_marker(0.2), "n.s.");
        assert_eq!(significance_marker(0.039), "*");
        assert_eq!(significance_marker(0.005), "**");
        assert_eq!(significance_marker(0.0001), "***");
    }
}
