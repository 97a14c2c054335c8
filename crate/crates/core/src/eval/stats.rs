//! Two-factor ANOVA without replication and the paired t-test, with
//! p-values from the regularized incomplete beta function.

use super::{EvalError, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::beta::beta_reg;

/// Upper tail `P(F > f)` of the F distribution with `(d1, d2)` degrees of
/// freedom.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    // the complementary form keeps precision for large f
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

/// Two-sided `P(|T| > |t|)` for Student's t with `df` degrees of freedom.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

/// Non-finite values are written as the strings `"inf"`, `"-inf"` and
/// `"nan"` since JSON has no literal for them.
pub(crate) mod extended_float {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub ss_rows: f64,
    pub ss_cols: f64,
    pub ss_error: f64,
    pub ss_total: f64,
    pub df_rows: usize,
    pub df_cols: usize,
    pub df_error: usize,
    #[serde(with = "extended_float")]
    pub f_rows: f64,
    #[serde(with = "extended_float")]
    pub f_cols: f64,
    pub p_rows: f64,
    pub p_cols: f64,
}

fn f_ratio(ms_effect: f64, ms_error: f64, ss_effect: f64, ss_total: f64) -> f64 {
    let noise = 1e-12 * ss_total.max(f64::MIN_POSITIVE);
    if ss_effect <= noise {
        0.0
    } else if ms_error <= noise {
        f64::INFINITY
    } else {
        ms_effect / ms_error
    }
}

/// Two-way ANOVA without replication on an `r x c` table (one observation
/// per cell). Effects with no variance get `F = 0`; a zero error term gives
/// `F = inf` and `p = 0`.
pub fn anova_two_factor(table: &[Vec<f64>]) -> Result<AnovaResult> {
    let r = table.len();
    let c = table.first().map_or(0, Vec::len);
    if r < 2 || c < 2 {
        return Err(EvalError::Shape(format!("ANOVA needs at least a 2x2 table, got {r}x{c}")));
    }
    if table.iter().any(|row| row.len() != c) {
        return Err(EvalError::Shape("ANOVA table rows differ in length".into()));
    }
    if table.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EvalError::Shape("ANOVA table has non-finite entries".into()));
    }
    let n = (r * c) as f64;
    let grand = table.iter().flatten().sum::<f64>() / n;
    let row_means: Vec<f64> = table.iter().map(|row| row.iter().sum::<f64>() / c as f64).collect();
    let col_means: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum::<f64>() / r as f64).collect();
    let ss_total: f64 = table.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_rows = c as f64 * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = r as f64 * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_error = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            ss_error += (v - row_means[i] - col_means[j] + grand).powi(2);
        }
    }
    let (df_rows, df_cols, df_error) = (r - 1, c - 1, (r - 1) * (c - 1));
    let ms_error = ss_error / df_error as f64;
    let f_rows = f_ratio(ss_rows / df_rows as f64, ms_error, ss_rows, ss_total);
    let f_cols = f_ratio(ss_cols / df_cols as f64, ms_error, ss_cols, ss_total);
    Ok(AnovaResult {
        ss_rows,
        ss_cols,
        ss_error,
        ss_total,
        df_rows,
        df_cols,
        df_error,
        f_rows,
        f_cols,
        p_rows: f_sf(f_rows, df_rows as f64, df_error as f64),
        p_cols: f_sf(f_cols, df_cols as f64, df_error as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p_two_sided: f64,
    pub df: usize,
    pub mean_difference: f64,
}

/// Paired t-test on `a - b`. Identical samples give `t = 0, p = 1`; a
/// constant non-zero difference has no variance and is an error.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(EvalError::Shape(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::Shape("paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::Shape("non-finite sample".into()));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if d.iter().all(|&v| v == 0.0) {
        return Ok(TTestResult { t: 0.0, p_two_sided: 1.0, df, mean_difference: 0.0 });
    }
    if var <= 1e-24 * mean * mean {
        return Err(EvalError::Degenerate(format!(
            "differences are constant ({mean}); the t statistic is undefined"
        )));
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    Ok(TTestResult { t, p_two_sided: t_two_sided(t, df as f64), df, mean_difference: mean })
}
