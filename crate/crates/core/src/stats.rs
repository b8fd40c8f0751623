//! Small statistics helpers. Sums are pairwise so that results do not depend
//! on how work was split across threads.

const PAIRWISE_BLOCK: usize = 32;

pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values, |v| v)
}

pub fn pairwise_sum_by<T: Copy>(values: &[T], f: impl Fn(T) -> f64 + Copy) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().map(|&v| f(v)).sum();
    }
    let mid = values.len() / 2;
    pairwise_sum_by(&values[..mid], f) + pairwise_sum_by(&values[mid..], f)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    pairwise_sum_by(values, |v| (v - m) * (v - m)) / (n - 1) as f64
}

/// Standard error of the mean.
pub fn sem(values: &[f64]) -> f64 {
    (variance(values) / values.len() as f64).sqrt()
}

/// Mean and standard error along the sample axis of equally long rows.
pub fn column_mean_sem(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    if rows.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let n = rows[0].len();
    let mut means = Vec::with_capacity(n);
    let mut sems = Vec::with_capacity(n);
    let mut column = vec![0.0; rows.len()];
    for i in 0..n {
        for (c, row) in column.iter_mut().zip(rows) {
            *c = row[i];
        }
        means.push(mean(&column));
        sems.push(if rows.len() > 1 { sem(&column) } else { f64::NAN });
    }
    (means, sems)
}

/// Element-wise pairwise sum of equally long rows.
pub fn sum_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    match rows.len() {
        0 => Vec::new(),
        1 => rows[0].clone(),
        n => {
            let (a, b) = rows.split_at(n / 2);
            let (a, b) = (sum_rows(a), sum_rows(b));
            a.iter().zip(&b).map(|(x, y)| x + y).collect()
        }
    }
}
