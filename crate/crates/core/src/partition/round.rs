use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoundError {
    #[error("fractions must be finite, non-negative and sum to 1 (sum = {0})")]
    BadLambda(f64),
    #[error("cannot top device {device} up from {rows} to {threshold} rows")]
    RepairFailed { device: usize, rows: usize, threshold: usize },
}

/// Largest-remainder apportionment of `h` rows by `lambda`, then a repair
/// pass lifting active devices below `threshold` with rows taken from the
/// largest holder. Remainder ties go to the lowest index.
pub fn round_plan(lambda: &[f64], h: usize, threshold: usize) -> Result<Vec<usize>, RoundError> {
    let sum: f64 = lambda.iter().sum();
    if lambda.is_empty() || !lambda.iter().all(|v| v.is_finite() && *v >= -1e-9) || (sum - 1.0).abs() > 1e-6 {
        return Err(RoundError::BadLambda(sum));
    }
    let quotas: Vec<f64> = lambda.iter().map(|v| v.max(0.0) / sum * h as f64).collect();
    let mut rows: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = rows.iter().sum();
    let mut order: Vec<usize> = (0..lambda.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = h.saturating_sub(assigned);
    for &i in order.iter().cycle().take(left.max(1) * lambda.len()) {
        if left == 0 {
            break;
        }
        rows[i] += 1;
        left -= 1;
    }
    // floating error can overshoot by a row; take it back from the largest
    while rows.iter().sum::<usize>() > h {
        let largest = argmax(&rows);
        rows[largest] -= 1;
    }

    for _ in 0..lambda.len() {
        let active = rows.iter().filter(|&&a| a > 0).count();
        if active < 2 {
            break;
        }
        let Some(device) = (0..rows.len()).find(|&i| rows[i] > 0 && rows[i] < threshold) else {
            break;
        };
        let need = threshold - rows[device];
        let donor = argmax(&rows);
        if donor == device || rows[donor] < threshold + need {
            return Err(RoundError::RepairFailed {
                device,
                rows: rows[device],
                threshold,
            });
        }
        rows[donor] -= need;
        rows[device] += need;
    }
    if rows.iter().filter(|&&a| a > 0).count() >= 2 {
        if let Some(device) = (0..rows.len()).find(|&i| rows[i] > 0 && rows[i] < threshold) {
            return Err(RoundError::RepairFailed {
                device,
                rows: rows[device],
                threshold,
            });
        }
    }
    Ok(rows)
}

fn argmax(rows: &[usize]) -> usize {
    let mut best = 0;
    for (i, &a) in rows.iter().enumerate() {
        if a > rows[best] {
            best = i;
        }
    }
    best
}
