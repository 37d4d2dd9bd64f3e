use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
}

/// One vertex of the ROC polyline: rates when accepting scores `>= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// ROC vertices from accept-nothing to accept-everything. Tied scores move
/// together, giving a diagonal segment.
pub fn roc_points(targets: &[f64], impostors: &[f64]) -> Result<Vec<RocPoint>> {
    if targets.is_empty() || impostors.is_empty() {
        return Err(Error::EmptyTrials(format!(
            "EER needs target and impostor scores (have {} and {})",
            targets.len(),
            impostors.len()
        )));
    }
    if targets.iter().chain(impostors).any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite score".into()));
    }
    let mut all: Vec<(f64, bool)> = targets
        .iter()
        .map(|&s| (s, true))
        .chain(impostors.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (nt, ni) = (targets.len() as f64, impostors.len() as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    }];
    let (mut acc_t, mut acc_i) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                acc_t += 1;
            } else {
                acc_i += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            far: acc_i as f64 / ni,
            frr: 1.0 - acc_t as f64 / nt,
        });
    }
    Ok(points)
}

/// Where the piecewise-linear ROC crosses FAR = FRR.
pub fn eer_from_points(points: &[RocPoint]) -> EerResult {
    for w in points.windows(2) {
        let (p, q) = (w[0], w[1]);
        let dp = p.frr - p.far;
        let dq = q.frr - q.far;
        if dp >= 0.0 && dq <= 0.0 {
            let f = if dp == dq { 0.0 } else { dp / (dp - dq) };
            let eer = p.far + f * (q.far - p.far);
            let threshold = if p.threshold.is_infinite() {
                q.threshold
            } else {
                p.threshold + f * (q.threshold - p.threshold)
            };
            return EerResult { eer, threshold };
        }
    }
    // The polyline ends at (1, 0), so a crossing always exists.
    unreachable!("ROC polyline must cross the diagonal")
}

pub fn compute_eer(targets: &[f64], impostors: &[f64]) -> Result<EerResult> {
    Ok(eer_from_points(&roc_points(targets, impostors)?))
}
