//! Brute-force EER used as an independent oracle.

/// Brute-force sweep: FAR and FRR recounted from scratch at every distinct
/// score, accept iff score >= threshold, linear interpolation at the first
/// sign change of FAR - FRR.
pub fn oracle_eer(tar: &[f64], non: &[f64]) -> (f64, f64) {
    let mut th: Vec<f64> = tar.iter().chain(non).copied().collect();
    th.sort_by(|a, b| a.partial_cmp(b).unwrap());
    th.dedup();
    let mut points: Vec<(f64, f64, f64)> = th
        .iter()
        .map(|&t| {
            let far = non.iter().filter(|&&s| s >= t).count() as f64 / non.len() as f64;
            let frr = tar.iter().filter(|&&s| s < t).count() as f64 / tar.len() as f64;
            (t, far, frr)
        })
        .collect();
    points.push((*th.last().unwrap(), 0.0, 1.0));
    for i in 0..points.len() {
        let (t1, far1, frr1) = points[i];
        let d1 = far1 - frr1;
        if d1 == 0.0 {
            return (100.0 * far1, t1);
        }
        if d1 < 0.0 {
            let (t0, far0, frr0) = points[i - 1];
            let d0 = far0 - frr0;
            let w = d0 / (d0 - d1);
            let far = far0 + w * (far1 - far0);
            let frr = frr0 + w * (frr1 - frr0);
            return (50.0 * (far + frr), t0 + w * (t1 - t0));
        }
    }
    unreachable!("the sentinel point always has FAR - FRR = -1")
}
