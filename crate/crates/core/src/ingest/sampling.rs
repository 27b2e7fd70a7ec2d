use super::Timestamped;

/// Decimate a stream to one record per `base_period_s`, except within
/// `burst_radius_s` of any base-period window for which `interest` holds,
/// where every record is kept.
///
/// Windows are `[t0 + k·P, t0 + (k+1)·P)` anchored at the first record.
/// The output is an order-preserving subset of the input.
pub fn adaptive_downsample<T: Timestamped + Clone>(
    stream: &[T],
    interest: impl Fn(&[T]) -> bool,
    base_period_s: f64,
    burst_radius_s: f64,
) -> Vec<T> {
    assert!(base_period_s > 0.0, "base_period_s must be positive");
    let Some(first) = stream.first() else {
        return Vec::new();
    };
    let t0 = first.t();
    let window_of = |t: f64| ((t - t0) / base_period_s + 1e-9).floor() as i64;

    // Contiguous runs of records sharing a window index.
    let mut windows: Vec<(i64, usize, usize)> = Vec::new();
    for (i, r) in stream.iter().enumerate() {
        let w = window_of(r.t());
        match windows.last_mut() {
            Some((lw, _, end)) if *lw == w => *end = i + 1,
            _ => windows.push((w, i, i + 1)),
        }
    }

    let mut hot: Vec<(f64, f64)> = Vec::new();
    for &(w, start, end) in &windows {
        if interest(&stream[start..end]) {
            let lo = t0 + w as f64 * base_period_s - burst_radius_s;
            let hi = t0 + (w + 1) as f64 * base_period_s + burst_radius_s;
            match hot.last_mut() {
                Some((_, h)) if lo <= *h => *h = h.max(hi),
                _ => hot.push((lo, hi)),
            }
        }
    }

    let mut out = Vec::new();
    let mut hot_idx = 0;
    let mut last_window: Option<i64> = None;
    for r in stream {
        let t = r.t();
        while hot_idx < hot.len() && hot[hot_idx].1 < t {
            hot_idx += 1;
        }
        let in_burst = hot_idx < hot.len() && hot[hot_idx].0 <= t;
        let w = window_of(t);
        if in_burst || last_window != Some(w) {
            out.push(r.clone());
            last_window = Some(w);
        }
    }
    out
}
