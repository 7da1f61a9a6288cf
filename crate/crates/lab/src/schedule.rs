/// Linear warmup from 0 to `base` over `warmup` steps, then linear decay to 0
/// at step `total - 1`.
pub fn lr_at(step: usize, total: usize, warmup: usize, base: f64) -> f64 {
    if total <= 1 {
        return 0.0;
    }
    let last = total - 1;
    let step = step.min(last);
    let warmup = warmup.min(last);
    if step < warmup {
        base * step as f64 / warmup as f64
    } else if last == warmup {
        base
    } else {
        base * (last - step) as f64 / (last - warmup) as f64
    }
}
