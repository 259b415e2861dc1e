//! Paired Wilcoxon signed-rank test over per-split rewards of two settings.

use chatdqn::stats::wilcoxon_signed_rank;

fn main() -> chatdqn::Result<()> {
    let d100 = [2.1, 3.4, 1.8, 4.0, 2.9, 3.3, 2.2, 3.9];
    let d300 = [2.6, 3.9, 2.0, 4.4, 3.0, 3.1, 2.9, 4.5];
    let r = wilcoxon_signed_rank(&d100, &d300)?;
    println!("n={} W={} p={:.5} significant={}", r.n, r.w, r.p_value, r.significant_at_0_05);
    Ok(())
}
