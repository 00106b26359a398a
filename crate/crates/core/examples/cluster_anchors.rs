//! Cluster anchor priors from the symbol sizes of a synthetic corpus.

use symspot::anchors::{cluster_anchors_traced, KMeansConfig};
use symspot::synthgen::{generate_plan, PlanSpec};

fn main() -> symspot::Result<()> {
    let mut sizes = Vec::new();
    for seed in 0..30 {
        let plan = generate_plan(&PlanSpec { seed, ..PlanSpec::default() })?;
        sizes.extend(plan.annotations.iter().map(|a| (a.bbox.w, a.bbox.h)));
    }
    println!("{} symbols", sizes.len());
    for k in [3, 5, 10] {
        let out = cluster_anchors_traced(&sizes, &KMeansConfig { k, seed: 1, max_iters: 100 })?;
        let last = out.distortion.last().copied().unwrap_or(0.0);
        println!(
            "k = {k:>2}: mean 1 - IoU {last:.4} after {} iterations (converged: {})",
            out.iterations, out.converged
        );
        let priors: Vec<String> = out.anchors.iter().map(|(w, h)| format!("{w:.1}x{h:.1}")).collect();
        println!("        {}", priors.join("  "));
    }
    Ok(())
}
