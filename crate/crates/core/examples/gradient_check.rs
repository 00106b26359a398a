//! Compare the analytic loss gradient with central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symspot::anchors::AnchorSet;
use symspot::head::{loss_and_grad, HeadConfig, LossWeights, RawPrediction};
use symspot::tiler::Annotation;
use symspot::BBox;

fn main() -> symspot::Result<()> {
    let head = HeadConfig::new(2, 2, 3, AnchorSet::new(vec![[12.0, 12.0], [40.0, 24.0]])?, 64.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = head.grid_h * head.grid_w * head.channels();
    let raw = RawPrediction::from_values(2, 2, head.channels(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect())?;
    let truth = vec![
        Annotation::new(0, "a", BBox::new(4.0, 6.0, 14.0, 10.0)),
        Annotation::new(2, "b", BBox::new(30.0, 28.0, 30.0, 22.0)),
    ];
    let w = LossWeights::default();
    let out = loss_and_grad(&raw, &truth, &head, &w)?;
    println!("loss {:.6} = coord {:.6} + obj {:.6} + noobj {:.6} + class {:.6}",
        out.loss, out.terms.coord, out.terms.obj, out.terms.noobj, out.terms.class);

    let eps = 1e-4;
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut p = raw.clone();
        p.values[i] += eps;
        let mut m = raw.clone();
        m.values[i] -= eps;
        let numeric = (loss_and_grad(&p, &truth, &head, &w)?.loss - loss_and_grad(&m, &truth, &head, &w)?.loss) / (2.0 * eps);
        let a = out.grad.values[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    println!("{n} entries, max relative error {worst:.2e}");
    Ok(())
}
