//! Cross-tile duplicate removal on hand-made cases.

use symspot::geometry::overlap_fraction_of_smaller;
use symspot::merger::{merge_detections, MergeConfig};
use symspot::{BBox, Detection};

fn det(x: f64, y: f64, w: f64, h: f64, score: f64) -> Detection {
    Detection { class_id: 0, bbox: BBox::new(x, y, w, h), score }
}

fn show(title: &str, dets: &[Detection], cfg: &MergeConfig) {
    println!("{title}");
    if let [a, b] = dets {
        println!("  overlap of smaller box: {:.3}", overlap_fraction_of_smaller(&a.bbox, &b.bbox).unwrap());
    }
    for d in merge_detections(dets, cfg) {
        println!("  kept {:?} score {}", d.bbox, d.score);
    }
}

fn main() {
    let cfg = MergeConfig::default();
    show("clear score gap", &[det(0.0, 0.0, 10.0, 10.0, 0.9), det(5.0, 0.0, 10.0, 10.0, 0.6)], &cfg);
    show("close scores, larger box wins", &[det(0.0, 0.0, 20.0, 20.0, 0.78), det(15.0, 0.0, 10.0, 10.0, 0.80)], &cfg);
    show("barely touching", &[det(0.0, 0.0, 10.0, 10.0, 0.9), det(9.5, 0.0, 10.0, 10.0, 0.6)], &cfg);

    // a chain: the middle box suppresses both neighbours only if it survives
    let chain = [det(0.0, 0.0, 30.0, 30.0, 0.5), det(20.0, 0.0, 30.0, 30.0, 0.9), det(40.0, 0.0, 30.0, 30.0, 0.7)];
    show("chain of three", &chain, &cfg);
    show("chain of three, threshold 0.5", &chain, &MergeConfig { overlap_threshold: 0.5, ..cfg });
}
