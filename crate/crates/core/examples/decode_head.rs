//! Encode detections into a grid prediction tensor and decode them back.

use symspot::anchors::AnchorSet;
use symspot::head::{decode, encode_detections, Detection, HeadConfig};
use symspot::BBox;

fn main() -> symspot::Result<()> {
    let anchors = AnchorSet::new(vec![[20.0, 20.0], [60.0, 30.0], [30.0, 60.0]])?;
    let head = HeadConfig::new(7, 7, 4, anchors, 227.0)?;
    println!("grid {}x{}, {} channels per cell", head.grid_h, head.grid_w, head.channels());

    let dets = vec![
        Detection { class_id: 0, bbox: BBox::new(12.0, 30.0, 36.0, 36.0), score: 0.92 },
        Detection { class_id: 3, bbox: BBox::new(120.0, 40.0, 70.0, 30.0), score: 0.61 },
        Detection { class_id: 2, bbox: BBox::new(150.0, 150.0, 24.0, 56.0), score: 0.35 },
    ];
    let raw = encode_detections(&dets, &head)?;
    for d in &dets {
        println!("{:?} -> slot {}", d.bbox, head.slot_for(&d.bbox));
    }

    for threshold in [0.25, 0.5] {
        let back = decode(&raw, &head, threshold)?;
        println!("threshold {threshold}: {} detections", back.len());
        for d in back {
            let b = d.bbox;
            println!("  class {} ({:.3}, {:.3}, {:.3}, {:.3}) score {:.4}", d.class_id, b.x, b.y, b.w, b.h, d.score);
        }
    }

    // two boxes claiming the same slot cannot both be encoded
    let clash = [dets[0], Detection { score: 0.5, ..dets[0] }];
    println!("collision: {}", encode_detections(&clash, &head).unwrap_err());
    Ok(())
}
