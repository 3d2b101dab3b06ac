//! Builds the block adjacency of a three-clip window and prints it next to
//! its temporal mask.

use stage::graph::{multi_clip_adjacency, proximity_adjacency, ClipGeometry};
use stage::{BoxGeometry, Matrix};

fn show(m: &Matrix) {
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:6.3}")).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> stage::Result<()> {
    let clip = |x: f64| -> stage::Result<Vec<BoxGeometry>> {
        Ok(vec![BoxGeometry::new(x, 0.2, x + 0.2, 0.6)?, BoxGeometry::from_center(x + 0.3, 0.5, 0.1, 0.1)?])
    };
    let boxes = [clip(0.1)?, clip(0.15)?, clip(0.2)?];

    println!("single clip:");
    show(&proximity_adjacency(&boxes[0]));

    let geometry: Vec<ClipGeometry> =
        boxes.iter().enumerate().map(|(t, b)| ClipGeometry { timestamp: 100 + t as i64, boxes: b }).collect();
    for rf in [1, 3, 5] {
        let multi = multi_clip_adjacency(&geometry, rf)?;
        println!("\ndirect field {rf}, clip offsets {:?}", multi.offsets);
        show(&multi.adjacency);
        println!("mask:");
        show(&multi.tmask);
    }
    Ok(())
}
