//! Turns a small heatmap lattice into point prompts and shows the box each
//! post-processing mode adds for a given previous mask.
//!
//! cargo run --example visual_prompts

use genprompt::visual_prompts::{assemble_prompts, extract_points, BinaryMask, PostMode};
use ndarray::{array, Array2};

fn main() -> genprompt::Result<()> {
    let lattice = array![
        [0.10, 0.20, 0.15, 0.05],
        [0.30, 0.95, 0.92, 0.10],
        [0.25, 0.91, 1.00, 0.00],
        [0.05, 0.20, 0.35, 0.12],
    ];
    let points = extract_points(lattice.view(), 0.9, (64, 64))?;
    println!("positives {:?}", points.positives);
    println!("negatives {:?}", points.negatives);

    // a blob in the middle plus a stray pixel cluster in the corner
    let prev = BinaryMask::new(Array2::from_shape_fn((64, 64), |(r, c)| {
        (16..44).contains(&r) && (18..46).contains(&c) || (r < 3 && c < 3)
    }));
    for mode in PostMode::ALL {
        let p = assemble_prompts(points.clone(), Some(&prev), mode);
        println!("{:>9}: box {:?}, dense mask {}", mode.as_str(), p.bbox, p.prev_mask.is_some());
    }
    Ok(())
}
