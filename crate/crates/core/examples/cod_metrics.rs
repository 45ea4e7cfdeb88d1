//! Scores a few prediction maps against one ground truth with the four
//! detection metrics.
//!
//! cargo run --example cod_metrics

use genprompt::metrics::evaluate;
use genprompt::visual_prompts::BinaryMask;
use ndarray::Array2;

fn main() -> genprompt::Result<()> {
    let (h, w) = (48, 64);
    let disk = |cy: f64, cx: f64, r: f64| {
        Array2::from_shape_fn((h, w), |(y, x)| (y as f64 - cy).hypot(x as f64 - cx) <= r)
    };
    let gt = BinaryMask::new(disk(24.0, 32.0, 12.0));
    let soft = Array2::from_shape_fn((h, w), |(y, x)| (-((y as f64 - 24.0).hypot(x as f64 - 34.0) / 10.0).powi(2)).exp());
    let candidates = [
        ("exact", gt.to_f64()),
        ("shifted", BinaryMask::new(disk(26.0, 38.0, 12.0)).to_f64()),
        ("too small", BinaryMask::new(disk(24.0, 32.0, 6.0)).to_f64()),
        ("soft", soft),
        ("empty", Array2::zeros((h, w))),
    ];
    println!("{:>10}  {:>6} {:>6} {:>6} {:>6}", "", "M", "F_b", "E_phi", "S_a");
    for (name, pred) in candidates {
        let m = evaluate(pred.view(), &gt)?;
        println!("{name:>10}  {:.4} {:.4} {:.4} {:.4}", m.mae, m.f_beta, m.e_phi, m.s_alpha);
    }
    Ok(())
}
