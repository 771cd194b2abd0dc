//! Closed-form bytes moved per force evaluation by the materializing and the
//! fused pipeline, over a range of neighbor counts.

use flashcg::model::ModelConfig;
use flashcg::traffic::{io_breakdown_base, io_breakdown_flash, io_model_base, io_model_flash, IoDims, Stage};

fn main() {
    let config = ModelConfig::default();
    let n = 1000;
    println!("{:>6} {:>14} {:>14} {:>7}", "E/N", "base B", "flash B", "ratio");
    for per_bead in [5, 10, 20, 40, 80] {
        let dims = IoDims::new(n, n * per_bead, &config, 4, false);
        let (b, f) = (io_model_base(&dims), io_model_flash(&dims));
        println!("{per_bead:>6} {b:>14} {f:>14} {:>7.2}", b as f64 / f as f64);
    }
    let dims = IoDims::new(n, 40 * n, &config, 4, false);
    let (base, flash) = (io_breakdown_base(&dims), io_breakdown_flash(&dims));
    println!("\nper stage at E/N = 40");
    for s in Stage::ALL {
        println!("{:<16} {:>14} {:>14}", s.name(), base.stage(s).total(), flash.stage(s).total());
    }
}
