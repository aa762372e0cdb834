//! Regenerates `data/wage_synthetic.csv`: 1000 synthetic workers whose log
//! wage returns 0.08 per year of schooling. Unobserved ability raises both
//! schooling and wages, so OLS overstates the return; distance to college
//! and quarter of birth shift schooling but not wages.
//!
//! cargo run -p convexiv --example make_wage_data [-- OUT.csv]

use std::fs::File;
use std::io::{BufWriter, Write};

use convexiv::io::exact;
use convexiv_core::rng::{index_below, standard_normal, stream, Domain};

const ROWS: usize = 1000;
const SEED: u64 = 20_080;
const RETURN_TO_EDUC: f64 = 0.08;

fn main() -> std::io::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/wage_synthetic.csv").to_string());
    let mut rng = stream(SEED, Domain::Simulation, 0);
    let mut out = BufWriter::new(File::create(&path)?);
    writeln!(out, "lwage,educ,exper,distcol,q2,q3,q4")?;
    for _ in 0..ROWS {
        let ability = standard_normal(&mut rng);
        let quarter = index_below(&mut rng, 4) + 1;
        let distcol = (1.0 + standard_normal(&mut rng)).abs();
        let exper = 5.0 + index_below(&mut rng, 26) as f64;
        let q = |k| if quarter == k { 1.0 } else { 0.0 };
        let educ = (13.5 - 1.2 * distcol + 0.3 * q(2) + 0.4 * q(3) + 0.5 * q(4) + 1.0 * ability
            + 1.2 * standard_normal(&mut rng))
        .round()
        .clamp(6.0, 20.0);
        let lwage = 1.2 + RETURN_TO_EDUC * educ + 0.02 * exper + 0.15 * ability + 0.35 * standard_normal(&mut rng);
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            exact(lwage),
            exact(educ),
            exact(exper),
            exact(distcol),
            exact(q(2)),
            exact(q(3)),
            exact(q(4))
        )?;
    }
    out.flush()
}
