// Load a shipped scenario, run the full pipeline and write the report.

use geolab::pipeline::run_pipeline;
use geolab::report::{emit_report, Format};
use geolab::scenario::{list_scenarios, parse_scenario, shipped_dir};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for (name, _) in list_scenarios(&shipped_dir())? {
        println!("shipped: {name}");
    }
    let s = parse_scenario(&shipped_dir().join("split-product.toml"))?;
    let r = run_pipeline(&s)?;
    for n in &r.stages {
        println!("{:<12} {:?}: {}", n.stage, n.status, n.message);
    }
    let dir = std::env::temp_dir().join("geolab-example");
    for f in emit_report(&r, &dir, Format::Json)?
        .into_iter()
        .chain(emit_report(&r, &dir, Format::Csv)?)
    {
        println!("wrote {}", f.display());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
