//! Run one of the four generalization studies end to end and write the
//! report files.
//!
//! cargo run --release --example study -- [study] [out_dir]

use tissue_ifno::config::PipelineConfig;
use tissue_ifno::data::generate_synthetic;
use tissue_ifno::ifno::IfnoConfig;
use tissue_ifno::study::{emit_report, run_study};

fn main() -> tissue_ifno::Result<()> {
    let mut args = std::env::args().skip(1);
    let study: u8 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let out = args.next().unwrap_or_else(|| format!("out/study{study}"));

    let mut cfg = PipelineConfig::default();
    cfg.synthetic.nx = 11;
    cfg.synthetic.ny = 11;
    cfg.synthetic.n_samples = 35;
    cfg.train.model = IfnoConfig {
        width: 8,
        proj_width: 32,
        ..IfnoConfig::default()
    };
    cfg.train.epochs_per_depth = 100;
    cfg.train.batch_size = Some(1);

    let ds = generate_synthetic(&cfg.synthetic)?;
    let outcome = run_study(study, &ds, &cfg, Some(format!("{out}/artifacts").as_ref()))?;
    print!("{}", outcome.report.render_table());
    for (stage, secs) in &outcome.timing {
        println!("  {stage:<16} {secs:7.2}s");
    }
    emit_report(&outcome, out.as_ref())?;
    println!("report written to {out}");
    Ok(())
}
