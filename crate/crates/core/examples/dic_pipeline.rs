//! Tracked-marker pipeline: write a tracking CSV, ingest it, smooth the
//! scattered displacements with moving least squares, and resample them
//! onto a regular grid with cubic splines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tissue_ifno::data::{frames_to_samples, mls_smooth, parse_tracked_csv, spline_resample, write_tracked_csv, MlsConfig, TrackedFrames};

fn main() -> tissue_ifno::Result<()> {
    let (tx, ty) = (15, 15);
    let h = 5.5 / (tx - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 0.004).unwrap();
    let reference: Vec<[f64; 2]> = (0..tx * ty).map(|k| [(k / ty) as f64 * h, (k % ty) as f64 * h]).collect();
    let motion = |p: [f64; 2], t: f64| [p[0] + t * (0.06 * p[0] + 0.01 * p[1] * p[1]), p[1] + t * 0.03 * p[1]];
    let positions = (0..5)
        .map(|f| {
            reference
                .iter()
                .map(|&p| {
                    let q = motion(p, f as f64 / 4.0);
                    if f == 0 { q } else { [q[0] + noise.sample(&mut rng), q[1] + noise.sample(&mut rng)] }
                })
                .collect()
        })
        .collect();
    let frames = TrackedFrames {
        protocol_id: 1,
        fps: 15.0,
        mm_per_px: 0.02,
        dims: (tx, ty),
        frame_ids: (0..5).collect(),
        positions,
    };

    let mut csv = Vec::new();
    write_tracked_csv(&frames, &mut csv)?;
    let parsed = parse_tracked_csv(csv.as_slice())?;
    println!("ingested {} frames x {} markers ({} bytes of CSV)", parsed.num_frames(), parsed.num_nodes(), csv.len());

    let last = frames_to_samples(&parsed).pop().unwrap();
    let smoothed = mls_smooth(&last, &MlsConfig::default())?;
    let err = |s: &[[f64; 2]]| {
        s.iter()
            .zip(&reference)
            .map(|(u, &p)| {
                let q = motion(p, 1.0);
                (u[0] - (q[0] - p[0])).powi(2) + (u[1] - (q[1] - p[1])).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    };
    println!("displacement error: raw {:.4}, smoothed {:.4}", err(&last.displacement), err(&smoothed.displacement));

    let sample = spline_resample(&smoothed, 21, 21)?;
    println!(
        "resampled onto {}x{} nodes, boundary has {} nodes",
        sample.field.grid().nx,
        sample.field.grid().ny,
        sample.boundary.len()
    );
    Ok(())
}
