//! Tracked-node exports and their conversion to scattered displacement
//! samples.
//!
//! CSV layout: an optional metadata comment line
//! `# mm_per_px=0.02 grid=12x10 fps=5 protocol=3`, then the header
//! `frame_id,node_id,x,y` with pixel coordinates. Node `k` of a `tx × ty`
//! tracking grid sits at column `k / ty`, row `k % ty`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedFrames {
    pub protocol_id: u8,
    pub fps: f64,
    pub mm_per_px: f64,
    /// Tracking grid `(tx, ty)`.
    pub dims: (usize, usize),
    pub frame_ids: Vec<u64>,
    /// `[frame][node]` positions in mm.
    pub positions: Vec<Vec<[f64; 2]>>,
}

impl TrackedFrames {
    pub fn num_frames(&self) -> usize {
        self.positions.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.dims.0 * self.dims.1
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_frames(), self.num_nodes())
    }
}

/// Displacements at scattered material points of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteredSample {
    pub dims: (usize, usize),
    /// Reference (frame 0) positions.
    pub reference: Vec<[f64; 2]>,
    pub displacement: Vec<[f64; 2]>,
    /// Outer-ring node ids, counterclockwise from the first corner.
    pub boundary: Vec<usize>,
    pub protocol_id: u8,
    pub frame_index: usize,
    pub provenance: Provenance,
}

impl ScatteredSample {
    pub fn boundary_values(&self) -> Vec<[f64; 2]> {
        self.boundary.iter().map(|&k| self.displacement[k]).collect()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    frame_id: u64,
    node_id: usize,
    x: f64,
    y: f64,
}

struct Meta {
    mm_per_px: f64,
    dims: Option<(usize, usize)>,
    fps: f64,
    protocol: u8,
}

fn parse_meta(line: &str) -> Result<Meta> {
    let mut m = Meta {
        mm_per_px: 1.0,
        dims: None,
        fps: 5.0,
        protocol: 1,
    };
    let bad = |k: &str, v: &str| Error::Data(format!("bad metadata value {k}={v}"));
    for tok in line.trim_start_matches('#').split_whitespace() {
        let Some((k, v)) = tok.split_once('=') else {
            continue;
        };
        match k {
            "mm_per_px" => m.mm_per_px = v.parse().map_err(|_| bad(k, v))?,
            "fps" => m.fps = v.parse().map_err(|_| bad(k, v))?,
            "protocol" => m.protocol = v.parse().map_err(|_| bad(k, v))?,
            "grid" => {
                let (a, b) = v.split_once(['x', 'X']).ok_or_else(|| bad(k, v))?;
                m.dims = Some((a.parse().map_err(|_| bad(k, v))?, b.parse().map_err(|_| bad(k, v))?));
            }
            _ => {}
        }
    }
    if !(m.mm_per_px > 0.0 && m.mm_per_px.is_finite()) {
        return Err(Error::Data(format!("mm_per_px must be positive, got {}", m.mm_per_px)));
    }
    Ok(m)
}

pub fn parse_tracked_csv<R: Read>(mut r: R) -> Result<TrackedFrames> {
    let mut text = String::new();
    r.read_to_string(&mut text).map_err(|e| Error::io("<tracked csv>", e))?;
    let mut meta = parse_meta("")?;
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        if line.trim_start().starts_with('#') {
            meta = parse_meta(line)?;
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let mut frame_ids: Vec<u64> = Vec::new();
    let mut frames: Vec<Vec<Option<[f64; 2]>>> = Vec::new();
    for row in rd.deserialize() {
        let row: Row = row?;
        if !(row.x.is_finite() && row.y.is_finite()) {
            return Err(Error::Data(format!("non-finite coordinate in frame {} node {}", row.frame_id, row.node_id)));
        }
        match frame_ids.last() {
            Some(&last) if row.frame_id == last => {}
            Some(&last) if row.frame_id < last => {
                return Err(Error::Data(format!("frame ids are not monotone: {} after {last}", row.frame_id)));
            }
            _ => {
                frame_ids.push(row.frame_id);
                frames.push(Vec::new());
            }
        }
        let f = frames.last_mut().unwrap();
        if f.len() <= row.node_id {
            f.resize(row.node_id + 1, None);
        }
        if f[row.node_id].is_some() {
            return Err(Error::Data(format!("node {} repeated in frame {}", row.node_id, row.frame_id)));
        }
        f[row.node_id] = Some([row.x * meta.mm_per_px, row.y * meta.mm_per_px]);
    }
    if frames.is_empty() {
        return Err(Error::Data("tracked CSV contains no rows".into()));
    }
    let n = frames.iter().map(|f| f.len()).max().unwrap();
    let dims = match meta.dims {
        Some(d) => d,
        None => {
            let s = (n as f64).sqrt().round() as usize;
            if s * s != n {
                return Err(Error::Data(format!("{n} nodes do not form a square grid; add grid=NXxNY metadata")));
            }
            (s, s)
        }
    };
    if dims.0 * dims.1 != n || dims.0 < 2 || dims.1 < 2 {
        return Err(Error::Data(format!("grid {}x{} does not match {n} tracked nodes", dims.0, dims.1)));
    }
    let mut positions = Vec::with_capacity(frames.len());
    for (fid, f) in frame_ids.iter().zip(frames) {
        let missing: Vec<usize> = (0..n).filter(|&k| f.get(k).is_none_or(|v| v.is_none())).collect();
        if !missing.is_empty() {
            return Err(Error::Data(format!("frame {fid} is missing nodes {missing:?}")));
        }
        positions.push(f.into_iter().map(Option::unwrap).collect());
    }
    Ok(TrackedFrames {
        protocol_id: meta.protocol,
        fps: meta.fps,
        mm_per_px: meta.mm_per_px,
        dims,
        frame_ids,
        positions,
    })
}

pub fn ingest_tracked_csv(path: &Path) -> Result<TrackedFrames> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tracked_csv(std::io::BufReader::new(f))
}

/// Writes frames in the ingest format (coordinates converted back to pixels).
pub fn write_tracked_csv<W: Write>(frames: &TrackedFrames, mut w: W) -> Result<()> {
    let io = |e| Error::io("<tracked csv>", e);
    writeln!(
        w,
        "# mm_per_px={} grid={}x{} fps={} protocol={}",
        frames.mm_per_px, frames.dims.0, frames.dims.1, frames.fps, frames.protocol_id
    )
    .map_err(io)?;
    let mut wr = csv::Writer::from_writer(w);
    for (fid, pos) in frames.frame_ids.iter().zip(&frames.positions) {
        for (k, p) in pos.iter().enumerate() {
            wr.serialize(Row {
                frame_id: *fid,
                node_id: k,
                x: p[0] / frames.mm_per_px,
                y: p[1] / frames.mm_per_px,
            })?;
        }
    }
    wr.flush().map_err(io)
}

/// Outer ring of a `tx × ty` tracking grid in counterclockwise order.
pub fn ring_nodes(dims: (usize, usize)) -> Vec<usize> {
    let g = GridSpec::unit(dims.0, dims.1).expect("tracking grid has at least 2x2 nodes");
    g.boundary_nodes().into_iter().map(|(i, j)| i * dims.1 + j).collect()
}

/// One sample per frame: displacement relative to frame 0, boundary taken
/// from the outer ring of the tracking grid.
pub fn frames_to_samples(frames: &TrackedFrames) -> Vec<ScatteredSample> {
    let reference = frames.positions[0].clone();
    let boundary = ring_nodes(frames.dims);
    frames
        .positions
        .iter()
        .enumerate()
        .map(|(f, pos)| ScatteredSample {
            dims: frames.dims,
            reference: reference.clone(),
            displacement: pos.iter().zip(&reference).map(|(p, r)| [p[0] - r[0], p[1] - r[1]]).collect(),
            boundary: boundary.clone(),
            protocol_id: frames.protocol_id,
            frame_index: f,
            provenance: Provenance::Original,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_frames(map: impl Fn(f64, f64) -> [f64; 2]) -> TrackedFrames {
        let dims = (4, 3);
        let refp: Vec<[f64; 2]> = (0..12).map(|k| [(k / 3) as f64 * 2.0 + 10.0, (k % 3) as f64 * 2.0 + 10.0]).collect();
        let moved = refp.iter().map(|p| map(p[0], p[1])).collect();
        TrackedFrames {
            protocol_id: 2,
            fps: 5.0,
            mm_per_px: 1.0,
            dims,
            frame_ids: vec![0, 1],
            positions: vec![refp, moved],
        }
    }

    #[test]
    fn parses_two_frames_of_four_nodes() {
        let csv = "# mm_per_px=0.5 grid=2x2 fps=5 protocol=4\nframe_id,node_id,x,y\n\
                   0,0,20,20\n0,1,20,40\n0,2,40,20\n0,3,40,40\n\
                   3,1,20,40\n3,0,21,20.4\n3,2,40,20\n3,3,40,40\n";
        let f = parse_tracked_csv(csv.as_bytes()).unwrap();
        assert_eq!(f.shape(), (2, 4));
        assert_eq!(f.protocol_id, 4);
        assert_eq!(f.positions[0][0], [10.0, 10.0]);
        let s = frames_to_samples(&f);
        assert_eq!(s.len(), 2);
        assert!(s[0].displacement.iter().all(|d| *d == [0.0, 0.0]));
        let d = s[1].displacement[0];
        assert!((d[0] - 0.5).abs() < 1e-12 && (d[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn structural_errors_are_reported() {
        let missing = "frame_id,node_id,x,y\n0,0,0,0\n0,1,1,0\n0,2,0,1\n0,3,1,1\n1,0,0,0\n1,1,1,0\n1,3,1,1\n";
        let e = parse_tracked_csv(missing.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("missing nodes [2]"), "{e}");
        let backwards = "frame_id,node_id,x,y\n1,0,0,0\n1,1,1,0\n1,2,0,1\n1,3,1,1\n0,0,0,0\n";
        assert!(parse_tracked_csv(backwards.as_bytes()).unwrap_err().to_string().contains("monotone"));
    }

    #[test]
    fn csv_roundtrip() {
        let f = square_frames(|x, y| [1.1 * x, 1.05 * y]);
        let mut buf = Vec::new();
        write_tracked_csv(&f, &mut buf).unwrap();
        let g = parse_tracked_csv(buf.as_slice()).unwrap();
        assert_eq!(g, f);
    }

    #[test]
    fn translation_and_affine_maps() {
        let f = square_frames(|x, y| [x + 0.3, y - 0.7]);
        let s = frames_to_samples(&f);
        for d in &s[1].displacement {
            assert!((d[0] - 0.3).abs() < 1e-12 && (d[1] + 0.7).abs() < 1e-12);
        }
        let f = square_frames(|x, y| [1.1 * x, 1.05 * y]);
        let s = frames_to_samples(&f);
        for (d, r) in s[1].displacement.iter().zip(&s[1].reference) {
            assert!((d[0] - 0.1 * r[0]).abs() < 1e-12 && (d[1] - 0.05 * r[1]).abs() < 1e-12);
        }
        assert_eq!(s[1].boundary.len(), 2 * (4 + 3) - 4);
    }
}
