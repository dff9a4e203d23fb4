use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use aeroscene_core::geometry::LabeledPointCloud;

pub const CLOUD_FILE: &str = "cloud.txt";
pub const FIELDS: &str = "x y z label r g b";

/// ASCII point cloud: a comment, `count N`, `fields x y z label r g b`, then
/// one point per line. Points without a label get `-1`.
pub fn write_cloud(path: &Path, cloud: &LabeledPointCloud) -> std::io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "# aeroscene point cloud, camera frame, meters")?;
    writeln!(out, "count {}", cloud.len())?;
    writeln!(out, "fields {FIELDS}")?;
    for ((p, label), [r, g, b]) in cloud.points.iter().zip(&cloud.labels).zip(&cloud.colors) {
        let label = label.map_or(-1, i32::from);
        writeln!(out, "{:.6} {:.6} {:.6} {label} {r} {g} {b}", p.x, p.y, p.z)?;
    }
    out.flush()
}
