use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Schema line heading every scalar log.
pub const LOG_SCHEMA: &str = "# schema: flashcg-log v1";
pub const LOG_COLUMNS: &str = "step,replica,potential,prior,kinetic_t,total,wall_ms";
/// Columns whose values depend on the machine rather than the inputs.
pub const WALL_TIME_COLUMNS: &[&str] = &["wall_ms"];

/// One frame of one replica; coordinates in nm.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub step: u64,
    pub replica: usize,
    pub positions: Vec<[f64; 3]>,
}

/// Per-step scalars of one replica. Energies in kJ/mol, temperature in K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub replica: usize,
    pub potential: f64,
    pub prior: f64,
    pub kinetic_t: f64,
    /// Potential + prior + kinetic energy.
    pub total: f64,
    pub wall_ms: f64,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.9e},{:.9e},{:.6},{:.9e},{:.3}",
            self.step, self.replica, self.potential, self.prior, self.kinetic_t, self.total, self.wall_ms
        )
    }
}

/// Appends XYZ frames: bead count, a `step=S replica=R` comment, then one
/// `B<type> x y z` line per bead.
pub struct XyzWriter<W: Write> {
    out: W,
}

impl XyzWriter<BufWriter<std::fs::File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { out: BufWriter::new(f) })
    }
}

impl<W: Write> XyzWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, frame: &Frame, types: &[usize]) -> std::io::Result<()> {
        writeln!(self.out, "{}", frame.positions.len())?;
        writeln!(self.out, "step={} replica={}", frame.step, frame.replica)?;
        for (p, t) in frame.positions.iter().zip(types) {
            writeln!(self.out, "B{t} {:.6} {:.6} {:.6}", p[0], p[1], p[2])?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn parse_err(path: &Path, line: usize, reason: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.into(),
        reason: format!("line {line}: {reason}"),
    }
}

/// Reads every frame of an XYZ file written by [`XyzWriter`].
pub fn read_xyz(path: &Path) -> Result<Vec<Frame>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(f)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    parse_xyz(&lines, path)
}

pub fn parse_xyz(lines: &[String], path: &Path) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let n: usize = lines[i]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, "expected a bead count"))?;
        let comment = lines.get(i + 1).ok_or_else(|| parse_err(path, i + 2, "missing comment line"))?;
        let mut step = None;
        let mut replica = None;
        for tok in comment.split_whitespace() {
            if let Some(v) = tok.strip_prefix("step=") {
                step = v.parse().ok();
            } else if let Some(v) = tok.strip_prefix("replica=") {
                replica = v.parse().ok();
            }
        }
        let (Some(step), Some(replica)) = (step, replica) else {
            return Err(parse_err(path, i + 2, "comment must carry step= and replica="));
        };
        let mut positions = Vec::with_capacity(n);
        for k in 0..n {
            let ln = i + 2 + k;
            let line = lines.get(ln).ok_or_else(|| parse_err(path, ln + 1, "frame truncated"))?;
            let v: Vec<f64> = line
                .split_whitespace()
                .skip(1)
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(path, ln + 1, e))?;
            if v.len() != 3 {
                return Err(parse_err(path, ln + 1, "expected a label and three coordinates"));
            }
            positions.push([v[0], v[1], v[2]]);
        }
        frames.push(Frame {
            step,
            replica,
            positions,
        });
        i += 2 + n;
    }
    Ok(frames)
}

/// Scalar log writer with the schema and column header up front.
pub struct LogWriter<W: Write> {
    out: W,
}

impl LogWriter<BufWriter<std::fs::File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{LOG_SCHEMA}")?;
        writeln!(out, "{LOG_COLUMNS}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &LogRow) -> std::io::Result<()> {
        writeln!(self.out, "{}", row.to_csv())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_roundtrip() {
        let frames = vec![
            Frame {
                step: 0,
                replica: 0,
                positions: vec![[0.0, 1.0, 2.0], [0.5, -0.25, 3.125]],
            },
            Frame {
                step: 10,
                replica: 1,
                positions: vec![[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]],
            },
        ];
        let mut w = XyzWriter::new(Vec::new());
        for f in &frames {
            w.write(f, &[0, 3]).unwrap();
        }
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert!(text.starts_with("2\nstep=0 replica=0\nB0 0.000000 1.000000 2.000000\n"));
        let lines: Vec<String> = text.lines().map(String::from).collect();
        assert_eq!(parse_xyz(&lines, Path::new("t.xyz")).unwrap(), frames);
    }

    #[test]
    fn truncated_frame_is_an_error() {
        let lines: Vec<String> = ["3", "step=0 replica=0", "B0 0 0 0"].iter().map(|s| s.to_string()).collect();
        assert!(parse_xyz(&lines, Path::new("t.xyz")).is_err());
    }

    #[test]
    fn log_header() {
        let mut buf = Vec::new();
        {
            let mut w = LogWriter::new(&mut buf).unwrap();
            w.write(&LogRow {
                step: 1,
                replica: 0,
                potential: -1.0,
                prior: 0.5,
                kinetic_t: 300.0,
                total: 0.0,
                wall_ms: 1.5,
            })
            .unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], LOG_SCHEMA);
        assert_eq!(lines[1].split(',').count(), 7);
        assert_eq!(lines[2].split(',').count(), 7);
    }
}
