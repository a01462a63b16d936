//! Output files: provenance headers, field files and the study plot.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qcyield_core::study::CurvePoint;
use qcyield_core::{fieldio, GridField, StudyRecord};

use crate::CliError;

/// Version and configuration hash stamped on every text output.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub version: &'static str,
    pub config_hash: String,
    pub command: String,
}

impl Provenance {
    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("qcyield {} {}", self.version, self.command),
            format!("config sha256 {}", self.config_hash),
        ]
    }

    pub fn write_comments(&self, mut w: impl Write) -> std::io::Result<()> {
        for l in self.lines() {
            writeln!(w, "# {l}")?;
        }
        Ok(())
    }
}

pub struct OutDir {
    pub dir: PathBuf,
    pub prov: Provenance,
    pub binary_fields: bool,
}

impl OutDir {
    pub fn create(dir: &Path, prov: Provenance, binary_fields: bool) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            prov,
            binary_fields,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn writer(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    /// A text file starting with the provenance comments.
    pub fn text(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let mut w = self.writer(name)?;
        self.prov.write_comments(&mut w)?;
        Ok(w)
    }

    /// JSON cannot carry comments, so the provenance goes in a field.
    pub fn json(&self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let mut v = value.clone();
        if let Some(map) = v.as_object_mut() {
            map.insert(
                "provenance".into(),
                serde_json::json!({
                    "version": self.prov.version,
                    "command": self.prov.command,
                    "config_sha256": self.prov.config_hash,
                }),
            );
        }
        let mut w = self.writer(name)?;
        serde_json::to_writer_pretty(&mut w, &v).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes `stem.csv`, or `stem.gfld` when binary fields are requested.
    pub fn field(&self, stem: &str, field: &GridField) -> Result<PathBuf, CliError> {
        let name = if self.binary_fields {
            format!("{stem}.gfld")
        } else {
            format!("{stem}.csv")
        };
        let mut w = self.writer(&name)?;
        if self.binary_fields {
            fieldio::write_binary(field, &mut w)?;
        } else {
            fieldio::write_csv(field, &self.prov.lines(), &mut w)?;
        }
        w.flush()?;
        Ok(self.path(&name))
    }
}

/// Scatter of the study records with the fitted curves and their bands.
pub fn study_svg(records: &[StudyRecord], curve: &[CurvePoint]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 480.0;
    const PAD: f64 = 60.0;
    let ok: Vec<&StudyRecord> = records.iter().filter(|r| r.is_usable()).collect();
    let xs = ok.iter().map(|r| r.s as f64).chain(curve.iter().map(|c| c.s));
    let ys = ok
        .iter()
        .flat_map(|r| [r.delta1, r.delta2])
        .chain(curve.iter().flat_map(|c| [c.delta1_lo, c.delta2_up]));
    let (x0, x1) = bounds(xs);
    let (y0, y1) = bounds(ys);
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        out += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x:.0}</text>\n",
            px(x),
            H - PAD + 18.0
        );
        out += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{y:.3}</text>\n",
            PAD - 6.0,
            py(y) + 4.0
        );
    }
    out += &format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">aggregation index s</text>\n",
        W / 2.0,
        H - 16.0
    );
    let polyline = |pts: Vec<(f64, f64)>, style: &str| {
        let p: Vec<String> = pts
            .into_iter()
            .map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        format!("<polyline fill=\"none\" {style} points=\"{}\"/>\n", p.join(" "))
    };
    for r in &ok {
        out += &format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"steelblue\"/>\n",
            px(r.s as f64),
            py(r.delta1)
        );
        out += &format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"firebrick\"/>\n",
            px(r.s as f64),
            py(r.delta2)
        );
    }
    out += &polyline(
        curve.iter().map(|c| (c.s, c.delta1_fit)).collect(),
        "stroke=\"steelblue\" stroke-width=\"1.5\"",
    );
    out += &polyline(
        curve.iter().map(|c| (c.s, c.delta1_lo)).collect(),
        "stroke=\"steelblue\" stroke-dasharray=\"4 3\"",
    );
    out += &polyline(
        curve.iter().map(|c| (c.s, c.delta2_fit)).collect(),
        "stroke=\"firebrick\" stroke-width=\"1.5\"",
    );
    out += &polyline(
        curve.iter().map(|c| (c.s, c.delta2_up)).collect(),
        "stroke=\"firebrick\" stroke-dasharray=\"4 3\"",
    );
    out += &format!(
        "<text x=\"{x:.1}\" y=\"{:.1}\" fill=\"steelblue\">delta1</text>\n\
         <text x=\"{x:.1}\" y=\"{:.1}\" fill=\"firebrick\">delta2</text>\n</svg>\n",
        PAD + 16.0,
        PAD + 32.0,
        x = PAD + 10.0
    );
    out
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !(lo < hi) {
        let c = if lo.is_finite() { lo } else { 0.0 };
        return (c - 1.0, c + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}
