use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::access::{FeatureVector, FEATURE_NAMES, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::kernel_model::{check_instance, KernelInstance, LaunchConfig, StencilPattern, TemplateParams};

use super::{LabeledInstance, Skipped};

const KEY_COLUMNS: [&str; 19] = [
    "pattern",
    "in_h",
    "in_w",
    "out_h",
    "out_w",
    "n",
    "m",
    "stencil",
    "radius",
    "num_comp_ilb",
    "num_comp_ep",
    "num_coal_ilb",
    "num_coal_ep",
    "num_uncoal_ilb",
    "num_uncoal_ep",
    "grid_x",
    "grid_y",
    "wg_x",
    "wg_y",
];

const NUM_COLUMNS: usize = KEY_COLUMNS.len() + NUM_FEATURES + 2;

/// Column names in file order: instance key, the 18 features, label.
pub fn csv_header() -> Vec<&'static str> {
    KEY_COLUMNS.iter().chain(FEATURE_NAMES.iter()).chain(["speedup", "beneficial"].iter()).copied().collect()
}

/// The header line, without terminator.
pub static CSV_HEADER: std::sync::LazyLock<String> = std::sync::LazyLock::new(|| csv_header().join(","));

fn record(row: &LabeledInstance) -> Vec<String> {
    let p = &row.instance.params;
    let l = &row.instance.launch;
    let mut out: Vec<String> = vec![p.pattern.name().to_string()];
    out.extend(
        [p.in_h, p.in_w, p.out_h, p.out_w, p.n, p.m]
            .iter()
            .map(u32::to_string),
    );
    out.push(p.stencil.shape.name().to_string());
    out.extend(
        [
            p.stencil.radius,
            p.num_comp_ilb,
            p.num_comp_ep,
            p.num_coal_ilb,
            p.num_coal_ep,
            p.num_uncoal_ilb,
            p.num_uncoal_ep,
            l.grid_x,
            l.grid_y,
            l.wg_x,
            l.wg_y,
        ]
        .iter()
        .map(u32::to_string),
    );
    // `{}` on f64 prints the shortest string that parses back to the same bits.
    out.extend(row.features.to_array().iter().map(|v| format!("{v}")));
    out.push(format!("{}", row.speedup));
    out.push(row.beneficial.to_string());
    out
}

pub fn write_rows(path: &Path, rows: &[LabeledInstance]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    let io_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(csv_header()).map_err(io_err)?;
    for row in rows {
        w.write_record(record(row)).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_row(fields: &csv::StringRecord) -> std::result::Result<LabeledInstance, String> {
    if fields.len() != NUM_COLUMNS {
        return Err(format!("expected {NUM_COLUMNS} columns, found {}", fields.len()));
    }
    let int = |i: usize| -> std::result::Result<u32, String> {
        fields[i].parse().map_err(|_| format!("column `{}`: bad integer `{}`", csv_header()[i], &fields[i]))
    };
    let real = |i: usize| -> std::result::Result<f64, String> {
        fields[i].parse().map_err(|_| format!("column `{}`: bad number `{}`", csv_header()[i], &fields[i]))
    };
    let params = TemplateParams {
        pattern: fields[0].parse().map_err(|e: Error| e.to_string())?,
        in_h: int(1)?,
        in_w: int(2)?,
        out_h: int(3)?,
        out_w: int(4)?,
        n: int(5)?,
        m: int(6)?,
        stencil: StencilPattern::new(fields[7].parse().map_err(|e: Error| e.to_string())?, int(8)?),
        num_comp_ilb: int(9)?,
        num_comp_ep: int(10)?,
        num_coal_ilb: int(11)?,
        num_coal_ep: int(12)?,
        num_uncoal_ilb: int(13)?,
        num_uncoal_ep: int(14)?,
    };
    let launch = LaunchConfig::new(int(15)?, int(16)?, int(17)?, int(18)?);
    let instance = KernelInstance::new(params, launch);
    check_instance(&instance).map_err(|e| e.to_string())?;

    let base = KEY_COLUMNS.len();
    let mut feats = [0.0; NUM_FEATURES];
    for (k, f) in feats.iter_mut().enumerate() {
        *f = real(base + k)?;
    }
    let features = FeatureVector::from_array(feats);
    features.check(u64::MAX)?;
    let speedup = real(base + NUM_FEATURES)?;
    if !(speedup >= 0.0 && speedup.is_finite()) {
        return Err(format!("speedup {speedup} is not a finite non-negative number"));
    }
    let beneficial: bool = fields[base + NUM_FEATURES + 1]
        .parse()
        .map_err(|_| format!("column `beneficial`: bad boolean `{}`", &fields[base + NUM_FEATURES + 1]))?;
    if beneficial != (speedup > 1.0) {
        return Err(format!("beneficial={beneficial} contradicts speedup {speedup}"));
    }
    Ok(LabeledInstance { instance, features, speedup, beneficial })
}

pub fn read_rows(path: &Path) -> Result<Vec<LabeledInstance>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
    let malformed = |line: u64, message: String| Error::Malformed { path: path.to_path_buf(), line, message };
    let mut rows = Vec::new();
    let mut header_seen = false;
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if !header_seen {
            let got: Vec<&str> = rec.iter().collect();
            if got != csv_header() {
                return Err(malformed(line, "header does not match the dataset schema".into()));
            }
            header_seen = true;
            continue;
        }
        rows.push(parse_row(&rec).map_err(|m| malformed(line, m))?);
    }
    if !header_seen {
        return Err(malformed(1, "missing header".into()));
    }
    Ok(rows)
}

/// Short human-readable instance key.
pub fn instance_key(inst: &KernelInstance) -> String {
    let p = &inst.params;
    let l = &inst.launch;
    format!(
        "{} n={} m={} {}{} grid={}x{} wg={}x{}",
        p.pattern, p.n, p.m, p.stencil.shape, p.stencil.radius, l.grid_x, l.grid_y, l.wg_x, l.wg_y
    )
}

/// One line per skipped instance: key, tab, reason.
pub fn write_skip_log(path: &Path, skipped: &[Skipped]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in skipped {
        writeln!(w, "{}\t{}", instance_key(&s.instance), s.reason).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a `key = value` instance description using the dataset key
/// column names. Template keys left out take their defaults; the four
/// launch keys are required.
pub fn parse_instance(text: &str) -> Result<KernelInstance> {
    let mut p = TemplateParams::default();
    let mut launch = [None::<u32>; 4];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse(format!("line {}: {m}", i + 1));
        let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, found `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        let int = || v.parse::<u32>().map_err(|_| err(format!("{k}: bad integer `{v}`")));
        match k {
            "pattern" => p.pattern = v.parse().map_err(|e: Error| err(e.to_string()))?,
            "stencil" => p.stencil.shape = v.parse().map_err(|e: Error| err(e.to_string()))?,
            "radius" => p.stencil.radius = int()?,
            "in_h" => p.in_h = int()?,
            "in_w" => p.in_w = int()?,
            "out_h" => p.out_h = int()?,
            "out_w" => p.out_w = int()?,
            "n" => p.n = int()?,
            "m" => p.m = int()?,
            "num_comp_ilb" => p.num_comp_ilb = int()?,
            "num_comp_ep" => p.num_comp_ep = int()?,
            "num_coal_ilb" => p.num_coal_ilb = int()?,
            "num_coal_ep" => p.num_coal_ep = int()?,
            "num_uncoal_ilb" => p.num_uncoal_ilb = int()?,
            "num_uncoal_ep" => p.num_uncoal_ep = int()?,
            "grid_x" => launch[0] = Some(int()?),
            "grid_y" => launch[1] = Some(int()?),
            "wg_x" => launch[2] = Some(int()?),
            "wg_y" => launch[3] = Some(int()?),
            _ => return Err(err(format!("unknown key `{k}`"))),
        }
    }
    let names = ["grid_x", "grid_y", "wg_x", "wg_y"];
    let missing: Vec<&str> = names.iter().zip(&launch).filter(|(_, v)| v.is_none()).map(|(n, _)| *n).collect();
    if !missing.is_empty() {
        return Err(Error::Parse(format!("missing launch keys: {}", missing.join(", "))));
    }
    let [gx, gy, wx, wy] = launch.map(Option::unwrap);
    Ok(KernelInstance::new(p, LaunchConfig::new(gx, gy, wx, wy)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, SamplingSpec};
    use crate::device::DeviceDescriptor;

    #[test]
    fn round_trip_is_lossless() {
        let spec = SamplingSpec { num_tuples: 1, max_instances: 120, seed: 3, ..Default::default() };
        let ds = build_dataset(&spec, &DeviceDescriptor::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        write_rows(&path, &ds.rows).unwrap();
        let back = read_rows(&path).unwrap();
        assert_eq!(back, ds.rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
        let header = text.lines().next().unwrap();
        assert_eq!(header, CSV_HEADER.as_str());
        let feature_cols: Vec<&str> = header.split(',').skip(KEY_COLUMNS.len()).take(NUM_FEATURES).collect();
        assert_eq!(feature_cols, FEATURE_NAMES);
    }

    #[test]
    fn instance_descriptions() {
        let inst = parse_instance("pattern = y-reuse-row\nn=4\n# launch\ngrid_x=512\ngrid_y=512\nwg_x=32\nwg_y=1\nstencil=star\nradius=2\n").unwrap();
        assert_eq!(inst.params.pattern, crate::HomeAccessPattern::YReuseRow);
        assert_eq!((inst.params.n, inst.params.m), (4, TemplateParams::default().m));
        assert_eq!(inst.params.stencil, StencilPattern::new(crate::StencilShape::Star, 2));
        assert_eq!(inst.launch, LaunchConfig::new(512, 512, 32, 1));
        let e = parse_instance("grid_x=1\ncolour=red\n").unwrap_err().to_string();
        assert!(e.contains("colour"), "{e}");
        let e = parse_instance("grid_x=1\n").unwrap_err().to_string();
        assert!(e.contains("grid_y") && e.contains("wg_y"), "{e}");
    }

    #[test]
    fn empty_dataset_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_rows(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{}\n", *CSV_HEADER));
        assert!(read_rows(&path).unwrap().is_empty());
    }

    #[test]
    fn malformed_rows_report_line() {
        let spec = SamplingSpec { num_tuples: 1, max_instances: 5, ..Default::default() };
        let ds = build_dataset(&spec, &DeviceDescriptor::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        write_rows(&path, &ds.rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let rest = lines[3].split_once(',').unwrap().1.to_string();
        lines[3] = format!("zz-reuse,{rest}");
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        match read_rows(&path) {
            Err(Error::Malformed { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("zz-reuse"), "{message}");
            }
            other => panic!("expected malformed error, got {other:?}"),
        }
        std::fs::write(&path, "a,b\n").unwrap();
        assert!(matches!(read_rows(&path), Err(Error::Malformed { line: 1, .. })));
    }
}
