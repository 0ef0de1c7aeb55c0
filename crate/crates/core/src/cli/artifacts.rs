//! Run driver and artifact writers: CSV snapshots, a flat binary container
//! with a JSON header, JSON reports and PNG heatmaps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use crate::bounds::{
    apriori_suite, moment_horizon, weighted_sup_gronwall, BoundLedger, MomentHorizon,
};
use crate::error::{Error, Result};
use crate::grid::{lp_norm, SpatialField};
use crate::oracle::{test_bank, weak_form_residual};
use crate::picard::{
    frozen_problem, horizon_inputs, run_scheme, run_scheme_raw_flux, HorizonReport, IterateSummary,
    RunReport, SchemeOutcome,
};
use crate::FluxMode;

#[derive(Debug, Clone, Serialize)]
pub struct Headline {
    pub final_mass: f64,
    pub p_sup: f64,
    pub tau_beta: Option<f64>,
    pub iterations: usize,
    /// `max_φ |weak residual| / ‖p₀‖₁` over the test bank.
    pub weak_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct ReportFile<'a> {
    config_hash: &'a str,
    config: &'a RunConfig,
    report: &'a RunReport,
    headline: &'a Headline,
    horizon: Option<&'a HorizonReport>,
    history: &'a [IterateSummary],
}

#[derive(Debug, Clone, Serialize)]
struct LedgerFile<'a> {
    config_hash: &'a str,
    ledgers: &'a [BoundLedger],
}

pub struct RunArtifacts {
    pub outcome: SchemeOutcome,
    pub headline: Headline,
    pub ledgers: Vec<BoundLedger>,
    pub horizon: Option<HorizonReport>,
    pub files: Vec<PathBuf>,
    pub config_hash: String,
}

/// Moment horizon estimate for the configured data (any flux mode).
pub fn tau_estimate(cfg: &RunConfig) -> Option<MomentHorizon> {
    let setup = cfg.setup();
    let (p0, c0) = cfg.initial_fields();
    let inputs = horizon_inputs(&setup, &p0, &c0, cfg.scheme.beta2).ok()?;
    moment_horizon(&inputs).ok()
}

/// Runs the scheme for `cfg` without touching the filesystem.
pub fn execute(cfg: &RunConfig) -> Result<(SchemeOutcome, Option<HorizonReport>)> {
    let setup = cfg.setup();
    let (p0, c0) = cfg.initial_fields();
    match cfg.model.flux_mode {
        FluxMode::Cutoff => Ok((run_scheme(&setup, &p0, &c0)?, None)),
        FluxMode::Raw => {
            let (out, h) = run_scheme_raw_flux(&setup, &p0, &c0, cfg.scheme.beta2)?;
            Ok((out, Some(h)))
        }
    }
}

pub fn headline(cfg: &RunConfig, out: &SchemeOutcome, horizon: Option<&HorizonReport>) -> Headline {
    let last = out.state.p.last().expect("nonempty series");
    let m0 = lp_norm(&out.state.p[0], 1.0).unwrap_or(0.0);
    let weak = frozen_problem(out).ok().and_then(|prob| {
        let bank = test_bank(&out.state.p[0].grid, cfg.seed);
        let r = weak_form_residual(&out.state.p, &prob, &out.setup.spec(), &bank).ok()?;
        let worst = r.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        Some(if m0 > 0.0 { worst / m0 } else { worst })
    });
    Headline {
        final_mass: lp_norm(last, 1.0).unwrap_or(f64::NAN),
        p_sup: last.sup_abs(),
        tau_beta: horizon
            .map(|h| h.horizon.tau)
            .or_else(|| tau_estimate(cfg).map(|h| h.tau)),
        iterations: out.report.iterations,
        weak_residual: weak,
    }
}

pub fn ledgers(out: &SchemeOutcome) -> Vec<BoundLedger> {
    let mut l = apriori_suite(out);
    if let Ok(w) = weighted_sup_gronwall(out, out.setup.beta) {
        l.push(w);
    }
    l
}

/// Snapshot step indices: every `every` steps plus the final step.
pub fn snapshot_indices(nt: usize, every: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..=nt).step_by(every.max(1)).collect();
    if *idx.last().unwrap() != nt {
        idx.push(nt);
    }
    idx
}

fn spatial_csv(path: &Path, f: &SpatialField, hash: &str) -> Result<()> {
    let n = f.grid.dim;
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# config_hash={hash}")?;
    let mut head = vec!["t".to_string()];
    head.extend((0..n).map(|a| format!("i{a}")));
    head.extend((0..n).map(|a| format!("x{a}")));
    head.push("value".into());
    writeln!(w, "{}", head.join(","))?;
    for (flat, v) in f.values.iter().enumerate() {
        let d = f.grid.digits(flat);
        let x = f.grid.coords(flat);
        write!(w, "{}", f.time)?;
        for i in &d[..n] {
            write!(w, ",{i}")?;
        }
        for xi in &x[..n] {
            write!(w, ",{xi}")?;
        }
        writeln!(w, ",{v}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ArrayEntry {
    name: &'static str,
    shape: Vec<usize>,
    offset_bytes: usize,
    times: Vec<f64>,
}

#[derive(Serialize)]
struct BinaryHeader<'a> {
    config_hash: &'a str,
    dtype: &'static str,
    byte_order: &'static str,
    layout: &'static str,
    dim: usize,
    grid: crate::GridSpec,
    arrays: Vec<ArrayEntry>,
}

fn write_binary(
    dir: &Path,
    out: &SchemeOutcome,
    idx: &[usize],
    hash: &str,
) -> Result<Vec<PathBuf>> {
    let st = &out.state;
    let n = out.setup.params.dim;
    let (nx, nv) = (out.setup.grid.nx, out.setup.grid.nv);
    let mut bytes: Vec<u8> = Vec::new();
    let mut arrays = Vec::new();
    let times: Vec<f64> = idx.iter().map(|&i| st.times[i]).collect();
    let mut push = |name: &'static str, per: Vec<usize>, chunks: Vec<&[f64]>| {
        let mut shape = vec![chunks.len()];
        shape.extend(per);
        arrays.push(ArrayEntry {
            name,
            shape,
            offset_bytes: bytes.len(),
            times: times.clone(),
        });
        for c in chunks {
            for v in c {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    };
    let xs = vec![nx; n];
    let mut pxv = xs.clone();
    pxv.extend(vec![nv; n]);
    push(
        "p",
        pxv,
        idx.iter().map(|&i| st.p[i].values.as_slice()).collect(),
    );
    push(
        "p_tilde",
        xs.clone(),
        idx.iter()
            .map(|&i| st.marginal[i].values.as_slice())
            .collect(),
    );
    push(
        "c",
        xs.clone(),
        idx.iter().map(|&i| st.c[i].values.as_slice()).collect(),
    );
    push(
        "j",
        xs,
        idx.iter().map(|&i| st.j[i].values.as_slice()).collect(),
    );
    let header = BinaryHeader {
        config_hash: hash,
        dtype: "float64",
        byte_order: "little",
        layout: "row-major; x axes then v axes; cell-centred nodes -L + (i + 1/2) h",
        dim: n,
        grid: out.setup.grid,
        arrays,
    };
    let bin = dir.join("fields.bin");
    let json = dir.join("fields.json");
    fs::write(&bin, &bytes)?;
    fs::write(
        &json,
        serde_json::to_vec_pretty(&header).map_err(|e| Error::Io(e.to_string()))?,
    )?;
    Ok(vec![bin, json])
}

fn colormap(t: f64) -> [u8; 3] {
    // dark blue -> teal -> yellow
    const STOPS: [[f64; 3]; 4] = [
        [68.0, 1.0, 84.0],
        [49.0, 104.0, 142.0],
        [53.0, 183.0, 121.0],
        [253.0, 231.0, 37.0],
    ];
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let s = t * 3.0;
    let i = (s.floor() as usize).min(2);
    let f = s - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (STOPS[i][c] + f * (STOPS[i + 1][c] - STOPS[i][c])).round() as u8;
    }
    out
}

/// Heatmap of `rows × cols` values, nearest-neighbour upscaled so the
/// shorter side is at least 256 pixels. Row 0 is drawn at the bottom.
fn heatmap(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scale = (256 / rows.min(cols)).max(1);
    let (w, h) = ((cols * scale) as u32, (rows * scale) as u32);
    let img = image::RgbImage::from_fn(w, h, |px, py| {
        let c = px as usize / scale;
        let r = rows - 1 - py as usize / scale;
        image::Rgb(colormap((values[r * cols + c] - lo) / span))
    });
    img.save(path).map_err(|e| Error::Io(e.to_string()))
}

fn write_pngs(dir: &Path, out: &SchemeOutcome) -> Result<Vec<PathBuf>> {
    let st = &out.state;
    let nx = out.setup.grid.nx;
    let mut files = Vec::new();
    for (name, series) in [("p_tilde", &st.marginal), ("c", &st.c)] {
        let path = dir.join(format!("{name}.png"));
        if out.setup.params.dim == 1 {
            // space-time map, time upwards
            let values: Vec<f64> = series
                .iter()
                .flat_map(|f| f.values.iter().cloned())
                .collect();
            heatmap(&path, series.len(), nx, &values)?;
        } else if out.setup.params.dim == 2 {
            let last = series.last().expect("nonempty series");
            heatmap(&path, nx, nx, &last.values)?;
        } else {
            continue;
        }
        files.push(path);
    }
    Ok(files)
}

/// Runs `cfg` and writes every artifact into `dir`. The report is written
/// even when the iteration did not converge.
pub fn run_to_dir(cfg: &RunConfig, dir: &Path) -> Result<RunArtifacts> {
    let hash = cfg.hash();
    let (out, horizon) = execute(cfg)?;
    fs::create_dir_all(dir.join("csv"))?;
    let mut files = Vec::new();

    let head = headline(cfg, &out, horizon.as_ref());
    let led = ledgers(&out);
    let report = dir.join("report.json");
    let body = ReportFile {
        config_hash: &hash,
        config: cfg,
        report: &out.report,
        headline: &head,
        horizon: horizon.as_ref(),
        history: &out.state.history,
    };
    fs::write(
        &report,
        serde_json::to_vec_pretty(&body).map_err(|e| Error::Io(e.to_string()))?,
    )?;
    files.push(report);
    let ledger = dir.join("ledger.json");
    let lbody = LedgerFile {
        config_hash: &hash,
        ledgers: &led,
    };
    fs::write(
        &ledger,
        serde_json::to_vec_pretty(&lbody).map_err(|e| Error::Io(e.to_string()))?,
    )?;
    files.push(ledger);

    let idx = snapshot_indices(out.report.nt, cfg.snapshot_every());
    for &n in &idx {
        for (name, f) in [
            ("p_tilde", &out.state.marginal[n]),
            ("c", &out.state.c[n]),
            ("j", &out.state.j[n]),
        ] {
            let path = dir.join("csv").join(format!("{name}_{n:05}.csv"));
            spatial_csv(&path, f, &hash)?;
            files.push(path);
        }
    }
    if cfg.output.binary {
        files.extend(write_binary(dir, &out, &idx, &hash)?);
    }
    if cfg.output.png {
        files.extend(write_pngs(dir, &out)?);
    }
    let manifest = dir.join("manifest.json");
    let names: Vec<String> = files
        .iter()
        .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
        .collect();
    fs::write(
        &manifest,
        serde_json::to_vec_pretty(&serde_json::json!({ "config_hash": hash, "files": names }))
            .map_err(|e| Error::Io(e.to_string()))?,
    )?;
    files.push(manifest);
    Ok(RunArtifacts {
        outcome: out,
        headline: head,
        ledgers: led,
        horizon,
        files,
        config_hash: hash,
    })
}

/// Reads back one array of the binary container.
pub fn read_binary_array(dir: &Path, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let header: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("fields.json"))?)
        .map_err(|e| Error::Io(e.to_string()))?;
    let bytes = fs::read(dir.join("fields.bin"))?;
    let entry = header["arrays"]
        .as_array()
        .and_then(|a| a.iter().find(|e| e["name"] == name))
        .ok_or_else(|| Error::Argument(format!("no array {name}")))?;
    let shape: Vec<usize> = entry["shape"]
        .as_array()
        .map(|s| {
            s.iter()
                .filter_map(|v| v.as_u64())
                .map(|v| v as usize)
                .collect()
        })
        .unwrap_or_default();
    let off = entry["offset_bytes"].as_u64().unwrap_or(0) as usize;
    let len: usize = shape.iter().product();
    let data = bytes
        .get(off..off + 8 * len)
        .ok_or_else(|| Error::Io("binary container truncated".into()))?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((shape, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_cadence() {
        assert_eq!(snapshot_indices(20, 2).len(), 11);
        assert_eq!(snapshot_indices(7, 3), vec![0, 3, 6, 7]);
        assert_eq!(snapshot_indices(5, 10), vec![0, 5]);
    }

    #[test]
    fn colormap_ends() {
        assert_eq!(colormap(0.0), [68, 1, 84]);
        assert_eq!(colormap(1.0), [253, 231, 37]);
        assert_eq!(colormap(f64::NAN), [68, 1, 84]);
    }
}
