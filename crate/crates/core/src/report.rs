//! CSV and JSON artifacts.
//!
//! Every artifact carries the fully resolved [`RunConfig`]: CSV files as
//! leading `# key = value` comment lines, JSON files under a `"config"` key.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::continuation::{BifurcationEvent, Branch, EventKind, PhasePoint, TransitionEvents};
use crate::error::{Error, Result};
use crate::integrate::{IntegratorMeta, Trajectory};
use crate::lattice::UnitCell;
use crate::oscillation::{AttractorReport, BasinSample, CycleDescriptor, SymmetryResiduals};
use crate::steady::{SolutionCensus, SolutionClass};

const COMPONENTS: [&str; 3] = ["n", "x", "y"];

fn comment_block<W: Write>(w: &mut W, cfg: &RunConfig) -> Result<()> {
    for line in cfg.echo().lines() {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

/// `{"key": "value"}` for every echoed config line.
pub fn config_json(cfg: &RunConfig) -> Value {
    let mut m = Map::new();
    for line in cfg.echo().lines() {
        if let Some((k, v)) = line.split_once('=') {
            m.insert(k.trim().into(), Value::String(v.trim().into()));
        }
    }
    Value::Object(m)
}

/// Inverse of [`config_json`].
pub fn config_from_json(v: &Value) -> Result<RunConfig> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Parse("config must be a JSON object".into()))?;
    let mut text = String::new();
    for (k, v) in obj {
        let v = v.as_str().ok_or_else(|| Error::Parse(format!("config value for '{k}' is not a string")))?;
        text.push_str(&format!("{k} = {v}\n"));
    }
    RunConfig::parse(&text)
}

fn complex(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn num(x: f64) -> Value {
    // JSON has no NaN; tests that do not apply become null
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn trajectory_header(cell: &UnitCell) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for label in &cell.labels {
        for c in COMPONENTS {
            h.push(format!("{label}:{c}"));
        }
    }
    h
}

pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory<f64>, cell: &UnitCell, cfg: &RunConfig) -> Result<()> {
    if traj.dim != 3 * cell.sites() {
        return Err(Error::DimensionMismatch {
            expected: 3 * cell.sites(),
            got: traj.dim,
        });
    }
    comment_block(&mut w, cfg)?;
    writeln!(w, "# integrator = {}", serde_json::to_string(&traj.meta)?)?;
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(trajectory_header(cell))?;
    let mut row = Vec::with_capacity(traj.dim + 1);
    for k in 0..traj.len() {
        row.clear();
        row.push(traj.times[k].to_string());
        row.extend(traj.state(k).iter().map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Trajectory CSV read back with its cell and, when present, its echoed config.
pub struct ImportedTrajectory {
    pub traj: Trajectory<f64>,
    pub cell: UnitCell,
    pub config: Option<RunConfig>,
}

fn cell_from_labels(labels: &[String]) -> Result<UnitCell> {
    let mut rows = 0;
    let mut cols = 0;
    for l in labels {
        let digits: String = l.chars().take_while(|c| c.is_ascii_digit()).collect();
        let r: usize = digits.parse().map_err(|_| Error::Parse(format!("bad site label '{l}'")))?;
        let rest = &l[digits.len()..];
        let c = match rest.as_bytes() {
            [b] if b.is_ascii_uppercase() => (b - b'A') as usize + 1,
            _ => rest
                .strip_prefix(":c")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad site label '{l}'")))?,
        };
        rows = rows.max(r);
        cols = cols.max(c);
    }
    let cell = UnitCell::new(rows, cols)?;
    if cell.labels != labels {
        return Err(Error::Parse(format!(
            "site columns {labels:?} do not form a row-major {rows}x{cols} cell"
        )));
    }
    Ok(cell)
}

pub fn read_trajectory_csv<R: Read>(mut r: R) -> Result<ImportedTrajectory> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut cfg_text = String::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        if !body.starts_with("integrator") {
            cfg_text.push_str(body);
            cfg_text.push('\n');
        }
    }
    let config = if cfg_text.trim().is_empty() {
        None
    } else {
        Some(RunConfig::parse(&cfg_text)?)
    };
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("t") || header.len() < 4 || (header.len() - 1) % 3 != 0 {
        return Err(Error::Parse("trajectory header must be 't' followed by n,x,y triples".into()));
    }
    let mut labels = Vec::new();
    for (k, triple) in header[1..].chunks(3).enumerate() {
        let (label, _) = triple[0]
            .rsplit_once(':')
            .ok_or_else(|| Error::Parse(format!("column '{}' has no component suffix", triple[0])))?;
        for (c, name) in triple.iter().zip(COMPONENTS) {
            if c.as_str() != format!("{label}:{name}") {
                return Err(Error::Parse(format!("column {} of site {} should be '{label}:{name}', got '{c}'", name, k + 1)));
            }
        }
        labels.push(label.to_string());
    }
    let cell = cell_from_labels(&labels)?;
    let dim = 3 * cell.sites();
    let meta = IntegratorMeta {
        method: "imported",
        dt: None,
        tol: None,
        accepted_steps: 0,
        rejected_steps: 0,
        min_step: 0.0,
        max_step: 0.0,
        stride: 1,
    };
    let mut traj = Trajectory::new(dim, meta);
    let mut state = vec![0.0; dim];
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(Error::Parse(format!("row {} has {} fields, expected {}", k + 1, rec.len(), dim + 1)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: '{s}' is not a number", k + 1)))
        };
        let t = parse(&rec[0])?;
        if let Some(&prev) = traj.times.last() {
            if t <= prev {
                return Err(Error::Parse(format!("row {}: times must increase", k + 1)));
            }
        }
        for (s, field) in state.iter_mut().zip(rec.iter().skip(1)) {
            *s = parse(field)?;
        }
        traj.push(t, &state);
    }
    if let Some(cfg) = &config {
        traj = traj.with_provenance(cfg.params.clone(), cell.clone());
    }
    Ok(ImportedTrajectory { traj, cell, config })
}

pub fn census_json(census: &SolutionCensus<f64>, cell: &UnitCell, cfg: &RunConfig) -> Value {
    let roots: Vec<Value> = census
        .roots
        .iter()
        .map(|fp| {
            json!({
                "class": fp.class,
                "stable": fp.stable,
                "max_real": fp.max_real,
                "residual": fp.residual,
                "populations": fp.populations(),
                "state": fp.state.0,
                "eigenvalues": fp.eigenvalues.iter().map(|&z| complex(z)).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "config": config_json(cfg),
        "labels": cell.labels,
        "v_inter": census.v_inter,
        "n_seeds": census.n_seeds,
        "rng_seed": census.rng_seed,
        "converged_seeds": census.converged_seeds,
        "counts": census.counts(),
        "roots": roots,
    })
}

fn residuals_json(r: &SymmetryResiduals<f64>) -> Value {
    json!({
        "af": num(r.af),
        "af2": num(r.af2),
        "column_period": num(r.column_period),
        "inter_shift": num(r.inter_shift),
        "onsite_lock": num(r.onsite_lock),
        "intra_shift": num(r.intra_shift),
        "tolerance": num(r.tolerance),
    })
}

pub fn cycle_descriptor_json(d: &CycleDescriptor<f64>, cell: &UnitCell) -> Value {
    let by_site = |v: &[f64]| -> Value {
        Value::Object(cell.labels.iter().cloned().zip(v.iter().map(|&x| num(x))).collect())
    };
    json!({
        "class": d.class,
        "period": opt(d.period),
        "period_spread": opt(d.period_spread),
        "peaks": d.peaks,
        "reference_site": cell.labels.get(d.reference_site),
        "amplitudes": by_site(&d.amplitudes),
        "means": by_site(&d.means),
        "labels": cell.labels,
        "phase_offsets": d.phase_offsets.iter().map(|row| row.iter().map(|&x| num(x)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "residuals": d.residuals.as_ref().map(residuals_json),
        "t_start": d.t_start,
        "t_end": d.t_end,
        "note": d.note,
    })
}

/// Where a classified trajectory started.
#[derive(Clone, Debug)]
pub enum Provenance {
    Seed { kind: String, rng_seed: u64, stream: u64 },
    File(String),
}

fn provenance_json(p: &Provenance) -> Value {
    match p {
        Provenance::Seed { kind, rng_seed, stream } => json!({"seed_kind": kind, "rng_seed": rng_seed, "stream": stream}),
        Provenance::File(path) => json!({"trajectory": path}),
    }
}

pub fn cycle_json(d: &CycleDescriptor<f64>, attractor: Option<&AttractorReport<f64>>, cell: &UnitCell, source: &Provenance, cfg: &RunConfig) -> Value {
    let mut v = cycle_descriptor_json(d, cell);
    let m = v.as_object_mut().expect("descriptor is an object");
    m.insert("config".into(), config_json(cfg));
    m.insert("provenance".into(), provenance_json(source));
    if let Some(a) = attractor {
        m.insert("attractor".into(), json!(a.attractor.label()));
        m.insert("t_classified".into(), json!(a.t_end));
    }
    v
}

pub fn basin_json(sample: &BasinSample<f64>, cfg: &RunConfig) -> Value {
    let records: Vec<Value> = sample
        .records
        .iter()
        .map(|r| {
            json!({
                "index": r.index,
                "attractor": r.attractor.label(),
                "period": opt(r.period),
                "t_end": r.t_end,
                "seed": r.seed.0,
            })
        })
        .collect();
    json!({
        "config": config_json(cfg),
        "seed_kind": sample.seed_kind,
        "rng_seed": sample.rng_seed,
        "n_samples": sample.records.len(),
        "unclassified": sample.unclassified(),
        "fractions": sample.fractions(),
        "samples": records,
    })
}

pub fn phase_header() -> Vec<String> {
    let mut h: Vec<String> = ["v_inter", "phase", "af_cycle", "af2_attractor"].map(String::from).to_vec();
    for c in SolutionClass::ALL {
        h.push(c.as_str().to_string());
        h.push(format!("{}_stable", c.as_str()));
    }
    h
}

pub fn write_phase_csv<W: Write>(mut w: W, points: &[PhasePoint<f64>], cfg: &RunConfig) -> Result<()> {
    comment_block(&mut w, cfg)?;
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(phase_header())?;
    for p in points {
        let mut row = vec![
            p.v_inter.to_string(),
            p.phase.map(|k| k.to_string()).unwrap_or_default(),
            p.af_attractor.label(),
            p.af2_attractor.label(),
        ];
        for c in SolutionClass::ALL {
            let cc = p.counts.iter().find(|cc| cc.class == c);
            row.push(cc.map_or(0, |cc| cc.count).to_string());
            row.push(cc.map_or(0, |cc| cc.stable).to_string());
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn kind_str(k: EventKind) -> &'static str {
    match k {
        EventKind::Hopf => "hopf",
        EventKind::Pitchfork => "pitchfork",
        EventKind::Merge => "merge",
    }
}

pub fn event_json(e: &BifurcationEvent<f64>) -> Value {
    json!({
        "kind": kind_str(e.kind),
        "location": e.location,
        "bracket": [e.lo, e.hi],
        "evidence": {
            "eigenvalue": e.eigenvalue.map(complex),
            "distances": e.distances.iter().map(|&(p, d)| json!([p, d])).collect::<Vec<_>>(),
            "note": e.note,
        },
    })
}

pub fn events_json(ev: &TransitionEvents<f64>, cfg: &RunConfig) -> Value {
    let mut events = Vec::new();
    let mut failures = Vec::new();
    for (kind, r) in [
        (EventKind::Hopf, &ev.hopf),
        (EventKind::Pitchfork, &ev.pitchfork),
        (EventKind::Merge, &ev.merge),
    ] {
        match r {
            Ok(e) => events.push(event_json(e)),
            Err(err) => failures.push(json!({"kind": kind_str(kind), "error": err.to_string()})),
        }
    }
    json!({
        "config": config_json(cfg),
        "events": events,
        "failures": failures,
    })
}

/// One row per branch point: `branch,v_inter,residual,max_real,lead_re,lead_im,<site>:n...`.
pub fn write_branches_csv<W: Write>(mut w: W, branches: &[(&str, &Branch<f64>)], cell: &UnitCell, cfg: &RunConfig) -> Result<()> {
    comment_block(&mut w, cfg)?;
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let mut header: Vec<String> = ["branch", "v_inter", "residual", "max_real", "lead_re", "lead_im"].map(String::from).to_vec();
    header.extend(cell.labels.iter().map(|l| format!("{l}:n")));
    out.write_record(&header)?;
    for (name, b) in branches {
        for p in &b.points {
            let lead = p.leading_pair();
            let mut row = vec![
                name.to_string(),
                p.param.to_string(),
                p.residual.to_string(),
                p.max_real().to_string(),
                lead.map(|z| z.re.to_string()).unwrap_or_default(),
                lead.map(|z| z.im.to_string()).unwrap_or_default(),
            ];
            row.extend(crate::dynamics::populations(&p.state).iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::Rk4Options;

    fn cfg() -> RunConfig {
        RunConfig::parse("v_inter = 1\nseed_kind = af2").unwrap()
    }

    #[test]
    fn trajectory_round_trip() {
        let cfg = cfg();
        let model = cfg.model().unwrap();
        let seed = crate::seeds::generate(crate::seeds::SeedKind::AfBiased, &model, 0, 0).unwrap();
        let traj = model.integrate_rk4(&seed, &Rk4Options::new(2.0).stride(100)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, &model.cell, &cfg).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\nt,1A:n,1A:x,1A:y,1B:n,"));
        assert!(!text.contains('\r'));
        let back = read_trajectory_csv(&buf[..]).unwrap();
        assert_eq!(back.cell, model.cell);
        assert_eq!(back.config.as_ref(), Some(&cfg));
        assert_eq!(back.traj.times, traj.times);
        assert_eq!(back.traj.data, traj.data);
    }

    #[test]
    fn wide_cell_labels_round_trip() {
        let cell = UnitCell::new(4, 2).unwrap();
        assert_eq!(cell_from_labels(&cell.labels).unwrap(), cell);
        assert!(cell_from_labels(&["1A".into(), "2B".into()]).is_err());
    }

    #[test]
    fn malformed_csv_is_rejected() {
        for text in [
            "x,1A:n,1A:x,1A:y\n0,0,0,0\n",
            "t,1A:n,1A:x\n0,0,0\n",
            "t,1A:n,1A:y,1A:x\n0,0,0,0\n",
            "t,1A:n,1A:x,1A:y\n0,0,0\n",
            "t,1A:n,1A:x,1A:y\n1,0,0,0\n0,0,0,0\n",
            "t,1A:n,1A:x,1A:y\n0,a,0,0\n",
        ] {
            assert!(read_trajectory_csv(text.as_bytes()).is_err(), "{text}");
        }
    }

    #[test]
    fn config_json_round_trip() {
        let c = cfg();
        assert_eq!(config_from_json(&config_json(&c)).unwrap(), c);
    }

    #[test]
    fn census_json_shape() {
        let c = cfg();
        let model = c.model().unwrap();
        let census = crate::steady::census(&model, 100, 0).unwrap();
        let v = census_json(&census, &model.cell, &c);
        let roots = v["roots"].as_array().unwrap();
        assert_eq!(roots.len(), census.roots.len());
        let ev = roots[0]["eigenvalues"].as_array().unwrap();
        assert_eq!(ev.len(), 12);
        assert_eq!(ev[0].as_array().unwrap().len(), 2);
        assert_eq!(v["config"]["v_inter"], "1.0");
        assert!(roots.iter().any(|r| r["class"] == "uniform"));
    }

    #[test]
    fn non_finite_numbers_become_null() {
        assert_eq!(num(f64::NAN), Value::Null);
        assert_eq!(opt(None), Value::Null);
        assert_eq!(num(1.5), json!(1.5));
    }
}
