use std::fmt::Write as _;

use intra_fast::eotd::ParetoArchive;
use serde::Serialize;

use super::encode::load_summary;
use super::optimize::ARCHIVE_FILE;
use super::{settings_hash, skip_if_current, upstream_inputs, StageOutcome, ENCODE, OPTIMIZE, REPORT};
use crate::artifact::{require, StageWriter};
use crate::config::RunConfig;
use crate::error::{LabError, Result};

pub const REPORT_FILE: &str = "report.txt";

#[derive(Serialize)]
struct Settings {}

fn pct(v: f64) -> String {
    if v.is_finite() {
        format!("{:.2}%", v * 100.0)
    } else {
        "n/a".into()
    }
}

/// Human-readable digest of the encode summary and, when present, the
/// Pareto archive.
pub fn render(cfg: &RunConfig) -> Result<String> {
    let enc = require(&cfg.stage_dir(ENCODE), ENCODE)?;
    let reports = load_summary(&enc)?;
    let mut s = String::new();
    let _ = writeln!(s, "QPs {:?}, mode-candidate setting {:?}", cfg.qps, cfg.mnrc);
    for r in &reports {
        let _ = writeln!(s, "\n[{}]", r.label);
        let _ = writeln!(s, "  leaf RD evaluations  {}", r.leaf_evals);
        let _ = writeln!(s, "  wall time            {:.1} ms", r.wall_ms);
        if r.label == "baseline" {
            continue;
        }
        let bd = if r.bd_br_percent.is_finite() {
            format!("{:.3}%", r.bd_br_percent)
        } else {
            "n/a (needs 4 QPs)".into()
        };
        let _ = writeln!(s, "  BD-BR                {bd}");
        let _ = writeln!(s, "  evaluation reduction {}", pct(r.complexity_reduction));
        let _ = writeln!(s, "  time saving          {}", pct(r.delta_t));
        for d in 0..4 {
            let k = r.skip_ratios[d];
            let _ = writeln!(
                s,
                "  depth {d}: rd-check {} terminate {} split {} inference {}",
                pct(k[0]),
                pct(k[1]),
                pct(k[2]),
                pct(r.inference_ratio[d])
            );
        }
        for (d, c) in r.cover_rate.iter().enumerate() {
            if let Some(c) = c {
                let _ = writeln!(s, "  cover rate depth {d}   {}", pct(*c));
            }
        }
    }
    if let Ok(opt) = require(&cfg.stage_dir(OPTIMIZE), OPTIMIZE) {
        let text = crate::artifact::read_to_string(&opt.path(ARCHIVE_FILE))?;
        let archive = ParetoArchive::from_text(&text).map_err(|_| LabError::Dependency {
            artifact: opt.path(ARCHIVE_FILE),
            command: OPTIMIZE,
        })?;
        let _ = writeln!(s, "\n[pareto archive: {} points]", archive.len());
        for p in archive.points() {
            let t = p.th.th;
            let _ = writeln!(
                s,
                "  th ({:.3}, {:.3}, {:.3}, {:.3})  C {}  BD-BR {:.3}%",
                t[0],
                t[1],
                t[2],
                t[3],
                pct(p.obj.c),
                p.obj.r
            );
        }
    }
    Ok(s)
}

pub fn run(cfg: &RunConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    let dir = cfg.stage_dir(REPORT);
    let enc = require(&cfg.stage_dir(ENCODE), ENCODE)?;
    let opt = require(&cfg.stage_dir(OPTIMIZE), OPTIMIZE).ok();
    let ups: Vec<_> = std::iter::once(&enc).chain(opt.as_ref()).collect();
    let inputs = upstream_inputs(&ups);
    let hash = settings_hash(REPORT, &Settings {});
    if let Some(done) = skip_if_current(REPORT, &dir, &hash, &inputs) {
        return Ok(done);
    }
    let text = render(cfg)?;
    let mut w = StageWriter::new(&dir)?;
    w.put(REPORT_FILE, text.as_bytes())?;
    let stamp = w.finish(REPORT, hash, inputs, &cfg.to_toml())?;
    Ok(StageOutcome {
        stage: REPORT,
        dir,
        skipped: false,
        stamp,
    })
}
