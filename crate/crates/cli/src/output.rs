//! CSV and JSON emission: comma-separated, `.` decimal, LF endings, UTF-8.
//! Floats print in Rust's shortest round-trip form.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use ecoplan::recovery::Trajectory;
use ecoplan::validation::ControlSchedule;

pub const TRAJECTORY_HEADER: &str = "t_s,x_m,v_mps,K_kJ,Pdrv_kW,Pbrk_kW,E_kJ,kind";

/// One row per node; interval quantities sit at their left node and the last
/// row repeats the final interval's values.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.grid.n;
    let zero = vec![0.0; n];
    let brake = traj.p_brk.as_deref().unwrap_or(&zero);
    let mut out = String::with_capacity(64 * (n + 2));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for k in 0..=n {
        let j = k.min(n - 1);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            traj.grid.t(k),
            traj.x[k],
            traj.v[k],
            traj.kinetic[k] / 1e3,
            traj.p_drv[j] / 1e3,
            brake[j] / 1e3,
            traj.energy[k] / 1e3,
            traj.kind.as_str(),
        ));
    }
    out
}

fn column_index(header: &str, name: &str) -> Result<usize> {
    header
        .split(',')
        .position(|c| c.trim() == name)
        .with_context(|| format!("controls file is missing a {name} column"))
}

/// Read piecewise-constant controls from a CSV with (at least) columns
/// `t_s`, `Pdrv_kW`, `Pbrk_kW`. A trajectory file written by this tool
/// parses directly; its repeated final row is simply extra coverage.
pub fn read_controls_csv(text: &str) -> Result<ControlSchedule> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("controls file is empty")?;
    let it = column_index(header, "t_s")?;
    let id = column_index(header, "Pdrv_kW")?;
    let ib = column_index(header, "Pbrk_kW")?;

    let mut times = Vec::new();
    let mut p_drv = Vec::new();
    let mut p_brk = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let need = it.max(id).max(ib);
        if fields.len() <= need {
            bail!("controls row {} has {} fields, need {}", row + 2, fields.len(), need + 1);
        }
        let parse = |i: usize, what: &str| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .with_context(|| format!("row {}: bad {what} value {:?}", row + 2, fields[i]))
        };
        times.push(parse(it, "t_s")?);
        p_drv.push(parse(id, "Pdrv_kW")? * 1e3);
        p_brk.push(parse(ib, "Pbrk_kW")? * 1e3);
    }
    if times.len() < 2 {
        bail!("controls file needs at least two rows");
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        bail!("control times must strictly increase");
    }
    for (i, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if (step - dt).abs() > 1e-6 * dt {
            bail!(
                "control rows must be uniformly spaced: step {} at row {} vs {}",
                step,
                i + 2,
                dt
            );
        }
    }
    ControlSchedule::new(dt, p_drv, p_brk).map_err(anyhow::Error::from)
}

pub fn pareto_csv(points: &[ecoplan::planner::ParetoPoint]) -> String {
    let mut out = String::from("T_s,consumption_kJ,status\n");
    for p in points {
        let status = match p.status {
            ecoplan::solver::SolveStatus::Optimal => "optimal",
            ecoplan::solver::SolveStatus::Infeasible => "infeasible",
            ecoplan::solver::SolveStatus::MaxIterations => "max-iterations",
            ecoplan::solver::SolveStatus::NumericalFailure => "numerical-failure",
        };
        match p.consumption {
            Some(c) => out.push_str(&format!("{},{},{}\n", p.horizon, c / 1e3, status)),
            None => out.push_str(&format!("{},,{}\n", p.horizon, status)),
        }
    }
    out
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    fs::write(dir.join(name), text)
        .with_context(|| format!("cannot write {}", dir.join(name).display()))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
    text.push('\n');
    write_text(dir, name, &text)
}
