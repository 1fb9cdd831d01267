use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::meshio::write_snapshot;

use super::{ObservableLayout, ObservableRow, Simulation};

/// Result of [`run`]. On a step failure the rows and snapshots up to the failure are kept and
/// the error is stored in `error`.
#[derive(Debug)]
pub struct RunOutcome {
    pub layout: ObservableLayout,
    pub rows: Vec<ObservableRow>,
    pub snapshots: Vec<PathBuf>,
    pub steps: usize,
    pub error: Option<Error>,
}

/// `snap_t<YYYY.YY>.vtk`
pub fn snapshot_name(time: f64) -> String {
    format!("snap_t{time:07.2}.vtk")
}

struct Output {
    dir: PathBuf,
    csv: BufWriter<File>,
    csv_path: PathBuf,
}

impl Output {
    fn create(dir: &Path, header: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("observables.csv");
        let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut out = Output {
            dir: dir.to_path_buf(),
            csv: BufWriter::new(file),
            csv_path,
        };
        out.line(header)?;
        Ok(out)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.csv, "{text}")
            .and_then(|_| self.csv.flush())
            .map_err(|e| Error::io(&self.csv_path, e))
    }
}

/// Steps `sim` from its current time to `end_time` with the configured dt, appending one
/// observables row per step (plus the starting row) and writing snapshots every
/// `snapshot_every` years. With `out_dir` set, `observables.csv` is written as the run goes.
pub fn run(sim: &mut Simulation<'_>, end_time: f64, out_dir: Option<&Path>) -> Result<RunOutcome> {
    let mesh = sim.mesh();
    let settings = sim.config().solver.clone();
    let dt = settings.dt;
    let layout = ObservableLayout::new(mesh, &sim.config().region_set());
    let mut out = out_dir.map(|d| Output::create(d, &layout.header())).transpose()?;
    let stride = if settings.snapshot_every > 0.0 {
        Some(((settings.snapshot_every / dt).round() as usize).max(1))
    } else {
        None
    };
    let start_time = sim.state().time;
    let steps = ((end_time - start_time) / dt).round().max(0.0) as usize;

    let mut outcome = RunOutcome {
        layout,
        rows: Vec::with_capacity(steps + 1),
        snapshots: Vec::new(),
        steps: 0,
        error: None,
    };

    let record = |sim: &Simulation<'_>, outcome: &mut RunOutcome, out: &mut Option<Output>| -> Result<()> {
        let state = sim.state();
        let row = outcome.layout.measure(state, sim.mesh());
        if let Some(o) = out.as_mut() {
            o.line(&row.to_csv())?;
            if stride.is_some_and(|s| sim.step_index().is_multiple_of(s)) {
                let path = o.dir.join(snapshot_name(state.time));
                write_snapshot(state, sim.mesh(), &path)?;
                log::info!("t = {:.2} yr: wrote {}", state.time, path.display());
                outcome.snapshots.push(path);
            }
        }
        outcome.rows.push(row);
        Ok(())
    };

    record(sim, &mut outcome, &mut out)?;
    for k in 1..=steps {
        match sim.step(dt) {
            Ok(report) => {
                log::debug!(
                    "step {}: abeta substeps {}, tau substeps {}, newton {:?}",
                    sim.step_index(),
                    report.abeta.substeps,
                    report.tau.substeps,
                    report.newton.as_ref().map(|n| n.iterations)
                );
            }
            Err(e) => {
                log::error!("{e}");
                outcome.error = Some(e);
                break;
            }
        }
        outcome.steps = k;
        record(sim, &mut outcome, &mut out)?;
    }
    Ok(outcome)
}
