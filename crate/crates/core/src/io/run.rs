use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::{FormulationConfig, Scenario, ScenarioConfig, ENV_THREADS};
use super::output::{CurveRow, CurveWriter};
use super::vtu::{export_fields, FieldSnapshot};
use super::IoError;
use crate::mesh::Mesh;
use crate::penalty::PenaltyParams;
use crate::solver::{
    run_program, Elastic, Formulation, LagrangeMixed, Penalty, SolveReport, Solver,
};
use crate::verify::{cube_count_report, CountReport};

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config_hash: String,
    pub report: Option<SolveReport>,
    pub count: Option<CountReport>,
    pub files: Vec<PathBuf>,
}

/// Runs `f` on a pool sized by `GDFE_THREADS`, if set.
fn with_threads<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(ENV_THREADS)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    if threads == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

fn header(config: &ScenarioConfig, hash: &str) -> Vec<String> {
    let mut lines = vec![
        format!("gdfe {} '{}'", env!("CARGO_PKG_VERSION"), config.name),
        format!("config_hash: {hash}"),
        format!("formulation: {}", config.formulation.label()),
        "units: length mm, force N, stress MPa, time ms".to_string(),
    ];
    if let Some(m) = &config.material {
        lines.push(format!(
            "material: E = {} MPa, nu = {}, d0 = {} MPa, d1 = {} MPa, c = {} N mm",
            m.youngs, m.poisson, m.d0, m.d1, m.c
        ));
    }
    lines
}

struct Sink<'a> {
    config: &'a ScenarioConfig,
    curve: CurveWriter,
    files: Vec<PathBuf>,
    last_snapshot: Option<usize>,
    error: Option<IoError>,
}

impl Sink<'_> {
    fn snapshot<F: Formulation>(&mut self, solver: &Solver<'_, F>, step: usize) {
        let path = self
            .config
            .output
            .dir
            .join(format!("{}_step_{step:05}.vtu", self.config.name));
        match export_fields(&FieldSnapshot::capture(solver, step), solver.mesh(), &path) {
            Ok(()) => {
                self.files.push(path);
                self.last_snapshot = Some(step);
            }
            Err(e) => {
                self.error.get_or_insert(e);
            }
        }
    }
}

fn drive<F: Formulation>(
    mesh: &Mesh,
    formulation: F,
    config: &ScenarioConfig,
    mut sink: Option<&mut Sink<'_>>,
) -> Result<SolveReport, IoError> {
    let load = config.load.as_ref().ok_or_else(|| IoError::Config {
        key: "load".into(),
        msg: "missing".into(),
    })?;
    let mut solver = Solver::new(
        mesh,
        formulation,
        config.boundary_conditions()?,
        config.newton,
    )?;
    let every = config.output.snapshot_every;
    let report = run_program(&mut solver, load, |s, record| {
        let Some(sink) = sink.as_deref_mut() else {
            return;
        };
        if let Err(e) = sink.curve.write(&CurveRow::from(record)) {
            sink.error.get_or_insert(e);
        }
        if sink.config.output.snapshots && every > 0 && record.step % every == 0 {
            sink.snapshot(s, record.step);
        }
    })?;
    if let Some(sink) = sink {
        let last = report.steps.last().map_or(0, |r| r.step);
        if config.output.snapshots && sink.last_snapshot != Some(last) {
            sink.snapshot(&solver, last);
        }
        if let Some(e) = sink.error.take() {
            return Err(e);
        }
    }
    Ok(report)
}

fn dispatch(
    mesh: &Mesh,
    config: &ScenarioConfig,
    sink: Option<&mut Sink<'_>>,
) -> Result<SolveReport, IoError> {
    let params = config.material.ok_or_else(|| IoError::Config {
        key: "material".into(),
        msg: "missing".into(),
    })?;
    match config.formulation {
        FormulationConfig::LagrangeMixed | FormulationConfig::Local => {
            drive(mesh, LagrangeMixed { params }, config, sink)
        }
        FormulationConfig::Penalty { p } => {
            let params = PenaltyParams::new(params, p).map_err(|e| IoError::Config {
                key: "formulation.p".into(),
                msg: e.to_string(),
            })?;
            drive(mesh, Penalty { params }, config, sink)
        }
        FormulationConfig::Elastic => drive(mesh, Elastic { params }, config, sink),
    }
}

/// Solves a plate or custom scenario without writing anything.
pub fn solve_scenario(config: &ScenarioConfig) -> Result<(SolveReport, Mesh), IoError> {
    if config.scenario == Scenario::CubeCountTest {
        return Err(IoError::Mismatch(
            "the count test has no load program".into(),
        ));
    }
    let mesh = config.build_mesh()?;
    let report = with_threads(|| dispatch(&mesh, config, None))?;
    Ok((report, mesh))
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config_hash: &'a str,
    config: &'a ScenarioConfig,
    report: &'a SolveReport,
}

/// Runs a scenario and writes its artifacts into `config.output.dir`: the
/// force-displacement CSV, a JSON report and VTU snapshots (or the count
/// table for the count test). Rows already written stay on disk when the
/// solver fails.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunArtifacts, IoError> {
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir).map_err(|source| IoError::File {
        path: dir.clone(),
        source,
    })?;
    let hash = config.hash();
    let write = |path: PathBuf, text: String| -> Result<PathBuf, IoError> {
        std::fs::write(&path, text).map_err(|source| IoError::File {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    };

    if config.scenario == Scenario::CubeCountTest {
        let count = cube_count_report(config.mesh.refinements.iter().copied())?;
        let mut text: String = header(config, &hash)
            .iter()
            .map(|l| format!("# {l}\n"))
            .collect();
        text.push_str(&count.to_csv());
        let path = write(dir.join(format!("{}_count_test.csv", config.name)), text)?;
        return Ok(RunArtifacts {
            config_hash: hash,
            report: None,
            count: Some(count),
            files: vec![path],
        });
    }

    let mesh = config.build_mesh()?;
    let curve_path = dir.join(format!("{}_force_displacement.csv", config.name));
    let mut head = header(config, &hash);
    head.push(format!(
        "mesh: {} vertices, {} tets",
        mesh.n_vertices(),
        mesh.n_tets()
    ));
    let mut sink = Sink {
        config,
        curve: CurveWriter::create(&curve_path, &head)?,
        files: vec![curve_path],
        last_snapshot: None,
        error: None,
    };
    let report = with_threads(|| dispatch(&mesh, config, Some(&mut sink)))?;
    let json = serde_json::to_string_pretty(&ReportFile {
        config_hash: &hash,
        config,
        report: &report,
    })
    .map_err(|e| IoError::Parse(e.to_string()))?;
    let mut files = sink.files;
    files.push(write(
        dir.join(format!("{}_report.json", config.name)),
        json,
    )?);
    Ok(RunArtifacts {
        config_hash: hash,
        report: Some(report),
        count: None,
        files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub formulation: String,
    pub n_dofs: usize,
    pub steps: usize,
    pub completed: bool,
    pub assembly_ms: f64,
    pub solve_ms: f64,
}

impl RunTiming {
    fn of(report: &SolveReport) -> Self {
        Self {
            formulation: report.formulation.clone(),
            n_dofs: report.n_dofs,
            steps: report.steps.len(),
            completed: report.completed(),
            assembly_ms: report.total_assembly_ms,
            solve_ms: report.total_solve_ms,
        }
    }

    pub fn total_ms(&self) -> f64 {
        self.assembly_ms + self.solve_ms
    }
}

/// Timing of run `a` relative to run `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingComparison {
    pub a: RunTiming,
    pub b: RunTiming,
    pub assembly_ratio: f64,
    pub solve_ratio: f64,
    pub total_ratio: f64,
}

impl TimingComparison {
    pub fn from_reports(a: &SolveReport, b: &SolveReport) -> Self {
        let (a, b) = (RunTiming::of(a), RunTiming::of(b));
        Self {
            assembly_ratio: a.assembly_ms / b.assembly_ms,
            solve_ratio: a.solve_ms / b.solve_ms,
            total_ratio: a.total_ms() / b.total_ms(),
            a,
            b,
        }
    }

    pub fn to_text(&self) -> String {
        let row = |t: &RunTiming| {
            format!(
                "{:<20} {:>9} {:>6} {:>12.1} {:>12.1} {:>12.1}\n",
                t.formulation,
                t.n_dofs,
                t.steps,
                t.assembly_ms,
                t.solve_ms,
                t.total_ms()
            )
        };
        let mut out = format!(
            "{:<20} {:>9} {:>6} {:>12} {:>12} {:>12}\n",
            "formulation", "dofs", "steps", "assembly_ms", "solve_ms", "total_ms"
        );
        out += &row(&self.a);
        out += &row(&self.b);
        out += &format!(
            "ratio a/b: assembly {:.3}, solve {:.3}, total {:.3}\n",
            self.assembly_ratio, self.solve_ratio, self.total_ratio
        );
        out
    }
}

/// Runs both scenarios and compares their assembly and solve times. The two
/// configs must describe the same mesh and load program.
pub fn timing_comparison(
    a: &ScenarioConfig,
    b: &ScenarioConfig,
) -> Result<TimingComparison, IoError> {
    if a.load != b.load {
        return Err(IoError::Mismatch(
            "the two configs use different load programs".into(),
        ));
    }
    let (ma, mb) = (a.build_mesh()?, b.build_mesh()?);
    if ma.vertices() != mb.vertices() || ma.tets() != mb.tets() {
        return Err(IoError::Mismatch(
            "the two configs use different meshes".into(),
        ));
    }
    let (ra, _) = solve_scenario(a)?;
    let (rb, _) = solve_scenario(b)?;
    Ok(TimingComparison::from_reports(&ra, &rb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{read_curve, read_header, read_vtu};

    fn plate(formulation: &str, steps: usize) -> ScenarioConfig {
        let text = format!(
            r#"
            name = "t"
            scenario = "plate-with-hole"
            [material]
            youngs = 1000.0
            poisson = 0.3
            d0 = 0.0
            d1 = 1.0
            c = 100.0
            [formulation]
            {formulation}
            [load]
            kind = "monotone-ramp"
            n_steps = {steps}
            u_max = 1.0
            "#
        );
        ScenarioConfig::parse(&text).unwrap()
    }

    #[test]
    fn plate_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = plate("kind = \"lagrange-mixed\"", 2);
        config.output.dir = dir.path().to_path_buf();
        config.output.snapshot_every = 1;
        let out = run_scenario(&config).unwrap();
        let report = out.report.unwrap();
        assert!(report.completed());
        let rows = read_curve(&out.files[0]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].reaction_n, report.steps[1].reaction);
        let header = read_header(&out.files[0]).unwrap();
        assert!(header
            .iter()
            .any(|l| l == &format!("config_hash: {}", out.config_hash)));
        assert!(header.iter().any(|l| l.contains("units")));
        let vtus: Vec<_> = out
            .files
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "vtu"))
            .collect();
        assert_eq!(vtus.len(), 2);
        let data = read_vtu(&std::fs::read_to_string(vtus[1]).unwrap()).unwrap();
        assert!(data.arrays["damage"].iter().all(|d| (0.0..1.0).contains(d)));
        assert!(out
            .files
            .last()
            .unwrap()
            .to_string_lossy()
            .ends_with("t_report.json"));
    }

    #[test]
    fn count_test_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ScenarioConfig::parse("scenario = \"cube-count-test\"").unwrap();
        config.output.dir = dir.path().to_path_buf();
        let out = run_scenario(&config).unwrap();
        let text = std::fs::read_to_string(&out.files[0]).unwrap();
        assert!(
            text.contains("\n1,27,40,-13,27\n2,125,320,-195,125\n3,729,2560,-1831,729\n"),
            "{text}"
        );
    }

    #[test]
    fn elastic_dofs_and_self_comparison() {
        let (r, mesh) = solve_scenario(&plate("kind = \"elastic\"", 1)).unwrap();
        assert_eq!(r.n_dofs, 3 * (mesh.n_vertices() + mesh.n_edges()));
        let same = TimingComparison::from_reports(&r, &r);
        assert_eq!(same.total_ratio, 1.0);
        assert_eq!(same.assembly_ratio, 1.0);
    }

    #[test]
    fn mismatched_comparison() {
        let a = plate("kind = \"lagrange-mixed\"", 1);
        let mut b = plate("kind = \"elastic\"", 1);
        b.mesh.refinement = 1;
        assert!(matches!(
            timing_comparison(&a, &b),
            Err(IoError::Mismatch(_))
        ));
        let c = plate("kind = \"elastic\"", 2);
        assert!(matches!(
            timing_comparison(&a, &c),
            Err(IoError::Mismatch(_))
        ));
    }
}
