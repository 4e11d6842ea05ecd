//! File formats: instance JSON, solve reports, CSV tables, run manifests
//! and checkpoints.
//!
//! Matrices are row-major nested arrays. Uncertainty sets are tagged by a
//! `kind` field (`none`, `theta_ellipsoid`, `frobenius_ball`, `p_ellipsoid`).

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use robsur_core::det::KktSolution;
use robsur_core::linalg::{Mat, Vector};
use robsur_core::oracle::RobustSolveReport;
use robsur_core::qcqp::{PEllipsoid, PGenerator, QcqpInstance, QuadConstraint, Theta, ThetaEllipsoid, UncertaintySet};
use robsur_core::train::StepRecord;

use crate::error::{AppError, AppResult};
use crate::exp1::GapRow;

pub type Rows = Vec<Vec<f64>>;

fn mat_to_rows(m: &Mat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn rows_to_mat(rows: &Rows, what: &str) -> AppResult<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(AppError::Format(format!("{what}: ragged matrix")));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaJson {
    #[serde(rename = "A")]
    pub a: Rows,
    pub b: Vec<f64>,
    pub gamma: f64,
}

impl ThetaJson {
    fn from_core(t: &Theta) -> Self {
        Self { a: mat_to_rows(&t.a), b: t.b.iter().copied().collect(), gamma: t.gamma }
    }

    fn to_core(&self) -> AppResult<Theta> {
        Ok(Theta::new(rows_to_mat(&self.a, "A")?, Vector::from_vec(self.b.clone()), self.gamma))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PGeneratorJson {
    #[serde(rename = "P")]
    pub p: Rows,
    pub b: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UncertaintyJson {
    #[default]
    None,
    ThetaEllipsoid {
        center: ThetaJson,
        generators: Vec<ThetaJson>,
    },
    FrobeniusBall {
        radius: f64,
    },
    PEllipsoid {
        #[serde(rename = "P0")]
        p0: Rows,
        b0: Vec<f64>,
        gamma0: f64,
        generators: Vec<PGeneratorJson>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintJson {
    #[serde(rename = "A")]
    pub a: Rows,
    pub b: Vec<f64>,
    pub gamma: f64,
    #[serde(default)]
    pub uncertainty: UncertaintyJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceJson {
    pub n_vars: usize,
    #[serde(rename = "Q")]
    pub q_mat: Rows,
    pub c: Vec<f64>,
    pub q: f64,
    pub constraints: Vec<ConstraintJson>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_indefinite_constraints: bool,
}

impl InstanceJson {
    pub fn from_instance(inst: &QcqpInstance) -> Self {
        let constraints = inst
            .constraints()
            .iter()
            .map(|con| ConstraintJson {
                a: mat_to_rows(&con.a),
                b: con.b.iter().copied().collect(),
                gamma: con.gamma,
                uncertainty: match &con.uncertainty {
                    UncertaintySet::None => UncertaintyJson::None,
                    UncertaintySet::FrobeniusBall { radius } => UncertaintyJson::FrobeniusBall { radius: *radius },
                    UncertaintySet::ThetaEllipsoid(set) => UncertaintyJson::ThetaEllipsoid {
                        center: ThetaJson::from_core(&set.center),
                        generators: set.generators.iter().map(ThetaJson::from_core).collect(),
                    },
                    UncertaintySet::PEllipsoid(set) => UncertaintyJson::PEllipsoid {
                        p0: mat_to_rows(&set.p0),
                        b0: set.b0.iter().copied().collect(),
                        gamma0: set.gamma0,
                        generators: set
                            .generators
                            .iter()
                            .map(|g| PGeneratorJson { p: mat_to_rows(&g.p), b: g.b.iter().copied().collect(), gamma: g.gamma })
                            .collect(),
                    },
                },
            })
            .collect();
        Self {
            n_vars: inst.n_vars(),
            q_mat: mat_to_rows(inst.objective_matrix()),
            c: inst.c().iter().copied().collect(),
            q: inst.q(),
            constraints,
            allow_indefinite_constraints: inst.allows_indefinite_constraints(),
        }
    }

    pub fn to_instance(&self) -> AppResult<QcqpInstance> {
        if self.c.len() != self.n_vars {
            return Err(AppError::Format(format!("n_vars = {} but c has {} entries", self.n_vars, self.c.len())));
        }
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for con in &self.constraints {
            let uncertainty = match &con.uncertainty {
                UncertaintyJson::None => UncertaintySet::None,
                UncertaintyJson::FrobeniusBall { radius } => UncertaintySet::FrobeniusBall { radius: *radius },
                UncertaintyJson::ThetaEllipsoid { center, generators } => UncertaintySet::ThetaEllipsoid(ThetaEllipsoid::new(
                    center.to_core()?,
                    generators.iter().map(ThetaJson::to_core).collect::<AppResult<_>>()?,
                )?),
                UncertaintyJson::PEllipsoid { p0, b0, gamma0, generators } => {
                    let gens = generators
                        .iter()
                        .map(|g| Ok(PGenerator::new(rows_to_mat(&g.p, "P")?, Vector::from_vec(g.b.clone()), g.gamma)))
                        .collect::<AppResult<_>>()?;
                    UncertaintySet::PEllipsoid(PEllipsoid::new(rows_to_mat(p0, "P0")?, Vector::from_vec(b0.clone()), *gamma0, gens)?)
                }
            };
            constraints.push(
                QuadConstraint::new(rows_to_mat(&con.a, "A")?, Vector::from_vec(con.b.clone()), con.gamma).with_uncertainty(uncertainty),
            );
        }
        Ok(QcqpInstance::with_options(
            rows_to_mat(&self.q_mat, "Q")?,
            Vector::from_vec(self.c.clone()),
            self.q,
            constraints,
            self.allow_indefinite_constraints,
        )?)
    }
}

pub fn read_instance(path: &Path) -> AppResult<QcqpInstance> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let parsed: InstanceJson = serde_json::from_str(&text).map_err(|e| AppError::Format(format!("{}: {e}", path.display())))?;
    parsed.to_instance()
}

pub fn write_instance(path: &Path, inst: &QcqpInstance) -> AppResult<()> {
    write_json(path, &InstanceJson::from_instance(inst))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| AppError::Format(e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| AppError::io(path, e))
}

/// Loads a JSON config; a missing path yields the defaults.
pub fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> AppResult<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetSolutionJson {
    pub status: String,
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub objective: f64,
    pub stationarity_residual: f64,
    pub comp_slack_residual: f64,
    pub max_constraint: f64,
    pub active: Vec<bool>,
    pub newton_steps: usize,
}

impl From<&KktSolution> for DetSolutionJson {
    fn from(s: &KktSolution) -> Self {
        Self {
            status: format!("{:?}", s.status),
            x: s.x_star.iter().copied().collect(),
            mu: s.mu.iter().copied().collect(),
            objective: s.objective,
            stationarity_residual: s.stationarity_residual,
            comp_slack_residual: s.comp_slack_residual,
            max_constraint: s.max_constraint,
            active: s.active_flags.clone(),
            newton_steps: s.newton_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSolveJson {
    pub x: Vec<f64>,
    pub objective: f64,
    pub cuts_added: usize,
    pub max_residual_violation: f64,
    pub iterations: usize,
    pub objective_history: Vec<f64>,
    pub degenerate: bool,
}

impl From<&RobustSolveReport> for RobustSolveJson {
    fn from(r: &RobustSolveReport) -> Self {
        Self {
            x: r.x_robust.iter().copied().collect(),
            objective: r.objective,
            cuts_added: r.cuts_added,
            max_residual_violation: r.max_residual_violation,
            iterations: r.iterations,
            objective_history: r.objective_history.clone(),
            degenerate: r.degenerate,
        }
    }
}

#[derive(Debug, Serialize)]
struct StepRow {
    step: usize,
    loss: f64,
    objective: f64,
    /// Empty when not evaluated at this step.
    feasible: Option<u8>,
    penalty_sum: f64,
}

/// `step, loss, objective, feasible, penalty_sum`.
pub fn write_step_records<W: Write>(w: W, records: &[StepRecord]) -> AppResult<()> {
    let mut out = csv::Writer::from_writer(w);
    if records.is_empty() {
        out.write_record(["step", "loss", "objective", "feasible", "penalty_sum"])?;
    }
    for r in records {
        out.serialize(StepRow {
            step: r.step,
            loss: r.loss,
            objective: r.objective,
            feasible: r.robust_feasible.map(u8::from),
            penalty_sum: r.penalty_sum,
        })?;
    }
    out.flush().map_err(|e| AppError::Format(e.to_string()))
}

/// `size, rc_opt, sur_opt, rel_gap`.
pub fn write_gap_table<W: Write>(w: W, rows: &[GapRow]) -> AppResult<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(["size", "rc_opt", "sur_opt", "rel_gap"])?;
    }
    for row in rows {
        out.serialize(row)?;
    }
    out.flush().map_err(|e| AppError::Format(e.to_string()))
}

pub fn read_gap_table<R: Read>(r: R) -> AppResult<Vec<GapRow>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(AppError::from)).collect()
}

pub fn create_file(dir: &Path, name: &str) -> AppResult<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| AppError::io(&path, e))
}

/// Everything needed to rerun an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> AppResult<Self> {
        Ok(Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config: serde_json::to_value(config).map_err(|e| AppError::Format(e.to_string()))?,
            warnings: Vec::new(),
            notes: vec!["batch gradients are summed over samples, not averaged; the learning rate absorbs the scale".into()],
            outputs: Vec::new(),
        })
    }
}

const CHECKPOINT_FORMAT: &str = "robsur-checkpoint-v1";

/// Parameter checkpoint: a JSON manifest next to a little-endian `f64` blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    /// `surrogate_pack` or `predictor`.
    pub kind: String,
    /// Layer widths of a predictor; empty for a pack.
    pub widths: Vec<usize>,
    pub len: usize,
    /// File name of the blob, relative to the manifest.
    pub blob: String,
}

pub fn write_checkpoint(dir: &Path, stem: &str, kind: &str, widths: &[usize], values: &[f64]) -> AppResult<PathBuf> {
    let blob = format!("{stem}.bin");
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let blob_path = dir.join(&blob);
    fs::write(&blob_path, bytes).map_err(|e| AppError::io(&blob_path, e))?;
    let manifest = CheckpointManifest { format: CHECKPOINT_FORMAT.into(), kind: kind.into(), widths: widths.to_vec(), len: values.len(), blob };
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn read_checkpoint(manifest_path: &Path) -> AppResult<(CheckpointManifest, Vec<f64>)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| AppError::io(manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| AppError::Format(e.to_string()))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(AppError::Format(format!("unknown checkpoint format {:?}", manifest.format)));
    }
    let blob_path = manifest_path.parent().unwrap_or(Path::new(".")).join(&manifest.blob);
    let bytes = fs::read(&blob_path).map_err(|e| AppError::io(&blob_path, e))?;
    if bytes.len() != 8 * manifest.len {
        return Err(AppError::Format(format!("checkpoint blob has {} bytes, expected {}", bytes.len(), 8 * manifest.len)));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok((manifest, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_matrix_is_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(rows_to_mat(&rows, "A").is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let values = vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300, -7.25];
        let path = write_checkpoint(dir.path(), "ck", "surrogate_pack", &[], &values).unwrap();
        let (m, back) = read_checkpoint(&path).unwrap();
        assert_eq!(m.len, 5);
        assert!(values.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn step_csv_has_fixed_header() {
        let mut buf = Vec::new();
        write_step_records(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().trim(), "step,loss,objective,feasible,penalty_sum");
        buf.clear();
        let rec = StepRecord {
            step: 3,
            loss: 1.0,
            objective_term: 0.5,
            penalty_sum: 0.5,
            objective: -2.0,
            robust_feasible: Some(true),
            feasible_fraction: 1.0,
            nondifferentiable: false,
            repeated_eigenvalue: false,
            skipped: 0,
        };
        write_step_records(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "step,loss,objective,feasible,penalty_sum");
        assert_eq!(text.lines().nth(1).unwrap(), "3,1.0,-2.0,1,0.5");
    }

    #[test]
    fn gap_table_header_even_when_empty() {
        let mut buf = Vec::new();
        write_gap_table(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), "size,rc_opt,sur_opt,rel_gap");
    }
}
