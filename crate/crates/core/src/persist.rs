//! Model container.
//!
//! Layout: `DVSMODEL`, `u16` major, `u16` minor, `u64` metadata length,
//! metadata JSON, then one little-endian `f64` block per stored basis
//! (node-major, `dofs × nodes` values). A human-readable manifest is
//! written next to the container.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discretization::MeshSpec;
use crate::error::{DvsError, Result};
use crate::fom::{TimeGrid, Trajectory};
use crate::model::{GreedyTrace, Method, ReducedModel, SeparatedTerm};
use crate::problem::ParametricProblem;
use crate::record::{ProjectionRecord, TimeDerivative, Zeta0Rep};

pub const MAGIC: &[u8; 8] = b"DVSMODEL";
pub const FORMAT_MAJOR: u16 = 1;
pub const FORMAT_MINOR: u16 = 0;

#[derive(Serialize, Deserialize)]
struct TermMeta {
    anchor: Vec<f64>,
    anchor_index: usize,
    record: ProjectionRecord,
    zeta0: Zeta0Rep,
    vs_step: Option<usize>,
    /// `(dofs, nodes)` of the stored block, absent for stripped terms.
    g_shape: Option<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    method: Method,
    problem: ParametricProblem,
    mesh: MeshSpec,
    grid: TimeGrid,
    form: TimeDerivative,
    terms: Vec<TermMeta>,
    trace: GreedyTrace,
    writer: String,
}

/// Header of a container, readable even when the body is not.
#[derive(Clone, Debug)]
pub struct Header {
    pub major: u16,
    pub minor: u16,
    pub metadata_len: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub writer: String,
    pub method: Method,
    pub problem: String,
    pub parameter_dim: usize,
    pub n_terms: usize,
    pub has_fields: bool,
    pub mesh_cells: Vec<usize>,
    pub grid: TimeGrid,
    pub form: TimeDerivative,
    pub affine_ids: AffineIds,
    pub terms: Vec<ManifestTerm>,
    pub stop: String,
    pub final_delta_max: Option<f64>,
    pub final_anchor_errors: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineIds {
    pub constant: Vec<String>,
    pub linear: Vec<String>,
    pub nonlinear: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestTerm {
    pub k: usize,
    pub anchor: Vec<f64>,
    /// Euclidean norm of the stored basis block.
    pub g_norm: Option<f64>,
    pub stored_scalars: usize,
    pub delta_max: Option<f64>,
    pub anchor_error: Option<f64>,
    pub vs_step: Option<usize>,
}

fn writer_tag() -> String {
    format!("pardyn {}", env!("CARGO_PKG_VERSION"))
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn manifest(model: &ReducedModel) -> Manifest {
    let p = &model.problem;
    Manifest {
        format: format!("DVSMODEL {FORMAT_MAJOR}.{FORMAT_MINOR}"),
        writer: writer_tag(),
        method: model.method,
        problem: p.name.clone(),
        parameter_dim: p.param_dim(),
        n_terms: model.n_terms(),
        has_fields: model.has_fields(),
        mesh_cells: model.mesh.cells.clone(),
        grid: model.grid,
        form: model.form,
        affine_ids: AffineIds {
            constant: p.affine.constant.iter().map(|t| t.coef.id.clone()).collect(),
            linear: p.affine.linear.iter().map(|t| t.coef.id.clone()).collect(),
            nonlinear: p.affine.nonlinear.iter().map(|t| t.coef.id.clone()).collect(),
        },
        terms: model
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let step = model.trace.steps.get(i);
                ManifestTerm {
                    k: i + 1,
                    anchor: t.anchor.clone(),
                    g_norm: t.g.as_ref().map(|g| g.data().iter().map(|v| v * v).sum::<f64>().sqrt()),
                    stored_scalars: t.record.scalar_count(),
                    delta_max: step.and_then(|s| s.delta_max),
                    anchor_error: step.map(|s| s.anchor_error),
                    vs_step: t.vs_step,
                }
            })
            .collect(),
        stop: model.trace.stop.clone(),
        final_delta_max: model.trace.final_delta_max,
        final_anchor_errors: model.trace.final_anchor_errors.clone(),
    }
}

/// Writes the container and its manifest. `strip` drops the spatial fields.
pub fn save_model(model: &ReducedModel, path: &Path, strip: bool) -> Result<()> {
    model.validate()?;
    let stored = if strip { model.stripped() } else { model.clone() };
    let meta = Metadata {
        method: stored.method,
        problem: stored.problem.clone(),
        mesh: stored.mesh.clone(),
        grid: stored.grid,
        form: stored.form,
        terms: stored
            .terms
            .iter()
            .map(|t| TermMeta {
                anchor: t.anchor.clone(),
                anchor_index: t.anchor_index,
                record: t.record.clone(),
                zeta0: t.zeta0.clone(),
                vs_step: t.vs_step,
                g_shape: t.g.as_ref().map(|g| (g.dofs(), g.nodes())),
            })
            .collect(),
        trace: stored.trace.clone(),
        writer: writer_tag(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| DvsError::Format(e.to_string()))?;
    let io = |e| DvsError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&FORMAT_MAJOR.to_le_bytes()).map_err(io)?;
    w.write_all(&FORMAT_MINOR.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for t in &stored.terms {
        if let Some(g) = &t.g {
            for v in g.data() {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;
    let mpath = manifest_path(path);
    let text = serde_json::to_string_pretty(&manifest(&stored)).map_err(|e| DvsError::Format(e.to_string()))?;
    std::fs::write(&mpath, text).map_err(|e| DvsError::io(&mpath, e))?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DvsError::Format(format!("{} is truncated", path.display()))
        } else {
            DvsError::io(path, e)
        }
    })
}

fn read_header_from(r: &mut impl Read, path: &Path) -> Result<Header> {
    let mut magic = [0u8; 8];
    read_exact(r, &mut magic, path)?;
    if &magic != MAGIC {
        return Err(DvsError::Format(format!("{} is not a model container", path.display())));
    }
    let mut b2 = [0u8; 2];
    read_exact(r, &mut b2, path)?;
    let major = u16::from_le_bytes(b2);
    read_exact(r, &mut b2, path)?;
    let minor = u16::from_le_bytes(b2);
    let mut b8 = [0u8; 8];
    read_exact(r, &mut b8, path)?;
    Ok(Header {
        major,
        minor,
        metadata_len: u64::from_le_bytes(b8),
    })
}

/// Reads only the fixed-size header.
pub fn read_header(path: &Path) -> Result<Header> {
    let mut r = BufReader::new(File::open(path).map_err(|e| DvsError::io(path, e))?);
    read_header_from(&mut r, path)
}

pub fn load_model(path: &Path) -> Result<ReducedModel> {
    let mut r = BufReader::new(File::open(path).map_err(|e| DvsError::io(path, e))?);
    let h = read_header_from(&mut r, path)?;
    if h.major > FORMAT_MAJOR {
        return Err(DvsError::Version {
            found_major: h.major,
            found_minor: h.minor,
            supported_major: FORMAT_MAJOR,
        });
    }
    let len = usize::try_from(h.metadata_len).map_err(|_| DvsError::Format("metadata length overflows".into()))?;
    let mut json = vec![0u8; len];
    read_exact(&mut r, &mut json, path)?;
    let meta: Metadata = serde_json::from_slice(&json).map_err(|e| DvsError::Format(format!("metadata: {e}")))?;
    let mut terms = Vec::with_capacity(meta.terms.len());
    for t in meta.terms {
        let g = match t.g_shape {
            Some((dofs, nodes)) => {
                let count = dofs
                    .checked_mul(nodes)
                    .ok_or_else(|| DvsError::Format("basis block size overflows".into()))?;
                let mut bytes = vec![0u8; count * 8];
                read_exact(&mut r, &mut bytes, path)?;
                let data = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Some(Trajectory::from_data(dofs, nodes, data)?)
            }
            None => None,
        };
        terms.push(SeparatedTerm {
            anchor: t.anchor,
            anchor_index: t.anchor_index,
            g,
            record: t.record,
            zeta0: t.zeta0,
            vs_step: t.vs_step,
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| DvsError::io(path, e))?;
    if !rest.is_empty() {
        return Err(DvsError::Format(format!("{} has {} trailing bytes", path.display(), rest.len())));
    }
    let model = ReducedModel {
        method: meta.method,
        problem: meta.problem,
        mesh: meta.mesh,
        grid: meta.grid,
        form: meta.form,
        terms,
        trace: meta.trace,
    };
    model.validate()?;
    Ok(model)
}
