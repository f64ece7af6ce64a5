use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::families::{criterion, criterion_params, criterion_statistic, Family, FamilyParams, Task};
use crate::linalg::PSD_TOL;
use crate::qstate::{self, DensityCandidate, TRACE_TOL};

pub const DATASET_FORMAT: &str = "qresgan-dataset/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerance between stored matrices and the state rebuilt from `params`.
pub const PARAMS_MATCH_TOL: f64 = 1e-12;

/// Embedded in every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub format: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(format: &str, seed: u64, config_hash: String) -> Self {
        Provenance {
            format: format.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            seed,
            config_hash,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Compact JSON with keys sorted and floats in shortest round-trip form.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // Converting through `Value` orders object keys.
    Ok(serde_json::to_string(&serde_json::to_value(value)?)?)
}

/// Hash of the canonical JSON of a resolved command configuration.
pub fn config_hash<T: Serialize>(resolved: &T) -> Result<String> {
    Ok(sha256_hex(canonical_json(resolved)?.as_bytes()))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Per-state checks attached to generated records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub psd_violation: f64,
    pub trace_violation: f64,
    pub criterion: bool,
    pub statistic: String,
    pub statistic_value: f64,
    pub statistic_threshold: f64,
}

impl Diagnostics {
    pub fn of(family: Family, task: Task, state: &DensityCandidate) -> Result<Self> {
        let stat = criterion_statistic(family, task, state)?;
        Ok(Diagnostics {
            psd_violation: qstate::psd_violation(state)?,
            trace_violation: qstate::trace_violation(state),
            criterion: criterion(family, task, state)?,
            statistic: stat.name.to_string(),
            statistic_value: stat.value,
            statistic_threshold: stat.threshold,
        })
    }
}

/// One line of a dataset or generated-state file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub family: Family,
    pub task: Task,
    /// Family coordinates; absent for generated states.
    pub params: Option<FamilyParams>,
    pub rho_re: [[f64; 4]; 4],
    pub rho_im: [[f64; 4]; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    pub meta: Provenance,
}

impl StateRecord {
    pub fn new(
        family: Family,
        task: Task,
        params: Option<FamilyParams>,
        state: &DensityCandidate,
        diagnostics: Option<Diagnostics>,
        meta: Provenance,
    ) -> Self {
        let flat = state.flatten();
        let grid = |off: usize| std::array::from_fn(|r| std::array::from_fn(|c| flat[off + 4 * r + c]));
        StateRecord {
            family,
            task,
            params,
            rho_re: grid(0),
            rho_im: grid(16),
            diagnostics,
            meta,
        }
    }

    pub fn state(&self) -> Result<DensityCandidate> {
        let re: Vec<f64> = self.rho_re.iter().flatten().copied().collect();
        let im: Vec<f64> = self.rho_im.iter().flatten().copied().collect();
        DensityCandidate::from_parts(&re, &im)
    }

    /// Validity and criterion checks required of training data.
    fn check(&self, line: usize) -> Result<DensityCandidate> {
        let fail = |what: String| Error::Data(format!("line {line}: {what}"));
        let state = self.state().map_err(|e| fail(e.to_string()))?;
        let psd = qstate::psd_violation(&state)?;
        if psd > PSD_TOL {
            return Err(fail(format!("not positive semidefinite (violation {psd:e})")));
        }
        let tv = qstate::trace_violation(&state);
        if tv > TRACE_TOL {
            return Err(fail(format!("trace off by {tv:e}")));
        }
        let useful = match &self.params {
            Some(p) => {
                if p.family() != self.family {
                    return Err(fail("params do not match family".into()));
                }
                let rebuilt = p.state()?;
                let diff = rebuilt.matrix().max_abs_diff(state.matrix());
                if diff > PARAMS_MATCH_TOL {
                    return Err(fail(format!("matrix differs from params by {diff:e}")));
                }
                criterion_params(p, self.task)?
            }
            None => criterion(self.family, self.task, &state)?,
        };
        if !useful {
            return Err(fail(format!("state fails the {} criterion", self.task)));
        }
        Ok(state)
    }
}

/// Canonical JSON-lines text of `records`.
pub fn records_to_jsonl(records: &[StateRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&canonical_json(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Loaded records and their states.
pub struct LoadedStates {
    pub records: Vec<StateRecord>,
    pub states: Vec<DensityCandidate>,
}

impl LoadedStates {
    /// Shared `(family, task)`; an error when mixed.
    pub fn family_task(&self) -> Result<(Family, Task)> {
        let first = self
            .records
            .first()
            .ok_or_else(|| Error::Data("no records".into()))?;
        if self.records.iter().any(|r| r.family != first.family || r.task != first.task) {
            return Err(Error::Data("records mix families or tasks".into()));
        }
        Ok((first.family, first.task))
    }
}

/// Reads a JSON-lines state file. `strict` applies the training-data checks
/// to every record.
pub fn load_states(path: &Path, strict: bool) -> Result<LoadedStates> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut states = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StateRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        if rec.meta.format != DATASET_FORMAT {
            return Err(Error::Data(format!(
                "{}: line {}: unsupported format {:?}",
                path.display(),
                i + 1,
                rec.meta.format
            )));
        }
        let state = if strict {
            rec.check(i + 1)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        } else {
            rec.state()
                .map_err(|e| Error::Data(format!("{}: line {}: {e}", path.display(), i + 1)))?
        };
        records.push(rec);
        states.push(state);
    }
    Ok(LoadedStates { records, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::sample_dataset;

    #[test]
    fn canonical_json_sorts_keys() {
        let v = serde_json::json!({"b": 1.0, "a": [0.1, 1e-17], "c": {"z": 1, "y": 2}});
        assert_eq!(canonical_json(&v).unwrap(), r#"{"a":[0.1,1e-17],"b":1.0,"c":{"y":2,"z":1}}"#);
    }

    #[test]
    fn records_roundtrip_bytes() {
        let ds = sample_dataset(Family::WernerLike, Task::Teleportation, 20, 3).unwrap();
        let meta = Provenance::new(DATASET_FORMAT, 3, "h".into());
        let recs: Vec<_> = ds
            .samples
            .iter()
            .map(|s| StateRecord::new(Family::WernerLike, Task::Teleportation, Some(s.params), &s.state, None, meta.clone()))
            .collect();
        let text = records_to_jsonl(&recs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_file(&path, &text).unwrap();
        let back = load_states(&path, true).unwrap();
        assert_eq!(records_to_jsonl(&back.records).unwrap(), text);
        for (a, b) in back.states.iter().zip(&ds.samples) {
            assert_eq!(a, &b.state);
        }
    }

    #[test]
    fn strict_load_rejects_useless_state() {
        let meta = Provenance::new(DATASET_FORMAT, 0, "h".into());
        let rec = StateRecord::new(
            Family::BellDiagonal,
            Task::Teleportation,
            None,
            &DensityCandidate::maximally_mixed(),
            None,
            meta,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_file(&path, &records_to_jsonl(&[rec]).unwrap()).unwrap();
        assert!(matches!(load_states(&path, true), Err(Error::Data(_))));
        assert_eq!(load_states(&path, false).unwrap().states.len(), 1);
    }
}
