use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::schema::TaskEntrypoint;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandLine {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandLine {
    pub fn new<I, S>(program: impl Into<String>, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            program: program.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

/// Space-joined, unquoted; for logs and error feedback only.
impl fmt::Display for CommandLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.program)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    pub python: String,
    pub launcher: String,
    pub gpu_count: u32,
    /// With no GPUs, run LM tasks under the plain interpreter instead of
    /// the distributed launcher.
    pub cpu_compat: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            python: "python".to_string(),
            launcher: "torchrun".to_string(),
            gpu_count: 0,
            cpu_compat: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("missing submission artifact: {0}")]
pub struct MissingSubmissionArtifact(pub String);

/// First `*.yaml` file under `workspace`, walking directories depth-first
/// with entries in byte order of their names.
pub fn first_yaml(workspace: &Path) -> Option<PathBuf> {
    WalkDir::new(workspace)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .find(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "yaml"))
        .map(|e| e.into_path())
}

fn launched(exec: &ExecConfig, gpu_count: u32, script: &str) -> CommandLine {
    if gpu_count == 0 && exec.cpu_compat {
        CommandLine::new(&exec.python, [script])
    } else {
        CommandLine::new(
            &exec.launcher,
            [
                format!("--nproc_per_node={gpu_count}"),
                "--standalone".to_string(),
                script.to_string(),
            ],
        )
    }
}

pub fn build_eval_command(
    entrypoint: TaskEntrypoint,
    eval_path: &str,
    workspace: &Path,
    gpu_count: u32,
    exec: &ExecConfig,
) -> Result<CommandLine, MissingSubmissionArtifact> {
    let py = |args: Vec<String>| CommandLine::new(&exec.python, args);
    match entrypoint {
        TaskEntrypoint::CsvSubmission => {
            let submission = workspace.join("submission.csv");
            if !submission.is_file() {
                return Err(MissingSubmissionArtifact("submission.csv".into()));
            }
            Ok(py(vec![
                eval_path.into(),
                "--submission_file".into(),
                submission.display().to_string(),
            ]))
        }
        TaskEntrypoint::ModelSubmission => {
            let config = first_yaml(workspace)
                .ok_or_else(|| MissingSubmissionArtifact("a *.yaml config".into()))?;
            Ok(py(vec![
                eval_path.into(),
                "--config_fname".into(),
                config.display().to_string(),
            ]))
        }
        TaskEntrypoint::LmSubmission => Ok(launched(exec, gpu_count, eval_path)),
        TaskEntrypoint::PythonSubmission => {
            if !workspace.join("target.py").is_file() {
                return Err(MissingSubmissionArtifact("target.py".into()));
            }
            Ok(py(vec![eval_path.into()]))
        }
    }
}

/// Baselines run without arguments; LM baselines go through the launcher.
pub fn build_baseline_command(
    entrypoint: TaskEntrypoint,
    baseline_path: &str,
    gpu_count: u32,
    exec: &ExecConfig,
) -> CommandLine {
    match entrypoint {
        TaskEntrypoint::LmSubmission => launched(exec, gpu_count, baseline_path),
        _ => CommandLine::new(&exec.python, [baseline_path]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn first_yaml_is_depth_first_by_name() {
        let dir = tempfile::tempdir().unwrap();
        for p in ["b.yaml", "a/z.yaml", "a.yml", "c/a.yaml"] {
            let p = dir.path().join(p);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, "x: 1").unwrap();
        }
        assert_eq!(first_yaml(dir.path()).unwrap(), dir.path().join("a/z.yaml"));
        assert_eq!(first_yaml(&dir.path().join("c")).unwrap(), dir.path().join("c/a.yaml"));
    }

    #[test]
    fn display_joins_with_spaces() {
        let c = CommandLine::new("python", ["evaluate.py", "--submission_file", "ws/submission.csv"]);
        assert_eq!(c.to_string(), "python evaluate.py --submission_file ws/submission.csv");
    }
}
