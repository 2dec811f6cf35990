#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout)
            .unwrap_or_else(|e| panic!("bad stdout ({e}): {}\n{}", self.stdout, self.stderr))
    }

    pub fn error(&self) -> Value {
        serde_json::from_str(self.stderr.trim()).unwrap_or_else(|e| panic!("bad stderr ({e}): {}", self.stderr))
    }
}

pub fn thinslip(args: &[&str], envs: &[(&str, &Path)]) -> Outcome {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_thinslip"));
    cmd.args(args).env_remove("THINSLIP_OUTPUT_ROOT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Outcome {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Runs `command` on `config` written to `dir/config.toml`, sending
/// artifacts to `dir/out_name`.
pub fn run_config(dir: &Path, config: &str, command: &str, out_name: &str, extra: &[&str]) -> (Outcome, PathBuf) {
    let cfg = dir.join(format!("{out_name}.toml"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(out_name);
    let mut args = vec!["-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap(), command];
    args.extend_from_slice(extra);
    (thinslip(&args, &[]), out)
}

pub fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

pub fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

/// Config on the unit square (or interval) with rotational forcing.
pub fn config(dim: usize, n: usize, nz: usize, s: f64, gamma: f64, eps_list: &[f64]) -> String {
    let cells = if dim == 2 {
        format!("[{n}, {n}]")
    } else {
        format!("[{n}]")
    };
    let eps: Vec<String> = eps_list.iter().map(|e| format!("{e:?}")).collect();
    format!(
        r#"eps_list = [{}]

[geometry]
dim = {dim}
n_cells = {cells}
n_z3 = {nz}

[physics]
nu = 1.0
s = {s:?}
gamma = {gamma:?}
k = 1.0
eps = {:?}

[forcing]
preset = "rotational"
coefficients = [1.0]
"#,
        eps.join(", "),
        eps_list.first().copied().unwrap_or(0.1),
    )
}
