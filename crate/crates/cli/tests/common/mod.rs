#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use psman_core::Mat;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_psman"))
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Writes `x` one row per line with shortest round-trip floats.
pub fn write_matrix(path: &Path, x: &Mat) -> PathBuf {
    let mut s = String::new();
    for i in 0..x.nrows() {
        let row: Vec<String> = x.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(s, "{}", row.join(",")).unwrap();
    }
    std::fs::write(path, s).unwrap();
    path.to_path_buf()
}

/// Writes `x` with a trailing label column.
pub fn write_labeled(path: &Path, x: &Mat, labels: &[String]) -> PathBuf {
    let mut s = String::new();
    for (i, label) in labels.iter().enumerate().take(x.nrows()) {
        let row: Vec<String> = x.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(s, "{},{label}", row.join(",")).unwrap();
    }
    std::fs::write(path, s).unwrap();
    path.to_path_buf()
}

pub fn write_lines(path: &Path, lines: &[String]) -> PathBuf {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
    path.to_path_buf()
}
