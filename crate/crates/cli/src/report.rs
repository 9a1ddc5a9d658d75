//! `superdrift report`: merge the checks of several run directories into one
//! markdown table and export plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::commands::CheckRecord;
use crate::failure::Failure;
use crate::manifest::{load_verified, Run, RunManifest, MANIFEST};

/// Run directories under `root` (itself included), skipping earlier reports.
fn find_runs(root: &Path) -> Result<Vec<(String, PathBuf)>, Failure> {
    let mut dirs = vec![(".".to_string(), root.to_path_buf())];
    let entries = fs::read_dir(root).map_err(|e| Failure::Config(format!("cannot list {}: {e}", root.display())))?;
    let mut subs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    subs.sort();
    for s in subs {
        let id = s.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        dirs.push((id, s));
    }
    Ok(dirs.into_iter().filter(|(_, d)| d.join(MANIFEST).is_file()).collect())
}

fn read_value(dir: &Path, name: &str) -> Result<Value, Failure> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Core(superdrift::Error::Format(format!("{}: {e}", path.display()))))
}

fn lists(m: &RunManifest, name: &str) -> bool {
    m.artifacts.iter().any(|a| a.path == name)
}

/// Two whitespace-separated columns under a `#` header.
fn plot_data(x: &str, y: &str, rows: &[(f64, f64)]) -> String {
    let mut s = format!("# {x} {y}\n");
    for (a, b) in rows {
        let _ = writeln!(s, "{a} {b}");
    }
    s
}

fn pairs(v: &Value) -> Vec<(f64, f64)> {
    v.as_array()
        .map(|rows| {
            rows.iter()
                .filter_map(|r| Some((r.get(0)?.as_f64()?, r.get(1)?.as_f64()?)))
                .collect()
        })
        .unwrap_or_default()
}

pub fn report_command(root: &Path, mut out: Run) -> Result<(), Failure> {
    let runs: Vec<(String, PathBuf, RunManifest)> = find_runs(root)?
        .into_iter()
        .map(|(id, dir)| load_verified(&dir).map(|m| (id, dir, m)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|(_, _, m)| m.command != "report")
        .collect();
    if runs.is_empty() {
        return Err(Failure::Config(format!("no manifests under {}", root.display())));
    }

    let mut table = String::from("| run | command | check | measured | threshold | pass |\n|---|---|---|---|---|---|\n");
    let mut failed = 0usize;
    let mut total = 0usize;
    for (id, dir, m) in &runs {
        if !lists(m, "checks.json") {
            continue;
        }
        let checks: Vec<CheckRecord> = serde_json::from_value(read_value(dir, "checks.json")?)
            .map_err(|e| Failure::Core(superdrift::Error::Format(format!("{id}/checks.json: {e}"))))?;
        for c in checks {
            total += 1;
            failed += usize::from(!c.pass);
            let _ = writeln!(
                table,
                "| {id} | {} | {} | {:.6e} | {:.6e} | {} |",
                m.command,
                c.name,
                c.measured,
                c.threshold,
                if c.pass { "yes" } else { "no" }
            );
        }
    }
    let mut summary = format!("# Run summary\n\n{} runs, {total} checks, {failed} failed.\n\n", runs.len());
    summary.push_str(&table);

    let mut plots = Vec::new();
    for (id, dir, m) in &runs {
        let tag = if id == "." { "root".to_string() } else { id.clone() };
        if lists(m, "regularity.json") {
            let v = read_value(dir, "regularity.json")?;
            plots.push((format!("{tag}_blocks.dat"), plot_data("j", "log2_block_norm", &pairs(&v["blocks"]))));
        }
        if lists(m, "lambda.json") {
            let v = read_value(dir, "lambda.json")?;
            plots.push((format!("{tag}_lambda.dat"), plot_data("lambda", "gradient_bound", &pairs(&v["attempts"]))));
        }
        if lists(m, "cauchy.json") {
            let v = read_value(dir, "cauchy.json")?;
            let levels: Vec<f64> = v["levels"].as_array().into_iter().flatten().filter_map(Value::as_f64).collect();
            let gaps: Vec<f64> = v["consecutive"].as_array().into_iter().flatten().filter_map(Value::as_f64).collect();
            let rows: Vec<(f64, f64)> = levels.iter().zip(gaps).map(|(n, g)| (*n, g)).collect();
            plots.push((format!("{tag}_gaps.dat"), plot_data("n", "l2_gap", &rows)));
        }
    }
    out.write_text("summary.md", &summary, true)?;
    let plot_dir = out.dir.join("plots");
    fs::create_dir_all(&plot_dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", plot_dir.display())))?;
    for (name, text) in plots {
        out.write_text(&format!("plots/{name}"), &text, true)?;
    }
    out.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_format() {
        let s = plot_data("j", "y", &[(1.0, 2.5), (2.0, -0.5)]);
        assert_eq!(s, "# j y\n1 2.5\n2 -0.5\n");
    }

    #[test]
    fn empty_directory_has_no_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let out = Run::create(&dir.path().join("report"), "report", "").unwrap();
        let err = report_command(dir.path(), out).unwrap_err();
        assert!(err.to_string().contains("no manifests"), "{err}");
    }
}
