use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::ast::{Call, Expr, Script, Stmt, StmtKind};
use super::{DataHandle, Env, ErrorKind, LoopFrame, ScriptError, Value};
use crate::dataset::{AttrValue, DataSet, XScale, XUnits};
use crate::operators::{self, FocusParams, Normalization, SortKey};
use crate::retrievers::{self, trf, DatasetKind, LoadSelection, Run, RunDataset};

type Eval<T> = Result<T, ErrorKind>;

/// Runs `script` against `env`, writing `Echo` output to `out`.
///
/// Execution stops at the first failing statement. Variables assigned before
/// the failure stay in `env`; a loop variable is restored to its previous
/// binding (or removed) when the loop ends, normally or not.
pub fn execute(script: &Script, env: &mut Env, out: &mut dyn Write) -> Result<(), ScriptError> {
    run_block(&script.statements, env, out)
}

fn run_block(stmts: &[Stmt], env: &mut Env, out: &mut dyn Write) -> Result<(), ScriptError> {
    for s in stmts {
        run_stmt(s, env, out)?;
    }
    Ok(())
}

fn run_stmt(s: &Stmt, env: &mut Env, out: &mut dyn Write) -> Result<(), ScriptError> {
    let at = |kind| ScriptError::new(s.line, s.col, kind);
    match &s.kind {
        StmtKind::Assign { name, value } => {
            let v = eval(value, env, out).map_err(at)?.ok_or_else(|| {
                at(ErrorKind::Argument(format!(
                    "{} returns no value",
                    callee(value)
                )))
            })?;
            env.vars.insert(name.clone(), v);
        }
        StmtKind::Call(c) => {
            call(c, env, out).map_err(at)?;
        }
        StmtKind::For { var, iter, body } => {
            let items = match eval(iter, env, out).map_err(at)? {
                Some(Value::List(items)) => items,
                Some(v) => {
                    return Err(at(ErrorKind::Argument(format!(
                        "for loop needs a list, got a {}",
                        v.type_name()
                    ))))
                }
                None => {
                    return Err(at(ErrorKind::Argument(format!(
                        "{} returns no value",
                        callee(iter)
                    ))))
                }
            };
            let saved = env.vars.remove(var);
            let mut result = Ok(());
            for item in items {
                let shown = item.to_string();
                env.vars.insert(var.clone(), item);
                if let Err(mut e) = run_block(body, env, out) {
                    e.loops.insert(
                        0,
                        LoopFrame {
                            line: s.line,
                            var: var.clone(),
                            value: shown,
                        },
                    );
                    result = Err(e);
                    break;
                }
            }
            match saved {
                Some(v) => env.vars.insert(var.clone(), v),
                None => env.vars.remove(var),
            };
            result?;
        }
    }
    Ok(())
}

fn callee(e: &Expr) -> String {
    match e {
        Expr::Call(c) => c.name.clone(),
        _ => "expression".into(),
    }
}

fn eval(e: &Expr, env: &Env, out: &mut dyn Write) -> Eval<Option<Value>> {
    Ok(Some(match e {
        Expr::Number(x) => Value::Number(*x),
        Expr::Str(s) => Value::Str(s.clone()),
        Expr::Var(name) => env
            .get(name)
            .cloned()
            .ok_or_else(|| ErrorKind::Unbound(name.clone()))?,
        Expr::Call(c) => return call(c, env, out),
        Expr::Concat(parts) => {
            let mut s = String::new();
            for p in parts {
                match eval(p, env, out)? {
                    Some(v @ (Value::Str(_) | Value::Number(_))) => s.push_str(&v.to_string()),
                    Some(v) => {
                        return Err(ErrorKind::Argument(format!(
                            "'&' joins strings and numbers, got a {}",
                            v.type_name()
                        )))
                    }
                    None => {
                        return Err(ErrorKind::Argument(format!(
                            "{} returns no value",
                            callee(p)
                        )))
                    }
                }
            }
            Value::Str(s)
        }
    }))
}

/// Evaluated arguments of one call, with typed accessors that name the
/// command and position in their errors.
struct Args<'a> {
    cmd: &'a str,
    values: Vec<Value>,
}

impl<'a> Args<'a> {
    fn arity(&self, min: usize, max: usize) -> Eval<()> {
        let n = self.values.len();
        if n < min || n > max {
            let want = if min == max {
                format!("{min}")
            } else {
                format!("{min} to {max}")
            };
            return Err(ErrorKind::Argument(format!(
                "{} takes {want} argument(s), got {n}",
                self.cmd
            )));
        }
        Ok(())
    }

    fn wrong(&self, i: usize, want: &str) -> ErrorKind {
        ErrorKind::Argument(format!(
            "{} argument {} must be a {want}, got a {}",
            self.cmd,
            i + 1,
            self.values[i].type_name()
        ))
    }

    fn num(&self, i: usize) -> Eval<f64> {
        match &self.values[i] {
            Value::Number(x) => Ok(*x),
            _ => Err(self.wrong(i, "number")),
        }
    }

    fn str(&self, i: usize) -> Eval<&str> {
        match &self.values[i] {
            Value::Str(s) => Ok(s),
            _ => Err(self.wrong(i, "string")),
        }
    }

    fn dataset(&self, i: usize) -> Eval<&DataHandle> {
        match &self.values[i] {
            Value::DataSet(h) => Ok(h),
            _ => Err(self.wrong(i, "dataset")),
        }
    }

    fn opt(&self, i: usize) -> Option<&Value> {
        self.values.get(i)
    }
}

fn call(c: &Call, env: &Env, out: &mut dyn Write) -> Eval<Option<Value>> {
    let mut values = Vec::with_capacity(c.args.len());
    for a in &c.args {
        match eval(a, env, out)? {
            Some(v) => values.push(v),
            None => {
                return Err(ErrorKind::Argument(format!(
                    "{} returns no value",
                    callee(a)
                )))
            }
        }
    }
    let a = Args {
        cmd: &c.name,
        values,
    };
    let ds = |h: &DataHandle, d: DataSet| Ok(Some(Value::DataSet(h.derive(d))));

    match c.name.as_str() {
        "EmptyDataSet" => {
            a.arity(1, 1)?;
            let units = parse_units(a.str(0)?)?;
            Ok(Some(Value::DataSet(DataHandle::new(DataSet::empty(units)))))
        }
        "files" => {
            a.arity(1, 1)?;
            let paths = builtin_files(&env.base_dir, a.str(0)?)?;
            Ok(Some(Value::List(
                paths.into_iter().map(Value::Str).collect(),
            )))
        }
        "Load" => {
            a.arity(1, 1)?;
            let run = retrievers::load_run(&env.resolve(a.str(0)?), &LoadSelection::all())?;
            Ok(Some(Value::Run(Arc::new(run))))
        }
        "ExtractBank" => {
            a.arity(3, 3)?;
            let key = a.str(1)?;
            let value = match &a.values[2] {
                Value::Number(x) => AttrValue::F64(*x),
                Value::Str(s) => AttrValue::Str(s.clone()),
                _ => return Err(a.wrong(2, "number or string")),
            };
            match &a.values[0] {
                Value::Run(run) => {
                    let mut picked: Option<DataSet> = None;
                    for h in run.histograms() {
                        let part = operators::extract_group(h, key, &value)?;
                        picked = Some(match picked {
                            None => part,
                            Some(acc) => operators::merge(&acc, &part)?,
                        });
                    }
                    let data = picked.ok_or_else(|| {
                        ErrorKind::Argument(format!(
                            "run {} has no histogram dataset",
                            run.run_number
                        ))
                    })?;
                    Ok(Some(Value::DataSet(DataHandle {
                        data: Arc::new(data),
                        monitor: run.monitor().cloned().map(Arc::new),
                        instrument: Some(run.instrument.clone()),
                    })))
                }
                Value::DataSet(h) => ds(h, operators::extract_group(&h.data, key, &value)?),
                _ => Err(a.wrong(0, "run or dataset")),
            }
        }
        "Normalize" => {
            a.arity(2, 3)?;
            let h = a.dataset(0)?;
            let mode = a.str(1)?;
            let norm = match (mode, a.opt(2)) {
                ("monitor", None) => Normalization::Monitor(h.monitor.as_deref().ok_or_else(|| {
                    ErrorKind::Argument(
                        "dataset has no beam monitor; extract it from a loaded run first".into(),
                    )
                })?),
                ("time", Some(_)) => Normalization::Time(a.num(2)?),
                ("scalar", Some(_)) => Normalization::Scalar(a.num(2)?),
                _ => {
                    return Err(ErrorKind::Argument(format!(
                        "Normalize mode must be \"monitor\", \"time\" N or \"scalar\" N, got {mode:?} with {} argument(s)",
                        a.values.len()
                    )))
                }
            };
            ds(h, operators::normalize(&h.data, norm)?)
        }
        "SetLabel" => {
            a.arity(2, 2)?;
            let h = a.dataset(0)?;
            ds(h, operators::relabel(&h.data, a.str(1)?)?)
        }
        "Merge" => {
            a.arity(2, 2)?;
            let (x, y) = (a.dataset(0)?, a.dataset(1)?);
            let data = operators::merge(&x.data, &y.data)?;
            Ok(Some(Value::DataSet(DataHandle {
                data: Arc::new(data),
                monitor: None,
                instrument: x.instrument.clone().or_else(|| y.instrument.clone()),
            })))
        }
        "Focus" => {
            a.arity(4, 4)?;
            let h = a.dataset(0)?;
            let fp = FocusParams::new(a.num(1)?.to_radians(), a.num(2)?, a.num(3)?)?;
            ds(h, operators::time_focus(&h.data, &fp)?)
        }
        "ConvertUnits" => {
            a.arity(2, 2)?;
            let h = a.dataset(0)?;
            ds(
                h,
                operators::convert_units(&h.data, parse_units(a.str(1)?)?)?,
            )
        }
        "Group" => {
            a.arity(1, 2)?;
            let h = a.dataset(0)?;
            let key = match a.opt(1) {
                Some(_) => Some(a.str(1)?),
                None => None,
            };
            let mut grouping = HashMap::with_capacity(h.data.len());
            for s in h.data.spectra() {
                let g = match key {
                    None => s.group_id(),
                    Some(k) => s
                        .attr(k)
                        .and_then(AttrValue::as_i64)
                        .and_then(|v| u32::try_from(v).ok())
                        .ok_or_else(|| {
                            ErrorKind::Argument(format!(
                                "spectrum {} has no non-negative integer attribute {k:?}",
                                s.id()
                            ))
                        })?,
                };
                grouping.insert(s.id(), g);
            }
            ds(h, operators::group_spectra(&h.data, &grouping)?)
        }
        "Rebin" => {
            a.arity(4, 4)?;
            let h = a.dataset(0)?;
            let n = a.num(3)?;
            if !(n >= 1.0 && n.fract() == 0.0 && n <= u32::MAX as f64) {
                return Err(ErrorKind::Argument(format!(
                    "Rebin bin count must be a positive integer, got {n}"
                )));
            }
            let scale = XScale::uniform(a.num(1)?, a.num(2)?, n as u32)
                .map_err(|e| ErrorKind::Op(e.into()))?;
            let spectra = h
                .data
                .spectra()
                .par_iter()
                .map(|s| operators::rebin(s, &scale))
                .collect::<Result<Vec<_>, _>>()?;
            ds(
                h,
                h.data
                    .with_spectra(spectra)
                    .map_err(|e| ErrorKind::Op(e.into()))?,
            )
        }
        "Sort" => {
            a.arity(2, 3)?;
            let h = a.dataset(0)?;
            let ascending = match a.opt(2) {
                None => true,
                Some(_) => match a.str(2)? {
                    "asc" => true,
                    "desc" => false,
                    other => {
                        return Err(ErrorKind::Argument(format!(
                            "Sort order must be \"asc\" or \"desc\", got {other:?}"
                        )))
                    }
                },
            };
            ds(
                h,
                operators::sort_spectra(&h.data, &SortKey::parse(a.str(1)?), ascending)?,
            )
        }
        "Save" => {
            a.arity(3, 3)?;
            let path = env.resolve(a.str(1)?);
            let format = a.str(2)?;
            let run = match &a.values[0] {
                Value::Run(r) => (**r).clone(),
                Value::DataSet(h) => run_for(h),
                _ => return Err(a.wrong(0, "run or dataset")),
            };
            save(&run, &path, format)?;
            Ok(None)
        }
        "Echo" => {
            let line = a
                .values
                .iter()
                .map(Value::to_string)
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(out, "{line}").map_err(|e| ErrorKind::Output(e.to_string()))?;
            Ok(None)
        }
        other => Err(ErrorKind::UnknownCommand(other.to_string())),
    }
}

fn parse_units(s: &str) -> Eval<XUnits> {
    s.parse()
        .map_err(|e: crate::dataset::DataError| ErrorKind::Argument(e.to_string()))
}

/// Wraps a dataset into a single-dataset run, taking the run header from the
/// dataset's `run_number`/`start_time` attributes when present.
fn run_for(h: &DataHandle) -> Run {
    use crate::dataset::attr;
    let d = &h.data;
    Run {
        instrument: h.instrument.clone().unwrap_or_else(|| "tofbench".into()),
        run_number: d
            .attr(attr::RUN_NUMBER)
            .and_then(AttrValue::as_i64)
            .and_then(|v| u32::try_from(v).ok())
            .unwrap_or(0),
        start_time: d
            .attr(attr::START_TIME)
            .and_then(AttrValue::as_i64)
            .unwrap_or(0),
        datasets: vec![RunDataset {
            kind: DatasetKind::infer(d),
            data: (**d).clone(),
        }],
    }
}

fn save(run: &Run, path: &Path, format: &str) -> Eval<()> {
    match format {
        "trf" => trf::write_run(path, run)?,
        "json" => retrievers::write_hierarchical(run, path)?,
        "ascii" => match run.datasets.as_slice() {
            [one] => retrievers::write_ascii_columns(&one.data, path)?,
            _ => {
                return Err(ErrorKind::Argument(format!(
                    "ascii holds one dataset, this run has {}",
                    run.datasets.len()
                )))
            }
        },
        other => {
            return Err(ErrorKind::Argument(format!(
                "Save format must be \"trf\", \"ascii\" or \"json\", got {other:?}"
            )))
        }
    }
    Ok(())
}

/// Paths matching the glob `pattern` relative to `base_dir`, sorted
/// lexicographically. Returned paths are relative to `base_dir` when the
/// pattern is.
pub fn builtin_files(base_dir: &Path, pattern: &str) -> Result<Vec<String>, ErrorKind> {
    glob::Pattern::new(pattern).map_err(|e| ErrorKind::Pattern(format!("{pattern:?}: {e}")))?;
    let relative = !Path::new(pattern).is_absolute();
    let full = if relative && base_dir.as_os_str().is_empty() {
        pattern.to_string()
    } else if relative {
        let base = glob::Pattern::escape(&base_dir.to_string_lossy());
        format!("{}/{pattern}", base.trim_end_matches('/'))
    } else {
        pattern.to_string()
    };
    let mut out = Vec::new();
    for entry in glob::glob(&full).map_err(|e| ErrorKind::Pattern(format!("{pattern:?}: {e}")))? {
        let p = entry.map_err(|e| ErrorKind::File {
            message: e.to_string(),
            io: true,
        })?;
        let p = if relative && !base_dir.as_os_str().is_empty() {
            p.strip_prefix(base_dir).map(Path::to_path_buf).unwrap_or(p)
        } else {
            p
        };
        out.push(p.to_string_lossy().into_owned());
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scripting::parse;

    fn run(src: &str, env: &mut Env) -> Result<String, ScriptError> {
        let mut out = Vec::new();
        execute(&parse(src).unwrap(), env, &mut out)?;
        Ok(String::from_utf8(out).unwrap())
    }

    #[test]
    fn echo_writes_a_line() {
        assert_eq!(run("Echo(\"hi\")", &mut Env::new(".")).unwrap(), "hi\n");
        assert_eq!(
            run("Echo(\"n=\" & 2.5, 3)", &mut Env::new(".")).unwrap(),
            "n=2.5 3\n"
        );
    }

    #[test]
    fn loops_shadow_then_restore() {
        let mut env = Env::new(".");
        let dir = tempfile::tempdir().unwrap();
        for n in ["b", "a", "c"] {
            std::fs::write(dir.path().join(format!("{n}.txt")), "").unwrap();
        }
        env.base_dir = dir.path().to_path_buf();
        let out = run(
            "f = 7\nn = 0\nfor f in files(\"*.txt\")\n  Echo(f)\n  n = f\nendfor\nEcho(f, n)\n",
            &mut env,
        )
        .unwrap();
        assert_eq!(out, "a.txt\nb.txt\nc.txt\n7 c.txt\n");
        let out = run("for g in files(\"*.txt\")\nendfor\n", &mut env).unwrap();
        assert_eq!(out, "");
        assert!(env.get("g").is_none());
    }

    #[test]
    fn unbound_and_type_errors_are_attributed() {
        let e = run("x = 1\n\nEcho(y)\n", &mut Env::new(".")).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Unbound("y".into()));
        assert_eq!(e.line, 3);
        let e = run("x = Echo(1)\n", &mut Env::new(".")).unwrap_err();
        assert!(e.to_string().contains("returns no value"), "{e}");
        let e = run("x = Merge(1, 2)\n", &mut Env::new(".")).unwrap_err();
        assert!(
            e.to_string().contains("must be a dataset, got a number"),
            "{e}"
        );
        let e = run("x = SetLabel(EmptyDataSet(\"tof\"))\n", &mut Env::new(".")).unwrap_err();
        assert!(e.to_string().contains("takes 2 argument(s), got 1"), "{e}");
        let e = run("for x in 3\nendfor\n", &mut Env::new(".")).unwrap_err();
        assert!(e.to_string().contains("needs a list"), "{e}");
    }

    #[test]
    fn normalize_monitor_requires_a_run_source() {
        let e = run(
            "d = Normalize(EmptyDataSet(\"tof_us\"), \"monitor\")\n",
            &mut Env::new("."),
        )
        .unwrap_err();
        assert!(e.to_string().contains("no beam monitor"), "{e}");
    }

    #[test]
    fn files_sorted_empty_and_bad_pattern() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("runs")).unwrap();
        for n in ["r3", "r1", "r2"] {
            std::fs::write(dir.path().join("runs").join(format!("{n}.trf")), "").unwrap();
        }
        std::fs::write(dir.path().join("runs/notes.txt"), "").unwrap();
        assert_eq!(
            builtin_files(dir.path(), "runs/*.trf").unwrap(),
            vec!["runs/r1.trf", "runs/r2.trf", "runs/r3.trf"]
        );
        assert!(builtin_files(dir.path(), "none/*.trf").unwrap().is_empty());
        assert!(matches!(
            builtin_files(dir.path(), "["),
            Err(ErrorKind::Pattern(_))
        ));
        // An empty base means the working directory (tests run in the
        // crate root), not the filesystem root.
        assert_eq!(
            builtin_files(Path::new(""), "Cargo.tom?").unwrap(),
            vec!["Cargo.toml"]
        );
    }
}
