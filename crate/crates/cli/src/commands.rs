use std::io::Write;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use tofbench::dataserver::{serve_files, serve_live, LiveConfig};
use tofbench::dataset::{estimate_dataset_size, kilobytes, XUnits, BYTES_PER_BIN};
use tofbench::operators::{convert_units, time_focus, FocusParams};
use tofbench::peaks::{
    analyze, apply_goniometer, choose_seeds, format_peaks, index_peaks, read_assignments,
    read_peaks, refine_ub, DetectorVolume, FindParams, Peak,
};
use tofbench::retrievers::{
    load_run, probe, read_runfile, write_ascii_columns, write_hierarchical, write_run,
    write_runfile, DatasetKind, LoadSelection, Run,
};
use tofbench::scripting::{execute, parse, Env, REFERENCE_SCRIPT};
use tofbench::synth::{
    generate_scd, live_pattern, write_powder_runs, LivePatternConfig, PowderConfig, ScdConfig,
};
use tofbench::views::{image_raster, IntensityScale, Viewport};

use crate::args::{
    Cli, Command, ConvertArgs, Format, GenCommand, LiveArgs, PeaksArgs, RasterArgs, Scale,
    ServeArgs, Target,
};
use crate::error::CliError;

type Result<T = (), E = CliError> = std::result::Result<T, E>;

pub fn run(cli: Cli) -> Result {
    match cli.command {
        Command::Info { file } => info(&file),
        Command::Convert(a) => convert(a),
        Command::Reduce { script, base_dir } => reduce(&script, base_dir),
        Command::Peaks(a) => peaks(a),
        Command::Serve(a) => serve(a),
        Command::Live(a) => live(a),
        Command::Raster(a) => raster(a),
        Command::Gen { what } => generate(what),
    }
}

fn stdout_err(e: std::io::Error) -> CliError {
    // The reader went away (`tofbench info … | head`); nothing left to do.
    if e.kind() == std::io::ErrorKind::BrokenPipe {
        std::process::exit(0);
    }
    CliError::io(format!("writing to stdout: {e}"))
}

fn info(file: &Path) -> Result {
    let dir = probe(file)?;
    let len = std::fs::metadata(file)
        .map_err(|e| CliError::io(format!("{}: {e}", file.display())))?
        .len();
    let mut out = std::io::stdout().lock();
    let mut w = || -> std::io::Result<()> {
        writeln!(out, "file:        {} ({len} bytes)", file.display())?;
        writeln!(out, "instrument:  {}", dir.instrument)?;
        writeln!(out, "run_number:  {}", dir.run_number)?;
        writeln!(out, "start_time:  {}", dir.start_time)?;
        writeln!(out, "datasets:    {}", dir.entries.len())?;
        writeln!(
            out,
            "{:>3}  {:<16} {:<12} {:>9} {:>7} {:>14} {:>14}",
            "#", "name", "kind", "spectra", "bins", "bytes", "estimate_KB"
        )?;
        for (i, e) in dir.entries.iter().enumerate() {
            let estimate =
                estimate_dataset_size(e.n_spectra as u64, e.n_bins as u64, BYTES_PER_BIN);
            writeln!(
                out,
                "{i:>3}  {:<16} {:<12} {:>9} {:>7} {:>14} {:>14}",
                e.name,
                e.kind.name(),
                e.n_spectra,
                e.n_bins,
                e.length,
                kilobytes(estimate)
            )?;
        }
        Ok(())
    };
    w().map_err(stdout_err)
}

fn format_for(path: &Path, explicit: Option<Format>) -> Format {
    explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some("txt" | "dat" | "asc") => Format::Ascii,
        Some("json") => Format::Json,
        _ => Format::Trf,
    })
}

fn save(run: &Run, path: &Path, format: Format) -> Result {
    match format {
        Format::Trf => write_run(path, run)?,
        Format::Json => write_hierarchical(run, path)?,
        Format::Ascii => {
            let hist: Vec<_> = run.histograms().collect();
            match hist.as_slice() {
                [one] => write_ascii_columns(one, path)?,
                _ => {
                    return Err(CliError::data(format!(
                    "ascii output holds one histogram dataset, this run has {}; use trf or json",
                    hist.len()
                )))
                }
            }
        }
    }
    Ok(())
}

fn convert(a: ConvertArgs) -> Result {
    let focus = match &a.focus {
        Some(v) if v.len() != 3 => {
            return Err(CliError::usage(format!(
                "--focus takes REF_THETA,REF_L1,REF_L2, got {} values",
                v.len()
            )))
        }
        Some(v) => Some(
            FocusParams::new(v[0].to_radians(), v[1], v[2])
                .map_err(|e| CliError::usage(format!("--focus: {e}")))?,
        ),
        None => None,
    };
    let target = match a.to {
        Target::D => XUnits::DspacingA,
        Target::Q => XUnits::QInvA,
        Target::Wavelength => XUnits::WavelengthA,
        Target::Tof => XUnits::TofUs,
    };
    let mut run = load_run(&a.file, &LoadSelection::all())?;
    for d in &mut run.datasets {
        // Monitors have no detector geometry to convert with.
        if d.kind == DatasetKind::Monitor {
            continue;
        }
        let mut ds = d.data.clone();
        if let Some(fp) = &focus {
            ds = time_focus(&ds, fp)?;
        }
        d.data = convert_units(&ds, target)?;
    }
    save(&run, &a.output, format_for(&a.output, a.format))
}

fn reduce(script: &Path, base_dir: Option<PathBuf>) -> Result {
    let text = std::fs::read_to_string(script)
        .map_err(|e| CliError::io(format!("{}: {e}", script.display())))?;
    let parsed = parse(&text).map_err(|e| CliError::data(format!("{}: {e}", script.display())))?;
    let base =
        base_dir.unwrap_or_else(|| script.parent().map(Path::to_path_buf).unwrap_or_default());
    let mut env = Env::new(&base);
    let mut out = std::io::stdout().lock();
    execute(&parsed, &mut env, &mut out).map_err(|e| {
        let code = CliError::from(e.clone()).code;
        CliError {
            code,
            message: format!("{}: {e}", script.display()),
        }
    })
}

fn load_volume(file: &Path, ds: u32) -> Result<DetectorVolume> {
    let data = read_runfile(file, &LoadSelection::datasets([ds]))?.remove(0);
    Ok(DetectorVolume::from_dataset(&data)?)
}

fn peaks(a: PeaksArgs) -> Result {
    let vol = load_volume(&a.file, a.ds)?;
    let mut list: Vec<Peak> = if a.find {
        let params = FindParams {
            k_sigma: a.k_sigma,
            ..FindParams::default()
        };
        let g = vol.goniometer();
        // The list is written in the sample frame, where q = 2π·UB·h.
        analyze(&vol, &params)?
            .into_iter()
            .map(|p| Peak {
                q: apply_goniometer(p.q, &g),
                ..p
            })
            .collect()
    } else if let Some(path) = &a.peaks {
        read_peaks(path)?
    } else {
        return Err(CliError::usage("give --find or --peaks PEAKS.txt"));
    };
    let mut summary = vec![format!("{} peaks", list.len())];
    if let Some(path) = &a.ub_from {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let assigned = read_assignments(&text)?;
        let (ub, residual) = refine_ub(&assigned)?;
        summary.push(format!(
            "UB from {} assignments, rms residual {residual:.3e} 1/A:",
            assigned.len()
        ));
        for r in ub.rows() {
            summary.push(format!("  {:>12.8} {:>12.8} {:>12.8}", r[0], r[1], r[2]));
        }
        if a.index {
            list = index_peaks(&ub, &list, a.tolerance).map_err(CliError::data)?;
            let n = list.iter().filter(|p| p.hkl.is_some()).count();
            summary.push(format!(
                "{n} of {} peaks indexed (tolerance {})",
                list.len(),
                a.tolerance
            ));
        }
    }
    let text = format_peaks(&list);
    match &a.output {
        Some(path) => {
            std::fs::write(path, &text)
                .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            let mut out = std::io::stdout().lock();
            summary
                .iter()
                .try_for_each(|l| writeln!(out, "{l}"))
                .map_err(stdout_err)
        }
        None => {
            summary.iter().for_each(|l| eprintln!("{l}"));
            std::io::stdout()
                .lock()
                .write_all(text.as_bytes())
                .map_err(stdout_err)
        }
    }
}

fn resolve(addr: &str) -> Result<SocketAddr> {
    addr.to_socket_addrs()
        .map_err(|e| CliError::network(format!("{addr}: {e}")))?
        .next()
        .ok_or_else(|| CliError::network(format!("{addr}: no address")))
}

fn announce(what: &str, addr: SocketAddr) -> Result {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{what} listening on {addr}")
        .and_then(|_| out.flush())
        .map_err(stdout_err)
}

fn serve(a: ServeArgs) -> Result {
    if !a.root.is_dir() {
        return Err(CliError::io(format!(
            "{}: not a directory",
            a.root.display()
        )));
    }
    let live = a.live.as_deref().map(resolve).transpose()?;
    let handle = serve_files(&a.root, (a.bind.as_str(), a.port))
        .map_err(|e| CliError::network(format!("data server on {}:{}: {e}", a.bind, a.port)))?;
    announce("data server", handle.local_addr())?;
    if !a.ui {
        handle.wait();
        return Ok(());
    }
    let mut state = tofbench_web::AppState::new(&a.root);
    state.live = live;
    let rt = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::io(format!("starting runtime: {e}")))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.bind.as_str(), a.http_port))
            .await
            .map_err(|e| {
                CliError::network(format!("view API on {}:{}: {e}", a.bind, a.http_port))
            })?;
        announce(
            "view API",
            listener.local_addr().map_err(CliError::network)?,
        )?;
        tofbench_web::serve(listener, state)
            .await
            .map_err(CliError::network)
    })
}

fn live(a: LiveArgs) -> Result {
    let pattern = match &a.pattern {
        Some(path) => {
            let run = load_run(path, &LoadSelection::all())?;
            let found = run.histograms().next().cloned();
            found.ok_or_else(|| {
                CliError::data(format!("{}: no histogram dataset", path.display()))
            })?
        }
        None => live_pattern(&LivePatternConfig::default(), a.seed).map_err(CliError::data)?,
    };
    let cfg = LiveConfig {
        rate_scale: a.rate,
        seed: a.seed,
        tick_interval: Some(Duration::from_millis(a.tick_ms.max(1))),
        dt_s: a.dt,
        ..LiveConfig::default()
    };
    let server = serve_live(pattern, cfg, (a.bind.as_str(), a.port))
        .map_err(|e| CliError::network(format!("live server on {}:{}: {e}", a.bind, a.port)))?;
    announce("live server", server.local_addr())?;
    server.wait();
    Ok(())
}

fn raster(a: RasterArgs) -> Result {
    let ds = read_runfile(&a.file, &LoadSelection::datasets([a.ds]))?.remove(0);
    let vp = Viewport {
        row_offset: a.row_offset,
        col_offset: a.col_offset,
        horizontal_compression: !a.no_compress,
        intensity_scale: match a.scale {
            Scale::Linear => IntensityScale::Linear,
            Scale::Log => IntensityScale::Log,
        },
        ..Viewport::new(a.width, a.height)
    };
    let rr = image_raster(&ds, &vp).map_err(|e| CliError::usage(e.to_string()))?;
    std::fs::write(&a.output, rr.to_pgm())
        .map_err(|e| CliError::io(format!("{}: {e}", a.output.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scd");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_text(path: &Path, text: &str) -> Result {
    std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn generate(what: GenCommand) -> Result {
    match what {
        GenCommand::Powder {
            runs,
            spectra,
            bins,
            seed,
            out,
        } => {
            let cfg = PowderConfig {
                n_spectra: spectra,
                n_bins: bins,
                ..PowderConfig::default()
            };
            let paths = write_powder_runs(&out.join("runs"), &cfg, runs, seed)?;
            write_text(&out.join("reduce.tbs"), REFERENCE_SCRIPT)?;
            println!(
                "wrote {} runs to {} and {}",
                paths.len(),
                out.join("runs").display(),
                out.join("reduce.tbs").display()
            );
        }
        GenCommand::Scd {
            reflections,
            noise,
            seed,
            out,
        } => {
            let cfg = ScdConfig {
                n_reflections: reflections,
                q_noise: noise,
                ..ScdConfig::default()
            };
            let s = generate_scd(&cfg, seed)?;
            write_runfile(&out, "SCD", 1, 0, &[s.volume.to_dataset("panel")?])?;
            let g = s.volume.goniometer();
            let candidates: Vec<([i32; 3], [f64; 3])> = s
                .reflections
                .iter()
                .map(|r| (r.hkl, apply_goniometer(r.q_lab, &g)))
                .collect();
            let mut assign =
                String::from("# seeded assignments: h k l qx qy qz (sample frame, 1/A)\n");
            for (h, q) in choose_seeds(&candidates, 5) {
                assign.push_str(&format!(
                    "{} {} {} {:?} {:?} {:?}\n",
                    h[0], h[1], h[2], q[0], q[1], q[2]
                ));
            }
            let mut truth = String::from("# true UB rows\n");
            for r in s.ub.rows() {
                truth.push_str(&format!("# {:?} {:?} {:?}\n", r[0], r[1], r[2]));
            }
            truth.push_str("# h k l row col channel amplitude\n");
            for r in &s.reflections {
                truth.push_str(&format!(
                    "{} {} {} {:?} {:?} {:?} {:?}\n",
                    r.hkl[0], r.hkl[1], r.hkl[2], r.row, r.col, r.channel, r.amplitude
                ));
            }
            let (assign_path, truth_path) =
                (sibling(&out, "assign.txt"), sibling(&out, "truth.txt"));
            write_text(&assign_path, &assign)?;
            write_text(&truth_path, &truth)?;
            println!(
                "wrote {}, {} and {}",
                out.display(),
                assign_path.display(),
                truth_path.display()
            );
        }
        GenCommand::Live {
            rows,
            cols,
            bins,
            peaks,
            seed,
            out,
        } => {
            let cfg = LivePatternConfig {
                n_rows: rows,
                n_cols: cols,
                n_bins: bins,
                n_peaks: peaks,
                ..LivePatternConfig::default()
            };
            let ds = live_pattern(&cfg, seed)?;
            write_runfile(&out, "live", 0, 0, &[ds])?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
