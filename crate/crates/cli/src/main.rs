use std::fs;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use twinflex_cli::ops::{self, OpError, OpResult, Source};
use twinflex_cli::server;
use twinflex_core::flexion::FlexPath;
use twinflex_core::io::{read_obj, write_obj, MeshDoc};

#[derive(Parser)]
#[command(name = "twinflex", version, about = "Build, flex and check twinned flexible polyhedra")]
struct Cli {
    /// Print results and errors as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List catalog models and their parameters.
    Models,
    /// Build a catalog model.
    Build {
        model: String,
        /// Parameter override, `name=value`. Repeatable.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        /// Named parameter set, applied before `--param`.
        #[arg(long)]
        preset: Option<String>,
        /// Output file; `.obj` writes Wavefront OBJ, anything else JSON.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Trace the flex of a mesh.
    Flex {
        mesh: PathBuf,
        /// Driver pair such as `AA'`, `A,C'`, `0,2` or `dihedral:A,B`.
        #[arg(long)]
        driver: Option<String>,
        /// `auto` or `lo:hi`.
        #[arg(long, default_value = "auto")]
        range: String,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Rigidity, intersection and volume report for a mesh or a traced path.
    Check {
        input: PathBuf,
        /// Check only this frame of a path.
        #[arg(long)]
        frame: Option<usize>,
        /// Relative rank tolerance of the rigidity matrix.
        #[arg(long)]
        rank_tol: Option<f64>,
        /// Absolute intersection tolerance.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Unfold into a printable SVG net.
    Net {
        input: PathBuf,
        #[arg(long)]
        frame: Option<usize>,
        /// Root face of the spanning tree.
        #[arg(long)]
        root: Option<usize>,
        /// JSON file with `[[parent, child], ...]` face pairs.
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Millimetres per model unit.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Scan a parameter box for intersection-free flexes.
    Search {
        template: String,
        /// `name=lo:hi`. Repeatable; omitted means a small box around the defaults.
        #[arg(long = "box", value_name = "NAME=LO:HI")]
        ranges: Vec<String>,
        #[arg(long, default_value_t = 64)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Frames traced per sample.
        #[arg(long, default_value_t = 60)]
        frames: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Writes the best sample to `PREFIX.mesh.json` and `PREFIX.path.json`.
        #[arg(long, value_name = "PREFIX")]
        best: Option<PathBuf>,
    },
    /// Run the HTTP service on loopback.
    Serve {
        /// Defaults to $TWINFLEX_PORT, then 7878.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
    },
}

fn read_text(path: &Path) -> OpResult<String> {
    fs::read_to_string(path).map_err(|e| OpError::validation("io", format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> OpResult<()> {
    fs::write(path, text).map_err(|e| OpError::validation("io", format!("{}: {e}", path.display())))
}

fn is_obj(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj"))
}

fn load_mesh(path: &Path) -> OpResult<MeshDoc> {
    let text = read_text(path)?;
    if is_obj(path) {
        return Ok(MeshDoc::from_mesh(&read_obj(&text)?));
    }
    Ok(MeshDoc::from_json(&text)?)
}

/// A mesh document or a traced path, told apart by the `frames` key.
fn load_source(path: &Path, frame: Option<usize>) -> OpResult<Source> {
    if is_obj(path) {
        return Ok(Source {
            mesh: Some(load_mesh(path)?),
            frame,
            ..Default::default()
        });
    }
    let value: serde_json::Value = serde_json::from_str(&read_text(path)?)?;
    let mut src = Source {
        frame,
        ..Default::default()
    };
    if value.get("frames").is_some() {
        src.path = Some(serde_json::from_value::<FlexPath>(value)?);
    } else {
        if frame.is_some() {
            return Err(OpError::validation("invalid_param", "--frame needs a path file"));
        }
        src.mesh = Some(serde_json::from_value(value)?);
    }
    Ok(src)
}

/// Writes `payload` to `output`, or prints it.
fn emit(output: &Option<PathBuf>, payload: &str) -> OpResult<()> {
    match output {
        Some(p) => write_text(p, payload),
        None => {
            println!("{payload}");
            Ok(())
        }
    }
}

fn note(cli_json: bool, msg: &str) {
    if !cli_json {
        eprintln!("{msg}");
    }
}

fn run(cli: Cli) -> OpResult<()> {
    let json = cli.json;
    match cli.cmd {
        Cmd::Models => {
            let models = ops::models();
            if json {
                return emit(&None, &ops::payload(&models)?);
            }
            for m in models {
                println!("{:<22} {:<9} {}", m.spec.name, format!("{:?}", m.spec.kind).to_lowercase(), m.spec.summary);
                for p in &m.spec.params {
                    println!("    {:<12} {:>10} in [{}, {}]  {}", p.name, p.default, p.min, p.max, p.doc);
                }
                for pr in &m.presets {
                    println!("    preset {}", pr.name);
                }
            }
            Ok(())
        }
        Cmd::Build {
            model,
            params,
            preset,
            output,
        } => {
            let req = ops::BuildRequest {
                model,
                params: params.iter().map(|s| ops::parse_param(s)).collect::<OpResult<_>>()?,
                preset,
            };
            let doc = ops::build(&req)?;
            let text = match &output {
                Some(p) if is_obj(p) => write_obj(&doc.to_mesh()?),
                _ => ops::payload(&doc)?,
            };
            emit(&output, &text)?;
            if let Some(p) = &output {
                let m = doc.to_mesh()?;
                note(
                    json,
                    &format!(
                        "wrote {}: {} (V={} E={} F={})",
                        p.display(),
                        req.model,
                        m.num_vertices(),
                        m.num_edges(),
                        m.faces().len()
                    ),
                );
            }
            Ok(())
        }
        Cmd::Flex {
            mesh,
            driver,
            range,
            frames,
            output,
        } => {
            let req = ops::FlexRequest {
                mesh: load_mesh(&mesh)?,
                driver,
                range,
                frames,
            };
            let path = ops::flex(&req)?;
            emit(&output, &ops::payload(&path)?)?;
            if output.is_some() {
                let (lo, hi) = path.range().unwrap_or((f64::NAN, f64::NAN));
                let mut msg = format!(
                    "{} frames over [{lo:.6}, {hi:.6}], max edge error {:.2e}",
                    path.frames.len(),
                    path.max_edge_error()
                );
                if let twinflex_core::flexion::PathStatus::Locked { at, reason } = &path.status {
                    msg.push_str(&format!("; locked near {at:.6}: {reason}"));
                }
                note(json, &msg);
            }
            Ok(())
        }
        Cmd::Check {
            input,
            frame,
            rank_tol,
            eps,
            output,
        } => {
            let req = ops::CheckRequest {
                source: load_source(&input, frame)?,
                rank_tol,
                eps,
            };
            let out = ops::check(&req)?;
            let text = ops::payload(&out)?;
            if output.is_some() || json {
                emit(&output, &text)?;
            }
            if !json {
                println!("{}", out.summary());
            }
            Ok(())
        }
        Cmd::Net {
            input,
            frame,
            root,
            tree,
            scale,
            output,
        } => {
            let tree = tree
                .map(|p| -> OpResult<Vec<(usize, usize)>> { Ok(serde_json::from_str(&read_text(&p)?)?) })
                .transpose()?;
            let req = ops::NetRequest {
                source: load_source(&input, frame)?,
                root,
                tree,
                mm_per_unit: scale,
            };
            let (net, svg) = ops::net(&req)?;
            emit(&output, &svg)?;
            note(
                json,
                &format!(
                    "{} faces, {} creases, {} cuts, {} overlapping pairs",
                    net.placed.len(),
                    net.creases.len(),
                    net.cuts.len(),
                    net.overlaps.len()
                ),
            );
            Ok(())
        }
        Cmd::Search {
            template,
            ranges,
            budget,
            seed,
            frames,
            output,
            best,
        } => {
            let req = ops::SearchRequest {
                model: template,
                ranges,
                budget,
                seed,
                frames,
            };
            let scan = ops::search(&req)?;
            let text = ops::payload(&scan)?;
            if output.is_some() || json {
                emit(&output, &text)?;
            }
            if let (Some(prefix), Some(b)) = (&best, &scan.best) {
                let stem = prefix.display();
                write_text(Path::new(&format!("{stem}.mesh.json")), &ops::payload(&b.mesh)?)?;
                write_text(Path::new(&format!("{stem}.path.json")), &ops::payload(&b.path)?)?;
            }
            if !json {
                let hits = scan.samples.iter().filter(|s| s.embedded_length() > 0.0).count();
                println!("{}: {hits}/{} samples with an embedded range", scan.model, scan.samples.len());
                for &i in scan.ranking.iter().take(5) {
                    let s = &scan.samples[i];
                    println!("  #{:<4} embedded length {:.6}", s.index, s.embedded_length());
                }
            }
            Ok(())
        }
        Cmd::Serve { port, host } => {
            let port = port.unwrap_or_else(|| server::port_from_env(server::DEFAULT_PORT));
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| OpError::validation("io", e.to_string()))?;
            rt.block_on(server::serve(SocketAddr::new(host, port)))
                .map_err(|e| OpError::validation("io", e.to_string()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                println!("{}", e.to_json());
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
