//! The `swucc` command line.
//!
//! Exit codes: 0 success, 1 diagnostics with errors, 2 usage errors,
//! 101 simulator trap. A program that runs to completion exits with the
//! status returned by `main`.

use std::fs;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::diag::{finalize, Diagnostic};
use crate::linker::{link_modules, read_image, read_module, write_image, write_module, LinkedImage};
use crate::pipeline::{analyze, build, build_separately, compile, compile_side};
use crate::sema::{target_table, Side};
use crate::sim::{self, Mode, SimConfig, SimError, Status};
use crate::transform::mono::MonoOptions;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERRORS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TRAP: i32 = 101;

#[derive(Parser, Debug)]
#[command(name = "swucc", version, about = "SW-C compiler and MPE/CPE simulator")]
struct Cli {
    /// Colorize diagnostics; SWUCC_COLOR overrides.
    #[arg(long, value_enum, default_value_t = ColorChoice::Auto, global = true)]
    color: ColorChoice,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ColorChoice {
    Auto,
    Always,
    Never,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SideArg {
    Host,
    Slave,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Seq,
    Interleave,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Number of CPEs in the array.
    #[arg(long, default_value_t = 64)]
    cpes: u32,
    #[arg(long, value_enum, default_value_t = ModeArg::Seq)]
    mode: ModeArg,
    /// Scheduler seed for interleaved mode.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print one line per kernel launch to stderr.
    #[arg(long)]
    trace: bool,
    /// Arguments passed to `main`.
    #[arg(last = true)]
    argv: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every analysis and report diagnostics.
    Check {
        file: PathBuf,
        /// Print the resolved target of every function.
        #[arg(long)]
        emit_targets: bool,
    },
    /// Compile and link into an image, or compile one side into a module.
    Build {
        /// One source file; with --no-collab, optionally a second file
        /// compiled for the SLAVE side.
        #[arg(required = true, num_args = 1..=2)]
        files: Vec<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Compile each side separately, without sharing instantiations.
        #[arg(long)]
        no_collab: bool,
        /// Produce only this side's module.
        #[arg(long, value_enum)]
        side: Option<SideArg>,
        #[arg(long)]
        emit_targets: bool,
    },
    /// Write the HOST and SLAVE module listings.
    EmitSplit {
        file: PathBuf,
        /// Output directory (default: next to the input).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Link separately compiled modules into an image.
    Link {
        #[arg(required = true)]
        modules: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compile, link and execute a source file.
    Run {
        file: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Execute a linked image.
    Exec {
        image: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
    },
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    color: bool,
}

impl Io<'_> {
    fn diagnostics(&mut self, mut diags: Vec<Diagnostic>, file: &Path) {
        finalize(&mut diags, &file.display().to_string());
        for d in &diags {
            let _ = writeln!(self.err, "{}", d.render(self.color));
        }
    }

    fn usage(&mut self, msg: impl std::fmt::Display) -> i32 {
        let _ = writeln!(self.err, "error: {msg}");
        EXIT_USAGE
    }
}

fn use_color(choice: ColorChoice) -> bool {
    let choice = match std::env::var("SWUCC_COLOR").ok().as_deref() {
        Some("always") => ColorChoice::Always,
        Some("never") => ColorChoice::Never,
        Some("auto") => ColorChoice::Auto,
        _ => choice,
    };
    match choice {
        ColorChoice::Always => true,
        ColorChoice::Never => false,
        ColorChoice::Auto => std::io::stderr().is_terminal(),
    }
}

/// Entry point shared by the binary and the tests.
pub fn main_with(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = out.write_all(text.as_bytes());
                return EXIT_OK;
            }
            let _ = err.write_all(text.as_bytes());
            return EXIT_USAGE;
        }
    };
    let mut io = Io {
        out,
        err,
        color: use_color(cli.color),
    };
    drive(cli.command, &mut io)
}

fn read_text(io: &mut Io<'_>, path: &Path) -> Result<String, i32> {
    fs::read_to_string(path).map_err(|e| io.usage(format!("cannot read `{}`: {e}", path.display())))
}

fn read_bytes(io: &mut Io<'_>, path: &Path) -> Result<Vec<u8>, i32> {
    fs::read(path).map_err(|e| io.usage(format!("cannot read `{}`: {e}", path.display())))
}

fn write_file(io: &mut Io<'_>, path: &Path, data: &[u8]) -> Result<(), i32> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    parent
        .map_or(Ok(()), fs::create_dir_all)
        .and_then(|_| fs::write(path, data))
        .map_err(|e| {
        let _ = writeln!(io.err, "error: cannot write `{}`: {e}", path.display());
        EXIT_ERRORS
    })
}

fn with_extension(input: &Path, ext: &str) -> PathBuf {
    let stem = input.file_stem().unwrap_or_default().to_string_lossy();
    input.with_file_name(format!("{stem}.{ext}"))
}

fn drive(cmd: Command, io: &mut Io<'_>) -> i32 {
    match run_command(cmd, io) {
        Ok(code) | Err(code) => code,
    }
}

fn run_command(cmd: Command, io: &mut Io<'_>) -> Result<i32, i32> {
    match cmd {
        Command::Check { file, emit_targets } => {
            let src = read_text(io, &file)?;
            match analyze(&src, &MonoOptions::default()) {
                Ok(a) => {
                    io.diagnostics(a.diagnostics, &file);
                    if emit_targets {
                        let _ = io.out.write_all(target_table(&a.graph).as_bytes());
                    }
                    Ok(EXIT_OK)
                }
                Err(d) => {
                    io.diagnostics(d, &file);
                    Ok(EXIT_ERRORS)
                }
            }
        }
        Command::Build {
            files,
            output,
            no_collab,
            side,
            emit_targets,
        } => {
            if let Some(side) = side {
                if files.len() != 1 {
                    return Err(io.usage("--side takes exactly one source file"));
                }
                let side = match side {
                    SideArg::Host => Side::Host,
                    SideArg::Slave => Side::Slave,
                };
                let src = read_text(io, &files[0])?;
                return match compile_side(&src, side) {
                    Ok((m, warnings)) => {
                        io.diagnostics(warnings, &files[0]);
                        let ext = format!("{}.swcmod", side.name().to_lowercase());
                        let path = output.unwrap_or_else(|| with_extension(&files[0], &ext));
                        write_file(io, &path, &write_module(&m))?;
                        Ok(EXIT_OK)
                    }
                    Err(d) => {
                        io.diagnostics(d, &files[0]);
                        Ok(EXIT_ERRORS)
                    }
                };
            }
            if files.len() > 1 && !no_collab {
                return Err(io.usage("a second source file is only accepted with --no-collab"));
            }
            let host_src = read_text(io, &files[0])?;
            let result = if no_collab {
                let slave_src = match files.get(1) {
                    Some(p) => read_text(io, p)?,
                    None => host_src.clone(),
                };
                build_separately(&host_src, &slave_src)
            } else {
                if emit_targets {
                    if let Ok(a) = analyze(&host_src, &MonoOptions::default()) {
                        let _ = io.out.write_all(target_table(&a.graph).as_bytes());
                    }
                }
                build(&host_src)
            };
            match result {
                Ok((img, warnings)) => {
                    io.diagnostics(warnings, &files[0]);
                    let path = output.unwrap_or_else(|| with_extension(&files[0], "swcimg"));
                    write_file(io, &path, &write_image(&img))?;
                    Ok(EXIT_OK)
                }
                Err(d) => {
                    io.diagnostics(d, &files[0]);
                    Ok(EXIT_ERRORS)
                }
            }
        }
        Command::EmitSplit { file, output } => {
            let src = read_text(io, &file)?;
            match compile(&src) {
                Ok(c) => {
                    io.diagnostics(c.analysis.diagnostics.clone(), &file);
                    let stem = file.file_stem().unwrap_or_default().to_string_lossy().to_string();
                    let dir = output.unwrap_or_else(|| file.parent().map(Path::to_path_buf).unwrap_or_default());
                    for (m, side) in [(&c.host, "host"), (&c.slave, "slave")] {
                        let path = dir.join(format!("{stem}.{side}.ir.txt"));
                        write_file(io, &path, m.listing().as_bytes())?;
                    }
                    Ok(EXIT_OK)
                }
                Err(d) => {
                    io.diagnostics(d, &file);
                    Ok(EXIT_ERRORS)
                }
            }
        }
        Command::Link { modules, output } => {
            let mut mods = Vec::new();
            for p in &modules {
                let bytes = read_bytes(io, p)?;
                match read_module(&bytes) {
                    Ok(m) => mods.push(m),
                    Err(d) => {
                        io.diagnostics(vec![d], p);
                        return Ok(EXIT_ERRORS);
                    }
                }
            }
            match link_modules(&mods) {
                Ok(img) => {
                    write_file(io, &output, &write_image(&img))?;
                    Ok(EXIT_OK)
                }
                Err(d) => {
                    io.diagnostics(d, &output);
                    Ok(EXIT_ERRORS)
                }
            }
        }
        Command::Run { file, sim } => {
            let src = read_text(io, &file)?;
            match build(&src) {
                Ok((img, warnings)) => {
                    io.diagnostics(warnings, &file);
                    execute(io, &img, &sim, &file)
                }
                Err(d) => {
                    io.diagnostics(d, &file);
                    Ok(EXIT_ERRORS)
                }
            }
        }
        Command::Exec { image, sim } => {
            let bytes = read_bytes(io, &image)?;
            match read_image(&bytes) {
                Ok(img) => execute(io, &img, &sim, &image),
                Err(d) => {
                    io.diagnostics(vec![d], &image);
                    Ok(EXIT_ERRORS)
                }
            }
        }
    }
}

fn sim_config(a: &SimArgs) -> SimConfig {
    SimConfig {
        n_cpes: a.cpes,
        mode: match a.mode {
            ModeArg::Seq => Mode::Sequential,
            ModeArg::Interleave => Mode::Interleaved,
        },
        seed: a.seed,
        trace: a.trace,
        ..SimConfig::default()
    }
}

fn execute(io: &mut Io<'_>, img: &LinkedImage, a: &SimArgs, file: &Path) -> Result<i32, i32> {
    let r = match sim::run(img, &sim_config(a), &a.argv) {
        Ok(r) => r,
        Err(e @ (SimError::Args(_) | SimError::Config(_))) => return Err(io.usage(e)),
        Err(e) => {
            let _ = writeln!(io.err, "{}: error: {e}", file.display());
            return Err(EXIT_ERRORS);
        }
    };
    let _ = io.out.write_all(r.stdout.as_bytes());
    for line in &r.trace {
        let _ = writeln!(io.err, "{line}");
    }
    match r.status {
        Status::Exited(code) => Ok(code),
        Status::Trapped(trap) => {
            let _ = writeln!(io.err, "{}:{trap}", file.display());
            Ok(EXIT_TRAP)
        }
    }
}
