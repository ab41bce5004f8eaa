use clap::{Args, Parser, Subcommand};
use evtrack::config::Config;
use evtrack::io;
use evtrack::metrics::evaluate;
use evtrack::render::{projected_roi, render_template};
use evtrack::simulator::{simulate, SimConfig};
use evtrack::tracker;
use evtrack::types::{CameraIntrinsics, Pose};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "evtrack", version, about = "Event-camera 6-DoF object pose tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CameraArgs {
    /// Focal lengths and principal point: fx,fy,cx,cy
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [600.0, 600.0, 320.0, 240.0])]
    intrinsics: Vec<f64>,
    /// Sensor resolution: width,height
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [640u32, 480u32])]
    resolution: Vec<u32>,
}

impl CameraArgs {
    fn build(&self) -> Result<CameraIntrinsics, String> {
        CameraIntrinsics::new(
            self.intrinsics[0],
            self.intrinsics[1],
            self.intrinsics[2],
            self.intrinsics[3],
            self.resolution[0],
            self.resolution[1],
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event stream from a mesh and trajectory
    Simulate {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Output events CSV
        #[arg(long)]
        out: PathBuf,
        /// Output resampled ground-truth trajectory CSV
        #[arg(long)]
        gt_out: Option<PathBuf>,
        #[command(flatten)]
        camera: CameraArgs,
        /// Background noise rate (events/s over full sensor)
        #[arg(long, default_value_t = 0.0)]
        noise_rate: f64,
        /// Timestamp jitter standard deviation (s)
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Frame step for edge-toggle detection (s)
        #[arg(long, default_value_t = 0.0005)]
        sim_dt: f64,
    },
    /// Track an object through an event stream
    Track {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        /// Initial pose: x,y,z,qw,qx,qy,qz
        #[arg(long, value_delimiter = ',', num_args = 7, allow_hyphen_values = true)]
        initial_pose: Vec<f64>,
        /// Output trajectory CSV
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        camera: CameraArgs,
        /// Optional config file (key = value lines)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Stop after this many seconds of stream time
        #[arg(long)]
        duration: Option<f64>,
        /// Write per-cycle diagnostics CSV
        #[arg(long)]
        debug_out: Option<PathBuf>,
    },
    /// Compare a tracked trajectory against ground truth
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Maximum timestamp gap for association (s)
        #[arg(long, default_value_t = 0.005)]
        max_gap: f64,
        /// Write per-sample error series CSV
        #[arg(long)]
        series_out: Option<PathBuf>,
    },
    /// Compute sparse optical flow over an event stream and dump vectors
    Flow {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        camera: CameraArgs,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render an edge template of the mesh at a pose to a PGM image
    Render {
        #[arg(long)]
        mesh: PathBuf,
        /// Pose: x,y,z,qw,qx,qy,qz
        #[arg(long, value_delimiter = ',', num_args = 7, allow_hyphen_values = true)]
        pose: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        camera: CameraArgs,
    },
}

fn parse_pose(values: &[f64]) -> Result<Pose, String> {
    let q = Quaternion::new(values[3], values[4], values[5], values[6]);
    if (q.norm() - 1.0).abs() > 0.01 {
        return Err(format!("quaternion norm {} too far from 1", q.norm()));
    }
    Ok(Pose::new(
        Vector3::new(values[0], values[1], values[2]),
        UnitQuaternion::from_quaternion(q),
    ))
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, String> {
    match path {
        Some(p) => Config::from_file(p).map_err(|e| e.to_string()),
        None => Ok(Config::default()),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors by default; remap to 1 and keep 2 for
    // data problems
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Simulate {
            mesh,
            trajectory,
            out,
            gt_out,
            camera,
            noise_rate,
            jitter,
            seed,
            sim_dt,
        } => {
            let k = camera.build()?;
            let mesh = io::read_mesh(&mesh).map_err(|e| e.to_string())?;
            let traj = io::read_trajectory(&trajectory).map_err(|e| e.to_string())?;
            let cfg = SimConfig {
                dt: sim_dt,
                noise_rate,
                jitter_sigma: jitter,
                seed,
                ..Default::default()
            };
            let (events, gt) = simulate(&mesh, &traj, &k, &cfg).map_err(|e| e.to_string())?;
            io::write_events(&events, &out).map_err(|e| e.to_string())?;
            if let Some(p) = gt_out {
                io::write_trajectory(&gt, &p).map_err(|e| e.to_string())?;
            }
            println!("wrote {} events to {}", events.len(), out.display());
            Ok(())
        }
        Command::Track {
            events,
            mesh,
            initial_pose,
            out,
            camera,
            config,
            duration,
            debug_out,
        } => {
            let k = camera.build()?;
            let cfg = load_config(&config)?;
            cfg.validate().map_err(|e| e.to_string())?;
            let events = io::read_events(&events, evtrack::io::EventFormat::Csv, Some((k.width, k.height)))
                .map_err(|e| e.to_string())?;
            let mesh = io::read_mesh(&mesh).map_err(|e| e.to_string())?;
            let pose = parse_pose(&initial_pose)?;
            let output =
                tracker::run(&events, &mesh, &k, pose, &cfg, duration, debug_out.is_some());
            io::write_trajectory(&output.trajectory, &out).map_err(|e| e.to_string())?;
            if let Some(p) = debug_out {
                write_debug(&p, &output.debug)?;
            }
            println!(
                "tracked {} cycles ({} blind, {} gated flows), mean cycle {:.3} ms",
                output.trajectory.len(),
                output.blind_cycles,
                output.skipped_measurements,
                output.mean_cycle_ms
            );
            Ok(())
        }
        Command::Evaluate { estimate, ground_truth, max_gap, series_out } => {
            let est = io::read_trajectory(&estimate).map_err(|e| e.to_string())?;
            let gt = io::read_trajectory(&ground_truth).map_err(|e| e.to_string())?;
            let report = evaluate(&est, &gt, max_gap).map_err(|e| e.to_string())?;
            if let Some(p) = series_out {
                write_series(&p, &report.series)?;
            }
            println!("pairs: {}", report.pairs);
            println!("position rmse: {:.4} cm (std {:.4})", report.position_rmse_cm, report.position_std_cm);
            println!("rotation rmse: {:.4} deg (std {:.4})", report.rotation_rmse_deg, report.rotation_std_deg);
            Ok(())
        }
        Command::Flow { events, out, camera, config } => {
            let k = camera.build()?;
            let cfg = load_config(&config)?;
            let events = io::read_events(&events, evtrack::io::EventFormat::Csv, Some((k.width, k.height)))
                .map_err(|e| e.to_string())?;
            if events.is_empty() {
                return Err("empty event stream".into());
            }
            let mut grid = evtrack::flow::RoiGrid::new(&cfg);
            let mut rows = Vec::new();
            let t_last = events.last().unwrap().t;
            let cycles = (t_last / cfg.cycle_dt).ceil() as usize;
            let mut cursor = 0usize;
            for c in 0..cycles {
                let end = (c + 1) as f64 * cfg.cycle_dt;
                let start = cursor;
                while cursor < events.len() && events[cursor].t <= end {
                    cursor += 1;
                }
                rows.extend(grid.step(&events[start..cursor], end));
            }
            let mut text = String::from("t,u,v,fu,fv,support\n");
            for f in &rows {
                text.push_str(&format!(
                    "{:.9},{:.3},{:.3},{:.6},{:.6},{}\n",
                    f.t, f.u, f.v, f.fu, f.fv, f.support
                ));
            }
            std::fs::write(&out, text).map_err(|e| e.to_string())?;
            println!("wrote {} flow vectors to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Render { mesh, pose, out, camera } => {
            let k = camera.build()?;
            let mesh = io::read_mesh(&mesh).map_err(|e| e.to_string())?;
            let pose = parse_pose(&pose)?;
            let cfg = Config::default();
            let roi = projected_roi(&mesh, &pose, &k, cfg.roi_dilation).map_err(|e| e.to_string())?;
            let template = render_template(&mesh, &pose, &k, roi, cfg.dog_sigma1, cfg.dog_sigma2)
                .map_err(|e| e.to_string())?;
            io::write_pgm(&template.values, template.rect.w, template.rect.h, -1.0, 1.0, &out)
                .map_err(|e| e.to_string())?;
            println!("wrote {}x{} template to {}", template.rect.w, template.rect.h, out.display());
            Ok(())
        }
    }
}

fn write_debug(path: &Path, debug: &[tracker::CycleDebug]) -> Result<(), String> {
    let mut text =
        String::from("t,vx,vy,vz,wx,wy,wz,flows,applied,skipped,selected,blind,cycle_ms\n");
    for d in debug {
        text.push_str(&format!(
            "{:.9},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{:.4}\n",
            d.t,
            d.twist.v.x,
            d.twist.v.y,
            d.twist.v.z,
            d.twist.omega.x,
            d.twist.omega.y,
            d.twist.omega.z,
            d.flows,
            d.applied_measurements,
            d.skipped_measurements,
            d.selected,
            d.blind as u8,
            d.cycle_ms
        ));
    }
    std::fs::write(path, text).map_err(|e| e.to_string())
}

fn write_series(path: &Path, series: &[(f64, f64, f64)]) -> Result<(), String> {
    let mut text = String::from("t,position_error_cm,rotation_error_deg\n");
    for (t, ep, er) in series {
        text.push_str(&format!("{t:.9},{ep:.6},{er:.6}\n"));
    }
    std::fs::write(path, text).map_err(|e| e.to_string())
}
