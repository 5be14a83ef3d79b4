use std::io::Write;

use pursuit_core::ccm::{CcmCurve, ConvergenceScore};
use pursuit_core::harness::{perturbation_analysis, reward_stats};
use pursuit_core::trajectory_io::{atomic_write, read_trajectories};

use crate::common::{load_config, CliError};
use crate::AnalyzeArgs;

pub const CURVES_HEADER: &str = "condition,pair,channel,episode,library_size,rho_mean,rho_sd";
pub const STATS_HEADER: &str = "condition,n,mean_reward,sd,ci95_halfwidth,log_mean_reward";
pub const VERDICTS_HEADER: &str =
    "condition,pair,delta_rho,monotonicity,final_rho,convergent,degenerate";

struct CurveRow<'a> {
    pair: String,
    channel: &'static str,
    episode: String,
    curve: &'a CcmCurve,
}

pub fn run(args: &AnalyzeArgs) -> Result<(), CliError> {
    let config = load_config(args.config.as_deref())?;
    let trajectories = read_trajectories(&args.input)?;
    let label = args.label.clone().unwrap_or_else(|| {
        args.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trajectories".into())
    });

    let stats = reward_stats(&trajectories)?;
    let steps = trajectories[0].n_steps();
    let settings = config.ccm_settings(steps);
    // a usable analysis needs a manifold plus at least dim + 2 points so a
    // (dim + 1)-neighbor library exists once the query is excluded
    let spec = &settings.spec;
    let min_len = (spec.dim - 1) * spec.tau + spec.dim + 2;
    if steps < min_len {
        return Err(CliError::Data(
            pursuit_core::ccm::CcmError::SeriesTooShort {
                len: steps,
                min: min_len,
            }
            .to_string(),
        ));
    }
    let analysis =
        perturbation_analysis(&trajectories, args.source_agent, &settings, config.run.seed)?;

    // gather everything before writing so failures leave no files behind
    let mut curve_rows: Vec<CurveRow> = Vec::new();
    let mut verdicts: Vec<(String, ConvergenceScore)> = Vec::new();
    for p in analysis.forward.iter().chain(analysis.reverse.iter()) {
        let pair = format!("{}->{}", p.source, p.reader);
        for (e, a) in p.per_episode.iter().enumerate() {
            for (channel, curve) in [("x", &a.x), ("y", &a.y), ("mean", &a.mean)] {
                curve_rows.push(CurveRow {
                    pair: pair.clone(),
                    channel,
                    episode: e.to_string(),
                    curve,
                });
            }
        }
        curve_rows.push(CurveRow {
            pair: pair.clone(),
            channel: "mean",
            episode: "all".into(),
            curve: &p.aggregate,
        });
        verdicts.push((pair, p.score));
    }
    curve_rows.push(CurveRow {
        pair: "combined".into(),
        channel: "mean",
        episode: "all".into(),
        curve: &analysis.combined,
    });
    verdicts.push(("combined".into(), analysis.combined_score));

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out_dir.display())))?;

    let curves_path = args.out_dir.join("curves.csv");
    atomic_write(&curves_path, |w| {
        writeln!(w, "{CURVES_HEADER}")?;
        for row in &curve_rows {
            let c = row.curve;
            for i in 0..c.len() {
                writeln!(
                    w,
                    "{label},{},{},{},{},{},{}",
                    row.pair,
                    row.channel,
                    row.episode,
                    c.library_sizes[i],
                    c.rho_mean[i],
                    c.rho_sd[i]
                )?;
            }
        }
        Ok(())
    })?;

    let stats_path = args.out_dir.join("stats.csv");
    atomic_write(&stats_path, |w| {
        writeln!(w, "{STATS_HEADER}")?;
        let log_mean = if stats.mean_reward > 0.0 {
            stats.mean_reward.ln().to_string()
        } else {
            "NA".into()
        };
        writeln!(
            w,
            "{label},{},{},{},{},{log_mean}",
            stats.n, stats.mean_reward, stats.sd, stats.ci95_halfwidth
        )?;
        Ok(())
    })?;

    let verdicts_path = args.out_dir.join("verdicts.csv");
    atomic_write(&verdicts_path, |w| {
        writeln!(w, "{VERDICTS_HEADER}")?;
        for (pair, s) in &verdicts {
            writeln!(
                w,
                "{label},{pair},{},{},{},{},{}",
                s.delta_rho, s.monotonicity, s.final_rho, s.convergent, s.degenerate
            )?;
        }
        Ok(())
    })?;

    println!(
        "analyzed {} episodes x {steps} steps (source agent {})",
        trajectories.len(),
        args.source_agent
    );
    println!(
        "rewards: n {} mean {:.2} sd {:.2} ci95 {:.2}",
        stats.n, stats.mean_reward, stats.sd, stats.ci95_halfwidth
    );
    for (pair, s) in &verdicts {
        println!(
            "{pair}: convergent: {} (delta_rho {:.3}, monotonicity {:.2}, final_rho {:.3})",
            s.convergent, s.delta_rho, s.monotonicity, s.final_rho
        );
    }
    println!(
        "wrote curves.csv, stats.csv, verdicts.csv to {}",
        args.out_dir.display()
    );
    Ok(())
}
