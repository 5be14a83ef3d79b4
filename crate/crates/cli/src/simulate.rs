use pursuit_core::harness::{run_condition, ConditionName};
use pursuit_core::trajectory_io::write_trajectories;

use crate::common::{load_config, CliError};
use crate::SimulateArgs;

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    let config = load_config(args.config.as_deref())?;
    let mut condition = config.condition();
    if let Some(name) = &args.condition {
        condition.name = name.parse().map_err(CliError::Usage)?;
    }
    if let Some(p) = args.perturbed {
        condition.perturbed = p;
    }
    if let Some(e) = args.episodes {
        condition.n_episodes = e;
    }
    if let Some(s) = args.steps {
        condition.steps = s;
    }
    if let Some(s) = args.seed {
        condition.seed = s;
    }
    if condition.name == ConditionName::Scripted {
        return Err(CliError::Usage(
            "simulate needs --condition chaser or spring (scripted data is ingested by analyze)"
                .into(),
        ));
    }
    condition.validate().map_err(CliError::Usage)?;

    let trajectories = run_condition(&condition, &config.sim_params())?;
    write_trajectories(&args.out, &trajectories)?;

    println!(
        "condition {} perturbed {} seed {}",
        condition.name, condition.perturbed, condition.seed
    );
    println!("episode  predator_reward  prey_reward  contacts");
    let mut totals = Vec::with_capacity(trajectories.len());
    for (i, t) in trajectories.iter().enumerate() {
        let predator = t.total_reward(0);
        let prey = t.total_reward(t.prey_index());
        println!(
            "{i:>7}  {predator:>15.1}  {prey:>11.1}  {:>8}",
            t.contact_count
        );
        totals.push(predator);
    }
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    println!(
        "wrote {} episodes x {} steps to {} (mean predator reward {mean:.2})",
        condition.n_episodes,
        condition.steps,
        args.out.display()
    );
    Ok(())
}
