use crate::error::{Error, Result};

/// Generalised advantage estimation over one environment's trajectory.
///
/// `dones[t]` marks that the episode ended with transition `t`; the
/// recursion does not cross it and the next-state value is taken as zero.
/// `bootstrap_value` is `V` of the state following the last transition.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if values.len() != n { values.len() } else { dones.len() },
        });
    }
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_advantage = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_advantage = delta + gamma * lambda * live * next_advantage;
        advantages[t] = next_advantage;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}
