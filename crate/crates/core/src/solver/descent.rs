//! Projected gradient descent with Armijo backtracking.

/// Sufficient-decrease constant of the Armijo test.
pub const ARMIJO_C: f64 = 1e-4;
/// Step shrink factor during backtracking.
pub const BACKTRACK: f64 = 0.5;

const MIN_STEP: f64 = 1e-20;
const MAX_STEP: f64 = 1e20;
/// Consecutive iterations with negligible relative decrease before stopping.
const STALL_ITERS: usize = 5;
const STALL_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct DescentSettings {
    pub max_iters: usize,
    /// Stop when `‖P(x − ∇f) − x‖∞` falls below this.
    pub gradient_tolerance: f64,
    pub step_initial: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct DescentOutcome {
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes `eval` over the set onto which `project` maps.
///
/// `eval(x, grad)` returns `f(x)` and writes `∇f(x)` into `grad`. Trial
/// steps start from the Barzilai–Borwein estimate of the previous iterate
/// and are halved until the Armijo condition
/// `f(x⁺) <= f(x) + c ∇f(x)ᵀ(x⁺ − x)` holds, so the objective never
/// increases.
pub fn projected_descent<E, P>(
    x: &mut Vec<f64>,
    mut eval: E,
    project: P,
    settings: &DescentSettings,
) -> DescentOutcome
where
    E: FnMut(&[f64], &mut [f64]) -> f64,
    P: Fn(&mut [f64]),
{
    let n = x.len();
    project(x);
    let mut grad = vec![0.0; n];
    let mut value = eval(x, &mut grad);
    let mut step = settings.step_initial;
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut stalled = 0;
    let mut iterations = 0;

    while iterations < settings.max_iters {
        trial.copy_from_slice(x);
        for (t, g) in trial.iter_mut().zip(&grad) {
            *t -= g;
        }
        project(&mut trial);
        let stationarity = trial
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if stationarity <= settings.gradient_tolerance {
            break;
        }
        iterations += 1;

        let accepted = loop {
            for ((t, xi), g) in trial.iter_mut().zip(x.iter()).zip(&grad) {
                *t = xi - step * g;
            }
            project(&mut trial);
            let slope: f64 = trial
                .iter()
                .zip(x.iter())
                .zip(&grad)
                .map(|((t, xi), g)| g * (t - xi))
                .sum();
            if slope >= 0.0 {
                break None;
            }
            let trial_value = eval(&trial, &mut trial_grad);
            if trial_value <= value + ARMIJO_C * slope {
                break Some(trial_value);
            }
            step *= BACKTRACK;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some(new_value) = accepted else { break };

        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..n {
            let s = trial[i] - x[i];
            let y = trial_grad[i] - grad[i];
            ss += s * s;
            sy += s * y;
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(MIN_STEP, MAX_STEP)
        } else {
            (step * 4.0).min(MAX_STEP)
        };

        let decrease = value - new_value;
        if decrease <= STALL_RTOL * value.abs() {
            stalled += 1;
        } else {
            stalled = 0;
        }
        x.copy_from_slice(&trial);
        grad.copy_from_slice(&trial_grad);
        value = new_value;
        if stalled >= STALL_ITERS {
            break;
        }
    }
    DescentOutcome { value, iterations }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}
