//! Closed-form references and numerical checks of the reflected solution.

mod checks;
mod oracle;

pub use checks::{
    check_distance_rate, check_holder, check_skorokhod, check_var_domination, estimate_exp_moments,
    gamma_martingale_check, skorokhod_on_paths, skorokhod_sum, solution_distance,
    stability_experiment, CheckReport,
};
pub use oracle::{circle_oracle, CircleOracle, Nu};
