use std::path::PathBuf;

use vispinn_core::operators::PrincipalPart;
use vispinn_core::oracle::{poisson_order_study, reference_for, solve_poisson_fd, OracleGrid, OrderStudy};

use crate::config::RunConfig;
use crate::error::CliError;

/// Grids used for the observed-order fit of the Poisson solvers.
pub const ORDER_GRIDS: [usize; 3] = [32, 64, 128];

/// Finite-difference solution for Poisson problems, the sweeping grid for
/// the eikonal problem, the sampled exact solution otherwise.
pub fn oracle_grid(cfg: &RunConfig) -> Result<(OracleGrid, Option<OrderStudy>), CliError> {
    let spec = cfg.operator()?;
    let n = cfg.oracle_n;
    if spec.principal == PrincipalPart::NegLaplacian && spec.zeroth_order == 0.0 {
        let grid = solve_poisson_fd(&spec.domain, spec.forcing, spec.boundary, n)?;
        let study = poisson_order_study(&spec, &ORDER_GRIDS)?;
        return Ok((grid, Some(study)));
    }
    Ok((reference_for(&spec, n)?.to_grid(spec.dim(), n)?, None))
}

/// Writes `oracle-<operator>.csv`.
pub fn cmd_oracle(cfg: &RunConfig) -> Result<(PathBuf, Option<OrderStudy>), CliError> {
    let spec = cfg.operator()?;
    let (grid, study) = oracle_grid(cfg)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let path = out.join(format!("oracle-{}.csv", spec.name));
    grid.write_csv(&path, "none")?;
    Ok((path, study))
}
