//! Downstream sweep over methods, budgets and seeds, written as CSV to stdout.

use mapselect::simeval::sweep::write_csv;
use mapselect::simeval::{budget_sweep, Budget, Method, SweepConfig};
use mapselect::utilities::UtilityKind;

fn main() -> mapselect::Result<()> {
    let mut config = SweepConfig {
        methods: vec![Method::Utility(UtilityKind::Odom), Method::Utility(UtilityKind::Combined), Method::Random],
        budgets: vec![Budget::Percent(10.0), Budget::Percent(20.0)],
        seeds: (0..3).collect(),
        ..SweepConfig::default()
    };
    config.select.utility.b_cover = 40;
    let rows = budget_sweep(&config)?;
    write_csv(std::io::stdout().lock(), &rows).expect("stdout");
    Ok(())
}
