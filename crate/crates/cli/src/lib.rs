//! Library side of the `rrho` command-line tool: file loading, JSON reports,
//! validation suites and the timing sweep.

pub mod bench;
pub mod io;
pub mod report;
pub mod suites;

pub use io::{load_point_set, LoadError, Loaded};
pub use report::{BaselineAlgo, BaselineReport, DistReport};
pub use suites::{Outcome, Suite};

/// Builds the rayon pool, honoring `RRHO_THREADS` when set.
pub fn init_threads() -> anyhow::Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("RRHO_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("RRHO_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            anyhow::bail!("RRHO_THREADS must be a positive integer, got `{v}`");
        }
        builder = builder.num_threads(n);
    }
    builder.build_global()?;
    Ok(())
}
